use bcnn_core::linalg::{
    hermitian_eigenvalues, kron, partial_trace, partial_transpose, random_hermitian, trace,
    ComplexMatrix,
};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn hermitian(dim: usize, seed: u64) -> ComplexMatrix {
    random_hermitian(dim, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Determinant by Gaussian elimination with partial pivoting.
fn det(a: &ComplexMatrix) -> Complex64 {
    let n = a.dim();
    let mut m: Vec<Vec<Complex64>> = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)]).collect())
        .collect();
    let mut d = Complex64::new(1.0, 0.0);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x][col].norm().total_cmp(&m[y][col].norm()))
            .unwrap();
        if m[pivot][col].norm() == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if pivot != col {
            m.swap(pivot, col);
            d = -d;
        }
        d *= m[col][col];
        let (top, rest) = m.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for row in rest {
            let f = row[col] / pivot_row[col];
            for (x, &v) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * v;
            }
        }
    }
    d
}

/// Smallest root of the characteristic polynomial by scanning for the first
/// sign change of `det(A - x I)` and bisecting.
fn lambda_min_charpoly(a: &ComplexMatrix) -> f64 {
    let n = a.dim();
    let f = |x: f64| det(&(a - &ComplexMatrix::identity(n).scale_real(x))).re;
    let bound = a.frobenius_norm() + 1.0;
    let sign0 = f(-bound).signum();
    let step = 1e-3;
    let mut lo = -bound;
    while f(lo + step).signum() == sign0 {
        lo += step;
        assert!(lo < bound, "no root found");
    }
    let mut hi = lo + step;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == sign0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kron_trace_factorizes(sa in any::<u64>(), sb in any::<u64>(), da in 1usize..4, db in 1usize..4) {
        let (a, b) = (hermitian(da, sa), hermitian(db, sb));
        let lhs = trace(&kron(&a, &b));
        let rhs = trace(&a) * trace(&b);
        prop_assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_of_product(sa in any::<u64>(), sb in any::<u64>(), da in 1usize..4, db in 1usize..4) {
        let (a, b) = (hermitian(da, sa), hermitian(db, sb));
        let ab = kron(&a, &b);
        let over_b = partial_trace(&ab, &[da, db], 1).unwrap();
        prop_assert!(over_b.max_abs_diff(&a.scale(trace(&b))) < 1e-12);
        let over_a = partial_trace(&ab, &[da, db], 0).unwrap();
        prop_assert!(over_a.max_abs_diff(&b.scale(trace(&a))) < 1e-12);
    }

    #[test]
    fn partial_trace_preserves_total_trace(seed in any::<u64>(), site in 0usize..3) {
        let a = hermitian(8, seed);
        let reduced = partial_trace(&a, &[2, 2, 2], site).unwrap();
        prop_assert_eq!(reduced.dim(), 4);
        prop_assert!((trace(&reduced) - trace(&a)).norm() < 1e-12);
    }

    #[test]
    fn eigenvalues_match_trace_and_determinant(seed in any::<u64>(), dim in 1usize..7) {
        let a = hermitian(dim, seed);
        let ev = hermitian_eigenvalues(&a).unwrap();
        prop_assert_eq!(ev.len(), dim);
        prop_assert!(ev.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!((ev.iter().sum::<f64>() - trace(&a).re).abs() < 1e-10);
        let sq: f64 = ev.iter().map(|l| l * l).sum();
        prop_assert!((sq - a.frobenius_norm().powi(2)).abs() < 1e-9);
        let scale = a.frobenius_norm().max(1.0);
        for &l in &ev {
            let shifted = &a - &ComplexMatrix::identity(dim).scale_real(l);
            prop_assert!(det(&shifted).norm() < 1e-9 * scale.powi(dim as i32));
        }
    }

    #[test]
    fn lambda_min_matches_characteristic_polynomial(seed in any::<u64>()) {
        let a = hermitian(4, seed);
        let ev = hermitian_eigenvalues(&a).unwrap();
        prop_assert!((ev[0] - lambda_min_charpoly(&a)).abs() < 1e-9);
    }

    #[test]
    fn partial_transpose_keeps_hermiticity_and_trace(seed in any::<u64>(), site in 0usize..2) {
        let a = hermitian(4, seed);
        let pt = partial_transpose(&a, &[2, 2], site).unwrap();
        prop_assert!(pt.is_hermitian(1e-12));
        prop_assert!((trace(&pt) - trace(&a)).norm() < 1e-12);
        let back = partial_transpose(&pt, &[2, 2], site).unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn partial_transposes_compose_to_full_transpose(seed in any::<u64>()) {
        let a = hermitian(4, seed);
        let both = partial_transpose(&partial_transpose(&a, &[2, 2], 0).unwrap(), &[2, 2], 1).unwrap();
        prop_assert_eq!(both, a.transpose());
    }
}
