//! Dense complex matrices and the handful of operations needed on 2-qubit
//! operators: Kronecker products, (partial) traces, partial transposes and a
//! Jacobi eigensolver for Hermitian matrices.
//!
//! Everything here is at most 16x16, so storage is a flat row-major `Vec`.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

/// Tolerance used when a matrix has to be accepted as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-9;

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Square complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

/// Single-qubit Pauli operators, in the column order used by exported
/// operator tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    X,
    Y,
    Z,
    I,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::X, Pauli::Y, Pauli::Z, Pauli::I];

    pub fn matrix(self) -> ComplexMatrix {
        let o = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        let data = match self {
            Pauli::X => vec![o, one, one, o],
            Pauli::Y => vec![o, -i, i, o],
            Pauli::Z => vec![one, o, o, -one],
            Pauli::I => vec![one, o, o, one],
        };
        ComplexMatrix { dim: 2, data }
    }
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "matrix dimension must be positive");
        ComplexMatrix {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { 1.0.into() } else { 0.0.into() })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.data[i * dim + j] = f(i, j);
            }
        }
        m
    }

    /// Builds a matrix from row-major entries; fails unless `entries.len()` is a perfect square.
    pub fn from_vec(entries: Vec<Complex64>) -> Result<Self> {
        let dim = (entries.len() as f64).sqrt().round() as usize;
        if dim == 0 || dim * dim != entries.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} entries do not form a square matrix",
                entries.len()
            )));
        }
        Ok(ComplexMatrix { dim, data: entries })
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        Self::from_fn(
            diag.len(),
            |i, j| if i == j { diag[i].into() } else { 0.0.into() },
        )
    }

    /// Outer product |v><v|.
    pub fn projector(v: &[Complex64]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j].conj())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: Complex64) -> Self {
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    /// max |a_ij - conj(a_ji)|
    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.dim;
        let mut dev = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim, "matmul dimension mismatch");
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim);
        ComplexMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim);
        ComplexMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})", self.dim, self.dim)?;
        for i in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|j| {
                    let z = self[(i, j)];
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (da, db) = (a.dim, b.dim);
    ComplexMatrix::from_fn(da * db, |r, c| a[(r / db, c / db)] * b[(r % db, c % db)])
}

pub fn trace(a: &ComplexMatrix) -> Complex64 {
    (0..a.dim).map(|i| a[(i, i)]).sum()
}

/// Splits `dims` around `site` into (outer, d_site, inner) and checks the total dimension.
fn site_layout(a: &ComplexMatrix, dims: &[usize], site: usize) -> Result<(usize, usize, usize)> {
    if site >= dims.len() {
        return Err(Error::DimensionMismatch(format!(
            "site {site} out of range for {} subsystems",
            dims.len()
        )));
    }
    if dims.contains(&0) {
        return Err(Error::DimensionMismatch(
            "subsystem dimensions must be positive".into(),
        ));
    }
    let total: usize = dims.iter().product();
    if total != a.dim {
        return Err(Error::DimensionMismatch(format!(
            "subsystem dims {dims:?} multiply to {total}, matrix is {}x{}",
            a.dim, a.dim
        )));
    }
    let outer = dims[..site].iter().product();
    let inner = dims[site + 1..].iter().product();
    Ok((outer, dims[site], inner))
}

/// Traces out subsystem `site` of a matrix on a tensor product space with
/// factor dimensions `dims`.
pub fn partial_trace(a: &ComplexMatrix, dims: &[usize], site: usize) -> Result<ComplexMatrix> {
    let (outer, d, inner) = site_layout(a, dims, site)?;
    let idx = |o: usize, k: usize, i: usize| (o * d + k) * inner + i;
    let out = ComplexMatrix::from_fn(outer * inner, |r, c| {
        let (o1, i1) = (r / inner, r % inner);
        let (o2, i2) = (c / inner, c % inner);
        (0..d).map(|k| a[(idx(o1, k, i1), idx(o2, k, i2))]).sum()
    });
    Ok(out)
}

/// Transposes the indices belonging to subsystem `site` only.
pub fn partial_transpose(a: &ComplexMatrix, dims: &[usize], site: usize) -> Result<ComplexMatrix> {
    let (_, d, inner) = site_layout(a, dims, site)?;
    let split = |x: usize| (x / (d * inner), (x / inner) % d, x % inner);
    let join = |o: usize, k: usize, i: usize| (o * d + k) * inner + i;
    Ok(ComplexMatrix::from_fn(a.dim, |r, c| {
        let (o1, k1, i1) = split(r);
        let (o2, k2, i2) = split(c);
        a[(join(o1, k2, i1), join(o2, k1, i2))]
    }))
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let n = a.dim;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Eigenvalues of a Hermitian matrix in ascending order, by cyclic complex
/// Jacobi rotations.
pub fn hermitian_eigenvalues(a: &ComplexMatrix) -> Result<Vec<f64>> {
    let deviation = a.hermitian_deviation();
    if deviation > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation });
    }
    let n = a.dim;
    let mut w = a.clone();
    let scale = w.frobenius_norm().max(1.0);

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&w) < JACOBI_TOL * scale {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                rotate(&mut w, p, q);
            }
        }
    }
    if !converged && off_diagonal_norm(&w) >= JACOBI_TOL * scale {
        return Err(Error::NoConvergence {
            sweeps: JACOBI_MAX_SWEEPS,
        });
    }

    let mut eig: Vec<f64> = (0..n).map(|i| w[(i, i)].re).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// One Jacobi rotation zeroing the (p, q) entry: A <- J^H A J with J = D R,
/// where D removes the phase of a_pq and R is a real plane rotation.
fn rotate(a: &mut ComplexMatrix, p: usize, q: usize) {
    let g = a[(p, q)];
    let g_abs = g.norm();
    if g_abs < f64::MIN_POSITIVE {
        return;
    }
    let phase = g / g_abs;
    let tau = (a[(q, q)].re - a[(p, p)].re) / (2.0 * g_abs);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    let j_pp = Complex64::new(c, 0.0);
    let j_pq = Complex64::new(s, 0.0);
    let j_qp = phase.conj() * -s;
    let j_qq = phase.conj() * c;

    let n = a.dim;
    for k in 0..n {
        let (akp, akq) = (a[(k, p)], a[(k, q)]);
        a[(k, p)] = akp * j_pp + akq * j_qp;
        a[(k, q)] = akp * j_pq + akq * j_qq;
    }
    for k in 0..n {
        let (apk, aqk) = (a[(p, k)], a[(q, k)]);
        a[(p, k)] = j_pp.conj() * apk + j_qp.conj() * aqk;
        a[(q, k)] = j_pq.conj() * apk + j_qq.conj() * aqk;
    }
    a[(p, q)] = Complex64::new(0.0, 0.0);
    a[(q, p)] = Complex64::new(0.0, 0.0);
    a[(p, p)].im = 0.0;
    a[(q, q)].im = 0.0;
}

/// Random Hermitian matrix. For `dim == 2` the four Pauli coefficients are
/// drawn uniformly from [-1, 1]; otherwise a matrix with uniform complex
/// entries in [-1, 1] is symmetrized as (A + A^H) / 2.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexMatrix {
    assert!(dim >= 1, "dimension must be at least 1");
    if dim == 2 {
        let mut m = ComplexMatrix::zeros(2);
        for p in Pauli::ALL {
            let c: f64 = rng.random_range(-1.0..=1.0);
            m = &m + &p.matrix().scale_real(c);
        }
        return m;
    }
    let a = ComplexMatrix::from_fn(dim, |_, _| {
        Complex64::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))
    });
    (&a + &a.adjoint()).scale_real(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn bell() -> ComplexMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        ComplexMatrix::projector(&[c(h), c(0.0), c(0.0), c(h)])
    }

    fn werner(p: f64) -> ComplexMatrix {
        &bell().scale_real(p) + &ComplexMatrix::identity(4).scale_real((1.0 - p) / 4.0)
    }

    #[test]
    fn kron_identity_and_paulis() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(kron(&i2, &i2), ComplexMatrix::identity(4));
        let zz = kron(&Pauli::Z.matrix(), &Pauli::Z.matrix());
        assert_eq!(zz, ComplexMatrix::from_real_diag(&[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn kron_xx_is_antidiagonal() {
        // brute force on the index formula (i*db + k, j*db + l) -> a[i,j] b[k,l]
        let x = Pauli::X.matrix();
        let xx = kron(&x, &x);
        for r in 0..4 {
            for col in 0..4 {
                let expected = if r + col == 3 { 1.0 } else { 0.0 };
                assert_eq!(xx[(r, col)], c(expected));
            }
        }
    }

    #[test]
    fn trace_examples() {
        assert_eq!(trace(&ComplexMatrix::identity(4)), c(4.0));
        assert_eq!(trace(&kron(&Pauli::Z.matrix(), &Pauli::Z.matrix())), c(0.0));
        assert!((trace(&werner(0.7)) - c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_of_bell_is_maximally_mixed() {
        let red = partial_trace(&bell(), &[2, 2], 1).unwrap();
        assert!(red.max_abs_diff(&ComplexMatrix::identity(2).scale_real(0.5)) < 1e-15);
    }

    #[test]
    fn partial_trace_rejects_bad_dims() {
        assert!(matches!(
            partial_trace(&bell(), &[2, 3], 1),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            partial_trace(&bell(), &[2, 2], 2),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(partial_transpose(&bell(), &[4, 2], 0).is_err());
    }

    #[test]
    fn partial_trace_of_product_is_scaled_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_hermitian(3, &mut rng);
        let b = random_hermitian(2, &mut rng);
        let ab = kron(&a, &b);
        let got = partial_trace(&ab, &[3, 2], 1).unwrap();
        // brute force contraction: sum_k ab[(i,k),(j,k)]
        let brute =
            ComplexMatrix::from_fn(3, |i, j| (0..2).map(|k| ab[(i * 2 + k, j * 2 + k)]).sum());
        assert!(got.max_abs_diff(&brute) < 1e-14);
        assert!(got.max_abs_diff(&a.scale(trace(&b))) < 1e-14);
        let got_a = partial_trace(&ab, &[3, 2], 0).unwrap();
        assert!(got_a.max_abs_diff(&b.scale(trace(&a))) < 1e-14);
    }

    #[test]
    fn sequential_partial_traces_give_total_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_hermitian(12, &mut rng);
        let r1 = partial_trace(&a, &[2, 3, 2], 1).unwrap();
        let r2 = partial_trace(&r1, &[2, 2], 0).unwrap();
        let r3 = partial_trace(&r2, &[2], 0).unwrap();
        assert_eq!(r3.dim(), 1);
        assert!((r3[(0, 0)] - trace(&a)).norm() < 1e-12);
    }

    #[test]
    fn partial_transpose_examples() {
        let mixed = ComplexMatrix::identity(4).scale_real(0.25);
        assert_eq!(partial_transpose(&mixed, &[2, 2], 1).unwrap(), mixed);

        let pt = partial_transpose(&bell(), &[2, 2], 1).unwrap();
        let eig = hermitian_eigenvalues(&pt).unwrap();
        let expected = [-0.5, 0.5, 0.5, 0.5];
        for (a, b) in eig.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{eig:?}");
        }

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_hermitian(4, &mut rng);
        let twice =
            partial_transpose(&partial_transpose(&a, &[2, 2], 0).unwrap(), &[2, 2], 0).unwrap();
        assert_eq!(twice, a);
    }

    #[test]
    fn eigenvalue_examples() {
        let eig = hermitian_eigenvalues(&ComplexMatrix::from_real_diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(eig, vec![1.0, 2.0, 3.0]);
        let eig = hermitian_eigenvalues(&Pauli::X.matrix()).unwrap();
        assert!((eig[0] + 1.0).abs() < 1e-15 && (eig[1] - 1.0).abs() < 1e-15);
        let eig = hermitian_eigenvalues(&Pauli::Y.matrix()).unwrap();
        assert!((eig[0] + 1.0).abs() < 1e-15 && (eig[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn werner_partial_transpose_min_eigenvalue() {
        // PT of the Werner state has spectrum {(1+p)/4 x3, (1-3p)/4}.
        for k in 1..20 {
            let p = k as f64 / 20.0;
            let pt = partial_transpose(&werner(p), &[2, 2], 1).unwrap();
            let eig = hermitian_eigenvalues(&pt).unwrap();
            assert!((eig[0] - (1.0 - 3.0 * p) / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut m = ComplexMatrix::identity(2);
        m[(0, 1)] = c(1.0);
        assert!(matches!(
            hermitian_eigenvalues(&m),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn random_hermitian_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for dim in 1..6 {
            assert!(random_hermitian(dim, &mut rng).is_hermitian(1e-12));
        }
        let a = random_hermitian(2, &mut ChaCha8Rng::seed_from_u64(5));
        let b = random_hermitian(2, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        // decomposition oracle: c_sigma = tr(m sigma) / 2 must lie in [-1, 1] and be real
        for _ in 0..100 {
            let m = random_hermitian(2, &mut rng);
            for p in Pauli::ALL {
                let coeff = trace(&m.matmul(&p.matrix())) / 2.0;
                assert!(coeff.im.abs() < 1e-15);
                assert!(coeff.re.abs() <= 1.0);
            }
        }
    }
}
