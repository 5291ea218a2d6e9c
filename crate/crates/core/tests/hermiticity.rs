use bcnn_core::linalg::{kron, random_hermitian, trace, ComplexMatrix};
use bcnn_core::model::{
    chain_kernel_gradients, global_expectation, kernel_gradient, multi_site_expectation,
};
use bcnn_core::states::{gen_general, record_rng};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kernel_gradient_is_hermitian(seed in any::<u64>(), d_o in 1usize..4, d_m in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let o = random_hermitian(d_o * d_m, &mut rng);
        let delta = random_hermitian(d_o, &mut rng);
        let g = kernel_gradient(&o, &delta, (d_o, d_m)).unwrap();
        prop_assert_eq!(g.dim(), d_m);
        prop_assert!(g.hermitian_deviation() < 1e-10);
    }

    #[test]
    fn kernel_gradient_is_derivative_of_expectation(seed in any::<u64>()) {
        // d tr(rho (D ⊗ M)) / d M_kl  =  sum_ij rho_{ik,jl} D_ji, i.e. G = (d/dM^T)
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let o = random_hermitian(4, &mut rng);
        let delta = random_hermitian(2, &mut rng);
        let g = kernel_gradient(&o, &delta, (2, 2)).unwrap();
        for k in 0..2 {
            for l in 0..2 {
                let mut e = ComplexMatrix::zeros(2);
                e[(l, k)] = Complex64::new(1.0, 0.0);
                let direct = trace(&o.matmul(&kron(&delta.transpose(), &e)));
                prop_assert!((direct - g[(k, l)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn stacked_convolutions_give_product_expectation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = gen_general(&mut rng).unwrap().matrix;
        let m1 = random_hermitian(2, &mut rng);
        let m2 = random_hermitian(2, &mut rng);
        let conv = multi_site_expectation(&rho, &[m1.clone(), m2.clone()], &[2, 2]).unwrap();
        let direct = trace(&rho.matmul(&kron(&m1, &m2)));
        prop_assert!((conv - direct.re).abs() < 1e-12);
        prop_assert!((global_expectation(&rho, &kron(&m1, &m2)).unwrap() - direct.re).abs() < 1e-12);
    }
}

#[test]
fn gradient_updates_keep_kernels_hermitian() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut kernels = vec![random_hermitian(2, &mut rng), random_hermitian(2, &mut rng)];
    for step in 0..100u64 {
        let rho = gen_general(&mut record_rng(18, step)).unwrap().matrix;
        let grads = chain_kernel_gradients(&rho, &kernels, 0.3).unwrap();
        for (k, g) in kernels.iter_mut().zip(&grads) {
            *k = &*k - &g.scale_real(0.05);
            assert!(
                k.hermitian_deviation() < 1e-8,
                "step {step}: deviation {:e}",
                k.hermitian_deviation()
            );
        }
    }
}
