//! Convolution layers whose stride equals the kernel size.
//!
//! Feeding a density matrix through a bias-free, activation-free layer with
//! kernel `M^T` yields `tr_last(rho (I ⊗ M))`; stacking one layer per
//! subsystem yields `<M1 ⊗ ... ⊗ MN>`. This module keeps the complex-kernel
//! formulation, including the kernel-gradient rule, so the equivalence and
//! the Hermiticity of the gradients can be checked directly.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{kron, ComplexMatrix, HERMITIAN_TOL};

/// Imaginary residue allowed on an expectation value of Hermitian operators.
pub const REALITY_TOL: f64 = 1e-10;

/// Strided convolution: the input is tiled into `kernel_dim x kernel_dim`
/// blocks and each block is multiplied elementwise with `kernel` and summed.
pub fn conv_layer(
    input: &ComplexMatrix,
    kernel: &ComplexMatrix,
    kernel_dim: usize,
) -> Result<ComplexMatrix> {
    if kernel.dim() != kernel_dim || kernel_dim == 0 || !input.dim().is_multiple_of(kernel_dim) {
        return Err(Error::DimensionMismatch(format!(
            "cannot convolve {0}x{0} input with {1}x{1} kernel (stride {2})",
            input.dim(),
            kernel.dim(),
            kernel_dim
        )));
    }
    let out_dim = input.dim() / kernel_dim;
    Ok(ComplexMatrix::from_fn(out_dim, |i, j| {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..kernel_dim {
            for l in 0..kernel_dim {
                acc += input[(i * kernel_dim + k, j * kernel_dim + l)] * kernel[(k, l)];
            }
        }
        acc
    }))
}

fn real_part_checked(z: Complex64) -> Result<f64> {
    if z.im.abs() >= REALITY_TOL {
        return Err(Error::NotHermitian {
            deviation: z.im.abs(),
        });
    }
    Ok(z.re)
}

/// `<M> = tr(rho M)`, computed as a single convolution of `rho` with `M^T`.
pub fn global_expectation(rho: &ComplexMatrix, m: &ComplexMatrix) -> Result<f64> {
    if rho.dim() != m.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state is {0}x{0}, operator is {1}x{1}",
            rho.dim(),
            m.dim()
        )));
    }
    for a in [rho, m] {
        let deviation = a.hermitian_deviation();
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
    }
    let out = conv_layer(rho, &m.transpose(), m.dim())?;
    real_part_checked(out[(0, 0)])
}

/// Forward pass of a chain of convolution layers. `kernels[n]` is the kernel
/// of layer `n + 1` and acts on the last remaining subsystem. Returns
/// `[O0 = input, O1, ..., ON]`.
pub fn chain_forward(
    input: &ComplexMatrix,
    kernels: &[ComplexMatrix],
) -> Result<Vec<ComplexMatrix>> {
    let mut outputs = Vec::with_capacity(kernels.len() + 1);
    outputs.push(input.clone());
    for k in kernels {
        let next = conv_layer(outputs.last().expect("non-empty"), k, k.dim())?;
        outputs.push(next);
    }
    Ok(outputs)
}

/// `<M1 ⊗ ... ⊗ MN>` by convolving with `MN^T` first and `M1^T` last.
pub fn multi_site_expectation(
    rho: &ComplexMatrix,
    factors: &[ComplexMatrix],
    dims: &[usize],
) -> Result<f64> {
    if factors.len() != dims.len() || factors.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} factors for {} subsystems",
            factors.len(),
            dims.len()
        )));
    }
    if dims.iter().product::<usize>() != rho.dim() {
        return Err(Error::DimensionMismatch(format!(
            "dims {dims:?} do not match {0}x{0} state",
            rho.dim()
        )));
    }
    if let Some((i, f)) = factors
        .iter()
        .zip(dims)
        .enumerate()
        .find(|(_, (f, &d))| f.dim() != d)
        .map(|(i, (f, _))| (i, f))
    {
        return Err(Error::DimensionMismatch(format!(
            "factor {i} is {0}x{0}, expected {1}",
            f.dim(),
            dims[i]
        )));
    }
    let kernels: Vec<ComplexMatrix> = factors.iter().rev().map(ComplexMatrix::transpose).collect();
    let outputs = chain_forward(rho, &kernels)?;
    real_part_checked(outputs.last().expect("non-empty")[(0, 0)])
}

/// Exchanges the two tensor factors of a matrix on `C^{d_a} ⊗ C^{d_b}`:
/// sum O_{ij,kl} |i><j| ⊗ |k><l|  ->  sum O_{ij,kl} |k><l| ⊗ |i><j|.
pub fn swap_subsystems(o: &ComplexMatrix, d_a: usize, d_b: usize) -> Result<ComplexMatrix> {
    if d_a * d_b != o.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{d_a}*{d_b} != {}",
            o.dim()
        )));
    }
    Ok(ComplexMatrix::from_fn(o.dim(), |r, c| {
        let (k, i) = (r / d_a, r % d_a);
        let (l, j) = (c / d_a, c % d_a);
        o[(i * d_b + k, j * d_b + l)]
    }))
}

/// Per-layer errors `delta[n]` of a convolution chain, `delta[N]` first
/// being the scalar error arriving from the dense head.
#[derive(Debug, Clone)]
pub struct BackpropError {
    /// `deltas[n]` has the dimension of the layer output `O[n]`, n = 0..=N.
    pub deltas: Vec<ComplexMatrix>,
}

/// Propagates a scalar output error back through the chain:
/// `delta[n] = delta[n+1] ⊗ kernel[n+1]`.
pub fn backprop_errors(output_error: f64, kernels: &[ComplexMatrix]) -> BackpropError {
    let n = kernels.len();
    let mut deltas = vec![ComplexMatrix::from_real_diag(&[output_error]); n + 1];
    for layer in (0..n).rev() {
        deltas[layer] = kron(&deltas[layer + 1], &kernels[layer]);
    }
    BackpropError { deltas }
}

/// Kernel gradient of a layer from its input `o_prev` (on `C^{d_o} ⊗ C^{d_m}`)
/// and the error `delta` at its output: the factors of `o_prev` are swapped
/// and the result is convolved with `delta`, giving
/// `sum_{kl} sum_{ij} O_{ij,kl} delta_{ij} |k><l|`.
///
/// Fails if either input is not Hermitian, or if the result is not Hermitian
/// within 1e-10.
pub fn kernel_gradient(
    o_prev: &ComplexMatrix,
    delta: &ComplexMatrix,
    dims: (usize, usize),
) -> Result<ComplexMatrix> {
    let (d_o, d_m) = dims;
    if o_prev.dim() != d_o * d_m || delta.dim() != d_o {
        return Err(Error::DimensionMismatch(format!(
            "input {0}x{0} and error {1}x{1} incompatible with dims ({d_o}, {d_m})",
            o_prev.dim(),
            delta.dim()
        )));
    }
    for a in [o_prev, delta] {
        let deviation = a.hermitian_deviation();
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
    }
    let swapped = swap_subsystems(o_prev, d_o, d_m)?;
    let grad = conv_layer(&swapped, delta, d_o)?;
    let deviation = grad.hermitian_deviation();
    if deviation > 1e-10 {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(grad)
}

/// Kernel gradients of every layer of a chain for a scalar output error.
/// `gradients[n]` belongs to `kernels[n]`.
pub fn chain_kernel_gradients(
    input: &ComplexMatrix,
    kernels: &[ComplexMatrix],
    output_error: f64,
) -> Result<Vec<ComplexMatrix>> {
    let outputs = chain_forward(input, kernels)?;
    let errors = backprop_errors(output_error, kernels);
    kernels
        .iter()
        .enumerate()
        .map(|(n, k)| {
            let o_prev = &outputs[n];
            kernel_gradient(
                o_prev,
                &errors.deltas[n + 1],
                (o_prev.dim() / k.dim(), k.dim()),
            )
        })
        .collect()
}
