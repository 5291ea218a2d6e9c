//! Entanglement detection for two-qubit states with a branching
//! convolutional network whose kernels are trainable Hermitian observables.
//!
//! A convolution with kernel `M^T` and stride equal to the kernel size maps a
//! density matrix `rho` to `tr_last(rho (I ⊗ M))`; two stacked layers give
//! the expectation `<M1 ⊗ M2>` exactly. Kernels are parametrized by real
//! Pauli coefficients, so they stay Hermitian throughout training, and a
//! trained model can be read back as a table of product observables.
//!
//! Modules, bottom up:
//! - [`linalg`]: dense complex matrices, partial trace/transpose, Jacobi eigenvalues.
//! - [`states`]: Werner, G1/G2-Werner and random states, PPT labels, datasets.
//! - [`model`]: kernels, convolution paths, dense head, backpropagation, model files.
//! - [`training`]: Adam, the minibatch loop, evaluation.
//! - [`analysis`]: accuracy curves, error histograms, operator tables, rounding retest.

pub mod analysis;
pub mod error;
pub mod linalg;
pub mod model;
pub mod states;
pub mod training;

pub use error::{Error, Result};
