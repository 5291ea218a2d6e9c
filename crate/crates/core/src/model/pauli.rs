use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{trace, ComplexMatrix, Pauli, HERMITIAN_TOL};

/// A 2x2 Hermitian observable `cx X + cy Y + cz Z + ci I`.
///
/// Coefficients are stored in table order `[X, Y, Z, I]`. A kernel flagged
/// `fixed_identity` is pinned to the identity and never trained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliKernel {
    pub coeffs: [f64; 4],
    pub fixed_identity: bool,
}

impl PauliKernel {
    pub fn new(coeffs: [f64; 4]) -> Self {
        PauliKernel {
            coeffs,
            fixed_identity: false,
        }
    }

    pub fn fixed_identity() -> Self {
        PauliKernel {
            coeffs: [0.0, 0.0, 0.0, 1.0],
            fixed_identity: true,
        }
    }

    /// Coefficients i.i.d. uniform on `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Self {
        let mut coeffs = [0.0; 4];
        for c in &mut coeffs {
            *c = rng.random_range(-scale..=scale);
        }
        PauliKernel::new(coeffs)
    }

    pub fn cx(&self) -> f64 {
        self.coeffs[0]
    }
    pub fn cy(&self) -> f64 {
        self.coeffs[1]
    }
    pub fn cz(&self) -> f64 {
        self.coeffs[2]
    }
    pub fn ci(&self) -> f64 {
        self.coeffs[3]
    }

    pub fn to_matrix(&self) -> ComplexMatrix {
        kernel_to_matrix(self)
    }
}

pub fn kernel_to_matrix(k: &PauliKernel) -> ComplexMatrix {
    let [x, y, z, i] = k.coeffs;
    // [[i + z, x - iy], [x + iy, i - z]]
    ComplexMatrix::from_vec(vec![
        Complex64::new(i + z, 0.0),
        Complex64::new(x, -y),
        Complex64::new(x, y),
        Complex64::new(i - z, 0.0),
    ])
    .expect("2x2")
}

/// Coefficients `tr(m sigma) / 2` of a 2x2 Hermitian matrix in the `[X, Y, Z, I]` basis.
pub fn pauli_decompose(m: &ComplexMatrix) -> Result<[f64; 4]> {
    if m.dim() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "expected 2x2, got {}x{}",
            m.dim(),
            m.dim()
        )));
    }
    let deviation = m.hermitian_deviation();
    if deviation > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation });
    }
    let mut out = [0.0; 4];
    for (c, p) in out.iter_mut().zip(Pauli::ALL) {
        *c = trace(&m.matmul(&p.matrix())).re / 2.0;
    }
    Ok(out)
}
