//! The branching network: `m` convolution paths of Pauli kernels feeding a
//! dense classifier head.
//!
//! Each path has `n1` first-layer kernels (acting on qubit 2) and `n2`
//! second-layer kernels (acting on qubit 1) and emits the `n1 * n2`
//! expectations `<M_j ⊗ M_i>`, second-layer index `j` slow and first-layer
//! index `i` fast. Path outputs are concatenated into `alpha = m * n1 * n2`
//! features.
//!
//! Dense head: `fc_widths = [alpha, h_1, ..., h_k, 1]` lists node-layer
//! widths. The input node layer carries no bias or activation; every hidden
//! node layer has a bias and ReLU; the output node has a bias and sigmoid.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::conv::{conv_layer, REALITY_TOL};
use super::pauli::PauliKernel;
use crate::error::{Error, Result};
use crate::linalg::{kron, ComplexMatrix, Pauli};
use crate::states::DensityMatrix;

/// Probabilities are clamped to `[EPS_CLIP, 1 - EPS_CLIP]` inside the loss.
pub const EPS_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub m: usize,
    pub n1: usize,
    pub n2: usize,
    /// Pin the first kernel of each layer of every path to the identity.
    pub fixed_identity: bool,
    pub fc_widths: Vec<usize>,
}

impl Architecture {
    /// `(m; n1, n2)` paths with the given hidden widths between `alpha` and the output node.
    pub fn new(
        m: usize,
        n1: usize,
        n2: usize,
        fixed_identity: bool,
        hidden: &[usize],
    ) -> Result<Self> {
        let mut fc_widths = vec![m * n1 * n2];
        fc_widths.extend_from_slice(hidden);
        fc_widths.push(1);
        let arch = Architecture {
            m,
            n1,
            n2,
            fixed_identity,
            fc_widths,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// `(m; 1, 1)` with a `(alpha, 1024, 1)` head, used for the Werner-type families.
    pub fn parametric(m: usize) -> Self {
        Architecture::new(m, 1, 1, false, &[1024]).expect("valid")
    }

    /// `(m; n, n)` with a `(alpha, 1024, 1024, 1024, 1)` head, used for general states.
    /// Kernel counts above one pin an identity kernel in each layer.
    pub fn general(m: usize, n: usize) -> Self {
        Architecture::new(m, n, n, n > 1, &[1024, 1024, 1024]).expect("valid")
    }

    pub fn alpha(&self) -> usize {
        self.m * self.n1 * self.n2
    }

    pub fn features_per_path(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n1 == 0 || self.n2 == 0 {
            return Err(Error::ShapeMismatch(
                "path count and kernel counts must be positive".into(),
            ));
        }
        if self.fc_widths.len() < 2 || self.fc_widths.contains(&0) {
            return Err(Error::ShapeMismatch(format!(
                "bad dense widths {:?}",
                self.fc_widths
            )));
        }
        if self.fc_widths[0] != self.alpha() {
            return Err(Error::ShapeMismatch(format!(
                "first dense width {} != m*n1*n2 = {}",
                self.fc_widths[0],
                self.alpha()
            )));
        }
        if *self.fc_widths.last().expect("non-empty") != 1 {
            return Err(Error::ShapeMismatch("last dense width must be 1".into()));
        }
        Ok(())
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let widths: Vec<String> = self.fc_widths.iter().map(usize::to_string).collect();
        write!(
            f,
            "m={} n1={} n2={} fixed_identity={} fc={}",
            self.m,
            self.n1,
            self.n2,
            u8::from(self.fixed_identity),
            widths.join(",")
        )
    }
}

impl FromStr for Architecture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::Parse { line: 0, msg };
        let (mut m, mut n1, mut n2, mut fixed, mut fc) = (None, None, None, None, None);
        for kv in s.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bad(format!("bad architecture field '{kv}'")))?;
            let num = |v: &str| v.parse::<usize>().map_err(|e| bad(format!("{k}: {e}")));
            match k {
                "m" => m = Some(num(v)?),
                "n1" => n1 = Some(num(v)?),
                "n2" => n2 = Some(num(v)?),
                "fixed_identity" => fixed = Some(num(v)? != 0),
                "fc" => fc = Some(v.split(',').map(num).collect::<Result<Vec<_>>>()?),
                _ => return Err(bad(format!("unknown architecture field '{k}'"))),
            }
        }
        let missing = |name: &str| bad(format!("architecture is missing '{name}'"));
        let arch = Architecture {
            m: m.ok_or_else(|| missing("m"))?,
            n1: n1.ok_or_else(|| missing("n1"))?,
            n2: n2.ok_or_else(|| missing("n2"))?,
            fixed_identity: fixed.unwrap_or(false),
            fc_widths: fc.ok_or_else(|| missing("fc"))?,
        };
        arch.validate()?;
        Ok(arch)
    }
}

/// One convolution path: `layer1` kernels act on qubit 2, `layer2` on qubit 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvPath {
    pub layer1: Vec<PauliKernel>,
    pub layer2: Vec<PauliKernel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out x in`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// All trainable state. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub paths: Vec<ConvPath>,
    pub dense: Vec<DenseLayer>,
}

fn kernel_layer<R: Rng + ?Sized>(
    n: usize,
    fixed_identity: bool,
    scale: f64,
    rng: &mut R,
) -> Vec<PauliKernel> {
    (0..n)
        .map(|k| {
            if fixed_identity && k == 0 {
                PauliKernel::fixed_identity()
            } else {
                PauliKernel::random(scale, rng)
            }
        })
        .collect()
}

impl ModelParams {
    /// Kernel coefficients uniform on `[-1, 1]`; see [`ModelParams::init_scaled`].
    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        Self::init_scaled(arch, 1.0, rng)
    }

    /// Random Hermitian kernels with coefficients uniform on
    /// `[-kernel_scale, kernel_scale]`, Glorot-uniform dense weights, biases
    /// uniform on `±1/sqrt(fan_in)`.
    pub fn init_scaled<R: Rng + ?Sized>(
        arch: &Architecture,
        kernel_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        arch.validate()?;
        if !(kernel_scale > 0.0 && kernel_scale.is_finite()) {
            return Err(Error::OutOfRange(format!(
                "kernel init scale {kernel_scale}"
            )));
        }
        let paths = (0..arch.m)
            .map(|_| {
                let layer1 = kernel_layer(arch.n1, arch.fixed_identity, kernel_scale, rng);
                let layer2 = kernel_layer(arch.n2, arch.fixed_identity, kernel_scale, rng);
                ConvPath { layer1, layer2 }
            })
            .collect();
        let dense = arch
            .fc_widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                    rng.random_range(-limit..=limit)
                });
                let bias_limit = 1.0 / (fan_in as f64).sqrt();
                let bias = Array1::from_shape_simple_fn(fan_out, || {
                    rng.random_range(-bias_limit..=bias_limit)
                });
                DenseLayer { weights, bias }
            })
            .collect();
        Ok(ModelParams {
            arch: arch.clone(),
            paths,
            dense,
        })
    }

    /// Same structure (including fixed flags) with every value zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for path in &mut z.paths {
            for k in path.layer1.iter_mut().chain(path.layer2.iter_mut()) {
                k.coeffs = [0.0; 4];
            }
        }
        for layer in &mut z.dense {
            layer.weights.fill(0.0);
            layer.bias.fill(0.0);
        }
        z
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.paths.len() != self.arch.m {
            return Err(Error::ShapeMismatch(format!(
                "{} paths, architecture says {}",
                self.paths.len(),
                self.arch.m
            )));
        }
        for (p, path) in self.paths.iter().enumerate() {
            if path.layer1.len() != self.arch.n1 || path.layer2.len() != self.arch.n2 {
                return Err(Error::ShapeMismatch(format!(
                    "path {p} has wrong kernel counts"
                )));
            }
        }
        if self.dense.len() != self.arch.fc_widths.len() - 1 {
            return Err(Error::ShapeMismatch(
                "dense layer count does not match widths".into(),
            ));
        }
        for (l, (layer, w)) in self
            .dense
            .iter()
            .zip(self.arch.fc_widths.windows(2))
            .enumerate()
        {
            if layer.weights.dim() != (w[1], w[0]) || layer.bias.len() != w[1] {
                return Err(Error::ShapeMismatch(format!(
                    "dense layer {l} has wrong shape"
                )));
            }
        }
        Ok(())
    }

    /// Trainable parameter buffers in a fixed order; fixed identity kernels are skipped.
    pub fn trainable_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for path in &self.paths {
            for k in path.layer1.iter().chain(&path.layer2) {
                if !k.fixed_identity {
                    out.push(&k.coeffs);
                }
            }
        }
        for layer in &self.dense {
            out.push(layer.weights.as_slice().expect("standard layout"));
            out.push(layer.bias.as_slice().expect("standard layout"));
        }
        out
    }

    /// Mutable counterpart of [`ModelParams::trainable_slices`], same order.
    pub fn trainable_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for path in &mut self.paths {
            for k in path.layer1.iter_mut().chain(path.layer2.iter_mut()) {
                if !k.fixed_identity {
                    out.push(&mut k.coeffs);
                }
            }
        }
        for layer in &mut self.dense {
            out.push(layer.weights.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable_slices().iter().map(|s| s.len()).sum()
    }
}

/// `<M_j ⊗ M_i>` for every (layer-2 kernel j, layer-1 kernel i) pair,
/// evaluated as two stacked convolutions; `i` runs fastest.
pub fn path_forward_complex(
    rho: &ComplexMatrix,
    path: &ConvPath,
) -> Result<Vec<num_complex::Complex64>> {
    let mut out = Vec::with_capacity(path.layer1.len() * path.layer2.len());
    let first: Vec<ComplexMatrix> = path
        .layer1
        .iter()
        .map(|k| conv_layer(rho, &k.to_matrix().transpose(), 2))
        .collect::<Result<_>>()?;
    for k2 in &path.layer2 {
        let kernel = k2.to_matrix().transpose();
        for o1 in &first {
            out.push(conv_layer(o1, &kernel, 2)?[(0, 0)]);
        }
    }
    Ok(out)
}

/// Real path outputs; fails if any imaginary residue reaches 1e-10.
pub fn path_forward(rho: &ComplexMatrix, path: &ConvPath) -> Result<Vec<f64>> {
    path_forward_complex(rho, path)?
        .into_iter()
        .map(|z| {
            if z.im.abs() >= REALITY_TOL {
                Err(Error::NotHermitian {
                    deviation: z.im.abs(),
                })
            } else {
                Ok(z.re)
            }
        })
        .collect()
}

/// Feature vector of length `alpha` from the convolution paths.
pub fn conv_features(rho: &ComplexMatrix, params: &ModelParams) -> Result<Vec<f64>> {
    let mut features = Vec::with_capacity(params.arch.alpha());
    for path in &params.paths {
        features.extend(path_forward(rho, path)?);
    }
    Ok(features)
}

/// Two-point Pauli correlations `T[a][b] = tr(rho sigma_a ⊗ sigma_b)` in
/// `[X, Y, Z, I]` order. Every path output is a bilinear form in this table.
pub type Correlations = [[f64; 4]; 4];

pub fn pauli_correlations(rho: &ComplexMatrix) -> Correlations {
    let mut t = [[0.0; 4]; 4];
    for (a, pa) in Pauli::ALL.iter().enumerate() {
        for (b, pb) in Pauli::ALL.iter().enumerate() {
            let op = kron(&pa.matrix(), &pb.matrix());
            t[a][b] = rho
                .matmul(&op)
                .as_slice()
                .iter()
                .step_by(5)
                .map(|z| z.re)
                .sum();
        }
    }
    t
}

fn bilinear(u: &[f64; 4], t: &Correlations, v: &[f64; 4]) -> f64 {
    let mut acc = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            acc += u[a] * t[a][b] * v[b];
        }
    }
    acc
}

/// Features from precomputed correlations: `c(M_j)^T T c(M_i)`. Same values
/// and ordering as [`conv_features`].
pub fn features_from_correlations(t: &Correlations, params: &ModelParams, out: &mut [f64]) {
    let mut idx = 0;
    for path in &params.paths {
        for k2 in &path.layer2 {
            for k1 in &path.layer1 {
                out[idx] = bilinear(&k2.coeffs, t, &k1.coeffs);
                idx += 1;
            }
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(EPS_CLIP, 1.0 - EPS_CLIP)
}

/// Binary cross-entropy with the prediction clamped to `[EPS_CLIP, 1 - EPS_CLIP]`.
pub fn bce_loss(prediction: f64, label: f64) -> f64 {
    let p = clamp_prob(prediction);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

/// Activations of every node layer of the head for a batch of feature rows.
struct HeadPass {
    /// `acts[0]` is the input, `acts[l + 1]` the output of dense layer `l`.
    acts: Vec<Array2<f64>>,
}

fn head_forward(dense: &[DenseLayer], x: Array2<f64>) -> HeadPass {
    let mut acts = Vec::with_capacity(dense.len() + 1);
    acts.push(x);
    let last = dense.len() - 1;
    for (l, layer) in dense.iter().enumerate() {
        let mut z = acts[l].dot(&layer.weights.t());
        z += &layer.bias;
        if l == last {
            z.mapv_inplace(sigmoid);
        } else {
            z.mapv_inplace(|v| v.max(0.0));
        }
        acts.push(z);
    }
    HeadPass { acts }
}

/// Sigmoid outputs of the head for a batch of feature rows (`batch x alpha`).
pub fn head_predict(params: &ModelParams, features: ArrayView2<'_, f64>) -> Array1<f64> {
    let pass = head_forward(&params.dense, features.to_owned());
    pass.acts.last().expect("non-empty").column(0).to_owned()
}

/// Probability that `rho` is entangled, with features computed by the
/// convolution paths.
pub fn model_forward(rho: &DensityMatrix, params: &ModelParams) -> Result<f64> {
    params.validate()?;
    let f = conv_features(&rho.matrix, params)?;
    let x = Array2::from_shape_vec((1, f.len()), f).expect("row");
    Ok(head_predict(params, x.view())[0])
}

/// Builds the `batch x alpha` feature matrix from correlation tables.
pub fn feature_matrix(params: &ModelParams, corr: &[Correlations]) -> Array2<f64> {
    let alpha = params.arch.alpha();
    let mut x = Array2::zeros((corr.len(), alpha));
    for (row, t) in x.axis_iter_mut(Axis(0)).zip(corr) {
        let mut row = row;
        features_from_correlations(t, params, row.as_slice_mut().expect("contiguous row"));
    }
    x
}

/// Mean BCE over a batch.
pub fn batch_loss(params: &ModelParams, corr: &[Correlations], labels: &[f64]) -> f64 {
    let x = feature_matrix(params, corr);
    let p = head_predict(params, x.view());
    p.iter()
        .zip(labels)
        .map(|(&p, &y)| bce_loss(p, y))
        .sum::<f64>()
        / labels.len() as f64
}

/// Loss, gradients and forward predictions of one batch.
#[derive(Debug, Clone)]
pub struct BatchResult {
    pub loss: f64,
    pub grads: ModelParams,
    pub predictions: Vec<f64>,
}

/// Mean BCE over a batch and its gradient with respect to every parameter.
/// Fixed identity kernels get zero gradient.
pub fn batch_gradients(
    params: &ModelParams,
    corr: &[Correlations],
    labels: &[f64],
) -> (f64, ModelParams) {
    let r = batch_step(params, corr, labels);
    (r.loss, r.grads)
}

/// As [`batch_gradients`], also returning the predictions of the forward pass.
#[allow(clippy::needless_range_loop)]
pub fn batch_step(params: &ModelParams, corr: &[Correlations], labels: &[f64]) -> BatchResult {
    assert_eq!(corr.len(), labels.len());
    let batch = labels.len() as f64;
    let x = feature_matrix(params, corr);
    let pass = head_forward(&params.dense, x);
    let out = pass.acts.last().expect("non-empty");

    let mut loss = 0.0;
    // dL/dz at the output node; zero where the clamp is active
    let mut dz = Array2::zeros((labels.len(), 1));
    for (b, &y) in labels.iter().enumerate() {
        let p = out[(b, 0)];
        loss += bce_loss(p, y);
        if p > EPS_CLIP && p < 1.0 - EPS_CLIP {
            dz[(b, 0)] = (p - y) / batch;
        }
    }
    loss /= batch;

    let mut grads = params.zeros_like();
    for l in (0..params.dense.len()).rev() {
        let a_prev = &pass.acts[l];
        grads.dense[l].weights = dz.t().dot(a_prev).as_standard_layout().into_owned();
        grads.dense[l].bias = dz.sum_axis(Axis(0));
        let mut da = dz.dot(&params.dense[l].weights);
        if l > 0 {
            // a_prev is a ReLU output: gradient passes where it is positive
            ndarray::Zip::from(&mut da).and(a_prev).for_each(|d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
        }
        dz = da;
    }
    // dz now holds dL/dfeatures (batch x alpha)
    let per_path = params.arch.features_per_path();
    for (b, t) in corr.iter().enumerate() {
        for (p, path) in params.paths.iter().enumerate() {
            let gpath = &mut grads.paths[p];
            for (j, k2) in path.layer2.iter().enumerate() {
                for (i, k1) in path.layer1.iter().enumerate() {
                    let g = dz[(b, p * per_path + j * path.layer1.len() + i)];
                    if g == 0.0 {
                        continue;
                    }
                    // d<Mj ⊗ Mi>/dc(Mj)_a = sum_b T_ab c(Mi)_b, and symmetrically
                    for a in 0..4 {
                        let mut t_v = 0.0;
                        let mut tt_u = 0.0;
                        for c in 0..4 {
                            t_v += t[a][c] * k1.coeffs[c];
                            tt_u += t[c][a] * k2.coeffs[c];
                        }
                        if !k2.fixed_identity {
                            gpath.layer2[j].coeffs[a] += g * t_v;
                        }
                        if !k1.fixed_identity {
                            gpath.layer1[i].coeffs[a] += g * tt_u;
                        }
                    }
                }
            }
        }
    }
    let predictions = out.column(0).to_vec();
    BatchResult {
        loss,
        grads,
        predictions,
    }
}

/// Gradient of the loss of a single labelled state.
pub fn model_backward(
    rho: &DensityMatrix,
    params: &ModelParams,
    label: bool,
) -> (f64, ModelParams) {
    let t = pauli_correlations(&rho.matrix);
    batch_gradients(params, &[t], &[f64::from(u8::from(label))])
}
