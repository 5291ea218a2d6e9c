//! The four 2-qubit state families, PPT labelling, and seeded datasets.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{
    hermitian_eigenvalues, kron, partial_transpose, trace, ComplexMatrix, HERMITIAN_TOL,
};

/// Validation tolerance for trace and positivity of density matrices.
pub const STATE_TOL: f64 = 1e-9;

const TWO_QUBITS: [usize; 2] = [2, 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateFamily {
    Werner,
    G1Werner,
    G2Werner,
    General,
}

impl StateFamily {
    pub const ALL: [StateFamily; 4] = [
        StateFamily::Werner,
        StateFamily::G1Werner,
        StateFamily::G2Werner,
        StateFamily::General,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            StateFamily::Werner => "Werner",
            StateFamily::G1Werner => "G1Werner",
            StateFamily::G2Werner => "G2Werner",
            StateFamily::General => "General",
        }
    }
}

impl fmt::Display for StateFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for StateFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let family = match lower.as_str() {
            "werner" => StateFamily::Werner,
            "g1werner" | "g1-werner" | "gi-werner" | "g1" => StateFamily::G1Werner,
            "g2werner" | "g2-werner" | "gii-werner" | "g2" => StateFamily::G2Werner,
            "general" => StateFamily::General,
            _ => return Err(Error::OutOfRange(format!("unknown state family '{s}'"))),
        };
        Ok(family)
    }
}

/// A validated 4x4 two-qubit state together with its generation parameters
/// and PPT label.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub matrix: ComplexMatrix,
    pub family: StateFamily,
    pub p: Option<f64>,
    pub theta: Option<f64>,
    pub phi: Option<f64>,
    pub lambda_min: f64,
    pub entangled: bool,
}

impl DensityMatrix {
    /// Validates `matrix` and labels it with the PPT criterion.
    pub fn new(
        matrix: ComplexMatrix,
        family: StateFamily,
        p: Option<f64>,
        theta: Option<f64>,
        phi: Option<f64>,
    ) -> Result<Self> {
        let (lambda_min, entangled) = label_ppt(&matrix)?;
        Ok(DensityMatrix {
            matrix,
            family,
            p,
            theta,
            phi,
            lambda_min,
            entangled,
        })
    }

    pub fn label(&self) -> u8 {
        u8::from(self.entangled)
    }
}

/// Checks the density-matrix invariants: 4x4, finite, Hermitian, unit trace, PSD.
pub fn validate_density(rho: &ComplexMatrix) -> Result<()> {
    if rho.dim() != 4 {
        return Err(Error::InvalidState(format!(
            "expected a 4x4 matrix, got {}x{}",
            rho.dim(),
            rho.dim()
        )));
    }
    if !rho.is_finite() {
        return Err(Error::InvalidState("non-finite entries".into()));
    }
    let dev = rho.hermitian_deviation();
    if dev > HERMITIAN_TOL {
        return Err(Error::InvalidState(format!(
            "not Hermitian (deviation {dev:e})"
        )));
    }
    let tr = trace(rho);
    if (tr - Complex64::new(1.0, 0.0)).norm() > STATE_TOL {
        return Err(Error::InvalidState(format!("trace is {tr}, expected 1")));
    }
    let eig = hermitian_eigenvalues(rho)?;
    if eig[0] < -STATE_TOL {
        return Err(Error::InvalidState(format!(
            "negative eigenvalue {:e}",
            eig[0]
        )));
    }
    Ok(())
}

/// Minimum eigenvalue of the partial transpose on qubit B, and the PPT label.
/// `lambda_min >= 0` counts as separable.
pub fn label_ppt(rho: &ComplexMatrix) -> Result<(f64, bool)> {
    validate_density(rho)?;
    let pt = partial_transpose(rho, &TWO_QUBITS, 1)?;
    let lambda_min = hermitian_eigenvalues(&pt)?[0];
    Ok((lambda_min, lambda_min < 0.0))
}

/// Closed-form entanglement thresholds of the parametric families. G1 states
/// at multiples of pi/2 are mixtures of product states and never entangled.
pub fn analytic_label(family: StateFamily, p: f64, theta: f64) -> Result<bool> {
    match family {
        StateFamily::Werner => Ok(p > 1.0 / 3.0),
        StateFamily::G1Werner => Ok(p > 1.0 / 3.0 && g1_product_distance(theta) > 0.0),
        StateFamily::G2Werner => Ok(p > g2_threshold(theta)),
        StateFamily::General => Err(Error::Unsupported(
            "no analytic label for general states".into(),
        )),
    }
}

/// Distance from `theta` to the nearest multiple of pi/2, where the G1 pure
/// component is a product state.
pub fn g1_product_distance(theta: f64) -> f64 {
    let q = theta / FRAC_PI_2;
    (q - q.round()).abs() * FRAC_PI_2
}

/// Entanglement threshold in `p` of the G2 family: 1 / (1 + 2 sin(theta)).
pub fn g2_threshold(theta: f64) -> f64 {
    1.0 / (1.0 + 2.0 * theta.sin())
}

fn check_open(name: &str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if value.is_finite() && value > lo && value < hi {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!(
            "{name} = {value} not in ({lo}, {hi})"
        )))
    }
}

fn mix_with(pure: &[Complex64], p: f64, background: &ComplexMatrix) -> ComplexMatrix {
    let proj = ComplexMatrix::projector(pure);
    &proj.scale_real(p) + &background.scale_real(1.0 - p)
}

fn maximally_mixed() -> ComplexMatrix {
    ComplexMatrix::identity(4).scale_real(0.25)
}

/// p |psi><psi| + (1-p) I/4 with |psi> = (|00> + |11>)/sqrt(2).
pub fn gen_werner(p: f64) -> Result<DensityMatrix> {
    check_open("p", p, 0.0, 1.0)?;
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let rho = mix_with(&[h, zero, zero, h], p, &maximally_mixed());
    DensityMatrix::new(rho, StateFamily::Werner, Some(p), None, None)
}

/// p |psi_t><psi_t| + (1-p) (I/2 ⊗ rho_B) with |psi_t> = cos t |00> + sin t |11>
/// and rho_B = diag(cos^2 t, sin^2 t) the reduced state of qubit B.
pub fn gen_g1_werner(p: f64, theta: f64) -> Result<DensityMatrix> {
    check_open("p", p, 0.0, 1.0)?;
    check_open("theta", theta, 0.0, 2.0 * PI)?;
    let (s, c) = theta.sin_cos();
    let zero = Complex64::new(0.0, 0.0);
    let psi = [Complex64::new(c, 0.0), zero, zero, Complex64::new(s, 0.0)];
    let rho_b = ComplexMatrix::from_real_diag(&[c * c, s * s]);
    let background = kron(&ComplexMatrix::identity(2).scale_real(0.5), &rho_b);
    let rho = mix_with(&psi, p, &background);
    DensityMatrix::new(rho, StateFamily::G1Werner, Some(p), Some(theta), None)
}

/// p |psi><psi| + (1-p) I/4 with |psi> = cos(t/2) |00> + e^{i phi} sin(t/2) |11>.
pub fn gen_g2_werner(p: f64, theta: f64, phi: f64) -> Result<DensityMatrix> {
    check_open("p", p, 0.0, 1.0)?;
    check_open("theta", theta, 0.0, PI)?;
    check_open("phi", phi, 0.0, 2.0 * PI)?;
    let zero = Complex64::new(0.0, 0.0);
    let half = theta / 2.0;
    let psi = [
        Complex64::new(half.cos(), 0.0),
        zero,
        zero,
        Complex64::from_polar(half.sin(), phi),
    ];
    let rho = mix_with(&psi, p, &maximally_mixed());
    DensityMatrix::new(rho, StateFamily::G2Werner, Some(p), Some(theta), Some(phi))
}

/// sigma sigma^H / tr(sigma sigma^H) for a 4x4 complex Ginibre matrix sigma.
pub fn gen_general<R: Rng + ?Sized>(rng: &mut R) -> Result<DensityMatrix> {
    loop {
        let sigma = ComplexMatrix::from_fn(4, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let gram = sigma.matmul(&sigma.adjoint());
        let norm = trace(&gram).re;
        if norm < 1e-12 {
            continue;
        }
        // Symmetrize away roundoff so the stored matrix is Hermitian to the bit.
        let rho = (&gram + &gram.adjoint()).scale_real(0.5 / norm);
        return DensityMatrix::new(rho, StateFamily::General, None, None, None);
    }
}

/// Generator for record (or candidate) `index` of a dataset with `seed`.
/// Each index gets its own ChaCha stream, so records do not depend on
/// generation order.
pub fn record_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn uniform_open<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    loop {
        let x = lo + (hi - lo) * rng.random::<f64>();
        if x > lo && x < hi {
            return x;
        }
    }
}

/// Draws one state of a family, parameters uniform over their open ranges.
pub fn sample_state<R: Rng + ?Sized>(family: StateFamily, rng: &mut R) -> Result<DensityMatrix> {
    match family {
        StateFamily::Werner => gen_werner(uniform_open(rng, 0.0, 1.0)),
        StateFamily::G1Werner => {
            let p = uniform_open(rng, 0.0, 1.0);
            gen_g1_werner(p, uniform_open(rng, 0.0, 2.0 * PI))
        }
        StateFamily::G2Werner => {
            let p = uniform_open(rng, 0.0, 1.0);
            let theta = uniform_open(rng, 0.0, PI);
            gen_g2_werner(p, theta, uniform_open(rng, 0.0, 2.0 * PI))
        }
        StateFamily::General => gen_general(rng),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::OutOfRange(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<DensityMatrix>,
    pub seed: u64,
    pub family: StateFamily,
    pub split: Split,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn entangled_count(&self) -> usize {
        self.records.iter().filter(|r| r.entangled).count()
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }
}

/// Samples `size` states of `family`. With `balance` (general states only)
/// candidates are rejected until exactly floor(size/2) entangled and
/// ceil(size/2) separable states have been accepted.
pub fn sample_dataset(
    family: StateFamily,
    size: usize,
    seed: u64,
    balance: bool,
) -> Result<Dataset> {
    if size == 0 {
        return Err(Error::OutOfRange("dataset size must be at least 1".into()));
    }
    let mut records = Vec::with_capacity(size);
    if balance && family == StateFamily::General {
        let (mut want_ent, mut want_sep) = (size / 2, size - size / 2);
        let mut candidate = 0u64;
        while want_ent + want_sep > 0 {
            let state = sample_state(family, &mut record_rng(seed, candidate))?;
            candidate += 1;
            let quota = if state.entangled {
                &mut want_ent
            } else {
                &mut want_sep
            };
            if *quota > 0 {
                *quota -= 1;
                records.push(state);
            }
        }
    } else {
        for i in 0..size as u64 {
            records.push(sample_state(family, &mut record_rng(seed, i))?);
        }
    }
    Ok(Dataset {
        records,
        seed,
        family,
        split: Split::Train,
    })
}

const DATASET_MAGIC: &str = "# bcnn-dataset v1";

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Writes the dataset as CSV: a metadata comment, a column header, then one
/// record per line with 17 significant digits.
pub fn write_dataset<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    writeln!(
        out,
        "{DATASET_MAGIC} family={} seed={} split={}",
        ds.family,
        ds.seed,
        ds.split.as_str()
    )?;
    let mut header = vec!["family", "p", "theta", "phi", "lambda_min", "label"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    for i in 0..4 {
        for j in 0..4 {
            header.push(format!("re{i}{j}"));
            header.push(format!("im{i}{j}"));
        }
    }
    writeln!(out, "{}", header.join(","))?;
    for r in &ds.records {
        let mut fields = vec![
            r.family.tag().to_string(),
            fmt_opt(r.p),
            fmt_opt(r.theta),
            fmt_opt(r.phi),
            fmt_f64(r.lambda_min),
            r.label().to_string(),
        ];
        for z in r.matrix.as_slice() {
            fields.push(fmt_f64(z.re));
            fields.push(fmt_f64(z.im));
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|e| Error::Parse {
        line,
        msg: format!("'{field}': {e}"),
    })
}

fn parse_opt(field: &str, line: usize) -> Result<Option<f64>> {
    if field.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(field, line).map(Some)
    }
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<Dataset> {
    let mut lines = input.lines().enumerate();
    let (_, meta) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty dataset file".into(),
    })?;
    let meta = meta?;
    let rest = meta.strip_prefix(DATASET_MAGIC).ok_or(Error::Parse {
        line: 1,
        msg: "missing dataset header".into(),
    })?;
    let mut family = None;
    let mut seed = None;
    let mut split = Split::Train;
    for kv in rest.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or(Error::Parse {
            line: 1,
            msg: format!("bad field '{kv}'"),
        })?;
        match k {
            "family" => family = Some(v.parse::<StateFamily>()?),
            "seed" => {
                seed = Some(v.parse::<u64>().map_err(|e| Error::Parse {
                    line: 1,
                    msg: e.to_string(),
                })?)
            }
            "split" => split = v.parse()?,
            _ => {}
        }
    }
    let family = family.ok_or(Error::Parse {
        line: 1,
        msg: "missing family".into(),
    })?;
    let seed = seed.ok_or(Error::Parse {
        line: 1,
        msg: "missing seed".into(),
    })?;
    lines.next(); // column header

    let mut records = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 + 32 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 38 fields, got {}", fields.len()),
            });
        }
        let rec_family: StateFamily = fields[0].parse()?;
        let label = match fields[5].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("bad label '{other}'"),
                })
            }
        };
        let entries = fields[6..]
            .chunks(2)
            .map(|c| {
                Ok(Complex64::new(
                    parse_f64(c[0], lineno)?,
                    parse_f64(c[1], lineno)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let matrix = ComplexMatrix::from_vec(entries)?;
        validate_density(&matrix).map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        records.push(DensityMatrix {
            matrix,
            family: rec_family,
            p: parse_opt(fields[1], lineno)?,
            theta: parse_opt(fields[2], lineno)?,
            phi: parse_opt(fields[3], lineno)?,
            lambda_min: parse_f64(fields[4], lineno)?,
            entangled: label,
        });
    }
    Ok(Dataset {
        records,
        seed,
        family,
        split,
    })
}
