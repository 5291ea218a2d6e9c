//! Accuracy curves, error histograms, operator tables and the rounding retest.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{Architecture, ModelParams, PauliKernel};
use crate::states::{Dataset, DensityMatrix, StateFamily};
use crate::training::{evaluate, train, Misclassified, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub operator_count: usize,
    pub mean_accuracy: f64,
    pub std: f64,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyCurve {
    pub family: StateFamily,
    pub architecture: String,
    pub points: Vec<CurvePoint>,
}

impl AccuracyCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("m,mean_acc,std,seeds\n");
        for p in &self.points {
            let seeds: Vec<String> = p.seeds.iter().map(u64::to_string).collect();
            let _ = writeln!(
                s,
                "{},{:.16e},{:.16e},{}",
                p.operator_count,
                p.mean_accuracy,
                p.std,
                seeds.join(";")
            );
        }
        s
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Seed of repeat `r` at path count `m`.
pub fn repeat_seed(base_seed: u64, m: usize, r: usize) -> u64 {
    base_seed
        .wrapping_add(1000 * m as u64)
        .wrapping_add(r as u64)
}

/// Trains `repeats` fresh models per path count and records mean and
/// standard deviation of their test accuracy.
pub fn accuracy_curve(
    train_set: &Dataset,
    test_set: &Dataset,
    m_values: &[usize],
    repeats: usize,
    base_seed: u64,
    arch_for: impl Fn(usize) -> Architecture,
    cfg_for: impl Fn(usize, u64) -> TrainConfig,
) -> Result<AccuracyCurve> {
    if repeats == 0 {
        return Err(Error::OutOfRange("repeats must be at least 1".into()));
    }
    if m_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::OutOfRange(
            "path counts must be strictly increasing".into(),
        ));
    }
    let mut points = Vec::with_capacity(m_values.len());
    for &m in m_values {
        let arch = arch_for(m);
        let mut accs = Vec::with_capacity(repeats);
        let mut seeds = Vec::with_capacity(repeats);
        for r in 0..repeats {
            let seed = repeat_seed(base_seed, m, r);
            let (params, _) = train(train_set, &arch, &cfg_for(m, seed))?;
            accs.push(evaluate(&params, test_set)?.accuracy);
            seeds.push(seed);
        }
        let (mean_accuracy, std) = mean_std(&accs);
        points.push(CurvePoint {
            operator_count: m,
            mean_accuracy,
            std,
            seeds,
        });
    }
    let architecture = m_values
        .first()
        .map(|&m| arch_for(m).to_string())
        .unwrap_or_default();
    Ok(AccuracyCurve {
        family: train_set.family,
        architecture,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorAxis {
    P,
    ThetaP,
    LambdaMin,
}

impl FromStr for ErrorAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "p" => Ok(ErrorAxis::P),
            "theta-p" | "theta_p" | "thetap" => Ok(ErrorAxis::ThetaP),
            "lambda" | "lambda_min" | "lambda-min" => Ok(ErrorAxis::LambdaMin),
            other => Err(Error::Unsupported(format!(
                "unknown histogram axis '{other}'"
            ))),
        }
    }
}

/// Uniform bins over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bins {
    pub edges: Vec<f64>,
}

impl Bins {
    fn over(values: impl Iterator<Item = f64>, count: usize) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi <= lo {
            hi = lo + 1.0;
        }
        let edges = (0..=count)
            .map(|k| lo + (hi - lo) * k as f64 / count as f64)
            .collect();
        Bins { edges }
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn index(&self, v: f64) -> usize {
        let (lo, hi) = (self.edges[0], self.edges[self.len()]);
        let k = ((v - lo) / (hi - lo) * self.len() as f64).floor();
        (k.max(0.0) as usize).min(self.len() - 1)
    }
}

/// Histogram of misclassified vs. all test records. For the (theta, p) axis
/// the counts are stored theta-major: `counts[t * p_bins + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDistribution {
    pub axis: ErrorAxis,
    pub primary: Bins,
    /// Second axis (p) for [`ErrorAxis::ThetaP`].
    pub secondary: Option<Bins>,
    pub errors: Vec<usize>,
    pub totals: Vec<usize>,
}

fn axis_values(
    axis: ErrorAxis,
    p: Option<f64>,
    theta: Option<f64>,
    lambda_min: f64,
) -> Option<(f64, Option<f64>)> {
    match axis {
        ErrorAxis::P => p.map(|p| (p, None)),
        ErrorAxis::ThetaP => Some((theta?, Some(p?))),
        ErrorAxis::LambdaMin => Some((lambda_min, None)),
    }
}

pub const DEFAULT_BINS: usize = 50;

/// Bins `errors` against the full `population` they were drawn from, with
/// `bins` uniform bins over the population's observed range on each axis.
pub fn error_distribution(
    errors: &[Misclassified],
    population: &[DensityMatrix],
    axis: ErrorAxis,
    bins: usize,
) -> Result<ErrorDistribution> {
    if bins == 0 {
        return Err(Error::OutOfRange("need at least one bin".into()));
    }
    let missing =
        || Error::Unsupported(format!("records do not carry the values for axis {axis:?}"));
    let pop: Vec<(f64, Option<f64>)> = population
        .iter()
        .map(|r| axis_values(axis, r.p, r.theta, r.lambda_min).ok_or_else(missing))
        .collect::<Result<_>>()?;
    let errs: Vec<(f64, Option<f64>)> = errors
        .iter()
        .map(|e| axis_values(axis, e.p, e.theta, e.lambda_min).ok_or_else(missing))
        .collect::<Result<_>>()?;

    let primary = Bins::over(pop.iter().chain(&errs).map(|v| v.0), bins);
    let secondary = (axis == ErrorAxis::ThetaP)
        .then(|| Bins::over(pop.iter().chain(&errs).filter_map(|v| v.1), bins));
    let cells = primary.len() * secondary.as_ref().map_or(1, Bins::len);
    let cell = |(a, b): (f64, Option<f64>)| {
        let i = primary.index(a);
        match (&secondary, b) {
            (Some(sb), Some(b)) => i * sb.len() + sb.index(b),
            _ => i,
        }
    };
    let mut totals = vec![0; cells];
    let mut error_counts = vec![0; cells];
    for &v in &pop {
        totals[cell(v)] += 1;
    }
    for &v in &errs {
        error_counts[cell(v)] += 1;
    }
    Ok(ErrorDistribution {
        axis,
        primary,
        secondary,
        errors: error_counts,
        totals,
    })
}

impl ErrorDistribution {
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        match &self.secondary {
            None => {
                s.push_str("bin_lo,bin_hi,errors,total\n");
                for k in 0..self.primary.len() {
                    let _ = writeln!(
                        s,
                        "{:.16e},{:.16e},{},{}",
                        self.primary.edges[k],
                        self.primary.edges[k + 1],
                        self.errors[k],
                        self.totals[k]
                    );
                }
            }
            Some(sb) => {
                s.push_str("theta_lo,theta_hi,p_lo,p_hi,errors,total\n");
                for t in 0..self.primary.len() {
                    for k in 0..sb.len() {
                        let c = t * sb.len() + k;
                        let _ = writeln!(
                            s,
                            "{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
                            self.primary.edges[t],
                            self.primary.edges[t + 1],
                            sb.edges[k],
                            sb.edges[k + 1],
                            self.errors[c],
                            self.totals[c]
                        );
                    }
                }
            }
        }
        s
    }

    /// Index of the cell holding the most errors (first one on ties).
    pub fn modal_bin(&self) -> usize {
        let max = self.errors.iter().copied().max().unwrap_or(0);
        self.errors.iter().position(|&e| e == max).unwrap_or(0)
    }
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// (median |lambda_min| over errors, median |lambda_min| over the population).
pub fn boundary_medians(
    errors: &[Misclassified],
    population: &[DensityMatrix],
) -> (Option<f64>, Option<f64>) {
    let mut e: Vec<f64> = errors.iter().map(|e| e.lambda_min.abs()).collect();
    let mut p: Vec<f64> = population.iter().map(|r| r.lambda_min.abs()).collect();
    (median(&mut e), median(&mut p))
}

/// One operator `M1 ⊗ M2` of a trained model in `[X, Y, Z, I]` coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorRow {
    pub path: usize,
    /// Index of the second-layer kernel (qubit 1).
    pub kernel2: usize,
    /// Index of the first-layer kernel (qubit 2).
    pub kernel1: usize,
    pub qubit1: [f64; 4],
    pub qubit2: [f64; 4],
}

/// Every kernel combination except the constant `I ⊗ I` of two fixed identity kernels.
pub fn extract_operators(params: &ModelParams) -> Vec<OperatorRow> {
    let mut rows = Vec::new();
    for (p, path) in params.paths.iter().enumerate() {
        for (j, k2) in path.layer2.iter().enumerate() {
            for (i, k1) in path.layer1.iter().enumerate() {
                if k1.fixed_identity && k2.fixed_identity {
                    continue;
                }
                rows.push(OperatorRow {
                    path: p,
                    kernel2: j,
                    kernel1: i,
                    qubit1: k2.coeffs,
                    qubit2: k1.coeffs,
                });
            }
        }
    }
    rows
}

pub fn operators_to_csv(
    family: StateFamily,
    rows: &[OperatorRow],
    decimals: Option<usize>,
) -> String {
    let mut s = String::from("state,operator,path,kernel2,kernel1,X1,Y1,Z1,I1,X2,Y2,Z2,I2\n");
    let fmt = |v: f64| match decimals {
        Some(d) => format!("{v:.d$}"),
        None => format!("{v:.16e}"),
    };
    for (n, r) in rows.iter().enumerate() {
        let coeffs: Vec<String> = r.qubit1.iter().chain(&r.qubit2).map(|&v| fmt(v)).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            family,
            n + 1,
            r.path,
            r.kernel2,
            r.kernel1,
            coeffs.join(",")
        );
    }
    s
}

pub fn operators_from_csv(text: &str) -> Result<Vec<OperatorRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let err = |msg: String| Error::Parse { line: i + 1, msg };
        if f.len() != 13 {
            return Err(err(format!("expected 13 fields, got {}", f.len())));
        }
        let idx = |s: &str| s.parse::<usize>().map_err(|e| err(e.to_string()));
        let real = |s: &str| s.parse::<f64>().map_err(|e| err(e.to_string()));
        let mut c = [0.0; 8];
        for (k, v) in f[5..].iter().enumerate() {
            c[k] = real(v)?;
        }
        rows.push(OperatorRow {
            path: idx(f[2])?,
            kernel2: idx(f[3])?,
            kernel1: idx(f[4])?,
            qubit1: [c[0], c[1], c[2], c[3]],
            qubit2: [c[4], c[5], c[6], c[7]],
        });
    }
    Ok(rows)
}

/// Writes the kernels listed in an operator table back into `params`.
pub fn apply_operators(params: &ModelParams, rows: &[OperatorRow]) -> Result<ModelParams> {
    let mut out = params.clone();
    for r in rows {
        let path = out.paths.get_mut(r.path).ok_or_else(|| {
            Error::ShapeMismatch(format!("operator refers to missing path {}", r.path))
        })?;
        let set = |k: &mut PauliKernel, c: [f64; 4]| {
            if !k.fixed_identity {
                k.coeffs = c;
            }
        };
        let k2 = path
            .layer2
            .get_mut(r.kernel2)
            .ok_or_else(|| Error::ShapeMismatch("kernel index".into()))?;
        set(k2, r.qubit1);
        let k1 = path
            .layer1
            .get_mut(r.kernel1)
            .ok_or_else(|| Error::ShapeMismatch("kernel index".into()))?;
        set(k1, r.qubit2);
    }
    Ok(out)
}

/// Rounds `x` to `decimals` places via its decimal representation.
pub fn round_to(x: f64, decimals: usize) -> f64 {
    format!("{x:.decimals$}")
        .parse()
        .expect("formatted float parses")
}

/// Copy of `params` with every trainable Pauli coefficient rounded; the dense head is untouched.
pub fn round_kernels(params: &ModelParams, decimals: usize) -> ModelParams {
    let mut out = params.clone();
    for path in &mut out.paths {
        for k in path.layer1.iter_mut().chain(path.layer2.iter_mut()) {
            if !k.fixed_identity {
                for c in &mut k.coeffs {
                    *c = round_to(*c, decimals);
                }
            }
        }
    }
    out
}

/// (accuracy as trained, accuracy with kernels rounded to `decimals` places).
pub fn round_and_retest(
    params: &ModelParams,
    dataset: &Dataset,
    decimals: usize,
) -> Result<(f64, f64)> {
    let original = evaluate(params, dataset)?.accuracy;
    let rounded = evaluate(&round_kernels(params, decimals), dataset)?.accuracy;
    Ok((original, rounded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::model_forward;
    use crate::states::sample_dataset;
    use crate::training::init_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(arch: &Architecture, seed: u64) -> ModelParams {
        ModelParams::init(arch, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn identity_only_model_exports_identity_rows() {
        let arch = Architecture::new(2, 1, 1, false, &[3]).unwrap();
        let mut p = params(&arch, 1);
        for path in &mut p.paths {
            path.layer1[0].coeffs = [0.0, 0.0, 0.0, 1.0];
            path.layer2[0].coeffs = [0.0, 0.0, 0.0, 1.0];
        }
        let rows = extract_operators(&p);
        assert_eq!(rows.len(), 2);
        for r in rows {
            assert_eq!(r.qubit1, [0.0, 0.0, 0.0, 1.0]);
            assert_eq!(r.qubit2, [0.0, 0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn fixed_pairs_are_skipped() {
        let p = params(&Architecture::general(1, 4), 2);
        assert_eq!(extract_operators(&p).len(), 15);
        let p = params(&Architecture::general(9, 2), 2);
        assert_eq!(extract_operators(&p).len(), 27);
    }

    #[test]
    fn operator_table_round_trip_rebuilds_model() {
        let arch = Architecture::new(3, 2, 2, true, &[6]).unwrap();
        let p = params(&arch, 3);
        let csv = operators_to_csv(StateFamily::General, &extract_operators(&p), None);
        assert!(csv.starts_with("state,operator,path,kernel2,kernel1,X1,Y1,Z1,I1,X2,Y2,Z2,I2\n"));
        let rows = operators_from_csv(&csv).unwrap();
        let mut blank = p.clone();
        for path in &mut blank.paths {
            for k in path.layer1.iter_mut().chain(path.layer2.iter_mut()) {
                if !k.fixed_identity {
                    k.coeffs = [0.0; 4];
                }
            }
        }
        let rebuilt = apply_operators(&blank, &rows).unwrap();
        let ds = sample_dataset(StateFamily::General, 20, 1, false).unwrap();
        for r in &ds.records {
            let a = model_forward(r, &p).unwrap();
            let b = model_forward(r, &rebuilt).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn two_decimal_table_format() {
        let arch = Architecture::parametric(1);
        let mut p = params(&arch, 4);
        p.paths[0].layer2[0].coeffs = [-1.26, -0.97, -1.40, 0.61];
        p.paths[0].layer1[0].coeffs = [0.49, -0.18, 1.63, 0.62];
        let csv = operators_to_csv(StateFamily::Werner, &extract_operators(&p), Some(2));
        assert_eq!(
            csv.lines().nth(1).unwrap(),
            "Werner,1,0,0,0,-1.26,-0.97,-1.40,0.61,0.49,-0.18,1.63,0.62"
        );
    }

    #[test]
    fn rounding_examples() {
        assert_eq!(round_to(1.234, 2), 1.23);
        assert_eq!(round_to(-0.4, 0), 0.0);
        for x in [0.1, 1.0 / 3.0, -std::f64::consts::E, 123.456] {
            assert_eq!(round_to(x, 17), x);
        }
    }

    #[test]
    fn retest_with_full_precision_is_identical() {
        let ds = sample_dataset(StateFamily::G2Werner, 200, 3, false).unwrap();
        let p = init_params(
            &Architecture::new(2, 1, 1, false, &[8]).unwrap(),
            &TrainConfig::new(0.1, 0.9, 0.9, 1, 1, 2),
        )
        .unwrap();
        let (a, b) = round_and_retest(&p, &ds, 17).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_decimals_zeroes_small_coefficients() {
        let ds = sample_dataset(StateFamily::Werner, 100, 3, false).unwrap();
        let arch = Architecture::new(1, 1, 1, false, &[8]).unwrap();
        let mut p = params(&arch, 5);
        p.paths[0].layer1[0].coeffs = [0.3, -0.2, 0.45, 0.1];
        p.paths[0].layer2[0].coeffs = [0.6, -0.2, 1.7, 0.1];
        let rounded = round_kernels(&p, 0);
        assert_eq!(rounded.paths[0].layer1[0].coeffs, [0.0; 4]);
        assert_eq!(rounded.paths[0].layer2[0].coeffs, [1.0, 0.0, 2.0, 0.0]);
        // a zero kernel makes the feature vanish: direct recomputation with feature 0
        let mut zeroed = p.clone();
        zeroed.paths[0].layer1[0].coeffs = [0.0; 4];
        let (_, r) = round_and_retest(&p, &ds, 0).unwrap();
        assert_eq!(r, evaluate(&zeroed, &ds).unwrap().accuracy);
    }

    #[test]
    fn empty_errors_give_zero_histogram() {
        let ds = sample_dataset(StateFamily::General, 100, 1, true).unwrap();
        let h = error_distribution(&[], &ds.records, ErrorAxis::LambdaMin, DEFAULT_BINS).unwrap();
        assert_eq!(h.errors, vec![0; 50]);
        assert_eq!(h.totals.iter().sum::<usize>(), 100);
        let h = error_distribution(&[], &[], ErrorAxis::P, 10).unwrap();
        assert_eq!(h.errors, vec![0; 10]);
        assert!(h.primary.edges.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn axis_errors() {
        let ds = sample_dataset(StateFamily::General, 10, 1, true).unwrap();
        assert!(error_distribution(&[], &ds.records, ErrorAxis::P, 5).is_err());
        assert!("velocity".parse::<ErrorAxis>().is_err());
        assert_eq!(
            "lambda_min".parse::<ErrorAxis>().unwrap(),
            ErrorAxis::LambdaMin
        );
    }

    #[test]
    fn theta_p_histogram_shape() {
        let ds = sample_dataset(StateFamily::G2Werner, 500, 1, false).unwrap();
        let errs: Vec<Misclassified> = ds
            .records
            .iter()
            .enumerate()
            .take(7)
            .map(|(index, r)| Misclassified {
                index,
                p: r.p,
                theta: r.theta,
                phi: r.phi,
                lambda_min: r.lambda_min,
                entangled: r.entangled,
                probability: 0.5,
            })
            .collect();
        let h = error_distribution(&errs, &ds.records, ErrorAxis::ThetaP, 10).unwrap();
        assert_eq!(h.errors.len(), 100);
        assert_eq!(h.errors.iter().sum::<usize>(), 7);
        assert_eq!(h.totals.iter().sum::<usize>(), 500);
        assert!(h.errors.iter().zip(&h.totals).all(|(e, t)| e <= t));
        assert_eq!(h.to_csv().lines().count(), 101);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
    }
}
