use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use bcnn_core::analysis::{
    error_distribution, extract_operators, operators_to_csv, round_and_retest, ErrorAxis,
    DEFAULT_BINS,
};
use bcnn_core::model::{read_model, write_model, Architecture, ModelFile};
use bcnn_core::states::{read_dataset, sample_dataset, write_dataset, Dataset, Split, StateFamily};
use bcnn_core::training::{evaluate, train_with_progress, Evaluation, TrainConfig};

use crate::config::Config;
use crate::error::CliError;

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CliError::Missing {
            path: path.to_path_buf(),
            source,
        })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    Ok(read_dataset(open(path)?)?)
}

pub fn load_model(path: &Path) -> Result<ModelFile, CliError> {
    Ok(read_model(open(path)?)?)
}

fn check_family(model: StateFamily, data: StateFamily) -> Result<(), CliError> {
    if model != data {
        return Err(CliError::Incompatible(format!(
            "model was trained on {model} states, dataset holds {data} states"
        )));
    }
    Ok(())
}

pub struct GenerateArgs {
    pub family: StateFamily,
    pub size: usize,
    pub seed: u64,
    pub balance: bool,
    pub split: Split,
}

pub fn generate(args: &GenerateArgs, out: &Path) -> Result<Dataset, CliError> {
    if args.size == 0 {
        return Err(CliError::Config("dataset size must be at least 1".into()));
    }
    let ds =
        sample_dataset(args.family, args.size, args.seed, args.balance)?.with_split(args.split);
    let mut f = create(out)?;
    write_dataset(&ds, &mut f)?;
    f.flush()?;
    Ok(ds)
}

/// Everything `train` needs, resolved from a merged config.
#[derive(Debug, Clone)]
pub struct TrainPlan {
    pub family: StateFamily,
    pub seed: u64,
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub train_size: usize,
    pub test_size: usize,
    pub balance: bool,
    pub arch: Architecture,
    pub cfg: TrainConfig,
}

impl TrainPlan {
    pub fn from_config(cfg: &Config) -> Result<Self, CliError> {
        let seed: u64 = cfg.require("run.seed")?;
        let family: StateFamily = cfg.require("data.family")?;
        let hidden = cfg
            .get_list("model.hidden")?
            .ok_or_else(|| CliError::Config("missing required key 'model.hidden'".into()))?;
        let arch = Architecture::new(
            cfg.require("model.m")?,
            cfg.require("model.n1")?,
            cfg.require("model.n2")?,
            cfg.get_bool("model.fixed_identity")?.unwrap_or(false),
            &hidden,
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        let train_cfg = TrainConfig::new(
            cfg.require("train.lr")?,
            cfg.require("train.beta1")?,
            cfg.require("train.beta2")?,
            cfg.require("train.batch_size")?,
            cfg.require("train.epochs")?,
            seed,
        )
        .with_kernel_scale(cfg.get("train.kernel_scale")?.unwrap_or(1.0));
        train_cfg
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let plan = TrainPlan {
            family,
            seed,
            train_path: cfg.get_str("data.train").map(PathBuf::from),
            test_path: cfg.get_str("data.test").map(PathBuf::from),
            train_size: cfg.get("data.train_size")?.unwrap_or(30_000),
            test_size: cfg.get("data.test_size")?.unwrap_or(10_000),
            balance: cfg
                .get_bool("data.balance")?
                .unwrap_or(family == StateFamily::General),
            arch,
            cfg: train_cfg,
        };
        if plan.train_size == 0 || plan.test_size == 0 {
            return Err(CliError::Config("dataset sizes must be at least 1".into()));
        }
        Ok(plan)
    }

    /// Seed of the generated training split; the test split uses the next one.
    pub fn data_seed(&self, split: Split) -> u64 {
        match split {
            Split::Train => self.seed,
            Split::Test => self.seed.wrapping_add(1),
        }
    }

    fn dataset(&self, split: Split) -> Result<Dataset, CliError> {
        let (path, size) = match split {
            Split::Train => (&self.train_path, self.train_size),
            Split::Test => (&self.test_path, self.test_size),
        };
        let ds = match path {
            Some(p) => load_dataset(p)?,
            None => sample_dataset(self.family, size, self.data_seed(split), self.balance)?
                .with_split(split),
        };
        if ds.family != self.family {
            return Err(CliError::Incompatible(format!(
                "{} split holds {} states, config asks for {}",
                split.as_str(),
                ds.family,
                self.family
            )));
        }
        Ok(ds)
    }

    pub fn manifest(&self, cfg: &Config, test_accuracy: f64) -> String {
        let mut s = String::from("# bcnn run manifest\n");
        let _ = writeln!(s, "architecture = {}", self.arch);
        let source = |p: &Option<PathBuf>, split| match p {
            Some(p) => format!("file {}", p.display()),
            None => format!("generated seed={}", self.data_seed(split)),
        };
        let _ = writeln!(s, "train_data = {}", source(&self.train_path, Split::Train));
        let _ = writeln!(s, "test_data = {}", source(&self.test_path, Split::Test));
        let _ = writeln!(s, "init_seed = {} (stream 0)", self.cfg.seed);
        let _ = writeln!(s, "shuffle_seed = {} (stream 1)", self.cfg.seed);
        let _ = writeln!(s, "adam_epsilon = {:e}", self.cfg.epsilon);
        let _ = writeln!(s, "test_accuracy = {test_accuracy:.6}");
        s.push_str("\n# resolved config\n");
        s.push_str(&cfg.render());
        s
    }
}

pub struct TrainOutcome {
    pub train_accuracy: f64,
    pub test: Evaluation,
}

pub fn train(cfg: &Config, out_dir: &Path, verbose: bool) -> Result<TrainOutcome, CliError> {
    let plan = TrainPlan::from_config(cfg)?;
    let train_set = plan.dataset(Split::Train)?;
    let test_set = plan.dataset(Split::Test)?;
    let (params, history) = train_with_progress(&train_set, &plan.arch, &plan.cfg, |e| {
        if verbose {
            eprintln!(
                "epoch {:>3}  loss {:.6}  accuracy {:.4}  {:.1}s",
                e.epoch, e.loss, e.accuracy, e.seconds
            );
        }
    })?;
    let test = evaluate(&params, &test_set)?;

    fs::create_dir_all(out_dir)?;
    let mut f = create(&out_dir.join("model.txt"))?;
    write_model(&params, plan.family, &mut f)?;
    f.flush()?;
    write_text(&out_dir.join("history.csv"), &history.to_csv())?;
    write_text(&out_dir.join("timing.csv"), &history.timing_csv())?;
    write_text(
        &out_dir.join("manifest.txt"),
        &plan.manifest(cfg, test.accuracy),
    )?;
    let train_accuracy = history.epochs.last().map_or(f64::NAN, |e| e.accuracy);
    Ok(TrainOutcome {
        train_accuracy,
        test,
    })
}

pub fn errors_csv(eval: &Evaluation) -> String {
    let mut s = String::from("index,p,theta,phi,lambda_min,label,probability\n");
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.16e}")).unwrap_or_default();
    for e in &eval.errors {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.16e},{},{:.16e}",
            e.index,
            opt(e.p),
            opt(e.theta),
            opt(e.phi),
            e.lambda_min,
            u8::from(e.entangled),
            e.probability
        );
    }
    s
}

pub fn eval(model: &Path, data: &Path, out_dir: Option<&Path>) -> Result<Evaluation, CliError> {
    let model = load_model(model)?;
    let ds = load_dataset(data)?;
    check_family(model.family, ds.family)?;
    let ev = evaluate(&model.params, &ds)?;
    if let Some(dir) = out_dir {
        write_text(&dir.join("errors.csv"), &errors_csv(&ev))?;
    }
    Ok(ev)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    CurvePoint,
    Errors,
    Operators,
    RoundRetest,
}

impl std::str::FromStr for ReportKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "curve-point" => Ok(ReportKind::CurvePoint),
            "errors" => Ok(ReportKind::Errors),
            "operators" => Ok(ReportKind::Operators),
            "round-retest" => Ok(ReportKind::RoundRetest),
            other => Err(format!("unknown report kind '{other}'")),
        }
    }
}

pub struct ReportArgs {
    pub kind: ReportKind,
    pub axis: Option<ErrorAxis>,
    pub bins: Option<usize>,
    pub decimals: Option<usize>,
}

pub fn default_axis(family: StateFamily) -> ErrorAxis {
    match family {
        StateFamily::Werner | StateFamily::G1Werner => ErrorAxis::P,
        StateFamily::G2Werner => ErrorAxis::ThetaP,
        StateFamily::General => ErrorAxis::LambdaMin,
    }
}

/// Runs one report, writes its CSV into `out_dir` and returns a one-line summary.
pub fn report(
    model: &Path,
    data: &Path,
    args: &ReportArgs,
    out_dir: &Path,
) -> Result<String, CliError> {
    let model = load_model(model)?;
    let ds = load_dataset(data)?;
    check_family(model.family, ds.family)?;
    let params = &model.params;
    let (file, csv, summary) = match args.kind {
        ReportKind::CurvePoint => {
            let acc = evaluate(params, &ds)?.accuracy;
            let csv = format!(
                "family,architecture,m,accuracy\n{},{},{},{acc:.16e}\n",
                ds.family, params.arch, params.arch.m
            );
            (
                "curve_point.csv",
                csv,
                format!("m={} accuracy={acc:.4}", params.arch.m),
            )
        }
        ReportKind::Errors => {
            let ev = evaluate(params, &ds)?;
            let axis = args.axis.unwrap_or_else(|| default_axis(ds.family));
            let hist = error_distribution(
                &ev.errors,
                &ds.records,
                axis,
                args.bins.unwrap_or(DEFAULT_BINS),
            )
            .map_err(|e| CliError::Config(e.to_string()))?;
            (
                "errors.csv",
                hist.to_csv(),
                format!("{} errors out of {} records", ev.errors.len(), ds.len()),
            )
        }
        ReportKind::Operators => {
            let rows = extract_operators(params);
            let n = rows.len();
            (
                "operators.csv",
                operators_to_csv(ds.family, &rows, args.decimals),
                format!("{n} operators"),
            )
        }
        ReportKind::RoundRetest => {
            let d = args.decimals.unwrap_or(2);
            let (orig, rounded) = round_and_retest(params, &ds, d)?;
            let drop = 100.0 * (orig - rounded);
            let csv = format!(
                "decimals,original,rounded,drop_pp\n{d},{orig:.16e},{rounded:.16e},{drop:.16e}\n"
            );
            (
                "round_retest.csv",
                csv,
                format!("original {orig:.4} rounded {rounded:.4} drop {drop:.2} pp"),
            )
        }
    };
    fs::create_dir_all(out_dir)?;
    write_text(&out_dir.join(file), &csv)?;
    Ok(summary)
}
