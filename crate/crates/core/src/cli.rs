//! Command-line front end. Every command writes its artifacts plus a
//! `manifest.json` that `replay` can re-run.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::aggregate::{Aggregator, BtlConfig};
use crate::dataset::{
    generate_heldout, generate_synthetic, Dataset, QualityDist, SynthConfig, SystemTruth,
};
use crate::error::{Error, Result};
use crate::metrics::paired_t_test;
use crate::pairgen::{generate, realize_plan, write_pairs_csv, PairMethod};
use crate::preference::{
    fit_eer_thresholds, thresholds_er, thresholds_nd, ThresholdMethod, Thresholds,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::simulate::{
    read_rows_csv, run_bound_simulation, run_model_eval, EvalConfig, SimConfig, SimRow, SimSummary,
};
use crate::trainer::{dev_preferences, train, Objective, ScoreModel, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUN_ERRORS: i32 = 2;
pub const EXIT_IO: i32 = 3;

const MANIFEST: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(
    name = "prefrank",
    version,
    about = "Preference-based system ranking from per-utterance scores"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic listening test and its latent system qualities.
    Synth(SynthArgs),
    /// Generate a pair plan and, given a dataset, realize it into rating pairs.
    Plan(PlanArgs),
    /// Monte-Carlo performance bound of a pair-generation and aggregation setup.
    Simulate(SimulateArgs),
    /// Train the utterance score model.
    Train(TrainArgs),
    /// Evaluate a trained model's system ranking over regenerated test pairs.
    Eval(EvalArgs),
    /// Paired t-test between the SRCC rows of two result files.
    Ttest(TtestArgs),
    /// Draw summary curves from one or more summary CSVs as an SVG chart.
    Chart(ChartArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

fn parse<T: FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_quality(s: &str) -> std::result::Result<QualityDist, String> {
    let (kind, rest) = s
        .split_once(':')
        .ok_or("expected uniform:LOW,HIGH or normal:MEAN,SD")?;
    let nums: Vec<f64> = rest
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    match (kind, nums.as_slice()) {
        ("uniform", &[low, high]) => Ok(QualityDist::Uniform { low, high }),
        ("normal", &[mean, sd]) => Ok(QualityDist::Normal { mean, sd }),
        _ => Err("expected uniform:LOW,HIGH or normal:MEAN,SD".into()),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Base random seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses every core. Outputs do not depend on it.
    #[arg(long, default_value_t = 0)]
    #[serde(skip)]
    pub jobs: usize,
    /// Output directory.
    #[arg(short = 'o', long = "out", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BtlArgs {
    #[arg(long = "btl-max-iter", default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long = "btl-tol", default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long = "btl-prior", default_value_t = 0.01)]
    pub prior: f64,
}

impl BtlArgs {
    fn config(&self) -> BtlConfig {
        BtlConfig {
            max_iter: self.max_iter,
            tol: self.tol,
            prior: self.prior,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 175, value_parser = clap::value_parser!(u64).range(1..))]
    pub systems: u64,
    #[arg(long, default_value_t = 28, value_parser = clap::value_parser!(u64).range(1..))]
    pub utterances: u64,
    #[arg(long = "ratings-per-utterance", default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub ratings_per_utterance: u64,
    #[arg(long, default_value_t = 288, value_parser = clap::value_parser!(u64).range(1..))]
    pub listeners: u64,
    /// Latent quality distribution: uniform:LOW,HIGH or normal:MEAN,SD.
    #[arg(long, default_value = "uniform:1,5", value_parser = parse_quality)]
    pub quality: QualityDist,
    #[arg(long = "bias-sd", default_value_t = 0.3)]
    pub bias_sd: f64,
    #[arg(long = "noise-sd", default_value_t = 0.5)]
    pub noise_sd: f64,
    /// Keep continuous scores instead of rounding to integers.
    #[arg(long = "no-quantize")]
    pub no_quantize: bool,
    /// Also write dev.csv with this many fresh ratings per utterance.
    #[arg(long = "dev-ratings")]
    pub dev_ratings: Option<usize>,
    /// Draw dev ratings from a new listener pool instead of the original one.
    #[arg(long = "fresh-listeners", requires = "dev_ratings")]
    pub fresh_listeners: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PlanArgs {
    #[arg(long, value_parser = parse::<PairMethod>)]
    pub method: PairMethod,
    #[arg(long)]
    pub k: usize,
    /// Number of systems; taken from --data when omitted.
    #[arg(long, required_unless_present = "data")]
    pub systems: Option<usize>,
    /// Dataset CSV; when given the plan is also realized into pairs.csv.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long = "same-listener")]
    pub same_listener: bool,
    /// Fail instead of falling back when a pair has no common listener.
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Two-column truth CSV; defaults to the dataset's system means.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, value_parser = parse::<PairMethod>)]
    pub method: PairMethod,
    #[arg(long = "agg", default_value = "dc", value_parser = parse::<Aggregator>)]
    pub aggregator: Aggregator,
    /// Comma-separated comparison counts.
    #[arg(long, value_delimiter = ',', required = true)]
    pub k: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
    #[arg(long = "same-listener")]
    pub same_listener: bool,
    #[arg(long)]
    pub strict: bool,
    /// Also write chart.svg of the summary.
    #[arg(long)]
    pub svg: bool,
    #[command(flatten)]
    pub btl: BtlArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Training ratings on the 1-5 scale; normalized before training.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "preference", value_parser = parse::<Objective>)]
    pub objective: Objective,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long = "pairs-per-epoch")]
    pub pairs_per_epoch: Option<usize>,
    #[arg(long = "batch", default_value_t = 64)]
    pub batch_size: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    /// Directory holding theta.csv and bias.csv.
    #[arg(long)]
    pub model: PathBuf,
    /// Test ratings.
    #[arg(long)]
    pub data: PathBuf,
    /// Two-column truth CSV; defaults to the test set's system means.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value = "bs", value_parser = parse::<PairMethod>)]
    pub method: PairMethod,
    /// Comparisons per repeat; defaults to N(N-1), two rounds of every pair.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_parser = parse::<ThresholdMethod>)]
    pub threshold: Option<ThresholdMethod>,
    #[arg(long = "agg", default_value = "dc", value_parser = parse::<Aggregator>)]
    pub aggregator: Aggregator,
    /// Ratings used to fit EER thresholds.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Same-listener pairs drawn from --dev; defaults to its rating count.
    #[arg(long = "dev-pairs")]
    pub dev_pairs: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub repeats: usize,
    #[arg(long = "same-listener")]
    pub same_listener: bool,
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub btl: BtlArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TtestArgs {
    pub a: PathBuf,
    pub b: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ChartArgs {
    /// Summary CSVs; each configuration becomes one line.
    #[arg(required = true)]
    pub summaries: Vec<PathBuf>,
    #[arg(short = 'o', long = "out", default_value = "chart.svg")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write to this directory instead of the recorded one.
    #[arg(short = 'o', long = "out")]
    pub out: Option<PathBuf>,
    /// Worker threads for the replay.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name; `replay` parses these again.
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    pub duration_secs: f64,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(File::open(path)?)?)
    }
}

/// What a command produced, before the manifest is written.
struct Outcome {
    config: serde_json::Value,
    inputs: BTreeMap<String, PathBuf>,
    outputs: Vec<PathBuf>,
    run_errors: usize,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn out_dir(common: &Common) -> Result<&Path> {
    fs::create_dir_all(&common.out)?;
    Ok(&common.out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn load_truth(truth: &Option<PathBuf>, ds: &Dataset) -> Result<SystemTruth> {
    match truth {
        Some(p) => SystemTruth::load_csv(p),
        None => ds.system_truth(),
    }
}

fn inputs<const N: usize>(items: [(&str, Option<&PathBuf>); N]) -> BTreeMap<String, PathBuf> {
    items
        .into_iter()
        .filter_map(|(k, v)| v.map(|p| (k.to_owned(), p.clone())))
        .collect()
}

fn cmd_synth(a: &SynthArgs) -> Result<Outcome> {
    let cfg = SynthConfig {
        n_systems: a.systems as usize,
        utterances_per_system: a.utterances as usize,
        ratings_per_utterance: a.ratings_per_utterance as usize,
        n_listeners: a.listeners as usize,
        system_quality: a.quality,
        listener_bias_sd: a.bias_sd,
        noise_sd: a.noise_sd,
        quantize: !a.no_quantize,
        seed: a.common.seed,
    };
    cfg.validate()?;
    let data = generate_synthetic(&cfg)?;
    let dir = out_dir(&a.common)?;
    let ratings = dir.join("ratings.csv");
    let latent = dir.join("latent.csv");
    data.dataset.save_csv(&ratings)?;
    data.latent.save_csv(&latent)?;
    let mut outputs = vec![ratings, latent];
    if let Some(r) = a.dev_ratings {
        let dev = generate_heldout(
            &data,
            r,
            a.fresh_listeners,
            derive_seed(a.common.seed, &[1]),
        )?;
        let path = dir.join("dev.csv");
        dev.save_csv(&path)?;
        outputs.push(path);
    }
    Ok(Outcome {
        config: serde_json::to_value(&cfg)?,
        inputs: BTreeMap::new(),
        outputs,
        run_errors: 0,
    })
}

fn cmd_plan(a: &PlanArgs) -> Result<Outcome> {
    let ds = a.data.as_ref().map(Dataset::load_csv).transpose()?;
    let n = match (&ds, a.systems) {
        (Some(d), Some(n)) if d.n_systems() != n => {
            return Err(Error::invalid(format!(
                "--systems {n} but the dataset has {}",
                d.n_systems()
            )))
        }
        (Some(d), _) => d.n_systems(),
        (None, Some(n)) => n,
        (None, None) => return Err(Error::invalid("give --systems or --data")),
    };
    let mut rng = rng_from_seed(a.common.seed);
    let plan = generate(a.method, n, a.k, &mut rng)?;
    let dir = out_dir(&a.common)?;
    let labels: Vec<String> = match &ds {
        Some(d) => d.systems().to_vec(),
        None => (0..n).map(|i| i.to_string()).collect(),
    };
    let plan_path = dir.join("plan.csv");
    let mut w = create(&plan_path)?;
    plan.write_csv(&mut w, &labels)?;
    w.flush()?;
    let mut outputs = vec![plan_path];
    let mut fallbacks = 0;
    if let Some(d) = &ds {
        let real = realize_plan(&plan, d, a.same_listener, a.strict, &mut rng)?;
        fallbacks = real.fallbacks;
        let path = dir.join("pairs.csv");
        let mut w = create(&path)?;
        write_pairs_csv(&mut w, d, &real.pairs)?;
        w.flush()?;
        outputs.push(path);
    }
    if fallbacks > 0 {
        eprintln!("{fallbacks} pairs had no common listener and were sampled unconstrained");
    }
    Ok(Outcome {
        config: serde_json::to_value(a)?,
        inputs: inputs([("data", a.data.as_ref())]),
        outputs,
        run_errors: 0,
    })
}

fn write_results(dir: &Path, rows: &[SimRow], summary: &[SimSummary]) -> Result<Vec<PathBuf>> {
    let results = dir.join("results.csv");
    let mut w = create(&results)?;
    crate::simulate::write_rows_csv(&mut w, rows)?;
    w.flush()?;
    let sum = dir.join("summary.csv");
    let mut w = create(&sum)?;
    crate::simulate::write_summary_csv(&mut w, summary)?;
    w.flush()?;
    Ok(vec![results, sum])
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Outcome> {
    let ds = Dataset::load_csv(&a.data)?;
    let truth = load_truth(&a.truth, &ds)?;
    let cfg = SimConfig {
        method: a.method,
        k_values: a.k.clone(),
        same_listener: a.same_listener,
        aggregator: a.aggregator,
        n_runs: a.runs,
        base_seed: a.common.seed,
        strict: a.strict,
        btl: a.btl.config(),
    };
    cfg.validate(ds.n_systems())?;
    let res = run_bound_simulation(&ds, &truth, &cfg)?;
    let dir = out_dir(&a.common)?;
    let mut outputs = write_results(dir, &res.rows, &res.summary)?;
    if a.svg {
        let path = dir.join("chart.svg");
        fs::write(&path, svg_chart(&[series_of(&res.summary)]))?;
        outputs.push(path);
    }
    Ok(Outcome {
        config: serde_json::to_value(&cfg)?,
        inputs: inputs([("data", Some(&a.data)), ("truth", a.truth.as_ref())]),
        outputs,
        run_errors: res.n_errors(),
    })
}

fn cmd_train(a: &TrainArgs) -> Result<Outcome> {
    let ds = Dataset::load_csv(&a.data)?.normalize()?;
    let cfg = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        pairs_per_epoch: a.pairs_per_epoch,
        batch_size: a.batch_size,
        seed: a.common.seed,
        objective: a.objective,
    };
    let out = train(&ds, &cfg)?;
    let dir = out_dir(&a.common)?;
    let (theta, bias, losses) = (
        dir.join("theta.csv"),
        dir.join("bias.csv"),
        dir.join("losses.csv"),
    );
    out.model.save(&theta, &bias)?;
    let mut w = create(&losses)?;
    writeln!(w, "epoch,loss")?;
    for (i, l) in out.epoch_losses.iter().enumerate() {
        writeln!(w, "{i},{l}")?;
    }
    w.flush()?;
    Ok(Outcome {
        config: serde_json::to_value(&cfg)?,
        inputs: inputs([("data", Some(&a.data))]),
        outputs: vec![theta, bias, losses],
        run_errors: 0,
    })
}

fn cmd_eval(a: &EvalArgs) -> Result<Outcome> {
    match (a.aggregator.needs_threshold(), a.threshold) {
        (false, Some(t)) => {
            return Err(Error::invalid(format!(
                "aggregator {} uses raw scores; drop --threshold {t}",
                a.aggregator
            )))
        }
        (true, None) => {
            return Err(Error::invalid(format!(
                "aggregator {} needs --threshold er|eer|nd",
                a.aggregator
            )))
        }
        _ => {}
    }
    if a.threshold == Some(ThresholdMethod::Eer) && a.dev.is_none() {
        return Err(Error::invalid(
            "--threshold eer needs --dev ratings to fit on",
        ));
    }
    let model = ScoreModel::load(a.model.join("theta.csv"), a.model.join("bias.csv"))?;
    let ds = Dataset::load_csv(&a.data)?;
    let truth = load_truth(&a.truth, &ds)?;
    let n = ds.n_systems();
    let k = a.k.unwrap_or(n * n.saturating_sub(1));
    let thresholds: Option<Thresholds> = match a.threshold {
        None => None,
        Some(ThresholdMethod::Er) => Some(thresholds_er()),
        Some(ThresholdMethod::Nd) => Some(thresholds_nd()),
        Some(ThresholdMethod::Eer) => {
            let dev = Dataset::load_csv(a.dev.as_ref().expect("checked above"))?;
            let n_pairs = a.dev_pairs.unwrap_or(dev.len());
            let (preds, truths) = dev_preferences(
                &model,
                &dev,
                n_pairs,
                derive_seed(a.common.seed, &[u64::MAX]),
            )?;
            Some(fit_eer_thresholds(&preds, &truths)?)
        }
    };
    let cfg = EvalConfig {
        method: a.method,
        k,
        thresholds,
        aggregator: a.aggregator,
        n_repeats: a.repeats,
        seed: a.common.seed,
        same_listener: a.same_listener,
        strict: a.strict,
        btl: a.btl.config(),
    };
    cfg.validate(n)?;
    let scores = model.predict_dataset(&ds)?;
    let res = run_model_eval(&scores, &ds, &truth, &cfg)?;
    let dir = out_dir(&a.common)?;
    let mut outputs = write_results(dir, &res.rows, &res.summary)?;
    if let Some(t) = thresholds {
        let path = dir.join("thresholds.json");
        fs::write(&path, t.to_json()? + "\n")?;
        outputs.push(path);
    }
    let mut config = serde_json::to_value(&cfg)?;
    config["threshold_method"] = serde_json::to_value(a.threshold)?;
    Ok(Outcome {
        config,
        inputs: inputs([
            ("model", Some(&a.model)),
            ("data", Some(&a.data)),
            ("truth", a.truth.as_ref()),
            ("dev", a.dev.as_ref()),
        ]),
        outputs,
        run_errors: res.n_errors(),
    })
}

/// SRCC differences of two result files, paired on (k, run).
fn cmd_ttest(a: &TtestArgs) -> Result<()> {
    let ra = read_rows_csv(File::open(&a.a)?)?;
    let rb = read_rows_csv(File::open(&a.b)?)?;
    let index: BTreeMap<(usize, usize), f64> = rb
        .iter()
        .filter_map(|r| Some(((r.k, r.run), r.srcc?)))
        .collect();
    let (mut xa, mut xb) = (Vec::new(), Vec::new());
    for r in &ra {
        if let (Some(x), Some(&y)) = (r.srcc, index.get(&(r.k, r.run))) {
            xa.push(x);
            xb.push(y);
        }
    }
    let tt = paired_t_test(&xa, &xb)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let report = serde_json::json!({
        "n": xa.len(),
        "mean_a": mean(&xa),
        "mean_b": mean(&xb),
        "t": tt.t,
        "df": tt.df,
        "p": tt.p,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

/// One chart line: label and (k, mean SRCC) points.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn series_of(summary: &[SimSummary]) -> Series {
    let label = summary.first().map_or_else(String::new, |s| {
        format!(
            "{}+{}{}",
            s.method,
            s.aggregator,
            if s.same_listener {
                " (same listener)"
            } else {
                ""
            }
        )
    });
    Series {
        label,
        points: summary
            .iter()
            .filter_map(|s| Some((s.k as f64, s.mean_srcc?)))
            .collect(),
    }
}

fn read_summary_csv(path: &Path) -> Result<Vec<SimSummary>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = || Error::Parse {
            line,
            message: format!("malformed summary row in {}", path.display()),
        };
        if rec.len() != 7 {
            return Err(bad());
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad())
            }
        };
        out.push(SimSummary {
            method: rec[0].parse().map_err(|_| bad())?,
            aggregator: rec[1].parse().map_err(|_| bad())?,
            same_listener: rec[2].parse().map_err(|_| bad())?,
            k: rec[3].parse().map_err(|_| bad())?,
            mean_srcc: opt(&rec[4])?,
            sd_srcc: opt(&rec[5])?,
            n_ok: rec[6].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

fn cmd_chart(a: &ChartArgs) -> Result<()> {
    let mut series = Vec::new();
    for p in &a.summaries {
        series.push(series_of(&read_summary_csv(p)?));
    }
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&a.out, svg_chart(&series))?;
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Polyline chart of mean SRCC against k; k is log-scaled when every k is
/// positive and the range spans more than a decade.
pub fn svg_chart(series: &[Series]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 440.0;
    const L: f64 = 70.0;
    const R: f64 = 200.0;
    const T: f64 = 20.0;
    const B: f64 = 50.0;
    const COLORS: [&str; 8] = [
        "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
    ];

    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .collect();
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    );
    if all.is_empty() {
        svg.push_str("<text x=\"20\" y=\"40\">no data</text>\n</svg>\n");
        return svg;
    }
    let (xmin, xmax) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(p.0), b.max(p.0))
        });
    let (ymin, ymax) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(p.1), b.max(p.1))
        });
    let log = xmin > 0.0 && xmax / xmin > 10.0;
    let fx = |x: f64| if log { x.log10() } else { x };
    let (x0, x1) = (fx(xmin), fx(xmax));
    let xspan = if x1 > x0 { x1 - x0 } else { 1.0 };
    let pad = ((ymax - ymin) * 0.05).max(0.005);
    let (y0, y1) = (ymin - pad, ymax + pad);
    let px = |x: f64| L + (fx(x) - x0) / xspan * (W - L - R);
    let py = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);

    svg.push_str(&format!(
        "<line x1=\"{L}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n<line x1=\"{L}\" y1=\"{T}\" x2=\"{L}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - B,
        W - R,
        H - B,
        H - B
    ));
    for i in 0..=5 {
        let y = y0 + (y1 - y0) * i as f64 / 5.0;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{:.2}\" x2=\"{L}\" y2=\"{:.2}\" stroke=\"black\"/><text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{y:.3}</text>\n",
            L - 4.0,
            py(y),
            py(y),
            L - 8.0,
            py(y) + 4.0
        ));
    }
    let mut ks: Vec<f64> = all.iter().map(|p| p.0).collect();
    ks.sort_by(f64::total_cmp);
    ks.dedup();
    for k in ks {
        svg.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{}\" x2=\"{:.2}\" y2=\"{}\" stroke=\"black\"/><text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">{k}</text>\n",
            px(k),
            H - B,
            px(k),
            H - B + 4.0,
            px(k),
            H - B + 18.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">comparisons k{}</text>\n<text x=\"16\" y=\"{}\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\">mean SRCC</text>\n",
        L + (W - L - R) / 2.0,
        H - 10.0,
        if log { " (log scale)" } else { "" },
        T + (H - T - B) / 2.0,
        T + (H - T - B) / 2.0
    ));
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        for &(x, y) in &s.points {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                px(x),
                py(y)
            ));
        }
        let ly = T + 10.0 + 18.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{}\" y=\"{}\">{}</text>\n",
            W - R + 10.0,
            W - R + 30.0,
            W - R + 36.0,
            ly + 4.0,
            xml_escape(&s.label)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Csv(c) if c.is_io_error() => EXIT_IO,
        Error::Degenerate(_) | Error::NoCommonListener { .. } | Error::Disconnected { .. } => {
            EXIT_RUN_ERRORS
        }
        _ => EXIT_USAGE,
    }
}

fn with_jobs<T>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T>
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {jobs} worker threads: {e}")))?;
    Ok(pool.install(f))
}

fn run_recorded(command: &Command, argv: &[String]) -> Result<i32> {
    let (name, common) = match command {
        Command::Synth(a) => ("synth", &a.common),
        Command::Plan(a) => ("plan", &a.common),
        Command::Simulate(a) => ("simulate", &a.common),
        Command::Train(a) => ("train", &a.common),
        Command::Eval(a) => ("eval", &a.common),
        _ => unreachable!("only artifact commands are recorded"),
    };
    let start = Instant::now();
    let outcome = with_jobs(common.jobs, || match command {
        Command::Synth(a) => cmd_synth(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        _ => unreachable!(),
    })??;
    let manifest = RunManifest {
        command: name.to_owned(),
        argv: argv.to_vec(),
        config: outcome.config,
        seed: common.seed,
        inputs: outcome.inputs,
        outputs: outcome.outputs,
        version: env!("CARGO_PKG_VERSION").to_owned(),
        duration_secs: start.elapsed().as_secs_f64(),
    };
    write_json(&common.out.join(MANIFEST), &manifest)?;
    if outcome.run_errors > 0 {
        eprintln!(
            "{} run(s) recorded an error; see results.csv",
            outcome.run_errors
        );
        return Ok(EXIT_RUN_ERRORS);
    }
    Ok(EXIT_OK)
}

/// Replaces or appends a flag's value in a recorded argument list.
fn set_flag(argv: &mut Vec<String>, names: &[&str], value: &str) {
    let mut i = 0;
    let mut found = false;
    while i < argv.len() {
        let arg = argv[i].clone();
        if names.contains(&arg.as_str()) && i + 1 < argv.len() {
            argv[i + 1] = value.to_owned();
            found = true;
            i += 2;
            continue;
        }
        if let Some(n) = names
            .iter()
            .find(|n| n.starts_with("--") && arg.starts_with(&format!("{n}=")))
        {
            argv[i] = format!("{n}={value}");
            found = true;
        }
        i += 1;
    }
    if !found {
        argv.push(names[0].to_owned());
        argv.push(value.to_owned());
    }
}

fn cmd_replay(a: &ReplayArgs) -> Result<i32> {
    let m = RunManifest::load(&a.manifest)?;
    let mut argv = m.argv.clone();
    if let Some(out) = &a.out {
        set_flag(&mut argv, &["--out", "-o"], &out.to_string_lossy());
    }
    if let Some(j) = a.jobs {
        set_flag(&mut argv, &["--jobs"], &j.to_string());
    }
    if argv.first().map(String::as_str) == Some("replay") {
        return Err(Error::invalid("a manifest cannot replay another replay"));
    }
    let cli =
        Cli::try_parse_from(std::iter::once("prefrank".to_owned()).chain(argv.iter().cloned()))
            .map_err(|e| Error::invalid(format!("manifest arguments no longer parse: {e}")))?;
    run_recorded(&cli.command, &argv)
}

fn dispatch(cli: &Cli, argv: &[String]) -> Result<i32> {
    match &cli.command {
        Command::Ttest(a) => cmd_ttest(a).map(|_| EXIT_OK),
        Command::Chart(a) => cmd_chart(a).map(|_| EXIT_OK),
        Command::Replay(a) => cmd_replay(a),
        other => run_recorded(other, argv),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion
                | clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let argv: Vec<String> = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match dispatch(&cli, &argv) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let code = exit_code(&e);
            if code == EXIT_USAGE {
                eprintln!("run with --help for usage");
            }
            code
        }
    }
}
