//! Utterance-level score model trained from same-listener preferences.
//!
//! The model predicts `s(u, l) = theta_u + b_l`. Under the preference
//! objective a pair from one listener sees `(theta_a - theta_b)`, so the
//! listener offset cancels and only what listeners agree on is learned.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Scale};
use crate::error::{Error, Result};
use crate::pairgen::{RatingPair, TrainingPairSampler};
use crate::preference::{alpha, alpha_prime, pref_gt, pref_pred, Outcome};
use crate::rng::{rng_from_seed, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Squared error between `alpha(pred_a - pred_b)` and the sign of the
    /// score difference, on same-listener pairs.
    Preference,
    /// Squared error between the prediction and the normalized score.
    Direct,
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Objective::Preference => "preference",
            Objective::Direct => "direct",
        })
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "preference" | "pref" => Ok(Objective::Preference),
            "direct" | "mse" => Ok(Objective::Direct),
            _ => Err(Error::invalid(format!("unknown objective {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Examples drawn per epoch; defaults to the number of ratings.
    pub pairs_per_epoch: Option<usize>,
    pub batch_size: usize,
    pub seed: u64,
    pub objective: Objective,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 200,
            pairs_per_epoch: None,
            batch_size: 64,
            seed: 0,
            objective: Objective::Preference,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.pairs_per_epoch == Some(0) {
            return Err(Error::invalid("pairs_per_epoch must be at least 1"));
        }
        Ok(())
    }
}

/// Per-utterance quality `theta` plus per-listener offset `bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreModel {
    utterances: Vec<String>,
    theta: Vec<f64>,
    listeners: Vec<String>,
    bias: Vec<f64>,
    utt_index: HashMap<String, usize>,
    lis_index: HashMap<String, usize>,
}

fn index_of(ids: &[String]) -> HashMap<String, usize> {
    ids.iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect()
}

impl ScoreModel {
    pub fn new(
        utterances: Vec<String>,
        theta: Vec<f64>,
        listeners: Vec<String>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if utterances.len() != theta.len() || listeners.len() != bias.len() {
            return Err(Error::invalid("id and parameter lists differ in length"));
        }
        if theta.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::invalid("model parameters must be finite"));
        }
        let utt_index = index_of(&utterances);
        let lis_index = index_of(&listeners);
        if utt_index.len() != utterances.len() || lis_index.len() != listeners.len() {
            return Err(Error::invalid("duplicate id in model"));
        }
        Ok(ScoreModel {
            utterances,
            theta,
            listeners,
            bias,
            utt_index,
            lis_index,
        })
    }

    /// All-zero model over the utterances and listeners of `ds`, indexed
    /// like the dataset.
    pub fn zeros(ds: &Dataset) -> Self {
        let (u, l) = (ds.utterances().to_vec(), ds.listeners().to_vec());
        let (nu, nl) = (u.len(), l.len());
        ScoreModel::new(u, vec![0.0; nu], l, vec![0.0; nl]).expect("dataset ids are unique")
    }

    pub fn utterances(&self) -> &[String] {
        &self.utterances
    }

    pub fn listeners(&self) -> &[String] {
        &self.listeners
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn n_params(&self) -> usize {
        self.theta.len() + self.bias.len()
    }

    /// Flat parameter view: thetas first, then biases.
    pub fn param(&self, p: usize) -> f64 {
        if p < self.theta.len() {
            self.theta[p]
        } else {
            self.bias[p - self.theta.len()]
        }
    }

    pub fn param_mut(&mut self, p: usize) -> &mut f64 {
        let n = self.theta.len();
        if p < n {
            &mut self.theta[p]
        } else {
            &mut self.bias[p - n]
        }
    }

    /// Score of utterance `u` as heard by listener `l`. Unknown listeners
    /// get no offset; unknown utterances are an error.
    pub fn predict(&self, utterance: &str, listener: &str) -> Result<f64> {
        let u = *self
            .utt_index
            .get(utterance)
            .ok_or_else(|| Error::Unknown {
                kind: "utterance",
                id: utterance.to_owned(),
            })?;
        let b = self.lis_index.get(listener).map_or(0.0, |&l| self.bias[l]);
        Ok(self.theta[u] + b)
    }

    /// Predictions for every rating of `ds`, keyed by (utterance, listener).
    pub fn predict_dataset(&self, ds: &Dataset) -> Result<HashMap<(String, String), f64>> {
        ds.ratings()
            .iter()
            .map(|r| {
                let s = self.predict(&r.utterance_id, &r.listener_id)?;
                Ok(((r.utterance_id.clone(), r.listener_id.clone()), s))
            })
            .collect()
    }

    /// Writes `utterance_id,theta` and `listener_id,bias` tables.
    pub fn write_csv<W1: Write, W2: Write>(&self, theta_out: W1, bias_out: W2) -> Result<()> {
        write_table(
            theta_out,
            ["utterance_id", "theta"],
            &self.utterances,
            &self.theta,
        )?;
        write_table(
            bias_out,
            ["listener_id", "bias"],
            &self.listeners,
            &self.bias,
        )
    }

    pub fn read_csv<R1: Read, R2: Read>(theta_in: R1, bias_in: R2) -> Result<Self> {
        let (u, t) = read_table(theta_in, ["utterance_id", "theta"])?;
        let (l, b) = read_table(bias_in, ["listener_id", "bias"])?;
        ScoreModel::new(u, t, l, b)
    }

    pub fn save(&self, theta_path: impl AsRef<Path>, bias_path: impl AsRef<Path>) -> Result<()> {
        let t = std::fs::File::create(theta_path)?;
        let b = std::fs::File::create(bias_path)?;
        self.write_csv(std::io::BufWriter::new(t), std::io::BufWriter::new(b))
    }

    pub fn load(theta_path: impl AsRef<Path>, bias_path: impl AsRef<Path>) -> Result<Self> {
        ScoreModel::read_csv(
            std::fs::File::open(theta_path)?,
            std::fs::File::open(bias_path)?,
        )
    }
}

fn write_table<W: Write>(w: W, header: [&str; 2], ids: &[String], vals: &[f64]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header)?;
    for (id, v) in ids.iter().zip(vals) {
        wtr.write_record([id.as_str(), &v.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

fn read_table<R: Read>(r: R, header: [&str; 2]) -> Result<(Vec<String>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let got: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_owned()).collect();
    if got != header {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", header.join(",")),
        });
    }
    let (mut ids, mut vals) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(Error::Parse {
                line,
                message: "expected 2 fields".into(),
            });
        }
        let v: f64 = rec[1].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad number {:?}", &rec[1]),
        })?;
        ids.push(rec[0].trim().to_owned());
        vals.push(v);
    }
    Ok((ids, vals))
}

/// A same-listener pair in model coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairExample {
    pub utt_a: usize,
    pub lis_a: usize,
    pub utt_b: usize,
    pub lis_b: usize,
    /// `pref_gt` value of the pair, in {-1, 0, 1}.
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreExample {
    pub utt: usize,
    pub lis: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Batch {
    Pairs(Vec<PairExample>),
    Scores(Vec<ScoreExample>),
}

impl Batch {
    /// Pairs of `ds` with indices matching [`ScoreModel::zeros`]`(ds)`.
    pub fn from_pairs(ds: &Dataset, pairs: &[RatingPair]) -> Self {
        Batch::Pairs(pairs.iter().map(|p| pair_example(ds, p)).collect())
    }

    pub fn from_ratings(ds: &Dataset, rows: &[usize]) -> Self {
        Batch::Scores(rows.iter().map(|&r| score_example(ds, r)).collect())
    }

    pub fn len(&self) -> usize {
        match self {
            Batch::Pairs(v) => v.len(),
            Batch::Scores(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn pair_example(ds: &Dataset, p: &RatingPair) -> PairExample {
    let (a, b) = p.ratings(ds);
    PairExample {
        utt_a: ds.utterance_of(p.first),
        lis_a: ds.listener_of(p.first),
        utt_b: ds.utterance_of(p.second),
        lis_b: ds.listener_of(p.second),
        target: f64::from(pref_gt(a.score, b.score).value()),
    }
}

fn score_example(ds: &Dataset, r: usize) -> ScoreExample {
    ScoreExample {
        utt: ds.utterance_of(r),
        lis: ds.listener_of(r),
        score: ds.rating(r).score,
    }
}

fn pair_x(m: &ScoreModel, e: &PairExample) -> f64 {
    (m.theta[e.utt_a] - m.theta[e.utt_b]) + (m.bias[e.lis_a] - m.bias[e.lis_b])
}

/// Mean loss of `model` over `batch`.
pub fn batch_loss(model: &ScoreModel, batch: &Batch) -> f64 {
    let n = batch.len().max(1) as f64;
    let total: f64 = match batch {
        Batch::Pairs(v) => v
            .iter()
            .map(|e| (alpha(pair_x(model, e)) - e.target).powi(2))
            .sum(),
        Batch::Scores(v) => v
            .iter()
            .map(|e| (model.theta[e.utt] + model.bias[e.lis] - e.score).powi(2))
            .sum(),
    };
    total / n
}

/// Sparse gradient of [`batch_loss`] as (flat parameter, partial) entries.
/// A parameter may appear more than once; its gradient is the sum.
pub fn batch_gradient(model: &ScoreModel, batch: &Batch) -> Vec<(usize, f64)> {
    let nu = model.theta.len();
    let n = batch.len().max(1) as f64;
    let mut g = Vec::with_capacity(4 * batch.len());
    match batch {
        Batch::Pairs(v) => {
            for e in v {
                let x = pair_x(model, e);
                let d = 2.0 * (alpha(x) - e.target) * alpha_prime(x) / n;
                g.extend([
                    (e.utt_a, d),
                    (e.utt_b, -d),
                    (nu + e.lis_a, d),
                    (nu + e.lis_b, -d),
                ]);
            }
        }
        Batch::Scores(v) => {
            for e in v {
                let d = 2.0 * (model.theta[e.utt] + model.bias[e.lis] - e.score) / n;
                g.extend([(e.utt, d), (nu + e.lis, d)]);
            }
        }
    }
    g
}

/// One gradient-descent step; the whole gradient is taken before any
/// parameter moves.
pub fn gradient_step(model: &mut ScoreModel, batch: &Batch, lr: f64) {
    for (p, d) in batch_gradient(model, batch) {
        *model.param_mut(p) -= lr * d;
    }
}

fn sample_batch(
    ds: &Dataset,
    sampler: Option<&TrainingPairSampler<'_>>,
    size: usize,
    rng: &mut SimRng,
) -> Batch {
    match sampler {
        Some(s) => Batch::Pairs(
            (0..size)
                .map(|_| pair_example(ds, &s.sample(rng)))
                .collect(),
        ),
        None => Batch::Scores(
            (0..size)
                .map(|_| score_example(ds, rng.random_range(0..ds.len())))
                .collect(),
        ),
    }
}

fn check_trainable(ds: &Dataset, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if ds.scale() != Scale::Norm11 {
        return Err(Error::invalid(
            "training needs scores normalized to [-1, 1]",
        ));
    }
    if ds.is_empty() {
        return Err(Error::degenerate("empty training set"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: ScoreModel,
    /// Mean pre-step batch loss of every epoch.
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch gradient descent from a zero model.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    check_trainable(ds, cfg)?;
    let sampler = match cfg.objective {
        Objective::Preference => Some(TrainingPairSampler::new(ds)?),
        Objective::Direct => None,
    };
    let mut rng = rng_from_seed(cfg.seed);
    let mut model = ScoreModel::zeros(ds);
    let per_epoch = cfg.pairs_per_epoch.unwrap_or(ds.len());
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let (mut left, mut loss_sum) = (per_epoch, 0.0);
        while left > 0 {
            let size = left.min(cfg.batch_size);
            let batch = sample_batch(ds, sampler.as_ref(), size, &mut rng);
            loss_sum += batch_loss(&model, &batch) * size as f64;
            gradient_step(&mut model, &batch, cfg.learning_rate);
            left -= size;
        }
        epoch_losses.push(loss_sum / per_epoch as f64);
    }
    Ok(TrainOutcome {
        model,
        epoch_losses,
    })
}

/// Largest relative error between analytic and central-difference partials
/// of `model` on `batch`, over up to `n_probes` parameters the batch
/// touches. Relative error is `|g - fd| / max(|g|, 1e-8)`.
pub fn grad_check_model(
    model: &ScoreModel,
    batch: &Batch,
    n_probes: usize,
    epsilon: f64,
    rng: &mut SimRng,
) -> f64 {
    let grad = batch_gradient(model, batch);
    let mut dense: HashMap<usize, f64> = HashMap::new();
    for &(p, d) in &grad {
        *dense.entry(p).or_default() += d;
    }
    let mut touched: Vec<usize> = dense.keys().copied().collect();
    touched.sort_unstable();
    let probes = rand::seq::index::sample(rng, touched.len(), n_probes.min(touched.len()));
    let mut work = model.clone();
    let mut worst: f64 = 0.0;
    for i in probes {
        let p = touched[i];
        let orig = work.param(p);
        *work.param_mut(p) = orig + epsilon;
        let up = batch_loss(&work, batch);
        *work.param_mut(p) = orig - epsilon;
        let down = batch_loss(&work, batch);
        *work.param_mut(p) = orig;
        let fd = (up - down) / (2.0 * epsilon);
        let g = dense[&p];
        worst = worst.max((g - fd).abs() / g.abs().max(1e-8));
    }
    worst
}

/// [`grad_check_model`] on a model with parameters drawn uniformly from
/// [-0.5, 0.5] and one sampled batch of `cfg.batch_size` examples.
pub fn grad_check(ds: &Dataset, cfg: &TrainConfig, n_probes: usize, epsilon: f64) -> Result<f64> {
    check_trainable(ds, cfg)?;
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let sampler = match cfg.objective {
        Objective::Preference => Some(TrainingPairSampler::new(ds)?),
        Objective::Direct => None,
    };
    let mut rng = rng_from_seed(cfg.seed);
    let mut model = ScoreModel::zeros(ds);
    let init = Uniform::new_inclusive(-0.5, 0.5).expect("valid range");
    for p in 0..model.n_params() {
        *model.param_mut(p) = init.sample(&mut rng);
    }
    let batch = sample_batch(ds, sampler.as_ref(), cfg.batch_size, &mut rng);
    Ok(grad_check_model(
        &model, &batch, n_probes, epsilon, &mut rng,
    ))
}

/// Predicted preferences and ground-truth outcomes on `n_pairs` sampled
/// same-listener pairs of `dev`, for threshold fitting.
pub fn dev_preferences(
    model: &ScoreModel,
    dev: &Dataset,
    n_pairs: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<Outcome>)> {
    let sampler = TrainingPairSampler::new(dev)?;
    let mut rng = rng_from_seed(seed);
    let mut preds = Vec::with_capacity(n_pairs);
    let mut truths = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let (a, b) = sampler.sample(&mut rng).ratings(dev);
        let pa = model.predict(&a.utterance_id, &a.listener_id)?;
        let pb = model.predict(&b.utterance_id, &b.listener_id)?;
        preds.push(pref_pred(pa, pb));
        truths.push(pref_gt(a.score, b.score));
    }
    Ok((preds, truths))
}
