//! Monte-Carlo performance bounds and repeated model evaluation.
//!
//! Each run owns a generator seeded from `(base_seed, k, run)`, so a sweep
//! gives the same rows regardless of thread count or which other k values
//! are in the sweep.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{dc_values, fit_btl, wc_values, Aggregator, BtlConfig, ComparisonTally};
use crate::dataset::{Dataset, SystemTruth};
use crate::error::{Error, Result};
use crate::metrics::srcc_values;
use crate::pairgen::{generate, realize_plan, validate_k, PairMethod};
use crate::preference::{pref_gt, pref_pred, Thresholds};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub method: PairMethod,
    pub k_values: Vec<usize>,
    pub same_listener: bool,
    pub aggregator: Aggregator,
    pub n_runs: usize,
    pub base_seed: u64,
    pub strict: bool,
    pub btl: BtlConfig,
}

impl SimConfig {
    pub fn new(method: PairMethod, aggregator: Aggregator, k_values: Vec<usize>) -> Self {
        SimConfig {
            method,
            k_values,
            same_listener: false,
            aggregator,
            n_runs: 100,
            base_seed: 0,
            strict: false,
            btl: BtlConfig::default(),
        }
    }

    pub fn validate(&self, n_systems: usize) -> Result<()> {
        if !matches!(
            self.aggregator,
            Aggregator::Dc | Aggregator::Wc | Aggregator::Btl
        ) {
            return Err(Error::invalid(format!(
                "bound simulation aggregates outcomes with dc, wc or btl, not {}",
                self.aggregator
            )));
        }
        if self.n_runs == 0 {
            return Err(Error::invalid("n_runs must be at least 1"));
        }
        if self.k_values.is_empty() {
            return Err(Error::invalid("no k values given"));
        }
        for &k in &self.k_values {
            validate_k(self.method, n_systems, k)?;
        }
        self.btl.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub method: PairMethod,
    pub aggregator: Aggregator,
    pub same_listener: bool,
    pub k: usize,
    pub run: usize,
    pub srcc: Option<f64>,
    pub fallbacks: usize,
    /// `ok`, `unconverged` (BTL hit max_iter; srcc still reported) or
    /// `error: <message>`.
    pub status: String,
}

impl SimRow {
    pub fn is_error(&self) -> bool {
        self.status.starts_with("error")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub method: PairMethod,
    pub aggregator: Aggregator,
    pub same_listener: bool,
    pub k: usize,
    pub mean_srcc: Option<f64>,
    pub sd_srcc: Option<f64>,
    pub n_ok: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub rows: Vec<SimRow>,
    pub summary: Vec<SimSummary>,
}

impl SimResult {
    fn from_rows(rows: Vec<SimRow>) -> Self {
        let mut summary: Vec<SimSummary> = Vec::new();
        let mut groups: BTreeMap<usize, Vec<&SimRow>> = BTreeMap::new();
        let mut order = Vec::new();
        for r in &rows {
            if !groups.contains_key(&r.k) {
                order.push(r.k);
            }
            groups.entry(r.k).or_default().push(r);
        }
        for k in order {
            let g = &groups[&k];
            let vals: Vec<f64> = g.iter().filter_map(|r| r.srcc).collect();
            let n = vals.len();
            let mean = (n > 0).then(|| vals.iter().sum::<f64>() / n as f64);
            let sd = mean.map(|m| {
                if n < 2 {
                    0.0
                } else {
                    (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
                }
            });
            summary.push(SimSummary {
                method: g[0].method,
                aggregator: g[0].aggregator,
                same_listener: g[0].same_listener,
                k,
                mean_srcc: mean,
                sd_srcc: sd,
                n_ok: n,
            });
        }
        SimResult { rows, summary }
    }

    pub fn n_errors(&self) -> usize {
        self.rows.iter().filter(|r| r.is_error()).count()
    }

    pub fn mean_at(&self, k: usize) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.k == k)
            .and_then(|s| s.mean_srcc)
    }

    /// Writes `method,aggregator,same_listener,k,run,srcc,fallbacks,status`.
    pub fn write_rows_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows_csv(writer, &self.rows)
    }

    /// Writes `method,aggregator,same_listener,k,mean_srcc,sd_srcc,n_ok`.
    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_summary_csv(writer, &self.summary)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_rows_csv<W: Write>(writer: W, rows: &[SimRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "method",
        "aggregator",
        "same_listener",
        "k",
        "run",
        "srcc",
        "fallbacks",
        "status",
    ])?;
    for r in rows {
        wtr.write_record([
            r.method.to_string(),
            r.aggregator.to_string(),
            r.same_listener.to_string(),
            r.k.to_string(),
            r.run.to_string(),
            opt(r.srcc),
            r.fallbacks.to_string(),
            r.status.clone(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(writer: W, summary: &[SimSummary]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "method",
        "aggregator",
        "same_listener",
        "k",
        "mean_srcc",
        "sd_srcc",
        "n_ok",
    ])?;
    for s in summary {
        wtr.write_record([
            s.method.to_string(),
            s.aggregator.to_string(),
            s.same_listener.to_string(),
            s.k.to_string(),
            opt(s.mean_srcc),
            opt(s.sd_srcc),
            s.n_ok.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a results CSV written by [`write_rows_csv`].
pub fn read_rows_csv<R: Read>(reader: R) -> Result<Vec<SimRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::Parse {
            line,
            message: format!("bad {what} field"),
        };
        if record.len() != 8 {
            return Err(bad("row: expected 8"));
        }
        rows.push(SimRow {
            method: record[0].parse().map_err(|_| bad("method"))?,
            aggregator: record[1].parse().map_err(|_| bad("aggregator"))?,
            same_listener: record[2].parse().map_err(|_| bad("same_listener"))?,
            k: record[3].parse().map_err(|_| bad("k"))?,
            run: record[4].parse().map_err(|_| bad("run"))?,
            srcc: match &record[5] {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("srcc"))?),
            },
            fallbacks: record[6].parse().map_err(|_| bad("fallbacks"))?,
            status: record[7].to_owned(),
        });
    }
    Ok(rows)
}

/// How a realized pair is turned into evidence for aggregation.
enum Judge<'a> {
    /// Ground-truth scores through the sign function.
    Truth,
    /// Predicted scores through `pref_pred`, then thresholds, or raw
    /// preferences when `thresholds` is `None` (PS aggregation).
    Model {
        scores: &'a [Option<f64>],
        thresholds: Option<Thresholds>,
    },
}

struct RunSpec<'a> {
    ds: &'a Dataset,
    /// Dataset system index of every truth entry, in truth order.
    truth_idx: Vec<usize>,
    truth_vals: Vec<f64>,
    method: PairMethod,
    aggregator: Aggregator,
    same_listener: bool,
    strict: bool,
    btl: BtlConfig,
    judge: Judge<'a>,
}

fn align_truth(ds: &Dataset, truth: &SystemTruth) -> Result<(Vec<usize>, Vec<f64>)> {
    if truth.len() < 2 {
        return Err(Error::invalid("truth must cover at least two systems"));
    }
    let mut idx = Vec::with_capacity(truth.len());
    let mut vals = Vec::with_capacity(truth.len());
    for (id, v) in truth.iter() {
        let i = ds.system_index(id).ok_or_else(|| Error::Unknown {
            kind: "system",
            id: id.to_owned(),
        })?;
        idx.push(i);
        vals.push(v);
    }
    Ok((idx, vals))
}

fn missing_score(ds: &Dataset, rating: usize) -> Error {
    let r = ds.rating(rating);
    Error::Unknown {
        kind: "score for rating",
        id: format!("{}/{}/{}", r.system_id, r.utterance_id, r.listener_id),
    }
}

impl RunSpec<'_> {
    fn model_score(&self, scores: &[Option<f64>], rating: usize) -> Result<f64> {
        scores[rating].ok_or_else(|| missing_score(self.ds, rating))
    }

    /// One run: returns (srcc, fallbacks, converged).
    fn execute(&self, k: usize, seed: u64) -> (Result<(f64, bool)>, usize) {
        let ds = self.ds;
        let mut rng = rng_from_seed(seed);
        let mut fallbacks = 0;
        let outcome = (|| {
            let mut converged = true;
            let utilities: Vec<f64> = if self.aggregator == Aggregator::Mean {
                let Judge::Model { scores, .. } = &self.judge else {
                    return Err(Error::invalid("mean aggregation needs model scores"));
                };
                (0..ds.n_systems())
                    .map(|s| {
                        let rows = ds.ratings_of_system(s);
                        let mut sum = 0.0;
                        for &r in rows {
                            sum += self.model_score(scores, r as usize)?;
                        }
                        Ok(sum / rows.len() as f64)
                    })
                    .collect::<Result<_>>()?
            } else {
                let plan = generate(self.method, ds.n_systems(), k, &mut rng)?;
                let real = realize_plan(&plan, ds, self.same_listener, self.strict, &mut rng)?;
                fallbacks = real.fallbacks;
                let mut tally = ComparisonTally::new(ds.systems().to_vec());
                let mut ps = vec![0.0; ds.n_systems()];
                for p in &real.pairs {
                    let (sa, sb) = (ds.system_of(p.first), ds.system_of(p.second));
                    match &self.judge {
                        Judge::Truth => {
                            let o = pref_gt(ds.rating(p.first).score, ds.rating(p.second).score);
                            tally.record(sa, sb, o)?;
                        }
                        Judge::Model { scores, thresholds } => {
                            let pref = pref_pred(
                                self.model_score(scores, p.first)?,
                                self.model_score(scores, p.second)?,
                            );
                            match thresholds {
                                Some(t) => tally.record(sa, sb, t.classify(pref))?,
                                None => {
                                    ps[sa] += pref;
                                    ps[sb] -= pref;
                                }
                            }
                        }
                    }
                }
                match self.aggregator {
                    Aggregator::Dc => dc_values(&tally),
                    Aggregator::Wc => wc_values(&tally),
                    Aggregator::Btl => {
                        let fit = fit_btl(&tally, &self.btl)?;
                        converged = fit.converged;
                        fit.q
                    }
                    Aggregator::Ps => ps,
                    Aggregator::Mean => unreachable!(),
                }
            };
            let picked: Vec<f64> = self.truth_idx.iter().map(|&i| utilities[i]).collect();
            Ok((srcc_values(&picked, &self.truth_vals)?, converged))
        })();
        (outcome, fallbacks)
    }

    fn run_all(&self, k_values: &[usize], n_runs: usize, base_seed: u64) -> SimResult {
        let tasks: Vec<(usize, usize)> = k_values
            .iter()
            .flat_map(|&k| (0..n_runs).map(move |r| (k, r)))
            .collect();
        let rows: Vec<SimRow> = tasks
            .into_par_iter()
            .map(|(k, run)| {
                let seed = derive_seed(base_seed, &[k as u64, run as u64]);
                let (outcome, fallbacks) = self.execute(k, seed);
                let (srcc, status) = match outcome {
                    Ok((v, true)) => (Some(v), "ok".to_owned()),
                    Ok((v, false)) => (Some(v), "unconverged".to_owned()),
                    Err(e) => (None, format!("error: {e}")),
                };
                SimRow {
                    method: self.method,
                    aggregator: self.aggregator,
                    same_listener: self.same_listener,
                    k,
                    run,
                    srcc,
                    fallbacks,
                    status,
                }
            })
            .collect();
        SimResult::from_rows(rows)
    }
}

/// Performance bound of a (pair generation, aggregation) combination:
/// ground-truth scores decide every realized pair and the aggregate ranking
/// is compared with `truth` by SRCC, `n_runs` times per k.
pub fn run_bound_simulation(
    ds: &Dataset,
    truth: &SystemTruth,
    cfg: &SimConfig,
) -> Result<SimResult> {
    cfg.validate(ds.n_systems())?;
    let (truth_idx, truth_vals) = align_truth(ds, truth)?;
    let spec = RunSpec {
        ds,
        truth_idx,
        truth_vals,
        method: cfg.method,
        aggregator: cfg.aggregator,
        same_listener: cfg.same_listener,
        strict: cfg.strict,
        btl: cfg.btl,
        judge: Judge::Truth,
    };
    Ok(spec.run_all(&cfg.k_values, cfg.n_runs, cfg.base_seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub method: PairMethod,
    pub k: usize,
    /// Required for dc/wc/btl, forbidden for ps/mean.
    pub thresholds: Option<Thresholds>,
    pub aggregator: Aggregator,
    pub n_repeats: usize,
    pub seed: u64,
    pub same_listener: bool,
    pub strict: bool,
    pub btl: BtlConfig,
}

impl EvalConfig {
    pub fn new(
        method: PairMethod,
        k: usize,
        aggregator: Aggregator,
        thresholds: Option<Thresholds>,
    ) -> Self {
        EvalConfig {
            method,
            k,
            thresholds,
            aggregator,
            n_repeats: 20,
            seed: 0,
            same_listener: false,
            strict: false,
            btl: BtlConfig::default(),
        }
    }

    pub fn validate(&self, n_systems: usize) -> Result<()> {
        match (self.aggregator.needs_threshold(), self.thresholds.is_some()) {
            (true, false) => {
                return Err(Error::invalid(format!(
                    "aggregator {} needs a threshold rule",
                    self.aggregator
                )))
            }
            (false, true) => {
                return Err(Error::invalid(format!(
                    "aggregator {} works on raw scores and takes no threshold",
                    self.aggregator
                )))
            }
            _ => {}
        }
        if self.n_repeats == 0 {
            return Err(Error::invalid("n_repeats must be at least 1"));
        }
        if self.aggregator != Aggregator::Mean {
            validate_k(self.method, n_systems, self.k)?;
        }
        self.btl.validate()
    }
}

/// Evaluates utterance-level scores from a model: pairs are regenerated for
/// every repeat, judged through `pref_pred` and the threshold rule (or
/// summed raw for PS), aggregated, and compared with `truth`.
pub fn run_model_eval(
    utterance_scores: &HashMap<(String, String), f64>,
    ds: &Dataset,
    truth: &SystemTruth,
    cfg: &EvalConfig,
) -> Result<SimResult> {
    cfg.validate(ds.n_systems())?;
    let (truth_idx, truth_vals) = align_truth(ds, truth)?;
    let scores: Vec<Option<f64>> = ds
        .ratings()
        .iter()
        .map(|r| {
            utterance_scores
                .get(&(r.utterance_id.clone(), r.listener_id.clone()))
                .copied()
        })
        .collect();
    let spec = RunSpec {
        ds,
        truth_idx,
        truth_vals,
        method: cfg.method,
        aggregator: cfg.aggregator,
        same_listener: cfg.same_listener,
        strict: cfg.strict,
        btl: cfg.btl,
        judge: Judge::Model {
            scores: &scores,
            thresholds: cfg.thresholds,
        },
    };
    Ok(spec.run_all(&[cfg.k], cfg.n_repeats, cfg.seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SynthConfig};
    use crate::preference::thresholds_nd;

    fn small(noiseless: bool, seed: u64) -> crate::dataset::SyntheticData {
        let base = if noiseless {
            SynthConfig::noiseless(seed)
        } else {
            SynthConfig {
                seed,
                ..SynthConfig::default()
            }
        };
        generate_synthetic(&SynthConfig {
            n_systems: 12,
            utterances_per_system: 6,
            n_listeners: 30,
            ..base
        })
        .unwrap()
    }

    #[test]
    fn noiseless_bound_is_perfect() {
        let data = small(true, 1);
        let truth = data.dataset.system_truth().unwrap();
        for agg in [Aggregator::Dc, Aggregator::Wc, Aggregator::Btl] {
            let mut cfg = SimConfig::new(PairMethod::Bs, agg, vec![66, 132]);
            cfg.n_runs = 5;
            let res = run_bound_simulation(&data.dataset, &truth, &cfg).unwrap();
            for s in &res.summary {
                assert_eq!(s.mean_srcc, Some(1.0), "{agg}");
            }
        }
    }

    #[test]
    fn rows_keyed_and_mean_recomputable() {
        let data = small(false, 2);
        let truth = data.dataset.system_truth().unwrap();
        let mut cfg = SimConfig::new(PairMethod::Link, Aggregator::Dc, vec![12, 36]);
        cfg.n_runs = 7;
        let res = run_bound_simulation(&data.dataset, &truth, &cfg).unwrap();
        assert_eq!(res.rows.len(), 14);
        for s in &res.summary {
            let vals: Vec<f64> = res
                .rows
                .iter()
                .filter(|r| r.k == s.k)
                .filter_map(|r| r.srcc)
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!((mean - s.mean_srcc.unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn adding_k_values_does_not_perturb_existing_rows() {
        let data = small(false, 3);
        let truth = data.dataset.system_truth().unwrap();
        let mut a = SimConfig::new(PairMethod::Rand, Aggregator::Dc, vec![40]);
        a.n_runs = 4;
        let mut b = a.clone();
        b.k_values = vec![20, 40];
        let ra = run_bound_simulation(&data.dataset, &truth, &a).unwrap();
        let rb = run_bound_simulation(&data.dataset, &truth, &b).unwrap();
        let tail: Vec<&SimRow> = rb.rows.iter().filter(|r| r.k == 40).collect();
        assert_eq!(ra.rows.iter().collect::<Vec<_>>(), tail);
    }

    #[test]
    fn worker_count_does_not_change_rows() {
        let data = small(false, 11);
        let truth = data.dataset.system_truth().unwrap();
        let mut cfg = SimConfig::new(PairMethod::Rand, Aggregator::Btl, vec![30, 66]);
        cfg.n_runs = 8;
        cfg.same_listener = true;
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_bound_simulation(&data.dataset, &truth, &cfg).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn noiseless_unbalanced_methods_are_not_exact_but_close() {
        let data = small(true, 12);
        let truth = data.dataset.system_truth().unwrap();
        let mut cfg = SimConfig::new(PairMethod::Link, Aggregator::Btl, vec![132]);
        cfg.n_runs = 4;
        let res = run_bound_simulation(&data.dataset, &truth, &cfg).unwrap();
        assert!(res.summary[0].mean_srcc.unwrap() > 0.95);
    }

    #[test]
    fn rejects_bad_config() {
        let data = small(false, 4);
        let truth = data.dataset.system_truth().unwrap();
        let cfg = SimConfig::new(PairMethod::Bs, Aggregator::Dc, vec![100]);
        assert!(run_bound_simulation(&data.dataset, &truth, &cfg).is_err());
        let cfg = SimConfig::new(PairMethod::Bs, Aggregator::Ps, vec![66]);
        assert!(run_bound_simulation(&data.dataset, &truth, &cfg).is_err());
    }

    #[test]
    fn failed_runs_are_recorded() {
        let data = small(false, 5);
        let truth = data.dataset.system_truth().unwrap();
        let mut cfg = SimConfig::new(PairMethod::Rand, Aggregator::Btl, vec![3]);
        cfg.n_runs = 3;
        cfg.btl.prior = 0.0;
        let res = run_bound_simulation(&data.dataset, &truth, &cfg).unwrap();
        assert_eq!(res.rows.len(), 3);
        assert_eq!(res.n_errors(), 3);
        assert_eq!(res.summary[0].n_ok, 0);
        assert!(res.rows[0].status.starts_with("error"));
    }

    fn truth_scores(ds: &Dataset) -> HashMap<(String, String), f64> {
        ds.ratings()
            .iter()
            .map(|r| ((r.utterance_id.clone(), r.listener_id.clone()), r.score))
            .collect()
    }

    #[test]
    fn truth_scores_reproduce_bound_simulation() {
        let data = small(false, 6);
        let truth = data.dataset.system_truth().unwrap();
        let mut sim = SimConfig::new(PairMethod::Link, Aggregator::Dc, vec![24]);
        sim.n_runs = 6;
        sim.base_seed = 77;
        let a = run_bound_simulation(&data.dataset, &truth, &sim).unwrap();
        let mut ev = EvalConfig::new(PairMethod::Link, 24, Aggregator::Dc, Some(thresholds_nd()));
        ev.n_repeats = 6;
        ev.seed = 77;
        let b = run_model_eval(&truth_scores(&data.dataset), &data.dataset, &truth, &ev).unwrap();
        let sa: Vec<Option<f64>> = a.rows.iter().map(|r| r.srcc).collect();
        let sb: Vec<Option<f64>> = b.rows.iter().map(|r| r.srcc).collect();
        assert_eq!(sa, sb);
    }

    #[test]
    fn constant_scores_error_per_repeat() {
        let data = small(false, 7);
        let truth = data.dataset.system_truth().unwrap();
        let flat: HashMap<(String, String), f64> = truth_scores(&data.dataset)
            .into_keys()
            .map(|k| (k, 0.0))
            .collect();
        let mut ev = EvalConfig::new(PairMethod::Bs, 66, Aggregator::Dc, Some(thresholds_nd()));
        ev.n_repeats = 3;
        let res = run_model_eval(&flat, &data.dataset, &truth, &ev).unwrap();
        assert_eq!(res.n_errors(), 3);
    }

    #[test]
    fn missing_score_is_named() {
        let data = small(false, 8);
        let truth = data.dataset.system_truth().unwrap();
        let mut partial = truth_scores(&data.dataset);
        let r = data.dataset.rating(0);
        partial.remove(&(r.utterance_id.clone(), r.listener_id.clone()));
        let mut ev = EvalConfig::new(PairMethod::Bs, 66, Aggregator::Mean, None);
        ev.n_repeats = 1;
        let res = run_model_eval(&partial, &data.dataset, &truth, &ev).unwrap();
        assert!(
            res.rows[0].status.contains(&r.utterance_id),
            "{}",
            res.rows[0].status
        );
    }

    #[test]
    fn threshold_contract() {
        let data = small(false, 9);
        let truth = data.dataset.system_truth().unwrap();
        let scores = truth_scores(&data.dataset);
        let ps_with = EvalConfig::new(PairMethod::Bs, 66, Aggregator::Ps, Some(thresholds_nd()));
        assert!(run_model_eval(&scores, &data.dataset, &truth, &ps_with).is_err());
        let dc_without = EvalConfig::new(PairMethod::Bs, 66, Aggregator::Dc, None);
        assert!(run_model_eval(&scores, &data.dataset, &truth, &dc_without).is_err());
        let mut ps = EvalConfig::new(PairMethod::Bs, 66, Aggregator::Ps, None);
        ps.n_repeats = 2;
        let res = run_model_eval(&scores, &data.dataset, &truth, &ps).unwrap();
        assert_eq!(res.n_errors(), 0);
    }

    #[test]
    fn rows_csv_round_trip() {
        let data = small(false, 10);
        let truth = data.dataset.system_truth().unwrap();
        let mut cfg = SimConfig::new(PairMethod::Rand, Aggregator::Btl, vec![3, 30]);
        cfg.n_runs = 3;
        cfg.btl.prior = 0.0;
        let res = run_bound_simulation(&data.dataset, &truth, &cfg).unwrap();
        let mut buf = Vec::new();
        res.write_rows_csv(&mut buf).unwrap();
        assert_eq!(read_rows_csv(buf.as_slice()).unwrap(), res.rows);
        let mut summary = Vec::new();
        res.write_summary_csv(&mut summary).unwrap();
        let text = String::from_utf8(summary).unwrap();
        assert!(text.starts_with(
            "method,aggregator,same_listener,k,mean_srcc,sd_srcc,n_ok\nrand,btl,false,3,,,0\n"
        ));
    }
}
