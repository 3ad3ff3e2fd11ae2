//! Preferential aggregation: turning pairwise outcomes (or raw preference
//! values) into per-system quality scores.
//!
//! * DC: wins minus losses.
//! * WC: wins only.
//! * BTL: Bradley-Terry-Luce maximum likelihood, fit by minorization-maximization.
//! * PS: signed sum of raw preference values, no thresholding.
//! * Mean: plain average of direct utterance scores.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preference::Outcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    Dc,
    Wc,
    Btl,
    Ps,
    Mean,
}

impl Aggregator {
    /// Whether the aggregator consumes thresholded outcomes.
    pub fn needs_threshold(self) -> bool {
        matches!(self, Aggregator::Dc | Aggregator::Wc | Aggregator::Btl)
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregator::Dc => "dc",
            Aggregator::Wc => "wc",
            Aggregator::Btl => "btl",
            Aggregator::Ps => "ps",
            Aggregator::Mean => "mean",
        })
    }
}

impl FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dc" => Ok(Aggregator::Dc),
            "wc" => Ok(Aggregator::Wc),
            "btl" => Ok(Aggregator::Btl),
            "ps" => Ok(Aggregator::Ps),
            "mean" | "sc" => Ok(Aggregator::Mean),
            _ => Err(Error::invalid(format!(
                "unknown aggregator `{s}` (dc|wc|btl|ps|mean)"
            ))),
        }
    }
}

/// Win/draw counts between every ordered pair of systems.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonTally {
    systems: Vec<String>,
    /// `wins[i * n + j]`: times `i` beat `j`.
    wins: Vec<u32>,
    /// Symmetric: `draws[i * n + j] == draws[j * n + i]`.
    draws: Vec<u32>,
}

impl ComparisonTally {
    /// An empty tally over the declared systems.
    pub fn new(systems: Vec<String>) -> Self {
        let n = systems.len();
        ComparisonTally {
            systems,
            wins: vec![0; n * n],
            draws: vec![0; n * n],
        }
    }

    pub fn systems(&self) -> &[String] {
        &self.systems
    }

    pub fn n_systems(&self) -> usize {
        self.systems.len()
    }

    /// Records the outcome of `a` against `b`.
    pub fn record(&mut self, a: usize, b: usize, outcome: Outcome) -> Result<()> {
        let n = self.n_systems();
        if a == b {
            return Err(Error::invalid(format!(
                "self-comparison of `{}`",
                self.systems[a]
            )));
        }
        if a >= n || b >= n {
            return Err(Error::invalid(format!(
                "system index out of range ({a}, {b}) for {n} systems"
            )));
        }
        match outcome {
            Outcome::Win => self.wins[a * n + b] += 1,
            Outcome::Loss => self.wins[b * n + a] += 1,
            Outcome::Draw => {
                self.draws[a * n + b] += 1;
                self.draws[b * n + a] += 1;
            }
        }
        Ok(())
    }

    pub fn n_win(&self, i: usize, j: usize) -> u32 {
        self.wins[i * self.n_systems() + j]
    }

    pub fn n_draw(&self, i: usize, j: usize) -> u32 {
        self.draws[i * self.n_systems() + j]
    }

    pub fn n_between(&self, i: usize, j: usize) -> u32 {
        self.n_win(i, j) + self.n_win(j, i) + self.n_draw(i, j)
    }

    pub fn wins(&self, i: usize) -> u32 {
        let n = self.n_systems();
        self.wins[i * n..(i + 1) * n].iter().sum()
    }

    pub fn losses(&self, i: usize) -> u32 {
        (0..self.n_systems()).map(|j| self.n_win(j, i)).sum()
    }

    pub fn draws(&self, i: usize) -> u32 {
        let n = self.n_systems();
        self.draws[i * n..(i + 1) * n].iter().sum()
    }

    pub fn index_of(&self, system: &str) -> Option<usize> {
        self.systems.iter().position(|s| s == system)
    }
}

/// Builds a tally from `(system_a, system_b, outcome of a against b)`
/// records. The system set is the sorted union of named systems.
pub fn tally<S: AsRef<str>>(outcomes: &[(S, S, Outcome)]) -> Result<ComparisonTally> {
    let names: BTreeSet<&str> = outcomes
        .iter()
        .flat_map(|(a, b, _)| [a.as_ref(), b.as_ref()])
        .collect();
    let systems: Vec<String> = names.into_iter().map(str::to_owned).collect();
    tally_over(systems, outcomes)
}

/// Like [`tally`], but over a declared system set, so systems that never
/// played still appear with zero counts.
pub fn tally_over<S: AsRef<str>>(
    systems: Vec<String>,
    outcomes: &[(S, S, Outcome)],
) -> Result<ComparisonTally> {
    let lookup: BTreeMap<&str, usize> = systems
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let resolve = |s: &str| {
        lookup.get(s).copied().ok_or_else(|| Error::Unknown {
            kind: "system",
            id: s.to_owned(),
        })
    };
    let idx: Vec<(usize, usize, Outcome)> = outcomes
        .iter()
        .map(|(a, b, o)| Ok((resolve(a.as_ref())?, resolve(b.as_ref())?, *o)))
        .collect::<Result<_>>()?;
    let mut t = ComparisonTally::new(systems);
    for (a, b, o) in idx {
        t.record(a, b, o)?;
    }
    Ok(t)
}

/// Per-system utilities from one aggregator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityScores {
    pub method: Aggregator,
    pub values: BTreeMap<String, f64>,
}

impl UtilityScores {
    pub fn from_parts(method: Aggregator, systems: &[String], values: &[f64]) -> Self {
        UtilityScores {
            method,
            values: systems
                .iter()
                .cloned()
                .zip(values.iter().copied())
                .collect(),
        }
    }

    pub fn get(&self, system: &str) -> Option<f64> {
        self.values.get(system).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Writes `system_id,utility,method`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["system_id", "utility", "method"])?;
        let method = self.method.to_string();
        for (id, v) in &self.values {
            wtr.write_record([id.as_str(), &v.to_string(), &method])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub(crate) fn dc_values(t: &ComparisonTally) -> Vec<f64> {
    (0..t.n_systems())
        .map(|i| t.wins(i) as f64 - t.losses(i) as f64)
        .collect()
}

pub(crate) fn wc_values(t: &ComparisonTally) -> Vec<f64> {
    (0..t.n_systems()).map(|i| t.wins(i) as f64).collect()
}

/// Differential count: `W_i - L_i`.
pub fn agg_dc(t: &ComparisonTally) -> UtilityScores {
    UtilityScores::from_parts(Aggregator::Dc, t.systems(), &dc_values(t))
}

/// Winning count: `W_i`.
pub fn agg_wc(t: &ComparisonTally) -> UtilityScores {
    UtilityScores::from_parts(Aggregator::Wc, t.systems(), &wc_values(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BtlConfig {
    pub max_iter: usize,
    pub tol: f64,
    /// Pseudo-count added to every ordered pair's effective wins.
    pub prior: f64,
}

impl Default for BtlConfig {
    fn default() -> Self {
        BtlConfig {
            max_iter: 200,
            tol: 1e-4,
            prior: 0.01,
        }
    }
}

impl BtlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::invalid("BTL max_iter must be at least 1"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::invalid("BTL tol must be positive"));
        }
        if !(self.prior >= 0.0 && self.prior.is_finite()) {
            return Err(Error::invalid("BTL prior must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BtlFit {
    /// Exponential utilities on the simplex.
    pub q: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BtlResult {
    /// Log-utilities `u_i = ln q_i`.
    pub utilities: UtilityScores,
    /// `q_i`, positive and summing to one. Rank on these.
    pub strengths: UtilityScores,
    pub iterations: usize,
    pub converged: bool,
}

/// Effective wins `w_ij = wins(i over j) + draws(i, j) / 2 + prior`.
fn effective_wins(t: &ComparisonTally, prior: f64) -> Vec<f64> {
    let n = t.n_systems();
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[i * n + j] = t.n_win(i, j) as f64 + 0.5 * t.n_draw(i, j) as f64 + prior;
            }
        }
    }
    w
}

/// The BTL likelihood has a finite maximizer iff the digraph with an edge
/// `i -> j` whenever `w_ij > 0` is strongly connected.
fn check_strongly_connected(t: &ComparisonTally, w: &[f64]) -> Result<()> {
    let n = t.n_systems();
    for i in 0..n {
        if (0..n).all(|j| w[i * n + j] == 0.0) {
            return Err(Error::Disconnected {
                system: t.systems()[i].clone(),
                reason: "has no wins or draws".into(),
            });
        }
        if (0..n).all(|j| w[j * n + i] == 0.0) {
            return Err(Error::Disconnected {
                system: t.systems()[i].clone(),
                reason: "has no losses or draws".into(),
            });
        }
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let edge = if forward { w[i * n + j] } else { w[j * n + i] };
                if edge > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    };
    let (fwd, bwd) = (reach(true), reach(false));
    if let Some(i) = (0..n).find(|&i| !fwd[i] || !bwd[i]) {
        return Err(Error::Disconnected {
            system: t.systems()[i].clone(),
            reason: format!(
                "is not in the same strongly connected component as `{}`",
                t.systems()[0]
            ),
        });
    }
    Ok(())
}

/// Minorization-maximization for the BTL model. Starts from the uniform
/// point and renormalizes to the simplex after every Jacobi sweep.
///
/// MM converges linearly, so a small step alone does not mean a small error:
/// with contraction rate `r` the distance to the fixed point is about
/// `step * r / (1 - r)`. The fit stops once both the largest coordinate change
/// and that error estimate, with `r` taken from the last two steps, are below
/// `tol`.
pub fn fit_btl(t: &ComparisonTally, cfg: &BtlConfig) -> Result<BtlFit> {
    cfg.validate()?;
    let n = t.n_systems();
    if n == 0 {
        return Err(Error::invalid("BTL needs at least one system"));
    }
    if n == 1 {
        return Ok(BtlFit {
            q: vec![1.0],
            iterations: 0,
            converged: true,
        });
    }
    let w = effective_wins(t, cfg.prior);
    if cfg.prior == 0.0 {
        check_strongly_connected(t, &w)?;
    }
    let total_wins: Vec<f64> = (0..n).map(|i| w[i * n..(i + 1) * n].iter().sum()).collect();
    let mut games = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            games[i * n + j] = w[i * n + j] + w[j * n + i];
        }
    }

    let mut q = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut prev_delta = f64::INFINITY;
    for iter in 1..=cfg.max_iter {
        for i in 0..n {
            let row = &games[i * n..(i + 1) * n];
            let denom: f64 = row
                .iter()
                .zip(&q)
                .enumerate()
                .filter(|&(j, (&g, _))| j != i && g > 0.0)
                .map(|(_, (&g, &qj))| g / (q[i] + qj))
                .sum();
            next[i] = total_wins[i] / denom;
        }
        let sum: f64 = next.iter().sum();
        let mut delta = 0.0_f64;
        for (qi, ni) in q.iter_mut().zip(&next) {
            let v = ni / sum;
            delta = delta.max((v - *qi).abs());
            *qi = v;
        }
        let rate = delta / prev_delta;
        prev_delta = delta;
        let at_floor = delta <= 4.0 * f64::EPSILON;
        if at_floor || (delta < cfg.tol && rate < 1.0 && delta * rate / (1.0 - rate) < cfg.tol) {
            return Ok(BtlFit {
                q,
                iterations: iter,
                converged: true,
            });
        }
    }
    Ok(BtlFit {
        q,
        iterations: cfg.max_iter,
        converged: false,
    })
}

pub fn agg_btl(t: &ComparisonTally, cfg: &BtlConfig) -> Result<BtlResult> {
    let fit = fit_btl(t, cfg)?;
    let logs: Vec<f64> = fit.q.iter().map(|q| q.ln()).collect();
    if logs.iter().any(|u| !u.is_finite()) {
        return Err(Error::degenerate("BTL strength underflowed to zero"));
    }
    Ok(BtlResult {
        utilities: UtilityScores::from_parts(Aggregator::Btl, t.systems(), &logs),
        strengths: UtilityScores::from_parts(Aggregator::Btl, t.systems(), &fit.q),
        iterations: fit.iterations,
        converged: fit.converged,
    })
}

/// Preference-score aggregation over `(system_a, system_b, pref)` records:
/// each record adds `pref` to `a` and subtracts it from `b`.
pub fn agg_ps<S: AsRef<str>>(raw: &[(S, S, f64)]) -> Result<UtilityScores> {
    let mut values: BTreeMap<String, f64> = BTreeMap::new();
    for (a, b, p) in raw {
        if !(p.is_finite() && (-1.0..=1.0).contains(p)) {
            return Err(Error::invalid(format!(
                "preference value {p} outside [-1, 1]"
            )));
        }
        *values.entry(a.as_ref().to_owned()).or_insert(0.0) += p;
        *values.entry(b.as_ref().to_owned()).or_insert(0.0) -= p;
    }
    Ok(UtilityScores {
        method: Aggregator::Ps,
        values,
    })
}

/// Per-system arithmetic mean of direct scores.
pub fn agg_mean(scores: &BTreeMap<String, Vec<f64>>) -> Result<UtilityScores> {
    let mut values = BTreeMap::new();
    for (sys, xs) in scores {
        if xs.is_empty() {
            return Err(Error::invalid(format!("system `{sys}` has no scores")));
        }
        values.insert(sys.clone(), xs.iter().sum::<f64>() / xs.len() as f64);
    }
    Ok(UtilityScores {
        method: Aggregator::Mean,
        values,
    })
}
