//! System-pair plans (RAND, LINK, BS) and their realization into concrete
//! rating pairs.
//!
//! Plans work on system indexes `0..n`; when realized against a [`Dataset`]
//! index `i` is the dataset's `i`-th system in sorted id order.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Rating};
use crate::error::{Error, Result};

/// Unordered pair of distinct systems, stored with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SystemPair {
    lo: usize,
    hi: usize,
}

impl SystemPair {
    pub fn new(a: usize, b: usize) -> Result<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Ok(SystemPair { lo: a, hi: b }),
            std::cmp::Ordering::Greater => Ok(SystemPair { lo: b, hi: a }),
            std::cmp::Ordering::Equal => Err(Error::invalid(format!("self-pair ({a}, {a})"))),
        }
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMethod {
    Rand,
    Link,
    Bs,
}

impl fmt::Display for PairMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairMethod::Rand => "rand",
            PairMethod::Link => "link",
            PairMethod::Bs => "bs",
        })
    }
}

impl FromStr for PairMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rand" => Ok(PairMethod::Rand),
            "link" => Ok(PairMethod::Link),
            "bs" => Ok(PairMethod::Bs),
            _ => Err(Error::invalid(format!(
                "unknown pair method `{s}` (rand|link|bs)"
            ))),
        }
    }
}

/// Multiset of system pairs with `total` instances over `n_systems` systems.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairPlan {
    n_systems: usize,
    counts: BTreeMap<SystemPair, u32>,
    total: usize,
}

impl PairPlan {
    fn empty(n_systems: usize) -> Self {
        PairPlan {
            n_systems,
            counts: BTreeMap::new(),
            total: 0,
        }
    }

    fn add(&mut self, a: usize, b: usize, times: u32) {
        let pair = SystemPair::new(a, b).expect("generators never emit self-pairs");
        *self.counts.entry(pair).or_insert(0) += times;
        self.total += times as usize;
    }

    pub fn n_systems(&self) -> usize {
        self.n_systems
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn counts(&self) -> &BTreeMap<SystemPair, u32> {
        &self.counts
    }

    pub fn count(&self, a: usize, b: usize) -> u32 {
        SystemPair::new(a, b)
            .ok()
            .and_then(|p| self.counts.get(&p).copied())
            .unwrap_or(0)
    }

    /// Number of plan instances each system takes part in.
    pub fn incidence(&self) -> Vec<usize> {
        let mut inc = vec![0; self.n_systems];
        for (p, &c) in &self.counts {
            inc[p.lo] += c as usize;
            inc[p.hi] += c as usize;
        }
        inc
    }

    /// Writes `system_a,system_b,count`, naming systems by `labels[index]`.
    pub fn write_csv<W: Write>(&self, writer: W, labels: &[String]) -> Result<()> {
        if labels.len() < self.n_systems {
            return Err(Error::invalid(format!(
                "{} labels for a plan over {} systems",
                labels.len(),
                self.n_systems
            )));
        }
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["system_a", "system_b", "count"])?;
        for (p, c) in &self.counts {
            wtr.write_record([labels[p.lo].as_str(), labels[p.hi].as_str(), &c.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn n_combinations(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Checks the (N, K) preconditions of a pair-generation method.
pub fn validate_k(method: PairMethod, n_systems: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("number of pairs K must be at least 1"));
    }
    match method {
        PairMethod::Rand if n_systems < 2 => Err(Error::invalid("RAND needs at least 2 systems")),
        PairMethod::Link if n_systems < 3 => Err(Error::invalid("LINK needs at least 3 systems")),
        PairMethod::Link if !k.is_multiple_of(n_systems) => Err(Error::invalid(format!(
            "LINK needs K to be a multiple of the number of systems ({n_systems}); got K = {k}"
        ))),
        PairMethod::Bs if n_systems < 2 => Err(Error::invalid("BS needs at least 2 systems")),
        PairMethod::Bs if !k.is_multiple_of(n_combinations(n_systems)) => {
            Err(Error::invalid(format!(
                "BS needs K to be a multiple of C({n_systems}, 2) = {}; got K = {k}",
                n_combinations(n_systems)
            )))
        }
        _ => Ok(()),
    }
}

/// RAND: `k` independent uniform draws over all unordered system pairs.
pub fn gen_rand<R: Rng + ?Sized>(n_systems: usize, k: usize, rng: &mut R) -> Result<PairPlan> {
    validate_k(PairMethod::Rand, n_systems, k)?;
    let mut plan = PairPlan::empty(n_systems);
    for _ in 0..k {
        let a = rng.random_range(0..n_systems);
        let mut b = rng.random_range(0..n_systems - 1);
        if b >= a {
            b += 1;
        }
        plan.add(a, b, 1);
    }
    Ok(plan)
}

/// LINK: `k / n` rounds, each shuffling the systems into a ring and pairing
/// every system with its successor. Every system appears in exactly `2k/n`
/// instances.
pub fn gen_link<R: Rng + ?Sized>(n_systems: usize, k: usize, rng: &mut R) -> Result<PairPlan> {
    validate_k(PairMethod::Link, n_systems, k)?;
    let mut plan = PairPlan::empty(n_systems);
    let mut ring: Vec<usize> = (0..n_systems).collect();
    for _ in 0..k / n_systems {
        ring.shuffle(rng);
        for i in 0..n_systems {
            plan.add(ring[i], ring[(i + 1) % n_systems], 1);
        }
    }
    Ok(plan)
}

/// BS: every unordered pair, `k / C(n, 2)` times each.
pub fn gen_bs(n_systems: usize, k: usize) -> Result<PairPlan> {
    validate_k(PairMethod::Bs, n_systems, k)?;
    let rounds = (k / n_combinations(n_systems)) as u32;
    let mut plan = PairPlan::empty(n_systems);
    for a in 0..n_systems {
        for b in a + 1..n_systems {
            plan.add(a, b, rounds);
        }
    }
    Ok(plan)
}

pub fn generate<R: Rng + ?Sized>(
    method: PairMethod,
    n_systems: usize,
    k: usize,
    rng: &mut R,
) -> Result<PairPlan> {
    match method {
        PairMethod::Rand => gen_rand(n_systems, k, rng),
        PairMethod::Link => gen_link(n_systems, k, rng),
        PairMethod::Bs => gen_bs(n_systems, k),
    }
}

/// Two ratings compared against each other, referenced by their row index
/// in the dataset they were drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatingPair {
    pub first: usize,
    pub second: usize,
    pub same_listener: bool,
}

impl RatingPair {
    pub fn ratings<'a>(&self, ds: &'a Dataset) -> (&'a Rating, &'a Rating) {
        (ds.rating(self.first), ds.rating(self.second))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Realization {
    pub pairs: Vec<RatingPair>,
    /// Instances that had no common listener and were sampled without the
    /// constraint.
    pub fallbacks: usize,
}

fn pick<R: Rng + ?Sized>(rows: &[u32], rng: &mut R) -> usize {
    rows[rng.random_range(0..rows.len())] as usize
}

/// Turns every plan instance into one [`RatingPair`].
///
/// Orientation is a fair coin per instance. Without `same_listener` each
/// side is a uniformly drawn rating of its system. With it, a listener is
/// drawn uniformly among those who rated both systems and each side is a
/// uniform rating of its system by that listener; pairs with no common
/// listener fail under `strict` and otherwise fall back to unconstrained
/// sampling.
pub fn realize_plan<R: Rng + ?Sized>(
    plan: &PairPlan,
    ds: &Dataset,
    same_listener: bool,
    strict: bool,
    rng: &mut R,
) -> Result<Realization> {
    if plan.n_systems != ds.n_systems() {
        return Err(Error::invalid(format!(
            "plan covers {} systems but the dataset has {}",
            plan.n_systems,
            ds.n_systems()
        )));
    }
    let groups = same_listener.then(|| ds.listener_groups());
    let mut pairs = Vec::with_capacity(plan.total);
    let mut fallbacks = 0;

    for (pair, &count) in &plan.counts {
        let common = groups.map(|g| g.common(pair.lo, pair.hi));
        if strict && common.as_ref().is_some_and(|c| c.is_empty()) {
            return Err(Error::NoCommonListener {
                a: ds.systems()[pair.lo].clone(),
                b: ds.systems()[pair.hi].clone(),
            });
        }
        for _ in 0..count {
            let flip: bool = rng.random();
            let (lo_rating, hi_rating, constrained) = match (&common, groups) {
                (Some(c), Some(g)) if !c.is_empty() => {
                    let (pa, pb) = c[rng.random_range(0..c.len())];
                    let ra = pick(g.group(pair.lo, pa as usize), rng);
                    let rb = pick(g.group(pair.hi, pb as usize), rng);
                    (ra, rb, true)
                }
                _ => {
                    if same_listener {
                        fallbacks += 1;
                    }
                    let ra = pick(ds.ratings_of_system(pair.lo), rng);
                    let rb = pick(ds.ratings_of_system(pair.hi), rng);
                    (ra, rb, false)
                }
            };
            let (first, second) = if flip {
                (hi_rating, lo_rating)
            } else {
                (lo_rating, hi_rating)
            };
            pairs.push(RatingPair {
                first,
                second,
                same_listener: constrained,
            });
        }
    }
    Ok(Realization { pairs, fallbacks })
}

/// Precomputed listener eligibility for training-pair sampling.
#[derive(Debug, Clone)]
pub struct TrainingPairSampler<'a> {
    ds: &'a Dataset,
    eligible: Vec<usize>,
}

impl<'a> TrainingPairSampler<'a> {
    pub fn new(ds: &'a Dataset) -> Result<Self> {
        let eligible: Vec<usize> = (0..ds.listeners().len())
            .filter(|&l| ds.ratings_of_listener(l).len() >= 2)
            .collect();
        if eligible.is_empty() {
            return Err(Error::invalid(
                "no listener has rated at least two utterances",
            ));
        }
        Ok(TrainingPairSampler { ds, eligible })
    }

    pub fn eligible_listeners(&self) -> &[usize] {
        &self.eligible
    }

    /// A uniformly chosen eligible listener, then two of their ratings
    /// without replacement. The two ratings may belong to the same system.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> RatingPair {
        let listener = self.eligible[rng.random_range(0..self.eligible.len())];
        let rows = self.ds.ratings_of_listener(listener);
        let i = rng.random_range(0..rows.len());
        let mut j = rng.random_range(0..rows.len() - 1);
        if j >= i {
            j += 1;
        }
        RatingPair {
            first: rows[i] as usize,
            second: rows[j] as usize,
            same_listener: true,
        }
    }
}

pub fn sample_training_pair<R: Rng + ?Sized>(ds: &Dataset, rng: &mut R) -> Result<RatingPair> {
    Ok(TrainingPairSampler::new(ds)?.sample(rng))
}

/// Writes `sys_a,utt_a,lis_a,score_a,sys_b,utt_b,lis_b,score_b`.
pub fn write_pairs_csv<W: Write>(writer: W, ds: &Dataset, pairs: &[RatingPair]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "sys_a", "utt_a", "lis_a", "score_a", "sys_b", "utt_b", "lis_b", "score_b",
    ])?;
    for p in pairs {
        let (a, b) = p.ratings(ds);
        wtr.write_record([
            a.system_id.as_str(),
            &a.utterance_id,
            &a.listener_id,
            &a.score.to_string(),
            &b.system_id,
            &b.utterance_id,
            &b.listener_id,
            &b.score.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
