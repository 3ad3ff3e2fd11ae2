//! Per-rating subjective score datasets.
//!
//! A [`Dataset`] is an immutable list of [`Rating`]s plus derived indexes by
//! system, listener and utterance. Ids are interned in sorted order, so index
//! positions do not depend on row order.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

pub const CSV_HEADER: [&str; 4] = ["system_id", "utterance_id", "listener_id", "score"];
pub const LATENT_HEADER: [&str; 2] = ["system_id", "latent_quality"];

/// Lower and upper end of the absolute MOS scale.
pub const MOS_MIN: f64 = 1.0;
pub const MOS_MAX: f64 = 5.0;

/// One subjective score: `listener_id` scored `utterance_id` of `system_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub system_id: String,
    pub utterance_id: String,
    pub listener_id: String,
    pub score: f64,
}

impl Rating {
    pub fn new(system: &str, utterance: &str, listener: &str, score: f64) -> Self {
        Rating {
            system_id: system.to_owned(),
            utterance_id: utterance.to_owned(),
            listener_id: listener.to_owned(),
            score,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Raw MOS on the 1..5 scale.
    Mos15,
    /// Affinely mapped to [-1, 1].
    Norm11,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    ratings: Vec<Rating>,
    scale: Scale,
    systems: Vec<String>,
    listeners: Vec<String>,
    utterances: Vec<String>,
    rating_system: Vec<u32>,
    rating_listener: Vec<u32>,
    rating_utterance: Vec<u32>,
    by_system: Vec<Vec<u32>>,
    by_listener: Vec<Vec<u32>>,
    by_utterance: Vec<Vec<u32>>,
    listener_index: OnceLock<ListenerIndex>,
}

fn intern(ids: impl Iterator<Item = String>) -> (Vec<String>, HashMap<String, u32>) {
    let sorted: Vec<String> = ids.collect::<BTreeSet<_>>().into_iter().collect();
    let lookup = sorted
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i as u32))
        .collect();
    (sorted, lookup)
}

impl Dataset {
    pub fn new(ratings: Vec<Rating>, scale: Scale) -> Result<Self> {
        let mut seen = HashSet::with_capacity(ratings.len());
        for r in &ratings {
            if !r.score.is_finite() {
                return Err(Error::invalid(format!(
                    "non-finite score for utterance `{}` by listener `{}`",
                    r.utterance_id, r.listener_id
                )));
            }
            if !seen.insert((r.utterance_id.as_str(), r.listener_id.as_str())) {
                return Err(Error::DuplicateRating {
                    utterance: r.utterance_id.clone(),
                    listener: r.listener_id.clone(),
                });
            }
        }

        let (systems, sys_lookup) = intern(ratings.iter().map(|r| r.system_id.clone()));
        let (listeners, lis_lookup) = intern(ratings.iter().map(|r| r.listener_id.clone()));
        let (utterances, utt_lookup) = intern(ratings.iter().map(|r| r.utterance_id.clone()));

        let mut rating_system = Vec::with_capacity(ratings.len());
        let mut rating_listener = Vec::with_capacity(ratings.len());
        let mut rating_utterance = Vec::with_capacity(ratings.len());
        let mut by_system = vec![Vec::new(); systems.len()];
        let mut by_listener = vec![Vec::new(); listeners.len()];
        let mut by_utterance = vec![Vec::new(); utterances.len()];
        for (idx, r) in ratings.iter().enumerate() {
            let idx = idx as u32;
            let s = sys_lookup[&r.system_id];
            let l = lis_lookup[&r.listener_id];
            let u = utt_lookup[&r.utterance_id];
            rating_system.push(s);
            rating_listener.push(l);
            rating_utterance.push(u);
            by_system[s as usize].push(idx);
            by_listener[l as usize].push(idx);
            by_utterance[u as usize].push(idx);
        }

        Ok(Dataset {
            ratings,
            scale,
            systems,
            listeners,
            utterances,
            rating_system,
            rating_listener,
            rating_utterance,
            by_system,
            by_listener,
            by_utterance,
            listener_index: OnceLock::new(),
        })
    }

    pub fn ratings(&self) -> &[Rating] {
        &self.ratings
    }

    pub fn rating(&self, idx: usize) -> &Rating {
        &self.ratings[idx]
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    /// System ids in sorted order; positions are the system indexes used
    /// by pair plans and tallies.
    pub fn systems(&self) -> &[String] {
        &self.systems
    }

    pub fn n_systems(&self) -> usize {
        self.systems.len()
    }

    pub fn listeners(&self) -> &[String] {
        &self.listeners
    }

    pub fn utterances(&self) -> &[String] {
        &self.utterances
    }

    pub fn system_index(&self, id: &str) -> Option<usize> {
        self.systems.binary_search_by(|s| s.as_str().cmp(id)).ok()
    }

    pub fn listener_index(&self, id: &str) -> Option<usize> {
        self.listeners.binary_search_by(|s| s.as_str().cmp(id)).ok()
    }

    pub fn utterance_index(&self, id: &str) -> Option<usize> {
        self.utterances
            .binary_search_by(|s| s.as_str().cmp(id))
            .ok()
    }

    pub fn ratings_of_system(&self, system: usize) -> &[u32] {
        &self.by_system[system]
    }

    pub fn ratings_of_listener(&self, listener: usize) -> &[u32] {
        &self.by_listener[listener]
    }

    pub fn ratings_of_utterance(&self, utterance: usize) -> &[u32] {
        &self.by_utterance[utterance]
    }

    pub fn system_of(&self, rating: usize) -> usize {
        self.rating_system[rating] as usize
    }

    pub fn listener_of(&self, rating: usize) -> usize {
        self.rating_listener[rating] as usize
    }

    pub fn utterance_of(&self, rating: usize) -> usize {
        self.rating_utterance[rating] as usize
    }

    pub(crate) fn listener_groups(&self) -> &ListenerIndex {
        self.listener_index
            .get_or_init(|| ListenerIndex::build(self))
    }

    /// Maps every score by `s -> (s - 3) / 2` onto [-1, 1].
    pub fn normalize(&self) -> Result<Dataset> {
        if self.scale == Scale::Norm11 {
            return Err(Error::invalid("dataset is already normalized"));
        }
        let ratings = self
            .ratings
            .iter()
            .map(|r| Rating {
                score: normalize_score(r.score),
                ..r.clone()
            })
            .collect();
        Dataset::new(ratings, Scale::Norm11)
    }

    pub fn system_truth(&self) -> Result<SystemTruth> {
        if self.is_empty() {
            return Err(Error::invalid("cannot score systems of an empty dataset"));
        }
        let means = self
            .systems
            .iter()
            .zip(&self.by_system)
            .map(|(id, rows)| {
                let scores: Vec<f64> = rows
                    .iter()
                    .map(|&r| self.ratings[r as usize].score)
                    .collect();
                (id.clone(), order_free_mean(scores))
            })
            .collect();
        Ok(SystemTruth(means))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        if header.iter().map(str::trim).ne(CSV_HEADER.iter().copied()) {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{}`", CSV_HEADER.join(",")),
            });
        }

        let mut ratings = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != CSV_HEADER.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 4 columns, found {}", record.len()),
                });
            }
            let score: f64 = record[3].trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("score `{}` is not a number", &record[3]),
            })?;
            if !score.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("score `{}` is not finite", &record[3]),
                });
            }
            ratings.push(Rating::new(&record[0], &record[1], &record[2], score));
        }
        Dataset::new(ratings, Scale::Mos15)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Normalized scores are written with six decimals; MOS-scale scores use
    /// the shortest exact representation (plain integers for quantized MOS).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(CSV_HEADER)?;
        for r in &self.ratings {
            let score = match self.scale {
                Scale::Norm11 => format!("{:.6}", r.score),
                Scale::Mos15 => format!("{}", r.score),
            };
            wtr.write_record([&r.system_id, &r.utterance_id, &r.listener_id, &score])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn normalize_score(s: f64) -> f64 {
    (s - 3.0) / 2.0
}

/// Arithmetic mean, independent of input order.
fn order_free_mean(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Per-system reference quality, keyed by system id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SystemTruth(pub BTreeMap<String, f64>);

impl SystemTruth {
    pub fn get(&self, system: &str) -> Option<f64> {
        self.0.get(system).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<SystemTruth> {
        let mut rdr = csv::Reader::from_path(path)?;
        let header = rdr.headers()?.clone();
        if header.len() != 2 {
            return Err(Error::Parse {
                line: 1,
                message: "expected two columns `system_id,<value>`".into(),
            });
        }
        let mut map = BTreeMap::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let value: f64 = record[1].trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("value `{}` is not a number", &record[1]),
            })?;
            map.insert(record[0].to_owned(), value);
        }
        Ok(SystemTruth(map))
    }

    /// Writes the `system_id,latent_quality` sidecar.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        wtr.write_record(LATENT_HEADER)?;
        for (id, v) in &self.0 {
            wtr.write_record([id.as_str(), &format!("{v}")])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Listener pairs shared by two systems, as positions into their group lists.
type CommonListeners = Vec<(u32, u32)>;

/// Per-system listener groups and lazily computed common-listener lists,
/// used for same-listener pair realization.
#[derive(Debug, Clone)]
pub(crate) struct ListenerIndex {
    n_systems: usize,
    /// `groups[s]`: (listener, ratings of system `s` by that listener),
    /// sorted by listener.
    groups: Vec<Vec<(u32, Vec<u32>)>>,
    common: Option<Vec<OnceLock<CommonListeners>>>,
}

/// Beyond this many systems the pairwise cache would be too large to keep.
const COMMON_CACHE_MAX_SYSTEMS: usize = 4096;

impl ListenerIndex {
    fn build(ds: &Dataset) -> Self {
        let groups = ds
            .by_system
            .iter()
            .map(|rows| {
                let mut by_lis: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
                for &r in rows {
                    by_lis
                        .entry(ds.rating_listener[r as usize])
                        .or_default()
                        .push(r);
                }
                by_lis.into_iter().collect()
            })
            .collect();
        let n = ds.n_systems();
        let common = (n <= COMMON_CACHE_MAX_SYSTEMS).then(|| {
            (0..n * n.saturating_sub(1) / 2)
                .map(|_| OnceLock::new())
                .collect()
        });
        ListenerIndex {
            n_systems: n,
            groups,
            common,
        }
    }

    pub(crate) fn group(&self, system: usize, pos: usize) -> &[u32] {
        &self.groups[system][pos].1
    }

    fn merge(&self, lo: usize, hi: usize) -> Vec<(u32, u32)> {
        let (a, b) = (&self.groups[lo], &self.groups[hi]);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push((i as u32, j as u32));
                    i += 1;
                    j += 1;
                }
            }
        }
        out
    }

    /// Listeners who rated both `lo` and `hi` (`lo < hi`), as positions into
    /// the two systems' group lists.
    pub(crate) fn common(&self, lo: usize, hi: usize) -> std::borrow::Cow<'_, [(u32, u32)]> {
        debug_assert!(lo < hi);
        match &self.common {
            Some(cache) => {
                let n = self.n_systems;
                let slot = lo * n - lo * (lo + 1) / 2 + (hi - lo - 1);
                std::borrow::Cow::Borrowed(cache[slot].get_or_init(|| self.merge(lo, hi)))
            }
            None => std::borrow::Cow::Owned(self.merge(lo, hi)),
        }
    }
}

/// Latent system quality distribution for the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QualityDist {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, sd: f64 },
}

impl Default for QualityDist {
    fn default() -> Self {
        QualityDist::Uniform {
            low: MOS_MIN,
            high: MOS_MAX,
        }
    }
}

impl QualityDist {
    fn validate(&self) -> Result<()> {
        match *self {
            QualityDist::Uniform { low, high }
                if low.is_finite() && high.is_finite() && low <= high =>
            {
                Ok(())
            }
            QualityDist::Normal { mean, sd } if mean.is_finite() && sd.is_finite() && sd >= 0.0 => {
                Ok(())
            }
            _ => Err(Error::invalid(format!(
                "invalid system quality distribution {self:?}"
            ))),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            QualityDist::Uniform { low, high } if low == high => low,
            QualityDist::Uniform { low, high } => Uniform::new_inclusive(low, high)
                .expect("validated bounds")
                .sample(rng),
            QualityDist::Normal { mean, sd } => {
                Normal::new(mean, sd).expect("validated sd").sample(rng)
            }
        }
    }
}

/// Synthetic listening-test generator settings. Defaults follow the scale
/// of the VoiceMOS main-track training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_systems: usize,
    pub utterances_per_system: usize,
    pub ratings_per_utterance: usize,
    pub n_listeners: usize,
    pub system_quality: QualityDist,
    pub listener_bias_sd: f64,
    pub noise_sd: f64,
    /// Round to integer MOS. Scores are clipped to [1, 5] either way.
    pub quantize: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_systems: 175,
            utterances_per_system: 28,
            ratings_per_utterance: 8,
            n_listeners: 288,
            system_quality: QualityDist::default(),
            listener_bias_sd: 0.3,
            noise_sd: 0.5,
            quantize: true,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Zero listener bias, zero noise, no quantization.
    pub fn noiseless(seed: u64) -> Self {
        SynthConfig {
            listener_bias_sd: 0.0,
            noise_sd: 0.0,
            quantize: false,
            seed,
            ..SynthConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_systems", self.n_systems),
            ("utterances_per_system", self.utterances_per_system),
            ("ratings_per_utterance", self.ratings_per_utterance),
            ("n_listeners", self.n_listeners),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("listener_bias_sd", self.listener_bias_sd),
            ("noise_sd", self.noise_sd),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!(
                    "{name} must be a finite non-negative number"
                )));
            }
        }
        self.system_quality.validate()?;
        if self.n_listeners < self.ratings_per_utterance {
            return Err(Error::invalid(format!(
                "infeasible listener assignment: {} listeners cannot give {} distinct ratings per utterance",
                self.n_listeners, self.ratings_per_utterance
            )));
        }
        Ok(())
    }
}

/// A generated dataset together with the latent parameters behind it.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    /// Latent quality `m_i` per system.
    pub latent: SystemTruth,
    pub listener_bias: BTreeMap<String, f64>,
    pub config: SynthConfig,
}

fn id_width(n: usize) -> usize {
    n.saturating_sub(1).to_string().len().max(3)
}

fn system_name(i: usize, n: usize) -> String {
    format!("sys{:0w$}", i, w = id_width(n))
}

fn utterance_name(system: &str, j: usize, n: usize) -> String {
    format!("{system}_utt{:0w$}", j, w = id_width(n))
}

fn draw_score<R: Rng>(
    cfg: &SynthConfig,
    quality: f64,
    bias: f64,
    noise: &Normal<f64>,
    rng: &mut R,
) -> f64 {
    let raw = quality + bias + noise.sample(rng);
    let s = if cfg.quantize { raw.round() } else { raw };
    s.clamp(MOS_MIN, MOS_MAX)
}

/// Draws a dataset from the additive model
/// `score = clip(m_system + b_listener + noise)`, with each utterance rated
/// by `ratings_per_utterance` distinct, uniformly chosen listeners.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::invalid(e.to_string()))?;
    let bias_dist =
        Normal::new(0.0, cfg.listener_bias_sd).map_err(|e| Error::invalid(e.to_string()))?;

    let systems: Vec<String> = (0..cfg.n_systems)
        .map(|i| system_name(i, cfg.n_systems))
        .collect();
    let quality: Vec<f64> = (0..cfg.n_systems)
        .map(|_| cfg.system_quality.draw(&mut rng))
        .collect();
    let listeners: Vec<String> = (0..cfg.n_listeners)
        .map(|i| format!("lis{:0w$}", i, w = id_width(cfg.n_listeners)))
        .collect();
    let bias: Vec<f64> = (0..cfg.n_listeners)
        .map(|_| bias_dist.sample(&mut rng))
        .collect();

    let mut ratings =
        Vec::with_capacity(cfg.n_systems * cfg.utterances_per_system * cfg.ratings_per_utterance);
    for (sys, &m) in systems.iter().zip(&quality) {
        for j in 0..cfg.utterances_per_system {
            let utt = utterance_name(sys, j, cfg.utterances_per_system);
            for l in sample(&mut rng, cfg.n_listeners, cfg.ratings_per_utterance) {
                let score = draw_score(cfg, m, bias[l], &noise, &mut rng);
                ratings.push(Rating::new(sys, &utt, &listeners[l], score));
            }
        }
    }

    Ok(SyntheticData {
        dataset: Dataset::new(ratings, Scale::Mos15)?,
        latent: SystemTruth(systems.iter().cloned().zip(quality).collect()),
        listener_bias: listeners.into_iter().zip(bias).collect(),
        config: cfg.clone(),
    })
}

/// Draws an additional split of fresh ratings for the same utterances and
/// latent system qualities, e.g. a development set for threshold fitting.
///
/// With `fresh_listeners` the ratings come from a new listener pool with
/// newly drawn biases; otherwise they come from the original pool, avoiding
/// any (utterance, listener) already present in `base`.
pub fn generate_heldout(
    base: &SyntheticData,
    ratings_per_utterance: usize,
    fresh_listeners: bool,
    seed: u64,
) -> Result<Dataset> {
    let cfg = &base.config;
    if ratings_per_utterance == 0 {
        return Err(Error::invalid("ratings_per_utterance must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::invalid(e.to_string()))?;
    let bias_dist =
        Normal::new(0.0, cfg.listener_bias_sd).map_err(|e| Error::invalid(e.to_string()))?;

    let pool: Vec<(String, f64)> = if fresh_listeners {
        (0..cfg.n_listeners)
            .map(|i| {
                (
                    format!("flis{:0w$}", i, w = id_width(cfg.n_listeners)),
                    bias_dist.sample(&mut rng),
                )
            })
            .collect()
    } else {
        base.listener_bias
            .iter()
            .map(|(k, v)| (k.clone(), *v))
            .collect()
    };

    let ds = &base.dataset;
    let mut ratings = Vec::with_capacity(ds.utterances().len() * ratings_per_utterance);
    for (u, utt) in ds.utterances().iter().enumerate() {
        let rows = ds.ratings_of_utterance(u);
        let sys = &ds.rating(rows[0] as usize).system_id;
        let m = base.latent.get(sys).ok_or_else(|| Error::Unknown {
            kind: "system",
            id: sys.clone(),
        })?;
        let taken: HashSet<&str> = if fresh_listeners {
            HashSet::new()
        } else {
            rows.iter()
                .map(|&r| ds.rating(r as usize).listener_id.as_str())
                .collect()
        };
        let eligible: Vec<&(String, f64)> = pool
            .iter()
            .filter(|(l, _)| !taken.contains(l.as_str()))
            .collect();
        if eligible.len() < ratings_per_utterance {
            return Err(Error::invalid(format!(
                "utterance `{utt}` has only {} unused listeners, {} requested",
                eligible.len(),
                ratings_per_utterance
            )));
        }
        for pick in sample(&mut rng, eligible.len(), ratings_per_utterance) {
            let (lis, b) = eligible[pick];
            let score = draw_score(cfg, m, *b, &noise, &mut rng);
            ratings.push(Rating::new(sys, utt, lis, score));
        }
    }
    Dataset::new(ratings, Scale::Mos15)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: &[(&str, &str, &str, f64)]) -> Dataset {
        Dataset::new(
            rows.iter()
                .map(|&(s, u, l, x)| Rating::new(s, u, l, x))
                .collect(),
            Scale::Mos15,
        )
        .unwrap()
    }

    #[test]
    fn load_three_rows_one_system() {
        let text = "system_id,utterance_id,listener_id,score\nA,u1,l1,4\nA,u2,l1,3\nA,u1,l2,5\n";
        let d = Dataset::read_csv(text.as_bytes()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.n_systems(), 1);
        assert_eq!(d.scale(), Scale::Mos15);
        assert_eq!(d.rating(2).score, 5.0);
    }

    #[test]
    fn header_only_is_empty() {
        let d = Dataset::read_csv("system_id,utterance_id,listener_id,score\n".as_bytes()).unwrap();
        assert!(d.is_empty());
        assert!(d.system_truth().is_err());
    }

    #[test]
    fn duplicate_utterance_listener_rejected() {
        let text = "system_id,utterance_id,listener_id,score\nA,utt1,lis1,4\nA,utt1,lis1,2\n";
        match Dataset::read_csv(text.as_bytes()) {
            Err(Error::DuplicateRating {
                utterance,
                listener,
            }) => {
                assert_eq!((utterance.as_str(), listener.as_str()), ("utt1", "lis1"));
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad_score = "system_id,utterance_id,listener_id,score\nA,u1,l1,4\nA,u2,l1,four\n";
        match Dataset::read_csv(bad_score.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let short_row = "system_id,utterance_id,listener_id,score\nA,u1,4\n";
        match Dataset::read_csv(short_row.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let bad_header = "sys,utt,lis,score\n";
        assert!(matches!(
            Dataset::read_csv(bad_header.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn normalize_maps_affinely() {
        let d = ds(&[
            ("A", "u1", "l", 3.0),
            ("A", "u2", "l", 5.0),
            ("A", "u3", "l", 1.0),
            ("A", "u4", "l", 4.0),
        ]);
        let n = d.normalize().unwrap();
        let scores: Vec<f64> = n.ratings().iter().map(|r| r.score).collect();
        assert_eq!(scores, vec![0.0, 1.0, -1.0, 0.5]);
        assert_eq!(n.scale(), Scale::Norm11);
        assert!(n.normalize().is_err());
    }

    #[test]
    fn system_truth_means() {
        let d = ds(&[
            ("A", "u1", "l1", 4.0),
            ("A", "u2", "l1", 4.0),
            ("A", "u3", "l1", 5.0),
            ("A", "u4", "l1", 3.0),
        ]);
        assert_eq!(d.system_truth().unwrap().get("A"), Some(4.0));

        let single = ds(&[("A", "u1", "l1", 2.0)]);
        assert_eq!(single.system_truth().unwrap().get("A"), Some(2.0));

        let two = ds(&[
            ("A", "u1", "l1", 5.0),
            ("A", "u2", "l1", 5.0),
            ("B", "u3", "l1", 1.0),
            ("B", "u4", "l1", 3.0),
        ]);
        let t = two.system_truth().unwrap();
        assert_eq!(t.get("A"), Some(5.0));
        assert_eq!(t.get("B"), Some(2.0));
    }

    #[test]
    fn indexes_resolve_both_ways() {
        let d = ds(&[
            ("B", "u1", "l2", 4.0),
            ("A", "u2", "l1", 3.0),
            ("B", "u3", "l1", 2.0),
        ]);
        assert_eq!(d.systems(), ["A", "B"]);
        for s in 0..d.n_systems() {
            for &r in d.ratings_of_system(s) {
                assert_eq!(d.system_of(r as usize), s);
            }
        }
        let total: usize = (0..d.listeners().len())
            .map(|l| d.ratings_of_listener(l).len())
            .sum();
        assert_eq!(total, d.len());
        assert_eq!(d.system_index("B"), Some(1));
        assert_eq!(d.listener_index("l9"), None);
    }

    #[test]
    fn csv_round_trip_keeps_rows() {
        let d = ds(&[
            ("A", "u1", "l1", 4.0),
            ("B", "u2", "l1", std::f64::consts::E),
        ]);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("A,u1,l1,4\n"));
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.ratings(), d.ratings());
    }

    #[test]
    fn normalized_csv_uses_six_decimals() {
        let d = ds(&[("A", "u1", "l1", 4.0)]).normalize().unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .ends_with("A,u1,l1,0.500000\n"));
    }

    #[test]
    fn noiseless_synthetic_reproduces_latent() {
        let cfg = SynthConfig {
            n_systems: 12,
            utterances_per_system: 4,
            n_listeners: 20,
            ..SynthConfig::noiseless(3)
        };
        let data = generate_synthetic(&cfg).unwrap();
        for r in data.dataset.ratings() {
            assert_eq!(Some(r.score), data.latent.get(&r.system_id));
        }
        let truth = data.dataset.system_truth().unwrap();
        for (id, m) in data.latent.iter() {
            let t = truth.get(id).unwrap();
            assert!((t - m).abs() <= 1e-12 * m.abs());
        }
    }

    #[test]
    fn default_synthetic_size() {
        let data = generate_synthetic(&SynthConfig {
            seed: 1,
            ..SynthConfig::default()
        })
        .unwrap();
        assert_eq!(data.dataset.len(), 175 * 28 * 8);
        assert_eq!(data.dataset.len(), 39_200);
        assert_eq!(data.dataset.n_systems(), 175);
        assert!(data
            .dataset
            .ratings()
            .iter()
            .all(|r| r.score.fract() == 0.0 && (1.0..=5.0).contains(&r.score)));
    }

    #[test]
    fn synthetic_is_deterministic() {
        let cfg = SynthConfig {
            n_systems: 10,
            seed: 99,
            ..SynthConfig::default()
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        generate_synthetic(&cfg)
            .unwrap()
            .dataset
            .write_csv(&mut a)
            .unwrap();
        generate_synthetic(&cfg)
            .unwrap()
            .dataset
            .write_csv(&mut b)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn infeasible_assignment_rejected() {
        let cfg = SynthConfig {
            n_listeners: 7,
            ratings_per_utterance: 8,
            ..SynthConfig::default()
        };
        assert!(matches!(
            generate_synthetic(&cfg),
            Err(Error::InvalidArgument(_))
        ));
        let zero = SynthConfig {
            n_systems: 0,
            ..SynthConfig::default()
        };
        assert!(generate_synthetic(&zero).is_err());
    }

    #[test]
    fn heldout_avoids_existing_pairs() {
        let cfg = SynthConfig {
            n_systems: 8,
            utterances_per_system: 5,
            n_listeners: 20,
            seed: 4,
            ..SynthConfig::default()
        };
        let base = generate_synthetic(&cfg).unwrap();
        let dev = generate_heldout(&base, 4, false, 11).unwrap();
        assert_eq!(dev.len(), 8 * 5 * 4);
        let seen: HashSet<(&str, &str)> = base
            .dataset
            .ratings()
            .iter()
            .map(|r| (r.utterance_id.as_str(), r.listener_id.as_str()))
            .collect();
        assert!(dev
            .ratings()
            .iter()
            .all(|r| !seen.contains(&(r.utterance_id.as_str(), r.listener_id.as_str()))));
        assert_eq!(dev.utterances(), base.dataset.utterances());

        let fresh = generate_heldout(&base, 4, true, 11).unwrap();
        assert!(fresh.listeners().iter().all(|l| l.starts_with("flis")));
        assert!(generate_heldout(&base, 13, false, 1).is_err());
    }

    #[test]
    fn common_listeners_match_brute_force() {
        let cfg = SynthConfig {
            n_systems: 6,
            utterances_per_system: 3,
            n_listeners: 12,
            ratings_per_utterance: 2,
            seed: 5,
            ..SynthConfig::default()
        };
        let d = generate_synthetic(&cfg).unwrap().dataset;
        let idx = d.listener_groups();
        for a in 0..d.n_systems() {
            for b in a + 1..d.n_systems() {
                let la: BTreeSet<usize> = d
                    .ratings_of_system(a)
                    .iter()
                    .map(|&r| d.listener_of(r as usize))
                    .collect();
                let lb: BTreeSet<usize> = d
                    .ratings_of_system(b)
                    .iter()
                    .map(|&r| d.listener_of(r as usize))
                    .collect();
                let expected = la.intersection(&lb).count();
                let common = idx.common(a, b);
                assert_eq!(common.len(), expected);
                for &(pa, pb) in common.iter() {
                    let ra = idx.group(a, pa as usize)[0] as usize;
                    let rb = idx.group(b, pb as usize)[0] as usize;
                    assert_eq!(d.listener_of(ra), d.listener_of(rb));
                }
            }
        }
    }
}
