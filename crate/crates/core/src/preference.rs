//! Preference function, ground-truth preference and threshold rules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Win,
    Draw,
    Loss,
}

impl Outcome {
    pub fn value(self) -> i8 {
        match self {
            Outcome::Win => 1,
            Outcome::Draw => 0,
            Outcome::Loss => -1,
        }
    }

    pub fn reversed(self) -> Outcome {
        match self {
            Outcome::Win => Outcome::Loss,
            Outcome::Draw => Outcome::Draw,
            Outcome::Loss => Outcome::Win,
        }
    }
}

/// `2 * sigmoid(x) - 1`, evaluated as `tanh(x / 2)` on `|x|` so the result
/// is exactly odd. Saturates to ±1 in floating point once `|x|` exceeds ~37.
pub fn alpha(x: f64) -> f64 {
    let y = (0.5 * x.abs()).tanh();
    if x < 0.0 {
        -y
    } else {
        y
    }
}

/// Derivative of [`alpha`]: `2 sigmoid(x) (1 - sigmoid(x)) = (1 - alpha(x)^2) / 2`.
pub fn alpha_prime(x: f64) -> f64 {
    let a = alpha(x);
    0.5 * (1.0 - a * a)
}

/// Predicted preference of the first item over the second.
pub fn pref_pred(score_a: f64, score_b: f64) -> f64 {
    alpha(score_a - score_b)
}

/// Sign of the score difference.
pub fn pref_gt(s_a: f64, s_b: f64) -> Outcome {
    if s_a > s_b {
        Outcome::Win
    } else if s_a < s_b {
        Outcome::Loss
    } else {
        Outcome::Draw
    }
}

/// Draw band `[t_lose, t_win]`: `p > t_win` wins, `p < t_lose` loses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    t_lose: f64,
    t_win: f64,
}

impl Thresholds {
    pub fn new(t_lose: f64, t_win: f64) -> Result<Self> {
        if !(t_lose > -1.0 && t_lose <= 0.0) {
            return Err(Error::invalid(format!("t_lose = {t_lose} outside (-1, 0]")));
        }
        if !(0.0..1.0).contains(&t_win) {
            return Err(Error::invalid(format!("t_win = {t_win} outside [0, 1)")));
        }
        Ok(Thresholds { t_lose, t_win })
    }

    pub fn t_lose(&self) -> f64 {
        self.t_lose
    }

    pub fn t_win(&self) -> f64 {
        self.t_win
    }

    pub fn classify(&self, p: f64) -> Outcome {
        if p > self.t_win {
            Outcome::Win
        } else if p < self.t_lose {
            Outcome::Loss
        } else {
            Outcome::Draw
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            t_lose: f64,
            t_win: f64,
        }
        let raw: Raw = serde_json::from_str(s)?;
        Thresholds::new(raw.t_lose, raw.t_win)
    }
}

/// Equal range: thirds of [-1, 1].
pub fn thresholds_er() -> Thresholds {
    Thresholds {
        t_lose: -1.0 / 3.0,
        t_win: 1.0 / 3.0,
    }
}

/// No draw: sign rule. Only an exactly zero preference lands on Draw.
pub fn thresholds_nd() -> Thresholds {
    Thresholds {
        t_lose: 0.0,
        t_win: 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMethod {
    Er,
    Eer,
    Nd,
}

impl fmt::Display for ThresholdMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThresholdMethod::Er => "er",
            ThresholdMethod::Eer => "eer",
            ThresholdMethod::Nd => "nd",
        })
    }
}

impl FromStr for ThresholdMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "er" => Ok(ThresholdMethod::Er),
            "eer" => Ok(ThresholdMethod::Eer),
            "nd" => Ok(ThresholdMethod::Nd),
            _ => Err(Error::invalid(format!(
                "unknown threshold method `{s}` (er|eer|nd)"
            ))),
        }
    }
}

/// Which side of the threshold counts as the positive decision.
#[derive(Clone, Copy)]
enum Side {
    /// positive iff `pred > t`
    Above,
    /// positive iff `pred < t`
    Below,
}

/// Equal-error-rate threshold for one binary task, searched over midpoints
/// of consecutive distinct predictions. Ties in `|FPR - FNR|` go to the
/// candidate with smaller `|t|`.
fn eer_threshold(preds: &[f64], positive: &[bool], side: Side) -> Result<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::degenerate(
            "EER needs both classes present in the truths",
        ));
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[a].total_cmp(&preds[b]));

    // Sweep t upward through the midpoints; `pos_below` / `neg_below` count
    // items with pred < t.
    let (mut pos_below, mut neg_below) = (0usize, 0usize);
    let mut best: Option<(f64, f64)> = None;
    let mut i = 0;
    while i < order.len() {
        let v = preds[order[i]];
        while i < order.len() && preds[order[i]] == v {
            if positive[order[i]] {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
            i += 1;
        }
        if i == order.len() {
            break;
        }
        let t = 0.5 * (v + preds[order[i]]);
        let (fpr, fnr) = match side {
            // decide positive iff pred > t
            Side::Above => (
                (n_neg - neg_below) as f64 / n_neg as f64,
                pos_below as f64 / n_pos as f64,
            ),
            // decide positive iff pred < t
            Side::Below => (
                neg_below as f64 / n_neg as f64,
                (n_pos - pos_below) as f64 / n_pos as f64,
            ),
        };
        let gap = (fpr - fnr).abs();
        let better = match best {
            None => true,
            Some((g, bt)) => gap < g || (gap == g && t.abs() < bt.abs()),
        };
        if better {
            best = Some((gap, t));
        }
    }
    best.map(|(_, t)| t)
        .ok_or_else(|| Error::degenerate("EER needs at least two distinct prediction values"))
}

/// Fits the win and lose thresholds independently by equal error rate on a
/// development set of predictions and ground-truth outcomes.
pub fn fit_eer_thresholds(preds: &[f64], truths: &[Outcome]) -> Result<Thresholds> {
    if preds.len() != truths.len() {
        return Err(Error::invalid(format!(
            "{} predictions but {} truths",
            preds.len(),
            truths.len()
        )));
    }
    if preds.len() < 2 {
        return Err(Error::invalid("EER fitting needs at least two samples"));
    }
    if preds.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("non-finite prediction"));
    }
    let is_win: Vec<bool> = truths.iter().map(|&t| t == Outcome::Win).collect();
    let is_loss: Vec<bool> = truths.iter().map(|&t| t == Outcome::Loss).collect();
    let t_win = eer_threshold(preds, &is_win, Side::Above)?;
    let t_lose = eer_threshold(preds, &is_loss, Side::Below)?;
    if t_win < t_lose {
        return Err(Error::degenerate(format!(
            "EER thresholds cross: t_lose = {t_lose}, t_win = {t_win}"
        )));
    }
    Thresholds::new(t_lose.min(0.0), t_win.max(0.0))
}
