//! Amputation: imposing MCAR or MAR missingness on (mostly) complete data.
//!
//! MAR is logistic on fully observed anchor columns. Row `i` gets a score
//! `zbar_i`, the standardized row mean of its standardized anchor values,
//! and every non-anchor cell of the row is masked independently with
//! probability `sigmoid(alpha + beta * zbar_i)`. `alpha` is found by
//! bisection so the expected masked fraction of non-anchor cells hits the
//! target rate.

use rand::seq::index;
use rand::Rng;
use serde::Serialize;

use crate::data::MixedDataset;
use crate::error::{Error, Result};
use crate::kernels::RngHandle;
use crate::scalar::Real;

/// Minimum observed cells kept in every column.
pub const MIN_RETAINED: usize = 2;

/// Mask redraws before giving up on the retention floor.
const MAX_RESAMPLES: usize = 10_000;

const ALPHA_BRACKET: f64 = 50.0;
const CALIBRATION_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Mcar,
    Mar,
}

impl std::str::FromStr for Mechanism {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mcar" => Ok(Self::Mcar),
            "mar" => Ok(Self::Mar),
            _ => Err(Error::arg(format!(
                "unknown mechanism {s:?} (expected mcar or mar)"
            ))),
        }
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mcar => "MCAR",
            Self::Mar => "MAR",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Amount {
    /// Fraction in (0, 1).
    Rate(f64),
    /// Exact number of additional cells.
    Count(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MissingnessSpec {
    pub mechanism: Mechanism,
    pub amount: Amount,
    /// Never-masked columns driving MAR.
    pub anchors: Vec<usize>,
    pub seed: u64,
    /// Logistic slope for MAR.
    pub beta: f64,
}

impl MissingnessSpec {
    pub fn mcar(amount: Amount, seed: u64) -> Self {
        Self {
            mechanism: Mechanism::Mcar,
            amount,
            anchors: Vec::new(),
            seed,
            beta: 1.0,
        }
    }

    pub fn mar(amount: Amount, anchors: Vec<usize>, seed: u64) -> Self {
        Self {
            mechanism: Mechanism::Mar,
            amount,
            anchors,
            seed,
            beta: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.amount {
            Amount::Rate(r) if !(r > 0.0 && r < 1.0) => {
                return Err(Error::arg(format!("rate {r} outside (0, 1)")));
            }
            Amount::Count(0) => return Err(Error::arg("count must be positive")),
            _ => {}
        }
        if self.mechanism == Mechanism::Mar && self.anchors.is_empty() {
            return Err(Error::arg("MAR needs at least one anchor column"));
        }
        if !self.beta.is_finite() {
            return Err(Error::arg("beta must be finite"));
        }
        Ok(())
    }
}

/// Dispatches on the mechanism.
pub fn ampute<T: Real>(d: &MixedDataset<T>, spec: &MissingnessSpec) -> Result<MixedDataset<T>> {
    match spec.mechanism {
        Mechanism::Mcar => ampute_mcar(d, spec),
        Mechanism::Mar => ampute_mar(d, spec),
    }
}

fn retention_ok<T: Real>(d: &MixedDataset<T>, cells: &[(usize, usize)]) -> bool {
    let mut lost = vec![0usize; d.n_cols()];
    for &(_, j) in cells {
        lost[j] += 1;
    }
    (0..d.n_cols()).all(|j| d.observed_count(j) - lost[j] >= MIN_RETAINED)
}

/// Masks exactly `floor(rate * n * p)` (or `count`) currently observed
/// cells, uniformly without replacement.
pub fn ampute_mcar<T: Real>(
    d: &MixedDataset<T>,
    spec: &MissingnessSpec,
) -> Result<MixedDataset<T>> {
    spec.validate()?;
    let candidates: Vec<(usize, usize)> = (0..d.n_rows())
        .flat_map(|i| (0..d.n_cols()).map(move |j| (i, j)))
        .filter(|&(i, j)| d.is_observed(i, j))
        .collect();
    let target = match spec.amount {
        Amount::Rate(r) => (r * (d.n_rows() * d.n_cols()) as f64).floor() as usize,
        Amount::Count(c) => c,
    };
    let removable: usize = (0..d.n_cols())
        .map(|j| d.observed_count(j).saturating_sub(MIN_RETAINED))
        .sum();
    if target > removable {
        return Err(Error::Infeasible(format!(
            "{target} cells requested but at most {removable} can be masked while keeping {MIN_RETAINED} observed per column"
        )));
    }
    if target == 0 {
        return Ok(d.clone());
    }
    let mut rng = RngHandle::new(spec.seed);
    for _ in 0..MAX_RESAMPLES {
        let mut cells: Vec<(usize, usize)> = index::sample(&mut rng, candidates.len(), target)
            .into_iter()
            .map(|k| candidates[k])
            .collect();
        if retention_ok(d, &cells) {
            cells.sort_unstable();
            return Ok(d.with_masked(&cells));
        }
    }
    Err(Error::Infeasible(format!(
        "no mask of {target} cells kept {MIN_RETAINED} observed per column after {MAX_RESAMPLES} draws"
    )))
}

/// Standardized row means of the standardized anchor columns.
pub fn anchor_scores<T: Real>(d: &MixedDataset<T>, anchors: &[usize]) -> Result<Vec<f64>> {
    let n = d.n_rows();
    let mut score = vec![0.0; n];
    for &a in anchors {
        if a >= d.n_cols() {
            return Err(Error::arg(format!(
                "anchor column {a} out of range (p = {})",
                d.n_cols()
            )));
        }
        if d.observed_count(a) != n {
            return Err(Error::arg(format!("anchor column {a} has missing cells")));
        }
        let col: Vec<f64> = d.observed_in_column(a).iter().map(|x| x.f64()).collect();
        let (m, sd) = mean_sd(&col);
        let sd = if sd > 0.0 { sd } else { 1.0 };
        for (s, x) in score.iter_mut().zip(&col) {
            *s += (x - m) / sd;
        }
    }
    for s in score.iter_mut() {
        *s /= anchors.len() as f64;
    }
    let (m, sd) = mean_sd(&score);
    let sd = if sd > 0.0 { sd } else { 1.0 };
    Ok(score.iter().map(|s| (s - m) / sd).collect())
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Intercept with `mean_i sigmoid(alpha + beta * score_i) = rate`.
pub fn calibrate_intercept(scores: &[f64], beta: f64, rate: f64) -> Result<f64> {
    let frac = |alpha: f64| {
        scores
            .iter()
            .map(|&s| sigmoid(alpha + beta * s))
            .sum::<f64>()
            / scores.len() as f64
    };
    let (mut lo, mut hi) = (-ALPHA_BRACKET, ALPHA_BRACKET);
    let (f_lo, f_hi) = (frac(lo), frac(hi));
    if !(f_lo <= rate && rate <= f_hi) {
        return Err(Error::Infeasible(format!(
            "MAR rate {rate} unreachable with beta = {beta}; achievable range [{f_lo:.6}, {f_hi:.6}]"
        )));
    }
    while hi - lo > CALIBRATION_TOL {
        let mid = 0.5 * (lo + hi);
        if frac(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Logistic-on-anchors MAR; anchors are never masked.
pub fn ampute_mar<T: Real>(d: &MixedDataset<T>, spec: &MissingnessSpec) -> Result<MixedDataset<T>> {
    spec.validate()?;
    let scores = anchor_scores(d, &spec.anchors)?;
    let targets: Vec<usize> = (0..d.n_cols())
        .filter(|j| !spec.anchors.contains(j))
        .collect();
    if targets.is_empty() {
        return Err(Error::arg("every column is an anchor"));
    }
    let rate = match spec.amount {
        Amount::Rate(r) => r,
        Amount::Count(c) => {
            let total = d.n_rows() * targets.len();
            if c >= total {
                return Err(Error::Infeasible(format!(
                    "{c} cells requested from {total} non-anchor cells"
                )));
            }
            c as f64 / total as f64
        }
    };
    let alpha = calibrate_intercept(&scores, spec.beta, rate)?;
    let probs: Vec<f64> = scores
        .iter()
        .map(|&s| sigmoid(alpha + spec.beta * s))
        .collect();

    let mut rng = RngHandle::new(spec.seed);
    for _ in 0..MAX_RESAMPLES {
        let mut cells = Vec::new();
        for (i, &pr) in probs.iter().enumerate() {
            for &j in &targets {
                // one draw per cell, observed or not, keeps the stream aligned
                let hit = rng.random::<f64>() < pr;
                if hit && d.is_observed(i, j) {
                    cells.push((i, j));
                }
            }
        }
        if retention_ok(d, &cells) {
            return Ok(d.with_masked(&cells));
        }
    }
    Err(Error::Infeasible(format!(
        "no MAR mask kept {MIN_RETAINED} observed per column after {MAX_RESAMPLES} draws"
    )))
}

/// Rate of masked cells among the given columns.
pub fn masked_fraction<T: Real>(
    before: &MixedDataset<T>,
    after: &MixedDataset<T>,
    columns: &[usize],
) -> f64 {
    let mut masked = 0usize;
    for i in 0..before.n_rows() {
        for &j in columns {
            if before.is_observed(i, j) && !after.is_observed(i, j) {
                masked += 1;
            }
        }
    }
    masked as f64 / (before.n_rows() * columns.len()) as f64
}
