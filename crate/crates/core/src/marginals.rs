//! Bayesian-bootstrap marginal distribution functions.
//!
//! A [`MarginalDraw`] is one realization of the adjusted Bayesian-bootstrap
//! CDF of a column,
//!
//! ```text
//! F~(t) = n/(n+1) * sum_i w_i 1(x_i <= t),   w ~ Dirichlet(1, ..., 1)
//! ```
//!
//! built from the column's observed cells only. The `n/(n+1)` factor keeps
//! `F~` strictly below 1, so `Phi^{-1}(F~(x))` stays finite at the maximum,
//! and makes the uniform-weight version symmetric under `x -> -x`.

use serde::Serialize;
use thiserror::Error;

use crate::kernels::{dirichlet_flat, RngHandle};
use crate::normal;
use crate::scalar::Real;

/// Why a column cannot carry a marginal draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum Degeneracy {
    #[error("only {n_obs} observed value(s); at least 2 are required")]
    TooFewObserved { n_obs: usize },
    #[error("all observed values are equal")]
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginalDraw<T> {
    support: Vec<T>,
    cum_weights: Vec<T>,
    adjustment: T,
    n_obs: usize,
}

impl<T: Real> MarginalDraw<T> {
    /// Builds the step CDF putting `weights[i]` on `values[i]`. Weights must
    /// be positive and sum to one; tied values share one support atom.
    pub fn from_weights(values: &[T], weights: &[T]) -> Result<Self, Degeneracy> {
        assert_eq!(values.len(), weights.len(), "one weight per value");
        let n_obs = values.len();
        if n_obs < 2 {
            return Err(Degeneracy::TooFewObserved { n_obs });
        }
        let mut order: Vec<usize> = (0..n_obs).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite"));

        let mut support = Vec::new();
        let mut cum_weights = Vec::new();
        let mut acc = T::zero();
        for (pos, &i) in order.iter().enumerate() {
            acc += weights[i];
            let last_of_run = order
                .get(pos + 1)
                .is_none_or(|&next| values[next] != values[i]);
            if last_of_run {
                support.push(values[i]);
                cum_weights.push(acc);
            }
        }
        if support.len() < 2 {
            return Err(Degeneracy::Constant);
        }
        // Normalization, so the top atom carries exactly n/(n+1).
        *cum_weights.last_mut().expect("non-empty") = T::one();
        let n = T::from_usize_lossy(n_obs);
        Ok(Self {
            support,
            cum_weights,
            adjustment: n / (n + T::one()),
            n_obs,
        })
    }

    pub fn support(&self) -> &[T] {
        &self.support
    }

    /// Unadjusted cumulative weights at each support atom; last entry is 1.
    pub fn cum_weights(&self) -> &[T] {
        &self.cum_weights
    }

    pub fn adjustment(&self) -> T {
        self.adjustment
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn min(&self) -> T {
        self.support[0]
    }

    pub fn max(&self) -> T {
        *self.support.last().expect("non-empty support")
    }

    /// Largest value the adjusted CDF attains, `n/(n+1)`.
    pub fn ceiling(&self) -> T {
        self.adjustment
    }

    /// Adjusted CDF at the `k`-th support atom.
    #[inline]
    pub fn cdf_at_atom(&self, k: usize) -> T {
        self.adjustment * self.cum_weights[k]
    }

    /// Right-continuous step evaluation of the adjusted CDF.
    pub fn cdf(&self, t: T) -> T {
        let k = self.support.partition_point(|&x| x <= t);
        if k == 0 {
            T::zero()
        } else {
            self.cdf_at_atom(k - 1)
        }
    }

    /// Generalized inverse: the smallest atom whose adjusted cumulative
    /// weight reaches `u`. Values of `u` above `n/(n+1)` map to the maximum.
    pub fn quantile(&self, u: T) -> crate::Result<T> {
        if !(u >= T::zero() && u <= T::one()) {
            return Err(crate::Error::arg(format!(
                "quantile level {u} outside [0, 1]"
            )));
        }
        Ok(self.quantile_clamped(u))
    }

    /// As [`quantile`](Self::quantile) for `u` already known to be in range.
    #[inline]
    pub fn quantile_clamped(&self, u: T) -> T {
        let adj = self.adjustment;
        let k = self.cum_weights.partition_point(|&c| adj * c < u);
        self.support[k.min(self.support.len() - 1)]
    }

    /// Exact `sup_t |F~(t) - F(t)|` against a continuous CDF, evaluated at
    /// the atoms (both one-sided limits) and at `t -> +inf`.
    pub fn sup_distance(&self, true_cdf: impl Fn(T) -> T) -> T {
        let mut sup = T::zero();
        let mut prev = T::zero();
        for (k, &x) in self.support.iter().enumerate() {
            let f = true_cdf(x);
            let here = self.cdf_at_atom(k);
            sup = sup.max((here - f).abs()).max((prev - f).abs());
            prev = here;
        }
        sup.max(T::one() - prev)
    }
}

/// Draws `F~` for one column: Dirichlet weights over its observed values.
pub fn draw_marginal<T: Real>(
    rng: &mut RngHandle,
    observed: &[T],
) -> Result<MarginalDraw<T>, Degeneracy> {
    if observed.len() < 2 {
        return Err(Degeneracy::TooFewObserved {
            n_obs: observed.len(),
        });
    }
    let w = dirichlet_flat(rng, observed.len()).expect("n >= 2");
    MarginalDraw::from_weights(observed, &w)
}

/// The uniform-weight special case: the empirical CDF with the same
/// `n/(n+1)` adjustment.
pub fn ecdf_marginal<T: Real>(observed: &[T]) -> Result<MarginalDraw<T>, Degeneracy> {
    let n = observed.len();
    if n < 2 {
        return Err(Degeneracy::TooFewObserved { n_obs: n });
    }
    let w = vec![T::one() / T::from_usize_lossy(n); n];
    MarginalDraw::from_weights(observed, &w)
}

/// Latent-scale thresholds for one ordinal column.
///
/// `cuts[l]` is the upper bound of category `l` on the latent axis, so
/// category `l` occupies `(cuts[l-1], cuts[l]]`; `cuts[0] = -inf` and
/// `cuts[levels] = +inf`. Interior cutoffs are `Phi^{-1}(F~(l))`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cutoffs<T> {
    cuts: Vec<T>,
}

impl<T: Real> Cutoffs<T> {
    pub fn levels(&self) -> u32 {
        (self.cuts.len() - 1) as u32
    }

    pub fn as_slice(&self) -> &[T] {
        &self.cuts
    }

    /// Latent interval `(lo, hi]` for category `level` (1-based).
    #[inline]
    pub fn interval(&self, level: u32) -> (T, T) {
        let l = level as usize;
        (self.cuts[l - 1], self.cuts[l])
    }

    /// The category whose interval contains `z`.
    pub fn category(&self, z: T) -> u32 {
        // First interior cut with z <= cut; the +inf end catches the rest.
        let interior = &self.cuts[1..self.cuts.len() - 1];
        interior.partition_point(|&c| z > c) as u32 + 1
    }
}

pub fn latent_cutoffs<T: Real>(m: &MarginalDraw<T>, levels: u32) -> Cutoffs<T> {
    assert!(levels >= 2, "ordinal columns have at least 2 levels");
    let mut cuts = Vec::with_capacity(levels as usize + 1);
    cuts.push(T::neg_infinity());
    for l in 1..levels {
        cuts.push(normal::quantile(m.cdf(T::from_usize_lossy(l as usize))));
    }
    cuts.push(T::infinity());
    Cutoffs { cuts }
}

/// Thresholds for every column; `None` for continuous or excluded columns.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CutoffSet<T> {
    pub columns: Vec<Option<Cutoffs<T>>>,
}

impl<T: Real> CutoffSet<T> {
    pub fn get(&self, j: usize) -> Option<&Cutoffs<T>> {
        self.columns.get(j).and_then(Option::as_ref)
    }
}

/// Pointwise credible band of `F~` on the column's distinct observed values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CredibleBand<T> {
    pub level: T,
    pub t: Vec<T>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    /// Plain empirical CDF of the observed values at each grid point.
    pub ecdf: Vec<T>,
}

impl<T: Real> CredibleBand<T> {
    /// Band bounds at an arbitrary `t` (step interpolation); below the grid
    /// the band is `[0, 0]`.
    pub fn bounds_at(&self, t: T) -> (T, T) {
        let k = self.t.partition_point(|&x| x <= t);
        if k == 0 {
            (T::zero(), T::zero())
        } else {
            (self.lower[k - 1], self.upper[k - 1])
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("t,lower,upper,ecdf\n");
        for k in 0..self.t.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.t[k], self.lower[k], self.upper[k], self.ecdf[k]
            ));
        }
        out
    }
}

/// Linear-interpolation sample quantile of sorted data (Hyndman-Fan type 7).
pub fn sample_quantile<T: Real>(sorted: &[T], q: T) -> T {
    assert!(!sorted.is_empty());
    let h = (T::from_usize_lossy(sorted.len() - 1)) * q;
    let lo = h.floor();
    let k = lo.to_usize().unwrap_or(0).min(sorted.len() - 1);
    let frac = h - lo;
    if k + 1 >= sorted.len() {
        sorted[k]
    } else {
        sorted[k] + frac * (sorted[k + 1] - sorted[k])
    }
}

/// Draws `n_draws` bootstrap CDFs and takes the central `level` interval of
/// `F~(t)` at each grid point. `level = 1` gives the full range of draws.
pub fn credible_band<T: Real>(
    rng: &mut RngHandle,
    observed: &[T],
    n_draws: usize,
    level: T,
) -> crate::Result<CredibleBand<T>> {
    if n_draws < 100 {
        return Err(crate::Error::arg(format!(
            "credible band needs >= 100 draws, got {n_draws}"
        )));
    }
    if !(level > T::zero() && level <= T::one()) {
        return Err(crate::Error::arg(format!(
            "credible level {level} outside (0, 1]"
        )));
    }
    let base = ecdf_marginal(observed)?;
    let grid = base.support().to_vec();
    let g = grid.len();
    // draws[k][d]: F~ of draw d at grid point k
    let mut draws = vec![Vec::with_capacity(n_draws); g];
    for _ in 0..n_draws {
        let m = draw_marginal(rng, observed)?;
        debug_assert_eq!(m.support().len(), g);
        for (k, col) in draws.iter_mut().enumerate() {
            col.push(m.cdf_at_atom(k));
        }
    }
    let tail = (T::one() - level) / T::lit(2.0);
    let mut lower = Vec::with_capacity(g);
    let mut upper = Vec::with_capacity(g);
    for col in &mut draws {
        col.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        lower.push(sample_quantile(col, tail));
        upper.push(sample_quantile(col, T::one() - tail));
    }
    let plain = base.cum_weights().to_vec();
    Ok(CredibleBand {
        level,
        t: grid,
        lower,
        upper,
        ecdf: plain,
    })
}
