//! The Bayesian-bootstrap Gaussian copula sampler.
//!
//! Conditional on one marginal draw `F`, the latent matrix `Z` and the
//! correlation matrix `R` are sampled by Gibbs:
//!
//! * **A** updates every latent cell from its Gaussian full conditional:
//!   observed continuous cells are pinned to `Phi^{-1}(F~(x))`, observed
//!   ordinal cells are truncated to their category's cutoff interval, and
//!   missing cells are unconstrained.
//! * **B** draws `R* ~ Inv-Wishart(nu0 + n, psi0 + Z^T Z)` and rescales it to
//!   unit diagonal.
//! * **C** maps missing latents back through `F~^{-1}(Phi(z))` or the
//!   cutoffs.
//!
//! [`run_bbgc`] repeats this for `M` independent marginal draws and pools the
//! retained Step-C output, which averages the imputation posterior over `F`.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{ColumnKind, MixedDataset};
use crate::error::{Error, Result};
use crate::kernels::{inverse_wishart, truncated_normal, PriorConfig, RngHandle};
use crate::linalg::Matrix;
use crate::marginals::{
    draw_marginal, ecdf_marginal, latent_cutoffs, CutoffSet, Cutoffs, Degeneracy, MarginalDraw,
};
use crate::normal;
use crate::scalar::Real;

/// Diagonal jitter added when a factorization of `R` fails.
pub const JITTER: f64 = 1e-10;

/// Floor on conditional variances.
const MIN_VARIANCE: f64 = 1e-12;

/// Initial latent clamp for ordinal cells in an unbounded end category.
const INIT_CLAMP: f64 = 8.0;

/// Symmetric, unit-diagonal, positive-definite matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationMatrix<T>(Matrix<T>);

impl<T: Real> CorrelationMatrix<T> {
    pub fn identity(p: usize) -> Self {
        Self(Matrix::identity(p))
    }

    /// Validates an existing matrix.
    pub fn try_new(m: Matrix<T>) -> Result<Self> {
        let c = Self(m);
        c.validate()?;
        Ok(c)
    }

    /// `diag(S)^{-1/2} S diag(S)^{-1/2}` for a covariance `S`.
    pub fn from_covariance(s: &Matrix<T>) -> Result<Self> {
        let p = s.rows();
        if !s.is_square() {
            return Err(Error::NotPositiveDefinite);
        }
        let inv_sd: Vec<T> = (0..p)
            .map(|i| {
                let d = s[(i, i)];
                if d > T::zero() && d.is_finite() {
                    Ok(T::one() / d.sqrt())
                } else {
                    Err(Error::NotPositiveDefinite)
                }
            })
            .collect::<Result<_>>()?;
        let mut r = Matrix::from_fn(p, p, |i, j| {
            if i == j {
                T::one()
            } else {
                (s[(i, j)] * inv_sd[i] * inv_sd[j])
                    .max(-T::one())
                    .min(T::one())
            }
        });
        r.symmetrize();
        Ok(Self(r))
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.0;
        if !m.is_square() {
            return Err(Error::Numerical("correlation matrix is not square".into()));
        }
        if !m.is_symmetric(T::lit(1e-10)) {
            return Err(Error::Numerical(
                "correlation matrix is not symmetric".into(),
            ));
        }
        for i in 0..m.rows() {
            if m[(i, i)] != T::one() {
                return Err(Error::Numerical(format!(
                    "diagonal entry {i} is {}",
                    m[(i, i)]
                )));
            }
            for j in 0..m.cols() {
                if m[(i, j)].abs() > T::one() {
                    return Err(Error::Numerical(
                        "off-diagonal entry outside [-1, 1]".into(),
                    ));
                }
            }
        }
        m.cholesky().map(|_| ())
    }
}

/// Gaussian full conditional of one coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionalParams<T> {
    pub mu: T,
    pub sigma2: T,
    /// Set when a jittered factorization or the variance floor was needed.
    pub jittered: bool,
}

fn cholesky_with_jitter<T: Real>(m: &Matrix<T>) -> Result<(crate::linalg::Cholesky<T>, bool)> {
    match m.cholesky() {
        Ok(c) => Ok((c, false)),
        Err(_) => {
            let mut mj = m.clone();
            mj.add_diagonal(T::lit(JITTER));
            Ok((mj.cholesky()?, true))
        }
    }
}

/// `mu = R_{j,-j} R_{-j,-j}^{-1} z_{-j}` and
/// `sigma2 = 1 - R_{j,-j} R_{-j,-j}^{-1} R_{-j,j}`, by a direct partitioned
/// solve.
pub fn conditional_params<T: Real>(
    r: &CorrelationMatrix<T>,
    z_row: &[T],
    j: usize,
) -> Result<ConditionalParams<T>> {
    let p = r.dim();
    assert_eq!(z_row.len(), p);
    assert!(j < p);
    if p == 1 {
        return Ok(ConditionalParams {
            mu: T::zero(),
            sigma2: T::one(),
            jittered: false,
        });
    }
    let m = r.matrix();
    let sub = m.without(j);
    let cross: Vec<T> = (0..p).filter(|&k| k != j).map(|k| m[(k, j)]).collect();
    let z_rest: Vec<T> = (0..p).filter(|&k| k != j).map(|k| z_row[k]).collect();
    let (chol, mut jittered) = cholesky_with_jitter(&sub)?;
    let beta = chol.solve(&cross);
    let mu: T = beta.iter().zip(&z_rest).map(|(&b, &z)| b * z).sum();
    let explained: T = beta.iter().zip(&cross).map(|(&b, &c)| b * c).sum();
    let mut sigma2 = m[(j, j)] - explained;
    if !(sigma2 >= T::lit(MIN_VARIANCE)) {
        sigma2 = T::lit(MIN_VARIANCE);
        jittered = true;
    }
    Ok(ConditionalParams {
        mu,
        sigma2,
        jittered,
    })
}

/// All full conditionals of `N(0, R)` from one factorization of `R`:
/// with `Q = R^{-1}`, `mu_j = -sum_{k != j} Q_jk z_k / Q_jj` and
/// `sigma2_j = 1 / Q_jj`.
#[derive(Clone, Debug)]
pub struct ConditionalKernel<T> {
    /// Row `j` holds the regression coefficients of column `j` on the rest,
    /// with a zero at position `j`.
    coef: Matrix<T>,
    sd: Vec<T>,
    jittered: bool,
}

impl<T: Real> ConditionalKernel<T> {
    pub fn new(r: &CorrelationMatrix<T>) -> Result<Self> {
        let p = r.dim();
        let (chol, jittered) = cholesky_with_jitter(r.matrix())?;
        let q = chol.inverse();
        let mut coef = Matrix::zeros(p, p);
        let mut sd = Vec::with_capacity(p);
        for j in 0..p {
            let qjj = q[(j, j)];
            for k in 0..p {
                if k != j {
                    coef[(j, k)] = -q[(j, k)] / qjj;
                }
            }
            sd.push((T::one() / qjj).max(T::lit(MIN_VARIANCE)).sqrt());
        }
        Ok(Self { coef, sd, jittered })
    }

    #[inline]
    pub fn params(&self, z_row: &[T], j: usize) -> (T, T) {
        let mu = self
            .coef
            .row(j)
            .iter()
            .zip(z_row)
            .map(|(&c, &z)| c * z)
            .sum();
        (mu, self.sd[j])
    }

    pub fn jittered(&self) -> bool {
        self.jittered
    }
}

/// Which marginal model each chain uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MarginalMode {
    /// Fresh Dirichlet weights per chain.
    #[default]
    Bootstrap,
    /// Uniform weights: the empirical CDF with the `n/(n+1)` adjustment.
    Ecdf,
}

impl std::str::FromStr for MarginalMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bootstrap" | "bb" => Ok(Self::Bootstrap),
            "ecdf" => Ok(Self::Ecdf),
            _ => Err(Error::arg(format!(
                "unknown marginal mode {s:?} (expected bootstrap or ecdf)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainConfig<T> {
    /// Number of marginal draws `M`, one chain each.
    pub m_marginal_draws: usize,
    pub iters_per_draw: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// `None` uses [`PriorConfig::default_for`] on the modelled columns.
    pub prior: Option<PriorConfig<T>>,
    pub seed: u64,
    pub marginals: MarginalMode,
    /// Keep every retained continuous imputation, not only moments.
    pub keep_samples: bool,
}

impl<T: Real> Default for ChainConfig<T> {
    fn default() -> Self {
        Self {
            m_marginal_draws: 20,
            iters_per_draw: 200,
            burn_in: 100,
            thin: 2,
            prior: None,
            seed: crate::kernels::DEFAULT_SEED,
            marginals: MarginalMode::Bootstrap,
            keep_samples: false,
        }
    }
}

impl<T: Real> ChainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.m_marginal_draws == 0 {
            return Err(Error::arg("need at least one marginal draw"));
        }
        if self.iters_per_draw == 0 || self.thin == 0 {
            return Err(Error::arg("iteration count and thinning must be positive"));
        }
        if self.burn_in >= self.iters_per_draw {
            return Err(Error::arg(format!(
                "burn-in {} must be below iterations {}",
                self.burn_in, self.iters_per_draw
            )));
        }
        Ok(())
    }

    /// Retained sweeps per chain.
    pub fn retained_per_chain(&self) -> usize {
        (self.iters_per_draw - self.burn_in).div_ceil(self.thin)
    }

    fn is_retained(&self, iter: usize) -> bool {
        iter >= self.burn_in && (iter - self.burn_in) % self.thin == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Role<T> {
    ObservedContinuous(T),
    ObservedOrdinal { lo: T, hi: T },
    Missing,
}

/// One marginal draw applied to a dataset: per-cell latent constraints for
/// the modelled ("active") columns.
#[derive(Clone, Debug)]
pub struct LatentModel<'a, T> {
    data: &'a MixedDataset<T>,
    active: Vec<usize>,
    margins: Vec<MarginalDraw<T>>,
    cutoffs: Vec<Option<Cutoffs<T>>>,
    /// `roles[a][i]` for active column `a`, row `i`.
    roles: Vec<Vec<Role<T>>>,
    /// Missing cells as `(row, active column)`, row-major.
    missing: Vec<(usize, usize)>,
}

impl<'a, T: Real> LatentModel<'a, T> {
    /// `margins[a]` is the draw for data column `active[a]`.
    pub fn new(
        data: &'a MixedDataset<T>,
        active: Vec<usize>,
        margins: Vec<MarginalDraw<T>>,
    ) -> Result<Self> {
        if active.len() != margins.len() {
            return Err(Error::arg(format!(
                "{} active columns but {} marginal draws",
                active.len(),
                margins.len()
            )));
        }
        let n = data.n_rows();
        let mut cutoffs = Vec::with_capacity(active.len());
        let mut roles = Vec::with_capacity(active.len());
        for (&j, m) in active.iter().zip(&margins) {
            let cut = match data.kinds()[j] {
                ColumnKind::Ordinal { levels } => Some(latent_cutoffs(m, levels)),
                ColumnKind::Continuous => None,
            };
            let col_roles: Vec<Role<T>> = (0..n)
                .map(|i| match (data.get(i, j), &cut) {
                    (None, _) => Role::Missing,
                    (Some(x), None) => Role::ObservedContinuous(normal::quantile(m.cdf(x))),
                    (Some(x), Some(c)) => {
                        let (lo, hi) = c.interval(x.to_u32().expect("validated category"));
                        Role::ObservedOrdinal { lo, hi }
                    }
                })
                .collect();
            cutoffs.push(cut);
            roles.push(col_roles);
        }
        let mut missing = Vec::new();
        for i in 0..n {
            for (a, col) in roles.iter().enumerate() {
                if matches!(col[i], Role::Missing) {
                    missing.push((i, a));
                }
            }
        }
        Ok(Self {
            data,
            active,
            margins,
            cutoffs,
            roles,
            missing,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.data.n_rows()
    }

    pub fn dim(&self) -> usize {
        self.active.len()
    }

    pub fn active_columns(&self) -> &[usize] {
        &self.active
    }

    pub fn margins(&self) -> &[MarginalDraw<T>] {
        &self.margins
    }

    /// Cutoffs indexed by data column.
    pub fn cutoff_set(&self) -> CutoffSet<T> {
        let mut columns = vec![None; self.data.n_cols()];
        for (a, &j) in self.active.iter().enumerate() {
            columns[j] = self.cutoffs[a].clone();
        }
        CutoffSet { columns }
    }

    /// Missing cells of active columns as `(row, data column)`, in the
    /// order Step C reports them.
    pub fn missing_cells(&self) -> Vec<(usize, usize)> {
        self.missing
            .iter()
            .map(|&(i, a)| (i, self.active[a]))
            .collect()
    }
}

/// Latents (`n x p_active`) and the current correlation matrix.
#[derive(Clone, Debug)]
pub struct GibbsState<T> {
    pub z: Matrix<T>,
    pub r: CorrelationMatrix<T>,
    pub iteration: usize,
    /// Count of sweeps that needed jitter or the variance floor.
    pub numerical_warnings: u64,
}

/// Observed continuous latents pinned, observed ordinal latents uniform on
/// their interval (clamped to `[-8, 8]`), missing latents at 0, `R = I`.
pub fn initialize_state<T: Real>(model: &LatentModel<'_, T>, rng: &mut RngHandle) -> GibbsState<T> {
    let n = model.n_rows();
    let p = model.dim();
    let mut z = Matrix::zeros(n, p);
    let clamp = T::lit(INIT_CLAMP);
    for a in 0..p {
        for i in 0..n {
            z[(i, a)] = match model.roles[a][i] {
                Role::ObservedContinuous(v) => v,
                Role::ObservedOrdinal { lo, hi } => {
                    let lo = lo.max(-clamp);
                    let hi = hi.min(clamp);
                    lo + (hi - lo) * T::lit(rng.uniform_open())
                }
                Role::Missing => T::zero(),
            };
        }
    }
    GibbsState {
        z,
        r: CorrelationMatrix::identity(p),
        iteration: 0,
        numerical_warnings: 0,
    }
}

/// Step A: one column-major sweep over all latent cells.
pub fn gibbs_step_a<T: Real>(
    state: &mut GibbsState<T>,
    model: &LatentModel<'_, T>,
    rng: &mut RngHandle,
) -> Result<()> {
    let kernel = ConditionalKernel::new(&state.r)?;
    if kernel.jittered() {
        state.numerical_warnings += 1;
    }
    let n = model.n_rows();
    for a in 0..model.dim() {
        let roles = &model.roles[a];
        for i in 0..n {
            let value = match roles[i] {
                Role::ObservedContinuous(v) => v,
                Role::ObservedOrdinal { lo, hi } => {
                    let (mu, sd) = kernel.params(state.z.row(i), a);
                    truncated_normal(rng, mu, sd, lo, hi)?
                }
                Role::Missing => {
                    let (mu, sd) = kernel.params(state.z.row(i), a);
                    rng.normal(mu, sd)
                }
            };
            state.z[(i, a)] = value;
        }
    }
    Ok(())
}

/// Step B: `R* ~ Inv-Wishart(nu0 + n, psi0 + Z^T Z)`, then unit-diagonal
/// rescaling.
pub fn gibbs_step_b<T: Real>(
    state: &mut GibbsState<T>,
    prior: &PriorConfig<T>,
    rng: &mut RngHandle,
) -> Result<()> {
    let p = state.z.cols();
    if prior.dim() != p {
        return Err(Error::arg(format!(
            "prior dimension {} but {p} latent columns",
            prior.dim()
        )));
    }
    let mut scatter = prior.psi0.clone();
    let mut acc = Matrix::zeros(p, p);
    for i in 0..state.z.rows() {
        let row = state.z.row(i);
        for a in 0..p {
            let za = row[a];
            let dst = acc.row_mut(a);
            for b in 0..=a {
                dst[b] += za * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            acc[(b, a)] = acc[(a, b)];
        }
    }
    scatter.add_assign(&acc);
    let nu = prior.nu0 + T::from_usize_lossy(state.z.rows());
    let cov = inverse_wishart(rng, nu, &scatter)?;
    state.r = CorrelationMatrix::from_covariance(&cov)?;
    state.iteration += 1;
    Ok(())
}

/// Step C: imputed values for the model's missing cells, in
/// [`LatentModel::missing_cells`] order.
pub fn gibbs_step_c<T: Real>(state: &GibbsState<T>, model: &LatentModel<'_, T>) -> Vec<T> {
    model
        .missing
        .iter()
        .map(|&(i, a)| {
            let z = state.z[(i, a)];
            match &model.cutoffs[a] {
                Some(c) => T::lit(c.category(z) as f64),
                None => model.margins[a].quantile_clamped(normal::cdf(z)),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContinuousCell<T> {
    pub row: usize,
    pub col: usize,
    pub mean: T,
    pub sd: T,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrdinalCell<T> {
    pub row: usize,
    pub col: usize,
    /// `counts[l - 1]` is the number of retained draws in category `l`.
    pub counts: Vec<u64>,
    pub mode: u32,
    /// Posterior mean category.
    pub mean: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainDiagnostics<T> {
    pub chain: usize,
    pub seed: u64,
    /// Mean absolute change of the off-diagonal entries of `R` per sweep.
    pub mean_abs_delta_r: Vec<T>,
    pub numerical_warnings: u64,
}

/// How to collapse the posterior of an ordinal cell to one number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OrdinalPoint {
    /// Modal category; keeps the value a valid category.
    #[default]
    Mode,
    /// Posterior mean category; minimizes expected squared error.
    Mean,
}

impl std::str::FromStr for OrdinalPoint {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mode" => Ok(Self::Mode),
            "mean" => Ok(Self::Mean),
            _ => Err(Error::arg(format!(
                "unknown ordinal point rule {s:?} (expected mode or mean)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PosteriorSummary<T> {
    pub continuous: Vec<ContinuousCell<T>>,
    pub ordinal: Vec<OrdinalCell<T>>,
    /// Missing cells of constant columns, filled with the constant.
    pub constant_fills: Vec<(usize, usize, T)>,
    /// Data columns modelled by the copula; `r_mean` is indexed by these.
    pub active_columns: Vec<usize>,
    pub r_mean: Matrix<T>,
    /// Every retained `R` draw, when requested.
    #[serde(skip)]
    pub r_draws: Vec<CorrelationMatrix<T>>,
    /// Retained sweeps pooled over all chains.
    pub retained: usize,
    pub diagnostics: Vec<ChainDiagnostics<T>>,
}

impl<T: Real> PosteriorSummary<T> {
    /// Posterior point value per missing cell: mean for continuous cells,
    /// `rule` for ordinal cells, the constant for constant columns.
    pub fn point_values(&self, rule: OrdinalPoint) -> Vec<((usize, usize), T)> {
        let mut out: Vec<((usize, usize), T)> = Vec::new();
        out.extend(self.continuous.iter().map(|c| ((c.row, c.col), c.mean)));
        out.extend(self.ordinal.iter().map(|c| {
            let v = match rule {
                OrdinalPoint::Mode => T::lit(c.mode as f64),
                OrdinalPoint::Mean => c.mean,
            };
            ((c.row, c.col), v)
        }));
        out.extend(self.constant_fills.iter().map(|&(i, j, v)| ((i, j), v)));
        out
    }

    /// The input with every missing cell filled (continuous: posterior mean,
    /// ordinal: modal category).
    pub fn imputed_dataset(&self, d: &MixedDataset<T>) -> MixedDataset<T> {
        d.with_filled(self.point_values(OrdinalPoint::Mode))
    }

    /// Dense completed matrix; ordinal cells follow `rule`.
    pub fn point_matrix(&self, d: &MixedDataset<T>, rule: OrdinalPoint) -> Matrix<T> {
        let mut m = d.to_matrix(T::nan());
        for ((i, j), v) in self.point_values(rule) {
            m[(i, j)] = v;
        }
        m
    }
}

struct ChainOutput<T> {
    cells: Vec<(usize, usize)>,
    sums: Vec<T>,
    sumsq: Vec<T>,
    samples: Option<Vec<Vec<T>>>,
    /// Per missing cell; empty for continuous cells.
    counts: Vec<Vec<u64>>,
    r_sum: Matrix<T>,
    r_draws: Vec<CorrelationMatrix<T>>,
    retained: usize,
    diag: ChainDiagnostics<T>,
}

enum ColumnPlan<T> {
    Active,
    Constant(T),
}

fn plan_columns<T: Real>(d: &MixedDataset<T>) -> Result<Vec<ColumnPlan<T>>> {
    (0..d.n_cols())
        .map(|j| {
            let obs = d.observed_in_column(j);
            if obs.is_empty() {
                return Err(Error::Degenerate {
                    col: j,
                    reason: "all cells missing".into(),
                });
            }
            match ecdf_marginal(&obs) {
                Ok(_) => Ok(ColumnPlan::Active),
                Err(Degeneracy::Constant | Degeneracy::TooFewObserved { .. }) => {
                    Ok(ColumnPlan::Constant(obs[0]))
                }
            }
        })
        .collect()
}

fn run_chain<T: Real>(
    d: &MixedDataset<T>,
    active: &[usize],
    cfg: &ChainConfig<T>,
    prior: &PriorConfig<T>,
    chain: usize,
    keep_r: bool,
) -> Result<ChainOutput<T>> {
    let seed = cfg.seed.wrapping_add(chain as u64);
    let mut rng = RngHandle::new(seed);
    let margins = active
        .iter()
        .map(|&j| {
            let obs = d.observed_in_column(j);
            match cfg.marginals {
                MarginalMode::Bootstrap => draw_marginal(&mut rng, &obs),
                MarginalMode::Ecdf => ecdf_marginal(&obs),
            }
            .map_err(|e| Error::Degenerate {
                col: j,
                reason: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let model = LatentModel::new(d, active.to_vec(), margins)?;
    let mut state = initialize_state(&model, &mut rng);

    let cells = model.missing_cells();
    let m = cells.len();
    let p = model.dim();
    let mut sums = vec![T::zero(); m];
    let mut sumsq = vec![T::zero(); m];
    let mut samples = cfg.keep_samples.then(|| vec![Vec::new(); m]);
    let mut counts: Vec<Vec<u64>> = cells
        .iter()
        .map(|&(_, j)| vec![0; d.kinds()[j].levels().unwrap_or(0) as usize])
        .collect();
    let mut r_sum = Matrix::zeros(p, p);
    let mut r_draws = Vec::new();
    let mut retained = 0;
    let mut deltas = Vec::with_capacity(cfg.iters_per_draw);
    let off_diag = (p * (p - 1)).max(1);

    for iter in 0..cfg.iters_per_draw {
        let before = state.r.matrix().clone();
        gibbs_step_a(&mut state, &model, &mut rng)?;
        gibbs_step_b(&mut state, prior, &mut rng)?;
        let delta = state.r.matrix().max_abs_diff(&before);
        let mean_delta = {
            let r = state.r.matrix();
            let mut s = T::zero();
            for a in 0..p {
                for b in 0..p {
                    if a != b {
                        s += (r[(a, b)] - before[(a, b)]).abs();
                    }
                }
            }
            debug_assert!(s <= delta * T::from_usize_lossy(off_diag) + T::epsilon());
            s / T::from_usize_lossy(off_diag)
        };
        deltas.push(mean_delta);

        if cfg.is_retained(iter) {
            let values = gibbs_step_c(&state, &model);
            for (k, &v) in values.iter().enumerate() {
                sums[k] += v;
                sumsq[k] += v * v;
                if !counts[k].is_empty() {
                    counts[k][v.to_usize().expect("category") - 1] += 1;
                }
            }
            if let Some(s) = samples.as_mut() {
                for (k, &v) in values.iter().enumerate() {
                    if counts[k].is_empty() {
                        s[k].push(v);
                    }
                }
            }
            r_sum.add_assign(state.r.matrix());
            if keep_r {
                r_draws.push(state.r.clone());
            }
            retained += 1;
        }
    }

    Ok(ChainOutput {
        cells,
        sums,
        sumsq,
        samples,
        counts,
        r_sum,
        r_draws,
        retained,
        diag: ChainDiagnostics {
            chain,
            seed,
            mean_abs_delta_r: deltas,
            numerical_warnings: state.numerical_warnings,
        },
    })
}

/// Full BBGC run: `M` chains, each on a fresh marginal draw, pooled.
pub fn run_bbgc<T: Real>(d: &MixedDataset<T>, cfg: &ChainConfig<T>) -> Result<PosteriorSummary<T>> {
    run_bbgc_with(d, cfg, false)
}

/// As [`run_bbgc`], additionally keeping every retained `R` draw.
pub fn run_bbgc_with<T: Real>(
    d: &MixedDataset<T>,
    cfg: &ChainConfig<T>,
    keep_r: bool,
) -> Result<PosteriorSummary<T>> {
    cfg.validate()?;
    let plans = plan_columns(d)?;
    let active: Vec<usize> = plans
        .iter()
        .enumerate()
        .filter_map(|(j, p)| matches!(p, ColumnPlan::Active).then_some(j))
        .collect();
    if active.len() < 2 {
        return Err(Error::InvalidData(format!(
            "need at least 2 non-degenerate columns, found {}",
            active.len()
        )));
    }
    let prior = match &cfg.prior {
        Some(p) => p.clone(),
        None => PriorConfig::default_for(active.len()),
    };
    if prior.dim() != active.len() {
        return Err(Error::arg(format!(
            "prior has dimension {} but {} columns are modelled",
            prior.dim(),
            active.len()
        )));
    }

    let chains: Vec<ChainOutput<T>> = (0..cfg.m_marginal_draws)
        .into_par_iter()
        .map(|k| run_chain(d, &active, cfg, &prior, k, keep_r))
        .collect::<Result<_>>()?;

    // Serial, chain-ordered reduction keeps the result thread-count independent.
    let cells = chains[0].cells.clone();
    let m = cells.len();
    let p = active.len();
    let mut sums = vec![T::zero(); m];
    let mut sumsq = vec![T::zero(); m];
    let mut samples: Option<Vec<Vec<T>>> = cfg.keep_samples.then(|| vec![Vec::new(); m]);
    let mut counts: Vec<Vec<u64>> = vec![Vec::new(); m];
    let mut r_sum = Matrix::zeros(p, p);
    let mut r_draws = Vec::new();
    let mut retained = 0usize;
    let mut diagnostics = Vec::with_capacity(chains.len());
    for c in chains {
        debug_assert_eq!(c.cells, cells);
        for k in 0..m {
            sums[k] += c.sums[k];
            sumsq[k] += c.sumsq[k];
            if counts[k].is_empty() {
                counts[k] = c.counts[k].clone();
            } else {
                for (a, b) in counts[k].iter_mut().zip(&c.counts[k]) {
                    *a += b;
                }
            }
        }
        if let (Some(all), Some(mine)) = (samples.as_mut(), c.samples) {
            for (dst, src) in all.iter_mut().zip(mine) {
                dst.extend(src);
            }
        }
        r_sum.add_assign(&c.r_sum);
        r_draws.extend(c.r_draws);
        retained += c.retained;
        diagnostics.push(c.diag);
    }
    let total = T::from_usize_lossy(retained);
    let mut r_mean = r_sum.scaled(T::one() / total);
    for a in 0..p {
        r_mean[(a, a)] = T::one();
    }
    r_mean.symmetrize();

    let mut continuous = Vec::new();
    let mut ordinal = Vec::new();
    for (k, &(i, j)) in cells.iter().enumerate() {
        let mean = sums[k] / total;
        match d.kinds()[j] {
            ColumnKind::Continuous => {
                let obs_min = (0..d.n_rows())
                    .filter_map(|r| d.get(r, j))
                    .fold(T::infinity(), T::min);
                let obs_max = (0..d.n_rows())
                    .filter_map(|r| d.get(r, j))
                    .fold(T::neg_infinity(), T::max);
                let var = (sumsq[k] / total - mean * mean).max(T::zero());
                continuous.push(ContinuousCell {
                    row: i,
                    col: j,
                    mean: mean.max(obs_min).min(obs_max),
                    sd: var.sqrt(),
                    samples: samples.as_mut().map(|s| std::mem::take(&mut s[k])),
                });
            }
            ColumnKind::Ordinal { .. } => {
                let cnt = std::mem::take(&mut counts[k]);
                // ties go to the smaller category
                let mode = cnt
                    .iter()
                    .enumerate()
                    .fold(
                        (0usize, 0u64),
                        |best, (l, &c)| if c > best.1 { (l, c) } else { best },
                    )
                    .0 as u32
                    + 1;
                ordinal.push(OrdinalCell {
                    row: i,
                    col: j,
                    counts: cnt,
                    mode,
                    mean,
                });
            }
        }
    }

    let constant_fills = plans
        .iter()
        .enumerate()
        .filter_map(|(j, p)| match p {
            ColumnPlan::Constant(v) => Some((j, *v)),
            ColumnPlan::Active => None,
        })
        .flat_map(|(j, v)| {
            (0..d.n_rows())
                .filter(move |&i| !d.is_observed(i, j))
                .map(move |i| (i, j, v))
        })
        .collect();

    Ok(PosteriorSummary {
        continuous,
        ordinal,
        constant_fills,
        active_columns: active,
        r_mean,
        r_draws,
        retained,
        diagnostics,
    })
}
