//! Baseline imputers, the NRMSE metric, the three-block synthetic design,
//! the replicated benchmark and the credible-band coverage experiment.
//!
//! Ordinal columns of the synthetic design are stored as categories
//! `1..=levels`; [`Simulation::offsets`] maps them back to the rounded
//! latent scale (`natural = code + offset`). The benchmark scores every
//! method on that natural scale.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{ColumnKind, MixedDataset};
use crate::error::{Error, Result};
use crate::gibbs::{run_bbgc, ChainConfig, OrdinalPoint};
use crate::kernels::{RngHandle, DEFAULT_SEED};
use crate::linalg::Matrix;
use crate::marginals::{credible_band, CredibleBand};
use crate::missingness::{ampute, Amount, Mechanism, MissingnessSpec};
use crate::normal;
use crate::scalar::Real;

/// Seed offsets separating the amputation and sampler streams.
pub const AMPUTE_SEED_OFFSET: u64 = 1_000_000;
pub const SAMPLER_SEED_OFFSET: u64 = 2_000_000;

pub const DEFAULT_KNN_K: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationRule {
    /// `R_ij = (|i - j| + 1)^-2`.
    #[default]
    InverseSquare,
}

impl CorrelationRule {
    pub fn matrix<T: Real>(self, p: usize) -> Matrix<T> {
        match self {
            Self::InverseSquare => Matrix::from_fn(p, p, |i, j| {
                let d = T::from_usize_lossy(i.abs_diff(j) + 1);
                T::one() / (d * d)
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationDesign {
    pub n: usize,
    /// Multiple of 3: ordinal, uniform and exponential blocks.
    pub p: usize,
    pub rule: CorrelationRule,
    pub seed: u64,
}

impl Default for SimulationDesign {
    fn default() -> Self {
        Self {
            n: 1000,
            p: 15,
            rule: CorrelationRule::InverseSquare,
            seed: DEFAULT_SEED,
        }
    }
}

/// Which block a column of the design belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Rounded,
    Uniform,
    Exponential,
}

impl SimulationDesign {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.p % 3 != 0 {
            return Err(Error::arg(format!(
                "p = {} is not a positive multiple of 3",
                self.p
            )));
        }
        if self.n < 2 {
            return Err(Error::arg(format!("n = {} is below 2", self.n)));
        }
        Ok(())
    }

    pub fn block(&self, j: usize) -> Block {
        match j / (self.p / 3) {
            0 => Block::Rounded,
            1 => Block::Uniform,
            _ => Block::Exponential,
        }
    }

    /// First column of each block.
    pub fn block_leads(&self) -> Vec<usize> {
        let b = self.p / 3;
        vec![0, b, 2 * b]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Simulation<T> {
    pub design: SimulationDesign,
    pub data: MixedDataset<T>,
    pub r_true: Matrix<T>,
    /// Per column: `natural = code + offset` (0 for continuous columns).
    pub offsets: Vec<T>,
}

impl<T: Real> Simulation<T> {
    /// True CDF of column `j` evaluated at a stored value.
    pub fn true_cdf(&self, j: usize, x: T) -> T {
        match self.design.block(j) {
            // P(round(Z) <= v) = Phi(v + 1/2)
            Block::Rounded => normal::cdf(x + self.offsets[j] + T::lit(0.5)),
            Block::Uniform => x.max(T::zero()).min(T::one()),
            Block::Exponential => T::one() - (-x.max(T::zero())).exp(),
        }
    }
}

/// Rows iid `N(0, R)`; first block rounded and stored as categories, middle
/// block `Phi(z)`, last block `-ln(1 - Phi(z))`.
pub fn simulate_dataset<T: Real>(design: &SimulationDesign) -> Result<Simulation<T>> {
    design.validate()?;
    let (n, p) = (design.n, design.p);
    let r: Matrix<T> = design.rule.matrix(p);
    let l = r.cholesky()?.into_factor();
    let mut rng = RngHandle::new(design.seed);
    let mut z = Matrix::<f64>::zeros(n, p);
    let mut e = vec![0.0; p];
    for i in 0..n {
        e.iter_mut().for_each(|x| *x = rng.std_normal());
        for a in 0..p {
            z[(i, a)] = (0..=a).map(|b| l[(a, b)].f64() * e[b]).sum();
        }
    }

    let mut kinds = Vec::with_capacity(p);
    let mut offsets = Vec::with_capacity(p);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p);
    for j in 0..p {
        let zc: Vec<f64> = (0..n).map(|i| z[(i, j)]).collect();
        match design.block(j) {
            Block::Rounded => {
                let v: Vec<f64> = zc.iter().map(|x| x.round()).collect();
                let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let levels = ((hi - lo) as u32 + 1).max(2);
                kinds.push(ColumnKind::Ordinal { levels });
                offsets.push(T::lit(lo - 1.0));
                cols.push(v.iter().map(|x| x - lo + 1.0).collect());
            }
            Block::Uniform => {
                kinds.push(ColumnKind::Continuous);
                offsets.push(T::zero());
                cols.push(zc.iter().map(|&x| normal::cdf_f64(x)).collect());
            }
            Block::Exponential => {
                kinds.push(ColumnKind::Continuous);
                offsets.push(T::zero());
                // 1 - Phi(z) = Phi(-z), kept in the lower tail for precision
                cols.push(zc.iter().map(|&x| -normal::cdf_f64(-x).ln()).collect());
            }
        }
    }
    let values = (0..n)
        .flat_map(|i| cols.iter().map(move |c| Some(T::lit(c[i]))))
        .collect();
    let data = MixedDataset::with_default_names(kinds, values)?;
    Ok(Simulation {
        design: design.clone(),
        data,
        r_true: r,
        offsets,
    })
}

/// Shifts every column by its offset.
pub fn shift_columns<T: Real>(m: &Matrix<T>, offsets: &[T]) -> Matrix<T> {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)] + offsets[j])
}

/// `sqrt(mean((truth - imputed)^2) / var(truth))` over `cells`, with the
/// population variance of the truths at those cells.
pub fn nrmse<T: Real>(
    truth: &Matrix<T>,
    imputed: &Matrix<T>,
    cells: &[(usize, usize)],
) -> Result<T> {
    if truth.rows() != imputed.rows() || truth.cols() != imputed.cols() {
        return Err(Error::arg("truth and imputation differ in shape"));
    }
    if cells.is_empty() {
        return Err(Error::arg("no masked cells to score"));
    }
    let m = T::from_usize_lossy(cells.len());
    let mean = cells.iter().map(|&c| truth[c]).sum::<T>() / m;
    let var = cells.iter().map(|&c| (truth[c] - mean).powi(2)).sum::<T>() / m;
    if !(var > T::zero()) {
        return Err(Error::InvalidData(
            "truth has zero variance at the masked cells".into(),
        ));
    }
    let mse = cells
        .iter()
        .map(|&c| (truth[c] - imputed[c]).powi(2))
        .sum::<T>()
        / m;
    Ok((mse / var).sqrt())
}

fn require_observed<T: Real>(d: &MixedDataset<T>) -> Result<()> {
    for j in 0..d.n_cols() {
        if d.observed_count(j) == 0 {
            return Err(Error::Degenerate {
                col: j,
                reason: "all cells missing".into(),
            });
        }
    }
    Ok(())
}

fn ordinal_round<T: Real>(x: T, levels: u32) -> T {
    x.round().max(T::one()).min(T::lit(levels as f64))
}

/// Column means; ordinal columns get the rounded mean clamped to the
/// category range.
pub fn impute_mean<T: Real>(d: &MixedDataset<T>) -> Result<MixedDataset<T>> {
    require_observed(d)?;
    let fill: Vec<T> = (0..d.n_cols())
        .map(|j| {
            let obs = d.observed_in_column(j);
            let m = obs.iter().copied().sum::<T>() / T::from_usize_lossy(obs.len());
            match d.kinds()[j] {
                ColumnKind::Ordinal { levels } => ordinal_round(m, levels),
                ColumnKind::Continuous => m,
            }
        })
        .collect();
    let cells: Vec<_> = d.index_sets().missing().collect();
    Ok(d.with_filled(cells.into_iter().map(|(i, j)| ((i, j), fill[j]))))
}

/// k-nearest-neighbour imputation.
///
/// Distances are Euclidean over the columns both rows observe, on columns
/// standardized by their observed mean and sd, scaled by
/// `sqrt(p / shared)`. Continuous cells take the neighbour mean, ordinal
/// cells the neighbour mode (ties to the smaller category). Cells with no
/// usable neighbour fall back to the mean imputer.
pub fn impute_knn<T: Real>(d: &MixedDataset<T>, k: usize) -> Result<MixedDataset<T>> {
    let (n, p) = (d.n_rows(), d.n_cols());
    if k == 0 || k >= n {
        return Err(Error::arg(format!("k = {k} outside 1..={}", n - 1)));
    }
    let fallback = impute_mean(d)?;
    let mut std = vec![None; n * p];
    for j in 0..p {
        let obs: Vec<f64> = d.observed_in_column(j).iter().map(|x| x.f64()).collect();
        let m = obs.iter().sum::<f64>() / obs.len() as f64;
        let sd = (obs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / obs.len() as f64).sqrt();
        let sd = if sd > 0.0 { sd } else { 1.0 };
        for i in 0..n {
            std[i * p + j] = d.get(i, j).map(|x| (x.f64() - m) / sd);
        }
    }
    let rows_with_missing: Vec<usize> = (0..n)
        .filter(|&i| (0..p).any(|j| !d.is_observed(i, j)))
        .collect();

    let fills: Vec<Vec<((usize, usize), T)>> = rows_with_missing
        .par_iter()
        .map(|&i| {
            let xi = &std[i * p..(i + 1) * p];
            let mut dist: Vec<(f64, usize)> = (0..n)
                .filter(|&r| r != i)
                .filter_map(|r| {
                    let xr = &std[r * p..(r + 1) * p];
                    let mut ss = 0.0;
                    let mut shared = 0usize;
                    for (a, b) in xi.iter().zip(xr) {
                        if let (Some(a), Some(b)) = (a, b) {
                            ss += (a - b) * (a - b);
                            shared += 1;
                        }
                    }
                    (shared > 0).then(|| ((ss * p as f64 / shared as f64).sqrt(), r))
                })
                .collect();
            dist.sort_by(|a, b| a.partial_cmp(b).expect("finite distance"));

            (0..p)
                .filter(|&j| !d.is_observed(i, j))
                .map(|j| {
                    let neigh: Vec<T> = dist
                        .iter()
                        .filter_map(|&(_, r)| d.get(r, j))
                        .take(k)
                        .collect();
                    let v = if neigh.is_empty() {
                        fallback.get(i, j).expect("filled")
                    } else {
                        match d.kinds()[j] {
                            ColumnKind::Continuous => {
                                neigh.iter().copied().sum::<T>() / T::from_usize_lossy(neigh.len())
                            }
                            ColumnKind::Ordinal { levels } => {
                                let mut counts = vec![0usize; levels as usize];
                                for v in &neigh {
                                    counts[v.to_usize().expect("category") - 1] += 1;
                                }
                                let best = counts
                                    .iter()
                                    .enumerate()
                                    .fold((0, 0), |b, (l, &c)| if c > b.1 { (l, c) } else { b })
                                    .0;
                                T::from_usize_lossy(best + 1)
                            }
                        }
                    };
                    ((i, j), v)
                })
                .collect()
        })
        .collect();
    Ok(d.with_filled(fills.into_iter().flatten()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bbgc,
    Mean,
    Knn,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Bbgc => "BBGC",
            Self::Mean => "MEAN",
            Self::Knn => "KNN",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bbgc" => Ok(Self::Bbgc),
            "mean" => Ok(Self::Mean),
            "knn" => Ok(Self::Knn),
            _ => Err(Error::arg(format!(
                "unknown method {s:?} (expected bbgc, mean or knn)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Benchmark truth: simulated fresh per replication, or a fixed dataset.
#[derive(Clone, Debug, PartialEq)]
pub enum BenchmarkSource<T> {
    Simulated(SimulationDesign),
    Fixed {
        data: MixedDataset<T>,
        offsets: Vec<T>,
    },
}

impl<T: Real> BenchmarkSource<T> {
    fn default_anchors(&self) -> Vec<usize> {
        match self {
            Self::Simulated(d) => d.block_leads(),
            Self::Fixed { .. } => vec![0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchmarkConfig<T> {
    pub mechanisms: Vec<Mechanism>,
    pub rates: Vec<f64>,
    pub methods: Vec<Method>,
    pub replications: usize,
    pub base_seed: u64,
    /// Seed inside is replaced per replication.
    pub chain: ChainConfig<T>,
    pub knn_k: usize,
    /// `None` uses the first column of each block (or column 0).
    pub anchors: Option<Vec<usize>>,
    /// Ordinal point estimate scored for BBGC.
    pub ordinal_point: OrdinalPoint,
}

impl<T: Real> Default for BenchmarkConfig<T> {
    fn default() -> Self {
        Self {
            mechanisms: vec![Mechanism::Mcar],
            rates: vec![0.1, 0.3, 0.5],
            methods: vec![Method::Bbgc, Method::Mean, Method::Knn],
            replications: 20,
            base_seed: DEFAULT_SEED,
            chain: ChainConfig::default(),
            knn_k: DEFAULT_KNN_K,
            anchors: None,
            ordinal_point: OrdinalPoint::Mean,
        }
    }
}

impl<T: Real> BenchmarkConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::arg("replications must be at least 1"));
        }
        if self.mechanisms.is_empty() || self.rates.is_empty() || self.methods.is_empty() {
            return Err(Error::arg(
                "mechanisms, rates and methods must be non-empty",
            ));
        }
        for &r in &self.rates {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::arg(format!("rate {r} outside (0, 1)")));
            }
        }
        self.chain.validate()
    }
}

/// One replication's score.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub mechanism: Mechanism,
    pub rate: f64,
    pub method: Method,
    pub replication: usize,
    pub nrmse: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub method: Method,
    pub mechanism: Mechanism,
    pub rate: f64,
    pub nrmse_mean: f64,
    /// Sample sd across replications; 0 with `sd_defined = false` for one.
    pub nrmse_sd: f64,
    pub sd_defined: bool,
    pub replications: usize,
    pub mean_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchmarkResult {
    pub reports: Vec<EvalReport>,
    pub runs: Vec<RunRecord>,
}

/// Completed matrix for one method, on the dataset's stored scale.
pub fn impute_point<T: Real>(
    d: &MixedDataset<T>,
    method: Method,
    chain: &ChainConfig<T>,
    knn_k: usize,
    ordinal_point: OrdinalPoint,
) -> Result<Matrix<T>> {
    Ok(match method {
        Method::Mean => impute_mean(d)?.to_matrix(T::nan()),
        Method::Knn => impute_knn(d, knn_k)?.to_matrix(T::nan()),
        Method::Bbgc => run_bbgc(d, chain)?.point_matrix(d, ordinal_point),
    })
}

/// Every (mechanism, rate, method) cell over `replications` replications.
///
/// Replication `r` draws data with seed `base + r`, amputes with
/// `base + 1e6 + r` and samples with `base + 2e6 + r`.
pub fn run_benchmark<T: Real>(
    source: &BenchmarkSource<T>,
    cfg: &BenchmarkConfig<T>,
) -> Result<BenchmarkResult> {
    cfg.validate()?;
    let anchors = cfg
        .anchors
        .clone()
        .unwrap_or_else(|| source.default_anchors());
    let mut jobs = Vec::new();
    for r in 0..cfg.replications {
        for &mech in &cfg.mechanisms {
            for &rate in &cfg.rates {
                jobs.push((r, mech, rate));
            }
        }
    }

    let per_job: Vec<Vec<RunRecord>> = jobs
        .par_iter()
        .map(|&(r, mech, rate)| {
            let rep = r as u64;
            let (truth, offsets) = match source {
                BenchmarkSource::Simulated(design) => {
                    let mut design = design.clone();
                    design.seed = cfg.base_seed.wrapping_add(rep);
                    let sim = simulate_dataset::<T>(&design)?;
                    (sim.data, sim.offsets)
                }
                BenchmarkSource::Fixed { data, offsets } => (data.clone(), offsets.clone()),
            };
            let spec = MissingnessSpec {
                mechanism: mech,
                amount: Amount::Rate(rate),
                anchors: if mech == Mechanism::Mar {
                    anchors.clone()
                } else {
                    Vec::new()
                },
                seed: cfg.base_seed.wrapping_add(AMPUTE_SEED_OFFSET + rep),
                beta: 1.0,
            };
            let masked = ampute(&truth, &spec)?;
            let cells: Vec<(usize, usize)> = (0..truth.n_rows())
                .flat_map(|i| (0..truth.n_cols()).map(move |j| (i, j)))
                .filter(|&(i, j)| truth.is_observed(i, j) && !masked.is_observed(i, j))
                .collect();
            let truth_m = shift_columns(&truth.to_matrix(T::nan()), &offsets);
            let mut chain = cfg.chain.clone();
            chain.seed = cfg.base_seed.wrapping_add(SAMPLER_SEED_OFFSET + rep);

            cfg.methods
                .iter()
                .map(|&method| {
                    let start = Instant::now();
                    let imp = impute_point(&masked, method, &chain, cfg.knn_k, cfg.ordinal_point)?;
                    let seconds = start.elapsed().as_secs_f64();
                    let score = nrmse(&truth_m, &shift_columns(&imp, &offsets), &cells)?;
                    Ok(RunRecord {
                        mechanism: mech,
                        rate,
                        method,
                        replication: r,
                        nrmse: score.f64(),
                        seconds,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let runs: Vec<RunRecord> = per_job.into_iter().flatten().collect();

    let mut reports = Vec::new();
    for &mech in &cfg.mechanisms {
        for &rate in &cfg.rates {
            for &method in &cfg.methods {
                let cell: Vec<&RunRecord> = runs
                    .iter()
                    .filter(|x| x.mechanism == mech && x.rate == rate && x.method == method)
                    .collect();
                let k = cell.len() as f64;
                let mean = cell.iter().map(|x| x.nrmse).sum::<f64>() / k;
                let (sd, sd_defined) = if cell.len() > 1 {
                    let v = cell.iter().map(|x| (x.nrmse - mean).powi(2)).sum::<f64>() / (k - 1.0);
                    (v.sqrt(), true)
                } else {
                    (0.0, false)
                };
                reports.push(EvalReport {
                    method,
                    mechanism: mech,
                    rate,
                    nrmse_mean: mean,
                    nrmse_sd: sd,
                    sd_defined,
                    replications: cell.len(),
                    mean_seconds: cell.iter().map(|x| x.seconds).sum::<f64>() / k,
                });
            }
        }
    }
    Ok(BenchmarkResult { reports, runs })
}

/// One row per design cell. Runtimes are left out so the file depends only
/// on the seeds.
pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let mut out =
        String::from("method,mechanism,rate,nrmse_mean,nrmse_sd,sd_defined,replications\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.method, r.mechanism, r.rate, r.nrmse_mean, r.nrmse_sd, r.sd_defined, r.replications
        ));
    }
    out
}

/// Methods as rows, mechanism x rate as columns, cells `mean (sd)`.
pub fn reports_to_table(reports: &[EvalReport]) -> String {
    let mut cols: Vec<(Mechanism, f64)> = Vec::new();
    let mut methods: Vec<Method> = Vec::new();
    for r in reports {
        if !cols.contains(&(r.mechanism, r.rate)) {
            cols.push((r.mechanism, r.rate));
        }
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let mut out = format!("{:<8}", "Method");
    for (m, rate) in &cols {
        out.push_str(&format!(" {:>15}", format!("{m} {:.0}%", rate * 100.0)));
    }
    out.push('\n');
    for method in methods {
        out.push_str(&format!("{:<8}", method.name()));
        for &(m, rate) in &cols {
            let cell = reports
                .iter()
                .find(|r| r.method == method && r.mechanism == m && r.rate == rate)
                .map(|r| format!("{:.3} ({:.3})", r.nrmse_mean, r.nrmse_sd))
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(" {cell:>15}"));
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageConfig {
    /// MCAR rate applied before drawing bands.
    pub rate: f64,
    pub n_draws: usize,
    pub level: f64,
    /// `None` uses the first column of each block.
    pub columns: Option<Vec<usize>>,
    pub seed: u64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            rate: 0.5,
            n_draws: 1000,
            level: 0.99,
            columns: None,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColumnCoverage<T> {
    pub column: usize,
    pub block: Block,
    pub n_observed: usize,
    pub coverage: f64,
    #[serde(skip)]
    pub band: CredibleBand<T>,
}

/// Fraction of observed cells whose true CDF value lies in the pointwise
/// credible band of `F~` at that cell.
///
/// Uses the simulation seed for data, `seed + 1e6` for amputation and
/// `seed + 2e6` for the bootstrap draws.
pub fn coverage_experiment<T: Real>(
    design: &SimulationDesign,
    cfg: &CoverageConfig,
) -> Result<Vec<ColumnCoverage<T>>> {
    let sim = simulate_dataset::<T>(design)?;
    let spec = MissingnessSpec::mcar(
        Amount::Rate(cfg.rate),
        cfg.seed.wrapping_add(AMPUTE_SEED_OFFSET),
    );
    let masked = ampute(&sim.data, &spec)?;
    let columns = cfg.columns.clone().unwrap_or_else(|| design.block_leads());
    columns
        .iter()
        .map(|&j| {
            if j >= design.p {
                return Err(Error::arg(format!(
                    "column {j} out of range (p = {})",
                    design.p
                )));
            }
            let obs = masked.observed_in_column(j);
            let mut rng = RngHandle::stream(cfg.seed.wrapping_add(SAMPLER_SEED_OFFSET), j as u64);
            let band = credible_band(&mut rng, &obs, cfg.n_draws, T::lit(cfg.level))?;
            let inside = obs
                .iter()
                .filter(|&&x| {
                    let (lo, hi) = band.bounds_at(x);
                    let f = sim.true_cdf(j, x);
                    lo <= f && f <= hi
                })
                .count();
            Ok(ColumnCoverage {
                column: j,
                block: design.block(j),
                n_observed: obs.len(),
                coverage: inside as f64 / obs.len() as f64,
                band,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>]) -> Matrix<f64> {
        Matrix::from_rows(rows)
    }

    #[test]
    fn nrmse_hand_values() {
        let t = m(&[vec![1.0, 2.0, 3.0]]);
        let cells = [(0, 0), (0, 1), (0, 2)];
        assert_eq!(nrmse(&t, &t, &cells).unwrap(), 0.0);
        let mean_fill = m(&[vec![2.0, 2.0, 2.0]]);
        assert!((nrmse(&t, &mean_fill, &cells).unwrap() - 1.0).abs() < 1e-15);
        let off = m(&[vec![1.0, 2.0, 6.0]]);
        assert!((nrmse(&t, &off, &cells).unwrap() - 4.5f64.sqrt()).abs() < 1e-12);
        assert!(nrmse(&t, &t, &[]).is_err());
        assert!(nrmse(
            &m(&[vec![1.0, 1.0]]),
            &m(&[vec![0.0, 0.0]]),
            &[(0, 0), (0, 1)]
        )
        .is_err());
    }

    #[test]
    fn mean_imputer_examples() {
        let d = MixedDataset::<f64>::with_default_names(
            vec![ColumnKind::Continuous, ColumnKind::Ordinal { levels: 3 }],
            vec![
                Some(1.0),
                Some(1.0),
                None,
                Some(1.0),
                Some(3.0),
                Some(3.0),
                Some(0.5),
                None,
            ],
        )
        .unwrap();
        let out = impute_mean(&d).unwrap();
        assert!((out.get(1, 0).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(out.get(3, 1), Some(2.0));
        let full = impute_mean(&out).unwrap();
        assert_eq!(full, out);
    }

    #[test]
    fn knn_duplicate_row() {
        let d = MixedDataset::with_default_names(
            vec![ColumnKind::Continuous; 3],
            vec![
                Some(1.0),
                Some(2.0),
                Some(3.0),
                Some(1.0),
                Some(2.0),
                None,
                Some(9.0),
                Some(-4.0),
                Some(0.0),
                Some(5.0),
                Some(5.0),
                Some(5.0),
            ],
        )
        .unwrap();
        let out = impute_knn(&d, 1).unwrap();
        assert_eq!(out.get(1, 2), Some(3.0));
        assert!(impute_knn(&d, 0).is_err());
        assert!(impute_knn(&d, 4).is_err());
    }

    #[test]
    fn knn_fallback_without_shared_columns() {
        let d = MixedDataset::with_default_names(
            vec![ColumnKind::Continuous; 2],
            vec![
                Some(1.0),
                None,
                None,
                Some(4.0),
                None,
                Some(6.0),
                Some(3.0),
                None,
            ],
        )
        .unwrap();
        // row 0 shares no column with rows 1 and 2 observing column 1
        let out = impute_knn(&d, 1).unwrap();
        assert_eq!(out.get(0, 1), Some(5.0));
    }

    #[test]
    fn design_matrix_entries() {
        let r: Matrix<f64> = CorrelationRule::InverseSquare.matrix(15);
        assert_eq!(r[(0, 0)], 1.0);
        assert_eq!(r[(0, 1)], 0.25);
        assert_eq!(r[(0, 2)], 1.0 / 9.0);
        assert!(r.cholesky().is_ok());
    }

    #[test]
    fn simulate_shapes_and_blocks() {
        let sim = simulate_dataset::<f64>(&SimulationDesign {
            n: 1000,
            ..Default::default()
        })
        .unwrap();
        assert_eq!((sim.data.n_rows(), sim.data.n_cols()), (1000, 15));
        assert!(sim.data.is_complete());
        for j in 0..5 {
            assert!(sim.data.kinds()[j].is_ordinal());
            let col = sim.data.observed_in_column(j);
            assert_eq!(col.iter().copied().fold(f64::INFINITY, f64::min), 1.0);
            assert!(sim.offsets[j] < 0.0);
        }
        let exp_mean = sim.data.observed_in_column(10).iter().sum::<f64>() / 1000.0;
        assert!((exp_mean - 1.0).abs() < 0.1);
        assert!(simulate_dataset::<f64>(&SimulationDesign {
            p: 14,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn benchmark_grid_shape() {
        let cfg = BenchmarkConfig::<f64> {
            mechanisms: vec![Mechanism::Mcar, Mechanism::Mar],
            rates: vec![0.2],
            methods: vec![Method::Mean, Method::Knn],
            replications: 1,
            ..Default::default()
        };
        let src = BenchmarkSource::Simulated(SimulationDesign {
            n: 60,
            p: 6,
            ..Default::default()
        });
        let out = run_benchmark(&src, &cfg).unwrap();
        assert_eq!(out.reports.len(), 4);
        assert!(out
            .reports
            .iter()
            .all(|r| !r.sd_defined && r.nrmse_sd == 0.0));
        let table = reports_to_table(&out.reports);
        assert!(table.contains("MCAR 20%") && table.contains("KNN"));
    }
}
