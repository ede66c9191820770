//! Missing-data imputation for mixed continuous and ordinal tables with a
//! Gaussian copula whose marginals are drawn by the Bayesian bootstrap.
//!
//! Everything numerical is generic over [`scalar::Real`] (`f32` or `f64`);
//! the aliases below fix `f64`, with `F32` variants for single precision.

pub mod data;
pub mod error;
pub mod eval;
pub mod gibbs;
pub mod kernels;
pub mod linalg;
pub mod marginals;
pub mod missingness;
pub mod normal;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub use data::{read_csv, write_csv, ColumnKind, ColumnSpec, Schema};
pub use eval::{run_benchmark, simulate_dataset, BenchmarkSource, Method, SimulationDesign};
pub use gibbs::{run_bbgc, OrdinalPoint};
pub use kernels::RngHandle;
pub use missingness::{ampute, Amount, Mechanism, MissingnessSpec};

pub type MixedDataset = data::MixedDataset<f64>;
pub type Matrix = linalg::Matrix<f64>;
pub type MarginalDraw = marginals::MarginalDraw<f64>;
pub type CorrelationMatrix = gibbs::CorrelationMatrix<f64>;
pub type ChainConfig = gibbs::ChainConfig<f64>;
pub type PriorConfig = kernels::PriorConfig<f64>;
pub type PosteriorSummary = gibbs::PosteriorSummary<f64>;
pub type BenchmarkConfig = eval::BenchmarkConfig<f64>;

pub type MixedDatasetF32 = data::MixedDataset<f32>;
pub type MatrixF32 = linalg::Matrix<f32>;
pub type ChainConfigF32 = gibbs::ChainConfig<f32>;
pub type PosteriorSummaryF32 = gibbs::PosteriorSummary<f32>;
