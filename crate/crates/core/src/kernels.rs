//! Seedable random primitives used by the sampler.
//!
//! Every kernel takes an explicit [`RngHandle`]; nothing reads a global or
//! thread-local generator, so a run is a pure function of its seeds.

use rand::distr::Open01;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::normal;
use crate::scalar::Real;

pub const DEFAULT_SEED: u64 = 42;

/// Standardized bound beyond which truncated draws switch from inverse-CDF
/// to exponential rejection.
const TAIL_CUTOVER: f64 = 5.0;

/// A deterministic random stream.
#[derive(Clone, Debug)]
pub struct RngHandle {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngHandle {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream `base + index`, the convention used for parallel
    /// chains and benchmark replications.
    pub fn stream(base: u64, index: u64) -> Self {
        Self::new(base.wrapping_add(index))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        self.inner.sample(Open01)
    }

    #[inline]
    pub fn std_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    #[inline]
    pub fn exp1(&mut self) -> f64 {
        self.inner.sample(Exp1)
    }

    pub fn normal<T: Real>(&mut self, mu: T, sigma: T) -> T {
        mu + sigma * T::lit(self.std_normal())
    }
}

impl RngCore for RngHandle {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Inverse-Wishart prior `(nu0, psi0)` on the unnormalized covariance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PriorConfig<T> {
    pub nu0: T,
    pub psi0: Matrix<T>,
}

impl<T: Real> PriorConfig<T> {
    pub fn new(nu0: T, psi0: Matrix<T>) -> Result<Self> {
        let p = psi0.rows();
        if !psi0.is_square() || p == 0 {
            return Err(Error::arg("psi0 must be a non-empty square matrix"));
        }
        if !(nu0 > T::from_usize_lossy(p) - T::one()) {
            return Err(Error::arg(format!(
                "nu0 = {nu0} must exceed p - 1 = {}",
                p - 1
            )));
        }
        if !psi0.is_symmetric(T::lit(1e-10)) {
            return Err(Error::arg("psi0 must be symmetric"));
        }
        psi0.cholesky()?;
        Ok(Self { nu0, psi0 })
    }

    /// `nu0 = p + 2`, `psi0 = I`: the prior mean of the covariance is `I`.
    pub fn default_for(p: usize) -> Self {
        Self {
            nu0: T::from_usize_lossy(p + 2),
            psi0: Matrix::identity(p),
        }
    }

    pub fn dim(&self) -> usize {
        self.psi0.rows()
    }
}

/// Weights `w ~ Dirichlet(1, ..., 1)`, drawn as normalized unit exponentials.
pub fn dirichlet_flat<T: Real>(rng: &mut RngHandle, n: usize) -> Result<Vec<T>> {
    if n == 0 {
        return Err(Error::arg("Dirichlet dimension must be at least 1"));
    }
    // -ln(U) with U in (0,1) is strictly positive, so every weight is too.
    let e: Vec<f64> = (0..n).map(|_| -rng.uniform_open().ln()).collect();
    let total: f64 = e.iter().sum();
    Ok(e.into_iter().map(|x| T::lit(x / total)).collect())
}

/// One draw from `N(mu, sigma^2)` conditioned on `(lo, hi]`. Either bound may
/// be infinite.
pub fn truncated_normal<T: Real>(rng: &mut RngHandle, mu: T, sigma: T, lo: T, hi: T) -> Result<T> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(Error::arg(format!(
            "truncated normal needs sigma > 0, got {sigma}"
        )));
    }
    if !(lo < hi) {
        return Err(Error::arg(format!(
            "truncated normal needs lo < hi, got ({lo}, {hi}]"
        )));
    }
    let (m, s) = (mu.f64(), sigma.f64());
    let a = (lo.f64() - m) / s;
    let b = (hi.f64() - m) / s;
    let x = std_truncated(rng, a, b);
    let mut out = T::lit(m + s * x);
    if !(out > lo) {
        let step = (lo.abs() * T::epsilon()).max(T::min_positive_value());
        out = (lo + step).min(hi);
    }
    if out > hi {
        out = hi;
    }
    Ok(out)
}

fn std_truncated(rng: &mut RngHandle, a: f64, b: f64) -> f64 {
    if a >= TAIL_CUTOVER {
        tail_upper(rng, a, b)
    } else if b <= -TAIL_CUTOVER {
        -tail_upper(rng, -b, -a)
    } else if a > 0.0 {
        // Reflect so the inverse CDF works in the lower tail, where Phi keeps
        // relative precision.
        -inverse_cdf_interval(rng, -b, -a)
    } else {
        inverse_cdf_interval(rng, a, b)
    }
}

fn inverse_cdf_interval(rng: &mut RngHandle, a: f64, b: f64) -> f64 {
    let pa = normal::cdf_f64(a);
    let pb = normal::cdf_f64(b);
    let u = pa + rng.uniform_open() * (pb - pa);
    let x = normal::quantile_f64_unclamped(u);
    if x.is_nan() {
        return 0.5 * (a.max(-1e300) + b.min(1e300));
    }
    x.clamp(a, b)
}

/// Draw from the standard normal restricted to `[a, b]` with `a >= 5`.
fn tail_upper(rng: &mut RngHandle, a: f64, b: f64) -> f64 {
    debug_assert!(a > 0.0 && b > a);
    if (b - a) * a < 1.0 {
        // Narrow slab: uniform proposal, acceptance >= exp(-1.02).
        loop {
            let z = a + (b - a) * rng.uniform_open();
            if rng.uniform_open() <= (0.5 * (a * a - z * z)).exp() {
                return z;
            }
        }
    }
    // Robert (1995) translated-exponential proposal with the optimal rate.
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let z = a + rng.exp1() / lambda;
        if z > b {
            continue;
        }
        let d = z - lambda;
        if rng.uniform_open() <= (-0.5 * d * d).exp() {
            return z;
        }
    }
}

/// Lower-triangular Bartlett factor `A` with `A A^T ~ Wishart(nu, I)`.
fn bartlett_factor<T: Real>(rng: &mut RngHandle, nu: f64, p: usize) -> Result<Matrix<T>> {
    let mut a = Matrix::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(nu - i as f64)
            .map_err(|e| Error::Numerical(format!("chi-square dof {}: {e}", nu - i as f64)))?;
        a[(i, i)] = T::lit(chi.sample(rng).sqrt());
        for j in 0..i {
            a[(i, j)] = T::lit(rng.std_normal());
        }
    }
    Ok(a)
}

fn check_wishart_args<T: Real>(nu: T, scale: &Matrix<T>) -> Result<usize> {
    let p = scale.rows();
    if !scale.is_square() || p == 0 {
        return Err(Error::arg("scale matrix must be non-empty and square"));
    }
    if !(nu > T::from_usize_lossy(p) - T::one()) {
        return Err(Error::arg(format!(
            "degrees of freedom {nu} must exceed p - 1 = {}",
            p - 1
        )));
    }
    if !scale.is_symmetric(T::lit(1e-8) * (T::one() + scale[(0, 0)].abs())) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(p)
}

/// `W ~ Wishart(nu, scale)`, mean `nu * scale`.
pub fn wishart<T: Real>(rng: &mut RngHandle, nu: T, scale: &Matrix<T>) -> Result<Matrix<T>> {
    let p = check_wishart_args(nu, scale)?;
    let l = scale.cholesky()?.into_factor();
    let a = bartlett_factor::<T>(rng, nu.f64(), p)?;
    let mut w = l.matmul(&a).gram();
    w.symmetrize();
    Ok(w)
}

/// `Sigma ~ Inv-Wishart(nu, scale)`, mean `scale / (nu - p - 1)`.
///
/// Equivalent to inverting `W ~ Wishart(nu, scale^{-1})` built from a
/// Bartlett factor: with `scale = C C^T` take `W = C^{-T} A A^T C^{-1}`,
/// so `W^{-1} = (C A^{-T})(C A^{-T})^T` and no explicit inverse of `scale`
/// is formed.
pub fn inverse_wishart<T: Real>(
    rng: &mut RngHandle,
    nu: T,
    scale: &Matrix<T>,
) -> Result<Matrix<T>> {
    let p = check_wishart_args(nu, scale)?;
    let c = scale.cholesky()?.into_factor();
    let a = bartlett_factor::<T>(rng, nu.f64(), p)?;
    let a_inv = a.lower_triangular_inverse()?;
    let k = c.matmul(&a_inv.transpose());
    let mut s = k.gram();
    s.symmetrize();
    Ok(s)
}
