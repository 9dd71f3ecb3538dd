//! Random-variate generation for the sampler.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta, Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seeded random stream. Chains share a seed and differ by `stream_id`,
/// which selects an independent ChaCha20 stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream { seed, stream_id, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
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

#[inline]
pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn std_normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| std_normal(rng))
}

/// `mean + L z` with `z ~ N(0, I)`.
pub fn sample_mvn_chol<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    chol: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if chol.nrows() != mean.len() || chol.ncols() != mean.len() {
        return Err(Error::dim(format!(
            "mean has length {} but factor is {}x{}",
            mean.len(),
            chol.nrows(),
            chol.ncols()
        )));
    }
    let z = std_normal_vec(mean.len(), rng);
    Ok(mean + chol * z)
}

/// Lower Cholesky factor, or an error naming `what`.
pub fn cholesky_lower(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// Inverse of an SPD matrix through its Cholesky factor, symmetrized.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let inv = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))?
        .inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// Which side of zero a truncated normal lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `(0, inf)`
    Above0,
    /// `(-inf, 0]`
    Below0,
}

/// Standard normal restricted to `(a, inf)`.
///
/// Plain rejection for `a <= 0`, otherwise Robert's translated-exponential
/// proposal, which stays efficient arbitrarily far into the tail.
pub fn std_truncnorm_lower<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a <= 0.0 {
        loop {
            let z = std_normal(rng);
            if z > a {
                return z;
            }
        }
    }
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = rng.sample(Exp1);
        let z = a + e / lambda;
        let u: f64 = rng.random();
        if u <= (-0.5 * (z - lambda) * (z - lambda)).exp() && z > a {
            return z;
        }
    }
}

/// `N(mean, sd^2)` restricted to one side of zero.
pub fn sample_truncnorm_uni<R: Rng + ?Sized>(mean: f64, sd: f64, side: Side, rng: &mut R) -> f64 {
    debug_assert!(sd > 0.0);
    loop {
        let x = match side {
            Side::Above0 => mean + sd * std_truncnorm_lower(-mean / sd, rng),
            Side::Below0 => mean - sd * std_truncnorm_lower(mean / sd, rng),
        };
        let ok = match side {
            Side::Above0 => x > 0.0,
            Side::Below0 => x <= 0.0,
        };
        if ok && x.is_finite() {
            return x;
        }
    }
}

pub const DEFAULT_ORTHANT_SWEEPS: usize = 10;

/// `N(mean, cov)` restricted to the positive orthant, by coordinate-wise
/// Gibbs sub-sweeps started from independent marginal truncated draws.
pub fn sample_truncnorm_orthant<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    sample_truncnorm_orthant_from(mean, cov, None, DEFAULT_ORTHANT_SWEEPS, rng)
}

/// Orthant sampler with an explicit starting point (used inside the outer
/// Gibbs chain, where starting from the current value keeps the update exact
/// in the MCMC sense for any number of sub-sweeps).
pub fn sample_truncnorm_orthant_from<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    start: Option<&DVector<f64>>,
    sweeps: usize,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let r = mean.len();
    if cov.nrows() != r || cov.ncols() != r {
        return Err(Error::dim("orthant covariance does not match mean"));
    }
    if r == 1 {
        return Ok(DVector::from_element(
            1,
            sample_truncnorm_uni(mean[0], cov[(0, 0)].sqrt(), Side::Above0, rng),
        ));
    }
    let prec = spd_inverse(cov, "truncated-normal covariance")?;
    let mut x = match start {
        Some(s) if s.len() == r && s.iter().all(|&v| v > 0.0) => s.clone(),
        _ => DVector::from_fn(r, |i, _| {
            sample_truncnorm_uni(mean[i], cov[(i, i)].sqrt(), Side::Above0, rng)
        }),
    };
    for _ in 0..sweeps.max(1) {
        for i in 0..r {
            let qii = prec[(i, i)];
            let mut shift = 0.0;
            for j in 0..r {
                if j != i {
                    shift += prec[(i, j)] * (x[j] - mean[j]);
                }
            }
            let m = mean[i] - shift / qii;
            x[i] = sample_truncnorm_uni(m, (1.0 / qii).sqrt(), Side::Above0, rng);
        }
    }
    Ok(x)
}

/// Draw with density proportional to `x^(-shape-1) exp(-rate/x)`.
pub fn sample_inv_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("inverse-gamma parameters must be positive");
    loop {
        let x: f64 = g.sample(rng);
        if x > 0.0 {
            return 1.0 / x;
        }
    }
}

/// Inverse-Wishart with density proportional to
/// `|X|^{-(df+d+1)/2} exp(-tr(scale X^{-1})/2)`, so the mean is
/// `scale / (df - d - 1)`. Drawn as the inverse of a Bartlett-factored Wishart.
pub fn sample_inv_wishart<R: Rng + ?Sized>(
    df: f64,
    scale: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let d = scale.nrows();
    if scale.ncols() != d {
        return Err(Error::dim("inverse-Wishart scale must be square"));
    }
    if !(df > d as f64 - 1.0) {
        return Err(Error::invalid(format!("inverse-Wishart df {df} must exceed dim - 1 = {}", d as f64 - 1.0)));
    }
    let scale_inv = spd_inverse(scale, "inverse-Wishart scale")?;
    let l = cholesky_lower(&scale_inv, "inverse-Wishart scale")?;
    let mut a = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        let chi2: f64 = Gamma::new(0.5 * (df - i as f64), 2.0).expect("df checked").sample(rng);
        a[(i, i)] = chi2.sqrt();
        for j in 0..i {
            a[(i, j)] = std_normal(rng);
        }
    }
    // Wishart draw = M M^T with M = L A lower triangular; invert through M.
    let m = &l * &a;
    let m_inv = m
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| Error::NotPositiveDefinite("Bartlett factor".into()))?;
    let x = m_inv.transpose() * &m_inv;
    Ok((&x + x.transpose()) * 0.5)
}

/// Second beta shape in the truncated stick-breaking update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StickVariant {
    /// `(N-1)/N * alpha` for every stick.
    #[default]
    Printed,
    /// `(N-j)/N * alpha`, the finite symmetric-Dirichlet construction.
    Standard,
}

impl StickVariant {
    /// Prior beta shapes `(a_j, b_j)` for stick `j` (0-based, `j < n_atoms - 1`).
    pub fn prior_shapes(self, alpha: f64, n_atoms: usize, j: usize) -> (f64, f64) {
        let n = n_atoms as f64;
        let b = match self {
            StickVariant::Printed => (n - 1.0) / n * alpha,
            StickVariant::Standard => (n - (j as f64 + 1.0)) / n * alpha,
        };
        (alpha / n, b)
    }
}

fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let x: f64 = Beta::new(a, b).expect("beta shapes must be positive").sample(rng);
    if x.is_nan() {
        // both shapes so small that the gamma pair underflowed
        if rng.random::<f64>() < a / (a + b) { 1.0 } else { 0.0 }
    } else {
        x
    }
}

/// Truncated stick-breaking weights given atom occupancy counts.
pub fn sample_gd_stick<R: Rng + ?Sized>(
    alpha: f64,
    counts: &[usize],
    variant: StickVariant,
    rng: &mut R,
) -> Vec<f64> {
    let n = counts.len();
    assert!(n >= 2, "need at least two atoms");
    let mut tail: Vec<usize> = vec![0; n + 1];
    for j in (0..n).rev() {
        tail[j] = tail[j + 1] + counts[j];
    }
    let mut p = vec![0.0; n];
    let mut remaining = 1.0;
    let mut acc = 0.0;
    for j in 0..n - 1 {
        let (a0, b0) = variant.prior_shapes(alpha, n, j);
        let xi = sample_beta(a0 + counts[j] as f64, b0 + tail[j + 1] as f64, rng);
        p[j] = remaining * xi;
        remaining *= 1.0 - xi;
        acc += p[j];
    }
    p[n - 1] = (1.0 - acc).max(0.0);
    p
}

/// Index drawn with probability proportional to `exp(log_w)`.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> usize {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (j, &wj) in w.iter().enumerate() {
        if u < wj {
            return j;
        }
        u -= wj;
    }
    w.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}
