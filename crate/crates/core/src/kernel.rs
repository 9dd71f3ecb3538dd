//! Exponential-kernel spatial covariance and Gaussian-process kriging.
//!
//! Coordinates are planar (easting, northing) already scaled to the model's
//! distance unit; nothing in here rescales them.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A set of plot locations with unique identifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSet {
    ids: Vec<String>,
    coords: Vec<[f64; 2]>,
}

impl SiteSet {
    pub fn new(ids: Vec<String>, coords: Vec<[f64; 2]>) -> Result<Self> {
        if ids.len() != coords.len() {
            return Err(Error::dim(format!(
                "{} site ids but {} coordinate pairs",
                ids.len(),
                coords.len()
            )));
        }
        if let Some(i) = coords.iter().position(|c| !c[0].is_finite() || !c[1].is_finite()) {
            return Err(Error::invalid(format!("site `{}` has non-finite coordinates", ids[i])));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("duplicate site id `{id}`")));
            }
        }
        Ok(SiteSet { ids, coords })
    }

    /// Sites named `s1, s2, ...` in input order.
    pub fn from_coords(coords: Vec<[f64; 2]>) -> Result<Self> {
        let ids = (1..=coords.len()).map(|i| format!("s{i}")).collect();
        SiteSet::new(ids, coords)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn subset(&self, idx: &[usize]) -> SiteSet {
        SiteSet {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            coords: idx.iter().map(|&i| self.coords[i]).collect(),
        }
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclid(self.coords[i], self.coords[j])
    }

    /// Median of all pairwise distances (0 for fewer than two sites).
    pub fn median_distance(&self) -> f64 {
        let mut d = Vec::with_capacity(self.len() * self.len().saturating_sub(1) / 2);
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                d.push(self.distance(i, j));
            }
        }
        if d.is_empty() {
            return 0.0;
        }
        d.sort_by(|a, b| a.total_cmp(b));
        let m = d.len();
        if m % 2 == 1 {
            d[m / 2]
        } else {
            0.5 * (d[m / 2 - 1] + d[m / 2])
        }
    }
}

#[inline]
fn euclid(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Cross-correlation block `exp(-phi * |a_i - b_j|)`.
pub fn cross_cov(a: &SiteSet, b: &SiteSet, phi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| (-phi * euclid(a.coords[i], b.coords[j])).exp())
}

/// Exponential correlation matrix over a site set together with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct SpatialCovariance {
    pub phi: f64,
    pub matrix: DMatrix<f64>,
    /// Lower-triangular `L` with `L L^T = matrix`.
    pub chol: DMatrix<f64>,
    pub log_det: f64,
}

impl SpatialCovariance {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `v^T C^{-1} v` through one triangular solve.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        let z = self
            .chol
            .solve_lower_triangular(v)
            .expect("cholesky factor has a positive diagonal");
        z.norm_squared()
    }

    /// Log density of `N(0, C)` at `v`.
    pub fn log_density(&self, v: &DVector<f64>) -> f64 {
        let n = self.dim() as f64;
        -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + self.log_det + self.quad_form(v))
    }

    /// Eigendecomposition of the correlation matrix, used to draw from
    /// `(C^{-1} + d I)^{-1}` for many `d` at `O(n^2)` each.
    pub fn spectral(&self) -> Spectral {
        let eig = SymmetricEigen::new(self.matrix.clone());
        Spectral {
            phi: self.phi,
            values: eig.eigenvalues.map(|v| v.max(0.0)),
            vectors: eig.eigenvectors,
        }
    }
}

/// `C = V diag(values) V^T`.
#[derive(Debug, Clone)]
pub struct Spectral {
    pub phi: f64,
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

/// Builds `C_phi` with no diagonal jitter.
pub fn build_exp_cov(sites: &SiteSet, phi: f64) -> Result<SpatialCovariance> {
    build_exp_cov_with_jitter(sites, phi, 0.0)
}

/// Builds `C_phi + jitter * I` and factors it. Jitter above `1e-8` is refused.
pub fn build_exp_cov_with_jitter(
    sites: &SiteSet,
    phi: f64,
    jitter: f64,
) -> Result<SpatialCovariance> {
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(Error::invalid(format!("decay parameter must be positive and finite, got {phi}")));
    }
    if !(0.0..=1e-8).contains(&jitter) {
        return Err(Error::invalid(format!("jitter must lie in [0, 1e-8], got {jitter}")));
    }
    if sites.is_empty() {
        return Err(Error::invalid("covariance over an empty site set"));
    }
    let n = sites.len();
    let mut matrix = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = (-phi * sites.distance(i, j)).exp();
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    let mut factored = matrix.clone();
    if jitter > 0.0 {
        for i in 0..n {
            factored[(i, i)] += jitter;
        }
    }
    let chol = factored.cholesky().ok_or_else(|| {
        Error::DegenerateSites(format!(
            "exponential covariance at phi={phi} is numerically singular (coincident sites?)"
        ))
    })?;
    let l = chol.l();
    let log_det = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(SpatialCovariance { phi, matrix, chol: l, log_det })
}

/// Uniform-prior bounds for the decay parameter from the site geometry:
/// `phi_min = -ln(0.05)/d_max`, `phi_max = -ln(0.01)/d_min`.
///
/// `d_min` is the smallest *positive* pairwise distance, so exact duplicates
/// do not send the upper bound to infinity.
pub fn phi_bounds(sites: &SiteSet) -> Result<(f64, f64)> {
    let mut d_min = f64::INFINITY;
    let mut d_max = 0.0_f64;
    for i in 0..sites.len() {
        for j in (i + 1)..sites.len() {
            let d = sites.distance(i, j);
            if d > 0.0 {
                d_min = d_min.min(d);
                d_max = d_max.max(d);
            }
        }
    }
    if !d_min.is_finite() {
        return Err(Error::DegenerateSites("need at least two distinct sites".into()));
    }
    Ok(phi_bounds_from_distances(d_min, d_max))
}

pub fn phi_bounds_from_distances(d_min: f64, d_max: f64) -> (f64, f64) {
    (-(0.05_f64.ln()) / d_max, -(0.01_f64.ln()) / d_min)
}

/// Distance at which the exponential correlation falls to `threshold`.
pub fn effective_range(phi: f64, threshold: f64) -> Result<f64> {
    if !(phi > 0.0) {
        return Err(Error::invalid(format!("phi must be positive, got {phi}")));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("threshold must lie in (0,1), got {threshold}")));
    }
    Ok(-threshold.ln() / phi)
}

/// Precomputed GP conditioning from a training set to a prediction set at one `phi`.
#[derive(Debug, Clone)]
pub struct Kriging {
    /// `C_pt C_tt^{-1}`, m x n.
    pub weights: DMatrix<f64>,
    /// Conditional covariance, symmetrized and floored to PSD.
    pub cov: DMatrix<f64>,
    /// `cov = sqrt sqrt^T`.
    pub sqrt: DMatrix<f64>,
}

impl Kriging {
    pub fn new(train: &SiteSet, test: &SiteSet, phi: f64, jitter: f64) -> Result<Self> {
        let ctt = build_exp_cov_with_jitter(train, phi, jitter)?;
        let ctp = cross_cov(train, test, phi);
        let v = ctt
            .chol
            .solve_lower_triangular(&ctp)
            .ok_or_else(|| Error::NotPositiveDefinite("training covariance".into()))?;
        // weights^T = C_tt^{-1} C_tp = L^{-T} V
        let wt = ctt
            .chol
            .tr_solve_lower_triangular(&v)
            .ok_or_else(|| Error::NotPositiveDefinite("training covariance".into()))?;
        let weights = wt.transpose();
        let cpp = build_exp_cov_with_jitter(test, phi, 0.0)
            .map(|c| c.matrix)
            .unwrap_or_else(|_| cross_cov(test, test, phi));
        let mut cov = cpp - v.transpose() * &v;
        cov = (&cov + cov.transpose()) * 0.5;
        let eig = SymmetricEigen::new(cov.clone());
        let vals = eig.eigenvalues.map(|x| x.max(0.0));
        let cov = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        let sqrt = &eig.eigenvectors * DMatrix::from_diagonal(&vals.map(f64::sqrt));
        Ok(Kriging { weights, cov, sqrt })
    }

    pub fn mean(&self, w_train: &DVector<f64>) -> DVector<f64> {
        &self.weights * w_train
    }
}

/// Mean and covariance of `w(test) | w(train)` for a unit-variance exponential GP.
pub fn gp_conditional(
    train: &SiteSet,
    test: &SiteSet,
    phi: f64,
    w_train: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if w_train.len() != train.len() {
        return Err(Error::dim(format!(
            "w_train has length {} but there are {} training sites",
            w_train.len(),
            train.len()
        )));
    }
    let k = Kriging::new(train, test, phi, 0.0)?;
    Ok((k.mean(w_train), k.cov))
}
