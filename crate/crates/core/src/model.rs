//! Data, hyperparameters, sampler state and the deterministic quantities
//! derived from them (loadings, species covariance, scaled coefficients).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dists::{self, Side, StickVariant};
use crate::error::{Error, Result};
use crate::kernel::{self, SiteSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    Continuous,
    Binary,
}

/// Spatial (GP factors) or the non-spatial variant with iid `N(0, 1)` factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FactorModel {
    #[default]
    Spatial,
    Independent,
}

impl std::str::FromStr for FactorModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial" => Ok(FactorModel::Spatial),
            "independent" => Ok(FactorModel::Independent),
            other => Err(Error::invalid(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sites: SiteSet,
    /// n x p covariates.
    pub x: DMatrix<f64>,
    /// n x S responses.
    pub y: DMatrix<f64>,
    pub kind: ResponseKind,
    pub species: Vec<String>,
    pub covariate_names: Vec<String>,
    /// `true` marks a held-out (test) site.
    pub holdout: Vec<bool>,
}

impl Dataset {
    pub fn new(
        sites: SiteSet,
        x: DMatrix<f64>,
        y: DMatrix<f64>,
        kind: ResponseKind,
        species: Vec<String>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let n = sites.len();
        if n == 0 || y.ncols() == 0 {
            return Err(Error::invalid("dataset needs at least one site and one species"));
        }
        if x.nrows() != n || y.nrows() != n {
            return Err(Error::dim(format!(
                "{n} sites but covariates have {} rows and responses {}",
                x.nrows(),
                y.nrows()
            )));
        }
        if species.len() != y.ncols() || covariate_names.len() != x.ncols() {
            return Err(Error::dim("name lists do not match matrix widths"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("covariates contain missing or non-finite values"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("responses contain missing or non-finite values"));
        }
        if kind == ResponseKind::Binary && y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid("binary responses must be 0 or 1"));
        }
        Ok(Dataset { sites, x, y, kind, species, covariate_names, holdout: vec![false; n] })
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn s(&self) -> usize {
        self.y.ncols()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Every non-constant covariate column must have mean 0 and sd 1 within `tol`.
    pub fn check_standardized(&self, tol: f64) -> Result<()> {
        let n = self.n() as f64;
        for (j, col) in self.x.column_iter().enumerate() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            if var == 0.0 {
                continue;
            }
            if mean.abs() > tol || (var.sqrt() - 1.0).abs() > tol {
                return Err(Error::invalid(format!(
                    "covariate `{}` is not standardized (mean {mean:.3e}, sd {:.6})",
                    self.covariate_names[j],
                    var.sqrt()
                )));
            }
        }
        Ok(())
    }

    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.holdout[i]).collect()
    }

    pub fn test_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.holdout[i]).collect()
    }

    pub fn subset_sites(&self, idx: &[usize]) -> Dataset {
        Dataset {
            sites: self.sites.subset(idx),
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
            kind: self.kind,
            species: self.species.clone(),
            covariate_names: self.covariate_names.clone(),
            holdout: vec![false; idx.len()],
        }
    }

    /// The sites the sampler is fit to.
    pub fn training(&self) -> Dataset {
        self.subset_sites(&self.train_indices())
    }

    /// Marks a random `frac` of sites as held out (at least one when `frac > 0`).
    pub fn assign_holdout<R: Rng + ?Sized>(&mut self, frac: f64, rng: &mut R) -> Result<()> {
        if !(0.0..1.0).contains(&frac) {
            return Err(Error::invalid(format!("holdout fraction must lie in [0,1), got {frac}")));
        }
        let n = self.n();
        let m = ((frac * n as f64).round() as usize).min(n.saturating_sub(2));
        let mut idx: Vec<usize> = (0..n).collect();
        // partial Fisher-Yates
        for i in 0..m {
            let j = rng.random_range(i..n);
            idx.swap(i, j);
        }
        self.holdout = vec![false; n];
        for &i in &idx[..m] {
            self.holdout[i] = true;
        }
        Ok(())
    }

    pub fn set_holdout_ids(&mut self, ids: &[String]) -> Result<()> {
        let mut mask = vec![false; self.n()];
        for id in ids {
            let i = self
                .sites
                .ids()
                .iter()
                .position(|s| s == id)
                .ok_or_else(|| Error::invalid(format!("unknown holdout site `{id}`")))?;
            mask[i] = true;
        }
        self.holdout = mask;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcSchedule {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Initial random-walk sd on log(phi).
    pub mh_step_phi: f64,
    /// Tune the phi proposal during burn-in (frozen afterwards).
    pub adapt: bool,
    pub seed: u64,
    /// Print a progress line to stderr every this many sweeps (0 = silent).
    pub progress_every: usize,
    pub record_log_joint: bool,
}

impl Default for McmcSchedule {
    fn default() -> Self {
        McmcSchedule {
            n_iter: 2000,
            burn_in: 1000,
            thin: 1,
            mh_step_phi: 0.1,
            adapt: true,
            seed: 1,
            progress_every: 0,
            record_log_joint: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    /// Number of latent factors.
    pub r: usize,
    /// Dirichlet-process truncation level.
    pub n_atoms: usize,
    pub alpha: f64,
    /// Nugget prior is `IG(a/2, b/2)`.
    pub a: f64,
    pub b: f64,
    /// Coefficient prior variance.
    pub c: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub eta_shape: f64,
    pub eta_rate: f64,
    /// Prior inverse-Wishart df is `iw_df_offset + r - 1`.
    pub iw_df_offset: f64,
    /// Prior inverse-Wishart scale is `iw_scale * diag(1/eta)`.
    pub iw_scale: f64,
    pub stick_variant: StickVariant,
    pub factor_model: FactorModel,
    /// Fixed nugget variance (binary responses use 1).
    pub sigma2_fixed: Option<f64>,
    pub jitter: f64,
    pub orthant_sweeps: usize,
    pub mcmc: McmcSchedule,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            r: 5,
            n_atoms: 150,
            alpha: 1.0,
            a: 2.0,
            b: 0.1,
            c: 100.0,
            phi_min: 0.909,
            phi_max: 46_052.0,
            eta_shape: 0.5,
            eta_rate: 1e-4,
            iw_df_offset: 2.0,
            iw_scale: 4.0,
            stick_variant: StickVariant::Printed,
            factor_model: FactorModel::Spatial,
            sigma2_fixed: None,
            jitter: 0.0,
            orthant_sweeps: dists::DEFAULT_ORTHANT_SWEEPS,
            mcmc: McmcSchedule::default(),
        }
    }
}

impl Hyperparams {
    /// Defaults with decay bounds taken from the site geometry and the nugget
    /// fixed at 1 for binary data.
    pub fn for_data(data: &Dataset, r: usize, n_atoms: usize) -> Result<Self> {
        let (phi_min, phi_max) = kernel::phi_bounds(&data.sites)?;
        Ok(Hyperparams {
            r,
            n_atoms,
            phi_min,
            phi_max,
            sigma2_fixed: (data.kind == ResponseKind::Binary).then_some(1.0),
            ..Hyperparams::default()
        })
    }

    /// Checks hard invariants; returns soft warnings.
    pub fn validate(&self, n_species: usize) -> Result<Vec<String>> {
        let mut warnings = vec![];
        if self.r == 0 {
            return Err(Error::invalid("need at least one factor"));
        }
        if self.n_atoms <= self.r || self.n_atoms < 2 {
            return Err(Error::invalid(format!(
                "truncation level {} must exceed the factor count {}",
                self.n_atoms, self.r
            )));
        }
        if self.n_atoms > n_species {
            warnings.push(format!(
                "truncation level {} exceeds the number of species {n_species}",
                self.n_atoms
            ));
        }
        for (name, v) in [("a", self.a), ("b", self.b), ("c", self.c), ("alpha", self.alpha)] {
            if !(v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.eta_shape > 0.0 && self.eta_rate > 0.0 && self.iw_scale > 0.0) {
            return Err(Error::invalid("eta and inverse-Wishart constants must be positive"));
        }
        if !(self.phi_min > 0.0 && self.phi_min < self.phi_max) {
            return Err(Error::invalid(format!(
                "need 0 < phi_min < phi_max, got [{}, {}]",
                self.phi_min, self.phi_max
            )));
        }
        if let Some(s) = self.sigma2_fixed {
            if !(s > 0.0) {
                return Err(Error::invalid("fixed nugget must be positive"));
            }
        }
        let m = &self.mcmc;
        if m.thin == 0 || m.burn_in > m.n_iter {
            return Err(Error::invalid("need thin >= 1 and burn_in <= n_iter"));
        }
        if !(m.mh_step_phi > 0.0) {
            return Err(Error::invalid("phi proposal scale must be positive"));
        }
        Ok(warnings)
    }

    pub fn spatial(&self) -> bool {
        self.factor_model == FactorModel::Spatial
    }

    /// Prior inverse-Wishart degrees of freedom for `D_Z`.
    pub fn iw_prior_df(&self) -> f64 {
        self.iw_df_offset + self.r as f64 - 1.0
    }
}

/// One realization of every unknown in the model.
///
/// Labels are 0-based: `labels[l] = j` means species `l` uses atom row `j`,
/// and `labels[0]` is pinned to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    /// S x p
    pub b: DMatrix<f64>,
    /// N x r
    pub z: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub p: Vec<f64>,
    /// n x r
    pub w: DMatrix<f64>,
    pub sigma2: f64,
    pub phi: f64,
    /// r x r
    pub dz: DMatrix<f64>,
    pub eta: DVector<f64>,
    /// n x S latent responses, binary data only.
    pub u: Option<DMatrix<f64>>,
}

impl ModelState {
    pub fn lambda(&self) -> DMatrix<f64> {
        lambda_of(&self.z, &self.labels).expect("labels kept in range by the sampler")
    }

    /// Latent responses: the augmented `U` for binary data, `Y` otherwise.
    pub fn latent<'a>(&'a self, data: &'a Dataset) -> &'a DMatrix<f64> {
        self.u.as_ref().unwrap_or(&data.y)
    }

    pub fn occupancy(&self) -> Vec<usize> {
        let mut c = vec![0; self.z.nrows()];
        for &k in &self.labels {
            c[k] += 1;
        }
        c
    }

    pub fn occupied_clusters(&self) -> usize {
        self.occupancy().iter().filter(|&&c| c > 0).count()
    }

    /// Checks every structural invariant of a valid state.
    pub fn check_invariants(&self, data: &Dataset, hyper: &Hyperparams) -> Result<()> {
        if self.labels.first() != Some(&0) {
            return Err(Error::invalid("first species must carry the first label"));
        }
        if self.labels.iter().any(|&k| k >= self.z.nrows()) {
            return Err(Error::invalid("label out of range"));
        }
        if self.z.row(0).iter().any(|&v| !(v > 0.0)) {
            return Err(Error::invalid("first atom must be strictly positive"));
        }
        let sum: f64 = self.p.iter().sum();
        if self.p.iter().any(|&v| v < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("stick weights off the simplex"));
        }
        if !(self.sigma2 > 0.0) {
            return Err(Error::invalid("nugget must be positive"));
        }
        if hyper.spatial() && !(self.phi >= hyper.phi_min && self.phi <= hyper.phi_max) {
            return Err(Error::invalid("decay outside its prior bounds"));
        }
        if self.dz.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("D_Z".into()));
        }
        if let Some(u) = &self.u {
            for (uv, yv) in u.iter().zip(data.y.iter()) {
                if (*uv > 0.0) != (*yv == 1.0) {
                    return Err(Error::invalid("latent sign disagrees with observed presence"));
                }
            }
        }
        Ok(())
    }

    /// Feasible starting point satisfying every invariant.
    pub fn initial<R: Rng + ?Sized>(data: &Dataset, hyper: &Hyperparams, rng: &mut R) -> Result<Self> {
        let (n, s, p, r, na) = (data.n(), data.s(), data.p(), hyper.r, hyper.n_atoms);
        let b = match data.kind {
            ResponseKind::Binary => DMatrix::zeros(s, p),
            ResponseKind::Continuous => {
                // ridge fit shared across species
                let mut prec = data.x.transpose() * &data.x;
                for i in 0..p {
                    prec[(i, i)] += 1.0 / hyper.c;
                }
                let inv = dists::spd_inverse(&prec, "initial ridge system")?;
                (inv * data.x.transpose() * &data.y).transpose()
            }
        };
        let dz = DMatrix::identity(r, r);
        let mut z = DMatrix::zeros(na, r);
        for j in 0..na {
            for h in 0..r {
                z[(j, h)] = dists::std_normal(rng);
            }
        }
        for h in 0..r {
            z[(0, h)] = z[(0, h)].abs().max(1e-3);
        }
        let phi = if hyper.spatial() {
            let med = data.sites.median_distance();
            let upper = if med > 0.0 { (-(0.05f64.ln()) / med).min(hyper.phi_max) } else { hyper.phi_max };
            (hyper.phi_min * upper.max(hyper.phi_min)).sqrt().clamp(hyper.phi_min, hyper.phi_max)
        } else {
            hyper.phi_min
        };
        let u = match data.kind {
            ResponseKind::Continuous => None,
            ResponseKind::Binary => Some(DMatrix::from_fn(n, s, |i, l| {
                let side = if data.y[(i, l)] == 1.0 { Side::Above0 } else { Side::Below0 };
                dists::sample_truncnorm_uni(0.0, 1.0, side, rng)
            })),
        };
        Ok(ModelState {
            b,
            z,
            labels: vec![0; s],
            p: vec![1.0 / na as f64; na],
            w: DMatrix::zeros(n, r),
            sigma2: hyper.sigma2_fixed.unwrap_or(1.0),
            phi,
            dz,
            eta: DVector::from_element(r, 1.0),
            u,
        })
    }
}

/// `Q(k) Z` as a row gather: row `l` of the result is row `labels[l]` of `z`.
pub fn lambda_of(z: &DMatrix<f64>, labels: &[usize]) -> Result<DMatrix<f64>> {
    if let Some(&bad) = labels.iter().find(|&&k| k >= z.nrows()) {
        return Err(Error::invalid(format!("label {bad} out of range for {} atoms", z.nrows())));
    }
    Ok(DMatrix::from_fn(labels.len(), z.ncols(), |l, h| z[(labels[l], h)]))
}

/// `Lambda Lambda^T + sigma2 I`.
pub fn sigma_star(lambda: &DMatrix<f64>, sigma2: f64) -> Result<DMatrix<f64>> {
    if !(sigma2 > 0.0) {
        return Err(Error::invalid(format!("nugget must be positive, got {sigma2}")));
    }
    let mut s = lambda * lambda.transpose();
    for i in 0..s.nrows() {
        s[(i, i)] += sigma2;
    }
    Ok(s)
}

fn diag_scales(sigma: &DMatrix<f64>) -> Result<Vec<f64>> {
    if sigma.nrows() != sigma.ncols() {
        return Err(Error::dim("covariance must be square"));
    }
    (0..sigma.nrows())
        .map(|i| {
            let d = sigma[(i, i)];
            if d > 0.0 {
                Ok(d.sqrt())
            } else {
                Err(Error::invalid(format!("diagonal entry {i} is not positive ({d})")))
            }
        })
        .collect()
}

/// `D^{-1/2} B` where `D` is the diagonal of the species covariance.
pub fn scaled_coefficients(b_tilde: &DMatrix<f64>, sigma_star: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sd = diag_scales(sigma_star)?;
    if sd.len() != b_tilde.nrows() {
        return Err(Error::dim("coefficient rows do not match covariance size"));
    }
    Ok(DMatrix::from_fn(b_tilde.nrows(), b_tilde.ncols(), |l, j| b_tilde[(l, j)] / sd[l]))
}

/// `D^{-1/2} Sigma D^{-1/2}`.
pub fn correlation_of(sigma_star: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sd = diag_scales(sigma_star)?;
    let s = sigma_star.nrows();
    Ok(DMatrix::from_fn(s, s, |i, j| {
        if i == j {
            1.0
        } else {
            (sigma_star[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
        }
    }))
}

/// A retained posterior sample. The binary latent `U` is not kept.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub b: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub p: Vec<f64>,
    pub w: DMatrix<f64>,
    pub sigma2: f64,
    pub phi: f64,
    pub dz: DMatrix<f64>,
    pub eta: DVector<f64>,
}

impl Draw {
    pub fn from_state(s: &ModelState) -> Self {
        Draw {
            b: s.b.clone(),
            z: s.z.clone(),
            labels: s.labels.clone(),
            p: s.p.clone(),
            w: s.w.clone(),
            sigma2: s.sigma2,
            phi: s.phi,
            dz: s.dz.clone(),
            eta: s.eta.clone(),
        }
    }

    pub fn lambda(&self) -> DMatrix<f64> {
        lambda_of(&self.z, &self.labels).expect("labels in range")
    }

    pub fn occupied_clusters(&self) -> usize {
        let mut seen = vec![false; self.z.nrows()];
        for &k in &self.labels {
            seen[k] = true;
        }
        seen.into_iter().filter(|&x| x).count()
    }
}

/// Retained draws from one or more chains plus per-sweep diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub draws: Vec<Draw>,
    pub kind: ResponseKind,
    pub factor_model: FactorModel,
    /// Post-burn-in acceptance rate of the phi proposals.
    pub phi_acceptance: f64,
    pub log_joint: Vec<f64>,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn phi_trace(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.phi).collect()
    }

    pub fn sigma2_trace(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.sigma2).collect()
    }

    pub fn cluster_count_trace(&self) -> Vec<usize> {
        self.draws.iter().map(|d| d.occupied_clusters()).collect()
    }

    pub fn summarize(&self, trace: &[f64]) -> Option<ScalarSummary> {
        ScalarSummary::of(trace)
    }

    /// Per-species label with the highest posterior frequency.
    pub fn map_labels(&self) -> Vec<usize> {
        let Some(first) = self.draws.first() else { return vec![] };
        let (s, na) = (first.labels.len(), first.z.nrows());
        (0..s)
            .map(|l| {
                let mut c = vec![0usize; na];
                for d in &self.draws {
                    c[d.labels[l]] += 1;
                }
                // first maximum wins on ties
                let best = *c.iter().max().unwrap();
                c.iter().position(|&v| v == best).unwrap()
            })
            .collect()
    }

    /// Point estimate of the partition: the retained draw whose co-clustering
    /// matrix is closest in squared error to the posterior co-occurrence
    /// matrix. Unlike [`Self::map_labels`] it is unaffected by label switching.
    pub fn point_partition(&self) -> Vec<usize> {
        let Some(first) = self.draws.first() else { return vec![] };
        let cm = self.co_occurrence();
        let s = first.labels.len();
        let mut best = (f64::INFINITY, 0);
        for (t, d) in self.draws.iter().enumerate() {
            let mut loss = 0.0;
            for i in 0..s {
                for j in 0..i {
                    let same = if d.labels[i] == d.labels[j] { 1.0 } else { 0.0 };
                    loss += (same - cm[(i, j)]).powi(2);
                }
            }
            if loss < best.0 {
                best = (loss, t);
            }
        }
        self.draws[best.1].labels.clone()
    }

    /// Fraction of draws in which species `l` and `l'` share a label.
    pub fn co_occurrence(&self) -> DMatrix<f64> {
        let Some(first) = self.draws.first() else { return DMatrix::zeros(0, 0) };
        let s = first.labels.len();
        let mut m = DMatrix::zeros(s, s);
        for d in &self.draws {
            for i in 0..s {
                for j in 0..s {
                    if d.labels[i] == d.labels[j] {
                        m[(i, j)] += 1.0;
                    }
                }
            }
        }
        m / self.draws.len() as f64
    }

    pub fn mean_of<F: Fn(&Draw) -> DMatrix<f64>>(&self, f: F) -> Option<DMatrix<f64>> {
        let mut it = self.draws.iter();
        let mut acc = f(it.next()?);
        for d in it {
            acc += f(d);
        }
        Some(acc / self.draws.len() as f64)
    }

    pub fn lambda_mean(&self) -> Option<DMatrix<f64>> {
        self.mean_of(|d| d.lambda())
    }

    /// `Sigma*` evaluated at the posterior means of `Lambda` and `sigma2`.
    pub fn sigma_star_hat(&self) -> Option<DMatrix<f64>> {
        let lam = self.lambda_mean()?;
        let s2 = self.sigma2_trace().iter().sum::<f64>() / self.len() as f64;
        sigma_star(&lam, s2).ok()
    }

    /// Concatenates chains in order.
    pub fn merge(chains: Vec<PosteriorDraws>) -> Result<PosteriorDraws> {
        let mut it = chains.into_iter();
        let mut out = it.next().ok_or_else(|| Error::invalid("no chains to merge"))?;
        let mut total_acc = out.phi_acceptance * out.len() as f64;
        for c in it {
            if c.kind != out.kind || c.factor_model != out.factor_model {
                return Err(Error::invalid("chains come from different models"));
            }
            total_acc += c.phi_acceptance * c.len() as f64;
            out.draws.extend(c.draws);
            out.log_joint.extend(c.log_joint);
        }
        if !out.is_empty() {
            out.phi_acceptance = total_acc / out.len() as f64;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarSummary {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ScalarSummary {
    /// Mean, sd and the empirical 2.5%/97.5% quantiles.
    pub fn of(trace: &[f64]) -> Option<Self> {
        if trace.is_empty() {
            return None;
        }
        let n = trace.len() as f64;
        let mean = trace.iter().sum::<f64>() / n;
        let sd = if trace.len() > 1 {
            (trace.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = trace.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        Some(ScalarSummary { mean, sd, lower: quantile(&sorted, 0.025), upper: quantile(&sorted, 0.975) })
    }

    pub fn covers(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
