//! Synthetic datasets from the generative model, with the truth retained.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dists::{self, Side};
use crate::error::{Error, Result};
use crate::kernel::{self, SiteSet};
use crate::model::{self, Dataset, ResponseKind};

const MAX_ATOM_RETRIES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n: usize,
    pub s: usize,
    pub p: usize,
    /// True number of factors.
    pub q: usize,
    pub k_true: usize,
    pub phi_true: f64,
    pub sigma2_true: f64,
    pub kind: ResponseKind,
    pub seed: u64,
    pub atom_values: Vec<f64>,
    /// Minimum number of coordinates in which any two atoms must differ.
    pub min_atom_separation: usize,
    /// Side length of the square the random sites are drawn in. A side of 2
    /// gives a median pairwise distance close to 1.
    pub square_side: f64,
    /// Fixed sites; random ones are drawn when absent.
    #[serde(skip)]
    pub sites: Option<SiteSet>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 100,
            s: 40,
            p: 3,
            q: 3,
            k_true: 4,
            phi_true: 2.0,
            sigma2_true: 1.0,
            kind: ResponseKind::Continuous,
            seed: 1,
            atom_values: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            min_atom_separation: 1,
            square_side: 2.0,
            sites: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q == 0 || self.k_true == 0 || self.k_true > self.s {
            return Err(Error::invalid("need q >= 1 and 1 <= K_true <= S"));
        }
        if self.n < 2 || self.p == 0 {
            return Err(Error::invalid("need n >= 2 and p >= 1"));
        }
        if !(self.phi_true > 0.0) || !(self.sigma2_true >= 0.0) || !(self.square_side > 0.0) {
            return Err(Error::invalid("phi_true and the square side must be positive, sigma2_true non-negative"));
        }
        if self.atom_values.is_empty() {
            return Err(Error::invalid("atom value set is empty"));
        }
        if let Some(s) = &self.sites {
            if s.len() != self.n {
                return Err(Error::dim(format!("{} sites supplied for n = {}", s.len(), self.n)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    /// S x p
    pub b: DMatrix<f64>,
    /// K_true x q; row 0 is `0.5 * 1`.
    pub z: DMatrix<f64>,
    /// 0-based cluster labels, `labels[0] = 0`.
    pub labels: Vec<usize>,
    /// n x q
    pub w: DMatrix<f64>,
    pub sigma2: f64,
    pub phi: f64,
    pub sigma_star: DMatrix<f64>,
    /// Latent responses (binary data only; equal to `Y` for continuous data).
    pub u: DMatrix<f64>,
    /// Covariates were simulated rather than supplied.
    pub simulated_covariates: bool,
}

impl SimTruth {
    pub fn lambda(&self) -> DMatrix<f64> {
        model::lambda_of(&self.z, &self.labels).expect("labels in range")
    }
}

/// Standardize each column to mean 0, sd 1 (sample sd, n - 1 divisor).
pub fn standardize_columns(x: &mut DMatrix<f64>) {
    let n = x.nrows() as f64;
    for mut col in x.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / (n - 1.0)).sqrt();
        if sd > 0.0 {
            col /= sd;
        }
    }
}

fn random_sites<R: Rng + ?Sized>(n: usize, side: f64, rng: &mut R) -> Result<SiteSet> {
    let coords = (0..n).map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side]).collect();
    SiteSet::from_coords(coords)
}

fn atoms<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<DMatrix<f64>> {
    let mut z = DMatrix::zeros(cfg.k_true, cfg.q);
    z.row_mut(0).fill(0.5);
    let vals = &cfg.atom_values;
    for j in 1..cfg.k_true {
        let mut tries = 0;
        loop {
            tries += 1;
            if tries > MAX_ATOM_RETRIES {
                return Err(Error::invalid(format!(
                    "could not draw {} pairwise distinct atoms after {MAX_ATOM_RETRIES} tries",
                    cfg.k_true
                )));
            }
            let row: Vec<f64> = (0..cfg.q).map(|_| vals[rng.random_range(0..vals.len())]).collect();
            let separated = (0..j).all(|i| {
                let diff = (0..cfg.q).filter(|&h| z[(i, h)] != row[h]).count();
                diff >= cfg.min_atom_separation.max(1)
            });
            if separated {
                for (h, v) in row.into_iter().enumerate() {
                    z[(j, h)] = v;
                }
                break;
            }
        }
    }
    Ok(z)
}

/// Continuous responses: `Y = X B^T + W Lambda^T + E`, `E ~ N(0, sigma2)`.
pub fn gen_continuous<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<(Dataset, SimTruth)> {
    cfg.validate()?;
    let (n, s, p, q) = (cfg.n, cfg.s, cfg.p, cfg.q);
    let sites = match &cfg.sites {
        Some(s) => s.clone(),
        None => random_sites(n, cfg.square_side, rng)?,
    };
    let mut x = DMatrix::from_fn(n, p, |_, _| dists::std_normal(rng));
    standardize_columns(&mut x);
    let b = DMatrix::from_fn(s, p, |_, _| dists::std_normal(rng));
    let z = atoms(cfg, rng)?;
    let mut labels = vec![0; s];
    for l in labels.iter_mut().skip(1) {
        *l = rng.random_range(0..cfg.k_true);
    }
    let cov = kernel::build_exp_cov(&sites, cfg.phi_true)?;
    let mut w = DMatrix::zeros(n, q);
    for h in 0..q {
        w.set_column(h, &(&cov.chol * dists::std_normal_vec(n, rng)));
    }
    let lambda = model::lambda_of(&z, &labels)?;
    let sd = cfg.sigma2_true.sqrt();
    let noise = DMatrix::from_fn(n, s, |_, _| sd * dists::std_normal(rng));
    let u = &x * b.transpose() + &w * lambda.transpose() + noise;
    let sigma_star = &lambda * lambda.transpose() + DMatrix::identity(s, s) * cfg.sigma2_true;
    let species = (1..=s).map(|l| format!("sp{l}")).collect();
    let covariate_names = (1..=p).map(|j| format!("x{j}")).collect();
    let data = Dataset::new(sites, x, u.clone(), ResponseKind::Continuous, species, covariate_names)?;
    let truth = SimTruth {
        b,
        z,
        labels,
        w,
        sigma2: cfg.sigma2_true,
        phi: cfg.phi_true,
        sigma_star,
        u,
        simulated_covariates: true,
    };
    Ok((data, truth))
}

/// Binary responses: the continuous construction thresholded at zero.
pub fn gen_binary<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<(Dataset, SimTruth)> {
    let (mut data, truth) = gen_continuous(cfg, rng)?;
    data.y = truth.u.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    data.kind = ResponseKind::Binary;
    Ok((data, truth))
}

/// Dispatches on `cfg.kind`.
pub fn generate<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<(Dataset, SimTruth)> {
    match cfg.kind {
        ResponseKind::Continuous => gen_continuous(cfg, rng),
        ResponseKind::Binary => gen_binary(cfg, rng),
    }
}

/// Latent draw `U | rest` consistent with observed `Y`, used by the
/// simulation-based tests of the sampler.
pub fn draw_latent<R: Rng + ?Sized>(mean: &DMatrix<f64>, sd: f64, y: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(mean.nrows(), mean.ncols(), |i, l| {
        let side = if y[(i, l)] == 1.0 { Side::Above0 } else { Side::Below0 };
        dists::sample_truncnorm_uni(mean[(i, l)], sd, side, rng)
    })
}

/// Column means of `Y` (presence rates for binary data).
pub fn column_means(y: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(y.ncols(), y.column_iter().map(|c| c.sum() / y.nrows() as f64))
}
