//! The Gibbs/Metropolis sweep and the chain driver.
//!
//! One sweep updates, in order: `U` (binary only), `B`, `Z`, `k`, `p`, `W`,
//! `phi` (spatial only), `sigma2` (unless fixed), then `(D_Z, eta)`.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dists::{self, Side};
use crate::error::{Error, Result};
use crate::kernel::{self, SpatialCovariance, Spectral};
use crate::model::{Dataset, Draw, Hyperparams, ModelState, PosteriorDraws, ResponseKind};

/// What happened in one sweep.
#[derive(Debug, Clone, Default)]
pub struct SweepReport {
    pub mh_phi_accepted: bool,
    pub log_joint: Option<f64>,
    pub timings: Vec<(&'static str, Duration)>,
}

/// Holds the data-dependent constants and the kernel factorization for the
/// current decay value. The training data must not contain held-out sites.
pub struct Sampler<'a> {
    data: &'a Dataset,
    hyper: &'a Hyperparams,
    xtx: DMatrix<f64>,
    cov: Option<SpatialCovariance>,
    spectral: Option<Spectral>,
    pub phi_step: f64,
}

impl<'a> Sampler<'a> {
    pub fn new(data: &'a Dataset, hyper: &'a Hyperparams) -> Result<Self> {
        hyper.validate(data.s())?;
        Ok(Sampler {
            data,
            hyper,
            xtx: data.x.transpose() * &data.x,
            cov: None,
            spectral: None,
            phi_step: hyper.mcmc.mh_step_phi,
        })
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn hyper(&self) -> &Hyperparams {
        self.hyper
    }

    fn covariance(&mut self, phi: f64) -> Result<&SpatialCovariance> {
        if self.cov.as_ref().map(|c| c.phi) != Some(phi) {
            self.cov = Some(kernel::build_exp_cov_with_jitter(&self.data.sites, phi, self.hyper.jitter)?);
            self.spectral = None;
        }
        Ok(self.cov.as_ref().unwrap())
    }

    fn spectral(&mut self, phi: f64) -> Result<&Spectral> {
        self.covariance(phi)?;
        if self.spectral.is_none() {
            self.spectral = Some(self.cov.as_ref().unwrap().spectral());
        }
        Ok(self.spectral.as_ref().unwrap())
    }

    /// `U - X B^T`.
    fn resid_xb(&self, state: &ModelState) -> DMatrix<f64> {
        state.latent(self.data) - &self.data.x * state.b.transpose()
    }

    /// `U - X B^T - W Lambda^T`.
    pub fn residual(&self, state: &ModelState) -> DMatrix<f64> {
        self.resid_xb(state) - &state.w * state.lambda().transpose()
    }

    /// Latent responses given everything else (binary data only).
    pub fn step_u<R: Rng + ?Sized>(&self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        if self.data.kind != ResponseKind::Binary {
            return Ok(());
        }
        let mean = &self.data.x * state.b.transpose() + &state.w * state.lambda().transpose();
        let sd = state.sigma2.sqrt();
        let y = &self.data.y;
        let u = state.u.get_or_insert_with(|| DMatrix::zeros(y.nrows(), y.ncols()));
        for l in 0..y.ncols() {
            for i in 0..y.nrows() {
                let side = if y[(i, l)] == 1.0 { Side::Above0 } else { Side::Below0 };
                u[(i, l)] = dists::sample_truncnorm_uni(mean[(i, l)], sd, side, rng);
            }
        }
        Ok(())
    }

    /// Mean (p x S) and covariance of the coefficient rows' conditional.
    pub fn b_conditional(&self, state: &ModelState) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let p = self.data.p();
        let s2 = state.sigma2;
        let mut prec = &self.xtx / s2;
        for i in 0..p {
            prec[(i, i)] += 1.0 / self.hyper.c;
        }
        let cov = dists::spd_inverse(&prec, "coefficient precision")?;
        let e = state.latent(self.data) - &state.w * state.lambda().transpose();
        let mean = &cov * (self.data.x.transpose() * e) / s2;
        Ok((mean, cov))
    }

    pub fn step_b<R: Rng + ?Sized>(&self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        let (mean, cov) = self.b_conditional(state)?;
        let l = dists::cholesky_lower(&cov, "coefficient covariance")?;
        for sp in 0..self.data.s() {
            let draw = dists::sample_mvn_chol(&mean.column(sp).into_owned(), &l, rng)?;
            state.b.set_row(sp, &draw.transpose());
        }
        Ok(())
    }

    /// Conditional mean and covariance of atom `j` given its members.
    pub fn z_conditional(
        &self,
        state: &ModelState,
        j: usize,
        resid_xb: &DMatrix<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let r = self.hyper.r;
        let s2 = state.sigma2;
        let members: Vec<usize> = (0..state.labels.len()).filter(|&l| state.labels[l] == j).collect();
        let dz_inv = dists::spd_inverse(&state.dz, "D_Z")?;
        let wtw = state.w.transpose() * &state.w;
        let prec = wtw * (members.len() as f64 / s2) + dz_inv;
        let cov = dists::spd_inverse(&prec, "atom precision")?;
        let mut sum = DVector::zeros(self.data.n());
        for &l in &members {
            sum += resid_xb.column(l);
        }
        let mean = &cov * (state.w.transpose() * sum) / s2;
        debug_assert_eq!(mean.len(), r);
        Ok((mean, cov))
    }

    pub fn step_z<R: Rng + ?Sized>(&self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        let e = self.resid_xb(state);
        let occ = state.occupancy();
        let dz_chol = dists::cholesky_lower(&state.dz, "D_Z")?;
        for j in 0..state.z.nrows() {
            let row = if j == 0 {
                let (mean, cov) = self.z_conditional(state, 0, &e)?;
                let current = state.z.row(0).transpose();
                dists::sample_truncnorm_orthant_from(&mean, &cov, Some(&current), self.hyper.orthant_sweeps, rng)?
            } else if occ[j] == 0 {
                dists::sample_mvn_chol(&DVector::zeros(self.hyper.r), &dz_chol, rng)?
            } else {
                let (mean, cov) = self.z_conditional(state, j, &e)?;
                let l = dists::cholesky_lower(&cov, "atom covariance")?;
                dists::sample_mvn_chol(&mean, &l, rng)?
            };
            state.z.set_row(j, &row.transpose());
        }
        Ok(())
    }

    /// Unnormalized log label weights, S x N (row 0 is unused: the first label is pinned).
    pub fn label_log_weights(&self, state: &ModelState) -> DMatrix<f64> {
        let e = self.resid_xb(state);
        let v = &state.w * state.z.transpose(); // n x N
        let cross = e.transpose() * &v; // S x N
        let s2 = state.sigma2;
        let na = state.z.nrows();
        let vnorm: Vec<f64> = (0..na).map(|j| v.column(j).norm_squared()).collect();
        DMatrix::from_fn(e.ncols(), na, |l, j| {
            let lp = state.p[j].ln();
            if lp == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                lp - (vnorm[j] - 2.0 * cross[(l, j)]) / (2.0 * s2)
            }
        })
    }

    pub fn step_k<R: Rng + ?Sized>(&self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        let lw = self.label_log_weights(state);
        state.labels[0] = 0;
        for l in 1..state.labels.len() {
            let row: Vec<f64> = lw.row(l).iter().cloned().collect();
            if row.iter().all(|v| *v == f64::NEG_INFINITY) {
                return Err(Error::invalid(format!("all label weights vanish for species {l}")));
            }
            state.labels[l] = dists::sample_log_categorical(&row, rng);
        }
        Ok(())
    }

    pub fn step_p<R: Rng + ?Sized>(&self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        state.p = dists::sample_gd_stick(self.hyper.alpha, &state.occupancy(), self.hyper.stick_variant, rng);
        Ok(())
    }

    /// Column-wise factor update. The full residual is maintained across
    /// columns by adding back and removing one rank-1 term at a time.
    pub fn step_w<R: Rng + ?Sized>(&mut self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        let lambda = state.lambda();
        let mut resid = self.resid_xb(state) - &state.w * lambda.transpose();
        let s2 = state.sigma2;
        let n = self.data.n();
        let spectral = if self.hyper.spatial() { Some(self.spectral(state.phi)?.clone()) } else { None };
        for h in 0..self.hyper.r {
            let lam_h = lambda.column(h).into_owned();
            let w_old = state.w.column(h).into_owned();
            resid += &w_old * lam_h.transpose();
            let d = lam_h.norm_squared() / s2;
            let rhs = &resid * &lam_h / s2;
            let z = dists::std_normal_vec(n, rng);
            let w_new = match &spectral {
                Some(sp) => {
                    // (C^{-1} + d I)^{-1} = V diag(c / (1 + d c)) V^T
                    let scale = sp.values.map(|c| c / (1.0 + d * c));
                    let proj = sp.vectors.transpose() * &rhs;
                    let mean = &sp.vectors * proj.component_mul(&scale);
                    mean + &sp.vectors * z.component_mul(&scale.map(f64::sqrt))
                }
                None => {
                    let v = 1.0 / (1.0 + d);
                    rhs * v + z * v.sqrt()
                }
            };
            resid -= &w_new * lam_h.transpose();
            state.w.set_column(h, &w_new);
        }
        Ok(())
    }

    /// Sum over factors of the GP log density of `W` at `phi`, or `None`
    /// when `phi` is outside the prior support or the kernel is singular.
    pub fn phi_log_target(&mut self, w: &DMatrix<f64>, phi: f64) -> Option<f64> {
        if !(phi > self.hyper.phi_min && phi < self.hyper.phi_max) {
            return None;
        }
        let cov = self.covariance(phi).ok()?;
        Some(w.column_iter().map(|c| cov.log_density(&c.into_owned())).sum())
    }

    fn factor_log_density(cov: &SpatialCovariance, w: &DMatrix<f64>) -> f64 {
        w.column_iter().map(|c| cov.log_density(&c.into_owned())).sum()
    }

    /// Random-walk Metropolis on `log phi`. Returns whether the proposal was accepted.
    pub fn step_phi<R: Rng + ?Sized>(&mut self, state: &mut ModelState, rng: &mut R) -> Result<bool> {
        if !self.hyper.spatial() {
            return Ok(false);
        }
        let step = self.phi_step;
        let proposal = (state.phi.ln() + step * dists::std_normal(rng)).exp();
        self.mh_phi(state, proposal, rng)
    }

    /// Accept/reject a given proposal (log-scale random walk, so the
    /// uniform prior picks up a `phi'/phi` Jacobian factor).
    pub fn mh_phi<R: Rng + ?Sized>(&mut self, state: &mut ModelState, proposal: f64, rng: &mut R) -> Result<bool> {
        let u: f64 = rng.random();
        if !(proposal > self.hyper.phi_min && proposal < self.hyper.phi_max) {
            return Ok(false);
        }
        let current = {
            let cov = self.covariance(state.phi)?;
            Self::factor_log_density(cov, &state.w)
        };
        let cand = match kernel::build_exp_cov_with_jitter(&self.data.sites, proposal, self.hyper.jitter) {
            Ok(c) => c,
            Err(_) => return Ok(false),
        };
        let proposed = Self::factor_log_density(&cand, &state.w);
        let log_ratio = proposed - current + proposal.ln() - state.phi.ln();
        if u.ln() < log_ratio {
            state.phi = proposal;
            self.cov = Some(cand);
            self.spectral = None;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    pub fn step_sigma2<R: Rng + ?Sized>(&self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        if let Some(fixed) = self.hyper.sigma2_fixed {
            state.sigma2 = fixed;
            return Ok(());
        }
        let (shape, rate) = self.sigma2_conditional(state);
        state.sigma2 = dists::sample_inv_gamma(shape, rate, rng);
        Ok(())
    }

    /// Inverse-gamma `(shape, rate)` of the nugget conditional.
    pub fn sigma2_conditional(&self, state: &ModelState) -> (f64, f64) {
        let ssr = self.residual(state).norm_squared();
        let ns = (self.data.n() * self.data.s()) as f64;
        ((ns + self.hyper.a) / 2.0, (ssr + self.hyper.b) / 2.0)
    }

    pub fn step_dz_eta<R: Rng + ?Sized>(&self, state: &mut ModelState, rng: &mut R) -> Result<()> {
        let (dz, eta) = sample_dz_eta(&state.z, &state.eta, self.hyper, rng)?;
        state.dz = dz;
        state.eta = eta;
        Ok(())
    }

    /// One full sweep.
    pub fn sweep<R: Rng + ?Sized>(&mut self, state: &mut ModelState, rng: &mut R) -> Result<SweepReport> {
        let mut report = SweepReport::default();
        macro_rules! timed {
            ($name:literal, $e:expr) => {{
                let t0 = Instant::now();
                let out = $e.map_err(|e| (($name), e))?;
                report.timings.push(($name, t0.elapsed()));
                out
            }};
        }
        let res: std::result::Result<(), (&'static str, Error)> = (|| {
            timed!("U", self.step_u(state, rng));
            timed!("B", self.step_b(state, rng));
            timed!("Z", self.step_z(state, rng));
            timed!("k", self.step_k(state, rng));
            timed!("p", self.step_p(state, rng));
            timed!("W", self.step_w(state, rng));
            report.mh_phi_accepted = timed!("phi", self.step_phi(state, rng));
            timed!("sigma2", self.step_sigma2(state, rng));
            timed!("D_Z", self.step_dz_eta(state, rng));
            Ok(())
        })();
        res.map_err(|(block, e)| Error::Sampler { block, iteration: 0, source: Box::new(e) })?;
        Ok(report)
    }

    /// Log of the joint density of `(U, W, B, Z, k, p, sigma2, D_Z, eta, phi)`
    /// up to an additive constant, or `-inf` off the support.
    pub fn log_joint(&mut self, state: &ModelState) -> f64 {
        log_joint(self, state)
    }
}

/// Draw `(D_Z, eta)` given the atoms: `D_Z` from its inverse-Wishart
/// conditional, then each `eta_h` from its inverse-gamma conditional given `D_Z`.
pub fn sample_dz_eta<R: Rng + ?Sized>(
    z: &DMatrix<f64>,
    eta: &DVector<f64>,
    hyper: &Hyperparams,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let r = z.ncols();
    let na = z.nrows() as f64;
    let nu0 = hyper.iw_prior_df();
    let mut scale = z.transpose() * z;
    for h in 0..r {
        scale[(h, h)] += hyper.iw_scale / eta[h];
    }
    let dz = dists::sample_inv_wishart(nu0 + na, &scale, rng)?;
    let dz_inv = dists::spd_inverse(&dz, "D_Z draw")?;
    let shape = hyper.eta_shape + nu0 / 2.0;
    let eta = DVector::from_fn(r, |h, _| {
        dists::sample_inv_gamma(shape, 0.5 * hyper.iw_scale * dz_inv[(h, h)] + hyper.eta_rate, rng)
    });
    Ok((dz, eta))
}

fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

fn ln_beta_pdf(x: f64, a: f64, b: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return f64::NEG_INFINITY;
    }
    (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
}

fn ln_inv_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x
}

fn ln_mvn_zero(x: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let Some(ch) = cov.clone().cholesky() else { return f64::NEG_INFINITY };
    let l = ch.l();
    let logdet = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let z = l.solve_lower_triangular(x).unwrap();
    -0.5 * (x.len() as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + z.norm_squared())
}

fn ln_inv_wishart_pdf(x: &DMatrix<f64>, df: f64, scale: &DMatrix<f64>) -> f64 {
    let d = x.nrows() as f64;
    let Some(xc) = x.clone().cholesky() else { return f64::NEG_INFINITY };
    let Some(sc) = scale.clone().cholesky() else { return f64::NEG_INFINITY };
    let logdet_x = 2.0 * xc.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let logdet_s = 2.0 * sc.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let tr = (scale * xc.inverse()).trace();
    let mut ln_mgamma = d * (d - 1.0) / 4.0 * std::f64::consts::PI.ln();
    for j in 0..x.nrows() {
        ln_mgamma += ln_gamma(df / 2.0 - j as f64 / 2.0);
    }
    0.5 * df * logdet_s - 0.5 * df * d * 2f64.ln() - ln_mgamma - 0.5 * (df + d + 1.0) * logdet_x - 0.5 * tr
}

/// Joint log density; see [`Sampler::log_joint`].
pub fn log_joint(sampler: &mut Sampler<'_>, state: &ModelState) -> f64 {
    let hyper = sampler.hyper.clone();
    let data = sampler.data;
    let (n, s) = (data.n(), data.s());
    if let Some(u) = &state.u {
        if u.iter().zip(data.y.iter()).any(|(uv, yv)| (*uv > 0.0) != (*yv == 1.0)) {
            return f64::NEG_INFINITY;
        }
    }
    if state.z.row(0).iter().any(|&v| !(v > 0.0)) || state.labels[0] != 0 {
        return f64::NEG_INFINITY;
    }
    let s2 = state.sigma2;
    let ssr = sampler.residual(state).norm_squared();
    let mut lp = -0.5 * (n * s) as f64 * (2.0 * std::f64::consts::PI * s2).ln() - ssr / (2.0 * s2);

    if hyper.spatial() {
        match sampler.phi_log_target(&state.w, state.phi) {
            Some(v) => lp += v - (hyper.phi_max - hyper.phi_min).ln(),
            None => return f64::NEG_INFINITY,
        }
    } else {
        lp += -0.5 * state.w.norm_squared() - 0.5 * (n * hyper.r) as f64 * (2.0 * std::f64::consts::PI).ln();
    }
    if hyper.sigma2_fixed.is_none() {
        lp += ln_inv_gamma_pdf(s2, hyper.a / 2.0, hyper.b / 2.0);
    }
    let p = data.p() as f64;
    lp += -0.5 * state.b.norm_squared() / hyper.c - 0.5 * s as f64 * p * (2.0 * std::f64::consts::PI * hyper.c).ln();
    for j in 0..state.z.nrows() {
        lp += ln_mvn_zero(&state.z.row(j).transpose(), &state.dz);
    }
    for &k in &state.labels {
        lp += state.p[k].ln();
    }
    // generalized Dirichlet prior on p, through the stick fractions
    let na = state.p.len();
    let mut remaining = 1.0;
    for j in 0..na - 1 {
        let (a0, b0) = hyper.stick_variant.prior_shapes(hyper.alpha, na, j);
        let xi = if remaining > 0.0 { (state.p[j] / remaining).min(1.0) } else { 0.0 };
        lp += ln_beta_pdf(xi, a0, b0) - remaining.ln();
        remaining -= state.p[j];
    }
    let mut iw_scale = DMatrix::zeros(hyper.r, hyper.r);
    for h in 0..hyper.r {
        iw_scale[(h, h)] = hyper.iw_scale / state.eta[h];
        lp += ln_inv_gamma_pdf(state.eta[h], hyper.eta_shape, hyper.eta_rate);
    }
    lp += ln_inv_wishart_pdf(&state.dz, hyper.iw_prior_df(), &iw_scale);
    lp
}

/// Runs one chain from the default initial state.
pub fn run_chain<R: Rng + ?Sized>(data: &Dataset, hyper: &Hyperparams, rng: &mut R) -> Result<PosteriorDraws> {
    let init = ModelState::initial(data, hyper, rng)?;
    run_chain_from(data, hyper, init, rng)
}

pub fn run_chain_from<R: Rng + ?Sized>(
    data: &Dataset,
    hyper: &Hyperparams,
    mut state: ModelState,
    rng: &mut R,
) -> Result<PosteriorDraws> {
    let mut sampler = Sampler::new(data, hyper)?;
    let m = &hyper.mcmc;
    let mut draws = Vec::with_capacity((m.n_iter - m.burn_in) / m.thin);
    let mut log_joint = vec![];
    let (mut window_acc, mut window_n) = (0usize, 0usize);
    let (mut post_acc, mut post_n) = (0usize, 0usize);
    const ADAPT_WINDOW: usize = 50;

    for it in 0..m.n_iter {
        let report = sampler.sweep(&mut state, rng).map_err(|e| match e {
            Error::Sampler { block, source, .. } => Error::Sampler { block, iteration: it, source },
            other => other,
        })?;
        let accepted = report.mh_phi_accepted as usize;
        if it < m.burn_in {
            window_acc += accepted;
            window_n += 1;
            if m.adapt && window_n == ADAPT_WINDOW {
                let rate = window_acc as f64 / window_n as f64;
                if rate < 0.25 {
                    sampler.phi_step *= 0.7;
                } else if rate > 0.45 {
                    sampler.phi_step *= 1.3;
                }
                window_acc = 0;
                window_n = 0;
            }
        } else {
            post_acc += accepted;
            post_n += 1;
            if (it - m.burn_in + 1).is_multiple_of(m.thin) {
                draws.push(Draw::from_state(&state));
                if m.record_log_joint {
                    log_joint.push(sampler.log_joint(&state));
                }
            }
        }
        if m.progress_every > 0 && (it + 1) % m.progress_every == 0 {
            let rate = if post_n > 0 { post_acc as f64 / post_n as f64 } else { f64::NAN };
            eprintln!(
                "iter {:>7}  phi {:.4}  sigma2 {:.4}  clusters {:>3}  accept {:.3}  step {:.3}",
                it + 1,
                state.phi,
                state.sigma2,
                state.occupied_clusters(),
                rate,
                sampler.phi_step
            );
        }
    }
    Ok(PosteriorDraws {
        draws,
        kind: data.kind,
        factor_model: hyper.factor_model,
        phi_acceptance: if post_n > 0 { post_acc as f64 / post_n as f64 } else { 0.0 },
        log_joint,
    })
}
