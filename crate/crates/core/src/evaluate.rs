//! Held-out prediction, predictive metrics, covariance recovery,
//! orthogonalization of the spatial effects, and chain diagnostics.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bvn::{bvn_cdf, norm_cdf};
use crate::dists::{self, RngStream};
use crate::error::{Error, Result};
use crate::kernel::{Kriging, SiteSet};
use crate::model::{Dataset, Draw, FactorModel, PosteriorDraws, ResponseKind};

/// How factor values at test sites enter the prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PredictMode {
    /// Draw `W_pred` from its conditional per retained draw.
    #[default]
    Sampled,
    /// Integrate `W_pred` out analytically.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictOptions {
    pub mode: PredictMode,
    pub seed: u64,
    pub jitter: f64,
    /// Keep the per-draw prediction matrices.
    pub keep_draws: bool,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions { mode: PredictMode::Sampled, seed: 1, jitter: 0.0, keep_draws: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub site_ids: Vec<String>,
    pub species: Vec<String>,
    pub kind: ResponseKind,
    /// m x S: latent means for continuous data, presence probabilities for binary data.
    pub mean: DMatrix<f64>,
    pub per_draw: Option<Vec<DMatrix<f64>>>,
    pub n_draws: usize,
}

/// Per-draw predictive moments at the test sites: the latent mean
/// `X B^T + M Lambda^T` (m x S) and the factor variance `v_i` per site.
struct DrawMoments {
    mean: DMatrix<f64>,
    var: DVector<f64>,
}

struct Split {
    train: SiteSet,
    test: SiteSet,
    x_test: DMatrix<f64>,
}

fn split(data: &Dataset, draws: &PosteriorDraws) -> Result<Split> {
    let train_idx = data.train_indices();
    let test_idx = data.test_indices();
    let first = draws.draws.first().ok_or_else(|| Error::invalid("no posterior draws"))?;
    if first.w.nrows() != train_idx.len() {
        return Err(Error::dim(format!(
            "draws carry {} factor rows but the dataset has {} training sites",
            first.w.nrows(),
            train_idx.len()
        )));
    }
    if first.b.nrows() != data.s() || first.b.ncols() != data.p() {
        return Err(Error::dim("coefficient draws do not match the dataset"));
    }
    Ok(Split {
        train: data.sites.subset(&train_idx),
        test: data.sites.subset(&test_idx),
        x_test: data.x.select_rows(&test_idx),
    })
}

fn moments(d: &Draw, sp: &Split, factor_model: FactorModel, jitter: f64) -> Result<(DrawMoments, Option<Kriging>)> {
    let lambda = d.lambda();
    let xb = &sp.x_test * d.b.transpose();
    match factor_model {
        FactorModel::Spatial => {
            let k = Kriging::new(&sp.train, &sp.test, d.phi, jitter)?;
            let m = &k.weights * &d.w;
            let var = k.cov.diagonal();
            Ok((DrawMoments { mean: xb + m * lambda.transpose(), var }, Some(k)))
        }
        FactorModel::Independent => {
            let m = sp.test.len();
            Ok((DrawMoments { mean: xb, var: DVector::from_element(m, 1.0) }, None))
        }
    }
}

fn predict_draw(
    t: usize,
    d: &Draw,
    sp: &Split,
    kind: ResponseKind,
    factor_model: FactorModel,
    opts: &PredictOptions,
) -> Result<DMatrix<f64>> {
    let (mom, krig) = moments(d, sp, factor_model, opts.jitter)?;
    let lambda = d.lambda();
    let sd = d.sigma2.sqrt();
    match opts.mode {
        PredictMode::Sampled => {
            let mut rng = RngStream::new(opts.seed, t as u64);
            let (m, r) = (sp.test.len(), lambda.ncols());
            let z = DMatrix::from_fn(m, r, |_, _| dists::std_normal(&mut rng));
            let dev = match &krig {
                Some(k) => &k.sqrt * z,
                None => z,
            };
            let latent = mom.mean + dev * lambda.transpose();
            Ok(match kind {
                ResponseKind::Continuous => latent,
                ResponseKind::Binary => latent.map(|v| norm_cdf(v / sd)),
            })
        }
        PredictMode::Mean => Ok(match kind {
            ResponseKind::Continuous => mom.mean,
            ResponseKind::Binary => {
                let ln2: Vec<f64> = lambda.row_iter().map(|r| r.norm_squared()).collect();
                DMatrix::from_fn(mom.mean.nrows(), mom.mean.ncols(), |i, l| {
                    norm_cdf(mom.mean[(i, l)] / (d.sigma2 + mom.var[i] * ln2[l]).sqrt())
                })
            }
        }),
    }
}

/// Posterior predictive mean at the held-out sites, averaging over draws.
///
/// Per-draw work runs in parallel; each draw has its own random stream and
/// the reduction is sequential, so results do not depend on thread count.
pub fn predict_heldout(draws: &PosteriorDraws, data: &Dataset, opts: &PredictOptions) -> Result<PredictionResult> {
    let test_idx = data.test_indices();
    let site_ids: Vec<String> = test_idx.iter().map(|&i| data.sites.ids()[i].clone()).collect();
    if test_idx.is_empty() {
        return Ok(PredictionResult {
            site_ids,
            species: data.species.clone(),
            kind: data.kind,
            mean: DMatrix::zeros(0, data.s()),
            per_draw: opts.keep_draws.then(Vec::new),
            n_draws: draws.len(),
        });
    }
    let sp = split(data, draws)?;
    let per: Vec<DMatrix<f64>> = draws
        .draws
        .par_iter()
        .enumerate()
        .map(|(t, d)| predict_draw(t, d, &sp, data.kind, draws.factor_model, opts))
        .collect::<Result<_>>()?;
    let mut mean = DMatrix::zeros(test_idx.len(), data.s());
    for m in &per {
        mean += m;
    }
    mean /= per.len() as f64;
    Ok(PredictionResult {
        site_ids,
        species: data.species.clone(),
        kind: data.kind,
        mean,
        per_draw: opts.keep_draws.then_some(per),
        n_draws: draws.len(),
    })
}

fn same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!("shapes {:?} and {:?} differ", a.shape(), b.shape())));
    }
    Ok(())
}

/// Mean squared prediction error over all held-out sites and species.
pub fn pmse(truth: &DMatrix<f64>, pred: &DMatrix<f64>) -> Result<f64> {
    same_shape(truth, pred)?;
    if truth.is_empty() {
        return Err(Error::Undefined("PMSE of an empty prediction".into()));
    }
    Ok((truth - pred).norm_squared() / truth.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TjurResult {
    /// `None` for species without both a presence and an absence.
    pub per_species: Vec<Option<f64>>,
    pub mean: f64,
    pub n_excluded: usize,
}

fn tjur_one(y: impl Iterator<Item = f64>, pi: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0usize, 0.0, 0usize);
    for (yv, pv) in y.zip(pi) {
        if yv == 1.0 {
            s1 += pv;
            n1 += 1;
        } else {
            s0 += pv;
            n0 += 1;
        }
    }
    (n1 > 0 && n0 > 0).then(|| s1 / n1 as f64 - s0 / n0 as f64)
}

/// Tjur's coefficient of discrimination per species and averaged over the
/// species where it is defined.
pub fn tjur_r(y_test: &DMatrix<f64>, pi_hat: &DMatrix<f64>) -> Result<TjurResult> {
    same_shape(y_test, pi_hat)?;
    let per: Vec<Option<f64>> = (0..y_test.ncols())
        .map(|l| tjur_one(y_test.column(l).iter().copied(), pi_hat.column(l).iter().copied()))
        .collect();
    let defined: Vec<f64> = per.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::Undefined("no species has both presences and absences in the test set".into()));
    }
    Ok(TjurResult {
        n_excluded: per.len() - defined.len(),
        mean: defined.iter().sum::<f64>() / defined.len() as f64,
        per_species: per,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTjur {
    pub target: String,
    pub condition: String,
    pub given_present: Option<f64>,
    pub given_absent: Option<f64>,
    /// Unconditional Tjur value of the target from the marginal probabilities.
    pub marginal: Option<f64>,
    /// `counts[c][t]`: test sites with conditioning state `c` and target state `t`.
    pub counts: [[usize; 2]; 2],
}

/// `P(U_t > 0 | U_c > 0)` and `P(U_t > 0 | U_c <= 0)` for latent means
/// `(mt, mc)`, standard deviations `(st, sc)` and correlation `rho`.
pub fn conditional_presence(mt: f64, mc: f64, st: f64, sc: f64, rho: f64) -> (f64, f64) {
    let (at, ac) = (mt / st, mc / sc);
    let pc = norm_cdf(ac);
    let pt = norm_cdf(at);
    // P(U_t > 0, U_c > 0) = P(-U_t < 0, -U_c < 0)
    let joint = bvn_cdf(at, ac, rho);
    let given1 = if pc > 0.0 { joint / pc } else { pt };
    let given0 = if pc < 1.0 { (pt - joint) / (1.0 - pc) } else { pt };
    (given1.clamp(0.0, 1.0), given0.clamp(0.0, 1.0))
}

/// Tjur contrast of `target` within the test sites where `condition` is
/// present and where it is absent.
///
/// The pair `(U_t, U_c)` at a test site is bivariate normal given a draw,
/// with mean from the kriged factors and covariance `v Lambda Lambda^T + sigma2 I`
/// (`v` the factor variance at that site).
pub fn conditional_tjur(
    draws: &PosteriorDraws,
    data: &Dataset,
    target: usize,
    condition: usize,
    jitter: f64,
) -> Result<ConditionalTjur> {
    if data.kind != ResponseKind::Binary {
        return Err(Error::invalid("conditional Tjur R2 needs binary responses"));
    }
    if target >= data.s() || condition >= data.s() || target == condition {
        return Err(Error::invalid("target and condition must be two distinct species"));
    }
    let test_idx = data.test_indices();
    if test_idx.is_empty() {
        return Err(Error::invalid("no held-out sites"));
    }
    let sp = split(data, draws)?;
    let m = test_idx.len();
    let per: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = draws
        .draws
        .par_iter()
        .map(|d| {
            let (mom, _) = moments(d, &sp, draws.factor_model, jitter)?;
            let lam = d.lambda();
            let (lt, lc) = (lam.row(target), lam.row(condition));
            let (tt, cc, tc) = (lt.norm_squared(), lc.norm_squared(), lt.dot(&lc));
            let mut g1 = vec![0.0; m];
            let mut g0 = vec![0.0; m];
            let mut marg = vec![0.0; m];
            for i in 0..m {
                let v = mom.var[i];
                let st = (d.sigma2 + v * tt).sqrt();
                let sc = (d.sigma2 + v * cc).sqrt();
                let rho = (v * tc / (st * sc)).clamp(-1.0, 1.0);
                let (a, b) = conditional_presence(mom.mean[(i, target)], mom.mean[(i, condition)], st, sc, rho);
                g1[i] = a;
                g0[i] = b;
                marg[i] = norm_cdf(mom.mean[(i, target)] / st);
            }
            Ok((g1, g0, marg))
        })
        .collect::<Result<_>>()?;
    let nd = per.len() as f64;
    let mut g1 = vec![0.0; m];
    let mut g0 = vec![0.0; m];
    let mut marg = vec![0.0; m];
    for (a, b, c) in &per {
        for i in 0..m {
            g1[i] += a[i] / nd;
            g0[i] += b[i] / nd;
            marg[i] += c[i] / nd;
        }
    }
    let yt: Vec<f64> = test_idx.iter().map(|&i| data.y[(i, target)]).collect();
    let yc: Vec<f64> = test_idx.iter().map(|&i| data.y[(i, condition)]).collect();
    let mut counts = [[0usize; 2]; 2];
    for i in 0..m {
        counts[(yc[i] == 1.0) as usize][(yt[i] == 1.0) as usize] += 1;
    }
    let stratum = |c: f64, probs: &[f64]| {
        let idx: Vec<usize> = (0..m).filter(|&i| yc[i] == c).collect();
        tjur_one(idx.iter().map(|&i| yt[i]), idx.iter().map(|&i| probs[i]))
    };
    Ok(ConditionalTjur {
        target: data.species[target].clone(),
        condition: data.species[condition].clone(),
        given_present: stratum(1.0, &g1),
        given_absent: stratum(0.0, &g0),
        marginal: tjur_one(yt.iter().copied(), marg.iter().copied()),
        counts,
    })
}

/// `||a - b||_F`.
pub fn frobenius_gap(truth: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Result<f64> {
    same_shape(truth, estimate)?;
    Ok((truth - estimate).norm())
}

/// `1 + 2 sum rho_s`, truncated at the first lag whose autocorrelation drops
/// below 0.01 or at a tenth of the trace length.
pub fn inefficiency_factor(trace: &[f64]) -> Result<f64> {
    let n = trace.len();
    if n < 100 {
        return Err(Error::invalid(format!("trace of length {n} is too short (need 100)")));
    }
    let mean = trace.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = trace.iter().map(|v| v - mean).collect();
    let c0 = dev.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if !(c0 > 0.0) {
        return Err(Error::Undefined("autocorrelation of a constant trace".into()));
    }
    let mut sum = 0.0;
    for s in 1..=n / 10 {
        let cs = dev[..n - s].iter().zip(&dev[s..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        let rho = cs / c0;
        if rho < 0.01 {
            break;
        }
        sum += rho;
    }
    Ok(1.0 + 2.0 * sum)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Orthogonalized {
    /// Posterior mean of `B*` (S x p).
    pub b_star_mean: DMatrix<f64>,
    /// Posterior mean of `W*` (n x r).
    pub w_star_mean: DMatrix<f64>,
    /// Posterior mean of the covariate surface `X B*^T` (n x S).
    pub fixed_surface: DMatrix<f64>,
    /// Posterior mean of the residual spatial surface `W* Lambda^T` (n x S).
    pub spatial_surface: DMatrix<f64>,
    /// Largest `|X B*^T + W* Lambda^T - X B^T - W Lambda^T|` over draws.
    pub max_identity_error: f64,
    /// Largest `|X^T W*|` over draws.
    pub max_orthogonality_error: f64,
}

/// Projects the spatial factors off the covariate space, per draw:
/// `B*^T = B^T + (X^T X)^{-1} X^T W Lambda^T`, `W* = (I - P) W`.
///
/// `x` holds the covariates of the sites the factors were fitted at.
pub fn orthogonalize(draws: &PosteriorDraws, x: &DMatrix<f64>) -> Result<Orthogonalized> {
    let first = draws.draws.first().ok_or_else(|| Error::invalid("no posterior draws"))?;
    if first.w.nrows() != x.nrows() {
        return Err(Error::dim("factor rows and covariate rows differ"));
    }
    let xtx = x.transpose() * x;
    let chol = xtx.clone().cholesky().ok_or_else(|| Error::invalid("covariate matrix is rank deficient"))?;
    let (n, s, p, r) = (x.nrows(), first.b.nrows(), x.ncols(), first.w.ncols());
    let mut out = Orthogonalized {
        b_star_mean: DMatrix::zeros(s, p),
        w_star_mean: DMatrix::zeros(n, r),
        fixed_surface: DMatrix::zeros(n, s),
        spatial_surface: DMatrix::zeros(n, s),
        max_identity_error: 0.0,
        max_orthogonality_error: 0.0,
    };
    let nd = draws.len() as f64;
    for d in &draws.draws {
        let lam = d.lambda();
        // (X^T X)^{-1} X^T W
        let coef = chol.solve(&(x.transpose() * &d.w));
        let b_star = &d.b + (&coef * lam.transpose()).transpose();
        let w_star = &d.w - x * &coef;
        let fixed = x * b_star.transpose();
        let spatial = &w_star * lam.transpose();
        let total = x * d.b.transpose() + &d.w * lam.transpose();
        out.max_identity_error = out.max_identity_error.max((&fixed + &spatial - total).amax());
        out.max_orthogonality_error = out.max_orthogonality_error.max((x.transpose() * &w_star).amax());
        out.b_star_mean += b_star / nd;
        out.w_star_mean += w_star / nd;
        out.fixed_surface += fixed / nd;
        out.spatial_surface += spatial / nd;
    }
    Ok(out)
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim("labelings have different lengths"));
    }
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&i, &j) in a.iter().zip(b) {
        table[i][j] += 1;
    }
    let c2 = |x: u64| (x * x.saturating_sub(1) / 2) as f64;
    let sum_ij: f64 = table.iter().flatten().map(|&v| c2(v)).sum();
    let sum_a: f64 = table.iter().map(|row| c2(row.iter().sum())).sum();
    let sum_b: f64 = (0..kb).map(|j| c2(table.iter().map(|row| row[j]).sum())).sum();
    let total = c2(n as u64);
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        // both partitions trivial (all-in-one or all singletons)
        return Ok(if sum_ij == expected { 1.0 } else { 0.0 });
    }
    Ok((sum_ij - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Hyperparams, ModelState};
    use crate::simulate::{self, SimConfig};

    #[test]
    fn pmse_cases() {
        let t = DMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 * 0.37);
        assert_eq!(pmse(&t, &t).unwrap(), 0.0);
        assert!((pmse(&t, &t.add_scalar(1.0)).unwrap() - 1.0).abs() < 1e-12);
        assert!(pmse(&t, &DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn tjur_cases() {
        let y = DMatrix::from_row_slice(4, 3, &[1., 0., 1., 0., 1., 1., 1., 0., 1., 0., 1., 1.]);
        let r = tjur_r(&y, &y).unwrap();
        assert_eq!(r.per_species[0], Some(1.0));
        assert_eq!(r.per_species[2], None);
        assert_eq!(r.n_excluded, 1);
        assert!((r.mean - 1.0).abs() < 1e-12);
        let flat = DMatrix::from_element(4, 3, 0.3);
        assert!(tjur_r(&y, &flat).unwrap().mean.abs() < 1e-12);
        assert!(tjur_r(&DMatrix::from_element(2, 2, 1.0), &DMatrix::from_element(2, 2, 0.5)).is_err());
    }

    #[test]
    fn frobenius_cases() {
        let a = DMatrix::from_fn(5, 5, |i, j| (i as f64 - j as f64).sin());
        assert_eq!(frobenius_gap(&a, &a).unwrap(), 0.0);
        let b = &a + DMatrix::identity(5, 5);
        assert!((frobenius_gap(&a, &b).unwrap() - 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ari_cases() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[3, 3, 2, 2]).unwrap(), 1.0);
        let v = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert!((v - (-0.5)).abs() < 1e-12);
        assert_eq!(adjusted_rand_index(&[0, 0, 0], &[0, 0, 0]).unwrap(), 1.0);
    }

    #[test]
    fn conditional_presence_limits() {
        let (g1, g0) = conditional_presence(0.4, -0.2, 1.0, 1.0, 0.0);
        assert!((g1 - norm_cdf(0.4)).abs() < 1e-12 && (g0 - norm_cdf(0.4)).abs() < 1e-12);
        let (g1, _) = conditional_presence(0.3, 0.3, 1.0, 1.0, 1.0);
        assert!((g1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn if_iid_and_ar1() {
        let mut rng = RngStream::new(1, 0);
        let iid: Vec<f64> = (0..100_000).map(|_| dists::std_normal(&mut rng)).collect();
        assert!((inefficiency_factor(&iid).unwrap() - 1.0).abs() < 0.1);
        let mut x = 0.0;
        let ar: Vec<f64> = (0..100_000)
            .map(|_| {
                x = 0.5 * x + dists::std_normal(&mut rng);
                x
            })
            .collect();
        assert!((inefficiency_factor(&ar).unwrap() - 3.0).abs() < 0.3);
        assert!(inefficiency_factor(&[1.0; 200]).is_err());
        assert!(inefficiency_factor(&[1.0; 20]).is_err());
    }

    fn fake_draws(data: &Dataset, hyper: &Hyperparams, k: usize) -> PosteriorDraws {
        let mut rng = RngStream::new(11, 0);
        let train = data.training();
        let mut draws = vec![];
        for _ in 0..k {
            let mut st = ModelState::initial(&train, hyper, &mut rng).unwrap();
            st.w = DMatrix::from_fn(train.n(), hyper.r, |_, _| dists::std_normal(&mut rng));
            st.labels = (0..data.s()).map(|l| l % 3).collect();
            draws.push(Draw::from_state(&st));
        }
        PosteriorDraws { draws, kind: data.kind, factor_model: hyper.factor_model, phi_acceptance: 0.0, log_joint: vec![] }
    }

    #[test]
    fn orthogonalization_identities() {
        let (data, _) = simulate::gen_continuous(&SimConfig { n: 30, s: 6, ..Default::default() }, &mut RngStream::new(2, 0)).unwrap();
        let hyper = Hyperparams::for_data(&data, 2, 5).unwrap();
        let draws = fake_draws(&data, &hyper, 5);
        let o = orthogonalize(&draws, &data.x).unwrap();
        assert!(o.max_identity_error < 1e-10);
        assert!(o.max_orthogonality_error < 1e-10);
        let mut zero = draws.clone();
        for d in zero.draws.iter_mut() {
            d.w.fill(0.0);
        }
        let o = orthogonalize(&zero, &data.x).unwrap();
        let bm = zero.mean_of(|d| d.b.clone()).unwrap();
        assert!((o.b_star_mean - bm).amax() < 1e-12);
        assert_eq!(o.w_star_mean.amax(), 0.0);
    }

    #[test]
    fn sampled_and_mean_modes_agree_for_continuous_on_average() {
        let (mut data, _) = simulate::gen_continuous(&SimConfig { n: 30, s: 5, ..Default::default() }, &mut RngStream::new(3, 0)).unwrap();
        data.assign_holdout(0.2, &mut RngStream::new(4, 0)).unwrap();
        let hyper = Hyperparams::for_data(&data, 2, 5).unwrap();
        let draws = fake_draws(&data, &hyper, 1);
        let mut many = draws.clone();
        many.draws = vec![draws.draws[0].clone(); 20_000];
        let mean = predict_heldout(&draws, &data, &PredictOptions { mode: PredictMode::Mean, ..Default::default() }).unwrap();
        let sampled = predict_heldout(&many, &data, &PredictOptions::default()).unwrap();
        assert!((mean.mean - sampled.mean).amax() < 0.06);
    }

    #[test]
    fn binary_mean_mode_matches_sampled_average() {
        let cfg = SimConfig { n: 30, s: 5, kind: ResponseKind::Binary, ..Default::default() };
        let (mut data, _) = simulate::generate(&cfg, &mut RngStream::new(5, 0)).unwrap();
        data.assign_holdout(0.2, &mut RngStream::new(6, 0)).unwrap();
        let hyper = Hyperparams::for_data(&data, 2, 5).unwrap();
        let draws = fake_draws(&data, &hyper, 1);
        let mut many = draws.clone();
        many.draws = vec![draws.draws[0].clone(); 20_000];
        let mean = predict_heldout(&draws, &data, &PredictOptions { mode: PredictMode::Mean, ..Default::default() }).unwrap();
        let sampled = predict_heldout(&many, &data, &PredictOptions::default()).unwrap();
        assert!((&mean.mean - &sampled.mean).amax() < 0.01);
        assert!(mean.mean.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn empty_holdout_gives_empty_prediction() {
        let (data, _) = simulate::gen_continuous(&SimConfig { n: 20, s: 4, ..Default::default() }, &mut RngStream::new(7, 0)).unwrap();
        let hyper = Hyperparams::for_data(&data, 2, 5).unwrap();
        let draws = fake_draws(&data, &hyper, 2);
        let r = predict_heldout(&draws, &data, &PredictOptions::default()).unwrap();
        assert_eq!(r.mean.nrows(), 0);
    }

    #[test]
    fn prediction_is_thread_count_invariant() {
        let (mut data, _) = simulate::gen_continuous(&SimConfig { n: 30, s: 5, ..Default::default() }, &mut RngStream::new(8, 0)).unwrap();
        data.assign_holdout(0.2, &mut RngStream::new(9, 0)).unwrap();
        let hyper = Hyperparams::for_data(&data, 2, 5).unwrap();
        let draws = fake_draws(&data, &hyper, 40);
        let a = predict_heldout(&draws, &data, &PredictOptions::default()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| predict_heldout(&draws, &data, &PredictOptions::default()).unwrap());
        assert_eq!(a, b);
    }
}
