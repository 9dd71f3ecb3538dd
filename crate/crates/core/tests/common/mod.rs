//! Independent oracles for the sampler's full conditionals and the joint
//! (Geweke) test. Shared by the integration tests and the acceptance target.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use sjsdm::bvn::norm_cdf;
use sjsdm::dists::{self, RngStream};
use sjsdm::gibbs::Sampler;
use sjsdm::kernel::{self, SiteSet};
use sjsdm::model::{Dataset, FactorModel, Hyperparams, ModelState, ResponseKind};

pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, pass: bool, detail: String) -> Self {
        Check { name, pass, detail }
    }
}

pub fn normal(rng: &mut RngStream) -> f64 {
    dists::std_normal(rng)
}

fn mat(r: usize, c: usize, rng: &mut RngStream, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| scale * normal(rng))
}

fn line_sites(n: usize, step: f64) -> SiteSet {
    SiteSet::from_coords((0..n).map(|i| [i as f64 * step, (i * i % 3) as f64 * 0.25]).collect()).unwrap()
}

pub fn dataset(n: usize, s: usize, p: usize, kind: ResponseKind, rng: &mut RngStream) -> Dataset {
    let x = mat(n, p, rng, 1.0);
    let y = match kind {
        ResponseKind::Continuous => mat(n, s, rng, 1.0),
        ResponseKind::Binary => DMatrix::from_fn(n, s, |_, _| if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 }),
    };
    Dataset::new(
        line_sites(n, 0.4),
        x,
        y,
        kind,
        (0..s).map(|l| format!("sp{l}")).collect(),
        (0..p).map(|j| format!("x{j}")).collect(),
    )
    .unwrap()
}

pub fn state(data: &Dataset, r: usize, na: usize, labels: Vec<usize>, rng: &mut RngStream) -> ModelState {
    let mut z = mat(na, r, rng, 0.8);
    for h in 0..r {
        z[(0, h)] = z[(0, h)].abs() + 0.1;
    }
    ModelState {
        b: mat(data.s(), data.p(), rng, 0.5),
        z,
        labels,
        p: vec![1.0 / na as f64; na],
        w: mat(data.n(), r, rng, 0.7),
        sigma2: 0.6,
        phi: 1.3,
        dz: DMatrix::identity(r, r) * 0.9,
        eta: DVector::from_element(r, 1.0),
        u: None,
    }
}

fn hyper(r: usize, na: usize) -> Hyperparams {
    Hyperparams { r, n_atoms: na, phi_min: 0.2, phi_max: 8.0, ..Default::default() }
}

/// Mean and covariance of `a | b = b0` from a joint normal with zero mean.
fn condition(saa: &DMatrix<f64>, sab: &DMatrix<f64>, sbb: &DMatrix<f64>, b0: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let inv = sbb.clone().try_inverse().unwrap();
    (sab * &inv * b0, saa - sab * &inv * sab.transpose())
}

fn moment_gap(samples: &[DVector<f64>], mean: &DVector<f64>, cov: &DMatrix<f64>) -> (f64, f64) {
    let n = samples.len() as f64;
    let d = mean.len();
    let mut m = DVector::zeros(d);
    for s in samples {
        m += s;
    }
    m /= n;
    let mut c = DMatrix::zeros(d, d);
    for s in samples {
        let e = s - &m;
        c += &e * e.transpose();
    }
    c /= n - 1.0;
    ((m - mean).amax(), (c - cov).amax())
}

/// One-sample KS statistic against a CDF.
pub fn ks_cdf(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample KS statistic.
pub fn ks_two(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Tabulated CDF from an unnormalized density on an increasing grid (trapezoid rule).
fn grid_cdf(grid: &[f64], dens: &[f64]) -> impl Fn(f64) -> f64 {
    let mut cum = vec![0.0; grid.len()];
    for i in 1..grid.len() {
        cum[i] = cum[i - 1] + 0.5 * (dens[i] + dens[i - 1]) * (grid[i] - grid[i - 1]);
    }
    let total = *cum.last().unwrap();
    let grid = grid.to_vec();
    move |x: f64| {
        if x <= grid[0] {
            return 0.0;
        }
        if x >= *grid.last().unwrap() {
            return 1.0;
        }
        let k = grid.partition_point(|&g| g < x);
        let t = (x - grid[k - 1]) / (grid[k] - grid[k - 1]);
        (cum[k - 1] + t * (cum[k] - cum[k - 1])) / total
    }
}

const DRAWS: usize = 100_000;

/// Coefficients: joint normal of `(b_l, y_l)` conditioned on `y_l`.
pub fn check_b() -> Check {
    let mut rng = RngStream::new(101, 0);
    let data = dataset(4, 2, 2, ResponseKind::Continuous, &mut rng);
    let hp = hyper(1, 3);
    let mut st = state(&data, 1, 3, vec![0, 2], &mut rng);
    let sampler = Sampler::new(&data, &hp).unwrap();
    let offset = &st.w * st.lambda().transpose();
    let x = &data.x;
    let c = hp.c;
    let syy = x * x.transpose() * c + DMatrix::identity(4, 4) * st.sigma2;
    let sby = x.transpose() * c;
    let sbb = DMatrix::identity(2, 2) * c;
    let mut worst: f64 = 0.0;
    let mut samples: Vec<Vec<DVector<f64>>> = vec![vec![]; 2];
    for _ in 0..DRAWS {
        sampler.step_b(&mut st, &mut rng).unwrap();
        for (l, s) in samples.iter_mut().enumerate() {
            s.push(st.b.row(l).transpose());
        }
    }
    for (l, s) in samples.iter().enumerate() {
        let y0 = data.y.column(l) - offset.column(l);
        let (m, v) = condition(&sbb, &sby, &syy, &y0);
        let (dm, dv) = moment_gap(s, &m, &v);
        worst = worst.max(dm).max(dv);
    }
    Check::new("B conditional (n=4, p=2, S=2)", worst < 0.02, format!("max moment gap {worst:.4} (tol 0.02)"))
}

/// Occupied atom: joint normal of `(z_j, e_l for l in S_j)`.
pub fn check_z() -> Check {
    let mut rng = RngStream::new(102, 0);
    let data = dataset(5, 3, 1, ResponseKind::Continuous, &mut rng);
    let hp = hyper(2, 3);
    let mut st = state(&data, 2, 3, vec![0, 1, 1], &mut rng);
    st.dz = DMatrix::from_row_slice(2, 2, &[1.2, 0.3, 0.3, 0.8]);
    let sampler = Sampler::new(&data, &hp).unwrap();
    let e = &data.y - &data.x * st.b.transpose();
    let mut a = DMatrix::zeros(10, 2);
    a.view_mut((0, 0), (5, 2)).copy_from(&st.w);
    a.view_mut((5, 0), (5, 2)).copy_from(&st.w);
    let mut e0 = DVector::zeros(10);
    e0.rows_mut(0, 5).copy_from(&e.column(1));
    e0.rows_mut(5, 5).copy_from(&e.column(2));
    let d = st.dz.clone();
    let syy = &a * &d * a.transpose() + DMatrix::identity(10, 10) * st.sigma2;
    let (m, v) = condition(&d, &(&d * a.transpose()), &syy, &e0);
    let mut s = vec![];
    for _ in 0..DRAWS {
        sampler.step_z(&mut st, &mut rng).unwrap();
        s.push(st.z.row(1).transpose());
    }
    let (dm, dv) = moment_gap(&s, &m, &v);
    Check::new(
        "Z occupied-atom conditional (n=5, |S_j|=2, r=2)",
        dm < 0.02 && dv < 0.02,
        format!("mean gap {dm:.4}, cov gap {dv:.4} (tol 0.02)"),
    )
}

/// Factors: joint normal of `(vec W, vec E)` with `E = W Lambda^T + noise`.
pub fn check_w() -> Check {
    let mut rng = RngStream::new(103, 0);
    let (n, s, r) = (5, 3, 2);
    let data = dataset(n, s, 1, ResponseKind::Continuous, &mut rng);
    let hp = hyper(r, 3);
    let mut st = state(&data, r, 3, vec![0, 1, 2], &mut rng);
    let mut sampler = Sampler::new(&data, &hp).unwrap();
    let lam = st.lambda();
    let cmat = kernel::build_exp_cov(&data.sites, st.phi).unwrap().matrix;
    // vec(W) stacks columns: cov = I_r (x) C
    let mut sww = DMatrix::zeros(n * r, n * r);
    for h in 0..r {
        sww.view_mut((h * n, h * n), (n, n)).copy_from(&cmat);
    }
    // vec(E) stacks species: E_l = sum_h lam[l,h] W_h
    let mut a = DMatrix::zeros(n * s, n * r);
    for l in 0..s {
        for h in 0..r {
            let blk = DMatrix::identity(n, n) * lam[(l, h)];
            a.view_mut((l * n, h * n), (n, n)).copy_from(&blk);
        }
    }
    let see = &a * &sww * a.transpose() + DMatrix::identity(n * s, n * s) * st.sigma2;
    let e = &data.y - &data.x * st.b.transpose();
    let e0 = DVector::from_column_slice(e.as_slice());
    let (m, v) = condition(&sww, &(&sww * a.transpose()), &see, &e0);
    let mut samples = vec![];
    for _ in 0..DRAWS {
        sampler.step_w(&mut st, &mut rng).unwrap();
        samples.push(DVector::from_column_slice(st.w.as_slice()));
    }
    let (dm, dv) = moment_gap(&samples, &m, &v);
    Check::new(
        "W conditional vs dense joint-Gaussian oracle (n=5, r=2)",
        dm < 0.02 && dv < 0.02,
        format!("mean gap {dm:.4}, cov gap {dv:.4} (tol 0.02)"),
    )
}

/// Decay: MH chain against grid quadrature of `prod_h N(W_h; 0, C_phi)` on the prior interval.
pub fn check_phi() -> Check {
    let mut rng = RngStream::new(104, 0);
    let data = dataset(4, 2, 1, ResponseKind::Continuous, &mut rng);
    let hp = hyper(1, 3);
    let mut st = state(&data, 1, 3, vec![0, 1], &mut rng);
    st.w = DMatrix::from_column_slice(4, 1, &[0.8, 0.5, -0.2, -0.6]);
    let mut sampler = Sampler::new(&data, &hp).unwrap();
    sampler.phi_step = 0.8;
    let mut trace = Vec::with_capacity(DRAWS);
    for _ in 0..1000 {
        sampler.step_phi(&mut st, &mut rng).unwrap();
    }
    for _ in 0..DRAWS {
        sampler.step_phi(&mut st, &mut rng).unwrap();
        trace.push(st.phi);
    }
    let w = st.w.column(0).into_owned();
    let k = 20_000;
    let grid: Vec<f64> = (0..=k).map(|i| hp.phi_min + (hp.phi_max - hp.phi_min) * i as f64 / k as f64).collect();
    let logd: Vec<f64> = grid
        .iter()
        .map(|&phi| {
            let c = DMatrix::from_fn(4, 4, |i, j| (-phi * data.sites.distance(i, j)).exp());
            let det = c.determinant();
            let q = (w.transpose() * c.try_inverse().unwrap() * &w)[(0, 0)];
            -0.5 * det.ln() - 0.5 * q
        })
        .collect();
    let mx = logd.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dens: Vec<f64> = logd.iter().map(|l| (l - mx).exp()).collect();
    let ks = ks_cdf(&mut trace, grid_cdf(&grid, &dens));
    Check::new("phi Metropolis-Hastings vs grid quadrature (r=1, n=4)", ks < 0.05, format!("KS {ks:.4} (tol 0.05)"))
}

/// Labels: selection frequencies against directly normalized likelihood weights.
pub fn check_k() -> Check {
    let mut rng = RngStream::new(105, 0);
    let data = dataset(3, 2, 1, ResponseKind::Continuous, &mut rng);
    let hp = hyper(1, 3);
    let mut st = state(&data, 1, 3, vec![0, 0], &mut rng);
    st.z = DMatrix::from_column_slice(3, 1, &[0.4, -0.6, 1.1]);
    st.p = vec![0.5, 0.3, 0.2];
    let sampler = Sampler::new(&data, &hp).unwrap();
    let resid = data.y.column(1) - &data.x * st.b.row(1).transpose();
    let w: Vec<f64> = (0..3)
        .map(|j| {
            let e = &resid - st.w.column(0) * st.z[(j, 0)];
            st.p[j] * (-e.norm_squared() / (2.0 * st.sigma2)).exp()
        })
        .collect();
    let tot: f64 = w.iter().sum();
    let mut counts = [0usize; 3];
    for _ in 0..DRAWS {
        sampler.step_k(&mut st, &mut rng).unwrap();
        counts[st.labels[1]] += 1;
        assert_eq!(st.labels[0], 0);
    }
    let gap = (0..3).map(|j| (counts[j] as f64 / DRAWS as f64 - w[j] / tot).abs()).fold(0.0, f64::max);
    Check::new("k label frequencies vs enumeration (n=3, S=2, N=3)", gap < 0.01, format!("max gap {gap:.4} (tol 0.01)"))
}

/// Stick weights: posterior mean of the first weight is the beta mean.
pub fn check_p() -> Check {
    let mut rng = RngStream::new(106, 0);
    let data = dataset(3, 6, 1, ResponseKind::Continuous, &mut rng);
    let hp = Hyperparams { alpha: 2.0, ..hyper(1, 4) };
    let mut st = state(&data, 1, 4, vec![0, 0, 2, 2, 2, 3], &mut rng);
    let sampler = Sampler::new(&data, &hp).unwrap();
    let mut acc = [0.0; 4];
    for _ in 0..DRAWS {
        sampler.step_p(&mut st, &mut rng).unwrap();
        for (a, p) in acc.iter_mut().zip(st.p.iter()) {
            *a += p / DRAWS as f64;
        }
    }
    // E[xi_0] with shapes (alpha/N + 2, (N-1)/N alpha + 4)
    let a0 = 2.0 / 4.0 + 2.0;
    let b0 = 3.0 / 4.0 * 2.0 + 4.0;
    let want = a0 / (a0 + b0);
    let rel = (acc[0] - want).abs() / want;
    Check::new("p stick-breaking beta mean", rel < 0.02, format!("relative gap {rel:.4} (tol 0.02)"))
}

/// Nugget: zero residuals give `IG((nS + a)/2, b/2)`.
pub fn check_sigma2() -> Check {
    let mut rng = RngStream::new(107, 0);
    let mut data = dataset(4, 3, 1, ResponseKind::Continuous, &mut rng);
    let hp = hyper(1, 3);
    let mut st = state(&data, 1, 3, vec![0, 1, 2], &mut rng);
    data.y = &data.x * st.b.transpose() + &st.w * st.lambda().transpose();
    let sampler = Sampler::new(&data, &hp).unwrap();
    let mut mean = 0.0;
    for _ in 0..DRAWS {
        sampler.step_sigma2(&mut st, &mut rng).unwrap();
        mean += st.sigma2 / DRAWS as f64;
    }
    let shape = (12.0 + 2.0) / 2.0;
    let want = 0.05 / (shape - 1.0);
    let rel = (mean - want).abs() / want;
    Check::new("sigma2 conditional with zero residuals", rel < 0.01, format!("relative gap {rel:.4} (tol 0.01)"))
}

/// `D_Z` with `Z = 0`, `eta = 1` is `IW(2 + r + N - 1, 4 I)`.
pub fn check_dz_moment() -> Check {
    let mut rng = RngStream::new(108, 0);
    let (r, na) = (2, 10);
    let hp = hyper(r, na);
    let z = DMatrix::zeros(na, r);
    let eta = DVector::from_element(r, 1.0);
    let mut acc = DMatrix::zeros(r, r);
    for _ in 0..DRAWS {
        let (d, _) = sjsdm::gibbs::sample_dz_eta(&z, &eta, &hp, &mut rng).unwrap();
        acc += d / DRAWS as f64;
    }
    let df = 2.0 + r as f64 + na as f64 - 1.0;
    let want = DMatrix::identity(r, r) * 4.0 / (df - r as f64 - 1.0);
    let rel = (0..r).map(|h| ((acc[(h, h)] - want[(h, h)]) / want[(h, h)]).abs()).fold(0.0, f64::max);
    let off = acc[(0, 1)].abs();
    Check::new(
        "D_Z inverse-Wishart mean (Z = 0, eta = 1)",
        rel < 0.02 && off < 0.02 * want[(0, 0)],
        format!("diag relative gap {rel:.4}, off-diagonal {off:.4} (tol 2%)"),
    )
}

/// `(D_Z, eta)` chain with `r = 1` against 2-d quadrature of the joint density.
pub fn check_dz_eta_joint() -> Check {
    let mut rng = RngStream::new(109, 0);
    let hp = hyper(1, 5);
    let z = DMatrix::from_column_slice(5, 1, &[0.7, -1.1, 0.3, 1.6, -0.4]);
    let mut eta = DVector::from_element(1, 1.0);
    let mut trace = vec![];
    for i in 0..DRAWS + 1000 {
        let (d, e) = sjsdm::gibbs::sample_dz_eta(&z, &eta, &hp, &mut rng).unwrap();
        eta = e;
        if i >= 1000 {
            trace.push(d[(0, 0)]);
        }
    }
    // log joint in (log D, log eta): IG(eta; a, b) IW_1(D; nu, s/eta) prod N(z; 0, D), plus Jacobians
    let nu = hp.iw_prior_df();
    let (a, b, s) = (hp.eta_shape, hp.eta_rate, hp.iw_scale);
    let ssz: f64 = z.iter().map(|v| v * v).sum();
    let nz = z.len() as f64;
    let logd = |ld: f64, le: f64| {
        let (d, e) = (ld.exp(), le.exp());
        let lig_eta = -(a + 1.0) * le - b / e;
        // IW with df nu, scale psi in one dimension is IG(nu/2, psi/2)
        let psi = s / e;
        let liw = 0.5 * nu * (psi / 2.0).ln() - (nu / 2.0 + 1.0) * ld - psi / (2.0 * d);
        let lz = -0.5 * nz * ld - ssz / (2.0 * d);
        lig_eta + liw + lz + ld + le
    };
    let (nd, ne) = (1500, 1500);
    let lgrid: Vec<f64> = (0..=nd).map(|i| -6.0 + 12.0 * i as f64 / nd as f64).collect();
    let egrid: Vec<f64> = (0..=ne).map(|i| -25.0 + 40.0 * i as f64 / ne as f64).collect();
    let vals: Vec<Vec<f64>> = lgrid.iter().map(|&ld| egrid.iter().map(|&le| logd(ld, le)).collect()).collect();
    let mx = vals.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    // marginal of log D by trapezoid over log eta
    let de = egrid[1] - egrid[0];
    let marg: Vec<f64> = vals
        .iter()
        .map(|row| {
            let e: Vec<f64> = row.iter().map(|v| (v - mx).exp()).collect();
            de * (e.iter().sum::<f64>() - 0.5 * (e[0] + e[e.len() - 1]))
        })
        .collect();
    let cdf = grid_cdf(&lgrid, &marg);
    let mut logs: Vec<f64> = trace.iter().map(|d| d.ln()).collect();
    let ks = ks_cdf(&mut logs, cdf);
    Check::new("(D_Z, eta) chain vs 2-d quadrature (r=1)", ks < 0.05, format!("KS {ks:.4} (tol 0.05)"))
}

/// Probit latent: half-normal mean and far-tail draws.
pub fn check_u() -> Check {
    let mut rng = RngStream::new(110, 0);
    let sites = SiteSet::from_coords(vec![[0.0, 0.0], [1.0, 0.0]]).unwrap();
    let data = Dataset::new(
        sites,
        DMatrix::zeros(2, 1),
        DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
        ResponseKind::Binary,
        vec!["a".into()],
        vec!["x".into()],
    )
    .unwrap();
    let hp = Hyperparams { sigma2_fixed: Some(1.0), ..hyper(1, 2) };
    let mut st = state(&data, 1, 2, vec![0], &mut rng);
    st.sigma2 = 1.0;
    st.b.fill(0.0);
    st.w = DMatrix::from_column_slice(2, 1, &[0.0, 6.0 / st.z[(0, 0)]]);
    let sampler = Sampler::new(&data, &hp).unwrap();
    let (mut m0, mut m1) = (0.0, 0.0);
    let mut ok_tail = true;
    for _ in 0..DRAWS {
        sampler.step_u(&mut st, &mut rng).unwrap();
        let u = st.u.as_ref().unwrap();
        m0 += u[(0, 0)] / DRAWS as f64;
        m1 += u[(1, 0)] / DRAWS as f64;
        ok_tail &= u[(1, 0)] <= 0.0 && u[(1, 0)].is_finite();
    }
    let want0 = (2.0 / std::f64::consts::PI).sqrt();
    // E[U | U <= 0], U ~ N(6, 1): 6 - phi(6)/Phi(-6)
    let want1 = 6.0 - sjsdm::bvn::norm_pdf(6.0) / norm_cdf(-6.0);
    let g0 = (m0 - want0).abs() / want0;
    let g1 = (m1 - want1).abs() / want1.abs();
    Check::new(
        "U probit conditional (half-normal mean, mean +6 tail)",
        g0 < 0.01 && g1 < 0.01 && ok_tail,
        format!("relative gaps {g0:.4}, {g1:.4}; tail draws valid {ok_tail}"),
    )
}

pub fn conditional_checks() -> Vec<Check> {
    vec![
        check_b(),
        check_z(),
        check_w(),
        check_phi(),
        check_k(),
        check_p(),
        check_sigma2(),
        check_dz_moment(),
        check_dz_eta_joint(),
        check_u(),
    ]
}

/// Hyperparameters of the Geweke instance: tight enough priors for every
/// quantity to have finite moments.
pub fn geweke_hyper() -> Hyperparams {
    Hyperparams {
        r: 1,
        n_atoms: 2,
        alpha: 1.0,
        a: 8.0,
        b: 8.0,
        c: 1.0,
        phi_min: 0.5,
        phi_max: 3.0,
        eta_shape: 4.0,
        eta_rate: 3.0,
        iw_df_offset: 6.0,
        iw_scale: 4.0,
        factor_model: FactorModel::Spatial,
        ..Default::default()
    }
}

pub fn geweke_sites() -> SiteSet {
    SiteSet::from_coords(vec![[0.0, 0.0], [0.6, 0.2], [0.3, 0.9]]).unwrap()
}

/// Draw every unknown from the prior, conditioned on `labels[0] = 0`.
pub fn prior_state(hp: &Hyperparams, x: &DMatrix<f64>, sites: &SiteSet, rng: &mut RngStream) -> ModelState {
    let (n, s, p, na) = (x.nrows(), 2, x.ncols(), hp.n_atoms);
    let eta = dists::sample_inv_gamma(hp.eta_shape, hp.eta_rate, rng);
    // one-dimensional inverse Wishart = IG(nu/2, psi/2)
    let nu = hp.iw_prior_df();
    let d = dists::sample_inv_gamma(nu / 2.0, hp.iw_scale / eta / 2.0, rng);
    let sd = d.sqrt();
    let mut z = DMatrix::zeros(na, 1);
    z[(0, 0)] = (sd * normal(rng)).abs();
    for j in 1..na {
        z[(j, 0)] = sd * normal(rng);
    }
    // p | labels[0] = 0 is the stick update with counts (1, 0, ...)
    let mut counts = vec![0; na];
    counts[0] = 1;
    let pw = dists::sample_gd_stick(hp.alpha, &counts, hp.stick_variant, rng);
    let mut labels = vec![0; s];
    for l in labels.iter_mut().skip(1) {
        *l = if rng.random::<f64>() < pw[0] { 0 } else { 1 };
    }
    let phi = hp.phi_min + (hp.phi_max - hp.phi_min) * rng.random::<f64>();
    let cov = kernel::build_exp_cov(sites, phi).unwrap();
    let w = &cov.chol * dists::std_normal_vec(n, rng);
    ModelState {
        b: DMatrix::from_fn(s, p, |_, _| hp.c.sqrt() * normal(rng)),
        z,
        labels,
        p: pw,
        w: DMatrix::from_column_slice(n, 1, w.as_slice()),
        sigma2: dists::sample_inv_gamma(hp.a / 2.0, hp.b / 2.0, rng),
        phi,
        dz: DMatrix::from_element(1, 1, d),
        eta: DVector::from_element(1, eta),
        u: None,
    }
}

pub fn draw_y(st: &ModelState, x: &DMatrix<f64>, rng: &mut RngStream) -> DMatrix<f64> {
    let mean = x * st.b.transpose() + &st.w * st.lambda().transpose();
    let sd = st.sigma2.sqrt();
    mean.map(|m| m + sd * normal(rng))
}

pub struct GewekeResult {
    pub ks_sigma2: f64,
    pub ks_phi: f64,
    pub ks_b11: f64,
}

/// Marginal-conditional vs successive-conditional simulation on the
/// n=3, S=2, r=1, N=2, p=1 instance.
pub fn geweke(samples: usize, sweeps_between: usize, seed: u64) -> GewekeResult {
    let hp = geweke_hyper();
    let sites = geweke_sites();
    let x = DMatrix::from_column_slice(3, 1, &[1.0, -0.4, 0.7]);
    let mk = |y: DMatrix<f64>| {
        Dataset::new(sites.clone(), x.clone(), y, ResponseKind::Continuous, vec!["a".into(), "b".into()], vec!["x".into()])
            .unwrap()
    };
    let mut rng = RngStream::new(seed, 0);
    let (mut m_s2, mut m_phi, mut m_b) = (vec![], vec![], vec![]);
    for _ in 0..samples {
        let st = prior_state(&hp, &x, &sites, &mut rng);
        m_s2.push(st.sigma2);
        m_phi.push(st.phi);
        m_b.push(st.b[(0, 0)]);
    }
    let mut rng = RngStream::new(seed, 1);
    let mut st = prior_state(&hp, &x, &sites, &mut rng);
    let mut y = draw_y(&st, &x, &mut rng);
    let (mut s_s2, mut s_phi, mut s_b) = (vec![], vec![], vec![]);
    for _ in 0..samples {
        let data = mk(y.clone());
        let mut sampler = Sampler::new(&data, &hp).unwrap();
        sampler.phi_step = 1.0;
        for _ in 0..sweeps_between {
            sampler.sweep(&mut st, &mut rng).unwrap();
        }
        y = draw_y(&st, &x, &mut rng);
        s_s2.push(st.sigma2);
        s_phi.push(st.phi);
        s_b.push(st.b[(0, 0)]);
    }
    GewekeResult {
        ks_sigma2: ks_two(&mut m_s2, &mut s_s2),
        ks_phi: ks_two(&mut m_phi, &mut s_phi),
        ks_b11: ks_two(&mut m_b, &mut s_b),
    }
}
