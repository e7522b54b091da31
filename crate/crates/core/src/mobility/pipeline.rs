//! Empirical mobility fitting pipeline: place random markers in a sub-cube
//! of a periodic box, force one marker at a time, solve the unconstrained
//! Stokes problem, interpolate at all markers, and least-squares fit the
//! rational mobility forms with the exact asymptotics pinned.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::fits::{FitCoefficients, STEADY_3D_BREAK};
use super::leastsq::{multi_start, ResidualFn};
use crate::grid::{CellField, FaceField, GridSpec};
use crate::kernels::{IbCoupling, KernelKind, MarkerSet};
use crate::multigrid::MgHierarchy;
use crate::stokes::{new_counter, solve_stokes, StokesParams, StokesSolveOpts};

const PI: f64 = std::f64::consts::PI;

/// One measured pair-mobility sample (units: η = 1, h = 1).
#[derive(Clone, Copy, Debug)]
pub struct SampleRecord {
    /// ∞ encodes steady Stokes.
    pub beta: f64,
    pub r_over_h: f64,
    pub mu_par: f64,
    pub mu_perp: f64,
}

#[derive(Clone, Debug)]
pub struct FitPipelineConfig {
    pub kernel: KernelKind,
    pub dim: usize,
    /// Cells per axis of the periodic fitting grid.
    pub grid_n: usize,
    /// Number of markers (each is forced once and sampled as a target).
    pub n_markers: usize,
    pub seed: u64,
    /// Finite-β table; the standard grids are used when empty.
    pub betas: Vec<f64>,
    pub solver_tol: f64,
}

impl FitPipelineConfig {
    pub fn new(kernel: KernelKind, dim: usize) -> Self {
        FitPipelineConfig {
            kernel,
            dim,
            grid_n: if dim == 3 { 64 } else { 256 },
            n_markers: if dim == 3 { 40 } else { 56 },
            seed: 2016,
            betas: Vec::new(),
            solver_tol: 1e-9,
        }
    }

    pub fn beta_table(&self) -> Vec<f64> {
        if !self.betas.is_empty() {
            return self.betas.clone();
        }
        if self.dim == 3 {
            vec![0.0, 0.1, 0.25, 0.5, 1.0, 10.0, 100.0, 1000.0]
        } else {
            vec![0.0, 0.1, 0.25, 0.5, 1.0, 5.0, 10.0]
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitReport {
    /// Median relative deviation of the steady-Stokes data from the fit over
    /// r/h ∈ [2, 20].
    pub steady_median_rel_dev: f64,
    pub a_over_h: f64,
    pub cv: f64,
}

pub struct FitOutput {
    pub coefficients: FitCoefficients,
    pub samples: Vec<SampleRecord>,
    pub report: FitReport,
}

struct Dataset {
    self_mobility: f64,
    samples: Vec<(f64, f64, f64)>, // (r, mu_par, mu_perp)
}

/// Random marker cloud in a sub-cube of side l/8 centered in the box.
fn marker_cloud(g: &GridSpec, n: usize, rng: &mut ChaCha8Rng) -> MarkerSet {
    let l = g.len(0);
    let side = l / 8.0;
    let lo = 0.5 * l - 0.5 * side;
    let positions = (0..n)
        .map(|_| {
            core::array::from_fn(|d| {
                if d < g.dim {
                    lo + rng.gen::<f64>() * side
                } else {
                    0.0
                }
            })
        })
        .collect();
    MarkerSet::new(g.dim, positions)
}

/// Force each marker once (random direction), solve, interpolate at all
/// markers, and collect (r, μ∥, μ⊥) pairs plus the mean self-mobility.
fn measure(
    g: &GridSpec,
    mg: &MgHierarchy,
    params: &StokesParams,
    markers: &MarkerSet,
    kernel: KernelKind,
    tol: f64,
    rng: &mut ChaCha8Rng,
) -> Dataset {
    use rayon::prelude::*;
    let n = markers.len();
    let cpl = IbCoupling::build(g, markers, kernel);
    let periodic_steady = params.is_steady();
    let dirs: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            let mut d = [0.0; 3];
            loop {
                let mut n2 = 0.0;
                for c in 0..g.dim {
                    d[c] = rng.gen::<f64>() * 2.0 - 1.0;
                    n2 += d[c] * d[c];
                }
                if n2 > 0.05 && n2 <= 1.0 {
                    for c in 0..g.dim {
                        d[c] /= n2.sqrt();
                    }
                    return d;
                }
            }
        })
        .collect();
    let results: Vec<(f64, Vec<[f64; 3]>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut lam = vec![[0.0; 3]; n];
            lam[i] = dirs[i];
            let mut rhs_m = FaceField::zeros(g);
            if periodic_steady {
                cpl.spread_mean_subtracted(g, &lam, &mut rhs_m);
            } else {
                cpl.spread(g, &lam, &mut rhs_m);
            }
            let rhs_c = CellField::zeros(g);
            let opts = StokesSolveOpts {
                tol,
                max_iter: 300,
                ..Default::default()
            };
            let (state, rep) =
                solve_stokes(g, params, mg, &rhs_m, &rhs_c, &opts, new_counter(), None);
            assert!(rep.converged, "fit solve stalled at {}", rep.final_residual);
            let mut vf = state.v;
            vf.fill_ghosts(g, true);
            let mut vals = vec![[0.0; 3]; n];
            cpl.interpolate(&vf, &mut vals);
            let selfm: f64 = (0..g.dim).map(|c| vals[i][c] * dirs[i][c]).sum();
            (selfm, vals)
        })
        .collect();
    let mut self_sum = 0.0;
    let mut samples = Vec::new();
    for (i, (selfm, vals)) in results.iter().enumerate() {
        self_sum += selfm;
        let d = dirs[i];
        for j in 0..n {
            if j == i {
                continue;
            }
            let mut rv = [0.0; 3];
            let mut r2 = 0.0;
            for c in 0..g.dim {
                rv[c] = markers.positions[j][c] - markers.positions[i][c];
                r2 += rv[c] * rv[c];
            }
            let r = r2.sqrt();
            let rh: Vec<f64> = (0..g.dim).map(|c| rv[c] / r).collect();
            let dr: f64 = (0..g.dim).map(|c| d[c] * rh[c]).sum();
            let v = vals[j];
            let vr: f64 = (0..g.dim).map(|c| v[c] * rh[c]).sum();
            if dr.abs() > 0.2 {
                samples.push((r, vr / dr, f64::NAN));
            }
            // perpendicular projector
            let mut e = [0.0; 3];
            let mut en = 0.0;
            for c in 0..g.dim {
                e[c] = d[c] - dr * rh[c];
                en += e[c] * e[c];
            }
            let en = en.sqrt();
            if en > 0.2 {
                let ve: f64 = (0..g.dim).map(|c| v[c] * e[c] / en).sum();
                let last = samples.last_mut();
                if let Some(s) = last {
                    if s.0 == r && s.2.is_nan() {
                        s.2 = ve / en;
                        continue;
                    }
                }
                samples.push((r, f64::NAN, ve / en));
            }
        }
    }
    Dataset {
        self_mobility: self_sum / n as f64,
        samples,
    }
}

struct RationalFit<'a> {
    xs: &'a [f64],
    ys: &'a [f64],
    weights: &'a [f64],
    model: Box<dyn Fn(&[f64], f64) -> f64 + 'a>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl<'a> ResidualFn for RationalFit<'a> {
    fn n_residuals(&self) -> usize {
        self.xs.len()
    }
    fn n_params(&self) -> usize {
        self.lo.len()
    }
    fn clamp(&self, theta: &mut [f64]) {
        for (i, t) in theta.iter_mut().enumerate() {
            *t = t.clamp(self.lo[i], self.hi[i]);
        }
    }
    fn eval(&self, theta: &[f64], out: &mut [f64]) {
        for i in 0..self.xs.len() {
            let m = (self.model)(theta, self.xs[i]);
            out[i] = (m - self.ys[i]) * self.weights[i];
            if !out[i].is_finite() {
                out[i] = 1e6;
            }
        }
    }
}

fn fit_curve(
    xs: &[f64],
    ys: &[f64],
    relative: bool,
    model: impl Fn(&[f64], f64) -> f64,
    lo: Vec<f64>,
    hi: Vec<f64>,
    starts: &[Vec<f64>],
    seed: u64,
) -> Vec<f64> {
    let weights: Vec<f64> = if relative {
        ys.iter().map(|y| 1.0 / y.abs().max(1e-12)).collect()
    } else {
        vec![1.0; ys.len()]
    };
    let f = RationalFit {
        xs,
        ys,
        weights: &weights,
        model: Box::new(model),
        lo,
        hi,
    };
    multi_start(&f, starts, 6, seed, 250).0
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

/// Run the full fitting pipeline: steady Stokes plus the finite-β table,
/// producing coefficients, the raw samples, and a fit-quality report.
pub fn fit_mobility_data(cfg: &FitPipelineConfig) -> FitOutput {
    let n = cfg.grid_n;
    let g = GridSpec::square_periodic(cfg.dim, n, 1.0);
    let mg = MgHierarchy::build(&g);
    let l = g.len(0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let markers = marker_cloud(&g, cfg.n_markers, &mut rng);
    let mut all_samples = Vec::new();

    // steady Stokes dataset
    let steady = measure(
        &g,
        &mg,
        &StokesParams::steady(1.0),
        &markers,
        cfg.kernel,
        cfg.solver_tol,
        &mut rng,
    );
    for &(r, mp, mq) in &steady.samples {
        all_samples.push(SampleRecord {
            beta: f64::INFINITY,
            r_over_h: r,
            mu_par: mp,
            mu_perp: mq,
        });
    }

    // hydrodynamic radius from the self-mobility
    let (a_over_h, f_self_steady) = if cfg.dim == 3 {
        let corr = 2.84 / (6.0 * PI * l);
        (1.0 / (6.0 * PI * (steady.self_mobility + corr)), steady.self_mobility)
    } else {
        let a = l / 3.708 * (-4.0 * PI * steady.self_mobility).exp();
        (a, steady.self_mobility)
    };

    // steady fits
    let (steady_f, steady_g, _quality) = if cfg.dim == 3 {
        fit_steady_3d(&steady, a_over_h, l, cfg.seed)
    } else {
        fit_steady_2d(&steady, f_self_steady, cfg.seed)
    };

    // finite-β datasets
    let betas = cfg.beta_table();
    let mut phi0 = Vec::new();
    let mut datasets = Vec::new();
    for &b in &betas {
        let beta_eff = if b == 0.0 { 1e-6 } else { b };
        let params = StokesParams::time_dependent(1.0, 1.0, beta_eff, 1.0);
        let ds = measure(&g, &mg, &params, &markers, cfg.kernel, cfg.solver_tol, &mut rng);
        phi0.push(ds.self_mobility / beta_eff);
        for &(r, mp, mq) in &ds.samples {
            all_samples.push(SampleRecord {
                beta: b,
                r_over_h: r,
                mu_par: if mp.is_nan() { mp } else { mp / beta_eff },
                mu_perp: if mq.is_nan() { mq } else { mq / beta_eff },
            });
        }
        datasets.push((b, beta_eff, ds));
    }

    // self-mobility fit across β, with the inviscid constraint pinned
    let cv;
    let z = if cfg.dim == 3 {
        let z0 = 1.0 / phi0[0];
        cv = 2.0 / (3.0 * z0);
        let model = move |t: &[f64], b: f64| -> f64 {
            (1.0 + t[0] * b.sqrt() + t[1] * b)
                / (z0 + t[2] * b + 6.0 * PI * a_over_h * t[1] * b * b)
        };
        let t = fit_curve(
            &betas,
            &phi0,
            true,
            model,
            vec![0.0; 3],
            vec![1e6; 3],
            &[vec![1.0, 1.0, 5.0], vec![0.1, 0.3, 1.0]],
            cfg.seed + 1,
        );
        vec![z0, t[0], t[1], t[2]]
    } else {
        let z0 = phi0[0];
        cv = 1.0 / (2.0 * z0);
        let model = move |t: &[f64], b: f64| -> f64 {
            let lnb = if b > 0.0 { b.ln() } else { 0.0 };
            (z0 + t[0] * b.powi(3) * lnb) / (1.0 + t[1] * b + t[2] * b * b + t[3] * b.powi(4))
        };
        let t = fit_curve(
            &betas,
            &phi0,
            true,
            model,
            vec![0.0; 4],
            vec![1e6; 4],
            &[vec![0.01, 1.0, 1.0, 0.01], vec![0.1, 0.5, 0.1, 0.1]],
            cfg.seed + 1,
        );
        vec![z0, t[0], t[1], t[2], t[3]]
    };
    let coeffs_for_phi = FitCoefficients {
        kernel: cfg.kernel,
        dim: cfg.dim,
        grid_n: n,
        box_over_h: l,
        date: String::new(),
        a_over_h,
        cv,
        z: z.clone(),
        steady_f: steady_f.clone(),
        steady_g: steady_g.clone(),
        betas: Vec::new(),
        fbeta: Vec::new(),
        gbeta: Vec::new(),
        phi0: Vec::new(),
    };

    // per-β fits of the normalized pair data
    let mut fbeta = Vec::new();
    let mut gbeta = Vec::new();
    for (idx, (b, beta_eff, ds)) in datasets.iter().enumerate() {
        let p0 = coeffs_for_phi.phi0_of_beta(*b);
        let (fa, gb) = if cfg.dim == 3 {
            fit_beta_3d(ds, *b, *beta_eff, p0, cfg.seed + 10 + idx as u64)
        } else {
            fit_beta_2d(ds, *b, *beta_eff, cfg.seed + 10 + idx as u64)
        };
        fbeta.push(fa);
        gbeta.push(gb);
    }

    let coefficients = FitCoefficients {
        kernel: cfg.kernel,
        dim: cfg.dim,
        grid_n: n,
        box_over_h: l,
        date: today(),
        a_over_h,
        cv,
        z,
        steady_f,
        steady_g,
        betas,
        fbeta,
        gbeta,
        phi0,
    };

    // fit-quality report on the steady data over r/h in [2, 20]
    let mut devs = Vec::new();
    for &(r, mp, mq) in &steady.samples {
        if !(2.0..=20.0).contains(&r) {
            continue;
        }
        let (f, gg) = coefficients.eval(r, f64::INFINITY, 1.0, 1.0, Some(l));
        if mq.is_finite() && f.abs() > 1e-14 {
            devs.push((f / mq - 1.0).abs());
        }
        if mp.is_finite() {
            let par = f + gg;
            devs.push((par / mp - 1.0).abs());
        }
    }
    let report = FitReport {
        steady_median_rel_dev: median(devs),
        a_over_h,
        cv,
    };

    FitOutput {
        coefficients,
        samples: all_samples,
        report,
    }
}

fn today() -> String {
    // days since epoch -> civil date (Howard Hinnant's algorithm)
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let days = (secs / 86400) as i64;
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = if m <= 2 { y + 1 } else { y };
    format!("{y:04}-{m:02}-{d:02}")
}

fn fit_steady_3d(
    ds: &Dataset,
    a_over_h: f64,
    l: f64,
    seed: u64,
) -> (Vec<f64>, Vec<f64>, f64) {
    let corr = 2.84 / (6.0 * PI * l);
    let mut xf = Vec::new();
    let mut yf = Vec::new();
    let mut xg = Vec::new();
    let mut yg = Vec::new();
    for &(r, mp, mq) in &ds.samples {
        if mq.is_finite() {
            if r >= STEADY_3D_BREAK {
                xf.push(r);
                yf.push(8.0 * PI * r * (mq + corr));
            }
            if mp.is_finite() {
                xg.push(r);
                yg.push(8.0 * PI * r * (mp - mq));
            }
        }
    }
    // f̃ main branch: b1 x e^{-b2 x} + (b3 x² + x⁴)/(1 + b4 x² + x⁴)
    let fmodel = |t: &[f64], x: f64| -> f64 {
        t[0] * x * (-t[1] * x).exp() + (t[2] * x * x + x.powi(4)) / (1.0 + t[3] * x * x + x.powi(4))
    };
    let tf = fit_curve(
        &xf,
        &yf,
        false,
        fmodel,
        vec![-10.0, 0.05, -10.0, -1.8],
        vec![10.0, 10.0, 10.0, 1e3],
        &[vec![0.1, 1.0, 1.0, 1.0], vec![0.5, 0.5, 0.2, 3.0]],
        seed,
    );
    // pin b0 by continuity at the breakpoint
    let fb = fmodel(&tf, STEADY_3D_BREAK).max(1e-9);
    let b0 = (STEADY_3D_BREAK / fb - 0.75 * a_over_h) / (STEADY_3D_BREAK * STEADY_3D_BREAK);
    let steady_f = vec![b0, tf[0], tf[1], tf[2], tf[3]];
    // g̃ = x³/(b5 + b6 x² + x³)
    let gmodel = |t: &[f64], x: f64| -> f64 { x.powi(3) / (t[0] + t[1] * x * x + x.powi(3)) };
    let tg = fit_curve(
        &xg,
        &yg,
        false,
        gmodel,
        vec![1e-6, 0.0],
        vec![1e3, 1e3],
        &[vec![3.0, 1.0], vec![10.0, 0.3]],
        seed + 2,
    );
    (steady_f, tg, 0.0)
}

fn fit_steady_2d(ds: &Dataset, f_self: f64, seed: u64) -> (Vec<f64>, Vec<f64>, f64) {
    let mut xf = Vec::new();
    let mut yf = Vec::new();
    let mut xg = Vec::new();
    let mut yg = Vec::new();
    for &(r, mp, mq) in &ds.samples {
        if mq.is_finite() {
            xf.push(r);
            yf.push(-4.0 * PI * (mq - f_self));
            if mp.is_finite() {
                xg.push(r);
                yg.push(4.0 * PI * (mp - mq));
            }
        }
    }
    let fmodel = |t: &[f64], x: f64| -> f64 {
        (t[0] * x * x + t[1] * x.powi(3) + t[2] * x.powi(3) * x.ln())
            / (1.0 + t[3] * x + t[4] * x * x + t[2] * x.powi(3))
    };
    let tf = fit_curve(
        &xf,
        &yf,
        false,
        fmodel,
        vec![-100.0, -100.0, 1e-4, 0.0, 0.0],
        vec![100.0, 100.0, 100.0, 100.0, 100.0],
        &[vec![0.5, 0.5, 1.0, 1.0, 0.5], vec![0.1, 1.0, 0.4, 2.0, 0.1]],
        seed,
    );
    let gmodel = |t: &[f64], x: f64| -> f64 {
        (t[0] * x * x + t[1] * x.powi(3)) / (1.0 + t[2] * x + t[3] * x * x + t[1] * x.powi(3))
    };
    let tg = fit_curve(
        &xg,
        &yg,
        false,
        gmodel,
        vec![-100.0, 1e-4, 0.0, 0.0],
        vec![100.0, 100.0, 100.0, 100.0],
        &[vec![0.3, 0.5, 1.0, 0.5], vec![0.05, 0.2, 0.5, 2.0]],
        seed + 2,
    );
    (tf, tg, 0.0)
}

fn fit_beta_3d(
    ds: &Dataset,
    beta_node: f64,
    beta_eff: f64,
    phi0: f64,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let mut xf = Vec::new();
    let mut yf = Vec::new();
    let mut xg = Vec::new();
    let mut yg = Vec::new();
    for &(r, mp, mq) in &ds.samples {
        if mq.is_finite() {
            xf.push(r);
            yf.push(-4.0 * PI * r.powi(3) * mq / beta_eff);
            if mp.is_finite() {
                xg.push(r);
                yg.push(4.0 * PI * r.powi(3) * (mp - mq) / (3.0 * beta_eff));
            }
        }
    }
    let b = beta_node;
    let fmodel = move |t: &[f64], x: f64| -> f64 {
        FitCoefficients::fbeta_tilde(t, phi0, x, b, 3)
    };
    let fa = fit_curve(
        &xf,
        &yf,
        false,
        fmodel,
        vec![0.0, 0.0, 0.0, 0.0, 1e-6, -100.0, 0.01, -100.0, 0.0, 0.0],
        vec![1e4; 10],
        &[
            vec![1.0, 1.0, 1.0, 1.0, 4.0, 0.1, 1.0, 0.1, 0.3, 0.1],
            vec![0.3, 0.5, 0.2, 2.0, 10.0, -0.1, 2.0, 0.0, 1.0, 0.3],
        ],
        seed,
    );
    let gmodel = move |t: &[f64], x: f64| -> f64 {
        FitCoefficients::gbeta_tilde(t, phi0, x, b, 3)
    };
    let gb = fit_curve(
        &xg,
        &yg,
        false,
        gmodel,
        vec![0.0, 0.0, 0.0, 0.0, 0.0, 1e-6],
        vec![1e4; 6],
        &[
            vec![1.0, 1.0, 1.0, 1.0, 0.3, 4.0],
            vec![2.0, 0.3, 0.5, 0.2, 1.0, 10.0],
        ],
        seed + 1,
    );
    (fa, gb)
}

fn fit_beta_2d(ds: &Dataset, beta_node: f64, beta_eff: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut xf = Vec::new();
    let mut yf = Vec::new();
    let mut xg = Vec::new();
    let mut yg = Vec::new();
    for &(r, mp, mq) in &ds.samples {
        if mq.is_finite() {
            xf.push(r);
            yf.push(-2.0 * PI * r * r * mq / beta_eff);
            if mp.is_finite() {
                xg.push(r);
                yg.push(PI * r * r * (mp - mq) / beta_eff);
            }
        }
    }
    let b = beta_node;
    let fmodel = move |t: &[f64], x: f64| -> f64 {
        FitCoefficients::fbeta_tilde(t, 0.0, x, b, 2)
    };
    // [a0, a1, a2, a3, p1, b1, b2]
    let fa = fit_curve(
        &xf,
        &yf,
        false,
        fmodel,
        vec![1e-3, -100.0, -100.0, 0.0, 0.0, 0.0, 0.0],
        vec![1e4; 7],
        &[
            vec![1.0, -0.5, 0.5, 1.0, 1.0, 0.5, 0.2],
            vec![4.0, 0.2, 0.1, 0.3, 0.5, 1.0, 0.5],
        ],
        seed,
    );
    let gmodel = move |t: &[f64], x: f64| -> f64 {
        FitCoefficients::gbeta_tilde(t, 0.0, x, b, 2)
    };
    // [c0, c1, c2, c3, p2, p3]
    let gb = fit_curve(
        &xg,
        &yg,
        false,
        gmodel,
        vec![1e-3, 0.0, 0.0, 0.0, 0.0, 0.0],
        vec![1e4; 6],
        &[
            vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            vec![4.0, 5.0, 1.0, 0.3, 0.5, 0.4],
        ],
        seed + 1,
    );
    (fa, gb)
}

/// CSV dump of the samples feeding the fitter:
/// `r_over_h,beta,mu_par,mu_perp` (β = -1 encodes steady Stokes).
pub fn samples_to_csv(samples: &[SampleRecord]) -> String {
    let mut s = String::from("r_over_h,beta,mu_par,mu_perp\n");
    for rec in samples {
        let b = if rec.beta.is_infinite() { -1.0 } else { rec.beta };
        s.push_str(&format!(
            "{},{},{},{}\n",
            rec.r_over_h, b, rec.mu_par, rec.mu_perp
        ));
    }
    s
}
