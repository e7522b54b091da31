//! Marker mobility: analytic pairwise tensors (Oseen/RPY/Brinkmanlet),
//! empirical-fit evaluation, dense assembly and factorization, exact
//! mobility via the fluid solver, spectra, and hydrodynamic-radius
//! extraction from periodic drag formulas.
//!
//! A pairwise mobility has the isotropic form
//! `M_ij = f(r) I + g(r) r̂ ⊗ r̂`, so a marker mobility matrix is assembled
//! from two scalar functions of distance.

pub mod fits;
pub mod leastsq;
pub mod pipeline;

use nalgebra::{DMatrix, DVector};

use crate::grid::{CellField, FaceField, GridSpec};
use crate::kernels::{IbCoupling, KernelKind, MarkerSet};
use crate::multigrid::MgHierarchy;
use crate::stokes::{new_counter, solve_stokes, StokesParams, StokesSolveOpts};
use fits::FitCoefficients;

/// Rotne-Prager-Yamakawa pair mobility for regularization radius `a`:
/// positive definite for all marker configurations.
pub fn rpy_pair(r: f64, a: f64, eta: f64) -> (f64, f64) {
    assert!(r >= 0.0 && a > 0.0);
    let c = 1.0 / (6.0 * std::f64::consts::PI * eta * a);
    if r > 2.0 * a {
        let f = c * (0.75 * a / r + 0.5 * a.powi(3) / r.powi(3));
        let g = c * (0.75 * a / r - 1.5 * a.powi(3) / r.powi(3));
        (f, g)
    } else {
        let f = c * (1.0 - 9.0 * r / (32.0 * a));
        let g = c * (3.0 * r / (32.0 * a));
        (f, g)
    }
}

/// Brinkmanlet (screened-Stokes Green's function) pair mobility with
/// screening parameter `alpha`, `alpha² = (β h²)⁻¹`. Singular at r = 0;
/// use the self-mobility fit there instead.
pub fn brinkmanlet_pair(r: f64, alpha: f64, eta: f64) -> (f64, f64) {
    assert!(r > 0.0 && alpha > 0.0);
    let x = alpha * r;
    let pre = 1.0 / (4.0 * std::f64::consts::PI * eta * r);
    if x < 0.05 {
        // series forms of (e^{-x}(1+x+x²)-1)/x² and (3-e^{-x}(3+3x+x²))/x²
        let f_core = 0.5 - 2.0 * x / 3.0 + 3.0 * x * x / 8.0 - 2.0 * x.powi(3) / 15.0
            + 5.0 * x.powi(4) / 144.0
            - x.powi(5) / 140.0
            + 7.0 * x.powi(6) / 5760.0;
        let g_core = 0.5 - x * x / 8.0 + x.powi(3) / 15.0 - x.powi(4) / 48.0
            + x.powi(5) / 210.0
            - x.powi(6) / 1152.0;
        (pre * f_core, pre * g_core)
    } else {
        let e = (-x).exp();
        let f_core = (e * (1.0 + x + x * x) - 1.0) / (x * x);
        let g_core = (3.0 - e * (3.0 + 3.0 * x + x * x)) / (x * x);
        (pre * f_core, pre * g_core)
    }
}

/// A concrete pairwise mobility law with its physical context.
#[derive(Clone, Debug)]
pub enum MobilityLaw {
    /// RPY with given regularization radius (steady-Stokes physics, 3D).
    Rpy { a: f64 },
    /// Empirical fit coefficients for the kernel/discretization.
    Fit(std::sync::Arc<FitCoefficients>),
}

/// Pair mobility (f(r), g(r)) with parameters: kernel radius metadata lives
/// in the law, physical context here.
#[derive(Clone, Debug)]
pub struct PairMobility {
    pub law: MobilityLaw,
    pub eta: f64,
    pub h: f64,
    /// Viscous CFL number; infinity for steady Stokes.
    pub beta: f64,
    /// Periodic box length, when finite-size corrections apply.
    pub box_len: Option<f64>,
    pub dim: usize,
}

impl PairMobility {
    pub fn eval(&self, r: f64) -> (f64, f64) {
        match &self.law {
            MobilityLaw::Rpy { a } => {
                assert!(self.dim == 3, "RPY mobility is three-dimensional");
                rpy_pair(r, *a, self.eta)
            }
            MobilityLaw::Fit(c) => c.eval(r, self.beta, self.eta, self.h, self.box_len),
        }
    }
}

/// Dense marker mobility matrix (N·dim square, symmetric).
#[derive(Clone, Debug)]
pub struct DenseMobility {
    pub mat: DMatrix<f64>,
    pub n_markers: usize,
    pub dim: usize,
}

/// Assemble the pairwise approximation `M̃`: blocks f(r) I + g(r) r̂⊗r̂,
/// diagonal blocks f(0) I. Exactly symmetric by construction.
pub fn assemble_mobility(m: &MarkerSet, pair: &PairMobility) -> DenseMobility {
    let n = m.len();
    let d = m.dim;
    let mut mat = DMatrix::zeros(n * d, n * d);
    let (f0, _) = pair.eval(0.0);
    for i in 0..n {
        for a in 0..d {
            mat[(i * d + a, i * d + a)] = f0;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mut rv = [0.0; 3];
            let mut r2 = 0.0;
            for c in 0..d {
                rv[c] = m.positions[i][c] - m.positions[j][c];
                r2 += rv[c] * rv[c];
            }
            let r = r2.sqrt();
            let (f, g) = pair.eval(r);
            for a in 0..d {
                for b in 0..d {
                    let v = f * if a == b { 1.0 } else { 0.0 } + g * rv[a] * rv[b] / r2;
                    mat[(i * d + a, j * d + b)] = v;
                    mat[(j * d + b, i * d + a)] = v;
                }
            }
        }
    }
    DenseMobility {
        mat,
        n_markers: n,
        dim: d,
    }
}

/// Factorization strategy for the dense mobility solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FactorizeStrategy {
    Cholesky,
    /// SVD pseudoinverse discarding singular values below `cutoff` relative
    /// to the largest.
    Svd { cutoff: f64 },
    /// Try Cholesky, fall back to SVD on breakdown.
    Auto { svd_cutoff: f64 },
}

pub enum MobilityFactor {
    Chol(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Svd {
        u: DMatrix<f64>,
        inv_s: DVector<f64>,
    },
}

#[derive(Debug)]
pub enum FactorizeError {
    /// Cholesky breakdown: the matrix is not numerically positive definite;
    /// retry with the SVD path.
    NotPositiveDefinite,
}

impl std::fmt::Display for FactorizeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FactorizeError::NotPositiveDefinite => write!(
                f,
                "mobility matrix is not numerically positive definite; use the SVD strategy"
            ),
        }
    }
}

impl std::error::Error for FactorizeError {}

pub fn factorize(
    m: &DenseMobility,
    strategy: FactorizeStrategy,
) -> Result<MobilityFactor, FactorizeError> {
    match strategy {
        FactorizeStrategy::Cholesky => m
            .mat
            .clone()
            .cholesky()
            .map(MobilityFactor::Chol)
            .ok_or(FactorizeError::NotPositiveDefinite),
        FactorizeStrategy::Svd { cutoff } => Ok(svd_factor(m, cutoff)),
        FactorizeStrategy::Auto { svd_cutoff } => Ok(m
            .mat
            .clone()
            .cholesky()
            .map(MobilityFactor::Chol)
            .unwrap_or_else(|| svd_factor(m, svd_cutoff))),
    }
}

fn svd_factor(m: &DenseMobility, cutoff: f64) -> MobilityFactor {
    // symmetric: use the eigendecomposition as the SVD
    let eig = nalgebra::SymmetricEigen::new(m.mat.clone());
    let smax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let inv_s = eig
        .eigenvalues
        .map(|s| if s.abs() > cutoff * smax { 1.0 / s } else { 0.0 });
    MobilityFactor::Svd {
        u: eig.eigenvectors,
        inv_s,
    }
}

impl MobilityFactor {
    /// Solve M Λ = rhs.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            MobilityFactor::Chol(c) => {
                let b = DVector::from_column_slice(rhs);
                c.solve(&b).as_slice().to_vec()
            }
            MobilityFactor::Svd { u, inv_s } => {
                let b = DVector::from_column_slice(rhs);
                let y = u.transpose() * b;
                let z = y.component_mul(inv_s);
                (u * z).as_slice().to_vec()
            }
        }
    }
}

/// Sorted (ascending) eigenvalues of a symmetric mobility matrix.
pub fn spectrum(m: &DenseMobility) -> Vec<f64> {
    let eig = nalgebra::SymmetricEigen::new(m.mat.clone());
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Compute the exact mobility M = J L⁻¹ S column by column with
/// tight-tolerance unconstrained Stokes solves. Returns the symmetrized
/// matrix and the relative asymmetry of the raw result.
pub fn exact_mobility(
    g: &GridSpec,
    params: &StokesParams,
    mg: &MgHierarchy,
    markers: &MarkerSet,
    kernel: KernelKind,
    tol: f64,
) -> (DenseMobility, f64) {
    use rayon::prelude::*;
    let n = markers.len();
    let d = g.dim;
    let cpl = IbCoupling::build(g, markers, kernel);
    let periodic_steady = params.is_steady() && g.all_periodic();
    let cols: Vec<Vec<f64>> = (0..n * d)
        .into_par_iter()
        .map(|col| {
            let (j, b) = (col / d, col % d);
            let mut lam = vec![[0.0; 3]; n];
            lam[j][b] = 1.0;
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
            assert!(
                rep.converged,
                "exact mobility column solve stalled at {}",
                rep.final_residual
            );
            let mut vals = vec![[0.0; 3]; n];
            let mut vf = state.v.clone();
            vf.fill_ghosts(g, true);
            cpl.interpolate(&vf, &mut vals);
            let mut col_out = vec![0.0; n * d];
            for i in 0..n {
                for a in 0..d {
                    col_out[i * d + a] = vals[i][a];
                }
            }
            col_out
        })
        .collect();
    let mut mat = DMatrix::zeros(n * d, n * d);
    for (c, col) in cols.iter().enumerate() {
        for r in 0..n * d {
            mat[(r, c)] = col[r];
        }
    }
    let mt = mat.transpose();
    let asym = (&mat - &mt).norm() / mat.norm();
    let sym = (&mat + &mt) * 0.5;
    (
        DenseMobility {
            mat: sym,
            n_markers: n,
            dim: d,
        },
        asym,
    )
}

/// Periodic drag formula, 3D cubic lattice: F/(ηV) for a sphere of radius
/// `r` in a box of side `l`.
pub fn drag_periodic_3d(r: f64, l: f64) -> f64 {
    let x = r / l;
    6.0 * std::f64::consts::PI * r / (1.0 - 2.8373 * x + 4.19 * x.powi(3) - 27.4 * x.powi(6))
}

/// Periodic drag formula, 2D square lattice of disks (dilute):
/// F/(ηV) at packing fraction φ = π r²/l².
pub fn drag_periodic_2d(r: f64, l: f64) -> f64 {
    let phi = std::f64::consts::PI * r * r / (l * l);
    4.0 * std::f64::consts::PI
        / (-phi.sqrt().ln() - 0.738 + phi - 0.887 * phi * phi + 2.038 * phi.powi(3))
}

/// Invert the periodic drag formula for the effective hydrodynamic radius.
/// `drag` is F/(ηV). Bracketed bisection; errors when no root is bracketed
/// (outside the dilute regime).
pub fn hydrodynamic_radius(drag: f64, l: f64, dim: usize) -> Result<f64, String> {
    let f = |r: f64| -> f64 {
        if dim == 3 {
            drag_periodic_3d(r, l) - drag
        } else {
            drag_periodic_2d(r, l) - drag
        }
    };
    let (mut lo, mut hi) = if dim == 3 {
        ((drag / (6.0 * std::f64::consts::PI) * 1e-3).min(1e-9 * l), 0.33 * l)
    } else {
        (1e-12 * l, 0.5 * l)
    };
    let (flo, fhi) = (f(lo), f(hi));
    if flo.signum() == fhi.signum() {
        return Err(format!(
            "drag {drag} not bracketed by the periodic formula on ({lo}, {hi})"
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn rpy_limits_and_continuity() {
        let (a, eta) = (1.3, 0.7);
        let (f0, g0) = rpy_pair(0.0, a, eta);
        assert!((f0 - 1.0 / (6.0 * PI * eta * a)).abs() < 1e-15);
        assert_eq!(g0, 0.0);
        // branch continuity at r = 2a
        let eps = 1e-9;
        let (fm, gm) = rpy_pair(2.0 * a - eps, a, eta);
        let (fp, gp) = rpy_pair(2.0 * a + eps, a, eta);
        assert!((fm - fp).abs() < 1e-8 * fm);
        assert!((gm - gp).abs() < 1e-8 * gm.max(1e-30));
        // far field approaches the Oseen tensor within 0.02%
        let r = 100.0 * a;
        let oseen = 1.0 / (8.0 * PI * eta * r);
        let (f, g) = rpy_pair(r, a, eta);
        assert!((f / oseen - 1.0).abs() <= 2.01e-4);
        assert!((g / oseen - 1.0).abs() <= 2.01e-4);
    }

    #[test]
    fn brinkmanlet_limits() {
        let eta = 1.1;
        // alpha -> 0: Stokeslet in both components
        let r = 2.0;
        let (f, g) = brinkmanlet_pair(r, 1e-8, eta);
        let stokeslet = 1.0 / (8.0 * PI * eta * r);
        assert!((f / stokeslet - 1.0).abs() < 1e-6, "f {f}");
        assert!((g / stokeslet - 1.0).abs() < 1e-6, "g {g}");
        // alpha r = 20: dipole tail dominates
        let alpha = 4.0;
        let r = 5.0f64;
        let dip = -1.0 / (4.0 * PI * eta * alpha * alpha * r.powi(3));
        let (f, _) = brinkmanlet_pair(r, alpha, eta);
        assert!((f / dip - 1.0).abs() < 1e-6, "f {f} dip {dip}");
        // continuity across the series/closed-form switch and smoothness scan
        let mut prev = None;
        for i in 1..=100 {
            let x = 0.01 + 0.06 * i as f64;
            let (f, g) = brinkmanlet_pair(x / alpha, alpha, eta);
            assert!(f.is_finite() && g.is_finite());
            if let Some((pf, _pg)) = prev {
                let df: f64 = f - pf;
                assert!(df.abs() < 1.0, "jump at {x}");
            }
            prev = Some((f, g));
        }
    }

    fn rpy_mob(a: f64, eta: f64) -> PairMobility {
        PairMobility {
            law: MobilityLaw::Rpy { a },
            eta,
            h: 1.0,
            beta: f64::INFINITY,
            box_len: None,
            dim: 3,
        }
    }

    #[test]
    fn assemble_structure() {
        let pair = rpy_mob(1.0, 1.0);
        let single = MarkerSet::new(3, vec![[0.0; 3]]);
        let m1 = assemble_mobility(&single, &pair);
        let f0 = 1.0 / (6.0 * PI);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { f0 } else { 0.0 };
                assert!((m1.mat[(i, j)] - expect).abs() < 1e-15);
            }
        }
        // two markers along x: parallel entry f+g, perpendicular f
        let r = 3.0;
        let two = MarkerSet::new(3, vec![[0.0; 3], [r, 0.0, 0.0]]);
        let m2 = assemble_mobility(&two, &pair);
        let (f, g) = rpy_pair(r, 1.0, 1.0);
        assert!((m2.mat[(0, 3)] - (f + g)).abs() < 1e-15);
        assert!((m2.mat[(1, 4)] - f).abs() < 1e-15);
        assert!((m2.mat[(2, 5)] - f).abs() < 1e-15);
        assert_eq!((&m2.mat - m2.mat.transpose()).norm(), 0.0);
    }

    #[test]
    fn rpy_assembled_matrix_is_spd_for_random_configurations() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = 1.0;
        let pair = rpy_mob(a, 1.0);
        for trial in 0..50 {
            let n = 5 + (trial % 10);
            // random points with min spacing >= 0.1a enforced by rejection
            let mut pts: Vec<[f64; 3]> = Vec::new();
            while pts.len() < n {
                let p: [f64; 3] = core::array::from_fn(|_| rng.gen::<f64>() * 10.0);
                if pts.iter().all(|q| {
                    (0..3).map(|d| (p[d] - q[d]).powi(2)).sum::<f64>().sqrt() >= 0.1 * a
                }) {
                    pts.push(p);
                }
            }
            let m = assemble_mobility(&MarkerSet::new(3, pts), &pair);
            assert!(
                factorize(&m, FactorizeStrategy::Cholesky).is_ok(),
                "trial {trial} not SPD"
            );
        }
    }

    #[test]
    fn factorization_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 30;
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>() - 0.5);
        let spd = &b * b.transpose() + DMatrix::identity(n, n) * (n as f64);
        let dm = DenseMobility {
            mat: spd,
            n_markers: n / 3,
            dim: 3,
        };
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let chol = factorize(&dm, FactorizeStrategy::Cholesky).unwrap();
        let svd = factorize(&dm, FactorizeStrategy::Svd { cutoff: 1e-14 }).unwrap();
        let x1 = chol.solve(&rhs);
        let x2 = svd.solve(&rhs);
        for i in 0..n {
            assert!((x1[i] - x2[i]).abs() < 1e-10, "{} vs {}", x1[i], x2[i]);
        }
        // identity: solve returns rhs
        let idm = DenseMobility {
            mat: DMatrix::identity(n, n),
            n_markers: n / 3,
            dim: 3,
        };
        let f = factorize(&idm, FactorizeStrategy::Auto { svd_cutoff: 1e-8 }).unwrap();
        let x = f.solve(&rhs);
        for i in 0..n {
            assert!((x[i] - rhs[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn svd_cutoff_filters_null_mode() {
        // symmetric matrix with one 1e-14 eigenvalue
        let n = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>() - 0.5);
        let q = b.qr().q();
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            d[(i, i)] = if i == 0 { 1e-14 } else { 1.0 + i as f64 };
        }
        let m = &q * d * q.transpose();
        let null_dir: DVector<f64> = q.column(0).into();
        let dm = DenseMobility {
            mat: m,
            n_markers: 2,
            dim: 3,
        };
        let f = factorize(&dm, FactorizeStrategy::Svd { cutoff: 1e-8 }).unwrap();
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let x = DVector::from_column_slice(&f.solve(&rhs));
        assert!(x.dot(&null_dir).abs() < 1e-10, "component along null mode");
    }

    #[test]
    fn spectrum_of_identity() {
        let dm = DenseMobility {
            mat: DMatrix::identity(9, 9),
            n_markers: 3,
            dim: 3,
        };
        let ev = spectrum(&dm);
        assert!(ev.iter().all(|&x| (x - 1.0).abs() < 1e-14));
    }

    #[test]
    fn hydrodynamic_radius_round_trips() {
        // dilute limit: F/(ηV) -> 6πR
        let r = hydrodynamic_radius(6.0 * PI * 1.0, 1e9, 3).unwrap();
        assert!((r - 1.0).abs() < 1e-6);
        // forward-evaluate then invert, l = 20
        let drag = 6.0 * PI / (1.0 - 2.8373 / 20.0 + 4.19 / 8000.0 - 27.4 / 6.4e7);
        let r = hydrodynamic_radius(drag, 20.0, 3).unwrap();
        assert!((r - 1.0).abs() < 1e-10, "{r}");
        // 2D round trip at φ = 0.05
        let l = 10.0;
        let r_true = (0.05f64 * l * l / PI).sqrt();
        let drag2 = drag_periodic_2d(r_true, l);
        let r2 = hydrodynamic_radius(drag2, l, 2).unwrap();
        assert!((r2 - r_true).abs() < 1e-10);
    }
}
