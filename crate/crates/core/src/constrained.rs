//! Monolithic constrained solver for rigid bodies: outer FGMRES on the
//! saddle system
//! ```text
//! [ A  G  -S ] [v]   [g]
//! [-D  0   0 ] [π] = [h]
//! [-J  0   0 ] [Λ]   [W]
//! ```
//! with a Schur-complement preconditioner built from an analytic mobility
//! approximation, plus the direct-forcing splitting baseline, IMEX time
//! stepping, steady-state driving, and traction extraction.
//!
//! For fully periodic steady Stokes the spreading operator is replaced by
//! its mean-subtracted form (no net force on a periodic domain) and the
//! mean velocity is pinned to zero.

use std::cell::RefCell;
use std::sync::Arc;

use crate::grid::{divergence, face_dof_range, CellField, FaceField, GridSpec};
use crate::kernels::{IbCoupling, KernelKind, MarkerSet};
use crate::mobility::fits::{builtin_coefficients, FitCoefficients};
use crate::mobility::{
    assemble_mobility, factorize, DenseMobility, FactorizeStrategy, MobilityFactor, MobilityLaw,
    PairMobility,
};
use crate::multigrid::MgHierarchy;
use crate::stokes::{
    boundary_affine_residual, new_counter, solve_stokes, stokes_apply, DofMap, PsCounter,
    StokesParams, StokesSolveOpts, StokesState,
};

/// Mobility approximation used inside the Schur preconditioner.
#[derive(Clone)]
pub enum MobilitySource {
    /// Empirical fit coefficients (regenerated per kernel by the pipeline).
    EmpiricalFit(Arc<FitCoefficients>),
    /// Rotne-Prager-Yamakawa with radius `a_over_h`·h (3D, steady physics).
    Rpy { a_over_h: Option<f64> },
    /// A precomputed (typically exact) mobility matrix.
    Precomputed(Arc<DenseMobility>),
}

impl std::fmt::Debug for MobilitySource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MobilitySource::EmpiricalFit(_) => write!(f, "EmpiricalFit"),
            MobilitySource::Rpy { a_over_h } => write!(f, "Rpy({a_over_h:?})"),
            MobilitySource::Precomputed(_) => write!(f, "Precomputed"),
        }
    }
}

/// Solver knobs. The defaults follow the empirically robust choices: block
/// lower triangular Schur preconditioner, N_s = 2 inner iterations on
/// periodic domains and N_s = 4 with physical boundaries, outer restart 100.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub kernel: KernelKind,
    pub outer_tol: f64,
    pub outer_restart: usize,
    pub outer_max_iter: usize,
    /// Inner Stokes iterations N_s in preconditioner step 1.
    pub ns_inner: usize,
    /// Iterations for the second fluid solve (step 4); defaults to N_s.
    pub ns_inner2: Option<usize>,
    /// Skip preconditioner step 4 (block lower triangular variant).
    pub schur_lower_triangular: bool,
    /// Use the lower-triangular variant of the inner Stokes preconditioner.
    pub stokes_lower_triangular: bool,
    pub mobility: MobilitySource,
    pub svd_cutoff: f64,
    /// When set, inner fluid solves run to this tolerance instead of a
    /// fixed iteration count (used with precomputed exact mobility).
    pub inner_tol: Option<f64>,
}

impl SolverConfig {
    pub fn for_grid(g: &GridSpec, kernel: KernelKind) -> Self {
        let ns = if g.all_periodic() { 2 } else { 4 };
        let mobility = match builtin_coefficients(kernel, g.dim) {
            Some(c) => MobilitySource::EmpiricalFit(Arc::new(c)),
            None => MobilitySource::Rpy { a_over_h: None },
        };
        SolverConfig {
            kernel,
            outer_tol: 1e-9,
            outer_restart: 100,
            outer_max_iter: 300,
            ns_inner: ns,
            ns_inner2: None,
            schur_lower_triangular: true,
            stokes_lower_triangular: false,
            mobility,
            svd_cutoff: 1e-8,
            inner_tol: None,
        }
    }
}

/// The saddle unknowns of a constrained solve.
#[derive(Clone, Debug)]
pub struct ConstrainedState {
    pub v: FaceField,
    pub p: CellField,
    pub lam: Vec<[f64; 3]>,
}

impl ConstrainedState {
    pub fn zeros(g: &GridSpec, n_markers: usize) -> Self {
        ConstrainedState {
            v: FaceField::zeros(g),
            p: CellField::zeros(g),
            lam: vec![[0.0; 3]; n_markers],
        }
    }

    /// Total constraint force ΣΛ.
    pub fn total_force(&self, dim: usize) -> [f64; 3] {
        let mut f = [0.0; 3];
        for l in &self.lam {
            for d in 0..dim {
                f[d] += l[d];
            }
        }
        f
    }
}

/// Everything fixed during one constrained solve: grid, parameters, marker
/// coupling, and the DOF layout [velocity, pressure, Λ].
pub struct ConstrainedContext<'a> {
    pub g: &'a GridSpec,
    pub params: StokesParams,
    pub mg: &'a MgHierarchy,
    pub markers: &'a MarkerSet,
    pub cpl: IbCoupling,
    pub dof: DofMap,
    pub periodic_steady: bool,
}

impl<'a> ConstrainedContext<'a> {
    pub fn new(
        g: &'a GridSpec,
        params: StokesParams,
        mg: &'a MgHierarchy,
        markers: &'a MarkerSet,
        kernel: KernelKind,
    ) -> Self {
        let cpl = IbCoupling::build(g, markers, kernel);
        let dof = DofMap::new(g);
        let periodic_steady = params.is_steady() && g.all_periodic();
        let s = markers.min_spacing();
        if markers.len() > 1 && s < 1.2 * g.h {
            eprintln!(
                "warning: marker spacing s/h = {:.2} below the s/h ≈ 2 guideline; \
                 the mobility matrix may be severely ill-conditioned",
                s / g.h
            );
        }
        ConstrainedContext {
            g,
            params,
            mg,
            markers,
            cpl,
            dof,
            periodic_steady,
        }
    }

    pub fn n_total(&self) -> usize {
        self.dof.n_total + self.markers.len() * self.g.dim
    }

    fn pack(&self, v: &FaceField, p: &CellField, lam: &[[f64; 3]], out: &mut [f64]) {
        let nf = self.dof.n_total;
        self.dof.pack(v, p, &mut out[..nf]);
        let d = self.g.dim;
        for (i, l) in lam.iter().enumerate() {
            for a in 0..d {
                out[nf + i * d + a] = l[a];
            }
        }
    }

    fn unpack(&self, x: &[f64], v: &mut FaceField, p: &mut CellField, lam: &mut [[f64; 3]]) {
        let nf = self.dof.n_total;
        self.dof.unpack(&x[..nf], v, p);
        let d = self.g.dim;
        for (i, l) in lam.iter_mut().enumerate() {
            for a in 0..d {
                l[a] = x[nf + i * d + a];
            }
        }
    }

    /// Effective spreading: mean-subtracted for periodic steady Stokes.
    pub fn spread_eff(&self, lam: &[[f64; 3]], out: &mut FaceField) {
        if self.periodic_steady {
            self.cpl.spread_mean_subtracted(self.g, lam, out);
        } else {
            self.cpl.spread(self.g, lam, out);
        }
    }

    /// Blockwise operator apply: (Av + Gπ − SΛ, −Dv, −Jv).
    pub fn apply_blocks(
        &self,
        v: &mut FaceField,
        p: &mut CellField,
        lam: &[[f64; 3]],
        homogeneous: bool,
        out_m: &mut FaceField,
        out_c: &mut CellField,
        out_s: &mut [[f64; 3]],
    ) {
        stokes_apply(self.g, &self.params, v, p, homogeneous, out_m, out_c);
        let mut sl = FaceField::zeros(self.g);
        self.spread_eff(lam, &mut sl);
        for a in 0..self.g.dim {
            let r = face_dof_range(self.g, a);
            for k in r[2].0..r[2].1.max(1) {
                for j in r[1].0..r[1].1 {
                    for i in r[0].0..r[0].1 {
                        out_m.add(a, i, j, k, -sl.at(a, i, j, k));
                    }
                }
            }
        }
        // slip block: −J v (v already ghost-filled by stokes_apply)
        self.cpl.interpolate(v, out_s);
        for s in out_s.iter_mut() {
            for a in 0..self.g.dim {
                s[a] = -s[a];
            }
        }
    }

    /// Affine residual of the inhomogeneous boundary data (includes the
    /// J₀c interpolation correction at physical boundaries).
    pub fn affine_rhs(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_total()];
        let stokes_part = boundary_affine_residual(self.g, &self.params, &self.dof);
        out[..self.dof.n_total].copy_from_slice(&stokes_part);
        // slip rows: −J applied to the boundary-data extension of zero DOFs
        let mut v = FaceField::zeros(self.g);
        v.fill_ghosts(self.g, false);
        let mut jv = vec![[0.0; 3]; self.markers.len()];
        self.cpl.interpolate(&v, &mut jv);
        let nf = self.dof.n_total;
        let d = self.g.dim;
        for (i, s) in jv.iter().enumerate() {
            for a in 0..d {
                out[nf + i * d + a] = -s[a];
            }
        }
        out
    }

    /// Build the pairwise mobility approximation for the preconditioner.
    pub fn build_mobility(&self, cfg: &SolverConfig) -> DenseMobility {
        match &cfg.mobility {
            MobilitySource::Precomputed(m) => (**m).clone(),
            MobilitySource::Rpy { a_over_h } => {
                let a = a_over_h.unwrap_or_else(|| cfg.kernel.nominal_radius_ratio()) * self.g.h;
                let pair = PairMobility {
                    law: MobilityLaw::Rpy { a },
                    eta: self.params.eta_eff(),
                    h: self.g.h,
                    beta: self.params.beta(self.g.h),
                    box_len: None,
                    dim: self.g.dim,
                };
                assemble_mobility(self.markers, &pair)
            }
            MobilitySource::EmpiricalFit(c) => {
                let box_len = if self.g.all_periodic() || self.g.dim == 2 {
                    Some(self.g.len(0))
                } else {
                    None
                };
                let pair = PairMobility {
                    law: MobilityLaw::Fit(c.clone()),
                    eta: self.params.eta_eff(),
                    h: self.g.h,
                    beta: self.params.beta(self.g.h),
                    box_len,
                    dim: self.g.dim,
                };
                assemble_mobility(self.markers, &pair)
            }
        }
    }
}

struct ConstrainedOp<'b, 'a> {
    ctx: &'b ConstrainedContext<'a>,
}

impl<'b, 'a> crate::krylov::LinearOp for ConstrainedOp<'b, 'a> {
    fn dim(&self) -> usize {
        self.ctx.n_total()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = self.ctx.g;
        let n = self.ctx.markers.len();
        let mut v = FaceField::zeros(g);
        let mut p = CellField::zeros(g);
        let mut lam = vec![[0.0; 3]; n];
        self.ctx.unpack(x, &mut v, &mut p, &mut lam);
        let mut om = FaceField::zeros(g);
        let mut oc = CellField::zeros(g);
        let mut os = vec![[0.0; 3]; n];
        self.ctx
            .apply_blocks(&mut v, &mut p, &lam, true, &mut om, &mut oc, &mut os);
        self.ctx.pack(&om, &oc, &os, y);
    }
}

/// The Schur-complement preconditioner: inexact fluid solve, slip
/// evaluation, dense mobility solve, optional corrected fluid re-solve.
pub struct SchurPrecond<'b, 'a> {
    ctx: &'b ConstrainedContext<'a>,
    factor: MobilityFactor,
    cfg: SolverConfig,
    pub ps_counter: PsCounter,
    /// cumulative P_S applications recorded after each preconditioner call
    pub ps_log: RefCell<Vec<usize>>,
}

impl<'b, 'a> SchurPrecond<'b, 'a> {
    pub fn new(
        ctx: &'b ConstrainedContext<'a>,
        cfg: &SolverConfig,
    ) -> Result<Self, crate::mobility::FactorizeError> {
        let mob = ctx.build_mobility(cfg);
        let factor = factorize(
            &mob,
            FactorizeStrategy::Auto {
                svd_cutoff: cfg.svd_cutoff,
            },
        )?;
        Ok(SchurPrecond {
            ctx,
            factor,
            cfg: cfg.clone(),
            ps_counter: new_counter(),
            ps_log: RefCell::new(Vec::new()),
        })
    }

    fn inner_opts(&self, iters: usize) -> StokesSolveOpts {
        match self.cfg.inner_tol {
            Some(tol) => StokesSolveOpts {
                tol,
                max_iter: 200,
                restart: self.cfg.outer_restart,
                fixed_iters: None,
                lower_triangular: self.cfg.stokes_lower_triangular,
            },
            None => StokesSolveOpts {
                tol: 1e-30,
                max_iter: iters,
                restart: self.cfg.outer_restart,
                fixed_iters: Some(iters),
                lower_triangular: self.cfg.stokes_lower_triangular,
            },
        }
    }
}

impl<'b, 'a> crate::krylov::Precond for SchurPrecond<'b, 'a> {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let ctx = self.ctx;
        let g = ctx.g;
        let n = ctx.markers.len();
        let d = g.dim;
        let mut gm = FaceField::zeros(g);
        let mut hc = CellField::zeros(g);
        let mut w = vec![[0.0; 3]; n];
        ctx.unpack(x, &mut gm, &mut hc, &mut w);
        // step 1: inexact unconstrained fluid solve
        let (st1, _) = solve_stokes(
            g,
            &ctx.params,
            ctx.mg,
            &gm,
            &hc,
            &self.inner_opts(self.cfg.ns_inner),
            self.ps_counter.clone(),
            None,
        );
        // step 2: slip ΔV = −(J ṽ + W)
        let mut jv = vec![[0.0; 3]; n];
        let mut vf = st1.v.clone();
        vf.fill_ghosts(g, true);
        ctx.cpl.interpolate(&vf, &mut jv);
        let mut dv = vec![0.0; n * d];
        for i in 0..n {
            for a in 0..d {
                dv[i * d + a] = -(jv[i][a] + w[i][a]);
            }
        }
        // step 3: mobility solve M̃ Λ = ΔV
        let lam_flat = self.factor.solve(&dv);
        let mut lam = vec![[0.0; 3]; n];
        for i in 0..n {
            for a in 0..d {
                lam[i][a] = lam_flat[i * d + a];
            }
        }
        // step 4 (full variant): re-solve the corrected fluid sub-problem
        let (v_out, p_out) = if self.cfg.schur_lower_triangular {
            (st1.v, st1.p)
        } else {
            let mut sl = FaceField::zeros(g);
            ctx.spread_eff(&lam, &mut sl);
            let mut rhs2 = gm.clone();
            for a in 0..d {
                let r = face_dof_range(g, a);
                for k in r[2].0..r[2].1.max(1) {
                    for j in r[1].0..r[1].1 {
                        for i in r[0].0..r[0].1 {
                            rhs2.add(a, i, j, k, sl.at(a, i, j, k));
                        }
                    }
                }
            }
            let n2 = self.cfg.ns_inner2.unwrap_or(self.cfg.ns_inner);
            let (st2, _) = solve_stokes(
                g,
                &ctx.params,
                ctx.mg,
                &rhs2,
                &hc,
                &self.inner_opts(n2),
                self.ps_counter.clone(),
                None,
            );
            (st2.v, st2.p)
        };
        ctx.pack(&v_out, &p_out, &lam, y);
        self.ps_log.borrow_mut().push(self.ps_counter.get());
    }
}

/// Convergence log of a constrained solve: per outer iteration the
/// cumulative Stokes-preconditioner application count and the relative
/// residual.
#[derive(Clone, Debug, Default)]
pub struct ConvergenceLog {
    pub entries: Vec<(usize, usize, f64)>,
    pub converged: bool,
    pub final_residual: f64,
}

impl ConvergenceLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("outer_iter,ps_applications,residual\n");
        for (it, ps, r) in &self.entries {
            s.push_str(&format!("{it},{ps},{r:e}\n"));
        }
        s
    }

    pub fn total_ps_applications(&self) -> usize {
        self.entries.last().map(|e| e.1).unwrap_or(0)
    }
}

/// Solve the constrained Stokes system for the marker velocities carried by
/// `ctx.markers` (W = −V) and a body-force/explicit-terms field `rhs_g`.
pub fn solve_constrained(
    ctx: &ConstrainedContext,
    rhs_g: &FaceField,
    cfg: &SolverConfig,
    x0: Option<&ConstrainedState>,
) -> Result<(ConstrainedState, ConvergenceLog), String> {
    let g = ctx.g;
    let n = ctx.markers.len();
    let d = g.dim;
    let mut b = vec![0.0; ctx.n_total()];
    let w: Vec<[f64; 3]> = ctx
        .markers
        .velocities
        .iter()
        .map(|v| {
            let mut wv = [0.0; 3];
            for a in 0..d {
                wv[a] = -v[a];
            }
            wv
        })
        .collect();
    let zero_c = CellField::zeros(g);
    ctx.pack(rhs_g, &zero_c, &w, &mut b);
    let affine = ctx.affine_rhs();
    for (bv, av) in b.iter_mut().zip(&affine) {
        *bv -= av;
    }
    if ctx.periodic_steady {
        // project the velocity-block mean (solvability)
        let mut bm = FaceField::zeros(g);
        let mut bc = CellField::zeros(g);
        let mut bw = vec![[0.0; 3]; n];
        ctx.unpack(&b, &mut bm, &mut bc, &mut bw);
        bm.subtract_comp_means(g);
        ctx.pack(&bm, &bc, &bw, &mut b);
    }
    let op = ConstrainedOp { ctx };
    let pc = SchurPrecond::new(ctx, cfg).map_err(|e| e.to_string())?;
    let kcfg = crate::krylov::KrylovConfig {
        tol: cfg.outer_tol,
        max_iter: cfg.outer_max_iter,
        restart: cfg.outer_restart,
        fixed_iters: None,
    };
    let mut x = vec![0.0; ctx.n_total()];
    if let Some(init) = x0 {
        ctx.pack(&init.v, &init.p, &init.lam, &mut x);
    }
    let rep = crate::krylov::fgmres(&op, &b, &pc, &kcfg, &mut x);
    let mut state = ConstrainedState::zeros(g, n);
    ctx.unpack(&x, &mut state.v, &mut state.p, &mut state.lam);
    state.v.fill_ghosts(g, false);
    state.p.fill_ghosts(g);
    let ps = pc.ps_log.borrow();
    let entries: Vec<(usize, usize, f64)> = rep
        .history
        .iter()
        .enumerate()
        .map(|(i, &r)| (i + 1, ps.get(i).copied().unwrap_or(0), r))
        .collect();
    let log = ConvergenceLog {
        entries,
        converged: rep.converged,
        final_residual: rep.final_residual,
    };
    if !rep.converged {
        return Err(format!(
            "constrained solve did not reach tol {} (residual {:.3e} after {} iterations)",
            cfg.outer_tol, rep.final_residual, rep.iterations
        ));
    }
    Ok((state, log))
}

/// One step of the splitting-based direct-forcing baseline (finite β only):
/// unconstrained solve, slip estimate, force estimate Λ = (ρ/Δt)ΔV, and the
/// kernel-weighted velocity correction.
pub fn splitting_step(
    ctx: &ConstrainedContext,
    rhs_g: &FaceField,
    tol: f64,
) -> (ConstrainedState, usize) {
    assert!(
        !ctx.params.is_steady(),
        "the splitting scheme fails in the steady Stokes limit; finite β required"
    );
    let g = ctx.g;
    let n = ctx.markers.len();
    let d = g.dim;
    let counter = new_counter();
    let opts = StokesSolveOpts {
        tol,
        max_iter: 200,
        ..Default::default()
    };
    let zero_c = CellField::zeros(g);
    let (st, rep) = solve_stokes(
        g,
        &ctx.params,
        ctx.mg,
        rhs_g,
        &zero_c,
        &opts,
        counter.clone(),
        None,
    );
    assert!(rep.converged, "splitting fluid solve stalled");
    let mut jv = vec![[0.0; 3]; n];
    let mut vf = st.v.clone();
    vf.fill_ghosts(g, true);
    ctx.cpl.interpolate(&vf, &mut jv);
    let mut dv = vec![[0.0; 3]; n];
    let mut lam = vec![[0.0; 3]; n];
    let rho_dt = ctx.params.rho / ctx.params.dt;
    for i in 0..n {
        for a in 0..d {
            dv[i][a] = -(jv[i][a] + (-ctx.markers.velocities[i][a]));
            lam[i][a] = rho_dt * dv[i][a];
        }
    }
    // v ← ṽ + S ΔV with unweighted (dimensionless) spreading weights
    let hd = g.h.powi(d as i32);
    let dv_scaled: Vec<[f64; 3]> = dv.iter().map(|v| core::array::from_fn(|a| v[a] * hd)).collect();
    let mut corr = FaceField::zeros(g);
    ctx.cpl.spread(g, &dv_scaled, &mut corr);
    let mut v = st.v;
    for a in 0..d {
        let r = face_dof_range(g, a);
        for k in r[2].0..r[2].1.max(1) {
            for j in r[1].0..r[1].1 {
                for i in r[0].0..r[0].1 {
                    v.add(a, i, j, k, corr.at(a, i, j, k));
                }
            }
        }
    }
    v.fill_ghosts(g, false);
    (
        ConstrainedState { v, p: st.p, lam },
        counter.get(),
    )
}

/// Centered-difference advective term (v·∇)v on faces; `v` must carry its
/// physical boundary data in the ghost layers.
pub fn advective_term(g: &GridSpec, v: &FaceField, out: &mut FaceField) {
    let h2 = 2.0 * g.h;
    for a in 0..g.dim {
        let r = face_dof_range(g, a);
        for k in r[2].0..r[2].1.max(1) {
            for j in r[1].0..r[1].1 {
                for i in r[0].0..r[0].1 {
                    let mut adv = 0.0;
                    for dd in 0..g.dim {
                        let (ip, im) = match dd {
                            0 => ((i + 1, j, k), (i - 1, j, k)),
                            1 => ((i, j + 1, k), (i, j - 1, k)),
                            _ => ((i, j, k + 1), (i, j, k - 1)),
                        };
                        let grad = (v.at(a, ip.0, ip.1, ip.2) - v.at(a, im.0, im.1, im.2)) / h2;
                        let vel = if dd == a {
                            v.at(a, i, j, k)
                        } else {
                            // average the transverse component to this face
                            let (o1, o2, o3, o4) = match (a, dd) {
                                (0, 1) => ((i - 1, j, k), (i, j, k), (i - 1, j + 1, k), (i, j + 1, k)),
                                (0, 2) => ((i - 1, j, k), (i, j, k), (i - 1, j, k + 1), (i, j, k + 1)),
                                (1, 0) => ((i, j - 1, k), (i, j, k), (i + 1, j - 1, k), (i + 1, j, k)),
                                (1, 2) => ((i, j - 1, k), (i, j, k), (i, j - 1, k + 1), (i, j, k + 1)),
                                (2, 0) => ((i, j, k - 1), (i, j, k), (i + 1, j, k - 1), (i + 1, j, k)),
                                _ => ((i, j, k - 1), (i, j, k), (i, j + 1, k - 1), (i, j + 1, k)),
                            };
                            0.25 * (v.at(dd, o1.0, o1.1, o1.2)
                                + v.at(dd, o2.0, o2.1, o2.2)
                                + v.at(dd, o3.0, o3.1, o3.2)
                                + v.at(dd, o4.0, o4.1, o4.2))
                        };
                        adv += vel * grad;
                    }
                    out.set(a, i, j, k, adv);
                }
            }
        }
    }
}

/// Time-stepping state: current fields plus the previous advection term for
/// the Adams-Bashforth extrapolation.
pub struct TimeStepper {
    pub state: ConstrainedState,
    prev_adv: Option<FaceField>,
    pub step: usize,
    pub cfl_warned: bool,
}

impl TimeStepper {
    pub fn new(g: &GridSpec, n_markers: usize) -> Self {
        TimeStepper {
            state: ConstrainedState::zeros(g, n_markers),
            prev_adv: None,
            step: 0,
            cfl_warned: false,
        }
    }

    pub fn from_state(state: ConstrainedState) -> Self {
        TimeStepper {
            state,
            prev_adv: None,
            step: 0,
            cfl_warned: false,
        }
    }

    /// Advance one IMEX step: AB2-extrapolated explicit advection, implicit
    /// viscosity via the constrained solve (κ from `ctx.params`). Marker
    /// positions are fixed (stationary bodies). `body_force` is an optional
    /// uniform/force field added to the momentum rhs.
    pub fn advance(
        &mut self,
        ctx: &ConstrainedContext,
        cfg: &SolverConfig,
        body_force: Option<&FaceField>,
    ) -> Result<ConvergenceLog, String> {
        let g = ctx.g;
        let params = &ctx.params;
        assert!(!params.is_steady(), "time stepping requires finite β");
        // advective CFL check
        let mut vmax: f64 = 0.0;
        for a in 0..g.dim {
            for val in &self.state.v.comp[a] {
                vmax = vmax.max(val.abs());
            }
        }
        if vmax * params.dt / g.h > 0.5 && !self.cfl_warned {
            eprintln!(
                "warning: advective CFL {:.2} exceeds 0.5",
                vmax * params.dt / g.h
            );
            self.cfl_warned = true;
        }
        let mut vf = self.state.v.clone();
        vf.fill_ghosts(g, false);
        let mut adv = FaceField::zeros(g);
        advective_term(g, &vf, &mut adv);
        let rho_dt = params.rho / params.dt;
        let mut rhs = FaceField::zeros(g);
        for a in 0..g.dim {
            let r = face_dof_range(g, a);
            for k in r[2].0..r[2].1.max(1) {
                for j in r[1].0..r[1].1 {
                    for i in r[0].0..r[0].1 {
                        // AB2 extrapolation of the advective term
                        let adv_ab = match &self.prev_adv {
                            Some(pa) => 1.5 * adv.at(a, i, j, k) - 0.5 * pa.at(a, i, j, k),
                            None => adv.at(a, i, j, k),
                        };
                        let mut val = rho_dt * self.state.v.at(a, i, j, k)
                            - params.rho * adv_ab;
                        if let Some(f) = body_force {
                            val += f.at(a, i, j, k);
                        }
                        rhs.set(a, i, j, k, val);
                    }
                }
            }
        }
        let (state, log) = solve_constrained(ctx, &rhs, cfg, Some(&self.state))?;
        self.state = state;
        self.prev_adv = Some(adv);
        self.step += 1;
        Ok(log)
    }
}

#[derive(Clone, Debug)]
pub struct DriveResult {
    /// Mean velocity per component.
    pub v_mean: [f64; 3],
    /// Total constraint force ΣΛ.
    pub lam_sum: [f64; 3],
    /// Drag coefficient k = F_x/(η v̄_x) with F = vol · f.
    pub k: f64,
    /// Relative force-balance defect |vol·f + ΣΛ|/|vol·f|.
    pub force_balance: f64,
    pub steps: usize,
    pub steady: bool,
}

/// Drive a periodic domain with a constant body force to steady state and
/// report the mean velocity and drag coefficient. Supports warm starts from
/// a previous solution (`stepper` is reused across calls).
pub fn steady_state_drive(
    ctx: &ConstrainedContext,
    cfg: &SolverConfig,
    stepper: &mut TimeStepper,
    f_body: [f64; 3],
    stop_tol: f64,
    max_steps: usize,
) -> Result<DriveResult, String> {
    let g = ctx.g;
    assert!(g.all_periodic(), "steady-state drive needs a periodic domain");
    let mut f_field = FaceField::zeros(g);
    for a in 0..g.dim {
        let r = face_dof_range(g, a);
        for k in r[2].0..r[2].1.max(1) {
            for j in r[1].0..r[1].1 {
                for i in r[0].0..r[0].1 {
                    f_field.set(a, i, j, k, f_body[a]);
                }
            }
        }
    }
    let mut consecutive = 0usize;
    let mut steady = false;
    let dt = ctx.params.dt;
    for _ in 0..max_steps {
        let prev = stepper.state.v.clone();
        stepper.advance(ctx, cfg, Some(&f_field))?;
        // relative change per unit time
        let mut num = 0.0;
        let mut den = 0.0;
        for a in 0..g.dim {
            for (x, y) in stepper.state.v.comp[a].iter().zip(&prev.comp[a]) {
                num += (x - y) * (x - y);
                den += x * x;
            }
        }
        let rate = (num / den.max(1e-300)).sqrt() / dt;
        if rate < stop_tol {
            consecutive += 1;
            if consecutive >= 50 {
                steady = true;
                break;
            }
        } else {
            consecutive = 0;
        }
    }
    let vol = g.volume();
    let mut v_mean = [0.0; 3];
    for a in 0..g.dim {
        v_mean[a] = stepper.state.v.comp_mean(g, a);
    }
    let lam_sum = stepper.state.total_force(g.dim);
    let fx = vol * f_body[0];
    let mut defect = 0.0;
    let mut fmag = 0.0;
    for a in 0..g.dim {
        defect += (vol * f_body[a] + lam_sum[a]).powi(2);
        fmag += (vol * f_body[a]).powi(2);
    }
    let k = fx / (ctx.params.eta * v_mean[0]);
    Ok(DriveResult {
        v_mean,
        lam_sum,
        k,
        force_balance: (defect / fmag.max(1e-300)).sqrt(),
        steps: stepper.step,
        steady,
    })
}

/// Pointwise traction estimates t_i = Λ_i / ΔA_i.
pub fn traction_estimates(lam: &[[f64; 3]], areas: &[f64]) -> Vec<[f64; 3]> {
    assert_eq!(lam.len(), areas.len());
    lam.iter()
        .zip(areas)
        .map(|(l, &a)| {
            assert!(a > 0.0, "zero marker area");
            [l[0] / a, l[1] / a, l[2] / a]
        })
        .collect()
}

/// Tractions of a spherical shell in flow-aligned spherical coordinates:
/// returns (θ, σ_n, σ_θ, σ_φ) per marker, flow along `axis` (unit vector).
pub fn shell_tractions_polar(
    positions: &[[f64; 3]],
    center: [f64; 3],
    axis: [f64; 3],
    tractions: &[[f64; 3]],
) -> Vec<(f64, f64, f64, f64)> {
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let norm = |a: [f64; 3]| dot(a, a).sqrt();
    positions
        .iter()
        .zip(tractions)
        .map(|(p, t)| {
            let r = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
            let rn = norm(r);
            let rhat = [r[0] / rn, r[1] / rn, r[2] / rn];
            let cos_th = dot(rhat, axis).clamp(-1.0, 1.0);
            let theta = cos_th.acos();
            // θ̂: in the (axis, r̂) plane, orthogonal to r̂
            let mut th_hat = [
                axis[0] * cos_th - rhat[0],
                axis[1] * cos_th - rhat[1],
                axis[2] * cos_th - rhat[2],
            ];
            // θ̂ points toward increasing θ: -(axis - cosθ r̂)/sinθ
            let tn = norm(th_hat);
            if tn > 1e-12 {
                for x in th_hat.iter_mut() {
                    *x /= -tn;
                }
            } else {
                th_hat = [0.0; 3];
            }
            let phi_hat = [
                rhat[1] * th_hat[2] - rhat[2] * th_hat[1],
                rhat[2] * th_hat[0] - rhat[0] * th_hat[2],
                rhat[0] * th_hat[1] - rhat[1] * th_hat[0],
            ];
            (
                theta,
                dot(*t, rhat),
                dot(*t, th_hat),
                dot(*t, phi_hat),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::LinearOp;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn small_ctx<'a>(
        g: &'a GridSpec,
        mg: &'a MgHierarchy,
        markers: &'a MarkerSet,
    ) -> ConstrainedContext<'a> {
        ConstrainedContext::new(g, StokesParams::steady(1.0), mg, markers, KernelKind::Peskin4)
    }

    #[test]
    fn zero_state_gives_zero_residuals() {
        let g = GridSpec::square_periodic(2, 16, 1.0);
        let mg = MgHierarchy::build(&g);
        let m = MarkerSet::new(2, vec![[8.0, 8.0, 0.0], [4.0, 4.0, 0.0]]);
        let ctx = small_ctx(&g, &mg, &m);
        let op = ConstrainedOp { ctx: &ctx };
        let x = vec![0.0; ctx.n_total()];
        let mut y = vec![1.0; ctx.n_total()];
        op.apply(&x, &mut y);
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn operator_linearity_probe() {
        let g = GridSpec::square_periodic(2, 12, 0.5);
        let mg = MgHierarchy::build(&g);
        let m = MarkerSet::new(2, vec![[3.0, 3.1, 0.0], [1.7, 4.0, 0.0]]);
        let ctx = small_ctx(&g, &mg, &m);
        let op = ConstrainedOp { ctx: &ctx };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = ctx.n_total();
        let x1: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let xs: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let mut y1 = vec![0.0; n];
        let mut y2 = vec![0.0; n];
        let mut ys = vec![0.0; n];
        op.apply(&x1, &mut y1);
        op.apply(&x2, &mut y2);
        op.apply(&xs, &mut ys);
        let scale = ys.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            assert!(
                (ys[i] - 2.0 * y1[i] + 3.0 * y2[i]).abs() <= 1e-13 * scale.max(1.0),
                "at {i}"
            );
        }
    }

    #[test]
    fn cross_block_adjointness() {
        // Λᵀ(J v) = h^d vᵀ(S Λ) through the assembled operator blocks
        let g = GridSpec::square_periodic(2, 16, 0.5);
        let mg = MgHierarchy::build(&g);
        let m = MarkerSet::new(2, vec![[3.0, 3.1, 0.0], [5.7, 4.0, 0.0], [2.2, 6.5, 0.0]]);
        // finite beta so the plain spreading operator is used
        let params = StokesParams::time_dependent(1.0, 1.0, 1.0, 1.0);
        let ctx = ConstrainedContext::new(&g, params, &mg, &m, KernelKind::Peskin4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut v = FaceField::zeros(&g);
        for a in 0..2 {
            for j in 0..16 {
                for i in 0..16 {
                    v.set(a, i, j, 0, rng.gen::<f64>() - 0.5);
                }
            }
        }
        v.fill_ghosts(&g, true);
        let lam: Vec<[f64; 3]> = (0..3)
            .map(|_| [rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, 0.0])
            .collect();
        let mut jv = vec![[0.0; 3]; 3];
        ctx.cpl.interpolate(&v, &mut jv);
        let mut sl = FaceField::zeros(&g);
        ctx.spread_eff(&lam, &mut sl);
        let lhs: f64 = lam
            .iter()
            .zip(&jv)
            .map(|(l, u)| l[0] * u[0] + l[1] * u[1])
            .sum();
        let mut rhs = 0.0;
        for a in 0..2 {
            for j in 0..16 {
                for i in 0..16 {
                    rhs += v.at(a, i, j, 0) * sl.at(a, i, j, 0);
                }
            }
        }
        rhs *= g.h * g.h;
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn traction_moments() {
        let lam = vec![[2.0, 0.0, 1.0], [4.0, -2.0, 0.0]];
        let areas = vec![0.5, 2.0];
        let t = traction_estimates(&lam, &areas);
        assert_eq!(t[0], [4.0, 0.0, 2.0]);
        assert_eq!(t[1], [2.0, -1.0, 0.0]);
        // moment check: Σ t_i ΔA_i = Σ Λ_i exactly
        for d in 0..3 {
            let back: f64 = t.iter().zip(&areas).map(|(ti, a)| ti[d] * a).sum();
            let total: f64 = lam.iter().map(|l| l[d]).sum();
            assert!((back - total).abs() < 1e-14);
        }
    }

    #[test]
    fn splitting_without_body_matches_unconstrained() {
        let g = GridSpec::square_periodic(2, 16, 1.0);
        let mg = MgHierarchy::build(&g);
        // single marker with zero force estimate does not exist; emulate
        // "no body" with a marker forced by zero slip: compare fields away
        // from the marker. Simpler: a marker whose interpolated slip is
        // corrected, then N = 0 is approximated by comparing against the
        // unconstrained solve directly.
        let params = StokesParams::time_dependent(1.0, 1.0, 0.5, 1.0);
        let m = MarkerSet::new(2, vec![[8.0, 8.0, 0.0]]);
        let ctx = ConstrainedContext::new(&g, params, &mg, &m, KernelKind::Peskin4);
        let mut rhs = FaceField::zeros(&g);
        rhs.set(0, 3, 3, 0, 1.0);
        rhs.set(1, 10, 5, 0, -1.0);
        let (split, _) = splitting_step(&ctx, &rhs, 1e-10);
        let zero_c = CellField::zeros(&g);
        let opts = StokesSolveOpts {
            tol: 1e-10,
            ..Default::default()
        };
        let (unc, _) = solve_stokes(&g, &params, &mg, &rhs, &zero_c, &opts, new_counter(), None);
        // the marker sits in quiescent fluid: slip ~ fluid velocity there,
        // correction local; far away the fields agree
        let d = (split.v.at(0, 3, 3, 0) - unc.v.at(0, 3, 3, 0)).abs();
        assert!(d < 1e-8, "far-field difference {d}");
        // slip after correction is nonzero in general
        let mut jv = vec![[0.0; 3]; 1];
        let mut vf = split.v.clone();
        vf.fill_ghosts(&g, true);
        ctx.cpl.interpolate(&vf, &mut jv);
        assert!(jv[0][0].abs() + jv[0][1].abs() > 0.0);
    }
}
