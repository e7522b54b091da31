//! Unconstrained staggered Stokes saddle solver (velocity + pressure).
//!
//! Solves
//! ```text
//! [ A  G ] [v]   [g]
//! [-D  0 ] [π] = [h]
//! ```
//! with `A = η h⁻²(β⁻¹ I − L_v)` by right-preconditioned GMRES, using the
//! projection-method preconditioner: one Helmholtz V-cycle for the velocity,
//! an approximate Schur complement `B̃⁻¹ = −(ρh²/Δt) L̃_p⁻¹ + η I` for the
//! pressure (just `η I` at steady Stokes), and an optional velocity
//! correction `h² G L̃_p⁻¹` (the full, non-triangular variant).
//!
//! Dirichlet boundary values and prescribed wall tractions enter through a
//! one-time affine right-hand-side correction; the operator handed to the
//! Krylov solver is strictly linear (homogeneous boundary data).

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use crate::grid::{
    divergence, face_dof_range, gradient, helmholtz_apply, BoundaryKind, CellField, FaceField,
    GridSpec,
};
use crate::krylov::{fgmres, KrylovConfig, LinearOp, Precond, SolveReport};
use crate::multigrid::{MgHierarchy, MgWorkspace};

/// Fluid parameters. `kappa` is the implicit-viscosity coefficient (1 for
/// backward Euler and steady Stokes, 1/2 for implicit midpoint); it is
/// absorbed into the viscosity wherever the operator is formed.
#[derive(Clone, Copy, Debug)]
pub struct StokesParams {
    pub rho: f64,
    pub eta: f64,
    pub dt: f64,
    pub kappa: f64,
}

impl StokesParams {
    /// Steady Stokes: ρ treated as zero, β = ∞.
    pub fn steady(eta: f64) -> Self {
        assert!(eta > 0.0);
        StokesParams {
            rho: 0.0,
            eta,
            dt: f64::INFINITY,
            kappa: 1.0,
        }
    }

    pub fn time_dependent(rho: f64, eta: f64, dt: f64, kappa: f64) -> Self {
        assert!(eta > 0.0 && rho > 0.0 && dt > 0.0);
        assert!(kappa == 1.0 || kappa == 0.5, "kappa must be 1 or 1/2");
        StokesParams {
            rho,
            eta,
            dt,
            kappa,
        }
    }

    /// κ-absorbed viscosity used in the operator.
    pub fn eta_eff(&self) -> f64 {
        self.kappa * self.eta
    }

    pub fn is_steady(&self) -> bool {
        self.rho == 0.0 || self.dt.is_infinite()
    }

    /// Viscous CFL number β = (κη/ρ)·Δt/h²; ∞ for steady Stokes.
    pub fn beta(&self, h: f64) -> f64 {
        if self.is_steady() {
            f64::INFINITY
        } else {
            self.eta_eff() / self.rho * self.dt / (h * h)
        }
    }
}

/// Flat layout of the (v, π) unknowns: face components (excluding prescribed
/// Dirichlet wall faces and duplicated periodic slots), then cells.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub g: GridSpec,
    face_ranges: [[(isize, isize); 3]; 3],
    face_offset: [usize; 3],
    pub n_velocity: usize,
    pub n_total: usize,
}

impl DofMap {
    pub fn new(g: &GridSpec) -> Self {
        let mut face_ranges = [[(0isize, 0isize); 3]; 3];
        let mut face_offset = [0usize; 3];
        let mut off = 0usize;
        for a in 0..g.dim {
            face_ranges[a] = face_dof_range(g, a);
            face_offset[a] = off;
            let r = face_ranges[a];
            let len = (r[0].1 - r[0].0) as usize
                * (r[1].1 - r[1].0) as usize
                * ((r[2].1 - r[2].0) as usize).max(1);
            off += len;
        }
        let n_velocity = off;
        let n_total = off + g.total_cells();
        DofMap {
            g: g.clone(),
            face_ranges,
            face_offset,
            n_velocity,
            n_total,
        }
    }

    pub fn pack(&self, v: &FaceField, p: &CellField, out: &mut [f64]) {
        let mut idx = 0usize;
        for a in 0..self.g.dim {
            let r = self.face_ranges[a];
            for k in r[2].0..r[2].1.max(1) {
                for j in r[1].0..r[1].1 {
                    for i in r[0].0..r[0].1 {
                        out[idx] = v.at(a, i, j, k);
                        idx += 1;
                    }
                }
            }
        }
        for k in 0..self.g.n[2] as isize {
            for j in 0..self.g.n[1] as isize {
                for i in 0..self.g.n[0] as isize {
                    out[idx] = p.at(i, j, k);
                    idx += 1;
                }
            }
        }
        debug_assert_eq!(idx, self.n_total);
    }

    pub fn unpack(&self, x: &[f64], v: &mut FaceField, p: &mut CellField) {
        let mut idx = 0usize;
        for a in 0..self.g.dim {
            let r = self.face_ranges[a];
            for k in r[2].0..r[2].1.max(1) {
                for j in r[1].0..r[1].1 {
                    for i in r[0].0..r[0].1 {
                        v.set(a, i, j, k, x[idx]);
                        idx += 1;
                    }
                }
            }
        }
        for k in 0..self.g.n[2] as isize {
            for j in 0..self.g.n[1] as isize {
                for i in 0..self.g.n[0] as isize {
                    p.set(i, j, k, x[idx]);
                    idx += 1;
                }
            }
        }
        debug_assert_eq!(idx, self.n_total);
    }
}

/// Apply the coupled operator blockwise: `out_m = A v + G π` (+ the traction
/// closure at normal-stress walls), `out_c = −D v`.
///
/// The input fields carry DOF values only; ghosts and prescribed wall slots
/// are (re)filled here. With `homogeneous = false` the inhomogeneous
/// boundary data of the grid spec enters, which is used once per solve to
/// build the affine right-hand-side correction.
pub fn stokes_apply(
    g: &GridSpec,
    params: &StokesParams,
    v: &mut FaceField,
    p: &mut CellField,
    homogeneous: bool,
    out_m: &mut FaceField,
    out_c: &mut CellField,
) {
    v.fill_ghosts(g, homogeneous);
    p.fill_ghosts(g);
    let beta = params.beta(g.h);
    let eta = params.eta_eff();
    helmholtz_apply(g, v, beta, eta, out_m);
    // momentum += G π  (pressure ghost rules give the one-sided 2π/h term
    // at stress walls automatically)
    let mut gp = FaceField::zeros(g);
    gradient(g, p, &mut gp);
    for a in 0..g.dim {
        let r = face_dof_range(g, a);
        for k in r[2].0..r[2].1.max(1) {
            for j in r[1].0..r[1].1 {
                for i in r[0].0..r[0].1 {
                    out_m.add(a, i, j, k, gp.at(a, i, j, k));
                }
            }
        }
    }
    // traction closure at normal-stress walls: one-sided balance of π and
    // viscous stress, σ_dd = −π + 2η ∂v_d/∂x_d = t
    for d in 0..g.dim {
        let nd = g.n[d] as isize;
        let c4 = 4.0 * eta / (g.h * g.h);
        for side in 0..2 {
            if let BoundaryKind::NormalStressTangentialVelocity(t) = g.bc[2 * d + side] {
                let tval = if homogeneous { 0.0 } else { t };
                let r = face_dof_range(g, d);
                let (t0, t1) = match d {
                    0 => (1usize, 2usize),
                    1 => (0, 2),
                    _ => (0, 1),
                };
                for b in r[t1].0..r[t1].1.max(1) {
                    for c in r[t0].0..r[t0].1 {
                        let (iw, jw, kw, ii, ji, ki) = match (d, side) {
                            (0, 0) => (0, c, b, 1, c, b),
                            (0, _) => (nd, c, b, nd - 1, c, b),
                            (1, 0) => (c, 0, b, c, 1, b),
                            (1, _) => (c, nd, b, c, nd - 1, b),
                            (_, 0) => (c, b, 0, c, b, 1),
                            (_, _) => (c, b, nd, c, b, nd - 1),
                        };
                        let dv = v.at(d, ii, ji, ki) - v.at(d, iw, jw, kw);
                        let sgn = if side == 0 { 1.0 } else { -1.0 };
                        out_m.add(d, iw, jw, kw, -c4 * dv + sgn * 2.0 * tval / g.h);
                    }
                }
            }
        }
    }
    divergence(g, v, out_c);
    for x in out_c.data.iter_mut() {
        *x = -*x;
    }
}

/// Shared counter of Stokes-preconditioner applications, the paper's proxy
/// for solver cost.
pub type PsCounter = Rc<Cell<usize>>;

/// The projection-method preconditioner P_S⁻¹ for the Stokes system.
pub struct StokesPrecond<'a> {
    pub g: &'a GridSpec,
    pub params: StokesParams,
    pub mg: &'a MgHierarchy,
    pub dof: &'a DofMap,
    /// Omit the velocity correction (block lower triangular variant).
    pub lower_triangular: bool,
    ws: RefCell<MgWorkspace>,
    pub counter: PsCounter,
}

impl<'a> StokesPrecond<'a> {
    pub fn new(
        g: &'a GridSpec,
        params: StokesParams,
        mg: &'a MgHierarchy,
        dof: &'a DofMap,
        lower_triangular: bool,
        counter: PsCounter,
    ) -> Self {
        StokesPrecond {
            g,
            params,
            mg,
            dof,
            lower_triangular,
            ws: RefCell::new(mg.workspace()),
            counter,
        }
    }

    /// Apply P_S⁻¹ to rhs blocks (g_m, h_c), producing (v, π).
    pub fn apply_fields(
        &self,
        rhs_m: &FaceField,
        rhs_c: &CellField,
        v: &mut FaceField,
        p: &mut CellField,
    ) {
        self.counter.set(self.counter.get() + 1);
        let g = self.g;
        let ws = &mut *self.ws.borrow_mut();
        let beta = self.params.beta(g.h);
        let eta = self.params.eta_eff();
        // (i) one Helmholtz V-cycle: ṽ = Ã⁻¹ g
        self.mg.vcycle_helmholtz(ws, rhs_m, beta, eta, v);
        v.fill_ghosts(g, true);
        // (ii) s = −(D ṽ + h)
        let mut s = CellField::zeros(g);
        divergence(g, v, &mut s);
        for (sv, hv) in s.data.iter_mut().zip(&rhs_c.data) {
            *sv = -(*sv + hv);
        }
        // (iii) π = B̃⁻¹ s, with B̃⁻¹ = −(ρh²/Δt) L̃_p⁻¹ + ηI (ηI at steady)
        let need_poisson = !self.params.is_steady() || !self.lower_triangular;
        let mut lps = CellField::zeros(g);
        if need_poisson {
            self.mg.vcycle_poisson(ws, &s, &mut lps);
        }
        for idx in 0..p.data.len() {
            p.data[idx] = eta * s.data[idx];
        }
        if !self.params.is_steady() {
            let c = self.params.rho * g.h * g.h / self.params.dt;
            for idx in 0..p.data.len() {
                p.data[idx] -= c * lps.data[idx];
            }
        }
        // (iv) velocity correction v ← ṽ + h² G L̃_p⁻¹ s (full variant)
        if !self.lower_triangular {
            lps.fill_ghosts(g);
            let mut glp = FaceField::zeros(g);
            gradient(g, &lps, &mut glp);
            let h2 = g.h * g.h;
            for a in 0..g.dim {
                let r = face_dof_range(g, a);
                for k in r[2].0..r[2].1.max(1) {
                    for j in r[1].0..r[1].1 {
                        for i in r[0].0..r[0].1 {
                            v.add(a, i, j, k, h2 * glp.at(a, i, j, k));
                        }
                    }
                }
            }
        }
        // null-space hygiene: keep iterates mean-free where constants are
        // null modes
        if self.params.is_steady() && g.all_periodic() {
            v.subtract_comp_means(g);
        }
        if self.mg.poisson_has_null() {
            p.subtract_mean(g);
        }
    }
}

impl<'a> Precond for StokesPrecond<'a> {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = self.g;
        let mut rm = FaceField::zeros(g);
        let mut rc = CellField::zeros(g);
        self.dof.unpack(x, &mut rm, &mut rc);
        let mut v = FaceField::zeros(g);
        let mut p = CellField::zeros(g);
        self.apply_fields(&rm, &rc, &mut v, &mut p);
        self.dof.pack(&v, &p, y);
    }
}

/// The Stokes operator as a flat-vector linear map (homogeneous BC data).
pub struct StokesOp<'a> {
    pub g: &'a GridSpec,
    pub params: StokesParams,
    pub dof: &'a DofMap,
}

impl<'a> LinearOp for StokesOp<'a> {
    fn dim(&self) -> usize {
        self.dof.n_total
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = self.g;
        let mut v = FaceField::zeros(g);
        let mut p = CellField::zeros(g);
        self.dof.unpack(x, &mut v, &mut p);
        let mut om = FaceField::zeros(g);
        let mut oc = CellField::zeros(g);
        stokes_apply(g, &self.params, &mut v, &mut p, true, &mut om, &mut oc);
        self.dof.pack(&om, &oc, y);
    }
}

/// Affine contribution of inhomogeneous boundary data to the residual:
/// the operator applied to the zero-DOF state with real boundary values.
pub fn boundary_affine_residual(g: &GridSpec, params: &StokesParams, dof: &DofMap) -> Vec<f64> {
    let mut v = FaceField::zeros(g);
    let mut p = CellField::zeros(g);
    let mut om = FaceField::zeros(g);
    let mut oc = CellField::zeros(g);
    stokes_apply(g, params, &mut v, &mut p, false, &mut om, &mut oc);
    let mut out = vec![0.0; dof.n_total];
    dof.pack(&om, &oc, &mut out);
    out
}

#[derive(Clone, Debug)]
pub struct StokesState {
    pub v: FaceField,
    pub p: CellField,
}

#[derive(Clone, Debug)]
pub struct StokesSolveOpts {
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
    /// Fixed iteration count N_s (inner-solver mode); overrides the
    /// tolerance stop.
    pub fixed_iters: Option<usize>,
    pub lower_triangular: bool,
}

impl Default for StokesSolveOpts {
    fn default() -> Self {
        StokesSolveOpts {
            tol: 1e-9,
            max_iter: 400,
            restart: 100,
            fixed_iters: None,
            lower_triangular: false,
        }
    }
}

/// Solve the unconstrained Stokes system with GMRES + P_S⁻¹.
///
/// `rhs_m`/`rhs_c` are the interior equations' right-hand sides; the
/// inhomogeneous boundary data carried by `g.bc` is folded in here. The
/// returned state has ghost layers and prescribed wall values filled.
#[allow(clippy::too_many_arguments)]
pub fn solve_stokes(
    g: &GridSpec,
    params: &StokesParams,
    mg: &MgHierarchy,
    rhs_m: &FaceField,
    rhs_c: &CellField,
    opts: &StokesSolveOpts,
    counter: PsCounter,
    x0: Option<&StokesState>,
) -> (StokesState, SolveReport) {
    let dof = DofMap::new(g);
    let mut b = vec![0.0; dof.n_total];
    dof.pack(rhs_m, rhs_c, &mut b);
    let affine = boundary_affine_residual(g, params, &dof);
    for (bv, av) in b.iter_mut().zip(&affine) {
        *bv -= av;
    }
    // compatibility projection for the periodic steady null space
    if params.is_steady() && g.all_periodic() {
        let mut bm = FaceField::zeros(g);
        let mut bc = CellField::zeros(g);
        dof.unpack(&b, &mut bm, &mut bc);
        bm.subtract_comp_means(g);
        dof.pack(&bm, &bc, &mut b);
    }
    let op = StokesOp {
        g,
        params: *params,
        dof: &dof,
    };
    let pc = StokesPrecond::new(g, *params, mg, &dof, opts.lower_triangular, counter);
    let cfg = KrylovConfig {
        tol: opts.tol,
        max_iter: opts.max_iter,
        restart: opts.restart,
        fixed_iters: opts.fixed_iters,
    };
    let mut x = vec![0.0; dof.n_total];
    if let Some(init) = x0 {
        dof.pack(&init.v, &init.p, &mut x);
    }
    // a fixed linear P_S makes FGMRES algebraically identical to GMRES while
    // keeping the preconditioner-application count exactly one per iteration
    let rep = fgmres(&op, &b, &pc, &cfg, &mut x);
    let mut v = FaceField::zeros(g);
    let mut p = CellField::zeros(g);
    dof.unpack(&x, &mut v, &mut p);
    v.fill_ghosts(g, false);
    p.fill_ghosts(g);
    (StokesState { v, p }, rep)
}

pub fn new_counter() -> PsCounter {
    Rc::new(Cell::new(0))
}
