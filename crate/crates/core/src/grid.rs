//! Uniform staggered (MAC) Cartesian grid in 2D/3D.
//!
//! Velocities and other vector quantities live on cell faces (component
//! `a` on `a`-normal faces), scalars live at cell centers. Every field
//! carries a ghost layer of width [`GHOST`] so that compact kernels and
//! stencils can be evaluated without branching; ghost values are always
//! derived from interior values and boundary data via [`CellField::fill_ghosts`]
//! / [`FaceField::fill_ghosts`].

/// Ghost layer width. Covers the 6-point kernel half-support and all stencils.
pub const GHOST: usize = 3;

/// Boundary condition attached to one face of the domain box.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryKind {
    Periodic,
    /// Prescribed velocity on the wall (no-slip when zero).
    VelocityDirichlet([f64; 3]),
    /// Prescribed normal traction, zero tangential velocity.
    NormalStressTangentialVelocity(f64),
}

impl BoundaryKind {
    pub fn is_periodic(&self) -> bool {
        matches!(self, BoundaryKind::Periodic)
    }
}

/// Uniform staggered grid specification.
///
/// Boundary faces are ordered `[x_lo, x_hi, y_lo, y_hi, z_lo, z_hi]`.
/// For `dim == 2` the z entries must be `Periodic` and `n[2] == 1`.
#[derive(Clone, Debug)]
pub struct GridSpec {
    pub dim: usize,
    pub n: [usize; 3],
    pub h: f64,
    pub bc: [BoundaryKind; 6],
}

impl GridSpec {
    pub fn new(dim: usize, n: [usize; 3], h: f64, bc: [BoundaryKind; 6]) -> Self {
        assert!(dim == 2 || dim == 3, "dim must be 2 or 3");
        assert!(h > 0.0, "grid spacing must be positive");
        for d in 0..dim {
            assert!(n[d] >= 4, "need at least 4 cells per axis, got {}", n[d]);
        }
        if dim == 2 {
            assert_eq!(n[2], 1, "2D grids use n[2] == 1");
            assert!(bc[4].is_periodic() && bc[5].is_periodic());
        }
        for d in 0..dim {
            assert_eq!(
                bc[2 * d].is_periodic(),
                bc[2 * d + 1].is_periodic(),
                "periodic faces must come in matched opposite pairs (axis {d})"
            );
        }
        GridSpec { dim, n, h, bc }
    }

    pub fn new_periodic(dim: usize, n: [usize; 3], h: f64) -> Self {
        Self::new(
            dim,
            n,
            h,
            [
                BoundaryKind::Periodic,
                BoundaryKind::Periodic,
                BoundaryKind::Periodic,
                BoundaryKind::Periodic,
                BoundaryKind::Periodic,
                BoundaryKind::Periodic,
            ],
        )
    }

    pub fn square_periodic(dim: usize, n_per_axis: usize, h: f64) -> Self {
        let n = if dim == 2 {
            [n_per_axis, n_per_axis, 1]
        } else {
            [n_per_axis; 3]
        };
        Self::new_periodic(dim, n, h)
    }

    /// Box length along axis `d`.
    pub fn len(&self, d: usize) -> f64 {
        self.n[d] as f64 * self.h
    }

    /// Domain volume (area in 2D).
    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|d| self.len(d)).product()
    }

    pub fn is_periodic_axis(&self, d: usize) -> bool {
        self.bc[2 * d].is_periodic()
    }

    pub fn all_periodic(&self) -> bool {
        (0..self.dim).all(|d| self.is_periodic_axis(d))
    }

    pub fn total_cells(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    /// `true` if the steady-Stokes velocity operator has the constant null mode.
    pub fn has_velocity_null(&self) -> bool {
        self.all_periodic()
    }
}

fn stored_dims(dim: usize, base: [usize; 3]) -> [usize; 3] {
    let mut m = [1usize; 3];
    for d in 0..3 {
        m[d] = if d < dim { base[d] + 2 * GHOST } else { base[d] };
    }
    m
}

/// Scalar field at cell centers with ghost layer.
#[derive(Clone, Debug)]
pub struct CellField {
    pub dim: usize,
    pub n: [usize; 3],
    m: [usize; 3],
    pub data: Vec<f64>,
}

impl CellField {
    pub fn zeros(g: &GridSpec) -> Self {
        let m = stored_dims(g.dim, g.n);
        CellField {
            dim: g.dim,
            n: g.n,
            m,
            data: vec![0.0; m[0] * m[1] * m[2]],
        }
    }

    #[inline(always)]
    pub fn idx(&self, i: isize, j: isize, k: isize) -> usize {
        let off = |d: usize| if d < self.dim { GHOST as isize } else { 0 };
        let ii = (i + off(0)) as usize;
        let jj = (j + off(1)) as usize;
        let kk = (k + off(2)) as usize;
        debug_assert!(ii < self.m[0] && jj < self.m[1] && kk < self.m[2]);
        (kk * self.m[1] + jj) * self.m[0] + ii
    }

    #[inline(always)]
    pub fn at(&self, i: isize, j: isize, k: isize) -> f64 {
        self.data[self.idx(i, j, k)]
    }

    #[inline(always)]
    pub fn set(&mut self, i: isize, j: isize, k: isize, v: f64) {
        let ix = self.idx(i, j, k);
        self.data[ix] = v;
    }

    #[inline(always)]
    pub fn add(&mut self, i: isize, j: isize, k: isize, v: f64) {
        let ix = self.idx(i, j, k);
        self.data[ix] += v;
    }

    pub fn stored(&self) -> [usize; 3] {
        self.m
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Mean over interior cells.
    pub fn mean(&self, g: &GridSpec) -> f64 {
        let mut s = 0.0;
        for k in 0..g.n[2] as isize {
            for j in 0..g.n[1] as isize {
                for i in 0..g.n[0] as isize {
                    s += self.at(i, j, k);
                }
            }
        }
        s / g.total_cells() as f64
    }

    pub fn subtract_mean(&mut self, g: &GridSpec) {
        let m = self.mean(g);
        for k in 0..g.n[2] as isize {
            for j in 0..g.n[1] as isize {
                for i in 0..g.n[0] as isize {
                    let ix = self.idx(i, j, k);
                    self.data[ix] -= m;
                }
            }
        }
    }

    /// Fill the ghost layer from interior values per boundary condition.
    ///
    /// Cell-centered quantities (pressure-like) use: periodic wrap,
    /// mirror image (homogeneous Neumann) at velocity-Dirichlet walls, and
    /// mirror inversion (zero wall value) at normal-stress walls. Corners
    /// are produced by applying the per-axis extensions sequentially.
    pub fn fill_ghosts(&mut self, g: &GridSpec) {
        for d in 0..g.dim {
            let nd = g.n[d] as isize;
            for side in 0..2 {
                let bc = &g.bc[2 * d + side];
                for gh in 1..=GHOST as isize {
                    // ghost index and its source per rule
                    let (dst, src, sign) = match (bc, side) {
                        (BoundaryKind::Periodic, 0) => (-gh, nd - gh, 1.0),
                        (BoundaryKind::Periodic, 1) => (nd - 1 + gh, gh - 1, 1.0),
                        (BoundaryKind::VelocityDirichlet(_), 0) => (-gh, gh - 1, 1.0),
                        (BoundaryKind::VelocityDirichlet(_), 1) => (nd - 1 + gh, nd - gh, 1.0),
                        (BoundaryKind::NormalStressTangentialVelocity(_), 0) => (-gh, gh - 1, -1.0),
                        (BoundaryKind::NormalStressTangentialVelocity(_), _) => {
                            (nd - 1 + gh, nd - gh, -1.0)
                        }
                        _ => unreachable!(),
                    };
                    self.copy_plane_cell(g, d, dst, src, sign);
                }
            }
        }
    }

    fn copy_plane_cell(&mut self, g: &GridSpec, axis: usize, dst: isize, src: isize, sign: f64) {
        // Transverse ranges include ghosts already filled by earlier axes.
        let lo = |d: usize| {
            if d < g.dim && d < axis {
                -(GHOST as isize)
            } else {
                0
            }
        };
        let hi = |d: usize| {
            let base = g.n[d] as isize;
            if d < g.dim && d < axis {
                base + GHOST as isize
            } else {
                base
            }
        };
        let (r0, r1) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for b in lo(r1)..hi(r1) {
            for a in lo(r0)..hi(r0) {
                let (si, sj, sk, di, dj, dk) = match axis {
                    0 => (src, a, b, dst, a, b),
                    1 => (a, src, b, a, dst, b),
                    _ => (a, b, src, a, b, dst),
                };
                let v = self.at(si, sj, sk);
                self.set(di, dj, dk, sign * v);
            }
        }
    }
}

/// Vector field on cell faces (MAC layout) with ghost layers.
///
/// Component `a` is stored with `n[a] + 1` base slots along its own axis
/// (both wall faces present; on periodic axes the slot at `n` duplicates
/// slot 0 and is kept in sync by `fill_ghosts`).
#[derive(Clone, Debug)]
pub struct FaceField {
    pub dim: usize,
    pub n: [usize; 3],
    m: [[usize; 3]; 3],
    pub comp: [Vec<f64>; 3],
}

impl FaceField {
    pub fn zeros(g: &GridSpec) -> Self {
        let mut m = [[1usize; 3]; 3];
        let mut comp: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for a in 0..g.dim {
            let mut base = g.n;
            base[a] += 1;
            m[a] = stored_dims(g.dim, base);
            comp[a] = vec![0.0; m[a][0] * m[a][1] * m[a][2]];
        }
        FaceField {
            dim: g.dim,
            n: g.n,
            m,
            comp,
        }
    }

    /// Base (non-ghost) slot count of component `a` along axis `d`.
    pub fn extent(&self, a: usize, d: usize) -> usize {
        self.n[d] + if d == a { 1 } else { 0 }
    }

    #[inline(always)]
    pub fn idx(&self, a: usize, i: isize, j: isize, k: isize) -> usize {
        let m = &self.m[a];
        let off = |d: usize| if d < self.dim { GHOST as isize } else { 0 };
        let ii = (i + off(0)) as usize;
        let jj = (j + off(1)) as usize;
        let kk = (k + off(2)) as usize;
        debug_assert!(ii < m[0] && jj < m[1] && kk < m[2]);
        (kk * m[1] + jj) * m[0] + ii
    }

    #[inline(always)]
    pub fn at(&self, a: usize, i: isize, j: isize, k: isize) -> f64 {
        self.comp[a][self.idx(a, i, j, k)]
    }

    #[inline(always)]
    pub fn set(&mut self, a: usize, i: isize, j: isize, k: isize, v: f64) {
        let ix = self.idx(a, i, j, k);
        self.comp[a][ix] = v;
    }

    #[inline(always)]
    pub fn add(&mut self, a: usize, i: isize, j: isize, k: isize, v: f64) {
        let ix = self.idx(a, i, j, k);
        self.comp[a][ix] += v;
    }

    pub fn stored(&self, a: usize) -> [usize; 3] {
        self.m[a]
    }

    pub fn fill(&mut self, v: f64) {
        for a in 0..self.dim {
            self.comp[a].iter_mut().for_each(|x| *x = v);
        }
    }

    /// Mean of component `a` over its canonical slots (excluding the
    /// duplicated periodic wrap slot).
    pub fn comp_mean(&self, g: &GridSpec, a: usize) -> f64 {
        let mut s = 0.0;
        let mut cnt = 0usize;
        let ext = |d: usize| -> isize {
            if d == a && !g.is_periodic_axis(d) {
                g.n[d] as isize + 1
            } else {
                g.n[d] as isize
            }
        };
        for k in 0..ext(2).max(1) {
            for j in 0..ext(1) {
                for i in 0..ext(0) {
                    s += self.at(a, i, j, k);
                    cnt += 1;
                }
            }
        }
        s / cnt as f64
    }

    /// Remove the per-component mean (null mode of periodic steady Stokes).
    pub fn subtract_comp_means(&mut self, g: &GridSpec) {
        for a in 0..g.dim {
            let m = self.comp_mean(g, a);
            for v in self.comp[a].iter_mut() {
                *v -= m;
            }
        }
    }

    /// Fill ghost layers (and prescribed/duplicated wall slots) of all components.
    ///
    /// `homogeneous` suppresses the inhomogeneous boundary data, leaving the
    /// linear part of the extension map only; this is what linear operators
    /// applied inside Krylov solvers must use.
    pub fn fill_ghosts(&mut self, g: &GridSpec, homogeneous: bool) {
        for a in 0..g.dim {
            for d in 0..g.dim {
                let nd = g.n[d] as isize;
                for side in 0..2 {
                    let bc = &g.bc[2 * d + side];
                    if d == a {
                        self.fill_normal(g, a, d, side, bc, nd, homogeneous);
                    } else {
                        self.fill_tangential(g, a, d, side, bc, nd, homogeneous);
                    }
                }
            }
        }
    }

    fn fill_normal(
        &mut self,
        g: &GridSpec,
        a: usize,
        d: usize,
        side: usize,
        bc: &BoundaryKind,
        nd: isize,
        homogeneous: bool,
    ) {
        match bc {
            BoundaryKind::Periodic => {
                if side == 0 {
                    for gh in 1..=GHOST as isize {
                        self.copy_plane_face(g, a, d, -gh, nd - gh, 1.0, 0.0);
                    }
                } else {
                    // includes the duplicated wrap slot at nd
                    for t in 0..=GHOST as isize {
                        self.copy_plane_face(g, a, d, nd + t, t, 1.0, 0.0);
                    }
                }
            }
            BoundaryKind::VelocityDirichlet(vb) => {
                let val = if homogeneous { 0.0 } else { vb[a] };
                if side == 0 {
                    self.set_plane_face(a, d, 0, val);
                    for gh in 1..=GHOST as isize {
                        self.copy_plane_face(g, a, d, -gh, gh, -1.0, 2.0 * val);
                    }
                } else {
                    self.set_plane_face(a, d, nd, val);
                    for gh in 1..=GHOST as isize {
                        self.copy_plane_face(g, a, d, nd + gh, nd - gh, -1.0, 2.0 * val);
                    }
                }
            }
            BoundaryKind::NormalStressTangentialVelocity(_) => {
                // Wall-normal velocity is an unknown; extend with a mirror
                // image. The traction closure lives in the Stokes operator.
                if side == 0 {
                    for gh in 1..=GHOST as isize {
                        self.copy_plane_face(g, a, d, -gh, gh, 1.0, 0.0);
                    }
                } else {
                    for gh in 1..=GHOST as isize {
                        self.copy_plane_face(g, a, d, nd + gh, nd - gh, 1.0, 0.0);
                    }
                }
            }
        }
    }

    fn fill_tangential(
        &mut self,
        g: &GridSpec,
        a: usize,
        d: usize,
        side: usize,
        bc: &BoundaryKind,
        nd: isize,
        homogeneous: bool,
    ) {
        match bc {
            BoundaryKind::Periodic => {
                for gh in 1..=GHOST as isize {
                    if side == 0 {
                        self.copy_plane_face(g, a, d, -gh, nd - gh, 1.0, 0.0);
                    } else {
                        self.copy_plane_face(g, a, d, nd - 1 + gh, gh - 1, 1.0, 0.0);
                    }
                }
            }
            BoundaryKind::VelocityDirichlet(vb) => {
                let val = if homogeneous { 0.0 } else { vb[a] };
                for gh in 1..=GHOST as isize {
                    if side == 0 {
                        self.copy_plane_face(g, a, d, -gh, gh - 1, -1.0, 2.0 * val);
                    } else {
                        self.copy_plane_face(g, a, d, nd - 1 + gh, nd - gh, -1.0, 2.0 * val);
                    }
                }
            }
            BoundaryKind::NormalStressTangentialVelocity(_) => {
                // zero tangential velocity: mirror inversion
                for gh in 1..=GHOST as isize {
                    if side == 0 {
                        self.copy_plane_face(g, a, d, -gh, gh - 1, -1.0, 0.0);
                    } else {
                        self.copy_plane_face(g, a, d, nd - 1 + gh, nd - gh, -1.0, 0.0);
                    }
                }
            }
        }
    }

    /// dst-plane = sign * src-plane + shift, along `axis`, for component `a`.
    fn copy_plane_face(
        &mut self,
        g: &GridSpec,
        a: usize,
        axis: usize,
        dst: isize,
        src: isize,
        sign: f64,
        shift: f64,
    ) {
        let mut lo = [0isize; 3];
        let mut hi = [1isize; 3];
        for d in 0..3 {
            let base = self.extent(a, d) as isize;
            if d < g.dim && d < axis {
                lo[d] = -(GHOST as isize);
                hi[d] = base + GHOST as isize;
            } else if d < g.dim {
                hi[d] = base;
            }
        }
        let (r0, r1) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for b in lo[r1]..hi[r1].max(1) {
            for c in lo[r0]..hi[r0] {
                let (si, sj, sk, di, dj, dk) = match axis {
                    0 => (src, c, b, dst, c, b),
                    1 => (c, src, b, c, dst, b),
                    _ => (c, b, src, c, b, dst),
                };
                let v = self.at(a, si, sj, sk);
                self.set(a, di, dj, dk, sign * v + shift);
            }
        }
    }

    fn set_plane_face(&mut self, a: usize, axis: usize, pos: isize, val: f64) {
        let hi: [isize; 3] = core::array::from_fn(|d| self.extent(a, d) as isize);
        let (r0, r1) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for b in 0..hi[r1].max(1) {
            for c in 0..hi[r0] {
                let (i, j, k) = match axis {
                    0 => (pos, c, b),
                    1 => (c, pos, b),
                    _ => (c, b, pos),
                };
                self.set(a, i, j, k, val);
            }
        }
    }
}

/// Discrete gradient: two-point centered difference per face.
///
/// `p` must have its ghost layer filled. On fully periodic grids this is
/// exactly `-D^T`.
pub fn gradient(g: &GridSpec, p: &CellField, out: &mut FaceField) {
    assert_eq!(p.n, g.n, "mismatched grid spec");
    let h_inv = 1.0 / g.h;
    for a in 0..g.dim {
        for k in 0..out.extent(a, 2).max(1) as isize {
            for j in 0..out.extent(a, 1) as isize {
                for i in 0..out.extent(a, 0) as isize {
                    let (il, jl, kl) = match a {
                        0 => (i - 1, j, k),
                        1 => (i, j - 1, k),
                        _ => (i, j, k - 1),
                    };
                    out.set(a, i, j, k, (p.at(i, j, k) - p.at(il, jl, kl)) * h_inv);
                }
            }
        }
    }
}

/// Discrete divergence: per-cell sum of face differences divided by h.
///
/// Uses only base face slots (wall values included), no ghosts.
pub fn divergence(g: &GridSpec, v: &FaceField, out: &mut CellField) {
    assert_eq!(v.n, g.n, "mismatched grid spec");
    let h_inv = 1.0 / g.h;
    for k in 0..g.n[2] as isize {
        for j in 0..g.n[1] as isize {
            for i in 0..g.n[0] as isize {
                let mut s = v.at(0, i + 1, j, k) - v.at(0, i, j, k);
                s += v.at(1, i, j + 1, k) - v.at(1, i, j, k);
                if g.dim == 3 {
                    s += v.at(2, i, j, k + 1) - v.at(2, i, j, k);
                }
                out.set(i, j, k, s * h_inv);
            }
        }
    }
}

/// Dimensionless vector Laplacian (componentwise (2·dim+1)-point stencil,
/// no 1/h² factor). `v` must be ghost-filled.
///
/// At normal-stress walls the wall-normal face uses the mirror-image ghost,
/// i.e. the one-sided difference; the traction coupling is added by the
/// Stokes operator, not here.
pub fn vector_laplacian(g: &GridSpec, v: &FaceField, out: &mut FaceField) {
    assert_eq!(v.n, g.n, "mismatched grid spec");
    for a in 0..g.dim {
        let dof = face_dof_range(g, a);
        for k in dof[2].0..dof[2].1.max(1) {
            for j in dof[1].0..dof[1].1 {
                for i in dof[0].0..dof[0].1 {
                    let c = v.at(a, i, j, k);
                    let mut s = v.at(a, i + 1, j, k) + v.at(a, i - 1, j, k) - 2.0 * c;
                    s += v.at(a, i, j + 1, k) + v.at(a, i, j - 1, k) - 2.0 * c;
                    if g.dim == 3 {
                        s += v.at(a, i, j, k + 1) + v.at(a, i, j, k - 1) - 2.0 * c;
                    }
                    out.set(a, i, j, k, s);
                }
            }
        }
    }
}

/// Screened vector Helmholtz operator `A v = η h⁻²(β⁻¹ v − L_v v)`.
///
/// `beta = f64::INFINITY` selects steady Stokes (the β⁻¹ term is exactly
/// zero). `v` must be ghost-filled.
pub fn helmholtz_apply(g: &GridSpec, v: &FaceField, beta: f64, eta: f64, out: &mut FaceField) {
    assert!(beta > 0.0, "viscous CFL number must be positive");
    vector_laplacian(g, v, out);
    let c = eta / (g.h * g.h);
    let binv = if beta.is_infinite() { 0.0 } else { 1.0 / beta };
    for a in 0..g.dim {
        let dof = face_dof_range(g, a);
        for k in dof[2].0..dof[2].1.max(1) {
            for j in dof[1].0..dof[1].1 {
                for i in dof[0].0..dof[0].1 {
                    let lv = out.at(a, i, j, k);
                    out.set(a, i, j, k, c * (binv * v.at(a, i, j, k) - lv));
                }
            }
        }
    }
}

/// Index range (per axis) of the degrees of freedom of face component `a`:
/// periodic normal axes exclude the duplicated wrap slot, velocity-Dirichlet
/// walls exclude the prescribed wall faces, stress walls keep them.
pub fn face_dof_range(g: &GridSpec, a: usize) -> [(isize, isize); 3] {
    let mut r = [(0isize, 1isize); 3];
    for d in 0..3 {
        if d >= g.dim {
            r[d] = (0, 1);
            continue;
        }
        let nd = g.n[d] as isize;
        if d != a {
            r[d] = (0, nd);
        } else if g.is_periodic_axis(d) {
            r[d] = (0, nd);
        } else {
            let lo = match g.bc[2 * d] {
                BoundaryKind::VelocityDirichlet(_) => 1,
                _ => 0,
            };
            let hi = match g.bc[2 * d + 1] {
                BoundaryKind::VelocityDirichlet(_) => nd,
                _ => nd + 1,
            };
            r[d] = (lo, hi);
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!(
            (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs())),
            "{a} vs {b} (tol {tol})"
        );
    }

    fn random_cell(g: &GridSpec, rng: &mut impl Rng) -> CellField {
        let mut p = CellField::zeros(g);
        for k in 0..g.n[2] as isize {
            for j in 0..g.n[1] as isize {
                for i in 0..g.n[0] as isize {
                    p.set(i, j, k, rng.gen::<f64>() - 0.5);
                }
            }
        }
        p
    }

    fn random_face(g: &GridSpec, rng: &mut impl Rng) -> FaceField {
        let mut v = FaceField::zeros(g);
        for a in 0..g.dim {
            for k in 0..g.n[2] as isize {
                for j in 0..g.n[1] as isize {
                    for i in 0..g.n[0] as isize {
                        v.set(a, i, j, k, rng.gen::<f64>() - 0.5);
                    }
                }
            }
        }
        v.fill_ghosts(g, true);
        v
    }

    fn dot_faces(g: &GridSpec, u: &FaceField, v: &FaceField) -> f64 {
        let mut s = 0.0;
        for a in 0..g.dim {
            for k in 0..g.n[2] as isize {
                for j in 0..g.n[1] as isize {
                    for i in 0..g.n[0] as isize {
                        s += u.at(a, i, j, k) * v.at(a, i, j, k);
                    }
                }
            }
        }
        s
    }

    fn dot_cells(g: &GridSpec, u: &CellField, v: &CellField) -> f64 {
        let mut s = 0.0;
        for k in 0..g.n[2] as isize {
            for j in 0..g.n[1] as isize {
                for i in 0..g.n[0] as isize {
                    s += u.at(i, j, k) * v.at(i, j, k);
                }
            }
        }
        s
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = GridSpec::square_periodic(2, 8, 0.5);
        let mut p = CellField::zeros(&g);
        p.fill(3.25);
        let mut out = FaceField::zeros(&g);
        gradient(&g, &p, &mut out);
        for a in 0..2 {
            for j in 0..8 {
                for i in 0..8 {
                    assert_eq!(out.at(a, i, j, 0), 0.0);
                }
            }
        }
    }

    #[test]
    fn gradient_of_linear_field() {
        // p = x at cell centers, ghosts set manually so the linear profile
        // extends across the boundary: interior x-faces see slope 1.
        let g = GridSpec::square_periodic(2, 8, 0.25);
        let mut p = CellField::zeros(&g);
        for j in -3..11 {
            for i in -3..11 {
                p.set(i, j, 0, (i as f64 + 0.5) * g.h);
            }
        }
        let mut out = FaceField::zeros(&g);
        gradient(&g, &p, &mut out);
        for j in 0..8 {
            for i in 0..9 {
                assert_close(out.at(0, i, j, 0), 1.0, 1e-14);
                if i < 8 {
                    assert_close(out.at(1, j, i, 0), 0.0, 1e-14);
                }
            }
        }
    }

    #[test]
    fn divergence_of_linear_field_is_one() {
        let g = GridSpec::square_periodic(3, 6, 0.3);
        let mut v = FaceField::zeros(&g);
        for k in 0..6 {
            for j in 0..6 {
                for i in 0..7 {
                    v.set(0, i, j, k, i as f64 * g.h);
                }
            }
        }
        let mut d = CellField::zeros(&g);
        divergence(&g, &v, &mut d);
        for k in 0..6 {
            for j in 0..6 {
                for i in 0..6 {
                    assert_close(d.at(i, j, k), 1.0, 1e-13);
                }
            }
        }
    }

    #[test]
    fn gradient_divergence_adjoint_periodic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = GridSpec::square_periodic(2, 8, 0.7);
        let mut p = random_cell(&g, &mut rng);
        p.fill_ghosts(&g);
        let v = random_face(&g, &mut rng);
        let mut gp = FaceField::zeros(&g);
        gradient(&g, &p, &mut gp);
        let mut dv = CellField::zeros(&g);
        divergence(&g, &v, &mut dv);
        let lhs = dot_faces(&g, &gp, &v);
        let rhs = -dot_cells(&g, &p, &dv);
        assert!((lhs - rhs).abs() <= 1e-13 * lhs.abs().max(rhs.abs()).max(1.0));
    }

    #[test]
    fn div_grad_equals_five_point_laplacian() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = GridSpec::square_periodic(2, 16, 0.5);
        let mut p = random_cell(&g, &mut rng);
        p.fill_ghosts(&g);
        let mut gp = FaceField::zeros(&g);
        gradient(&g, &p, &mut gp);
        gp.fill_ghosts(&g, true);
        let mut dgp = CellField::zeros(&g);
        divergence(&g, &gp, &mut dgp);
        let h2 = g.h * g.h;
        for j in 0..16 {
            for i in 0..16 {
                let lap = (p.at(i + 1, j, 0)
                    + p.at(i - 1, j, 0)
                    + p.at(i, j + 1, 0)
                    + p.at(i, j - 1, 0)
                    - 4.0 * p.at(i, j, 0))
                    / h2;
                assert_close(dgp.at(i, j, 0), lap, 1e-13);
            }
        }
    }

    #[test]
    fn laplacian_plane_wave_eigenvalue() {
        let n = 16usize;
        let g = GridSpec::square_periodic(2, n, 0.5);
        let l = g.len(0);
        let mut v = FaceField::zeros(&g);
        for j in 0..n as isize {
            for i in 0..n as isize + 1 {
                let x = i as f64 * g.h;
                v.set(0, i, j, 0, (2.0 * std::f64::consts::PI * x / l).sin());
            }
        }
        v.fill_ghosts(&g, true);
        let mut out = FaceField::zeros(&g);
        vector_laplacian(&g, &v, &mut out);
        let lam = 2.0 * (2.0 * std::f64::consts::PI * g.h / l).cos() - 2.0;
        for j in 0..n as isize {
            for i in 0..n as isize {
                let expect = lam * v.at(0, i, j, 0);
                assert!((out.at(0, i, j, 0) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn laplacian_symmetric_negative_semidef_periodic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = GridSpec::square_periodic(3, 6, 1.0);
        let u = random_face(&g, &mut rng);
        let w = random_face(&g, &mut rng);
        let mut lu = FaceField::zeros(&g);
        let mut lw = FaceField::zeros(&g);
        vector_laplacian(&g, &u, &mut lu);
        vector_laplacian(&g, &w, &mut lw);
        let a = dot_faces(&g, &lu, &w);
        let b = dot_faces(&g, &u, &lw);
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        assert!(dot_faces(&g, &lu, &u) <= 1e-12);
    }

    #[test]
    fn helmholtz_constant_modes() {
        let g = GridSpec::square_periodic(2, 8, 1.0);
        let mut v = FaceField::zeros(&g);
        v.fill(1.0);
        let mut out = FaceField::zeros(&g);
        // steady Stokes: constants are a null mode
        helmholtz_apply(&g, &v, f64::INFINITY, 2.0, &mut out);
        for j in 0..8 {
            for i in 0..8 {
                assert_eq!(out.at(0, i, j, 0), 0.0);
            }
        }
        // beta = 1, eta = 1, h = 1: output is the identity on constants
        helmholtz_apply(&g, &v, 1.0, 1.0, &mut out);
        for j in 0..8 {
            for i in 0..8 {
                assert_close(out.at(0, i, j, 0), 1.0, 1e-14);
            }
        }
    }

    #[test]
    fn helmholtz_plane_wave_symbol() {
        let n = 8usize;
        let g = GridSpec::square_periodic(2, n, 0.5);
        let l = g.len(1);
        let (beta, eta) = (2.0, 1.3);
        let mut v = FaceField::zeros(&g);
        for j in 0..n as isize {
            for i in 0..n as isize {
                let y = (j as f64 + 0.5) * g.h;
                v.set(0, i, j, 0, (2.0 * std::f64::consts::PI * y / l).cos());
            }
        }
        v.fill_ghosts(&g, true);
        let mut out = FaceField::zeros(&g);
        helmholtz_apply(&g, &v, beta, eta, &mut out);
        let lam = 2.0 * (2.0 * std::f64::consts::PI * g.h / l).cos() - 2.0;
        let sym = eta / (g.h * g.h) * (1.0 / beta - lam);
        for j in 0..n as isize {
            for i in 0..n as isize {
                assert!((out.at(0, i, j, 0) - sym * v.at(0, i, j, 0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ghost_periodic_wrap_1d_example() {
        // periodic field [1,2,3,4] with ghost width 1 -> ghosts (4, 1)
        let g = GridSpec::new_periodic(2, [4, 4, 1], 1.0);
        let mut p = CellField::zeros(&g);
        for j in 0..4 {
            for i in 0..4 {
                p.set(i, j, 0, (i + 1) as f64);
            }
        }
        p.fill_ghosts(&g);
        assert_eq!(p.at(-1, 0, 0), 4.0);
        assert_eq!(p.at(4, 0, 0), 1.0);
    }

    #[test]
    fn ghost_dirichlet_mirror_rules() {
        // no-slip wall: tangential interior value 3 -> ghost -3
        // Dirichlet u_b = 1: interior 3 -> ghost -1
        let mk = |vb: [f64; 3]| {
            GridSpec::new(
                2,
                [4, 4, 1],
                1.0,
                [
                    BoundaryKind::VelocityDirichlet(vb),
                    BoundaryKind::VelocityDirichlet(vb),
                    BoundaryKind::Periodic,
                    BoundaryKind::Periodic,
                    BoundaryKind::Periodic,
                    BoundaryKind::Periodic,
                ],
            )
        };
        let g = mk([0.0, 0.0, 0.0]);
        let mut v = FaceField::zeros(&g);
        for j in 0..4 {
            for i in 0..5 {
                v.set(1, i.min(3), j, 0, 3.0);
                v.set(0, i, j, 0, 3.0);
            }
        }
        v.fill_ghosts(&g, false);
        // tangential component y at x-wall: mirror inversion
        assert_eq!(v.at(1, -1, 0, 0), -3.0);
        // wall-normal component: wall face forced to 0, mirror beyond
        assert_eq!(v.at(0, 0, 0, 0), 0.0);
        assert_eq!(v.at(0, -1, 0, 0), -3.0);

        let g1 = mk([1.0, 1.0, 0.0]);
        let mut v1 = FaceField::zeros(&g1);
        for j in 0..4 {
            for i in 0..4 {
                v1.set(1, i, j, 0, 3.0);
            }
        }
        v1.fill_ghosts(&g1, false);
        assert_eq!(v1.at(1, -1, 0, 0), 2.0 * 1.0 - 3.0);
    }

    #[test]
    fn ghost_fill_preserves_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = GridSpec::square_periodic(2, 6, 1.0);
        let v = random_face(&g, &mut rng);
        let mut w = v.clone();
        w.fill_ghosts(&g, true);
        for a in 0..2 {
            for j in 0..6 {
                for i in 0..6 {
                    assert_eq!(v.at(a, i, j, 0), w.at(a, i, j, 0));
                }
            }
        }
    }
}
