//! Restarted GMRES and flexible GMRES over abstract operators.
//!
//! Right preconditioning throughout, so reported residual norms refer to the
//! unpreconditioned system. FGMRES stores the preconditioned basis vectors
//! and therefore tolerates preconditioners that are not fixed linear
//! operators (inner Krylov solves, in particular).

/// Abstract linear operator on flat vectors.
pub trait LinearOp {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Abstract (possibly nonlinear-in-iterate) preconditioner: y ≈ M⁻¹ x.
pub trait Precond {
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Identity preconditioner.
pub struct NoPrecond;

impl Precond for NoPrecond {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

impl<F: Fn(&[f64], &mut [f64])> Precond for F {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self(x, y)
    }
}

#[derive(Clone, Debug)]
pub struct KrylovConfig {
    /// Relative tolerance on ‖b − Ax‖/‖b‖.
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
    /// Stop after exactly this many iterations regardless of the residual
    /// (inner solves inside preconditioners fix the iteration count).
    pub fixed_iters: Option<usize>,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        KrylovConfig {
            tol: 1e-9,
            max_iter: 500,
            restart: 100,
            fixed_iters: None,
        }
    }
}

impl KrylovConfig {
    pub fn with_tol(tol: f64) -> Self {
        KrylovConfig {
            tol,
            ..Default::default()
        }
    }

    pub fn validate(&self) {
        assert!(self.tol > 0.0, "tolerance must be positive");
        assert!(self.restart >= 1, "restart length must be at least 1");
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    /// Relative residual after each iteration (recursively updated).
    pub history: Vec<f64>,
    pub final_residual: f64,
    /// Numerical breakdown encountered (flagged, solution still returned).
    pub breakdown: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned restarted GMRES. The preconditioner must be a fixed
/// linear operator; use [`fgmres`] otherwise.
pub fn gmres<A: LinearOp, M: Precond>(
    op: &A,
    rhs: &[f64],
    precond: &M,
    cfg: &KrylovConfig,
    x: &mut [f64],
) -> SolveReport {
    gmres_impl(op, rhs, precond, cfg, x, false)
}

/// Flexible GMRES: stores preconditioned basis vectors so the preconditioner
/// may vary between iterations (e.g. inner iterative solves).
pub fn fgmres<A: LinearOp, M: Precond>(
    op: &A,
    rhs: &[f64],
    precond: &M,
    cfg: &KrylovConfig,
    x: &mut [f64],
) -> SolveReport {
    gmres_impl(op, rhs, precond, cfg, x, true)
}

fn gmres_impl<A: LinearOp, M: Precond>(
    op: &A,
    rhs: &[f64],
    precond: &M,
    cfg: &KrylovConfig,
    x: &mut [f64],
    flexible: bool,
) -> SolveReport {
    cfg.validate();
    let n = op.dim();
    assert_eq!(rhs.len(), n);
    assert_eq!(x.len(), n);

    let b_norm = norm(rhs);
    let mut history = Vec::new();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return SolveReport {
            converged: true,
            iterations: 0,
            history,
            final_residual: 0.0,
            breakdown: false,
        };
    }

    let m = cfg.restart;
    let mut total_iters = 0usize;
    let mut breakdown = false;
    let mut scratch = vec![0.0; n];

    let limit = cfg.fixed_iters.unwrap_or(cfg.max_iter);

    'outer: loop {
        // r = b - A x
        op.apply(x, &mut scratch);
        let mut r: Vec<f64> = rhs.iter().zip(&scratch).map(|(b, ax)| b - ax).collect();
        let beta = norm(&r);
        let rel0 = beta / b_norm;
        if total_iters == 0 {
            // starting residual is not recorded in the history
        }
        if rel0 <= cfg.tol && cfg.fixed_iters.is_none() {
            return SolveReport {
                converged: true,
                iterations: total_iters,
                history,
                final_residual: rel0,
                breakdown,
            };
        }
        if total_iters >= limit {
            return SolveReport {
                converged: rel0 <= cfg.tol,
                iterations: total_iters,
                history,
                final_residual: rel0,
                breakdown,
            };
        }

        let cycle = m.min(limit - total_iters);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cycle + 1);
        // preconditioned vectors for FGMRES; for plain GMRES only the
        // Arnoldi basis is kept and x is recovered through M at the end
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(cycle);
        for v in r.iter_mut() {
            *v /= beta;
        }
        basis.push(r);

        let mut hess = vec![vec![0.0; cycle]; cycle + 1];
        let mut cs = vec![0.0; cycle];
        let mut sn = vec![0.0; cycle];
        let mut gvec = vec![0.0; cycle + 1];
        gvec[0] = beta;

        let mut k_used = 0;
        for k in 0..cycle {
            // w = A M⁻¹ v_k
            let mut z = vec![0.0; n];
            precond.apply(&basis[k], &mut z);
            let mut w = vec![0.0; n];
            op.apply(&z, &mut w);
            if flexible {
                zs.push(z);
            } else {
                zs.push(basis[k].clone());
            }

            // modified Gram-Schmidt with one reorthogonalization pass when
            // cancellation is detected
            let w_norm_before = norm(&w);
            for i in 0..=k {
                let hik = dot(&w, &basis[i]);
                hess[i][k] = hik;
                for (wj, vj) in w.iter_mut().zip(&basis[i]) {
                    *wj -= hik * vj;
                }
            }
            if norm(&w) < 0.7 * w_norm_before {
                for i in 0..=k {
                    let corr = dot(&w, &basis[i]);
                    hess[i][k] += corr;
                    for (wj, vj) in w.iter_mut().zip(&basis[i]) {
                        *wj -= corr * vj;
                    }
                }
            }
            let h_next = norm(&w);
            hess[k + 1][k] = h_next;

            // apply accumulated Givens rotations
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let denom = (hess[k][k] * hess[k][k] + h_next * h_next).sqrt();
            if denom == 0.0 || !denom.is_finite() {
                breakdown = true;
                k_used = k;
                total_iters += 1;
                break;
            }
            cs[k] = hess[k][k] / denom;
            sn[k] = h_next / denom;
            hess[k][k] = denom;
            gvec[k + 1] = -sn[k] * gvec[k];
            gvec[k] *= cs[k];

            total_iters += 1;
            k_used = k + 1;
            let rel = gvec[k + 1].abs() / b_norm;
            history.push(rel);

            let happy = h_next <= 1e-14 * b_norm;
            if happy {
                breakdown = false; // happy breakdown: exact solution reached
            }
            if ((rel <= cfg.tol || happy) && cfg.fixed_iters.is_none())
                || total_iters >= limit
            {
                update_solution(x, &hess, &gvec, &zs, k_used, precond, flexible, n);
                if (rel <= cfg.tol || happy) && cfg.fixed_iters.is_none() {
                    return SolveReport {
                        converged: true,
                        iterations: total_iters,
                        history,
                        final_residual: rel,
                        breakdown,
                    };
                }
                if total_iters >= limit {
                    return SolveReport {
                        converged: rel <= cfg.tol,
                        iterations: total_iters,
                        history,
                        final_residual: rel,
                        breakdown,
                    };
                }
            }
            if happy {
                // exact solution inside the cycle
                update_solution(x, &hess, &gvec, &zs, k_used, precond, flexible, n);
                return SolveReport {
                    converged: true,
                    iterations: total_iters,
                    history,
                    final_residual: gvec[k + 1].abs() / b_norm,
                    breakdown,
                };
            }
            if k + 1 < cycle {
                for (wj, _) in w.iter_mut().zip(0..0) {
                    let _ = wj;
                }
                let mut v_next = w;
                for v in v_next.iter_mut() {
                    *v /= h_next;
                }
                basis.push(v_next);
            }
        }

        update_solution(x, &hess, &gvec, &zs, k_used, precond, flexible, n);
        if breakdown {
            let final_res = {
                op.apply(x, &mut scratch);
                let r2: f64 = rhs
                    .iter()
                    .zip(&scratch)
                    .map(|(b, ax)| (b - ax) * (b - ax))
                    .sum();
                r2.sqrt() / b_norm
            };
            return SolveReport {
                converged: final_res <= cfg.tol,
                iterations: total_iters,
                history,
                final_residual: final_res,
                breakdown: true,
            };
        }
        if total_iters >= limit {
            continue 'outer; // handled at loop head (true residual recheck)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update_solution<M: Precond>(
    x: &mut [f64],
    hess: &[Vec<f64>],
    gvec: &[f64],
    zs: &[Vec<f64>],
    k: usize,
    precond: &M,
    flexible: bool,
    n: usize,
) {
    if k == 0 {
        return;
    }
    // back substitution on the k x k triangular system
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = gvec[i];
        for j in (i + 1)..k {
            s -= hess[i][j] * y[j];
        }
        y[i] = s / hess[i][i];
    }
    if flexible {
        for (j, yj) in y.iter().enumerate() {
            for (xi, zi) in x.iter_mut().zip(&zs[j]) {
                *xi += yj * zi;
            }
        }
    } else {
        // x += M⁻¹ (V y) for right preconditioning with a fixed M
        let mut vy = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            for (vi, zi) in vy.iter_mut().zip(&zs[j]) {
                *vi += yj * zi;
            }
        }
        let mut mz = vec![0.0; n];
        precond.apply(&vy, &mut mz);
        for (xi, zi) in x.iter_mut().zip(&mz) {
            *xi += zi;
        }
    }
}
