//! Small Levenberg-Marquardt solver with numeric Jacobian, parameter
//! clamping, and multi-start, used to fit the rational mobility forms
//! (nonconvex in their coefficients).

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Residual evaluator: writes the residual vector for parameters `theta`.
/// Implementations clamp parameters to their feasible box before use.
pub trait ResidualFn {
    fn n_residuals(&self) -> usize;
    fn n_params(&self) -> usize;
    fn clamp(&self, theta: &mut [f64]);
    fn eval(&self, theta: &[f64], out: &mut [f64]);
}

fn cost(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|x| x * x).sum::<f64>()
}

/// One bounded trust-region (LM) run from `theta0`.
pub fn lm_fit<F: ResidualFn>(f: &F, theta0: &[f64], max_iter: usize) -> (Vec<f64>, f64) {
    let m = f.n_residuals();
    let n = f.n_params();
    let mut theta = theta0.to_vec();
    f.clamp(&mut theta);
    let mut r = vec![0.0; m];
    f.eval(&theta, &mut r);
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    let mut jac = DMatrix::zeros(m, n);
    let mut rp = vec![0.0; m];
    for _ in 0..max_iter {
        // forward-difference Jacobian
        for p in 0..n {
            let eps = 1e-6 * theta[p].abs().max(1e-3);
            let mut tp = theta.clone();
            tp[p] += eps;
            f.clamp(&mut tp);
            let de = tp[p] - theta[p];
            if de == 0.0 {
                for i in 0..m {
                    jac[(i, p)] = 0.0;
                }
                continue;
            }
            f.eval(&tp, &mut rp);
            for i in 0..m {
                jac[(i, p)] = (rp[i] - r[i]) / de;
            }
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        if g.amax() < 1e-14 {
            break;
        }
        let mut improved = false;
        for _ in 0..12 {
            let mut a = jtj.clone();
            for p in 0..n {
                a[(p, p)] += lambda * (jtj[(p, p)].abs().max(1e-12));
            }
            let delta = match a.lu().solve(&(-&g)) {
                Some(d) => d,
                None => break,
            };
            let mut tn = theta.clone();
            for p in 0..n {
                tn[p] += delta[p];
            }
            f.clamp(&mut tn);
            f.eval(&tn, &mut rp);
            let cn = cost(&rp);
            if cn < c && cn.is_finite() {
                let rel = (c - cn) / c.max(1e-300);
                theta = tn;
                r.copy_from_slice(&rp);
                c = cn;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel < 1e-12 {
                    return (theta, c);
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e10 {
                break;
            }
        }
        if !improved {
            break;
        }
    }
    (theta, c)
}

/// Multi-start LM: the given starts plus seeded random perturbations;
/// returns the best parameters found.
pub fn multi_start<F: ResidualFn>(
    f: &F,
    starts: &[Vec<f64>],
    extra_random: usize,
    seed: u64,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut try_start = |t0: &[f64], best: &mut Option<(Vec<f64>, f64)>| {
        let (t, c) = lm_fit(f, t0, max_iter);
        if best.as_ref().map(|(_, bc)| c < *bc).unwrap_or(true) {
            *best = Some((t, c));
        }
    };
    for s in starts {
        try_start(s, &mut best);
    }
    let base = starts.first().cloned().unwrap_or_else(|| vec![1.0; f.n_params()]);
    for _ in 0..extra_random {
        let t0: Vec<f64> = base
            .iter()
            .map(|v| v * (0.2 + 1.6 * rng.gen::<f64>()) + 0.1 * (rng.gen::<f64>() - 0.5))
            .collect();
        try_start(&t0, &mut best);
    }
    best.expect("at least one start")
}

#[cfg(test)]
mod tests {
    use super::*;

    struct ExpFit {
        xs: Vec<f64>,
        ys: Vec<f64>,
    }

    impl ResidualFn for ExpFit {
        fn n_residuals(&self) -> usize {
            self.xs.len()
        }
        fn n_params(&self) -> usize {
            2
        }
        fn clamp(&self, theta: &mut [f64]) {
            theta[1] = theta[1].clamp(0.0, 50.0);
        }
        fn eval(&self, theta: &[f64], out: &mut [f64]) {
            for (i, (&x, &y)) in self.xs.iter().zip(&self.ys).enumerate() {
                out[i] = theta[0] * (-theta[1] * x).exp() - y;
            }
        }
    }

    #[test]
    fn recovers_exponential_parameters() {
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * (-1.7 * x).exp()).collect();
        let f = ExpFit { xs, ys };
        let (theta, c) = multi_start(&f, &[vec![1.0, 1.0]], 4, 7, 200);
        assert!(c < 1e-16, "cost {c}");
        assert!((theta[0] - 2.5).abs() < 1e-6);
        assert!((theta[1] - 1.7).abs() < 1e-6);
    }
}
