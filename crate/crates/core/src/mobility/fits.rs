//! Empirical mobility fit forms and their evaluation.
//!
//! Coefficients are regenerated by the fitting pipeline for each (kernel,
//! dimension) pair and stored as versioned data files; the fit forms are
//! semi-empirical rational functions constrained by the exact asymptotics
//! (Stokes drag at r = 0, Oseen/dipole tails at large r). All coefficient
//! arrays are dimensionless (fitted with η = 1, h = 1); evaluation rescales
//! by the caller's viscosity, grid spacing, and box length.

use crate::kernels::KernelKind;

/// Fitted mobility coefficients for one kernel and dimension.
///
/// Layouts (all per normalized distance x = r/h):
/// - 3D steady: `steady_f = [b0..b4]` with
///   f̃ = x/(3a/4h + b0 x²) for x < 0.8, else b1·x·e^{−b2 x} + (b3x²+x⁴)/(1+b4x²+x⁴);
///   `steady_g = [b5, b6]`, g̃ = x³/(b5 + b6x² + x³).
/// - 3D finite β: `fbeta[i] = [a0..a9]`, `gbeta[i] = [b0..b5]`,
///   self-mobility φ₀(β) = (1 + z1√β + z2β)/(z0 + z3β + 6π(a/h)z2β²).
/// - 2D steady: `steady_f = [a0..a4]`, f̃ = (a0x²+a1x³+a2x³ln x)/(1+a3x+a4x²+a2x³);
///   `steady_g = [b0..b3]`, g̃ = (b0x²+b1x³)/(1+b2x+b3x²+b1x³).
/// - 2D finite β: `fbeta[i] = [a0,a1,a2,a3,p1,b1,b2]`,
///   `gbeta[i] = [c0,c1,c2,c3,p2,p3]`,
///   φ₀(β) = (z0 + z1β³ln β)/(1 + z2β + z3β² + z4β⁴).
#[derive(Clone, Debug)]
pub struct FitCoefficients {
    pub kernel: KernelKind,
    pub dim: usize,
    pub grid_n: usize,
    pub box_over_h: f64,
    pub date: String,
    /// Measured hydrodynamic radius of a single marker over h.
    pub a_over_h: f64,
    /// Marker volume constant c_V = V_m / h^dim, measured from the β = 0
    /// self-interaction.
    pub cv: f64,
    pub z: Vec<f64>,
    pub steady_f: Vec<f64>,
    pub steady_g: Vec<f64>,
    pub betas: Vec<f64>,
    pub fbeta: Vec<Vec<f64>>,
    pub gbeta: Vec<Vec<f64>>,
    /// Measured φ₀ at the β nodes (diagnostic).
    pub phi0: Vec<f64>,
}

const PI: f64 = std::f64::consts::PI;

/// Distances below this (in units of h) use the self-mobility branch.
pub const SELF_BRANCH_X: f64 = 0.1;

/// Breakpoint of the 3D steady-Stokes f-fit.
pub const STEADY_3D_BREAK: f64 = 0.8;

impl FitCoefficients {
    /// Normalized self-mobility φ₀(β) from the rational fit.
    pub fn phi0_of_beta(&self, beta: f64) -> f64 {
        let z = &self.z;
        if self.dim == 3 {
            (1.0 + z[1] * beta.sqrt() + z[2] * beta)
                / (z[0] + z[3] * beta + 6.0 * PI * self.a_over_h * z[2] * beta * beta)
        } else {
            let lnb = if beta > 0.0 { beta.ln() } else { 0.0 };
            (z[0] + z[1] * beta.powi(3) * lnb)
                / (1.0 + z[2] * beta + z[3] * beta * beta + z[4] * beta.powi(4))
        }
    }

    /// Steady-Stokes normalized f̃(x).
    pub fn steady_f_tilde(&self, x: f64) -> f64 {
        let c = &self.steady_f;
        if self.dim == 3 {
            if x < STEADY_3D_BREAK {
                x / (0.75 * self.a_over_h + c[0] * x * x)
            } else {
                c[1] * x * (-c[2] * x).exp()
                    + (c[3] * x * x + x.powi(4)) / (1.0 + c[4] * x * x + x.powi(4))
            }
        } else {
            (c[0] * x * x + c[1] * x.powi(3) + c[2] * x.powi(3) * x.ln())
                / (1.0 + c[3] * x + c[4] * x * x + c[2] * x.powi(3))
        }
    }

    /// Steady-Stokes normalized g̃(x).
    pub fn steady_g_tilde(&self, x: f64) -> f64 {
        let c = &self.steady_g;
        if self.dim == 3 {
            x.powi(3) / (c[0] + c[1] * x * x + x.powi(3))
        } else {
            (c[0] * x * x + c[1] * x.powi(3))
                / (1.0 + c[2] * x + c[3] * x * x + c[1] * x.powi(3))
        }
    }

    /// Finite-β normalized f̃_β(x) for a given coefficient row.
    pub fn fbeta_tilde(a: &[f64], phi0: f64, x: f64, beta: f64, dim: usize) -> f64 {
        if dim == 3 {
            let visc = if beta > 0.0 {
                x.powi(7) * (-a[3] * x / beta.sqrt()).exp() / (2.0 * beta)
            } else {
                0.0
            };
            phi0 * (-4.0 * PI * x.powi(3) + a[4] * (x.powi(5) - visc))
                / (1.0
                    + a[0] * x
                    + a[1] * x * x
                    + a[2] * x.powi(3)
                    + a[4] * x.powi(5) * phi0)
                + (a[5] * x.powi(4) * (-a[6] * x).exp() + a[7] * x.powi(4))
                    / (1.0 + a[8] * x.powi(3) + a[9] * x.powi(5))
        } else {
            // [a0, a1, a2, a3, p1, b1, b2]
            let visc = if beta > 0.0 {
                x.powi(3) * x.ln() / (beta * (a[0] + 2.0 * x)) * (-a[4] * x / beta.sqrt()).exp()
            } else {
                0.0
            };
            visc + (a[1] * x * x + a[2] * x.powi(3) + a[3] * x.powi(4))
                / (1.0 + a[5] * x * x + a[6] * x.powi(3) + a[3] * x.powi(4))
        }
    }

    /// Finite-β normalized g̃_β(x) for a given coefficient row.
    pub fn gbeta_tilde(b: &[f64], phi0: f64, x: f64, beta: f64, dim: usize) -> f64 {
        if dim == 3 {
            let visc = if beta > 0.0 {
                x.powi(7) * (-b[0] * x / beta.sqrt()).exp() / (6.0 * beta)
            } else {
                0.0
            };
            phi0 * b[5] * (x.powi(5) + visc)
                / (1.0
                    + b[1] * x
                    + b[2] * x * x
                    + b[3] * x.powi(3)
                    + b[4] * x.powi(4)
                    + b[5] * phi0 * x.powi(5))
        } else {
            // [c0, c1, c2, c3, p2, p3]
            let visc = if beta > 0.0 {
                x.powi(3) / (beta * (b[0] + 4.0 * x)) * (-b[4] * x / beta.sqrt()).exp()
            } else {
                0.0
            };
            visc + x.powi(3) / ((-b[5] * x).exp() * (b[1] + b[2] * x + b[3] * x * x) + x.powi(3))
        }
    }

    /// Coefficient rows at β: piecewise-linear interpolation between the
    /// tabulated nodes. Returns None above the table (steady branch).
    fn interp_rows(&self, beta: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let bs = &self.betas;
        if bs.is_empty() || beta > *bs.last().unwrap() {
            return None;
        }
        let mut hi = 0;
        while bs[hi] < beta {
            hi += 1;
        }
        if hi == 0 || (bs[hi] - beta).abs() == 0.0 {
            return Some((self.fbeta[hi].clone(), self.gbeta[hi].clone()));
        }
        let lo = hi - 1;
        let t = (beta - bs[lo]) / (bs[hi] - bs[lo]);
        let lerp = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
        };
        Some((
            lerp(&self.fbeta[lo], &self.fbeta[hi]),
            lerp(&self.gbeta[lo], &self.gbeta[hi]),
        ))
    }

    /// Evaluate the pair mobility (f, g) at distance `r` for viscous CFL
    /// number `beta` (∞ for steady Stokes), viscosity `eta`, grid spacing
    /// `h`, and optional periodic box length `box_len`.
    ///
    /// In 3D the steady values carry the periodic Oseen correction
    /// −2.84 (6πηl)⁻¹ when a box length is given. 2D steady Stokes requires
    /// a box length: the self-mobility diverges logarithmically with system
    /// size (Stokes paradox).
    pub fn eval(&self, r: f64, beta: f64, eta: f64, h: f64, box_len: Option<f64>) -> (f64, f64) {
        let x = r / h;
        let steady = beta.is_infinite()
            || (!self.betas.is_empty() && beta > *self.betas.last().unwrap())
            || self.betas.is_empty();
        if self.dim == 3 {
            if steady {
                let corr = box_len.map(|l| 2.84 / (6.0 * PI * eta * l)).unwrap_or(0.0);
                if x < SELF_BRANCH_X {
                    return (1.0 / (6.0 * PI * eta * self.a_over_h * h) - corr, 0.0);
                }
                let f = self.steady_f_tilde(x) / (8.0 * PI * eta * r) - corr;
                let g = self.steady_g_tilde(x) / (8.0 * PI * eta * r);
                (f, g)
            } else {
                let phi0 = self.phi0_of_beta(beta);
                if x < SELF_BRANCH_X {
                    return (beta * phi0 / (eta * h), 0.0);
                }
                let (fa, gb) = self.interp_rows(beta).expect("finite beta row");
                let ft = Self::fbeta_tilde(&fa, phi0, x, beta, 3);
                let gt = Self::gbeta_tilde(&gb, phi0, x, beta, 3);
                let f = -beta / (eta * h) * ft / (4.0 * PI * x.powi(3));
                let g = beta / (eta * h) * 3.0 * gt / (4.0 * PI * x.powi(3));
                (f, g)
            }
        } else if steady {
            let l = box_len.expect("2D steady Stokes requires a box length (Stokes paradox)");
            let f_inf0 = (l / (3.708 * self.a_over_h * h)).ln() / (4.0 * PI * eta);
            if x < SELF_BRANCH_X {
                return (f_inf0, 0.0);
            }
            let f = f_inf0 - self.steady_f_tilde(x) / (4.0 * PI * eta);
            let g = self.steady_g_tilde(x) / (4.0 * PI * eta);
            (f, g)
        } else {
            let phi0 = self.phi0_of_beta(beta);
            if x < SELF_BRANCH_X {
                return (beta * phi0 / eta, 0.0);
            }
            let (fa, gb) = self.interp_rows(beta).expect("finite beta row");
            let ft = Self::fbeta_tilde(&fa, phi0, x, beta, 2);
            let gt = Self::gbeta_tilde(&gb, phi0, x, beta, 2);
            let f = -beta / (2.0 * PI * eta * x * x) * ft;
            let g = beta / (PI * eta * x * x) * gt;
            (f, g)
        }
    }

    /// Serialize in the coefficient-file format (header then per-β rows).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# mobility fit coefficients\n");
        s.push_str(&format!("kernel = {}\n", self.kernel.name()));
        s.push_str(&format!("dim = {}\n", self.dim));
        s.push_str(&format!("grid = {}\n", self.grid_n));
        s.push_str(&format!("box_over_h = {}\n", self.box_over_h));
        s.push_str(&format!("date = {}\n", self.date));
        s.push_str(&format!("a_over_h = {:.16e}\n", self.a_over_h));
        s.push_str(&format!("cv = {:.16e}\n", self.cv));
        let row = |v: &[f64]| -> String {
            v.iter()
                .map(|x| format!("{x:.16e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        s.push_str(&format!("z = {}\n", row(&self.z)));
        s.push_str(&format!("steady_f = {}\n", row(&self.steady_f)));
        s.push_str(&format!("steady_g = {}\n", row(&self.steady_g)));
        for (i, b) in self.betas.iter().enumerate() {
            s.push_str(&format!(
                "beta {} : {} : {} : {:.16e}\n",
                b,
                row(&self.fbeta[i]),
                row(&self.gbeta[i]),
                self.phi0[i]
            ));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<FitCoefficients, String> {
        let mut kernel = None;
        let mut dim = 0usize;
        let mut grid_n = 0usize;
        let mut box_over_h: f64 = 0.0;
        let mut date = String::new();
        let mut a_over_h: f64 = 0.0;
        let mut cv: f64 = 0.0;
        let mut z = Vec::new();
        let mut steady_f = Vec::new();
        let mut steady_g = Vec::new();
        let mut betas = Vec::new();
        let mut fbeta = Vec::new();
        let mut gbeta = Vec::new();
        let mut phi0 = Vec::new();
        let parse_row = |s: &str| -> Result<Vec<f64>, String> {
            s.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| e.to_string()))
                .collect()
        };
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: &str| format!("fit file line {}: {}", ln + 1, m);
            if let Some(rest) = line.strip_prefix("beta ") {
                let parts: Vec<&str> = rest.split(':').collect();
                if parts.len() != 4 {
                    return Err(err("expected 'beta b : f... : g... : phi0'"));
                }
                betas.push(parts[0].trim().parse::<f64>().map_err(|e| err(&e.to_string()))?);
                fbeta.push(parse_row(parts[1])?);
                gbeta.push(parse_row(parts[2])?);
                phi0.push(parts[3].trim().parse::<f64>().map_err(|e| err(&e.to_string()))?);
                continue;
            }
            let (key, val) = line
                .split_once('=')
                .ok_or_else(|| err("expected 'key = value'"))?;
            let val = val.trim();
            match key.trim() {
                "kernel" => kernel = KernelKind::parse(val),
                "dim" => dim = val.parse().map_err(|_| err("bad dim"))?,
                "grid" => grid_n = val.parse().map_err(|_| err("bad grid"))?,
                "box_over_h" => box_over_h = val.parse().map_err(|_| err("bad box"))?,
                "date" => date = val.to_string(),
                "a_over_h" => a_over_h = val.parse().map_err(|_| err("bad a_over_h"))?,
                "cv" => cv = val.parse().map_err(|_| err("bad cv"))?,
                "z" => z = parse_row(val)?,
                "steady_f" => steady_f = parse_row(val)?,
                "steady_g" => steady_g = parse_row(val)?,
                other => return Err(err(&format!("unknown key '{other}'"))),
            }
        }
        let kernel = kernel.ok_or("fit file missing kernel")?;
        if dim != 2 && dim != 3 {
            return Err("fit file missing/invalid dim".into());
        }
        if !(a_over_h.is_finite() && a_over_h > 0.0) {
            return Err("fit file has invalid a_over_h".into());
        }
        Ok(FitCoefficients {
            kernel,
            dim,
            grid_n,
            box_over_h,
            date,
            a_over_h,
            cv,
            z,
            steady_f,
            steady_g,
            betas,
            fbeta,
            gbeta,
            phi0,
        })
    }
}

/// Coefficients shipped with the crate, regenerated by `fit_mobility_data`.
pub fn builtin_coefficients(kernel: KernelKind, dim: usize) -> Option<FitCoefficients> {
    let text = match (kernel, dim) {
        (KernelKind::Peskin4, 3) => include_str!("../../data/fit_peskin4_3d.txt"),
        (KernelKind::Peskin4, 2) => include_str!("../../data/fit_peskin4_2d.txt"),
        (KernelKind::Six, 3) => include_str!("../../data/fit_six_3d.txt"),
        (KernelKind::Six, 2) => include_str!("../../data/fit_six_2d.txt"),
        (KernelKind::Peskin3, 3) => include_str!("../../data/fit_peskin3_3d.txt"),
        (KernelKind::Peskin3, 2) => include_str!("../../data/fit_peskin3_2d.txt"),
        _ => return None,
    };
    FitCoefficients::from_text(text).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dummy_3d() -> FitCoefficients {
        FitCoefficients {
            kernel: KernelKind::Peskin4,
            dim: 3,
            grid_n: 64,
            box_over_h: 64.0,
            date: "test".into(),
            a_over_h: 1.25,
            cv: 0.3,
            z: vec![2.0 / (3.0 * 0.3), 0.5, 0.2, 1.0],
            steady_f: vec![0.2, 0.1, 1.0, 0.5, 1.0],
            steady_g: vec![3.0, 1.0],
            betas: vec![0.0, 1.0, 10.0],
            fbeta: vec![vec![0.1; 10], vec![0.2; 10], vec![0.3; 10]],
            gbeta: vec![vec![0.1; 6], vec![0.2; 6], vec![0.3; 6]],
            phi0: vec![1.0, 0.5, 0.1],
        }
    }

    #[test]
    fn text_round_trip() {
        let c = dummy_3d();
        let t = c.to_text();
        let c2 = FitCoefficients::from_text(&t).unwrap();
        assert_eq!(c2.kernel, c.kernel);
        assert_eq!(c2.dim, 3);
        assert_eq!(c2.z, c.z);
        assert_eq!(c2.betas, c.betas);
        assert_eq!(c2.fbeta, c.fbeta);
        assert_eq!(c2.phi0, c.phi0);
    }

    #[test]
    fn steady_self_mobility_is_stokes_drag() {
        let c = dummy_3d();
        let eta = 1.7;
        let h = 0.5;
        let (f, g) = c.eval(0.0, f64::INFINITY, eta, h, None);
        let expect = 1.0 / (6.0 * std::f64::consts::PI * eta * c.a_over_h * h);
        assert!((f - expect).abs() < 1e-15);
        assert_eq!(g, 0.0);
    }

    #[test]
    fn beta_interpolation_is_continuous_at_nodes() {
        let c = dummy_3d();
        for &b in &c.betas[1..] {
            let (f1, g1) = c.eval(3.0, b - 1e-9, 1.0, 1.0, None);
            let (f2, g2) = c.eval(3.0, b, 1.0, 1.0, None);
            assert!((f1 - f2).abs() <= 1e-6 * f2.abs().max(1e-12), "{f1} vs {f2}");
            assert!((g1 - g2).abs() <= 1e-6 * g2.abs().max(1e-12));
        }
    }

    #[test]
    fn finite_beta_r0_matches_phi0() {
        let c = dummy_3d();
        let beta = 0.7;
        let (f, _) = c.eval(0.0, beta, 2.0, 0.25, None);
        let expect = beta * c.phi0_of_beta(beta) / (2.0 * 0.25);
        assert!((f - expect).abs() < 1e-15);
    }
}
