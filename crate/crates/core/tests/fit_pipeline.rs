//! Smoke tests of the mobility fitting pipeline at toy scale; production
//! coefficients are generated at larger grids by the bench CLI.

use ibis::kernels::KernelKind;
use ibis::mobility::pipeline::{fit_mobility_data, FitPipelineConfig};

#[test]
fn pipeline_3d_small_grid() {
    let mut cfg = FitPipelineConfig::new(KernelKind::Peskin4, 3);
    cfg.grid_n = 32;
    cfg.n_markers = 14;
    cfg.betas = vec![0.0, 0.5, 10.0];
    cfg.solver_tol = 1e-8;
    let t0 = std::time::Instant::now();
    let out = fit_mobility_data(&cfg);
    println!(
        "3d pipeline: {:.1}s, a/h = {:.4}, cv = {:.4}, median dev {:.3}",
        t0.elapsed().as_secs_f64(),
        out.report.a_over_h,
        out.report.cv,
        out.report.steady_median_rel_dev
    );
    assert!(out.report.a_over_h > 1.0 && out.report.a_over_h < 1.5);
    assert!(out.report.cv > 0.05 && out.report.cv < 2.0);
    // round-trip through the file format
    let text = out.coefficients.to_text();
    let c2 = ibis::mobility::fits::FitCoefficients::from_text(&text).unwrap();
    assert_eq!(c2.betas, out.coefficients.betas);
    // evaluation sanity: steady f decays, finite-beta f(0) positive
    let (f4, _) = c2.eval(4.0, f64::INFINITY, 1.0, 1.0, Some(32.0));
    let (f8, _) = c2.eval(8.0, f64::INFINITY, 1.0, 1.0, Some(32.0));
    assert!(f4 > f8, "steady f not decaying: {f4} vs {f8}");
    let (f0, g0) = c2.eval(0.0, 0.5, 1.0, 1.0, None);
    assert!(f0 > 0.0 && g0 == 0.0);
}

#[test]
fn pipeline_2d_small_grid() {
    let mut cfg = FitPipelineConfig::new(KernelKind::Peskin4, 2);
    cfg.grid_n = 128;
    cfg.n_markers = 24;
    cfg.betas = vec![0.0, 0.5, 5.0];
    cfg.solver_tol = 1e-8;
    let t0 = std::time::Instant::now();
    let out = fit_mobility_data(&cfg);
    println!(
        "2d pipeline: {:.1}s, a/h = {:.4}, cv = {:.4}, median dev {:.3}",
        t0.elapsed().as_secs_f64(),
        out.report.a_over_h,
        out.report.cv,
        out.report.steady_median_rel_dev
    );
    assert!(out.report.a_over_h > 0.9 && out.report.a_over_h < 1.6);
}
