//! Constrained-solver integration tests on the icosphere-shell model in a
//! periodic steady-Stokes box.

use ibis::constrained::{
    solve_constrained, ConstrainedContext, MobilitySource, SolverConfig,
};
use ibis::geometry::shell_markers;
use ibis::grid::{divergence, CellField, GridSpec};

use ibis::kernels::KernelKind;
use ibis::mobility::{exact_mobility, hydrodynamic_radius};
use ibis::multigrid::MgHierarchy;
use ibis::stokes::StokesParams;

fn shell_setup(n: usize, level: usize) -> (GridSpec, ibis::kernels::MarkerSet) {
    let g = GridSpec::square_periodic(3, n, 1.0);
    // marker spacing s ≈ 2h fixes the shell radius per level
    let r_g = 2.0 / ibis::geometry::icosphere_spacing(level, 1.0);
    let c = 0.5 * g.len(0);
    let mut m = shell_markers(level, r_g, [c, c, c]);
    m.set_velocity([1.0, 0.0, 0.0]);
    (g, m)
}

#[test]
fn icosphere_162_no_slip_and_drag() {
    let (g, m) = shell_setup(32, 3);
    let mg = MgHierarchy::build(&g);
    let params = StokesParams::steady(1.0);
    let ctx = ConstrainedContext::new(&g, params, &mg, &m, KernelKind::Peskin4);
    let mut cfg = SolverConfig::for_grid(&g, KernelKind::Peskin4);
    cfg.mobility = MobilitySource::Rpy { a_over_h: None };
    let rhs = ibis::grid::FaceField::zeros(&g);
    let (state, log) = solve_constrained(&ctx, &rhs, &cfg, None).expect("solve");
    println!(
        "outer iterations: {}, P_S applications: {}",
        log.entries.len(),
        log.total_ps_applications()
    );

    // no-slip exactness at the markers
    let mut jv = vec![[0.0; 3]; m.len()];
    let mut vf = state.v.clone();
    vf.fill_ghosts(&g, true);
    ctx.cpl.interpolate(&vf, &mut jv);
    let mut slip_inf: f64 = 0.0;
    for s in &jv {
        slip_inf = slip_inf.max((s[0] - 1.0).abs().max(s[1].abs()).max(s[2].abs()));
    }
    println!("max slip: {slip_inf:.3e}");
    assert!(slip_inf <= 1e-8, "no-slip violated: {slip_inf}");

    // discrete incompressibility
    let mut d = CellField::zeros(&g);
    divergence(&g, &state.v, &mut d);
    let dn = d.data.iter().map(|x| x * x).sum::<f64>().sqrt();
    println!("div norm: {dn:.3e}");
    assert!(dn < 1e-7);

    // total drag F = ΣΛ (force on the fluid, along V) with small
    // transverse part
    let f = state.total_force(3);
    let fpar = f[0];
    let fperp = (f[1] * f[1] + f[2] * f[2]).sqrt();
    println!("drag {fpar:.4}, perp ratio {:.3e}", fperp / fpar);
    assert!(fpar > 0.0);
    assert!(fperp / fpar < 0.02);

    // hydrodynamic radius from the periodic drag formula
    let rh = hydrodynamic_radius(fpar, g.len(0), 3).expect("R_h");
    let r_g = 2.0 / ibis::geometry::icosphere_spacing(3, 1.0);
    println!("R_h/R_g = {:.4} (R_g = {r_g:.3})", rh / r_g);
    assert!(rh / r_g > 1.0 && rh / r_g < 1.35, "R_h/R_g = {}", rh / r_g);
}

#[test]
fn exact_mobility_two_outer_iterations() {
    let (g, m) = shell_setup(32, 3);
    let mg = MgHierarchy::build(&g);
    let params = StokesParams::steady(1.0);
    let t0 = std::time::Instant::now();
    let (mob, asym) = exact_mobility(&g, &params, &mg, &m, KernelKind::Peskin4, 1e-10);
    println!(
        "exact mobility: {:.1}s, asymmetry {asym:.2e}",
        t0.elapsed().as_secs_f64()
    );
    assert!(asym < 1e-6, "asymmetry {asym}");
    let ctx = ConstrainedContext::new(&g, params, &mg, &m, KernelKind::Peskin4);
    let mut cfg = SolverConfig::for_grid(&g, KernelKind::Peskin4);
    cfg.mobility = MobilitySource::Precomputed(std::sync::Arc::new(mob));
    cfg.schur_lower_triangular = false;
    cfg.inner_tol = Some(1e-11);
    let rhs = ibis::grid::FaceField::zeros(&g);
    let (_, log) = solve_constrained(&ctx, &rhs, &cfg, None).expect("solve");
    println!("outer iterations with exact mobility: {}", log.entries.len());
    assert!(
        log.entries.len() <= 2,
        "took {} outer iterations",
        log.entries.len()
    );
}
