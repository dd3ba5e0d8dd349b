mod common;

use rev_euler::diagnostics::lipschitz_estimate;
use rev_euler::iteration::*;
use rev_euler::kernels::{second_moment, KernelSpec};
use rev_euler::{GridSpec, Point3, TimeSlab, VectorField};

fn smooth_state(engine: &Engine, grid: GridSpec) -> IterationState {
    let field = |x: Point3| {
        let b = (-(x.x1 * x.x1 + x.x2 * x.x2 + x.x3 * x.x3) / 2.0).exp();
        [b * (x.x2 + 0.3), b * (x.x3 - x.x1), b * (1.0 + x.x1 * x.x2)]
    };
    let v = VectorField::sample(grid, field);
    let slab = TimeSlab::new(vec![0.0], vec![v]).unwrap();
    IterationState::from_velocity(engine, 0.1, &slab, 0).unwrap()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn first_step_and_rewritten_forms_agree_on_smooth_fields() {
    let grid = GridSpec::new(6.0, 32).unwrap();
    let engine = Engine::new(grid, 0, 100);
    let state = smooth_state(&engine, grid);
    let base = TermOptions::from_config(&IterationConfig::default());
    for eps in [1e-2, 1e-3, 1e-4] {
        let opts = TermOptions { eps, ..base };
        for i in 0..3 {
            let b1 = burgers_term(&engine, &state, i, Form::FirstStep, &opts).unwrap();
            let b2 = burgers_term(&engine, &state, i, Form::Rewritten, &opts).unwrap();
            let l1 = leray_term(&engine, &state, i, Form::FirstStep, &opts).unwrap();
            let l2 = leray_term(&engine, &state, i, Form::Rewritten, &opts).unwrap();
            let scale = b2.fields[0].sup().max(l2.fields[0].sup());
            assert!(scale > 1e-3);
            assert!(sup_diff(&b1.fields[0].values, &b2.fields[0].values) < 1e-11 * scale.max(1.0), "B{i} eps={eps}");
            assert!(sup_diff(&l1.fields[0].values, &l2.fields[0].values) < 1e-11 * scale.max(1.0), "L{i} eps={eps}");
        }
    }
}

#[test]
fn printed_third_factor_differs_from_symmetric_one() {
    let grid = GridSpec::new(6.0, 32).unwrap();
    let engine = Engine::new(grid, 0, 100);
    let state = smooth_state(&engine, grid);
    let v3 = TermOptions::from_config(&IterationConfig::default());
    let v2 = TermOptions { compat: ThirdProductFactor::V2, ..v3 };
    let a = leray_term(&engine, &state, 0, Form::FirstStep, &v3).unwrap();
    let b = leray_term(&engine, &state, 0, Form::FirstStep, &v2).unwrap();
    assert!(sup_diff(&a.fields[0].values, &b.fields[0].values) > 1e-4);
}

#[test]
fn pressure_term_matches_newton_quadrature() {
    let grid = GridSpec::new(8.0, 64).unwrap();
    let engine = Engine::new(grid, 0, 100);
    let a = 1.3;
    let v = VectorField::sample(grid, |x| common::windowed_rotation(a, x).0);
    let slab = TimeSlab::new(vec![0.0], vec![v]).unwrap();
    let state = IterationState::from_velocity(&engine, 0.1, &slab, 1).unwrap();
    let opts = TermOptions { eps: 0.0, dealias: false, ..TermOptions::from_config(&IterationConfig::default()) };
    let l: Vec<_> = (0..3).map(|i| leray_term(&engine, &state, i, Form::Rewritten, &opts).unwrap()).collect();
    let q = |x: Point3| common::contraction(&common::windowed_rotation(a, x).1);
    let mut worst = 0.0f64;
    for idx in [grid.index(30, 33, 31), grid.index(36, 28, 32), grid.index(27, 30, 38), grid.index(32, 32, 32)] {
        let x = grid.point(idx);
        let grad_p = common::newton_gradient_spherical(q, x, 6.0);
        for i in 0..3 {
            // The pressure term is -grad p with Laplace p = Q.
            worst = worst.max((l[i].fields[0].values[idx] + grad_p[i]).abs());
        }
    }
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn increment_identity_and_zero_time_node() {
    let cfg = IterationConfig { grid_n: 24, half_width: 6.0, kmax: 2, nsteps_time: 6, holder_pairs: 200, ..Default::default() };
    let engine = Engine::for_config(&cfg).unwrap();
    let s = run(&engine, &cfg).unwrap();
    assert!(s.increment_identity_error(&engine) < 1e-12);
    assert_eq!(s.increment(&engine, 0).sup(), 0.0);
    assert_eq!(s.norm_history.len(), 3);
    assert!(s.norm_history[1].contraction_ratio.is_none());
    assert!(s.norm_history[2].contraction_ratio.is_some());
}

#[test]
fn contraction_weakens_with_horizon() {
    let base = IterationConfig { grid_n: 24, half_width: 6.0, kmax: 3, nsteps_time: 8, holder_pairs: 500, slab_tolerance: 1.0, ..Default::default() };
    let engine = Engine::for_config(&base).unwrap();
    let ratios: Vec<f64> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&t| {
            let s = run(&engine, &IterationConfig { horizon: t, ..base.clone() }).unwrap();
            s.norm_history[3].contraction_ratio.unwrap()
        })
        .collect();
    assert!(ratios.windows(2).all(|w| w[1] > w[0]), "{ratios:?}");
}

#[test]
fn contraction_search_on_zero_data_is_trivial() {
    let cfg = IterationConfig { grid_n: 16, half_width: 4.0, kmax: 3, nsteps_time: 4, zero_data: true, holder_pairs: 100, ..Default::default() };
    let engine = Engine::for_config(&cfg).unwrap();
    let r = run_contraction(&engine, &cfg).unwrap();
    assert!(r.trivial);
    assert_eq!(r.t_measured, cfg.horizon);
}

#[test]
fn limit_drive_single_pair_has_no_verdict() {
    let cfg = IterationConfig { grid_n: 16, half_width: 4.0, kmax: 2, nsteps_time: 4, holder_pairs: 100, ..Default::default() };
    let engine = Engine::for_config(&cfg).unwrap();
    let r = viscosity_limit_drive(&engine, &cfg, &[0.1], &[0.1]).unwrap();
    assert_eq!(r.rows.len(), 1);
    assert_eq!(r.verdict, CauchyVerdict::NoVerdict);
    assert!(viscosity_limit_drive(&engine, &cfg, &[0.1, 0.2], &[0.1, 0.05]).is_err());
}

#[test]
fn lipschitz_bound_dominates_heat_gradient_of_burgers_term() {
    let cfg = IterationConfig { grid_n: 32, half_width: 6.0, nsteps_time: 32, time_ratio: 1.15, holder_pairs: 100, horizon: 0.5, nu: 0.05, eps: 0.05, ..Default::default() };
    let engine = Engine::for_config(&cfg).unwrap();
    let s0 = init_step0(&engine, &cfg).unwrap();
    let opts = TermOptions::from_config(&cfg);
    let b = burgers_term(&engine, &s0, 1, Form::FirstStep, &opts).unwrap();
    let lip = lipschitz_estimate(&b).unwrap();
    let t = cfg.horizon;
    let bound = second_moment(&KernelSpec::new(cfg.nu, 0.0, t).unwrap(), t, lip).unwrap().lipschitz_bound;
    for j in 0..3 {
        let g = engine.convolver.spacetime(&b, cfg.nu, t, Some(j)).unwrap();
        assert!(g.sup() <= bound, "j={j}: {} > {bound}", g.sup());
    }
}
