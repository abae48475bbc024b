use std::collections::HashMap;

use euler_sieve::field::{Combination, VorticityKind, VorticitySpec};
use euler_sieve::geometry::{LatticeParams, ObstacleShape, PerforatedDomain};
use euler_sieve::transport::{cfl_step, evolve, Backend, BackendKind, EvolveOptions, TransportParams, VortexState};
use euler_sieve::Point;

fn bump(c: Point, r: f64, a: f64) -> VorticitySpec {
    VorticitySpec::new(VorticityKind::RadialBump, c, r, a).unwrap()
}

#[test]
fn no_penetration_over_a_thousand_steps_near_an_inclusion() {
    let d = PerforatedDomain::build(LatticeParams::new(0.1, 1.0, 0.0).unwrap(), ObstacleShape::Disk).unwrap();
    let f = bump(Point::new(0.5, 0.3), 0.15, 1.0);
    let backend = Backend::new(BackendKind::Corrector, Some(&d), TransportParams { h: 0.025, ..Default::default() }).unwrap();
    let state = VortexState::initialize(&f, &backend).unwrap();
    let dt = 0.5 * cfl_step(&state, &backend).unwrap();
    let opts = EvolveOptions { t_end: 1000.0 * dt, dt: Some(dt), diag_stride: 1000, traj_stride: 0 };
    let run = evolve(state, &backend, opts).unwrap();
    assert_eq!(run.steps, 1000);
    assert!(run.failure.is_none(), "{:?}", run.failure);
    for p in &run.state.particles {
        assert!(d.obstacle_at(p.pos).is_none(), "{}", p.pos);
    }
}

fn plane_run(f: &Combination, h: f64, dt: f64) -> Vec<(Point, Point)> {
    let backend = Backend::plane(TransportParams { h, ..Default::default() }).unwrap();
    let state = VortexState::initialize(f, &backend).unwrap();
    let start = state.positions();
    let run = evolve(state, &backend, EvolveOptions { t_end: 1.0, dt: Some(dt), ..Default::default() }).unwrap();
    start.into_iter().zip(run.state.positions()).collect()
}

fn key(p: Point) -> (i64, i64) {
    ((p.re * 1e9).round() as i64, (p.im * 1e9).round() as i64)
}

#[test]
fn halving_h_and_dt_cuts_position_error_fourfold() {
    let f = Combination {
        terms: vec![(1.0, bump(Point::new(-0.1, 0.0), 0.15, 1.0)), (0.7, bump(Point::new(0.12, 0.03), 0.12, 1.0))],
    };
    let h = 0.15 / 12.0;
    let dt = 0.05;
    let reference: HashMap<_, _> = plane_run(&f, h / 4.0, dt / 4.0).into_iter().map(|(a, b)| (key(a), b)).collect();
    let error = |h: f64, dt: f64| {
        plane_run(&f, h, dt)
            .into_iter()
            .map(|(a, b)| (b - reference[&key(a)]).norm())
            .fold(0.0, f64::max)
    };
    let coarse = error(h, dt);
    let fine = error(h / 2.0, dt / 2.0);
    assert!(coarse >= 4.0 * fine, "{coarse:e} vs {fine:e}");
}
