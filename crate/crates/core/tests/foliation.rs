mod common;

use std::sync::Arc;

use naim_core::builtins::decoupled;
use naim_core::flow::{flow, Tolerances};
use naim_core::foliation::FiberProjection;
use naim_core::manifold::*;
use naim_core::pendulum::{make_pendulum, torus_grid, PendulumParams};
use proptest::prelude::*;

fn shadowing_exponent(fp: &FiberProjection, x: &[f64]) -> f64 {
    let times: Vec<f64> = (0..10).map(|i| 1.0 + i as f64).collect();
    fp.shadowing_rate(x, &times, 100.0).unwrap()
}

#[test]
fn vertical_fibers_at_zero_eps() {
    let sys = decoupled(0.0);
    let m = critical_manifold(&sys, Grid::new(vec![Axis::line(-2.0, 8.0, 41)]).unwrap()).unwrap();
    let frames = stable_bundle(&sys, &m, 2.0, 3).unwrap();
    let fp = FiberProjection::new(&sys, Arc::new(m), Arc::new(frames)).unwrap();
    let b = fp.local_projection(&[1.3, 0.004]).unwrap();
    assert!((b[0] - 1.3).abs() < 1e-12);
    let (base, v) = fp.fiber_coordinate(&[2.1, -0.7], 50.0).unwrap();
    assert!((base[0] - 2.1).abs() < 1e-10);
    assert!((v[0].abs() - 0.7).abs() < 1e-10);
}

#[test]
fn decoupled_fibers_are_vertical_for_positive_eps() {
    let s = common::decoupled_setup(0.05);
    for &(x, y) in &[(0.0, 1.0), (1.0, -2.0), (2.5, 0.3)] {
        let base = s.fp.global_projection(&[x, y], 100.0).unwrap();
        assert!((base[0] - x).abs() < 1e-8, "{x} {y} -> {base:?}");
        let rate = shadowing_exponent(&s.fp, &[x, y]);
        assert!((rate + 1.0).abs() <= 0.1, "rate {rate}");
    }
}

#[test]
fn manifold_points_project_to_themselves() {
    let s = common::pendulum();
    for b in [[0.5, 0.5], [3.0, 6.0], [5.9, 2.2]] {
        let p = s.fp.manifold().lift(&b);
        let local = s.fp.local_projection(&p).unwrap();
        let global = s.fp.global_projection(&p, 50.0).unwrap();
        for i in 0..2 {
            assert!((local[i] - b[i]).abs() < 1e-12);
            assert!((global[i] - b[i]).abs() < 1e-10);
        }
        let (_, v) = s.fp.fiber_coordinate(&p, 50.0).unwrap();
        assert!(v[0].abs() < 1e-10);
    }
}

#[test]
fn local_projection_is_close_to_long_time_projection() {
    let sys = make_pendulum(PendulumParams::default(), 0.0).unwrap();
    let m = critical_manifold(&sys, torus_grid(16, 16).unwrap()).unwrap();
    let frames = stable_bundle(&sys, &m, 2.0, 2).unwrap();
    let fp = FiberProjection::new(&sys, Arc::new(m), Arc::new(frames)).unwrap();
    for b in [[0.4, 1.0], [2.0, 4.0]] {
        let mut p = fp.manifold().lift(&b);
        p[2] += 0.01;
        let local = fp.local_projection(&p).unwrap();
        let oracle = fp.global_projection(&p, 20.0).unwrap();
        let d = ((local[0] - oracle[0]).powi(2) + (local[1] - oracle[1]).powi(2)).sqrt();
        assert!(d <= 1e-4, "{d}");
    }
}

#[test]
fn pendulum_fibers_contract_at_fast_rate() {
    let s = common::pendulum();
    let mut p = s.fp.manifold().lift(&[1.0, 2.0]);
    p[2] += 0.5;
    let report = spectral_report(&s.system, s.fp.manifold(), s.fp.frames(), 10.0).unwrap();
    let rate = shadowing_exponent(&s.fp, &p);
    assert!((rate - report.r_max).abs() <= 0.2 * report.r_max.abs(), "rate {rate}");
    assert!(rate <= report.r_max + 0.1 * report.r_max.abs());
}

#[test]
fn fiber_chart_roundtrip_on_flat_fibers() {
    let s = common::decoupled_setup(0.05);
    for &(x, y) in &[(0.0, 1.0), (1.0, -2.0), (2.5, 0.3)] {
        let (base, v) = s.fp.fiber_coordinate(&[x, y], 100.0).unwrap();
        let (b2, v2) = s.fp.fiber_coordinate(&s.fp.embed(&base, &v), 100.0).unwrap();
        assert!((b2[0] - base[0]).abs() < 1e-8 && (v2[0] - v[0]).abs() < 1e-8);
    }
}

#[test]
fn fiber_chart_roundtrip_is_second_order_on_curved_fibers() {
    let s = common::pendulum();
    for p in common::pendulum_samples(10, 0.05, 1.0) {
        let (base, v) = s.fp.fiber_coordinate(&p, 100.0).unwrap();
        let (b2, v2) = s.fp.fiber_coordinate(&s.fp.embed(&base, &v), 100.0).unwrap();
        let bound = 1e-4 * v[0] * v[0] + 1e-9;
        for i in 0..2 {
            assert!(naim_core::flow::wrap_pi(b2[i] - base[i]).abs() <= bound);
        }
        assert!((v2[0] - v[0]).abs() <= bound);
    }
}

#[test]
fn leaving_a_line_domain_is_reported() {
    let s = common::decoupled_setup(0.5);
    let err = s.fp.global_projection(&[7.9, 30.0], 200.0);
    assert!(matches!(err, Err(naim_core::Error::DomainExit { .. }) | Err(naim_core::Error::BasinEscape { .. })), "{err:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn projection_commutes_with_flow(i in 0usize..40, t in 0.0..5.0f64) {
        let s = common::pendulum();
        let p = &common::pendulum_samples(40, 0.05, 1.0)[i];
        let tol = Tolerances::tight();
        let base = s.fp.global_projection(p, 100.0).unwrap();
        let moved = s.fp.global_projection(&flow(&s.system, p, t, &tol).unwrap(), 100.0).unwrap();
        let along = s.fp.manifold().slow_flow(&s.system, &base, t, &tol).unwrap();
        for k in 0..2 {
            prop_assert!(naim_core::flow::wrap_pi(moved[k] - along[k]).abs() <= 1e-6);
        }
    }

    #[test]
    fn projection_is_idempotent(theta in 0.0..6.28f64, alpha in 0.0..6.28f64) {
        let s = common::pendulum();
        let p = s.fp.manifold().lift(&[theta, alpha]);
        let b = s.fp.global_projection(&p, 50.0).unwrap();
        prop_assert!((b[0] - theta).abs() < 1e-9 && (b[1] - alpha).abs() < 1e-9);
    }
}
