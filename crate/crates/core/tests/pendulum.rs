mod common;

use std::f64::consts::FRAC_PI_4;
use std::sync::Arc;

use naim_core::flow::Tolerances;
use naim_core::manifold::critical_manifold;
use naim_core::pendulum::*;
use proptest::prelude::*;

#[test]
fn absorbing_bound_anchor() {
    let p = PendulumParams::default();
    assert!((max_abs_torque(p.torque.as_ref()) - 1.5).abs() <= 1e-8);
    assert!((absorbing_bound(&p, 0.1).unwrap() - 3.48).abs() <= 1e-8);
    let stiff = PendulumParams { damping: Damping::Constant(2.0), ..PendulumParams::default() };
    assert!((absorbing_bound(&stiff, 0.1).unwrap() - 1.74).abs() <= 1e-8);
}

#[test]
fn absorbing_bound_without_forcing() {
    let quiet = Arc::new(HarmonicTorque { sin_theta: 0.0, cos_alpha: 0.0 });
    for c0 in [1.0, 2.0, 0.5] {
        let p = PendulumParams { damping: Damping::Constant(c0), torque: quiet.clone(), ..PendulumParams::default() };
        assert!((absorbing_bound(&p, 0.0).unwrap() - 1.0 / c0).abs() <= 1e-12);
    }
    assert!(absorbing_bound(&PendulumParams::variant(), 0.1).is_err());
}

#[test]
fn field_examples() {
    let sys = make_pendulum(PendulumParams::default(), 0.0).unwrap();
    let mut out = [0.0; 3];
    for z in [[0.0, 0.0, 0.0], [1.0, 2.0, -3.0], [4.0, 5.0, 0.7]] {
        sys.rhs(&z, &mut out);
        assert_eq!(&out[..2], &[0.0, 0.0]);
    }
    sys.rhs(&[0.0, 0.0, 0.0], &mut out);
    assert_eq!(out[2], 0.5);
    assert!(Damping::CosPlusOne.value(std::f64::consts::PI).abs() < 1e-15);
    let bad = PendulumParams { damping: Damping::Constant(0.0), ..PendulumParams::default() };
    assert!(make_pendulum(bad, 0.05).is_err());
}

#[test]
fn manifold_sample_stays_put() {
    let s = common::pendulum();
    let eta = absorbing_bound(&PendulumParams::default(), 0.1).unwrap();
    let z = s.fp.manifold().lift(&[1.0, 2.0]);
    let r = basin_sample(&s.system, s.fp.manifold(), eta, [z[0], z[1], z[2]], 20.0, &Tolerances::default()).unwrap();
    assert_eq!(r.entry_time, Some(0.0));
    assert!(r.final_distance <= 1e-8, "{r:?}");
    assert!(r.converged);
}

#[test]
fn fast_start_enters_the_slab() {
    let s = common::pendulum();
    let eta = absorbing_bound(&PendulumParams::default(), 0.1).unwrap();
    for w in [1.4 * eta, -1.4 * eta] {
        let r = basin_sample(&s.system, s.fp.manifold(), eta, [0.3, 1.1, w], 50.0, &Tolerances::default()).unwrap();
        let entry = r.entry_time.unwrap();
        assert!(entry > 0.0 && entry < 5.0);
        assert!(r.worst_outside_rate <= -1.0);
        assert!(r.converged);
    }
}

#[test]
fn basin_sweep_converges() {
    let s = common::pendulum();
    let eta = absorbing_bound(&PendulumParams::default(), 0.1).unwrap();
    let report = verify_global_basin(&s.system, s.fp.manifold(), eta, (20, 20, 5), 50.0, &Tolerances::default()).unwrap();
    assert_eq!(report.samples.len(), 2000);
    assert!(report.all_converged(), "{:?}", report.counterexamples().first());
    assert_eq!(report.converged_fraction(), 1.0);
}

#[test]
fn variant_boundary_points_inward() {
    let sys = make_pendulum(PendulumParams::variant(), 0.0).unwrap();
    let m = critical_manifold(&sys, strip_grid(FRAC_PI_4, 0.1, 17, 16).unwrap()).unwrap();
    let mut h = [0.0; 2];
    for j in 0..32 {
        let alpha = 2.0 * std::f64::consts::PI * j as f64 / 32.0;
        for theta in [FRAC_PI_4, -FRAC_PI_4] {
            let z = m.lift(&[theta, alpha]);
            sys.slow_field(&z[..2], &z[2..], &mut h);
            assert!(h[0] * theta.signum() < 0.0, "θ {theta} α {alpha}: {}", h[0]);
        }
    }
}

proptest! {
    #[test]
    fn outside_the_slab_speed_drops(theta in 0.0..6.3f64, alpha in 0.0..6.3f64, excess in 1e-6..20.0f64, up in any::<bool>(), eps in 0.0..0.1f64) {
        let sys = make_pendulum(PendulumParams::default(), eps).unwrap();
        let eta = absorbing_bound(&PendulumParams::default(), 0.1).unwrap();
        let w = if up { eta + excess } else { -eta - excess };
        let mut out = [0.0; 3];
        sys.rhs(&[theta, alpha, w], &mut out);
        prop_assert!(w.signum() * out[2] <= -1.0);
    }
}
