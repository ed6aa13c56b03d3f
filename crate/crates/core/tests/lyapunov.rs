mod common;

use std::sync::Arc;

use naim_core::flow::{impact_time, Tolerances};
use naim_core::lyapunov::*;
use naim_core::numerics::norm;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// `(base, fiber vector)` pairs with radii in `[lo, hi)`.
fn fiber_samples(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let b = vec![6.283 * rng.random::<f64>(), 6.283 * rng.random::<f64>()];
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            (b, vec![sign * (lo + (hi - lo) * rng.random::<f64>())])
        })
        .collect()
}

#[test]
fn reparametrizers_split_the_level() {
    let r = Reparametrizers;
    assert_eq!(r.chi(0.3), 0.3);
    assert_eq!(r.tau(0.5), 0.0);
    assert!(r.tau(0.51) > 0.0);
    assert!(r.chi(50.0) <= 1.0);
    assert!((r.chi_derivative(0.5) - 1.0).abs() < 1e-15);
}

#[test]
fn smooth_step_is_flat_at_the_ends() {
    assert_eq!(smooth_step(-0.1), 0.0);
    assert_eq!(smooth_step(1.2), 1.0);
    assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
    assert!(smooth_step(0.01) < 1e-40);
}

#[test]
fn trivialization_on_flat_fibers_is_a_shift() {
    let s = common::decoupled_setup(0.05);
    let rho0 = LocalTrivialization::new(s.fp.clone()).unwrap();
    let x = [1.0];
    let lift = s.fp.manifold().lift(&x);
    assert_eq!(rho0.forward(&x, &[0.0]).unwrap(), lift);
    let p = rho0.forward(&x, &[0.3]).unwrap();
    let e = s.fp.frames().at(&x);
    let sign = e[(1, 0)].signum();
    assert!((p[0] - x[0]).abs() < 1e-10);
    assert!((p[1] - (lift[1] + sign * 0.3)).abs() < 1e-10);
}

#[test]
fn trivialization_roundtrip() {
    let fp = common::pendulum_fine().fp.clone();
    let rho0 = LocalTrivialization::new(fp).unwrap();
    let samples = fiber_samples(1000, 0.0, 0.5, 11);
    let worst = samples
        .par_iter()
        .map(|(b, v)| {
            let p = rho0.forward(b, v).unwrap();
            let (b2, v2) = rho0.inverse(&p).unwrap();
            let db = (0..2).map(|i| naim_core::flow::wrap_pi(b2[i] - b[i]).abs()).fold(0.0, f64::max);
            db.max((v2[0] - v[0]).abs())
        })
        .reduce(|| 0.0, f64::max);
    assert!(worst <= 1e-10, "worst {worst}");
}

#[test]
fn core_integral_of_linear_decay() {
    let s = common::decoupled_setup(0.05);
    let rho0 = Arc::new(LocalTrivialization::new(s.fp.clone()).unwrap());
    let v = build_lyapunov(rho0, &LyapunovOptions { design_size: 200, ..LyapunovOptions::default() }).unwrap();
    for r in [0.05, 0.2, -0.4] {
        let g = v.core_raw(&[1.0], &[r]).unwrap();
        assert!((g - r.abs() * (1.0 - (-1.0f64).exp())).abs() < 1e-10, "{g}");
    }
}

#[test]
fn lyapunov_basics() {
    let v = common::pendulum_lyapunov();
    let c = v.constants();
    assert!(c.b1 > 0.0 && c.b1 < c.b2);
    assert!(c.sublevel_inside);
    assert_eq!(v.value(&[1.0, 1.0], &[0.0]).unwrap(), 0.0);
    for r in [c.tube, 1.3, -2.0] {
        assert_eq!(v.value(&[0.3, 2.0], &[r]).unwrap(), c.beta * r.abs());
    }
    for (b, x) in fiber_samples(20, 0.0, 0.6, 3) {
        assert!(v.value(&b, &x).unwrap() >= 0.0);
    }
}

#[test]
fn lyapunov_decreases_along_pulled_back_orbits() {
    let v = common::pendulum_lyapunov();
    let rho0 = v.trivialization();
    let times: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let samples: Vec<(Vec<f64>, Vec<f64>)> = fiber_samples(100, 0.001, 0.04, 5).into_iter().filter(|(b, x)| v.value(b, x).unwrap() < 1.0).take(100).collect();
    assert_eq!(samples.len(), 100);
    let min_rate = samples
        .par_iter()
        .map(|(b, x)| {
            let orbit = rho0.pullback(b, x, &times).unwrap();
            let levels: Vec<f64> = orbit.iter().map(|(bt, xt)| v.value(bt, xt).unwrap()).collect();
            levels.windows(2).map(|w| (w[0] - w[1]) / 0.1).fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min);
    assert!(min_rate > 0.0, "{min_rate}");
}

#[test]
fn radial_slopes_stay_in_the_recorded_band() {
    let v = common::pendulum_lyapunov();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let pairs: Vec<(Vec<f64>, f64, f64)> = (0..300)
        .map(|_| {
            let b = vec![6.283 * rng.random::<f64>(), 6.283 * rng.random::<f64>()];
            (b, 0.01 + 0.7 * rng.random::<f64>(), 1.0 + rng.random::<f64>())
        })
        .collect();
    let (lo, hi) = pairs
        .par_iter()
        .map(|(b, r, d)| {
            let q = (v.value(b, &[r * d]).unwrap() - v.value(b, &[*r]).unwrap()) / ((d - 1.0) * r);
            (q, q)
        })
        .reduce(|| (f64::INFINITY, 0.0), |a, b| (a.0.min(b.0), a.1.max(b.1)));
    assert!(lo >= 0.99 * v.b1() && hi <= 1.01 * v.b2(), "{lo} {hi} vs {} {}", v.b1(), v.b2());
}

#[test]
fn retraction_hits_the_level() {
    let v = common::pendulum_lyapunov();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let jobs: Vec<(Vec<f64>, Vec<f64>, f64)> = fiber_samples(200, 0.01, 0.8, 8).into_iter().map(|(b, x)| (b, x, 0.05 + 3.0 * rng.random::<f64>())).collect();
    let bound = 1.0 - v.b1() / v.b2() + 0.05;
    for r in jobs.par_iter().map(|(b, x, c)| (radial_retract(v, b, x, *c).unwrap(), b, *c)).collect::<Vec<_>>() {
        let (ret, b, c) = r;
        assert!((v.value(b, &ret.point).unwrap() - c).abs() <= 1e-10);
        assert!(ret.contraction <= bound, "{}", ret.contraction);
    }
}

#[test]
fn retraction_special_cases() {
    let v = common::pendulum_lyapunov();
    let beta = v.beta();
    let far = radial_retract(v, &[1.0, 1.0], &[-2.0], 2.0 * beta).unwrap();
    assert!((far.point[0] + 2.0).abs() < 1e-12);
    let x = [0.1];
    let c = v.value(&[1.0, 1.0], &x).unwrap();
    let same = radial_retract(v, &[1.0, 1.0], &x, c).unwrap();
    assert!((same.scale - 1.0).abs() < 1e-12);
    assert!(matches!(radial_retract(v, &[1.0, 1.0], &[0.0], 1.0), Err(naim_core::Error::ZeroFiber)));
}

#[test]
fn transport_is_identity_where_the_bundle_is_flat() {
    let s = common::decoupled_setup(0.05);
    let op = TransportOperator::new(s.fp.clone());
    let tr = op.transport(&[0.5], 3.0, &[0.7]).unwrap();
    assert_eq!(tr.coords, vec![0.7]);
    assert!((tr.base[0] - 0.65).abs() < 1e-9);
    let same = op.transport(&[0.5], 0.0, &[0.7]).unwrap();
    assert_eq!(same.base, vec![0.5]);
}

#[test]
fn transport_is_an_isometry_into_the_bundle() {
    let s = common::two_fast_setup(0.05);
    let op = TransportOperator::new(s.fp.clone());
    let v = [0.6, -0.8];
    let w = [0.1, 0.3];
    for t in [0.5, 2.0, 5.0, 10.0] {
        let a = op.transport(&[1.0], t, &v).unwrap();
        assert!((norm(&a.coords) - 1.0).abs() <= 1e-9);
        let b = op.transport(&[1.0], t, &w).unwrap();
        let sum = op.transport(&[1.0], t, &[v[0] + 2.0 * w[0], v[1] + 2.0 * w[1]]).unwrap();
        for i in 0..2 {
            assert!((sum.coords[i] - a.coords[i] - 2.0 * b.coords[i]).abs() < 1e-12);
        }
        let (base, amb) = op.transport_ambient(&[1.0], t, &v).unwrap();
        let e = s.fp.frames().at(&base);
        let back = &e * (e.transpose() * nalgebra::DVector::from_column_slice(&amb));
        assert!((back - nalgebra::DVector::from_column_slice(&amb)).norm() <= 1e-8);
    }
}

#[test]
fn nonlinear_transport_preserves_levels_and_composes() {
    let v = common::pendulum_lyapunov();
    let op = TransportOperator::new(common::pendulum().fp.clone());
    for (b, x) in fiber_samples(10, 0.02, 0.8, 13) {
        let level = v.value(&b, &x).unwrap();
        let zero = nonlinear_transport(v, &op, &b, &x, 0.0).unwrap();
        assert!((zero.coords[0] - x[0]).abs() < 1e-10);
        let (t, s) = (1.3, 0.6);
        let once = nonlinear_transport(v, &op, &b, &x, t + s).unwrap();
        assert!((v.value(&once.base, &once.coords).unwrap() - level).abs() <= 1e-9);
        let mid = nonlinear_transport(v, &op, &b, &x, s).unwrap();
        let twice = nonlinear_transport(v, &op, &mid.base, &mid.coords, t).unwrap();
        assert!((twice.coords[0] - once.coords[0]).abs() <= 1e-7);
        let along = common::pendulum().fp.manifold().slow_flow(&common::pendulum().system, &b, t + s, &Tolerances::tight()).unwrap();
        assert!((once.base[0] - along[0]).abs() < 1e-9 && (once.base[1] - along[1]).abs() < 1e-9);
    }
}

#[test]
fn bundle_map_properties() {
    let v = common::pendulum_lyapunov().clone();
    let fp = common::pendulum().fp.clone();
    let iso = BundleIsomorphism::new(v.clone(), TransportOperator::new(fp.clone()));
    assert_eq!(iso.map(&[1.0, 2.0], &[0.0]).unwrap().point, fp.manifold().lift(&[1.0, 2.0]));
    let small = [0.01];
    assert!(v.value(&[1.0, 2.0], &small).unwrap() <= 0.5);
    assert_eq!(iso.map(&[1.0, 2.0], &small).unwrap().point, v.trivialization().forward(&[1.0, 2.0], &small).unwrap());
    let samples = fiber_samples(60, 0.0, 0.25, 17);
    samples.par_iter().for_each(|(b, x)| {
        let img = iso.map(b, x).unwrap();
        let back = fp.global_projection(&img.point, 400.0).unwrap();
        for i in 0..2 {
            assert!(naim_core::flow::wrap_pi(back[i] - b[i]).abs() <= 1e-6, "{b:?} {x:?} -> {back:?}");
        }
    });
}

#[test]
fn bundle_map_orders_points_on_a_ray() {
    let v = common::pendulum_lyapunov().clone();
    let fp = common::pendulum().fp.clone();
    let iso = BundleIsomorphism::new(v, TransportOperator::new(fp.clone()));
    let manifold = fp.manifold_arc().clone();
    let c = fp.local_radius();
    let mut prev = f64::NEG_INFINITY;
    for r in [0.005, 0.02, 0.1, 0.3, 0.8, 1.5] {
        let p = iso.map(&[2.0, 0.5], &[r]).unwrap().point;
        let tau = impact_time(fp.system(), |z| manifold.graph_distance(z), c, &p, 200.0, &Tolerances::tight()).unwrap().time;
        assert!(tau > prev, "r {r}: {tau} after {prev}");
        prev = tau;
    }
}

proptest! {
    #[test]
    fn chi_and_tau_partition(d in 0.0..20.0f64, e in 0.0..20.0f64) {
        let r = Reparametrizers;
        prop_assert!((r.chi(d) + r.tau(d) - d).abs() <= 1e-15 * (1.0 + d));
        prop_assert_eq!(r.tau(d) > 0.0, d > 0.5);
        prop_assert!(r.chi(d) <= 1.0);
        if d < e && (e - d) > 1e-9 && r.chi(e) < 1.0 - 1e-12 {
            prop_assert!(r.chi(d) < r.chi(e));
        }
        if d > 0.5 && e > d + 1e-9 {
            prop_assert!(r.tau(d) < r.tau(e));
        }
    }
}
