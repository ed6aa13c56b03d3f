mod common;

use std::sync::Arc;

use naim_core::builtins::decoupled_graph;
use naim_core::flow::{flow, wrap_pi, Tolerances};
use naim_core::gsp::{fenichel_coordinates, fenichel_normal_form, linear_normal_form, normal_form_residual, NormalFormKind, ResidualOptions};
use naim_core::linearization::ConjugacyMap;
use naim_core::lyapunov::LocalTrivialization;
use naim_core::pendulum::{make_pendulum, torus_grid, PendulumParams};

fn pendulum_at(eps: f64, n: usize) -> common::Setup {
    let sys = make_pendulum(PendulumParams::default(), eps).unwrap();
    common::build(&sys, torus_grid(n, n).unwrap(), eps, 2.0, 4)
}

fn decoupled_samples() -> Vec<Vec<f64>> {
    [(0.0, 0.3), (1.0, -0.5), (2.5, 0.8), (4.0, -0.1)].iter().map(|&(x, dy)| vec![x, decoupled_graph(x, common::EPS) + dy]).collect()
}

#[test]
fn decoupled_form_is_exact() {
    let s = common::decoupled_setup(common::EPS);
    let nf = fenichel_normal_form(s.fp.clone());
    assert_eq!(nf.kind, NormalFormKind::Fenichel);
    for node in 0..nf.grid().len() {
        assert!((nf.h_node(node)[0] - 1.0).abs() <= 1e-12);
        assert!((nf.a_node(node)[(0, 0)] + 1.0).abs() <= 1e-9);
    }
    for p in decoupled_samples() {
        let (xt, yt) = fenichel_coordinates(&s.fp, &p).unwrap();
        let sign = s.fp.frames().at(&xt)[(1, 0)];
        assert!((xt[0] - p[0]).abs() <= 1e-9);
        assert!((yt[0] - sign * (p[1] - decoupled_graph(p[0], common::EPS))).abs() <= 1e-9);
    }
    let res = normal_form_residual(&s.system, &nf, &decoupled_samples(), 5.0, &ResidualOptions::default()).unwrap();
    assert!(res.fast_sup <= 1e-8 && res.slow_sup <= 1e-8, "{res:?}");

    let mut conj = ConjugacyMap::with_defaults(s.fp.clone(), 4, true).unwrap();
    conj.t_max = 40.0;
    let linear = linear_normal_form(Arc::new(conj));
    assert_eq!(linear.kind, NormalFormKind::Linear);
    let res = normal_form_residual(&s.system, &linear, &decoupled_samples(), 5.0, &ResidualOptions::default()).unwrap();
    assert!(res.fast_sup <= 1e-8 && res.slow_sup <= 1e-8, "{res:?}");
}

#[test]
fn frozen_pendulum_generator_is_minus_damping() {
    let s = pendulum_at(0.0, 16);
    let nf = fenichel_normal_form(s.fp.clone());
    for node in 0..nf.grid().len() {
        assert!((nf.a_node(node)[(0, 0)] + 1.0).abs() <= 1e-12, "node {node}: {}", nf.a_node(node));
        assert!((nf.a_raw_node(node)[(0, 0)] + 1.0).abs() <= 1e-12);
    }
}

#[test]
fn generator_eigenvalues_match_fast_jacobian() {
    let s = pendulum_at(0.0, 16);
    let nf = fenichel_normal_form(s.fp.clone());
    for node in 0..nf.grid().len() {
        let x = nf.grid().node(node);
        let z = s.fp.manifold().lift(&x);
        let fast = s.system.fast_jacobian(&x, &z[2..]);
        let want = fast.complex_eigenvalues();
        let got = nf.a_node(node).complex_eigenvalues();
        assert!((want[0] - got[0]).norm() <= 1e-6);
    }
    let s = common::two_fast_setup(0.0);
    let nf = fenichel_normal_form(s.fp.clone());
    for node in 0..nf.grid().len() {
        let x = nf.grid().node(node);
        let z = s.fp.manifold().lift(&x);
        let mut want: Vec<f64> = s.system.fast_jacobian(&x, &z[1..]).complex_eigenvalues().iter().map(|c| c.re).collect();
        let mut got: Vec<f64> = nf.a_node(node).complex_eigenvalues().iter().map(|c| c.re).collect();
        want.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (a, b) in want.iter().zip(&got) {
            assert!((a - b).abs() <= 1e-6, "node {node}: {want:?} vs {got:?}");
        }
    }
}

#[test]
fn generator_is_continuous_in_eps() {
    let frozen = fenichel_normal_form(pendulum_at(0.0, 16).fp.clone());
    let mut logs = Vec::new();
    for eps in [0.01, 0.02, 0.04] {
        let nf = fenichel_normal_form(pendulum_at(eps, 16).fp.clone());
        let gap = (0..nf.grid().len()).map(|i| (nf.a_node(i) - frozen.a_node(i)).norm()).fold(0.0, f64::max);
        logs.push((eps.ln(), gap.ln()));
    }
    let slope = (logs[2].1 - logs[0].1) / (logs[2].0 - logs[0].0);
    assert!((slope - 1.0).abs() <= 0.3, "slope {slope} from {logs:?}");
}

#[test]
fn fenichel_slow_dynamics_match_the_reduced_field() {
    let s = common::pendulum();
    let nf = fenichel_normal_form(s.fp.clone());
    let samples = common::pendulum_samples(6, 0.1, 0.8);
    let res = normal_form_residual(&s.system, &nf, &samples, 10.0, &ResidualOptions::default()).unwrap();
    assert!(res.slow_sup <= 1e-5, "{res:?}");
}

#[test]
fn fenichel_fast_residual_shrinks_with_the_offset() {
    let s = common::pendulum();
    let nf = fenichel_normal_form(s.fp.clone());
    let opts = ResidualOptions { times: 4, ..ResidualOptions::default() };
    let mut prev = f64::INFINITY;
    let mut first = 0.0;
    for (i, mag) in [0.8, 0.4, 0.2, 0.1].into_iter().enumerate() {
        let samples = common::pendulum_samples(4, mag, mag);
        let res = normal_form_residual(&s.system, &nf, &samples, 4.0, &opts).unwrap();
        assert!(res.fast_sup < prev, "{mag}: {res:?}");
        if i == 0 {
            first = res.fast_sup;
            assert!(first > 1e-4);
        }
        prev = res.fast_sup;
    }
    assert!(prev < 0.3 * first);
}

#[test]
fn frozen_slow_coordinate() {
    let s = pendulum_at(0.0, 16);
    for p in [[1.0, 2.0, 0.7], [4.0, 0.5, -1.2]] {
        let (x0, _) = fenichel_coordinates(&s.fp, &p).unwrap();
        for t in [0.5, 2.0, 5.0] {
            let q = flow(&s.system, &p, t, &Tolerances::tight()).unwrap();
            let (xt, _) = fenichel_coordinates(&s.fp, &q).unwrap();
            for i in 0..2 {
                assert!(wrap_pi(xt[i] - x0[i]).abs() <= 1e-8);
            }
        }
    }
}

#[test]
fn fiber_mates_share_slow_orbits() {
    let s = common::pendulum();
    let rho0 = LocalTrivialization::new(s.fp.clone()).unwrap();
    for b in [[0.5, 1.0], [3.0, 4.0]] {
        let p = rho0.forward(&b, &[0.05]).unwrap();
        let q = rho0.forward(&b, &[-0.1]).unwrap();
        for t in [1.0, 3.0, 5.0] {
            let (xp, _) = fenichel_coordinates(&s.fp, &flow(&s.system, &p, t, &Tolerances::tight()).unwrap()).unwrap();
            let (xq, _) = fenichel_coordinates(&s.fp, &flow(&s.system, &q, t, &Tolerances::tight()).unwrap()).unwrap();
            for i in 0..2 {
                assert!(wrap_pi(xp[i] - xq[i]).abs() <= 1e-5);
            }
        }
    }
}

#[test]
fn linear_form_on_the_pendulum() {
    let s = common::pendulum();
    let conj = Arc::new(ConjugacyMap::with_defaults(s.fp.clone(), 6, true).unwrap());
    let nf = linear_normal_form(conj.clone());
    assert_eq!(nf.kind, NormalFormKind::Linear);
    assert!(nf.certified);
    let samples = common::pendulum_samples(6, 0.1, 1.0);
    let res = normal_form_residual(&s.system, &nf, &samples, 5.0, &ResidualOptions::default()).unwrap();
    assert!(res.fast_sup <= 1e-3, "{res:?}");
    assert!(res.slow_sup <= 1e-5, "{res:?}");

    // superposition on one fiber
    let b = [1.2, 0.4];
    let p1 = conj.inverse(&b, &[0.3]).unwrap();
    let p2 = conj.inverse(&b, &[0.6]).unwrap();
    for t in [0.5, 2.0, 4.0] {
        let (_, y1) = nf.coordinates().apply(&flow(&s.system, &p1, t, &Tolerances::tight()).unwrap()).unwrap();
        let (_, y2) = nf.coordinates().apply(&flow(&s.system, &p2, t, &Tolerances::tight()).unwrap()).unwrap();
        assert!((y2[0] / y1[0] - 2.0).abs() <= 1e-5, "{t}: {} {}", y1[0], y2[0]);
    }
}

#[test]
fn uncertified_linear_request_falls_back() {
    let s = common::scalar_setup();
    let conj = Arc::new(ConjugacyMap::with_defaults(s.fp, 6, false).unwrap());
    let nf = linear_normal_form(conj);
    assert_eq!(nf.kind, NormalFormKind::Fenichel);
    assert!(!nf.certified);
    assert_eq!(nf.n_slow(), 0);
    assert!((nf.a(&[])[(0, 0)] + 1.0).abs() <= 1e-12);
}
