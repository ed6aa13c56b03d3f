#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use naim_core::builtins::{decoupled, scalar_quadratic};
use naim_core::flow::SystemSpec;
use naim_core::foliation::FiberProjection;
use naim_core::manifold::*;
use naim_core::pendulum::{make_pendulum, torus_grid, PendulumParams};

pub const EPS: f64 = 0.05;

pub struct Setup {
    pub system: SystemSpec,
    pub fp: Arc<FiberProjection>,
}

pub fn build(system: &SystemSpec, grid: Grid, eps: f64, t_iter: f64, steps: usize) -> Setup {
    let sys = system.with_eps(eps);
    let m0 = critical_manifold(&sys.with_eps(0.0), grid).unwrap();
    let m = slow_manifold_graph(&sys, eps, &m0, 8, 1e-10).unwrap();
    let frames = stable_bundle(&sys, &m, t_iter, steps).unwrap();
    let fp = Arc::new(FiberProjection::new(&sys, Arc::new(m), Arc::new(frames)).unwrap());
    Setup { system: sys, fp }
}

/// Constant-damping pendulum on a 32x32 torus grid at `EPS`.
pub fn pendulum() -> &'static Setup {
    static CELL: OnceLock<Setup> = OnceLock::new();
    CELL.get_or_init(|| {
        let sys = make_pendulum(PendulumParams::default(), EPS).unwrap();
        build(&sys, torus_grid(32, 32).unwrap(), EPS, 2.0, 4)
    })
}

/// Same system on a 64x64 grid.
pub fn pendulum_fine() -> &'static Setup {
    static CELL: OnceLock<Setup> = OnceLock::new();
    CELL.get_or_init(|| {
        let sys = make_pendulum(PendulumParams::default(), EPS).unwrap();
        build(&sys, torus_grid(64, 64).unwrap(), EPS, 2.0, 4)
    })
}

pub fn decoupled_setup(eps: f64) -> Setup {
    build(&decoupled(eps), Grid::new(vec![Axis::line(-2.0, 8.0, 41)]).unwrap(), eps, 2.0, 4)
}

pub fn scalar_setup() -> Setup {
    let sys = scalar_quadratic();
    let m = critical_manifold_from(&sys, Grid::point(), &[0.0]).unwrap();
    let frames = stable_bundle(&sys, &m, 1.0, 2).unwrap();
    let fp = Arc::new(FiberProjection::new(&sys, Arc::new(m), Arc::new(frames)).unwrap());
    Setup { system: sys, fp }
}

/// Off-manifold states over a spread of base points with fast offsets in `[lo, hi]` (signed).
pub fn pendulum_samples(n: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let fp = &pendulum().fp;
    (0..n)
        .map(|i| {
            let s = (i as f64 + 0.5) / n as f64;
            let base = [6.283 * s, (2.399 * i as f64) % 6.283];
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let mag = lo + (hi - lo) * ((0.618 * i as f64) % 1.0);
            let lift = fp.manifold().lift(&base);
            vec![lift[0], lift[1], lift[2] + sign * mag]
        })
        .collect()
}

pub fn pendulum_lyapunov() -> &'static Arc<naim_core::lyapunov::LyapunovFunction> {
    use naim_core::lyapunov::*;
    static CELL: OnceLock<Arc<LyapunovFunction>> = OnceLock::new();
    CELL.get_or_init(|| {
        let rho0 = Arc::new(LocalTrivialization::new(pendulum().fp.clone()).unwrap());
        Arc::new(build_lyapunov(rho0, &LyapunovOptions::default()).unwrap())
    })
}

/// One slow angle driving a coupled two-dimensional fast block whose stable frame rotates.
#[derive(Debug, Clone, Copy)]
pub struct TwoFast;

impl naim_core::flow::SlowFastField for TwoFast {
    fn n_slow(&self) -> usize {
        1
    }
    fn n_fast(&self) -> usize {
        2
    }
    fn topology(&self) -> Vec<naim_core::flow::Topology> {
        vec![naim_core::flow::Topology::Circle]
    }
    fn slow(&self, _x: &[f64], y: &[f64], _eps: f64, out: &mut [f64]) {
        out[0] = 1.0 + 0.3 * y[0] + 0.2 * y[1];
    }
    fn fast(&self, x: &[f64], y: &[f64], _eps: f64, out: &mut [f64]) {
        let (s, c) = x[0].sin_cos();
        out[0] = -y[0] + 0.4 * s * y[1] + 0.2 * c;
        out[1] = -1.5 * y[1] + 0.3 * c * y[0] + 0.1 * s;
    }
    fn jacobian_blocks(&self, x: &[f64], y: &[f64], _eps: f64, jac: &mut [f64]) {
        let (s, c) = x[0].sin_cos();
        jac.copy_from_slice(&[0.0, 0.3, 0.2, 0.4 * c * y[1] - 0.2 * s, -1.0, 0.4 * s, -0.3 * s * y[0] + 0.1 * c, 0.3 * c, -1.5]);
    }
}

pub fn two_fast_setup(eps: f64) -> Setup {
    let sys = SystemSpec::new(Arc::new(TwoFast), eps);
    build(&sys, Grid::new(vec![Axis::circle(32)]).unwrap(), eps, 2.0, 4)
}
