//! Forced damped pendulum on T²×R in fast time:
//! `θ' = ε ω`, `α' = ε`, `ω' = −ε (g/l) sin θ − c(θ) ω + τ(θ, α)`.

use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt;
use std::ops::ControlFlow;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{run, SlowFastField, SystemSpec, Tolerances, Topology};
use crate::manifold::{Axis, GraphManifold, Grid};

/// Damping law `c(θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Damping {
    Constant(f64),
    /// `c(θ) = cos θ + 1`, vanishing at `θ = π`.
    CosPlusOne,
}

impl Damping {
    pub fn value(&self, theta: f64) -> f64 {
        match self {
            Damping::Constant(c) => *c,
            Damping::CosPlusOne => theta.cos() + 1.0,
        }
    }
    pub fn derivative(&self, theta: f64) -> f64 {
        match self {
            Damping::Constant(_) => 0.0,
            Damping::CosPlusOne => -theta.sin(),
        }
    }
}

/// A 2π-periodic torque `τ(θ, α)` with its gradient.
pub trait Torque: Send + Sync + fmt::Debug {
    fn value(&self, theta: f64, alpha: f64) -> f64;
    fn gradient(&self, theta: f64, alpha: f64) -> (f64, f64);
}

/// `τ = a sin θ + b cos α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicTorque {
    pub sin_theta: f64,
    pub cos_alpha: f64,
}

impl Default for HarmonicTorque {
    fn default() -> Self {
        Self { sin_theta: -1.0, cos_alpha: 0.5 }
    }
}

impl Torque for HarmonicTorque {
    fn value(&self, theta: f64, alpha: f64) -> f64 {
        self.sin_theta * theta.sin() + self.cos_alpha * alpha.cos()
    }
    fn gradient(&self, theta: f64, alpha: f64) -> (f64, f64) {
        (self.sin_theta * theta.cos(), -self.cos_alpha * alpha.sin())
    }
}

#[derive(Debug, Clone)]
pub struct PendulumParams {
    pub gravity: f64,
    pub length: f64,
    pub damping: Damping,
    pub torque: Arc<dyn Torque>,
    /// `|θ| ≤ limit` for the inflowing variant.
    pub theta_limit: Option<f64>,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self { gravity: 9.8, length: 1.0, damping: Damping::Constant(1.0), torque: Arc::new(HarmonicTorque::default()), theta_limit: None }
    }
}

impl PendulumParams {
    /// `c(θ) = cos θ + 1` restricted to `|θ| ≤ π/4`.
    pub fn variant() -> Self {
        Self { damping: Damping::CosPlusOne, theta_limit: Some(FRAC_PI_4), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if let Damping::Constant(c) = self.damping {
            if !(c > 0.0) {
                return Err(Error::InvalidInput(format!("damping must be positive, got {c}")));
            }
        }
        if !(self.length > 0.0) || !self.gravity.is_finite() {
            return Err(Error::InvalidInput("pendulum length must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Pendulum {
    pub params: PendulumParams,
}

impl SlowFastField for Pendulum {
    fn n_slow(&self) -> usize {
        2
    }
    fn n_fast(&self) -> usize {
        1
    }
    fn topology(&self) -> Vec<Topology> {
        vec![Topology::Circle, Topology::Circle]
    }
    fn slow(&self, _x: &[f64], y: &[f64], _eps: f64, out: &mut [f64]) {
        out[0] = y[0];
        out[1] = 1.0;
    }
    fn fast(&self, x: &[f64], y: &[f64], eps: f64, out: &mut [f64]) {
        let p = &self.params;
        out[0] = -eps * p.gravity / p.length * x[0].sin() - p.damping.value(x[0]) * y[0] + p.torque.value(x[0], x[1]);
    }
    fn jacobian_blocks(&self, x: &[f64], y: &[f64], eps: f64, jac: &mut [f64]) {
        let p = &self.params;
        let (tt, ta) = p.torque.gradient(x[0], x[1]);
        jac[..6].copy_from_slice(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        jac[6] = -eps * p.gravity / p.length * x[0].cos() - p.damping.derivative(x[0]) * y[0] + tt;
        jac[7] = ta;
        jac[8] = -p.damping.value(x[0]);
    }
}

pub fn make_pendulum(params: PendulumParams, eps: f64) -> Result<SystemSpec> {
    params.validate()?;
    Ok(SystemSpec::new(Arc::new(Pendulum { params }), eps))
}

/// `n x n` grid on the torus.
pub fn torus_grid(n_theta: usize, n_alpha: usize) -> Result<Grid> {
    Grid::new(vec![Axis::circle(n_theta), Axis::circle(n_alpha)])
}

/// Grid over `|θ| ≤ limit + margin` times the circle in α.
pub fn strip_grid(limit: f64, margin: f64, n_theta: usize, n_alpha: usize) -> Result<Grid> {
    Grid::new(vec![Axis::line(-limit - margin, limit + margin, n_theta), Axis::circle(n_alpha)])
}

/// `max |τ|` by grid search followed by local zooming.
pub fn max_abs_torque(torque: &dyn Torque) -> f64 {
    let n = 64;
    let h = 2.0 * PI / n as f64;
    let mut best = (0.0, 0.0, -1.0);
    for i in 0..n {
        for j in 0..n {
            let (t, a) = (i as f64 * h, j as f64 * h);
            let v = torque.value(t, a).abs();
            if v > best.2 {
                best = (t, a, v);
            }
        }
    }
    let mut width = h;
    while width > 1e-10 {
        let (t0, a0, _) = best;
        for i in -5..=5 {
            for j in -5..=5 {
                let (t, a) = (t0 + i as f64 * width / 5.0, a0 + j as f64 * width / 5.0);
                let v = torque.value(t, a).abs();
                if v > best.2 {
                    best = (t, a, v);
                }
            }
        }
        width /= 4.0;
    }
    best.2
}

/// Radius `η = (ε0 g/l + max|τ| + 1) / c0` of the absorbing slab `|ω| ≤ η`.
pub fn absorbing_bound(params: &PendulumParams, eps0: f64) -> Result<f64> {
    let Damping::Constant(c0) = params.damping else {
        return Err(Error::InvalidInput("absorbing bound needs constant damping".into()));
    };
    params.validate()?;
    Ok((eps0 * params.gravity / params.length + max_abs_torque(params.torque.as_ref()) + 1.0) / c0)
}

/// Outcome of one basin sample.
#[derive(Debug, Clone)]
pub struct BasinSample {
    pub start: [f64; 3],
    /// First time with `|ω| ≤ η`.
    pub entry_time: Option<f64>,
    pub final_distance: f64,
    /// Worst `sign(ω) ω'` seen outside the slab (must stay ≤ −1).
    pub worst_outside_rate: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct BasinReport {
    pub eta: f64,
    pub horizon: f64,
    pub samples: Vec<BasinSample>,
}

impl BasinReport {
    pub fn converged_fraction(&self) -> f64 {
        self.samples.iter().filter(|s| s.converged).count() as f64 / self.samples.len() as f64
    }
    pub fn counterexamples(&self) -> Vec<&BasinSample> {
        self.samples.iter().filter(|s| !s.converged).collect()
    }
    pub fn all_converged(&self) -> bool {
        self.samples.iter().all(|s| s.converged)
    }
}

/// Sweeps `n_theta x n_alpha x n_omega` initial states with `|ω| ≤ 1.4 η` and checks
/// entry into the slab and convergence to the graph within `horizon`.
pub fn verify_global_basin(system: &SystemSpec, manifold: &GraphManifold, eta: f64, sample_grid: (usize, usize, usize), horizon: f64, tol: &Tolerances) -> Result<BasinReport> {
    let (nt, na, nw) = sample_grid;
    let mut starts = Vec::with_capacity(nt * na * nw);
    for i in 0..nt {
        for j in 0..na {
            for k in 0..nw {
                let w = if nw == 1 { 0.0 } else { -1.4 * eta + 2.8 * eta * k as f64 / (nw - 1) as f64 };
                starts.push([2.0 * PI * i as f64 / nt as f64, 2.0 * PI * j as f64 / na as f64, w]);
            }
        }
    }
    let samples: Vec<Result<BasinSample>> = starts.par_iter().map(|s| basin_sample(system, manifold, eta, *s, horizon, tol)).collect();
    Ok(BasinReport { eta, horizon, samples: samples.into_iter().collect::<Result<Vec<_>>>()? })
}

/// Follows one initial state for `horizon` and records slab entry and final graph distance.
pub fn basin_sample(system: &SystemSpec, manifold: &GraphManifold, eta: f64, start: [f64; 3], horizon: f64, tol: &Tolerances) -> Result<BasinSample> {
    let mut entry = if start[2].abs() <= eta { Some(0.0) } else { None };
    let mut worst = f64::NEG_INFINITY;
    let mut d = [0.0; 3];
    let check = |z: &[f64], worst: &mut f64, d: &mut [f64; 3]| {
        if z[2].abs() > eta {
            system.rhs(z, d);
            *worst = worst.max(z[2].signum() * d[2]);
        }
    };
    check(&start, &mut worst, &mut d);
    let end = run(|z, o| system.rhs(z, o), &start, 0.0, horizon, tol, |s| {
        check(s.y1, &mut worst, &mut d);
        if entry.is_none() && s.y1[2].abs() <= eta {
            entry = Some(s.t1);
        }
        ControlFlow::Continue(())
    })?;
    let final_distance = manifold.graph_distance(&end.y);
    let sign_ok = worst <= -1.0 || worst == f64::NEG_INFINITY;
    Ok(BasinSample { start, entry_time: entry, final_distance, worst_outside_rate: worst, converged: entry.is_some() && final_distance < 1e-4 && sign_ok })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_fast_field_at_origin() {
        let sys = make_pendulum(PendulumParams::default(), 0.0).unwrap();
        let mut out = [0.0; 3];
        sys.rhs(&[0.0, 0.0, 0.0], &mut out);
        assert_eq!(out, [0.0, 0.0, 0.5]);
    }

    #[test]
    fn absorbing_bound_values() {
        let p = PendulumParams::default();
        assert!((absorbing_bound(&p, 0.1).unwrap() - 3.48).abs() < 1e-8);
        let p2 = PendulumParams { damping: Damping::Constant(2.0), ..PendulumParams::default() };
        assert!((absorbing_bound(&p2, 0.1).unwrap() - 1.74).abs() < 1e-8);
    }

    #[test]
    fn variant_damping_vanishes_at_pi() {
        assert!(Damping::CosPlusOne.value(PI).abs() < 1e-15);
    }
}
