use std::cell::Cell;

use crate::error::{Error, Result};
use crate::lyapunov::function::LyapunovFunction;
use crate::numerics::norm;

/// Largest number of level evaluations in one retraction.
pub const RETRACTION_CAP: usize = 200;

/// Level residual at which a retraction is accepted.
pub const RETRACTION_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub struct Retraction {
    pub point: Vec<f64>,
    /// Multiplier `δ*` with `point = δ* x`.
    pub scale: f64,
    pub residual: f64,
    /// Largest observed ratio of successive plain fixed-point steps.
    pub contraction: f64,
    pub evaluations: usize,
}

/// Moves `x` along its ray onto `V = c` by iterating `δ ↦ δ − (V(δx) − c)/(b2 ‖x‖)`,
/// accelerated with Aitken extrapolation.
pub fn radial_retract(v: &LyapunovFunction, base: &[f64], x: &[f64], c: f64) -> Result<Retraction> {
    let nx = norm(x);
    if nx == 0.0 {
        return Err(Error::ZeroFiber);
    }
    if !(c > 0.0) {
        return Err(Error::InvalidInput(format!("retraction level must be positive, got {c}")));
    }
    let b2 = v.b2();
    let evals = Cell::new(0usize);
    let eval = |d: f64| -> Result<f64> {
        evals.set(evals.get() + 1);
        let y: Vec<f64> = x.iter().map(|a| a * d).collect();
        Ok(v.value(base, &y)? - c)
    };
    let done = |d: f64, r: f64, contraction: f64, evals: usize| Retraction { point: x.iter().map(|a| a * d).collect(), scale: d, residual: r.abs(), contraction, evaluations: evals };
    let step = |d: f64, r: f64| {
        let next = d - r / (b2 * nx);
        if next > 0.0 {
            next
        } else {
            0.5 * d
        }
    };
    let mut d0 = 1.0;
    let mut r0 = eval(d0)?;
    let mut contraction: f64 = 0.0;
    let mut best = (d0, r0);
    loop {
        if r0.abs() <= RETRACTION_TOL {
            return Ok(done(d0, r0, contraction, evals.get()));
        }
        let d1 = step(d0, r0);
        let r1 = eval(d1)?;
        if r1.abs() < best.1.abs() {
            best = (d1, r1);
        }
        if r1.abs() <= RETRACTION_TOL {
            return Ok(done(d1, r1, contraction, evals.get()));
        }
        let d2 = step(d1, r1);
        let r2 = eval(d2)?;
        if r2.abs() < best.1.abs() {
            best = (d2, r2);
        }
        if r2.abs() <= RETRACTION_TOL {
            return Ok(done(d2, r2, contraction, evals.get()));
        }
        let (s0, s1) = (d1 - d0, d2 - d1);
        if s0.abs() > 1e-7 * d0 {
            contraction = contraction.max((s1 / s0).abs());
        }
        let denom = s1 - s0;
        let acc = if denom != 0.0 { d0 - s0 * s0 / denom } else { d2 };
        d0 = if acc.is_finite() && acc > 0.0 { acc } else { d2 };
        let before = best.1.abs();
        r0 = eval(d0)?;
        if r0.abs() < best.1.abs() {
            best = (d0, r0);
        }
        // evaluation noise floor reached
        if best.1.abs() >= before && best.1.abs() <= 10.0 * RETRACTION_TOL {
            let (d, r) = best;
            return Ok(done(d, r, contraction, evals.get()));
        }
        if evals.get() >= RETRACTION_CAP {
            let (d, r) = best;
            if r.abs() <= 10.0 * RETRACTION_TOL {
                return Ok(done(d, r, contraction, evals.get()));
            }
            return Err(Error::RetractionCap(RETRACTION_CAP));
        }
    }
}
