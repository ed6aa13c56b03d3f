//! Dormand–Prince 5(4) with cubic Hermite dense output.

use std::ops::ControlFlow;

use crate::error::{Error, Result};
use crate::flow::system::SystemSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub h_max: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-12, max_steps: 2_000_000, h_max: f64::INFINITY }
    }
}

impl Tolerances {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Self::default() }
    }
    pub fn tight() -> Self {
        Self::new(1e-12, 1e-14)
    }
    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// One accepted step, handed to observers.
pub struct Step<'a> {
    pub t0: f64,
    pub y0: &'a [f64],
    pub f0: &'a [f64],
    pub t1: f64,
    pub y1: &'a [f64],
    pub f1: &'a [f64],
}

impl Step<'_> {
    /// Cubic Hermite interpolation inside the step.
    pub fn interpolate(&self, t: f64, out: &mut [f64]) {
        hermite(self.t0, self.y0, self.f0, self.t1, self.y1, self.f1, t, out);
    }
}

#[allow(clippy::too_many_arguments)]
fn hermite(t0: f64, y0: &[f64], f0: &[f64], t1: f64, y1: &[f64], f1: &[f64], t: f64, out: &mut [f64]) {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    for i in 0..out.len() {
        out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i];
    }
}

/// Work buffers for the Dormand–Prince pair.
pub struct Stepper {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    err: Vec<f64>,
}

impl Stepper {
    pub fn new(n: usize) -> Self {
        Self { k: std::array::from_fn(|_| vec![0.0; n]), tmp: vec![0.0; n], err: vec![0.0; n] }
    }

    /// One step of size `h` from `(y, f0)`; writes the 5th-order result into `y1` and its
    /// derivative into `f1`. Returns the scaled max-norm error estimate.
    pub fn step<F: FnMut(&[f64], &mut [f64])>(
        &mut self,
        rhs: &mut F,
        y: &[f64],
        f0: &[f64],
        h: f64,
        tol: &Tolerances,
        y1: &mut [f64],
        f1: &mut [f64],
    ) -> f64 {
        let n = y.len();
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        k1.copy_from_slice(f0);
        let tmp = &mut self.tmp;
        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        rhs(tmp, k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(tmp, k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(tmp, k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(tmp, k5);
        for i in 0..n {
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(tmp, k6);
        for i in 0..n {
            y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(y1, k7);
        f1.copy_from_slice(k7);
        let mut e: f64 = 0.0;
        for i in 0..n {
            let d = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            self.err[i] = d;
            let sc = tol.atol + tol.rtol * y[i].abs().max(y1[i].abs());
            e = e.max(d.abs() / sc);
        }
        if e.is_nan() {
            f64::INFINITY
        } else {
            e
        }
    }
}

fn initial_step<F: FnMut(&[f64], &mut [f64])>(rhs: &mut F, y: &[f64], f0: &[f64], dir: f64, span: f64, tol: &Tolerances) -> f64 {
    let n = y.len();
    let mut d0: f64 = 0.0;
    let mut d1: f64 = 0.0;
    for i in 0..n {
        let sc = tol.atol + tol.rtol * y[i].abs();
        d0 = d0.max((y[i] / sc).abs());
        d1 = d1.max((f0[i] / sc).abs());
    }
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span).min(tol.h_max);
    let mut y1 = vec![0.0; n];
    let mut f1 = vec![0.0; n];
    for i in 0..n {
        y1[i] = y[i] + dir * h0 * f0[i];
    }
    rhs(&y1, &mut f1);
    let mut d2: f64 = 0.0;
    for i in 0..n {
        let sc = tol.atol + tol.rtol * y[i].abs();
        d2 = d2.max(((f1[i] - f0[i]) / sc).abs() / h0);
    }
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1).min(span).min(tol.h_max).max(1e-12 * span.max(1.0))
}

/// Flow over time `t` with `steps` equal Dormand–Prince steps. Unlike the adaptive
/// flow, the result depends smoothly on `y0` and `t`.
pub fn flow_fixed<F: FnMut(&[f64], &mut [f64])>(mut rhs: F, y0: &[f64], t: f64, steps: usize) -> Vec<f64> {
    let n = y0.len();
    let steps = steps.max(1);
    let h = t / steps as f64;
    let tol = Tolerances::default();
    let mut stepper = Stepper::new(n);
    let mut y = y0.to_vec();
    let mut f = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut f1 = vec![0.0; n];
    rhs(&y, &mut f);
    for _ in 0..steps {
        stepper.step(&mut rhs, &y, &f, h, &tol, &mut y1, &mut f1);
        std::mem::swap(&mut y, &mut y1);
        std::mem::swap(&mut f, &mut f1);
    }
    y
}

/// Result of a run: where it stopped.
#[derive(Debug, Clone)]
pub struct RunEnd {
    pub t: f64,
    pub y: Vec<f64>,
    pub steps: usize,
    pub stopped_early: bool,
}

/// Integrates `y' = rhs(y)` from `t0` to `t1` (either direction), calling `observer` after
/// every accepted step. The observer may stop the run early.
pub fn run<F, O>(mut rhs: F, y0: &[f64], t0: f64, t1: f64, tol: &Tolerances, mut observer: O) -> Result<RunEnd>
where
    F: FnMut(&[f64], &mut [f64]),
    O: FnMut(&Step<'_>) -> ControlFlow<()>,
{
    let n = y0.len();
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t: t0 });
    }
    let span = (t1 - t0).abs();
    if span == 0.0 {
        return Ok(RunEnd { t: t0, y: y0.to_vec(), steps: 0, stopped_early: false });
    }
    let dir = if t1 > t0 { 1.0 } else { -1.0 };
    let mut y = y0.to_vec();
    let mut f = vec![0.0; n];
    rhs(&y, &mut f);
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t: t0 });
    }
    let mut y1 = vec![0.0; n];
    let mut f1 = vec![0.0; n];
    let mut st = Stepper::new(n);
    let mut t = t0;
    let mut h = initial_step(&mut rhs, &y, &f, dir, span, tol);
    let mut steps = 0usize;
    let mut rejected_last = false;
    loop {
        let remaining = (t1 - t).abs();
        if remaining <= 1e-14 * t1.abs().max(1.0) {
            break;
        }
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h });
        }
        let err = st.step(&mut rhs, &y, &f, dir * h, tol, &mut y1, &mut f1);
        if err <= 1.0 {
            let t_new = if last { t1 } else { t + dir * h };
            if y1.iter().any(|v| !v.is_finite()) || f1.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { t: t_new });
            }
            steps += 1;
            let flow = observer(&Step { t0: t, y0: &y, f0: &f, t1: t_new, y1: &y1, f1: &f1 });
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut f, &mut f1);
            t = t_new;
            if flow.is_break() {
                return Ok(RunEnd { t, y, steps, stopped_early: true });
            }
            if last {
                break;
            }
            let mut fac = if err == 0.0 { 5.0 } else { 0.9 * err.powf(-0.2) };
            fac = fac.clamp(0.2, 5.0);
            if rejected_last {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(tol.h_max);
            rejected_last = false;
            if steps >= tol.max_steps {
                return Err(Error::TooManySteps { t, max_steps: tol.max_steps });
            }
        } else {
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
            h *= fac;
            rejected_last = true;
        }
    }
    Ok(RunEnd { t: t1, y, steps, stopped_early: false })
}

/// Final state of `y' = rhs(y)` after time `t` (negative for backward).
pub fn flow_rhs<F: FnMut(&[f64], &mut [f64])>(rhs: F, y0: &[f64], t: f64, tol: &Tolerances) -> Result<Vec<f64>> {
    Ok(run(rhs, y0, 0.0, t, tol, |_| ControlFlow::Continue(()))?.y)
}

/// Stored solution with dense output.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    derivs: Vec<f64>,
    t_start: f64,
    t_end: f64,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    /// Stamps in increasing order.
    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }
    pub fn derivative(&self, i: usize) -> &[f64] {
        &self.derivs[i * self.dim..(i + 1) * self.dim]
    }
    pub fn t_start(&self) -> f64 {
        self.t_start
    }
    pub fn t_end(&self) -> f64 {
        self.t_end
    }
    /// State at the end of the requested span.
    pub fn end_state(&self) -> &[f64] {
        if self.t_end >= self.t_start {
            self.state(self.len() - 1)
        } else {
            self.state(0)
        }
    }

    /// Dense output; exact at stored stamps. `t` is clamped to the stored span.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = self.len();
        if n == 1 || t <= self.times[0] {
            out.copy_from_slice(self.state(0));
            return;
        }
        if t >= self.times[n - 1] {
            out.copy_from_slice(self.state(n - 1));
            return;
        }
        let j = self.times.partition_point(|&s| s <= t);
        let i = j - 1;
        if self.times[i] == t {
            out.copy_from_slice(self.state(i));
            return;
        }
        hermite(self.times[i], self.state(i), self.derivative(i), self.times[j], self.state(j), self.derivative(j), t, out);
    }

    /// Time derivative of the dense interpolant.
    pub fn eval_derivative(&self, t: f64) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; self.dim];
        if n == 1 {
            return out;
        }
        let j = self.times.partition_point(|&s| s <= t).clamp(1, n - 1);
        let i = j - 1;
        let (t0, t1) = (self.times[i], self.times[j]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let d00 = (6.0 * s * s - 6.0 * s) / h;
        let d10 = 3.0 * s * s - 4.0 * s + 1.0;
        let d01 = (-6.0 * s * s + 6.0 * s) / h;
        let d11 = 3.0 * s * s - 2.0 * s;
        let (y0, f0, y1, f1) = (self.state(i), self.derivative(i), self.state(j), self.derivative(j));
        for k in 0..self.dim {
            out[k] = d00 * y0[k] + d10 * f0[k] + d01 * y1[k] + d11 * f1[k];
        }
        out
    }
}

/// Integrates and stores every accepted step.
pub fn integrate_rhs<F: FnMut(&[f64], &mut [f64])>(mut rhs: F, y0: &[f64], t0: f64, t1: f64, tol: &Tolerances) -> Result<Trajectory> {
    let dim = y0.len();
    let mut times = vec![t0];
    let mut states = y0.to_vec();
    let mut f0 = vec![0.0; dim];
    rhs(y0, &mut f0);
    let mut derivs = f0;
    run(rhs, y0, t0, t1, tol, |s| {
        times.push(s.t1);
        states.extend_from_slice(s.y1);
        derivs.extend_from_slice(s.f1);
        ControlFlow::Continue(())
    })?;
    if t1 < t0 {
        times.reverse();
        let n = times.len();
        let rev = |v: &[f64]| -> Vec<f64> { (0..n).rev().flat_map(|i| v[i * dim..(i + 1) * dim].iter().copied()).collect() };
        states = rev(&states);
        derivs = rev(&derivs);
    }
    Ok(Trajectory { dim, times, states, derivs, t_start: t0, t_end: t1 })
}

/// Integrates the fast-time flow of `system` over `[t0, t1]`.
pub fn integrate(system: &SystemSpec, state: &[f64], t_span: (f64, f64), tol: &Tolerances) -> Result<Trajectory> {
    if tol.rtol <= 0.0 || tol.atol < 0.0 {
        return Err(Error::InvalidInput("tolerances must be positive".into()));
    }
    integrate_rhs(|z, out| system.rhs(z, out), state, t_span.0, t_span.1, tol)
}

/// `Φ^t(state)` without storing the trajectory.
pub fn flow(system: &SystemSpec, state: &[f64], t: f64, tol: &Tolerances) -> Result<Vec<f64>> {
    flow_rhs(|z, out| system.rhs(z, out), state, t, tol)
}
