use std::ops::ControlFlow;

use crate::error::{Error, Result};
use crate::flow::integrate::{run, Stepper, Tolerances};
use crate::flow::system::SystemSpec;
use crate::numerics::brent;

/// Crossing of a level surface `V = c`.
#[derive(Debug, Clone)]
pub struct Impact {
    pub time: f64,
    pub state: Vec<f64>,
}

/// Time `τ` with `V(Φ^τ(state)) = c`, searched in the direction where `V` moves toward `c`
/// (forward when `V(state) > c`, backward otherwise).
pub fn impact_time<L: Fn(&[f64]) -> f64>(system: &SystemSpec, level: L, c: f64, state: &[f64], t_max: f64, tol: &Tolerances) -> Result<Impact> {
    let rhs = |z: &[f64], out: &mut [f64]| system.rhs(z, out);
    impact_time_rhs(rhs, level, c, state, t_max, tol)
}

/// Same as [`impact_time`] for an arbitrary autonomous right-hand side.
pub fn impact_time_rhs<F, L>(mut rhs: F, level: L, c: f64, state: &[f64], t_max: f64, tol: &Tolerances) -> Result<Impact>
where
    F: FnMut(&[f64], &mut [f64]),
    L: Fn(&[f64]) -> f64,
{
    let ftol = 1e-11 * c.abs().max(f64::MIN_POSITIVE);
    let v0 = level(state) - c;
    if v0.abs() <= ftol {
        return Ok(Impact { time: 0.0, state: state.to_vec() });
    }
    let dir = if v0 > 0.0 { 1.0 } else { -1.0 };
    let above = v0 > 0.0;
    let mut bracket: Option<(f64, Vec<f64>, Vec<f64>, f64, f64, f64)> = None;
    let mut prev = v0;
    run(&mut rhs, state, 0.0, dir * t_max, tol, |s| {
        let v = level(s.y1) - c;
        if (v > 0.0) != above || v == 0.0 {
            bracket = Some((s.t0, s.y0.to_vec(), s.f0.to_vec(), s.t1, prev, v));
            return ControlFlow::Break(());
        }
        prev = v;
        ControlFlow::Continue(())
    })?;
    let Some((t0, y0, f0, t1, va, vb)) = bracket else {
        return Err(Error::NoCrossing { t_max });
    };
    let n = state.len();
    let mut st = Stepper::new(n);
    let mut y = vec![0.0; n];
    let mut fy = vec![0.0; n];
    let mut eval = |t: f64, y: &mut [f64], fy: &mut [f64]| {
        if t == t0 {
            y.copy_from_slice(&y0);
        } else {
            st.step(&mut rhs, &y0, &f0, t - t0, tol, y, fy);
        }
    };
    let (tau, _) = brent(
        |t| {
            eval(t, &mut y, &mut fy);
            level(&y) - c
        },
        t0,
        t1,
        va,
        vb,
        ftol,
        60,
    );
    eval(tau, &mut y, &mut fy);
    Ok(Impact { time: tau, state: y })
}
