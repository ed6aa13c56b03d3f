use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::flow::{flow_fixed, flow_with_tangent_fixed};
use crate::foliation::FiberProjection;
use crate::numerics::norm;

/// Local trivialization: a fiber vector `v` over `m` maps to the point of the stable
/// fiber of `m` whose frame coordinates relative to `(m, F(m))` are `v`.
///
/// The point is found by shooting: a tiny frame offset over the forward base orbit is
/// flowed back and corrected by Newton until its coordinates match `v`.
#[derive(Debug, Clone)]
pub struct LocalTrivialization {
    fp: Arc<FiberProjection>,
    rate: f64,
    /// Fixed shooting step, scaled by the fastest rate.
    step: f64,
    /// Offsets below this norm are taken on the linear fiber directly.
    pub floor: f64,
    /// Largest backward amplification used when shooting.
    pub gain: f64,
    /// Horizon handed to the global projection by [`LocalTrivialization::inverse`].
    pub t_total: f64,
}

impl LocalTrivialization {
    pub fn new(fp: Arc<FiberProjection>) -> Result<Self> {
        let (r_min, r_max) = fp.manifold().fast_spectrum_bounds(fp.system());
        if !(r_max < 0.0) {
            return Err(Error::InvalidInput(format!("manifold is not attracting: largest fast rate {r_max}")));
        }
        Ok(Self { fp, rate: r_max.abs(), step: 0.02 / r_min.abs().max(1.0), floor: 1e-6, gain: 1e3, t_total: 60.0 })
    }

    pub fn projection(&self) -> &FiberProjection {
        &self.fp
    }
    pub fn projection_arc(&self) -> &Arc<FiberProjection> {
        &self.fp
    }

    /// Shooting time for a vector of norm `r`.
    pub fn shooting_time(&self, r: f64) -> f64 {
        if r <= self.floor {
            0.0
        } else {
            (r / self.floor).min(self.gain).ln() / self.rate
        }
    }

    pub fn forward(&self, base: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let r = norm(v);
        let t = self.shooting_time(r);
        if t == 0.0 {
            return Ok(self.fp.embed(base, v));
        }
        let fp = &*self.fp;
        let (system, manifold, frames) = (fp.system(), fp.manifold(), fp.frames());
        let ns = fp.n_slow();
        let k = fp.k();
        let tr = frames.transfer(system, manifold, base, t, &fp.tol)?;
        let x_t = tr.state[..ns].to_vec();
        let e_t = frames.at(&x_t);
        let e_m = frames.at(base);
        let target = DVector::from_column_slice(v);
        let mut s = &tr.compressed * &target;
        let lift_t = DVector::from_vec(manifold.lift(&x_t));
        let steps = (t / self.step).ceil() as usize;
        let mut res = f64::INFINITY;
        for _ in 0..30 {
            let q = &lift_t + &e_t * &s;
            let jet = flow_with_tangent_fixed(system, q.as_slice(), &e_t, -t, steps);
            let coords = e_m.transpose() * DVector::from_vec(fp.offset(base, &jet.state));
            let resid = coords - &target;
            let prev = res;
            res = resid.norm();
            if res <= 1e-14 * (1.0 + r) || (res <= 1e-10 * (1.0 + r) && res >= 0.5 * prev) {
                return Ok(jet.state);
            }
            let jac = e_m.transpose() * &jet.tangent;
            let step = jac.lu().solve(&resid).ok_or_else(|| Error::NewtonFailed { context: "local trivialization: singular fiber map".into(), residual: res })?;
            s -= step;
            if s.len() != k || !s.iter().all(|x| x.is_finite()) {
                break;
            }
        }
        Err(Error::NewtonFailed { context: "local trivialization".into(), residual: res })
    }

    /// Base point and fiber coordinate of a point near the manifold.
    pub fn inverse(&self, point: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.fp.fiber_coordinate(point, self.t_total)
    }

    /// Pulled-back flow `ρ0⁻¹ Φ^t ρ0` sampled at the increasing `times ≥ 0`.
    /// Each entry is the base point and frame coordinates at that time.
    pub fn pullback(&self, base: &[f64], v: &[f64], times: &[f64]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        let p = self.forward(base, v)?;
        let fp = &*self.fp;
        let n = p.len();
        let ns = fp.n_slow();
        let system = fp.system();
        let mut z = p;
        z.extend(fp.manifold().lift(base));
        let mut out = Vec::with_capacity(times.len());
        let mut t_prev = 0.0;
        for &t in times {
            if t > t_prev {
                let steps = ((t - t_prev) / self.step).ceil() as usize;
                z = flow_fixed(
                    |a, o| {
                        system.rhs(&a[..n], &mut o[..n]);
                        system.rhs(&a[n..], &mut o[n..]);
                    },
                    &z,
                    t - t_prev,
                    steps,
                );
                if !z.iter().all(|x| x.is_finite()) {
                    return Err(Error::NonFinite { t });
                }
                t_prev = t;
            }
            let x_t = z[n..n + ns].to_vec();
            let w = fp.fiber_vector(&x_t, &z[..n]);
            out.push((x_t, w));
        }
        Ok(out)
    }
}
