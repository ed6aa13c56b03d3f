//! Projection along the stable fibers onto the slow manifold.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::flow::{flow, wrap_pi, SystemSpec, Tolerances, Topology};
use crate::manifold::{GraphManifold, StableFrameField};
use crate::numerics::{linear_fit, norm};

/// Point manifolds have no grid spacing to scale from.
const POINT_LOCAL_RADIUS: f64 = 1e-5;

/// Fiber projection `P^s` for a computed graph and its stable frames.
#[derive(Debug, Clone)]
pub struct FiberProjection {
    system: SystemSpec,
    manifold: Arc<GraphManifold>,
    frames: Arc<StableFrameField>,
    local_radius: f64,
    t_step: f64,
    /// Base-point change below which the global refinement stops.
    pub refine_tol: f64,
    pub tol: Tolerances,
}

impl FiberProjection {
    /// Uses the default trusted radius and a flow increment of `1/|r_max|`.
    pub fn new(system: &SystemSpec, manifold: Arc<GraphManifold>, frames: Arc<StableFrameField>) -> Result<Self> {
        let local_radius = default_local_radius(&manifold);
        let (_, r_max) = manifold.fast_spectrum_bounds(system);
        if !(r_max < 0.0) {
            return Err(Error::InvalidInput(format!("manifold is not attracting: largest fast rate {r_max}")));
        }
        Self::with_radius(system, manifold, frames, local_radius, 1.0 / r_max.abs())
    }

    pub fn with_radius(system: &SystemSpec, manifold: Arc<GraphManifold>, frames: Arc<StableFrameField>, local_radius: f64, t_step: f64) -> Result<Self> {
        if !(local_radius > 0.0) || !(t_step > 0.0) {
            return Err(Error::InvalidInput("local radius and flow increment must be positive".into()));
        }
        Ok(Self { system: system.clone(), manifold, frames, local_radius, t_step, refine_tol: 1e-11, tol: Tolerances::tight() })
    }

    pub fn system(&self) -> &SystemSpec {
        &self.system
    }
    pub fn manifold(&self) -> &GraphManifold {
        &self.manifold
    }
    pub fn manifold_arc(&self) -> &Arc<GraphManifold> {
        &self.manifold
    }
    pub fn frames(&self) -> &StableFrameField {
        &self.frames
    }
    pub fn frames_arc(&self) -> &Arc<StableFrameField> {
        &self.frames
    }
    pub fn local_radius(&self) -> f64 {
        self.local_radius
    }
    pub fn t_step(&self) -> f64 {
        self.t_step
    }
    pub fn n_slow(&self) -> usize {
        self.manifold.n_slow()
    }
    pub fn k(&self) -> usize {
        self.frames.k()
    }

    /// Base point `m` with `point − (m, F(m))` in the span of the frame at `m`.
    pub fn local_projection(&self, point: &[f64]) -> Result<Vec<f64>> {
        let ns = self.n_slow();
        if ns == 0 {
            return Ok(Vec::new());
        }
        let n = self.manifold.dim();
        let k = self.k();
        let mut b = point[..ns].to_vec();
        let mut a = self.frames.at(&b).transpose() * DVector::from_column_slice(&diff(point, &self.manifold.lift(&b)));
        let scale = 1.0 + norm(point);
        let mut res = f64::INFINITY;
        for _ in 0..40 {
            let e = self.frames.at(&b);
            let r = DVector::from_vec(self.manifold.lift(&b)) + &e * &a - DVector::from_column_slice(point);
            res = r.norm();
            if res <= 1e-14 * scale {
                return Ok(b);
            }
            let mut jac = DMatrix::zeros(n, n);
            jac.view_mut((0, 0), (n, ns)).copy_from(&self.manifold.tangent_basis(&b));
            let mut dir = vec![0.0; ns];
            for j in 0..ns {
                dir.fill(0.0);
                dir[j] = 1.0;
                let col = self.frames.derivative(&b, &dir) * &a;
                let mut c = jac.column_mut(j);
                c += col;
            }
            jac.view_mut((0, ns), (n, k)).copy_from(&e);
            let step = jac.lu().solve(&r).ok_or_else(|| Error::NewtonFailed { context: "local fiber projection: singular system".into(), residual: res })?;
            for j in 0..ns {
                b[j] -= step[j];
            }
            a -= step.rows(ns, k);
            if !b.iter().all(|v| v.is_finite()) {
                break;
            }
        }
        if res <= 1e-11 * scale {
            Ok(b)
        } else {
            Err(Error::NewtonFailed { context: "local fiber projection".into(), residual: res })
        }
    }

    /// `P^s(point) = Φ^{-t} P^s_loc Φ^t(point)` with `t` increased until the base settles.
    pub fn global_projection(&self, point: &[f64], t_total: f64) -> Result<Vec<f64>> {
        let ns = self.n_slow();
        if ns == 0 {
            return Ok(Vec::new());
        }
        let mut z = point.to_vec();
        let mut t = 0.0;
        while self.manifold.graph_distance(&z) > self.local_radius {
            if t >= t_total {
                return Err(Error::BasinEscape { t_total });
            }
            z = flow(&self.system, &z, self.t_step, &self.tol)?;
            t += self.t_step;
            self.manifold.check_domain(&z[..ns])?;
        }
        let mut prev = self.pull_back(&z, t)?;
        let mut prev_change = f64::INFINITY;
        loop {
            if self.manifold.graph_distance(&z) == 0.0 {
                self.align(&mut prev, point);
                return Ok(prev);
            }
            z = flow(&self.system, &z, self.t_step, &self.tol)?;
            t += self.t_step;
            self.manifold.check_domain(&z[..ns])?;
            let b = self.pull_back(&z, t)?;
            let mut d = vec![0.0; ns];
            self.system.slow_diff(&b, &prev, &mut d);
            let change = norm(&d);
            let settled = change < self.refine_tol || (change < 1e3 * self.refine_tol && change >= prev_change);
            if settled {
                let mut b = b;
                self.align(&mut b, point);
                return Ok(b);
            }
            if t >= t_total + 40.0 * self.t_step {
                return Err(Error::BasinEscape { t_total });
            }
            prev = b;
            prev_change = change;
        }
    }

    fn pull_back(&self, z: &[f64], t: f64) -> Result<Vec<f64>> {
        let b = self.local_projection(z)?;
        self.manifold.slow_flow(&self.system, &b, -t, &self.tol)
    }

    /// Shifts circle coordinates of `b` by whole turns to lie nearest to `reference`.
    pub fn align(&self, b: &mut [f64], reference: &[f64]) {
        for (i, topo) in self.system.topology().iter().enumerate() {
            if *topo == Topology::Circle {
                b[i] = reference[i] + wrap_pi(b[i] - reference[i]);
            }
        }
    }

    /// `(P^s(point), E(base)ᵀ (point − (base, F(base))))`.
    pub fn fiber_coordinate(&self, point: &[f64], t_total: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let base = self.global_projection(point, t_total)?;
        let v = self.fiber_vector(&base, point);
        Ok((base, v))
    }

    /// Frame coordinates of `point − lift(base)`, wrapping circle coordinates.
    pub fn fiber_vector(&self, base: &[f64], point: &[f64]) -> Vec<f64> {
        let e = self.frames.at(base);
        let d = self.offset(base, point);
        (e.transpose() * DVector::from_vec(d)).as_slice().to_vec()
    }

    /// `point − lift(base)` with the slow part wrapped on circles.
    pub fn offset(&self, base: &[f64], point: &[f64]) -> Vec<f64> {
        let ns = self.n_slow();
        let lift = self.manifold.lift(base);
        let mut d = vec![0.0; lift.len()];
        self.system.slow_diff(&point[..ns], base, &mut d[..ns]);
        for i in ns..lift.len() {
            d[i] = point[i] - lift[i];
        }
        d
    }

    /// `lift(base) + E(base) v`.
    pub fn embed(&self, base: &[f64], v: &[f64]) -> Vec<f64> {
        let e = self.frames.at(base);
        let w = e * DVector::from_column_slice(v);
        self.manifold.lift(base).iter().zip(w.iter()).map(|(a, b)| a + b).collect()
    }

    /// Fitted exponent of `dist(Φ^t x, Φ^t lift(P^s x))` over the given times.
    pub fn shadowing_rate(&self, x: &[f64], times: &[f64], t_total: f64) -> Result<f64> {
        let base = self.global_projection(x, t_total)?;
        let on = self.manifold.lift(&base);
        let logs = times
            .iter()
            .map(|&t| {
                let a = flow(&self.system, x, t, &self.tol)?;
                let b = flow(&self.system, &on, t, &self.tol)?;
                Ok(self.system.state_distance(&a, &b).ln())
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(linear_fit(times, &logs).0)
    }
}

/// `0.1 · min spacing / Lip(F)`, capped at 0.1.
pub fn default_local_radius(manifold: &GraphManifold) -> f64 {
    if manifold.n_slow() == 0 {
        return POINT_LOCAL_RADIUS;
    }
    let lip = manifold.lipschitz().max(1e-3);
    (0.1 * manifold.grid().min_spacing() / lip).min(0.1)
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
