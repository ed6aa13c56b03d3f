use std::sync::Arc;

use crate::error::Result;
use crate::flow::flow;
use crate::lyapunov::function::LyapunovFunction;
use crate::lyapunov::retract::radial_retract;
use crate::lyapunov::transport::{TransportOperator, Transported};
use crate::numerics::norm;

/// `χ(δ) = δ` on `[0, ½]`, then `½ + ½ tanh(2(δ − ½))`; `τ(δ) = δ − χ(δ)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Reparametrizers;

impl Reparametrizers {
    pub fn chi(&self, d: f64) -> f64 {
        if d <= 0.5 {
            d
        } else {
            0.5 + 0.5 * (2.0 * (d - 0.5)).tanh()
        }
    }
    pub fn chi_derivative(&self, d: f64) -> f64 {
        if d <= 0.5 {
            1.0
        } else {
            let c = (2.0 * (d - 0.5)).cosh();
            1.0 / (c * c)
        }
    }
    pub fn tau(&self, d: f64) -> f64 {
        d - self.chi(d)
    }
}

/// `Θ^t(x) = R_{V(x)} Π^t(x)`: transport then retract back to the starting level.
pub fn nonlinear_transport(v: &LyapunovFunction, op: &TransportOperator, base: &[f64], x: &[f64], t: f64) -> Result<Transported> {
    let level = v.value(base, x)?;
    nonlinear_transport_at(v, op, base, x, t, level)
}

fn nonlinear_transport_at(v: &LyapunovFunction, op: &TransportOperator, base: &[f64], x: &[f64], t: f64, level: f64) -> Result<Transported> {
    let tr = op.transport(base, t, x)?;
    let r = radial_retract(v, &tr.base, &tr.coords, level)?;
    Ok(Transported { base: tr.base, coords: r.point })
}

/// Image of a fiber vector under the global bundle map, with the intermediate data.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleImage {
    pub point: Vec<f64>,
    pub level: f64,
    /// Time assigned by `τ(V(x))`.
    pub time: f64,
}

/// Global disk-bundle isomorphism `ρ(x) = Φ^{-t(x)} ρ0 Θ^{t(x)} ξ(x)` with
/// `ξ(x) = R_{χ(V(x))}(x)` and `t(x) = τ(V(x))`.
#[derive(Debug, Clone)]
pub struct BundleIsomorphism {
    lyapunov: Arc<LyapunovFunction>,
    transport: TransportOperator,
    reps: Reparametrizers,
}

impl BundleIsomorphism {
    pub fn new(lyapunov: Arc<LyapunovFunction>, transport: TransportOperator) -> Self {
        Self { lyapunov, transport, reps: Reparametrizers }
    }

    pub fn lyapunov(&self) -> &LyapunovFunction {
        &self.lyapunov
    }
    pub fn transport(&self) -> &TransportOperator {
        &self.transport
    }
    pub fn reparametrizers(&self) -> &Reparametrizers {
        &self.reps
    }

    pub fn map(&self, base: &[f64], x: &[f64]) -> Result<BundleImage> {
        let v = &*self.lyapunov;
        let rho0 = v.trivialization();
        if norm(x) == 0.0 {
            return Ok(BundleImage { point: v.projection().manifold().lift(base), level: 0.0, time: 0.0 });
        }
        let level = v.value(base, x)?;
        if level <= 0.5 {
            return Ok(BundleImage { point: rho0.forward(base, x)?, level, time: 0.0 });
        }
        let time = self.reps.tau(level);
        let xi = radial_retract(v, base, x, self.reps.chi(level))?;
        let moved = nonlinear_transport_at(v, &self.transport, base, &xi.point, time, self.reps.chi(level))?;
        let p = rho0.forward(&moved.base, &moved.coords)?;
        let point = flow(v.projection().system(), &p, -time, &v.projection().tol)?;
        Ok(BundleImage { point, level, time })
    }
}
