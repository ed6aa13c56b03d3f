use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::flow::integrate_rhs;
use crate::foliation::FiberProjection;

/// Parallel transport of fiber vectors along base orbits for the connection obtained by
/// projecting the ambient derivative onto the stable bundle.
///
/// In frame coordinates the transport equation reads `a' = −Eᵀ E' a` with a skew
/// generator, which is integrated with Cayley steps so norms are preserved exactly.
#[derive(Debug, Clone)]
pub struct TransportOperator {
    fp: Arc<FiberProjection>,
    /// Largest Cayley step in fast time.
    pub max_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transported {
    pub base: Vec<f64>,
    /// Frame coordinates over `base`.
    pub coords: Vec<f64>,
}

impl TransportOperator {
    pub fn new(fp: Arc<FiberProjection>) -> Self {
        Self { fp, max_step: 0.02 }
    }

    pub fn projection(&self) -> &FiberProjection {
        &self.fp
    }

    /// Base orbit endpoint and the transported frame coordinates of `v` after time `t ≥ 0`.
    pub fn transport(&self, base: &[f64], t: f64, v: &[f64]) -> Result<Transported> {
        if t < 0.0 {
            return Err(Error::InvalidInput(format!("transport time must be nonnegative, got {t}")));
        }
        let fp = &*self.fp;
        let (system, manifold, frames) = (fp.system(), fp.manifold(), fp.frames());
        let ns = fp.n_slow();
        if t == 0.0 || ns == 0 || system.eps() == 0.0 {
            return Ok(Transported { base: base.to_vec(), coords: v.to_vec() });
        }
        let orbit = integrate_rhs(|x, o| manifold.restricted_field(system, x, o), base, 0.0, t, &fp.tol)?;
        let end = orbit.end_state().to_vec();
        manifold.check_domain(&end)?;
        if frames.k() == 1 {
            return Ok(Transported { base: end, coords: v.to_vec() });
        }
        let steps = (t / self.max_step).ceil().max(1.0) as usize;
        let h = t / steps as f64;
        let k = frames.k();
        let id = DMatrix::<f64>::identity(k, k);
        let mut a = DVector::from_column_slice(v);
        for i in 0..steps {
            let tm = (i as f64 + 0.5) * h;
            let x = orbit.eval(tm);
            let mut dx = vec![0.0; ns];
            manifold.restricted_field(system, &x, &mut dx);
            let e = frames.at(&x);
            let omega = e.transpose() * frames.derivative(&x, &dx);
            let skew = 0.5 * (&omega - omega.transpose());
            let lhs = &id + 0.5 * h * &skew;
            let rhs = (&id - 0.5 * h * &skew) * &a;
            a = lhs.lu().solve(&rhs).ok_or_else(|| Error::InvalidInput("singular Cayley step".into()))?;
        }
        Ok(Transported { base: end, coords: a.as_slice().to_vec() })
    }

    /// Transported vector as an ambient vector in the fiber over the orbit endpoint.
    pub fn transport_ambient(&self, base: &[f64], t: f64, v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let tr = self.transport(base, t, v)?;
        let w = self.fp.frames().at(&tr.base) * DVector::from_vec(tr.coords);
        Ok((tr.base, w.as_slice().to_vec()))
    }
}
