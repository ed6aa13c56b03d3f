//! Global linearizing conjugacy onto the linearized fiber flow.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::flow::{flow, flow_with_tangent, impact_time, Tolerances};
use crate::foliation::FiberProjection;
use crate::lyapunov::LocalTrivialization;
use crate::manifold::{GraphManifold, SpectralGapReport};
use crate::numerics::norm;

/// A function that decreases along orbits near the manifold; its level sets serve as
/// transfer surfaces.
pub trait LevelFunction: Send + Sync + fmt::Debug {
    fn level(&self, z: &[f64]) -> f64;
}

/// `‖y − F(x)‖`.
#[derive(Debug, Clone)]
pub struct GraphDistance {
    manifold: Arc<GraphManifold>,
}

impl GraphDistance {
    pub fn new(manifold: Arc<GraphManifold>) -> Self {
        Self { manifold }
    }
}

impl LevelFunction for GraphDistance {
    fn level(&self, z: &[f64]) -> f64 {
        self.manifold.graph_distance(z)
    }
}

/// Outcome of the smooth-linearization rate inequalities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateCertificate {
    pub r: usize,
    /// `0 ≤ δ < −α ≤ −β`.
    pub ordering: bool,
    /// `−α > r δ`.
    pub tangential: bool,
    /// `−β < −2α − (r−1) δ`.
    pub gap: bool,
    pub tangential_margin: f64,
    pub gap_margin: f64,
    pub certified: bool,
}

pub fn rate_conditions(delta: f64, alpha: f64, beta: f64, r: usize) -> RateCertificate {
    let rf = r as f64;
    let ordering = 0.0 <= delta && delta < -alpha && -alpha <= -beta;
    let tangential_margin = -alpha - rf * delta;
    let gap_margin = -2.0 * alpha - (rf - 1.0) * delta + beta;
    let tangential = tangential_margin > 0.0;
    let gap = gap_margin > 0.0;
    RateCertificate { r, ordering, tangential, gap, tangential_margin, gap_margin, certified: ordering && tangential && gap && r >= 2 }
}

/// Certification from the fitted rates of a spectral report.
pub fn rate_conditions_check(report: &SpectralGapReport, r: usize) -> RateCertificate {
    rate_conditions(report.fitted.delta, report.fitted.alpha, report.fitted.beta, r)
}

/// `(base, fiber coordinate)` of the first-order straightening.
pub fn local_conjugacy(fp: &FiberProjection, point: &[f64], t_total: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    fp.fiber_coordinate(point, t_total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualStats {
    pub sup: f64,
    pub mean: f64,
    pub samples: usize,
}

/// Value of the conjugacy at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugacyValue {
    pub base: Vec<f64>,
    /// Coordinates in the frame over `base`.
    pub fiber: Vec<f64>,
    /// Depth of the returned evaluation.
    pub depth: usize,
    /// Difference between the two deepest evaluations.
    pub residual: f64,
    /// Step differences between successive depths.
    pub increments: Vec<f64>,
    pub diverged: bool,
    /// Impact time on the first transfer surface, `None` when the point starts inside it.
    pub impact_time: Option<f64>,
}

/// `φ(x) = DΦ^{-τ(x)} φ_loc Φ^{τ(x)}(x)` evaluated on the transfer surfaces `c / 2^d`,
/// `d = 0..=depth`.
#[derive(Debug, Clone)]
pub struct ConjugacyMap {
    fp: Arc<FiberProjection>,
    rho0: Arc<LocalTrivialization>,
    level_fn: Arc<dyn LevelFunction>,
    c: f64,
    depth: usize,
    requested_depth: usize,
    certified: bool,
    /// Horizon for projections and impact searches.
    pub t_max: f64,
    /// Integration tolerances; the absolute part is tiny because deep levels sit close to
    /// the manifold.
    pub tol: Tolerances,
    stats: Option<ResidualStats>,
}

impl ConjugacyMap {
    /// `depth` is honored only when `certified`; otherwise the map stays at depth 0.
    pub fn new(fp: Arc<FiberProjection>, level_fn: Arc<dyn LevelFunction>, c: f64, depth: usize, certified: bool) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidInput(format!("transfer level must be positive, got {c}")));
        }
        let rho0 = Arc::new(LocalTrivialization::new(fp.clone())?);
        Ok(Self { fp, rho0, level_fn, c, depth: if certified { depth } else { 0 }, requested_depth: depth, certified, t_max: 400.0, tol: Tolerances::new(1e-12, 1e-20), stats: None })
    }

    /// Graph-distance levels with `c` equal to the trusted local radius.
    pub fn with_defaults(fp: Arc<FiberProjection>, depth: usize, certified: bool) -> Result<Self> {
        let c = fp.local_radius();
        let level = Arc::new(GraphDistance::new(fp.manifold_arc().clone()));
        Self::new(fp, level, c, depth, certified)
    }

    pub fn projection(&self) -> &FiberProjection {
        &self.fp
    }
    pub fn projection_arc(&self) -> &Arc<FiberProjection> {
        &self.fp
    }
    pub fn level(&self) -> f64 {
        self.c
    }
    pub fn depth(&self) -> usize {
        self.depth
    }
    pub fn requested_depth(&self) -> usize {
        self.requested_depth
    }
    pub fn certified(&self) -> bool {
        self.certified
    }
    pub fn stats(&self) -> Option<ResidualStats> {
        self.stats
    }
    pub fn level_fn(&self) -> &dyn LevelFunction {
        &*self.level_fn
    }
    pub fn deepest_level(&self) -> f64 {
        self.c / (1u64 << self.depth) as f64
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<ConjugacyValue> {
        self.evaluate_to_depth(point, self.depth)
    }

    pub fn evaluate_to_depth(&self, point: &[f64], depth: usize) -> Result<ConjugacyValue> {
        let fp = &*self.fp;
        let (system, manifold) = (fp.system(), fp.manifold());
        let base = fp.global_projection(point, self.t_max)?;
        let mut z = point.to_vec();
        let mut t = 0.0;
        let mut orbit = manifold.lift(&base);
        let mut image = self.splitting(&base);
        let mut values: Vec<DVector<f64>> = Vec::with_capacity(depth + 1);
        let mut first_impact = None;
        for d in 0..=depth {
            let c_d = self.c / (1u64 << d) as f64;
            if self.level_fn.level(&z) > c_d {
                let imp = impact_time(system, |y| self.level_fn.level(y), c_d, &z, self.t_max - t, &self.tol)?;
                if d == 0 {
                    first_impact = Some(imp.time);
                }
                let jet = flow_with_tangent(system, &orbit, &image, imp.time, &self.tol)?;
                orbit = jet.state;
                image = jet.tangent;
                z = imp.state;
                t += imp.time;
            }
            let value = if t == 0.0 { DVector::from_vec(fp.fiber_vector(&base, &z)) } else { self.fiber_part(&image, &orbit, &z)? };
            values.push(value);
        }
        let increments: Vec<f64> = values.windows(2).map(|p| (&p[1] - &p[0]).norm()).collect();
        let scale = 1.0 + values[0].norm();
        let diverged = increments.len() >= 2 && {
            let last = increments[increments.len() - 1];
            last > 1e-4 * scale && last > 1.5 * increments[0]
        };
        let (fiber, used) = if diverged { (values[0].clone(), 0) } else { (values[depth].clone(), depth) };
        let residual = increments.last().copied().unwrap_or(0.0);
        Ok(ConjugacyValue { base, fiber: fiber.as_slice().to_vec(), depth: used, residual, increments, diverged, impact_time: first_impact })
    }

    /// `[T(x) | E(x)]`: tangent basis of the graph followed by the stable frame.
    fn splitting(&self, base: &[f64]) -> DMatrix<f64> {
        let fp = &*self.fp;
        let (ns, k) = (fp.n_slow(), fp.k());
        let e = fp.frames().at(base);
        let n = e.nrows();
        let mut m = DMatrix::zeros(n, ns + k);
        if ns > 0 {
            m.view_mut((0, 0), (n, ns)).copy_from(&fp.manifold().tangent_basis(base));
        }
        m.view_mut((0, ns), (n, k)).copy_from(&e);
        m
    }

    /// Stable-bundle coefficients of `z − orbit` in the propagated splitting `image`.
    fn fiber_part(&self, image: &DMatrix<f64>, orbit: &[f64], z: &[f64]) -> Result<DVector<f64>> {
        let ns = self.fp.n_slow();
        let mut d: Vec<f64> = z.iter().zip(orbit).map(|(a, b)| a - b).collect();
        self.fp.system().slow_diff(&z[..ns], &orbit[..ns], &mut d[..ns]);
        let c = image.clone().lu().solve(&DVector::from_vec(d)).ok_or_else(|| Error::InvalidInput("degenerate linearized splitting".into()))?;
        Ok(c.rows(ns, c.nrows() - ns).into_owned())
    }

    /// Base point `x_t` and the linear fiber flow `DΦ^t|E^s` in frame coordinates, read off
    /// through the splitting at `x_t`.
    pub fn linear_flow(&self, base: &[f64], t: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let fp = &*self.fp;
        let ns = fp.n_slow();
        let k = fp.k();
        let jet = flow_with_tangent(fp.system(), &fp.manifold().lift(base), &fp.frames().at(base), t, &self.tol)?;
        let x_t = jet.state[..ns].to_vec();
        let c = self.splitting(&x_t).lu().solve(&jet.tangent).ok_or_else(|| Error::InvalidInput("degenerate linearized splitting".into()))?;
        Ok((x_t, c.rows(ns, k).into_owned()))
    }

    /// Point whose conjugacy value is `(base, w)`: push `w` forward with the linear flow
    /// until the seed surface is reached, invert the seed there and flow back.
    pub fn inverse(&self, base: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let fp = &*self.fp;
        if norm(w) == 0.0 {
            return Ok(fp.manifold().lift(base));
        }
        let ns = fp.n_slow();
        let k = fp.k();
        let target = self.deepest_level();
        let wv = DVector::from_column_slice(w);
        let start = self.splitting(base);
        let seed_at = |t: f64| -> Result<Vec<f64>> {
            if t == 0.0 {
                return self.rho0.forward(base, w);
            }
            let jet = flow_with_tangent(fp.system(), &fp.manifold().lift(base), &start, t, &self.tol)?;
            let x_t = &jet.state[..ns];
            let e_t = fp.frames().at(x_t);
            let pushed = e_t.transpose() * jet.tangent.columns(ns, k);
            let mut v = &pushed * &wv + DVector::from_vec(fp.fiber_vector(x_t, &jet.state));
            let mut p = self.rho0.forward(x_t, v.as_slice())?;
            for _ in 0..4 {
                let miss = &wv - self.fiber_part(&jet.tangent, &jet.state, &p)?;
                if miss.norm() <= 1e-13 * (1.0 + wv.norm()) {
                    break;
                }
                v += &pushed * miss;
                p = self.rho0.forward(x_t, v.as_slice())?;
            }
            Ok(p)
        };
        let (_, r_max) = fp.manifold().fast_spectrum_bounds(fp.system());
        let rate = r_max.abs();
        let guess = ((norm(w) / target).ln() / rate).max(0.0);
        let f = |t: f64| -> Result<(f64, Vec<f64>)> {
            let p = seed_at(t)?;
            Ok(((self.level_fn.level(&p) / target).ln(), p))
        };
        // vectors far outside the seed's range may have no seed point at all
        if let Ok((f0, p0)) = f(0.0) {
            if f0 <= 0.0 {
                return Ok(p0);
            }
        }
        let mut ta = guess;
        let (mut fa, _) = f(ta)?;
        let mut tb = ta + 0.1 / rate;
        let (mut fb, mut pb) = f(tb)?;
        for _ in 0..40 {
            if fb.abs() < 1e-12 {
                break;
            }
            let slope = (fb - fa) / (tb - ta);
            if !(slope < 0.0) {
                if fb.abs() < 1e-8 {
                    break;
                }
                return Err(Error::NewtonFailed { context: "conjugacy inverse: level not decreasing".into(), residual: fb });
            }
            let next = (tb - fb / slope).max(0.5 * tb);
            ta = tb;
            fa = fb;
            tb = next;
            let r = f(tb)?;
            fb = r.0;
            pb = r.1;
        }
        if fb.abs() > 1e-8 {
            return Err(Error::NewtonFailed { context: "conjugacy inverse: seed surface not reached".into(), residual: fb });
        }
        flow(fp.system(), &pb, -tb, &self.tol)
    }

    /// Sup and mean of `‖φ(Φ^t x) − DΦ^t φ(x)‖ / max(‖φ(x)‖, 1e-6)` over the samples and times;
    /// the result is recorded on the map.
    pub fn validate(&mut self, samples: &[Vec<f64>], times: &[f64]) -> Result<ResidualStats> {
        let stats = equivariance_defect(self, samples, times)?;
        self.stats = Some(stats);
        Ok(stats)
    }
}

/// Equivariance defect of `φ` over sample points and times.
pub fn equivariance_defect(map: &ConjugacyMap, samples: &[Vec<f64>], times: &[f64]) -> Result<ResidualStats> {
    use rayon::prelude::*;
    let fp = map.projection();
    let per: Vec<Result<Vec<f64>>> = samples
        .par_iter()
        .map(|x| {
            let phi = map.evaluate(x)?;
            let denom = norm(&phi.fiber).max(1e-6);
            let mut out = Vec::with_capacity(times.len());
            for &t in times {
                let moved = flow(fp.system(), x, t, &map.tol)?;
                let lhs = map.evaluate(&moved)?;
                let (_, c) = map.linear_flow(&phi.base, t)?;
                let rhs = c * DVector::from_column_slice(&phi.fiber);
                let d: f64 = lhs.fiber.iter().zip(rhs.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                out.push(d / denom);
            }
            Ok(out)
        })
        .collect();
    let all: Vec<f64> = per.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
    let sup = all.iter().copied().fold(0.0, f64::max);
    let mean = if all.is_empty() { 0.0 } else { all.iter().sum::<f64>() / all.len() as f64 };
    Ok(ResidualStats { sup, mean, samples: all.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_arithmetic() {
        assert!(rate_conditions(0.01, -1.0, -1.5, 3).certified);
        let c = rate_conditions(0.4, -1.0, -1.5, 3);
        assert!(!c.tangential && !c.certified);
    }
}
