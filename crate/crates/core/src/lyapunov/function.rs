use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::foliation::FiberProjection;
use crate::lyapunov::rho0::LocalTrivialization;
use crate::numerics::{gauss_legendre_unit, min_norm, norm, spectral_norm};

#[derive(Debug, Clone)]
pub struct LyapunovOptions {
    pub tube_radius: f64,
    /// Inner blend radius as a fraction of the tube radius.
    pub inner_fraction: f64,
    /// Number of radial pairs used to estimate the slope bounds.
    pub design_size: usize,
    pub base_samples: usize,
    pub quadrature_nodes: usize,
    pub max_shrinks: usize,
    pub seed: u64,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        Self { tube_radius: 0.5, inner_fraction: 0.5, design_size: 10_000, base_samples: 24, quadrature_nodes: 10, max_shrinks: 4, seed: 7 }
    }
}

/// Constants measured while building a [`LyapunovFunction`].
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovConstants {
    /// Smallest co-norm of the linearized fiber flow over unit time.
    pub kappa: f64,
    /// Norm of the linearized time-one fiber map.
    pub contraction: f64,
    /// Measured Lipschitz distance between the pulled-back flow and its linearization.
    pub mu_measured: f64,
    /// The value used for normalization.
    pub mu: f64,
    /// `min(κ/3, 1 − contraction)`, which `1.5 μ_measured` must stay below.
    pub mu_bound: f64,
    /// Outer coefficient of the norm term.
    pub beta: f64,
    pub beta_theory: f64,
    pub b1: f64,
    pub b2: f64,
    pub b1_theory: f64,
    /// Sup of the radial slopes of the normalized core.
    pub core_slope_max: f64,
    pub tube: f64,
    pub inner: f64,
    pub shrinks: usize,
    /// Whether the unit sublevel set of the core lies inside the inner radius on all sampled rays.
    pub sublevel_inside: bool,
}

/// Radially monotone Lyapunov function on the stable bundle.
///
/// Inside the inner radius `V` is the normalized integral `g(v) = ∫₀¹ ‖Ψ^t v‖ dt` of the
/// pulled-back flow; beyond the tube radius it is `β ‖v‖`; a smooth bump blends the two.
#[derive(Debug, Clone)]
pub struct LyapunovFunction {
    rho0: Arc<LocalTrivialization>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    scale: f64,
    constants: LyapunovConstants,
}

/// `C^∞` step from 0 at `s ≤ 0` to 1 at `s ≥ 1`.
pub fn smooth_step(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / s).exp();
    let b = (-1.0 / (1.0 - s)).exp();
    a / (a + b)
}

impl LyapunovFunction {
    pub fn constants(&self) -> &LyapunovConstants {
        &self.constants
    }
    pub fn trivialization(&self) -> &LocalTrivialization {
        &self.rho0
    }
    pub fn trivialization_arc(&self) -> &Arc<LocalTrivialization> {
        &self.rho0
    }
    pub fn projection(&self) -> &FiberProjection {
        self.rho0.projection()
    }
    pub fn b1(&self) -> f64 {
        self.constants.b1
    }
    pub fn b2(&self) -> f64 {
        self.constants.b2
    }
    pub fn beta(&self) -> f64 {
        self.constants.beta
    }

    /// Unnormalized `∫₀¹ ‖Ψ^t v‖ dt`.
    pub fn core_raw(&self, base: &[f64], v: &[f64]) -> Result<f64> {
        core_integral(&self.rho0, &self.nodes, &self.weights, base, v)
    }

    /// Normalized core `g / (μ ε)`.
    pub fn core(&self, base: &[f64], v: &[f64]) -> Result<f64> {
        Ok(self.scale * self.core_raw(base, v)?)
    }

    /// Blend weight of the norm term at fiber radius `r`.
    pub fn bump(&self, r: f64) -> f64 {
        let (a, b) = (self.constants.inner, self.constants.tube);
        smooth_step((r - a) / (b - a))
    }

    fn blend(&self, r: f64, core: f64) -> f64 {
        let psi = self.bump(r);
        (1.0 - psi) * core + psi * self.constants.beta * r
    }

    pub fn value(&self, base: &[f64], v: &[f64]) -> Result<f64> {
        let r = norm(v);
        if r == 0.0 {
            return Ok(0.0);
        }
        if r >= self.constants.tube {
            return Ok(self.constants.beta * r);
        }
        let g = self.core(base, v)?;
        Ok(self.blend(r, g))
    }
}

fn core_integral(rho0: &LocalTrivialization, nodes: &[f64], weights: &[f64], base: &[f64], v: &[f64]) -> Result<f64> {
    if norm(v) == 0.0 {
        return Ok(0.0);
    }
    let samples = rho0.pullback(base, v, nodes)?;
    Ok(samples.iter().zip(weights).map(|((_, w), q)| q * norm(w)).sum())
}

/// Uniform slow point in the grid domain.
pub(crate) fn sample_base(fp: &FiberProjection, rng: &mut ChaCha8Rng) -> Vec<f64> {
    fp.manifold()
        .grid()
        .axes()
        .iter()
        .map(|a| match a.period() {
            Some(p) => a.lo + p * rng.random::<f64>(),
            None => a.lo + (a.hi - a.lo) * rng.random::<f64>(),
        })
        .collect()
}

pub(crate) fn sample_direction(k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..k).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        let n = norm(&v);
        if n > 0.1 && n <= 1.0 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Builds `V` over a local trivialization, shrinking the tube while the pulled-back flow
/// is too far from its linearization.
pub fn build_lyapunov(rho0: Arc<LocalTrivialization>, opts: &LyapunovOptions) -> Result<LyapunovFunction> {
    if !(opts.tube_radius > 0.0) || !(opts.inner_fraction > 0.0 && opts.inner_fraction < 1.0) {
        return Err(Error::InvalidInput("tube radius must be positive and the inner fraction in (0, 1)".into()));
    }
    let fp = rho0.projection();
    let k = fp.k();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let bases: Vec<Vec<f64>> = (0..opts.base_samples.max(1)).map(|_| sample_base(fp, &mut rng)).collect();
    let times: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();

    let linear: Vec<Result<Vec<DMatrix<f64>>>> = bases
        .par_iter()
        .map(|b| times.iter().map(|&t| Ok(fp.frames().transfer(fp.system(), fp.manifold(), b, t, &fp.tol)?.compressed)).collect())
        .collect();
    let linear = linear.into_iter().collect::<Result<Vec<_>>>()?;
    let mut kappa: f64 = 1.0;
    let mut contraction: f64 = 0.0;
    for cs in &linear {
        for c in cs {
            kappa = kappa.min(min_norm(c));
        }
        contraction = contraction.max(spectral_norm(cs.last().unwrap()));
    }
    if contraction >= 1.0 {
        return Err(Error::ContractionFailure(format!("time-one fiber map has norm {contraction}")));
    }
    let mu_bound = (kappa / 3.0).min(1.0 - contraction);

    let probe_idx = [1usize, 4, 6, 9];
    let probe_times: Vec<f64> = probe_idx.iter().map(|&i| times[i]).collect();
    let dirs: Vec<Vec<f64>> = if k == 1 { vec![vec![1.0], vec![-1.0]] } else { (0..4).map(|_| sample_direction(k, &mut rng)).collect() };
    let mut tube = opts.tube_radius;
    let mut shrinks = 0;
    let mu_measured = loop {
        let jobs: Vec<(usize, &Vec<f64>)> = (0..bases.len()).flat_map(|i| dirs.iter().map(move |d| (i, d))).collect();
        let quotients: Vec<Result<f64>> = jobs
            .par_iter()
            .map(|(i, d)| {
                let v: Vec<f64> = d.iter().map(|x| x * tube).collect();
                let out = rho0.pullback(&bases[*i], &v, &probe_times)?;
                let mut worst: f64 = 0.0;
                for ((_, w), &j) in out.iter().zip(&probe_idx) {
                    let lin = &linear[*i][j] * nalgebra::DVector::from_column_slice(&v);
                    let dev: f64 = w.iter().zip(lin.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    worst = worst.max(2.0 * dev / tube);
                }
                Ok(worst)
            })
            .collect();
        let m = quotients.into_iter().collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
        if 1.5 * m < mu_bound {
            break m;
        }
        if shrinks == opts.max_shrinks {
            return Err(Error::ContractionFailure(format!("pulled-back flow deviates by {m} from its linearization at tube radius {tube}")));
        }
        tube *= 0.5;
        shrinks += 1;
    };
    let mu = (1.5 * mu_measured).max(0.5 * mu_bound);
    let scale = 1.0 / (mu * tube);
    let inner = opts.inner_fraction * tube;
    let (nodes, weights) = gauss_legendre_unit(opts.quadrature_nodes.max(2));

    // radial design: (base, direction, radius, stretch)
    let design: Vec<(Vec<f64>, Vec<f64>, f64, f64)> = (0..opts.design_size)
        .map(|_| {
            let b = sample_base(fp, &mut rng);
            let d = sample_direction(k, &mut rng);
            let r = 1.5 * tube * (1.0 - rng.random::<f64>());
            let s = 2.0 - rng.random::<f64>();
            (b, d, r, s)
        })
        .collect();
    let cores: Vec<Result<(Option<f64>, Option<f64>)>> = design
        .par_iter()
        .map(|(b, d, r, s)| {
            let at = |rad: f64| -> Result<Option<f64>> {
                if rad >= tube {
                    return Ok(None);
                }
                let v: Vec<f64> = d.iter().map(|x| x * rad).collect();
                Ok(Some(scale * core_integral(&rho0, &nodes, &weights, b, &v)?))
            };
            Ok((at(*r)?, at(r * s)?))
        })
        .collect();
    let cores = cores.into_iter().collect::<Result<Vec<_>>>()?;
    let mut core_slope_max: f64 = 0.0;
    for ((_, _, r, s), (g0, g1)) in design.iter().zip(&cores) {
        if let (Some(a), Some(b)) = (g0, g1) {
            core_slope_max = core_slope_max.max((b - a) / ((s - 1.0) * r));
        }
    }
    let beta_theory = (contraction + mu) / (mu * tube);
    let beta = beta_theory.max(1.05 * core_slope_max);
    let b1_theory = (kappa - 3.0 * mu) / (mu * tube);
    let mut v = LyapunovFunction {
        rho0: rho0.clone(),
        nodes,
        weights,
        scale,
        constants: LyapunovConstants {
            kappa,
            contraction,
            mu_measured,
            mu,
            mu_bound,
            beta,
            beta_theory,
            b1: 0.0,
            b2: 0.0,
            b1_theory,
            core_slope_max,
            tube,
            inner,
            shrinks,
            sublevel_inside: false,
        },
    };
    let mut q_min = f64::INFINITY;
    let mut q_max: f64 = 0.0;
    for ((_, _, r, s), (g0, g1)) in design.iter().zip(&cores) {
        let v0 = g0.map_or(beta * r, |g| v.blend(*r, g));
        let v1 = g1.map_or(beta * r * s, |g| v.blend(r * s, g));
        let q = (v1 - v0) / ((s - 1.0) * r);
        q_min = q_min.min(q);
        q_max = q_max.max(q);
    }
    if opts.design_size == 0 {
        q_min = b1_theory.max(1e-3);
        q_max = beta;
    }
    v.constants.b1 = 0.98 * q_min;
    v.constants.b2 = 1.02 * q_max;
    if !(v.constants.b1 > 0.0) {
        return Err(Error::ContractionFailure(format!("radial slope lower bound {} is not positive", v.constants.b1)));
    }
    let inside: Vec<Result<bool>> = bases
        .par_iter()
        .flat_map(|b| dirs.par_iter().map(move |d| (b, d)))
        .map(|(b, d)| {
            let w: Vec<f64> = d.iter().map(|x| x * inner).collect();
            Ok(v.core(b, &w)? > 1.0)
        })
        .collect();
    v.constants.sublevel_inside = inside.into_iter().collect::<Result<Vec<_>>>()?.into_iter().all(|x| x);
    Ok(v)
}
