use nalgebra::DMatrix;

use crate::error::Result;
use crate::flow::variational::{pack, unpack, VariationalRhs};
use crate::flow::{flow_rhs, SystemSpec, Tolerances};
use crate::manifold::frames::StableFrameField;
use crate::manifold::graph::GraphManifold;
use crate::numerics::{linear_fit, min_norm, orthonormalize, spectral_norm};

/// Growth rates fitted from sampled variational norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedRates {
    /// Tangential rate: `‖DΦ^t|TM‖` and `‖(DΦ^t|TM)^{-1}‖` grow no faster than `e^{δt}`.
    pub delta: f64,
    /// Upper normal rate: `‖DΦ^t|E^s‖ ≲ e^{αt}`.
    pub alpha: f64,
    /// Lower normal rate: `minnorm(DΦ^t|E^s) ≳ e^{βt}`.
    pub beta: f64,
    pub k: f64,
    /// Growth slope of `‖DΦ^t|TM‖`.
    pub tangent_sup: f64,
    /// Growth slope of `minnorm(DΦ^t|TM)`.
    pub tangent_min: f64,
}

#[derive(Debug, Clone)]
pub struct SpectralGapReport {
    pub r_min: f64,
    pub r_max: f64,
    /// Bracketing constants that the flags refer to.
    pub alpha: f64,
    pub beta: f64,
    /// Caller-supplied bracket, if any, before certification.
    pub requested: Option<(f64, f64)>,
    /// Whether the requested bracket had to be opened to make the containment strict.
    pub widened: bool,
    pub nonresonance_ok: bool,
    pub bunching_order: usize,
    pub fitted: FittedRates,
    /// Smoothness degree the rate inequalities below were checked for.
    pub r: usize,
    /// `−α > r δ` with fitted rates.
    pub rate_tangential_ok: bool,
    /// `−β < −2α − (r−1) δ` with fitted rates.
    pub rate_gap_ok: bool,
    pub horizon: f64,
}

#[derive(Debug, Clone)]
pub struct SpectralOptions {
    pub horizon: f64,
    /// Number of sampled orbits for the rate fit.
    pub orbits: usize,
    pub bracket: Option<(f64, f64)>,
    pub r: usize,
    pub tol: Tolerances,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self { horizon: 20.0, orbits: 16, bracket: None, r: 3, tol: Tolerances::default() }
    }
}

const BUNCHING_CAP: usize = 16;

/// `2α < β < α < 0` and `β < r_min ≤ r_max < α`.
pub fn nonresonant(alpha: f64, beta: f64, r_min: f64, r_max: f64) -> bool {
    2.0 * alpha < beta && beta < alpha && alpha < 0.0 && beta < r_min && r_min <= r_max && r_max < alpha
}

pub fn spectral_report(system: &SystemSpec, manifold: &GraphManifold, frames: &StableFrameField, horizon: f64) -> Result<SpectralGapReport> {
    spectral_report_with(system, manifold, frames, &SpectralOptions { horizon, ..SpectralOptions::default() })
}

pub fn spectral_report_with(system: &SystemSpec, manifold: &GraphManifold, frames: &StableFrameField, opts: &SpectralOptions) -> Result<SpectralGapReport> {
    let (r_min, r_max) = manifold.fast_spectrum_bounds(system);
    let (alpha, beta, widened) = match opts.bracket {
        None => (r_max + 0.1 * r_max.abs(), r_min - 0.1 * r_min.abs(), false),
        Some((a, b)) => {
            if nonresonant(a, b, r_min, r_max) {
                (a, b, false)
            } else if 2.0 * a < b && b < a && a < 0.0 && b <= r_min + 1e-12 && r_max <= a + 1e-12 {
                // closed bracket: open it while keeping 2α < β < α < 0
                let eta = (b - 2.0 * a).min(-a) / 4.0;
                (a + eta, b - eta, true)
            } else {
                (a, b, false)
            }
        }
    };
    let nonresonance_ok = nonresonant(alpha, beta, r_min, r_max);
    let fitted = fit_rates(system, manifold, frames, opts)?;
    let r = opts.r as f64;
    let rate_tangential_ok = 0.0 <= fitted.delta && fitted.delta < -fitted.alpha && -fitted.alpha <= -fitted.beta && -fitted.alpha > r * fitted.delta;
    let rate_gap_ok = -fitted.beta < -2.0 * fitted.alpha - (r - 1.0) * fitted.delta;
    let bunching_order = if system.n_slow() == 0 {
        BUNCHING_CAP
    } else {
        (0..=BUNCHING_CAP).rev().find(|&k| k as f64 * fitted.tangent_sup + fitted.alpha - fitted.tangent_min < 0.0).unwrap_or(0)
    };
    Ok(SpectralGapReport {
        r_min,
        r_max,
        alpha,
        beta,
        requested: opts.bracket,
        widened,
        nonresonance_ok,
        bunching_order,
        fitted,
        r: opts.r,
        rate_tangential_ok,
        rate_gap_ok,
        horizon: opts.horizon,
    })
}

fn fit_rates(system: &SystemSpec, manifold: &GraphManifold, frames: &StableFrameField, opts: &SpectralOptions) -> Result<FittedRates> {
    let grid = manifold.grid();
    let ns = system.n_slow();
    let n = system.dim();
    let k = frames.k();
    let count = opts.orbits.clamp(1, grid.len());
    let stride = grid.len() as f64 / count as f64;
    let samples = 20usize;
    let times: Vec<f64> = (1..=samples).map(|i| opts.horizon * i as f64 / samples as f64).collect();
    // per time: sup/inf over orbits
    let mut es_sup = vec![f64::NEG_INFINITY; samples];
    let mut es_min = vec![f64::INFINITY; samples];
    let mut tm_sup = vec![f64::NEG_INFINITY; samples];
    let mut tm_min = vec![f64::INFINITY; samples];
    for s in 0..count {
        let node = ((s as f64 + 0.5) * stride) as usize;
        let x = grid.node(node.min(grid.len() - 1));
        let tm = if ns > 0 { orthonormalize(&manifold.tangent_basis(&x)) } else { DMatrix::zeros(n, 0) };
        let es = frames.at(&x);
        let mut tangent = DMatrix::zeros(n, ns + k);
        tangent.view_mut((0, 0), (n, ns)).copy_from(&tm);
        tangent.view_mut((0, ns), (n, k)).copy_from(&es);
        let mut z = pack(&manifold.lift(&x), &tangent);
        let mut rhs = VariationalRhs::new(system, ns + k);
        let mut t_prev = 0.0;
        for (i, &t) in times.iter().enumerate() {
            z = flow_rhs(|a, b| rhs.eval(a, b), &z, t - t_prev, &opts.tol)?;
            t_prev = t;
            let (_, m) = unpack(&z, n);
            let m_tm = m.columns(0, ns).into_owned();
            let m_es = m.columns(ns, k).into_owned();
            es_sup[i] = es_sup[i].max(spectral_norm(&m_es).ln());
            es_min[i] = es_min[i].min(min_norm(&m_es).ln());
            if ns > 0 {
                tm_sup[i] = tm_sup[i].max(spectral_norm(&m_tm).ln());
                tm_min[i] = tm_min[i].min(min_norm(&m_tm).ln());
            }
        }
    }
    let skip = samples / 10;
    let ts = &times[skip..];
    let (alpha, _) = linear_fit(ts, &es_sup[skip..]);
    let (beta, _) = linear_fit(ts, &es_min[skip..]);
    let (tangent_sup, tangent_min) = if ns > 0 { (linear_fit(ts, &tm_sup[skip..]).0, linear_fit(ts, &tm_min[skip..]).0) } else { (0.0, 0.0) };
    let delta = tangent_sup.max(-tangent_min).max(0.0);
    let mut kc: f64 = 1.0;
    for (i, &t) in times.iter().enumerate() {
        kc = kc.max((es_sup[i] - alpha * t).exp()).max((beta * t - es_min[i]).exp());
        if ns > 0 {
            kc = kc.max((tm_sup[i] - delta * t).exp()).max((-delta * t - tm_min[i]).exp());
        }
    }
    Ok(FittedRates { delta, alpha, beta, k: kc, tangent_sup, tangent_min })
}
