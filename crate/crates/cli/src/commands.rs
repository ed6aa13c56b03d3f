//! The subcommands. Each one returns a [`Report`]; nothing here writes files.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use naim_core::flow::SystemSpec;
use naim_core::foliation::FiberProjection;
use naim_core::gsp::{fenichel_normal_form, linear_normal_form, normal_form_residual, NormalForm, ResidualOptions};
use naim_core::linearization::{rate_conditions_check, ConjugacyMap, RateCertificate};
use naim_core::lyapunov::{build_lyapunov, nonlinear_transport, radial_retract, BundleIsomorphism, LocalTrivialization, LyapunovFunction, LyapunovOptions, TransportOperator};
use naim_core::manifold::{critical_manifold_from, slow_manifold_graph, spectral_report_with, stable_bundle, GraphManifold, Grid, SpectralGapReport, SpectralOptions};
use naim_core::pendulum::{absorbing_bound, make_pendulum, verify_global_basin, PendulumParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{FormKind, RunConfig};
use crate::error::CliError;
use crate::output::{Cell, Report, Table};

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SlowManifold,
    Fibers,
    Lyapunov,
    BundleIso,
    Linearize,
    NormalForm,
    Pendulum,
    CheckRates,
}

impl Command {
    pub const ALL: [Command; 8] = [Command::SlowManifold, Command::Fibers, Command::Lyapunov, Command::BundleIso, Command::Linearize, Command::NormalForm, Command::Pendulum, Command::CheckRates];

    pub fn name(self) -> &'static str {
        match self {
            Command::SlowManifold => "slow-manifold",
            Command::Fibers => "fibers",
            Command::Lyapunov => "lyapunov",
            Command::BundleIso => "bundle-iso",
            Command::Linearize => "linearize",
            Command::NormalForm => "normal-form",
            Command::Pendulum => "pendulum",
            Command::CheckRates => "check-rates",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Command::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| format!("unknown command '{s}'"))
    }
}

/// Slow manifold, frames and fiber projection at one `eps`.
pub struct Setup {
    pub system: SystemSpec,
    pub fp: Arc<FiberProjection>,
}

pub struct Runner<'a> {
    pub cfg: &'a RunConfig,
    pub verbose: bool,
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a RunConfig, verbose: bool) -> Self {
        Self { cfg, verbose }
    }

    fn note(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("[naim] {}", msg.as_ref());
        }
    }

    pub fn run(&self, cmd: Command) -> Result<Report> {
        let (tables, summary) = match cmd {
            Command::SlowManifold => self.slow_manifold()?,
            Command::Fibers => self.fibers()?,
            Command::Lyapunov => self.lyapunov()?,
            Command::BundleIso => self.bundle_iso()?,
            Command::Linearize => self.linearize()?,
            Command::NormalForm => self.normal_form()?,
            Command::Pendulum => self.pendulum()?,
            Command::CheckRates => self.check_rates()?,
        };
        Ok(Report { command: cmd.name().into(), tables, summary })
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(stream);
        rng
    }

    pub fn manifold_at(&self, eps: f64) -> Result<(SystemSpec, GraphManifold)> {
        let sys = self.cfg.system_at(eps)?;
        let seed = self.cfg.manifold.critical_seed.clone().unwrap_or_else(|| vec![0.0; sys.n_fast()]);
        if seed.len() != sys.n_fast() {
            return Err(CliError::Config(format!("critical_seed needs {} entries", sys.n_fast())));
        }
        let m0 = critical_manifold_from(&sys.with_eps(0.0), self.cfg.grid()?, &seed)?;
        let m = slow_manifold_graph(&sys, eps, &m0, self.cfg.manifold.sweeps, self.cfg.manifold.defect_tol)?;
        self.note(format!("eps {eps}: graph defect {:.3e} after {} sweeps", m.defect(), m.sweeps()));
        Ok((sys, m))
    }

    pub fn setup_at(&self, eps: f64) -> Result<Setup> {
        let (system, m) = self.manifold_at(eps)?;
        let frames = stable_bundle(&system, &m, self.cfg.manifold.frame_time, self.cfg.manifold.frame_steps)?;
        let fp = Arc::new(FiberProjection::new(&system, Arc::new(m), Arc::new(frames))?);
        Ok(Setup { system, fp })
    }

    fn names(&self) -> (Vec<String>, Vec<String>) {
        self.cfg.variable_names()
    }

    fn state_columns(&self, prefix: &str) -> Vec<String> {
        let (s, f) = self.names();
        s.iter().chain(&f).map(|n| format!("{prefix}{n}")).collect()
    }

    fn slow_columns(&self, prefix: &str) -> Vec<String> {
        self.names().0.iter().map(|n| format!("{prefix}{n}")).collect()
    }

    fn fiber_columns(&self, prefix: &str, k: usize) -> Vec<String> {
        (1..=k).map(|i| format!("{prefix}{i}")).collect()
    }

    fn lyapunov_at(&self, setup: &Setup) -> Result<Arc<LyapunovFunction>> {
        let o = &self.cfg.lyapunov;
        let opts = LyapunovOptions {
            tube_radius: o.tube_radius,
            inner_fraction: o.inner_fraction,
            design_size: o.design_size,
            base_samples: o.base_samples,
            quadrature_nodes: o.quadrature_nodes,
            seed: self.cfg.seed,
            ..LyapunovOptions::default()
        };
        let rho0 = Arc::new(LocalTrivialization::new(setup.fp.clone())?);
        let v = build_lyapunov(rho0, &opts)?;
        self.note(format!("lyapunov: b1 {:.4} b2 {:.4} beta {:.4}", v.b1(), v.b2(), v.beta()));
        Ok(Arc::new(v))
    }

    fn slow_manifold(&self) -> Result<(Vec<Table>, Value)> {
        let (xs, ys) = self.names();
        let mut cols = vec!["eps".to_string(), "node".to_string()];
        cols.extend(xs.iter().cloned());
        cols.extend(ys.iter().map(|y| format!("F_{y}")));
        cols.extend(ys.iter().map(|y| format!("F0_{y}")));
        cols.push("defect".into());
        let mut table = Table::new("graph", cols);
        let mut summary = Vec::new();
        for &eps in &self.cfg.epsilon {
            let (sys, m) = self.manifold_at(eps)?;
            let (_, m0) = if eps == 0.0 { (sys.clone(), m.clone()) } else { self.manifold_at(0.0)? };
            let defects = m.nodal_defect(&sys);
            for node in 0..m.grid().len() {
                let mut row: Vec<Cell> = vec![eps.into(), node.into()];
                row.extend(m.grid().node(node).into_iter().map(Cell::F));
                row.extend(m.node_value(node).iter().map(|v| Cell::F(*v)));
                row.extend(m0.node_value(node).iter().map(|v| Cell::F(*v)));
                row.push(defects[node].into());
                table.push(row);
            }
            let (r_min, r_max) = m.fast_spectrum_bounds(&sys);
            summary.push(json!({
                "eps": eps,
                "nodes": m.grid().len(),
                "sweeps": m.sweeps(),
                "defect": m.defect(),
                "defect_history": m.defect_history(),
                "lipschitz": m.lipschitz(),
                "fast_rate_min": r_min,
                "fast_rate_max": r_max,
            }));
        }
        Ok((vec![table], json!({ "runs": summary })))
    }

    fn sample_base(grid: &Grid, rng: &mut ChaCha8Rng) -> Vec<f64> {
        grid.axes().iter().map(|a| a.lo + (a.hi - a.lo) * rng.random::<f64>()).collect()
    }

    fn direction(k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        if k == 1 {
            return vec![if rng.random::<bool>() { 1.0 } else { -1.0 }];
        }
        loop {
            let v: Vec<f64> = (0..k).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if n > 1e-3 && n <= 1.0 {
                return v.into_iter().map(|a| a / n).collect();
            }
        }
    }

    /// Random `(base, fiber vector)` pairs with `|v|` uniform in `[lo, hi]`.
    fn fiber_pairs(&self, fp: &FiberProjection, n: usize, lo: f64, hi: f64, stream: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut rng = self.rng(stream);
        let grid = fp.manifold().grid().clone();
        (0..n)
            .map(|_| {
                let b = Self::sample_base(&grid, &mut rng);
                let d = Self::direction(fp.k(), &mut rng);
                let r = lo + (hi - lo) * rng.random::<f64>();
                (b, d.into_iter().map(|a| a * r).collect())
            })
            .collect()
    }

    fn slow_gap(system: &SystemSpec, a: &[f64], b: &[f64]) -> f64 {
        let mut d = vec![0.0; system.n_slow()];
        system.slow_diff(a, b, &mut d);
        d.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn fibers(&self) -> Result<(Vec<Table>, Value)> {
        let o = &self.cfg.fibers;
        let mut cols = vec!["eps".to_string(), "sample".into()];
        cols.extend(self.state_columns(""));
        cols.extend(self.slow_columns("base_"));
        cols.extend(self.slow_columns("local_base_"));
        cols.extend(["local_gap", "decay_rate", "rate_ratio"].map(String::from));
        let mut table = Table::new("samples", cols);
        let times: Vec<f64> = if o.fit_points < 2 { vec![o.fit_end] } else { (0..o.fit_points).map(|i| o.fit_start + (o.fit_end - o.fit_start) * i as f64 / (o.fit_points - 1) as f64).collect() };
        let mut summary = Vec::new();
        for &eps in &self.cfg.epsilon {
            let s = self.setup_at(eps)?;
            let (r_min, r_max) = s.fp.manifold().fast_spectrum_bounds(&s.system);
            let pairs = self.fiber_pairs(&s.fp, o.samples, o.offset_min, o.offset_max, 1);
            let rows: Vec<Result<Vec<Cell>>> = pairs
                .par_iter()
                .enumerate()
                .map(|(i, (b, v))| {
                    let p = s.fp.embed(b, v);
                    let base = s.fp.global_projection(&p, o.horizon)?;
                    let local = s.fp.local_projection(&p).unwrap_or_else(|_| vec![f64::NAN; base.len()]);
                    let rate = s.fp.shadowing_rate(&p, &times, o.horizon)?;
                    let mut row: Vec<Cell> = vec![eps.into(), i.into()];
                    row.extend(p.iter().map(|a| Cell::F(*a)));
                    row.extend(base.iter().map(|a| Cell::F(*a)));
                    row.extend(local.iter().map(|a| Cell::F(*a)));
                    row.push(Self::slow_gap(&s.system, &local, &base).into());
                    row.push(rate.into());
                    row.push((rate / r_max).into());
                    Ok(row)
                })
                .collect();
            let mut rates = Vec::new();
            for row in rows {
                let row = row?;
                if let Cell::F(r) = row[row.len() - 2] {
                    rates.push(r);
                }
                table.push(row);
            }
            let dev = rates.iter().map(|r| (r / r_max - 1.0).abs()).fold(0.0, f64::max);
            summary.push(json!({
                "eps": eps,
                "fast_rate_min": r_min,
                "fast_rate_max": r_max,
                "decay_rate_min": rates.iter().copied().fold(f64::INFINITY, f64::min),
                "decay_rate_max": rates.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                "decay_rate_mean": rates.iter().sum::<f64>() / rates.len().max(1) as f64,
                "max_relative_deviation": dev,
                "local_radius": s.fp.local_radius(),
            }));
        }
        Ok((vec![table], json!({ "runs": summary })))
    }

    fn lyapunov(&self) -> Result<(Vec<Table>, Value)> {
        let o = &self.cfg.lyapunov;
        let slow = self.slow_columns("base_");
        let mut orbit_cols = vec!["eps".to_string(), "orbit".into()];
        orbit_cols.extend(slow.iter().cloned());
        orbit_cols.push("radius".into());
        orbit_cols.extend(["level_start", "level_end", "min_decay_rate", "decreasing"].map(String::from));
        let mut orbits = Table::new("orbits", orbit_cols);
        let mut slope_cols = vec!["eps".to_string(), "sample".into()];
        slope_cols.extend(slow.iter().cloned());
        slope_cols.extend(["radius", "stretch", "slope", "in_band"].map(String::from));
        let mut slopes = Table::new("slopes", slope_cols);
        let mut ret_cols = vec!["eps".to_string(), "sample".into()];
        ret_cols.extend(slow.iter().cloned());
        ret_cols.extend(["radius", "level", "scale", "residual", "contraction", "evaluations"].map(String::from));
        let mut rets = Table::new("retractions", ret_cols);
        let mut summary = Vec::new();
        for &eps in &self.cfg.epsilon {
            let s = self.setup_at(eps)?;
            let v = self.lyapunov_at(&s)?;
            let rho0 = v.trivialization();

            let dt = o.orbit_time / o.orbit_points.max(1) as f64;
            let times: Vec<f64> = (0..=o.orbit_points).map(|i| i as f64 * dt).collect();
            let pairs = self.fiber_pairs(&s.fp, o.orbits, o.orbit_radius_min, o.orbit_radius_max, 2);
            let rows: Vec<Result<(f64, bool, Vec<Cell>)>> = pairs
                .par_iter()
                .enumerate()
                .map(|(i, (b, x))| {
                    let path = rho0.pullback(b, x, &times)?;
                    let levels = path.iter().map(|(bt, xt)| Ok(v.value(bt, xt)?)).collect::<Result<Vec<f64>>>()?;
                    let rate = levels.windows(2).map(|w| (w[0] - w[1]) / dt).fold(f64::INFINITY, f64::min);
                    let mut row: Vec<Cell> = vec![eps.into(), i.into()];
                    row.extend(b.iter().map(|a| Cell::F(*a)));
                    row.push(norm(x).into());
                    row.push(levels[0].into());
                    row.push((*levels.last().unwrap()).into());
                    row.push(rate.into());
                    row.push((rate > 0.0).into());
                    Ok((rate, rate > 0.0, row))
                })
                .collect();
            let mut min_rate = f64::INFINITY;
            let mut all_decreasing = true;
            for r in rows {
                let (rate, dec, row) = r?;
                min_rate = min_rate.min(rate);
                all_decreasing &= dec;
                orbits.push(row);
            }

            let mut rng = self.rng(3);
            let jobs: Vec<(Vec<f64>, Vec<f64>, f64)> = self
                .fiber_pairs(&s.fp, o.slopes, o.slope_radius_min, o.slope_radius_max, 4)
                .into_iter()
                .map(|(b, x)| (b, x, 1.0 + rng.random::<f64>()))
                .collect();
            let (b1, b2) = (v.b1(), v.b2());
            let rows: Vec<Result<(f64, Vec<Cell>)>> = jobs
                .par_iter()
                .enumerate()
                .map(|(i, (b, x, d))| {
                    let r = norm(x);
                    let far: Vec<f64> = x.iter().map(|a| a * d).collect();
                    let q = (v.value(b, &far)? - v.value(b, x)?) / ((d - 1.0) * r);
                    let mut row: Vec<Cell> = vec![eps.into(), i.into()];
                    row.extend(b.iter().map(|a| Cell::F(*a)));
                    row.extend([Cell::F(r), Cell::F(*d), Cell::F(q), Cell::B(q >= b1 && q <= b2)]);
                    Ok((q, row))
                })
                .collect();
            let (mut slope_lo, mut slope_hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for r in rows {
                let (q, row) = r?;
                slope_lo = slope_lo.min(q);
                slope_hi = slope_hi.max(q);
                slopes.push(row);
            }

            let mut rng = self.rng(5);
            let jobs: Vec<(Vec<f64>, Vec<f64>, f64)> = self
                .fiber_pairs(&s.fp, o.retractions, o.retraction_radius_min, o.retraction_radius_max, 6)
                .into_iter()
                .map(|(b, x)| (b, x, o.level_min + (o.level_max - o.level_min) * rng.random::<f64>()))
                .collect();
            let rows: Vec<Result<(f64, f64, Vec<Cell>)>> = jobs
                .par_iter()
                .enumerate()
                .map(|(i, (b, x, c))| {
                    let ret = radial_retract(&v, b, x, *c)?;
                    let residual = (v.value(b, &ret.point)? - c).abs();
                    let mut row: Vec<Cell> = vec![eps.into(), i.into()];
                    row.extend(b.iter().map(|a| Cell::F(*a)));
                    row.extend([Cell::F(norm(x)), Cell::F(*c), Cell::F(ret.scale), Cell::F(residual), Cell::F(ret.contraction), Cell::from(ret.evaluations)]);
                    Ok((residual, ret.contraction, row))
                })
                .collect();
            let (mut res_max, mut contraction_max) = (0.0f64, 0.0f64);
            for r in rows {
                let (res, con, row) = r?;
                res_max = res_max.max(res);
                contraction_max = contraction_max.max(con);
                rets.push(row);
            }

            let c = v.constants();
            summary.push(json!({
                "eps": eps,
                "constants": {
                    "kappa": c.kappa, "contraction": c.contraction, "mu_measured": c.mu_measured, "mu": c.mu, "mu_bound": c.mu_bound,
                    "beta": c.beta, "beta_theory": c.beta_theory, "b1": c.b1, "b2": c.b2, "b1_theory": c.b1_theory,
                    "core_slope_max": c.core_slope_max, "tube": c.tube, "inner": c.inner, "shrinks": c.shrinks, "sublevel_inside": c.sublevel_inside,
                },
                "orbits_decreasing": all_decreasing,
                "min_decay_rate": min_rate,
                "slope_min": slope_lo,
                "slope_max": slope_hi,
                "slopes_in_band": slope_lo >= b1 && slope_hi <= b2,
                "retraction_residual_max": res_max,
                "contraction_max": contraction_max,
                "contraction_bound": 1.0 - b1 / b2 + 0.05,
            }));
        }
        Ok((vec![orbits, slopes, rets], json!({ "runs": summary })))
    }

    fn bundle_iso(&self) -> Result<(Vec<Table>, Value)> {
        let o = &self.cfg.bundle;
        let mut cols = vec!["eps".to_string(), "sample".into()];
        cols.extend(self.slow_columns("base_"));
        let mut summary = Vec::new();
        let mut samples: Option<Table> = None;
        let mut transport: Option<Table> = None;
        for &eps in &self.cfg.epsilon {
            let s = self.setup_at(eps)?;
            let k = s.fp.k();
            if samples.is_none() {
                let mut c = cols.clone();
                c.extend(self.fiber_columns("v_", k));
                c.extend(["level", "time"].map(String::from));
                c.extend(self.state_columns("image_"));
                c.extend(self.slow_columns("projected_"));
                c.extend(["base_error", "local_gap"].map(String::from));
                samples = Some(Table::new("samples", c));
                let mut c = cols.clone();
                c.extend(self.fiber_columns("v_", k));
                c.extend(["level", "level_error", "group_defect", "zero_time_error"].map(String::from));
                transport = Some(Table::new("transport", c));
            }
            let v = self.lyapunov_at(&s)?;
            let op = TransportOperator::new(s.fp.clone());
            let iso = BundleIsomorphism::new(v.clone(), op.clone());
            let rho0 = v.trivialization();
            let pairs = self.fiber_pairs(&s.fp, o.samples, 0.0, o.radius_max, 7);
            let rows: Vec<Result<(f64, f64, Vec<Cell>)>> = pairs
                .par_iter()
                .enumerate()
                .map(|(i, (b, x))| {
                    let img = iso.map(b, x)?;
                    let back = s.fp.global_projection(&img.point, o.horizon)?;
                    let err = Self::slow_gap(&s.system, &back, b);
                    // inside V <= 1/2 the bundle map is the local trivialization itself
                    let local_gap = if img.level <= 0.5 {
                        let p = rho0.forward(b, x)?;
                        p.iter().zip(&img.point).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max)
                    } else {
                        f64::NAN
                    };
                    let mut row: Vec<Cell> = vec![eps.into(), i.into()];
                    row.extend(b.iter().chain(x).map(|a| Cell::F(*a)));
                    row.extend([Cell::F(img.level), Cell::F(img.time)]);
                    row.extend(img.point.iter().chain(&back).map(|a| Cell::F(*a)));
                    row.extend([Cell::F(err), Cell::F(local_gap)]);
                    Ok((err, local_gap, row))
                })
                .collect();
            let (mut err_max, mut gap_max) = (0.0f64, 0.0f64);
            for r in rows {
                let (e, g, row) = r?;
                err_max = err_max.max(e);
                if g.is_finite() {
                    gap_max = gap_max.max(g);
                }
                samples.as_mut().unwrap().push(row);
            }

            let [ts, tt] = o.transport_times;
            let pairs = self.fiber_pairs(&s.fp, o.transport_samples, 0.02, o.radius_max.max(0.05), 8);
            let rows: Vec<Result<(f64, f64, Vec<Cell>)>> = pairs
                .par_iter()
                .enumerate()
                .map(|(i, (b, x))| {
                    let level = v.value(b, x)?;
                    let zero = nonlinear_transport(&v, &op, b, x, 0.0)?;
                    let zero_err = zero.coords.iter().zip(x).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
                    let once = nonlinear_transport(&v, &op, b, x, ts + tt)?;
                    let level_err = (v.value(&once.base, &once.coords)? - level).abs();
                    let mid = nonlinear_transport(&v, &op, b, x, ts)?;
                    let twice = nonlinear_transport(&v, &op, &mid.base, &mid.coords, tt)?;
                    let group = twice.coords.iter().zip(&once.coords).map(|(a, c)| (a - c).abs()).fold(Self::slow_gap(&s.system, &twice.base, &once.base), f64::max);
                    let mut row: Vec<Cell> = vec![eps.into(), i.into()];
                    row.extend(b.iter().chain(x).map(|a| Cell::F(*a)));
                    row.extend([Cell::F(level), Cell::F(level_err), Cell::F(group), Cell::F(zero_err)]);
                    Ok((level_err, group, row))
                })
                .collect();
            let (mut level_max, mut group_max) = (0.0f64, 0.0f64);
            for r in rows {
                let (l, g, row) = r?;
                level_max = level_max.max(l);
                group_max = group_max.max(g);
                transport.as_mut().unwrap().push(row);
            }
            summary.push(json!({
                "eps": eps,
                "base_error_max": err_max,
                "local_agreement_max": gap_max,
                "level_preservation_max": level_max,
                "group_defect_max": group_max,
                "b1": v.b1(),
                "b2": v.b2(),
            }));
        }
        Ok((vec![samples.unwrap(), transport.unwrap()], json!({ "runs": summary })))
    }

    fn spectral(&self, s: &Setup, horizon: f64, r: usize, bracket: Option<(f64, f64)>) -> Result<(SpectralGapReport, RateCertificate)> {
        let opts = SpectralOptions { horizon, orbits: self.cfg.rates.orbits, bracket, r, ..SpectralOptions::default() };
        let report = spectral_report_with(&s.system, s.fp.manifold(), s.fp.frames(), &opts)?;
        let cert = rate_conditions_check(&report, r);
        self.note(format!("rates: delta {:.3e} alpha {:.4} beta {:.4} certified {}", report.fitted.delta, report.fitted.alpha, report.fitted.beta, cert.certified));
        Ok((report, cert))
    }

    fn conjugacy(&self, s: &Setup, depth: usize, r: usize, horizon: f64) -> Result<(ConjugacyMap, SpectralGapReport, RateCertificate)> {
        let (report, cert) = self.spectral(s, horizon, r, None)?;
        let mut map = ConjugacyMap::with_defaults(s.fp.clone(), depth, cert.certified)?;
        if let Some(t) = self.cfg.linearize.t_max {
            map.t_max = t;
        }
        Ok((map, report, cert))
    }

    fn linearize(&self) -> Result<(Vec<Table>, Value)> {
        let o = &self.cfg.linearize;
        let mut summary = Vec::new();
        let mut table: Option<Table> = None;
        for &eps in &self.cfg.epsilon {
            let s = self.setup_at(eps)?;
            let k = s.fp.k();
            if table.is_none() {
                let mut c = vec!["eps".to_string(), "sample".into()];
                c.extend(self.state_columns(""));
                c.extend(self.slow_columns("base_"));
                c.extend(self.fiber_columns("phi_", k));
                c.extend(["depth", "last_increment", "diverged", "impact_time", "roundtrip_error"].map(String::from));
                table = Some(Table::new("samples", c));
            }
            let (mut map, report, cert) = self.conjugacy(&s, o.depth, o.r, o.rates_horizon)?;
            let mut rng = self.rng(9);
            let grid = s.fp.manifold().grid().clone();
            let points: Vec<Vec<f64>> = (0..o.samples)
                .map(|i| {
                    let b = Self::sample_base(&grid, &mut rng);
                    let off = if o.samples < 2 { o.offset_min } else { o.offset_min + (o.offset_max - o.offset_min) * i as f64 / (o.samples - 1) as f64 };
                    let d = if k == 1 { vec![1.0] } else { Self::direction(k, &mut rng) };
                    s.fp.embed(&b, &d.iter().map(|a| a * off).collect::<Vec<_>>())
                })
                .collect();
            let rows: Vec<Result<(bool, Vec<Cell>)>> = points
                .par_iter()
                .enumerate()
                .map(|(i, p)| {
                    let v = map.evaluate(p)?;
                    let back = map.inverse(&v.base, &v.fiber)?;
                    let rt = s.system.state_distance(&back, p);
                    let mut row: Vec<Cell> = vec![eps.into(), i.into()];
                    row.extend(p.iter().chain(&v.base).chain(&v.fiber).map(|a| Cell::F(*a)));
                    row.push(v.depth.into());
                    row.push(Cell::F(v.increments.last().copied().unwrap_or(0.0)));
                    row.push(v.diverged.into());
                    row.push(Cell::F(v.impact_time.unwrap_or(0.0)));
                    row.push(rt.into());
                    Ok((v.diverged, row))
                })
                .collect();
            let mut any_diverged = false;
            for r in rows {
                let (d, row) = r?;
                any_diverged |= d;
                table.as_mut().unwrap().push(row);
            }
            let stats = if o.validate_times.is_empty() { None } else { Some(map.validate(&points, &o.validate_times)?) };
            summary.push(json!({
                "eps": eps,
                "certified": cert.certified,
                "certificate": certificate_json(&cert),
                "fitted": fitted_json(&report),
                "requested_depth": map.requested_depth(),
                "depth": map.depth(),
                "level": map.level(),
                "deepest_level": map.deepest_level(),
                "any_diverged": any_diverged,
                "equivariance": stats.map(|st| json!({ "sup": st.sup, "mean": st.mean, "evaluations": st.samples, "times": o.validate_times })),
            }));
        }
        Ok((vec![table.unwrap()], json!({ "runs": summary })))
    }

    fn normal_form(&self) -> Result<(Vec<Table>, Value)> {
        let o = &self.cfg.normal_form;
        let mut summary = Vec::new();
        let mut nodes: Option<Table> = None;
        let mut resid = Table::new("residual", ["eps", "kind", "certified", "fast_sup", "fast_mean", "slow_sup", "slow_mean", "evaluations"].map(String::from).to_vec());
        for &eps in &self.cfg.epsilon {
            let s = self.setup_at(eps)?;
            let (ns, k) = (s.fp.n_slow(), s.fp.k());
            let (nf, cert): (NormalForm, Option<RateCertificate>) = match o.form {
                FormKind::Fenichel => (fenichel_normal_form(s.fp.clone()), None),
                FormKind::Linear => {
                    let (map, _, cert) = self.conjugacy(&s, o.depth, o.r, o.rates_horizon)?;
                    (linear_normal_form(Arc::new(map)), Some(cert))
                }
            };
            if nodes.is_none() {
                let mut c = vec!["eps".to_string(), "node".into()];
                c.extend(self.slow_columns(""));
                c.extend(self.slow_columns("h_"));
                for prefix in ["A", "A_raw"] {
                    for i in 1..=k {
                        for j in 1..=k {
                            c.push(format!("{prefix}_{i}{j}"));
                        }
                    }
                }
                c.extend(self.fiber_columns("fast_eig_re_", k));
                c.extend(self.fiber_columns("A_eig_re_", k));
                nodes = Some(Table::new("nodes", c));
            }
            let mut eig_gap = 0.0f64;
            for node in 0..nf.grid().len() {
                let x = nf.grid().node(node);
                let a = nf.a_node(node);
                let a_raw = nf.a_raw_node(node);
                let fast = s.system.fast_jacobian(&x, s.fp.manifold().node_value(node));
                let mut want: Vec<f64> = fast.complex_eigenvalues().iter().map(|c| c.re).collect();
                let mut got: Vec<f64> = a.complex_eigenvalues().iter().map(|c| c.re).collect();
                want.sort_by(f64::total_cmp);
                got.sort_by(f64::total_cmp);
                eig_gap = want.iter().zip(&got).map(|(p, q)| (p - q).abs()).fold(eig_gap, f64::max);
                let mut row: Vec<Cell> = vec![eps.into(), node.into()];
                row.extend(x.iter().map(|a| Cell::F(*a)));
                row.extend(nf.h_node(node).iter().take(ns).map(|a| Cell::F(*a)));
                row.extend(a.transpose().iter().chain(a_raw.transpose().iter()).map(|a| Cell::F(*a)));
                row.extend(want.iter().chain(&got).map(|a| Cell::F(*a)));
                nodes.as_mut().unwrap().push(row);
            }
            let mut rng = self.rng(11);
            let grid = s.fp.manifold().grid().clone();
            let samples: Vec<Vec<f64>> = (0..o.samples)
                .map(|_| {
                    let b = Self::sample_base(&grid, &mut rng);
                    let d = Self::direction(k, &mut rng);
                    let r = o.offset_min + (o.offset_max - o.offset_min) * rng.random::<f64>();
                    s.fp.embed(&b, &d.iter().map(|a| a * r).collect::<Vec<_>>())
                })
                .collect();
            let res = normal_form_residual(&s.system, &nf, &samples, o.horizon, &ResidualOptions { times: o.times, step: o.fd_step, ..ResidualOptions::default() })?;
            resid.push(vec![eps.into(), nf.kind.name().into(), nf.certified.into(), res.fast_sup.into(), res.fast_mean.into(), res.slow_sup.into(), res.slow_mean.into(), res.evaluations.into()]);
            summary.push(json!({
                "eps": eps,
                "requested": match o.form { FormKind::Linear => "linear", FormKind::Fenichel => "fenichel" },
                "kind": nf.kind.name(),
                "certified": nf.certified,
                "certificate": cert.as_ref().map(certificate_json),
                "eigenvalue_gap_max": eig_gap,
                "residual": { "fast_sup": res.fast_sup, "fast_mean": res.fast_mean, "slow_sup": res.slow_sup, "slow_mean": res.slow_mean, "evaluations": res.evaluations },
            }));
        }
        Ok((vec![nodes.unwrap(), resid], json!({ "runs": summary })))
    }

    fn pendulum(&self) -> Result<(Vec<Table>, Value)> {
        let o = &self.cfg.pendulum;
        let params = self.cfg.pendulum_params().ok_or_else(|| CliError::Config("the pendulum command needs the pendulum system".into()))?;
        let eta = absorbing_bound(&params, o.eps0).ok();

        // frozen spectrum of the full Jacobian on the critical graph
        let sys0 = make_pendulum(params.clone(), 0.0)?;
        let m0 = critical_manifold_from(&sys0, self.cfg.grid()?, &[0.0])?;
        let mut spectrum = Table::new("spectrum", ["node", "theta", "alpha", "omega", "eig_re_1", "eig_re_2", "eig_re_3", "eig_im_max"].map(String::from).to_vec());
        let mut fast_lo = f64::INFINITY;
        let mut fast_hi = f64::NEG_INFINITY;
        for node in 0..m0.grid().len() {
            let z = m0.lift(&m0.grid().node(node));
            let ev = sys0.jacobian_matrix(&z).complex_eigenvalues();
            let mut re: Vec<f64> = ev.iter().map(|c| c.re).collect();
            re.sort_by(|a, b| b.total_cmp(a));
            let im = ev.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
            fast_lo = fast_lo.min(re[2]);
            fast_hi = fast_hi.max(re[2]);
            spectrum.push(vec![node.into(), z[0].into(), z[1].into(), z[2].into(), re[0].into(), re[1].into(), re[2].into(), im.into()]);
        }

        let variant = self.variant_report()?;

        let mut basin = Table::new("basin", ["eps", "theta0", "alpha0", "omega0", "entry_time", "final_distance", "worst_outside_rate", "converged"].map(String::from).to_vec());
        let mut runs = Vec::new();
        for &eps in &self.cfg.epsilon {
            let s = self.setup_at(eps)?;
            let (report, cert) = self.spectral(&s, o.rates_horizon, o.r, None)?;
            let mut run = json!({
                "eps": eps,
                "graph_defect": s.fp.manifold().defect(),
                "sweeps": s.fp.manifold().sweeps(),
                "nonresonance_ok": report.nonresonance_ok,
                "fitted": fitted_json(&report),
                "certificate": certificate_json(&cert),
            });
            if let Some(eta) = eta.filter(|_| params.theta_limit.is_none()) {
                let [nt, na, nw] = o.basin;
                let rep = verify_global_basin(&s.system, s.fp.manifold(), eta, (nt, na, nw), o.horizon, &self.cfg.tolerances())?;
                for b in &rep.samples {
                    basin.push(vec![eps.into(), b.start[0].into(), b.start[1].into(), b.start[2].into(), Cell::F(b.entry_time.unwrap_or(f64::NAN)), b.final_distance.into(), b.worst_outside_rate.into(), b.converged.into()]);
                }
                run["basin"] = json!({ "samples": rep.samples.len(), "converged_fraction": rep.converged_fraction(), "all_converged": rep.all_converged(), "counterexamples": rep.counterexamples().len() });
            }
            runs.push(run);
        }
        let summary = json!({
            "eta": eta,
            "eps0": o.eps0,
            "frozen_fast_eigenvalue_min": fast_lo,
            "frozen_fast_eigenvalue_max": fast_hi,
            "variant": variant,
            "runs": runs,
        });
        Ok((vec![spectrum, basin], summary))
    }

    /// Inflowing variant `c(θ) = cos θ + 1` on `|θ| ≤ π/4` with the bracket `(−√2/2 − 1, −2)`.
    fn variant_report(&self) -> Result<Value> {
        let sys = make_pendulum(PendulumParams::variant(), 0.0)?;
        let m = critical_manifold_from(&sys, self.cfg.variant_grid()?, &[0.0])?;
        let frames = stable_bundle(&sys, &m, 1.0, 2)?;
        let alpha = -SQRT_2 / 2.0 - 1.0;
        let report = spectral_report_with(&sys, &m, &frames, &SpectralOptions { bracket: Some((alpha, -2.0)), horizon: 5.0, ..SpectralOptions::default() })?;
        Ok(json!({
            "requested_alpha": alpha,
            "requested_beta": -2.0,
            "fast_rate_min": report.r_min,
            "fast_rate_max": report.r_max,
            "alpha": report.alpha,
            "beta": report.beta,
            "widened": report.widened,
            "nonresonance_ok": report.nonresonance_ok,
        }))
    }

    fn check_rates(&self) -> Result<(Vec<Table>, Value)> {
        let o = &self.cfg.rates;
        let cols = [
            "eps", "r_min", "r_max", "alpha", "beta", "widened", "nonresonance_ok", "bunching_order", "delta_fit", "alpha_fit", "beta_fit", "r", "ordering_ok", "tangential_ok", "gap_ok", "tangential_margin", "gap_margin", "certified",
        ];
        let mut table = Table::new("report", cols.map(String::from).to_vec());
        let mut summary = Vec::new();
        for &eps in &self.cfg.epsilon {
            let s = self.setup_at(eps)?;
            let (rep, cert) = self.spectral(&s, o.horizon, o.r, o.bracket.map(|[a, b]| (a, b)))?;
            table.push(vec![
                eps.into(),
                rep.r_min.into(),
                rep.r_max.into(),
                rep.alpha.into(),
                rep.beta.into(),
                rep.widened.into(),
                rep.nonresonance_ok.into(),
                rep.bunching_order.into(),
                rep.fitted.delta.into(),
                rep.fitted.alpha.into(),
                rep.fitted.beta.into(),
                cert.r.into(),
                cert.ordering.into(),
                cert.tangential.into(),
                cert.gap.into(),
                cert.tangential_margin.into(),
                cert.gap_margin.into(),
                cert.certified.into(),
            ]);
            summary.push(json!({
                "eps": eps,
                "r_min": rep.r_min,
                "r_max": rep.r_max,
                "alpha": rep.alpha,
                "beta": rep.beta,
                "requested": rep.requested.map(|(a, b)| [a, b]),
                "widened": rep.widened,
                "nonresonance_ok": rep.nonresonance_ok,
                "bunching_order": rep.bunching_order,
                "horizon": rep.horizon,
                "fitted": fitted_json(&rep),
                "certificate": certificate_json(&cert),
            }));
        }
        Ok((vec![table], json!({ "runs": summary })))
    }
}

fn norm(v: &[f64]) -> f64 {
    naim_core::numerics::norm(v)
}

fn certificate_json(c: &RateCertificate) -> Value {
    json!({
        "r": c.r,
        "ordering": c.ordering,
        "tangential": c.tangential,
        "gap": c.gap,
        "tangential_margin": c.tangential_margin,
        "gap_margin": c.gap_margin,
        "certified": c.certified,
    })
}

fn fitted_json(r: &SpectralGapReport) -> Value {
    let f = &r.fitted;
    json!({ "delta": f.delta, "alpha": f.alpha, "beta": f.beta, "k": f.k, "tangent_sup": f.tangent_sup, "tangent_min": f.tangent_min })
}
