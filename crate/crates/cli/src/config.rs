//! Run configuration. Every section has defaults, unknown keys are rejected, and the
//! hash covers the defaults-filled configuration only.

use std::f64::consts::FRAC_PI_4;
use std::sync::Arc;

use naim_core::flow::{SystemSpec, Tolerances, Topology};
use naim_core::manifold::{Axis, Grid};
use naim_core::pendulum::{make_pendulum, strip_grid, Damping, HarmonicTorque, PendulumParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::field::FieldExpr;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    #[serde(default = "default_epsilon")]
    pub epsilon: Vec<f64>,
    /// Slow grid axes; a per-system default is filled in by [`RunConfig::resolve`].
    #[serde(default)]
    pub grid: Option<Vec<AxisConfig>>,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub manifold: ManifoldOptions,
    #[serde(default)]
    pub fibers: FiberOptions,
    #[serde(default)]
    pub lyapunov: LyapunovCmdOptions,
    #[serde(default)]
    pub bundle: BundleOptions,
    #[serde(default)]
    pub linearize: LinearizeOptions,
    #[serde(default)]
    pub normal_form: NormalFormOptions,
    #[serde(default)]
    pub pendulum: PendulumCmdOptions,
    #[serde(default)]
    pub rates: RatesOptions,
    /// Where artifacts go; not part of the hash.
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_epsilon() -> Vec<f64> {
    vec![0.05]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemConfig {
    /// `x' = 1`, `ε y' = −y + ε x`.
    Decoupled {},
    /// `y' = −y + y²`, no slow variables.
    ScalarQuadratic {},
    Pendulum {
        #[serde(default = "default_gravity")]
        gravity: f64,
        #[serde(default = "one")]
        length: f64,
        #[serde(default)]
        damping: DampingConfig,
        #[serde(default = "default_torque_sin")]
        torque_sin: f64,
        #[serde(default = "default_torque_cos")]
        torque_cos: f64,
        /// `|θ| ≤ limit`; defaults to π/4 for cos-plus-one damping.
        #[serde(default)]
        theta_limit: Option<f64>,
    },
    Expr {
        slow: Vec<SlowVar>,
        fast: Vec<String>,
        f: Vec<String>,
        g: Vec<String>,
    },
}

fn default_gravity() -> f64 {
    9.8
}
fn one() -> f64 {
    1.0
}
fn default_torque_sin() -> f64 {
    -1.0
}
fn default_torque_cos() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DampingConfig {
    Constant { c0: f64 },
    CosPlusOne,
}

impl Default for DampingConfig {
    fn default() -> Self {
        DampingConfig::Constant { c0: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlowVar {
    pub name: String,
    /// Angle with period 2π.
    #[serde(default)]
    pub periodic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AxisConfig {
    Line { lo: f64, hi: f64, n: usize },
    Circle { n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        let t = Tolerances::default();
        Self { rtol: t.rtol, atol: t.atol }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifoldOptions {
    pub sweeps: usize,
    pub defect_tol: f64,
    /// Flow time and number of steps of the stable-frame iteration.
    pub frame_time: f64,
    pub frame_steps: usize,
    /// Newton seed for the critical manifold at the first node.
    pub critical_seed: Option<Vec<f64>>,
}

impl Default for ManifoldOptions {
    fn default() -> Self {
        Self { sweeps: 8, defect_tol: 1e-10, frame_time: 2.0, frame_steps: 4, critical_seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiberOptions {
    pub samples: usize,
    pub offset_min: f64,
    pub offset_max: f64,
    /// Horizon of the global projection.
    pub horizon: f64,
    /// Fit window for the decay exponent.
    pub fit_start: f64,
    pub fit_end: f64,
    pub fit_points: usize,
}

impl Default for FiberOptions {
    fn default() -> Self {
        Self { samples: 20, offset_min: 0.05, offset_max: 0.5, horizon: 100.0, fit_start: 1.0, fit_end: 10.0, fit_points: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovCmdOptions {
    pub tube_radius: f64,
    pub inner_fraction: f64,
    pub design_size: usize,
    pub base_samples: usize,
    pub quadrature_nodes: usize,
    /// Pulled-back orbits checked for a decreasing level.
    pub orbits: usize,
    pub orbit_radius_min: f64,
    pub orbit_radius_max: f64,
    pub orbit_time: f64,
    pub orbit_points: usize,
    /// Fresh radial pairs for the slope band.
    pub slopes: usize,
    pub slope_radius_min: f64,
    pub slope_radius_max: f64,
    pub retractions: usize,
    pub retraction_radius_min: f64,
    pub retraction_radius_max: f64,
    pub level_min: f64,
    pub level_max: f64,
}

impl Default for LyapunovCmdOptions {
    fn default() -> Self {
        Self {
            tube_radius: 0.5,
            inner_fraction: 0.5,
            design_size: 10_000,
            base_samples: 24,
            quadrature_nodes: 10,
            orbits: 20,
            orbit_radius_min: 0.001,
            orbit_radius_max: 0.04,
            orbit_time: 1.0,
            orbit_points: 10,
            slopes: 100,
            slope_radius_min: 0.01,
            slope_radius_max: 0.7,
            retractions: 100,
            retraction_radius_min: 0.01,
            retraction_radius_max: 0.8,
            level_min: 0.05,
            level_max: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BundleOptions {
    pub samples: usize,
    pub radius_max: f64,
    /// Horizon of the projection that checks the base point of each image.
    pub horizon: f64,
    /// Samples for the level-preservation and composition checks of the transport.
    pub transport_samples: usize,
    pub transport_times: [f64; 2],
}

impl Default for BundleOptions {
    fn default() -> Self {
        Self { samples: 50, radius_max: 0.25, horizon: 400.0, transport_samples: 10, transport_times: [0.6, 1.3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearizeOptions {
    pub depth: usize,
    pub samples: usize,
    /// Signed fiber offsets, evenly spaced over `[offset_min, offset_max]`.
    pub offset_min: f64,
    pub offset_max: f64,
    /// Times of the equivariance check; empty skips it.
    pub validate_times: Vec<f64>,
    /// Smoothness degree for the rate certificate.
    pub r: usize,
    pub rates_horizon: f64,
    /// Largest impact time searched.
    pub t_max: Option<f64>,
}

impl Default for LinearizeOptions {
    fn default() -> Self {
        Self { depth: 6, samples: 15, offset_min: -0.5, offset_max: 0.9, validate_times: vec![0.5, 2.0, 5.0], r: 3, rates_horizon: 20.0, t_max: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormKind {
    Linear,
    Fenichel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalFormOptions {
    pub form: FormKind,
    pub depth: usize,
    pub samples: usize,
    pub offset_min: f64,
    pub offset_max: f64,
    pub horizon: f64,
    pub times: usize,
    pub fd_step: f64,
    pub r: usize,
    pub rates_horizon: f64,
}

impl Default for NormalFormOptions {
    fn default() -> Self {
        Self { form: FormKind::Linear, depth: 6, samples: 6, offset_min: 0.1, offset_max: 1.0, horizon: 5.0, times: 8, fd_step: 0.05, r: 3, rates_horizon: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PendulumCmdOptions {
    /// `ε0` of the absorbing bound.
    pub eps0: f64,
    /// Basin sweep resolution in θ, α and ω.
    pub basin: [usize; 3],
    pub horizon: f64,
    /// Strip grid `(n_θ, n_α)` for the inflowing variant.
    pub variant_grid: [usize; 2],
    pub rates_horizon: f64,
    pub r: usize,
}

impl Default for PendulumCmdOptions {
    fn default() -> Self {
        Self { eps0: 0.1, basin: [20, 20, 5], horizon: 50.0, variant_grid: [17, 12], rates_horizon: 20.0, r: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatesOptions {
    pub horizon: f64,
    pub orbits: usize,
    pub r: usize,
    /// Requested `(α, β)`; chosen from the spectrum when absent.
    pub bracket: Option<[f64; 2]>,
}

impl Default for RatesOptions {
    fn default() -> Self {
        Self { horizon: 20.0, orbits: 16, r: 3, bracket: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.resolve()
    }

    /// Fills per-system defaults and checks ranges.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        if let SystemConfig::Pendulum { damping: DampingConfig::CosPlusOne, theta_limit, .. } = &mut self.system {
            theta_limit.get_or_insert(FRAC_PI_4);
        }
        if self.grid.is_none() {
            self.grid = Some(self.default_grid()?);
        }
        if self.epsilon.is_empty() {
            return Err(CliError::Config("epsilon list is empty".into()));
        }
        if let Some(e) = self.epsilon.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return Err(CliError::Config(format!("epsilon must be finite and nonnegative, got {e}")));
        }
        if !(self.tolerances.rtol > 0.0 && self.tolerances.atol > 0.0) {
            return Err(CliError::Config("tolerances must be positive".into()));
        }
        let axes = self.grid.as_ref().unwrap().len();
        let n_slow = self.field()?.n_slow();
        if axes != n_slow {
            return Err(CliError::Config(format!("grid has {axes} axes but the system has {n_slow} slow variables")));
        }
        Ok(self)
    }

    fn default_grid(&self) -> Result<Vec<AxisConfig>, CliError> {
        Ok(match &self.system {
            SystemConfig::Decoupled {} => vec![AxisConfig::Line { lo: -2.0, hi: 8.0, n: 41 }],
            SystemConfig::ScalarQuadratic {} => vec![],
            SystemConfig::Pendulum { theta_limit: Some(l), .. } => vec![AxisConfig::Line { lo: -l - 0.1, hi: l + 0.1, n: 17 }, AxisConfig::Circle { n: 16 }],
            SystemConfig::Pendulum { .. } => vec![AxisConfig::Circle { n: 32 }, AxisConfig::Circle { n: 32 }],
            SystemConfig::Expr { slow, .. } if slow.is_empty() => vec![],
            SystemConfig::Expr { .. } => return Err(CliError::Config("expression systems with slow variables need a grid".into())),
        })
    }

    /// Hex SHA-256 of the canonical JSON (sorted keys) of the resolved configuration,
    /// output location excluded.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("configuration serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("output");
        }
        let digest = Sha256::digest(canonical_json(&v).as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances::new(self.tolerances.rtol, self.tolerances.atol)
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        let axes = self.grid.clone().unwrap_or_default();
        if axes.is_empty() {
            return Ok(Grid::point());
        }
        let axes = axes
            .into_iter()
            .map(|a| match a {
                AxisConfig::Line { lo, hi, n } => Axis::line(lo, hi, n),
                AxisConfig::Circle { n } => Axis::circle(n),
            })
            .collect();
        Ok(Grid::new(axes)?)
    }

    pub fn pendulum_params(&self) -> Option<PendulumParams> {
        match &self.system {
            SystemConfig::Pendulum { gravity, length, damping, torque_sin, torque_cos, theta_limit } => Some(PendulumParams {
                gravity: *gravity,
                length: *length,
                damping: match damping {
                    DampingConfig::Constant { c0 } => Damping::Constant(*c0),
                    DampingConfig::CosPlusOne => Damping::CosPlusOne,
                },
                torque: Arc::new(HarmonicTorque { sin_theta: *torque_sin, cos_alpha: *torque_cos }),
                theta_limit: *theta_limit,
            }),
            _ => None,
        }
    }

    /// Field with the first epsilon of the list.
    pub fn field(&self) -> Result<SystemSpec, CliError> {
        self.system_at(self.epsilon.first().copied().unwrap_or(0.0))
    }

    pub fn system_at(&self, eps: f64) -> Result<SystemSpec, CliError> {
        Ok(match &self.system {
            SystemConfig::Decoupled {} => naim_core::builtins::decoupled(eps),
            SystemConfig::ScalarQuadratic {} => naim_core::builtins::scalar_quadratic().with_eps(eps),
            SystemConfig::Pendulum { .. } => make_pendulum(self.pendulum_params().unwrap(), eps)?,
            SystemConfig::Expr { slow, fast, f, g } => {
                let slow: Vec<(String, Topology)> = slow.iter().map(|s| (s.name.clone(), if s.periodic { Topology::Circle } else { Topology::Line })).collect();
                SystemSpec::new(Arc::new(FieldExpr::parse(&slow, fast, f, g)?), eps)
            }
        })
    }

    /// Slow and fast variable names used as column headers.
    pub fn variable_names(&self) -> (Vec<String>, Vec<String>) {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        match &self.system {
            SystemConfig::Decoupled {} => (s(&["x"]), s(&["y"])),
            SystemConfig::ScalarQuadratic {} => (vec![], s(&["y"])),
            SystemConfig::Pendulum { .. } => (s(&["theta", "alpha"]), s(&["omega"])),
            SystemConfig::Expr { slow, fast, .. } => (slow.iter().map(|v| v.name.clone()).collect(), fast.clone()),
        }
    }

    /// Grid used for the inflowing pendulum variant.
    pub fn variant_grid(&self) -> Result<Grid, CliError> {
        let [nt, na] = self.pendulum.variant_grid;
        Ok(strip_grid(FRAC_PI_4, 0.0, nt, na)?)
    }
}

/// Compact JSON with object keys in sorted order at every level.
pub fn canonical_json(v: &serde_json::Value) -> String {
    use serde_json::Value;
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys.iter().map(|k| format!("{}:{}", serde_json::to_string(k).unwrap(), canonical_json(&map[*k]))).collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = RunConfig::from_json(r#"{"system": {"kind": "decoupled"}}"#).unwrap();
        assert_eq!(cfg.epsilon, vec![0.05]);
        assert_eq!(cfg.grid, Some(vec![AxisConfig::Line { lo: -2.0, hi: 8.0, n: 41 }]));
        assert_eq!(cfg.manifold.sweeps, 8);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            r#"{"system": {"kind": "decoupled"}, "epsilom": [0.1]}"#,
            r#"{"system": {"kind": "decoupled", "c0": 1}}"#,
            r#"{"system": {"kind": "pendulum", "damping": {"law": "constant", "c0": 1, "c1": 2}}}"#,
            r#"{"system": {"kind": "decoupled"}, "fibers": {"sample": 3}}"#,
            r#"{"system": {"kind": "warp-drive"}}"#,
        ] {
            assert!(matches!(RunConfig::from_json(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn hash_ignores_spelling_of_defaults() {
        let a = RunConfig::from_json(r#"{"system": {"kind": "pendulum"}}"#).unwrap();
        let b = RunConfig::from_json(r#"{"seed": 0, "epsilon": [5e-2], "system": {"gravity": 9.8, "kind": "pendulum"}, "output": {"dir": "elsewhere"}}"#).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::from_json(r#"{"system": {"kind": "pendulum", "gravity": 9.81}}"#).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn variant_defaults_to_the_strip() {
        let cfg = RunConfig::from_json(r#"{"system": {"kind": "pendulum", "damping": {"law": "cos-plus-one"}}}"#).unwrap();
        assert_eq!(cfg.pendulum_params().unwrap().theta_limit, Some(FRAC_PI_4));
        assert!(matches!(cfg.grid.as_ref().unwrap()[0], AxisConfig::Line { n: 17, .. }));
    }
}
