//! Run configurations. Each subcommand has a fully defaulted config struct;
//! a JSON file supplies a base and command-line flags override it field by
//! field.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use superlyap::sde::Scheme;
use superlyap::Point;

fn check(cond: bool, msg: &str) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.to_string())
    }
}

fn finite_point(p: Point, name: &str) -> Result<(), String> {
    check(p.is_finite(), &format!("{name} must be finite"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyConfig {
    pub delta: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// With both `alpha` and `rho` set the tuning loop is skipped. Either one
    /// alone acts as a lower bound / starting point for it.
    pub alpha: Option<f64>,
    pub rho: Option<f64>,
    pub ctil1: f64,
    pub ctil2: f64,
    pub n_radial: usize,
    pub n_transverse: usize,
    pub outer_factor: f64,
    pub disk_radial: usize,
    pub disk_angular: usize,
    pub m_safety: f64,
    pub refinement_check: bool,
    pub refinement_tolerance: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        let g = superlyap::verifier::GridOptions::default();
        CertifyConfig {
            delta: superlyap::lyapunov::DEFAULT_DELTA,
            sigma_x: 0.0,
            sigma_y: 1.0,
            alpha: None,
            rho: None,
            ctil1: superlyap::lyapunov::DEFAULT_CTIL1,
            ctil2: superlyap::lyapunov::DEFAULT_CTIL2,
            n_radial: g.n_radial,
            n_transverse: g.n_transverse,
            outer_factor: g.outer_factor,
            disk_radial: g.disk_radial,
            disk_angular: g.disk_angular,
            m_safety: g.m_safety,
            refinement_check: g.refinement_check,
            refinement_tolerance: g.refinement_tolerance,
        }
    }
}

impl CertifyConfig {
    pub fn validate(&self) -> Result<(), String> {
        check(self.delta.is_finite(), "delta must be finite")?;
        check(self.sigma_x >= 0.0 && self.sigma_y >= 0.0, "noise intensities must be nonnegative")?;
        check(self.alpha.map_or(true, |a| a > 0.0), "alpha must be positive")?;
        check(self.rho.map_or(true, |r| r > 0.0), "rho must be positive")?;
        check(self.ctil1 > 0.0 && self.ctil2 > 0.0, "ctil1 and ctil2 must be positive")?;
        check(self.n_radial >= 2 && self.n_transverse >= 2, "grid needs at least 2 nodes per direction")?;
        check(self.disk_radial >= 2 && self.disk_angular >= 4, "disk grid is too small")?;
        check(self.outer_factor > 2.0, "outer_factor must exceed 2")?;
        check(self.m_safety > 0.0 && self.m_safety <= 1.0, "m_safety must lie in (0, 1]")?;
        check(self.refinement_tolerance > 0.0, "refinement_tolerance must be positive")
    }

    pub fn grid(&self) -> superlyap::verifier::GridOptions {
        superlyap::verifier::GridOptions {
            n_radial: self.n_radial,
            n_transverse: self.n_transverse,
            outer_factor: self.outer_factor,
            disk_radial: self.disk_radial,
            disk_angular: self.disk_angular,
            m_safety: self.m_safety,
            refinement_check: self.refinement_check,
            refinement_tolerance: self.refinement_tolerance,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub z0: Point,
    pub n: usize,
    pub t_end: f64,
    /// Defaults to `[t_end]`.
    pub checkpoints: Option<Vec<f64>>,
    pub h0: f64,
    pub scheme: Scheme,
    pub adaptive: bool,
    pub escape_radius: f64,
    pub seed: u64,
    /// Number of full trajectories written to the path CSV.
    pub record_paths: usize,
    /// Keep every this many base steps in the path CSV.
    pub record_every: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            sigma_x: 0.0,
            sigma_y: 1.0,
            z0: Point::new(50.0, 0.01),
            n: 1000,
            t_end: 10.0,
            checkpoints: None,
            h0: 1e-3,
            scheme: Scheme::Tamed,
            adaptive: true,
            escape_radius: 1e12,
            seed: 0,
            record_paths: 1,
            record_every: 10,
        }
    }
}

impl SimulateConfig {
    pub fn validate(&self) -> Result<(), String> {
        check(self.sigma_x >= 0.0 && self.sigma_y >= 0.0, "noise intensities must be nonnegative")?;
        finite_point(self.z0, "z0")?;
        check(self.n >= 1, "n must be at least 1")?;
        check(self.t_end > 0.0 && self.t_end.is_finite(), "t_end must be positive")?;
        check(self.h0 > 0.0 && self.h0.is_finite(), "h0 must be positive")?;
        check(self.escape_radius > 0.0, "escape_radius must be positive")?;
        check(self.record_every >= 1, "record_every must be at least 1")?;
        let cps = self.checkpoints();
        check(
            !cps.is_empty() && cps.windows(2).all(|w| w[0] < w[1]) && cps[0] > 0.0,
            "checkpoints must be positive and strictly increasing",
        )
    }

    pub fn checkpoints(&self) -> Vec<f64> {
        self.checkpoints.clone().unwrap_or_else(|| vec![self.t_end])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExitTimeConfig {
    pub delta: f64,
    pub sigma_y: f64,
    /// Defaults to the tuned value for `(delta, 0, sigma_y)`.
    pub alpha: Option<f64>,
    pub z0: f64,
    pub n: usize,
    pub seed: u64,
    pub h_max: f64,
    pub h_min: f64,
    pub safety_sigmas: f64,
    pub time_cap: f64,
    /// Thresholds `s` of the tail table `P(e^{δ̂τ} > s)`.
    pub tail_s: Vec<f64>,
}

impl Default for ExitTimeConfig {
    fn default() -> Self {
        let o = superlyap::sde::ExitTimeOptions::default();
        ExitTimeConfig {
            delta: superlyap::lyapunov::DEFAULT_DELTA,
            sigma_y: 1.0,
            alpha: None,
            z0: 0.0,
            n: 100_000,
            seed: 0,
            h_max: o.h_max,
            h_min: o.h_min,
            safety_sigmas: o.safety_sigmas,
            time_cap: o.time_cap,
            tail_s: vec![2.0, 5.0, 10.0],
        }
    }
}

impl ExitTimeConfig {
    pub fn validate(&self) -> Result<(), String> {
        check(self.delta.is_finite(), "delta must be finite")?;
        check(self.sigma_y > 0.0, "exit times need sigma_y > 0")?;
        check(self.alpha.map_or(true, |a| a > 0.0), "alpha must be positive")?;
        check(self.z0.is_finite(), "z0 must be finite")?;
        check(self.n >= 2, "n must be at least 2")?;
        check(self.h_min > 0.0 && self.h_max >= self.h_min, "need 0 < h_min <= h_max")?;
        check(self.safety_sigmas > 0.0 && self.time_cap > 0.0, "safety_sigmas and time_cap must be positive")?;
        check(self.tail_s.iter().all(|&s| s > 1.0), "tail thresholds must exceed 1")
    }

    pub fn options(&self) -> superlyap::sde::ExitTimeOptions {
        superlyap::sde::ExitTimeOptions {
            h_max: self.h_max,
            h_min: self.h_min,
            safety_sigmas: self.safety_sigmas,
            time_cap: self.time_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvariantConfig {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub z0: Point,
    pub n_paths: usize,
    pub t_end: f64,
    /// Defaults to ten times the median return time to the unit disk.
    pub burn_in: Option<f64>,
    pub window_half: f64,
    pub nx: usize,
    pub ny: usize,
    pub sample_every: usize,
    /// Block size used for the coarse positivity summary.
    pub coarse_factor: usize,
    pub h0: f64,
    pub seed: u64,
}

impl Default for InvariantConfig {
    fn default() -> Self {
        let o = superlyap::ergodics::HistogramOptions::default();
        InvariantConfig {
            sigma_x: 1.0,
            sigma_y: 1.0,
            z0: Point::new(-3.0, 1.0),
            n_paths: o.n_paths,
            t_end: o.t_end,
            burn_in: None,
            window_half: 3.0,
            nx: o.nx,
            ny: o.ny,
            sample_every: o.sample_every,
            coarse_factor: 10,
            h0: 1e-3,
            seed: 0,
        }
    }
}

impl InvariantConfig {
    pub fn validate(&self) -> Result<(), String> {
        check(self.sigma_x >= 0.0, "sigma_x must be nonnegative")?;
        check(self.sigma_y > 0.0, "occupation measures need sigma_y > 0")?;
        finite_point(self.z0, "z0")?;
        check(self.n_paths >= 1 && self.sample_every >= 1, "n_paths and sample_every must be positive")?;
        check(self.t_end > 0.0 && self.t_end.is_finite(), "t_end must be positive")?;
        check(self.burn_in.map_or(true, |b| b >= 0.0 && b < self.t_end), "burn_in must lie in [0, t_end)")?;
        check(self.window_half > 0.0, "window_half must be positive")?;
        check(self.nx >= 1 && self.ny >= 1, "bin counts must be positive")?;
        check(
            self.coarse_factor >= 1 && self.nx % self.coarse_factor == 0 && self.ny % self.coarse_factor == 0,
            "coarse_factor must divide nx and ny",
        )?;
        check(self.h0 > 0.0, "h0 must be positive")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeConfig {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub from_a: Point,
    pub from_b: Point,
    pub checkpoints: Vec<f64>,
    pub n: usize,
    pub window_half: f64,
    pub nx: usize,
    pub ny: usize,
    pub n_bootstrap: usize,
    pub min_bin_count: f64,
    pub h0: f64,
    /// Seeds of the two ensembles.
    pub seed_a: u64,
    pub seed_b: u64,
    pub bootstrap_seed: u64,
    /// Adds the `V`-weighted proxy with this `β`; triggers a tuning run at
    /// the default `δ` with the same noise.
    pub beta: Option<f64>,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        let o = superlyap::ergodics::TvOptions::default();
        ConvergeConfig {
            sigma_x: 1.0,
            sigma_y: 1.0,
            from_a: Point::new(3.0, 1.0),
            from_b: Point::new(-3.0, 1.0),
            checkpoints: vec![1.0, 2.0, 4.0, 8.0],
            n: 10_000,
            window_half: 6.0,
            nx: o.nx,
            ny: o.ny,
            n_bootstrap: o.n_bootstrap,
            min_bin_count: o.min_bin_count,
            h0: 1e-3,
            seed_a: 0,
            seed_b: 1,
            bootstrap_seed: o.seed,
            beta: None,
        }
    }
}

impl ConvergeConfig {
    pub fn validate(&self) -> Result<(), String> {
        check(self.sigma_x >= 0.0, "sigma_x must be nonnegative")?;
        check(self.sigma_y > 0.0, "mixing needs sigma_y > 0")?;
        finite_point(self.from_a, "from_a")?;
        finite_point(self.from_b, "from_b")?;
        check(
            !self.checkpoints.is_empty()
                && self.checkpoints[0] > 0.0
                && self.checkpoints.windows(2).all(|w| w[0] < w[1]),
            "checkpoints must be positive and strictly increasing",
        )?;
        check(self.n >= 2, "n must be at least 2")?;
        check(self.window_half > 0.0 && self.nx >= 1 && self.ny >= 1, "bad histogram window")?;
        check(self.h0 > 0.0, "h0 must be positive")?;
        check(self.beta.map_or(true, |b| b >= 0.0), "beta must be nonnegative")
    }

    pub fn tv_options(&self) -> superlyap::ergodics::TvOptions {
        superlyap::ergodics::TvOptions {
            window: superlyap::ergodics::Window::square(self.window_half),
            nx: self.nx,
            ny: self.ny,
            n_bootstrap: self.n_bootstrap,
            min_bin_count: self.min_bin_count,
            seed: self.bootstrap_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub from: Point,
    pub to: Point,
    /// Defaults to the shortest constructed time.
    pub horizon: Option<f64>,
    pub m_push: Option<f64>,
    pub fine_step: f64,
    pub event_horizon: f64,
    pub gram_nodes: usize,
    /// Keep every this many RK4 steps in the path CSV.
    pub record_every: usize,
}

impl Default for ControlConfig {
    fn default() -> Self {
        let o = superlyap::control::SynthesisOptions::default();
        ControlConfig {
            from: Point::new(1.5, 0.0),
            to: Point::new(-3.0, 1.0),
            horizon: None,
            m_push: o.m_push,
            fine_step: o.fine_step,
            event_horizon: o.event_horizon,
            gram_nodes: 2000,
            record_every: 1,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<(), String> {
        finite_point(self.from, "from")?;
        finite_point(self.to, "to")?;
        check(self.horizon.map_or(true, |t| t > 0.0 && t.is_finite()), "horizon must be positive")?;
        check(self.m_push.map_or(true, |m| m > 0.0), "m_push must be positive")?;
        check(self.fine_step > 0.0 && self.event_horizon > 0.0, "step and event horizon must be positive")?;
        check(self.gram_nodes >= 2 && self.record_every >= 1, "gram_nodes and record_every too small")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BvpConfig {
    pub delta: f64,
    pub sigma_y: f64,
    /// Native interval only; defaults to the tuned value.
    pub alpha: Option<f64>,
    /// Solve the rescaled problem on `[−1, 1]` instead.
    pub epsilon: Option<f64>,
    pub points: usize,
    pub tolerance: f64,
}

impl Default for BvpConfig {
    fn default() -> Self {
        BvpConfig {
            delta: superlyap::lyapunov::DEFAULT_DELTA,
            sigma_y: 1.0,
            alpha: None,
            epsilon: None,
            points: 401,
            tolerance: superlyap::lyapunov::BvpOptions::default().tolerance,
        }
    }
}

impl BvpConfig {
    pub fn validate(&self) -> Result<(), String> {
        check(self.delta.is_finite(), "delta must be finite")?;
        check(self.sigma_y >= 0.0, "sigma_y must be nonnegative")?;
        check(self.alpha.map_or(true, |a| a > 0.0), "alpha must be positive")?;
        check(self.epsilon.map_or(true, |e| e > 0.0), "epsilon must be positive")?;
        check(self.points >= 2, "points must be at least 2")?;
        check(self.tolerance > 0.0, "tolerance must be positive")
    }
}

/// Drop `null` entries so that unset flags do not override the base.
fn strip_nulls(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m.into_iter().filter(|(_, v)| !v.is_null()).collect(),
        _ => Map::new(),
    }
}

/// Accepts either a bare config object or a previous output document, whose
/// `config` block is reused.
fn base_object(file: Option<Value>, command: &str) -> Result<Map<String, Value>, String> {
    let Some(v) = file else {
        return Ok(Map::new());
    };
    let Value::Object(mut m) = v else {
        return Err("config file must hold a JSON object".into());
    };
    if let Some(Value::String(c)) = m.get("command") {
        if c != command {
            return Err(format!("config file was written by `{c}`, not `{command}`"));
        }
    }
    match m.remove("config") {
        Some(Value::Object(inner)) => Ok(inner),
        Some(_) => Err("`config` must be an object".into()),
        None => Ok(m),
    }
}

/// File config overlaid with the non-null flag values.
pub fn resolve<T, A>(file: Option<Value>, command: &str, flags: &A) -> Result<T, String>
where
    T: DeserializeOwned,
    A: Serialize,
{
    let mut base = base_object(file, command)?;
    let over = serde_json::to_value(flags).map_err(|e| e.to_string())?;
    base.extend(strip_nulls(over));
    serde_json::from_value(Value::Object(base)).map_err(|e| format!("invalid {command} config: {e}"))
}
