//! Simulation of the full SDE, the exactly sampled linear process `Z`, exit
//! times, and the auxiliary system driven by `A`.

use crate::geometry::{det_flow, drift, Flow, Point};
use crate::lyapunov::LyapunovSpec;
use crate::rng::NoiseStream;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl ModelParams {
    pub fn new(sigma_x: f64, sigma_y: f64) -> Self {
        ModelParams { sigma_x, sigma_y }
    }

    pub fn from_spec(spec: &LyapunovSpec) -> Self {
        ModelParams { sigma_x: spec.sigma_x, sigma_y: spec.sigma_y }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_x >= 0.0 && self.sigma_y >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("noise intensities must be nonnegative: {self:?}")))
        }
    }

    pub fn is_elliptic(&self) -> bool {
        self.sigma_x > 0.0 && self.sigma_y > 0.0
    }

    pub fn is_hypoelliptic(&self) -> bool {
        self.sigma_x == 0.0 && self.sigma_y > 0.0
    }

    pub fn is_deterministic(&self) -> bool {
        self.sigma_x == 0.0 && self.sigma_y == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Drift replaced by `f/(1 + h|f|)`.
    Tamed,
    /// Plain Euler–Maruyama; kept for failure demonstrations.
    PlainEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub h0: f64,
    pub scheme: Scheme,
    /// Split base steps until `h·|f| ≤ 1` on every substep.
    pub adaptive: bool,
    /// Longest horizon accepted by the ensemble drivers.
    pub t_max: f64,
    /// A path whose radius exceeds this value is flagged as exploded.
    pub escape_radius: f64,
    /// Per-path cap on substeps; exhausting it is a failure.
    pub max_substeps: u64,
    pub seed: u64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            h0: 1e-3,
            scheme: Scheme::Tamed,
            adaptive: true,
            t_max: 1e4,
            escape_radius: 1e12,
            max_substeps: 20_000_000_000,
            seed: 0,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h0 > 0.0 && self.h0.is_finite()) {
            return Err(Error::InvalidArgument(format!("h0 = {} must be positive", self.h0)));
        }
        if !(self.escape_radius > 0.0) {
            return Err(Error::InvalidArgument("escape radius must be positive".into()));
        }
        Ok(())
    }
}

/// One Euler update with standard normal pair `noise`; with [`Scheme::Tamed`]
/// the drift displacement never exceeds one.
pub fn step_full(
    params: &ModelParams,
    config: &IntegratorConfig,
    z: Point,
    h: f64,
    noise: (f64, f64),
) -> Result<Point> {
    if !z.is_finite() || !noise.0.is_finite() || !noise.1.is_finite() {
        return Err(Error::NonFinite("state or noise"));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step h = {h} must be positive")));
    }
    Ok(euler(params, config.scheme, z, h, noise))
}

#[inline]
fn euler(params: &ModelParams, scheme: Scheme, z: Point, h: f64, noise: (f64, f64)) -> Point {
    let f = drift(z);
    let fh = match scheme {
        Scheme::Tamed => h / (1.0 + h * f.norm()),
        Scheme::PlainEuler => h,
    };
    let sh = h.sqrt();
    Point::new(
        z.x + fh * f.x + (2.0 * params.sigma_x).sqrt() * sh * noise.0,
        z.y + fh * f.y + (2.0 * params.sigma_y).sqrt() * sh * noise.1,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PathStatus {
    Completed,
    /// Radius passed the escape radius (or the state stopped being finite).
    Exploded { time: f64 },
    SubstepBudget { time: f64 },
}

impl PathStatus {
    pub fn is_failure(&self) -> bool {
        !matches!(self, PathStatus::Completed)
    }
}

/// Substeps per base step before the remainder switches to the exact
/// drift flow.
const SPLIT_CAP: u32 = 64;

struct Stepper<'a> {
    params: &'a ModelParams,
    cfg: &'a IntegratorConfig,
    substeps: u64,
    max_radius: f64,
}

impl Stepper<'_> {
    /// Advance by `h` with one normal pair, splitting into substeps when
    /// the drift is large. The Brownian increment of the base step is
    /// spread evenly over the substeps.
    fn advance(&mut self, mut z: Point, h: f64, xi: (f64, f64)) -> std::result::Result<Point, f64> {
        if !self.cfg.adaptive {
            self.substeps += 1;
            let z1 = euler(self.params, self.cfg.scheme, z, h, xi);
            return self.check(z1, h);
        }
        let mut rem = h;
        let mut done = 0.0;
        let mut split = 0u32;
        loop {
            let speed = drift(z).norm();
            if split >= SPLIT_CAP && rem * speed > 1.0 {
                self.substeps += 1;
                return self.far_field(z, rem, done, h, xi);
            }
            split += 1;
            let mut sub = rem;
            if sub * speed > 1.0 {
                let k = (sub * speed).log2().ceil().max(1.0);
                sub = rem * (-k).exp2();
                while sub * speed > 1.0 {
                    sub *= 0.5;
                }
            }
            let scale = (sub / h).sqrt();
            z = euler(self.params, self.cfg.scheme, z, sub, (xi.0 * scale, xi.1 * scale));
            self.substeps += 1;
            done += sub;
            z = self.check(z, done)?;
            if sub >= rem {
                return Ok(z);
            }
            rem -= sub;
            if self.substeps >= self.cfg.max_substeps {
                return Err(-done);
            }
        }
    }

    /// Remainder `rem` of a base step: exact drift flow, then the matching
    /// share of the noise increment. The radius peaks at `r²/|y|` when the
    /// orbit passes its apex inside the step.
    fn far_field(&mut self, z: Point, rem: f64, done: f64, h: f64, xi: (f64, f64)) -> std::result::Result<Point, f64> {
        let r2 = z.norm_sq();
        let t_apex = z.x / r2;
        if t_apex > 0.0 && t_apex <= rem {
            let peak = r2 / z.y.abs();
            if !(peak <= self.cfg.escape_radius) {
                return Err((done + t_apex).max(f64::MIN_POSITIVE));
            }
            self.max_radius = self.max_radius.max(peak);
        }
        let moved = match det_flow(z, rem) {
            Flow::State(p) => p,
            Flow::BlowUp { time } => return Err((done + time).max(f64::MIN_POSITIVE)),
        };
        let share = rem / h.sqrt();
        let z1 = Point::new(
            moved.x + (2.0 * self.params.sigma_x).sqrt() * share * xi.0,
            moved.y + (2.0 * self.params.sigma_y).sqrt() * share * xi.1,
        );
        self.check(z1, done + rem)
    }

    /// `Err(t)` with `t > 0` marks explosion at local time `t`.
    #[inline]
    fn check(&mut self, z: Point, local_t: f64) -> std::result::Result<Point, f64> {
        let r = z.norm();
        if !(r <= self.cfg.escape_radius) {
            return Err(local_t.max(f64::MIN_POSITIVE));
        }
        self.max_radius = self.max_radius.max(r);
        Ok(z)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PathResult {
    /// State at each requested checkpoint (the last reached state after a
    /// failure).
    pub states: Vec<Point>,
    pub status: PathStatus,
    pub substeps: u64,
    pub max_radius: f64,
}

/// Simulate one path on stream `(config.seed, path)`, reporting states at the
/// sorted `checkpoints`. `observe(t, z)` runs after every base step.
pub fn simulate_path_observed<F>(
    params: &ModelParams,
    config: &IntegratorConfig,
    z0: Point,
    checkpoints: &[f64],
    path: u64,
    mut observe: F,
) -> PathResult
where
    F: FnMut(f64, Point),
{
    let mut stream = NoiseStream::new(config.seed, path);
    let mut st = Stepper { params, cfg: config, substeps: 0, max_radius: z0.norm() };
    let mut z = z0;
    let mut t = 0.0;
    let mut states = Vec::with_capacity(checkpoints.len());
    let mut status = PathStatus::Completed;
    'outer: for &cp in checkpoints {
        while t < cp {
            let h = config.h0.min(cp - t);
            let xi = stream.normal_pair();
            match st.advance(z, h, xi) {
                Ok(z1) => z = z1,
                Err(dt) if dt > 0.0 => {
                    status = PathStatus::Exploded { time: t + dt };
                    break 'outer;
                }
                Err(dt) => {
                    status = PathStatus::SubstepBudget { time: t - dt };
                    break 'outer;
                }
            }
            t = if cp - t <= config.h0 * (1.0 + 1e-12) { cp } else { t + h };
            observe(t, z);
        }
        states.push(z);
    }
    while states.len() < checkpoints.len() {
        states.push(z);
    }
    PathResult { states, status, substeps: st.substeps, max_radius: st.max_radius }
}

pub fn simulate_path(
    params: &ModelParams,
    config: &IntegratorConfig,
    z0: Point,
    checkpoints: &[f64],
    path: u64,
) -> PathResult {
    simulate_path_observed(params, config, z0, checkpoints, path, |_, _| {})
}

/// Recorded trajectory `(t, z)` sampled every base step.
pub fn simulate_trajectory(
    params: &ModelParams,
    config: &IntegratorConfig,
    z0: Point,
    t_end: f64,
    path: u64,
) -> (Vec<(f64, Point)>, PathResult) {
    let mut out = vec![(0.0, z0)];
    let res = simulate_path_observed(params, config, z0, &[t_end], path, |t, z| out.push((t, z)));
    (out, res)
}

/// Initial condition of path `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Starts {
    Fixed(Point),
    /// Path `i` starts at `points[i % len]`.
    Cycle(Vec<Point>),
}

impl Starts {
    pub fn get(&self, i: usize) -> Point {
        match self {
            Starts::Fixed(p) => *p,
            Starts::Cycle(v) => v[i % v.len()],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Ensemble {
    pub count: usize,
    pub seed: u64,
    /// Path `i` uses stream `(seed, i)`.
    pub stream_ids: std::ops::Range<u64>,
    pub checkpoints: Vec<f64>,
    /// `states[c][i]`: path `i` at checkpoint `c`.
    pub states: Vec<Vec<Point>>,
    pub statuses: Vec<PathStatus>,
    pub failures: usize,
    pub failure_fraction: f64,
    pub total_substeps: u64,
    pub max_radius: f64,
}

impl Ensemble {
    pub fn terminal(&self) -> &[Point] {
        self.states.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

/// Mean and standard error.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `n` independent paths, one stream per path.
pub fn run_ensemble(
    params: &ModelParams,
    config: &IntegratorConfig,
    starts: &Starts,
    checkpoints: &[f64],
    n: usize,
) -> Result<Ensemble> {
    params.validate()?;
    config.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("ensemble needs at least one path".into()));
    }
    if checkpoints.is_empty()
        || checkpoints.windows(2).any(|w| w[1] < w[0])
        || checkpoints[0] < 0.0
    {
        return Err(Error::InvalidArgument("checkpoints must be sorted and nonnegative".into()));
    }
    if *checkpoints.last().unwrap() > config.t_max {
        return Err(Error::InvalidArgument(format!(
            "horizon {} exceeds t_max = {}",
            checkpoints.last().unwrap(),
            config.t_max
        )));
    }
    let results: Vec<PathResult> = (0..n)
        .into_par_iter()
        .map(|i| simulate_path(params, config, starts.get(i), checkpoints, i as u64))
        .collect();
    let mut states = vec![Vec::with_capacity(n); checkpoints.len()];
    let mut statuses = Vec::with_capacity(n);
    let mut total = 0;
    let mut max_radius = 0.0f64;
    for r in &results {
        for (c, s) in r.states.iter().enumerate() {
            states[c].push(*s);
        }
        statuses.push(r.status);
        total += r.substeps;
        max_radius = max_radius.max(r.max_radius);
    }
    let failures = statuses.iter().filter(|s| s.is_failure()).count();
    Ok(Ensemble {
        count: n,
        seed: config.seed,
        stream_ids: 0..n as u64,
        checkpoints: checkpoints.to_vec(),
        states,
        statuses,
        failures,
        failure_fraction: failures as f64 / n as f64,
        total_substeps: total,
        max_radius,
    })
}

/// Exact transition of `dZ = (5/2) Z dT + √(2σy) dW` over `h`.
pub fn step_z_exact(sigma_y: f64, z: f64, h: f64, normal: f64) -> f64 {
    let var = (2.0 * sigma_y / 5.0) * (5.0 * h).exp_m1();
    (2.5 * h).exp() * z + var.sqrt() * normal
}

/// Draw `Z` at `t + h·frac` given `Z_t = a` and `Z_{t+h} = c`.
fn bridge_midpoint(sigma_y: f64, a: f64, c: f64, h: f64, frac: f64, normal: f64) -> f64 {
    // X_t = e^{−θt} Z_t is a time-changed Brownian motion with clock
    // v(t) = s²(1 − e^{−2θt})/(2θ).
    let theta = 2.5;
    let s2 = 2.0 * sigma_y;
    let clock = |t: f64| -s2 * (-2.0 * theta * t).exp_m1() / (2.0 * theta);
    let (vm, vh) = (clock(frac * h), clock(h));
    let xh = (-theta * h).exp() * c;
    let mean = a + vm / vh * (xh - a);
    let var = vm * (vh - vm) / vh;
    (theta * frac * h).exp() * (mean + var.sqrt() * normal)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitTimeOptions {
    pub h_max: f64,
    pub h_min: f64,
    /// Steps are sized so the barrier sits this many standard deviations away.
    pub safety_sigmas: f64,
    pub time_cap: f64,
}

impl Default for ExitTimeOptions {
    fn default() -> Self {
        ExitTimeOptions { h_max: 0.05, h_min: 1e-8, safety_sigmas: 3.0, time_cap: 60.0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExitTimeEstimate {
    pub z0: f64,
    pub n: usize,
    pub seed: u64,
    /// Monte-Carlo mean of `e^{δ̂τ}`.
    pub mean: f64,
    pub std_error: f64,
    /// Paths still inside at the time cap.
    pub capped: usize,
    #[serde(skip)]
    pub taus: Vec<f64>,
}

impl ExitTimeEstimate {
    /// Empirical `P(e^{δ̂τ} > s)`.
    pub fn tail_fraction(&self, delta_hat: f64, s: f64) -> f64 {
        let t = s.ln() / delta_hat;
        self.taus.iter().filter(|&&tau| tau > t).count() as f64 / self.taus.len() as f64
    }
}

/// `(10α / (σy π (s^{5/δ̂} − 1)))^{1/2}`, an upper bound on `P(e^{δ̂τ} > s)`.
pub fn exit_tail_bound(alpha: f64, sigma_y: f64, delta_hat: f64, s: f64) -> f64 {
    (10.0 * alpha / (sigma_y * std::f64::consts::PI * (s.powf(5.0 / delta_hat) - 1.0))).sqrt()
}

/// Exit time of `|Z|` from `[0, √(2α))` started at `z0`.
pub fn exit_time_path(
    sigma_y: f64,
    barrier: f64,
    z0: f64,
    opts: &ExitTimeOptions,
    stream: &mut NoiseStream,
) -> Option<f64> {
    let mut z = z0;
    let mut t = 0.0;
    if z.abs() >= barrier {
        return Some(0.0);
    }
    let spread = (2.0 * sigma_y).sqrt() * opts.safety_sigmas;
    // Crossing probability over a step of length `len` between inside
    // endpoints, in the clock where `e^{−θs}Z` is a Brownian motion.
    let cross = |a: f64, c: f64, len: f64| {
        let shrink = (-2.5 * len).exp();
        crossing_probability(a, shrink * c, barrier, barrier * shrink, ou_clock(sigma_y, len))
    };
    while t < opts.time_cap {
        let gap = barrier - z.abs();
        let h = (gap / spread).powi(2).clamp(opts.h_min, opts.h_max);
        let (n1, _) = stream.normal_pair();
        let znew = step_z_exact(sigma_y, z, h, n1);
        if znew.abs() < barrier && stream.uniform() >= cross(z, znew, h) {
            z = znew;
            t += h;
            continue;
        }
        // First passage lies in (t, t + h]; halve with the exact bridge.
        let (mut a, mut c, mut len) = (z, znew, h);
        while len > opts.h_min {
            let (n2, _) = stream.normal_pair();
            let m = bridge_midpoint(sigma_y, a, c, len, 0.5, n2);
            len *= 0.5;
            let p1 = cross(a, m, len);
            let p2 = cross(m, c, len);
            if stream.uniform() * (1.0 - (1.0 - p1) * (1.0 - p2)) < p1 {
                c = m;
            } else {
                a = m;
                t += len;
            }
        }
        return Some(t + len);
    }
    None
}

/// Clock `s²(1 − e^{−2θh})/(2θ)` of `e^{−θt}Z` over a span `h`.
fn ou_clock(sigma_y: f64, h: f64) -> f64 {
    -2.0 * sigma_y * (-5.0 * h).exp_m1() / 5.0
}

/// Probability that a Brownian path run for clock `var` from `a` to `c`
/// touches `±b(·)`, with `b` linear from `ba` to `bc`. Endpoints on or past
/// the barrier give 1.
fn crossing_probability(a: f64, c: f64, ba: f64, bc: f64, var: f64) -> f64 {
    if a.abs() >= ba || c.abs() >= bc {
        return 1.0;
    }
    let up = (-2.0 * (ba - a) * (bc - c) / var).exp();
    let down = (-2.0 * (ba + a) * (bc + c) / var).exp();
    1.0 - (1.0 - up) * (1.0 - down)
}

/// Monte-Carlo estimate of `E[e^{δ̂τ}]`, which equals `g(z0)`.
pub fn exit_time_mc(
    spec: &LyapunovSpec,
    z0: f64,
    n: usize,
    seed: u64,
    opts: &ExitTimeOptions,
) -> Result<ExitTimeEstimate> {
    let barrier = spec.bvp_half_length();
    let dh = spec.delta_hat();
    if !(z0.abs() <= barrier) {
        return Err(Error::InvalidArgument(format!("|z0| = {} exceeds {barrier}", z0.abs())));
    }
    if !(dh < 2.5) || !(spec.sigma_y > 0.0) || n == 0 {
        return Err(Error::InvalidArgument("need delta_hat < 5/2, sigma_y > 0, n > 0".into()));
    }
    let taus: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = NoiseStream::new(seed, i as u64);
            exit_time_path(spec.sigma_y, barrier, z0, opts, &mut s)
        })
        .collect();
    let capped = taus.iter().filter(|t| t.is_none()).count();
    let taus: Vec<f64> = taus.into_iter().map(|t| t.unwrap_or(opts.time_cap)).collect();
    let vals: Vec<f64> = taus.iter().map(|t| (dh * t).exp()).collect();
    let (mean, std_error) = mean_se(&vals);
    Ok(ExitTimeEstimate { z0, n, seed, mean, std_error, capped, taus })
}

/// Law of `W∞ = lim e^{−θT} Z_T` and the mixture proposal used to sample it.
#[derive(Debug, Clone, Copy)]
struct Terminal {
    z0: f64,
    /// `Var W∞ = σy/θ`.
    v: f64,
    /// Exponent `p = δ̂/θ` of the singular component.
    p: f64,
    /// Normalizer of `|w|^{−p} e^{−w²/2v}`.
    norm_singular: f64,
}

impl Terminal {
    fn new(sigma_y: f64, z0: f64, delta_hat: f64) -> Self {
        let v = sigma_y / 2.5;
        let p = delta_hat / 2.5;
        let a = 0.5 * (1.0 - p);
        Terminal { z0, v, p, norm_singular: (2.0 * v).powf(a) * gamma_fn(a) }
    }

    fn density(&self, w: f64) -> f64 {
        (-(w - self.z0).powi(2) / (2.0 * self.v)).exp() / (std::f64::consts::TAU * self.v).sqrt()
    }

    fn singular(&self, w: f64) -> f64 {
        w.abs().powf(-self.p) * (-w * w / (2.0 * self.v)).exp() / self.norm_singular
    }

    /// Draw `w` from `½ N(z0, v) + ½ q₀` and return it with `density/proposal`.
    fn draw(&self, s: &mut NoiseStream) -> (f64, f64) {
        let w = if s.uniform() < 0.5 {
            self.z0 + self.v.sqrt() * s.normal_pair().0
        } else {
            let r = s.gamma(0.5 * (1.0 - self.p));
            let sign = if s.uniform() < 0.5 { -1.0 } else { 1.0 };
            sign * (2.0 * self.v * r).sqrt()
        };
        let f = self.density(w);
        (w, f / (0.5 * f + 0.5 * self.singular(w)))
    }
}

/// Lanczos approximation, accurate to about 1e-15 for positive arguments.
fn gamma_fn(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_fn(1.0 - x));
    }
    let x = x - 1.0;
    let t = x + G + 0.5;
    let mut a = C[0];
    for (k, c) in C.iter().enumerate().skip(1) {
        a += c / (x + k as f64);
    }
    std::f64::consts::TAU.sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// Exit time of a path of `Z` conditioned on `W∞ = w`. In the clock
/// `u = (σy/θ)(1 − e^{−2θt})` the process `W = e^{−θt}Z` is a Brownian bridge
/// from `z0` to `w`, and the barrier reads `|W| ≥ L e^{−θt}`.
fn exit_time_bridged(
    sigma_y: f64,
    barrier: f64,
    z0: f64,
    w: f64,
    opts: &ExitTimeOptions,
    stream: &mut NoiseStream,
) -> Option<f64> {
    let theta = 2.5;
    let v_inf = sigma_y / theta;
    // Remaining clock `v∞ − u(t)`, computed without cancellation.
    let rem = |t: f64| v_inf * (-2.0 * theta * t).exp();
    let outside = |t: f64, a: f64| a.abs() >= barrier * (-theta * t).exp();
    let cross = |t: f64, a: f64, c: f64, len: f64| {
        let (ba, bc) = (barrier * (-theta * t).exp(), barrier * (-theta * (t + len)).exp());
        crossing_probability(a, c, ba, bc, rem(t) - rem(t + len))
    };
    if z0.abs() >= barrier {
        return Some(0.0);
    }
    let spread = (2.0 * sigma_y).sqrt() * opts.safety_sigmas;
    let (mut t, mut a) = (0.0f64, z0);
    while t < opts.time_cap {
        let gap = barrier - (theta * t).exp() * a.abs();
        let h = (gap / spread).powi(2).clamp(opts.h_min, opts.h_max);
        let (r0, r1) = (rem(t), rem(t + h));
        let du = r0 - r1;
        let (n1, _) = stream.normal_pair();
        let c = a + du / r0 * (w - a) + (du * r1 / r0).sqrt() * n1;
        if !outside(t + h, c) && stream.uniform() >= cross(t, a, c, h) {
            a = c;
            t += h;
            continue;
        }
        // First passage lies in (t, t + h]; halve with the Brownian bridge
        // in the u clock.
        let (mut c, mut len) = (c, h);
        while len > opts.h_min {
            let half = 0.5 * len;
            let (ra, rm, rc) = (rem(t), rem(t + half), rem(t + len));
            let (d1, d2) = (ra - rm, rm - rc);
            let (n2, _) = stream.normal_pair();
            let m = a + d1 / (d1 + d2) * (c - a) + (d1 * d2 / (d1 + d2)).sqrt() * n2;
            let p1 = cross(t, a, m, half);
            let p2 = cross(t + half, m, c, half);
            if stream.uniform() * (1.0 - (1.0 - p1) * (1.0 - p2)) < p1 {
                c = m;
            } else {
                a = m;
                t += half;
            }
            len = half;
        }
        return Some(t + len);
    }
    None
}

/// Importance-sampled estimate of `E[e^{δ̂τ}]` with finite variance.
///
/// `e^{δ̂τ}` has tail index `θ/δ̂ < 2`, so the plain mean of
/// [`exit_time_mc`] has infinite variance and its standard error is not a
/// reliable scale. Here the limit `W∞` is drawn first from a proposal
/// carrying extra mass `∝ |w|^{−δ̂/θ}` near zero, the path is then sampled
/// exactly as a bridge toward it, and each sample is weighted by the
/// likelihood ratio (at most 2). `taus` is left empty.
pub fn exit_time_is(
    spec: &LyapunovSpec,
    z0: f64,
    n: usize,
    seed: u64,
    opts: &ExitTimeOptions,
) -> Result<ExitTimeEstimate> {
    let barrier = spec.bvp_half_length();
    let dh = spec.delta_hat();
    if !(z0.abs() <= barrier) {
        return Err(Error::InvalidArgument(format!("|z0| = {} exceeds {barrier}", z0.abs())));
    }
    if !(dh < 2.5) || !(spec.sigma_y > 0.0) || n == 0 {
        return Err(Error::InvalidArgument("need delta_hat < 5/2, sigma_y > 0, n > 0".into()));
    }
    let law = Terminal::new(spec.sigma_y, z0, dh);
    let rows: Vec<(f64, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = NoiseStream::new(seed, i as u64);
            let (w, weight) = law.draw(&mut s);
            match exit_time_bridged(spec.sigma_y, barrier, z0, w, opts, &mut s) {
                Some(tau) => (weight * (dh * tau).exp(), false),
                None => (weight * (dh * opts.time_cap).exp(), true),
            }
        })
        .collect();
    let vals: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let (mean, std_error) = mean_se(&vals);
    Ok(ExitTimeEstimate { z0, n, seed, mean, std_error, capped: rows.iter().filter(|r| r.1).count(), taus: Vec::new() })
}

/// Exit times of the `A`-driven system from `(x, y)` to `xy² = 2α`,
/// integrated directly: `X̂ = x/(1 − xt)` exactly, `Ŷ` by Euler–Maruyama with
/// steps `h_T / X̂` (uniform in the intrinsic clock `T`).
pub fn hat_exit_times(
    sigma_y: f64,
    alpha: f64,
    start: Point,
    h_t: f64,
    n: usize,
    seed: u64,
) -> Vec<f64> {
    let x0 = start.x;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = NoiseStream::new(seed, i as u64);
            let (mut t, mut y) = (0.0f64, start.y);
            loop {
                let x = x0 / (1.0 - x0 * t);
                if x * y * y >= 2.0 * alpha {
                    return t;
                }
                let h = h_t / x;
                let (n1, _) = s.normal_pair();
                y += 2.0 * x * y * h + (2.0 * sigma_y * h).sqrt() * n1;
                t += h;
            }
        })
        .collect()
}

/// `τ̂ = (1 − e^{−τ})/x`, mapping exit times of `Z` to the original clock.
pub fn hat_time_from_z(x: f64, tau: f64) -> f64 {
    -(-tau).exp_m1() / x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_flow_to_half() {
        let p = ModelParams::new(0.0, 0.0);
        let cfg = IntegratorConfig { h0: 1e-5, ..Default::default() };
        let mut z = Point::new(1.0, 0.0);
        for _ in 0..50_000 {
            z = step_full(&p, &cfg, z, 1e-5, (0.0, 0.0)).unwrap();
        }
        assert!((z.x - 2.0).abs() < 1e-3, "{z:?}");
    }

    #[test]
    fn origin_is_fixed_without_noise() {
        let p = ModelParams::new(1.0, 1.0);
        let z = step_full(&p, &IntegratorConfig::default(), Point::ORIGIN, 0.1, (0.0, 0.0)).unwrap();
        assert_eq!(z, Point::ORIGIN);
    }

    #[test]
    fn taming_bounds_drift_displacement() {
        let p = ModelParams::new(0.0, 0.0);
        let cfg = IntegratorConfig::default();
        for z in [Point::new(1e6, 3.0), Point::new(-40.0, 1e4), Point::new(0.3, 0.1)] {
            for h in [1e-3, 1.0, 100.0] {
                let z1 = step_full(&p, &cfg, z, h, (0.0, 0.0)).unwrap();
                assert!(z1.dist(z) <= 1.0 + 4.0 * f64::EPSILON * z.norm());
            }
        }
    }

    #[test]
    fn nan_is_rejected() {
        let p = ModelParams::new(1.0, 1.0);
        let cfg = IntegratorConfig::default();
        assert!(step_full(&p, &cfg, Point::new(f64::NAN, 0.0), 0.1, (0.0, 0.0)).is_err());
        assert!(step_full(&p, &cfg, Point::ORIGIN, 0.1, (f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn exact_step_small_h_variance() {
        let h = 1e-6;
        let var = (2.0 / 5.0) * (5.0 * h as f64).exp_m1();
        assert!((var / h - 2.0).abs() < 1e-4);
        assert_eq!(step_z_exact(1.0, 0.0, 0.3, 0.0), 0.0);
    }

    #[test]
    fn started_at_barrier_exits_immediately() {
        let spec = LyapunovSpec {
            delta: 0.2,
            alpha: 3.0,
            rho: 10.0,
            ctil1: 0.1,
            ctil2: 0.8,
            sigma_x: 1.0,
            sigma_y: 1.0,
        };
        let l = spec.bvp_half_length();
        for z0 in [l, -l] {
            let est = exit_time_mc(&spec, z0, 10, 1, &ExitTimeOptions::default()).unwrap();
            assert_eq!(est.mean, 1.0);
        }
    }

    #[test]
    fn same_seed_same_path() {
        let p = ModelParams::new(1.0, 1.0);
        let cfg = IntegratorConfig { seed: 11, ..Default::default() };
        let a = simulate_path(&p, &cfg, Point::new(0.5, 0.5), &[1.0], 0);
        let b = simulate_path(&p, &cfg, Point::new(0.5, 0.5), &[1.0], 0);
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn lanczos_gamma() {
        assert!((gamma_fn(0.5) - std::f64::consts::PI.sqrt()).abs() < 1e-13);
        assert!((gamma_fn(5.0) - 24.0).abs() < 1e-11);
        assert!((gamma_fn(0.1) - 9.513_507_698_668_732).abs() < 1e-12);
    }

    #[test]
    fn crossing_probability_limits() {
        assert_eq!(crossing_probability(1.0, 0.5, 1.0, 1.0, 0.1), 1.0);
        assert_eq!(crossing_probability(0.0, -2.0, 1.0, 1.0, 0.1), 1.0);
        assert!(crossing_probability(0.0, 0.0, 1.0, 1.0, 1e-3) < 1e-300);
        let p = crossing_probability(0.3, 0.2, 1.0, 1.0, 0.5);
        assert!((p - crossing_probability(-0.3, -0.2, 1.0, 1.0, 0.5)).abs() < 1e-15);
        assert!(p < crossing_probability(0.3, 0.2, 1.0, 1.0, 1.0));
        // Reflection at each barrier, combined as independent events.
        let up = (-2.0f64 * 0.7 * 0.8 / 0.5).exp();
        let down = (-2.0f64 * 1.3 * 1.2 / 0.5).exp();
        assert!((p - (up + down - up * down)).abs() < 1e-15);
    }

    #[test]
    fn proposal_weights_average_to_one() {
        let law = Terminal::new(1.0, 1.3, 2.0);
        let mut s = NoiseStream::new(5, 0);
        let w: Vec<f64> = (0..200_000).map(|_| law.draw(&mut s).1).collect();
        assert!(w.iter().all(|&x| x > 0.0 && x <= 2.0));
        let (m, se) = mean_se(&w);
        assert!((m - 1.0).abs() < 4.0 * se, "{m} ± {se}");
    }
}
