//! Explicit controls steering the deterministic system into the left
//! half-plane, and the Jacobi flow / Gram matrix along the controlled path.

use crate::geometry::{orbit_circle, Point};
use crate::{Error, Result};
use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

/// `sgn⁺(v)`: the sign of `v`, with `sgn⁺(0) = 1`.
pub fn sgn_plus(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ControlLaw {
    Constant(f64),
    Zero,
    /// `U = sign·M − 2XY`, so that `Ẏ = sign·M`.
    BigMPush { m: f64, sign: f64 },
    /// `U = −2XY − 1`, so that `Ẏ = −1`.
    FeedbackBackout,
}

impl ControlLaw {
    #[inline]
    pub fn u(&self, z: Point) -> f64 {
        match *self {
            ControlLaw::Constant(u) => u,
            ControlLaw::Zero => 0.0,
            ControlLaw::BigMPush { m, sign } => sign * m - 2.0 * z.x * z.y,
            ControlLaw::FeedbackBackout => -2.0 * z.x * z.y - 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Trigger {
    Fixed,
    /// First entry to `{|z| ≤ radius, x ≤ 0}` at or after `t = 1`, plus slack.
    BallEntry { radius: f64, slack: f64 },
    /// Outward crossing of the orbit circle through the target.
    CircleCrossing { center: Point, radius: f64 },
    TargetArrival { target: Point },
    Backout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub law: ControlLaw,
    pub start: f64,
    pub duration: f64,
    pub trigger: Trigger,
}

impl Phase {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    pub z0: Point,
    pub target: Point,
    pub phases: Vec<Phase>,
    pub total_time: f64,
    /// Shortest horizon reachable by this construction from `z0`.
    pub t_star: f64,
    /// `1 + 6/|x*|`, the a priori bound on the ball entry time.
    pub t1_star_bound: f64,
    pub t1: f64,
    pub slack: f64,
    pub m_push: f64,
    /// `|X|` at the end of the push phase, to compare with `2|x*|/3`.
    pub x_after_push: f64,
    /// Intermediate target when `y* = 0`.
    pub backout_from: Option<Point>,
    pub fine_step: f64,
}

impl ControlSchedule {
    pub fn phase_at(&self, t: f64) -> usize {
        self.phases
            .iter()
            .position(|p| t < p.end())
            .unwrap_or(self.phases.len() - 1)
    }
}

/// Position, Jacobi flow `J_{0,t}`, and `∫₀ᵗ 4X`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobiState {
    pub z: Point,
    pub j: Matrix2<f64>,
    pub log_det: f64,
}

impl JacobiState {
    pub fn start(z: Point) -> Self {
        JacobiState { z, j: Matrix2::identity(), log_det: 0.0 }
    }

    fn axpy(&self, h: f64, d: &JacobiState) -> JacobiState {
        JacobiState {
            z: Point::new(self.z.x + h * d.z.x, self.z.y + h * d.z.y),
            j: self.j + d.j * h,
            log_det: self.log_det + h * d.log_det,
        }
    }
}

/// `A_t = [[2X, −2Y], [2Y, 2X]]`.
pub fn twist(z: Point) -> Matrix2<f64> {
    Matrix2::new(2.0 * z.x, -2.0 * z.y, 2.0 * z.y, 2.0 * z.x)
}

#[inline]
fn velocity(law: &ControlLaw, z: Point) -> Point {
    Point::new(z.x * z.x - z.y * z.y, 2.0 * z.x * z.y + law.u(z))
}

fn field(law: &ControlLaw, s: &JacobiState) -> JacobiState {
    JacobiState { z: velocity(law, s.z), j: twist(s.z) * s.j, log_det: 4.0 * s.z.x }
}

fn rk4(law: &ControlLaw, s: &JacobiState, h: f64) -> JacobiState {
    let k1 = field(law, s);
    let k2 = field(law, &s.axpy(0.5 * h, &k1));
    let k3 = field(law, &s.axpy(0.5 * h, &k2));
    let k4 = field(law, &s.axpy(h, &k3));
    JacobiState {
        z: Point::new(
            s.z.x + h / 6.0 * (k1.z.x + 2.0 * k2.z.x + 2.0 * k3.z.x + k4.z.x),
            s.z.y + h / 6.0 * (k1.z.y + 2.0 * k2.z.y + 2.0 * k3.z.y + k4.z.y),
        ),
        j: s.j + (k1.j + k2.j * 2.0 + k3.j * 2.0 + k4.j) * (h / 6.0),
        log_det: s.log_det + h / 6.0 * (k1.log_det + 2.0 * k2.log_det + 2.0 * k3.log_det + k4.log_det),
    }
}

/// Step length: `fine` scaled down by the local speed and by `|A_t|`.
#[inline]
fn step_size(law: &ControlLaw, z: Point, fine: f64) -> f64 {
    let v = velocity(law, z);
    fine / 1f64.max(v.norm()).max(2.0 * z.norm())
}

/// Integrate `law` over a span of length `dt` (negative for backward time).
pub fn integrate_law(law: &ControlLaw, s: JacobiState, dt: f64, fine: f64) -> JacobiState {
    integrate_law_observed(law, s, 0.0, dt, fine, |_, _| {})
}

fn integrate_law_observed<F: FnMut(f64, &JacobiState)>(
    law: &ControlLaw,
    mut s: JacobiState,
    t0: f64,
    dt: f64,
    fine: f64,
    mut observe: F,
) -> JacobiState {
    let dir = dt.signum();
    let mut done = 0.0;
    while done < dt.abs() {
        let h = step_size(law, s.z, fine).min(dt.abs() - done);
        s = rk4(law, &s, dir * h);
        done = if dt.abs() - done - h <= 1e-15 * dt.abs() { dt.abs() } else { done + h };
        observe(t0 + dir * done, &s);
    }
    s
}

/// Integrate until `event(z) ≤ 0`, locating the crossing by bisection to
/// `1e−10` in time. Returns the elapsed time and the state there.
pub fn integrate_until<E: Fn(Point) -> f64>(
    law: &ControlLaw,
    mut s: JacobiState,
    fine: f64,
    horizon: f64,
    event: E,
    name: &'static str,
) -> Result<(f64, JacobiState)> {
    if event(s.z) <= 0.0 {
        return Ok((0.0, s));
    }
    let mut t = 0.0;
    while t < horizon {
        let h = step_size(law, s.z, fine);
        let next = rk4(law, &s, h);
        if !next.z.is_finite() {
            return Err(Error::EventNotFound(name));
        }
        if event(next.z) <= 0.0 {
            let (mut lo, mut hi) = (0.0, h);
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                if event(rk4(law, &s, mid).z) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok((t + hi, rk4(law, &s, hi)));
        }
        s = next;
        t += h;
    }
    Err(Error::EventNotFound(name))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    /// Defaults to `10³·max(1, |x*|)`.
    pub m_push: Option<f64>,
    pub fine_step: f64,
    /// Give up on an event after this much time.
    pub event_horizon: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions { m_push: None, fine_step: 1e-3, event_horizon: 1e3 }
    }
}

struct Tail {
    d3: f64,
    d4: f64,
    x_after_push: f64,
    landing: f64,
}

struct Builder {
    z_aim: Point,
    circle_center: Point,
    circle_radius: f64,
    m_push: f64,
    sign: f64,
    fine: f64,
    horizon: f64,
}

impl Builder {
    fn push_law(&self) -> ControlLaw {
        ControlLaw::BigMPush { m: self.m_push, sign: self.sign }
    }

    /// Phases 3 and 4 from the state at the end of the slack.
    fn tail(&self, zs: Point) -> Result<Tail> {
        let (c, r, sign) = (self.circle_center, self.circle_radius, self.sign);
        let exit = |z: Point| {
            if z.y * sign > r {
                -(z.x * z.x + (z.y - c.y).powi(2) - r * r)
            } else {
                1.0
            }
        };
        let (d3, s3) =
            integrate_until(&self.push_law(), JacobiState::start(zs), self.fine, self.horizon, exit, "circle crossing")?;
        // Along a zero-control orbit 1/z moves with unit speed along −1.
        let w = |z: Point| z.x / z.norm_sq();
        let mut d4 = (w(s3.z) - w(self.z_aim)).max(0.0);
        let land = |d: f64| integrate_law(&ControlLaw::Zero, JacobiState::start(s3.z), d, self.fine).z;
        for _ in 0..20 {
            let zf = land(d4);
            let e = Point::new(zf.x - self.z_aim.x, zf.y - self.z_aim.y);
            let v = velocity(&ControlLaw::Zero, zf);
            let step = (e.x * v.x + e.y * v.y) / v.norm_sq();
            d4 = (d4 - step).max(0.0);
            if step.abs() < 1e-13 * (1.0 + d4) {
                break;
            }
        }
        let zf = land(d4);
        Ok(Tail { d3, d4, x_after_push: s3.z.x.abs(), landing: zf.dist(self.z_aim) })
    }
}

/// Start `z1` and duration `τ` of the back-out onto `(x*, 0)`. The unit
/// duration is halved until the backward flow stays bounded and in `x < 0`:
/// with `Ẏ = −1` the forward flow pulls `x` up to about `−1/τ`.
fn backout_preimage(z_star: Point, fine: f64) -> Result<(Point, f64)> {
    let cap = 1e3 * z_star.x.abs().max(1.0);
    let mut tau = 1.0;
    for _ in 0..40 {
        let law = ControlLaw::FeedbackBackout;
        let mut s = JacobiState::start(z_star);
        let mut done = 0.0;
        while done < tau && s.z.norm() <= cap && s.z.x < 0.0 {
            let h = step_size(&law, s.z, fine).min(tau - done);
            s = rk4(&law, &s, -h);
            done += h;
        }
        if done >= tau && s.z.norm() <= cap && s.z.x < 0.0 {
            return Ok((s.z, tau));
        }
        tau *= 0.5;
    }
    Err(Error::InvalidArgument(format!("no back-out onto {z_star}")))
}

/// Construct a four-phase control from `z0` to `z_star` (plus the back-out
/// phase when `y* = 0`). With `horizon = None` the shortest construction
/// time `T*` is used.
pub fn synthesize(
    z0: Point,
    z_star: Point,
    horizon: Option<f64>,
    opts: &SynthesisOptions,
) -> Result<ControlSchedule> {
    if !z0.is_finite() || !z_star.is_finite() {
        return Err(Error::NonFinite("control endpoints"));
    }
    if !(z_star.x < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target {z_star} is not in the open left half-plane; it is impossible to leave the left half-plane"
        )));
    }
    let fine = opts.fine_step;
    let (backout_from, backout_time) = if z_star.y == 0.0 {
        let (z1, tau) = backout_preimage(z_star, fine)?;
        (Some(z1), tau)
    } else {
        (None, 0.0)
    };
    let z_aim = backout_from.unwrap_or(z_star);
    let orbit = orbit_circle(z_aim).expect("target off the x-axis");
    let ball = z_star.x.abs() / 3.0;
    let mut m_push = opts.m_push.unwrap_or(1e3 * z_star.x.abs().max(1.0));

    let p1 = ControlLaw::Constant(sgn_plus(z0.y));
    let s1 = integrate_law(&p1, JacobiState::start(z0), 1.0, fine);
    let in_ball = |z: Point| (z.norm() - ball).max(z.x);
    let (d2, s2) = integrate_until(&ControlLaw::Zero, s1, fine, opts.event_horizon, in_ball, "ball entry")?;
    let t1 = 1.0 + d2;
    let zb = s2.z;

    let extra = backout_time;
    let (builder, tail0) = loop {
        let b = Builder {
            z_aim,
            circle_center: orbit.center,
            circle_radius: orbit.radius,
            m_push,
            sign: sgn_plus(z_aim.y),
            fine,
            horizon: opts.event_horizon,
        };
        let tail = b.tail(zb)?;
        if tail.x_after_push <= 2.0 * z_star.x.abs() / 3.0 || m_push > 1e9 {
            break (b, tail);
        }
        m_push *= 4.0;
    };
    let total = |s: f64, tail: &Tail| t1 + s + tail.d3 + tail.d4 + extra;
    let t_star = total(0.0, &tail0);
    let target_t = horizon.unwrap_or(t_star);
    if !(target_t >= t_star - 1e-12) {
        return Err(Error::HorizonTooShort { requested: target_t, minimal: t_star });
    }
    let tail_after = |s: f64| -> Result<(Point, Tail)> {
        let zs = integrate_law(&ControlLaw::Zero, JacobiState::start(zb), s, fine).z;
        Ok((zs, builder.tail(zs)?))
    };
    let (mut lo, mut hi) = (0.0, (target_t - t1).max(0.0));
    let mut best = (0.0, tail0);
    if target_t - t_star > 1e-9 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let (_, tail) = tail_after(mid)?;
            let tt = total(mid, &tail);
            let done = (tt - target_t).abs() <= 1e-9 || hi - lo < 1e-14;
            if tt > target_t {
                hi = mid;
            } else {
                lo = mid;
            }
            best = (mid, tail);
            if done {
                break;
            }
        }
    }
    let (slack, tail) = best;
    let mut phases = Vec::with_capacity(5);
    let mut t = 0.0;
    let mut push = |law, duration, trigger| {
        phases.push(Phase { law, start: t, duration, trigger });
        t += duration;
    };
    push(p1, 1.0, Trigger::Fixed);
    push(ControlLaw::Zero, t1 - 1.0 + slack, Trigger::BallEntry { radius: ball, slack });
    push(
        builder.push_law(),
        tail.d3,
        Trigger::CircleCrossing { center: orbit.center, radius: orbit.radius },
    );
    push(ControlLaw::Zero, tail.d4, Trigger::TargetArrival { target: z_aim });
    if backout_from.is_some() {
        push(ControlLaw::FeedbackBackout, backout_time, Trigger::Backout);
    }
    if !(tail.landing <= 1e-3) {
        return Err(Error::EventNotFound("target arrival"));
    }
    Ok(ControlSchedule {
        z0,
        target: z_star,
        total_time: t,
        phases,
        t_star,
        t1_star_bound: 1.0 + 6.0 / z_star.x.abs(),
        t1,
        slack,
        m_push,
        x_after_push: tail.x_after_push,
        backout_from,
        fine_step: fine,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ControlledPath {
    pub times: Vec<f64>,
    pub states: Vec<Point>,
    pub phase_index: Vec<usize>,
    /// End time of each phase.
    pub event_times: Vec<f64>,
    pub terminal: Point,
    /// `|terminal − target|`.
    pub landing_error: f64,
    /// Largest `x` reached after first entering `x < 0`.
    pub max_x_after_left: f64,
}

/// Integrate the schedule with RK4, recording every step.
pub fn integrate_controlled(schedule: &ControlSchedule, z0: Point, fine: f64) -> Result<ControlledPath> {
    if !(fine > 0.0) || schedule.phases.is_empty() {
        return Err(Error::InvalidArgument("need a positive step and a nonempty schedule".into()));
    }
    let mut times = vec![0.0];
    let mut states = vec![z0];
    let mut idx = vec![0];
    let mut s = JacobiState::start(z0);
    let mut left = z0.x < 0.0;
    let mut max_x_after_left = f64::NEG_INFINITY;
    let mut event_times = Vec::new();
    for (k, p) in schedule.phases.iter().enumerate() {
        s = integrate_law_observed(&p.law, s, p.start, p.duration, fine, |t, st| {
            times.push(t);
            states.push(st.z);
            idx.push(k);
            if left {
                max_x_after_left = max_x_after_left.max(st.z.x);
            }
            if st.z.x < 0.0 {
                left = true;
            }
        });
        if !s.z.is_finite() {
            return Err(Error::NonFinite("controlled path"));
        }
        event_times.push(p.end());
    }
    Ok(ControlledPath {
        terminal: s.z,
        landing_error: s.z.dist(schedule.target),
        times,
        states,
        phase_index: idx,
        event_times,
        max_x_after_left,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GramMatrix {
    pub m: [[f64; 2]; 2],
    pub eigenvalues: [f64; 2],
    pub smallest_eigenvalue: f64,
    pub nodes: usize,
}

fn symmetric_eigenvalues(a: f64, b: f64, c: f64) -> [f64; 2] {
    let mean = 0.5 * (a + c);
    let rad = (0.25 * (a - c).powi(2) + b * b).sqrt();
    [mean - rad, mean + rad]
}

/// Jacobi flow `J_{0,t}` at `nodes + 1` equally spaced times on `[0, T]`,
/// splitting steps at phase boundaries.
pub fn jacobi_samples(schedule: &ControlSchedule, z0: Point, nodes: usize, fine: f64) -> Vec<(f64, JacobiState)> {
    let t_end = schedule.total_time;
    let mut out = Vec::with_capacity(nodes + 1);
    let mut s = JacobiState::start(z0);
    out.push((0.0, s));
    let mut t = 0.0;
    for k in 1..=nodes {
        let t_next = t_end * k as f64 / nodes as f64;
        while t < t_next {
            let p = &schedule.phases[schedule.phase_at(t)];
            let seg_end = p.end().min(t_next).max(t);
            let dt = seg_end - t;
            if dt <= 0.0 {
                // Zero-length phase at t.
                let next = schedule.phase_at(t) + 1;
                if next >= schedule.phases.len() {
                    break;
                }
                t = schedule.phases[next].start.max(t);
                continue;
            }
            s = integrate_law(&p.law, s, dt, fine);
            t = seg_end;
        }
        t = t_next;
        out.push((t_next, s));
    }
    out
}

/// `M = ∫₀ᵀ v vᵀ ds` with `v = J_{s,T} e₂ = J_{0,T} J_{0,s}^{−1} e₂`, by
/// composite Simpson on `nodes` (even, at least 1000) intervals.
pub fn gram_matrix(schedule: &ControlSchedule, z0: Point, nodes: usize, fine: f64) -> Result<GramMatrix> {
    let n = nodes.max(1000);
    let n = n + n % 2;
    let samples = jacobi_samples(schedule, z0, n, fine);
    let jt = samples[n].1.j;
    let e2 = Vector2::new(0.0, 1.0);
    let h = schedule.total_time / n as f64;
    let mut acc = [0.0f64; 3];
    for (k, (_, st)) in samples.iter().enumerate() {
        let inv = st.j.try_inverse().ok_or(Error::NonFinite("singular Jacobi flow"))?;
        let v = jt * (inv * e2);
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc[0] += w * v.x * v.x;
        acc[1] += w * v.x * v.y;
        acc[2] += w * v.y * v.y;
    }
    let m = [[acc[0] * h / 3.0, acc[1] * h / 3.0], [acc[1] * h / 3.0, acc[2] * h / 3.0]];
    let eig = symmetric_eigenvalues(m[0][0], m[0][1], m[1][1]);
    Ok(GramMatrix { m, eigenvalues: eig, smallest_eigenvalue: eig[0], nodes: n })
}

/// Largest relative gap between `det J_{0,t}` and `exp(∫₀ᵗ 4X)` over the
/// sample times.
pub fn liouville_defect(schedule: &ControlSchedule, z0: Point, nodes: usize, fine: f64) -> f64 {
    jacobi_samples(schedule, z0, nodes, fine)
        .iter()
        .map(|(_, s)| (s.j.determinant() / s.log_det.exp() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// `⟨J_{t,t₀} e₂, e₁⟩` at `samples` times in `[t₀ − ε, t₀)`.
pub fn rotation_probe(
    schedule: &ControlSchedule,
    z0: Point,
    t0: f64,
    eps: f64,
    samples: usize,
    fine: f64,
) -> Vec<(f64, f64)> {
    let nodes = 4000;
    let js = jacobi_samples(schedule, z0, nodes, fine);
    let at = |t: f64| {
        let k = ((t / schedule.total_time) * nodes as f64).round() as usize;
        js[k.min(nodes)]
    };
    let (_, s0) = at(t0);
    (0..samples)
        .map(|i| {
            let t = t0 - eps * (1.0 - i as f64 / samples as f64);
            let (tk, st) = at(t);
            let j = s0.j * st.j.try_inverse().unwrap_or(Matrix2::zeros());
            (tk, j[(0, 1)])
        })
        .collect()
}
