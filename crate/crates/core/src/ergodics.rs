//! Empirical probes of moment regularization, occupation measures, mixing and
//! minorization.

use crate::geometry::{drift, Point};
use crate::lyapunov::GlobalLyapunov;
use crate::rng::NoiseStream;
use crate::sde::{
    mean_se, run_ensemble, simulate_path_observed, IntegratorConfig, ModelParams, Starts,
};
use crate::verifier::VerificationReport;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `K_t = max{(2b/m)^{1/γ}, (m(γ−1)t/2)^{−1/(γ−1)}}`.
pub fn k_t(gamma: f64, m: f64, b: f64, t: f64) -> Result<f64> {
    if !(gamma > 1.0) {
        return Err(Error::InvalidArgument(format!("gamma = {gamma} must exceed 1")));
    }
    if !(m > 0.0) || !(b >= 0.0) {
        return Err(Error::InvalidArgument(format!("need m > 0 and b >= 0 (m = {m}, b = {b})")));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("K_t is defined for t > 0, got {t}")));
    }
    let floor = (2.0 * b / m).powf(1.0 / gamma);
    let transient = (m * (gamma - 1.0) * t / 2.0).powf(-1.0 / (gamma - 1.0));
    Ok(floor.max(transient))
}

/// `lim_{t→∞} K_t`.
pub fn k_infinity(gamma: f64, m: f64, b: f64) -> f64 {
    (2.0 * b / m).powf(1.0 / gamma)
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentCheck {
    pub start: Point,
    pub t: f64,
    pub n: usize,
    pub mean_v: f64,
    pub std_error: f64,
    pub k_t: f64,
    /// `K_t·(1 + 3·SE/mean + 0.1)`.
    pub bound: f64,
    pub failures: usize,
    pub pass: bool,
}

/// Monte-Carlo estimate of `E[V(Z_t)]` from `z0` against `K_t`.
pub fn moment_bound_check(
    v: &GlobalLyapunov,
    report: &VerificationReport,
    config: &IntegratorConfig,
    z0: Point,
    t: f64,
    n: usize,
) -> Result<MomentCheck> {
    if !report.certified {
        return Err(Error::InvalidArgument("moment bound needs a certified report".into()));
    }
    let kt = k_t(report.gamma, report.m, report.b, t)?;
    let params = ModelParams::from_spec(&v.spec);
    let ens = run_ensemble(&params, config, &Starts::Fixed(z0), &[t], n)?;
    let values = ens
        .terminal()
        .iter()
        .map(|z| v.value(*z))
        .collect::<Result<Vec<f64>>>()?;
    let (mean_v, std_error) = mean_se(&values);
    let rel = if mean_v > 0.0 { std_error / mean_v } else { 0.0 };
    let bound = kt * (1.0 + 3.0 * rel + 0.1);
    Ok(MomentCheck {
        start: z0,
        t,
        n,
        mean_v,
        std_error,
        k_t: kt,
        bound,
        failures: ens.failures,
        pass: ens.failures == 0 && mean_v <= bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Window {
    pub fn square(half: f64) -> Self {
        Window { x_min: -half, x_max: half, y_min: -half, y_max: half }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationHistogram {
    pub window: Window,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    /// Row-major in `x`: bin `(i, j)` at `i * ny + j`.
    pub counts: Vec<u64>,
    pub outside: u64,
    /// Samples with `x ≥ 0`, window or not.
    pub right_half: u64,
    pub burn_in: f64,
}

impl OccupationHistogram {
    pub fn new(window: Window, nx: usize, ny: usize, burn_in: f64) -> Self {
        OccupationHistogram {
            window,
            nx,
            ny,
            dx: (window.x_max - window.x_min) / nx as f64,
            dy: (window.y_max - window.y_min) / ny as f64,
            counts: vec![0; nx * ny],
            outside: 0,
            right_half: 0,
            burn_in,
        }
    }

    pub fn bin_of(&self, z: Point) -> Option<usize> {
        let w = &self.window;
        if !(z.x >= w.x_min && z.x < w.x_max && z.y >= w.y_min && z.y < w.y_max) {
            return None;
        }
        let i = (((z.x - w.x_min) / self.dx) as usize).min(self.nx - 1);
        let j = (((z.y - w.y_min) / self.dy) as usize).min(self.ny - 1);
        Some(i * self.ny + j)
    }

    pub fn add(&mut self, z: Point) {
        match self.bin_of(z) {
            Some(k) => self.counts[k] += 1,
            None => self.outside += 1,
        }
        if z.x >= 0.0 {
            self.right_half += 1;
        }
    }

    pub fn merge(&mut self, other: &OccupationHistogram) {
        debug_assert_eq!(self.counts.len(), other.counts.len());
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.outside += other.outside;
        self.right_half += other.right_half;
    }

    pub fn inside(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.inside() + self.outside
    }

    /// `(in-window mass, out-of-window mass)`.
    pub fn masses(&self) -> (f64, f64) {
        let t = self.total() as f64;
        (self.inside() as f64 / t, self.outside as f64 / t)
    }

    pub fn right_half_mass(&self) -> f64 {
        self.right_half as f64 / self.total() as f64
    }

    pub fn bin_center(&self, k: usize) -> Point {
        let (i, j) = (k / self.ny, k % self.ny);
        Point::new(
            self.window.x_min + (i as f64 + 0.5) * self.dx,
            self.window.y_min + (j as f64 + 0.5) * self.dy,
        )
    }

    /// Histogram with each `factor × factor` block of bins merged.
    pub fn coarsen(&self, factor: usize) -> Result<OccupationHistogram> {
        if factor == 0 || self.nx % factor != 0 || self.ny % factor != 0 {
            return Err(Error::InvalidArgument(format!("cannot coarsen {}x{} by {factor}", self.nx, self.ny)));
        }
        let mut out = OccupationHistogram::new(self.window, self.nx / factor, self.ny / factor, self.burn_in);
        for (k, c) in self.counts.iter().enumerate() {
            let (i, j) = (k / self.ny / factor, k % self.ny / factor);
            out.counts[i * out.ny + j] += c;
        }
        out.outside = self.outside;
        out.right_half = self.right_half;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramOptions {
    pub window: Window,
    pub nx: usize,
    pub ny: usize,
    pub t_end: f64,
    pub burn_in: f64,
    pub n_paths: usize,
    /// Record every this many base steps.
    pub sample_every: usize,
}

impl Default for HistogramOptions {
    fn default() -> Self {
        HistogramOptions {
            window: Window::square(3.0),
            nx: 60,
            ny: 60,
            t_end: 50.0,
            burn_in: 10.0,
            n_paths: 100,
            sample_every: 10,
        }
    }
}

/// Occupation measure of `n_paths` paths over `[burn_in, t_end]`. Setting
/// `n_paths = 1` gives the single long path mode.
pub fn invariant_histogram(
    params: &ModelParams,
    config: &IntegratorConfig,
    starts: &Starts,
    opts: &HistogramOptions,
) -> Result<OccupationHistogram> {
    if !(params.sigma_y > 0.0) {
        return Err(Error::InvalidArgument("occupation measures need sigma_y > 0".into()));
    }
    if !(opts.t_end > opts.burn_in && opts.burn_in >= 0.0) || opts.n_paths == 0 || opts.sample_every == 0 {
        return Err(Error::InvalidArgument("need t_end > burn_in >= 0 and positive counts".into()));
    }
    config.validate()?;
    let hists: Vec<Result<OccupationHistogram>> = (0..opts.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut h = OccupationHistogram::new(opts.window, opts.nx, opts.ny, opts.burn_in);
            let mut k = 0usize;
            let res = simulate_path_observed(params, config, starts.get(i), &[opts.t_end], i as u64, |t, z| {
                k += 1;
                if t > opts.burn_in && k % opts.sample_every == 0 {
                    h.add(z);
                }
            });
            if res.status.is_failure() {
                return Err(Error::NonFinite("occupation path failed"));
            }
            Ok(h)
        })
        .collect();
    let mut total = OccupationHistogram::new(opts.window, opts.nx, opts.ny, opts.burn_in);
    for h in hists {
        total.merge(&h?);
    }
    Ok(total)
}

/// Median over `n` paths of the first time `|z| ≤ 1`; the default burn-in is
/// ten times this value.
pub fn median_return_time(
    params: &ModelParams,
    config: &IntegratorConfig,
    starts: &Starts,
    n: usize,
    t_cap: f64,
) -> f64 {
    let mut times: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let z0 = starts.get(i);
            if z0.norm() <= 1.0 {
                return 0.0;
            }
            let mut hit = f64::INFINITY;
            simulate_path_observed(params, config, z0, &[t_cap], i as u64, |t, z| {
                if hit.is_infinite() && z.norm() <= 1.0 {
                    hit = t;
                }
            });
            hit
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[n / 2]
}

#[derive(Debug, Clone, Serialize)]
pub struct AbsorptionReport {
    pub paths: usize,
    /// Paths that returned to `x > tol` after reaching `x < −tol`.
    pub violations: usize,
    /// Paths that entered the left half-plane at all.
    pub crossed: usize,
    /// Largest tolerance `h0 · |f(z)|` used.
    pub max_tolerance: f64,
}

/// Pathwise check that, without `x`-noise, the left half-plane is absorbing.
pub fn absorption_check(
    params: &ModelParams,
    config: &IntegratorConfig,
    starts: &Starts,
    t_end: f64,
    n: usize,
) -> Result<AbsorptionReport> {
    if params.sigma_x != 0.0 {
        return Err(Error::InvalidArgument("absorption holds only for sigma_x = 0".into()));
    }
    let rows: Vec<(bool, bool, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut left = false;
            let mut violated = false;
            let mut prev = starts.get(i);
            let mut tol_max = 0.0f64;
            simulate_path_observed(params, config, prev, &[t_end], i as u64, |_, z| {
                let tol = config.h0 * drift(prev).norm();
                tol_max = tol_max.max(tol);
                if left && z.x > tol {
                    violated = true;
                }
                if z.x < -tol {
                    left = true;
                }
                prev = z;
            });
            (left, violated, tol_max)
        })
        .collect();
    Ok(AbsorptionReport {
        paths: n,
        violations: rows.iter().filter(|r| r.1).count(),
        crossed: rows.iter().filter(|r| r.0).count(),
        max_tolerance: rows.iter().map(|r| r.2).fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvOptions {
    pub window: Window,
    pub nx: usize,
    pub ny: usize,
    pub n_bootstrap: usize,
    /// Bins with fewer expected samples than this in both ensembles are
    /// flagged as undersampled.
    pub min_bin_count: f64,
    pub seed: u64,
}

impl Default for TvOptions {
    fn default() -> Self {
        TvOptions {
            window: Window::square(6.0),
            nx: 200,
            ny: 200,
            n_bootstrap: 100,
            min_bin_count: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TvPoint {
    pub t: f64,
    pub tv: f64,
    pub bootstrap_se: f64,
    /// `Σ |p − q|(1 + β V)/2` when a weight is supplied.
    pub weighted: Option<f64>,
    pub undersampled_mass: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TvSeries {
    pub points: Vec<TvPoint>,
    /// Least-squares slope of `ln tv` against `t`.
    pub log_slope: f64,
    pub nonincreasing_within_2se: bool,
}

fn bin_indices(zs: &[Point], h: &OccupationHistogram) -> Vec<usize> {
    let out = h.counts.len();
    zs.iter().map(|z| h.bin_of(*z).unwrap_or(out)).collect()
}

/// Half `L1` distance between two binned samples; the last slot holds
/// everything outside the window.
fn half_l1(a: &[u32], na: f64, b: &[u32], nb: f64, weight: Option<&[f64]>) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        let d = (a[k] as f64 / na - b[k] as f64 / nb).abs();
        s += d * weight.map_or(1.0, |w| w[k]);
    }
    0.5 * s
}

fn counts(idx: &[usize], slots: usize) -> Vec<u32> {
    let mut c = vec![0u32; slots];
    for &k in idx {
        c[k] += 1;
    }
    c
}

/// Histogram-TV proxy between ensembles started from `a` and `b` at each
/// checkpoint, with bootstrap standard errors. `weight` maps a bin center
/// to `V`; with `beta` it adds the weighted proxy.
pub fn tv_decay(
    params: &ModelParams,
    config_a: &IntegratorConfig,
    a: &Starts,
    config_b: &IntegratorConfig,
    b: &Starts,
    checkpoints: &[f64],
    n: usize,
    opts: &TvOptions,
    weight: Option<(&dyn Fn(Point) -> f64, f64)>,
) -> Result<TvSeries> {
    if !(params.sigma_y > 0.0) {
        return Err(Error::InvalidArgument("mixing needs sigma_y > 0".into()));
    }
    let ea = run_ensemble(params, config_a, a, checkpoints, n)?;
    let eb = run_ensemble(params, config_b, b, checkpoints, n)?;
    if ea.failures + eb.failures > 0 {
        return Err(Error::NonFinite("ensemble path failed"));
    }
    let grid = OccupationHistogram::new(opts.window, opts.nx, opts.ny, 0.0);
    let slots = grid.counts.len() + 1;
    let weights: Option<Vec<f64>> = weight.map(|(f, beta)| {
        let mut w: Vec<f64> = (0..grid.counts.len()).map(|k| 1.0 + beta * f(grid.bin_center(k))).collect();
        // The out-of-window slot gets the largest in-window weight.
        w.push(w.iter().cloned().fold(1.0, f64::max));
        w
    });
    let nf = n as f64;
    let mut points = Vec::with_capacity(checkpoints.len());
    for (c, &t) in checkpoints.iter().enumerate() {
        let ia = bin_indices(&ea.states[c], &grid);
        let ib = bin_indices(&eb.states[c], &grid);
        let (ca, cb) = (counts(&ia, slots), counts(&ib, slots));
        let tv = half_l1(&ca, nf, &cb, nf, None);
        let weighted = weights.as_ref().map(|w| half_l1(&ca, nf, &cb, nf, Some(w)));
        let under: f64 = (0..slots)
            .filter(|&k| (ca[k] as f64) < opts.min_bin_count && (cb[k] as f64) < opts.min_bin_count)
            .map(|k| (ca[k] + cb[k]) as f64 / (2.0 * nf))
            .sum();
        let boots: Vec<f64> = (0..opts.n_bootstrap)
            .into_par_iter()
            .map(|r| {
                let mut s = NoiseStream::new(opts.seed, (c * opts.n_bootstrap + r) as u64);
                let mut draw = |idx: &[usize]| {
                    let pick: Vec<usize> = (0..n).map(|_| idx[((s.uniform() * nf) as usize).min(n - 1)]).collect();
                    counts(&pick, slots)
                };
                let (ra, rb) = (draw(&ia), draw(&ib));
                half_l1(&ra, nf, &rb, nf, None)
            })
            .collect();
        let se = if boots.len() > 1 {
            let m = boots.iter().sum::<f64>() / boots.len() as f64;
            (boots.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (boots.len() - 1) as f64).sqrt()
        } else {
            f64::NAN
        };
        points.push(TvPoint { t, tv, bootstrap_se: se, weighted, undersampled_mass: under });
    }
    let nonincreasing = points
        .windows(2)
        .all(|w| w[1].tv <= w[0].tv + 2.0 * (w[0].bootstrap_se.powi(2) + w[1].bootstrap_se.powi(2)).sqrt());
    Ok(TvSeries { log_slope: log_slope(&points), points, nonincreasing_within_2se: nonincreasing })
}

fn log_slope(points: &[TvPoint]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.tv > 0.0).map(|p| (p.t, p.tv.ln())).collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let var: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    cov / var
}

/// Wilson score interval at 95%.
pub fn wilson_interval(hits: usize, n: usize) -> (f64, f64) {
    let z = 1.959_963_984_540_054;
    let nf = n as f64;
    let p = hits as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let center = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if hits == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if hits == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinorizationOptions {
    pub ball_radius: f64,
    pub target: Point,
    pub neighborhood: f64,
    pub horizon: f64,
    pub n_per_start: usize,
    /// Starts form a `grid × grid` lattice on the square inscribed in the ball.
    pub grid: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StartRow {
    pub start: Point,
    pub hits: usize,
    pub n: usize,
    pub fraction: f64,
    pub ci95: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct MinorizationReport {
    pub options: MinorizationOptions,
    pub rows: Vec<StartRow>,
    pub inf_fraction: f64,
    pub inf_ci95: (f64, f64),
    pub zero_hit_starts: Vec<Point>,
}

pub fn minorization_starts(radius: f64, grid: usize) -> Vec<Point> {
    let half = radius / 2f64.sqrt();
    let step = if grid > 1 { 2.0 * half / (grid - 1) as f64 } else { 0.0 };
    let mut out = Vec::with_capacity(grid * grid);
    for i in 0..grid {
        for j in 0..grid {
            let c = if grid > 1 { -half } else { 0.0 };
            out.push(Point::new(c + i as f64 * step, c + j as f64 * step));
        }
    }
    out
}

/// Fraction of paths within `neighborhood` of `target` at `horizon`, for each
/// start on a lattice covering the ball.
pub fn minorization_probe(
    params: &ModelParams,
    config: &IntegratorConfig,
    opts: &MinorizationOptions,
) -> Result<MinorizationReport> {
    minorization_probe_from(params, config, opts, &minorization_starts(opts.ball_radius, opts.grid))
}

pub fn minorization_probe_from(
    params: &ModelParams,
    config: &IntegratorConfig,
    opts: &MinorizationOptions,
    starts: &[Point],
) -> Result<MinorizationReport> {
    if !(params.sigma_y > 0.0) {
        return Err(Error::InvalidArgument("minorization needs sigma_y > 0".into()));
    }
    if opts.n_per_start == 0 || !(opts.horizon > 0.0) || starts.is_empty() {
        return Err(Error::InvalidArgument("need a positive horizon, paths and starts".into()));
    }
    config.validate()?;
    let n = opts.n_per_start;
    let rows: Vec<StartRow> = starts
        .par_iter()
        .enumerate()
        .map(|(s, &z0)| {
            let hits = (0..n)
                .filter(|&i| {
                    let r = crate::sde::simulate_path(params, config, z0, &[opts.horizon], (s * n + i) as u64);
                    !r.status.is_failure() && r.states[0].dist(opts.target) <= opts.neighborhood
                })
                .count();
            StartRow { start: z0, hits, n, fraction: hits as f64 / n as f64, ci95: wilson_interval(hits, n) }
        })
        .collect();
    let worst = rows
        .iter()
        .min_by(|a, b| a.fraction.total_cmp(&b.fraction))
        .expect("nonempty");
    Ok(MinorizationReport {
        options: *opts,
        inf_fraction: worst.fraction,
        inf_ci95: worst.ci95,
        zero_hit_starts: rows.iter().filter(|r| r.hits == 0).map(|r| r.start).collect(),
        rows,
    })
}

/// Checks `φ(t) ≤ ψ(t) + tol` where `ψ' = f(ψ)`, `ψ(0) = φ(0)`, at the
/// supplied samples `(t, φ(t))`, the first of which must be at `t = 0`.
/// `f` is probed for monotonicity on the range covered by `φ` and `ψ`.
pub fn comparison_check<F>(f: F, phi: &[(f64, f64)], psi0: f64, tol: f64) -> Result<bool>
where
    F: Fn(f64) -> f64,
{
    if phi.is_empty() || phi[0].0 != 0.0 {
        return Err(Error::InvalidArgument("samples must start at t = 0".into()));
    }
    if (phi[0].1 - psi0).abs() > tol {
        return Err(Error::InvalidArgument(format!(
            "phi(0) = {} differs from psi(0) = {psi0}",
            phi[0].1
        )));
    }
    if phi.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidArgument("sample times must increase".into()));
    }
    const SUB: usize = 200;
    let rk4 = |u: f64, h: f64| {
        let k1 = f(u);
        let k2 = f(u + 0.5 * h * k1);
        let k3 = f(u + 0.5 * h * k2);
        let k4 = f(u + h * k3);
        u + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    let mut psi = vec![psi0];
    let mut u = psi0;
    for w in phi.windows(2) {
        let h = (w[1].0 - w[0].0) / SUB as f64;
        for _ in 0..SUB {
            u = rk4(u, h);
        }
        psi.push(u);
    }
    let lo = phi.iter().map(|p| p.1).chain(psi.iter().cloned()).fold(f64::INFINITY, f64::min);
    let hi = phi.iter().map(|p| p.1).chain(psi.iter().cloned()).fold(f64::NEG_INFINITY, f64::max);
    const PROBES: usize = 256;
    let mut prev = f(lo);
    for k in 1..=PROBES {
        let cur = f(lo + (hi - lo) * k as f64 / PROBES as f64);
        if cur > prev + 1e-12 * prev.abs().max(1.0) {
            return Err(Error::InvalidArgument("f is not nonincreasing on the probed range".into()));
        }
        prev = cur;
    }
    Ok(phi.iter().zip(&psi).all(|(p, s)| p.1 <= s + tol))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_t_examples() {
        assert!((k_t(1.5, 2.0, 1.0, 1.0).unwrap() - 4.0).abs() < 1e-12);
        assert!((k_t(1.5, 2.0, 1.0, 1e12).unwrap() - 1.0).abs() < 1e-12);
        assert!(k_t(1.5, 2.0, 1.0, 2.0).unwrap() <= k_t(1.5, 2.0, 1.0, 1.0).unwrap());
        assert!(k_t(1.0, 2.0, 1.0, 1.0).is_err());
        assert!(k_t(1.5, 2.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn comparison_examples() {
        let ts: Vec<f64> = (0..20).map(|k| k as f64 * 0.1).collect();
        let psi: Vec<(f64, f64)> = ts.iter().map(|&t| (t, (-t).exp())).collect();
        assert!(comparison_check(|u| -u, &psi, 1.0, 1e-9).unwrap());
        let phi: Vec<(f64, f64)> = ts.iter().map(|&t| (t, (-2.0 * t).exp())).collect();
        assert!(comparison_check(|u| -u, &phi, 1.0, 1e-9).unwrap());
        let bad: Vec<(f64, f64)> = ts.iter().map(|&t| (t, 2.0 * (-t).exp())).collect();
        assert!(comparison_check(|u| -u, &bad, 1.0, 1e-9).is_err());
        assert!(comparison_check(|u| u, &phi, 1.0, 1e-9).is_err());
    }

    #[test]
    fn histogram_mass_is_conserved() {
        let mut h = OccupationHistogram::new(Window::square(1.0), 4, 4, 0.0);
        for z in [Point::new(0.1, 0.2), Point::new(5.0, 0.0), Point::new(-0.9, -0.99), Point::new(1.0, 0.0)] {
            h.add(z);
        }
        let (i, o) = h.masses();
        assert_eq!(i + o, 1.0);
        assert_eq!(h.outside, 2);
        assert_eq!(h.right_half, 3);
        let c = h.coarsen(2).unwrap();
        assert_eq!(c.inside(), h.inside());
    }

    #[test]
    fn wilson_behaves() {
        let (lo, hi) = wilson_interval(0, 100);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_interval(50, 100);
        assert!(lo < 0.5 && hi > 0.5);
    }

    #[test]
    fn lattice_stays_in_ball() {
        let s = minorization_starts(5.0, 5);
        assert_eq!(s.len(), 25);
        assert!(s.iter().all(|p| p.norm() <= 5.0 + 1e-12));
    }
}
