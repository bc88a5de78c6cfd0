//! Grid certification of `LV ≤ −M V^γ + b` for the global function.
//!
//! Margins are floating-point evidence on a finite grid, not a proof.

use crate::generator::{apply, OperatorKind};
use crate::geometry::{contains, Point, Region};
use crate::lyapunov::{
    outer_jet_in, BvpMethod, BvpSolution, EvalJet, GlobalLyapunov, LyapunovSpec, Zone,
};
use crate::sde::ModelParams;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

/// Points of `region` at log-spaced radial levels in `[r_lo, r_hi]`, crossed
/// with `n_transverse` points of the region's reference parameterization.
///
/// - `R1`, `R2sub2`: polar angles of the region's wedge at each radius.
/// - `R3`: `x` at the level, `y = b·√(2α/x)` for `b ∈ [−1, 1]`.
/// - `R2sub1`: `x` at the level, `xy² = αu` with `u ∈ [1, (x/α)³]` log-spaced.
pub fn build_grid(
    spec: &LyapunovSpec,
    region: &Region,
    r_lo: f64,
    r_hi: f64,
    n_radial: usize,
    n_transverse: usize,
) -> Result<Vec<Point>> {
    if r_lo < 2.0 * spec.rho * (1.0 - 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "grid must start at 2*rho = {}, got r_lo = {r_lo}",
            2.0 * spec.rho
        )));
    }
    if !(r_hi >= r_lo) || n_radial == 0 || n_transverse == 0 {
        return Err(Error::InvalidArgument(format!(
            "empty grid slice for {region:?}: [{r_lo}, {r_hi}] x {n_radial} x {n_transverse}"
        )));
    }
    let levels: Vec<f64> = (0..n_radial)
        .map(|i| {
            if n_radial == 1 {
                r_lo
            } else {
                r_lo * (r_hi / r_lo).powf(i as f64 / (n_radial - 1) as f64)
            }
        })
        .collect();
    let ts: Vec<f64> = (0..n_transverse)
        .map(|j| {
            if n_transverse == 1 {
                0.0
            } else {
                -1.0 + 2.0 * j as f64 / (n_transverse - 1) as f64
            }
        })
        .collect();
    let mut out = Vec::with_capacity(n_radial * n_transverse);
    match *region {
        Region::R1 { alpha } => {
            let half = (2.0 / alpha).atan();
            for &r in &levels {
                for &t in &ts {
                    let th = PI + t * half;
                    out.push(Point::new(r * th.cos(), r * th.sin()));
                }
            }
        }
        Region::R2sub2 { alpha } => {
            let a0 = (1.0 / alpha).atan();
            for &r in &levels {
                for &t in &ts {
                    let th = (a0 + t.abs() * (PI - 2.0 * a0)).copysign(if t < 0.0 { -1.0 } else { 1.0 });
                    out.push(Point::new(r * th.cos(), r * th.sin()));
                }
            }
        }
        Region::R3 { alpha } => {
            for &x in &levels {
                let w = (2.0 * alpha / x).sqrt();
                for &t in &ts {
                    let mut y = t * w;
                    // Pull rounding casualties on ∂B2 back inside.
                    while x * y * y > 2.0 * alpha {
                        y *= 1.0 - f64::EPSILON;
                    }
                    out.push(Point::new(x, y));
                }
            }
        }
        Region::R2sub1 { alpha } => {
            for &x in &levels {
                let umax = (x / alpha).powi(3);
                for &t in &ts {
                    let u = umax.powf(t.abs());
                    let y = (alpha * u / x).sqrt().min(x / alpha);
                    out.push(Point::new(x, if t < 0.0 { -y } else { y }));
                }
            }
        }
        _ => {
            return Err(Error::InvalidArgument(format!("no grid parameterization for {region:?}")))
        }
    }
    out.retain(|&z| contains(region, z));
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!("grid slice of {region:?} is empty")));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridOptions {
    pub n_radial: usize,
    pub n_transverse: usize,
    /// Outer radius as a multiple of `ρ`.
    pub outer_factor: f64,
    pub disk_radial: usize,
    pub disk_angular: usize,
    pub bisection_iters: usize,
    /// Reported `M` as a fraction of the largest feasible value.
    pub m_safety: f64,
    /// Re-run on a grid with doubled densities and compare.
    pub refinement_check: bool,
    pub refinement_tolerance: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            n_radial: 250,
            n_transverse: 101,
            outer_factor: 1e4,
            disk_radial: 200,
            disk_angular: 720,
            bisection_iters: 40,
            m_safety: 0.5,
            refinement_check: true,
            refinement_tolerance: 0.05,
        }
    }
}

impl GridOptions {
    /// Smaller grid without the refinement pass, used inside tuning loops.
    pub fn coarse() -> Self {
        GridOptions {
            n_radial: 60,
            n_transverse: 41,
            disk_radial: 60,
            disk_angular: 240,
            refinement_check: false,
            ..Self::default()
        }
    }

    fn doubled(&self) -> Self {
        GridOptions {
            n_radial: 2 * self.n_radial,
            n_transverse: 2 * self.n_transverse - 1,
            disk_radial: 2 * self.disk_radial,
            disk_angular: 2 * self.disk_angular,
            refinement_check: false,
            ..*self
        }
    }
}

const FAMILIES: [&str; 4] = ["R1", "R2sub2", "R2sub1", "R3"];

fn family_region(name: &str, alpha: f64) -> Region {
    match name {
        "R1" => Region::R1 { alpha },
        "R2sub2" => Region::R2sub2 { alpha },
        "R2sub1" => Region::R2sub1 { alpha },
        _ => Region::R3 { alpha },
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MarginSample {
    pub x: f64,
    pub y: f64,
    pub zone: Zone,
    pub lv: f64,
    pub v: f64,
    pub v_gamma: f64,
}

impl MarginSample {
    fn is_finite(&self) -> bool {
        self.lv.is_finite() && self.v_gamma.is_finite()
    }

    pub fn margin(&self, m: f64, b: f64) -> f64 {
        if self.is_finite() {
            -self.lv - m * self.v_gamma + b
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn normalized_margin(&self, m: f64, b: f64) -> f64 {
        if !self.is_finite() {
            return -1.0;
        }
        self.margin(m, b) / (self.lv.abs() + m * self.v_gamma + b)
    }

    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ZoneReport {
    pub zone: Zone,
    pub name: &'static str,
    pub points: usize,
    pub worst_margin: f64,
    /// Margin divided by `|LV| + M V^γ + b`.
    pub worst_normalized_margin: f64,
    pub argmin: Option<Point>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeamReport {
    pub samples_per_seam: usize,
    /// Largest relative disagreement between one-sided jets on any seam.
    pub max_jet_discrepancy: f64,
    pub worst_seam: String,
    /// Blend values outside `[min(va, vb), max(va, vb)]`.
    pub sandwich_violations: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridStability {
    pub points_fine: usize,
    pub m_critical_fine: f64,
    pub m_critical_change: f64,
    /// Largest relative change of a per-zone worst normalized margin.
    pub max_zone_change: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub spec: LyapunovSpec,
    pub gamma: f64,
    pub c0: f64,
    /// Upper anchor `m₁ = αδ/(2√(α²+4))` of the bisection.
    pub m_anchor: f64,
    /// Largest `M` for which every grid margin stays nonnegative.
    pub m_critical: f64,
    /// Certified rate, `m_safety × m_critical`.
    pub m: f64,
    pub b: f64,
    /// `sup |LV|` over the disk `|z| ≤ 2ρ`.
    pub disk_lv_sup: f64,
    pub disk_v_gamma_max: f64,
    pub radius_range: [f64; 2],
    pub grid_points: usize,
    pub zones: Vec<ZoneReport>,
    pub worst_margin: f64,
    pub worst_zone: Option<Zone>,
    pub argmin: Option<Point>,
    /// Geometric regions containing the arg-min.
    pub argmin_regions: Vec<String>,
    pub seams: SeamReport,
    pub bvp_method: BvpMethod,
    pub bvp_residual: f64,
    pub bvp_symmetry_defect: f64,
    pub grid_stability: Option<GridStability>,
    pub failures: Vec<String>,
    pub certified: bool,
}

fn sample(v: &GlobalLyapunov, params: &ModelParams, z: Point) -> Result<MarginSample> {
    let (zone, jet) = v.eval_zoned(z)?;
    let lv = apply(OperatorKind::FullL, params, &jet, z);
    Ok(MarginSample { x: z.x, y: z.y, zone, lv, v: jet.v, v_gamma: jet.v.powf(v.spec.gamma()) })
}

fn outer_points(spec: &LyapunovSpec, opts: &GridOptions) -> Result<Vec<Point>> {
    let r_lo = 2.0 * spec.rho;
    let r_hi = opts.outer_factor * spec.rho;
    let mut pts = Vec::new();
    for f in FAMILIES {
        pts.extend(build_grid(
            spec,
            &family_region(f, spec.alpha),
            r_lo,
            r_hi,
            opts.n_radial,
            opts.n_transverse,
        )?);
    }
    Ok(pts)
}

fn disk_points(spec: &LyapunovSpec, opts: &GridOptions) -> Vec<Point> {
    let rho = spec.rho;
    let mut pts = vec![Point::ORIGIN];
    for i in 0..opts.disk_radial {
        let r = rho * (1.0 + i as f64 / (opts.disk_radial - 1).max(1) as f64);
        for k in 0..opts.disk_angular {
            let th = 2.0 * PI * k as f64 / opts.disk_angular as f64;
            pts.push(Point::new(r * th.cos(), r * th.sin()));
        }
    }
    pts
}

struct Sweep {
    samples: Vec<MarginSample>,
    disk_lv_sup: f64,
    disk_v_gamma_max: f64,
    disk_finite: bool,
}

fn sweep(v: &GlobalLyapunov, opts: &GridOptions) -> Result<Sweep> {
    let params = ModelParams::from_spec(&v.spec);
    let outer = outer_points(&v.spec, opts)?;
    let samples = outer
        .par_iter()
        .map(|&z| sample(v, &params, z))
        .collect::<Result<Vec<_>>>()?;
    let disk = disk_points(&v.spec, opts)
        .par_iter()
        .map(|&z| sample(v, &params, z))
        .collect::<Result<Vec<_>>>()?;
    let disk_finite = disk.iter().all(|s| s.is_finite());
    let finite = disk.iter().filter(|s| s.is_finite());
    let disk_lv_sup = finite.clone().fold(0.0f64, |m, s| m.max(s.lv.abs()));
    let disk_v_gamma_max = finite.fold(0.0f64, |m, s| m.max(s.v_gamma));
    Ok(Sweep { samples, disk_lv_sup, disk_v_gamma_max, disk_finite })
}

fn feasible(sw: &Sweep, m: f64) -> bool {
    let b = sw.disk_lv_sup + m * sw.disk_v_gamma_max;
    sw.samples.iter().all(|s| s.margin(m, b) >= 0.0)
}

fn critical_m(sw: &Sweep, anchor: f64, iters: usize) -> f64 {
    if !sw.disk_finite || !feasible(sw, 0.0) {
        return 0.0;
    }
    if feasible(sw, anchor) {
        return anchor;
    }
    let (mut lo, mut hi) = (0.0, anchor);
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if feasible(sw, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn zone_reports(sw: &Sweep, m: f64, b: f64) -> Vec<ZoneReport> {
    Zone::OUTER
        .iter()
        .map(|&zone| {
            let mut rep = ZoneReport {
                zone,
                name: zone.name(),
                points: 0,
                worst_margin: f64::INFINITY,
                worst_normalized_margin: f64::INFINITY,
                argmin: None,
            };
            for s in sw.samples.iter().filter(|s| s.zone == zone) {
                rep.points += 1;
                let mg = s.margin(m, b);
                if mg < rep.worst_margin || rep.argmin.is_none() {
                    rep.worst_margin = mg;
                    rep.argmin = Some(s.point());
                }
                rep.worst_normalized_margin = rep.worst_normalized_margin.min(s.normalized_margin(m, b));
            }
            rep
        })
        .collect()
}

fn region_labels(alpha: f64, z: Point) -> Vec<String> {
    let mut out = Vec::new();
    for (name, r) in [
        ("R1", Region::R1 { alpha }),
        ("R2", Region::R2 { alpha, lambda: 1.0 }),
        ("R2sub1", Region::R2sub1 { alpha }),
        ("R2sub2", Region::R2sub2 { alpha }),
        ("R3", Region::R3 { alpha }),
    ] {
        if contains(&r, z) {
            out.push(name.to_string());
        }
    }
    if z.on_positive_axis() {
        out.push("positive x-axis".to_string());
    }
    out
}

/// Evaluated grid samples, for the margin CSV.
pub fn margin_samples(
    spec: &LyapunovSpec,
    g: &BvpSolution,
    opts: &GridOptions,
) -> Result<Vec<MarginSample>> {
    let v = GlobalLyapunov::new(*spec, g.clone())?;
    Ok(sweep(&v, opts)?.samples)
}

pub fn certify(spec: &LyapunovSpec, g: &BvpSolution, opts: &GridOptions) -> Result<VerificationReport> {
    spec.validate()?;
    let v = GlobalLyapunov::new(*spec, g.clone())?;
    let sw = sweep(&v, opts)?;
    let anchor = spec.m1();
    let m_critical = critical_m(&sw, anchor, opts.bisection_iters);
    let m = opts.m_safety * m_critical;
    let b = sw.disk_lv_sup + m * sw.disk_v_gamma_max;
    let zones = zone_reports(&sw, m, b);

    let worst = zones
        .iter()
        .filter(|z| z.points > 0)
        .min_by(|a, b| a.worst_margin.total_cmp(&b.worst_margin));
    let (worst_margin, worst_zone, argmin) = match worst {
        Some(z) => (z.worst_margin, Some(z.zone), z.argmin),
        None => (f64::NAN, None, None),
    };
    let argmin_regions = argmin.map(|p| region_labels(spec.alpha, p)).unwrap_or_default();

    let seams = check_seams(spec, g)?;
    let mut failures = Vec::new();
    if !(m_critical > 0.0) {
        failures.push("no positive rate M keeps every margin nonnegative".to_string());
    }
    if !sw.disk_finite {
        failures.push("V or LV is not finite somewhere on the disk |z| <= 2 rho".to_string());
    }
    if sw.samples.iter().any(|s| !s.is_finite()) {
        failures.push("V or LV is not finite at some outer grid point".to_string());
    }
    if !(worst_margin >= 0.0) {
        failures.push(format!("worst margin {worst_margin:e} is negative"));
    }
    if !seams.pass {
        failures.push(format!(
            "seam check failed: discrepancy {:e} on {}, {} sandwich violations",
            seams.max_jet_discrepancy, seams.worst_seam, seams.sandwich_violations
        ));
    }
    if g.method != BvpMethod::ClosedFormLimit && !(g.residual <= 1e-8) {
        failures.push(format!("BVP residual {:e} above 1e-8", g.residual));
    }

    let grid_stability = if opts.refinement_check && m_critical > 0.0 {
        let fine_opts = opts.doubled();
        let fine = sweep(&v, &fine_opts)?;
        let m_fine = critical_m(&fine, anchor, opts.bisection_iters);
        let b_fine = fine.disk_lv_sup + m * fine.disk_v_gamma_max;
        let fine_zones = zone_reports(&fine, m, b_fine);
        let rel = |a: f64, b: f64| {
            let s = a.abs().max(b.abs());
            if s == 0.0 {
                0.0
            } else {
                (a - b).abs() / s
            }
        };
        let m_change = rel(m_critical, m_fine);
        let max_zone_change = zones
            .iter()
            .zip(&fine_zones)
            .filter(|(a, b)| a.points > 0 && b.points > 0)
            .map(|(a, b)| rel(a.worst_normalized_margin, b.worst_normalized_margin))
            .fold(0.0f64, f64::max);
        let stable = m_change < opts.refinement_tolerance && max_zone_change < opts.refinement_tolerance;
        if !stable {
            failures.push(format!(
                "grid-sensitive: doubling changed M by {:.2}% and zone margins by {:.2}%",
                100.0 * m_change,
                100.0 * max_zone_change
            ));
        }
        Some(GridStability {
            points_fine: fine.samples.len(),
            m_critical_fine: m_fine,
            m_critical_change: m_change,
            max_zone_change,
            stable,
        })
    } else {
        None
    };

    Ok(VerificationReport {
        spec: *spec,
        gamma: spec.gamma(),
        c0: v.c0,
        m_anchor: anchor,
        m_critical,
        m,
        b,
        disk_lv_sup: sw.disk_lv_sup,
        disk_v_gamma_max: sw.disk_v_gamma_max,
        radius_range: [2.0 * spec.rho, opts.outer_factor * spec.rho],
        grid_points: sw.samples.len(),
        zones,
        worst_margin,
        worst_zone,
        argmin,
        argmin_regions,
        seams,
        bvp_method: g.method,
        bvp_residual: g.residual,
        bvp_symmetry_defect: g.symmetry_defect,
        grid_stability,
        certified: failures.is_empty(),
        failures,
    })
}

const SEAM_SAMPLES: usize = 100;
const SEAM_TOL: f64 = 1e-6;

/// Componentwise relative gap; each order `k` is measured against at least
/// `|V|/r^k`.
fn jet_discrepancy(a: &EvalJet, b: &EvalJet, r: f64) -> f64 {
    let v = a.v.abs().max(b.v.abs());
    let pairs = [
        (a.v, b.v, v),
        (a.dx, b.dx, v / r),
        (a.dy, b.dy, v / r),
        (a.dxx, b.dxx, v / (r * r)),
        (a.dyy, b.dyy, v / (r * r)),
        (a.dxy, b.dxy, v / (r * r)),
    ];
    pairs
        .iter()
        .map(|&(p, q, floor)| {
            let s = p.abs().max(q.abs()).max(floor);
            if s == 0.0 {
                0.0
            } else {
                (p - q).abs() / s
            }
        })
        .fold(0.0, f64::max)
}

/// Compare the formulas of adjacent zones on every seam and check that the
/// blends stay between the functions they blend.
pub fn check_seams(spec: &LyapunovSpec, g: &BvpSolution) -> Result<SeamReport> {
    let v = GlobalLyapunov::new(*spec, g.clone())?;
    let a = spec.alpha;
    let radii: Vec<f64> = (0..SEAM_SAMPLES)
        .map(|i| 2.0 * spec.rho * (5e3f64).powf(i as f64 / (SEAM_SAMPLES - 1) as f64))
        .collect();
    let mut worst = 0.0f64;
    let mut worst_seam = String::from("none");
    let mut record = |name: &str, d: f64| {
        if d > worst || !d.is_finite() {
            worst = if d.is_finite() { d } else { f64::INFINITY };
            worst_seam = name.to_string();
        }
    };
    let on_ray = |r: f64, slope: f64, sign: f64| {
        // Point of radius r on y = sign * slope * |x| with x < 0.
        let x = -r / (1.0 + slope * slope).sqrt();
        Point::new(x, sign * slope * x.abs())
    };
    let on_funnel = |x: f64, level: f64, sign: f64| Point::new(x, sign * (level / x).sqrt());
    for (k, &r) in radii.iter().enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let outer = |zone: Zone, z: Point| outer_jet_in(spec, &v.g, zone, z);
        let z = on_ray(r, 1.0 / a, sign);
        record("h1 = 1", jet_discrepancy(&outer(Zone::R1Core, z), &outer(Zone::Seam12, z), r));
        let z = on_ray(r, 2.0 / a, sign);
        record("h1 = 0", jet_discrepancy(&outer(Zone::R2Core, z), &outer(Zone::Seam12, z), r));
        let z = on_funnel(r, 2.0 * a, sign);
        record("h2 = 0", jet_discrepancy(&outer(Zone::R2Core, z), &outer(Zone::Seam23, z), z.norm()));
        let z = on_funnel(r, a, sign);
        record("h2 = 1", jet_discrepancy(&outer(Zone::R3Core, z), &outer(Zone::Seam23, z), z.norm()));
    }
    // Filler seams at |z| = ρ and |z| = 2ρ, sampled in angle.
    for k in 0..SEAM_SAMPLES {
        let th = 2.0 * PI * (k as f64 + 0.37) / SEAM_SAMPLES as f64;
        let (c, s) = (th.cos(), th.sin());
        let z_in = Point::new(spec.rho * c, spec.rho * s);
        let inside = EvalJet::constant(v.c0);
        record("|z| = rho", jet_discrepancy(&inside, &v.eval(z_in)?, spec.rho));
        let z_out = Point::new(2.0 * spec.rho * c, 2.0 * spec.rho * s);
        let (_, tilde) = v.outer(z_out)?;
        record("|z| = 2 rho", jet_discrepancy(&tilde, &v.eval(z_out)?, 2.0 * spec.rho));
    }
    let mut violations = 0;
    for (k, &r) in radii.iter().enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let t = 0.05 + 0.9 * (k as f64 + 0.5) / SEAM_SAMPLES as f64;
        let z = on_ray(r, (1.0 + t) / a, sign);
        let (va, vb) = (outer_jet_in(spec, &v.g, Zone::R2Core, z).v, crate::lyapunov::v1(spec, z)?.v);
        let vi = outer_jet_in(spec, &v.g, Zone::Seam12, z).v;
        if vi < va.min(vb) * (1.0 - 1e-14) || vi > va.max(vb) * (1.0 + 1e-14) {
            violations += 1;
        }
        let z = on_funnel(r, (1.0 + t) * a, sign);
        let (va, vb) = (
            outer_jet_in(spec, &v.g, Zone::R2Core, z).v,
            outer_jet_in(spec, &v.g, Zone::R3Core, z).v,
        );
        let vi = outer_jet_in(spec, &v.g, Zone::Seam23, z).v;
        if vi < va.min(vb) * (1.0 - 1e-14) || vi > va.max(vb) * (1.0 + 1e-14) {
            violations += 1;
        }
    }
    Ok(SeamReport {
        samples_per_seam: SEAM_SAMPLES,
        max_jet_discrepancy: worst,
        worst_seam,
        sandwich_violations: violations,
        pass: worst <= SEAM_TOL && violations == 0,
    })
}
