//! Deterministic skeleton: closed-form flow of `ż = z²`, orbit circles,
//! scaling maps and region membership.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// A state `(x, y)` of the planar system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// True for points `(x, 0)` with `x > 0`.
    pub fn on_positive_axis(self) -> bool {
        self.y == 0.0 && self.x > 0.0
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Drift of the deterministic system, `(x² − y², 2xy)`.
#[inline]
pub fn drift(z: Point) -> Point {
    Point::new(z.x * z.x - z.y * z.y, 2.0 * z.x * z.y)
}

/// Result of following the deterministic flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Flow {
    State(Point),
    /// The solution left every compact set at time `time`.
    BlowUp { time: f64 },
}

impl Flow {
    pub fn state(self) -> Option<Point> {
        match self {
            Flow::State(z) => Some(z),
            Flow::BlowUp { .. } => None,
        }
    }
}

/// Exact solution `z₀ / (1 − z₀ t)` of `ż = z²` written in real coordinates.
pub fn det_flow(z0: Point, t: f64) -> Flow {
    debug_assert!(t >= 0.0);
    if z0.y == 0.0 && z0.x > 0.0 && t >= 1.0 / z0.x {
        return Flow::BlowUp { time: 1.0 / z0.x };
    }
    let r2 = z0.norm_sq();
    let a = 1.0 - z0.x * t;
    let b = z0.y * t;
    let den = a * a + b * b;
    Flow::State(Point::new((z0.x - r2 * t) / den, z0.y / den))
}

/// Orbit circle through `z0`: every orbit off the real axis is a circle
/// tangent to the real axis at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrbitCircle {
    pub center: Point,
    pub radius: f64,
}

pub fn orbit_circle(z0: Point) -> Option<OrbitCircle> {
    if z0.y == 0.0 {
        return None;
    }
    let r2 = z0.norm_sq();
    Some(OrbitCircle {
        center: Point::new(0.0, r2 / (2.0 * z0.y)),
        radius: r2 / (2.0 * z0.y.abs()),
    })
}

const RETURN_TIME_TOL: f64 = 1e-10;

/// First time at which the deterministic orbit from `z0` enters the closed
/// ball of radius `r`. Never larger than `2/r`.
pub fn return_time(z0: Point, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {r}")));
    }
    if z0.on_positive_axis() {
        return Err(Error::PositiveAxis(z0));
    }
    let inside = |t: f64| match det_flow(z0, t) {
        Flow::State(z) => z.norm() <= r,
        Flow::BlowUp { .. } => false,
    };
    if inside(0.0) {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, 2.0 / r);
    if !inside(hi) {
        // Only reachable through rounding when the orbit grazes the sphere.
        hi *= 1.0 + 1e-12;
    }
    while hi - lo > RETURN_TIME_TOL {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalingKind {
    S1,
    S2,
}

/// `S1: (x, y, λ) ↦ (ℓx, ℓ^{−1/2}y, ℓ³λ)`, `S2: (x, y, λ) ↦ (ℓx, ℓy, λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingMap {
    pub kind: ScalingKind,
    pub ell: f64,
}

impl ScalingMap {
    pub fn s1(ell: f64) -> Self {
        ScalingMap { kind: ScalingKind::S1, ell }
    }

    pub fn s2(ell: f64) -> Self {
        ScalingMap { kind: ScalingKind::S2, ell }
    }

    pub fn apply(self, z: Point, lambda: f64) -> (Point, f64) {
        scale(self, z, lambda)
    }
}

pub fn scale(map: ScalingMap, z: Point, lambda: f64) -> (Point, f64) {
    let l = map.ell;
    match map.kind {
        ScalingKind::S1 => (Point::new(l * z.x, z.y / l.sqrt()), l * l * l * lambda),
        ScalingKind::S2 => (Point::new(l * z.x, l * z.y), lambda),
    }
}

/// Relative tolerance used for membership of the one-dimensional curves
/// `∂B1` and `∂B2`.
pub const CURVE_TOL: f64 = 1e-9;

/// Symbolic regions of the plane. Serialized as `{"kind": ..., "params": {...}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params")]
pub enum Region {
    /// `{x ≥ x0, |x|^p |y| ≤ x0^p y0}`
    Pplus { p: f64, x0: f64, y0: f64 },
    /// `{−x ≥ x0, |x|^p |y| ≤ x0^p y0}`
    Pminus { p: f64, x0: f64, y0: f64 },
    /// `{(x² + λy²)/|y| ≥ (x0² + λy0²)/y0}`, the outside of two circles.
    O { x0: f64, y0: f64, lambda: f64 },
    /// Priming region `P⁻_{−1}(α/2, 1)`.
    R1 { alpha: f64 },
    /// Transport region.
    R2 { alpha: f64, lambda: f64 },
    /// Diffusive region `P⁺_{1/2}(2α, 1)`.
    R3 { alpha: f64 },
    /// Part of `R2(α, 1)` inside the cone `{x ≥ α, α|y| ≤ x}`.
    R2sub1 { alpha: f64 },
    /// Part of `R2(α, 1)` outside that cone.
    R2sub2 { alpha: f64 },
    /// `{x ≤ −α, |y| = |x|/α}`
    BoundaryB1 { alpha: f64 },
    /// `{x ≥ α, xy² = 2α}`
    BoundaryB2 { alpha: f64 },
}

impl Region {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Region::Pplus { p, x0, y0 } | Region::Pminus { p, x0, y0 } => {
                p.is_finite() && x0 > 0.0 && y0 > 0.0
            }
            Region::O { x0, y0, lambda } => x0 > 0.0 && y0 > 0.0 && lambda >= 0.0,
            Region::R2 { alpha, lambda } => alpha > 0.0 && lambda >= 0.0,
            Region::R1 { alpha }
            | Region::R3 { alpha }
            | Region::R2sub1 { alpha }
            | Region::R2sub2 { alpha }
            | Region::BoundaryB1 { alpha }
            | Region::BoundaryB2 { alpha } => alpha > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid region parameters {self:?}")))
        }
    }

    pub fn contains(&self, z: Point) -> bool {
        contains(self, z)
    }
}

fn p_bound(p: f64, x0: f64, y0: f64, ax: f64, ay: f64) -> bool {
    ax.powf(p) * ay <= x0.powf(p) * y0
}

fn in_r2(alpha: f64, lambda: f64, z: Point) -> bool {
    let a = alpha * lambda.sqrt();
    let (x, ay) = (z.x, z.y.abs());
    let off_funnel = x <= a || x * ay * ay >= a;
    let off_circles = x * x + lambda * ay * ay >= lambda * (alpha * alpha + 1.0) * ay;
    let off_wedge = x >= -a || a * ay >= -x;
    off_funnel && off_circles && off_wedge
}

fn in_cone(alpha: f64, z: Point) -> bool {
    z.x >= alpha && alpha * z.y.abs() <= z.x
}

/// Membership with all boundaries included.
pub fn contains(region: &Region, z: Point) -> bool {
    match *region {
        Region::Pplus { p, x0, y0 } => z.x >= x0 && p_bound(p, x0, y0, z.x.abs(), z.y.abs()),
        Region::Pminus { p, x0, y0 } => -z.x >= x0 && p_bound(p, x0, y0, z.x.abs(), z.y.abs()),
        Region::O { x0, y0, lambda } => {
            let k = (x0 * x0 + lambda * y0 * y0) / y0;
            z.x * z.x + lambda * z.y * z.y >= k * z.y.abs()
        }
        Region::R1 { alpha } => z.x <= -alpha / 2.0 && alpha * z.y.abs() <= -2.0 * z.x,
        Region::R2 { alpha, lambda } => in_r2(alpha, lambda, z),
        Region::R3 { alpha } => z.x >= 2.0 * alpha && z.x * z.y * z.y <= 2.0 * alpha,
        Region::R2sub1 { alpha } => in_r2(alpha, 1.0, z) && in_cone(alpha, z),
        Region::R2sub2 { alpha } => {
            in_r2(alpha, 1.0, z) && (z.x <= alpha || alpha * z.y.abs() >= z.x)
        }
        Region::BoundaryB1 { alpha } => {
            z.x <= -alpha && (alpha * z.y.abs() + z.x).abs() <= CURVE_TOL * z.x.abs()
        }
        Region::BoundaryB2 { alpha } => {
            z.x >= alpha && (z.x * z.y * z.y - 2.0 * alpha).abs() <= CURVE_TOL * 2.0 * alpha
        }
    }
}

/// `z = map(reference, λ_ref)` with `λ` landing on the region's own value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceDecomposition {
    pub map: ScalingMap,
    pub reference: Point,
    pub lambda: f64,
}

impl ReferenceDecomposition {
    pub fn ell(&self) -> f64 {
        self.map.ell
    }

    pub fn reconstruct(&self) -> (Point, f64) {
        scale(self.map, self.reference, self.lambda)
    }
}

/// Radius of the reference circle used for the `S2` decomposition of `R2⁽²⁾`.
pub fn r2sub2_reference_radius(alpha: f64) -> f64 {
    2.0 * (alpha * alpha + 1.0)
}

/// Radius of the reference arc used for the `S2` decomposition of `R1`.
pub fn r1_reference_radius(alpha: f64) -> f64 {
    (alpha * alpha + 4.0).sqrt()
}

/// Decompose `z` as the image of a point on a fixed reference compactum.
///
/// - `R3`: `S1` with `ℓ = x/(2α)`, reference `(2α, √ℓ·y)`.
/// - `R2⁽¹⁾`: `S1` with `ℓ = (x/(α|y|))^{2/3}`, reference `(αb, b)` where
///   `b = (xy²/α)^{1/3}` carries the sign of `y`, and `λ = ℓ⁻³`.
/// - `R2⁽²⁾`, `R1`: radial `S2` onto a circle of radius `2(α² + 1)` or
///   `√(α² + 4)`.
pub fn to_reference(region: &Region, z: Point) -> Result<ReferenceDecomposition> {
    region.validate()?;
    if !region.contains(z) {
        return Err(Error::OutsideRegion { region: format!("{region:?}"), point: z });
    }
    let radial = |radius: f64| {
        let ell = z.norm() / radius;
        ReferenceDecomposition {
            map: ScalingMap::s2(ell),
            reference: Point::new(z.x / ell, z.y / ell),
            lambda: 1.0,
        }
    };
    match *region {
        Region::R3 { alpha } => {
            let ell = z.x / (2.0 * alpha);
            Ok(ReferenceDecomposition {
                map: ScalingMap::s1(ell),
                reference: Point::new(2.0 * alpha, ell.sqrt() * z.y),
                lambda: ell.powi(-3),
            })
        }
        Region::R2sub1 { alpha } => {
            if z.y == 0.0 {
                return Err(Error::OutsideRegion { region: format!("{region:?}"), point: z });
            }
            let ell = (z.x / (alpha * z.y.abs())).powf(2.0 / 3.0);
            let b = (z.x * z.y * z.y / alpha).cbrt().copysign(z.y);
            Ok(ReferenceDecomposition {
                map: ScalingMap::s1(ell),
                reference: Point::new(alpha * b.abs(), b),
                lambda: ell.powi(-3),
            })
        }
        Region::R2sub2 { alpha } => Ok(radial(r2sub2_reference_radius(alpha))),
        Region::R1 { alpha } => Ok(radial(r1_reference_radius(alpha))),
        _ => Err(Error::InvalidArgument(format!(
            "no reference decomposition for {region:?}"
        ))),
    }
}
