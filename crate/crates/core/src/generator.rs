//! The generator `L` and its limiting operators, acting on derivative jets.

use crate::geometry::Point;
use crate::lyapunov::{EvalJet, GlobalLyapunov, LyapunovSpec};
use crate::sde::ModelParams;
use crate::Result;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OperatorKind {
    /// `L = (x² − y²)∂x + 2xy∂y + σx∂xx + σy∂yy`
    FullL,
    /// `A = x²∂x + 2xy∂y + σy∂yy`
    DiffusiveA,
    /// `T = (x² − y²)∂x + 2xy∂y`
    TransportT,
    /// `T_λ = (x² − λy²)∂x + 2xy∂y`
    TransportTLambda(f64),
}

pub fn apply(op: OperatorKind, params: &ModelParams, jet: &EvalJet, z: Point) -> f64 {
    let (x, y) = (z.x, z.y);
    match op {
        OperatorKind::FullL => {
            (x * x - y * y) * jet.dx
                + 2.0 * x * y * jet.dy
                + params.sigma_x * jet.dxx
                + params.sigma_y * jet.dyy
        }
        OperatorKind::DiffusiveA => x * x * jet.dx + 2.0 * x * y * jet.dy + params.sigma_y * jet.dyy,
        OperatorKind::TransportT => (x * x - y * y) * jet.dx + 2.0 * x * y * jet.dy,
        OperatorKind::TransportTLambda(l) => (x * x - l * y * y) * jet.dx + 2.0 * x * y * jet.dy,
    }
}

/// `−LV − M·V^γ + b`; nonnegative where the super-Lyapunov inequality holds.
pub fn margin_of_jet(spec: &LyapunovSpec, jet: &EvalJet, z: Point, m: f64, b: f64) -> f64 {
    let params = ModelParams::from_spec(spec);
    let lv = apply(OperatorKind::FullL, &params, jet, z);
    -lv - m * jet.v.powf(spec.gamma()) + b
}

/// Margin of the global function at `z`.
pub fn margin(v: &GlobalLyapunov, z: Point, m: f64, b: f64) -> Result<f64> {
    let jet = v.eval(z)?;
    Ok(margin_of_jet(&v.spec, &jet, z, m, b))
}

/// Central-difference jet of `f` at `z` with step `max(1, |x|, |y|)·ε^{1/3}`.
pub fn fd_jet<F>(f: F, z: Point) -> EvalJet
where
    F: Fn(Point) -> f64,
{
    let h = z.x.abs().max(z.y.abs()).max(1.0) * f64::EPSILON.cbrt();
    fd_jet_with_step(f, z, h)
}

pub fn fd_jet_with_step<F>(f: F, z: Point, h: f64) -> EvalJet
where
    F: Fn(Point) -> f64,
{
    let at = |dx: f64, dy: f64| f(Point::new(z.x + dx, z.y + dy));
    let f0 = at(0.0, 0.0);
    let (fxp, fxm) = (at(h, 0.0), at(-h, 0.0));
    let (fyp, fym) = (at(0.0, h), at(0.0, -h));
    EvalJet {
        v: f0,
        dx: (fxp - fxm) / (2.0 * h),
        dy: (fyp - fym) / (2.0 * h),
        dxx: (fxp - 2.0 * f0 + fxm) / (h * h),
        dyy: (fyp - 2.0 * f0 + fym) / (h * h),
        dxy: (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h),
    }
}
