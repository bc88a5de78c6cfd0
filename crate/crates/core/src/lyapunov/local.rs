//! Local Lyapunov pieces for the priming, transport and diffusive regions.

use super::bvp::{BvpForm, BvpSolution};
use super::jet::{coord_x, coord_y, EvalJet};
use super::spec::LyapunovSpec;
use crate::geometry::{contains, Point, Region};
use crate::{Error, Result};

/// `v1 = (x² + y²)^{δ/2}`.
pub fn v1(spec: &LyapunovSpec, z: Point) -> Result<EvalJet> {
    if z == Point::ORIGIN {
        return Err(Error::InvalidArgument("v1 is not differentiable at the origin".into()));
    }
    Ok(v1_jet(spec.delta, z))
}

pub(crate) fn v1_jet(delta: f64, z: Point) -> EvalJet {
    let x = coord_x(z.x);
    let y = coord_y(z.y);
    (x * x + y * y).powf(0.5 * delta)
}

/// `v2 = ((x² + λy²)/|y|)^δ · [x/|y| + α√λ + √λ(α² + 1)^{−δ/2}]`.
///
/// At `λ = 0` this is `x^{2δ+1}|y|^{−(δ+1)}` for `x > 0`.
pub fn v2(spec: &LyapunovSpec, z: Point, lambda: f64) -> Result<EvalJet> {
    if z.y == 0.0 {
        return Err(Error::InvalidArgument("v2 is singular on y = 0".into()));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda} outside [0, 1]")));
    }
    Ok(v2_jet(spec.delta, spec.alpha, z, lambda))
}

pub(crate) fn v2_jet(delta: f64, alpha: f64, z: Point, lambda: f64) -> EvalJet {
    let (x, s) = (z.x, z.y.abs());
    let sg = z.y.signum();
    let u = EvalJet {
        v: x * x / s + lambda * s,
        dx: 2.0 * x / s,
        dy: sg * (lambda - x * x / (s * s)),
        dxx: 2.0 / s,
        dyy: 2.0 * x * x / (s * s * s),
        dxy: -sg * 2.0 * x / (s * s),
    };
    let sl = lambda.sqrt();
    let kappa = sl * (alpha + (alpha * alpha + 1.0).powf(-0.5 * delta));
    let w = EvalJet {
        v: x / s + kappa,
        dx: 1.0 / s,
        dy: -sg * x / (s * s),
        dxx: 0.0,
        dyy: 2.0 * x / (s * s * s),
        dxy: -sg / (s * s),
    };
    u.powf(delta) * w
}

/// `h = ((x² + λy²)/|y|)^{δ+1}`; `T_λ v2 = −h`.
pub fn transport_source(delta: f64, z: Point, lambda: f64) -> f64 {
    let s = z.y.abs();
    ((z.x * z.x + lambda * s * s) / s).powf(delta + 1.0)
}

fn check_g(spec: &LyapunovSpec, g: &BvpSolution) -> Result<()> {
    let l = spec.bvp_half_length();
    let matches = g.form == BvpForm::NativeInterval
        && (g.half_length - l).abs() <= 1e-12 * l
        && (g.delta_hat - spec.delta_hat()).abs() <= 1e-14
        && g.diffusion == spec.sigma_y;
    if matches {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "g was solved on [-{}, {}] with c = {}, spec needs half-length {l} and c = {}",
            g.half_length, g.half_length, g.diffusion, spec.sigma_y
        )))
    }
}

/// `v3 = x^{δ̂} [(c1/δ̂ + c2) g(√x·y) − c1/δ̂]` on the diffusive region.
pub fn v3(spec: &LyapunovSpec, g: &BvpSolution, z: Point) -> Result<EvalJet> {
    check_g(spec, g)?;
    if !contains(&Region::R3 { alpha: spec.alpha }, z) {
        return Err(Error::OutsideRegion { region: "R3".into(), point: z });
    }
    Ok(v3_jet(spec, g, z))
}

pub(crate) fn v3_jet(spec: &LyapunovSpec, g: &BvpSolution, z: Point) -> EvalJet {
    let dh = spec.delta_hat();
    let sx = z.x.sqrt();
    let w = EvalJet {
        v: sx * z.y,
        dx: 0.5 * z.y / sx,
        dy: sx,
        dxx: -0.25 * z.y / (sx * z.x),
        dyy: 0.0,
        dxy: 0.5 / sx,
    };
    let (gv, dg, d2g) = g.eval(w.v);
    let inner = w.compose(gv, dg, d2g).scale(spec.g_coefficient()).add_const(-spec.c1() / dh);
    coord_x(z.x).powf(dh) * inner
}
