//! Mollified patching of the local pieces into one global `C²` function.

use super::bvp::BvpSolution;
use super::jet::EvalJet;
use super::local::{v1_jet, v2_jet, v3_jet};
use super::spec::LyapunovSpec;
use crate::geometry::{contains, Point, Region};
use crate::{Error, Result};
use serde::Serialize;
use std::sync::OnceLock;

/// `ψ(t) = exp(−1/(1 − (2t − 1)²))` on `(0, 1)`, zero elsewhere.
pub fn bump(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let u = 2.0 * t - 1.0;
    (-1.0 / (1.0 - u * u)).exp()
}

fn bump_derivative(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let u = 2.0 * t - 1.0;
    let d = 1.0 - u * u;
    bump(t) * (-4.0 * u / (d * d))
}

const TABLE_CELLS: usize = 2048;
const SIMPSON_PANELS: usize = 64;

struct MollifierTable {
    /// `∫₀^{t_k} ψ` on `t_k = k / TABLE_CELLS` for `t_k ≤ 1/2`.
    cumulative: Vec<f64>,
    mass: f64,
}

fn table() -> &'static MollifierTable {
    static TABLE: OnceLock<MollifierTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let half = TABLE_CELLS / 2;
        let h = 1.0 / TABLE_CELLS as f64;
        let mut cumulative = Vec::with_capacity(half + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for k in 0..half {
            let a = k as f64 * h;
            let step = h / (2 * SIMPSON_PANELS) as f64;
            let mut s = bump(a) + bump(a + h);
            for j in 1..2 * SIMPSON_PANELS {
                s += if j % 2 == 1 { 4.0 } else { 2.0 } * bump(a + j as f64 * step);
            }
            acc += s * step / 3.0;
            cumulative.push(acc);
        }
        MollifierTable { mass: 2.0 * acc, cumulative }
    })
}

/// Total mass `m = ∫ψ`.
pub fn bump_mass() -> f64 {
    table().mass
}

fn phi_lower_half(t: f64) -> f64 {
    let tab = table();
    let h = 1.0 / TABLE_CELLS as f64;
    let k = ((t / h) as usize).min(TABLE_CELLS / 2 - 1);
    let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
    let fa = [tab.cumulative[k], bump(a), bump_derivative(a)];
    let fb = [tab.cumulative[k + 1], bump(b), bump_derivative(b)];
    // Quintic Hermite on (Φ, ψ, ψ').
    let s = (t - a) / h;
    let (s2, s3) = (s * s, s * s * s);
    let (s4, s5) = (s3 * s, s3 * s2);
    let v = (1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5) * fa[0]
        + h * (s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5) * fa[1]
        + h * h * (0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5) * fa[2]
        + (10.0 * s3 - 15.0 * s4 + 6.0 * s5) * fb[0]
        + h * (-4.0 * s3 + 7.0 * s4 - 3.0 * s5) * fb[1]
        + h * h * (0.5 * s3 - s4 + 0.5 * s5) * fb[2];
    v / tab.mass
}

/// Smooth step `φ(t) = ∫_{−∞}^t ψ / m` with its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mollifier {
    pub phi: f64,
    pub dphi: f64,
    pub d2phi: f64,
}

pub fn mollifier(t: f64) -> Mollifier {
    if t <= 0.0 {
        return Mollifier { phi: 0.0, dphi: 0.0, d2phi: 0.0 };
    }
    if t >= 1.0 {
        return Mollifier { phi: 1.0, dphi: 0.0, d2phi: 0.0 };
    }
    let m = table().mass;
    let phi = if t <= 0.5 { phi_lower_half(t) } else { 1.0 - phi_lower_half(1.0 - t) };
    Mollifier { phi, dphi: bump(t) / m, d2phi: bump_derivative(t) / m }
}

fn mollify(arg: EvalJet) -> EvalJet {
    let m = mollifier(arg.v);
    arg.compose(m.phi, m.dphi, m.d2phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PatchWeights {
    /// `h1 = 2 + α|y|/x`: 1 on `∂B1`, 0 on `|y| = 2|x|/α`.
    pub h1: f64,
    /// `h2 = 2 − xy²/α`: 1 on `xy² = α`, 0 on `xy² = 2α`.
    pub h2: f64,
}

pub fn patch_weights(spec: &LyapunovSpec, z: Point) -> Result<PatchWeights> {
    if z.x == 0.0 {
        return Err(Error::InvalidArgument("h1 is undefined on x = 0".into()));
    }
    let a = spec.alpha;
    Ok(PatchWeights { h1: 2.0 + a * z.y.abs() / z.x, h2: 2.0 - z.x * z.y * z.y / a })
}

fn h1_jet(alpha: f64, z: Point) -> EvalJet {
    let (x, s, sg) = (z.x, z.y.abs(), z.y.signum());
    EvalJet {
        v: 2.0 + alpha * s / x,
        dx: -alpha * s / (x * x),
        dy: alpha * sg / x,
        dxx: 2.0 * alpha * s / (x * x * x),
        dyy: 0.0,
        dxy: -alpha * sg / (x * x),
    }
}

fn h2_jet(alpha: f64, z: Point) -> EvalJet {
    let (x, y) = (z.x, z.y);
    EvalJet {
        v: 2.0 - x * y * y / alpha,
        dx: -y * y / alpha,
        dy: -2.0 * x * y / alpha,
        dxx: 0.0,
        dyy: -2.0 * x / alpha,
        dxy: -2.0 * y / alpha,
    }
}

/// Which formula produces `V` at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Zone {
    /// `|z| < ρ`: the constant `c₀`.
    Interior,
    /// `R1 ∖ R2`: `v1`.
    R1Core,
    /// `R1 ∩ R2`: `V1`.
    Seam12,
    /// `R2 ∖ (R1 ∪ R3)`: `v2` at `λ = 1`.
    R2Core,
    /// `R2 ∩ R3`: `V2`.
    Seam23,
    /// `R3 ∖ R2`: `v3`.
    R3Core,
}

impl Zone {
    pub const OUTER: [Zone; 5] =
        [Zone::R1Core, Zone::Seam12, Zone::R2Core, Zone::Seam23, Zone::R3Core];

    pub fn name(self) -> &'static str {
        match self {
            Zone::Interior => "interior",
            Zone::R1Core => "R1 core",
            Zone::Seam12 => "R1/R2 seam",
            Zone::R2Core => "R2 core",
            Zone::Seam23 => "R2/R3 seam",
            Zone::R3Core => "R3 core",
        }
    }
}

/// Zone of the outer function `Ṽ` at `z`, ignoring the interior filler.
pub fn outer_zone(alpha: f64, z: Point) -> Result<Zone> {
    let in_r2 = contains(&Region::R2 { alpha, lambda: 1.0 }, z);
    let zone = if contains(&Region::R1 { alpha }, z) {
        if in_r2 {
            Zone::Seam12
        } else {
            Zone::R1Core
        }
    } else if contains(&Region::R3 { alpha }, z) {
        if in_r2 {
            Zone::Seam23
        } else {
            Zone::R3Core
        }
    } else if in_r2 {
        Zone::R2Core
    } else {
        return Err(Error::Dispatch(z));
    };
    if z.y == 0.0 && matches!(zone, Zone::Seam12 | Zone::R2Core | Zone::Seam23) {
        return Err(Error::Dispatch(z));
    }
    Ok(zone)
}

/// `V1 = (1 − φ(h1)) v2 + φ(h1) v1`.
pub fn patch_v1(spec: &LyapunovSpec, z: Point) -> EvalJet {
    let w = mollify(h1_jet(spec.alpha, z));
    EvalJet::blend(v2_jet(spec.delta, spec.alpha, z, 1.0), v1_jet(spec.delta, z), w)
}

/// `V2 = (1 − φ(h2)) v2 + φ(h2) v3`.
pub fn patch_v2(spec: &LyapunovSpec, g: &BvpSolution, z: Point) -> EvalJet {
    patch_v2_lambda(spec, g, z, 1.0)
}

/// `V2` built from `v2(·, λ)`.
pub(crate) fn patch_v2_lambda(spec: &LyapunovSpec, g: &BvpSolution, z: Point, lambda: f64) -> EvalJet {
    let w = mollify(h2_jet(spec.alpha, z));
    EvalJet::blend(v2_jet(spec.delta, spec.alpha, z, lambda), v3_jet(spec, g, z), w)
}

/// `Ṽ` in a known zone.
pub fn outer_jet_in(spec: &LyapunovSpec, g: &BvpSolution, zone: Zone, z: Point) -> EvalJet {
    match zone {
        Zone::R1Core => v1_jet(spec.delta, z),
        Zone::Seam12 => patch_v1(spec, z),
        Zone::R2Core => v2_jet(spec.delta, spec.alpha, z, 1.0),
        Zone::Seam23 => patch_v2(spec, g, z),
        Zone::R3Core => v3_jet(spec, g, z),
        Zone::Interior => unreachable!("the interior has no outer formula"),
    }
}

const FILLER_SAMPLES: usize = 8192;

/// The global function: `Ṽ` outside `2ρ`, a radial blend with the constant
/// `c₀` on `ρ ≤ |z| ≤ 2ρ`, and `c₀` inside `ρ`.
#[derive(Debug, Clone, Serialize)]
pub struct GlobalLyapunov {
    pub spec: LyapunovSpec,
    pub g: BvpSolution,
    /// Minimum of `Ṽ` on `|z| = 2ρ`.
    pub c0: f64,
}

impl GlobalLyapunov {
    pub fn new(spec: LyapunovSpec, g: BvpSolution) -> Result<Self> {
        spec.validate()?;
        let r = 2.0 * spec.rho;
        let mut c0 = f64::INFINITY;
        for k in 0..FILLER_SAMPLES {
            let th = std::f64::consts::TAU * (k as f64 + 0.5) / FILLER_SAMPLES as f64;
            let z = Point::new(r * th.cos(), r * th.sin());
            let zone = outer_zone(spec.alpha, z)?;
            let v = outer_jet_in(&spec, &g, zone, z).v;
            if v.is_finite() {
                c0 = c0.min(v);
            }
        }
        Ok(GlobalLyapunov { spec, g, c0 })
    }

    pub fn zone(&self, z: Point) -> Result<Zone> {
        if z.norm() < self.spec.rho {
            Ok(Zone::Interior)
        } else {
            outer_zone(self.spec.alpha, z)
        }
    }

    /// `Ṽ` and its zone; only valid for `|z| ≥ ρ`.
    pub fn outer(&self, z: Point) -> Result<(Zone, EvalJet)> {
        let zone = outer_zone(self.spec.alpha, z)?;
        Ok((zone, outer_jet_in(&self.spec, &self.g, zone, z)))
    }

    pub fn eval(&self, z: Point) -> Result<EvalJet> {
        Ok(self.eval_zoned(z)?.1)
    }

    pub fn eval_zoned(&self, z: Point) -> Result<(Zone, EvalJet)> {
        let rho = self.spec.rho;
        let r = z.norm();
        if r < rho {
            return Ok((Zone::Interior, EvalJet::constant(self.c0)));
        }
        let (zone, outer) = self.outer(z)?;
        if r >= 2.0 * rho {
            return Ok((zone, outer));
        }
        let r3 = r * r * r;
        let s = EvalJet {
            v: r / rho - 1.0,
            dx: z.x / (r * rho),
            dy: z.y / (r * rho),
            dxx: z.y * z.y / (rho * r3),
            dyy: z.x * z.x / (rho * r3),
            dxy: -z.x * z.y / (rho * r3),
        };
        let w = mollify(s);
        Ok((zone, EvalJet::blend(EvalJet::constant(self.c0), outer, w)))
    }

    pub fn value(&self, z: Point) -> Result<f64> {
        Ok(self.eval(z)?.v)
    }
}

/// `global_V(spec, g, z)`.
pub fn global_v(v: &GlobalLyapunov, z: Point) -> Result<EvalJet> {
    v.eval(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mollifier_examples() {
        assert_eq!(mollifier(-1.0), Mollifier { phi: 0.0, dphi: 0.0, d2phi: 0.0 });
        assert_eq!(mollifier(2.0), Mollifier { phi: 1.0, dphi: 0.0, d2phi: 0.0 });
        assert!((bump(0.5) - (-1f64).exp()).abs() < 1e-16);
        assert_eq!(mollifier(0.5).phi, 0.5);
    }

    #[test]
    fn mollifier_value_matches_quadrature_of_bump() {
        // Independent composite Simpson with a different panel count.
        let n = 200_000;
        let t = 0.3;
        let h = t / n as f64;
        let mut s = bump(0.0) + bump(t);
        for j in 1..n {
            s += if j % 2 == 1 { 4.0 } else { 2.0 } * bump(j as f64 * h);
        }
        let direct = s * h / 3.0 / bump_mass();
        assert!((mollifier(t).phi - direct).abs() < 1e-12);
    }

    #[test]
    fn mollifier_derivative_is_consistent() {
        for t in [0.1, 0.37, 0.5, 0.81] {
            let h = 1e-5;
            let fd = (mollifier(t + h).phi - mollifier(t - h).phi) / (2.0 * h);
            assert!((fd - mollifier(t).dphi).abs() < 1e-8);
        }
    }

    #[test]
    fn weight_examples() {
        let s = LyapunovSpec {
            delta: 0.2,
            alpha: 2.0,
            rho: 10.0,
            ctil1: 0.1,
            ctil2: 0.8,
            sigma_x: 1.0,
            sigma_y: 1.0,
        };
        assert_eq!(patch_weights(&s, Point::new(-2.0, 1.0)).unwrap().h1, 1.0);
        let s1 = LyapunovSpec { alpha: 1.0, ..s };
        assert_eq!(patch_weights(&s1, Point::new(4.0, 0.5)).unwrap().h2, 1.0);
        assert_eq!(patch_weights(&s1, Point::new(8.0, 0.5)).unwrap().h2, 0.0);
    }
}
