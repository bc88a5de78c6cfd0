//! Selection of `α`, `ρ`, `c̃1`, `c̃2`.

use super::bvp::{solve_g_bvp, BvpForm, BvpSolution};
use super::local::{v2_jet, v3_jet};
use super::patching::patch_v2_lambda;
use crate::generator::{apply, OperatorKind};
use crate::sde::ModelParams;
use super::spec::{LyapunovSpec, DEFAULT_CTIL1, DEFAULT_CTIL2};
use crate::geometry::Point;
use crate::verifier::{certify, GridOptions};
use crate::{Error, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TuningOptions {
    pub ctil1: f64,
    pub ctil2: f64,
    /// Lower bound on `α` supplied by the caller.
    pub alpha_floor: f64,
    /// Relative slack in `σy(δ+1)(δ+2)/α < 1 − margin`.
    pub alpha_margin: f64,
    pub alpha_growth: f64,
    pub max_alpha_steps: usize,
    /// Required gap below zero in [`seam_generator_check`].
    pub seam_slack: f64,
    /// Starting `ρ`; defaults to a radius clearing every uncovered set.
    pub rho_initial: Option<f64>,
    pub max_rho_doublings: u32,
    /// Grid used for the certification calls inside the `ρ` loop.
    pub grid: GridOptions,
}

impl Default for TuningOptions {
    fn default() -> Self {
        TuningOptions {
            ctil1: DEFAULT_CTIL1,
            ctil2: DEFAULT_CTIL2,
            alpha_floor: 0.0,
            alpha_margin: 0.1,
            alpha_growth: 1.25,
            max_alpha_steps: 60,
            seam_slack: 0.1,
            rho_initial: None,
            max_rho_doublings: 20,
            grid: GridOptions::coarse(),
        }
    }
}

/// Sign checks on the `R2/R3` seam at `a = 2α`, `|b| ∈ [2^{−1/2}, 1]`:
/// `v3 − v2 > 0` and `b·∂y(v3 − v2) > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClaimM2Check {
    pub lambda: f64,
    pub samples: usize,
    /// Minimum of `(v3 − v2)/(2α)^{2δ+1}`.
    pub min_gap: f64,
    /// Minimum of `b·∂y(v3 − v2)/(2α)^{2δ+1}`.
    pub min_slope_gap: f64,
    pub pass: bool,
}

pub fn claim_m2_check(spec: &LyapunovSpec, g: &BvpSolution, lambda: f64) -> ClaimM2Check {
    const N: usize = 200;
    let a = 2.0 * spec.alpha;
    let unit = a.powf(2.0 * spec.delta + 1.0);
    let lo = 2f64.powf(-0.5);
    let mut min_gap = f64::INFINITY;
    let mut min_slope_gap = f64::INFINITY;
    for k in 0..N {
        let t = (k / 2) as f64 / (N / 2 - 1) as f64;
        let b = (lo + t * (1.0 - lo)) * if k % 2 == 0 { 1.0 } else { -1.0 };
        let z = Point::new(a, b);
        let j3 = v3_jet(spec, g, z);
        let j2 = v2_jet(spec.delta, spec.alpha, z, lambda);
        min_gap = min_gap.min((j3.v - j2.v) / unit);
        min_slope_gap = min_slope_gap.min(b * (j3.dy - j2.dy) / unit);
    }
    ClaimM2Check {
        lambda,
        samples: N,
        min_gap,
        min_slope_gap,
        pass: min_gap > 0.0 && min_slope_gap > 0.0,
    }
}

/// Leading-order generator of the `R2/R3` blend on the reference line
/// `a = 2α`, `|b| ∈ [2^{−1/2}, 1]`: `A V2` with `v2(·, λ)`, normalized by
/// `(1 − φ)|A v2| + φ|A v3|`. This includes the `σy φ''(h2)(∂y h2)²` term,
/// which scales like the transport terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeamGeneratorCheck {
    pub lambda: f64,
    pub samples: usize,
    /// Largest normalized `A V2`; must stay below `−slack`.
    pub max_normalized: f64,
    pub worst_b: f64,
    pub pass: bool,
}

pub fn seam_generator_check(spec: &LyapunovSpec, g: &BvpSolution, lambda: f64, slack: f64) -> SeamGeneratorCheck {
    const N: usize = 4000;
    let a = 2.0 * spec.alpha;
    let lo = 2f64.powf(-0.5);
    let params = ModelParams::from_spec(spec);
    let mut worst = (f64::NEG_INFINITY, 0.0);
    for k in 0..N {
        let t = (k / 2) as f64 / (N / 2 - 1) as f64;
        let b = (lo + t * (1.0 - lo)) * if k % 2 == 0 { 1.0 } else { -1.0 };
        let z = Point::new(a, b);
        let h2 = 2.0 - a * b * b / spec.alpha;
        let phi = super::patching::mollifier(h2).phi;
        let av = apply(OperatorKind::DiffusiveA, &params, &patch_v2_lambda(spec, g, z, lambda), z);
        let a2 = apply(OperatorKind::DiffusiveA, &params, &v2_jet(spec.delta, spec.alpha, z, lambda), z);
        let a3 = apply(OperatorKind::DiffusiveA, &params, &v3_jet(spec, g, z), z);
        let r = av / ((1.0 - phi) * a2.abs() + phi * a3.abs());
        if r > worst.0 {
            worst = (r, b);
        }
    }
    SeamGeneratorCheck {
        lambda,
        samples: N,
        max_normalized: worst.0,
        worst_b: worst.1,
        pass: worst.0 < -slack,
    }
}

/// Radius outside of which the three regions cover the plane: the circles
/// bounding `O` have diameter `α² + 1`, the strip `α < x < 2α, xy² < α`
/// stays within `√(4α² + 1)`.
pub fn initial_rho(alpha: f64) -> f64 {
    1.25 * (alpha * alpha + 1.0).max((4.0 * alpha * alpha + 1.0).sqrt())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AlphaStep {
    pub alpha: f64,
    pub claim: ClaimM2Check,
    pub seam: SeamGeneratorCheck,
}

#[derive(Debug, Clone, Serialize)]
pub struct RhoStep {
    pub rho: f64,
    pub certified: bool,
    pub worst_margin: f64,
    pub m_critical: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TunedConstants {
    pub spec: LyapunovSpec,
    #[serde(skip)]
    pub g: BvpSolution,
    pub q_at_inv_sqrt2: f64,
    pub q_tilde_at_one: f64,
    /// `σy(δ+1)(δ+2)/(1 − margin)`.
    pub alpha_noise_floor: f64,
    pub alpha_history: Vec<AlphaStep>,
    /// Check repeated at `λ* = (α/ρ)³`, the largest `λ` met on the seam
    /// beyond `2ρ`.
    pub seam_check_at_rho: ClaimM2Check,
    pub seam_generator_at_rho: SeamGeneratorCheck,
    pub rho_history: Vec<RhoStep>,
    /// False when the loop stopped without a certificate (degenerate noise).
    pub rho_converged: bool,
}

/// `α` chosen by the seam sign checks, with the matching `g` and a spec at
/// the initial `ρ`.
#[derive(Debug, Clone)]
pub struct AlphaChoice {
    pub spec: LyapunovSpec,
    pub g: BvpSolution,
    pub q_at_inv_sqrt2: f64,
    pub q_tilde_at_one: f64,
    pub alpha_noise_floor: f64,
    pub alpha_history: Vec<AlphaStep>,
}

/// Steps 1 and 2 of [`choose_constants`].
pub fn choose_alpha(delta: f64, sigma_x: f64, sigma_y: f64, opts: &TuningOptions) -> Result<AlphaChoice> {
    if !(delta > 0.0 && delta < 0.4) {
        return Err(Error::Infeasible(format!(
            "delta = {delta} outside (0, 0.4); the exit-time moment needs delta_hat < 5/2"
        )));
    }
    if !(sigma_x >= 0.0 && sigma_y >= 0.0) {
        return Err(Error::InvalidArgument("noise intensities must be nonnegative".into()));
    }
    let qv = super::spec::q(delta, opts.ctil1, opts.ctil2, 2f64.powf(-0.5));
    let qt = super::spec::q_tilde(delta, opts.ctil1, opts.ctil2, 1.0);
    if !(qv > 0.0) {
        return Err(Error::Infeasible(format!("q(2^-1/2) = {qv} is not positive")));
    }
    if !(qt > 0.0) {
        return Err(Error::Infeasible(format!("q~(1) = {qt} is not positive")));
    }
    let noise_floor = sigma_y * (delta + 1.0) * (delta + 2.0) / (1.0 - opts.alpha_margin);
    let mut alpha = opts.alpha_floor.max(noise_floor);
    if !(alpha > 0.0) {
        alpha = 1.0;
    }
    let mut spec = LyapunovSpec {
        delta,
        alpha,
        rho: 0.0,
        ctil1: opts.ctil1,
        ctil2: opts.ctil2,
        sigma_x,
        sigma_y,
    };
    let mut alpha_history = Vec::new();
    let mut steps = 0;
    let g = loop {
        spec.rho = opts.rho_initial.unwrap_or_else(|| initial_rho(spec.alpha));
        let g = solve_g_bvp(&spec, BvpForm::NativeInterval)?;
        let check = claim_m2_check(&spec, &g, 0.0);
        let seam = seam_generator_check(&spec, &g, 0.0, opts.seam_slack);
        alpha_history.push(AlphaStep { alpha: spec.alpha, claim: check, seam });
        if (check.pass && seam.pass) || sigma_y == 0.0 {
            break g;
        }
        steps += 1;
        if steps > opts.max_alpha_steps {
            return Err(Error::Infeasible(format!(
                "seam checks still fail at alpha = {} (gap {:e}, slope gap {:e}, generator {:e})",
                spec.alpha, check.min_gap, check.min_slope_gap, seam.max_normalized
            )));
        }
        spec.alpha *= opts.alpha_growth;
    };
    Ok(AlphaChoice {
        spec,
        g,
        q_at_inv_sqrt2: qv,
        q_tilde_at_one: qt,
        alpha_noise_floor: noise_floor,
        alpha_history,
    })
}

/// Pick constants for `δ`, `σx`, `σy`:
/// 1. check `q(2^{−1/2}) > 0` and `q̃(1) > 0` for `(c̃1, c̃2)`;
/// 2. start `α` at `max(floor, σy(δ+1)(δ+2)/(1 − margin))` and grow it until
///    the seam sign checks and the leading-order seam generator check pass
///    with the solved `g`;
/// 3. double `ρ` until the coarse certification passes.
///
/// With `σy = 0` there is no `ρ` for which certification can succeed; the
/// loop is skipped and the spec is returned at the initial `ρ` so that the
/// certifier can report the failure.
pub fn choose_constants(
    delta: f64,
    sigma_x: f64,
    sigma_y: f64,
    opts: &TuningOptions,
) -> Result<TunedConstants> {
    let AlphaChoice { mut spec, g, q_at_inv_sqrt2, q_tilde_at_one, alpha_noise_floor, alpha_history } =
        choose_alpha(delta, sigma_x, sigma_y, opts)?;
    let mut rho_history = Vec::new();
    let mut converged = false;
    if sigma_y > 0.0 {
        let rho0 = spec.rho;
        for k in 0..=opts.max_rho_doublings {
            spec.rho = rho0 * 2f64.powi(k as i32);
            let rep = certify(&spec, &g, &opts.grid)?;
            rho_history.push(RhoStep {
                rho: spec.rho,
                certified: rep.certified,
                worst_margin: rep.worst_margin,
                m_critical: rep.m_critical,
            });
            if rep.certified {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Infeasible(format!(
                "no certificate up to rho = {} (2^{} times the initial radius)",
                spec.rho, opts.max_rho_doublings
            )));
        }
    }
    let lambda_star = (spec.alpha / spec.rho).powi(3);
    Ok(TunedConstants {
        seam_check_at_rho: claim_m2_check(&spec, &g, lambda_star),
        seam_generator_at_rho: seam_generator_check(&spec, &g, lambda_star, opts.seam_slack),
        spec,
        g,
        q_at_inv_sqrt2,
        q_tilde_at_one,
        alpha_noise_floor,
        alpha_history,
        rho_history,
        rho_converged: converged,
    })
}
