use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Free constants of the construction. Everything else is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSpec {
    pub delta: f64,
    pub alpha: f64,
    /// Inner radius of the interior filler; `V` is constant on `|z| < rho`.
    pub rho: f64,
    pub ctil1: f64,
    pub ctil2: f64,
    pub sigma_x: f64,
    /// Zero is accepted so that the degenerate model can be fed to the
    /// certifier and rejected there.
    pub sigma_y: f64,
}

pub const DEFAULT_DELTA: f64 = 0.2;
pub const DEFAULT_CTIL1: f64 = 0.1;
pub const DEFAULT_CTIL2: f64 = 0.8;

impl LyapunovSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.delta > 0.0 && self.delta < 0.4) {
            return Err(Error::Infeasible(format!(
                "delta = {} must lie in (0, 0.4)",
                self.delta
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha = {} must be positive", self.alpha));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad(format!("rho = {} must be positive", self.rho));
        }
        if !(self.ctil1 > 0.0 && self.ctil2 > 0.0) {
            return bad("ctil1 and ctil2 must be positive".into());
        }
        if !(self.sigma_x >= 0.0 && self.sigma_y >= 0.0) {
            return bad("noise intensities must be nonnegative".into());
        }
        Ok(())
    }

    /// `δ̂ = 5δ/2 + 3/2`, the homogeneity degree of `v2` and `v3`.
    pub fn delta_hat(&self) -> f64 {
        delta_hat(self.delta)
    }

    /// `γ = (5δ + 5)/(5δ + 3)`.
    pub fn gamma(&self) -> f64 {
        (5.0 * self.delta + 5.0) / (5.0 * self.delta + 3.0)
    }

    fn alpha_factor(&self) -> f64 {
        self.alpha.powf(-(self.delta + 1.0) / 2.0)
    }

    pub fn c1(&self) -> f64 {
        self.ctil1 * self.alpha_factor()
    }

    pub fn c2(&self) -> f64 {
        self.ctil2 * self.alpha_factor()
    }

    /// Coefficient of `g` in `v3`, `c1/δ̂ + c2`.
    pub fn g_coefficient(&self) -> f64 {
        self.c1() / self.delta_hat() + self.c2()
    }

    /// Half-length `√(2α)` of the interval carrying `g`.
    pub fn bvp_half_length(&self) -> f64 {
        (2.0 * self.alpha).sqrt()
    }

    /// `σy(δ+1)(δ+2)/α`; must stay below one for `v2` to work near the funnel.
    pub fn funnel_ratio(&self) -> f64 {
        self.sigma_y * (self.delta + 1.0) * (self.delta + 2.0) / self.alpha
    }

    /// `m₁ = αδ / (2√(α² + 4))`, the rate of `v1` on the priming region.
    pub fn m1(&self) -> f64 {
        self.alpha * self.delta / (2.0 * (self.alpha * self.alpha + 4.0).sqrt())
    }

    /// `q(b)`: sign of `v3⁰ − v2(·, 0)` at `(2α, b)` up to a positive factor.
    pub fn q(&self, b: f64) -> f64 {
        q(self.delta, self.ctil1, self.ctil2, b)
    }

    /// `q̃(b)`: sign of the `y`-derivative gap at `(2α, b)`.
    pub fn q_tilde(&self, b: f64) -> f64 {
        q_tilde(self.delta, self.ctil1, self.ctil2, b)
    }
}

pub fn delta_hat(delta: f64) -> f64 {
    2.5 * delta + 1.5
}

pub fn q(delta: f64, ctil1: f64, ctil2: f64, b: f64) -> f64 {
    let dh = delta_hat(delta);
    let k = ctil1 / dh + ctil2;
    let b = b.abs();
    2f64.powf(0.5 * delta + 0.5) * (k * b.powf(0.4) - ctil1 / dh * b.powf(delta + 1.0)) - 1.0
}

pub fn q_tilde(delta: f64, ctil1: f64, ctil2: f64, b: f64) -> f64 {
    let k = ctil1 / delta_hat(delta) + ctil2;
    -(delta + 0.6) * 2f64.powf(0.5 * delta + 0.5) * k * b.abs().powf(0.4) + delta + 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> LyapunovSpec {
        LyapunovSpec {
            delta: 0.2,
            alpha: 3.0,
            rho: 20.0,
            ctil1: 0.1,
            ctil2: 0.8,
            sigma_x: 1.0,
            sigma_y: 1.0,
        }
    }

    #[test]
    fn derived_exponents() {
        let s = spec();
        assert!((s.delta_hat() - 2.0).abs() < 1e-15);
        assert!((s.gamma() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn feasibility_values_for_default_constants() {
        let s = spec();
        let q0 = s.q(2f64.powf(-0.5));
        assert!((q0 - 0.0716).abs() < 5e-4, "{q0}");
        let qt = s.q_tilde(1.0);
        assert!((qt - 0.1694).abs() < 5e-4, "{qt}");
    }

    #[test]
    fn out_of_range_delta_is_infeasible() {
        let s = LyapunovSpec { delta: 0.4, ..spec() };
        assert!(matches!(s.validate(), Err(Error::Infeasible(_))));
    }
}
