use serde::Serialize;
use std::ops::{Add, Mul, Neg, Sub};

/// Value of a scalar field together with its first and second partials.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EvalJet {
    pub v: f64,
    pub dx: f64,
    pub dy: f64,
    pub dxx: f64,
    pub dyy: f64,
    pub dxy: f64,
}

impl EvalJet {
    pub const fn constant(v: f64) -> Self {
        EvalJet { v, dx: 0.0, dy: 0.0, dxx: 0.0, dyy: 0.0, dxy: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite()
            && self.dx.is_finite()
            && self.dy.is_finite()
            && self.dxx.is_finite()
            && self.dyy.is_finite()
            && self.dxy.is_finite()
    }

    /// `f ∘ self` for a scalar function given by `(f, f', f'')` at `self.v`.
    pub fn compose(self, f: f64, df: f64, d2f: f64) -> Self {
        EvalJet {
            v: f,
            dx: df * self.dx,
            dy: df * self.dy,
            dxx: d2f * self.dx * self.dx + df * self.dxx,
            dyy: d2f * self.dy * self.dy + df * self.dyy,
            dxy: d2f * self.dx * self.dy + df * self.dxy,
        }
    }

    /// `self^p` for a positive base.
    pub fn powf(self, p: f64) -> Self {
        let u = self.v;
        let f = u.powf(p);
        self.compose(f, p * f / u, p * (p - 1.0) * f / (u * u))
    }

    pub fn scale(self, c: f64) -> Self {
        EvalJet {
            v: c * self.v,
            dx: c * self.dx,
            dy: c * self.dy,
            dxx: c * self.dxx,
            dyy: c * self.dyy,
            dxy: c * self.dxy,
        }
    }

    pub fn add_const(mut self, c: f64) -> Self {
        self.v += c;
        self
    }

    /// `(1 − w)·a + w·b` for a weight jet `w`.
    pub fn blend(a: Self, b: Self, w: Self) -> Self {
        a + w * (b - a)
    }
}

impl Add for EvalJet {
    type Output = EvalJet;
    fn add(self, o: Self) -> Self {
        EvalJet {
            v: self.v + o.v,
            dx: self.dx + o.dx,
            dy: self.dy + o.dy,
            dxx: self.dxx + o.dxx,
            dyy: self.dyy + o.dyy,
            dxy: self.dxy + o.dxy,
        }
    }
}

impl Sub for EvalJet {
    type Output = EvalJet;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Neg for EvalJet {
    type Output = EvalJet;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl Mul for EvalJet {
    type Output = EvalJet;
    fn mul(self, o: Self) -> Self {
        EvalJet {
            v: self.v * o.v,
            dx: self.dx * o.v + self.v * o.dx,
            dy: self.dy * o.v + self.v * o.dy,
            dxx: self.dxx * o.v + 2.0 * self.dx * o.dx + self.v * o.dxx,
            dyy: self.dyy * o.v + 2.0 * self.dy * o.dy + self.v * o.dyy,
            dxy: self.dxy * o.v + self.dx * o.dy + self.dy * o.dx + self.v * o.dxy,
        }
    }
}

/// Jet of the coordinate function `x`.
pub fn coord_x(x: f64) -> EvalJet {
    EvalJet { v: x, dx: 1.0, ..EvalJet::default() }
}

/// Jet of the coordinate function `y`.
pub fn coord_y(y: f64) -> EvalJet {
    EvalJet { v: y, dy: 1.0, ..EvalJet::default() }
}
