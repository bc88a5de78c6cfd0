//! Two-point boundary value problem
//!
//! ```text
//! c·g'' + (5/2)·z·g' + δ̂·g = 0   on [−L, L],   g(±L) = 1
//! ```
//!
//! with `c = σy`, `L = √(2α)` for the native problem and `c = εσy`, `L = 1`
//! for the rescaled one. The equation is linear with even coefficients, so the
//! even solution is obtained by shooting from `z = 0` with `g(0) = 1`,
//! `g'(0) = 0` and normalizing by `g(L)`. Integrating outward is stable
//! because the second solution decays like `exp(−5z²/4c)`.

use crate::lyapunov::spec::LyapunovSpec;
use crate::{Error, Result};
use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BvpForm {
    /// `σy g'' + (5/2) z g' + δ̂ g = 0` on `[−√(2α), √(2α)]`.
    NativeInterval,
    /// `εσy g'' + (5/2) u g' + δ̂ g = 0` on `[−1, 1]`.
    EpsilonForm(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BvpMethod {
    /// Outward Lobatto IIIA (Hermite–Simpson) shooting on the half interval.
    SymmetricCollocation,
    /// Second-order differences on the full interval plus one Richardson step.
    FiniteDifferenceRichardson,
    /// `c = 0`: the first-order limit `|z/L|^{−δ̂/(5/2)}`, singular at zero.
    ClosedFormLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BvpOptions {
    /// Scaled residual target (interpolant defect divided by `δ̂·max g`).
    pub tolerance: f64,
    pub initial_intervals: usize,
    pub max_intervals: usize,
}

impl Default for BvpOptions {
    fn default() -> Self {
        BvpOptions { tolerance: 1e-8, initial_intervals: 256, max_intervals: 1 << 17 }
    }
}

/// Grid representation of the even solution `g` with `g`, `g'`, `g''` at the
/// nodes and quintic Hermite interpolation in between.
#[derive(Debug, Clone, Serialize)]
pub struct BvpSolution {
    pub form: BvpForm,
    pub half_length: f64,
    /// `ε` for the rescaled problem, zero for the native one.
    pub epsilon: f64,
    /// Coefficient `c` of `g''`.
    pub diffusion: f64,
    pub delta_hat: f64,
    pub method: BvpMethod,
    /// Final scaled residual.
    pub residual: f64,
    pub residual_history: Vec<f64>,
    /// `max |g(z) − g(−z)|` of an independent full-interval solve.
    pub symmetry_defect: f64,
    /// Largest gap between that independent solve and this solution.
    pub cross_check_gap: f64,
    #[serde(skip)]
    nodes: Vec<f64>,
    #[serde(skip)]
    g: Vec<f64>,
    #[serde(skip)]
    dg: Vec<f64>,
    #[serde(skip)]
    d2g: Vec<f64>,
}

impl BvpSolution {
    pub fn grid_size(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node_values(&self) -> &[f64] {
        &self.g
    }

    /// `(g, g', g'')` at `z ∈ [−L, L]`; `g''` comes from the ODE identity.
    pub fn eval(&self, z: f64) -> (f64, f64, f64) {
        let l = self.half_length;
        if self.method == BvpMethod::ClosedFormLimit {
            let p = self.delta_hat / 2.5;
            let u = z.abs() / l;
            let g = u.powf(-p);
            let dg = -p * g / z;
            let d2g = p * (p + 1.0) * g / (z * z);
            return (g, dg, d2g);
        }
        let zc = z.clamp(-l, l);
        let n = self.nodes.len();
        let i = self.nodes.partition_point(|&t| t <= zc).clamp(1, n - 1) - 1;
        let (g, dg, _) = self.hermite(i, zc);
        (g, dg, self.ode_second_derivative(zc, g, dg))
    }

    pub fn value(&self, z: f64) -> f64 {
        self.eval(z).0
    }

    fn ode_second_derivative(&self, z: f64, g: f64, dg: f64) -> f64 {
        -(2.5 * z * dg + self.delta_hat * g) / self.diffusion
    }

    /// Quintic Hermite interpolant on `[z_i, z_{i+1}]` and its first two
    /// derivatives.
    fn hermite(&self, i: usize, z: f64) -> (f64, f64, f64) {
        quintic_hermite(
            self.nodes[i],
            self.nodes[i + 1],
            [self.g[i], self.dg[i], self.d2g[i]],
            [self.g[i + 1], self.dg[i + 1], self.d2g[i + 1]],
            z,
        )
    }

    /// Largest scaled ODE defect of the interpolant, sampled inside every cell.
    fn interpolant_defect(&self) -> f64 {
        let gmax = self.g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for i in 0..self.nodes.len() - 1 {
            for s in [0.25, 0.5, 0.75] {
                let z = self.nodes[i] + s * (self.nodes[i + 1] - self.nodes[i]);
                let (g, dg, d2g) = self.hermite(i, z);
                let r = self.diffusion * d2g + 2.5 * z * dg + self.delta_hat * g;
                worst = worst.max(r.abs());
            }
        }
        worst / (self.delta_hat * gmax)
    }
}

fn quintic_hermite(z0: f64, z1: f64, a: [f64; 3], b: [f64; 3], z: f64) -> (f64, f64, f64) {
    let h = z1 - z0;
    let t = (z - z0) / h;
    let (t2, t3) = (t * t, t * t * t);
    let (t4, t5) = (t3 * t, t3 * t2);
    // Basis for value, slope and curvature at each end.
    let h00 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h01 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h02 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
    let h10 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    let h11 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h12 = 0.5 * t3 - t4 + 0.5 * t5;
    let d00 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
    let d01 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
    let d02 = t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4;
    let d11 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
    let d12 = 1.5 * t2 - 4.0 * t3 + 2.5 * t4;
    let s00 = -60.0 * t + 180.0 * t2 - 120.0 * t3;
    let s01 = -36.0 * t + 96.0 * t2 - 60.0 * t3;
    let s02 = 1.0 - 9.0 * t + 18.0 * t2 - 10.0 * t3;
    let s11 = -24.0 * t + 84.0 * t2 - 60.0 * t3;
    let s12 = 3.0 * t - 12.0 * t2 + 10.0 * t3;
    let v = h00 * a[0] + h * h01 * a[1] + h * h * h02 * a[2]
        + h10 * b[0]
        + h * h11 * b[1]
        + h * h * h12 * b[2];
    let d = (d00 * a[0] + h * d01 * a[1] + h * h * d02 * a[2] - d00 * b[0]
        + h * d11 * b[1]
        + h * h * d12 * b[2])
        / h;
    let s = (s00 * a[0] + h * s01 * a[1] + h * h * s02 * a[2] - s00 * b[0]
        + h * s11 * b[1]
        + h * h * s12 * b[2])
        / (h * h);
    (v, d, s)
}

/// Problem data shared by both solvers.
#[derive(Debug, Clone, Copy)]
struct Problem {
    c: f64,
    l: f64,
    dh: f64,
}

impl Problem {
    fn matrix(&self, z: f64) -> Matrix2<f64> {
        Matrix2::new(0.0, 1.0, -self.dh / self.c, -2.5 * z / self.c)
    }

    /// Half-interval nodes clustered towards zero, where the inner layer of
    /// width `√c` sits.
    fn half_grid(&self, n: usize) -> Vec<f64> {
        let beta = (self.l / self.c.sqrt()).max(1.0).asinh();
        let s = beta.sinh();
        (0..=n)
            .map(|i| {
                if i == n {
                    self.l
                } else {
                    self.l * (beta * i as f64 / n as f64).sinh() / s
                }
            })
            .collect()
    }
}

fn lobatto_step(p: &Problem, z: f64, h: f64, y: Vector2<f64>) -> Vector2<f64> {
    let a1 = p.matrix(z);
    let a2 = p.matrix(z + 0.5 * h);
    let a3 = p.matrix(z + h);
    let i2 = Matrix2::identity();
    let b11 = i2 - a2 * (h / 3.0);
    let b12 = a3 * (h / 24.0);
    let b21 = a2 * (-2.0 * h / 3.0);
    let b22 = i2 - a3 * (h / 6.0);
    let m = Matrix4::from_fn(|r, c| match (r < 2, c < 2) {
        (true, true) => b11[(r, c)],
        (true, false) => b12[(r, c - 2)],
        (false, true) => b21[(r - 2, c)],
        (false, false) => b22[(r - 2, c - 2)],
    });
    let r1 = y + a1 * y * (5.0 * h / 24.0);
    let r2 = y + a1 * y * (h / 6.0);
    let rhs = Vector4::new(r1[0], r1[1], r2[0], r2[1]);
    let sol = m.lu().solve(&rhs).expect("collocation system is nonsingular");
    Vector2::new(sol[2], sol[3])
}

fn assemble(
    p: &Problem,
    form: BvpForm,
    epsilon: f64,
    method: BvpMethod,
    half_nodes: &[f64],
    g: &[f64],
    dg: &[f64],
) -> BvpSolution {
    // Mirror the half-interval data; g is even, g' odd.
    let n = half_nodes.len();
    let mut nodes = Vec::with_capacity(2 * n - 1);
    let mut gv = Vec::with_capacity(2 * n - 1);
    let mut dv = Vec::with_capacity(2 * n - 1);
    for i in (1..n).rev() {
        nodes.push(-half_nodes[i]);
        gv.push(g[i]);
        dv.push(-dg[i]);
    }
    nodes.extend_from_slice(half_nodes);
    gv.extend_from_slice(g);
    dv.extend_from_slice(dg);
    let d2 = nodes
        .iter()
        .zip(gv.iter().zip(&dv))
        .map(|(&z, (&g, &d))| -(2.5 * z * d + p.dh * g) / p.c)
        .collect();
    BvpSolution {
        form,
        half_length: p.l,
        epsilon,
        diffusion: p.c,
        delta_hat: p.dh,
        method,
        residual: f64::NAN,
        residual_history: Vec::new(),
        symmetry_defect: f64::NAN,
        cross_check_gap: f64::NAN,
        nodes,
        g: gv,
        dg: dv,
        d2g: d2,
    }
}

fn shoot(p: &Problem, form: BvpForm, epsilon: f64, n: usize) -> BvpSolution {
    let z = p.half_grid(n);
    let mut y = Vector2::new(1.0, 0.0);
    let mut g = vec![1.0];
    let mut dg = vec![0.0];
    for i in 0..n {
        y = lobatto_step(p, z[i], z[i + 1] - z[i], y);
        g.push(y[0]);
        dg.push(y[1]);
    }
    let scale = 1.0 / y[0];
    g.iter_mut().for_each(|v| *v *= scale);
    dg.iter_mut().for_each(|v| *v *= scale);
    g[n] = 1.0;
    assemble(p, form, epsilon, BvpMethod::SymmetricCollocation, &z, &g, &dg)
}

/// Central differences on `n` uniform cells of `[−L, L]`, Dirichlet data 1.
fn fd_solve(p: &Problem, n: usize) -> Vec<f64> {
    let h = 2.0 * p.l / n as f64;
    let m = n - 1;
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    for k in 0..m {
        let z = -p.l + (k + 1) as f64 * h;
        let a = p.c / (h * h);
        let b = 2.5 * z / (2.0 * h);
        lower[k] = a - b;
        diag[k] = -2.0 * a + p.dh;
        upper[k] = a + b;
    }
    rhs[0] -= lower[0];
    rhs[m - 1] -= upper[m - 1];
    let inner = thomas(&lower, &diag, &upper, &rhs);
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    out.extend(inner);
    out.push(1.0);
    out
}

fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let den = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / den;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}

/// Full-interval finite differences on `n` and `2n` cells, Richardson-combined
/// onto the coarse nodes.
fn fd_richardson(p: &Problem, n: usize) -> (Vec<f64>, Vec<f64>) {
    let coarse = fd_solve(p, n);
    let fine = fd_solve(p, 2 * n);
    let h = 2.0 * p.l / n as f64;
    let z = (0..=n).map(|k| -p.l + k as f64 * h).collect();
    let g = (0..=n).map(|k| (4.0 * fine[2 * k] - coarse[k]) / 3.0).collect();
    (z, g)
}

fn fd_fallback(p: &Problem, form: BvpForm, epsilon: f64, n: usize) -> BvpSolution {
    let (z, g) = fd_richardson(p, n);
    let h = z[1] - z[0];
    // Fourth-order differences, one-sided at the ends.
    let dg: Vec<f64> = (0..=n)
        .map(|k| {
            if k >= 2 && k + 2 <= n {
                (g[k - 2] - 8.0 * g[k - 1] + 8.0 * g[k + 1] - g[k + 2]) / (12.0 * h)
            } else if k < 2 {
                (-25.0 * g[k] + 48.0 * g[k + 1] - 36.0 * g[k + 2] + 16.0 * g[k + 3]
                    - 3.0 * g[k + 4])
                    / (12.0 * h)
            } else {
                (25.0 * g[k] - 48.0 * g[k - 1] + 36.0 * g[k - 2] - 16.0 * g[k - 3]
                    + 3.0 * g[k - 4])
                    / (12.0 * h)
            }
        })
        .collect();
    let d2g = z
        .iter()
        .zip(g.iter().zip(&dg))
        .map(|(&zz, (&gg, &dd))| -(2.5 * zz * dd + p.dh * gg) / p.c)
        .collect();
    BvpSolution {
        form,
        half_length: p.l,
        epsilon,
        diffusion: p.c,
        delta_hat: p.dh,
        method: BvpMethod::FiniteDifferenceRichardson,
        residual: f64::NAN,
        residual_history: Vec::new(),
        symmetry_defect: f64::NAN,
        cross_check_gap: f64::NAN,
        nodes: z,
        g,
        dg,
        d2g,
    }
}

/// Independent full-interval solve used to check evenness and the primary
/// solution. Returns `(symmetry defect, max gap)`.
fn cross_check(p: &Problem, sol: &BvpSolution) -> (f64, f64) {
    let cells = ((4.0 * p.l / p.c.sqrt()).ceil() as usize).clamp(2048, 1 << 16);
    let (z, g) = fd_richardson(p, cells & !1);
    let n = g.len() - 1;
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut sym = 0.0f64;
    let mut gap = 0.0f64;
    for k in 0..=n {
        sym = sym.max((g[k] - g[n - k]).abs());
        gap = gap.max((g[k] - sol.value(z[k])).abs());
    }
    (sym / gmax, gap / gmax)
}

/// Solve for `g` (or `g_ε`) with the spec's `δ̂` and `σy`.
pub fn solve_g_bvp(spec: &LyapunovSpec, form: BvpForm) -> Result<BvpSolution> {
    solve_g_bvp_with(spec, form, &BvpOptions::default())
}

pub fn solve_g_bvp_with(
    spec: &LyapunovSpec,
    form: BvpForm,
    opts: &BvpOptions,
) -> Result<BvpSolution> {
    let dh = spec.delta_hat();
    if !(dh < 2.5) {
        return Err(Error::Infeasible(format!("delta_hat = {dh} must be below 5/2")));
    }
    let (c, l, epsilon) = match form {
        BvpForm::NativeInterval => (spec.sigma_y, spec.bvp_half_length(), 0.0),
        BvpForm::EpsilonForm(eps) => {
            if !(eps > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "epsilon must be positive, got {eps}; use g_zero_limit for the limit"
                )));
            }
            (eps * spec.sigma_y, 1.0, eps)
        }
    };
    if c == 0.0 {
        return Ok(BvpSolution {
            form,
            half_length: l,
            epsilon,
            diffusion: 0.0,
            delta_hat: dh,
            method: BvpMethod::ClosedFormLimit,
            residual: 0.0,
            residual_history: vec![0.0],
            symmetry_defect: 0.0,
            cross_check_gap: 0.0,
            nodes: vec![-l, l],
            g: vec![1.0, 1.0],
            dg: vec![0.0, 0.0],
            d2g: vec![0.0, 0.0],
        });
    }
    let p = Problem { c, l, dh };
    let mut history = Vec::new();
    let mut n = opts.initial_intervals.max(8);
    let mut found = None;
    while n <= opts.max_intervals {
        let sol = shoot(&p, form, epsilon, n);
        let r = sol.interpolant_defect();
        history.push(r);
        if r <= opts.tolerance {
            found = Some((sol, r));
            break;
        }
        n *= 2;
    }
    let (mut sol, r) = match found {
        Some(x) => x,
        None => {
            let mut n = 4096;
            let mut best = None;
            while n <= 4 * opts.max_intervals {
                let sol = fd_fallback(&p, form, epsilon, n);
                let r = sol.interpolant_defect();
                history.push(r);
                if r <= opts.tolerance {
                    best = Some((sol, r));
                    break;
                }
                n *= 2;
            }
            best.ok_or(Error::BvpNonConvergence { history: history.clone() })?
        }
    };
    sol.residual = r;
    sol.residual_history = history;
    let (sym, gap) = cross_check(&p, &sol);
    sol.symmetry_defect = sym;
    sol.cross_check_gap = gap;
    Ok(sol)
}

/// `ε → 0` limit of the rescaled problem, `g₀(u) = |u|^{−(δ + 3/5)}`, with
/// first and second derivatives.
pub fn g_zero_limit(delta: f64, u: f64) -> (f64, f64, f64) {
    let p = delta + 0.6;
    let g = u.abs().powf(-p);
    (g, -p * g / u, p * (p + 1.0) * g / (u * u))
}
