//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use serde_json::Value;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;
use superlyap::ergodics::{absorption_check, k_t, minorization_probe, MinorizationOptions};
use superlyap::generator::{apply, OperatorKind};
use superlyap::geometry::{contains, det_flow, scale, Flow, Region, ScalingMap};
use superlyap::lyapunov::{
    choose_alpha, solve_g_bvp, v1, v2, v3, BvpForm, BvpOptions, BvpSolution, GlobalLyapunov, LyapunovSpec,
    TuningOptions,
};
use superlyap::rng::NoiseStream;
use superlyap::sde::{mean_se, run_ensemble, IntegratorConfig, ModelParams, Starts};
use superlyap::Point;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict { pass, detail: detail.into() }
    }
}

struct Harness {
    root: PathBuf,
    runs: usize,
}

impl Harness {
    /// Runs the binary with its own output directory; returns the exit code
    /// and that directory.
    fn run(&mut self, args: &[&str]) -> (i32, PathBuf) {
        self.runs += 1;
        let out = self.root.join(format!("run{:02}", self.runs));
        let status = Command::new(env!("CARGO_BIN_EXE_superlyap"))
            .arg("--out-dir")
            .arg(&out)
            .args(args)
            .output()
            .expect("binary runs");
        (status.status.code().unwrap_or(-1), out)
    }
}

fn json(dir: &Path, name: &str) -> Value {
    let text = std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(name).display()));
    serde_json::from_str(&text).expect("valid JSON")
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn within_time(started: Instant, limit_s: f64) -> (bool, f64) {
    let s = started.elapsed().as_secs_f64();
    (s < limit_s, s)
}

fn rk4(z0: Point, t: f64, h: f64) -> Point {
    let field = |z: Point| Point::new(z.x * z.x - z.y * z.y, 2.0 * z.x * z.y);
    let add = |a: Point, b: Point, s: f64| Point::new(a.x + s * b.x, a.y + s * b.y);
    let n = (t / h).ceil() as usize;
    let h = t / n as f64;
    let mut z = z0;
    for _ in 0..n {
        let k1 = field(z);
        let k2 = field(add(z, k1, h / 2.0));
        let k3 = field(add(z, k2, h / 2.0));
        let k4 = field(add(z, k3, h));
        z = Point::new(
            z.x + h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
            z.y + h / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
        );
    }
    z
}

fn flow_against_rk4() -> Verdict {
    let t0 = Instant::now();
    let mut s = NoiseStream::new(101, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let z0 = Point::new(4.0 * s.uniform() - 2.0, (0.3 + 1.7 * s.uniform()).copysign(s.uniform() - 0.5));
        let t = s.uniform();
        let exact = match det_flow(z0, t) {
            Flow::State(p) => p,
            Flow::BlowUp { .. } => return Verdict::new(false, format!("unexpected blow-up from {z0}")),
        };
        worst = worst.max(rk4(z0, t, 1e-4).dist(exact) / exact.norm());
    }
    let mut blow: f64 = 0.0;
    for k in 1..=20 {
        let x0 = 0.25 * k as f64;
        blow = blow.max(match det_flow(Point::new(x0, 0.0), 2.0 / x0) {
            Flow::BlowUp { time } => (time - 1.0 / x0).abs(),
            Flow::State(_) => f64::INFINITY,
        });
    }
    let (fast, secs) = within_time(t0, 5.0);
    Verdict::new(
        worst <= 1e-6 && blow <= 1e-8 && fast,
        format!("closed-form flow: RK4 gap {worst:.1e} on 200 starts, blow-up gap {blow:.1e} on 20 starts ({secs:.2} s)"),
    )
}

fn log_space(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
}

fn boundary_matching(spec: &LyapunovSpec, g: &BvpSolution) -> Verdict {
    let t0 = Instant::now();
    let a = spec.alpha;
    let tol = BvpOptions::default().tolerance;
    let (mut gap1, mut gap2, mut n1, mut n2) = (0.0f64, 0.0f64, 0, 0);
    for x in log_space(a, 1e6, 100) {
        for sign in [1.0, -1.0] {
            let z = Point::new(-x, sign * x / a);
            if let (Ok(p), Ok(q)) = (v1(spec, z), v2(spec, z, 1.0)) {
                gap1 = gap1.max((q.v - p.v).abs() / p.v);
                n1 += 1;
            }
            let z = Point::new(2.0 * x, sign * (a / x).sqrt() * (1.0 - 1e-15));
            if let Ok(p) = v3(spec, g, z) {
                let target = spec.c2() * z.x.powf(spec.delta_hat());
                gap2 = gap2.max((p.v - target).abs() / z.x.powf(spec.delta_hat()));
                n2 += 1;
            }
        }
    }
    let (fast, secs) = within_time(t0, 1.0);
    Verdict::new(
        n1 == 200 && n2 == 200 && gap1 <= 1e-12 && gap2 <= tol && fast,
        format!("boundary matching: |v2 - v1| rel {gap1:.1e} on {n1} points, |v3 - c2 x^p| {gap2:.1e} (tol {tol:.0e}) on {n2} points ({secs:.2} s)"),
    )
}

fn pde_residuals(spec: &LyapunovSpec, g: &BvpSolution) -> Verdict {
    let t0 = Instant::now();
    let params = ModelParams::from_spec(spec);
    let tol = BvpOptions::default().tolerance;
    let region = Region::R2 { alpha: spec.alpha, lambda: 1.0 };
    let mut s = NoiseStream::new(103, 0);
    let (mut worst_t, mut done) = (0.0f64, 0);
    while done < 10_000 {
        let r = spec.alpha * 10f64.powf(4.0 * s.uniform());
        let th = std::f64::consts::TAU * s.uniform();
        let z = Point::new(r * th.cos(), r * th.sin());
        if z.y == 0.0 || !contains(&region, z) {
            continue;
        }
        let jet = v2(spec, z, 1.0).expect("inside R2");
        let h = (z.norm_sq() / z.y.abs()).powf(spec.delta + 1.0);
        worst_t = worst_t.max((apply(OperatorKind::TransportT, &params, &jet, z) + h).abs() / h);
        done += 1;
    }
    let dh = spec.delta_hat();
    let unit = spec.g_coefficient() * dh * g.value(0.0);
    let mut worst_a: f64 = 0.0;
    for _ in 0..10_000 {
        let x = 2.0 * spec.alpha * 10f64.powf(5.0 * s.uniform());
        let z = Point::new(x, (2.0 * s.uniform() - 1.0) * (2.0 * spec.alpha / x).sqrt());
        let jet = v3(spec, g, z).expect("inside R3");
        let res = apply(OperatorKind::DiffusiveA, &params, &jet, z) + spec.c1() * x.powf(dh + 1.0);
        worst_a = worst_a.max(res.abs() / (unit * x.powf(dh + 1.0)));
    }
    let (fast, secs) = within_time(t0, 10.0);
    Verdict::new(
        worst_t <= 1e-8 && worst_a <= 10.0 * tol && fast,
        format!("PDE residuals: transport {worst_t:.1e}, diffusive {worst_a:.1e} (limit {:.0e}) on 10^4 points each ({secs:.2} s)", 10.0 * tol),
    )
}

fn homogeneity(spec: &LyapunovSpec, g: &BvpSolution) -> Verdict {
    let mut s = NoiseStream::new(104, 0);
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * s.uniform();
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let mut worst = [0.0f64; 4];
    for _ in 0..100 {
        let z = Point::new(u(-1e3, 1e3), u(-1e3, 1e3));
        let ell = 10f64.powf(u(-2.0, 2.0));
        let (w, _) = scale(ScalingMap::s2(ell), z, 1.0);
        worst[0] = worst[0].max(rel(v1(spec, w).unwrap().v, ell.powf(spec.delta) * v1(spec, z).unwrap().v));

        let z = Point::new(u(-1e3, 1e3), u(0.01, 1e3).copysign(u(-1.0, 1.0)));
        let lambda = u(0.0, 1.0);
        let ell = 10f64.powf(u(-2.0, 2.0));
        let (w, lw) = scale(ScalingMap::s2(ell), z, lambda);
        worst[1] = worst[1].max(rel(v2(spec, w, lw).unwrap().v, ell.powf(spec.delta) * v2(spec, z, lambda).unwrap().v));

        let z = Point::new(u(0.01, 1e3), u(0.01, 1e3).copysign(u(-1.0, 1.0)));
        let ell = 10f64.powf(u(-2.0, 2.0));
        let lambda = u(0.0, 1.0) * ell.powi(-3).min(1.0);
        let (w, lw) = scale(ScalingMap::s1(ell), z, lambda);
        worst[2] = worst[2]
            .max(rel(v2(spec, w, lw.min(1.0)).unwrap().v, ell.powf(spec.delta_hat()) * v2(spec, z, lambda).unwrap().v));

        let x = 2.0 * spec.alpha * u(1.0, 1e3);
        let z = Point::new(x, u(-1.0, 1.0) * (2.0 * spec.alpha / x).sqrt());
        let ell = u(1.0, 100.0);
        let (w, _) = scale(ScalingMap::s1(ell), z, 1.0);
        worst[3] = worst[3].max(rel(v3(spec, g, w).unwrap().v, ell.powf(spec.delta_hat()) * v3(spec, g, z).unwrap().v));
    }
    Verdict::new(
        worst.iter().all(|&w| w <= 1e-10),
        format!(
            "homogeneity: v1|S2 {:.1e}, v2|S2 {:.1e}, v2|S1 {:.1e}, v3|S1 {:.1e} on 100 pairs each",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

struct Certified {
    spec: LyapunovSpec,
    gamma: f64,
    m: f64,
    b: f64,
}

fn certification(h: &mut Harness) -> (Verdict, Option<Certified>) {
    let t0 = Instant::now();
    let (code, dir) = h.run(&["certify", "--delta", "0.2", "--sigma-y", "1"]);
    let (fast, secs) = within_time(t0, 120.0);
    if code != 0 {
        return (Verdict::new(false, format!("certify exited {code}")), None);
    }
    let doc = json(&dir, "certify.json");
    let r = &doc["report"];
    let worst = f(&r["worst_margin"]);
    let points = r["grid_points"].as_u64().unwrap_or(0);
    let range = [f(&r["radius_range"][0]), f(&r["radius_range"][1])];
    let spec: LyapunovSpec = serde_json::from_value(r["spec"].clone()).expect("spec block");
    let change = f(&r["grid_stability"]["max_zone_change"]).max(f(&r["grid_stability"]["m_critical_change"]));
    let (code_hi_delta, _) = h.run(&["certify", "--delta", "0.5"]);
    let (code_no_noise, _) = h.run(&["certify", "--delta", "0.2", "--sigma-y", "0"]);
    let pass = worst > 0.0
        && points >= 100_000
        && (range[0] - 2.0 * spec.rho).abs() <= 1e-9 * spec.rho
        && (range[1] - 1e4 * spec.rho).abs() <= 1e-9 * range[1]
        && change < 0.05
        && fast
        && code_hi_delta == 2
        && code_no_noise == 3;
    let certified = Certified { spec, gamma: f(&r["gamma"]), m: f(&r["m"]), b: f(&r["b"]) };
    (
        Verdict::new(
            pass,
            format!(
                "certification: exit 0, alpha {:.6}, rho {:.4}, worst margin {worst:.3e} over {points} points on [{:.1}, {:.3e}], grid doubling change {change:.1e} ({secs:.1} s); delta 0.5 exits {code_hi_delta}, sigma_y 0 exits {code_no_noise}",
                spec.alpha, spec.rho, range[0], range[1]
            ),
        ),
        Some(certified),
    )
}

fn exit_time_oracle(h: &mut Harness) -> Verdict {
    let t0 = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    let mut barrier = f64::NAN;
    for frac in [0.0, 0.3, 0.8] {
        let z0 = if frac == 0.0 { 0.0 } else { frac * barrier };
        let z0s = format!("{z0}");
        let (code, dir) = h.run(&["exit-time", "--delta", "0.2", "--sigma-y", "1", "--z0", &z0s, "--n", "100000", "--seed", "7"]);
        if code != 0 {
            return Verdict::new(false, format!("exit-time exited {code} at z0 = {z0}"));
        }
        let doc = json(&dir, "exit_time.json");
        barrier = f(&doc["barrier"]);
        let z = f(&doc["z_score_is"]);
        pass &= z.abs() <= 3.0;
        lines.push(format!(
            "z0 = {frac}L: g {:.5}, weighted {:.5} (z {z:+.2}), plain z {:+.2}",
            f(&doc["g_z0"]),
            f(&doc["estimate_is"]["mean"]),
            f(&doc["z_score"])
        ));
        if frac == 0.0 {
            let tail = doc["tail"].as_array().cloned().unwrap_or_default();
            let ok = tail.len() == 3 && tail.iter().all(|r| r["within_bound"].as_bool() == Some(true));
            pass &= ok;
            lines.push(format!("tail bound at s = 2, 5, 10: {}", if ok { "held" } else { "violated" }));
        }
    }
    let (fast, secs) = within_time(t0, 60.0);
    Verdict::new(pass && fast, format!("exit-time oracle, N = 10^5: {} ({secs:.1} s)", lines.join("; ")))
}

fn moment_regularization(cert: &Certified) -> Verdict {
    let t0 = Instant::now();
    let g = match solve_g_bvp(&cert.spec, BvpForm::NativeInterval) {
        Ok(g) => g,
        Err(e) => return Verdict::new(false, format!("g: {e}")),
    };
    let v = GlobalLyapunov::new(cert.spec, g).expect("certified spec");
    let k1 = k_t(cert.gamma, cert.m, cert.b, 1.0).expect("valid constants");
    let params = ModelParams::from_spec(&cert.spec);
    let cfg = IntegratorConfig { seed: 7, ..Default::default() };
    let starts = [
        Point::new(50.0, 0.01),
        Point::new(1.0, 0.0),
        Point::new(-7.0, 7.0),
        Point::new(0.0, -20.0),
        Point::new(30.0, 40.0),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for z0 in starts {
        let ens = run_ensemble(&params, &cfg, &Starts::Fixed(z0), &[1.0], 10_000).expect("valid ensemble");
        let vals: Vec<f64> = ens.terminal().iter().map(|z| v.value(*z).unwrap_or(f64::INFINITY)).collect();
        let (mean, se) = mean_se(&vals);
        let bound = k1 * (1.0 + 3.0 * se / mean + 0.1);
        pass &= ens.failures == 0 && mean <= bound;
        let outside = ens.terminal().iter().filter(|z| z.norm() >= cert.spec.rho).count();
        parts.push(format!("{z0}: {mean:.4e} ({outside} beyond rho)"));
    }
    let secs = t0.elapsed().as_secs_f64();
    Verdict::new(pass, format!("moment bound K_1 = {k1:.3e}; mean V(Z_1), N = 10^4: {} ({secs:.1} s)", parts.join(", ")))
}

fn noise_stability(h: &mut Harness) -> Verdict {
    let t0 = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for z0 in ["2,0", "50,0"] {
        let (code, dir) = h.run(&["simulate", "--sigma-x", "0", "--sigma-y", "1", "--z0", z0, "--n", "10000", "--t-end", "10"]);
        let doc = json(&dir, "simulate.json");
        let bad = doc["exploded"].as_u64().unwrap_or(u64::MAX) + doc["substep_budget"].as_u64().unwrap_or(u64::MAX);
        pass &= code == 0 && bad == 0;
        parts.push(format!("({z0}): {bad} failed of 10^4, max radius {:.2e}", f(&doc["max_radius"])));
    }
    let (code, dir) =
        h.run(&["simulate", "--sigma-x", "0", "--sigma-y", "0", "--z0", "2,0", "--n", "1", "--t-end", "1", "--h0", "1e-5"]);
    let doc = json(&dir, "simulate.json");
    let t_fail = f(&doc["first_failure_times"][0]);
    pass &= code == 0 && doc["exploded"].as_u64() == Some(1) && (t_fail - 0.5).abs() <= 0.01;
    parts.push(format!("deterministic (2,0) blow-up diagnosed at t = {t_fail:.4}"));
    let secs = t0.elapsed().as_secs_f64();
    Verdict::new(pass, format!("stability under noise: {} ({secs:.1} s)", parts.join("; ")))
}

fn half_plane(h: &mut Harness) -> Verdict {
    let t0 = Instant::now();
    let params = ModelParams::new(0.0, 1.0);
    let starts = Starts::Cycle(vec![Point::new(3.0, 1.0), Point::new(0.5, -2.0), Point::new(-1.0, 0.5)]);
    let abs = absorption_check(&params, &IntegratorConfig::default(), &starts, 5.0, 10_000).expect("valid run");
    let (c0, d0) = h.run(&["invariant", "--sigma-x", "0", "--sigma-y", "1", "--z0", "1,1"]);
    let inv0 = json(&d0, "invariant.json");
    let (c1, d1) = h.run(&["invariant", "--sigma-x", "1", "--sigma-y", "1", "--z0", "1,1", "--n-paths", "250"]);
    let inv1 = json(&d1, "invariant.json");
    let samples = inv1["samples"].as_u64().unwrap_or(0);
    let pass = abs.violations == 0
        && c0 == 0
        && f(&inv0["right_half_mass"]) == 0.0
        && c1 == 0
        && samples >= 1_000_000
        && inv1["all_coarse_positive"].as_bool() == Some(true);
    let secs = t0.elapsed().as_secs_f64();
    Verdict::new(
        pass,
        format!(
            "half-plane structure: {} absorption violations in {} paths ({} crossed); sigma_x 0 right-half mass {:e} after burn-in {:.2}; sigma_x 1 min coarse count {} of {samples} samples ({secs:.1} s)",
            abs.violations,
            abs.paths,
            abs.crossed,
            f(&inv0["right_half_mass"]),
            f(&inv0["burn_in"]),
            inv1["coarse_min_count"]
        ),
    )
}

fn tv_decay(h: &mut Harness) -> Verdict {
    let t0 = Instant::now();
    let (code, dir) = h.run(&["converge", "--sigma-x", "1", "--sigma-y", "1", "--nx", "20", "--ny", "20"]);
    let (fast, secs) = within_time(t0, 300.0);
    if code != 0 {
        return Verdict::new(false, format!("converge exited {code}"));
    }
    let doc = json(&dir, "converge.json");
    let tvs: Vec<String> = doc["points"]
        .as_array()
        .map(|ps| ps.iter().map(|p| format!("{:.3}±{:.3}", f(&p["tv"]), f(&p["bootstrap_se"]))).collect())
        .unwrap_or_default();
    let slope = f(&doc["log_slope"]);
    let mono = doc["nonincreasing_within_2se"].as_bool() == Some(true);
    Verdict::new(
        mono && slope < 0.0 && fast,
        format!("TV decay (3,1) vs (-3,1), 20x20 bins on [-6,6]^2: {} at t = 1,2,4,8, slope {slope:.3} ({secs:.1} s)", tvs.join(", ")),
    )
}

fn control(h: &mut Harness) -> Verdict {
    let (code, dir) = h.run(&["control", "--from", "1.5,0", "--to=-3,1"]);
    if code != 0 {
        return Verdict::new(false, format!("control exited {code}"));
    }
    let doc = json(&dir, "control.json");
    let landing = f(&doc["landing_error"]);
    let lmin = f(&doc["gram"]["smallest_eigenvalue"]);
    let liouville = f(&doc["liouville_defect"]);
    let (reject, _) = h.run(&["control", "--from", "1.5,0", "--to", "2,1"]);
    Verdict::new(
        landing <= 1e-3 && lmin > 0.0 && liouville <= 1e-6 && reject != 0,
        format!("control: landing error {landing:.1e}, Gram min eigenvalue {lmin:.3e}, Liouville defect {liouville:.1e}, target (2,1) exits {reject}"),
    )
}

fn minorization() -> Verdict {
    let t0 = Instant::now();
    let opts = MinorizationOptions {
        ball_radius: 5.0,
        target: Point::new(-3.0, 1.0),
        neighborhood: 2.0,
        horizon: 5.0,
        n_per_start: 1000,
        grid: 5,
    };
    let rep = minorization_probe(&ModelParams::new(0.0, 1.0), &IntegratorConfig::default(), &opts).expect("valid probe");
    let (fast, secs) = within_time(t0, 300.0);
    Verdict::new(
        rep.inf_fraction > 0.0 && rep.inf_ci95.0 > 0.0 && fast,
        format!(
            "minorization, sigma_x 0, T 5, radius 2 around (-3,1): inf hit fraction {:.3}, 95% CI [{:.4}, {:.4}], {} zero-hit starts ({secs:.1} s)",
            rep.inf_fraction,
            rep.inf_ci95.0,
            rep.inf_ci95.1,
            rep.zero_hit_starts.len()
        ),
    )
}

fn main() {
    let root = std::env::temp_dir().join(format!("superlyap-acceptance-{}", std::process::id()));
    let mut h = Harness { root: root.clone(), runs: 0 };
    let tuned = choose_alpha(0.2, 0.0, 1.0, &TuningOptions::default()).expect("tuning succeeds");
    let (spec, g) = (tuned.spec, tuned.g);

    let mut verdicts: Vec<Verdict> = Vec::new();
    let mut report = |n: usize, v: Verdict| {
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "criterion {n:>2}: {} | {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        let _ = out.flush();
        verdicts.push(v);
    };
    report(1, flow_against_rk4());
    report(2, boundary_matching(&spec, &g));
    report(3, pde_residuals(&spec, &g));
    report(4, homogeneity(&spec, &g));
    let (v5, cert) = certification(&mut h);
    report(5, v5);
    report(6, exit_time_oracle(&mut h));
    report(
        7,
        match &cert {
            Some(c) => moment_regularization(c),
            None => Verdict::new(false, "no certified constants"),
        },
    );
    report(8, noise_stability(&mut h));
    report(9, half_plane(&mut h));
    report(10, tv_decay(&mut h));
    report(11, control(&mut h));
    report(12, minorization());

    let _ = std::fs::remove_dir_all(&root);
    let failed = verdicts.iter().filter(|v| !v.pass).count();
    println!("acceptance: {} of {} criteria passed", verdicts.len() - failed, verdicts.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
