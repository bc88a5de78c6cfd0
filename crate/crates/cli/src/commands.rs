//! Subcommand bodies. Each validates its config, runs the library, writes its
//! files through a [`Sink`] and returns an [`Outcome`].

use crate::config::*;
use crate::output::{num, Sink};
use serde::Serialize;
use std::path::Path;
use superlyap::control::{gram_matrix, integrate_controlled, liouville_defect, synthesize, SynthesisOptions};
use superlyap::ergodics::{
    invariant_histogram, median_return_time, tv_decay, wilson_interval, HistogramOptions, Window,
};
use superlyap::lyapunov::{
    choose_alpha, choose_constants, initial_rho, solve_g_bvp, solve_g_bvp_with, BvpForm, BvpOptions,
    GlobalLyapunov, LyapunovSpec, TuningOptions, DEFAULT_CTIL1, DEFAULT_CTIL2,
};
use superlyap::sde::{
    exit_tail_bound, exit_time_is, exit_time_mc, mean_se, run_ensemble, simulate_trajectory, IntegratorConfig, ModelParams,
    PathStatus, Starts,
};
use superlyap::verifier::{certify as certify_spec, margin_samples};
use superlyap::{Error, Point};

/// `println!` that ignores a closed stdout.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

/// Successful runs; only `certify` can end uncertified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Uncertified,
}

#[derive(Debug)]
pub enum Failure {
    Schema(String),
    Infeasible(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Infeasible(_) => 2,
            Failure::Schema(_) => 64,
            Failure::Runtime(_) => 70,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Schema(m) | Failure::Infeasible(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let m = e.to_string();
        match e {
            Error::Infeasible(_) | Error::HorizonTooShort { .. } => Failure::Infeasible(m),
            Error::InvalidArgument(_) | Error::PositiveAxis(_) | Error::OutsideRegion { .. } => Failure::Schema(m),
            _ => Failure::Runtime(m),
        }
    }
}

type Run = Result<Outcome, Failure>;

fn sink<C: Serialize>(out: &Path, command: &'static str, cfg: &C) -> Result<Sink, Failure> {
    Sink::new(out, command, cfg).map_err(Failure::Runtime)
}

fn io(r: Result<(), String>) -> Result<(), Failure> {
    r.map_err(Failure::Runtime)
}

fn tuned_alpha(delta: f64, sigma_y: f64) -> Result<f64, Failure> {
    Ok(choose_alpha(delta, 0.0, sigma_y, &TuningOptions::default())?.spec.alpha)
}

fn status_name(s: &PathStatus) -> &'static str {
    match s {
        PathStatus::Completed => "completed",
        PathStatus::Exploded { .. } => "exploded",
        PathStatus::SubstepBudget { .. } => "substep_budget",
    }
}

fn pt(p: Point) -> [String; 2] {
    [num(p.x), num(p.y)]
}

pub fn certify(cfg: &CertifyConfig, out: &Path) -> Run {
    cfg.validate().map_err(Failure::Schema)?;
    let (spec, g, tuning) = match (cfg.alpha, cfg.rho) {
        (Some(alpha), Some(rho)) => {
            let spec = LyapunovSpec {
                delta: cfg.delta,
                alpha,
                rho,
                ctil1: cfg.ctil1,
                ctil2: cfg.ctil2,
                sigma_x: cfg.sigma_x,
                sigma_y: cfg.sigma_y,
            };
            spec.validate()?;
            let g = solve_g_bvp(&spec, BvpForm::NativeInterval)?;
            (spec, g, None)
        }
        _ => {
            let opts = TuningOptions {
                ctil1: cfg.ctil1,
                ctil2: cfg.ctil2,
                alpha_floor: cfg.alpha.unwrap_or(0.0),
                rho_initial: cfg.rho,
                ..TuningOptions::default()
            };
            let t = choose_constants(cfg.delta, cfg.sigma_x, cfg.sigma_y, &opts)?;
            (t.spec, t.g.clone(), Some(t))
        }
    };
    let grid = cfg.grid();
    let report = certify_spec(&spec, &g, &grid)?;
    let samples = margin_samples(&spec, &g, &grid)?;
    let mut sink = sink(out, "certify", cfg)?;

    #[derive(Serialize)]
    struct Body<'a> {
        certified: bool,
        tuning: Option<&'a superlyap::lyapunov::TunedConstants>,
        bvp: &'a superlyap::lyapunov::BvpSolution,
        report: &'a superlyap::verifier::VerificationReport,
    }
    io(sink.json("certify.json", None, &Body { certified: report.certified, tuning: tuning.as_ref(), bvp: &g, report: &report }))?;
    let (m, b) = (report.m, report.b);
    io(sink.csv(
        "certify_margins.csv",
        &["x", "y", "zone", "lv", "v", "v_gamma", "margin", "normalized_margin"],
        samples.iter().map(|s| {
            vec![
                num(s.x),
                num(s.y),
                s.zone.name().to_string(),
                num(s.lv),
                num(s.v),
                num(s.v_gamma),
                num(s.margin(m, b)),
                num(s.normalized_margin(m, b)),
            ]
        }),
    ))?;
    say!(
        "certify: alpha = {:.6}, rho = {:.6}, points = {}, worst margin = {:e}, M = {:e}, b = {:e}, certified = {}",
        spec.alpha, spec.rho, report.grid_points, report.worst_margin, report.m, report.b, report.certified
    );
    for f in &report.failures {
        eprintln!("certify: {f}");
    }
    finish(&sink);
    Ok(if report.certified { Outcome::Done } else { Outcome::Uncertified })
}

fn finish(sink: &Sink) {
    for p in sink.written() {
        say!("wrote {}", p.display());
    }
    say!("config hash {}", sink.hash());
}

pub fn simulate(cfg: &SimulateConfig, out: &Path) -> Run {
    cfg.validate().map_err(Failure::Schema)?;
    let params = ModelParams::new(cfg.sigma_x, cfg.sigma_y);
    let cps = cfg.checkpoints();
    let last = *cps.last().expect("validated");
    let icfg = IntegratorConfig {
        h0: cfg.h0,
        scheme: cfg.scheme,
        adaptive: cfg.adaptive,
        escape_radius: cfg.escape_radius,
        seed: cfg.seed,
        t_max: last.max(IntegratorConfig::default().t_max),
        ..IntegratorConfig::default()
    };
    let ens = run_ensemble(&params, &icfg, &Starts::Fixed(cfg.z0), &cps, cfg.n)?;

    #[derive(Serialize)]
    struct Moments {
        t: f64,
        mean_x: f64,
        se_x: f64,
        mean_y: f64,
        se_y: f64,
        mean_radius: f64,
        se_radius: f64,
        left_fraction: f64,
    }
    #[derive(Serialize)]
    struct Body {
        n: usize,
        failures: usize,
        failure_fraction: f64,
        exploded: usize,
        substep_budget: usize,
        first_failure_times: Vec<f64>,
        total_substeps: u64,
        max_radius: f64,
        checkpoints: Vec<Moments>,
    }
    let moments = cps
        .iter()
        .enumerate()
        .map(|(c, &t)| {
            let zs = &ens.states[c];
            let (mean_x, se_x) = mean_se(&zs.iter().map(|z| z.x).collect::<Vec<_>>());
            let (mean_y, se_y) = mean_se(&zs.iter().map(|z| z.y).collect::<Vec<_>>());
            let (mean_radius, se_radius) = mean_se(&zs.iter().map(|z| z.norm()).collect::<Vec<_>>());
            let left_fraction = zs.iter().filter(|z| z.x < 0.0).count() as f64 / zs.len() as f64;
            Moments { t, mean_x, se_x, mean_y, se_y, mean_radius, se_radius, left_fraction }
        })
        .collect();
    let failure_time = |s: &PathStatus| match *s {
        PathStatus::Exploded { time } | PathStatus::SubstepBudget { time } => Some(time),
        PathStatus::Completed => None,
    };
    let body = Body {
        n: ens.count,
        failures: ens.failures,
        failure_fraction: ens.failure_fraction,
        exploded: ens.statuses.iter().filter(|s| matches!(s, PathStatus::Exploded { .. })).count(),
        substep_budget: ens.statuses.iter().filter(|s| matches!(s, PathStatus::SubstepBudget { .. })).count(),
        first_failure_times: ens.statuses.iter().filter_map(failure_time).take(20).collect(),
        total_substeps: ens.total_substeps,
        max_radius: ens.max_radius,
        checkpoints: moments,
    };
    let mut sink = sink(out, "simulate", cfg)?;
    io(sink.json("simulate.json", Some(cfg.seed), &body))?;
    let rows = (0..ens.count).flat_map(|i| {
        let ens = &ens;
        cps.iter().enumerate().map(move |(c, &t)| {
            let [x, y] = pt(ens.states[c][i]);
            vec![i.to_string(), num(t), x, y, status_name(&ens.statuses[i]).to_string()]
        })
    });
    io(sink.csv("simulate_terminal.csv", &["path", "t", "x", "y", "status"], rows))?;
    let mut path_rows = Vec::new();
    for i in 0..cfg.record_paths.min(cfg.n) {
        let (traj, _) = simulate_trajectory(&params, &icfg, cfg.z0, last, i as u64);
        let k_last = traj.len() - 1;
        for (k, (t, z)) in traj.into_iter().enumerate() {
            if k % cfg.record_every == 0 || k == k_last {
                let [x, y] = pt(z);
                path_rows.push(vec![i.to_string(), num(t), x, y]);
            }
        }
    }
    io(sink.csv("simulate_paths.csv", &["path", "t", "x", "y"], path_rows))?;
    say!(
        "simulate: {} paths from {} to t = {}, failures = {}, max radius = {:e}",
        cfg.n, cfg.z0, last, ens.failures, ens.max_radius
    );
    finish(&sink);
    Ok(Outcome::Done)
}

pub fn exit_time(cfg: &ExitTimeConfig, out: &Path) -> Run {
    cfg.validate().map_err(Failure::Schema)?;
    let alpha = match cfg.alpha {
        Some(a) => a,
        None => tuned_alpha(cfg.delta, cfg.sigma_y)?,
    };
    let spec = LyapunovSpec {
        delta: cfg.delta,
        alpha,
        rho: initial_rho(alpha),
        ctil1: DEFAULT_CTIL1,
        ctil2: DEFAULT_CTIL2,
        sigma_x: 0.0,
        sigma_y: cfg.sigma_y,
    };
    spec.validate()?;
    let g = solve_g_bvp(&spec, BvpForm::NativeInterval)?;
    let est = exit_time_mc(&spec, cfg.z0, cfg.n, cfg.seed, &cfg.options())?;
    let est_is = exit_time_is(&spec, cfg.z0, cfg.n, cfg.seed, &cfg.options())?;
    let dh = spec.delta_hat();
    let g_z0 = g.value(cfg.z0);
    let z_score = (est.mean - g_z0) / est.std_error;
    let z_score_is = (est_is.mean - g_z0) / est_is.std_error;

    #[derive(Serialize)]
    struct TailRow {
        s: f64,
        hits: usize,
        fraction: f64,
        ci95: (f64, f64),
        bound: f64,
        within_bound: bool,
    }
    let tail: Vec<TailRow> = cfg
        .tail_s
        .iter()
        .map(|&s| {
            let cut = s.ln() / dh;
            let hits = est.taus.iter().filter(|&&t| t > cut).count();
            let ci95 = wilson_interval(hits, est.n);
            let bound = exit_tail_bound(alpha, cfg.sigma_y, dh, s);
            TailRow { s, hits, fraction: hits as f64 / est.n as f64, ci95, bound, within_bound: ci95.0 <= bound }
        })
        .collect();

    #[derive(Serialize)]
    struct Body<'a> {
        alpha: f64,
        delta_hat: f64,
        barrier: f64,
        g_z0: f64,
        bvp_residual: f64,
        /// Plain mean; infinite variance, so its standard error is indicative only.
        estimate: &'a superlyap::sde::ExitTimeEstimate,
        z_score: f64,
        within_3se: bool,
        estimate_is: &'a superlyap::sde::ExitTimeEstimate,
        z_score_is: f64,
        within_3se_is: bool,
        tail: &'a [TailRow],
    }
    let body = Body {
        alpha,
        delta_hat: dh,
        barrier: spec.bvp_half_length(),
        g_z0,
        bvp_residual: g.residual,
        estimate: &est,
        z_score,
        within_3se: z_score.abs() <= 3.0,
        estimate_is: &est_is,
        z_score_is,
        within_3se_is: z_score_is.abs() <= 3.0,
        tail: &tail,
    };
    let mut sink = sink(out, "exit-time", cfg)?;
    io(sink.json("exit_time.json", Some(cfg.seed), &body))?;
    io(sink.csv(
        "exit_time_tail.csv",
        &["s", "hits", "fraction", "ci_low", "ci_high", "bound"],
        tail.iter().map(|r| {
            vec![num(r.s), r.hits.to_string(), num(r.fraction), num(r.ci95.0), num(r.ci95.1), num(r.bound)]
        }),
    ))?;
    say!(
        "exit-time: g({}) = {:.8}, plain MC = {:.8} ± {:.2e} (z = {:.2}), weighted MC = {:.8} ± {:.2e} (z = {:.2}), capped = {}",
        cfg.z0, g_z0, est.mean, est.std_error, z_score, est_is.mean, est_is.std_error, z_score_is, est.capped + est_is.capped
    );
    finish(&sink);
    Ok(Outcome::Done)
}

pub fn invariant(cfg: &InvariantConfig, out: &Path) -> Run {
    cfg.validate().map_err(Failure::Schema)?;
    let params = ModelParams::new(cfg.sigma_x, cfg.sigma_y);
    let icfg = IntegratorConfig { h0: cfg.h0, seed: cfg.seed, ..IntegratorConfig::default() };
    let starts = Starts::Fixed(cfg.z0);
    let (burn_in, median) = match cfg.burn_in {
        Some(b) => (b, None),
        None => {
            let m = median_return_time(&params, &icfg, &starts, cfg.n_paths.max(11), cfg.t_end);
            if !m.is_finite() || 10.0 * m >= cfg.t_end {
                return Err(Failure::Runtime(format!(
                    "default burn-in 10 x {m} does not fit below t_end = {}; set burn_in",
                    cfg.t_end
                )));
            }
            (10.0 * m, Some(m))
        }
    };
    let opts = HistogramOptions {
        window: Window::square(cfg.window_half),
        nx: cfg.nx,
        ny: cfg.ny,
        t_end: cfg.t_end,
        burn_in,
        n_paths: cfg.n_paths,
        sample_every: cfg.sample_every,
    };
    let h = invariant_histogram(&params, &icfg, &starts, &opts)?;
    let coarse = h.coarsen(cfg.coarse_factor)?;
    let (inside, outside) = h.masses();

    #[derive(Serialize)]
    struct Body {
        burn_in: f64,
        median_return_time: Option<f64>,
        samples: u64,
        inside_mass: f64,
        outside_mass: f64,
        right_half_mass: f64,
        coarse_bins: usize,
        coarse_min_count: u64,
        coarse_empty_bins: usize,
        all_coarse_positive: bool,
    }
    let cmin = coarse.counts.iter().copied().min().unwrap_or(0);
    let body = Body {
        burn_in,
        median_return_time: median,
        samples: h.total(),
        inside_mass: inside,
        outside_mass: outside,
        right_half_mass: h.right_half_mass(),
        coarse_bins: coarse.counts.len(),
        coarse_min_count: cmin,
        coarse_empty_bins: coarse.counts.iter().filter(|&&c| c == 0).count(),
        all_coarse_positive: cmin > 0,
    };
    let mut sink = sink(out, "invariant", cfg)?;
    io(sink.json("invariant.json", Some(cfg.seed), &body))?;
    let total = h.total().max(1) as f64;
    io(sink.csv(
        "invariant.csv",
        &["ix", "iy", "x", "y", "count", "mass"],
        (0..h.counts.len()).map(|k| {
            let c = h.bin_center(k);
            vec![
                (k / h.ny).to_string(),
                (k % h.ny).to_string(),
                num(c.x),
                num(c.y),
                h.counts[k].to_string(),
                num(h.counts[k] as f64 / total),
            ]
        }),
    ))?;
    say!(
        "invariant: {} samples, right-half mass = {:e}, coarse min count = {}",
        body.samples, body.right_half_mass, body.coarse_min_count
    );
    finish(&sink);
    Ok(Outcome::Done)
}

pub fn converge(cfg: &ConvergeConfig, out: &Path) -> Run {
    cfg.validate().map_err(Failure::Schema)?;
    let params = ModelParams::new(cfg.sigma_x, cfg.sigma_y);
    let last = *cfg.checkpoints.last().expect("validated");
    let base = IntegratorConfig { h0: cfg.h0, t_max: last.max(1e4), ..IntegratorConfig::default() };
    let ca = IntegratorConfig { seed: cfg.seed_a, ..base };
    let cb = IntegratorConfig { seed: cfg.seed_b, ..base };
    let lyap = match cfg.beta {
        Some(_) => {
            let t = choose_constants(
                superlyap::lyapunov::DEFAULT_DELTA,
                cfg.sigma_x,
                cfg.sigma_y,
                &TuningOptions::default(),
            )?;
            Some(GlobalLyapunov::new(t.spec, t.g)?)
        }
        None => None,
    };
    let vfun = |z: Point| lyap.as_ref().map_or(f64::NAN, |v| v.value(z).unwrap_or(f64::NAN));
    let weight = cfg.beta.map(|b| (&vfun as &dyn Fn(Point) -> f64, b));
    let series = tv_decay(
        &params,
        &ca,
        &Starts::Fixed(cfg.from_a),
        &cb,
        &Starts::Fixed(cfg.from_b),
        &cfg.checkpoints,
        cfg.n,
        &cfg.tv_options(),
        weight,
    )?;
    let mut sink = sink(out, "converge", cfg)?;
    io(sink.json("converge.json", Some(cfg.seed_a), &series))?;
    io(sink.csv(
        "converge.csv",
        &["t", "tv", "bootstrap_se", "weighted", "undersampled_mass"],
        series.points.iter().map(|p| {
            vec![
                num(p.t),
                num(p.tv),
                num(p.bootstrap_se),
                p.weighted.map_or(String::new(), num),
                num(p.undersampled_mass),
            ]
        }),
    ))?;
    for p in &series.points {
        say!("converge: t = {:>6}, tv = {:.4} ± {:.4}", p.t, p.tv, p.bootstrap_se);
    }
    say!(
        "converge: log slope = {:.4}, nonincreasing within 2 SE = {}",
        series.log_slope, series.nonincreasing_within_2se
    );
    finish(&sink);
    Ok(Outcome::Done)
}

pub fn control(cfg: &ControlConfig, out: &Path) -> Run {
    cfg.validate().map_err(Failure::Schema)?;
    let opts = SynthesisOptions { m_push: cfg.m_push, fine_step: cfg.fine_step, event_horizon: cfg.event_horizon };
    let sched = synthesize(cfg.from, cfg.to, cfg.horizon, &opts)?;
    let path = integrate_controlled(&sched, cfg.from, cfg.fine_step)?;
    let gram = gram_matrix(&sched, cfg.from, cfg.gram_nodes, cfg.fine_step)?;
    let liouville = liouville_defect(&sched, cfg.from, cfg.gram_nodes, cfg.fine_step);

    #[derive(Serialize)]
    struct Body<'a> {
        schedule: &'a superlyap::control::ControlSchedule,
        phases: usize,
        terminal: Point,
        landing_error: f64,
        event_times: &'a [f64],
        max_x_after_left: f64,
        gram: &'a superlyap::control::GramMatrix,
        liouville_defect: f64,
    }
    let body = Body {
        schedule: &sched,
        phases: sched.phases.len(),
        terminal: path.terminal,
        landing_error: path.landing_error,
        event_times: &path.event_times,
        max_x_after_left: path.max_x_after_left,
        gram: &gram,
        liouville_defect: liouville,
    };
    let mut sink = sink(out, "control", cfg)?;
    io(sink.json("control.json", None, &body))?;
    let n = path.times.len();
    let keep = |k: usize| {
        k % cfg.record_every == 0 || k + 1 == n || (k > 0 && path.phase_index[k] != path.phase_index[k - 1])
    };
    io(sink.csv(
        "control_path.csv",
        &["t", "x", "y", "phase"],
        (0..n).filter(|&k| keep(k)).map(|k| {
            let [x, y] = pt(path.states[k]);
            vec![num(path.times[k]), x, y, (path.phase_index[k] + 1).to_string()]
        }),
    ))?;
    say!(
        "control: {} phases, T = {:.6} (T* = {:.6}), landing error = {:e}, smallest Gram eigenvalue = {:e}",
        sched.phases.len(),
        sched.total_time,
        sched.t_star,
        path.landing_error,
        gram.smallest_eigenvalue
    );
    finish(&sink);
    Ok(Outcome::Done)
}

pub fn bvp(cfg: &BvpConfig, out: &Path) -> Run {
    cfg.validate().map_err(Failure::Schema)?;
    let (form, alpha) = match cfg.epsilon {
        Some(e) => (BvpForm::EpsilonForm(e), cfg.alpha),
        None => (
            BvpForm::NativeInterval,
            Some(match cfg.alpha {
                Some(a) => a,
                None => tuned_alpha(cfg.delta, cfg.sigma_y)?,
            }),
        ),
    };
    // The rescaled problem does not involve α; any positive value validates.
    let a = alpha.unwrap_or(1.0);
    let spec = LyapunovSpec {
        delta: cfg.delta,
        alpha: a,
        rho: initial_rho(a),
        ctil1: DEFAULT_CTIL1,
        ctil2: DEFAULT_CTIL2,
        sigma_x: 0.0,
        sigma_y: cfg.sigma_y,
    };
    spec.validate()?;
    let sol = solve_g_bvp_with(&spec, form, &BvpOptions { tolerance: cfg.tolerance, ..BvpOptions::default() })?;
    let l = sol.half_length;
    let zs: Vec<f64> = (0..cfg.points)
        .map(|k| if k + 1 == cfg.points { l } else { -l + 2.0 * l * k as f64 / (cfg.points - 1) as f64 })
        .collect();

    #[derive(Serialize)]
    struct Body<'a> {
        alpha: Option<f64>,
        solution: &'a superlyap::lyapunov::BvpSolution,
        grid_size: usize,
        g_at_zero: f64,
        g_left: f64,
        g_right: f64,
        boundary_defect: f64,
    }
    let (gl, gr) = (sol.value(-l), sol.value(l));
    let body = Body {
        alpha,
        solution: &sol,
        grid_size: sol.grid_size(),
        g_at_zero: sol.value(0.0),
        g_left: gl,
        g_right: gr,
        boundary_defect: (gl - 1.0).abs().max((gr - 1.0).abs()),
    };
    let mut sink = sink(out, "bvp", cfg)?;
    io(sink.json("bvp.json", None, &body))?;
    io(sink.csv(
        "bvp.csv",
        &["z", "g", "dg", "d2g"],
        zs.iter().map(|&z| {
            let (g, dg, d2g) = sol.eval(z);
            vec![num(z), num(g), num(dg), num(d2g)]
        }),
    ))?;
    say!(
        "bvp: {:?}, method {:?}, residual {:e}, g(0) = {:.10}, g(+-L) = ({}, {})",
        sol.form, sol.method, sol.residual, body.g_at_zero, gl, gr
    );
    finish(&sink);
    Ok(Outcome::Done)
}
