use std::sync::OnceLock;
use superlyap::geometry::{det_flow, Point};
use superlyap::lyapunov::{choose_alpha, solve_g_bvp, BvpForm, BvpSolution, LyapunovSpec, TuningOptions};
use superlyap::rng::NoiseStream;
use superlyap::sde::{
    exit_tail_bound, exit_time_is, exit_time_mc, hat_exit_times, hat_time_from_z, mean_se, run_ensemble,
    simulate_path, step_full, step_z_exact, ExitTimeOptions, IntegratorConfig, ModelParams, PathStatus, Scheme,
    Starts,
};

fn tuned() -> &'static (LyapunovSpec, BvpSolution) {
    static F: OnceLock<(LyapunovSpec, BvpSolution)> = OnceLock::new();
    F.get_or_init(|| {
        let c = choose_alpha(0.2, 0.0, 1.0, &TuningOptions::default()).unwrap();
        let g = solve_g_bvp(&c.spec, BvpForm::NativeInterval).unwrap();
        (c.spec, g)
    })
}

/// Standard normal CDF via the complementary error function (Numerical
/// Recipes `erfcc`, relative error below 1.2e-7).
fn normal_cdf(x: f64) -> f64 {
    let z = x.abs() / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807 + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277))))))));
    let erfc = t * poly.exp();
    if x >= 0.0 {
        1.0 - 0.5 * erfc
    } else {
        0.5 * erfc
    }
}

fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn exact_linear_step_has_the_gaussian_law() {
    let n = 100_000;
    let (z, h) = (0.7, 0.1);
    let mut s = NoiseStream::new(31, 0);
    let draws: Vec<f64> = (0..n).map(|_| step_z_exact(1.0, z, h, s.normal_pair().0)).collect();
    let mean = (2.5 * h).exp() * z;
    let var = 0.4 * (5.0 * h).exp_m1();
    let (m, se) = mean_se(&draws);
    assert!((m - mean).abs() <= 4.0 * se, "mean {m} vs {mean}");
    let sample_var = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    let var_se = var * (2.0 / (n - 1) as f64).sqrt();
    assert!((sample_var - var).abs() <= 4.0 * var_se, "var {sample_var} vs {var}");
    // Kolmogorov–Smirnov against N(mean, var) at the 1% level.
    let mut u: Vec<f64> = draws.iter().map(|d| normal_cdf((d - mean) / var.sqrt())).collect();
    u.sort_by(f64::total_cmp);
    let d = u
        .iter()
        .enumerate()
        .map(|(i, &p)| (p - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - p))
        .fold(0.0, f64::max);
    assert!(d < 1.628 / (n as f64).sqrt(), "KS statistic {d}");
    assert_eq!(step_z_exact(1.0, 0.0, h, 0.0), 0.0);
}

#[test]
fn deterministic_runs_follow_the_closed_form() {
    let p = ModelParams::new(0.0, 0.0);
    let cfg = IntegratorConfig { h0: 1e-4, ..Default::default() };
    let mut s = NoiseStream::new(32, 0);
    for _ in 0..10 {
        let z0 = Point::new(4.0 * s.uniform() - 2.0, 0.5 + 1.5 * s.uniform());
        let got = simulate_path(&p, &cfg, z0, &[1.0], 0);
        let exact = det_flow(z0, 1.0).state().unwrap();
        assert_eq!(got.status, PathStatus::Completed);
        assert!(got.states[0].dist(exact) <= 1e-2 * exact.norm().max(1.0), "{z0}: {} vs {exact}", got.states[0]);
    }
}

#[test]
fn halving_the_step_shrinks_the_strong_error() {
    let p = ModelParams::new(1.0, 1.0);
    let cfg = IntegratorConfig { adaptive: false, ..Default::default() };
    let (t_end, h, fine) = (1.0, 0.01, 64usize);
    let paths = 400usize;
    let mut err = [Vec::new(), Vec::new()];
    for path in 0..paths {
        let mut s = NoiseStream::new(33, path as u64);
        let n_fine = (t_end / h) as usize * fine;
        let hf = h / fine as f64;
        let dw: Vec<(f64, f64)> = (0..n_fine)
            .map(|_| {
                let (a, b) = s.normal_pair();
                (a * hf.sqrt(), b * hf.sqrt())
            })
            .collect();
        let run = |k: usize| {
            let hk = hf * k as f64;
            let mut z = Point::new(-1.0, 0.5);
            for chunk in dw.chunks(k) {
                let w = chunk.iter().fold((0.0, 0.0), |acc, d| (acc.0 + d.0, acc.1 + d.1));
                z = step_full(&p, &cfg, z, hk, (w.0 / hk.sqrt(), w.1 / hk.sqrt())).unwrap();
            }
            z
        };
        let reference = run(1);
        err[0].push(run(fine).dist(reference));
        err[1].push(run(fine / 2).dist(reference));
    }
    for e in err.iter_mut() {
        e.sort_by(f64::total_cmp);
    }
    let ratio = err[0][paths / 2] / err[1][paths / 2];
    assert!((1.2..=3.0).contains(&ratio), "error ratio {ratio}");
}

#[test]
fn ensembles_are_reproducible_and_thread_count_free() {
    let p = ModelParams::new(1.0, 1.0);
    let cfg = IntegratorConfig { seed: 5, ..Default::default() };
    let starts = Starts::Cycle(vec![Point::new(3.0, 1.0), Point::new(-2.0, 0.1)]);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_ensemble(&p, &cfg, &starts, &[0.5, 1.0], 64).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.states, b.states);
    assert_eq!(a.total_substeps, b.total_substeps);
    let single = simulate_path(&p, &cfg, starts.get(7), &[0.5, 1.0], 7);
    assert_eq!(single.states[1], a.states[1][7]);
    let other = run_ensemble(&p, &IntegratorConfig { seed: 6, ..cfg }, &starts, &[1.0], 64).unwrap();
    assert_ne!(other.terminal(), a.terminal());
}

#[test]
fn hypoelliptic_paths_never_leave_the_left_half_plane() {
    let p = ModelParams::new(0.0, 1.0);
    let cfg = IntegratorConfig::default();
    let starts = Starts::Cycle(vec![Point::new(-0.1, 0.0), Point::new(-3.0, 2.0), Point::new(-20.0, -5.0), Point::new(-1e-3, 4.0)]);
    let e = run_ensemble(&p, &cfg, &starts, &[1.0, 5.0], 2000).unwrap();
    assert_eq!(e.failures, 0);
    for states in &e.states {
        assert!(states.iter().all(|z| z.x < 0.0));
    }
}

#[test]
fn noisy_paths_from_the_blow_up_ray_survive() {
    let p = ModelParams::new(0.0, 1.0);
    let cfg = IntegratorConfig::default();
    let starts = Starts::Cycle(vec![Point::new(50.0, 0.01), Point::new(2.0, 0.0), Point::new(10.0, 0.0)]);
    let e = run_ensemble(&p, &cfg, &starts, &[10.0], 600).unwrap();
    assert_eq!(e.failures, 0, "max radius {}", e.max_radius);
    assert!(e.terminal().iter().all(|z| z.is_finite()));
}

#[test]
fn plain_euler_explodes_where_taming_does_not() {
    let p = ModelParams::new(0.0, 1.0);
    let plain = IntegratorConfig { scheme: Scheme::PlainEuler, adaptive: false, h0: 1e-2, ..Default::default() };
    let e = run_ensemble(&p, &plain, &Starts::Fixed(Point::new(50.0, 0.01)), &[1.0], 200).unwrap();
    assert!(e.failure_fraction > 0.5, "{}", e.failure_fraction);
    let tamed = IntegratorConfig { adaptive: false, h0: 1e-2, ..Default::default() };
    let e = run_ensemble(&p, &tamed, &Starts::Fixed(Point::new(50.0, 0.01)), &[1.0], 200).unwrap();
    assert_eq!(e.failures, 0);
}

#[test]
fn deterministic_blow_up_time_converges_to_one_over_x0() {
    let p = ModelParams::new(0.0, 0.0);
    let errs: Vec<f64> = [1e-3, 1e-4, 1e-5]
        .iter()
        .map(|&h0| {
            let cfg = IntegratorConfig { h0, ..Default::default() };
            match simulate_path(&p, &cfg, Point::new(2.0, 0.0), &[1.0], 0).status {
                PathStatus::Exploded { time } => (time - 0.5).abs(),
                other => panic!("h0 = {h0}: {other:?}"),
            }
        })
        .collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    assert!(errs[2] < 1e-2, "{errs:?}");
}

#[test]
fn weighted_exit_estimator_matches_the_bvp() {
    let (spec, g) = tuned();
    let l = spec.bvp_half_length();
    for z0 in [0.3 * l, 0.8 * l] {
        let est = exit_time_is(spec, z0, 20_000, 3, &ExitTimeOptions::default()).unwrap();
        let z = (est.mean - g.value(z0)) / est.std_error;
        assert!(z.abs() <= 3.0, "z0 = {z0}: {} ± {} vs {}", est.mean, est.std_error, g.value(z0));
        assert_eq!(est.capped, 0);
    }
    let at_barrier = exit_time_is(spec, l, 2_000, 0, &ExitTimeOptions::default()).unwrap();
    assert!((at_barrier.mean - 1.0).abs() <= 3.0 * at_barrier.std_error, "{at_barrier:?}");
}

#[test]
fn exit_tails_respect_the_bound() {
    let (spec, _) = tuned();
    let est = exit_time_mc(spec, 0.0, 20_000, 4, &ExitTimeOptions::default()).unwrap();
    let dh = spec.delta_hat();
    for s in [2.0, 5.0, 10.0] {
        let frac = est.tail_fraction(dh, s);
        let bound = exit_tail_bound(spec.alpha, spec.sigma_y, dh, s);
        let se = (frac * (1.0 - frac) / est.n as f64).sqrt();
        assert!(frac <= bound + 3.0 * se, "s = {s}: {frac} vs {bound}");
    }
}

#[test]
fn time_changed_exit_law_matches_the_direct_simulation() {
    let (spec, _) = tuned();
    let start = Point::new(1.0, 0.5);
    let z0 = start.x.sqrt() * start.y;
    let n = 10_000;
    let via_z: Vec<f64> = exit_time_mc(spec, z0, n, 7, &ExitTimeOptions::default())
        .unwrap()
        .taus
        .iter()
        .map(|&tau| hat_time_from_z(start.x, tau))
        .collect();
    let direct = hat_exit_times(spec.sigma_y, spec.alpha, start, 1e-4, n, 8);
    let d = ks_two_sample(via_z, direct);
    let critical = 1.628 * (2.0 / n as f64).sqrt();
    assert!(d < critical, "KS {d} vs {critical}");
}
