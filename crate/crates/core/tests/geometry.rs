use proptest::prelude::*;
use superlyap::geometry::{
    contains, det_flow, orbit_circle, return_time, scale, to_reference, Flow, Region, ScalingMap,
};
use superlyap::rng::NoiseStream;
use superlyap::Point;

fn rk4(z0: Point, t: f64, h: f64) -> Point {
    let f = |z: Point| Point::new(z.x * z.x - z.y * z.y, 2.0 * z.x * z.y);
    let add = |a: Point, b: Point, s: f64| Point::new(a.x + s * b.x, a.y + s * b.y);
    let n = (t / h).ceil() as usize;
    let h = t / n as f64;
    let mut z = z0;
    for _ in 0..n {
        let k1 = f(z);
        let k2 = f(add(z, k1, h / 2.0));
        let k3 = f(add(z, k2, h / 2.0));
        let k4 = f(add(z, k3, h));
        z = Point::new(
            z.x + h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
            z.y + h / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
        );
    }
    z
}

fn rel_err(a: Point, b: Point) -> f64 {
    a.dist(b) / b.norm().max(1e-300)
}

#[test]
fn closed_form_flow_matches_rk4_on_random_starts() {
    let mut s = NoiseStream::new(11, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let z0 = Point::new(4.0 * s.uniform() - 2.0, (0.3 + 1.7 * s.uniform()).copysign(s.uniform() - 0.5));
        let t = s.uniform();
        let exact = det_flow(z0, t).state().expect("off the axis the flow is global");
        worst = worst.max(rel_err(rk4(z0, t, 1e-4), exact));
    }
    assert!(worst <= 1e-6, "worst relative error {worst:e}");
}

#[test]
fn blow_up_time_on_positive_axis() {
    for k in 1..=20 {
        let x0 = 0.25 * k as f64;
        match det_flow(Point::new(x0, 0.0), 2.0 / x0) {
            Flow::BlowUp { time } => assert!((time - 1.0 / x0).abs() <= 1e-8),
            other => panic!("expected blow-up from x0 = {x0}, got {other:?}"),
        }
        // Just before the singularity the numerical solution follows x0/(1 − x0 t).
        let t = (1.0 - 1e-3) / x0;
        let z = rk4(Point::new(x0, 0.0), t, 1e-5 / x0);
        let exact = det_flow(Point::new(x0, 0.0), t).state().unwrap();
        assert!(rel_err(z, exact) < 1e-6, "x0 = {x0}: {z} vs {exact}");
        assert!((exact.x - 1e3 * x0).abs() < 1e-6 * exact.x);
    }
}

#[test]
fn orbits_stay_on_their_circle() {
    let mut s = NoiseStream::new(12, 0);
    for _ in 0..200 {
        let z0 = Point::new(10.0 * s.uniform() - 5.0, 10.0 * s.uniform() - 5.0);
        let c = orbit_circle(z0).unwrap();
        for t in [0.01, 0.1, 1.0, 10.0] {
            let z = det_flow(z0, t).state().unwrap();
            let d = z.x * z.x + (z.y - c.center.y).powi(2) - c.radius * c.radius;
            assert!(d.abs() <= 1e-8 * c.radius.max(1.0).powi(2), "{z0} t={t}: {d:e}");
        }
    }
}

#[test]
fn orbits_decay_to_origin() {
    let mut s = NoiseStream::new(13, 0);
    for _ in 0..100 {
        let z0 = Point::new(20.0 * s.uniform() - 10.0, 20.0 * s.uniform() - 10.0);
        let scale = 1.0 / orbit_circle(z0).unwrap().radius;
        let radii: Vec<f64> = [10.0, 100.0, 1000.0]
            .iter()
            .map(|k| det_flow(z0, k / scale).state().unwrap().norm())
            .collect();
        assert!(radii[0] > radii[1] && radii[1] > radii[2], "{z0}: {radii:?}");
        assert!(radii[2] < 1e-2 / scale);
    }
}

#[test]
fn return_time_obeys_two_over_r() {
    let mut s = NoiseStream::new(14, 0);
    let mut checked = 0;
    while checked < 500 {
        let z0 = Point::new(200.0 * s.uniform() - 100.0, 200.0 * s.uniform() - 100.0);
        let r = 0.1 + 5.0 * s.uniform();
        if z0.on_positive_axis() {
            assert!(return_time(z0, r).is_err());
            continue;
        }
        let t = return_time(z0, r).unwrap();
        assert!(t <= 2.0 / r + 1e-10, "{z0} r={r}: {t}");
        let z = det_flow(z0, t).state().unwrap();
        assert!(z.norm() <= r * (1.0 + 1e-8));
        checked += 1;
    }
}

#[test]
fn flow_is_a_semigroup() {
    let z0 = Point::new(-1.3, 0.7);
    let a = det_flow(det_flow(z0, 0.4).state().unwrap(), 0.9).state().unwrap();
    let b = det_flow(z0, 1.3).state().unwrap();
    assert!(rel_err(a, b) < 1e-14);
}

fn far_from_p_boundary(p: f64, x0: f64, y0: f64, z: Point) -> bool {
    let lhs = z.x.abs().powf(p) * z.y.abs();
    let rhs = x0.powf(p) * y0;
    (lhs - rhs).abs() > 1e-9 * rhs && (z.x.abs() - x0).abs() > 1e-9 * x0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn p_sets_are_scaling_equivariant(
        p in -2.0f64..2.0,
        x0 in 0.1f64..5.0,
        y0 in 0.1f64..5.0,
        x in -20.0f64..20.0,
        y in -20.0f64..20.0,
        ell in 0.05f64..20.0,
        plus in any::<bool>(),
    ) {
        let z = Point::new(x, y);
        prop_assume!(far_from_p_boundary(p, x0, y0, z));
        let region = |x0: f64, y0: f64| if plus {
            Region::Pplus { p, x0, y0 }
        } else {
            Region::Pminus { p, x0, y0 }
        };
        let (w, _) = scale(ScalingMap::s2(ell), z, 1.0);
        prop_assert_eq!(contains(&region(x0, y0), z), contains(&region(ell * x0, ell * y0), w));
        let (u, _) = scale(ScalingMap::s1(ell), z, 1.0);
        prop_assert_eq!(contains(&region(x0, y0), z), contains(&region(ell * x0, y0 / ell.sqrt()), u));
    }

    #[test]
    fn reference_decomposition_round_trips(
        alpha in 0.5f64..10.0,
        x in -1e4f64..1e4,
        y in -1e3f64..1e3,
    ) {
        let z = Point::new(x, y);
        for region in [
            Region::R3 { alpha },
            Region::R2sub1 { alpha },
            Region::R2sub2 { alpha },
            Region::R1 { alpha },
        ] {
            if !contains(&region, z) {
                prop_assert!(to_reference(&region, z).is_err());
                continue;
            }
            let d = to_reference(&region, z).unwrap();
            let (back, _) = d.reconstruct();
            prop_assert!(back.dist(z) <= 1e-12 * z.norm(), "{:?}: {} vs {}", region, back, z);
        }
    }

    #[test]
    fn s1_and_s2_compose_with_their_inverse(x in -50.0f64..50.0, y in -50.0f64..50.0, ell in 0.01f64..100.0) {
        let z = Point::new(x, y);
        for map in [ScalingMap::s1(ell), ScalingMap::s2(ell)] {
            let inv = ScalingMap { ell: 1.0 / ell, ..map };
            let (w, lam) = scale(map, z, 0.3);
            let (back, lam_back) = scale(inv, w, lam);
            prop_assert!(back.dist(z) <= 1e-13 * z.norm().max(1.0));
            prop_assert!((lam_back - 0.3).abs() <= 1e-13);
        }
    }
}
