use proptest::prelude::*;
use superlyap::generator::{apply, margin_of_jet, OperatorKind};
use superlyap::geometry::{scale, Point, Region, ScalingMap};
use superlyap::lyapunov::{choose_alpha, v1, v2, v3, EvalJet, TuningOptions};
use superlyap::sde::ModelParams;

fn jet() -> impl Strategy<Value = EvalJet> {
    prop::array::uniform6(-1e3f64..1e3).prop_map(|a| EvalJet { v: a[0], dx: a[1], dy: a[2], dxx: a[3], dyy: a[4], dxy: a[5] })
}

fn op() -> impl Strategy<Value = OperatorKind> {
    prop_oneof![
        Just(OperatorKind::FullL),
        Just(OperatorKind::DiffusiveA),
        Just(OperatorKind::TransportT),
        (0.0f64..2.0).prop_map(OperatorKind::TransportTLambda),
    ]
}

proptest! {
    #[test]
    fn operators_are_linear(a in jet(), b in jet(), c in -10.0f64..10.0, x in -50.0f64..50.0, y in -50.0f64..50.0, op in op()) {
        let p = ModelParams::new(0.7, 1.3);
        let z = Point::new(x, y);
        let lhs = apply(op, &p, &(a + b.scale(c)), z);
        let rhs = apply(op, &p, &a, z) + c * apply(op, &p, &b, z);
        let size = apply(op, &p, &a, z).abs() + (c * apply(op, &p, &b, z)).abs() + 1.0;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * size);
    }
}

#[test]
fn lower_order_terms_fade_along_the_diffusive_ray() {
    let c = choose_alpha(0.2, 1.0, 1.0, &TuningOptions::default()).unwrap();
    let (spec, g) = (c.spec, c.g);
    let p = ModelParams::from_spec(&spec);
    for b in [0.0, 0.4, -0.8] {
        let ratios: Vec<f64> = [1e2, 1e3, 1e4]
            .iter()
            .map(|&ell| {
                let (z, _) = scale(ScalingMap::s1(ell), Point::new(2.0 * spec.alpha, b), 1.0);
                let j = v3(&spec, &g, z).unwrap();
                let full = apply(OperatorKind::FullL, &p, &j, z);
                let a = apply(OperatorKind::DiffusiveA, &p, &j, z);
                ((full - a) / a).abs()
            })
            .collect();
        assert!(ratios[0] > ratios[1] && ratios[1] > ratios[2], "b = {b}: {ratios:?}");
        assert!(ratios[2] < 1e-3);
    }
}

#[test]
fn transport_operator_scales_with_its_argument() {
    let c = choose_alpha(0.2, 0.0, 1.0, &TuningOptions::default()).unwrap();
    let spec = c.spec;
    let p = ModelParams::from_spec(&spec);
    let dh = spec.delta_hat();
    for &(x, y, lambda) in &[(2.0, 1.0, 0.125), (5.0, -0.3, 0.01), (0.7, 2.0, 0.9)] {
        for ell in [0.5, 2.0, 7.0] {
            let z = Point::new(x, y);
            let (w, lw) = scale(ScalingMap::s1(ell), z, lambda);
            if lw > 1.0 {
                continue;
            }
            let at_w = apply(OperatorKind::TransportTLambda(lw), &p, &v2(&spec, w, lw).unwrap(), w);
            let at_z = apply(OperatorKind::TransportTLambda(lambda), &p, &v2(&spec, z, lambda).unwrap(), z);
            let expect = ell.powf(dh + 1.0) * at_z;
            assert!((at_w - expect).abs() <= 1e-10 * expect.abs(), "{z} ell={ell}: {at_w} vs {expect}");
        }
    }
}

#[test]
fn priming_piece_decays_at_rate_m1_far_out() {
    let c = choose_alpha(0.2, 1.0, 1.0, &TuningOptions::default()).unwrap();
    let spec = c.spec;
    let m1 = spec.m1();
    let region = Region::R1 { alpha: spec.alpha };
    let mut checked = 0;
    for k in 0..40 {
        let r = 1e2 * 10f64.powf(k as f64 / 10.0);
        for j in 0..41 {
            let th = std::f64::consts::PI + (2.0 / spec.alpha).atan() * (j as f64 / 20.0 - 1.0);
            let z = Point::new(r * th.cos(), r * th.sin());
            if !region.contains(z) {
                continue;
            }
            let m = margin_of_jet(&spec, &v1(&spec, z).unwrap(), z, m1, 0.0);
            assert!(m >= 0.0, "{z}: {m}");
            checked += 1;
        }
    }
    assert!(checked > 1000);
}

#[test]
fn margin_is_monotone_in_m_and_vacuous_for_huge_b() {
    let c = choose_alpha(0.2, 1.0, 1.0, &TuningOptions::default()).unwrap();
    let spec = c.spec;
    let z = Point::new(-40.0, 7.0);
    let j = v1(&spec, z).unwrap();
    assert!(j.v >= 1.0);
    assert!(margin_of_jet(&spec, &j, z, 2.0, 0.0) <= margin_of_jet(&spec, &j, z, 1.0, 0.0));
    assert!(margin_of_jet(&spec, &j, z, 1.0, 1e308) > 0.0);
}
