use std::sync::Arc;

use lure_smo::set_valued::*;
use lure_smo::Vector;
use proptest::prelude::*;

fn vec_strategy(dim: usize, scale: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-scale..scale, dim)
}

fn cubic_map() -> SetValuedMap {
    let branch: Branch = Arc::new(|x: &Vector| x.map(|v| v + v * v * v + v.signum() * 0.5));
    SetValuedMap::custom(branch, ZeroSet::Interval { lo: -0.5, hi: 0.5 }, 2).unwrap()
}

fn ball_map() -> SetValuedMap {
    let branch: Branch = Arc::new(|x: &Vector| x * 2.0 + x / x.norm());
    SetValuedMap::custom(branch, ZeroSet::Ball { radius: 1.0 }, 3).unwrap()
}

proptest! {
    #[test]
    fn relay_selections_are_monotone(a in 0.0..10.0f64, b in 0.0..10.0f64, x in -5.0..5.0f64, y in -5.0..5.0f64) {
        let relay = SetValuedMap::relay(a, b).unwrap();
        let xs = relay.min_norm_selection(&Vector::from_element(1, x)).unwrap();
        let ys = relay.min_norm_selection(&Vector::from_element(1, y)).unwrap();
        prop_assert!((xs[0] - ys[0]) * (x - y) >= -1e-12);
    }

    #[test]
    fn any_element_at_the_branch_point_is_monotone(b in 0.0..10.0f64, y in -5.0..5.0f64, pick in 0.0..1.0f64) {
        let relay = SetValuedMap::relay(1.0, b).unwrap();
        let at_zero = -b + 2.0 * b * pick;
        prop_assert!(relay.eval(&Vector::zeros(1)).unwrap().contains(&Vector::from_element(1, at_zero), 0.0));
        let ys = relay.min_norm_selection(&Vector::from_element(1, y)).unwrap();
        prop_assert!((at_zero - ys[0]) * (0.0 - y) >= -1e-12);
    }

    #[test]
    fn sign_selections_are_monotone(x in vec_strategy(3, 5.0), y in vec_strategy(3, 5.0)) {
        let s = SetValuedMap::sign(3).unwrap();
        let (x, y) = (Vector::from_vec(x), Vector::from_vec(y));
        let g = (s.min_norm_selection(&x).unwrap() - s.min_norm_selection(&y).unwrap()).dot(&(x - y));
        prop_assert!(g >= -1e-12);
    }

    #[test]
    fn min_norm_selection_lies_in_the_set(x in vec_strategy(2, 3.0), dz in 0.0..0.5f64) {
        let map = SetValuedMap::relay_n(2.0, 1.0, 2).unwrap().with_dead_zone(dz).unwrap();
        let x = Vector::from_vec(x);
        let value = map.eval(&x).unwrap();
        prop_assert!(value.contains(&value.min_norm_element(), 1e-12));
    }

    #[test]
    fn sigmoid_stays_inside_the_unit_ball(x in vec_strategy(3, 100.0), eps in 1e-9..10.0f64) {
        let x = Vector::from_vec(x);
        for variant in [SigmoidVariant::Abs, SigmoidVariant::Sqrt] {
            let s = sign_sigmoid(&x, eps, variant).unwrap();
            prop_assert!(s.norm() < 1.0);
            // Same direction as x.
            prop_assert!(s.dot(&x) >= 0.0);
        }
    }

    #[test]
    fn sigmoid_converges_to_sign_off_the_origin(x in vec_strategy(2, 10.0)) {
        let x = Vector::from_vec(x);
        prop_assume!(x.norm() > 1e-3);
        let exact = sign_exact(&x);
        let mut last = f64::INFINITY;
        for eps in [1e-2, 1e-4, 1e-6, 1e-8] {
            let d = (sign_sigmoid(&x, eps, SigmoidVariant::Abs).unwrap() - &exact).norm();
            prop_assert!(d <= last);
            last = d;
        }
        prop_assert!(last <= 1e-8 / x.norm() + 1e-15);
    }

    #[test]
    fn guided_sign_agrees_with_sign_outside_the_guide(x in vec_strategy(3, 10.0), t in 0.0..20.0f64, k1 in 0.01..2.0f64, k2 in -3.0..3.0f64) {
        let p = GuidedSignParams::new(k1, k2, 1.0, 3.0).unwrap();
        let x = Vector::from_vec(x);
        prop_assume!(x.norm() > p.delta(t));
        prop_assert_eq!(sign_delta(t, &x, &p).unwrap(), sign_exact(&x));
    }

    #[test]
    fn guided_sign_is_continuous_at_the_guide(t in 0.0..10.0f64, m in 0.1..5.0f64, n in 0.5..5.0f64, dir in vec_strategy(2, 1.0)) {
        let p = GuidedSignParams::new(0.5, 0.0, m, n).unwrap();
        let dir = Vector::from_vec(dir);
        prop_assume!(dir.norm() > 1e-3);
        let u = &dir / dir.norm();
        let d = p.delta(t);
        let inside = sign_delta(t, &(&u * (d * (1.0 - 1e-9))), &p).unwrap();
        let outside = sign_delta(t, &(&u * (d * (1.0 + 1e-9))), &p).unwrap();
        prop_assert!((inside - outside).norm() < 1e-6);
    }

    #[test]
    fn guided_sign_is_bounded_and_aligned(x in vec_strategy(2, 2.0), t in 0.0..10.0f64) {
        let p = GuidedSignParams::new(0.5, 0.0, 1.0, 3.0).unwrap();
        let x = Vector::from_vec(x);
        let s = sign_delta(t, &x, &p).unwrap();
        prop_assert!(s.norm() <= 1.0 + 1e-15);
        prop_assert!(s.dot(&x) >= 0.0);
    }

    #[test]
    fn sign_mode_round_trips_through_text(k1 in 0.01..5.0f64, k2 in -5.0..5.0f64, eps in 1e-9..1.0f64) {
        for mode in [
            SignMode::Exact,
            SignMode::Sigmoid { eps, variant: SigmoidVariant::Sqrt },
            SignMode::Guided(GuidedSignParams::new(k1, k2, 1.0, 3.0).unwrap()),
        ] {
            prop_assert_eq!(mode.to_string().parse::<SignMode>().unwrap(), mode);
        }
    }
}

#[test]
fn every_builtin_map_kind_passes_the_sampled_monotonicity_check() {
    let maps = [
        SetValuedMap::sign(1).unwrap(),
        SetValuedMap::sign(3).unwrap(),
        SetValuedMap::relay(2.0, 5.0).unwrap(),
        SetValuedMap::relay(1.0, 0.2).unwrap(),
        SetValuedMap::relay_n(0.5, 1.0, 4).unwrap(),
        cubic_map(),
        ball_map(),
    ];
    for (k, map) in maps.iter().enumerate() {
        let gap = monotonicity_gap(map, 1000, 10.0, 7 + k as u64).unwrap();
        assert!(gap >= -1e-12, "map {k} ({map:?}) gap {gap}");
    }
}

#[test]
fn guided_sign_matches_hand_value_inside_the_guide() {
    // |x| = 0.5, delta = 1, M = 1, N = 3: 1 - 0.5 / 1.5^3.
    let p = GuidedSignParams::new(0.5, 0.0, 1.0, 3.0).unwrap();
    let s = sign_delta(0.0, &Vector::from_element(1, 0.5), &p).unwrap();
    assert!((s[0] - (1.0 - 0.5 / 3.375)).abs() < 1e-15);
    assert_eq!(sign_delta(0.0, &Vector::zeros(2), &p).unwrap(), Vector::zeros(2));
}
