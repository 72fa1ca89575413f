mod common;

use std::sync::Arc;

use common::*;
use lure_smo::config::{self, bundled};
use lure_smo::lure_model::{LipschitzBounds, Nonlinearities};
use lure_smo::observer_design::ObserverGains;
use lure_smo::set_valued::{sign_exact, GuidedSignParams, SigmoidVariant, SignMode};
use lure_smo::simulate::*;
use lure_smo::{Error, Matrix, Vector};

fn bounds() -> LipschitzBounds {
    LipschitzBounds::new(0.8, 3.0, 3.0, Some(3.0)).unwrap()
}

fn smooth_gains() -> ObserverGains {
    example2().1
}

fn error_cfg(t_end: f64, h: f64) -> SimConfig {
    SimConfig::new(0.0, t_end, h).unwrap().with_coordinates(Coordinates::Error)
}

#[test]
fn identical_initial_states_stay_synchronized() {
    let sys = smooth_example2();
    let nl = Nonlinearities { theta: Arc::new(|_: f64, _: &Vector, _: &Vector| Vector::zeros(1)), ..sys.nonlinearities().clone() };
    let sys = sys.with_nonlinearities(nl).unwrap();
    let x0 = example2_x0();
    let tr = simulate_bounded_h(&sys, &smooth_gains(), &bounds(), &error_cfg(60.0, 1e-3), &x0, &x0).unwrap();
    assert!(tr.e_norm.iter().all(|e| *e == 0.0));
    // Plant coordinates, short enough to stay below the blow-up guard.
    let cfg = SimConfig::new(0.0, 2.0, 1e-3).unwrap();
    let tr = simulate_bounded_h(&sys, &smooth_gains(), &bounds(), &cfg, &x0, &x0).unwrap();
    assert!(tr.e_norm.iter().all(|e| *e == 0.0));
}

#[test]
fn plant_coordinates_hit_the_blow_up_guard_on_example2() {
    let (def, gains) = example2();
    let cfg = SimConfig::new(0.0, 60.0, 1e-3).unwrap();
    let r = simulate_bounded_h(&def.system, &gains, &def.bounds, &cfg, &example2_x0(), &example2_xhat0());
    match r {
        Err(Error::BlowUp { time, .. }) => assert!(time > 1.0 && time < 10.0, "time {time}"),
        other => panic!("expected blow-up, got {:?}", other.map(|t| t.len())),
    }
}

#[test]
fn plant_and_error_coordinates_agree_on_a_stable_system() {
    let (sys, gains) = stable_system();
    let b = LipschitzBounds::new(0.2, 1.0, 0.5, Some(1.0)).unwrap();
    let mode = SignMode::Sigmoid { eps: 1e-2, variant: SigmoidVariant::Abs };
    let base = SimConfig::new(0.0, 10.0, 1e-3).unwrap().with_sign_mode(mode);
    let x0 = Vector::from_row_slice(&[1.0, -1.0]);
    let xh0 = Vector::from_row_slice(&[-2.0, 3.0]);
    let plant = simulate_full(&sys, &gains, &b, &base, &x0, &xh0).unwrap();
    let error = simulate_full(&sys, &gains, &b, &base.with_coordinates(Coordinates::Error), &x0, &xh0).unwrap();
    assert_eq!(plant.len(), error.len());
    for k in 0..plant.len() {
        assert!((&plant.x_hat[k] - &error.x_hat[k]).norm() < 1e-10, "k {k}");
        assert!((plant.e_norm[k] - error.e_norm[k]).abs() < 1e-10);
    }
}

#[test]
fn lyapunov_function_decreases_and_envelope_tightens() {
    let sys = smooth_example2();
    let gains = smooth_gains();
    let rate = 0.1;
    let alpha_max = 1.0;
    let injection_gain = gains.beta * 1.0;
    let mut tails = Vec::new();
    for h in [1e-3, 5e-4] {
        let tr = simulate_bounded_h(&sys, &gains, &bounds(), &error_cfg(20.0, h), &example2_x0(), &example2_xhat0()).unwrap();
        let reach = first_crossing(&tr, Series::OutputErrorNorm, 1e-3).unwrap().unwrap();
        // Once e_y chatters, one explicit step of the discontinuous
        // injection can overshoot by O(h^2).
        let overshoot = alpha_max * (2.0 * injection_gain * h).powi(2);
        for k in 0..tr.len() - 1 {
            let guard = if tr.times[k] < reach { 0.0 } else { overshoot };
            assert!(tr.v[k + 1] <= tr.v[k] * (1.0 + 10.0 * h * rate) + guard, "h {h} k {k}: {} -> {}", tr.v[k], tr.v[k + 1]);
        }
        for k in 0..tr.len() {
            assert!(tr.e_norm[k] <= 1.05 * 994f64.sqrt() * (-rate * tr.times[k]).exp());
        }
        tails.push(tr.e_norm[tr.len() / 2..].iter().copied().fold(0.0, f64::max));
    }
    assert!(tails[1] <= 0.75 * tails[0], "{tails:?}");
}

#[test]
fn euler_and_rk4_agree_to_first_order() {
    let (sys, gains) = stable_system();
    let b = LipschitzBounds::new(0.2, 1.0, 0.5, Some(1.0)).unwrap();
    let mode = SignMode::Sigmoid { eps: 0.5, variant: SigmoidVariant::Sqrt };
    let x0 = Vector::from_row_slice(&[1.0, -1.0]);
    let xh0 = Vector::from_row_slice(&[-2.0, 3.0]);
    let gap = |h: f64| {
        let cfg = SimConfig::new(0.0, 2.0, h).unwrap().with_sign_mode(mode);
        let e = simulate_full(&sys, &gains, &b, &cfg, &x0, &xh0).unwrap();
        let r = simulate_full(&sys, &gains, &b, &cfg.with_scheme(Scheme::Rk4), &x0, &xh0).unwrap();
        (0..e.len()).map(|k| (&e.x_hat[k] - &r.x_hat[k]).norm().max((&e.x[k] - &r.x[k]).norm())).fold(0.0, f64::max)
    };
    let (g1, g2) = (gap(1e-2), gap(5e-3));
    let ratio = g1 / g2;
    assert!(g1 < 0.1 && (1.7..=2.3).contains(&ratio), "gaps {g1} {g2}");
}

#[test]
fn sign_system_matches_a_hand_written_euler_loop() {
    let p = GuidedSignParams::new(0.5, 0.0, 1.0, 3.0).unwrap();
    let cfg = SimConfig::new(0.0, 5.0, 1e-3).unwrap().with_sign_mode(SignMode::Guided(p));
    let drift = |_: f64, x: &Vector| x.map(|v| 3.0 * v.sin());
    let tr = simulate_sign_system(drift, 4.0, &cfg, &Vector::from_element(1, 0.1)).unwrap();
    let mut x = 0.1_f64;
    for k in 0..tr.times.len() {
        // Inside the guide the realization cancels two terms near 1, so
        // only absolute agreement is meaningful.
        assert!((tr.x[k][0] - x).abs() <= 1e-13, "k {k}");
        let t = k as f64 * 1e-3;
        let delta = (-0.5 * t).exp();
        let s = if x == 0.0 {
            0.0
        } else if x.abs() > delta {
            x.signum()
        } else {
            (1.0 - (1.0 - x.abs() / delta) / (1.0 + x.abs()).powi(3)) * x.signum()
        };
        x += 1e-3 * (3.0 * x.sin() - 4.0 * s);
    }
}

#[test]
fn guided_injection_is_exact_sign_outside_the_guide() {
    let (def, gains) = example2();
    let p = GuidedSignParams::new(0.1, -2.5, 1.0, 3.0).unwrap();
    let cfg = error_cfg(10.0, 1e-3).with_sign_mode(SignMode::Guided(p));
    let tr = simulate_bounded_h(&def.system, &gains, &def.bounds, &cfg, &example2_x0(), &example2_xhat0()).unwrap();
    let mut outside = 0;
    for k in 0..tr.len() {
        if tr.ey_norm[k] > p.delta(tr.times[k]) {
            outside += 1;
            assert_eq!(tr.injection[k], sign_exact(&tr.ey[k]));
        }
    }
    assert!(tr.ey_norm[0] <= p.delta(0.0));
    let _ = outside;
}

fn reduced() -> (lure_smo::lure_model::DecomposedSystem, lure_smo::observer_design::ReducedGains, LipschitzBounds, Vector, Vector) {
    let def = config::parse_system(bundled::REDUCED_SYSTEM).unwrap();
    let (q, rg) = config::parse_gains(bundled::REDUCED_GAINS).unwrap().reduced.unwrap();
    let init = def.initial.clone().unwrap();
    (def.system.decompose(q).unwrap(), rg, def.bounds, Vector::from_vec(init.x0), Vector::from_vec(init.zhat0.unwrap()))
}

#[test]
fn reduced_error_decays_within_its_envelope() {
    let (dec, rg, b, x0, zhat0) = reduced();
    let h = 1e-3;
    let (slope, offset) = (1.0, 0.2);
    for coords in [Coordinates::Plant, Coordinates::Error] {
        let cfg = SimConfig::new(0.0, 30.0, h).unwrap().with_coordinates(coords);
        let tr = simulate_reduced(&dec, &rg, &b, &cfg, &x0, &zhat0).unwrap();
        let q_max = rg.q_mat.symmetric_eigenvalues().max();
        let q_min = rg.q_mat.symmetric_eigenvalues().min();
        let rate = rg.epsilon / (2.0 * q_max);
        let bz = (&dec.b2 + rg.k() * &dec.b1).norm();
        let az = (&dec.a22 + rg.k() * &dec.a12).norm();
        let c2 = dec.c2.norm();
        for k in 0..tr.len() {
            let bound = (q_max / q_min).sqrt() * tr.ez_norm[0] * (-rate * tr.times[k]).exp();
            assert!(tr.ez_norm[k] <= bound * (1.0 + 1e-6));
            if k + 1 == tr.len() {
                continue;
            }
            let same_branch = tr.omega[k][0].signum() == tr.omega_hat[k][0].signum();
            if same_branch {
                // x_hat is rebuilt from O(1) states, so e_z is resolved only
                // down to a few ulps.
                assert!(tr.wq[k + 1].sqrt() <= tr.wq[k].sqrt() + 1e-15, "{coords:?} k {k}: {} -> {} ez {}", tr.wq[k], tr.wq[k + 1], tr.ez_norm[k]);
            } else {
                // Plant and observer on opposite relay branches for one step.
                let grow = 1.0 + h * (az + slope * bz * c2);
                let kick = 2.0 * offset * h * bz;
                assert!(tr.ez_norm[k + 1] <= tr.ez_norm[k] * grow + kick * (1.0 + 1e-9), "{coords:?} k {k}");
            }
        }
        assert!(*tr.x2_err_norm.last().unwrap() <= 1e-3);
    }
}

#[test]
fn reduced_observer_started_on_the_true_state_stays_on_it() {
    let (dec, rg, b, x0, _) = reduced();
    let (x1, x2) = dec.split(&x0);
    let z0 = &x2 + rg.k() * &x1;
    let cfg = SimConfig::new(0.0, 30.0, 1e-3).unwrap();
    let tr = simulate_reduced(&dec, &rg, &b, &cfg.with_coordinates(Coordinates::Error), &x0, &z0).unwrap();
    assert!(tr.ez_norm.iter().all(|e| *e == 0.0));
    // In plant coordinates the two sides round differently.
    let tr = simulate_reduced(&dec, &rg, &b, &cfg, &x0, &z0).unwrap();
    assert!(tr.ez_norm.iter().all(|e| *e <= 1e-15));
}

#[test]
fn reduced_strict_mode_refuses_failing_designs() {
    let (dec, rg, b, x0, zhat0) = reduced();
    let rg = rg.with_epsilon(4.0).unwrap();
    let cfg = SimConfig::new(0.0, 1.0, 1e-3).unwrap();
    assert!(matches!(simulate_reduced(&dec, &rg, &b, &cfg, &x0, &zhat0), Err(Error::Precondition(_))));
}

#[test]
fn runs_are_bit_identical() {
    let (def, gains) = example2();
    let cfg = error_cfg(5.0, 1e-3);
    let a = simulate_bounded_h(&def.system, &gains, &def.bounds, &cfg, &example2_x0(), &example2_xhat0()).unwrap();
    let b = simulate_bounded_h(&def.system, &gains, &def.bounds, &cfg, &example2_x0(), &example2_xhat0()).unwrap();
    assert_eq!(a, b);
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.write_csv(&mut ca).unwrap();
    b.write_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn gain_preconditions_are_enforced_in_strict_mode() {
    let (def, gains) = example2();
    let weak = gains.with_beta(2.0).unwrap();
    let cfg = error_cfg(1.0, 1e-3);
    assert!(matches!(
        simulate_full(&def.system, &weak, &def.bounds, &cfg, &example2_x0(), &example2_xhat0()),
        Err(Error::Precondition(_))
    ));
    assert!(matches!(
        simulate_bounded_h(&def.system, &weak, &def.bounds, &cfg, &example2_x0(), &example2_xhat0()),
        Err(Error::Precondition(_))
    ));
    assert!(simulate_bounded_h(&def.system, &weak, &def.bounds, &cfg.with_strict(false), &example2_x0(), &example2_xhat0()).is_ok());
}

#[test]
fn trajectory_metrics_on_simple_series() {
    let tr = SignTrajectory {
        times: (0..11).map(|k| k as f64 * 0.1).collect(),
        x: (0..11).map(|k| Vector::from_element(1, if k < 5 { 1.0 } else { 0.0 })).collect(),
        injection: vec![Vector::zeros(1); 11],
    };
    assert_eq!(chattering_index(&tr, Series::State(0), 0.5).unwrap().switch_count, 0);
    assert_eq!(convergence_time(&tr, Series::State(0), 1e-3).unwrap(), Some(0.5));
    assert_eq!(convergence_time(&tr, Series::Injection(0), 1e-3).unwrap(), Some(0.0));
    let growing = SignTrajectory {
        times: tr.times.clone(),
        x: (0..11).map(|k| Vector::from_element(1, (k as f64).exp())).collect(),
        injection: tr.injection.clone(),
    };
    assert_eq!(convergence_time(&growing, Series::State(0), 1e-3).unwrap(), None);
    let _ = Matrix::zeros(1, 1);
}
