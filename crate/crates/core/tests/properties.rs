use freqstab::criteria::{label_one, CriteriaSet};
use freqstab::dynamics::{discriminant, initial_state, initial_tangents, linearize, rhs, validate_gains};
use freqstab::ode::{integrate, integrate_directional, IntegrateOptions};
use freqstab::sensitivity::{extract_gradients, Direction};
use freqstab::surgery::{dot, norm, project_if_conflicting, surgery, ProjectionForm};
use freqstab::{GainVector, State, SystemParams};
use proptest::prelude::*;

fn coarse() -> SystemParams {
    SystemParams::default().with_grid(1e-2, 10.0)
}

fn gains(scale: f64) -> impl Strategy<Value = GainVector> {
    prop::array::uniform4(-scale..scale).prop_map(GainVector::from_array)
}

fn vec4() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-10.0..10.0f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn initial_rate_solves_the_quadratic(k12 in -75.0..500.0f64) {
        let p = SystemParams::default();
        let theta = GainVector::new(0.0, k12, 0.0, 0.0);
        let w = initial_state(&theta, &p).unwrap().x2;
        let residual = k12 * w * w - p.m0 * w + p.delta_p;
        prop_assert!(residual.abs() <= 1e-12, "residual {residual}");
        prop_assert!(w <= 0.0);
    }

    #[test]
    fn infeasible_gains_are_rejected(k12 in -500.0..-75.5f64) {
        let p = SystemParams::default();
        let theta = GainVector::new(0.0, k12, 0.0, 0.0);
        prop_assert!(discriminant(&theta, &p) < 0.0);
        prop_assert!(!validate_gains(&theta, &p).feasible);
        prop_assert!(initial_state(&theta, &p).is_err());
    }

    #[test]
    fn initial_tangent_matches_difference_quotient(k12 in -60.0..400.0f64) {
        let p = SystemParams::default();
        let theta = GainVector::new(0.0, k12, 0.0, 0.0);
        let h = 1e-5;
        let w = |k: f64| initial_state(&GainVector::new(0.0, k, 0.0, 0.0), &p).unwrap().x2;
        let fd = (w(k12 + h) - w(k12 - h)) / (2.0 * h);
        let exact = initial_tangents(&theta, &p).unwrap()[1][1];
        prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1e-9));
    }

    #[test]
    fn jacobians_match_finite_differences(theta in gains(30.0), x1 in -0.01..0.01f64, x2 in -0.02..0.02f64) {
        let p = SystemParams::default();
        let x = State::new(x1, x2);
        let lin = linearize(&x, &theta, &p, 0.0).unwrap();
        let h = 1e-7;
        for j in 0..2 {
            let mut xp = x;
            let mut xm = x;
            if j == 0 { xp.x1 += h; xm.x1 -= h; } else { xp.x2 += h; xm.x2 -= h; }
            let (fp, fm) = (rhs(&xp, &theta, &p).unwrap(), rhs(&xm, &theta, &p).unwrap());
            for (r, (a, b)) in [(fp.x1, fm.x1), (fp.x2, fm.x2)].into_iter().enumerate() {
                let fd = (a - b) / (2.0 * h);
                prop_assert!((fd - lin.jac_x[r][j]).abs() <= 1e-6 * (1.0 + fd.abs()), "dx r{r} c{j}: {fd} vs {}", lin.jac_x[r][j]);
            }
        }
        let h = 1e-5;
        for i in 0..4 {
            let a = theta.to_array()[i];
            let fp = rhs(&x, &theta.with_component(i, a + h), &p).unwrap();
            let fm = rhs(&x, &theta.with_component(i, a - h), &p).unwrap();
            let fd = (fp.x2 - fm.x2) / (2.0 * h);
            prop_assert!((fd - lin.jac_theta[1][i]).abs() <= 1e-7 * (1.0 + fd.abs()));
            prop_assert_eq!(lin.jac_theta[0][i], 0.0);
        }
    }

    #[test]
    fn directions_are_mirror_images(theta in gains(40.0)) {
        let p = coarse();
        prop_assume!(validate_gains(&theta, &p).feasible);
        let Ok(out) = integrate(&theta, &p, &IntegrateOptions::augmented().streaming()) else { return Ok(()) };
        let s = out.summary();
        let up = extract_gradients(&s, Direction::Destabilize).unwrap();
        let down = extract_gradients(&s, Direction::Stabilize).unwrap();
        for i in 0..4 {
            prop_assert_eq!(up.rocof[i], -down.rocof[i]);
            prop_assert_eq!(up.nadir[i], -down.nadir[i]);
            prop_assert_eq!(up.ss[i], -down.ss[i]);
        }
    }

    #[test]
    fn tangents_are_linear_in_the_direction(theta in gains(30.0), v in vec4()) {
        let p = coarse();
        prop_assume!(validate_gains(&theta, &p).feasible);
        let Ok(out) = integrate(&theta, &p, &IntegrateOptions::augmented()) else { return Ok(()) };
        let traj = out.into_trajectory().unwrap();
        let dir = integrate_directional(&theta, &p, &v).unwrap();
        let tangents = traj.tangents.unwrap();
        for (s, t) in dir.iter().zip(&tangents) {
            for (r, got) in [s.x1, s.x2].into_iter().enumerate() {
                let want: f64 = (0..4).map(|i| t[r][i] * v[i]).sum();
                prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn streaming_matches_full_storage(theta in gains(40.0)) {
        let p = coarse();
        prop_assume!(validate_gains(&theta, &p).feasible);
        let full = integrate(&theta, &p, &IntegrateOptions::augmented());
        let stream = integrate(&theta, &p, &IntegrateOptions::augmented().streaming());
        match (full, stream) {
            (Ok(f), Ok(s)) => prop_assert_eq!(f.summary(), s.summary()),
            (Err(a), Err(b)) => prop_assert_eq!(a, b),
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
    }

    #[test]
    fn criteria_are_continuous_in_the_gains(theta in gains(30.0), v in vec4()) {
        let p = coarse();
        prop_assume!(validate_gains(&theta, &p).feasible);
        let nudged = theta.axpy(1e-9, &v);
        let (Ok(a), Ok(b)) = (label_one(&theta, &p, CriteriaSet::ALL), label_one(&nudged, &p, CriteriaSet::ALL)) else {
            return Ok(());
        };
        prop_assert!((a.rocof_hz_s - b.rocof_hz_s).abs() < 1e-5);
        prop_assert!((a.nadir_hz - b.nadir_hz).abs() < 1e-5);
        prop_assert!((a.ss_hz - b.ss_hz).abs() < 1e-5);
    }

    #[test]
    fn projection_removes_the_conflict(g in vec4(), t in vec4()) {
        prop_assume!(norm(&t) > 1e-3);
        let mut h = g;
        let conflicted = project_if_conflicting(&mut h, &t, ProjectionForm::Orthogonal);
        prop_assert_eq!(conflicted, dot(&g, &t) < 0.0);
        if conflicted {
            prop_assert!(dot(&h, &t).abs() <= 1e-12 * norm(&g) * norm(&t));
        } else {
            prop_assert_eq!(h, g);
        }
    }

    #[test]
    fn agreeing_gradients_just_add(g in prop::collection::vec(prop::array::uniform4(0.0..5.0f64), 1..4)) {
        let out = surgery(&g, None, ProjectionForm::Orthogonal).unwrap();
        let mut sum = [0.0; 4];
        for v in &g {
            for i in 0..4 {
                sum[i] += v[i];
            }
        }
        prop_assert_eq!(out, sum);
    }

    #[test]
    fn surgery_of_one_is_identity(g in vec4(), seed in any::<u64>()) {
        prop_assert_eq!(surgery(&[g], Some(seed), ProjectionForm::Orthogonal).unwrap(), g);
    }
}

#[test]
fn sign_of_load_step_mirrors_zero_gain_trajectory() {
    let p = coarse();
    let mut q = p;
    q.delta_p = -p.delta_p;
    let a = integrate(&GainVector::ZERO, &p, &IntegrateOptions::states_only())
        .unwrap()
        .into_trajectory()
        .unwrap();
    let b = integrate(&GainVector::ZERO, &q, &IntegrateOptions::states_only())
        .unwrap()
        .into_trajectory()
        .unwrap();
    for (x, y) in a.states.iter().zip(&b.states) {
        assert_eq!(x.x1, -y.x1);
        assert_eq!(x.x2, -y.x2);
    }
    let la = label_one(&GainVector::ZERO, &p, CriteriaSet::ALL).unwrap();
    let lb = label_one(&GainVector::ZERO, &q, CriteriaSet::ALL).unwrap();
    assert_eq!(la.label, lb.label);
    assert_eq!(la.nadir_hz, -lb.nadir_hz);
}
