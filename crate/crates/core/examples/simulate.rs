//! Integrate the model for one gain vector and compare the zero-gain run
//! with the closed-form step response.
//!
//! ```text
//! cargo run --example simulate -- 3 4 5 6
//! ```

use freqstab::criteria::{evaluate_trajectory, CriteriaSet};
use freqstab::dynamics::{steady_state_exact, StepResponse};
use freqstab::ode::{convergence_probe, integrate, IntegrateOptions, Integrator};
use freqstab::{GainVector, SystemParams};

fn main() -> freqstab::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let theta = match args.as_slice() {
        [a, b, c, d] => GainVector::new(*a, *b, *c, *d),
        _ => GainVector::ZERO,
    };
    let p = SystemParams::default();

    let traj = integrate(&theta, &p, &IntegrateOptions::augmented())?
        .into_trajectory()
        .expect("full storage");
    let report = evaluate_trajectory(&traj, &p, CriteriaSet::ALL)?;
    println!("theta = {:?}", theta.to_array());
    println!("{} grid points, t_end = {} s", traj.len(), traj.final_time());
    println!(
        "rocof {:+.5} Hz/s at t={:.3}  nadir {:+.5} Hz at t={:.3}  ss {:+.5} Hz",
        report.rocof_hz_s, report.critical.t_rocof, report.nadir_hz, report.critical.t_nadir, report.ss_hz
    );
    println!("label {}  (enabled: {:?})", report.label, report.enabled.iter().collect::<Vec<_>>());
    println!("equilibrium {:+.6} Hz", steady_state_exact(&theta, &p)? * p.f_base);

    let t = traj.tangents.as_ref().expect("augmented run");
    let end = t.last().unwrap();
    println!("d omega(T)/dK = {:?}", end[0]);

    // zero gains: linear system with a known solution
    let exact = StepResponse::new(&p)?;
    let zero = integrate(&GainVector::ZERO, &p, &IntegrateOptions::states_only())?
        .into_trajectory()
        .unwrap();
    let max_err = zero
        .times
        .iter()
        .zip(&zero.states)
        .map(|(&t, s)| (s.x1 - exact.at(t).x1).abs())
        .fold(0.0, f64::max);
    println!(
        "\nK = 0: wn = {:.5} rad/s, zeta = {:.5}, max |euler - exact| = {:.3e} p.u.",
        exact.natural_freq, exact.damping_ratio, max_err
    );

    let probe = p.with_grid(1e-3, 20.0);
    for integrator in [Integrator::Euler, Integrator::Rk4] {
        let rep = convergence_probe(&probe, &[4e-3, 2e-3, 1e-3], 0, integrator)?;
        println!("{integrator:?}: observed order {:.3}  errors {:?}", rep.order, rep.errors);
    }
    Ok(())
}
