//! Tangent gradients against finite differences, including the forward
//! scheme at a step so small that round-off dominates.

use freqstab::ode::{integrate, IntegrateOptions};
use freqstab::sampler::generate_initial;
use freqstab::sensitivity::{
    extract_gradients, finite_diff_gradients, max_abs_pct_error, Direction, Epsilon, FdScheme,
};
use freqstab::{Criterion, SystemParams};

fn main() -> freqstab::Result<()> {
    let p = SystemParams::default();
    let thetas = generate_initial(5, 0.0, 50.0, 42, &p)?.thetas;
    let schemes = [
        ("central rel 1e-6", FdScheme::Central, Epsilon::Relative(1e-6)),
        ("forward abs 1e-12", FdScheme::Forward, Epsilon::Absolute(1e-12)),
        ("forward abs 1e-14", FdScheme::Forward, Epsilon::Absolute(1e-14)),
    ];

    for theta in &thetas {
        let s = integrate(theta, &p, &IntegrateOptions::augmented().streaming())?.summary();
        let g = extract_gradients(&s, Direction::Destabilize)?;
        println!("theta {:?}", theta.to_array().map(|v| (v * 100.0).round() / 100.0));
        println!("  g_rocof {:?}", g.rocof);
        println!("  g_nadir {:?}", g.nadir);
        for (name, scheme, eps) in schemes {
            let fd = finite_diff_gradients(theta, &p, eps, scheme, Direction::Destabilize)?;
            let errs: Vec<String> = [Criterion::Rocof, Criterion::Nadir]
                .iter()
                .map(|c| format!("{c} {:.2e}%", max_abs_pct_error(fd.gradients.get(*c), g.get(*c))))
                .collect();
            println!("  {name:<18} {}", errs.join("  "));
        }
    }
    Ok(())
}
