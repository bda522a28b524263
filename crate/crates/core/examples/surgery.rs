//! Projecting conflicting criterion gradients before summing them.

use freqstab::ode::{integrate, IntegrateOptions};
use freqstab::sensitivity::{extract_gradients, Direction};
use freqstab::surgery::{aggregate, dot, surgery, ProjectionForm, SurgeryConfig};
use freqstab::{GainVector, SystemParams};

fn main() -> freqstab::Result<()> {
    let a = [2.0, 0.0, 0.0, 0.0];
    let b = [-1.0, 1.0, 0.0, 0.0];
    println!("a.b = {}", dot(&a, &b));
    for form in [ProjectionForm::Orthogonal, ProjectionForm::SelfNumerator] {
        println!("{form:?}: {:?}", surgery(&[a, b], None, form)?);
    }
    println!("plain sum: {:?}", [a[0] + b[0], a[1] + b[1], 0.0, 0.0]);

    let p = SystemParams::default();
    let theta = GainVector::new(20.0, -30.0, 10.0, 40.0);
    let s = integrate(&theta, &p, &IntegrateOptions::augmented().streaming())?.summary();
    let g = extract_gradients(&s, Direction::Stabilize)?;
    println!("\ntheta {:?}", theta.to_array());
    println!("g_rocof {:?}", g.rocof);
    println!("g_nadir {:?}", g.nadir);
    println!("g_rocof . g_nadir = {:.3e}", dot(&g.rocof, &g.nadir));
    let cfg = SurgeryConfig::for_criteria(Default::default());
    let merged = aggregate(&g, &cfg)?;
    println!("merged  {merged:?}");
    println!(
        "merged . g_rocof = {:.3e}, merged . g_nadir = {:.3e}",
        dot(&merged, &g.rocof),
        dot(&merged, &g.nadir)
    );
    for seed in [1, 2, 3] {
        let cfg = SurgeryConfig {
            shuffle_seed: Some(seed),
            ..cfg.clone()
        };
        println!("shuffled (seed {seed}) {:?}", aggregate(&g, &cfg)?);
    }
    Ok(())
}
