//! Walk a stable and an unstable seed across the boundary and write the
//! seed and final trajectories of each pair as CSV, ready to overlay.
//!
//! ```text
//! cargo run --example sample_pair -- out_dir
//! ```

use std::path::PathBuf;

use freqstab::criteria::label_one;
use freqstab::io::{write_trajectory, WriteOptions};
use freqstab::ode::{integrate, IntegrateOptions};
use freqstab::sampler::{generate_initial, walk_one, SamplerConfig};
use freqstab::{GainVector, Label, SystemParams};

fn main() -> freqstab::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    std::fs::create_dir_all(&dir).map_err(|e| freqstab::Error::Io {
        path: dir.clone(),
        message: e.to_string(),
    })?;
    let p = SystemParams::default();
    let cfg = SamplerConfig::default();
    let enabled = cfg.criteria;

    let seeds = generate_initial(20, 0.0, 50.0, cfg.seed, &p)?.thetas;
    let stable = seeds
        .iter()
        .copied()
        .find(|t| matches!(label_one(t, &p, enabled), Ok(r) if r.label == Label::Stable))
        .expect("a stable seed among 20");
    let pairs = [("stable", stable), ("zero", GainVector::ZERO)];

    for (name, seed) in pairs {
        let rec = walk_one(seed, &p, &cfg);
        println!(
            "{name}: {} -> {} after {} iterations (converged: {})",
            rec.label_initial, rec.label_final, rec.iterations, rec.converged
        );
        println!("  theta0 {:?}", rec.theta_initial.to_array());
        println!("  thetaN {:?}", rec.theta_final.to_array());
        if let Some(r) = &rec.report_final {
            println!("  final rocof {:+.4} Hz/s, nadir {:+.4} Hz", r.rocof_hz_s, r.nadir_hz);
        }
        if let Some(prev) = rec.theta_previous {
            let before = label_one(&prev, &p, enabled).map(|r| r.label);
            println!("  previous iterate relabeled: {before:?}");
        }
        for (tag, theta) in [("seed", rec.theta_initial), ("final", rec.theta_final)] {
            let traj = integrate(&theta, &p, &IntegrateOptions::states_only())?
                .into_trajectory()
                .unwrap();
            let path = dir.join(format!("pair_{name}_{tag}.csv"));
            write_trajectory(&path, &traj, false, WriteOptions { timestamp: false })?;
            println!("  wrote {}", path.display());
        }
    }
    Ok(())
}
