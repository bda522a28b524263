//! Draw seeds, push them to the boundary in mini-batches and write the
//! labeled dataset with its metadata sidecar.
//!
//! ```text
//! cargo run --example gen_dataset -- 40 dataset.csv
//! ```

use std::path::PathBuf;

use freqstab::io::{read_dataset, read_labeled, write_dataset, WriteOptions};
use freqstab::sampler::{augment, generate_initial, Rule, SamplerConfig};
use freqstab::{Label, SystemParams};

fn main() -> freqstab::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(40);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("freqstab_dataset.csv"));

    let p = SystemParams::default();
    let cfg = SamplerConfig {
        rule: Rule::Margin(0.05),
        ..SamplerConfig::default()
    };
    let seeds = generate_initial(n, 0.0, 50.0, cfg.seed, &p)?.thetas;
    let ds = augment(&seeds, &p, &cfg)?;

    let stable = ds.records.iter().filter(|r| r.label_final == Label::Stable).count();
    let unstable = ds.records.iter().filter(|r| r.label_final == Label::Unstable).count();
    let mean_iter = ds.records.iter().map(|r| r.iterations).sum::<usize>() as f64 / n as f64;
    println!("rule {}, {n} seeds, params {}", cfg.rule, &ds.meta.params_hash[..16]);
    println!(
        "converged {:.0}%, final labels {stable} stable / {unstable} unstable, {mean_iter:.1} iterations on average",
        100.0 * ds.converged_fraction()
    );

    write_dataset(&out, &ds, WriteOptions { timestamp: false })?;
    let rows = read_labeled(&out)?;
    assert_eq!(read_dataset(&out)?, ds);
    println!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}
