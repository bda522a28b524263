//! Time, memory and accuracy of the gradient methods on a small batch.

use freqstab::bench::{compare_methods, Method};
use freqstab::sampler::generate_initial;
use freqstab::sensitivity::{Direction, Epsilon, FdScheme};
use freqstab::SystemParams;

fn main() -> freqstab::Result<()> {
    let p = SystemParams::default();
    let batch: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let thetas = generate_initial(batch, 0.0, 50.0, 42, &p)?.thetas;
    let methods = [
        Method::FmadStream,
        Method::FD_CENTRAL,
        Method::FiniteDiff {
            scheme: FdScheme::Forward,
            eps: Epsilon::Absolute(1e-12),
        },
        Method::FiniteDiff {
            scheme: FdScheme::Forward,
            eps: Epsilon::Absolute(1e-14),
        },
    ];
    let report = compare_methods(&thetas, &p, &methods, Method::Fmad, 1, Direction::Destabilize)?;
    println!("batch {}, reference {}", report.batch_size, report.reference);
    println!(
        "{:<22} {:>12} {:>9} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "method", "memory (B)", "time (s)", "x(t_ss)", "x(t_nad)", "x(t_roc)", "g_nadir", "g_rocof"
    );
    for r in &report.rows {
        let e = &r.errors;
        println!(
            "{:<22} {:>12} {:>9.3} {:>10.2e} {:>10.2e} {:>10.2e} {:>10.2e} {:>10.2e}",
            r.method, r.memory_bytes, r.time_s, e.x_tss, e.x_tnadir, e.x_trocof, e.g_nadir, e.g_rocof
        );
    }
    Ok(())
}
