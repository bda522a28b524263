//! Label a batch of random gain vectors and tally the outcomes.

use freqstab::criteria::{label_dataset, CriteriaSet, Criterion};
use freqstab::sampler::generate_initial;
use freqstab::{Label, SystemParams};

fn main() -> freqstab::Result<()> {
    let p = SystemParams::default();
    let draw = generate_initial(200, 0.0, 50.0, 7, &p)?;
    println!("{} seeds ({} infeasible draws replaced)", draw.thetas.len(), draw.redraws);

    for (name, set) in [("rocof+nadir", CriteriaSet::default()), ("all", CriteriaSet::ALL)] {
        let outcomes = label_dataset(&draw.thetas, &p, set);
        let mut counts = [0usize; 3];
        let mut worst = [0.0f64; 3];
        for o in &outcomes {
            match o {
                Ok(r) => {
                    counts[(r.label == Label::Unstable) as usize] += 1;
                    for c in Criterion::ALL {
                        worst[c as usize] = worst[c as usize].max(r.value(c).abs());
                    }
                }
                Err(_) => counts[2] += 1,
            }
        }
        println!(
            "{name:>12}: stable {:3}  unstable {:3}  invalid {:3}",
            counts[0], counts[1], counts[2]
        );
        println!(
            "{:>12}  worst |rocof| {:.3} Hz/s, |nadir| {:.3} Hz, |ss| {:.3} Hz",
            "", worst[0], worst[1], worst[2]
        );
    }
    Ok(())
}
