//! Martingales and recentred extremal measures over independent replicas.

use bbm_tip::engine::{simulate, PruneConfig, SimSpec};
use bbm_tip::frontstats::{additive_martingale, derivative_martingale, recentered_measure, Interval, Recentering};
use bbm_tip::rng::{derive_seed, Purpose};
use bbm_tip::stats::MeanSe;

fn main() -> bbm_tip::error::Result<()> {
    let (mut m, mut z, mut near) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..2000 {
        let (snap, _) = simulate(&SimSpec::new(3.0, derive_seed(5, Purpose::Replica, i)))?;
        m.push(additive_martingale(&snap));
        z.push(derivative_martingale(&snap));
    }
    for i in 0..200 {
        let spec = SimSpec::new(15.0, derive_seed(6, Purpose::Replica, i)).with_prune(PruneConfig::window(8.0));
        let (snap, _) = simulate(&spec)?;
        let seen = recentered_measure(&snap, Recentering::Leftmost, 1.0, 0.0)?;
        near.push(seen.count(Interval::new(0.0, 1.0)) as f64);
    }
    let (m, z, near) = (MeanSe::of(&m), MeanSe::of(&z), MeanSe::of(&near));
    println!("t = 3: E M = {:.4} ± {:.4} (1), E Z = {:.4} ± {:.4} (0)", m.mean, m.se, z.mean, z.se);
    println!("t = 15: particles within 1 of the leftmost, mean {:.3} ± {:.3}", near.mean, near.se);
    Ok(())
}
