//! One pruned run to t = 15 with checkpoints, then the front seen at each of them.

use bbm_tip::engine::{simulate, PruneConfig, SimSpec};
use bbm_tip::frontstats::FrontRecord;

fn main() -> bbm_tip::error::Result<()> {
    let spec = SimSpec::new(15.0, 7).with_prune(PruneConfig::window(10.0)).with_uniform_checkpoints(3.0);
    let (snap, arena) = simulate(&spec)?;
    println!("{} nodes recorded, {} particles alive at t = 15", arena.len(), snap.len());
    println!("{}", FrontRecord::CSV_HEADER);
    for g in 0..arena.grid().len() {
        let s = arena.checkpoint_snapshot(g).expect("grid index");
        if !s.is_empty() {
            println!("{}", FrontRecord::new(&s, f64::NAN)?.csv_row());
        }
    }
    let x1 = snap.leftmost().expect("nonempty");
    println!("leftmost at {:.4}; its ancestor sat at {:.4} at t = 9", x1.position, arena.ancestral_position(x1.node, 9.0)?);
    Ok(())
}
