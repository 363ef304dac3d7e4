//! The population seen backwards from its leftmost particle: branch times along the
//! backward path, the relatives each branch leaves near the tip, and pairwise split times.

use bbm_tip::engine::{simulate, PruneConfig, SimSpec};
use bbm_tip::frontstats::Interval;
use bbm_tip::genealogy::{decoration_window, leftmost_decomposition, pair_branch_time};

fn main() -> bbm_tip::error::Result<()> {
    let spec = SimSpec::new(12.0, 11).with_prune(PruneConfig::window(10.0));
    let (snap, arena) = simulate(&spec)?;
    let d = leftmost_decomposition(&arena, &snap)?;
    println!("leftmost particle {} at {:.4}", d.leaf, snap.leftmost().unwrap().position);
    println!("branch time  relatives within 2 of the tip");
    for r in d.records.iter().take(10) {
        println!("{:>11.3}  {}", r.tau, r.relatives.count(Interval::new(0.0, 2.0)));
    }
    for zeta in [0.5, 1.0, 2.0, 4.0] {
        println!("births younger than {zeta}: {} atoms in [0, 2]", decoration_window(&d, zeta)?.count(Interval::new(0.0, 2.0)));
    }
    let a = &snap.atoms;
    if a.len() >= 3 {
        println!("split time of the two leftmost: {:.4}", pair_branch_time(&arena, a[0].node, a[1].node)?);
        println!("split time of the first and third: {:.4}", pair_branch_time(&arena, a[0].node, a[2].node)?);
    }
    Ok(())
}
