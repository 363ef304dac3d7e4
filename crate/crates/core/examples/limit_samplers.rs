//! The limit objects: a backbone path, the Poisson process, one decoration and one
//! draw of the decorated measure.

use bbm_tip::decoration::{
    sample_gamma, sample_l, sample_pool_decoration, sample_ppp, sample_y, DecorationConfig, Decorations, LimitVariant,
    ProposalSpec,
};
use bbm_tip::engine::ModelParams;
use bbm_tip::fkpp::{solve, FkppSpec};
use bbm_tip::frontstats::Interval;

fn main() -> bbm_tip::error::Result<()> {
    let g = sample_gamma(1.5, 1e-3, 30.0, 1)?;
    println!("backbone at level 1.5: T_b = {:?}, sup = {}", g.t_b, g.sup());
    let ppp = sample_ppp(1.0, 2)?;
    println!("Poisson atoms below 1: {:?}", ppp.iter().rev().take(5).collect::<Vec<_>>());

    let table = solve(&FkppSpec::default())?;
    let pool = sample_y(&table, &ProposalSpec::default(), 2000, 3)?;
    println!("backbone pool: ess {:.0} of {}, c1 = {:.3} ± {:.3}", pool.ess, pool.len(), pool.c1.mean, pool.c1.se);
    let params = ModelParams::default();
    let cfg = DecorationConfig::default().with_window(2.0);
    let d = sample_pool_decoration(&pool, &params, &cfg, 4)?;
    println!("decoration: {} births, atoms in [0, 2]: {:?}", d.births.len(), d.q.restrict(Interval::new(0.0, 2.0)).atoms());
    for seed in 5..10 {
        let l = sample_l(Interval::new(-1.0, 1.0), Decorations::Pool(&pool), &params, &DecorationConfig::default(), LimitVariant::L, seed)?;
        println!("decorated measure on [-1, 1]: {} atoms from {} Poisson atoms", l.atoms.len(), l.ppp_in_window().len());
    }
    Ok(())
}
