//! Run acceptance criteria by number, e.g. `cargo run --release --example verify 1 6 12`.

use bbm_tip::harness::{run_criterion, Context};

fn main() -> bbm_tip::error::Result<()> {
    let ctx = Context::new(1);
    let ids: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    for id in if ids.is_empty() { vec![1, 6, 12] } else { ids } {
        let r = run_criterion(id, &ctx)?;
        println!("{}", r.line());
    }
    Ok(())
}
