//! Solve the F-KPP equation, compare the front with the logarithmic correction,
//! and fit the tail constant. Pass `--wave` for the long run behind the constants.

use bbm_tip::fkpp::{solve, wave_estimate, FkppSpec};

fn main() -> bbm_tip::error::Result<()> {
    let spec = if std::env::args().any(|a| a == "--wave") { FkppSpec::wave() } else { FkppSpec::default() };
    let table = solve(&spec)?;
    println!("{} stored slices up to t = {}", table.times().count(), table.horizon());
    println!("    t   median - 1.5 log t");
    for t in [1.0, 5.0, 10.0, 20.0, 50.0, 100.0] {
        if t <= table.horizon() {
            println!("{t:>5}   {:.4}", table.median_at(t) - 1.5 * t.ln());
        }
    }
    println!("P(X_1(3) > 1) = {:.4}", table.g(3.0, 1.0)?);
    let w = wave_estimate(&table, &[10.0, 20.0, 40.0, 80.0], &[0.1, 0.5, 0.9])?;
    println!("C = {:.4} (variation {:.3}), C_B = {:.4}", w.c(), w.tail.variation, w.c_b());
    println!("median convention: C = {:.4} (variation {:.3}), C_B = {:.4}", w.median_tail.c, w.median_tail.variation, w.median_c_b.c_b);
    Ok(())
}
