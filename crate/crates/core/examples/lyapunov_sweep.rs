//! Largest Lyapunov exponent across v12 with v21 = 1; the sign flips at v12 = 1.

use spikedyn::dynamics::{bifurcation_sweep, SweepOptions};

fn main() -> spikedyn::Result<()> {
    let rows = bifurcation_sweep(1.0, (-1.0, 4.0), 21, &SweepOptions::default())?;
    println!("   v12    measured   -1 + sqrt(v12)");
    for r in &rows {
        let analytic = if r.v12 >= 0.0 { -1.0 + r.v12.sqrt() } else { -1.0 };
        println!("{:6.2}  {:10.4}  {:10.4}", r.v12, r.lyapunov, analytic);
    }
    if let Some(w) = rows.windows(2).find(|w| w[0].lyapunov < 0.0 && w[1].lyapunov >= 0.0) {
        println!("sign change between v12 = {:.2} and {:.2}", w[0].v12, w[1].v12);
    }
    Ok(())
}
