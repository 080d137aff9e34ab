//! Recursive lower bound H(n) on limit cycles for n = 2^k - 1.

use spikedyn::limitcycle::lower_bound_h;

fn main() -> spikedyn::Result<()> {
    for k in 1..=8 {
        let n = (1u64 << k) - 1;
        println!("H({n}) >= {}", lower_bound_h(n)?);
    }
    Ok(())
}
