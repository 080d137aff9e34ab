//! Averaging components of the cubic self-connection system and the limit-cycle bound.

use std::collections::BTreeMap;

use spikedyn::limitcycle::{
    averaging_components, limit_cycle_upper_bound, rat, to_normal_form, BetaId, BoundMode, BoundOptions,
    PatternSource, PerturbedPlanarSystem,
};

fn main() -> spikedyn::Result<()> {
    let sys = PerturbedPlanarSystem::cubic_example(3, rat(1, 1))?;
    let nf = to_normal_form(&sys)?;
    println!("F_0 = {}", nf.f[0]);
    println!("F_1 = {}", nf.f[1]);
    let avg = averaging_components(&nf, 1)?;
    for (d, c) in avg.g(1) {
        println!("G_1 coefficient of r^{d}: {c}");
    }

    let opts = BoundOptions {
        mode: BoundMode::Structural(PatternSource::Printed),
        ..BoundOptions::default()
    };
    for k in 1..=5 {
        let s = PerturbedPlanarSystem::cubic_example(k, rat(1, 1))?;
        let b = limit_cycle_upper_bound(&s, k, &opts)?;
        println!("K = {k}: structural bound {}, radial support {:?}", b.bound.unwrap_or(0), b.support);
    }

    // G_1 = G_2 = 0 and G_3 = pi r - pi r^3, one cycle at r = 1
    let mut beta = BTreeMap::new();
    for i in 1..=2 {
        for k in 1..=3 {
            for j in 1..=9 {
                beta.insert(BetaId::new(i, k, j), rat(0, 1));
            }
        }
    }
    beta.insert(BetaId::new(1, 1, 1), rat(1, 1));
    beta.insert(BetaId::new(2, 1, 2), rat(-1, 1));
    beta.insert(BetaId::new(1, 1, 6), rat(-2, 1));
    beta.insert(BetaId::new(1, 3, 1), rat(1, 1));
    let fixed = sys.with_beta(&beta);
    let avg = averaging_components(&to_normal_form(&fixed)?, 3)?;
    for (d, c) in avg.g(3) {
        println!("G_3 coefficient of r^{d}: {c}");
    }
    let b = limit_cycle_upper_bound(&fixed, 3, &BoundOptions::default())?;
    match (b.bound, b.first_nonzero) {
        (Some(n), Some(k)) => println!("fixed beta: at most {n} limit cycle(s), from G_{k}"),
        _ => println!("fixed beta: inconclusive"),
    }
    Ok(())
}
