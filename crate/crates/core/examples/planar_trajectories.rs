//! RK4 against the closed-form solutions of the planar system for every tabulated cell.

use spikedyn::dynamics::{analytic_reference, integrate, ContinuousSystem, Method, PLANAR_CELLS, PLANAR_POINTS};

fn main() -> spikedyn::Result<()> {
    println!("  v12  v21      u0     max |rk4 - exact|   u(2)");
    for &(v12, v21) in &PLANAR_CELLS {
        for &u0 in &PLANAR_POINTS {
            let sys = ContinuousSystem::planar(v12, v21, 1.0);
            let traj = integrate(&sys, &u0, 2.0, 1e-3, Method::Rk4)?;
            let exact = analytic_reference(v12, v21, u0)?;
            let err = traj
                .times
                .iter()
                .zip(&traj.states)
                .map(|(&t, u)| {
                    let e = exact.eval(t);
                    (u[0] - e[0]).abs().max((u[1] - e[1]).abs())
                })
                .fold(0.0, f64::max);
            let last = traj.states.last().unwrap();
            println!(
                "{v12:5.1} {v21:4.1}  ({:.0},{:.0})  {err:18.3e}   ({:.4}, {:.4})",
                u0[0], u0[1], last[0], last[1]
            );
        }
    }
    Ok(())
}
