//! Energy |u|^2 along a drive-free trajectory and its rate against the quadratic form uᵀMu.

use nalgebra::DMatrix;
use spikedyn::dynamics::{energy_derivative, energy_rate, integrate, ContinuousSystem, Method};

fn main() -> spikedyn::Result<()> {
    let v1 = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, -1.0, 0.0]);
    let tau_m = 1.0;
    let sys = ContinuousSystem::linear(v1.clone(), tau_m);
    let traj = integrate(&sys, &[1.0, 0.5], 3.0, 1e-3, Method::Rk4)?;
    let h: Vec<f64> = traj.states.iter().map(|u| u.iter().map(|x| x * x).sum()).collect();
    println!("    t        |u|^2     d|u|^2/dt   2 uᵀMu     ½ uᵀMu");
    for i in (500..traj.times.len() - 1).step_by(500) {
        let dt = traj.times[i + 1] - traj.times[i - 1];
        let numeric = (h[i + 1] - h[i - 1]) / dt;
        let u = &traj.states[i];
        println!(
            "{:5.2}  {:10.6}  {:10.6}  {:10.6}  {:10.6}",
            traj.times[i],
            h[i],
            numeric,
            energy_derivative(u, &v1, tau_m),
            energy_rate(u, &v1, tau_m)
        );
    }
    Ok(())
}
