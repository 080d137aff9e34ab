//! Spectrum of the linear self-connection system and its dynamical regime.

use nalgebra::DMatrix;
use spikedyn::selfconn::{classify_regime, eigenvalues, matrix_eigenvalues, system_matrix, SelfConnection};

fn main() {
    let tau_m = 1.0;
    for (v12, v21) in [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (4.0, 1.0), (-1.0, 1.0)] {
        let sc = SelfConnection::from_rows(&[&[0.0, v12], &[v21, 0.0]]);
        let eig = eigenvalues(&system_matrix(&sc, tau_m));
        let shown: Vec<String> = eig.iter().map(|z| format!("{:.3}{:+.3}i", z.re, z.im)).collect();
        println!("v12 {v12:5.1} v21 {v21:4.1}: eig(M) = [{}]  {:?}", shown.join(", "), classify_regime(&eig));
    }

    // eig(M) is eig(V1) shifted by -1/tau_m
    let v1 = DMatrix::from_row_slice(3, 3, &[0.2, -0.5, 0.1, 0.4, 0.0, 0.3, -0.2, 0.6, -0.1]);
    let tau_m = 2.0;
    let mut shifted: Vec<_> = matrix_eigenvalues(&v1).into_iter().map(|z| z - 1.0 / tau_m).collect();
    let mut direct = eigenvalues(&system_matrix(&SelfConnection::linear(v1), tau_m));
    let key = |z: &num_complex::Complex64| (z.re, z.im);
    shifted.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
    direct.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
    for (a, b) in shifted.iter().zip(&direct) {
        println!("eig(V1) - 1/tau_m = {:.6}{:+.6}i   eig(M) = {:.6}{:+.6}i", a.re, a.im, b.re, b.im);
    }
}
