//! Self-connection (mutual promotion) terms, the system matrix and its spectrum.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{domain, Error, Result};
use crate::neuron::NeuronParams;

/// Polynomial mutual-promotion field u*(u) = V1 u + Σ_p <V^(p), P_p(u)>.
#[derive(Clone, Debug, PartialEq)]
pub struct SelfConnection {
    n: usize,
    pub v1: DMatrix<f64>,
    /// When false the diagonal of `v1` is ignored (u*_k sums over i != k only).
    pub include_diagonal: bool,
    /// Multi-index α (length N, |α| >= 2) to coefficient per neuron.
    pub higher: BTreeMap<Vec<u32>, Vec<f64>>,
}

pub fn monomial(u: &[f64], alpha: &[u32]) -> f64 {
    u.iter()
        .zip(alpha)
        .filter(|(_, &e)| e > 0)
        .map(|(x, &e)| x.powi(e as i32))
        .product()
}

/// ∂u^α/∂u_i.
fn monomial_partial(u: &[f64], alpha: &[u32], i: usize) -> f64 {
    if alpha[i] == 0 {
        return 0.0;
    }
    let mut v = alpha[i] as f64 * u[i].powi(alpha[i] as i32 - 1);
    for (j, (&x, &e)) in u.iter().zip(alpha).enumerate() {
        if j != i && e > 0 {
            v *= x.powi(e as i32);
        }
    }
    v
}

impl SelfConnection {
    pub fn zeros(n: usize) -> Self {
        Self::linear(DMatrix::zeros(n, n))
    }

    pub fn linear(v1: DMatrix<f64>) -> Self {
        assert_eq!(v1.nrows(), v1.ncols(), "V1 must be square");
        Self {
            n: v1.nrows(),
            v1,
            include_diagonal: true,
            higher: BTreeMap::new(),
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        Self::linear(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn excluding_diagonal(mut self) -> Self {
        self.include_diagonal = false;
        self
    }

    /// Adds (or replaces) the coefficients of monomial `alpha`.
    pub fn with_term(mut self, alpha: Vec<u32>, coeffs: Vec<f64>) -> Result<Self> {
        self.set_term(alpha, coeffs)?;
        Ok(self)
    }

    pub fn set_term(&mut self, alpha: Vec<u32>, coeffs: Vec<f64>) -> Result<()> {
        if alpha.len() != self.n || coeffs.len() != self.n {
            return domain("multi-index and coefficient vector must have length N");
        }
        if alpha.iter().sum::<u32>() < 2 {
            return domain("higher-order multi-index must have degree >= 2");
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return domain("coefficients must be finite");
        }
        self.higher.insert(alpha, coeffs);
        Ok(())
    }

    /// Fills every monomial of degree 2..=order with a constant coefficient for every neuron.
    pub fn full_polynomial(v1: DMatrix<f64>, order: u32, value: f64) -> Self {
        let mut sc = Self::linear(v1);
        let n = sc.n;
        for p in 2..=order {
            for alpha in multi_indices(n, p) {
                sc.higher.insert(alpha, vec![value; n]);
            }
        }
        sc
    }

    pub fn n_neurons(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> u32 {
        self.higher
            .keys()
            .map(|a| a.iter().sum::<u32>())
            .max()
            .unwrap_or(1)
    }

    pub fn is_linear(&self) -> bool {
        self.higher.is_empty()
    }

    /// V1 as used by the dynamics (diagonal zeroed when excluded).
    pub fn effective_v1(&self) -> DMatrix<f64> {
        let mut m = self.v1.clone();
        if !self.include_diagonal {
            m.fill_diagonal(0.0);
        }
        m
    }

    pub fn mutual_promotion(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.n {
            return domain(format!("state has {} entries, expected {}", u.len(), self.n));
        }
        let mut out = vec![0.0; self.n];
        self.promote_into(u, &mut out);
        Ok(out)
    }

    pub(crate) fn promote_into(&self, u: &[f64], out: &mut [f64]) {
        for k in 0..self.n {
            let mut acc = 0.0;
            for i in 0..self.n {
                if i != k || self.include_diagonal {
                    acc += self.v1[(k, i)] * u[i];
                }
            }
            out[k] = acc;
        }
        for (alpha, coeffs) in &self.higher {
            let m = monomial(u, alpha);
            for k in 0..self.n {
                out[k] += coeffs[k] * m;
            }
        }
    }

    /// J[k][i] = ∂u*_k/∂u_i.
    pub fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        let mut j = self.effective_v1();
        for (alpha, coeffs) in &self.higher {
            for i in 0..self.n {
                let d = monomial_partial(u, alpha, i);
                if d != 0.0 {
                    for k in 0..self.n {
                        j[(k, i)] += coeffs[k] * d;
                    }
                }
            }
        }
        j
    }

    /// Adds `scale * g_k * ∂u*_k/∂θ` to every parameter θ of `self`, treating `self` as a
    /// gradient container with the same structure as the connection that produced `u`.
    pub(crate) fn accumulate_param_grad(&mut self, g: &[f64], u: &[f64], scale: f64) {
        for k in 0..self.n {
            let gk = g[k] * scale;
            if gk == 0.0 {
                continue;
            }
            for i in 0..self.n {
                if i != k || self.include_diagonal {
                    self.v1[(k, i)] += gk * u[i];
                }
            }
        }
        for (alpha, coeffs) in self.higher.iter_mut() {
            let m = monomial(u, alpha) * scale;
            for k in 0..self.n {
                coeffs[k] += g[k] * m;
            }
        }
    }

    /// Same structure with every coefficient set to zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            n: self.n,
            v1: DMatrix::zeros(self.n, self.n),
            include_diagonal: self.include_diagonal,
            higher: self
                .higher
                .keys()
                .map(|a| (a.clone(), vec![0.0; self.n]))
                .collect(),
        }
    }

    /// self += scale * other (same structure required).
    pub fn axpy(&mut self, scale: f64, other: &Self) {
        self.v1 += &other.v1 * scale;
        for (alpha, coeffs) in self.higher.iter_mut() {
            if let Some(o) = other.higher.get(alpha) {
                for (c, d) in coeffs.iter_mut().zip(o) {
                    *c += scale * d;
                }
            }
        }
    }

    /// All coefficients flattened: V1 row-major, then higher terms in key order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v: Vec<f64> = (0..self.n)
            .flat_map(|k| (0..self.n).map(move |i| (k, i)))
            .map(|ki| self.v1[ki])
            .collect();
        for c in self.higher.values() {
            v.extend_from_slice(c);
        }
        v
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let n = self.n;
        for k in 0..n {
            for i in 0..n {
                self.v1[(k, i)] = flat[k * n + i];
            }
        }
        let mut off = n * n;
        for c in self.higher.values_mut() {
            c.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }
}

/// All multi-indices of length n with total degree p, in lexicographic order.
pub fn multi_indices(n: usize, p: u32) -> Vec<Vec<u32>> {
    fn rec(n: usize, p: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() + 1 == n {
            prefix.push(p);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=p).rev() {
            prefix.push(e);
            rec(n, p - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(n, p, &mut Vec::new(), &mut out);
    }
    out
}

/// Exponential-Euler step of du/dt = -u/tau_m + u*(u) + (tau_r/tau_m) drive with
/// (u* + drive term) frozen over the step, followed by threshold and reset.
pub fn scsnn_step(
    u: &[f64],
    drive: &[f64],
    sc: &SelfConnection,
    params: &NeuronParams,
) -> Result<(Vec<f64>, Vec<u32>)> {
    if u.len() != sc.n || drive.len() != sc.n {
        return domain("state and drive must have length N");
    }
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite state".into()));
    }
    let a = params.decay();
    let star = sc.mutual_promotion(u)?;
    let mut next = vec![0.0; sc.n];
    let mut spikes = vec![0u32; sc.n];
    for k in 0..sc.n {
        let v = a * u[k] + (1.0 - a) * (params.tau_m * star[k] + params.tau_r * drive[k]);
        if !v.is_finite() {
            return Err(Error::Numeric(format!("non-finite membrane at neuron {k}")));
        }
        if v >= params.u_firing {
            spikes[k] = (v / params.u_firing).floor().max(1.0) as u32;
            next[k] = params.u_reset;
        } else {
            next[k] = v;
        }
    }
    Ok((next, spikes))
}

/// Kernel superposition for a linear connection starting from u = 0 just before `t_prime`:
/// u(t) = Σ_{s=t'}^{t} K^{t-s} (1 - a) tau_r drive(s), K = a I + (1 - a) tau_m V1.
///
/// With V1 = 0 the propagator K^{t-s} is the scalar leak kernel e^{-(t-s) dt/tau_m}.
/// Firing is not applied.
pub fn scsnn_closed_form(
    drives: &[Vec<f64>],
    sc: &SelfConnection,
    params: &NeuronParams,
    t_prime: usize,
    t: usize,
) -> Result<Vec<f64>> {
    if !sc.is_linear() {
        return Err(Error::Unsupported(
            "closed form exists only for linear self-connections".into(),
        ));
    }
    if t < t_prime || t >= drives.len() {
        return domain("need t_prime <= t < number of drive steps");
    }
    let n = sc.n;
    let a = params.decay();
    let kernel = DMatrix::identity(n, n) * a + sc.effective_v1() * ((1.0 - a) * params.tau_m);
    let mut power = DMatrix::identity(n, n);
    let mut u = nalgebra::DVector::zeros(n);
    for s in (t_prime..=t).rev() {
        if drives[s].len() != n {
            return domain("drive vectors must have length N");
        }
        if drives[s].iter().any(|&d| d != 0.0) {
            let d = nalgebra::DVector::from_column_slice(&drives[s]) * ((1.0 - a) * params.tau_r);
            u += &power * d;
        }
        power = &kernel * power;
    }
    Ok(u.iter().copied().collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemMatrix {
    pub m: DMatrix<f64>,
}

/// M = V1 - I/tau_m.
pub fn system_matrix(sc: &SelfConnection, tau_m: f64) -> SystemMatrix {
    let n = sc.n;
    SystemMatrix {
        m: sc.effective_v1() - DMatrix::identity(n, n) / tau_m,
    }
}

pub fn eigenvalues(m: &SystemMatrix) -> Vec<Complex64> {
    matrix_eigenvalues(&m.m)
}

pub fn matrix_eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    m.clone().complex_eigenvalues().iter().copied().collect()
}

/// Largest distance after greedily pairing each element of `a` with its nearest unused
/// element of `b`. Infinite when the sizes differ.
pub fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    let mut order: Vec<&Complex64> = a.iter().collect();
    order.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    for x in order {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("sizes match");
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Dissipative,
    Conservative,
    Diffuse,
    Mixed,
}

pub const REGIME_TOL: f64 = 1e-9;

pub fn classify_regime(eigs: &[Complex64]) -> Regime {
    if eigs.iter().all(|z| z.re < -REGIME_TOL) {
        Regime::Dissipative
    } else if eigs.iter().all(|z| z.re.abs() <= REGIME_TOL) {
        Regime::Conservative
    } else if eigs.iter().all(|z| z.re > REGIME_TOL) {
        Regime::Diffuse
    } else {
        Regime::Mixed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reals(v: &[Complex64]) -> Vec<f64> {
        let mut r: Vec<f64> = v.iter().map(|z| z.re).collect();
        r.sort_by(f64::total_cmp);
        r
    }

    #[test]
    fn promotion_examples() {
        let sc = SelfConnection::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(sc.mutual_promotion(&[2.0, 3.0]).unwrap(), vec![3.0, 2.0]);
        assert_eq!(SelfConnection::zeros(3).mutual_promotion(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 3]);
        assert!(sc.mutual_promotion(&[1.0]).is_err());
    }

    #[test]
    fn unit_quadratic_expansion() {
        let sc = SelfConnection::full_polynomial(DMatrix::from_element(2, 2, 1.0), 2, 1.0);
        assert_eq!(sc.order(), 2);
        let (u1, u2) = (0.7, -1.3);
        let star = sc.mutual_promotion(&[u1, u2]).unwrap();
        let expect = u1 + u2 + u1 * u1 + u2 * u2 + u1 * u2;
        assert_relative_eq!(star[0], expect, epsilon = 1e-14);
        assert_relative_eq!(star[1], expect, epsilon = 1e-14);
    }

    #[test]
    fn diagonal_flag() {
        let sc = SelfConnection::from_rows(&[&[5.0, 1.0], &[1.0, 5.0]]).excluding_diagonal();
        assert_eq!(sc.mutual_promotion(&[2.0, 3.0]).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v1 = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
        let mut sc = SelfConnection::full_polynomial(v1, 3, 0.0);
        let keys: Vec<_> = sc.higher.keys().cloned().collect();
        for k in keys {
            let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect();
            sc.set_term(k, c).unwrap();
        }
        let u = [0.4, -0.9, 1.3];
        let j = sc.jacobian(&u);
        for i in 0..3 {
            let h = 1e-6;
            let mut up = u;
            let mut dn = u;
            up[i] += h;
            dn[i] -= h;
            let fp = sc.mutual_promotion(&up).unwrap();
            let fm = sc.mutual_promotion(&dn).unwrap();
            for k in 0..3 {
                let fd = (fp[k] - fm[k]) / (2.0 * h);
                assert!((fd - j[(k, i)]).abs() <= 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices(2, 3).len(), 4);
        assert_eq!(multi_indices(3, 2).len(), 6);
        assert!(multi_indices(4, 3).iter().all(|a| a.iter().sum::<u32>() == 3));
    }

    #[test]
    fn step_reduces_to_lif() {
        let p = NeuronParams::default();
        let (u, s) = scsnn_step(&[2.0, -1.0], &[0.0, 0.0], &SelfConnection::zeros(2), &p).unwrap();
        assert_relative_eq!(u[0], 2.0 * p.decay());
        assert_relative_eq!(u[1], -1.0 * p.decay());
        assert_eq!(s, vec![0, 0]);
    }

    #[test]
    fn step_follows_planar_trajectories() {
        let p = NeuronParams::new(1.0, 1.0, 1e9, 0.0, 1e-6).unwrap();
        let sc = SelfConnection::from_rows(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let mut u = vec![3.0, 6.0];
        for _ in 0..1_000_000 {
            u = scsnn_step(&u, &[0.0, 0.0], &sc, &p).unwrap().0;
        }
        let e = (-1.0f64).exp();
        assert!((u[0] - 3.0 * e).abs() < 1e-5);
        assert!((u[1] - (3.0 * e + 6.0 * e)).abs() < 1e-5);

        let p = NeuronParams::new(1.0, 1.0, 10.0, 0.0, 1e-6).unwrap();
        let sc = SelfConnection::from_rows(&[&[0.0, 4.0], &[1.0, 0.0]]);
        let mut u = vec![6.0, 3.0];
        for _ in 0..300_000 {
            u = scsnn_step(&u, &[0.0, 0.0], &sc, &p).unwrap().0;
        }
        let g = 0.3f64.exp();
        assert!((u[0] - 6.0 * g).abs() < 1e-4);
        assert!((u[1] - 3.0 * g).abs() < 1e-4);
    }

    #[test]
    fn step_fires_and_resets() {
        let p = NeuronParams::new(1.0, 1.0, 1.0, -0.5, 0.1).unwrap();
        let (u, s) = scsnn_step(&[0.0], &[100.0], &SelfConnection::zeros(1), &p).unwrap();
        assert_eq!(u, vec![-0.5]);
        assert!(s[0] >= 1);
    }

    #[test]
    fn closed_form_matches_stepping() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..10 {
            let n = 2 + trial % 4;
            let v1 = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let sc = SelfConnection::linear(v1);
            let p = NeuronParams::new(1.0, 1.3, 1e12, 0.0, 1e-3).unwrap();
            let drives: Vec<Vec<f64>> = (0..300)
                .map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let mut u = vec![0.0; n];
            for d in &drives {
                u = scsnn_step(&u, d, &sc, &p).unwrap().0;
            }
            let c = scsnn_closed_form(&drives, &sc, &p, 0, drives.len() - 1).unwrap();
            for k in 0..n {
                assert!((u[k] - c[k]).abs() <= 1e-6 * (1.0 + u[k].abs()));
            }
        }
    }

    #[test]
    fn closed_form_trivial_cases() {
        let p = NeuronParams::default();
        let sc = SelfConnection::zeros(2);
        let zero = vec![vec![0.0; 2]; 5];
        assert_eq!(scsnn_closed_form(&zero, &sc, &p, 0, 4).unwrap(), vec![0.0, 0.0]);
        let mut pulse = zero.clone();
        pulse[1] = vec![1.0, 0.0];
        let u = scsnn_closed_form(&pulse, &sc, &p, 0, 4).unwrap();
        let a = p.decay();
        assert_relative_eq!(u[0], a.powi(3) * (1.0 - a) * p.tau_r, epsilon = 1e-18);
        let quad = SelfConnection::full_polynomial(DMatrix::zeros(2, 2), 2, 1.0);
        assert!(matches!(
            scsnn_closed_form(&zero, &quad, &p, 0, 4),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn closed_form_quartet() {
        let cases: [(&[&[f64]], [f64; 2]); 4] = [
            (&[&[0.0, 0.0], &[0.0, 0.0]], [-1.0, -1.0]),
            (&[&[0.0, 0.0], &[1.0, 0.0]], [-1.0, -1.0]),
            (&[&[0.0, 1.0], &[1.0, 0.0]], [-2.0, 0.0]),
            (&[&[0.0, 4.0], &[1.0, 0.0]], [-3.0, 1.0]),
        ];
        for (rows, expect) in cases {
            let eig = eigenvalues(&system_matrix(&SelfConnection::from_rows(rows), 1.0));
            let re = reals(&eig);
            assert!((re[0] - expect[0]).abs() < 1e-9 && (re[1] - expect[1]).abs() < 1e-9, "{re:?}");
        }
    }

    #[test]
    fn regime_classes() {
        let c = |v: &[f64]| v.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>();
        assert_eq!(classify_regime(&c(&[-1.0, -1.0])), Regime::Dissipative);
        assert_eq!(classify_regime(&c(&[0.0, 0.0])), Regime::Conservative);
        assert_eq!(classify_regime(&c(&[0.5, 2.0])), Regime::Diffuse);
        assert_eq!(classify_regime(&c(&[-2.0, 0.0])), Regime::Mixed);
        assert_eq!(classify_regime(&c(&[0.0, -2.0])), Regime::Mixed);
    }

    proptest! {
        #[test]
        fn leak_shifts_spectrum(seed in 0u64..1000, n in 2usize..9, tau in 0.2f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v1 = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0));
            let shifted: Vec<Complex64> = matrix_eigenvalues(&v1).iter().map(|z| z - 1.0 / tau).collect();
            let direct = eigenvalues(&system_matrix(&SelfConnection::linear(v1), tau));
            prop_assert!(multiset_distance(&direct, &shifted) < 1e-9);
        }

        #[test]
        fn regime_permutation_invariant(v in prop::collection::vec(-2.0f64..2.0, 1..8), rot in 0usize..8) {
            let z: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            let mut w = z.clone();
            let len = w.len();
            w.rotate_left(rot % len);
            prop_assert_eq!(classify_regime(&z), classify_regime(&w));
        }
    }
}
