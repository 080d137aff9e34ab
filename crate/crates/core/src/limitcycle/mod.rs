//! Averaging-method bounds on limit cycles of perturbed planar systems.
//!
//! A planar system `u' = -u/τm + Q(u) + Σ_k ε^k P_k(u)` is rewritten in polar
//! form `u = r (cos t, sin t)`, giving `dr/dt = Σ_k ε^k F_k(t, r)`. The averaged
//! functions `G_k(r)` are computed exactly, with π carried as a symbol, and
//! the positive simple zeros of the first non-vanishing one bound the number
//! of limit cycles bifurcating for small ε.

mod poly;
mod roots;
mod series;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};
use serde_json::json;

pub use poly::{pi_rational, rat, rat_int, rat_to_f64, BetaId, Monomial, Poly, Rational, PI};
pub use roots::{count_positive_simple_roots, count_positive_simple_roots_f64, UniPoly};
pub use series::RadialPoly;

use crate::error::{domain, Error, Result};
use series::Series;

/// Deepest averaging order supported.
pub const MAX_ORDER: usize = 5;
const MAX_DEGREE: u32 = 24;
const MAX_TERMS: usize = 2_000_000;

fn factorial(n: u32) -> BigInt {
    (1..=n as u64).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

fn double_factorial(n: i64) -> BigInt {
    let mut acc = BigInt::one();
    let mut k = n;
    while k > 1 {
        acc *= BigInt::from(k);
        k -= 2;
    }
    acc
}

/// `∫_0^{2π} sin^a t cos^b t dt` as a rational multiple of π.
pub fn trig_period_integral(a: u32, b: u32) -> Rational {
    if a % 2 == 1 || b % 2 == 1 {
        return Rational::zero();
    }
    let num = double_factorial(a as i64 - 1) * double_factorial(b as i64 - 1) * BigInt::from(2);
    Rational::new(num, double_factorial((a + b) as i64))
}

/// `∫_{t0}^{t1} sin^a s cos^b s ds`, from the exact antiderivative.
pub fn trig_definite_integral(a: u32, b: u32, t0: f64, t1: f64) -> f64 {
    let anti = Series::from_trig_term(0, a, b, &Poly::one()).integrate();
    let at = |t: f64| anti.eval_f64(t, 1.0, &|_| 0.0);
    at(t1) - at(t0)
}

/// `Σ c · r^d · sin^a t · cos^b t`, keyed by `(d, a, b)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrigPoly {
    terms: BTreeMap<(u32, u32, u32), Poly>,
}

impl TrigPoly {
    pub fn zero() -> Self {
        TrigPoly::default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, radial: u32, sin_pow: u32, cos_pow: u32, c: &Poly) {
        let slot = self.terms.entry((radial, sin_pow, cos_pow)).or_default();
        slot.add_assign(c);
        if slot.is_zero() {
            self.terms.remove(&(radial, sin_pow, cos_pow));
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(u32, u32, u32), &Poly)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, radial: u32, sin_pow: u32, cos_pow: u32) -> Poly {
        self.terms
            .get(&(radial, sin_pow, cos_pow))
            .cloned()
            .unwrap_or_default()
    }

    pub fn max_radial_degree(&self) -> u32 {
        self.terms.keys().map(|k| k.0).max().unwrap_or(0)
    }

    pub(crate) fn to_series(&self) -> Series {
        let mut out = Series::zero();
        for (&(d, a, b), c) in &self.terms {
            out.add_assign(&Series::from_trig_term(d, a, b, c));
        }
        out
    }

    /// Equal as functions of `(t, r)`, i.e. modulo `sin² + cos² = 1`.
    pub fn equivalent(&self, other: &TrigPoly) -> bool {
        self.to_series() == other.to_series()
    }

    /// `∫_0^{2π} dt` as a radial polynomial.
    pub fn period_integral(&self) -> RadialPoly {
        let mut out = RadialPoly::new();
        for (&(d, a, b), c) in &self.terms {
            let w = trig_period_integral(a, b);
            if w.is_zero() {
                continue;
            }
            out.entry(d)
                .or_default()
                .add_assign(&c.mul_monomial(&Monomial::var(PI), &w));
        }
        out.retain(|_, p| !p.is_zero());
        out
    }

    pub fn substitute(&self, values: &BTreeMap<u32, Rational>) -> TrigPoly {
        let mut out = TrigPoly::zero();
        for (&(d, a, b), c) in &self.terms {
            out.add_term(d, a, b, &c.substitute(values));
        }
        out
    }

    pub fn eval_f64(&self, t: f64, r: f64, value: impl Fn(u32) -> f64) -> f64 {
        let (s, c) = t.sin_cos();
        self.terms
            .iter()
            .map(|(&(d, a, b), p)| {
                p.eval_f64(&value) * r.powi(d as i32) * s.powi(a as i32) * c.powi(b as i32)
            })
            .sum()
    }
}

impl fmt::Display for TrigPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(&(d, a, b), c)| {
                let mut s = format!("({c})");
                for (name, e) in [("r", d), ("sin(t)", a), ("cos(t)", b)] {
                    match e {
                        0 => {}
                        1 => s.push_str(&format!("*{name}")),
                        _ => s.push_str(&format!("*{name}^{e}")),
                    }
                }
                s
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// Polynomial in `(u1, u2)` keyed by exponents.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BivariatePoly {
    terms: BTreeMap<(u32, u32), Poly>,
}

impl BivariatePoly {
    pub fn zero() -> Self {
        BivariatePoly::default()
    }

    pub fn add_term(&mut self, e1: u32, e2: u32, c: &Poly) {
        let slot = self.terms.entry((e1, e2)).or_default();
        slot.add_assign(c);
        if slot.is_zero() {
            self.terms.remove(&(e1, e2));
        }
    }

    pub fn with_term(mut self, e1: u32, e2: u32, c: Rational) -> Self {
        self.add_term(e1, e2, &Poly::constant(c));
        self
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(u32, u32), &Poly)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|(a, b)| a + b).max().unwrap_or(0)
    }

    pub fn substitute(&self, values: &BTreeMap<u32, Rational>) -> BivariatePoly {
        let mut out = BivariatePoly::zero();
        for (&(a, b), c) in &self.terms {
            out.add_term(a, b, &c.substitute(values));
        }
        out
    }
}

/// Exponents `(e1, e2)` of the monomials of degree 1..=m, in the order that
/// numbers β: u1, u2, u1², u1u2, u2², u1³, ...
pub fn graded_monomials(m: u32) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for d in 1..=m {
        for i in 0..=d {
            out.push((d - i, i));
        }
    }
    out
}

/// `u' = -u/τm + Q(u) + Σ_{k=1..K} ε^k P_k(u)` in the plane.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbedPlanarSystem {
    pub tau_m: Rational,
    pub unperturbed: [BivariatePoly; 2],
    /// `perturbation[k - 1]` multiplies `ε^k`.
    pub perturbation: Vec<[BivariatePoly; 2]>,
}

impl PerturbedPlanarSystem {
    pub fn new(
        tau_m: Rational,
        unperturbed: [BivariatePoly; 2],
        perturbation: Vec<[BivariatePoly; 2]>,
    ) -> Result<Self> {
        if !tau_m.is_positive() {
            return domain("tau_m must be positive");
        }
        Ok(PerturbedPlanarSystem {
            tau_m,
            unperturbed,
            perturbation,
        })
    }

    /// Full symbolic perturbation of degree `m` at every order up to `order`.
    pub fn symbolic(
        tau_m: Rational,
        unperturbed: [BivariatePoly; 2],
        m: u32,
        order: usize,
    ) -> Result<Self> {
        let monos = graded_monomials(m);
        let perturbation = (1..=order as u32)
            .map(|k| {
                [1, 2].map(|i| {
                    let mut p = BivariatePoly::zero();
                    for (j, &(a, b)) in monos.iter().enumerate() {
                        p.add_term(a, b, &Poly::beta(BetaId::new(i, k, j as u32 + 1)));
                    }
                    p
                })
            })
            .collect();
        PerturbedPlanarSystem::new(tau_m, unperturbed, perturbation)
    }

    /// `u1' = -u1/τm + u1²u2 + ε P1`, `u2' = -u2/τm + u1u2² + ε P2` with cubic
    /// symbolic perturbations at each order.
    pub fn cubic_example(order: usize, tau_m: Rational) -> Result<Self> {
        PerturbedPlanarSystem::symbolic(tau_m, cubic_unperturbed(), 3, order)
    }

    pub fn order(&self) -> usize {
        self.perturbation.len()
    }

    /// Replace the given β by values; the others stay symbolic.
    pub fn with_beta(&self, values: &BTreeMap<BetaId, Rational>) -> Self {
        let vars: BTreeMap<u32, Rational> =
            values.iter().map(|(b, v)| (b.var(), v.clone())).collect();
        let mut out = self.clone();
        for eqs in out.perturbation.iter_mut() {
            for p in eqs.iter_mut() {
                *p = p.substitute(&vars);
            }
        }
        out
    }

    fn is_cubic_example(&self) -> bool {
        self.unperturbed == cubic_unperturbed()
            && self
                .perturbation
                .iter()
                .all(|eq| eq.iter().all(|p| p.degree() <= 3))
    }
}

fn cubic_unperturbed() -> [BivariatePoly; 2] {
    [
        BivariatePoly::zero().with_term(2, 1, Rational::one()),
        BivariatePoly::zero().with_term(1, 2, Rational::one()),
    ]
}

/// `dr/dt = Σ_{k=0..K} ε^k F_k(t, r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalForm {
    pub f: Vec<TrigPoly>,
    /// The polynomial remainder is bounded on compact sets for every order.
    pub remainder_bounded: bool,
}

impl NormalForm {
    pub fn order(&self) -> usize {
        self.f.len() - 1
    }

    fn has_symbols(&self) -> bool {
        self.f.iter().any(|t| {
            t.terms()
                .any(|(_, c)| c.variables().iter().any(|&v| v != PI))
        })
    }
}

/// Adds `(u · P(u)) / r` for the monomials of `P` to `f[base + degree]`, growing `f`.
fn polar(eqs: &[BivariatePoly; 2], base: isize, f: &mut Vec<TrigPoly>) -> Result<()> {
    for (i, p) in eqs.iter().enumerate() {
        for (&(a, b), c) in p.terms() {
            if a + b > MAX_DEGREE {
                return Err(Error::Resource(format!(
                    "monomial degree {} exceeds {MAX_DEGREE}",
                    a + b
                )));
            }
            let at = (base + (a + b) as isize).max(0) as usize;
            if f.len() <= at {
                f.resize(at + 1, TrigPoly::zero());
            }
            if i == 0 {
                f[at].add_term(a + b, b, a + 1, c);
            } else {
                f[at].add_term(a + b, b + 1, a, c);
            }
        }
    }
    Ok(())
}

/// Polar form `u = ε r (cos t, sin t)`, `dr/dt = (u1 u1' + u2 u2') / (ε² r)`.
///
/// Under the small-amplitude scaling a degree-d monomial of the ε^k perturbation lands in
/// `F_{k+d-1}` and a degree-d unperturbed monomial in `F_{d-1}`, so only the leak is left
/// in `F_0`.
pub fn to_normal_form(sys: &PerturbedPlanarSystem) -> Result<NormalForm> {
    let mut f0 = TrigPoly::zero();
    f0.add_term(1, 0, 0, &Poly::constant(-sys.tau_m.recip()));
    let mut f = vec![f0];
    polar(&sys.unperturbed, -1, &mut f)?;
    for (k, eqs) in sys.perturbation.iter().enumerate() {
        polar(eqs, k as isize, &mut f)?;
    }
    if f.len() <= sys.order() {
        f.resize(sys.order() + 1, TrigPoly::zero());
    }
    Ok(NormalForm {
        f,
        remainder_bounded: true,
    })
}

/// Which `F_0` the recursion sees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Branch {
    /// Unperturbed part absorbed; `F_0 ≡ 0` and the recursion is exact.
    #[default]
    F0Zero,
    /// `F_0` kept; components are sampled numerically on a radial grid.
    F0NonZero,
}

impl FromStr for Branch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f0-zero" | "zero" => Ok(Branch::F0Zero),
            "f0-nonzero" | "nonzero" => Ok(Branch::F0NonZero),
            _ => domain(format!("unknown branch '{s}' (expected f0-zero or f0-nonzero)")),
        }
    }
}

/// Exact averaged functions `G_1..G_K`.
#[derive(Clone, Debug, PartialEq)]
pub struct AveragingResult {
    /// `components[k - 1]` is `G_k`.
    pub components: Vec<RadialPoly>,
    pub first_nonzero: Option<usize>,
}

impl AveragingResult {
    pub fn g(&self, k: usize) -> &RadialPoly {
        &self.components[k - 1]
    }

    /// Triples `(power of r, coefficient, power of π)` per component.
    pub fn to_json(&self) -> serde_json::Value {
        let comps: Vec<serde_json::Value> = self
            .components
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let mut triples = Vec::new();
                for (d, c) in g {
                    for (j, part) in c.split_pi() {
                        triples.push(json!([d, part.to_string(), j]));
                    }
                }
                json!({ "k": i + 1, "terms": triples })
            })
            .collect();
        json!({ "first_nonzero": self.first_nonzero, "components": comps })
    }
}

/// All `b ∈ N^l` with `b_1 + 2 b_2 + ... + l b_l = l`.
fn index_sets(l: u32) -> Vec<Vec<u32>> {
    fn go(j: u32, l: u32, rest: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if j > l {
            if rest == 0 {
                out.push(cur.clone());
            }
            return;
        }
        for bj in 0..=rest / j {
            cur.push(bj);
            go(j + 1, l, rest - bj * j, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(1, l, l, &mut Vec::new(), &mut out);
    out
}

fn guard(s: &Series) -> Result<()> {
    if s.size() > MAX_TERMS {
        return Err(Error::Resource(format!(
            "averaging expression exceeds {MAX_TERMS} terms"
        )));
    }
    Ok(())
}

/// `G_k = y_k(2π)/k!` with
/// `y_k(t) = k! ∫_0^t [F_k + Σ_{l<k} Σ_{b∈S_l} ∂^{|b|}F_{k-l} Π_j y_j^{b_j} / Π_j b_j! j!^{b_j}] ds`,
/// taking `F_0 ≡ 0`.
pub fn averaging_components(nf: &NormalForm, k: usize) -> Result<AveragingResult> {
    if k > MAX_ORDER {
        return Err(Error::Unsupported(format!(
            "averaging order {k} exceeds the supported depth {MAX_ORDER}"
        )));
    }
    if k == 0 {
        return domain("averaging order must be at least 1");
    }
    let fs: Vec<Series> = (0..=k)
        .map(|i| match nf.f.get(i) {
            Some(t) if i > 0 => t.to_series(),
            _ => Series::zero(),
        })
        .collect();
    let mut ys: Vec<Series> = vec![Series::zero()];
    let mut comps = Vec::with_capacity(k);
    for kk in 1..=k {
        let mut integrand = fs[kk].clone();
        for l in 1..kk {
            let f = &fs[kk - l];
            if f.is_zero() {
                continue;
            }
            for b in index_sets(l as u32) {
                let order: u32 = b.iter().sum();
                let mut term = f.diff_r(order);
                let mut denom = BigInt::one();
                for (idx, &bj) in b.iter().enumerate() {
                    let j = idx + 1;
                    denom *= factorial(bj) * num_traits::pow(factorial(j as u32), bj as usize);
                    for _ in 0..bj {
                        if term.is_zero() {
                            break;
                        }
                        term = term.mul(&ys[j]);
                        guard(&term)?;
                    }
                }
                if !term.is_zero() {
                    integrand.add_assign(&term.scale(&Rational::new(BigInt::one(), denom)));
                }
            }
        }
        guard(&integrand)?;
        let integral = integrand.integrate();
        comps.push(integral.at_two_pi());
        ys.push(integral.scale(&Rational::from_integer(factorial(kk as u32))));
    }
    let first_nonzero = comps.iter().position(|g| !g.is_empty()).map(|i| i + 1);
    Ok(AveragingResult {
        components: comps,
        first_nonzero,
    })
}

/// Radial polynomial with π replaced by a 60-digit rational, for root counting.
pub fn radial_to_rational(g: &RadialPoly) -> Result<UniPoly> {
    let pi = pi_rational();
    let deg = g.keys().max().copied().unwrap_or(0) as usize;
    let mut out = vec![Rational::zero(); deg + 1];
    for (&d, c) in g {
        let mut vals = BTreeMap::new();
        vals.insert(PI, pi.clone());
        match c.substitute(&vals).as_constant() {
            Some(v) => out[d as usize] = v,
            None => return domain("coefficient still depends on symbolic β"),
        }
    }
    Ok(out)
}

pub fn eval_radial(g: &RadialPoly, r: f64, value: impl Fn(u32) -> f64) -> f64 {
    g.iter()
        .map(|(&d, c)| c.eval_f64(&value) * r.powi(d as i32))
        .sum()
}

fn pi_value(v: u32) -> f64 {
    if v == PI {
        std::f64::consts::PI
    } else {
        f64::NAN
    }
}

type Jet = Vec<f64>;

fn jet_mul(a: &Jet, b: &Jet) -> Jet {
    let n = a.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        if a[i] == 0.0 {
            continue;
        }
        for j in 0..n - i {
            out[i + j] += a[i] * b[j];
        }
    }
    out
}

/// Taylor coefficients in ε of `r(2π; z, ε) - z` up to order `k`, from
/// RK4 on the jet ODE. Index 0 is the unperturbed displacement.
pub fn displacement_jets(
    nf: &NormalForm,
    k: usize,
    z: f64,
    branch: Branch,
    steps: usize,
) -> Result<Vec<f64>> {
    if nf.has_symbols() {
        return domain("displacement needs numeric β");
    }
    let n = k + 1;
    let terms: Vec<Vec<(i32, i32, i32, f64)>> = (0..=k)
        .map(|i| match nf.f.get(i) {
            Some(_) if i == 0 && branch == Branch::F0Zero => Vec::new(),
            Some(t) => t
                .terms()
                .map(|(&(d, a, b), c)| (d as i32, a as i32, b as i32, c.eval_f64(pi_value)))
                .collect(),
            None => Vec::new(),
        })
        .collect();
    let max_deg = terms
        .iter()
        .flatten()
        .map(|t| t.0 as usize)
        .max()
        .unwrap_or(0);
    let rhs = |t: f64, x: &Jet| -> Jet {
        let (s, c) = t.sin_cos();
        let mut powers = vec![{
            let mut one = vec![0.0; n];
            one[0] = 1.0;
            one
        }];
        for d in 1..=max_deg {
            let next = jet_mul(&powers[d - 1], x);
            powers.push(next);
        }
        let mut out = vec![0.0; n];
        for (order, ts) in terms.iter().enumerate() {
            for &(d, a, b, w) in ts {
                let coef = w * s.powi(a) * c.powi(b);
                let p = &powers[d as usize];
                for i in 0..n - order {
                    out[i + order] += coef * p[i];
                }
            }
        }
        out
    };
    let h = 2.0 * std::f64::consts::PI / steps as f64;
    let mut x = vec![0.0; n];
    x[0] = z;
    let axpy = |x: &Jet, a: f64, y: &Jet| -> Jet { x.iter().zip(y).map(|(p, q)| p + a * q).collect() };
    for step in 0..steps {
        let t = step as f64 * h;
        let k1 = rhs(t, &x);
        let k2 = rhs(t + 0.5 * h, &axpy(&x, 0.5 * h, &k1));
        let k3 = rhs(t + 0.5 * h, &axpy(&x, 0.5 * h, &k2));
        let k4 = rhs(t + h, &axpy(&x, h, &k3));
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite() || v.abs() > 1e150) {
            return Err(Error::Numeric(format!(
                "displacement jet diverged at t = {:.3} from z = {z}",
                t + h
            )));
        }
    }
    x[0] -= z;
    Ok(x)
}

/// Components sampled on a radial grid (`F_0 ≢ 0` branch).
#[derive(Clone, Debug, PartialEq)]
pub struct SampledComponents {
    pub z: Vec<f64>,
    /// `g[k][i]` is `G_k(z[i])`, `k = 0..=K`.
    pub g: Vec<Vec<f64>>,
    pub first_nonzero: Option<usize>,
}

const VANISH_TOL: f64 = 1e-9;

pub fn sampled_components(
    nf: &NormalForm,
    k: usize,
    z_max: f64,
    samples: usize,
    branch: Branch,
) -> Result<SampledComponents> {
    if k > MAX_ORDER {
        return Err(Error::Unsupported(format!(
            "averaging order {k} exceeds the supported depth {MAX_ORDER}"
        )));
    }
    if !(z_max > 0.0) || samples < 2 {
        return domain("need z_max > 0 and at least two samples");
    }
    let z: Vec<f64> = (1..=samples)
        .map(|i| z_max * i as f64 / samples as f64)
        .collect();
    let mut g = vec![Vec::with_capacity(samples); k + 1];
    for &zi in &z {
        let jets = displacement_jets(nf, k, zi, branch, 4000)?;
        for (order, v) in jets.into_iter().enumerate() {
            g[order].push(v);
        }
    }
    let start = if branch == Branch::F0Zero { 1 } else { 0 };
    let first_nonzero = (start..=k).find(|&i| g[i].iter().any(|v| v.abs() > VANISH_TOL));
    Ok(SampledComponents {
        z,
        g,
        first_nonzero,
    })
}

fn sign_changes(values: &[f64]) -> usize {
    let mut last = 0.0f64;
    let mut n = 0;
    for &v in values {
        if v.abs() <= VANISH_TOL {
            continue;
        }
        if last != 0.0 && v.signum() != last.signum() {
            n += 1;
        }
        last = v;
    }
    n
}

/// Where the structural mode reads the shape of `G_K`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PatternSource {
    /// The bracket shapes published for the cubic example.
    #[default]
    Printed,
    /// Radial support of the symbolic `G_K`, after forcing `G_1 ≡ 0`.
    Computed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundMode {
    /// Every β fixed; count roots of the first non-vanishing component.
    Numeric,
    /// β free; maximal count allowed by the radial pattern of `G_K`.
    Structural(PatternSource),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundOptions {
    pub mode: BoundMode,
    pub branch: Branch,
    pub z_max: f64,
    pub samples: usize,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions {
            mode: BoundMode::Numeric,
            branch: Branch::F0Zero,
            z_max: 1.0,
            samples: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpperBound {
    pub bound: Option<usize>,
    pub first_nonzero: Option<usize>,
    /// Every component vanished, so the averaging test says nothing.
    pub inconclusive: bool,
    /// Powers of r present in the component used.
    pub support: Vec<u32>,
}

/// Radial support of `G_1 .. G_5` for the cubic example as published: the
/// brackets multiply `π r`, with `r²` appearing from `G_3` and `r⁴` at `G_5`.
const CUBIC_PRINTED_SUPPORT: [&[u32]; 5] = [&[1], &[1], &[1, 3], &[1, 3], &[1, 3, 5]];

/// Largest number of small-amplitude cycles a component with these powers of
/// r can produce.
///
/// Writing `G = r^{d0} B(r)`, Descartes' rule allows at most `terms - 1`
/// positive roots of the bracket `B`, whatever the parity of its exponents.
/// When `d0 = 1`, `G` has a simple zero at the origin and the branch born
/// there is counted as one more, so `(r⁴, r², 1)` brackets give 3.
pub fn structural_count(support: &[u32]) -> usize {
    if support.is_empty() {
        return 0;
    }
    let d0 = *support.iter().min().unwrap();
    support.len() - 1 + usize::from(d0 == 1)
}

pub fn limit_cycle_upper_bound(
    sys: &PerturbedPlanarSystem,
    k: usize,
    opts: &BoundOptions,
) -> Result<UpperBound> {
    if k == 0 || k > MAX_ORDER {
        return Err(Error::Unsupported(format!(
            "averaging order must be in 1..={MAX_ORDER}, got {k}"
        )));
    }
    let nf = to_normal_form(sys)?;
    match (opts.mode, opts.branch) {
        (BoundMode::Numeric, Branch::F0Zero) => {
            if nf.has_symbols() {
                return domain("numeric mode needs a value for every β");
            }
            let res = averaging_components(&nf, k)?;
            let Some(first) = res.first_nonzero else {
                return Ok(UpperBound {
                    bound: None,
                    first_nonzero: None,
                    inconclusive: true,
                    support: Vec::new(),
                });
            };
            let g = res.g(first);
            let count = count_positive_simple_roots(&radial_to_rational(g)?)?;
            Ok(UpperBound {
                bound: Some(count),
                first_nonzero: Some(first),
                inconclusive: false,
                support: g.keys().copied().collect(),
            })
        }
        (BoundMode::Numeric, Branch::F0NonZero) => {
            let s = sampled_components(&nf, k, opts.z_max, opts.samples, opts.branch)?;
            Ok(match s.first_nonzero {
                None => UpperBound {
                    bound: None,
                    first_nonzero: None,
                    inconclusive: true,
                    support: Vec::new(),
                },
                Some(i) => UpperBound {
                    bound: Some(sign_changes(&s.g[i])),
                    first_nonzero: Some(i),
                    inconclusive: false,
                    support: Vec::new(),
                },
            })
        }
        (BoundMode::Structural(src), _) => {
            let support: Vec<u32> = match src {
                PatternSource::Printed => {
                    if !sys.is_cubic_example() {
                        return Err(Error::Unsupported(
                            "printed patterns exist only for the cubic example".into(),
                        ));
                    }
                    if sys.perturbation.iter().flatten().all(BivariatePoly::is_zero) {
                        Vec::new()
                    } else {
                        CUBIC_PRINTED_SUPPORT[k - 1].to_vec()
                    }
                }
                PatternSource::Computed => {
                    let forced = force_g1_zero(&nf);
                    let res = averaging_components(&forced, k)?;
                    res.g(k).keys().copied().collect()
                }
            };
            if support.is_empty() {
                return Ok(UpperBound {
                    bound: None,
                    first_nonzero: None,
                    inconclusive: true,
                    support,
                });
            }
            Ok(UpperBound {
                bound: Some(structural_count(&support)),
                first_nonzero: Some(k),
                inconclusive: false,
                support,
            })
        }
    }
}

/// Impose `β²_{1,2} = -β¹_{1,1}`, which kills the linear part of `G_1`.
fn force_g1_zero(nf: &NormalForm) -> NormalForm {
    let b22 = BetaId::new(2, 1, 2).var();
    let b11 = Poly::beta(BetaId::new(1, 1, 1));
    let mut out = nf.clone();
    for f in out.f.iter_mut() {
        let mut next = TrigPoly::zero();
        for (&(d, a, b), c) in f.terms() {
            let mut acc = Poly::zero();
            for (m, q) in c.terms() {
                let e = m.exponent(b22);
                let rest = Poly::term(m.without(b22), q.clone());
                acc.add_assign(&rest.mul(&b11.neg().pow(e)));
            }
            next.add_term(d, a, b, &acc);
        }
        *f = next;
    }
    out
}

/// Lower bounds stated alongside the recursion, `(n, H(n))`.
pub const STATED_LOWER_BOUNDS: [(u64, u64); 5] = [(1, 0), (3, 1), (7, 25), (15, 185), (31, 1262)];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LowerBound {
    pub n: u64,
    pub value: BigUint,
    /// Published value for this `n`, when there is one.
    pub stated: Option<u64>,
}

impl LowerBound {
    pub fn disagrees_with_stated(&self) -> bool {
        self.stated
            .is_some_and(|s| BigUint::from(s) != self.value)
    }
}

impl fmt::Display for LowerBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)?;
        if let Some(s) = self.stated {
            if self.disagrees_with_stated() {
                write!(f, " (published table lists {s}; recursion gives {})", self.value)?;
            }
        }
        Ok(())
    }
}

/// `H(2^{k+1} - 1) = 4 H(2^k - 1) + (2^k - 2)² + (2^k - 1)²`, `H(1) = 0`.
pub fn lower_bound_h(n: u64) -> Result<LowerBound> {
    let m = n as u128 + 1;
    if n == 0 || !m.is_power_of_two() {
        return domain(format!("n must be of the form 2^k - 1 with k >= 1, got {n}"));
    }
    let k = m.trailing_zeros();
    let mut h = BigUint::zero();
    for j in 1..k {
        let p = BigUint::one() << j;
        let a = &p - 2u32;
        let b = &p - 1u32;
        h = h * 4u32 + &a * &a + &b * &b;
    }
    let stated = STATED_LOWER_BOUNDS
        .iter()
        .find(|(x, _)| *x == n)
        .map(|(_, v)| *v);
    Ok(LowerBound {
        n,
        value: h,
        stated,
    })
}
