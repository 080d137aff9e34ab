//! Sparse multivariate polynomials with exact rational coefficients.
//!
//! Variable 0 is reserved for π; perturbation coefficients use the ids handed
//! out by [`BetaId::var`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

/// Variable id of π.
pub const PI: u32 = 0;

const BETA_SLOTS: u32 = 64;

/// Coefficient β^i_{k,j}: equation `i` (1 or 2), ε-order `k`, monomial `j`
/// (1-based, graded order u1, u2, u1², u1u2, u2², u1³, ...).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BetaId {
    pub i: u32,
    pub k: u32,
    pub j: u32,
}

impl BetaId {
    pub fn new(i: u32, k: u32, j: u32) -> Self {
        BetaId { i, k, j }
    }

    pub fn var(self) -> u32 {
        1 + ((self.k - 1) * 2 + (self.i - 1)) * BETA_SLOTS + (self.j - 1)
    }

    pub fn from_var(v: u32) -> Option<Self> {
        if v == PI {
            return None;
        }
        let x = v - 1;
        let j = x % BETA_SLOTS + 1;
        let ik = x / BETA_SLOTS;
        Some(BetaId {
            i: ik % 2 + 1,
            k: ik / 2 + 1,
            j,
        })
    }
}

impl fmt::Display for BetaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}_{}_{}", self.i, self.k, self.j)
    }
}

pub fn var_name(v: u32) -> String {
    match BetaId::from_var(v) {
        None => "pi".to_string(),
        Some(b) => b.to_string(),
    }
}

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn rat_to_f64(q: &Rational) -> f64 {
    let (n, d) = (q.numer(), q.denom());
    match (n.to_f64(), d.to_f64()) {
        (Some(a), Some(b)) if a.is_finite() && b.is_finite() => a / b,
        _ => {
            // scale both down by a common power of two
            let shift = n.bits().max(d.bits()).saturating_sub(1000);
            let a = (n >> shift).to_f64().unwrap_or(f64::NAN);
            let b = (d >> shift).to_f64().unwrap_or(f64::NAN);
            a / b
        }
    }
}

/// π to 60 significant digits, as a rational.
pub fn pi_rational() -> Rational {
    let digits = "314159265358979323846264338327950288419716939937510582097494";
    let n: BigInt = digits.parse().expect("literal");
    let d = num_traits::pow(BigInt::from(10), digits.len() - 1);
    Rational::new(n, d)
}

/// Sorted `(variable, exponent)` pairs, exponents positive.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial(Vec<(u32, u32)>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(v: u32) -> Self {
        Monomial(vec![(v, 1)])
    }

    pub fn pow_of(v: u32, e: u32) -> Self {
        if e == 0 {
            Monomial::one()
        } else {
            Monomial(vec![(v, e)])
        }
    }

    pub fn factors(&self) -> &[(u32, u32)] {
        &self.0
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn exponent(&self, v: u32) -> u32 {
        self.0
            .iter()
            .find(|(x, _)| *x == v)
            .map(|(_, e)| *e)
            .unwrap_or(0)
    }

    pub fn without(&self, v: u32) -> Self {
        Monomial(self.0.iter().copied().filter(|(x, _)| *x != v).collect())
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| e).sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            let (a, b) = (self.0[i], other.0[j]);
            if a.0 == b.0 {
                out.push((a.0, a.1 + b.1));
                i += 1;
                j += 1;
            } else if a.0 < b.0 {
                out.push(a);
                i += 1;
            } else {
                out.push(b);
                j += 1;
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Monomial(out)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Poly {
    terms: BTreeMap<Monomial, Rational>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn one() -> Self {
        Poly::constant(Rational::one())
    }

    pub fn constant(c: Rational) -> Self {
        let mut p = Poly::zero();
        p.add_term(Monomial::one(), c);
        p
    }

    pub fn var(v: u32) -> Self {
        let mut p = Poly::zero();
        p.add_term(Monomial::var(v), Rational::one());
        p
    }

    pub fn pi() -> Self {
        Poly::var(PI)
    }

    pub fn beta(b: BetaId) -> Self {
        Poly::var(b.var())
    }

    pub fn term(m: Monomial, c: Rational) -> Self {
        let mut p = Poly::zero();
        p.add_term(m, c);
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn add_term(&mut self, m: Monomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn add_assign(&mut self, other: &Poly) {
        for (m, c) in &other.terms {
            self.add_term(m.clone(), c.clone());
        }
    }

    pub fn sub_assign(&mut self, other: &Poly) {
        for (m, c) in &other.terms {
            self.add_term(m.clone(), -c.clone());
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        out.sub_assign(other);
        out
    }

    pub fn neg(&self) -> Poly {
        self.scale(&-Rational::one())
    }

    pub fn scale(&self, c: &Rational) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self
                .terms
                .iter()
                .map(|(m, x)| (m.clone(), x * c))
                .collect(),
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    pub fn mul_monomial(&self, m: &Monomial, c: &Rational) -> Poly {
        let mut out = Poly::zero();
        for (ma, ca) in &self.terms {
            out.add_term(ma.mul(m), ca * c);
        }
        out
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut out = Poly::one();
        for _ in 0..e {
            out = out.mul(self);
        }
        out
    }

    /// The value if the polynomial has no variables.
    pub fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => {
                let (m, c) = self.terms.iter().next().unwrap();
                m.is_one().then(|| c.clone())
            }
            _ => None,
        }
    }

    pub fn variables(&self) -> BTreeSet<u32> {
        self.terms
            .keys()
            .flat_map(|m| m.factors().iter().map(|(v, _)| *v))
            .collect()
    }

    pub fn max_exponent(&self, v: u32) -> u32 {
        self.terms.keys().map(|m| m.exponent(v)).max().unwrap_or(0)
    }

    /// Replace the listed variables by rational values.
    pub fn substitute(&self, values: &BTreeMap<u32, Rational>) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let mut coef = c.clone();
            let mut rest = Vec::new();
            for &(v, e) in m.factors() {
                match values.get(&v) {
                    Some(x) => coef *= num_traits::pow(x.clone(), e as usize),
                    None => rest.push((v, e)),
                }
            }
            out.add_term(Monomial(rest), coef);
        }
        out
    }

    pub fn eval_f64(&self, value: impl Fn(u32) -> f64) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| {
                m.factors()
                    .iter()
                    .fold(rat_to_f64(c), |acc, &(v, e)| acc * value(v).powi(e as i32))
            })
            .sum()
    }

    /// Split by the power of π: `self = Σ_j π^j · parts[j]`.
    pub fn split_pi(&self) -> BTreeMap<u32, Poly> {
        let mut out: BTreeMap<u32, Poly> = BTreeMap::new();
        for (m, c) in &self.terms {
            out.entry(m.exponent(PI))
                .or_default()
                .add_term(m.without(PI), c.clone());
        }
        out
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (n, (m, c)) in self.terms.iter().enumerate() {
            let neg = c.is_negative();
            let a = c.abs();
            if n == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            let mut parts = Vec::new();
            if !a.is_one() || m.is_one() {
                parts.push(a.to_string());
            }
            for &(v, e) in m.factors() {
                if e == 1 {
                    parts.push(var_name(v));
                } else {
                    parts.push(format!("{}^{}", var_name(v), e));
                }
            }
            write!(f, "{}", parts.join("*"))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_ids_round_trip() {
        for i in 1..=2 {
            for k in 1..=5 {
                for j in 1..=9 {
                    let b = BetaId::new(i, k, j);
                    assert_eq!(BetaId::from_var(b.var()), Some(b));
                }
            }
        }
        assert_eq!(BetaId::from_var(PI), None);
    }

    #[test]
    fn arithmetic_cancels() {
        let x = Poly::var(1);
        let y = Poly::var(2);
        let s = x.add(&y);
        let d = x.sub(&y);
        let prod = s.mul(&d);
        let expect = x.mul(&x).sub(&y.mul(&y));
        assert_eq!(prod, expect);
        assert!(prod.sub(&expect).is_zero());
    }

    #[test]
    fn substitution_and_split() {
        let b = BetaId::new(1, 1, 1).var();
        let p = Poly::pi().mul(&Poly::var(b)).add(&Poly::constant(rat(1, 2)));
        let mut vals = BTreeMap::new();
        vals.insert(b, rat_int(3));
        let q = p.substitute(&vals);
        let parts = q.split_pi();
        assert_eq!(parts[&1].as_constant(), Some(rat_int(3)));
        assert_eq!(parts[&0].as_constant(), Some(rat(1, 2)));
    }

    #[test]
    fn pi_rational_is_close() {
        assert!((rat_to_f64(&pi_rational()) - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn display_is_readable() {
        let p = Poly::pi()
            .mul(&Poly::beta(BetaId::new(1, 1, 1)))
            .sub(&Poly::constant(rat(1, 4)));
        assert_eq!(p.to_string(), "-1/4 + pi*b1_1_1");
    }
}
