//! Finite sums of `c · r^d · t^p · {cos, sin}(m t)` with polynomial `c`.
//!
//! Products of powers of sin and cos are linearised to harmonics, so the
//! representation is canonical and integration is exact.

use std::collections::BTreeMap;

use super::poly::{rat, rat_int, Monomial, Poly, Rational, PI};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) struct Key {
    pub r: u32,
    pub tp: u32,
    pub m: u32,
    pub sin: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub(crate) struct Series {
    pub terms: BTreeMap<Key, Poly>,
}

/// Radial polynomial `Σ_d c_d r^d`.
pub type RadialPoly = BTreeMap<u32, Poly>;

impl Series {
    pub fn zero() -> Self {
        Series::default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn size(&self) -> usize {
        self.terms.values().map(Poly::len).sum()
    }

    pub fn monomial(r: u32, c: Poly) -> Self {
        let mut s = Series::zero();
        s.push(r, 0, 0, false, c);
        s
    }

    fn trig(sin: bool) -> Self {
        let mut s = Series::zero();
        s.push(0, 0, 1, sin, Poly::one());
        s
    }

    /// `c · r^deg · sin^a t · cos^b t`.
    pub fn from_trig_term(deg: u32, a: u32, b: u32, c: &Poly) -> Self {
        let mut s = Series::monomial(deg, c.clone());
        let sin = Series::trig(true);
        let cos = Series::trig(false);
        for _ in 0..a {
            s = s.mul(&sin);
        }
        for _ in 0..b {
            s = s.mul(&cos);
        }
        s
    }

    /// Insert `c · r^r · t^tp · trig(m t)`; `m` may be negative.
    fn push_signed(&mut self, r: u32, tp: u32, m: i64, sin: bool, c: Poly) {
        if sin {
            if m == 0 {
                return;
            }
            if m < 0 {
                self.push(r, tp, (-m) as u32, true, c.neg());
            } else {
                self.push(r, tp, m as u32, true, c);
            }
        } else {
            self.push(r, tp, m.unsigned_abs() as u32, false, c);
        }
    }

    fn push(&mut self, r: u32, tp: u32, m: u32, sin: bool, c: Poly) {
        if c.is_zero() || (sin && m == 0) {
            return;
        }
        let key = Key { r, tp, m, sin };
        let slot = self.terms.entry(key).or_default();
        slot.add_assign(&c);
        if slot.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn add_assign(&mut self, other: &Series) {
        for (k, c) in &other.terms {
            self.push(k.r, k.tp, k.m, k.sin, c.clone());
        }
    }

    pub fn scale(&self, c: &Rational) -> Series {
        let mut out = Series::zero();
        for (k, p) in &self.terms {
            out.push(k.r, k.tp, k.m, k.sin, p.scale(c));
        }
        out
    }

    pub fn mul(&self, other: &Series) -> Series {
        let half = rat(1, 2);
        let mut out = Series::zero();
        for (ka, ca) in &self.terms {
            for (kb, cb) in &other.terms {
                let c = ca.mul(cb).scale(&half);
                let r = ka.r + kb.r;
                let tp = ka.tp + kb.tp;
                let (a, b) = (ka.m as i64, kb.m as i64);
                match (ka.sin, kb.sin) {
                    (false, false) => {
                        out.push_signed(r, tp, a - b, false, c.clone());
                        out.push_signed(r, tp, a + b, false, c);
                    }
                    (true, true) => {
                        out.push_signed(r, tp, a - b, false, c.clone());
                        out.push_signed(r, tp, a + b, false, c.neg());
                    }
                    (true, false) => {
                        out.push_signed(r, tp, a + b, true, c.clone());
                        out.push_signed(r, tp, a - b, true, c);
                    }
                    (false, true) => {
                        out.push_signed(r, tp, a + b, true, c.clone());
                        out.push_signed(r, tp, b - a, true, c);
                    }
                }
            }
        }
        out
    }

    /// `∂^n / ∂r^n`.
    pub fn diff_r(&self, n: u32) -> Series {
        let mut out = Series::zero();
        for (k, c) in &self.terms {
            if k.r < n {
                continue;
            }
            let falling: i64 = (0..n).map(|i| (k.r - i) as i64).product();
            out.push(k.r - n, k.tp, k.m, k.sin, c.scale(&rat_int(falling)));
        }
        out
    }

    /// `∫_0^t` in the time variable.
    pub fn integrate(&self) -> Series {
        let mut out = Series::zero();
        for (k, c) in &self.terms {
            for (tp, m, sin, w) in integral_of(k.tp, k.m, k.sin) {
                out.push(k.r, tp, m, sin, c.scale(&w));
            }
        }
        out
    }

    /// Value at `t = 2π`, with π kept symbolic.
    pub fn at_two_pi(&self) -> RadialPoly {
        let mut out: RadialPoly = BTreeMap::new();
        for (k, c) in &self.terms {
            if k.sin {
                continue;
            }
            let two = num_traits::pow(rat_int(2), k.tp as usize);
            let v = c.mul_monomial(&Monomial::pow_of(PI, k.tp), &two);
            let slot = out.entry(k.r).or_default();
            slot.add_assign(&v);
        }
        out.retain(|_, p| !p.is_zero());
        out
    }

    pub fn eval_f64(&self, t: f64, r: f64, value: &impl Fn(u32) -> f64) -> f64 {
        self.terms
            .iter()
            .map(|(k, c)| {
                let trig = if k.sin {
                    (k.m as f64 * t).sin()
                } else {
                    (k.m as f64 * t).cos()
                };
                c.eval_f64(value) * r.powi(k.r as i32) * t.powi(k.tp as i32) * trig
            })
            .sum()
    }
}

/// `∫_0^t s^tp trig(m s) ds` as `(tp', m', sin', weight)` terms.
fn integral_of(tp: u32, m: u32, sin: bool) -> Vec<(u32, u32, bool, Rational)> {
    let mut out = Vec::new();
    if m == 0 {
        // sin(0 s) never appears
        out.push((tp + 1, 0, false, rat(1, tp as i64 + 1)));
        return out;
    }
    let inv = rat(1, m as i64);
    if !sin {
        // [s^p sin(ms)/m] - (p/m) ∫ s^(p-1) sin(ms)
        out.push((tp, m, true, inv.clone()));
        if tp > 0 {
            let w = -inv * rat_int(tp as i64);
            for (a, b, c, x) in integral_of(tp - 1, m, true) {
                out.push((a, b, c, x * &w));
            }
        }
    } else {
        // [-s^p cos(ms)/m] + [p = 0]/m + (p/m) ∫ s^(p-1) cos(ms)
        out.push((tp, m, false, -inv.clone()));
        if tp == 0 {
            out.push((0, 0, false, inv));
        } else {
            let w = inv * rat_int(tp as i64);
            for (a, b, c, x) in integral_of(tp - 1, m, false) {
                out.push((a, b, c, x * &w));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric(s: &Series, t: f64) -> f64 {
        s.eval_f64(t, 1.0, &|v| if v == PI { std::f64::consts::PI } else { 0.0 })
    }

    #[test]
    fn powers_linearise_correctly() {
        for a in 0..5 {
            for b in 0..5 {
                let s = Series::from_trig_term(0, a, b, &Poly::one());
                for &t in &[0.3f64, 1.7, 4.1] {
                    let want = t.sin().powi(a as i32) * t.cos().powi(b as i32);
                    assert!((numeric(&s, t) - want).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn integration_matches_derivative() {
        let mut s = Series::from_trig_term(0, 3, 2, &Poly::one());
        s = s.mul(&Series::from_trig_term(0, 0, 1, &Poly::one()).integrate());
        let int = s.integrate();
        let h = 1e-5;
        for &t in &[0.4, 2.2, 5.9] {
            let d = (numeric(&int, t + h) - numeric(&int, t - h)) / (2.0 * h);
            assert!((d - numeric(&s, t)).abs() < 1e-8);
        }
        assert!(numeric(&int, 0.0).abs() < 1e-14);
    }

    #[test]
    fn full_period_of_sin_squared_is_pi() {
        let s = Series::from_trig_term(0, 2, 0, &Poly::one()).integrate();
        let v = s.at_two_pi();
        assert_eq!(v[&0], Poly::pi());
        assert_eq!(v.len(), 1);
    }
}
