//! Counting positive simple real roots of univariate polynomials.

use nalgebra::DMatrix;
use num_traits::{Signed, Zero};

use super::poly::Rational;
use crate::error::{domain, Result};

/// Coefficients in ascending order of degree.
pub type UniPoly = Vec<Rational>;

fn trim(p: &mut UniPoly) {
    while p.last().is_some_and(|c| c.is_zero()) {
        p.pop();
    }
}

fn derivative(p: &[Rational]) -> UniPoly {
    p.iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| c * Rational::from_integer((i as i64).into()))
        .collect()
}

fn rem(a: &[Rational], b: &[Rational]) -> UniPoly {
    let mut r: UniPoly = a.to_vec();
    trim(&mut r);
    let db = b.len() - 1;
    let lead = &b[db];
    while r.len() > db {
        let shift = r.len() - 1 - db;
        let f = r.last().unwrap() / lead;
        for (i, c) in b.iter().enumerate() {
            r[shift + i] -= &f * c;
        }
        r.pop();
        trim(&mut r);
    }
    r
}

fn gcd(a: &[Rational], b: &[Rational]) -> UniPoly {
    let mut x: UniPoly = a.to_vec();
    let mut y: UniPoly = b.to_vec();
    trim(&mut x);
    trim(&mut y);
    while !y.is_empty() {
        let r = rem(&x, &y);
        x = y;
        y = r;
    }
    x
}

fn sturm_chain(p: &[Rational]) -> Vec<UniPoly> {
    let mut chain = vec![p.to_vec(), derivative(p)];
    trim(&mut chain[1]);
    while !chain.last().unwrap().is_empty() {
        let n = chain.len();
        let r = rem(&chain[n - 2], &chain[n - 1]);
        chain.push(r.into_iter().map(|c| -c).collect());
    }
    chain.pop();
    chain
}

fn sign_changes(signs: impl Iterator<Item = i8>) -> usize {
    let mut last = 0i8;
    let mut n = 0;
    for s in signs.filter(|s| *s != 0) {
        if last != 0 && s != last {
            n += 1;
        }
        last = s;
    }
    n
}

fn sgn(c: &Rational) -> i8 {
    if c.is_positive() {
        1
    } else if c.is_negative() {
        -1
    } else {
        0
    }
}

/// Distinct roots in `(0, ∞)` of `p`, which must satisfy `p(0) ≠ 0`.
fn distinct_positive(p: &[Rational]) -> usize {
    if p.len() <= 1 {
        return 0;
    }
    let chain = sturm_chain(p);
    let at_zero = sign_changes(chain.iter().map(|q| sgn(&q[0])));
    let at_inf = sign_changes(chain.iter().map(|q| sgn(q.last().unwrap())));
    at_zero - at_inf
}

/// Exact number of simple real roots in `(0, ∞)`.
pub fn count_positive_simple_roots(p: &[Rational]) -> Result<usize> {
    let mut q: UniPoly = p.to_vec();
    trim(&mut q);
    if q.is_empty() {
        return domain("polynomial is identically zero");
    }
    let lead_zeros = q.iter().take_while(|c| c.is_zero()).count();
    q.drain(..lead_zeros);
    let dq = derivative(&q);
    let g = gcd(&q, &dq);
    let all = distinct_positive(&q);
    let repeated = distinct_positive(&g);
    Ok(all - repeated)
}

/// Companion-matrix fallback for floating-point coefficients.
///
/// Roots whose imaginary part is below `tol` (relative to their size) count as
/// real; real roots closer than `sqrt(tol)` are treated as one repeated root.
pub fn count_positive_simple_roots_f64(p: &[f64], tol: f64) -> Result<usize> {
    let mut q = p.to_vec();
    while q.last().is_some_and(|c| *c == 0.0) {
        q.pop();
    }
    if q.is_empty() {
        return domain("polynomial is identically zero");
    }
    let lead_zeros = q.iter().take_while(|c| **c == 0.0).count();
    q.drain(..lead_zeros);
    let n = q.len() - 1;
    if n == 0 {
        return Ok(0);
    }
    let lead = q[n];
    let mut comp = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        comp[(i, n - 1)] = -q[i] / lead;
    }
    let mut real: Vec<f64> = comp
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= tol * z.norm().max(1.0))
        .map(|z| z.re)
        .collect();
    real.sort_by(|a, b| a.total_cmp(b));
    let merge = tol.sqrt();
    let mut count = 0;
    let mut i = 0;
    while i < real.len() {
        let mut j = i + 1;
        while j < real.len() && (real[j] - real[j - 1]).abs() <= merge * real[j].abs().max(1.0) {
            j += 1;
        }
        if j - i == 1 && real[i] > tol {
            count += 1;
        }
        i = j;
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limitcycle::poly::rat_int;
    use rand::{Rng, SeedableRng};

    fn ints(c: &[i64]) -> UniPoly {
        c.iter().map(|&x| rat_int(x)).collect()
    }

    #[test]
    fn documented_examples() {
        assert_eq!(count_positive_simple_roots(&ints(&[0, -1, 0, 1])).unwrap(), 1);
        assert_eq!(count_positive_simple_roots(&ints(&[0, 1, 0, 1])).unwrap(), 0);
        assert_eq!(
            count_positive_simple_roots(&ints(&[0, 4, 0, -5, 0, 1])).unwrap(),
            2
        );
        assert!(count_positive_simple_roots(&ints(&[0, 0])).is_err());
    }

    #[test]
    fn repeated_roots_are_not_simple() {
        // (r-1)^2 (r-2)
        assert_eq!(count_positive_simple_roots(&ints(&[-2, 5, -4, 1])).unwrap(), 1);
        // (r-1)^3
        assert_eq!(count_positive_simple_roots(&ints(&[-1, 3, -3, 1])).unwrap(), 0);
    }

    #[test]
    fn numeric_fallback_agrees() {
        let cases: [&[i64]; 4] = [&[0, -1, 0, 1], &[0, 1, 0, 1], &[0, 4, 0, -5, 0, 1], &[-2, 5, -4, 1]];
        for c in cases {
            let f: Vec<f64> = c.iter().map(|&x| x as f64).collect();
            assert_eq!(
                count_positive_simple_roots_f64(&f, 1e-9).unwrap(),
                count_positive_simple_roots(&ints(c)).unwrap()
            );
        }
    }

    fn scan(c: &[i64]) -> usize {
        let lead = *c.last().unwrap() as f64;
        let bound = 1.0 + c.iter().map(|&x| (x as f64 / lead).abs()).fold(0.0, f64::max);
        let eval = |x: f64| c.iter().rev().fold(0.0, |acc, &a| acc * x + a as f64);
        let n = 10_000;
        let mut changes = 0;
        let mut prev = eval(0.0);
        for i in 1..=n {
            let x = bound * i as f64 / n as f64;
            let v = eval(x);
            if v != 0.0 && prev != 0.0 && v.signum() != prev.signum() {
                changes += 1;
            }
            if v != 0.0 {
                prev = v;
            }
        }
        changes
    }

    #[test]
    fn agrees_with_sign_scan_on_random_polynomials() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let deg = rng.gen_range(1..=8);
            let mut c: Vec<i64> = (0..=deg).map(|_| rng.gen_range(-9..=9)).collect();
            if c[deg] == 0 {
                c[deg] = 1;
            }
            if c[0] == 0 {
                c[0] = -3;
            }
            let exact = count_positive_simple_roots(&ints(&c)).unwrap();
            assert_eq!(exact, scan(&c), "coefficients {c:?}");
        }
    }
}
