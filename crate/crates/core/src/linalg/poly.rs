//! Univariate polynomials over F_q with ascending coefficient vectors.

use crate::error::{Error, Result};
use crate::gf::{FieldCtx, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

/// A polynomial `c_0 + c_1 t + ... + c_d t^d`; the zero polynomial has no coefficients.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Poly {
    coeffs: Vec<Scalar>,
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Poly[{}]", self.to_text())
    }
}

impl Poly {
    pub fn new(mut coeffs: Vec<Scalar>) -> Poly {
        while coeffs.last() == Some(&0) {
            coeffs.pop();
        }
        Poly { coeffs }
    }
    pub fn zero() -> Poly {
        Poly { coeffs: Vec::new() }
    }
    pub fn one() -> Poly {
        Poly { coeffs: vec![1] }
    }
    pub fn constant(c: Scalar) -> Poly {
        Poly::new(vec![c])
    }
    /// The monomial t.
    pub fn x() -> Poly {
        Poly { coeffs: vec![0, 1] }
    }
    /// `t - a`.
    pub fn linear(f: &FieldCtx, a: Scalar) -> Poly {
        Poly::new(vec![f.neg(a), 1])
    }
    pub fn coeffs(&self) -> &[Scalar] {
        &self.coeffs
    }
    pub fn coeff(&self, i: usize) -> Scalar {
        self.coeffs.get(i).copied().unwrap_or(0)
    }
    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }
    pub fn is_one(&self) -> bool {
        self.coeffs == [1]
    }
    /// Degree; the zero polynomial reports `None`.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }
    pub fn deg(&self) -> usize {
        self.degree().unwrap_or(0)
    }
    pub fn lead(&self) -> Scalar {
        self.coeffs.last().copied().unwrap_or(0)
    }
    pub fn is_monic(&self) -> bool {
        self.lead() == 1
    }

    pub fn monic(&self, f: &FieldCtx) -> Poly {
        if self.is_zero() {
            return self.clone();
        }
        let li = f.inv(self.lead());
        self.scale(f, li)
    }

    pub fn scale(&self, f: &FieldCtx, c: Scalar) -> Poly {
        Poly::new(self.coeffs.iter().map(|&a| f.mul(a, c)).collect())
    }

    pub fn add(&self, f: &FieldCtx, o: &Poly) -> Poly {
        let n = self.coeffs.len().max(o.coeffs.len());
        Poly::new((0..n).map(|i| f.add(self.coeff(i), o.coeff(i))).collect())
    }

    pub fn sub(&self, f: &FieldCtx, o: &Poly) -> Poly {
        let n = self.coeffs.len().max(o.coeffs.len());
        Poly::new((0..n).map(|i| f.sub(self.coeff(i), o.coeff(i))).collect())
    }

    pub fn mul(&self, f: &FieldCtx, o: &Poly) -> Poly {
        if self.is_zero() || o.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![0; self.coeffs.len() + o.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (j, &b) in o.coeffs.iter().enumerate() {
                out[i + j] = f.add(out[i + j], f.mul(a, b));
            }
        }
        Poly::new(out)
    }

    /// Division with remainder; panics on a zero divisor.
    pub fn divrem(&self, f: &FieldCtx, d: &Poly) -> (Poly, Poly) {
        assert!(!d.is_zero(), "division by zero polynomial");
        let dd = d.coeffs.len() - 1;
        if self.coeffs.len() <= dd {
            return (Poly::zero(), self.clone());
        }
        let li = f.inv(d.lead());
        let mut r = self.coeffs.clone();
        let mut qv = vec![0; r.len() - dd];
        for k in (0..qv.len()).rev() {
            let c = f.mul(r[k + dd], li);
            qv[k] = c;
            if c != 0 {
                for (i, &di) in d.coeffs.iter().enumerate() {
                    r[k + i] = f.sub(r[k + i], f.mul(c, di));
                }
            }
        }
        r.truncate(dd);
        (Poly::new(qv), Poly::new(r))
    }

    pub fn rem(&self, f: &FieldCtx, d: &Poly) -> Poly {
        self.divrem(f, d).1
    }

    pub fn divides(&self, f: &FieldCtx, other: &Poly) -> bool {
        other.rem(f, self).is_zero()
    }

    /// Monic gcd.
    pub fn gcd(&self, f: &FieldCtx, o: &Poly) -> Poly {
        let mut a = self.clone();
        let mut b = o.clone();
        while !b.is_zero() {
            let r = a.rem(f, &b);
            a = b;
            b = r;
        }
        a.monic(f)
    }

    pub fn mulmod(&self, f: &FieldCtx, o: &Poly, m: &Poly) -> Poly {
        self.mul(f, o).rem(f, m)
    }

    pub fn powmod(&self, f: &FieldCtx, mut k: u64, m: &Poly) -> Poly {
        let mut acc = Poly::one().rem(f, m);
        let mut b = self.rem(f, m);
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mulmod(f, &b, m);
            }
            b = b.mulmod(f, &b, m);
            k >>= 1;
        }
        acc
    }

    pub fn pow(&self, f: &FieldCtx, k: u32) -> Poly {
        let mut acc = Poly::one();
        for _ in 0..k {
            acc = acc.mul(f, self);
        }
        acc
    }

    pub fn derivative(&self, f: &FieldCtx) -> Poly {
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| f.mul(c, f.from_int(i as i64)))
                .collect(),
        )
    }

    pub fn eval(&self, f: &FieldCtx, x: Scalar) -> Scalar {
        self.coeffs.iter().rev().fold(0, |acc, &c| f.add(f.mul(acc, x), c))
    }

    /// Apply a field map to every coefficient (e.g. θ).
    pub fn map_coeffs(&self, g: impl Fn(Scalar) -> Scalar) -> Poly {
        Poly::new(self.coeffs.iter().map(|&c| g(c)).collect())
    }

    /// Ascending coefficient text "c0 c1 ... cd"; the zero polynomial prints as "0".
    pub fn to_text(&self) -> String {
        if self.is_zero() {
            return "0".into();
        }
        self.coeffs.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
    }

    pub fn parse(f: &FieldCtx, s: &str) -> Result<Poly> {
        let coeffs = s
            .split_whitespace()
            .map(|t| f.parse_scalar(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Poly::new(coeffs))
    }

    /// p-th root of a polynomial whose derivative vanishes.
    fn pth_root(&self, f: &FieldCtx) -> Poly {
        let p = f.p() as usize;
        let qp = (f.q() / f.p()) as u64;
        Poly::new(
            self.coeffs
                .iter()
                .step_by(p)
                .map(|&c| f.pow(c, qp))
                .collect(),
        )
    }
}

/// Ben-Or irreducibility test.
pub fn is_irreducible(f: &FieldCtx, p: &Poly) -> bool {
    let d = match p.degree() {
        None | Some(0) => return false,
        Some(1) => return true,
        Some(d) => d,
    };
    let p = p.monic(f);
    if p.coeff(0) == 0 {
        return false;
    }
    let x = Poly::x();
    let mut h = x.clone();
    for _ in 1..=d / 2 {
        h = h.powmod(f, f.q() as u64, &p);
        if !p.gcd(f, &h.sub(f, &x)).is_one() {
            return false;
        }
    }
    true
}

fn squarefree_decomposition(f: &FieldCtx, a: &Poly) -> Vec<(Poly, u32)> {
    let mut out = Vec::new();
    if a.deg() == 0 {
        return out;
    }
    let da = a.derivative(f);
    if da.is_zero() {
        for (g, m) in squarefree_decomposition(f, &a.pth_root(f)) {
            out.push((g, m * f.p()));
        }
        return out;
    }
    let mut c = a.gcd(f, &da);
    let mut w = a.divrem(f, &c).0;
    let mut i = 1u32;
    while w.deg() > 0 {
        let y = w.gcd(f, &c);
        let fac = w.divrem(f, &y).0;
        if fac.deg() > 0 {
            out.push((fac.monic(f), i));
        }
        w = y;
        c = c.divrem(f, &w).0;
        i += 1;
    }
    if c.deg() > 0 {
        for (g, m) in squarefree_decomposition(f, &c.pth_root(f)) {
            out.push((g, m * f.p()));
        }
    }
    out
}

fn distinct_degree(f: &FieldCtx, a: &Poly) -> Vec<(Poly, usize)> {
    let mut out = Vec::new();
    let mut rest = a.monic(f);
    let x = Poly::x();
    let mut h = x.clone();
    let mut i = 1;
    while rest.deg() >= 2 * i {
        h = h.powmod(f, f.q() as u64, &rest);
        let g = rest.gcd(f, &h.sub(f, &x));
        if !g.is_one() {
            out.push((g.clone(), i));
            rest = rest.divrem(f, &g).0;
            h = h.rem(f, &rest);
        }
        i += 1;
    }
    if rest.deg() > 0 {
        let d = rest.deg();
        out.push((rest, d));
    }
    out
}

fn roots_by_search(f: &FieldCtx, a: &Poly) -> Vec<Scalar> {
    f.elements().filter(|&x| a.eval(f, x) == 0).collect()
}

/// Split a squarefree product of irreducibles all of degree `d`.
fn equal_degree(f: &FieldCtx, a: &Poly, d: usize, rng: &mut ChaCha8Rng, out: &mut Vec<Poly>) {
    let n = a.deg();
    if n == d {
        out.push(a.monic(f));
        return;
    }
    if d == 1 && f.q() <= 4096 {
        for r in roots_by_search(f, a) {
            out.push(Poly::linear(f, r));
        }
        return;
    }
    loop {
        let r = Poly::new((0..n).map(|_| rng.gen_range(0..f.q()) as Scalar).collect());
        if r.deg() == 0 {
            continue;
        }
        let b = if f.p() == 2 {
            // absolute trace: r + r^2 + ... + r^{2^{e d - 1}}
            let mut t = r.clone();
            let mut acc = r.clone();
            for _ in 1..(f.e() as usize * d) {
                t = t.mulmod(f, &t, a);
                acc = acc.add(f, &t);
            }
            acc
        } else {
            // r^{(q^d - 1)/2} = (prod_{i<d} r^{q^i})^{(q-1)/2}
            let mut prod = r.rem(f, a);
            let mut t = r.rem(f, a);
            for _ in 1..d {
                t = t.powmod(f, f.q() as u64, a);
                prod = prod.mulmod(f, &t, a);
            }
            prod.powmod(f, (f.q() as u64 - 1) / 2, a).sub(f, &Poly::one())
        };
        let g = a.gcd(f, &b);
        if g.deg() > 0 && g.deg() < n {
            let h = a.divrem(f, &g).0;
            equal_degree(f, &g, d, rng, out);
            equal_degree(f, &h, d, rng, out);
            return;
        }
    }
}

/// Complete factorization into monic irreducibles with multiplicities,
/// sorted by (degree, coefficients). The leading coefficient is dropped.
pub fn factor_poly(f: &FieldCtx, a: &Poly) -> Result<Vec<(Poly, u32)>> {
    if a.is_zero() {
        return Err(Error::Precondition("cannot factor the zero polynomial".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_f00d);
    let mut res: Vec<(Poly, u32)> = Vec::new();
    for (sq, m) in squarefree_decomposition(f, &a.monic(f)) {
        if sq.deg() <= 3 {
            // a cubic or smaller is reducible iff it has a root
            let mut rest = sq.clone();
            for r in roots_by_search(f, &sq) {
                let lin = Poly::linear(f, r);
                rest = rest.divrem(f, &lin).0;
                res.push((lin, m));
            }
            if rest.deg() > 0 {
                res.push((rest.monic(f), m));
            }
            continue;
        }
        for (g, d) in distinct_degree(f, &sq) {
            let mut parts = Vec::new();
            equal_degree(f, &g, d, &mut rng, &mut parts);
            for p in parts {
                res.push((p, m));
            }
        }
    }
    // merge duplicates (cannot arise from a correct decomposition, but keep canonical)
    res.sort_by(|a, b| (a.0.deg(), &a.0.coeffs).cmp(&(b.0.deg(), &b.0.coeffs)));
    let mut merged: Vec<(Poly, u32)> = Vec::new();
    for (p, m) in res {
        match merged.last_mut() {
            Some((lp, lm)) if *lp == p => *lm += m,
            _ => merged.push((p, m)),
        }
    }
    Ok(merged)
}
