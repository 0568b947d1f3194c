//! Finite fields GF(p^e) with q ≤ 2^16, table driven.
//!
//! Elements are encoded as integers in `[0, q)`: the polynomial
//! `c_0 + c_1 t + ... + c_{e-1} t^{e-1}` (mod the canonical modulus) has index
//! `c_0 + c_1 p + ... + c_{e-1} p^{e-1}`. The canonical modulus is the
//! lexicographically least monic irreducible of degree `e`, comparing the
//! coefficient vectors `(c_0, c_1, ..., c_{e-1})` from the constant term up.
//! The tabulation generator is the least index of multiplicative order `q - 1`.

use crate::error::{Error, Result};
use std::fmt;
use std::sync::Arc;

/// Canonical integer encoding of a field element.
pub type Scalar = u16;

/// Shared handle to an immutable field context.
pub type Field = Arc<FieldCtx>;

const NO_LOG: u32 = u32::MAX;
/// Full addition and multiplication tables are kept up to this size.
const TABLE_LIMIT: u32 = 256;

pub struct FieldCtx {
    p: u32,
    e: u32,
    q: u32,
    modulus: Vec<u32>,
    generator: Scalar,
    exp: Vec<Scalar>,
    log: Vec<u32>,
    zech: Vec<u32>,
    neg: Vec<Scalar>,
    inv: Vec<Scalar>,
    add_tab: Vec<Scalar>,
    mul_tab: Vec<Scalar>,
    theta: Option<Vec<Scalar>>,
}

impl fmt::Debug for FieldCtx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.descriptor())
    }
}

impl PartialEq for FieldCtx {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p && self.e == other.e
    }
}
impl Eq for FieldCtx {}

pub(crate) fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

pub(crate) fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

// Minimal F_p[t] helpers used only while constructing the field.
mod fp {
    pub fn trim(a: &mut Vec<u32>) {
        while a.last() == Some(&0) {
            a.pop();
        }
    }

    pub fn inv(a: u32, p: u32) -> u32 {
        let mut r = 1u64;
        let mut b = a as u64;
        let mut k = p - 2;
        while k > 0 {
            if k & 1 == 1 {
                r = r * b % p as u64;
            }
            b = b * b % p as u64;
            k >>= 1;
        }
        r as u32
    }

    pub fn rem(a: &[u32], m: &[u32], p: u32) -> Vec<u32> {
        let mut r = a.to_vec();
        trim(&mut r);
        let dm = m.len() - 1;
        let lead_inv = inv(m[dm], p);
        while r.len() > dm {
            let shift = r.len() - 1 - dm;
            let c = (*r.last().unwrap() as u64 * lead_inv as u64 % p as u64) as u32;
            for (i, &mi) in m.iter().enumerate() {
                let v = (r[shift + i] as u64 + (p - c) as u64 * mi as u64) % p as u64;
                r[shift + i] = v as u32;
            }
            trim(&mut r);
        }
        r
    }

    pub fn mulmod(a: &[u32], b: &[u32], m: &[u32], p: u32) -> Vec<u32> {
        if a.is_empty() || b.is_empty() {
            return Vec::new();
        }
        let mut prod = vec![0u64; a.len() + b.len() - 1];
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                prod[i + j] = (prod[i + j] + x as u64 * y as u64) % p as u64;
            }
        }
        let prod: Vec<u32> = prod.into_iter().map(|v| v as u32).collect();
        rem(&prod, m, p)
    }

    pub fn gcd(a: &[u32], b: &[u32], p: u32) -> Vec<u32> {
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        trim(&mut a);
        trim(&mut b);
        while !b.is_empty() {
            let r = rem(&a, &b, p);
            a = b;
            b = r;
        }
        a
    }

    pub fn sub(a: &[u32], b: &[u32], p: u32) -> Vec<u32> {
        let n = a.len().max(b.len());
        let mut out: Vec<u32> = (0..n)
            .map(|i| {
                let x = a.get(i).copied().unwrap_or(0);
                let y = b.get(i).copied().unwrap_or(0);
                (x + p - y) % p
            })
            .collect();
        trim(&mut out);
        out
    }

    /// Irreducibility of a monic polynomial of degree ≥ 1 over F_p.
    pub fn is_irreducible(f: &[u32], p: u32) -> bool {
        let d = f.len() - 1;
        if d == 1 {
            return true;
        }
        if f[0] == 0 {
            return false;
        }
        let x = vec![0, 1];
        let mut xp = x.clone();
        for _ in 1..=d / 2 {
            // xp <- xp^p mod f
            let mut acc = vec![1u32];
            let mut base = xp.clone();
            let mut k = p;
            while k > 0 {
                if k & 1 == 1 {
                    acc = mulmod(&acc, &base, f, p);
                }
                base = mulmod(&base, &base, f, p);
                k >>= 1;
            }
            xp = acc;
            let g = gcd(f, &sub(&xp, &x, p), p);
            if g.len() > 1 {
                return false;
            }
        }
        true
    }
}

fn digits(mut x: u32, p: u32, e: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(e as usize);
    for _ in 0..e {
        out.push(x % p);
        x /= p;
    }
    out
}

fn undigits(d: &[u32], p: u32) -> u32 {
    d.iter().rev().fold(0, |acc, &c| acc * p + c)
}

/// Construct GF(p^e) with the canonical modulus.
pub fn make_field(p: u32, e: u32) -> Result<Field> {
    if !is_prime(p as u64) {
        return Err(Error::Field(format!("{p} is not prime")));
    }
    if e == 0 {
        return Err(Error::Field("extension degree must be at least 1".into()));
    }
    let q64 = (p as u64).checked_pow(e).unwrap_or(u64::MAX);
    if q64 > 1 << 16 {
        return Err(Error::Field(format!("{p}^{e} exceeds 2^16")));
    }
    let q = q64 as u32;
    Ok(Arc::new(FieldCtx::build(p, e, q)))
}

impl FieldCtx {
    fn build(p: u32, e: u32, q: u32) -> FieldCtx {
        let modulus = Self::canonical_modulus(p, e);
        let slow_mul = |a: u32, b: u32| -> u32 {
            let r = fp::mulmod(&digits(a, p, e), &digits(b, p, e), &modulus, p);
            let mut d = r;
            d.resize(e as usize, 0);
            undigits(&d, p)
        };
        let order = q - 1;
        let factors = prime_factors(order as u64);
        let slow_pow = |a: u32, mut k: u64| -> u32 {
            let mut acc = 1u32;
            let mut b = a;
            while k > 0 {
                if k & 1 == 1 {
                    acc = slow_mul(acc, b);
                }
                b = slow_mul(b, b);
                k >>= 1;
            }
            acc
        };
        let generator = if q == 2 {
            1
        } else {
            (2..q)
                .find(|&g| factors.iter().all(|&r| slow_pow(g, order as u64 / r) != 1))
                .expect("multiplicative group is cyclic")
        };
        let mut exp = vec![0 as Scalar; 2 * order as usize];
        let mut log = vec![NO_LOG; q as usize];
        let mut x = 1u32;
        for k in 0..order {
            exp[k as usize] = x as Scalar;
            log[x as usize] = k;
            x = slow_mul(x, generator);
        }
        for k in order..2 * order {
            exp[k as usize] = exp[(k - order) as usize];
        }
        let add_digits = |a: u32, b: u32| -> u32 {
            if p == 2 {
                return a ^ b;
            }
            let da = digits(a, p, e);
            let db = digits(b, p, e);
            let s: Vec<u32> = da.iter().zip(&db).map(|(x, y)| (x + y) % p).collect();
            undigits(&s, p)
        };
        let neg: Vec<Scalar> = (0..q)
            .map(|a| {
                let d: Vec<u32> = digits(a, p, e).iter().map(|&c| (p - c) % p).collect();
                undigits(&d, p) as Scalar
            })
            .collect();
        let mut inv = vec![0 as Scalar; q as usize];
        for a in 1..q {
            let l = log[a as usize];
            inv[a as usize] = exp[((order - l) % order) as usize];
        }
        // zech[k] = log(1 + g^k)
        let zech: Vec<u32> = (0..order)
            .map(|k| {
                let s = add_digits(1, exp[k as usize] as u32);
                log[s as usize]
            })
            .collect();
        let (add_tab, mul_tab) = if q <= TABLE_LIMIT {
            let mut at = vec![0 as Scalar; (q * q) as usize];
            let mut mt = vec![0 as Scalar; (q * q) as usize];
            for a in 0..q {
                for b in 0..q {
                    at[(a * q + b) as usize] = add_digits(a, b) as Scalar;
                    mt[(a * q + b) as usize] = if a == 0 || b == 0 {
                        0
                    } else {
                        exp[(log[a as usize] + log[b as usize]) as usize]
                    };
                }
            }
            (at, mt)
        } else {
            (Vec::new(), Vec::new())
        };
        let theta = if e % 2 == 0 {
            let r = p.pow(e / 2);
            Some(
                (0..q)
                    .map(|a| {
                        if a == 0 {
                            0
                        } else {
                            let l = log[a as usize] as u64 * r as u64 % order as u64;
                            exp[l as usize]
                        }
                    })
                    .collect(),
            )
        } else {
            None
        };
        FieldCtx {
            p,
            e,
            q,
            modulus,
            generator: generator as Scalar,
            exp,
            log,
            zech,
            neg,
            inv,
            add_tab,
            mul_tab,
            theta,
        }
    }

    fn canonical_modulus(p: u32, e: u32) -> Vec<u32> {
        let count = p.pow(e);
        for idx in 0..count {
            // c_0 is the most significant digit of the enumeration index.
            let mut coeffs = vec![0u32; e as usize + 1];
            let mut rest = idx;
            for i in (0..e as usize).rev() {
                coeffs[i] = rest % p;
                rest /= p;
            }
            coeffs[e as usize] = 1;
            if fp::is_irreducible(&coeffs, p) {
                return coeffs;
            }
        }
        unreachable!("irreducible polynomials exist in every degree")
    }

    pub fn p(&self) -> u32 {
        self.p
    }
    pub fn e(&self) -> u32 {
        self.e
    }
    pub fn q(&self) -> u32 {
        self.q
    }
    /// Size of the fixed field of θ, when θ is defined.
    pub fn sqrt_q(&self) -> Option<u32> {
        self.theta.as_ref().map(|_| self.p.pow(self.e / 2))
    }
    pub fn theta_defined(&self) -> bool {
        self.theta.is_some()
    }
    /// Modulus coefficients, constant term first (monic, degree e).
    pub fn modulus(&self) -> &[u32] {
        &self.modulus
    }
    pub fn generator(&self) -> Scalar {
        self.generator
    }
    /// True when elements are single bits, so rows can be packed into words.
    pub fn is_binary(&self) -> bool {
        self.q == 2
    }
    pub fn descriptor(&self) -> String {
        format!("GF({}^{})", self.p, self.e)
    }
    pub fn elements(&self) -> impl Iterator<Item = Scalar> {
        (0..self.q).map(|x| x as Scalar)
    }

    /// Reduce an integer into the prime field.
    pub fn from_int(&self, m: i64) -> Scalar {
        m.rem_euclid(self.p as i64) as Scalar
    }

    #[inline]
    pub fn add(&self, a: Scalar, b: Scalar) -> Scalar {
        if self.p == 2 {
            return a ^ b;
        }
        if !self.add_tab.is_empty() {
            return self.add_tab[a as usize * self.q as usize + b as usize];
        }
        if a == 0 {
            return b;
        }
        if b == 0 {
            return a;
        }
        let order = self.q - 1;
        let la = self.log[a as usize];
        let lb = self.log[b as usize];
        let d = (lb + order - la) % order;
        let z = self.zech[d as usize];
        if z == NO_LOG {
            0
        } else {
            self.exp[(la + z) as usize]
        }
    }

    #[inline]
    pub fn neg(&self, a: Scalar) -> Scalar {
        self.neg[a as usize]
    }

    #[inline]
    pub fn sub(&self, a: Scalar, b: Scalar) -> Scalar {
        self.add(a, self.neg[b as usize])
    }

    #[inline]
    pub fn mul(&self, a: Scalar, b: Scalar) -> Scalar {
        if !self.mul_tab.is_empty() {
            return self.mul_tab[a as usize * self.q as usize + b as usize];
        }
        if a == 0 || b == 0 {
            return 0;
        }
        self.exp[(self.log[a as usize] + self.log[b as usize]) as usize]
    }

    /// Multiplicative inverse; panics on zero.
    #[inline]
    pub fn inv(&self, a: Scalar) -> Scalar {
        assert!(a != 0, "inverse of zero");
        self.inv[a as usize]
    }

    #[inline]
    pub fn div(&self, a: Scalar, b: Scalar) -> Scalar {
        self.mul(a, self.inv(b))
    }

    /// Discrete logarithm with respect to the tabulation generator.
    pub fn log(&self, a: Scalar) -> Option<u32> {
        let l = self.log[a as usize];
        (l != NO_LOG).then_some(l)
    }

    pub fn exp(&self, k: u64) -> Scalar {
        self.exp[(k % (self.q as u64 - 1)) as usize]
    }

    pub fn pow(&self, a: Scalar, k: u64) -> Scalar {
        if k == 0 {
            return 1;
        }
        if a == 0 {
            return 0;
        }
        let l = self.log[a as usize] as u64;
        self.exp(l * (k % (self.q as u64 - 1)))
    }

    /// Nonzero squares; in characteristic 2 every element is a square.
    pub fn is_square(&self, a: Scalar) -> bool {
        if a == 0 || self.p == 2 {
            return true;
        }
        self.log[a as usize] % 2 == 0
    }

    pub fn sqrt(&self, a: Scalar) -> Option<Scalar> {
        if a == 0 {
            return Some(0);
        }
        let order = self.q - 1;
        let l = self.log[a as usize];
        if self.p == 2 {
            // squaring is a bijection; halve the log modulo the odd order
            let half = (l as u64 * ((order as u64 + 1) / 2)) % order as u64;
            return Some(self.exp(half));
        }
        (l % 2 == 0).then(|| self.exp((l / 2) as u64))
    }

    /// θ(x) = x^{√q}; errors when e is odd.
    pub fn theta(&self, x: Scalar) -> Result<Scalar> {
        match &self.theta {
            Some(t) => Ok(t[x as usize]),
            None => Err(Error::ThetaUndefined { p: self.p, e: self.e }),
        }
    }

    /// θ if defined, identity otherwise (used for forms that may be bilinear).
    #[inline]
    pub fn theta_or_id(&self, x: Scalar) -> Scalar {
        match &self.theta {
            Some(t) => t[x as usize],
            None => x,
        }
    }

    /// Membership in the subfield of the given size.
    pub fn in_subfield(&self, x: Scalar, size: u32) -> bool {
        self.pow(x, size as u64) == x
    }

    /// x + θ(x).
    pub fn trace_theta(&self, x: Scalar) -> Result<Scalar> {
        Ok(self.add(x, self.theta(x)?))
    }

    /// x · θ(x).
    pub fn norm_theta(&self, x: Scalar) -> Result<Scalar> {
        Ok(self.mul(x, self.theta(x)?))
    }

    /// Parse a decimal scalar index.
    pub fn parse_scalar(&self, s: &str) -> Result<Scalar> {
        let v: u32 = s
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad scalar '{s}'")))?;
        if v >= self.q {
            return Err(Error::Parse(format!("scalar {v} out of range for q = {}", self.q)));
        }
        Ok(v as Scalar)
    }
}

/// Parse "GF(p^e)" or "GF(q)".
pub fn parse_field(desc: &str) -> Result<Field> {
    let s = desc.trim();
    let inner = s
        .strip_prefix("GF(")
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| Error::Parse(format!("expected GF(p^e) or GF(q), got '{desc}'")))?;
    let (p, e) = if let Some((a, b)) = inner.split_once('^') {
        let p = a.trim().parse::<u32>().map_err(|_| Error::Parse(format!("bad prime in '{desc}'")))?;
        let e = b.trim().parse::<u32>().map_err(|_| Error::Parse(format!("bad exponent in '{desc}'")))?;
        (p, e)
    } else {
        let q = inner.trim().parse::<u32>().map_err(|_| Error::Parse(format!("bad order in '{desc}'")))?;
        prime_power(q).ok_or_else(|| Error::Parse(format!("{q} is not a prime power")))?
    };
    make_field(p, e)
}

/// Split q = p^e.
pub fn prime_power(q: u32) -> Option<(u32, u32)> {
    if q < 2 {
        return None;
    }
    let f = prime_factors(q as u64);
    if f.len() != 1 {
        return None;
    }
    let p = f[0] as u32;
    let mut e = 0;
    let mut m = q;
    while m > 1 {
        m /= p;
        e += 1;
    }
    Some((p, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_fields() -> Vec<Field> {
        [(2, 1), (3, 1), (2, 2), (5, 1), (7, 1), (2, 3), (3, 2), (11, 1), (13, 1), (2, 4)]
            .iter()
            .map(|&(p, e)| make_field(p, e).unwrap())
            .collect()
    }

    #[test]
    fn examples() {
        let f2 = make_field(2, 1).unwrap();
        assert_eq!(f2.elements().collect::<Vec<_>>(), vec![0, 1]);
        let f3 = make_field(3, 1).unwrap();
        assert_eq!(f3.mul(2, 2), 1);
        let f4 = make_field(2, 2).unwrap();
        for x in 1..4 {
            let x3 = f4.mul(x, f4.mul(x, x));
            assert_eq!(x3, 1);
        }
        assert!(make_field(4, 1).is_err());
        assert!(make_field(2, 17).is_err());
    }

    #[test]
    fn canonical_modulus_is_least() {
        let f4 = make_field(2, 2).unwrap();
        assert_eq!(f4.modulus(), &[1, 1, 1]);
        let f9 = make_field(3, 2).unwrap();
        // t^2 + 1 is irreducible over F_3 and has constant term 1; nothing with c0 = 0 is.
        assert_eq!(f9.modulus(), &[1, 0, 1]);
        let f8 = make_field(2, 3).unwrap();
        // read from the constant term up, 1 + t^2 + t^3 precedes 1 + t + t^3
        assert_eq!(f8.modulus(), &[1, 0, 1, 1]);
    }

    #[test]
    fn field_axioms_exhaustive() {
        for f in small_fields() {
            let q = f.q() as Scalar;
            for a in 0..q {
                assert_eq!(f.add(a, 0), a);
                assert_eq!(f.mul(a, 1), a);
                assert_eq!(f.add(a, f.neg(a)), 0);
                if a != 0 {
                    assert_eq!(f.mul(a, f.inv(a)), 1);
                }
                assert_eq!(f.pow(a, f.q() as u64), a, "Fermat in {f:?}");
                for b in 0..q {
                    assert_eq!(f.add(a, b), f.add(b, a));
                    assert_eq!(f.mul(a, b), f.mul(b, a));
                    for c in 0..q {
                        assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
                        assert_eq!(f.add(f.add(a, b), c), f.add(a, f.add(b, c)));
                        assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
                    }
                }
            }
        }
    }

    #[test]
    fn zech_path_matches_tables() {
        // q = 3^6 = 729 uses Zech logarithms; compare with slow digit arithmetic.
        let f = make_field(3, 6).unwrap();
        let q = f.q();
        for a in (0..q).step_by(7) {
            for b in (0..q).step_by(11) {
                let da = digits(a, 3, 6);
                let db = digits(b, 3, 6);
                let s: Vec<u32> = da.iter().zip(&db).map(|(x, y)| (x + y) % 3).collect();
                assert_eq!(f.add(a as Scalar, b as Scalar) as u32, undigits(&s, 3));
                let m = fp::mulmod(&da, &db, f.modulus(), 3);
                let mut m = m;
                m.resize(6, 0);
                assert_eq!(f.mul(a as Scalar, b as Scalar) as u32, undigits(&m, 3));
            }
        }
    }

    #[test]
    fn theta_properties() {
        let f4 = make_field(2, 2).unwrap();
        assert_eq!(f4.theta(0).unwrap(), 0);
        let g = f4.generator();
        assert_eq!(f4.theta(g).unwrap(), f4.mul(g, g));
        assert_eq!(f4.theta(f4.theta(g).unwrap()).unwrap(), g);
        for f in [make_field(2, 2).unwrap(), make_field(3, 2).unwrap(), make_field(2, 4).unwrap()] {
            let q0 = f.sqrt_q().unwrap();
            let mut fixed = 0;
            for x in f.elements() {
                let t = f.theta(x).unwrap();
                assert_eq!(f.theta(t).unwrap(), x);
                if t == x {
                    fixed += 1;
                    assert!(f.in_subfield(x, q0));
                }
                for y in f.elements() {
                    assert_eq!(f.theta(f.mul(x, y)).unwrap(), f.mul(t, f.theta(y).unwrap()));
                }
            }
            assert_eq!(fixed, q0);
        }
        // F_9: θ fixes exactly the prime field {0, 1, 2}.
        let f9 = make_field(3, 2).unwrap();
        let fixed: Vec<_> = f9.elements().filter(|&x| f9.theta(x).unwrap() == x).collect();
        assert_eq!(fixed, vec![0, 1, 2]);
        assert!(make_field(3, 1).unwrap().theta(1).is_err());
    }

    #[test]
    fn squares_and_roots() {
        for f in small_fields() {
            for x in f.elements() {
                let sq = f.mul(x, x);
                assert!(f.is_square(sq));
                let r = f.sqrt(sq).unwrap();
                assert_eq!(f.mul(r, r), sq);
            }
            if f.p() != 2 {
                let nsq = f.elements().filter(|&x| x != 0 && !f.is_square(x)).count();
                assert_eq!(nsq as u32, (f.q() - 1) / 2);
            }
        }
    }

    #[test]
    fn parse_descriptors() {
        assert_eq!(parse_field("GF(3^2)").unwrap().q(), 9);
        assert_eq!(parse_field("GF(8)").unwrap().e(), 3);
        assert!(parse_field("GF(6)").is_err());
        assert_eq!(make_field(5, 1).unwrap().descriptor(), "GF(5^1)");
    }

    #[test]
    fn largest_field_builds() {
        let f = make_field(2, 16).unwrap();
        let a = 12345;
        assert_eq!(f.mul(a, f.inv(a)), 1);
        assert_eq!(f.pow(a, 65536), a);
    }
}
