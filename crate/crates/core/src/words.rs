//! Words in the free group F_k.
//!
//! A letter is a nonzero `i32`: `i` stands for ξ_i and `-i` for ξ_i^{-1}
//! (1-based). Letters are stored in written order, so `w = w_ℓ ⋯ w_1` is the
//! vector `[w_ℓ, …, w_1]` and evaluation applies the rightmost letter first.
//! Letters are ordered ξ_1 < ξ_1^{-1} < ξ_2 < ξ_2^{-1} < …

use crate::error::{Error, Result};
use crate::gf::{FieldCtx, Scalar};
use crate::linalg::Matrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

pub type Letter = i32;

/// Rank of a letter in the fixed order ξ_1 < ξ_1^{-1} < ξ_2 < …
#[inline]
pub fn letter_key(l: Letter) -> u32 {
    2 * (l.unsigned_abs() - 1) + (l < 0) as u32
}

#[inline]
pub fn letter_from_key(key: u32) -> Letter {
    let i = (key / 2 + 1) as Letter;
    if key % 2 == 1 {
        -i
    } else {
        i
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct Word {
    k: usize,
    letters: Vec<Letter>,
}

impl Word {
    pub fn new(k: usize, letters: Vec<Letter>) -> Result<Word> {
        if k == 0 {
            return Err(Error::Word("alphabet rank must be positive".into()));
        }
        if let Some(&l) = letters.iter().find(|&&l| l == 0 || l.unsigned_abs() as usize > k) {
            return Err(Error::Word(format!("letter {l} outside an alphabet of rank {k}")));
        }
        Ok(Word { k, letters })
    }

    pub fn empty(k: usize) -> Word {
        Word { k, letters: Vec::new() }
    }

    /// The single-letter word ξ_i.
    pub fn generator(k: usize, i: usize) -> Word {
        assert!(i >= 1 && i <= k);
        Word { k, letters: vec![i as Letter] }
    }

    pub fn k(&self) -> usize {
        self.k
    }
    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }
    pub fn len(&self) -> usize {
        self.letters.len()
    }
    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }
    /// Letter applied at step t (1-based), i.e. w_t.
    pub fn step(&self, t: usize) -> Letter {
        self.letters[self.letters.len() - t]
    }

    /// Parse `"x1 x2^-1 x1"`; exponents `x1^3` expand; `"1"` or `""` is empty.
    pub fn parse(k: usize, s: &str) -> Result<Word> {
        let mut letters = Vec::new();
        for tok in s.split_whitespace() {
            if tok == "1" {
                continue;
            }
            let (base, exp) = match tok.split_once('^') {
                Some((b, e)) => {
                    (b, e.parse::<i32>().map_err(|_| Error::Word(format!("bad exponent in '{tok}'")))?)
                }
                None => (tok, 1),
            };
            let idx: i32 = base
                .strip_prefix('x')
                .and_then(|d| d.parse().ok())
                .ok_or_else(|| Error::Word(format!("bad token '{tok}', expected x<i> or x<i>^<e>")))?;
            let l = if exp < 0 { -idx } else { idx };
            for _ in 0..exp.unsigned_abs() {
                letters.push(l);
            }
        }
        Word::new(k, letters)
    }

    /// Smallest alphabet rank that can hold the parsed word.
    pub fn parse_auto(s: &str) -> Result<Word> {
        let probe = Word::parse(usize::MAX >> 1, s)?;
        let k = probe.letters.iter().map(|l| l.unsigned_abs() as usize).max().unwrap_or(1);
        Word::new(k, probe.letters)
    }

    pub fn inverse(&self) -> Word {
        Word { k: self.k, letters: self.letters.iter().rev().map(|l| -l).collect() }
    }

    /// `self · other` in written order (other is applied first).
    pub fn concat(&self, other: &Word) -> Word {
        let mut letters = self.letters.clone();
        letters.extend_from_slice(&other.letters);
        Word { k: self.k.max(other.k), letters }.reduce()
    }

    pub fn pow(&self, m: usize) -> Word {
        let mut letters = Vec::with_capacity(self.len() * m);
        for _ in 0..m {
            letters.extend_from_slice(&self.letters);
        }
        Word { k: self.k, letters }.reduce()
    }

    pub fn is_reduced(&self) -> bool {
        self.letters.windows(2).all(|p| p[0] != -p[1])
    }

    pub fn is_cyclically_reduced(&self) -> bool {
        self.is_reduced() && (self.letters.len() < 2 || self.letters[0] != -self.letters[self.letters.len() - 1])
    }

    /// Free reduction.
    pub fn reduce(&self) -> Word {
        let mut out: Vec<Letter> = Vec::with_capacity(self.letters.len());
        for &l in &self.letters {
            if out.last() == Some(&-l) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Word { k: self.k, letters: out }
    }

    /// Cyclically reduced core `u` and conjugator `c` with `w = c^{-1} u c`.
    /// The core is the least rotation in letter order.
    pub fn cyclic_reduce(&self) -> (Word, Word) {
        let w = self.reduce();
        let l = &w.letters;
        let mut a = 0;
        while a < l.len() / 2 && l[a] == -l[l.len() - 1 - a] {
            a += 1;
        }
        let core: Vec<Letter> = l[a..l.len() - a].to_vec();
        // w = prefix · core · prefix^{-1}, so c = prefix^{-1}
        let prefix = Word { k: w.k, letters: l[..a].to_vec() };
        let c = prefix.inverse();
        let m = core.len();
        if m == 0 {
            return (Word::empty(w.k), Word::empty(w.k));
        }
        let keys: Vec<u32> = core.iter().map(|&x| letter_key(x)).collect();
        let best = (0..m)
            .min_by(|&i, &j| {
                let a = keys[i..].iter().chain(&keys[..i]);
                let b = keys[j..].iter().chain(&keys[..j]);
                a.cmp(b).then(i.cmp(&j))
            })
            .unwrap();
        // core = s t with s = core[..best]; rotated = t s = s^{-1} core s
        let s = Word { k: w.k, letters: core[..best].to_vec() };
        let rotated = Word { k: w.k, letters: [&core[best..], &core[..best]].concat() };
        let c2 = s.inverse().concat(&c);
        (rotated, c2)
    }

    /// `(is_proper_power, root, exponent)` with maximal exponent; the root is
    /// conjugated back so that `root^exponent = w`.
    pub fn is_proper_power(&self) -> (bool, Word, usize) {
        let w = self.reduce();
        if w.is_empty() {
            return (false, w, 1);
        }
        let l = &w.letters;
        let mut a = 0;
        while a < l.len() / 2 && l[a] == -l[l.len() - 1 - a] {
            a += 1;
        }
        let core = &l[a..l.len() - a];
        let m = core.len();
        let period = (1..=m).find(|&p| m % p == 0 && (p..m).all(|i| core[i] == core[i - p])).unwrap();
        let exponent = m / period;
        let mut root = l[..a].to_vec();
        root.extend_from_slice(&core[..period]);
        root.extend_from_slice(&l[l.len() - a..]);
        (exponent > 1, Word { k: w.k, letters: root }, exponent)
    }

    /// Image under ξ_i ↦ gens[i-1].
    pub fn evaluate(&self, f: &FieldCtx, gens: &[Matrix]) -> Result<Matrix> {
        if gens.len() != self.k {
            return Err(Error::Word(format!("word over F_{} evaluated at {} elements", self.k, gens.len())));
        }
        let n = gens.first().map(|g| g.rows()).unwrap_or(0);
        if gens.iter().any(|g| g.rows() != n || g.cols() != n) {
            return Err(Error::Shape("evaluation elements differ in size".into()));
        }
        let invs: Vec<Matrix> = gens.iter().map(|g| g.inverse(f)).collect::<Result<_>>()?;
        Ok(self.evaluate_with(f, gens, &invs, n))
    }

    /// Evaluation with precomputed inverses.
    pub fn evaluate_with(&self, f: &FieldCtx, gens: &[Matrix], invs: &[Matrix], n: usize) -> Matrix {
        let mut acc = Matrix::identity(n);
        for &l in &self.letters {
            let m = if l > 0 { &gens[(l - 1) as usize] } else { &invs[(-l - 1) as usize] };
            acc = acc.mul(f, m);
        }
        acc
    }

    /// `w̄ v`, applying letters right to left.
    pub fn apply_vec(&self, f: &FieldCtx, gens: &[Matrix], invs: &[Matrix], v: &[Scalar]) -> Vec<Scalar> {
        let mut x = v.to_vec();
        for &l in self.letters.iter().rev() {
            let m = if l > 0 { &gens[(l - 1) as usize] } else { &invs[(-l - 1) as usize] };
            x = m.mul_vec(f, &x);
        }
        x
    }

    /// JSON array of signed letter indices.
    pub fn to_json_array(&self) -> String {
        serde_json::to_string(&self.letters).expect("integers serialize")
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return f.write_str("1");
        }
        let toks: Vec<String> = self
            .letters
            .iter()
            .map(|&l| if l > 0 { format!("x{l}") } else { format!("x{}^-1", -l) })
            .collect();
        f.write_str(&toks.join(" "))
    }
}

/// Simple random walk of `len` uniform letters from the 2k symmetric letters,
/// freely reduced.
pub fn random_walk_word<R: Rng + ?Sized>(k: usize, len: usize, rng: &mut R) -> Word {
    let letters = (0..len).map(|_| letter_from_key(rng.gen_range(0..2 * k as u32))).collect();
    Word { k, letters }.reduce()
}

/// Number of reduced words of length `len` over F_k.
pub fn count_reduced(k: usize, len: usize) -> u128 {
    if len == 0 {
        1
    } else {
        2 * k as u128 * (2 * k as u128 - 1).pow(len as u32 - 1)
    }
}

/// The `idx`-th reduced word of length `len` in lexicographic letter order.
pub fn nth_reduced_word(k: usize, len: usize, mut idx: u128) -> Word {
    let mut digits = vec![0u32; len];
    for t in (1..len).rev() {
        let b = 2 * k as u128 - 1;
        digits[t] = (idx % b) as u32;
        idx /= b;
    }
    let mut letters = Vec::with_capacity(len);
    if len > 0 {
        digits[0] = idx as u32;
        letters.push(letter_from_key(digits[0]));
        for &d in digits.iter().skip(1) {
            let forbidden = letter_key(-letters[letters.len() - 1]);
            let key = if d >= forbidden { d + 1 } else { d };
            letters.push(letter_from_key(key));
        }
    }
    Word { k, letters }
}

/// All reduced words by length, then lexicographically, up to `max_len`.
pub fn reduced_words(k: usize, max_len: usize) -> impl Iterator<Item = Word> {
    (0..=max_len).flat_map(move |len| (0..count_reduced(k, len)).map(move |i| nth_reduced_word(k, len, i)))
}

/// Exact probability that a simple random walk of `len` steps on the
/// 2k-regular tree (the Cayley graph of F_k) ends at its start.
pub fn tree_return_probability(k: usize, len: usize) -> f64 {
    let deg = 2.0 * k as f64;
    let mut dist = vec![0.0f64; len + 2];
    dist[0] = 1.0;
    for _ in 0..len {
        let mut next = vec![0.0f64; len + 2];
        for (d, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            if d == 0 {
                next[1] += p;
            } else {
                next[d - 1] += p / deg;
                if d + 1 < next.len() {
                    next[d + 1] += p * (deg - 1.0) / deg;
                }
            }
        }
        dist = next;
    }
    dist[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf::make_field;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, Strategy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn w(k: usize, s: &str) -> Word {
        Word::parse(k, s).unwrap()
    }

    #[test]
    fn reduction_examples() {
        assert_eq!(w(2, "x1 x2 x2^-1").reduce(), w(2, "x1"));
        assert!(Word::empty(2).reduce().is_empty());
        assert!(w(1, "x1^-1 x1").reduce().is_empty());
        assert_eq!(w(2, "x1^3").letters(), &[1, 1, 1]);
        assert_eq!(w(2, "x1 x2^-1").to_string(), "x1 x2^-1");
        assert!(Word::parse(2, "x3").is_err());
        assert!(Word::parse(2, "y1").is_err());
    }

    #[test]
    fn cyclic_reduction_examples() {
        let (core, c) = w(2, "x1 x2 x1^-1").cyclic_reduce();
        assert_eq!(core, w(2, "x2"));
        assert_eq!(c, w(2, "x1^-1"));
        let (core, c) = w(2, "x1 x2").cyclic_reduce();
        assert_eq!(core, w(2, "x1 x2"));
        assert!(c.is_empty());
        let word = w(2, "x1^-1 x2 x1 x1");
        let (core, c) = word.cyclic_reduce();
        assert_eq!(core, w(2, "x1 x2"));
        assert_eq!(c.inverse().concat(&core).concat(&c), word);
    }

    #[test]
    fn proper_power_examples() {
        let (pp, root, e) = w(2, "x1 x2 x1 x2").is_proper_power();
        assert!(pp && e == 2 && root == w(2, "x1 x2"));
        let (pp, root, e) = w(2, "x1 x2 x1").is_proper_power();
        assert!(!pp && e == 1 && root == w(2, "x1 x2 x1"));
        let (pp, root, e) = w(1, "x1 x1 x1").is_proper_power();
        assert!(pp && e == 3 && root == w(1, "x1"));
        let (pp, root, e) = w(2, "x2 x1 x1 x2^-1").is_proper_power();
        assert!(pp && e == 2 && root.pow(2) == w(2, "x2 x1 x1 x2^-1"));
    }

    /// A cyclic word is a proper power iff it equals a nontrivial rotation of itself.
    fn power_by_rotation(core: &[Letter]) -> usize {
        let m = core.len();
        let shift = (1..=m).find(|&s| (0..m).all(|i| core[i] == core[(i + s) % m])).unwrap();
        m / shift
    }

    #[test]
    fn proper_power_matches_rotation_oracle_exhaustively() {
        for k in 1..=2 {
            for word in reduced_words(k, 10) {
                let (core, _) = word.cyclic_reduce();
                if core.is_empty() {
                    continue;
                }
                let (pp, root, e) = word.is_proper_power();
                let oracle = power_by_rotation(core.letters());
                assert_eq!(e, oracle, "{word}");
                assert_eq!(pp, oracle > 1);
                assert_eq!(root.pow(e), word);
                assert!(!root.is_proper_power().0);
            }
        }
    }

    #[test]
    fn enumeration_order_and_count() {
        let words: Vec<Word> = reduced_words(2, 3).collect();
        assert_eq!(words.len(), 1 + 4 + 12 + 36);
        assert!(words.iter().all(|x| x.is_reduced()));
        for pair in words.windows(2) {
            let ka: Vec<u32> = pair[0].letters().iter().map(|&l| letter_key(l)).collect();
            let kb: Vec<u32> = pair[1].letters().iter().map(|&l| letter_key(l)).collect();
            assert!((ka.len(), &ka) < (kb.len(), &kb));
        }
        assert_eq!(words[1], w(2, "x1"));
        assert_eq!(words[2], w(2, "x1^-1"));
    }

    #[test]
    fn random_walk_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(random_walk_word(2, 0, &mut rng).is_empty());
        assert!((tree_return_probability(1, 2) - 0.5).abs() < 1e-15);
        for k in 1..=3 {
            for len in [2usize, 4, 8, 12] {
                let trials = 100_000;
                let hits = (0..trials).filter(|_| random_walk_word(k, len, &mut rng).is_empty()).count();
                let p = tree_return_probability(k, len);
                let sigma = (p * (1.0 - p) / trials as f64).sqrt();
                let phat = hits as f64 / trials as f64;
                assert!((phat - p).abs() <= 3.0 * sigma + 1e-9, "k={k} len={len} {phat} vs {p}");
            }
        }
    }

    #[test]
    fn proper_powers_are_rare_for_long_walks() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let trials = 200_000;
        let bad = (0..trials)
            .filter(|_| {
                let x = random_walk_word(2, 20, &mut rng);
                x.is_empty() || x.is_proper_power().0
            })
            .count();
        assert!((bad as f64 / trials as f64) < 0.05);
    }

    #[test]
    fn evaluation_examples() {
        let f = make_field(3, 1).unwrap();
        let a = Matrix::from_rows(&[vec![1, 1], vec![0, 1]]);
        let b = Matrix::from_rows(&[vec![0, 2], vec![1, 0]]);
        let gens = [a.clone(), b.clone()];
        assert!(Word::empty(2).evaluate(&f, &gens).unwrap().is_identity());
        assert_eq!(w(2, "x1").evaluate(&f, &gens).unwrap(), a);
        let direct = a.mul(&f, &b).mul(&f, &a.inverse(&f).unwrap());
        assert_eq!(w(2, "x1 x2 x1^-1").evaluate(&f, &gens).unwrap(), direct);
        assert!(w(2, "x1").evaluate(&f, &gens[..1]).is_err());
    }

    fn arb_word(k: usize, max: usize) -> impl Strategy<Value = Word> {
        proptest::collection::vec(0..(2 * k as u32), 0..max)
            .prop_map(move |keys| Word::new(k, keys.into_iter().map(letter_from_key).collect()).unwrap())
    }

    proptest! {
        #[test]
        fn evaluation_is_a_homomorphism(u in arb_word(2, 8), v in arb_word(2, 8), seed in any::<u64>()) {
            let f = make_field(5, 1).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gens: Vec<Matrix> = (0..2).map(|_| loop {
                let m = Matrix::from_fn(3, 3, |_, _| rng.gen_range(0..5));
                if m.det(&f) != 0 { break m; }
            }).collect();
            let lhs = u.concat(&v).evaluate(&f, &gens).unwrap();
            let rhs = u.evaluate(&f, &gens).unwrap().mul(&f, &v.evaluate(&f, &gens).unwrap());
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn cyclic_reduce_conjugates_back(x in arb_word(3, 14)) {
            let (core, c) = x.cyclic_reduce();
            prop_assert!(core.is_cyclically_reduced());
            prop_assert_eq!(c.inverse().concat(&core).concat(&c), x.reduce());
            let (core2, c2) = core.cyclic_reduce();
            prop_assert_eq!(core2, core);
            prop_assert!(c2.is_empty());
        }
    }
}
