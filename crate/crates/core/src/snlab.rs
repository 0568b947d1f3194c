//! The symmetric-group laboratory: permutations, point trajectories with
//! lazy sampling, fixed-point tails, the two cycle-class constructions that
//! lead to a 3-cycle (or 101-cycle), and the three-generator pipeline.

use std::collections::{HashMap, HashSet};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{chunk_sizes, default_tasks, map_tasks, seed_stream};
use crate::spectral::{estimate_lambda_power, orbit_diameter, orbit_eccentricity_from, OrbitIndex};
use crate::stats::Estimate;
use crate::words::{letter_from_key, Letter, Word};

/// A permutation of `{0, …, n−1}` stored by images.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct Perm {
    img: Vec<u32>,
}

impl Perm {
    pub fn identity(n: usize) -> Perm {
        Perm { img: (0..n as u32).collect() }
    }

    pub fn from_images(img: Vec<u32>) -> Result<Perm> {
        let mut seen = vec![false; img.len()];
        for &i in &img {
            if i as usize >= img.len() || std::mem::replace(&mut seen[i as usize], true) {
                return Err(Error::Precondition("image array is not a bijection".into()));
            }
        }
        Ok(Perm { img })
    }

    /// Product of disjoint or overlapping cycles, applied right to left.
    pub fn from_cycles(n: usize, cycles: &[Vec<u32>]) -> Result<Perm> {
        let mut acc = Perm::identity(n);
        for c in cycles.iter().rev() {
            let mut img: Vec<u32> = (0..n as u32).collect();
            for (j, &a) in c.iter().enumerate() {
                if a as usize >= n {
                    return Err(Error::Precondition(format!("point {a} outside 0..{n}")));
                }
                img[a as usize] = c[(j + 1) % c.len()];
            }
            acc = Perm::from_images(img)?.compose(&acc);
        }
        Ok(acc)
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Perm {
        let mut img: Vec<u32> = (0..n as u32).collect();
        img.shuffle(rng);
        Perm { img }
    }

    /// One-line notation with 1-based images.
    pub fn to_one_line(&self) -> String {
        self.img.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(" ")
    }

    pub fn parse_one_line(s: &str) -> Result<Perm> {
        let img = s
            .split_whitespace()
            .map(|t| match t.parse::<u32>() {
                Ok(v) if v >= 1 => Ok(v - 1),
                _ => Err(Error::Parse(format!("bad image '{t}'"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Perm::from_images(img)
    }

    pub fn n(&self) -> usize {
        self.img.len()
    }

    pub fn images(&self) -> &[u32] {
        &self.img
    }

    #[inline]
    pub fn apply(&self, i: u32) -> u32 {
        self.img[i as usize]
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Perm) -> Perm {
        Perm { img: other.img.iter().map(|&i| self.img[i as usize]).collect() }
    }

    pub fn inverse(&self) -> Perm {
        let mut img = vec![0; self.n()];
        for (i, &j) in self.img.iter().enumerate() {
            img[j as usize] = i as u32;
        }
        Perm { img }
    }

    pub fn is_identity(&self) -> bool {
        self.img.iter().enumerate().all(|(i, &j)| i as u32 == j)
    }

    pub fn fixed_points(&self) -> usize {
        self.img.iter().enumerate().filter(|&(i, &j)| i as u32 == j).count()
    }

    /// Cycles (including fixed points), each starting at its least point.
    pub fn cycles(&self) -> Vec<Vec<u32>> {
        let mut seen = vec![false; self.n()];
        let mut out = Vec::new();
        for s in 0..self.n() {
            if seen[s] {
                continue;
            }
            let mut c = Vec::new();
            let mut x = s as u32;
            while !seen[x as usize] {
                seen[x as usize] = true;
                c.push(x);
                x = self.img[x as usize];
            }
            out.push(c);
        }
        out
    }

    pub fn cycle_type(&self) -> CycleType {
        CycleType::new(self.cycles().iter().map(Vec::len).collect())
    }

    pub fn sign(&self) -> i32 {
        if (self.n() - self.cycles().len()) % 2 == 0 {
            1
        } else {
            -1
        }
    }

    pub fn pow_big(&self, e: &BigUint) -> Perm {
        let mut img = vec![0; self.n()];
        for c in self.cycles() {
            let m = c.len();
            let s = (e % m).to_usize().expect("reduced modulo a cycle length");
            for (j, &a) in c.iter().enumerate() {
                img[a as usize] = c[(j + s) % m];
            }
        }
        Perm { img }
    }
}

/// Evaluate `w` at `gens` (`ξ_i ↦ gens[i−1]`), as a product left to right.
pub fn evaluate_word(w: &Word, gens: &[Perm]) -> Result<Perm> {
    if gens.len() != w.k() {
        return Err(Error::Word(format!("word over F_{} evaluated at {} permutations", w.k(), gens.len())));
    }
    let n = gens.first().map_or(0, Perm::n);
    let invs: Vec<Perm> = gens.iter().map(Perm::inverse).collect();
    let mut acc = Perm::identity(n);
    for &l in w.letters() {
        acc = acc.compose(letter_perm(l, gens, &invs));
    }
    Ok(acc)
}

fn letter_perm<'a>(l: Letter, gens: &'a [Perm], invs: &'a [Perm]) -> &'a Perm {
    let j = (l.unsigned_abs() - 1) as usize;
    if l > 0 {
        &gens[j]
    } else {
        &invs[j]
    }
}

/// A partition of n, parts in decreasing order.
#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CycleType(Vec<usize>);

impl CycleType {
    pub fn new(mut parts: Vec<usize>) -> CycleType {
        parts.retain(|&p| p > 0);
        parts.sort_unstable_by(|a, b| b.cmp(a));
        CycleType(parts)
    }

    pub fn parts(&self) -> &[usize] {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn count(&self, m: usize) -> usize {
        self.0.iter().filter(|&&p| p == m).count()
    }

    pub fn sign(&self) -> i32 {
        if (self.n() - self.0.len()) % 2 == 0 {
            1
        } else {
            -1
        }
    }

    /// Centralizer order `z = Π m^{c_m} c_m!`.
    pub fn centralizer_order(&self) -> BigUint {
        let mut z = BigUint::one();
        let mut i = 0;
        while i < self.0.len() {
            let m = self.0[i];
            let c = self.0[i..].iter().take_while(|&&p| p == m).count();
            for j in 1..=c {
                z *= m * j;
            }
            i += c;
        }
        z
    }

    /// `|class| / n! = 1/z`.
    pub fn density(&self) -> BigRational {
        BigRational::new(BigInt::one(), BigInt::from(self.centralizer_order()))
    }

    /// All partitions of `n` in reverse lexicographic order.
    pub fn all(n: usize) -> Vec<CycleType> {
        fn rec(rest: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<CycleType>) {
            if rest == 0 {
                out.push(CycleType(cur.clone()));
                return;
            }
            for p in (1..=rest.min(max)).rev() {
                cur.push(p);
                rec(rest - p, p, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(n, n, &mut Vec::new(), &mut out);
        out
    }
}

// ---------------------------------------------------------------------------
// Point trajectories

pub enum SnMode<'a, R: Rng + ?Sized> {
    Explicit { gens: &'a [Perm] },
    Lazy { n: usize, rng: &'a mut R },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SnQuery {
    pub t: usize,
    pub strand: usize,
    pub letter: Letter,
    pub input: u32,
    pub output: u32,
    pub free: bool,
    pub coincidence: bool,
    /// `d / (n − s)`: the conditional coincidence bound for a free query.
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SnRecord {
    /// `lattice[t][i] = v_i^t`.
    pub lattice: Vec<Vec<u32>>,
    pub queries: Vec<SnQuery>,
    pub coincidences: Vec<(usize, usize)>,
    /// `v_i^ℓ = v_i`.
    pub closed: Vec<bool>,
    pub ends_in_r: Vec<bool>,
}

/// Joint trajectory of `starts` under the reduced word `w`, queries in
/// `(t, i)` order. Lazy mode reveals each free result uniformly outside the
/// known codomain of its letter.
pub fn run_trajectory_sn<R: Rng + ?Sized>(
    w: &Word,
    starts: &[u32],
    r_set: &[u32],
    mode: SnMode<'_, R>,
) -> Result<SnRecord> {
    if !w.is_reduced() {
        return Err(Error::Precondition("trajectories need a reduced word".into()));
    }
    let (n, mut mode) = match mode {
        SnMode::Explicit { gens } => {
            if gens.len() != w.k() {
                return Err(Error::Word("one permutation per generator is required".into()));
            }
            let n = gens.first().map_or(0, Perm::n);
            if gens.iter().any(|g| g.n() != n) {
                return Err(Error::Shape("permutations of different degrees".into()));
            }
            (n, SnMode::Explicit { gens })
        }
        SnMode::Lazy { n, rng } => (n, SnMode::Lazy { n, rng }),
    };
    if starts.iter().chain(r_set).any(|&v| v as usize >= n) {
        return Err(Error::Shape(format!("points must lie in 0..{n}")));
    }
    let k = w.k();
    // fwd[j]: v ↦ x_j v; bwd[j]: x_j v ↦ v
    let mut fwd: Vec<HashMap<u32, u32>> = vec![HashMap::new(); k];
    let mut bwd: Vec<HashMap<u32, u32>> = vec![HashMap::new(); k];
    let mut uses = vec![0usize; k];
    let mut seen: HashSet<u32> = r_set.iter().copied().collect();
    let r_lookup: HashSet<u32> = r_set.iter().copied().collect();
    let l = w.len();
    let mut lattice = vec![starts.to_vec()];
    let mut queries = Vec::with_capacity(l * starts.len());
    let mut coincidences = Vec::new();
    for t in 1..=l {
        let letter = w.step(t);
        let j = (letter.unsigned_abs() - 1) as usize;
        let mut layer = Vec::with_capacity(starts.len());
        for (i, &v) in lattice[t - 1].iter().enumerate() {
            let (dom, codom) = if letter > 0 { (&fwd[j], &bwd[j]) } else { (&bwd[j], &fwd[j]) };
            seen.insert(v);
            let (y, free, bound) = match dom.get(&v) {
                Some(&y) => (y, false, 0.0),
                None => {
                    let bound = seen.len() as f64 / (n - uses[j]) as f64;
                    let y = match &mut mode {
                        SnMode::Explicit { gens } => {
                            if letter > 0 {
                                gens[j].apply(v)
                            } else {
                                gens[j].inverse().apply(v)
                            }
                        }
                        SnMode::Lazy { rng, .. } => sample_outside(n, codom, rng),
                    };
                    (y, true, bound)
                }
            };
            let coincidence = free && seen.contains(&y);
            if free {
                let (a, b) = if letter > 0 { (v, y) } else { (y, v) };
                fwd[j].insert(a, b);
                bwd[j].insert(b, a);
            }
            if coincidence {
                coincidences.push((t, i));
            }
            seen.insert(y);
            uses[j] += 1;
            queries.push(SnQuery { t, strand: i, letter, input: v, output: y, free, coincidence, bound });
            layer.push(y);
        }
        lattice.push(layer);
    }
    let last = &lattice[l];
    let closed: Vec<bool> = (0..starts.len()).map(|i| last[i] == starts[i]).collect();
    let ends_in_r: Vec<bool> = last.iter().map(|v| r_lookup.contains(v)).collect();
    for i in 0..starts.len() {
        let fresh = !starts[..i].contains(&starts[i]);
        if l > 0 && fresh && (closed[i] || ends_in_r[i]) && !coincidences.iter().any(|&(_, s)| s == i) {
            return Err(Error::Internal(format!("strand {i} closed without a coincidence")));
        }
    }
    Ok(SnRecord { lattice, queries, coincidences, closed, ends_in_r })
}

fn sample_outside<R: Rng + ?Sized>(n: usize, taken: &HashMap<u32, u32>, rng: &mut R) -> u32 {
    if taken.len() * 2 < n {
        loop {
            let y = rng.gen_range(0..n as u32);
            if !taken.contains_key(&y) {
                return y;
            }
        }
    }
    let free: Vec<u32> = (0..n as u32).filter(|y| !taken.contains_key(y)).collect();
    free[rng.gen_range(0..free.len())]
}

// ---------------------------------------------------------------------------
// Fixed-point tails

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FixTail {
    pub f: usize,
    pub frequency: f64,
    pub wilson: (f64, f64),
    /// Explicit bound `min_r C(f,r)^{-1} C(n,r) (rℓ²/(n−rℓ))^r`.
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FixMoment {
    pub r: usize,
    /// Sample mean of `C(F, r)`.
    pub mean: f64,
    pub stderr: f64,
    /// `C(n,r) (rℓ²/(n−rℓ))^r`.
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FixTailReport {
    pub word: String,
    pub n: usize,
    pub trials: u64,
    pub mean_fixed: f64,
    pub tails: Vec<FixTail>,
    pub moments: Vec<FixMoment>,
    /// Whether `ℓ² < f` for the largest threshold.
    pub in_regime: bool,
}

fn ln_binomial(a: f64, b: usize) -> f64 {
    (0..b).map(|i| ((a - i as f64) / (b - i) as f64).ln()).sum()
}

/// `C(n,r) (rℓ²/(n−rℓ))^r` (infinite when `rℓ ≥ n`).
pub fn fix_moment_bound(n: usize, l: usize, r: usize) -> f64 {
    if r * l >= n {
        return f64::INFINITY;
    }
    let base = (r * l * l) as f64 / (n - r * l) as f64;
    (ln_binomial(n as f64, r) + r as f64 * base.ln()).exp()
}

/// The tail bound obtained from the binomial-moment bound, optimized over r.
pub fn fix_tail_bound(n: usize, l: usize, f: usize) -> f64 {
    if f == 0 {
        return 1.0;
    }
    (1..=f.div_ceil(2))
        .filter(|&r| r * l < n && r <= f)
        .map(|r| (ln_binomial(n as f64, r) + r as f64 * ((r * l * l) as f64 / (n - r * l) as f64).ln() - ln_binomial(f as f64, r)).exp())
        .fold(1.0, f64::min)
}

/// Monte Carlo distribution of `|fix w̄|` over uniform random permutations.
pub fn estimate_fix_tail(w: &Word, n: usize, thresholds: &[usize], max_moment: usize, trials: u64, seed: u64) -> Result<FixTailReport> {
    let w = w.reduce();
    if w.is_empty() {
        return Err(Error::Word("fixed points of the trivial word".into()));
    }
    let l = w.len();
    let chunks = chunk_sizes(trials, default_tasks(trials));
    let parts = map_tasks(chunks.len(), |task| {
        let mut rng = seed_stream(seed, task as u64);
        let mut counts = vec![0u64; thresholds.len()];
        let mut moments = vec![Estimate::zero(); max_moment];
        let mut fixed = Estimate::zero();
        for _ in 0..chunks[task] {
            let gens: Vec<Perm> = (0..w.k()).map(|_| Perm::random(n, &mut rng)).collect();
            let f = evaluate_word(&w, &gens).expect("one permutation per generator").fixed_points();
            fixed.push(f as f64);
            for (c, &th) in counts.iter_mut().zip(thresholds) {
                *c += u64::from(f >= th);
            }
            for (r, m) in moments.iter_mut().enumerate() {
                m.push(if f > r { ln_binomial(f as f64, r + 1).exp() } else { 0.0 });
            }
        }
        (counts, moments, fixed)
    });
    let mut counts = vec![0u64; thresholds.len()];
    let mut moments = vec![Estimate::zero(); max_moment];
    let mut fixed = Estimate::zero();
    for (c, m, fx) in parts {
        counts.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
        moments.iter_mut().zip(&m).for_each(|(a, b)| *a = a.merge(b));
        fixed = fixed.merge(&fx);
    }
    let tails = thresholds
        .iter()
        .zip(&counts)
        .map(|(&f, &c)| {
            let e = Estimate::from_counts(c, trials);
            FixTail { f, frequency: e.mean(), wilson: e.wilson(1.96), bound: fix_tail_bound(n, l, f) }
        })
        .collect();
    let moments = moments
        .iter()
        .enumerate()
        .map(|(r, e)| FixMoment { r: r + 1, mean: e.mean(), stderr: e.stderr(), bound: fix_moment_bound(n, l, r + 1) })
        .collect();
    let fmax = thresholds.iter().copied().max().unwrap_or(0);
    Ok(FixTailReport {
        word: w.to_string(),
        n,
        trials,
        mean_fixed: fixed.mean(),
        tails,
        moments,
        in_regime: l * l < fmax,
    })
}

// ---------------------------------------------------------------------------
// Cycle classes

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Types `(1,1,3,r,n′)` and `(2,3,r,n′)`, `n − 5 = n′ + r`, `r ∈ {4,5}`.
    Alt1,
    /// A 101-cycle and an n′-cycle, `n − 101 = n′ + r`, `r ∈ {99,100}`.
    Alt2,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "alt1" => Ok(Variant::Alt1),
            "alt2" => Ok(Variant::Alt2),
            _ => Err(Error::Parse(format!("unknown variant '{s}', expected alt1 or alt2"))),
        }
    }

    /// Length of the small cycle that survives the power map.
    pub fn small_cycle(self) -> usize {
        match self {
            Variant::Alt1 => 3,
            Variant::Alt2 => 101,
        }
    }

    fn offset_and_choices(self) -> (usize, [usize; 2]) {
        match self {
            Variant::Alt1 => (5, [4, 5]),
            Variant::Alt2 => (101, [99, 100]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassParams {
    pub variant: Variant,
    pub n: usize,
    pub r: usize,
    pub n_prime: usize,
}

/// The raw `(r, n′)` choice: the first `r` with `p ∤ n′`, without checking
/// that the cycle lengths are distinct.
pub fn class_params_raw(variant: Variant, n: usize) -> Option<ClassParams> {
    let (off, rs) = variant.offset_and_choices();
    let p = variant.small_cycle();
    rs.iter().find_map(|&r| {
        let np = n.checked_sub(off + r)?;
        (np > 0 && np % p != 0).then_some(ClassParams { variant, n, r, n_prime: np })
    })
}

/// Bookkeeping for `n`, rejecting choices where the distinguished cycle
/// lengths collide (then the density formulas change).
pub fn class_params(variant: Variant, n: usize) -> Result<ClassParams> {
    let (off, rs) = variant.offset_and_choices();
    let p = variant.small_cycle();
    rs.iter()
        .filter_map(|&r| {
            let np = n.checked_sub(off + r)?;
            let ok = np % p != 0
                && match variant {
                    Variant::Alt1 => np > 3 && np != r,
                    Variant::Alt2 => np > p,
                };
            ok.then_some(ClassParams { variant, n, r, n_prime: np })
        })
        .next()
        .ok_or_else(|| Error::Precondition(format!("n = {n} is degenerate for {variant:?}")))
}

impl ClassParams {
    /// The cycle types of the class (alt1 only; alt2 leaves an arbitrary
    /// remainder on r points).
    pub fn alt1_types(&self) -> Vec<CycleType> {
        vec![
            CycleType::new(vec![1, 1, 3, self.r, self.n_prime]),
            CycleType::new(vec![2, 3, self.r, self.n_prime]),
        ]
    }

    pub fn contains(&self, t: &CycleType) -> bool {
        match self.variant {
            Variant::Alt1 => self.alt1_types().contains(t),
            Variant::Alt2 => t.count(101) >= 1 && t.count(self.n_prime) >= 1 && (self.n_prime != 101),
        }
    }

    /// `2 r n′` (alt1) or `r! n′` (alt2).
    pub fn power_exponent(&self) -> BigUint {
        match self.variant {
            Variant::Alt1 => BigUint::from(2 * self.r * self.n_prime),
            Variant::Alt2 => (1..=self.r).fold(BigUint::from(self.n_prime), |acc, i| acc * i),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassDensity {
    pub params: ClassParams,
    /// Exact `|C| / n!` from cycle-type counting.
    pub density: String,
    /// The closed form `1/(2!·3·r·n′) + 1/(2·3·r·n′)` or `1/(101 n′)`.
    pub closed_form: String,
    /// Exact `⟨1_C, sgn⟩ = (1/n!) Σ_{g ∈ C} sgn(g)`.
    pub sign_inner: String,
    pub density_f64: f64,
    pub matches_closed_form: bool,
    pub sign_vanishes: bool,
}

/// `[x^r] exp(Σ_m c_m x^m / m)`: the sum of `Π c_{parts} / z_μ` over `μ ⊢ r`.
pub fn cycle_index_coefficient(r: usize, c: impl Fn(usize) -> i64) -> BigRational {
    let mut f = vec![BigRational::one()];
    for k in 1..=r {
        let mut s = BigRational::zero();
        for m in 1..=k {
            s += BigRational::from_integer(BigInt::from(c(m))) * &f[k - m];
        }
        f.push(s / BigRational::from_integer(BigInt::from(k)));
    }
    f.swap_remove(r)
}

fn rat(num: i64, den: BigUint) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact density and sign inner product of the class for `n`.
pub fn class_density_and_sign(variant: Variant, n: usize) -> Result<ClassDensity> {
    let params = class_params(variant, n)?;
    let (r, np) = (params.r, params.n_prime);
    let (density, closed, sign) = match variant {
        Variant::Alt1 => {
            let types = params.alt1_types();
            let density: BigRational = types.iter().map(CycleType::density).sum();
            let sign: BigRational =
                types.iter().map(|t| t.density() * BigRational::from_integer(BigInt::from(t.sign()))).sum();
            let closed = rat(1, BigUint::from(2 * 3 * r * np)) + rat(1, BigUint::from(2 * 3 * r * np));
            (density, closed, sign)
        }
        Variant::Alt2 => {
            // parts 101 and n′ exceed r, so they split off the cycle index
            let head = rat(1, BigUint::from(101 * np));
            let density = head.clone() * cycle_index_coefficient(r, |_| 1);
            let sgn_head = if np % 2 == 1 { 1 } else { -1 };
            let rest = cycle_index_coefficient(r, |m| if m % 2 == 1 { 1 } else { -1 });
            let sign = head.clone() * BigRational::from_integer(BigInt::from(sgn_head)) * rest;
            (density, head, sign)
        }
    };
    Ok(ClassDensity {
        params,
        density_f64: density.to_f64().unwrap_or(f64::NAN),
        matches_closed_form: density == closed,
        sign_vanishes: sign.is_zero(),
        density: density.to_string(),
        closed_form: closed.to_string(),
        sign_inner: sign.to_string(),
    })
}

// ---------------------------------------------------------------------------
// Search and power map

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SnWitness {
    /// The word `u` over `(y, z)`.
    pub u: Word,
    /// `ξ_1 · u(ξ_2, ξ_3)`.
    pub word: Word,
    pub element: Perm,
    pub cycle_type: CycleType,
    pub words_tested: u64,
}

/// First reduced `u` (by length, then letter order) with `x·ū ∈ C`.
pub fn find_word_into_cycle_class(x: &Perm, y: &Perm, z: &Perm, params: &ClassParams, max_len: usize) -> Option<SnWitness> {
    let n = x.n();
    if y.n() != n || z.n() != n || params.n != n {
        return None;
    }
    let gens = [y.clone(), z.clone()];
    let invs = [y.inverse(), z.inverse()];
    let mut tested = 0u64;
    let mut letters: Vec<Letter> = Vec::new();
    // depth-limited search per length keeps the output in shortlex order
    #[allow(clippy::too_many_arguments)]
    fn dfs(
        x: &Perm,
        acc: &Perm,
        depth: usize,
        target: usize,
        letters: &mut Vec<Letter>,
        gens: &[Perm; 2],
        invs: &[Perm; 2],
        params: &ClassParams,
        tested: &mut u64,
    ) -> Option<Perm> {
        if depth == target {
            *tested += 1;
            let g = x.compose(acc);
            return params.contains(&g.cycle_type()).then_some(g);
        }
        for key in 0..4 {
            let l = letter_from_key(key);
            if letters.last() == Some(&-l) {
                continue;
            }
            letters.push(l);
            let next = acc.compose(letter_perm(l, gens, invs));
            if let Some(g) = dfs(x, &next, depth + 1, target, letters, gens, invs, params, tested) {
                return Some(g);
            }
            letters.pop();
        }
        None
    }
    for len in 0..=max_len {
        if let Some(element) = dfs(x, &Perm::identity(n), 0, len, &mut letters, &gens, &invs, params, &mut tested) {
            let u = Word::new(2, letters.clone()).expect("letters over two generators");
            let mut full = vec![1];
            full.extend(letters.iter().map(|&l| l + l.signum()));
            let word = Word::new(3, full).expect("letters over three generators");
            return Some(SnWitness { u, word, cycle_type: element.cycle_type(), element, words_tested: tested });
        }
    }
    None
}

/// `g^e` with `e = 2rn′` (alt1) or `r!n′` (alt2), which is a single 3-cycle or
/// 101-cycle when `g` lies in the class.
pub fn power_to_small_cycle(g: &Perm, params: &ClassParams) -> Result<(Perm, BigUint)> {
    if !params.contains(&g.cycle_type()) {
        return Err(Error::Precondition(format!("cycle type {:?} is not in the class", g.cycle_type().parts())));
    }
    let e = params.power_exponent();
    let h = g.pow_big(&e);
    let want = CycleType::new(
        std::iter::once(params.variant.small_cycle()).chain(std::iter::repeat(1).take(g.n() - params.variant.small_cycle())).collect(),
    );
    if h.cycle_type() != want {
        return Err(Error::Internal("power map did not isolate the small cycle".into()));
    }
    Ok((h, e))
}

// ---------------------------------------------------------------------------
// The 3-cycle Schreier graph and the pipeline

/// Orbit of all 3-cycles of S_n under conjugation by `gens`, as permutations
/// of the canonical 3-cycle list. Returns the orbit and the canonical list.
pub fn three_cycle_graph(gens: &[Perm]) -> Result<(OrbitIndex, Vec<[u32; 3]>)> {
    let n = gens.first().map_or(0, Perm::n);
    if n < 3 || n > 2000 {
        return Err(Error::Precondition("3-cycle graphs need 3 ≤ n ≤ 2000".into()));
    }
    let canon = |a: u32, b: u32, c: u32| -> [u32; 3] {
        if a < b && a < c {
            [a, b, c]
        } else if b < a && b < c {
            [b, c, a]
        } else {
            [c, a, b]
        }
    };
    let mut list = Vec::new();
    for a in 0..n as u32 {
        for b in a + 1..n as u32 {
            for c in a + 1..n as u32 {
                if c != b {
                    list.push([a, b, c]);
                }
            }
        }
    }
    let key = |t: [u32; 3]| (t[0] as u64 * n as u64 + t[1] as u64) * n as u64 + t[2] as u64;
    let index: HashMap<u64, u32> = list.iter().enumerate().map(|(i, &t)| (key(t), i as u32)).collect();
    let perms = gens
        .iter()
        .map(|g| {
            list.iter()
                .map(|&[a, b, c]| index[&key(canon(g.apply(a), g.apply(b), g.apply(c)))])
                .collect::<Vec<u32>>()
        })
        .collect();
    Ok((OrbitIndex::from_permutations(perms)?, list))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub max_len: usize,
    /// Breadth-first eccentricity of the found 3-cycle.
    pub eccentricity: bool,
    /// Exact diameter of the 3-cycle Schreier graph (small n only).
    pub diameter: bool,
    /// Power-iteration spectral radius of the 3-cycle Schreier graph.
    pub gap: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions { max_len: 12, eccentricity: false, diameter: false, gap: false }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineReport {
    pub n: usize,
    pub seed: u64,
    pub params: Option<ClassParams>,
    pub witness_word: Option<String>,
    pub words_tested: u64,
    pub exponent: Option<String>,
    pub three_cycle: Option<[u32; 3]>,
    /// `|x·u| · exponent`: length of the explicit word for the 3-cycle.
    pub word_length: Option<u64>,
    /// `40 n ln n`.
    pub length_budget: f64,
    pub within_budget: bool,
    /// The explicit word re-evaluated independently gives a 3-cycle.
    pub verified: bool,
    pub eccentricity: Option<u32>,
    pub diameter: Option<u32>,
    pub lambda: Option<f64>,
    /// `(n−1)(2·ecc + word_length)`, a crude bound on the Cayley diameter of A_n.
    pub implied_bound: Option<f64>,
    pub failure: Option<String>,
}

/// Random `x, y, z ∈ S_n` from `seed`; search `x·u(y,z)` into the alt1 class,
/// power it to a 3-cycle, then optionally explore the 3-cycle Schreier graph.
pub fn sn_pipeline(n: usize, seed: u64, opts: &PipelineOptions) -> PipelineReport {
    let mut rng = seed_stream(seed, 0);
    let gens: Vec<Perm> = (0..3).map(|_| Perm::random(n, &mut rng)).collect();
    let mut rep = PipelineReport {
        n,
        seed,
        params: None,
        witness_word: None,
        words_tested: 0,
        exponent: None,
        three_cycle: None,
        word_length: None,
        length_budget: 40.0 * n as f64 * (n as f64).ln(),
        within_budget: false,
        verified: false,
        eccentricity: None,
        diameter: None,
        lambda: None,
        implied_bound: None,
        failure: None,
    };
    let params = match class_params(Variant::Alt1, n) {
        Ok(p) => p,
        Err(e) => {
            rep.failure = Some(format!("bookkeeping: {e}"));
            return rep;
        }
    };
    rep.params = Some(params);
    let Some(wit) = find_word_into_cycle_class(&gens[0], &gens[1], &gens[2], &params, opts.max_len) else {
        rep.failure = Some(format!("search: no word of length ≤ {} reached the class", opts.max_len + 1));
        return rep;
    };
    rep.words_tested = wit.words_tested;
    rep.witness_word = Some(wit.word.to_string());
    let (c3, e) = match power_to_small_cycle(&wit.element, &params) {
        Ok(x) => x,
        Err(err) => {
            rep.failure = Some(format!("power: {err}"));
            return rep;
        }
    };
    let e64 = e.to_u64().expect("alt1 exponents are small");
    rep.exponent = Some(e.to_string());
    let len = wit.word.len() as u64 * e64;
    rep.word_length = Some(len);
    rep.within_budget = (len as f64) <= rep.length_budget;
    // independent check: evaluate the word afresh and raise it by squaring
    let base = evaluate_word(&wit.word, &gens).expect("three generators");
    let mut acc = Perm::identity(n);
    let mut sq = base;
    let mut k = e64;
    while k > 0 {
        if k & 1 == 1 {
            acc = acc.compose(&sq);
        }
        sq = sq.compose(&sq);
        k >>= 1;
    }
    let moved: Vec<u32> = (0..n as u32).filter(|&i| acc.apply(i) != i).collect();
    rep.verified = acc == c3 && moved.len() == 3 && acc.compose(&acc).compose(&acc).is_identity();
    let a = moved.first().copied().unwrap_or(0);
    let tri = [a, c3.apply(a), c3.apply(c3.apply(a))];
    rep.three_cycle = Some(tri);
    if opts.eccentricity || opts.diameter || opts.gap {
        match three_cycle_graph(&gens) {
            Ok((orbit, list)) => {
                if opts.eccentricity {
                    let src = list.iter().position(|t| *t == tri).expect("canonical 3-cycle");
                    match orbit_eccentricity_from(&orbit, src) {
                        Some(ecc) => {
                            rep.eccentricity = Some(ecc);
                            rep.implied_bound = Some((n as f64 - 1.0) * (2.0 * ecc as f64 + len as f64));
                        }
                        None => rep.failure = Some("3-cycle graph is disconnected".into()),
                    }
                }
                if opts.diameter {
                    match orbit_diameter(&orbit) {
                        Ok(d) => rep.diameter = Some(d),
                        Err(e) => rep.failure = Some(format!("diameter: {e}")),
                    }
                }
                if opts.gap {
                    rep.lambda = Some(estimate_lambda_power(&orbit, 1e-8, 100_000).lambda);
                }
            }
            Err(e) => rep.failure = Some(format!("3-cycle graph: {e}")),
        }
    }
    rep
}

/// The Schreier graph of all transpositions acting on `m` points.
pub fn transposition_toy(m: usize) -> Result<OrbitIndex> {
    let mut perms = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            let mut p: Vec<u32> = (0..m as u32).collect();
            p.swap(i, j);
            perms.push(p);
        }
    }
    OrbitIndex::from_permutations(perms)
}
