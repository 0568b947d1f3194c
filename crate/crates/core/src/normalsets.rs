//! Large normal sets whose powers land in the minimal-degree set 𝔐, and the
//! word searches built on them.
//!
//! A `C_d` element is block diagonal for a decomposition
//! `L ⊥ V_1 ⊥ … ⊥ V_k ⊥ R ⊥ W`: a transvection-like element on `L`, a
//! companion action of a degree-`d` irreducible on each `V_i` (extended to the
//! dual singular half in the formed case), an element of `R` fixing the
//! abelian invariant, and the identity on `W`. Its `κ(q^d − 1)`-th power kills
//! every block except `L`, which leaves an element of minimal degree.
//!
//! Orthogonal `R` blocks come from a pinned table on the hyperbolic pair of
//! `R`: first `diag(a, a⁻¹)` for `a = 1, 2, …` in scalar order, then the
//! swaps `e ↦ a·f, f ↦ a⁻¹·e` in the same order; the first entry with the
//! required invariant is used.

use crate::error::{Error, Result};
use crate::forms::{abelian_invariant, AbelianInvariant, FormKind, FormedSpace};
use crate::gf::{FieldCtx, Scalar};
use crate::groups::GroupDesc;
use crate::linalg::{degree_of, element_order, factor_poly, is_irreducible, vec_from_index, BitMatrix, Matrix, Poly};
use crate::par::{default_tasks, map_tasks, seed_stream};
use crate::stats::Estimate;
use crate::words::{count_reduced, nth_reduced_word, Word};
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const INVENTORY_LIMIT: u64 = 1 << 22;

/// All monic irreducible polynomials of degree `d`, ordered by the integer
/// `Σ c_i q^i` of their lower coefficients.
pub fn irreducibles(f: &FieldCtx, d: usize) -> Result<Vec<Poly>> {
    if d == 0 {
        return Err(Error::Precondition("degree must be positive".into()));
    }
    let q = f.q() as u64;
    let total = q.checked_pow(d as u32).filter(|&t| t <= INVENTORY_LIMIT).ok_or_else(|| {
        Error::TooLarge(format!("q^d = {}^{d} polynomials is beyond the inventory limit", q))
    })?;
    let mut out = Vec::new();
    for idx in 0..total {
        let mut c = vec_from_index(f.q(), d, idx);
        c.push(1);
        let p = Poly::new(c);
        if is_irreducible(f, &p) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Number of monic irreducibles of degree d over F_q (Möbius inversion).
pub fn irreducible_count(q: u64, d: u32) -> u64 {
    let mut total: i128 = 0;
    for e in 1..=d {
        if d % e != 0 {
            continue;
        }
        let m = d / e;
        let mu = crate::arith::factorize(m as u64).iter().try_fold(1i128, |acc, &(_, k)| (k == 1).then_some(-acc));
        if let Some(mu) = mu {
            total += mu * (q as i128).pow(e);
        }
    }
    (total / d as i128) as u64
}

/// `p*(t) = p(0)⁻¹ t^d p(t⁻¹)`, with θ applied to the coefficients first in
/// the unitary case.
pub fn star(f: &FieldCtx, p: &Poly, unitary: bool) -> Result<Poly> {
    if p.is_zero() || !p.is_monic() {
        return Err(Error::Precondition("star needs a monic polynomial".into()));
    }
    let c0 = p.coeff(0);
    if c0 == 0 {
        return Err(Error::Precondition("star needs p(0) ≠ 0".into()));
    }
    let tw = |x: Scalar| if unitary { f.theta(x) } else { Ok(x) };
    let inv = f.inv(tw(c0)?);
    let mut rev = Vec::with_capacity(p.deg() + 1);
    for &c in p.coeffs().iter().rev() {
        rev.push(f.mul(inv, tw(c)?));
    }
    Ok(Poly::new(rev))
}

/// Unordered pairs `{p, p*}` with `p ≠ p*`, listed as `(p, p*)` with `p`
/// first in inventory order.
pub fn star_pairs(f: &FieldCtx, d: usize, unitary: bool) -> Result<Vec<(Poly, Poly)>> {
    let inv = irreducibles(f, d)?;
    let pos: BTreeMap<Poly, usize> = inv.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
    let mut out = Vec::new();
    for (i, p) in inv.iter().enumerate() {
        if p.coeff(0) == 0 {
            continue;
        }
        let s = star(f, p, unitary)?;
        if pos[&s] > i {
            out.push((p.clone(), s));
        }
    }
    Ok(out)
}

/// κ = 2 for orthogonal groups in even characteristic, 1 otherwise.
pub fn kappa(space: &FormedSpace) -> usize {
    if space.kind().is_orthogonal() && space.field().p() == 2 {
        2
    } else {
        1
    }
}

/// Minimal degree s of a nontrivial element of SCl.
pub fn minimal_degree(kind: FormKind) -> usize {
    if kind.is_orthogonal() {
        2
    } else {
        1
    }
}

fn anisotropic_dim(space: &FormedSpace) -> usize {
    space.n() - 2 * space.standard_pairs()
}

/// Parameters of one `C_d` fibre.
#[derive(Clone, Debug)]
pub struct NormalSetSpec {
    pub desc: GroupDesc,
    pub d: usize,
    pub k: usize,
    pub r: usize,
    pub alpha: AbelianInvariant,
    pub kappa: usize,
}

impl NormalSetSpec {
    pub fn new(desc: &GroupDesc, d: usize, alpha: AbelianInvariant) -> Result<NormalSetSpec> {
        let n = desc.n();
        if d < 2 || d > n {
            return Err(Error::Precondition(format!("block parameter d = {d} must lie in [2, {n}]")));
        }
        let space = desc.space();
        let kap = kappa(space);
        let (k, r) = if desc.kind() == FormKind::Linear {
            if n < 3 {
                return Err(Error::Precondition("the linear construction needs n ≥ 3".into()));
            }
            ((n - 3) / d, (n - 3) % d)
        } else {
            let delta = anisotropic_dim(space) + 4 + 2 * kap;
            if n < delta {
                return Err(Error::Precondition(format!("the formed construction needs n ≥ {delta}")));
            }
            ((n - delta) / (2 * d), (n - delta) % (2 * d))
        };
        if !desc.abelian_image().contains(&alpha) {
            return Err(Error::Precondition(format!("{alpha:?} is not an abelianization value of the space")));
        }
        Ok(NormalSetSpec { desc: desc.clone(), d, k, r, alpha, kappa: kap })
    }

    /// d = max(⌈log_q(4n)⌉, 2).
    pub fn default_d(desc: &GroupDesc) -> usize {
        let q = desc.field().q() as u64;
        let target = 4 * desc.n() as u64;
        let mut d = 1;
        let mut qd = q;
        while qd < target {
            qd *= q;
            d += 1;
        }
        d.max(2).min(desc.n())
    }

    /// κ(q^d − 1).
    pub fn exponent(&self) -> u64 {
        exponent_for(self.desc.field(), self.d, self.kappa)
    }

    pub fn delta(&self) -> usize {
        anisotropic_dim(self.desc.space()) + 4 + 2 * self.kappa
    }
}

fn exponent_for(f: &FieldCtx, d: usize, kap: usize) -> u64 {
    kap as u64 * ((f.q() as u64).pow(d as u32) - 1)
}

fn place(g: &mut Matrix, idx: &[usize], block: &Matrix) {
    for (i, &gi) in idx.iter().enumerate() {
        for (j, &gj) in idx.iter().enumerate() {
            g.set(gi, gj, block.get(i, j));
        }
    }
}

fn check_polys(spec: &NormalSetSpec, polys: &[Poly]) -> Result<()> {
    let f = spec.desc.field();
    if polys.len() != spec.k {
        return Err(Error::Precondition(format!("expected {} polynomials, got {}", spec.k, polys.len())));
    }
    let unitary = spec.desc.kind() == FormKind::Unitary;
    let formed = spec.desc.kind() != FormKind::Linear;
    let mut seen: Vec<Poly> = Vec::new();
    for p in polys {
        if !p.is_monic() || p.deg() != spec.d || !is_irreducible(f, p) || p.coeff(0) == 0 {
            return Err(Error::Precondition(format!("{} is not a monic irreducible of degree {}", p.to_text(), spec.d)));
        }
        if seen.contains(p) {
            return Err(Error::Precondition("block polynomials must be distinct (up to star)".into()));
        }
        seen.push(p.clone());
        if formed {
            let s = star(f, p, unitary)?;
            if &s == p {
                return Err(Error::Precondition(format!("{} is self-starred", p.to_text())));
            }
            if seen.contains(&s) {
                return Err(Error::Precondition("block polynomials must be distinct (up to star)".into()));
            }
            seen.push(s);
        }
    }
    Ok(())
}

/// Candidates for the R block in pinned order (see the module docs).
fn r_block_candidates(space: &FormedSpace) -> Vec<Matrix> {
    let f = space.field();
    let mut out = Vec::new();
    match space.kind() {
        FormKind::Linear => {
            for a in f.elements().skip(1) {
                out.push(Matrix::diag(&[a]));
            }
        }
        FormKind::Symplectic => out.push(Matrix::identity(2)),
        FormKind::Unitary => {
            for a in f.elements().skip(1) {
                out.push(Matrix::diag(&[a, f.inv(f.theta_or_id(a))]));
            }
        }
        _ => {
            for a in f.elements().skip(1) {
                out.push(Matrix::diag(&[a, f.inv(a)]));
            }
            for a in f.elements().skip(1) {
                let mut m = Matrix::zero(2, 2);
                m.set(1, 0, a);
                m.set(0, 1, f.inv(a));
                out.push(m);
            }
        }
    }
    out
}

/// The block element `g_{p_1,…,p_k; α}`.
pub fn build_cd_element(spec: &NormalSetSpec, polys: &[Poly]) -> Result<Matrix> {
    check_polys(spec, polys)?;
    let desc = &spec.desc;
    let space = desc.space();
    let f = desc.field();
    let n = desc.n();
    let d = spec.d;
    let mut g = Matrix::identity(n);
    let r_idx: Vec<usize>;
    if desc.kind() == FormKind::Linear {
        g.set(0, 1, 1);
        for (i, p) in polys.iter().enumerate() {
            let idx: Vec<usize> = (2 + i * d..2 + (i + 1) * d).collect();
            place(&mut g, &idx, &Matrix::companion(f, p));
        }
        r_idx = vec![2 + spec.k * d];
    } else {
        let e = |j: usize| 2 * j;
        let w = |j: usize| 2 * j + 1;
        let kap = spec.kappa;
        match desc.kind() {
            FormKind::Symplectic => g.set(e(0), w(0), 1),
            FormKind::Unitary => {
                let lam = f
                    .elements()
                    .skip(1)
                    .find(|&x| f.theta_or_id(x) == f.neg(x))
                    .ok_or_else(|| Error::Internal("no trace-zero scalar".into()))?;
                g.set(e(0), w(0), lam);
            }
            _ => {
                let m = kap + 1;
                let mut a = Matrix::identity(m);
                for i in 0..m - 1 {
                    a.set(i, i + 1, 1);
                }
                let at = a.inverse(f)?.transpose();
                let vi: Vec<usize> = (0..m).map(e).collect();
                let wi: Vec<usize> = (0..m).map(w).collect();
                place(&mut g, &vi, &a);
                place(&mut g, &wi, &at);
            }
        }
        let mut j0 = kap + 1;
        for p in polys {
            let a = Matrix::companion(f, p);
            let mut b = a.inverse(f)?.transpose();
            if desc.kind() == FormKind::Unitary {
                b = b.map(|x| f.theta_or_id(x));
            }
            let vi: Vec<usize> = (j0..j0 + d).map(e).collect();
            let wi: Vec<usize> = (j0..j0 + d).map(w).collect();
            place(&mut g, &vi, &a);
            place(&mut g, &wi, &b);
            j0 += d;
        }
        r_idx = vec![e(j0), w(j0)];
    }
    let rest = abelian_invariant(space, &g)?;
    let need = spec.alpha.combine(f, &rest.inverse(f));
    let mut chosen = None;
    for cand in r_block_candidates(space) {
        let mut emb = Matrix::identity(n);
        place(&mut emb, &r_idx, &cand);
        if abelian_invariant(space, &emb)? == need {
            chosen = Some(cand);
            break;
        }
    }
    let cand = chosen.ok_or_else(|| Error::Internal(format!("no R block realizes {need:?}")))?;
    place(&mut g, &r_idx, &cand);
    if !space.is_isometry(&g) || abelian_invariant(space, &g)? != spec.alpha {
        return Err(Error::Internal("built element fails its isometry or invariant check".into()));
    }
    if !desc.contains(&g) {
        return Err(Error::Precondition(format!("{:?} is not in the group's level", spec.alpha)));
    }
    Ok(g)
}

/// 𝔐 = {g ∈ SCl : deg g = s}.
#[derive(Clone, Debug)]
pub struct MinimalDegreeSet {
    special: GroupDesc,
    pub s: usize,
}

impl MinimalDegreeSet {
    pub fn new(desc: &GroupDesc) -> MinimalDegreeSet {
        MinimalDegreeSet { special: desc.special(), s: minimal_degree(desc.kind()) }
    }
    pub fn contains(&self, g: &Matrix) -> bool {
        !g.is_identity()
            && self.special.contains(g)
            && degree_of(self.special.field(), g).map(|d| d == self.s).unwrap_or(false)
    }
}

pub fn in_minimal_degree_set(mds: &MinimalDegreeSet, g: &Matrix) -> bool {
    mds.contains(g)
}

/// A word `w = (ξ_1 u)^e` with `w(x_0, …, x_k) ∈ 𝔐`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MWitness {
    /// `u` on the inner generators (letters shifted by one inside `word`).
    pub inner: Word,
    pub exponent: u64,
    /// Position of `u` in the pinned enumeration.
    pub index: u64,
    /// `x_0 · ū`.
    pub base: Matrix,
    /// The element of 𝔐.
    pub element: Matrix,
}

impl MWitness {
    /// The full word `(ξ_1 u)^e` on `k + 1` generators.
    pub fn word(&self) -> Word {
        let k1 = self.inner.k() + 1;
        let mut letters = vec![1];
        letters.extend(self.inner.letters().iter().map(|&l| if l > 0 { l + 1 } else { l - 1 }));
        Word::new(k1, letters).expect("valid letters").pow(self.exponent as usize)
    }
}

/// Reduced words of length ≤ max_len in shortlex order, addressed by index.
fn enumeration_total(k: usize, max_len: usize) -> u128 {
    (0..=max_len).map(|l| count_reduced(k, l)).sum()
}

fn word_at(k: usize, mut idx: u128) -> Word {
    let mut len = 0;
    loop {
        let c = count_reduced(k, len);
        if idx < c {
            return nth_reduced_word(k, len, idx);
        }
        idx -= c;
        len += 1;
    }
}

const SEARCH_WORD_LIMIT: u128 = 1_000_000;
const SEARCH_BATCH: u64 = 2048;

/// First index in `[0, total)` accepted by `test`, scanning in batches so the
/// parallel and sequential paths agree (minimum index wins).
fn first_hit<T: Send>(total: u64, test: impl Fn(u64) -> Result<Option<T>> + Sync) -> Result<Option<(u64, T)>> {
    let mut start = 0u64;
    while start < total {
        let end = (start + SEARCH_BATCH * 8).min(total);
        let tasks = default_tasks(end - start).min(8);
        let span = (end - start).div_ceil(tasks as u64);
        let hits: Vec<Result<Option<(u64, T)>>> = map_tasks(tasks, |t| {
            let lo = start + t as u64 * span;
            let hi = (lo + span).min(end);
            for i in lo..hi {
                if let Some(x) = test(i)? {
                    return Ok(Some((i, x)));
                }
            }
            Ok(None)
        });
        let mut best: Option<(u64, T)> = None;
        for h in hits {
            if let Some((i, x)) = h? {
                if best.as_ref().is_none_or(|b| i < b.0) {
                    best = Some((i, x));
                }
            }
        }
        if best.is_some() {
            return Ok(best);
        }
        start = end;
    }
    Ok(None)
}

/// Enumerate reduced `u` on `x_1, …, x_k` by the pinned order and return the
/// first with `(x_0 ū)^{κ(q^d−1)} ∈ 𝔐`.
pub fn search_word_into_m(desc: &GroupDesc, xs: &[Matrix], max_len: usize, d: usize) -> Result<Option<MWitness>> {
    if xs.len() < 2 {
        return Err(Error::Precondition("need x_0 and at least one inner generator".into()));
    }
    let k = xs.len() - 1;
    let total = enumeration_total(k, max_len);
    if total > SEARCH_WORD_LIMIT {
        return Err(Error::Budget(format!("{total} words exceed the search limit")));
    }
    let f = desc.field();
    let e = exponent_for(f, d, kappa(desc.space()));
    let mds = MinimalDegreeSet::new(desc);
    let invs: Vec<Matrix> = xs.iter().map(|x| x.inverse(f)).collect::<Result<_>>()?;
    let binary = desc.kind() == FormKind::Linear && f.q() == 2;
    let bits: Option<(Vec<BitMatrix>, Vec<BitMatrix>)> = binary.then(|| {
        (xs.iter().map(BitMatrix::from_matrix).collect(), invs.iter().map(BitMatrix::from_matrix).collect())
    });
    let hit = first_hit(total as u64, |i| {
        let u = word_at(k, i as u128);
        if let Some((bg, bi)) = &bits {
            let mut h = bg[0].clone();
            for &l in u.letters() {
                let j = l.unsigned_abs() as usize;
                h = h.mul(if l > 0 { &bg[j] } else { &bi[j] });
            }
            let p = h.pow(e);
            Ok((p.plus_identity().rank() == 1).then(|| (h.to_matrix(), p.to_matrix())))
        } else {
            let mut h = xs[0].clone();
            for &l in u.letters() {
                let j = l.unsigned_abs() as usize;
                h = h.mul(f, if l > 0 { &xs[j] } else { &invs[j] });
            }
            let p = h.pow(f, e);
            Ok(mds.contains(&p).then_some((h, p)))
        }
    })?;
    Ok(hit.map(|(index, (base, element))| MWitness { inner: word_at(k, index as u128), exponent: e, index, base, element }))
}

/// Words certifying the classes `C_1` (irreducible, order d(p^n−1)/(p−1)
/// with d | p−1) and `C_2` (order p^{n−1}−1, splitting as 1 + (n−1)).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateReport {
    pub c1: Option<(Word, BigUint)>,
    pub c2: Option<(Word, BigUint)>,
    pub words_tested: u64,
}

impl CertificateReport {
    pub fn certified(&self) -> bool {
        self.c1.is_some() && self.c2.is_some()
    }
}

/// No proper invariant subspace, i.e. irreducible characteristic polynomial.
pub fn is_irreducible_element(f: &FieldCtx, g: &Matrix) -> bool {
    is_irreducible(f, &g.char_poly(f))
}

fn c1_order(f: &FieldCtx, n: usize, g: &Matrix) -> Result<Option<BigUint>> {
    if !is_irreducible_element(f, g) {
        return Ok(None);
    }
    let p = BigUint::from(f.p());
    let one = BigUint::from(1u32);
    let m = (p.pow(n as u32) - &one) / (&p - &one);
    let ord = element_order(f, g)?;
    let ok = (&ord % &m) == BigUint::from(0u32) && ((&p - &one) % (&ord / &m)) == BigUint::from(0u32);
    Ok(ok.then_some(ord))
}

fn c2_order(f: &FieldCtx, n: usize, g: &Matrix) -> Result<Option<BigUint>> {
    let fac = factor_poly(f, &g.char_poly(f))?;
    let mut degs: Vec<usize> = fac.iter().flat_map(|(p, m)| std::iter::repeat_n(p.deg(), *m as usize)).collect();
    degs.sort_unstable();
    if degs != [1, n - 1] {
        return Ok(None);
    }
    let target = BigUint::from(f.p()).pow(n as u32 - 1) - BigUint::from(1u32);
    let ord = element_order(f, g)?;
    Ok((ord == target).then_some(ord))
}

/// Search short words in `gens ⊂ GL_n(p)` for members of `C_1` and `C_2`.
pub fn generation_certificate(f: &FieldCtx, gens: &[Matrix], max_len: usize) -> Result<CertificateReport> {
    if f.e() != 1 {
        return Err(Error::Precondition("generation certificates need a prime field".into()));
    }
    let n = gens.first().map(|g| g.rows()).ok_or_else(|| Error::Precondition("no generators".into()))?;
    if n < 3 {
        return Err(Error::Precondition("generation certificates need n ≥ 3".into()));
    }
    let k = gens.len();
    let invs: Vec<Matrix> = gens.iter().map(|x| x.inverse(f)).collect::<Result<_>>()?;
    let total = enumeration_total(k, max_len);
    if total > SEARCH_WORD_LIMIT {
        return Err(Error::Budget(format!("{total} words exceed the search limit")));
    }
    let mut report = CertificateReport { c1: None, c2: None, words_tested: 0 };
    for idx in 1..total {
        let w = word_at(k, idx);
        let g = w.evaluate_with(f, gens, &invs, n);
        report.words_tested += 1;
        if report.c1.is_none() {
            if let Some(o) = c1_order(f, n, &g)? {
                report.c1 = Some((w.clone(), o));
            }
        }
        if report.c2.is_none() {
            if let Some(o) = c2_order(f, n, &g)? {
                report.c2 = Some((w, o));
            }
        }
        if report.certified() {
            break;
        }
    }
    Ok(report)
}

/// Canonical-form proxy for membership in `C_d`: the degree-`d` factors of
/// the characteristic polynomial select block polynomials, and `g` must match
/// the built element with the same invariant in the nullities of every
/// `φ(g)^j`. Exact for the linear kind.
pub fn in_cd_proxy(desc: &GroupDesc, d: usize, g: &Matrix) -> Result<bool> {
    let f = desc.field();
    let alpha = abelian_invariant(desc.space(), g)?;
    let spec = NormalSetSpec::new(desc, d, alpha)?;
    let cp = g.char_poly(f);
    let fac = factor_poly(f, &cp)?;
    if fac.iter().any(|(p, _)| p.deg() != 1 && p.deg() != d) {
        return Ok(false);
    }
    let unitary = desc.kind() == FormKind::Unitary;
    let mut polys: Vec<Poly> = Vec::new();
    for (p, m) in &fac {
        if p.deg() != d {
            continue;
        }
        if *m != 1 {
            return Ok(false);
        }
        if desc.kind() == FormKind::Linear {
            polys.push(p.clone());
        } else {
            let s = star(f, p, unitary)?;
            if &s == p {
                return Ok(false);
            }
            if p < &s {
                polys.push(p.clone());
            }
        }
    }
    if polys.len() != spec.k {
        return Ok(false);
    }
    let g0 = match build_cd_element(&spec, &polys) {
        Ok(g0) => g0,
        Err(Error::Precondition(_)) => return Ok(false),
        Err(e) => return Err(e),
    };
    if g0.char_poly(f) != cp {
        return Ok(false);
    }
    let n = desc.n();
    for (p, m) in &fac {
        let (a, b) = (g.eval_poly(f, p), g0.eval_poly(f, p));
        let (mut pa, mut pb) = (a.clone(), b.clone());
        for j in 1..=*m {
            if j > 1 {
                pa = pa.mul(f, &a);
                pb = pb.mul(f, &b);
            }
            if n - pa.rank(f) != n - pb.rank(f) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityReport {
    pub group: String,
    pub d: usize,
    pub per_fibre: Vec<(AbelianInvariant, Estimate)>,
    pub total: Estimate,
    /// False for formed kinds, where the proxy may merge split classes.
    pub exact: bool,
}

/// Monte Carlo frequency of the `C_d` proxy among uniform elements, reported
/// per abelianization fibre as a fraction of all samples.
pub fn estimate_cd_density(desc: &GroupDesc, d: usize, trials: u64, seed: u64) -> Result<DensityReport> {
    NormalSetSpec::new(desc, d, AbelianInvariant::identity(desc.space()))?;
    let fibres: Vec<AbelianInvariant> = desc.level().to_vec();
    let chunks = crate::par::chunk_sizes(trials, default_tasks(trials));
    let results: Vec<Result<Vec<u64>>> = map_tasks(chunks.len(), |t| {
        let mut rng = seed_stream(seed, t as u64);
        let mut hits = vec![0u64; fibres.len()];
        for _ in 0..chunks[t] {
            let g = desc.sample_uniform(&mut rng);
            if in_cd_proxy(desc, d, &g)? {
                let a = abelian_invariant(desc.space(), &g)?;
                if let Some(i) = fibres.iter().position(|x| *x == a) {
                    hits[i] += 1;
                }
            }
        }
        Ok(hits)
    });
    let mut hits = vec![0u64; fibres.len()];
    for r in results {
        for (h, x) in hits.iter_mut().zip(r?) {
            *h += x;
        }
    }
    let all: u64 = hits.iter().sum();
    Ok(DensityReport {
        group: desc.descriptor(),
        d,
        per_fibre: fibres.into_iter().zip(hits).map(|(a, h)| (a, Estimate::from_counts(h, trials))).collect(),
        total: Estimate::from_counts(all, trials),
        exact: desc.kind() == FormKind::Linear,
    })
}
