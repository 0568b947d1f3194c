//! Group descriptors `Cl_n(q)` between `SCl` and `GCl`, keyed by a subgroup of
//! the abelianization, with exactly uniform sampling, membership and
//! exhaustive enumeration of tiny groups.
//!
//! Descriptor grammar: `KIND(n,q)[:LEVEL]` where KIND is one of
//! `GL SL Sp GU SU GO+ GO- GO SO+ SO- SO Omega+ Omega- Omega` and LEVEL is
//! `S` (trivial invariant), `G` (everything) or a comma-separated list of
//! invariant literals generating the level subgroup.

use crate::error::{Error, Result};
use crate::forms::{abelian_invariant, reflection, sample_admissible, AbelianInvariant, FormKind, FormedSpace};
use crate::gf::{make_field, prime_power, Field, FieldCtx, Scalar};
use crate::linalg::{unit_vec, Echelon, Matrix};
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::Rng;
use std::collections::BTreeMap;
use std::fmt;

/// Largest group `enumerate_small` will walk.
pub const ENUMERATION_LIMIT: u64 = 10_000_000;

#[derive(Clone)]
pub struct GroupDesc {
    space: FormedSpace,
    /// Elements of the level subgroup of GCl^ab, sorted.
    level: Vec<AbelianInvariant>,
    /// Elements of the image of GCl in the abelianization, sorted.
    image: Vec<AbelianInvariant>,
    /// For each element of `image`, a fixed isometry realizing it.
    corrections: BTreeMap<AbelianInvariant, Matrix>,
}

impl fmt::Debug for GroupDesc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.descriptor())
    }
}

impl PartialEq for GroupDesc {
    fn eq(&self, o: &Self) -> bool {
        self.space == o.space && self.level == o.level
    }
}
impl Eq for GroupDesc {}

/// Which part of the abelianization the group is cut down to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Level {
    Full,
    Special,
    Generated(Vec<AbelianInvariant>),
}

fn closure(f: &FieldCtx, gens: &[AbelianInvariant], id: AbelianInvariant) -> Vec<AbelianInvariant> {
    let mut set = vec![id];
    let mut i = 0;
    while i < set.len() {
        for g in gens {
            let h = set[i].combine(f, g);
            if !set.contains(&h) {
                set.push(h);
            }
        }
        i += 1;
    }
    set.sort();
    set
}

/// Vectors `c·e_i` and `e_i + c·e_j`, a small search space for anisotropic vectors.
fn short_vectors(space: &FormedSpace) -> Vec<Vec<Scalar>> {
    let f = space.field();
    let n = space.n();
    let mut out = Vec::new();
    for i in 0..n {
        for c in f.elements().skip(1) {
            let mut v = vec![0; n];
            v[i] = c;
            out.push(v);
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i != j {
                for c in f.elements().skip(1) {
                    let mut v = unit_vec(n, i);
                    v[j] = c;
                    out.push(v);
                }
            }
        }
    }
    out
}

/// Generators of GCl^ab realized by explicit sparse isometries.
fn correction_generators(space: &FormedSpace) -> Vec<Matrix> {
    let f = space.field();
    let n = space.n();
    match space.kind() {
        FormKind::Linear => {
            let g = f.generator();
            let mut d = vec![1; n];
            d[0] = g;
            vec![Matrix::diag(&d)]
        }
        FormKind::Symplectic => vec![],
        FormKind::Unitary => {
            let a = short_vectors(space)
                .into_iter()
                .find(|v| space.form(v, v) != 0)
                .expect("unitary spaces contain anisotropic vectors");
            let faa = space.form(&a, &a);
            // λ generating the norm-one group: g^(q0-1) for a primitive g
            let q0 = space.q0() as u64;
            let lam = f.pow(f.generator(), q0 - 1);
            let row = space.form_row(&a);
            let c = f.div(f.sub(lam, 1), faa);
            vec![Matrix::from_fn(n, n, |i, j| {
                f.add((i == j) as Scalar, f.mul(f.mul(c, a[i]), row[j]))
            })]
        }
        _ => {
            // one reflection per square class of Q-values that occurs
            let mut seen: Vec<bool> = Vec::new();
            let mut gens = Vec::new();
            for v in short_vectors(space) {
                let qv = space.quad_value(&v);
                if qv == 0 {
                    continue;
                }
                let class = f.p() != 2 && !f.is_square(qv);
                if seen.contains(&class) {
                    continue;
                }
                seen.push(class);
                gens.push(reflection(space, &v));
            }
            gens
        }
    }
}

impl GroupDesc {
    pub fn new(space: FormedSpace, level: Level) -> Result<GroupDesc> {
        let f = space.field().clone();
        let id = AbelianInvariant::identity(&space);
        let gens = correction_generators(&space);
        // realize every reachable invariant by a product of generators
        let mut corrections: BTreeMap<AbelianInvariant, Matrix> = BTreeMap::new();
        corrections.insert(id, Matrix::identity(space.n()));
        let mut frontier = vec![(id, Matrix::identity(space.n()))];
        while let Some((a, m)) = frontier.pop() {
            for g in &gens {
                let gm = g.mul(&f, &m);
                let b = abelian_invariant(&space, &gm)?;
                if !corrections.contains_key(&b) {
                    corrections.insert(b, gm.clone());
                    frontier.push((b, gm));
                }
            }
            let _ = a;
        }
        let image: Vec<AbelianInvariant> = corrections.keys().copied().collect();
        let all = AbelianInvariant::group_elements(&space);
        let level = match level {
            Level::Full => image.clone(),
            Level::Special => vec![id],
            Level::Generated(gs) => {
                for g in &gs {
                    if !all.contains(g) {
                        return Err(Error::Parse(format!("invariant {g:?} is not valid for {}", space.descriptor())));
                    }
                }
                closure(&f, &gs, id).into_iter().filter(|x| image.contains(x)).collect()
            }
        };
        Ok(GroupDesc { space, level, image, corrections })
    }

    pub fn standard(kind: FormKind, n: usize, q: u32, level: Level) -> Result<GroupDesc> {
        let (p, e) = prime_power(q).ok_or_else(|| Error::Field(format!("{q} is not a prime power")))?;
        let field = make_field(p, e)?;
        GroupDesc::new(FormedSpace::standard(kind, n, &field)?, level)
    }

    pub fn parse(s: &str) -> Result<GroupDesc> {
        let grammar = "expected KIND(n,q)[:S|:G|:inv,...] with KIND in GL SL Sp GU SU GO+ GO- GO SO+ SO- SO Omega+ Omega- Omega";
        let bad = |why: &str| Error::Parse(format!("bad group descriptor '{s}': {why}; {grammar}"));
        let s = s.trim();
        let (head, suffix) = match s.find(')') {
            Some(i) => (&s[..=i], s[i + 1..].trim()),
            None => return Err(bad("missing ')'")),
        };
        let open = head.find('(').ok_or_else(|| bad("missing '('"))?;
        let name = head[..open].trim();
        let args: Vec<&str> = head[open + 1..head.len() - 1].split(',').map(str::trim).collect();
        if args.len() != 2 {
            return Err(bad("need exactly two arguments"));
        }
        let n: usize = args[0].parse().map_err(|_| bad("dimension is not an integer"))?;
        let q: u32 = args[1].parse().map_err(|_| bad("field size is not an integer"))?;
        #[derive(PartialEq)]
        enum Default {
            Full,
            Special,
            DetOne,
        }
        let (kind, default) = match name {
            "GL" => (FormKind::Linear, Default::Full),
            "SL" => (FormKind::Linear, Default::Special),
            "Sp" => (FormKind::Symplectic, Default::Full),
            "GU" => (FormKind::Unitary, Default::Full),
            "SU" => (FormKind::Unitary, Default::Special),
            "GO+" => (FormKind::OrthogonalPlus, Default::Full),
            "GO-" => (FormKind::OrthogonalMinus, Default::Full),
            "GO" => (FormKind::OrthogonalOdd, Default::Full),
            "SO+" => (FormKind::OrthogonalPlus, Default::DetOne),
            "SO-" => (FormKind::OrthogonalMinus, Default::DetOne),
            "SO" => (FormKind::OrthogonalOdd, Default::DetOne),
            "Omega+" => (FormKind::OrthogonalPlus, Default::Special),
            "Omega-" => (FormKind::OrthogonalMinus, Default::Special),
            "Omega" => (FormKind::OrthogonalOdd, Default::Special),
            _ => return Err(bad(&format!("unknown kind '{name}'"))),
        };
        let (p, e) = prime_power(q).ok_or_else(|| bad("q is not a prime power"))?;
        let field = make_field(p, e)?;
        let space = FormedSpace::standard(kind, n, &field)?;
        let level = if let Some(rest) = suffix.strip_prefix(':') {
            match rest.trim() {
                "S" => Level::Special,
                "G" => Level::Full,
                lits => Level::Generated(
                    lits.split(',')
                        .map(|l| AbelianInvariant::parse_literal(&space, l))
                        .collect::<Result<Vec<_>>>()?,
                ),
            }
        } else if !suffix.is_empty() {
            return Err(bad("trailing characters"));
        } else {
            match default {
                Default::Full => Level::Full,
                Default::Special => Level::Special,
                Default::DetOne => {
                    if p == 2 {
                        return Err(bad("SO is ambiguous in characteristic 2; use Omega or GO"));
                    }
                    Level::Generated(vec![AbelianInvariant::Orth { det_minus: false, sn_nonsquare: true }])
                }
            }
        };
        GroupDesc::new(space, level)
    }

    /// Canonical descriptor: `GCl` name plus an explicit level suffix.
    pub fn descriptor(&self) -> String {
        let base = self.space.descriptor();
        if self.is_full() {
            base
        } else if self.level.len() == 1 {
            format!("{base}:S")
        } else {
            let lits: Vec<String> = self.level.iter().map(|a| a.to_literal()).collect();
            format!("{base}:{}", lits.join(","))
        }
    }

    pub fn space(&self) -> &FormedSpace {
        &self.space
    }
    pub fn field(&self) -> &FieldCtx {
        self.space.field()
    }
    pub fn field_arc(&self) -> &Field {
        self.space.field()
    }
    pub fn n(&self) -> usize {
        self.space.n()
    }
    pub fn kind(&self) -> FormKind {
        self.space.kind()
    }
    pub fn level(&self) -> &[AbelianInvariant] {
        &self.level
    }
    pub fn abelian_image(&self) -> &[AbelianInvariant] {
        &self.image
    }
    pub fn is_full(&self) -> bool {
        self.level.len() == self.image.len()
    }
    pub fn is_special(&self) -> bool {
        self.level.len() == 1
    }

    /// The same space at the `SCl` level.
    pub fn special(&self) -> GroupDesc {
        let mut g = self.clone();
        g.level = vec![AbelianInvariant::identity(&self.space)];
        g
    }

    /// True for tiny parameters where `SCl` is not quasisimple; such groups
    /// are fine as test oracles but are flagged in reports.
    pub fn non_quasisimple(&self) -> bool {
        let q = self.field().q();
        let n = self.n();
        match self.kind() {
            FormKind::Linear => n < 2 || (n == 2 && q <= 3),
            FormKind::Symplectic => n == 2 && q <= 3 || (n == 4 && q == 2),
            FormKind::Unitary => n < 3 || (n == 3 && q == 4),
            _ => n < 5,
        }
    }

    /// |GCl_n(q)| from the standard product formulas.
    pub fn gcl_order(&self) -> BigUint {
        let q = BigUint::from(self.field().q());
        let n = self.n() as u32;
        let one = BigUint::one();
        let pw = |b: &BigUint, k: u32| b.pow(k);
        match self.kind() {
            FormKind::Linear => {
                let mut o = pw(&q, n * (n - 1) / 2);
                for i in 1..=n {
                    o *= pw(&q, i) - &one;
                }
                o
            }
            FormKind::Symplectic => {
                let m = n / 2;
                let mut o = pw(&q, m * m);
                for i in 1..=m {
                    o *= pw(&q, 2 * i) - &one;
                }
                o
            }
            FormKind::OrthogonalPlus | FormKind::OrthogonalMinus => {
                let m = n / 2;
                let mut o = BigUint::from(2u32) * pw(&q, m * (m - 1));
                o *= if self.kind() == FormKind::OrthogonalPlus { pw(&q, m) - &one } else { pw(&q, m) + &one };
                for i in 1..m {
                    o *= pw(&q, 2 * i) - &one;
                }
                o
            }
            FormKind::OrthogonalOdd => {
                let m = n / 2;
                let mut o = BigUint::from(2u32) * pw(&q, m * m);
                for i in 1..=m {
                    o *= pw(&q, 2 * i) - &one;
                }
                o
            }
            FormKind::Unitary => {
                let q0 = BigUint::from(self.space.q0());
                let mut o = pw(&q0, n * (n - 1) / 2);
                for i in 1..=n {
                    o *= if i % 2 == 0 { pw(&q0, i) - &one } else { pw(&q0, i) + &one };
                }
                o
            }
        }
    }

    pub fn order(&self) -> BigUint {
        self.gcl_order() * BigUint::from(self.level.len()) / BigUint::from(self.image.len())
    }

    pub fn identity(&self) -> Matrix {
        Matrix::identity(self.n())
    }

    pub fn contains(&self, g: &Matrix) -> bool {
        if !self.space.is_isometry(g) {
            return false;
        }
        match abelian_invariant(&self.space, g) {
            Ok(a) => self.level.contains(&a),
            Err(_) => false,
        }
    }

    /// Exactly uniform element of GCl.
    pub fn sample_gcl<R: Rng + ?Sized>(&self, rng: &mut R) -> Matrix {
        let f = self.field();
        let n = self.n();
        let q = f.q();
        if self.kind() == FormKind::Linear {
            loop {
                let m = Matrix::from_fn(n, n, |_, _| rng.gen_range(0..q) as Scalar);
                if m.rank(f) == n {
                    return m;
                }
            }
        }
        let gram = self.space.gram();
        let mut cols: Vec<Vec<Scalar>> = Vec::with_capacity(n);
        let mut ech = Echelon::new();
        for t in 0..n {
            let cs: Vec<Scalar> = (0..t).map(|i| gram.get(t, i)).collect();
            let e = unit_vec(n, t);
            let target = self.space.quad_value(&e);
            let v = sample_admissible(&self.space, &cols, &cs, target, &ech, rng)
                .expect("standard spaces admit all basis-image constraints")
                .expect("Witt's lemma guarantees an admissible image");
            ech.insert(f, &v, &[]);
            cols.push(v);
        }
        Matrix::from_cols(&cols)
    }

    /// Fixed isometry whose invariant represents the coset `a · level`.
    fn coset_correction(&self, a: AbelianInvariant) -> &Matrix {
        let f = self.field();
        let rep = self
            .level
            .iter()
            .map(|l| a.combine(f, l))
            .min()
            .expect("level is nonempty");
        &self.corrections[&rep]
    }

    /// Exactly uniform element of the group: a uniform GCl element moved into
    /// the level by a fixed representative of its coset.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Matrix {
        let g = self.sample_gcl(rng);
        if self.is_full() {
            return g;
        }
        let f = self.field();
        let a = abelian_invariant(&self.space, &g).expect("sampler output is an isometry");
        let h = self.coset_correction(a);
        g.mul(f, &h.inverse(f).expect("corrections are invertible"))
    }

    /// Visit every element of the group (depth-first over basis images).
    pub fn for_each_element(&self, mut visit: impl FnMut(&Matrix)) -> Result<()> {
        let order = self.gcl_order();
        if order > BigUint::from(ENUMERATION_LIMIT) {
            return Err(Error::TooLarge(format!("{} has order {order}", self.descriptor())));
        }
        let f = self.field();
        let n = self.n();
        let q = f.q();
        let total = (q as u64).pow(n as u32);
        let vectors: Vec<Vec<Scalar>> = (0..total).map(|i| crate::linalg::vec_from_index(q, n, i)).collect();
        let qvals: Vec<Scalar> = vectors.iter().map(|v| self.space.quad_value(v)).collect();
        let targets: Vec<Scalar> = (0..n).map(|t| self.space.quad_value(&unit_vec(n, t))).collect();
        let gram = self.space.gram().clone();
        let check_q = self.kind().has_quadratic();
        let check_f = self.kind() != FormKind::Linear;
        let mut cols: Vec<Vec<Scalar>> = Vec::with_capacity(n);
        let full = self.is_full();
        #[allow(clippy::too_many_arguments)]
        fn dfs(
            desc: &GroupDesc,
            t: usize,
            cols: &mut Vec<Vec<Scalar>>,
            ech: &Echelon,
            vectors: &[Vec<Scalar>],
            qvals: &[Scalar],
            targets: &[Scalar],
            gram: &Matrix,
            flags: (bool, bool, bool),
            visit: &mut dyn FnMut(&Matrix),
        ) {
            let (check_q, check_f, full) = flags;
            let n = desc.n();
            let f = desc.field();
            if t == n {
                let g = Matrix::from_cols(cols);
                if full || desc.level.contains(&abelian_invariant(&desc.space, &g).expect("isometry")) {
                    visit(&g);
                }
                return;
            }
            let rows: Vec<Vec<Scalar>> = cols.iter().map(|c| desc.space.form_row(c)).collect();
            for (idx, v) in vectors.iter().enumerate() {
                if check_q && qvals[idx] != targets[t] {
                    continue;
                }
                if check_f {
                    let ok = rows.iter().enumerate().all(|(i, row)| {
                        let val = v.iter().zip(row).fold(0, |acc, (&a, &b)| f.add(acc, f.mul(a, b)));
                        val == gram.get(t, i)
                    });
                    if !ok {
                        continue;
                    }
                }
                if ech.contains(f, v) {
                    continue;
                }
                let mut e2 = ech.clone();
                e2.insert(f, v, &[]);
                cols.push(v.clone());
                dfs(desc, t + 1, cols, &e2, vectors, qvals, targets, gram, flags, visit);
                cols.pop();
            }
        }
        dfs(
            self,
            0,
            &mut cols,
            &Echelon::new(),
            &vectors,
            &qvals,
            &targets,
            &gram,
            (check_q, check_f, full),
            &mut visit,
        );
        Ok(())
    }

    pub fn enumerate_small(&self) -> Result<Vec<Matrix>> {
        let mut out = Vec::with_capacity(self.order().to_usize().unwrap_or(0).min(1 << 24));
        self.for_each_element(|g| out.push(g.clone()))?;
        Ok(out)
    }
}

impl fmt::Display for GroupDesc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.descriptor())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    use std::collections::HashMap;

    fn g(s: &str) -> GroupDesc {
        GroupDesc::parse(s).unwrap()
    }

    #[test]
    fn enumeration_sizes_match_formulas() {
        for (s, size) in [
            ("SL(2,2)", 6u64),
            ("GL(2,3)", 48),
            ("SL(2,3)", 24),
            ("Sp(4,2)", 720),
            ("Sp(2,3)", 24),
            ("GO+(2,3)", 4),
            ("GO-(2,2)", 6),
            ("GO(3,3)", 48),
            ("Omega(3,3)", 12),
            ("SO(3,3)", 24),
            ("GU(2,4)", 18),
            ("SU(2,4)", 6),
            ("GO+(4,2)", 72),
            ("Omega+(4,2)", 36),
            ("GL(1,5)", 4),
        ] {
            let d = g(s);
            let els = d.enumerate_small().unwrap();
            assert_eq!(els.len() as u64, size, "{s}");
            assert_eq!(d.order(), BigUint::from(size), "{s} formula");
            let mut keys: Vec<&[Scalar]> = els.iter().map(|m| m.data()).collect();
            keys.sort();
            keys.dedup();
            assert_eq!(keys.len(), els.len(), "{s} duplicates");
            assert!(els.iter().all(|m| d.contains(m)), "{s}");
        }
    }

    #[test]
    fn membership_examples() {
        let sl = g("SL(2,3)");
        assert!(sl.contains(&Matrix::identity(2)));
        assert!(!sl.contains(&Matrix::diag(&[2, 1])));
        let om = g("Omega+(2,2)");
        assert!(!om.contains(&Matrix::from_rows(&[vec![0, 1], vec![1, 0]])));
        assert!(om.contains(&Matrix::identity(2)));
    }

    #[test]
    fn parse_errors_name_the_grammar() {
        let e = GroupDesc::parse("Spx(4,3)").unwrap_err().to_string();
        assert!(e.contains("KIND(n,q)"), "{e}");
        assert!(GroupDesc::parse("Sp(3,3)").is_err());
        assert!(GroupDesc::parse("GL(2,6)").is_err());
        assert!(GroupDesc::parse("SO(3,2)").is_err());
        assert_eq!(g("SL(3,5)").descriptor(), "GL(3,5):S");
        assert_eq!(g("GL(3,5):4").order(), g("GL(3,5)").order() / BigUint::from(2u32));
        assert_eq!(GroupDesc::parse(&g("SO(3,5)").descriptor()).unwrap(), g("SO(3,5)"));
    }

    fn chi_square_uniform(d: &GroupDesc, draws: usize, seed: u64) -> f64 {
        let els = d.enumerate_small().unwrap();
        let index: HashMap<Vec<Scalar>, usize> =
            els.iter().enumerate().map(|(i, m)| (m.data().to_vec(), i)).collect();
        let mut counts = vec![0u64; els.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..draws {
            let m = d.sample_uniform(&mut rng);
            counts[index[m.data()]] += 1;
        }
        let exp = draws as f64 / els.len() as f64;
        let chi: f64 = counts.iter().map(|&c| (c as f64 - exp).powi(2) / exp).sum();
        1.0 - ChiSquared::new((els.len() - 1) as f64).unwrap().cdf(chi)
    }

    #[test]
    fn sampler_uniform_on_tiny_groups() {
        for (s, seed) in [("Sp(2,2)", 1), ("SL(2,3)", 2), ("Omega(3,3)", 3), ("SU(2,4)", 4), ("GO-(2,3)", 5)] {
            let p = chi_square_uniform(&g(s), 20_000, seed);
            assert!(p > 1e-3, "{s}: p = {p}");
        }
    }

    #[test]
    fn samples_are_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for s in ["SL(4,3)", "Sp(6,2)", "Omega+(6,3)", "Omega-(4,2)", "SU(3,4)", "Omega(5,3)", "GO(5,5):-+"] {
            let d = g(s);
            for _ in 0..50 {
                assert!(d.contains(&d.sample_uniform(&mut rng)), "{s}");
            }
        }
    }

    #[test]
    fn invariant_is_a_homomorphism_on_tiny_groups() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for s in ["GO(3,3)", "GO+(4,3)", "GO-(4,2)", "GU(2,9)", "GO-(2,5)"] {
            let d = g(s);
            let f = d.field();
            let els = d.enumerate_small().unwrap();
            for _ in 0..300 {
                let a = &els[rng.gen_range(0..els.len())];
                let b = &els[rng.gen_range(0..els.len())];
                let ia = abelian_invariant(d.space(), a).unwrap();
                let ib = abelian_invariant(d.space(), b).unwrap();
                let iab = abelian_invariant(d.space(), &a.mul(f, b)).unwrap();
                assert_eq!(iab, ia.combine(f, &ib), "{s}");
                let conj = b.mul(f, a).mul(f, &b.inverse(f).unwrap());
                assert_eq!(abelian_invariant(d.space(), &conj).unwrap(), ia, "{s}");
            }
        }
    }

    #[test]
    fn spinor_norm_on_so33_has_index_two_kernel() {
        let d = g("SO(3,3)");
        let els = d.enumerate_small().unwrap();
        assert_eq!(els.len(), 24);
        let kernel = els
            .iter()
            .filter(|m| abelian_invariant(d.space(), m).unwrap() == AbelianInvariant::identity(d.space()))
            .count();
        assert_eq!(kernel, 12);
    }
}
