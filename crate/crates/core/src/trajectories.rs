//! The query engine for linear actions: known domains, free and forced
//! choices, coincidences against a reference set R, and joint trajectories.
//!
//! Group elements can be given explicitly, or sampled lazily: each free
//! result is then drawn from its exact conditional law given all previous
//! answers (uniform among vectors outside the inverse letter's known domain
//! that respect the form conditions and Q). The lazy law is the one induced by
//! uniform elements of the full isometry group GCl.
//!
//! Beyond the uniform law, two tilted policies are available for the
//! one-coincidence falsification harness: closure tilting forces each final
//! free choice back onto the starting vector when that is admissible, and
//! records the product of the exact conditional probabilities of doing so
//! (an unbiased estimator of the closure probability); adversarial tilting
//! additionally pushes free choices into the span of the history to create
//! early coincidences. Every tilted answer is still admissible, so each record
//! is realized by some tuple of isometries.

use crate::error::{Error, Result};
use crate::forms::{count_quadric_points, sample_quadric_point, solve_form_conditions, Affine, FormKind, FormedSpace};
use crate::gf::{FieldCtx, Scalar};
use crate::groups::GroupDesc;
use crate::linalg::{support_of, Echelon, Matrix, Poly};
use crate::par::{chunk_sizes, map_tasks, seed_stream};
use crate::stats::Estimate;
use crate::words::{Letter, Word};
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// How lazy free choices are made.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Policy {
    /// Force final-layer free choices onto the start vector when admissible.
    pub tilt_closure: bool,
    /// Probability of forcing an early free choice into the history span.
    pub coincide_prob: f64,
}

impl Policy {
    pub fn uniform() -> Policy {
        Policy { tilt_closure: false, coincide_prob: 0.0 }
    }
    pub fn tilted() -> Policy {
        Policy { tilt_closure: true, coincide_prob: 0.0 }
    }
    pub fn adversarial(coincide_prob: f64) -> Policy {
        Policy { tilt_closure: true, coincide_prob }
    }
    pub fn is_uniform(&self) -> bool {
        !self.tilt_closure && self.coincide_prob == 0.0
    }
}

/// Where query answers come from.
pub enum Mode<'a, R: Rng + ?Sized> {
    Elements { gens: &'a [Matrix], invs: &'a [Matrix] },
    Lazy { rng: &'a mut R, policy: Policy },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub t: usize,
    pub strand: usize,
    pub letter: Letter,
    pub input: Vec<Scalar>,
    pub result: Vec<Scalar>,
    pub free: bool,
    pub coincidence: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub word: Word,
    pub starts: Vec<Vec<Scalar>>,
    /// `lattice[t][i] = v_i^t` for `0 ≤ t ≤ ℓ`.
    pub lattice: Vec<Vec<Vec<Scalar>>>,
    pub queries: Vec<Query>,
    /// Coincidence positions `(t, i)`, 1-based step, 0-based strand.
    pub coincidences: Vec<(usize, usize)>,
    /// `v_i^ℓ = v_i^0`.
    pub closed: Vec<bool>,
    /// `v_i^ℓ ∈ span R`.
    pub ends_in_r: Vec<bool>,
    /// Indicator of joint closure under the uniform policy; under closure
    /// tilting, the product of the final-layer conditional probabilities.
    pub weight: f64,
}

impl TrajectoryRecord {
    pub fn all_closed(&self) -> bool {
        self.closed.iter().all(|&c| c)
    }
    pub fn coincidences_in(&self, strand: usize) -> Vec<usize> {
        self.coincidences.iter().filter(|c| c.1 == strand).map(|c| c.0).collect()
    }
    /// Coincidence pattern as a bitmask over queries in (t, i) order.
    pub fn pattern(&self) -> u64 {
        self.queries.iter().enumerate().fold(0, |acc, (j, q)| acc | ((q.coincidence as u64) << j))
    }
    pub fn to_jsonl(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }
}

/// Known partial maps of the generators plus the coincidence history.
pub struct QueryState<'a> {
    space: &'a FormedSpace,
    /// Per generator: key = input, payload = output.
    fwd: Vec<Echelon>,
    /// Per generator: key = output, payload = input.
    bwd: Vec<Echelon>,
    history: Echelon,
}

/// Constraint data for a free query: `f(y, conds[j].0) = conds[j].1`,
/// `Q(y) = target`, `y ∉ span(excluded)`.
pub struct FreeConstraints<'s> {
    pub conds: Vec<(Vec<Scalar>, Scalar)>,
    pub target: Scalar,
    pub excluded: &'s Echelon,
}

impl<'a> QueryState<'a> {
    pub fn new(space: &'a FormedSpace, k: usize, r_set: &[Vec<Scalar>]) -> QueryState<'a> {
        let f = space.field();
        let mut history = Echelon::new();
        for v in r_set {
            history.insert(f, v, &[]);
        }
        QueryState { space, fwd: vec![Echelon::new(); k], bwd: vec![Echelon::new(); k], history }
    }

    fn dom(&self, letter: Letter) -> &Echelon {
        let j = (letter.unsigned_abs() - 1) as usize;
        if letter > 0 {
            &self.fwd[j]
        } else {
            &self.bwd[j]
        }
    }

    fn codom(&self, letter: Letter) -> &Echelon {
        let j = (letter.unsigned_abs() - 1) as usize;
        if letter > 0 {
            &self.bwd[j]
        } else {
            &self.fwd[j]
        }
    }

    /// The determined result when `v` lies in the known domain of the letter.
    pub fn forced(&self, letter: Letter, v: &[Scalar]) -> Option<Vec<Scalar>> {
        self.dom(letter).apply(self.space.field(), v, v.len())
    }

    pub fn constraints(&self, letter: Letter, v: &[Scalar]) -> FreeConstraints<'_> {
        let conds = self
            .dom(letter)
            .pairs()
            .map(|(key, payload)| (payload.to_vec(), self.space.form(v, key)))
            .collect();
        FreeConstraints { conds, target: self.space.quad_value(v), excluded: self.codom(letter) }
    }

    pub fn history(&self) -> &Echelon {
        &self.history
    }

    /// Record a query; returns whether a free result is a coincidence.
    pub fn record(&mut self, letter: Letter, v: &[Scalar], y: &[Scalar], free: bool) -> bool {
        let f = self.space.field();
        let j = (letter.unsigned_abs() - 1) as usize;
        if !self.history.contains(f, v) {
            self.history.insert(f, v, &[]);
        }
        let known = self.history.contains(f, y);
        if !known {
            self.history.insert(f, y, &[]);
        }
        let coincidence = free && known;
        if free {
            if letter > 0 {
                self.fwd[j].insert(f, v, y);
                self.bwd[j].insert(f, y, v);
            } else {
                self.fwd[j].insert(f, y, v);
                self.bwd[j].insert(f, v, y);
            }
        }
        coincidence
    }
}

/// Solutions of `f(y, o_j) = c_j` with `y` restricted to `span(basis)`, as an
/// affine coset of the space (`None` if empty). `basis` must be independent.
pub fn restrict_conditions(
    space: &FormedSpace,
    conds: &[(Vec<Scalar>, Scalar)],
    basis: &[Vec<Scalar>],
) -> Result<Option<Affine>> {
    let f = space.field();
    let n = space.n();
    let m = basis.len();
    if m == 0 {
        let ok = conds.iter().all(|(_, c)| *c == 0);
        return Ok(ok.then(|| Affine { base: vec![0; n], dirs: vec![] }));
    }
    if conds.is_empty() {
        return Ok(Some(Affine { base: vec![0; n], dirs: basis.to_vec() }));
    }
    let a = Matrix::from_fn(conds.len(), m, |i, j| space.form(&basis[j], &conds[i].0));
    let b: Vec<Scalar> = conds.iter().map(|c| c.1).collect();
    let Some(sol) = a.solve_affine(f, &b)? else {
        return Ok(None);
    };
    let lift = |c: &[Scalar]| -> Vec<Scalar> {
        let mut v = vec![0; n];
        for (cj, bj) in c.iter().zip(basis) {
            crate::linalg::axpy(f, &mut v, *cj, bj);
        }
        v
    };
    Ok(Some(Affine { base: lift(&sol.particular), dirs: sol.kernel.iter().map(|k| lift(k)).collect() }))
}

fn restrict_within(
    space: &FormedSpace,
    conds: &[(Vec<Scalar>, Scalar)],
    within: Option<&[Vec<Scalar>]>,
) -> Result<Option<Affine>> {
    match within {
        Some(basis) => restrict_conditions(space, conds, basis),
        None => {
            let (vs, cs): (Vec<Vec<Scalar>>, Vec<Scalar>) = conds.iter().cloned().unzip();
            solve_form_conditions(space, &vs, &cs)
        }
    }
}

/// Exact number of admissible results inside `span(within)` (the whole space
/// when `None`); `excluded` must lie inside that span.
pub fn admissible_count(space: &FormedSpace, c: &FreeConstraints<'_>, within: Option<&[Vec<Scalar>]>) -> Result<u128> {
    let total = match restrict_within(space, &c.conds, within)? {
        Some(aff) => count_quadric_points(space, &aff, c.target)?,
        None => 0,
    };
    let ex = match restrict_conditions(space, &c.conds, &c.excluded.basis())? {
        Some(aff) => count_quadric_points(space, &aff, c.target)?,
        None => 0,
    };
    Ok(total - ex)
}

pub fn is_admissible(space: &FormedSpace, c: &FreeConstraints<'_>, y: &[Scalar]) -> bool {
    c.conds.iter().all(|(o, val)| space.form(y, o) == *val)
        && space.quad_value(y) == c.target
        && !c.excluded.contains(space.field(), y)
}

const REJECTION_LIMIT: usize = 1_000_000;

/// Uniform admissible result inside `span(within)` (whole space for `None`);
/// `None` when there is none.
pub fn sample_admissible_in<R: Rng + ?Sized>(
    space: &FormedSpace,
    c: &FreeConstraints<'_>,
    within: Option<&[Vec<Scalar>]>,
    rng: &mut R,
) -> Result<Option<Vec<Scalar>>> {
    let f = space.field();
    let Some(aff) = restrict_within(space, &c.conds, within)? else {
        return Ok(None);
    };
    for attempt in 0..REJECTION_LIMIT {
        let Some(y) = sample_quadric_point(space, &aff, c.target, rng)? else {
            return Ok(None);
        };
        if !c.excluded.contains(f, &y) {
            return Ok(Some(y));
        }
        // the excluded part may exhaust a small set; check exactly once
        if attempt == 64 && admissible_count(space, c, within)? == 0 {
            return Ok(None);
        }
    }
    Err(Error::Internal("rejection sampling of a free result did not terminate".into()))
}

/// Run the joint trajectory of `starts` under `w` (queries in (t, i) order).
pub fn run_joint_trajectory<R: Rng + ?Sized>(
    space: &FormedSpace,
    w: &Word,
    starts: &[Vec<Scalar>],
    r_set: &[Vec<Scalar>],
    mut mode: Mode<'_, R>,
) -> Result<TrajectoryRecord> {
    if !w.is_reduced() {
        return Err(Error::Precondition("trajectories need a reduced word".into()));
    }
    let n = space.n();
    if starts.iter().chain(r_set).any(|v| v.len() != n) {
        return Err(Error::Shape("start and reference vectors must have length n".into()));
    }
    if let Mode::Elements { gens, invs } = &mode {
        if gens.len() != w.k() || invs.len() != w.k() {
            return Err(Error::Word("one element (and inverse) per generator is required".into()));
        }
    }
    let f = space.field();
    let l = w.len();
    let r = starts.len();
    let mut state = QueryState::new(space, w.k(), r_set);
    let mut lattice = vec![starts.to_vec()];
    let mut queries = Vec::with_capacity(l * r);
    let mut coincidences = Vec::new();
    let mut weight = 1.0f64;
    for t in 1..=l {
        let letter = w.step(t);
        let mut layer = Vec::with_capacity(r);
        for i in 0..r {
            let v = lattice[t - 1][i].clone();
            let (y, free) = match state.forced(letter, &v) {
                Some(y) => {
                    if t == l {
                        if let Mode::Lazy { policy, .. } = &mode {
                            if policy.tilt_closure && y != starts[i] {
                                weight = 0.0;
                            }
                        }
                    }
                    (y, false)
                }
                None => {
                    let y = match &mut mode {
                        Mode::Elements { gens, invs } => {
                            let j = (letter.unsigned_abs() - 1) as usize;
                            let m = if letter > 0 { &gens[j] } else { &invs[j] };
                            m.mul_vec(f, &v)
                        }
                        Mode::Lazy { rng, policy } => {
                            let c = state.constraints(letter, &v);
                            let mut chosen = None;
                            if policy.tilt_closure && t == l {
                                if is_admissible(space, &c, &starts[i]) {
                                    let cnt = admissible_count(space, &c, None)?;
                                    weight /= cnt as f64;
                                    chosen = Some(starts[i].clone());
                                } else {
                                    weight = 0.0;
                                }
                            } else if policy.coincide_prob > 0.0 && rng.gen_bool(policy.coincide_prob) {
                                let mut span = state.history().clone();
                                span.insert(f, &v, &[]);
                                chosen = sample_admissible_in(space, &c, Some(&span.basis()), *rng)?;
                            }
                            match chosen {
                                Some(y) => y,
                                None => sample_admissible_in(space, &c, None, *rng)?.ok_or_else(|| {
                                    Error::Internal("free query has no admissible result".into())
                                })?,
                            }
                        }
                    };
                    (y, true)
                }
            };
            let coincidence = state.record(letter, &v, &y, free);
            if coincidence {
                coincidences.push((t, i));
            }
            queries.push(Query { t, strand: i, letter, input: v, result: y.clone(), free, coincidence });
            layer.push(y);
        }
        lattice.push(layer);
    }
    let closed: Vec<bool> = (0..r).map(|i| lattice[l][i] == starts[i]).collect();
    let mut r_ech = Echelon::new();
    for v in r_set {
        r_ech.insert(f, v, &[]);
    }
    let ends_in_r: Vec<bool> = (0..r).map(|i| r_ech.contains(f, &lattice[l][i])).collect();
    if let Mode::Lazy { policy, .. } = &mode {
        if !policy.tilt_closure {
            weight = if closed.iter().all(|&c| c) { 1.0 } else { 0.0 };
        }
    } else {
        weight = if closed.iter().all(|&c| c) { 1.0 } else { 0.0 };
    }
    // every strand with a new start that ends in span R saw a coincidence
    let mut prefix = Echelon::new();
    for i in 0..r {
        let fresh = prefix.insert(f, &starts[i], &[]);
        if fresh && l > 0 && ends_in_r[i] && !coincidences.iter().any(|c| c.1 == i) {
            return Err(Error::Internal(format!("strand {i} ends in span R without a coincidence")));
        }
    }
    Ok(TrajectoryRecord { word: w.clone(), starts: starts.to_vec(), lattice, queries, coincidences, closed, ends_in_r, weight })
}

// ---- GF(2) fast path ----

/// Row echelon over F_2 with vectors packed in a `u64` and a packed payload.
#[derive(Clone, Debug, Default)]
pub struct BitEchelon {
    rows: Vec<(u64, u64, u64)>,
}

impl BitEchelon {
    #[inline]
    pub fn reduce(&self, mut v: u64) -> (u64, u64) {
        let mut pay = 0;
        for &(piv, row, p) in &self.rows {
            if v & piv != 0 {
                v ^= row;
                pay ^= p;
            }
        }
        (v, pay)
    }
    #[inline]
    pub fn contains(&self, v: u64) -> bool {
        self.reduce(v).0 == 0
    }
    #[inline]
    pub fn apply(&self, v: u64) -> Option<u64> {
        let (res, pay) = self.reduce(v);
        (res == 0).then_some(pay)
    }
    pub fn insert(&mut self, v: u64, payload: u64) -> bool {
        let (res, pc) = self.reduce(v);
        if res == 0 {
            return false;
        }
        let piv = res & res.wrapping_neg();
        let pay = payload ^ pc;
        for row in self.rows.iter_mut() {
            if row.1 & piv != 0 {
                row.1 ^= res;
                row.2 ^= pay;
            }
        }
        self.rows.push((piv, res, pay));
        true
    }
    pub fn dim(&self) -> usize {
        self.rows.len()
    }
    pub fn clear(&mut self) {
        self.rows.clear();
    }
    fn basis(&self) -> impl Iterator<Item = u64> + '_ {
        self.rows.iter().map(|r| r.1)
    }
}

/// Reusable scratch state for lazy trajectories in GL_n(2), n ≤ 64.
pub struct Gf2Engine {
    n: usize,
    mask: u64,
    fwd: Vec<BitEchelon>,
    bwd: Vec<BitEchelon>,
    history: BitEchelon,
    /// `lattice[t * r + i]`.
    pub lattice: Vec<u64>,
    pub coincidences: Vec<(usize, usize)>,
    pub free_flags: Vec<bool>,
    pub weight: f64,
}

impl Gf2Engine {
    pub fn new(n: usize, k: usize) -> Gf2Engine {
        assert!((1..=64).contains(&n));
        let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        Gf2Engine {
            n,
            mask,
            fwd: vec![BitEchelon::default(); k],
            bwd: vec![BitEchelon::default(); k],
            history: BitEchelon::default(),
            lattice: Vec::new(),
            coincidences: Vec::new(),
            free_flags: Vec::new(),
            weight: 1.0,
        }
    }

    pub fn pack(v: &[Scalar]) -> u64 {
        v.iter().enumerate().fold(0, |acc, (i, &x)| acc | (((x & 1) as u64) << i))
    }

    pub fn unpack(&self, v: u64) -> Vec<Scalar> {
        (0..self.n).map(|i| (v >> i & 1) as Scalar).collect()
    }

    /// Run one lazy joint trajectory; results land in the public fields.
    pub fn run<R: Rng + ?Sized>(&mut self, w: &Word, starts: &[u64], r_set: &[u64], policy: Policy, rng: &mut R) {
        let l = w.len();
        let r = starts.len();
        for e in self.fwd.iter_mut().chain(self.bwd.iter_mut()) {
            e.clear();
        }
        self.history.clear();
        for &v in r_set {
            self.history.insert(v, 0);
        }
        self.lattice.clear();
        self.lattice.extend_from_slice(starts);
        self.coincidences.clear();
        self.free_flags.clear();
        self.weight = 1.0;
        let full = 2f64.powi(self.n as i32);
        for t in 1..=l {
            let letter = w.step(t);
            let j = (letter.unsigned_abs() - 1) as usize;
            for i in 0..r {
                let v = self.lattice[(t - 1) * r + i];
                let (dom, codom) = if letter > 0 { (&self.fwd[j], &self.bwd[j]) } else { (&self.bwd[j], &self.fwd[j]) };
                let (y, free) = match dom.apply(v) {
                    Some(y) => {
                        if policy.tilt_closure && t == l && y != starts[i] {
                            self.weight = 0.0;
                        }
                        (y, false)
                    }
                    None => {
                        let mut chosen = None;
                        if policy.tilt_closure && t == l {
                            if !codom.contains(starts[i]) {
                                self.weight /= full - 2f64.powi(codom.dim() as i32);
                                chosen = Some(starts[i]);
                            } else {
                                self.weight = 0.0;
                            }
                        } else if policy.coincide_prob > 0.0 && rng.gen_bool(policy.coincide_prob) {
                            let mut span = self.history.clone();
                            span.insert(v, 0);
                            if span.dim() > codom.dim() {
                                let basis: Vec<u64> = span.basis().collect();
                                loop {
                                    let pick = rng.gen::<u64>();
                                    let y = basis
                                        .iter()
                                        .enumerate()
                                        .fold(0u64, |acc, (b, &x)| if pick >> b & 1 == 1 { acc ^ x } else { acc });
                                    if !codom.contains(y) {
                                        chosen = Some(y);
                                        break;
                                    }
                                }
                            }
                        }
                        let y = chosen.unwrap_or_else(|| loop {
                            let y = rng.gen::<u64>() & self.mask;
                            if !codom.contains(y) {
                                break y;
                            }
                        });
                        (y, true)
                    }
                };
                self.history.insert(v, 0);
                if free {
                    if self.history.contains(y) {
                        self.coincidences.push((t, i));
                    }
                    if letter > 0 {
                        self.fwd[j].insert(v, y);
                        self.bwd[j].insert(y, v);
                    } else {
                        self.fwd[j].insert(y, v);
                        self.bwd[j].insert(v, y);
                    }
                }
                self.history.insert(y, 0);
                self.free_flags.push(free);
                self.lattice.push(y);
            }
        }
        if !policy.tilt_closure {
            let closed = (0..r).all(|i| self.lattice[l * r + i] == starts[i]);
            self.weight = if closed { 1.0 } else { 0.0 };
        }
    }

    pub fn closed(&self, l: usize, r: usize, i: usize) -> bool {
        self.lattice[l * r + i] == self.lattice[i]
    }

    /// Full record of the last run (R is not retained, so `ends_in_r`
    /// reports membership in the span of the starts).
    pub fn to_record(&self, w: &Word, r: usize) -> TrajectoryRecord {
        let l = w.len();
        let starts: Vec<Vec<Scalar>> = (0..r).map(|i| self.unpack(self.lattice[i])).collect();
        let lattice: Vec<Vec<Vec<Scalar>>> =
            (0..=l).map(|t| (0..r).map(|i| self.unpack(self.lattice[t * r + i])).collect()).collect();
        let mut queries = Vec::with_capacity(l * r);
        for t in 1..=l {
            for i in 0..r {
                queries.push(Query {
                    t,
                    strand: i,
                    letter: w.step(t),
                    input: lattice[t - 1][i].clone(),
                    result: lattice[t][i].clone(),
                    free: self.free_flags[(t - 1) * r + i],
                    coincidence: self.coincidences.contains(&(t, i)),
                });
            }
        }
        let mut span = BitEchelon::default();
        for i in 0..r {
            span.insert(self.lattice[i], 0);
        }
        TrajectoryRecord {
            word: w.clone(),
            closed: (0..r).map(|i| self.closed(l, r, i)).collect(),
            ends_in_r: (0..r).map(|i| span.contains(self.lattice[l * r + i])).collect(),
            starts,
            lattice,
            queries,
            coincidences: self.coincidences.clone(),
            weight: self.weight,
        }
    }
}

// ---- one-coincidence classifier ----

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// Coincidence step of each strand.
    pub steps: Vec<usize>,
    /// d = gcd(t_1, …, t_r, ℓ).
    pub period: usize,
    /// w = (w_d ⋯ w_1)^{ℓ/d}.
    pub periodic: bool,
    /// For r = 1: coefficients a_0..a_{t-1} with v^t = Σ a_i v^i.
    pub coefficients: Option<Vec<Scalar>>,
    /// For r = 1: f = X^t − Σ a_i X^i divides X^ℓ − 1.
    pub divides: Option<bool>,
    /// For r = 1: v^{t+s} = Σ a_i v^{i+s} for all s (indices mod ℓ).
    pub recurrence: Option<bool>,
}

impl Verdict {
    /// A closed one-coincidence record contradicting the period conclusion.
    pub fn violation(&self) -> bool {
        !self.periodic || self.divides == Some(false) || self.recurrence == Some(false)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Check the period conclusion for a closed record with exactly one
/// coincidence per strand.
pub fn classify_one_coincidence(f: &FieldCtx, rec: &TrajectoryRecord) -> Result<Verdict> {
    let w = &rec.word;
    let l = w.len();
    if l == 0 || !w.is_cyclically_reduced() {
        return Err(Error::Precondition("word must be nontrivial and cyclically reduced".into()));
    }
    if !rec.all_closed() {
        return Err(Error::Precondition("trajectory is not closed".into()));
    }
    let r = rec.starts.len();
    if crate::linalg::span_rank(f, &rec.starts) < r {
        return Err(Error::Precondition("start vectors must be independent".into()));
    }
    let mut steps = Vec::with_capacity(r);
    for i in 0..r {
        let c = rec.coincidences_in(i);
        if c.len() != 1 {
            return Err(Error::Precondition(format!("strand {i} has {} coincidences", c.len())));
        }
        steps.push(c[0]);
    }
    let period = steps.iter().fold(l, |acc, &t| gcd(acc, t));
    let letters = w.letters();
    let periodic = (period..l).all(|i| letters[i] == letters[i - period]);
    let (mut coefficients, mut divides, mut recurrence) = (None, None, None);
    if r == 1 {
        let t = steps[0];
        let cols: Vec<Vec<Scalar>> = (0..t).map(|s| rec.lattice[s][0].clone()).collect();
        let a_mat = Matrix::from_cols(&cols);
        let sol = a_mat
            .solve_affine(f, &rec.lattice[t][0])?
            .ok_or_else(|| Error::Internal("coincidence result outside the earlier span".into()))?;
        if !sol.kernel.is_empty() {
            return Err(Error::Internal("free non-coincident trajectory vectors are dependent".into()));
        }
        let a = sol.particular;
        // f = X^t - Σ a_i X^i
        let mut coeffs: Vec<Scalar> = a.iter().map(|&x| f.neg(x)).collect();
        coeffs.push(1);
        let fpoly = Poly::new(coeffs);
        let mut xl = vec![0 as Scalar; l + 1];
        xl[0] = f.neg(1);
        xl[l] = 1;
        divides = Some(fpoly.divides(f, &Poly::new(xl)));
        let at = |s: usize| &rec.lattice[s % l][0];
        let mut ok = true;
        for s in 0..l {
            let mut acc = vec![0; rec.starts[0].len()];
            for (i, &ai) in a.iter().enumerate() {
                crate::linalg::axpy(f, &mut acc, ai, at(i + s));
            }
            if &acc != at(t + s) {
                ok = false;
            }
        }
        recurrence = Some(ok);
        coefficients = Some(a);
    }
    Ok(Verdict { steps, period, periodic, coefficients, divides, recurrence })
}

// ---- probability experiments ----

/// The coincidence bound q^d / (q^{n−s}/q0 − q^s − q^{n/2}) (linear kind:
/// q^d / (q^n − q^s)); infinite when the denominator is not positive.
pub fn coincidence_bound(space: &FormedSpace, d: usize, s: usize) -> f64 {
    let q = space.field().q() as f64;
    let n = space.n() as f64;
    let num = q.powi(d as i32);
    let den = if space.kind() == FormKind::Linear {
        q.powf(n) - q.powi(s as i32)
    } else {
        q.powf(n - s as f64) / space.q0() as f64 - q.powi(s as i32) - q.powf(n / 2.0)
    };
    if den <= 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// (C q^{ℓr} / (q^{n−ℓr−1} − q^{ℓr} − q^{n/2}))^r with C = 1 + (1 − q^{−r})^{−1}.
pub fn invariant_subspace_bound(q: u32, n: usize, l: usize, r: usize) -> f64 {
    let q = q as f64;
    let lr = (l * r) as f64;
    let c = 1.0 + 1.0 / (1.0 - q.powi(-(r as i32)));
    let den = q.powf(n as f64 - lr - 1.0) - q.powf(lr) - q.powf(n as f64 / 2.0);
    if den <= 0.0 {
        return f64::INFINITY;
    }
    (c * q.powf(lr) / den).powi(r as i32)
}

fn gf2_eligible(space: &FormedSpace) -> bool {
    space.kind() == FormKind::Linear && space.field().q() == 2 && space.n() <= 64
}

/// Mean trajectory weight over `trials` lazy runs: the closure probability
/// (raw indicator under `Policy::uniform`, conditional-probability weights
/// under `Policy::tilted`). Split into fixed tasks; deterministic in `seed`.
pub fn closure_estimate(
    space: &FormedSpace,
    w: &Word,
    starts: &[Vec<Scalar>],
    trials: u64,
    seed: u64,
    policy: Policy,
) -> Result<Estimate> {
    let chunks = chunk_sizes(trials, crate::par::default_tasks(trials));
    let results: Vec<Result<Estimate>> = map_tasks(chunks.len(), |task| {
        let mut rng = seed_stream(seed, task as u64);
        let mut est = Estimate::zero();
        if gf2_eligible(space) {
            let packed: Vec<u64> = starts.iter().map(|v| Gf2Engine::pack(v)).collect();
            let mut eng = Gf2Engine::new(space.n(), w.k());
            for _ in 0..chunks[task] {
                eng.run(w, &packed, &[], policy, &mut rng);
                est.push(eng.weight);
            }
        } else {
            for _ in 0..chunks[task] {
                let rec = run_joint_trajectory(space, w, starts, &[], Mode::Lazy { rng: &mut rng, policy })?;
                est.push(rec.weight);
            }
        }
        Ok(est)
    });
    results.into_iter().try_fold(Estimate::zero(), |acc, e| Ok(acc.merge(&e?)))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubspaceReport {
    pub estimate: Estimate,
    pub frequency: f64,
    pub wilson: (f64, f64),
    pub bound: f64,
}

/// Monte Carlo estimate of P(w̄ U = U) via lazy joint trajectories of a basis
/// of U with R = U.
pub fn estimate_invariant_subspace_prob(
    desc: &GroupDesc,
    w: &Word,
    u_basis: &[Vec<Scalar>],
    trials: u64,
    seed: u64,
) -> Result<SubspaceReport> {
    if w.reduce().is_empty() {
        return Err(Error::Precondition("a nontrivial word is required".into()));
    }
    let w = w.reduce();
    let space = desc.space();
    let f = space.field();
    let r = u_basis.len();
    if crate::linalg::span_rank(f, u_basis) < r {
        return Err(Error::Precondition("U basis must be independent".into()));
    }
    let chunks = chunk_sizes(trials, crate::par::default_tasks(trials));
    let results: Vec<Result<u64>> = map_tasks(chunks.len(), |task| {
        let mut rng = seed_stream(seed, task as u64);
        let mut hits = 0;
        if gf2_eligible(space) {
            let packed: Vec<u64> = u_basis.iter().map(|v| Gf2Engine::pack(v)).collect();
            let mut span = BitEchelon::default();
            for &v in &packed {
                span.insert(v, 0);
            }
            let mut eng = Gf2Engine::new(space.n(), w.k());
            let l = w.len();
            for _ in 0..chunks[task] {
                eng.run(&w, &packed, &packed, Policy::uniform(), &mut rng);
                if (0..r).all(|i| span.contains(eng.lattice[l * r + i])) {
                    hits += 1;
                }
            }
        } else {
            for _ in 0..chunks[task] {
                let rec = run_joint_trajectory(space, &w, u_basis, u_basis, Mode::Lazy { rng: &mut rng, policy: Policy::uniform() })?;
                if rec.ends_in_r.iter().all(|&x| x) {
                    hits += 1;
                }
            }
        }
        Ok(hits)
    });
    let hits: u64 = results.into_iter().sum::<Result<u64>>()?;
    let estimate = Estimate::from_counts(hits, trials);
    Ok(SubspaceReport {
        frequency: estimate.mean(),
        wilson: estimate.wilson(3.0),
        bound: invariant_subspace_bound(f.q(), space.n(), w.len(), r),
        estimate,
    })
}

/// Frequencies of supp(w̄) ≤ (1 − δ)n for each δ, all from one sample of
/// uniform generator tuples.
pub fn estimate_small_support_prob(
    desc: &GroupDesc,
    w: &Word,
    deltas: &[f64],
    trials: u64,
    seed: u64,
) -> Result<Vec<(f64, Estimate)>> {
    if w.reduce().is_empty() {
        return Err(Error::Precondition("a nontrivial word is required".into()));
    }
    let f = desc.field();
    let n = desc.n();
    let chunks = chunk_sizes(trials, crate::par::default_tasks(trials));
    let results: Vec<Result<Vec<u64>>> = map_tasks(chunks.len(), |task| {
        let mut rng = seed_stream(seed, task as u64);
        let mut hits = vec![0u64; deltas.len()];
        for _ in 0..chunks[task] {
            let gens: Vec<Matrix> = (0..w.k()).map(|_| desc.sample_uniform(&mut rng)).collect();
            let g = w.evaluate(f, &gens)?;
            let s = support_of(f, &g)? as f64;
            for (h, &d) in hits.iter_mut().zip(deltas) {
                if s <= (1.0 - d) * n as f64 + 1e-9 {
                    *h += 1;
                }
            }
        }
        Ok(hits)
    });
    let mut total = vec![0u64; deltas.len()];
    for r in results {
        for (t, h) in total.iter_mut().zip(r?) {
            *t += h;
        }
    }
    Ok(deltas.iter().zip(total).map(|(&d, h)| (d, Estimate::from_counts(h, trials))).collect())
}

/// The q-binomial coefficient (q^x − 1)⋯(q^x − q^{r−1}) / (q^r − 1)⋯(q^r − q^{r−1})
/// for any integer x (negative x allowed, giving a rational value).
pub fn q_binomial(x: i64, r: u32, q: u64) -> BigRational {
    let qb = BigRational::from_integer(BigInt::from(q));
    let pow = |e: i64| -> BigRational {
        if e >= 0 {
            num_traits::pow(qb.clone(), e as usize)
        } else {
            num_traits::pow(qb.clone(), (-e) as usize).recip()
        }
    };
    let mut num = BigRational::one();
    let mut den = BigRational::one();
    for i in 0..r as i64 {
        num *= pow(x) - pow(i);
        den *= pow(r as i64) - pow(i);
    }
    num / den
}

/// Number of r-dimensional subspaces of F_q^x.
pub fn q_binomial_count(x: u32, r: u32, q: u64) -> BigUint {
    if r > x {
        return BigUint::zero();
    }
    q_binomial(x as i64, r, q).to_integer().to_biguint().expect("nonnegative for x ≥ r")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf::make_field;
    use crate::linalg::{unit_vec, vec_from_index};
    use crate::par::seed_stream;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn space(kind: FormKind, n: usize, p: u32, e: u32) -> FormedSpace {
        FormedSpace::standard(kind, n, &make_field(p, e).unwrap()).unwrap()
    }

    #[test]
    fn identity_element_gives_immediate_coincidence() {
        let s = space(FormKind::Linear, 3, 3, 1);
        let w = Word::parse(1, "x1").unwrap();
        let id = [Matrix::identity(3)];
        let v = vec![1, 2, 0];
        let rec = run_joint_trajectory::<ChaCha8Rng>(
            &s,
            &w,
            std::slice::from_ref(&v),
            std::slice::from_ref(&v),
            Mode::Elements { gens: &id, invs: &id },
        )
        .unwrap();
        assert_eq!(rec.queries.len(), 1);
        assert!(rec.queries[0].free && rec.queries[0].coincidence);
        assert_eq!(rec.coincidences, vec![(1, 0)]);
        assert!(rec.closed[0]);
    }

    #[test]
    fn forced_queries_reuse_known_values() {
        let s = space(FormKind::Linear, 4, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = Word::parse(1, "x1^-1 x1").unwrap();
        // not reduced: rejected
        assert!(run_joint_trajectory(&s, &w, &[unit_vec(4, 0)], &[], Mode::Lazy { rng: &mut rng, policy: Policy::uniform() }).is_err());
        let w = Word::parse(2, "x1 x2 x1^-1").unwrap();
        let rec = run_joint_trajectory(&s, &w, &[unit_vec(4, 0), unit_vec(4, 1)], &[], Mode::Lazy { rng: &mut rng, policy: Policy::uniform() }).unwrap();
        assert!(rec.queries.iter().take(2).all(|q| q.free));
    }

    /// Lazy answers follow exactly the law of explicit uniform elements.
    #[test]
    fn lazy_matches_materialized_in_distribution() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        use std::collections::HashMap;
        let desc = GroupDesc::parse("GL(3,2)").unwrap();
        let s = desc.space().clone();
        let f = desc.field();
        let w = Word::parse(2, "x1 x2 x1").unwrap();
        let starts = vec![unit_vec(3, 0)];
        let trials = 40_000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut lazy: HashMap<(u64, bool), u64> = HashMap::new();
        let mut mat: HashMap<(u64, bool), u64> = HashMap::new();
        for _ in 0..trials {
            let rec = run_joint_trajectory(&s, &w, &starts, &[], Mode::Lazy { rng: &mut rng, policy: Policy::uniform() }).unwrap();
            *lazy.entry((rec.pattern(), rec.all_closed())).or_default() += 1;
            let gens: Vec<Matrix> = (0..2).map(|_| desc.sample_uniform(&mut rng)).collect();
            let invs: Vec<Matrix> = gens.iter().map(|g| g.inverse(f).unwrap()).collect();
            let rec = run_joint_trajectory::<ChaCha8Rng>(&s, &w, &starts, &[], Mode::Elements { gens: &gens, invs: &invs }).unwrap();
            *mat.entry((rec.pattern(), rec.all_closed())).or_default() += 1;
        }
        let keys: Vec<_> = lazy.keys().chain(mat.keys()).copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        let mut chi = 0.0;
        for k in &keys {
            let a = *lazy.get(k).unwrap_or(&0) as f64;
            let b = *mat.get(k).unwrap_or(&0) as f64;
            if a + b > 0.0 {
                chi += (a - b).powi(2) / (a + b);
            }
        }
        let dof = (keys.len() - 1).max(1) as f64;
        let p = 1.0 - ChiSquared::new(dof).unwrap().cdf(chi);
        assert!(p > 1e-3, "p = {p}, keys {keys:?}");
    }

    #[test]
    fn gf2_engine_matches_generic_engine_in_distribution() {
        let s = space(FormKind::Linear, 4, 2, 1);
        let w = Word::parse(2, "x1 x2^-1 x1 x2").unwrap();
        let starts = vec![unit_vec(4, 0)];
        let trials = 60_000u64;
        let mut rng = seed_stream(4, 0);
        let mut eng = Gf2Engine::new(4, 2);
        let packed = [Gf2Engine::pack(&starts[0])];
        let (mut a, mut b) = (0u64, 0u64);
        let (mut ca, mut cb) = (0u64, 0u64);
        for _ in 0..trials {
            eng.run(&w, &packed, &[], Policy::uniform(), &mut rng);
            a += eng.weight as u64;
            ca += eng.coincidences.len() as u64;
            let rec = run_joint_trajectory(&s, &w, &starts, &[], Mode::Lazy { rng: &mut rng, policy: Policy::uniform() }).unwrap();
            b += rec.weight as u64;
            cb += rec.coincidences.len() as u64;
        }
        let (pa, pb) = (a as f64 / trials as f64, b as f64 / trials as f64);
        let sigma = (pa * (1.0 - pa) / trials as f64).sqrt() * 2f64.sqrt();
        assert!((pa - pb).abs() < 5.0 * sigma, "{pa} vs {pb}");
        let (ma, mb) = (ca as f64 / trials as f64, cb as f64 / trials as f64);
        assert!((ma - mb).abs() < 0.02, "{ma} vs {mb}");
    }

    #[test]
    fn tilted_weights_estimate_closure_probability() {
        // GL_3(3): closure probability of x1 x2 on a nonzero vector is 1/26 exactly
        let s = space(FormKind::Linear, 3, 3, 1);
        let w = Word::parse(2, "x1 x2").unwrap();
        let starts = vec![unit_vec(3, 0)];
        let raw = closure_estimate(&s, &w, &starts, 200_000, 1, Policy::uniform()).unwrap();
        let rb = closure_estimate(&s, &w, &starts, 20_000, 2, Policy::tilted()).unwrap();
        assert!((raw.mean() * 26.0 - 1.0).abs() < 0.1, "raw {}", raw.mean() * 26.0);
        assert!((rb.mean() * 26.0 - 1.0).abs() < 0.01, "rb {}", rb.mean() * 26.0);
        // symplectic with a form: Sp_4(3), r = 1
        let sp = space(FormKind::Symplectic, 4, 3, 1);
        let rb = closure_estimate(&sp, &w, &[unit_vec(4, 0)], 20_000, 3, Policy::tilted()).unwrap();
        assert!((rb.mean() * 80.0 - 1.0).abs() < 0.02, "sp rb {}", rb.mean() * 80.0);
    }

    #[test]
    fn one_coincidence_structure_on_tilted_runs() {
        let s = space(FormKind::Linear, 6, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = s.field().clone();
        let mut single = 0;
        for word in ["x1 x2", "x1 x2 x1^-1 x2", "x1 x1 x2", "x1 x2 x1 x2"] {
            let w = Word::parse(2, word).unwrap();
            let proper = w.is_proper_power().0;
            for _ in 0..3000 {
                let rec = run_joint_trajectory(&s, &w, &[unit_vec(6, 0)], &[], Mode::Lazy { rng: &mut rng, policy: Policy::adversarial(0.4) }).unwrap();
                if !rec.all_closed() || rec.coincidences.len() != 1 {
                    continue;
                }
                single += 1;
                let v = classify_one_coincidence(&f, &rec).unwrap();
                assert!(!v.violation(), "{word}: {v:?}");
                assert_eq!(v.divides, Some(true));
                if !proper {
                    assert_eq!(v.steps, vec![w.len()]);
                }
            }
        }
        assert!(single > 100);
    }

    #[test]
    fn proper_power_admits_early_single_coincidence() {
        // w = (x1 x2)^2 in GL_4(3): build x1, x2 so that x2 x1 has order 2 on v
        let s = space(FormKind::Linear, 4, 3, 1);
        let f = s.field().clone();
        let w = Word::parse(2, "x1 x2 x1 x2").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut found = false;
        for _ in 0..20_000 {
            let rec = run_joint_trajectory(&s, &w, &[unit_vec(4, 0)], &[], Mode::Lazy { rng: &mut rng, policy: Policy::adversarial(0.5) }).unwrap();
            if rec.all_closed() && rec.coincidences.len() == 1 && rec.coincidences[0].0 == 2 {
                let v = classify_one_coincidence(&f, &rec).unwrap();
                assert_eq!(v.period, 2);
                assert!(v.periodic && !v.violation());
                found = true;
                break;
            }
        }
        assert!(found);
    }

    #[test]
    fn coincidence_frequency_respects_the_bound() {
        let s = space(FormKind::Linear, 16, 2, 1);
        let w = Word::parse(2, "x1 x2 x1").unwrap();
        let mut rng = seed_stream(5, 0);
        let mut eng = Gf2Engine::new(16, 2);
        let trials = 200_000u64;
        let mut hits = [0u64; 4];
        let mut frees = [0u64; 4];
        for _ in 0..trials {
            eng.run(&w, &[1], &[], Policy::uniform(), &mut rng);
            for t in 1..=3 {
                if eng.free_flags[t - 1] {
                    frees[t] += 1;
                    if eng.coincidences.iter().any(|c| c.0 == t) {
                        hits[t] += 1;
                    }
                }
            }
        }
        for t in 1..=3 {
            // d = t prior vectors (including the current input), s < t
            let bound = coincidence_bound(&s, t, t - 1);
            let p = hits[t] as f64 / frees[t] as f64;
            let sigma = (bound * (1.0 - bound) / frees[t] as f64).sqrt();
            assert!(p <= bound + 3.0 * sigma, "t={t}: {p} vs {bound}");
        }
    }

    #[test]
    fn lemma_single_coincidence_when_ending_in_r() {
        let s = space(FormKind::Symplectic, 4, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = Word::parse(2, "x1 x2^-1 x1").unwrap();
        let u = vec![unit_vec(4, 0), unit_vec(4, 2)];
        let mut ended = 0;
        for _ in 0..5000 {
            let rec = run_joint_trajectory(&s, &w, &u, &u, Mode::Lazy { rng: &mut rng, policy: Policy::uniform() }).unwrap();
            for i in 0..2 {
                if rec.ends_in_r[i] {
                    ended += 1;
                    assert!(!rec.coincidences_in(i).is_empty());
                }
            }
        }
        assert!(ended > 0);
    }

    #[test]
    fn q_binomial_examples() {
        assert_eq!(q_binomial_count(2, 1, 2), BigUint::from(3u32));
        assert_eq!(q_binomial_count(7, 0, 5), BigUint::one());
        assert_eq!(q_binomial_count(4, 2, 3), BigUint::from(130u32));
        // brute force: 2-subspaces of F_3^4 by counting ordered bases
        let f = make_field(3, 1).unwrap();
        let mut bases = 0u64;
        for a in 1..81u64 {
            for b in 1..81u64 {
                let va = vec_from_index(3, 4, a);
                let vb = vec_from_index(3, 4, b);
                if crate::linalg::span_rank(&f, &[va, vb]) == 2 {
                    bases += 1;
                }
            }
        }
        assert_eq!(bases / ((9 - 1) * (9 - 3)), 130);
        assert_eq!(q_binomial(-1, 1, 2), BigRational::new(BigInt::from(-1), BigInt::from(2)));
    }

    #[test]
    fn invariant_line_probability_is_below_bound() {
        let desc = GroupDesc::parse("GL(12,2)").unwrap();
        let w = Word::parse(2, "x1 x2 x1").unwrap();
        let rep = estimate_invariant_subspace_prob(&desc, &w, &[unit_vec(12, 0)], 100_000, 3).unwrap();
        assert!(rep.frequency <= rep.bound, "{rep:?}");
        // a line is invariant iff its nonzero vector returns: 1/4095 here
        let exact = 1.0 / 4095.0;
        assert!(rep.wilson.0 <= exact && exact <= rep.wilson.1, "{rep:?}");
    }

    #[test]
    fn small_support_is_rare_and_monotone() {
        let desc = GroupDesc::parse("GL(8,2)").unwrap();
        let w = Word::parse(1, "x1").unwrap();
        let res = estimate_small_support_prob(&desc, &w, &[0.5, 0.9], 3000, 1).unwrap();
        assert!(res[0].1.mean() < 1e-2);
        assert!(res[1].1.mean() <= res[0].1.mean());
        assert!(estimate_small_support_prob(&desc, &Word::empty(1), &[0.5], 10, 1).is_err());
    }

    #[test]
    fn records_serialize_as_jsonl() {
        let s = space(FormKind::Linear, 3, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = Word::parse(2, "x1 x2").unwrap();
        let rec = run_joint_trajectory(&s, &w, &[unit_vec(3, 0)], &[], Mode::Lazy { rng: &mut rng, policy: Policy::uniform() }).unwrap();
        let line = rec.to_jsonl();
        assert!(!line.contains('\n'));
        let back: TrajectoryRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, rec);
    }
}
