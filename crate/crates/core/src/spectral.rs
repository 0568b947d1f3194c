//! Orbits as Schreier graphs: enumeration, matrix-free adjacency, spectral
//! radius by power iteration, return probabilities, trace moments and exact
//! diameters at small scale.

use std::collections::{HashMap, VecDeque};
use std::hash::Hash;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{FormKind, FormedSpace};
use crate::groups::GroupDesc;
use crate::linalg::{unit_vec, Echelon, Matrix};
use crate::par::{chunk_sizes, default_tasks, map_tasks, seed_stream};
use crate::stats::Estimate;
use crate::trajectories::{admissible_count, closure_estimate, FreeConstraints, Policy};
use crate::words::{letter_from_key, Word};
use crate::gf::Scalar;

/// Largest orbit `orbit_bfs` will build.
pub const ORBIT_LIMIT: usize = 10_000_000;
/// Largest orbit on which an all-sources eccentricity scan is attempted.
pub const ALL_PAIRS_LIMIT: usize = 20_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    /// Diagonal action on r-tuples of vectors.
    Vectors { r: usize },
    /// Conjugation on a set of matrices.
    Conjugation,
    /// Abstract permutations supplied by the caller.
    Permutations,
}

/// Base point of an orbit.
#[derive(Clone, Debug)]
pub enum OrbitBase {
    Vectors(Vec<Vec<Scalar>>),
    Class(Matrix),
}

/// A finite orbit with one index permutation per generator and its inverse.
#[derive(Clone, Debug)]
pub struct OrbitIndex {
    pub action: Action,
    /// Canonical point encodings, in discovery order (index 0 is the base).
    points: Vec<u128>,
    index: HashMap<u128, u32>,
    fwd: Vec<Vec<u32>>,
    bwd: Vec<Vec<u32>>,
    /// Orbit size predicted by Witt's lemma for the full isometry group.
    pub predicted: Option<u128>,
    q: u32,
    n: usize,
}

fn pack_digits(q: u32, digits: impl Iterator<Item = Scalar>) -> Option<u128> {
    let mut acc: u128 = 0;
    let mut scale: u128 = 1;
    for d in digits {
        acc = acc.checked_add(scale.checked_mul(d as u128)?)?;
        scale = scale.checked_mul(q as u128).unwrap_or(0);
    }
    Some(acc)
}

fn check_permutation(p: &[u32]) -> bool {
    let mut seen = vec![false; p.len()];
    p.iter().all(|&i| (i as usize) < p.len() && !std::mem::replace(&mut seen[i as usize], true))
}

fn invert_permutation(p: &[u32]) -> Vec<u32> {
    let mut inv = vec![0; p.len()];
    for (i, &j) in p.iter().enumerate() {
        inv[j as usize] = i as u32;
    }
    inv
}

impl OrbitIndex {
    /// Build from explicit permutations of `0..m` (one per generator).
    pub fn from_permutations(perms: Vec<Vec<u32>>) -> Result<OrbitIndex> {
        let m = perms.first().map_or(0, Vec::len);
        if perms.is_empty() || m == 0 {
            return Err(Error::Precondition("need at least one generator on a nonempty set".into()));
        }
        if perms.iter().any(|p| p.len() != m || !check_permutation(p)) {
            return Err(Error::Precondition("generator images are not permutations".into()));
        }
        let bwd = perms.iter().map(|p| invert_permutation(p)).collect();
        let points: Vec<u128> = (0..m as u128).collect();
        let index = points.iter().map(|&p| (p, p as u32)).collect();
        Ok(OrbitIndex { action: Action::Permutations, points, index, fwd: perms, bwd, predicted: None, q: 0, n: 0 })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of generators k (the graph is 2k-regular).
    pub fn k(&self) -> usize {
        self.fwd.len()
    }

    /// Image permutation of a letter (`±(i+1)`).
    pub fn perm(&self, letter: i32) -> &[u32] {
        let j = (letter.unsigned_abs() - 1) as usize;
        if letter > 0 {
            &self.fwd[j]
        } else {
            &self.bwd[j]
        }
    }

    pub fn index_of_key(&self, key: u128) -> Option<usize> {
        self.index.get(&key).map(|&i| i as usize)
    }

    pub fn key(&self, i: usize) -> u128 {
        self.points[i]
    }

    /// Decoded point `i` for vector actions.
    pub fn vectors(&self, i: usize) -> Option<Vec<Vec<Scalar>>> {
        let Action::Vectors { r } = self.action else { return None };
        let mut key = self.points[i];
        Some(
            (0..r)
                .map(|_| {
                    (0..self.n)
                        .map(|_| {
                            let d = (key % self.q as u128) as Scalar;
                            key /= self.q as u128;
                            d
                        })
                        .collect()
                })
                .collect(),
        )
    }

    /// Decoded point `i` for conjugation actions.
    pub fn matrix(&self, i: usize) -> Option<Matrix> {
        (self.action == Action::Conjugation).then(|| Matrix::unpack_u128(self.points[i], self.q, self.n, self.n))
    }

    /// Is the orbit closed under every generator and inverse (exact check)?
    pub fn is_consistent(&self) -> bool {
        let m = self.len();
        self.fwd.iter().zip(&self.bwd).all(|(f, b)| {
            f.len() == m && check_permutation(f) && (0..m).all(|i| b[f[i] as usize] as usize == i)
        })
    }

    /// `out = A x` with `A = (1/2k) Σ (P_i + P_i^{-1})`.
    pub fn apply_adjacency(&self, x: &[f64], out: &mut [f64]) {
        let scale = 1.0 / (2 * self.k()) as f64;
        let body = |(u, o): (usize, &mut f64)| {
            let mut s = 0.0;
            for (f, b) in self.fwd.iter().zip(&self.bwd) {
                s += x[f[u] as usize] + x[b[u] as usize];
            }
            *o = s * scale;
        };
        #[cfg(feature = "parallel")]
        if out.len() >= 1 << 14 {
            use rayon::prelude::*;
            out.par_iter_mut().enumerate().for_each(body);
            return;
        }
        out.iter_mut().enumerate().for_each(body);
    }

    /// Number of fixed points of the product of `letters` (applied left to right).
    pub fn fixed_points(&self, letters: &[i32]) -> u64 {
        let perms: Vec<&[u32]> = letters.iter().map(|&l| self.perm(l)).collect();
        (0..self.len())
            .filter(|&u| perms.iter().fold(u as u32, |v, p| p[v as usize]) as usize == u)
            .count() as u64
    }

    /// Binary dump: magic `CLNORB1`, then little-endian u32 `N`, `k`, and the
    /// k forward permutations.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(b"CLNORB1")?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        w.write_all(&(self.k() as u32).to_le_bytes())?;
        for p in &self.fwd {
            for &i in p {
                w.write_all(&i.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Inverse of `write_binary`.
    pub fn read_binary(bytes: &[u8]) -> Result<OrbitIndex> {
        let bad = || Error::Parse("malformed orbit dump".into());
        let rest = bytes.strip_prefix(b"CLNORB1").ok_or_else(bad)?;
        let words: Vec<u32> = rest.chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        if rest.len() % 4 != 0 || words.len() < 2 {
            return Err(bad());
        }
        let (m, k) = (words[0] as usize, words[1] as usize);
        if words.len() != 2 + m * k {
            return Err(bad());
        }
        OrbitIndex::from_permutations(words[2..].chunks(m.max(1)).map(<[u32]>::to_vec).collect())
    }
}

/// Exact orbit size of an independent tuple under the full isometry group:
/// the number of independent tuples with the same form values, counted one
/// vector at a time (Witt's lemma makes each count independent of the prefix).
pub fn tuple_orbit_size(space: &FormedSpace, starts: &[Vec<Scalar>]) -> Result<u128> {
    let f = space.field();
    let mut prefix = Echelon::new();
    let mut total: u128 = 1;
    for (i, v) in starts.iter().enumerate() {
        if v.len() != space.n() {
            return Err(Error::Shape(format!("start vector of length {} in dimension {}", v.len(), space.n())));
        }
        if prefix.contains(f, v) {
            return Err(Error::Precondition("start vectors must be linearly independent".into()));
        }
        // the prefix itself serves as the image tuple: same Gram data
        let conds = starts[..i].iter().map(|u| (u.clone(), space.form(v, u))).collect();
        let c = FreeConstraints { conds, target: space.quad_value(v), excluded: &prefix };
        total = total
            .checked_mul(admissible_count(space, &c, None)?)
            .ok_or_else(|| Error::Budget("orbit size overflows u128".into()))?;
        prefix.insert(f, v, &[]);
    }
    Ok(total)
}

/// Standard independent r-tuple: first basis vectors (linear) or the first
/// vector of each of the first r hyperbolic pairs.
pub fn standard_starts(space: &FormedSpace, r: usize) -> Result<Vec<Vec<Scalar>>> {
    let n = space.n();
    if space.kind() == FormKind::Linear {
        if r > n {
            return Err(Error::Precondition(format!("r = {r} exceeds n = {n}")));
        }
        return Ok((0..r).map(|i| unit_vec(n, i)).collect());
    }
    if r > space.standard_pairs() {
        return Err(Error::Precondition(format!("r = {r} exceeds the Witt index {}", space.standard_pairs())));
    }
    Ok((0..r).map(|i| unit_vec(n, 2 * i)).collect())
}

/// Enumerate the orbit of `base` under `generators` (and inverses).
pub fn orbit_bfs(desc: &GroupDesc, generators: &[Matrix], base: &OrbitBase) -> Result<OrbitIndex> {
    let f = desc.field();
    let (n, q) = (desc.n(), f.q());
    if generators.is_empty() {
        return Err(Error::Precondition("need at least one generator".into()));
    }
    if generators.iter().any(|g| g.rows() != n || g.cols() != n) {
        return Err(Error::Shape("generator of wrong size".into()));
    }
    let overflow = || Error::Budget("orbit points do not fit a 128-bit key".into());
    match base {
        OrbitBase::Vectors(starts) => {
            let r = starts.len();
            if r == 0 || starts.iter().any(|v| v.len() != n) {
                return Err(Error::Shape("base tuple must be nonempty with vectors of length n".into()));
            }
            let encode = |t: &[Vec<Scalar>]| pack_digits(q, t.iter().flatten().copied());
            if (q as u128).checked_pow((n * r) as u32).is_none() {
                return Err(overflow());
            }
            let predicted = if span_is_independent(f, starts) { Some(tuple_orbit_size(desc.space(), starts)?) } else { None };
            let act = |j: usize, t: &Vec<Vec<Scalar>>| t.iter().map(|v| generators[j].mul_vec(f, v)).collect::<Vec<_>>();
            let mut orbit = bfs_orbit(generators, f, starts.clone(), act, |t| encode(t).ok_or_else(overflow))?;
            orbit.action = Action::Vectors { r };
            orbit.predicted = predicted;
            orbit.q = q;
            orbit.n = n;
            if let Some(p) = predicted {
                if orbit.len() as u128 > p {
                    return Err(Error::Internal(format!("orbit of size {} exceeds the Witt count {p}", orbit.len())));
                }
            }
            Ok(orbit)
        }
        OrbitBase::Class(g0) => {
            if g0.rows() != n || g0.cols() != n {
                return Err(Error::Shape("class seed of wrong size".into()));
            }
            let encode = |m: &Matrix| m.pack_u128(q).ok_or_else(overflow);
            encode(g0)?;
            let invs = generators.iter().map(|x| x.inverse(f)).collect::<Result<Vec<_>>>()?;
            let act = |j: usize, m: &Matrix| generators[j].mul(f, m).mul(f, &invs[j]);
            let mut orbit = bfs_orbit(generators, f, g0.clone(), act, encode)?;
            orbit.action = Action::Conjugation;
            orbit.q = q;
            orbit.n = n;
            Ok(orbit)
        }
    }
}

fn span_is_independent(f: &crate::gf::FieldCtx, vs: &[Vec<Scalar>]) -> bool {
    crate::linalg::span_rank(f, vs) == vs.len()
}

fn bfs_orbit<P: Clone>(
    generators: &[Matrix],
    f: &crate::gf::FieldCtx,
    base: P,
    act: impl Fn(usize, &P) -> P,
    encode: impl Fn(&P) -> Result<u128>,
) -> Result<OrbitIndex> {
    for g in generators {
        if g.det(f) == 0 {
            return Err(Error::Singular("orbit generator".into()));
        }
    }
    let k = generators.len();
    let mut points = vec![encode(&base)?];
    let mut index = HashMap::from([(points[0], 0u32)]);
    let mut fwd: Vec<Vec<u32>> = vec![Vec::new(); k];
    let mut queue = VecDeque::from([base]);
    // points are processed in discovery order, so fwd[j] grows in index order
    while let Some(p) = queue.pop_front() {
        for j in 0..k {
            let img = act(j, &p);
            let key = encode(&img)?;
            let next = index.len() as u32;
            let id = *index.entry(key).or_insert_with(|| {
                points.push(key);
                queue.push_back(img);
                next
            });
            fwd[j].push(id);
            if points.len() > ORBIT_LIMIT {
                return Err(Error::Budget(format!("orbit exceeds {ORBIT_LIMIT} points")));
            }
        }
    }
    if fwd.iter().any(|p| !check_permutation(p)) {
        return Err(Error::Internal("generator images are not permutations".into()));
    }
    let bwd = fwd.iter().map(|p| invert_permutation(p)).collect();
    Ok(OrbitIndex { action: Action::Permutations, points, index, fwd, bwd, predicted: None, q: 0, n: 0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectralMethod {
    PowerIteration,
    TraceMoment,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralReport {
    pub n: usize,
    pub k: usize,
    /// `max(λ_2, −λ_N)`.
    pub lambda: f64,
    pub lambda_2: f64,
    pub lambda_min: f64,
    pub method: SpectralMethod,
    pub iterations: usize,
    pub converged: bool,
    /// Largest final residual `‖Bx − μx‖`; bounds the distance to an eigenvalue.
    pub residual: f64,
    pub disconnected: bool,
    pub bipartite: bool,
}

const PATHOLOGY_EPS: f64 = 1e-9;

/// Top eigenvalue on the complement of constants of `(I + sign·A)/2`.
fn top_deflated(orbit: &OrbitIndex, sign: f64, tol: f64, max_iters: usize, seed: u64) -> (f64, usize, bool, f64) {
    let m = orbit.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let deflate = |v: &mut [f64]| {
        let mean = v.iter().sum::<f64>() / m as f64;
        v.iter_mut().for_each(|a| *a -= mean);
    };
    let normalize = |v: &mut [f64]| {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|a| *a /= norm);
        }
        norm
    };
    deflate(&mut x);
    normalize(&mut x);
    let mut y = vec![0.0; m];
    let (mut mu, mut prev, mut residual) = (0.0, f64::NAN, f64::INFINITY);
    for it in 1..=max_iters {
        orbit.apply_adjacency(&x, &mut y);
        for (a, &b) in y.iter_mut().zip(&x) {
            *a = 0.5 * (b + sign * *a);
        }
        deflate(&mut y);
        mu = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
        residual = x.iter().zip(&y).map(|(a, b)| (b - mu * a).powi(2)).sum::<f64>().sqrt();
        if normalize(&mut y) == 0.0 {
            return (0.0, it, true, 0.0);
        }
        std::mem::swap(&mut x, &mut y);
        if residual < tol && (mu - prev).abs() < tol {
            return (mu, it, true, residual);
        }
        prev = mu;
    }
    (mu, max_iters, false, residual)
}

/// `ρ = max(λ_2, −λ_N)` of the normalized Schreier adjacency operator by power
/// iteration with mean deflation, run on `(I ± A)/2` so both ends of the
/// spectrum come out as top eigenvalues of positive semidefinite operators.
/// Stops when successive Rayleigh quotients and the residual are below `tol`.
pub fn estimate_lambda_power(orbit: &OrbitIndex, tol: f64, max_iters: usize) -> SpectralReport {
    let m = orbit.len();
    if m <= 1 {
        return SpectralReport {
            n: m,
            k: orbit.k(),
            lambda: 0.0,
            lambda_2: 0.0,
            lambda_min: 0.0,
            method: SpectralMethod::PowerIteration,
            iterations: 0,
            converged: true,
            residual: 0.0,
            disconnected: false,
            bipartite: false,
        };
    }
    let (mu_hi, it_hi, ok_hi, res_hi) = top_deflated(orbit, 1.0, tol, max_iters, 0x5eed_0001);
    let (mu_lo, it_lo, ok_lo, res_lo) = top_deflated(orbit, -1.0, tol, max_iters, 0x5eed_0002);
    let lambda_2 = (2.0 * mu_hi - 1.0).clamp(-1.0, 1.0);
    let lambda_min = (1.0 - 2.0 * mu_lo).clamp(-1.0, 1.0);
    SpectralReport {
        n: m,
        k: orbit.k(),
        lambda: lambda_2.max(-lambda_min).max(0.0),
        lambda_2,
        lambda_min,
        method: SpectralMethod::PowerIteration,
        iterations: it_hi + it_lo,
        converged: ok_hi && ok_lo,
        residual: 2.0 * res_hi.max(res_lo),
        disconnected: lambda_2 > 1.0 - PATHOLOGY_EPS,
        bipartite: lambda_min < -1.0 + PATHOLOGY_EPS,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceReport {
    pub len: usize,
    pub samples: u64,
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    /// `(mean − 1)^{1/ℓ}`, clamped at zero.
    pub lambda_bound: f64,
    /// The same bound at the mean plus three standard errors.
    pub lambda_bound_upper: f64,
}

/// Monte Carlo estimate of `tr A^ℓ`: the mean number of fixed points of a
/// random-walk word of `ℓ` uniform letters (not reduced).
pub fn trace_moment(orbit: &OrbitIndex, len: usize, samples: u64, seed: u64) -> Result<TraceReport> {
    if len % 2 == 1 {
        return Err(Error::Precondition("trace moments need even ℓ".into()));
    }
    let m = orbit.len();
    let bound = |t: f64| if len == 0 { 1.0 } else { (t - 1.0).max(0.0).powf(1.0 / len as f64) };
    if len == 0 {
        return Ok(TraceReport {
            len,
            samples,
            n: m,
            mean: m as f64,
            stderr: 0.0,
            lambda_bound: 1.0,
            lambda_bound_upper: 1.0,
        });
    }
    let k = orbit.k() as u32;
    let chunks = chunk_sizes(samples, default_tasks(samples));
    let parts = map_tasks(chunks.len(), |task| {
        let mut rng = seed_stream(seed, task as u64);
        let mut est = Estimate::zero();
        let mut letters = vec![0i32; len];
        for _ in 0..chunks[task] {
            for l in letters.iter_mut() {
                *l = letter_from_key(rng.gen_range(0..2 * k));
            }
            est.push(orbit.fixed_points(&letters) as f64);
        }
        est
    });
    let est = parts.iter().fold(Estimate::zero(), |a, e| a.merge(e));
    let (mean, se) = (est.mean(), est.stderr());
    Ok(TraceReport {
        len,
        samples,
        n: m,
        mean,
        stderr: se,
        lambda_bound: bound(mean),
        lambda_bound_upper: bound(mean + 3.0 * se),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReturnReport {
    pub word: String,
    pub r: usize,
    /// Orbit size of the start tuple under the full isometry group.
    pub orbit_size: u128,
    pub estimate: Estimate,
    pub frequency: f64,
    /// `N · frequency`, with a 95% interval.
    pub normalized: f64,
    pub normalized_ci: (f64, f64),
    pub reference: f64,
    /// `q^{2ℓr − n/2}`: the scale of the expected deviation from 1.
    pub window: f64,
    /// Whether `ℓ r² < n/4`.
    pub in_regime: bool,
    pub rao_blackwell: bool,
}

/// Probability that the joint trajectory of the standard r-tuple closes under
/// `w` evaluated at uniform random isometries, by lazy sampling (the full
/// isometry group of the space; the level of `desc` is not used).
/// With `rao_blackwell` each trial contributes its exact conditional closure
/// probability instead of an indicator.
pub fn estimate_return_prob(
    desc: &GroupDesc,
    w: &Word,
    r: usize,
    trials: u64,
    seed: u64,
    rao_blackwell: bool,
) -> Result<ReturnReport> {
    let w = w.reduce();
    if w.is_empty() {
        return Err(Error::Word("return probability of the trivial word".into()));
    }
    let (proper, root, e) = w.is_proper_power();
    if proper {
        return Err(Error::Precondition(format!("{w} is a proper power ({root})^{e}")));
    }
    let space = desc.space();
    let starts = standard_starts(space, r)?;
    let orbit_size = tuple_orbit_size(space, &starts)?;
    let policy = if rao_blackwell { Policy::tilted() } else { Policy::uniform() };
    let estimate = closure_estimate(space, &w, &starts, trials, seed, policy)?;
    let frequency = estimate.mean();
    let nn = orbit_size as f64;
    let ci = if rao_blackwell {
        let h = 1.96 * estimate.stderr();
        (frequency - h, frequency + h)
    } else {
        estimate.wilson(1.96)
    };
    let (l, n, q) = (w.len() as f64, space.n() as f64, desc.field().q() as f64);
    Ok(ReturnReport {
        word: w.to_string(),
        r,
        orbit_size,
        estimate,
        frequency,
        normalized: nn * frequency,
        normalized_ci: (nn * ci.0, nn * ci.1),
        reference: 1.0 / nn,
        window: q.powf(2.0 * l * r as f64 - n / 2.0),
        in_regime: l * ((r * r) as f64) < n / 4.0,
        rao_blackwell,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiameterReport {
    /// Vertices reached from the start.
    pub reached: u64,
    /// Expected vertex count, when known.
    pub expected: Option<u64>,
    /// `None` when the generators do not reach everything.
    pub diameter: Option<u32>,
}

/// Breadth-first search from `start` along `step(point, i)` for `i < steps`;
/// returns the number of reached points and the eccentricity of `start`.
pub fn bfs_eccentricity<T: Hash + Eq + Clone>(
    start: T,
    steps: usize,
    step: impl Fn(&T, usize) -> T,
    limit: usize,
) -> Result<(u64, u32)> {
    let mut dist: HashMap<T, u32> = HashMap::from([(start.clone(), 0)]);
    let mut queue = VecDeque::from([start]);
    let mut ecc = 0;
    while let Some(p) = queue.pop_front() {
        let d = dist[&p];
        ecc = ecc.max(d);
        for i in 0..steps {
            let next = step(&p, i);
            if !dist.contains_key(&next) {
                if dist.len() >= limit {
                    return Err(Error::Budget(format!("search exceeds {limit} points")));
                }
                dist.insert(next.clone(), d + 1);
                queue.push_back(next);
            }
        }
    }
    Ok((dist.len() as u64, ecc))
}

/// Exact diameter of the Cayley graph of `⟨S⟩ ≤ desc` with `S` symmetrized.
/// Vertex-transitivity makes the eccentricity of the identity the diameter.
pub fn cayley_diameter_bfs(desc: &GroupDesc, s: &[Matrix]) -> Result<DiameterReport> {
    let f = desc.field();
    let order = desc.order();
    let expected: u64 = u64::try_from(&order)
        .ok()
        .filter(|&o| o <= crate::groups::ENUMERATION_LIMIT)
        .ok_or_else(|| Error::TooLarge(order.to_string()))?;
    if s.iter().any(|g| !desc.contains(g)) {
        return Err(Error::Precondition("generator outside the group".into()));
    }
    let mut sym: Vec<Matrix> = s.to_vec();
    for g in s {
        sym.push(g.inverse(f)?);
    }
    let q = f.q();
    let n = desc.n();
    let id = desc.identity().pack_u128(q).ok_or_else(|| Error::Budget("elements do not fit a 128-bit key".into()))?;
    let (reached, ecc) = bfs_eccentricity(
        id,
        sym.len(),
        |&key, i| {
            let g = Matrix::unpack_u128(key, q, n, n);
            g.mul(f, &sym[i]).pack_u128(q).expect("same size as the identity")
        },
        expected as usize,
    )?;
    Ok(DiameterReport { reached, expected: Some(expected), diameter: (reached == expected).then_some(ecc) })
}

/// Distances from `src` on a permutation-generated Schreier graph.
fn orbit_eccentricity(orbit: &OrbitIndex, src: usize, dist: &mut [u32], queue: &mut Vec<u32>) -> u32 {
    dist.fill(u32::MAX);
    queue.clear();
    dist[src] = 0;
    queue.push(src as u32);
    let mut head = 0;
    let mut ecc = 0;
    while head < queue.len() {
        let u = queue[head] as usize;
        head += 1;
        let d = dist[u];
        ecc = d;
        for p in orbit.fwd.iter().chain(&orbit.bwd) {
            let v = p[u] as usize;
            if dist[v] == u32::MAX {
                dist[v] = d + 1;
                queue.push(v as u32);
            }
        }
    }
    ecc
}

/// Eccentricity of `src`, or `None` when some point is unreachable.
pub fn orbit_eccentricity_from(orbit: &OrbitIndex, src: usize) -> Option<u32> {
    let m = orbit.len();
    let (mut dist, mut queue) = (vec![0; m], Vec::with_capacity(m));
    let ecc = orbit_eccentricity(orbit, src, &mut dist, &mut queue);
    (queue.len() == m).then_some(ecc)
}

/// Exact diameter of a Schreier graph; orbits built by `orbit_bfs` are
/// connected, permutation-built ones are checked.
pub fn orbit_diameter(orbit: &OrbitIndex) -> Result<u32> {
    let m = orbit.len();
    if m > ALL_PAIRS_LIMIT {
        return Err(Error::Budget(format!("all-sources scan limited to {ALL_PAIRS_LIMIT} points, orbit has {m}")));
    }
    if orbit_eccentricity_from(orbit, 0).is_none() {
        return Err(Error::Precondition("Schreier graph is disconnected".into()));
    }
    let tasks = m.min(64);
    let eccs = map_tasks(tasks, |t| {
        let (mut dist, mut queue) = (vec![0; m], Vec::with_capacity(m));
        (t..m).step_by(tasks).map(|src| orbit_eccentricity(orbit, src, &mut dist, &mut queue)).max().unwrap_or(0)
    });
    Ok(eccs.into_iter().max().unwrap_or(0))
}

/// Exact diameter of the Schreier graph of conjugation by `⟨S⟩` on the orbit
/// of `g0`. The orbit is the class of `g0` whenever `S` generates `desc`.
pub fn schreier_diameter_on_class(desc: &GroupDesc, s: &[Matrix], g0: &Matrix) -> Result<(usize, u32)> {
    let orbit = orbit_bfs(desc, s, &OrbitBase::Class(g0.clone()))?;
    Ok((orbit.len(), orbit_diameter(&orbit)?))
}
