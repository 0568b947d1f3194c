//! Formed spaces: the defining form f, the quadratic form Q, quadric counting
//! and exact sampling on affine cosets, Witt extension and decomposition, and
//! the abelianization invariants (determinant, spinor norm, Dickson bit).
//!
//! Conventions:
//! * f(u, v) = uᵀ G θ(v), linear in u; θ is the identity except for unitary spaces.
//! * Orthogonal Q is stored as an upper-triangular matrix U with Q(v) = vᵀ U v,
//!   so G = U + Uᵀ in every characteristic. Unitary Q(v) = f(v, v).
//! * Standard spaces use hyperbolic pairs (e_j, f_j) at coordinates (2j, 2j+1),
//!   with f(e_j, f_j) = 1 and Q(e_j) = Q(f_j) = 0, followed by the anisotropic
//!   part: Q = x² + xy + βy² (least β making t² + t + β irreducible) for
//!   orthogonal minus, Q = x² for odd orthogonal, f = x θ(y) for odd unitary.

use crate::error::{Error, Result};
use crate::gf::{Field, FieldCtx, Scalar};
use crate::linalg::{axpy, is_zero_vec, unit_vec, vec_add, vec_scale, vec_sub, Echelon, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FormKind {
    Linear,
    Symplectic,
    OrthogonalPlus,
    OrthogonalMinus,
    OrthogonalOdd,
    Unitary,
}

impl FormKind {
    pub fn is_orthogonal(self) -> bool {
        matches!(self, FormKind::OrthogonalPlus | FormKind::OrthogonalMinus | FormKind::OrthogonalOdd)
    }
    /// Kinds whose Q is not identically zero.
    pub fn has_quadratic(self) -> bool {
        self.is_orthogonal() || self == FormKind::Unitary
    }
    pub fn prefix(self) -> &'static str {
        match self {
            FormKind::Linear => "GL",
            FormKind::Symplectic => "Sp",
            FormKind::OrthogonalPlus => "GO+",
            FormKind::OrthogonalMinus => "GO-",
            FormKind::OrthogonalOdd => "GO",
            FormKind::Unitary => "GU",
        }
    }
    pub fn all() -> [FormKind; 6] {
        [
            FormKind::Linear,
            FormKind::Symplectic,
            FormKind::OrthogonalPlus,
            FormKind::OrthogonalMinus,
            FormKind::OrthogonalOdd,
            FormKind::Unitary,
        ]
    }
}

#[derive(Clone)]
pub struct FormedSpace {
    field: Field,
    n: usize,
    kind: FormKind,
    gram: Matrix,
    quad: Matrix,
    q0: u32,
    pairs: usize,
}

impl fmt::Debug for FormedSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.descriptor())
    }
}

impl PartialEq for FormedSpace {
    fn eq(&self, o: &Self) -> bool {
        self.kind == o.kind && self.n == o.n && *self.field == *o.field
    }
}
impl Eq for FormedSpace {}

/// An affine coset `base + span(dirs)`; the directions must be independent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Affine {
    pub base: Vec<Scalar>,
    pub dirs: Vec<Vec<Scalar>>,
}

impl Affine {
    pub fn full(n: usize) -> Affine {
        Affine { base: vec![0; n], dirs: (0..n).map(|i| unit_vec(n, i)).collect() }
    }
    pub fn linear(dirs: Vec<Vec<Scalar>>, n: usize) -> Affine {
        Affine { base: vec![0; n], dirs }
    }
    pub fn dim(&self) -> usize {
        self.dirs.len()
    }
    /// The point `base + Σ y_j dirs_j`.
    pub fn point(&self, f: &FieldCtx, y: &[Scalar]) -> Vec<Scalar> {
        let mut v = self.base.clone();
        for (c, d) in y.iter().zip(&self.dirs) {
            axpy(f, &mut v, *c, d);
        }
        v
    }
}

fn least_minus_beta(f: &FieldCtx) -> Scalar {
    f.elements()
        .find(|&b| f.elements().all(|x| f.add(f.add(f.mul(x, x), x), b) != 0))
        .expect("an irreducible t^2 + t + b exists over every finite field")
}

impl FormedSpace {
    /// The standard space of the given kind (Witt normal form).
    pub fn standard(kind: FormKind, n: usize, field: &Field) -> Result<FormedSpace> {
        let f = &**field;
        if n == 0 {
            return Err(Error::Form("dimension must be positive".into()));
        }
        let (pairs, aniso) = match kind {
            FormKind::Linear => (0, 0),
            FormKind::Symplectic | FormKind::OrthogonalPlus => {
                if n % 2 == 1 {
                    return Err(Error::Form(format!("{kind:?} requires even n, got {n}")));
                }
                (n / 2, 0)
            }
            FormKind::OrthogonalMinus => {
                if n % 2 == 1 {
                    return Err(Error::Form(format!("orthogonal minus requires even n, got {n}")));
                }
                (n / 2 - 1, 2)
            }
            FormKind::OrthogonalOdd => {
                if n % 2 == 0 || f.p() == 2 {
                    return Err(Error::Form("odd orthogonal requires odd n and odd q".into()));
                }
                (n / 2, 1)
            }
            FormKind::Unitary => {
                if !f.theta_defined() {
                    return Err(Error::Form(format!("unitary requires a square q, got {}", f.q())));
                }
                (n / 2, n % 2)
            }
        };
        let mut gram = Matrix::zero(n, n);
        let mut quad = Matrix::zero(n, n);
        for j in 0..pairs {
            let (e, fi) = (2 * j, 2 * j + 1);
            gram.set(e, fi, 1);
            match kind {
                FormKind::Symplectic => gram.set(fi, e, f.neg(1)),
                _ => gram.set(fi, e, 1),
            }
            if kind.is_orthogonal() {
                quad.set(e, fi, 1);
            }
        }
        let a0 = 2 * pairs;
        match (kind, aniso) {
            (FormKind::OrthogonalMinus, 2) => {
                let beta = least_minus_beta(f);
                quad.set(a0, a0, 1);
                quad.set(a0, a0 + 1, 1);
                quad.set(a0 + 1, a0 + 1, beta);
            }
            (FormKind::OrthogonalOdd, 1) => quad.set(a0, a0, 1),
            (FormKind::Unitary, 1) => gram.set(a0, a0, 1),
            _ => {}
        }
        if kind.is_orthogonal() {
            gram = quad.add(f, &quad.transpose());
        }
        let q0 = match kind {
            FormKind::Linear | FormKind::Symplectic => 1,
            FormKind::Unitary => f.sqrt_q().expect("checked above"),
            _ => f.q(),
        };
        Ok(FormedSpace { field: field.clone(), n, kind, gram, quad, q0, pairs })
    }

    pub fn field(&self) -> &Field {
        &self.field
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn kind(&self) -> FormKind {
        self.kind
    }
    pub fn gram(&self) -> &Matrix {
        &self.gram
    }
    /// Upper-triangular coefficient matrix of Q (zero for non-orthogonal kinds).
    pub fn quad_matrix(&self) -> &Matrix {
        &self.quad
    }
    pub fn q0(&self) -> u32 {
        self.q0
    }
    /// Number of hyperbolic pairs in the standard layout.
    pub fn standard_pairs(&self) -> usize {
        self.pairs
    }
    pub fn descriptor(&self) -> String {
        format!("{}({},{})", self.kind.prefix(), self.n, self.field.q())
    }

    #[inline]
    fn th(&self, x: Scalar) -> Scalar {
        if self.kind == FormKind::Unitary {
            self.field.theta_or_id(x)
        } else {
            x
        }
    }

    /// The row vector `x ↦ f(x, v)`, i.e. `G θ(v)`.
    pub fn form_row(&self, v: &[Scalar]) -> Vec<Scalar> {
        let f = &*self.field;
        let tv: Vec<Scalar> = v.iter().map(|&x| self.th(x)).collect();
        self.gram.mul_vec(f, &tv)
    }

    pub fn form(&self, u: &[Scalar], v: &[Scalar]) -> Scalar {
        if self.kind == FormKind::Linear {
            return 0;
        }
        let f = &*self.field;
        let row = self.form_row(v);
        u.iter().zip(&row).fold(0, |acc, (&a, &b)| f.add(acc, f.mul(a, b)))
    }

    pub fn quad_value(&self, v: &[Scalar]) -> Scalar {
        let f = &*self.field;
        match self.kind {
            FormKind::Linear | FormKind::Symplectic => 0,
            FormKind::Unitary => self.form(v, v),
            _ => {
                let mut acc = 0;
                for i in 0..self.n {
                    if v[i] == 0 {
                        continue;
                    }
                    let mut row = 0;
                    for j in i..self.n {
                        let u = self.quad.get(i, j);
                        if u != 0 && v[j] != 0 {
                            row = f.add(row, f.mul(u, v[j]));
                        }
                    }
                    acc = f.add(acc, f.mul(v[i], row));
                }
                acc
            }
        }
    }

    /// g preserves f and Q.
    pub fn is_isometry(&self, g: &Matrix) -> bool {
        let f = &*self.field;
        if g.rows() != self.n || g.cols() != self.n {
            return false;
        }
        if self.kind == FormKind::Linear {
            return g.det(f) != 0;
        }
        let tg = g.map(|x| self.th(x));
        if g.transpose().mul(f, &self.gram).mul(f, &tg) != self.gram {
            return false;
        }
        if self.kind.is_orthogonal() {
            return (0..self.n).all(|i| self.quad_value(&g.col(i)) == self.quad.get(i, i));
        }
        true
    }

    /// Linear equations `f(x, v_i) = c_i` as a matrix and right-hand side.
    pub fn form_conditions(&self, vs: &[Vec<Scalar>], cs: &[Scalar]) -> (Matrix, Vec<Scalar>) {
        let rows: Vec<Vec<Scalar>> = vs.iter().map(|v| self.form_row(v)).collect();
        if rows.is_empty() {
            return (Matrix::zero(0, self.n), Vec::new());
        }
        (Matrix::from_rows(&rows), cs.to_vec())
    }
}

// ---- quadric counting and sampling ----

/// Q restricted to an affine coset, reduced to a sum of independent blocks of
/// one or two coordinates.
struct Reduction {
    /// New coordinates: y = Σ_k z_k basis_k.
    basis: Vec<Vec<Scalar>>,
    blocks: Vec<Block>,
    constant: Scalar,
}

/// Quadratic data of one block, before the coset's linear term is known.
#[derive(Clone, Copy)]
enum BlockShape {
    /// `Q ≡ 0` on the whole space.
    Zero { coord: usize },
    /// One coordinate with `Q(z b) = a z²` (or `a z θ(z)`).
    Line { coord: usize, a: Scalar },
    /// Characteristic-2 plane with polar value 1 on its basis pair.
    Plane { c0: usize, qx: Scalar, qy: Scalar },
}

struct Shape {
    basis: Vec<Vec<Scalar>>,
    blocks: Vec<BlockShape>,
}

struct Block {
    coords: Vec<usize>,
    /// Value for each assignment, indexed by `z_a + q z_b`.
    values: Vec<Scalar>,
    hist: Vec<u128>,
}

fn convolve(f: &FieldCtx, a: &[u128], b: &[u128]) -> Vec<u128> {
    let q = f.q() as usize;
    let mut out = vec![0u128; q];
    for (x, &ca) in a.iter().enumerate() {
        if ca == 0 {
            continue;
        }
        for (y, &cb) in b.iter().enumerate() {
            if cb != 0 {
                out[f.add(x as Scalar, y as Scalar) as usize] += ca * cb;
            }
        }
    }
    out
}

fn delta(q: usize) -> Vec<u128> {
    let mut d = vec![0u128; q];
    d[0] = 1;
    d
}

impl FormedSpace {
    fn reduce_on(&self, aff: &Affine) -> Result<Reduction> {
        let shape = self.reduce_shape(&aff.dirs)?;
        Ok(self.realize(&shape, &aff.dirs, &aff.base))
    }

    /// Split the restriction of Q to `span(w)` into independent blocks. The
    /// split depends only on the directions, so one shape serves every coset.
    fn reduce_shape(&self, w: &[Vec<Scalar>]) -> Result<Shape> {
        let f = &*self.field;
        let m = w.len();
        let q = f.q() as usize;
        if (m as f64) * (q as f64).log2() > 120.0 {
            return Err(Error::Budget("coset too large for exact 128-bit counting".into()));
        }
        let unitary = self.kind == FormKind::Unitary;
        // Restricted data in y-coordinates.
        let bm = Matrix::from_fn(m, m, |i, j| self.form(&w[i], &w[j]));
        let qv: Vec<Scalar> = w.iter().map(|x| self.quad_value(x)).collect();
        let bform = |x: &[Scalar], y: &[Scalar]| -> Scalar {
            let mut acc = 0;
            for i in 0..m {
                if x[i] == 0 {
                    continue;
                }
                for j in 0..m {
                    if y[j] != 0 {
                        let yy = if unitary { f.theta_or_id(y[j]) } else { y[j] };
                        acc = f.add(acc, f.mul(f.mul(x[i], bm.get(i, j)), yy));
                    }
                }
            }
            acc
        };
        let qr = |x: &[Scalar]| -> Scalar {
            if unitary {
                return bform(x, x);
            }
            let mut acc = 0;
            for i in 0..m {
                if x[i] == 0 {
                    continue;
                }
                acc = f.add(acc, f.mul(f.mul(x[i], x[i]), qv[i]));
                for j in i + 1..m {
                    if x[j] != 0 {
                        acc = f.add(acc, f.mul(f.mul(x[i], x[j]), bm.get(i, j)));
                    }
                }
            }
            acc
        };
        let odd = f.p() != 2;
        let mut rest: Vec<Vec<Scalar>> = (0..m).map(|i| unit_vec(m, i)).collect();
        let mut basis: Vec<Vec<Scalar>> = Vec::new();
        let mut blocks: Vec<BlockShape> = Vec::new();
        let one_block = |b: &[Scalar], coord: usize, radical: bool| -> BlockShape {
            BlockShape::Line { coord, a: if radical { 0 } else { qr(b) } }
        };
        let independent = |vs: Vec<Vec<Scalar>>| -> Vec<Vec<Scalar>> {
            let mut e = Echelon::new();
            vs.into_iter().filter(|v| e.insert(f, v, &[])).collect()
        };
        if self.kind.has_quadratic() {
            loop {
                if rest.is_empty() {
                    break;
                }
                if odd || unitary {
                    // find an anisotropic vector (possibly a combination of two)
                    let mut anis = rest.iter().find(|x| qr(x) != 0).cloned();
                    if anis.is_none() {
                        'search: for i in 0..rest.len() {
                            for j in 0..rest.len() {
                                if i != j && bform(&rest[i], &rest[j]) != 0 {
                                    for lam in f.elements().skip(1) {
                                        let cand = vec_add(f, &rest[i], &vec_scale(f, &rest[j], lam));
                                        if qr(&cand) != 0 {
                                            anis = Some(cand);
                                            break 'search;
                                        }
                                    }
                                }
                            }
                        }
                    }
                    let Some(a) = anis else { break };
                    let haa = bform(&a, &a);
                    let proj: Vec<Vec<Scalar>> = rest
                        .iter()
                        .map(|r| {
                            let c = f.div(bform(r, &a), haa);
                            vec_sub(f, r, &vec_scale(f, &a, c))
                        })
                        .collect();
                    let coord = basis.len();
                    blocks.push(one_block(&a, coord, false));
                    basis.push(a);
                    rest = independent(proj);
                } else {
                    // characteristic 2 orthogonal: split off hyperbolic-type planes
                    let mut pair = None;
                    'p: for i in 0..rest.len() {
                        for j in i + 1..rest.len() {
                            let b = bform(&rest[i], &rest[j]);
                            if b != 0 {
                                pair = Some((rest[i].clone(), vec_scale(f, &rest[j], f.inv(b))));
                                break 'p;
                            }
                        }
                    }
                    let Some((x, y)) = pair else { break };
                    let proj: Vec<Vec<Scalar>> = rest
                        .iter()
                        .map(|r| {
                            let mut v = vec_sub(f, r, &vec_scale(f, &x, bform(r, &y)));
                            v = vec_sub(f, &v, &vec_scale(f, &y, bform(r, &x)));
                            v
                        })
                        .collect();
                    let c0 = basis.len();
                    blocks.push(BlockShape::Plane { c0, qx: qr(&x), qy: qr(&y) });
                    basis.push(x);
                    basis.push(y);
                    rest = independent(proj);
                }
            }
        }
        // the radical of the restricted form (all of it when Q ≡ 0)
        for r in rest {
            let coord = basis.len();
            let radical_q = !(self.kind.is_orthogonal() && !odd);
            let b = if self.kind.has_quadratic() { one_block(&r, coord, radical_q) } else { BlockShape::Zero { coord } };
            blocks.push(b);
            basis.push(r);
        }
        let _ = q;
        Ok(Shape { basis, blocks })
    }

    /// Block value tables for the coset `v0 + span(w)`.
    fn realize(&self, shape: &Shape, w: &[Vec<Scalar>], v0: &[Scalar]) -> Reduction {
        let f = &*self.field;
        let q = f.q() as usize;
        let unitary = self.kind == FormKind::Unitary;
        let lin: Vec<Scalar> = if unitary {
            w.iter().map(|x| self.form(x, v0)).collect()
        } else {
            w.iter().map(|x| self.form(v0, x)).collect()
        };
        // linear coefficient of a basis vector (y-coordinates)
        let lin_of = |x: &[Scalar]| -> Scalar { x.iter().zip(&lin).fold(0, |acc, (&a, &b)| f.add(acc, f.mul(a, b))) };
        let trace = |x: Scalar| f.add(x, f.theta_or_id(x));
        let blocks = shape
            .blocks
            .iter()
            .map(|b| match *b {
                BlockShape::Zero { coord } => {
                    let mut hist = vec![0u128; q];
                    hist[0] = q as u128;
                    Block { coords: vec![coord], values: vec![0; q], hist }
                }
                BlockShape::Line { coord, a } => {
                    let l = lin_of(&shape.basis[coord]);
                    let values: Vec<Scalar> = f
                        .elements()
                        .map(|z| {
                            if unitary {
                                f.add(f.mul(f.mul(z, f.theta_or_id(z)), a), trace(f.mul(z, l)))
                            } else {
                                f.add(f.mul(f.mul(z, z), a), f.mul(z, l))
                            }
                        })
                        .collect();
                    let mut hist = vec![0u128; q];
                    for &v in &values {
                        hist[v as usize] += 1;
                    }
                    Block { coords: vec![coord], values, hist }
                }
                BlockShape::Plane { c0, qx, qy } => {
                    let (lx, ly) = (lin_of(&shape.basis[c0]), lin_of(&shape.basis[c0 + 1]));
                    let mut values = Vec::with_capacity(q * q);
                    let mut hist = vec![0u128; q];
                    for b in f.elements() {
                        for a in f.elements() {
                            let mut v = f.mul(f.mul(a, a), qx);
                            v = f.add(v, f.mul(a, b));
                            v = f.add(v, f.mul(f.mul(b, b), qy));
                            v = f.add(v, f.add(f.mul(a, lx), f.mul(b, ly)));
                            values.push(v);
                            hist[v as usize] += 1;
                        }
                    }
                    Block { coords: vec![c0, c0 + 1], values, hist }
                }
            })
            .collect();
        Reduction { basis: shape.basis.clone(), blocks, constant: self.quad_value(v0) }
    }
}

/// Exact count of `{v ∈ aff : Q(v) = target}`.
pub fn count_quadric_points(space: &FormedSpace, aff: &Affine, target: Scalar) -> Result<u128> {
    let f = &*space.field;
    if !space.kind.has_quadratic() {
        let total = (f.q() as u128).pow(aff.dim() as u32);
        return Ok(if target == 0 { total } else { 0 });
    }
    let red = space.reduce_on(aff)?;
    let mut acc = delta(f.q() as usize);
    for b in &red.blocks {
        acc = convolve(f, &acc, &b.hist);
    }
    Ok(acc[f.sub(target, red.constant) as usize])
}

/// Histograms of Q over the cosets `base + span(dirs)` for every base:
/// `out[i][c] = |{v ∈ bases[i] + span(dirs) : Q(v) = c}|`.
pub fn count_quadric_cosets(space: &FormedSpace, dirs: &[Vec<Scalar>], bases: &[Vec<Scalar>]) -> Result<Vec<Vec<u128>>> {
    let f = &*space.field;
    let q = f.q() as usize;
    if !space.kind.has_quadratic() {
        let mut h = vec![0u128; q];
        h[0] = (q as u128).pow(dirs.len() as u32);
        return Ok(vec![h; bases.len()]);
    }
    let shape = space.reduce_shape(dirs)?;
    Ok(bases
        .iter()
        .map(|v0| {
            let red = space.realize(&shape, dirs, v0);
            let mut acc = delta(q);
            for b in &red.blocks {
                acc = convolve(f, &acc, &b.hist);
            }
            // shift by the constant Q(v0)
            let mut out = vec![0u128; q];
            for (x, &c) in acc.iter().enumerate() {
                out[f.add(x as Scalar, red.constant) as usize] += c;
            }
            out
        })
        .collect())
}

/// Values Q can take on the space: the subfield fixed by θ for unitary
/// forms, all of the field for orthogonal ones and only zero otherwise.
pub fn quadric_targets(space: &FormedSpace) -> Vec<Scalar> {
    let f = &*space.field;
    match space.kind {
        FormKind::Unitary => f.elements().filter(|&x| f.theta_or_id(x) == x).collect(),
        k if k.is_orthogonal() => f.elements().collect(),
        _ => vec![0],
    }
}

/// A coset `{v : a_i · v = b_i}` of a subspace cut out by dot-product
/// functionals in reduced echelon form.
#[derive(Clone, Debug)]
pub struct CosetRef<'a> {
    pub functionals: &'a [Vec<Scalar>],
    pub rhs: &'a [Scalar],
}

/// Calls `visit(coset, target, count)` for every affine coset of codimension
/// at most `max_codim` (at most 2) and every target in [`quadric_targets`].
///
/// Hyperplane cosets are counted directly by block reduction. A codimension 2
/// coset `C` lies in `q + 1` hyperplane cosets, and every point outside `C`
/// lies in exactly one of them, so `|C ∩ X| = (Σ_H |H ∩ X| − |X|) / q`.
pub fn for_each_coset_count<F>(space: &FormedSpace, max_codim: usize, mut visit: F) -> Result<()>
where
    F: FnMut(&CosetRef<'_>, Scalar, u128),
{
    if max_codim > 2 {
        return Err(Error::Budget("coset sweeps support codimension at most 2".into()));
    }
    let f = &*space.field;
    let (q, n) = (f.q(), space.n);
    let total = (q as u64).checked_pow(n as u32).filter(|&t| t <= 1 << 24);
    let Some(total) = total else {
        return Err(Error::Budget(format!("sweep over {q}^{n} vectors is too large")));
    };
    let targets = quadric_targets(space);
    let nt = targets.len();
    let units: Vec<Vec<Scalar>> = (0..n).map(|i| unit_vec(n, i)).collect();
    let whole = count_quadric_cosets(space, &units, &[vec![0; n]])?.remove(0);
    for &t in &targets {
        visit(&CosetRef { functionals: &[], rhs: &[] }, t, whole[t as usize]);
    }
    if max_codim == 0 {
        return Ok(());
    }
    // normalized functionals (leading coefficient 1) get dense slots
    let mut slot = vec![u32::MAX; total as usize];
    let mut normalized: Vec<Vec<Scalar>> = Vec::new();
    for idx in 1..total {
        let a = crate::linalg::vec_from_index(q, n, idx);
        if a.iter().find(|&&x| x != 0) == Some(&1) {
            slot[idx as usize] = normalized.len() as u32;
            normalized.push(a);
        }
    }
    // hyp[(slot * q + t) * nt + k] = |{a · v = t, Q(v) = targets[k]}|
    let keep = max_codim >= 2 && n >= 2;
    let mut hyp = vec![0u128; if keep { normalized.len() * q as usize * nt } else { 0 }];
    for (s, a) in normalized.iter().enumerate() {
        let piv = a.iter().position(|&x| x != 0).expect("nonzero");
        let dirs: Vec<Vec<Scalar>> = (0..n)
            .filter(|&j| j != piv)
            .map(|j| {
                let mut d = unit_vec(n, j);
                d[piv] = f.neg(a[j]);
                d
            })
            .collect();
        let bases: Vec<Vec<Scalar>> = f.elements().map(|t| vec_scale(f, &units[piv], t)).collect();
        // bounded batches keep memory linear in q for large fields
        for (c, chunk) in bases.chunks(64).enumerate() {
            let hists = count_quadric_cosets(space, &dirs, chunk)?;
            for (i, h) in hists.iter().enumerate() {
                let t = c * 64 + i;
                let func = std::slice::from_ref(a);
                let rhs = [t as Scalar];
                for (k, &x) in targets.iter().enumerate() {
                    if keep {
                        hyp[(s * q as usize + t) * nt + k] = h[x as usize];
                    }
                    visit(&CosetRef { functionals: func, rhs: &rhs }, x, h[x as usize]);
                }
            }
        }
    }
    if max_codim == 1 {
        return Ok(());
    }
    let hyp_at = |a: &[Scalar], t: Scalar, k: usize| -> u128 {
        let s = slot[crate::linalg::vec_index(q, a) as usize] as usize;
        hyp[(s * q as usize + t as usize) * nt + k]
    };
    let qq = q as u128;
    let mut sums = vec![0u128; nt];
    let mut pair = vec![vec![0; n], vec![0; n]];
    for i in 0..n {
        for j in i + 1..n {
            let free1: Vec<usize> = (i + 1..n).filter(|&k| k != j).collect();
            let free2: Vec<usize> = (j + 1..n).collect();
            let c1 = (q as u64).pow(free1.len() as u32);
            let c2 = (q as u64).pow(free2.len() as u32);
            for x1 in 0..c1 {
                let v1 = crate::linalg::vec_from_index(q, free1.len(), x1);
                pair[0].fill(0);
                pair[0][i] = 1;
                for (&k, &x) in free1.iter().zip(&v1) {
                    pair[0][k] = x;
                }
                for x2 in 0..c2 {
                    let v2 = crate::linalg::vec_from_index(q, free2.len(), x2);
                    pair[1].fill(0);
                    pair[1][j] = 1;
                    for (&k, &x) in free2.iter().zip(&v2) {
                        pair[1][k] = x;
                    }
                    // the q + 1 hyperplanes through the subspace
                    let lines: Vec<(Vec<Scalar>, Scalar, Scalar)> = f
                        .elements()
                        .map(|lam| (crate::linalg::vec_add(f, &pair[0], &vec_scale(f, &pair[1], lam)), 1, lam))
                        .chain(std::iter::once((pair[1].clone(), 0, 1)))
                        .collect();
                    for b1 in f.elements() {
                        for b2 in f.elements() {
                            sums.fill(0);
                            for (u, c1, c2) in &lines {
                                let t = f.add(f.mul(*c1, b1), f.mul(*c2, b2));
                                for (k, s) in sums.iter_mut().enumerate() {
                                    *s += hyp_at(u, t, k);
                                }
                            }
                            let rhs = [b1, b2];
                            let coset = CosetRef { functionals: &pair, rhs: &rhs };
                            for (k, &x) in targets.iter().enumerate() {
                                let whole_x = whole[x as usize];
                                let num = sums[k] - whole_x;
                                debug_assert_eq!(num % qq, 0);
                                visit(&coset, x, num / qq);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Summary of a [`for_each_coset_count`] sweep against the two-sided bound
/// `|count − q^{n−s}/q0| ≤ q^{n/2}`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CosetSweep {
    pub descriptor: String,
    pub q: u32,
    pub n: usize,
    pub checks: u64,
    pub violations: u64,
    /// Largest `|count − q^{n−s}/q0| / q^{n/2}` seen.
    pub max_ratio: f64,
}

/// Whether `count` lies within `q^{n−s}/q0 ± q^{n/2}`, decided exactly.
pub fn within_quadric_bound(q: u32, q0: u32, n: usize, codim: usize, count: u128) -> bool {
    // |count·q0 − q^{n−s}| ≤ q0·q^{n/2}, squared to stay in integers
    let main = (q as i128).pow((n - codim) as u32);
    let dev = count as i128 * q0 as i128 - main;
    dev * dev <= (q0 as i128).pow(2) * (q as i128).pow(n as u32)
}

/// Exhaustive bound check over all cosets of codimension at most `max_codim`.
pub fn quadric_coset_sweep(space: &FormedSpace, max_codim: usize) -> Result<CosetSweep> {
    let (q, q0, n) = (space.field.q(), space.q0, space.n);
    let mut out = CosetSweep { descriptor: space.descriptor(), q, n, ..Default::default() };
    let scale = (q as f64).powf(n as f64 / 2.0);
    for_each_coset_count(space, max_codim, |c, _, count| {
        let s = c.functionals.len();
        out.checks += 1;
        if !within_quadric_bound(q, q0, n, s, count) {
            out.violations += 1;
        }
        let main = (q as f64).powi((n - s) as i32) / q0 as f64;
        out.max_ratio = out.max_ratio.max((count as f64 - main).abs() / scale);
    })?;
    Ok(out)
}

/// Exactly uniform point of `{v ∈ aff : Q(v) = target}`, or `None` if empty.
pub fn sample_quadric_point<R: Rng + ?Sized>(
    space: &FormedSpace,
    aff: &Affine,
    target: Scalar,
    rng: &mut R,
) -> Result<Option<Vec<Scalar>>> {
    let f = &*space.field;
    let q = f.q();
    if !space.kind.has_quadratic() {
        if target != 0 {
            return Ok(None);
        }
        let y: Vec<Scalar> = (0..aff.dim()).map(|_| rng.gen_range(0..q) as Scalar).collect();
        return Ok(Some(aff.point(f, &y)));
    }
    let red = space.reduce_on(aff)?;
    let k = red.blocks.len();
    let mut suffix: Vec<Vec<u128>> = vec![delta(q as usize); k + 1];
    for i in (0..k).rev() {
        suffix[i] = convolve(f, &suffix[i + 1], &red.blocks[i].hist);
    }
    let mut need = f.sub(target, red.constant);
    if suffix[0][need as usize] == 0 {
        return Ok(None);
    }
    let mut z = vec![0 as Scalar; red.basis.len()];
    for (i, b) in red.blocks.iter().enumerate() {
        let weights: Vec<u128> = f
            .elements()
            .map(|a| b.hist[a as usize] * suffix[i + 1][f.sub(need, a) as usize])
            .collect();
        let total: u128 = weights.iter().sum();
        let mut pick = rng.gen_range(0..total);
        let mut val = 0;
        for (a, &w) in weights.iter().enumerate() {
            if pick < w {
                val = a as Scalar;
                break;
            }
            pick -= w;
        }
        // uniform preimage of `val` within the block
        let mut idx = rng.gen_range(0..b.hist[val as usize]);
        let mut chosen = 0usize;
        for (assign, &v) in b.values.iter().enumerate() {
            if v == val {
                if idx == 0 {
                    chosen = assign;
                    break;
                }
                idx -= 1;
            }
        }
        for (t, &c) in b.coords.iter().enumerate() {
            z[c] = ((chosen / (q as usize).pow(t as u32)) % q as usize) as Scalar;
        }
        need = f.sub(need, val);
    }
    let m = aff.dim();
    let mut y = vec![0 as Scalar; m];
    for (zk, bk) in z.iter().zip(&red.basis) {
        axpy(f, &mut y, *zk, bk);
    }
    Ok(Some(aff.point(f, &y)))
}

/// The affine set `{x : f(x, v_i) = c_i}` intersected with `within`
/// (the whole space when `None`). `None` if empty.
pub fn solve_form_conditions(
    space: &FormedSpace,
    vs: &[Vec<Scalar>],
    cs: &[Scalar],
) -> Result<Option<Affine>> {
    let n = space.n;
    if vs.is_empty() {
        return Ok(Some(Affine::full(n)));
    }
    let (a, b) = space.form_conditions(vs, cs);
    let f = &*space.field;
    Ok(a.solve_affine(f, &b)?.map(|s| Affine { base: s.particular, dirs: s.kernel }))
}

// ---- Witt extension ----

const MAX_REJECTIONS: usize = 100_000;

/// Uniform vector `x` with `f(x, v_i) = c_i`, `Q(x) = target`, `x ∉ span(exclude)`.
pub fn sample_admissible<R: Rng + ?Sized>(
    space: &FormedSpace,
    vs: &[Vec<Scalar>],
    cs: &[Scalar],
    target: Scalar,
    exclude: &Echelon,
    rng: &mut R,
) -> Result<Option<Vec<Scalar>>> {
    let f = &*space.field;
    let Some(aff) = solve_form_conditions(space, vs, cs)? else {
        return Ok(None);
    };
    for _ in 0..MAX_REJECTIONS {
        match sample_quadric_point(space, &aff, target, rng)? {
            None => return Ok(None),
            Some(x) => {
                if !exclude.contains(f, &x) {
                    return Ok(Some(x));
                }
            }
        }
    }
    Err(Error::Internal("admissible set appears empty after rejection budget".into()))
}

fn check_pairs(space: &FormedSpace, pairs: &[(Vec<Scalar>, Vec<Scalar>)]) -> Result<()> {
    let f = &*space.field;
    let n = space.n;
    for (u, v) in pairs {
        if u.len() != n || v.len() != n {
            return Err(Error::Shape("pair vectors must have length n".into()));
        }
    }
    let mut eu = Echelon::new();
    let mut ev = Echelon::new();
    for (u, v) in pairs {
        if !eu.insert(f, u, &[]) {
            return Err(Error::Witt("source vectors are dependent".into()));
        }
        if !ev.insert(f, v, &[]) {
            return Err(Error::Witt("target vectors are dependent".into()));
        }
    }
    for (i, (ui, vi)) in pairs.iter().enumerate() {
        if space.quad_value(ui) != space.quad_value(vi) {
            return Err(Error::Witt(format!("Q mismatch at pair {i}")));
        }
        for (j, (uj, vj)) in pairs.iter().enumerate() {
            if space.form(ui, uj) != space.form(vi, vj) {
                return Err(Error::Witt(format!("form mismatch at pair ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// An isometry g with g u_i = v_i, built by greedy uniform completion.
///
/// With `scl` the result has trivial abelian invariant. The completion is
/// uniform over the coset of the pointwise stabilizer of the `u_i`; its
/// invariant is then cancelled by a stabilizer element (a reflection,
/// quasi-reflection or diagonal element fixing every `u_i`). When the
/// stabilizer is too small for that, no special extension exists and an
/// error says so. `k ≤ n − 2` alone does not rule this out: for a maximal
/// totally singular span, or one whose perp has too small a nondegenerate
/// part, the stabilizer misses the invariant that needs cancelling.
pub fn extend_isometry<R: Rng + ?Sized>(
    space: &FormedSpace,
    pairs: &[(Vec<Scalar>, Vec<Scalar>)],
    scl: bool,
    rng: &mut R,
) -> Result<Matrix> {
    check_pairs(space, pairs)?;
    let n = space.n;
    let f = &*space.field;
    if scl && pairs.len() + 2 > n && AbelianInvariant::group_elements(space).len() > 1 {
        return Err(Error::Witt(format!(
            "special-group extension needs k ≤ n - 2 (k = {}, n = {n})",
            pairs.len()
        )));
    }
    let mut us: Vec<Vec<Scalar>> = pairs.iter().map(|p| p.0.clone()).collect();
    let mut eu = Echelon::new();
    for u in &us {
        eu.insert(f, u, &[]);
    }
    for i in 0..n {
        let e = unit_vec(n, i);
        if eu.insert(f, &e, &[]) {
            us.push(e);
        }
    }
    let umat_inv = Matrix::from_cols(&us).inverse(f)?;
    let mut vs: Vec<Vec<Scalar>> = pairs.iter().map(|p| p.1.clone()).collect();
    let mut ev = Echelon::new();
    for v in &vs {
        ev.insert(f, v, &[]);
    }
    for t in pairs.len()..n {
        let cs: Vec<Scalar> = (0..t).map(|i| space.form(&us[t], &us[i])).collect();
        let target = space.quad_value(&us[t]);
        let v = sample_admissible(space, &vs, &cs, target, &ev, rng)?
            .ok_or_else(|| Error::Internal("Witt extension step has no admissible vector".into()))?;
        ev.insert(f, &v, &[]);
        vs.push(v);
    }
    let g = Matrix::from_cols(&vs).mul(f, &umat_inv);
    if !scl {
        return Ok(g);
    }
    let inv = abelian_invariant(space, &g)?;
    if inv == AbelianInvariant::identity(space) {
        return Ok(g);
    }
    let fixed = &us[..pairs.len()];
    let Some(r) = stabilizer_element(space, fixed, inv.inverse(f), rng)? else {
        return Err(Error::Witt(format!(
            "no special extension: the pointwise stabilizer of the sources cannot cancel {}",
            inv.to_literal()
        )));
    };
    let g = g.mul(f, &r);
    if abelian_invariant(space, &g)? != AbelianInvariant::identity(space) {
        return Err(Error::Internal("special-group correction left a nontrivial invariant".into()));
    }
    Ok(g)
}

/// An isometry fixing every vector of `fixed` with abelian invariant `need`,
/// or `None` if the pointwise stabilizer has no such element.
fn stabilizer_element<R: Rng + ?Sized>(
    space: &FormedSpace,
    fixed: &[Vec<Scalar>],
    need: AbelianInvariant,
    rng: &mut R,
) -> Result<Option<Matrix>> {
    let f = &*space.field;
    let n = space.n;
    if need == AbelianInvariant::identity(space) {
        return Ok(Some(Matrix::identity(n)));
    }
    if space.kind == FormKind::Linear {
        let AbelianInvariant::Det(d) = need else { return Err(Error::Internal("linear invariant".into())) };
        if fixed.len() >= n {
            return Ok(None);
        }
        // scale one completing basis vector by d
        let mut basis = fixed.to_vec();
        let mut e = Echelon::new();
        for u in fixed {
            e.insert(f, u, &[]);
        }
        for i in 0..n {
            let v = unit_vec(n, i);
            if e.insert(f, &v, &[]) {
                basis.push(v);
            }
        }
        let b = Matrix::from_cols(&basis);
        let mut diag = vec![1; n];
        diag[n - 1] = d;
        return Ok(Some(b.mul(f, &Matrix::diag(&diag)).mul(f, &b.inverse(f)?)));
    }
    // nonsingular vectors of the perp give (quasi-)reflections fixing `fixed`
    let perp = if fixed.is_empty() {
        (0..n).map(|i| unit_vec(n, i)).collect()
    } else {
        space.form_conditions(fixed, &vec![0; fixed.len()]).0.kernel(f)
    };
    let aff = Affine::linear(perp, n);
    let mut found: Vec<(AbelianInvariant, Matrix)> = Vec::new();
    for c in quadric_targets(space).into_iter().filter(|&c| c != 0) {
        let Some(w) = sample_quadric_point(space, &aff, c, rng)? else { continue };
        if space.kind == FormKind::Unitary {
            let AbelianInvariant::Det(lam) = need else { return Err(Error::Internal("unitary invariant".into())) };
            // x ↦ x + (λ − 1) f(x, w) / f(w, w) · w
            let coef = f.div(f.sub(lam, 1), c);
            let row = space.form_row(&w);
            let r = Matrix::from_fn(n, n, |i, j| f.add((i == j) as Scalar, f.mul(f.mul(coef, row[j]), w[i])));
            return Ok(Some(r));
        }
        let r = reflection(space, &w);
        let a = abelian_invariant(space, &r)?;
        if !found.iter().any(|(b, _)| *b == a) {
            found.push((a, r));
        }
    }
    // the orthogonal abelianization has exponent 2: products of at most two
    for (a, r) in &found {
        if *a == need {
            return Ok(Some(r.clone()));
        }
    }
    for (a, r) in &found {
        for (b, s) in &found {
            if a.combine(f, b) == need {
                return Ok(Some(r.mul(f, s)));
            }
        }
    }
    Ok(None)
}

// ---- abelianization invariants ----

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AbelianInvariant {
    /// Determinant (linear and unitary kinds).
    Det(Scalar),
    /// Symplectic groups are perfect at the level of GCl.
    Trivial,
    /// Odd characteristic orthogonal: (det = -1, spinor norm nonsquare).
    Orth { det_minus: bool, sn_nonsquare: bool },
    /// Even characteristic orthogonal: rank(g - 1) mod 2.
    Dickson(bool),
}

impl AbelianInvariant {
    pub fn identity(space: &FormedSpace) -> AbelianInvariant {
        match space.kind {
            FormKind::Linear | FormKind::Unitary => AbelianInvariant::Det(1),
            FormKind::Symplectic => AbelianInvariant::Trivial,
            _ if space.field.p() == 2 => AbelianInvariant::Dickson(false),
            _ => AbelianInvariant::Orth { det_minus: false, sn_nonsquare: false },
        }
    }

    pub fn combine(&self, f: &FieldCtx, o: &AbelianInvariant) -> AbelianInvariant {
        use AbelianInvariant::*;
        match (*self, *o) {
            (Det(a), Det(b)) => Det(f.mul(a, b)),
            (Trivial, Trivial) => Trivial,
            (Orth { det_minus: a, sn_nonsquare: b }, Orth { det_minus: c, sn_nonsquare: d }) => {
                Orth { det_minus: a ^ c, sn_nonsquare: b ^ d }
            }
            (Dickson(a), Dickson(b)) => Dickson(a ^ b),
            _ => panic!("combining invariants of different kinds"),
        }
    }

    pub fn inverse(&self, f: &FieldCtx) -> AbelianInvariant {
        match *self {
            AbelianInvariant::Det(a) => AbelianInvariant::Det(f.inv(a)),
            other => other,
        }
    }

    /// All values of GCl^ab for the space, in a fixed order.
    pub fn group_elements(space: &FormedSpace) -> Vec<AbelianInvariant> {
        let f = &*space.field;
        match space.kind {
            FormKind::Linear => f.elements().skip(1).map(AbelianInvariant::Det).collect(),
            FormKind::Unitary => f
                .elements()
                .skip(1)
                .filter(|&x| f.norm_theta(x).unwrap() == 1)
                .map(AbelianInvariant::Det)
                .collect(),
            FormKind::Symplectic => vec![AbelianInvariant::Trivial],
            _ if f.p() == 2 => vec![AbelianInvariant::Dickson(false), AbelianInvariant::Dickson(true)],
            _ => {
                let mut v = Vec::new();
                for det_minus in [false, true] {
                    for sn_nonsquare in [false, true] {
                        v.push(AbelianInvariant::Orth { det_minus, sn_nonsquare });
                    }
                }
                v
            }
        }
    }

    /// Text literal used by group descriptors.
    pub fn to_literal(&self) -> String {
        match *self {
            AbelianInvariant::Det(a) => a.to_string(),
            AbelianInvariant::Trivial => "1".into(),
            AbelianInvariant::Orth { det_minus, sn_nonsquare } => {
                format!("{}{}", if det_minus { '-' } else { '+' }, if sn_nonsquare { '-' } else { '+' })
            }
            AbelianInvariant::Dickson(b) => (b as u8).to_string(),
        }
    }

    pub fn parse_literal(space: &FormedSpace, s: &str) -> Result<AbelianInvariant> {
        let s = s.trim();
        let bad = || Error::Parse(format!("bad invariant literal '{s}' for {}", space.descriptor()));
        let all = AbelianInvariant::group_elements(space);
        let v = match space.kind {
            FormKind::Linear | FormKind::Unitary => AbelianInvariant::Det(space.field.parse_scalar(s)?),
            FormKind::Symplectic => AbelianInvariant::Trivial,
            _ if space.field.p() == 2 => match s {
                "0" => AbelianInvariant::Dickson(false),
                "1" => AbelianInvariant::Dickson(true),
                _ => return Err(bad()),
            },
            _ => {
                let c: Vec<char> = s.chars().collect();
                if c.len() != 2 || !c.iter().all(|x| *x == '+' || *x == '-') {
                    return Err(bad());
                }
                AbelianInvariant::Orth { det_minus: c[0] == '-', sn_nonsquare: c[1] == '-' }
            }
        };
        if !all.contains(&v) {
            return Err(bad());
        }
        Ok(v)
    }
}

/// Reflection `v ↦ v - f(v, a)/Q(a) · a` in an anisotropic vector.
pub fn reflection(space: &FormedSpace, a: &[Scalar]) -> Matrix {
    let f = &*space.field;
    let qa = space.quad_value(a);
    assert!(qa != 0, "reflection in a singular vector");
    let row = space.form_row(a);
    let inv = f.inv(qa);
    let n = space.n;
    Matrix::from_fn(n, n, |i, j| {
        let v = f.mul(f.mul(a[i], row[j]), inv);
        f.sub((i == j) as Scalar, v)
    })
}

/// Spinor norm class (true = nonsquare) by Cartan–Dieudonné decomposition.
fn spinor_norm_nonsquare(space: &FormedSpace, g: &Matrix) -> Result<bool> {
    let f = &*space.field;
    let n = space.n;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5b1e_0b5e);
    let mut h = g.clone();
    let mut class = false;
    let mut ubasis: Vec<Vec<Scalar>> = (0..n).map(|i| unit_vec(n, i)).collect();
    let mut escapes = 0;
    while !h.is_identity() {
        if ubasis.is_empty() {
            return Err(Error::Internal("spinor decomposition lost its subspace".into()));
        }
        let random_in_u = |rng: &mut ChaCha8Rng| -> Vec<Scalar> {
            let mut x = vec![0; n];
            for b in &ubasis {
                axpy(f, &mut x, rng.gen_range(0..f.q()) as Scalar, b);
            }
            x
        };
        let mut found: Option<(Vec<Scalar>, Option<Vec<Scalar>>)> = None;
        let candidates: Vec<Vec<Scalar>> =
            ubasis.iter().cloned().chain((0..64).map(|_| random_in_u(&mut rng))).collect();
        for x in candidates {
            if space.quad_value(&x) == 0 {
                continue;
            }
            let d = vec_sub(f, &h.mul_vec(f, &x), &x);
            if is_zero_vec(&d) {
                found = Some((x, None));
                break;
            }
            if space.quad_value(&d) != 0 {
                found = Some((x, Some(d)));
                break;
            }
        }
        match found {
            Some((x, d)) => {
                if let Some(d) = d {
                    class ^= !f.is_square(space.quad_value(&d));
                    h = reflection(space, &d).mul(f, &h);
                }
                let fxx = space.form(&x, &x);
                let proj: Vec<Vec<Scalar>> = ubasis
                    .iter()
                    .map(|b| vec_sub(f, b, &vec_scale(f, &x, f.div(space.form(b, &x), fxx))))
                    .collect();
                let mut e = Echelon::new();
                ubasis = proj.into_iter().filter(|v| e.insert(f, v, &[])).collect();
            }
            None => {
                escapes += 1;
                if escapes > 1000 {
                    return Err(Error::Internal("reflection decomposition did not terminate".into()));
                }
                let a = loop {
                    let a = random_in_u(&mut rng);
                    if space.quad_value(&a) != 0 {
                        break a;
                    }
                };
                class ^= !f.is_square(space.quad_value(&a));
                h = reflection(space, &a).mul(f, &h);
            }
        }
    }
    Ok(class)
}

/// The abelianization image of an isometry.
pub fn abelian_invariant(space: &FormedSpace, g: &Matrix) -> Result<AbelianInvariant> {
    let f = &*space.field;
    if !space.is_isometry(g) {
        return Err(Error::NotIsometry);
    }
    Ok(match space.kind {
        FormKind::Linear | FormKind::Unitary => AbelianInvariant::Det(g.det(f)),
        FormKind::Symplectic => AbelianInvariant::Trivial,
        _ if f.p() == 2 => AbelianInvariant::Dickson(g.minus_scalar(f, 1).rank(f) % 2 == 1),
        _ => AbelianInvariant::Orth {
            det_minus: g.det(f) != 1,
            sn_nonsquare: spinor_norm_nonsquare(space, g)?,
        },
    })
}

/// Decomposition `V = H ⊥ V_an`: hyperbolic pairs (e, f) with f(e, f) = 1 and
/// Q(e) = Q(f) = 0, plus a basis of the anisotropic part.
pub type WittDecomposition = (Vec<(Vec<Scalar>, Vec<Scalar>)>, Vec<Vec<Scalar>>);

pub fn witt_decompose(space: &FormedSpace) -> Result<WittDecomposition> {
    let f = &*space.field;
    let n = space.n;
    if space.kind == FormKind::Linear {
        return Err(Error::Form("the linear kind carries no form".into()));
    }
    if space.gram.rank(f) < n {
        return Err(Error::Form("degenerate form".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x3177);
    let mut ubasis: Vec<Vec<Scalar>> = (0..n).map(|i| unit_vec(n, i)).collect();
    let mut pairs = Vec::new();
    let eps = if space.kind == FormKind::Symplectic { f.neg(1) } else { 1 };
    loop {
        if ubasis.len() < 2 {
            break;
        }
        let aff = Affine::linear(ubasis.clone(), n);
        let singular = count_quadric_points(space, &aff, 0)?;
        if singular <= 1 {
            break;
        }
        let x = loop {
            let x = sample_quadric_point(space, &aff, 0, &mut rng)?.expect("count is positive");
            if !is_zero_vec(&x) {
                break x;
            }
        };
        let b = ubasis
            .iter()
            .find(|b| space.form(&x, b) != 0)
            .cloned()
            .ok_or_else(|| Error::Form("degenerate restriction".into()))?;
        let c = space.th(f.inv(space.form(&x, &b)));
        let mut y = vec_scale(f, &b, c);
        match space.kind {
            FormKind::Symplectic => {}
            FormKind::Unitary => {
                let fyy = space.form(&y, &y);
                let c = f
                    .elements()
                    .find(|&c| f.add(c, f.theta_or_id(c)) == fyy)
                    .expect("the trace map is surjective");
                y = vec_sub(f, &y, &vec_scale(f, &x, c));
            }
            _ => {
                let qy = space.quad_value(&y);
                y = vec_sub(f, &y, &vec_scale(f, &x, qy));
            }
        }
        let proj: Vec<Vec<Scalar>> = ubasis
            .iter()
            .map(|b| {
                let alpha = space.form(b, &y);
                let beta = f.div(space.form(b, &x), eps);
                let mut v = vec_sub(f, b, &vec_scale(f, &x, alpha));
                v = vec_sub(f, &v, &vec_scale(f, &y, beta));
                v
            })
            .collect();
        let mut e = Echelon::new();
        ubasis = proj.into_iter().filter(|v| e.insert(f, v, &[])).collect();
        pairs.push((x, y));
    }
    Ok((pairs, ubasis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf::make_field;
    use crate::linalg::{vec_from_index, vec_index};

    fn all_vectors(q: u32, n: usize) -> Vec<Vec<Scalar>> {
        (0..(q as u64).pow(n as u32)).map(|i| vec_from_index(q, n, i)).collect()
    }

    fn spaces() -> Vec<FormedSpace> {
        let mut out = Vec::new();
        for (p, e) in [(2, 1), (3, 1), (2, 2), (5, 1), (3, 2)] {
            let fld = make_field(p, e).unwrap();
            for kind in FormKind::all() {
                for n in 1..=4 {
                    if let Ok(s) = FormedSpace::standard(kind, n, &fld) {
                        out.push(s);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn standard_examples() {
        let f2 = make_field(2, 1).unwrap();
        let sp = FormedSpace::standard(FormKind::Symplectic, 2, &f2).unwrap();
        assert_eq!(sp.gram().to_text(), "0 1\n1 0");
        let f3 = make_field(3, 1).unwrap();
        let op = FormedSpace::standard(FormKind::OrthogonalPlus, 2, &f3).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                assert_eq!(op.quad_value(&[x, y]), f3.mul(x, y));
            }
        }
        let om = FormedSpace::standard(FormKind::OrthogonalMinus, 2, &f3).unwrap();
        let zeros = all_vectors(3, 2).into_iter().filter(|v| om.quad_value(v) == 0).count();
        assert_eq!(zeros, 1);
        assert!(FormedSpace::standard(FormKind::Symplectic, 3, &f3).is_err());
        assert!(FormedSpace::standard(FormKind::Unitary, 2, &f3).is_err());
        assert!(FormedSpace::standard(FormKind::OrthogonalOdd, 3, &f2).is_err());
    }

    #[test]
    fn polarization_and_hermitian_symmetry() {
        for s in spaces() {
            let f = s.field().clone();
            let vs = all_vectors(f.q(), s.n());
            if vs.len() > 400 {
                continue;
            }
            for u in &vs {
                for v in &vs {
                    if s.kind().is_orthogonal() {
                        let lhs = s.quad_value(&vec_add(&f, u, v));
                        let rhs = f.add(f.add(s.quad_value(u), s.quad_value(v)), s.form(u, v));
                        assert_eq!(lhs, rhs, "{s:?}");
                    }
                    if s.kind() == FormKind::Unitary {
                        assert_eq!(s.form(u, v), f.theta(s.form(v, u)).unwrap());
                    }
                    if s.kind() == FormKind::Symplectic {
                        assert_eq!(s.form(u, u), 0);
                    }
                }
            }
            if s.kind() != FormKind::Linear {
                assert_eq!(s.gram().rank(&f), s.n(), "{s:?} nondegenerate");
            }
        }
    }

    fn brute_count(s: &FormedSpace, aff: &Affine, target: Scalar) -> u128 {
        let f = s.field();
        all_vectors(f.q(), aff.dim())
            .iter()
            .filter(|y| s.quad_value(&aff.point(f, y)) == target)
            .count() as u128
    }

    #[test]
    fn count_examples() {
        let f3 = make_field(3, 1).unwrap();
        let op = FormedSpace::standard(FormKind::OrthogonalPlus, 2, &f3).unwrap();
        assert_eq!(count_quadric_points(&op, &Affine::full(2), 0).unwrap(), 5);
        let f4 = make_field(2, 2).unwrap();
        let u1 = FormedSpace::standard(FormKind::Unitary, 1, &f4).unwrap();
        assert_eq!(count_quadric_points(&u1, &Affine::full(1), 1).unwrap(), 3);
        let gl = FormedSpace::standard(FormKind::Linear, 3, &f3).unwrap();
        let aff = Affine { base: vec![1, 0, 0], dirs: vec![vec![0, 1, 0]] };
        assert_eq!(count_quadric_points(&gl, &aff, 0).unwrap(), 3);
    }

    #[test]
    fn count_matches_brute_force_on_random_cosets() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for s in spaces() {
            let f = s.field().clone();
            let n = s.n();
            for _ in 0..20 {
                let m = rng.gen_range(0..=n);
                let mut e = Echelon::new();
                let mut dirs = Vec::new();
                while dirs.len() < m {
                    let v: Vec<Scalar> = (0..n).map(|_| rng.gen_range(0..f.q()) as Scalar).collect();
                    if e.insert(&f, &v, &[]) {
                        dirs.push(v);
                    }
                }
                let base: Vec<Scalar> = (0..n).map(|_| rng.gen_range(0..f.q()) as Scalar).collect();
                let aff = Affine { base, dirs };
                for target in f.elements() {
                    assert_eq!(
                        count_quadric_points(&s, &aff, target).unwrap(),
                        brute_count(&s, &aff, target),
                        "{s:?} target {target}"
                    );
                }
            }
        }
    }

    #[test]
    fn coset_histograms_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        for s in spaces() {
            let f = s.field().clone();
            let n = s.n();
            for m in 0..=n {
                let mut e = Echelon::new();
                let mut dirs = Vec::new();
                while dirs.len() < m {
                    let v: Vec<Scalar> = (0..n).map(|_| rng.gen_range(0..f.q()) as Scalar).collect();
                    if e.insert(&f, &v, &[]) {
                        dirs.push(v);
                    }
                }
                let bases: Vec<Vec<Scalar>> =
                    (0..4).map(|_| (0..n).map(|_| rng.gen_range(0..f.q()) as Scalar).collect()).collect();
                let hists = count_quadric_cosets(&s, &dirs, &bases).unwrap();
                for (base, h) in bases.iter().zip(&hists) {
                    let aff = Affine { base: base.clone(), dirs: dirs.clone() };
                    for t in f.elements() {
                        assert_eq!(h[t as usize], brute_count(&s, &aff, t), "{s:?} m={m} t={t}");
                    }
                }
            }
        }
    }

    #[test]
    fn coset_sweep_matches_brute_force() {
        for s in spaces() {
            let f = s.field().clone();
            let n = s.n();
            if f.q().pow(n as u32) > 256 {
                continue;
            }
            let vs = all_vectors(f.q(), n);
            let mut seen = 0usize;
            for_each_coset_count(&s, 2, |c, x, count| {
                let brute = vs
                    .iter()
                    .filter(|v| {
                        c.functionals.iter().zip(c.rhs).all(|(a, &b)| {
                            a.iter().zip(v.iter()).fold(0, |acc, (&p, &r)| f.add(acc, f.mul(p, r))) == b
                        }) && s.quad_value(v) == x
                    })
                    .count() as u128;
                assert_eq!(count, brute, "{s:?} {c:?} target {x}");
                seen += 1;
            })
            .unwrap();
            // codim 0, 1, 2 coset totals times the number of targets
            let q = f.q() as usize;
            let gauss1 = (q.pow(n as u32) - 1) / (q - 1);
            let gauss2 = if n >= 2 { gauss1 * (q.pow(n as u32 - 1) - 1) / (q * q - 1) } else { 0 };
            assert_eq!(seen, (1 + gauss1 * q + gauss2 * q * q) * quadric_targets(&s).len(), "{s:?}");
        }
    }

    #[test]
    fn bound_is_decided_exactly() {
        // orthogonal plus n = 2 over F_3: 5 zeros, |5 − 3| ≤ 3
        assert!(within_quadric_bound(3, 3, 2, 0, 5));
        assert!(within_quadric_bound(3, 3, 2, 0, 6));
        assert!(!within_quadric_bound(3, 3, 2, 0, 7));
        // unitary n = 1 over F_4, target 1: 3 points, |3 − 2| ≤ 2
        assert!(within_quadric_bound(4, 2, 1, 0, 3));
        assert!(!within_quadric_bound(4, 2, 1, 0, 5));
    }

    #[test]
    fn sampler_is_uniform_on_small_quadric() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let f3 = make_field(3, 1).unwrap();
        let op = FormedSpace::standard(FormKind::OrthogonalPlus, 2, &f3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = std::collections::HashMap::new();
        let draws = 100_000;
        for _ in 0..draws {
            let v = sample_quadric_point(&op, &Affine::full(2), 0, &mut rng).unwrap().unwrap();
            assert_eq!(op.quad_value(&v), 0);
            *counts.entry(vec_index(3, &v)).or_insert(0u64) += 1;
        }
        assert_eq!(counts.len(), 5);
        let exp = draws as f64 / 5.0;
        let chi: f64 = counts.values().map(|&c| (c as f64 - exp).powi(2) / exp).sum();
        let p = 1.0 - ChiSquared::new(4.0).unwrap().cdf(chi);
        assert!(p > 1e-3, "chi-square p = {p}");
        let om = FormedSpace::standard(FormKind::OrthogonalMinus, 2, &f3).unwrap();
        let aff = Affine { base: vec![0, 0], dirs: vec![vec![1, 0]] };
        // Q(x, 0) = x^2 never equals the nonsquare 2
        assert!(sample_quadric_point(&om, &aff, 2, &mut rng).unwrap().is_none());
    }

    #[test]
    fn witt_decomposition_shapes() {
        for s in spaces() {
            if s.kind() == FormKind::Linear {
                continue;
            }
            let (pairs, an) = witt_decompose(&s).unwrap();
            assert_eq!(2 * pairs.len() + an.len(), s.n());
            assert!(an.len() <= 2);
            assert_eq!(pairs.len(), s.standard_pairs(), "{s:?}");
            for (e, fv) in &pairs {
                assert_eq!(s.quad_value(e), 0);
                assert_eq!(s.quad_value(fv), 0);
                assert_eq!(s.form(e, fv), 1);
                for (e2, f2) in &pairs {
                    if e2 != e {
                        assert_eq!(s.form(e, e2), 0);
                        assert_eq!(s.form(e, f2), 0);
                        assert_eq!(s.form(fv, f2), 0);
                    }
                }
                for a in &an {
                    assert_eq!(s.form(e, a), 0);
                    assert_eq!(s.form(fv, a), 0);
                }
            }
        }
    }

    #[test]
    fn extend_isometry_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f3 = make_field(3, 1).unwrap();
        let gl = FormedSpace::standard(FormKind::Linear, 3, &f3).unwrap();
        let basis: Vec<_> = (0..3).map(|i| (unit_vec(3, i), unit_vec(3, i))).collect();
        assert!(extend_isometry(&gl, &basis, false, &mut rng).unwrap().is_identity());
        let g = extend_isometry(&gl, &[(unit_vec(3, 0), unit_vec(3, 1))], true, &mut rng).unwrap();
        assert_eq!(g.det(&f3), 1);
        assert_eq!(g.col(0), unit_vec(3, 1));
        let f2 = make_field(2, 1).unwrap();
        let sp = FormedSpace::standard(FormKind::Symplectic, 2, &f2).unwrap();
        let g = extend_isometry(&sp, &[(vec![1, 0], vec![0, 1])], false, &mut rng).unwrap();
        assert!(sp.is_isometry(&g));
        assert_eq!(g.col(0), vec![0, 1]);
        // mismatched Q is rejected
        let op = FormedSpace::standard(FormKind::OrthogonalPlus, 2, &f3).unwrap();
        assert!(extend_isometry(&op, &[(vec![1, 0], vec![1, 1])], false, &mut rng).is_err());
    }

    #[test]
    fn special_extension_needs_a_large_enough_stabilizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f3 = make_field(3, 1).unwrap();
        let op = FormedSpace::standard(FormKind::OrthogonalPlus, 4, &f3).unwrap();
        let id = AbelianInvariant::identity(&op);
        // a maximal totally singular plane moved by a reflection: every
        // extension has the reflection's invariant
        let us = [unit_vec(4, 0), unit_vec(4, 2)];
        let r = reflection(&op, &[1, 1, 0, 0]);
        let pairs: Vec<_> = us.iter().map(|u| (u.clone(), r.mul_vec(&f3, u))).collect();
        assert!(matches!(extend_isometry(&op, &pairs, true, &mut rng), Err(Error::Witt(_))));
        let g = extend_isometry(&op, &pairs, false, &mut rng).unwrap();
        assert_ne!(abelian_invariant(&op, &g).unwrap(), id);
        // a nonsingular vector leaves room for every correction
        let u = vec![1, 1, 0, 0];
        for _ in 0..50 {
            let v = r.mul_vec(&f3, &unit_vec(4, 0));
            let pairs = vec![(unit_vec(4, 0), v), (u.clone(), r.mul_vec(&f3, &u))];
            let g = extend_isometry(&op, &pairs[..1], true, &mut rng).unwrap();
            assert_eq!(abelian_invariant(&op, &g).unwrap(), id);
            assert_eq!(g.mul_vec(&f3, &pairs[0].0), pairs[0].1);
        }
        // unitary: a totally isotropic half-space of GU(4, 4)
        let f4 = make_field(2, 2).unwrap();
        let gu = FormedSpace::standard(FormKind::Unitary, 4, &f4).unwrap();
        let mut d = Matrix::identity(4);
        let lam = f4.elements().find(|&x| x != 1 && f4.mul(x, f4.theta_or_id(x)) == 1).unwrap();
        d.set(0, 0, lam);
        d.set(1, 1, f4.inv(f4.theta_or_id(lam)));
        assert!(gu.is_isometry(&d));
        let pairs: Vec<_> = [unit_vec(4, 0), unit_vec(4, 2)].iter().map(|u| (u.clone(), d.mul_vec(&f4, u))).collect();
        assert!(extend_isometry(&gu, &pairs, true, &mut rng).is_err());
        let g = extend_isometry(&gu, &pairs[1..], true, &mut rng).unwrap();
        assert_eq!(g.det(&f4), 1);
    }

    #[test]
    fn dickson_swap_and_reflections() {
        let f2 = make_field(2, 1).unwrap();
        let op = FormedSpace::standard(FormKind::OrthogonalPlus, 2, &f2).unwrap();
        let swap = Matrix::from_rows(&[vec![0, 1], vec![1, 0]]);
        assert_eq!(abelian_invariant(&op, &swap).unwrap(), AbelianInvariant::Dickson(true));
        assert_eq!(abelian_invariant(&op, &Matrix::identity(2)).unwrap(), AbelianInvariant::Dickson(false));
        let f3 = make_field(3, 1).unwrap();
        let o3 = FormedSpace::standard(FormKind::OrthogonalOdd, 3, &f3).unwrap();
        for v in all_vectors(3, 3) {
            let qv = o3.quad_value(&v);
            if qv == 0 {
                continue;
            }
            let r = reflection(&o3, &v);
            assert!(o3.is_isometry(&r));
            assert_eq!(
                abelian_invariant(&o3, &r).unwrap(),
                AbelianInvariant::Orth { det_minus: true, sn_nonsquare: !f3.is_square(qv) }
            );
        }
    }

    #[test]
    fn hyperbolic_diagonal_spinor_norm() {
        let f5 = make_field(5, 1).unwrap();
        let op = FormedSpace::standard(FormKind::OrthogonalPlus, 2, &f5).unwrap();
        for a in 1..5u16 {
            let g = Matrix::diag(&[a, f5.inv(a)]);
            assert_eq!(
                abelian_invariant(&op, &g).unwrap(),
                AbelianInvariant::Orth { det_minus: false, sn_nonsquare: !f5.is_square(a) }
            );
        }
    }

    #[test]
    fn invariant_literals_roundtrip() {
        for s in spaces() {
            for inv in AbelianInvariant::group_elements(&s) {
                assert_eq!(AbelianInvariant::parse_literal(&s, &inv.to_literal()).unwrap(), inv);
            }
        }
    }
}
