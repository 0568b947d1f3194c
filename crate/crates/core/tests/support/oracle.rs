#![allow(dead_code)]
//! Cayley-graph diameters by plain enumeration over a prime field, sharing
//! no code with the library: matrices are flat `Vec<u8>` reduced mod p.

use std::collections::{HashMap, VecDeque};

pub struct Case {
    pub name: &'static str,
    pub group: &'static str,
    pub p: u32,
    pub n: usize,
    pub order: u64,
    pub generators: Vec<Vec<u8>>,
}

fn mul(p: u32, n: usize, a: &[u8], b: &[u8]) -> Vec<u8> {
    let mut c = vec![0u8; n * n];
    for i in 0..n {
        for j in 0..n {
            let s: u32 = (0..n).map(|k| a[i * n + k] as u32 * b[k * n + j] as u32).sum();
            c[i * n + j] = (s % p) as u8;
        }
    }
    c
}

fn identity(n: usize) -> Vec<u8> {
    (0..n * n).map(|i| u8::from(i / n == i % n)).collect()
}

/// Inverse as the last element of the cyclic group generated by `a`.
fn inverse(p: u32, n: usize, a: &[u8]) -> Vec<u8> {
    let id = identity(n);
    let mut prev = id.clone();
    let mut cur = a.to_vec();
    while cur != id {
        prev = cur.clone();
        cur = mul(p, n, &cur, a);
    }
    prev
}

/// Symplectic transvection `x ↦ x + f(x, v) v` for the form with
/// `f(e_i, f_i) = 1 = −f(f_i, e_i)` on the pairs `(2i, 2i+1)`.
fn sp_transvection(p: u32, n: usize, v: &[u32]) -> Vec<u8> {
    // f(x, v) = Σ_i x_{2i} v_{2i+1} − x_{2i+1} v_{2i}
    let mut m = identity(n);
    for col in 0..n {
        let fx = if col % 2 == 0 { v[col + 1] } else { (p - v[col - 1]) % p };
        for row in 0..n {
            let add = fx * v[row] % p;
            m[row * n + col] = ((m[row * n + col] as u32 + add) % p) as u8;
        }
    }
    m
}

fn rows(x: &[&[u8]]) -> Vec<u8> {
    x.iter().flat_map(|r| r.iter().copied()).collect()
}

pub fn cases() -> Vec<Case> {
    let upper = rows(&[&[1, 1], &[0, 1]]);
    let lower = rows(&[&[1, 0], &[1, 1]]);
    vec![
        Case { name: "sl2_3", group: "SL(2,3)", p: 3, n: 2, order: 24, generators: vec![upper.clone(), lower.clone()] },
        Case { name: "sl2_5", group: "SL(2,5)", p: 5, n: 2, order: 120, generators: vec![upper.clone(), lower.clone()] },
        Case { name: "sl2_7", group: "SL(2,7)", p: 7, n: 2, order: 336, generators: vec![upper, lower] },
        Case {
            name: "gl3_2",
            group: "GL(3,2)",
            p: 2,
            n: 3,
            order: 168,
            generators: vec![rows(&[&[1, 1, 0], &[0, 1, 0], &[0, 0, 1]]), rows(&[&[0, 0, 1], &[1, 0, 1], &[0, 1, 0]])],
        },
        Case {
            name: "sl3_3",
            group: "SL(3,3)",
            p: 3,
            n: 3,
            order: 5616,
            generators: vec![rows(&[&[1, 1, 0], &[0, 1, 0], &[0, 0, 1]]), rows(&[&[0, 0, 1], &[1, 0, 0], &[0, 1, 0]])],
        },
        Case {
            name: "sp4_3",
            group: "Sp(4,3)",
            p: 3,
            n: 4,
            order: 51840,
            generators: vec![
                sp_transvection(3, 4, &[1, 0, 0, 0]),
                sp_transvection(3, 4, &[0, 1, 0, 0]),
                sp_transvection(3, 4, &[0, 1, 1, 0]),
                sp_transvection(3, 4, &[0, 0, 0, 1]),
            ],
        },
    ]
}

/// Returns `(reached, eccentricity of the identity)` with the generating set
/// closed under inverses.
pub fn cayley_bfs(c: &Case) -> (u64, u32) {
    let mut sym = c.generators.clone();
    for g in &c.generators {
        sym.push(inverse(c.p, c.n, g));
    }
    let id = identity(c.n);
    let mut dist: HashMap<Vec<u8>, u32> = HashMap::new();
    dist.insert(id.clone(), 0);
    let mut queue = VecDeque::from([id]);
    let mut ecc = 0;
    while let Some(g) = queue.pop_front() {
        let d = dist[&g];
        ecc = ecc.max(d);
        for s in &sym {
            let h = mul(c.p, c.n, &g, s);
            if !dist.contains_key(&h) {
                dist.insert(h.clone(), d + 1);
                queue.push_back(h);
            }
        }
    }
    (dist.len() as u64, ecc)
}

/// Rows of a flat matrix as the library's text format.
pub fn to_text(n: usize, m: &[u8]) -> String {
    m.chunks(n).map(|r| r.iter().map(u8::to_string).collect::<Vec<_>>().join(" ")).collect::<Vec<_>>().join("\n")
}

pub fn golden_json(c: &Case, diameter: u32) -> String {
    let gens: Vec<String> = c.generators.iter().map(|g| to_text(c.n, g)).collect();
    let v = serde_json::json!({
        "group": c.group,
        "order": c.order,
        "generators": gens,
        "diameter": diameter,
    });
    serde_json::to_string_pretty(&v).expect("json") + "\n"
}
