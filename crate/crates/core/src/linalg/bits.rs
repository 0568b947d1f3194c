//! Bit-packed matrices over F_2: one row per `Vec<u64>` chunk, XOR elimination.

use super::Matrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct BitMatrix {
    n: usize,
    words: usize,
    rows: Vec<u64>,
}

impl BitMatrix {
    pub fn zero(n: usize) -> BitMatrix {
        let words = n.div_ceil(64).max(1);
        BitMatrix { n, words, rows: vec![0; n * words] }
    }

    pub fn identity(n: usize) -> BitMatrix {
        let mut m = BitMatrix::zero(n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u64] {
        &self.rows[i * self.words..(i + 1) * self.words]
    }

    #[inline]
    fn row_mut(&mut self, i: usize) -> &mut [u64] {
        &mut self.rows[i * self.words..(i + 1) * self.words]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.rows[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        let w = &mut self.rows[i * self.words + j / 64];
        if v {
            *w |= 1 << (j % 64);
        } else {
            *w &= !(1 << (j % 64));
        }
    }

    /// Row i as a single word (n ≤ 64 only).
    #[inline]
    pub fn row_word(&self, i: usize) -> u64 {
        self.rows[i]
    }

    pub fn from_matrix(m: &Matrix) -> BitMatrix {
        assert_eq!(m.rows(), m.cols());
        let n = m.rows();
        let mut b = BitMatrix::zero(n);
        for i in 0..n {
            for j in 0..n {
                if m.get(i, j) & 1 == 1 {
                    b.set(i, j, true);
                }
            }
        }
        b
    }

    pub fn to_matrix(&self) -> Matrix {
        let mut m = Matrix::zero(self.n, self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                if self.get(i, j) {
                    m.set(i, j, 1);
                }
            }
        }
        m
    }

    pub fn mul(&self, o: &BitMatrix) -> BitMatrix {
        assert_eq!(self.n, o.n);
        let mut out = BitMatrix::zero(self.n);
        let w = self.words;
        for i in 0..self.n {
            let mut acc = vec![0u64; w];
            for (k, word) in self.row(i).iter().enumerate() {
                let mut bits = *word;
                while bits != 0 {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    let src = o.row(k * 64 + b);
                    for (a, s) in acc.iter_mut().zip(src) {
                        *a ^= s;
                    }
                }
            }
            out.row_mut(i).copy_from_slice(&acc);
        }
        out
    }

    /// Matrix-vector product for n ≤ 64, vector packed into one word.
    #[inline]
    pub fn mul_word(&self, v: u64) -> u64 {
        let mut out = 0u64;
        for i in 0..self.n {
            out |= (((self.rows[i] & v).count_ones() & 1) as u64) << i;
        }
        out
    }

    pub fn pow(&self, mut k: u64) -> BitMatrix {
        let mut acc = BitMatrix::identity(self.n);
        let mut b = self.clone();
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&b);
            }
            k >>= 1;
            if k > 0 {
                b = b.mul(&b);
            }
        }
        acc
    }

    /// self + identity, i.e. g - 1 in characteristic 2.
    pub fn plus_identity(&self) -> BitMatrix {
        let mut m = self.clone();
        for i in 0..self.n {
            let v = m.get(i, i);
            m.set(i, i, !v);
        }
        m
    }

    pub fn is_identity(&self) -> bool {
        *self == BitMatrix::identity(self.n)
    }

    pub fn rank(&self) -> usize {
        let mut rows: Vec<Vec<u64>> = (0..self.n).map(|i| self.row(i).to_vec()).collect();
        let mut rank = 0;
        for col in 0..self.n {
            let (w, b) = (col / 64, col % 64);
            let Some(p) = (rank..rows.len()).find(|&r| rows[r][w] >> b & 1 == 1) else {
                continue;
            };
            rows.swap(rank, p);
            let pivot = rows[rank].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank && row[w] >> b & 1 == 1 {
                    for (x, y) in row.iter_mut().zip(&pivot) {
                        *x ^= y;
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    pub fn inverse(&self) -> Option<BitMatrix> {
        let n = self.n;
        let mut a: Vec<Vec<u64>> = (0..n).map(|i| self.row(i).to_vec()).collect();
        let mut inv: Vec<Vec<u64>> = (0..n).map(|i| BitMatrix::identity(n).row(i).to_vec()).collect();
        for col in 0..n {
            let (w, b) = (col / 64, col % 64);
            let p = (col..n).find(|&r| a[r][w] >> b & 1 == 1)?;
            a.swap(col, p);
            inv.swap(col, p);
            let (pa, pi) = (a[col].clone(), inv[col].clone());
            for r in 0..n {
                if r != col && a[r][w] >> b & 1 == 1 {
                    for (x, y) in a[r].iter_mut().zip(&pa) {
                        *x ^= y;
                    }
                    for (x, y) in inv[r].iter_mut().zip(&pi) {
                        *x ^= y;
                    }
                }
            }
        }
        let mut out = BitMatrix::zero(n);
        for (i, r) in inv.iter().enumerate() {
            out.row_mut(i).copy_from_slice(r);
        }
        Some(out)
    }

    /// Packed rows, for hashing and orbit keys.
    pub fn words(&self) -> &[u64] {
        &self.rows
    }
}
