//! Dense GF(2) vectors and homogeneous linear systems.

use std::fmt;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVec {
    words: Vec<u64>,
    len: usize,
}

impl BitVec {
    pub fn zeros(len: usize) -> BitVec {
        BitVec {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn unit(len: usize, i: usize) -> BitVec {
        let mut v = BitVec::zeros(len);
        v.set(i, true);
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        let mask = 1u64 << (i % 64);
        if bit {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn xor_assign(&mut self, other: &BitVec) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Parity of the bitwise AND.
    pub fn dot(&self, other: &BitVec) -> bool {
        self.words
            .iter()
            .zip(&other.words)
            .fold(0u32, |acc, (a, b)| acc ^ (a & b).count_ones())
            & 1
            == 1
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(k, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(k * 64 + b)
            })
        })
    }

    pub fn to_bits(&self) -> Vec<u8> {
        (0..self.len).map(|i| u8::from(self.get(i))).collect()
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Reduced row echelon form of a homogeneous system `H x = 0`.
#[derive(Clone, Debug)]
pub struct Echelon {
    vars: usize,
    /// `(pivot variable, row)`; the row has no other pivot variables set.
    pivots: Vec<(usize, BitVec)>,
    is_pivot: Vec<bool>,
}

impl Echelon {
    /// Eliminates `rows`, choosing pivot variables in `priority` order
    /// (variables not listed come last in index order).
    pub fn new(vars: usize, rows: Vec<BitVec>, priority: &[usize]) -> Echelon {
        let mut order: Vec<usize> = Vec::with_capacity(vars);
        let mut listed = vec![false; vars];
        for &v in priority {
            if !listed[v] {
                listed[v] = true;
                order.push(v);
            }
        }
        order.extend((0..vars).filter(|&v| !listed[v]));
        let mut rows: Vec<BitVec> = rows.into_iter().filter(|r| !r.is_zero()).collect();
        let mut pivots: Vec<(usize, BitVec)> = Vec::new();
        let mut is_pivot = vec![false; vars];
        for v in order {
            let Some(k) = rows.iter().position(|r| r.get(v)) else {
                continue;
            };
            let row = rows.swap_remove(k);
            for r in rows.iter_mut() {
                if r.get(v) {
                    r.xor_assign(&row);
                }
            }
            for (_, r) in pivots.iter_mut() {
                if r.get(v) {
                    r.xor_assign(&row);
                }
            }
            rows.retain(|r| !r.is_zero());
            is_pivot[v] = true;
            pivots.push((v, row));
            if rows.is_empty() {
                break;
            }
        }
        Echelon {
            vars,
            pivots,
            is_pivot,
        }
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn is_pivot(&self, v: usize) -> bool {
        self.is_pivot[v]
    }

    pub fn free_vars(&self) -> Vec<usize> {
        (0..self.vars).filter(|&v| !self.is_pivot[v]).collect()
    }

    /// Completes an assignment: free variables keep their values in `x`,
    /// pivot variables are overwritten so that every equation holds.
    pub fn complete(&self, x: &mut BitVec) {
        for (v, _) in &self.pivots {
            x.set(*v, false);
        }
        let values: Vec<(usize, bool)> = self
            .pivots
            .iter()
            .map(|(v, row)| (*v, row.dot(x)))
            .collect();
        for (v, b) in values {
            x.set(v, b);
        }
    }

    /// One kernel vector per free variable.
    pub fn kernel_basis(&self) -> Vec<BitVec> {
        self.free_vars()
            .into_iter()
            .map(|f| {
                let mut x = BitVec::unit(self.vars, f);
                self.complete(&mut x);
                x
            })
            .collect()
    }
}
