//! Forward path enumeration on a dense truncated exponent grid.
//!
//! The state vector after `n` sections holds, per state, the enumerator of
//! all paths from the start state. One section is a vector-matrix product
//! with the transfer matrix; each branch shifts a grid by its exponent
//! tuple. Counts are tracked modulo several primes just below `2^63` and
//! recombined with the Chinese remainder theorem, so results are exact as
//! long as the prime product exceeds the number of paths.

use num_bigint::BigUint;
use num_traits::Zero;
use rayon::prelude::*;

use super::{Caps, TransferMatrix, WeightEnumerator, MAX_VARS};
use crate::trellis::Termination;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Boundary {
    Terminated,
    Tailbiting,
}

const NO_ROW: u32 = u32::MAX;

/// Truncated exponent grid. Rows are indexed by all exponents but the last
/// and stored in lexicographic order; each row is contiguous in the last
/// exponent.
struct Grid {
    d: usize,
    total: u32,
    /// Dense lookup over the prefix space.
    row_of: Vec<u32>,
    prefix_dims: [usize; 2],
    row_start: Vec<usize>,
    row_len: Vec<u32>,
    row_prefix: Vec<[u32; 2]>,
    row_sum: Vec<u32>,
    cells: usize,
}

impl Grid {
    fn new(d: usize, caps: [u32; MAX_VARS], total: u32) -> Grid {
        let dims = [
            if d >= 2 { caps[0] as usize + 1 } else { 1 },
            if d >= 3 { caps[1] as usize + 1 } else { 1 },
        ];
        let mut g = Grid {
            d,
            total,
            row_of: vec![NO_ROW; dims[0] * dims[1]],
            prefix_dims: dims,
            row_start: Vec::new(),
            row_len: Vec::new(),
            row_prefix: Vec::new(),
            row_sum: Vec::new(),
            cells: 0,
        };
        let last = caps[d - 1];
        for a in 0..dims[0] as u32 {
            for b in 0..dims[1] as u32 {
                let sum = a + b;
                if sum > total {
                    continue;
                }
                let len = last.min(total - sum) + 1;
                g.row_of[a as usize * dims[1] + b as usize] = g.row_start.len() as u32;
                g.row_start.push(g.cells);
                g.row_len.push(len);
                g.row_prefix.push([a, b]);
                g.row_sum.push(sum);
                g.cells += len as usize;
            }
        }
        g
    }

    fn rows(&self) -> usize {
        self.row_start.len()
    }

    /// Row holding the prefix shifted back by `delta`, if inside the grid.
    #[inline]
    fn source_row(&self, row: usize, delta: &[u32; MAX_VARS]) -> Option<usize> {
        let [a, b] = self.row_prefix[row];
        let (da, db) = match self.d {
            1 => (0, 0),
            2 => (delta[0], 0),
            _ => (delta[0], delta[1]),
        };
        if a < da || b < db {
            return None;
        }
        let idx = (a - da) as usize * self.prefix_dims[1] + (b - db) as usize;
        match self.row_of[idx] {
            NO_ROW => None,
            r => Some(r as usize),
        }
    }

    fn exponents(&self, row: usize, x: u32) -> [u32; MAX_VARS] {
        let [a, b] = self.row_prefix[row];
        match self.d {
            1 => [x, 0, 0],
            2 => [a, x, 0],
            _ => [a, b, x],
        }
    }
}

fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

fn pow_mod(mut a: u64, mut e: u64, p: u64) -> u64 {
    let mut r = 1u64;
    a %= p;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, a, p);
        }
        a = mul_mod(a, a, p);
        e >>= 1;
    }
    r
}

/// Deterministic Miller-Rabin for 64-bit integers.
fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &b in &BASES {
        if n % b == 0 {
            return n == b;
        }
    }
    let (mut d, mut s) = (n - 1, 0);
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// The `count` largest primes below `2^63`, descending.
fn primes_below_2_63(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut n = (1u64 << 63) - 1;
    while out.len() < count {
        if is_prime(n) {
            out.push(n);
        }
        n -= 2;
    }
    out
}

/// Number of CRT primes needed for `sections` sections of `m`.
pub fn crt_prime_count(m: &TransferMatrix, sections: usize, mode: Termination) -> usize {
    let s = m.states();
    let mut out_degree = vec![0usize; s];
    for (from, _, _) in m.branches() {
        out_degree[*from] += 1;
    }
    let max_deg = out_degree.into_iter().max().unwrap_or(1).max(1);
    let per_section = (max_deg as f64).log2();
    let start_bits = match mode {
        Termination::Terminated => 0.0,
        Termination::Tailbiting => (s as f64).log2(),
    };
    let bits = (sections as f64 * per_section + start_bits).ceil() as usize + 2;
    bits.div_ceil(62).max(1)
}

struct Incoming {
    from: usize,
    delta: [u32; MAX_VARS],
}

fn run_mod(
    grid: &Grid,
    incoming: &[Vec<Incoming>],
    states: usize,
    sections: usize,
    step_total: u32,
    start: usize,
    p: u64,
) -> Vec<u64> {
    let mut cur = vec![vec![0u64; grid.cells]; states];
    let mut next = vec![vec![0u64; grid.cells]; states];
    cur[start][0] = 1;
    let last = grid.d - 1;
    for step in 0..sections {
        let reach = grid
            .total
            .min(((step + 1) as u64 * u64::from(step_total)).min(u64::from(u32::MAX)) as u32);
        for (c, target) in next.iter_mut().enumerate() {
            for row in 0..grid.rows() {
                let base = grid.row_start[row];
                let len = grid.row_len[row] as usize;
                let out = &mut target[base..base + len];
                out.fill(0);
                if grid.row_sum[row] > reach {
                    continue;
                }
                let hi = len.min((reach - grid.row_sum[row]) as usize + 1);
                for inc in &incoming[c] {
                    let Some(src_row) = grid.source_row(row, &inc.delta) else {
                        continue;
                    };
                    let shift = inc.delta[last] as usize;
                    if shift >= hi {
                        continue;
                    }
                    let src_base = grid.row_start[src_row];
                    let src = &cur[inc.from][src_base..src_base + hi - shift];
                    for (o, s) in out[shift..hi].iter_mut().zip(src) {
                        let sum = *o + *s;
                        *o = sum.min(sum.wrapping_sub(p));
                    }
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    match states {
        0 => Vec::new(),
        _ => std::mem::take(&mut cur[start]),
    }
}

/// Garner mixed-radix reconstruction of one residue vector.
struct Crt {
    primes: Vec<u64>,
    inv: Vec<Vec<u64>>,
}

impl Crt {
    fn new(primes: Vec<u64>) -> Crt {
        let m = primes.len();
        let mut inv = vec![vec![0u64; m]; m];
        for i in 0..m {
            for j in i + 1..m {
                inv[i][j] = pow_mod(primes[i] % primes[j], primes[j] - 2, primes[j]);
            }
        }
        Crt { primes, inv }
    }

    fn combine(&self, residues: &[u64], digits: &mut [u64]) -> BigUint {
        let m = self.primes.len();
        for j in 0..m {
            let pj = self.primes[j];
            let mut t = residues[j] % pj;
            for i in 0..j {
                let xi = digits[i] % pj;
                t = if t >= xi { t - xi } else { t + pj - xi };
                t = mul_mod(t, self.inv[i][j], pj);
            }
            digits[j] = t;
        }
        let mut v = BigUint::from(digits[m - 1]);
        for j in (0..m - 1).rev() {
            v *= self.primes[j];
            v += digits[j];
        }
        v
    }
}

pub(crate) fn forward_enumerate(
    m: &TransferMatrix,
    sections: usize,
    caps: &Caps,
    boundary: Boundary,
) -> WeightEnumerator {
    let d = m.vars();
    assert_eq!(caps.per_var.len(), d);
    let (step_per, step_total) = m.max_step();
    let n = sections as u64;
    let clamp = |cap: u32, structural: u64| -> u32 { u64::from(cap).min(structural) as u32 };
    let total = clamp(caps.total, n * u64::from(step_total));
    let mut eff = [0u32; MAX_VARS];
    for v in 0..d {
        eff[v] = clamp(caps.per_var[v], n * u64::from(step_per[v])).min(total);
    }
    let grid = Grid::new(d, eff, total);

    let states = m.states();
    let mut incoming: Vec<Vec<Incoming>> = (0..states).map(|_| Vec::new()).collect();
    for (from, to, delta) in m.branches() {
        incoming[*to].push(Incoming {
            from: *from,
            delta: *delta,
        });
    }
    let mode = match boundary {
        Boundary::Terminated => Termination::Terminated,
        Boundary::Tailbiting => Termination::Tailbiting,
    };
    let primes = primes_below_2_63(crt_prime_count(m, sections, mode));
    let starts: Vec<usize> = match boundary {
        Boundary::Terminated => vec![0],
        Boundary::Tailbiting => (0..states).collect(),
    };

    let one_run_bytes = grid.cells * states * 16;
    let parallel = one_run_bytes * rayon::current_num_threads() < (1 << 31);
    let residues_for = |p: u64| -> Vec<u64> {
        let mut acc = vec![0u64; grid.cells];
        for &s in &starts {
            let r = run_mod(&grid, &incoming, states, sections, step_total, s, p);
            for (a, b) in acc.iter_mut().zip(r) {
                let sum = *a + b;
                *a = sum.min(sum.wrapping_sub(p));
            }
        }
        acc
    };
    let residues: Vec<Vec<u64>> = if parallel {
        primes.par_iter().map(|&p| residues_for(p)).collect()
    } else {
        primes.iter().map(|&p| residues_for(p)).collect()
    };

    let crt = Crt::new(primes);
    let mut exponents = Vec::new();
    let mut coefficients = Vec::new();
    let mut buf = vec![0u64; residues.len()];
    let mut digits = vec![0u64; residues.len()];
    for row in 0..grid.rows() {
        let base = grid.row_start[row];
        for x in 0..grid.row_len[row] {
            let cell = base + x as usize;
            for (b, r) in buf.iter_mut().zip(&residues) {
                *b = r[cell];
            }
            if buf.iter().all(|&r| r == 0) {
                continue;
            }
            let e = grid.exponents(row, x);
            if !caps.admits(&e[..d]) {
                continue;
            }
            let value = crt.combine(&buf, &mut digits);
            debug_assert!(!value.is_zero());
            exponents.extend_from_slice(&e[..d]);
            coefficients.push(value);
        }
    }
    WeightEnumerator::from_sorted_parts(m.labels().to_vec(), caps.clone(), exponents, coefficients)
}
