//! Exact multivariate weight enumerators and their transfer-matrix
//! computation.
//!
//! A [`WeightEnumerator`] counts trellis paths by the Hamming weight they
//! place on each enumerator variable. Coefficients are exact big integers.
//! Truncation drops terms above the per-variable caps or the total-weight
//! cap; since exponents only grow along a path, every retained coefficient is
//! the exact untruncated count.

mod cache;
mod dense;

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::trellis::{Termination, Trellis};
use crate::{Error, Result};

pub use cache::{compact_generator, read_cache, write_cache, WefCacheHeader};
pub use dense::crt_prime_count;

/// Maximum number of enumerator variables.
pub const MAX_VARS: usize = 3;

/// Marker for an absent cap.
pub const UNCAPPED: u32 = u32::MAX;

/// Per-variable and total-weight truncation caps.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Caps {
    pub per_var: Vec<u32>,
    pub total: u32,
}

impl Caps {
    pub fn none(vars: usize) -> Caps {
        Caps {
            per_var: vec![UNCAPPED; vars],
            total: UNCAPPED,
        }
    }

    pub fn total(vars: usize, total: u32) -> Caps {
        Caps {
            per_var: vec![UNCAPPED; vars],
            total,
        }
    }

    pub fn with_var(mut self, var: usize, cap: u32) -> Caps {
        self.per_var[var] = cap;
        self
    }

    pub fn admits(&self, exps: &[u32]) -> bool {
        let mut sum = 0u64;
        for (e, c) in exps.iter().zip(&self.per_var) {
            if *e > *c {
                return false;
            }
            sum += u64::from(*e);
        }
        sum <= u64::from(self.total)
    }

    /// True if every monomial admitted by `other` is admitted by `self`.
    pub fn covers(&self, other: &Caps) -> bool {
        self.total >= other.total
            && self
                .per_var
                .iter()
                .zip(&other.per_var)
                .all(|(a, b)| a >= b)
    }

    /// Componentwise minimum.
    pub fn intersect(&self, other: &Caps) -> Caps {
        Caps {
            per_var: self
                .per_var
                .iter()
                .zip(&other.per_var)
                .map(|(a, b)| *a.min(b))
                .collect(),
            total: self.total.min(other.total),
        }
    }
}

impl fmt::Display for Caps {
    /// `c0,c1,...;total` with `inf` for absent caps.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |c: u32| {
            if c == UNCAPPED {
                "inf".to_string()
            } else {
                c.to_string()
            }
        };
        let vars: Vec<String> = self.per_var.iter().map(|&c| show(c)).collect();
        write!(f, "{};{}", vars.join(","), show(self.total))
    }
}

impl std::str::FromStr for Caps {
    type Err = Error;

    fn from_str(s: &str) -> Result<Caps> {
        let parse = |t: &str| -> Result<u32> {
            if t == "inf" {
                Ok(UNCAPPED)
            } else {
                t.parse()
                    .map_err(|_| Error::Parse(format!("bad cap `{t}`")))
            }
        };
        let (vars, total) = s
            .split_once(';')
            .ok_or_else(|| Error::Parse(format!("bad caps `{s}`")))?;
        Ok(Caps {
            per_var: vars.split(',').map(parse).collect::<Result<_>>()?,
            total: parse(total)?,
        })
    }
}

/// Sparse multivariate polynomial with nonnegative big-integer coefficients.
///
/// Terms are kept sorted lexicographically by exponent tuple; no stored
/// coefficient is zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightEnumerator {
    labels: Vec<String>,
    caps: Caps,
    exponents: Vec<u32>,
    coefficients: Vec<BigUint>,
}

impl WeightEnumerator {
    /// The zero polynomial.
    pub fn zero(labels: &[&str], caps: Caps) -> WeightEnumerator {
        assert!(!labels.is_empty() && labels.len() <= MAX_VARS);
        assert_eq!(caps.per_var.len(), labels.len());
        WeightEnumerator {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            caps,
            exponents: Vec::new(),
            coefficients: Vec::new(),
        }
    }

    /// The constant polynomial 1.
    pub fn one(labels: &[&str]) -> WeightEnumerator {
        let mut w = WeightEnumerator::zero(labels, Caps::none(labels.len()));
        w.exponents = vec![0; labels.len()];
        w.coefficients = vec![BigUint::one()];
        w
    }

    /// Builds a polynomial from arbitrary terms, merging duplicates and
    /// dropping zero or capped terms.
    pub fn from_terms<I>(labels: &[&str], caps: Caps, terms: I) -> WeightEnumerator
    where
        I: IntoIterator<Item = (Vec<u32>, BigUint)>,
    {
        let mut map: BTreeMap<Vec<u32>, BigUint> = BTreeMap::new();
        for (e, c) in terms {
            assert_eq!(e.len(), labels.len());
            if c.is_zero() || !caps.admits(&e) {
                continue;
            }
            *map.entry(e).or_default() += c;
        }
        let mut w = WeightEnumerator::zero(labels, caps);
        for (e, c) in map {
            w.exponents.extend_from_slice(&e);
            w.coefficients.push(c);
        }
        w
    }

    /// Builds from terms already sorted, unique and nonzero.
    pub(crate) fn from_sorted_parts(
        labels: Vec<String>,
        caps: Caps,
        exponents: Vec<u32>,
        coefficients: Vec<BigUint>,
    ) -> WeightEnumerator {
        debug_assert_eq!(exponents.len(), coefficients.len() * labels.len());
        WeightEnumerator {
            labels,
            caps,
            exponents,
            coefficients,
        }
    }

    pub fn vars(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn caps(&self) -> &Caps {
        &self.caps
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], &BigUint)> {
        self.exponents
            .chunks_exact(self.labels.len())
            .zip(&self.coefficients)
    }

    /// Coefficient of a monomial, zero if absent.
    pub fn coefficient(&self, exps: &[u32]) -> BigUint {
        self.find(exps)
            .map(|i| self.coefficients[i].clone())
            .unwrap_or_default()
    }

    fn find(&self, exps: &[u32]) -> Option<usize> {
        let d = self.labels.len();
        let (mut lo, mut hi) = (0, self.coefficients.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.exponents[mid * d..(mid + 1) * d].cmp(exps) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    /// Sum of all coefficients.
    pub fn total_mass(&self) -> BigUint {
        self.coefficients.iter().sum()
    }

    /// Drops terms outside `caps` and records the tighter caps.
    pub fn truncate(&self, caps: &Caps) -> WeightEnumerator {
        let caps = self.caps.intersect(caps);
        let d = self.vars();
        let mut out = WeightEnumerator::zero(&self.label_refs(), caps.clone());
        for (e, c) in self.terms() {
            if caps.admits(e) {
                out.exponents.extend_from_slice(e);
                out.coefficients.push(c.clone());
            }
        }
        debug_assert_eq!(out.exponents.len(), out.coefficients.len() * d);
        out
    }

    pub fn label_refs(&self) -> Vec<&str> {
        self.labels.iter().map(String::as_str).collect()
    }

    /// Sum of exponents over `vars` mapped to total coefficient mass.
    pub fn project_total_weight(&self, vars: &[usize]) -> BTreeMap<u32, BigUint> {
        let mut out: BTreeMap<u32, BigUint> = BTreeMap::new();
        for (e, c) in self.terms() {
            let w: u32 = vars.iter().map(|&v| e[v]).sum();
            *out.entry(w).or_default() += c;
        }
        out
    }

    fn sum_with(&self, other: &WeightEnumerator) -> WeightEnumerator {
        let labels = self.label_refs();
        WeightEnumerator::from_terms(
            &labels,
            self.caps.intersect(&other.caps),
            self.terms()
                .chain(other.terms())
                .map(|(e, c)| (e.to_vec(), c.clone())),
        )
    }
}

impl fmt::Display for WeightEnumerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in self.terms() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            let mono: Vec<String> = e
                .iter()
                .zip(&self.labels)
                .filter(|(x, _)| **x > 0)
                .map(|(x, l)| if *x == 1 { l.clone() } else { format!("{l}^{x}") })
                .collect();
            match (c.is_one(), mono.is_empty()) {
                (_, true) => write!(f, "{c}")?,
                (true, false) => write!(f, "{}", mono.join(""))?,
                (false, false) => write!(f, "{c}{}", mono.join(""))?,
            }
        }
        Ok(())
    }
}

/// Truncated product of two enumerators over the same variables.
pub fn poly_mul_truncated(
    a: &WeightEnumerator,
    b: &WeightEnumerator,
    caps: &Caps,
) -> Result<WeightEnumerator> {
    if a.labels != b.labels {
        return Err(Error::VariableMismatch(a.labels.clone(), b.labels.clone()));
    }
    let d = a.vars();
    let mut acc: BTreeMap<Vec<u32>, BigUint> = BTreeMap::new();
    let mut e = vec![0u32; d];
    for (ea, ca) in a.terms() {
        if !caps.admits(ea) {
            continue;
        }
        for (eb, cb) in b.terms() {
            for v in 0..d {
                e[v] = ea[v] + eb[v];
            }
            if caps.admits(&e) {
                *acc.entry(e.clone()).or_default() += ca * cb;
            }
        }
    }
    let labels = a.label_refs();
    Ok(WeightEnumerator::from_terms(
        &labels,
        caps.clone(),
        acc.into_iter(),
    ))
}

/// Per-section transfer matrix: entry (r, c) is the sum of the monomials of
/// all branches r -> c.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransferMatrix {
    states: usize,
    labels: Vec<String>,
    /// `(from, to, exponents)` in trellis branch order.
    branches: Vec<(usize, usize, [u32; MAX_VARS])>,
}

/// Builds the transfer matrix of `t`, mapping each output stream to an
/// enumerator variable or to `None` (punctured).
pub fn make_transfer_matrix(
    t: &Trellis,
    stream_to_variable: &[Option<usize>],
    labels: &[&str],
) -> Result<TransferMatrix> {
    if labels.is_empty() || labels.len() > MAX_VARS {
        return Err(Error::InvalidMapping(format!(
            "{} variables, expected 1 to {MAX_VARS}",
            labels.len()
        )));
    }
    if stream_to_variable.len() != t.outputs() {
        return Err(Error::InvalidMapping(format!(
            "mapping covers {} streams, trellis has {}",
            stream_to_variable.len(),
            t.outputs()
        )));
    }
    if let Some(v) = stream_to_variable
        .iter()
        .flatten()
        .find(|&&v| v >= labels.len())
    {
        return Err(Error::InvalidMapping(format!("unknown variable index {v}")));
    }
    let mut branches = Vec::with_capacity(t.states() << t.inputs());
    for s in 0..t.states() {
        for b in t.branches(s) {
            let mut e = [0u32; MAX_VARS];
            for (j, var) in stream_to_variable.iter().enumerate() {
                if let Some(v) = var {
                    e[*v] += (b.output >> j) & 1;
                }
            }
            branches.push((s, b.next as usize, e));
        }
    }
    Ok(TransferMatrix {
        states: t.states(),
        labels: labels.iter().map(|s| s.to_string()).collect(),
        branches,
    })
}

impl TransferMatrix {
    pub fn states(&self) -> usize {
        self.states
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn vars(&self) -> usize {
        self.labels.len()
    }

    pub(crate) fn branches(&self) -> &[(usize, usize, [u32; MAX_VARS])] {
        &self.branches
    }

    /// Entry (r, c) as a polynomial.
    pub fn entry(&self, r: usize, c: usize) -> WeightEnumerator {
        let d = self.vars();
        let labels: Vec<&str> = self.labels.iter().map(String::as_str).collect();
        WeightEnumerator::from_terms(
            &labels,
            Caps::none(d),
            self.branches
                .iter()
                .filter(|(a, b, _)| *a == r && *b == c)
                .map(|(_, _, e)| (e[..d].to_vec(), BigUint::one())),
        )
    }

    /// Largest per-section exponent of each variable.
    pub(crate) fn max_step(&self) -> ([u32; MAX_VARS], u32) {
        let mut per = [0u32; MAX_VARS];
        let mut total = 0;
        for (_, _, e) in &self.branches {
            for v in 0..MAX_VARS {
                per[v] = per[v].max(e[v]);
            }
            total = total.max(e.iter().sum());
        }
        (per, total)
    }
}

/// Truncated `[M^N]_{0,0}`: the enumerator of paths from state 0 back to
/// state 0 over exactly `sections` trellis sections.
pub fn wef_terminated(m: &TransferMatrix, sections: usize, caps: &Caps) -> WeightEnumerator {
    dense::forward_enumerate(m, sections, caps, dense::Boundary::Terminated)
}

/// Truncated `trace(M^N)`: cyclic paths counted once per start state.
pub fn wef_tailbiting(m: &TransferMatrix, sections: usize, caps: &Caps) -> WeightEnumerator {
    dense::forward_enumerate(m, sections, caps, dense::Boundary::Tailbiting)
}

/// Enumerator for a boundary model.
pub fn wef(m: &TransferMatrix, sections: usize, caps: &Caps, mode: Termination) -> WeightEnumerator {
    match mode {
        Termination::Terminated => wef_terminated(m, sections, caps),
        Termination::Tailbiting => wef_tailbiting(m, sections, caps),
    }
}

/// `M^N` by repeated squaring with truncation after every product.
pub fn matrix_power(m: &TransferMatrix, sections: usize, caps: &Caps) -> Vec<Vec<WeightEnumerator>> {
    let s = m.states;
    let labels: Vec<&str> = m.labels.iter().map(String::as_str).collect();
    let zero = WeightEnumerator::zero(&labels, caps.clone());
    let base: Vec<Vec<WeightEnumerator>> = (0..s)
        .map(|r| (0..s).map(|c| m.entry(r, c).truncate(caps)).collect())
        .collect();
    let mul = |a: &[Vec<WeightEnumerator>], b: &[Vec<WeightEnumerator>]| {
        (0..s)
            .map(|r| {
                (0..s)
                    .map(|c| {
                        (0..s).fold(zero.clone(), |acc, k| {
                            if a[r][k].is_empty() || b[k][c].is_empty() {
                                return acc;
                            }
                            let prod = poly_mul_truncated(&a[r][k], &b[k][c], caps)
                                .expect("shared variable set");
                            acc.sum_with(&prod)
                        })
                    })
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    };
    let mut result: Vec<Vec<WeightEnumerator>> = (0..s)
        .map(|r| {
            (0..s)
                .map(|c| {
                    if r == c {
                        let mut one = WeightEnumerator::one(&labels);
                        one.caps = caps.clone();
                        one
                    } else {
                        zero.clone()
                    }
                })
                .collect()
        })
        .collect();
    let mut power = base;
    let mut n = sections;
    while n > 0 {
        if n & 1 == 1 {
            result = mul(&result, &power);
        }
        n >>= 1;
        if n > 0 {
            power = mul(&power, &power);
        }
    }
    result
}

/// [`wef`] computed through [`matrix_power`].
pub fn wef_by_squaring(
    m: &TransferMatrix,
    sections: usize,
    caps: &Caps,
    mode: Termination,
) -> WeightEnumerator {
    let p = matrix_power(m, sections, caps);
    match mode {
        Termination::Terminated => p[0][0].clone(),
        Termination::Tailbiting => (1..m.states).fold(p[0][0].clone(), |acc, s| acc.sum_with(&p[s][s])),
    }
}

/// Exhaustive enumeration over all `2^{kN}` input sequences.
pub fn brute_force_wef(
    t: &Trellis,
    sections: usize,
    mode: Termination,
    stream_to_variable: &[Option<usize>],
    labels: &[&str],
) -> Result<WeightEnumerator> {
    let k = t.inputs();
    if k * sections > 24 {
        return Err(Error::SizeGuard(format!(
            "brute force over {} input bits (limit 24)",
            k * sections
        )));
    }
    if stream_to_variable.len() != t.outputs() {
        return Err(Error::InvalidMapping(format!(
            "mapping covers {} streams, trellis has {}",
            stream_to_variable.len(),
            t.outputs()
        )));
    }
    let d = labels.len();
    let mut counts: BTreeMap<Vec<u32>, u64> = BTreeMap::new();
    let starts: Vec<usize> = match mode {
        Termination::Terminated => vec![0],
        Termination::Tailbiting => (0..t.states()).collect(),
    };
    let mask = (1u64 << k) - 1;
    for input in 0u64..(1u64 << (k * sections)) {
        for &start in &starts {
            let mut s = start;
            let mut e = vec![0u32; d];
            for i in 0..sections {
                let u = ((input >> (i * k)) & mask) as u32;
                let b = t.branch(s, u);
                for (j, var) in stream_to_variable.iter().enumerate() {
                    if let Some(v) = var {
                        e[*v] += (b.output >> j) & 1;
                    }
                }
                s = b.next as usize;
            }
            if s == start {
                *counts.entry(e).or_default() += 1;
            }
        }
    }
    Ok(WeightEnumerator::from_terms(
        labels,
        Caps::none(d),
        counts.into_iter().map(|(e, c)| (e, BigUint::from(c))),
    ))
}
