//! Averaging formulas, generic over the scalar used to accumulate terms.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;

use super::{check_caps, AveragedWEF, EnsembleKind, EnsembleSpec, Role};
use crate::hpfloat::HpFloat;
use crate::wef::WeightEnumerator;
use crate::{Error, Result};

/// Extra mantissa bits carried while summing terms.
const GUARD_BITS: u32 = 64;

/// Exact rational averages keyed by `(i, p)`.
pub type ExactAverage = BTreeMap<(u32, u32), BigRational>;

trait Arith: Sync {
    type V: Clone + Send + Sync;
    fn zero(&self) -> Self::V;
    fn from_int(&self, n: &BigUint) -> Self::V;
    fn ratio(&self, num: &BigUint, den: &BigUint) -> Self::V;
    fn add(&self, a: &Self::V, b: &Self::V) -> Self::V;
    fn mul(&self, a: &Self::V, b: &Self::V) -> Self::V;
    fn is_zero(&self, a: &Self::V) -> bool;
}

struct Hp(u32);

impl Arith for Hp {
    type V = HpFloat;
    fn zero(&self) -> HpFloat {
        HpFloat::zero(self.0)
    }
    fn from_int(&self, n: &BigUint) -> HpFloat {
        HpFloat::from_integer(n, self.0)
    }
    fn ratio(&self, num: &BigUint, den: &BigUint) -> HpFloat {
        HpFloat::from_ratio(num, den, self.0)
    }
    fn add(&self, a: &HpFloat, b: &HpFloat) -> HpFloat {
        a.add(b)
    }
    fn mul(&self, a: &HpFloat, b: &HpFloat) -> HpFloat {
        a.mul(b)
    }
    fn is_zero(&self, a: &HpFloat) -> bool {
        a.is_zero()
    }
}

struct Exact;

impl Arith for Exact {
    type V = BigRational;
    fn zero(&self) -> BigRational {
        BigRational::zero()
    }
    fn from_int(&self, n: &BigUint) -> BigRational {
        BigRational::from_integer(BigInt::from(n.clone()))
    }
    fn ratio(&self, num: &BigUint, den: &BigUint) -> BigRational {
        BigRational::new(BigInt::from(num.clone()), BigInt::from(den.clone()))
    }
    fn add(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a + b
    }
    fn mul(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a * b
    }
    fn is_zero(&self, a: &BigRational) -> bool {
        a.is_zero()
    }
}

/// `C(n, k)` for `k = 0..=n`.
pub(crate) fn binomial_row(n: usize) -> Vec<BigUint> {
    let mut row = Vec::with_capacity(n + 1);
    let mut c = BigUint::one();
    row.push(c.clone());
    for k in 1..=n {
        c = c * BigUint::from(n - k + 1) / BigUint::from(k);
        row.push(c.clone());
    }
    row
}

/// Dense `[a][b]` view of a two-variable enumerator.
struct Dense2 {
    rows: Vec<Vec<BigUint>>,
}

impl Dense2 {
    fn new(w: &WeightEnumerator) -> Dense2 {
        let mut rows: Vec<Vec<BigUint>> = Vec::new();
        for (e, c) in w.terms() {
            let (a, b) = (e[0] as usize, e[1] as usize);
            if rows.len() <= a {
                rows.resize_with(a + 1, Vec::new);
            }
            if rows[a].len() <= b {
                rows[a].resize(b + 1, BigUint::zero());
            }
            rows[a][b] = c.clone();
        }
        Dense2 { rows }
    }

    fn row(&self, a: usize) -> &[BigUint] {
        self.rows.get(a).map_or(&[], Vec::as_slice)
    }
}

fn collect<A: Arith>(
    arith: &A,
    w_max: u32,
    cell: impl Fn(u32, u32) -> A::V + Sync,
) -> BTreeMap<(u32, u32), A::V> {
    let rows: Vec<Vec<((u32, u32), A::V)>> = (0..=w_max)
        .into_par_iter()
        .map(|i| {
            (0..=w_max - i)
                .map(|p| ((i, p), cell(i, p)))
                .filter(|(_, v)| !arith.is_zero(v))
                .collect()
        })
        .collect();
    rows.into_iter().flatten().collect()
}

fn pcc_generic<A: Arith>(
    arith: &A,
    upper: &WeightEnumerator,
    lower: &WeightEnumerator,
    n: usize,
    w_max: u32,
) -> BTreeMap<(u32, u32), A::V> {
    let u = Dense2::new(upper);
    let l = Dense2::new(lower);
    let binom = binomial_row(n);
    collect(arith, w_max, |i, p| {
        if i as usize > n {
            return arith.zero();
        }
        let (ru, rl) = (u.row(i as usize), l.row(i as usize));
        let mut s = BigUint::zero();
        for p1 in 0..=p as usize {
            if let (Some(a), Some(b)) = (ru.get(p1), rl.get(p as usize - p1)) {
                if !a.is_zero() && !b.is_zero() {
                    s += a * b;
                }
            }
        }
        if s.is_zero() {
            arith.zero()
        } else {
            arith.ratio(&s, &binom[i as usize])
        }
    })
}

/// `R[j][p] = A_{j,p} / C(2N, j)` for an inner enumerator.
fn inner_ratios<A: Arith>(arith: &A, inner: &Dense2, n: usize) -> Vec<Vec<A::V>> {
    let binom = binomial_row(2 * n);
    (0..inner.rows.len().min(2 * n + 1))
        .into_par_iter()
        .map(|j| {
            inner
                .row(j)
                .iter()
                .map(|c| {
                    if c.is_zero() {
                        arith.zero()
                    } else {
                        arith.ratio(c, &binom[j])
                    }
                })
                .collect()
        })
        .collect()
}

fn scc_generic<A: Arith>(
    arith: &A,
    outer: &WeightEnumerator,
    inner: &WeightEnumerator,
    n: usize,
    w_max: u32,
) -> BTreeMap<(u32, u32), A::V> {
    let o = Dense2::new(outer);
    let r = inner_ratios(arith, &Dense2::new(inner), n);
    let outer_vals: Vec<Vec<A::V>> = o
        .rows
        .iter()
        .map(|row| row.iter().map(|c| arith.from_int(c)).collect())
        .collect();
    collect(arith, w_max, |i, p| {
        let mut acc = arith.zero();
        let Some(orow) = outer_vals.get(i as usize) else {
            return acc;
        };
        for (p1, a) in orow.iter().enumerate() {
            if arith.is_zero(a) {
                continue;
            }
            let j = i as usize + p1;
            if let Some(rv) = r.get(j).and_then(|row| row.get(p as usize)) {
                if !arith.is_zero(rv) {
                    acc = arith.add(&acc, &arith.mul(a, rv));
                }
            }
        }
        acc
    })
}

fn hcc_generic<A: Arith>(
    arith: &A,
    upper: &WeightEnumerator,
    lower: &WeightEnumerator,
    inner: &WeightEnumerator,
    n: usize,
    w_max: u32,
) -> BTreeMap<(u32, u32), A::V> {
    let u = Dense2::new(upper);
    let l = Dense2::new(lower);
    let r = inner_ratios(arith, &Dense2::new(inner), n);
    let binom = binomial_row(n);
    let one = BigUint::one();
    // parallel part: B[i][q] = sum_{p1 + p2 = q} A^U_{i,p1} A^L_{i,p2} / C(N, i)
    let parallel: Vec<Vec<A::V>> = (0..=(w_max as usize).min(n))
        .into_par_iter()
        .map(|i| {
            let (ru, rl) = (u.row(i), l.row(i));
            if ru.is_empty() || rl.is_empty() {
                return Vec::new();
            }
            let mut b = vec![BigUint::zero(); ru.len() + rl.len() - 1];
            for (p1, a) in ru.iter().enumerate() {
                if a.is_zero() {
                    continue;
                }
                for (p2, c) in rl.iter().enumerate() {
                    if !c.is_zero() {
                        b[p1 + p2] += a * c;
                    }
                }
            }
            let inv = arith.ratio(&one, &binom[i]);
            b.iter()
                .map(|x| {
                    if x.is_zero() {
                        arith.zero()
                    } else {
                        arith.mul(&arith.from_int(x), &inv)
                    }
                })
                .collect()
        })
        .collect();
    collect(arith, w_max, |i, p| {
        let mut acc = arith.zero();
        let Some(brow) = parallel.get(i as usize) else {
            return acc;
        };
        for (q, b) in brow.iter().enumerate() {
            if arith.is_zero(b) {
                continue;
            }
            if let Some(rv) = r.get(q).and_then(|row| row.get(p as usize)) {
                if !arith.is_zero(rv) {
                    acc = arith.add(&acc, &arith.mul(b, rv));
                }
            }
        }
        acc
    })
}

fn bcc_generic<A: Arith>(
    arith: &A,
    upper: &WeightEnumerator,
    lower: &WeightEnumerator,
    n: usize,
    w_max: u32,
) -> BTreeMap<(u32, u32), A::V> {
    let binom = binomial_row(n);
    let one = BigUint::one();
    let inv: Vec<A::V> = binom.iter().map(|c| arith.ratio(&one, c)).collect();
    // dense [i][a][b] with i + a + b <= w_max
    let dense3 = |w: &WeightEnumerator| -> Vec<Vec<Vec<BigUint>>> {
        let mut d: Vec<Vec<Vec<BigUint>>> = Vec::new();
        for (e, c) in w.terms() {
            let (i, a, b) = (e[0] as usize, e[1] as usize, e[2] as usize);
            if i + a + b > w_max as usize {
                continue;
            }
            if d.len() <= i {
                d.resize_with(i + 1, Vec::new);
            }
            if d[i].len() <= a {
                d[i].resize_with(a + 1, Vec::new);
            }
            if d[i][a].len() <= b {
                d[i][a].resize(b + 1, BigUint::zero());
            }
            d[i][a][b] = c.clone();
        }
        d
    };
    let u = dense3(upper);
    let l = dense3(lower);
    let get = |d: &Vec<Vec<Vec<BigUint>>>, i: usize, a: usize, b: usize| -> Option<BigUint> {
        d.get(i)?.get(a)?.get(b).filter(|c| !c.is_zero()).cloned()
    };
    collect(arith, w_max, |i, p| {
        let i = i as usize;
        if i > n {
            return arith.zero();
        }
        let mut acc = arith.zero();
        for p_upper in 0..=p as usize {
            let p_lower = p as usize - p_upper;
            if p_upper > n || p_lower > n {
                continue;
            }
            // upper sees the lower parity on its second input and vice versa
            let (Some(a), Some(b)) = (get(&u, i, p_lower, p_upper), get(&l, i, p_upper, p_lower)) else {
                continue;
            };
            let term = arith.mul(
                &arith.from_int(&(a * b)),
                &arith.mul(&inv[p_upper], &inv[p_lower]),
            );
            acc = arith.add(&acc, &term);
        }
        if arith.is_zero(&acc) {
            acc
        } else {
            arith.mul(&acc, &inv[i])
        }
    })
}

fn finish(
    spec: &EnsembleSpec,
    w_max: u32,
    precision: u32,
    provenance: Vec<String>,
    raw: BTreeMap<(u32, u32), HpFloat>,
) -> AveragedWEF {
    let rounded = raw
        .into_iter()
        .map(|(k, v)| (k, v.with_precision(precision)))
        .collect();
    AveragedWEF::new(spec.kind, spec.n, precision, w_max, provenance, rounded)
}

fn expect_kind(spec: &EnsembleSpec, kind: EnsembleKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::InvalidParameter(format!(
            "expected a {kind} ensemble, got {}",
            spec.kind
        )));
    }
    Ok(())
}

fn identities(spec: &EnsembleSpec, roles: &[Role], w_max: u32) -> Result<Vec<String>> {
    roles
        .iter()
        .map(|&r| Ok(format!("{}: {}", r.as_str(), spec.component_identity(r, w_max)?)))
        .collect()
}

/// Parallel concatenation average.
pub fn average_pcc(
    upper: &WeightEnumerator,
    lower: &WeightEnumerator,
    spec: &EnsembleSpec,
    w_max: u32,
    precision: u32,
) -> Result<AveragedWEF> {
    expect_kind(spec, EnsembleKind::Pcc)?;
    check_caps(upper, &spec.required_caps(Role::Upper, w_max), "upper")?;
    check_caps(lower, &spec.required_caps(Role::Lower, w_max), "lower")?;
    let raw = pcc_generic(&Hp(precision + GUARD_BITS), upper, lower, spec.n, w_max);
    Ok(finish(spec, w_max, precision, identities(spec, &[Role::Upper, Role::Lower], w_max)?, raw))
}

/// Serial concatenation average; the outer parity is punctured.
pub fn average_scc(
    outer: &WeightEnumerator,
    inner: &WeightEnumerator,
    spec: &EnsembleSpec,
    w_max: u32,
    precision: u32,
) -> Result<AveragedWEF> {
    expect_kind(spec, EnsembleKind::Scc)?;
    check_caps(outer, &spec.required_caps(Role::Outer, w_max), "outer")?;
    check_caps(inner, &spec.required_caps(Role::Inner, w_max), "inner")?;
    let raw = scc_generic(&Hp(precision + GUARD_BITS), outer, inner, spec.n, w_max);
    Ok(finish(spec, w_max, precision, identities(spec, &[Role::Outer, Role::Inner], w_max)?, raw))
}

/// Braided concatenation average over three independent permutations.
pub fn average_bcc(
    upper: &WeightEnumerator,
    lower: &WeightEnumerator,
    spec: &EnsembleSpec,
    w_max: u32,
    precision: u32,
) -> Result<AveragedWEF> {
    expect_kind(spec, EnsembleKind::Bcc)?;
    check_caps(upper, &spec.required_caps(Role::Upper, w_max), "upper")?;
    check_caps(lower, &spec.required_caps(Role::Lower, w_max), "lower")?;
    let raw = bcc_generic(&Hp(precision + GUARD_BITS), upper, lower, spec.n, w_max);
    Ok(finish(spec, w_max, precision, identities(spec, &[Role::Upper, Role::Lower], w_max)?, raw))
}

/// Hybrid concatenation average; the parallel parities are punctured.
pub fn average_hcc(
    upper: &WeightEnumerator,
    lower: &WeightEnumerator,
    inner: &WeightEnumerator,
    spec: &EnsembleSpec,
    w_max: u32,
    precision: u32,
) -> Result<AveragedWEF> {
    expect_kind(spec, EnsembleKind::Hcc)?;
    check_caps(upper, &spec.required_caps(Role::Upper, w_max), "upper")?;
    check_caps(lower, &spec.required_caps(Role::Lower, w_max), "lower")?;
    check_caps(inner, &spec.required_caps(Role::Inner, w_max), "inner")?;
    let raw = hcc_generic(&Hp(precision + GUARD_BITS), upper, lower, inner, spec.n, w_max);
    Ok(finish(
        spec,
        w_max,
        precision,
        identities(spec, &[Role::Upper, Role::Lower, Role::Inner], w_max)?,
        raw,
    ))
}

pub fn average_pcc_exact(upper: &WeightEnumerator, lower: &WeightEnumerator, n: usize, w_max: u32) -> ExactAverage {
    pcc_generic(&Exact, upper, lower, n, w_max)
}

pub fn average_scc_exact(outer: &WeightEnumerator, inner: &WeightEnumerator, n: usize, w_max: u32) -> ExactAverage {
    scc_generic(&Exact, outer, inner, n, w_max)
}

pub fn average_bcc_exact(upper: &WeightEnumerator, lower: &WeightEnumerator, n: usize, w_max: u32) -> ExactAverage {
    bcc_generic(&Exact, upper, lower, n, w_max)
}

pub fn average_hcc_exact(
    upper: &WeightEnumerator,
    lower: &WeightEnumerator,
    inner: &WeightEnumerator,
    n: usize,
    w_max: u32,
) -> ExactAverage {
    hcc_generic(&Exact, upper, lower, inner, n, w_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wef::Caps;

    fn single(labels: &[&str]) -> WeightEnumerator {
        WeightEnumerator::one(labels)
    }

    #[test]
    fn binomials() {
        let row = binomial_row(6);
        let v: Vec<u32> = row.iter().map(|c| c.try_into().unwrap()).collect();
        assert_eq!(v, vec![1, 6, 15, 20, 15, 6, 1]);
        let big = binomial_row(2048);
        let s = big[1024].to_string();
        assert_eq!((s.len(), &s[..12]), (615, "569709144837"));
    }

    #[test]
    fn all_zero_ensembles() {
        let two = single(&["I", "P"]);
        let three = single(&["I1", "I2", "P"]);
        let unit: ExactAverage = [((0, 0), BigRational::one())].into_iter().collect();
        assert_eq!(average_pcc_exact(&two, &two, 5, 10), unit);
        assert_eq!(average_scc_exact(&two, &two, 5, 10), unit);
        assert_eq!(average_bcc_exact(&three, &three, 5, 10), unit);
        assert_eq!(average_hcc_exact(&two, &two, &two, 5, 10), unit);
    }

    #[test]
    fn cap_insufficiency_is_refused() {
        let spec = EnsembleSpec::new(EnsembleKind::Pcc, 16);
        let small = spec.component_wef(Role::Upper, 4).unwrap();
        assert!(matches!(
            average_pcc(&small, &small, &spec, 8, 64),
            Err(Error::CapInsufficient(_))
        ));
        let scc = EnsembleSpec::new(EnsembleKind::Scc, 16);
        let outer = scc.component_wef(Role::Outer, 8).unwrap().truncate(&Caps::total(2, 8));
        let inner = scc.component_wef(Role::Inner, 8).unwrap();
        assert!(matches!(
            average_scc(&outer, &inner, &scc, 8, 64),
            Err(Error::CapInsufficient(_))
        ));
        assert!(matches!(
            average_scc(&outer, &inner, &spec, 8, 64),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn float_path_matches_exact() {
        for kind in EnsembleKind::ALL {
            let spec = EnsembleSpec::new(kind, 12);
            let w = 14;
            let avg = spec.average(w, 128).unwrap();
            let get = |r| spec.component_wef(r, w).unwrap();
            let exact = match kind {
                EnsembleKind::Pcc => average_pcc_exact(&get(Role::Upper), &get(Role::Lower), 12, w),
                EnsembleKind::Scc => average_scc_exact(&get(Role::Outer), &get(Role::Inner), 12, w),
                EnsembleKind::Bcc => average_bcc_exact(&get(Role::Upper), &get(Role::Lower), 12, w),
                EnsembleKind::Hcc => {
                    average_hcc_exact(&get(Role::Upper), &get(Role::Lower), &get(Role::Inner), 12, w)
                }
            };
            assert_eq!(avg.len(), exact.len(), "{kind}");
            for ((i, p), q) in &exact {
                let want = HpFloat::from_ratio(
                    &q.numer().to_biguint().unwrap(),
                    &q.denom().to_biguint().unwrap(),
                    128,
                );
                let got = avg.get(*i, *p).unwrap();
                assert!(got.relative_difference(&want) < 1e-37, "{kind} ({i},{p})");
            }
        }
    }

    #[test]
    fn precision_doubling_is_stable() {
        let spec = EnsembleSpec::new(EnsembleKind::Hcc, 20);
        let a = spec.average(16, 256).unwrap();
        let b = spec.average(16, 512).unwrap();
        for (i, p, v) in a.iter() {
            let w = b.get(i, p).unwrap();
            assert!(v.relative_difference(w) < 2f64.powi(-200));
        }
        assert_eq!(a.get(0, 0).unwrap().to_f64(), 1.0);
    }
}
