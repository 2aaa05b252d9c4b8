//! Direct permutation averages by encoding every codeword.
//!
//! For each interleaver choice every information word is encoded through
//! the actual concatenated code (all component trellises terminated) and
//! the `(i, p)` weight pairs are tallied. Averaging over all interleavers
//! gives the exact ensemble enumerator; averaging over random draws gives a
//! Monte Carlo estimate with a standard error.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EnsembleKind, EnsembleSpec, ExactAverage, Role};
use crate::trellis::{build_trellis, parse_generator, Trellis};
use crate::{Error, Result};

/// Limit on interleaver choices visited exhaustively.
const MAX_EXHAUSTIVE: u64 = 2_000_000;
/// Limit on information words (and lower parities for braided codes).
const MAX_WORD_BITS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleMode {
    /// Every interleaver combination.
    Exhaustive,
    /// `draws` independent uniformly random interleaver combinations.
    Sampled { draws: u64, seed: u64 },
}

/// Per-coefficient tallies over interleaver choices.
#[derive(Clone, Debug, Default)]
pub struct OracleAverage {
    pub draws: u64,
    /// `(i, p) -> (sum of counts, sum of squared counts)`.
    pub tallies: BTreeMap<(u32, u32), (u64, u64)>,
}

impl OracleAverage {
    pub fn exact(&self) -> ExactAverage {
        let d = BigInt::from(self.draws);
        self.tallies
            .iter()
            .map(|(&k, &(s, _))| (k, BigRational::new(BigInt::from(s), d.clone())))
            .collect()
    }

    pub fn mean(&self, i: u32, p: u32) -> f64 {
        self.tallies
            .get(&(i, p))
            .map_or(0.0, |&(s, _)| s as f64 / self.draws as f64)
    }

    /// Standard error of [`OracleAverage::mean`].
    pub fn std_error(&self, i: u32, p: u32) -> f64 {
        let Some(&(s, q)) = self.tallies.get(&(i, p)) else {
            return 0.0;
        };
        let d = self.draws as f64;
        let m = s as f64 / d;
        let var = (q as f64 / d - m * m).max(0.0);
        (var / d).sqrt()
    }
}

/// Parity of a terminated path driven by `inputs`, or `None` if the path
/// does not end in the zero state.
fn terminated_parity(t: &Trellis, inputs: &[&[u8]]) -> Option<Vec<u8>> {
    let n = inputs[0].len();
    let k = inputs.len();
    let mut s = 0usize;
    let mut parity = Vec::with_capacity(n);
    for j in 0..n {
        let sym = inputs
            .iter()
            .enumerate()
            .fold(0u32, |acc, (r, x)| acc | (u32::from(x[j]) << r));
        let b = t.branch(s, sym);
        parity.push(((b.output >> k) & 1) as u8);
        s = b.next as usize;
    }
    (s == 0).then_some(parity)
}

fn weight(x: &[u8]) -> u32 {
    x.iter().map(|&b| u32::from(b)).sum()
}

fn permute(x: &[u8], src: &[usize]) -> Vec<u8> {
    src.iter().map(|&j| x[j]).collect()
}

fn bits(word: u64, n: usize) -> Vec<u8> {
    (0..n).map(|j| ((word >> j) & 1) as u8).collect()
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).try_fold(1u64, |a, b| a.checked_mul(b)).unwrap_or(u64::MAX)
}

/// Permutation with Lehmer index `idx` in the factorial number system.
fn nth_permutation(mut idx: u64, n: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(n);
    for k in (1..=n).rev() {
        let f = factorial(k - 1);
        let d = (idx / f) as usize;
        idx %= f;
        out.push(pool.remove(d));
    }
    out
}

/// Tally of one code realization: `(i, p) -> number of codewords`.
type Tally = BTreeMap<(u32, u32), u64>;

struct Codes {
    n: usize,
    a: Trellis,
    b: Trellis,
    c: Option<Trellis>,
}

impl Codes {
    fn tally(&self, kind: EnsembleKind, perms: &[Vec<usize>]) -> Tally {
        let n = self.n;
        let mut out = Tally::new();
        let mut bump = |i: u32, p: u32| *out.entry((i, p)).or_default() += 1;
        match kind {
            EnsembleKind::Pcc => {
                for w in 0..1u64 << n {
                    let u = bits(w, n);
                    let Some(vu) = terminated_parity(&self.a, &[&u]) else { continue };
                    let Some(vl) = terminated_parity(&self.b, &[&permute(&u, &perms[0])]) else { continue };
                    bump(weight(&u), weight(&vu) + weight(&vl));
                }
            }
            EnsembleKind::Scc => {
                for w in 0..1u64 << n {
                    let u = bits(w, n);
                    let Some(vo) = terminated_parity(&self.a, &[&u]) else { continue };
                    let x = [u.as_slice(), vo.as_slice()].concat();
                    let Some(vi) = terminated_parity(&self.b, &[&permute(&x, &perms[0])]) else { continue };
                    bump(weight(&u), weight(&vi));
                }
            }
            EnsembleKind::Bcc => {
                let (pi, pi_u, pi_l) = (&perms[0], &perms[1], &perms[2]);
                for w in 0..1u64 << n {
                    let u = bits(w, n);
                    let up = permute(&u, pi);
                    for wl in 0..1u64 << n {
                        let vl = bits(wl, n);
                        let Some(vu) = terminated_parity(&self.a, &[&u, &permute(&vl, pi_u)]) else { continue };
                        let Some(check) = terminated_parity(&self.b, &[&up, &permute(&vu, pi_l)]) else { continue };
                        if check == vl {
                            bump(weight(&u), weight(&vu) + weight(&vl));
                        }
                    }
                }
            }
            EnsembleKind::Hcc => {
                let inner = self.c.as_ref().expect("hybrid codes have an inner encoder");
                for w in 0..1u64 << n {
                    let u = bits(w, n);
                    let Some(vu) = terminated_parity(&self.a, &[&u]) else { continue };
                    let Some(vl) = terminated_parity(&self.b, &[&permute(&u, &perms[0])]) else { continue };
                    let x = [vu.as_slice(), vl.as_slice()].concat();
                    let Some(vi) = terminated_parity(inner, &[&permute(&x, &perms[1])]) else { continue };
                    bump(weight(&u), weight(&vi));
                }
            }
        }
        out
    }
}

/// Averages the weight tallies of the actual concatenated codes over
/// interleaver choices.
///
/// `spec` must use full-length component trellises.
pub fn oracle_permutation_average(spec: &EnsembleSpec, mode: OracleMode) -> Result<OracleAverage> {
    let n = spec.n;
    for c in &spec.components {
        let want = if c.role == Role::Inner { 2 * n } else { n };
        if c.sections != want {
            return Err(Error::InvalidParameter(format!(
                "{} component spans {} sections, the code needs {want}",
                c.role.as_str(),
                c.sections
            )));
        }
    }
    let word_bits = if spec.kind == EnsembleKind::Bcc { 2 * n } else { n };
    if word_bits > MAX_WORD_BITS {
        return Err(Error::SizeGuard(format!("{word_bits} enumerated bits")));
    }
    let trellis = |role| -> Result<Trellis> {
        Ok(build_trellis(&parse_generator(&spec.component(role)?.generator)?))
    };
    let (codes, lengths) = match spec.kind {
        EnsembleKind::Pcc => (
            Codes { n, a: trellis(Role::Upper)?, b: trellis(Role::Lower)?, c: None },
            vec![n],
        ),
        EnsembleKind::Scc => (
            Codes { n, a: trellis(Role::Outer)?, b: trellis(Role::Inner)?, c: None },
            vec![2 * n],
        ),
        EnsembleKind::Bcc => (
            Codes { n, a: trellis(Role::Upper)?, b: trellis(Role::Lower)?, c: None },
            vec![n, n, n],
        ),
        EnsembleKind::Hcc => (
            Codes {
                n,
                a: trellis(Role::Upper)?,
                b: trellis(Role::Lower)?,
                c: Some(trellis(Role::Inner)?),
            },
            vec![n, 2 * n],
        ),
    };
    let mut result = OracleAverage::default();
    let mut absorb = |t: Tally| {
        result.draws += 1;
        for (k, c) in t {
            let e = result.tallies.entry(k).or_default();
            e.0 += c;
            e.1 += c * c;
        }
    };
    match mode {
        OracleMode::Exhaustive => {
            let sizes: Vec<u64> = lengths.iter().map(|&l| factorial(l)).collect();
            let total = sizes
                .iter()
                .try_fold(1u64, |a, &b| a.checked_mul(b))
                .filter(|&t| t <= MAX_EXHAUSTIVE)
                .ok_or_else(|| Error::SizeGuard("too many interleaver combinations".into()))?;
            for mut idx in 0..total {
                let perms: Vec<Vec<usize>> = lengths
                    .iter()
                    .zip(&sizes)
                    .map(|(&l, &s)| {
                        let p = nth_permutation(idx % s, l);
                        idx /= s;
                        p
                    })
                    .collect();
                absorb(codes.tally(spec.kind, &perms));
            }
        }
        OracleMode::Sampled { draws, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..draws {
                let perms: Vec<Vec<usize>> = lengths
                    .iter()
                    .map(|&l| {
                        let mut p: Vec<usize> = (0..l).collect();
                        p.shuffle(&mut rng);
                        p
                    })
                    .collect();
                absorb(codes.tally(spec.kind, &perms));
            }
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{
        average_bcc_exact, average_hcc_exact, average_pcc_exact, average_scc_exact,
    };

    fn formula(spec: &EnsembleSpec) -> ExactAverage {
        let n = spec.n;
        let w = 8 * n as u32;
        let get = |r| spec.component_wef(r, w).unwrap();
        match spec.kind {
            EnsembleKind::Pcc => average_pcc_exact(&get(Role::Upper), &get(Role::Lower), n, w),
            EnsembleKind::Scc => average_scc_exact(&get(Role::Outer), &get(Role::Inner), n, w),
            EnsembleKind::Bcc => average_bcc_exact(&get(Role::Upper), &get(Role::Lower), n, w),
            EnsembleKind::Hcc => average_hcc_exact(&get(Role::Upper), &get(Role::Lower), &get(Role::Inner), n, w),
        }
    }

    #[test]
    fn permutations_by_index() {
        let all: Vec<Vec<usize>> = (0..6).map(|i| nth_permutation(i, 3)).collect();
        assert_eq!(all[0], vec![0, 1, 2]);
        assert_eq!(all[5], vec![2, 1, 0]);
        let mut sorted = all.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 6);
    }

    #[test]
    fn exhaustive_matches_formula() {
        for (kind, n) in [
            (EnsembleKind::Pcc, 4),
            (EnsembleKind::Pcc, 5),
            (EnsembleKind::Scc, 3),
            (EnsembleKind::Hcc, 3),
        ] {
            let spec = EnsembleSpec::new(kind, n);
            let o = oracle_permutation_average(&spec, OracleMode::Exhaustive).unwrap();
            assert_eq!(o.exact(), formula(&spec), "{kind} N={n}");
        }
    }

    #[test]
    fn exhaustive_braided_matches_formula() {
        let spec = EnsembleSpec::new(EnsembleKind::Bcc, 3);
        let o = oracle_permutation_average(&spec, OracleMode::Exhaustive).unwrap();
        assert_eq!(o.draws, 216);
        assert_eq!(o.exact(), formula(&spec));
    }

    #[test]
    fn sampled_within_three_sigma() {
        let spec = EnsembleSpec::new(EnsembleKind::Pcc, 6);
        let o = oracle_permutation_average(&spec, OracleMode::Sampled { draws: 4000, seed: 7 }).unwrap();
        let f = formula(&spec);
        for (&(i, p), q) in &f {
            let want = crate::hpfloat::HpFloat::from_ratio(
                &q.numer().to_biguint().unwrap(),
                &q.denom().to_biguint().unwrap(),
                64,
            )
            .to_f64();
            let se = o.std_error(i, p);
            let slack = 3.0 * se + 1e-12;
            assert!((o.mean(i, p) - want).abs() <= slack, "({i},{p}) {} vs {want}", o.mean(i, p));
        }
    }

    #[test]
    fn refuses_shortened_components() {
        let spec = EnsembleSpec::with_section_offset(EnsembleKind::Pcc, 4, 1);
        assert!(oracle_permutation_average(&spec, OracleMode::Exhaustive).is_err());
    }
}
