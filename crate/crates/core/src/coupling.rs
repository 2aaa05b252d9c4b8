//! Spatially coupled chains with coupling memory 1 and the superposition
//! map onto the uncoupled ensemble.
//!
//! A coupled code is a linear code: every bit of every slot is a GF(2)
//! variable and each component trellis contributes its parity and boundary
//! equations. Encoding fills in the reserved information positions the
//! equations leave determined, so any chain (terminated or tailbiting, any
//! kind) is produced by the same solver.
//!
//! Splitting: a length-`n` sequence is cut into a first part of
//! `ceil(n/2)` symbols (stays in slot `t`) and a second part (sent to slot
//! `t + 1`).
//!
//! Stream order inside a slot:
//!
//! | kind | streams | transmitted |
//! |------|---------|-------------|
//! | PCC  | `u, vU, vL` | all |
//! | SCC  | `u, vO, vI` | `u, vI` |
//! | BCC  | `u, vU, vL` | all |
//! | HCC  | `u, vU, vL, vI` | `u, vI` |

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ensembles::{EnsembleKind, RATE_HALF_GENERATOR, RATE_TWO_THIRDS_GENERATOR};
use crate::gf2::{BitVec, Echelon};
use crate::trellis::{build_trellis, check_membership, parse_generator, Termination, Trellis};
use crate::{Error, Result};

/// Bijection applied as `y[j] = x[src[j]]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Permutation {
    src: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Permutation {
        Permutation { src: (0..n).collect() }
    }

    pub fn from_indices(src: Vec<usize>) -> Result<Permutation> {
        let mut seen = vec![false; src.len()];
        for &s in &src {
            if s >= src.len() || std::mem::replace(&mut seen[s], true) {
                return Err(Error::InvalidParameter(format!("not a permutation: {src:?}")));
            }
        }
        Ok(Permutation { src })
    }

    /// Fisher-Yates shuffle driven by ChaCha8 with the given seed and
    /// stream number.
    pub fn random(n: usize, seed: u64, stream: u64) -> Permutation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut src: Vec<usize> = (0..n).collect();
        src.shuffle(&mut rng);
        Permutation { src }
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.src
    }

    pub fn apply<T: Copy>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.src.len(), "permutation length");
        self.src.iter().map(|&j| x[j]).collect()
    }

    /// `self` followed by `next`, i.e. `x * self * next`.
    pub fn then(&self, next: &Permutation) -> Result<Permutation> {
        if self.len() != next.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: next.len(),
            });
        }
        Ok(Permutation {
            src: next.src.iter().map(|&j| self.src[j]).collect(),
        })
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.len()];
        for (j, &s) in self.src.iter().enumerate() {
            inv[s] = j;
        }
        Permutation { src: inv }
    }
}

/// Time-invariant permutations of a coupled chain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CouplingPermutations {
    /// Upper multiplexer, info interleaver, lower multiplexer (length `N`).
    Pcc { pi_u: Permutation, pi: Permutation, pi_l: Permutation },
    /// Before and after the split of `(u, vO)` (length `2N`).
    Scc { pi1: Permutation, pi2: Permutation },
    /// Info interleaver and the two parity interleavers (length `N`).
    Bcc { pi: Permutation, pi_u: Permutation, pi_l: Permutation },
    /// Lower info interleaver (`N`) and the inner stage pair (`2N`).
    Hcc { pi_l: Permutation, pi1: Permutation, pi2: Permutation },
}

impl CouplingPermutations {
    pub fn kind(&self) -> EnsembleKind {
        match self {
            CouplingPermutations::Pcc { .. } => EnsembleKind::Pcc,
            CouplingPermutations::Scc { .. } => EnsembleKind::Scc,
            CouplingPermutations::Bcc { .. } => EnsembleKind::Bcc,
            CouplingPermutations::Hcc { .. } => EnsembleKind::Hcc,
        }
    }

    pub fn identity(kind: EnsembleKind, n: usize) -> CouplingPermutations {
        let id = Permutation::identity;
        match kind {
            EnsembleKind::Pcc => CouplingPermutations::Pcc { pi_u: id(n), pi: id(n), pi_l: id(n) },
            EnsembleKind::Scc => CouplingPermutations::Scc { pi1: id(2 * n), pi2: id(2 * n) },
            EnsembleKind::Bcc => CouplingPermutations::Bcc { pi: id(n), pi_u: id(n), pi_l: id(n) },
            EnsembleKind::Hcc => CouplingPermutations::Hcc { pi_l: id(n), pi1: id(2 * n), pi2: id(2 * n) },
        }
    }

    /// Independent random permutations, stream `k` for the `k`-th one.
    pub fn random(kind: EnsembleKind, n: usize, seed: u64) -> CouplingPermutations {
        let r = |len, k| Permutation::random(len, seed, k);
        match kind {
            EnsembleKind::Pcc => CouplingPermutations::Pcc { pi_u: r(n, 0), pi: r(n, 1), pi_l: r(n, 2) },
            EnsembleKind::Scc => CouplingPermutations::Scc { pi1: r(2 * n, 0), pi2: r(2 * n, 1) },
            EnsembleKind::Bcc => CouplingPermutations::Bcc { pi: r(n, 0), pi_u: r(n, 1), pi_l: r(n, 2) },
            EnsembleKind::Hcc => CouplingPermutations::Hcc { pi_l: r(n, 0), pi1: r(2 * n, 1), pi2: r(2 * n, 2) },
        }
    }

    fn check_lengths(&self, n: usize) -> Result<()> {
        let want: Vec<(&Permutation, usize)> = match self {
            CouplingPermutations::Pcc { pi_u, pi, pi_l } => vec![(pi_u, n), (pi, n), (pi_l, n)],
            CouplingPermutations::Scc { pi1, pi2 } => vec![(pi1, 2 * n), (pi2, 2 * n)],
            CouplingPermutations::Bcc { pi, pi_u, pi_l } => vec![(pi, n), (pi_u, n), (pi_l, n)],
            CouplingPermutations::Hcc { pi_l, pi1, pi2 } => vec![(pi_l, n), (pi1, 2 * n), (pi2, 2 * n)],
        };
        for (p, len) in want {
            if p.len() != len {
                return Err(Error::LengthMismatch { expected: len, got: p.len() });
            }
        }
        Ok(())
    }
}

/// The permutation of the uncoupled code matched to a coupled chain.
///
/// PCC: `(pi_u)^-1 * pi * pi_l`, the lower interleaver of the uncoupled
/// code. SCC and HCC: `pi1 * pi2`, the inner interleaver (HCC keeps `pi_l`).
/// BCC: the chain's `pi`; `pi_u` and `pi_l` carry over unchanged.
pub fn derive_uncoupled_permutation(perms: &CouplingPermutations) -> Result<Permutation> {
    match perms {
        CouplingPermutations::Pcc { pi_u, pi, pi_l } => pi_u.inverse().then(pi)?.then(pi_l),
        CouplingPermutations::Scc { pi1, pi2 } | CouplingPermutations::Hcc { pi1, pi2, .. } => pi1.then(pi2),
        CouplingPermutations::Bcc { pi, pi_u, pi_l } => {
            if pi_u.len() != pi.len() || pi_l.len() != pi.len() {
                return Err(Error::LengthMismatch { expected: pi.len(), got: pi_u.len().max(pi_l.len()) });
            }
            Ok(pi.clone())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CouplingSpec {
    pub perms: CouplingPermutations,
    /// Information length per slot.
    pub n: usize,
    /// Coupling length.
    pub l: usize,
    /// Chain boundary: zero blocks before slot 1 and coupled outputs of slot
    /// `L` forced to zero, or slot 1 coupled to slot `L`.
    pub boundary: Termination,
    /// Boundary of every component trellis inside a slot.
    pub component_mode: Termination,
}

impl CouplingSpec {
    pub fn new(perms: CouplingPermutations, n: usize, l: usize, boundary: Termination) -> Result<CouplingSpec> {
        if n < 2 || l == 0 {
            return Err(Error::InvalidParameter(format!("need N >= 2 and L >= 1, got N={n} L={l}")));
        }
        perms.check_lengths(n)?;
        Ok(CouplingSpec {
            perms,
            n,
            l,
            boundary,
            component_mode: Termination::Terminated,
        })
    }

    pub fn with_component_mode(mut self, mode: Termination) -> CouplingSpec {
        self.component_mode = mode;
        self
    }

    pub fn kind(&self) -> EnsembleKind {
        self.perms.kind()
    }

    /// `(name, length)` of each stream in a slot.
    pub fn streams(&self) -> Vec<(&'static str, usize)> {
        let n = self.n;
        match self.kind() {
            EnsembleKind::Pcc => vec![("u", n), ("vU", n), ("vL", n)],
            EnsembleKind::Scc => vec![("u", n), ("vO", n), ("vI", 2 * n)],
            EnsembleKind::Bcc => vec![("u", n), ("vU", n), ("vL", n)],
            EnsembleKind::Hcc => vec![("u", n), ("vU", n), ("vL", n), ("vI", 2 * n)],
        }
    }

    /// Indices of the transmitted streams.
    pub fn transmitted(&self) -> &'static [usize] {
        match self.kind() {
            EnsembleKind::Pcc | EnsembleKind::Bcc => &[0, 1, 2],
            EnsembleKind::Scc => &[0, 2],
            EnsembleKind::Hcc => &[0, 3],
        }
    }

    pub(crate) fn generator(&self) -> &'static str {
        match self.kind() {
            EnsembleKind::Bcc => RATE_TWO_THIRDS_GENERATOR,
            _ => RATE_HALF_GENERATOR,
        }
    }

    fn previous(&self, t: usize) -> Option<usize> {
        match (t, self.boundary) {
            (0, Termination::Terminated) => None,
            (0, Termination::Tailbiting) => Some(self.l - 1),
            _ => Some(t - 1),
        }
    }
}

/// One trellis constraint: component inputs and parity.
pub(crate) struct Local<T> {
    pub(crate) inputs: Vec<Vec<T>>,
    pub(crate) parity: Vec<T>,
}

/// Local constraints of the chain plus bits forced to zero by the chain
/// boundary, with bits drawn from `slots[t][stream]`.
pub(crate) fn wiring<T: Copy>(spec: &CouplingSpec, slots: &[Vec<Vec<T>>], zero: T) -> (Vec<Local<T>>, Vec<T>) {
    let n = spec.n;
    let mut locals = Vec::new();
    let mut forced = Vec::new();
    let last = spec.l - 1;
    let terminated = spec.boundary == Termination::Terminated;
    // (x_t first part, x_prev second part)
    let couple = |cur: &[T], prev: Option<&[T]>| -> Vec<T> {
        let h = cur.len().div_ceil(2);
        let mut out = cur[..h].to_vec();
        match prev {
            Some(p) => out.extend_from_slice(&p[h..]),
            None => out.extend(std::iter::repeat_n(zero, cur.len() - h)),
        }
        out
    };
    let second_half = |x: &[T]| x[x.len().div_ceil(2)..].to_vec();
    for t in 0..spec.l {
        let s = &slots[t];
        let prev = spec.previous(t).map(|p| &slots[p]);
        match &spec.perms {
            CouplingPermutations::Pcc { pi_u, pi, pi_l } => {
                locals.push(Local {
                    inputs: vec![pi_u.apply(&couple(&s[0], prev.map(|p| p[0].as_slice())))],
                    parity: s[1].clone(),
                });
                let up = pi.apply(&s[0]);
                let up_prev = prev.map(|p| pi.apply(&p[0]));
                locals.push(Local {
                    inputs: vec![pi_l.apply(&couple(&up, up_prev.as_deref()))],
                    parity: s[2].clone(),
                });
                if terminated && t == last {
                    forced.extend(second_half(&s[0]));
                    forced.extend(second_half(&up));
                }
            }
            CouplingPermutations::Scc { pi1, pi2 } => {
                locals.push(Local { inputs: vec![s[0].clone()], parity: s[1].clone() });
                let w = |x: &Vec<Vec<T>>| pi1.apply(&[x[0].as_slice(), x[1].as_slice()].concat());
                let w_t = w(s);
                let w_prev = prev.map(w);
                locals.push(Local {
                    inputs: vec![pi2.apply(&couple(&w_t, w_prev.as_deref()))],
                    parity: s[2].clone(),
                });
                if terminated && t == last {
                    forced.extend(second_half(&w_t));
                }
            }
            CouplingPermutations::Bcc { pi, pi_u, pi_l } => {
                let zeros = vec![zero; n];
                let (vu_prev, vl_prev) = prev.map_or((zeros.clone(), zeros), |p| (p[1].clone(), p[2].clone()));
                locals.push(Local {
                    inputs: vec![s[0].clone(), pi_u.apply(&vl_prev)],
                    parity: s[1].clone(),
                });
                locals.push(Local {
                    inputs: vec![pi.apply(&s[0]), pi_l.apply(&vu_prev)],
                    parity: s[2].clone(),
                });
                if terminated && t == last {
                    forced.extend_from_slice(&s[1]);
                    forced.extend_from_slice(&s[2]);
                }
            }
            CouplingPermutations::Hcc { pi_l, pi1, pi2 } => {
                locals.push(Local { inputs: vec![s[0].clone()], parity: s[1].clone() });
                locals.push(Local { inputs: vec![pi_l.apply(&s[0])], parity: s[2].clone() });
                let w = |x: &Vec<Vec<T>>| pi1.apply(&[x[1].as_slice(), x[2].as_slice()].concat());
                let w_t = w(s);
                let w_prev = prev.map(w);
                locals.push(Local {
                    inputs: vec![pi2.apply(&couple(&w_t, w_prev.as_deref()))],
                    parity: s[3].clone(),
                });
                if terminated && t == last {
                    forced.extend(second_half(&w_t));
                }
            }
        }
    }
    (locals, forced)
}

/// Linear response of a trellis: state update and parity as bit masks.
struct LinearTrellis {
    memory: usize,
    k: usize,
    /// `a[b]`: next-state bits when only state bit `b` is set.
    a: Vec<usize>,
    /// `b[r]`: next-state bits when only input `r` is set.
    b: Vec<usize>,
    c: Vec<bool>,
    d: Vec<bool>,
}

impl LinearTrellis {
    fn new(t: &Trellis) -> LinearTrellis {
        let memory = t.states().trailing_zeros() as usize;
        let k = t.inputs();
        let parity = |s: usize, x: u32| (t.output_label(s, x) >> k) & 1 == 1;
        LinearTrellis {
            memory,
            k,
            a: (0..memory).map(|b| t.next_state(1 << b, 0)).collect(),
            b: (0..k).map(|r| t.next_state(0, 1 << r)).collect(),
            c: (0..memory).map(|b| parity(1 << b, 0)).collect(),
            d: (0..k).map(|r| parity(0, 1 << r)).collect(),
        }
    }

    /// Parity and boundary equations over `vars` variables.
    fn rows(&self, local: &Local<Option<usize>>, start: Option<&[usize]>, vars: usize) -> Vec<BitVec> {
        let mut state: Vec<BitVec> = (0..self.memory)
            .map(|b| match start {
                Some(sv) => BitVec::unit(vars, sv[b]),
                None => BitVec::zeros(vars),
            })
            .collect();
        let mut rows = Vec::with_capacity(local.parity.len() + self.memory);
        for (j, p) in local.parity.iter().enumerate() {
            let mut row = BitVec::zeros(vars);
            if let Some(p) = p {
                row.flip(*p);
            }
            for (b, s) in state.iter().enumerate() {
                if self.c[b] {
                    row.xor_assign(s);
                }
            }
            let mut next: Vec<BitVec> = vec![BitVec::zeros(vars); self.memory];
            for (b, s) in state.iter().enumerate() {
                for (nb, nx) in next.iter_mut().enumerate() {
                    if (self.a[b] >> nb) & 1 == 1 {
                        nx.xor_assign(s);
                    }
                }
            }
            for r in 0..self.k {
                if let Some(x) = local.inputs[r][j] {
                    if self.d[r] {
                        row.flip(x);
                    }
                    for (nb, nx) in next.iter_mut().enumerate() {
                        if (self.b[r] >> nb) & 1 == 1 {
                            nx.flip(x);
                        }
                    }
                }
            }
            rows.push(row);
            state = next;
        }
        for (b, mut s) in state.into_iter().enumerate() {
            if let Some(sv) = start {
                s.flip(sv[b]);
            }
            rows.push(s);
        }
        rows
    }
}

/// Per-slot streams of a coupled codeword, `slots[t][stream]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoupledCodeword {
    pub kind: EnsembleKind,
    pub slots: Vec<Vec<Vec<u8>>>,
}

impl CoupledCodeword {
    pub fn weight(&self, transmitted: &[usize]) -> usize {
        self.slots
            .iter()
            .map(|s| transmitted.iter().map(|&j| s[j].iter().filter(|&&b| b != 0).count()).sum::<usize>())
            .sum()
    }
}

/// A coupled code compiled to a linear system.
pub struct CoupledCode {
    spec: CouplingSpec,
    trellis: Trellis,
    /// `vars_of[t][stream]`.
    vars_of: Vec<Vec<Vec<usize>>>,
    vars: usize,
    echelon: Echelon,
    rows: Vec<BitVec>,
}

impl CoupledCode {
    pub fn new(spec: &CouplingSpec) -> Result<CoupledCode> {
        let trellis = build_trellis(&parse_generator(spec.generator())?);
        let lin = LinearTrellis::new(&trellis);
        let mut vars = 0;
        let vars_of: Vec<Vec<Vec<usize>>> = (0..spec.l)
            .map(|_| {
                spec.streams()
                    .iter()
                    .map(|&(_, len)| {
                        let r: Vec<usize> = (vars..vars + len).collect();
                        vars += len;
                        r
                    })
                    .collect()
            })
            .collect();
        let symbolic: Vec<Vec<Vec<Option<usize>>>> = vars_of
            .iter()
            .map(|s| s.iter().map(|x| x.iter().map(|&v| Some(v)).collect()).collect())
            .collect();
        let (locals, forced) = wiring(spec, &symbolic, None);
        let state_base = vars;
        if spec.component_mode == Termination::Tailbiting {
            vars += locals.len() * lin.memory;
        }
        let mut rows = Vec::new();
        for (c, local) in locals.iter().enumerate() {
            let start: Option<Vec<usize>> = (spec.component_mode == Termination::Tailbiting)
                .then(|| (0..lin.memory).map(|b| state_base + c * lin.memory + b).collect());
            rows.extend(lin.rows(local, start.as_deref(), vars));
        }
        for v in forced.into_iter().flatten() {
            rows.push(BitVec::unit(vars, v));
        }
        // parities and states are solved for first, then information bits
        // from the end of each slot backwards
        let info: Vec<usize> = (0..spec.l).rev().flat_map(|t| vars_of[t][0].iter().rev().copied()).collect();
        let is_info = {
            let mut m = vec![false; vars];
            for &v in &info {
                m[v] = true;
            }
            m
        };
        let mut priority: Vec<usize> = (0..vars).filter(|&v| !is_info[v]).collect();
        priority.extend(info);
        let echelon = Echelon::new(vars, rows.clone(), &priority);
        Ok(CoupledCode {
            spec: spec.clone(),
            trellis,
            vars_of,
            vars,
            echelon,
            rows,
        })
    }

    pub fn spec(&self) -> &CouplingSpec {
        &self.spec
    }

    /// Number of free information bits.
    pub fn dimension(&self) -> usize {
        self.echelon.free_vars().len()
    }

    /// Encodes `info[t]` (length `N` each). Information bits the chain
    /// equations determine are overwritten; all others are kept.
    pub fn encode(&self, info: &[Vec<u8>]) -> Result<CoupledCodeword> {
        if info.len() != self.spec.l {
            return Err(Error::LengthMismatch { expected: self.spec.l, got: info.len() });
        }
        let mut x = BitVec::zeros(self.vars);
        for (t, u) in info.iter().enumerate() {
            if u.len() != self.spec.n {
                return Err(Error::LengthMismatch { expected: self.spec.n, got: u.len() });
            }
            for (j, &b) in u.iter().enumerate() {
                x.set(self.vars_of[t][0][j], b & 1 == 1);
            }
        }
        self.echelon.complete(&mut x);
        debug_assert!(self.rows.iter().all(|r| !r.dot(&x)));
        Ok(self.codeword_from(&x))
    }

    fn codeword_from(&self, x: &BitVec) -> CoupledCodeword {
        CoupledCodeword {
            kind: self.spec.kind(),
            slots: self
                .vars_of
                .iter()
                .map(|s| s.iter().map(|v| v.iter().map(|&i| u8::from(x.get(i))).collect()).collect())
                .collect(),
        }
    }

    /// Random information blocks of a seeded stream.
    pub fn random_info(&self, seed: u64) -> Vec<Vec<u8>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.spec.l)
            .map(|_| (0..self.spec.n).map(|_| u8::from(rng.random_bool(0.5))).collect())
            .collect()
    }

    /// Minimum transmitted weight over all nonzero codewords, by Gray-code
    /// enumeration of the code space.
    pub fn min_distance(&self) -> Result<usize> {
        let basis = self.echelon.kernel_basis();
        if basis.len() > 24 {
            return Err(Error::SizeGuard(format!("2^{} codewords", basis.len())));
        }
        let mut mask = BitVec::zeros(self.vars);
        for s in &self.vars_of {
            for &j in self.spec.transmitted() {
                for &v in &s[j] {
                    mask.set(v, true);
                }
            }
        }
        let masked: Vec<BitVec> = basis
            .iter()
            .map(|b| {
                let mut m = BitVec::zeros(self.vars);
                for i in b.ones().filter(|&i| mask.get(i)) {
                    m.set(i, true);
                }
                m
            })
            .collect();
        let mut cur = BitVec::zeros(self.vars);
        let mut best = usize::MAX;
        for g in 1u64..(1u64 << masked.len()) {
            cur.xor_assign(&masked[g.trailing_zeros() as usize]);
            best = best.min(cur.weight());
        }
        Ok(best)
    }
}

/// Re-checks every local constraint of a coupled codeword on its trellis.
pub fn coupled_membership(code: &CoupledCode, cw: &CoupledCodeword) -> Result<bool> {
    let spec = &code.spec;
    if cw.slots.len() != spec.l {
        return Err(Error::LengthMismatch { expected: spec.l, got: cw.slots.len() });
    }
    let (locals, forced) = wiring(spec, &cw.slots, 0u8);
    for local in &locals {
        let mut streams = local.inputs.clone();
        streams.push(local.parity.clone());
        if !check_membership(&code.trellis, &streams, spec.component_mode)? {
            return Ok(false);
        }
    }
    Ok(forced.iter().all(|&b| b == 0))
}

fn xor_sum(blocks: impl Iterator<Item = Vec<u8>>, len: usize) -> Vec<u8> {
    blocks.fold(vec![0u8; len], |mut acc, b| {
        for (a, x) in acc.iter_mut().zip(b) {
            *a ^= x;
        }
        acc
    })
}

/// Candidate codeword of the uncoupled code, same stream order as a slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UncoupledCodeword {
    pub streams: Vec<Vec<u8>>,
}

/// XOR of all slots; for PCC the information sum is permuted by `pi_u`.
pub fn superpose(spec: &CouplingSpec, cw: &CoupledCodeword) -> UncoupledCodeword {
    let mut streams: Vec<Vec<u8>> = spec
        .streams()
        .iter()
        .enumerate()
        .map(|(j, &(_, len))| xor_sum(cw.slots.iter().map(|s| s[j].clone()), len))
        .collect();
    if let CouplingPermutations::Pcc { pi_u, .. } = &spec.perms {
        streams[0] = pi_u.apply(&streams[0]);
    }
    UncoupledCodeword { streams }
}

/// Membership in the uncoupled code paired with the chain's permutations.
pub fn uncoupled_membership(spec: &CouplingSpec, v: &UncoupledCodeword) -> Result<bool> {
    let t = build_trellis(&parse_generator(spec.generator())?);
    let mode = spec.component_mode;
    let un = derive_uncoupled_permutation(&spec.perms)?;
    let s = &v.streams;
    let checks: Vec<Vec<Vec<u8>>> = match &spec.perms {
        CouplingPermutations::Pcc { .. } => vec![
            vec![s[0].clone(), s[1].clone()],
            vec![un.apply(&s[0]), s[2].clone()],
        ],
        CouplingPermutations::Scc { .. } => vec![
            vec![s[0].clone(), s[1].clone()],
            vec![un.apply(&[s[0].as_slice(), s[1].as_slice()].concat()), s[2].clone()],
        ],
        CouplingPermutations::Bcc { pi_u, pi_l, .. } => vec![
            vec![s[0].clone(), pi_u.apply(&s[2]), s[1].clone()],
            vec![un.apply(&s[0]), pi_l.apply(&s[1]), s[2].clone()],
        ],
        CouplingPermutations::Hcc { pi_l, .. } => vec![
            vec![s[0].clone(), s[1].clone()],
            vec![pi_l.apply(&s[0]), s[2].clone()],
            vec![un.apply(&[s[1].as_slice(), s[2].as_slice()].concat()), s[3].clone()],
        ],
    };
    for streams in &checks {
        if !check_membership(&t, streams, mode)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TheoremReport {
    pub is_uncoupled_codeword: bool,
    pub w_coupled: usize,
    pub w_superposed: usize,
}

impl TheoremReport {
    pub fn passed(&self) -> bool {
        self.is_uncoupled_codeword && self.w_superposed <= self.w_coupled
    }

    /// `pass|fail, w_coupled, w_superposed`.
    pub fn to_text(&self) -> String {
        format!(
            "{}, {}, {}",
            if self.passed() { "pass" } else { "fail" },
            self.w_coupled,
            self.w_superposed
        )
    }
}

pub fn verify_theorem(spec: &CouplingSpec, cw: &CoupledCodeword) -> Result<TheoremReport> {
    let v = superpose(spec, cw);
    let w_superposed = spec
        .transmitted()
        .iter()
        .map(|&j| v.streams[j].iter().filter(|&&b| b != 0).count())
        .sum();
    Ok(TheoremReport {
        is_uncoupled_codeword: uncoupled_membership(spec, &v)?,
        w_coupled: cw.weight(spec.transmitted()),
        w_superposed,
    })
}

/// Minimum distance of the uncoupled PCC with lower interleaver `pi_un`
/// and terminated components, by enumerating all information words.
pub fn uncoupled_pcc_min_distance(n: usize, pi_un: &Permutation) -> Result<usize> {
    if n > 20 {
        return Err(Error::SizeGuard(format!("2^{n} information words")));
    }
    let t = build_trellis(&parse_generator(RATE_HALF_GENERATOR)?);
    let parity = |x: &[u8]| -> Option<usize> {
        let mut s = 0;
        let mut w = 0;
        for &b in x {
            let br = t.branch(s, u32::from(b));
            w += ((br.output >> 1) & 1) as usize;
            s = br.next as usize;
        }
        (s == 0).then_some(w)
    };
    let mut best = usize::MAX;
    for w in 1u64..(1u64 << n) {
        let u: Vec<u8> = (0..n).map(|j| ((w >> j) & 1) as u8).collect();
        if let (Some(pu), Some(pl)) = (parity(&u), parity(&pi_un.apply(&u))) {
            best = best.min(w.count_ones() as usize + pu + pl);
        }
    }
    Ok(best)
}

/// Text dump: a header line, then `t,hex,hex,...` per slot with bit `j` of
/// a stream in nibble `j / 4`, bit `j % 4`.
pub fn dump_chain(spec: &CouplingSpec, cw: &CoupledCodeword) -> String {
    let names: Vec<&str> = spec.streams().iter().map(|s| s.0).collect();
    let mut out = format!(
        "# chain kind={} N={} L={} boundary={} streams={}\n",
        spec.kind(),
        spec.n,
        spec.l,
        spec.boundary.as_str(),
        names.join(",")
    );
    for (t, slot) in cw.slots.iter().enumerate() {
        let _ = write!(out, "{}", t + 1);
        for s in slot {
            out.push(',');
            out.push_str(&to_hex(s));
        }
        out.push('\n');
    }
    out
}

pub fn to_hex(bits: &[u8]) -> String {
    bits.chunks(4)
        .map(|c| {
            let v = c.iter().enumerate().fold(0u32, |a, (i, &b)| a | (u32::from(b & 1) << i));
            char::from_digit(v, 16).expect("nibble")
        })
        .collect()
}

pub fn from_hex(text: &str, len: usize) -> Result<Vec<u8>> {
    let mut bits = Vec::with_capacity(len);
    for ch in text.chars() {
        let v = ch
            .to_digit(16)
            .ok_or_else(|| Error::Parse(format!("bad hex digit `{ch}`")))?;
        for i in 0..4 {
            bits.push(((v >> i) & 1) as u8);
        }
    }
    if bits.len() < len || bits[len..].iter().any(|&b| b != 0) || bits.len() >= len + 4 {
        return Err(Error::Parse(format!("`{text}` does not encode {len} bits")));
    }
    bits.truncate(len);
    Ok(bits)
}

/// Parses a chain dump produced by [`dump_chain`] for `spec`.
pub fn read_chain(spec: &CouplingSpec, text: &str) -> Result<CoupledCodeword> {
    let lens: Vec<usize> = spec.streams().iter().map(|s| s.1).collect();
    let mut slots = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != lens.len() + 1 {
            return Err(Error::Parse(format!("bad chain line `{line}`")));
        }
        let t: usize = parts[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad slot index in `{line}`")))?;
        if t != slots.len() + 1 {
            return Err(Error::Parse(format!("slot {t} out of order")));
        }
        let slot = parts[1..]
            .iter()
            .zip(&lens)
            .map(|(h, &len)| from_hex(h, len))
            .collect::<Result<Vec<_>>>()?;
        slots.push(slot);
    }
    if slots.len() != spec.l {
        return Err(Error::LengthMismatch { expected: spec.l, got: slots.len() });
    }
    Ok(CoupledCodeword { kind: spec.kind(), slots })
}
