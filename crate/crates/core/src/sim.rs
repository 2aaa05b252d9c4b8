//! Monte Carlo simulation over the BPSK-AWGN channel.
//!
//! Every simulated code is a set of component trellises acting on shared
//! bit variables. Component decoders run exact log-MAP BCJR and the
//! iterative and sliding-window decoders pass extrinsic LLRs between
//! trellises through those variables. LLRs are `ln P(0)/P(1)`.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::coupling::{derive_uncoupled_permutation, wiring, CouplingPermutations, CouplingSpec, Permutation};
use crate::ensembles::{EnsembleKind, RATE_HALF_GENERATOR, RATE_TWO_THIRDS_GENERATOR};
use crate::trellis::{build_trellis, encode_block, parse_generator, Termination, Trellis};
use crate::{Error, Result};

/// Prior LLR of bits fixed to zero by the code structure.
pub const KNOWN_ZERO_LLR: f64 = 1e4;

/// Energy normalization of every simulated code.
pub const RATE: f64 = 1.0 / 3.0;

const ZERO: usize = usize::MAX;

/// Jacobian logarithm `ln(e^a + e^b)`.
pub fn max_star(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    let d = hi - lo;
    if d > 40.0 {
        hi
    } else {
        hi + (-d).exp().ln_1p()
    }
}

/// Trellis boundary seen by a component decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Starts and ends in state zero.
    Terminated,
    /// Starts in state zero, ends anywhere.
    Open,
    Tailbiting,
}

impl From<Termination> for Boundary {
    fn from(t: Termination) -> Boundary {
        match t {
            Termination::Terminated => Boundary::Terminated,
            Termination::Tailbiting => Boundary::Tailbiting,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BcjrOutput {
    /// A-posteriori LLRs of every stream (inputs, then parity).
    pub app: Vec<Vec<f64>>,
    /// `app - channel - prior`.
    pub extrinsic: Vec<Vec<f64>>,
}

struct Edge {
    from: usize,
    next: usize,
    label: usize,
}

fn edges(t: &Trellis) -> Vec<Edge> {
    (0..t.states())
        .flat_map(|s| {
            t.branches(s).map(move |b| Edge {
                from: s,
                next: b.next as usize,
                label: b.output as usize,
            })
        })
        .collect()
}

fn normalize(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_finite() {
        v.iter_mut().for_each(|x| *x -= m);
    }
}

/// APP LLRs of every stream given the total input LLR of every stream.
fn app_llrs(t: &Trellis, llr: &[Vec<f64>], boundary: Boundary) -> Vec<Vec<f64>> {
    let s = t.states();
    let n = t.outputs();
    let len = llr.first().map_or(0, Vec::len);
    let edges = edges(t);
    let labels = 1usize << n;
    let mut gamma = vec![0.0; len * labels];
    for j in 0..len {
        for (lab, g) in gamma[j * labels..(j + 1) * labels].iter_mut().enumerate() {
            *g = (0..n)
                .map(|r| if (lab >> r) & 1 == 0 { 0.5 * llr[r][j] } else { -0.5 * llr[r][j] })
                .sum();
        }
    }
    let ninf = f64::NEG_INFINITY;
    let zero_state = || {
        let mut v = vec![ninf; s];
        v[0] = 0.0;
        v
    };
    let tailbiting = boundary == Boundary::Tailbiting;
    let passes = if tailbiting { 2 } else { 1 };

    let mut alpha = vec![ninf; (len + 1) * s];
    if tailbiting {
        alpha[..s].fill(0.0);
    } else {
        alpha[..s].copy_from_slice(&zero_state());
    }
    for pass in 0..passes {
        if pass > 0 {
            alpha.copy_within(len * s.., 0);
        }
        for j in 0..len {
            let (head, tail) = alpha.split_at_mut((j + 1) * s);
            let cur = &head[j * s..];
            let next = &mut tail[..s];
            next.fill(ninf);
            let g = &gamma[j * labels..];
            for e in &edges {
                next[e.next] = max_star(next[e.next], cur[e.from] + g[e.label]);
            }
            normalize(next);
        }
    }

    let mut beta = vec![ninf; (len + 1) * s];
    if boundary == Boundary::Terminated {
        beta[len * s..].copy_from_slice(&zero_state());
    } else {
        beta[len * s..].fill(0.0);
    }
    for pass in 0..passes {
        if pass > 0 {
            beta.copy_within(..s, len * s);
        }
        for j in (0..len).rev() {
            let (head, tail) = beta.split_at_mut((j + 1) * s);
            let cur = &mut head[j * s..];
            let next = &tail[..s];
            cur.fill(ninf);
            let g = &gamma[j * labels..];
            for e in &edges {
                cur[e.from] = max_star(cur[e.from], g[e.label] + next[e.next]);
            }
            normalize(cur);
        }
    }

    let mut app = vec![vec![0.0; len]; n];
    let mut acc = vec![[ninf; 2]; n];
    for j in 0..len {
        acc.fill([ninf; 2]);
        let g = &gamma[j * labels..];
        for e in &edges {
            let m = alpha[j * s + e.from] + g[e.label] + beta[(j + 1) * s + e.next];
            for (r, a) in acc.iter_mut().enumerate() {
                let bit = (e.label >> r) & 1;
                a[bit] = max_star(a[bit], m);
            }
        }
        for (r, a) in acc.iter().enumerate() {
            app[r][j] = a[0] - a[1];
        }
    }
    app
}

/// Exact log-MAP decoding of one trellis.
///
/// `channel` holds one LLR row per stream (inputs, then parity; zeros for
/// punctured bits) and `prior` one row per input stream. Tailbiting
/// blocks use two wrap-around passes in each direction.
pub fn bcjr_app(t: &Trellis, channel: &[Vec<f64>], prior: &[Vec<f64>], boundary: Boundary) -> Result<BcjrOutput> {
    let n = t.outputs();
    let k = t.inputs();
    if channel.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: channel.len() });
    }
    if prior.len() != k {
        return Err(Error::LengthMismatch { expected: k, got: prior.len() });
    }
    let len = channel[0].len();
    for row in channel.iter().chain(prior) {
        if row.len() != len {
            return Err(Error::LengthMismatch { expected: len, got: row.len() });
        }
    }
    let llr: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            if r < k {
                channel[r].iter().zip(&prior[r]).map(|(c, p)| c + p).collect()
            } else {
                channel[r].clone()
            }
        })
        .collect();
    let app = app_llrs(t, &llr, boundary);
    let extrinsic = app
        .iter()
        .zip(&llr)
        .map(|(a, l)| a.iter().zip(l).map(|(a, l)| a - l).collect())
        .collect();
    Ok(BcjrOutput { app, extrinsic })
}

/// `N0` for unit-energy BPSK symbols at the given `Eb/N0` and rate.
pub fn noise_density(ebn0_db: f64, rate: f64) -> f64 {
    1.0 / (rate * 10f64.powf(ebn0_db / 10.0))
}

/// Sends `bits` as `1 - 2b` over AWGN and returns channel LLRs `4y/N0`.
pub fn awgn_transmit<R: Rng + ?Sized>(bits: &[u8], ebn0_db: f64, rate: f64, rng: &mut R) -> Vec<f64> {
    let n0 = noise_density(ebn0_db, rate);
    let sigma = (n0 / 2.0).sqrt();
    bits.iter()
        .map(|&b| {
            let noise: f64 = rng.sample(StandardNormal);
            let y = 1.0 - 2.0 * f64::from(b & 1) + sigma * noise;
            4.0 * y / n0
        })
        .collect()
}

#[derive(Clone, Debug)]
struct Factor {
    trellis: usize,
    boundary: Boundary,
    /// Variable ids per stream (inputs, then parity).
    streams: Vec<Vec<usize>>,
}

#[derive(Clone, Debug)]
enum Encoder {
    Pcc(Permutation),
    Scc(Permutation),
    Hcc(Permutation, Permutation),
}

/// Trellis constraints on shared bit variables, with transmitted and
/// information variables marked.
#[derive(Clone, Debug)]
pub struct FrameCode {
    kind: EnsembleKind,
    k: usize,
    trellises: Vec<Trellis>,
    factors: Vec<Factor>,
    vars: usize,
    transmitted: Vec<usize>,
    known_zero: Vec<usize>,
    /// Information variables per frame; chains have one frame per slot.
    frames: Vec<Vec<usize>>,
    /// Factors of each slot in schedule order.
    slots: Vec<Vec<usize>>,
    chain: Option<Termination>,
    encoder: Option<Encoder>,
}

fn trellis_for(generator: &str) -> Result<Trellis> {
    Ok(build_trellis(&parse_generator(generator)?))
}

fn ids(start: usize, len: usize) -> Vec<usize> {
    (start..start + len).collect()
}

fn open_parity(t: &Trellis, input: &[u8]) -> Vec<u8> {
    let k = t.inputs();
    let mut s = 0;
    input
        .iter()
        .map(|&b| {
            let x = u32::from(b & 1);
            let p = ((t.output_label(s, x) >> k) & 1) as u8;
            s = t.next_state(s, x);
            p
        })
        .collect()
}

impl FrameCode {
    /// Uncoupled code with upper (outer) components terminated and the
    /// others left open, except BCC where both trellises are terminated.
    pub fn uncoupled(k: usize, perms: &CouplingPermutations) -> Result<FrameCode> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!("K must be at least 2, got {k}")));
        }
        let kind = perms.kind();
        let term = Boundary::Terminated;
        let open = Boundary::Open;
        let factor = |boundary, streams| Factor { trellis: 0, boundary, streams };
        let (trellis, factors, vars, transmitted, encoder) = match perms {
            CouplingPermutations::Pcc { .. } => {
                let pi = derive_uncoupled_permutation(perms)?;
                let (u, p1, p2) = (ids(0, k), ids(k, k), ids(2 * k, k));
                let factors = vec![
                    factor(term, vec![u.clone(), p1.clone()]),
                    factor(open, vec![pi.apply(&u), p2.clone()]),
                ];
                let tx = [u, p1, p2].concat();
                (RATE_HALF_GENERATOR, factors, 3 * k, tx, Some(Encoder::Pcc(pi)))
            }
            CouplingPermutations::Scc { .. } => {
                let pi = derive_uncoupled_permutation(perms)?;
                let (u, vo, vi) = (ids(0, k), ids(k, k), ids(2 * k, 2 * k));
                let factors = vec![
                    factor(open, vec![pi.apply(&[u.as_slice(), vo.as_slice()].concat()), vi.clone()]),
                    factor(term, vec![u.clone(), vo]),
                ];
                let tx = [u, vi].concat();
                (RATE_HALF_GENERATOR, factors, 4 * k, tx, Some(Encoder::Scc(pi)))
            }
            CouplingPermutations::Bcc { pi, pi_u, pi_l } => {
                let (u, vu, vl) = (ids(0, k), ids(k, k), ids(2 * k, k));
                let factors = vec![
                    factor(term, vec![u.clone(), pi_u.apply(&vl), vu.clone()]),
                    factor(term, vec![pi.apply(&u), pi_l.apply(&vu), vl.clone()]),
                ];
                let tx = [u, vu, vl].concat();
                (RATE_TWO_THIRDS_GENERATOR, factors, 3 * k, tx, None)
            }
            CouplingPermutations::Hcc { pi_l, .. } => {
                let pi = derive_uncoupled_permutation(perms)?;
                let (u, vu, vl, vi) = (ids(0, k), ids(k, k), ids(2 * k, k), ids(3 * k, 2 * k));
                let factors = vec![
                    factor(term, vec![u.clone(), vu.clone()]),
                    factor(open, vec![pi_l.apply(&u), vl.clone()]),
                    factor(open, vec![pi.apply(&[vu.as_slice(), vl.as_slice()].concat()), vi.clone()]),
                ];
                let tx = [u, vi].concat();
                (RATE_HALF_GENERATOR, factors, 5 * k, tx, Some(Encoder::Hcc(pi_l.clone(), pi)))
            }
        };
        let slots = vec![(0..factors.len()).collect()];
        Ok(FrameCode {
            kind,
            k,
            trellises: vec![trellis_for(trellis)?],
            factors,
            vars,
            transmitted,
            known_zero: Vec::new(),
            frames: vec![ids(0, k)],
            slots,
            chain: None,
            encoder,
        })
    }

    /// A coupled chain; one frame per slot.
    pub fn coupled(spec: &CouplingSpec) -> Result<FrameCode> {
        let streams = spec.streams();
        let mut slot_vars: Vec<Vec<Vec<Option<usize>>>> = Vec::with_capacity(spec.l);
        let mut next = 0;
        for _ in 0..spec.l {
            let mut slot = Vec::new();
            for &(_, len) in &streams {
                slot.push((next..next + len).map(Some).collect());
                next += len;
            }
            slot_vars.push(slot);
        }
        let (locals, forced) = wiring(spec, &slot_vars, None);
        let per_slot = locals.len() / spec.l;
        let boundary = Boundary::from(spec.component_mode);
        let factors = locals
            .into_iter()
            .map(|loc| Factor {
                trellis: 0,
                boundary,
                streams: loc
                    .inputs
                    .into_iter()
                    .chain(std::iter::once(loc.parity))
                    .map(|s| s.into_iter().map(|v| v.unwrap_or(ZERO)).collect())
                    .collect(),
            })
            .collect();
        let unwrap = |s: &[Option<usize>]| s.iter().map(|v| v.expect("slot variable")).collect::<Vec<_>>();
        let transmitted = slot_vars
            .iter()
            .flat_map(|slot| spec.transmitted().iter().flat_map(|&s| unwrap(&slot[s])))
            .collect();
        let frames = slot_vars.iter().map(|slot| unwrap(&slot[0])).collect();
        Ok(FrameCode {
            kind: spec.kind(),
            k: spec.n,
            trellises: vec![trellis_for(spec.generator())?],
            factors,
            vars: next,
            transmitted,
            known_zero: forced.into_iter().flatten().collect(),
            frames,
            slots: (0..spec.l).map(|t| (t * per_slot..(t + 1) * per_slot).collect()).collect(),
            chain: Some(spec.boundary),
            encoder: None,
        })
    }

    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    /// Information bits per frame.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn variables(&self) -> usize {
        self.vars
    }

    /// Number of transmitted bits.
    pub fn transmitted_len(&self) -> usize {
        self.transmitted.len()
    }

    pub fn frames(&self) -> usize {
        self.frames.len()
    }

    pub fn can_encode(&self) -> bool {
        self.encoder.is_some()
    }

    /// Encodes `k` information bits into a full variable assignment. The
    /// last `nu` bits are replaced by the tail of the terminated component.
    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        if info.len() != self.k {
            return Err(Error::LengthMismatch { expected: self.k, got: info.len() });
        }
        let t = &self.trellises[0];
        let upper = encode_block(t, &[info.to_vec()], Termination::Terminated)?;
        let (u, v) = (&upper.streams[0], &upper.streams[1]);
        Ok(match &self.encoder {
            Some(Encoder::Pcc(pi)) => [u.clone(), v.clone(), open_parity(t, &pi.apply(u))].concat(),
            Some(Encoder::Scc(pi)) => {
                let inner = open_parity(t, &pi.apply(&[u.as_slice(), v.as_slice()].concat()));
                [u.clone(), v.clone(), inner].concat()
            }
            Some(Encoder::Hcc(pi_l, pi)) => {
                let vl = open_parity(t, &pi_l.apply(u));
                let inner = open_parity(t, &pi.apply(&[v.as_slice(), vl.as_slice()].concat()));
                [u.clone(), v.clone(), vl, inner].concat()
            }
            None => {
                return Err(Error::Unsupported(format!(
                    "no direct encoder for {}; simulate the all-zero codeword",
                    self.describe()
                )))
            }
        })
    }

    /// Transmitted bits of a full assignment.
    pub fn transmit_bits(&self, assignment: &[u8]) -> Vec<u8> {
        self.transmitted.iter().map(|&v| assignment[v]).collect()
    }

    /// Information bits of a full assignment, per frame.
    pub fn info_bits(&self, assignment: &[u8]) -> Vec<Vec<u8>> {
        self.frames.iter().map(|f| f.iter().map(|&v| assignment[v]).collect()).collect()
    }

    /// Whether an assignment satisfies every trellis and fixed-zero bit.
    pub fn is_codeword(&self, assignment: &[u8]) -> bool {
        assignment.len() == self.vars
            && self.known_zero.iter().all(|&v| assignment[v] == 0)
            && (0..self.factors.len()).all(|f| self.factor_holds(f, |v| assignment[v] & 1 == 1))
    }

    fn describe(&self) -> String {
        match self.chain {
            Some(_) => format!("coupled {} chain", self.kind.as_str()),
            None => format!("uncoupled {}", self.kind.as_str()),
        }
    }

    fn factor_holds(&self, f: usize, bit: impl Fn(usize) -> bool) -> bool {
        let fac = &self.factors[f];
        let t = &self.trellises[fac.trellis];
        let k = t.inputs();
        let get = |v: usize| v != ZERO && bit(v);
        let len = fac.streams[0].len();
        let starts: Vec<usize> = match fac.boundary {
            Boundary::Tailbiting => (0..t.states()).collect(),
            _ => vec![0],
        };
        starts.into_iter().any(|s0| {
            let mut s = s0;
            for j in 0..len {
                let x = (0..k).fold(0u32, |acc, r| acc | (u32::from(get(fac.streams[r][j])) << r));
                let p = (t.output_label(s, x) >> k) & 1 == 1;
                if p != get(fac.streams[k][j]) {
                    return false;
                }
                s = t.next_state(s, x);
            }
            match fac.boundary {
                Boundary::Terminated => s == 0,
                Boundary::Open => true,
                Boundary::Tailbiting => s == s0,
            }
        })
    }

    fn channel_vector(&self, llr: &[f64]) -> Result<Vec<f64>> {
        if llr.len() != self.transmitted.len() {
            return Err(Error::LengthMismatch { expected: self.transmitted.len(), got: llr.len() });
        }
        let mut ch = vec![0.0; self.vars];
        for (&v, &l) in self.transmitted.iter().zip(llr) {
            ch[v] = l;
        }
        for &v in &self.known_zero {
            ch[v] = KNOWN_ZERO_LLR;
        }
        Ok(ch)
    }
}

/// Channel LLR plus all factor messages per variable, and the messages.
struct Beliefs {
    total: Vec<f64>,
    msgs: Vec<Vec<Vec<f64>>>,
}

impl Beliefs {
    fn new(code: &FrameCode, channel: Vec<f64>) -> Beliefs {
        let msgs = code
            .factors
            .iter()
            .map(|f| f.streams.iter().map(|s| vec![0.0; s.len()]).collect())
            .collect();
        Beliefs { total: channel, msgs }
    }

    fn update(&mut self, code: &FrameCode, f: usize) {
        let fac = &code.factors[f];
        let msgs = &mut self.msgs[f];
        let llr: Vec<Vec<f64>> = fac
            .streams
            .iter()
            .zip(msgs.iter())
            .map(|(vars, m)| {
                vars.iter()
                    .zip(m)
                    .map(|(&v, &m)| if v == ZERO { KNOWN_ZERO_LLR } else { self.total[v] - m })
                    .collect()
            })
            .collect();
        let app = app_llrs(&code.trellises[fac.trellis], &llr, fac.boundary);
        for (r, vars) in fac.streams.iter().enumerate() {
            for (j, &v) in vars.iter().enumerate() {
                if v == ZERO {
                    continue;
                }
                let e = app[r][j] - llr[r][j];
                self.total[v] += e - msgs[r][j];
                msgs[r][j] = e;
            }
        }
    }

    fn hard(&self, v: usize) -> bool {
        self.total[v] < 0.0
    }

    /// Runs `schedule` up to `iterations` times; returns the count used.
    fn iterate(&mut self, code: &FrameCode, schedule: &[usize], iterations: usize, early_stop: bool) -> usize {
        for it in 0..iterations {
            for &f in schedule {
                self.update(code, f);
            }
            if early_stop && schedule.iter().all(|&f| code.factor_holds(f, |v| self.hard(v))) {
                return it + 1;
            }
        }
        iterations
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decoded {
    /// Hard decisions on the information bits of each frame.
    pub bits: Vec<Vec<u8>>,
    /// Full iterations run, summed over window positions.
    pub iterations: usize,
}

fn decisions(code: &FrameCode, b: &Beliefs, frame: usize) -> Vec<u8> {
    code.frames[frame].iter().map(|&v| u8::from(b.hard(v))).collect()
}

/// Turbo decoding of the whole graph with channel LLRs of the
/// transmitted bits. With `early_stop`, iterations end once the hard
/// decisions form a codeword.
pub fn decode_iterative(code: &FrameCode, llr: &[f64], iterations: usize, early_stop: bool) -> Result<Decoded> {
    let mut b = Beliefs::new(code, code.channel_vector(llr)?);
    let schedule: Vec<usize> = code.slots.concat();
    let used = b.iterate(code, &schedule, iterations, early_stop);
    Ok(Decoded {
        bits: (0..code.frames.len()).map(|f| decisions(code, &b, f)).collect(),
        iterations: used,
    })
}

/// Sliding-window decoding of a terminated chain: at position `t` the
/// slots `t..t+W` are iterated and slot `t` is decided.
pub fn decode_window(
    code: &FrameCode,
    llr: &[f64],
    window: usize,
    iterations: usize,
    early_stop: bool,
) -> Result<Decoded> {
    match code.chain {
        Some(Termination::Terminated) => {}
        Some(Termination::Tailbiting) => {
            return Err(Error::Unsupported("window decoding needs a terminated chain".into()))
        }
        None => return Err(Error::Unsupported("window decoding needs a coupled chain".into())),
    }
    let l = code.slots.len();
    if window == 0 || window > l {
        return Err(Error::InvalidParameter(format!("window W={window} must satisfy 1 <= W <= L={l}")));
    }
    let mut b = Beliefs::new(code, code.channel_vector(llr)?);
    let mut bits = Vec::with_capacity(l);
    let mut used = 0;
    for t in 0..l {
        let schedule: Vec<usize> = code.slots[t..(t + window).min(l)].concat();
        used += b.iterate(code, &schedule, iterations, early_stop);
        bits.push(decisions(code, &b, t));
    }
    Ok(Decoded { bits, iterations: used })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimCode {
    Uncoupled(EnsembleKind),
    /// Terminated chain of `l` slots decoded with a window of `window` slots.
    Coupled { kind: EnsembleKind, l: usize, window: usize },
}

impl SimCode {
    pub fn kind(&self) -> EnsembleKind {
        match *self {
            SimCode::Uncoupled(k) | SimCode::Coupled { kind: k, .. } => k,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PermutationPolicy {
    /// New permutations for every frame (chain).
    Fresh,
    Fixed(u64),
}

impl std::fmt::Display for PermutationPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PermutationPolicy::Fresh => f.write_str("fresh"),
            PermutationPolicy::Fixed(s) => write!(f, "fixed:{s}"),
        }
    }
}

impl FromStr for PermutationPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<PermutationPolicy> {
        if s == "fresh" {
            return Ok(PermutationPolicy::Fresh);
        }
        s.strip_prefix("fixed:")
            .and_then(|seed| seed.parse().ok())
            .map(PermutationPolicy::Fixed)
            .ok_or_else(|| Error::Parse(format!("permutation policy '{s}', expected fresh or fixed:<seed>")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub code: SimCode,
    /// Information bits per frame (per slot for chains).
    pub k: usize,
    pub ebn0_db: Vec<f64>,
    pub max_frames: u64,
    pub target_frame_errors: u64,
    /// Iterations per frame, or per window position for chains.
    pub iterations: usize,
    pub seed: u64,
    pub permutations: PermutationPolicy,
    /// Random information bits through the encoder; otherwise the all-zero
    /// codeword is sent.
    pub random_messages: bool,
    pub early_stop: bool,
    /// Frames (chains) decoded per parallel batch.
    pub batch: usize,
}

impl SimConfig {
    pub fn new(code: SimCode, k: usize) -> SimConfig {
        let iterations = match code {
            SimCode::Uncoupled(_) => 16,
            SimCode::Coupled { .. } => 10,
        };
        SimConfig {
            code,
            k,
            ebn0_db: Vec::new(),
            max_frames: 1_000_000,
            target_frame_errors: 100,
            iterations,
            seed: 1,
            permutations: PermutationPolicy::Fresh,
            random_messages: matches!(code, SimCode::Uncoupled(kind) if kind != EnsembleKind::Bcc),
            early_stop: true,
            batch: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.k < 2 {
            return bad(format!("K must be at least 2, got {}", self.k));
        }
        if self.target_frame_errors == 0 {
            return bad("target frame errors must be at least 1".into());
        }
        if self.batch == 0 || self.iterations == 0 {
            return bad("batch and iterations must be positive".into());
        }
        if let Some(e) = self.ebn0_db.iter().find(|e| !e.is_finite()) {
            return bad(format!("Eb/N0 {e} dB is not finite"));
        }
        if let SimCode::Coupled { l, window, .. } = self.code {
            if window == 0 || window > l {
                return bad(format!("window W={window} must satisfy 1 <= W <= L={l}"));
            }
            if self.random_messages {
                return Err(Error::Unsupported("coupled chains are simulated with the all-zero codeword".into()));
            }
        }
        if self.random_messages && self.code == SimCode::Uncoupled(EnsembleKind::Bcc) {
            return Err(Error::Unsupported("uncoupled BCC is simulated with the all-zero codeword".into()));
        }
        Ok(())
    }

    /// Frames carried by one transmission unit.
    fn unit_frames(&self) -> u64 {
        match self.code {
            SimCode::Uncoupled(_) => 1,
            SimCode::Coupled { l, .. } => l as u64,
        }
    }

    /// Decoding latency in information bits, `W * K`, for chains.
    pub fn latency_bits(&self) -> Option<usize> {
        match self.code {
            SimCode::Uncoupled(_) => None,
            SimCode::Coupled { window, .. } => Some(window * self.k),
        }
    }

    pub fn header(&self) -> String {
        let code = match self.code {
            SimCode::Uncoupled(k) => format!("kind={}", k.as_str()),
            SimCode::Coupled { kind, l, window } => {
                format!("kind=sc-{} L={l} window={window} latency={}", kind.as_str(), window * self.k)
            }
        };
        format!(
            "# simulate {code} K={} rate=1/3 iterations={} early_stop={} seed={} perm={} messages={} max_frames={} target_errors={} batch={}",
            self.k,
            self.iterations,
            self.early_stop,
            self.seed,
            self.permutations,
            if self.random_messages { "random" } else { "zero" },
            self.max_frames,
            self.target_frame_errors,
            self.batch,
        )
    }

    fn build_code(&self, perm_seed: u64) -> Result<FrameCode> {
        let kind = self.code.kind();
        let perms = CouplingPermutations::random(kind, self.k, perm_seed);
        match self.code {
            SimCode::Uncoupled(_) => FrameCode::uncoupled(self.k, &perms),
            SimCode::Coupled { l, .. } => FrameCode::coupled(&CouplingSpec::new(perms, self.k, l, Termination::Terminated)?),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimPoint {
    pub ebn0_db: f64,
    pub info_bits: u64,
    pub bit_errors: u64,
    pub frames: u64,
    pub frame_errors: u64,
}

impl SimPoint {
    fn new(ebn0_db: f64) -> SimPoint {
        SimPoint {
            ebn0_db,
            info_bits: 0,
            bit_errors: 0,
            frames: 0,
            frame_errors: 0,
        }
    }

    pub fn ber(&self) -> f64 {
        ratio(self.bit_errors, self.info_bits)
    }

    pub fn fer(&self) -> f64 {
        ratio(self.frame_errors, self.frames)
    }

    /// Normal-approximation 95% half-width of the BER.
    pub fn ci95(&self) -> f64 {
        if self.info_bits == 0 {
            return 0.0;
        }
        let p = self.ber();
        1.96 * (p * (1.0 - p) / self.info_bits as f64).sqrt()
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    pub header: String,
    pub points: Vec<SimPoint>,
}

impl SimResult {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\nebn0_db,info_bits,bit_errors,frames,frame_errors,ber,fer,ci95\n", self.header);
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.6e},{:.6e},{:.6e}",
                p.ebn0_db,
                p.info_bits,
                p.bit_errors,
                p.frames,
                p.frame_errors,
                p.ber(),
                p.fer(),
                p.ci95()
            );
        }
        out
    }
}

/// Random stream of one transmission unit.
pub fn unit_rng(master: u64, point: usize, unit: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master.to_le_bytes());
    seed[8..16].copy_from_slice(&(point as u64).to_le_bytes());
    seed[16..24].copy_from_slice(&unit.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}

struct Outcome {
    info_bits: u64,
    bit_errors: u64,
    frames: u64,
    frame_errors: u64,
}

fn run_unit(cfg: &SimConfig, fixed: Option<&FrameCode>, point: usize, unit: u64) -> Result<Outcome> {
    let mut rng = unit_rng(cfg.seed, point, unit);
    let owned;
    let code = match fixed {
        Some(c) => c,
        None => {
            owned = cfg.build_code(rng.random())?;
            &owned
        }
    };
    let sent = if cfg.random_messages {
        let info: Vec<u8> = (0..code.k).map(|_| rng.random_range(0..2u8)).collect();
        code.encode(&info)?
    } else {
        vec![0; code.vars]
    };
    let llr = awgn_transmit(&code.transmit_bits(&sent), cfg.ebn0_db[point], RATE, &mut rng);
    let decoded = match cfg.code {
        SimCode::Uncoupled(_) => decode_iterative(code, &llr, cfg.iterations, cfg.early_stop)?,
        SimCode::Coupled { window, .. } => decode_window(code, &llr, window, cfg.iterations, cfg.early_stop)?,
    };
    let mut out = Outcome { info_bits: 0, bit_errors: 0, frames: 0, frame_errors: 0 };
    for (got, want) in decoded.bits.iter().zip(code.info_bits(&sent)) {
        let errors = got.iter().zip(&want).filter(|(a, b)| a != b).count() as u64;
        out.info_bits += want.len() as u64;
        out.bit_errors += errors;
        out.frames += 1;
        out.frame_errors += u64::from(errors > 0);
    }
    Ok(out)
}

/// Runs every Eb/N0 point until `max_frames` frames or
/// `target_frame_errors` frame errors. Units are decoded in parallel
/// batches and merged in unit order, stopping at the first unit that
/// reaches a limit, so results do not depend on the worker count.
pub fn run_monte_carlo(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let header = cfg.header();
    if cfg.max_frames == 0 {
        return Ok(SimResult { header, points: Vec::new() });
    }
    let fixed = match cfg.permutations {
        PermutationPolicy::Fixed(seed) => Some(cfg.build_code(seed)?),
        PermutationPolicy::Fresh => None,
    };
    let per_unit = cfg.unit_frames();
    let mut points = Vec::with_capacity(cfg.ebn0_db.len());
    for (point, &ebn0) in cfg.ebn0_db.iter().enumerate() {
        let mut p = SimPoint::new(ebn0);
        let mut next = 0u64;
        'point: while p.frames < cfg.max_frames && p.frame_errors < cfg.target_frame_errors {
            let remaining = (cfg.max_frames - p.frames).div_ceil(per_unit);
            let count = remaining.min(cfg.batch as u64);
            let outcomes: Vec<Result<Outcome>> = (next..next + count)
                .into_par_iter()
                .map(|u| run_unit(cfg, fixed.as_ref(), point, u))
                .collect();
            next += count;
            for o in outcomes {
                let o = o?;
                p.info_bits += o.info_bits;
                p.bit_errors += o.bit_errors;
                p.frames += o.frames;
                p.frame_errors += o.frame_errors;
                if p.frames >= cfg.max_frames || p.frame_errors >= cfg.target_frame_errors {
                    break 'point;
                }
            }
        }
        points.push(p);
    }
    Ok(SimResult { header, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::q_function;

    fn half() -> Trellis {
        trellis_for(RATE_HALF_GENERATOR).unwrap()
    }

    fn random_rows(rng: &mut ChaCha8Rng, rows: usize, len: usize, scale: f64) -> Vec<Vec<f64>> {
        (0..rows)
            .map(|_| (0..len).map(|_| rng.random_range(-scale..scale)).collect())
            .collect()
    }

    /// True MAP marginals by enumerating every input sequence.
    fn exhaustive_app(t: &Trellis, llr: &[Vec<f64>], boundary: Boundary) -> Vec<Vec<f64>> {
        let n = t.outputs();
        let k = t.inputs();
        let len = llr[0].len();
        let mut acc = vec![vec![[f64::NEG_INFINITY; 2]; len]; n];
        for seq in 0u64..(1 << (k * len)) {
            let mut s = 0;
            let mut labels = Vec::with_capacity(len);
            for j in 0..len {
                let x = ((seq >> (j * k)) & ((1 << k) - 1)) as u32;
                labels.push(t.output_label(s, x) as usize);
                s = t.next_state(s, x);
            }
            if boundary == Boundary::Terminated && s != 0 {
                continue;
            }
            let w: f64 = labels
                .iter()
                .enumerate()
                .flat_map(|(j, &lab)| (0..n).map(move |r| (j, lab, r)))
                .map(|(j, lab, r)| if (lab >> r) & 1 == 0 { 0.5 * llr[r][j] } else { -0.5 * llr[r][j] })
                .sum();
            for (j, &lab) in labels.iter().enumerate() {
                for (r, row) in acc.iter_mut().enumerate() {
                    let b = (lab >> r) & 1;
                    row[j][b] = max_star(row[j][b], w);
                }
            }
        }
        acc.iter().map(|row| row.iter().map(|a| a[0] - a[1]).collect()).collect()
    }

    #[test]
    fn max_star_is_log_sum_exp() {
        for (a, b) in [(0.0, 0.0), (1.5, -2.0), (-30.0, 12.0), (100.0, 99.0)] {
            let want = (f64::exp(a) + f64::exp(b)).ln();
            assert!((max_star(a, b) - want).abs() < 1e-12);
        }
        assert_eq!(max_star(f64::NEG_INFINITY, 3.0), 3.0);
        assert_eq!(max_star(f64::NEG_INFINITY, f64::NEG_INFINITY), f64::NEG_INFINITY);
    }

    #[test]
    fn single_section_posterior() {
        // From state 0 the parity bit equals the input bit.
        let t = half();
        let out = bcjr_app(&t, &[vec![0.7], vec![-1.9]], &[vec![0.4]], Boundary::Open).unwrap();
        assert!((out.app[0][0] - (0.7 - 1.9 + 0.4)).abs() < 1e-12);
        assert!((out.app[1][0] - out.app[0][0]).abs() < 1e-12);
    }

    #[test]
    fn matches_exhaustive_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = half();
        let t23 = trellis_for(RATE_TWO_THIRDS_GENERATOR).unwrap();
        for draw in 0..100 {
            for boundary in [Boundary::Terminated, Boundary::Open] {
                for (t, len) in [(&t, 8), (&t23, 4)] {
                    let channel = random_rows(&mut rng, t.outputs(), len, 4.0);
                    let prior = random_rows(&mut rng, t.inputs(), len, 2.0);
                    let out = bcjr_app(t, &channel, &prior, boundary).unwrap();
                    let mut total = channel.clone();
                    for (r, p) in prior.iter().enumerate() {
                        total[r].iter_mut().zip(p).for_each(|(c, p)| *c += p);
                    }
                    let want = exhaustive_app(t, &total, boundary);
                    for (a, b) in out.app.iter().flatten().zip(want.iter().flatten()) {
                        assert!((a - b).abs() < 1e-9, "draw {draw}: {a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn extrinsic_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = half();
        let channel = random_rows(&mut rng, 2, 50, 5.0);
        let prior = random_rows(&mut rng, 1, 50, 3.0);
        for boundary in [Boundary::Terminated, Boundary::Open, Boundary::Tailbiting] {
            let out = bcjr_app(&t, &channel, &prior, boundary).unwrap();
            for j in 0..50 {
                let sum = channel[0][j] + prior[0][j] + out.extrinsic[0][j];
                assert!((out.app[0][j] - sum).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn length_mismatch_is_reported() {
        let t = half();
        let err = bcjr_app(&t, &[vec![0.0; 3], vec![0.0; 2]], &[vec![0.0; 3]], Boundary::Open);
        assert!(matches!(err, Err(Error::LengthMismatch { .. })));
        assert!(bcjr_app(&t, &[vec![0.0; 3]], &[vec![0.0; 3]], Boundary::Open).is_err());
    }

    #[test]
    fn noiseless_app_recovers_codeword() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = half();
        for mode in [Termination::Terminated, Termination::Tailbiting] {
            let info: Vec<u8> = (0..40).map(|_| rng.random_range(0..2u8)).collect();
            let cw = encode_block(&t, &[info], mode).unwrap();
            let channel: Vec<Vec<f64>> =
                cw.streams.iter().map(|s| s.iter().map(|&b| 8.0 * (1.0 - 2.0 * f64::from(b))).collect()).collect();
            let out = bcjr_app(&t, &channel, &[vec![0.0; 40]], mode.into()).unwrap();
            for (app, bits) in out.app.iter().zip(&cw.streams) {
                for (a, &b) in app.iter().zip(bits) {
                    assert_eq!(u8::from(*a < 0.0), b);
                }
            }
        }
    }

    #[test]
    fn noiseless_limit_signs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bits: Vec<u8> = (0..1000).map(|_| rng.random_range(0..2u8)).collect();
        let llr = awgn_transmit(&bits, 60.0, RATE, &mut rng);
        for (l, b) in llr.iter().zip(&bits) {
            assert_eq!(l.signum(), 1.0 - 2.0 * f64::from(*b));
        }
    }

    #[test]
    fn llr_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 1_000_000;
        let (ebn0, rate) = (1.5, RATE);
        let n0 = noise_density(ebn0, rate);
        let llr = awgn_transmit(&vec![0u8; n], ebn0, rate, &mut rng);
        let mean = llr.iter().sum::<f64>() / n as f64;
        let var = llr.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let want_var = 8.0 / n0;
        assert!((mean - 4.0 / n0).abs() < 3.0 * (want_var / n as f64).sqrt());
        assert!((var - want_var).abs() < 3.0 * want_var * (2.0 / n as f64).sqrt());
        let flipped = awgn_transmit(&vec![1u8; 1000], ebn0, rate, &mut rng);
        assert!(flipped.iter().sum::<f64>() < 0.0);
    }

    #[test]
    fn uncoded_ber_matches_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let ebn0 = 4.0;
        let llr = awgn_transmit(&vec![0u8; n], ebn0, 1.0, &mut rng);
        let errors = llr.iter().filter(|&&l| l < 0.0).count() as f64;
        let p = q_function((2.0 * 10f64.powf(ebn0 / 10.0)).sqrt()).to_f64();
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((errors / n as f64 - p).abs() < 3.0 * sigma);
    }

    fn uncoupled(kind: EnsembleKind, k: usize, seed: u64) -> FrameCode {
        FrameCode::uncoupled(k, &CouplingPermutations::random(kind, k, seed)).unwrap()
    }

    #[test]
    fn encoder_output_satisfies_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for kind in [EnsembleKind::Pcc, EnsembleKind::Scc, EnsembleKind::Hcc] {
            let code = uncoupled(kind, 64, 9);
            for _ in 0..10 {
                let info: Vec<u8> = (0..64).map(|_| rng.random_range(0..2u8)).collect();
                let x = code.encode(&info).unwrap();
                assert!(code.is_codeword(&x), "{kind:?}");
                assert_eq!(&code.info_bits(&x)[0][..62], &info[..62]);
            }
        }
        assert!(uncoupled(EnsembleKind::Bcc, 16, 1).encode(&[0; 16]).is_err());
    }

    #[test]
    fn noiseless_decoding_is_error_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for kind in EnsembleKind::ALL {
            let code = uncoupled(kind, 128, 2);
            let sent = if code.can_encode() {
                let info: Vec<u8> = (0..128).map(|_| rng.random_range(0..2u8)).collect();
                code.encode(&info).unwrap()
            } else {
                vec![0; code.variables()]
            };
            let llr = awgn_transmit(&code.transmit_bits(&sent), 60.0, RATE, &mut rng);
            let d = decode_iterative(&code, &llr, 1, false).unwrap();
            assert_eq!(d.bits, code.info_bits(&sent), "{kind:?}");
        }
    }

    #[test]
    fn noiseless_chain_window_decoding() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for kind in EnsembleKind::ALL {
            let spec = CouplingSpec::new(CouplingPermutations::random(kind, 32, 3), 32, 6, Termination::Terminated).unwrap();
            let code = FrameCode::coupled(&spec).unwrap();
            assert!(code.is_codeword(&vec![0; code.variables()]));
            let llr = awgn_transmit(&vec![0; code.transmitted_len()], 60.0, RATE, &mut rng);
            let d = decode_window(&code, &llr, 3, 1, true).unwrap();
            assert!(d.bits.iter().flatten().all(|&b| b == 0), "{kind:?}");
            assert_eq!(d.bits.len(), 6);
            assert!(decode_window(&code, &llr, 7, 1, true).is_err());
        }
    }

    #[test]
    fn tailbiting_chain_rejected_by_window_decoder() {
        let spec = CouplingSpec::new(CouplingPermutations::identity(EnsembleKind::Pcc, 8), 8, 3, Termination::Tailbiting).unwrap();
        let code = FrameCode::coupled(&spec).unwrap();
        let llr = vec![1.0; code.transmitted_len()];
        assert!(matches!(decode_window(&code, &llr, 2, 1, true), Err(Error::Unsupported(_))));
        assert!(decode_iterative(&code, &llr, 1, true).is_ok());
    }

    #[test]
    fn coupled_chain_codewords_match_coupling_module() {
        use crate::coupling::CoupledCode;
        for kind in EnsembleKind::ALL {
            let spec = CouplingSpec::new(CouplingPermutations::random(kind, 8, 5), 8, 3, Termination::Terminated).unwrap();
            let code = FrameCode::coupled(&spec).unwrap();
            let reference = CoupledCode::new(&spec).unwrap();
            let cw = reference.encode(&reference.random_info(1)).unwrap();
            let flat: Vec<u8> = cw.slots.iter().flatten().flatten().copied().collect();
            assert!(code.is_codeword(&flat), "{kind:?}");
        }
    }

    fn small_config() -> SimConfig {
        let mut cfg = SimConfig::new(SimCode::Uncoupled(EnsembleKind::Pcc), 64);
        cfg.ebn0_db = vec![0.0, 1.0];
        cfg.max_frames = 200;
        cfg.target_frame_errors = 30;
        cfg.iterations = 4;
        cfg.batch = 8;
        cfg
    }

    #[test]
    fn zero_frames_give_empty_result() {
        let mut cfg = small_config();
        cfg.max_frames = 0;
        assert!(run_monte_carlo(&cfg).unwrap().points.is_empty());
    }

    #[test]
    fn identical_across_worker_counts() {
        let mut cfg = small_config();
        let run = |threads: usize, cfg: &SimConfig| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_monte_carlo(cfg).unwrap())
        };
        for policy in [PermutationPolicy::Fresh, PermutationPolicy::Fixed(4)] {
            cfg.permutations = policy;
            let a = run(1, &cfg);
            assert_eq!(a, run(8, &cfg));
            for p in &a.points {
                assert!(p.frames <= cfg.max_frames);
                assert!(p.frame_errors <= cfg.target_frame_errors);
                assert_eq!(p.info_bits, p.frames * 64);
                assert!(p.frame_errors <= p.bit_errors);
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = small_config();
        cfg.target_frame_errors = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = SimConfig::new(SimCode::Coupled { kind: EnsembleKind::Scc, l: 3, window: 4 }, 16);
        assert!(cfg.validate().is_err());
        cfg.code = SimCode::Coupled { kind: EnsembleKind::Scc, l: 4, window: 4 };
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.latency_bits(), Some(64));
        let mut cfg = SimConfig::new(SimCode::Uncoupled(EnsembleKind::Bcc), 16);
        assert!(!cfg.random_messages);
        cfg.random_messages = true;
        assert!(matches!(cfg.validate(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn csv_layout() {
        let mut cfg = small_config();
        cfg.ebn0_db = vec![2.0];
        cfg.max_frames = 5;
        let csv = run_monte_carlo(&cfg).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# simulate kind=pcc K=64"));
        assert_eq!(lines[1], "ebn0_db,info_bits,bit_errors,frames,frame_errors,ber,fer,ci95");
        assert!(lines[2].starts_with("2,320,"));
        assert_eq!("fixed:12".parse::<PermutationPolicy>().unwrap(), PermutationPolicy::Fixed(12));
        assert!("fixed".parse::<PermutationPolicy>().is_err());
    }

    #[test]
    fn coding_gain_over_uncoded() {
        let mut cfg = SimConfig::new(SimCode::Uncoupled(EnsembleKind::Pcc), 256);
        cfg.ebn0_db = vec![2.5];
        cfg.max_frames = 100;
        let r = run_monte_carlo(&cfg).unwrap();
        let uncoded = q_function((2.0 * 10f64.powf(0.25)).sqrt()).to_f64();
        assert!(r.points[0].ber() < uncoded / 10.0);
    }
}
