//! Systematic recursive convolutional encoders: generator parsing, trellis
//! construction, block encoding and codeword membership tests.
//!
//! Generators are written in octal with bit `j` of the value holding the
//! coefficient of `D^j`, so `7` is `1 + D + D^2` and `5` is `1 + D^2`. Two
//! textual forms are accepted:
//!
//! * `1,5/7`: a single row (one input), comma separated;
//! * `(1 0 1/7; 0 1 5/7)`: one row per input separated by `;`.
//!
//! The first `k` columns must form the identity and exactly one parity column
//! may follow, with a common feedback polynomial for all of its entries.

use std::fmt::Write as _;

use crate::{Error, Result};

/// Boundary model of a block of trellis sections.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Termination {
    /// Path starts and ends in state 0 within the block.
    Terminated,
    /// Path ends in the state it started from.
    Tailbiting,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Terminated => "terminated",
            Termination::Tailbiting => "tailbiting",
        }
    }
}

impl std::str::FromStr for Termination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "terminated" => Ok(Termination::Terminated),
            "tailbiting" => Ok(Termination::Tailbiting),
            other => Err(Error::Parse(format!("unknown termination mode `{other}`"))),
        }
    }
}

/// A systematic rational generator matrix with one common feedback polynomial.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorSpec {
    pub inputs: usize,
    pub outputs: usize,
    /// Feedback (denominator) polynomial; bit `j` is the `D^j` coefficient.
    pub feedback: u64,
    /// `inputs x outputs` entries. Systematic columns hold 0 or 1, the
    /// parity column holds the numerator over `feedback`.
    pub feedforward: Vec<Vec<u64>>,
    pub memory: usize,
    pub systematic: bool,
}

fn degree(poly: u64) -> usize {
    if poly == 0 {
        0
    } else {
        63 - poly.leading_zeros() as usize
    }
}

struct Entry {
    num: u64,
    den: u64,
}

fn parse_octal(text: &str, full: &str) -> Result<u64> {
    let malformed = |reason: &str| Error::MalformedGenerator {
        text: full.to_string(),
        reason: reason.to_string(),
    };
    if text.is_empty() {
        return Err(malformed("empty entry"));
    }
    if !text.bytes().all(|b| (b'0'..=b'7').contains(&b)) {
        return Err(malformed(&format!("`{text}` is not an octal number")));
    }
    u64::from_str_radix(text, 8).map_err(|_| malformed(&format!("`{text}` is too large")))
}

fn parse_entry(text: &str, full: &str) -> Result<Entry> {
    match text.split_once('/') {
        Some((num, den)) => {
            let num = parse_octal(num.trim(), full)?;
            let den = parse_octal(den.trim(), full)?;
            if den == 0 {
                return Err(Error::MalformedGenerator {
                    text: full.to_string(),
                    reason: "zero denominator".into(),
                });
            }
            Ok(Entry { num, den })
        }
        None => Ok(Entry {
            num: parse_octal(text.trim(), full)?,
            den: 1,
        }),
    }
}

/// Parses an octal generator description.
pub fn parse_generator(text: &str) -> Result<GeneratorSpec> {
    let full = text.trim();
    let malformed = |reason: &str| Error::MalformedGenerator {
        text: full.to_string(),
        reason: reason.to_string(),
    };
    let rows: Vec<Vec<Entry>> = if let Some(inner) = full.strip_prefix('(') {
        let inner = inner
            .strip_suffix(')')
            .ok_or_else(|| malformed("unbalanced parenthesis"))?;
        inner
            .split(';')
            .map(|row| {
                row.split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|e| !e.is_empty())
                    .map(|e| parse_entry(e, full))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?
    } else {
        vec![full
            .split(',')
            .map(|e| parse_entry(e.trim(), full))
            .collect::<Result<Vec<_>>>()?]
    };

    let k = rows.len();
    let n = rows[0].len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(malformed("rows have different lengths"));
    }
    if n <= k {
        return Err(malformed("need more outputs than inputs"));
    }
    for (r, row) in rows.iter().enumerate() {
        for (c, e) in row.iter().take(k).enumerate() {
            let unit = e.den == 1 && e.num == u64::from(r == c);
            if !unit {
                return Err(Error::Unsupported(format!(
                    "`{full}` is not systematic in its first {k} columns"
                )));
            }
        }
    }
    if n - k != 1 {
        return Err(Error::Unsupported(format!(
            "`{full}` has {} parity columns, only one is supported",
            n - k
        )));
    }

    let mut feedback = None;
    for row in &rows {
        let e = &row[k];
        if e.num == 0 {
            continue;
        }
        match feedback {
            None => feedback = Some(e.den),
            Some(f) if f != e.den => {
                return Err(Error::Unsupported(format!(
                    "`{full}` uses more than one feedback polynomial"
                )))
            }
            Some(_) => {}
        }
    }
    let feedback = feedback.unwrap_or(1);
    if feedback & 1 == 0 {
        return Err(Error::Unsupported(format!(
            "feedback polynomial of `{full}` has no constant term"
        )));
    }

    let feedforward: Vec<Vec<u64>> = rows
        .iter()
        .map(|row| row.iter().map(|e| e.num).collect())
        .collect();
    let memory = rows
        .iter()
        .map(|row| degree(row[k].num))
        .chain(std::iter::once(degree(feedback)))
        .max()
        .unwrap_or(0);
    if memory > 16 {
        return Err(Error::Unsupported(format!("memory {memory} is too large")));
    }

    Ok(GeneratorSpec {
        inputs: k,
        outputs: n,
        feedback,
        feedforward,
        memory,
        systematic: true,
    })
}

impl GeneratorSpec {
    pub fn states(&self) -> usize {
        1 << self.memory
    }

    /// Canonical text form accepted by [`parse_generator`].
    pub fn to_text(&self) -> String {
        let k = self.inputs;
        let entry = |r: usize, c: usize| -> String {
            let num = self.feedforward[r][c];
            if c < k || self.feedback == 1 || num == 0 {
                format!("{num:o}")
            } else {
                format!("{num:o}/{:o}", self.feedback)
            }
        };
        if k == 1 {
            (0..self.outputs)
                .map(|c| entry(0, c))
                .collect::<Vec<_>>()
                .join(",")
        } else {
            let rows: Vec<String> = (0..k)
                .map(|r| {
                    (0..self.outputs)
                        .map(|c| entry(r, c))
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect();
            format!("({})", rows.join("; "))
        }
    }
}

/// One trellis branch leaving a state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Branch {
    /// Input label, bit `r` is input stream `r`.
    pub input: u32,
    /// Output label, bit `j` is output stream `j`.
    pub output: u32,
    pub next: u32,
}

/// State-transition table of an encoder.
///
/// States are numbered by their shift-register contents with the first
/// register in the least significant bit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trellis {
    states: usize,
    inputs: usize,
    outputs: usize,
    next: Vec<u32>,
    output: Vec<u32>,
    drive_len: usize,
}

/// Builds the trellis of a generator in observer canonical form.
pub fn build_trellis(g: &GeneratorSpec) -> Trellis {
    let nu = g.memory;
    let k = g.inputs;
    let states = 1usize << nu;
    let bit = |poly: u64, j: usize| ((poly >> j) & 1) as u32;
    let mut next = Vec::with_capacity(states << k);
    let mut output = Vec::with_capacity(states << k);
    for s in 0..states {
        for u in 0..(1u32 << k) {
            let inbit = |r: usize| (u >> r) & 1;
            let mut v = if nu > 0 { (s & 1) as u32 } else { 0 };
            for r in 0..k {
                v ^= bit(g.feedforward[r][k], 0) & inbit(r);
            }
            let mut ns = 0usize;
            for j in 1..=nu {
                let mut sj = if j < nu { ((s >> j) & 1) as u32 } else { 0 };
                for r in 0..k {
                    sj ^= bit(g.feedforward[r][k], j) & inbit(r);
                }
                sj ^= bit(g.feedback, j) & v;
                ns |= (sj as usize) << (j - 1);
            }
            next.push(ns as u32);
            output.push(u | (v << k));
        }
    }
    let mut t = Trellis {
        states,
        inputs: k,
        outputs: g.outputs,
        next,
        output,
        drive_len: 0,
    };
    t.drive_len = t.compute_drive_len();
    t
}

impl Trellis {
    pub fn states(&self) -> usize {
        self.states
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    /// Longest shortest path from any state to state 0.
    pub fn drive_len(&self) -> usize {
        self.drive_len
    }

    #[inline]
    pub fn branch(&self, state: usize, input: u32) -> Branch {
        let idx = (state << self.inputs) | input as usize;
        Branch {
            input,
            output: self.output[idx],
            next: self.next[idx],
        }
    }

    #[inline]
    pub fn next_state(&self, state: usize, input: u32) -> usize {
        self.next[(state << self.inputs) | input as usize] as usize
    }

    #[inline]
    pub fn output_label(&self, state: usize, input: u32) -> u32 {
        self.output[(state << self.inputs) | input as usize]
    }

    pub fn branches(&self, state: usize) -> impl Iterator<Item = Branch> + '_ {
        (0..(1u32 << self.inputs)).map(move |u| self.branch(state, u))
    }

    fn compute_drive_len(&self) -> usize {
        let mut dist = vec![usize::MAX; self.states];
        dist[0] = 0;
        let mut frontier = vec![0usize];
        let mut d = 0;
        while !frontier.is_empty() {
            d += 1;
            let mut next_frontier = Vec::new();
            for s in 0..self.states {
                if dist[s] != usize::MAX {
                    continue;
                }
                if self.branches(s).any(|b| frontier.contains(&(b.next as usize))) {
                    dist[s] = d;
                    next_frontier.push(s);
                }
            }
            frontier = next_frontier;
        }
        dist.into_iter().max().unwrap_or(0)
    }

    /// Line-oriented text serialization.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "states={} k={} n={}\n",
            self.states, self.inputs, self.outputs
        );
        for s in 0..self.states {
            for b in self.branches(s) {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    s,
                    bit_string(b.input, self.inputs),
                    bit_string(b.output, self.outputs),
                    b.next
                );
            }
        }
        out
    }

    /// Parses the format written by [`Trellis::to_text`].
    pub fn from_text(text: &str) -> Result<Trellis> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty trellis file".into()))?;
        let mut fields = [0usize; 3];
        for (slot, key) in ["states", "k", "n"].iter().enumerate() {
            let tok = header
                .split_whitespace()
                .find_map(|t| t.strip_prefix(&format!("{key}=")))
                .ok_or_else(|| Error::Parse(format!("missing `{key}` in header")))?;
            fields[slot] = tok
                .parse()
                .map_err(|_| Error::Parse(format!("bad `{key}` value")))?;
        }
        let [states, k, n] = fields;
        if k >= n || k > 8 || n > 32 || !states.is_power_of_two() || states > 1 << 20 {
            return Err(Error::Parse("inconsistent trellis header".into()));
        }
        let mut next = vec![u32::MAX; states << k];
        let mut output = vec![0u32; states << k];
        for line in lines {
            let parts: Vec<&str> = line.trim().split(',').collect();
            if parts.len() != 4 {
                return Err(Error::Parse(format!("bad branch line `{line}`")));
            }
            let s: usize = parts[0]
                .parse()
                .map_err(|_| Error::Parse(format!("bad state in `{line}`")))?;
            let u = parse_bit_string(parts[1], k)?;
            let o = parse_bit_string(parts[2], n)?;
            let ns: u32 = parts[3]
                .parse()
                .map_err(|_| Error::Parse(format!("bad next state in `{line}`")))?;
            if s >= states || ns as usize >= states {
                return Err(Error::Parse(format!("state out of range in `{line}`")));
            }
            let idx = (s << k) | u as usize;
            if next[idx] != u32::MAX {
                return Err(Error::Parse(format!("duplicate branch `{line}`")));
            }
            next[idx] = ns;
            output[idx] = o;
        }
        if next.contains(&u32::MAX) {
            return Err(Error::Parse("missing branches".into()));
        }
        let mut t = Trellis {
            states,
            inputs: k,
            outputs: n,
            next,
            output,
            drive_len: 0,
        };
        t.drive_len = t.compute_drive_len();
        Ok(t)
    }
}

fn bit_string(value: u32, len: usize) -> String {
    (0..len)
        .map(|j| if (value >> j) & 1 == 1 { '1' } else { '0' })
        .collect()
}

fn parse_bit_string(s: &str, len: usize) -> Result<u32> {
    if s.len() != len {
        return Err(Error::Parse(format!("`{s}` should have {len} bits")));
    }
    s.bytes().enumerate().try_fold(0u32, |acc, (j, b)| match b {
        b'0' => Ok(acc),
        b'1' => Ok(acc | (1 << j)),
        _ => Err(Error::Parse(format!("`{s}` is not a bit string"))),
    })
}

/// Per-stream bit sequences of one encoded block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Codeword {
    /// `n` streams of equal length; the first `k` are the inputs.
    pub streams: Vec<Vec<u8>>,
    pub mode: Termination,
    pub start_state: usize,
}

impl Codeword {
    pub fn sections(&self) -> usize {
        self.streams.first().map_or(0, Vec::len)
    }

    /// Hamming weight over all streams.
    pub fn weight(&self) -> usize {
        self.streams.iter().map(|s| stream_weight(s)).sum()
    }

    /// Hamming weight over the listed streams.
    pub fn weight_of(&self, streams: &[usize]) -> usize {
        streams.iter().map(|&j| stream_weight(&self.streams[j])).sum()
    }
}

pub fn stream_weight(bits: &[u8]) -> usize {
    bits.iter().filter(|&&b| b != 0).count()
}

fn pack_inputs(inputs: &[Vec<u8>], t: usize) -> u32 {
    inputs
        .iter()
        .enumerate()
        .fold(0u32, |acc, (r, s)| acc | (u32::from(s[t] & 1) << r))
}

fn check_input_shape(t: &Trellis, inputs: &[Vec<u8>]) -> Result<usize> {
    if inputs.len() != t.inputs {
        return Err(Error::LengthMismatch {
            expected: t.inputs,
            got: inputs.len(),
        });
    }
    let n = inputs[0].len();
    for s in inputs {
        if s.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: s.len(),
            });
        }
    }
    Ok(n)
}

/// Runs the trellis from `start` and returns the end state.
pub fn run(t: &Trellis, start: usize, inputs: &[Vec<u8>]) -> usize {
    let n = inputs.first().map_or(0, Vec::len);
    (0..n).fold(start, |s, i| t.next_state(s, pack_inputs(inputs, i)))
}

fn emit(t: &Trellis, start: usize, inputs: &[Vec<u8>]) -> (Vec<Vec<u8>>, usize) {
    let n = inputs[0].len();
    let mut streams = vec![vec![0u8; n]; t.outputs];
    let mut s = start;
    for i in 0..n {
        let b = t.branch(s, pack_inputs(inputs, i));
        for (j, stream) in streams.iter_mut().enumerate() {
            stream[i] = ((b.output >> j) & 1) as u8;
        }
        s = b.next as usize;
    }
    (streams, s)
}

/// Start states `s` for which running `inputs` from `s` ends in `s`.
pub fn tailbiting_starts(t: &Trellis, inputs: &[Vec<u8>]) -> Vec<usize> {
    (0..t.states)
        .filter(|&s| run(t, s, inputs) == s)
        .collect()
}

/// Encodes one block.
///
/// In terminated mode the last `min(drive_len, N)` input symbols are replaced
/// by the zero-forcing sequence closest in Hamming distance to the supplied
/// ones (ties go to the numerically smallest sequence). In tailbiting mode the
/// smallest consistent start state is used.
pub fn encode_block(t: &Trellis, inputs: &[Vec<u8>], mode: Termination) -> Result<Codeword> {
    let n = check_input_shape(t, inputs)?;
    let mut inputs: Vec<Vec<u8>> = inputs
        .iter()
        .map(|s| s.iter().map(|b| b & 1).collect())
        .collect();
    let start = match mode {
        Termination::Terminated => {
            let tail = t.drive_len.min(n);
            if t.inputs * tail > 20 {
                return Err(Error::SizeGuard(format!(
                    "termination search over {} bits",
                    t.inputs * tail
                )));
            }
            let free = n - tail;
            let mut s = (0..free).fold(0, |s, i| t.next_state(s, pack_inputs(&inputs, i)));
            let symbol = |seq: u32, j: usize| (seq >> (j * t.inputs)) & ((1 << t.inputs) - 1);
            let mut best: Option<(u32, u32)> = None;
            for seq in 0..(1u32 << (t.inputs * tail)) {
                let end = (0..tail).fold(s, |st, j| t.next_state(st, symbol(seq, j)));
                if end != 0 {
                    continue;
                }
                let dist: u32 = (0..tail)
                    .map(|j| (symbol(seq, j) ^ pack_inputs(&inputs, free + j)).count_ones())
                    .sum();
                if best.is_none_or(|(d, _)| dist < d) {
                    best = Some((dist, seq));
                }
            }
            let (_, seq) = best.expect("every state is drivable to zero");
            for j in 0..tail {
                let sym = symbol(seq, j);
                for (r, stream) in inputs.iter_mut().enumerate() {
                    stream[free + j] = ((sym >> r) & 1) as u8;
                }
                s = t.next_state(s, sym);
            }
            debug_assert_eq!(s, 0);
            0
        }
        Termination::Tailbiting => *tailbiting_starts(t, &inputs)
            .first()
            .ok_or(Error::TailbitingInconsistent)?,
    };
    let (streams, _) = emit(t, start, &inputs);
    Ok(Codeword {
        streams,
        mode,
        start_state: start,
    })
}

/// True iff the streams are the labels of a valid path in the given mode.
pub fn check_membership(t: &Trellis, streams: &[Vec<u8>], mode: Termination) -> Result<bool> {
    if streams.len() != t.outputs {
        return Err(Error::LengthMismatch {
            expected: t.outputs,
            got: streams.len(),
        });
    }
    let n = check_input_shape(t, &streams[..t.inputs])?;
    for s in &streams[t.inputs..] {
        if s.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: s.len(),
            });
        }
    }
    let inputs = &streams[..t.inputs];
    let matches = |start: usize| {
        let mut s = start;
        for i in 0..n {
            let b = t.branch(s, pack_inputs(inputs, i));
            for j in t.inputs..t.outputs {
                if ((b.output >> j) & 1) as u8 != streams[j][i] & 1 {
                    return None;
                }
            }
            s = b.next as usize;
        }
        Some(s)
    };
    Ok(match mode {
        Termination::Terminated => matches(0) == Some(0),
        Termination::Tailbiting => (0..t.states).any(|s| matches(s) == Some(s)),
    })
}
