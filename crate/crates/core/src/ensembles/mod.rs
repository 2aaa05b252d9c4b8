//! Uniform-interleaver ensemble averages of rate-1/3 turbo-like codes.
//!
//! The four ensembles are built from systematic recursive encoders:
//!
//! * PCC: information `u` feeds an upper encoder directly and a lower encoder
//!   through a permutation; both parities are transmitted.
//! * SCC: an outer rate-1/2 encoder feeds `(u, v_O)` through a permutation of
//!   length `2N` into an inner rate-1/2 encoder. The outer parity is
//!   punctured, `u` and the inner parity are transmitted.
//! * BCC: two rate-2/3 encoders, each taking `u` (permuted for the lower one)
//!   and the permuted parity of the other.
//! * HCC: a PCC whose two parities (punctured) feed an inner rate-1/2 encoder
//!   over `2N` sections; `u` and the inner parity are transmitted.
//!
//! Averages are formed from component weight enumerators and binomial
//! coefficients. Coefficients are nonnegative high-precision reals; every
//! term is nonnegative so the relative error of a coefficient is bounded by
//! the per-term rounding.

mod average;
mod cache;
pub mod oracle;

use std::collections::BTreeMap;
use std::fmt;

use crate::hpfloat::HpFloat;
use crate::trellis::{build_trellis, parse_generator, Termination};
use crate::wef::{make_transfer_matrix, wef_terminated, Caps, WeightEnumerator};
use crate::{Error, Result};

pub use average::{
    average_bcc, average_bcc_exact, average_hcc, average_hcc_exact, average_pcc,
    average_pcc_exact, average_scc, average_scc_exact, ExactAverage,
};
pub use cache::{average_cache_path, cached_average, read_avg_cache, write_avg_cache};

/// Default rate-1/2 component.
pub const RATE_HALF_GENERATOR: &str = "1,5/7";
/// Default rate-2/3 component of braided codes.
pub const RATE_TWO_THIRDS_GENERATOR: &str = "(1 0 1/7; 0 1 5/7)";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EnsembleKind {
    Pcc,
    Scc,
    Bcc,
    Hcc,
}

impl EnsembleKind {
    pub const ALL: [EnsembleKind; 4] = [
        EnsembleKind::Pcc,
        EnsembleKind::Scc,
        EnsembleKind::Bcc,
        EnsembleKind::Hcc,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EnsembleKind::Pcc => "pcc",
            EnsembleKind::Scc => "scc",
            EnsembleKind::Bcc => "bcc",
            EnsembleKind::Hcc => "hcc",
        }
    }
}

impl fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pcc" => Ok(EnsembleKind::Pcc),
            "scc" => Ok(EnsembleKind::Scc),
            "bcc" => Ok(EnsembleKind::Bcc),
            "hcc" => Ok(EnsembleKind::Hcc),
            other => Err(Error::Parse(format!("unknown ensemble kind `{other}`"))),
        }
    }
}

/// Position of a component encoder in the concatenation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Upper,
    Lower,
    Outer,
    Inner,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Upper => "upper",
            Role::Lower => "lower",
            Role::Outer => "outer",
            Role::Inner => "inner",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Component {
    pub role: Role,
    pub generator: String,
    /// Trellis sections the component enumerator is computed over.
    pub sections: usize,
}

/// A rate-1/3 ensemble with information block length `n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub n: usize,
    pub components: Vec<Component>,
}

impl EnsembleSpec {
    /// Standard component layout: every component trellis spans the length
    /// of the sequence it encodes (`n`, or `2n` for inner encoders).
    pub fn new(kind: EnsembleKind, n: usize) -> EnsembleSpec {
        EnsembleSpec::with_section_offset(kind, n, 0)
    }

    /// Like [`EnsembleSpec::new`] but with every component trellis `offset`
    /// sections shorter; binomial normalizations still use `n`.
    pub fn with_section_offset(kind: EnsembleKind, n: usize, offset: usize) -> EnsembleSpec {
        let short = n.saturating_sub(offset).max(1);
        let long = (2 * n).saturating_sub(offset).max(1);
        let c = |role, generator: &str, sections| Component {
            role,
            generator: generator.to_string(),
            sections,
        };
        let components = match kind {
            EnsembleKind::Pcc => vec![
                c(Role::Upper, RATE_HALF_GENERATOR, short),
                c(Role::Lower, RATE_HALF_GENERATOR, short),
            ],
            EnsembleKind::Scc => vec![
                c(Role::Outer, RATE_HALF_GENERATOR, short),
                c(Role::Inner, RATE_HALF_GENERATOR, long),
            ],
            EnsembleKind::Bcc => vec![
                c(Role::Upper, RATE_TWO_THIRDS_GENERATOR, short),
                c(Role::Lower, RATE_TWO_THIRDS_GENERATOR, short),
            ],
            EnsembleKind::Hcc => vec![
                c(Role::Upper, RATE_HALF_GENERATOR, short),
                c(Role::Lower, RATE_HALF_GENERATOR, short),
                c(Role::Inner, RATE_HALF_GENERATOR, long),
            ],
        };
        EnsembleSpec { kind, n, components }
    }

    pub fn rate(&self) -> f64 {
        1.0 / 3.0
    }

    pub fn component(&self, role: Role) -> Result<&Component> {
        self.components
            .iter()
            .find(|c| c.role == role)
            .ok_or_else(|| Error::InvalidParameter(format!("no {} component", role.as_str())))
    }

    /// Caps each component enumerator must cover so that every averaged
    /// coefficient with `i + p <= w_max` is exact.
    pub fn required_caps(&self, role: Role, w_max: u32) -> Caps {
        let n = self.n as u32;
        let sec = self.component(role).map(|c| c.sections as u32).unwrap_or(n);
        match (self.kind, role) {
            (EnsembleKind::Pcc, _) => Caps::total(2, w_max),
            (EnsembleKind::Bcc, _) => Caps::total(3, w_max),
            (EnsembleKind::Scc, Role::Outer) | (EnsembleKind::Hcc, Role::Upper | Role::Lower) => {
                // punctured parity enters only through the inner input weight
                let parity = sec;
                Caps {
                    per_var: vec![w_max, parity],
                    total: w_max + parity,
                }
            }
            (_, _) => {
                let input = sec;
                Caps {
                    per_var: vec![input, w_max],
                    total: input + w_max,
                }
            }
        }
    }

    /// Output-stream to variable mapping and labels for a component.
    pub fn component_variables(&self, role: Role) -> (Vec<Option<usize>>, Vec<&'static str>) {
        match (self.kind, role) {
            (EnsembleKind::Bcc, _) => (vec![Some(0), Some(1), Some(2)], vec!["I1", "I2", "P"]),
            _ => (vec![Some(0), Some(1)], vec!["I", "P"]),
        }
    }

    /// Computes a component enumerator with the caps needed for `w_max`.
    pub fn component_wef(&self, role: Role, w_max: u32) -> Result<WeightEnumerator> {
        let c = self.component(role)?;
        let g = parse_generator(&c.generator)?;
        let t = build_trellis(&g);
        let (map, labels) = self.component_variables(role);
        let m = make_transfer_matrix(&t, &map, &labels)?;
        Ok(wef_terminated(&m, c.sections, &self.required_caps(role, w_max)))
    }

    /// Cache identity of a component enumerator.
    pub fn component_identity(&self, role: Role, w_max: u32) -> Result<String> {
        let c = self.component(role)?;
        Ok(format!(
            "gen={} sections={} mode={} caps={}",
            crate::wef::compact_generator(&c.generator),
            c.sections,
            Termination::Terminated.as_str(),
            self.required_caps(role, w_max)
        ))
    }

    /// Computes all component enumerators and averages them.
    pub fn average(&self, w_max: u32, precision: u32) -> Result<AveragedWEF> {
        let get = |role| self.component_wef(role, w_max);
        match self.kind {
            EnsembleKind::Pcc => average_pcc(&get(Role::Upper)?, &get(Role::Lower)?, self, w_max, precision),
            EnsembleKind::Scc => average_scc(&get(Role::Outer)?, &get(Role::Inner)?, self, w_max, precision),
            EnsembleKind::Bcc => average_bcc(&get(Role::Upper)?, &get(Role::Lower)?, self, w_max, precision),
            EnsembleKind::Hcc => average_hcc(
                &get(Role::Upper)?,
                &get(Role::Lower)?,
                &get(Role::Inner)?,
                self,
                w_max,
                precision,
            ),
        }
    }
}

/// Checks that a component enumerator was computed with large enough caps.
pub(crate) fn check_caps(w: &WeightEnumerator, required: &Caps, what: &str) -> Result<()> {
    if w.vars() != required.per_var.len() {
        return Err(Error::CapInsufficient(format!(
            "{what}: expected {} variables, got {}",
            required.per_var.len(),
            w.vars()
        )));
    }
    if !w.caps().covers(required) {
        return Err(Error::CapInsufficient(format!(
            "{what}: caps {} do not cover {}",
            w.caps(),
            required
        )));
    }
    Ok(())
}

/// Ensemble-averaged input-parity weight enumerator.
///
/// Holds every nonzero coefficient with `i + p <= w_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct AveragedWEF {
    pub kind: EnsembleKind,
    pub n: usize,
    pub precision: u32,
    pub w_max: u32,
    /// Identities of the component enumerators.
    pub provenance: Vec<String>,
    coefficients: BTreeMap<(u32, u32), HpFloat>,
}

impl AveragedWEF {
    pub fn new(
        kind: EnsembleKind,
        n: usize,
        precision: u32,
        w_max: u32,
        provenance: Vec<String>,
        coefficients: BTreeMap<(u32, u32), HpFloat>,
    ) -> AveragedWEF {
        let coefficients = coefficients
            .into_iter()
            .filter(|((i, p), v)| !v.is_zero() && i + p <= w_max)
            .collect();
        AveragedWEF {
            kind,
            n,
            precision,
            w_max,
            provenance,
            coefficients,
        }
    }

    pub fn get(&self, i: u32, p: u32) -> Option<&HpFloat> {
        self.coefficients.get(&(i, p))
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, &HpFloat)> {
        self.coefficients.iter().map(|(&(i, p), v)| (i, p, v))
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// `w -> sum_{i + p = w} A_{i,p}`.
    pub fn project_total_weight(&self) -> BTreeMap<u32, HpFloat> {
        let mut out: BTreeMap<u32, HpFloat> = BTreeMap::new();
        for (i, p, v) in self.iter() {
            let slot = out
                .entry(i + p)
                .or_insert_with(|| HpFloat::zero(self.precision));
            *slot = slot.add(v);
        }
        out
    }

    pub fn total_mass(&self) -> HpFloat {
        self.coefficients
            .values()
            .fold(HpFloat::zero(self.precision), |acc, v| acc.add(v))
    }

    /// Restricts to `i + p <= w_max`.
    pub fn truncate(&self, w_max: u32) -> AveragedWEF {
        AveragedWEF::new(
            self.kind,
            self.n,
            self.precision,
            w_max.min(self.w_max),
            self.provenance.clone(),
            self.coefficients.clone(),
        )
    }
}
