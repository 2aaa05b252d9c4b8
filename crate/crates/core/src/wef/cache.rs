//! Text cache format for weight enumerators.
//!
//! ```text
//! # wefcache v1
//! vars=2 labels=I,P sections=3 gen=1,5/7 mode=terminated caps=inf,inf;inf
//! 0,0,1
//! ```

use std::fmt::Write as _;

use num_bigint::BigUint;

use super::{Caps, WeightEnumerator};
use crate::trellis::Termination;
use crate::{Error, Result};

/// Metadata line of a cache file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WefCacheHeader {
    pub sections: usize,
    /// Generator text without whitespace.
    pub generator: String,
    pub mode: Termination,
}

/// Removes whitespace from a generator description so it fits in one
/// header token.
pub fn compact_generator(text: &str) -> String {
    let text = text.trim();
    if let Some(inner) = text.strip_prefix('(').and_then(|t| t.strip_suffix(')')) {
        let rows: Vec<String> = inner
            .split(';')
            .map(|row| {
                row.split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|e| !e.is_empty())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect();
        format!("({})", rows.join(";"))
    } else {
        text.split(',').map(str::trim).collect::<Vec<_>>().join(",")
    }
}

pub fn write_cache(header: &WefCacheHeader, w: &WeightEnumerator) -> String {
    let mut out = String::from("# wefcache v1\n");
    let _ = writeln!(
        out,
        "vars={} labels={} sections={} gen={} mode={} caps={}",
        w.vars(),
        w.labels().join(","),
        header.sections,
        compact_generator(&header.generator),
        header.mode.as_str(),
        w.caps()
    );
    for (e, c) in w.terms() {
        for x in e {
            let _ = write!(out, "{x},");
        }
        let _ = writeln!(out, "{c}");
    }
    out
}

pub fn read_cache(text: &str) -> Result<(WefCacheHeader, WeightEnumerator)> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("# wefcache v1") {
        return Err(Error::Parse("missing `# wefcache v1` header".into()));
    }
    let meta = lines
        .next()
        .ok_or_else(|| Error::Parse("missing metadata line".into()))?;
    let field = |key: &str| -> Result<&str> {
        meta.split_whitespace()
            .find_map(|t| t.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
            .ok_or_else(|| Error::Parse(format!("missing `{key}`")))
    };
    let vars: usize = field("vars")?
        .parse()
        .map_err(|_| Error::Parse("bad `vars`".into()))?;
    let labels: Vec<&str> = field("labels")?.split(',').collect();
    if labels.len() != vars || vars == 0 || vars > super::MAX_VARS {
        return Err(Error::Parse("label count does not match `vars`".into()));
    }
    let sections = field("sections")?
        .parse()
        .map_err(|_| Error::Parse("bad `sections`".into()))?;
    let generator = field("gen")?.to_string();
    let mode: Termination = field("mode")?.parse()?;
    let caps: Caps = field("caps")?.parse()?;
    if caps.per_var.len() != vars {
        return Err(Error::Parse("cap count does not match `vars`".into()));
    }
    let mut terms = Vec::new();
    for line in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != vars + 1 {
            return Err(Error::Parse(format!("bad term line `{line}`")));
        }
        let e = parts[..vars]
            .iter()
            .map(|p| p.parse::<u32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Parse(format!("bad exponent in `{line}`")))?;
        let c: BigUint = parts[vars]
            .parse()
            .map_err(|_| Error::Parse(format!("bad count in `{line}`")))?;
        terms.push((e, c));
    }
    let w = WeightEnumerator::from_terms(&labels, caps, terms);
    Ok((
        WefCacheHeader {
            sections,
            generator,
            mode,
        },
        w,
    ))
}
