//! Text cache format for averaged enumerators.
//!
//! ```text
//! # avgwef v1 kind=pcc N=16
//! precision=256 w_max=20
//! # upper: gen=1,5/7 sections=16 mode=terminated caps=inf,inf;20
//! 0,0,1.000e0
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{AveragedWEF, EnsembleKind, EnsembleSpec};
use crate::hpfloat::HpFloat;
use crate::{Error, Result};

pub fn write_avg_cache(a: &AveragedWEF) -> String {
    let mut out = format!("# avgwef v1 kind={} N={}\n", a.kind, a.n);
    let _ = writeln!(out, "precision={} w_max={}", a.precision, a.w_max);
    for p in &a.provenance {
        let _ = writeln!(out, "# {p}");
    }
    for (i, p, v) in a.iter() {
        let _ = writeln!(out, "{i},{p},{}", v.to_scientific());
    }
    out
}

fn field<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.split_whitespace()
        .find_map(|t| t.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| Error::Parse(format!("missing `{key}`")))
}

fn number<T: std::str::FromStr>(line: &str, key: &str) -> Result<T> {
    field(line, key)?
        .parse()
        .map_err(|_| Error::Parse(format!("bad `{key}`")))
}

pub fn read_avg_cache(text: &str) -> Result<AveragedWEF> {
    let mut lines = text.lines();
    let head = lines
        .next()
        .filter(|l| l.starts_with("# avgwef v1"))
        .ok_or_else(|| Error::Parse("missing `# avgwef v1` header".into()))?;
    let kind: EnsembleKind = field(head, "kind")?.parse()?;
    let n: usize = number(head, "N")?;
    let meta = lines
        .next()
        .ok_or_else(|| Error::Parse("missing metadata line".into()))?;
    let precision: u32 = number(meta, "precision")?;
    let w_max: u32 = number(meta, "w_max")?;
    let mut provenance = Vec::new();
    let mut coefficients = BTreeMap::new();
    for line in lines {
        let line = line.trim();
        if let Some(p) = line.strip_prefix('#') {
            provenance.push(p.trim().to_string());
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        let [i, p, v] = parts[..] else {
            return Err(Error::Parse(format!("bad term line `{line}`")));
        };
        let bad = || Error::Parse(format!("bad term line `{line}`"));
        let i: u32 = i.parse().map_err(|_| bad())?;
        let p: u32 = p.parse().map_err(|_| bad())?;
        if i + p > w_max {
            return Err(Error::Parse(format!("term ({i},{p}) exceeds w_max={w_max}")));
        }
        coefficients.insert((i, p), HpFloat::parse(v, precision)?);
    }
    Ok(AveragedWEF::new(kind, n, precision, w_max, provenance, coefficients))
}

fn cache_prefix(spec: &EnsembleSpec, precision: u32) -> String {
    let sections: Vec<String> = spec.components.iter().map(|c| c.sections.to_string()).collect();
    format!("avg-{}-N{}-S{}-p{}-w", spec.kind, spec.n, sections.join("-"), precision)
}

fn expected_provenance(spec: &EnsembleSpec, w_max: u32) -> Result<Vec<String>> {
    spec.components
        .iter()
        .map(|c| Ok(format!("{}: {}", c.role.as_str(), spec.component_identity(c.role, w_max)?)))
        .collect()
}

/// Writes through a temporary file and a rename.
pub(crate) fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Path of the stored average of `spec` at exactly `w_max`.
pub fn average_cache_path(spec: &EnsembleSpec, w_max: u32, precision: u32, dir: &Path) -> PathBuf {
    dir.join(format!("{}{w_max}.txt", cache_prefix(spec, precision)))
}

/// Average of `spec` up to `w_max`, read from `dir` when a stored average
/// with the same components and a `w_max` at least as large exists there,
/// otherwise computed and stored.
pub fn cached_average(spec: &EnsembleSpec, w_max: u32, precision: u32, dir: &Path) -> Result<AveragedWEF> {
    let prefix = cache_prefix(spec, precision);
    let mut stored: Vec<u32> = fs::read_dir(dir)
        .map(|entries| {
            entries
                .flatten()
                .filter_map(|e| {
                    let name = e.file_name().into_string().ok()?;
                    name.strip_prefix(&prefix)?.strip_suffix(".txt")?.parse().ok()
                })
                .filter(|&w| w >= w_max)
                .collect()
        })
        .unwrap_or_default();
    stored.sort_unstable();
    for w in stored {
        let Ok(text) = fs::read_to_string(average_cache_path(spec, w, precision, dir)) else {
            continue;
        };
        let Ok(a) = read_avg_cache(&text) else {
            continue;
        };
        if a.kind == spec.kind && a.n == spec.n && a.w_max == w && a.provenance == expected_provenance(spec, w)? {
            return Ok(if w == w_max { a } else { a.truncate(w_max) });
        }
    }
    let a = spec.average(w_max, precision)?;
    fs::create_dir_all(dir)?;
    write_atomic(&average_cache_path(spec, w_max, precision, dir), &write_avg_cache(&a))?;
    Ok(a)
}
