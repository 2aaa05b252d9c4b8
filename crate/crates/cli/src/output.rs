//! Atomic output files, run manifests and content-addressed caches.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::CliError;

pub fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through a temporary file in the same directory and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_error(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(io_error(&tmp))?;
    fs::rename(&tmp, path).map_err(io_error(path))
}

pub fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_error(path))
}

/// First 16 hex digits of the SHA-256 of `identity`.
pub fn digest(identity: &str) -> String {
    Sha256::digest(identity.as_bytes())
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Inserts `lines` after the first `keep` lines of `text`.
pub fn insert_after(text: &str, keep: usize, lines: &str) -> String {
    let mut out = String::with_capacity(text.len() + lines.len());
    let mut rest = text;
    for _ in 0..keep {
        match rest.find('\n') {
            Some(k) => {
                out.push_str(&rest[..=k]);
                rest = &rest[k + 1..];
            }
            None => {
                out.push_str(rest);
                out.push('\n');
                rest = "";
            }
        }
    }
    out.push_str(lines);
    out.push_str(rest);
    out
}

fn quote(arg: &str) -> String {
    if arg.is_empty() || arg.contains(|c: char| c.is_whitespace() || c == ';' || c == '(') {
        format!("'{arg}'")
    } else {
        arg.to_string()
    }
}

/// One command invocation: the canonical flag echo, cache identities read
/// or written, and the wall clock.
pub struct Run {
    words: Vec<String>,
    inputs: Vec<String>,
    started: Instant,
}

impl Run {
    pub fn new(command: &str) -> Run {
        Run {
            words: vec!["sctc".into(), command.into()],
            inputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn flag(&mut self, name: &str, value: impl ToString) -> &mut Run {
        self.words.push(format!("--{name}"));
        self.words.push(value.to_string());
        self
    }

    pub fn switch(&mut self, name: &str) -> &mut Run {
        self.words.push(format!("--{name}"));
        self
    }

    pub fn input(&mut self, identity: impl Into<String>) {
        self.inputs.push(identity.into());
    }

    pub fn command_line(&self) -> String {
        self.words.iter().map(|w| quote(w)).collect::<Vec<_>>().join(" ")
    }

    fn manifest_path(out: &Path) -> PathBuf {
        let mut p = out.as_os_str().to_owned();
        p.push(".manifest");
        PathBuf::from(p)
    }

    /// Comment lines placed in every output file.
    pub fn header(&self, out: &Path) -> String {
        let manifest = Run::manifest_path(out);
        let name = manifest.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        format!("# run: {}\n# manifest: {name}\n", self.command_line())
    }

    /// Writes the manifest next to `out`.
    pub fn finish(&self, out: &Path) -> Result<(), CliError> {
        let mut text = String::from("# sctc run manifest\n");
        text.push_str(&format!("command: {}\n", self.command_line()));
        text.push_str(&format!("version: {}\n", env!("CARGO_PKG_VERSION")));
        for i in &self.inputs {
            text.push_str(&format!("input: {i}\n"));
        }
        text.push_str(&format!("wall_clock_seconds: {:.3}\n", self.started.elapsed().as_secs_f64()));
        text.push_str(&format!("output: {}\n", out.display()));
        write_atomic(&Run::manifest_path(out), &text)
    }
}
