//! `sctc`: weight enumerators, ensemble bounds, coupling checks and
//! AWGN simulations from the command line.
//!
//! Exit codes: 0 success, 1 failure, 2 usage error, 3 numeric guard
//! (insufficient caps, coverage gaps, ceiling-limited distance bounds).

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use sctc::bounds::{expurgated_ber_bound, min_distance_bound_for, union_bound_ber, union_bound_fer, BoundKind};
use sctc::coupling::{verify_theorem, CoupledCode, CouplingPermutations, CouplingSpec};
use sctc::ensembles::{
    average_bcc, average_hcc, average_pcc, average_scc, cached_average, read_avg_cache, write_avg_cache,
    AveragedWEF, EnsembleKind, EnsembleSpec, Role,
};
use sctc::sim::{run_monte_carlo, PermutationPolicy, SimCode, SimConfig};
use sctc::trellis::{build_trellis, parse_generator, Termination};
use sctc::wef::{make_transfer_matrix, read_cache, wef, write_cache, Caps, WeightEnumerator, WefCacheHeader};

use output::{digest, insert_after, read, write_atomic, Run};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] sctc::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Guard(String),
    #[error("{0}")]
    Failed(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use sctc::Error as E;
        match self {
            CliError::Usage(_) | CliError::Core(E::InvalidParameter(_) | E::Parse(_) | E::MalformedGenerator { .. }) => 2,
            CliError::Guard(_) | CliError::Core(E::CapInsufficient(_) | E::CoverageGap(_)) => 3,
            _ => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "sctc", version, about = "Weight enumerators, ensemble bounds, spatial coupling checks and AWGN simulation")]
struct Cli {
    /// Worker threads for parallel sections.
    #[arg(long, global = true, env = "SCTC_THREADS")]
    threads: Option<usize>,
    /// Directory of content-addressed caches.
    #[arg(long, global = true, env = "SCTC_CACHE_DIR", default_value = ".sctc-cache")]
    cache_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Input-output weight enumerator of one trellis.
    Wef {
        #[arg(long)]
        gen: String,
        #[arg(long)]
        sections: usize,
        #[arg(long, default_value = "terminated")]
        mode: String,
        #[arg(long)]
        cap_total: Option<u32>,
        /// Per-variable cap, `LABEL=VALUE`; repeatable.
        #[arg(long)]
        cap_var: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Uniform-interleaver ensemble average.
    Avg {
        #[arg(long)]
        kind: String,
        #[arg(long = "K")]
        k: usize,
        /// Largest total output weight kept.
        #[arg(long)]
        cap_total: u32,
        /// Precomputed component enumerator, `ROLE=PATH`; repeatable.
        #[arg(long)]
        component: Vec<String>,
        #[arg(long, default_value_t = 256)]
        precision: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Union bound on BER or FER from an averaged enumerator.
    Bound {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        avg: PathBuf,
        #[arg(long = "K")]
        k: Option<usize>,
        #[arg(long, default_value = "1/3")]
        rate: String,
        /// `start:step:stop` or a comma list, in dB.
        #[arg(long)]
        ebn0: String,
        #[arg(long)]
        wmax: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimum-distance bound of an ensemble.
    Mindist {
        #[arg(long)]
        kind: String,
        #[arg(long = "K")]
        k: Option<usize>,
        /// `first:last` or `first:last:step`.
        #[arg(long = "K-range")]
        k_range: Option<String>,
        #[arg(long)]
        alpha: f64,
        /// Largest weight the enumerator may be grown to.
        #[arg(long, default_value_t = 640)]
        wmax_limit: u32,
        #[arg(long, default_value_t = 256)]
        precision: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expurgated BER bound.
    Expurgate {
        #[arg(long)]
        avg: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value = "1/3")]
        rate: String,
        #[arg(long)]
        ebn0: String,
        #[arg(long)]
        wmax: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Checks that superposed coupled codewords are uncoupled codewords of
    /// no larger weight.
    VerifyCoupling {
        #[arg(long)]
        kind: String,
        #[arg(long = "L")]
        l: usize,
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value = "terminated")]
        boundary: String,
        #[arg(long, default_value = "terminated")]
        component_mode: String,
        #[arg(long)]
        trials: usize,
        /// Independent permutation sets the trials are spread over.
        #[arg(long, default_value_t = 1)]
        perm_sets: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo BER/FER over the AWGN channel.
    Simulate {
        /// `pcc`, `scc`, `bcc`, `hcc` or a coupled `sc-<kind>`.
        #[arg(long)]
        kind: String,
        #[arg(long = "K")]
        k: usize,
        #[arg(long = "L")]
        l: Option<usize>,
        #[arg(long, default_value_t = 4)]
        window: usize,
        #[arg(long)]
        ebn0: String,
        #[arg(long, default_value_t = 1_000_000)]
        max_frames: u64,
        #[arg(long, default_value_t = 100)]
        target_errors: u64,
        #[arg(long)]
        iters: Option<usize>,
        /// `fresh` or `fixed:<seed>`.
        #[arg(long, default_value = "fresh")]
        perm: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// `random` or `zero`; defaults to random where an encoder exists.
        #[arg(long)]
        messages: Option<String>,
        #[arg(long)]
        no_early_stop: bool,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse<T: std::str::FromStr<Err = sctc::Error>>(text: &str) -> CliResult<T> {
    text.parse::<T>().map_err(|e| CliError::Usage(e.to_string()))
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// `start:step:stop` (inclusive) or a comma-separated list.
fn parse_grid(text: &str) -> CliResult<Vec<f64>> {
    let bad = || usage(format!("bad Eb/N0 grid `{text}`"));
    let nums = |s: &str| -> CliResult<Vec<f64>> {
        s.split(|c| c == ':' || c == ',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
            .collect()
    };
    if text.contains(':') {
        let v = nums(text)?;
        let [start, step, stop] = v[..] else { return Err(bad()) };
        if step <= 0.0 || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize;
        Ok((0..=count).map(|k| ((start + step * k as f64) * 1e9).round() / 1e9).collect())
    } else {
        nums(text)
    }
}

fn parse_rate(text: &str) -> CliResult<f64> {
    let bad = || usage(format!("bad rate `{text}`"));
    let r = match text.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>().map_err(|_| bad())? / b.trim().parse::<f64>().map_err(|_| bad())?,
        None => text.trim().parse().map_err(|_| bad())?,
    };
    if r > 0.0 && r <= 1.0 {
        Ok(r)
    } else {
        Err(bad())
    }
}

fn parse_range(text: &str) -> CliResult<Vec<usize>> {
    let bad = || usage(format!("bad K range `{text}`"));
    let v: Vec<usize> = text
        .split(':')
        .map(|x| x.trim().parse().map_err(|_| bad()))
        .collect::<CliResult<_>>()?;
    let (first, last, step) = match v[..] {
        [a, b] => (a, b, 1),
        [a, b, s] if s > 0 => (a, b, s),
        _ => return Err(bad()),
    };
    if last < first {
        return Err(bad());
    }
    Ok((first..=last).step_by(step).collect())
}

fn component_labels(inputs: usize) -> Vec<String> {
    if inputs == 1 {
        vec!["I".into(), "P".into()]
    } else {
        (1..=inputs).map(|r| format!("I{r}")).chain(["P".to_string()]).collect()
    }
}

fn wef_identity(generator: &str, sections: usize, mode: Termination, caps: &Caps) -> String {
    format!(
        "gen={} sections={sections} mode={} caps={caps}",
        sctc::wef::compact_generator(generator),
        mode.as_str()
    )
}

/// Enumerator of `generator` from the cache directory, computed on a miss.
fn cached_wef(
    dir: &Path,
    generator: &str,
    sections: usize,
    mode: Termination,
    caps: &Caps,
    labels: &[&str],
    run: &mut Run,
) -> CliResult<(String, WeightEnumerator)> {
    let identity = wef_identity(generator, sections, mode, caps);
    let path = dir.join(format!("wef-{}.txt", digest(&identity)));
    run.input(format!("wef cache {} ({identity})", path.display()));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok((h, w)) = read_cache(&text) {
            if h.sections == sections && h.mode == mode && w.caps() == caps && w.label_refs() == labels {
                eprintln!("cache hit: {}", path.display());
                return Ok((text, w));
            }
        }
    }
    let t = build_trellis(&parse_generator(generator)?);
    let map: Vec<Option<usize>> = (0..labels.len()).map(Some).collect();
    let m = make_transfer_matrix(&t, &map, labels)?;
    let w = wef(&m, sections, caps, mode);
    let header = WefCacheHeader {
        sections,
        generator: generator.to_string(),
        mode,
    };
    let text = write_cache(&header, &w);
    write_atomic(&path, &text)?;
    Ok((text, w))
}

fn cmd_wef(
    dir: &Path,
    generator: &str,
    sections: usize,
    mode: &str,
    cap_total: Option<u32>,
    cap_var: &[String],
    out: &Path,
) -> CliResult<()> {
    let mode: Termination = parse(mode)?;
    let g = parse_generator(generator)?;
    let t = build_trellis(&g);
    let labels = component_labels(t.inputs());
    let label_refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    let mut caps = match cap_total {
        Some(c) => Caps::total(labels.len(), c),
        None => Caps::none(labels.len()),
    };
    let mut run = Run::new("wef");
    run.flag("gen", generator).flag("sections", sections).flag("mode", mode.as_str());
    if let Some(c) = cap_total {
        run.flag("cap-total", c);
    }
    for cv in cap_var {
        let (label, value) = cv.split_once('=').ok_or_else(|| usage(format!("bad --cap-var `{cv}`")))?;
        let var = labels
            .iter()
            .position(|l| l == label.trim())
            .ok_or_else(|| usage(format!("unknown label `{label}`, expected one of {}", labels.join(","))))?;
        let value: u32 = value.trim().parse().map_err(|_| usage(format!("bad --cap-var `{cv}`")))?;
        caps = caps.with_var(var, value);
        run.flag("cap-var", format!("{}={value}", label.trim()));
    }
    let (text, _) = cached_wef(dir, generator, sections, mode, &caps, &label_refs, &mut run)?;
    write_atomic(out, &insert_after(&text, 2, &run.header(out)))?;
    run.finish(out)
}

fn roles(kind: EnsembleKind) -> &'static [Role] {
    match kind {
        EnsembleKind::Pcc | EnsembleKind::Bcc => &[Role::Upper, Role::Lower],
        EnsembleKind::Scc => &[Role::Outer, Role::Inner],
        EnsembleKind::Hcc => &[Role::Upper, Role::Lower, Role::Inner],
    }
}

fn parse_role(text: &str) -> CliResult<Role> {
    [Role::Upper, Role::Lower, Role::Outer, Role::Inner]
        .into_iter()
        .find(|r| r.as_str() == text.trim())
        .ok_or_else(|| usage(format!("unknown role `{text}`")))
}

fn cmd_avg(
    dir: &Path,
    kind: &str,
    k: usize,
    w_max: u32,
    components: &[String],
    precision: u32,
    out: &Path,
) -> CliResult<()> {
    let kind: EnsembleKind = parse(kind)?;
    let spec = EnsembleSpec::new(kind, k);
    let mut run = Run::new("avg");
    run.flag("kind", kind).flag("K", k).flag("cap-total", w_max).flag("precision", precision);
    let a = if components.is_empty() {
        run.input(format!("average cache in {}", dir.display()));
        cached_average(&spec, w_max, precision, dir)?
    } else {
        let mut given: Vec<(Role, WeightEnumerator)> = Vec::new();
        for c in components {
            let (role, path) = c.split_once('=').ok_or_else(|| usage(format!("bad --component `{c}`")))?;
            let role = parse_role(role)?;
            let comp = spec.component(role)?;
            let (h, w) = read_cache(&read(Path::new(path))?)?;
            if h.sections != comp.sections
                || sctc::wef::compact_generator(&h.generator) != sctc::wef::compact_generator(&comp.generator)
                || h.mode != Termination::Terminated
            {
                return Err(usage(format!(
                    "{path}: expected a terminated {} enumerator over {} sections",
                    comp.generator, comp.sections
                )));
            }
            run.flag("component", format!("{}={path}", role.as_str()));
            run.input(format!("{}: {path} ({})", role.as_str(), wef_identity(&h.generator, h.sections, h.mode, w.caps())));
            given.push((role, w));
        }
        let mut get = |role: Role| -> CliResult<WeightEnumerator> {
            if let Some((_, w)) = given.iter().find(|(r, _)| *r == role) {
                return Ok(w.clone());
            }
            let comp = spec.component(role)?;
            let (_, labels) = spec.component_variables(role);
            let (_, w) = cached_wef(
                dir,
                &comp.generator,
                comp.sections,
                Termination::Terminated,
                &spec.required_caps(role, w_max),
                &labels,
                &mut run,
            )?;
            Ok(w)
        };
        let r = roles(kind);
        match kind {
            EnsembleKind::Pcc => average_pcc(&get(r[0])?, &get(r[1])?, &spec, w_max, precision)?,
            EnsembleKind::Scc => average_scc(&get(r[0])?, &get(r[1])?, &spec, w_max, precision)?,
            EnsembleKind::Bcc => average_bcc(&get(r[0])?, &get(r[1])?, &spec, w_max, precision)?,
            EnsembleKind::Hcc => average_hcc(&get(r[0])?, &get(r[1])?, &get(r[2])?, &spec, w_max, precision)?,
        }
    };
    write_atomic(out, &insert_after(&write_avg_cache(&a), 2, &run.header(out)))?;
    run.finish(out)
}

fn load_avg(path: &Path, k: Option<usize>, run: &mut Run) -> CliResult<AveragedWEF> {
    let mut a = read_avg_cache(&read(path)?)?;
    a.provenance.retain(|p| !p.starts_with("run:") && !p.starts_with("manifest:"));
    if let Some(k) = k {
        if k != a.n {
            return Err(usage(format!("--K {k} does not match the enumerator's N={}", a.n)));
        }
    }
    run.input(format!("averaged enumerator {} (kind={} N={} w_max={})", path.display(), a.kind, a.n, a.w_max));
    Ok(a)
}

#[allow(clippy::too_many_arguments)]
fn cmd_bound(
    kind: &str,
    avg: &Path,
    k: Option<usize>,
    rate: &str,
    ebn0: &str,
    wmax: Option<u32>,
    out: &Path,
) -> CliResult<()> {
    let kind: BoundKind = parse(kind)?;
    let rate_value = parse_rate(rate)?;
    let grid = parse_grid(ebn0)?;
    let mut run = Run::new("bound");
    run.flag("kind", kind.as_str()).flag("avg", avg.display());
    let a = load_avg(avg, k, &mut run)?;
    let w = wmax.unwrap_or(a.w_max);
    run.flag("K", a.n).flag("rate", rate).flag("ebn0", ebn0).flag("wmax", w);
    let curve = match kind {
        BoundKind::UnionBer => union_bound_ber(&a, rate_value, &grid, w)?,
        BoundKind::UnionFer => union_bound_fer(&a, rate_value, &grid, w)?,
        BoundKind::ExpurgatedBer => return Err(usage("use the expurgate command for expurgated bounds")),
    };
    write_atomic(out, &insert_after(&curve.to_csv(), 0, &run.header(out)))?;
    run.finish(out)
}

/// Grows the enumerator until the distance bound is no longer limited by
/// its weight ceiling.
fn distance_for(dir: &Path, kind: EnsembleKind, k: usize, alpha: f64, limit: u32, precision: u32) -> CliResult<(u32, f64, u32)> {
    let spec = EnsembleSpec::new(kind, k);
    let mut w = 16.min(limit);
    loop {
        let a = cached_average(&spec, w, precision, dir)?;
        let d = min_distance_bound_for(&a, alpha)?;
        if !d.ceiling_limited {
            return Ok((d.d_tilde, d.cumulative.to_f64(), w));
        }
        if w >= limit {
            return Err(CliError::Guard(format!(
                "{kind} K={k}: cumulative spectrum below 1 - alpha up to w = {limit}; d_tilde undetermined"
            )));
        }
        w = (w + w / 2).min(limit);
    }
}

fn cmd_mindist(
    dir: &Path,
    kind: &str,
    k: Option<usize>,
    k_range: Option<&str>,
    alpha: f64,
    limit: u32,
    precision: u32,
    out: Option<&Path>,
) -> CliResult<()> {
    let kind: EnsembleKind = parse(kind)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(usage(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut run = Run::new("mindist");
    run.flag("kind", kind);
    let ks = match (k, k_range) {
        (Some(k), None) => {
            run.flag("K", k);
            vec![k]
        }
        (None, Some(r)) => {
            run.flag("K-range", r);
            parse_range(r)?
        }
        _ => return Err(usage("give exactly one of --K and --K-range")),
    };
    run.flag("alpha", alpha).flag("wmax-limit", limit).flag("precision", precision);
    run.input(format!("average cache in {}", dir.display()));
    let mut csv = String::from("K,alpha,d_tilde,cumulative,w_max\n");
    for &k in &ks {
        let (d, cumulative, w) = distance_for(dir, kind, k, alpha, limit, precision)?;
        if ks.len() == 1 {
            println!("d_tilde={d}");
        } else {
            println!("K={k} d_tilde={d}");
        }
        csv.push_str(&format!("{k},{alpha},{d},{cumulative:.6e},{w}\n"));
    }
    if let Some(out) = out {
        run.flag("out", out.display());
        write_atomic(out, &format!("{}{csv}", run.header(out)))?;
        run.finish(out)?;
    }
    Ok(())
}

fn cmd_expurgate(avg: &Path, alpha: f64, rate: &str, ebn0: &str, wmax: Option<u32>, out: &Path) -> CliResult<()> {
    let rate_value = parse_rate(rate)?;
    let grid = parse_grid(ebn0)?;
    let mut run = Run::new("expurgate");
    run.flag("avg", avg.display()).flag("alpha", alpha);
    let a = load_avg(avg, None, &mut run)?;
    let w = wmax.unwrap_or(a.w_max);
    run.flag("rate", rate).flag("ebn0", ebn0).flag("wmax", w);
    let curve = expurgated_ber_bound(&a, alpha, rate_value, &grid, w).map_err(|e| match e {
        sctc::Error::CoverageGap(m) => CliError::Guard(format!("ceiling-limited d_tilde: {m}")),
        e => e.into(),
    })?;
    write_atomic(out, &insert_after(&curve.to_csv(), 0, &run.header(out)))?;
    run.finish(out)
}

fn coupled_kind(text: &str) -> CliResult<EnsembleKind> {
    parse(text.strip_prefix("sc-").unwrap_or(text))
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    kind: &str,
    l: usize,
    n: usize,
    boundary: &str,
    component_mode: &str,
    trials: usize,
    perm_sets: usize,
    seed: u64,
    out: Option<&Path>,
) -> CliResult<()> {
    let kind = coupled_kind(kind)?;
    let boundary: Termination = parse(boundary)?;
    let component_mode: Termination = parse(component_mode)?;
    if perm_sets == 0 {
        return Err(usage("--perm-sets must be positive"));
    }
    let mut run = Run::new("verify-coupling");
    run.flag("kind", format!("sc-{kind}"))
        .flag("L", l)
        .flag("N", n)
        .flag("boundary", boundary.as_str())
        .flag("component-mode", component_mode.as_str())
        .flag("trials", trials)
        .flag("perm-sets", perm_sets)
        .flag("seed", seed);
    let (mut pass, mut fail, mut strict) = (0usize, 0usize, 0usize);
    let mut lines = String::from("set,trial,member,w_coupled,w_superposed\n");
    for set in 0..perm_sets {
        let count = trials / perm_sets + usize::from(set < trials % perm_sets);
        if count == 0 {
            continue;
        }
        let perms = CouplingPermutations::random(kind, n, seed.wrapping_add(set as u64));
        let spec = CouplingSpec::new(perms, n, l, boundary)?.with_component_mode(component_mode);
        let code = CoupledCode::new(&spec)?;
        for trial in 0..count {
            let info_seed = seed.wrapping_mul(1_000_003).wrapping_add((set * trials + trial) as u64);
            let cw = code.encode(&code.random_info(info_seed))?;
            let r = verify_theorem(&spec, &cw)?;
            if r.passed() {
                pass += 1;
            } else {
                fail += 1;
            }
            strict += usize::from(r.w_superposed < r.w_coupled);
            lines.push_str(&format!("{set},{trial},{}\n", r.to_text()));
        }
    }
    println!("pass={pass} fail={fail}");
    eprintln!("strict inequality in {strict} of {} chains", pass + fail);
    if let Some(out) = out {
        run.flag("out", out.display());
        write_atomic(out, &format!("{}# pass={pass} fail={fail}\n{lines}", run.header(out)))?;
        run.finish(out)?;
    }
    if fail > 0 {
        return Err(CliError::Failed(format!("{fail} chains violate the superposition property")));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    kind: &str,
    k: usize,
    l: Option<usize>,
    window: usize,
    ebn0: &str,
    max_frames: u64,
    target_errors: u64,
    iters: Option<usize>,
    perm: &str,
    seed: u64,
    messages: Option<&str>,
    no_early_stop: bool,
    batch: usize,
    out: &Path,
) -> CliResult<()> {
    let code = match (kind.strip_prefix("sc-"), l) {
        (Some(base), Some(l)) => SimCode::Coupled {
            kind: parse(base)?,
            l,
            window,
        },
        (Some(_), None) => return Err(usage("coupled simulation needs --L")),
        (None, _) => SimCode::Uncoupled(parse(kind)?),
    };
    let mut cfg = SimConfig::new(code, k);
    cfg.ebn0_db = parse_grid(ebn0)?;
    cfg.max_frames = max_frames;
    cfg.target_frame_errors = target_errors;
    if let Some(i) = iters {
        cfg.iterations = i;
    }
    cfg.permutations = parse::<PermutationPolicy>(perm)?;
    cfg.seed = seed;
    cfg.random_messages = match messages {
        None => cfg.random_messages,
        Some("random") => true,
        Some("zero") => false,
        Some(m) => return Err(usage(format!("--messages must be random or zero, got `{m}`"))),
    };
    cfg.early_stop = !no_early_stop;
    cfg.batch = batch;
    let mut run = Run::new("simulate");
    run.flag("kind", kind).flag("K", k);
    if let Some(l) = l {
        run.flag("L", l).flag("window", window);
    }
    run.flag("ebn0", ebn0)
        .flag("max-frames", max_frames)
        .flag("target-errors", target_errors)
        .flag("iters", cfg.iterations)
        .flag("perm", cfg.permutations)
        .flag("seed", seed)
        .flag("messages", if cfg.random_messages { "random" } else { "zero" })
        .flag("batch", batch);
    if no_early_stop {
        run.switch("no-early-stop");
    }
    let result = run_monte_carlo(&cfg)?;
    write_atomic(out, &format!("{}{}", run.header(out), result.to_csv()))?;
    run.finish(out)
}

fn dispatch(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Failed(e.to_string()))?;
    }
    let dir = cli.cache_dir.as_path();
    match &cli.command {
        Command::Wef { gen, sections, mode, cap_total, cap_var, out } => {
            cmd_wef(dir, gen, *sections, mode, *cap_total, cap_var, out)
        }
        Command::Avg { kind, k, cap_total, component, precision, out } => {
            cmd_avg(dir, kind, *k, *cap_total, component, *precision, out)
        }
        Command::Bound { kind, avg, k, rate, ebn0, wmax, out } => cmd_bound(kind, avg, *k, rate, ebn0, *wmax, out),
        Command::Mindist { kind, k, k_range, alpha, wmax_limit, precision, out } => cmd_mindist(
            dir,
            kind,
            *k,
            k_range.as_deref(),
            *alpha,
            *wmax_limit,
            *precision,
            out.as_deref(),
        ),
        Command::Expurgate { avg, alpha, rate, ebn0, wmax, out } => cmd_expurgate(avg, *alpha, rate, ebn0, *wmax, out),
        Command::VerifyCoupling { kind, l, n, boundary, component_mode, trials, perm_sets, seed, out } => cmd_verify(
            kind,
            *l,
            *n,
            boundary,
            component_mode,
            *trials,
            *perm_sets,
            *seed,
            out.as_deref(),
        ),
        Command::Simulate {
            kind,
            k,
            l,
            window,
            ebn0,
            max_frames,
            target_errors,
            iters,
            perm,
            seed,
            messages,
            no_early_stop,
            batch,
            out,
        } => cmd_simulate(
            kind,
            *k,
            *l,
            *window,
            ebn0,
            *max_frames,
            *target_errors,
            *iters,
            perm,
            *seed,
            messages.as_deref(),
            *no_early_stop,
            *batch,
            out,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0:0.5:2").unwrap(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(parse_grid("1.5,3").unwrap(), vec![1.5, 3.0]);
        assert_eq!(parse_grid("0:0.1:0.3").unwrap().len(), 4);
        assert!(parse_grid("1:0:2").is_err());
        assert!(parse_grid("a").is_err());
    }

    #[test]
    fn rates_and_ranges() {
        assert!((parse_rate("1/3").unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(parse_rate("0.5").unwrap(), 0.5);
        assert!(parse_rate("3/1").is_err());
        assert_eq!(parse_range("104:110:3").unwrap(), vec![104, 107, 110]);
        assert!(parse_range("5:4").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        assert_eq!(CliError::Core(sctc::Error::CapInsufficient("x".into())).exit_code(), 3);
        assert_eq!(CliError::Guard("x".into()).exit_code(), 3);
        assert_eq!(CliError::Failed("x".into()).exit_code(), 1);
    }
}
