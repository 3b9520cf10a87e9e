//! Command-line driver for the burst-erasure analysis library: samples
//! code graphs, runs density-evolution scans on the erasure and Gaussian
//! channels, evaluates stopping-set analytics, and drives finite-length
//! peeling Monte Carlo — each command emitting a reproducible CSV or JSON
//! artifact with a metadata header recording every effective parameter and
//! the seed.
//!
//! Flags override values from an optional flat `key = value` config file
//! (`--config`); keys mirror the long flag names. A few module controls
//! without dedicated flags are config-file keys only and are listed in the
//! per-command help: `max_iters`, `bin_width`, `half_range` (LLR
//! quantization), `anchor` (restricted burst-start grid), `graphs`
//! (stopping-set empirics), `target_failures`, `max_trials`, `fixed_code`
//! (Monte Carlo), `bracket_tol` (threshold bisections).
//!
//! Exit status: 0 on success; 1 on parameter, configuration, or I/O
//! errors; 2 when `--strict` is set and any result was censored or failed
//! to converge.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use scldpc::de_density::{
    biawgn_capacity, max_burst_length_awgn, n0_for_capacity_loss, run_de_bms, snr_db,
    QuantGrid,
};
use scldpc::de_scalar::{max_burst_length, ChainParams, DeControls};
use scldpc::ensemble::{CodeGraph, EnsembleParams};
use scldpc::peeling::{floor_vs_sim, resume_sweep, run_sweep_with_checkpoints, SimConfig, SweepState};
use scldpc::stopping_sets::{empirical_pair_counts, error_floor_estimate, expected_counts};

const ARTIFACT_VERSION: u32 = 1;

/// Exit code for `--strict` violations (censored or non-converged results).
const STRICT_EXIT: u8 = 2;

#[derive(Parser)]
#[command(
    name = "scldpc",
    version,
    about = "Burst-erasure analysis of spatially coupled LDPC ensembles",
    after_help = "Config file: flat `key = value` lines mirroring the long flag names; \
                  flags override the file. `#` starts a comment."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one code graph and emit its edge list with a metadata header.
    Sample(CommonArgs),
    /// Maximum recoverable burst length across a background-erasure grid
    /// (CSV `eps,b_bp`; `--eps` restricts to a single point).
    DeBec(CommonArgs),
    /// Maximum recoverable burst length on the Gaussian channel across a
    /// capacity-loss grid (CSV `one_minus_capacity,b_bp`; `--n0` restricts
    /// to a single point). Config keys `bin_width`/`half_range` control the
    /// LLR quantization; `anchor` restricts the burst-start grid to one
    /// unit period at that interior position.
    DeAwgn(CommonArgs),
    /// Burst-length limits for w = 3, 4, 5 across the background-erasure
    /// grid (CSV `eps,b_bp_w3,b_bp_w4,b_bp_w5`; `--eps` restricts to one row).
    Threshold(CommonArgs),
    /// Background capacity loss at which the Gaussian chain stops decoding
    /// with no burst (JSON report; bisection to config key `bracket_tol`).
    ThresholdAwgn(CommonArgs),
    /// Analytic and sampled size-2 stopping-set statistics (JSON; config
    /// key `graphs` sets the sample size).
    SsStats(CommonArgs),
    /// Analytic error-floor curve over burst lengths (CSV
    /// `b,floor_estimate`; `--b` overrides the default grid).
    Floor(CommonArgs),
    /// Finite-length peeling Monte Carlo over a burst-length grid (CSV
    /// `b,trials,failures,p_b,ci_lo,ci_hi,floor_estimate`). Requires
    /// `--b`; checkpoints to `<out>.ckpt.json` and resumes automatically.
    Simulate(CommonArgs),
    /// Monte Carlo sweep joined with the analytic floor (CSV adds
    /// `ratio,ci_overlaps_floor`). Requires `--b`.
    Compare(CommonArgs),
}

#[derive(Args, Clone, Debug, Default)]
struct CommonArgs {
    /// Variable-node degree (>= 3).
    #[arg(long)]
    dv: Option<usize>,
    /// Check-node degree (> dv).
    #[arg(long)]
    dc: Option<usize>,
    /// Coupling width (>= 2).
    #[arg(long)]
    w: Option<usize>,
    /// Chain length in positions (> w).
    #[arg(long = "L")]
    l: Option<usize>,
    /// Variable nodes per position.
    #[arg(long = "M")]
    m: Option<usize>,
    /// Background erasure rate.
    #[arg(long)]
    eps: Option<f64>,
    /// Burst length(s) in positions; comma-separated where a grid is expected.
    #[arg(long)]
    b: Option<String>,
    /// Gaussian one-sided noise parameter N0 (SNR dB = 10 log10(2/N0)).
    #[arg(long)]
    n0: Option<f64>,
    /// Burst-start grid spacing (default 0.001 erasure / 0.01 Gaussian).
    #[arg(long)]
    delta: Option<f64>,
    /// Density-evolution stopping tolerance on the state change.
    #[arg(long)]
    stop_tol: Option<f64>,
    /// Residual error below which decoding counts as successful.
    #[arg(long)]
    success_tol: Option<f64>,
    /// Root seed; all randomness derives from it deterministically.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo and graph sampling (0 = all cores;
    /// results never depend on this).
    #[arg(long)]
    workers: Option<usize>,
    /// Output path (stdout when omitted; required for resumable sweeps).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key=value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Exit with status 2 if any result is censored or non-converged.
    #[arg(long)]
    strict: bool,
}

/// Fully merged parameters: flag value if given, else config-file value,
/// else default.
struct Effective {
    dv: usize,
    dc: usize,
    w: usize,
    l: usize,
    m: usize,
    eps: Option<f64>,
    b: Option<Vec<f64>>,
    n0: Option<f64>,
    delta: Option<f64>,
    stop_tol: Option<f64>,
    success_tol: Option<f64>,
    max_iters: Option<usize>,
    seed: u64,
    workers: usize,
    out: Option<PathBuf>,
    strict: bool,
    bin_width: f64,
    half_range: f64,
    anchor: Option<f64>,
    graphs: usize,
    target_failures: u64,
    max_trials: u64,
    fixed_code: bool,
    bracket_tol: f64,
}

fn parse_config(path: &PathBuf) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {} is not `key = value`: {raw:?}", idx + 1))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn from_config<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|e| anyhow!("config key `{key}`: cannot parse {raw:?}: {e}")),
    }
}

fn parse_b_grid(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| anyhow!("burst length {s:?}: {e}")))
        .collect()
}

impl CommonArgs {
    fn merge(&self) -> Result<Effective> {
        let cfg = match &self.config {
            Some(path) => parse_config(path)?,
            None => BTreeMap::new(),
        };
        let known = [
            "dv", "dc", "w", "L", "M", "eps", "b", "n0", "delta", "stop_tol", "success_tol",
            "seed", "workers", "out", "strict", "max_iters", "bin_width", "half_range",
            "anchor", "graphs", "target_failures", "max_trials", "fixed_code", "bracket_tol",
        ];
        for key in cfg.keys() {
            if !known.contains(&key.as_str()) {
                bail!("unknown config key `{key}` (known keys: {})", known.join(", "));
            }
        }
        let b_raw: Option<String> = match &self.b {
            Some(raw) => Some(raw.clone()),
            None => from_config(&cfg, "b")?,
        };
        Ok(Effective {
            dv: self.dv.or(from_config(&cfg, "dv")?).unwrap_or(3),
            dc: self.dc.or(from_config(&cfg, "dc")?).unwrap_or(6),
            w: self.w.or(from_config(&cfg, "w")?).unwrap_or(3),
            l: self.l.or(from_config(&cfg, "L")?).unwrap_or(100),
            m: self.m.or(from_config(&cfg, "M")?).unwrap_or(64),
            eps: self.eps.or(from_config(&cfg, "eps")?),
            b: b_raw.as_deref().map(parse_b_grid).transpose()?,
            n0: self.n0.or(from_config(&cfg, "n0")?),
            delta: self.delta.or(from_config(&cfg, "delta")?),
            stop_tol: self.stop_tol.or(from_config(&cfg, "stop_tol")?),
            success_tol: self.success_tol.or(from_config(&cfg, "success_tol")?),
            max_iters: from_config(&cfg, "max_iters")?,
            seed: self.seed.or(from_config(&cfg, "seed")?).unwrap_or(1),
            workers: self.workers.or(from_config(&cfg, "workers")?).unwrap_or(0),
            out: self.out.clone().or(from_config::<String>(&cfg, "out")?.map(PathBuf::from)),
            strict: self.strict || from_config(&cfg, "strict")?.unwrap_or(false),
            bin_width: from_config(&cfg, "bin_width")?.unwrap_or(0.01),
            half_range: from_config(&cfg, "half_range")?.unwrap_or(30.0),
            anchor: from_config(&cfg, "anchor")?,
            graphs: from_config(&cfg, "graphs")?.unwrap_or(1000),
            target_failures: from_config(&cfg, "target_failures")?.unwrap_or(400),
            max_trials: from_config(&cfg, "max_trials")?.unwrap_or(10_000_000),
            fixed_code: from_config(&cfg, "fixed_code")?.unwrap_or(false),
            bracket_tol: from_config(&cfg, "bracket_tol")?.unwrap_or(0.001),
        })
    }
}

impl Effective {
    fn ensemble(&self) -> Result<EnsembleParams> {
        Ok(EnsembleParams::new(self.dv, self.dc, self.w, self.l, self.m)?)
    }

    fn chain(&self) -> Result<ChainParams> {
        Ok(ChainParams::new(self.dv, self.dc, self.w, self.l)?)
    }

    fn controls(&self, default_delta: f64) -> Result<DeControls> {
        let base = DeControls::default();
        let controls = DeControls {
            grid_step: self.delta.unwrap_or(default_delta),
            stop_tol: self.stop_tol.unwrap_or(base.stop_tol),
            success_tol: self.success_tol.unwrap_or(base.success_tol),
            max_iters: self.max_iters.unwrap_or(base.max_iters),
        };
        Ok(controls)
    }

    fn quant_grid(&self) -> Result<QuantGrid> {
        Ok(QuantGrid::new(self.bin_width, self.half_range)?)
    }

    /// Metadata rows shared by every artifact.
    fn base_metadata(&self, command: &str) -> Vec<(String, String)> {
        vec![
            ("artifact_version".into(), ARTIFACT_VERSION.to_string()),
            ("command".into(), command.into()),
            ("dv".into(), self.dv.to_string()),
            ("dc".into(), self.dc.to_string()),
            ("w".into(), self.w.to_string()),
            ("L".into(), self.l.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}

fn metadata_header(rows: &[(String, String)]) -> String {
    let mut out = String::new();
    for (key, value) in rows {
        let _ = writeln!(out, "# {key}: {value}");
    }
    out
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, content)
            .with_context(|| format!("cannot write artifact {}", path.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn configure_workers(workers: usize) -> Result<()> {
    if workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("worker pool already configured")?;
    }
    Ok(())
}

/// Background-erasure grid for curve commands: 0 to 0.5 in steps of 0.01,
/// or the single `--eps` point when given.
fn eps_grid(eff: &Effective) -> Vec<f64> {
    match eff.eps {
        Some(e) => vec![e],
        None => (0..=50).map(|k| k as f64 * 0.01).collect(),
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:.6}")
}

fn fmt_p(v: f64) -> String {
    format!("{v:.6e}")
}

fn run_sample(eff: &Effective) -> Result<u8> {
    let params = eff.ensemble()?;
    let graph = CodeGraph::sample(&params, eff.seed)?;
    // The edge-list format carries its own canonical header (all
    // parameters plus the seed) and must stay round-trippable, so no
    // extra metadata rows are prepended here.
    let mut body = Vec::new();
    graph.write_edge_list(&mut body)?;
    emit(&eff.out, std::str::from_utf8(&body)?)?;
    Ok(0)
}

fn run_de_bec(eff: &Effective) -> Result<u8> {
    let chain = eff.chain()?;
    let controls = eff.controls(0.001)?;
    let mut rows = eff.base_metadata("de-bec");
    rows.push(("delta".into(), controls.grid_step.to_string()));
    rows.push(("stop_tol".into(), controls.stop_tol.to_string()));
    rows.push(("success_tol".into(), controls.success_tol.to_string()));
    rows.push(("max_iters".into(), controls.max_iters.to_string()));
    let mut body = String::from("eps,b_bp\n");
    let mut clean = true;
    for e in eps_grid(eff) {
        let scan = max_burst_length(&chain, e, &controls, None)?;
        clean &= scan.all_converged && !scan.hit_bracket_cap;
        let _ = writeln!(body, "{},{}", fmt_f(e), fmt_f(scan.b_bp));
    }
    emit(&eff.out, &(metadata_header(&rows) + &body))?;
    strict_status(eff, clean, "a burst scan was censored or did not converge")
}

fn run_threshold(eff: &Effective) -> Result<u8> {
    let controls = eff.controls(0.001)?;
    let mut rows = eff.base_metadata("threshold");
    rows.push(("w_values".into(), "3,4,5".into()));
    rows.push(("delta".into(), controls.grid_step.to_string()));
    rows.push(("stop_tol".into(), controls.stop_tol.to_string()));
    rows.push(("success_tol".into(), controls.success_tol.to_string()));
    rows.push(("max_iters".into(), controls.max_iters.to_string()));
    let mut body = String::from("eps,b_bp_w3,b_bp_w4,b_bp_w5\n");
    let mut clean = true;
    for e in eps_grid(eff) {
        let mut cells = vec![fmt_f(e)];
        for w in [3usize, 4, 5] {
            let chain = ChainParams::new(eff.dv, eff.dc, w, eff.l)?;
            let scan = max_burst_length(&chain, e, &controls, None)?;
            clean &= scan.all_converged && !scan.hit_bracket_cap;
            cells.push(fmt_f(scan.b_bp));
        }
        let _ = writeln!(body, "{}", cells.join(","));
    }
    emit(&eff.out, &(metadata_header(&rows) + &body))?;
    strict_status(eff, clean, "a burst scan was censored or did not converge")
}

fn run_de_awgn(eff: &Effective) -> Result<u8> {
    let chain = eff.chain()?;
    let grid = eff.quant_grid()?;
    let controls = eff.controls(0.01)?;
    let losses: Vec<f64> = match eff.n0 {
        Some(n0) => vec![1.0 - biawgn_capacity(n0)?],
        None => vec![0.1, 0.2, 0.3, 0.4],
    };
    let mut rows = eff.base_metadata("de-awgn");
    rows.push(("eps".into(), eff.eps.unwrap_or(0.0).to_string()));
    rows.push(("delta".into(), controls.grid_step.to_string()));
    rows.push(("stop_tol".into(), controls.stop_tol.to_string()));
    rows.push(("success_tol".into(), controls.success_tol.to_string()));
    rows.push(("max_iters".into(), controls.max_iters.to_string()));
    rows.push(("bin_width".into(), eff.bin_width.to_string()));
    rows.push(("half_range".into(), eff.half_range.to_string()));
    if let Some(a) = eff.anchor {
        rows.push(("anchor".into(), a.to_string()));
    }
    let mut body = String::from("one_minus_capacity,b_bp\n");
    let mut clean = true;
    for loss in losses {
        let n0 = n0_for_capacity_loss(loss)?;
        let scan = max_burst_length_awgn(
            &chain,
            n0,
            eff.eps.unwrap_or(0.0),
            &controls,
            &grid,
            eff.anchor,
            None,
        )?;
        clean &= scan.all_converged && !scan.hit_bracket_cap;
        let _ = writeln!(body, "{},{}", fmt_f(loss), fmt_f(scan.b_bp));
    }
    emit(&eff.out, &(metadata_header(&rows) + &body))?;
    strict_status(eff, clean, "a burst scan was censored or did not converge")
}

fn run_threshold_awgn(eff: &Effective) -> Result<u8> {
    let chain = eff.chain()?;
    let grid = eff.quant_grid()?;
    let controls = eff.controls(0.01)?;
    let table = scldpc::de_density::build_cn_table(&grid);
    // Bisect the capacity loss at which the no-burst chain stops decoding.
    let mut lo = 0.02f64;
    let mut hi = 0.6f64;
    let mut all_converged = true;
    let mut decodes = |loss: f64| -> Result<bool> {
        let n0 = n0_for_capacity_loss(loss)?;
        let run = run_de_bms(&chain, n0, 0.0, 0.0, 0.0, &table, &controls)?;
        all_converged &= run.converged;
        Ok(run.error_mass < controls.success_tol)
    };
    if !decodes(lo)? {
        bail!("chain fails to decode even at capacity loss {lo}; quantization too coarse?");
    }
    if decodes(hi)? {
        bail!("chain decodes at capacity loss {hi}; not a meaningful threshold bracket");
    }
    while hi - lo >= eff.bracket_tol {
        let mid = 0.5 * (lo + hi);
        if decodes(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let threshold = 0.5 * (lo + hi);
    let n0 = n0_for_capacity_loss(threshold)?;

    #[derive(serde::Serialize)]
    struct Report {
        artifact_version: u32,
        command: String,
        dv: usize,
        dc: usize,
        w: usize,
        l: usize,
        bin_width: f64,
        half_range: f64,
        bracket_tol: f64,
        seed: u64,
        one_minus_capacity_threshold: f64,
        n0: f64,
        snr_db: f64,
        all_converged: bool,
    }
    let report = Report {
        artifact_version: ARTIFACT_VERSION,
        command: "threshold-awgn".into(),
        dv: eff.dv,
        dc: eff.dc,
        w: eff.w,
        l: eff.l,
        bin_width: eff.bin_width,
        half_range: eff.half_range,
        bracket_tol: eff.bracket_tol,
        seed: eff.seed,
        one_minus_capacity_threshold: threshold,
        n0,
        snr_db: snr_db(n0),
        all_converged,
    };
    emit(&eff.out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    strict_status(eff, all_converged, "a density-evolution run did not converge")
}

fn run_ss_stats(eff: &Effective) -> Result<u8> {
    let params = eff.ensemble()?;
    let analytic = expected_counts(&params);
    let empirical = empirical_pair_counts(&params, eff.graphs, eff.seed)?;

    #[derive(serde::Serialize)]
    struct Report {
        artifact_version: u32,
        command: String,
        dv: usize,
        dc: usize,
        w: usize,
        l: usize,
        m: usize,
        seed: u64,
        graphs: usize,
        analytic_p_r: f64,
        analytic_q: Vec<f64>,
        analytic_lambda: Vec<f64>,
        empirical_mean: Vec<f64>,
        empirical_se: Vec<f64>,
    }
    let report = Report {
        artifact_version: ARTIFACT_VERSION,
        command: "ss-stats".into(),
        dv: eff.dv,
        dc: eff.dc,
        w: eff.w,
        l: eff.l,
        m: eff.m,
        seed: eff.seed,
        graphs: eff.graphs,
        analytic_p_r: analytic.p_r,
        analytic_q: analytic.q.clone(),
        analytic_lambda: analytic.lambda.clone(),
        empirical_mean: empirical.mean.clone(),
        empirical_se: empirical.se.clone(),
    };
    emit(&eff.out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(0)
}

fn run_floor(eff: &Effective) -> Result<u8> {
    let params = eff.ensemble()?;
    let grid: Vec<f64> = match &eff.b {
        Some(list) if !list.is_empty() => list.clone(),
        Some(_) => bail!("the burst-length grid is empty; pass --b with at least one value"),
        None => (1..=14).map(|k| k as f64 * 0.1).collect(),
    };
    let mut rows = eff.base_metadata("floor");
    rows.push(("M".into(), eff.m.to_string()));
    rows.push((
        "interpretation".into(),
        "expected fully-erased size-2 stopping sets; approximate lower bound on the \
         block-erasure probability in the floor region"
            .into(),
    ));
    let mut body = String::from("b,floor_estimate\n");
    for &b in &grid {
        let est = error_floor_estimate(&params, b)?;
        let _ = writeln!(body, "{},{}", fmt_f(b), fmt_p(est.value));
    }
    emit(&eff.out, &(metadata_header(&rows) + &body))?;
    Ok(0)
}

/// Shared Monte Carlo runner for `simulate` and `compare`.
fn monte_carlo(eff: &Effective, command: &str) -> Result<(Vec<(String, String)>, SimConfig, Vec<scldpc::peeling::SweepPoint>)> {
    let params = eff.ensemble()?;
    let b_grid = match &eff.b {
        Some(list) if !list.is_empty() => list.clone(),
        _ => bail!("{command} needs a non-empty burst-length grid; pass --b (comma-separated)"),
    };
    let mut config = SimConfig::new(params, b_grid, eff.seed);
    config.eps = eff.eps.unwrap_or(0.0);
    config.target_failures = eff.target_failures;
    config.max_trials = eff.max_trials;
    config.resample_code_per_trial = !eff.fixed_code;

    let mut rows = eff.base_metadata(command);
    rows.push(("M".into(), eff.m.to_string()));
    rows.push(("eps".into(), config.eps.to_string()));
    rows.push(("b".into(), config.b_grid.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(",")));
    rows.push(("target_failures".into(), config.target_failures.to_string()));
    rows.push(("max_trials".into(), config.max_trials.to_string()));
    rows.push(("fixed_code".into(), eff.fixed_code.to_string()));

    // Resume from a checkpoint sidecar when one matches this exact config.
    let ckpt_path = eff.out.as_ref().map(|p| {
        let mut name = p.as_os_str().to_owned();
        name.push(".ckpt.json");
        PathBuf::from(name)
    });
    let mut resume_state: Option<SweepState> = None;
    if let Some(path) = &ckpt_path {
        if let Ok(text) = fs::read_to_string(path) {
            let state: SweepState = serde_json::from_str(&text)
                .with_context(|| format!("corrupt checkpoint {}", path.display()))?;
            if state.config == config {
                resume_state = Some(state);
            } else {
                bail!(
                    "checkpoint {} belongs to a different configuration; delete it to start over",
                    path.display()
                );
            }
        }
    }
    let save = |state: &SweepState| {
        if let Some(path) = &ckpt_path {
            if let Ok(json) = serde_json::to_string(state) {
                let _ = fs::write(path, json);
            }
        }
    };
    let (points, _state) = match resume_state {
        Some(state) => resume_sweep(state, save)?,
        None => run_sweep_with_checkpoints(&config, save)?,
    };
    if let Some(path) = &ckpt_path {
        let _ = fs::remove_file(path);
    }
    Ok((rows, config, points))
}

fn run_simulate(eff: &Effective) -> Result<u8> {
    let (rows, config, points) = monte_carlo(eff, "simulate")?;
    let mut body = String::from("b,trials,failures,p_b,ci_lo,ci_hi,floor_estimate\n");
    let mut clean = true;
    for p in &points {
        clean &= p.reached_target;
        let floor = error_floor_estimate(&config.params, p.b)?.value;
        let _ = writeln!(
            body,
            "{},{},{},{},{},{},{}",
            fmt_f(p.b),
            p.trials,
            p.failures,
            fmt_p(p.p_hat),
            fmt_p(p.ci_lo),
            fmt_p(p.ci_hi),
            fmt_p(floor)
        );
    }
    emit(&eff.out, &(metadata_header(&rows) + &body))?;
    strict_status(eff, clean, "a sweep point was censored by the trial cap")
}

fn run_compare(eff: &Effective) -> Result<u8> {
    let (rows, config, points) = monte_carlo(eff, "compare")?;
    let mut body =
        String::from("b,trials,failures,p_b,ci_lo,ci_hi,floor_estimate,ratio,ci_overlaps_floor\n");
    let mut clean = true;
    for (p, row) in points.iter().zip(floor_vs_sim(&config.params, &points)?) {
        clean &= p.reached_target;
        let _ = writeln!(
            body,
            "{},{},{},{},{},{},{},{},{}",
            fmt_f(row.b),
            row.trials,
            row.failures,
            fmt_p(row.p_hat),
            fmt_p(row.ci_lo),
            fmt_p(row.ci_hi),
            fmt_p(row.floor_estimate),
            fmt_p(row.ratio),
            row.ci_overlaps_floor
        );
    }
    emit(&eff.out, &(metadata_header(&rows) + &body))?;
    strict_status(eff, clean, "a sweep point was censored by the trial cap")
}

fn strict_status(eff: &Effective, clean: bool, diagnostic: &str) -> Result<u8> {
    if !clean {
        eprintln!("warning: {diagnostic}");
        if eff.strict {
            return Ok(STRICT_EXIT);
        }
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    let (name, args): (&str, &CommonArgs) = match &cli.command {
        Command::Sample(a) => ("sample", a),
        Command::DeBec(a) => ("de-bec", a),
        Command::DeAwgn(a) => ("de-awgn", a),
        Command::Threshold(a) => ("threshold", a),
        Command::ThresholdAwgn(a) => ("threshold-awgn", a),
        Command::SsStats(a) => ("ss-stats", a),
        Command::Floor(a) => ("floor", a),
        Command::Simulate(a) => ("simulate", a),
        Command::Compare(a) => ("compare", a),
    };
    let eff = args.merge()?;
    configure_workers(eff.workers)?;
    match name {
        "sample" => run_sample(&eff),
        "de-bec" => run_de_bec(&eff),
        "de-awgn" => run_de_awgn(&eff),
        "threshold" => run_threshold(&eff),
        "threshold-awgn" => run_threshold_awgn(&eff),
        "ss-stats" => run_ss_stats(&eff),
        "floor" => run_floor(&eff),
        "simulate" => run_simulate(&eff),
        "compare" => run_compare(&eff),
        _ => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
