//! Experiment orchestration behind the `obilc` command line tool.
//!
//! Every command writes into its own output directory:
//!
//! - `records.jsonl`: one JSON object per iteration
//! - `summary.json`: termination reason and headline numbers
//! - `target.csv`, `input_initial.csv`, `output_initial.csv`,
//!   `input_final.csv`, `output_final.csv`: trajectories
//! - `config.toml`: the resolved configuration
//!
//! All files carry the configuration hash. Sweeps and model comparisons
//! place one such directory per run under their output directory.

mod config;
mod plot;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{LabeledSurrogate, RunConfig, SweepParams};
pub use plot::{plotdata, unit_normals, PlotKind, BAND_HALF_WIDTH};

use crate::costspec::{constant_speed_initialization, CaseStudyConfig};
use crate::engine::{run_ilc, IterationRecord, ProblemSpec, RunOutcome};
use crate::error::{Error, Result};
use crate::model::SurrogateModel;
use crate::plant::{Plant, Process};
use crate::trajops::{rms_error, save_trajectory_with_comments, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE_INIT: i32 = 3;
pub const EXIT_QP_INFEASIBLE: i32 = 4;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::InfeasibleInitialization(_) => EXIT_INFEASIBLE_INIT,
        Error::QpInfeasible { .. } => EXIT_QP_INFEASIBLE,
        _ => EXIT_FAILURE,
    }
}

/// One line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordLine {
    pub k: u64,
    pub eta: f64,
    pub rms_m: f64,
    pub rms_um: f64,
    pub step_norm: f64,
    pub max_constraint_violation: f64,
    pub qp_iterations: usize,
    pub qp_status: String,
    pub config_hash: String,
}

impl RecordLine {
    pub fn new(r: &IterationRecord, hash: &str) -> Self {
        Self {
            k: r.step.k,
            eta: r.step.eta,
            rms_m: r.rms_m,
            rms_um: r.rms_m * 1e6,
            step_norm: r.step.step_norm,
            max_constraint_violation: r.step.max_constraint_violation,
            qp_iterations: r.step.qp_iterations,
            qp_status: r.step.qp_status.as_str().to_string(),
            config_hash: hash.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub label: String,
    pub seed: u64,
    pub c: f64,
    /// `step_norm`, `max_iter` or `error`.
    pub termination: String,
    pub iterations: usize,
    pub initial_rms_m: Option<f64>,
    /// rms of the evaluation experiment at the final input.
    pub final_rms_m: Option<f64>,
    pub final_rms_um: Option<f64>,
    pub exit_code: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Command-line level options shared by all commands.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub max_iter: Option<usize>,
    pub workers: Option<usize>,
    pub quiet: bool,
}

impl Options {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(k) = self.max_iter {
            cfg.max_iter = k;
        }
    }
}

/// Everything built from a config before the first experiment.
pub struct Prepared {
    pub case: CaseStudyConfig,
    pub spec: ProblemSpec,
    pub process: Process,
    pub u0: Trajectory,
}

/// Builds the case study, plant, surrogate `index` and initial input.
/// Configuration problems surface as [`Error::Config`].
pub fn prepare(cfg: &RunConfig, index: usize, base: &Path) -> Result<Prepared> {
    let as_config = |e: Error| match e {
        Error::InfeasibleInitialization(_) | Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    };
    cfg.validate()?;
    let surrogate = cfg
        .surrogates
        .get(index)
        .ok_or_else(|| Error::Config(format!("no surrogate #{index}")))?;
    let case = cfg.case_study.build(base).map_err(as_config)?;
    if cfg.plant.axes.len() != case.axes() {
        return Err(Error::Config(format!(
            "plant has {} axes, target has {}",
            cfg.plant.axes.len(),
            case.axes()
        )));
    }
    let plant = Plant::new(cfg.plant.clone(), case.dt()).map_err(as_config)?;
    let model = SurrogateModel::from_spec(&surrogate.spec, case.samples(), case.axes(), case.dt(), &plant).map_err(as_config)?;
    let mut spec = ProblemSpec::case_study(&case, model).map_err(as_config)?;
    spec.max_iter = cfg.max_iter;
    if let Some(eps) = cfg.eps_stop {
        spec.eps_stop = eps;
    }
    let u0 = constant_speed_initialization(&case).map_err(as_config)?;
    let process = Process::new(plant, cfg.seed).map_err(as_config)?;
    Ok(Prepared { case, spec, process, u0 })
}

/// Result of [`execute`]: the in-memory run plus what was written.
pub struct Executed {
    pub summary: RunSummary,
    pub outcome: Option<RunOutcome>,
    pub records: Vec<RecordLine>,
}

fn hash_comment(hash: &str) -> Vec<String> {
    vec![format!("config_hash={hash}")]
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, &s)
}

/// Runs surrogate `index` of `cfg` and writes the run directory `out`.
/// Failures after the configuration was accepted are recorded in
/// `summary.json` before being returned.
pub fn execute(cfg: &RunConfig, index: usize, base: &Path, out: &Path, quiet: bool) -> Result<Executed> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let hash = cfg.hash();
    let label = cfg.surrogates.get(index).map(|s| s.label.clone()).unwrap_or_default();
    write_file(&out.join("config.toml"), &format!("# config_hash={hash}\n{}", cfg.to_toml()))?;
    let mut summary = RunSummary {
        config_hash: hash.clone(),
        label: label.clone(),
        seed: cfg.seed,
        c: cfg.schedule.c,
        termination: "error".into(),
        iterations: 0,
        initial_rms_m: None,
        final_rms_m: None,
        final_rms_um: None,
        exit_code: EXIT_FAILURE,
        error: None,
    };
    let fail = |mut summary: RunSummary, records: Vec<RecordLine>, err: Error| -> Result<Executed> {
        summary.exit_code = exit_code(&err);
        summary.iterations = records.len();
        summary.error = Some(err.to_string());
        write_records(&out.join("records.jsonl"), &records)?;
        write_json(&out.join("summary.json"), &summary)?;
        Err(err)
    };
    let prep = match prepare(cfg, index, base) {
        Ok(p) => p,
        Err(e) => return fail(summary, Vec::new(), e),
    };
    let comments = hash_comment(&hash);
    save_trajectory_with_comments(&prep.case.target, &out.join("target.csv"), &comments)?;
    save_trajectory_with_comments(&prep.u0, &out.join("input_initial.csv"), &comments)?;

    let mut lines = Vec::new();
    let result = run_ilc(&prep.spec, &prep.process, &prep.u0, &cfg.schedule, &mut |r| {
        if !quiet {
            eprintln!(
                "[{label}] k={:>3} eta={:.4} rms={:9.3} um step={:.3e} qp={} ({} it)",
                r.step.k,
                r.step.eta,
                r.rms_m * 1e6,
                r.step.step_norm,
                r.step.qp_status.as_str(),
                r.step.qp_iterations
            );
        }
        lines.push(RecordLine::new(r, &hash));
    });
    let outcome = match result {
        Ok(o) => o,
        Err(e) => return fail(summary, lines, e),
    };
    write_records(&out.join("records.jsonl"), &lines)?;
    save_trajectory_with_comments(&outcome.initial_output, &out.join("output_initial.csv"), &comments)?;
    save_trajectory_with_comments(&outcome.state.u, &out.join("input_final.csv"), &comments)?;
    // Fresh evaluation experiment at the final input.
    let y_final = prep.process.experiment(&outcome.state.u, outcome.state.k)?;
    save_trajectory_with_comments(&y_final, &out.join("output_final.csv"), &comments)?;

    let final_rms = rms_error(&y_final, &prep.case.target)?;
    summary.termination = outcome.termination.as_str().into();
    summary.iterations = outcome.records.len();
    summary.initial_rms_m = Some(rms_error(&outcome.initial_output, &prep.case.target)?);
    summary.final_rms_m = Some(final_rms);
    summary.final_rms_um = Some(final_rms * 1e6);
    summary.exit_code = EXIT_OK;
    write_json(&out.join("summary.json"), &summary)?;
    Ok(Executed {
        summary,
        outcome: Some(outcome),
        records: lines,
    })
}

fn write_records(path: &Path, lines: &[RecordLine]) -> Result<()> {
    let mut s = String::new();
    for l in lines {
        s.push_str(&serde_json::to_string(l)?);
        s.push('\n');
    }
    write_file(path, &s)
}

fn base_dir(config_path: &Path) -> PathBuf {
    config_path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// `obilc run`.
pub fn cmd_run(config_path: &Path, opts: &Options) -> Result<RunSummary> {
    let mut cfg = RunConfig::load(config_path)?;
    opts.apply(&mut cfg);
    let base = base_dir(config_path);
    let out = cfg.out_dir(&base, opts.out.as_deref());
    execute(&cfg, 0, &base, &out, opts.quiet).map(|e| e.summary)
}

/// Outcome of a multi-run command: one summary per run, in input order.
#[derive(Debug, Clone)]
pub struct BatchResult {
    pub summaries: Vec<RunSummary>,
}

impl BatchResult {
    /// First nonzero exit code, or zero.
    pub fn exit_code(&self) -> i32 {
        self.summaries.iter().map(|s| s.exit_code).find(|c| *c != 0).unwrap_or(EXIT_OK)
    }
}

fn summary_of(result: Result<Executed>, out: &Path) -> Result<RunSummary> {
    match result {
        Ok(e) => Ok(e.summary),
        // Failed runs leave their summary on disk.
        Err(_) => {
            let path = out.join("summary.json");
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

#[cfg(feature = "cli")]
fn run_all<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(usize, &T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect())
}

#[cfg(not(feature = "cli"))]
fn run_all<T: Sync, R: Send>(items: &[T], _workers: usize, f: impl Fn(usize, &T) -> R + Sync + Send) -> Vec<R> {
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Formats `c` for directory names: `0.5` → `c0.5`.
fn c_dir(c: f64) -> String {
    format!("c{c}")
}

/// `obilc sweep`: one run per step-size exponent with seed `seed ⊕ index`,
/// plus `sweep.csv` holding rms in µm at the requested iterations.
pub fn cmd_sweep(config_path: &Path, c_values: Option<&[f64]>, iterations: Option<&[usize]>, opts: &Options) -> Result<BatchResult> {
    let mut cfg = RunConfig::load(config_path)?;
    opts.apply(&mut cfg);
    let base = base_dir(config_path);
    let out = cfg.out_dir(&base, opts.out.as_deref());
    let from_cfg = cfg.sweep.clone();
    let cs: Vec<f64> = c_values
        .map(<[f64]>::to_vec)
        .or_else(|| from_cfg.as_ref().map(|s| s.c_values.clone()))
        .unwrap_or_else(|| vec![cfg.schedule.c]);
    let its: Vec<usize> = iterations
        .map(<[usize]>::to_vec)
        .or_else(|| from_cfg.as_ref().map(|s| s.iterations.clone()))
        .unwrap_or_else(|| vec![cfg.max_iter]);
    if cs.is_empty() || cs.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
        return Err(Error::Config("sweep needs nonnegative c values".into()));
    }
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let results = run_all(&cs, opts.workers.unwrap_or(1), |i, c| {
        let mut point = cfg.clone();
        point.schedule.c = *c;
        point.seed = cfg.seed ^ i as u64;
        let dir = out.join(c_dir(*c));
        let r = execute(&point, 0, &base, &dir, opts.quiet);
        (summary_of(r, &dir), dir)
    });
    let mut summaries = Vec::new();
    let mut table = format!("# config_hash={}\nc,status", cfg.hash());
    for k in &its {
        write!(table, ",rms_um_k{k}").unwrap();
    }
    table.push('\n');
    for ((result, dir), c) in results.into_iter().zip(&cs) {
        let summary = result?;
        let rms = read_records(&dir.join("records.jsonl")).unwrap_or_default();
        write!(table, "{c},{}", if summary.exit_code == 0 { "ok" } else { "failed" }).unwrap();
        for k in &its {
            match rms.iter().find(|r| r.k == *k as u64) {
                Some(r) => write!(table, ",{}", r.rms_um).unwrap(),
                None => table.push(','),
            }
        }
        table.push('\n');
        summaries.push(summary);
    }
    write_file(&out.join("sweep.csv"), &table)?;
    Ok(BatchResult { summaries })
}

/// `obilc compare-models`: one run per listed surrogate, identical seeds,
/// plus `compare.csv` with one rms column per surrogate.
pub fn cmd_compare_models(config_path: &Path, opts: &Options) -> Result<BatchResult> {
    let mut cfg = RunConfig::load(config_path)?;
    opts.apply(&mut cfg);
    let base = base_dir(config_path);
    let out = cfg.out_dir(&base, opts.out.as_deref());
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let labels: Vec<String> = cfg
        .surrogates
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{i}_{}", sanitize(&s.label)))
        .collect();
    let results = run_all(&labels, opts.workers.unwrap_or(1), |i, name| {
        let mut one = cfg.clone();
        one.surrogates = vec![cfg.surrogates[i].clone()];
        let dir = out.join(name);
        let r = execute(&one, 0, &base, &dir, opts.quiet);
        (summary_of(r, &dir), dir)
    });
    let mut summaries = Vec::new();
    let mut curves = Vec::new();
    for (result, dir) in results {
        summaries.push(result?);
        curves.push(read_records(&dir.join("records.jsonl")).unwrap_or_default());
    }
    let mut table = format!("# config_hash={}\niteration", cfg.hash());
    for l in &labels {
        write!(table, ",rms_um_{l}").unwrap();
    }
    table.push('\n');
    let rows = curves.iter().map(Vec::len).max().unwrap_or(0);
    for k in 1..=rows as u64 {
        write!(table, "{k}").unwrap();
        for c in &curves {
            match c.iter().find(|r| r.k == k) {
                Some(r) => write!(table, ",{}", r.rms_um).unwrap(),
                None => table.push(','),
            }
        }
        table.push('\n');
    }
    write_file(&out.join("compare.csv"), &table)?;
    Ok(BatchResult { summaries })
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Parses `records.jsonl`.
pub fn read_records(path: &Path) -> Result<Vec<RecordLine>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1))))
        .collect()
}
