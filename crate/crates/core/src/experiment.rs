//! Experiment runner: TOML configuration, method comparisons across seeds,
//! validation suites and CSV artifacts.
//!
//! # Configuration
//!
//! ```toml
//! output_dir = "out"          # created if missing
//! seeds = [1, 2, 3]           # one run per (variant, seed)
//! workers = 4                 # optional, default 1
//! validations = ["restore"]   # optional claim ids, or ["all"]
//! validation_seed = 0         # optional
//!
//! [objective]
//! kind = "quadratic"          # quadratic | hetero_quadratic | logistic | mlp | probe
//! scales = [1.0, 4.0]
//! sizes = [10, 10]
//! data_seed = 0               # optional, default 0
//! init_std = 1.0              # optional, default 1
//!
//! [bandit]                    # optional, missing fields take the defaults
//! rho = 0.2
//!
//! [[runs]]
//! method = "adalezo"          # mezo | adalezo | random_sparse
//! steps = 1000
//! eta = 1e-3
//! name = "ada"                # optional, defaults to the method
//! mu = 1e-3                   # optional
//! schedule = "constant"       # optional: constant | inv_sqrt_steps
//! eval_every = 10             # optional
//! record_probs = false        # optional
//! record_oracle_corr = false  # optional
//! batch = "full"              # optional: full | resampled
//! bandit = { rho = 0.5 }      # optional per-run overrides
//! ```
//!
//! Objective parameters by kind:
//!
//! | kind | keys |
//! |------|------|
//! | `quadratic` | `scales`, `sizes` |
//! | `hetero_quadratic` | `layers`, `per_layer`, `hot_layers`, `hot_mass`, `hot_curvature`, `cold_curvature` (init is built in; `init_std` is ignored) |
//! | `logistic` | `n_samples`, `layer_sizes`, `batch_size` |
//! | `mlp` | `widths`, `n_samples`, `batch_size` |
//! | `probe` | `total_dim`, `layers`, `work` |
//!
//! Every unknown key anywhere in the file is reported in one error.
//!
//! # Output files
//!
//! * `curve_<name>_<seed>.csv`: [`CURVE_HEADER`], then `p_0..p_{L-1}` when
//!   `record_probs` is set. `loss` is empty on steps without an evaluation;
//!   `wall_clock_s` is the cumulative timed step time.
//! * `summary.csv`: [`SUMMARY_HEADER`], one row per (variant, seed).
//! * `breakdown.csv`: [`BREAKDOWN_HEADER`], median phase times and fractions.
//! * `correlation.csv`: [`CORRELATION_HEADER`], for runs with
//!   `record_oracle_corr`.
//! * `validation.csv`: see [`crate::validate::VALIDATION_HEADER`].
//! * `failures.csv`: [`FAILURES_HEADER`], empty apart from the header on
//!   success.
//!
//! Timing columns are the only ones that vary between reruns of a config.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::{Table, Value};

use crate::bandit::BanditConfig;
use crate::error::{Error, Result};
use crate::exec::{with_workers, Exec};
use crate::objectives::{GradientOracle, LogisticSynthetic, MlpTiny, ProbeObjective, QuadraticHetero};
use crate::optimizers::{run, BatchMode, LrSchedule, Method, RunConfig, RunOutput, StepReport};
use crate::param_store::{LayeredParams, NoiseStream};
use crate::seeds::{mix, TAG_INIT};
use crate::stats::median;
use crate::validate::{fmt_f64, run_claim, run_with_correlation, write_reports, CorrelationReport, HeteroQuadratic, ValidationReport, CLAIMS};

pub const CURVE_HEADER: [&str; 6] = ["step", "wall_clock_s", "loss", "t_perturb", "t_forward", "t_update"];
pub const SUMMARY_HEADER: [&str; 12] = [
    "run",
    "method",
    "seed",
    "status",
    "steps",
    "initial_loss",
    "final_loss",
    "mean_t_perturb",
    "mean_t_forward",
    "mean_t_update",
    "total_time_s",
    "speedup_vs_mezo",
];
pub const BREAKDOWN_HEADER: [&str; 8] = [
    "run",
    "seed",
    "median_t_perturb",
    "median_t_forward",
    "median_t_update",
    "frac_perturb",
    "frac_forward",
    "frac_update",
];
pub const CORRELATION_HEADER: [&str; 5] = ["run", "seed", "step", "instantaneous_r", "cumulative_r"];
pub const FAILURES_HEADER: [&str; 4] = ["kind", "id", "seed", "message"];

/// Test objective and the parameters it is built from.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveKind {
    Quadratic {
        scales: Vec<f64>,
        sizes: Vec<usize>,
    },
    HeteroQuadratic {
        layers: usize,
        per_layer: usize,
        hot_layers: usize,
        hot_mass: f64,
        #[serde(default = "one")]
        hot_curvature: f64,
        #[serde(default = "one")]
        cold_curvature: f64,
    },
    Logistic {
        n_samples: usize,
        layer_sizes: Vec<usize>,
        batch_size: Option<usize>,
    },
    Mlp {
        widths: Vec<usize>,
        n_samples: Option<usize>,
        batch_size: Option<usize>,
    },
    Probe {
        total_dim: usize,
        layers: usize,
        #[serde(default)]
        work: usize,
    },
}

fn one() -> f64 {
    1.0
}

const OBJECTIVE_KINDS: [(&str, &[&str]); 5] = [
    ("quadratic", &["scales", "sizes"]),
    (
        "hetero_quadratic",
        &["layers", "per_layer", "hot_layers", "hot_mass", "hot_curvature", "cold_curvature"],
    ),
    ("logistic", &["n_samples", "layer_sizes", "batch_size"]),
    ("mlp", &["widths", "n_samples", "batch_size"]),
    ("probe", &["total_dim", "layers", "work"]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    pub data_seed: u64,
    pub init_std: f64,
}

impl ObjectiveSpec {
    /// Builds the objective and its initial point. The initial point depends
    /// only on `data_seed`, so every run of an experiment starts from it.
    pub fn build(&self) -> Result<(Box<dyn GradientOracle>, LayeredParams)> {
        let init_stream = NoiseStream::new(mix(self.data_seed, TAG_INIT));
        let obj: Box<dyn GradientOracle> = match &self.kind {
            ObjectiveKind::Quadratic { scales, sizes } => Box::new(QuadraticHetero::new(scales.clone(), sizes.clone())?),
            ObjectiveKind::HeteroQuadratic {
                layers,
                per_layer,
                hot_layers,
                hot_mass,
                hot_curvature,
                cold_curvature,
            } => {
                let h = HeteroQuadratic::new(
                    *layers,
                    *per_layer,
                    *hot_layers,
                    *hot_mass,
                    (*hot_curvature, *cold_curvature),
                    self.data_seed,
                )?;
                return Ok((Box::new(h.objective), h.init));
            }
            ObjectiveKind::Logistic {
                n_samples,
                layer_sizes,
                batch_size,
            } => {
                let mut o = LogisticSynthetic::new(*n_samples, layer_sizes.clone(), self.data_seed)?;
                if let Some(b) = batch_size {
                    o = o.with_batch_size(*b);
                }
                Box::new(o)
            }
            ObjectiveKind::Mlp {
                widths,
                n_samples,
                batch_size,
            } => {
                let mut o = MlpTiny::new(widths.clone(), n_samples.unwrap_or(32), self.data_seed)?;
                if let Some(b) = batch_size {
                    o = o.with_batch_size(*b);
                }
                Box::new(o)
            }
            ObjectiveKind::Probe { total_dim, layers, work } => Box::new(ProbeObjective::even(*total_dim, *layers, *work)?),
        };
        let init = LayeredParams::gaussian(obj.layer_sizes(), self.init_std, init_stream)?;
        Ok((obj, init))
    }
}

/// One method variant; expanded over the experiment's seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct RunVariant {
    pub name: String,
    /// `master_seed` is replaced by each experiment seed.
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub objective: ObjectiveSpec,
    pub runs: Vec<RunVariant>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub workers: usize,
    pub validations: Vec<String>,
    pub validation_seed: u64,
}

const TOP_KEYS: [&str; 8] = [
    "objective",
    "bandit",
    "runs",
    "seeds",
    "output_dir",
    "workers",
    "validations",
    "validation_seed",
];
const OBJECTIVE_COMMON: [&str; 3] = ["kind", "data_seed", "init_std"];
const BANDIT_KEYS: [&str; 5] = ["rho", "tau", "gamma", "alpha", "clip"];
const RUN_KEYS: [&str; 11] = [
    "name",
    "method",
    "steps",
    "eta",
    "mu",
    "schedule",
    "eval_every",
    "record_probs",
    "record_oracle_corr",
    "batch",
    "bandit",
];

fn unknown_in(table: &Table, allowed: &[&str], prefix: &str, out: &mut Vec<String>) {
    for k in table.keys() {
        if !allowed.contains(&k.as_str()) {
            out.push(format!("{prefix}{k}"));
        }
    }
}

fn collect_unknown(root: &Table) -> Vec<String> {
    let mut out = Vec::new();
    unknown_in(root, &TOP_KEYS, "", &mut out);
    if let Some(Value::Table(obj)) = root.get("objective") {
        let kind_keys = obj
            .get("kind")
            .and_then(Value::as_str)
            .and_then(|k| OBJECTIVE_KINDS.iter().find(|(name, _)| *name == k))
            .map(|(_, keys)| *keys);
        // with an unknown or missing kind only the common keys can be judged
        if let Some(keys) = kind_keys {
            let allowed: Vec<&str> = OBJECTIVE_COMMON.iter().chain(keys).copied().collect();
            unknown_in(obj, &allowed, "objective.", &mut out);
        }
    }
    if let Some(Value::Table(b)) = root.get("bandit") {
        unknown_in(b, &BANDIT_KEYS, "bandit.", &mut out);
    }
    if let Some(Value::Array(runs)) = root.get("runs") {
        for (i, r) in runs.iter().enumerate() {
            if let Value::Table(t) = r {
                unknown_in(t, &RUN_KEYS, &format!("runs[{i}]."), &mut out);
                if let Some(Value::Table(b)) = t.get("bandit") {
                    unknown_in(b, &BANDIT_KEYS, &format!("runs[{i}].bandit."), &mut out);
                }
            }
        }
    }
    out
}

#[derive(Deserialize)]
struct RawConfig {
    objective: Option<Table>,
    #[serde(default)]
    bandit: Table,
    #[serde(default)]
    runs: Vec<RawRun>,
    #[serde(default)]
    seeds: Vec<u64>,
    output_dir: Option<PathBuf>,
    workers: Option<usize>,
    #[serde(default)]
    validations: Vec<String>,
    #[serde(default)]
    validation_seed: u64,
}

#[derive(Deserialize)]
struct RawRun {
    name: Option<String>,
    method: Method,
    steps: usize,
    eta: f64,
    mu: Option<f64>,
    schedule: Option<LrSchedule>,
    eval_every: Option<usize>,
    #[serde(default)]
    record_probs: bool,
    #[serde(default)]
    record_oracle_corr: bool,
    batch: Option<BatchMode>,
    #[serde(default)]
    bandit: Table,
}

fn de_err(what: &str, e: impl std::fmt::Display) -> Error {
    Error::config(format!("{what}: {}", e.to_string().trim()))
}

/// Reads and validates an experiment configuration.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse_config_str(&text)?;
    if cfg.output_dir.is_relative() {
        if let Some(parent) = path.parent() {
            cfg.output_dir = parent.join(&cfg.output_dir);
        }
    }
    Ok(cfg)
}

/// [`parse_config`] on a string. A relative `output_dir` is kept as is.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let root: Table = toml::from_str(text).map_err(|e| de_err("malformed TOML", e))?;
    let unknown = collect_unknown(&root);
    if !unknown.is_empty() {
        return Err(Error::UnknownKeys(unknown));
    }
    let raw: RawConfig = Value::Table(root).try_into().map_err(|e| de_err("invalid configuration", e))?;

    let mut obj = raw
        .objective
        .ok_or_else(|| Error::config("missing [objective] table: every run needs an objective"))?;
    let data_seed = match obj.remove("data_seed") {
        Some(v) => v.try_into::<u64>().map_err(|e| de_err("objective.data_seed", e))?,
        None => 0,
    };
    let init_std = match obj.remove("init_std") {
        Some(v) => v.try_into::<f64>().map_err(|e| de_err("objective.init_std", e))?,
        None => 1.0,
    };
    if !(init_std > 0.0 && init_std.is_finite()) {
        return Err(Error::config(format!("objective.init_std = {init_std} violates init_std > 0")));
    }
    match obj.get("kind").and_then(Value::as_str) {
        None => return Err(Error::config("objective.kind is required")),
        Some(k) if !OBJECTIVE_KINDS.iter().any(|(n, _)| *n == k) => {
            let kinds: Vec<&str> = OBJECTIVE_KINDS.iter().map(|(n, _)| *n).collect();
            return Err(Error::config(format!("unknown objective kind {k:?}; expected one of {}", kinds.join(", "))));
        }
        Some(_) => {}
    }
    let kind: ObjectiveKind = Value::Table(obj).try_into().map_err(|e| de_err("objective", e))?;
    let objective = ObjectiveSpec {
        kind,
        data_seed,
        init_std,
    };

    if raw.runs.is_empty() {
        return Err(Error::config("at least one [[runs]] entry is required"));
    }
    if raw.seeds.is_empty() {
        return Err(Error::config("seeds must be a non-empty list"));
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = raw.seeds.iter().find(|s| !seen.insert(**s)) {
        return Err(Error::config(format!("seed {dup} is listed twice")));
    }
    let defaults = merge_bandit(&BanditConfig::default(), &raw.bandit, "bandit")?;
    let mut runs = Vec::with_capacity(raw.runs.len());
    let mut names = BTreeSet::new();
    for (i, r) in raw.runs.into_iter().enumerate() {
        let bandit = merge_bandit(&defaults, &r.bandit, &format!("runs[{i}].bandit"))?;
        let base = RunConfig::default();
        let config = RunConfig {
            method: r.method,
            steps: r.steps,
            eta: r.eta,
            mu: r.mu.unwrap_or(base.mu),
            bandit,
            master_seed: 0,
            record_probs: r.record_probs,
            record_oracle_corr: r.record_oracle_corr,
            eval_every: r.eval_every.unwrap_or(base.eval_every),
            schedule: r.schedule.unwrap_or(base.schedule),
            batch: r.batch.unwrap_or(base.batch),
        };
        config.validate().map_err(|e| Error::config(format!("runs[{i}]: {e}")))?;
        let name = r.name.unwrap_or_else(|| config.method.name().to_string());
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(Error::config(format!("run name {name:?} must be non-empty [A-Za-z0-9_-]")));
        }
        if !names.insert(name.clone()) {
            return Err(Error::config(format!("run name {name:?} is used twice; set distinct names")));
        }
        runs.push(RunVariant { name, config });
    }
    let workers = raw.workers.unwrap_or(1);
    if workers == 0 {
        return Err(Error::config("workers must be at least 1"));
    }
    let validations = expand_claims(raw.validations)?;
    Ok(ExperimentConfig {
        objective,
        runs,
        seeds: raw.seeds,
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
        workers,
        validations,
        validation_seed: raw.validation_seed,
    })
}

fn merge_bandit(base: &BanditConfig, overrides: &Table, at: &str) -> Result<BanditConfig> {
    let mut cfg = *base;
    for (k, v) in overrides {
        let x = match v {
            Value::Float(f) => *f,
            Value::Integer(i) => *i as f64,
            other => return Err(Error::config(format!("{at}.{k} must be a number, got {}", other.type_str()))),
        };
        match k.as_str() {
            "rho" => cfg.rho = x,
            "tau" => cfg.tau = x,
            "gamma" => cfg.gamma = x,
            "alpha" => cfg.alpha = x,
            "clip" => cfg.clip = x,
            _ => unreachable!("unknown keys are rejected earlier"),
        }
    }
    cfg.validate().map_err(|e| Error::config(format!("{at}: {e}")))?;
    Ok(cfg)
}

fn expand_claims(ids: Vec<String>) -> Result<Vec<String>> {
    if ids.iter().any(|s| s == "all") {
        return Ok(CLAIMS.iter().map(|(id, _)| id.to_string()).collect());
    }
    let unknown: Vec<&String> = ids.iter().filter(|id| !CLAIMS.iter().any(|(c, _)| c == id)).collect();
    if !unknown.is_empty() {
        let list: Vec<&str> = unknown.iter().map(|s| s.as_str()).collect();
        return Err(Error::config(format!("unknown validation claims: {}", list.join(", "))));
    }
    Ok(ids)
}

/// Median per-phase times of one run and their shares of the total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseBreakdown {
    pub median_perturb: f64,
    pub median_forward: f64,
    pub median_update: f64,
    /// `None` when all medians are zero.
    pub fractions: Option<[f64; 3]>,
}

impl PhaseBreakdown {
    pub fn from_reports(reports: &[StepReport]) -> Self {
        let med = |f: fn(&StepReport) -> f64| {
            let v: Vec<f64> = reports.iter().map(f).collect();
            median(&v).unwrap_or(0.0)
        };
        let m = [med(|r| r.t_perturb), med(|r| r.t_forward), med(|r| r.t_update)];
        let total: f64 = m.iter().sum();
        let fractions = (total > 0.0).then(|| m.map(|x| x / total));
        Self {
            median_perturb: m[0],
            median_forward: m[1],
            median_update: m[2],
            fractions,
        }
    }

    /// Share of perturbation plus update, the part sparsity shrinks.
    pub fn overhead_fraction(&self) -> Option<f64> {
        self.fractions.map(|f| f[0] + f[2])
    }
}

/// Writes `breakdown.csv` rows for `(run, seed, breakdown)` entries.
pub fn emit_breakdown<W: Write>(w: W, rows: &[(String, u64, PhaseBreakdown)]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(BREAKDOWN_HEADER)?;
    for (name, seed, b) in rows {
        let frac = |i: usize| b.fractions.map_or(String::new(), |f| f[i].to_string());
        csv.write_record([
            name.clone(),
            seed.to_string(),
            b.median_perturb.to_string(),
            b.median_forward.to_string(),
            b.median_update.to_string(),
            frac(0),
            frac(1),
            frac(2),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// Writes one loss curve.
pub fn write_curve<W: Write>(w: W, out: &RunOutput, with_probs: bool) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let l = out.params.num_layers();
    let mut header: Vec<String> = CURVE_HEADER.iter().map(|s| s.to_string()).collect();
    if with_probs {
        header.extend((0..l).map(|i| format!("p_{i}")));
    }
    csv.write_record(&header)?;
    let mut clock = 0.0;
    for r in &out.reports {
        clock += r.step_time();
        let mut row = vec![
            (r.step + 1).to_string(),
            clock.to_string(),
            r.loss.map_or(String::new(), |x| x.to_string()),
            r.t_perturb.to_string(),
            r.t_forward.to_string(),
            r.t_update.to_string(),
        ];
        if with_probs {
            match &r.probs {
                Some(p) => row.extend(p.iter().map(f64::to_string)),
                None => row.extend((0..l).map(|_| String::new())),
            }
        }
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

/// A run that did not finish or a validation that did not pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub kind: &'static str,
    pub id: String,
    pub seed: Option<u64>,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub name: String,
    pub method: Method,
    pub seed: u64,
    pub outcome: std::result::Result<RunOutput, String>,
    pub correlation: Option<Vec<CorrelationReport>>,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutcome {
    pub records: Vec<RunRecord>,
    pub validation: Vec<ValidationReport>,
    pub failures: Vec<Failure>,
}

impl ExperimentOutcome {
    /// 0 iff every run finished and every requested validation passed.
    pub fn exit_code(&self) -> i32 {
        i32::from(!self.failures.is_empty())
    }
}

/// What [`run_experiment`] executes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunMode {
    /// Skip the method runs and only evaluate the validation claims.
    pub validate_only: bool,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Executes all runs and validations and writes the artifacts. Errors are
/// reserved for I/O and invalid objectives; run aborts and failed checks
/// end up in [`ExperimentOutcome::failures`].
pub fn run_experiment(cfg: &ExperimentConfig, mode: RunMode) -> Result<ExperimentOutcome> {
    fs::create_dir_all(&cfg.output_dir)?;
    let dir = cfg.output_dir.as_path();
    let (obj, init) = cfg.objective.build()?;
    let mut outcome = ExperimentOutcome::default();

    if !mode.validate_only {
        let jobs: Vec<(usize, u64)> = (0..cfg.runs.len())
            .flat_map(|r| cfg.seeds.iter().map(move |&s| (r, s)))
            .collect();
        let exec = if cfg.workers > 1 { Exec::Parallel } else { Exec::Sequential };
        let records = with_workers(cfg.workers, || {
            exec.map(jobs.len(), |j| {
                let (r, seed) = jobs[j];
                let variant = &cfg.runs[r];
                let rc = RunConfig {
                    master_seed: seed,
                    ..variant.config.clone()
                };
                let (result, correlation) = if rc.record_oracle_corr {
                    match run_with_correlation(obj.as_ref(), init.clone(), &rc) {
                        Ok((o, c)) => (Ok(o), Some(c)),
                        Err(e) => (Err(e), None),
                    }
                } else {
                    (run(obj.as_ref(), init.clone(), &rc), None)
                };
                let outcome = result.map_err(|e| e.to_string()).and_then(|o| {
                    let file = format!("curve_{}_{}.csv", variant.name, seed);
                    create(dir, &file)
                        .and_then(|w| write_curve(w, &o, rc.record_probs))
                        .map_err(|e| format!("writing {file}: {e}"))?;
                    Ok(o)
                });
                RunRecord {
                    name: variant.name.clone(),
                    method: rc.method,
                    seed,
                    outcome,
                    correlation,
                }
            })
        });
        for rec in &records {
            if let Err(msg) = &rec.outcome {
                outcome.failures.push(Failure {
                    kind: "run",
                    id: rec.name.clone(),
                    seed: Some(rec.seed),
                    message: msg.clone(),
                });
            }
        }
        write_summary(create(dir, "summary.csv")?, cfg, &records)?;
        let rows: Vec<(String, u64, PhaseBreakdown)> = records
            .iter()
            .filter_map(|r| {
                r.outcome
                    .as_ref()
                    .ok()
                    .map(|o| (r.name.clone(), r.seed, PhaseBreakdown::from_reports(&o.reports)))
            })
            .collect();
        emit_breakdown(create(dir, "breakdown.csv")?, &rows)?;
        if records.iter().any(|r| r.correlation.is_some()) {
            write_correlation(create(dir, "correlation.csv")?, &records)?;
        }
        outcome.records = records;
    }

    if !cfg.validations.is_empty() {
        let reports = with_workers(cfg.workers, || {
            let mut all = Vec::new();
            for id in &cfg.validations {
                match run_claim(id, cfg.validation_seed, Exec::Parallel) {
                    Ok(rs) => all.extend(rs),
                    Err(e) => outcome.failures.push(Failure {
                        kind: "validation",
                        id: id.clone(),
                        seed: Some(cfg.validation_seed),
                        message: e.to_string(),
                    }),
                }
            }
            all
        });
        for r in reports.iter().filter(|r| !r.pass) {
            outcome.failures.push(Failure {
                kind: "validation",
                id: r.claim.clone(),
                seed: Some(cfg.validation_seed),
                message: format!("estimate {} vs bound {}: {}", r.estimate, r.bound, r.detail),
            });
        }
        write_reports(create(dir, "validation.csv")?, &reports)?;
        outcome.validation = reports;
    }

    let mut csv = csv::Writer::from_writer(create(dir, "failures.csv")?);
    csv.write_record(FAILURES_HEADER)?;
    for f in &outcome.failures {
        csv.write_record([
            f.kind.to_string(),
            f.id.clone(),
            f.seed.map_or(String::new(), |s| s.to_string()),
            f.message.clone(),
        ])?;
    }
    csv.flush()?;
    Ok(outcome)
}

fn mean_of(reports: &[StepReport], f: fn(&StepReport) -> f64) -> f64 {
    reports.iter().map(f).sum::<f64>() / reports.len() as f64
}

fn write_summary<W: Write>(w: W, cfg: &ExperimentConfig, records: &[RunRecord]) -> Result<()> {
    let reference = cfg.runs.iter().find(|r| r.config.method == Method::Mezo).map(|r| r.name.as_str());
    let mezo_time = |seed: u64| {
        records
            .iter()
            .find(|r| Some(r.name.as_str()) == reference && r.seed == seed)
            .and_then(|r| r.outcome.as_ref().ok())
            .map(RunOutput::total_time)
    };
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(SUMMARY_HEADER)?;
    for r in records {
        let mut row = vec![r.name.clone(), r.method.to_string(), r.seed.to_string()];
        match &r.outcome {
            Ok(o) => {
                let total = o.total_time();
                let speedup = match mezo_time(r.seed) {
                    Some(m) if total > 0.0 => (m / total).to_string(),
                    _ => String::new(),
                };
                row.extend([
                    "ok".to_string(),
                    o.reports.len().to_string(),
                    o.initial_loss.to_string(),
                    o.final_loss().to_string(),
                    mean_of(&o.reports, |x| x.t_perturb).to_string(),
                    mean_of(&o.reports, |x| x.t_forward).to_string(),
                    mean_of(&o.reports, |x| x.t_update).to_string(),
                    total.to_string(),
                    speedup,
                ]);
            }
            Err(_) => {
                row.push("aborted".to_string());
                row.extend((0..8).map(|_| String::new()));
            }
        }
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

fn write_correlation<W: Write>(w: W, records: &[RunRecord]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(CORRELATION_HEADER)?;
    let opt = |x: Option<f64>| x.map_or(String::new(), fmt_f64);
    for r in records {
        for c in r.correlation.iter().flatten() {
            csv.write_record([
                r.name.clone(),
                r.seed.to_string(),
                (c.step + 1).to_string(),
                opt(c.instantaneous),
                opt(c.cumulative),
            ])?;
        }
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seeds = [1]
[objective]
kind = "quadratic"
scales = [1.0, 2.0]
sizes = [3, 4]
[[runs]]
method = "adalezo"
steps = 10
eta = 0.01
"#;

    #[test]
    fn defaults_apply() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        assert_eq!(cfg.runs[0].config.bandit, BanditConfig::default());
        assert_eq!(cfg.runs[0].name, "adalezo");
        assert_eq!(cfg.workers, 1);
        assert_eq!(cfg.objective.data_seed, 0);
    }

    #[test]
    fn empty_bandit_section_is_the_default_table() {
        let text = MINIMAL.replace("[[runs]]", "[bandit]\n[[runs]]");
        let b = parse_config_str(&text).unwrap().runs[0].config.bandit;
        assert_eq!((b.rho, b.tau, b.gamma, b.alpha, b.clip), (0.2, 0.6, 0.1, 0.1, 4.0));
    }

    #[test]
    fn overrides_layer() {
        let text = MINIMAL.replace("[[runs]]", "[bandit]\ntau = 1.5\n[[runs]]") + "bandit = { rho = 0.5 }\n";
        let b = parse_config_str(&text).unwrap().runs[0].config.bandit;
        assert_eq!((b.rho, b.tau, b.gamma), (0.5, 1.5, 0.1));
    }

    #[test]
    fn all_unknown_keys_listed() {
        let text = MINIMAL.replace("seeds = [1]", "seeds = [1]\ncolour = 1") + "stepz = 3\nbandit = { rh0 = 0.5 }\n";
        match parse_config_str(&text) {
            Err(Error::UnknownKeys(k)) => assert_eq!(k, vec!["colour", "runs[0].stepz", "runs[0].bandit.rh0"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn breakdown_fractions() {
        let mk = |p: f64, f: f64, u: f64| StepReport {
            step: 0,
            loss_plus: 0.0,
            loss_minus: 0.0,
            scalar_grad: 0.0,
            noise_seed: 0,
            active: vec![],
            counts: vec![],
            probs: None,
            t_perturb: p,
            t_forward: f,
            t_update: u,
            loss: None,
        };
        let b = PhaseBreakdown::from_reports(&[mk(1.0, 2.0, 3.0), mk(3.0, 2.0, 1.0), mk(2.0, 2.0, 2.0)]);
        let f = b.fractions.unwrap();
        assert!((f.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        assert_eq!(b.median_perturb, 2.0);
        let zero = PhaseBreakdown::from_reports(&[mk(0.0, 0.0, 0.0)]);
        assert_eq!(zero.fractions, None);
        let mut buf = Vec::new();
        emit_breakdown(&mut buf, &[("x".into(), 1, zero)]).unwrap();
        assert!(String::from_utf8(buf).unwrap().ends_with("x,1,0,0,0,,,\n"));
    }
}
