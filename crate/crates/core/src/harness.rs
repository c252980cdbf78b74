//! Experiment orchestration behind the command-line tool: validation
//! tables, batch runs with on-disk outputs, parameter sweeps, Gibbs tables
//! and re-aggregation of stored runs.
//!
//! Every file written here carries the config hash, either as a JSON field
//! or as a leading `# config_hash=<hex>` line.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, IniDocument};
use crate::engine::{run_batch_prepared, RunRecord};
use crate::error::{Error, Result};
use crate::gibbs::{gibbs_on_grid, limit_measure, pi_of_f, GridSpec, TestFunction};
use crate::metrics::{
    consensus_decay_fit, mean_stderr, success_rate, weak_convergence_stat, WeakConvergenceRow,
};
use crate::objectives::{parse_objective, split_linear, validate_admissibility, Objective};
use crate::record::{read_series_csv, write_series_csv, RunMeta, MAX_CSV_COORDS};
use crate::spec::SpecString;
use crate::topology::{check_connected_in_mean, GraphModel};

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "ANNEALNET_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Record(_) => EXIT_IO,
        Error::Diverged { .. } | Error::InvalidState(_) => EXIT_INTERNAL,
        _ => EXIT_VALIDATION,
    }
}

/// Output directory: the config's `[output] dir`, else `$ANNEALNET_OUT/<name>`,
/// else `annealnet-out/<name>`.
pub fn default_output_dir(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    if let Some(dir) = &cfg.output_dir {
        return PathBuf::from(dir);
    }
    let root = std::env::var_os(OUTPUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("annealnet-out"));
    root.join(name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    /// Advisory: the run is allowed but a condition could not be confirmed.
    Flag,
    /// Hard failure: the run is refused.
    Fail,
}

impl CheckStatus {
    pub fn label(self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Flag => "flag",
            CheckStatus::Fail => "FAIL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub check: String,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub config_hash: String,
    pub rows: Vec<CheckRow>,
}

impl ValidationReport {
    pub fn has_failures(&self) -> bool {
        self.rows.iter().any(|r| r.status == CheckStatus::Fail)
    }

    pub fn exit_code(&self) -> i32 {
        if self.has_failures() {
            EXIT_VALIDATION
        } else {
            EXIT_OK
        }
    }

    /// Fixed-width text table.
    pub fn to_table(&self) -> String {
        let w = self
            .rows
            .iter()
            .map(|r| r.check.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut out = format!("config_hash {}\n", self.config_hash);
        out.push_str(&format!("{:<w$}  {:<6}  detail\n", "check", "status"));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<w$}  {:<6}  {}\n",
                r.check,
                r.status.label(),
                r.detail
            ));
        }
        out
    }

    fn push(&mut self, check: &str, status: CheckStatus, detail: impl Into<String>) {
        self.rows.push(CheckRow {
            check: check.to_string(),
            status,
            detail: detail.into(),
        });
    }
}

/// Checks every assumption that can be checked before running. Hard
/// failures: malformed components, schedule exponents out of range,
/// dimension mismatches and minima outside the Gibbs box. Everything the
/// sampler can only approximate is reported as a flag.
pub fn validate_experiment(cfg: &ExperimentConfig) -> ValidationReport {
    use CheckStatus::*;
    let mut rep = ValidationReport {
        config_hash: cfg.run.hash(),
        rows: Vec::new(),
    };
    let run = &cfg.run;

    let objective = match parse_objective(&run.objective) {
        Ok(o) => {
            rep.push("objective", Pass, format!("{} (d = {})", o.name(), o.dim()));
            Some(o)
        }
        Err(e) => {
            rep.push("objective", Fail, e.to_string());
            None
        }
    };

    if let Some(obj) = &objective {
        let adm = validate_admissibility(obj, cfg.admissibility.box_radius, cfg.admissibility.grid);
        let flagged = |prefixes: &[&str]| -> Vec<&String> {
            adm.flags
                .iter()
                .filter(|f| prefixes.iter().any(|p| f.starts_with(p)))
                .collect()
        };
        let mut category = |name: &str, prefixes: &[&str], ok_detail: String| {
            let hits = flagged(prefixes);
            if hits.is_empty() {
                rep.push(name, Pass, ok_detail);
            } else {
                let joined: Vec<&str> = hits.iter().map(|s| s.as_str()).collect();
                rep.push(name, Flag, joined.join("; "));
            }
        };
        category(
            "minima-normalization",
            &["normalization", "critical point"],
            format!(
                "min sampled U = {:.3e}, max |U(x*)| = {:.3e}, max |grad U(x*)| = {:.3e}",
                adm.min_value, adm.max_value_at_minima, adm.max_grad_at_minima
            ),
        );
        category(
            "gradient-lipschitz",
            &["lipschitz"],
            format!(
                "sampled ratio {:.6} <= declared {}",
                adm.lipschitz_ratio_max,
                obj.lipschitz_grad()
            ),
        );
        category(
            "radial-growth",
            &["growth"],
            format!(
                "|grad U|/|x| in [{:.4}, {:.4}] at radius {}",
                adm.growth_ratio_min, adm.growth_ratio_max, adm.box_radius
            ),
        );
        category(
            "radial-alignment",
            &["radial alignment"],
            format!(
                "min alignment {:.6} >= C(d) = {:.6}",
                adm.alignment_min, adm.alignment_threshold
            ),
        );
        category(
            "laplacian-gap",
            &["laplacian gap"],
            match adm.laplacian_gap_inf {
                Some(v) => format!("sampled inf |grad U|^2 - tr Hess U = {v:.4}"),
                None => "no Hessian available; not sampled".into(),
            },
        );

        match split_linear(
            obj.clone(),
            run.n_agents.max(1),
            run.split_spread,
            run.split_seed,
        ) {
            Ok(fam) => rep.push(
                "gradient-dissimilarity",
                Pass,
                format!("max |grad U_n - grad U| = {:.6}", fam.dissimilarity_bound()),
            ),
            Err(e) => rep.push("gradient-dissimilarity", Fail, e.to_string()),
        }

        match run.initial.build(run.n_agents.max(1), obj.dim()) {
            Ok(_) => rep.push(
                "dimensions",
                Pass,
                format!("N = {}, d = {}", run.n_agents, obj.dim()),
            ),
            Err(e) => rep.push("dimensions", Fail, e.to_string()),
        }

        if let Some(g) = &cfg.gibbs {
            let eps_min = g.epsilons.iter().cloned().fold(f64::INFINITY, f64::min);
            let margin = 5.0 * eps_min;
            let outside: Vec<String> = obj
                .global_minima()
                .iter()
                .filter(|m| m.iter().any(|&c| c < g.lo + margin || c > g.hi - margin))
                .map(|m| format!("{m:?}"))
                .collect();
            if outside.is_empty() {
                rep.push(
                    "gibbs-bounds",
                    Pass,
                    format!(
                        "all minima inside [{}, {}] with margin {margin}",
                        g.lo, g.hi
                    ),
                );
            } else {
                rep.push(
                    "gibbs-bounds",
                    Fail,
                    format!(
                        "minima {} lie outside [{}, {}] with margin {margin}",
                        outside.join(", "),
                        g.lo,
                        g.hi
                    ),
                );
            }
        }
    }

    match GraphModel::parse(&run.graph, run.n_agents.max(1)) {
        Ok(g) => {
            let (ok, l2) = check_connected_in_mean(&g);
            rep.push(
                "connected-in-mean",
                if ok { Pass } else { Flag },
                format!("lambda_2 of mean Laplacian = {l2:.6}"),
            );
        }
        Err(e) => rep.push("connected-in-mean", Fail, e.to_string()),
    }

    match run.noise.validate() {
        Ok(()) => rep.push(
            "gradient-noise",
            Pass,
            format!(
                "{}: zero mean, per-coordinate second moment {}",
                run.noise.descriptor(),
                run.noise.coordinate_second_moment()
            ),
        ),
        Err(e) => rep.push("gradient-noise", Fail, e.to_string()),
    }

    let sched = run.schedule.validate();
    if sched.is_valid() {
        rep.push(
            "schedule-exponents",
            Pass,
            format!(
                "tau_beta = {} in (0, 1/2); max consensus exponent {}",
                run.schedule.tau_beta, sched.tau_max
            ),
        );
    } else {
        rep.push("schedule-exponents", Fail, sched.errors.join("; "));
    }
    match sched.ratio_exceeds_threshold {
        Some(true) => rep.push(
            "annealing-ratio",
            Pass,
            format!(
                "c_gamma^2 / c_alpha = {} exceeds threshold",
                sched.annealing_ratio.unwrap_or(f64::NAN)
            ),
        ),
        Some(false) => rep.push("annealing-ratio", Flag, sched.warnings.join("; ")),
        None => rep.push(
            "annealing-ratio",
            Pass,
            match sched.annealing_ratio {
                Some(r) if run.schedule.c_gamma > 0.0 => {
                    format!("c_gamma^2 / c_alpha = {r}; no threshold configured")
                }
                _ => "annealing disabled".into(),
            },
        ),
    }
    if run.tau >= sched.tau_max {
        rep.push(
            "consensus-exponent",
            Flag,
            format!(
                "tau = {} is not below 1/2 - tau_beta = {}",
                run.tau, sched.tau_max
            ),
        );
    }

    let bad_fns: Vec<String> = cfg
        .metrics
        .functions
        .iter()
        .filter_map(|f| match TestFunction::parse(f) {
            Err(e) => Some(format!("{f}: {e}")),
            Ok(_) => clamp_out_of_range(f, objective.as_ref()),
        })
        .collect();
    if bad_fns.is_empty() {
        rep.push("test-functions", Pass, cfg.metrics.functions.join("; "));
    } else {
        rep.push("test-functions", Fail, bad_fns.join("; "));
    }
    rep
}

fn clamp_out_of_range(descriptor: &str, obj: Option<&Objective>) -> Option<String> {
    let spec = SpecString::parse(descriptor).ok()?;
    let dim = obj?.dim();
    let i = spec.usize_or("i", 0).ok()?;
    (spec.name == "clamp" && i >= dim)
        .then(|| format!("{descriptor}: coordinate {i} out of range for d = {dim}"))
}

/// Refuses configurations with hard failures.
pub fn ensure_valid(cfg: &ExperimentConfig) -> Result<ValidationReport> {
    let rep = validate_experiment(cfg);
    if rep.has_failures() {
        let msgs: Vec<String> = rep
            .rows
            .iter()
            .filter(|r| r.status == CheckStatus::Fail)
            .map(|r| format!("{}: {}", r.check, r.detail))
            .collect();
        return Err(Error::Config(msgs.join("; ")));
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub version: String,
    pub config: ExperimentConfig,
    /// Seeds of the topology, gradient-noise and annealing streams, per run.
    pub stream_seeds: Vec<[u64; 3]>,
    pub validation: ValidationReport,
}

/// One line of `aggregate.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub metric: String,
    pub t: u64,
    pub estimate: f64,
    pub stderr: f64,
    pub target: Option<f64>,
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub n_runs: usize,
    pub diverged_runs: usize,
    pub success_radius: f64,
    pub success_rate: f64,
    pub success_stderr: f64,
    /// Mean per-run log-log slope of the consensus error over the fit window.
    pub consensus_slope: Option<f64>,
    pub consensus_slope_stderr: Option<f64>,
    pub slope_runs: usize,
    pub weak_convergence: Vec<WeakConvergenceRow>,
    /// Set when the weak-convergence targets could not be computed.
    pub weak_convergence_note: Option<String>,
}

/// Aggregates a batch of records.
pub fn summarize(
    cfg: &ExperimentConfig,
    hash: &str,
    records: &[RunRecord],
) -> Result<(Summary, Vec<AggregateRow>)> {
    let obj = parse_objective(&cfg.run.objective)?;
    let n = records.len();
    let rate = success_rate(records, cfg.metrics.success_radius, Some(cfg.run.steps))?;
    let rate_se = (rate * (1.0 - rate) / n as f64).sqrt();
    let slopes: Vec<f64> = records
        .iter()
        .filter(|r| r.diverged_at.is_none())
        .filter_map(|r| consensus_decay_fit(&r.rows, cfg.metrics.fit_window).ok())
        .collect();
    let (slope, slope_se) = if slopes.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_stderr(&slopes);
        (Some(m), Some(s))
    };

    let mut rows = vec![AggregateRow {
        metric: "success_rate".into(),
        t: cfg.run.steps,
        estimate: rate,
        stderr: rate_se,
        target: None,
        gap: None,
    }];
    if let (Some(m), Some(s)) = (slope, slope_se) {
        rows.push(AggregateRow {
            metric: "consensus_decay_slope".into(),
            t: cfg.metrics.fit_window.1,
            estimate: m,
            stderr: s,
            target: None,
            gap: None,
        });
    }

    let suite = cfg
        .metrics
        .functions
        .iter()
        .map(|f| TestFunction::parse(f))
        .collect::<Result<Vec<_>>>()?;
    let (weak, note) = if suite.is_empty() || records.iter().all(|r| r.diverged_at.is_some()) {
        (
            Vec::new(),
            Some("no test functions or no finished runs".to_string()),
        )
    } else {
        match limit_measure(&obj) {
            Ok(limit) => (
                weak_convergence_stat(
                    records,
                    &suite,
                    &cfg.metrics.checkpoints,
                    &limit,
                    cfg.metrics.agent,
                )?,
                None,
            ),
            Err(e) => (Vec::new(), Some(e.to_string())),
        }
    };
    for w in &weak {
        rows.push(AggregateRow {
            metric: format!("mean_f_xbar:{}", w.function),
            t: w.t,
            estimate: w.estimate,
            stderr: w.stderr,
            target: Some(w.target),
            gap: Some(w.gap),
        });
        if let (Some(e), Some(s)) = (w.agent_estimate, w.agent_stderr) {
            rows.push(AggregateRow {
                metric: format!(
                    "mean_f_agent{}:{}",
                    cfg.metrics.agent.unwrap_or(0),
                    w.function
                ),
                t: w.t,
                estimate: e,
                stderr: s,
                target: Some(w.target),
                gap: Some((e - w.target).abs()),
            });
        }
    }
    let summary = Summary {
        config_hash: hash.to_string(),
        n_runs: n,
        diverged_runs: records.iter().filter(|r| r.diverged_at.is_some()).count(),
        success_radius: cfg.metrics.success_radius,
        success_rate: rate,
        success_stderr: rate_se,
        consensus_slope: slope,
        consensus_slope_stderr: slope_se,
        slope_runs: slopes.len(),
        weak_convergence: weak,
        weak_convergence_note: note,
    };
    Ok((summary, rows))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_aggregate_csv<W: Write>(mut out: W, hash: &str, rows: &[AggregateRow]) -> Result<()> {
    writeln!(out, "# config_hash={hash}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "t", "estimate", "stderr", "target", "gap"])?;
    for r in rows {
        w.write_record([
            r.metric.clone(),
            r.t.to_string(),
            r.estimate.to_string(),
            r.stderr.to_string(),
            opt(r.target),
            opt(r.gap),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn run_stem(index: u64) -> String {
    format!("run_{index:04}")
}

#[derive(Debug, Clone, Serialize)]
struct Timings {
    config_hash: String,
    total_secs: f64,
    per_run_secs: Vec<f64>,
    parallelism: usize,
}

/// Outcome of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub summary: Summary,
    pub records: Vec<RunRecord>,
}

/// Validates, runs every replica and writes
/// `manifest.json`, `runs/run_XXXX.{json,csv}`, `aggregate.csv`,
/// `summary.json` and `timings.json` under `out_dir`. All files except
/// `timings.json` are byte-identical across reruns.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    let started = Instant::now();
    let validation = ensure_valid(cfg)?;
    let prep = cfg.run.prepare()?;
    let records = run_batch_prepared(&prep, cfg.n_runs, cfg.parallelism)?;
    let hash = prep.hash.clone();

    let runs_dir = out_dir.join("runs");
    fs::create_dir_all(&runs_dir)?;
    let manifest = Manifest {
        config_hash: hash.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        stream_seeds: records.iter().map(|r| r.stream_seeds).collect(),
        validation,
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    for r in &records {
        let stem = run_stem(r.run_index);
        write_json(&runs_dir.join(format!("{stem}.json")), &RunMeta::of(r))?;
        let mut f = create_file(&runs_dir.join(format!("{stem}.csv")))?;
        write_series_csv(&mut f, &hash, r.dim, &r.rows)?;
        f.flush()?;
    }
    let (summary, agg) = summarize(cfg, &hash, &records)?;
    write_outputs(out_dir, &hash, &summary, &agg)?;
    write_json(
        &out_dir.join("timings.json"),
        &Timings {
            config_hash: hash,
            total_secs: started.elapsed().as_secs_f64(),
            per_run_secs: records.iter().map(|r| r.wall_time_secs).collect(),
            parallelism: cfg.parallelism,
        },
    )?;
    Ok(RunOutcome {
        out_dir: out_dir.to_path_buf(),
        summary,
        records,
    })
}

fn write_outputs(
    out_dir: &Path,
    hash: &str,
    summary: &Summary,
    agg: &[AggregateRow],
) -> Result<()> {
    let mut f = create_file(&out_dir.join("aggregate.csv"))?;
    write_aggregate_csv(&mut f, hash, agg)?;
    f.flush()?;
    write_json(&out_dir.join("summary.json"), summary)
}

/// Reloads the runs stored under `dir` and rewrites `aggregate.csv` and
/// `summary.json`. Fails if any file carries a different config hash.
pub fn report(dir: &Path) -> Result<Summary> {
    let manifest: Manifest = serde_json::from_str(&read_text(&dir.join("manifest.json"))?)?;
    let hash = manifest.config_hash.clone();
    if manifest.config.run.hash() != hash {
        return Err(Error::Record(
            "manifest hash does not match its embedded config".into(),
        ));
    }
    let runs_dir = dir.join("runs");
    let mut stems: Vec<String> = fs::read_dir(&runs_dir)
        .map_err(|e| Error::Io(format!("{}: {e}", runs_dir.display())))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter_map(|n| n.strip_suffix(".json").map(str::to_string))
        .collect();
    stems.sort();
    if stems.is_empty() {
        return Err(Error::Record(format!(
            "no runs found under {}",
            dir.display()
        )));
    }
    let mut records = Vec::with_capacity(stems.len());
    for stem in &stems {
        let meta: RunMeta =
            serde_json::from_str(&read_text(&dir.join("runs").join(format!("{stem}.json")))?)?;
        if meta.config_hash != hash {
            return Err(Error::Record(format!(
                "{stem}.json has config hash {} but the manifest has {hash}; refusing to mix configurations",
                meta.config_hash
            )));
        }
        if meta.dim > MAX_CSV_COORDS {
            return Err(Error::Record(format!(
                "dimension {} exceeds the {MAX_CSV_COORDS} coordinates stored in CSV",
                meta.dim
            )));
        }
        let csv_path = runs_dir.join(format!("{stem}.csv"));
        let file = fs::File::open(&csv_path)
            .map_err(|e| Error::Io(format!("{}: {e}", csv_path.display())))?;
        let series = read_series_csv(file)?;
        records.push(meta.into_record(series)?);
    }
    let (summary, agg) = summarize(&manifest.config, &hash, &records)?;
    write_outputs(dir, &hash, &summary, &agg)?;
    Ok(summary)
}

/// One swept parameter: `section.key` and its values.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub target: String,
    pub values: Vec<String>,
}

impl SweepAxis {
    /// Parses `section.key=v1,v2,...`.
    pub fn parse(s: &str) -> Result<Self> {
        let (target, values) = s.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "sweep axis must be section.key=v1,v2,..., got {s:?}"
            ))
        })?;
        let target = target.trim();
        if !target.contains('.') {
            return Err(Error::Config(format!(
                "sweep target must be section.key, got {target:?}"
            )));
        }
        let values: Vec<String> = values
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        if values.is_empty() {
            return Err(Error::Config(format!("sweep axis {target} has no values")));
        }
        Ok(SweepAxis {
            target: target.to_string(),
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub index: usize,
    pub values: Vec<String>,
    pub config_hash: Option<String>,
    /// `ok`, or `invalid: <reason>` / `error: <reason>`.
    pub status: String,
    pub success_rate: Option<f64>,
    pub consensus_slope: Option<f64>,
}

/// Runs the Cartesian product of `axes` over `base`. Invalid cells are
/// recorded and skipped; they do not abort the sweep. Cell outputs go to
/// `out_dir/cell_XXXX` and the table to `out_dir/sweep.csv`.
pub fn sweep(base: &IniDocument, axes: &[SweepAxis], out_dir: &Path) -> Result<Vec<SweepCell>> {
    if axes.is_empty() {
        return Err(Error::Config("sweep needs at least one axis".into()));
    }
    fs::create_dir_all(out_dir)?;
    let total: usize = axes.iter().map(|a| a.values.len()).product();
    let mut cells = Vec::with_capacity(total);
    for index in 0..total {
        let mut rem = index;
        let mut values = vec![String::new(); axes.len()];
        for (k, axis) in axes.iter().enumerate().rev() {
            values[k] = axis.values[rem % axis.values.len()].clone();
            rem /= axis.values.len();
        }
        let mut doc = base.clone();
        let mut cell = SweepCell {
            index,
            values: values.clone(),
            config_hash: None,
            status: String::new(),
            success_rate: None,
            consensus_slope: None,
        };
        let parsed = axes
            .iter()
            .zip(&values)
            .try_for_each(|(a, v)| doc.apply_override(&format!("{}={v}", a.target)))
            .and_then(|()| {
                let mut cfg = ExperimentConfig::from_ini(&doc)?;
                cfg.output_dir = None;
                Ok(cfg)
            });
        match parsed {
            Err(e) => cell.status = format!("invalid: {e}"),
            Ok(cfg) => {
                cell.config_hash = Some(cfg.run.hash());
                match ensure_valid(&cfg) {
                    Err(e) => cell.status = format!("invalid: {e}"),
                    Ok(_) => {
                        match run_experiment(&cfg, &out_dir.join(format!("cell_{index:04}"))) {
                            Ok(o) => {
                                cell.status = "ok".into();
                                cell.success_rate = Some(o.summary.success_rate);
                                cell.consensus_slope = o.summary.consensus_slope;
                            }
                            Err(e @ Error::Io(_)) => return Err(e),
                            Err(e) => cell.status = format!("error: {e}"),
                        }
                    }
                }
            }
        }
        cells.push(cell);
    }
    let mut f = create_file(&out_dir.join("sweep.csv"))?;
    let mut w = csv::Writer::from_writer(&mut f);
    let mut header = vec!["cell".to_string()];
    header.extend(axes.iter().map(|a| a.target.clone()));
    header.extend(["status", "success_rate", "consensus_slope", "config_hash"].map(String::from));
    w.write_record(&header)?;
    for c in &cells {
        let mut rec = vec![c.index.to_string()];
        rec.extend(c.values.iter().cloned());
        rec.push(c.status.clone());
        rec.push(opt(c.success_rate));
        rec.push(opt(c.consensus_slope));
        rec.push(c.config_hash.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    drop(w);
    f.flush()?;
    Ok(cells)
}

/// Request for a Gibbs table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsRequest {
    pub objective: String,
    pub epsilons: Vec<f64>,
    pub functions: Vec<String>,
    /// Box bounds per coordinate; defaults to a margin around the minima.
    pub bounds: Option<(f64, f64)>,
    pub n_points: Option<usize>,
}

impl GibbsRequest {
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_string(self).expect("serializes").as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn grid(&self, obj: &Objective) -> GridSpec {
        let eps_max = self.epsilons.iter().cloned().fold(0.0, f64::max);
        let mut g = match self.bounds {
            Some((lo, hi)) => GridSpec::cube(obj.dim(), lo, hi, 0),
            None => GridSpec::around_minima(obj, (10.0 * eps_max).max(1.0)),
        };
        let default_points = GridSpec::around_minima(obj, 1.0).n_points;
        g.n_points = self.n_points.unwrap_or(default_points);
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GibbsRow {
    /// `0` marks the small-temperature limit.
    pub epsilon: f64,
    pub function: String,
    pub value: f64,
}

/// `pi^eps(f)` for every requested temperature and test function, followed
/// by the limit values.
pub fn gibbs_table(req: &GibbsRequest) -> Result<Vec<GibbsRow>> {
    let obj = parse_objective(&req.objective)?;
    if req.epsilons.is_empty() || req.epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidArgument(
            "epsilons must be a non-empty list of positive values".into(),
        ));
    }
    let suite = req
        .functions
        .iter()
        .map(|f| TestFunction::parse(f))
        .collect::<Result<Vec<_>>>()?;
    let grid = req.grid(&obj);
    let mut rows = Vec::new();
    for &eps in &req.epsilons {
        let m = gibbs_on_grid(&obj, eps, &grid)?;
        for f in &suite {
            rows.push(GibbsRow {
                epsilon: eps,
                function: f.name().to_string(),
                value: pi_of_f(&m, f),
            });
        }
    }
    let limit = limit_measure(&obj)?;
    for f in &suite {
        rows.push(GibbsRow {
            epsilon: 0.0,
            function: f.name().to_string(),
            value: pi_of_f(&limit, f),
        });
    }
    Ok(rows)
}

pub fn write_gibbs_csv<W: Write>(mut out: W, hash: &str, rows: &[GibbsRow]) -> Result<()> {
    writeln!(out, "# config_hash={hash}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epsilon", "f_name", "value"])?;
    for r in rows {
        w.write_record([
            r.epsilon.to_string(),
            r.function.clone(),
            r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "\
[objective]
spec = quadratic:d=1
[graph]
n_agents = 3
spec = static:complete
[schedule]
c_gamma = 0
[noise]
spec = gaussian:sigma=0.1
[run]
steps = 400
stride = 20
dense_window = 5
initial = 1
n_runs = 3
[metrics]
checkpoints = 200, 400
functions = one; bump
";

    #[test]
    fn validation_table_marks_failures() {
        let cfg = ExperimentConfig::parse(SMALL).unwrap();
        let rep = validate_experiment(&cfg);
        assert_eq!(rep.exit_code(), EXIT_OK, "{}", rep.to_table());
        let mut bad = cfg.clone();
        bad.run.schedule.tau_beta = 0.6;
        let rep = validate_experiment(&bad);
        assert_eq!(rep.exit_code(), EXIT_VALIDATION);
        let row = rep
            .rows
            .iter()
            .find(|r| r.check == "schedule-exponents")
            .unwrap();
        assert_eq!(row.status, CheckStatus::Fail);
        assert!(rep
            .to_table()
            .lines()
            .any(|l| l.starts_with("schedule-exponents") && l.contains("FAIL")));
    }

    #[test]
    fn sweep_axis_parsing() {
        let a = SweepAxis::parse("schedule.c_gamma=0, 1,2").unwrap();
        assert_eq!(a.values, vec!["0", "1", "2"]);
        assert!(SweepAxis::parse("c_gamma=1").is_err());
        assert!(SweepAxis::parse("schedule.c_gamma=").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_VALIDATION);
        assert_eq!(exit_code(&Error::Io("x".into())), EXIT_IO);
        assert_eq!(exit_code(&Error::InvalidState("x".into())), EXIT_INTERNAL);
    }

    #[test]
    fn gibbs_table_has_limit_rows() {
        let req = GibbsRequest {
            objective: "quadratic:d=1".into(),
            epsilons: vec![0.5, 0.1],
            functions: vec!["one".into(), "bump".into()],
            bounds: None,
            n_points: None,
        };
        let rows = gibbs_table(&req).unwrap();
        assert_eq!(rows.len(), 6);
        assert!((rows[0].value - 1.0).abs() < 1e-12);
        let limit_bump = rows
            .iter()
            .find(|r| r.epsilon == 0.0 && r.function == "bump")
            .unwrap();
        assert_eq!(limit_bump.value, 1.0);
        // E[exp(-x^2)] under N(0, eps^2/4) is 1/sqrt(1 + eps^2/2)
        let b = rows
            .iter()
            .find(|r| r.epsilon == 0.1 && r.function == "bump")
            .unwrap();
        assert!((b.value - 1.0 / (1.0f64 + 0.005).sqrt()).abs() < 1e-8);
    }
}
