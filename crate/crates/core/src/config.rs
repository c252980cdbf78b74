//! INI experiment files.
//!
//! ```text
//! # comment
//! [objective]
//! spec = cosine_well:a=1,b=1,d=1
//!
//! [run]
//! steps = 100000
//! ```
//!
//! Full-line comments start with `#` or `;`. Keys must sit inside a
//! section, and neither sections nor keys may repeat. Values run to the end
//! of the line and are trimmed. Errors carry the 1-based line number.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::{InitialCondition, NoiseModel, RunConfig};
use crate::error::{Error, Result};
use crate::objectives::parse_objective;
use crate::spec;

#[derive(Debug, Clone, PartialEq)]
pub struct IniEntry {
    pub key: String,
    pub value: String,
    /// 1-based source line; 0 for command-line overrides.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IniSection {
    pub name: String,
    pub line: usize,
    pub entries: Vec<IniEntry>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IniDocument {
    pub sections: Vec<IniSection>,
}

fn valid_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

pub fn parse_ini(text: &str) -> Result<IniDocument> {
    let mut doc = IniDocument::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| Error::ConfigLine { line, message };
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') || s.starts_with(';') {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(format!("unterminated section header {s:?}")))?
                .trim();
            if !valid_ident(name) {
                return Err(err(format!("invalid section name {name:?}")));
            }
            if doc.section(name).is_some() {
                return Err(err(format!("duplicate section [{name}]")));
            }
            doc.sections.push(IniSection {
                name: name.to_string(),
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| err(format!("expected 'key = value', got {s:?}")))?;
        let (k, v) = (k.trim(), v.trim());
        if !valid_ident(k) {
            return Err(err(format!("invalid key {k:?}")));
        }
        let section = doc
            .sections
            .last_mut()
            .ok_or_else(|| err(format!("key {k:?} appears before any section")))?;
        if section.entries.iter().any(|e| e.key == k) {
            return Err(err(format!("duplicate key {k:?} in [{}]", section.name)));
        }
        section.entries.push(IniEntry {
            key: k.to_string(),
            value: v.to_string(),
            line,
        });
    }
    Ok(doc)
}

impl IniDocument {
    pub fn section(&self, name: &str) -> Option<&IniSection> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&IniEntry> {
        self.section(section)?.entries.iter().find(|e| e.key == key)
    }

    /// Sets `section.key`, creating the section if needed.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        if !valid_ident(section) || !valid_ident(key) {
            return Err(Error::Config(format!(
                "invalid override target {section}.{key}"
            )));
        }
        let idx = match self.sections.iter().position(|s| s.name == section) {
            Some(i) => i,
            None => {
                self.sections.push(IniSection {
                    name: section.to_string(),
                    line: 0,
                    entries: Vec::new(),
                });
                self.sections.len() - 1
            }
        };
        let sec = &mut self.sections[idx];
        match sec.entries.iter_mut().find(|e| e.key == key) {
            Some(e) => {
                e.value = value.trim().to_string();
                e.line = 0;
            }
            None => sec.entries.push(IniEntry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line: 0,
            }),
        }
        Ok(())
    }

    /// Applies a `section.key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (target, value) = assignment.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "override must be section.key=value, got {assignment:?}"
            ))
        })?;
        let (section, key) = target.trim().split_once('.').ok_or_else(|| {
            Error::Config(format!(
                "override target must be section.key, got {target:?}"
            ))
        })?;
        self.set(section.trim(), key.trim(), value)
    }

    /// Normalized text: sections and keys in document order.
    pub fn to_canonical_string(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "[{}]", s.name);
            for e in &s.entries {
                let _ = writeln!(out, "{} = {}", e.key, e.value);
            }
        }
        out
    }
}

const SCHEMA: &[(&str, &[&str])] = &[
    (
        "objective",
        &["spec", "admissibility_radius", "admissibility_grid"],
    ),
    ("split", &["spread", "seed"]),
    ("graph", &["n_agents", "spec"]),
    (
        "schedule",
        &[
            "c_alpha",
            "c_beta",
            "tau_beta",
            "c_gamma",
            "t_offset",
            "c0_threshold",
        ],
    ),
    ("noise", &["spec"]),
    (
        "run",
        &[
            "steps",
            "stride",
            "dense_window",
            "initial",
            "initial_agents",
            "tau",
            "n_runs",
            "parallelism",
            "snapshots",
        ],
    ),
    ("seeds", &["master_seed"]),
    (
        "metrics",
        &[
            "success_radius",
            "checkpoints",
            "functions",
            "agent",
            "fit_window",
        ],
    ),
    ("gibbs", &["lo", "hi", "n_points", "epsilons"]),
    ("output", &["dir"]),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSettings {
    pub success_radius: f64,
    /// Times at which weak-convergence estimates are reported.
    pub checkpoints: Vec<u64>,
    /// Test-function descriptors.
    pub functions: Vec<String>,
    /// Agent whose marginal is estimated from snapshots.
    pub agent: Option<usize>,
    /// `[lo, hi]` window for the consensus-decay fit.
    pub fit_window: (u64, u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilitySettings {
    pub box_radius: f64,
    pub grid: usize,
}

/// Box and temperatures used for Gibbs quadrature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsSettings {
    pub lo: f64,
    pub hi: f64,
    pub n_points: Option<usize>,
    pub epsilons: Vec<f64>,
}

/// A fully parsed experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub run: RunConfig,
    pub n_runs: usize,
    /// Worker threads; results do not depend on it, so it is not serialized.
    #[serde(skip_serializing, default = "one")]
    pub parallelism: usize,
    pub metrics: MetricsSettings,
    pub admissibility: AdmissibilitySettings,
    pub gibbs: Option<GibbsSettings>,
    pub output_dir: Option<String>,
}

struct Reader<'a> {
    doc: &'a IniDocument,
}

impl<'a> Reader<'a> {
    fn entry(&self, section: &str, key: &str) -> Option<&'a IniEntry> {
        self.doc.get(section, key)
    }

    fn fail(e: &IniEntry, section: &str, message: String) -> Error {
        let message = format!("{section}.{}: {message}", e.key);
        if e.line == 0 {
            Error::Config(format!("override {message}"))
        } else {
            Error::ConfigLine {
                line: e.line,
                message,
            }
        }
    }

    fn parsed<T>(
        &self,
        section: &str,
        key: &str,
        f: impl Fn(&str) -> Result<T>,
    ) -> Result<Option<T>> {
        match self.entry(section, key) {
            None => Ok(None),
            Some(e) => f(&e.value)
                .map(Some)
                .map_err(|err| Self::fail(e, section, strip(err))),
        }
    }

    fn f64(&self, section: &str, key: &str) -> Result<Option<f64>> {
        self.parsed(section, key, parse_f64)
    }

    fn u64(&self, section: &str, key: &str) -> Result<Option<u64>> {
        self.parsed(section, key, parse_u64)
    }

    fn usize(&self, section: &str, key: &str) -> Result<Option<usize>> {
        self.parsed(section, key, |s| parse_u64(s).map(|v| v as usize))
    }

    fn string(&self, section: &str, key: &str) -> Option<String> {
        self.entry(section, key).map(|e| e.value.clone())
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Spec(m)
        | Error::Config(m)
        | Error::InvalidArgument(m)
        | Error::InvalidParameter(m) => m,
        other => other.to_string(),
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    spec::parse_f64("value", s.trim())
}

fn parse_u64(s: &str) -> Result<u64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    // Allow exact scientific notation such as 1e5.
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 => {
            Ok(v as u64)
        }
        _ => Err(Error::Config(format!(
            "expected a non-negative integer, got {s:?}"
        ))),
    }
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_f64).collect()
}

fn parse_u64_list(s: &str) -> Result<Vec<u64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(parse_u64).collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_ini(&parse_ini(text)?)
    }

    pub fn from_ini(doc: &IniDocument) -> Result<Self> {
        for s in &doc.sections {
            let allowed = SCHEMA
                .iter()
                .find(|(name, _)| *name == s.name)
                .map(|(_, keys)| *keys)
                .ok_or_else(|| line_err(s.line, format!("unknown section [{}]", s.name)))?;
            for e in &s.entries {
                if !allowed.contains(&e.key.as_str()) {
                    return Err(line_err(
                        e.line,
                        format!("unknown key {:?} in [{}]", e.key, s.name),
                    ));
                }
            }
        }
        let r = Reader { doc };
        let mut run = RunConfig::default();
        if let Some(v) = r.string("objective", "spec") {
            run.objective = v;
        }
        run.split_spread = r.f64("split", "spread")?.unwrap_or(0.0);
        run.split_seed = r.u64("split", "seed")?.unwrap_or(0);
        if let Some(v) = r.usize("graph", "n_agents")? {
            run.n_agents = v;
        }
        if let Some(v) = r.string("graph", "spec") {
            run.graph = v;
        }
        let s = &mut run.schedule;
        s.c_alpha = r.f64("schedule", "c_alpha")?.unwrap_or(s.c_alpha);
        s.c_beta = r.f64("schedule", "c_beta")?.unwrap_or(s.c_beta);
        s.tau_beta = r.f64("schedule", "tau_beta")?.unwrap_or(s.tau_beta);
        s.c_gamma = r.f64("schedule", "c_gamma")?.unwrap_or(s.c_gamma);
        s.t_offset = r.u64("schedule", "t_offset")?.unwrap_or(s.t_offset);
        s.c0_threshold = r.f64("schedule", "c0_threshold")?;
        if let Some(n) = r.parsed("noise", "spec", NoiseModel::parse)? {
            run.noise = n;
        }
        run.steps = r.u64("run", "steps")?.unwrap_or(run.steps);
        run.stride = r.u64("run", "stride")?.unwrap_or(run.stride);
        run.dense_window = r.u64("run", "dense_window")?.unwrap_or(run.dense_window);
        run.tau = r
            .f64("run", "tau")?
            .unwrap_or(0.75 * (0.5 - run.schedule.tau_beta));
        run.master_seed = r.u64("seeds", "master_seed")?.unwrap_or(0);
        let common = r.parsed("run", "initial", parse_f64_list)?;
        let per_agent = r.parsed("run", "initial_agents", |s| {
            s.split(';').map(parse_f64_list).collect::<Result<Vec<_>>>()
        })?;
        run.initial = match (common, per_agent) {
            (Some(_), Some(_)) => {
                let e = r.entry("run", "initial_agents").unwrap();
                return Err(Reader::fail(
                    e,
                    "run",
                    "give either initial or initial_agents, not both".into(),
                ));
            }
            (Some(p), None) => InitialCondition::Common(p),
            (None, Some(p)) => InitialCondition::PerAgent(p),
            (None, None) => {
                let dim = match r.entry("objective", "spec") {
                    Some(e) => parse_objective(&e.value)
                        .map_err(|err| Reader::fail(e, "objective", strip(err)))?
                        .dim(),
                    None => parse_objective(&run.objective)?.dim(),
                };
                InitialCondition::Common(vec![0.0; dim])
            }
        };
        let mut snapshots = r
            .parsed("run", "snapshots", parse_u64_list)?
            .unwrap_or_default();
        let n_runs = r.usize("run", "n_runs")?.unwrap_or(1);
        let parallelism = r.usize("run", "parallelism")?.unwrap_or(1);

        let checkpoints = r
            .parsed("metrics", "checkpoints", parse_u64_list)?
            .unwrap_or_else(|| vec![run.steps]);
        let functions = r
            .string("metrics", "functions")
            .map(|v| {
                v.split(';')
                    .map(|f| f.trim().to_string())
                    .filter(|f| !f.is_empty())
                    .collect()
            })
            .unwrap_or_else(|| vec!["one".to_string(), "bump".to_string()]);
        let agent = r.usize("metrics", "agent")?;
        let fit_window = match r.parsed("metrics", "fit_window", parse_u64_list)? {
            Some(v) if v.len() == 2 && v[0] < v[1] => (v[0], v[1]),
            Some(_) => {
                let e = r.entry("metrics", "fit_window").unwrap();
                return Err(Reader::fail(
                    e,
                    "metrics",
                    "expected 'lo, hi' with lo < hi".into(),
                ));
            }
            None => ((run.steps / 100).max(1), run.steps),
        };
        let metrics = MetricsSettings {
            success_radius: r.f64("metrics", "success_radius")?.unwrap_or(0.5),
            checkpoints,
            functions,
            agent,
            fit_window,
        };
        // Checkpoints need a sampled row (and a snapshot for agent marginals).
        snapshots.extend(metrics.checkpoints.iter().copied());
        snapshots.sort_unstable();
        snapshots.dedup();
        run.snapshots = snapshots;

        let admissibility = AdmissibilitySettings {
            box_radius: r.f64("objective", "admissibility_radius")?.unwrap_or(50.0),
            grid: r.usize("objective", "admissibility_grid")?.unwrap_or(41),
        };
        let gibbs = if doc.section("gibbs").is_some() {
            Some(GibbsSettings {
                lo: r.f64("gibbs", "lo")?.unwrap_or(-5.0),
                hi: r.f64("gibbs", "hi")?.unwrap_or(5.0),
                n_points: r.usize("gibbs", "n_points")?,
                epsilons: r
                    .parsed("gibbs", "epsilons", parse_f64_list)?
                    .unwrap_or_else(|| vec![0.4, 0.2, 0.1]),
            })
        } else {
            None
        };
        let cfg = ExperimentConfig {
            run,
            n_runs,
            parallelism,
            metrics,
            admissibility,
            gibbs,
            output_dir: r.string("output", "dir"),
        };
        cfg.check_shape(&r)?;
        Ok(cfg)
    }

    /// Cross-field checks that do not need the objective.
    fn check_shape(&self, r: &Reader) -> Result<()> {
        let located = |section: &str, key: &str, msg: String| match r.entry(section, key) {
            Some(e) => Reader::fail(e, section, msg),
            None => Error::Config(format!("{section}.{key}: {msg}")),
        };
        if self.run.n_agents == 0 {
            return Err(located("graph", "n_agents", "must be >= 1".into()));
        }
        if self.run.stride == 0 {
            return Err(located("run", "stride", "must be >= 1".into()));
        }
        if self.n_runs == 0 {
            return Err(located("run", "n_runs", "must be >= 1".into()));
        }
        if self.parallelism == 0 {
            return Err(located("run", "parallelism", "must be >= 1".into()));
        }
        if let Some(&t) = self.run.snapshots.iter().find(|&&t| t > self.run.steps) {
            return Err(located(
                "metrics",
                "checkpoints",
                format!("time {t} exceeds steps = {}", self.run.steps),
            ));
        }
        if let Some(a) = self.metrics.agent {
            if a >= self.run.n_agents {
                return Err(located(
                    "metrics",
                    "agent",
                    format!("agent {a} out of range for {} agents", self.run.n_agents),
                ));
            }
        }
        if !(self.metrics.success_radius > 0.0) {
            return Err(located(
                "metrics",
                "success_radius",
                "must be positive".into(),
            ));
        }
        if let Some(g) = &self.gibbs {
            if !(g.lo < g.hi) {
                return Err(located("gibbs", "hi", "need lo < hi".into()));
            }
            if g.epsilons.iter().any(|&e| !(e > 0.0)) {
                return Err(located("gibbs", "epsilons", "must be positive".into()));
            }
        }
        Ok(())
    }
}

fn one() -> usize {
    1
}

fn line_err(line: usize, message: String) -> Error {
    if line == 0 {
        Error::Config(message)
    } else {
        Error::ConfigLine { line, message }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# demo
[objective]
spec = quadratic:d=2

[graph]
n_agents = 4
spec = static:ring

[run]
steps = 1e3
initial = 1, 2
; trailing comment
[metrics]
functions = one; bump:c=0,w=1
checkpoints = 500, 1000
";

    #[test]
    fn parses_sample() {
        let cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.run.objective, "quadratic:d=2");
        assert_eq!(cfg.run.n_agents, 4);
        assert_eq!(cfg.run.steps, 1000);
        assert_eq!(cfg.run.initial, InitialCondition::Common(vec![1.0, 2.0]));
        assert_eq!(cfg.metrics.functions, vec!["one", "bump:c=0,w=1"]);
        assert_eq!(cfg.run.snapshots, vec![500, 1000]);
        assert_eq!(cfg.metrics.fit_window, (10, 1000));
        assert!(cfg.gibbs.is_none());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("key = 1\n", 1),
            ("[run]\nsteps = 1\nsteps = 2\n", 3),
            ("[run]\n\n[run]\n", 3),
            ("[run\n", 1),
            ("[run]\njunk\n", 2),
            ("[nope]\n", 1),
            ("[run]\nbogus = 1\n", 2),
            ("[run]\nsteps = -4\n", 2),
            ("[schedule]\nc_alpha = nan\n", 2),
            ("[run]\nsteps = 10\n[metrics]\ncheckpoints = 5, 20\n", 4),
        ];
        for (text, line) in cases {
            match ExperimentConfig::parse(text) {
                Err(Error::ConfigLine { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn overrides_replace_and_create() {
        let mut doc = parse_ini(SAMPLE).unwrap();
        doc.apply_override("run.steps=2000").unwrap();
        doc.apply_override("seeds.master_seed = 9").unwrap();
        let cfg = ExperimentConfig::from_ini(&doc).unwrap();
        assert_eq!(cfg.run.steps, 2000);
        assert_eq!(cfg.run.master_seed, 9);
        assert!(doc.apply_override("steps=3").is_err());
        assert!(doc.apply_override("run.steps").is_err());
        doc.apply_override("run.steps=x").unwrap();
        assert!(matches!(
            ExperimentConfig::from_ini(&doc),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn canonical_text_reparses() {
        let doc = parse_ini(SAMPLE).unwrap();
        let again = parse_ini(&doc.to_canonical_string()).unwrap();
        assert_eq!(
            ExperimentConfig::from_ini(&doc).unwrap(),
            ExperimentConfig::from_ini(&again).unwrap()
        );
    }

    #[test]
    fn per_agent_initial() {
        let text = "[graph]\nn_agents = 2\n[objective]\nspec = quadratic:d=1\n[run]\ninitial_agents = 1; -1\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(
            cfg.run.initial,
            InitialCondition::PerAgent(vec![vec![1.0], vec![-1.0]])
        );
        assert!(ExperimentConfig::parse(&format!("{text}initial = 0\n")).is_err());
    }
}
