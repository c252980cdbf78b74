//! Step-by-step execution of the distributed annealed recursion
//!
//! ```text
//! x_{t+1} = x_t - beta_t (L_t kron I_d) x_t - alpha_t (grad Ubar(x_t) + zeta_t) + gamma_t w_t
//! ```
//!
//! and of the centralized baseline
//!
//! ```text
//! z_{t+1} = z_t - a_t (grad U(z_t) + xi_t) + b_t w_t
//! ```
//!
//! with deterministic, seeded noise streams. The step that produces state
//! `t + 1` evaluates all weights at step count `t + 1`. Within a step the
//! draws happen in a fixed order: the graph (topology stream, drawn by the
//! caller), then the gradient noise, then the annealing noise.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::{metric_row, MetricRow};
use crate::objectives::{parse_objective, split_linear, LocalObjectiveFamily, Objective};
use crate::schedules::{centralized_a_b, CentralizedSchedule, ScheduleSet};
use crate::spec::SpecString;
use crate::topology::{GraphModel, LaplacianSample};

/// The splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamTag {
    Topology = 1,
    GradientNoise = 2,
    Annealing = 3,
}

/// Seeds for one run: `seed(tag) = mix64(master ^ (run_index * golden) ^ tag)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngPlan {
    pub master_seed: u64,
    pub run_index: u64,
}

impl RngPlan {
    pub fn new(master_seed: u64, run_index: u64) -> Self {
        RngPlan {
            master_seed,
            run_index,
        }
    }

    pub fn stream_seed(&self, tag: StreamTag) -> u64 {
        mix64(self.master_seed ^ self.run_index.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ tag as u64)
    }

    pub fn streams(&self) -> RunStreams {
        RunStreams {
            topology: ChaCha8Rng::seed_from_u64(self.stream_seed(StreamTag::Topology)),
            gradient: ChaCha8Rng::seed_from_u64(self.stream_seed(StreamTag::GradientNoise)),
            annealing: ChaCha8Rng::seed_from_u64(self.stream_seed(StreamTag::Annealing)),
        }
    }
}

/// The three independent random streams owned by a run.
#[derive(Debug, Clone)]
pub struct RunStreams {
    pub topology: ChaCha8Rng,
    pub gradient: ChaCha8Rng,
    pub annealing: ChaCha8Rng,
}

/// Gradient noise `zeta_n(t)`: zero mean, bounded second moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    Gaussian {
        sigma: f64,
    },
    /// Each coordinate is, with probability `p`, uniform on `[-scale, scale]`,
    /// and 0 otherwise.
    BoundedMixture {
        p: f64,
        scale: f64,
    },
}

impl NoiseModel {
    /// Parses `none`, `gaussian:sigma=1` or `bounded_mixture:p=0.3,scale=2`.
    pub fn parse(descriptor: &str) -> Result<Self> {
        let spec = SpecString::parse(descriptor)?;
        let model = match spec.name.as_str() {
            "none" => {
                spec.expect_keys(&[])?;
                NoiseModel::None
            }
            "gaussian" => {
                spec.expect_keys(&["sigma"])?;
                NoiseModel::Gaussian {
                    sigma: spec.f64_or("sigma", 1.0)?,
                }
            }
            "bounded_mixture" => {
                spec.expect_keys(&["p", "scale"])?;
                NoiseModel::BoundedMixture {
                    p: spec.f64_or("p", 0.5)?,
                    scale: spec.f64_or("scale", 1.0)?,
                }
            }
            other => {
                return Err(Error::Spec(format!(
                    "unknown noise model {other:?} (none, gaussian, bounded_mixture)"
                )))
            }
        };
        model.validate().map_err(|e| Error::Spec(e.to_string()))?;
        Ok(model)
    }

    pub fn descriptor(&self) -> String {
        match self {
            NoiseModel::None => "none".into(),
            NoiseModel::Gaussian { sigma } => format!("gaussian:sigma={sigma}"),
            NoiseModel::BoundedMixture { p, scale } => {
                format!("bounded_mixture:p={p},scale={scale}")
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::None => Ok(()),
            NoiseModel::Gaussian { sigma } if sigma >= 0.0 && sigma.is_finite() => Ok(()),
            NoiseModel::BoundedMixture { p, scale }
                if (0.0..=1.0).contains(&p) && scale >= 0.0 && scale.is_finite() =>
            {
                Ok(())
            }
            _ => Err(Error::InvalidParameter(format!(
                "invalid noise model {self:?}"
            ))),
        }
    }

    /// `E[zeta_k^2]` for a single coordinate.
    pub fn coordinate_second_moment(&self) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Gaussian { sigma } => sigma * sigma,
            NoiseModel::BoundedMixture { p, scale } => p * scale * scale / 3.0,
        }
    }

    /// Declared bound `C1` on `E[|zeta_t|^2]` for a stacked vector of length `len`.
    pub fn second_moment_bound(&self, len: usize) -> f64 {
        self.coordinate_second_moment() * len as f64
    }

    /// Fills `out` with fresh draws. `None` consumes no randomness.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match *self {
            NoiseModel::None => out.fill(0.0),
            NoiseModel::Gaussian { sigma } => {
                for v in out.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = sigma * z;
                }
            }
            NoiseModel::BoundedMixture { p, scale } => {
                for v in out.iter_mut() {
                    let on = rng.random::<f64>() < p;
                    let u = rng.random::<f64>();
                    *v = if on { scale * (2.0 * u - 1.0) } else { 0.0 };
                }
            }
        }
    }
}

/// Fills `out` with independent standard normal draws.
pub fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Stacked network state `x_t = Vec(x_n(t))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub t: u64,
    pub n_agents: usize,
    pub dim: usize,
    pub x: Vec<f64>,
}

impl NetworkState {
    pub fn new(n_agents: usize, dim: usize, x: Vec<f64>) -> Result<Self> {
        if n_agents == 0 || dim == 0 || x.len() != n_agents * dim {
            return Err(Error::InvalidState(format!(
                "state length {} does not match n_agents * dim = {n_agents} * {dim}",
                x.len()
            )));
        }
        Ok(NetworkState {
            t: 0,
            n_agents,
            dim,
            x,
        })
    }

    /// All agents at the same point.
    pub fn consensus(n_agents: usize, point: &[f64]) -> Result<Self> {
        let x = point
            .iter()
            .copied()
            .cycle()
            .take(n_agents * point.len())
            .collect();
        Self::new(n_agents, point.len(), x)
    }

    pub fn agent(&self, n: usize) -> &[f64] {
        &self.x[n * self.dim..(n + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.is_finite())
    }
}

/// Weights and noise draws used by one distributed step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDraws {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub zeta: Vec<f64>,
    pub w: Vec<f64>,
}

/// Reusable buffers for in-place stepping.
#[derive(Debug, Clone, Default)]
pub struct StepScratch {
    lx: Vec<f64>,
    grad: Vec<f64>,
    zeta: Vec<f64>,
    w: Vec<f64>,
}

impl StepScratch {
    fn resize(&mut self, len: usize) {
        self.lx.resize(len, 0.0);
        self.grad.resize(len, 0.0);
        self.zeta.resize(len, 0.0);
        self.w.resize(len, 0.0);
    }
}

fn check_step_dims(
    state: &NetworkState,
    family: &LocalObjectiveFamily,
    lap: &LaplacianSample,
) -> Result<()> {
    if state.x.len() != state.n_agents * state.dim {
        return Err(Error::InvalidState(
            "state length does not match n_agents * dim".into(),
        ));
    }
    if family.n_agents() != state.n_agents || family.dim() != state.dim {
        return Err(Error::InvalidState(format!(
            "state has {} agents of dim {}, objectives have {} agents of dim {}",
            state.n_agents,
            state.dim,
            family.n_agents(),
            family.dim()
        )));
    }
    if lap.n() != state.n_agents {
        return Err(Error::InvalidState(format!(
            "laplacian has {} nodes but state has {} agents",
            lap.n(),
            state.n_agents
        )));
    }
    Ok(())
}

/// Advances `state` by one distributed step in place.
pub fn advance_distributed(
    state: &mut NetworkState,
    family: &LocalObjectiveFamily,
    lap: &LaplacianSample,
    schedule: &ScheduleSet,
    noise: &NoiseModel,
    streams: &mut RunStreams,
    scratch: &mut StepScratch,
) -> Result<()> {
    check_step_dims(state, family, lap)?;
    if !state.is_finite() {
        return Err(Error::Diverged { iteration: state.t });
    }
    let (n, d) = (state.n_agents, state.dim);
    let len = n * d;
    scratch.resize(len);
    let k = state.t + 1;
    let alpha = schedule.alpha(k);
    let beta = schedule.beta(k);
    let gamma = schedule.gamma(k);

    lap.apply_kron(&state.x, d, &mut scratch.lx);
    for a in 0..n {
        family.local_grad_into(
            a,
            &state.x[a * d..(a + 1) * d],
            &mut scratch.grad[a * d..(a + 1) * d],
        );
    }
    noise.fill(&mut streams.gradient, &mut scratch.zeta);
    if gamma != 0.0 {
        fill_standard_normal(&mut streams.annealing, &mut scratch.w);
    } else {
        scratch.w.fill(0.0);
    }
    for i in 0..len {
        let mut v = state.x[i] - beta * scratch.lx[i];
        v -= alpha * (scratch.grad[i] + scratch.zeta[i]);
        if gamma != 0.0 {
            v += gamma * scratch.w[i];
        }
        state.x[i] = v;
    }
    state.t = k;
    if !state.is_finite() {
        return Err(Error::Diverged { iteration: k });
    }
    Ok(())
}

/// One distributed step; returns the next state.
pub fn step_distributed(
    state: &NetworkState,
    family: &LocalObjectiveFamily,
    lap: &LaplacianSample,
    schedule: &ScheduleSet,
    noise: &NoiseModel,
    streams: &mut RunStreams,
) -> Result<NetworkState> {
    step_distributed_traced(state, family, lap, schedule, noise, streams).map(|(s, _)| s)
}

/// One distributed step, also returning the weights and noise draws used.
pub fn step_distributed_traced(
    state: &NetworkState,
    family: &LocalObjectiveFamily,
    lap: &LaplacianSample,
    schedule: &ScheduleSet,
    noise: &NoiseModel,
    streams: &mut RunStreams,
) -> Result<(NetworkState, StepDraws)> {
    let mut next = state.clone();
    let mut scratch = StepScratch::default();
    advance_distributed(
        &mut next,
        family,
        lap,
        schedule,
        noise,
        streams,
        &mut scratch,
    )?;
    let draws = StepDraws {
        alpha: schedule.alpha(next.t),
        beta: schedule.beta(next.t),
        gamma: schedule.gamma(next.t),
        zeta: scratch.zeta,
        w: scratch.w,
    };
    Ok((next, draws))
}

/// One step of the centralized annealed recursion from state index `t`.
/// Uses the gradient-noise stream for `xi_t` and then the annealing stream
/// for `w_t`, mirroring the distributed step.
pub fn step_centralized(
    z: &[f64],
    t: u64,
    obj: &Objective,
    cs: &CentralizedSchedule,
    noise: &NoiseModel,
    streams: &mut RunStreams,
) -> Result<Vec<f64>> {
    let d = obj.dim();
    if z.len() != d {
        return Err(Error::InvalidState(format!(
            "z has length {} but dim = {d}",
            z.len()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged { iteration: t });
    }
    let (a, b) = centralized_a_b(cs, t + 1);
    let grad = obj.grad(z);
    let mut xi = vec![0.0; d];
    noise.fill(&mut streams.gradient, &mut xi);
    let mut w = vec![0.0; d];
    if b != 0.0 {
        fill_standard_normal(&mut streams.annealing, &mut w);
    }
    let next: Vec<f64> = (0..d)
        .map(|i| {
            // same operation order as the distributed step with a zero consensus term
            let mut v = z[i] - 0.0;
            v -= a * (grad[i] + xi[i]);
            if b != 0.0 {
                v += b * w[i];
            }
            v
        })
        .collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged { iteration: t + 1 });
    }
    Ok(next)
}

/// Deterministic initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    /// All agents start at the same point.
    Common(Vec<f64>),
    /// One point per agent.
    PerAgent(Vec<Vec<f64>>),
}

impl InitialCondition {
    pub fn build(&self, n_agents: usize, dim: usize) -> Result<NetworkState> {
        match self {
            InitialCondition::Common(p) => {
                if p.len() != dim {
                    return Err(Error::InvalidDimension(format!(
                        "initial point has length {} but objective dim = {dim}",
                        p.len()
                    )));
                }
                NetworkState::consensus(n_agents, p)
            }
            InitialCondition::PerAgent(pts) => {
                if pts.len() != n_agents || pts.iter().any(|p| p.len() != dim) {
                    return Err(Error::InvalidDimension(format!(
                        "per-agent initial condition needs {n_agents} points of length {dim}"
                    )));
                }
                NetworkState::new(n_agents, dim, pts.concat())
            }
        }
    }
}

/// Everything needed to reproduce a single run (given a run index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Objective registry descriptor, e.g. `cosine_well:a=1,b=1,d=1`.
    pub objective: String,
    pub n_agents: usize,
    pub split_spread: f64,
    pub split_seed: u64,
    /// Graph model descriptor, e.g. `erdos_renyi:p=0.5`.
    pub graph: String,
    pub schedule: ScheduleSet,
    pub noise: NoiseModel,
    /// Number of steps `T`.
    pub steps: u64,
    /// Metric sampling stride.
    pub stride: u64,
    /// Every step `t <= dense_window` is sampled as well.
    pub dense_window: u64,
    pub initial: InitialCondition,
    /// Exponent of the scaled consensus error.
    pub tau: f64,
    pub master_seed: u64,
    /// Times at which the full stacked state is stored.
    pub snapshots: Vec<u64>,
    /// Store the full state at every sampled row.
    pub record_states: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            objective: "cosine_well:a=1,b=1,d=1".into(),
            n_agents: 10,
            split_spread: 0.5,
            split_seed: 0,
            graph: "erdos_renyi:p=0.5".into(),
            schedule: ScheduleSet::default(),
            noise: NoiseModel::Gaussian { sigma: 1.0 },
            steps: 10_000,
            stride: 100,
            dense_window: 100,
            initial: InitialCondition::Common(vec![0.0]),
            tau: 0.15,
            master_seed: 0,
            snapshots: Vec::new(),
            record_states: false,
        }
    }
}

impl RunConfig {
    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Parses and cross-checks every component.
    pub fn prepare(&self) -> Result<PreparedRun> {
        let objective = parse_objective(&self.objective).map_err(config_err)?;
        if self.n_agents == 0 {
            return Err(Error::Config("n_agents must be >= 1".into()));
        }
        let family = split_linear(objective, self.n_agents, self.split_spread, self.split_seed)
            .map_err(config_err)?;
        let graph = GraphModel::parse(&self.graph, self.n_agents).map_err(config_err)?;
        self.schedule.ensure_valid().map_err(config_err)?;
        self.noise.validate().map_err(config_err)?;
        if self.stride == 0 {
            return Err(Error::Config("stride must be >= 1".into()));
        }
        if !self.tau.is_finite() {
            return Err(Error::Config("tau must be finite".into()));
        }
        let initial = self
            .initial
            .build(self.n_agents, family.dim())
            .map_err(config_err)?;
        Ok(PreparedRun {
            config: self.clone(),
            hash: self.hash(),
            family,
            graph,
            initial,
        })
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) | Error::ConfigLine { .. } => e,
        other => Error::Config(other.to_string()),
    }
}

/// A validated configuration with its parsed components.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub config: RunConfig,
    pub hash: String,
    pub family: LocalObjectiveFamily,
    pub graph: GraphModel,
    pub initial: NetworkState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: u64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub master_seed: u64,
    pub run_index: u64,
    /// Seeds of the topology, gradient-noise and annealing streams.
    pub stream_seeds: [u64; 3],
    pub n_agents: usize,
    pub dim: usize,
    pub steps: u64,
    pub rows: Vec<MetricRow>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: NetworkState,
    /// First iteration with a non-finite state, if the run diverged.
    pub diverged_at: Option<u64>,
    pub wall_time_secs: f64,
}

impl RunRecord {
    pub fn snapshot_at(&self, t: u64) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| s.t == t)
    }

    /// The record with its wall time zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> RunRecord {
        RunRecord {
            wall_time_secs: 0.0,
            ..self.clone()
        }
    }
}

/// Runs one configuration with run index 0.
pub fn run(config: &RunConfig) -> Result<RunRecord> {
    Ok(run_prepared(&config.prepare()?, 0))
}

/// Runs a prepared configuration. Divergence ends the run and is recorded.
pub fn run_prepared(prep: &PreparedRun, run_index: u64) -> RunRecord {
    let started = Instant::now();
    let cfg = &prep.config;
    let plan = RngPlan::new(cfg.master_seed, run_index);
    let mut streams = plan.streams();
    let mut state = prep.initial.clone();
    let (n, d) = (state.n_agents, state.dim);
    let objective = prep.family.base();
    let mut scratch = StepScratch::default();
    let mut rows = Vec::new();
    let mut snapshots = Vec::new();
    let mut diverged_at = None;

    let sampled = |t: u64| t == 0 || t <= cfg.dense_window || t.is_multiple_of(cfg.stride) || t == cfg.steps;
    let observe = |state: &NetworkState, rows: &mut Vec<MetricRow>, snaps: &mut Vec<Snapshot>| {
        let t = state.t;
        let is_snap = cfg.snapshots.contains(&t);
        if sampled(t) || is_snap {
            rows.push(
                metric_row(t, &state.x, n, d, objective, cfg.tau).expect("dimensions checked"),
            );
        }
        if is_snap || (cfg.record_states && sampled(t)) {
            snaps.push(Snapshot {
                t,
                x: state.x.clone(),
            });
        }
    };

    observe(&state, &mut rows, &mut snapshots);
    for _ in 0..cfg.steps {
        let lap = prep.graph.sample(&mut streams.topology);
        match advance_distributed(
            &mut state,
            &prep.family,
            &lap,
            &cfg.schedule,
            &cfg.noise,
            &mut streams,
            &mut scratch,
        ) {
            Ok(()) => observe(&state, &mut rows, &mut snapshots),
            Err(Error::Diverged { iteration }) => {
                diverged_at = Some(iteration);
                break;
            }
            Err(e) => unreachable!("dimensions were validated: {e}"),
        }
    }

    RunRecord {
        config_hash: prep.hash.clone(),
        master_seed: cfg.master_seed,
        run_index,
        stream_seeds: [
            plan.stream_seed(StreamTag::Topology),
            plan.stream_seed(StreamTag::GradientNoise),
            plan.stream_seed(StreamTag::Annealing),
        ],
        n_agents: n,
        dim: d,
        steps: cfg.steps,
        rows,
        snapshots,
        final_state: state,
        diverged_at,
        wall_time_secs: started.elapsed().as_secs_f64(),
    }
}

/// Runs `n_runs` independent replicas; run `r` uses `RngPlan(master_seed, r)`.
/// Results are in run order and independent of `parallelism`.
pub fn run_batch(config: &RunConfig, n_runs: usize, parallelism: usize) -> Result<Vec<RunRecord>> {
    if n_runs == 0 {
        return Err(Error::InvalidArgument("n_runs must be >= 1".into()));
    }
    let prep = config.prepare()?;
    run_batch_prepared(&prep, n_runs, parallelism)
}

pub fn run_batch_prepared(
    prep: &PreparedRun,
    n_runs: usize,
    parallelism: usize,
) -> Result<Vec<RunRecord>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        (0..n_runs as u64)
            .into_par_iter()
            .map(|r| run_prepared(prep, r))
            .collect()
    }))
}
