use annealnet::engine::{run, run_batch, InitialCondition, NoiseModel, RunConfig};
use annealnet::metrics::consensus_error;
use annealnet::schedules::ScheduleSet;
use annealnet::Error;

fn small() -> RunConfig {
    RunConfig {
        steps: 2_000,
        stride: 50,
        dense_window: 10,
        initial: InitialCondition::Common(vec![1.5]),
        snapshots: vec![1_000],
        master_seed: 99,
        ..RunConfig::default()
    }
}

#[test]
fn parallelism_does_not_change_records() {
    let cfg = small();
    let a = run_batch(&cfg, 12, 1).unwrap();
    let b = run_batch(&cfg, 12, 8).unwrap();
    let strip = |v: &[annealnet::engine::RunRecord]| {
        v.iter().map(|r| r.without_timing()).collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(a[0].without_timing(), run(&cfg).unwrap().without_timing());
    assert_ne!(a[0].final_state, a[1].final_state);
}

#[test]
fn deterministic_gradient_descent_reaches_minimum() {
    let cfg = RunConfig {
        objective: "quadratic:d=2".into(),
        n_agents: 5,
        split_spread: 0.0,
        graph: "static:complete".into(),
        schedule: ScheduleSet::new(1.0, 0.1, 0.3, 0.0, 16, None).unwrap(),
        noise: NoiseModel::None,
        steps: 100_000,
        stride: 1_000,
        dense_window: 2_000,
        initial: InitialCondition::PerAgent(vec![
            vec![3.0, -1.0],
            vec![0.5, 2.0],
            vec![-4.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, -2.5],
        ]),
        ..RunConfig::default()
    };
    let rec = run(&cfg).unwrap();
    let x = &rec.final_state.x;
    let max_norm = x.chunks(2).map(|p| p[0].hypot(p[1])).fold(0.0, f64::max);
    assert!(max_norm < 1e-3, "{max_norm}");
    // Deterministic contraction: consensus error is non-increasing until it
    // reaches the rounding floor.
    let errs: Vec<f64> = rec
        .rows
        .iter()
        .filter(|r| r.t >= 20 && r.consensus_error > 1e-15)
        .map(|r| r.consensus_error)
        .collect();
    assert!(errs.len() > 10);
    assert!(errs.windows(2).all(|w| w[1] <= w[0]));
    let c = consensus_error(x, 5, 2).unwrap();
    assert!(c.max_deviation < 1e-6);
}

#[test]
fn divergence_is_recorded_not_fatal() {
    let cfg = RunConfig {
        graph: "static:complete".into(),
        schedule: ScheduleSet::new(1.0, 50.0, 0.3, 1.0, 16, None).unwrap(),
        initial: InitialCondition::PerAgent((0..10).map(|i| vec![i as f64]).collect()),
        steps: 5_000,
        ..RunConfig::default()
    };
    let recs = run_batch(&cfg, 2, 2).unwrap();
    for r in &recs {
        let t = r.diverged_at.expect("large beta must blow up");
        assert!(t > 0 && t < 5_000);
        assert!(r.rows.iter().all(|row| row.t < t));
    }
}

#[test]
fn invalid_configs_are_rejected_before_running() {
    let mut cfg = small();
    cfg.schedule.tau_beta = 0.5;
    assert!(matches!(run(&cfg), Err(Error::Config(_))));
    let mut cfg = small();
    cfg.initial = InitialCondition::Common(vec![0.0, 0.0]);
    assert!(matches!(run(&cfg), Err(Error::Config(_))));
    assert!(run_batch(&small(), 0, 1).is_err());
}

#[test]
fn config_hash_tracks_content() {
    let a = small();
    let mut b = small();
    assert_eq!(a.hash(), b.hash());
    b.master_seed += 1;
    assert_ne!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
}
