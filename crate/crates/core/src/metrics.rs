//! Diagnostics computed from network states and run records.

use serde::{Deserialize, Serialize};

use crate::engine::RunRecord;
use crate::error::{Error, Result};
use crate::gibbs::{Measure, TestFunction};
use crate::objectives::Objective;

/// One sampled row of a run's time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub t: u64,
    /// `max_n |x_n(t) - xbar_t|`.
    pub consensus_error: f64,
    /// `(t + 1)^tau * consensus_error`.
    pub scaled_consensus_error: f64,
    /// Distance from `xbar_t` to the nearest global minimum.
    pub dist_to_minima: f64,
    /// `U(xbar_t)`.
    pub u_of_mean: f64,
    pub x_bar: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusError {
    /// Largest agent distance to the network average.
    pub max_deviation: f64,
    /// `|x - 1 kron xbar|`.
    pub disagreement_norm: f64,
}

fn check_len(x: &[f64], n: usize, d: usize) -> Result<()> {
    if n == 0 || d == 0 || x.len() != n * d {
        return Err(Error::InvalidDimension(format!(
            "stacked vector has length {} but n * d = {n} * {d}",
            x.len()
        )));
    }
    Ok(())
}

/// Coordinate-wise mean over the `n` agent blocks of a stacked vector.
pub fn network_average(x: &[f64], n: usize, d: usize) -> Result<Vec<f64>> {
    check_len(x, n, d)?;
    let mut avg = vec![0.0; d];
    for block in x.chunks_exact(d) {
        for (a, v) in avg.iter_mut().zip(block) {
            *a += v;
        }
    }
    let nf = n as f64;
    for a in &mut avg {
        *a /= nf;
    }
    Ok(avg)
}

pub fn consensus_error(x: &[f64], n: usize, d: usize) -> Result<ConsensusError> {
    let avg = network_average(x, n, d)?;
    Ok(consensus_error_around(x, &avg))
}

fn consensus_error_around(x: &[f64], avg: &[f64]) -> ConsensusError {
    let mut max_sq = 0.0_f64;
    let mut total = 0.0;
    for block in x.chunks_exact(avg.len()) {
        let sq: f64 = block.iter().zip(avg).map(|(a, b)| (a - b) * (a - b)).sum();
        max_sq = max_sq.max(sq);
        total += sq;
    }
    ConsensusError {
        max_deviation: max_sq.sqrt(),
        disagreement_norm: total.sqrt(),
    }
}

/// Builds the metric row for a state.
pub fn metric_row(
    t: u64,
    x: &[f64],
    n: usize,
    d: usize,
    obj: &Objective,
    tau: f64,
) -> Result<MetricRow> {
    let x_bar = network_average(x, n, d)?;
    let ce = consensus_error_around(x, &x_bar);
    Ok(MetricRow {
        t,
        consensus_error: ce.max_deviation,
        scaled_consensus_error: ((t + 1) as f64).powf(tau) * ce.max_deviation,
        dist_to_minima: obj.dist_to_minima(&x_bar),
        u_of_mean: obj.eval(&x_bar),
        x_bar,
    })
}

/// Least-squares slope of `log consensus_error` against `log t` over rows
/// with `t_lo <= t <= t_hi`, `t > 0` and a positive error.
pub fn consensus_decay_fit(rows: &[MetricRow], window: (u64, u64)) -> Result<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.t >= window.0 && r.t <= window.1 && r.t > 0)
        .filter(|r| r.consensus_error > 0.0 && r.consensus_error.is_finite())
        .map(|r| ((r.t as f64).ln(), r.consensus_error.ln()))
        .collect();
    loglog_slope(&pts)
}

pub(crate) fn loglog_slope(pts: &[(f64, f64)]) -> Result<f64> {
    if pts.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "need at least 10 points in the fit window, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData(
            "fit window has a single abscissa".into(),
        ));
    }
    Ok(sxy / sxx)
}

/// The row at `t`, or the final row when `t` is `None`.
pub fn row_at(record: &RunRecord, t: Option<u64>) -> Option<&MetricRow> {
    match t {
        Some(t) => record.rows.iter().find(|r| r.t == t),
        None => record.rows.last(),
    }
}

/// Fraction of runs whose network average lies within `radius` of the
/// global-minima set at `t_final` (the last row when `None`). Diverged
/// runs and runs without a row at `t_final` count as failures.
pub fn success_rate(records: &[RunRecord], radius: f64, t_final: Option<u64>) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidArgument(
            "success_rate needs at least one record".into(),
        ));
    }
    let hits = records
        .iter()
        .filter(|r| r.diverged_at.is_none())
        .filter_map(|r| row_at(r, t_final))
        .filter(|row| row.dist_to_minima <= radius)
        .count();
    Ok(hits as f64 / records.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakConvergenceRow {
    pub function: String,
    pub t: u64,
    /// Monte-Carlo estimate of `E[f(xbar_t)]`.
    pub estimate: f64,
    pub stderr: f64,
    /// `pi(f)` under the limit measure.
    pub target: f64,
    /// `|estimate - target|`.
    pub gap: f64,
    /// Estimate of `E[f(x_n(t))]` for the configured agent, from snapshots.
    pub agent_estimate: Option<f64>,
    pub agent_stderr: Option<f64>,
    pub samples: usize,
}

/// Mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Monte-Carlo estimates of `E[f(xbar_t)]` (and optionally `E[f(x_n(t))]`)
/// at each checkpoint, compared with `pi(f)`. Diverged runs are excluded.
pub fn weak_convergence_stat(
    records: &[RunRecord],
    suite: &[TestFunction],
    checkpoints: &[u64],
    target: &dyn Measure,
    agent: Option<usize>,
) -> Result<Vec<WeakConvergenceRow>> {
    let mut out = Vec::with_capacity(suite.len() * checkpoints.len());
    for f in suite {
        let pi_f = target.integrate(&|x| f.eval(x));
        for &t in checkpoints {
            let vals: Vec<f64> = records
                .iter()
                .filter(|r| r.diverged_at.is_none())
                .filter_map(|r| row_at(r, Some(t)))
                .map(|row| f.eval(&row.x_bar))
                .collect();
            if vals.is_empty() {
                return Err(Error::InsufficientData(format!(
                    "no records contain checkpoint t = {t}"
                )));
            }
            let (estimate, stderr) = mean_stderr(&vals);
            let (agent_estimate, agent_stderr) = match agent {
                Some(n) => {
                    let avals: Vec<f64> = records
                        .iter()
                        .filter(|r| r.diverged_at.is_none())
                        .filter_map(|r| r.snapshot_at(t).map(|s| (s, r.dim)))
                        .filter(|(s, d)| (n + 1) * d <= s.x.len())
                        .map(|(s, d)| f.eval(&s.x[n * d..(n + 1) * d]))
                        .collect();
                    if avals.is_empty() {
                        (None, None)
                    } else {
                        let (m, s) = mean_stderr(&avals);
                        (Some(m), Some(s))
                    }
                }
                None => (None, None),
            };
            out.push(WeakConvergenceRow {
                function: f.name().to_string(),
                t,
                estimate,
                stderr,
                target: pi_f,
                gap: (estimate - pi_f).abs(),
                agent_estimate,
                agent_stderr,
                samples: vals.len(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::make_quadratic;
    use proptest::prelude::*;

    #[test]
    fn averages() {
        assert_eq!(
            network_average(&[1.0, 2.0, 1.0, 2.0, 1.0, 2.0], 3, 2).unwrap(),
            vec![1.0, 2.0]
        );
        assert_eq!(network_average(&[0.0, 2.0], 2, 1).unwrap(), vec![1.0]);
        assert_eq!(
            network_average(&[1.0, 0.0, 0.0, 1.0], 2, 2).unwrap(),
            vec![0.5, 0.5]
        );
        assert!(network_average(&[1.0, 2.0, 3.0], 2, 1).is_err());
    }

    #[test]
    fn consensus_errors() {
        let c = consensus_error(&[3.0, -1.0, 3.0, -1.0], 2, 2).unwrap();
        assert_eq!(c.max_deviation, 0.0);
        let c = consensus_error(&[0.0, 2.0], 2, 1).unwrap();
        assert_eq!(c.max_deviation, 1.0);
        assert!((c.disagreement_norm - 2f64.sqrt()).abs() < 1e-15);
    }

    fn rows_from(f: impl Fn(f64) -> f64, ts: impl Iterator<Item = u64>) -> Vec<MetricRow> {
        ts.map(|t| MetricRow {
            t,
            consensus_error: f(t as f64),
            scaled_consensus_error: 0.0,
            dist_to_minima: 0.0,
            u_of_mean: 0.0,
            x_bar: vec![0.0],
        })
        .collect()
    }

    #[test]
    fn decay_fit_synthetic() {
        let rows = rows_from(|t| t.powf(-0.2), (1..200).map(|i| i * 50));
        assert!((consensus_decay_fit(&rows, (1, 10_000)).unwrap() + 0.2).abs() < 1e-6);
        let flat = rows_from(|_| 3.0, 1..100);
        assert!(consensus_decay_fit(&flat, (1, 100)).unwrap().abs() < 1e-12);
        assert!(matches!(
            consensus_decay_fit(&flat, (1, 5)),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn row_metrics() {
        let q = make_quadratic(1).unwrap();
        let r = metric_row(3, &[0.0, 2.0], 2, 1, &q, 0.5).unwrap();
        assert_eq!(r.x_bar, vec![1.0]);
        assert_eq!(r.consensus_error, 1.0);
        assert_eq!(r.scaled_consensus_error, 2.0);
        assert_eq!(r.u_of_mean, 1.0);
        assert_eq!(r.dist_to_minima, 1.0);
    }

    proptest! {
        #[test]
        fn consensus_error_is_translation_invariant(
            x in prop::collection::vec(-10.0f64..10.0, 12),
            c in prop::collection::vec(-10.0f64..10.0, 3),
        ) {
            let shifted: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + c[i % 3]).collect();
            let a = consensus_error(&x, 4, 3).unwrap();
            let b = consensus_error(&shifted, 4, 3).unwrap();
            prop_assert!((a.max_deviation - b.max_deviation).abs() < 1e-9);
        }

        #[test]
        fn norm_equivalence(x in prop::collection::vec(-10.0f64..10.0, 10)) {
            let c = consensus_error(&x, 5, 2).unwrap();
            prop_assert!(c.max_deviation <= c.disagreement_norm + 1e-12);
            prop_assert!(c.disagreement_norm <= 5f64.sqrt() * c.max_deviation + 1e-12);
        }

        #[test]
        fn average_is_linear(
            x in prop::collection::vec(-10.0f64..10.0, 8),
            y in prop::collection::vec(-10.0f64..10.0, 8),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let z: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
            let lhs = network_average(&z, 4, 2).unwrap();
            let ax = network_average(&x, 4, 2).unwrap();
            let ay = network_average(&y, 4, 2).unwrap();
            for k in 0..2 {
                prop_assert!((lhs[k] - (a * ax[k] + b * ay[k])).abs() < 1e-10);
            }
        }
    }
}
