//! Decaying weight sequences for the distributed recursion and the
//! centralized annealing baseline.
//!
//! Every formula is evaluated at the effective time `t' = t + t_offset`.
//! The default offset of 16 puts `t'` above `e^e`, so `log log t' > 1` from
//! the first step on.
//! Natural logarithms throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_T_OFFSET: u64 = 16;

/// Smallest integer effective time with `log log t' > 0`, i.e. `t' > e`.
const MIN_ANNEALING_TIME: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSet {
    pub c_alpha: f64,
    pub c_beta: f64,
    pub tau_beta: f64,
    pub c_gamma: f64,
    pub t_offset: u64,
    /// Optional stand-in for the critical annealing ratio; advisory only.
    pub c0_threshold: Option<f64>,
}

impl Default for ScheduleSet {
    fn default() -> Self {
        ScheduleSet {
            c_alpha: 1.0,
            c_beta: 1.0,
            tau_beta: 0.3,
            c_gamma: 1.0,
            t_offset: DEFAULT_T_OFFSET,
            c0_threshold: None,
        }
    }
}

impl ScheduleSet {
    /// Checked constructor; fails on any hard violation reported by
    /// [`ScheduleSet::validate`].
    pub fn new(
        c_alpha: f64,
        c_beta: f64,
        tau_beta: f64,
        c_gamma: f64,
        t_offset: u64,
        c0_threshold: Option<f64>,
    ) -> Result<Self> {
        let s = ScheduleSet {
            c_alpha,
            c_beta,
            tau_beta,
            c_gamma,
            t_offset,
            c0_threshold,
        };
        s.ensure_valid()?;
        Ok(s)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        match report.errors.first() {
            Some(e) => Err(Error::InvalidSchedule(e.clone())),
            None => Ok(()),
        }
    }

    pub fn effective_time(&self, t: u64) -> f64 {
        (t + self.t_offset) as f64
    }

    /// `c_alpha / t'`.
    pub fn alpha(&self, t: u64) -> f64 {
        self.c_alpha / self.effective_time(t)
    }

    /// `c_beta / t'^tau_beta`.
    pub fn beta(&self, t: u64) -> f64 {
        self.c_beta / self.effective_time(t).powf(self.tau_beta)
    }

    /// `c_gamma / (sqrt(t') sqrt(log log t'))`, computed as
    /// `sqrt(c_gamma^2 / (t' log log t'))` so that it coincides bitwise with
    /// the centralized `b_t` when `B = c_gamma^2`.
    pub fn gamma(&self, t: u64) -> f64 {
        annealing_weight(self.c_gamma * self.c_gamma, self.effective_time(t))
    }

    pub fn validate(&self) -> ScheduleReport {
        let mut errors = Vec::new();
        let mut warnings = Vec::new();
        if !(self.c_alpha > 0.0 && self.c_alpha.is_finite()) {
            errors.push(format!("c_alpha must be positive, got {}", self.c_alpha));
        }
        if !(self.c_beta > 0.0 && self.c_beta.is_finite()) {
            errors.push(format!("c_beta must be positive, got {}", self.c_beta));
        }
        if !(self.c_gamma >= 0.0 && self.c_gamma.is_finite()) {
            errors.push(format!(
                "c_gamma must be non-negative, got {}",
                self.c_gamma
            ));
        }
        if !(self.tau_beta > 0.0 && self.tau_beta < 0.5) {
            errors.push(format!(
                "tau_beta must lie strictly inside (0, 1/2), got {}",
                self.tau_beta
            ));
        }
        if self.c_gamma > 0.0 && self.t_offset + 1 < MIN_ANNEALING_TIME {
            errors.push(format!(
                "t_offset = {} leaves log log t' undefined at t = 1; need t_offset >= {}",
                self.t_offset,
                MIN_ANNEALING_TIME - 1
            ));
        }
        if self.c_gamma == 0.0 {
            warnings.push("c_gamma = 0: annealing disabled (control arm)".to_string());
        }
        let ratio = if self.c_alpha > 0.0 {
            Some(self.c_gamma * self.c_gamma / self.c_alpha)
        } else {
            None
        };
        let mut ratio_ok = None;
        if let (Some(c0), Some(r)) = (self.c0_threshold, ratio) {
            if self.c_gamma > 0.0 {
                let ok = r > c0;
                ratio_ok = Some(ok);
                if !ok {
                    warnings.push(format!(
                        "annealing ratio c_gamma^2 / c_alpha = {r} does not exceed c0_threshold = {c0}"
                    ));
                }
            }
        }
        ScheduleReport {
            errors,
            warnings,
            annealing_ratio: ratio,
            ratio_exceeds_threshold: ratio_ok,
            tau_max: 0.5 - self.tau_beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleReport {
    /// Hard violations.
    pub errors: Vec<String>,
    /// Advisory findings.
    pub warnings: Vec<String>,
    /// `c_gamma^2 / c_alpha`.
    pub annealing_ratio: Option<f64>,
    pub ratio_exceeds_threshold: Option<bool>,
    /// Supremum of admissible consensus-decay exponents, `1/2 - tau_beta`.
    pub tau_max: f64,
}

impl ScheduleReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Step-size and annealing constants of the single-agent recursion:
/// `a_t = A / t'`, `b_t^2 = B / (t' log log t')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralizedSchedule {
    pub a: f64,
    pub b: f64,
    pub t_offset: u64,
    pub c0_threshold: Option<f64>,
}

impl CentralizedSchedule {
    pub fn new(a: f64, b: f64, t_offset: u64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidSchedule(format!(
                "A must be positive, got {a}"
            )));
        }
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::InvalidSchedule(format!(
                "B must be non-negative, got {b}"
            )));
        }
        if b > 0.0 && t_offset + 1 < MIN_ANNEALING_TIME {
            return Err(Error::InvalidSchedule(format!(
                "t_offset = {t_offset} leaves log log t' undefined"
            )));
        }
        Ok(CentralizedSchedule {
            a,
            b,
            t_offset,
            c0_threshold: None,
        })
    }

    /// The centralized pair matching a distributed schedule at `N = 1`.
    pub fn matching(s: &ScheduleSet) -> Self {
        CentralizedSchedule {
            a: s.c_alpha,
            b: s.c_gamma * s.c_gamma,
            t_offset: s.t_offset,
            c0_threshold: s.c0_threshold,
        }
    }

    /// Whether `B / A` exceeds the configured threshold, if any.
    pub fn ratio_exceeds_threshold(&self) -> Option<bool> {
        match self.c0_threshold {
            Some(c0) if self.b > 0.0 => Some(self.b / self.a > c0),
            _ => None,
        }
    }
}

/// `(a_t, b_t)` at step `t`.
pub fn centralized_a_b(cs: &CentralizedSchedule, t: u64) -> (f64, f64) {
    let tp = (t + cs.t_offset) as f64;
    (cs.a / tp, annealing_weight(cs.b, tp))
}

fn annealing_weight(numerator: f64, tp: f64) -> f64 {
    if numerator == 0.0 {
        return 0.0;
    }
    (numerator / (tp * tp.ln().ln())).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(c_alpha: f64, c_beta: f64, tau: f64, c_gamma: f64, off: u64) -> ScheduleSet {
        ScheduleSet {
            c_alpha,
            c_beta,
            tau_beta: tau,
            c_gamma,
            t_offset: off,
            c0_threshold: None,
        }
    }

    #[test]
    fn alpha_values() {
        assert_eq!(sched(2.0, 1.0, 0.3, 0.0, 0).alpha(4), 0.5);
        assert_eq!(sched(1.0, 1.0, 0.3, 0.0, 0).alpha(1), 1.0);
        let s = sched(1.0, 1.0, 0.3, 0.0, 0);
        let mut prev = f64::INFINITY;
        for t in [1, 10, 100, 10_000, 1_000_000] {
            let a = s.alpha(t);
            assert!(a < prev && a > 0.0);
            prev = a;
        }
    }

    #[test]
    fn beta_values() {
        assert_eq!(sched(1.0, 1.0, 0.25, 0.0, 0).beta(16), 0.5);
        assert_eq!(sched(1.0, 1.0, 0.3, 0.0, 0).beta(1), 1.0);
        assert!(ScheduleSet::new(1.0, 1.0, 0.5, 1.0, 16, None).is_err());
        assert!(ScheduleSet::new(1.0, 1.0, 0.0, 1.0, 16, None).is_err());
    }

    #[test]
    fn gamma_values() {
        let off = sched(1.0, 1.0, 0.3, 0.0, 16);
        assert!((1..1000).all(|t| off.gamma(t) == 0.0));
        let s = sched(1.0, 1.0, 0.3, 1.0, 16);
        // t' = 100: 1 / (10 sqrt(ln ln 100)), ln ln 100 = 1.5271796258079...
        assert!((s.gamma(84) - 0.080_919_825_816_520_77).abs() < 1e-14);
        let mut prev = s.gamma(0);
        for t in 1..5000 {
            let g = s.gamma(t);
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn centralized_pairs() {
        let cs = CentralizedSchedule::new(1.0, 0.0, 0).unwrap();
        assert_eq!(centralized_a_b(&cs, 10), (0.1, 0.0));
        let s = sched(0.7, 1.0, 0.3, 1.3, 16);
        let m = CentralizedSchedule::matching(&s);
        for t in 0..2000 {
            let (a, b) = centralized_a_b(&m, t);
            assert_eq!(a.to_bits(), s.alpha(t).to_bits());
            assert_eq!(b.to_bits(), s.gamma(t).to_bits());
        }
        let cs = CentralizedSchedule::new(1.0, 1.0, 16).unwrap();
        assert!((centralized_a_b(&cs, 84).1 - 0.080_919_825_816_520_77).abs() < 1e-14);
        assert!(CentralizedSchedule::new(0.0, 1.0, 16).is_err());
    }

    #[test]
    fn validation_reports() {
        let mut s = sched(1.0, 1.0, 0.3, 2.0, 16);
        s.c0_threshold = Some(1.0);
        let r = s.validate();
        assert!(r.is_valid());
        assert_eq!(r.annealing_ratio, Some(4.0));
        assert_eq!(r.ratio_exceeds_threshold, Some(true));
        assert!((r.tau_max - 0.2).abs() < 1e-14);

        let mut weak = sched(2.0, 1.0, 0.3, 1.0, 16);
        weak.c0_threshold = Some(1.0);
        let r = weak.validate();
        assert!(r.is_valid());
        assert_eq!(r.ratio_exceeds_threshold, Some(false));
        assert!(!r.warnings.is_empty());

        assert!(!sched(1.0, 1.0, 0.0, 1.0, 16).validate().is_valid());
        assert!(!sched(1.0, 1.0, 0.3, 1.0, 1).validate().is_valid());
        assert!(sched(1.0, 1.0, 0.3, 1.0, 2).validate().is_valid());
        assert!(sched(1.0, 1.0, 0.3, 0.0, 0).validate().is_valid());
    }
}
