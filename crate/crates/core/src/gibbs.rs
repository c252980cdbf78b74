//! Gibbs measures `pi^eps(dx) ∝ exp(-2 U(x) / eps^2) dx` on rectangular
//! grids and their small-temperature atomic limit.

use std::fmt;
use std::sync::Arc;

use nalgebra::SymmetricEigen;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::objectives::Objective;
use crate::spec::SpecString;

/// Bounded continuous test function `f: R^d -> R` with a display name.
#[derive(Clone)]
pub struct TestFunction {
    name: String,
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("TestFunction").field(&self.name).finish()
    }
}

impl TestFunction {
    pub fn new(name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        TestFunction {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(
            if c == 1.0 {
                "one".to_string()
            } else {
                format!("const:c={c}")
            },
            move |_| c,
        )
    }

    /// `exp(-|x - c 1|^2 / w^2)`.
    pub fn bump(center: f64, width: f64) -> Self {
        let name = if center == 0.0 && width == 1.0 {
            "bump".to_string()
        } else {
            format!("bump:c={center},w={width}")
        };
        let inv = 1.0 / (width * width);
        Self::new(name, move |x| {
            (-x.iter().map(|v| (v - center) * (v - center)).sum::<f64>() * inv).exp()
        })
    }

    /// `min(max(x_i, lo), hi)`.
    pub fn clamp(coord: usize, lo: f64, hi: f64) -> Self {
        Self::new(format!("clamp:i={coord},lo={lo},hi={hi}"), move |x| {
            x.get(coord).copied().unwrap_or(0.0).clamp(lo, hi)
        })
    }

    /// Parses `one`, `const:c=2`, `bump`, `bump:c=0,w=0.5` or
    /// `clamp:i=0,lo=-1,hi=1`.
    pub fn parse(descriptor: &str) -> Result<Self> {
        let spec = SpecString::parse(descriptor)?;
        match spec.name.as_str() {
            "one" => {
                spec.expect_keys(&[])?;
                Ok(Self::constant(1.0))
            }
            "const" => {
                spec.expect_keys(&["c"])?;
                Ok(Self::constant(spec.f64_req("c")?))
            }
            "bump" => {
                spec.expect_keys(&["c", "w"])?;
                let w = spec.f64_or("w", 1.0)?;
                if w <= 0.0 {
                    return Err(Error::Spec(format!("bump width must be positive, got {w}")));
                }
                Ok(Self::bump(spec.f64_or("c", 0.0)?, w))
            }
            "clamp" => {
                spec.expect_keys(&["i", "lo", "hi"])?;
                let (lo, hi) = (spec.f64_or("lo", -1.0)?, spec.f64_or("hi", 1.0)?);
                if lo > hi {
                    return Err(Error::Spec(format!(
                        "clamp needs lo <= hi, got {lo} > {hi}"
                    )));
                }
                Ok(Self::clamp(spec.usize_or("i", 0)?, lo, hi))
            }
            other => Err(Error::Spec(format!(
                "unknown test function {other:?} (one, const, bump, clamp)"
            ))),
        }
    }
}

/// Anything that integrates test functions.
pub trait Measure {
    fn integrate(&self, f: &dyn Fn(&[f64]) -> f64) -> f64;
}

/// `pi(f) = ∫ f dpi`.
pub fn pi_of_f(measure: &dyn Measure, f: &TestFunction) -> f64 {
    measure.integrate(&|x| f.eval(x))
}

/// Tensor grid over a box with the same number of points on every axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n_points: usize,
}

impl GridSpec {
    pub fn cube(dim: usize, lo: f64, hi: f64, n_points: usize) -> Self {
        GridSpec {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
            n_points,
        }
    }

    /// Box around the declared minima with the given margin and a default
    /// resolution per dimension.
    pub fn around_minima(obj: &Objective, margin: f64) -> Self {
        let d = obj.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for m in obj.global_minima() {
            for k in 0..d {
                lo[k] = lo[k].min(m[k] - margin);
                hi[k] = hi[k].max(m[k] + margin);
            }
        }
        let n_points = match d {
            1 => 4001,
            2 => 401,
            _ => 81,
        };
        GridSpec { lo, hi, n_points }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

/// Gibbs measure discretized with trapezoid weights.
#[derive(Debug, Clone, Serialize)]
pub struct GibbsMeasure {
    pub epsilon: f64,
    pub grid: GridSpec,
    /// Flattened grid coordinates, `dim` values per point; axis 0 varies fastest.
    pub coords: Vec<f64>,
    /// Normalized point weights.
    pub weights: Vec<f64>,
    /// `Z^eps`, the unnormalized trapezoid sum.
    pub z_eps: f64,
    /// `ln Z^eps`, finite even when `Z^eps` itself would underflow.
    pub log_z_eps: f64,
}

impl GibbsMeasure {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Mass of the region selected by `pred`.
    pub fn mass_where(&self, pred: impl Fn(&[f64]) -> bool) -> f64 {
        (0..self.len())
            .filter(|&i| pred(self.point(i)))
            .map(|i| self.weights[i])
            .sum()
    }
}

impl Measure for GibbsMeasure {
    fn integrate(&self, f: &dyn Fn(&[f64]) -> f64) -> f64 {
        (0..self.len())
            .map(|i| self.weights[i] * f(self.point(i)))
            .sum()
    }
}

/// Evaluates `pi^eps` on a grid. Exponents are shifted by the grid minimum
/// of `U` before exponentiation.
pub fn gibbs_on_grid(obj: &Objective, epsilon: f64, grid: &GridSpec) -> Result<GibbsMeasure> {
    let d = obj.dim();
    if d > 3 {
        return Err(Error::Domain(format!(
            "grid quadrature supports dim <= 3, got {d}"
        )));
    }
    if grid.dim() != d || grid.hi.len() != d {
        return Err(Error::InvalidDimension(format!(
            "grid has dim {} but objective has {d}",
            grid.dim()
        )));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if grid.n_points < 2 {
        return Err(Error::InvalidParameter(
            "grid needs at least 2 points per axis".into(),
        ));
    }
    for k in 0..d {
        if !(grid.hi[k] > grid.lo[k]) {
            return Err(Error::InvalidParameter(format!(
                "empty grid interval on axis {k}"
            )));
        }
    }
    let margin = 5.0 * epsilon;
    for m in obj.global_minima() {
        for k in 0..d {
            if m[k] < grid.lo[k] + margin || m[k] > grid.hi[k] - margin {
                return Err(Error::Domain(format!(
                    "global minimum {m:?} is not inside the grid box [{:?}, {:?}] with margin 5*eps = {margin}",
                    grid.lo, grid.hi
                )));
            }
        }
    }

    let n = grid.n_points;
    let total = n.pow(d as u32);
    let h: Vec<f64> = (0..d)
        .map(|k| (grid.hi[k] - grid.lo[k]) / (n - 1) as f64)
        .collect();
    let mut coords = Vec::with_capacity(total * d);
    let mut trap = Vec::with_capacity(total);
    let mut values = Vec::with_capacity(total);
    let mut p = vec![0.0; d];
    for idx in 0..total {
        let mut rem = idx;
        let mut w = 1.0;
        for k in 0..d {
            let i = rem % n;
            rem /= n;
            p[k] = grid.lo[k] + h[k] * i as f64;
            w *= if i == 0 || i == n - 1 {
                0.5 * h[k]
            } else {
                h[k]
            };
        }
        coords.extend_from_slice(&p);
        trap.push(w);
        values.push(obj.eval(&p));
    }
    let u_min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !u_min.is_finite() {
        return Err(Error::Domain("objective is not finite on the grid".into()));
    }
    let scale = 2.0 / (epsilon * epsilon);
    let mut weights: Vec<f64> = values
        .iter()
        .zip(&trap)
        .map(|(u, w)| (-(u - u_min) * scale).exp() * w)
        .collect();
    let shifted_sum: f64 = weights.iter().sum();
    let log_z_eps = shifted_sum.ln() - u_min * scale;
    let z_eps = log_z_eps.exp();
    if z_eps < f64::MIN_POSITIVE {
        return Err(Error::EpsilonTooSmall(format!(
            "Z^eps = exp({log_z_eps}) underflows at eps = {epsilon}; the grid misses the low-energy region"
        )));
    }
    for w in &mut weights {
        *w /= shifted_sum;
    }
    Ok(GibbsMeasure {
        epsilon,
        grid: grid.clone(),
        coords,
        weights,
        z_eps,
        log_z_eps,
    })
}

/// Atomic limit of `pi^eps` as `eps -> 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitMeasure {
    pub atoms: Vec<(Vec<f64>, f64)>,
}

impl Measure for LimitMeasure {
    fn integrate(&self, f: &dyn Fn(&[f64]) -> f64) -> f64 {
        self.atoms.iter().map(|(x, m)| m * f(x)).sum()
    }
}

/// Places mass `∝ det(Hess U(x*))^{-1/2}` on each declared global minimum.
pub fn limit_measure(obj: &Objective) -> Result<LimitMeasure> {
    let minima = obj.global_minima();
    if minima.is_empty() {
        return Err(Error::Domain("objective declares no global minima".into()));
    }
    if minima.len() == 1 {
        return Ok(LimitMeasure {
            atoms: vec![(minima[0].clone(), 1.0)],
        });
    }
    let mut raw = Vec::with_capacity(minima.len());
    for m in minima {
        let hess = obj.hessian(m).ok_or_else(|| {
            Error::Domain("limit measure needs an objective with a Hessian".into())
        })?;
        let ev = SymmetricEigen::new(hess).eigenvalues;
        let min_ev = ev.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min_ev > 1e-10) {
            return Err(Error::DegenerateMinimum(format!(
                "Hessian at {m:?} has smallest eigenvalue {min_ev}"
            )));
        }
        // det^{-1/2} via log-eigenvalues to avoid overflow in higher dimensions
        let log_det: f64 = ev.iter().map(|v| v.ln()).sum();
        raw.push(-0.5 * log_det);
    }
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = raw.iter().map(|r| (r - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(LimitMeasure {
        atoms: minima
            .iter()
            .cloned()
            .zip(w.into_iter().map(|v| v / total))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakLimitRow {
    pub epsilon: f64,
    pub function: String,
    pub pi_eps: f64,
    pub pi_limit: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakLimitReport {
    pub rows: Vec<WeakLimitRow>,
    /// Per function: whether the gap is non-increasing along the sweep.
    pub monotone: Vec<(String, bool)>,
}

impl WeakLimitReport {
    pub fn all_monotone(&self) -> bool {
        self.monotone.iter().all(|(_, ok)| *ok)
    }
}

/// Tabulates `|pi^eps(f) - pi(f)|` along a decreasing sweep of `eps`.
pub fn weak_limit_check(
    obj: &Objective,
    grid: &GridSpec,
    epsilons: &[f64],
    suite: &[TestFunction],
) -> Result<WeakLimitReport> {
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(
            "epsilons must be strictly decreasing".into(),
        ));
    }
    let limit = limit_measure(obj)?;
    let measures = epsilons
        .iter()
        .map(|&e| gibbs_on_grid(obj, e, grid))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut monotone = Vec::new();
    for f in suite {
        let pi_limit = pi_of_f(&limit, f);
        let mut prev_gap = f64::INFINITY;
        let mut ok = true;
        for m in &measures {
            let pi_eps = pi_of_f(m, f);
            let gap = (pi_eps - pi_limit).abs();
            if gap > prev_gap + 1e-12 {
                ok = false;
            }
            prev_gap = gap;
            rows.push(WeakLimitRow {
                epsilon: m.epsilon,
                function: f.name().to_string(),
                pi_eps,
                pi_limit,
                gap,
            });
        }
        monotone.push((f.name().to_string(), ok));
    }
    Ok(WeakLimitReport { rows, monotone })
}
