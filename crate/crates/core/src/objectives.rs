//! Test objectives with analytic gradients, their per-agent splits, and
//! numerical checks of the smoothness and admissibility conditions the
//! convergence theory relies on.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spec::SpecString;

/// A smooth scalar field with an analytic gradient.
pub trait SmoothFn: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    fn hessian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

/// A normalized objective `U` (minimum value 0) with its metadata.
#[derive(Clone)]
pub struct Objective {
    name: String,
    dim: usize,
    lipschitz_grad: f64,
    global_minima: Vec<Vec<f64>>,
    shift: f64,
    func: Arc<dyn SmoothFn>,
}

impl fmt::Debug for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Objective")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("lipschitz_grad", &self.lipschitz_grad)
            .field("global_minima", &self.global_minima)
            .finish()
    }
}

impl Objective {
    /// Wraps a user-supplied function. `min_value` is the declared minimum
    /// of `func`; it is subtracted so that the stored objective has minimum 0.
    pub fn custom(
        name: impl Into<String>,
        dim: usize,
        lipschitz_grad: f64,
        global_minima: Vec<Vec<f64>>,
        min_value: f64,
        func: Arc<dyn SmoothFn>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(
                "objective dimension must be >= 1".into(),
            ));
        }
        if !(lipschitz_grad > 0.0 && lipschitz_grad.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lipschitz constant must be positive, got {lipschitz_grad}"
            )));
        }
        if !min_value.is_finite() {
            return Err(Error::InvalidParameter(
                "declared minimum value must be finite".into(),
            ));
        }
        if let Some(bad) = global_minima.iter().find(|m| m.len() != dim) {
            return Err(Error::InvalidDimension(format!(
                "global minimum {bad:?} has length {} but dim = {dim}",
                bad.len()
            )));
        }
        Ok(Objective {
            name: name.into(),
            dim,
            lipschitz_grad,
            global_minima,
            shift: min_value,
            func,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lipschitz_grad(&self) -> f64 {
        self.lipschitz_grad
    }

    pub fn global_minima(&self) -> &[Vec<f64>] {
        &self.global_minima
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.func.value(x) - self.shift
    }

    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        self.func.gradient(x, out);
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.grad_into(x, &mut g);
        g
    }

    pub fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        self.func.hessian(x)
    }

    /// Trace of the Hessian, when available.
    pub fn laplacian(&self, x: &[f64]) -> Option<f64> {
        self.hessian(x).map(|h| h.trace())
    }

    /// Euclidean distance from `x` to the nearest declared global minimum.
    pub fn dist_to_minima(&self, x: &[f64]) -> f64 {
        self.global_minima
            .iter()
            .map(|m| norm(&sub(x, m)))
            .fold(f64::INFINITY, f64::min)
    }
}

struct Quadratic;

impl SmoothFn for Quadratic {
    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = 2.0 * v;
        }
    }

    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(x.len(), x.len()) * 2.0)
    }
}

/// `U(x) = |x|^2 + a * sum_i (1 - cos(b x_i))`.
struct CosineWell {
    a: f64,
    b: f64,
}

impl SmoothFn for CosineWell {
    fn value(&self, x: &[f64]) -> f64 {
        x.iter()
            .map(|&v| v * v + self.a * (1.0 - (self.b * v).cos()))
            .sum()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let ab = self.a * self.b;
        for (o, &v) in out.iter_mut().zip(x) {
            *o = 2.0 * v + ab * (self.b * v).sin();
        }
    }

    fn hessian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let ab2 = self.a * self.b * self.b;
        let diag: Vec<f64> = x.iter().map(|&v| 2.0 + ab2 * (self.b * v).cos()).collect();
        Some(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)))
    }
}

/// `U(x) = |x|^2`, minimum at the origin.
pub fn make_quadratic(dim: usize) -> Result<Objective> {
    if dim == 0 {
        return Err(Error::InvalidDimension("dim must be >= 1".into()));
    }
    Objective::custom(
        format!("quadratic:d={dim}"),
        dim,
        2.0,
        vec![vec![0.0; dim]],
        0.0,
        Arc::new(Quadratic),
    )
}

/// Multimodal family `|x|^2 + a * sum_i (1 - cos(b x_i))` with its unique
/// global minimum at the origin. Non-global local minima exist when
/// `a * b^2 > 2`.
pub fn make_cosine_well(dim: usize, a: f64, b: f64) -> Result<Objective> {
    if dim == 0 {
        return Err(Error::InvalidDimension("dim must be >= 1".into()));
    }
    if !(a > 0.0 && a.is_finite()) || !(b > 0.0 && b.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "cosine_well requires a > 0 and b > 0, got a={a}, b={b}"
        )));
    }
    Objective::custom(
        format!("cosine_well:a={a},b={b},d={dim}"),
        dim,
        2.0 + a * b * b,
        vec![vec![0.0; dim]],
        0.0,
        Arc::new(CosineWell { a, b }),
    )
}

/// Largest dimension accepted from a descriptor.
pub const MAX_PARSED_DIM: usize = 4096;

/// Builds a shipped objective from its registry descriptor, e.g.
/// `quadratic:d=2` or `cosine_well:a=1,b=1,d=2`.
pub fn parse_objective(descriptor: &str) -> Result<Objective> {
    let spec = SpecString::parse(descriptor)?;
    let dim = || -> Result<usize> {
        let d = spec.usize_or("d", 1)?;
        if d > MAX_PARSED_DIM {
            return Err(Error::Spec(format!(
                "d = {d} exceeds the limit of {MAX_PARSED_DIM}"
            )));
        }
        Ok(d)
    };
    match spec.name.as_str() {
        "quadratic" => {
            spec.expect_keys(&["d"])?;
            make_quadratic(dim()?)
        }
        "cosine_well" => {
            spec.expect_keys(&["a", "b", "d"])?;
            make_cosine_well(dim()?, spec.f64_or("a", 1.0)?, spec.f64_or("b", 1.0)?)
        }
        other => Err(Error::Spec(format!(
            "unknown objective {other:?} (available: quadratic, cosine_well)"
        ))),
    }
}

/// `N` local objectives `U_n(x) = U(x) + s_n^T x` with `sum_n s_n = 0`.
#[derive(Debug, Clone)]
pub struct LocalObjectiveFamily {
    base: Objective,
    shifts: Vec<Vec<f64>>,
    dissimilarity_bound: f64,
}

impl LocalObjectiveFamily {
    /// Uses the given linear shifts. They must sum to zero (to 1e-12 per
    /// coordinate, relative to their magnitude).
    pub fn with_shifts(base: Objective, shifts: Vec<Vec<f64>>) -> Result<Self> {
        if shifts.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one agent is required".into(),
            ));
        }
        let d = base.dim();
        if shifts.iter().any(|s| s.len() != d) {
            return Err(Error::InvalidDimension(format!(
                "every shift must have length {d}"
            )));
        }
        let scale = shifts
            .iter()
            .flat_map(|s| s.iter())
            .fold(1.0_f64, |m, v| m.max(v.abs()));
        for k in 0..d {
            let sum: f64 = shifts.iter().map(|s| s[k]).sum();
            if sum.abs() > 1e-12 * scale * shifts.len() as f64 {
                return Err(Error::InvalidArgument(format!(
                    "shifts must sum to zero; coordinate {k} sums to {sum}"
                )));
            }
        }
        let dissimilarity_bound = shifts.iter().map(|s| norm(s)).fold(0.0, f64::max);
        Ok(LocalObjectiveFamily {
            base,
            shifts,
            dissimilarity_bound,
        })
    }

    /// Every agent holds the base objective unchanged.
    pub fn identical(base: Objective, n_agents: usize) -> Result<Self> {
        let d = base.dim();
        Self::with_shifts(base, vec![vec![0.0; d]; n_agents])
    }

    pub fn base(&self) -> &Objective {
        &self.base
    }

    pub fn n_agents(&self) -> usize {
        self.shifts.len()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn shifts(&self) -> &[Vec<f64>] {
        &self.shifts
    }

    /// `sup_x |grad U_n(x) - grad U(x)|`, exact for linear shifts.
    pub fn dissimilarity_bound(&self) -> f64 {
        self.dissimilarity_bound
    }

    pub fn local_eval(&self, agent: usize, x: &[f64]) -> f64 {
        self.base.eval(x) + dot(&self.shifts[agent], x)
    }

    pub fn local_grad_into(&self, agent: usize, x: &[f64], out: &mut [f64]) {
        self.base.grad_into(x, out);
        for (o, s) in out.iter_mut().zip(&self.shifts[agent]) {
            // Skipping exact zeros keeps single-agent runs bitwise equal to
            // the centralized recursion (adding +0.0 flips the sign of -0.0).
            if *s != 0.0 {
                *o += s;
            }
        }
    }

    pub fn local_grad(&self, agent: usize, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.local_grad_into(agent, x, &mut g);
        g
    }

    /// `(1/N) sum_n U_n(x)`.
    pub fn average_eval(&self, x: &[f64]) -> f64 {
        let n = self.n_agents() as f64;
        (0..self.n_agents())
            .map(|i| self.local_eval(i, x))
            .sum::<f64>()
            / n
    }
}

/// Splits `base` into `n_agents` linearly perturbed local objectives whose
/// average is exactly `base` and whose gradients differ from `grad U` by at
/// most `spread`.
pub fn split_linear(
    base: Objective,
    n_agents: usize,
    spread: f64,
    seed: u64,
) -> Result<LocalObjectiveFamily> {
    if n_agents == 0 {
        return Err(Error::InvalidArgument("n_agents must be >= 1".into()));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "spread must be >= 0, got {spread}"
        )));
    }
    let d = base.dim();
    if n_agents == 1 || spread == 0.0 {
        return LocalObjectiveFamily::identical(base, n_agents);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = spread * (n_agents - 1) as f64 / n_agents as f64;
    let mut shifts: Vec<Vec<f64>> = (0..n_agents - 1)
        .map(|_| uniform_in_ball(&mut rng, d, radius))
        .collect();
    let last: Vec<f64> = (0..d)
        .map(|k| -shifts.iter().map(|s| s[k]).sum::<f64>())
        .collect();
    shifts.push(last);
    let max_norm = shifts.iter().map(|s| norm(s)).fold(0.0, f64::max);
    if max_norm > spread {
        let scale = spread / max_norm;
        for s in &mut shifts {
            for v in s.iter_mut() {
                *v *= scale;
            }
        }
    }
    // Re-centre after scaling so the zero-sum constraint holds to rounding.
    for k in 0..d {
        let mean = shifts.iter().map(|s| s[k]).sum::<f64>() / n_agents as f64;
        for s in &mut shifts {
            s[k] -= mean;
        }
    }
    LocalObjectiveFamily::with_shifts(base, shifts)
}

fn uniform_in_ball<R: Rng>(rng: &mut R, d: usize, radius: f64) -> Vec<f64> {
    loop {
        let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&dir);
        if n > 0.0 {
            let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
            return dir.into_iter().map(|v| v * r / n).collect();
        }
    }
}

/// Largest relative discrepancy between central finite differences and the
/// analytic gradient: `|fd - g| / (1 + |g|)` over all points and coordinates.
pub fn check_gradient(obj: &Objective, points: &[Vec<f64>], h: f64) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::InvalidArgument(
            "check_gradient needs at least one point".into(),
        ));
    }
    if !(h > 1e-8 && h < 1e-2) {
        return Err(Error::InvalidArgument(format!(
            "step h must lie in (1e-8, 1e-2), got {h}"
        )));
    }
    let d = obj.dim();
    let mut worst = 0.0_f64;
    let mut probe = vec![0.0; d];
    for p in points {
        if p.len() != d {
            return Err(Error::InvalidDimension(format!(
                "point has length {} but dim = {d}",
                p.len()
            )));
        }
        let g = obj.grad(p);
        for k in 0..d {
            probe.copy_from_slice(p);
            probe[k] = p[k] + h;
            let up = obj.eval(&probe);
            probe[k] = p[k] - h;
            let down = obj.eval(&probe);
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((fd - g[k]).abs() / (1.0 + g[k].abs()));
        }
    }
    Ok(worst)
}

/// `C(d) = sqrt((4d - 4) / (4d - 3))`, the radial-alignment threshold.
pub fn alignment_threshold(dim: usize) -> f64 {
    let d = dim as f64;
    ((4.0 * d - 4.0) / (4.0 * d - 3.0)).sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    pub dim: usize,
    pub box_radius: f64,
    /// Minimum sampled value of `U` over the box grid and the declared minima.
    pub min_value: f64,
    /// Largest `|U(x*)|` over declared global minima.
    pub max_value_at_minima: f64,
    /// Largest `|grad U(x*)|` over declared global minima.
    pub max_grad_at_minima: f64,
    /// Largest sampled `|grad U(x) - grad U(y)| / |x - y|`.
    pub lipschitz_ratio_max: f64,
    /// Range of `|grad U(x)| / |x|` on the sphere of radius `box_radius`.
    pub growth_ratio_min: f64,
    pub growth_ratio_max: f64,
    /// Smallest `<grad U / |grad U|, x / |x|>` on the sphere.
    pub alignment_min: f64,
    pub alignment_threshold: f64,
    /// Sampled infimum of `|grad U|^2 - trace(Hess U)` over the box.
    pub laplacian_gap_inf: Option<f64>,
    pub flags: Vec<String>,
}

impl AdmissibilityReport {
    pub fn is_admissible(&self) -> bool {
        self.flags.is_empty()
    }
}

/// Samples the box `[-r, r]^d` and the sphere of radius `r` to check the
/// normalization, smoothness and growth conditions. Asymptotic conditions
/// are only proxied at the finite radius.
pub fn validate_admissibility(
    obj: &Objective,
    box_radius: f64,
    grid: usize,
) -> AdmissibilityReport {
    let d = obj.dim();
    let grid = grid.max(2);
    let mut flags = Vec::new();

    let box_points = box_samples(d, box_radius, grid);
    let mut min_value = f64::INFINITY;
    let mut gap_inf: Option<f64> = None;
    for p in box_points.iter().chain(obj.global_minima()) {
        let u = obj.eval(p);
        min_value = min_value.min(u);
        if let Some(lap) = obj.laplacian(p) {
            let g = obj.grad(p);
            let v = dot(&g, &g) - lap;
            gap_inf = Some(gap_inf.map_or(v, |m: f64| m.min(v)));
        }
    }

    let mut max_value_at_minima = 0.0_f64;
    let mut max_grad_at_minima = 0.0_f64;
    for m in obj.global_minima() {
        max_value_at_minima = max_value_at_minima.max(obj.eval(m).abs());
        max_grad_at_minima = max_grad_at_minima.max(norm(&obj.grad(m)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x05ee_da11);
    let mut lipschitz_ratio_max = 0.0_f64;
    for _ in 0..(grid * 20).min(20_000) {
        let x: Vec<f64> = (0..d)
            .map(|_| rng.random_range(-box_radius..=box_radius))
            .collect();
        let y: Vec<f64> = (0..d)
            .map(|_| rng.random_range(-box_radius..=box_radius))
            .collect();
        let dx = norm(&sub(&x, &y));
        if dx > 0.0 {
            let dg = norm(&sub(&obj.grad(&x), &obj.grad(&y)));
            lipschitz_ratio_max = lipschitz_ratio_max.max(dg / dx);
        }
    }

    let mut growth_min = f64::INFINITY;
    let mut growth_max = 0.0_f64;
    let mut alignment_min = f64::INFINITY;
    for p in sphere_samples(d, box_radius, grid) {
        let g = obj.grad(&p);
        let gn = norm(&g);
        let xn = norm(&p);
        growth_min = growth_min.min(gn / xn);
        growth_max = growth_max.max(gn / xn);
        let align = if gn > 0.0 {
            dot(&g, &p) / (gn * xn)
        } else {
            0.0
        };
        alignment_min = alignment_min.min(align);
    }
    let c_d = alignment_threshold(d);

    if min_value < -1e-12 {
        flags.push(format!(
            "normalization: sampled minimum {min_value} is below 0"
        ));
    }
    if max_value_at_minima > 1e-12 {
        flags.push(format!(
            "normalization: |U| at a declared minimum is {max_value_at_minima}"
        ));
    }
    if max_grad_at_minima > 1e-8 {
        flags.push(format!(
            "critical point: |grad U| at a declared minimum is {max_grad_at_minima}"
        ));
    }
    if lipschitz_ratio_max > obj.lipschitz_grad() * (1.0 + 1e-9) {
        flags.push(format!(
            "lipschitz: sampled ratio {lipschitz_ratio_max} exceeds declared {}",
            obj.lipschitz_grad()
        ));
    }
    if growth_min <= 0.0 {
        flags.push("growth: |grad U|/|x| vanishes on the sampling sphere".into());
    }
    if !growth_max.is_finite() {
        flags.push("growth: |grad U|/|x| is unbounded on the sampling sphere".into());
    }
    if alignment_min < c_d {
        flags.push(format!(
            "radial alignment: sampled minimum {alignment_min:.6} is below C(d) = {c_d:.6}"
        ));
    }
    if let Some(v) = gap_inf {
        if !v.is_finite() {
            flags.push("laplacian gap: |grad U|^2 - trace(Hess U) is not bounded below".into());
        }
    }

    AdmissibilityReport {
        dim: d,
        box_radius,
        min_value,
        max_value_at_minima,
        max_grad_at_minima,
        lipschitz_ratio_max,
        growth_ratio_min: growth_min,
        growth_ratio_max: growth_max,
        alignment_min,
        alignment_threshold: c_d,
        laplacian_gap_inf: gap_inf,
        flags,
    }
}

fn box_samples(d: usize, r: f64, grid: usize) -> Vec<Vec<f64>> {
    if d <= 3 {
        let axis: Vec<f64> = (0..grid)
            .map(|i| -r + 2.0 * r * i as f64 / (grid - 1) as f64)
            .collect();
        let total = grid.pow(d as u32);
        (0..total)
            .map(|mut idx| {
                (0..d)
                    .map(|_| {
                        let v = axis[idx % grid];
                        idx /= grid;
                        v
                    })
                    .collect()
            })
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0xb0c5);
        (0..grid * grid)
            .map(|_| (0..d).map(|_| rng.random_range(-r..=r)).collect())
            .collect()
    }
}

fn sphere_samples(d: usize, r: f64, grid: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![-r], vec![r]],
        2 => (0..grid * 4)
            .map(|i| {
                let th = std::f64::consts::TAU * i as f64 / (grid * 4) as f64;
                vec![r * th.cos(), r * th.sin()]
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5fe7e);
            let mut out = Vec::with_capacity(grid * grid);
            while out.len() < grid * grid {
                let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let n = norm(&v);
                if n > 0.0 {
                    out.push(v.into_iter().map(|c| c * r / n).collect());
                }
            }
            out
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CriticalKind {
    LocalMin,
    LocalMax,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CriticalPoint {
    pub x: f64,
    pub value: f64,
    pub kind: CriticalKind,
}

/// Locates the zeros of `U'` on `[lo, hi]` for a one-dimensional objective by
/// a sign-change scan over `n` grid intervals followed by bisection.
pub fn critical_points_1d(
    obj: &Objective,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<Vec<CriticalPoint>> {
    if obj.dim() != 1 {
        return Err(Error::InvalidDimension(
            "critical point scan needs dim = 1".into(),
        ));
    }
    if !(hi > lo) || n < 2 {
        return Err(Error::InvalidArgument("need lo < hi and n >= 2".into()));
    }
    let g = |x: f64| obj.grad(&[x])[0];
    let step = (hi - lo) / n as f64;
    let mut out = Vec::new();
    let mut x0 = lo;
    let mut g0 = g(x0);
    for i in 1..=n {
        let x1 = lo + step * i as f64;
        let g1 = g(x1);
        let crossing = if g0 == 0.0 {
            Some(x0)
        } else if g0.signum() != g1.signum() && g1 != 0.0 {
            let (mut a, mut b, mut ga) = (x0, x1, g0);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let gm = g(m);
                if gm == 0.0 || (b - a) < 1e-15 * (1.0 + m.abs()) {
                    a = m;
                    b = m;
                    break;
                }
                if gm.signum() == ga.signum() {
                    a = m;
                    ga = gm;
                } else {
                    b = m;
                }
            }
            Some(0.5 * (a + b))
        } else {
            None
        };
        if let Some(x) = crossing {
            let kind = if g0 < 0.0 || (g0 == 0.0 && g1 > 0.0) {
                CriticalKind::LocalMin
            } else {
                CriticalKind::LocalMax
            };
            out.push(CriticalPoint {
                x,
                value: obj.eval(&[x]),
                kind,
            });
        }
        x0 = x1;
        g0 = g1;
    }
    Ok(out)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn quadratic_values() {
        let q = make_quadratic(1).unwrap();
        assert_eq!(q.eval(&[0.0]), 0.0);
        assert_eq!(q.grad(&[0.0]), vec![0.0]);
        assert_eq!(q.eval(&[2.0]), 4.0);
        assert_eq!(q.grad(&[2.0]), vec![4.0]);
        let q2 = make_quadratic(2).unwrap();
        assert_eq!(q2.eval(&[1.0, 1.0]), 2.0);
        assert_eq!(q2.grad(&[1.0, 1.0]), vec![2.0, 2.0]);
        assert_eq!(q2.lipschitz_grad(), 2.0);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(make_quadratic(0), Err(Error::InvalidDimension(_))));
        assert!(matches!(
            make_cosine_well(0, 1.0, 1.0),
            Err(Error::InvalidDimension(_))
        ));
    }

    #[test]
    fn cosine_well_values() {
        let c = make_cosine_well(1, 1.0, 1.0).unwrap();
        assert_eq!(c.eval(&[0.0]), 0.0);
        // pi^2 + 2 and 2*pi + sin(pi)
        assert!((c.eval(&[PI]) - 11.869_604_401_089_358).abs() < 1e-12);
        assert!((c.grad(&[PI])[0] - std::f64::consts::TAU).abs() < 1e-12);
    }

    #[test]
    fn cosine_well_rejects_nonpositive_parameters() {
        assert!(matches!(
            make_cosine_well(1, 0.0, 1.0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            make_cosine_well(1, 1.0, -2.0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn deep_cosine_well_has_spurious_minima() {
        let c = make_cosine_well(1, 5.0, 3.0).unwrap();
        let crit = critical_points_1d(&c, -3.0, 3.0, 60_000).unwrap();
        let positive = crit.iter().filter(|p| p.value > 1e-9).count();
        assert!(positive >= 2, "{crit:?}");
        let local_minima: Vec<_> = crit
            .iter()
            .filter(|p| p.kind == CriticalKind::LocalMin && p.value > 1e-9)
            .collect();
        assert_eq!(local_minima.len(), 2);
        for m in local_minima {
            assert!((m.x.abs() - 2.004_222_758_489_096).abs() < 1e-9);
        }
    }

    #[test]
    fn registry_parses_descriptors() {
        let c = parse_objective("cosine_well:a=1,b=1,d=2").unwrap();
        assert_eq!(c.dim(), 2);
        assert_eq!(c.lipschitz_grad(), 3.0);
        assert_eq!(parse_objective("quadratic").unwrap().dim(), 1);
        assert!(parse_objective("double_well").is_err());
        assert!(parse_objective("quadratic:d=0").is_err());
        assert!(parse_objective("cosine_well:a=1,c=2").is_err());
    }

    #[test]
    fn custom_objective_is_shifted_to_zero_minimum() {
        struct Offset;
        impl SmoothFn for Offset {
            fn value(&self, x: &[f64]) -> f64 {
                x[0] * x[0] + 3.0
            }
            fn gradient(&self, x: &[f64], out: &mut [f64]) {
                out[0] = 2.0 * x[0];
            }
        }
        let o =
            Objective::custom("offset", 1, 2.0, vec![vec![0.0]], 3.0, Arc::new(Offset)).unwrap();
        assert_eq!(o.eval(&[0.0]), 0.0);
        assert_eq!(o.eval(&[1.0]), 1.0);
    }

    #[test]
    fn single_agent_split_is_trivial() {
        let fam = split_linear(make_quadratic(2).unwrap(), 1, 3.0, 9).unwrap();
        assert_eq!(fam.shifts(), &[vec![0.0, 0.0]]);
        assert_eq!(fam.dissimilarity_bound(), 0.0);
        assert_eq!(fam.local_eval(0, &[1.0, 2.0]), 5.0);
    }

    #[test]
    fn two_agent_opposite_shifts() {
        let base = make_cosine_well(1, 1.0, 1.0).unwrap();
        let fam =
            LocalObjectiveFamily::with_shifts(base.clone(), vec![vec![1.0], vec![-1.0]]).unwrap();
        assert_eq!(fam.dissimilarity_bound(), 1.0);
        for &x in &[-3.0, 0.0, 0.7, 12.0] {
            let g = base.grad(&[x])[0];
            assert!(((fam.local_grad(0, &[x])[0] - g).abs() - 1.0).abs() < 1e-12);
            assert!(((fam.local_grad(1, &[x])[0] - g).abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn split_rejects_nonzero_sum_and_zero_agents() {
        let base = make_quadratic(1).unwrap();
        assert!(
            LocalObjectiveFamily::with_shifts(base.clone(), vec![vec![1.0], vec![1.0]]).is_err()
        );
        assert!(split_linear(base, 0, 1.0, 0).is_err());
    }

    #[test]
    fn split_average_matches_base() {
        let base = make_cosine_well(3, 1.0, 1.0).unwrap();
        let fam = split_linear(base.clone(), 10, 0.5, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            assert!((fam.average_eval(&x) - base.eval(&x)).abs() <= 1e-12);
        }
        assert!(fam.dissimilarity_bound() <= 0.5 + 1e-15);
        assert!(fam.dissimilarity_bound() > 0.0);
    }

    #[test]
    fn gradient_check_quadratic_and_errors() {
        let q = make_quadratic(1).unwrap();
        assert!(check_gradient(&q, &[vec![1.0]], 1e-5).unwrap() <= 1e-9);
        assert!(matches!(
            check_gradient(&q, &[], 1e-5),
            Err(Error::InvalidArgument(_))
        ));
        assert!(check_gradient(&q, &[vec![1.0]], 0.1).is_err());
    }

    #[test]
    fn gradient_check_catches_scaled_gradient() {
        struct Wrong;
        impl SmoothFn for Wrong {
            fn value(&self, x: &[f64]) -> f64 {
                x.iter().map(|v| v * v + 1.0 - v.cos()).sum()
            }
            fn gradient(&self, x: &[f64], out: &mut [f64]) {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = 1.01 * (2.0 * v + v.sin());
                }
            }
        }
        let w = Objective::custom("wrong", 1, 3.0, vec![vec![0.0]], 0.0, Arc::new(Wrong)).unwrap();
        let pts: Vec<Vec<f64>> = (0..50).map(|i| vec![-5.0 + 0.2 * i as f64]).collect();
        assert!(check_gradient(&w, &pts, 1e-5).unwrap() >= 1e-3);
    }

    #[test]
    fn quadratic_admissibility() {
        let r = validate_admissibility(&make_quadratic(1).unwrap(), 10.0, 101);
        assert_eq!(r.alignment_threshold, 0.0);
        assert!((r.alignment_min - 1.0).abs() < 1e-12);
        assert!(r.is_admissible(), "{:?}", r.flags);
        assert_eq!(r.laplacian_gap_inf, Some(-2.0));
    }

    #[test]
    fn cosine_well_admissibility() {
        let c = make_cosine_well(2, 1.0, 1.0).unwrap();
        let r = validate_admissibility(&c, 50.0, 101);
        assert!(
            r.growth_ratio_min >= 1.95 && r.growth_ratio_max <= 2.05,
            "{r:?}"
        );
        assert!((r.alignment_threshold - (0.8f64).sqrt()).abs() < 1e-15);
        assert!(r.alignment_min > r.alignment_threshold);
        assert!(r.is_admissible(), "{:?}", r.flags);
        assert!(r.min_value >= 0.0);
    }

    #[test]
    fn quartic_is_flagged() {
        struct Quartic;
        impl SmoothFn for Quartic {
            fn value(&self, x: &[f64]) -> f64 {
                (x[0] * x[0] - 1.0).powi(2)
            }
            fn gradient(&self, x: &[f64], out: &mut [f64]) {
                out[0] = 4.0 * x[0] * (x[0] * x[0] - 1.0);
            }
        }
        let q = Objective::custom(
            "quartic",
            1,
            8.0,
            vec![vec![-1.0], vec![1.0]],
            0.0,
            Arc::new(Quartic),
        )
        .unwrap();
        let r = validate_admissibility(&q, 10.0, 101);
        assert!(!r.is_admissible());
        assert!(r.flags.iter().any(|f| f.starts_with("lipschitz")));
    }
}
