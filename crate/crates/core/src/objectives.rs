//! Benchmark objectives: diagonal quadratics and regularized logistic
//! regression on synthetic two-cluster Gaussian data, together with the
//! high-precision optimum oracle the Lyapunov diagnostics rely on.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// Default stationarity tolerance of [`solve_optimum`]: stop once
/// `|grad f| <= tol * max(1, L)`.
pub const SOLVE_OPTIMUM_TOL: f64 = 1e-12;

/// Default iteration budget of [`solve_optimum`].
pub const SOLVE_OPTIMUM_MAX_ITERS: u64 = 50_000_000;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("lambda[{index}] = {value} must be positive")]
    NonPositiveLambda { index: usize, value: f64 },
    #[error("constants must satisfy L >= mu > 0, got mu={mu}, L={l}")]
    BadConstants { mu: f64, l: f64 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("label at row {row} must be +1 or -1, got {value}")]
    BadLabel { row: usize, value: f64 },
    #[error("row {row}: {problem}")]
    BadRow { row: usize, problem: String },
    #[error("dataset is not separable along the recorded direction")]
    NotSeparable,
    #[error("optimum solver exhausted its budget (gradient norm {grad_norm:e})")]
    NonConvergence { grad_norm: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// Minimizer and minimal value of an objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub x: Vec<f64>,
    pub f: f64,
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A differentiable objective with its quasi-strong-convexity constant `mu`,
/// smoothness constant `L`, and (when known) its optimum.
///
/// Objectives are immutable and reentrant; evaluation counters live in the
/// caller.
#[derive(Clone)]
pub struct Objective {
    dim: usize,
    mu: f64,
    smoothness: f64,
    value: Arc<ValueFn>,
    gradient: Arc<GradientFn>,
    optimum: Option<Optimum>,
}

impl fmt::Debug for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Objective")
            .field("dim", &self.dim)
            .field("mu", &self.mu)
            .field("smoothness", &self.smoothness)
            .field("optimum", &self.optimum)
            .finish_non_exhaustive()
    }
}

impl Objective {
    pub fn new(
        dim: usize,
        mu: f64,
        smoothness: f64,
        value: Arc<ValueFn>,
        gradient: Arc<GradientFn>,
    ) -> Result<Self, ObjectiveError> {
        if !(mu > 0.0 && smoothness >= mu) {
            return Err(ObjectiveError::BadConstants { mu, l: smoothness });
        }
        Ok(Self { dim, mu, smoothness, value, gradient, optimum: None })
    }

    pub fn with_optimum(mut self, optimum: Optimum) -> Self {
        self.optimum = Some(optimum);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn condition_number(&self) -> f64 {
        self.smoothness / self.mu
    }

    pub fn optimum(&self) -> Option<&Optimum> {
        self.optimum.as_ref()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        (self.value)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        (self.gradient)(x)
    }
}

/// `f(x) = sum_i lambda_i x_i^2` with `mu = 2 min lambda`, `L = 2 max lambda`
/// and optimum `(0, 0)`.
pub fn quadratic(lambda: &[f64]) -> Result<Objective, ObjectiveError> {
    if lambda.is_empty() {
        return Err(ObjectiveError::Invalid("lambda must be non-empty".into()));
    }
    for (index, &value) in lambda.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(ObjectiveError::NonPositiveLambda { index, value });
        }
    }
    let dim = lambda.len();
    let min = lambda.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = lambda.iter().cloned().fold(0.0f64, f64::max);
    let l1: Arc<[f64]> = lambda.to_vec().into();
    let l2 = Arc::clone(&l1);
    let obj = Objective::new(
        dim,
        2.0 * min,
        2.0 * max,
        Arc::new(move |x| x.iter().zip(l1.iter()).map(|(xi, li)| li * xi * xi).sum()),
        Arc::new(move |x| x.iter().zip(l2.iter()).map(|(xi, li)| 2.0 * li * xi).collect()),
    )?;
    Ok(obj.with_optimum(Optimum { x: vec![0.0; dim], f: 0.0 }))
}

/// Diagonal quadratic with `dim` eigenvalues log-spaced in `[1/kappa, 1]`,
/// the standard ill-conditioned test problem shape.
pub fn quadratic_log_spaced(dim: usize, kappa: f64) -> Result<Objective, ObjectiveError> {
    if !(kappa >= 1.0) {
        return Err(ObjectiveError::Invalid(format!("kappa must be >= 1, got {kappa}")));
    }
    if dim == 0 {
        return Err(ObjectiveError::Invalid("dimension must be positive".into()));
    }
    let lambda: Vec<f64> = if dim == 1 {
        vec![1.0]
    } else {
        (0..dim)
            .map(|i| kappa.powf(-1.0 + i as f64 / (dim - 1) as f64))
            .collect()
    };
    quadratic(&lambda)
}

/// Binary-labeled feature rows with a recorded separating direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
    separating_direction: Vec<f64>,
}

impl LabeledDataset {
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<f64>,
        separating_direction: Vec<f64>,
    ) -> Result<Self, ObjectiveError> {
        if features.is_empty() {
            return Err(ObjectiveError::EmptyDataset);
        }
        let dim = separating_direction.len();
        if features.len() != labels.len() {
            return Err(ObjectiveError::Invalid(format!(
                "{} feature rows vs {} labels",
                features.len(),
                labels.len()
            )));
        }
        for (row, (x, &y)) in features.iter().zip(&labels).enumerate() {
            if y != 1.0 && y != -1.0 {
                return Err(ObjectiveError::BadLabel { row, value: y });
            }
            if x.len() != dim {
                return Err(ObjectiveError::BadRow {
                    row,
                    problem: format!("expected {dim} features, got {}", x.len()),
                });
            }
            if !x.iter().all(|v| v.is_finite()) {
                return Err(ObjectiveError::BadRow { row, problem: "non-finite feature".into() });
            }
        }
        let ds = Self { features, labels, separating_direction };
        if !ds.certificate_holds() {
            return Err(ObjectiveError::NotSeparable);
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.separating_direction.len()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn separating_direction(&self) -> &[f64] {
        &self.separating_direction
    }

    /// `y_i <x_i, u> > 0` for every row, with `u` the recorded direction.
    pub fn certificate_holds(&self) -> bool {
        self.features.iter().zip(&self.labels).all(|(x, y)| {
            let margin: f64 = x.iter().zip(&self.separating_direction).map(|(a, b)| a * b).sum();
            y * margin > 0.0
        })
    }

    /// Delimited export: one row per point, label first, then the features,
    /// full double precision.
    pub fn to_delimited(&self) -> String {
        let mut out = String::new();
        for (x, y) in self.features.iter().zip(&self.labels) {
            out.push_str(if *y > 0.0 { "1" } else { "-1" });
            for v in x {
                // 17 significant digits: round-trip exact for f64
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`Self::to_delimited`] output; separability is re-verified
    /// along the first coordinate axis.
    pub fn from_delimited(text: &str) -> Result<Self, ObjectiveError> {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut dim = None;
        for (row, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let label: f64 = fields
                .next()
                .unwrap()
                .trim()
                .parse()
                .map_err(|e| ObjectiveError::BadRow { row, problem: format!("label: {e}") })?;
            let mut x = Vec::new();
            for f in fields {
                x.push(f.trim().parse::<f64>().map_err(|e| ObjectiveError::BadRow {
                    row,
                    problem: format!("feature: {e}"),
                })?);
            }
            match dim {
                None => dim = Some(x.len()),
                Some(d) if d != x.len() => {
                    return Err(ObjectiveError::BadRow {
                        row,
                        problem: format!("expected {d} features, got {}", x.len()),
                    })
                }
                _ => {}
            }
            features.push(x);
            labels.push(label);
        }
        let d = dim.ok_or(ObjectiveError::EmptyDataset)?;
        if d == 0 {
            return Err(ObjectiveError::EmptyDataset);
        }
        let mut e1 = vec![0.0; d];
        e1[0] = 1.0;
        Self::new(features, labels, e1)
    }
}

/// Two-cluster Gaussian mixture: class `+1` centered at `+margin*e1`, class
/// `-1` at `-margin*e1`, unit covariance. Points landing too close to the
/// boundary are reflected about their class center's first coordinate until
/// `y <x, e1> >= margin/10`, so the output is always linearly separable
/// along `e1`. Deterministic given the seed.
pub fn gaussian_mixture_data(
    n_per_class: usize,
    dim: usize,
    margin: f64,
    seed: u64,
) -> Result<LabeledDataset, ObjectiveError> {
    if n_per_class == 0 || dim == 0 {
        return Err(ObjectiveError::EmptyDataset);
    }
    if !(margin > 0.0) {
        return Err(ObjectiveError::Invalid(format!("margin must be positive, got {margin}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(2 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for &label in &[1.0f64, -1.0] {
        for _ in 0..n_per_class {
            let mut x: Vec<f64> =
                (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            x[0] += label * margin;
            while label * x[0] < margin / 10.0 {
                x[0] = 2.0 * label * margin - x[0];
            }
            features.push(x);
            labels.push(label);
        }
    }
    let mut e1 = vec![0.0; dim];
    e1[0] = 1.0;
    LabeledDataset::new(features, labels, e1)
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow for large `|z|`.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest eigenvalue of the Gram matrix `sum_i x_i x_i^T`.
fn gram_max_eigenvalue(data: &LabeledDataset) -> f64 {
    let d = data.dim();
    let mut gram = DMatrix::<f64>::zeros(d, d);
    for x in data.features() {
        for i in 0..d {
            for j in 0..d {
                gram[(i, j)] += x[i] * x[j];
            }
        }
    }
    gram.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0f64, f64::max)
}

/// Regularized logistic loss
/// `f(w) = sum_i log(1 + exp(-y_i <x_i, w>)) + (gamma/2) |w|^2`.
///
/// `mu = gamma` (the loss is at least `gamma`-strongly convex) and
/// `L = gamma + (1/4) lambda_max(sum_i x_i x_i^T)` as the analytic default,
/// which the harness scan may override. The optimum is located by a damped
/// Newton refinement and then verified by [`solve_optimum`].
pub fn logistic(data: &LabeledDataset, gamma: f64) -> Result<Objective, ObjectiveError> {
    if data.is_empty() {
        return Err(ObjectiveError::EmptyDataset);
    }
    if !(gamma > 0.0) {
        return Err(ObjectiveError::Invalid(format!("gamma must be positive, got {gamma}")));
    }
    let smoothness = gamma + 0.25 * gram_max_eigenvalue(data);
    let shared = Arc::new(data.clone());
    let d1 = Arc::clone(&shared);
    let d2 = Arc::clone(&shared);
    let value = Arc::new(move |w: &[f64]| {
        let mut acc = 0.0;
        for (x, y) in d1.features().iter().zip(d1.labels()) {
            acc += softplus(-y * dot(x, w));
        }
        acc + 0.5 * gamma * dot(w, w)
    });
    let gradient = Arc::new(move |w: &[f64]| {
        let mut g: Vec<f64> = w.iter().map(|wi| gamma * wi).collect();
        for (x, y) in d2.features().iter().zip(d2.labels()) {
            let coef = -y * sigmoid(-y * dot(x, w));
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi += coef * xi;
            }
        }
        g
    });
    let obj = Objective::new(data.dim(), gamma, smoothness, value, gradient)?;
    let warm = newton_refine(data, gamma, &vec![0.0; data.dim()]);
    let optimum = solve_optimum(&obj, &warm, SOLVE_OPTIMUM_TOL, SOLVE_OPTIMUM_MAX_ITERS)?;
    Ok(obj.with_optimum(optimum))
}

/// Damped Newton iteration on the logistic loss; the Hessian
/// `sum_i s_i (1 - s_i) x_i x_i^T + gamma I` is positive definite, so the
/// Cholesky solve always succeeds.
fn newton_refine(data: &LabeledDataset, gamma: f64, w0: &[f64]) -> Vec<f64> {
    let d = data.dim();
    let value = |w: &[f64]| {
        data.features()
            .iter()
            .zip(data.labels())
            .map(|(x, y)| softplus(-y * dot(x, w)))
            .sum::<f64>()
            + 0.5 * gamma * dot(w, w)
    };
    let mut w = w0.to_vec();
    let mut fw = value(&w);
    for _ in 0..80 {
        let mut grad = DVector::from_iterator(d, w.iter().map(|wi| gamma * wi));
        let mut hess = DMatrix::from_diagonal_element(d, d, gamma);
        for (x, y) in data.features().iter().zip(data.labels()) {
            let z = -y * dot(x, &w);
            let s = sigmoid(z);
            let coef = -y * s;
            let curve = s * (1.0 - s);
            for i in 0..d {
                grad[i] += coef * x[i];
                for j in 0..d {
                    hess[(i, j)] += curve * x[i] * x[j];
                }
            }
        }
        let grad_norm = grad.norm();
        if grad_norm <= 1e-14 * data.len() as f64 {
            break;
        }
        let Some(chol) = Cholesky::new(hess) else { break };
        let step = chol.solve(&grad);
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let trial: Vec<f64> = w.iter().zip(step.iter()).map(|(wi, si)| wi - scale * si).collect();
            let ft = value(&trial);
            if ft <= fw {
                w = trial;
                fw = ft;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
    }
    w
}

/// Gradient descent with step `1/L` from `x0` until
/// `|grad f| <= tol * max(1, L)`; returns the point and value. This is the
/// stationarity oracle behind every cached optimum.
pub fn solve_optimum(
    objective: &Objective,
    x0: &[f64],
    tol: f64,
    max_iters: u64,
) -> Result<Optimum, ObjectiveError> {
    let threshold = tol * objective.smoothness().max(1.0);
    let step = 1.0 / objective.smoothness();
    let mut x = x0.to_vec();
    let mut g = objective.gradient(&x);
    for _ in 0..max_iters {
        let norm = dot(&g, &g).sqrt();
        if !norm.is_finite() {
            return Err(ObjectiveError::NonConvergence { grad_norm: norm });
        }
        if norm <= threshold {
            return Ok(Optimum { f: objective.value(&x), x });
        }
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= step * gi;
        }
        g = objective.gradient(&x);
    }
    Err(ObjectiveError::NonConvergence { grad_norm: dot(&g, &g).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn finite_difference_gradient(obj: &Objective, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        for i in 0..x.len() {
            let eps = 1e-6 * (1.0 + x[i].abs());
            xp[i] = x[i] + eps;
            xm[i] = x[i] - eps;
            g[i] = (obj.value(&xp) - obj.value(&xm)) / (2.0 * eps);
            xp[i] = x[i];
            xm[i] = x[i];
        }
        g
    }

    fn assert_gradient_consistent(obj: &Objective, seed: u64, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let x: Vec<f64> = (0..obj.dim()).map(|_| rng.gen_range(-scale..scale)).collect();
            let g = obj.gradient(&x);
            let fd = finite_difference_gradient(obj, &x);
            let num: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let den: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1.0);
            assert!(num / den < 1e-6, "gradient mismatch {num} vs scale {den}");
        }
    }

    #[test]
    fn quadratic_by_hand() {
        let q = quadratic(&[1.0]).unwrap();
        assert_eq!(q.value(&[2.0]), 4.0);
        assert_eq!(q.gradient(&[2.0]), vec![4.0]);
        assert_eq!(q.gradient(&[0.0]), vec![0.0]);
        assert_eq!(q.mu(), 2.0);
        assert_eq!(q.smoothness(), 2.0);
    }

    #[test]
    fn log_spaced_condition_number() {
        let q = quadratic_log_spaced(50, 500.0).unwrap();
        assert_relative_eq!(q.condition_number(), 500.0, max_relative = 1e-12);
        assert_eq!(q.dim(), 50);
        let opt = q.optimum().unwrap();
        assert_eq!(opt.f, 0.0);
        assert!(opt.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nonpositive_lambda_is_rejected() {
        assert!(matches!(
            quadratic(&[1.0, 0.0]),
            Err(ObjectiveError::NonPositiveLambda { index: 1, .. })
        ));
        assert!(quadratic(&[1.0, -2.0]).is_err());
    }

    #[test]
    fn quadratic_gradient_matches_finite_differences() {
        let q = quadratic_log_spaced(8, 100.0).unwrap();
        assert_gradient_consistent(&q, 7, 3.0);
    }

    #[test]
    fn mixture_minimal_case_has_opposite_signs() {
        let ds = gaussian_mixture_data(1, 1, 10.0, 3).unwrap();
        assert_eq!(ds.len(), 2);
        let signs: Vec<f64> = ds.features().iter().map(|x| x[0].signum()).collect();
        assert_eq!(signs[0], 1.0);
        assert_eq!(signs[1], -1.0);
        assert_eq!(ds.labels(), &[1.0, -1.0]);
    }

    #[test]
    fn mixture_is_separable_and_deterministic() {
        let a = gaussian_mixture_data(100, 20, 5.0, 42).unwrap();
        let b = gaussian_mixture_data(100, 20, 5.0, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.certificate_holds());
        for (x, y) in a.features().iter().zip(a.labels()) {
            assert!(y * x[0] >= 5.0 / 10.0, "repair floor violated: {}", y * x[0]);
        }
        let c = gaussian_mixture_data(100, 20, 5.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn dataset_round_trips_through_delimited_text() {
        let ds = gaussian_mixture_data(10, 4, 2.0, 9).unwrap();
        let text = ds.to_delimited();
        let back = LabeledDataset::from_delimited(&text).unwrap();
        assert_eq!(back.features(), ds.features());
        assert_eq!(back.labels(), ds.labels());
    }

    #[test]
    fn dataset_import_rejects_bad_rows() {
        assert!(matches!(
            LabeledDataset::from_delimited("2,0.5\n"),
            Err(ObjectiveError::BadLabel { .. })
        ));
        assert!(matches!(
            LabeledDataset::from_delimited("1,0.5\n-1,0.5,0.2\n"),
            Err(ObjectiveError::BadRow { row: 1, .. })
        ));
        assert!(matches!(LabeledDataset::from_delimited(""), Err(ObjectiveError::EmptyDataset)));
        // +1 point on the negative side of e1
        assert!(matches!(
            LabeledDataset::from_delimited("1,-0.5\n-1,-0.7\n"),
            Err(ObjectiveError::NotSeparable)
        ));
    }

    fn small_logistic() -> (LabeledDataset, Objective) {
        let ds = gaussian_mixture_data(20, 5, 3.0, 11).unwrap();
        let obj = logistic(&ds, 0.1).unwrap();
        (ds, obj)
    }

    #[test]
    fn logistic_value_at_zero_is_n_log2() {
        let (ds, obj) = small_logistic();
        let w = vec![0.0; obj.dim()];
        assert_relative_eq!(obj.value(&w), ds.len() as f64 * 2.0f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn logistic_gradient_matches_finite_differences() {
        let (_, obj) = small_logistic();
        assert_gradient_consistent(&obj, 13, 2.0);
    }

    #[test]
    fn logistic_constants_and_optimum() {
        let (_, obj) = small_logistic();
        assert_eq!(obj.mu(), 0.1);
        assert!(obj.smoothness() > obj.mu());
        let opt = obj.optimum().unwrap();
        let g = obj.gradient(&opt.x);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1e-9 * obj.smoothness().max(1.0), "stationarity residual {norm:e}");
    }

    #[test]
    fn large_regularization_pins_the_optimum_near_zero() {
        let ds = gaussian_mixture_data(10, 3, 4.0, 5).unwrap();
        let gamma = 1000.0;
        let obj = logistic(&ds, gamma).unwrap();
        let opt = obj.optimum().unwrap();
        let norm = opt.x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let max_feature = ds
            .features()
            .iter()
            .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0f64, f64::max);
        assert!(norm <= ds.len() as f64 * max_feature / gamma);
    }

    #[test]
    fn solve_optimum_recovers_the_quadratic_minimum() {
        let q = quadratic(&[0.5, 2.0, 1.0]).unwrap();
        let opt = solve_optimum(&q, &[3.0, -1.0, 0.5], 1e-12, 1_000_000).unwrap();
        for v in &opt.x {
            assert!(v.abs() < 1e-11);
        }
        assert!(opt.f < 1e-20);
    }

    #[test]
    fn solve_optimum_is_idempotent_at_the_optimum() {
        let q = quadratic(&[1.0, 3.0]).unwrap();
        let first = solve_optimum(&q, &[1.0, 1.0], 1e-12, 1_000_000).unwrap();
        let again = solve_optimum(&q, &first.x, 1e-12, 5).unwrap();
        assert_eq!(again.x, first.x);
    }

    #[test]
    fn solve_optimum_reports_budget_exhaustion() {
        let q = quadratic_log_spaced(4, 1000.0).unwrap();
        assert!(matches!(
            solve_optimum(&q, &[1.0, 1.0, 1.0, 1.0], 1e-12, 3),
            Err(ObjectiveError::NonConvergence { .. })
        ));
    }

    #[test]
    fn symmetric_logistic_stationarity() {
        // two symmetric points x = +-a with labels +-1: the optimum solves
        // gamma t = 2 a sigmoid(-a t) by symmetry; check the residual instead
        let ds = LabeledDataset::new(vec![vec![2.0], vec![-2.0]], vec![1.0, -1.0], vec![1.0]).unwrap();
        let obj = logistic(&ds, 0.5).unwrap();
        let opt = obj.optimum().unwrap();
        let g = obj.gradient(&opt.x);
        assert!(g[0].abs() <= 1e-9);
        assert!(opt.x[0] > 0.0);
    }

    fn spot_check_assumptions(obj: &Objective, seed: u64, samples: usize, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let opt = obj.optimum().unwrap().clone();
        let slack = 1e-8;
        for _ in 0..samples {
            let x: Vec<f64> = (0..obj.dim()).map(|_| rng.gen_range(-scale..scale)).collect();
            let y: Vec<f64> = (0..obj.dim()).map(|_| rng.gen_range(-scale..scale)).collect();
            let fx = obj.value(&x);
            let gx = obj.gradient(&x);
            // quasi-strong convexity against the optimum
            let inner: f64 = gx.iter().zip(opt.x.iter().zip(&x)).map(|(g, (o, xi))| g * (o - xi)).sum();
            let dist2: f64 = x.iter().zip(&opt.x).map(|(a, b)| (a - b) * (a - b)).sum();
            let rhs = fx + inner + 0.5 * obj.mu() * dist2;
            assert!(opt.f >= rhs - slack * fx.abs().max(1.0), "quasi-strong convexity violated");
            // smoothness
            let gy = obj.gradient(&y);
            let gd: f64 = gx.iter().zip(&gy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let xd: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert!(gd <= obj.smoothness() * xd * (1.0 + slack), "smoothness violated");
            // gradient-norm bound through the optimum value
            let g2: f64 = gx.iter().map(|v| v * v).sum();
            assert!(
                g2 <= 2.0 * obj.smoothness() * (fx - opt.f) * (1.0 + slack) + slack,
                "gradient bound violated"
            );
        }
    }

    #[test]
    fn assumption_spot_checks_hold() {
        let q = quadratic_log_spaced(10, 50.0).unwrap();
        spot_check_assumptions(&q, 17, 200, 5.0);
        let (_, obj) = small_logistic();
        spot_check_assumptions(&obj, 19, 200, 3.0);
    }
}
