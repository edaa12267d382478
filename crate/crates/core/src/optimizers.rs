//! Optimizers with uniform traces: direct Runge-Kutta discretization of the
//! rescaled heavy-ball system, gradient descent and Nesterov baselines, the
//! step-size stability scan, and the rate-constant calibration utility.

use thiserror::Error;

use crate::dynamics::{lyapunov_flat, vector_field_flat, ConditionedProblem, DynamicsError, HeavyBallState};
use crate::integrate::{rk_step, IntegrateError, DIVERGENCE_NORM_BOUND};
use crate::objectives::Objective;
use crate::tableau::ButcherTableau;

/// Probe length used by scan policies constructed without an explicit value.
pub const DEFAULT_SCAN_PROBE_ITERS: u64 = 100;

/// Calibration tries `c = 1, 2, 4, ...` up to this power of two.
const CALIBRATION_MAX_DOUBLINGS: u32 = 34;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("optimizer traces require the objective's optimum; solve it first")]
    MissingOptimum,
    #[error("step size must be positive, got {h}")]
    BadStep { h: f64 },
    #[error("x0 has length {got}, objective dimension is {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("empty scan range: z_min {z_min} > z_max {z_max}")]
    EmptyScanRange { z_min: i32, z_max: i32 },
    #[error("no stable step size in 10^[{z_min}..{z_max}]")]
    ScanFailed { z_min: i32, z_max: i32, verdicts: Vec<ZVerdict> },
    #[error("per-step contraction never held up to c = 2^{max_doublings}")]
    CalibrationFailed { max_doublings: u32 },
    #[error("calibration run exhausted its budget before reaching the target (c = {c})")]
    CalibrationBudget { c: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// How an optimizer run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    BudgetExhausted,
    Diverged,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Outcome::Converged => write!(f, "converged"),
            Outcome::BudgetExhausted => write!(f, "budget_exhausted"),
            Outcome::Diverged => write!(f, "diverged"),
        }
    }
}

/// One per-iteration convergence record.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: u64,
    /// Cumulative gradient evaluations after this iteration.
    pub grad_evals: u64,
    /// `f(x_k) - f*`.
    pub f_gap: f64,
    /// Lyapunov value, when the run tracks the heavy-ball state.
    pub lyapunov: Option<f64>,
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub outcome: Outcome,
}

impl Trace {
    pub fn initial_f_gap(&self) -> f64 {
        self.records.first().map(|r| r.f_gap).unwrap_or(f64::NAN)
    }

    pub fn final_f_gap(&self) -> f64 {
        self.records.last().map(|r| r.f_gap).unwrap_or(f64::NAN)
    }

    pub fn final_grad_evals(&self) -> u64 {
        self.records.last().map(|r| r.grad_evals).unwrap_or(0)
    }
}

/// Step-size policies for direct discretization.
#[derive(Debug, Clone, PartialEq)]
pub enum StepPolicy {
    /// A fixed step.
    Fixed(f64),
    /// The proved step-size rule with rate constant `c`; see
    /// [`theoretical_step_size`].
    Theorem { c: f64 },
    /// Pick `h = 10^z` with `z` the largest stable integer in the range.
    Scan { z_min: i32, z_max: i32, probe_iters: u64 },
}

impl StepPolicy {
    pub fn scan(z_min: i32, z_max: i32) -> Self {
        StepPolicy::Scan { z_min, z_max, probe_iters: DEFAULT_SCAN_PROBE_ITERS }
    }
}

/// Shared run limits.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Maximum gradient evaluations.
    pub budget: u64,
    /// Stop once `f_gap <= target`.
    pub target: f64,
    /// Record every k-th iteration (the first and last are always kept).
    pub record_stride: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { budget: 1_000_000, target: 1e-9, record_stride: 1 }
    }
}

/// Step size `min(E0^-g, Q^-g) / (2 c^{1/(s+1)})` with `g = (s+3)/(2(s+1))`
/// guaranteeing the per-step Lyapunov contraction `(1 - h/4)` for an order-s
/// method once `c` is large enough.
pub fn theoretical_step_size(e0: f64, q: f64, s: u32, c: f64) -> f64 {
    let s = s as f64;
    let gamma = (s + 3.0) / (2.0 * (s + 1.0));
    let cap = e0.powf(-gamma).min(q.powf(-gamma));
    cap / (2.0 * c.powf(1.0 / (s + 1.0)))
}

/// Online per-step contraction accounting against `E_{k+1} <= (1-h/4) E_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionStats {
    /// The checked factor `1 - h/4`.
    pub rate: f64,
    pub steps: u64,
    pub violations: u64,
    /// Largest observed `E_{k+1}/E_k - rate` (negative when all steps
    /// contract strictly faster).
    pub worst_excess: f64,
}

/// Verdict of one probe in a stability scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ZVerdict {
    pub z: i32,
    pub h: f64,
    pub stable: bool,
    pub outcome: Outcome,
    pub initial_f_gap: f64,
    pub final_f_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutcome {
    pub verdicts: Vec<ZVerdict>,
    pub z: i32,
    pub h: f64,
}

/// A direct-discretization run together with how its step was resolved.
#[derive(Debug, Clone)]
pub struct DdOutcome {
    pub trace: Trace,
    pub step_size: f64,
    /// Present when the policy was `Theorem`.
    pub contraction: Option<ContractionStats>,
    /// Present when the policy was `Scan`.
    pub scan: Option<ScanOutcome>,
}

fn check_x0(objective: &Objective, x0: &[f64]) -> Result<(), OptimizerError> {
    if x0.len() != objective.dim() {
        return Err(OptimizerError::Dimension { got: x0.len(), expected: objective.dim() });
    }
    Ok(())
}

fn f_star(objective: &Objective) -> Result<f64, OptimizerError> {
    Ok(objective.optimum().ok_or(OptimizerError::MissingOptimum)?.f)
}

/// Discretizes the rescaled heavy-ball system with the given explicit RK
/// method from `y0 = [0; x0]`. Each iteration costs `S` gradient
/// evaluations; value evaluations for the trace are not counted.
pub fn direct_discretization(
    problem: &ConditionedProblem,
    x0: &[f64],
    tableau: &ButcherTableau,
    policy: &StepPolicy,
    opts: &RunOptions,
) -> Result<DdOutcome, OptimizerError> {
    check_x0(problem.objective(), x0)?;
    f_star(problem.objective())?;
    match policy {
        StepPolicy::Fixed(h) => {
            if !(*h > 0.0) {
                return Err(OptimizerError::BadStep { h: *h });
            }
            let (trace, _) = dd_fixed(problem, x0, tableau, *h, opts, None, false)?;
            Ok(DdOutcome { trace, step_size: *h, contraction: None, scan: None })
        }
        StepPolicy::Theorem { c } => {
            let y0 = HeavyBallState::at_rest(x0.to_vec()).pack();
            let e0 = lyapunov_flat(&y0, problem)?;
            let h = theoretical_step_size(e0, problem.condition_number(), tableau.claimed_order(), *c);
            let rate = 1.0 - h / 4.0;
            let (trace, stats) = dd_fixed(problem, x0, tableau, h, opts, Some(rate), false)?;
            Ok(DdOutcome { trace, step_size: h, contraction: stats, scan: None })
        }
        StepPolicy::Scan { z_min, z_max, probe_iters } => {
            let stages = tableau.stages() as u64;
            let scan = stability_scan(
                |h, iters| {
                    let probe = RunOptions {
                        budget: iters.saturating_mul(stages),
                        target: opts.target,
                        record_stride: 1,
                    };
                    dd_fixed(problem, x0, tableau, h, &probe, None, false)
                        .map(|(trace, _)| trace)
                },
                *z_min,
                *z_max,
                *probe_iters,
            )?;
            let (trace, _) = dd_fixed(problem, x0, tableau, scan.h, opts, None, false)?;
            Ok(DdOutcome { trace, step_size: scan.h, contraction: None, scan: Some(scan) })
        }
    }
}

/// Fixed-step DD loop. When `contraction_rate` is set, every consecutive
/// Lyapunov pair is checked online; `abort_on_violation` ends the run at the
/// first failed step (used by calibration).
fn dd_fixed(
    problem: &ConditionedProblem,
    x0: &[f64],
    tableau: &ButcherTableau,
    h: f64,
    opts: &RunOptions,
    contraction_rate: Option<f64>,
    abort_on_violation: bool,
) -> Result<(Trace, Option<ContractionStats>), OptimizerError> {
    let d = problem.dim();
    let stages = tableau.stages() as u64;
    let f_star = f_star(problem.objective())?;
    let stride = opts.record_stride.max(1);

    let mut y = HeavyBallState::at_rest(x0.to_vec()).pack();
    let mut field = |v: &[f64]| vector_field_flat(v, problem).map_err(IntegrateError::from);

    let mut records = Vec::new();
    let mut stats = contraction_rate.map(|rate| ContractionStats {
        rate,
        steps: 0,
        violations: 0,
        worst_excess: f64::NEG_INFINITY,
    });

    let mut iteration: u64 = 0;
    let mut grad_evals: u64 = 0;
    let mut f_gap = problem.objective().value(&y[d..]) - f_star;
    let mut energy = lyapunov_flat(&y, problem)?;
    records.push(TraceRecord { iteration, grad_evals, f_gap, lyapunov: Some(energy), step_size: h });

    let outcome = loop {
        if f_gap <= opts.target {
            break Outcome::Converged;
        }
        if grad_evals + stages > opts.budget {
            break Outcome::BudgetExhausted;
        }
        let next = match rk_step(tableau, &mut field, &y, h) {
            Ok(next) => next,
            Err(_) => {
                grad_evals += stages;
                iteration += 1;
                records.push(TraceRecord {
                    iteration,
                    grad_evals,
                    f_gap: f64::NAN,
                    lyapunov: None,
                    step_size: h,
                });
                break Outcome::Diverged;
            }
        };
        grad_evals += stages;
        iteration += 1;
        let finite = next.iter().all(|v| v.is_finite())
            && next.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= DIVERGENCE_NORM_BOUND;
        if !finite {
            records.push(TraceRecord {
                iteration,
                grad_evals,
                f_gap: f64::NAN,
                lyapunov: None,
                step_size: h,
            });
            break Outcome::Diverged;
        }
        y = next;
        f_gap = problem.objective().value(&y[d..]) - f_star;
        let next_energy = lyapunov_flat(&y, problem)?;
        if let Some(s) = stats.as_mut() {
            if energy > 0.0 {
                s.steps += 1;
                let excess = next_energy / energy - s.rate;
                s.worst_excess = s.worst_excess.max(excess);
                if excess > 0.0 {
                    s.violations += 1;
                    if abort_on_violation {
                        energy = next_energy;
                        records.push(TraceRecord {
                            iteration,
                            grad_evals,
                            f_gap,
                            lyapunov: Some(next_energy),
                            step_size: h,
                        });
                        break Outcome::BudgetExhausted;
                    }
                }
            }
        }
        energy = next_energy;
        if !f_gap.is_finite() {
            records.push(TraceRecord {
                iteration,
                grad_evals,
                f_gap,
                lyapunov: Some(energy),
                step_size: h,
            });
            break Outcome::Diverged;
        }
        if iteration % stride == 0 || f_gap <= opts.target {
            records.push(TraceRecord {
                iteration,
                grad_evals,
                f_gap,
                lyapunov: Some(energy),
                step_size: h,
            });
        }
    };

    // keep the terminal iterate even when the stride skipped it
    if records.last().map(|r| r.iteration) != Some(iteration) {
        records.push(TraceRecord {
            iteration,
            grad_evals,
            f_gap,
            lyapunov: Some(energy),
            step_size: h,
        });
    }
    Ok((Trace { records, outcome }, stats))
}

/// Plain gradient descent `x <- x - h grad f(x)`; one gradient per
/// iteration. The standard parameter choice is `h = 1/L`.
pub fn gradient_descent(
    objective: &Objective,
    x0: &[f64],
    h: f64,
    opts: &RunOptions,
) -> Result<Trace, OptimizerError> {
    if !(h > 0.0) {
        return Err(OptimizerError::BadStep { h });
    }
    check_x0(objective, x0)?;
    let f_star = f_star(objective)?;
    let stride = opts.record_stride.max(1);

    let mut x = x0.to_vec();
    let mut records = Vec::new();
    let mut iteration: u64 = 0;
    let mut grad_evals: u64 = 0;
    let mut f_gap = objective.value(&x) - f_star;
    records.push(TraceRecord { iteration, grad_evals, f_gap, lyapunov: None, step_size: h });

    let outcome = loop {
        if f_gap <= opts.target {
            break Outcome::Converged;
        }
        if grad_evals + 1 > opts.budget {
            break Outcome::BudgetExhausted;
        }
        let g = objective.gradient(&x);
        grad_evals += 1;
        iteration += 1;
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= h * gi;
        }
        f_gap = objective.value(&x) - f_star;
        let finite = f_gap.is_finite()
            && x.iter().all(|v| v.is_finite())
            && x.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= DIVERGENCE_NORM_BOUND;
        if !finite {
            records.push(TraceRecord {
                iteration,
                grad_evals,
                f_gap: if f_gap.is_finite() { f_gap } else { f64::NAN },
                lyapunov: None,
                step_size: h,
            });
            break Outcome::Diverged;
        }
        if iteration % stride == 0 || f_gap <= opts.target {
            records.push(TraceRecord { iteration, grad_evals, f_gap, lyapunov: None, step_size: h });
        }
    };

    if records.last().map(|r| r.iteration) != Some(iteration) {
        records.push(TraceRecord { iteration, grad_evals, f_gap, lyapunov: None, step_size: h });
    }
    Ok(Trace { records, outcome })
}

/// Nesterov's accelerated gradient in the constant-momentum strongly convex
/// form with step `1/L` and momentum `(sqrt(Q)-1)/(sqrt(Q)+1)`; one gradient
/// per iteration, evaluated at the lookahead point.
pub fn nag(
    objective: &Objective,
    x0: &[f64],
    smoothness: f64,
    mu: f64,
    opts: &RunOptions,
) -> Result<Trace, OptimizerError> {
    if !(smoothness >= mu && mu > 0.0) {
        return Err(OptimizerError::BadStep { h: 1.0 / smoothness });
    }
    check_x0(objective, x0)?;
    let f_star = f_star(objective)?;
    let stride = opts.record_stride.max(1);

    let h = 1.0 / smoothness;
    let sq = (smoothness / mu).sqrt();
    let beta = (sq - 1.0) / (sq + 1.0);

    let mut x = x0.to_vec();
    let mut z = x0.to_vec();
    let mut records = Vec::new();
    let mut iteration: u64 = 0;
    let mut grad_evals: u64 = 0;
    let mut f_gap = objective.value(&x) - f_star;
    records.push(TraceRecord { iteration, grad_evals, f_gap, lyapunov: None, step_size: h });

    let outcome = loop {
        if f_gap <= opts.target {
            break Outcome::Converged;
        }
        if grad_evals + 1 > opts.budget {
            break Outcome::BudgetExhausted;
        }
        let g = objective.gradient(&z);
        grad_evals += 1;
        iteration += 1;
        let x_next: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - h * gi).collect();
        let z_next: Vec<f64> = x_next
            .iter()
            .zip(&x)
            .map(|(xn, xo)| xn + beta * (xn - xo))
            .collect();
        x = x_next;
        z = z_next;
        f_gap = objective.value(&x) - f_star;
        let finite = f_gap.is_finite()
            && x.iter().all(|v| v.is_finite())
            && x.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= DIVERGENCE_NORM_BOUND;
        if !finite {
            records.push(TraceRecord {
                iteration,
                grad_evals,
                f_gap: if f_gap.is_finite() { f_gap } else { f64::NAN },
                lyapunov: None,
                step_size: h,
            });
            break Outcome::Diverged;
        }
        if iteration % stride == 0 || f_gap <= opts.target {
            records.push(TraceRecord { iteration, grad_evals, f_gap, lyapunov: None, step_size: h });
        }
    };

    if records.last().map(|r| r.iteration) != Some(iteration) {
        records.push(TraceRecord { iteration, grad_evals, f_gap, lyapunov: None, step_size: h });
    }
    Ok(Trace { records, outcome })
}

/// A probe trace is stable when it stayed finite and its final suboptimality
/// strictly improved on the initial one.
pub fn trace_is_stable(trace: &Trace) -> bool {
    if trace.outcome == Outcome::Diverged {
        return false;
    }
    if trace.records.iter().any(|r| !r.f_gap.is_finite()) {
        return false;
    }
    trace.final_f_gap() < trace.initial_f_gap()
}

/// Scans `h = 10^z` from `z_max` down to `z_min`, probing each step size for
/// `probe_iters` iterations, and selects the largest stable `z`. Divergence
/// during a probe is an expected verdict, not an error. Every `z` in the
/// range is probed so the report is complete; the selected value equals the
/// maximum over the stable set, so probe order cannot change it.
pub fn stability_scan<R>(
    mut run: R,
    z_min: i32,
    z_max: i32,
    probe_iters: u64,
) -> Result<ScanOutcome, OptimizerError>
where
    R: FnMut(f64, u64) -> Result<Trace, OptimizerError>,
{
    if z_min > z_max {
        return Err(OptimizerError::EmptyScanRange { z_min, z_max });
    }
    let mut verdicts = Vec::new();
    let mut selected: Option<(i32, f64)> = None;
    for z in (z_min..=z_max).rev() {
        let h = 10f64.powi(z);
        let trace = run(h, probe_iters)?;
        let stable = trace_is_stable(&trace);
        verdicts.push(ZVerdict {
            z,
            h,
            stable,
            outcome: trace.outcome,
            initial_f_gap: trace.initial_f_gap(),
            final_f_gap: trace.final_f_gap(),
        });
        if stable && selected.is_none() {
            selected = Some((z, h));
        }
    }
    match selected {
        Some((z, h)) => Ok(ScanOutcome { verdicts, z, h }),
        None => Err(OptimizerError::ScanFailed { z_min, z_max, verdicts }),
    }
}

/// Result of [`calibrate_theorem_constant`].
#[derive(Debug, Clone)]
pub struct Calibration {
    /// Smallest power of two for which every step contracted.
    pub c: f64,
    pub step_size: f64,
    pub stats: ContractionStats,
    pub trace: Trace,
}

/// Finds the smallest `c = 2^k` for which the theorem-policy run satisfies
/// the per-step contraction `E_{k+1} <= (1 - h/4) E_k` all the way to the
/// target. The rate constant is not known in closed form, so it is measured
/// on the problem at hand and reported.
pub fn calibrate_theorem_constant(
    problem: &ConditionedProblem,
    x0: &[f64],
    tableau: &ButcherTableau,
    opts: &RunOptions,
) -> Result<Calibration, OptimizerError> {
    check_x0(problem.objective(), x0)?;
    let y0 = HeavyBallState::at_rest(x0.to_vec()).pack();
    let e0 = lyapunov_flat(&y0, problem)?;
    let q = problem.condition_number();
    let mut c = 1.0f64;
    for _ in 0..=CALIBRATION_MAX_DOUBLINGS {
        let h = theoretical_step_size(e0, q, tableau.claimed_order(), c);
        let rate = 1.0 - h / 4.0;
        let (trace, stats) = dd_fixed(problem, x0, tableau, h, opts, Some(rate), true)?;
        let stats = stats.expect("contraction stats are tracked");
        if stats.violations == 0 {
            match trace.outcome {
                Outcome::Converged => {
                    return Ok(Calibration { c, step_size: h, stats, trace });
                }
                _ => return Err(OptimizerError::CalibrationBudget { c }),
            }
        }
        c *= 2.0;
    }
    Err(OptimizerError::CalibrationFailed { max_doublings: CALIBRATION_MAX_DOUBLINGS })
}
