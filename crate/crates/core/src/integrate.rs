//! Fixed-step explicit Runge-Kutta integration and a step-halving reference
//! solver used as the truth oracle in order and contraction checks.

use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::tableau::ButcherTableau;

/// A state whose max-norm exceeds this bound counts as diverged. The
/// stability scan deliberately drives unstable steps, so divergence must be
/// detected before the floats overflow to infinity.
pub const DIVERGENCE_NORM_BOUND: f64 = 1e100;

/// Step-count ceiling for the reference solver's halving loop.
const REFERENCE_MAX_STEPS: u64 = 1 << 22;

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("non-finite value at stage {stage}")]
    NonFiniteStage { stage: usize },
    #[error("state diverged at step {step}")]
    Diverged { step: u64 },
    #[error("reference solver did not converge after {refinements} refinements (last diff {last_diff:e})")]
    ReferenceNotConverged { refinements: u32, last_diff: f64 },
    #[error("tolerance {tol:e} is below the reference solver floor 1e-13")]
    ToleranceTooTight { tol: f64 },
    #[error(transparent)]
    Field(#[from] DynamicsError),
}

/// A fixed-step integration record: iterates, their times, and the cumulative
/// number of field evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub grad_evals: Vec<u64>,
}

impl Trajectory {
    fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            states: Vec::with_capacity(n),
            grad_evals: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, t: f64, y: Vec<f64>, evals: u64) {
        self.times.push(t);
        self.states.push(y);
        self.grad_evals.push(evals);
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

/// A fixed-step run that aborted; the trajectory holds every iterate up to
/// the last finite one.
#[derive(Debug)]
pub struct IntegrationAbort {
    pub partial: Trajectory,
    pub error: IntegrateError,
}

fn max_abs(y: &[f64]) -> f64 {
    y.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn all_finite(y: &[f64]) -> bool {
    y.iter().all(|v| v.is_finite())
}

/// One explicit RK step: stage points `g_i = y + h sum_{j<i} a_ij F(g_j)`,
/// result `y + h sum_i b_i F(g_i)`. Exactly `S` field evaluations.
pub fn rk_step<F>(
    tableau: &ButcherTableau,
    field: &mut F,
    y: &[f64],
    h: f64,
) -> Result<Vec<f64>, IntegrateError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, IntegrateError>,
{
    let s = tableau.stages();
    let d = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut g = vec![0.0; d];
    for i in 0..s {
        g.copy_from_slice(y);
        for (j, kj) in k.iter().enumerate() {
            let aij = tableau.a(i, j);
            if aij != 0.0 {
                for (gv, kv) in g.iter_mut().zip(kj) {
                    *gv += h * aij * kv;
                }
            }
        }
        if !all_finite(&g) {
            return Err(IntegrateError::NonFiniteStage { stage: i });
        }
        let ki = field(&g)?;
        if !all_finite(&ki) {
            return Err(IntegrateError::NonFiniteStage { stage: i });
        }
        k.push(ki);
    }
    let mut out = y.to_vec();
    for (i, ki) in k.iter().enumerate() {
        let bi = tableau.b()[i];
        if bi != 0.0 {
            for (ov, kv) in out.iter_mut().zip(ki) {
                *ov += h * bi * kv;
            }
        }
    }
    Ok(out)
}

/// `n` repeated steps of size `h`, recording every iterate and the running
/// evaluation count (`S` per step). Divergence aborts with the partial
/// trajectory attached.
pub fn integrate_n<F>(
    tableau: &ButcherTableau,
    field: &mut F,
    y0: &[f64],
    h: f64,
    n: u64,
) -> Result<Trajectory, IntegrationAbort>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, IntegrateError>,
{
    let s = tableau.stages() as u64;
    let mut traj = Trajectory::with_capacity(n as usize + 1);
    traj.push(0.0, y0.to_vec(), 0);
    let mut y = y0.to_vec();
    for step in 1..=n {
        match rk_step(tableau, field, &y, h) {
            Ok(next) => {
                if !all_finite(&next) || max_abs(&next) > DIVERGENCE_NORM_BOUND {
                    return Err(IntegrationAbort {
                        partial: traj,
                        error: IntegrateError::Diverged { step },
                    });
                }
                y = next;
                traj.push(step as f64 * h, y.clone(), step * s);
            }
            Err(error) => return Err(IntegrationAbort { partial: traj, error }),
        }
    }
    Ok(traj)
}

/// High-accuracy endpoint oracle: integrates with the classical RK4 tableau,
/// halving the step until two successive answers agree to `tol` in max-norm,
/// and returns the finer answer. Unstable coarse grids are skipped; the step
/// budget bounds the search.
pub fn reference_solve<F>(
    field: &mut F,
    y0: &[f64],
    t_end: f64,
    tol: f64,
) -> Result<Vec<f64>, IntegrateError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, IntegrateError>,
{
    if tol < 1e-13 {
        return Err(IntegrateError::ToleranceTooTight { tol });
    }
    if t_end == 0.0 {
        return Ok(y0.to_vec());
    }
    let rk4 = ButcherTableau::rk4_classic();
    let mut n: u64 = ((t_end / 0.05).ceil() as u64).max(1);
    let mut prev: Option<Vec<f64>> = None;
    let mut refinements = 0;
    let mut last_diff = f64::INFINITY;
    while n <= REFERENCE_MAX_STEPS {
        match integrate_n(&rk4, field, y0, t_end / n as f64, n) {
            Ok(traj) => {
                let cur = traj.last_state().to_vec();
                if let Some(p) = &prev {
                    last_diff = p.iter().zip(&cur).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    if last_diff < tol {
                        return Ok(cur);
                    }
                }
                prev = Some(cur);
            }
            Err(_) => {
                prev = None;
            }
        }
        n *= 2;
        refinements += 1;
    }
    Err(IntegrateError::ReferenceNotConverged { refinements, last_diff })
}
