//! Rooted trees, elementary differentials and Runge-Kutta order conditions.
//!
//! A tableau has order `s` when, for every rooted tree `t` with at most `s`
//! nodes, its elementary weight matches `1/density(t)`. This module certifies
//! orders both algebraically (exact tree conditions) and empirically (the
//! log-log slope of the global error against a high-accuracy reference).

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

use crate::integrate::{integrate_n, reference_solve, IntegrateError};
use crate::tableau::ButcherTableau;

/// Largest tree order the enumerator serves (115 trees at order 8).
pub const TREE_ORDER_CAP: usize = 8;

/// Tolerance for the algebraic order conditions `|weight - 1/density|`.
pub const ORDER_CONDITION_TOL: f64 = 1e-10;

/// Step halvings `h = t_end / 2^k` used by [`measured_order`].
const MEASURED_ORDER_HALVINGS: std::ops::RangeInclusive<u32> = 3..=8;

/// Errors whose magnitude falls below `NOISE_FLOOR * scale` are dropped from
/// the slope fit; they sit at the reference solver's accuracy.
const MEASURED_ORDER_NOISE_FLOOR: f64 = 1e-11;

#[derive(Debug, Error)]
pub enum OrderError {
    #[error("tree order {q} exceeds the enumeration cap {cap}")]
    CapExceeded { q: usize, cap: usize },
    #[error("tree order must be at least 1")]
    ZeroOrder,
    #[error("oracle supports derivatives up to order {supported}, tree needs {needed}")]
    OracleOrderExceeded { needed: usize, supported: usize },
    #[error("all step sizes produced errors at the floating-point noise floor; order is indeterminate")]
    IndeterminateOrder,
    #[error(transparent)]
    Integration(#[from] IntegrateError),
}

/// An unordered rooted tree in canonical form: children are kept sorted by a
/// deterministic total order (node count first, then recursive lexicographic
/// comparison, larger subtrees first), so structural equality is tree
/// isomorphism.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct RootedTree {
    order: usize,
    children: Vec<RootedTree>,
}

impl RootedTree {
    /// The single-node tree.
    pub fn leaf() -> Self {
        Self { order: 1, children: Vec::new() }
    }

    /// A root adopting the given subtrees; children are canonicalized.
    pub fn node(mut children: Vec<RootedTree>) -> Self {
        children.sort_by(|a, b| b.cmp(a));
        let order = 1 + children.iter().map(|c| c.order).sum::<usize>();
        Self { order, children }
    }

    /// The path tree with `k` nodes.
    pub fn chain(k: usize) -> Self {
        assert!(k >= 1);
        let mut t = Self::leaf();
        for _ in 1..k {
            t = Self::node(vec![t]);
        }
        t
    }

    /// Node count `|t|`.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn children(&self) -> &[RootedTree] {
        &self.children
    }

    /// Largest out-degree over all nodes; the tensor order an oracle must
    /// support to evaluate this tree's elementary differential.
    pub fn max_out_degree(&self) -> usize {
        self.children
            .iter()
            .map(RootedTree::max_out_degree)
            .max()
            .unwrap_or(0)
            .max(self.children.len())
    }
}

impl Ord for RootedTree {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order
            .cmp(&other.order)
            .then_with(|| self.children.cmp(&other.children))
    }
}

impl PartialOrd for RootedTree {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for RootedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.children.is_empty() {
            return write!(f, "\u{2022}");
        }
        write!(f, "[")?;
        for (i, c) in self.children.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "]")
    }
}

/// All non-isomorphic rooted trees with exactly `q` nodes, sorted, no
/// duplicates.
pub fn enumerate_trees(q: usize) -> Result<Vec<RootedTree>, OrderError> {
    if q == 0 {
        return Err(OrderError::ZeroOrder);
    }
    if q > TREE_ORDER_CAP {
        return Err(OrderError::CapExceeded { q, cap: TREE_ORDER_CAP });
    }
    let mut levels: Vec<Vec<RootedTree>> = vec![vec![RootedTree::leaf()]];
    for n in 2..=q {
        // pool of all smaller trees; children are picked as a non-increasing
        // sequence of pool indices so each multiset appears exactly once
        let pool: Vec<RootedTree> = levels.iter().flatten().cloned().collect();
        let mut out = Vec::new();
        let mut current = Vec::new();
        pick_children(&pool, 0, n - 1, &mut current, &mut out);
        out.sort();
        levels.push(out);
    }
    Ok(levels.pop().expect("levels is non-empty"))
}

fn pick_children(
    pool: &[RootedTree],
    start: usize,
    remaining: usize,
    current: &mut Vec<RootedTree>,
    out: &mut Vec<RootedTree>,
) {
    for idx in start..pool.len() {
        let t = &pool[idx];
        if t.order() > remaining {
            continue;
        }
        current.push(t.clone());
        if t.order() == remaining {
            out.push(RootedTree::node(current.clone()));
        } else {
            pick_children(pool, idx, remaining - t.order(), current, out);
        }
        current.pop();
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Multiplicity `alpha(t)` of the tree pattern in the expansion of the
/// `(|t|-1)`-th field derivative: the number of ways to distribute the
/// remaining `|t|-1` labels over the subtrees, divided by the permutations of
/// identical subtrees.
pub fn alpha(tree: &RootedTree) -> u64 {
    if tree.children().is_empty() {
        return 1;
    }
    let mut result: u64 = 1;
    let mut remaining = (tree.order() - 1) as u64;
    for child in tree.children() {
        result *= binomial(remaining, child.order() as u64);
        remaining -= child.order() as u64;
        result *= alpha(child);
    }
    // children are canonically sorted, so identical subtrees are adjacent
    let mut run = 1u64;
    for pair in tree.children().windows(2) {
        if pair[0] == pair[1] {
            run += 1;
            result /= run;
        } else {
            run = 1;
        }
    }
    result
}

/// Tree density `gamma(t) = |t| * prod gamma(t_i)`.
pub fn tree_density(tree: &RootedTree) -> u64 {
    tree.order() as u64 * tree.children().iter().map(tree_density).product::<u64>()
}

/// Callbacks exposing a vector field together with the action of its
/// derivative tensors on direction vectors.
pub trait TensorOracle {
    fn dim(&self) -> usize;

    /// Highest derivative order `m` for which [`Self::derivative_action`] is
    /// valid.
    fn max_derivative_order(&self) -> usize;

    fn field(&self, y: &[f64]) -> Vec<f64>;

    /// `d^m F(y)[u_1, ..., u_m]` for `m = directions.len() >= 1`; must be
    /// multilinear and symmetric in the directions.
    fn derivative_action(&self, y: &[f64], directions: &[Vec<f64>]) -> Vec<f64>;
}

/// A linear field `y' = A y`; second and higher derivatives vanish.
pub struct LinearFieldOracle {
    matrix: Vec<Vec<f64>>,
}

impl LinearFieldOracle {
    pub fn new(matrix: Vec<Vec<f64>>) -> Self {
        let n = matrix.len();
        assert!(matrix.iter().all(|row| row.len() == n), "matrix must be square");
        Self { matrix }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .map(|row| row.iter().zip(v).map(|(a, x)| a * x).sum())
            .collect()
    }
}

impl TensorOracle for LinearFieldOracle {
    fn dim(&self) -> usize {
        self.matrix.len()
    }

    fn max_derivative_order(&self) -> usize {
        usize::MAX
    }

    fn field(&self, y: &[f64]) -> Vec<f64> {
        self.apply(y)
    }

    fn derivative_action(&self, _y: &[f64], directions: &[Vec<f64>]) -> Vec<f64> {
        match directions {
            [d] => self.apply(d),
            _ => vec![0.0; self.dim()],
        }
    }
}

/// Elementary differential `F(t)(y)`: `F(leaf) = F(y)` and recursively
/// `F([t_1..t_m])(y) = d^m F(y)[F(t_1)(y), ..., F(t_m)(y)]`.
pub fn elementary_differential(
    tree: &RootedTree,
    oracle: &dyn TensorOracle,
    y: &[f64],
) -> Result<Vec<f64>, OrderError> {
    let needed = tree.max_out_degree();
    if needed > oracle.max_derivative_order() {
        return Err(OrderError::OracleOrderExceeded {
            needed,
            supported: oracle.max_derivative_order(),
        });
    }
    Ok(eval_differential(tree, oracle, y))
}

fn eval_differential(tree: &RootedTree, oracle: &dyn TensorOracle, y: &[f64]) -> Vec<f64> {
    if tree.children().is_empty() {
        return oracle.field(y);
    }
    let directions: Vec<Vec<f64>> = tree
        .children()
        .iter()
        .map(|c| eval_differential(c, oracle, y))
        .collect();
    oracle.derivative_action(y, &directions)
}

/// The `q`-th time derivative of the exact flow of `y' = F(y)` at `y`:
/// `sum over |t| = q of alpha(t) F(t)(y)`.
pub fn solution_derivative(
    q: usize,
    oracle: &dyn TensorOracle,
    y: &[f64],
) -> Result<Vec<f64>, OrderError> {
    let trees = enumerate_trees(q)?;
    let mut acc = vec![0.0; y.len()];
    for tree in &trees {
        let term = elementary_differential(tree, oracle, y)?;
        let a = alpha(tree) as f64;
        for (s, t) in acc.iter_mut().zip(&term) {
            *s += a * t;
        }
    }
    Ok(acc)
}

/// Elementary weight `phi(t)` of a tableau: `sum_i b_i` over the per-stage
/// weights, where a child `t_k` contributes `sum_j a_ij w_j(t_k)` at stage
/// `i` and the per-stage weight of the leaf is 1.
pub fn elementary_weight(tableau: &ButcherTableau, tree: &RootedTree) -> f64 {
    let w = stage_weights(tableau, tree);
    tableau.b().iter().zip(&w).map(|(b, w)| b * w).sum()
}

fn stage_weights(tableau: &ButcherTableau, tree: &RootedTree) -> Vec<f64> {
    let s = tableau.stages();
    let mut w = vec![1.0; s];
    for child in tree.children() {
        let cw = stage_weights(tableau, child);
        for i in 0..s {
            let mut acc = 0.0;
            for (j, cwj) in cw.iter().enumerate().take(i) {
                acc += tableau.a(i, j) * cwj;
            }
            w[i] *= acc;
        }
    }
    w
}

/// One violated order condition.
#[derive(Debug, Clone)]
pub struct OrderViolation {
    pub tree: RootedTree,
    pub weight: f64,
    pub required: f64,
}

/// Result of an algebraic order certification.
#[derive(Debug, Clone)]
pub struct OrderCheck {
    pub order: u32,
    pub conditions_checked: usize,
    pub violations: Vec<OrderViolation>,
}

impl OrderCheck {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every tree condition with `|t| <= s` against `1/density` at
/// tolerance [`ORDER_CONDITION_TOL`], reporting all violating trees.
pub fn check_order(tableau: &ButcherTableau, s: u32) -> Result<OrderCheck, OrderError> {
    let mut conditions_checked = 0;
    let mut violations = Vec::new();
    for q in 1..=s as usize {
        for tree in enumerate_trees(q)? {
            let weight = elementary_weight(tableau, &tree);
            let required = 1.0 / tree_density(&tree) as f64;
            conditions_checked += 1;
            if (weight - required).abs() > ORDER_CONDITION_TOL {
                violations.push(OrderViolation { tree, weight, required });
            }
        }
    }
    Ok(OrderCheck { order: s, conditions_checked, violations })
}

/// Least-squares slope of `log(global error)` against `log(h)` over the step
/// sequence `h_k = t_end / 2^k`, compared against [`reference_solve`]. The
/// slope estimates the global order (local order minus one). Step sizes whose
/// error sits at the reference noise floor are dropped; if none survive the
/// order is indeterminate.
pub fn measured_order<F>(
    tableau: &ButcherTableau,
    field: &mut F,
    y0: &[f64],
    t_end: f64,
) -> Result<f64, OrderError>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, IntegrateError>,
{
    let reference = reference_solve(field, y0, t_end, 1e-12)?;
    let scale = reference.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut points = Vec::new();
    for k in MEASURED_ORDER_HALVINGS {
        let n = 1u64 << k;
        let h = t_end / n as f64;
        let Ok(traj) = integrate_n(tableau, field, y0, h, n) else {
            // coarse steps may be unstable; they carry no order information
            continue;
        };
        let err = traj
            .last_state()
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if err > MEASURED_ORDER_NOISE_FLOOR * scale {
            points.push((h.ln(), err.ln()));
        }
    }
    if points.len() < 2 {
        return Err(OrderError::IndeterminateOrder);
    }
    Ok(least_squares_slope(&points))
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}
