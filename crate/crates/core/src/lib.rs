//! Gradient-based optimizers obtained by direct explicit Runge-Kutta
//! discretization of the heavy-ball ODE.
//!
//! The crate provides:
//! - [`tableau`]: Butcher tableaus with built-in methods of orders 1, 2, 4, 5
//!   and a JSON file format for user-supplied methods;
//! - [`order_conditions`]: rooted-tree enumeration, elementary differentials
//!   and weights, algebraic order certification, and empirical order
//!   measurement;
//! - [`integrate`]: fixed-step explicit RK stepping and a step-halving
//!   reference solver used as the truth oracle;
//! - [`dynamics`]: the heavy-ball system, its condition-number rescaling, and
//!   the Lyapunov function with its diagnostics;
//! - [`objectives`]: diagonal quadratics, synthetic separable logistic
//!   regression, and the optimum oracle;
//! - [`optimizers`]: direct discretization with fixed/theorem/scan step
//!   policies, gradient-descent and Nesterov baselines, the stability scan,
//!   and the rate-constant calibration;
//! - [`harness`] and [`checks`]: experiment orchestration, CSV emission, and
//!   the named verification suites behind the `verify` CLI subcommand.

pub mod checks;
pub mod dynamics;
pub mod harness;
pub mod integrate;
pub mod objectives;
pub mod optimizers;
pub mod order_conditions;
pub mod tableau;

pub use dynamics::{ConditionedProblem, HeavyBallState};
pub use objectives::{LabeledDataset, Objective, Optimum};
pub use optimizers::{Outcome, RunOptions, StepPolicy, Trace, TraceRecord};
pub use order_conditions::RootedTree;
pub use tableau::ButcherTableau;
