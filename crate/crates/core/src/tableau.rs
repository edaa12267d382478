//! Butcher tableaus for explicit Runge-Kutta methods.
//!
//! A tableau stores the strictly lower-triangular stage coefficients `a_ij`
//! (row `i` holds entries for `j < i`) and the weight vector `b`, together
//! with the order the method claims. Claimed orders of the built-in methods
//! are certified algebraically by [`crate::order_conditions::check_order`]
//! instead of being trusted.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sum of the weights must match 1 to within this tolerance; rational
/// coefficients stored as doubles incur only few-ulp error.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TableauError {
    #[error("failed to parse tableau document: {0}")]
    Parse(String),
    #[error("field `{field}`: {problem}")]
    Shape { field: &'static str, problem: String },
    #[error("entry a[{row}][{col}] lies on or above the diagonal; the method must be explicit")]
    NotExplicit { row: usize, col: usize },
    #[error("weights b must sum to 1, got {sum}")]
    WeightSum { sum: f64 },
    #[error("field `{field}` contains a non-finite value")]
    NonFinite { field: &'static str },
}

/// Coefficients of an explicit `S`-stage Runge-Kutta method.
///
/// Immutable after construction; safe to share across concurrent runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    stages: usize,
    /// Row `i` has exactly `i` entries: `a[i][j]` with `j < i`. Row 0 is empty.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    claimed_order: u32,
}

#[derive(Serialize, Deserialize)]
struct TableauFile {
    stages: usize,
    order: u32,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl ButcherTableau {
    /// Validates shape, explicitness and the order-1 consistency condition.
    ///
    /// `a` may be given with `stages` rows (leading row empty) or with
    /// `stages - 1` rows starting at stage 2; it is normalized to the former.
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>, claimed_order: u32) -> Result<Self, TableauError> {
        let stages = b.len();
        if stages == 0 {
            return Err(TableauError::Shape {
                field: "b",
                problem: "at least one stage is required".into(),
            });
        }
        if claimed_order == 0 {
            return Err(TableauError::Shape {
                field: "order",
                problem: "claimed order must be at least 1".into(),
            });
        }

        let mut rows = a;
        if rows.len() == stages.saturating_sub(1) {
            rows.insert(0, Vec::new());
        }
        if rows.len() != stages {
            return Err(TableauError::Shape {
                field: "a",
                problem: format!("expected {} rows (or {}), got {}", stages, stages - 1, rows.len()),
            });
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() > i {
                // the first out-of-bounds entry sits on the diagonal (1-indexed a_{i+1,i+1})
                return Err(TableauError::NotExplicit { row: i + 1, col: i + 1 });
            }
            if row.len() < i {
                return Err(TableauError::Shape {
                    field: "a",
                    problem: format!("row {} must hold {} entries, got {}", i + 1, i, row.len()),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(TableauError::NonFinite { field: "a" });
            }
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(TableauError::NonFinite { field: "b" });
        }
        let sum: f64 = b.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(TableauError::WeightSum { sum });
        }

        Ok(Self { stages, a: rows, b, claimed_order })
    }

    /// Explicit Euler: one stage, order 1.
    pub fn euler() -> Self {
        Self::new(vec![], vec![1.0], 1).expect("euler tableau is valid")
    }

    /// Explicit midpoint: two stages, order 2.
    pub fn midpoint() -> Self {
        Self::new(vec![vec![0.5]], vec![0.0, 1.0], 2).expect("midpoint tableau is valid")
    }

    /// The classical four-stage order-4 method.
    pub fn rk4_classic() -> Self {
        Self::new(
            vec![
                vec![0.5],
                vec![0.0, 0.5],
                vec![0.0, 0.0, 1.0],
            ],
            vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            4,
        )
        .expect("rk4 tableau is valid")
    }

    /// Six-stage order-5 method (the fifth-order weights of the Cash-Karp pair).
    pub fn cash_karp5() -> Self {
        Self::new(
            vec![
                vec![1.0 / 5.0],
                vec![3.0 / 40.0, 9.0 / 40.0],
                vec![3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0],
                vec![-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0],
                vec![
                    1631.0 / 55296.0,
                    175.0 / 512.0,
                    575.0 / 13824.0,
                    44275.0 / 110592.0,
                    253.0 / 4096.0,
                ],
            ],
            vec![
                37.0 / 378.0,
                0.0,
                250.0 / 621.0,
                125.0 / 594.0,
                0.0,
                512.0 / 1771.0,
            ],
            5,
        )
        .expect("cash-karp tableau is valid")
    }

    /// Built-in method of the given claimed order, if one exists.
    pub fn builtin_of_order(order: u32) -> Option<Self> {
        match order {
            1 => Some(Self::euler()),
            2 => Some(Self::midpoint()),
            4 => Some(Self::rk4_classic()),
            5 => Some(Self::cash_karp5()),
            _ => None,
        }
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn claimed_order(&self) -> u32 {
        self.claimed_order
    }

    /// Stage coefficient `a_ij` with zero-based `i`, `j`; requires `j < i`.
    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i][j]
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Node abscissa `c_i = sum_j a_ij`, computed on demand; the autonomous
    /// formulation never stores it.
    pub fn c(&self, i: usize) -> f64 {
        self.a[i].iter().sum()
    }

    /// Serializes to the tableau file format (JSON document with keys
    /// `stages`, `order`, `a`, `b`).
    pub fn to_json(&self) -> String {
        let file = TableauFile {
            stages: self.stages,
            order: self.claimed_order,
            a: self.a.clone(),
            b: self.b.clone(),
        };
        serde_json::to_string_pretty(&file).expect("tableau serialization cannot fail")
    }
}

/// Parses and validates a tableau document (see [`ButcherTableau::to_json`]).
pub fn parse_tableau(text: &str) -> Result<ButcherTableau, TableauError> {
    let file: TableauFile =
        serde_json::from_str(text).map_err(|e| TableauError::Parse(e.to_string()))?;
    if file.b.len() != file.stages {
        return Err(TableauError::Shape {
            field: "b",
            problem: format!("expected {} entries, got {}", file.stages, file.b.len()),
        });
    }
    ButcherTableau::new(file.a, file.b, file.order)
}
