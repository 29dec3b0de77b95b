//! Block-PSD semidefinite programs with linear equality and inequality
//! constraints, and a primal-dual interior-point solver for them.
//!
//! Problem form:
//!
//! ```text
//! minimize    cᵀx
//! subject to  aᵢᵀx = bᵢ  or  aᵢᵀx >= bᵢ
//!             C_k + Σ_v x_v F_{k,v} ⪰ 0   for every block k
//! ```

mod format;
mod presolve;
mod solver;

use std::time::Duration;

use nalgebra::DMatrix;
use thiserror::Error;

pub use format::{read_text, write_text};
pub use solver::solve;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("invalid tolerances: {0}")]
    Tolerance(String),
    #[error("problem file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SdpError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    /// Sparse `(variable, coefficient)` pairs.
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// One entry of an affine PSD block: `var = None` is the constant part.
/// Only the lower triangle (`row >= col`) is stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockEntry {
    pub var: Option<usize>,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdBlock {
    pub dim: usize,
    pub entries: Vec<BlockEntry>,
}

impl PsdBlock {
    /// `C + Σ x_v F_v` as a dense symmetric matrix.
    pub fn value(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for e in &self.entries {
            let v = match e.var {
                Some(k) => e.value * x[k],
                None => e.value,
            };
            m[(e.row, e.col)] += v;
            if e.row != e.col {
                m[(e.col, e.row)] += v;
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SdpProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<LinearConstraint>,
    pub blocks: Vec<PsdBlock>,
}

impl SdpProblem {
    pub fn check(&self) -> Result<()> {
        let n = self.num_vars;
        if self.objective.len() != n {
            return Err(SdpError::Malformed(format!(
                "objective has {} entries for {n} variables",
                self.objective.len()
            )));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(SdpError::Malformed("non-finite objective".into()));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(SdpError::Malformed(format!("constraint {i}: non-finite rhs")));
            }
            for &(v, a) in &c.coeffs {
                if v >= n || !a.is_finite() {
                    return Err(SdpError::Malformed(format!(
                        "constraint {i}: bad coefficient ({v}, {a})"
                    )));
                }
            }
        }
        for (k, b) in self.blocks.iter().enumerate() {
            if b.dim == 0 {
                return Err(SdpError::Malformed(format!("block {k} is empty")));
            }
            for e in &b.entries {
                if e.row >= b.dim || e.col > e.row || e.var.is_some_and(|v| v >= n) || !e.value.is_finite() {
                    return Err(SdpError::Malformed(format!("block {k}: bad entry {e:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of the linear constraints at `x`.
    pub fn max_linear_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| {
                let lhs: f64 = c.coeffs.iter().map(|&(v, a)| a * x[v]).sum();
                match c.sense {
                    Sense::Eq => (lhs - c.rhs).abs(),
                    Sense::Ge => (c.rhs - lhs).max(0.0),
                }
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub feas: f64,
    pub gap: f64,
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feas: 1e-7,
            gap: 1e-7,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    NearOptimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    NumericalFailure,
}

impl SdpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SdpStatus::Optimal => "optimal",
            SdpStatus::NearOptimal => "near_optimal",
            SdpStatus::Infeasible => "infeasible",
            SdpStatus::Unbounded => "unbounded",
            SdpStatus::IterationLimit => "iteration_limit",
            SdpStatus::NumericalFailure => "numerical_failure",
        }
    }

    /// Whether the returned point is usable as an (approximate) optimum.
    pub fn is_solved(&self) -> bool {
        matches!(self, SdpStatus::Optimal | SdpStatus::NearOptimal)
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: Vec<f64>,
    /// One multiplier per input constraint (nonnegative for `Ge` rows).
    pub multipliers: Vec<f64>,
    /// Dual matrices, one per PSD block.
    pub dual_blocks: Vec<DMatrix<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub status: SdpStatus,
    /// Relative primal residual.
    pub primal_residual: f64,
    /// Relative dual residual.
    pub dual_residual: f64,
    /// Complementarity `sᵀz`.
    pub gap: f64,
    pub relative_gap: f64,
    pub iterations: usize,
    pub wall_time: Duration,
}

#[cfg(test)]
mod tests;
