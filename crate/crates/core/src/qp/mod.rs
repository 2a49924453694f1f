//! Convex quadratic programs
//!
//! ```text
//! minimize    ½ xᵀPx + qᵀx
//! subject to  lower ≤ Ax ≤ upper
//! ```
//!
//! with `P` symmetric positive semidefinite. Equalities are rows with
//! `lower == upper`; infinite bounds drop one side of a row.
//!
//! Dual sign convention: `y_i > 0` when row `i` is active at its upper bound,
//! `y_i < 0` when active at its lower bound, so stationarity reads
//! `Px + q + Aᵀy = 0`.

mod admm;
mod condense;
mod dump;
mod polish;
mod sparse;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use admm::solve;
pub use condense::{condense, CondensedQp, FullStep, RowBlock, SplitQp};
pub use dump::{read_dump, write_dump};

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    p: DMatrix<f64>,
    q: DVector<f64>,
    a: DMatrix<f64>,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl QpProblem {
    /// Validates dimensions and finiteness and symmetrizes `P`.
    ///
    /// `P` may be asymmetric by at most `1e-12` relative to its largest entry.
    pub fn new(
        p: DMatrix<f64>,
        q: DVector<f64>,
        a: DMatrix<f64>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Result<Self> {
        let n = q.len();
        if p.nrows() != n || p.ncols() != n {
            return Err(Error::Shape(format!("P is {}x{}, q has {n} entries", p.nrows(), p.ncols())));
        }
        let m = a.nrows();
        if a.ncols() != n && m > 0 {
            return Err(Error::Shape(format!("A has {} columns, expected {n}", a.ncols())));
        }
        if lower.len() != m || upper.len() != m {
            return Err(Error::Shape(format!(
                "bounds have {}/{} entries, A has {m} rows",
                lower.len(),
                upper.len()
            )));
        }
        if p.iter().chain(q.iter()).chain(a.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("QP data must be finite".into()));
        }
        for i in 0..m {
            if lower[i].is_nan() || upper[i].is_nan() || lower[i] > upper[i] || lower[i] == f64::INFINITY || upper[i] == f64::NEG_INFINITY {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has invalid bounds [{}, {}]",
                    lower[i], upper[i]
                )));
            }
        }
        let scale = p.amax().max(1.0);
        let asym = (&p - p.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::InvalidArgument(format!("P is not symmetric (max asymmetry {asym:e})")));
        }
        let p = (&p + p.transpose()) * 0.5;
        let a = if m == 0 { DMatrix::zeros(0, n) } else { a };
        Ok(Self { p, q, a, lower, upper })
    }

    /// Unconstrained problem.
    pub fn unconstrained(p: DMatrix<f64>, q: DVector<f64>) -> Result<Self> {
        let n = q.len();
        Self::new(p, q, DMatrix::zeros(0, n), DVector::zeros(0), DVector::zeros(0))
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }

    /// Largest bound violation of `Ax`.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let ax = &self.a * x;
        (0..self.m())
            .map(|i| (self.lower[i] - ax[i]).max(ax[i] - self.upper[i]).max(0.0))
            .fold(0.0, f64::max)
    }

    /// `(‖Ax − Π(Ax)‖∞, ‖Px + q + Aᵀy‖∞)` where `Π` projects onto the bounds.
    pub fn kkt_residuals(&self, x: &DVector<f64>, y: &DVector<f64>) -> (f64, f64) {
        let prim = self.max_violation(x);
        let dual = (&self.p * x + &self.q + self.a.tr_mul(y)).amax();
        (prim, dual)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QpStatus {
    Solved,
    MaxIter,
    PrimalInfeasible,
    DualInfeasible,
}

impl QpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QpStatus::Solved => "solved",
            QpStatus::MaxIter => "max-iter",
            QpStatus::PrimalInfeasible => "primal-infeasible",
            QpStatus::DualInfeasible => "dual-infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSettings {
    /// Initial ADMM penalty.
    pub rho: f64,
    /// Proximal weight on `x`.
    pub sigma: f64,
    /// Over-relaxation.
    pub alpha: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_prim_inf: f64,
    pub eps_dual_inf: f64,
    pub max_iter: usize,
    /// Multiply/divide `rho` by 10 when the normalized residuals differ by
    /// more than this factor.
    pub adaptive_rho: bool,
    pub adaptive_rho_tolerance: f64,
    pub adaptive_rho_interval: usize,
    pub check_interval: usize,
    pub scaling_iters: usize,
    pub polish: bool,
    /// Regularization of the polish KKT system, removed by refinement.
    pub polish_delta: f64,
    pub polish_refine_iters: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            eps_prim_inf: 1e-5,
            eps_dual_inf: 1e-5,
            max_iter: 20_000,
            adaptive_rho: true,
            adaptive_rho_tolerance: 10.0,
            adaptive_rho_interval: 25,
            check_interval: 5,
            scaling_iters: 10,
            polish: true,
            polish_delta: 1e-9,
            polish_refine_iters: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub status: QpStatus,
    /// `‖Ax − Π(Ax)‖∞` on the original data.
    pub prim_res: f64,
    /// `‖Px + q + Aᵀy‖∞` on the original data.
    pub dual_res: f64,
    pub iterations: usize,
    pub polished: bool,
    pub rho: f64,
    /// Infeasibility certificate: a dual ray for primal infeasibility, a
    /// primal ray for dual infeasibility.
    pub certificate: Option<DVector<f64>>,
}

impl QpSolution {
    pub fn is_solved(&self) -> bool {
        self.status == QpStatus::Solved
    }
}
