//! Elimination of the output step through the linearized dynamics.
//!
//! The data-corrected subproblem lives in `(Δu, Δp)`:
//!
//! ```text
//! minimize    ½ [Δu; Δp]ᵀ [[R, S], [Sᵀ, Q]] [Δu; Δp] + guᵀΔu + gpᵀΔp
//! subject to  Δp = F·Δu + r
//!             lu ≤ Au·Δu ≤ uu
//!             lp ≤ Ap·Δp ≤ up
//! ```
//!
//! Substituting the equality leaves a QP in `Δu` alone with
//! `P = R + SF + FᵀSᵀ + FᵀQF` and `q = gu + Sr + Fᵀ(gp + Qr)`.

use nalgebra::{DMatrix, DVector};

use super::QpProblem;
use crate::error::{Error, Result};

/// Two-sided linear rows `lower ≤ M·v ≤ upper` on one block of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct RowBlock {
    pub matrix: DMatrix<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl RowBlock {
    pub fn new(matrix: DMatrix<f64>, lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != matrix.nrows() || upper.len() != matrix.nrows() {
            return Err(Error::Shape(format!(
                "row block has {} rows but {}/{} bounds",
                matrix.nrows(),
                lower.len(),
                upper.len()
            )));
        }
        Ok(Self { matrix, lower, upper })
    }

    pub fn empty(cols: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(0, cols),
            lower: DVector::zeros(0),
            upper: DVector::zeros(0),
        }
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Rows for a step `Δv` such that `v + Δv` satisfies these rows.
    pub fn shifted(&self, v: &DVector<f64>) -> RowBlock {
        let mv = &self.matrix * v;
        RowBlock {
            matrix: self.matrix.clone(),
            lower: &self.lower - &mv,
            upper: &self.upper - &mv,
        }
    }

    /// Per-row violation `max(l − Mv, Mv − u, 0)`.
    pub fn violations(&self, v: &DVector<f64>) -> DVector<f64> {
        let mv = &self.matrix * v;
        DVector::from_fn(self.rows(), |i, _| {
            (self.lower[i] - mv[i]).max(mv[i] - self.upper[i]).max(0.0)
        })
    }

    pub fn max_violation(&self, v: &DVector<f64>) -> f64 {
        self.violations(v).iter().fold(0.0, |m, x| m.max(*x))
    }
}

/// Blocks of the subproblem in `(Δu, Δp)` before elimination.
#[derive(Debug, Clone)]
pub struct SplitQp {
    pub r: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub grad_u: DVector<f64>,
    pub grad_p: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub residual: DVector<f64>,
    pub rows_u: RowBlock,
    pub rows_p: RowBlock,
}

impl SplitQp {
    fn validate(&self) -> Result<()> {
        let nu = self.grad_u.len();
        let np = self.grad_p.len();
        let checks = [
            (self.r.shape() == (nu, nu), "R"),
            (self.s.shape() == (nu, np), "S"),
            (self.q.shape() == (np, np), "Q"),
            (self.jacobian.shape() == (np, nu), "F"),
            (self.residual.len() == np, "r"),
            (self.rows_u.cols() == nu, "input rows"),
            (self.rows_p.cols() == np, "output rows"),
        ];
        for (ok, what) in checks {
            if !ok {
                return Err(Error::Shape(format!("{what} has inconsistent dimensions (nu={nu}, np={np})")));
            }
        }
        Ok(())
    }

    /// The same subproblem over the stacked variable `[Δu; Δp]`, with the
    /// dynamics as equality rows. Used as an independent check on
    /// [`condense`].
    pub fn full_space(&self) -> Result<QpProblem> {
        self.validate()?;
        let nu = self.grad_u.len();
        let np = self.grad_p.len();
        let n = nu + np;
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (nu, nu)).copy_from(&self.r);
        p.view_mut((0, nu), (nu, np)).copy_from(&self.s);
        p.view_mut((nu, 0), (np, nu)).copy_from(&self.s.transpose());
        p.view_mut((nu, nu), (np, np)).copy_from(&self.q);
        let mut q = DVector::zeros(n);
        q.rows_mut(0, nu).copy_from(&self.grad_u);
        q.rows_mut(nu, np).copy_from(&self.grad_p);

        let (mu, mp) = (self.rows_u.rows(), self.rows_p.rows());
        let m = np + mu + mp;
        let mut a = DMatrix::zeros(m, n);
        let mut lower = DVector::zeros(m);
        let mut upper = DVector::zeros(m);
        // Δp − FΔu = r
        a.view_mut((0, 0), (np, nu)).copy_from(&(-&self.jacobian));
        a.view_mut((0, nu), (np, np)).fill_with_identity();
        lower.rows_mut(0, np).copy_from(&self.residual);
        upper.rows_mut(0, np).copy_from(&self.residual);
        a.view_mut((np, 0), (mu, nu)).copy_from(&self.rows_u.matrix);
        lower.rows_mut(np, mu).copy_from(&self.rows_u.lower);
        upper.rows_mut(np, mu).copy_from(&self.rows_u.upper);
        a.view_mut((np + mu, nu), (mp, np)).copy_from(&self.rows_p.matrix);
        lower.rows_mut(np + mu, mp).copy_from(&self.rows_p.lower);
        upper.rows_mut(np + mu, mp).copy_from(&self.rows_p.upper);
        QpProblem::new(p, q, a, lower, upper)
    }
}

/// A condensed QP together with what is needed to recover the full step.
#[derive(Debug, Clone)]
pub struct CondensedQp {
    pub problem: QpProblem,
    rows_u: usize,
    s: DMatrix<f64>,
    q: DMatrix<f64>,
    grad_p: DVector<f64>,
    jacobian: DMatrix<f64>,
    residual: DVector<f64>,
    rows_p_matrix: DMatrix<f64>,
}

/// Primal-dual step in the original coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FullStep {
    pub du: DVector<f64>,
    pub dp: DVector<f64>,
    /// Multiplier of the eliminated dynamics equality.
    pub lambda: DVector<f64>,
    /// Signed multipliers of the input rows.
    pub y_u: DVector<f64>,
    /// Signed multipliers of the output rows.
    pub y_p: DVector<f64>,
}

impl CondensedQp {
    pub fn rows_u(&self) -> usize {
        self.rows_u
    }

    /// Back-substitution `Δp = FΔu + r`, splitting the duals by row block and
    /// recovering `λ` from stationarity in `Δp`:
    /// `SᵀΔu + QΔp + gp + λ + Apᵀy_p = 0`.
    pub fn expand(&self, du: &DVector<f64>, y: &DVector<f64>) -> Result<FullStep> {
        if du.len() != self.problem.n() || y.len() != self.problem.m() {
            return Err(Error::Shape("condensed solution has the wrong size".into()));
        }
        let dp = &self.jacobian * du + &self.residual;
        let y_u = y.rows(0, self.rows_u).into_owned();
        let y_p = y.rows(self.rows_u, y.len() - self.rows_u).into_owned();
        let lambda = -(self.s.tr_mul(du) + &self.q * &dp + &self.grad_p + self.rows_p_matrix.tr_mul(&y_p));
        Ok(FullStep {
            du: du.clone(),
            dp,
            lambda,
            y_u,
            y_p,
        })
    }
}

/// Eliminates `Δp` from a [`SplitQp`].
pub fn condense(split: &SplitQp) -> Result<CondensedQp> {
    split.validate()?;
    let f = &split.jacobian;
    let qf = &split.q * f;
    let mut p = &split.r + f.tr_mul(&qf);
    if split.s.amax() != 0.0 {
        let sf = &split.s * f;
        p += &sf + sf.transpose();
    }
    // Cancellation can leave a few ulps of asymmetry.
    let p = (&p + p.transpose()) * 0.5;
    let q = &split.grad_u + &split.s * &split.residual + f.tr_mul(&(&split.grad_p + &split.q * &split.residual));

    let (mu, mp) = (split.rows_u.rows(), split.rows_p.rows());
    let nu = split.grad_u.len();
    let ap_r = &split.rows_p.matrix * &split.residual;
    let mut a = DMatrix::zeros(mu + mp, nu);
    a.view_mut((0, 0), (mu, nu)).copy_from(&split.rows_u.matrix);
    a.view_mut((mu, 0), (mp, nu)).copy_from(&(&split.rows_p.matrix * f));
    let mut lower = DVector::zeros(mu + mp);
    let mut upper = DVector::zeros(mu + mp);
    lower.rows_mut(0, mu).copy_from(&split.rows_u.lower);
    upper.rows_mut(0, mu).copy_from(&split.rows_u.upper);
    lower.rows_mut(mu, mp).copy_from(&(&split.rows_p.lower - &ap_r));
    upper.rows_mut(mu, mp).copy_from(&(&split.rows_p.upper - &ap_r));

    Ok(CondensedQp {
        problem: QpProblem::new(p, q, a, lower, upper)?,
        rows_u: mu,
        s: split.s.clone(),
        q: split.q.clone(),
        grad_p: split.grad_p.clone(),
        jacobian: f.clone(),
        residual: split.residual.clone(),
        rows_p_matrix: split.rows_p.matrix.clone(),
    })
}
