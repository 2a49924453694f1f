//! SQP-based learning policy.
//!
//! Each trial measures `y_k = f(u_k) + w_k`, solves the data-corrected
//! subproblem
//!
//! ```text
//! minimize    ½ Δzᵀ ∇²ℒ Δz + ∇Jᵀ Δz
//! subject to  Δp = F(u_k) Δu + (y_k − p_k)
//!             u_k + Δu ∈ 𝒰,  p_k + Δp ∈ 𝒴
//! ```
//!
//! and moves `z = (u, p)` by `η_k Δz*`. Multipliers are replaced, not damped.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::costspec::{self, CaseStudyConfig, ConstraintSet, QuadraticCost};
use crate::error::{Error, Result};
use crate::model::SurrogateModel;
use crate::plant::Process;
use crate::qp::{condense, solve, CondensedQp, QpSettings, QpStatus, SplitQp};
use crate::trajops::{rms_error, Trajectory};

/// `η_k = η₀ k^(−c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSchedule {
    pub eta0: f64,
    pub c: f64,
}

impl StepSchedule {
    pub fn new(eta0: f64, c: f64) -> Result<Self> {
        let s = Self { eta0, c };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0 && self.eta0 <= 1.0) {
            return Err(Error::Config(format!("eta0 must lie in (0, 1], got {}", self.eta0)));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("decay exponent must be nonnegative, got {}", self.c)));
        }
        Ok(())
    }

    /// Step size for iteration `k ≥ 1`.
    pub fn eta(&self, k: u64) -> f64 {
        self.eta0 * (k.max(1) as f64).powf(-self.c)
    }
}

/// Everything the policy needs besides the process itself.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub cost: QuadraticCost,
    pub constraints: ConstraintSet,
    pub model: SurrogateModel,
    /// Reference for the reported rms deviation.
    pub target: Trajectory,
    pub eps_stop: f64,
    pub max_iter: usize,
    pub qp: QpSettings,
}

impl ProblemSpec {
    /// Uses `ε_stop = 1e-6 √dim z` and at most 50 iterations.
    pub fn new(cost: QuadraticCost, constraints: ConstraintSet, model: SurrogateModel, target: Trajectory) -> Result<Self> {
        let n = target.dim();
        if cost.nu() != n || cost.np() != n {
            return Err(Error::Shape(format!(
                "cost acts on ({}, {}) entries, target has {n}",
                cost.nu(),
                cost.np()
            )));
        }
        if constraints.input.cols() != n || constraints.output.cols() != n {
            return Err(Error::Shape("constraint rows do not match the target".into()));
        }
        Ok(Self {
            cost,
            constraints,
            model,
            target,
            eps_stop: 1e-6 * ((2 * n) as f64).sqrt(),
            max_iter: 50,
            qp: QpSettings::default(),
        })
    }

    pub fn case_study(cfg: &CaseStudyConfig, model: SurrogateModel) -> Result<Self> {
        Self::new(
            costspec::objective(cfg)?,
            costspec::constraint_rows(cfg)?,
            model,
            cfg.target.clone(),
        )
    }

    pub fn axes(&self) -> usize {
        self.target.axes()
    }

    pub fn dt(&self) -> f64 {
        self.target.dt()
    }

    fn check(&self, u: &Trajectory, what: &str) -> Result<()> {
        if u.len() != self.target.len() || u.axes() != self.target.axes() {
            return Err(Error::Shape(format!(
                "{what} is {}x{}, problem is {}x{}",
                u.len(),
                u.axes(),
                self.target.len(),
                self.target.axes()
            )));
        }
        Ok(())
    }
}

/// Policy state `(u, p, λ, σ, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IlcState {
    pub u: Trajectory,
    /// Estimate of the noise-free output.
    pub p: Trajectory,
    /// Multiplier of the dynamics equality.
    pub lambda: DVector<f64>,
    /// Inequality multipliers, upper sides first then lower sides, all `≥ 0`.
    pub sigma: DVector<f64>,
    pub k: u64,
    /// Last input step, used to warm start the next subproblem.
    pub last_du: Option<DVector<f64>>,
}

impl IlcState {
    /// Cold start at `(u0, p0)` with zero multipliers and `k = 1`.
    pub fn initial(spec: &ProblemSpec, u0: Trajectory, p0: Trajectory) -> Result<Self> {
        spec.check(&u0, "input")?;
        spec.check(&p0, "output estimate")?;
        let rows = spec.constraints.input.rows() + spec.constraints.output.rows();
        Ok(Self {
            lambda: DVector::zeros(p0.dim()),
            sigma: DVector::zeros(2 * rows),
            u: u0,
            p: p0,
            k: 1,
            last_du: None,
        })
    }

    /// Signed multipliers `σ⁺ − σ⁻` per row.
    pub fn signed_duals(&self) -> DVector<f64> {
        let m = self.sigma.len() / 2;
        self.sigma.rows(0, m) - self.sigma.rows(m, m)
    }

    pub fn z_norm_sq(&self) -> f64 {
        self.u.to_vector().norm_squared() + self.p.to_vector().norm_squared()
    }
}

/// Hessian and gradient blocks of the subproblem objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianBlocks {
    pub r: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub gu: DVector<f64>,
    pub gp: DVector<f64>,
    /// Negative eigenvalues of `R` were clipped to zero.
    pub clipped: bool,
}

/// Blocks at the current state. With `h(z) = p − f(u)` the input block is
/// `R = ∇²_uu J − Σᵢ λᵢ ∇²fᵢ(u)`; if that is indefinite its negative
/// eigenvalues are set to zero so the subproblem stays convex.
pub fn lagrangian_blocks(spec: &ProblemSpec, state: &IlcState) -> Result<LagrangianBlocks> {
    spec.check(&state.u, "input")?;
    spec.check(&state.p, "output estimate")?;
    if state.lambda.len() != state.p.dim() {
        return Err(Error::Shape("dual vector has the wrong length".into()));
    }
    let (gu, gp) = spec.cost.gradient(&state.u.to_vector(), &state.p.to_vector())?;
    let hess = spec.model.hessian(&state.u)?;
    let mut r = spec.cost.r.clone();
    let mut clipped = false;
    if !hess.is_zero() && state.lambda.amax() > 0.0 {
        r -= hess.contract(&state.lambda)?;
        r = (&r + r.transpose()) * 0.5;
        let eig = SymmetricEigen::new(r.clone());
        if eig.eigenvalues.iter().any(|v| *v < 0.0) {
            clipped = true;
            let vals = eig.eigenvalues.map(|v| v.max(0.0));
            r = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
            r = (&r + r.transpose()) * 0.5;
        }
    }
    Ok(LagrangianBlocks {
        r,
        s: spec.cost.s.clone(),
        q: spec.cost.q.clone(),
        gu,
        gp,
        clipped,
    })
}

/// The data-corrected subproblem in split and condensed form.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub split: SplitQp,
    pub condensed: CondensedQp,
}

pub fn build_subproblem(spec: &ProblemSpec, state: &IlcState, y: &Trajectory) -> Result<Subproblem> {
    spec.check(y, "measurement")?;
    let blocks = lagrangian_blocks(spec, state)?;
    let u = state.u.to_vector();
    let p = state.p.to_vector();
    let split = SplitQp {
        r: blocks.r,
        s: blocks.s,
        q: blocks.q,
        grad_u: blocks.gu,
        grad_p: blocks.gp,
        jacobian: spec.model.jacobian(&state.u)?,
        residual: y.to_vector() - &p,
        rows_u: spec.constraints.input.shifted(&u),
        rows_p: spec.constraints.output.shifted(&p),
    };
    let condensed = condense(&split)?;
    Ok(Subproblem { split, condensed })
}

/// Outcome of one policy update.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Iteration the step was computed at.
    pub k: u64,
    pub eta: f64,
    /// `‖Δz*‖₂` of the undamped step.
    pub step_norm: f64,
    pub qp_iterations: usize,
    pub qp_status: QpStatus,
    pub qp_polished: bool,
    /// Largest row violation of the updated `(u, p)`.
    pub max_constraint_violation: f64,
    /// Cost at the updated `(u, p)`.
    pub objective: f64,
}

/// `z ← z + η_k Δz*`, `(λ, σ) ← (λ*, σ*)`, `k ← k + 1`.
pub fn policy_step(
    spec: &ProblemSpec,
    state: &IlcState,
    y: &Trajectory,
    schedule: &StepSchedule,
) -> Result<(IlcState, StepRecord)> {
    let sub = build_subproblem(spec, state, y)?;
    let qp = &sub.condensed.problem;
    let warm_y = state.signed_duals();
    let warm_x = match &state.last_du {
        Some(du) if du.len() == qp.n() => du.clone(),
        _ => DVector::zeros(qp.n()),
    };
    let warm = if warm_y.len() == qp.m() { Some((&warm_x, &warm_y)) } else { None };
    let sol = solve(qp, &spec.qp, warm);
    match sol.status {
        QpStatus::PrimalInfeasible | QpStatus::DualInfeasible => {
            return Err(Error::QpInfeasible {
                iteration: state.k,
                status: sol.status,
                certificate: sol.certificate.map(|c| c.as_slice().to_vec()),
            })
        }
        QpStatus::Solved | QpStatus::MaxIter => {}
    }
    let step = sub.condensed.expand(&sol.x, &sol.y)?;
    let eta = schedule.eta(state.k);
    let (d, dt) = (spec.axes(), spec.dt());
    let u = Trajectory::from_vector(&(state.u.to_vector() + &step.du * eta), d, dt)?;
    let p = Trajectory::from_vector(&(state.p.to_vector() + &step.dp * eta), d, dt)?;
    let signed = DVector::from_iterator(
        step.y_u.len() + step.y_p.len(),
        step.y_u.iter().chain(step.y_p.iter()).copied(),
    );
    let mut sigma = DVector::zeros(2 * signed.len());
    for (i, v) in signed.iter().enumerate() {
        sigma[i] = v.max(0.0);
        sigma[signed.len() + i] = (-v).max(0.0);
    }
    let (uv, pv) = (u.to_vector(), p.to_vector());
    let record = StepRecord {
        k: state.k,
        eta,
        step_norm: (step.du.norm_squared() + step.dp.norm_squared()).sqrt(),
        qp_iterations: sol.iterations,
        qp_status: sol.status,
        qp_polished: sol.polished,
        max_constraint_violation: spec.constraints.max_violation(&uv, &pv),
        objective: spec.cost.value(&uv, &pv)?,
    };
    let next = IlcState {
        u,
        p,
        lambda: step.lambda,
        sigma,
        k: state.k + 1,
        last_du: Some(step.du * (1.0 - eta)),
    };
    Ok((next, record))
}

/// One executed iteration of [`run_ilc`].
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub step: StepRecord,
    /// `rms(y_k − Ξ)` in meters, for the measurement taken at `u_k`.
    pub rms_m: f64,
    /// The measurement `y_k`.
    pub output: Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    StepNorm,
    MaxIter,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::StepNorm => "step_norm",
            Termination::MaxIter => "max_iter",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: IlcState,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    /// The measurement `y_0` used to initialize `p`.
    pub initial_output: Trajectory,
}

/// Experiment indices: `y_0` initializes `p`, iteration `k` measures with
/// noise realization `k`.
pub fn run_ilc(
    spec: &ProblemSpec,
    process: &Process,
    u0: &Trajectory,
    schedule: &StepSchedule,
    logger: &mut dyn FnMut(&IterationRecord),
) -> Result<RunOutcome> {
    schedule.validate()?;
    spec.check(u0, "initial input")?;
    let rows = spec.constraints.violated_input_rows(&u0.to_vector());
    if !rows.is_empty() {
        return Err(Error::InfeasibleInitialization(format!(
            "initial input violates {} constraint rows (first: {})",
            rows.len(),
            rows[0]
        )));
    }
    let y0 = process.experiment(u0, 0)?;
    let mut state = IlcState::initial(spec, u0.clone(), y0.clone())?;
    let mut records = Vec::with_capacity(spec.max_iter);
    let mut termination = Termination::MaxIter;
    for _ in 0..spec.max_iter {
        let y = process.experiment(&state.u, state.k)?;
        let rms_m = rms_error(&y, &spec.target)?;
        let (next, step) = policy_step(spec, &state, &y, schedule)?;
        let record = IterationRecord { step, rms_m, output: y };
        logger(&record);
        let done = record.step.step_norm <= spec.eps_stop;
        records.push(record);
        state = next;
        if done {
            termination = Termination::StepNorm;
            break;
        }
    }
    Ok(RunOutcome {
        state,
        records,
        termination,
        initial_output: y0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_values() {
        let s = StepSchedule::new(0.8, 0.5).unwrap();
        assert_eq!(s.eta(1), 0.8);
        assert!((s.eta(4) - 0.4).abs() < 1e-15);
        assert!(StepSchedule::new(0.0, 0.5).is_err());
        assert!(StepSchedule::new(1.5, 0.5).is_err());
        assert!(StepSchedule::new(1.0, -0.1).is_err());
    }

    #[test]
    fn zero_decay_is_constant() {
        let s = StepSchedule::new(0.3, 0.0).unwrap();
        assert!((1..100).all(|k| s.eta(k) == 0.3));
    }
}
