//! Surrogate models supplying `F(u) ≈ ∇f(u)` and `H(u) ≈ ∇²f(u)`.
//!
//! All matrices act on time-major flattened trajectories. Models are
//! immutable once built; the finite-difference oracle calls its wrapped plant
//! sequentially.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{AxisDynamics, Plant};
use crate::trajops::Trajectory;

fn default_fd_step() -> f64 {
    1e-5
}

fn default_leak() -> f64 {
    0.2
}

/// One hidden unit family of the piecewise-linear surrogate: a causal FIR
/// functional of the input window followed by a leaky rectifier, fed back
/// through the base dynamics with gain `gain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub taps: Vec<f64>,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SurrogateSpec {
    LiftedLinear {
        axes: Vec<AxisDynamics>,
    },
    PiecewiseLinear {
        axes: Vec<AxisDynamics>,
        #[serde(default = "default_leak")]
        leak: f64,
        features: Vec<FeatureSpec>,
    },
    /// Central differences of the noise-free plant response.
    FiniteDifferenceOracle {
        #[serde(default = "default_fd_step")]
        step: f64,
    },
}

impl SurrogateSpec {
    /// Linear model with half the bandwidth and less damping than the default
    /// plant.
    pub fn mismatched_linear(axes: usize) -> Self {
        SurrogateSpec::LiftedLinear {
            axes: vec![
                AxisDynamics {
                    natural_frequency: 20.0,
                    damping: 0.7,
                    dc_gain: 1.0,
                };
                axes
            ],
        }
    }

    /// Mismatched linear base plus a velocity-sign feature.
    pub fn default_piecewise(axes: usize, dt: f64) -> Self {
        let SurrogateSpec::LiftedLinear { axes: base } = Self::mismatched_linear(axes) else {
            unreachable!()
        };
        SurrogateSpec::PiecewiseLinear {
            axes: base,
            leak: default_leak(),
            features: vec![FeatureSpec {
                taps: vec![1.0 / dt, -1.0 / dt],
                gain: 2e-3,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SurrogateSpec::LiftedLinear { axes } => axes.iter().try_for_each(AxisDynamics::validate),
            SurrogateSpec::PiecewiseLinear { axes, leak, features } => {
                axes.iter().try_for_each(AxisDynamics::validate)?;
                if !(0.0..=1.0).contains(leak) {
                    return Err(Error::Config("leak must lie in [0, 1]".into()));
                }
                for f in features {
                    if f.taps.is_empty() || f.taps.iter().chain([&f.gain]).any(|v| !v.is_finite()) {
                        return Err(Error::Config("features need finite, nonempty taps".into()));
                    }
                }
                Ok(())
            }
            SurrogateSpec::FiniteDifferenceOracle { step } => {
                if *step > 0.0 && step.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Config("finite-difference step must be positive".into()))
                }
            }
        }
    }
}

/// Lower block-triangular lifted convolution matrix:
/// `G[(i, a), (j, a)] = h_a[i − j]` for `0 ≤ i − j < len(h_a)`.
pub fn lifted_matrix(impulse: &[Vec<f64>], samples: usize) -> DMatrix<f64> {
    let d = impulse.len();
    let mut g = DMatrix::zeros(samples * d, samples * d);
    for (a, h) in impulse.iter().enumerate() {
        for i in 0..samples {
            for (lag, hv) in h.iter().enumerate().take(i + 1) {
                g[(i * d + a, (i - lag) * d + a)] = *hv;
            }
        }
    }
    g
}

#[derive(Debug, Clone)]
pub struct LiftedLinear {
    g: DMatrix<f64>,
    axes: usize,
    dt: f64,
}

impl LiftedLinear {
    pub fn from_matrix(g: DMatrix<f64>, axes: usize, dt: f64) -> Result<Self> {
        if g.nrows() != g.ncols() || axes == 0 || !g.nrows().is_multiple_of(axes) {
            return Err(Error::Shape(format!("lifted matrix {}x{} for {axes} axes", g.nrows(), g.ncols())));
        }
        Ok(Self { g, axes, dt })
    }

    pub fn from_dynamics(axes: &[AxisDynamics], samples: usize, dt: f64, tail_tolerance: f64) -> Result<Self> {
        axes.iter().try_for_each(AxisDynamics::validate)?;
        let impulse: Vec<Vec<f64>> = axes.iter().map(|a| a.impulse_response(dt, tail_tolerance)).collect();
        Self::from_matrix(lifted_matrix(&impulse, samples), axes.len(), dt)
    }

    /// Exact lifted model of a linear plant's (truncated) impulse response.
    pub fn of_plant(plant: &Plant, samples: usize) -> Result<Self> {
        let impulse: Vec<Vec<f64>> = (0..plant.axes()).map(|a| plant.impulse_response(a).to_vec()).collect();
        Self::from_matrix(lifted_matrix(&impulse, samples), plant.axes(), plant.dt())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn samples(&self) -> usize {
        self.g.nrows() / self.axes
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

#[derive(Debug, Clone)]
pub struct PiecewiseLinear {
    base: LiftedLinear,
    leak: f64,
    /// `(T_k, gain_k)` with `T_k` the causal FIR functional as a matrix.
    features: Vec<(DMatrix<f64>, f64)>,
}

fn fir_matrix(taps: &[f64], samples: usize, axes: usize) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(samples * axes, samples * axes);
    for i in 0..samples {
        for a in 0..axes {
            for (j, c) in taps.iter().enumerate() {
                // Samples before the start repeat u(0).
                let src = i.saturating_sub(j);
                t[(i * axes + a, src * axes + a)] += c;
            }
        }
    }
    t
}

impl PiecewiseLinear {
    pub fn new(base: LiftedLinear, leak: f64, features: &[FeatureSpec]) -> Self {
        let (n, d) = (base.samples(), base.axes);
        let features = features.iter().map(|f| (fir_matrix(&f.taps, n, d), f.gain)).collect();
        Self { base, leak, features }
    }

    fn activation(&self, s: f64) -> f64 {
        if s > 0.0 {
            s
        } else {
            self.leak * s
        }
    }

    /// Left derivative at the breakpoint.
    fn slope(&self, s: f64) -> f64 {
        if s > 0.0 {
            1.0
        } else {
            self.leak
        }
    }

    /// Sign pattern of every hidden unit; equal patterns mean the same affine
    /// region.
    pub fn region(&self, u: &DVector<f64>) -> Vec<bool> {
        self.features
            .iter()
            .flat_map(|(t, _)| (t * u).iter().map(|s| *s > 0.0).collect::<Vec<_>>())
            .collect()
    }

    fn predict_vec(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut hidden = DVector::zeros(u.len());
        for (t, gain) in &self.features {
            hidden += (t * u).map(|s| self.activation(s)) * *gain;
        }
        self.base.matrix() * (u + hidden)
    }

    fn jacobian_mat(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let n = u.len();
        let mut inner = DMatrix::identity(n, n);
        for (t, gain) in &self.features {
            let slopes = (t * u).map(|s| self.slope(s) * *gain);
            let mut scaled = t.clone();
            for (i, mut row) in scaled.row_iter_mut().enumerate() {
                row *= slopes[i];
            }
            inner += scaled;
        }
        self.base.matrix() * inner
    }
}

#[derive(Debug, Clone)]
pub struct FdOracle {
    plant: Plant,
    step: f64,
}

impl FdOracle {
    pub fn new(plant: Plant, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
        }
        Ok(Self { plant, step })
    }

    fn eval(&self, u: &DVector<f64>, axes: usize, dt: f64) -> Result<DVector<f64>> {
        Ok(self.plant.true_response(&Trajectory::from_vector(u, axes, dt)?)?.to_vector())
    }

    fn jacobian_mat(&self, u: &Trajectory) -> Result<DMatrix<f64>> {
        let base = u.to_vector();
        let n = base.len();
        let (d, dt) = (u.axes(), u.dt());
        let mut f = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut plus = base.clone();
            plus[j] += self.step;
            let mut minus = base.clone();
            minus[j] -= self.step;
            let col = (self.eval(&plus, d, dt)? - self.eval(&minus, d, dt)?) / (2.0 * self.step);
            f.set_column(j, &col);
        }
        Ok(f)
    }

    /// `Σᵢ wᵢ ∇²fᵢ(u)` by second differences of `wᵀf`; costs `4n²` plant
    /// evaluations.
    fn contract(&self, u: &Trajectory, weights: &DVector<f64>) -> Result<DMatrix<f64>> {
        let base = u.to_vector();
        let n = base.len();
        let (d, dt, h) = (u.axes(), u.dt(), self.step);
        let g = |v: &DVector<f64>| -> Result<f64> { Ok(weights.dot(&self.eval(v, d, dt)?)) };
        let shifted = |a: usize, sa: f64, b: usize, sb: f64| {
            let mut v = base.clone();
            v[a] += sa * h;
            v[b] += sb * h;
            g(&v)
        };
        let mut out = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let val = (shifted(a, 1.0, b, 1.0)? - shifted(a, 1.0, b, -1.0)? - shifted(a, -1.0, b, 1.0)?
                    + shifted(a, -1.0, b, -1.0)?)
                    / (4.0 * h * h);
                out[(a, b)] = val;
                out[(b, a)] = val;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub enum SurrogateModel {
    LiftedLinear(LiftedLinear),
    PiecewiseLinear(PiecewiseLinear),
    FiniteDifference(FdOracle),
}

/// Contraction of the model Hessian with output-space weights,
/// `w ↦ Σᵢ wᵢ ∇²fᵢ(u)`.
pub enum Hessian<'a> {
    Zero { dim: usize },
    FiniteDifference { oracle: &'a FdOracle, at: Trajectory },
}

impl Hessian<'_> {
    pub fn is_zero(&self) -> bool {
        matches!(self, Hessian::Zero { .. })
    }

    pub fn contract(&self, weights: &DVector<f64>) -> Result<DMatrix<f64>> {
        match self {
            Hessian::Zero { dim } => {
                if weights.len() != *dim {
                    return Err(Error::Shape("Hessian weights have the wrong length".into()));
                }
                Ok(DMatrix::zeros(*dim, *dim))
            }
            Hessian::FiniteDifference { oracle, at } => {
                if weights.len() != at.dim() {
                    return Err(Error::Shape("Hessian weights have the wrong length".into()));
                }
                oracle.contract(at, weights)
            }
        }
    }
}

impl SurrogateModel {
    /// Builds the model for trajectories of `samples × axes` at period `dt`.
    /// `plant` is only used by the finite-difference oracle.
    pub fn from_spec(spec: &SurrogateSpec, samples: usize, axes: usize, dt: f64, plant: &Plant) -> Result<Self> {
        spec.validate()?;
        let tail = plant.spec().tail_tolerance;
        let check_axes = |n: usize| {
            if n == axes {
                Ok(())
            } else {
                Err(Error::Config(format!("surrogate has {n} axes, problem has {axes}")))
            }
        };
        match spec {
            SurrogateSpec::LiftedLinear { axes: dyns } => {
                check_axes(dyns.len())?;
                Ok(SurrogateModel::LiftedLinear(LiftedLinear::from_dynamics(dyns, samples, dt, tail)?))
            }
            SurrogateSpec::PiecewiseLinear { axes: dyns, leak, features } => {
                check_axes(dyns.len())?;
                let base = LiftedLinear::from_dynamics(dyns, samples, dt, tail)?;
                Ok(SurrogateModel::PiecewiseLinear(PiecewiseLinear::new(base, *leak, features)))
            }
            SurrogateSpec::FiniteDifferenceOracle { step } => {
                check_axes(plant.axes())?;
                Ok(SurrogateModel::FiniteDifference(FdOracle::new(plant.clone(), *step)?))
            }
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            SurrogateModel::LiftedLinear(m) => Some(m.g.nrows()),
            SurrogateModel::PiecewiseLinear(m) => Some(m.base.g.nrows()),
            SurrogateModel::FiniteDifference(_) => None,
        }
    }

    fn check(&self, u: &Trajectory) -> Result<()> {
        match self.dim() {
            Some(n) if n != u.dim() => Err(Error::Shape(format!(
                "model expects {n} flattened entries, input has {}",
                u.dim()
            ))),
            _ => Ok(()),
        }
    }

    pub fn predict(&self, u: &Trajectory) -> Result<Trajectory> {
        self.check(u)?;
        let v = u.to_vector();
        let y = match self {
            SurrogateModel::LiftedLinear(m) => m.g.clone() * v,
            SurrogateModel::PiecewiseLinear(m) => m.predict_vec(&v),
            SurrogateModel::FiniteDifference(m) => return m.plant.true_response(u),
        };
        Trajectory::from_vector(&y, u.axes(), u.dt())
    }

    pub fn jacobian(&self, u: &Trajectory) -> Result<DMatrix<f64>> {
        self.check(u)?;
        match self {
            SurrogateModel::LiftedLinear(m) => Ok(m.g.clone()),
            SurrogateModel::PiecewiseLinear(m) => Ok(m.jacobian_mat(&u.to_vector())),
            SurrogateModel::FiniteDifference(m) => m.jacobian_mat(u),
        }
    }

    /// True when [`jacobian`](Self::jacobian) does not depend on `u`.
    pub fn has_constant_jacobian(&self) -> bool {
        matches!(self, SurrogateModel::LiftedLinear(_))
    }

    pub fn hessian(&self, u: &Trajectory) -> Result<Hessian<'_>> {
        self.check(u)?;
        Ok(match self {
            SurrogateModel::LiftedLinear(_) | SurrogateModel::PiecewiseLinear(_) => Hessian::Zero { dim: u.dim() },
            SurrogateModel::FiniteDifference(m) => Hessian::FiniteDifference {
                oracle: m,
                at: u.clone(),
            },
        })
    }
}

const MATRIX_MAGIC: &[u8; 8] = b"OBILCMAT";

/// Writes a dense matrix as `OBILCMAT`, rows and cols as little-endian u64,
/// then row-major little-endian f64 values.
pub fn save_matrix(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + 8 * m.len());
    buf.extend_from_slice(MATRIX_MAGIC);
    buf.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    if buf.len() < 24 || &buf[..8] != MATRIX_MAGIC {
        return Err(Error::format(path, "not a matrix cache file"));
    }
    let word = |k: usize| u64::from_le_bytes(buf[8 + 8 * k..16 + 8 * k].try_into().unwrap()) as usize;
    let (rows, cols) = (word(0), word(1));
    if buf.len() != 24 + 8 * rows * cols {
        return Err(Error::format(path, "matrix cache has the wrong length"));
    }
    let vals: Vec<f64> = buf[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &vals))
}
