//! Ground-truth process simulators `y = f(u) + w`.
//!
//! Each axis is a position servo tracking the reference `u`: a second-order
//! closed loop with natural frequency `ωn`, damping `ζ` and dc gain `g`,
//!
//! ```text
//! ẍ = φ(ωn²(g·r − x) − 2ζωn·ẋ)
//! ```
//!
//! where `φ` is the identity for the linear plant and a smooth deadzone
//! followed by a smooth saturation for the nonlinear one. The reference is
//! held constant over each sample period and `y(i)` is the position at the end
//! of period `i`, so `y(i)` depends on `u(0..=i)`.

use nalgebra::{Matrix3, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajops::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantKind {
    LinearLti,
    LinearPlusStaticNonlinearity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisDynamics {
    /// rad/s
    pub natural_frequency: f64,
    pub damping: f64,
    pub dc_gain: f64,
}

impl Default for AxisDynamics {
    fn default() -> Self {
        Self {
            natural_frequency: 40.0,
            damping: 0.8,
            dc_gain: 1.0,
        }
    }
}

impl AxisDynamics {
    pub fn validate(&self) -> Result<()> {
        if !(self.natural_frequency > 0.0 && self.natural_frequency.is_finite()) {
            return Err(Error::Config("natural frequency must be positive".into()));
        }
        if !(self.damping > 0.0 && self.damping.is_finite()) {
            return Err(Error::Config("damping ratio must be positive".into()));
        }
        if !(self.dc_gain > 0.0 && self.dc_gain.is_finite()) {
            return Err(Error::Config("dc gain must be positive".into()));
        }
        Ok(())
    }

    fn state_matrices(&self) -> ([[f64; 2]; 2], [f64; 2]) {
        let w = self.natural_frequency;
        (
            [[0.0, 1.0], [-w * w, -2.0 * self.damping * w]],
            [0.0, w * w * self.dc_gain],
        )
    }

    /// Zero-order-hold discretization `(A_d, B_d)` via the exponential of the
    /// augmented matrix `[[A, B], [0, 0]]·dt`.
    pub fn discretize(&self, dt: f64) -> ([[f64; 2]; 2], [f64; 2]) {
        let (a, b) = self.state_matrices();
        let aug = Matrix3::new(
            a[0][0], a[0][1], b[0], //
            a[1][0], a[1][1], b[1], //
            0.0, 0.0, 0.0,
        ) * dt;
        let e = aug.exp();
        (
            [[e[(0, 0)], e[(0, 1)]], [e[(1, 0)], e[(1, 1)]]],
            [e[(0, 2)], e[(1, 2)]],
        )
    }

    /// Impulse response `h[j] = C A_dʲ B_d`, truncated at the first length
    /// whose discarded tail holds less than `tail_tolerance` of the energy.
    pub fn impulse_response(&self, dt: f64, tail_tolerance: f64) -> Vec<f64> {
        let (ad, bd) = self.discretize(dt);
        let mut state = Vector2::new(bd[0], bd[1]);
        let adm = nalgebra::Matrix2::new(ad[0][0], ad[0][1], ad[1][0], ad[1][1]);
        let mut h = Vec::new();
        let mut peak = 0.0f64;
        // Stop generating once the state itself is negligible.
        while h.len() < 1_000_000 {
            h.push(state[0]);
            let mag = state.norm();
            peak = peak.max(mag);
            if h.len() > 8 && mag < 1e-14 * peak {
                break;
            }
            state = adm * state;
        }
        let total: f64 = h.iter().map(|v| v * v).sum();
        let mut tail = 0.0;
        let mut len = h.len();
        while len > 1 {
            let next = tail + h[len - 1] * h[len - 1];
            if next >= tail_tolerance * total {
                break;
            }
            tail = next;
            len -= 1;
        }
        h.truncate(len);
        h
    }
}

fn default_saturation() -> f64 {
    4.0
}
fn default_deadzone() -> f64 {
    0.02
}
fn default_tail() -> f64 {
    1e-8
}
fn default_substeps() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    pub kind: PlantKind,
    pub axes: Vec<AxisDynamics>,
    /// Smooth saturation level of the actuated acceleration, m/s².
    #[serde(default = "default_saturation")]
    pub saturation: f64,
    /// Width of the smooth deadzone on the commanded acceleration, m/s².
    #[serde(default = "default_deadzone")]
    pub deadzone_width: f64,
    /// Measurement noise standard deviation, m.
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default = "default_tail")]
    pub tail_tolerance: f64,
    /// Integrator substeps per sample for the nonlinear plant.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

impl PlantSpec {
    pub fn linear(axes: usize) -> Self {
        Self {
            kind: PlantKind::LinearLti,
            axes: vec![AxisDynamics::default(); axes],
            saturation: default_saturation(),
            deadzone_width: default_deadzone(),
            noise_std: 0.0,
            tail_tolerance: default_tail(),
            substeps: default_substeps(),
        }
    }

    pub fn mild_nonlinear(axes: usize) -> Self {
        Self {
            kind: PlantKind::LinearPlusStaticNonlinearity,
            ..Self::linear(axes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::Config("plant needs at least one axis".into()));
        }
        for a in &self.axes {
            a.validate()?;
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config("noise std must be nonnegative".into()));
        }
        if !(self.saturation > 0.0) {
            return Err(Error::Config("saturation level must be positive".into()));
        }
        if !(self.deadzone_width >= 0.0 && self.deadzone_width.is_finite()) {
            return Err(Error::Config("deadzone width must be nonnegative".into()));
        }
        if !(self.tail_tolerance > 0.0 && self.tail_tolerance < 1.0) {
            return Err(Error::Config("tail tolerance must lie in (0, 1)".into()));
        }
        if self.substeps == 0 {
            return Err(Error::Config("substeps must be positive".into()));
        }
        Ok(())
    }
}

/// Zero-mean Gaussian measurement noise. The realization for iteration `k`
/// is a pure function of `(seed, k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSource {
    pub seed: u64,
    pub std: f64,
}

impl NoiseSource {
    pub fn new(seed: u64, std: f64) -> Result<Self> {
        if !(std >= 0.0 && std.is_finite()) {
            return Err(Error::InvalidArgument("noise std must be nonnegative".into()));
        }
        Ok(Self { seed, std })
    }

    pub fn realization(&self, k: u64, len: usize) -> Vec<f64> {
        if self.std == 0.0 {
            return vec![0.0; len];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(k);
        let normal = Normal::new(0.0, self.std).expect("std validated nonnegative");
        (0..len).map(|_| normal.sample(&mut rng)).collect()
    }
}

/// A plant instantiated for one sample period. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Plant {
    spec: PlantSpec,
    dt: f64,
    impulse: Vec<Vec<f64>>,
}

impl Plant {
    pub fn new(spec: PlantSpec, dt: f64) -> Result<Self> {
        spec.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config("sample period must be positive".into()));
        }
        let impulse = spec
            .axes
            .iter()
            .map(|a| a.impulse_response(dt, spec.tail_tolerance))
            .collect();
        Ok(Self { spec, dt, impulse })
    }

    pub fn spec(&self) -> &PlantSpec {
        &self.spec
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn axes(&self) -> usize {
        self.spec.axes.len()
    }

    /// Truncated impulse response of one axis (the linear part).
    pub fn impulse_response(&self, axis: usize) -> &[f64] {
        &self.impulse[axis]
    }

    fn check_input(&self, u: &Trajectory) -> Result<()> {
        if u.axes() != self.axes() {
            return Err(Error::Shape(format!(
                "plant has {} axes, input has {}",
                self.axes(),
                u.axes()
            )));
        }
        if (u.dt() - self.dt).abs() > 1e-9 * self.dt {
            return Err(Error::Shape(format!(
                "plant sample period {} differs from input period {}",
                self.dt,
                u.dt()
            )));
        }
        Ok(())
    }

    /// Noise-free response `f(u)`.
    pub fn true_response(&self, u: &Trajectory) -> Result<Trajectory> {
        self.check_input(u)?;
        match self.spec.kind {
            PlantKind::LinearLti => self.convolve(u),
            PlantKind::LinearPlusStaticNonlinearity => self.integrate(u),
        }
    }

    /// `y_k = f(u_k) + w_k` with `w_k` drawn from `noise` for iteration `k`.
    pub fn run_experiment(&self, u: &Trajectory, noise: &NoiseSource, k: u64) -> Result<Trajectory> {
        let clean = self.true_response(u)?;
        let w = noise.realization(k, clean.dim());
        let data = clean.as_flat().iter().zip(&w).map(|(y, w)| y + w).collect();
        Trajectory::from_flat(data, clean.axes(), clean.dt())
    }

    fn convolve(&self, u: &Trajectory) -> Result<Trajectory> {
        let (n, d) = (u.len(), u.axes());
        let x = u.as_flat();
        let mut y = vec![0.0; n * d];
        for (a, h) in self.impulse.iter().enumerate() {
            for i in 0..n {
                let taps = h.len().min(i + 1);
                let mut acc = 0.0;
                for (j, hj) in h[..taps].iter().enumerate() {
                    acc += hj * x[(i - j) * d + a];
                }
                y[i * d + a] = acc;
            }
        }
        Trajectory::from_flat(y, d, u.dt())
    }

    fn actuator(&self, commanded: f64) -> f64 {
        let w = self.spec.deadzone_width;
        let dead = if w > 0.0 {
            commanded - w * (commanded / w).tanh()
        } else {
            commanded
        };
        let s = self.spec.saturation;
        if s.is_finite() {
            s * (dead / s).tanh()
        } else {
            dead
        }
    }

    /// Classic RK4 on the servo loop with the reference held over each period.
    fn integrate(&self, u: &Trajectory) -> Result<Trajectory> {
        let (n, d) = (u.len(), u.axes());
        let h = self.dt / self.spec.substeps as f64;
        let mut y = vec![0.0; n * d];
        for (a, dyn_) in self.spec.axes.iter().enumerate() {
            let w2 = dyn_.natural_frequency * dyn_.natural_frequency;
            let c = 2.0 * dyn_.damping * dyn_.natural_frequency;
            let (mut pos, mut vel) = (0.0f64, 0.0f64);
            for i in 0..n {
                let r = dyn_.dc_gain * u.sample(i)[a];
                let accel = |p: f64, v: f64| self.actuator(w2 * (r - p) - c * v);
                for _ in 0..self.spec.substeps {
                    let (k1p, k1v) = (vel, accel(pos, vel));
                    let (k2p, k2v) = (vel + 0.5 * h * k1v, accel(pos + 0.5 * h * k1p, vel + 0.5 * h * k1v));
                    let (k3p, k3v) = (vel + 0.5 * h * k2v, accel(pos + 0.5 * h * k2p, vel + 0.5 * h * k2v));
                    let (k4p, k4v) = (vel + h * k3v, accel(pos + h * k3p, vel + h * k3v));
                    pos += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
                    vel += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
                }
                y[i * d + a] = pos;
            }
        }
        Trajectory::from_flat(y, d, u.dt())
    }
}

/// A plant paired with its noise source: the repeatable experiment of the
/// learning loop.
#[derive(Debug, Clone)]
pub struct Process {
    pub plant: Plant,
    pub noise: NoiseSource,
}

impl Process {
    pub fn new(plant: Plant, seed: u64) -> Result<Self> {
        let noise = NoiseSource::new(seed, plant.spec().noise_std)?;
        Ok(Self { plant, noise })
    }

    pub fn experiment(&self, u: &Trajectory, k: u64) -> Result<Trajectory> {
        self.plant.run_experiment(u, &self.noise, k)
    }
}
