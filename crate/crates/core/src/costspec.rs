//! Case-study objective and constraint set.
//!
//! ```text
//! J(u, p) = Σᵢ ‖p(i) − Ξ(i)‖²_Qa + Σᵢ ‖∂²u(i)‖²_Ra
//! |∂u| ≤ v_max,  |∂²u| ≤ a_max,  |∂³u| ≤ j_max   (componentwise)
//! p(i) ∈ 𝒲                                       (axis-aligned box)
//! ```
//!
//! Units are meters and seconds throughout.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qp::RowBlock;
use crate::trajops::{deriv_matrix, load_target, Trajectory};

/// Rows are considered satisfied up to this violation, relative to the
/// magnitude of the bound.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Axis-aligned box, one interval per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workspace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Workspace {
    /// Bounding box of `t` grown by `margin` on every side.
    pub fn around(t: &Trajectory, margin: f64) -> Self {
        let d = t.axes();
        let mut lower = vec![f64::INFINITY; d];
        let mut upper = vec![f64::NEG_INFINITY; d];
        for i in 0..t.len() {
            for (a, v) in t.sample(i).iter().enumerate() {
                lower[a] = lower[a].min(*v);
                upper[a] = upper[a].max(*v);
            }
        }
        Self {
            lower: lower.into_iter().map(|v| v - margin).collect(),
            upper: upper.into_iter().map(|v| v + margin).collect(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseStudyConfig {
    pub target: Trajectory,
    /// Diagonal of `Qa`, one entry per axis.
    pub q_weight: Vec<f64>,
    /// Diagonal of `Ra`, one entry per axis.
    pub r_weight: Vec<f64>,
    pub v_max: f64,
    pub a_max: f64,
    pub j_max: f64,
    pub workspace: Workspace,
}

impl CaseStudyConfig {
    /// Default weights and bounds around `target`, workspace inflated by 5 mm.
    pub fn new(target: Trajectory) -> Self {
        let d = target.axes();
        let workspace = Workspace::around(&target, DEFAULT_MARGIN);
        Self {
            target,
            q_weight: vec![1e6; d],
            r_weight: vec![1e-2; d],
            v_max: 2.0,
            a_max: 2.0,
            j_max: 500.0,
            workspace,
        }
    }

    /// Checks dimensions and signs. Zero derivative bounds are accepted here;
    /// they only fail at initialization.
    pub fn validate(&self) -> Result<()> {
        let d = self.target.axes();
        if self.q_weight.len() != d || self.r_weight.len() != d {
            return Err(Error::Config(format!("weights must have {d} entries")));
        }
        if self.q_weight.iter().chain(&self.r_weight).any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Config("weights must be positive and finite".into()));
        }
        for (name, b) in [("v_max", self.v_max), ("a_max", self.a_max), ("j_max", self.j_max)] {
            if !(b >= 0.0) || b.is_nan() {
                return Err(Error::Config(format!("{name} must be nonnegative, got {b}")));
            }
        }
        let w = &self.workspace;
        if w.lower.len() != d || w.upper.len() != d {
            return Err(Error::Config(format!("workspace must have {d} axes")));
        }
        if w.lower.iter().zip(&w.upper).any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::Config("workspace box is empty".into()));
        }
        if let Some(i) = (0..self.target.len()).find(|&i| !w.contains(self.target.sample(i))) {
            return Err(Error::Config(format!("target sample {i} lies outside the workspace")));
        }
        if self.target.len() <= 4 {
            return Err(Error::Config(format!(
                "target needs more than 4 samples, has {}",
                self.target.len()
            )));
        }
        Ok(())
    }

    pub fn samples(&self) -> usize {
        self.target.len()
    }

    pub fn axes(&self) -> usize {
        self.target.axes()
    }

    pub fn dt(&self) -> f64 {
        self.target.dt()
    }
}

const DEFAULT_MARGIN: f64 = 5e-3;

fn default_q_a() -> f64 {
    1e6
}
fn default_r_a() -> f64 {
    1e-2
}
fn default_v_max() -> f64 {
    2.0
}
fn default_a_max() -> f64 {
    2.0
}
fn default_j_max() -> f64 {
    500.0
}
fn default_margin() -> f64 {
    DEFAULT_MARGIN
}

/// Serializable description of a [`CaseStudyConfig`], as found in run files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseStudyParams {
    /// Target CSV. The bundled letter outline is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default = "default_q_a")]
    pub q_a: f64,
    #[serde(default = "default_r_a")]
    pub r_a: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    #[serde(default = "default_a_max")]
    pub a_max: f64,
    #[serde(default = "default_j_max")]
    pub j_max: f64,
    /// Explicit workspace; otherwise the target's bounding box plus `margin`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workspace: Option<Workspace>,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

impl Default for CaseStudyParams {
    fn default() -> Self {
        Self {
            target: None,
            q_a: default_q_a(),
            r_a: default_r_a(),
            v_max: default_v_max(),
            a_max: default_a_max(),
            j_max: default_j_max(),
            workspace: None,
            margin: default_margin(),
        }
    }
}

impl CaseStudyParams {
    /// Loads the target (relative paths resolve against `base`) and builds the
    /// validated configuration.
    pub fn build(&self, base: &std::path::Path) -> Result<CaseStudyConfig> {
        let target = match &self.target {
            Some(path) => load_target(&base.join(path))?,
            None => bundled_target(),
        };
        if !(self.margin >= 0.0) {
            return Err(Error::Config("workspace margin must be nonnegative".into()));
        }
        let d = target.axes();
        let workspace = match &self.workspace {
            Some(w) => w.clone(),
            None => Workspace::around(&target, self.margin),
        };
        let cfg = CaseStudyConfig {
            target,
            q_weight: vec![self.q_a; d],
            r_weight: vec![self.r_a; d],
            v_max: self.v_max,
            a_max: self.a_max,
            j_max: self.j_max,
            workspace,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Convex quadratic in `z = (u, p)` written around a reference point:
///
/// `J = ½ δᵀ [[R, S], [Sᵀ, Q]] δ + [gu; gp]ᵀ δ + c`, with `δ = z − z_ref`.
///
/// Keeping the reference explicit avoids cancellation when `J` is small.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    pub r: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub u_ref: DVector<f64>,
    pub p_ref: DVector<f64>,
    pub gu: DVector<f64>,
    pub gp: DVector<f64>,
    pub constant: f64,
}

impl QuadraticCost {
    pub fn nu(&self) -> usize {
        self.u_ref.len()
    }

    pub fn np(&self) -> usize {
        self.p_ref.len()
    }

    fn deltas(&self, u: &DVector<f64>, p: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        if u.len() != self.nu() || p.len() != self.np() {
            return Err(Error::Shape(format!(
                "cost expects ({}, {}) entries, got ({}, {})",
                self.nu(),
                self.np(),
                u.len(),
                p.len()
            )));
        }
        Ok((u - &self.u_ref, p - &self.p_ref))
    }

    pub fn value(&self, u: &DVector<f64>, p: &DVector<f64>) -> Result<f64> {
        let (du, dp) = self.deltas(u, p)?;
        let quad = du.dot(&(&self.r * &du)) + 2.0 * du.dot(&(&self.s * &dp)) + dp.dot(&(&self.q * &dp));
        Ok(0.5 * quad + self.gu.dot(&du) + self.gp.dot(&dp) + self.constant)
    }

    /// `(∇_u J, ∇_p J)`.
    pub fn gradient(&self, u: &DVector<f64>, p: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let (du, dp) = self.deltas(u, p)?;
        let gu = &self.r * &du + &self.s * &dp + &self.gu;
        let gp = self.s.tr_mul(&du) + &self.q * &dp + &self.gp;
        Ok((gu, gp))
    }
}

/// The case-study cost. Hessian blocks are `R = 2 D₂ᵀ Ra D₂`, `S = 0` and
/// `Q = 2 Qa` (block diagonal).
pub fn objective(cfg: &CaseStudyConfig) -> Result<QuadraticCost> {
    cfg.validate()?;
    let (n, d) = (cfg.samples(), cfg.axes());
    let d2 = deriv_matrix(2, n, d, cfg.dt())?.to_dense();
    let ra = DVector::from_fn(d2.nrows(), |i, _| cfg.r_weight[i % d]);
    let r = d2.tr_mul(&DMatrix::from_diagonal(&(ra * 2.0))) * &d2;
    let r = (&r + r.transpose()) * 0.5;
    let q = DMatrix::from_diagonal(&DVector::from_fn(n * d, |i, _| 2.0 * cfg.q_weight[i % d]));
    Ok(QuadraticCost {
        r,
        s: DMatrix::zeros(n * d, n * d),
        q,
        u_ref: DVector::zeros(n * d),
        p_ref: cfg.target.to_vector(),
        gu: DVector::zeros(n * d),
        gp: DVector::zeros(n * d),
        constant: 0.0,
    })
}

/// Which physical limit a row encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Velocity,
    Acceleration,
    Jerk,
    Workspace,
}

/// Inequality rows on `u` (derivative bounds) and on `p` (workspace box).
/// Each stored row is two-sided, so it stands for two one-sided inequalities.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub input: RowBlock,
    pub output: RowBlock,
    /// Kind of each input row, in order.
    pub input_kinds: Vec<RowKind>,
}

impl ConstraintSet {
    /// Number of one-sided inequalities represented.
    pub fn inequality_count(&self) -> usize {
        2 * (self.input.rows() + self.output.rows())
    }

    pub fn input_violation(&self, u: &DVector<f64>) -> f64 {
        self.input.max_violation(u)
    }

    pub fn output_violation(&self, p: &DVector<f64>) -> f64 {
        self.output.max_violation(p)
    }

    pub fn max_violation(&self, u: &DVector<f64>, p: &DVector<f64>) -> f64 {
        self.input_violation(u).max(self.output_violation(p))
    }

    /// Indices of input rows violated beyond [`FEASIBILITY_TOL`].
    pub fn violated_input_rows(&self, u: &DVector<f64>) -> Vec<usize> {
        let v = self.input.violations(u);
        (0..v.len())
            .filter(|&i| v[i] > FEASIBILITY_TOL * self.input.upper[i].abs().max(1.0))
            .collect()
    }

    pub fn input_feasible(&self, u: &DVector<f64>) -> bool {
        self.violated_input_rows(u).is_empty()
    }
}

/// Stacks velocity, acceleration and jerk rows on `u`, then workspace rows
/// on `p`. Row counts are `d(N−1)`, `d(N−2)`, `d(N−3)` and `dN`.
pub fn constraint_rows(cfg: &CaseStudyConfig) -> Result<ConstraintSet> {
    let (n, d, dt) = (cfg.samples(), cfg.axes(), cfg.dt());
    if n <= 4 {
        return Err(Error::InvalidArgument(format!("need more than 4 samples for jerk rows, got {n}")));
    }
    let mut blocks = Vec::new();
    let mut kinds = Vec::new();
    for (order, bound, kind) in [
        (1, cfg.v_max, RowKind::Velocity),
        (2, cfg.a_max, RowKind::Acceleration),
        (3, cfg.j_max, RowKind::Jerk),
    ] {
        let m = deriv_matrix(order, n, d, dt)?.to_dense();
        kinds.extend(std::iter::repeat_n(kind, m.nrows()));
        blocks.push((m, bound));
    }
    let rows: usize = blocks.iter().map(|(m, _)| m.nrows()).sum();
    let mut a = DMatrix::zeros(rows, n * d);
    let mut lower = DVector::zeros(rows);
    let mut upper = DVector::zeros(rows);
    let mut at = 0;
    for (m, bound) in &blocks {
        let k = m.nrows();
        a.view_mut((at, 0), (k, n * d)).copy_from(m);
        lower.rows_mut(at, k).fill(-bound);
        upper.rows_mut(at, k).fill(*bound);
        at += k;
    }
    let w = &cfg.workspace;
    let output = RowBlock::new(
        DMatrix::identity(n * d, n * d),
        DVector::from_fn(n * d, |i, _| w.lower[i % d]),
        DVector::from_fn(n * d, |i, _| w.upper[i % d]),
    )?;
    Ok(ConstraintSet {
        input: RowBlock::new(a, lower, upper)?,
        output,
        input_kinds: kinds,
    })
}

/// Points at arc lengths `s_0 < s_1 < …` along the polyline through `pts`.
fn points_at_arc_lengths(pts: &[Vec<f64>], cum: &[f64], at: impl Iterator<Item = f64>) -> Vec<Vec<f64>> {
    let mut seg = 0;
    at.map(|s| {
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { ((s - cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        pts[seg].iter().zip(&pts[seg + 1]).map(|(a, b)| a + t * (b - a)).collect()
    })
    .collect()
}

fn cumulative_length(pts: &[Vec<f64>]) -> Vec<f64> {
    let mut cum = vec![0.0];
    for w in pts.windows(2) {
        let l = w[0].iter().zip(&w[1]).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
        cum.push(cum.last().unwrap() + l);
    }
    cum
}

/// Traces the target polyline from its first sample at constant speed so that
/// the last sample lands on the target's end. If the resulting input breaks a
/// derivative bound the speed is reduced geometrically (the trace then stops
/// short of the end) until the input is feasible.
pub fn constant_speed_initialization(cfg: &CaseStudyConfig) -> Result<Trajectory> {
    let t = &cfg.target;
    let (n, d, dt) = (t.len(), t.axes(), t.dt());
    let pts: Vec<Vec<f64>> = (0..n).map(|i| t.sample(i).to_vec()).collect();
    let cum = cumulative_length(&pts);
    let total = *cum.last().unwrap();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("target has zero length".into()));
    }
    let rows = constraint_rows(cfg)?;
    let mut fraction = 1.0;
    for _ in 0..200 {
        let reach = fraction * total;
        let samples = points_at_arc_lengths(&pts, &cum, (0..n).map(|i| reach * i as f64 / (n - 1) as f64));
        let u = Trajectory::from_flat(samples.concat(), d, dt)?;
        if rows.input_feasible(&u.to_vector()) {
            return Ok(u);
        }
        fraction *= 0.95;
    }
    Err(Error::InfeasibleInitialization(format!(
        "no constant-speed trace satisfies the derivative bounds (v_max={}, a_max={}, j_max={})",
        cfg.v_max, cfg.a_max, cfg.j_max
    )))
}

/// Samples and period of the bundled target: 314 samples at 400 Hz.
pub const BUNDLED_SAMPLES: usize = 314;
pub const BUNDLED_DT: f64 = 1.0 / 400.0;

// Outline of a lowercase 'r' in millimeters, counterclockwise from the
// bottom-left corner of the stem.
const LETTER_R_MM: [(f64, f64); 12] = [
    (0.0, 0.0),
    (2.2, 0.0),
    (2.2, 6.0),
    (3.2, 7.6),
    (4.8, 8.0),
    (6.0, 7.6),
    (6.0, 9.6),
    (4.6, 10.0),
    (3.2, 9.6),
    (2.2, 8.6),
    (2.2, 9.8),
    (0.0, 9.8),
];

/// A closed letter-'r' outline about 6 mm tall, corner-smoothed and sampled
/// at constant arc length, starting and ending at the origin.
pub fn bundled_target() -> Trajectory {
    letter_outline(BUNDLED_SAMPLES, BUNDLED_DT, 6e-3, 0.6e-3)
}

/// Scales the outline to `height` meters, smooths it with a Gaussian of
/// standard deviation `smoothing` meters along arc length and resamples it
/// to `samples` equally spaced points.
pub fn letter_outline(samples: usize, dt: f64, height: f64, smoothing: f64) -> Trajectory {
    const DENSE: usize = 4096;
    let scale = height / 10.0;
    let mut poly: Vec<Vec<f64>> = LETTER_R_MM.iter().map(|(x, y)| vec![x * scale, y * scale]).collect();
    poly.push(poly[0].clone());
    let cum = cumulative_length(&poly);
    let total = *cum.last().unwrap();
    let dense = points_at_arc_lengths(&poly, &cum, (0..DENSE).map(|i| total * i as f64 / DENSE as f64));

    // Circular Gaussian smoothing over the closed curve.
    let step = total / DENSE as f64;
    let sd = (smoothing / step).max(1e-9);
    let half = (4.0 * sd).ceil() as isize;
    let kernel: Vec<f64> = (-half..=half).map(|j| (-0.5 * (j as f64 / sd).powi(2)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let mut smooth: Vec<Vec<f64>> = (0..DENSE)
        .map(|i| {
            let mut acc = [0.0; 2];
            for (k, w) in kernel.iter().enumerate() {
                let j = (i as isize + k as isize - half).rem_euclid(DENSE as isize) as usize;
                acc[0] += w * dense[j][0];
                acc[1] += w * dense[j][1];
            }
            acc.iter().map(|v| v / norm).collect()
        })
        .collect();
    smooth.push(smooth[0].clone());
    let cum = cumulative_length(&smooth);
    let total = *cum.last().unwrap();
    let mut out = points_at_arc_lengths(&smooth, &cum, (0..samples).map(|i| total * i as f64 / (samples - 1) as f64));
    let origin = out[0].clone();
    for p in &mut out {
        p[0] -= origin[0];
        p[1] -= origin[1];
    }
    // Close exactly.
    if let Some(last) = out.last_mut() {
        *last = vec![0.0, 0.0];
    }
    Trajectory::from_samples(&out, dt).expect("bundled outline is well formed")
}
