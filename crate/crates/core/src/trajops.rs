//! Sampled trajectories, discrete derivative operators and tracking metrics.
//!
//! A [`Trajectory`] holds `N` samples of a `d`-dimensional signal taken every
//! `dt` seconds. Its flattened form is time-major: the `d` components of
//! sample `i` are contiguous at indices `i*d .. (i+1)*d`. Every matrix built
//! elsewhere in the crate (lifted models, derivative rows, QP blocks) assumes
//! this ordering.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    data: Vec<f64>,
    samples: usize,
    axes: usize,
    dt: f64,
}

impl Trajectory {
    /// Builds a trajectory from time-major flattened data.
    pub fn from_flat(data: Vec<f64>, axes: usize, dt: f64) -> Result<Self> {
        if axes == 0 {
            return Err(Error::InvalidArgument("trajectory needs at least one axis".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("sample period must be positive, got {dt}")));
        }
        if data.is_empty() || !data.len().is_multiple_of(axes) {
            return Err(Error::Shape(format!(
                "{} values cannot be split into samples of {} axes",
                data.len(),
                axes
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("trajectory entry {pos}")));
        }
        let samples = data.len() / axes;
        Ok(Self {
            data,
            samples,
            axes,
            dt,
        })
    }

    pub fn from_samples(rows: &[Vec<f64>], dt: f64) -> Result<Self> {
        let axes = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != axes) {
            return Err(Error::Shape("rows have inconsistent lengths".into()));
        }
        Self::from_flat(rows.concat(), axes, dt)
    }

    pub fn from_vector(v: &DVector<f64>, axes: usize, dt: f64) -> Result<Self> {
        Self::from_flat(v.as_slice().to_vec(), axes, dt)
    }

    pub fn zeros(samples: usize, axes: usize, dt: f64) -> Result<Self> {
        Self::from_flat(vec![0.0; samples * axes], axes, dt)
    }

    pub fn len(&self) -> usize {
        self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples == 0
    }

    pub fn axes(&self) -> usize {
        self.axes
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Length of the flattened vector, `N*d`.
    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.data[i * self.axes..(i + 1) * self.axes]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.data)
    }

    /// Component `axis` of every sample.
    pub fn axis(&self, axis: usize) -> Vec<f64> {
        self.data.iter().skip(axis).step_by(self.axes).copied().collect()
    }

    /// Same shape and sample period.
    pub fn same_shape(&self, other: &Trajectory) -> bool {
        self.samples == other.samples && self.axes == other.axes
    }

    pub(crate) fn check_shape(&self, other: &Trajectory, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {}x{} vs {}x{}",
                self.samples, self.axes, other.samples, other.axes
            )))
        }
    }

    /// `self + scale * other`, elementwise.
    pub fn axpy(&self, scale: f64, other: &Trajectory) -> Result<Trajectory> {
        self.check_shape(other, "axpy")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + scale * b)
            .collect();
        Trajectory::from_flat(data, self.axes, self.dt)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Trajectory> {
        Trajectory::from_flat(self.data.iter().map(|&v| f(v)).collect(), self.axes, self.dt)
    }
}

/// Order-`n` finite difference `∂ⁿx(i) = (∂ⁿ⁻¹x(i+1) − ∂ⁿ⁻¹x(i)) / dt`.
///
/// Computed by literally applying the first-difference recursion `n` times,
/// so the result has `N − n` samples.
pub fn discrete_derivative(x: &Trajectory, order: usize) -> Result<Trajectory> {
    if order == 0 {
        return Err(Error::InvalidArgument("derivative order must be at least 1".into()));
    }
    if order >= x.len() {
        return Err(Error::InvalidArgument(format!(
            "order {order} derivative needs more than {} samples",
            x.len()
        )));
    }
    let d = x.axes();
    let mut cur = x.as_flat().to_vec();
    for _ in 0..order {
        cur = cur[d..]
            .iter()
            .zip(&cur[..cur.len() - d])
            .map(|(next, prev)| (next - prev) / x.dt())
            .collect();
    }
    Trajectory::from_flat(cur, d, x.dt())
}

/// Matrix form of `∂ⁿ` acting on time-major flattened trajectories.
///
/// Row `(i, a)` holds the binomial pattern `(−1)^(n−j) C(n, j) / dtⁿ` at
/// columns `((i + j), a)` for `j = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivOperator {
    order: usize,
    samples: usize,
    axes: usize,
    dt: f64,
    coefficients: Vec<f64>,
}

pub fn deriv_matrix(order: usize, samples: usize, axes: usize, dt: f64) -> Result<DerivOperator> {
    if order == 0 {
        return Err(Error::InvalidArgument("derivative order must be at least 1".into()));
    }
    if samples <= order {
        return Err(Error::InvalidArgument(format!(
            "order {order} derivative needs more than {samples} samples"
        )));
    }
    if axes == 0 || !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument("need axes >= 1 and dt > 0".into()));
    }
    let scale = dt.powi(-(order as i32));
    let mut coefficients = Vec::with_capacity(order + 1);
    let mut binom = 1.0;
    for j in 0..=order {
        let sign = if (order - j).is_multiple_of(2) { 1.0 } else { -1.0 };
        coefficients.push(sign * binom * scale);
        binom = binom * (order - j) as f64 / (j + 1) as f64;
    }
    Ok(DerivOperator {
        order,
        samples,
        axes,
        dt,
        coefficients,
    })
}

impl DerivOperator {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn rows(&self) -> usize {
        (self.samples - self.order) * self.axes
    }

    pub fn cols(&self) -> usize {
        self.samples * self.axes
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// The `n + 1` stencil weights, already scaled by `dt^-n`.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.axes;
        let mut m = DMatrix::zeros(self.rows(), self.cols());
        for i in 0..self.samples - self.order {
            for a in 0..d {
                for (j, c) in self.coefficients.iter().enumerate() {
                    m[(i * d + a, (i + j) * d + a)] = *c;
                }
            }
        }
        m
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.cols() {
            return Err(Error::Shape(format!(
                "derivative operator expects {} entries, got {}",
                self.cols(),
                x.len()
            )));
        }
        let d = self.axes;
        Ok(DVector::from_fn(self.rows(), |r, _| {
            let (i, a) = (r / d, r % d);
            self.coefficients
                .iter()
                .enumerate()
                .map(|(j, c)| c * x[(i + j) * d + a])
                .sum()
        }))
    }
}

/// Root mean square of the per-sample Euclidean distance `‖p(i) − Ξ(i)‖`.
pub fn rms_error(p: &Trajectory, target: &Trajectory) -> Result<f64> {
    p.check_shape(target, "rms error")?;
    let sum: f64 = p
        .as_flat()
        .chunks(p.axes())
        .zip(target.as_flat().chunks(target.axes()))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
        .sum();
    Ok((sum / p.len() as f64).sqrt())
}

/// Significant digits written per value. Fifteen digits survive a
/// text → f64 → text round trip unchanged.
const CSV_DIGITS: usize = 15;

fn fmt_value(v: f64) -> String {
    format!("{:.*e}", CSV_DIGITS - 1, v)
}

/// Renders the trajectory CSV: optional `# ` comment lines, then the header
/// `t,x0,...,x{d-1}` and one row per sample.
pub fn to_csv_string(t: &Trajectory, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    out.push('t');
    for a in 0..t.axes() {
        let _ = write!(out, ",x{a}");
    }
    out.push('\n');
    for i in 0..t.len() {
        out.push_str(&fmt_value(i as f64 * t.dt()));
        for v in t.sample(i) {
            out.push(',');
            out.push_str(&fmt_value(*v));
        }
        out.push('\n');
    }
    out
}

/// Parses the trajectory CSV, returning the trajectory and any `#` comment
/// lines (with the leading `# ` stripped).
pub fn parse_csv(text: &str, origin: &Path) -> Result<(Trajectory, Vec<String>)> {
    let mut comments = Vec::new();
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .filter(|(_, l)| {
            if let Some(c) = l.strip_prefix('#') {
                comments.push(c.trim_start().to_string());
                false
            } else {
                true
            }
        });
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::format(origin, "empty trajectory file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "t" {
        return Err(Error::format(origin, format!("bad header '{header}'")));
    }
    for (a, name) in cols[1..].iter().enumerate() {
        if *name != format!("x{a}") {
            return Err(Error::format(origin, format!("bad column name '{name}'")));
        }
    }
    let axes = cols.len() - 1;
    let mut times = Vec::new();
    let mut data = Vec::new();
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != axes + 1 {
            return Err(Error::format(
                origin,
                format!("line {}: expected {} columns, got {}", lineno + 1, axes + 1, fields.len()),
            ));
        }
        for (c, f) in fields.iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::format(origin, format!("line {}: cannot parse '{f}'", lineno + 1)))?;
            if !v.is_finite() {
                return Err(Error::format(origin, format!("line {}: non-finite value", lineno + 1)));
            }
            if c == 0 {
                times.push(v);
            } else {
                data.push(v);
            }
        }
    }
    if times.len() < 2 {
        return Err(Error::format(origin, "a trajectory needs at least two samples"));
    }
    let n = times.len();
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::format(origin, "time column must be strictly increasing"));
    }
    for (i, t) in times.iter().enumerate() {
        if (t - (times[0] + i as f64 * dt)).abs() > 1e-9 * dt {
            return Err(Error::format(origin, format!("non-uniform sample time at row {i}")));
        }
    }
    let traj = Trajectory::from_flat(data, axes, dt).map_err(|e| Error::format(origin, e.to_string()))?;
    Ok((traj, comments))
}

pub fn save_trajectory(t: &Trajectory, path: &Path) -> Result<()> {
    save_trajectory_with_comments(t, path, &[])
}

pub fn save_trajectory_with_comments(t: &Trajectory, path: &Path, comments: &[String]) -> Result<()> {
    std::fs::write(path, to_csv_string(t, comments)).map_err(|e| Error::io(path, e))
}

pub fn load_trajectory(path: &Path) -> Result<(Trajectory, Vec<String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}

/// Loads a target geometry file, discarding comments.
pub fn load_target(path: &Path) -> Result<Trajectory> {
    load_trajectory(path).map(|(t, _)| t)
}
