use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::read_records;
use crate::error::{Error, Result};
use crate::trajops::{load_trajectory, Trajectory};

/// Half width of the band drawn around the target in `xy_detail`, meters.
pub const BAND_HALF_WIDTH: f64 = 20e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Convergence,
    DeviationTime,
    XyDetail,
}

impl PlotKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PlotKind::Convergence => "convergence",
            PlotKind::DeviationTime => "deviation_time",
            PlotKind::XyDetail => "xy_detail",
        }
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convergence" => Ok(PlotKind::Convergence),
            "deviation_time" | "deviation-time" => Ok(PlotKind::DeviationTime),
            "xy_detail" | "xy-detail" => Ok(PlotKind::XyDetail),
            other => Err(Error::InvalidArgument(format!("unknown plot kind {other:?}"))),
        }
    }
}

fn comment_hash(comments: &[String]) -> Option<&str> {
    comments.iter().find_map(|c| c.trim().strip_prefix("config_hash="))
}

/// Loads a sibling trajectory and checks that it carries `hash`.
fn load_checked(dir: &Path, name: &str, hash: &str) -> Result<Trajectory> {
    let path = dir.join(name);
    let (t, comments) = load_trajectory(&path)?;
    match comment_hash(&comments) {
        Some(h) if h == hash => Ok(t),
        found => Err(Error::HashMismatch {
            expected: hash.to_string(),
            found: found.unwrap_or("<none>").to_string(),
            path,
        }),
    }
}

/// Writes a plot series derived from a run directory. `records_path` points
/// at its `records.jsonl`; the output defaults to `plot_<kind>.csv` next to
/// it. Returns the path written.
pub fn plotdata(records_path: &Path, kind: PlotKind, out: Option<&Path>) -> Result<PathBuf> {
    let records = read_records(records_path)?;
    let first = records
        .first()
        .ok_or_else(|| Error::format(records_path, "no records"))?;
    let hash = first.config_hash.clone();
    if let Some(bad) = records.iter().find(|r| r.config_hash != hash) {
        return Err(Error::HashMismatch {
            expected: hash,
            found: bad.config_hash.clone(),
            path: records_path.to_path_buf(),
        });
    }
    let dir = records_path.parent().unwrap_or(Path::new("."));
    let mut csv = format!("# config_hash={hash}\n");
    match kind {
        PlotKind::Convergence => {
            csv.push_str("iteration,rms_m,rms_um\n");
            for r in &records {
                writeln!(csv, "{},{:.14e},{:.14e}", r.k, r.rms_m, r.rms_um).unwrap();
            }
        }
        PlotKind::DeviationTime => {
            let target = load_checked(dir, "target.csv", &hash)?;
            let y = load_checked(dir, "output_final.csv", &hash)?;
            if !y.same_shape(&target) {
                return Err(Error::format(dir.join("output_final.csv"), "shape differs from target"));
            }
            csv.push_str("t_s");
            for a in 0..target.axes() {
                write!(csv, ",err_x{a}_m").unwrap();
            }
            csv.push('\n');
            for i in 0..target.len() {
                write!(csv, "{:.14e}", i as f64 * target.dt()).unwrap();
                for (yv, tv) in y.sample(i).iter().zip(target.sample(i)) {
                    write!(csv, ",{:.14e}", yv - tv).unwrap();
                }
                csv.push('\n');
            }
        }
        PlotKind::XyDetail => {
            let target = load_checked(dir, "target.csv", &hash)?;
            let before = load_checked(dir, "output_initial.csv", &hash)?;
            let after = load_checked(dir, "output_final.csv", &hash)?;
            if target.axes() != 2 {
                return Err(Error::InvalidArgument("xy detail needs a planar trajectory".into()));
            }
            if !before.same_shape(&target) || !after.same_shape(&target) {
                return Err(Error::format(dir, "trajectory shapes differ"));
            }
            let normals = unit_normals(&target);
            csv.push_str("x_target_m,y_target_m,x_before_m,y_before_m,x_after_m,y_after_m,x_band_plus_m,y_band_plus_m,x_band_minus_m,y_band_minus_m\n");
            for (i, n) in normals.iter().enumerate() {
                let t = target.sample(i);
                let vals = [
                    t[0],
                    t[1],
                    before.sample(i)[0],
                    before.sample(i)[1],
                    after.sample(i)[0],
                    after.sample(i)[1],
                    t[0] + BAND_HALF_WIDTH * n[0],
                    t[1] + BAND_HALF_WIDTH * n[1],
                    t[0] - BAND_HALF_WIDTH * n[0],
                    t[1] - BAND_HALF_WIDTH * n[1],
                ];
                let row: Vec<String> = vals.iter().map(|v| format!("{v:.14e}")).collect();
                csv.push_str(&row.join(","));
                csv.push('\n');
            }
        }
    }
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => dir.join(format!("plot_{}.csv", kind.as_str())),
    };
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Left-hand unit normals of a planar curve from central differences
/// (one-sided at the ends). Zero-speed samples reuse the previous normal.
pub fn unit_normals(t: &Trajectory) -> Vec<[f64; 2]> {
    let n = t.len();
    let mut out = Vec::with_capacity(n);
    let mut last = [0.0, 1.0];
    for i in 0..n {
        let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
        let dx = t.sample(b)[0] - t.sample(a)[0];
        let dy = t.sample(b)[1] - t.sample(a)[1];
        let len = dx.hypot(dy);
        if len > 0.0 {
            last = [-dy / len, dx / len];
        }
        out.push(last);
    }
    out
}
