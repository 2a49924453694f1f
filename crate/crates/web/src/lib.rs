//! Browser bindings: the frozen benchmark on a coarser letter target, stepped
//! one experiment at a time so the page can redraw between iterations. The
//! sample period grows as the sample count shrinks, so the letter is always
//! traced in the same time as the bundled target.

use obilc::costspec::{constant_speed_initialization, letter_outline, CaseStudyConfig, BUNDLED_DT, BUNDLED_SAMPLES};
use obilc::engine::{policy_step, IlcState, ProblemSpec, StepSchedule};
use obilc::model::{SurrogateModel, SurrogateSpec};
use obilc::plant::{Plant, PlantSpec, Process};
use obilc::trajops::{rms_error, Trajectory};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const AXES: usize = 2;

/// Options of one demo session.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoOptions {
    pub samples: usize,
    /// `"linear"` or `"piecewise"`.
    pub surrogate: String,
    pub noise_um: f64,
    pub seed: u64,
    pub eta0: f64,
    pub c: f64,
}

impl Default for DemoOptions {
    fn default() -> Self {
        Self {
            samples: 160,
            surrogate: "linear".into(),
            noise_um: 0.0,
            seed: 2024,
            eta0: 1.0,
            c: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepReport {
    pub k: u64,
    pub eta: f64,
    pub rms_um: f64,
    pub step_norm: f64,
    pub max_violation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct XyReport {
    pub target: Vec<[f64; 2]>,
    pub initial: Vec<[f64; 2]>,
    pub latest: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepCurve {
    pub c: f64,
    pub rms_um: Vec<f64>,
}

/// A learning run driven one experiment at a time.
pub struct Session {
    spec: ProblemSpec,
    process: Process,
    schedule: StepSchedule,
    state: IlcState,
    initial_output: Trajectory,
    latest_output: Trajectory,
}

fn to_string(e: obilc::Error) -> String {
    e.to_string()
}

impl Session {
    pub fn new(o: &DemoOptions) -> Result<Self, String> {
        if o.samples < 20 {
            return Err("at least 20 samples are needed".into());
        }
        let dt = BUNDLED_DT * BUNDLED_SAMPLES as f64 / o.samples as f64;
        let target = letter_outline(o.samples, dt, 6e-3, 0.6e-3);
        let case = CaseStudyConfig::new(target);
        let plant_spec = PlantSpec {
            noise_std: o.noise_um * 1e-6,
            ..PlantSpec::mild_nonlinear(AXES)
        };
        let plant = Plant::new(plant_spec, case.dt()).map_err(to_string)?;
        let surrogate = match o.surrogate.as_str() {
            "linear" => SurrogateSpec::mismatched_linear(AXES),
            "piecewise" => SurrogateSpec::default_piecewise(AXES, case.dt()),
            other => return Err(format!("unknown surrogate {other:?}")),
        };
        let model = SurrogateModel::from_spec(&surrogate, case.samples(), AXES, case.dt(), &plant).map_err(to_string)?;
        let spec = ProblemSpec::case_study(&case, model).map_err(to_string)?;
        let schedule = StepSchedule::new(o.eta0, o.c).map_err(to_string)?;
        let process = Process::new(plant, o.seed).map_err(to_string)?;
        let u0 = constant_speed_initialization(&case).map_err(to_string)?;
        let y0 = process.experiment(&u0, 0).map_err(to_string)?;
        let state = IlcState::initial(&spec, u0, y0.clone()).map_err(to_string)?;
        Ok(Self {
            spec,
            process,
            schedule,
            state,
            initial_output: y0.clone(),
            latest_output: y0,
        })
    }

    /// Runs experiment `k` at the current input and applies one policy step.
    pub fn step(&mut self) -> Result<StepReport, String> {
        let y = self.process.experiment(&self.state.u, self.state.k).map_err(to_string)?;
        let rms = rms_error(&y, &self.spec.target).map_err(to_string)?;
        let (next, record) = policy_step(&self.spec, &self.state, &y, &self.schedule).map_err(to_string)?;
        self.state = next;
        self.latest_output = y;
        Ok(StepReport {
            k: record.k,
            eta: record.eta,
            rms_um: rms * 1e6,
            step_norm: record.step_norm,
            max_violation: record.max_constraint_violation,
        })
    }

    pub fn xy(&self) -> XyReport {
        let pairs = |t: &Trajectory| (0..t.len()).map(|i| [t.sample(i)[0], t.sample(i)[1]]).collect();
        XyReport {
            target: pairs(&self.spec.target),
            initial: pairs(&self.initial_output),
            latest: pairs(&self.latest_output),
        }
    }
}

/// rms curves over `iterations` experiments for each decay exponent.
pub fn sweep_curves(base: &DemoOptions, c_values: &[f64], iterations: usize) -> Result<Vec<SweepCurve>, String> {
    c_values
        .iter()
        .map(|&c| {
            let mut s = Session::new(&DemoOptions { c, ..base.clone() })?;
            let rms_um = (0..iterations).map(|_| s.step().map(|r| r.rms_um)).collect::<Result<_, _>>()?;
            Ok(SweepCurve { c, rms_um })
        })
        .collect()
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("reports serialize")
}

/// JavaScript handle on a [`Session`].
#[wasm_bindgen]
pub struct Demo {
    inner: Session,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(samples: usize, surrogate: &str, noise_um: f64, eta0: f64, c: f64) -> Result<Demo, JsError> {
        let o = DemoOptions {
            samples,
            surrogate: surrogate.into(),
            noise_um,
            eta0,
            c,
            ..DemoOptions::default()
        };
        Session::new(&o).map(|inner| Demo { inner }).map_err(|e| JsError::new(&e))
    }

    /// One iteration; returns the step report as JSON.
    pub fn step(&mut self) -> Result<String, JsError> {
        self.inner.step().map(|r| json(&r)).map_err(|e| JsError::new(&e))
    }

    /// Target, first and latest measured paths as JSON `[x, y]` lists in meters.
    pub fn xy(&self) -> String {
        json(&self.inner.xy())
    }
}

/// Sweeps the decay exponent on the linear surrogate; returns JSON curves.
#[wasm_bindgen]
pub fn sweep(samples: usize, c_values: Vec<f64>, iterations: usize) -> Result<String, JsError> {
    let base = DemoOptions {
        samples,
        ..DemoOptions::default()
    };
    sweep_curves(&base, &c_values, iterations)
        .map(|r| json(&r))
        .map_err(|e| JsError::new(&e))
}
