mod common;

use nalgebra::{DMatrix, DVector};
use obilc::plant::*;
use obilc::trajops::Trajectory;
use obilc::Error;
use proptest::prelude::*;

const DT: f64 = 1.0 / 400.0;

fn plant(spec: PlantSpec) -> Plant {
    Plant::new(spec, DT).unwrap()
}

fn zeros(n: usize, d: usize) -> Trajectory {
    Trajectory::zeros(n, d, DT).unwrap()
}

/// Banded lower-triangular Toeplitz matrix of one axis.
fn toeplitz(h: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i >= j && i - j < h.len() { h[i - j] } else { 0.0 })
}

#[test]
fn zero_input_gives_zero_output() {
    for spec in [PlantSpec::linear(2), PlantSpec::mild_nonlinear(2)] {
        let y = plant(spec).run_experiment(&zeros(50, 2), &NoiseSource::new(1, 0.0).unwrap(), 3).unwrap();
        assert!(y.as_flat().iter().all(|v| *v == 0.0));
    }
}

#[test]
fn impulse_reproduces_impulse_response() {
    let p = plant(PlantSpec::linear(2));
    let n = 400;
    let mut u = vec![0.0; n * 2];
    u[1] = 1.0;
    let y = p.true_response(&Trajectory::from_flat(u, 2, DT).unwrap()).unwrap();
    let h = p.impulse_response(1);
    assert!(h.len() < n);
    for i in 0..n {
        let expect = h.get(i).copied().unwrap_or(0.0);
        assert_eq!(y.sample(i)[1], expect);
        assert_eq!(y.sample(i)[0], 0.0);
    }
}

#[test]
fn impulse_response_matches_continuous_step_derivative() {
    // The ZOH impulse response is the difference of the sampled step response
    // s(t) = g(1 − e^{−ζωt}(cos ω_d t + ζ/√(1−ζ²) sin ω_d t)).
    let a = AxisDynamics::default();
    let (w, z, g) = (a.natural_frequency, a.damping, a.dc_gain);
    let wd = w * (1.0 - z * z).sqrt();
    let step = |t: f64| g * (1.0 - (-z * w * t).exp() * ((wd * t).cos() + z / (1.0 - z * z).sqrt() * (wd * t).sin()));
    let h = a.impulse_response(DT, 1e-8);
    for (j, hj) in h.iter().enumerate().take(200) {
        let expect = step((j + 1) as f64 * DT) - step(j as f64 * DT);
        assert!((hj - expect).abs() < 1e-12, "tap {j}");
    }
}

#[test]
fn impulse_tail_energy_below_tolerance() {
    for tol in [1e-6, 1e-8, 1e-10] {
        let a = AxisDynamics::default();
        let h = a.impulse_response(DT, tol);
        let long = a.impulse_response(DT, 1e-15);
        let total: f64 = long.iter().map(|v| v * v).sum();
        let tail: f64 = long[h.len()..].iter().map(|v| v * v).sum();
        assert!(tail < tol * total);
        let tail_one_more: f64 = long[h.len() - 1..].iter().map(|v| v * v).sum();
        assert!(tail_one_more >= tol * total);
    }
}

#[test]
fn same_seed_and_iteration_is_bit_identical() {
    let mut spec = PlantSpec::mild_nonlinear(2);
    spec.noise_std = 1e-5;
    let p = plant(spec);
    let mut rng = common::rng(5);
    let u = Trajectory::from_vector(&(common::random_vector(&mut rng, 60) * 1e-3), 2, DT).unwrap();
    let noise = NoiseSource::new(42, 1e-5).unwrap();
    let a = p.run_experiment(&u, &noise, 7).unwrap();
    let b = p.run_experiment(&u, &noise, 7).unwrap();
    assert_eq!(a.as_flat(), b.as_flat());
    let c = p.run_experiment(&u, &noise, 8).unwrap();
    assert_ne!(a.as_flat(), c.as_flat());
    let other_seed = p.run_experiment(&u, &NoiseSource::new(43, 1e-5).unwrap(), 7).unwrap();
    assert_ne!(a.as_flat(), other_seed.as_flat());
}

#[test]
fn linear_plant_is_homogeneous() {
    let p = plant(PlantSpec::linear(2));
    let mut rng = common::rng(9);
    let u = Trajectory::from_vector(&common::random_vector(&mut rng, 200), 2, DT).unwrap();
    let y = p.true_response(&u).unwrap();
    for s in [-2.5, 0.3, 7.0] {
        let ys = p.true_response(&u.map(|v| s * v).unwrap()).unwrap();
        for (a, b) in ys.as_flat().iter().zip(y.as_flat()) {
            assert!((a - s * b).abs() <= 1e-12 * (1.0 + b.abs() * s.abs()));
        }
    }
}

#[test]
fn nonlinear_plant_violates_superposition_beyond_saturation() {
    let p = plant(PlantSpec::mild_nonlinear(1));
    let n = 200;
    // A 1 cm step commands w²·0.01 = 16 m/s², well above the 4 m/s² limit.
    let u1 = Trajectory::from_flat((0..n).map(|i| if i >= 20 { 1e-2 } else { 0.0 }).collect(), 1, DT).unwrap();
    let u2 = Trajectory::from_flat((0..n).map(|i| if i >= 60 { -1e-2 } else { 0.0 }).collect(), 1, DT).unwrap();
    let sum = u1.axpy(1.0, &u2).unwrap();
    let f = |u: &Trajectory| p.true_response(u).unwrap().to_vector();
    let gap = (f(&sum) - f(&u1) - f(&u2)).norm();
    assert!(gap > 1e-3, "superposition gap {gap}");
}

#[test]
fn dc_input_settles_to_unit_amplitude() {
    for kind in [PlantKind::LinearLti, PlantKind::LinearPlusStaticNonlinearity] {
        let mut spec = PlantSpec::linear(1);
        spec.kind = kind;
        spec.axes[0].dc_gain = 2.5;
        let p = plant(spec);
        let u = Trajectory::from_flat(vec![1.0 / 2.5 * 1e-3; 800], 1, DT).unwrap();
        let y = p.true_response(&u).unwrap();
        let last = y.sample(799)[0] / 1e-3;
        assert!((last - 1.0).abs() < 0.01, "{kind:?}: {last}");
    }
}

#[test]
fn linear_plant_equals_toeplitz_product() {
    let p = plant(PlantSpec {
        axes: vec![
            AxisDynamics::default(),
            AxisDynamics {
                natural_frequency: 25.0,
                damping: 0.5,
                dc_gain: 1.3,
            },
        ],
        ..PlantSpec::linear(2)
    });
    let n = 300;
    let mut rng = common::rng(21);
    let x = common::random_vector(&mut rng, 2 * n);
    let y = p.true_response(&Trajectory::from_vector(&x, 2, DT).unwrap()).unwrap();
    for a in 0..2 {
        let ua = DVector::from_fn(n, |i, _| x[2 * i + a]);
        let expect = toeplitz(p.impulse_response(a), n) * ua;
        for i in 0..n {
            assert!((y.sample(i)[a] - expect[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn noise_is_zero_mean() {
    let std = 2e-5;
    let noise = NoiseSource::new(2024, std).unwrap();
    let len = 8;
    let realizations = 10_000;
    let mut mean = vec![0.0; len];
    for k in 0..realizations {
        for (m, w) in mean.iter_mut().zip(noise.realization(k, len)) {
            *m += w / realizations as f64;
        }
    }
    for m in mean {
        assert!(m.abs() <= 3.0 * std / 100.0, "mean {m}");
    }
}

#[test]
fn noise_has_requested_spread() {
    let noise = NoiseSource::new(1, 3e-6).unwrap();
    let w = noise.realization(0, 20_000);
    let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
    assert!((var.sqrt() / 3e-6 - 1.0).abs() < 0.03);
}

#[test]
fn rejects_shape_and_invalid_spec() {
    let p = plant(PlantSpec::linear(2));
    assert!(matches!(p.true_response(&zeros(10, 3)), Err(Error::Shape(_))));
    let wrong_dt = Trajectory::zeros(10, 2, 0.01).unwrap();
    assert!(matches!(p.true_response(&wrong_dt), Err(Error::Shape(_))));

    let mut bad = PlantSpec::linear(1);
    bad.axes[0].damping = 0.0;
    assert!(Plant::new(bad, DT).is_err());
    let mut bad = PlantSpec::linear(1);
    bad.noise_std = -1.0;
    assert!(Plant::new(bad, DT).is_err());
    assert!(NoiseSource::new(0, f64::NAN).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn outputs_are_causal(seed in any::<u64>(), at in 5usize..60, nonlinear in any::<bool>()) {
        let spec = if nonlinear { PlantSpec::mild_nonlinear(2) } else { PlantSpec::linear(2) };
        let p = plant(spec);
        let mut rng = common::rng(seed);
        let x = common::random_vector(&mut rng, 128) * 1e-2;
        let mut x2 = x.clone();
        x2[2 * at + 1] += 5e-3;
        let y1 = p.true_response(&Trajectory::from_vector(&x, 2, DT).unwrap()).unwrap();
        let y2 = p.true_response(&Trajectory::from_vector(&x2, 2, DT).unwrap()).unwrap();
        for i in 0..at {
            prop_assert_eq!(y1.sample(i), y2.sample(i));
        }
        prop_assert_ne!(y1.sample(at)[1], y2.sample(at)[1]);
    }

    #[test]
    fn linear_plant_is_additive(seed in any::<u64>()) {
        let p = plant(PlantSpec::linear(2));
        let mut rng = common::rng(seed);
        let a = Trajectory::from_vector(&common::random_vector(&mut rng, 80), 2, DT).unwrap();
        let b = Trajectory::from_vector(&common::random_vector(&mut rng, 80), 2, DT).unwrap();
        let lhs = p.true_response(&a.axpy(1.0, &b).unwrap()).unwrap();
        let rhs = p.true_response(&a).unwrap().axpy(1.0, &p.true_response(&b).unwrap()).unwrap();
        for (x, y) in lhs.as_flat().iter().zip(rhs.as_flat()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
