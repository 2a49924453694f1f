mod common;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use obilc::costspec::*;
use obilc::trajops::{discrete_derivative, Trajectory};
use obilc::Error;
use proptest::prelude::*;

const DT: f64 = BUNDLED_DT;

fn line(n: usize, length: f64) -> Trajectory {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let s = length * i as f64 / (n - 1) as f64;
            vec![0.6 * s, 0.8 * s]
        })
        .collect();
    Trajectory::from_samples(&rows, DT).unwrap()
}

fn circle(n: usize, radius: f64) -> Trajectory {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let th = std::f64::consts::TAU * i as f64 / (n - 1) as f64;
            vec![radius * th.cos(), radius * th.sin()]
        })
        .collect();
    Trajectory::from_samples(&rows, DT).unwrap()
}

/// Builds `u` from a jerk sequence by three exact discrete integrations, so
/// `∂³u = jerk`, `∂²u(0) = ∂u(0) = u(0) = 0`.
fn integrate_jerk(jerk: &[f64]) -> Vec<f64> {
    let n = jerk.len() + 3;
    let mut a = vec![0.0; n - 2];
    for i in 0..n - 3 {
        a[i + 1] = a[i] + DT * jerk[i];
    }
    let mut v = vec![0.0; n - 1];
    for i in 0..n - 2 {
        v[i + 1] = v[i] + DT * a[i];
    }
    let mut u = vec![0.0; n];
    for i in 0..n - 1 {
        u[i + 1] = u[i] + DT * v[i];
    }
    u
}

fn interleave(x: &[f64], y: &[f64]) -> DVector<f64> {
    DVector::from_iterator(x.len() * 2, x.iter().zip(y).flat_map(|(a, b)| [*a, *b]))
}

#[test]
fn cost_vanishes_on_target_with_constant_input() {
    let cfg = CaseStudyConfig::new(line(30, 0.01));
    let cost = objective(&cfg).unwrap();
    let u = DVector::from_element(60, 0.3);
    assert_eq!(cost.value(&u, &cfg.target.to_vector()).unwrap(), 0.0);
}

#[test]
fn one_micron_offset_costs_qa_times_square() {
    let cfg = CaseStudyConfig::new(line(30, 0.01));
    let cost = objective(&cfg).unwrap();
    let mut p = cfg.target.to_vector();
    p[17] += 1e-6;
    let j = cost.value(&DVector::zeros(60), &p).unwrap();
    assert!((j - 1e-6).abs() < 1e-18, "{j}");
}

#[test]
fn cost_matches_direct_sum_definition() {
    let cfg = CaseStudyConfig::new(circle(25, 3e-3));
    let cost = objective(&cfg).unwrap();
    let mut rng = common::rng(6);
    let u = common::random_vector(&mut rng, 50) * 1e-3;
    let p = cfg.target.to_vector() + common::random_vector(&mut rng, 50) * 1e-5;
    let ut = Trajectory::from_vector(&u, 2, DT).unwrap();
    let acc = discrete_derivative(&ut, 2).unwrap();
    let direct = 1e6 * (&p - cfg.target.to_vector()).norm_squared()
        + 1e-2 * acc.as_flat().iter().map(|v| v * v).sum::<f64>();
    let j = cost.value(&u, &p).unwrap();
    assert!((j - direct).abs() <= 1e-10 * direct);
}

#[test]
fn gradient_matches_central_differences() {
    let cfg = CaseStudyConfig::new(circle(14, 2e-3));
    let cost = objective(&cfg).unwrap();
    let mut rng = common::rng(19);
    for _ in 0..5 {
        let u = common::random_vector(&mut rng, 28) * 1e-3;
        let p = cfg.target.to_vector() + common::random_vector(&mut rng, 28) * 1e-4;
        let (gu, gp) = cost.gradient(&u, &p).unwrap();
        let fu = common::fd_gradient(|x| cost.value(x, &p).unwrap(), &u, 1e-6);
        let fp = common::fd_gradient(|x| cost.value(&u, x).unwrap(), &p, 1e-7);
        assert!(common::rel_err_vec(&gu, &fu) <= 1e-6, "{}", common::rel_err_vec(&gu, &fu));
        assert!(common::rel_err_vec(&gp, &fp) <= 1e-6, "{}", common::rel_err_vec(&gp, &fp));
    }
}

#[test]
fn hessian_blocks_are_psd_and_scale_with_weights() {
    let mut cfg = CaseStudyConfig::new(line(20, 0.01));
    let base = objective(&cfg).unwrap();
    let eig = SymmetricEigen::new(base.r.clone()).eigenvalues;
    assert!(eig.min() >= -1e-9 * eig.max());
    assert!(base.q.diagonal().iter().all(|v| *v == 2e6));
    assert_eq!(base.s, DMatrix::zeros(40, 40));

    cfg.q_weight = vec![3e6; 2];
    cfg.r_weight = vec![3e-2; 2];
    let scaled = objective(&cfg).unwrap();
    let mut rng = common::rng(2);
    let u = common::random_vector(&mut rng, 40);
    let p = common::random_vector(&mut rng, 40) * 1e-3;
    let (a, b) = (base.value(&u, &p).unwrap(), scaled.value(&u, &p).unwrap());
    assert!((b - 3.0 * a).abs() <= 1e-12 * b);
}

#[test]
fn inequality_count_formula() {
    for n in [5, 9, 40] {
        let cfg = CaseStudyConfig::new(line(n, 0.01));
        let rows = constraint_rows(&cfg).unwrap();
        assert_eq!(rows.inequality_count(), 2 * 2 * (3 * n - 6) + 2 * 2 * n);
        let kinds = &rows.input_kinds;
        assert_eq!(kinds.iter().filter(|k| **k == RowKind::Velocity).count(), 2 * (n - 1));
        assert_eq!(kinds.iter().filter(|k| **k == RowKind::Jerk).count(), 2 * (n - 3));
    }
}

#[test]
fn constant_input_inside_workspace_is_strictly_feasible() {
    let cfg = CaseStudyConfig::new(line(30, 0.01));
    let rows = constraint_rows(&cfg).unwrap();
    let u = DVector::from_element(60, 1e-3);
    let au = &rows.input.matrix * &u;
    assert!(au.iter().zip(rows.input.upper.iter()).all(|(a, hi)| *a < *hi));
    assert!(au.iter().zip(rows.input.lower.iter()).all(|(a, lo)| *a > *lo));
    let p = cfg.target.to_vector();
    assert!(p.iter().zip(rows.output.upper.iter()).all(|(a, hi)| *a < *hi));
    assert!(p.iter().zip(rows.output.lower.iter()).all(|(a, lo)| *a > *lo));
}

#[test]
fn ramp_at_speed_limit_activates_velocity_rows_only() {
    let n = 40;
    let cfg = CaseStudyConfig::new(line(n, 0.01));
    let rows = constraint_rows(&cfg).unwrap();
    let x: Vec<f64> = (0..n).map(|i| cfg.v_max * DT * i as f64).collect();
    let u = interleave(&x, &vec![0.0; n]);
    let au = &rows.input.matrix * &u;
    for (r, kind) in rows.input_kinds.iter().enumerate() {
        let slack = rows.input.upper[r] - au[r];
        match (kind, r % 2) {
            (RowKind::Velocity, 0) => assert!(slack.abs() < 1e-9, "row {r} slack {slack}"),
            (RowKind::Velocity, _) => assert_eq!(au[r], 0.0),
            _ => assert!(au[r].abs() < 1e-6 && slack > 1.0),
        }
    }
    assert!(rows.input_feasible(&u));
}

#[test]
fn single_jerk_spike_is_located() {
    let n = 40;
    let cfg = CaseStudyConfig::new(line(n, 0.01));
    let rows = constraint_rows(&cfg).unwrap();
    let mut jerk = vec![0.0; n - 3];
    jerk[12] = 600.0;
    for j in &mut jerk[13..16] {
        *j = -200.0;
    }
    let x = integrate_jerk(&jerk);
    let quiet = vec![0.0; n];

    let one_axis = rows.violated_input_rows(&interleave(&x, &quiet));
    assert_eq!(one_axis.len(), 1);
    assert_eq!(rows.input_kinds[one_axis[0]], RowKind::Jerk);

    let both = rows.violated_input_rows(&interleave(&x, &x));
    assert_eq!(both.len(), 2);
    assert!(both.iter().all(|r| rows.input_kinds[*r] == RowKind::Jerk));
}

#[test]
fn line_initialization_has_constant_velocity() {
    let n = 100;
    let length = 0.02;
    let cfg = CaseStudyConfig::new(line(n, length));
    let u = constant_speed_initialization(&cfg).unwrap();
    let v = discrete_derivative(&u, 1).unwrap();
    let speed = length / ((n - 1) as f64 * DT);
    for i in 0..v.len() {
        let s = v.sample(i);
        assert!((s[0] - 0.6 * speed).abs() < 1e-9 && (s[1] - 0.8 * speed).abs() < 1e-9);
    }
    assert_eq!(u.sample(0), cfg.target.sample(0));
}

#[test]
fn circle_initialization_traces_at_constant_speed() {
    let cfg = CaseStudyConfig::new(circle(200, 4e-3));
    let u = constant_speed_initialization(&cfg).unwrap();
    let v = discrete_derivative(&u, 1).unwrap();
    let speeds: Vec<f64> = (0..v.len()).map(|i| v.sample(i)[0].hypot(v.sample(i)[1])).collect();
    let mean = speeds.iter().sum::<f64>() / speeds.len() as f64;
    assert!(speeds.iter().all(|s| (s / mean - 1.0).abs() < 1e-3));
    let perimeter_speed = std::f64::consts::TAU * 4e-3 / (199.0 * DT);
    assert!((mean / perimeter_speed - 1.0).abs() < 1e-3);
}

#[test]
fn slow_initialization_when_bounds_are_tight() {
    let mut cfg = CaseStudyConfig::new(line(100, 0.02));
    cfg.v_max = 0.05;
    let u = constant_speed_initialization(&cfg).unwrap();
    let rows = constraint_rows(&cfg).unwrap();
    assert!(rows.input_feasible(&u.to_vector()));
    let v = discrete_derivative(&u, 1).unwrap();
    // Bounds are componentwise; the steeper axis sits just under the limit.
    assert!(v.sample(0)[1] <= 0.05 && v.sample(0)[1] > 0.05 * 0.95 - 1e-12);
}

#[test]
fn zero_speed_limit_cannot_be_initialized() {
    let mut cfg = CaseStudyConfig::new(line(30, 0.01));
    cfg.v_max = 0.0;
    assert!(matches!(
        constant_speed_initialization(&cfg),
        Err(Error::InfeasibleInitialization(_))
    ));
}

#[test]
fn bundled_target_initialization_follows_the_outline() {
    let cfg = CaseStudyConfig::new(bundled_target());
    cfg.validate().unwrap();
    let u = constant_speed_initialization(&cfg).unwrap();
    assert!(constraint_rows(&cfg).unwrap().input_feasible(&u.to_vector()));
    assert_eq!(u.sample(0), cfg.target.sample(0));
}

#[test]
fn validation_rejects_bad_configs() {
    let mut cfg = CaseStudyConfig::new(line(30, 0.01));
    cfg.workspace.upper[0] = 1e-3;
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    let mut cfg = CaseStudyConfig::new(line(30, 0.01));
    cfg.r_weight = vec![1.0];
    assert!(cfg.validate().is_err());
    let mut cfg = CaseStudyConfig::new(line(30, 0.01));
    cfg.j_max = -1.0;
    assert!(cfg.validate().is_err());
    assert!(CaseStudyConfig::new(line(4, 0.01)).validate().is_err());
}

#[test]
fn params_build_from_csv_target() {
    let dir = tempfile::tempdir().unwrap();
    obilc::trajops::save_trajectory(&circle(50, 2e-3), &dir.path().join("t.csv")).unwrap();
    let params: CaseStudyParams = toml::from_str("target = \"t.csv\"\nv_max = 1.5\nmargin = 1e-3\n").unwrap();
    let cfg = params.build(dir.path()).unwrap();
    assert_eq!(cfg.samples(), 50);
    assert_eq!(cfg.v_max, 1.5);
    assert!((cfg.workspace.upper[0] - 3e-3).abs() < 1e-12);
    assert!(CaseStudyParams::default().build(dir.path()).unwrap().samples() == BUNDLED_SAMPLES);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cost_is_nonnegative_and_convex(seed in any::<u64>(), t in 0.0f64..1.0) {
        let cfg = CaseStudyConfig::new(circle(12, 2e-3));
        let cost = objective(&cfg).unwrap();
        let mut rng = common::rng(seed);
        let (u1, u2) = (common::random_vector(&mut rng, 24) * 1e-3, common::random_vector(&mut rng, 24) * 1e-3);
        let (p1, p2) = (common::random_vector(&mut rng, 24) * 1e-3, common::random_vector(&mut rng, 24) * 1e-3);
        let j1 = cost.value(&u1, &p1).unwrap();
        let j2 = cost.value(&u2, &p2).unwrap();
        let jm = cost.value(&(&u1 * t + &u2 * (1.0 - t)), &(&p1 * t + &p2 * (1.0 - t))).unwrap();
        prop_assert!(j1 >= 0.0 && j2 >= 0.0);
        prop_assert!(jm <= t * j1 + (1.0 - t) * j2 + 1e-12 * (j1 + j2));
    }

    #[test]
    fn feasible_set_is_convex(seed in any::<u64>(), t in 0.0f64..1.0) {
        let cfg = CaseStudyConfig::new(line(20, 0.01));
        let rows = constraint_rows(&cfg).unwrap();
        let mut rng = common::rng(seed);
        let u1 = common::random_vector(&mut rng, 40) * 1e-7;
        let u2 = common::random_vector(&mut rng, 40) * 1e-7;
        prop_assume!(rows.input_feasible(&u1) && rows.input_feasible(&u2));
        prop_assert!(rows.input_feasible(&(&u1 * t + &u2 * (1.0 - t))));
    }
}
