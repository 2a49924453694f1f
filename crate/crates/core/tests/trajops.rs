mod common;

use nalgebra::{DMatrix, DVector};
use obilc::trajops::*;
use obilc::Error;
use proptest::prelude::*;

fn traj(values: &[f64], axes: usize, dt: f64) -> Trajectory {
    Trajectory::from_flat(values.to_vec(), axes, dt).unwrap()
}

#[test]
fn derivative_of_constant_vanishes() {
    let x = traj(&[1.5; 20], 2, 0.01);
    for n in 1..5 {
        let d = discrete_derivative(&x, n).unwrap();
        assert_eq!(d.len(), 10 - n);
        assert!(d.as_flat().iter().all(|v| *v == 0.0));
    }
}

#[test]
fn derivative_of_ramp_is_one() {
    let dt = 0.0025;
    let x = traj(&(0..50).map(|i| i as f64 * dt).collect::<Vec<_>>(), 1, dt);
    let d = discrete_derivative(&x, 1).unwrap();
    for v in d.as_flat() {
        assert!((v - 1.0).abs() < 1e-12);
    }
}

#[test]
fn second_derivative_of_squares() {
    // First differences (1, 3, 5), second differences (2, 2).
    let d = discrete_derivative(&traj(&[0.0, 1.0, 4.0, 9.0], 1, 1.0), 2).unwrap();
    assert_eq!(d.as_flat(), &[2.0, 2.0]);
}

#[test]
fn derivative_needs_enough_samples() {
    let x = traj(&[0.0, 1.0, 2.0], 1, 1.0);
    assert!(matches!(discrete_derivative(&x, 3), Err(Error::InvalidArgument(_))));
    assert!(matches!(discrete_derivative(&x, 0), Err(Error::InvalidArgument(_))));
    assert!(deriv_matrix(3, 3, 1, 1.0).is_err());
}

#[test]
fn first_difference_matrix() {
    let m = deriv_matrix(1, 3, 1, 1.0).unwrap().to_dense();
    assert_eq!(m, DMatrix::from_row_slice(2, 3, &[-1.0, 1.0, 0.0, 0.0, -1.0, 1.0]));
}

#[test]
fn second_difference_matrix_is_composition() {
    let m = deriv_matrix(2, 3, 1, 1.0).unwrap().to_dense();
    assert_eq!(m, DMatrix::from_row_slice(1, 3, &[1.0, -2.0, 1.0]));

    let d1a = deriv_matrix(1, 7, 2, 0.1).unwrap().to_dense();
    let d1b = deriv_matrix(1, 6, 2, 0.1).unwrap().to_dense();
    let d2 = deriv_matrix(2, 7, 2, 0.1).unwrap().to_dense();
    let composed = d1b * d1a;
    assert!((composed - d2).amax() < 1e-9);
}

#[test]
fn matrix_form_matches_recursion_on_random_inputs() {
    let mut rng = common::rng(11);
    for case in 0..100 {
        let n = 1 + case % 4;
        let d = 1 + case % 3;
        let samples = n + 2 + case % 9;
        let dt = 0.01 + 0.01 * (case % 5) as f64;
        let x = common::random_vector(&mut rng, samples * d);
        let t = Trajectory::from_vector(&x, d, dt).unwrap();
        let op = deriv_matrix(n, samples, d, dt).unwrap();
        let rec = discrete_derivative(&t, n).unwrap().to_vector();
        let dense = op.to_dense() * &x;
        let applied = op.apply(&x).unwrap();
        let scale = rec.amax().max(1.0);
        assert!((&dense - &rec).amax() <= 1e-9 * scale, "case {case}");
        assert!((&applied - &rec).amax() <= 1e-9 * scale, "case {case}");
    }
}

#[test]
fn apply_rejects_wrong_length() {
    let op = deriv_matrix(1, 4, 2, 1.0).unwrap();
    assert!(matches!(op.apply(&DVector::zeros(7)), Err(Error::Shape(_))));
}

#[test]
fn rms_examples() {
    let target = traj(&[0.0, 0.0, 1.0, 2.0, 3.0, -1.0], 2, 0.1);
    assert_eq!(rms_error(&target, &target).unwrap(), 0.0);

    let offset = target.map(|v| v).unwrap();
    let shifted: Vec<f64> = offset
        .as_flat()
        .chunks(2)
        .flat_map(|s| [s[0] + 3e-3, s[1] + 4e-3])
        .collect();
    let r = rms_error(&traj(&shifted, 2, 0.1), &target).unwrap();
    assert!((r - 5e-3).abs() < 1e-15);

    let n = 25;
    let base = vec![0.0; n * 2];
    let mut bumped = base.clone();
    bumped[2 * 7 + 1] = 2e-6;
    let r = rms_error(&traj(&bumped, 2, 0.1), &traj(&base, 2, 0.1)).unwrap();
    assert!((r - 2e-6 / (n as f64).sqrt()).abs() < 1e-18);
}

#[test]
fn rms_rejects_shape_mismatch() {
    let a = traj(&[0.0; 6], 2, 0.1);
    let b = traj(&[0.0; 6], 3, 0.1);
    assert!(rms_error(&a, &b).is_err());
}

#[test]
fn parses_three_row_two_axis_csv() {
    let text = "t,x0,x1\n0,1,2\n0.5,3,4\n1.0,5,6\n";
    let (t, comments) = parse_csv(text, std::path::Path::new("mem")).unwrap();
    assert!(comments.is_empty());
    assert_eq!((t.len(), t.axes()), (3, 2));
    assert_eq!(t.dt(), 0.5);
    assert_eq!(t.sample(2), &[5.0, 6.0]);
}

#[test]
fn csv_round_trip_keeps_comments() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let mut rng = common::rng(3);
    let x = common::random_vector(&mut rng, 40) * 1e-2;
    let t = Trajectory::from_vector(&x, 2, 1.0 / 400.0).unwrap();
    save_trajectory_with_comments(&t, &path, &["config_hash=abc".into()]).unwrap();
    let (back, comments) = load_trajectory(&path).unwrap();
    assert_eq!(comments, vec!["config_hash=abc".to_string()]);
    assert!((back.dt() - t.dt()).abs() < 1e-15);
    for (a, b) in back.as_flat().iter().zip(t.as_flat()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn empty_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    std::fs::write(&path, "").unwrap();
    assert!(matches!(load_trajectory(&path), Err(Error::Format { .. })));
}

#[test]
fn malformed_files_are_errors() {
    let p = std::path::Path::new("mem");
    assert!(parse_csv("t,x0\n0,1\n1,nan\n", p).is_err());
    assert!(parse_csv("t,x0\n0,1\n1,2,3\n", p).is_err());
    assert!(parse_csv("t,y\n0,1\n1,2\n", p).is_err());
    assert!(parse_csv("t,x0\n0,1\n1,2\n5,3\n", p).is_err());
}

#[test]
fn constructors_validate() {
    assert!(Trajectory::from_flat(vec![], 1, 1.0).is_err());
    assert!(Trajectory::from_flat(vec![1.0; 3], 2, 1.0).is_err());
    assert!(Trajectory::from_flat(vec![1.0; 4], 2, 0.0).is_err());
    assert!(matches!(
        Trajectory::from_flat(vec![1.0, f64::INFINITY], 1, 1.0),
        Err(Error::NonFinite(_))
    ));
}

fn signal(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

proptest! {
    #[test]
    fn derivative_is_linear(a in signal(24), b in signal(24), s in -3.0f64..3.0, n in 1usize..5) {
        let ta = traj(&a, 2, 0.1);
        let tb = traj(&b, 2, 0.1);
        let lhs = discrete_derivative(&ta.axpy(s, &tb).unwrap(), n).unwrap();
        let rhs = discrete_derivative(&ta, n).unwrap().axpy(s, &discrete_derivative(&tb, n).unwrap()).unwrap();
        let scale = 0.1f64.powi(-(n as i32));
        for (x, y) in lhs.as_flat().iter().zip(rhs.as_flat()) {
            prop_assert!((x - y).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn derivative_orders_compose(a in signal(30), n in 1usize..4, m in 1usize..4) {
        let t = traj(&a, 3, 0.05);
        let direct = discrete_derivative(&t, n + m).unwrap();
        let nested = discrete_derivative(&discrete_derivative(&t, n).unwrap(), m).unwrap();
        prop_assert_eq!(direct.len(), 10 - n - m);
        let scale = 0.05f64.powi(-((n + m) as i32));
        for (x, y) in direct.as_flat().iter().zip(nested.as_flat()) {
            prop_assert!((x - y).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn rms_is_a_nonnegative_symmetric_metric(a in signal(16), b in signal(16), c in signal(16)) {
        let (ta, tb, tc) = (traj(&a, 2, 1.0), traj(&b, 2, 1.0), traj(&c, 2, 1.0));
        let ab = rms_error(&ta, &tb).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - rms_error(&tb, &ta).unwrap()).abs() <= 1e-15);
        let tri = rms_error(&ta, &tc).unwrap() + rms_error(&tc, &tb).unwrap();
        prop_assert!(ab <= tri + 1e-12);
    }

    #[test]
    fn csv_text_round_trip(a in signal(12)) {
        let t = traj(&a, 3, 0.0025);
        let (back, _) = parse_csv(&to_csv_string(&t, &[]), std::path::Path::new("mem")).unwrap();
        for (x, y) in back.as_flat().iter().zip(t.as_flat()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }
}
