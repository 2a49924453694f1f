use obilc_web::{sweep_curves, DemoOptions, Session};

fn small(surrogate: &str) -> DemoOptions {
    DemoOptions {
        samples: 60,
        surrogate: surrogate.into(),
        ..DemoOptions::default()
    }
}

#[test]
fn both_surrogates_learn() {
    for name in ["linear", "piecewise"] {
        let mut s = Session::new(&small(name)).unwrap();
        let first = s.step().unwrap();
        assert_eq!(first.k, 1);
        let mut last = first.clone();
        for _ in 0..9 {
            last = s.step().unwrap();
            assert!(last.max_violation <= 1e-6, "{name} k={}: {:?}", last.k, last);
        }
        assert_eq!(last.k, 10);
        assert!(last.rms_um < 0.5 * first.rms_um, "{name}: {} -> {}", first.rms_um, last.rms_um);
    }
}

#[test]
fn xy_has_one_point_per_sample() {
    let mut s = Session::new(&small("linear")).unwrap();
    s.step().unwrap();
    let xy = s.xy();
    assert_eq!(xy.target.len(), 60);
    assert_eq!(xy.initial.len(), 60);
    assert_eq!(xy.latest.len(), 60);
    assert_eq!(xy.target[0], [0.0, 0.0]);
}

#[test]
fn sweep_returns_one_curve_per_exponent() {
    let curves = sweep_curves(&small("linear"), &[0.3, 0.9], 4).unwrap();
    assert_eq!(curves.len(), 2);
    assert!(curves.iter().all(|c| c.rms_um.len() == 4));
    // Same first experiment, different step sizes afterwards.
    assert_eq!(curves[0].rms_um[0], curves[1].rms_um[0]);
    assert_ne!(curves[0].rms_um[3], curves[1].rms_um[3]);
}

#[test]
fn rejects_bad_options() {
    assert!(Session::new(&small("cubic")).is_err());
    assert!(Session::new(&DemoOptions { samples: 5, ..small("linear") }).is_err());
    assert!(Session::new(&DemoOptions { eta0: 0.0, ..small("linear") }).is_err());
}
