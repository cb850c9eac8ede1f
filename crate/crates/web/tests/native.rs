use blowup_web::{action_summary, profile_curve, rotation_angles};

#[test]
fn profile_curve_is_increasing_and_starts_at_rho() {
    let c = profile_curve(1.0, 0.5, 200).unwrap();
    assert_eq!(c.len(), 400);
    assert!((c[1] - 1.0).abs() < 1e-15);
    assert!(c.chunks(2).collect::<Vec<_>>().windows(2).all(|w| w[1][1] > w[0][1]));
    let last = &c[c.len() - 2..];
    assert!((last[0] - last[1]).abs() < 1e-12);
    assert!(profile_curve(1.0, 1.5, 10).is_err());
}

#[test]
fn default_loop_returns_to_angle_zero() {
    let a = rotation_angles(0.5, -0.5, true, 1.0, 101).unwrap();
    let end = a[a.len() - 1];
    assert!(end.abs() < 1e-9, "{end}");
    let mid = a[101];
    assert!((mid.abs() - std::f64::consts::PI).abs() < 1e-9, "{mid}");
}

#[test]
fn action_summary_reports_infinite_order() {
    let s = action_summary(2, (1, 1), (10, 1), (1, 1), (1, 1), false).unwrap();
    assert!(s.contains("\"verdict\":\"infinite\""), "{s}");
    assert!(s.contains("(1/3)τ^3"), "{s}");
    assert!(action_summary(2, (1, 0), (10, 1), (1, 1), (1, 1), false).is_err());
}
