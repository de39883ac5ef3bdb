use hdkde_demo::{kde_curve_inner, kernel_curve_inner, rate_curve_inner};

#[test]
fn kernel_curve_shape() {
    let c = kernel_curve_inner("epanechnikov", 61).unwrap();
    assert_eq!(c.len(), 122);
    assert_eq!((c[60], c[61]), (0.0, 0.75));
    assert_eq!(c[1], 0.0);
    let riemann: f64 = c.chunks(2).map(|p| p[1] * 0.1).sum();
    assert!((riemann - 1.0).abs() < 1e-2);
    // the order-4 kernel dips below zero
    assert!(kernel_curve_inner("order4", 201).unwrap().chunks(2).any(|p| p[1] < 0.0));
    assert!(kernel_curve_inner("box", 10).is_err());
    assert!(kernel_curve_inner("gaussian", 1).is_err());
}

#[test]
fn kde_curve_tracks_truth() {
    let c = kde_curve_inner("epanechnikov", 20_000, 0.2, 0.0, 1, 121).unwrap();
    assert_eq!(c.len(), 363);
    let worst = c.chunks(3).map(|t| (t[1] - t[2]).abs()).fold(0.0, f64::max);
    assert!(worst < 0.03, "{worst}");
    let again = kde_curve_inner("epanechnikov", 20_000, 0.2, 0.0, 1, 121).unwrap();
    assert_eq!(c, again);

    let bumped = kde_curve_inner("gaussian", 500, 0.3, 2000.0, 5, 101).unwrap();
    let flat = kde_curve_inner("gaussian", 500, 0.3, 0.0, 5, 101).unwrap();
    assert!(bumped.chunks(3).zip(flat.chunks(3)).any(|(a, b)| a[2] != b[2]));
    assert!(kde_curve_inner("gaussian", 500, 0.3, 1e9, 5, 101).is_err());
    assert!(kde_curve_inner("gaussian", 0, 0.3, 0.0, 5, 101).is_err());
    assert!(kde_curve_inner("gaussian", 10, -1.0, 0.0, 5, 101).is_err());
}

#[test]
fn rate_curve_schedules() {
    let c = rate_curve_inner(2.0, 0.5, 40).unwrap();
    assert_eq!(c.len(), 160);
    let rows: Vec<&[f64]> = c.chunks(4).collect();
    assert!((rows[9][1] - 0.0625).abs() < 1e-15);
    assert!(rows[39][2] < 0.5 && rows[39][2] < rows[9][2]);
    assert!(rows[39][3] > 1.0);
    assert!(rate_curve_inner(-1.0, 0.5, 40).is_err());
    assert!(rate_curve_inner(2.0, 0.5, 1).is_err());
}
