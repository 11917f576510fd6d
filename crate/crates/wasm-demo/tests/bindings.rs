use skewgraph_web::{curve_values, dimension_values, field_values};

#[test]
fn unforced_field_is_flat() {
    let v = field_values(0.0, 8, 200).unwrap();
    assert_eq!(v.len(), 2 * 64);
    let (plus, minus) = v.split_at(64);
    assert!(plus.iter().all(|p| (p - plus[0]).abs() < 1e-12));
    assert!(minus.iter().zip(plus).all(|(m, p)| (m + p).abs() < 1e-12));
}

#[test]
fn depth_two_field_orders_the_graphs() {
    let v = field_values(0.1, 16, 2).unwrap();
    let (plus, minus) = v.split_at(256);
    assert!(plus.iter().zip(minus).all(|(p, m)| m <= p));
}

#[test]
fn rejects_oversized_requests() {
    assert!(field_values(0.1, 1000, 2).is_err());
    assert!(curve_values(0.6, 20).is_err());
    assert!(curve_values(1.5, 8).is_err());
}

#[test]
fn curve_starts_at_geometric_sum() {
    let w = curve_values(0.6, 10).unwrap();
    assert_eq!(w.len(), 1024);
    assert!((w[0] - (1.0 - 0.6f64.powi(60)) / 0.4).abs() < 1e-12);
}

#[test]
fn dimension_near_formula() {
    let d = dimension_values(0.6).unwrap();
    assert!((d[0] - d[1]).abs() < 0.1, "{d:?}");
}
