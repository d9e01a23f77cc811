use fermi_rg::quadrature::{gk15, integrate, integrate_to_inf, neville_zero, QuadConfig};
use fermi_rg::Error;

#[test]
fn kronrod_panel_is_exact_for_low_degree() {
    let (v, e) = gk15(&|x: f64| 3.0 * x.powi(5) - x * x + 2.0, -1.0, 2.0);
    let exact = 3.0 * (64.0 - 1.0) / 6.0 - (8.0 + 1.0) / 3.0 + 6.0;
    assert!((v - exact).abs() < 1e-13);
    assert!(e < 1e-12);
}

#[test]
fn adaptive_integration_examples() {
    let cfg = QuadConfig::default();
    let (v, _) = integrate(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, cfg).unwrap();
    assert!((v - 2.0).abs() < 1e-12);
    let (v, _) = integrate(&|x: f64| x.abs().sqrt(), -1.0, 1.0, cfg).unwrap();
    assert!((v - 4.0 / 3.0).abs() < 1e-10);
    let (v, _) = integrate_to_inf(&|x: f64| 1.0 / (1.0 + x * x), 0.0, cfg).unwrap();
    assert!((v - std::f64::consts::FRAC_PI_2).abs() < 1e-11);
    assert_eq!(integrate(&|x: f64| x, 1.0, 1.0, cfg).unwrap().0, 0.0);
}

#[test]
fn integration_failures_are_reported() {
    let cfg = QuadConfig::default();
    assert!(matches!(integrate(&|_x: f64| f64::NAN, 0.0, 1.0, cfg), Err(Error::NonFinite(_))));
    let tight = QuadConfig { max_panels: 4, ..cfg };
    assert!(matches!(
        integrate(&|x: f64| (1.0 / x.max(1e-300)).sin(), 0.0, 1.0, tight),
        Err(Error::Quadrature(_))
    ));
}

#[test]
fn extrapolation_to_zero() {
    let h = [0.4, 0.2, 0.1, 0.05];
    let v: Vec<f64> = h.iter().map(|x| 1.5 - 2.0 * x + 0.25 * x * x).collect();
    let (value, change) = neville_zero(&h, &v).unwrap();
    assert!((value - 1.5).abs() < 1e-14);
    assert!(change < 1e-14);
    assert!(matches!(neville_zero(&h[..1], &v[..1]), Err(Error::Extrapolation(_))));
    assert!(matches!(neville_zero(&[0.1, 0.1], &[1.0, 2.0]), Err(Error::Extrapolation(_))));
}
