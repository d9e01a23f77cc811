use fermi_rg::hoelder::{
    dyadic_pairs, empirical_exponent, hoelder_certificate, report_json, sine_family, verify_family, FamilyMember,
    ScaleBounds, SineMember,
};
use fermi_rg::Error;

fn bounds(alpha: f64, beta: f64, m: f64) -> ScaleBounds {
    ScaleBounds { alpha, beta, c0: 1.0, c1: 1.0, m }
}

#[test]
fn certificate_constant_example() {
    let b = bounds(1.0, 1.0, 2.0);
    assert_eq!(b.c_prime(), 8.0);
    let (e, c) = hoelder_certificate(&b).unwrap();
    assert_eq!(e, 0.5);
    assert_eq!(c, 8.0);
    let b = ScaleBounds { c0: 4.0, c1: 9.0, ..b };
    let (_, c) = hoelder_certificate(&b).unwrap();
    assert!((c - 8.0 * 2.0 * 3.0).abs() < 1e-13);
}

#[test]
fn sine_families_meet_the_certificate() {
    for (alpha, beta, m) in [(1.0, 1.0, 2.0), (0.6, 0.4, 2.0), (1.0, 2.0, 3.0)] {
        let b = bounds(alpha, beta, m);
        let pairs = dyadic_pairs(2, 24, 200, 7);
        let fam = sine_family(&b, 2f64.powi(-24));
        let r = verify_family(&b, &fam, &pairs).unwrap();
        assert!(r.hypotheses_hold);
        assert!(r.hypothesis_ratio <= 1.0 + 1e-12);
        let ratio = r.max_ratio.unwrap();
        assert!(ratio <= 1.0 && ratio > 0.0, "{alpha} {beta} {m}: {ratio}");
        let f = |t: f64| fam.iter().map(|s| s.value(t)).sum::<f64>();
        let fit = empirical_exponent(&f, &pairs).unwrap();
        assert!((fit.slope - r.exponent).abs() <= 0.05, "{alpha} {beta} {m}: {} vs {}", fit.slope, r.exponent);
    }
}

#[test]
fn sine_member_saturates_its_bounds() {
    let b = ScaleBounds { alpha: 0.6, beta: 0.4, c0: 2.0, c1: 3.0, m: 2.0 };
    let s = SineMember { bounds: b, j: 3 };
    let freq = 1.5 * 8.0;
    let t = std::f64::consts::FRAC_PI_2 / freq;
    assert!((s.value(t) - 2.0 * 2f64.powf(-1.8)).abs() < 1e-14);
    assert!((s.derivative(0.0) - 3.0 * 2f64.powf(1.2)).abs() < 1e-13);
    assert_eq!(s.scale(), 3);
}

#[test]
fn invalid_bounds_are_rejected() {
    for b in [
        bounds(0.0, 1.0, 2.0),
        bounds(1.0, -1.0, 2.0),
        bounds(1.0, 1.0, 1.0),
        ScaleBounds { c0: f64::NAN, ..bounds(1.0, 1.0, 2.0) },
    ] {
        assert!(matches!(hoelder_certificate(&b), Err(Error::Config(_))), "{b:?}");
    }
}

#[test]
fn too_few_separations_is_degenerate() {
    let pairs = dyadic_pairs(2, 5, 10, 1);
    assert!(matches!(empirical_exponent(&|t: f64| t, &pairs), Err(Error::DegenerateFit(_))));
    let pairs = dyadic_pairs(2, 20, 10, 1);
    let fit = empirical_exponent(&|t: f64| 3.0 * t, &pairs).unwrap();
    assert!((fit.slope - 1.0).abs() < 1e-12);
    assert!(fit.std_err < 1e-10);
}

#[test]
fn oversized_family_violates_hypotheses() {
    let b = bounds(1.0, 1.0, 2.0);
    let wide = ScaleBounds { c0: 3.0, c1: 3.0, ..b };
    let fam = sine_family(&wide, 2f64.powi(-16));
    let r = verify_family(&b, &fam, &dyadic_pairs(2, 16, 50, 3)).unwrap();
    assert!(!r.hypotheses_hold);
    assert!(r.hypothesis_ratio > 1.0);
    assert_eq!(r.max_ratio, None);
    let json: serde_json::Value = serde_json::from_str(&report_json(&r, None)).unwrap();
    assert_eq!(json["hypothesesHold"], false);
    assert!(json["maxRatio"].is_null());
}

#[test]
fn pairs_are_reproducible() {
    let a = dyadic_pairs(2, 10, 20, 42);
    assert_eq!(a, dyadic_pairs(2, 10, 20, 42));
    assert_ne!(a, dyadic_pairs(2, 10, 20, 43));
    assert_eq!(a.len(), 9 * 20);
    assert!(a.iter().all(|p| p.0 >= 0.0 && p.0 < 1.0));
    assert!((a[20].1 - a[20].0 - 0.125).abs() < 1e-15);
}
