use fermi_rg::config::{FamilySpec, HoelderSpec, JumpSweepSpec, LadderDemoSpec, RunConfig, SECTIONS};
use fermi_rg::emit::{diagnostic, fmt_f64, Cell, Table};
use fermi_rg::{Error, ScaleParams};

#[test]
fn float_format_is_fixed() {
    assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
    assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
    assert_eq!(fmt_f64(f64::INFINITY), "inf");
    assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
    assert_eq!(fmt_f64(f64::NAN), "NaN");
    for x in [0.1, 1.0 / 3.0, 6.02e23, -1e-300] {
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }
}

#[test]
fn empty_table_has_only_a_header() {
    let t = Table::new(&["a", "b"]);
    assert_eq!(t.to_csv().unwrap(), "a,b\n");
}

#[test]
fn csv_rendering() {
    let mut t = Table::new(&["i", "x", "flag"]);
    t.push(vec![3.into(), 0.5.into(), "ok".into()]).unwrap();
    t.push(vec![(-1i64).into(), f64::NAN.into(), "a,b".into()]).unwrap();
    let csv = t.to_csv().unwrap();
    assert_eq!(csv, "i,x,flag\n3,5.0000000000000000e-1,ok\n-1,NaN,\"a,b\"\n");
    assert!(matches!(t.push(vec![1.into()]), Err(Error::Shape(_))));
}

#[test]
fn json_round_trip() {
    let mut t = Table::new(&["i", "x", "flag"]);
    t.push(vec![7.into(), (1.0 / 3.0).into(), true.into()]).unwrap();
    t.push(vec![0.into(), 1e-300.into(), "x".into()]).unwrap();
    let back = Table::from_json(&t.to_json()).unwrap();
    assert_eq!(back, t);
    assert_eq!(back.rows[0][1].as_f64(), Some(1.0 / 3.0));
    assert_eq!(back.rows[0][2], Cell::Text("true".into()));
    assert!(matches!(Table::from_json("{}"), Err(Error::Config(_))));
    assert!(matches!(Table::from_json("not json"), Err(Error::Config(_))));
}

#[test]
fn diagnostic_record() {
    let d: serde_json::Value = serde_json::from_str(&diagnostic("budget", "over \"budget\"", 2)).unwrap();
    assert_eq!(d["status"], "error");
    assert_eq!(d["kind"], "budget");
    assert_eq!(d["message"], "over \"budget\"");
    assert_eq!(d["exitCode"], 2);
}

#[test]
fn empty_config_gives_defaults() {
    let c = RunConfig::parse("").unwrap();
    assert_eq!(c.params, ScaleParams::default());
    assert_eq!(c.model, "quadratic");
    assert_eq!(c.seed, None);
    assert!(c.jump_sweep.is_none() && c.ladder_demo.is_none() && c.hoelder_check.is_none());
    assert_eq!(SECTIONS.len(), 5);
}

#[test]
fn full_config_parses() {
    let text = r#"
M = 3.0
Jmax = 12
seed = 17

[jump-sweep]
lambda = 0.2
g-profile = "cos2"
nPoints = 8

[ladder-demo]
scales = 3

[resum]
family = "saturating:0.5"
top = 6

[norm-budget]
family = "zero"

[hoelder-check]
alpha = 0.6
beta = 0.4
mMax = 20
"#;
    let c = RunConfig::parse(text).unwrap();
    assert_eq!(c.params.m, 3.0);
    assert_eq!(c.params.jmax, 12);
    assert_eq!(c.seed, Some(17));
    let js = c.jump_sweep.unwrap();
    assert_eq!(js, JumpSweepSpec { lambda: 0.2, g_profile: "cos2".into(), n_points: 8, ..Default::default() });
    assert_eq!(c.ladder_demo.unwrap(), LadderDemoSpec { scales: 3, ..Default::default() });
    assert_eq!(c.resum.unwrap(), FamilySpec { family: "saturating:0.5".into(), top: Some(6), samples: 200 });
    assert_eq!(c.norm_budget.unwrap().family, "zero");
    let h = c.hoelder_check.unwrap();
    assert_eq!(h, HoelderSpec { alpha: 0.6, beta: 0.4, m_max: 20, ..Default::default() });
    assert_eq!(h.bounds().m, 2.0);
}

#[test]
fn config_errors() {
    for bad in [
        "model = \"cubic\"",
        "model = 3",
        "seed = -1",
        "M = 1.0",
        "unknown = 2",
        "[jump-sweep]\nlambda = \"x\"",
        "[jump-sweep]\nbogus = 1",
        "jump-sweep = 3",
        "this is not toml",
    ] {
        assert!(matches!(RunConfig::parse(bad), Err(Error::Config(_))), "{bad}");
    }
    let missing = RunConfig::load(std::path::Path::new("/nonexistent/run.toml"));
    assert!(matches!(missing, Err(Error::Config(_))));
}
