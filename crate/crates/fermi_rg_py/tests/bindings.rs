use pyo3::prelude::*;
use pyo3::types::PyModule;

fn with_module<F: FnOnce(&Bound<'_, PyModule>)>(f: F) {
    Python::attach(|py| {
        let m = PyModule::new(py, "fermi_rg_py").unwrap();
        fermi_rg_py::register(&m).unwrap();
        f(&m);
    });
}

#[test]
fn certificate_spot_value() {
    with_module(|m| {
        let (e, c): (f64, f64) = m
            .getattr("hoelder_certificate")
            .unwrap()
            .call1((1.0, 1.0, 1.0, 1.0, 2.0))
            .unwrap()
            .extract()
            .unwrap();
        assert_eq!(e, 0.5);
        assert!((c - 8.0).abs() < 1e-14);
    });
}

#[test]
fn kernel_reconstruction_through_python() {
    with_module(|m| {
        let k = m.getattr("Kernel").unwrap().getattr("random").unwrap().call1((2, true, 1.0, 3)).unwrap();
        let f = k
            .call_method0("project_number_conserving")
            .unwrap()
            .call_method0("antisymmetrize")
            .unwrap();
        let pp = f.call_method0("reduce_pp").unwrap().call_method0("value_pp").unwrap();
        let ph = f.call_method0("reduce_ph").unwrap().call_method0("value_ph").unwrap();
        let sum = pp.call_method1("__add__", (ph,)).unwrap();
        let d: f64 = f.call_method1("max_abs_diff", (sum,)).unwrap().extract().unwrap();
        assert!(d <= 1e-13, "{d}");
    });
}

#[test]
fn partition_of_unity_and_jump() {
    with_module(|m| {
        let params = m.getattr("ScaleParams").unwrap().call0().unwrap();
        let scales = m.getattr("Scales").unwrap().call1((params,)).unwrap();
        let r: f64 = scales
            .call_method1("partition_residual", (0.013, 1.40, 0.05))
            .unwrap()
            .extract()
            .unwrap();
        assert!(r <= 1e-12);
        let (meas, pred): (f64, f64) = m
            .getattr("jump_at")
            .unwrap()
            .call1((0.2, "constant", 0.3))
            .unwrap()
            .extract()
            .unwrap();
        assert!((pred - 1.25).abs() < 1e-15);
        assert!((meas - pred).abs() < 1e-3);
    });
}

#[test]
fn errors_map_to_python_exceptions() {
    with_module(|m| {
        let err = m.getattr("ScaleParams").unwrap().call1((0.5,)).unwrap_err();
        Python::attach(|py| assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py)));
        let err = m.getattr("run_scenario").unwrap().call1(("nope",)).unwrap_err();
        Python::attach(|py| assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py)));
    });
}

#[test]
fn scenario_exit_codes() {
    with_module(|m| {
        let (code, out, _): (i32, String, Vec<String>) = m
            .getattr("run_scenario")
            .unwrap()
            .call1(("norm-budget", "[norm-budget]\nfamily = \"saturating:3\"\n"))
            .unwrap()
            .extract()
            .unwrap();
        assert_eq!(code, 2);
        assert!(out.starts_with("i,l,d0,d1,d2"));
    });
}
