use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fermi_rg::config::RunConfig;
use fermi_rg::hoelder;
use fermi_rg::kernel_algebra::{Kernel4, LegSpace};
use fermi_rg::model_scales::Scales;
use fermi_rg::occupation::{self, GProfile, LinearSelfEnergy};
use fermi_rg::quadrature::QuadConfig;
use fermi_rg::scenario::{self, ScenarioKind};
use fermi_rg::selfenergy;
use fermi_rg::{Complex64, Dispersion, Error, Momentum, QuadraticModel};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Shape(_) | Error::ScaleRange { .. } | Error::NonFinite(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Scale ratio, exponents and scale range.
#[pyclass(name = "ScaleParams", from_py_object)]
#[derive(Clone)]
pub struct PyScaleParams {
    inner: fermi_rg::ScaleParams,
}

#[pymethods]
impl PyScaleParams {
    #[new]
    #[pyo3(signature = (m = 2.0, aleph = 0.6, aleph_prime = 0.62, j0 = 2, jmax = 10, lambda0 = 0.01, upsilon = 0.1))]
    fn new(m: f64, aleph: f64, aleph_prime: f64, j0: i32, jmax: i32, lambda0: f64, upsilon: f64) -> PyResult<Self> {
        let inner = fermi_rg::ScaleParams {
            m,
            aleph,
            aleph_prime,
            j0,
            jmax,
            lambda0,
            upsilon,
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn m(&self) -> f64 {
        self.inner.m
    }

    #[getter]
    fn aleph(&self) -> f64 {
        self.inner.aleph
    }

    #[getter]
    fn j0(&self) -> i32 {
        self.inner.j0
    }

    #[getter]
    fn jmax(&self) -> i32 {
        self.inner.jmax
    }

    /// Sector length `l_j`.
    fn l(&self, j: i32) -> f64 {
        self.inner.l(j)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Scale decomposition of the quadratic model.
#[pyclass(name = "Scales")]
pub struct PyScales {
    inner: Scales,
}

#[pymethods]
impl PyScales {
    #[new]
    fn new(params: PyScaleParams) -> PyResult<Self> {
        Ok(Self {
            inner: Scales::quadratic(params.inner).map_err(to_py)?,
        })
    }

    fn nu(&self, j: i32, k0: f64, k1: f64, k2: f64) -> PyResult<f64> {
        self.inner.nu(j, Momentum::new(k0, k1, k2)).map_err(to_py)
    }

    fn nu_beyond(&self, k0: f64, k1: f64, k2: f64) -> PyResult<f64> {
        self.inner.nu_beyond(Momentum::new(k0, k1, k2)).map_err(to_py)
    }

    fn cutoff(&self, k1: f64, k2: f64) -> f64 {
        self.inner.model.cutoff([k1, k2])
    }

    fn scale_of(&self, k0: f64, k1: f64, k2: f64) -> PyResult<i32> {
        self.inner.scale_of(Momentum::new(k0, k1, k2)).map_err(to_py)
    }

    /// `|sum_j nu^(j) + nu^(>Jmax) - U|` at one momentum.
    fn partition_residual(&self, k0: f64, k1: f64, k2: f64) -> PyResult<f64> {
        let k = Momentum::new(k0, k1, k2);
        let p = &self.inner.params;
        let mut acc = self.inner.nu_beyond(k).map_err(to_py)?;
        for j in p.j0..=p.jmax {
            acc += self.inner.nu(j, k).map_err(to_py)?;
        }
        Ok((acc - self.inner.cutoff(k)).abs())
    }
}

/// Four legged kernel over bare positions with spin.
#[pyclass(name = "Kernel", skip_from_py_object)]
#[derive(Clone)]
pub struct PyKernel {
    inner: Kernel4,
}

#[pymethods]
impl PyKernel {
    #[staticmethod]
    #[pyo3(signature = (n, directed = true, amplitude = 1.0, seed = 0))]
    fn random(n: usize, directed: bool, amplitude: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            inner: Kernel4::random(LegSpace::positions(n), directed, amplitude, &mut rng),
        }
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn directed(&self) -> bool {
        self.inner.directed
    }

    fn get(&self, z: [usize; 4]) -> PyResult<Complex64> {
        let d = self.inner.dim();
        if z.iter().any(|&x| x >= d) {
            return Err(PyValueError::new_err(format!("index {z:?} outside dimension {d}")));
        }
        Ok(self.inner.get(z))
    }

    fn antisymmetrize(&self) -> Self {
        Self {
            inner: self.inner.antisymmetrize(),
        }
    }

    fn project_number_conserving(&self) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.project_number_conserving().map_err(to_py)?,
        })
    }

    fn flip(&self) -> Self {
        Self {
            inner: self.inner.flip(),
        }
    }

    fn invert(&self) -> Self {
        Self {
            inner: self.inner.invert(),
        }
    }

    fn reduce_pp(&self) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.reduce_pp().map_err(to_py)?,
        })
    }

    fn reduce_ph(&self) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.reduce_ph().map_err(to_py)?,
        })
    }

    fn value_pp(&self) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.value_pp().map_err(to_py)?,
        })
    }

    fn value_ph(&self) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.value_ph().map_err(to_py)?,
        })
    }

    fn is_antisymmetric(&self, tol: f64) -> bool {
        self.inner.is_antisymmetric(tol)
    }

    fn inversion_residual(&self) -> f64 {
        self.inner.inversion_residual()
    }

    fn sup_norm(&self) -> f64 {
        self.inner.sup_norm()
    }

    fn max_abs_diff(&self, other: &PyKernel) -> PyResult<f64> {
        self.inner.max_abs_diff(&other.inner).map_err(to_py)
    }

    fn __add__(&self, other: &PyKernel) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.add(&other.inner).map_err(to_py)?,
        })
    }

    fn __sub__(&self, other: &PyKernel) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.sub(&other.inner).map_err(to_py)?,
        })
    }
}

/// `(exponent, constant)` of the Hoelder certificate.
#[pyfunction]
fn hoelder_certificate(alpha: f64, beta: f64, c0: f64, c1: f64, m: f64) -> PyResult<(f64, f64)> {
    hoelder::hoelder_certificate(&hoelder::ScaleBounds { alpha, beta, c0, c1, m }).map_err(to_py)
}

/// Measured and predicted occupation jump at polar angle `theta` for
/// `S = i lambda g(theta) k0 / (1 + k0^2)`.
#[pyfunction]
#[pyo3(signature = (lam, profile, theta))]
fn jump_at(lam: f64, profile: &str, theta: f64) -> PyResult<(f64, f64)> {
    let s = LinearSelfEnergy {
        lambda: lam,
        profile: GProfile::parse(profile).map_err(to_py)?,
    };
    s.validate().map_err(to_py)?;
    let model = QuadraticModel::default();
    let kbar = model.fermi_point(theta.rem_euclid(2.0 * std::f64::consts::PI) * model.radius());
    let j = occupation::jump_at(&model, &s, kbar, &[0.04, 0.02, 0.01, 0.005], QuadConfig::default()).map_err(to_py)?;
    Ok((j.measured, j.predicted))
}

/// Proper self-energy from `P`, `Q` at `(k0, e)`.
#[pyfunction]
fn proper_sigma(k0: f64, e: f64, p: Complex64, q: Complex64) -> PyResult<Complex64> {
    selfenergy::proper_sigma(k0, e, p, q).map_err(to_py)
}

/// `(max_ratio, passed)` of the derivative budget of the saturating family.
#[pyfunction]
#[pyo3(signature = (params, top, factor = 1.0))]
fn saturating_budget(params: PyScaleParams, top: i32, factor: f64) -> PyResult<(f64, bool)> {
    let scales = Scales::quadratic(params.inner.clone()).map_err(to_py)?;
    let fam = selfenergy::ScaleFamily::saturating(&params.inner, top, factor);
    let r = selfenergy::check_q_budget(&fam, &scales).map_err(to_py)?;
    Ok((r.max_ratio, r.passed))
}

/// Runs one scenario from config text: `(exit_code, primary_output, diagnostics)`.
#[pyfunction]
#[pyo3(signature = (kind, config = "", seed = 0))]
fn run_scenario(kind: &str, config: &str, seed: u64) -> PyResult<(i32, String, Vec<String>)> {
    let k = match kind {
        "jump-sweep" => ScenarioKind::JumpSweep,
        "ladder-demo" => ScenarioKind::LadderDemo,
        "resum" => ScenarioKind::Resum,
        "hoelder-check" => ScenarioKind::HoelderCheck,
        "norm-budget" => ScenarioKind::NormBudget,
        _ => return Err(PyValueError::new_err(format!("unknown scenario {kind}"))),
    };
    let cfg = RunConfig::parse(config).map_err(to_py)?;
    let o = scenario::run(&scenario::Scenario::from_config(&cfg, k, seed));
    Ok((o.exit_code, o.primary, o.diagnostics))
}

/// Adds every class and function to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScaleParams>()?;
    m.add_class::<PyScales>()?;
    m.add_class::<PyKernel>()?;
    m.add_function(wrap_pyfunction!(hoelder_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(jump_at, m)?)?;
    m.add_function(wrap_pyfunction!(proper_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(saturating_budget, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}

#[pymodule]
fn fermi_rg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
