//! Occupation number `N(k) = lim_{tau -> 0+} int dk0/2pi e^{i k0 tau} / (i k0 - e - S)`
//! through the `I1 + I2 + I3 - I3' + I4` splitting, the jump across the Fermi
//! curve and the free time-domain kernel.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emit::Table;
use crate::error::{Error, Result};
use crate::model_scales::{Dispersion, QuadraticModel};
use crate::quadrature::{integrate, integrate_to_inf, neville_zero, QuadConfig};

/// Angular profile `g(theta)` of the linear self-energy model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GProfile {
    /// `g = 1`.
    Constant,
    /// `g = 1 + 0.25 cos 2 theta`.
    Cos2,
    /// `g = 1 + 0.2 sin theta`.
    Sin,
}

impl GProfile {
    pub fn eval(&self, theta: f64) -> f64 {
        match self {
            GProfile::Constant => 1.0,
            GProfile::Cos2 => 1.0 + 0.25 * (2.0 * theta).cos(),
            GProfile::Sin => 1.0 + 0.2 * theta.sin(),
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            GProfile::Constant => 1.0,
            GProfile::Cos2 => 1.25,
            GProfile::Sin => 1.2,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(GProfile::Constant),
            "cos2" => Ok(GProfile::Cos2),
            "sin" => Ok(GProfile::Sin),
            _ => Err(Error::Config(format!("unknown g-profile {s}"))),
        }
    }
}

/// Self-energy with its `k0` derivative.
pub trait SelfEnergyModel: Send + Sync {
    fn s(&self, k0: f64, k: [f64; 2]) -> Complex64;
    fn ds_dk0(&self, k0: f64, k: [f64; 2]) -> Complex64;
    /// Hoelder constant `C` and exponent `eps` of `dS/dk0` in `k0`.
    fn hoelder(&self) -> (f64, f64);
}

/// `S = i lambda g(theta) k0 / (1 + k0^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSelfEnergy {
    pub lambda: f64,
    pub profile: GProfile,
}

impl LinearSelfEnergy {
    pub fn zero() -> Self {
        Self {
            lambda: 0.0,
            profile: GProfile::Constant,
        }
    }

    pub fn g(&self, k: [f64; 2]) -> f64 {
        self.profile.eval(k[1].atan2(k[0]))
    }

    /// Hypotheses `|S|, |dS/dk0| <= 1/2`, `|S(0, k)| <= |e|/2` by construction.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && (self.lambda * self.profile.sup()).abs() <= 0.5) {
            return Err(Error::Hypothesis(format!(
                "|lambda g| = {} exceeds 1/2",
                (self.lambda * self.profile.sup()).abs()
            )));
        }
        Ok(())
    }
}

impl SelfEnergyModel for LinearSelfEnergy {
    fn s(&self, k0: f64, k: [f64; 2]) -> Complex64 {
        Complex64::new(0.0, self.lambda * self.g(k) * k0 / (1.0 + k0 * k0))
    }

    fn ds_dk0(&self, k0: f64, k: [f64; 2]) -> Complex64 {
        let d = 1.0 + k0 * k0;
        Complex64::new(0.0, self.lambda * self.g(k) * (1.0 - k0 * k0) / (d * d))
    }

    fn hoelder(&self) -> (f64, f64) {
        (3.0 * (self.lambda * self.profile.sup()).abs(), 1.0)
    }
}

/// Derived quantities `A`, `E` of a self-energy at a momentum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Split {
    pub e: f64,
    pub a: f64,
    pub big_e: f64,
}

pub fn split(model: &dyn Dispersion, s: &dyn SelfEnergyModel, k: [f64; 2]) -> Split {
    let e = model.e(k);
    let a = 1.0 - (s.ds_dk0(0.0, k) / Complex64::new(0.0, 1.0)).re;
    let big_e = e + s.s(0.0, k).re;
    Split { e, a, big_e }
}

/// Default `eta = 0.5 min(1, 10 |E|)`.
pub fn default_eta(big_e: f64) -> f64 {
    0.5 * (10.0 * big_e.abs()).min(1.0)
}

/// `lim_{tau -> 0} I1 = -(sgn e / (pi A)) arctan(eta |A / E|)`.
pub fn i1_closed_limit(e: f64, a: f64, big_e: f64, eta: f64) -> Result<f64> {
    if e == 0.0 || big_e == 0.0 {
        return Err(Error::Singular("I1 limit on the Fermi curve".into()));
    }
    Ok(-e.signum() / (PI * a) * (eta * (a / big_e).abs()).atan())
}

/// `I1` at `tau = 0` by quadrature of the real part over `|k0| < eta`.
pub fn i1_quadrature(a: f64, big_e: f64, eta: f64, cfg: QuadConfig) -> Result<f64> {
    let f = |k0: f64| -big_e / (a * a * k0 * k0 + big_e * big_e) / (2.0 * PI);
    let (l, _) = integrate(&f, -eta, 0.0, cfg)?;
    let (r, _) = integrate(&f, 0.0, eta, cfg)?;
    Ok(l + r)
}

/// `I3(tau) = e^{e tau}` for `e < 0`, `0` for `e > 0`.
pub fn i3_closed(e: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Hypothesis(format!("tau = {tau} must be positive")));
    }
    if e == 0.0 {
        return Err(Error::Singular("I3 on the Fermi curve".into()));
    }
    Ok(if e < 0.0 { (e * tau).exp() } else { 0.0 })
}

/// `I3` with the `k0` integral cut at `K_n = (2 pi n + pi/2)/tau`, extrapolated
/// in `1/K` by Neville over `n = n0 .. n0 + count`.
pub fn i3_cutoff_extrapolated(e: f64, tau: f64, n0: usize, count: usize, cfg: QuadConfig) -> Result<(f64, f64)> {
    if !(tau > 0.0) || e == 0.0 {
        return Err(Error::Hypothesis("I3 cutoff needs tau > 0 and e != 0".into()));
    }
    let f = |k0: f64| ((-e) * (k0 * tau).cos() + k0 * (k0 * tau).sin()) / (k0 * k0 + e * e) / PI;
    let period = 2.0 * PI / tau;
    let mut hs = Vec::with_capacity(count);
    let mut vs = Vec::with_capacity(count);
    let mut acc = 0.0;
    let mut reached = 0.0;
    for n in n0..n0 + count {
        let kn = (2.0 * PI * n as f64 + 0.5 * PI) / tau;
        while reached + period < kn {
            acc += integrate(&f, reached, reached + period, cfg)?.0;
            reached += period;
        }
        let part = integrate(&f, reached, kn, cfg)?.0;
        hs.push(1.0 / kn);
        vs.push(acc + part);
    }
    neville_zero(&hs, &vs)
}

/// `lim_{tau -> 0} I3' = -(sgn e / pi) arctan(eta / |e|)`.
pub fn i3_prime_limit(e: f64, eta: f64) -> Result<f64> {
    i1_closed_limit(e, 1.0, e, eta)
}

/// `I2` at `tau = 0`: real and imaginary parts.
pub fn i2_at_zero(s: &dyn SelfEnergyModel, k: [f64; 2], sp: Split, eta: f64, cfg: QuadConfig) -> Result<(f64, f64)> {
    let ds0 = s.ds_dk0(0.0, k);
    let s0 = s.s(0.0, k);
    let integrand = |k0: f64| -> Complex64 {
        let r = s.s(k0, k) - s0 - ds0 * k0;
        let base = Complex64::new(-sp.big_e, sp.a * k0);
        (1.0 / (base - r) - 1.0 / base) / (2.0 * PI)
    };
    let re = |k0: f64| integrand(k0).re;
    let im = |k0: f64| integrand(k0).im;
    let r = integrate(&re, -eta, 0.0, cfg)?.0 + integrate(&re, 0.0, eta, cfg)?.0;
    let i = integrate(&im, -eta, 0.0, cfg)?.0 + integrate(&im, 0.0, eta, cfg)?.0;
    Ok((r, i))
}

/// `I4` at `tau = 0` over `|k0| >= eta`: real and imaginary parts.
pub fn i4_at_zero(s: &dyn SelfEnergyModel, k: [f64; 2], e: f64, eta: f64, cfg: QuadConfig) -> Result<(f64, f64)> {
    let integrand = |k0: f64| -> Complex64 {
        let base = Complex64::new(-e, k0);
        let sv = s.s(k0, k);
        sv / (base * (base - sv)) / (2.0 * PI)
    };
    let re_pos = |x: f64| integrand(x).re;
    let re_neg = |x: f64| integrand(-x).re;
    let im_pos = |x: f64| integrand(x).im;
    let im_neg = |x: f64| integrand(-x).im;
    let r = integrate_to_inf(&re_pos, eta, cfg)?.0 + integrate_to_inf(&re_neg, eta, cfg)?.0;
    let i = integrate_to_inf(&im_pos, eta, cfg)?.0 + integrate_to_inf(&im_neg, eta, cfg)?.0;
    Ok((r, i))
}

/// Terms of the splitting at `tau -> 0+`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Occupation {
    pub n: f64,
    pub imag: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub i3_prime: f64,
    pub i4: f64,
    pub eta: f64,
}

/// `N(k)` with an explicit `eta`.
pub fn occupation_with_eta(
    model: &dyn Dispersion,
    s: &dyn SelfEnergyModel,
    k: [f64; 2],
    eta: f64,
    cfg: QuadConfig,
) -> Result<Occupation> {
    let sp = split(model, s, k);
    if sp.e == 0.0 {
        return Err(Error::Singular("occupation on the Fermi curve".into()));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Hypothesis(format!("eta = {eta} must be positive")));
    }
    let s0 = s.s(0.0, k);
    if s0.norm() > 0.5 * sp.e.abs() + 1e-15 {
        return Err(Error::Hypothesis("|S(0, k)| exceeds |e|/2".into()));
    }
    let i1 = i1_closed_limit(sp.e, sp.a, sp.big_e, eta)?;
    let (i2, i2i) = i2_at_zero(s, k, sp, eta, cfg)?;
    let i3 = if sp.e < 0.0 { 1.0 } else { 0.0 };
    let i3p = i3_prime_limit(sp.e, eta)?;
    let (i4, i4i) = i4_at_zero(s, k, sp.e, eta, cfg)?;
    Ok(Occupation {
        n: i1 + i2 + i3 - i3p + i4,
        imag: i2i + i4i,
        i1,
        i2,
        i3,
        i3_prime: i3p,
        i4,
        eta,
    })
}

/// `N(k)` with the default `eta`.
pub fn occupation_n(model: &dyn Dispersion, s: &dyn SelfEnergyModel, k: [f64; 2], cfg: QuadConfig) -> Result<Occupation> {
    let sp = split(model, s, k);
    occupation_with_eta(model, s, k, default_eta(sp.big_e), cfg)
}

/// Measured and predicted jump at a Fermi point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub n_in: f64,
    pub n_out: f64,
    pub measured: f64,
    pub predicted: f64,
    pub extrapolation_error: f64,
}

/// Limits from both sides along the normal by Neville extrapolation over the
/// offsets `deltas` (positive distances).
pub fn jump_at(
    model: &dyn Dispersion,
    s: &dyn SelfEnergyModel,
    kbar: [f64; 2],
    deltas: &[f64],
    cfg: QuadConfig,
) -> Result<Jump> {
    if deltas.len() < 2 || deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::Hypothesis("need at least two positive offsets".into()));
    }
    let g = model.grad_e(kbar);
    let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
    if gn == 0.0 {
        return Err(Error::Singular("vanishing Fermi velocity".into()));
    }
    let nrm = [g[0] / gn, g[1] / gn];
    let side = |sign: f64| -> Result<(f64, f64)> {
        let vals: Vec<f64> = deltas
            .iter()
            .map(|d| {
                let k = [kbar[0] + sign * d * nrm[0], kbar[1] + sign * d * nrm[1]];
                occupation_n(model, s, k, cfg).map(|o| o.n)
            })
            .collect::<Result<_>>()?;
        neville_zero(deltas, &vals)
    };
    let (n_in, ein) = side(-1.0)?;
    let (n_out, eout) = side(1.0)?;
    let a = 1.0 - (s.ds_dk0(0.0, kbar) / Complex64::new(0.0, 1.0)).re;
    let err = ein.max(eout);
    if err > 1e-3 {
        return Err(Error::Extrapolation(format!("one-sided limits unstable: {err:e}")));
    }
    Ok(Jump {
        n_in,
        n_out,
        measured: n_in - n_out,
        predicted: 1.0 / a,
        extrapolation_error: err,
    })
}

/// `(1/(1-w)) U(k) e^{x0 e/(1-w)} chi(k, x0)` with `chi = 1` for `e < 0, x0 >= 0`,
/// `-1` for `e > 0, x0 < 0`, else `0`.
pub fn time_domain_free(model: &dyn Dispersion, k: [f64; 2], x0: f64, w: f64) -> Result<f64> {
    if !(w.abs() < 1.0) {
        return Err(Error::Hypothesis(format!("|w| = {} must be below 1", w.abs())));
    }
    let e = model.e(k);
    let chi = if e < 0.0 && x0 >= 0.0 {
        1.0
    } else if e > 0.0 && x0 < 0.0 {
        -1.0
    } else {
        0.0
    };
    if chi == 0.0 {
        return Ok(0.0);
    }
    Ok(chi * model.cutoff(k) * (x0 * e / (1.0 - w)).exp() / (1.0 - w))
}

/// `int dx0 e^{-i k0 x0} f(x0)` of the free kernel by quadrature.
pub fn time_domain_transform(model: &dyn Dispersion, k: [f64; 2], k0: f64, w: f64, cfg: QuadConfig) -> Result<Complex64> {
    let e = model.e(k);
    let sign = if e < 0.0 { 1.0 } else { -1.0 };
    let f = |x: f64| time_domain_free(model, k, sign * x, w).unwrap_or(0.0);
    let re = |x: f64| f(x) * (k0 * sign * x).cos();
    let im = |x: f64| -f(x) * (k0 * sign * x).sin();
    let start = if sign > 0.0 { 0.0 } else { f64::MIN_POSITIVE };
    let r = integrate_to_inf(&re, start, cfg)?.0;
    let i = integrate_to_inf(&im, start, cfg)?.0;
    Ok(Complex64::new(r, i))
}

/// `U / (i (1-w) k0 - e)`.
pub fn time_domain_expected(model: &dyn Dispersion, k: [f64; 2], k0: f64, w: f64) -> Complex64 {
    model.cutoff(k) / Complex64::new(-model.e(k), (1.0 - w) * k0)
}

/// Jump sweep settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepConfig {
    pub n_points: usize,
    pub deltas: Vec<f64>,
    pub tolerance: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_points: 16,
            deltas: vec![0.04, 0.02, 0.01, 0.005],
            tolerance: 1e-3,
        }
    }
}

/// Rows `theta, N_in, N_out, jumpMeasured, jumpPredicted, absErr, flag`.
pub fn fermi_sweep(model: &QuadraticModel, s: Arc<dyn SelfEnergyModel>, cfg: &SweepConfig, quad: QuadConfig) -> Result<Table> {
    let per = model.fermi_length();
    let rows: Vec<Vec<crate::emit::Cell>> = (0..cfg.n_points)
        .into_par_iter()
        .map(|i| {
            let arc = per * i as f64 / cfg.n_points as f64;
            let kbar = model.fermi_point(arc);
            let theta = kbar[1].atan2(kbar[0]);
            match jump_at(model, s.as_ref(), kbar, &cfg.deltas, quad) {
                Ok(j) => {
                    let err = (j.measured - j.predicted).abs();
                    let flag = if err <= cfg.tolerance { "ok" } else { "tolerance" };
                    vec![
                        theta.into(),
                        j.n_in.into(),
                        j.n_out.into(),
                        j.measured.into(),
                        j.predicted.into(),
                        err.into(),
                        flag.into(),
                    ]
                }
                Err(e) => vec![
                    theta.into(),
                    f64::NAN.into(),
                    f64::NAN.into(),
                    f64::NAN.into(),
                    f64::NAN.into(),
                    f64::NAN.into(),
                    format!("error: {e}").into(),
                ],
            }
        })
        .collect();
    let mut t = Table::new(&["theta", "n_in", "n_out", "jump_measured", "jump_predicted", "abs_err", "flag"]);
    for r in rows {
        t.push(r)?;
    }
    Ok(t)
}

/// `N2 = int dk0/2pi Q(k0) / (i k0 - e)^2` at `tau = 0`: real and imaginary parts.
pub fn n2_at_zero<F: Fn(f64) -> Complex64>(q: &F, e: f64, cfg: QuadConfig) -> Result<(f64, f64)> {
    if e == 0.0 {
        return Err(Error::Singular("N2 on the Fermi curve".into()));
    }
    let integrand = |k0: f64| {
        let d = Complex64::new(-e, k0);
        q(k0) / (d * d) / (2.0 * PI)
    };
    let re_pos = |x: f64| integrand(x).re;
    let re_neg = |x: f64| integrand(-x).re;
    let im_pos = |x: f64| integrand(x).im;
    let im_neg = |x: f64| integrand(-x).im;
    let r = integrate_to_inf(&re_pos, 0.0, cfg)?.0 + integrate_to_inf(&re_neg, 0.0, cfg)?.0;
    let i = integrate_to_inf(&im_pos, 0.0, cfg)?.0 + integrate_to_inf(&im_neg, 0.0, cfg)?.0;
    Ok((r, i))
}
