//! Dispersion relation, ultraviolet cutoff, scale functions and cutoff covariances.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point `(k0, k1, k2)` of frequency-momentum space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Momentum {
    pub k0: f64,
    pub kvec: [f64; 2],
}

impl Momentum {
    pub fn new(k0: f64, k1: f64, k2: f64) -> Self {
        Self { k0, kvec: [k1, k2] }
    }

    pub fn is_finite(&self) -> bool {
        self.k0.is_finite() && self.kvec[0].is_finite() && self.kvec[1].is_finite()
    }

    pub fn checked(self) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite("momentum"))
        }
    }

    pub fn with_k0(self, k0: f64) -> Self {
        Self { k0, kvec: self.kvec }
    }

    pub fn reflect_k0(self) -> Self {
        self.with_k0(-self.k0)
    }
}

/// Quintic smoothstep, clamped to `[0, 1]`, with vanishing first and second
/// derivatives at both ends.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

/// Pluggable dispersion relation with a smooth ultraviolet cutoff.
pub trait Dispersion: Send + Sync + fmt::Debug {
    fn e(&self, k: [f64; 2]) -> f64;
    fn grad_e(&self, k: [f64; 2]) -> [f64; 2];
    fn cutoff(&self, k: [f64; 2]) -> f64;
    /// Fermi curve point at arc-length parameter `s` in `[0, fermi_length)`.
    fn fermi_point(&self, s: f64) -> [f64; 2];
    fn fermi_length(&self) -> f64;
    /// Arc-length coordinate of the projection onto the Fermi curve and the
    /// signed normal distance (positive outside).
    fn project(&self, k: [f64; 2]) -> (f64, f64);
}

/// `e(k) = |k|^2/2 - mu` with cutoff `U = 1` for `|e| <= 1/2`, `U = 0` for `|e| >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticModel {
    pub mu: f64,
}

impl Default for QuadraticModel {
    fn default() -> Self {
        Self { mu: 1.0 }
    }
}

impl QuadraticModel {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::Config(format!("mu must be positive, got {mu}")));
        }
        Ok(Self { mu })
    }

    pub fn radius(&self) -> f64 {
        (2.0 * self.mu).sqrt()
    }
}

impl Dispersion for QuadraticModel {
    fn e(&self, k: [f64; 2]) -> f64 {
        0.5 * (k[0] * k[0] + k[1] * k[1]) - self.mu
    }

    fn grad_e(&self, k: [f64; 2]) -> [f64; 2] {
        k
    }

    fn cutoff(&self, k: [f64; 2]) -> f64 {
        let e = self.e(k).abs();
        1.0 - smoothstep((e - 0.5) / 0.5)
    }

    fn fermi_point(&self, s: f64) -> [f64; 2] {
        let r = self.radius();
        let th = s / r;
        [r * th.cos(), r * th.sin()]
    }

    fn fermi_length(&self) -> f64 {
        2.0 * PI * self.radius()
    }

    fn project(&self, k: [f64; 2]) -> (f64, f64) {
        let r = self.radius();
        let mut th = k[1].atan2(k[0]);
        if th < 0.0 {
            th += 2.0 * PI;
        }
        let mut s = th * r;
        if s >= self.fermi_length() {
            s -= self.fermi_length();
        }
        (s, (k[0] * k[0] + k[1] * k[1]).sqrt() - r)
    }
}

/// Scale ratio, exponents and scale range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct ScaleParams {
    #[serde(rename = "M")]
    pub m: f64,
    pub aleph: f64,
    pub aleph_prime: f64,
    pub j0: i32,
    #[serde(rename = "Jmax")]
    pub jmax: i32,
    pub lambda0: f64,
    pub upsilon: f64,
}

impl Default for ScaleParams {
    fn default() -> Self {
        Self {
            m: 2.0,
            aleph: 0.6,
            aleph_prime: 0.62,
            j0: 2,
            jmax: 10,
            lambda0: 0.01,
            upsilon: 0.1,
        }
    }
}

impl ScaleParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(Error::Config(s));
        if !(self.m.is_finite() && self.m > 1.0) {
            return bad(format!("M must exceed 1, got {}", self.m));
        }
        if !(self.aleph > 0.5 && self.aleph < 2.0 / 3.0) {
            return bad(format!("aleph must lie in (1/2, 2/3), got {}", self.aleph));
        }
        if !(self.aleph_prime > self.aleph && self.aleph_prime < 2.0 / 3.0) {
            return bad(format!(
                "alephPrime must lie in (aleph, 2/3), got {}",
                self.aleph_prime
            ));
        }
        if self.j0 < 2 {
            return bad(format!("j0 must be at least 2, got {}", self.j0));
        }
        if self.jmax < self.j0 {
            return bad(format!("Jmax {} below j0 {}", self.jmax, self.j0));
        }
        if !(self.lambda0 > 0.0 && self.lambda0 < 1.0) {
            return bad(format!("lambda0 must lie in (0, 1), got {}", self.lambda0));
        }
        if !(self.upsilon > 0.0 && self.upsilon < 0.25) {
            return bad(format!("upsilon must lie in (0, 1/4), got {}", self.upsilon));
        }
        Ok(())
    }

    /// Sector length `l_j = M^{-aleph j}`.
    pub fn l(&self, j: i32) -> f64 {
        self.m.powf(-self.aleph * j as f64)
    }

    pub fn mpow(&self, x: f64) -> f64 {
        self.m.powf(x)
    }

    fn check_scale(&self, j: i32) -> Result<()> {
        if j < self.j0 || j > self.jmax {
            Err(Error::ScaleRange {
                j,
                lo: self.j0,
                hi: self.jmax,
            })
        } else {
            Ok(())
        }
    }
}

/// `A(k) = i k0 - e(k)`.
pub fn amputate_factor(model: &dyn Dispersion, k: Momentum) -> Complex64 {
    Complex64::new(-model.e(k.kvec), k.k0)
}

/// Scale functions built on a fixed model and parameter set.
#[derive(Clone, Debug)]
pub struct Scales {
    pub params: ScaleParams,
    pub model: Arc<dyn Dispersion>,
}

impl Scales {
    pub fn new(params: ScaleParams, model: Arc<dyn Dispersion>) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, model })
    }

    pub fn quadratic(params: ScaleParams) -> Result<Self> {
        Self::new(params, Arc::new(QuadraticModel::default()))
    }

    pub fn amputate(&self, k: Momentum) -> Complex64 {
        amputate_factor(self.model.as_ref(), k)
    }

    pub fn cutoff(&self, k: Momentum) -> f64 {
        self.model.cutoff(k.kvec)
    }

    /// `chi_j(k) = chi(M^{2j} |A(k)|^2)`, equal to 1 for `|A| <= sqrt(M)/M^j` and
    /// to 0 for `|A| >= sqrt(2M)/M^j`.
    pub fn chi(&self, j: i32, k: Momentum) -> f64 {
        let m = self.params.m;
        let a = self.amputate(k).norm_sqr();
        let x = m.powi(2 * j) * a;
        1.0 - smoothstep((x - m) / m)
    }

    /// `nu^(j)(k)` for `j0 <= j <= Jmax`.
    pub fn nu(&self, j: i32, k: Momentum) -> Result<f64> {
        let k = k.checked()?;
        self.params.check_scale(j)?;
        let u = self.cutoff(k);
        if j == self.params.j0 {
            Ok(u * (1.0 - self.chi(j + 1, k)))
        } else {
            Ok(u * (self.chi(j, k) - self.chi(j + 1, k)))
        }
    }

    /// `nu^(>J)(k) = U chi_{J+1}` for the deepest tracked scale.
    pub fn nu_beyond(&self, k: Momentum) -> Result<f64> {
        let k = k.checked()?;
        Ok(self.cutoff(k) * self.chi(self.params.jmax + 1, k))
    }

    /// `nu^(>=j)(k)`, any integer `j`.
    pub fn nu_ge(&self, j: i32, k: Momentum) -> Result<f64> {
        let k = k.checked()?;
        let u = self.cutoff(k);
        if j <= self.params.j0 {
            Ok(u)
        } else {
            Ok(u * self.chi(j, k))
        }
    }

    /// `nu^(<=j)(k) = U - nu^(>=j+1)(k)`.
    pub fn nu_le(&self, j: i32, k: Momentum) -> Result<f64> {
        let k = k.checked()?;
        Ok(self.cutoff(k) - self.nu_ge(j + 1, k)?)
    }

    /// Weight of a scale interval.
    pub fn nu_interval(&self, interval: ScaleInterval, k: Momentum) -> Result<f64> {
        match interval {
            ScaleInterval::Single(j) => self.nu(j, k),
            ScaleInterval::Range(i, j) => {
                if i > j {
                    return Ok(0.0);
                }
                let hi = self.nu_ge(j + 1, k)?;
                let lo = self.nu_ge(i, k)?;
                Ok(lo - hi)
            }
            ScaleInterval::AtLeast(j) => self.nu_ge(j, k),
            ScaleInterval::AtMost(j) => self.nu_le(j, k),
        }
    }

    /// Smallest `m` with `nu^(m)(k) > 0`; `Jmax` when only the remainder is nonzero.
    pub fn scale_of(&self, k: Momentum) -> Result<i32> {
        let k = k.checked()?;
        if self.cutoff(k) <= 0.0 {
            return Err(Error::NotInSupport);
        }
        for j in self.params.j0..=self.params.jmax {
            if self.nu(j, k)? > 0.0 {
                return Ok(j);
            }
        }
        if self.nu_beyond(k)? > 0.0 {
            return Ok(self.params.jmax);
        }
        Err(Error::NotInSupport)
    }

    /// Inner and outer radius of the `j`-th shell in `|A|`.
    pub fn shell_bounds(&self, j: i32) -> (f64, f64) {
        let m = self.params.m;
        let mj = m.powi(j);
        (1.0 / (m.sqrt() * mj), (2.0 * m).sqrt() / mj)
    }

    /// The `j`-th neighbourhood `|A| < sqrt(2M)/M^j`.
    pub fn in_neighbourhood(&self, j: i32, k: Momentum) -> bool {
        self.amputate(k).norm() < self.shell_bounds(j).1
    }
}

/// Interval of scales selecting the cutoff function of a covariance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleInterval {
    Single(i32),
    Range(i32, i32),
    AtLeast(i32),
    AtMost(i32),
}

pub type MomentumFn = Arc<dyn Fn(Momentum) -> Complex64 + Send + Sync>;

pub fn zero_fn() -> MomentumFn {
    Arc::new(|_| Complex64::new(0.0, 0.0))
}

/// Cutoff covariance `nu^I(k) / (i k0 - e(k) - u(k))`.
#[derive(Clone)]
pub struct Covariance {
    pub scales: Scales,
    pub interval: ScaleInterval,
    pub u: MomentumFn,
}

impl fmt::Debug for Covariance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Covariance")
            .field("params", &self.scales.params)
            .field("interval", &self.interval)
            .finish()
    }
}

impl Covariance {
    pub fn new(scales: Scales, interval: ScaleInterval, u: MomentumFn) -> Self {
        Self {
            scales,
            interval,
            u,
        }
    }

    pub fn eval(&self, k: Momentum) -> Result<Complex64> {
        let nu = self.scales.nu_interval(self.interval, k)?;
        if nu == 0.0 {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let a = self.scales.amputate(k);
        let u = (self.u)(k);
        if !(u.re.is_finite() && u.im.is_finite()) {
            return Err(Error::NonFinite("covariance shift"));
        }
        if u.norm() > 0.5 * a.norm() {
            return Err(Error::Hypothesis(format!(
                "|u| = {:e} exceeds |A|/2 = {:e}",
                u.norm(),
                0.5 * a.norm()
            )));
        }
        Ok(nu / (a - u))
    }
}

/// Convenience wrapper for `covariance(params, interval, u, k)`.
pub fn covariance(
    scales: &Scales,
    interval: ScaleInterval,
    u: &MomentumFn,
    k: Momentum,
) -> Result<Complex64> {
    Covariance::new(scales.clone(), interval, u.clone()).eval(k)
}
