//! Resummation of counterterm and two-point families, the two-point function,
//! the proper self-energy with its `k0` derivative, amputation factors and the
//! bound budget of the `q` family.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emit::Table;
use crate::error::{Error, Result};
use crate::kernel_algebra::{central_difference, momentum_norm_tilde, FdGrid};
use crate::model_scales::{Momentum, ScaleParams, Scales};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `beta(s) = (1 - s^2)^3` on `|s| < 1`, zero outside.
pub fn beta(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let t = 1.0 - s * s;
        t * t * t
    }
}

/// `sup |beta'| = 96 / (25 sqrt 5)`.
pub const BETA_D1_SUP: f64 = 1.717_300_206_719_838_4;
/// `sup |beta''| = 6`.
pub const BETA_D2_SUP: f64 = 6.0;

/// Bump term `q^(i,l)(k) = a [beta(M^i (k0 - c M^-i)/w0) + beta(M^i (k0 + c M^-i)/w0)] beta(M^l e(k)/we)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BumpTerm {
    pub i: i32,
    pub l: i32,
    pub amplitude: f64,
    pub center: f64,
    pub k0_width: f64,
    pub e_width: f64,
}

impl BumpTerm {
    pub fn eval(&self, scales: &Scales, k: Momentum) -> Complex64 {
        let m = scales.params.m;
        let mi = m.powi(self.i);
        let c = self.center / mi;
        let kk = beta(mi * (k.k0 - c) / self.k0_width) + beta(mi * (k.k0 + c) / self.k0_width);
        if kk == 0.0 {
            return ZERO;
        }
        let e = scales.model.e(k.kvec);
        Complex64::new(self.amplitude * kk * beta(m.powi(self.l) * e / self.e_width), 0.0)
    }

    /// Central difference in `k0` with step `1e-6 M^-i`.
    pub fn dk0(&self, scales: &Scales, k: Momentum) -> Complex64 {
        let h = 1e-6 * scales.params.m.powi(-self.i);
        let f = |p: Momentum| self.eval(scales, p);
        central_difference(&f, k, [1, 0, 0], [h, h, h])
    }
}

/// Counterterm `p^(i)(k) = eps i k0 nu^(i)(k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PTerm {
    pub i: i32,
    pub eps: f64,
}

impl PTerm {
    pub fn eval(&self, scales: &Scales, k: Momentum) -> Complex64 {
        let nu = scales.nu(self.i, k).unwrap_or(0.0);
        Complex64::new(0.0, self.eps * k.k0 * nu)
    }

    pub fn dk0(&self, scales: &Scales, k: Momentum) -> Complex64 {
        let h = 1e-6 * scales.params.m.powi(-self.i);
        let f = |p: Momentum| self.eval(scales, p);
        central_difference(&f, k, [1, 0, 0], [h, h, h])
    }
}

/// Scale-indexed families `p^(i)` and `q^(i,l)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScaleFamily {
    #[serde(default)]
    pub p: Vec<PTerm>,
    #[serde(default)]
    pub q: Vec<BumpTerm>,
}

/// Budget prefactor `2 lambda0^{1-2 upsilon} (l_l / M^l) M^{aleph' (l - i)}`.
pub fn budget_prefactor(params: &ScaleParams, i: i32, l: i32) -> f64 {
    2.0 * params.lambda0.powf(1.0 - 2.0 * params.upsilon) * params.l(l) / params.m.powi(l)
        * params.m.powf(params.aleph_prime * (l - i) as f64)
}

/// Full budget `prefactor M^{delta0 i} M^{|delta| l}`.
pub fn budget_bound(params: &ScaleParams, i: i32, l: i32, delta: [u32; 3]) -> f64 {
    budget_prefactor(params, i, l)
        * params.m.powi(delta[0] as i32 * i)
        * params.m.powi((delta[1] + delta[2]) as i32 * l)
}

impl ScaleFamily {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Bumps at `0.9 / 24` of the budget prefactor for `j0 <= i <= l <= top`
    /// (times `factor`), with counterterms `eps_i = 0.1 lambda0^{1-2 upsilon} l_i`.
    pub fn saturating(params: &ScaleParams, top: i32, factor: f64) -> Self {
        let mut q = Vec::new();
        let mut p = Vec::new();
        for i in params.j0..=top {
            p.push(PTerm {
                i,
                eps: 0.1 * params.lambda0.powf(1.0 - 2.0 * params.upsilon) * params.l(i),
            });
            for l in i..=top {
                q.push(BumpTerm {
                    i,
                    l,
                    amplitude: factor * budget_prefactor(params, i, l) * 0.9 / 24.0,
                    center: 1.6,
                    k0_width: 0.5,
                    e_width: 1.0,
                });
            }
        }
        Self { p, q }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for t in out.q.iter_mut() {
            t.amplitude *= factor;
        }
        for t in out.p.iter_mut() {
            t.eps *= factor;
        }
        out
    }

    /// `P = sum_i p^(i)`.
    pub fn resum_p(&self, scales: &Scales, k: Momentum) -> Complex64 {
        self.p.iter().fold(ZERO, |a, t| a + t.eval(scales, k))
    }

    /// `sum_{i < j} p^(i)`.
    pub fn resum_p_below(&self, scales: &Scales, k: Momentum, j: i32) -> Complex64 {
        self.p
            .iter()
            .filter(|t| t.i < j)
            .fold(ZERO, |a, t| a + t.eval(scales, k))
    }

    /// `Q = sum_{i <= l} q^(i,l)`, or the partial sum `Q_j` over `l <= j`.
    pub fn resum_q(&self, scales: &Scales, k: Momentum, j_cut: Option<i32>) -> Complex64 {
        self.q
            .iter()
            .filter(|t| j_cut.is_none_or(|j| t.l <= j))
            .fold(ZERO, |a, t| a + t.eval(scales, k))
    }

    pub fn dp_dk0(&self, scales: &Scales, k: Momentum) -> Complex64 {
        self.p.iter().fold(ZERO, |a, t| a + t.dk0(scales, k))
    }

    pub fn dq_dk0(&self, scales: &Scales, k: Momentum) -> Complex64 {
        self.q.iter().fold(ZERO, |a, t| a + t.dk0(scales, k))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(format!("family: {e}")))
    }

    /// Resummation bounds `|P| <= lambda0^{1-2u} min(|k0|, 1)` and
    /// `|Q| <= lambda0^{1-3u} min(|A|^{3/2}, 1)` on samples: worst ratios.
    pub fn resum_bound_ratios(&self, scales: &Scales, samples: &[Momentum]) -> (f64, f64) {
        let p = &scales.params;
        let bp = p.lambda0.powf(1.0 - 2.0 * p.upsilon);
        let bq = p.lambda0.powf(1.0 - 3.0 * p.upsilon);
        samples
            .par_iter()
            .map(|&k| {
                let a = scales.amputate(k).norm();
                let rp = self.resum_p(scales, k).norm() / (bp * k.k0.abs().min(1.0));
                let rq = self.resum_q(scales, k, None).norm() / (bq * a.powf(1.5).min(1.0));
                (if rp.is_finite() { rp } else { 0.0 }, if rq.is_finite() { rq } else { 0.0 })
            })
            .reduce(|| (0.0, 0.0), |x, y| (x.0.max(y.0), x.1.max(y.1)))
    }
}

/// `E = i k0 - e`.
fn energy(k0: f64, e: f64) -> Complex64 {
    Complex64::new(-e, k0)
}

/// `G2 = U / (E - P) + Q / E^2`.
pub fn green2(u: f64, k0: f64, e: f64, p: Complex64, q: Complex64) -> Result<Complex64> {
    let big_e = energy(k0, e);
    if big_e.norm() == 0.0 {
        return Err(Error::Singular("on the Fermi curve at k0 = 0".into()));
    }
    let d = big_e - p;
    if d.norm() == 0.0 {
        return Err(Error::Singular("E - P vanishes".into()));
    }
    Ok(u / d + q / (big_e * big_e))
}

const COND_MIN: f64 = 1e-8;

/// `Sigma = (P + Q - Q P / E) / (1 + Q / E - P Q / E^2)`.
pub fn proper_sigma(k0: f64, e: f64, p: Complex64, q: Complex64) -> Result<Complex64> {
    let big_e = energy(k0, e);
    if big_e.norm() == 0.0 {
        return Err(Error::Singular("on the Fermi curve at k0 = 0".into()));
    }
    let den = 1.0 + q / big_e - p * q / (big_e * big_e);
    if den.norm() < COND_MIN {
        return Err(Error::Conditioning(den.norm()));
    }
    Ok((p + q - q * p / big_e) / den)
}

/// Rescaled variables of the derivative formula.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TildeVars {
    /// `Q~(m) = (i k0)^m Q / E^{m+1}`, `m = 0, 1, 2`.
    pub q: [Complex64; 3],
    /// `Q~(m)_0 = (i k0 / E)^m dQ/dk0`.
    pub q0: [Complex64; 3],
    /// `P~ = P / (i k0)`.
    pub p: Complex64,
}

pub fn tilde_vars(k0: f64, e: f64, p: Complex64, q: Complex64, dq: Complex64) -> Result<TildeVars> {
    let big_e = energy(k0, e);
    if k0 == 0.0 || big_e.norm() == 0.0 {
        return Err(Error::Singular("tilde variables need k0 != 0".into()));
    }
    let ik0 = Complex64::new(0.0, k0);
    let mut qt = [ZERO; 3];
    let mut q0 = [ZERO; 3];
    for m in 0..3 {
        qt[m] = ik0.powi(m as i32) * q / big_e.powi(m as i32 + 1);
        q0[m] = (ik0 / big_e).powi(m as i32) * dq;
    }
    Ok(TildeVars {
        q: qt,
        q0,
        p: p / ik0,
    })
}

/// `dSigma/dk0` through the rescaled variables.
pub fn sigma_k0_derivative(k0: f64, e: f64, p: Complex64, q: Complex64, dp: Complex64, dq: Complex64) -> Result<Complex64> {
    let t = tilde_vars(k0, e, p, q, dq)?;
    let i = Complex64::new(0.0, 1.0);
    let d = 1.0 + t.q[0] - t.p * t.q[1];
    if d.norm() < COND_MIN {
        return Err(Error::Conditioning(d.norm()));
    }
    let first = (dp + 2.0 * i * t.q[0] + t.q0[0] - i * t.p * t.q[1] - dp * t.q[0] - t.p * t.q0[1]) / d;
    let second = t.p * (i * t.q[1] + t.q0[1] - dp * t.q[1] - t.p * t.q0[2]) / (d * d);
    let third = ((t.q[0] - t.p * t.q[1]) * (i * t.q[0] + t.q0[0] - dp * t.q[0] - t.p * t.q0[1])
        + 2.0 * i * t.q[0]
        + 2.0 * i * t.p * t.p * t.q[2]
        - 4.0 * i * t.p * t.q[1])
        / (d * d);
    Ok(first - second - third)
}

/// `A1 = nu^(<=i) (E - P) / E`.
pub fn amputation_a1(scales: &Scales, i: i32, k: Momentum, p: Complex64) -> Result<Complex64> {
    let big_e = scales.amputate(k);
    if big_e.norm() == 0.0 {
        return Err(Error::Singular("A1 quotient on the Fermi curve".into()));
    }
    Ok(scales.nu_le(i, k)? * (big_e - p) / big_e)
}

/// `A2 = (E - Sigma) / (E - P)`.
pub fn amputation_a2(k0: f64, e: f64, p: Complex64, q: Complex64) -> Result<Complex64> {
    let big_e = energy(k0, e);
    let sigma = proper_sigma(k0, e, p, q)?;
    let d = big_e - p;
    if d.norm() == 0.0 {
        return Err(Error::Singular("A2 quotient E - P vanishes".into()));
    }
    Ok((big_e - sigma) / d)
}

/// One budget entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub i: i32,
    pub l: i32,
    pub delta: [u32; 3],
    pub measured: f64,
    pub allowed: f64,
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub rows: Vec<BudgetRow>,
    pub reality_residual: f64,
    pub max_ratio: f64,
    pub passed: bool,
}

impl BudgetReport {
    pub fn table(&self) -> Result<Table> {
        let mut t = Table::new(&["i", "l", "d0", "d1", "d2", "measured", "allowed", "ratio", "pass"]);
        for r in &self.rows {
            t.push(vec![
                r.i.into(),
                r.l.into(),
                (r.delta[0] as i64).into(),
                (r.delta[1] as i64).into(),
                (r.delta[2] as i64).into(),
                r.measured.into(),
                r.allowed.into(),
                r.ratio.into(),
                r.pass.into(),
            ])?;
        }
        Ok(t)
    }
}

/// Sample grid adapted to one bump: `k0` across both bump windows, `k` across
/// the `e` window at four angles.
fn bump_grid(scales: &Scales, t: &BumpTerm) -> FdGrid {
    let m = scales.params.m;
    let mi = m.powi(-t.i);
    let ml = m.powi(-t.l);
    let mut pts = Vec::new();
    let per = scales.model.fermi_length();
    let k0s: Vec<f64> = (-9..=9)
        .flat_map(|a| {
            let off = a as f64 * 0.1 * t.k0_width * mi;
            [t.center * mi + off, -t.center * mi + off]
        })
        .collect();
    for q in 0..4 {
        let s = per * (q as f64 + 0.125) / 4.0;
        let kf = scales.model.fermi_point(s);
        let g = scales.model.grad_e(kf);
        let gn = (g[0] * g[0] + g[1] * g[1]).sqrt().max(1e-300);
        for b in -5..=5 {
            let de = b as f64 * 0.1 * t.e_width * ml;
            let shift = de / gn;
            let kv = [kf[0] + shift * g[0] / gn, kf[1] + shift * g[1] / gn];
            for &k0 in &k0s {
                pts.push(Momentum::new(k0, kv[0], kv[1]));
            }
        }
    }
    let h = 1e-4 * m.powi(-t.i.max(t.l));
    FdGrid {
        points: pts,
        steps: [1e-4 * mi, h, h],
    }
}

/// Sup of `|D^delta q^(i,l)|` against the budget for `|delta| <= 2`, plus the
/// reflection residual `|q(-k0, k) - conj q(k0, k)|`.
pub fn check_q_budget(family: &ScaleFamily, scales: &Scales) -> Result<BudgetReport> {
    let params = &scales.params;
    let mut rows = Vec::new();
    let mut reality: f64 = 0.0;
    for t in &family.q {
        let grid = bump_grid(scales, t);
        let h = |k: Momentum| t.eval(scales, k);
        let series = momentum_norm_tilde(&h, &grid, 2, 2, 2)?;
        for d in series.indices() {
            let total = d[0] + d[1] + d[2];
            if total > 2 {
                continue;
            }
            let fact: f64 = d.iter().map(|&o| if o == 2 { 2.0 } else { 1.0 }).product();
            let measured = series.get(d) * fact;
            let allowed = budget_bound(params, t.i, t.l, d);
            let ratio = measured / allowed;
            rows.push(BudgetRow {
                i: t.i,
                l: t.l,
                delta: d,
                measured,
                allowed,
                ratio,
                pass: ratio <= 1.0,
            });
        }
        for k in &grid.points {
            let a = t.eval(scales, *k);
            let b = t.eval(scales, k.reflect_k0());
            reality = reality.max((b - a.conj()).norm());
        }
    }
    let max_ratio = rows.iter().fold(0.0f64, |m, r| m.max(r.ratio));
    let passed = rows.iter().all(|r| r.pass) && reality <= 1e-12;
    Ok(BudgetReport {
        rows,
        reality_residual: reality,
        max_ratio,
        passed,
    })
}

/// Partial-sum decay of `sup |Q - Q_j| / min(|A|, 1)` over scale-similar
/// samples `k0 = c M^-i` on the Fermi curve plus the given extra samples.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayFit {
    pub rows: Vec<(i32, f64)>,
    pub slope: f64,
    pub expected: f64,
}

pub fn q_partial_sum_decay(family: &ScaleFamily, scales: &Scales, js: &[i32], extra: &[Momentum]) -> Result<DecayFit> {
    let params = &scales.params;
    let top = family.q.iter().map(|t| t.l).max().unwrap_or(params.j0);
    let kf = scales.model.fermi_point(0.0);
    let mut samples: Vec<Momentum> = Vec::new();
    for i in params.j0..=top {
        for c in [1.2, 1.4, 1.6, 1.8, 2.0] {
            let k0 = c * params.m.powi(-i);
            samples.push(Momentum::new(k0, kf[0], kf[1]));
            samples.push(Momentum::new(-k0, kf[0], kf[1]));
        }
    }
    samples.extend_from_slice(extra);
    let rows: Vec<(i32, f64)> = js
        .iter()
        .map(|&j| {
            let s = samples
                .par_iter()
                .map(|&k| {
                    let a = scales.amputate(k).norm().min(1.0);
                    let d = family.resum_q(scales, k, None) - family.resum_q(scales, k, Some(j));
                    d.norm() / a
                })
                .reduce(|| 0.0, f64::max);
            (j, s)
        })
        .collect();
    let slope = log_slope(&rows)?;
    Ok(DecayFit {
        rows,
        slope,
        expected: -params.aleph * params.m.ln(),
    })
}

/// Same fit for `sup |P - sum_{i<j} p^(i)| / min(|k0|, 1)`.
pub fn p_partial_sum_decay(family: &ScaleFamily, scales: &Scales, js: &[i32]) -> Result<DecayFit> {
    let params = &scales.params;
    let kf = scales.model.fermi_point(0.0);
    let top = family.p.iter().map(|t| t.i).max().unwrap_or(params.j0);
    let mut samples = Vec::new();
    for i in params.j0..=top {
        for c in [0.8, 1.0, 1.2, 1.4] {
            samples.push(Momentum::new(c * params.m.powi(-i), kf[0], kf[1]));
        }
    }
    let rows: Vec<(i32, f64)> = js
        .iter()
        .map(|&j| {
            let s = samples
                .par_iter()
                .map(|&k| {
                    let d = family.resum_p(scales, k) - family.resum_p_below(scales, k, j);
                    d.norm() / k.k0.abs().min(1.0)
                })
                .reduce(|| 0.0, f64::max);
            (j, s)
        })
        .collect();
    let slope = log_slope(&rows)?;
    Ok(DecayFit {
        rows,
        slope,
        expected: -params.aleph * params.m.ln(),
    })
}

fn log_slope(rows: &[(i32, f64)]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.1 > 0.0)
        .map(|r| (r.0 as f64, r.1.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::DegenerateFit("fewer than two nonzero partial sums".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(sxy / sxx)
}

/// Off-shell sample points with `|A|` spread over scales, deterministic.
pub fn off_shell_samples(scales: &Scales, count: usize) -> Vec<Momentum> {
    let per = scales.model.fermi_length();
    (0..count)
        .map(|n| {
            let t = n as f64 + 0.5;
            let s = per * ((t * 0.618_033_988_749_894_9) % 1.0);
            let kf = scales.model.fermi_point(s);
            let r = 0.02 + 0.3 * ((t * 0.414_213_562_373_095_1) % 1.0);
            let ang = 2.0 * PI * ((t * 0.732_050_807_568_877_3) % 1.0);
            let k0 = r * ang.sin();
            let de = 0.5 * r * ang.cos();
            let g = scales.model.grad_e(kf);
            let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
            let shift = de / gn;
            Momentum::new(k0, kf[0] + shift * g[0] / gn, kf[1] + shift * g[1] / gn)
        })
        .collect()
}
