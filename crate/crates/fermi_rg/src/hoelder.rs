//! Hoelder certificates for scale-decomposed sums `f = sum_j f_j` with
//! `sup |f_j| <= C0 M^{-alpha j}` and `sup |f_j'| <= C1 M^{beta j}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScaleBounds {
    pub alpha: f64,
    pub beta: f64,
    pub c0: f64,
    pub c1: f64,
    #[serde(rename = "M")]
    pub m: f64,
}

impl ScaleBounds {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.alpha, self.beta, self.c0, self.c1]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !pos || !(self.m.is_finite() && self.m > 1.0) {
            return Err(Error::Config(format!("invalid scale bounds {self:?}")));
        }
        Ok(())
    }

    /// `C' = 2 (M^beta / (M^beta - 1) + M^alpha / (M^alpha - 1))`.
    pub fn c_prime(&self) -> f64 {
        let mb = self.m.powf(self.beta);
        let ma = self.m.powf(self.alpha);
        2.0 * (mb / (mb - 1.0) + ma / (ma - 1.0))
    }
}

/// `(alpha / (alpha + beta), C' C0^{beta/(alpha+beta)} C1^{alpha/(alpha+beta)})`.
pub fn hoelder_certificate(b: &ScaleBounds) -> Result<(f64, f64)> {
    b.validate()?;
    let s = b.alpha + b.beta;
    let exponent = b.alpha / s;
    let constant = b.c_prime() * b.c0.powf(b.beta / s) * b.c1.powf(b.alpha / s);
    Ok((exponent, constant))
}

/// Sampled member `f_j` with a derivative.
pub trait FamilyMember: Sync {
    fn value(&self, t: f64) -> f64;
    fn derivative(&self, t: f64) -> f64;
    fn scale(&self) -> i32;
}

/// `f_j(t) = C0 M^{-alpha j} sin((C1/C0) M^{(alpha+beta) j} t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SineMember {
    pub bounds: ScaleBounds,
    pub j: i32,
}

impl FamilyMember for SineMember {
    fn value(&self, t: f64) -> f64 {
        let b = &self.bounds;
        let amp = b.c0 * b.m.powf(-b.alpha * self.j as f64);
        let freq = b.c1 / b.c0 * b.m.powf((b.alpha + b.beta) * self.j as f64);
        amp * (freq * t).sin()
    }

    fn derivative(&self, t: f64) -> f64 {
        let b = &self.bounds;
        let freq = b.c1 / b.c0 * b.m.powf((b.alpha + b.beta) * self.j as f64);
        b.c1 * b.m.powf(b.beta * self.j as f64) * (freq * t).cos()
    }

    fn scale(&self) -> i32 {
        self.j
    }
}

/// Members `j = 0 ..= J* + 3` with `M^{(alpha+beta) J*}` of order `C0 / (C1 h)`
/// for the finest separation `h`.
pub fn sine_family(b: &ScaleBounds, finest: f64) -> Vec<SineMember> {
    let s = b.alpha + b.beta;
    let jstar = ((b.c0 / (b.c1 * finest)).ln() / (s * b.m.ln())).ceil().max(0.0) as i32;
    (0..=jstar + 3).map(|j| SineMember { bounds: *b, j }).collect()
}

/// Dyadic pairs `(t, t + 2^-m)` with 200 base points per `m` in `[0, 1)`.
pub fn dyadic_pairs(m_min: u32, m_max: u32, per_m: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for m in m_min..=m_max {
        let h = 2f64.powi(-(m as i32));
        for _ in 0..per_m {
            let t: f64 = rng.gen_range(0.0..1.0);
            out.push((t, t + h));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FamilyReport {
    pub hypotheses_hold: bool,
    pub hypothesis_ratio: f64,
    pub exponent: f64,
    pub constant: f64,
    pub max_ratio: Option<f64>,
    pub worst_pair: Option<(f64, f64)>,
}

/// Checks the scale-wise hypotheses on the pair points, then the certificate.
pub fn verify_family<F: FamilyMember>(b: &ScaleBounds, family: &[F], pairs: &[(f64, f64)]) -> Result<FamilyReport> {
    let (exponent, constant) = hoelder_certificate(b)?;
    let hyp = family
        .par_iter()
        .map(|f| {
            let j = f.scale() as f64;
            let a = b.c0 * b.m.powf(-b.alpha * j);
            let d = b.c1 * b.m.powf(b.beta * j);
            pairs
                .iter()
                .flat_map(|p| [p.0, p.1])
                .map(|t| (f.value(t).abs() / a).max(f.derivative(t).abs() / d))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    let holds = hyp <= 1.0 + 1e-12;
    if !holds {
        return Ok(FamilyReport {
            hypotheses_hold: false,
            hypothesis_ratio: hyp,
            exponent,
            constant,
            max_ratio: None,
            worst_pair: None,
        });
    }
    let (ratio, worst) = pairs
        .par_iter()
        .map(|&(t, u)| {
            let df: f64 = family.iter().map(|f| f.value(t) - f.value(u)).sum();
            let r = df.abs() / (constant * (t - u).abs().powf(exponent));
            (r, (t, u))
        })
        .reduce(|| (0.0, (0.0, 0.0)), |x, y| if y.0 > x.0 { y } else { x });
    Ok(FamilyReport {
        hypotheses_hold: true,
        hypothesis_ratio: hyp,
        exponent,
        constant,
        max_ratio: Some(ratio),
        worst_pair: Some(worst),
    })
}

/// Fitted log-log slope of `max |f(t+h) - f(t)|` against `h`, capped at 1,
/// with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExponentFit {
    pub slope: f64,
    pub std_err: f64,
    pub raw_slope: f64,
}

pub fn empirical_exponent<F: Fn(f64) -> f64 + Sync>(f: &F, pairs: &[(f64, f64)]) -> Result<ExponentFit> {
    let mut by_h: std::collections::BTreeMap<u64, f64> = std::collections::BTreeMap::new();
    for &(t, u) in pairs {
        let h = (u - t).abs();
        let d = (f(u) - f(t)).abs();
        let e = by_h.entry(h.to_bits()).or_insert(0.0);
        *e = e.max(d);
    }
    let pts: Vec<(f64, f64)> = by_h
        .iter()
        .filter(|(_, d)| **d > 0.0)
        .map(|(h, d)| (f64::from_bits(*h).ln(), d.ln()))
        .collect();
    if by_h.len() < 10 {
        return Err(Error::DegenerateFit(format!("{} separations, need at least 10", by_h.len())));
    }
    if pts.len() < 3 {
        return Ok(ExponentFit {
            slope: 0.0,
            std_err: 0.0,
            raw_slope: 0.0,
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("single separation".into()));
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum();
    let std_err = (rss / (n - 2.0) / sxx).sqrt();
    Ok(ExponentFit {
        slope: slope.min(1.0),
        std_err,
        raw_slope: slope,
    })
}

/// JSON report `maxRatio, worstPair, fittedExponent`.
pub fn report_json(r: &FamilyReport, fit: Option<&ExponentFit>) -> String {
    serde_json::json!({
        "exponent": r.exponent,
        "constant": r.constant,
        "hypothesesHold": r.hypotheses_hold,
        "hypothesisRatio": r.hypothesis_ratio,
        "maxRatio": r.max_ratio,
        "worstPair": r.worst_pair,
        "fittedExponent": fit.map(|f| f.slope),
        "fittedStdErr": fit.map(|f| f.std_err),
    })
    .to_string()
}
