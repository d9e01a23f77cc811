//! Truncated majorant series in `t^delta`, `delta = (delta0, delta1, delta2)`,
//! with coefficients in `[0, inf]`.

use std::collections::BTreeMap;
use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_scales::ScaleParams;

pub type MultiIndex = [u32; 3];

/// `inf + x = inf`, `inf * 0 = 0`.
pub fn ext_mul(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

/// Series truncated to `delta0 <= r0`, `delta1 + delta2 <= r`; `inf` outside.
#[derive(Clone, Debug, PartialEq)]
pub struct FormalSeries {
    r0: u32,
    r: u32,
    coeff: Vec<f64>,
}

impl FormalSeries {
    pub fn zero(r0: u32, r: u32) -> Self {
        let n = ((r0 + 1) * (r + 1) * (r + 1)) as usize;
        Self {
            r0,
            r,
            coeff: vec![0.0; n],
        }
    }

    pub fn default_zero() -> Self {
        Self::zero(2, 2)
    }

    pub fn constant(r0: u32, r: u32, c: f64) -> Self {
        let mut s = Self::zero(r0, r);
        s.coeff[0] = c;
        s
    }

    pub fn truncation(&self) -> (u32, u32) {
        (self.r0, self.r)
    }

    pub fn in_region(&self, d: MultiIndex) -> bool {
        d[0] <= self.r0 && d[1] + d[2] <= self.r
    }

    fn slot(&self, d: MultiIndex) -> usize {
        let w = (self.r + 1) as usize;
        (d[0] as usize * w + d[1] as usize) * w + d[2] as usize
    }

    pub fn get(&self, d: MultiIndex) -> f64 {
        if self.in_region(d) {
            self.coeff[self.slot(d)]
        } else {
            f64::INFINITY
        }
    }

    pub fn set(&mut self, d: MultiIndex, v: f64) -> Result<()> {
        if !(v >= 0.0) {
            return Err(Error::Hypothesis(format!("negative coefficient {v}")));
        }
        if !self.in_region(d) {
            return Err(Error::Shape(format!("{d:?} outside truncation")));
        }
        let i = self.slot(d);
        self.coeff[i] = v;
        Ok(())
    }

    /// All multi-indices of the finite region in lexicographic order.
    pub fn indices(&self) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        for d0 in 0..=self.r0 {
            for d1 in 0..=self.r {
                for d2 in 0..=(self.r - d1) {
                    out.push([d0, d1, d2]);
                }
            }
        }
        out
    }

    fn same_shape(&self, o: &Self) -> Result<()> {
        if self.truncation() != o.truncation() {
            return Err(Error::Shape(format!(
                "truncations {:?} and {:?} differ",
                self.truncation(),
                o.truncation()
            )));
        }
        Ok(())
    }

    pub fn try_add(&self, o: &Self) -> Result<Self> {
        self.same_shape(o)?;
        let mut out = self.clone();
        for (a, b) in out.coeff.iter_mut().zip(&o.coeff) {
            *a += *b;
        }
        Ok(out)
    }

    /// Cauchy product truncated to the common region.
    pub fn try_mul(&self, o: &Self) -> Result<Self> {
        self.same_shape(o)?;
        let mut out = Self::zero(self.r0, self.r);
        let idx = self.indices();
        for &d in &idx {
            let mut acc = 0.0;
            for &a in &idx {
                if a[0] <= d[0] && a[1] <= d[1] && a[2] <= d[2] {
                    let b = [d[0] - a[0], d[1] - a[1], d[2] - a[2]];
                    acc += ext_mul(self.get(a), o.get(b));
                }
            }
            let s = out.slot(d);
            out.coeff[s] = acc;
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        for a in out.coeff.iter_mut() {
            *a = ext_mul(*a, c);
        }
        out
    }

    /// Coefficientwise `self <= o`.
    pub fn le(&self, o: &Self) -> bool {
        self.truncation() == o.truncation() && self.coeff.iter().zip(&o.coeff).all(|(a, b)| a <= b)
    }

    pub fn constant_term(&self) -> f64 {
        self.coeff[0]
    }

    /// Structured text: `{"r0":..,"r":..,"coeff":{"d0,d1,d2":value|"inf"}}`.
    pub fn to_json(&self) -> String {
        let mut map = BTreeMap::new();
        for d in self.indices() {
            let v = self.get(d);
            let jv = if v.is_infinite() {
                serde_json::Value::String("inf".into())
            } else {
                serde_json::json!(v)
            };
            map.insert(format!("{},{},{}", d[0], d[1], d[2]), jv);
        }
        let doc = SeriesDoc {
            r0: self.r0,
            r: self.r,
            coeff: map,
        };
        serde_json::to_string(&doc).expect("series serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: SeriesDoc =
            serde_json::from_str(s).map_err(|e| Error::Config(format!("series json: {e}")))?;
        let mut out = Self::zero(doc.r0, doc.r);
        for (key, val) in doc.coeff {
            let parts: Vec<u32> = key
                .split(',')
                .map(|p| p.trim().parse::<u32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("multi-index {key}: {e}")))?;
            if parts.len() != 3 {
                return Err(Error::Config(format!("multi-index {key} needs 3 entries")));
            }
            let v = match &val {
                serde_json::Value::String(t) if t == "inf" => f64::INFINITY,
                serde_json::Value::Number(n) => n.as_f64().unwrap_or(f64::NAN),
                _ => return Err(Error::Config(format!("bad coefficient {val}"))),
            };
            let d = [parts[0], parts[1], parts[2]];
            if !out.in_region(d) {
                continue;
            }
            out.set(d, v)?;
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct SeriesDoc {
    r0: u32,
    r: u32,
    coeff: BTreeMap<String, serde_json::Value>,
}

impl Add for &FormalSeries {
    type Output = FormalSeries;
    fn add(self, o: &FormalSeries) -> FormalSeries {
        self.try_add(o).expect("matching truncation")
    }
}

impl Mul for &FormalSeries {
    type Output = FormalSeries;
    fn mul(self, o: &FormalSeries) -> FormalSeries {
        self.try_mul(o).expect("matching truncation")
    }
}

/// `c_{i,j}`: coefficient `M^{i delta0} M^{j (delta1 + delta2)}`.
pub fn c_series(params: &ScaleParams, i: i32, j: i32, r0: u32, r: u32) -> FormalSeries {
    let mut s = FormalSeries::zero(r0, r);
    for d in s.indices() {
        let v = params.m.powf(i as f64 * d[0] as f64 + j as f64 * (d[1] + d[2]) as f64);
        let k = s.slot(d);
        s.coeff[k] = v;
    }
    s
}

/// `e_{i,j}(X) = c_{i,j} / (1 - M^j X)` by exact recursive inversion.
pub fn e_series(params: &ScaleParams, i: i32, j: i32, x: &FormalSeries) -> Result<FormalSeries> {
    let (r0, r) = x.truncation();
    let mj = params.m.powi(j);
    let z = x.scale(mj);
    let z0 = z.constant_term();
    if !(z0 < 1.0) {
        return Err(Error::DivergentSeries(z0));
    }
    let idx = x.indices();
    let mut y = FormalSeries::zero(r0, r);
    for &d in &idx {
        let mut acc = if d == [0, 0, 0] { 1.0 } else { 0.0 };
        for &a in &idx {
            if a == [0, 0, 0] {
                continue;
            }
            if a[0] <= d[0] && a[1] <= d[1] && a[2] <= d[2] {
                let b = [d[0] - a[0], d[1] - a[1], d[2] - a[2]];
                acc += ext_mul(z.get(a), y.get(b));
            }
        }
        let s = y.slot(d);
        y.coeff[s] = acc / (1.0 - z0);
    }
    c_series(params, i, j, r0, r).try_mul(&y)
}

/// `rho~_{m;n} = lambda0^{m upsilon/7} / lambda0^{(1-upsilon) max(m+n-2, 2)/2}`.
pub fn rho_tilde(m: u32, n: u32, lambda0: f64, upsilon: f64) -> f64 {
    let top = lambda0.powf(m as f64 * upsilon / 7.0);
    let e = ((m + n) as f64 - 2.0).max(2.0);
    top / lambda0.powf((1.0 - upsilon) * e / 2.0)
}

/// Aggregation weights for the norm entries.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateParams {
    pub alpha: f64,
    pub b: f64,
}

impl Default for AggregateParams {
    fn default() -> Self {
        Self { alpha: 1.0, b: 1.0 }
    }
}

/// Per-degree norm entries `|w_{m,n}|_{p}` for `p = 1..6`.
pub type DegreeNorms = [FormalSeries; 6];

/// `|w_{m,n}|_j` assembled from the p-norm entries.
pub fn degree_norm(params: &ScaleParams, j: i32, m: u32, n: u32, norms: &DegreeNorms) -> FormalSeries {
    let l = params.l(j);
    let (r0, r) = norms[0].truncation();
    let mut out = FormalSeries::zero(r0, r);
    if m == 0 {
        for (p, w) in [(1usize, 1.0), (3, 1.0 / l), (5, 1.0 / (l * l))] {
            out = &out + &norms[p - 1].scale(w);
        }
    } else {
        for p in 1..=6usize {
            let w = l.powi(-(((p - 1) / 2) as i32));
            out = &out + &norms[p - 1].scale(w);
        }
    }
    let rho = rho_tilde(m, n, params.lambda0, params.upsilon);
    out.scale(rho)
}

/// `N_j(w, alpha, X) = (M^{2j}/l_j) e_j(X) sum alpha^{m+n} (l_j B / M^j)^{(m+n)/2} |w_{m,n}|_j`.
pub fn n_tilde_aggregate(
    params: &ScaleParams,
    agg: &AggregateParams,
    j: i32,
    x: &FormalSeries,
    per_degree: &BTreeMap<(u32, u32), DegreeNorms>,
) -> Result<FormalSeries> {
    let (r0, r) = x.truncation();
    let l = params.l(j);
    let mj = params.m.powi(j);
    let mut sum = FormalSeries::zero(r0, r);
    if per_degree.is_empty() {
        return Ok(sum);
    }
    for (&(m, n), norms) in per_degree {
        for s in norms.iter() {
            x.same_shape(s)?;
        }
        let deg = (m + n) as f64;
        let w = agg.alpha.powf(deg) * (l * agg.b / mj).powf(deg / 2.0);
        sum = &sum + &degree_norm(params, j, m, n, norms).scale(w);
    }
    let e = e_series(params, j, j, x)?;
    Ok(e.try_mul(&sum)?.scale(mj * mj / l))
}
