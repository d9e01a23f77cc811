//! Adaptive Gauss-Kronrod quadrature and polynomial extrapolation.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Quadrature settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_panels: 20_000,
        }
    }
}

/// One 7-point Gauss / 15-point Kronrod panel: `(kronrod, |kronrod - gauss|)`.
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        rk += WGK[i] * s;
        if i % 2 == 1 {
            rg += WG[i / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

/// Globally adaptive bisection of the panel with largest error estimate.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, cfg: QuadConfig) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let (v, e) = gk15(f, a, b);
    let mut panels = vec![(a, b, v, e)];
    loop {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if !total.is_finite() {
            return Err(Error::NonFinite("quadrature integrand"));
        }
        if err <= cfg.abs_tol.max(cfg.rel_tol * total.abs()) {
            return Ok((total, err));
        }
        if panels.len() >= cfg.max_panels {
            return Err(Error::Quadrature(format!(
                "no convergence on [{a}, {b}]: estimate {total}, error {err}"
            )));
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .fold((0, -1.0), |(bi, be), (i, p)| if p.3 > be { (i, p.3) } else { (bi, be) });
        let (pa, pb, _, _) = panels.swap_remove(worst);
        let m = 0.5 * (pa + pb);
        if m <= pa || m >= pb {
            return Err(Error::Quadrature(format!("panel [{pa}, {pb}] cannot be split")));
        }
        let (v1, e1) = gk15(f, pa, m);
        let (v2, e2) = gk15(f, m, pb);
        panels.push((pa, m, v1, e1));
        panels.push((m, pb, v2, e2));
    }
}

/// `int_a^inf f` through `x = a + t / (1 - t)`.
pub fn integrate_to_inf<F: Fn(f64) -> f64>(f: &F, a: f64, cfg: QuadConfig) -> Result<(f64, f64)> {
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - t;
        let x = a + t / s;
        let v = f(x) / (s * s);
        if v.is_finite() { v } else { 0.0 }
    };
    integrate(&g, 0.0, 1.0, cfg)
}

fn neville_at_zero(h: &[f64], v: &[f64]) -> Result<f64> {
    let n = h.len();
    let mut p = v.to_vec();
    for k in 1..n {
        for i in 0..(n - k) {
            let den = h[i] - h[i + k];
            if den == 0.0 {
                return Err(Error::Extrapolation("repeated node".into()));
            }
            p[i] = (h[i] * p[i + 1] - h[i + k] * p[i]) / den;
        }
    }
    Ok(p[0])
}

/// Neville evaluation at `h = 0` of the interpolating polynomial through
/// `(h_i, v_i)`; returns the value and its change when the last node is dropped.
pub fn neville_zero(h: &[f64], v: &[f64]) -> Result<(f64, f64)> {
    let n = h.len();
    if n < 2 || v.len() != n {
        return Err(Error::Extrapolation(format!("{n} nodes, need at least 2")));
    }
    let value = neville_at_zero(h, v)?;
    let lower = neville_at_zero(&h[..n - 1], &v[..n - 1])?;
    if !value.is_finite() {
        return Err(Error::Extrapolation("non-finite extrapolant".into()));
    }
    Ok((value, (value - lower).abs()))
}
