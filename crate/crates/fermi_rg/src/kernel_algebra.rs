//! Four legged kernels over mixed external-momentum and sectorized-position legs
//! with spin and creation/annihilation indices.
//!
//! A directed index is `z = 2u + b` with `u` the undirected point and `b` the bar.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_scales::Momentum;
use crate::series_norms::FormalSeries;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointKind {
    /// External momentum leg `k` in `Z_n`.
    External { k: usize },
    /// Auxiliary external momentum leg.
    ExternalPrimed { k: usize },
    /// Sectorized position leg.
    Internal { x: usize, s: usize },
    /// Bare position leg.
    Position { x: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    pub kind: PointKind,
    pub spin: u8,
}

impl Point {
    /// `-1` primed external, `0` external, `1` internal or position.
    pub fn component(&self) -> i8 {
        match self.kind {
            PointKind::ExternalPrimed { .. } => -1,
            PointKind::External { .. } => 0,
            PointKind::Internal { .. } | PointKind::Position { .. } => 1,
        }
    }

    pub fn is_external(&self) -> bool {
        self.component() <= 0
    }

    pub fn sector(&self) -> usize {
        match self.kind {
            PointKind::Internal { s, .. } => s,
            _ => 0,
        }
    }

    pub fn position(&self) -> Option<usize> {
        match self.kind {
            PointKind::Internal { x, .. } | PointKind::Position { x } => Some(x),
            _ => None,
        }
    }

    pub fn momentum(&self) -> Option<usize> {
        match self.kind {
            PointKind::External { k } | PointKind::ExternalPrimed { k } => Some(k),
            _ => None,
        }
    }
}

/// Finite set of undirected points on the cyclic grid `Z_n`.
#[derive(Clone, Debug)]
pub struct LegSpace {
    pub n: usize,
    pub n_sectors: usize,
    points: Vec<Point>,
    lookup: HashMap<Point, usize>,
}

impl PartialEq for LegSpace {
    fn eq(&self, o: &Self) -> bool {
        self.n == o.n && self.n_sectors == o.n_sectors && self.points == o.points
    }
}

impl LegSpace {
    pub fn custom(n: usize, n_sectors: usize, points: Vec<Point>) -> Arc<Self> {
        let lookup = points.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        Arc::new(Self {
            n,
            n_sectors,
            points,
            lookup,
        })
    }

    fn build(n: usize, n_sectors: usize, primed: bool, external: bool, internal: bool) -> Arc<Self> {
        let mut pts = Vec::new();
        if primed {
            for k in 0..n {
                for spin in 0..2 {
                    pts.push(Point {
                        kind: PointKind::ExternalPrimed { k },
                        spin,
                    });
                }
            }
        }
        if external {
            for k in 0..n {
                for spin in 0..2 {
                    pts.push(Point {
                        kind: PointKind::External { k },
                        spin,
                    });
                }
            }
        }
        if internal {
            for s in 0..n_sectors {
                for x in 0..n {
                    for spin in 0..2 {
                        pts.push(Point {
                            kind: PointKind::Internal { x, s },
                            spin,
                        });
                    }
                }
            }
        }
        Self::custom(n, n_sectors, pts)
    }

    /// External momenta and sectorized positions.
    pub fn mixed(n: usize, n_sectors: usize) -> Arc<Self> {
        Self::build(n, n_sectors, false, true, true)
    }

    /// Primed externals, externals and sectorized positions.
    pub fn primed(n: usize, n_sectors: usize) -> Arc<Self> {
        Self::build(n, n_sectors, true, true, true)
    }

    /// Sectorized positions only.
    pub fn internal(n: usize, n_sectors: usize) -> Arc<Self> {
        Self::build(n, n_sectors, false, false, true)
    }

    /// Bare positions with spin.
    pub fn positions(n: usize) -> Arc<Self> {
        let mut pts = Vec::new();
        for x in 0..n {
            for spin in 0..2 {
                pts.push(Point {
                    kind: PointKind::Position { x },
                    spin,
                });
            }
        }
        Self::custom(n, 1, pts)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, u: usize) -> Point {
        self.points[u]
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn index_of(&self, p: &Point) -> Option<usize> {
        self.lookup.get(p).copied()
    }

    pub fn has_primed(&self) -> bool {
        self.points.iter().any(|p| p.component() == -1)
    }

    /// Same space with `ExternalPrimed` points identified with `External` ones.
    pub fn unprimed(&self) -> Arc<Self> {
        let pts: Vec<Point> = self
            .points
            .iter()
            .filter(|p| p.component() != -1)
            .copied()
            .collect();
        Self::custom(self.n, self.n_sectors, pts)
    }
}

/// Dense four legged kernel, row-major over `dim^4`.
#[derive(Clone, Debug)]
pub struct Kernel4 {
    pub space: Arc<LegSpace>,
    pub directed: bool,
    pub data: Vec<Complex64>,
}

/// Parity of a permutation given as an image list.
pub fn perm_sign(perm: &[usize]) -> f64 {
    let mut seen = vec![false; perm.len()];
    let mut sign = 1.0;
    for i in 0..perm.len() {
        if seen[i] {
            continue;
        }
        let mut j = i;
        let mut len = 0;
        while !seen[j] {
            seen[j] = true;
            j = perm[j];
            len += 1;
        }
        if len % 2 == 0 {
            sign = -sign;
        }
    }
    sign
}

/// All 24 permutations of four slots.
pub fn perms4() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let mut seen = [false; 4];
                    if p.iter().all(|&i| !std::mem::replace(&mut seen[i], true)) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

/// Reordering bringing `-1` slots before `0` slots before `1` slots, keeping
/// relative order. Returns `(order, sign)` with `order[new] = old`; the
/// permutation sign is that of `order`.
pub fn ord(ivec: &[i8]) -> (Vec<usize>, f64) {
    let mut order: Vec<usize> = (0..ivec.len()).collect();
    order.sort_by_key(|&j| ivec[j]);
    let sign = perm_sign(&order);
    (order, sign)
}

impl Kernel4 {
    pub fn zeros(space: Arc<LegSpace>, directed: bool) -> Self {
        let d = if directed { 2 * space.len() } else { space.len() };
        Self {
            space,
            directed,
            data: vec![ZERO; d * d * d * d],
        }
    }

    pub fn from_fn<F>(space: Arc<LegSpace>, directed: bool, f: F) -> Self
    where
        F: Fn([usize; 4]) -> Complex64 + Sync,
    {
        let mut k = Self::zeros(space, directed);
        let d = k.dim();
        k.data.par_iter_mut().enumerate().for_each(|(i, v)| {
            *v = f(unflatten(i, d));
        });
        k
    }

    pub fn random<R: Rng>(space: Arc<LegSpace>, directed: bool, amplitude: f64, rng: &mut R) -> Self {
        let mut k = Self::zeros(space, directed);
        for v in k.data.iter_mut() {
            *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * amplitude;
        }
        k
    }

    pub fn dim(&self) -> usize {
        if self.directed {
            2 * self.space.len()
        } else {
            self.space.len()
        }
    }

    #[inline]
    pub fn idx(&self, z: [usize; 4]) -> usize {
        let d = self.dim();
        ((z[0] * d + z[1]) * d + z[2]) * d + z[3]
    }

    #[inline]
    pub fn get(&self, z: [usize; 4]) -> Complex64 {
        self.data[self.idx(z)]
    }

    pub fn set(&mut self, z: [usize; 4], v: Complex64) {
        let i = self.idx(z);
        self.data[i] = v;
    }

    /// Undirected point and bar of an index.
    #[inline]
    pub fn split(&self, z: usize) -> (usize, Option<u8>) {
        if self.directed {
            (z / 2, Some((z % 2) as u8))
        } else {
            (z, None)
        }
    }

    pub fn point_of(&self, z: usize) -> Point {
        self.space.point(self.split(z).0)
    }

    pub fn component_of(&self, z: [usize; 4]) -> [i8; 4] {
        [0, 1, 2, 3].map(|p| self.point_of(z[p]).component())
    }

    fn same_shape(&self, o: &Self) -> Result<()> {
        if self.directed != o.directed || *self.space != *o.space {
            return Err(Error::Shape("kernels over different leg spaces".into()));
        }
        Ok(())
    }

    pub fn add(&self, o: &Self) -> Result<Self> {
        self.same_shape(o)?;
        let mut out = self.clone();
        out.data.iter_mut().zip(&o.data).for_each(|(a, b)| *a += *b);
        Ok(out)
    }

    pub fn sub(&self, o: &Self) -> Result<Self> {
        self.same_shape(o)?;
        let mut out = self.clone();
        out.data.iter_mut().zip(&o.data).for_each(|(a, b)| *a -= *b);
        Ok(out)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|a| *a *= c);
        out
    }

    pub fn scale_re(&self, c: f64) -> Self {
        self.scale(Complex64::new(c, 0.0))
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn max_abs_diff(&self, o: &Self) -> Result<f64> {
        self.same_shape(o)?;
        Ok(self
            .data
            .iter()
            .zip(&o.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).norm())))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == ZERO)
    }

    /// `g(x1..x4) = f(x_{perm[0]}, .., x_{perm[3]})`.
    pub fn permute(&self, perm: [usize; 4]) -> Self {
        let d = self.dim();
        let mut out = Self::zeros(self.space.clone(), self.directed);
        out.data.par_iter_mut().enumerate().for_each(|(i, v)| {
            let z = unflatten(i, d);
            let w = [z[perm[0]], z[perm[1]], z[perm[2]], z[perm[3]]];
            *v = self.data[((w[0] * d + w[1]) * d + w[2]) * d + w[3]];
        });
        out
    }

    /// Signed average over all 24 argument permutations.
    pub fn antisymmetrize(&self) -> Self {
        let d = self.dim();
        let perms: Vec<([usize; 4], f64)> = perms4()
            .into_iter()
            .map(|p| (p, perm_sign(&p) / 24.0))
            .collect();
        let mut out = Self::zeros(self.space.clone(), self.directed);
        out.data.par_iter_mut().enumerate().for_each(|(i, v)| {
            let z = unflatten(i, d);
            let mut acc = ZERO;
            for (p, s) in &perms {
                let w = [z[p[0]], z[p[1]], z[p[2]], z[p[3]]];
                acc += self.data[((w[0] * d + w[1]) * d + w[2]) * d + w[3]] * *s;
            }
            *v = acc;
        });
        out
    }

    pub fn is_antisymmetric(&self, tol: f64) -> bool {
        perms4().iter().all(|p| {
            let s = perm_sign(p);
            let g = self.permute(*p);
            g.data
                .iter()
                .zip(&self.data)
                .all(|(a, b)| (a - b * s).norm() <= tol)
        })
    }

    /// Zero every entry whose bar pattern does not have two 0s and two 1s.
    pub fn project_number_conserving(&self) -> Result<Self> {
        if !self.directed {
            return Err(Error::Shape("number conservation needs bar indices".into()));
        }
        let d = self.dim();
        let mut out = self.clone();
        out.data.par_iter_mut().enumerate().for_each(|(i, v)| {
            let z = unflatten(i, d);
            let ones: usize = z.iter().map(|x| x % 2).sum();
            if ones != 2 {
                *v = ZERO;
            }
        });
        Ok(out)
    }

    pub fn is_number_conserving(&self, tol: f64) -> bool {
        if !self.directed {
            return false;
        }
        let d = self.dim();
        self.data.iter().enumerate().all(|(i, v)| {
            let z = unflatten(i, d);
            let ones: usize = z.iter().map(|x| x % 2).sum();
            ones == 2 || v.norm() <= tol
        })
    }

    /// Keep spin conserving entries (as many up spins among bar 0 as among bar 1
    /// legs) and symmetrize under the global spin flip.
    pub fn project_spin_independent(&self) -> Result<Self> {
        if !self.directed {
            return Err(Error::Shape("spin projection needs bar indices".into()));
        }
        let d = self.dim();
        let sp = &self.space;
        let flip: Vec<usize> = (0..d)
            .map(|z| {
                let (u, b) = (z / 2, z % 2);
                let p = sp.point(u);
                let q = Point {
                    kind: p.kind,
                    spin: 1 - p.spin,
                };
                2 * sp.index_of(&q).expect("spin partner present") + b
            })
            .collect();
        let mut out = Self::zeros(sp.clone(), true);
        out.data.par_iter_mut().enumerate().for_each(|(i, v)| {
            let z = unflatten(i, d);
            let mut bal = 0i32;
            for &x in &z {
                let p = sp.point(x / 2);
                if p.spin == 0 {
                    bal += if x % 2 == 0 { 1 } else { -1 };
                }
            }
            if bal != 0 {
                *v = ZERO;
                return;
            }
            let w = [flip[z[0]], flip[z[1]], flip[z[2]], flip[z[3]]];
            *v = (self.data[i] + self.data[((w[0] * d + w[1]) * d + w[2]) * d + w[3]]) * 0.5;
        });
        Ok(out)
    }

    /// Projection onto translation invariant kernels:
    /// `g = (1/n) sum_t e^{-2 pi i K t/n} f(positions + t)` with
    /// `K = sum over external legs of (-1)^b k`.
    pub fn project_translation(&self) -> Self {
        let sp = &self.space;
        let n = sp.n;
        let d = self.dim();
        let shift: Vec<Vec<usize>> = (0..n)
            .map(|t| {
                (0..d)
                    .map(|z| {
                        let (u, b) = self.split(z);
                        let p = sp.point(u);
                        let q = match p.kind {
                            PointKind::Internal { x, s } => Point {
                                kind: PointKind::Internal { x: (x + t) % n, s },
                                spin: p.spin,
                            },
                            PointKind::Position { x } => Point {
                                kind: PointKind::Position { x: (x + t) % n },
                                spin: p.spin,
                            },
                            _ => p,
                        };
                        let v = sp.index_of(&q).expect("shifted point present");
                        match b {
                            Some(b) => 2 * v + b as usize,
                            None => v,
                        }
                    })
                    .collect()
            })
            .collect();
        let mut out = Self::zeros(sp.clone(), self.directed);
        out.data.par_iter_mut().enumerate().for_each(|(i, v)| {
            let z = unflatten(i, d);
            let mut kk: i64 = 0;
            for &x in &z {
                let (u, b) = self.split(x);
                if let Some(k) = sp.point(u).momentum() {
                    let sgn = if b == Some(1) { -1 } else { 1 };
                    kk += sgn * k as i64;
                }
            }
            let mut acc = ZERO;
            for (t, sh) in shift.iter().enumerate() {
                let w = [sh[z[0]], sh[z[1]], sh[z[2]], sh[z[3]]];
                let ph = -2.0 * PI * (kk * t as i64) as f64 / n as f64;
                acc += self.data[((w[0] * d + w[1]) * d + w[2]) * d + w[3]] * Complex64::from_polar(1.0, ph);
            }
            *v = acc / n as f64;
        });
        out
    }

    fn require_directed(&self) -> Result<()> {
        if self.directed {
            Ok(())
        } else {
            Err(Error::Shape("operation needs a directed kernel".into()))
        }
    }

    fn require_undirected(&self) -> Result<()> {
        if self.directed {
            Err(Error::Shape("operation needs an undirected kernel".into()))
        } else {
            Ok(())
        }
    }

    fn reduce(&self, bars: [usize; 4]) -> Result<Self> {
        self.require_directed()?;
        let d = self.dim();
        Ok(Self::from_fn(self.space.clone(), false, |u| {
            let z = [
                2 * u[0] + bars[0],
                2 * u[1] + bars[1],
                2 * u[2] + bars[2],
                2 * u[3] + bars[3],
            ];
            self.data[((z[0] * d + z[1]) * d + z[2]) * d + z[3]]
        }))
    }

    /// `f^pp(z') = f(i0 z1', i0 z2', i1 z3', i1 z4')`.
    pub fn reduce_pp(&self) -> Result<Self> {
        self.reduce([0, 0, 1, 1])
    }

    /// `f^ph(z') = f(i0 z1', i1 z2', i1 z3', i0 z4')`.
    pub fn reduce_ph(&self) -> Result<Self> {
        self.reduce([0, 1, 1, 0])
    }

    /// Bubble particle-particle reduction `f(i1, i1, i0, i0)`.
    pub fn bubble_reduce_pp(&self) -> Result<Self> {
        self.reduce([1, 1, 0, 0])
    }

    /// Bubble particle-hole reduction `f(i1, i0, i0, i1)`.
    pub fn bubble_reduce_ph(&self) -> Result<Self> {
        self.reduce([1, 0, 0, 1])
    }

    /// Particle-particle value over directed legs.
    pub fn value_pp(&self) -> Result<Self> {
        self.require_undirected()?;
        let d = self.dim();
        let f = &self.data;
        let at = |u: [usize; 4]| f[((u[0] * d + u[1]) * d + u[2]) * d + u[3]];
        Ok(Self::from_fn(self.space.clone(), true, |z| {
            let b = z.map(|x| x % 2);
            let u = z.map(|x| x / 2);
            match b {
                [0, 0, 1, 1] => at(u),
                [1, 1, 0, 0] => at([u[2], u[3], u[0], u[1]]),
                _ => ZERO,
            }
        }))
    }

    /// Particle-hole value over directed legs.
    pub fn value_ph(&self) -> Result<Self> {
        self.require_undirected()?;
        let d = self.dim();
        let f = &self.data;
        let at = |u: [usize; 4]| f[((u[0] * d + u[1]) * d + u[2]) * d + u[3]];
        Ok(Self::from_fn(self.space.clone(), true, |z| {
            let b = z.map(|x| x % 2);
            let u = z.map(|x| x / 2);
            match b {
                [0, 1, 1, 0] => at(u),
                [1, 0, 0, 1] => at([u[1], u[0], u[3], u[2]]),
                [1, 0, 1, 0] => -at([u[1], u[0], u[2], u[3]]),
                [0, 1, 0, 1] => -at([u[0], u[1], u[3], u[2]]),
                _ => ZERO,
            }
        }))
    }

    /// `F^f(x1, x2, x3, x4) = -F(x1, x3, x2, x4)`.
    pub fn flip(&self) -> Self {
        self.permute([0, 2, 1, 3]).scale_re(-1.0)
    }

    /// `F(x4, x3, x2, x1)`.
    pub fn invert(&self) -> Self {
        self.permute([3, 2, 1, 0])
    }

    pub fn inversion_residual(&self) -> f64 {
        self.max_abs_diff(&self.invert()).expect("same shape")
    }

    pub fn is_inversion_symmetric(&self, tol: f64) -> bool {
        self.inversion_residual() <= tol
    }

    /// `(F + F(x4, x3, x2, x1)) / 2`.
    pub fn symmetrize_inversion(&self) -> Self {
        self.add(&self.invert()).expect("same shape").scale_re(0.5)
    }

    /// Restriction `f|_ivec` (zero outside the component).
    pub fn restrict(&self, ivec: [i8; 4]) -> Self {
        let d = self.dim();
        let comp: Vec<i8> = (0..d).map(|z| self.point_of(z).component()).collect();
        let mut out = self.clone();
        out.data.par_iter_mut().enumerate().for_each(|(i, v)| {
            let z = unflatten(i, d);
            if (0..4).any(|p| comp[z[p]] != ivec[p]) {
                *v = ZERO;
            }
        });
        out
    }

    /// `Ord f|_ivec` as a kernel over the same legs: `sgn * f(y_{sigma(1)}, ..)`
    /// where slot `j` receives the argument at its new position.
    pub fn ord_component(&self, ivec: [i8; 4]) -> Self {
        let (order, sign) = ord(&ivec);
        let mut sigma = [0usize; 4];
        for (new, &old) in order.iter().enumerate() {
            sigma[old] = new;
        }
        self.restrict(ivec).permute(sigma).scale_re(sign)
    }

    /// Inverse of [`Kernel4::ord_component`] for a kernel supported on the
    /// reordered component.
    pub fn ord_inverse(&self, ivec: [i8; 4]) -> Self {
        let (order, sign) = ord(&ivec);
        let mut o = [0usize; 4];
        o.copy_from_slice(&order);
        self.permute(o).scale_re(sign)
    }

    /// Matrix with rows `(z1, z2)` and columns `(z3, z4)`.
    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        let d = self.dim();
        DMatrix::from_row_slice(d * d, d * d, &self.data)
    }

    pub fn from_matrix(space: Arc<LegSpace>, directed: bool, m: &DMatrix<Complex64>) -> Result<Self> {
        let mut k = Self::zeros(space, directed);
        let d2 = k.dim() * k.dim();
        if m.nrows() != d2 || m.ncols() != d2 {
            return Err(Error::Shape(format!(
                "matrix {}x{} does not match {d2}x{d2}",
                m.nrows(),
                m.ncols()
            )));
        }
        for r in 0..d2 {
            for c in 0..d2 {
                k.data[r * d2 + c] = m[(r, c)];
            }
        }
        Ok(k)
    }

    /// Apply one sparse linear operator per leg.
    pub fn apply_leg_ops(&self, ops: [&LegOp; 4]) -> Result<Self> {
        for op in ops.iter() {
            if op.directed != self.directed || *op.from != *self.space {
                return Err(Error::Shape("leg operator does not match kernel".into()));
            }
        }
        let to = ops[0].to.clone();
        if ops.iter().any(|o| *o.to != *to) {
            return Err(Error::Shape("leg operators disagree on target space".into()));
        }
        let mut dims = [self.dim(); 4];
        let mut cur = self.data.clone();
        for (axis, op) in ops.iter().enumerate() {
            let dout = op.rows.len();
            let mut nd = dims;
            nd[axis] = dout;
            let total: usize = nd.iter().product();
            let mut next = vec![ZERO; total];
            let sd = dims;
            let c = &cur;
            next.par_iter_mut().enumerate().for_each(|(i, v)| {
                let mut z = [0usize; 4];
                let mut r = i;
                for p in (0..4).rev() {
                    z[p] = r % nd[p];
                    r /= nd[p];
                }
                let mut acc = ZERO;
                for &(src, w) in &op.rows[z[axis]] {
                    let mut y = z;
                    y[axis] = src;
                    acc += w * c[((y[0] * sd[1] + y[1]) * sd[2] + y[2]) * sd[3] + y[3]];
                }
                *v = acc;
            });
            cur = next;
            dims = nd;
        }
        Ok(Self {
            space: to,
            directed: self.directed,
            data: cur,
        })
    }

    /// Components present in the leg space.
    pub fn components(&self) -> Vec<[i8; 4]> {
        let mut kinds: Vec<i8> = self.space.points().iter().map(|p| p.component()).collect();
        kinds.sort();
        kinds.dedup();
        let mut out = Vec::new();
        for &a in &kinds {
            for &b in &kinds {
                for &c in &kinds {
                    for &e in &kinds {
                        out.push([a, b, c, e]);
                    }
                }
            }
        }
        out
    }

    /// Norm of one component at derivative order zero.
    pub fn component_norm(&self, ivec: [i8; 4], p: usize) -> f64 {
        let d = self.dim();
        let comp: Vec<i8> = (0..d).map(|z| self.point_of(z).component()).collect();
        let ext_legs: Vec<usize> = (0..4).filter(|&q| ivec[q] <= 0).collect();
        let int_legs: Vec<usize> = (0..4).filter(|&q| ivec[q] == 1).collect();
        let m = ext_legs.len();
        let ni = int_legs.len();
        let members = |c: i8| -> Vec<usize> { (0..d).filter(|&z| comp[z] == c).collect() };
        if ni == 0 {
            if p + 1 != m {
                return 0.0;
            }
            let lists: Vec<Vec<usize>> = (0..4).map(|q| members(ivec[q])).collect();
            let mut best: f64 = 0.0;
            for_each_tuple(&lists, |z| {
                best = best.max(self.get(z).norm());
            });
            return best;
        }
        if p < m || p > m + ni {
            return 0.0;
        }
        let ns = self.space.n_sectors.max(1);
        let int_all = members(1);
        let by_sector: Vec<Vec<usize>> = (0..ns)
            .map(|s| {
                int_all
                    .iter()
                    .copied()
                    .filter(|&z| self.point_of(z).sector() == s)
                    .collect()
            })
            .collect();
        let ext_lists: Vec<Vec<usize>> = ext_legs.iter().map(|&q| members(ivec[q])).collect();
        let n_sec_tuples = ns.pow(ni as u32);
        let chosen_count = p - m;
        let subsets: Vec<Vec<usize>> = subsets_of(ni, chosen_count);
        let mut best: f64 = 0.0;
        for_each_tuple(&ext_lists, |ez| {
            let mut block = vec![0.0; n_sec_tuples];
            for (bi, slot) in block.iter_mut().enumerate() {
                let secs = digits(bi, ns, ni);
                let lists: Vec<&Vec<usize>> = secs.iter().map(|&s| &by_sector[s]).collect();
                *slot = self.one_inf(&ext_legs, &ez, &int_legs, &lists);
            }
            for sub in &subsets {
                let mut local: f64 = 0.0;
                for fixed in 0..ns.pow(sub.len() as u32) {
                    let fs = digits(fixed, ns, sub.len());
                    let mut sum = 0.0;
                    for (bi, val) in block.iter().enumerate() {
                        let secs = digits(bi, ns, ni);
                        if sub.iter().zip(&fs).all(|(&q, &s)| secs[q] == s) {
                            sum += *val;
                        }
                    }
                    local = local.max(sum);
                }
                best = best.max(local);
            }
        });
        best
    }

    /// `max_q sup_{xi_q} sum_{xi_rest} |f|` over the internal legs with
    /// external arguments and sectors held fixed.
    fn one_inf(&self, ext_legs: &[usize], ez: &[usize], int_legs: &[usize], lists: &[&Vec<usize>]) -> f64 {
        let ni = int_legs.len();
        let mut best: f64 = 0.0;
        for q in 0..ni {
            for &zq in lists[q] {
                let mut sum = 0.0;
                let rest: Vec<Vec<usize>> = (0..ni)
                    .map(|r| if r == q { vec![zq] } else { lists[r].clone() })
                    .collect();
                for_each_tuple(&rest, |iz| {
                    let mut z = [0usize; 4];
                    for (a, &leg) in ext_legs.iter().enumerate() {
                        z[leg] = ez[a];
                    }
                    for (a, &leg) in int_legs.iter().enumerate() {
                        z[leg] = iz[a];
                    }
                    sum += self.get(z).norm();
                });
                best = best.max(sum);
            }
        }
        best
    }

    /// Derivative order zero norm `|f|_{p}`: the all-external part through `g`
    /// plus every component with at least one internal leg.
    pub fn sector_norm_p(&self, p: usize) -> f64 {
        self.components()
            .into_iter()
            .map(|iv| self.component_norm(iv, p))
            .sum()
    }

    /// Structured text: header plus sparse tuples `(z1, z2, z3, z4, re, im)`.
    pub fn to_text(&self, scale: i32) -> String {
        let mut s = format!(
            "# kernel4 scale={} n={} sectors={} directed={} dim={}\n",
            scale,
            self.space.n,
            self.space.n_sectors,
            self.directed,
            self.dim()
        );
        let d = self.dim();
        for (i, v) in self.data.iter().enumerate() {
            if *v != ZERO {
                let z = unflatten(i, d);
                s.push_str(&format!(
                    "{} {} {} {} {} {}\n",
                    z[0],
                    z[1],
                    z[2],
                    z[3],
                    crate::emit::fmt_f64(v.re),
                    crate::emit::fmt_f64(v.im)
                ));
            }
        }
        s
    }
}

#[inline]
pub fn unflatten(i: usize, d: usize) -> [usize; 4] {
    [i / (d * d * d), (i / (d * d)) % d, (i / d) % d, i % d]
}

fn digits(mut v: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for p in (0..len).rev() {
        out[p] = v % base;
        v /= base;
    }
    out
}

fn subsets_of(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize == k {
            out.push((0..n).filter(|&i| mask & (1 << i) != 0).collect());
        }
    }
    out
}

fn for_each_tuple<F: FnMut([usize; 4])>(lists: &[impl AsRef<[usize]>], mut f: F) {
    let n = lists.len();
    if lists.iter().any(|l| l.as_ref().is_empty()) {
        return;
    }
    let mut pos = vec![0usize; n];
    loop {
        let mut z = [0usize; 4];
        for p in 0..n {
            z[p] = lists[p].as_ref()[pos[p]];
        }
        f(z);
        let mut p = n;
        loop {
            if p == 0 {
                return;
            }
            p -= 1;
            pos[p] += 1;
            if pos[p] < lists[p].as_ref().len() {
                break;
            }
            pos[p] = 0;
        }
    }
}

/// Sparse linear map on one leg: `out[z] = sum rows[z] (src, w) * in[src]`.
#[derive(Clone, Debug)]
pub struct LegOp {
    pub from: Arc<LegSpace>,
    pub to: Arc<LegSpace>,
    pub directed: bool,
    pub rows: Vec<Vec<(usize, Complex64)>>,
}

impl LegOp {
    fn dim(space: &LegSpace, directed: bool) -> usize {
        if directed {
            2 * space.len()
        } else {
            space.len()
        }
    }

    /// Builds an operator from a rule on undirected points with the bar (if any)
    /// carried through unchanged; points missing from `from` contribute nothing.
    pub fn from_point_rule<F>(from: Arc<LegSpace>, to: Arc<LegSpace>, directed: bool, rule: F) -> Self
    where
        F: Fn(Point, Option<u8>) -> Vec<(Point, Complex64)>,
    {
        let dout = Self::dim(&to, directed);
        let rows = (0..dout)
            .map(|z| {
                let (u, b) = if directed {
                    (z / 2, Some((z % 2) as u8))
                } else {
                    (z, None)
                };
                rule(to.point(u), b)
                    .into_iter()
                    .filter(|(_, w)| *w != ZERO)
                    .filter_map(|(p, w)| {
                        let v = from.index_of(&p)?;
                        let src = match b {
                            Some(b) => 2 * v + b as usize,
                            None => v,
                        };
                        Some((src, w))
                    })
                    .collect()
            })
            .collect();
        Self {
            from,
            to,
            directed,
            rows,
        }
    }

    pub fn identity(space: Arc<LegSpace>, directed: bool) -> Self {
        Self::from_point_rule(space.clone(), space, directed, |p, _| vec![(p, ONE)])
    }
}

/// Kernel on the grid for the conversion factor `B(k)`; `b[k]` for `k` in `Z_n`.
fn conversion_terms(from: &LegSpace, k: usize, spin: u8, bar: u8, b: &[Complex64]) -> Vec<(Point, Complex64)> {
    let n = from.n;
    let sgn = if bar == 1 { -1.0 } else { 1.0 };
    let mut out = Vec::new();
    for s in 0..from.n_sectors {
        for x in 0..n {
            let ph = sgn * 2.0 * PI * (k * x) as f64 / n as f64;
            out.push((
                Point {
                    kind: PointKind::Internal { x, s },
                    spin,
                },
                Complex64::from_polar(1.0, ph) * b[k],
            ));
        }
    }
    out
}

fn check_b(space: &LegSpace, b: &[Complex64]) -> Result<()> {
    if b.len() != space.n {
        return Err(Error::Shape(format!("B has {} values, grid has {}", b.len(), space.n)));
    }
    Ok(())
}

fn require_directed(f: &Kernel4) -> Result<()> {
    if !f.directed {
        return Err(Error::Shape("shear family needs directed kernels".into()));
    }
    Ok(())
}

/// `shear(f, B)`: every external leg receives the converted internal leg.
pub fn shear(f: &Kernel4, b: &[Complex64]) -> Result<Kernel4> {
    require_directed(f)?;
    check_b(&f.space, b)?;
    let sp = f.space.clone();
    let op = LegOp::from_point_rule(sp.clone(), sp.clone(), true, |p, bar| match p.kind {
        PointKind::External { k } => {
            let mut v = vec![(p, ONE)];
            v.extend(conversion_terms(&sp, k, p.spin, bar.unwrap_or(0), b));
            v
        }
        _ => vec![(p, ONE)],
    });
    f.apply_leg_ops([&op, &op, &op, &op])
}

/// `shear'(f, B)`: primed external legs are the converted internal legs.
pub fn shear_prime(f: &Kernel4, b: &[Complex64]) -> Result<Kernel4> {
    require_directed(f)?;
    check_b(&f.space, b)?;
    let sp = f.space.clone();
    let to = LegSpace::primed(sp.n, sp.n_sectors);
    let op = LegOp::from_point_rule(sp.clone(), to, true, |p, bar| match p.kind {
        PointKind::ExternalPrimed { k } => conversion_terms(&sp, k, p.spin, bar.unwrap_or(0), b),
        _ => vec![(p, ONE)],
    });
    f.apply_leg_ops([&op, &op, &op, &op])
}

fn multiply_component(f: &Kernel4, comp: i8, b: &[Complex64]) -> Result<Kernel4> {
    require_directed(f)?;
    check_b(&f.space, b)?;
    let sp = f.space.clone();
    let op = LegOp::from_point_rule(sp.clone(), sp, true, |p, _| {
        if p.component() == comp {
            vec![(p, b[p.momentum().expect("external leg")])]
        } else {
            vec![(p, ONE)]
        }
    });
    f.apply_leg_ops([&op, &op, &op, &op])
}

/// `sct'(f, B)`: primed external legs multiplied by `B(k')`.
pub fn sct_prime(f: &Kernel4, b: &[Complex64]) -> Result<Kernel4> {
    multiply_component(f, -1, b)
}

/// `sct(f, B)`: external legs multiplied by `B(k)`.
pub fn sct(f: &Kernel4, b: &[Complex64]) -> Result<Kernel4> {
    multiply_component(f, 0, b)
}

/// `Pi`: identify primed external legs with external legs, summing components.
pub fn pi_collapse(f: &Kernel4) -> Result<Kernel4> {
    let sp = f.space.clone();
    let to = sp.unprimed();
    let op = LegOp::from_point_rule(sp, to, f.directed, |p, _| match p.kind {
        PointKind::External { k } => vec![
            (p, ONE),
            (
                Point {
                    kind: PointKind::ExternalPrimed { k },
                    spin: p.spin,
                },
                ONE,
            ),
        ],
        _ => vec![(p, ONE)],
    });
    f.apply_leg_ops([&op, &op, &op, &op])
}

/// `S_kappa`: component `ivec` multiplied by `prod kappa_j^{1 - i_j}`.
pub fn s_kappa(f: &Kernel4, kappa: [Complex64; 4]) -> Result<Kernel4> {
    let d = f.dim();
    let comp: Vec<i8> = (0..d).map(|z| f.point_of(z).component()).collect();
    let table: Vec<[Complex64; 3]> = kappa.iter().map(|&k| [k * k, k, ONE]).collect();
    let mut out = f.clone();
    out.data.par_iter_mut().enumerate().for_each(|(i, v)| {
        let z = unflatten(i, d);
        for p in 0..4 {
            *v *= table[p][(comp[z[p]] + 1) as usize];
        }
    });
    Ok(out)
}

/// Recovers `Pi(f|_ivec)` from `Pi(S_kappa f)` sampled on `m` roots of unity
/// per leg; exact for `m >= 3`.
pub fn cauchy_extract(f: &Kernel4, ivec: [i8; 4], m: usize) -> Result<Kernel4> {
    if m < 3 {
        return Err(Error::Resolution(format!("{m} circle points per leg, need at least 3")));
    }
    let roots: Vec<Complex64> = (0..m)
        .map(|a| Complex64::from_polar(1.0, 2.0 * PI * a as f64 / m as f64))
        .collect();
    let target = ivec.map(|i| if i == 1 { 1 } else { 0 });
    let mut acc = Kernel4::zeros(f.space.clone(), f.directed);
    for a in 0..m.pow(4) {
        let ds = digits(a, m, 4);
        let kap = [roots[ds[0]], roots[ds[1]], roots[ds[2]], roots[ds[3]]];
        let mut w = ONE;
        for p in 0..4 {
            w *= kap[p].powi(-(1 - ivec[p] as i32));
        }
        acc = acc.add(&s_kappa(f, kap)?.scale(w))?;
    }
    let total = pi_collapse(&acc)?.scale_re(1.0 / m.pow(4) as f64);
    Ok(total.restrict(target))
}

/// Sampled momentum grid with central finite difference steps per direction.
#[derive(Clone, Debug)]
pub struct FdGrid {
    pub points: Vec<Momentum>,
    pub steps: [f64; 3],
}

fn fd_weights(order: u32) -> &'static [(i32, f64)] {
    match order {
        0 => &[(0, 1.0)],
        1 => &[(-1, -0.5), (1, 0.5)],
        _ => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
    }
}

/// Central difference estimate of `D^delta h(k)` for orders up to 2 per direction.
pub fn central_difference<F: Fn(Momentum) -> Complex64>(h: &F, k: Momentum, delta: [u32; 3], steps: [f64; 3]) -> Complex64 {
    let mut acc = ZERO;
    for &(a, wa) in fd_weights(delta[0]) {
        for &(b, wb) in fd_weights(delta[1]) {
            for &(c, wc) in fd_weights(delta[2]) {
                let p = Momentum::new(
                    k.k0 + a as f64 * steps[0],
                    k.kvec[0] + b as f64 * steps[1],
                    k.kvec[1] + c as f64 * steps[2],
                );
                acc += h(p) * (wa * wb * wc);
            }
        }
    }
    let scale = steps[0].powi(delta[0] as i32) * steps[1].powi(delta[1] as i32) * steps[2].powi(delta[2] as i32);
    acc / scale
}

/// Majorant series of a scalar function: coefficient `delta` is the sampled
/// sup of `|D^delta h| / delta!` for `|delta| <= max_order`, `inf` beyond.
pub fn momentum_norm_tilde<F>(h: &F, grid: &FdGrid, max_order: u32, r0: u32, r: u32) -> Result<FormalSeries>
where
    F: Fn(Momentum) -> Complex64 + Sync,
{
    if max_order > 2 || max_order > r0 || max_order > r {
        return Err(Error::Resolution(format!(
            "order {max_order} beyond the central difference stencil or truncation"
        )));
    }
    if grid.points.is_empty() || grid.steps.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::Resolution("empty grid or invalid steps".into()));
    }
    let mut out = FormalSeries::zero(r0, r);
    for d in out.indices() {
        let total = d[0] + d[1] + d[2];
        if total > max_order {
            out.set(d, f64::INFINITY)?;
            continue;
        }
        let fact: f64 = d.iter().map(|&o| if o == 2 { 2.0 } else { 1.0 }).product();
        let sup = grid
            .points
            .par_iter()
            .map(|&k| central_difference(h, k, d, grid.steps).norm())
            .reduce(|| 0.0, f64::max);
        out.set(d, sup / fact)?;
    }
    Ok(out)
}
