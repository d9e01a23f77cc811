//! Bubble propagators, ladder convolutions and the iterated / compound particle
//! hole ladder recursions on a periodic position grid.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::emit::Table;
use crate::error::{Error, Result};
use crate::kernel_algebra::{Kernel4, LegOp, LegSpace, Point, PointKind};
use crate::model_scales::{Covariance, Momentum, MomentumFn, ScaleInterval, Scales};
use crate::sector_geometry::Sectorization;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Truncation of the rung sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LadderConfig {
    pub lmax: usize,
    pub rel_tol: f64,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            lmax: 12,
            rel_tol: 1e-10,
        }
    }
}

/// Sectorization data of one scale restricted to the sectors seen by the grid.
#[derive(Clone, Debug)]
pub struct Level {
    pub j: i32,
    pub sectorization: Sectorization,
    pub active: Vec<usize>,
    pub space: Arc<LegSpace>,
    /// `weights[s][g]`: hat weight of active sector `s` at grid momentum `g`.
    pub weights: Vec<Vec<f64>>,
}

impl Level {
    /// `chi_s(y) = (1/N) sum_g e^{2 pi i g y / N} chi_s(k_g)`.
    pub fn chi_check(&self, s: usize, y: usize) -> Complex64 {
        let n = self.weights[s].len();
        let mut acc = ZERO;
        for (g, w) in self.weights[s].iter().enumerate() {
            acc += Complex64::from_polar(*w, 2.0 * PI * ((g * y) % n) as f64 / n as f64);
        }
        acc / n as f64
    }
}

/// Momentum grid on `Z_N` with the sectorizations of a range of scales.
#[derive(Clone, Debug)]
pub struct LadderGrid {
    pub scales: Scales,
    pub n: usize,
    pub momenta: Vec<Momentum>,
    pub base: Arc<LegSpace>,
    pub levels: BTreeMap<i32, Level>,
    pub top: i32,
}

impl LadderGrid {
    /// Grid of `n` momenta near one Fermi point; momentum `g` sits where the
    /// shells `j0 + g mod (top - j0 + 1)` and the next one overlap.
    pub fn new(scales: Scales, n: usize, top: i32) -> Result<Self> {
        let p = &scales.params;
        if n == 0 {
            return Err(Error::Config("grid needs at least one point".into()));
        }
        if top < p.j0 || top + 1 > p.jmax {
            return Err(Error::ScaleRange {
                j: top,
                lo: p.j0,
                hi: p.jmax - 1,
            });
        }
        let span = (top - p.j0 + 1) as usize;
        let l_top = p.l(top);
        let model = scales.model.clone();
        let momenta: Vec<Momentum> = (0..n)
            .map(|g| {
                let jg = p.j0 + (g % span) as i32;
                let mag = 1.7 / p.m.powi(jg + 1);
                let sign = if g % 2 == 0 { 1.0 } else { -1.0 };
                let s = (0.15 + 0.2 * g as f64 / n as f64) * l_top;
                let kv = model.fermi_point(s);
                Momentum::new(sign * mag, kv[0], kv[1])
            })
            .collect();
        let mut levels = BTreeMap::new();
        for j in p.j0..=top {
            let sz = Sectorization::build(p, model.clone(), j)?;
            let active: Vec<usize> = (0..sz.len())
                .filter(|&s| momenta.iter().any(|k| sz.weight(s, *k) > 0.0))
                .collect();
            let weights = active
                .iter()
                .map(|&s| momenta.iter().map(|k| sz.weight(s, *k)).collect())
                .collect();
            let space = LegSpace::internal(n, active.len());
            levels.insert(
                j,
                Level {
                    j,
                    sectorization: sz,
                    active,
                    space,
                    weights,
                },
            );
        }
        Ok(Self {
            scales,
            n,
            momenta,
            base: LegSpace::positions(n),
            levels,
            top,
        })
    }

    pub fn level(&self, j: i32) -> Result<&Level> {
        self.levels.get(&j).ok_or(Error::ScaleRange {
            j,
            lo: self.scales.params.j0,
            hi: self.top,
        })
    }

    /// `f(x, s) = sum_x' chi_s(x - x') f(x')` on every leg.
    pub fn sect_op(&self, j: i32, directed: bool) -> Result<LegOp> {
        let lv = self.level(j)?;
        let n = self.n;
        let chi: Vec<Vec<Complex64>> = (0..lv.active.len())
            .map(|s| (0..n).map(|y| lv.chi_check(s, y)).collect())
            .collect();
        Ok(LegOp::from_point_rule(self.base.clone(), lv.space.clone(), directed, |p, _| {
            let (x, s) = match p.kind {
                PointKind::Internal { x, s } => (x, s),
                _ => unreachable!("internal target"),
            };
            (0..n)
                .map(|xp| {
                    (
                        Point {
                            kind: PointKind::Position { x: xp },
                            spin: p.spin,
                        },
                        chi[s][(x + n - xp) % n],
                    )
                })
                .collect()
        }))
    }

    /// Sum over sectors on every leg.
    pub fn desect_op(&self, j: i32, directed: bool) -> Result<LegOp> {
        let lv = self.level(j)?;
        let ns = lv.active.len();
        Ok(LegOp::from_point_rule(lv.space.clone(), self.base.clone(), directed, |p, _| {
            let x = p.position().expect("position target");
            (0..ns)
                .map(|s| {
                    (
                        Point {
                            kind: PointKind::Internal { x, s },
                            spin: p.spin,
                        },
                        ONE,
                    )
                })
                .collect()
        }))
    }

    /// Desectorize at scale `from`, sectorize at scale `to`.
    pub fn resect_op(&self, from: i32, to: i32, directed: bool) -> Result<LegOp> {
        let src = self.level(from)?;
        let lv = self.level(to)?;
        let n = self.n;
        let ns_src = src.active.len();
        let chi: Vec<Vec<Complex64>> = (0..lv.active.len())
            .map(|s| (0..n).map(|y| lv.chi_check(s, y)).collect())
            .collect();
        Ok(LegOp::from_point_rule(src.space.clone(), lv.space.clone(), directed, |p, _| {
            let (x, s) = match p.kind {
                PointKind::Internal { x, s } => (x, s),
                _ => unreachable!("internal target"),
            };
            let mut out = Vec::with_capacity(n * ns_src);
            for xp in 0..n {
                for sp in 0..ns_src {
                    out.push((
                        Point {
                            kind: PointKind::Internal { x: xp, s: sp },
                            spin: p.spin,
                        },
                        chi[s][(x + n - xp) % n],
                    ));
                }
            }
            out
        }))
    }

    pub fn sectorize(&self, f: &Kernel4, j: i32) -> Result<Kernel4> {
        let op = self.sect_op(j, f.directed)?;
        f.apply_leg_ops([&op, &op, &op, &op])
    }

    pub fn desectorize(&self, f: &Kernel4, j: i32) -> Result<Kernel4> {
        let op = self.desect_op(j, f.directed)?;
        f.apply_leg_ops([&op, &op, &op, &op])
    }

    pub fn resectorize(&self, f: &Kernel4, from: i32, to: i32) -> Result<Kernel4> {
        let op = self.resect_op(from, to, f.directed)?;
        f.apply_leg_ops([&op, &op, &op, &op])
    }

    /// Directed position-space propagator `C(xi, xi')`: `c(x, x')` for bars
    /// `(0, 1)`, `-c(x', x)` for `(1, 0)`, diagonal in spin.
    pub fn propagator(&self, cov: &Covariance) -> Result<DMatrix<Complex64>> {
        let n = self.n;
        let vals: Vec<Complex64> = self.momenta.iter().map(|k| cov.eval(*k)).collect::<Result<_>>()?;
        let c = |x: usize, xp: usize| -> Complex64 {
            let y = (x + n - xp) % n;
            let mut acc = ZERO;
            for (g, v) in vals.iter().enumerate() {
                acc += v * Complex64::from_polar(1.0, 2.0 * PI * ((g * y) % n) as f64 / n as f64);
            }
            acc / n as f64
        };
        let d = 2 * self.base.len();
        let mut m = DMatrix::from_element(d, d, ZERO);
        for z in 0..d {
            for zp in 0..d {
                let (p, b) = (self.base.point(z / 2), z % 2);
                let (q, bp) = (self.base.point(zp / 2), zp % 2);
                if p.spin != q.spin {
                    continue;
                }
                let (x, xp) = (p.position().expect("position"), q.position().expect("position"));
                m[(z, zp)] = match (b, bp) {
                    (0, 1) => c(x, xp),
                    (1, 0) => -c(xp, x),
                    _ => ZERO,
                };
            }
        }
        Ok(m)
    }

    /// Propagator of the covariance `nu^I / (i k0 - e - u)`.
    pub fn covariance_matrix(&self, interval: ScaleInterval, u: &MomentumFn) -> Result<DMatrix<Complex64>> {
        self.propagator(&Covariance::new(self.scales.clone(), interval, u.clone()))
    }

    /// Bubble over directed base positions.
    pub fn bubble(&self, a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Result<Kernel4> {
        bubble(self.base.clone(), a, b)
    }

    /// Bubble composed with desectorization on all legs, as a pair matrix
    /// over the directed internal space of scale `j`.
    pub fn lift(&self, p: &Kernel4, j: i32) -> Result<DMatrix<Complex64>> {
        let lv = self.level(j)?;
        lift_to(p, &lv.space, p.directed)
    }

    /// Random rung: spin independent, number conserving, translation invariant,
    /// antisymmetric, scaled to sup norm `amplitude`, then sectorized at `j`.
    pub fn random_rung<R: Rng>(&self, j: i32, amplitude: f64, rng: &mut R) -> Result<Kernel4> {
        let f = Kernel4::random(self.base.clone(), true, 1.0, rng);
        let f = f
            .project_spin_independent()?
            .project_number_conserving()?
            .project_translation()
            .antisymmetrize();
        let sup = f.sup_norm();
        let f = if sup > 0.0 { f.scale_re(amplitude / sup) } else { f };
        self.sectorize(&f, j)
    }
}

/// `P(xi1, xi2; xi3, xi4) = A(xi1, xi3) B(xi2, xi4) + B(xi1, xi3) A(xi2, xi4)`.
pub fn bubble(space: Arc<LegSpace>, a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Result<Kernel4> {
    let d = 2 * space.len();
    if a.shape() != (d, d) || b.shape() != (d, d) {
        return Err(Error::Shape("propagator does not match the leg space".into()));
    }
    Ok(Kernel4::from_fn(space, true, |z| {
        a[(z[0], z[2])] * b[(z[1], z[3])] + b[(z[0], z[2])] * a[(z[1], z[3])]
    }))
}

/// Pair matrix of `p` read through desectorization:
/// `P~[(z1, z2), (z3, z4)] = P(u(z1), u(z2), u(z3), u(z4))` with `u` forgetting sectors.
pub fn lift_to(p: &Kernel4, target: &Arc<LegSpace>, directed: bool) -> Result<DMatrix<Complex64>> {
    let src = &p.space;
    let map_point = |q: Point| -> Result<usize> {
        let base = match q.kind {
            PointKind::Internal { x, .. } => Point {
                kind: PointKind::Position { x },
                spin: q.spin,
            },
            _ => q,
        };
        src.index_of(&base)
            .ok_or_else(|| Error::Shape("target point has no base image".into()))
    };
    let d = if directed { 2 * target.len() } else { target.len() };
    let map: Vec<usize> = (0..d)
        .map(|z| {
            if directed {
                Ok(2 * map_point(target.point(z / 2))? + z % 2)
            } else {
                map_point(target.point(z))
            }
        })
        .collect::<Result<_>>()?;
    let d2 = d * d;
    let mut m = DMatrix::from_element(d2, d2, ZERO);
    for r in 0..d2 {
        let (z1, z2) = (map[r / d], map[r % d]);
        for c in 0..d2 {
            let (z3, z4) = (map[c / d], map[c % d]);
            m[(r, c)] = p.get([z1, z2, z3, z4]);
        }
    }
    Ok(m)
}

/// `L_l = r (P r)^l` for `l = 1..=lmax` as pair matrices.
pub fn ladder_terms(r: &DMatrix<Complex64>, p: &DMatrix<Complex64>, lmax: usize) -> Vec<DMatrix<Complex64>> {
    let pr = p * r;
    let mut out = Vec::with_capacity(lmax);
    let mut cur = r.clone();
    for _ in 0..lmax {
        cur = &cur * &pr;
        out.push(cur.clone());
    }
    out
}

fn sup(m: &DMatrix<Complex64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.norm()))
}

/// `sum_l coeff(l) L_l` truncated by `cfg`; returns the sum and the sup norms of
/// the weighted terms.
pub fn ladder_series<F: Fn(usize) -> f64>(
    r: &DMatrix<Complex64>,
    p: &DMatrix<Complex64>,
    coeff: F,
    cfg: &LadderConfig,
) -> Result<(DMatrix<Complex64>, Vec<f64>)> {
    let pr = p * r;
    let mut total = DMatrix::from_element(r.nrows(), r.ncols(), ZERO);
    let mut cur = r.clone();
    let mut norms: Vec<f64> = Vec::new();
    let mut rising = 0;
    for l in 1..=cfg.lmax {
        cur = &cur * &pr;
        let term = &cur * Complex64::new(coeff(l), 0.0);
        let tn = sup(&term);
        total += &term;
        if let Some(&prev) = norms.last() {
            if prev > 0.0 && tn / prev >= 1.0 {
                rising += 1;
            } else {
                rising = 0;
            }
        }
        norms.push(tn);
        if rising >= 3 {
            return Err(Error::LadderDivergence(norms));
        }
        if tn < cfg.rel_tol * sup(&total) {
            break;
        }
    }
    Ok((total, norms))
}

/// The `l`-rung ladder `r . C . r ... r` for a rung over `space` and a lifted bubble.
pub fn ladder_l(ell: usize, r: &Kernel4, lifted: &DMatrix<Complex64>) -> Result<Kernel4> {
    if ell == 0 {
        return Ok(r.clone());
    }
    let rm = r.to_matrix();
    let terms = ladder_terms(&rm, lifted, ell);
    Kernel4::from_matrix(r.space.clone(), r.directed, &terms[ell - 1])
}

/// Per-rung-count norms `|L_l|_3` and the fitted log-linear slope.
pub fn ladder_decay_report(r: &Kernel4, lifted: &DMatrix<Complex64>, lmax: usize) -> Result<(Vec<(usize, f64)>, f64)> {
    let rm = r.to_matrix();
    let terms = ladder_terms(&rm, lifted, lmax);
    let mut rows = Vec::with_capacity(lmax);
    for (i, t) in terms.iter().enumerate() {
        let k = Kernel4::from_matrix(r.space.clone(), r.directed, t)?;
        rows.push((i + 1, k.sector_norm_p(3)));
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|(_, v)| *v > 0.0)
        .map(|(l, v)| (*l as f64, v.ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        sxy / sxx
    } else {
        f64::NEG_INFINITY
    };
    Ok((rows, slope))
}

/// Counterterms `p^(i)(k) = eps_i i k0 nu^(i)(k)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CountertermFamily {
    pub eps: BTreeMap<i32, f64>,
}

impl CountertermFamily {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `eps_i = total 2^{-(i - j0 + 1)}` for `j0 <= i <= Jmax`.
    pub fn geometric(scales: &Scales, total: f64) -> Self {
        let p = &scales.params;
        let eps = (p.j0..=p.jmax)
            .map(|i| (i, total * 0.5f64.powi(i - p.j0 + 1)))
            .collect();
        Self { eps }
    }

    pub fn eval(&self, scales: &Scales, i: i32, k: Momentum) -> Complex64 {
        match self.eps.get(&i) {
            Some(&e) if e != 0.0 => {
                let nu = scales.nu(i, k).unwrap_or(0.0);
                Complex64::new(0.0, e * k.k0 * nu)
            }
            _ => ZERO,
        }
    }

    /// `u_j = sum_{i < j} p^(i)`.
    pub fn u_j(&self, scales: &Scales, j: i32) -> MomentumFn {
        let fam = self.clone();
        let sc = scales.clone();
        Arc::new(move |k| {
            fam.eps
                .keys()
                .filter(|&&i| i < j)
                .map(|&i| fam.eval(&sc, i, k))
                .fold(ZERO, |a, b| a + b)
        })
    }

    /// `v = sum_i p^(i)`.
    pub fn total(&self, scales: &Scales) -> MomentumFn {
        self.u_j(scales, i32::MAX)
    }
}

/// Which covariance shift drives the recursion.
#[derive(Clone)]
pub enum Shift {
    /// `u_j` built from the counterterms below scale `j`.
    Iterated(CountertermFamily),
    /// One fixed shift at every scale.
    Compound(MomentumFn),
}

impl Shift {
    fn at(&self, scales: &Scales, j: i32) -> MomentumFn {
        match self {
            Shift::Iterated(f) => f.u_j(scales, j),
            Shift::Compound(v) => v.clone(),
        }
    }
}

/// Recursion output keyed by scale.
#[derive(Clone, Debug)]
pub struct LadderRun {
    /// `L^(j+1)` over the undirected scale `j` space, keyed by `j + 1`.
    pub ladders: BTreeMap<i32, Kernel4>,
    /// Effective rungs `w_j` over the directed scale `j` space.
    pub rungs: BTreeMap<i32, Kernel4>,
    /// Weighted term sup norms of each scale's rung sum.
    pub term_norms: BTreeMap<i32, Vec<f64>>,
}

impl LadderRun {
    pub fn last(&self) -> Option<&Kernel4> {
        self.ladders.values().next_back()
    }
}

fn zero_undirected(grid: &LadderGrid, j: i32) -> Result<Kernel4> {
    Ok(Kernel4::zeros(grid.level(j)?.space.clone(), false))
}

fn accumulated_rungs(grid: &LadderGrid, f: &BTreeMap<i32, Kernel4>, j: i32) -> Result<Kernel4> {
    let mut acc = Kernel4::zeros(grid.level(j)?.space.clone(), true);
    for (&i, fi) in f.range(..=j) {
        if i < grid.scales.params.j0 {
            continue;
        }
        acc = acc.add(&grid.resectorize(fi, i, j)?)?;
    }
    Ok(acc)
}

fn previous_ladder(grid: &LadderGrid, prev: Option<(i32, &Kernel4)>, j: i32) -> Result<Kernel4> {
    match prev {
        Some((from, l)) => grid.resectorize(l, from, j),
        None => zero_undirected(grid, j),
    }
}

/// One scale of the rung-sum: `2 sum_l (-1)^l 12^{l+1} L_l(w; A, B)^ph`.
pub fn ladder_step(
    grid: &LadderGrid,
    j: i32,
    w: &Kernel4,
    shift: &MomentumFn,
    cfg: &LadderConfig,
) -> Result<(Kernel4, Vec<f64>)> {
    let a = grid.covariance_matrix(ScaleInterval::Single(j), shift)?;
    let b = grid.covariance_matrix(ScaleInterval::AtLeast(j + 1), shift)?;
    let p = grid.bubble(&a, &b)?;
    let lifted = grid.lift(&p, j)?;
    let coeff = |l: usize| 2.0 * (-1f64).powi(l as i32) * 12f64.powi(l as i32 + 1);
    let (sum, norms) = ladder_series(&w.to_matrix(), &lifted, coeff, cfg)?;
    let k = Kernel4::from_matrix(w.space.clone(), true, &sum)?;
    Ok((k.reduce_ph()?, norms))
}

/// Iterated (`Shift::Iterated`) or compound (`Shift::Compound`) particle hole
/// ladder through scale `top`, returning `L^(j+1)` for `j0 <= j <= top`.
pub fn ladder_recursion(
    grid: &LadderGrid,
    f: &BTreeMap<i32, Kernel4>,
    shift: &Shift,
    top: i32,
    cfg: &LadderConfig,
) -> Result<LadderRun> {
    let j0 = grid.scales.params.j0;
    let mut run = LadderRun {
        ladders: BTreeMap::new(),
        rungs: BTreeMap::new(),
        term_norms: BTreeMap::new(),
    };
    let mut prev: Option<(i32, Kernel4)> = None;
    for j in j0..=top {
        let lj = previous_ladder(grid, prev.as_ref().map(|(a, b)| (*a, b)), j)?;
        let w = accumulated_rungs(grid, f, j)?.add(&lj.value_ph()?.antisymmetrize().scale_re(0.125))?;
        let u = shift.at(&grid.scales, j);
        let (step, norms) = ladder_step(grid, j, &w, &u, cfg)?;
        let next = lj.add(&step)?;
        run.ladders.insert(j + 1, next.clone());
        run.rungs.insert(j, w);
        run.term_norms.insert(j, norms);
        prev = Some((j, next));
    }
    Ok(run)
}

/// Closed form `L^(j+1) = L_S + sum_l (-1)^l G (C G)^l` with
/// `G = 24 F^ph + L_S + L_S^f` and `C` the particle hole reduced bubble.
pub fn d7_form(
    grid: &LadderGrid,
    f: &BTreeMap<i32, Kernel4>,
    v: &MomentumFn,
    top: i32,
    cfg: &LadderConfig,
) -> Result<BTreeMap<i32, Kernel4>> {
    let j0 = grid.scales.params.j0;
    let mut out = BTreeMap::new();
    let mut prev: Option<(i32, Kernel4)> = None;
    for j in j0..=top {
        let ls = previous_ladder(grid, prev.as_ref().map(|(a, b)| (*a, b)), j)?;
        let fph = accumulated_rungs(grid, f, j)?.reduce_ph()?;
        let g = fph.scale_re(24.0).add(&ls)?.add(&ls.flip())?;
        let a = grid.covariance_matrix(ScaleInterval::Single(j), v)?;
        let b = grid.covariance_matrix(ScaleInterval::AtLeast(j + 1), v)?;
        let cph = grid.bubble(&a, &b)?.bubble_reduce_ph()?;
        let lifted = lift_to(&cph, &grid.level(j)?.space, false)?;
        let coeff = |l: usize| (-1f64).powi(l as i32);
        let (sum, _) = ladder_series(&g.to_matrix(), &lifted, coeff, cfg)?;
        let next = ls.add(&Kernel4::from_matrix(ls.space.clone(), false, &sum)?)?;
        out.insert(j + 1, next.clone());
        prev = Some((j, next));
    }
    Ok(out)
}

/// Both sides of the telescoping identity and their difference.
#[derive(Clone, Debug)]
pub struct TelescopeReport {
    pub residual: f64,
    pub lhs_sup: f64,
    /// `sup |delta L^(j)|` per scale.
    pub delta_norms: BTreeMap<i32, f64>,
    pub iterated: LadderRun,
    pub compound: LadderRun,
    /// Modified rungs `F'^(j)`.
    pub shifted_rungs: BTreeMap<i32, Kernel4>,
}

/// `L^(top+1)(p, F) - L_v^(top+1)(F') - sum_j delta L^(j)` with `v = sum p^(i)`,
/// `F'^(j+1) = F^(j+1) + (1/8) Ant V_ph(delta L^(j))`.
pub fn delta_ladder_telescope(
    grid: &LadderGrid,
    p: &CountertermFamily,
    f: &BTreeMap<i32, Kernel4>,
    top: i32,
    cfg: &LadderConfig,
) -> Result<TelescopeReport> {
    let j0 = grid.scales.params.j0;
    let iterated = ladder_recursion(grid, f, &Shift::Iterated(p.clone()), top, cfg)?;
    let v = p.total(&grid.scales);
    let mut deltas: BTreeMap<i32, Kernel4> = BTreeMap::new();
    let mut delta_norms = BTreeMap::new();
    for j in j0..=top {
        let w = &iterated.rungs[&j];
        let (su, _) = ladder_step(grid, j, w, &p.u_j(&grid.scales, j), cfg)?;
        let (sv, _) = ladder_step(grid, j, w, &v, cfg)?;
        let d = su.sub(&sv)?;
        delta_norms.insert(j, d.sup_norm());
        deltas.insert(j, d);
    }
    let mut shifted = BTreeMap::new();
    for (&i, fi) in f {
        let mut g = fi.clone();
        if let Some(d) = deltas.get(&(i - 1)) {
            let extra = grid.resectorize(&d.value_ph()?.antisymmetrize(), i - 1, i)?.scale_re(0.125);
            g = g.add(&extra)?;
        }
        shifted.insert(i, g);
    }
    let compound = ladder_recursion(grid, &shifted, &Shift::Compound(v), top, cfg)?;
    let lhs = iterated.ladders[&(top + 1)].sub(&compound.ladders[&(top + 1)])?;
    let mut rhs = zero_undirected(grid, top)?;
    for (&i, d) in &deltas {
        rhs = rhs.add(&grid.resectorize(d, i, top)?)?;
    }
    Ok(TelescopeReport {
        residual: lhs.max_abs_diff(&rhs)?,
        lhs_sup: lhs.sup_norm(),
        delta_norms,
        iterated,
        compound,
        shifted_rungs: shifted,
    })
}

/// Random rung family `F^(i)` for `j0 <= i <= top`.
pub fn random_family<R: Rng>(grid: &LadderGrid, top: i32, amplitude: f64, rng: &mut R) -> Result<BTreeMap<i32, Kernel4>> {
    let mut out = BTreeMap::new();
    for i in grid.scales.params.j0..=top {
        out.insert(i, grid.random_rung(i, amplitude, rng)?);
    }
    Ok(out)
}

/// Transfer-momentum values of an undirected ladder: for grid index `t`,
/// `(1/N) sum_{z: x1 = 0} e^{2 pi i t x4 / N} L(z)`; columns `t0, |t|, re, im`.
pub fn ladder_values_table(grid: &LadderGrid, l: &Kernel4) -> Result<Table> {
    let n = grid.n;
    let d = l.dim();
    let mut t = Table::new(&["t0", "abs_t", "re", "im"]);
    for ti in 0..n {
        let mut acc = ZERO;
        for (i, v) in l.data.iter().enumerate() {
            let z = crate::kernel_algebra::unflatten(i, d);
            let x1 = l.space.point(z[0]).position().unwrap_or(0);
            if x1 != 0 {
                continue;
            }
            let x4 = l.space.point(z[3]).position().unwrap_or(0);
            acc += v * Complex64::from_polar(1.0, 2.0 * PI * ((ti * x4) % n) as f64 / n as f64);
        }
        acc /= n as f64;
        let k0 = grid.momenta[ti].k0 - grid.momenta[0].k0;
        let dk = [
            grid.momenta[ti].kvec[0] - grid.momenta[0].kvec[0],
            grid.momenta[ti].kvec[1] - grid.momenta[0].kvec[1],
        ];
        t.push(vec![
            k0.into(),
            (dk[0] * dk[0] + dk[1] * dk[1]).sqrt().into(),
            acc.re.into(),
            acc.im.into(),
        ])?;
    }
    Ok(t)
}

/// Scalar recursion oracle `r (c r)^l`.
pub fn scalar_ladder(r: Complex64, c: Complex64, ell: u32) -> Complex64 {
    r * (c * r).powu(ell)
}
