//! Sectorizations of the Fermi curve, membership in extended sectors and
//! refinement weights between consecutive scales.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_scales::{Dispersion, Momentum, ScaleParams};

/// Arc `[start, end)` of the Fermi curve at scale `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    pub j: i32,
    pub index: usize,
    pub start: f64,
    pub end: f64,
    /// Nominal length `l_j`; the last arc may be shorter.
    pub length: f64,
}

impl Sector {
    pub fn arc_length(&self) -> f64 {
        self.end - self.start
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.start + self.end)
    }
}

/// Ordered tiling of the Fermi curve by arcs of length `l_j`.
#[derive(Clone, Debug)]
pub struct Sectorization {
    pub j: i32,
    pub length: f64,
    pub perimeter: f64,
    pub sectors: Vec<Sector>,
    pub params: ScaleParams,
    pub model: Arc<dyn Dispersion>,
}

/// Periodic distance between two arc-length coordinates.
fn periodic_dist(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

/// Distance from `s` to the arc `[a, b)` on a circle of length `period`.
fn dist_to_arc(s: f64, a: f64, b: f64, period: f64) -> f64 {
    let off = (s - a).rem_euclid(period);
    if off < b - a {
        0.0
    } else {
        periodic_dist(s, a, period).min(periodic_dist(s, b, period))
    }
}

impl Sectorization {
    pub fn build(params: &ScaleParams, model: Arc<dyn Dispersion>, j: i32) -> Result<Self> {
        if j < params.j0 {
            return Err(Error::ScaleRange {
                j,
                lo: params.j0,
                hi: params.jmax,
            });
        }
        let l = params.l(j);
        let per = model.fermi_length();
        let n = (per / l).ceil() as usize;
        let sectors = (0..n)
            .map(|i| Sector {
                j,
                index: i,
                start: i as f64 * l,
                end: ((i + 1) as f64 * l).min(per),
                length: l,
            })
            .collect();
        Ok(Self {
            j,
            length: l,
            perimeter: per,
            sectors,
            params: params.clone(),
            model,
        })
    }

    pub fn len(&self) -> usize {
        self.sectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sectors.is_empty()
    }

    /// Transversal width of extended sectors: the outer shell radius at scale `j`.
    pub fn transversal_width(&self) -> f64 {
        let m = self.params.m;
        (2.0 * m).sqrt() / m.powi(self.j)
    }

    /// Sectors whose extended support contains `k`: arc-length distance below
    /// `l_j` and normal distance at most the shell radius.
    pub fn sector_of(&self, k: Momentum) -> Vec<usize> {
        let (s, d) = self.model.project(k.kvec);
        if d.abs() > self.transversal_width() {
            return Vec::new();
        }
        self.sectors
            .iter()
            .filter(|sec| dist_to_arc(s, sec.start, sec.end, self.perimeter) < self.length)
            .map(|sec| sec.index)
            .collect()
    }

    /// Whether the extended arc of sector `i` (arc fattened by `l_j`) meets the
    /// open interval `(a - w, b + w)`.
    fn extended_meets(&self, i: usize, a: f64, b: f64, w: f64) -> bool {
        let sec = &self.sectors[i];
        let lo = a - w - self.length;
        let hi = b + w + self.length;
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let c = sec.center();
        let hs = 0.5 * sec.arc_length();
        periodic_dist(mid, c, self.perimeter) < half + hs
    }

    /// Piecewise linear periodic hat of sector `i` evaluated at arc coordinate
    /// `s`; the hats sum to one everywhere.
    pub fn tent(&self, i: usize, s: f64) -> f64 {
        let n = self.sectors.len();
        if n == 1 {
            return 1.0;
        }
        let per = self.perimeter;
        let c = self.sectors[i].center();
        let next = self.sectors[(i + 1) % n].center();
        let prev = self.sectors[(i + n - 1) % n].center();
        let right = (next - c).rem_euclid(per);
        let left = (c - prev).rem_euclid(per);
        let off = (s - c).rem_euclid(per);
        if off <= right {
            return 1.0 - off / right;
        }
        let back = per - off;
        if back <= left {
            return 1.0 - back / left;
        }
        0.0
    }

    /// Hat weight of sector `i` at the projection of `k`.
    pub fn weight(&self, i: usize, k: Momentum) -> f64 {
        let (s, _) = self.model.project(k.kvec);
        self.tent(i, s)
    }

    /// Nonzero hat weights at `k`, in index order.
    pub fn weights_at(&self, k: Momentum) -> Vec<(usize, f64)> {
        let (s, _) = self.model.project(k.kvec);
        (0..self.len())
            .map(|i| (i, self.tent(i, s)))
            .filter(|(_, w)| *w > 0.0)
            .collect()
    }

    /// Sectors of scale `j+1` whose hats meet the extended arc of `s`.
    pub fn refine_weights(&self, fine: &Sectorization, s: &Sector) -> Result<RefineWeights> {
        if fine.j != self.j + 1 {
            return Err(Error::ScaleRange {
                j: fine.j,
                lo: self.j + 1,
                hi: self.j + 1,
            });
        }
        let n = fine.len();
        let members = (0..n)
            .filter(|&t| {
                let c = fine.sectors[t].center();
                let prev = fine.sectors[(t + n - 1) % n].center();
                let next = fine.sectors[(t + 1) % n].center();
                let left = (c - prev).rem_euclid(fine.perimeter);
                let right = (next - c).rem_euclid(fine.perimeter);
                let lo = s.start - self.length;
                let hi = s.end + self.length;
                let mid = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo);
                let smid = c + 0.5 * (right - left);
                let shalf = 0.5 * (left + right);
                n == 1 || periodic_dist(mid, smid, fine.perimeter) < half + shalf
            })
            .collect();
        Ok(RefineWeights {
            coarse: s.clone(),
            fine: fine.clone(),
            members,
        })
    }

    /// CSV with columns `index,arc_start,arc_end`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["index", "arc_start", "arc_end"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for s in &self.sectors {
            wr.write_record([
                s.index.to_string(),
                crate::emit::fmt_f64(s.start),
                crate::emit::fmt_f64(s.end),
            ])
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Whether the extended arc of coarse sector `i` meets fine sector `t`.
    pub fn overlaps(&self, i: usize, fine: &Sectorization, t: usize) -> bool {
        let f = &fine.sectors[t];
        self.extended_meets(i, f.start, f.end, 0.0)
    }
}

/// Partition of unity over the scale `j+1` sectors meeting a coarse sector.
#[derive(Clone, Debug)]
pub struct RefineWeights {
    pub coarse: Sector,
    pub fine: Sectorization,
    pub members: Vec<usize>,
}

impl RefineWeights {
    pub fn weight(&self, t: usize, k: Momentum) -> f64 {
        if !self.members.contains(&t) {
            return 0.0;
        }
        self.fine.weight(t, k)
    }

    pub fn total(&self, k: Momentum) -> f64 {
        self.members.iter().map(|&t| self.fine.weight(t, k)).sum()
    }
}

/// Number of sectors `ceil(|F| / l_j)`.
pub fn sector_count(params: &ScaleParams, perimeter: f64, j: i32) -> usize {
    (perimeter / params.l(j)).ceil() as usize
}
