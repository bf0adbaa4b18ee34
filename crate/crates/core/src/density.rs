//! Breaking-point densities over the simplex.
//!
//! A [`Density`] can be sampled (one breaking point per draw) and, for the
//! variants where the region integrals have a closed form, integrated exactly
//! over the collapse regions `A_i` of a state.
//!
//! One-dimensional conventions (N = 2): the elastic runs along `y_1` from
//! `y_1 = 0` (vertex 2, the left end) to `y_1 = 1` (vertex 1, the right end).
//! Cell `j` of an `n`-cell elastic covers `y_1 in [j/n, (j+1)/n]`. A break to
//! the left of the particle sends it to vertex 1, a break to the right sends it
//! to vertex 2.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::simplex::{
    barycentric_from_internal, check_dims, classify, facet_height, simplex_measure, to_internal_coords,
    BarycentricState, RegionLabel,
};

/// Breakable/unbreakable assignment of the cells of a tessellation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellularMask {
    breakable: Vec<bool>,
}

impl CellularMask {
    pub fn new(breakable: Vec<bool>) -> Result<Self> {
        if !breakable.iter().any(|b| *b) {
            return Err(Error::InvalidArgument("mask needs at least one breakable cell".into()));
        }
        Ok(Self { breakable })
    }

    pub fn all_breakable(n_cells: usize) -> Result<Self> {
        Self::new(vec![true; n_cells])
    }

    /// Bit `j` of `bits` marks cell `j` breakable.
    pub fn from_bits(bits: u64, n_cells: usize) -> Result<Self> {
        if n_cells > 64 {
            return Err(Error::TooLarge { what: "cells in a bit mask", value: n_cells, limit: 64 });
        }
        Self::new((0..n_cells).map(|j| bits >> j & 1 == 1).collect())
    }

    pub fn n_cells(&self) -> usize {
        self.breakable.len()
    }

    pub fn n_breakable(&self) -> usize {
        self.breakable.iter().filter(|b| **b).count()
    }

    pub fn is_breakable(&self, cell: usize) -> bool {
        self.breakable[cell]
    }

    pub fn cells(&self) -> &[bool] {
        &self.breakable
    }
}

impl std::str::FromStr for CellularMask {
    type Err = Error;

    /// Parses strings such as `"bub"`.
    fn from_str(s: &str) -> Result<Self> {
        let cells = s
            .chars()
            .map(|c| match c {
                'b' | 'B' | '1' => Ok(true),
                'u' | 'U' | '0' => Ok(false),
                other => Err(Error::InvalidArgument(format!("unknown cell kind {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(cells)
    }
}

impl fmt::Display for CellularMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.breakable {
            f.write_str(if *b { "b" } else { "u" })?;
        }
        Ok(())
    }
}

/// A one-dimensional elastic of `n_c` equal cells, uniformly breakable on the
/// breakable ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Cellular1D {
    mask: CellularMask,
}

impl Cellular1D {
    pub fn new(mask: CellularMask) -> Self {
        Self { mask }
    }

    pub fn mask(&self) -> &CellularMask {
        &self.mask
    }

    /// Density value on a breakable cell, per unit length of the segment
    /// (which has length sqrt(2)).
    pub fn breakable_value(&self) -> f64 {
        let n = self.mask.n_cells() as f64;
        1.0 / (self.mask.n_breakable() as f64 * 2f64.sqrt() / n)
    }

    /// Probability that the break falls in `y_1 in [0, x1]`, i.e. that the
    /// particle at `x1` collapses to vertex 1.
    pub fn mass_below(&self, x1: f64) -> f64 {
        let n = self.mask.n_cells();
        let covered: f64 = (0..n)
            .filter(|&j| self.mask.is_breakable(j))
            .map(|j| overlap(j as f64 / n as f64, (j + 1) as f64 / n as f64, 0.0, x1))
            .sum();
        covered * n as f64 / self.mask.n_breakable() as f64
    }

    /// Exact collapse probabilities for a particle at the contact point
    /// `position` (`y_1 = position / n_c`), indexed by outcome: entry 0 is
    /// the right end (vertex 1), entry 1 the left end (vertex 2).
    pub fn collapse_exact(&self, position: usize) -> Result<[BigRational; 2]> {
        let n = self.mask.n_cells();
        if position > n {
            return Err(Error::InvalidArgument(format!("position {position} beyond {n} cells")));
        }
        let total = self.mask.n_breakable();
        let left = (0..position).filter(|&j| self.mask.is_breakable(j)).count();
        let ratio = |k: usize| BigRational::new(BigInt::from(k), BigInt::from(total));
        Ok([ratio(left), ratio(total - left)])
    }

    fn sample_y1<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let n = self.mask.n_cells();
        let pick = rng.random_range(0..self.mask.n_breakable());
        let cell = (0..n).filter(|&j| self.mask.is_breakable(j)).nth(pick).unwrap();
        (cell as f64 + rng.random::<f64>()) / n as f64
    }

    /// Breakable intervals in `y_1` units, merged.
    fn intervals(&self) -> Vec<(f64, f64)> {
        let n = self.mask.n_cells();
        let mut out: Vec<(f64, f64)> = Vec::new();
        for j in (0..n).filter(|&j| self.mask.is_breakable(j)) {
            let (a, b) = (j as f64 / n as f64, (j + 1) as f64 / n as f64);
            match out.last_mut() {
                Some(last) if last.1 == a => last.1 = b,
                _ => out.push((a, b)),
            }
        }
        out
    }
}

fn overlap(a: f64, b: f64, c: f64, d: f64) -> f64 {
    (b.min(d) - a.max(c)).max(0.0)
}

/// Cellular density on a regular grid over the bounding box of the simplex in
/// internal coordinates. Cells outside the simplex carry zero weight.
#[derive(Debug, Clone)]
pub struct CellularGrid {
    n: usize,
    resolution: usize,
    lower: Vec<f64>,
    width: Vec<f64>,
    mask: CellularMask,
    /// Lebesgue measure of each cell's intersection with the simplex.
    weights: Vec<f64>,
    /// Cumulative breakable weight, for sampling.
    cumulative: Vec<(usize, f64)>,
}

/// Subsamples per cell used to measure boundary cells.
pub const GRID_SUBSAMPLES: usize = 256;

impl CellularGrid {
    pub fn new(n: usize, resolution: usize, mask: CellularMask) -> Result<Self> {
        if n < 2 || resolution == 0 {
            return Err(Error::InvalidArgument("grid needs N >= 2 and resolution >= 1".into()));
        }
        let d = n - 1;
        let n_cells = resolution
            .checked_pow(d as u32)
            .filter(|c| *c <= 1 << 24)
            .ok_or(Error::TooLarge { what: "grid cells", value: usize::MAX, limit: 1 << 24 })?;
        check_dims(n_cells, mask.n_cells())?;

        let vertices: Vec<Vec<f64>> = (0..n)
            .map(|i| to_internal_coords(&BarycentricState::vertex(n, i).unwrap()))
            .collect();
        let lower: Vec<f64> = (0..d).map(|k| vertices.iter().map(|v| v[k]).fold(f64::INFINITY, f64::min)).collect();
        let upper: Vec<f64> =
            (0..d).map(|k| vertices.iter().map(|v| v[k]).fold(f64::NEG_INFINITY, f64::max)).collect();
        let width: Vec<f64> = lower.iter().zip(&upper).map(|(l, u)| (u - l) / resolution as f64).collect();

        let mut grid = Self { n, resolution, lower, width, mask, weights: Vec::new(), cumulative: Vec::new() };
        grid.weights = (0..n_cells).map(|c| grid.cell_measure(c)).collect();
        let mut acc = 0.0;
        for c in 0..n_cells {
            if grid.mask.is_breakable(c) && grid.weights[c] > 0.0 {
                acc += grid.weights[c];
                grid.cumulative.push((c, acc));
            }
        }
        if acc <= 0.0 {
            return Err(Error::InvalidArgument("no breakable cell intersects the simplex".into()));
        }
        Ok(grid)
    }

    pub fn all_breakable(n: usize, resolution: usize) -> Result<Self> {
        Self::new(n, resolution, CellularMask::all_breakable(resolution.pow((n - 1) as u32))?)
    }

    pub fn n_outcomes(&self) -> usize {
        self.n
    }

    pub fn n_cells(&self) -> usize {
        self.weights.len()
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn mask(&self) -> &CellularMask {
        &self.mask
    }

    pub fn cell_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn breakable_measure(&self) -> f64 {
        self.cumulative.last().map_or(0.0, |c| c.1)
    }

    fn cell_lower(&self, cell: usize) -> Vec<f64> {
        let mut rest = cell;
        (0..self.n - 1)
            .map(|k| {
                let idx = rest % self.resolution;
                rest /= self.resolution;
                self.lower[k] + idx as f64 * self.width[k]
            })
            .collect()
    }

    fn cell_volume(&self) -> f64 {
        self.width.iter().product()
    }

    /// Midpoint lattice with about `GRID_SUBSAMPLES` points inside a cell.
    fn lattice(&self, cell: usize) -> impl Iterator<Item = Vec<f64>> + '_ {
        let d = self.n - 1;
        let per_axis = ((GRID_SUBSAMPLES as f64).powf(1.0 / d as f64).round() as usize).max(2);
        let lo = self.cell_lower(cell);
        let total = per_axis.pow(d as u32);
        (0..total).map(move |mut idx| {
            (0..d)
                .map(|k| {
                    let i = idx % per_axis;
                    idx /= per_axis;
                    lo[k] + (i as f64 + 0.5) / per_axis as f64 * self.width[k]
                })
                .collect()
        })
    }

    fn cell_measure(&self, cell: usize) -> f64 {
        let d = self.n - 1;
        let lo = self.cell_lower(cell);
        let inside = |z: &[f64]| barycentric_from_internal(z, self.n).iter().all(|w| *w >= 0.0);
        let corners: Vec<Vec<f64>> = (0..1usize << d)
            .map(|bits| (0..d).map(|k| lo[k] + if bits >> k & 1 == 1 { self.width[k] } else { 0.0 }).collect())
            .collect();
        if corners.iter().all(|c| inside(c)) {
            return self.cell_volume();
        }
        // A facet constraint violated on the whole box puts the cell outside.
        let bary: Vec<Vec<f64>> = corners.iter().map(|c| barycentric_from_internal(c, self.n)).collect();
        if (0..self.n).any(|m| bary.iter().all(|b| b[m] < 0.0)) {
            return 0.0;
        }
        let (hit, total) = self.lattice(cell).fold((0usize, 0usize), |(h, t), z| (h + inside(&z) as usize, t + 1));
        self.cell_volume() * hit as f64 / total as f64
    }

    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let total = self.breakable_measure();
        let u = rng.random::<f64>() * total;
        let pos = self.cumulative.partition_point(|(_, acc)| *acc <= u).min(self.cumulative.len() - 1);
        let cell = self.cumulative[pos].0;
        let lo = self.cell_lower(cell);
        loop {
            let z: Vec<f64> = lo.iter().zip(&self.width).map(|(l, w)| l + w * rng.random::<f64>()).collect();
            let y = barycentric_from_internal(&z, self.n);
            if y.iter().all(|w| *w >= 0.0) {
                let s: f64 = y.iter().sum();
                for (o, v) in out.iter_mut().zip(y) {
                    *o = v / s;
                }
                return;
            }
        }
    }

    /// Region masses by fractional attribution of each cell's lattice points.
    fn region_probabilities(&self, x: &[f64]) -> Vec<f64> {
        let mut mass = vec![0.0; self.n];
        for &(cell, _) in &self.cumulative {
            let mut counts = vec![0usize; self.n];
            let mut inside = 0usize;
            for z in self.lattice(cell) {
                let y = barycentric_from_internal(&z, self.n);
                if y.iter().all(|w| *w >= 0.0) {
                    counts[classify(&y, x).resolve()] += 1;
                    inside += 1;
                }
            }
            if inside == 0 {
                continue;
            }
            for (m, c) in mass.iter_mut().zip(counts) {
                *m += self.weights[cell] * c as f64 / inside as f64;
            }
        }
        let total: f64 = mass.iter().sum();
        mass.iter().map(|m| m / total).collect()
    }
}

/// Weighted point masses.
#[derive(Debug, Clone, PartialEq)]
pub struct DiracMixture {
    atoms: Vec<BarycentricState>,
    weights: Vec<f64>,
}

impl DiracMixture {
    /// Equal weights on each atom.
    pub fn uniform(atoms: Vec<BarycentricState>) -> Result<Self> {
        let k = atoms.len();
        Self::new(atoms, vec![1.0 / k as f64; k])
    }

    pub fn new(atoms: Vec<BarycentricState>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidArgument("Dirac mixture needs at least one atom".into()));
        }
        check_dims(atoms.len(), weights.len())?;
        let n = atoms[0].n_outcomes();
        for a in &atoms {
            check_dims(n, a.n_outcomes())?;
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("Dirac weights must be non-negative and sum to 1".into()));
        }
        Ok(Self { atoms, weights })
    }

    pub fn atoms(&self) -> &[BarycentricState] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

pub type RegionPredicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// The experimenter's unbreakable zone `C`.
#[derive(Clone)]
pub enum ControlRegion {
    Empty,
    /// Everything outside a union of equal, disjoint balls around `centers`.
    BallComplement { centers: Vec<BarycentricState>, radius: f64 },
    /// The corner `{ lambda_vertex >= threshold }`.
    VertexCorner { vertex: usize, threshold: f64 },
    /// Everything outside the copy of the simplex scaled by `scale` about the
    /// centroid.
    CentroidComplement { scale: f64 },
    /// Arbitrary membership test; only usable by samplers. `epsilon` is the
    /// breakable fraction of the simplex measure, supplied by the caller.
    Custom { contains: RegionPredicate, epsilon: f64 },
}

impl fmt::Debug for ControlRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Empty => write!(f, "Empty"),
            Self::BallComplement { centers, radius } => {
                f.debug_struct("BallComplement").field("centers", centers).field("radius", radius).finish()
            }
            Self::VertexCorner { vertex, threshold } => {
                f.debug_struct("VertexCorner").field("vertex", vertex).field("threshold", threshold).finish()
            }
            Self::CentroidComplement { scale } => f.debug_struct("CentroidComplement").field("scale", scale).finish(),
            Self::Custom { epsilon, .. } => f.debug_struct("Custom").field("epsilon", epsilon).finish_non_exhaustive(),
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("epsilon = {epsilon} outside (0, 1]")))
    }
}

/// Volume of the unit ball in `d` dimensions.
fn unit_ball_volume(d: usize) -> f64 {
    // V_d = V_{d-2} * 2 pi / d
    let mut v = if d % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = if d % 2 == 0 { 2 } else { 3 };
    while k <= d {
        v *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    v
}

impl ControlRegion {
    /// Balls of equal volume `epsilon / k` of the simplex around each center.
    pub fn balls(centers: Vec<BarycentricState>, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        let k = centers.len();
        let n = centers.first().map(|c| c.n_outcomes()).ok_or(Error::InvalidArgument("no ball centers".into()))?;
        let d = n - 1;
        let volume = epsilon / k as f64 * simplex_measure(n)?;
        let radius = (volume / unit_ball_volume(d)).powf(1.0 / d as f64);
        let region = Self::BallComplement { centers, radius };
        region.validate(n)?;
        Ok(region)
    }

    /// Corner at `vertex` sized so that the breakable part has fraction `epsilon`.
    pub fn corner(n: usize, vertex: usize, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        if epsilon == 1.0 {
            return Ok(Self::Empty);
        }
        let threshold = 1.0 - (1.0 - epsilon).powf(1.0 / (n - 1) as f64);
        let region = Self::VertexCorner { vertex, threshold };
        region.validate(n)?;
        Ok(region)
    }

    /// Centred sub-simplex with breakable fraction `epsilon`.
    pub fn centroid(n: usize, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        if epsilon == 1.0 {
            return Ok(Self::Empty);
        }
        Ok(Self::CentroidComplement { scale: epsilon.powf(1.0 / (n - 1) as f64) })
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            Self::Empty => Ok(()),
            Self::BallComplement { centers, radius } => {
                let h = facet_height(n);
                for c in centers {
                    check_dims(n, c.n_outcomes())?;
                    if c.coords().iter().any(|w| w * h < *radius) {
                        return Err(Error::InvalidArgument(format!(
                            "ball of radius {radius} around {:?} leaves the simplex",
                            c.coords()
                        )));
                    }
                }
                for (a, ca) in centers.iter().enumerate() {
                    for cb in &centers[a + 1..] {
                        if ca.distance(cb)? < 2.0 * radius {
                            return Err(Error::InvalidArgument("control balls overlap".into()));
                        }
                    }
                }
                Ok(())
            }
            Self::VertexCorner { vertex, threshold } => {
                if *vertex >= n || !(0.0..=1.0).contains(threshold) {
                    return Err(Error::InvalidArgument("corner vertex or threshold out of range".into()));
                }
                Ok(())
            }
            Self::CentroidComplement { scale } => {
                if *scale > 0.0 && *scale <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!("scale {scale} outside (0, 1]")))
                }
            }
            Self::Custom { epsilon, .. } => check_epsilon(*epsilon),
        }
    }

    /// Whether `lambda` is unbreakable.
    pub fn contains(&self, lambda: &[f64]) -> bool {
        match self {
            Self::Empty => false,
            Self::BallComplement { centers, radius } => !centers.iter().any(|c| {
                c.coords().iter().zip(lambda).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= radius * radius
            }),
            Self::VertexCorner { vertex, threshold } => lambda[*vertex] >= *threshold,
            Self::CentroidComplement { scale } => {
                let n = lambda.len() as f64;
                let floor = (1.0 - scale) / n;
                lambda.iter().any(|w| *w < floor)
            }
            Self::Custom { contains, .. } => contains(lambda),
        }
    }

    /// Breakable fraction of the simplex measure.
    pub fn epsilon(&self, n: usize) -> f64 {
        let d = (n - 1) as i32;
        match self {
            Self::Empty => 1.0,
            Self::BallComplement { centers, radius } => {
                centers.len() as f64 * unit_ball_volume(n - 1) * radius.powi(d) / simplex_measure(n).unwrap()
            }
            Self::VertexCorner { threshold, .. } => 1.0 - (1.0 - threshold).powi(d),
            Self::CentroidComplement { scale } => scale.powi(d),
            Self::Custom { epsilon, .. } => *epsilon,
        }
    }

    /// Breakable set on the 1-simplex as merged `y_1` intervals.
    fn breakable_intervals_1d(&self) -> Result<Vec<(f64, f64)>> {
        let half_len = |r: f64| r / 2f64.sqrt();
        Ok(match self {
            Self::Empty => vec![(0.0, 1.0)],
            Self::BallComplement { centers, radius } => {
                let mut v: Vec<(f64, f64)> = centers
                    .iter()
                    .map(|c| (c.get(0) - half_len(*radius), c.get(0) + half_len(*radius)))
                    .collect();
                v.sort_by(|a, b| a.0.total_cmp(&b.0));
                v
            }
            Self::VertexCorner { vertex: 0, threshold } => vec![(0.0, *threshold)],
            Self::VertexCorner { threshold, .. } => vec![(1.0 - threshold, 1.0)],
            Self::CentroidComplement { scale } => vec![((1.0 - scale) / 2.0, (1.0 + scale) / 2.0)],
            Self::Custom { .. } => return Err(Error::NotAnalytic("custom control region")),
        })
    }
}

/// A density with an unbreakable control region removed and the rest
/// rescaled.
#[derive(Debug, Clone)]
pub struct Truncated {
    base: Box<Density>,
    region: ControlRegion,
    retained: f64,
}

impl Truncated {
    pub fn base(&self) -> &Density {
        &self.base
    }

    pub fn region(&self) -> &ControlRegion {
        &self.region
    }

    /// Base mass outside the control region (the renormalisation factor).
    pub fn retained_mass(&self) -> f64 {
        self.retained
    }
}

#[derive(Debug, Clone)]
pub enum Density {
    Uniform { n: usize },
    Cellular1D(Cellular1D),
    CellularGrid(CellularGrid),
    Truncated(Truncated),
    DiracMixture(DiracMixture),
}

impl Density {
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("N = {n} < 2")));
        }
        Ok(Self::Uniform { n })
    }

    pub fn n_outcomes(&self) -> usize {
        match self {
            Self::Uniform { n } => *n,
            Self::Cellular1D(_) => 2,
            Self::CellularGrid(g) => g.n_outcomes(),
            Self::Truncated(t) => t.base.n_outcomes(),
            Self::DiracMixture(d) => d.atoms[0].n_outcomes(),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Uniform { .. } => "uniform density",
            Self::Cellular1D(_) => "1-D cellular density",
            Self::CellularGrid(_) => "grid cellular density",
            Self::Truncated(_) => "truncated density",
            Self::DiracMixture(_) => "Dirac mixture",
        }
    }

    /// Draws one breaking point.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> BarycentricState {
        let mut out = vec![0.0; self.n_outcomes()];
        self.sample_into(rng, &mut out);
        BarycentricState::from_weights(&out).expect("sampler produced a simplex point")
    }

    /// Writes one breaking point into `out` (length N), without allocating
    /// for the common variants.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Self::Uniform { .. } => sample_uniform(rng, out),
            Self::Cellular1D(c) => {
                let y1 = c.sample_y1(rng);
                out[0] = y1;
                out[1] = 1.0 - y1;
            }
            Self::CellularGrid(g) => g.sample_into(rng, out),
            Self::DiracMixture(d) => {
                let u = rng.random::<f64>();
                let mut acc = 0.0;
                let mut pick = d.atoms.len() - 1;
                for (k, w) in d.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                out.copy_from_slice(d.atoms[pick].coords());
            }
            Self::Truncated(t) => t.sample_into(rng, out),
        }
    }

    /// `P(x -> vertex i)` for every outcome, by exact integration over the
    /// collapse regions.
    pub fn region_probabilities(&self, x: &BarycentricState) -> Result<Vec<f64>> {
        check_dims(self.n_outcomes(), x.n_outcomes())?;
        match self {
            Self::Uniform { .. } => Ok(x.coords().to_vec()),
            Self::Cellular1D(c) => {
                let p = c.mass_below(x.get(0));
                Ok(vec![p, 1.0 - p])
            }
            Self::CellularGrid(g) => Ok(g.region_probabilities(x.coords())),
            Self::DiracMixture(d) => {
                let mut p = vec![0.0; x.n_outcomes()];
                for (a, w) in d.atoms.iter().zip(&d.weights) {
                    p[classify(a.coords(), x.coords()).resolve()] += w;
                }
                Ok(p)
            }
            Self::Truncated(t) => t.region_probabilities(x),
        }
    }

    pub fn region_probability(&self, x: &BarycentricState, i: usize) -> Result<f64> {
        if i >= self.n_outcomes() {
            return Err(Error::InvalidArgument(format!("outcome {i} out of range")));
        }
        Ok(self.region_probabilities(x)?[i])
    }
}

fn sample_uniform<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    let mut sum = 0.0;
    for o in out.iter_mut() {
        let e: f64 = Exp1.sample(rng);
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Restricts `rho` to the complement of `region` and renormalises.
pub fn truncate(rho: &Density, region: ControlRegion) -> Result<Density> {
    let n = rho.n_outcomes();
    region.validate(n)?;
    if matches!(region, ControlRegion::Empty) {
        return Ok(rho.clone());
    }
    let retained = match rho {
        Density::Uniform { .. } => region.epsilon(n),
        Density::Cellular1D(c) => {
            let alive = intersect_intervals(&c.intervals(), &region.breakable_intervals_1d()?);
            total_length(&alive) * c.mask.n_cells() as f64 / c.mask.n_breakable() as f64
        }
        Density::DiracMixture(d) => {
            d.atoms.iter().zip(&d.weights).filter(|(a, _)| !region.contains(a.coords())).map(|(_, w)| w).sum()
        }
        other => return Err(Error::NotAnalytic(other.kind())),
    };
    if retained <= 1e-15 {
        return Err(Error::DegenerateTruncation);
    }
    Ok(Density::Truncated(Truncated { base: Box::new(rho.clone()), region, retained }))
}

fn intersect_intervals(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &(a0, a1) in a {
        for &(b0, b1) in b {
            let (lo, hi) = (a0.max(b0), a1.min(b1));
            if hi > lo {
                out.push((lo, hi));
            }
        }
    }
    out
}

fn total_length(v: &[(f64, f64)]) -> f64 {
    v.iter().map(|(a, b)| b - a).sum()
}

impl Truncated {
    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let n = out.len();
        if let Density::Uniform { .. } = *self.base {
            match &self.region {
                ControlRegion::BallComplement { centers, radius } => {
                    let c = &centers[rng.random_range(0..centers.len())];
                    let d = n - 1;
                    let centre = to_internal_coords(c);
                    let mut dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
                    for (v, z) in dir.iter_mut().zip(&centre) {
                        *v = z + *v / norm * r;
                    }
                    let y = barycentric_from_internal(&dir, n);
                    let s: f64 = y.iter().map(|w| w.max(0.0)).sum();
                    for (o, w) in out.iter_mut().zip(y) {
                        *o = w.max(0.0) / s;
                    }
                    return;
                }
                ControlRegion::VertexCorner { vertex, threshold } => {
                    // lambda_v has density (N-1)(1-u)^(N-2); invert its CDF on [0, t).
                    let d = (n - 1) as f64;
                    let cap = 1.0 - (1.0 - threshold).powf(d);
                    let u = rng.random::<f64>() * cap;
                    let lv = 1.0 - (1.0 - u).powf(1.0 / d);
                    let mut rest = vec![0.0; n - 1];
                    sample_uniform(rng, &mut rest);
                    let mut it = rest.into_iter();
                    for (j, o) in out.iter_mut().enumerate() {
                        *o = if j == *vertex { lv } else { (1.0 - lv) * it.next().unwrap() };
                    }
                    return;
                }
                ControlRegion::CentroidComplement { scale } => {
                    sample_uniform(rng, out);
                    for o in out.iter_mut() {
                        *o = (1.0 - scale) / n as f64 + scale * *o;
                    }
                    return;
                }
                _ => {}
            }
        }
        loop {
            self.base.sample_into(rng, out);
            if !self.region.contains(out) {
                return;
            }
        }
    }

    fn region_probabilities(&self, x: &BarycentricState) -> Result<Vec<f64>> {
        let n = x.n_outcomes();
        match &*self.base {
            Density::DiracMixture(d) => {
                let mut p = vec![0.0; n];
                for (a, w) in d.atoms.iter().zip(&d.weights) {
                    if !self.region.contains(a.coords()) {
                        p[classify(a.coords(), x.coords()).resolve()] += w / self.retained;
                    }
                }
                Ok(p)
            }
            Density::Cellular1D(c) => {
                let alive = intersect_intervals(&c.intervals(), &self.region.breakable_intervals_1d()?);
                let below = total_length(&intersect_intervals(&alive, &[(0.0, x.get(0))]));
                let p = below / total_length(&alive);
                Ok(vec![p, 1.0 - p])
            }
            Density::Uniform { .. } if n == 2 => {
                let alive = self.region.breakable_intervals_1d()?;
                let below = total_length(&intersect_intervals(&alive, &[(0.0, x.get(0))]));
                let p = below / total_length(&alive);
                Ok(vec![p, 1.0 - p])
            }
            Density::Uniform { .. } => match &self.region {
                ControlRegion::VertexCorner { vertex, threshold } => {
                    Ok(corner_truncated_probabilities(x.coords(), *vertex, *threshold))
                }
                ControlRegion::BallComplement { centers, radius } => {
                    balls_truncated_probabilities(x.coords(), centers, *radius)
                }
                _ => Err(Error::NotAnalytic("this control region in N >= 3")),
            },
            other => Err(Error::NotAnalytic(other.kind())),
        }
    }
}

/// Fraction of region `A_j` lying in the corner `{ lambda_k >= t }` (N >= 3).
///
/// A uniform point of `A_j` is a flat-Dirichlet mixture of its vertices, so
/// `lambda_k` is `a x_k + b` for `j != k`, where `a`, `b` are the weights on
/// `x` and on vertex `k`, and `a x_k` for `j == k`.
fn corner_fraction(n: usize, j: usize, k: usize, xk: f64, t: f64) -> f64 {
    let d = (n - 1) as i32;
    if j == k {
        return if xk > t { (1.0 - t / xk).powi(d) } else { 0.0 };
    }
    if xk <= 0.0 {
        return (1.0 - t).powi(d);
    }
    // (N-1) * integral over a in [0,1] of (1 - a - max(0, t - a x_k))_+^(N-2)
    let a0 = t / xk;
    let a1 = if xk < 1.0 { (1.0 - t) / (1.0 - xk) } else { f64::INFINITY };
    let upper = a0.min(1.0).min(a1);
    let head = ((1.0 - t).powi(d) - (1.0 - t - upper * (1.0 - xk)).max(0.0).powi(d)) / (1.0 - xk);
    let tail = if a0 < 1.0 { (1.0 - a0).powi(d) } else { 0.0 };
    head + tail
}

fn corner_truncated_probabilities(x: &[f64], vertex: usize, threshold: f64) -> Vec<f64> {
    let n = x.len();
    let epsilon = 1.0 - (1.0 - threshold).powi((n - 1) as i32);
    (0..n)
        .map(|j| {
            let cut = if x[j] > 0.0 { x[j] * corner_fraction(n, j, vertex, x[vertex], threshold) } else { 0.0 };
            (x[j] - cut) / epsilon
        })
        .collect()
}

/// Exact when every ball lies inside a single collapse region.
fn balls_truncated_probabilities(x: &[f64], centers: &[BarycentricState], radius: f64) -> Result<Vec<f64>> {
    let n = x.len();
    let mut p = vec![0.0; n];
    for c in centers {
        let region = match classify(c.coords(), x) {
            RegionLabel::Outcome(i) => i,
            RegionLabel::Boundary(_) => return Err(Error::NotAnalytic("ball centred on a tension boundary")),
        };
        // Distance to every hyperplane lambda_i x_j = lambda_j x_i bounding A_i.
        for j in (0..n).filter(|&j| j != region && x[j] > 0.0) {
            let mut normal = vec![0.0; n];
            normal[region] = x[j];
            normal[j] = -x[region];
            let mean = normal.iter().sum::<f64>() / n as f64;
            let norm = normal.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>().sqrt();
            let dist = normal.iter().zip(c.coords()).map(|(a, b)| a * b).sum::<f64>().abs() / norm;
            if dist < radius {
                return Err(Error::NotAnalytic("ball straddling a tension boundary"));
            }
        }
        p[region] += 1.0 / centers.len() as f64;
    }
    Ok(p)
}

/// A one-dimensional target density on the elastic, parametrised by `y_1`.
pub trait Density1D {
    /// Probability mass on `y_1 in [a, b]`, `0 <= a <= b <= 1`.
    fn mass(&self, a: f64, b: f64) -> Option<f64>;

    /// `P(x -> vertex 1)` for a particle at `y_1 = x1`.
    fn collapse_probability(&self, x1: f64) -> Option<f64> {
        self.mass(0.0, x1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformTarget;

impl Density1D for UniformTarget {
    fn mass(&self, a: f64, b: f64) -> Option<f64> {
        Some(b - a)
    }
}

/// `rho(z) = z + 1/sqrt(2)` on `[-1/sqrt(2), 1/sqrt(2)]`, i.e. density
/// `2 y_1` in `y_1` units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearRamp;

impl Density1D for LinearRamp {
    fn mass(&self, a: f64, b: f64) -> Option<f64> {
        Some(b * b - a * a)
    }
}

/// Uniform on `y_1 in [cut, 1]`, zero below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutUniform {
    pub cut: f64,
}

impl Density1D for CutUniform {
    fn mass(&self, a: f64, b: f64) -> Option<f64> {
        (self.cut < 1.0).then(|| overlap(a, b, self.cut, 1.0) / (1.0 - self.cut))
    }
}

/// Builds an `m * ell` cell elastic whose block masses approximate those of
/// `target` on `m` equal blocks.
///
/// Block `i` gets `round(ell * w_i / w_max)` breakable cells, where `w_i` is
/// the target mass of the block, so the heaviest block is fully breakable and
/// the block fractions `n_i / sum n` approximate `w_i`. Breakable cells are
/// spread evenly inside each block.
pub fn cellular_approximation<T: Density1D + ?Sized>(target: &T, m: usize, ell: usize) -> Result<Cellular1D> {
    if m == 0 || ell == 0 {
        return Err(Error::InvalidArgument("m and ell must be positive".into()));
    }
    let block_mass = (0..m)
        .map(|i| {
            target
                .mass(i as f64 / m as f64, (i + 1) as f64 / m as f64)
                .filter(|w| w.is_finite() && *w >= 0.0)
                .ok_or_else(|| Error::InvalidArgument(format!("block {i} integral cannot be evaluated")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let heaviest = block_mass.iter().copied().fold(0.0, f64::max);
    if heaviest <= 0.0 {
        return Err(Error::InvalidArgument("target has no mass".into()));
    }
    let mut cells = Vec::with_capacity(m * ell);
    for w in block_mass {
        let count = ((ell as f64 * w / heaviest).round() as usize).min(ell);
        cells.extend((0..ell).map(|j| (j + 1) * count / ell > j * count / ell));
    }
    Ok(Cellular1D::new(CellularMask::new(cells)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn st(c: &[f64]) -> BarycentricState {
        BarycentricState::new(c.to_vec()).unwrap()
    }

    #[test]
    fn mask_parsing() {
        let m: CellularMask = "bub".parse().unwrap();
        assert_eq!(m.n_breakable(), 2);
        assert_eq!(m.to_string(), "bub");
        assert!("uuu".parse::<CellularMask>().is_err());
        assert!("bxb".parse::<CellularMask>().is_err());
        assert_eq!(CellularMask::from_bits(0b101, 3).unwrap().to_string(), "bub");
        assert!(CellularMask::from_bits(0, 4).is_err());
    }

    #[test]
    fn uniform_region_probability_is_state() {
        let u = Density::uniform(3).unwrap();
        let x = st(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(u.region_probabilities(&x).unwrap(), x.coords());
        assert!(u.region_probability(&x, 3).is_err());
        assert!(u.region_probabilities(&st(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn two_cell_elastic() {
        // left cell breakable: the particle in the middle always goes right (vertex 1)
        let bu = Density::Cellular1D(Cellular1D::new("bu".parse().unwrap()));
        assert_eq!(bu.region_probabilities(&st(&[0.5, 0.5])).unwrap(), vec![1.0, 0.0]);
        let ub = Density::Cellular1D(Cellular1D::new("ub".parse().unwrap()));
        assert_eq!(ub.region_probabilities(&st(&[0.5, 0.5])).unwrap(), vec![0.0, 1.0]);
        let c = Cellular1D::new("bu".parse().unwrap());
        assert!((c.breakable_value() - 2.0 / 2f64.sqrt()).abs() < 1e-15);
        let mut rng = substream(1, 0);
        for _ in 0..1000 {
            assert!(bu.sample(&mut rng).get(0) <= 0.5);
        }
    }

    #[test]
    fn exact_cell_counts() {
        let c = Cellular1D::new("bubb".parse().unwrap());
        let [right, left] = c.collapse_exact(1).unwrap();
        assert_eq!(right.to_string(), "1/3");
        assert_eq!(left.to_string(), "2/3");
        assert!(c.collapse_exact(5).is_err());
        assert!((c.mass_below(0.25) - 1.0 / 3.0).abs() < 1e-15);
        assert!((c.mass_below(0.625) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dirac_is_deterministic() {
        let lam = st(&[0.1, 0.6, 0.3]);
        let d = Density::DiracMixture(DiracMixture::uniform(vec![lam.clone()]).unwrap());
        let x = st(&[0.3, 0.3, 0.4]);
        assert_eq!(d.region_probabilities(&x).unwrap(), vec![1.0, 0.0, 0.0]);
        let mut rng = substream(2, 0);
        assert_eq!(d.sample(&mut rng), lam);
    }

    #[test]
    fn empty_truncation_is_identity() {
        let u = Density::uniform(3).unwrap();
        let region = ControlRegion::corner(3, 0, 1.0).unwrap();
        let t = truncate(&u, region).unwrap();
        assert!(matches!(t, Density::Uniform { n: 3 }));
    }

    #[test]
    fn half_cut_segment() {
        // C = left half (y_1 <= 1/2), breakable on the right half only.
        let u = Density::uniform(2).unwrap();
        let t = truncate(&u, ControlRegion::corner(2, 1, 0.5).unwrap()).unwrap();
        let Density::Truncated(tr) = &t else { panic!() };
        assert!((tr.retained_mass() - 0.5).abs() < 1e-15);
        for x1 in [0.3, 0.5, 0.6, 0.75, 0.9] {
            let p = t.region_probabilities(&st(&[x1, 1.0 - x1])).unwrap();
            let expected = ((x1 - 0.5) / 0.5).max(0.0);
            assert!((p[0] - expected).abs() < 1e-12, "{x1}: {p:?}");
        }
    }

    #[test]
    fn degenerate_truncation() {
        let lam = st(&[0.2, 0.8]);
        let d = Density::DiracMixture(DiracMixture::uniform(vec![lam]).unwrap());
        let err = truncate(&d, ControlRegion::corner(2, 1, 0.5).unwrap()).unwrap_err();
        assert_eq!(err, Error::DegenerateTruncation);
    }

    #[test]
    fn corner_mass_matches_epsilon() {
        for n in 3..=6 {
            for &(x_seed, t) in &[(0.1, 0.3), (0.4, 0.2), (0.25, 0.6), (0.7, 0.5)] {
                let mut w: Vec<f64> = (0..n).map(|j| 1.0 + x_seed * j as f64).collect();
                w[0] = x_seed * 3.0;
                let x = BarycentricState::from_weights(&w).unwrap();
                for vertex in 0..n {
                    let p = corner_truncated_probabilities(x.coords(), vertex, t);
                    let total: f64 = p.iter().sum();
                    assert!((total - 1.0).abs() < 1e-12, "n={n} v={vertex} t={t}: {total}");
                    assert!(p.iter().all(|v| *v >= -1e-12));
                }
            }
        }
    }

    #[test]
    fn ball_radius_and_validation() {
        let c = st(&[0.5, 0.5]);
        let ControlRegion::BallComplement { radius, .. } = ControlRegion::balls(vec![c.clone()], 0.1).unwrap() else {
            panic!()
        };
        // 1-D ball of length 2r = 0.1 * sqrt(2)
        assert!((2.0 * radius - 0.1 * 2f64.sqrt()).abs() < 1e-15);
        assert!(ControlRegion::balls(vec![st(&[0.01, 0.99])], 0.5).is_err());
        assert!(ControlRegion::balls(vec![st(&[0.5, 0.5]), st(&[0.52, 0.48])], 0.2).is_err());
        for d in 1..6 {
            let expected = [2.0, std::f64::consts::PI, 4.0 / 3.0 * std::f64::consts::PI, 4.934_802_200_544_679, 5.263_789_013_914_324][d - 1];
            assert!((unit_ball_volume(d) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_weights_cover_simplex() {
        for n in [2usize, 3, 4] {
            let res = if n == 4 { 6 } else { 12 };
            let g = CellularGrid::all_breakable(n, res).unwrap();
            let total: f64 = g.cell_weights().iter().sum();
            let full = simplex_measure(n).unwrap();
            assert!((total / full - 1.0).abs() < 0.02, "n={n}: {total} vs {full}");
        }
    }

    #[test]
    fn cellular_approximation_of_uniform_is_all_breakable() {
        let c = cellular_approximation(&UniformTarget, 8, 4).unwrap();
        assert_eq!(c.mask().n_breakable(), 32);
        for k in 0..=8 {
            let x1 = k as f64 / 8.0;
            assert!((c.mass_below(x1) - x1).abs() < 1e-15);
        }
    }
}
