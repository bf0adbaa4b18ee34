//! Barycentric geometry of the (N-1)-simplex spanned by N orthonormal
//! vertices.
//!
//! Every point of the simplex (the particle state `x` as well as a breaking
//! point `lambda`) is stored as N non-negative barycentric weights summing to
//! one. Because the vertices are orthonormal, the weights are also the
//! Euclidean coordinates of the point, so distances can be taken directly on
//! the weight vectors.
//!
//! The region `A_i` is the convex hull of the vertices with vertex `i`
//! replaced by `x`. A breaking point lies in `A_i` exactly when `i` minimises
//! `lambda_j / x_j` over `j` (with `lambda_j / 0 = +inf`).

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of barycentric weights.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Relative tolerance used to detect ties in the ratio rule.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// A point of the simplex in barycentric coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BarycentricState {
    coords: Vec<f64>,
}

impl BarycentricState {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::InvalidState(format!(
                "need at least 2 outcomes, got {}",
                coords.len()
            )));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::InvalidState(format!("weight {bad} is not a finite non-negative number")));
        }
        let sum: f64 = coords.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidState(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self { coords })
    }

    /// Normalises non-negative weights onto the simplex.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum.is_finite() && sum > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidState("weights must be non-negative with positive sum".into()));
        }
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    /// The centre of the simplex.
    pub fn centroid(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    /// The vertex `i` (0-based), i.e. the eigenstate of outcome `i`.
    pub fn vertex(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(Error::InvalidArgument(format!("vertex {i} out of range for N = {n}")));
        }
        let mut coords = vec![0.0; n];
        coords[i] = 1.0;
        Self::new(coords)
    }

    pub fn n_outcomes(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn get(&self, i: usize) -> f64 {
        self.coords[i]
    }

    /// Returns `self + delta`, rejecting results that leave the simplex.
    pub fn perturbed(&self, delta: &[f64]) -> Result<Self> {
        check_dims(self.n_outcomes(), delta.len())?;
        let drift: f64 = delta.iter().sum();
        if drift.abs() > SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!("perturbation sums to {drift}, not 0")));
        }
        let coords: Vec<f64> = self.coords.iter().zip(delta).map(|(a, b)| a + b).collect();
        let min = coords.iter().copied().fold(f64::INFINITY, f64::min);
        if min < 0.0 {
            return Err(Error::OutOfDomain { min_weight: min });
        }
        Self::new(coords)
    }

    /// Euclidean distance between two points of the same simplex.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        check_dims(self.n_outcomes(), other.n_outcomes())?;
        Ok(self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

impl TryFrom<Vec<f64>> for BarycentricState {
    type Error = Error;

    fn try_from(coords: Vec<f64>) -> Result<Self> {
        Self::new(coords)
    }
}

impl From<BarycentricState> for Vec<f64> {
    fn from(state: BarycentricState) -> Self {
        state.coords
    }
}

pub(crate) fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

/// Which collapse region a breaking point falls into. Indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionLabel {
    Outcome(usize),
    /// The point sits on the common boundary of two or more regions.
    Boundary(Vec<usize>),
}

impl RegionLabel {
    /// Lowest-index tie-break.
    pub fn resolve(&self) -> usize {
        match self {
            RegionLabel::Outcome(i) => *i,
            RegionLabel::Boundary(ties) => ties[0],
        }
    }

    pub fn is_boundary(&self) -> bool {
        matches!(self, RegionLabel::Boundary(_))
    }
}

/// Classifies the breaking point `lambda` for a particle in state `x`.
pub fn region_of(lambda: &BarycentricState, x: &BarycentricState) -> Result<RegionLabel> {
    check_dims(x.n_outcomes(), lambda.n_outcomes())?;
    Ok(classify(lambda.coords(), x.coords()))
}

/// Ratio-rule classification on raw weight slices. Callers guarantee equal
/// lengths and a valid state `x`.
pub(crate) fn classify(lambda: &[f64], x: &[f64]) -> RegionLabel {
    let ratio = |j: usize| {
        if x[j] > 0.0 {
            lambda[j] / x[j]
        } else {
            f64::INFINITY
        }
    };
    let mut best = 0;
    let mut best_ratio = ratio(0);
    for j in 1..x.len() {
        let r = ratio(j);
        if r < best_ratio {
            best = j;
            best_ratio = r;
        }
    }
    let cutoff = best_ratio + TIE_TOLERANCE * best_ratio.abs();
    let mut ties = None::<Vec<usize>>;
    for j in 0..x.len() {
        if j != best && ratio(j) <= cutoff {
            ties.get_or_insert_with(|| vec![best]).push(j);
        }
    }
    match ties {
        Some(mut t) => {
            t.sort_unstable();
            RegionLabel::Boundary(t)
        }
        None => RegionLabel::Outcome(best),
    }
}

/// Exact classification for rational weights. Ties are detected exactly.
pub fn region_of_exact(lambda: &[BigRational], x: &[BigRational]) -> Result<RegionLabel> {
    check_dims(x.len(), lambda.len())?;
    if x.iter().any(Signed::is_negative) || x.iter().all(Zero::is_zero) {
        return Err(Error::InvalidState("exact state needs non-negative weights, not all zero".into()));
    }
    // lambda_j / x_j < lambda_k / x_k  <=>  lambda_j * x_k < lambda_k * x_j
    let less = |j: usize, k: usize| &lambda[j] * &x[k] < &lambda[k] * &x[j];
    let equal = |j: usize, k: usize| &lambda[j] * &x[k] == &lambda[k] * &x[j];
    let finite: Vec<usize> = (0..x.len()).filter(|&j| !x[j].is_zero()).collect();
    let mut best = finite[0];
    for &j in &finite[1..] {
        if less(j, best) {
            best = j;
        }
    }
    let ties: Vec<usize> = finite.iter().copied().filter(|&j| equal(j, best)).collect();
    if ties.len() > 1 {
        Ok(RegionLabel::Boundary(ties))
    } else {
        Ok(RegionLabel::Outcome(best))
    }
}

/// Orthonormal basis of R^N whose last axis is (1, ..., 1)/sqrt(N).
///
/// Row `k` (0-based) gives the coefficients of `z_{k+1}`. The top row
/// contrasts vertex 1 against all others, every lower row contrasts the
/// highest remaining vertex against the ones below it. For N = 2 this is
/// `z_1 = (y_1 - y_2)/sqrt(2)`; for N = 3 it is `z_1 = (y_3 - y_2)/sqrt(2)`,
/// `z_2 = (2 y_1 - y_2 - y_3)/sqrt(6)`.
fn contrast_rows(n: usize) -> Vec<Vec<f64>> {
    let mut rows = vec![Vec::new(); n - 1];
    let mut active: Vec<usize> = (0..n).collect();
    for level in (0..n - 1).rev() {
        let pivot = if level == n - 2 { active.remove(0) } else { active.pop().unwrap() };
        let m = active.len() + 1;
        let norm = ((m * (m - 1)) as f64).sqrt();
        let mut row = vec![0.0; n];
        row[pivot] = (m - 1) as f64 / norm;
        for &j in &active {
            row[j] = -1.0 / norm;
        }
        rows[level] = row;
    }
    rows
}

/// The first N-1 coordinates of `p` in the orthonormal frame whose last axis
/// is normal to the simplex hyperplane.
pub fn to_internal_coords(p: &BarycentricState) -> Vec<f64> {
    contrast_rows(p.n_outcomes())
        .iter()
        .map(|row| row.iter().zip(p.coords()).map(|(a, y)| a * y).sum())
        .collect()
}

/// Inverse of [`to_internal_coords`].
pub fn from_internal_coords(z: &[f64], n: usize) -> Result<BarycentricState> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("N = {n} < 2")));
    }
    check_dims(n - 1, z.len())?;
    let weights = barycentric_from_internal(z, n);
    let min = weights.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -SUM_TOLERANCE {
        return Err(Error::OutOfDomain { min_weight: min });
    }
    let clamped: Vec<f64> = weights.iter().map(|w| w.max(0.0)).collect();
    BarycentricState::from_weights(&clamped)
}

/// Unchecked inverse transform; may return negative weights for points
/// outside the simplex.
pub(crate) fn barycentric_from_internal(z: &[f64], n: usize) -> Vec<f64> {
    let mut y = vec![1.0 / n as f64; n];
    for (zk, row) in z.iter().zip(contrast_rows(n)) {
        for (yi, a) in y.iter_mut().zip(row) {
            *yi += zk * a;
        }
    }
    y
}

/// Lebesgue measure of the simplex spanned by N orthonormal vertices:
/// `sqrt(N) / (N-1)!`.
pub fn simplex_measure(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("N = {n} < 2")));
    }
    let factorial: f64 = (1..n).map(|k| k as f64).product();
    Ok((n as f64).sqrt() / factorial)
}

/// Distance from vertex `i` to the opposite facet, `sqrt(N/(N-1))`. A point
/// with weight `w` on vertex `i` sits at `w` times this from that facet.
pub fn facet_height(n: usize) -> f64 {
    (n as f64 / (n as f64 - 1.0)).sqrt()
}
