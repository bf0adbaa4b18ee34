//! Controlled measurements: the experimenter makes a region `C` of the
//! simplex unbreakable, leaving a breakable fraction `epsilon`. Averaging over
//! all cellular membranes that vanish on `C` gives the truncated uniform
//! density, so
//!
//! `P(x -> i | eps) = (1/eps) * measure(A_i minus C) / measure(simplex)`.
//!
//! When `C` misses the zone swept by the boundary of `A_i` as the state moves
//! from `x` to `x + dx`, the change in probability is exactly `|dx_i| / eps`.
//! Shrinking `C`'s complement to small balls instead drives the measurement
//! to a mixture of deterministic outcomes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{truncate, ControlRegion, Density};
use crate::error::{Error, Result};
use crate::montecarlo::{estimate, estimate_paired};
use crate::report::format_float;
use crate::simplex::{check_dims, classify, BarycentricState, RegionLabel};

/// Family of control regions indexed by `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlGeometry {
    /// `C = { lambda_i >= t }`, the corner at the vertex of the tracked
    /// outcome. `A_i` lies in `{ lambda_i <= x_i }`, so `C` never touches it
    /// once `t >= max(x_i, x'_i)`.
    VertexCorner,
    /// `C` = everything outside a centred copy of the simplex. The swept zone
    /// of `A_i` reaches the simplex vertices, so for N >= 3 only `eps = 1`
    /// satisfies the robustness precondition.
    Centroid,
}

impl ControlGeometry {
    pub fn region(self, n: usize, outcome: usize, epsilon: f64) -> Result<ControlRegion> {
        match self {
            Self::VertexCorner => ControlRegion::corner(n, outcome, epsilon),
            Self::Centroid => ControlRegion::centroid(n, epsilon),
        }
    }

    /// Smallest `epsilon` for which the control region leaves both `A_i(x)`
    /// and `A_i(x')` alone on their symmetric difference.
    pub fn epsilon_tilde(self, x: &BarycentricState, perturbed: &BarycentricState, outcome: usize) -> f64 {
        let n = x.n_outcomes();
        match self {
            Self::VertexCorner => {
                let reach = x.get(outcome).max(perturbed.get(outcome));
                1.0 - (1.0 - reach).powi((n - 1) as i32)
            }
            Self::Centroid if n == 2 => {
                2.0 * (x.get(0) - 0.5).abs().max((perturbed.get(0) - 0.5).abs())
            }
            Self::Centroid => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    /// Monte Carlo samples per grid point; 0 disables the Monte Carlo path.
    pub n_samples: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub epsilon: f64,
    /// `|dx_i| / eps`.
    pub predicted: f64,
    /// Exact `|P(x' -> i) - P(x -> i)|`, when the region integrals are known.
    pub analytic: Option<f64>,
    /// Paired Monte Carlo estimate of the same difference.
    pub monte_carlo: Option<f64>,
    pub monte_carlo_se: Option<f64>,
    /// Outcome distribution of the unperturbed state.
    pub distribution: Vec<f64>,
    pub in_regime: bool,
}

impl RobustnessRow {
    /// Monte Carlo value if present, else the analytic one.
    pub fn measured(&self) -> Option<f64> {
        self.monte_carlo.or(self.analytic)
    }

    pub fn ratio(&self) -> Option<f64> {
        self.measured().map(|m| m / self.predicted)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSnapshot {
    pub epsilon: f64,
    pub distribution: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub state: BarycentricState,
    pub perturbed: BarycentricState,
    pub outcome: usize,
    pub delta: f64,
    pub geometry: ControlGeometry,
    /// Threshold from the control geometry; depends on the geometry chosen.
    pub epsilon_tilde: f64,
    /// Smallest grid value from which every larger grid value agrees with
    /// `|dx_i| / eps`.
    pub empirical_epsilon_tilde: Option<f64>,
    pub rows: Vec<RobustnessRow>,
    /// Outcome distributions below `epsilon_tilde`.
    pub limit_diagnostics: Vec<LimitSnapshot>,
}

impl RobustnessReport {
    pub const CSV_HEADER: &'static str = "epsilon,measured,predicted,ratio,measured_se,analytic,in_regime";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                format_float(r.epsilon),
                opt(r.measured()),
                format_float(r.predicted),
                opt(r.ratio()),
                opt(r.monte_carlo_se),
                opt(r.analytic),
                r.in_regime
            ));
        }
        out
    }
}

/// Relative agreement demanded of the analytic path.
const ANALYTIC_TOLERANCE: f64 = 1e-9;

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
        return Err(Error::InvalidArgument("epsilon grid must be non-empty and inside (0, 1]".into()));
    }
    Ok(())
}

pub fn robustness_sweep(
    x: &BarycentricState,
    delta_x: &[f64],
    outcome: usize,
    geometry: ControlGeometry,
    epsilon_grid: &[f64],
    settings: SweepSettings,
) -> Result<RobustnessReport> {
    let n = x.n_outcomes();
    if outcome >= n {
        return Err(Error::InvalidArgument(format!("outcome {outcome} out of range")));
    }
    check_grid(epsilon_grid)?;
    let perturbed = x.perturbed(delta_x)?;
    let delta = delta_x[outcome].abs();
    let epsilon_tilde = geometry.epsilon_tilde(x, &perturbed, outcome);
    let uniform = Density::uniform(n)?;

    let rows = epsilon_grid
        .par_iter()
        .enumerate()
        .map(|(k, &epsilon)| {
            let rho = truncate(&uniform, geometry.region(n, outcome, epsilon)?)?;
            let exact = match (rho.region_probabilities(x), rho.region_probabilities(&perturbed)) {
                (Ok(p), Ok(q)) => Some((p, q)),
                (Err(Error::NotAnalytic(_)), _) | (_, Err(Error::NotAnalytic(_))) => None,
                (Err(e), _) | (_, Err(e)) => return Err(e),
            };
            let paired = if settings.n_samples > 0 {
                let seed = settings.seed.wrapping_add(k as u64);
                Some(estimate_paired(x, &perturbed, &rho, outcome, settings.n_samples, seed)?)
            } else {
                None
            };
            let distribution = match (&exact, &paired) {
                (Some((p, _)), _) => p.clone(),
                (None, Some(pe)) => pe.first.probabilities.clone(),
                (None, None) => return Err(Error::NotAnalytic("sweep point without Monte Carlo samples")),
            };
            Ok(RobustnessRow {
                epsilon,
                predicted: delta / epsilon,
                analytic: exact.map(|(p, q)| (q[outcome] - p[outcome]).abs()),
                monte_carlo: paired.as_ref().map(|pe| pe.difference.abs()),
                monte_carlo_se: paired.as_ref().map(|pe| pe.difference_se),
                distribution,
                in_regime: epsilon >= epsilon_tilde,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let agrees = |r: &RobustnessRow| match (r.monte_carlo, r.monte_carlo_se, r.analytic) {
        (Some(m), Some(se), _) => (m - r.predicted).abs() <= 3.0 * se.max(f64::EPSILON),
        (_, _, Some(a)) => (a - r.predicted).abs() <= ANALYTIC_TOLERANCE * r.predicted.max(1e-300),
        _ => false,
    };
    let mut order: Vec<&RobustnessRow> = rows.iter().collect();
    order.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let mut empirical_epsilon_tilde = None;
    for r in order {
        if !agrees(r) {
            break;
        }
        empirical_epsilon_tilde = Some(r.epsilon);
    }
    let limit_diagnostics = rows
        .iter()
        .filter(|r| !r.in_regime)
        .map(|r| LimitSnapshot { epsilon: r.epsilon, distribution: r.distribution.clone() })
        .collect();

    Ok(RobustnessReport {
        state: x.clone(),
        perturbed,
        outcome,
        delta,
        geometry,
        epsilon_tilde,
        empirical_epsilon_tilde,
        rows,
        limit_diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiracLimitRow {
    pub epsilon: f64,
    pub analytic: Option<Vec<f64>>,
    pub monte_carlo: Option<Vec<f64>>,
    /// Total-variation distance of the primary distribution (analytic when
    /// available) from the limit.
    pub total_variation: f64,
}

impl DiracLimitRow {
    pub fn distribution(&self) -> &[f64] {
        self.analytic.as_deref().or(self.monte_carlo.as_deref()).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiracLimitReport {
    pub state: BarycentricState,
    pub centers: Vec<BarycentricState>,
    /// Classification of the centers, weight `1/k` each.
    pub limit: Vec<f64>,
    pub rows: Vec<DiracLimitRow>,
    /// Total variation never rises along decreasing epsilon beyond noise.
    pub non_increasing: bool,
}

impl DiracLimitReport {
    pub fn to_csv(&self) -> String {
        let n = self.limit.len();
        let mut out = String::from("epsilon,total_variation");
        for i in 1..=n {
            out.push_str(&format!(",p{i}"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{}", format_float(r.epsilon), format_float(r.total_variation)));
            for p in r.distribution() {
                out.push(',');
                out.push_str(&format_float(*p));
            }
            out.push('\n');
        }
        out
    }
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Shrinks the breakable zone to `k` balls around `centers` and follows the
/// outcome distribution as `epsilon` decreases.
pub fn dirac_limit_demo(
    x: &BarycentricState,
    centers: &[BarycentricState],
    epsilon_sequence: &[f64],
    settings: SweepSettings,
) -> Result<DiracLimitReport> {
    let n = x.n_outcomes();
    check_grid(epsilon_sequence)?;
    if centers.is_empty() {
        return Err(Error::InvalidArgument("need at least one Dirac center".into()));
    }
    for (a, c) in centers.iter().enumerate() {
        check_dims(n, c.n_outcomes())?;
        if c.coords().iter().any(|w| *w <= 0.0) {
            return Err(Error::InvalidArgument("Dirac centers must be interior points".into()));
        }
        if centers[..a].contains(c) {
            return Err(Error::InvalidArgument("Dirac centers must be distinct".into()));
        }
    }
    let largest = epsilon_sequence.iter().copied().fold(0.0, f64::max);
    ControlRegion::balls(centers.to_vec(), largest)?;

    let k = centers.len() as f64;
    let mut limit = vec![0.0; n];
    for c in centers {
        limit[classify(c.coords(), x.coords()).resolve()] += 1.0 / k;
    }
    let uniform = Density::uniform(n)?;
    let rows = epsilon_sequence
        .par_iter()
        .enumerate()
        .map(|(idx, &epsilon)| {
            let rho = truncate(&uniform, ControlRegion::balls(centers.to_vec(), epsilon)?)?;
            let analytic = match rho.region_probabilities(x) {
                Ok(p) => Some(p),
                Err(Error::NotAnalytic(_)) => None,
                Err(e) => return Err(e),
            };
            let monte_carlo = if settings.n_samples > 0 {
                let seed = settings.seed.wrapping_add(idx as u64);
                Some(estimate(x, &rho, settings.n_samples, seed)?.probabilities)
            } else {
                None
            };
            let primary = analytic
                .as_ref()
                .or(monte_carlo.as_ref())
                .ok_or(Error::NotAnalytic("Dirac-limit point without Monte Carlo samples"))?;
            let total_variation = total_variation(primary, &limit);
            Ok(DiracLimitRow { epsilon, analytic, monte_carlo, total_variation })
        })
        .collect::<Result<Vec<_>>>()?;

    let slack = if settings.n_samples > 0 { 3.0 * n as f64 * 0.5 / (settings.n_samples as f64).sqrt() } else { 0.0 };
    let mut by_eps: Vec<&DiracLimitRow> = rows.iter().collect();
    by_eps.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let non_increasing = by_eps.windows(2).all(|w| {
        let tol = if w[1].analytic.is_some() && w[0].analytic.is_some() { 1e-12 } else { slack };
        w[1].total_variation <= w[0].total_variation + tol
    });

    Ok(DiracLimitReport { state: x.clone(), centers: centers.to_vec(), limit, rows, non_increasing })
}

/// Whether a breaking point is a clean (non-boundary) member of region `i`.
pub fn lies_in_region(lambda: &BarycentricState, x: &BarycentricState, i: usize) -> bool {
    classify(lambda.coords(), x.coords()) == RegionLabel::Outcome(i)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(c: &[f64]) -> BarycentricState {
        BarycentricState::new(c.to_vec()).unwrap()
    }

    const ANALYTIC_ONLY: SweepSettings = SweepSettings { n_samples: 0, seed: 0 };

    #[test]
    fn full_membrane_difference_is_delta() {
        let x = st(&[0.3, 0.4, 0.3]);
        let r = robustness_sweep(&x, &[0.01, -0.01, 0.0], 0, ControlGeometry::VertexCorner, &[1.0], ANALYTIC_ONLY)
            .unwrap();
        assert!((r.rows[0].analytic.unwrap() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn partial_membrane_scales_difference() {
        let x = st(&[0.3, 0.4, 0.3]);
        let r = robustness_sweep(&x, &[0.01, -0.01, 0.0], 0, ControlGeometry::VertexCorner, &[0.6], ANALYTIC_ONLY)
            .unwrap();
        assert!(r.epsilon_tilde < 0.6);
        assert!((r.rows[0].analytic.unwrap() - 0.01 / 0.6).abs() < 1e-12);
    }

    #[test]
    fn zero_perturbation() {
        let x = st(&[0.2, 0.8]);
        let r = robustness_sweep(&x, &[0.0, 0.0], 0, ControlGeometry::VertexCorner, &[0.3, 0.6, 1.0], ANALYTIC_ONLY)
            .unwrap();
        assert!(r.rows.iter().all(|row| row.analytic == Some(0.0)));
    }

    #[test]
    fn sweep_errors() {
        let x = st(&[0.2, 0.8]);
        let g = ControlGeometry::VertexCorner;
        assert!(robustness_sweep(&x, &[0.9, -0.9], 0, g, &[1.0], ANALYTIC_ONLY).is_err());
        assert!(robustness_sweep(&x, &[0.01, 0.0], 0, g, &[1.0], ANALYTIC_ONLY).is_err());
        assert!(robustness_sweep(&x, &[0.01, -0.01], 0, g, &[0.0], ANALYTIC_ONLY).is_err());
        assert!(robustness_sweep(&x, &[0.01, -0.01], 2, g, &[1.0], ANALYTIC_ONLY).is_err());
    }

    #[test]
    fn centroid_geometry_threshold() {
        let x = st(&[0.6, 0.4]);
        let xp = st(&[0.61, 0.39]);
        assert!((ControlGeometry::Centroid.epsilon_tilde(&x, &xp, 0) - 0.22).abs() < 1e-12);
        let x3 = st(&[0.3, 0.3, 0.4]);
        assert_eq!(ControlGeometry::Centroid.epsilon_tilde(&x3, &x3, 0), 1.0);
    }

    #[test]
    fn dirac_single_center() {
        let x = st(&[0.3, 0.4, 0.3]);
        let c = st(&[0.45, 0.1, 0.45]);
        assert!(lies_in_region(&c, &x, 1));
        let r = dirac_limit_demo(&x, &[c], &[0.01, 0.001, 0.0001], ANALYTIC_ONLY).unwrap();
        assert_eq!(r.limit, vec![0.0, 1.0, 0.0]);
        assert!(r.rows.last().unwrap().total_variation < 1e-12);
    }

    #[test]
    fn dirac_two_centers_split() {
        let x = st(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        let cs = [st(&[0.1, 0.45, 0.45]), st(&[0.45, 0.45, 0.1])];
        let r = dirac_limit_demo(&x, &cs, &[0.01], ANALYTIC_ONLY).unwrap();
        assert_eq!(r.limit, vec![0.5, 0.0, 0.5]);
        assert_eq!(r.rows[0].analytic.as_deref(), Some(&[0.5, 0.0, 0.5][..]));
    }

    #[test]
    fn dirac_errors() {
        let x = st(&[0.5, 0.5]);
        let c = st(&[0.3, 0.7]);
        assert!(dirac_limit_demo(&x, &[c.clone(), c.clone()], &[0.1], ANALYTIC_ONLY).is_err());
        assert!(dirac_limit_demo(&x, &[st(&[0.02, 0.98])], &[0.5], ANALYTIC_ONLY).is_err());
        assert!(dirac_limit_demo(&x, &[st(&[1.0, 0.0])], &[0.1], ANALYTIC_ONLY).is_err());
        assert!(dirac_limit_demo(&x, &[], &[0.1], ANALYTIC_ONLY).is_err());
    }
}
