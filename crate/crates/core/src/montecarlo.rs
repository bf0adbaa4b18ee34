//! Monte Carlo estimation of transition probabilities.
//!
//! Every estimator is a loop of pure measurements: draw a breaking point,
//! classify it against the state, count the outcome. Work is cut into the
//! fixed blocks of [`crate::rng`], so results are bit-identical for a given
//! seed whatever the thread count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::error::{Error, Result};
use crate::report::format_float;
use crate::rng::{blocks, substream};
use crate::simplex::{check_dims, classify, BarycentricState, RegionLabel};
use crate::stats::{wilson_interval, Z_95};

/// Largest elastic for two-level universal sampling (masks are drawn from
/// 32-bit words).
pub const MAX_UNIVERSAL_CELLS: usize = 30;

/// Per-outcome frequencies with 95% Wilson intervals.
///
/// Boundary hits are resolved to the lowest tied index and included in
/// `counts`, so `counts` always sums to `n_samples`; `boundary_hits` records
/// how many of them were ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEstimate {
    pub counts: Vec<u64>,
    pub boundary_hits: u64,
    pub n_samples: u64,
    pub probabilities: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub ci_half_widths: Vec<f64>,
}

impl TransitionEstimate {
    pub fn from_counts(counts: Vec<u64>, boundary_hits: u64) -> Self {
        let n_samples: u64 = counts.iter().sum();
        let probabilities = counts
            .iter()
            .map(|&c| if n_samples == 0 { 0.0 } else { c as f64 / n_samples as f64 })
            .collect();
        let intervals: Vec<(f64, f64)> = counts.iter().map(|&c| wilson_interval(c, n_samples, Z_95)).collect();
        Self {
            boundary_hits,
            n_samples,
            probabilities,
            ci_lower: intervals.iter().map(|i| i.0).collect(),
            ci_upper: intervals.iter().map(|i| i.1).collect(),
            ci_half_widths: intervals.iter().map(|i| (i.1 - i.0) / 2.0).collect(),
            counts,
        }
    }

    pub fn n_outcomes(&self) -> usize {
        self.counts.len()
    }

    /// Binomial standard error of each frequency.
    pub fn standard_errors(&self) -> Vec<f64> {
        self.probabilities.iter().map(|p| crate::stats::proportion_se(*p, self.n_samples)).collect()
    }

    pub const CSV_HEADER: &'static str = "outcome_index,count,p_hat,ci_lo,ci_hi";

    /// CSV rows (with header), outcomes numbered from 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for i in 0..self.n_outcomes() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i + 1,
                self.counts[i],
                format_float(self.probabilities[i]),
                format_float(self.ci_lower[i]),
                format_float(self.ci_upper[i]),
            ));
        }
        out
    }
}

#[derive(Clone)]
struct Tally {
    counts: Vec<u64>,
    boundary: u64,
}

impl Tally {
    fn new(n: usize) -> Self {
        Self { counts: vec![0; n], boundary: 0 }
    }

    fn record(&mut self, label: RegionLabel) -> usize {
        if label.is_boundary() {
            self.boundary += 1;
        }
        let i = label.resolve();
        self.counts[i] += 1;
        i
    }

    fn merge(mut self, other: Self) -> Self {
        self.counts.iter_mut().zip(other.counts).for_each(|(a, b)| *a += b);
        self.boundary += other.boundary;
        self
    }

    fn finish(self) -> TransitionEstimate {
        TransitionEstimate::from_counts(self.counts, self.boundary)
    }
}

/// Estimates `P(x -> vertex i | rho)` from `n_samples` breaking points.
pub fn estimate(x: &BarycentricState, rho: &Density, n_samples: u64, seed: u64) -> Result<TransitionEstimate> {
    check_dims(rho.n_outcomes(), x.n_outcomes())?;
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let n = x.n_outcomes();
    let work: Vec<(u64, u64)> = blocks(n_samples).collect();
    let tally = work
        .into_par_iter()
        .map(|(block, len)| {
            let mut rng = substream(seed, block);
            let mut lambda = vec![0.0; n];
            let mut tally = Tally::new(n);
            for _ in 0..len {
                rho.sample_into(&mut rng, &mut lambda);
                tally.record(classify(&lambda, x.coords()));
            }
            tally
        })
        .reduce(|| Tally::new(n), Tally::merge);
    Ok(tally.finish())
}

/// Two states measured with the same breaking points (common random numbers).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedEstimate {
    pub first: TransitionEstimate,
    pub second: TransitionEstimate,
    pub outcome: usize,
    /// `P_hat(second -> i) - P_hat(first -> i)`.
    pub difference: f64,
    /// Standard error of `difference` from the paired indicator differences.
    pub difference_se: f64,
}

pub fn estimate_paired(
    first: &BarycentricState,
    second: &BarycentricState,
    rho: &Density,
    outcome: usize,
    n_samples: u64,
    seed: u64,
) -> Result<PairedEstimate> {
    let n = first.n_outcomes();
    check_dims(n, second.n_outcomes())?;
    check_dims(rho.n_outcomes(), n)?;
    if outcome >= n || n_samples == 0 {
        return Err(Error::InvalidArgument("outcome out of range or no samples".into()));
    }
    let work: Vec<(u64, u64)> = blocks(n_samples).collect();
    let empty = || (Tally::new(n), Tally::new(n), 0u64, 0u64);
    let (a, b, gained, lost) = work
        .into_par_iter()
        .map(|(block, len)| {
            let mut rng = substream(seed, block);
            let mut lambda = vec![0.0; n];
            let (mut a, mut b, mut gained, mut lost) = empty();
            for _ in 0..len {
                rho.sample_into(&mut rng, &mut lambda);
                let in_a = a.record(classify(&lambda, first.coords())) == outcome;
                let in_b = b.record(classify(&lambda, second.coords())) == outcome;
                gained += u64::from(in_b && !in_a);
                lost += u64::from(in_a && !in_b);
            }
            (a, b, gained, lost)
        })
        .reduce(empty, |x, y| (x.0.merge(y.0), x.1.merge(y.1), x.2 + y.2, x.3 + y.3));
    let total = n_samples as f64;
    let difference = (gained as f64 - lost as f64) / total;
    let second_moment = (gained + lost) as f64 / total;
    let difference_se = ((second_moment - difference * difference).max(0.0) / total).sqrt();
    Ok(PairedEstimate { first: a.finish(), second: b.finish(), outcome, difference, difference_se })
}

/// Two-level universal measurement on a two-outcome elastic of `n_cells`
/// cells: draw a non-trivial mask uniformly, then `samples_per_mask`
/// breaking points from that cellular density.
pub fn estimate_universal(
    x: &BarycentricState,
    n_cells: usize,
    n_masks: u64,
    samples_per_mask: u64,
    seed: u64,
) -> Result<TransitionEstimate> {
    if x.n_outcomes() != 2 {
        return Err(Error::InvalidArgument("universal sampling is defined on the two-outcome elastic".into()));
    }
    if n_cells == 0 || n_cells > MAX_UNIVERSAL_CELLS {
        return Err(Error::TooLarge { what: "cells for mask sampling", value: n_cells, limit: MAX_UNIVERSAL_CELLS });
    }
    if n_masks == 0 || samples_per_mask == 0 {
        return Err(Error::InvalidArgument("need at least one mask and one sample per mask".into()));
    }
    let full = ((1u64 << n_cells) - 1) as u32;
    let work: Vec<(u64, u64)> = blocks(n_masks).collect();
    let tally = work
        .into_par_iter()
        .map(|(block, len)| {
            let mut rng = substream(seed, block);
            let mut tally = Tally::new(2);
            for _ in 0..len {
                let mask = loop {
                    let m = rng.random::<u32>() & full;
                    if m != 0 {
                        break m;
                    }
                };
                let k = mask.count_ones();
                for _ in 0..samples_per_mask {
                    let cell = nth_set_bit(mask, rng.random_range(0..k));
                    let y1 = (cell as f64 + rng.random::<f64>()) / n_cells as f64;
                    tally.record(classify(&[y1, 1.0 - y1], x.coords()));
                }
            }
            tally
        })
        .reduce(|| Tally::new(2), Tally::merge);
    Ok(tally.finish())
}

fn nth_set_bit(mut word: u32, n: u32) -> u32 {
    for _ in 0..n {
        word &= word - 1;
    }
    word.trailing_zeros()
}
