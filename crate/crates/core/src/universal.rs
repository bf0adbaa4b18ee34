//! Exact averages of transition probabilities over every cellular elastic.
//!
//! An `n`-cell elastic has `2^n - 1` non-trivial breakable/unbreakable
//! patterns. For a particle at contact point `i` (between cells `i` and
//! `i + 1`, 1-based) and a mask with `k` breakable cells of which `k_i` lie to
//! the right of the particle, `P(i -> 0) = k_i / k`: breaks to the right pull
//! the particle to the left end. Averaging over all masks gives exactly
//! `(n - i) / n`, the value of the fully breakable elastic.
//!
//! The fast enumeration groups masks by their breakable count and sums
//! integers, so only `n + 1` rationals are formed per average. The per-mask
//! rational path (through [`Cellular1D::collapse_exact`]) is kept for the
//! recurrence checks.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{Cellular1D, CellularMask};
use crate::error::{Error, Result};

/// Default bound on the number of enumerated cells (2^24 masks).
pub const DEFAULT_MAX_CELLS: usize = 24;

/// Hard bound imposed by 64-bit masks.
const HARD_MAX_CELLS: usize = 40;

/// Bound for the per-mask rational recurrence checks.
pub const MAX_RECURRENCE_CELLS: usize = 20;

const CHUNK: u64 = 1 << 16;

fn ratio(p: impl Into<BigInt>, q: impl Into<BigInt>) -> BigRational {
    BigRational::new(p.into(), q.into())
}

/// Formats a rational as `p/q`, always with an explicit denominator.
pub fn format_ratio(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parses `p/q` or a bare integer.
pub fn parse_ratio(s: &str) -> Result<BigRational> {
    let bad = || Error::InvalidArgument(format!("not a rational: {s:?}"));
    let (p, q) = s.split_once('/').unwrap_or((s, "1"));
    let p: BigInt = p.trim().parse().map_err(|_| bad())?;
    let q: BigInt = q.trim().parse().map_err(|_| bad())?;
    if q.is_zero() {
        return Err(bad());
    }
    Ok(BigRational::new(p, q))
}

/// Serde adapter writing rationals as `p/q` strings.
pub mod ratio_string {
    use super::*;
    use serde::{de, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_ratio(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BigRational, D::Error> {
        let s = String::deserialize(d)?;
        parse_ratio(&s).map_err(de::Error::custom)
    }
}

/// An exact probability in lowest terms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ExactProbability(BigRational);

impl ExactProbability {
    pub fn new(value: BigRational) -> Result<Self> {
        if value.is_negative() || value > BigRational::one() {
            return Err(Error::InvalidArgument(format!("{} is not a probability", format_ratio(&value))));
        }
        Ok(Self(value))
    }

    pub fn from_ratio(p: u64, q: u64) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidArgument("zero denominator".into()));
        }
        Self::new(ratio(p, q))
    }

    pub fn value(&self) -> &BigRational {
        &self.0
    }

    pub fn numerator(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denominator(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn complement(&self) -> Self {
        Self(BigRational::one() - &self.0)
    }

    pub fn to_f64(&self) -> f64 {
        use num_traits::ToPrimitive;
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl fmt::Display for ExactProbability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_ratio(&self.0))
    }
}

impl From<ExactProbability> for String {
    fn from(p: ExactProbability) -> Self {
        p.to_string()
    }
}

impl TryFrom<String> for ExactProbability {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Self::new(parse_ratio(&s)?)
    }
}

/// Which end of the elastic the particle is drawn to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Index 0, reached when a cell to the right of the particle breaks.
    LeftEnd,
    /// Index n, reached when a cell to the left breaks.
    RightEnd,
}

/// A particle on an `n`-cell elastic at an interior contact point.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticConfiguration1D {
    mask: CellularMask,
    position: usize,
}

impl ElasticConfiguration1D {
    pub fn new(mask: CellularMask, position: usize) -> Result<Self> {
        let n = mask.n_cells();
        if position == 0 || position >= n {
            return Err(Error::InvalidArgument(format!(
                "position {position} is not an interior contact point of a {n}-cell elastic"
            )));
        }
        Ok(Self { mask, position })
    }

    pub fn mask(&self) -> &CellularMask {
        &self.mask
    }

    pub fn position(&self) -> usize {
        self.position
    }
}

/// `P(i -> 0) = k_i / k` and its complement.
pub fn transition_probability_1d(config: &ElasticConfiguration1D, target: Target) -> ExactProbability {
    let elastic = Cellular1D::new(config.mask.clone());
    let [to_right, to_left] = elastic.collapse_exact(config.position).expect("position validated");
    ExactProbability(match target {
        Target::LeftEnd => to_left,
        Target::RightEnd => to_right,
    })
}

fn check_cells(n: usize, limit: usize) -> Result<()> {
    let limit = limit.min(HARD_MAX_CELLS);
    if n > limit {
        return Err(Error::TooLarge { what: "cells", value: n, limit });
    }
    Ok(())
}

/// For every breakable count `k`, the sum over masks with `k` breakable cells
/// of the number of breakable cells at bit positions `>= position`.
fn grouped_right_counts(n: usize, position: usize) -> Vec<u64> {
    let all: u64 = (1u64 << n) - 1;
    let right = all & !((1u64 << position) - 1);
    let total = 1u64 << n;
    (0..total.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut sums = vec![0u64; n + 1];
            let start = (c * CHUNK).max(1);
            let end = ((c + 1) * CHUNK).min(total);
            for mask in start..end {
                sums[mask.count_ones() as usize] += u64::from((mask & right).count_ones());
            }
            sums
        })
        .reduce(
            || vec![0u64; n + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

/// `sum_k S[k] / k` over the grouped counts, then divided by `2^n - 1`.
fn average_from_groups(n: usize, groups: &[u64]) -> BigRational {
    let sum = groups
        .iter()
        .enumerate()
        .skip(1)
        .fold(BigRational::zero(), |acc, (k, s)| acc + ratio(*s, k as u64));
    sum / ratio((1u64 << n) - 1, 1u64)
}

/// Average of `P(i -> target)` over all `2^n - 1` non-trivial masks.
pub fn universal_average_1d(n: usize, position: usize, target: Target) -> Result<ExactProbability> {
    universal_average_1d_with_limit(n, position, target, DEFAULT_MAX_CELLS)
}

pub fn universal_average_1d_with_limit(
    n: usize,
    position: usize,
    target: Target,
    max_cells: usize,
) -> Result<ExactProbability> {
    check_cells(n, max_cells)?;
    if position == 0 || position >= n {
        return Err(Error::InvalidArgument(format!("position {position} not in 1..{n}")));
    }
    let to_left = average_from_groups(n, &grouped_right_counts(n, position));
    Ok(match target {
        Target::LeftEnd => ExactProbability(to_left),
        Target::RightEnd => ExactProbability(BigRational::one() - to_left),
    })
}

/// `P(i -> 0 | b...b) = (n - i) / n`.
pub fn uniform_value(n: usize, position: usize, target: Target) -> ExactProbability {
    let left = ratio((n - position) as u64, n as u64);
    ExactProbability(match target {
        Target::LeftEnd => left,
        Target::RightEnd => BigRational::one() - left,
    })
}

/// Average over all masks of the share of breakable cells that lie in a
/// region `A` made of the last `n_c - i` cells of a linearised tessellation.
pub fn universal_average_abstract(n_cells: usize, complement_cells: usize) -> Result<ExactProbability> {
    check_cells(n_cells, DEFAULT_MAX_CELLS)?;
    if n_cells == 0 || complement_cells > n_cells {
        return Err(Error::InvalidArgument(format!(
            "complement of {complement_cells} cells in a {n_cells}-cell membrane"
        )));
    }
    Ok(ExactProbability(average_from_groups(n_cells, &grouped_right_counts(n_cells, complement_cells))))
}

/// Same average for an arbitrary (not necessarily contiguous) region given
/// as a cell indicator.
pub fn universal_average_region(region: &[bool]) -> Result<ExactProbability> {
    let n = region.len();
    check_cells(n, DEFAULT_MAX_CELLS)?;
    if n == 0 {
        return Err(Error::InvalidArgument("empty membrane".into()));
    }
    let bits: u64 = region.iter().enumerate().filter(|(_, b)| **b).map(|(j, _)| 1u64 << j).sum();
    let mut groups = vec![0u64; n + 1];
    for mask in 1..(1u64 << n) {
        groups[mask.count_ones() as usize] += u64::from((mask & bits).count_ones());
    }
    Ok(ExactProbability(average_from_groups(n, &groups)))
}

/// Binomial coefficients `C(n, 0..=n)`.
pub fn binomial_row(n: usize) -> Vec<BigInt> {
    let mut row = Vec::with_capacity(n + 1);
    let mut c = BigInt::one();
    for k in 0..=n {
        row.push(c.clone());
        c = c * BigInt::from(n - k) / BigInt::from(k + 1);
    }
    row
}

/// Both sides of a closed-form summation identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub n: usize,
    #[serde(with = "ratio_string")]
    pub lhs: BigRational,
    #[serde(with = "ratio_string")]
    pub rhs: BigRational,
    pub holds: bool,
}

impl IdentityCheck {
    fn new(n: usize, lhs: BigRational, rhs: BigRational) -> Self {
        let holds = lhs == rhs;
        Self { n, lhs, rhs, holds }
    }
}

fn pow2(e: usize) -> BigInt {
    BigInt::one() << e
}

/// `sum_{k=0}^{n} k/(k+1) C(n,k) = (2^n (n-1) + 1)/(n+1)`.
pub fn binomial_identity_a(n: usize) -> IdentityCheck {
    let lhs = binomial_row(n)
        .into_iter()
        .enumerate()
        .fold(BigRational::zero(), |acc, (k, c)| acc + ratio(c * BigInt::from(k), BigInt::from(k + 1)));
    let rhs = ratio(pow2(n) * (BigInt::from(n) - 1) + 1, BigInt::from(n + 1));
    IdentityCheck::new(n, lhs, rhs)
}

/// `sum_{k=0}^{n} 1/(k+1) C(n,k) = (2^(n+1) - 1)/(n+1)`.
pub fn binomial_identity_b(n: usize) -> IdentityCheck {
    let lhs = binomial_row(n)
        .into_iter()
        .enumerate()
        .fold(BigRational::zero(), |acc, (k, c)| acc + ratio(c, BigInt::from(k + 1)));
    let rhs = ratio(pow2(n + 1) - 1, BigInt::from(n + 1));
    IdentityCheck::new(n, lhs, rhs)
}

/// An enumerated quantity next to the value the induction argument assigns it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    #[serde(with = "ratio_string")]
    pub enumerated: BigRational,
    #[serde(with = "ratio_string")]
    pub closed_form: BigRational,
    pub equal: bool,
}

impl Comparison {
    fn new(enumerated: BigRational, closed_form: BigRational) -> Self {
        let equal = enumerated == closed_form;
        Self { enumerated, closed_form, equal }
    }
}

/// Base case `i = 1`: masks split on whether the first cell is breakable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseCaseCheck {
    pub n: usize,
    /// First cell unbreakable: every term is 1, so the sum is `2^(n-1) - 1`.
    pub first_unbreakable: Comparison,
    /// First cell breakable: `sum_{k=0}^{n-1} k/(k+1) C(n-1,k)`.
    pub first_breakable: Comparison,
    /// The same sum through the closed form `(2^(n-1)(n-2) + 1)/n`.
    pub first_breakable_closed: Comparison,
    /// Total `(2^n - 1)(n - 1)/n`.
    pub total: Comparison,
}

/// The two candidate upper limits for the `-1/k` sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexConventions {
    /// `-sum_{k=0}^{n-1} C(n-1,k)/(k+1)`
    #[serde(with = "ratio_string")]
    pub upper_n_minus_1: BigRational,
    /// `-sum_{k=0}^{n} C(n,k)/(k+1)`
    #[serde(with = "ratio_string")]
    pub upper_n: BigRational,
    /// The convention that matches enumeration: `"n-1"`, `"n"`, `"both"` or `"neither"`.
    pub matches: String,
}

/// Induction step from `i` to `i + 1`, every intermediate enumerated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceCheck {
    pub n: usize,
    pub i: usize,
    /// `sum_masks P(i -> 0)` against `(2^n - 1)(n - i)/n`.
    pub sum_at_i: Comparison,
    /// `sum_masks P(i+1 -> 0)` against `(2^n - 1)(n - i - 1)/n`.
    pub sum_at_next: Comparison,
    /// Masks with cell `i+1` unbreakable: `sum P(i+1 -> 0)` against `sum P(i -> 0)`.
    pub unbreakable_next_unchanged: Comparison,
    /// Same sum against `(2^n - 1)(n - i)/n - sum_{cell i+1 breakable} P(i -> 0)`.
    pub unbreakable_next_split: Comparison,
    /// `sum_{cell i+1 breakable} [P(i+1 -> 0) - P(i -> 0)]` against `-(2^n - 1)/n`.
    pub difference_sum: Comparison,
    /// Every mask with cell `i+1` breakable changes by exactly `-1/k`.
    pub per_mask_difference_is_minus_inverse_k: bool,
    pub index_conventions: IndexConventions,
    pub all_match: bool,
}

fn per_mask_left(mask: &CellularMask, position: usize) -> BigRational {
    let [_, left] = Cellular1D::new(mask.clone()).collapse_exact(position).expect("position in range");
    left
}

fn masks(n: usize) -> impl Iterator<Item = CellularMask> {
    (1u64..(1u64 << n)).map(move |bits| CellularMask::from_bits(bits, n).expect("non-zero mask"))
}

fn total_closed(n: usize, i: usize) -> BigRational {
    ratio((pow2(n) - 1) * BigInt::from(n - i), BigInt::from(n))
}

/// Checks the base case of the induction by per-mask enumeration.
pub fn base_case_check(n: usize) -> Result<BaseCaseCheck> {
    check_cells(n, MAX_RECURRENCE_CELLS)?;
    if n < 2 {
        return Err(Error::InvalidArgument("base case needs n >= 2".into()));
    }
    let (mut unbreakable, mut breakable) = (BigRational::zero(), BigRational::zero());
    for mask in masks(n) {
        let p = per_mask_left(&mask, 1);
        if mask.is_breakable(0) {
            breakable += p;
        } else {
            unbreakable += p;
        }
    }
    let binomial_sum = binomial_identity_a(n - 1).lhs;
    let closed = ratio(pow2(n - 1) * (BigInt::from(n) - 2) + 1, BigInt::from(n));
    Ok(BaseCaseCheck {
        n,
        first_unbreakable: Comparison::new(unbreakable.clone(), ratio(pow2(n - 1) - 1, 1)),
        first_breakable: Comparison::new(breakable.clone(), binomial_sum),
        first_breakable_closed: Comparison::new(breakable.clone(), closed),
        total: Comparison::new(unbreakable + breakable, total_closed(n, 1)),
    })
}

/// Checks the induction step `i -> i + 1` by per-mask enumeration.
pub fn recurrence_step_check(n: usize, i: usize) -> Result<RecurrenceCheck> {
    check_cells(n, MAX_RECURRENCE_CELLS)?;
    if n < 3 || i == 0 || i + 2 > n {
        return Err(Error::InvalidArgument(format!("need 1 <= i <= n - 2, got n = {n}, i = {i}")));
    }
    let next_cell = i; // 0-based index of cell i+1
    let mut at_i = BigRational::zero();
    let mut at_next = BigRational::zero();
    let mut unbreakable_at_i = BigRational::zero();
    let mut unbreakable_at_next = BigRational::zero();
    let mut breakable_at_i = BigRational::zero();
    let mut difference = BigRational::zero();
    let mut per_mask_ok = true;
    for mask in masks(n) {
        let p_i = per_mask_left(&mask, i);
        let p_next = per_mask_left(&mask, i + 1);
        at_i += &p_i;
        at_next += &p_next;
        if mask.is_breakable(next_cell) {
            let d = &p_next - &p_i;
            per_mask_ok &= d == -ratio(1u64, mask.n_breakable() as u64);
            breakable_at_i += &p_i;
            difference += d;
        } else {
            unbreakable_at_i += &p_i;
            unbreakable_at_next += p_next;
        }
    }

    let conventions = {
        let minus_sum = |m: usize| -binomial_identity_b(m).lhs;
        let upper_n_minus_1 = minus_sum(n - 1);
        let upper_n = minus_sum(n);
        let matches = match (upper_n_minus_1 == difference, upper_n == difference) {
            (true, true) => "both",
            (true, false) => "n-1",
            (false, true) => "n",
            (false, false) => "neither",
        };
        IndexConventions { upper_n_minus_1, upper_n, matches: matches.to_string() }
    };

    let sum_at_i = Comparison::new(at_i, total_closed(n, i));
    let sum_at_next = Comparison::new(at_next, total_closed(n, i + 1));
    let unbreakable_next_unchanged = Comparison::new(unbreakable_at_next.clone(), unbreakable_at_i);
    let unbreakable_next_split = Comparison::new(unbreakable_at_next, total_closed(n, i) - breakable_at_i);
    let difference_sum = Comparison::new(difference, -ratio(pow2(n) - 1, BigInt::from(n)));
    let all_match = sum_at_i.equal
        && sum_at_next.equal
        && unbreakable_next_unchanged.equal
        && unbreakable_next_split.equal
        && difference_sum.equal
        && per_mask_ok;
    Ok(RecurrenceCheck {
        n,
        i,
        sum_at_i,
        sum_at_next,
        unbreakable_next_unchanged,
        unbreakable_next_split,
        difference_sum,
        per_mask_difference_is_minus_inverse_k: per_mask_ok,
        index_conventions: conventions,
        all_match,
    })
}

/// One row of an exported average-versus-uniform table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversalRow {
    pub position: usize,
    pub average: ExactProbability,
    pub uniform: ExactProbability,
    pub equal: bool,
}

/// Averages for every interior position of an `n`-cell elastic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversalTable {
    pub cells: usize,
    pub target: Target,
    pub rows: Vec<UniversalRow>,
}

pub fn universal_table(n: usize, target: Target, max_cells: usize) -> Result<UniversalTable> {
    let rows = (1..n)
        .map(|position| {
            let average = universal_average_1d_with_limit(n, position, target, max_cells)?;
            let uniform = uniform_value(n, position, target);
            let equal = average == uniform;
            Ok(UniversalRow { position, average, uniform, equal })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UniversalTable { cells: n, target, rows })
}

/// `gcd`-reduced check that a rational has the expected small form.
pub fn is_reduced(r: &BigRational) -> bool {
    r.numer().gcd(r.denom()).is_one()
}
