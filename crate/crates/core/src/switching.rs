//! Discrete-regime transitions.
//!
//! Regimes advance by first-order embedded-chain sampling once per diffusion
//! step: from regime `i` at state `x`, a uniform draw `u ∈ [0, 1)` is scaled to
//! `z = u / dt` and looked up in consecutive intervals of lengths `q_ij(x)`
//! (targets in increasing order); `z` beyond the last interval means no switch.
//! At most one switch happens per step, and the step must satisfy
//! `dt · max_i |q_ii(x)| ≤ 0.1`.
//!
//! Pairs of regimes advance under the basic coupling of `Q(x)` and `Q(y)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{RateMatrix, RegimeModel};

/// Largest admissible `dt · rate` for one switching step.
pub const MAX_STEP_RATE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub target: usize,
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, z: f64) -> bool {
        self.start <= z && z < self.end
    }
}

/// Consecutive half-open intervals `[l_ij, r_ij)` of lengths `q_ij(x)` for one
/// source regime, starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalPartition {
    pub source: usize,
    pub intervals: Vec<Interval>,
}

impl IntervalPartition {
    pub fn total_length(&self) -> f64 {
        self.intervals.last().map_or(0.0, |iv| iv.end)
    }

    pub fn lookup(&self, z: f64) -> Option<usize> {
        self.intervals.iter().find(|iv| iv.contains(z)).map(|iv| iv.target)
    }

    pub fn interval_for(&self, target: usize) -> Option<&Interval> {
        self.intervals.iter().find(|iv| iv.target == target)
    }
}

pub fn build_partition(q: &RateMatrix, source: usize) -> IntervalPartition {
    let mut start = 0.0;
    let intervals = (0..q.dim())
        .filter(|&j| j != source)
        .map(|j| {
            let end = start + q.get(source, j);
            let iv = Interval {
                target: j,
                start,
                end,
            };
            start = end;
            iv
        })
        .collect();
    IntervalPartition { source, intervals }
}

pub(crate) fn check_step(dt: f64, max_rate: f64) -> Result<()> {
    let product = dt * max_rate;
    if product > MAX_STEP_RATE {
        return Err(Error::StepSize {
            dt,
            max_rate,
            product,
            suggested: MAX_STEP_RATE / max_rate,
        });
    }
    Ok(())
}

/// Switch lookup on one row of a row-major generator; assumes the step-size
/// check already passed.
#[inline]
pub(crate) fn switch_from_row(row: &[f64], source: usize, dt: f64, u: f64) -> usize {
    let z = u / dt;
    let mut end = 0.0;
    for (j, &rate) in row.iter().enumerate() {
        if j == source {
            continue;
        }
        end += rate;
        if z < end {
            return j;
        }
    }
    source
}

/// Maximum `|q_ii|` of a row-major generator.
#[inline]
pub(crate) fn max_exit_rate(q: &[f64], m: usize) -> f64 {
    (0..m).map(|i| -q[i * m + i]).fold(0.0, f64::max)
}

/// One switching step for a single chain at state `x`.
pub fn step_switch(model: &RegimeModel, x: &[f64], regime: usize, dt: f64, u: f64) -> Result<usize> {
    model.check_regime(regime)?;
    let q = model.rate_matrix(x)?;
    step_switch_with(&q, regime, dt, u)
}

pub fn step_switch_with(q: &RateMatrix, regime: usize, dt: f64, u: f64) -> Result<usize> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    check_step(dt, q.max_exit_rate())?;
    Ok(switch_from_row(q.row(regime), regime, dt, u))
}

/// Rates into one coupled target, split by which coordinates move.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingEntry {
    pub target: (usize, usize),
    /// `(q_kj(x) - q_lj(y))⁺`: only the first chain moves.
    pub first_only: f64,
    /// `(q_lj(y) - q_kj(x))⁺`: only the second chain moves.
    pub second_only: f64,
    /// `q_kj(x) ∧ q_lj(y)`: both move to the same regime.
    pub joint: f64,
}

impl CouplingEntry {
    pub fn rate(&self) -> f64 {
        self.first_only + self.second_only + self.joint
    }
}

/// Basic coupling of two generators from the pair `(k, l)`. Entries are sorted
/// lexicographically by target and carry only positive rates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingRates {
    pub from: (usize, usize),
    pub entries: Vec<CouplingEntry>,
}

impl CouplingRates {
    pub fn total_rate(&self) -> f64 {
        self.entries.iter().map(|e| e.rate()).sum()
    }

    pub fn rate_to(&self, target: (usize, usize)) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.target == target)
            .map(|e| e.rate())
            .sum()
    }

    /// Total rate at which the first coordinate jumps to `j`.
    pub fn first_marginal(&self, j: usize) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.target.0 == j && j != self.from.0)
            .map(|e| e.rate())
            .sum()
    }

    /// Total rate at which the second coordinate jumps to `j`.
    pub fn second_marginal(&self, j: usize) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.target.1 == j && j != self.from.1)
            .map(|e| e.rate())
            .sum()
    }
}

/// Builds the basic coupling of `Q(x)` and `Q(y)` from regimes `(k, l)`.
///
/// Only off-diagonal rates enter the three families, so every rate is
/// nonnegative and each marginal is reproduced exactly. When `k ≠ l` the move
/// of the first chain onto `l` lands on `(l, l)` and likewise for the second.
pub fn build_coupling(qx: &RateMatrix, qy: &RateMatrix, k: usize, l: usize) -> CouplingRates {
    coupling_from_slices(qx.as_slice(), qy.as_slice(), qx.dim(), k, l)
}

pub(crate) fn coupling_from_slices(
    qx: &[f64],
    qy: &[f64],
    m: usize,
    k: usize,
    l: usize,
) -> CouplingRates {
    let off = |q: &[f64], src: usize, j: usize| if src == j { 0.0 } else { q[src * m + j] };
    let mut entries: Vec<CouplingEntry> = Vec::new();
    let mut add = |target: (usize, usize), first: f64, second: f64, joint: f64| {
        if first + second + joint <= 0.0 || target == (k, l) {
            return;
        }
        match entries.iter_mut().find(|e| e.target == target) {
            Some(e) => {
                e.first_only += first;
                e.second_only += second;
                e.joint += joint;
            }
            None => entries.push(CouplingEntry {
                target,
                first_only: first,
                second_only: second,
                joint,
            }),
        }
    };
    for j in 0..m {
        let a = off(qx, k, j);
        let b = off(qy, l, j);
        add((j, l), (a - b).max(0.0), 0.0, 0.0);
        add((k, j), 0.0, (b - a).max(0.0), 0.0);
        add((j, j), 0.0, 0.0, a.min(b));
    }
    entries.sort_by_key(|e| e.target);
    CouplingRates {
        from: (k, l),
        entries,
    }
}

/// One coupled switching step: `z = u / dt` is looked up in consecutive
/// intervals of the coupled rates.
pub fn coupled_step_switch(rates: &CouplingRates, dt: f64, u: f64) -> Result<(usize, usize)> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    check_step(dt, rates.total_rate())?;
    Ok(coupled_lookup(rates, dt, u))
}

#[inline]
pub(crate) fn coupled_lookup(rates: &CouplingRates, dt: f64, u: f64) -> (usize, usize) {
    let z = u / dt;
    let mut end = 0.0;
    for e in &rates.entries {
        end += e.rate();
        if z < end {
            return e.target;
        }
    }
    rates.from
}
