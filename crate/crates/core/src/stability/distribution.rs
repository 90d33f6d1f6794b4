use serde::Serialize;

use crate::engine::{coupled_ensemble, map_ensemble, PathStatus, SimConfig, Trajectory};
use crate::error::{Error, Result};
use crate::model::RegimeModel;

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `P(|X(t)| ≥ R)` on the record grid for each radius.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct P1Table {
    pub times: Vec<f64>,
    pub radii: Vec<f64>,
    /// `exceedance[k][n]` for radius `k` at time `n`.
    pub exceedance: Vec<Vec<f64>>,
    pub sup_over_time: Vec<f64>,
    pub n_paths: usize,
    pub n_divergent: usize,
}

/// Divergent paths count as exceeding every radius from their divergence on.
pub fn check_p1(
    model: &RegimeModel,
    x0: &[f64],
    a0: usize,
    cfg: &SimConfig,
    radii: &[f64],
) -> Result<P1Table> {
    if let Some(r) = radii.iter().find(|r| !(**r >= 0.0)) {
        return Err(Error::invalid("radii", format!("radius {r} must be >= 0")));
    }
    let times = cfg.grid_times();
    let n_times = times.len();
    let norms = map_ensemble(model, x0, a0, cfg, |path: Trajectory| {
        let mut v: Vec<f64> = path.grid().map(|(_, x, _)| norm(x)).collect();
        v.resize(n_times, f64::INFINITY);
        (path.status, v)
    })?;
    let n = norms.len() as f64;
    let exceedance: Vec<Vec<f64>> = radii
        .iter()
        .map(|&r| {
            (0..n_times)
                .map(|k| norms.iter().filter(|p| p.1[k] >= r).count() as f64 / n)
                .collect()
        })
        .collect();
    let sup_over_time = exceedance
        .iter()
        .map(|row| row.iter().copied().fold(0.0, f64::max))
        .collect();
    Ok(P1Table {
        times,
        radii: radii.to_vec(),
        exceedance,
        sup_over_time,
        n_paths: norms.len(),
        n_divergent: norms
            .iter()
            .filter(|p| matches!(p.0, PathStatus::Divergent { .. }))
            .count(),
    })
}

/// Coupled-pair contraction diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct P2Diagnostics {
    pub times: Vec<f64>,
    /// `E|X^x(t) − X^y(t)|²`.
    pub mean_diff_sq: Vec<f64>,
    /// Least-squares slope of `ln E|X^x − X^y|²` over `[T/2, T]`; absent when
    /// the difference vanishes there.
    pub diff_sq_rate: Option<f64>,
    /// `E|X̃^{x,i}(t) − X̃^{y,j}(t)|` with each state placed in the block of its regime.
    pub mean_augmented_diff: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// `P(|X^x(t) − X^y(t)| ≤ ε)`, indexed `[ε][t]`.
    pub prob_within: Vec<Vec<f64>>,
    /// Fraction of pairs whose chains share a regime, per time.
    pub same_regime: Vec<f64>,
    pub n_paths: usize,
    pub n_divergent: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn check_p2(
    model: &RegimeModel,
    x0: &[f64],
    y0: &[f64],
    i0: usize,
    j0: usize,
    cfg: &SimConfig,
    epsilons: &[f64],
) -> Result<P2Diagnostics> {
    let pairs = coupled_ensemble(model, x0, y0, i0, j0, cfg)?;
    let n_divergent = pairs.iter().filter(|p| p.is_divergent()).count();
    let live: Vec<_> = pairs.iter().filter(|p| !p.is_divergent()).collect();
    if live.is_empty() {
        return Err(Error::AllDivergent { n_paths: pairs.len() });
    }
    let times = cfg.grid_times();
    let n = live.len() as f64;
    let mut mean_diff_sq = vec![0.0; times.len()];
    let mut mean_augmented_diff = vec![0.0; times.len()];
    let mut same_regime = vec![0.0; times.len()];
    let mut prob_within = vec![vec![0.0; times.len()]; epsilons.len()];
    for pair in &live {
        let first: Vec<_> = pair.first.grid().collect();
        let second: Vec<_> = pair.second.grid().collect();
        for (k, ((_, x, i), (_, y, j))) in first.iter().zip(&second).enumerate() {
            let d2 = pair.diff_sq[k];
            mean_diff_sq[k] += d2;
            let aug = if i == j {
                d2.sqrt()
            } else {
                (norm(x).powi(2) + norm(y).powi(2)).sqrt()
            };
            mean_augmented_diff[k] += aug;
            if i == j {
                same_regime[k] += 1.0;
            }
            for (e, row) in epsilons.iter().zip(prob_within.iter_mut()) {
                if d2.sqrt() <= *e {
                    row[k] += 1.0;
                }
            }
        }
    }
    for v in mean_diff_sq
        .iter_mut()
        .chain(mean_augmented_diff.iter_mut())
        .chain(same_regime.iter_mut())
        .chain(prob_within.iter_mut().flatten())
    {
        *v /= n;
    }
    let window: Vec<usize> = (0..times.len())
        .filter(|&k| times[k] >= 0.5 * cfg.horizon && mean_diff_sq[k] > 0.0)
        .collect();
    let diff_sq_rate = (window.len() >= 2).then(|| {
        let t: Vec<f64> = window.iter().map(|&k| times[k]).collect();
        let y: Vec<f64> = window.iter().map(|&k| mean_diff_sq[k].ln()).collect();
        let tm = t.iter().sum::<f64>() / t.len() as f64;
        let ym = y.iter().sum::<f64>() / y.len() as f64;
        t.iter().zip(&y).map(|(a, b)| (a - tm) * (b - ym)).sum::<f64>()
            / t.iter().map(|a| (a - tm).powi(2)).sum::<f64>()
    });
    Ok(P2Diagnostics {
        times,
        mean_diff_sq,
        diff_sq_rate,
        mean_augmented_diff,
        epsilons: epsilons.to_vec(),
        prob_within,
        same_regime,
        n_paths: pairs.len(),
        n_divergent,
    })
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.len() == b.len() { 0.0 } else { 1.0 };
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Two-sample KS critical value at level `alpha` (asymptotic).
pub fn ks_threshold(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n * m) as f64).sqrt()
}

/// Samples of `(X(t), α(t))` with scalar `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSample {
    pub values: Vec<f64>,
    pub regimes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleDistance {
    /// Per-regime KS distances weighted by pooled regime frequencies.
    pub ks: f64,
    /// Total variation between the regime marginals.
    pub tv: f64,
}

pub fn sample_distance(a: &RegimeSample, b: &RegimeSample, num_regimes: usize) -> SampleDistance {
    let total = (a.values.len() + b.values.len()) as f64;
    let mut ks = 0.0;
    let mut tv = 0.0;
    for i in 0..num_regimes {
        let pick = |s: &RegimeSample| -> Vec<f64> {
            s.values
                .iter()
                .zip(&s.regimes)
                .filter(|(_, &r)| r == i)
                .map(|(v, _)| *v)
                .collect()
        };
        let (va, vb) = (pick(a), pick(b));
        if va.is_empty() && vb.is_empty() {
            continue;
        }
        ks += (va.len() + vb.len()) as f64 / total * ks_distance(&va, &vb);
        tv += 0.5
            * (va.len() as f64 / a.values.len().max(1) as f64
                - vb.len() as f64 / b.values.len().max(1) as f64)
                .abs();
    }
    SampleDistance { ks, tv }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// One start, two checkpoints.
    CrossTime,
    /// Two starts, one checkpoint.
    CrossStart,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceEntry {
    pub comparison: Comparison,
    /// Indices into the start list.
    pub start_a: usize,
    pub start_b: usize,
    pub t_a: f64,
    pub t_b: f64,
    pub ks: f64,
    pub tv: f64,
    /// KS critical value at the 1% level for these sample sizes.
    pub ks_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceTable {
    pub checkpoints: Vec<f64>,
    /// `(x, regime)` with one-based regimes.
    pub starts: Vec<(f64, usize)>,
    pub entries: Vec<DistanceEntry>,
    /// Per start: cross-time KS distances strictly decrease along the checkpoints.
    pub cross_time_decreasing: Vec<bool>,
    pub n_divergent: Vec<usize>,
}

pub const KS_LEVEL: f64 = 0.01;

fn grid_row(times: &[f64], t: f64, tol: f64) -> Result<usize> {
    times
        .iter()
        .position(|&g| (g - t).abs() <= tol)
        .ok_or_else(|| Error::invalid("checkpoints", format!("t = {t} is not on the record grid")))
}

/// Samples `(X(t), α(t))` at each checkpoint from every start (all starts
/// share the seed of `cfg`) and compares them by regime-stratified KS and
/// regime total variation.
pub fn distribution_convergence(
    model: &RegimeModel,
    starts: &[(f64, usize)],
    cfg: &SimConfig,
    checkpoints: &[f64],
) -> Result<DistanceTable> {
    if model.dim_x() != 1 {
        return Err(Error::Unsupported(
            "distribution distances are implemented for scalar states only".into(),
        ));
    }
    if starts.is_empty() || checkpoints.is_empty() {
        return Err(Error::invalid("starts", "need at least one start and one checkpoint"));
    }
    let times = cfg.grid_times();
    let tol = 1e-9 * cfg.horizon;
    let rows: Vec<usize> = checkpoints
        .iter()
        .map(|&t| grid_row(&times, t, tol))
        .collect::<Result<_>>()?;

    let mut samples: Vec<Vec<RegimeSample>> = Vec::new();
    let mut n_divergent = Vec::new();
    for &(x0, a0) in starts {
        let paths = map_ensemble(model, &[x0], a0, cfg, |path: Trajectory| {
            if path.is_divergent() {
                return None;
            }
            let grid: Vec<(f64, usize)> = path.grid().map(|(_, x, i)| (x[0], i)).collect();
            Some(rows.iter().map(|&k| grid[k]).collect::<Vec<_>>())
        })?;
        n_divergent.push(paths.iter().filter(|p| p.is_none()).count());
        let live: Vec<&Vec<(f64, usize)>> = paths.iter().flatten().collect();
        samples.push(
            (0..rows.len())
                .map(|c| RegimeSample {
                    values: live.iter().map(|p| p[c].0).collect(),
                    regimes: live.iter().map(|p| p[c].1).collect(),
                })
                .collect(),
        );
    }

    let m = model.num_regimes();
    let entry = |comparison, sa: usize, sb: usize, ca: usize, cb: usize| {
        let (a, b) = (&samples[sa][ca], &samples[sb][cb]);
        let d = sample_distance(a, b, m);
        DistanceEntry {
            comparison,
            start_a: sa,
            start_b: sb,
            t_a: checkpoints[ca],
            t_b: checkpoints[cb],
            ks: d.ks,
            tv: d.tv,
            ks_threshold: ks_threshold(a.values.len().max(1), b.values.len().max(1), KS_LEVEL),
        }
    };
    let mut entries = Vec::new();
    let mut cross_time_decreasing = Vec::new();
    for s in 0..starts.len() {
        let row: Vec<DistanceEntry> = (1..checkpoints.len())
            .map(|c| entry(Comparison::CrossTime, s, s, c - 1, c))
            .collect();
        cross_time_decreasing.push(row.windows(2).all(|w| w[1].ks < w[0].ks));
        entries.extend(row);
    }
    for a in 0..starts.len() {
        for b in a + 1..starts.len() {
            for c in 0..checkpoints.len() {
                entries.push(entry(Comparison::CrossStart, a, b, c, c));
            }
        }
    }
    Ok(DistanceTable {
        checkpoints: checkpoints.to_vec(),
        starts: starts.iter().map(|&(x, i)| (x, i + 1)).collect(),
        entries,
        cross_time_decreasing,
        n_divergent,
    })
}
