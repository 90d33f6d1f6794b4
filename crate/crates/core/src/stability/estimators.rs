use serde::Serialize;

use crate::engine::{map_ensemble, PathStatus, SimConfig, Trajectory};
use crate::error::{Error, Result};
use crate::model::RegimeModel;
use crate::rng::PathRng;

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
const BOOTSTRAP_TAG: u64 = 0xB007;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExponentKind {
    /// Growth rate of `ln E|X(t)|^p`.
    Moment,
    /// Ensemble mean of the per-path rate `(1/T) ln(|X(T)|/|x0|)`.
    AlmostSure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentEstimate {
    pub kind: ExponentKind,
    /// Exponential rate; negative means decay.
    pub estimate: f64,
    /// 95% percentile bootstrap interval over paths.
    pub ci_low: f64,
    pub ci_high: f64,
    /// Time window of the fit.
    pub window: (f64, f64),
    pub n_paths: usize,
    pub n_divergent: usize,
    pub n_frozen: usize,
    pub p: Option<f64>,
    /// `k = −estimate`, the decay constant in `E|X(t)|^p ≤ K|x|^p e^{−kt}`.
    pub decay_constant: Option<f64>,
    pub resamples: usize,
}

impl ExponentEstimate {
    pub fn ci_excludes_zero(&self) -> bool {
        self.ci_high < 0.0 || self.ci_low > 0.0
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_start(x0: &[f64]) -> Result<f64> {
    let n = norm(x0);
    if n == 0.0 {
        return Err(Error::Precondition(
            "x0 must be nonzero for exponent estimates".into(),
        ));
    }
    Ok(n)
}

fn least_squares_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxy: f64 = t.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let sxx: f64 = t.iter().map(|a| (a - tm) * (a - tm)).sum();
    sxy / sxx
}

/// Percentile interval of `stat` over path resamples, widened to contain `point`.
fn bootstrap(
    n: usize,
    seed: u64,
    point: f64,
    mut stat: impl FnMut(&[usize]) -> f64,
) -> (f64, f64) {
    let mut rng = PathRng::auxiliary(seed, BOOTSTRAP_TAG);
    let mut idx = vec![0usize; n];
    let mut values: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            for v in idx.iter_mut() {
                *v = ((rng.uniform() * n as f64) as usize).min(n - 1);
            }
            stat(&idx)
        })
        .filter(|v| v.is_finite())
        .collect();
    if values.is_empty() {
        return (point, point);
    }
    values.sort_by(f64::total_cmp);
    let q = |p: f64| values[((p * (values.len() - 1) as f64).round()) as usize];
    (q(0.025).min(point), q(0.975).max(point))
}

fn window_indices(times: &[f64], horizon: f64) -> Vec<usize> {
    times
        .iter()
        .enumerate()
        .filter(|(_, &t)| t >= 0.5 * horizon - 1e-12 * horizon)
        .map(|(k, _)| k)
        .collect()
}

fn status_counts<T>(rows: &[(PathStatus, T)]) -> (usize, usize) {
    let divergent = rows.iter().filter(|r| matches!(r.0, PathStatus::Divergent { .. })).count();
    let frozen = rows.iter().filter(|r| matches!(r.0, PathStatus::Frozen { .. })).count();
    (divergent, frozen)
}

/// Least-squares slope of `ln mean |X(t)|^p` on the record grid over
/// `[T/2, T]`; divergent paths are excluded and counted.
pub fn estimate_moment_exponent(
    model: &RegimeModel,
    x0: &[f64],
    a0: usize,
    p: f64,
    cfg: &SimConfig,
) -> Result<ExponentEstimate> {
    check_start(x0)?;
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::invalid("p", "must be positive"));
    }
    let times = cfg.grid_times();
    let window = window_indices(&times, cfg.horizon);
    if window.len() < 2 {
        return Err(Error::invalid(
            "record_stride",
            "the fit window [T/2, T] needs at least two recorded times",
        ));
    }
    let rows = map_ensemble(model, x0, a0, cfg, |path: Trajectory| {
        if path.is_divergent() {
            return (path.status, Vec::new());
        }
        let powers: Vec<f64> = path.grid().map(|(_, x, _)| norm(x).powf(p)).collect();
        let kept = window.iter().map(|&k| powers[k]).collect::<Vec<f64>>();
        (path.status, kept)
    })?;
    let (n_divergent, n_frozen) = status_counts(&rows);
    let live: Vec<&Vec<f64>> = rows
        .iter()
        .filter(|r| !matches!(r.0, PathStatus::Divergent { .. }))
        .map(|r| &r.1)
        .collect();
    if live.is_empty() {
        return Err(Error::AllDivergent { n_paths: rows.len() });
    }
    let wt: Vec<f64> = window.iter().map(|&k| times[k]).collect();
    let slope_of = |sample: &mut dyn Iterator<Item = &Vec<f64>>| -> f64 {
        let mut sums = vec![0.0; wt.len()];
        let mut n = 0usize;
        for row in sample {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
            n += 1;
        }
        let logs: Vec<f64> = sums.iter().map(|s| (s / n as f64).ln()).collect();
        least_squares_slope(&wt, &logs)
    };
    let estimate = slope_of(&mut live.iter().copied());
    if !estimate.is_finite() {
        return Err(Error::Precondition(
            "the p-th moment vanished inside the fit window (all paths frozen at 0)".into(),
        ));
    }
    let (ci_low, ci_high) = bootstrap(live.len(), cfg.seed, estimate, |idx| {
        slope_of(&mut idx.iter().map(|&k| live[k]))
    });
    Ok(ExponentEstimate {
        kind: ExponentKind::Moment,
        estimate,
        ci_low,
        ci_high,
        window: (wt[0], cfg.horizon),
        n_paths: rows.len(),
        n_divergent,
        n_frozen,
        p: Some(p),
        decay_constant: Some(-estimate),
        resamples: BOOTSTRAP_RESAMPLES,
    })
}

/// Mean over paths of `(1/T) ln(|X(T)|/|x0|)`; a path frozen at time `τ`
/// contributes `(1/τ) ln(floor/|x0|)`.
pub fn estimate_as_exponent(
    model: &RegimeModel,
    x0: &[f64],
    a0: usize,
    cfg: &SimConfig,
) -> Result<ExponentEstimate> {
    let n0 = check_start(x0)?;
    if n0 < cfg.underflow_floor {
        return Err(Error::Precondition(format!(
            "|x0| = {n0:e} is below the underflow floor {:e}",
            cfg.underflow_floor
        )));
    }
    let floor = cfg.underflow_floor;
    let rows = map_ensemble(model, x0, a0, cfg, |path: Trajectory| {
        let rate = match path.status {
            PathStatus::Frozen { time } => (floor / n0).ln() / time,
            _ => (norm(path.final_state()) / n0).ln() / path.final_time(),
        };
        (path.status, rate)
    })?;
    let (n_divergent, n_frozen) = status_counts(&rows);
    let live: Vec<f64> = rows
        .iter()
        .filter(|r| !matches!(r.0, PathStatus::Divergent { .. }))
        .map(|r| r.1)
        .collect();
    if live.is_empty() {
        return Err(Error::AllDivergent { n_paths: rows.len() });
    }
    let mean = |it: &mut dyn Iterator<Item = f64>| {
        let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        s / n as f64
    };
    let estimate = mean(&mut live.iter().copied());
    let (ci_low, ci_high) = bootstrap(live.len(), cfg.seed, estimate, |idx| {
        mean(&mut idx.iter().map(|&k| live[k]))
    });
    Ok(ExponentEstimate {
        kind: ExponentKind::AlmostSure,
        estimate,
        ci_low,
        ci_high,
        window: (0.0, cfg.horizon),
        n_paths: rows.len(),
        n_divergent,
        n_frozen,
        p: None,
        decay_constant: None,
        resamples: BOOTSTRAP_RESAMPLES,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovEntry {
    pub x: Vec<f64>,
    /// One-based.
    pub regime: usize,
    pub v: f64,
}

/// `V(x, i) = ∫₀ᵀ E|X^{x,i}(u)|^p du` on a set of points, with the tightest
/// constants `k₁|x|^p ≤ V ≤ k₂|x|^p` over the nonzero points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovTable {
    pub p: f64,
    pub horizon: f64,
    pub entries: Vec<LyapunovEntry>,
    pub k1: f64,
    pub k2: f64,
}

/// Every point and regime reuses the seed of `cfg`, so values at different
/// starts share their noise.
pub fn empirical_lyapunov(
    model: &RegimeModel,
    p: f64,
    points: &[Vec<f64>],
    cfg: &SimConfig,
) -> Result<LyapunovTable> {
    if !model.has_equilibrium() {
        return Err(Error::NoEquilibrium);
    }
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::invalid("p", "must be positive"));
    }
    let times = cfg.grid_times();
    let mut entries = Vec::new();
    let (mut k1, mut k2) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in points {
        for i in 0..model.num_regimes() {
            let rows = map_ensemble(model, x, i, cfg, |path: Trajectory| {
                if path.is_divergent() {
                    return (path.status, Vec::new());
                }
                let powers: Vec<f64> = path.grid().map(|(_, s, _)| norm(s).powf(p)).collect();
                (path.status, powers)
            })?;
            let live: Vec<&Vec<f64>> = rows
                .iter()
                .filter(|r| !matches!(r.0, PathStatus::Divergent { .. }))
                .map(|r| &r.1)
                .collect();
            if live.is_empty() {
                return Err(Error::AllDivergent { n_paths: rows.len() });
            }
            let mean: Vec<f64> = (0..times.len())
                .map(|k| live.iter().map(|row| row[k]).sum::<f64>() / live.len() as f64)
                .collect();
            let v: f64 = times
                .windows(2)
                .zip(mean.windows(2))
                .map(|(t, m)| 0.5 * (t[1] - t[0]) * (m[0] + m[1]))
                .sum();
            let nx = norm(x);
            if nx > 0.0 {
                let ratio = v / nx.powf(p);
                k1 = k1.min(ratio);
                k2 = k2.max(ratio);
            }
            entries.push(LyapunovEntry {
                x: x.clone(),
                regime: i + 1,
                v,
            });
        }
    }
    Ok(LyapunovTable {
        p,
        horizon: cfg.horizon,
        entries,
        k1,
        k2,
    })
}
