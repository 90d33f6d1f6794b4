//! Path integration for regime-switching jump diffusions.
//!
//! Between jump times the state advances by Euler–Maruyama on a fixed grid of
//! width `dt`; jump times are exact exponential arrivals inserted into the
//! grid, and the regime switches at most once per grid step. Every random
//! number of path `k` comes from the stream keyed by `(seed, k)`, so ensembles
//! are bit-identical for any worker count.

mod integrator;
mod trajectory;

use serde::{Deserialize, Serialize};

pub use trajectory::{fmt_f64, write_ensemble_csv, Event, EventKind, PathStatus, Trajectory};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::model::RegimeModel;
use integrator::{run, Start};

pub const DEFAULT_UNDERFLOW_FLOOR: f64 = 1e-150;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    /// Horizon `T`.
    pub horizon: f64,
    pub seed: u64,
    pub n_paths: usize,
    /// Record every k-th grid step (events are always recorded).
    pub record_stride: usize,
    pub underflow_floor: f64,
    /// Scheduling only; never affects results.
    #[serde(skip)]
    pub execution: Execution,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self {
            dt,
            horizon,
            seed: 0,
            n_paths: 1,
            record_stride: 1,
            underflow_floor: DEFAULT_UNDERFLOW_FLOOR,
            execution: Execution::Auto,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn paths(mut self, n_paths: usize) -> Self {
        self.n_paths = n_paths;
        self
    }

    pub fn stride(mut self, record_stride: usize) -> Self {
        self.record_stride = record_stride;
        self
    }

    pub fn execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", "must be positive and finite"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("T", "must be positive and finite"));
        }
        if self.dt > self.horizon {
            return Err(Error::invalid("dt", "must not exceed the horizon T"));
        }
        if self.n_paths == 0 {
            return Err(Error::invalid("paths", "must be >= 1"));
        }
        if self.record_stride == 0 {
            return Err(Error::invalid("record_stride", "must be >= 1"));
        }
        if !(self.underflow_floor > 0.0) {
            return Err(Error::invalid("underflow_floor", "must be positive"));
        }
        Ok(())
    }

    /// Number of grid steps; the last one is shortened to land on `T`.
    pub fn n_steps(&self) -> usize {
        ((self.horizon / self.dt) - 1e-9).ceil().max(1.0) as usize
    }

    #[inline]
    pub fn step_end(&self, step: usize) -> f64 {
        if step + 1 >= self.n_steps() {
            self.horizon
        } else {
            (step + 1) as f64 * self.dt
        }
    }

    /// Recorded grid times, starting at 0 and always ending at `T`.
    pub fn grid_times(&self) -> Vec<f64> {
        let n = self.n_steps();
        std::iter::once(0.0)
            .chain(
                (0..n)
                    .filter(|&k| (k + 1) % self.record_stride == 0 || k + 1 == n)
                    .map(|k| self.step_end(k)),
            )
            .collect()
    }
}

/// Paths of one ensemble in path-index order.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub paths: Vec<Trajectory>,
}

impl Ensemble {
    pub fn divergent_count(&self) -> usize {
        self.paths.iter().filter(|p| p.is_divergent()).count()
    }

    pub fn divergent_fraction(&self) -> f64 {
        self.divergent_count() as f64 / self.paths.len().max(1) as f64
    }
}

/// Two paths driven by the same Brownian increments, jump times and marks,
/// with regimes moving under the basic coupling.
#[derive(Debug, Clone)]
pub struct CoupledPath {
    pub first: Trajectory,
    pub second: Trajectory,
    pub grid_times: Vec<f64>,
    /// `|X^x(t) - X^y(t)|²` on the grid.
    pub diff_sq: Vec<f64>,
    /// Regime pairs on the grid.
    pub regime_pairs: Vec<(usize, usize)>,
}

impl CoupledPath {
    pub fn is_divergent(&self) -> bool {
        self.first.is_divergent() || self.second.is_divergent()
    }
}

/// Pathwise derivative of a scalar path with respect to its initial state.
#[derive(Debug, Clone)]
pub struct SensitivityPair {
    pub grid_times: Vec<f64>,
    pub base: Trajectory,
    /// Present for finite-difference runs.
    pub perturbed: Option<Trajectory>,
    pub delta: Option<f64>,
    /// `Z^Δ(t) = (X^{x+Δ}(t) - X^x(t)) / Δ` on the grid.
    pub finite_difference: Option<Vec<f64>>,
    /// Variational process `ς(t)` along the base path on the grid.
    pub variational: Vec<f64>,
}

impl SensitivityPair {
    pub fn is_divergent(&self) -> bool {
        self.base.is_divergent() || self.perturbed.as_ref().is_some_and(|p| p.is_divergent())
    }
}

fn check_inputs(model: &RegimeModel, x0: &[f64], a0: usize, cfg: &SimConfig) -> Result<()> {
    cfg.validate()?;
    model.check_state(x0, "x0")?;
    model.check_regime(a0)
}

pub fn simulate_path(
    model: &RegimeModel,
    x0: &[f64],
    a0: usize,
    cfg: &SimConfig,
    path_index: usize,
) -> Result<Trajectory> {
    check_inputs(model, x0, a0, cfg)?;
    Ok(run(model, cfg, path_index, Start::single(x0, a0), false)?.first)
}

/// `n_paths` independent paths; path `k` uses stream `(seed, k)`.
pub fn simulate_ensemble(
    model: &RegimeModel,
    x0: &[f64],
    a0: usize,
    cfg: &SimConfig,
) -> Result<Ensemble> {
    check_inputs(model, x0, a0, cfg)?;
    let paths = exec::try_map_indexed(cfg.execution, cfg.n_paths, |k| {
        run(model, cfg, k, Start::single(x0, a0), false).map(|o| o.first)
    })?;
    Ok(Ensemble { paths })
}

/// Runs `f` on every path of an ensemble without retaining the trajectories.
pub fn map_ensemble<R, F>(
    model: &RegimeModel,
    x0: &[f64],
    a0: usize,
    cfg: &SimConfig,
    f: F,
) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(Trajectory) -> R + Sync + Send,
{
    check_inputs(model, x0, a0, cfg)?;
    exec::try_map_indexed(cfg.execution, cfg.n_paths, |k| {
        run(model, cfg, k, Start::single(x0, a0), false).map(|o| f(o.first))
    })
}

pub fn simulate_coupled_pair(
    model: &RegimeModel,
    x0: &[f64],
    y0: &[f64],
    i0: usize,
    j0: usize,
    cfg: &SimConfig,
    path_index: usize,
) -> Result<CoupledPath> {
    check_inputs(model, x0, i0, cfg)?;
    model.check_state(y0, "y0")?;
    model.check_regime(j0)?;
    let out = run(model, cfg, path_index, Start::pair(x0, i0, y0, j0), false)?;
    Ok(CoupledPath {
        first: out.first,
        second: out.second.expect("pair run yields two paths"),
        grid_times: out.grid_times,
        diff_sq: out.diff_sq,
        regime_pairs: out.regime_pairs,
    })
}

pub fn coupled_ensemble(
    model: &RegimeModel,
    x0: &[f64],
    y0: &[f64],
    i0: usize,
    j0: usize,
    cfg: &SimConfig,
) -> Result<Vec<CoupledPath>> {
    check_inputs(model, x0, i0, cfg)?;
    model.check_state(y0, "y0")?;
    model.check_regime(j0)?;
    exec::try_map_indexed(cfg.execution, cfg.n_paths, |k| {
        simulate_coupled_pair(model, x0, y0, i0, j0, cfg, k)
    })
}

fn require_scalar(model: &RegimeModel) -> Result<()> {
    if model.dim_x() != 1 {
        return Err(Error::Unsupported(format!(
            "sensitivity processes need a scalar state, model has dim_x = {}",
            model.dim_x()
        )));
    }
    Ok(())
}

/// Integrates `ς(t) = ∂X(t)/∂x` along the path from `x0` with the same noise.
pub fn simulate_variational(
    model: &RegimeModel,
    x0: f64,
    a0: usize,
    cfg: &SimConfig,
    path_index: usize,
) -> Result<SensitivityPair> {
    require_scalar(model)?;
    check_inputs(model, &[x0], a0, cfg)?;
    let out = run(model, cfg, path_index, Start::single(&[x0], a0), true)?;
    Ok(SensitivityPair {
        grid_times: out.grid_times,
        base: out.first,
        perturbed: None,
        delta: None,
        finite_difference: None,
        variational: out.tangent,
    })
}

/// Simulates from `x0` and `x0 + Δ` with shared noise and the same initial
/// regime, returning `Z^Δ(t)` together with `ς(t)` along the base path.
pub fn finite_difference_sensitivity(
    model: &RegimeModel,
    x0: f64,
    delta: f64,
    a0: usize,
    cfg: &SimConfig,
    path_index: usize,
) -> Result<SensitivityPair> {
    require_scalar(model)?;
    if !(delta != 0.0 && delta.is_finite()) {
        return Err(Error::Precondition(
            "delta must be finite and nonzero (perturbed start equals base start)".into(),
        ));
    }
    check_inputs(model, &[x0], a0, cfg)?;
    let x1 = x0 + delta;
    if x1 == x0 {
        return Err(Error::Precondition(format!(
            "delta {delta} is below the resolution of x0 = {x0}"
        )));
    }
    let out = run(model, cfg, path_index, Start::pair(&[x0], a0, &[x1], a0), true)?;
    let second = out.second.expect("pair run yields two paths");
    // The representable perturbation, so that Z^Δ(0) = 1 exactly.
    let eff = x1 - x0;
    let z = out
        .second_grid
        .iter()
        .zip(&out.first_grid)
        .map(|(y, x)| (y - x) / eff)
        .collect();
    Ok(SensitivityPair {
        grid_times: out.grid_times,
        base: out.first,
        perturbed: Some(second),
        delta: Some(delta),
        finite_difference: Some(z),
        variational: out.tangent,
    })
}
