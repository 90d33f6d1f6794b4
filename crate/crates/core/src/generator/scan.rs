use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{apply_generator, TestFunction, DEFAULT_N_MARKS};
use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::model::RegimeModel;

/// Annulus `inner ≤ |x| ≤ outer` sampled on a log-radial × uniform-angular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanRegion {
    pub inner: f64,
    pub outer: f64,
    pub n_radial: usize,
    /// Points per angle; ignored for scalar states (both signs are used).
    #[serde(default = "default_angular")]
    pub n_angular: usize,
    /// One-based regimes to scan; all when absent.
    #[serde(default)]
    pub regimes: Option<Vec<usize>>,
}

fn default_angular() -> usize {
    8
}

impl ScanRegion {
    pub fn annulus(inner: f64, outer: f64, n_radial: usize) -> Self {
        Self {
            inner,
            outer,
            n_radial,
            n_angular: default_angular(),
            regimes: None,
        }
    }

    fn validate(&self, model: &RegimeModel) -> Result<Vec<usize>> {
        if !(self.inner > 0.0 && self.inner < self.outer && self.outer.is_finite()) {
            return Err(Error::invalid("region", "need 0 < inner < outer < inf"));
        }
        if self.n_radial < 2 {
            return Err(Error::invalid("region.n_radial", "must be >= 2"));
        }
        if model.dim_x() > 1 && self.n_angular == 0 {
            return Err(Error::invalid("region.n_angular", "must be >= 1"));
        }
        match &self.regimes {
            None => Ok((0..model.num_regimes()).collect()),
            Some(list) if list.is_empty() => Err(Error::invalid("region.regimes", "empty regime set")),
            Some(list) => list
                .iter()
                .map(|&i| {
                    if i == 0 || i > model.num_regimes() {
                        Err(Error::invalid(
                            "region.regimes",
                            format!("regime {i} outside 1..={}", model.num_regimes()),
                        ))
                    } else {
                        Ok(i - 1)
                    }
                })
                .collect(),
        }
    }

    pub fn radii(&self) -> Vec<f64> {
        let (a, b) = (self.inner.ln(), self.outer.ln());
        let n = self.n_radial;
        (0..n)
            .map(|k| match k {
                0 => self.inner,
                _ if k == n - 1 => self.outer,
                _ => (a + (b - a) * k as f64 / (n - 1) as f64).exp(),
            })
            .collect()
    }

    /// Unit directions: `±1` for `r = 1`, otherwise hyperspherical angles
    /// with `n_angular` midpoints on each polar angle and `n_angular` uniform
    /// azimuths.
    pub fn directions(&self, r: usize) -> Vec<Vec<f64>> {
        if r == 1 {
            return vec![vec![1.0], vec![-1.0]];
        }
        let n = self.n_angular;
        let polar: Vec<f64> = (0..n).map(|k| PI * (k as f64 + 0.5) / n as f64).collect();
        let azimuth: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
        let mut out = Vec::new();
        let mut idx = vec![0usize; r - 2];
        loop {
            for &phi in &azimuth {
                let mut dir = vec![0.0; r];
                let mut s = 1.0;
                for (k, &p) in idx.iter().enumerate() {
                    dir[k] = s * polar[p].cos();
                    s *= polar[p].sin();
                }
                dir[r - 2] = s * phi.cos();
                dir[r - 1] = s * phi.sin();
                out.push(dir);
            }
            // Odometer over the polar indices.
            let mut k = 0;
            while k < idx.len() {
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == idx.len() {
                return out;
            }
        }
    }
}

/// `GV + kV ≤ 0` (decay rate `k`) or `GV + βV ≤ 0` (margin `β`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ScanMode {
    DecayRate(f64),
    Margin(f64),
}

impl ScanMode {
    fn coefficient(self) -> f64 {
        match self {
            ScanMode::DecayRate(k) | ScanMode::Margin(k) => k,
        }
    }
}

/// `k₁|x|^p ≤ V(x, i) ≤ k₂|x|^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerBounds {
    pub p: f64,
    pub k1: f64,
    pub k2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsCheck {
    pub bounds: PowerBounds,
    /// Extremes of `V / |x|^p` over the grid.
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub holds: bool,
}

/// A scan request; `v` is an expression when read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    #[serde(default)]
    pub v: Option<String>,
    pub region: ScanRegion,
    pub mode: ScanMode,
    #[serde(default)]
    pub bounds: Option<PowerBounds>,
    #[serde(default = "default_marks")]
    pub n_marks: usize,
}

fn default_marks() -> usize {
    DEFAULT_N_MARKS
}

impl ScanSpec {
    pub fn new(region: ScanRegion, mode: ScanMode) -> Self {
        Self {
            v: None,
            region,
            mode,
            bounds: None,
            n_marks: DEFAULT_N_MARKS,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("scan spec: {e}")))
    }

    /// The expression `v` as a test function.
    pub fn test_function(&self) -> Result<TestFunction> {
        let src = self
            .v
            .as_deref()
            .ok_or_else(|| Error::invalid("v", "scan spec has no Lyapunov function"))?;
        TestFunction::from_expr(src)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub inner: f64,
    pub outer: f64,
    pub n_radial: usize,
    pub n_directions: usize,
    /// One-based.
    pub regimes: Vec<usize>,
    pub spacing: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub mode: ScanMode,
    /// Largest `GV + cV` on the grid; positive means the condition fails there.
    pub max_violation: f64,
    pub argmax_point: Vec<f64>,
    /// One-based.
    pub argmax_regime: usize,
    pub violation_fraction: f64,
    pub n_points: usize,
    /// Largest mark-sampling standard error of `GV` on the grid.
    pub max_std_error: f64,
    pub grid_spec: GridSpec,
    pub bounds: Option<BoundsCheck>,
}

pub fn lyapunov_scan(model: &RegimeModel, v: &TestFunction, spec: &ScanSpec) -> Result<ScanReport> {
    let region = &spec.region;
    let regimes = region.validate(model)?;
    if spec.n_marks == 0 {
        return Err(Error::invalid("n_marks", "must be >= 1"));
    }
    let radii = region.radii();
    let dirs = region.directions(model.dim_x());
    let per_regime = radii.len() * dirs.len();
    let n_points = regimes.len() * per_regime;
    let c = spec.mode.coefficient();

    let point = |k: usize| {
        let regime = regimes[k / per_regime];
        let rest = k % per_regime;
        let rho = radii[rest / dirs.len()];
        let x: Vec<f64> = dirs[rest % dirs.len()].iter().map(|u| rho * u).collect();
        (x, regime)
    };
    let evals = try_map_indexed(Execution::Auto, n_points, |k| {
        let (x, i) = point(k);
        let vx = v.value(&x, i);
        if !(vx > 0.0 && vx.is_finite()) {
            return Err(Error::Precondition(format!(
                "V = {vx} at x = {x:?}, regime {}: not a valid Lyapunov candidate",
                i + 1
            )));
        }
        let g = apply_generator(model, v, &x, i, spec.n_marks)?;
        Ok((g.value + c * vx, g.std_error, vx))
    })?;

    let mut best = 0;
    for (k, e) in evals.iter().enumerate() {
        if e.0 > evals[best].0 {
            best = k;
        }
    }
    let (argmax_point, argmax_regime) = point(best);
    let n_violations = evals.iter().filter(|e| e.0 > 0.0).count();

    let bounds = spec.bounds.map(|b| {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (k, e) in evals.iter().enumerate() {
            let rho = radii[(k % per_regime) / dirs.len()];
            let ratio = e.2 / rho.powf(b.p);
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        BoundsCheck {
            bounds: b,
            min_ratio: lo,
            max_ratio: hi,
            holds: b.k1 <= lo && hi <= b.k2,
        }
    });

    Ok(ScanReport {
        mode: spec.mode,
        max_violation: evals[best].0,
        argmax_point,
        argmax_regime: argmax_regime + 1,
        violation_fraction: n_violations as f64 / n_points as f64,
        n_points,
        max_std_error: evals.iter().map(|e| e.1).fold(0.0, f64::max),
        grid_spec: GridSpec {
            inner: region.inner,
            outer: region.outer,
            n_radial: region.n_radial,
            n_directions: dirs.len(),
            regimes: regimes.iter().map(|i| i + 1).collect(),
            spacing: "log-radial x uniform-angular".into(),
        },
        bounds,
    })
}
