//! Regime-switching jump diffusion models.
//!
//! A model couples a continuous state `x ∈ ℝʳ` driven by
//!
//! ```text
//! dX = b(X, α) dt + σ(X, α) dw + ∫ g(X⁻, α⁻, γ) N(dt, dγ)
//! ```
//!
//! with a regime `α ∈ {0, .., m-1}` whose switching intensities `q_ij(x)` depend
//! on the current state. Regimes are zero-based throughout the library; CSV and
//! JSON outputs print them one-based.

mod builtin;
pub mod config;
pub mod expr;
mod linearize;
mod rates;

use std::fmt;
use std::sync::Arc;

pub use builtin::{builtin_example, Example};
pub use linearize::{linearize, LinearizedModel, DEFAULT_FD_STEP};
pub use rates::{validate_q_property, QCheck, QViolation, RateMatrix};

use crate::error::{Error, Result};
use crate::rng::PathRng;

pub type VectorFn = dyn Fn(&[f64], usize, &mut [f64]) + Send + Sync;
pub type JumpFn = dyn Fn(&[f64], usize, f64, &mut [f64]) + Send + Sync;
pub type RatesFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
pub type MarkFn = dyn Fn(&mut PathRng) -> f64 + Send + Sync;

/// Sampling rule for the jump mark distribution π.
#[derive(Clone)]
pub enum MarkLaw {
    /// Every jump carries the same mark; consumes no randomness.
    Degenerate(f64),
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, std_dev: f64 },
    Custom(Arc<MarkFn>),
}

impl MarkLaw {
    pub fn sample(&self, rng: &mut PathRng) -> f64 {
        match self {
            MarkLaw::Degenerate(v) => *v,
            MarkLaw::Uniform { low, high } => low + (high - low) * rng.uniform(),
            MarkLaw::Normal { mean, std_dev } => mean + std_dev * rng.normal(),
            MarkLaw::Custom(f) => f(rng),
        }
    }

    /// The single mark value when π is a point mass.
    pub fn degenerate_value(&self) -> Option<f64> {
        match self {
            MarkLaw::Degenerate(v) => Some(*v),
            _ => None,
        }
    }
}

impl Default for MarkLaw {
    fn default() -> Self {
        MarkLaw::Degenerate(0.0)
    }
}

impl fmt::Debug for MarkLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarkLaw::Degenerate(v) => write!(f, "Degenerate({v})"),
            MarkLaw::Uniform { low, high } => write!(f, "Uniform[{low}, {high})"),
            MarkLaw::Normal { mean, std_dev } => write!(f, "Normal({mean}, {std_dev})"),
            MarkLaw::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// Analytic spatial derivatives for scalar models, used by the variational
/// process instead of finite differences when present.
#[derive(Clone)]
#[allow(clippy::type_complexity)]
pub struct ScalarDerivatives {
    pub drift_dx: Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>,
    /// Writes `∂σ_l/∂x` for `l = 0..d`.
    pub diffusion_dx: Arc<dyn Fn(f64, usize, &mut [f64]) + Send + Sync>,
    pub jump_dx: Arc<dyn Fn(f64, usize, f64) -> f64 + Send + Sync>,
}

/// Immutable model definition; cheap to clone and shareable across threads.
#[derive(Clone)]
pub struct RegimeModel {
    name: String,
    dim_x: usize,
    num_regimes: usize,
    dim_w: usize,
    drift: Arc<VectorFn>,
    diffusion: Arc<VectorFn>,
    jump: Arc<JumpFn>,
    jump_rate: f64,
    marks: MarkLaw,
    rates: Arc<RatesFn>,
    has_equilibrium: bool,
    derivatives: Option<ScalarDerivatives>,
}

impl fmt::Debug for RegimeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegimeModel")
            .field("name", &self.name)
            .field("dim_x", &self.dim_x)
            .field("num_regimes", &self.num_regimes)
            .field("dim_w", &self.dim_w)
            .field("jump_rate", &self.jump_rate)
            .field("marks", &self.marks)
            .field("has_equilibrium", &self.has_equilibrium)
            .finish_non_exhaustive()
    }
}

impl RegimeModel {
    pub fn builder(dim_x: usize, num_regimes: usize, dim_w: usize) -> ModelBuilder {
        ModelBuilder::new(dim_x, num_regimes, dim_w)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn dim_x(&self) -> usize {
        self.dim_x
    }
    pub fn num_regimes(&self) -> usize {
        self.num_regimes
    }
    pub fn dim_w(&self) -> usize {
        self.dim_w
    }
    pub fn jump_rate(&self) -> f64 {
        self.jump_rate
    }
    pub fn marks(&self) -> &MarkLaw {
        &self.marks
    }
    pub fn has_equilibrium(&self) -> bool {
        self.has_equilibrium
    }
    pub fn derivatives(&self) -> Option<&ScalarDerivatives> {
        self.derivatives.as_ref()
    }

    #[inline]
    pub fn drift_into(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        (self.drift)(x, regime, out)
    }

    /// Row-major `r × d` diffusion matrix.
    #[inline]
    pub fn diffusion_into(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        (self.diffusion)(x, regime, out)
    }

    #[inline]
    pub fn jump_into(&self, x: &[f64], regime: usize, mark: f64, out: &mut [f64]) {
        (self.jump)(x, regime, mark, out)
    }

    /// Raw row-major `m × m` rates at `x`, without validation.
    #[inline]
    pub fn rates_into(&self, x: &[f64], out: &mut [f64]) {
        (self.rates)(x, out)
    }

    /// Rate matrix at `x`, checked against the q-property.
    pub fn rate_matrix(&self, x: &[f64]) -> Result<RateMatrix> {
        let m = self.num_regimes;
        let mut buf = vec![0.0; m * m];
        self.rates_into(x, &mut buf);
        RateMatrix::new(m, buf)
    }

    pub fn drift(&self, x: &[f64], regime: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_x];
        self.drift_into(x, regime, &mut out);
        out
    }

    pub fn diffusion(&self, x: &[f64], regime: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_x * self.dim_w];
        self.diffusion_into(x, regime, &mut out);
        out
    }

    pub fn jump(&self, x: &[f64], regime: usize, mark: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_x];
        self.jump_into(x, regime, mark, &mut out);
        out
    }

    pub fn sample_mark(&self, rng: &mut PathRng) -> f64 {
        self.marks.sample(rng)
    }

    pub(crate) fn check_regime(&self, regime: usize) -> Result<()> {
        if regime >= self.num_regimes {
            return Err(Error::invalid(
                "regime",
                format!(
                    "regime {} out of range 1..={}",
                    regime + 1,
                    self.num_regimes
                ),
            ));
        }
        Ok(())
    }

    pub(crate) fn check_state(&self, x: &[f64], what: &str) -> Result<()> {
        if x.len() != self.dim_x {
            return Err(Error::invalid(
                what,
                format!("expected {} components, got {}", self.dim_x, x.len()),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(what, "state must be finite"));
        }
        Ok(())
    }
}

/// Builder for [`RegimeModel`]; unset coefficients default to zero.
pub struct ModelBuilder {
    name: String,
    dim_x: usize,
    num_regimes: usize,
    dim_w: usize,
    drift: Option<Arc<VectorFn>>,
    diffusion: Option<Arc<VectorFn>>,
    jump: Option<Arc<JumpFn>>,
    jump_rate: f64,
    marks: MarkLaw,
    rates: Option<Arc<RatesFn>>,
    has_equilibrium: bool,
    derivatives: Option<ScalarDerivatives>,
}

impl ModelBuilder {
    fn new(dim_x: usize, num_regimes: usize, dim_w: usize) -> Self {
        Self {
            name: "custom".into(),
            dim_x,
            num_regimes,
            dim_w,
            drift: None,
            diffusion: None,
            jump: None,
            jump_rate: 0.0,
            marks: MarkLaw::default(),
            rates: None,
            has_equilibrium: false,
            derivatives: None,
        }
    }

    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn drift(mut self, f: impl Fn(&[f64], usize, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift = Some(Arc::new(f));
        self
    }

    pub fn diffusion(
        mut self,
        f: impl Fn(&[f64], usize, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.diffusion = Some(Arc::new(f));
        self
    }

    pub fn jump(
        mut self,
        f: impl Fn(&[f64], usize, f64, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.jump = Some(Arc::new(f));
        self
    }

    /// Scalar drift `b(x, i)`; requires `dim_x == 1`.
    pub fn scalar_drift(self, f: impl Fn(f64, usize) -> f64 + Send + Sync + 'static) -> Self {
        self.drift(move |x, i, out| out[0] = f(x[0], i))
    }

    /// Scalar diffusion `σ(x, i)`; requires `dim_x == dim_w == 1`.
    pub fn scalar_diffusion(self, f: impl Fn(f64, usize) -> f64 + Send + Sync + 'static) -> Self {
        self.diffusion(move |x, i, out| out[0] = f(x[0], i))
    }

    pub fn scalar_jump(self, f: impl Fn(f64, usize, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.jump(move |x, i, g, out| out[0] = f(x[0], i, g))
    }

    pub fn jump_rate(mut self, rate: f64) -> Self {
        self.jump_rate = rate;
        self
    }

    pub fn marks(mut self, marks: MarkLaw) -> Self {
        self.marks = marks;
        self
    }

    pub fn rates(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.rates = Some(Arc::new(f));
        self
    }

    pub fn constant_rates(self, q: RateMatrix) -> Self {
        let entries = q.as_slice().to_vec();
        self.rates(move |_, out| out.copy_from_slice(&entries))
    }

    pub fn equilibrium(mut self, has_equilibrium: bool) -> Self {
        self.has_equilibrium = has_equilibrium;
        self
    }

    pub fn scalar_derivatives(mut self, d: ScalarDerivatives) -> Self {
        self.derivatives = Some(d);
        self
    }

    pub fn build(self) -> Result<RegimeModel> {
        if self.dim_x == 0 {
            return Err(Error::invalid("dim_x", "must be >= 1"));
        }
        if self.num_regimes == 0 {
            return Err(Error::invalid("num_regimes", "must be >= 1"));
        }
        if self.dim_w == 0 {
            return Err(Error::invalid("dim_w", "must be >= 1"));
        }
        if !(self.jump_rate.is_finite() && self.jump_rate >= 0.0) {
            return Err(Error::invalid(
                "jump_rate",
                format!("must be finite and >= 0, got {}", self.jump_rate),
            ));
        }
        match self.marks {
            MarkLaw::Uniform { low, high } if !(low < high) => {
                return Err(Error::invalid("marks", "uniform mark law needs low < high"))
            }
            MarkLaw::Normal { std_dev, .. } if !(std_dev >= 0.0) => {
                return Err(Error::invalid("marks", "normal mark law needs std_dev >= 0"))
            }
            _ => {}
        }
        if self.derivatives.is_some() && self.dim_x != 1 {
            return Err(Error::invalid(
                "derivatives",
                "analytic derivatives are supported for scalar models only",
            ));
        }
        let m = self.num_regimes;
        let model = RegimeModel {
            name: self.name,
            dim_x: self.dim_x,
            num_regimes: m,
            dim_w: self.dim_w,
            drift: self.drift.unwrap_or_else(|| Arc::new(|_, _, out: &mut [f64]| out.fill(0.0))),
            diffusion: self
                .diffusion
                .unwrap_or_else(|| Arc::new(|_, _, out: &mut [f64]| out.fill(0.0))),
            jump: self
                .jump
                .unwrap_or_else(|| Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0))),
            jump_rate: self.jump_rate,
            marks: self.marks,
            rates: self.rates.unwrap_or_else(|| Arc::new(|_, out: &mut [f64]| out.fill(0.0))),
            has_equilibrium: self.has_equilibrium,
            derivatives: self.derivatives,
        };
        check_rates_on_probes(&model)?;
        if model.has_equilibrium {
            check_equilibrium(&model)?;
        }
        Ok(model)
    }
}

/// Deterministic probe states used for structural checks at build time.
pub(crate) fn probe_points(dim_x: usize, count: usize) -> Vec<Vec<f64>> {
    let mut rng = PathRng::auxiliary(0x5eed_0f9e_0be5, 1);
    let mut points = vec![vec![0.0; dim_x]];
    for k in 0..count {
        let radius = 10f64.powf(-3.0 + 6.0 * k as f64 / count.max(1) as f64);
        let mut dir: Vec<f64> = (0..dim_x).map(|_| rng.normal()).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        dir.iter_mut().for_each(|v| *v *= radius / norm);
        points.push(dir);
    }
    points
}

fn check_rates_on_probes(model: &RegimeModel) -> Result<()> {
    for x in probe_points(model.dim_x, 32) {
        let mut buf = vec![0.0; model.num_regimes * model.num_regimes];
        model.rates_into(&x, &mut buf);
        let check = validate_q_property(model.num_regimes, &buf);
        if !check.is_pass() {
            return Err(Error::invalid(
                "rate_matrix",
                format!("at x = {x:?}: {check}"),
            ));
        }
    }
    Ok(())
}

fn check_equilibrium(model: &RegimeModel) -> Result<()> {
    let zero = vec![0.0; model.dim_x];
    let mut rng = PathRng::auxiliary(0x5eed_0f9e_0be5, 2);
    let n_marks = if model.marks.degenerate_value().is_some() { 1 } else { 100 };
    for i in 0..model.num_regimes {
        let b = model.drift(&zero, i);
        if b.iter().any(|v| v.abs() > 1e-12) {
            return Err(Error::invalid(
                "has_equilibrium",
                format!("drift(0, {}) = {b:?} is not zero", i + 1),
            ));
        }
        let s = model.diffusion(&zero, i);
        if s.iter().any(|v| v.abs() > 1e-12) {
            return Err(Error::invalid(
                "has_equilibrium",
                format!("diffusion(0, {}) is not zero", i + 1),
            ));
        }
        for _ in 0..n_marks {
            let gamma = model.sample_mark(&mut rng);
            let g = model.jump(&zero, i, gamma);
            if g.iter().any(|v| v.abs() > 1e-12) {
                return Err(Error::invalid(
                    "has_equilibrium",
                    format!("jump(0, {}, {gamma}) is not zero", i + 1),
                ));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_jump_rate_names_field() {
        let err = RegimeModel::builder(1, 1, 1).jump_rate(-1.0).build().unwrap_err();
        assert!(matches!(err, Error::Invalid { ref field, .. } if field == "jump_rate"));
    }

    #[test]
    fn zero_dimensions_rejected() {
        assert!(RegimeModel::builder(0, 1, 1).build().is_err());
        assert!(RegimeModel::builder(1, 0, 1).build().is_err());
        assert!(RegimeModel::builder(1, 1, 0).build().is_err());
    }

    #[test]
    fn bad_rates_rejected_at_build() {
        let err = RegimeModel::builder(1, 2, 1)
            .rates(|_, q| q.copy_from_slice(&[-1.0, -1.0, 1.0, 1.0]))
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::Invalid { ref field, .. } if field == "rate_matrix"));
    }

    #[test]
    fn equilibrium_flag_is_checked() {
        let err = RegimeModel::builder(1, 1, 1)
            .scalar_drift(|x, _| x + 1.0)
            .equilibrium(true)
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::Invalid { ref field, .. } if field == "has_equilibrium"));
        // Same model without the flag is fine: no equilibrium is required.
        assert!(RegimeModel::builder(1, 1, 1).scalar_drift(|x, _| x + 1.0).build().is_ok());
    }

    #[test]
    fn marks_sample_within_support() {
        let mut rng = PathRng::new(3, 0);
        let law = MarkLaw::Uniform { low: -1.0, high: 2.0 };
        for _ in 0..1000 {
            let g = law.sample(&mut rng);
            assert!((-1.0..2.0).contains(&g));
        }
        assert_eq!(MarkLaw::Degenerate(0.5).sample(&mut rng), 0.5);
    }
}
