//! The generator `G` of the switching jump diffusion, the generator `G̃` of
//! the coupled difference process on the regime-indexed embedding, and grid
//! scans of Lyapunov conditions.

mod scan;

use std::sync::Arc;

use serde::Serialize;

pub use scan::{lyapunov_scan, BoundsCheck, PowerBounds, ScanMode, ScanRegion, ScanReport, ScanSpec};

use crate::error::{Error, Result};
use crate::model::expr::Expr;
use crate::model::{RateMatrix, RegimeModel};
use crate::rng::PathRng;
use crate::switching::build_partition;

pub const DEFAULT_N_MARKS: usize = 10_000;
pub const GRADIENT_REL_STEP: f64 = 1e-6;
pub const HESSIAN_REL_STEP: f64 = 1e-4;

/// Auxiliary stream for mark averages; fixed so repeated evaluations share
/// their mark samples.
const MARK_STREAM: (u64, u64) = (0, 1);

type Value = Arc<dyn Fn(&[f64], usize) -> f64 + Send + Sync>;
type Derivative = Arc<dyn Fn(&[f64], usize, &mut [f64]) + Send + Sync>;

/// A function `f(x, i)`, twice differentiable in `x`. Missing derivatives are
/// taken by central differences.
#[derive(Clone)]
pub struct TestFunction {
    value: Value,
    gradient: Option<Derivative>,
    /// Row-major `r × r`.
    hessian: Option<Derivative>,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction")
            .field("analytic_gradient", &self.gradient.is_some())
            .field("analytic_hessian", &self.hessian.is_some())
            .finish()
    }
}

impl TestFunction {
    pub fn new(f: impl Fn(&[f64], usize) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(f),
            gradient: None,
            hessian: None,
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64], usize, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn with_hessian(mut self, h: impl Fn(&[f64], usize, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.hessian = Some(Arc::new(h));
        self
    }

    /// `|x|^p` with analytic derivatives (singular at 0 for `p < 2`).
    pub fn power(p: f64) -> Self {
        Self::new(move |x, _| norm(x).powf(p))
            .with_gradient(move |x, _, out| {
                let n = norm(x);
                let c = if n == 0.0 { 0.0 } else { p * n.powf(p - 2.0) };
                for (o, v) in out.iter_mut().zip(x) {
                    *o = c * v;
                }
            })
            .with_hessian(move |x, _, out| {
                let r = x.len();
                let n = norm(x);
                let (c1, c2) = if n == 0.0 {
                    (if p == 2.0 { 2.0 } else { 0.0 }, 0.0)
                } else {
                    (p * n.powf(p - 2.0), p * (p - 2.0) * n.powf(p - 4.0))
                };
                for a in 0..r {
                    for b in 0..r {
                        out[a * r + b] = c2 * x[a] * x[b] + if a == b { c1 } else { 0.0 };
                    }
                }
            })
    }

    /// `|x|²`.
    pub fn squared_norm() -> Self {
        Self::power(2.0)
    }

    /// An expression in `x`, `x[k]` and the one-based regime label `i`.
    pub fn from_expr(src: &str) -> Result<Self> {
        let e = Expr::parse(src)?;
        if e.uses_gamma() {
            return Err(Error::Expr(format!("{src:?}: a test function cannot use gamma")));
        }
        Ok(Self::new(move |x, i| e.eval(x, (i + 1) as f64, 0.0)))
    }

    pub fn value(&self, x: &[f64], regime: usize) -> f64 {
        (self.value)(x, regime)
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.gradient.is_some() && self.hessian.is_some()
    }

    pub fn gradient_into(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        if let Some(g) = &self.gradient {
            return g(x, regime, out);
        }
        self.fd_gradient(x, regime, out);
    }

    pub fn hessian_into(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        if let Some(h) = &self.hessian {
            return h(x, regime, out);
        }
        self.fd_hessian(x, regime, out);
    }

    fn fd_gradient(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        let mut p = x.to_vec();
        for k in 0..x.len() {
            let h = GRADIENT_REL_STEP * x[k].abs().max(1.0);
            p[k] = x[k] + h;
            let fp = self.value(&p, regime);
            p[k] = x[k] - h;
            let fm = self.value(&p, regime);
            p[k] = x[k];
            out[k] = (fp - fm) / (2.0 * h);
        }
    }

    fn fd_hessian(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        let r = x.len();
        let f0 = self.value(x, regime);
        let steps: Vec<f64> = x.iter().map(|v| HESSIAN_REL_STEP * v.abs().max(1.0)).collect();
        let mut p = x.to_vec();
        for a in 0..r {
            let ha = steps[a];
            p[a] = x[a] + ha;
            let fp = self.value(&p, regime);
            p[a] = x[a] - ha;
            let fm = self.value(&p, regime);
            p[a] = x[a];
            out[a * r + a] = (fp - 2.0 * f0 + fm) / (ha * ha);
            for b in 0..a {
                let hb = steps[b];
                let mut corner = |sa: f64, sb: f64| {
                    p[a] = x[a] + sa * ha;
                    p[b] = x[b] + sb * hb;
                    let v = self.value(&p, regime);
                    p[a] = x[a];
                    p[b] = x[b];
                    v
                };
                let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                    / (4.0 * ha * hb);
                out[a * r + b] = v;
                out[b * r + a] = v;
            }
        }
    }

    /// Compares analytic derivatives with central differences at `points`
    /// (relative to `max(1, |analytic|)`, tolerance 1e-4).
    pub fn check_derivatives(&self, points: &[Vec<f64>], regimes: usize) -> Result<()> {
        for x in points {
            let r = x.len();
            for i in 0..regimes {
                let mut a = vec![0.0; r * r];
                let mut b = vec![0.0; r * r];
                if let Some(g) = &self.gradient {
                    g(x, i, &mut a[..r]);
                    self.fd_gradient(x, i, &mut b[..r]);
                    compare(&a[..r], &b[..r], "gradient", x)?;
                }
                if let Some(h) = &self.hessian {
                    h(x, i, &mut a);
                    self.fd_hessian(x, i, &mut b);
                    compare(&a, &b, "hessian", x)?;
                }
            }
        }
        Ok(())
    }
}

fn compare(analytic: &[f64], numeric: &[f64], what: &str, x: &[f64]) -> Result<()> {
    for (a, n) in analytic.iter().zip(numeric) {
        if (a - n).abs() > 1e-4 * a.abs().max(1.0) {
            return Err(Error::Precondition(format!(
                "analytic {what} {a} disagrees with finite difference {n} at x = {x:?}"
            )));
        }
    }
    Ok(())
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `Gf(x, i)` split into its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorValue {
    pub value: f64,
    pub diffusion: f64,
    pub drift: f64,
    pub switching: f64,
    pub jump: f64,
    /// Standard error of the mark average (0 when exact).
    pub std_error: f64,
}

impl GeneratorValue {
    fn assemble(diffusion: f64, drift: f64, switching: f64, jump: (f64, f64)) -> Result<Self> {
        for (term, v) in [
            ("diffusion term", diffusion),
            ("drift term", drift),
            ("switching term", switching),
            ("jump term", jump.0),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite { term: term.into() });
            }
        }
        Ok(Self {
            value: diffusion + drift + switching + jump.0,
            diffusion,
            drift,
            switching,
            jump: jump.0,
            std_error: jump.1,
        })
    }
}

/// `λ ∫ h(γ) π(dγ)` as `(estimate, standard error)`.
fn mark_average(model: &RegimeModel, n_marks: usize, mut h: impl FnMut(f64) -> f64) -> (f64, f64) {
    let lam = model.jump_rate();
    if lam == 0.0 {
        return (0.0, 0.0);
    }
    if let Some(g) = model.marks().degenerate_value() {
        return (lam * h(g), 0.0);
    }
    let mut rng = PathRng::auxiliary(MARK_STREAM.0, MARK_STREAM.1);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_marks {
        let v = h(model.sample_mark(&mut rng));
        sum += v;
        sum_sq += v * v;
    }
    let n = n_marks as f64;
    let mean = sum / n;
    let var = if n_marks > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    (lam * mean, lam * (var / n).sqrt())
}

/// `½tr(σσ′Hf) + b′∇f` given `σ` (row-major `r × d`), `b`, `∇f` and `Hf`.
fn diffusion_and_drift(sigma: &[f64], b: &[f64], grad: &[f64], hess: &[f64], d: usize) -> (f64, f64) {
    let r = b.len();
    let mut diffusion = 0.0;
    for l in 0..d {
        for a in 0..r {
            for c in 0..r {
                diffusion += sigma[a * d + l] * hess[a * r + c] * sigma[c * d + l];
            }
        }
    }
    let drift = b.iter().zip(grad).map(|(u, v)| u * v).sum();
    (0.5 * diffusion, drift)
}

fn check_point(model: &RegimeModel, x: &[f64], i: usize, n_marks: usize) -> Result<()> {
    model.check_state(x, "x")?;
    model.check_regime(i)?;
    if n_marks == 0 {
        return Err(Error::invalid("n_marks", "must be >= 1"));
    }
    Ok(())
}

/// `Gf(x, i) = ½tr(a Hf) + b′∇f + Σ_j q_ij(x)(f(x,j) − f(x,i)) + λ∫[f(x+g,i) − f(x,i)]π(dγ)`.
pub fn apply_generator(
    model: &RegimeModel,
    f: &TestFunction,
    x: &[f64],
    i: usize,
    n_marks: usize,
) -> Result<GeneratorValue> {
    check_point(model, x, i, n_marks)?;
    let r = model.dim_x();
    let m = model.num_regimes();
    let d = model.dim_w();
    let b = model.drift(x, i);
    let sigma = model.diffusion(x, i);
    let mut grad = vec![0.0; r];
    let mut hess = vec![0.0; r * r];
    f.gradient_into(x, i, &mut grad);
    f.hessian_into(x, i, &mut hess);
    let (diffusion, drift) = diffusion_and_drift(&sigma, &b, &grad, &hess, d);

    let fx = f.value(x, i);
    let mut q = vec![0.0; m * m];
    model.rates_into(x, &mut q);
    let switching = (0..m)
        .filter(|&j| j != i)
        .map(|j| q[i * m + j] * (f.value(x, j) - fx))
        .sum();

    let mut g = vec![0.0; r];
    let mut shifted = vec![0.0; r];
    let jump = mark_average(model, n_marks, |mark| {
        model.jump_into(x, i, mark, &mut g);
        for k in 0..r {
            shifted[k] = x[k] + g[k];
        }
        f.value(&shifted, i) - fx
    });
    GeneratorValue::assemble(diffusion, drift, switching, jump)
}

/// `x̃^i − ỹ^j ∈ ℝ^{mr}`: `x` in block `i`, `−y` added in block `j`.
pub fn embed_difference(x: &[f64], i: usize, y: &[f64], j: usize, m: usize) -> Vec<f64> {
    let r = x.len();
    let mut z = vec![0.0; m * r];
    z[i * r..(i + 1) * r].copy_from_slice(x);
    for (k, v) in y.iter().enumerate() {
        z[j * r + k] -= v;
    }
    z
}

/// Lebesgue measure `m̃(Δ_ik(x) ∩ Δ_jl(y))` of the overlap of switching
/// intervals, for all `k ≠ i`, `l ≠ j` with positive overlap.
pub fn joint_switch_weights(qx: &RateMatrix, qy: &RateMatrix, i: usize, j: usize) -> Vec<((usize, usize), f64)> {
    let px = build_partition(qx, i);
    let py = build_partition(qy, j);
    let mut out = Vec::new();
    for a in &px.intervals {
        for b in &py.intervals {
            let w = a.end.min(b.end) - a.start.max(b.start);
            if w > 0.0 {
                out.push(((a.target, b.target), w));
            }
        }
    }
    out
}

/// `G̃f(x̃^i − ỹ^j)`. `f` acts on the embedded difference in `ℝ^{mr}`; its
/// regime argument is always 0.
#[allow(clippy::too_many_arguments)]
pub fn apply_coupled_generator(
    model: &RegimeModel,
    f: &TestFunction,
    x: &[f64],
    i: usize,
    y: &[f64],
    j: usize,
    n_marks: usize,
) -> Result<GeneratorValue> {
    check_point(model, x, i, n_marks)?;
    model.check_state(y, "y")?;
    model.check_regime(j)?;
    let r = model.dim_x();
    let m = model.num_regimes();
    let d = model.dim_w();
    let n = m * r;
    let fz = |k: usize, l: usize| f.value(&embed_difference(x, k, y, l, m), 0);
    let z = embed_difference(x, i, y, j, m);
    let f0 = f.value(&z, 0);

    // b̃(x,i) − b̃(y,j) and σ̃(x,i) − σ̃(y,j), row-major n × d.
    let mut b = vec![0.0; n];
    let mut sigma = vec![0.0; n * d];
    let (bx, by) = (model.drift(x, i), model.drift(y, j));
    let (sx, sy) = (model.diffusion(x, i), model.diffusion(y, j));
    for k in 0..r {
        b[i * r + k] += bx[k];
        b[j * r + k] -= by[k];
        for l in 0..d {
            sigma[(i * r + k) * d + l] += sx[k * d + l];
            sigma[(j * r + k) * d + l] -= sy[k * d + l];
        }
    }
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n * n];
    f.gradient_into(&z, 0, &mut grad);
    f.hessian_into(&z, 0, &mut hess);
    let (diffusion, drift) = diffusion_and_drift(&sigma, &b, &grad, &hess, d);

    let qx = model.rate_matrix(x)?;
    let qy = model.rate_matrix(y)?;
    let mut switching = 0.0;
    for k in (0..m).filter(|&k| k != i) {
        switching += qx.get(i, k) * (fz(k, j) - f0);
    }
    for l in (0..m).filter(|&l| l != j) {
        switching += qy.get(j, l) * (fz(i, l) - f0);
    }
    for ((k, l), w) in joint_switch_weights(&qx, &qy, i, j) {
        switching += w * (fz(k, l) - fz(i, l) - fz(k, j) + f0);
    }

    let mut gx = vec![0.0; r];
    let mut gy = vec![0.0; r];
    let mut shifted = z.clone();
    let jump = mark_average(model, n_marks, |mark| {
        model.jump_into(x, i, mark, &mut gx);
        model.jump_into(y, j, mark, &mut gy);
        shifted.copy_from_slice(&z);
        for k in 0..r {
            shifted[i * r + k] += gx[k];
            shifted[j * r + k] -= gy[k];
        }
        f.value(&shifted, 0) - f0
    });
    GeneratorValue::assemble(diffusion, drift, switching, jump)
}
