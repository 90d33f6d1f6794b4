use nalgebra::DMatrix;

use super::{RateMatrix, RegimeModel};
use crate::error::{Error, Result};
use crate::rng::PathRng;

pub const DEFAULT_FD_STEP: f64 = 1e-5;

const RICHARDSON_TOL: f64 = 1e-4;
const PROBE_RADII: usize = 64;
const PROBE_DIRECTIONS: usize = 16;
const PROBE_MARKS: usize = 100;

/// Local-linear data of a model at its equilibrium:
/// `b(x,i) ≈ b(i) x`, `σ_l(x,i) ≈ σ_l(i) x`, `|g(x,i,γ)| ≤ g*(i) |x|`.
#[derive(Debug, Clone)]
pub struct LinearizedModel {
    pub b_mats: Vec<DMatrix<f64>>,
    /// `sigma_mats[i][l]` is the `r × r` matrix for Brownian column `l`.
    pub sigma_mats: Vec<Vec<DMatrix<f64>>>,
    pub q_hat: RateMatrix,
    pub g_star: Vec<f64>,
    pub jump_rate: f64,
    /// Finite-difference warnings and the probe set used for `g_star`.
    pub notes: Vec<String>,
}

impl LinearizedModel {
    /// Scalar data with one Brownian motion, as in the built-in examples.
    pub fn scalar(
        b: &[f64],
        sigma: &[f64],
        q_hat: RateMatrix,
        g_star: &[f64],
        jump_rate: f64,
    ) -> Result<Self> {
        let m = q_hat.dim();
        if b.len() != m || sigma.len() != m || g_star.len() != m {
            return Err(Error::invalid(
                "linearized_model",
                "b, sigma and g_star need one entry per regime",
            ));
        }
        let lm = Self {
            b_mats: b.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect(),
            sigma_mats: sigma
                .iter()
                .map(|&v| vec![DMatrix::from_element(1, 1, v)])
                .collect(),
            q_hat,
            g_star: g_star.to_vec(),
            jump_rate,
            notes: Vec::new(),
        };
        lm.validate()?;
        Ok(lm)
    }

    pub fn num_regimes(&self) -> usize {
        self.q_hat.dim()
    }

    pub fn dim_x(&self) -> usize {
        self.b_mats.first().map_or(0, |b| b.nrows())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((i, g)) = self.g_star.iter().enumerate().find(|(_, g)| !(**g >= 0.0)) {
            return Err(Error::invalid(
                "g_star",
                format!("g_star[{}] = {g} must be >= 0", i + 1),
            ));
        }
        if !(self.jump_rate >= 0.0) {
            return Err(Error::invalid("jump_rate", "must be >= 0"));
        }
        Ok(())
    }

    /// Relabels regimes so that new regime `k` is old regime `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            b_mats: perm.iter().map(|&k| self.b_mats[k].clone()).collect(),
            sigma_mats: perm.iter().map(|&k| self.sigma_mats[k].clone()).collect(),
            q_hat: self.q_hat.permuted(perm),
            g_star: perm.iter().map(|&k| self.g_star[k]).collect(),
            jump_rate: self.jump_rate,
            notes: self.notes.clone(),
        }
    }
}

/// Central-difference Jacobians of drift and diffusion at the origin, the
/// generator there, and a sampled estimate of the jump bound `g*(i)`.
pub fn linearize(model: &RegimeModel, fd_step: f64) -> Result<LinearizedModel> {
    if !model.has_equilibrium() {
        return Err(Error::NoEquilibrium);
    }
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(Error::invalid("fd_step", "must be a positive finite number"));
    }
    let r = model.dim_x();
    let d = model.dim_w();
    let m = model.num_regimes();
    let mut notes = Vec::new();

    let mut b_mats = Vec::with_capacity(m);
    let mut sigma_mats = Vec::with_capacity(m);
    for i in 0..m {
        let jac = |h: f64| -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
            let mut b = DMatrix::zeros(r, r);
            let mut s = vec![DMatrix::zeros(r, r); d];
            let mut xp = vec![0.0; r];
            let mut xm = vec![0.0; r];
            for k in 0..r {
                xp.fill(0.0);
                xm.fill(0.0);
                xp[k] = h;
                xm[k] = -h;
                let bp = model.drift(&xp, i);
                let bm = model.drift(&xm, i);
                let sp = model.diffusion(&xp, i);
                let sm = model.diffusion(&xm, i);
                for row in 0..r {
                    b[(row, k)] = (bp[row] - bm[row]) / (2.0 * h);
                    for l in 0..d {
                        s[l][(row, k)] = (sp[row * d + l] - sm[row * d + l]) / (2.0 * h);
                    }
                }
            }
            (b, s)
        };
        let (b, s) = jac(fd_step);
        let (b_half, s_half) = jac(fd_step / 2.0);
        let residual = |a: &DMatrix<f64>, c: &DMatrix<f64>| {
            a.iter()
                .zip(c.iter())
                .map(|(u, v)| (u - v).abs() / u.abs().max(1.0))
                .fold(0.0, f64::max)
        };
        let res_b = residual(&b, &b_half);
        if res_b > RICHARDSON_TOL {
            notes.push(format!(
                "warning: drift Jacobian of regime {} changes by {res_b:.2e} (relative) between h and h/2",
                i + 1
            ));
        }
        for l in 0..d {
            let res_s = residual(&s[l], &s_half[l]);
            if res_s > RICHARDSON_TOL {
                notes.push(format!(
                    "warning: diffusion column {} Jacobian of regime {} changes by {res_s:.2e} (relative) between h and h/2",
                    l + 1,
                    i + 1
                ));
            }
        }
        b_mats.push(b);
        sigma_mats.push(s);
    }

    let q_hat = model.rate_matrix(&vec![0.0; r])?;
    let g_star = estimate_g_star(model);
    let n_marks = if model.marks().degenerate_value().is_some() { 1 } else { PROBE_MARKS };
    notes.push(format!(
        "g_star probe: {PROBE_RADII} log-spaced radii in [1e-6, 1e2] x {PROBE_DIRECTIONS} random directions x {n_marks} marks"
    ));

    let lm = LinearizedModel {
        b_mats,
        sigma_mats,
        q_hat,
        g_star,
        jump_rate: model.jump_rate(),
        notes,
    };
    lm.validate()?;
    Ok(lm)
}

fn estimate_g_star(model: &RegimeModel) -> Vec<f64> {
    let r = model.dim_x();
    let mut rng = PathRng::auxiliary(0x6a5_7a2, 0);
    let directions: Vec<Vec<f64>> = (0..PROBE_DIRECTIONS)
        .map(|_| {
            let v: Vec<f64> = (0..r).map(|_| rng.normal()).collect();
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.into_iter().map(|a| a / n).collect()
        })
        .collect();
    let marks: Vec<f64> = match model.marks().degenerate_value() {
        Some(v) => vec![v],
        None => (0..PROBE_MARKS).map(|_| model.sample_mark(&mut rng)).collect(),
    };
    let mut x = vec![0.0; r];
    let mut g = vec![0.0; r];
    (0..model.num_regimes())
        .map(|i| {
            let mut best: f64 = 0.0;
            for k in 0..PROBE_RADII {
                let radius = 10f64.powf(-6.0 + 8.0 * k as f64 / (PROBE_RADII - 1) as f64);
                for dir in &directions {
                    for (xv, dv) in x.iter_mut().zip(dir) {
                        *xv = radius * dv;
                    }
                    let norm_x = x.iter().map(|a| a * a).sum::<f64>().sqrt();
                    for &gamma in &marks {
                        model.jump_into(&x, i, gamma, &mut g);
                        let norm_g = g.iter().map(|a| a * a).sum::<f64>().sqrt();
                        if norm_g.is_finite() {
                            best = best.max(norm_g / norm_x);
                        }
                    }
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_example, Example};

    #[test]
    fn ex62_linearization_matches_printed_values() {
        let lm = linearize(&builtin_example(Example::Ex62), DEFAULT_FD_STEP).unwrap();
        let b: Vec<f64> = lm.b_mats.iter().map(|m| m[(0, 0)]).collect();
        let s: Vec<f64> = lm.sigma_mats.iter().map(|m| m[0][(0, 0)]).collect();
        for (got, want) in b.iter().zip([2.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-6, "b = {b:?}");
        }
        for (got, want) in s.iter().zip([1.0, 3.0, 1.0]) {
            assert!((got - want).abs() < 1e-6, "sigma = {s:?}");
        }
        assert_eq!(lm.g_star, vec![1.0, 1.0, 1.0]);
        assert_eq!(lm.q_hat.rows()[0], vec![-4.0, 2.0, 2.0]);
        assert!(lm.notes.iter().all(|n| !n.starts_with("warning")));
    }

    #[test]
    fn zero_coefficients_give_zero_matrices() {
        let model = RegimeModel::builder(2, 1, 2).equilibrium(true).build().unwrap();
        let lm = linearize(&model, DEFAULT_FD_STEP).unwrap();
        assert!(lm.b_mats[0].iter().all(|&v| v == 0.0));
        assert!(lm.sigma_mats[0].iter().all(|s| s.iter().all(|&v| v == 0.0)));
        assert_eq!(lm.g_star, vec![0.0]);
    }

    #[test]
    fn drift_x_plus_sin_x_has_slope_two() {
        let model = RegimeModel::builder(1, 1, 1)
            .scalar_drift(|x, _| x + x.sin())
            .equilibrium(true)
            .build()
            .unwrap();
        let lm = linearize(&model, DEFAULT_FD_STEP).unwrap();
        assert!((lm.b_mats[0][(0, 0)] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn requires_equilibrium_and_positive_step() {
        let model = RegimeModel::builder(1, 1, 1).build().unwrap();
        assert_eq!(linearize(&model, 1e-5).unwrap_err(), Error::NoEquilibrium);
        let model = RegimeModel::builder(1, 1, 1).equilibrium(true).build().unwrap();
        assert!(linearize(&model, 0.0).is_err());
    }

    #[test]
    fn kinked_drift_triggers_richardson_warning() {
        // One-sided oscillation on the step scale: estimates at h and h/2 disagree.
        let model = RegimeModel::builder(1, 1, 1)
            .scalar_drift(|x, _| if x > 0.0 { (x * 1e5).sin() * 1e-5 } else { 0.0 })
            .equilibrium(true)
            .build()
            .unwrap();
        let lm = linearize(&model, 1e-5).unwrap();
        assert!(lm.notes.iter().any(|n| n.starts_with("warning: drift")));
    }

    #[test]
    fn matrix_drift_jacobian() {
        // b(x) = A x + (x_1^2, 0)
        let model = RegimeModel::builder(2, 1, 1)
            .drift(|x, _, out| {
                out[0] = -x[0] + 2.0 * x[1] + x[0] * x[0];
                out[1] = 0.5 * x[0] - 3.0 * x[1];
            })
            .equilibrium(true)
            .build()
            .unwrap();
        let lm = linearize(&model, DEFAULT_FD_STEP).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.5, -3.0]);
        assert!((&lm.b_mats[0] - want).abs().max() < 1e-8);
    }
}
