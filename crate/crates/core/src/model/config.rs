//! JSON model definitions.
//!
//! ```json
//! {
//!   "name": "damped",
//!   "dim_x": 1, "num_regimes": 2, "dim_w": 1,
//!   "has_equilibrium": true,
//!   "drift": [["-x"], ["-2*x"]],
//!   "diffusion": ["0.5*x"],
//!   "jump": ["-0.5*x"],
//!   "jump_rate": 0.25,
//!   "marks": {"kind": "degenerate", "value": 0},
//!   "rate_matrix": [["", "1"], ["3*x^2/(1+x^2)", ""]]
//! }
//! ```
//!
//! Coefficient lists are either shared by all regimes (use `i` to branch) or
//! given per regime. Diffusion entries are the row-major `r × d` matrix. An
//! empty diagonal rate entry is filled in as minus the off-diagonal row sum.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::expr::Expr;
use super::{MarkLaw, RegimeModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Number(f64),
    Expr(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientList {
    Shared(Vec<Coefficient>),
    PerRegime(Vec<Vec<Coefficient>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MarkConfig {
    Degenerate { value: f64 },
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, std_dev: f64 },
}

impl Default for MarkConfig {
    fn default() -> Self {
        MarkConfig::Degenerate { value: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub dim_x: usize,
    pub num_regimes: usize,
    #[serde(default = "one")]
    pub dim_w: usize,
    #[serde(default)]
    pub has_equilibrium: bool,
    pub drift: CoefficientList,
    pub diffusion: CoefficientList,
    #[serde(default)]
    pub jump: Option<CoefficientList>,
    #[serde(default)]
    pub jump_rate: f64,
    #[serde(default)]
    pub marks: MarkConfig,
    pub rate_matrix: Vec<Vec<Coefficient>>,
}

fn default_name() -> String {
    "config".into()
}

fn one() -> usize {
    1
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build(&self) -> Result<RegimeModel> {
        let (r, m, d) = (self.dim_x, self.num_regimes, self.dim_w);
        if r == 0 {
            return Err(Error::invalid("dim_x", "must be >= 1"));
        }
        if m == 0 {
            return Err(Error::invalid("num_regimes", "must be >= 1"));
        }
        if d == 0 {
            return Err(Error::invalid("dim_w", "must be >= 1"));
        }
        if !(self.jump_rate.is_finite() && self.jump_rate >= 0.0) {
            return Err(Error::invalid(
                "jump_rate",
                format!("must be finite and >= 0, got {}", self.jump_rate),
            ));
        }
        let drift = Arc::new(compile_list("drift", &self.drift, m, r, r, false)?);
        let diffusion = Arc::new(compile_list("diffusion", &self.diffusion, m, r * d, r, false)?);
        let jump = match &self.jump {
            Some(list) => Some(Arc::new(compile_list("jump", list, m, r, r, true)?)),
            None => None,
        };
        let rates = Arc::new(compile_rates(&self.rate_matrix, m, r)?);

        let marks = match self.marks {
            MarkConfig::Degenerate { value } => MarkLaw::Degenerate(value),
            MarkConfig::Uniform { low, high } => MarkLaw::Uniform { low, high },
            MarkConfig::Normal { mean, std_dev } => MarkLaw::Normal { mean, std_dev },
        };

        let mut builder = RegimeModel::builder(r, m, d)
            .name(self.name.clone())
            .jump_rate(self.jump_rate)
            .marks(marks)
            .equilibrium(self.has_equilibrium);
        {
            let drift = drift.clone();
            builder = builder.drift(move |x, i, out| eval_into(&drift[i], x, i, 0.0, out));
        }
        {
            let diffusion = diffusion.clone();
            builder =
                builder.diffusion(move |x, i, out| eval_into(&diffusion[i], x, i, 0.0, out));
        }
        if let Some(jump) = jump {
            builder = builder.jump(move |x, i, gamma, out| eval_into(&jump[i], x, i, gamma, out));
        }
        builder = builder.rates(move |x, out| {
            for (k, e) in rates.iter().enumerate() {
                out[k] = match e {
                    Some(e) => e.eval(x, 0.0, 0.0),
                    None => f64::NAN,
                };
            }
            // Auto diagonals.
            for row in 0..m {
                if rates[row * m + row].is_none() {
                    let s: f64 = (0..m).filter(|&j| j != row).map(|j| out[row * m + j]).sum();
                    out[row * m + row] = -s;
                }
            }
        });
        builder.build()
    }
}

fn eval_into(exprs: &[Expr], x: &[f64], regime: usize, gamma: f64, out: &mut [f64]) {
    let label = (regime + 1) as f64;
    for (o, e) in out.iter_mut().zip(exprs) {
        *o = e.eval(x, label, gamma);
    }
}

fn compile_one(field: &str, c: &Coefficient, dim_x: usize, allow_gamma: bool) -> Result<Expr> {
    let e = match c {
        Coefficient::Number(v) => Expr::Num(*v),
        Coefficient::Expr(s) => {
            Expr::parse(s).map_err(|e| Error::invalid(field, e.to_string()))?
        }
    };
    if let Some(k) = e.max_state_index() {
        if k >= dim_x {
            return Err(Error::invalid(
                field,
                format!("references x[{}] but dim_x = {dim_x}", k + 1),
            ));
        }
    }
    if !allow_gamma && e.uses_gamma() {
        return Err(Error::invalid(field, "gamma is only available in jump coefficients"));
    }
    Ok(e)
}

fn compile_list(
    field: &str,
    list: &CoefficientList,
    m: usize,
    len: usize,
    dim_x: usize,
    allow_gamma: bool,
) -> Result<Vec<Vec<Expr>>> {
    let compile_row = |regime: Option<usize>, row: &[Coefficient]| -> Result<Vec<Expr>> {
        if row.len() != len {
            let at = regime.map_or(String::new(), |i| format!("[{}]", i + 1));
            return Err(Error::invalid(
                format!("{field}{at}"),
                format!("expected {len} entries, got {}", row.len()),
            ));
        }
        row.iter()
            .enumerate()
            .map(|(k, c)| {
                let name = match regime {
                    Some(i) => format!("{field}[{}][{}]", i + 1, k + 1),
                    None => format!("{field}[{}]", k + 1),
                };
                compile_one(&name, c, dim_x, allow_gamma)
            })
            .collect()
    };
    match list {
        CoefficientList::Shared(row) => {
            let row = compile_row(None, row)?;
            Ok(vec![row; m])
        }
        CoefficientList::PerRegime(rows) => {
            if rows.len() != m {
                return Err(Error::invalid(
                    field,
                    format!("expected {m} per-regime lists, got {}", rows.len()),
                ));
            }
            rows.iter()
                .enumerate()
                .map(|(i, row)| compile_row(Some(i), row))
                .collect()
        }
    }
}

fn compile_rates(rows: &[Vec<Coefficient>], m: usize, dim_x: usize) -> Result<Vec<Option<Expr>>> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(Error::invalid("rate_matrix", format!("must be {m}x{m}")));
    }
    let mut out = Vec::with_capacity(m * m);
    for (i, row) in rows.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            let blank = matches!(c, Coefficient::Expr(s) if s.trim().is_empty());
            if blank {
                if i != j {
                    return Err(Error::invalid(
                        format!("rate_matrix[{}][{}]", i + 1, j + 1),
                        "only diagonal entries may be left empty",
                    ));
                }
                out.push(None);
            } else {
                let name = format!("rate_matrix[{}][{}]", i + 1, j + 1);
                out.push(Some(compile_one(&name, c, dim_x, false)?));
            }
        }
    }
    Ok(out)
}
