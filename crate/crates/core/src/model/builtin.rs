use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{MarkLaw, RateMatrix, RegimeModel};
use crate::error::{Error, Result};

/// The two worked scalar examples shipped with the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Example {
    /// Two regimes, constant generator, `λ = 1/8`, `g(x) = x`.
    Ex61,
    /// Three regimes, state-dependent generator, `λ = 1`, `g(x) = x`.
    Ex62,
}

impl Example {
    pub fn id(self) -> &'static str {
        match self {
            Example::Ex61 => "ex61",
            Example::Ex62 => "ex62",
        }
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Example {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ex61" => Ok(Example::Ex61),
            "ex62" => Ok(Example::Ex62),
            other => Err(Error::invalid(
                "example",
                format!("unknown example id {other:?}; expected ex61 or ex62"),
            )),
        }
    }
}

pub fn builtin_example(id: Example) -> RegimeModel {
    match id {
        Example::Ex61 => ex61(),
        Example::Ex62 => ex62(),
    }
    .expect("built-in examples are valid")
}

fn ex61() -> Result<RegimeModel> {
    let q = RateMatrix::from_rows(&[vec![-1.0, 1.0], vec![3.0, -3.0]])?;
    RegimeModel::builder(1, 2, 1)
        .name("ex61")
        .scalar_drift(|x, i| match i {
            0 => x * x.sin() / 8.0,
            _ => x * x.cos() / 2.0,
        })
        .scalar_diffusion(|x, i| match i {
            0 => 1.5 * x,
            _ => 0.5 * x,
        })
        .scalar_jump(|x, _, _| x)
        .jump_rate(1.0 / 8.0)
        .marks(MarkLaw::Degenerate(0.0))
        .constant_rates(q)
        .equilibrium(true)
        .build()
}

fn ex62_rates(x: f64, q: &mut [f64]) {
    let (s, c) = x.sin_cos();
    let ac = c.abs();
    let x2 = x * x / (1.0 + x * x);
    let ax = x.abs() / (1.0 + x.abs());
    q[0] = -3.0 - ac + s * s * c;
    q[1] = 1.0 + ac;
    q[2] = 2.0 - s * s * c;
    q[3] = 1.0;
    q[4] = -1.0 - x2;
    q[5] = x2;
    q[6] = 2.0 - s * c;
    q[7] = 1.0 - ax * c;
    q[8] = -3.0 + s * c + ax * c;
}

fn ex62() -> Result<RegimeModel> {
    RegimeModel::builder(1, 3, 1)
        .name("ex62")
        .scalar_drift(|x, i| match i {
            0 => x + x.sin(),
            1 => 2.0 * x + x * x.sin() * x.cos(),
            _ => 3.0 * x + x.sin().powi(2),
        })
        .scalar_diffusion(|x, i| match i {
            0 => x + x * x.sin(),
            1 => 3.0 * x + x * x.cos() * x.sin(),
            _ => x + x / (1.0 + x) * x.sin(),
        })
        .scalar_jump(|x, _, _| x)
        .jump_rate(1.0)
        .marks(MarkLaw::Degenerate(0.0))
        .rates(|x, q| ex62_rates(x[0], q))
        .equilibrium(true)
        .build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ex62_generator_at_origin() {
        let m = builtin_example(Example::Ex62);
        let q = m.rate_matrix(&[0.0]).unwrap();
        assert_eq!(
            q.rows(),
            vec![
                vec![-4.0, 2.0, 2.0],
                vec![1.0, -1.0, 0.0],
                vec![2.0, 1.0, -3.0]
            ]
        );
    }

    #[test]
    fn ex61_rows_sum_to_zero_anywhere() {
        let m = builtin_example(Example::Ex61);
        for x in [-50.0, -1.0, 0.3, 7.0, 1e6] {
            let q = m.rate_matrix(&[x]).unwrap();
            assert_eq!(q.rows(), vec![vec![-1.0, 1.0], vec![3.0, -3.0]]);
        }
    }

    #[test]
    fn examples_have_equilibrium_at_origin() {
        let m = builtin_example(Example::Ex61);
        assert_eq!(m.drift(&[0.0], 0), vec![0.0]);
        assert_eq!(m.diffusion(&[0.0], 1), vec![0.0]);
        assert!(m.has_equilibrium());
        assert_eq!(m.jump(&[2.5], 1, 0.0), vec![2.5]);
    }

    #[test]
    fn unknown_id_is_an_error() {
        assert!("ex63".parse::<Example>().is_err());
        assert_eq!("ex62".parse::<Example>().unwrap(), Example::Ex62);
    }
}
