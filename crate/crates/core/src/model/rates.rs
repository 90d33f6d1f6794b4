use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Absolute row-sum tolerance, scaled by `max(1, Σ_j |q_ij|)`.
const ROW_SUM_TOL: f64 = 1e-12;

/// A single q-property failure. Indices are zero-based; `Display` is one-based.
#[derive(Debug, Clone, PartialEq)]
pub enum QViolation {
    NonFinite { row: usize, col: usize },
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },
    RowSum { row: usize, sum: f64 },
}

impl fmt::Display for QViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QViolation::NonFinite { row, col } => {
                write!(f, "non-finite entry at ({},{})", row + 1, col + 1)
            }
            QViolation::NegativeOffDiagonal { row, col, value } => write!(
                f,
                "negative off-diagonal {value} at ({},{})",
                row + 1,
                col + 1
            ),
            QViolation::RowSum { row, sum } => {
                write!(f, "row {} sums to {sum:e}, not 0", row + 1)
            }
        }
    }
}

/// Outcome of [`validate_q_property`]; violations are data, not errors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QCheck {
    pub violations: Vec<QViolation>,
}

impl QCheck {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for QCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_pass() {
            return f.write_str("pass");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Checks a row-major `m × m` matrix for nonnegative off-diagonal entries,
/// zero row sums and finiteness.
pub fn validate_q_property(m: usize, entries: &[f64]) -> QCheck {
    assert_eq!(entries.len(), m * m, "rate matrix must be m x m");
    let mut violations = Vec::new();
    for row in 0..m {
        let r = &entries[row * m..(row + 1) * m];
        let mut finite = true;
        for (col, &v) in r.iter().enumerate() {
            if !v.is_finite() {
                violations.push(QViolation::NonFinite { row, col });
                finite = false;
            } else if col != row && v < 0.0 {
                violations.push(QViolation::NegativeOffDiagonal { row, col, value: v });
            }
        }
        if finite {
            let sum: f64 = r.iter().sum();
            let scale = r.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            if sum.abs() > ROW_SUM_TOL * scale {
                violations.push(QViolation::RowSum { row, sum });
            }
        }
    }
    QCheck { violations }
}

/// Generator matrix of a finite-state chain; satisfies the q-property by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    m: usize,
    entries: Vec<f64>,
}

impl RateMatrix {
    pub fn new(m: usize, entries: Vec<f64>) -> Result<Self> {
        if m == 0 || entries.len() != m * m {
            return Err(Error::invalid(
                "rate_matrix",
                format!("expected {m}x{m} entries, got {}", entries.len()),
            ));
        }
        let check = validate_q_property(m, &entries);
        if !check.is_pass() {
            return Err(Error::QProperty(check.to_string()));
        }
        Ok(Self { m, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::invalid("rate_matrix", "rows must have length m"));
        }
        Self::new(m, rows.concat())
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            m,
            entries: vec![0.0; m * m],
        }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.m..(i + 1) * self.m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    /// `-q_ii`, the total rate of leaving regime `i`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        -self.get(i, i)
    }

    pub fn max_exit_rate(&self) -> f64 {
        (0..self.m).map(|i| self.exit_rate(i)).fold(0.0, f64::max)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.m).map(|r| r.to_vec()).collect()
    }

    /// Relabels regimes: entry `(i, j)` of the result is `q_{perm[i], perm[j]}`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let m = self.m;
        let mut entries = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                entries[i * m + j] = self.get(perm[i], perm[j]);
            }
        }
        Self { m, entries }
    }
}

impl Serialize for RateMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ex62_q_hat_passes() {
        let q = [-4.0, 2.0, 2.0, 1.0, -1.0, 0.0, 2.0, 1.0, -3.0];
        assert!(validate_q_property(3, &q).is_pass());
    }

    #[test]
    fn zero_matrix_passes() {
        assert!(validate_q_property(4, &[0.0; 16]).is_pass());
    }

    #[test]
    fn constructed_violation_is_reported() {
        // ((-1, -1), (1, 1)): the first row also fails its row sum.
        let check = validate_q_property(2, &[-1.0, -1.0, 1.0, 1.0]);
        assert_eq!(
            check.violations,
            vec![
                QViolation::NegativeOffDiagonal { row: 0, col: 1, value: -1.0 },
                QViolation::RowSum { row: 0, sum: -2.0 },
                QViolation::RowSum { row: 1, sum: 2.0 },
            ]
        );
        let text = check.to_string();
        assert!(text.contains("(1,2)"));
        assert!(text.contains("row 2"));
    }

    #[test]
    fn non_finite_entries_flagged() {
        let check = validate_q_property(2, &[f64::NAN, 0.0, 0.0, 0.0]);
        assert_eq!(check.violations, vec![QViolation::NonFinite { row: 0, col: 0 }]);
    }

    #[test]
    fn constructor_enforces_q_property() {
        assert!(RateMatrix::new(2, vec![-1.0, 1.0, 3.0, -3.0]).is_ok());
        assert!(matches!(
            RateMatrix::new(2, vec![-1.0, 2.0, 3.0, -3.0]),
            Err(Error::QProperty(_))
        ));
        assert!(RateMatrix::new(2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn permutation_relabels() {
        let q = RateMatrix::from_rows(&[vec![-1.0, 1.0], vec![3.0, -3.0]]).unwrap();
        let p = q.permuted(&[1, 0]);
        assert_eq!(p.rows(), vec![vec![-3.0, 3.0], vec![1.0, -1.0]]);
        assert_eq!(q.max_exit_rate(), 3.0);
    }
}
