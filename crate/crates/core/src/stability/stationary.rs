use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::RateMatrix;

/// Rates at or below this count as absent when testing irreducibility.
pub const EDGE_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryDistribution {
    pub mu: Vec<f64>,
}

/// `reach[i][j]`: `j` is reachable from `i` along edges `q_kl > threshold`.
#[allow(clippy::needless_range_loop)]
fn reachability(q: &RateMatrix) -> Vec<Vec<bool>> {
    let m = q.dim();
    let mut reach: Vec<Vec<bool>> = (0..m)
        .map(|i| (0..m).map(|j| i == j || q.get(i, j) > EDGE_THRESHOLD).collect())
        .collect();
    for k in 0..m {
        for i in 0..m {
            if reach[i][k] {
                for j in 0..m {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    reach
}

/// Communicating classes that no edge leaves, zero-based.
pub fn closed_classes(q: &RateMatrix) -> Vec<Vec<usize>> {
    let m = q.dim();
    let reach = reachability(q);
    let mut seen = vec![false; m];
    let mut out = Vec::new();
    for i in 0..m {
        if seen[i] {
            continue;
        }
        let class: Vec<usize> = (0..m).filter(|&j| reach[i][j] && reach[j][i]).collect();
        for &j in &class {
            seen[j] = true;
        }
        let closed = class.iter().all(|&a| (0..m).all(|b| !reach[a][b] || class.contains(&b)));
        if closed {
            out.push(class);
        }
    }
    out
}

pub fn is_irreducible(q: &RateMatrix) -> bool {
    reachability(q).iter().all(|row| row.iter().all(|&r| r))
}

/// Solves `μQ = 0`, `Σμ = 1` with the last balance equation replaced by the
/// normalization.
pub fn stationary_distribution(q: &RateMatrix) -> Result<StationaryDistribution> {
    let m = q.dim();
    if !is_irreducible(q) {
        return Err(Error::Reducible {
            classes: closed_classes(q)
                .into_iter()
                .map(|c| c.into_iter().map(|i| i + 1).collect())
                .collect(),
        });
    }
    let mut a = DMatrix::from_fn(m, m, |row, col| q.get(col, row));
    let mut rhs = DVector::zeros(m);
    for col in 0..m {
        a[(m - 1, col)] = 1.0;
    }
    rhs[m - 1] = 1.0;
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Precondition("singular balance system".into()))?;
    let mut mu: Vec<f64> = sol.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = mu.iter().sum();
    for v in mu.iter_mut() {
        *v /= total;
    }
    Ok(StationaryDistribution { mu })
}
