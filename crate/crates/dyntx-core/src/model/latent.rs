//! Joint laws for the latent ranks driving outcomes and selection.
//!
//! Marginally every rank is standard normal; the specs below differ in how
//! ranks depend on each other and on the treatment arm:
//!
//! - `RankInvariant`: one rank `U_t` per period regardless of arm, and the
//!   full vector `(U_1..U_T, V_1..V_T)` is jointly normal with an explicit
//!   correlation matrix. This is the only spec the quadrature backend can
//!   integrate exactly.
//! - `RsGeneral`: a one-factor structure `U_t(d) = a_t A + b_t E_t(d)`,
//!   `V_t = c_t A + e_t H_t` with `A`, `E_t(d)`, `H_t` iid standard normal.
//!   The two arm ranks `U_t(0)`, `U_t(1)` differ but share a distribution
//!   given the factor, so ranks are similar across arms without being equal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::cholesky_lower;

/// Symmetric correlation matrix with unit diagonal, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct CorrMatrix {
    n: usize,
    vals: Vec<f64>,
}

impl CorrMatrix {
    /// Validates shape, symmetry, and the unit diagonal. Positive
    /// definiteness is checked separately (it is a model-level violation, not
    /// a construction error, so configs can be loaded and then diagnosed).
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut vals = vec![0.0; n * n];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidModel(format!(
                    "correlation row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v.abs() > 1.0 {
                    return Err(Error::InvalidModel(format!(
                        "correlation entry ({i},{j}) = {v} outside [-1, 1]"
                    )));
                }
                vals[i * n + j] = v;
            }
        }
        for i in 0..n {
            if (vals[i * n + i] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidModel(format!(
                    "correlation diagonal entry {i} is {}, expected 1",
                    vals[i * n + i]
                )));
            }
            for j in 0..i {
                if (vals[i * n + j] - vals[j * n + i]).abs() > 1e-12 {
                    return Err(Error::InvalidModel(format!(
                        "correlation entries ({i},{j}) and ({j},{i}) differ"
                    )));
                }
            }
        }
        Ok(CorrMatrix { n, vals })
    }

    /// Matrix dimension.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Entry `(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.vals[i * self.n + j]
    }

    /// Row-major storage.
    pub fn as_slice(&self) -> &[f64] {
        &self.vals
    }

    /// Row-major submatrix on the given index set (a normal marginal is
    /// obtained by deleting rows and columns).
    pub fn submatrix(&self, idx: &[usize]) -> Vec<f64> {
        let m = idx.len();
        let mut out = vec![0.0; m * m];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out[a * m + b] = self.get(i, j);
            }
        }
        out
    }

    /// True when the matrix is positive definite to working precision.
    pub fn is_positive_definite(&self) -> bool {
        cholesky_lower(&self.vals, self.n).is_ok()
    }
}

impl TryFrom<Vec<Vec<f64>>> for CorrMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        CorrMatrix::new(rows)
    }
}

impl From<CorrMatrix> for Vec<Vec<f64>> {
    fn from(m: CorrMatrix) -> Self {
        (0..m.n).map(|i| m.vals[i * m.n..(i + 1) * m.n].to_vec()).collect()
    }
}

/// Joint law of the latent ranks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatentSpec {
    /// Arm-invariant ranks `(U_1..U_T, V_1..V_T)` jointly normal with the
    /// given `2T x 2T` correlation matrix (U block first).
    RankInvariant { corr: CorrMatrix },
    /// One-factor arm-specific ranks; all loadings are per period and must
    /// satisfy `a^2 + b^2 = 1`, `c^2 + e^2 = 1` so marginals stay standard.
    RsGeneral { a: Vec<f64>, b: Vec<f64>, c: Vec<f64>, e: Vec<f64> },
}

impl LatentSpec {
    /// Horizon length the spec is sized for.
    pub fn horizon_len(&self) -> usize {
        match self {
            LatentSpec::RankInvariant { corr } => corr.dim() / 2,
            LatentSpec::RsGeneral { a, .. } => a.len(),
        }
    }

    /// True for the arm-invariant jointly normal spec.
    pub fn is_rank_invariant(&self) -> bool {
        matches!(self, LatentSpec::RankInvariant { .. })
    }

    /// The correlation matrix, when the spec has one.
    pub fn corr(&self) -> Option<&CorrMatrix> {
        match self {
            LatentSpec::RankInvariant { corr } => Some(corr),
            LatentSpec::RsGeneral { .. } => None,
        }
    }

    /// Spec-level structural problems (shape and unit-variance violations).
    pub fn violations(&self, horizon: usize) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            LatentSpec::RankInvariant { corr } => {
                if corr.dim() != 2 * horizon {
                    out.push(format!(
                        "correlation matrix is {}x{0}, expected {} for horizon {horizon}",
                        corr.dim(),
                        2 * horizon
                    ));
                }
                if !corr.is_positive_definite() {
                    out.push("correlation matrix is not positive definite".into());
                }
            }
            LatentSpec::RsGeneral { a, b, c, e } => {
                for (name, v) in [("a", a), ("b", b), ("c", c), ("e", e)] {
                    if v.len() != horizon {
                        out.push(format!(
                            "loading vector {name} has {} entries, expected {horizon}",
                            v.len()
                        ));
                    }
                    if v.iter().any(|x| !x.is_finite()) {
                        out.push(format!("loading vector {name} has a non-finite entry"));
                    }
                }
                if a.len() == b.len() {
                    for t in 0..a.len() {
                        if (a[t] * a[t] + b[t] * b[t] - 1.0).abs() > 1e-9 {
                            out.push(format!(
                                "outcome loadings at period {t} violate a^2 + b^2 = 1"
                            ));
                        }
                    }
                }
                if c.len() == e.len() {
                    for t in 0..c.len() {
                        if (c[t] * c[t] + e[t] * e[t] - 1.0).abs() > 1e-9 {
                            out.push(format!(
                                "selection loadings at period {t} violate c^2 + e^2 = 1"
                            ));
                        }
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corr_matrix_rejects_malformed_input() {
        assert!(CorrMatrix::new(vec![vec![1.0, 0.5], vec![0.5]]).is_err());
        assert!(CorrMatrix::new(vec![vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
        assert!(CorrMatrix::new(vec![vec![0.9, 0.5], vec![0.5, 1.0]]).is_err());
        assert!(CorrMatrix::new(vec![vec![1.0, 1.5], vec![1.5, 1.0]]).is_err());
    }

    #[test]
    fn submatrix_picks_rows_and_columns() {
        let m = CorrMatrix::new(vec![
            vec![1.0, 0.1, 0.2],
            vec![0.1, 1.0, 0.3],
            vec![0.2, 0.3, 1.0],
        ])
        .unwrap();
        assert_eq!(m.submatrix(&[0, 2]), vec![1.0, 0.2, 0.2, 1.0]);
    }

    #[test]
    fn unit_variance_constraint_is_enforced() {
        let good = LatentSpec::RsGeneral {
            a: vec![0.6, 0.8],
            b: vec![0.8, 0.6],
            c: vec![1.0, 0.0],
            e: vec![0.0, 1.0],
        };
        assert!(good.violations(2).is_empty());
        let bad = LatentSpec::RsGeneral {
            a: vec![0.6, 0.8],
            b: vec![0.9, 0.6],
            c: vec![1.0, 0.0],
            e: vec![0.0, 1.0],
        };
        assert_eq!(bad.violations(2).len(), 1);
    }
}
