//! The structural model and its hard validity checks.

use serde::{Deserialize, Serialize};

use crate::bits::{Bits, MAX_LEN};
use crate::error::{Error, Result};

use super::latent::LatentSpec;
use super::tables::{MuTable, PiTable};

/// Number of periods, between 1 and [`MAX_LEN`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Horizon(usize);

impl Horizon {
    pub fn new(t: usize) -> Result<Self> {
        if t == 0 || t > MAX_LEN {
            return Err(Error::InvalidModel(format!(
                "horizon {t} outside the supported range 1..={MAX_LEN}"
            )));
        }
        Ok(Horizon(t))
    }

    /// Number of periods.
    pub fn get(self) -> usize {
        self.0
    }

    /// Iterator `0..T` over period indices.
    pub fn periods(self) -> std::ops::Range<usize> {
        0..self.0
    }

    /// Index of the terminal period.
    pub fn terminal(self) -> usize {
        self.0 - 1
    }
}

impl TryFrom<usize> for Horizon {
    type Error = Error;
    fn try_from(t: usize) -> Result<Self> {
        Horizon::new(t)
    }
}

impl From<Horizon> for usize {
    fn from(h: Horizon) -> usize {
        h.0
    }
}

/// Maximum shifter grid points per period (event keys pack indices in 6 bits).
pub const MAX_GRID: usize = 32;

/// Per-period shifter grids. Values are labels carried through configs and
/// reports; all engine logic works on grid indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct XGrid {
    values: Vec<Vec<f64>>,
}

impl XGrid {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        for (t, grid) in values.iter().enumerate() {
            if grid.is_empty() || grid.len() > MAX_GRID {
                return Err(Error::InvalidModel(format!(
                    "shifter grid at period {t} has {} points, expected 1..={MAX_GRID}",
                    grid.len()
                )));
            }
            if grid.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "shifter grid at period {t} has a non-finite value"
                )));
            }
            if grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidModel(format!(
                    "shifter grid at period {t} is not strictly increasing"
                )));
            }
        }
        Ok(XGrid { values })
    }

    /// Number of periods covered.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Grid size at period `t`.
    pub fn k(&self, t: usize) -> usize {
        self.values[t].len()
    }

    /// Grid value at period `t`, index `i`.
    pub fn value(&self, t: usize, i: usize) -> f64 {
        self.values[t][i]
    }

    /// All grid values at period `t`.
    pub fn values_at(&self, t: usize) -> &[f64] {
        &self.values[t]
    }
}

impl TryFrom<Vec<Vec<f64>>> for XGrid {
    type Error = Error;
    fn try_from(v: Vec<Vec<f64>>) -> Result<Self> {
        XGrid::new(v)
    }
}

impl From<XGrid> for Vec<Vec<f64>> {
    fn from(g: XGrid) -> Self {
        g.values
    }
}

/// A structural violation found by [`StructuralModel::validate`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Violation {
    /// Stable machine-readable slug.
    pub code: String,
    /// Human-readable description with the offending location.
    pub message: String,
}

impl Violation {
    fn new(code: &str, message: impl Into<String>) -> Self {
        Violation { code: code.into(), message: message.into() }
    }
}

/// A dynamic discrete structural model.
///
/// Periods are 0-based. In every period `t`:
///
/// ```text
/// D_t = 1{ pi_t(Y^{t-1}, D^{t-1}, Z_t) >= V_t }
/// Y_t = 1{ mu_t(Y^{t-1}, D^t, X_t)   >= U_t(D_t) }
/// ```
///
/// with `Z_t` an exogenous binary instrument, `X_t` an exogenous discrete
/// shifter, and `(U, V)` latent ranks with standard normal marginals whose
/// joint law is [`LatentSpec`]. `Z` and `X` are mutually independent and
/// independent of the ranks, drawn independently across periods from `z_law`
/// and `x_law`.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuralModel {
    pub horizon: Horizon,
    pub x_grid: XGrid,
    /// Per period: distribution over grid indices.
    pub x_law: Vec<Vec<f64>>,
    /// Per period: probability the instrument is 1.
    pub z_law: Vec<f64>,
    pub mu: Vec<MuTable>,
    pub pi: Vec<PiTable>,
    pub latent: LatentSpec,
    /// Outcome is absorbing: `mu_t = +inf` whenever the last outcome was 1.
    pub irreversible_y: bool,
    /// Treatment is absorbing: `pi_t = +inf` whenever the last treatment was 1.
    pub irreversible_d: bool,
}

impl StructuralModel {
    /// Number of periods.
    pub fn t(&self) -> usize {
        self.horizon.get()
    }

    /// Outcome threshold at period `t`.
    pub fn mu_at(&self, t: usize, y_prev: Bits, d: Bits, x: usize) -> f64 {
        self.mu[t].get(y_prev, d, x)
    }

    /// Selection threshold at period `t`.
    pub fn pi_at(&self, t: usize, y_prev: Bits, d_prev: Bits, z: bool) -> f64 {
        self.pi[t].get(y_prev, d_prev, z)
    }

    /// `Pr[Z_t = z]`.
    pub fn z_prob(&self, t: usize, z: bool) -> f64 {
        if z {
            self.z_law[t]
        } else {
            1.0 - self.z_law[t]
        }
    }

    /// `Pr[X_t = grid index i]`.
    pub fn x_prob(&self, t: usize, i: usize) -> f64 {
        self.x_law[t][i]
    }

    /// All full shifter assignments `(x_0, ..., x_{T-1})` in lexicographic
    /// order, with their model probabilities.
    pub fn x_cells(&self) -> Vec<(Vec<usize>, f64)> {
        let mut out = vec![(Vec::new(), 1.0)];
        for t in self.horizon.periods() {
            let mut next = Vec::with_capacity(out.len() * self.x_grid.k(t));
            for (cell, p) in &out {
                for i in 0..self.x_grid.k(t) {
                    let mut c = cell.clone();
                    c.push(i);
                    next.push((c, p * self.x_prob(t, i)));
                }
            }
            out = next;
        }
        out
    }

    /// Structural problems: wrong shapes, invalid laws, non-PD correlation,
    /// NaN thresholds, and broken absorbing-state constraints. An empty
    /// result means the model is well-formed (identification assumptions are
    /// diagnosed separately, see the report module).
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let t_len = self.t();

        for (name, len) in [
            ("x_grid", self.x_grid.len()),
            ("x_law", self.x_law.len()),
            ("z_law", self.z_law.len()),
            ("mu", self.mu.len()),
            ("pi", self.pi.len()),
        ] {
            if len != t_len {
                out.push(Violation::new(
                    "shape",
                    format!("{name} covers {len} periods, expected {t_len}"),
                ));
            }
        }
        if !out.is_empty() {
            return out; // later checks index by period and would panic
        }

        for t in self.horizon.periods() {
            if self.mu[t].period() != t || self.mu[t].k() != self.x_grid.k(t) {
                out.push(Violation::new(
                    "shape",
                    format!("mu table at period {t} has mismatched dimensions"),
                ));
            }
            if self.pi[t].period() != t {
                out.push(Violation::new(
                    "shape",
                    format!("pi table at period {t} has mismatched dimensions"),
                ));
            }
            let p = self.z_law[t];
            if !(0.0..=1.0).contains(&p) {
                out.push(Violation::new(
                    "law",
                    format!("z law at period {t} is {p}, outside [0, 1]"),
                ));
            }
            let law = &self.x_law[t];
            if law.len() != self.x_grid.k(t) {
                out.push(Violation::new(
                    "law",
                    format!("x law at period {t} has {} entries, expected {}",
                        law.len(), self.x_grid.k(t)),
                ));
            } else {
                if law.iter().any(|&q| !(0.0..=1.0).contains(&q)) {
                    out.push(Violation::new(
                        "law",
                        format!("x law at period {t} has entries outside [0, 1]"),
                    ));
                }
                let sum: f64 = law.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    out.push(Violation::new(
                        "law",
                        format!("x law at period {t} sums to {sum}, expected 1"),
                    ));
                }
            }
            if self.mu[t].values().iter().any(|v| v.is_nan()) {
                out.push(Violation::new("nan", format!("mu table at period {t} has NaN")));
            }
            if self.pi[t].values().iter().any(|v| v.is_nan()) {
                out.push(Violation::new("nan", format!("pi table at period {t} has NaN")));
            }
        }

        for msg in self.latent.violations(t_len) {
            out.push(Violation::new("latent", msg));
        }

        if self.irreversible_y {
            out.extend(self.absorbing_violations(true));
        }
        if self.irreversible_d {
            out.extend(self.absorbing_violations(false));
        }
        out
    }

    fn absorbing_violations(&self, outcome: bool) -> Vec<Violation> {
        let mut out = Vec::new();
        for t in 1..self.t() {
            for y in Bits::enumerate(t) {
                if outcome {
                    if !y.get(t - 1) {
                        continue;
                    }
                    for d in Bits::enumerate(t + 1) {
                        for x in 0..self.x_grid.k(t) {
                            if self.mu_at(t, y, d, x) != f64::INFINITY {
                                out.push(Violation::new(
                                    "absorbing",
                                    format!(
                                        "irreversible outcome needs mu = +inf at \
                                         t={t}, y={y}, d={d}, x={x}"
                                    ),
                                ));
                            }
                        }
                    }
                } else {
                    for d in Bits::enumerate(t) {
                        if !d.get(t - 1) {
                            continue;
                        }
                        for z in [false, true] {
                            if self.pi_at(t, y, d, z) != f64::INFINITY {
                                out.push(Violation::new(
                                    "absorbing",
                                    format!(
                                        "irreversible treatment needs pi = +inf at \
                                         t={t}, y={y}, d={d}, z={}",
                                        z as u8
                                    ),
                                ));
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Validate and return the model, or the first violations as an error.
    pub fn checked(self) -> Result<Self> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(self)
        } else {
            let summary: Vec<String> =
                violations.iter().take(4).map(|v| v.message.clone()).collect();
            Err(Error::InvalidModel(format!(
                "{} violation(s): {}",
                violations.len(),
                summary.join("; ")
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;

    #[test]
    fn horizon_bounds() {
        assert!(Horizon::new(0).is_err());
        assert!(Horizon::new(9).is_err());
        assert_eq!(Horizon::new(3).unwrap().terminal(), 2);
    }

    #[test]
    fn xgrid_rejects_bad_grids() {
        assert!(XGrid::new(vec![vec![]]).is_err());
        assert!(XGrid::new(vec![vec![0.0, 0.0]]).is_err());
        assert!(XGrid::new(vec![vec![1.0, 0.0]]).is_err());
        assert!(XGrid::new(vec![vec![0.0, f64::NAN]]).is_err());
        assert!(XGrid::new(vec![(0..40).map(f64::from).collect()]).is_err());
    }

    #[test]
    fn example_model_is_valid() {
        let m = presets::example_model();
        let violations = m.validate();
        assert!(violations.is_empty(), "{violations:?}");
    }

    #[test]
    fn x_cells_enumerate_with_law_weights() {
        let m = presets::example_model();
        let cells = m.x_cells();
        assert_eq!(cells.len(), 25);
        let total: f64 = cells.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(cells[0].0, vec![0, 0]);
        assert_eq!(cells[7].0, vec![1, 2]);
    }

    #[test]
    fn broken_law_is_flagged() {
        let mut m = presets::example_model();
        m.z_law[0] = 1.5;
        m.x_law[1][0] = 0.5;
        let v = m.validate();
        assert!(v.iter().any(|v| v.code == "law" && v.message.contains("z law")));
        assert!(v.iter().any(|v| v.code == "law" && v.message.contains("sums to")));
        assert!(m.checked().is_err());
    }
}
