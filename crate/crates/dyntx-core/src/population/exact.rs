//! Exact backend: population probabilities by quadrature over the latent
//! normal law.
//!
//! A query event pins down some coordinates of `(Z, X, D, Y)` up to its last
//! constrained period. The evaluator enumerates every completion of the
//! constrained prefix, weighs it by the design law (instruments and shifters
//! are exogenous with known laws), and multiplies by the probability of the
//! latent rectangle that produces exactly that treatment and outcome path:
//! at each period, selection puts `V_t` on one side of the propensity
//! threshold and the outcome puts `U_t` on one side of the structural
//! threshold. Unconstrained trailing periods marginalize to one and are
//! never enumerated.
//!
//! Rectangles repeat heavily across queries (different conditioning events
//! share completions), so rectangle probabilities are cached under a packed
//! completion key, and whole joint probabilities under the event key.

use std::collections::HashMap;
use std::sync::RwLock;

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::model::{CorrMatrix, Horizon, StructuralModel};
use crate::numeric::{half_line, GaussLegendre, HalfLine, MvnRect};
use crate::tol::EXACT_MASS_FLOOR;

use super::event::Event;
use super::{BackendKind, CellStats, PopulationEvaluator};

/// Rectangle dimension is `2 * horizon`; above 3 periods the nested
/// quadrature cost grows out of test budgets.
const MAX_EXACT_HORIZON: usize = 3;

pub struct ExactEvaluator {
    model: StructuralModel,
    corr: CorrMatrix,
    rule: GaussLegendre,
    /// Completed-path rectangle probabilities, keyed by a packed
    /// `(z, x, d, y)` assignment of the enumerated prefix.
    rect_cache: RwLock<HashMap<u128, f64>>,
    /// Event-level joint probabilities, keyed by [`Event::pack`].
    joint_cache: RwLock<HashMap<u128, f64>>,
}

/// Build the quadrature backend. Requires the arm-invariant latent spec
/// (the observational law then depends on one normal vector with a known
/// correlation) and a horizon of at most [`MAX_EXACT_HORIZON`].
pub fn exact_evaluator(model: &StructuralModel, order: usize) -> Result<ExactEvaluator> {
    let violations = model.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidModel(format!(
            "refusing to evaluate an invalid model: {}",
            violations[0].message
        )));
    }
    let corr = model
        .latent
        .corr()
        .ok_or_else(|| {
            Error::UnsupportedLatent(
                "exact backend needs the arm-invariant latent spec".into(),
            )
        })?
        .clone();
    if model.t() > MAX_EXACT_HORIZON {
        return Err(Error::UnsupportedLatent(format!(
            "exact backend supports at most {MAX_EXACT_HORIZON} periods, model has {}",
            model.t()
        )));
    }
    Ok(ExactEvaluator {
        model: model.clone(),
        corr,
        rule: GaussLegendre::new(order),
        rect_cache: RwLock::new(HashMap::new()),
        joint_cache: RwLock::new(HashMap::new()),
    })
}

/// Completion key block for one period. Mirrors the [`Event::pack`] field
/// layout but is a distinct namespace: enumerated periods always have every
/// coordinate set, trailing periods are all-zero, and no completed block is
/// all-zero, so keys are injective.
fn key_block(t: usize, z: bool, x: usize, d: bool, y: bool) -> u128 {
    let block = (1 + y as u128)
        | ((1 + d as u128) << 2)
        | ((1 + z as u128) << 4)
        | ((x as u128) << 6);
    block << (12 * t)
}

/// Enumeration cursor: the next period and the realized history before it.
#[derive(Clone, Copy)]
struct Cursor {
    t: usize,
    y_hist: Bits,
    d_hist: Bits,
    weight: f64,
    key: u128,
}

/// Rectangle bounds accumulated along the current enumeration path.
struct Stack {
    dims: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Stack {
    fn push(&mut self, dim: usize, lo: f64, hi: f64) {
        self.dims.push(dim);
        self.lo.push(lo);
        self.hi.push(hi);
    }

    fn truncate(&mut self, depth: usize) {
        self.dims.truncate(depth);
        self.lo.truncate(depth);
        self.hi.truncate(depth);
    }
}

impl ExactEvaluator {
    /// Joint probability of an event under the observational law.
    fn joint(&self, e: &Event) -> Result<f64> {
        let t_star = match e.max_constrained() {
            None => return Ok(1.0),
            Some(m) => m + 1,
        };
        let pk = e.pack();
        if let Some(hit) = self.joint_cache.read().expect("joint lock").get(&pk) {
            return Ok(*hit);
        }
        let mut stack = Stack {
            dims: Vec::new(),
            lo: Vec::new(),
            hi: Vec::new(),
        };
        let cursor = Cursor {
            t: 0,
            y_hist: Bits::EMPTY,
            d_hist: Bits::EMPTY,
            weight: 1.0,
            key: 0,
        };
        let p = self
            .enumerate(e, t_star, cursor, &mut stack)?
            .clamp(0.0, 1.0);
        self.joint_cache.write().expect("joint lock").insert(pk, p);
        Ok(p)
    }

    fn enumerate(
        &self,
        e: &Event,
        t_star: usize,
        cur: Cursor,
        stack: &mut Stack,
    ) -> Result<f64> {
        if cur.t == t_star {
            return Ok(cur.weight * self.rect(cur.key, stack)?);
        }
        let t = cur.t;
        let t_len = self.model.t();
        let mut acc = 0.0;
        let zs: &[bool] = match e.z_at(t) {
            Some(z) => if z { &[true] } else { &[false] },
            None => &[false, true],
        };
        for &z_t in zs {
            let wz = self.model.z_prob(t, z_t);
            if wz == 0.0 {
                continue;
            }
            let pi = self.model.pi_at(t, cur.y_hist, cur.d_hist, z_t);
            let ds: &[bool] = match e.d_at(t) {
                Some(d) => if d { &[true] } else { &[false] },
                None => &[false, true],
            };
            for &d_t in ds {
                let (vl, vh) = if d_t {
                    (f64::NEG_INFINITY, pi)
                } else {
                    (pi, f64::INFINITY)
                };
                let v_depth = stack.dims.len();
                match half_line(vl, vh) {
                    HalfLine::Empty => continue,
                    HalfLine::Certain => {}
                    HalfLine::Dim(l, h) => stack.push(t_len + t, l, h),
                }
                let d_next = cur.d_hist.pushed(d_t);
                let xs: Vec<usize> = match e.x_at(t) {
                    Some(i) => vec![i],
                    None => (0..self.model.x_grid.k(t)).collect(),
                };
                for x_t in xs {
                    let wx = self.model.x_prob(t, x_t);
                    if wx == 0.0 {
                        continue;
                    }
                    let mu = self.model.mu_at(t, cur.y_hist, d_next, x_t);
                    let ys: &[bool] = match e.y_at(t) {
                        Some(y) => if y { &[true] } else { &[false] },
                        None => &[false, true],
                    };
                    for &y_t in ys {
                        let (ul, uh) = if y_t {
                            (f64::NEG_INFINITY, mu)
                        } else {
                            (mu, f64::INFINITY)
                        };
                        let u_depth = stack.dims.len();
                        match half_line(ul, uh) {
                            HalfLine::Empty => continue,
                            HalfLine::Certain => {}
                            HalfLine::Dim(l, h) => stack.push(t, l, h),
                        }
                        let next = Cursor {
                            t: t + 1,
                            y_hist: cur.y_hist.pushed(y_t),
                            d_hist: d_next,
                            weight: cur.weight * wz * wx,
                            key: cur.key | key_block(t, z_t, x_t, d_t, y_t),
                        };
                        acc += self.enumerate(e, t_star, next, stack)?;
                        stack.truncate(u_depth);
                    }
                }
                stack.truncate(v_depth);
            }
        }
        Ok(acc)
    }

    fn rect(&self, key: u128, stack: &Stack) -> Result<f64> {
        if stack.dims.is_empty() {
            return Ok(1.0);
        }
        if let Some(hit) = self.rect_cache.read().expect("rect lock").get(&key) {
            return Ok(*hit);
        }
        let sub = self.corr.submatrix(&stack.dims);
        let rect = MvnRect::new(&sub, stack.dims.len())?;
        let p = rect.prob(&stack.lo, &stack.hi, &self.rule);
        self.rect_cache.write().expect("rect lock").insert(key, p);
        Ok(p)
    }
}

impl PopulationEvaluator for ExactEvaluator {
    fn horizon(&self) -> Horizon {
        self.model.horizon
    }

    fn x_card(&self, t: usize) -> usize {
        self.model.x_grid.k(t)
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Exact
    }

    fn prob(&self, target: &Event, given: &Event) -> Result<CellStats> {
        for e in [target, given] {
            if e.len() != self.model.t() {
                return Err(Error::InvalidQuery(format!(
                    "event spans {} periods, model has {}",
                    e.len(),
                    self.model.t()
                )));
            }
            for t in self.model.horizon.periods() {
                if let Some(i) = e.x_at(t) {
                    if i >= self.model.x_grid.k(t) {
                        return Err(Error::InvalidQuery(format!(
                            "x index {i} out of range at period {t}"
                        )));
                    }
                }
            }
        }
        let den = self.joint(given)?;
        if den <= EXACT_MASS_FLOOR {
            return Err(Error::UnreachableCell(format!(
                "conditioning event [{given}] has probability {den:.2e}"
            )));
        }
        let p = match given.and(target) {
            None => 0.0,
            Some(joint) => (self.joint(&joint)? / den).clamp(0.0, 1.0),
        };
        Ok(CellStats::exact(p))
    }

    fn base_tol(&self) -> f64 {
        1e-9
    }

    fn stratum_restricted(&self, _w0: u8) -> Result<Box<dyn PopulationEvaluator>> {
        Err(Error::InvalidQuery(
            "the exact backend carries no baseline strata".into(),
        ))
    }
}
