//! Panel simulation and brute-force potential-outcome oracles.
//!
//! Simulation is the ground truth everything else is tested against: the
//! oracles in [`oracle`] compute potential-outcome quantities by directly
//! forcing treatments in the structural model (by Monte Carlo or by
//! quadrature over the latent law), entirely bypassing the identification
//! machinery.
//!
//! Determinism: each individual gets its own ChaCha stream derived from the
//! panel seed, so results are byte-identical regardless of thread count or
//! scheduling.

pub mod baseline;
pub mod oracle;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bits::{Bits, MAX_LEN};
use crate::error::{Error, Result};
use crate::model::{LatentSpec, StructuralModel};
use crate::population::PanelData;
use crate::population::Row;

/// Latent ranks for one individual: both treatment arms per period.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LatentDraw {
    pub u0: [f64; MAX_LEN],
    pub u1: [f64; MAX_LEN],
    pub v: [f64; MAX_LEN],
}

impl LatentDraw {
    pub fn u(&self, t: usize, arm: bool) -> f64 {
        if arm {
            self.u1[t]
        } else {
            self.u0[t]
        }
    }
}

/// Latent sampler with the correlation factorization precomputed.
pub(crate) struct Sampler<'m> {
    model: &'m StructuralModel,
    /// Cholesky factor of the joint rank correlation, for the arm-invariant
    /// spec.
    chol: Option<Vec<f64>>,
}

impl<'m> Sampler<'m> {
    pub fn new(model: &'m StructuralModel) -> Result<Self> {
        let chol = match &model.latent {
            LatentSpec::RankInvariant { corr } => {
                Some(crate::numeric::cholesky_lower(corr.as_slice(), corr.dim())?)
            }
            LatentSpec::RsGeneral { .. } => None,
        };
        Ok(Sampler { model, chol })
    }

    /// Draw the full latent vector. Consumes a fixed number of uniforms per
    /// call so parallel callers on per-individual streams stay reproducible.
    pub fn draw(&self, rng: &mut impl Rng) -> LatentDraw {
        let t_len = self.model.t();
        let mut draw = LatentDraw {
            u0: [0.0; MAX_LEN],
            u1: [0.0; MAX_LEN],
            v: [0.0; MAX_LEN],
        };
        match (&self.model.latent, &self.chol) {
            (LatentSpec::RankInvariant { .. }, Some(chol)) => {
                let n = 2 * t_len;
                let z: Vec<f64> = (0..n).map(|_| std_normal(rng)).collect();
                for i in 0..n {
                    let mut s = 0.0;
                    for k in 0..=i {
                        s += chol[i * n + k] * z[k];
                    }
                    if i < t_len {
                        draw.u0[i] = s;
                        draw.u1[i] = s;
                    } else {
                        draw.v[i - t_len] = s;
                    }
                }
            }
            (LatentSpec::RsGeneral { a, b, c, e }, _) => {
                let alpha = std_normal(rng);
                for t in 0..t_len {
                    let e0 = std_normal(rng);
                    let e1 = std_normal(rng);
                    let eta = std_normal(rng);
                    draw.u0[t] = a[t] * alpha + b[t] * e0;
                    draw.u1[t] = a[t] * alpha + b[t] * e1;
                    draw.v[t] = c[t] * alpha + e[t] * eta;
                }
            }
            _ => unreachable!("sampler construction fixes the pairing"),
        }
        draw
    }
}

/// Standard normal via the inverse CDF, one uniform per draw.
fn std_normal(rng: &mut impl Rng) -> f64 {
    crate::numeric::norm_quantile(rng.random::<f64>())
}

/// Draw the design variables (instruments and shifters) from the model law.
pub(crate) fn draw_design(
    model: &StructuralModel,
    rng: &mut impl Rng,
) -> (u8, [u8; MAX_LEN]) {
    let mut z = 0u8;
    let mut x = [0u8; MAX_LEN];
    for t in model.horizon.periods() {
        if rng.random_bool(model.z_law[t]) {
            z |= 1 << t;
        }
    }
    for t in model.horizon.periods() {
        x[t] = draw_categorical(&model.x_law[t], rng) as u8;
    }
    (z, x)
}

fn draw_categorical(law: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in law.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    law.len() - 1
}

/// Run the selection and outcome equations forward observationally.
pub(crate) fn roll_forward(
    model: &StructuralModel,
    latents: &LatentDraw,
    z: u8,
    x: &[u8; MAX_LEN],
) -> (u8, u8) {
    let mut d_bits = Bits::EMPTY;
    let mut y_bits = Bits::EMPTY;
    for t in model.horizon.periods() {
        let z_t = (z >> t) & 1 == 1;
        let pi = model.pi_at(t, y_bits, d_bits, z_t);
        let d_t = pi >= latents.v[t];
        d_bits = d_bits.pushed(d_t);
        let mu = model.mu_at(t, y_bits, d_bits, x[t] as usize);
        let y_t = mu >= latents.u(t, d_t);
        y_bits = y_bits.pushed(y_t);
    }
    (d_bits.raw(), y_bits.raw())
}

/// One observational individual.
pub(crate) fn draw_row(
    model: &StructuralModel,
    sampler: &Sampler,
    rng: &mut impl Rng,
    strata: u8,
) -> Row {
    let w0 = if strata > 1 { rng.random_range(0..strata) } else { 0 };
    let (z, x) = draw_design(model, rng);
    let latents = sampler.draw(rng);
    let (d, y) = roll_forward(model, &latents, z, &x);
    Row { z, d, y, x, w0 }
}

/// Observational rows on per-individual seed streams.
pub(crate) fn observational_rows(
    model: &StructuralModel,
    n: usize,
    seed: u64,
    strata: u8,
) -> Result<Vec<Row>> {
    if strata == 0 {
        return Err(Error::InvalidQuery("strata must be at least 1".into()));
    }
    let sampler = Sampler::new(model)?;
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            draw_row(model, &sampler, &mut rng, strata)
        })
        .collect())
}

/// Simulate an observational panel of `n` individuals.
///
/// `strata` baseline strata are assigned uniformly and independently of
/// everything else; they exist so stratified estimation paths can be
/// exercised (pass 1 for none).
pub fn simulate_panel(
    model: &StructuralModel,
    n: usize,
    seed: u64,
    strata: u8,
) -> Result<PanelData> {
    if n == 0 {
        return Err(Error::InvalidQuery("panel size must be positive".into()));
    }
    let violations = model.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidModel(format!(
            "refusing to simulate from an invalid model: {}",
            violations[0].message
        )));
    }
    let rows = observational_rows(model, n, seed, strata)?;
    let x_card = model.horizon.periods().map(|t| model.x_grid.k(t)).collect();
    Ok(PanelData::from_rows(model.horizon, x_card, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;
    use crate::numeric::norm_cdf;

    #[test]
    fn panels_are_seed_deterministic() {
        let model = presets::example_model();
        let a = simulate_panel(&model, 500, 9, 3).unwrap();
        let b = simulate_panel(&model, 500, 9, 3).unwrap();
        assert_eq!(a.rows(), b.rows());
        let c = simulate_panel(&model, 500, 10, 3).unwrap();
        assert_ne!(a.rows(), c.rows());
        assert_eq!(a.to_csv_string(), b.to_csv_string());
    }

    #[test]
    fn first_period_margins_match_the_model() {
        let model = presets::example_model();
        let panel = simulate_panel(&model, 200_000, 4, 1).unwrap();
        let n = panel.n() as f64;
        let se = |p: f64| 4.0 * (p * (1.0 - p) / n).sqrt();

        let z0 = panel.rows().iter().filter(|r| r.z & 1 == 1).count() as f64 / n;
        assert!((z0 - 0.5).abs() < se(0.5), "z0 rate {z0}");

        for i in 0..5 {
            let xi = panel.rows().iter().filter(|r| r.x[1] == i).count() as f64 / n;
            assert!((xi - 0.2).abs() < se(0.2), "x1={i} rate {xi}");
        }

        // Pr[D_0 = 1 | Z_0 = z] = Phi(pi_0(z)): V_0 is standard normal and
        // independent of Z.
        for z in [false, true] {
            let rows: Vec<_> =
                panel.rows().iter().filter(|r| (r.z & 1 == 1) == z).collect();
            let d = rows.iter().filter(|r| r.d & 1 == 1).count() as f64 / rows.len() as f64;
            let want = norm_cdf(-0.3 + 0.8 * z as u8 as f64);
            assert!((d - want).abs() < se(want), "z={z}: {d} vs {want}");
        }
    }

    #[test]
    fn latent_correlation_is_reproduced() {
        // Frobenius check on the sample correlation of simulated ranks.
        let model = presets::example_model();
        let sampler = Sampler::new(&model).unwrap();
        let n = 1_000_000usize;
        let draws: Vec<LatentDraw> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(77);
                rng.set_stream(i as u64);
                sampler.draw(&mut rng)
            })
            .collect();
        let comp = |d: &LatentDraw, i: usize| match i {
            0 => d.u0[0],
            1 => d.u0[1],
            2 => d.v[0],
            _ => d.v[1],
        };
        let corr = model.latent.corr().unwrap();
        let mut frob = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let mut s = 0.0;
                for d in &draws {
                    s += comp(d, i) * comp(d, j);
                }
                let diff = s / n as f64 - corr.get(i, j);
                frob += diff * diff;
            }
        }
        assert!(frob.sqrt() < 0.02, "Frobenius distance {}", frob.sqrt());
    }

    #[test]
    fn arm_ranks_share_a_law_but_differ_in_the_factor_spec() {
        let mut model = presets::example_model();
        model.latent = LatentSpec::RsGeneral {
            a: vec![0.6, 0.8],
            b: vec![0.8, 0.6],
            c: vec![0.5, 0.5],
            e: vec![0.75f64.sqrt(), 0.75f64.sqrt()],
        };
        let sampler = Sampler::new(&model).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let (mut m0, mut m1, mut v0, mut v1, mut diff) = (0.0, 0.0, 0.0, 0.0, 0usize);
        for _ in 0..n {
            let d = sampler.draw(&mut rng);
            m0 += d.u0[0];
            m1 += d.u1[0];
            v0 += d.u0[0] * d.u0[0];
            v1 += d.u1[0] * d.u1[0];
            diff += (d.u0[0] != d.u1[0]) as usize;
        }
        let nf = n as f64;
        assert_eq!(diff, n, "arm ranks must differ almost surely");
        assert!((m0 / nf).abs() < 0.01 && (m1 / nf).abs() < 0.01);
        assert!((v0 / nf - 1.0).abs() < 0.02 && (v1 / nf - 1.0).abs() < 0.02);
    }
}
