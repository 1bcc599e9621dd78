//! Ready-made models used across tests, examples, and benchmarks.
//!
//! The fixed two-period models are frozen: tests pin identified values and
//! oracle answers computed from them, so changing any constant here is a
//! breaking change. The randomized generators produce families of models for
//! stress tests; every draw is fully determined by the seed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bits::Bits;
use crate::model::latent::{CorrMatrix, LatentSpec};
use crate::model::structural::{Horizon, StructuralModel, XGrid};
use crate::model::tables::{MuTable, PiTable};

const GRID5: [f64; 5] = [-0.5, -0.25, 0.0, 0.25, 0.5];

/// Correlation of `(U_1, U_2, V_1, V_2)` with outcome-selection dependence:
/// each period's outcome and selection ranks correlate at 0.5, everything
/// else at 0.3.
fn endogenous_corr(scale: f64) -> CorrMatrix {
    let base = [
        [1.0, 0.3, 0.5, 0.3],
        [0.3, 1.0, 0.3, 0.5],
        [0.5, 0.3, 1.0, 0.3],
        [0.3, 0.5, 0.3, 1.0],
    ];
    let rows = (0..4)
        .map(|i| {
            (0..4)
                .map(|j| if i == j { 1.0 } else { scale * base[i][j] })
                .collect()
        })
        .collect();
    CorrMatrix::new(rows).expect("scaled pattern stays a valid correlation matrix")
}

/// Two-period model with endogenous selection and full matching support.
///
/// The shifter enters through cyclically shifted grids: the treated-arm
/// threshold at grid index `i` equals the untreated-arm threshold at index
/// `(i + 4) % 5`, so every threshold on either arm has an exact partner on
/// the other. The instrument raises take-up in every cell. Outcome and
/// selection ranks correlate at 0.5 within periods, so regime conditioning
/// without the instrument is biased.
pub fn example_model() -> StructuralModel {
    let s1 = [-0.6, -0.3, 0.0, 0.3, 0.6];
    let s2 = GRID5;
    StructuralModel {
        horizon: Horizon::new(2).unwrap(),
        x_grid: XGrid::new(vec![GRID5.to_vec(), GRID5.to_vec()]).unwrap(),
        x_law: vec![vec![0.2; 5], vec![0.2; 5]],
        z_law: vec![0.5, 0.5],
        mu: vec![
            MuTable::from_fn(0, 5, |_y, d, x| {
                0.1 + if d.get(0) { s1[x] } else { s1[(x + 1) % 5] }
            }),
            MuTable::from_fn(1, 5, |y, d, x| {
                let base = if y.get(0) { 0.4 } else { -0.2 };
                base + if d.get(1) { s2[x] } else { s2[(x + 1) % 5] }
            }),
        ],
        pi: vec![
            PiTable::from_fn(0, |_y, _d, z| -0.3 + 0.8 * z as u8 as f64),
            PiTable::from_fn(1, |y, d, z| {
                -0.2 + 0.5 * d.get(0) as u8 as f64
                    + 0.3 * y.get(0) as u8 as f64
                    + 0.7 * z as u8 as f64
            }),
        ],
        latent: LatentSpec::RankInvariant { corr: endogenous_corr(1.0) },
        irreversible_y: false,
        irreversible_d: false,
    }
}

/// [`example_model`] with the outcome-selection correlation blocks zeroed:
/// ranks still correlate over time within each equation, but treatment choice
/// is exogenous. Naive regime conditioning is unbiased here.
pub fn example_model_exogenous() -> StructuralModel {
    let corr = CorrMatrix::new(vec![
        vec![1.0, 0.3, 0.0, 0.0],
        vec![0.3, 1.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0, 0.3],
        vec![0.0, 0.0, 0.3, 1.0],
    ])
    .unwrap();
    StructuralModel { latent: LatentSpec::RankInvariant { corr }, ..example_model() }
}

/// [`example_model`] with the top terminal grid point removed.
///
/// Dropping index 4 at the terminal period breaks exactly two matches in each
/// terminal conditioning cell: the treated-arm threshold at index 0 and the
/// untreated-arm threshold at index 3 lose their partners. Point
/// identification fails only there; everything else is unchanged, so interval
/// answers should collapse back to points once the grid point is restored.
pub fn gapped_model() -> StructuralModel {
    let mut m = example_model();
    truncate_terminal_grid(&mut m, 4);
    m
}

/// Shrink the terminal-period grid to its first `new_k` points, renormalizing
/// the shifter law uniformly and rebuilding the terminal threshold table on
/// the smaller grid (thresholds for surviving points are unchanged).
pub fn truncate_terminal_grid(model: &mut StructuralModel, new_k: usize) {
    let t = model.horizon.terminal();
    let old = model.mu[t].clone();
    assert!(new_k < old.k(), "truncation must drop at least one point");
    let values = model.x_grid.values_at(t)[..new_k].to_vec();
    let mut grids: Vec<Vec<f64>> = (0..model.t())
        .map(|s| model.x_grid.values_at(s).to_vec())
        .collect();
    grids[t] = values;
    model.x_grid = XGrid::new(grids).unwrap();
    model.x_law[t] = vec![1.0 / new_k as f64; new_k];
    model.mu[t] = MuTable::from_fn(t, new_k, |y, d, x| old.get(y, d, x));
}

/// [`example_model`] with the intervention confined to the first period: the
/// terminal outcome threshold ignores the terminal treatment and shifter, so
/// the first-period treatment acts on the terminal outcome only through the
/// intermediate outcome.
pub fn masked_example_model() -> StructuralModel {
    let mut m = example_model();
    m.mu[1] = MuTable::from_fn(1, 5, |y, _d, _x| if y.get(0) { 0.35 } else { -0.15 });
    m
}

/// Random two-period model for sign-recovery stress tests.
///
/// Thresholds are drawn freely (no matching structure), the terminal outcome
/// threshold may depend on the first-period treatment, and the instrument
/// direction is re-randomized per conditioning cell, including downward
/// first stages. Relevance gaps stay bounded away from zero by construction.
pub fn random_sign_model(seed: u64) -> StructuralModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b0 = rng.random_range(-0.3..0.3);
    let shifts0: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..5).map(|_| rng.random_range(-0.8..0.8)).collect())
        .collect();
    let c0 = rng.random_range(-0.5..0.1);
    let c1 = c0 + rng.random_range(0.0..0.6);
    let lag_coef = rng.random_range(-0.3..0.3);
    let shifts1: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..5).map(|_| rng.random_range(-0.7..0.7)).collect())
        .collect();

    let pi0_icpt = rng.random_range(-0.5..0.2);
    let pi0_coef = signed_magnitude(&mut rng, 0.5, 1.0);
    // Instrument coefficient per terminal cell (y, d0), sign and all.
    let mut pi1_icpt = [[0.0; 2]; 2];
    let mut pi1_coef = [[0.0; 2]; 2];
    for y in 0..2 {
        for d in 0..2 {
            pi1_icpt[y][d] = rng.random_range(-0.6..0.3);
            pi1_coef[y][d] = signed_magnitude(&mut rng, 0.5, 0.9);
        }
    }
    let scale = rng.random_range(0.5..1.0);

    StructuralModel {
        horizon: Horizon::new(2).unwrap(),
        x_grid: XGrid::new(vec![GRID5.to_vec(), GRID5.to_vec()]).unwrap(),
        x_law: vec![vec![0.2; 5], vec![0.2; 5]],
        z_law: vec![0.5, 0.5],
        mu: vec![
            MuTable::from_fn(0, 5, move |_y, d, x| b0 + shifts0[d.get(0) as usize][x]),
            MuTable::from_fn(1, 5, move |y, d, x| {
                let base = if y.get(0) { c1 } else { c0 };
                base + lag_coef * d.get(0) as u8 as f64 + shifts1[d.get(1) as usize][x]
            }),
        ],
        pi: vec![
            PiTable::from_fn(0, move |_y, _d, z| pi0_icpt + pi0_coef * z as u8 as f64),
            PiTable::from_fn(1, move |y, d, z| {
                pi1_icpt[y.get(0) as usize][d.get(0) as usize]
                    + pi1_coef[y.get(0) as usize][d.get(0) as usize] * z as u8 as f64
            }),
        ],
        latent: LatentSpec::RankInvariant { corr: endogenous_corr(scale) },
        irreversible_y: false,
        irreversible_d: false,
    }
}

/// Random two-period model with exact cyclic matching, plus its gapped twin.
///
/// The pair differs only in the terminal grid: the twin drops the top grid
/// point, which severs exactly two matches per terminal cell (same pattern as
/// [`gapped_model`]). The terminal threshold does not depend on the
/// first-period treatment, so the recursive point target is exact on the full
/// model and the twin's intervals must cover it.
pub fn random_matched_pair(seed: u64) -> (StructuralModel, StructuralModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let icpt0 = rng.random_range(-0.2..0.2);
    let b0 = distinct_shifts(&mut rng, 5, -0.65, 0.65, 0.05);
    let c_y0 = rng.random_range(-0.35..-0.05);
    let c_y1 = rng.random_range(0.1..0.5);
    let b1 = distinct_shifts(&mut rng, 5, -0.6, 0.6, 0.05);

    let pi0_icpt = rng.random_range(-0.4..0.0);
    let pi0_z = rng.random_range(0.6..0.9);
    let pi1_icpt = rng.random_range(-0.4..-0.1);
    let pi1_d = rng.random_range(0.3..0.6);
    let pi1_y = rng.random_range(0.1..0.4);
    let pi1_z = rng.random_range(0.6..0.9);
    let scale = rng.random_range(0.6..1.0);

    let b0c = b0.clone();
    let b1c = b1.clone();
    let full = StructuralModel {
        horizon: Horizon::new(2).unwrap(),
        x_grid: XGrid::new(vec![GRID5.to_vec(), GRID5.to_vec()]).unwrap(),
        x_law: vec![vec![0.2; 5], vec![0.2; 5]],
        z_law: vec![0.5, 0.5],
        mu: vec![
            MuTable::from_fn(0, 5, move |_y, d, x| {
                icpt0 + if d.get(0) { b0c[x] } else { b0c[(x + 1) % 5] }
            }),
            MuTable::from_fn(1, 5, move |y, d, x| {
                let base = if y.get(0) { c_y1 } else { c_y0 };
                base + if d.get(1) { b1c[x] } else { b1c[(x + 1) % 5] }
            }),
        ],
        pi: vec![
            PiTable::from_fn(0, move |_y, _d, z| pi0_icpt + pi0_z * z as u8 as f64),
            PiTable::from_fn(1, move |y, d, z| {
                pi1_icpt
                    + pi1_d * d.get(0) as u8 as f64
                    + pi1_y * y.get(0) as u8 as f64
                    + pi1_z * z as u8 as f64
            }),
        ],
        latent: LatentSpec::RankInvariant { corr: endogenous_corr(scale) },
        irreversible_y: false,
        irreversible_d: false,
    };
    let mut gapped = full.clone();
    truncate_terminal_grid(&mut gapped, 4);
    (full, gapped)
}

fn signed_magnitude(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let m = rng.random_range(lo..hi);
    if rng.random_bool(0.5) {
        m
    } else {
        -m
    }
}

fn distinct_shifts(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64, min_gap: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
        let separated = (0..n)
            .all(|i| (0..i).all(|j| (v[i] - v[j]).abs() >= min_gap));
        if separated {
            return v;
        }
    }
}

/// True when the terminal threshold table never looks at treatments before
/// the current period. The recursive identification target matches the
/// potential-outcome oracle exactly on this class; outside it the recursion
/// still runs but answers a different (history-substituted) counterfactual.
pub fn terminal_mu_ignores_lags(model: &StructuralModel) -> bool {
    let t = model.horizon.terminal();
    if t == 0 {
        return true;
    }
    for y in Bits::enumerate(t) {
        for arm in [false, true] {
            for x in 0..model.x_grid.k(t) {
                let base = model.mu_at(t, y, Bits::zeros(t).pushed(arm), x);
                for lags in Bits::enumerate(t) {
                    let v = model.mu_at(t, y, lags.pushed(arm), x);
                    if !(v == base || (v - base).abs() <= 1e-12) {
                        return false;
                    }
                }
            }
        }
    }
    true
}
