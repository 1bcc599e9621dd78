//! The structured run configuration.
//!
//! One experiment is one JSON file; command-line flags may override the
//! handful of keys that vary across reruns (seed, output path, backend,
//! trace). Unknown keys are rejected so typos fail loudly instead of
//! silently running the default.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use dyntx_core::regimes::ObjectiveSpec;
use dyntx_core::tol::{H_ZERO_TOL_EXACT, RELEVANCE_TOL_POP};
use dyntx_core::{FunctionalSpec, Regime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Validate,
    Simulate,
    Oracle,
    Identify,
    Bounds,
    Optimize,
    Estimate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    /// Quadrature over the structural model: population values.
    Exact,
    /// A large simulated panel counted as if observed.
    Mc,
    /// Counting over a supplied panel CSV.
    Empirical,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    /// Defaults to `exact` when a model is given, `empirical` when data is.
    pub kind: Option<BackendChoice>,
    /// Simulated-population size (mc backend).
    pub draws: Option<usize>,
    /// Quadrature order per latent dimension (exact backend).
    pub quad_order: Option<usize>,
    /// Seed for the simulated population (mc backend); falls back to the
    /// top-level seed.
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryBlock {
    /// Regime strings, e.g. `"11"`, `"0."` (dot = inactive period).
    #[serde(default)]
    pub regimes: Vec<Regime>,
    /// Shifter grid indices, one per period.
    #[serde(default)]
    pub x: Vec<usize>,
    /// Joint outcome constraints `[period, value]` for `identify`/`bounds`;
    /// empty means the terminal average potential outcome.
    #[serde(default)]
    pub y_constraints: Vec<(usize, bool)>,
    /// Conditioning period for transition queries.
    pub period: Option<usize>,
    /// Conditioning outcome for transition and period-effect queries.
    pub y_prev: Option<bool>,
    /// Ranking objective for `optimize`; defaults to the plain terminal
    /// regime value.
    pub objective: Option<ObjectiveSpec>,
    /// Restrict `optimize` to one baseline stratum.
    pub stratum: Option<u8>,
    /// Rank only the once-started-never-stopped sequences.
    #[serde(default)]
    pub monotone: bool,
    /// Functional for `estimate`.
    pub functional: Option<FunctionalSpec>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    pub n: Option<usize>,
    /// Number of baseline strata to label (uniformly at random).
    pub strata: Option<u8>,
}

impl Default for SimBlock {
    fn default() -> Self {
        SimBlock {
            n: None,
            strata: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapBlock {
    /// Replicates; 0 disables the bootstrap.
    pub b: usize,
    /// Two-sided miscoverage level.
    pub alpha: f64,
    pub seed: Option<u64>,
}

impl Default for BootstrapBlock {
    fn default() -> Self {
        BootstrapBlock {
            b: 500,
            alpha: 0.05,
            seed: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Minimum absolute first-stage gap for instrument relevance.
    pub relevance: f64,
    /// Threshold-equality tolerance for support matching.
    pub matching: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            relevance: RELEVANCE_TOL_POP,
            matching: H_ZERO_TOL_EXACT,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; must agree with the invoked subcommand when present.
    pub command: Option<CommandKind>,
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub query: QueryBlock,
    #[serde(default)]
    pub sim: SimBlock,
    #[serde(default)]
    pub bootstrap: BootstrapBlock,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub trace: bool,
}

/// A parsed config plus the provenance every output embeds.
pub struct LoadedConfig {
    pub run: RunConfig,
    /// Hex SHA-256 of the raw config bytes.
    pub sha256: String,
    /// Directory of the config file; relative paths resolve against it.
    base: PathBuf,
}

impl LoadedConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let raw = std::fs::read(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let run: RunConfig = serde_json::from_slice(&raw)
            .with_context(|| format!("parsing config {}", path.display()))?;
        if run.tolerances.relevance <= 0.0 || run.tolerances.matching <= 0.0 {
            bail!("tolerances must be positive");
        }
        let mut hasher = Sha256::new();
        hasher.update(&raw);
        Ok(LoadedConfig {
            run,
            sha256: hasher
                .finalize()
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect(),
            base: path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf(),
        })
    }

    /// Resolve a config-relative path.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn model_path(&self) -> Result<PathBuf> {
        match &self.run.model {
            Some(p) => {
                let full = self.resolve(p);
                if !full.exists() {
                    bail!("model file {} does not exist", full.display());
                }
                Ok(full)
            }
            None => bail!("this command needs a `model` path in the config"),
        }
    }

    pub fn data_path(&self) -> Result<PathBuf> {
        match &self.run.data {
            Some(p) => {
                let full = self.resolve(p);
                if !full.exists() {
                    bail!("data file {} does not exist", full.display());
                }
                Ok(full)
            }
            None => bail!("this command needs a `data` path in the config"),
        }
    }
}
