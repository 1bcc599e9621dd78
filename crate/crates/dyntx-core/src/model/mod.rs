//! Structural model types, configuration I/O, presets, and diagnostics.

mod config;
mod latent;
mod regime;
mod report;
mod structural;
mod tables;

pub mod presets;

pub use config::{
    model_from_json, model_to_json, read_model, write_model, ModelConfig, Threshold,
};
pub use latent::{CorrMatrix, LatentSpec};
pub use regime::Regime;
pub use report::{
    check_relevance, check_support, thresholds_match, AssumptionReport, RelevanceCell, SupportGap,
};
pub use structural::{Horizon, StructuralModel, Violation, XGrid, MAX_GRID};
pub use tables::{MuTable, PiTable};
