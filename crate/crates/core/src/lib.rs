//! Controlled action-object training designs.
//!
//! The pipeline runs from a labeled instance inventory to a co-occurrence
//! matrix, an optional dense submatrix, a role assignment with a
//! quota-balanced training sample, a train/val/test manifest with typed test
//! items, and finally repeated seeded trials aggregated into per-type
//! accuracy with 95% confidence intervals.

pub mod cli;
pub mod cooc;
pub mod densify;
pub mod design;
pub mod inventory;
pub mod quota;
pub mod simlearner;
pub mod splits;
pub mod trials;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use cooc::{build_cooc, marginals, render_report, CoocMatrix};
pub use densify::{densify, densify_summary, DensifyConfig};
pub use design::{assign_roles, sample_training_set, DesignSpec, RoleAssignment, TrainingSample};
pub use inventory::{parse_inventory, validate_inventory, Instance, Inventory, InventoryFormat};
pub use splits::{classify_test_type, generate_splits, SplitManifest, TestType};
pub use trials::{
    aggregate, run_grid, run_trials, score_predictions, AggregateReport, TrialResult,
};

pub(crate) const STREAM_ROLES: u64 = 1;
pub(crate) const STREAM_SAMPLE: u64 = 2;
pub(crate) const STREAM_SPLIT: u64 = 3;
pub(crate) const STREAM_WORLD: u64 = 4;

/// Seeded generator for one independent random stream of a design.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
