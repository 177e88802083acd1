//! Local-hidden-variable sample-space models for two-photon Bell tests with
//! inefficient detectors.
//!
//! The crate builds sample spaces that reproduce quantum joint detection
//! probabilities up to an efficiency factor, computes the critical efficiencies
//! they imply, compares them with Clauser-Horne thresholds, simulates detection
//! events and runs χ² consistency tests on the resulting counts.

pub mod descriptor;
pub mod error;
pub mod inequalities;
pub mod lp;
pub mod models;
pub mod montecarlo;
pub mod optimizer;
pub mod quantum;
pub mod refine;
pub mod sample_space;
pub mod stats;

pub use descriptor::{Family, ModelDescriptor, Padding};
pub use error::{LhvError, Result};
pub use models::{FiniteModelBuild, SettingsGrid};
pub use quantum::{Channel, EntangledState, Setting, Side};
pub use sample_space::{EfficiencyReport, LhvModel, SymmetricModel};
