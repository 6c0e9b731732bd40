//! Box-supervised instance segmentation by level-set evolution.
//!
//! Each annotated box gets its own level-set field, evolved by explicit
//! gradient descent on a composite energy: Chan-Vese data terms on the image
//! and on tree-filtered features, a box projection term, and an L1 pull
//! towards an affinity-propagated copy of the field. The crate also carries
//! the box-level matching toolkit (projection-dice costs, Hungarian
//! assignment, centre sampling) and mask metrics.

pub mod chanvese;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod lcm;
pub mod matching;
pub mod metrics;
pub mod treefilter;

pub use chanvese::{EnergyBreakdown, ObjectiveWeights, RegionMeans};
pub use error::{Error, Region, Result};
pub use evolve::{
    evolve_instance, init_levelset, segment_image, EvolutionConfig, EvolutionFailure, EvolutionTrace, InstanceResult,
    TraceStep,
};
pub use grid::{BBox, BinaryMask, FeatureStack, Grid, ImageGrid, LevelSetField, SoftMask};
pub use matching::{Assignment, CostMatrix, MatchingConfig};
pub use metrics::{evaluate, evaluate_grouped, Metrics, Pairing};
