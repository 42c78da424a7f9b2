//! Nuclei instance reconstruction from segmentation and direction maps.
//!
//! Modules, roughly in pipeline order:
//!
//! 1. [`tensorio`] – label maps, probability tensors, count vectors and their file formats.
//! 2. [`dircodec`] – ground-truth direction maps from instance maps.
//! 3. [`reconstruct`] – argmax, the direction-class merge sweep, class voting, count rounding.
//! 4. [`metrics`] – panoptic quality (DQ/SQ/PQ, mPQ) and multi-class R².
//! 5. [`losses`] – reference values of the four training loss terms.
//! 6. [`synth`] – seeded synthetic nuclei for tests and demos.
//! 7. [`render`] – color overlays of instance maps.

pub mod dircodec;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod reconstruct;
pub mod render;
pub mod synth;
pub mod tensorio;

pub use dircodec::{centroid, direction_class, encode_direction_map, DirectionConfig};
pub use error::{Error, Result};
pub use losses::{LossBreakdown, LossInputs, LossWeights};
pub use metrics::{MetricsReport, PqAggregation, R2Aggregation};
pub use reconstruct::{Connectivity, PanopticResult, ReconstructionConfig};
pub use synth::{SynthBundle, SynthConfig};
pub use tensorio::{
    ClassMap, CountVector, DirectionMap, Grid, InstanceMap, LabelKind, LabelMap, ProbTensor,
};
