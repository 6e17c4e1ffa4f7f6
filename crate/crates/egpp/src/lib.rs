//! Post-processing and evaluation toolkit for self-supervised monocular
//! disparity maps.
//!
//! The crate covers four areas:
//!
//! * edge-guided post-processing of flip-prediction pairs, plus the
//!   conventional averaging scheme it replaces ([`pp`]);
//! * the self-supervision objective terms used to score image/disparity
//!   pairs ([`losses`]);
//! * the standard depth evaluation metric set with crops and distance caps
//!   ([`metrics`]);
//! * a synthetic dis-occlusion oracle that makes the halo-reduction claims
//!   measurable without a trained network ([`synth`]).
//!
//! File interchange (PFM, 16-bit PNG, manifests) lives in [`formats`];
//! [`arch`] holds declarative encoder specs for structural checks.

pub mod arch;
pub mod error;
pub mod formats;
pub mod grid;
pub mod losses;
pub mod metrics;
pub mod pp;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{correlate2d, DisparityMap, Grid, Kernel, Mask};
pub use losses::{LossReport, LossWeights};
pub use metrics::{CameraModel, EvalConfig, MetricReport};
pub use pp::{PPConfig, PpMode};
pub use synth::{SceneParams, SuiteReport};
