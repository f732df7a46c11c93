//! Speech-to-gesture mapping and audience attention feedback.
//!
//! The crate covers the full offline pipeline:
//!
//! * [`pose`]: keypoint ingestion, speaker normalization and pose vectors.
//! * [`discovery`]: K-means gesture discovery and the gesture library.
//! * [`phrase`]: phrase segmentation of speech audio.
//! * [`classifier`]: bag-of-words random forest from phrase text to gesture.
//! * [`attention`]: gaze-based attentiveness and the modulation controller.
//! * [`scheduler`]: performance scripts for the four behaviour modes and
//!   session replay.
//! * [`stats`]: score summaries and one-way ANOVA.

// Negated float comparisons are used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod classifier;
pub mod config;
pub mod discovery;
mod error;
pub mod phrase;
pub mod pose;
pub mod scheduler;
pub mod stats;
pub mod synth;

pub use attention::{CameraGeometry, GazeFrame, GazeRecord, ModulationState};
pub use classifier::{GestureModel, TrainingCorpus};
pub use config::PipelineConfig;
pub use discovery::{Clustering, GestureLibrary, GestureTemplate, KMeansConfig};
pub use error::{Error, Result};
pub use phrase::{Audio, PhraseSegments, SegmenterConfig};
pub use pose::{Joint, JointSet, KeypointFrame, PoseVector, ReferenceFrame};
pub use scheduler::{Mode, PerformanceScript, SessionTrace};
pub use stats::{AnovaResult, ScoreTable, Summary};
