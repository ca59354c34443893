//! End-to-end object discovery: scene loading, the segmentation run, result
//! files and a synthetic scene generator.

mod config;
mod emit;
mod run;
mod scene;
pub mod synth;

use std::path::PathBuf;

use thiserror::Error;

use crate::filtering::PersonBoxError;
use crate::geometry::GeometryError;
use crate::inference::InferenceError;

pub use config::Config;
pub use emit::{
    segment_color, write_debug_maps, write_masks, write_point_cloud, write_result,
    write_segments_table, SEGMENTS_HEADER,
};
pub use run::{segment, DebugMaps, SegmentRecord, SegmentationResult};
pub use scene::{load_depth_png, load_person_boxes, load_scene, Scene, SceneFrame, SceneManifest};

#[derive(Debug, Error)]
pub enum PipelineError {
    /// The inputs cannot be used as asked, e.g. an empty set.
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: {source}")]
    Persons {
        path: PathBuf,
        #[source]
        source: PersonBoxError,
    },
    #[error("{context}: {source}")]
    Geometry {
        context: String,
        #[source]
        source: GeometryError,
    },
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
    #[error("labeling: {0}")]
    Inference(#[from] InferenceError),
    #[error("{0} segments do not fit a 16-bit mask")]
    TooManySegments(usize),
}

impl PipelineError {
    pub fn is_usage(&self) -> bool {
        matches!(self, PipelineError::Usage(_))
    }

    pub(crate) fn data(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        PipelineError::Data {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        PipelineError::Image {
            path: path.into(),
            source,
        }
    }
}
