use std::path::Path;

use serde::Deserialize;

use crate::aggregation::AggregationConfig;
use crate::clustering::ClusterConfig;
use crate::differencing::DifferencingConfig;
use crate::edges::EdgeConfig;
use crate::filtering::FilterConfig;
use crate::geometry::NormalConfig;
use crate::inference::InferenceConfig;
use crate::sie::SieConfig;

use super::PipelineError;

/// Every tunable of a segmentation run. Missing tables and keys take their
/// defaults; unknown keys are an error.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub normals: NormalConfig,
    pub sie: SieConfig,
    pub edges: EdgeConfig,
    pub differencing: DifferencingConfig,
    pub aggregation: AggregationConfig,
    pub inference: InferenceConfig,
    pub clustering: ClusterConfig,
    pub filtering: FilterConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Write `cloud.ply` next to the masks.
    pub point_cloud: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { point_cloud: true }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| PipelineError::data(path, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::PairwiseMode;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn partial_tables_override_single_keys() {
        let c = Config::from_toml(
            "[filtering]\nkappa = 50.0\n[inference]\npairwise = \"identical\"\n[normals]\nwindow = 7\n",
        )
        .unwrap();
        assert_eq!(c.filtering.kappa, 50.0);
        assert!(c.filtering.enabled);
        assert_eq!(c.inference.pairwise, PairwiseMode::Identical);
        assert_eq!(c.inference.p_obj_given_occlusion, 0.99);
        assert_eq!(c.normals.window, 7);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_toml("[filtering]\nkapa = 1.0\n").is_err());
        assert!(Config::from_toml("[filter]\n").is_err());
    }
}
