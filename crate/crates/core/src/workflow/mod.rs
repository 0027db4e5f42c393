//! The semi-automatic labelling loop: tile ranking by feature diversity,
//! data splits, the train / predict / evaluate pipeline and studies built on
//! it.

mod diversity;
mod pipeline;
mod split;
mod study;

pub use diversity::{feature_diversity, rank_tiles, tile_descriptors, tile_diversities, TileFeatures};
pub use pipeline::{
    evaluate_model, feature_rows, load_feature_rows, load_tile, predict_tile, prediction_csv,
    prepare_tiles, run_pipeline, run_pipeline_on, segment_tile, train_model, write_atomic,
    Evaluation, FileDigest, Manifest, PipelineConfig, PipelineOutput, PipelineSettings,
    PreparedTiles, SampleWeighting, TilePrediction,
};
pub use split::{class_area_table, split_dataset, ClassAreaTable, Role, TileRecord};
pub use study::{ablation_study, nested_subsets, training_amount_study, AblationResult, FractionResult};

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum WorkflowError {
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: BoxError,
    },
    #[error("tile {0:?} has no segments")]
    EmptyTile(String),
    #[error("split asks for {requested} tiles, only {available} available")]
    SplitTooLarge { requested: usize, available: usize },
    #[error("duplicate tile id")]
    DuplicateTile,
    #[error("fraction {0} outside (0, 1]")]
    InvalidFraction(f64),
    #[error("a study needs at least two fractions")]
    TooFewFractions,
    #[error("no classified training segments")]
    NoTrainingSegments,
    #[error("test tiles carry no ground truth")]
    NoGroundTruth,
    #[error("config: {0}")]
    Config(String),
}

impl WorkflowError {
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            WorkflowError::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

pub(crate) fn stage<E>(name: &'static str) -> impl FnOnce(E) -> WorkflowError
where
    E: std::error::Error + Send + Sync + 'static,
{
    move |e| WorkflowError::Stage {
        stage: name,
        source: Box::new(e),
    }
}
