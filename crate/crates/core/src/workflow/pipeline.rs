//! Over-segment → featurise → train → predict → evaluate.

use super::{stage, WorkflowError};
use crate::digest::sha256_hex;
use crate::features::{
    feature_ablation_mask, read_feature_csv, write_feature_csv, FeatureRow, TileContext, FEATURE_DIM,
};
use crate::forest::{ForestModel, ForestParams, Prediction};
use crate::mesh_io::{attach_texel_samples, parse_ply, write_ply, ClassId, PlyFormat, TriangleMesh};
use crate::metrics::{report, write_class_table, ConfusionMatrix, MetricsReport};
use crate::segmentation::{majority_label, oversegment, upper_bound_labels, SegmentSet, SegmentationParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleWeighting {
    /// Weight every training segment by its area.
    #[default]
    Area,
    Uniform,
}

/// Everything that determines the pipeline's outputs for given inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSettings {
    pub segmentation: SegmentationParams,
    pub forest: ForestParams,
    pub weighting: SampleWeighting,
    /// Feature groups to switch off.
    pub ablate: Vec<String>,
    /// Use the mesh's own `segment_id`s when every face has one.
    pub reuse_segments: bool,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            segmentation: SegmentationParams::default(),
            forest: ForestParams::default(),
            weighting: SampleWeighting::Area,
            ablate: Vec::new(),
            reuse_segments: false,
        }
    }
}

impl PipelineSettings {
    pub fn mask(&self) -> Result<[bool; FEATURE_DIM], WorkflowError> {
        feature_ablation_mask(&self.ablate).map_err(stage("configure"))
    }
}

/// Segments of a tile: reused from the mesh if asked and complete, otherwise
/// computed by over-segmentation.
pub fn segment_tile(mesh: &TriangleMesh, settings: &PipelineSettings) -> Result<SegmentSet, WorkflowError> {
    if settings.reuse_segments && mesh.face_segments().iter().all(|&s| s >= 0) {
        return SegmentSet::from_assignment(mesh, mesh.face_segments()).map_err(stage("segment"));
    }
    oversegment(mesh, &settings.segmentation).map_err(stage("segment"))
}

/// One feature row per segment, labelled with the area-majority ground truth.
pub fn feature_rows(mesh: &TriangleMesh, segments: &SegmentSet) -> Result<Vec<FeatureRow>, WorkflowError> {
    let ctx = TileContext::new(mesh, segments).map_err(stage("featurize"))?;
    let features = ctx.featurize_all();
    Ok(segments
        .segments()
        .iter()
        .zip(features)
        .map(|(seg, features)| FeatureRow {
            tile_id: mesh.tile_id().to_string(),
            segment_id: seg.id,
            label: majority_label(mesh, &seg.face_ids, mesh.face_labels()),
            features,
        })
        .collect())
}

/// Trains on the rows whose label is not unclassified.
pub fn train_model<'r>(
    rows: impl IntoIterator<Item = &'r FeatureRow>,
    settings: &PipelineSettings,
) -> Result<ForestModel, WorkflowError> {
    let mask = settings.mask()?;
    let rows: Vec<&FeatureRow> = rows.into_iter().filter(|r| r.label.is_classified()).collect();
    if rows.is_empty() {
        return Err(WorkflowError::NoTrainingSegments);
    }
    let x: Vec<_> = rows.iter().map(|r| r.features.masked(&mask)).collect();
    let y: Vec<ClassId> = rows.iter().map(|r| r.label).collect();
    let w: Vec<f64> = rows
        .iter()
        .map(|r| match settings.weighting {
            SampleWeighting::Area => r.area(),
            SampleWeighting::Uniform => 1.0,
        })
        .collect();
    ForestModel::train(&x, &y, &w, &settings.forest).map_err(stage("train"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TilePrediction {
    pub tile_id: String,
    /// Indexed by segment id.
    pub segments: Vec<Prediction>,
    pub face_labels: Vec<ClassId>,
}

pub fn predict_tile(
    model: &ForestModel,
    segments: &SegmentSet,
    rows: &[FeatureRow],
    mask: &[bool; FEATURE_DIM],
) -> Result<TilePrediction, WorkflowError> {
    let x: Vec<_> = rows.iter().map(|r| r.features.masked(mask)).collect();
    let preds = model.predict_many(&x).map_err(stage("predict"))?;
    let face_labels = segments
        .face_assignment()
        .iter()
        .map(|&s| preds[s as usize].class)
        .collect();
    Ok(TilePrediction {
        tile_id: rows.first().map(|r| r.tile_id.clone()).unwrap_or_default(),
        segments: preds,
        face_labels,
    })
}

/// Segments and feature rows of a set of tiles.
#[derive(Clone, Debug)]
pub struct PreparedTiles {
    pub segments: Vec<SegmentSet>,
    pub rows: Vec<Vec<FeatureRow>>,
}

/// Segments and featurises tiles in parallel.
pub fn prepare_tiles(tiles: &[TriangleMesh], settings: &PipelineSettings) -> Result<PreparedTiles, WorkflowError> {
    let done: Vec<(SegmentSet, Vec<FeatureRow>)> = tiles
        .par_iter()
        .map(|m| {
            let s = segment_tile(m, settings)?;
            let r = feature_rows(m, &s)?;
            Ok((s, r))
        })
        .collect::<Result<_, WorkflowError>>()?;
    let (segments, rows) = done.into_iter().unzip();
    Ok(PreparedTiles { segments, rows })
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub predictions: Vec<TilePrediction>,
    pub confusion: ConfusionMatrix,
    /// `None` when the test tiles carry no ground truth.
    pub report: Option<MetricsReport>,
}

pub fn evaluate_model(
    model: &ForestModel,
    tiles: &[TriangleMesh],
    prepared: &PreparedTiles,
    mask: &[bool; FEATURE_DIM],
) -> Result<Evaluation, WorkflowError> {
    let mut predictions = Vec::with_capacity(tiles.len());
    let mut confusion = ConfusionMatrix::new();
    for ((mesh, segs), rows) in tiles.iter().zip(&prepared.segments).zip(&prepared.rows) {
        let p = predict_tile(model, segs, rows, mask)?;
        confusion
            .accumulate_labels(mesh, &p.face_labels)
            .map_err(stage("evaluate"))?;
        predictions.push(p);
    }
    Ok(Evaluation {
        predictions,
        report: report(&confusion).ok(),
        confusion,
    })
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub train: PreparedTiles,
    pub test: PreparedTiles,
    pub model: ForestModel,
    pub evaluation: Evaluation,
    /// Upper bound of the test tiles' segmentation.
    pub upper_bound: Option<MetricsReport>,
}

/// The whole loop on in-memory tiles.
pub fn run_pipeline_on(
    train: &[TriangleMesh],
    test: &[TriangleMesh],
    settings: &PipelineSettings,
) -> Result<PipelineOutput, WorkflowError> {
    let mask = settings.mask()?;
    let train_p = prepare_tiles(train, settings)?;
    let test_p = prepare_tiles(test, settings)?;
    let model = train_model(train_p.rows.iter().flatten(), settings)?;
    let evaluation = evaluate_model(&model, test, &test_p, &mask)?;
    let mut ub = ConfusionMatrix::new();
    for (mesh, segs) in test.iter().zip(&test_p.segments) {
        ub.accumulate_labels(mesh, &upper_bound_labels(mesh, segs))
            .map_err(stage("evaluate"))?;
    }
    Ok(PipelineOutput {
        train: train_p,
        test: test_p,
        model,
        evaluation,
        upper_bound: report(&ub).ok(),
    })
}

/// File-based pipeline description (TOML or JSON).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub train: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
    pub output: PathBuf,
    #[serde(flatten)]
    pub settings: PipelineSettings,
}

impl PipelineConfig {
    /// Parses TOML, or JSON when the file name ends in `.json`. Relative
    /// paths are resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<PipelineConfig, WorkflowError> {
        let text = std::fs::read_to_string(path).map_err(stage("config"))?;
        let mut cfg = PipelineConfig::parse(&text, path.extension().is_some_and(|e| e == "json"))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in cfg.train.iter_mut().chain(cfg.test.iter_mut()).chain([&mut cfg.output]) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str, json: bool) -> Result<PipelineConfig, WorkflowError> {
        if json {
            serde_json::from_str(text).map_err(|e| WorkflowError::Config(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| WorkflowError::Config(e.to_string()))
        }
    }
}

/// Reads a PLY tile, attaching `<stem>.texels` next to it when present. The
/// tile id defaults to the file stem.
pub fn load_tile(path: &Path) -> Result<TriangleMesh, WorkflowError> {
    let bytes = std::fs::read(path).map_err(|e| WorkflowError::Stage {
        stage: "load",
        source: format!("{}: {e}", path.display()).into(),
    })?;
    let mut mesh = parse_ply(&bytes).map_err(|e| WorkflowError::Stage {
        stage: "load",
        source: format!("{}: {e}", path.display()).into(),
    })?;
    let texels = path.with_extension("texels");
    if texels.exists() {
        let side = std::fs::read(&texels).map_err(stage("load"))?;
        mesh = attach_texel_samples(mesh, &side).map_err(stage("load"))?;
    }
    if mesh.tile_id().is_empty() {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        mesh.set_tile_id(stem.unwrap_or_default());
    }
    Ok(mesh)
}

/// Writes via a temporary sibling and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub settings: PipelineSettings,
    pub seed: u64,
    pub train_tiles: Vec<String>,
    pub test_tiles: Vec<String>,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileDigest>,
}

/// Per-segment predictions as CSV: `segment_id,class,confidence,p1..p6`.
pub fn prediction_csv(p: &TilePrediction) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["segment_id", "class", "confidence", "p1", "p2", "p3", "p4", "p5", "p6"])
        .unwrap();
    for (id, s) in p.segments.iter().enumerate() {
        let mut rec = vec![id.to_string(), s.class.get().to_string(), s.confidence().to_string()];
        rec.extend(s.probabilities.iter().map(|v| v.to_string()));
        w.write_record(&rec).unwrap();
    }
    w.into_inner().expect("in-memory writer")
}

/// Runs the pipeline described by `config`, writes every artifact under
/// `config.output` and returns the manifest (also written as
/// `manifest.json`).
pub fn run_pipeline(config: &PipelineConfig) -> Result<Manifest, WorkflowError> {
    let load_all = |paths: &[PathBuf]| -> Result<Vec<TriangleMesh>, WorkflowError> {
        paths.par_iter().map(|p| load_tile(p)).collect()
    };
    let train = load_all(&config.train)?;
    let test = load_all(&config.test)?;
    let out = run_pipeline_on(&train, &test, &config.settings)?;

    let mut inputs = Vec::new();
    for p in config.train.iter().chain(&config.test) {
        let bytes = std::fs::read(p).map_err(stage("load"))?;
        inputs.push(FileDigest {
            path: p.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
    }

    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    for (mesh, segs) in train.iter().chain(&test).zip(out.train.segments.iter().chain(&out.test.segments)) {
        let mut m = mesh.clone();
        segs.apply_to_mesh(&mut m);
        files.push((format!("segments/{}.ply", m.tile_id()), write_ply(&m, PlyFormat::BinaryLittleEndian)));
    }
    let mut feat = Vec::new();
    write_feature_csv(&mut feat, out.train.rows.iter().chain(&out.test.rows).flatten()).map_err(stage("write"))?;
    files.push(("features.csv".into(), feat));
    files.push(("model.mlrf".into(), out.model.to_bytes()));
    for ((mesh, segs), p) in test.iter().zip(&out.test.segments).zip(&out.evaluation.predictions) {
        let mut m = mesh.clone();
        segs.apply_to_mesh(&mut m);
        m.set_face_labels(p.face_labels.clone()).map_err(stage("write"))?;
        files.push((format!("predictions/{}.ply", m.tile_id()), write_ply(&m, PlyFormat::BinaryLittleEndian)));
        files.push((format!("predictions/{}.segments.csv", m.tile_id()), prediction_csv(p)));
    }
    #[derive(Serialize)]
    struct ReportFile<'a> {
        report: &'a Option<MetricsReport>,
        upper_bound: &'a Option<MetricsReport>,
        confusion: &'a ConfusionMatrix,
        feature_importance: &'a [f64],
    }
    let rep = ReportFile {
        report: &out.evaluation.report,
        upper_bound: &out.upper_bound,
        confusion: &out.evaluation.confusion,
        feature_importance: out.model.feature_importance(),
    };
    files.push(("report.json".into(), serde_json::to_vec_pretty(&rep).expect("report serialises")));
    if let Some(r) = &out.evaluation.report {
        let mut csv = Vec::new();
        write_class_table(&mut csv, r, out.upper_bound.as_ref()).map_err(stage("write"))?;
        files.push(("report.csv".into(), csv));
    }

    let mut outputs = Vec::new();
    for (rel, bytes) in &files {
        write_atomic(&config.output.join(rel), bytes).map_err(stage("write"))?;
        outputs.push(FileDigest {
            path: rel.clone(),
            sha256: sha256_hex(bytes),
        });
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        settings: config.settings.clone(),
        seed: config.settings.forest.seed,
        train_tiles: train.iter().map(|m| m.tile_id().to_string()).collect(),
        test_tiles: test.iter().map(|m| m.tile_id().to_string()).collect(),
        inputs,
        outputs,
    };
    write_atomic(
        &config.output.join("manifest.json"),
        &serde_json::to_vec_pretty(&manifest).expect("manifest serialises"),
    )
    .map_err(stage("write"))?;
    Ok(manifest)
}

/// Reads a feature matrix written by [`write_feature_csv`].
pub fn load_feature_rows(path: &Path) -> Result<Vec<FeatureRow>, WorkflowError> {
    let f = std::fs::File::open(path).map_err(stage("load"))?;
    read_feature_csv(f).map_err(stage("load"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_config_with_defaults() {
        let cfg = PipelineConfig::parse(
            r#"
            train = ["a.ply"]
            test = ["b.ply"]
            output = "out"
            weighting = "uniform"
            ablate = ["inmat"]
            [forest]
            n_trees = 10
            "#,
            false,
        )
        .unwrap();
        assert_eq!(cfg.settings.forest.n_trees, 10);
        assert_eq!(cfg.settings.forest.max_depth, 30);
        assert_eq!(cfg.settings.segmentation, SegmentationParams::default());
        assert_eq!(cfg.settings.weighting, SampleWeighting::Uniform);
        assert!(!cfg.settings.mask().unwrap()[11]);
    }

    #[test]
    fn unknown_ablation_group_names_the_stage() {
        let s = PipelineSettings {
            ablate: vec!["colour".into()],
            ..Default::default()
        };
        let e = s.mask().unwrap_err();
        assert!(e.to_string().starts_with("configure:"), "{e}");
    }
}
