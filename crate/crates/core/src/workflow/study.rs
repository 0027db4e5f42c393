//! Training-amount and feature-ablation studies.

use super::pipeline::{evaluate_model, prepare_tiles, train_model, PipelineSettings, PreparedTiles};
use super::WorkflowError;
use crate::features::FeatureRow;
use crate::forest::ForestParams;
use crate::mesh_io::TriangleMesh;
use crate::metrics::{aggregate, AggregateReport, MetricsReport};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Nested subsets of `areas` (one per fraction) from a seeded shuffle: the
/// subset for fraction `f` is the shortest prefix of the shuffled order whose
/// area reaches `f` of the total. Each subset is returned in ascending index
/// order, so fraction 1 yields every index in its original position.
pub fn nested_subsets(
    areas: &[f64],
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<Vec<usize>>, WorkflowError> {
    if let Some(&f) = fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
        return Err(WorkflowError::InvalidFraction(f));
    }
    let mut order: Vec<usize> = (0..areas.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let total: f64 = areas.iter().sum();
    Ok(fractions
        .iter()
        .map(|&f| {
            let mut taken = Vec::new();
            let mut acc = 0.0;
            for &i in &order {
                if f < 1.0 && acc >= f * total {
                    break;
                }
                acc += areas[i];
                taken.push(i);
            }
            taken.sort_unstable();
            taken
        })
        .collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FractionResult {
    pub fraction: f64,
    /// Training area actually used, per repeat (m²).
    pub training_area: Vec<f64>,
    pub runs: Vec<MetricsReport>,
    pub summary: AggregateReport,
}

/// Trains on nested random area fractions of the training segments and
/// evaluates every model on the test tiles. Repeat `k` shuffles with
/// `seed + k` and trains with forest seed `settings.forest.seed + k`.
pub fn training_amount_study(
    train: &[TriangleMesh],
    test: &[TriangleMesh],
    settings: &PipelineSettings,
    fractions: &[f64],
    repeats: usize,
    seed: u64,
) -> Result<Vec<FractionResult>, WorkflowError> {
    if fractions.len() < 2 {
        return Err(WorkflowError::TooFewFractions);
    }
    if repeats == 0 {
        return Err(WorkflowError::Config("repeats must be ≥ 1".into()));
    }
    let train_p = prepare_tiles(train, settings)?;
    let test_p = prepare_tiles(test, settings)?;
    let rows: Vec<&FeatureRow> = train_p
        .rows
        .iter()
        .flatten()
        .filter(|r| r.label.is_classified())
        .collect();
    let areas: Vec<f64> = rows.iter().map(|r| r.area()).collect();
    let mask = settings.mask()?;
    let mut results: Vec<FractionResult> = fractions
        .iter()
        .map(|&fraction| FractionResult {
            fraction,
            training_area: Vec::new(),
            runs: Vec::new(),
            summary: empty_summary(),
        })
        .collect();
    for k in 0..repeats {
        let subsets = nested_subsets(&areas, fractions, seed.wrapping_add(k as u64))?;
        let run_settings = PipelineSettings {
            forest: ForestParams {
                seed: settings.forest.seed.wrapping_add(k as u64),
                ..settings.forest.clone()
            },
            ..settings.clone()
        };
        for (res, subset) in results.iter_mut().zip(subsets) {
            let model = train_model(subset.iter().map(|&i| rows[i]), &run_settings)?;
            let eval = evaluate_model(&model, test, &test_p, &mask)?;
            res.runs.push(eval.report.ok_or(WorkflowError::NoGroundTruth)?);
            res.training_area.push(subset.iter().map(|&i| areas[i]).sum());
        }
    }
    for r in &mut results {
        r.summary = aggregate(&r.runs).expect("at least one run");
    }
    Ok(results)
}

fn empty_summary() -> AggregateReport {
    let z = crate::metrics::MeanStd { mean: 0.0, std: 0.0 };
    AggregateReport {
        runs: 0,
        oa: z,
        macc: z,
        miou: z,
        mf1: z,
        class_iou: vec![z; 6],
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationResult {
    pub removed: Vec<String>,
    pub report: MetricsReport,
}

/// One model per list of removed feature groups, all on the same segments
/// and features.
pub fn ablation_study(
    train: &[TriangleMesh],
    test: &[TriangleMesh],
    settings: &PipelineSettings,
    variants: &[Vec<String>],
) -> Result<Vec<AblationResult>, WorkflowError> {
    let train_p: PreparedTiles = prepare_tiles(train, settings)?;
    let test_p = prepare_tiles(test, settings)?;
    variants
        .iter()
        .map(|removed| {
            let s = PipelineSettings {
                ablate: removed.clone(),
                ..settings.clone()
            };
            let model = train_model(train_p.rows.iter().flatten(), &s)?;
            let eval = evaluate_model(&model, test, &test_p, &s.mask()?)?;
            Ok(AblationResult {
                removed: removed.clone(),
                report: eval.report.ok_or(WorkflowError::NoGroundTruth)?,
            })
        })
        .collect()
}
