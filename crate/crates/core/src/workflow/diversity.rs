//! Tile feature diversity and ranking.

use super::WorkflowError;
use crate::features::{FeatureVector, FEATURE_DIM};

/// Population variance of the descriptor's components,
/// `F_m = Σ (f_i - f̄)² / N_f`, evaluated through the equivalent pairwise form
/// `Σ_{i<j} (f_i - f_j)² / N_f²` so a constant descriptor gives exactly 0.
pub fn feature_diversity(descriptor: &[f64]) -> f64 {
    let n = descriptor.len() as f64;
    let mut acc = 0.0;
    for (i, a) in descriptor.iter().enumerate() {
        for b in &descriptor[i + 1..] {
            acc += (a - b) * (a - b);
        }
    }
    acc / (n * n)
}

/// The segment features of one tile.
#[derive(Clone, Debug)]
pub struct TileFeatures {
    pub tile_id: String,
    pub features: Vec<FeatureVector>,
}

/// Per-tile descriptors: every dimension is min-max normalised over all
/// segments of all tiles (constant dimensions become 0), then averaged per
/// tile with segment area as weight.
pub fn tile_descriptors(tiles: &[TileFeatures]) -> Result<Vec<[f64; FEATURE_DIM]>, WorkflowError> {
    if let Some(t) = tiles.iter().find(|t| t.features.is_empty()) {
        return Err(WorkflowError::EmptyTile(t.tile_id.clone()));
    }
    let mut lo = [f64::INFINITY; FEATURE_DIM];
    let mut hi = [f64::NEG_INFINITY; FEATURE_DIM];
    for f in tiles.iter().flat_map(|t| &t.features) {
        for d in 0..FEATURE_DIM {
            lo[d] = lo[d].min(f[d]);
            hi[d] = hi[d].max(f[d]);
        }
    }
    Ok(tiles
        .iter()
        .map(|t| {
            let mut acc = [0.0; FEATURE_DIM];
            let mut total = 0.0;
            for f in &t.features {
                let w = f[9];
                total += w;
                for d in 0..FEATURE_DIM {
                    if hi[d] > lo[d] {
                        acc[d] += w * (f[d] - lo[d]) / (hi[d] - lo[d]);
                    }
                }
            }
            acc.map(|a| a / total)
        })
        .collect())
}

/// `(tile_id, F_m)` for every tile, in input order.
pub fn tile_diversities(tiles: &[TileFeatures]) -> Result<Vec<(String, f64)>, WorkflowError> {
    Ok(tiles
        .iter()
        .zip(tile_descriptors(tiles)?)
        .map(|(t, d)| (t.tile_id.clone(), feature_diversity(&d)))
        .collect())
}

/// Tile ids by descending diversity, ties by ascending id.
pub fn rank_tiles(diversities: &[(String, f64)]) -> Vec<String> {
    let mut v: Vec<&(String, f64)> = diversities.iter().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().map(|(id, _)| id.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_descriptor_has_zero_diversity() {
        assert_eq!(feature_diversity(&[0.3; 44]), 0.0);
    }

    #[test]
    fn single_spike() {
        let mut d = [0.0; 44];
        d[1] = 1.0;
        let mean = 1.0 / 44.0;
        let expect = (43.0 * mean * mean + (1.0 - mean) * (1.0 - mean)) / 44.0;
        assert!((feature_diversity(&d) - expect).abs() < 1e-15);
    }

    #[test]
    fn ranking_breaks_ties_by_id() {
        let r = rank_tiles(&[
            ("b".into(), 0.5),
            ("a".into(), 0.5),
            ("c".into(), 0.9),
        ]);
        assert_eq!(r, vec!["c", "a", "b"]);
        assert_eq!(rank_tiles(&[("x".into(), 0.0)]), vec!["x"]);
    }

    #[test]
    fn empty_tile_is_an_error() {
        let t = TileFeatures {
            tile_id: "e".into(),
            features: vec![],
        };
        assert!(matches!(tile_descriptors(&[t]), Err(WorkflowError::EmptyTile(_))));
    }
}
