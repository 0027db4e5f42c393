//! Random forest over segment feature vectors.
//!
//! Each tree is grown on a weighted bootstrap sample (n draws with
//! replacement, probability proportional to the sample weight) using Gini
//! impurity and `features_per_split` random candidate dimensions per node.
//! Tree `t` draws from its own ChaCha stream seeded with `seed + t`, so the
//! model does not depend on the number of worker threads.

mod io;
mod tree;

pub use io::{FORMAT_VERSION, MAGIC};
pub use tree::{Node, Tree};

use crate::features::{FeatureGroup, FEATURE_DIM, FEATURE_NAMES};
use crate::mesh_io::ClassId;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tree::{Grower, TreeConfig};

/// Number of labelled classes; probability vectors are indexed by class - 1.
pub const N_CLASSES: usize = 6;

#[derive(Debug, thiserror::Error)]
pub enum ForestError {
    #[error("empty training set")]
    Empty,
    #[error("sample {0} is labelled unclassified")]
    Unclassified(usize),
    #[error("{x} feature rows, {y} labels, {w} weights")]
    LengthMismatch { x: usize, y: usize, w: usize },
    #[error("feature vector has {got} entries, model expects {expected}")]
    WrongDimension { expected: usize, got: usize },
    #[error("sample weight {weight} at {index} is negative or not finite")]
    BadWeight { index: usize, weight: f64 },
    #[error("all sample weights are zero")]
    ZeroWeight,
    #[error("forest has no trees")]
    NoTrees,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub features_per_split: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 30,
            min_samples_leaf: 1,
            features_per_split: (FEATURE_DIM as f64).sqrt().ceil() as usize,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), ForestError> {
        if self.min_samples_leaf == 0 {
            return Err(ForestError::InvalidParams("min_samples_leaf must be ≥ 1".into()));
        }
        if self.features_per_split == 0 {
            return Err(ForestError::InvalidParams("features_per_split must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: ClassId,
    /// Indexed by class - 1; sums to 1.
    pub probabilities: [f64; N_CLASSES],
}

impl Prediction {
    pub fn confidence(&self) -> f64 {
        self.probabilities[self.class.slot()]
    }

    /// Argmax with ties to the lower class.
    pub fn from_probabilities(probabilities: [f64; N_CLASSES]) -> Prediction {
        let mut k = 0;
        for i in 1..N_CLASSES {
            if probabilities[i] > probabilities[k] {
                k = i;
            }
        }
        Prediction {
            class: ClassId::from_slot(k),
            probabilities,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    pub(crate) params: ForestParams,
    pub(crate) trees: Vec<Tree>,
    pub(crate) classes: Vec<ClassId>,
    pub(crate) n_features: usize,
    pub(crate) importances: Vec<f64>,
}

impl ForestModel {
    /// Trains on rows `x` with labels `y` (1..=6) and non-negative weights `w`.
    pub fn train<X: AsRef<[f64]> + Sync>(
        x: &[X],
        y: &[ClassId],
        w: &[f64],
        params: &ForestParams,
    ) -> Result<ForestModel, ForestError> {
        params.validate()?;
        if x.len() != y.len() || x.len() != w.len() {
            return Err(ForestError::LengthMismatch {
                x: x.len(),
                y: y.len(),
                w: w.len(),
            });
        }
        if x.is_empty() {
            return Err(ForestError::Empty);
        }
        let rows: Vec<&[f64]> = x.iter().map(|r| r.as_ref()).collect();
        let n_features = rows[0].len();
        if n_features == 0 {
            return Err(ForestError::WrongDimension {
                expected: FEATURE_DIM,
                got: 0,
            });
        }
        if let Some(r) = rows.iter().find(|r| r.len() != n_features) {
            return Err(ForestError::WrongDimension {
                expected: n_features,
                got: r.len(),
            });
        }
        if let Some(i) = y.iter().position(|c| !c.is_classified()) {
            return Err(ForestError::Unclassified(i));
        }
        if let Some((index, &weight)) = w
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
        {
            return Err(ForestError::BadWeight { index, weight });
        }
        let sampler = WeightedIndex::new(w).map_err(|_| ForestError::ZeroWeight)?;
        let slots: Vec<u8> = y.iter().map(|c| c.slot() as u8).collect();
        let mut classes: Vec<ClassId> = y.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let config = TreeConfig {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            features_per_split: params.features_per_split,
        };
        let columns: Vec<Vec<f64>> = (0..n_features)
            .map(|d| {
                let mut col: Vec<f64> = rows.iter().map(|r| r[d]).collect();
                col.sort_by(f64::total_cmp);
                col.dedup();
                col
            })
            .collect();
        let grown: Vec<(Tree, Vec<f64>)> = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(t as u64));
                let boot: Vec<usize> = (0..rows.len()).map(|_| sampler.sample(&mut rng)).collect();
                Grower::new(&rows, &slots, &columns, &config, &mut rng, n_features).grow(boot)
            })
            .collect();
        let mut importances = vec![0.0; n_features];
        let mut credited = 0usize;
        for (_, dec) in &grown {
            let total: f64 = dec.iter().map(|d| d.max(0.0)).sum();
            if total > 0.0 {
                credited += 1;
                for (acc, d) in importances.iter_mut().zip(dec) {
                    *acc += d.max(0.0) / total;
                }
            }
        }
        if credited == 0 {
            // No tree ever split: nothing to rank.
            importances.fill(1.0 / n_features as f64);
        } else {
            let s: f64 = importances.iter().sum();
            importances.iter_mut().for_each(|v| *v /= s);
        }
        Ok(ForestModel {
            params: params.clone(),
            trees: grown.into_iter().map(|(t, _)| t).collect(),
            classes,
            n_features,
            importances,
        })
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Classes seen in training, ascending.
    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Normalised mean impurity decrease per dimension; sums to 1.
    pub fn feature_importance(&self) -> &[f64] {
        &self.importances
    }

    /// Importance summed per feature group (44-dimensional models only).
    pub fn group_importance(&self) -> Option<Vec<(FeatureGroup, f64)>> {
        (self.n_features == FEATURE_DIM).then(|| {
            FeatureGroup::ALL
                .iter()
                .map(|g| (*g, g.indices().map(|i| self.importances[i]).sum()))
                .collect()
        })
    }

    /// Mean of the per-tree leaf distributions; argmax ties to the lower class.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction, ForestError> {
        if self.trees.is_empty() {
            return Err(ForestError::NoTrees);
        }
        if x.len() != self.n_features {
            return Err(ForestError::WrongDimension {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let mut p = [0.0; N_CLASSES];
        for t in &self.trees {
            for (acc, v) in p.iter_mut().zip(t.leaf(x)) {
                *acc += v;
            }
        }
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        Ok(Prediction::from_probabilities(p))
    }

    pub fn predict_many<X: AsRef<[f64]> + Sync>(&self, x: &[X]) -> Result<Vec<Prediction>, ForestError> {
        x.par_iter().map(|r| self.predict(r.as_ref())).collect()
    }

    /// Hash of the feature layout the model was trained on.
    pub fn schema_hash(&self) -> String {
        schema_hash(self.n_features)
    }
}

/// SHA-256 over the newline-joined dimension names (`f0`, `f1`, … for
/// layouts other than the standard 44).
pub fn schema_hash(n_features: usize) -> String {
    let names: Vec<String> = if n_features == FEATURE_DIM {
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..n_features).map(|i| format!("f{i}")).collect()
    };
    crate::digest::sha256_hex(names.join("\n").as_bytes())
}
