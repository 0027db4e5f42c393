//! Train / test / validation splits over tiles.

use super::WorkflowError;
use crate::mesh_io::TriangleMesh;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Test,
    Validation,
    Unlabeled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileRecord {
    pub tile_id: String,
    pub role: Role,
    pub diversity: f64,
    pub refined: bool,
}

/// Uniformly random assignment of `counts = (train, test, validation)`
/// tiles; the rest are unlabeled. The result is sorted by tile id and does
/// not depend on the input order.
pub fn split_dataset(
    tile_ids: &[String],
    counts: (usize, usize, usize),
    seed: u64,
) -> Result<Vec<TileRecord>, WorkflowError> {
    let (tr, te, va) = counts;
    if tr + te + va > tile_ids.len() {
        return Err(WorkflowError::SplitTooLarge {
            requested: tr + te + va,
            available: tile_ids.len(),
        });
    }
    let mut ids: Vec<String> = tile_ids.to_vec();
    ids.sort();
    ids.dedup();
    if ids.len() != tile_ids.len() {
        return Err(WorkflowError::DuplicateTile);
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut roles = vec![Role::Unlabeled; ids.len()];
    for (rank, &i) in order.iter().enumerate() {
        roles[i] = if rank < tr {
            Role::Train
        } else if rank < tr + te {
            Role::Test
        } else if rank < tr + te + va {
            Role::Validation
        } else {
            Role::Unlabeled
        };
    }
    Ok(ids
        .into_iter()
        .zip(roles)
        .map(|(tile_id, role)| TileRecord {
            tile_id,
            role,
            diversity: 0.0,
            refined: false,
        })
        .collect())
}

/// Labelled surface area per role and class (index = class id, 0 =
/// unclassified).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassAreaTable {
    pub per_role: BTreeMap<Role, [f64; 7]>,
}

impl ClassAreaTable {
    pub fn add_mesh(&mut self, role: Role, mesh: &TriangleMesh) {
        let row = self.per_role.entry(role).or_insert([0.0; 7]);
        for (f, c) in mesh.face_labels().iter().enumerate() {
            row[c.get() as usize] += mesh.face_area(f);
        }
    }

    pub fn total(&self) -> f64 {
        self.per_role.values().flatten().sum()
    }
}

pub fn class_area_table<'a>(
    tiles: impl IntoIterator<Item = (Role, &'a TriangleMesh)>,
) -> ClassAreaTable {
    let mut t = ClassAreaTable::default();
    for (role, mesh) in tiles {
        t.add_mesh(role, mesh);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("tile_{i:02}")).collect()
    }

    #[test]
    fn counts_and_determinism() {
        let a = split_dataset(&ids(20), (8, 4, 4), 3).unwrap();
        let count = |r| a.iter().filter(|t| t.role == r).count();
        assert_eq!((count(Role::Train), count(Role::Test), count(Role::Validation), count(Role::Unlabeled)), (8, 4, 4, 4));
        assert_eq!(a, split_dataset(&ids(20), (8, 4, 4), 3).unwrap());
        let mut rev = ids(20);
        rev.reverse();
        assert_eq!(a, split_dataset(&rev, (8, 4, 4), 3).unwrap());
    }

    #[test]
    fn single_tile_to_train() {
        let s = split_dataset(&ids(1), (1, 0, 0), 0).unwrap();
        assert_eq!(s[0].role, Role::Train);
        assert!(split_dataset(&ids(1), (1, 1, 0), 0).is_err());
    }
}
