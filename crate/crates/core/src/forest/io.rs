//! Model container: `MLRF`, u32 version, u32 header length, a JSON header,
//! then every tree as a u32 node count followed by its nodes. All integers
//! and floats are little endian.
//!
//! Node encoding: tag `0` (split) + u32 dim + f64 threshold + u32 left +
//! u32 right, or tag `1` (leaf) + 6 × f64 class probabilities.

use super::{schema_hash, ForestError, ForestModel, ForestParams, Node, Tree, N_CLASSES};
use crate::mesh_io::ClassId;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use std::io::{Cursor, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"MLRF";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    params: ForestParams,
    classes: Vec<ClassId>,
    n_features: usize,
    schema_hash: String,
    importances: Vec<f64>,
    n_trees: usize,
}

fn bad(msg: impl Into<String>) -> ForestError {
    ForestError::Format(msg.into())
}

impl ForestModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format: "meshlabel-forest".into(),
            params: self.params.clone(),
            classes: self.classes.clone(),
            n_features: self.n_features,
            schema_hash: self.schema_hash(),
            importances: self.importances.clone(),
            n_trees: self.trees.len(),
        };
        let json = serde_json::to_vec(&header).expect("header serialises");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(FORMAT_VERSION).unwrap();
        out.write_u32::<LittleEndian>(json.len() as u32).unwrap();
        out.extend_from_slice(&json);
        for t in &self.trees {
            out.write_u32::<LittleEndian>(t.nodes.len() as u32).unwrap();
            for n in &t.nodes {
                match n {
                    Node::Split {
                        dim,
                        threshold,
                        left,
                        right,
                    } => {
                        out.push(0);
                        out.write_u32::<LittleEndian>(*dim).unwrap();
                        out.write_f64::<LittleEndian>(*threshold).unwrap();
                        out.write_u32::<LittleEndian>(*left).unwrap();
                        out.write_u32::<LittleEndian>(*right).unwrap();
                    }
                    Node::Leaf { probs } => {
                        out.push(1);
                        for p in probs {
                            out.write_f64::<LittleEndian>(*p).unwrap();
                        }
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ForestModel, ForestError> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated"))?;
        if &magic != MAGIC {
            return Err(bad("not a forest model"));
        }
        let version = r.read_u32::<LittleEndian>().map_err(|_| bad("truncated"))?;
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let len = r.read_u32::<LittleEndian>().map_err(|_| bad("truncated"))? as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(|_| bad("truncated header"))?;
        let h: Header = serde_json::from_slice(&json).map_err(|e| bad(e.to_string()))?;
        if h.schema_hash != schema_hash(h.n_features) {
            return Err(bad("feature schema hash does not match this build"));
        }
        if h.importances.len() != h.n_features {
            return Err(bad("importance vector length"));
        }
        let mut trees = Vec::with_capacity(h.n_trees);
        for _ in 0..h.n_trees {
            let count = r.read_u32::<LittleEndian>().map_err(|_| bad("truncated tree"))? as usize;
            let mut nodes = Vec::with_capacity(count);
            for _ in 0..count {
                nodes.push(read_node(&mut r).map_err(|_| bad("truncated node"))?);
            }
            let valid = !nodes.is_empty()
                && nodes.iter().all(|n| match n {
                    Node::Split {
                        dim, left, right, ..
                    } => {
                        (*dim as usize) < h.n_features
                            && (*left as usize) < count
                            && (*right as usize) < count
                    }
                    Node::Leaf { .. } => true,
                });
            if !valid {
                return Err(bad("corrupt tree"));
            }
            trees.push(Tree { nodes });
        }
        if (r.position() as usize) != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(ForestModel {
            params: h.params,
            trees,
            classes: h.classes,
            n_features: h.n_features,
            importances: h.importances,
        })
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), ForestError> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ForestModel, ForestError> {
        ForestModel::from_bytes(&std::fs::read(path)?)
    }
}

fn read_node(r: &mut Cursor<&[u8]>) -> std::io::Result<Node> {
    match r.read_u8()? {
        0 => Ok(Node::Split {
            dim: r.read_u32::<LittleEndian>()?,
            threshold: r.read_f64::<LittleEndian>()?,
            left: r.read_u32::<LittleEndian>()?,
            right: r.read_u32::<LittleEndian>()?,
        }),
        1 => {
            let mut probs = [0.0; N_CLASSES];
            for p in &mut probs {
                *p = r.read_f64::<LittleEndian>()?;
            }
            Ok(Node::Leaf { probs })
        }
        _ => Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "node tag")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i * 7 % 5) as f64]).collect();
        let y: Vec<ClassId> = (0..30)
            .map(|i| if i < 12 { ClassId::TERRAIN } else { ClassId::VEHICLE })
            .collect();
        let params = ForestParams {
            n_trees: 5,
            seed: 11,
            ..Default::default()
        };
        let m = ForestModel::train(&x, &y, &vec![1.0; 30], &params).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], b"MLRF");
        assert_eq!(ForestModel::from_bytes(&bytes).unwrap(), m);
        assert!(ForestModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[4] = 9;
        assert!(ForestModel::from_bytes(&wrong).is_err());
    }
}
