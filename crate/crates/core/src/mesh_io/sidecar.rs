//! Texel sidecar: UTF-8 text, one sample per line.
//!
//! ```text
//! # face_index r g b [w0 w1 w2]
//! 0 120 131 90
//! 0 118 129 95 0.2 0.3 0.5
//! ```
//!
//! The optional trailing barycentric weights place the sample on the face;
//! without them the sample sits at the face centroid. Blank lines and `#`
//! comments are ignored.

use super::{ColorSample, MeshError, TriangleMesh};
use std::collections::BTreeMap;

/// Replaces the colour samples of every face listed in `sidecar` with the
/// samples listed for it. Faces not mentioned keep their samples.
pub fn attach_texel_samples(
    mut mesh: TriangleMesh,
    sidecar: &[u8],
) -> Result<TriangleMesh, MeshError> {
    let text = std::str::from_utf8(sidecar).map_err(|_| MeshError::Sidecar {
        line: 0,
        msg: "not valid UTF-8".into(),
    })?;
    let mut per_face: BTreeMap<usize, Vec<ColorSample>> = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| MeshError::Sidecar { line: ln + 1, msg };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 && fields.len() != 7 {
            return Err(err(format!(
                "expected 4 or 7 fields, found {}",
                fields.len()
            )));
        }
        let face: usize = fields[0]
            .parse()
            .map_err(|_| err(format!("bad face index {:?}", fields[0])))?;
        if face >= mesh.face_count() {
            return Err(err(format!(
                "face index {face} out of range ({} faces)",
                mesh.face_count()
            )));
        }
        let mut rgb = [0u8; 3];
        for k in 0..3 {
            let v: i64 = fields[1 + k]
                .parse()
                .map_err(|_| err(format!("bad channel value {:?}", fields[1 + k])))?;
            rgb[k] = u8::try_from(v).map_err(|_| err(format!("channel out of range: {v}")))?;
        }
        let site = if fields.len() == 7 {
            let mut w = [0.0; 3];
            for k in 0..3 {
                w[k] = fields[4 + k]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite() && *v >= 0.0)
                    .ok_or_else(|| err(format!("bad barycentric weight {:?}", fields[4 + k])))?;
            }
            let sum: f64 = w.iter().sum();
            if sum <= 0.0 {
                return Err(err("barycentric weights sum to zero".into()));
            }
            w.map(|x| x / sum)
        } else {
            ColorSample::CENTROID
        };
        per_face.entry(face).or_default().push(ColorSample { rgb, site });
    }
    for (face, samples) in per_face {
        mesh.set_face_colors(face, samples)?;
    }
    Ok(mesh)
}
