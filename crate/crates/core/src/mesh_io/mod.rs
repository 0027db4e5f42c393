//! Triangle meshes carrying per-face semantic attributes, plus the PLY and
//! texel-sidecar codecs.
//!
//! A [`TriangleMesh`] can only be constructed through validating entry points,
//! so every value of the type satisfies the structural invariants: indices in
//! range, three distinct corners per face, strictly positive face area, one
//! label / segment id / colour list per face and at least one colour sample per
//! face.
//!
//! Radiometry is not read from texture atlases. Colour enters either as
//! per-vertex or per-face PLY colours, or as texel samples from a sidecar file
//! (see [`attach_texel_samples`]). Each sample remembers the barycentric site it
//! was taken at so point sampling can transfer the nearest colour later.

mod ply;
mod sidecar;

pub use ply::{parse_ply, write_ply, write_point_cloud_ply, PlyFormat};
pub use sidecar::attach_texel_samples;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("malformed PLY header: {0}")]
    Header(String),
    #[error("malformed PLY body: {0}")]
    Body(String),
    #[error("face {face} references vertex {vertex} but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, vertex: i64, count: usize },
    #[error("face {face} has {count} corners, only triangles are supported")]
    NotTriangle { face: usize, count: usize },
    #[error("face {face} repeats a vertex index")]
    RepeatedVertex { face: usize },
    #[error("face {face} is degenerate (zero area)")]
    DegenerateFace { face: usize },
    #[error("face {face} has no colour samples")]
    MissingColor { face: usize },
    #[error("vertex {0} has a non-finite coordinate")]
    NonFiniteVertex(usize),
    #[error("{what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("invalid class id {0}")]
    InvalidClass(i64),
    #[error("sidecar line {line}: {msg}")]
    Sidecar { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Semantic class of a face.
///
/// Ids are fixed for interchange: 0 unclassified, 1 terrain, 2 high
/// vegetation, 3 building, 4 water, 5 vehicle, 6 boat.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(try_from = "u8", into = "u8")]
pub struct ClassId(u8);

impl ClassId {
    pub const UNCLASSIFIED: ClassId = ClassId(0);
    pub const TERRAIN: ClassId = ClassId(1);
    pub const HIGH_VEGETATION: ClassId = ClassId(2);
    pub const BUILDING: ClassId = ClassId(3);
    pub const WATER: ClassId = ClassId(4);
    pub const VEHICLE: ClassId = ClassId(5);
    pub const BOAT: ClassId = ClassId(6);

    /// The six classes that take part in training and evaluation.
    pub const LABELLED: [ClassId; 6] = [
        ClassId(1),
        ClassId(2),
        ClassId(3),
        ClassId(4),
        ClassId(5),
        ClassId(6),
    ];

    pub fn new(value: u8) -> Option<Self> {
        (value <= 6).then_some(ClassId(value))
    }

    pub fn from_i64(value: i64) -> Result<Self, MeshError> {
        u8::try_from(value)
            .ok()
            .and_then(ClassId::new)
            .ok_or(MeshError::InvalidClass(value))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn is_classified(self) -> bool {
        self.0 != 0
    }

    /// Position of a labelled class in 6-element per-class arrays.
    ///
    /// Panics for [`ClassId::UNCLASSIFIED`].
    pub fn slot(self) -> usize {
        assert!(self.0 > 0, "unclassified has no per-class slot");
        self.0 as usize - 1
    }

    pub fn from_slot(slot: usize) -> Self {
        ClassId::LABELLED[slot]
    }

    pub fn name(self) -> &'static str {
        match self.0 {
            0 => "unclassified",
            1 => "terrain",
            2 => "high_vegetation",
            3 => "building",
            4 => "water",
            5 => "vehicle",
            _ => "boat",
        }
    }
}

impl TryFrom<u8> for ClassId {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        ClassId::new(value).ok_or_else(|| format!("class id {value} out of range 0..=6"))
    }
}

impl From<ClassId> for u8 {
    fn from(c: ClassId) -> u8 {
        c.0
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One RGB observation on a face, located by barycentric coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColorSample {
    pub rgb: [u8; 3],
    pub site: [f64; 3],
}

impl ColorSample {
    pub const CENTROID: [f64; 3] = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];

    pub fn at_centroid(rgb: [u8; 3]) -> Self {
        ColorSample {
            rgb,
            site: Self::CENTROID,
        }
    }

    pub fn at_corner(rgb: [u8; 3], corner: usize) -> Self {
        let mut site = [0.0; 3];
        site[corner] = 1.0;
        ColorSample { rgb, site }
    }
}

/// Colour given to faces of meshes that carry no radiometry at all.
pub const DEFAULT_FACE_COLOR: [u8; 3] = [128, 128, 128];

/// Undirected edge adjacency of a mesh.
///
/// Non-manifold edges link every incident face to every other.
#[derive(Clone, Debug)]
pub struct MeshTopology {
    /// Sorted, deduplicated edge neighbours per face.
    pub adjacency: Vec<Vec<u32>>,
    /// Every undirected edge `(low, high)` with its incident faces, sorted by edge.
    pub edges: Vec<([u32; 2], Vec<u32>)>,
}

#[derive(Clone, Debug)]
pub struct TriangleMesh {
    tile_id: String,
    vertices: Vec<Point3<f64>>,
    faces: Vec<[u32; 3]>,
    face_labels: Vec<ClassId>,
    face_segments: Vec<i32>,
    face_colors: Vec<Vec<ColorSample>>,
    face_areas: Vec<f64>,
}

impl TriangleMesh {
    /// Mesh with default attributes: unclassified labels, unassigned segments,
    /// and a single grey sample per face.
    pub fn new(
        tile_id: impl Into<String>,
        vertices: Vec<Point3<f64>>,
        faces: Vec<[u32; 3]>,
    ) -> Result<Self, MeshError> {
        let n = faces.len();
        Self::from_parts(
            tile_id,
            vertices,
            faces,
            vec![ClassId::UNCLASSIFIED; n],
            vec![-1; n],
            vec![vec![ColorSample::at_centroid(DEFAULT_FACE_COLOR)]; n],
        )
    }

    pub fn from_parts(
        tile_id: impl Into<String>,
        vertices: Vec<Point3<f64>>,
        faces: Vec<[u32; 3]>,
        face_labels: Vec<ClassId>,
        face_segments: Vec<i32>,
        face_colors: Vec<Vec<ColorSample>>,
    ) -> Result<Self, MeshError> {
        let n = faces.len();
        check_len("face_labels", face_labels.len(), n)?;
        check_len("face_segments", face_segments.len(), n)?;
        check_len("face_colors", face_colors.len(), n)?;
        if let Some(i) = vertices
            .iter()
            .position(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(MeshError::NonFiniteVertex(i));
        }
        let mut face_areas = Vec::with_capacity(n);
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v as usize >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        face: fi,
                        vertex: v as i64,
                        count: vertices.len(),
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::RepeatedVertex { face: fi });
            }
            let area = triangle_area(
                &vertices[f[0] as usize],
                &vertices[f[1] as usize],
                &vertices[f[2] as usize],
            );
            if !(area > 0.0) {
                return Err(MeshError::DegenerateFace { face: fi });
            }
            if face_colors[fi].is_empty() {
                return Err(MeshError::MissingColor { face: fi });
            }
            face_areas.push(area);
        }
        Ok(TriangleMesh {
            tile_id: tile_id.into(),
            vertices,
            faces,
            face_labels,
            face_segments,
            face_colors,
            face_areas,
        })
    }

    pub fn tile_id(&self) -> &str {
        &self.tile_id
    }

    pub fn set_tile_id(&mut self, id: impl Into<String>) {
        self.tile_id = id.into();
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn face_labels(&self) -> &[ClassId] {
        &self.face_labels
    }

    pub fn face_segments(&self) -> &[i32] {
        &self.face_segments
    }

    pub fn face_colors(&self) -> &[Vec<ColorSample>] {
        &self.face_colors
    }

    pub fn face_areas(&self) -> &[f64] {
        &self.face_areas
    }

    pub fn face_area(&self, face: usize) -> f64 {
        self.face_areas[face]
    }

    pub fn total_area(&self) -> f64 {
        self.face_areas.iter().sum()
    }

    pub fn face_points(&self, face: usize) -> [Point3<f64>; 3] {
        let f = self.faces[face];
        [
            self.vertices[f[0] as usize],
            self.vertices[f[1] as usize],
            self.vertices[f[2] as usize],
        ]
    }

    /// Unit normal from the corner order as stored (no re-orientation).
    pub fn face_normal(&self, face: usize) -> Vector3<f64> {
        let [a, b, c] = self.face_points(face);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn face_centroid(&self, face: usize) -> Point3<f64> {
        let [a, b, c] = self.face_points(face);
        Point3::from((a.coords + b.coords + c.coords) / 3.0)
    }

    /// Point at barycentric coordinates `w` on `face`.
    pub fn barycentric_point(&self, face: usize, w: [f64; 3]) -> Point3<f64> {
        let [a, b, c] = self.face_points(face);
        Point3::from(a.coords * w[0] + b.coords * w[1] + c.coords * w[2])
    }

    pub fn set_face_label(&mut self, face: usize, label: ClassId) {
        self.face_labels[face] = label;
    }

    pub fn set_face_labels(&mut self, labels: Vec<ClassId>) -> Result<(), MeshError> {
        check_len("face_labels", labels.len(), self.faces.len())?;
        self.face_labels = labels;
        Ok(())
    }

    pub fn set_face_segments(&mut self, segments: Vec<i32>) -> Result<(), MeshError> {
        check_len("face_segments", segments.len(), self.faces.len())?;
        self.face_segments = segments;
        Ok(())
    }

    pub fn set_face_colors(
        &mut self,
        face: usize,
        samples: Vec<ColorSample>,
    ) -> Result<(), MeshError> {
        if samples.is_empty() {
            return Err(MeshError::MissingColor { face });
        }
        self.face_colors[face] = samples;
        Ok(())
    }

    /// Applies `f` to every vertex and revalidates.
    pub fn map_vertices(
        &self,
        f: impl Fn(&Point3<f64>) -> Point3<f64>,
    ) -> Result<TriangleMesh, MeshError> {
        TriangleMesh::from_parts(
            self.tile_id.clone(),
            self.vertices.iter().map(f).collect(),
            self.faces.clone(),
            self.face_labels.clone(),
            self.face_segments.clone(),
            self.face_colors.clone(),
        )
    }

    pub fn bounding_box(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = Point3::from([f64::INFINITY; 3]);
        let mut hi = Point3::from([f64::NEG_INFINITY; 3]);
        for p in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// Area-weighted average of incident face normals, normalised.
    ///
    /// Vertices with no incident faces, or whose normals cancel out, get a
    /// zero vector.
    pub fn vertex_normals(&self) -> Vec<Vector3<f64>> {
        let mut acc = vec![Vector3::zeros(); self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            let [a, b, c] = self.face_points(fi);
            // |cross| = 2 * area, so the raw cross product is already area weighted.
            let n = (b - a).cross(&(c - a));
            for &v in f {
                acc[v as usize] += n;
            }
        }
        acc.into_iter()
            .map(|n| {
                let len = n.norm();
                if len > 0.0 {
                    n / len
                } else {
                    Vector3::zeros()
                }
            })
            .collect()
    }

    pub fn topology(&self) -> MeshTopology {
        let mut by_edge: HashMap<[u32; 2], Vec<u32>> = HashMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = if a < b { [a, b] } else { [b, a] };
                by_edge.entry(key).or_default().push(fi as u32);
            }
        }
        let mut edges: Vec<_> = by_edge.into_iter().collect();
        edges.sort_unstable_by_key(|(e, _)| *e);
        let mut adjacency = vec![Vec::new(); self.faces.len()];
        for (_, fs) in &edges {
            for &a in fs {
                for &b in fs {
                    if a != b {
                        adjacency[a as usize].push(b);
                    }
                }
            }
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
            adj.dedup();
        }
        MeshTopology { adjacency, edges }
    }

    /// Per-vertex colours if every face carries exactly its three corner
    /// samples and the corners agree across faces.
    pub fn vertex_colors(&self) -> Option<Vec<[u8; 3]>> {
        let mut colors: Vec<Option<[u8; 3]>> = vec![None; self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            let samples = &self.face_colors[fi];
            if samples.len() != 3 {
                return None;
            }
            for (corner, s) in samples.iter().enumerate() {
                if s != &ColorSample::at_corner(s.rgb, corner) {
                    return None;
                }
                let slot = &mut colors[f[corner] as usize];
                match slot {
                    Some(c) if *c != s.rgb => return None,
                    _ => *slot = Some(s.rgb),
                }
            }
        }
        Some(
            colors
                .into_iter()
                .map(|c| c.unwrap_or(DEFAULT_FACE_COLOR))
                .collect(),
        )
    }

    /// Mean RGB of the samples of one face, rounded.
    pub fn mean_face_color(&self, face: usize) -> [u8; 3] {
        let samples = &self.face_colors[face];
        let mut sum = [0.0f64; 3];
        for s in samples {
            for k in 0..3 {
                sum[k] += s.rgb[k] as f64;
            }
        }
        let n = samples.len() as f64;
        sum.map(|c| (c / n).round().clamp(0.0, 255.0) as u8)
    }
}

pub fn triangle_area(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<(), MeshError> {
    if got == expected {
        Ok(())
    } else {
        Err(MeshError::LengthMismatch {
            what,
            got,
            expected,
        })
    }
}
