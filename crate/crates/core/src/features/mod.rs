//! The 44-dimensional per-segment descriptor.
//!
//! | index | feature |
//! |-------|---------|
//! | 0–3   | linearity, sphericity, change of curvature, verticality |
//! | 4     | absolute elevation (mean vertex Z, m) |
//! | 5     | relative elevation above the local largest ground segment (m) |
//! | 6–8   | multiscale elevation at 10 / 20 / 40 m, in `[0, 1]` |
//! | 9     | segment area (m²) |
//! | 10    | triangle density (faces per m²) |
//! | 11    | interior medial-axis radius (m) |
//! | 12–14 | mean H, S, V |
//! | 15–17 | variance of H, S, V |
//! | 18–32 | hue histogram, 15 bins over `[0, 360)` |
//! | 33–37 | saturation histogram, 5 bins |
//! | 38–42 | value histogram, 5 bins |
//! | 43    | greenness |

mod color;
mod eigen;
mod inmat;

pub use color::{color_features, rgb_to_hsv, ColorFeatures, HsvColor};
pub use eigen::{eigen_features, EigenFeatures};
pub use inmat::{
    shrinking_ball_radius, DENOISE_ANGLE as INMAT_DENOISE_ANGLE,
    MAX_ITERATIONS as INMAT_MAX_ITERATIONS,
};

use crate::mesh_io::{ClassId, TriangleMesh};
use crate::segmentation::SegmentSet;
use crate::spatial::{CylinderQuery, SegmentIndex, SpatialError};
use nalgebra::Point2;
use rayon::prelude::*;
use std::io::{Read, Write};
use std::ops::{Index, Range};

pub const FEATURE_DIM: usize = 44;

/// Neighbourhood radius for the local ground search (m).
pub const GROUND_RADIUS: f64 = 30.0;
/// Neighbourhood radii for multiscale elevation (m).
pub const MULTISCALE_RADII: [f64; 3] = [10.0, 20.0, 40.0];
/// A segment is a ground candidate below this verticality...
pub const GROUND_MAX_VERTICALITY: f64 = 0.2;
/// ...and at or above this area (m²).
pub const GROUND_MIN_AREA: f64 = 1.0;

pub static FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "linearity",
    "sphericity",
    "change_of_curvature",
    "verticality",
    "absolute_elevation",
    "relative_elevation",
    "multiscale_elevation_10",
    "multiscale_elevation_20",
    "multiscale_elevation_40",
    "segment_area",
    "triangle_density",
    "inmat_radius",
    "mean_h",
    "mean_s",
    "mean_v",
    "var_h",
    "var_s",
    "var_v",
    "hue_bin_00",
    "hue_bin_01",
    "hue_bin_02",
    "hue_bin_03",
    "hue_bin_04",
    "hue_bin_05",
    "hue_bin_06",
    "hue_bin_07",
    "hue_bin_08",
    "hue_bin_09",
    "hue_bin_10",
    "hue_bin_11",
    "hue_bin_12",
    "hue_bin_13",
    "hue_bin_14",
    "sat_bin_0",
    "sat_bin_1",
    "sat_bin_2",
    "sat_bin_3",
    "sat_bin_4",
    "val_bin_0",
    "val_bin_1",
    "val_bin_2",
    "val_bin_3",
    "val_bin_4",
    "greenness",
];

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("unknown feature group {0:?}")]
    UnknownGroup(String),
    #[error("feature vector has {0} entries, expected 44")]
    WrongLength(usize),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
    #[error("feature csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for FeatureError {
    fn from(e: csv::Error) -> Self {
        FeatureError::Csv(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn from_slice(values: &[f64]) -> Result<Self, FeatureError> {
        let arr: [f64; FEATURE_DIM] = values
            .try_into()
            .map_err(|_| FeatureError::WrongLength(values.len()))?;
        Ok(FeatureVector(arr))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Copy with every masked-out (false) dimension set to zero.
    pub fn masked(&self, mask: &[bool; FEATURE_DIM]) -> FeatureVector {
        let mut out = self.0;
        for (v, &keep) in out.iter_mut().zip(mask) {
            if !keep {
                *v = 0.0;
            }
        }
        FeatureVector(out)
    }
}

impl Index<usize> for FeatureVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Groups of dimensions that are ablated together.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FeatureGroup {
    Linearity,
    Sphericity,
    Curvature,
    Verticality,
    AbsoluteElevation,
    RelativeElevation,
    MultiscaleElevations,
    SegmentArea,
    TriangleDensity,
    Inmat,
    AverageHsv,
    VarianceHsv,
    HsvHistogram,
    Greenness,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 14] = [
        FeatureGroup::Linearity,
        FeatureGroup::Sphericity,
        FeatureGroup::Curvature,
        FeatureGroup::Verticality,
        FeatureGroup::AbsoluteElevation,
        FeatureGroup::RelativeElevation,
        FeatureGroup::MultiscaleElevations,
        FeatureGroup::SegmentArea,
        FeatureGroup::TriangleDensity,
        FeatureGroup::Inmat,
        FeatureGroup::AverageHsv,
        FeatureGroup::VarianceHsv,
        FeatureGroup::HsvHistogram,
        FeatureGroup::Greenness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::Linearity => "linearity",
            FeatureGroup::Sphericity => "sphericity",
            FeatureGroup::Curvature => "curvature",
            FeatureGroup::Verticality => "verticality",
            FeatureGroup::AbsoluteElevation => "absolute_elevation",
            FeatureGroup::RelativeElevation => "relative_elevation",
            FeatureGroup::MultiscaleElevations => "multiscale_elevations",
            FeatureGroup::SegmentArea => "segment_area",
            FeatureGroup::TriangleDensity => "triangle_density",
            FeatureGroup::Inmat => "inmat",
            FeatureGroup::AverageHsv => "average_hsv",
            FeatureGroup::VarianceHsv => "variance_hsv",
            FeatureGroup::HsvHistogram => "hsv_histogram",
            FeatureGroup::Greenness => "greenness",
        }
    }

    pub fn parse(name: &str) -> Result<FeatureGroup, FeatureError> {
        FeatureGroup::ALL
            .into_iter()
            .find(|g| g.name() == name)
            .ok_or_else(|| FeatureError::UnknownGroup(name.to_string()))
    }

    pub fn indices(self) -> Range<usize> {
        match self {
            FeatureGroup::Linearity => 0..1,
            FeatureGroup::Sphericity => 1..2,
            FeatureGroup::Curvature => 2..3,
            FeatureGroup::Verticality => 3..4,
            FeatureGroup::AbsoluteElevation => 4..5,
            FeatureGroup::RelativeElevation => 5..6,
            FeatureGroup::MultiscaleElevations => 6..9,
            FeatureGroup::SegmentArea => 9..10,
            FeatureGroup::TriangleDensity => 10..11,
            FeatureGroup::Inmat => 11..12,
            FeatureGroup::AverageHsv => 12..15,
            FeatureGroup::VarianceHsv => 15..18,
            FeatureGroup::HsvHistogram => 18..43,
            FeatureGroup::Greenness => 43..44,
        }
    }

    /// Group owning dimension `dim`.
    pub fn of_dimension(dim: usize) -> FeatureGroup {
        FeatureGroup::ALL
            .into_iter()
            .find(|g| g.indices().contains(&dim))
            .expect("dimension < 44")
    }
}

/// Keep-mask over the 44 dimensions with the named groups switched off.
pub fn feature_ablation_mask<S: AsRef<str>>(
    groups: &[S],
) -> Result<[bool; FEATURE_DIM], FeatureError> {
    let mut mask = [true; FEATURE_DIM];
    for name in groups {
        for i in FeatureGroup::parse(name.as_ref())?.indices() {
            mask[i] = false;
        }
    }
    Ok(mask)
}

/// `sqrt(clamp((z_a - z_min) / (z_max - z_min), 0, 1))`, or 0 for a flat
/// neighbourhood.
pub fn multiscale_elevation(z_a: f64, z_min: f64, z_max: f64) -> f64 {
    if z_max > z_min {
        ((z_a - z_min) / (z_max - z_min)).clamp(0.0, 1.0).sqrt()
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElevationFeatures {
    pub absolute: f64,
    pub relative: f64,
    pub multiscale: [f64; 3],
}

#[derive(Clone, Debug)]
struct SegmentStats {
    z_mean: f64,
    z_min: f64,
    z_max: f64,
    eigen: EigenFeatures,
    vertices: Vec<u32>,
}

/// Everything needed to featurise the segments of one tile: the cylinder
/// index, per-segment statistics and per-vertex medial radii.
pub struct TileContext<'a> {
    mesh: &'a TriangleMesh,
    segments: &'a SegmentSet,
    index: SegmentIndex,
    stats: Vec<SegmentStats>,
    vertex_radius: Vec<f64>,
    initial_radius: f64,
}

impl<'a> TileContext<'a> {
    pub fn new(mesh: &'a TriangleMesh, segments: &'a SegmentSet) -> Result<Self, FeatureError> {
        let index = SegmentIndex::new(mesh, segments)?;
        let stats: Vec<SegmentStats> = segments
            .segments()
            .par_iter()
            .map(|seg| {
                let vertices = seg.vertex_ids(mesh);
                let pts: Vec<_> = vertices
                    .iter()
                    .map(|&v| mesh.vertices()[v as usize])
                    .collect();
                let zs = pts.iter().map(|p| p.z);
                SegmentStats {
                    z_mean: zs.clone().sum::<f64>() / pts.len() as f64,
                    z_min: zs.clone().fold(f64::INFINITY, f64::min),
                    z_max: zs.fold(f64::NEG_INFINITY, f64::max),
                    eigen: eigen_features(&pts),
                    vertices,
                }
            })
            .collect();
        let (lo, hi) = mesh.bounding_box();
        let initial_radius = 0.5 * (hi - lo).norm();
        let normals = mesh.vertex_normals();
        let points = index.vertices();
        let vertex_radius = (0..mesh.vertex_count())
            .into_par_iter()
            .map(|v| shrinking_ball_radius(points, v, &-normals[v], initial_radius))
            .collect();
        Ok(TileContext {
            mesh,
            segments,
            index,
            stats,
            vertex_radius,
            initial_radius,
        })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        self.mesh
    }

    pub fn segments(&self) -> &SegmentSet {
        self.segments
    }

    pub fn initial_radius(&self) -> f64 {
        self.initial_radius
    }

    pub fn eigen(&self, segment: u32) -> EigenFeatures {
        self.stats[segment as usize].eigen
    }

    fn neighbourhood(&self, segment: u32, radius: f64) -> Vec<u32> {
        let c = self.segments.segments()[segment as usize].centroid;
        let q = CylinderQuery::new(Point2::new(c.x, c.y), radius).expect("positive radius");
        let mut ids = self.index.segments_in_cylinder(&q);
        if let Err(pos) = ids.binary_search(&segment) {
            ids.insert(pos, segment);
        }
        ids
    }

    fn is_ground_candidate(&self, segment: u32) -> bool {
        self.stats[segment as usize].eigen.verticality < GROUND_MAX_VERTICALITY
            && self.segments.segments()[segment as usize].area >= GROUND_MIN_AREA
    }

    pub fn elevation(&self, segment: u32) -> ElevationFeatures {
        let own = &self.stats[segment as usize];
        let z_a = own.z_mean;
        let near = self.neighbourhood(segment, GROUND_RADIUS);
        let ground = near
            .iter()
            .copied()
            .filter(|&s| self.is_ground_candidate(s))
            .max_by(|&a, &b| {
                let (sa, sb) = (&self.segments.segments()[a as usize], &self.segments.segments()[b as usize]);
                sa.area.total_cmp(&sb.area).then(b.cmp(&a))
            });
        let z_r_min = match ground {
            Some(g) => self.stats[g as usize].z_min,
            None => {
                // No ground candidate: lowest vertex inside the cylinder.
                let c = self.segments.segments()[segment as usize].centroid;
                let q = CylinderQuery::new(Point2::new(c.x, c.y), GROUND_RADIUS)
                    .expect("positive radius");
                let pts = self.index.vertices().points();
                self.index
                    .vertices()
                    .within_radius_xy(&q)
                    .into_iter()
                    .map(|v| pts[v].z)
                    .fold(own.z_min, f64::min)
            }
        };
        let mut multiscale = [0.0; 3];
        for (k, &r) in MULTISCALE_RADII.iter().enumerate() {
            let ids = self.neighbourhood(segment, r);
            let z_min = ids
                .iter()
                .map(|&s| self.stats[s as usize].z_min)
                .fold(f64::INFINITY, f64::min);
            let z_max = ids
                .iter()
                .map(|&s| self.stats[s as usize].z_max)
                .fold(f64::NEG_INFINITY, f64::max);
            multiscale[k] = multiscale_elevation(z_a, z_min, z_max);
        }
        ElevationFeatures {
            absolute: z_a,
            relative: z_a - z_r_min,
            multiscale,
        }
    }

    /// Mean shrinking-ball radius over the segment's vertices.
    pub fn mat_radius(&self, segment: u32) -> f64 {
        let vs = &self.stats[segment as usize].vertices;
        vs.iter()
            .map(|&v| self.vertex_radius[v as usize])
            .sum::<f64>()
            / vs.len() as f64
    }

    pub fn colors(&self, segment: u32) -> ColorFeatures {
        let seg = &self.segments.segments()[segment as usize];
        color_features(
            seg.face_ids
                .iter()
                .flat_map(|&f| self.mesh.face_colors()[f as usize].iter().map(|s| &s.rgb)),
        )
    }

    pub fn featurize(&self, segment: u32) -> FeatureVector {
        let seg = &self.segments.segments()[segment as usize];
        let eig = self.eigen(segment);
        let elev = self.elevation(segment);
        let col = self.colors(segment);
        let mut v = [0.0; FEATURE_DIM];
        v[0] = eig.linearity;
        v[1] = eig.sphericity;
        v[2] = eig.curvature_change;
        v[3] = eig.verticality;
        v[4] = elev.absolute;
        v[5] = elev.relative;
        v[6..9].copy_from_slice(&elev.multiscale);
        v[9] = seg.area;
        v[10] = seg.face_ids.len() as f64 / seg.area;
        v[11] = self.mat_radius(segment);
        v[12..15].copy_from_slice(&col.mean_hsv);
        v[15..18].copy_from_slice(&col.var_hsv);
        v[18..43].copy_from_slice(&col.histogram);
        v[43] = col.greenness;
        FeatureVector(v)
    }

    /// Feature vectors of all segments, in segment-id order.
    pub fn featurize_all(&self) -> Vec<FeatureVector> {
        (0..self.segments.len() as u32)
            .into_par_iter()
            .map(|s| self.featurize(s))
            .collect()
    }
}

/// Convenience wrapper: builds a [`TileContext`] and featurises every segment.
pub fn featurize_tile(
    mesh: &TriangleMesh,
    segments: &SegmentSet,
) -> Result<Vec<FeatureVector>, FeatureError> {
    Ok(TileContext::new(mesh, segments)?.featurize_all())
}

/// One row of the feature matrix export.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRow {
    pub tile_id: String,
    pub segment_id: u32,
    pub label: ClassId,
    /// Segment area, duplicated from the features for weighting.
    pub features: FeatureVector,
}

impl FeatureRow {
    pub fn area(&self) -> f64 {
        self.features[9]
    }
}

/// CSV with the 44 feature names followed by `segment_id,tile_id,label`.
pub fn write_feature_csv<'r>(
    out: impl Write,
    rows: impl IntoIterator<Item = &'r FeatureRow>,
) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = FEATURE_NAMES.to_vec();
    header.extend(["segment_id", "tile_id", "label"]);
    w.write_record(&header)?;
    for row in rows {
        let mut rec: Vec<String> = row.features.0.iter().map(|v| v.to_string()).collect();
        rec.push(row.segment_id.to_string());
        rec.push(row.tile_id.clone());
        rec.push(row.label.get().to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_csv(input: impl Read) -> Result<Vec<FeatureRow>, FeatureError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let expected: Vec<&str> = FEATURE_NAMES
        .iter()
        .copied()
        .chain(["segment_id", "tile_id", "label"])
        .collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(FeatureError::Csv("unexpected header".into()));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64, FeatureError> {
            rec[i]
                .parse()
                .map_err(|_| FeatureError::Csv(format!("bad number {:?}", &rec[i])))
        };
        let mut v = [0.0; FEATURE_DIM];
        for (i, slot) in v.iter_mut().enumerate() {
            *slot = num(i)?;
        }
        let label = ClassId::from_i64(num(FEATURE_DIM + 2)? as i64)
            .map_err(|e| FeatureError::Csv(e.to_string()))?;
        rows.push(FeatureRow {
            tile_id: rec[FEATURE_DIM + 1].to_string(),
            segment_id: num(FEATURE_DIM)? as u32,
            label,
            features: FeatureVector(v),
        });
    }
    Ok(rows)
}
