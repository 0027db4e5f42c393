//! Planar over-segmentation by region growing, plus the segment edits used
//! during annotation (planar-region extraction, stroke splits) and the
//! area-majority labelling that bounds segment-level accuracy.
//!
//! Growth order is deterministic: seeds are visited by descending face area
//! (ties to the lower face id) and regions grow breadth-first over shared
//! edges. A face is admitted when all three corners lie within
//! `max_distance` of the region's current plane and its normal is within
//! `max_angle` of the plane normal, orientation ignored. The plane is refit
//! every [`REFIT_INTERVAL`] admissions; admitted faces are never re-tested.

use crate::geometry::{line_angle_deg, CovarianceAccumulator, Plane};
use crate::mesh_io::{ClassId, TriangleMesh};
use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashSet, VecDeque};

pub const REFIT_INTERVAL: usize = 32;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SegmentationError {
    #[error("invalid segmentation parameter: {0}")]
    InvalidParams(String),
    #[error("unknown segment id {0}")]
    UnknownSegment(u32),
    #[error("face {0} out of range")]
    UnknownFace(u32),
    #[error("stroke is empty")]
    EmptyStroke,
    #[error("stroke lies inside a single segment")]
    StrokeWithinSegment,
    #[error("stroke crosses {0} segments, expected exactly 2")]
    StrokeSpansTooMany(usize),
    #[error("segment assignment has {got} entries for {expected} faces")]
    AssignmentLength { got: usize, expected: usize },
    #[error("face {0} has no segment")]
    UnassignedFace(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationParams {
    /// Segments smaller than this (m²) are merged into a neighbour.
    pub min_area: f64,
    /// Maximum corner-to-plane distance (m).
    pub max_distance: f64,
    /// Maximum angle between face normal and plane normal (degrees).
    pub max_angle: f64,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        SegmentationParams {
            min_area: 0.0,
            max_distance: 0.5,
            max_angle: 90.0,
        }
    }
}

impl SegmentationParams {
    pub fn validate(&self) -> Result<(), SegmentationError> {
        if !(self.min_area >= 0.0) {
            return Err(SegmentationError::InvalidParams(format!(
                "min_area {} must be >= 0",
                self.min_area
            )));
        }
        check_thresholds(self.max_distance, self.max_angle)
    }
}

fn check_thresholds(max_distance: f64, max_angle: f64) -> Result<(), SegmentationError> {
    if !(max_distance > 0.0) {
        return Err(SegmentationError::InvalidParams(format!(
            "max_distance {max_distance} must be > 0"
        )));
    }
    if !(max_angle > 0.0 && max_angle <= 180.0) {
        return Err(SegmentationError::InvalidParams(format!(
            "max_angle {max_angle} must be in (0, 180]"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: u32,
    /// Member faces, ascending.
    pub face_ids: Vec<u32>,
    pub plane: Plane,
    pub area: f64,
    /// Area-weighted mean of face centroids.
    pub centroid: Point3<f64>,
}

impl Segment {
    fn build(mesh: &TriangleMesh, id: u32, mut face_ids: Vec<u32>) -> Segment {
        face_ids.sort_unstable();
        let mut area = 0.0;
        let mut weighted = Vector3::zeros();
        let mut normal_hint = Vector3::zeros();
        for &f in &face_ids {
            let a = mesh.face_area(f as usize);
            area += a;
            weighted += mesh.face_centroid(f as usize).coords * a;
            normal_hint += mesh.face_normal(f as usize) * a;
        }
        if normal_hint.norm() == 0.0 {
            normal_hint = Vector3::z();
        }
        let mut acc = CovarianceAccumulator::new();
        for v in unique_vertices(mesh, &face_ids) {
            acc.add(&mesh.vertices()[v as usize]);
        }
        let plane = acc
            .plane(&normal_hint)
            .expect("segment has at least one face");
        Segment {
            id,
            face_ids,
            plane,
            area,
            centroid: Point3::from(weighted / area),
        }
    }

    /// Distinct vertex ids of the member faces, ascending.
    pub fn vertex_ids(&self, mesh: &TriangleMesh) -> Vec<u32> {
        unique_vertices(mesh, &self.face_ids)
    }

    /// Mean absolute distance of the member vertices to the segment plane.
    pub fn mean_plane_distance(&self, mesh: &TriangleMesh) -> f64 {
        let vs = self.vertex_ids(mesh);
        vs.iter()
            .map(|&v| self.plane.distance(&mesh.vertices()[v as usize]))
            .sum::<f64>()
            / vs.len() as f64
    }
}

pub(crate) fn unique_vertices(mesh: &TriangleMesh, faces: &[u32]) -> Vec<u32> {
    let mut vs: Vec<u32> = faces
        .iter()
        .flat_map(|&f| mesh.faces()[f as usize])
        .collect();
    vs.sort_unstable();
    vs.dedup();
    vs
}

/// A partition of the faces of one mesh into segments with dense ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentSet {
    segments: Vec<Segment>,
    face_segment: Vec<u32>,
}

impl SegmentSet {
    /// Builds segments from face groups; group `i` becomes segment `i`.
    pub fn from_regions(mesh: &TriangleMesh, regions: Vec<Vec<u32>>) -> SegmentSet {
        let mut face_segment = vec![u32::MAX; mesh.face_count()];
        let segments: Vec<Segment> = regions
            .into_iter()
            .filter(|r| !r.is_empty())
            .enumerate()
            .map(|(i, faces)| {
                for &f in &faces {
                    face_segment[f as usize] = i as u32;
                }
                Segment::build(mesh, i as u32, faces)
            })
            .collect();
        SegmentSet {
            segments,
            face_segment,
        }
    }

    /// Builds segments from arbitrary per-face ids (e.g. the PLY
    /// `segment_id` property). Ids are renumbered densely in ascending order
    /// of the original values.
    pub fn from_assignment(
        mesh: &TriangleMesh,
        assignment: &[i32],
    ) -> Result<SegmentSet, SegmentationError> {
        if assignment.len() != mesh.face_count() {
            return Err(SegmentationError::AssignmentLength {
                got: assignment.len(),
                expected: mesh.face_count(),
            });
        }
        let mut groups: BTreeMap<i32, Vec<u32>> = BTreeMap::new();
        for (f, &s) in assignment.iter().enumerate() {
            if s < 0 {
                return Err(SegmentationError::UnassignedFace(f));
            }
            groups.entry(s).or_default().push(f as u32);
        }
        Ok(SegmentSet::from_regions(mesh, groups.into_values().collect()))
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn get(&self, id: u32) -> Result<&Segment, SegmentationError> {
        self.segments
            .get(id as usize)
            .ok_or(SegmentationError::UnknownSegment(id))
    }

    pub fn segment_of(&self, face: usize) -> u32 {
        self.face_segment[face]
    }

    pub fn face_assignment(&self) -> &[u32] {
        &self.face_segment
    }

    /// Writes the segment ids into the mesh's `face_segments`.
    pub fn apply_to_mesh(&self, mesh: &mut TriangleMesh) {
        mesh.set_face_segments(self.face_segment.iter().map(|&s| s as i32).collect())
            .expect("segment set matches mesh");
    }

    /// True if every face belongs to exactly one segment and the per-segment
    /// face lists agree with the per-face ids.
    pub fn is_partition_of(&self, mesh: &TriangleMesh) -> bool {
        if self.face_segment.len() != mesh.face_count() {
            return false;
        }
        let mut seen = vec![false; mesh.face_count()];
        for (i, s) in self.segments.iter().enumerate() {
            if s.id as usize != i || s.face_ids.is_empty() {
                return false;
            }
            for &f in &s.face_ids {
                if seen[f as usize] || self.face_segment[f as usize] != s.id {
                    return false;
                }
                seen[f as usize] = true;
            }
        }
        seen.into_iter().all(|x| x)
    }

    /// Moves `faces` (a subset of segment `id`) into a new segment appended at
    /// the end. Returns the new segment id, or `None` when `faces` is empty or
    /// covers the whole segment (nothing to carve).
    pub fn carve(
        &mut self,
        mesh: &TriangleMesh,
        id: u32,
        faces: &[u32],
    ) -> Result<Option<u32>, SegmentationError> {
        let seg = self.get(id)?;
        let carved: HashSet<u32> = faces.iter().copied().collect();
        for &f in &carved {
            if f as usize >= self.face_segment.len() {
                return Err(SegmentationError::UnknownFace(f));
            }
            if self.face_segment[f as usize] != id {
                return Err(SegmentationError::InvalidParams(format!(
                    "face {f} is not in segment {id}"
                )));
            }
        }
        if carved.is_empty() || carved.len() == seg.face_ids.len() {
            return Ok(None);
        }
        let remaining: Vec<u32> = seg
            .face_ids
            .iter()
            .copied()
            .filter(|f| !carved.contains(f))
            .collect();
        let new_id = self.segments.len() as u32;
        let mut moved: Vec<u32> = carved.into_iter().collect();
        moved.sort_unstable();
        for &f in &moved {
            self.face_segment[f as usize] = new_id;
        }
        self.segments[id as usize] = Segment::build(mesh, id, remaining);
        self.segments.push(Segment::build(mesh, new_id, moved));
        Ok(Some(new_id))
    }
}

struct Grower<'a> {
    mesh: &'a TriangleMesh,
    normals: Vec<Vector3<f64>>,
    adjacency: Vec<Vec<u32>>,
}

impl<'a> Grower<'a> {
    fn new(mesh: &'a TriangleMesh) -> Self {
        Grower {
            mesh,
            normals: (0..mesh.face_count()).map(|f| mesh.face_normal(f)).collect(),
            adjacency: mesh.topology().adjacency,
        }
    }

    fn admissible(&self, face: usize, plane: &Plane, max_distance: f64, max_angle: f64) -> bool {
        self.mesh
            .face_points(face)
            .iter()
            .all(|p| plane.distance(p) <= max_distance)
            && line_angle_deg(&self.normals[face], &plane.normal) <= max_angle
    }

    /// Grows one region from `seed` over faces for which `eligible` holds and
    /// `taken` is false. Marks admitted faces in `taken`.
    fn grow(
        &self,
        seed: usize,
        eligible: &dyn Fn(usize) -> bool,
        taken: &mut [bool],
        max_distance: f64,
        max_angle: f64,
    ) -> Vec<u32> {
        let mut region = vec![seed as u32];
        taken[seed] = true;
        let hint = self.normals[seed];
        let mut acc = CovarianceAccumulator::new();
        let mut seen_vertices = HashSet::new();
        let mut add_vertices = |acc: &mut CovarianceAccumulator, face: usize| {
            for &v in &self.mesh.faces()[face] {
                if seen_vertices.insert(v) {
                    acc.add(&self.mesh.vertices()[v as usize]);
                }
            }
        };
        add_vertices(&mut acc, seed);
        let mut plane = Plane::through(&self.mesh.face_centroid(seed), hint);
        let mut since_refit = 0usize;
        let mut queue = VecDeque::from([seed]);
        while let Some(f) = queue.pop_front() {
            for &g in &self.adjacency[f] {
                let g = g as usize;
                if taken[g] || !eligible(g) {
                    continue;
                }
                if self.admissible(g, &plane, max_distance, max_angle) {
                    taken[g] = true;
                    region.push(g as u32);
                    queue.push_back(g);
                    add_vertices(&mut acc, g);
                    since_refit += 1;
                    if since_refit == REFIT_INTERVAL {
                        plane = acc.plane(&hint).unwrap_or(plane);
                        since_refit = 0;
                    }
                }
            }
        }
        region
    }
}

/// Face ids ordered by descending area, ties to the lower id.
fn seed_order(mesh: &TriangleMesh, faces: impl Iterator<Item = u32>) -> Vec<u32> {
    let mut order: Vec<u32> = faces.collect();
    order.sort_by(|&a, &b| {
        mesh.face_area(b as usize)
            .total_cmp(&mesh.face_area(a as usize))
            .then(a.cmp(&b))
    });
    order
}

/// Region-growing planar over-segmentation.
pub fn oversegment(
    mesh: &TriangleMesh,
    params: &SegmentationParams,
) -> Result<SegmentSet, SegmentationError> {
    params.validate()?;
    let grower = Grower::new(mesh);
    let n = mesh.face_count();
    let mut taken = vec![false; n];
    let mut regions = Vec::new();
    for seed in seed_order(mesh, 0..n as u32) {
        if taken[seed as usize] {
            continue;
        }
        regions.push(grower.grow(
            seed as usize,
            &|_| true,
            &mut taken,
            params.max_distance,
            params.max_angle,
        ));
    }
    if params.min_area > 0.0 {
        regions = merge_small_regions(mesh, regions, params.min_area);
    }
    Ok(SegmentSet::from_regions(mesh, regions))
}

/// Repeatedly folds the smallest region under `min_area` into the neighbour
/// sharing the longest boundary (ties to the lower region id). Regions with
/// no neighbours are kept.
fn merge_small_regions(
    mesh: &TriangleMesh,
    regions: Vec<Vec<u32>>,
    min_area: f64,
) -> Vec<Vec<u32>> {
    let mut region_of = vec![0u32; mesh.face_count()];
    for (r, faces) in regions.iter().enumerate() {
        for &f in faces {
            region_of[f as usize] = r as u32;
        }
    }
    let mut boundary: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); regions.len()];
    for (edge, faces) in mesh.topology().edges {
        let len = (mesh.vertices()[edge[0] as usize] - mesh.vertices()[edge[1] as usize]).norm();
        let mut rs: Vec<u32> = faces.iter().map(|&f| region_of[f as usize]).collect();
        rs.sort_unstable();
        rs.dedup();
        for &a in &rs {
            for &b in &rs {
                if a != b {
                    *boundary[a as usize].entry(b).or_default() += len;
                }
            }
        }
    }
    let mut area: Vec<f64> = regions
        .iter()
        .map(|fs| fs.iter().map(|&f| mesh.face_area(f as usize)).sum())
        .collect();
    let mut members: Vec<Option<Vec<u32>>> = regions.into_iter().map(Some).collect();

    struct Key(f64, u32);
    impl PartialEq for Key {
        fn eq(&self, o: &Self) -> bool {
            self.cmp(o).is_eq()
        }
    }
    impl Eq for Key {}
    impl PartialOrd for Key {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Key {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&o.0).then(self.1.cmp(&o.1))
        }
    }
    let mut heap: BinaryHeap<Reverse<Key>> = area
        .iter()
        .enumerate()
        .filter(|(_, &a)| a < min_area)
        .map(|(i, &a)| Reverse(Key(a, i as u32)))
        .collect();
    while let Some(Reverse(Key(a, r))) = heap.pop() {
        let r = r as usize;
        if members[r].is_none() || a != area[r] {
            continue;
        }
        let Some((&target, _)) = boundary[r]
            .iter()
            .max_by(|x, y| x.1.total_cmp(y.1).then(y.0.cmp(x.0)))
        else {
            continue;
        };
        let t = target as usize;
        let moved = members[r].take().unwrap();
        members[t].as_mut().unwrap().extend(moved);
        area[t] += area[r];
        let nb = std::mem::take(&mut boundary[r]);
        for (other, len) in nb {
            boundary[other as usize].remove(&(r as u32));
            if other as usize != t {
                *boundary[t].entry(other).or_default() += len;
                *boundary[other as usize].entry(target).or_default() += len;
            }
        }
        boundary[t].remove(&(r as u32));
        if area[t] < min_area {
            heap.push(Reverse(Key(area[t], target)));
        }
    }
    members.into_iter().flatten().collect()
}

/// Largest-area planar region grown inside one segment.
///
/// Returns the member faces (ascending) of the largest region with at least
/// `min_region_faces` faces, or an empty list if no region qualifies.
pub fn extract_planar_region(
    mesh: &TriangleMesh,
    segments: &SegmentSet,
    segment: u32,
    max_distance: f64,
    max_angle: f64,
    min_region_faces: usize,
) -> Result<Vec<u32>, SegmentationError> {
    check_thresholds(max_distance, max_angle)?;
    let seg = segments.get(segment)?;
    let grower = Grower::new(mesh);
    let mut taken = vec![false; mesh.face_count()];
    let eligible = |f: usize| segments.segment_of(f) == segment;
    let mut best: Option<(f64, Vec<u32>)> = None;
    for seed in seed_order(mesh, seg.face_ids.iter().copied()) {
        if taken[seed as usize] {
            continue;
        }
        let region = grower.grow(seed as usize, &eligible, &mut taken, max_distance, max_angle);
        if region.len() < min_region_faces.max(1) {
            continue;
        }
        let area: f64 = region.iter().map(|&f| mesh.face_area(f as usize)).sum();
        if best.as_ref().is_none_or(|(a, _)| area > *a) {
            best = Some((area, region));
        }
    }
    let mut faces = best.map(|(_, r)| r).unwrap_or_default();
    faces.sort_unstable();
    Ok(faces)
}

/// Splits the non-planar side of a two-segment stroke.
///
/// Of the two segments touched by the stroke, the one with the lower mean
/// vertex-to-plane distance is the reference. Faces of the other segment
/// whose corners all lie within `max_distance` of the reference plane move to
/// a new segment with the next free id; the rest keep the old id. Nothing
/// changes when every face of the other segment is near the plane.
pub fn split_by_stroke(
    mesh: &TriangleMesh,
    segments: &SegmentSet,
    stroke_faces: &[u32],
    max_distance: f64,
) -> Result<SegmentSet, SegmentationError> {
    if !(max_distance > 0.0) {
        return Err(SegmentationError::InvalidParams(format!(
            "max_distance {max_distance} must be > 0"
        )));
    }
    if stroke_faces.is_empty() {
        return Err(SegmentationError::EmptyStroke);
    }
    let mut touched = Vec::new();
    for &f in stroke_faces {
        if f as usize >= mesh.face_count() {
            return Err(SegmentationError::UnknownFace(f));
        }
        let s = segments.segment_of(f as usize);
        if !touched.contains(&s) {
            touched.push(s);
        }
    }
    match touched.len() {
        1 => return Err(SegmentationError::StrokeWithinSegment),
        2 => {}
        n => return Err(SegmentationError::StrokeSpansTooMany(n)),
    }
    touched.sort_unstable();
    let (a, b) = (segments.get(touched[0])?, segments.get(touched[1])?);
    let (reference, other) = if b.mean_plane_distance(mesh) < a.mean_plane_distance(mesh) {
        (b, a)
    } else {
        (a, b)
    };
    let near: Vec<u32> = other
        .face_ids
        .iter()
        .copied()
        .filter(|&f| {
            mesh.face_points(f as usize)
                .iter()
                .all(|p| reference.plane.distance(p) <= max_distance)
        })
        .collect();
    let mut out = segments.clone();
    out.carve(mesh, other.id, &near)?;
    Ok(out)
}

/// Per-face labels where every face takes its segment's area-majority
/// ground-truth label (ties to the lower class id).
pub fn upper_bound_labels(mesh: &TriangleMesh, segments: &SegmentSet) -> Vec<ClassId> {
    let mut out = vec![ClassId::UNCLASSIFIED; mesh.face_count()];
    for seg in segments.segments() {
        let label = majority_label(mesh, &seg.face_ids, mesh.face_labels());
        for &f in &seg.face_ids {
            out[f as usize] = label;
        }
    }
    out
}

/// Area-majority of `labels` over `faces`; ties resolve to the lower class id.
pub fn majority_label(mesh: &TriangleMesh, faces: &[u32], labels: &[ClassId]) -> ClassId {
    let mut area = [0.0f64; 7];
    for &f in faces {
        area[labels[f as usize].get() as usize] += mesh.face_area(f as usize);
    }
    let mut best = 0;
    for c in 1..7 {
        if area[c] > area[best] {
            best = c;
        }
    }
    ClassId::new(best as u8).unwrap()
}
