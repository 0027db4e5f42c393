//! Static kd-tree over 3D points, used for nearest-neighbour queries and
//! vertical-cylinder (XY radius) range queries.

use crate::mesh_io::TriangleMesh;
use crate::segmentation::SegmentSet;
use nalgebra::{Point2, Point3};

#[derive(Debug, thiserror::Error)]
pub enum SpatialError {
    #[error("cannot build a point index over zero points")]
    Empty,
    #[error("cylinder radius must be positive, got {0}")]
    BadRadius(f64),
}

/// Vertical cylinder: every point whose XY distance to `center_xy` is at most
/// `radius`, at any height.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CylinderQuery {
    center_xy: Point2<f64>,
    radius: f64,
}

impl CylinderQuery {
    pub fn new(center_xy: Point2<f64>, radius: f64) -> Result<Self, SpatialError> {
        if radius > 0.0 && radius.is_finite() {
            Ok(CylinderQuery { center_xy, radius })
        } else {
            Err(SpatialError::BadRadius(radius))
        }
    }

    pub fn center_xy(&self) -> Point2<f64> {
        self.center_xy
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let dx = p.x - self.center_xy.x;
        let dy = p.y - self.center_xy.y;
        dx * dx + dy * dy <= self.radius * self.radius
    }
}

/// Immutable kd-tree. Node `k` of a subtree spanning `order[lo..hi]` sits at
/// `mid = (lo + hi) / 2` and splits on `axes[mid]`.
#[derive(Clone, Debug)]
pub struct PointIndex {
    points: Vec<Point3<f64>>,
    order: Vec<u32>,
    axes: Vec<u8>,
}

impl PointIndex {
    pub fn new(points: Vec<Point3<f64>>) -> Result<Self, SpatialError> {
        if points.is_empty() {
            return Err(SpatialError::Empty);
        }
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut axes = vec![0u8; points.len()];
        build(&points, &mut order, &mut axes);
        Ok(PointIndex {
            points,
            order,
            axes,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    /// Closest point to `q` as `(index, distance)`. Equidistant points resolve
    /// to the lowest insertion index.
    pub fn nearest(&self, q: &Point3<f64>) -> (usize, f64) {
        let mut best = (f64::INFINITY, u32::MAX);
        self.nearest_in(0, self.order.len(), q, &mut best);
        (best.1 as usize, best.0.sqrt())
    }

    fn nearest_in(&self, lo: usize, hi: usize, q: &Point3<f64>, best: &mut (f64, u32)) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid];
        let p = &self.points[idx as usize];
        let d2 = (p - q).norm_squared();
        if d2 < best.0 || (d2 == best.0 && idx < best.1) {
            *best = (d2, idx);
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_in(near.0, near.1, q, best);
        // `<=` keeps equidistant candidates on the far side reachable for the tie rule.
        if diff * diff <= best.0 {
            self.nearest_in(far.0, far.1, q, best);
        }
    }

    /// Indices of all points inside the vertical cylinder, ascending.
    pub fn within_radius_xy(&self, q: &CylinderQuery) -> Vec<usize> {
        let mut out = Vec::new();
        self.cylinder_in(0, self.order.len(), q, &mut out);
        out.sort_unstable();
        out
    }

    fn cylinder_in(&self, lo: usize, hi: usize, q: &CylinderQuery, out: &mut Vec<usize>) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid] as usize;
        let p = &self.points[idx];
        if q.contains(p) {
            out.push(idx);
        }
        let axis = self.axes[mid] as usize;
        if axis == 2 {
            self.cylinder_in(lo, mid, q, out);
            self.cylinder_in(mid + 1, hi, q, out);
            return;
        }
        let diff = q.center_xy[axis] - p[axis];
        if diff <= q.radius {
            self.cylinder_in(lo, mid, q, out);
        }
        if diff >= -q.radius {
            self.cylinder_in(mid + 1, hi, q, out);
        }
    }
}

fn build(points: &[Point3<f64>], order: &mut [u32], axes: &mut [u8]) {
    if order.len() <= 1 {
        return;
    }
    // Split on the axis of widest spread.
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        let p = &points[i as usize];
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis]
            .total_cmp(&points[b as usize][axis])
            .then(a.cmp(&b))
    });
    axes[mid] = axis as u8;
    let (left, rest) = order.split_at_mut(mid);
    let (laxes, raxes) = axes.split_at_mut(mid);
    build(points, left, laxes);
    build(points, &mut rest[1..], &mut raxes[1..]);
}

/// Vertex index of a tile annotated with the segments each vertex belongs to.
#[derive(Clone, Debug)]
pub struct SegmentIndex {
    vertices: PointIndex,
    vertex_segments: Vec<Vec<u32>>,
}

impl SegmentIndex {
    pub fn new(mesh: &TriangleMesh, segments: &SegmentSet) -> Result<Self, SpatialError> {
        let mut vertex_segments: Vec<Vec<u32>> = vec![Vec::new(); mesh.vertex_count()];
        for (fi, f) in mesh.faces().iter().enumerate() {
            let s = segments.segment_of(fi);
            for &v in f {
                vertex_segments[v as usize].push(s);
            }
        }
        for list in &mut vertex_segments {
            list.sort_unstable();
            list.dedup();
        }
        Ok(SegmentIndex {
            vertices: PointIndex::new(mesh.vertices().to_vec())?,
            vertex_segments,
        })
    }

    pub fn vertices(&self) -> &PointIndex {
        &self.vertices
    }

    /// Segments with at least one vertex inside the cylinder, ascending.
    pub fn segments_in_cylinder(&self, q: &CylinderQuery) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .vertices
            .within_radius_xy(q)
            .into_iter()
            .flat_map(|v| self.vertex_segments[v].iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Builds a one-off index and runs a single cylinder query.
pub fn segments_in_cylinder(
    mesh: &TriangleMesh,
    segments: &SegmentSet,
    q: &CylinderQuery,
) -> Result<Vec<u32>, SpatialError> {
    Ok(SegmentIndex::new(mesh, segments)?.segments_in_cylinder(q))
}
