//! Mesh to coloured point cloud: Monte Carlo surface sampling, Poisson-disk
//! pruning to a target density and nearest-site colour transfer.

use crate::mesh_io::{ClassId, TriangleMesh};
use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use std::collections::HashMap;

/// Bisection budget for the rejection radius.
pub const MAX_BISECTION_STEPS: usize = 12;
/// Accepted relative deviation from the target density.
pub const DENSITY_TOLERANCE: f64 = 0.05;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SamplingError {
    #[error("density must be positive and finite, got {0}")]
    InvalidDensity(f64),
    #[error("raw density {raw:.3} pts/m² is below twice the target {target:.3}")]
    RawDensityTooLow { raw: f64, target: f64 },
    #[error("no rejection radius within {steps} steps (best density {best:.3} for target {target:.3})")]
    NotConverged { steps: usize, best: f64, target: f64 },
    #[error("cloud does not belong to this mesh")]
    ForeignCloud,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampledPointCloud {
    pub points: Vec<Point3<f64>>,
    /// All zero until [`transfer_colors`] runs.
    pub colors: Vec<[u8; 3]>,
    pub labels: Vec<ClassId>,
    pub source_faces: Vec<u32>,
    /// Barycentric coordinates of each point on its source face.
    pub barycentric: Vec<[f64; 3]>,
}

impl SampledPointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The points at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> SampledPointCloud {
        SampledPointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            colors: indices.iter().map(|&i| self.colors[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            source_faces: indices.iter().map(|&i| self.source_faces[i]).collect(),
            barycentric: indices.iter().map(|&i| self.barycentric[i]).collect(),
        }
    }

    fn push(&mut self, p: Point3<f64>, label: ClassId, face: u32, w: [f64; 3]) {
        self.points.push(p);
        self.colors.push([0; 3]);
        self.labels.push(label);
        self.source_faces.push(face);
        self.barycentric.push(w);
    }
}

/// Uniform barycentric coordinates from two uniform numbers in `[0, 1)`.
pub fn uniform_barycentric(r1: f64, r2: f64) -> [f64; 3] {
    let s = r1.sqrt();
    [1.0 - s, s * (1.0 - r2), s * r2]
}

/// Draws `Poisson(area * raw_density)` uniform points on every face. Each face
/// uses its own ChaCha stream, so the result does not depend on thread count.
pub fn montecarlo_sample(
    mesh: &TriangleMesh,
    raw_density: f64,
    seed: u64,
) -> Result<SampledPointCloud, SamplingError> {
    if !(raw_density > 0.0 && raw_density.is_finite()) {
        return Err(SamplingError::InvalidDensity(raw_density));
    }
    let per_face: Vec<Vec<[f64; 3]>> = (0..mesh.face_count())
        .into_par_iter()
        .map(|f| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(f as u64);
            let lambda = mesh.face_area(f) * raw_density;
            let n = Poisson::new(lambda).map(|d| d.sample(&mut rng) as usize).unwrap_or(0);
            (0..n)
                .map(|_| uniform_barycentric(rng.random(), rng.random()))
                .collect()
        })
        .collect();
    let mut cloud = SampledPointCloud::default();
    for (f, ws) in per_face.into_iter().enumerate() {
        let label = mesh.face_labels()[f];
        for w in ws {
            cloud.push(mesh.barycentric_point(f, w), label, f as u32, w);
        }
    }
    Ok(cloud)
}

type Cell = (i64, i64, i64);

fn cell_of(p: &Point3<f64>, size: f64) -> Cell {
    (
        (p.x / size).floor() as i64,
        (p.y / size).floor() as i64,
        (p.z / size).floor() as i64,
    )
}

/// Greedy dart throwing in insertion order: a point is kept unless an
/// already-kept point lies strictly closer than `radius`. Returns kept indices.
pub fn prune_indices(points: &[Point3<f64>], radius: f64) -> Vec<usize> {
    if radius <= 0.0 {
        return (0..points.len()).collect();
    }
    let r2 = radius * radius;
    let mut grid: HashMap<Cell, Vec<usize>> = HashMap::new();
    let mut kept = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let (cx, cy, cz) = cell_of(p, radius);
        let mut blocked = false;
        'scan: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                        if bucket.iter().any(|&j| (points[j] - p).norm_squared() < r2) {
                            blocked = true;
                            break 'scan;
                        }
                    }
                }
            }
        }
        if !blocked {
            grid.entry((cx, cy, cz)).or_default().push(i);
            kept.push(i);
        }
    }
    kept
}

pub fn prune_with_radius(cloud: &SampledPointCloud, radius: f64) -> SampledPointCloud {
    cloud.subset(&prune_indices(&cloud.points, radius))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrunedCloud {
    pub cloud: SampledPointCloud,
    /// Final rejection radius; kept points are pairwise at least this far apart.
    pub radius: f64,
    /// Kept points per m² of mesh surface.
    pub density: f64,
    pub steps: usize,
}

/// Prunes `cloud` to `target_density` points per m² of `mesh` surface,
/// bisecting the rejection radius over `[0, 2 / sqrt(target)]`.
pub fn poisson_prune(
    cloud: &SampledPointCloud,
    target_density: f64,
    mesh: &TriangleMesh,
) -> Result<PrunedCloud, SamplingError> {
    if !(target_density > 0.0 && target_density.is_finite()) {
        return Err(SamplingError::InvalidDensity(target_density));
    }
    if cloud.source_faces.iter().any(|&f| f as usize >= mesh.face_count()) {
        return Err(SamplingError::ForeignCloud);
    }
    let area = mesh.total_area();
    let raw = cloud.len() as f64 / area;
    if raw < 2.0 * target_density {
        return Err(SamplingError::RawDensityTooLow {
            raw,
            target: target_density,
        });
    }
    let (mut lo, mut hi) = (0.0, 2.0 / target_density.sqrt());
    let mut best = raw;
    for step in 1..=MAX_BISECTION_STEPS {
        let r = 0.5 * (lo + hi);
        let kept = prune_indices(&cloud.points, r);
        let density = kept.len() as f64 / area;
        if (density - target_density).abs() <= DENSITY_TOLERANCE * target_density {
            return Ok(PrunedCloud {
                cloud: cloud.subset(&kept),
                radius: r,
                density,
                steps: step,
            });
        }
        if (density - target_density).abs() < (best - target_density).abs() {
            best = density;
        }
        if density > target_density {
            lo = r;
        } else {
            hi = r;
        }
    }
    Err(SamplingError::NotConverged {
        steps: MAX_BISECTION_STEPS,
        best,
        target: target_density,
    })
}

/// Colour of the nearest colour-sample site on the point's source face
/// (ties to the first sample).
pub fn transfer_colors(
    cloud: &SampledPointCloud,
    mesh: &TriangleMesh,
) -> Result<SampledPointCloud, SamplingError> {
    if cloud.source_faces.iter().any(|&f| f as usize >= mesh.face_count()) {
        return Err(SamplingError::ForeignCloud);
    }
    let colors = cloud
        .points
        .par_iter()
        .zip(cloud.source_faces.par_iter())
        .map(|(p, &f)| {
            let f = f as usize;
            let mut best = (f64::INFINITY, [0u8; 3]);
            for s in &mesh.face_colors()[f] {
                let d = (mesh.barycentric_point(f, s.site) - p).norm_squared();
                if d < best.0 {
                    best = (d, s.rgb);
                }
            }
            best.1
        })
        .collect();
    Ok(SampledPointCloud {
        colors,
        ..cloud.clone()
    })
}
