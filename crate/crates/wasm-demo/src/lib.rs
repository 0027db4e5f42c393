//! Browser bindings for three small demos: over-segmenting a generated town
//! tile, Poisson-disk pruning of surface samples, and covariance shape
//! features of a Gaussian point blob.

use meshlabel::features::eigen_features;
use meshlabel::sampling::{montecarlo_sample, poisson_prune};
use meshlabel::segmentation::oversegment;
use meshlabel::synthetic::{generate_town, grid_plane, TownParams};
use meshlabel::{SegmentSet, SegmentationParams, TriangleMesh};
use nalgebra::{Point3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use wasm_bindgen::prelude::*;

/// RGB per class id 0..=6.
const CLASS_COLORS: [[u8; 3]; 7] = [
    [0, 0, 0],
    [170, 85, 0],
    [0, 255, 0],
    [255, 255, 0],
    [0, 255, 255],
    [255, 0, 255],
    [0, 0, 153],
];

#[wasm_bindgen]
pub struct SceneDemo {
    mesh: TriangleMesh,
    segments: Option<SegmentSet>,
    /// Faces back to front for the fixed view.
    order: Vec<u32>,
    yaw: f64,
}

#[wasm_bindgen]
impl SceneDemo {
    /// A small generated town tile.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> SceneDemo {
        let params = TownParams {
            size: 40.0,
            buildings: (2, 3),
            trees: (2, 4),
            vehicles: (2, 3),
            boats: (1, 2),
            samples_per_face: 1,
            ..TownParams::default()
        };
        let mesh = generate_town("demo", seed as u64, &params);
        let mut s = SceneDemo {
            mesh,
            segments: None,
            order: Vec::new(),
            yaw: 0.6,
        };
        s.set_yaw(0.6);
        s
    }

    pub fn face_count(&self) -> usize {
        self.mesh.face_count()
    }

    /// Rotates the view about the vertical axis and re-sorts faces.
    pub fn set_yaw(&mut self, yaw: f64) {
        self.yaw = yaw;
        let depth: Vec<f64> = (0..self.mesh.face_count())
            .map(|f| self.view(&self.mesh.face_centroid(f)).2)
            .collect();
        let mut order: Vec<u32> = (0..self.mesh.face_count() as u32).collect();
        order.sort_by(|&a, &b| depth[b as usize].total_cmp(&depth[a as usize]));
        self.order = order;
    }

    /// Runs region growing; returns the number of segments.
    pub fn segment(&mut self, max_distance: f64, max_angle: f64, min_area: f64) -> Result<usize, JsError> {
        let params = SegmentationParams {
            min_area,
            max_distance,
            max_angle,
        };
        let segs = oversegment(&self.mesh, &params)?;
        let n = segs.len();
        self.segments = Some(segs);
        Ok(n)
    }

    /// Screen coordinates in a unit square, six per face, back to front.
    pub fn triangles(&self) -> Vec<f32> {
        let (lo, hi) = self.mesh.bounding_box();
        let c = Point3::from((lo.coords + hi.coords) / 2.0);
        let scale = 0.75 / (hi - lo).norm();
        let (cx, cy, _) = self.view(&c);
        let mut out = Vec::with_capacity(6 * self.order.len());
        for &f in &self.order {
            for p in self.mesh.face_points(f as usize) {
                let (x, y, _) = self.view(&p);
                out.push((0.5 + (x - cx) * scale) as f32);
                out.push((0.5 - (y - cy) * scale) as f32);
            }
        }
        out
    }

    /// RGB per face in draw order. Mode 0: segment, 1: ground-truth class,
    /// 2: texture colour.
    pub fn colors(&self, mode: u32) -> Vec<u8> {
        let mut out = Vec::with_capacity(3 * self.order.len());
        for &f in &self.order {
            let f = f as usize;
            let rgb = match (mode, &self.segments) {
                (0, Some(s)) => segment_color(s.segment_of(f)),
                (0, None) | (2, _) => self.mesh.mean_face_color(f),
                _ => CLASS_COLORS[self.mesh.face_labels()[f].get() as usize],
            };
            out.extend_from_slice(&shade(rgb, self.light(f)));
        }
        out
    }
}

impl SceneDemo {
    /// Camera coordinates `(right, up, depth)` for a view tilted 35° down.
    fn view(&self, p: &Point3<f64>) -> (f64, f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        let x = c * p.x - s * p.y;
        let y = s * p.x + c * p.y;
        let (ts, tc) = 35f64.to_radians().sin_cos();
        (x, tc * p.z + ts * y, -ts * p.z + tc * y)
    }

    fn light(&self, f: usize) -> f64 {
        let l = Vector3::new(0.3, -0.4, 0.87).normalize();
        0.55 + 0.45 * self.mesh.face_normal(f).dot(&l).abs()
    }
}

fn shade(rgb: [u8; 3], k: f64) -> [u8; 3] {
    rgb.map(|c| (c as f64 * k).round().clamp(0.0, 255.0) as u8)
}

/// Distinct-looking colour per segment id from a golden-ratio hue walk.
fn segment_color(id: u32) -> [u8; 3] {
    let h = (id as f64 * 0.618_033_988_75).fract() * 6.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [r, g, b].map(|v| (55.0 + 200.0 * v) as u8)
}

#[wasm_bindgen]
pub struct PoissonResult {
    points: Vec<f32>,
    pub raw_count: usize,
    pub radius: f64,
    pub density: f64,
    pub steps: usize,
}

#[wasm_bindgen]
impl PoissonResult {
    /// `x, y` per kept point on the 10 m × 10 m plane.
    pub fn points(&self) -> Vec<f32> {
        self.points.clone()
    }
}

/// Samples a 10 m × 10 m plane at `raw_density` and prunes to `target`
/// points per m².
#[wasm_bindgen]
pub fn poisson_demo(target: f64, raw_density: f64, seed: u32) -> Result<PoissonResult, JsError> {
    let plane = grid_plane(10.0, 4, 0.0);
    let raw = montecarlo_sample(&plane, raw_density, seed as u64)?;
    let pruned = poisson_prune(&raw, target, &plane)?;
    Ok(PoissonResult {
        points: pruned
            .cloud
            .points
            .iter()
            .flat_map(|p| [p.x as f32, p.y as f32])
            .collect(),
        raw_count: raw.len(),
        radius: pruned.radius,
        density: pruned.density,
        steps: pruned.steps,
    })
}

#[wasm_bindgen]
pub struct EigenResult {
    points: Vec<f32>,
    pub linearity: f64,
    pub sphericity: f64,
    pub curvature_change: f64,
    pub verticality: f64,
}

#[wasm_bindgen]
impl EigenResult {
    /// `x, y, z` per point.
    pub fn points(&self) -> Vec<f32> {
        self.points.clone()
    }
}

/// Shape features of 300 Gaussian points with the given axis spreads, the
/// blob tilted by `tilt` radians about the x axis.
#[wasm_bindgen]
pub fn eigen_demo(sx: f64, sy: f64, sz: f64, tilt: f64, seed: u32) -> Result<EigenResult, JsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let n = |s: f64| Normal::new(0.0, s.max(0.0)).map_err(|e| JsError::new(&e.to_string()));
    let (nx, ny, nz) = (n(sx)?, n(sy)?, n(sz)?);
    let (s, c) = tilt.sin_cos();
    let pts: Vec<Point3<f64>> = (0..300)
        .map(|_| {
            let (x, y, z) = (nx.sample(&mut rng), ny.sample(&mut rng), nz.sample(&mut rng));
            Point3::new(x, c * y - s * z, s * y + c * z)
        })
        .collect();
    let f = eigen_features(&pts);
    Ok(EigenResult {
        points: pts.iter().flat_map(|p| [p.x as f32, p.y as f32, p.z as f32]).collect(),
        linearity: f.linearity,
        sphericity: f.sphericity,
        curvature_change: f.curvature_change,
        verticality: f.verticality,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_segments_and_draws() {
        let mut d = SceneDemo::new(3);
        let n = d.segment(0.2, 20.0, 1.0).unwrap();
        assert!(n > 5 && n < d.face_count());
        assert_eq!(d.triangles().len(), 6 * d.face_count());
        for mode in 0..3 {
            assert_eq!(d.colors(mode).len(), 3 * d.face_count());
        }
        d.set_yaw(2.0);
        assert_eq!(d.order.len(), d.face_count());
    }

    #[test]
    fn poisson_hits_target() {
        let r = poisson_demo(5.0, 40.0, 1).unwrap();
        assert!((r.density - 5.0).abs() <= 0.25);
        assert_eq!(r.points().len() % 2, 0);
    }

    #[test]
    fn eigen_shapes() {
        let line = eigen_demo(3.0, 0.05, 0.05, 0.0, 1).unwrap();
        assert!(line.linearity > 0.9);
        let flat = eigen_demo(2.0, 2.0, 0.01, 0.0, 1).unwrap();
        assert!(flat.verticality < 0.05 && flat.sphericity < 0.01);
        let wall = eigen_demo(2.0, 2.0, 0.01, std::f64::consts::FRAC_PI_2, 1).unwrap();
        assert!(wall.verticality > 0.95);
    }
}
