//! Small linear-algebra helpers shared by segmentation and features.

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

/// Plane `normal · p + offset = 0` with a unit normal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Plane {
    pub fn through(point: &Point3<f64>, normal: Vector3<f64>) -> Plane {
        let normal = normal.normalize();
        Plane {
            normal,
            offset: -normal.dot(&point.coords),
        }
    }

    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&p.coords) + self.offset
    }

    pub fn distance(&self, p: &Point3<f64>) -> f64 {
        self.signed_distance(p).abs()
    }
}

/// Angle between two undirected lines, in degrees within `[0, 90]`.
pub fn line_angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let c = (a.dot(b) / (a.norm() * b.norm())).abs().min(1.0);
    c.acos().to_degrees()
}

/// Eigen-decomposition of a symmetric 3x3 matrix with eigenvalues in
/// descending order and matching unit eigenvectors.
#[derive(Clone, Debug)]
pub struct SortedEigen {
    pub values: [f64; 3],
    pub vectors: [Vector3<f64>; 3],
}

pub fn sorted_eigen(m: &Matrix3<f64>) -> SortedEigen {
    let eig = SymmetricEigen::new(*m);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    SortedEigen {
        values: idx.map(|i| eig.eigenvalues[i]),
        vectors: idx.map(|i| eig.eigenvectors.column(i).normalize()),
    }
}

/// Running sums for the covariance of a point set.
///
/// Coordinates are accumulated relative to the first point seen so that
/// georeferenced tiles with large offsets keep their precision.
#[derive(Clone, Debug, Default)]
pub struct CovarianceAccumulator {
    origin: Option<Vector3<f64>>,
    sum: Vector3<f64>,
    outer: Matrix3<f64>,
    count: usize,
}

impl CovarianceAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, p: &Point3<f64>) {
        let origin = *self.origin.get_or_insert(p.coords);
        let d = p.coords - origin;
        self.sum += d;
        self.outer += d * d.transpose();
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> Option<Point3<f64>> {
        let origin = self.origin?;
        Some(Point3::from(origin + self.sum / self.count as f64))
    }

    /// Population covariance (divides by `n`).
    pub fn covariance(&self) -> Option<Matrix3<f64>> {
        if self.count == 0 {
            return None;
        }
        let n = self.count as f64;
        let m = self.sum / n;
        Some(self.outer / n - m * m.transpose())
    }

    /// Least-squares plane: through the mean, normal along the smallest
    /// covariance eigenvector, oriented to agree with `hint`.
    pub fn plane(&self, hint: &Vector3<f64>) -> Option<Plane> {
        let mean = self.mean()?;
        let eig = sorted_eigen(&self.covariance()?);
        let mut n = eig.vectors[2];
        if n.dot(hint) < 0.0 {
            n = -n;
        }
        Some(Plane::through(&mean, n))
    }
}

/// Exact two-pass population covariance of a point set, centred on its mean.
pub fn covariance_of(points: &[Point3<f64>]) -> (Point3<f64>, Matrix3<f64>) {
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - mean;
        cov += d * d.transpose();
    }
    (Point3::from(mean), cov / n)
}

pub fn fit_plane(points: &[Point3<f64>], hint: &Vector3<f64>) -> Option<Plane> {
    if points.is_empty() {
        return None;
    }
    let (mean, cov) = covariance_of(points);
    let mut n = sorted_eigen(&cov).vectors[2];
    if n.dot(hint) < 0.0 {
        n = -n;
    }
    Some(Plane::through(&mean, n))
}
