use crate::geometry::{covariance_of, sorted_eigen};
use nalgebra::{Point3, Vector3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenFeatures {
    pub linearity: f64,
    pub sphericity: f64,
    pub curvature_change: f64,
    pub verticality: f64,
}

impl EigenFeatures {
    pub const ZERO: EigenFeatures = EigenFeatures {
        linearity: 0.0,
        sphericity: 0.0,
        curvature_change: 0.0,
        verticality: 0.0,
    };

    /// Shape ratios from descending eigenvalues and the normal direction
    /// (eigenvector of the smallest eigenvalue).
    pub fn from_eigen(values: [f64; 3], normal: &Vector3<f64>) -> EigenFeatures {
        let [l1, l2, l3] = values.map(|l| l.max(0.0));
        if l1 <= 0.0 {
            return EigenFeatures::ZERO;
        }
        EigenFeatures {
            linearity: (l1 - l2) / l1,
            sphericity: l3 / l1,
            curvature_change: l3 / (l1 + l2 + l3),
            verticality: 1.0 - normal.normalize().z.abs(),
        }
    }
}

/// Covariance shape features of a segment's (deduplicated) vertices,
/// centred on their mean.
pub fn eigen_features(points: &[Point3<f64>]) -> EigenFeatures {
    if points.is_empty() {
        return EigenFeatures::ZERO;
    }
    let (_, cov) = covariance_of(points);
    let eig = sorted_eigen(&cov);
    EigenFeatures::from_eigen(eig.values, &eig.vectors[2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_eigenvalues() {
        let f = EigenFeatures::from_eigen([2.0, 1.0, 1.0], &Vector3::z());
        assert_eq!(f.linearity, 0.5);
        assert_eq!(f.sphericity, 0.5);
        assert_eq!(f.curvature_change, 0.25);
        assert_eq!(f.verticality, 0.0);
    }

    #[test]
    fn coincident_points_are_all_zero() {
        let p = vec![Point3::new(3.0, 1.0, 2.0); 5];
        assert_eq!(eigen_features(&p), EigenFeatures::ZERO);
    }

    #[test]
    fn horizontal_and_vertical_planes() {
        let flat: Vec<_> = (0..25)
            .map(|i| Point3::new((i % 5) as f64, (i / 5) as f64 * 0.7, 4.0))
            .collect();
        assert!(eigen_features(&flat).verticality.abs() < 1e-12);
        let wall: Vec<_> = (0..25)
            .map(|i| Point3::new((i % 5) as f64, 2.0, (i / 5) as f64 * 0.7))
            .collect();
        assert!((eigen_features(&wall).verticality - 1.0).abs() < 1e-12);
    }
}
