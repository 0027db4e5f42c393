//! Shrinking-ball interior medial radius per vertex.

use crate::spatial::PointIndex;
use nalgebra::Vector3;

pub const MAX_ITERATIONS: usize = 30;

/// Once the ball has shrunk at least once, a new touching point seen from
/// the ball centre under less than this angle (radians) to the vertex is a
/// surface neighbour rather than the opposite side, and the previous radius
/// is kept. Without it a vertex normal a fraction of a degree off lets the
/// nearest neighbour collapse the ball.
pub const DENOISE_ANGLE: f64 = std::f64::consts::PI / 9.0;

/// Radius of the largest empty ball touching vertex `vertex` from the
/// inside, found by shrinking a ball of radius `initial_radius` shot along
/// `inward` (unit). Returns the last radius if 30 iterations do not settle.
pub fn shrinking_ball_radius(
    index: &PointIndex,
    vertex: usize,
    inward: &Vector3<f64>,
    initial_radius: f64,
) -> f64 {
    let points = index.points();
    let p = points[vertex];
    if inward.norm_squared() == 0.0 {
        return initial_radius;
    }
    let mut r = initial_radius;
    let mut last = None;
    for step in 0..MAX_ITERATIONS {
        let center = p + inward * r;
        let (q, dist) = index.nearest(&center);
        // Empty ball: nothing strictly closer than the touching vertex.
        if q == vertex || dist >= r * (1.0 - 1e-12) {
            break;
        }
        let d = points[q] - p;
        let denom = 2.0 * d.dot(inward);
        if denom <= 0.0 {
            break;
        }
        let next = d.norm_squared() / denom;
        let c = p + inward * next;
        if step > 0 && (p - c).angle(&(points[q] - c)) < DENOISE_ANGLE {
            break;
        }
        if last == Some(q) {
            r = next;
            break;
        }
        r = next;
        last = Some(q);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    #[test]
    fn lone_plane_keeps_initial_radius() {
        let pts: Vec<_> = (0..16)
            .map(|i| Point3::new((i % 4) as f64, (i / 4) as f64, 0.0))
            .collect();
        let idx = PointIndex::new(pts).unwrap();
        let r = shrinking_ball_radius(&idx, 5, &-Vector3::z(), 10.0);
        assert_eq!(r, 10.0);
    }

    #[test]
    fn opposite_point_gives_half_gap() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.0, 0.0, 3.0),
            Point3::new(5.0, 0.0, 3.0),
        ];
        let idx = PointIndex::new(pts).unwrap();
        let r = shrinking_ball_radius(&idx, 0, &Vector3::z(), 50.0);
        assert!((r - 1.5).abs() < 1e-12);
    }

    #[test]
    fn near_neighbour_does_not_collapse_the_ball() {
        // Opposite wall 2 m away, and a neighbour on the vertex's own
        // surface that a slightly tilted normal leans towards.
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.0, 0.0, 2.0),
            Point3::new(0.15, 0.0, 0.015),
        ];
        let idx = PointIndex::new(pts).unwrap();
        let n = Vector3::new(0.01, 0.0, 1.0).normalize();
        let r = shrinking_ball_radius(&idx, 0, &n, 10.0);
        assert!((r - 1.0).abs() < 0.01, "{r}");
    }
}
