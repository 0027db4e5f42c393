mod common;

use meshlabel::segmentation::oversegment;
use meshlabel::spatial::{CylinderQuery, PointIndex, SegmentIndex};
use meshlabel::SegmentationParams;
use nalgebra::{Point2, Point3};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn segment_cylinders_match_a_face_scan(seed in 0u64..5000, cx in -2.0f64..16.0, cy in -2.0f64..16.0, r in 0.1f64..12.0) {
        let mesh = common::random_mesh(seed);
        let segs = oversegment(&mesh, &SegmentationParams { max_distance: 0.2, max_angle: 15.0, min_area: 0.0 }).unwrap();
        let index = SegmentIndex::new(&mesh, &segs).unwrap();
        let q = CylinderQuery::new(Point2::new(cx, cy), r).unwrap();
        let mut expect: Vec<u32> = mesh
            .faces()
            .iter()
            .enumerate()
            .filter(|(_, f)| f.iter().any(|&v| {
                let p = mesh.vertices()[v as usize];
                (p.x - cx).powi(2) + (p.y - cy).powi(2) <= r * r
            }))
            .map(|(i, _)| segs.segment_of(i))
            .collect();
        expect.sort_unstable();
        expect.dedup();
        prop_assert_eq!(index.segments_in_cylinder(&q), expect);
    }

    #[test]
    fn nearest_vertex_matches_a_linear_scan(seed in 0u64..5000, qx in -5.0f64..20.0, qy in -5.0f64..20.0, qz in -3.0f64..8.0) {
        let mesh = common::random_mesh(seed);
        let index = PointIndex::new(mesh.vertices().to_vec()).unwrap();
        let q = Point3::new(qx, qy, qz);
        let (i, d) = index.nearest(&q);
        let (bi, bd) = mesh
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p - q).norm()))
            .fold((usize::MAX, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
        prop_assert_eq!(i, bi);
        prop_assert!((d - bd).abs() < 1e-12);
    }
}
