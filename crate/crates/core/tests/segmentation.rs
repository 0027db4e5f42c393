mod common;

use meshlabel::mesh_io::ClassId;
use meshlabel::segmentation::{
    extract_planar_region, oversegment, split_by_stroke, upper_bound_labels, SegmentationError,
};
use meshlabel::synthetic::{grid_plane, unit_cube, uv_sphere, MeshBuilder};
use meshlabel::{SegmentSet, SegmentationParams, TriangleMesh};
use nalgebra::{Point3, Vector3};
use proptest::prelude::*;

fn params(max_distance: f64, max_angle: f64, min_area: f64) -> SegmentationParams {
    SegmentationParams {
        min_area,
        max_distance,
        max_angle,
    }
}

fn one_segment(mesh: &TriangleMesh) -> SegmentSet {
    SegmentSet::from_assignment(mesh, &vec![0; mesh.face_count()]).unwrap()
}

#[test]
fn cube_sides_are_six_segments() {
    let cube = unit_cube();
    let segs = oversegment(&cube, &params(0.01, 30.0, 0.0)).unwrap();
    assert_eq!(segs.len(), 6);
    for s in segs.segments() {
        assert_eq!(s.face_ids.len(), 2);
        // Both faces of a segment share the segment plane.
        let n = s.plane.normal;
        assert!((n.norm() - 1.0).abs() < 1e-12);
        for &f in &s.face_ids {
            assert!(cube.face_normal(f as usize).cross(&n).norm() < 1e-12);
            for p in cube.face_points(f as usize) {
                assert!(s.plane.distance(&p) < 1e-12);
            }
        }
    }
}

#[test]
fn flat_grid_of_200_faces_is_one_segment() {
    let m = grid_plane(10.0, 10, 0.0);
    assert_eq!(m.face_count(), 200);
    assert_eq!(oversegment(&m, &SegmentationParams::default()).unwrap().len(), 1);
}

#[test]
fn planes_closer_than_the_threshold_merge() {
    let step = common::stepped_planes(0.3);
    assert_eq!(oversegment(&step, &params(0.5, 90.0, 0.0)).unwrap().len(), 1);
    assert!(oversegment(&step, &params(0.1, 90.0, 0.0)).unwrap().len() >= 2);
}

#[test]
fn unbounded_thresholds_give_one_segment_per_component() {
    let loose = params(1e9, 180.0, 0.0);
    for m in [common::stepped_planes(2.0), uv_sphere(3.0, 12, 16), unit_cube()] {
        assert_eq!(oversegment(&m, &loose).unwrap().len(), 1, "{}", m.tile_id());
    }
}

fn segment_adjacency(mesh: &TriangleMesh, segs: &SegmentSet) -> Vec<std::collections::BTreeSet<u32>> {
    let topo = mesh.topology();
    let mut adj = vec![std::collections::BTreeSet::new(); segs.len()];
    for (f, ns) in topo.adjacency.iter().enumerate() {
        for &n in ns {
            let (a, b) = (segs.segment_of(f), segs.segment_of(n as usize));
            if a != b {
                adj[a as usize].insert(b);
            }
        }
    }
    adj
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn segments_partition_random_meshes(
        seed in 0u64..100_000,
        d in 0.05f64..1.0,
        a in 5.0f64..90.0,
        min_area in prop_oneof![Just(0.0), 0.0f64..4.0],
    ) {
        let mesh = common::random_mesh(seed);
        let p = params(d, a, min_area);
        let segs = oversegment(&mesh, &p).unwrap();
        prop_assert!(segs.is_partition_of(&mesh));
        let total: usize = segs.segments().iter().map(|s| s.face_ids.len()).sum();
        prop_assert_eq!(total, mesh.face_count());
        for s in segs.segments() {
            let area: f64 = s.face_ids.iter().map(|&f| mesh.face_area(f as usize)).sum();
            prop_assert!((area - s.area).abs() <= 1e-9 * area.max(1.0));
            prop_assert!((s.plane.normal.norm() - 1.0).abs() < 1e-9);
        }
        // Small segments survive only without neighbours.
        let adj = segment_adjacency(&mesh, &segs);
        for s in segs.segments() {
            if s.area < min_area {
                prop_assert!(adj[s.id as usize].is_empty(), "segment {} of {} m² has neighbours", s.id, s.area);
            }
        }
        // Same input, same output.
        prop_assert_eq!(oversegment(&mesh, &p).unwrap(), segs);
    }

    #[test]
    fn upper_bound_is_idempotent(seed in 0u64..100_000) {
        let mesh = common::random_mesh(seed);
        let segs = oversegment(&mesh, &params(0.3, 20.0, 0.0)).unwrap();
        let once = upper_bound_labels(&mesh, &segs);
        let mut relabelled = mesh.clone();
        relabelled.set_face_labels(once.clone()).unwrap();
        prop_assert_eq!(upper_bound_labels(&relabelled, &segs), once);
    }
}

/// 4 × 4 grid plane with one extra face hinged on its `y = 0` edge and
/// tilted 60° out of the plane.
fn plane_with_spike() -> (TriangleMesh, u32) {
    let mut b = MeshBuilder::new(0);
    let flat = |_: f64, _: f64| 0.0;
    b.patch(Point3::origin(), Vector3::x() * 4.0, Vector3::y() * 4.0, 4, 4, ClassId::TERRAIN, None, &flat);
    let a = b.vertex(Point3::new(0.0, 0.0, 0.0));
    let c = b.vertex(Point3::new(1.0, 0.0, 0.0));
    let (s, co) = 60f64.to_radians().sin_cos();
    let tip = b.vertex(Point3::new(0.5, -co, s));
    b.face([c, a, tip], ClassId::BUILDING, None);
    let m = common::weld(b.build("spike"));
    let spike = (m.face_count() - 1) as u32;
    (m, spike)
}

#[test]
fn planar_extraction_drops_the_spike() {
    let (m, spike) = plane_with_spike();
    let segs = one_segment(&m);
    let got = extract_planar_region(&m, &segs, 0, 0.5, 30.0, 1).unwrap();
    let expect: Vec<u32> = (0..m.face_count() as u32).filter(|&f| f != spike).collect();
    assert_eq!(got, expect);
    // Loose enough thresholds take the spike too.
    assert_eq!(extract_planar_region(&m, &segs, 0, 1.0, 90.0, 1).unwrap().len(), m.face_count());
    assert!(extract_planar_region(&m, &segs, 0, 0.5, 30.0, m.face_count() + 1).unwrap().is_empty());
    assert!(matches!(
        extract_planar_region(&m, &segs, 3, 0.5, 30.0, 1),
        Err(SegmentationError::UnknownSegment(3))
    ));
}

/// Ground plane with a sphere centred on it; segment 0 is the plane,
/// segment 1 the sphere.
fn plane_and_sphere() -> (TriangleMesh, SegmentSet) {
    let mut b = MeshBuilder::new(0);
    let flat = |_: f64, _: f64| 0.0;
    b.patch(Point3::new(-6.0, -6.0, 0.0), Vector3::x() * 12.0, Vector3::y() * 12.0, 6, 6, ClassId::TERRAIN, None, &flat);
    let ground = 72;
    b.ellipsoid(Point3::origin(), Vector3::repeat(2.0), 16, 24, ClassId::HIGH_VEGETATION, None);
    let m = b.build("plane_sphere");
    let assign: Vec<i32> = (0..m.face_count()).map(|f| (f >= ground) as i32).collect();
    let segs = SegmentSet::from_assignment(&m, &assign).unwrap();
    (m, segs)
}

#[test]
fn stroke_peels_sphere_faces_near_the_plane() {
    let (m, segs) = plane_and_sphere();
    let sphere_face = segs.segments()[1].face_ids[0];
    for d in [0.5, 0.8, 1.2] {
        let out = split_by_stroke(&m, &segs, &[0, sphere_face], d).unwrap();
        assert!(out.is_partition_of(&m));
        let expect: Vec<u32> = segs.segments()[1]
            .face_ids
            .iter()
            .copied()
            .filter(|&f| m.face_points(f as usize).iter().all(|p| p.z.abs() <= d))
            .collect();
        assert!(!expect.is_empty());
        assert_eq!(out.len(), 3);
        assert_eq!(out.segments()[2].face_ids, expect);
        assert_eq!(out.segments()[0].face_ids, segs.segments()[0].face_ids);
    }
}

#[test]
fn stroke_between_distant_planes_changes_nothing() {
    let mut b = MeshBuilder::new(0);
    let flat = |_: f64, _: f64| 0.0;
    b.patch(Point3::origin(), Vector3::x() * 4.0, Vector3::y() * 4.0, 2, 2, ClassId::TERRAIN, None, &flat);
    b.patch(Point3::new(0.0, 0.0, 5.0), Vector3::x() * 4.0, Vector3::y() * 4.0, 2, 2, ClassId::BUILDING, None, &flat);
    let m = b.build("two_planes");
    let segs = SegmentSet::from_assignment(&m, &(0..16).map(|f| (f >= 8) as i32).collect::<Vec<_>>()).unwrap();
    let out = split_by_stroke(&m, &segs, &[0, 8], 0.5).unwrap();
    assert_eq!(out, segs);
    // The same planes 0.2 m apart: everything near, nothing to split off.
    let close = m.map_vertices(|p| if p.z > 1.0 { Point3::new(p.x, p.y, 0.2) } else { *p }).unwrap();
    let segs = SegmentSet::from_assignment(&close, &(0..16).map(|f| (f >= 8) as i32).collect::<Vec<_>>()).unwrap();
    assert_eq!(split_by_stroke(&close, &segs, &[0, 8], 0.5).unwrap().len(), 2);
}

#[test]
fn stroke_preconditions() {
    let (m, segs) = plane_and_sphere();
    assert!(matches!(split_by_stroke(&m, &segs, &[0, 1], 0.5), Err(SegmentationError::StrokeWithinSegment)));
    assert!(matches!(split_by_stroke(&m, &segs, &[], 0.5), Err(SegmentationError::EmptyStroke)));
    let three = SegmentSet::from_assignment(&m, &(0..m.face_count()).map(|f| (f % 3) as i32).collect::<Vec<_>>()).unwrap();
    assert!(matches!(split_by_stroke(&m, &three, &[0, 1, 2], 0.5), Err(SegmentationError::StrokeSpansTooMany(3))));
}

#[test]
fn upper_bound_majority_rule() {
    // One 10 m² segment: 6 m² building, 4 m² terrain.
    let mut m = grid_plane(10.0, 5, 0.0);
    assert_eq!(m.face_count(), 50);
    let labels = (0..50).map(|f| if f < 30 { ClassId::BUILDING } else { ClassId::TERRAIN }).collect();
    m.set_face_labels(labels).unwrap();
    let ub = upper_bound_labels(&m, &one_segment(&m));
    assert!(ub.iter().all(|&c| c == ClassId::BUILDING));
}
