//! Independent oracles and scene builders shared by the integration tests.
#![allow(dead_code)]

use meshlabel::mesh_io::ClassId;
use meshlabel::forest::ForestModel;
use meshlabel::session::{AnnotationSession, EditOp, Predictor, SessionState, Target};
use meshlabel::synthetic::{generate_town, MeshBuilder, TownParams};
use meshlabel::workflow::{run_pipeline_on, PipelineSettings};
use meshlabel::SegmentationParams;
use meshlabel::TriangleMesh;
use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Cyclic Jacobi eigen-decomposition of a symmetric 3×3 matrix. Returns
/// eigenvalues in descending order and the matching unit eigenvectors.
pub fn jacobi_eigen(m: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut a = m;
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let scale: f64 = (0..3).map(|i| a[i][i].abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    for _ in 0..100 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off.sqrt() <= 1e-18 * scale {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
            let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for row in a.iter_mut() {
                let (kp, kq) = (row[p], row[q]);
                row[p] = c * kp - s * kq;
                row[q] = s * kp + c * kq;
            }
            for k in 0..3 {
                let (pk, qk) = (a[p][k], a[q][k]);
                a[p][k] = c * pk - s * qk;
                a[q][k] = s * pk + c * qk;
            }
            for row in v.iter_mut() {
                let (kp, kq) = (row[p], row[q]);
                row[p] = c * kp - s * kq;
                row[q] = s * kp + c * kq;
            }
        }
    }
    let mut idx = [0, 1, 2];
    idx.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = idx.map(|i| a[i][i]);
    let vectors = idx.map(|i| {
        let col = [v[0][i], v[1][i], v[2][i]];
        let n = (col[0] * col[0] + col[1] * col[1] + col[2] * col[2]).sqrt();
        col.map(|c| c / n)
    });
    (values, vectors)
}

/// Two-pass covariance (population) about the mean.
pub fn covariance(points: &[Point3<f64>]) -> [[f64; 3]; 3] {
    let n = points.len() as f64;
    let mut mean = [0.0; 3];
    for p in points {
        for k in 0..3 {
            mean[k] += p[k] / n;
        }
    }
    let mut c = [[0.0; 3]; 3];
    for p in points {
        let d = [p.x - mean[0], p.y - mean[1], p.z - mean[2]];
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] += d[i] * d[j] / n;
            }
        }
    }
    c
}

/// `(linearity, sphericity, change of curvature, verticality)` by brute force.
pub fn eigen_oracle(points: &[Point3<f64>]) -> [f64; 4] {
    let (l, vecs) = jacobi_eigen(covariance(points));
    let l = l.map(|x| x.max(0.0));
    if l[0] <= 0.0 {
        return [0.0; 4];
    }
    [
        (l[0] - l[1]) / l[0],
        l[2] / l[0],
        l[2] / (l[0] + l[1] + l[2]),
        1.0 - vecs[2][2].abs(),
    ]
}

/// 50 anisotropic Gaussian-ish points under a random rotation.
pub fn random_blob(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3<f64>> {
    let scales = Vector3::new(
        rng.random_range(2.0..4.0),
        rng.random_range(0.8..1.6),
        rng.random_range(0.05..0.4),
    );
    let axis = Vector3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
    let rot = nalgebra::Rotation3::new(axis.normalize() * rng.random_range(0.0..std::f64::consts::PI));
    let offset = Vector3::new(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0), rng.random_range(0.0..50.0));
    (0..n)
        .map(|_| {
            // Sum of uniforms: cheap, symmetric, bounded.
            let g = |rng: &mut ChaCha8Rng| (0..4).map(|_| rng.random::<f64>() - 0.5).sum::<f64>();
            let local = Vector3::new(g(rng) * scales.x, g(rng) * scales.y, g(rng) * scales.z);
            Point3::from(rot * local + offset)
        })
        .collect()
}

/// A random connected scene: a wavy ground grid with a few boxes on top and
/// random per-face labels.
pub fn random_mesh(seed: u64) -> TriangleMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = MeshBuilder::new(seed);
    let size = rng.random_range(5.0..15.0);
    let cells = rng.random_range(3..9);
    let (a1, a2, f1, f2) = (
        rng.random_range(0.0..1.0),
        rng.random_range(0.0..0.5),
        rng.random_range(0.1..1.5),
        rng.random_range(0.1..1.5),
    );
    let lift = move |x: f64, y: f64| a1 * (f1 * x).sin() + a2 * (f2 * y).cos();
    b.patch(
        Point3::origin(),
        Vector3::x() * size,
        Vector3::y() * size,
        cells,
        cells,
        ClassId::TERRAIN,
        None,
        &lift,
    );
    for _ in 0..rng.random_range(0..3) {
        let x = rng.random_range(0.0..size - 2.0);
        let y = rng.random_range(0.0..size - 2.0);
        let min = Point3::new(x, y, 2.0);
        let max = min + Vector3::new(rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), rng.random_range(0.5..3.0));
        b.cuboid(
            min,
            max,
            rng.random_range(0.3..1.0),
            rng.random_bool(0.5),
            (ClassId::BUILDING, None),
            (ClassId::BUILDING, None),
        );
    }
    let mut m = b.build(&format!("random_{seed}"));
    let labels = (0..m.face_count())
        .map(|_| ClassId::new(rng.random_range(0..7)).unwrap())
        .collect();
    m.set_face_labels(labels).unwrap();
    m
}

/// Random labels 0..=6 for every face.
pub fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<ClassId> {
    (0..n).map(|_| ClassId::new(rng.random_range(0..7)).unwrap()).collect()
}

/// Two horizontal 10 m × 10 m half-planes `gap` apart joined by a vertical
/// riser, one connected surface.
pub fn stepped_planes(gap: f64) -> TriangleMesh {
    let mut b = MeshBuilder::new(0);
    let flat = |_: f64, _: f64| 0.0;
    let l = ClassId::TERRAIN;
    b.patch(Point3::origin(), Vector3::x() * 5.0, Vector3::y() * 10.0, 5, 10, l, None, &flat);
    b.patch(Point3::new(5.0, 0.0, 0.0), Vector3::y() * 10.0, Vector3::z() * gap, 10, 1, l, None, &flat);
    b.patch(Point3::new(5.0, 0.0, gap), Vector3::x() * 5.0, Vector3::y() * 10.0, 5, 10, l, None, &flat);
    weld(b.build("step"))
}

/// Merges coincident vertices so adjacent patches share edges.
pub fn weld(m: TriangleMesh) -> TriangleMesh {
    let key = |p: &Point3<f64>| [p.x, p.y, p.z].map(|c| (c * 1e6).round() as i64);
    let mut map = std::collections::HashMap::new();
    let mut verts = Vec::new();
    let remap: Vec<u32> = m
        .vertices()
        .iter()
        .map(|p| {
            *map.entry(key(p)).or_insert_with(|| {
                verts.push(*p);
                (verts.len() - 1) as u32
            })
        })
        .collect();
    let faces = m.faces().iter().map(|f| f.map(|v| remap[v as usize])).collect();
    TriangleMesh::from_parts(
        m.tile_id(),
        verts,
        faces,
        m.face_labels().to_vec(),
        m.face_segments().to_vec(),
        m.face_colors().to_vec(),
    )
    .unwrap()
}

/// Splits every face into four by its edge midpoints; labels and colours are
/// copied to the children.
pub fn subdivide(m: &TriangleMesh) -> TriangleMesh {
    let mut verts = m.vertices().to_vec();
    let mut faces = Vec::new();
    let mut labels = Vec::new();
    let mut colors = Vec::new();
    for (f, tri) in m.faces().iter().enumerate() {
        let p = tri.map(|v| m.vertices()[v as usize]);
        let mid = |a: usize, b: usize, verts: &mut Vec<Point3<f64>>| {
            verts.push(Point3::from((p[a].coords + p[b].coords) / 2.0));
            (verts.len() - 1) as u32
        };
        let ab = mid(0, 1, &mut verts);
        let bc = mid(1, 2, &mut verts);
        let ca = mid(2, 0, &mut verts);
        for child in [[tri[0], ab, ca], [ab, tri[1], bc], [ca, bc, tri[2]], [ab, bc, ca]] {
            faces.push(child);
            labels.push(m.face_labels()[f]);
            colors.push(m.face_colors()[f].clone());
        }
    }
    let n = faces.len();
    TriangleMesh::from_parts(m.tile_id(), verts, faces, labels, vec![-1; n], colors).unwrap()
}

/// Area-weighted per-class statistics by a direct face loop:
/// `(oa, iou per class 1..=6 or None when absent)`.
pub fn recount(mesh: &TriangleMesh, gt: &[ClassId], pred: &[ClassId]) -> (f64, [Option<f64>; 6]) {
    let mut correct = 0.0;
    let mut total = 0.0;
    let mut inter = [0.0; 6];
    let mut union = [0.0; 6];
    for f in 0..mesh.face_count() {
        let (g, p) = (gt[f].get() as usize, pred[f].get() as usize);
        if g == 0 {
            continue;
        }
        let a = mesh.face_area(f);
        total += a;
        if g == p {
            correct += a;
        }
        for k in 1..=6 {
            let (ing, inp) = (g == k, p == k);
            if ing && inp {
                inter[k - 1] += a;
            }
            if ing || inp {
                union[k - 1] += a;
            }
        }
    }
    let iou = std::array::from_fn(|k| (union[k] > 0.0).then(|| inter[k] / union[k]));
    (correct / total, iou)
}

/// Smallest pairwise distance by checking every pair.
pub fn brute_min_distance(points: &[Point3<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min((points[i] - points[j]).norm());
        }
    }
    best
}

/// Geodesic sphere: every icosahedron face split into `n²` triangles and
/// projected to radius `r`, giving `10 n² + 2` vertices with near-radial
/// vertex normals.
pub fn geodesic_sphere(r: f64, n: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let ico = [
        [-1.0, t, 0.0], [1.0, t, 0.0], [-1.0, -t, 0.0], [1.0, -t, 0.0],
        [0.0, -1.0, t], [0.0, 1.0, t], [0.0, -1.0, -t], [0.0, 1.0, -t],
        [t, 0.0, -1.0], [t, 0.0, 1.0], [-t, 0.0, -1.0], [-t, 0.0, 1.0],
    ]
    .map(|[x, y, z]| Vector3::new(x, y, z));
    let tris = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    let mut b = MeshBuilder::new(0);
    for [a, bb, c] in tris {
        let (a, bb, c) = (ico[a], ico[bb], ico[c]);
        let mut idx = vec![vec![0u32; n + 1]; n + 1];
        for i in 0..=n {
            for j in 0..=n - i {
                let p = a + (bb - a) * (i as f64 / n as f64) + (c - a) * (j as f64 / n as f64);
                idx[i][j] = b.vertex(Point3::from(p.normalize() * r));
            }
        }
        for i in 0..n {
            for j in 0..n - i {
                b.face([idx[i][j], idx[i + 1][j], idx[i][j + 1]], ClassId::UNCLASSIFIED, None);
                if j + 1 < n - i {
                    b.face([idx[i + 1][j], idx[i + 1][j + 1], idx[i][j + 1]], ClassId::UNCLASSIFIED, None);
                }
            }
        }
    }
    weld(b.build("geodesic"))
}

/// Random edit for a session; ids just past the end now and then so the
/// error paths run too.
pub fn random_op(rng: &mut ChaCha8Rng, s: &AnnotationSession) -> EditOp {
    let faces = s.mesh().face_count() as u32;
    let segs = s.segments().len() as u32;
    let face = |rng: &mut ChaCha8Rng| if rng.random_bool(0.03) { faces } else { rng.random_range(0..faces) };
    let seg = |rng: &mut ChaCha8Rng| if rng.random_bool(0.03) { segs } else { rng.random_range(0..segs) };
    match rng.random_range(0..10) {
        0..4 => EditOp::AssignLabel {
            target: Target::Faces((0..rng.random_range(0..20)).map(|_| face(rng)).collect()),
            class: ClassId::new(rng.random_range(0..7)).unwrap(),
        },
        4..6 => EditOp::AssignLabel {
            target: Target::Segments((0..rng.random_range(1..4)).map(|_| seg(rng)).collect()),
            class: ClassId::new(rng.random_range(0..7)).unwrap(),
        },
        6..8 => EditOp::SplitPlanar {
            segment: seg(rng),
            max_distance: rng.random_range(0.05..1.0),
            max_angle: rng.random_range(5.0..60.0),
            min_region_faces: rng.random_range(1..6),
        },
        _ => {
            let a = face(rng);
            let b = if rng.random_bool(0.5) && a < faces {
                s.mesh().topology().adjacency[a as usize].first().copied().unwrap_or(a)
            } else {
                face(rng)
            };
            EditOp::SplitStroke {
                stroke: vec![a, b],
                max_distance: rng.random_range(0.1..2.0),
            }
        }
    }
}

/// Faces an assignment would touch, resolved against the current segments.
pub fn target_faces(s: &AnnotationSession, target: &Target) -> Vec<u32> {
    match target {
        Target::Faces(f) => f.clone(),
        Target::Segments(ids) => ids
            .iter()
            .flat_map(|&id| s.segments().segments()[id as usize].face_ids.clone())
            .collect(),
    }
}

pub fn check_partition(s: &AnnotationSession) {
    let mesh = s.mesh();
    let segs = s.segments();
    assert!(segs.is_partition_of(mesh));
    let mut seen = vec![0u32; mesh.face_count()];
    for (id, seg) in segs.segments().iter().enumerate() {
        assert_eq!(seg.id as usize, id);
        assert!(!seg.face_ids.is_empty());
        for &f in &seg.face_ids {
            seen[f as usize] += 1;
            assert_eq!(segs.segment_of(f as usize), seg.id);
            assert_eq!(mesh.face_segments()[f as usize], seg.id as i32);
        }
    }
    assert!(seen.iter().all(|&n| n == 1));
    assert_eq!(s.predictions().len(), segs.len());
}

/// Opens a 40 m town tile and applies 200 random edits, checking after each
/// one the segment partition and the labels against a replay of the
/// assignments alone. Returns the untouched mesh and the session.
pub fn run_edits(seed: u64, predictor: Option<&Predictor>) -> (TriangleMesh, AnnotationSession) {
    let mesh = generate_town("edit", 10 + seed, &TownParams { size: 40.0, ..TownParams::default() });
    let mut s = AnnotationSession::open(mesh.clone(), predictor, &SegmentationParams::default()).unwrap();
    let mut labels = s.mesh().face_labels().to_vec();
    let mut confirmed = vec![false; labels.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut applied = 0;
    for _ in 0..200 {
        let op = random_op(&mut rng, &s);
        let before: SessionState = s.state();
        let touched = match &op {
            EditOp::AssignLabel { target, class } => {
                let bad = match target {
                    Target::Faces(f) => f.iter().any(|&x| x as usize >= labels.len()),
                    Target::Segments(ids) => ids.iter().any(|&x| x as usize >= s.segments().len()),
                };
                (!bad).then(|| (target_faces(&s, target), *class))
            }
            _ => None,
        };
        match s.record(op) {
            Ok(_) => {
                applied += 1;
                if let Some((faces, class)) = touched {
                    for f in faces {
                        labels[f as usize] = class;
                        confirmed[f as usize] = true;
                    }
                }
            }
            Err(_) => assert_eq!(s.state(), before),
        }
        check_partition(&s);
        assert_eq!(s.mesh().face_labels(), labels.as_slice());
        assert_eq!(s.confirmed(), confirmed.as_slice());
        assert!((0.0..=1.0).contains(&s.progress()));
    }
    assert_eq!(s.log().len(), applied);
    assert!(applied > 100, "{applied}");
    (mesh, s)
}

/// Ten-tree forest trained on two 40 m town tiles.
pub fn small_model() -> ForestModel {
    let mut settings = PipelineSettings::default();
    settings.forest.n_trees = 10;
    let params = TownParams { size: 40.0, ..TownParams::default() };
    let train = [generate_town("a", 1, &params), generate_town("b", 2, &params)];
    run_pipeline_on(&train, &[], &settings).unwrap().model
}
