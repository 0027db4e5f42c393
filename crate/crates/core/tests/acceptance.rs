//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

mod common;

use meshlabel::features::{
    color_features, eigen_features, feature_ablation_mask, multiscale_elevation, FeatureGroup, TileContext,
    FEATURE_DIM,
};
use meshlabel::forest::{ForestModel, ForestParams};
use meshlabel::mesh_io::{write_ply, PlyFormat};
use meshlabel::metrics::{evaluate_upper_bound, report, ConfusionMatrix, MetricsReport};
use meshlabel::sampling::{montecarlo_sample, poisson_prune};
use meshlabel::segmentation::oversegment;
use meshlabel::session::{AnnotationSession, Predictor, Target, TileStore};
use meshlabel::synthetic::{generate_town, grid_plane, parallel_slabs, unit_cube, TownParams};
use meshlabel::workflow::{
    feature_diversity, rank_tiles, run_pipeline, run_pipeline_on, tile_diversities, PipelineConfig,
    PipelineSettings, TileFeatures,
};
use meshlabel::{ClassId, SegmentSet, SegmentationParams, TriangleMesh};
use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn whole(mesh: &TriangleMesh) -> SegmentSet {
    SegmentSet::from_assignment(mesh, &vec![0; mesh.face_count()]).unwrap()
}

fn evaluate(mesh: &TriangleMesh, pred: &[ClassId]) -> MetricsReport {
    let mut cm = ConfusionMatrix::new();
    cm.accumulate_labels(mesh, pred).unwrap();
    report(&cm).unwrap()
}

fn feature_schema() -> Outcome {
    ensure!(FEATURE_DIM == 44, "dimension {FEATURE_DIM}");
    let town = generate_town("t", 1, &TownParams { size: 40.0, ..TownParams::default() });
    let segs = oversegment(&town, &SegmentationParams::default()).unwrap();
    let all = TileContext::new(&town, &segs).unwrap().featurize_all();
    ensure!(all.iter().all(|v| v.as_slice().len() == 44), "vector length");
    let layout: [(&str, std::ops::Range<usize>); 14] = [
        ("linearity", 0..1),
        ("sphericity", 1..2),
        ("curvature", 2..3),
        ("verticality", 3..4),
        ("absolute_elevation", 4..5),
        ("relative_elevation", 5..6),
        ("multiscale_elevations", 6..9),
        ("segment_area", 9..10),
        ("triangle_density", 10..11),
        ("inmat", 11..12),
        ("average_hsv", 12..15),
        ("variance_hsv", 15..18),
        ("hsv_histogram", 18..43),
        ("greenness", 43..44),
    ];
    ensure!(FeatureGroup::ALL.len() == layout.len(), "{} groups", FeatureGroup::ALL.len());
    for (g, (name, range)) in FeatureGroup::ALL.iter().zip(&layout) {
        ensure!(g.name() == *name && g.indices() == *range, "group {}", g.name());
        let mask = feature_ablation_mask(&[*name]).unwrap();
        let off: Vec<usize> = (0..44).filter(|&i| !mask[i]).collect();
        ensure!(off == range.clone().collect::<Vec<_>>(), "mask of {name}");
    }
    Ok(format!("{} segments x 44, 14 groups", all.len()))
}

fn eigen_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let pts = common::random_blob(&mut rng, 50);
        let f = eigen_features(&pts);
        let o = common::eigen_oracle(&pts);
        for (g, w) in [f.linearity, f.sphericity, f.curvature_change, f.verticality].iter().zip(o) {
            worst = worst.max((g - w).abs());
        }
    }
    ensure!(worst <= 1e-9, "max error {worst:e}");
    Ok(format!("max error {worst:.1e}"))
}

fn analytic_values() -> Outcome {
    let flat = grid_plane(4.0, 4, 2.0);
    let horizontal = eigen_features(flat.vertices()).verticality;
    let wall: Vec<_> = flat.vertices().iter().map(|p| Point3::new(p.x, 1.0, p.y)).collect();
    let vertical = eigen_features(&wall).verticality;
    ensure!(horizontal.abs() < 1e-12 && (vertical - 1.0).abs() < 1e-12, "verticality {horizontal} {vertical}");
    let grey = color_features([&[128u8, 128, 128]]).greenness;
    let green = color_features([&[0u8, 255, 0]]).greenness;
    ensure!(grey.abs() < 1e-9 && green == 255.0, "greenness {grey} {green}");
    ensure!(
        multiscale_elevation(1.0, 1.0, 5.0) == 0.0 && multiscale_elevation(5.0, 1.0, 5.0) == 1.0,
        "multiscale endpoints"
    );
    for (size, cells) in [(4.0, 4), (5.0, 2), (3.0, 6)] {
        let plane = grid_plane(size, cells, 0.0);
        let v = TileContext::new(&plane, &whole(&plane)).unwrap().featurize(0);
        let want = plane.face_count() as f64 / (size * size);
        ensure!(v.0[10] == want, "density {} vs {want}", v.0[10]);
    }
    Ok("verticality 0/1, greenness 0/255, endpoints 0/1, density exact".into())
}

fn over_segmentation() -> Outcome {
    let strict = SegmentationParams { min_area: 0.0, max_distance: 0.01, max_angle: 30.0 };
    let cube = oversegment(&unit_cube(), &strict).unwrap().len();
    ensure!(cube == 6, "cube gives {cube}");
    let step = common::stepped_planes(0.3);
    let merged = oversegment(&step, &SegmentationParams { min_area: 0.0, max_distance: 0.5, max_angle: 90.0 })
        .unwrap()
        .len();
    ensure!(merged == 1, "planes 0.3 m apart give {merged}");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..50 {
        let mesh = common::random_mesh(seed);
        let p = SegmentationParams {
            min_area: rng.random_range(0.0..2.0),
            max_distance: rng.random_range(0.05..1.0),
            max_angle: rng.random_range(5.0..90.0),
        };
        let segs = oversegment(&mesh, &p).unwrap();
        let total: usize = segs.segments().iter().map(|s| s.face_ids.len()).sum();
        ensure!(segs.is_partition_of(&mesh) && total == mesh.face_count(), "mesh {seed} not partitioned");
    }
    Ok("cube 6, 0.3 m planes 1, 50 partitions".into())
}

fn inmat() -> Outcome {
    let r = 3.0;
    let sphere = common::geodesic_sphere(r, 10);
    let got = TileContext::new(&sphere, &whole(&sphere)).unwrap().mat_radius(0);
    ensure!((got - r).abs() <= 0.02 * r, "sphere {got} for {r}");
    let d = 1.5;
    let slabs = parallel_slabs(20.0, 21, d);
    let assign: Vec<i32> = (0..slabs.face_count()).map(|f| (f >= slabs.face_count() / 2) as i32).collect();
    let segs = SegmentSet::from_assignment(&slabs, &assign).unwrap();
    let ctx = TileContext::new(&slabs, &segs).unwrap();
    let slab = [ctx.mat_radius(0), ctx.mat_radius(1)];
    for s in slab {
        ensure!((s - d / 2.0).abs() <= 0.02 * d / 2.0, "slab {s} for {}", d / 2.0);
    }
    Ok(format!(
        "sphere {got:.3}/{r} ({} vertices), slabs {:.3} {:.3}/{} ({} vertices)",
        sphere.vertex_count(),
        slab[0],
        slab[1],
        d / 2.0,
        slabs.vertex_count()
    ))
}

fn metrics() -> Outcome {
    let mut gt = grid_plane(2.0, 2, 0.0);
    gt.set_face_labels((0..8).map(|f| if f < 6 { ClassId::TERRAIN } else { ClassId::WATER }).collect())
        .unwrap();
    let r = evaluate(&gt, &[ClassId::TERRAIN; 8]);
    let ious = (r.per_class[ClassId::TERRAIN.slot()].iou, r.per_class[ClassId::WATER.slot()].iou);
    ensure!(ious == (0.75, 0.0) && r.oa == 0.75 && r.miou == 0.375, "hand example {ious:?} {} {}", r.oa, r.miou);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for seed in 0..20 {
        let mesh = common::random_mesh(seed);
        let pred = common::random_labels(&mut rng, mesh.face_count());
        let r = evaluate(&mesh, &pred);
        let (oa, ious) = common::recount(&mesh, mesh.face_labels(), &pred);
        ensure!((r.oa - oa).abs() <= 1e-12, "recount OA on mesh {seed}");
        for (k, want) in ious.iter().enumerate() {
            ensure!((r.per_class[k].iou - want.unwrap_or(0.0)).abs() <= 1e-12, "recount IoU on mesh {seed}");
        }
        let fine = common::subdivide(&mesh);
        let fine_pred: Vec<ClassId> = pred.iter().flat_map(|&p| [p; 4]).collect();
        let s = evaluate(&fine, &fine_pred);
        ensure!((s.oa - r.oa).abs() <= 1e-9 && (s.miou - r.miou).abs() <= 1e-9, "subdivision on mesh {seed}");
    }
    Ok("hand example exact, 20 recounts, 20 subdivisions".into())
}

fn upper_bound() -> Outcome {
    for seed in 0..5 {
        let mut mesh = common::random_mesh(seed);
        let p = SegmentationParams { min_area: 0.0, max_distance: 0.3, max_angle: 20.0 };
        let segs = oversegment(&mesh, &p).unwrap();
        mesh.set_face_labels(
            (0..mesh.face_count()).map(|f| ClassId::from_slot(segs.segment_of(f) as usize % 6)).collect(),
        )
        .unwrap();
        let miou = evaluate_upper_bound(&mesh, &segs).unwrap().miou;
        ensure!(miou == 1.0, "pure segments give {miou}");
    }
    let mut mesh = grid_plane(10.0, 5, 0.0);
    mesh.set_face_labels((0..50).map(|f| if f < 3 { ClassId::BUILDING } else { ClassId::TERRAIN }).collect())
        .unwrap();
    let segs = SegmentSet::from_assignment(&mesh, &(0..50).map(|f| (f >= 5) as i32).collect::<Vec<_>>()).unwrap();
    let r = evaluate_upper_bound(&mesh, &segs).unwrap();
    let want = (0.6, 90.0 / 94.0, 0.96);
    let got = (r.per_class[ClassId::BUILDING.slot()].iou, r.per_class[ClassId::TERRAIN.slot()].iou, r.oa);
    ensure!(
        (got.0 - want.0).abs() < 1e-12 && (got.1 - want.1).abs() < 1e-12 && (got.2 - want.2).abs() < 1e-12,
        "mixed example {got:?}"
    );
    Ok("pure mIoU 1.0, mixed example exact".into())
}

fn forest() -> Outcome {
    let params = |n_trees, seed| ForestParams { n_trees, seed, ..ForestParams::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (x, y): (Vec<Vec<f64>>, Vec<ClassId>) = (0..200)
        .map(|k| {
            let (c, class) = if k < 100 { (2.0, ClassId::BUILDING) } else { (-2.0, ClassId::TERRAIN) };
            ((0..44).map(|_| c + rng.random_range(-1.0..1.0)).collect(), class)
        })
        .unzip();
    let w = vec![1.0; 200];
    let a = ForestModel::train(&x, &y, &w, &params(50, 3)).unwrap();
    let b = ForestModel::train(&x, &y, &w, &params(50, 3)).unwrap();
    ensure!(a.to_bytes() == b.to_bytes(), "same seed, different model");
    let mut correct = 0;
    for (row, &label) in x.iter().zip(&y) {
        let p = a.predict(row).unwrap();
        ensure!((p.probabilities.iter().sum::<f64>() - 1.0).abs() <= 1e-12, "probabilities do not sum to 1");
        correct += (p.class == label) as usize;
    }
    ensure!(correct == 200, "train accuracy {correct}/200");

    let warps: [fn(f64) -> f64; 3] = [|v| v.exp(), |v| v * v * v + 5.0 * v, |v| 3.0 * v - 7.0];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for set in 0..10 {
        let n = rng.random_range(20..60);
        let dim = rng.random_range(2..6);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let y: Vec<ClassId> = x
            .iter()
            .map(|r| {
                let c = if r[0] > 0.5 { 3 } else if r[1] > 0.0 { 1 } else { 2 };
                ClassId::new(if rng.random_bool(0.15) { rng.random_range(1..7) } else { c }).unwrap()
            })
            .collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
        let warp = warps[set % 3];
        let xw: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|&v| warp(v)).collect()).collect();
        let m = ForestModel::train(&x, &y, &w, &params(15, set as u64)).unwrap();
        let mw = ForestModel::train(&xw, &y, &w, &params(15, set as u64)).unwrap();
        for (r, rw) in x.iter().zip(&xw) {
            ensure!(m.predict(r).unwrap().class == mw.predict(rw).unwrap().class, "argmax moved on dataset {set}");
        }
    }
    Ok("deterministic, train accuracy 1.0, sums 1, 10 rescaled datasets".into())
}

fn sampler() -> Outcome {
    let plane = grid_plane(10.0, 10, 0.0);
    let raw = montecarlo_sample(&plane, 200.0, 7).unwrap();
    let pruned = poisson_prune(&raw, 10.0, &plane).unwrap();
    let density = pruned.cloud.len() as f64 / plane.total_area();
    ensure!((density - 10.0).abs() <= 0.5, "density {density}");
    let min = common::brute_min_distance(&pruned.cloud.points);
    ensure!(min >= pruned.radius, "min distance {min} < radius {}", pruned.radius);
    Ok(format!("{density:.2} pts/m², min distance {min:.4} >= radius {:.4}", pruned.radius))
}

fn end_to_end() -> Outcome {
    let params = TownParams::default();
    let tiles: Vec<TriangleMesh> =
        (0..12).map(|i| generate_town(&format!("town_{i:02}"), 2000 + i as u64, &params)).collect();
    let settings = PipelineSettings::default();
    let out = run_pipeline_on(&tiles[..8], &tiles[8..], &settings).unwrap();
    let r = out.evaluation.report.unwrap();
    let ub = out.upper_bound.unwrap().miou;
    ensure!(r.oa >= 0.95, "OA {:.4}", r.oa);
    ensure!(r.miou >= 0.80, "mIoU {:.4}", r.miou);
    ensure!(ub >= 0.98, "upper bound mIoU {ub:.4}");

    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for t in &tiles {
        let p = dir.path().join(format!("{}.ply", t.tile_id()));
        std::fs::write(&p, write_ply(t, PlyFormat::BinaryLittleEndian)).unwrap();
        paths.push(p);
    }
    let config = |out: &str| PipelineConfig {
        train: paths[..8].to_vec(),
        test: paths[8..].to_vec(),
        output: dir.path().join(out),
        settings: settings.clone(),
    };
    let a = run_pipeline(&config("a")).unwrap();
    let b = run_pipeline(&config("b")).unwrap();
    ensure!(a == b, "manifests differ");
    for f in a.outputs.iter().map(|o| o.path.as_str()).chain(["manifest.json"]) {
        let same = std::fs::read(dir.path().join("a").join(f)).unwrap() == std::fs::read(dir.path().join("b").join(f)).unwrap();
        ensure!(same, "{f} differs between runs");
    }
    Ok(format!(
        "OA {:.4}, mIoU {:.4}, upper bound mIoU {ub:.4}, {} outputs identical",
        r.oa,
        r.miou,
        a.outputs.len() + 1
    ))
}

fn diversity() -> Outcome {
    ensure!(feature_diversity(&[0.42; FEATURE_DIM]) == 0.0, "constant descriptor");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let v: Vec<f64> = (0..FEATURE_DIM).map(|_| rng.random()).collect();
        let mut p = v.clone();
        for i in (1..p.len()).rev() {
            p.swap(i, rng.random_range(0..=i));
        }
        let (a, b) = (feature_diversity(&v), feature_diversity(&p));
        ensure!((a - b).abs() <= 1e-12, "permutation changed {a} to {b}");
    }
    let size = TownParams::default().size;
    let bare = TownParams {
        buildings: (0, 0),
        trees: (0, 0),
        vehicles: (0, 0),
        boats: (0, 0),
        water_probability: 0.0,
        ..TownParams::default()
    };
    let tile = |m: TriangleMesh| {
        let segs = oversegment(&m, &SegmentationParams::default()).unwrap();
        TileFeatures { tile_id: m.tile_id().into(), features: TileContext::new(&m, &segs).unwrap().featurize_all() }
    };
    let uniform = tile(generate_town("uniform", 1, &bare));
    let mixed = tile(generate_town("mixed", 1, &TownParams::default()));
    let div = tile_diversities(&[uniform, mixed]).unwrap();
    let ranked = rank_tiles(&div);
    ensure!(
        ranked[0] == "mixed",
        "{size} m tiles: uniform {:.4} ranks above mixed {:.4}",
        div[0].1,
        div[1].1
    );
    Ok(format!("constant 0, permutation, mixed {:.4} > uniform {:.4}", div[1].1, div[0].1))
}

fn service() -> Outcome {
    let model = common::small_model();
    let predictor = Predictor::new(&model);
    let mut ops = 0;
    for seed in 0..4 {
        let (mesh, s) = common::run_edits(seed, (seed % 2 == 0).then_some(&predictor));
        ops += s.log().len();
        let replayed = AnnotationSession::replay(mesh, s.initial_state().clone(), s.log().to_vec()).unwrap();
        ensure!(replayed.state() == s.state(), "replay of sequence {seed} differs");
    }
    let dir = tempfile::tempdir().unwrap();
    let store = TileStore::new(dir.path());
    let town = generate_town("tile", 5, &TownParams { size: 40.0, ..TownParams::default() });
    std::fs::write(store.ply_path("tile"), write_ply(&town, PlyFormat::Ascii)).unwrap();
    let mut s = store.open("tile", Some(&predictor), &SegmentationParams::default()).unwrap();
    s.assign_label(Target::Segments(vec![0, 2]), ClassId::BOAT).unwrap();
    s.assign_label(Target::Faces(vec![3, 4, 5]), ClassId::UNCLASSIFIED).unwrap();
    store.save(&s).unwrap();
    let back = store.open("tile", None, &SegmentationParams::default()).unwrap();
    ensure!(back.state() == s.state() && back.log() == s.log(), "save/open round trip differs");
    Ok(format!("4 x 200 random edits ({ops} applied) replay identically, save/open identical"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("feature schema", feature_schema),
        ("eigen features vs oracle", eigen_oracle),
        ("analytic feature values", analytic_values),
        ("over-segmentation", over_segmentation),
        ("medial radius", inmat),
        ("area-weighted metrics", metrics),
        ("upper bound", upper_bound),
        ("random forest", forest),
        ("point sampler", sampler),
        ("end-to-end town benchmark", end_to_end),
        ("tile feature diversity", diversity),
        ("annotation session", service),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.2}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{secs:.2}s]");
            }
        }
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
