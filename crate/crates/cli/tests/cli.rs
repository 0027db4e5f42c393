use std::path::Path;
use std::process::Command;

fn meshlabel(args: &[&str], cwd: &Path) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_meshlabel"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "meshlabel {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn town_to_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    meshlabel(&["town", "-o", ".", "--train", "2", "--test", "1", "--seed", "5"], d);
    assert!(d.join("town_02.ply").is_file());

    let run = meshlabel(&["run", "pipeline.json"], d);
    assert!(run.contains("mIoU"), "{run}");
    for f in ["manifest.json", "model.mlrf", "features.csv", "report.json", "report.csv"] {
        assert!(d.join("out").join(f).is_file(), "{f}");
    }
    assert!(d.join("out/predictions/town_02.ply").is_file());

    meshlabel(&["segment", "town_00.ply", "-o", "seg.ply"], d);
    let feat = meshlabel(&["featurize", "town_00.ply", "town_01.ply", "-o", "f.csv"], d);
    assert!(feat.contains("from 2 tiles"));
    meshlabel(&["train", "f.csv", "-o", "m.mlrf", "--trees", "20"], d);
    meshlabel(&["predict", "--model", "m.mlrf", "town_02.ply", "-o", "p.ply"], d);
    assert!(d.join("p.segments.csv").is_file());
    let eval = meshlabel(&["evaluate", "--gt", "town_02.ply", "--pred", "p.ply", "--csv", "t.csv"], d);
    let rep: serde_json::Value = serde_json::from_str(&eval).unwrap();
    assert!(rep["oa"].as_f64().unwrap() > 0.8, "{eval}");
    let table = std::fs::read_to_string(d.join("t.csv")).unwrap();
    assert!(table.starts_with("class,precision,recall,f1,iou,upper_bound_iou"));
}

#[test]
fn sample_rank_split() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    meshlabel(&["town", "-o", ".", "--train", "3", "--test", "0"], d);
    let s = meshlabel(&["sample", "town_00.ply", "-o", "cloud.ply", "--density", "2", "--raw-density", "8"], d);
    assert!(s.contains("points"), "{s}");
    assert!(std::fs::read(d.join("cloud.ply")).unwrap().starts_with(b"ply\n"));

    let rank = meshlabel(&["rank", "town_00.ply", "town_01.ply", "town_02.ply"], d);
    let lines: Vec<&str> = rank.lines().collect();
    assert_eq!(lines.len(), 3);
    let vals: Vec<f64> = lines.iter().map(|l| l.split('\t').nth(1).unwrap().parse().unwrap()).collect();
    assert!(vals.windows(2).all(|w| w[0] >= w[1]));

    let split = meshlabel(&["split", "a.ply", "b.ply", "c.ply", "--train", "1", "--test", "1", "--seed", "3"], d);
    let recs: serde_json::Value = serde_json::from_str(&split).unwrap();
    let roles: Vec<&str> = recs.as_array().unwrap().iter().map(|r| r["role"].as_str().unwrap()).collect();
    assert_eq!(roles.iter().filter(|r| **r == "train").count(), 1);
    assert_eq!(roles.iter().filter(|r| **r == "unlabeled").count(), 1);
}

#[test]
fn errors_name_their_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_meshlabel"))
        .args(["segment", "missing.ply", "-o", "x.ply"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("load"), "{err}");
}
