use std::path::Path;
use std::process::{Command, Output};

fn cloudfill(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cloudfill"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn cloudfill")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn number(o: &Output) -> f64 {
    stdout(o).trim().parse().unwrap()
}

#[test]
fn nshd_of_a_cloud_with_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    stdout(&cloudfill(&["synth", "torus-section", "--side", "20", "-o", "t.xyz"], dir.path()));
    assert_eq!(number(&cloudfill(&["nshd", "t.xyz", "t.xyz"], dir.path())), 0.0);
}

#[test]
fn punch_fill_improves_nshd() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    stdout(&cloudfill(&["synth", "plane", "--side", "40", "--seed", "2", "-o", "plane.ply"], d));
    std::fs::write(d.join("hole.json"), r#"{"box":{"min":[0.4,0.4,-1],"max":[0.6,0.6,1]}}"#).unwrap();
    let punched = stdout(&cloudfill(&["punch", "plane.ply", "--hole", "hole.json", "-o", "holed.ply"], d));
    assert!(punched.starts_with("removed "), "{punched}");
    let filled = stdout(&cloudfill(
        &["fill", "holed.ply", "--hole", "hole.json", "-o", "filled.ply", "--log", "fill.jsonl"],
        d,
    ));
    assert!(filled.contains("points transferred"), "{filled}");
    assert!(!std::fs::read_to_string(d.join("fill.jsonl")).unwrap().is_empty());

    let before = number(&cloudfill(&["nshd", "holed.ply", "plane.ply"], d));
    let after = number(&cloudfill(&["nshd", "filled.ply", "plane.ply"], d));
    assert!(after < before, "{after} >= {before}");
    let local = number(&cloudfill(
        &["nshd", "filled.ply", "plane.ply", "--metric", "local", "--hole", "hole.json"],
        d,
    ));
    assert!(local <= after + 1e-12);
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = cloudfill(&["nshd", "nope.xyz", "nope.xyz"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("nope.xyz"), "{err}");
}

#[test]
fn bad_arguments_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cloudfill(&["fill"], dir.path()).status.code(), Some(1));
    assert_eq!(cloudfill(&["synth", "cube", "-o", "x.xyz"], dir.path()).status.code(), Some(1));
    assert_eq!(cloudfill(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn calibrate_prints_the_voxel_edge() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("pts.xyz"), "0 0 0\n1 0 0\n0 1 0\n1 1 1\n").unwrap();
    let e = number(&cloudfill(&["calibrate", "pts.xyz"], dir.path()));
    assert!(e > 0.0 && e <= 1.0);
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("plan.json"),
        r#"{"cloud":{"synthetic":{"shape":"duplicated_patch","side":30,"seed":1}},"holes":1,"variants":["base"],"timing":false}"#,
    )
    .unwrap();
    stdout(&cloudfill(&["bench", "plan.json", "-o", "out.csv"], dir.path()));
    let csv = std::fs::read_to_string(dir.path().join("out.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("cloud,variant,hole_id,nshd"));
}
