//! Command-line behaviour: outputs, exit codes, pose handling.

use std::path::Path;
use std::process::{Command, Output};
use std::sync::OnceLock;

fn viewsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_viewsynth"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = viewsynth(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Small collection with vocabulary, table and renders, built once.
fn collection() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    let dir = DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let col = dir.path().join("col").display().to_string();
        ok(&[
            "gen-synthetic",
            "--n",
            "12",
            "--views",
            "8",
            "--seed",
            "7",
            "--renders",
            "--out",
            &col,
        ]);
        ok(&[
            "build-vocab",
            "--collection",
            &col,
            "--words",
            "16",
            "--sample-cap",
            "2000",
        ]);
        ok(&["build-suitability", "--collection", &col]);
        dir
    });
    dir.path()
}

fn col() -> String {
    collection().join("col").display().to_string()
}

fn render(n: usize, v: usize) -> String {
    format!("{}/renders/shape-{n:04}_v{v:02}.pgm", col())
}

#[test]
fn vad_of_identical_descriptors_is_zero() {
    let out = tempfile::tempdir().unwrap();
    let q = out.path().join("q.mvft").display().to_string();
    ok(&[
        "synthesize",
        "--collection",
        &col(),
        "--image",
        &render(3, 2),
        "--k",
        "4",
        "--out",
        &q,
    ]);
    let d: f64 = ok(&["vad", "--a", &q, "--b", &q]).trim().parse().unwrap();
    assert_eq!(d, 0.0);
}

#[test]
fn auto_pose_recovers_view_of_collection_render() {
    let out = tempfile::tempdir().unwrap();
    for (n, v) in [(0, 0), (5, 3), (11, 6)] {
        let q = out.path().join(format!("q{n}.mvft")).display().to_string();
        let text = ok(&[
            "synthesize",
            "--collection",
            &col(),
            "--image",
            &render(n, v),
            "--k",
            "4",
            "--out",
            &q,
        ]);
        assert!(text.contains(&format!("observed view {v}")), "{text}");
    }
}

#[test]
fn fixed_pose_is_respected() {
    let out = tempfile::tempdir().unwrap();
    let q = out.path().join("q.mvft").display().to_string();
    let text = ok(&[
        "synthesize",
        "--collection",
        &col(),
        "--image",
        &render(1, 1),
        "--pose",
        "4",
        "--out",
        &q,
    ]);
    assert!(text.contains("observed view 4"), "{text}");
}

#[test]
fn bad_arguments_exit_with_code_2() {
    let out = tempfile::tempdir().unwrap();
    let q = out.path().join("q.mvft").display().to_string();
    let r = viewsynth(&[
        "synthesize",
        "--collection",
        &col(),
        "--image",
        &render(1, 1),
        "--pose",
        "99",
        "--out",
        &q,
    ]);
    assert_eq!(r.status.code(), Some(2));
    let r = viewsynth(&[
        "synthesize",
        "--collection",
        &col(),
        "--image",
        &render(1, 1),
        "--tau",
        "1.5",
        "--out",
        &q,
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert_eq!(viewsynth(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn malformed_files_exit_with_code_3() {
    let out = tempfile::tempdir().unwrap();
    let junk = out.path().join("junk.mvft");
    std::fs::write(&junk, b"not a descriptor").unwrap();
    let junk = junk.display().to_string();
    assert_eq!(
        viewsynth(&["vad", "--a", &junk, "--b", &junk])
            .status
            .code(),
        Some(3)
    );
    let img = out.path().join("bad.pgm");
    std::fs::write(&img, b"P5\n4 4\n255\nxx").unwrap();
    let q = out.path().join("q.mvft").display().to_string();
    let r = viewsynth(&[
        "synthesize",
        "--collection",
        &col(),
        "--image",
        img.to_str().unwrap(),
        "--out",
        &q,
    ]);
    assert_eq!(r.status.code(), Some(3));
}

#[test]
fn missing_input_fails() {
    let r = viewsynth(&[
        "vad",
        "--a",
        "/nonexistent/a.mvft",
        "--b",
        "/nonexistent/b.mvft",
    ]);
    assert!(!r.status.success());
}

#[test]
fn transferability_writes_square_matrix() {
    let out = tempfile::tempdir().unwrap();
    let csv = out.path().join("t.csv");
    ok(&[
        "transferability",
        "--collection",
        &col(),
        "--k",
        "4",
        "--out",
        csv.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 8);
    for line in &lines {
        let ranks: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(ranks.len(), 8);
        assert!(ranks.iter().all(|&r| (1.0..=12.0).contains(&r)));
    }
}
