use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contact-gpis"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_artifacts_and_render_redraws_them() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = cli(&[
        "run",
        "--scene",
        "peg_t",
        "--seed",
        "2",
        "--svg",
        "--out",
        out.to_str().unwrap(),
    ]);
    let code = o.status.code().unwrap();
    assert!(
        code == 0 || code == 1,
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(stdout(&o).starts_with("peg_t seed 2:"));
    for f in ["steps.jsonl", "grid.txt", "report.json", "scene.svg"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let svg = dir.path().join("again.svg");
    let o = cli(&[
        "render",
        "--report",
        out.join("report.json").to_str().unwrap(),
        "--svg",
        svg.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(
        std::fs::read(&svg).unwrap(),
        std::fs::read(out.join("scene.svg")).unwrap()
    );
}

#[test]
fn batch_prints_one_line_per_seed_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&[
        "batch",
        "--scene",
        "peg_i",
        "--seeds",
        "0..3",
        "--set",
        "max_steps=40",
        "--threads",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4, "{text}");
    assert!(lines[3].starts_with("peg_i: "));
    assert!(Path::new(&dir.path().join("summary.json")).is_file());
    assert!(dir.path().join("seed_1").join("steps.jsonl").is_file());
    assert!(matches!(o.status.code(), Some(0 | 1)));
}

#[test]
fn scene_and_config_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("open.scene");
    std::fs::write(
        &scene,
        "scene open\nfamily peg\nworkspace -0.3 -0.3 0.3 0.3\ngoal 0.1 0 0.02\nstart 0 0\n",
    )
    .unwrap();
    let cfg = dir.path().join("fast.cfg");
    std::fs::write(&cfg, "K = 200\nT = 10\n").unwrap();
    let o = cli(&[
        "run",
        "--scene-file",
        scene.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("open seed 0: success"));
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        vec!["run", "--scene", "peg_x"],
        vec!["run", "--set", "bogus=1"],
        vec!["run", "--ablate", "gravity"],
        vec!["batch", "--seeds", "5..5"],
        vec![
            "render",
            "--report",
            "/nonexistent/report.json",
            "--svg",
            "/tmp/x.svg",
        ],
    ] {
        let o = cli(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    }
}
