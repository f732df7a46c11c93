use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oratorio"))
        .args(args)
        .current_dir(dir)
        .env_remove("ORATORIO_SEED")
        .output()
        .expect("spawn oratorio")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn fx(name: &str) -> String {
    fixture(name).to_string_lossy().into_owned()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["frobnicate"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert!(out.stdout.is_empty());
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&run_in(dir.path(), &["segment", "--out", "p.json"])),
        1
    );
    assert_eq!(code(&run_in(dir.path(), &["script", "--mode", "5"])), 1);
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in [
        "normalize",
        "discover",
        "segment",
        "train",
        "predict",
        "script",
        "simulate",
        "attend",
        "anova",
    ] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
}

#[test]
fn segment_writes_phrases_matching_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["segment", "--audio", &fx("speech.wav"), "--out", "p.json"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let got = fs::read_to_string(dir.path().join("p.json")).unwrap();
    assert_eq!(
        got,
        fs::read_to_string(fixture("golden/phrases.json")).unwrap()
    );
}

#[test]
fn anova_output_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["anova", "--scores", &fx("scores.csv")]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        fs::read_to_string(fixture("golden/anova.txt")).unwrap()
    );
}

#[test]
fn data_errors_exit_two_and_leave_no_output() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), "{\"frames\": [").unwrap();
    fs::write(dir.path().join("text.wav"), "not audio").unwrap();
    let cases: [&[&str]; 4] = [
        &["normalize", "--keypoints", "bad.json", "--out", "out.json"],
        &[
            "normalize",
            "--keypoints",
            &fx("keypoints.json"),
            "--reference",
            "999999",
            "--out",
            "out.json",
        ],
        &["segment", "--audio", "text.wav", "--out", "out.json"],
        &["train", "--corpus", "missing.json", "--out", "out.json"],
    ];
    for args in cases {
        let out = run_in(dir.path(), args);
        assert_eq!(code(&out), 2, "{args:?}");
        assert!(!out.stderr.is_empty());
        assert!(
            !dir.path().join("out.json").exists(),
            "{args:?} left a partial file"
        );
    }
    let names: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(names.len(), 2, "stray files: {names:?}");
}

#[test]
fn failed_rerun_keeps_the_previous_output() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&run_in(
            dir.path(),
            &["segment", "--audio", &fx("speech.wav"), "--out", "p.json"]
        )),
        0
    );
    let before = fs::read(dir.path().join("p.json")).unwrap();
    fs::write(dir.path().join("cfg.json"), r#"{"hop_seconds": -1}"#).unwrap();
    let out = run_in(
        dir.path(),
        &[
            "segment",
            "--audio",
            &fx("speech.wav"),
            "--config",
            "cfg.json",
            "--out",
            "p.json",
        ],
    );
    assert_eq!(code(&out), 2);
    assert_eq!(fs::read(dir.path().join("p.json")).unwrap(), before);
}

#[test]
fn predict_prints_one_gesture() {
    let dir = tempfile::tempdir().unwrap();
    let train = run_in(
        dir.path(),
        &[
            "train",
            "--corpus",
            &fx("corpus.json"),
            "--trees",
            "50",
            "--seed",
            "2",
            "--out",
            "m.json",
        ],
    );
    assert_eq!(code(&train), 0);
    let out = run_in(
        dir.path(),
        &["predict", "--model", "m.json", "--text", "hello"],
    );
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1);
    let out = run_in(
        dir.path(),
        &["predict", "--model", "m.json", "--text", "l2w0 l2w5 l2w7"],
    );
    assert_eq!(
        String::from_utf8(out.stdout).unwrap().trim(),
        "RA Waits-T + LA front-T"
    );
}

#[test]
fn seed_environment_variable_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("pipe.json"),
        r#"{"forest": {"trees": 40, "seed": 3}}"#,
    )
    .unwrap();
    let train = |out: &str, env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_oratorio"));
        cmd.args([
            "--pipeline",
            "pipe.json",
            "train",
            "--corpus",
            &fx("corpus.json"),
            "--out",
            out,
        ])
        .current_dir(dir.path())
        .env_remove("ORATORIO_SEED");
        if let Some(seed) = env {
            cmd.env("ORATORIO_SEED", seed);
        }
        assert!(cmd.status().unwrap().success());
        serde_json::from_slice::<serde_json::Value>(&fs::read(dir.path().join(out)).unwrap())
            .unwrap()
    };
    let from_config = train("a.json", None);
    let from_env = train("b.json", Some("91"));
    assert_eq!(from_config["seed"], 3);
    assert_eq!(from_config["trees"].as_array().unwrap().len(), 40);
    assert_eq!(from_env["seed"], 91);

    let mut bad = Command::new(env!("CARGO_BIN_EXE_oratorio"));
    bad.args(["train", "--corpus", &fx("corpus.json"), "--out", "c.json"])
        .current_dir(dir.path())
        .env("ORATORIO_SEED", "soon");
    assert_eq!(bad.output().unwrap().status.code(), Some(2));
}

#[test]
fn unknown_pipeline_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("pipe.json"),
        r#"{"kmeans": {"k": 4, "seeds": 1}}"#,
    )
    .unwrap();
    let out = run_in(
        dir.path(),
        &[
            "--pipeline",
            "pipe.json",
            "anova",
            "--scores",
            &fx("scores.csv"),
        ],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("seeds"));
}

#[test]
fn mode_one_script_needs_no_model() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(
        code(&run_in(
            p,
            &[
                "normalize",
                "--keypoints",
                &fx("keypoints.json"),
                "--out",
                "n.json"
            ]
        )),
        0
    );
    assert_eq!(
        code(&run_in(
            p,
            &[
                "discover",
                "--keypoints",
                "n.json",
                "--seed",
                "4",
                "--out",
                "lib.json"
            ]
        )),
        0
    );
    assert_eq!(
        code(&run_in(
            p,
            &["segment", "--audio", &fx("speech.wav"), "--out", "p.json"]
        )),
        0
    );
    let base = [
        "script",
        "--phrases",
        "p.json",
        "--transcript",
        &fx("transcript.json"),
        "--library",
        "lib.json",
        "--out",
        "s.json",
    ];
    let plain = run_in(p, &[&base[..], &["--mode", "1"]].concat());
    assert_eq!(
        code(&plain),
        0,
        "{}",
        String::from_utf8_lossy(&plain.stderr)
    );
    let script: serde_json::Value =
        serde_json::from_slice(&fs::read(p.join("s.json")).unwrap()).unwrap();
    assert!(script["events"]
        .as_array()
        .unwrap()
        .iter()
        .all(|e| e["gesture"].is_null()));

    let needs_model = run_in(p, &[&base[..], &["--mode", "3"]].concat());
    assert_eq!(code(&needs_model), 2);
}

#[test]
fn discover_respects_custom_names() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("names.json"), r#"["one", "two", "three"]"#).unwrap();
    assert_eq!(
        code(&run_in(
            p,
            &[
                "normalize",
                "--keypoints",
                &fx("keypoints.json"),
                "--out",
                "n.json"
            ]
        )),
        0
    );
    let ok = run_in(
        p,
        &[
            "discover",
            "--keypoints",
            "n.json",
            "--k",
            "4",
            "--names",
            "names.json",
            "--out",
            "lib.json",
        ],
    );
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let lib: serde_json::Value =
        serde_json::from_slice(&fs::read(p.join("lib.json")).unwrap()).unwrap();
    let names: Vec<&str> = lib["templates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["one", "two", "three"]);
    // Three names cannot label the nine gestures of k = 10.
    let bad = run_in(
        p,
        &[
            "discover",
            "--keypoints",
            "n.json",
            "--names",
            "names.json",
            "--out",
            "lib2.json",
        ],
    );
    assert_eq!(code(&bad), 2);
    assert!(!p.join("lib2.json").exists());
}

#[test]
fn attend_reports_ratios_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["attend", "--gaze", &fx("gaze.csv"), "--out", "a.json"],
    );
    assert_eq!(code(&out), 0);
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("a.json")).unwrap()).unwrap();
    let ratios = report["ratios"].as_array().unwrap();
    let trace = report["trace"].as_array().unwrap();
    assert_eq!(ratios.len(), trace.len());
    let peak = trace
        .iter()
        .map(|s| s["pitch_scale"].as_f64().unwrap())
        .fold(0.0, f64::max);
    assert!(peak > 1.0 && peak <= 1.5, "{peak}");
}
