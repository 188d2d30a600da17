use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

const SECRET: &str = "sk-cli-test-7f3a9c";

fn trust(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trust"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = trust(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn trained(dir: &Path) {
    ok(
        dir,
        &[
            "synth",
            "--family",
            "max",
            "--n",
            "500",
            "--noise-sd",
            "1",
            "--seed",
            "123",
            "--out",
            "max.csv",
        ],
    );
    ok(dir, &["train", "--data", "max.csv", "--target", "y", "--out", "m.json"]);
}

#[test]
fn synth_train_predict_pipeline() {
    let tmp = TempDir::new().unwrap();
    trained(tmp.path());
    let out = ok(tmp.path(), &["predict", "--model", "m.json", "--data", "max.csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("prediction"));
    let values: Vec<f64> = lines.map(|l| l.parse().unwrap()).collect();
    assert_eq!(values.len(), 500);
    assert!(values.iter().all(|v| v.is_finite()));
}

#[test]
fn predict_with_ood_columns() {
    let tmp = TempDir::new().unwrap();
    trained(tmp.path());
    std::fs::write(tmp.path().join("far.csv"), "x1,x2,x3,x4\n0,0,0,0\n40,0,0,0\n").unwrap();
    ok(
        tmp.path(),
        &[
            "predict",
            "--model",
            "m.json",
            "--data",
            "far.csv",
            "--check-ood",
            "--out",
            "p.csv",
        ],
    );
    let csv = std::fs::read_to_string(tmp.path().join("p.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "prediction,ood_distance,ood_flag,breaches");
    assert!(rows[1].ends_with(",false,"), "{}", rows[1]);
    assert!(rows[2].contains(",true,x1:above:"), "{}", rows[2]);
}

#[test]
fn missing_required_flag_is_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = trust(tmp.path(), &["train", "--target", "y", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--data") && err.contains("Usage"), "{err}");

    let out = trust(tmp.path(), &["train", "--data", "a.csv", "--out", "m.json", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unreadable_file_is_runtime_error_with_path() {
    let tmp = TempDir::new().unwrap();
    let out = trust(tmp.path(), &["train", "--data", "nowhere.csv", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.csv"));

    std::fs::write(tmp.path().join("bad.json"), "{not a model").unwrap();
    let out = trust(tmp.path(), &["tree", "--model", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_lists_flags_for_every_subcommand() {
    let tmp = TempDir::new().unwrap();
    let cases: [(&str, &[&str]); 9] = [
        (
            "train",
            &["--data", "--target", "--out", "--max-leaves", "--seed", "--cv-folds"],
        ),
        ("predict", &["--model", "--data", "--out", "--check-ood"]),
        ("explain", &["--model", "--data", "--row", "--report", "--svg"]),
        ("importance", &["--model", "--data", "--replications", "--out", "--svg"]),
        ("ale", &["--model", "--data", "--feature", "--bins"]),
        ("tree", &["--model", "--format"]),
        ("synth", &["--family", "--n", "--noise-sd", "--seed", "--out"]),
        ("bench", &["--spec"]),
        (
            "chat",
            &["--model", "--data", "--row", "--persona", "--dry-run", "--endpoint"],
        ),
    ];
    for (cmd, flags) in cases {
        let out = trust(tmp.path(), &[cmd, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{cmd}");
        let text = String::from_utf8_lossy(&out.stdout);
        for f in flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
    assert_eq!(trust(tmp.path(), &["--help"]).status.code(), Some(0));
}

fn pipeline(dir: &Path) -> Vec<Vec<u8>> {
    ok(
        dir,
        &[
            "synth",
            "--family",
            "friedman",
            "--n",
            "200",
            "--noise-sd",
            "1",
            "--seed",
            "123",
            "--out",
            "d.csv",
        ],
    );
    ok(
        dir,
        &[
            "train", "--data", "d.csv", "--target", "y", "--out", "m.json", "--seed", "123",
        ],
    );
    ok(
        dir,
        &[
            "predict",
            "--model",
            "m.json",
            "--data",
            "d.csv",
            "--out",
            "p.csv",
            "--check-ood",
        ],
    );
    ok(
        dir,
        &[
            "importance",
            "--model",
            "m.json",
            "--data",
            "d.csv",
            "--replications",
            "5",
            "--seed",
            "123",
            "--out",
            "i.csv",
        ],
    );
    ["d.csv", "m.json", "p.csv", "i.csv"]
        .iter()
        .map(|f| std::fs::read(dir.join(f)).unwrap())
        .collect()
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert_eq!(pipeline(a.path()), pipeline(b.path()));
}

#[test]
fn explain_tree_and_ale_outputs() {
    let tmp = TempDir::new().unwrap();
    trained(tmp.path());
    let out = ok(
        tmp.path(),
        &[
            "explain", "--model", "m.json", "--data", "max.csv", "--row", "3", "--svg", "path.svg",
        ],
    );
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.contains("row 3"), "{report}");
    assert!(std::fs::read_to_string(tmp.path().join("path.svg"))
        .unwrap()
        .starts_with("<svg"));

    let text = String::from_utf8(ok(tmp.path(), &["tree", "--model", "m.json"]).stdout).unwrap();
    assert!(text.starts_with("root"));
    let svg = String::from_utf8(ok(tmp.path(), &["tree", "--model", "m.json", "--format", "svg"]).stdout).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(
        trust(tmp.path(), &["tree", "--model", "m.json", "--format", "png"])
            .status
            .code(),
        Some(2)
    );

    let ale = String::from_utf8(
        ok(
            tmp.path(),
            &[
                "ale",
                "--model",
                "m.json",
                "--data",
                "max.csv",
                "--feature",
                "x1",
                "--bins",
                "10",
            ],
        )
        .stdout,
    )
    .unwrap();
    assert_eq!(ale.lines().next(), Some("edge,effect"));
    assert!(ale.lines().count() >= 3);
    assert_eq!(
        trust(
            tmp.path(),
            &["ale", "--model", "m.json", "--data", "max.csv", "--feature", "zz"]
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn bench_prints_table() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(
        tmp.path().join("spec.json"),
        r#"{"datasets":[{"name":"max","synthetic":{"family":"max","n":120,"noise_sd":1}}],
            "models":["trust","cart"],"seeds":[1],"folds":3}"#,
    )
    .unwrap();
    let out = ok(tmp.path(), &["bench", "--spec", "spec.json", "--out", "r.csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.contains("TRUST") && text.contains("CART") && text.contains("mean rank"),
        "{text}"
    );
    let csv = std::fs::read_to_string(tmp.path().join("r.csv")).unwrap();
    assert!(csv.starts_with("dataset,TRUST_mean_uv"));
}

fn chat(dir: &Path, args: &[&str], stdin: &str, log: bool) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_trust"));
    cmd.current_dir(dir)
        .args(args)
        .env("TRUST_LLM_API_KEY", SECRET)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    if log {
        cmd.env("RUST_LOG", "trace");
    }
    let mut child = cmd.spawn().unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

#[test]
fn chat_dry_run_keeps_key_out_of_everything() {
    let tmp = TempDir::new().unwrap();
    trained(tmp.path());
    let out = chat(
        tmp.path(),
        &[
            "chat",
            "--model",
            "m.json",
            "--data",
            "max.csv",
            "--row",
            "0",
            "--dry-run",
            "--persona",
            "financial advisor",
            "--transcript",
            "t.txt",
        ],
        "How could the prediction go up?\n\n",
        true,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("financial advisor is the role"));
    assert!(stdout.contains("must keep the instance in the same leaf"));
    let transcript = std::fs::read_to_string(tmp.path().join("t.txt")).unwrap();
    assert_eq!(transcript.matches("] system:").count(), 1);
    assert_eq!(transcript.matches("] user:").count(), 1);
    assert_eq!(transcript.matches("] assistant:").count(), 1);
    for text in [
        stdout.as_ref(),
        String::from_utf8_lossy(&out.stderr).as_ref(),
        transcript.as_str(),
    ] {
        assert!(!text.contains(SECRET));
    }
}

#[test]
fn chat_network_failure_saves_transcript_without_key() {
    let tmp = TempDir::new().unwrap();
    trained(tmp.path());
    let out = chat(
        tmp.path(),
        &[
            "chat",
            "--model",
            "m.json",
            "--data",
            "max.csv",
            "--row",
            "1",
            "--endpoint",
            "http://127.0.0.1:9/v1/chat/completions",
            "--transcript",
            "t.txt",
        ],
        "hello\n",
        true,
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("giving up"), "{stderr}");
    let transcript = std::fs::read_to_string(tmp.path().join("t.txt")).unwrap();
    assert!(transcript.contains("hello"));
    for text in [
        stderr.as_ref(),
        String::from_utf8_lossy(&out.stdout).as_ref(),
        transcript.as_str(),
    ] {
        assert!(!text.contains(SECRET));
    }
}
