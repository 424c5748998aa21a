use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use lasso_core::network::{Checkpoint, CheckpointMetadata, Network, NetworkConfig};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lasso"));
    for var in [
        "LASSO_CORPUS",
        "LASSO_MODEL",
        "LASSO_PORT",
        "LASSO_THREADS",
        "LASSO_HOST",
    ] {
        c.env_remove(var);
    }
    c
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn lasso")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

/// Replace the latency column, the only nondeterministic field.
fn mask_latency(tsv: &str) -> String {
    tsv.lines()
        .enumerate()
        .map(|(i, line)| {
            let mut cols: Vec<&str> = line.split('\t').collect();
            if i > 0 {
                cols[5] = "*";
            }
            cols.join("\t")
        })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

#[test]
fn unknown_verb_exits_2() {
    let out = run(bin().arg("frobnicate"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failures_print_json_error_and_exit_1() {
    let out = run(bin().args(["eval", "--method", "cylinder", "--corpus", "/definitely/missing"]));
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).lines().last().unwrap()).unwrap();
    assert_eq!(err["error"], "IoError");
    assert!(err["message"].as_str().unwrap().contains("manifest.json"));
}

#[test]
fn eval_report_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["eval", "--method", "cylinder", "--split", "all", "--out"])
        .arg(dir.path())
        .env("LASSO_CORPUS", fixtures().join("corpus")));
    let summary = stdout_json(&out);
    assert_eq!(summary["records"], 8);
    assert_eq!(summary["failures"], 0);
    let got = std::fs::read_to_string(dir.path().join("records.tsv")).unwrap();
    let golden = std::fs::read_to_string(fixtures().join("eval_cylinder_records.tsv")).unwrap();
    assert_eq!(mask_latency(&got), golden);
    for f in ["summary.json", "plot.tsv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn lassonet_eval_requires_model() {
    let out = run(bin().args(["eval", "--corpus"]).arg(fixtures().join("corpus")));
    assert_eq!(out.status.code(), Some(1));
}

fn write_small_train_config(path: &Path) {
    let text = r#"
[network]
group_size = 4
levels = 1
abstraction_widths = [[8]]
propagation_widths = [[8]]
classifier_widths = [4, 2]
dropout_keep = 0.7
input_dim = 4

[train]
epochs = 2
batch_size = 4
"#;
    std::fs::write(path, text).unwrap();
}

#[test]
fn generate_train_eval_select_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let run_dir = dir.path().join("run");
    let cfg = dir.path().join("train.toml");
    write_small_train_config(&cfg);

    let gen = stdout_json(&run(bin()
        .args(["generate", "--count", "2", "--seed", "5", "--out"])
        .arg(&corpus)
        .arg("--spec")
        .arg(fixtures().join("small_spec.toml"))));
    assert_eq!(gen["clouds"], 2);

    let cleaned = stdout_json(&run(bin().arg("clean").arg("--records").arg(&corpus)));
    assert_eq!(cleaned["dropped"], 0);

    let trained = stdout_json(&run(bin()
        .args(["train", "--corpus"])
        .arg(&corpus)
        .arg("--out")
        .arg(&run_dir)
        .arg("--config")
        .arg(&cfg)));
    assert_eq!(trained["epochs"], 2);
    let metrics = std::fs::read_to_string(run_dir.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 2);

    let model = run_dir.join("final.json");
    let evaluated = stdout_json(&run(bin()
        .args(["eval", "--split", "all", "--corpus"])
        .arg(&corpus)
        .env("LASSO_MODEL", &model)));
    assert_eq!(evaluated["method"], "lassonet");
    assert_eq!(evaluated["failures"], 0);

    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(corpus.join("manifest.json")).unwrap()).unwrap();
    let rec = &manifest["records"][0];
    let cloud_id = rec["cloud_id"].as_str().unwrap();
    let selected = stdout_json(&run(bin()
        .args(["select", "--method", "lassonet", "--cloud"])
        .arg(corpus.join(format!("clouds/{cloud_id}.txt")))
        .arg("--record")
        .arg(corpus.join(rec["file"].as_str().unwrap()))
        .arg("--model")
        .arg(&model)));
    let dj = selected["dJ"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&dj));
}

#[test]
fn serve_with_model_answers_within_a_second() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("model.json");
    let config = NetworkConfig {
        group_size: 4,
        levels: 1,
        abstraction_widths: vec![vec![8]],
        propagation_widths: vec![vec![8]],
        classifier_widths: vec![4, 2],
        dropout_keep: 0.7,
        input_dim: 4,
    };
    let net = Network::<f32>::new(config, 1).unwrap();
    Checkpoint::from_network(&net, CheckpointMetadata::default())
        .save(&ckpt)
        .unwrap();

    let start = Instant::now();
    let mut child = bin()
        .args(["serve", "--port", "0", "--threads", "1", "--corpus"])
        .arg(fixtures().join("corpus"))
        .arg("--model")
        .arg(&ckpt)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let banner: Value = serde_json::from_str(&line).unwrap();
    let addr = banner["listening"].as_str().unwrap().to_string();

    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(
        stream,
        "GET /clouds HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut resp = String::new();
    stream.read_to_string(&mut resp).unwrap();
    let elapsed = start.elapsed();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(elapsed < Duration::from_secs(1), "{elapsed:?}");

    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    let body = resp.split("\r\n\r\n").nth(1).unwrap();
    let clouds: Vec<Value> = serde_json::from_str(body).unwrap();
    assert_eq!(clouds.len(), 4);
}
