use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hod::data::SynthSplits;
use hod::{evaluate, Checkpoint};
use tempfile::TempDir;

const SMALL: &str = "\
# tiny run
iterations=60
warmup_iters=10
batch_size=24
embedding_dim=8
start_iteration=20
n_classes=3
dim=8
samples_per_class=40
ood_count=40
";

fn hod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hod"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: TempDir,
    config: PathBuf,
    data: PathBuf,
    ckpt: PathBuf,
}

fn trained() -> Fixture {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("small.conf");
    std::fs::write(&config, SMALL).unwrap();
    let data = dir.path().join("data");
    let ckpt = dir.path().join("model.hodp");
    stdout(&hod(&[
        "gen-data",
        "--config",
        s(&config),
        "--out",
        s(&data),
    ]));
    stdout(&hod(&[
        "train",
        "--config",
        s(&config),
        "--data",
        s(&data),
        "--out",
        s(&ckpt),
    ]));
    Fixture {
        _dir: dir,
        config,
        data,
        ckpt,
    }
}

#[test]
fn pipeline_matches_the_library() {
    let f = trained();
    let hist = std::fs::read_to_string(format!("{}.history.tsv", s(&f.ckpt))).unwrap();
    assert_eq!(hist.lines().count(), 61);
    assert!(hist.starts_with("iter\tloss"));

    let ck = Checkpoint::load(&f.ckpt).unwrap();
    let splits = SynthSplits::read_dir(&f.data).unwrap();
    let expected = evaluate(&ck, &splits, None).unwrap();
    let line = stdout(&hod(&["eval", "--ckpt", s(&f.ckpt), "--data", s(&f.data)]));
    assert_eq!(line, format!("{}\n", expected.summary_line()));
    let kv = stdout(&hod(&[
        "eval",
        "--ckpt",
        s(&f.ckpt),
        "--data",
        s(&f.data),
        "--machine",
    ]));
    assert_eq!(kv, expected.key_values());

    let table = stdout(&hod(&[
        "sweep-k",
        "--ckpt",
        s(&f.ckpt),
        "--data",
        s(&f.data),
        "--k-grid",
        "1,5,10",
    ]));
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "k\tauroc");
    assert_eq!(rows.len(), 4);
    assert!(rows[3].starts_with("10\t"));
}

#[test]
fn score_and_synth_output_formats() {
    let f = trained();
    let bank = f.data.join("train_id.hodf");
    let queries = f.data.join("test_ood.hodf");
    let n_queries = SynthSplits::read_dir(&f.data).unwrap().test_ood.len();
    for method in ["knn", "ebo", "softmax", "origin"] {
        let out = stdout(&hod(&[
            "score",
            "--ckpt",
            s(&f.ckpt),
            "--bank",
            s(&bank),
            "--queries",
            s(&queries),
            "--method",
            method,
            "--k",
            "3",
        ]));
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), n_queries, "{method}");
        for (i, l) in lines.iter().enumerate() {
            let (id, score) = l.split_once('\t').unwrap();
            assert_eq!(id.parse::<usize>().unwrap(), i);
            assert!(score.parse::<f64>().unwrap().is_finite());
        }
    }

    let args = [
        "synth",
        "--config",
        s(&f.config),
        "--ckpt",
        s(&f.ckpt),
        "--data",
        s(&f.data),
    ];
    let out = stdout(&hod(&args));
    assert!(!out.is_empty());
    assert_eq!(out, stdout(&hod(&args)));
    let mut args = args.to_vec();
    args.extend(["--set", "sigma=0.5"]);
    for l in stdout(&hod(&args)).lines() {
        let parts: Vec<&str> = l.split('\t').collect();
        assert_eq!(parts.len(), 3);
        parts[0].parse::<usize>().unwrap();
        let norm: f64 = parts[1].parse().unwrap();
        let coords: Vec<f64> = parts[2].split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(coords.len(), 8);
        let n = coords.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - norm).abs() < 1e-12);
    }
}

#[test]
fn set_overrides_the_config_file() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("c.conf");
    std::fs::write(&config, SMALL).unwrap();
    let data = dir.path().join("d");
    stdout(&hod(&[
        "gen-data",
        "--config",
        s(&config),
        "--out",
        s(&data),
        "--set",
        "n_classes=2",
    ]));
    let splits = SynthSplits::read_dir(&data).unwrap();
    assert_eq!(splits.train_id.num_classes(), 2);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x");
    let code = |args: &[&str]| hod(args).status.code();

    assert_eq!(
        code(&["gen-data", "--out", s(&out), "--set", "bogus=1"]),
        Some(2)
    );
    assert_eq!(
        code(&["gen-data", "--out", s(&out), "--set", "sigma=-1"]),
        Some(2)
    );
    assert_eq!(
        code(&["gen-data", "--out", s(&out), "--set", "iterations=many"]),
        Some(2)
    );
    assert_eq!(code(&["frobnicate"]), Some(2));

    let missing = dir.path().join("nope");
    assert_eq!(
        code(&["eval", "--ckpt", s(&missing), "--data", s(&missing)]),
        Some(3)
    );
    let junk = dir.path().join("junk.hodp");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    assert_eq!(
        code(&["eval", "--ckpt", s(&junk), "--data", s(&missing)]),
        Some(3)
    );

    let f = trained();
    let mut bytes = std::fs::read(&f.ckpt).unwrap();
    let n = bytes.len();
    bytes[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
    let bad = dir.path().join("nan.hodp");
    std::fs::write(&bad, bytes).unwrap();
    assert_eq!(
        code(&["eval", "--ckpt", s(&bad), "--data", s(&f.data)]),
        Some(4)
    );
}
