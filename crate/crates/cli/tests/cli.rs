use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn sensorfix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sensorfix"))
        .args(args)
        .env("SENSORFIX_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = sensorfix(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// The machine-readable error line of a failing invocation.
fn fails(args: &[&str]) -> String {
    let out = sensorfix(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let stderr = String::from_utf8(out.stderr).unwrap();
    stderr
        .lines()
        .find(|l| l.starts_with("error: kind="))
        .unwrap_or_else(|| panic!("no error line in {stderr:?}"))
        .to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const SHORT_RUN: [&str; 4] = ["--set", "runs.n=3", "--set", "synth.n_test=300"];

#[test]
fn gen_synth_is_deterministic_and_recorded() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    ok(&["gen-synth", "--out", s(&a), "--seed", "5"]);
    ok(&["gen-synth", "--out", s(&b), "--seed", "5"]);
    ok(&["gen-synth", "--out", s(&c), "--seed", "6"]);
    for f in ["train.csv", "test.csv", "meta.toml"] {
        assert!(a.join(f).exists());
    }
    let (ma, mb, mc) = (manifest(&a), manifest(&b), manifest(&c));
    assert_eq!(ma["artifacts"], mb["artifacts"]);
    assert_ne!(ma["artifacts"], mc["artifacts"]);
    assert_eq!(ma["command"], "gen-synth");
    assert_eq!(ma["base_seed"], 5);
}

#[test]
fn seed_flag_overrides_set() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("r");
    let mut args = vec!["run", "--out", s(&out), "--set", "runs.seed=1", "--seed", "40"];
    args.extend(SHORT_RUN);
    ok(&args);
    let m = manifest(&out);
    assert_eq!(m["base_seed"], 40);
    assert_eq!(m["run_seeds"], serde_json::json!([40, 41, 42]));
    assert!(fs::read_to_string(out.join("config.toml")).unwrap().contains("seed = 40"));
}

#[test]
fn run_writes_artifacts_and_replays() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sr");
    let mut args = vec![
        "run",
        "--out",
        s(&out),
        "--set",
        "mode=sr",
        "--set",
        "faults=[{start=100, duration=\"permanent\", sensor=\"random\", type=\"zero\", action=\"replace\"}]",
        "--workers",
        "1",
    ];
    args.extend(SHORT_RUN);
    let stdout = ok(&args);
    assert!(stdout.contains("sr lda zero"), "{stdout}");
    for f in ["runs.csv", "summary.csv", "selection.csv", "config.toml", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(names.iter().any(|n| n.starts_with("timeline_run0000_seed0_")));
    assert_eq!(names.iter().filter(|n| n.starts_with("episodes_")).count(), 3);

    let replay = ok(&["replay", s(&out), "--run", "2"]);
    assert!(replay.contains("run 2 (seed 2) reproduced"), "{replay}");
    let via_manifest = ok(&["replay", s(&out.join("manifest.json")), "--run", "1"]);
    assert!(via_manifest.contains("reproduced"));

    let runs = out.join("runs.csv");
    let mut text = fs::read_to_string(&runs).unwrap();
    text.push('\n');
    fs::write(&runs, text).unwrap();
    let err = fails(&["replay", s(&out), "--run", "2"]);
    assert!(err.starts_with("error: kind=ChecksumMismatch message=\""), "{err}");
}

#[test]
fn replay_detects_a_changed_digest() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("u");
    let mut args = vec!["run", "--out", s(&out)];
    args.extend(SHORT_RUN);
    ok(&args);

    // Rewrite a recorded digest and re-sign the file so only the replay
    // comparison can catch it.
    let runs = out.join("runs.csv");
    let text = fs::read_to_string(&runs).unwrap();
    let line = text.lines().nth(1).unwrap();
    let digest = line.rsplit(',').next().unwrap();
    let forged = text.replacen(digest, &"0".repeat(64), 1);
    fs::write(&runs, &forged).unwrap();
    let mut m = manifest(&out);
    use sha2::Digest as _;
    let sha = hex::encode(sha2::Sha256::digest(forged.as_bytes()));
    for a in m["artifacts"].as_array_mut().unwrap() {
        if a["path"] == "runs.csv" {
            a["sha256"] = serde_json::Value::String(sha.clone());
        }
    }
    fs::write(out.join("manifest.json"), serde_json::to_string(&m).unwrap()).unwrap();

    let err = fails(&["replay", s(&out), "--run", "0"]);
    assert!(err.starts_with("error: kind=ReplayMismatch"), "{err}");
    ok(&["replay", s(&out), "--run", "1"]);
}

#[test]
fn config_errors_are_machine_readable() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("x");
    let err = fails(&["run", "--out", s(&out), "--set", "runs.n=0"]);
    assert!(err.starts_with("error: kind=Config message=\""), "{err}");
    let err = fails(&["run", "--out", s(&out), "--set", "bogus.key=1"]);
    assert!(err.starts_with("error: kind=Config"), "{err}");
    let err = fails(&["run", "--out", s(&out), "--set", "no_equals_sign"]);
    assert!(err.starts_with("error: kind=Config"), "{err}");
    let err = fails(&["run"]);
    assert!(err.starts_with("error: kind=Usage"), "{err}");

    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "mode = \"sideways\"\n").unwrap();
    let err = fails(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert!(err.starts_with("error: kind=Config"), "{err}");
}

#[test]
fn config_file_then_set_then_flags() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("exp.toml");
    fs::write(
        &cfg,
        "mode = \"standard\"\n[classifier]\nkind = \"knn\"\n[runs]\nn = 2\nseed = 9\n[synth]\nn_test = 300\n",
    )
    .unwrap();
    let out = tmp.path().join("o");
    let stdout = ok(&["run", "--config", s(&cfg), "--out", s(&out), "--set", "runs.seed=3"]);
    assert!(stdout.starts_with("standard knn none"), "{stdout}");
    let m = manifest(&out);
    assert_eq!(m["base_seed"], 3);
    assert_eq!(m["inputs"][0]["path"], s(&cfg));
}

#[test]
fn report_tables_and_compares_paired_runs() {
    let tmp = TempDir::new().unwrap();
    let uos = tmp.path().join("uos");
    let sr = tmp.path().join("sr");
    let other = tmp.path().join("other_seed");
    let fault = "faults=[{start=100, duration=\"permanent\", type=\"zero\", action=\"replace\"}]";
    let mut base = vec!["run", "--set", fault];
    base.extend(SHORT_RUN);
    let with = |extra: &[&str]| {
        let mut a = base.clone();
        a.extend(extra);
        ok(&a);
    };
    with(&["--out", s(&uos)]);
    with(&["--out", s(&sr), "--set", "mode=sr"]);
    with(&["--out", s(&other), "--seed", "100"]);

    let rep = tmp.path().join("rep");
    let stdout = ok(&["report", "--out", s(&rep), s(&uos), s(&sr), s(&other)]);
    assert!(stdout.contains("uos vs sr: 3 pairs"), "{stdout}");
    let report = fs::read_to_string(rep.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 4);
    // different base seeds are never paired
    let comparisons = fs::read_to_string(rep.join("comparisons.csv")).unwrap();
    assert_eq!(comparisons.lines().count(), 2, "{comparisons}");

    let err = fails(&["report", "--out", s(&rep), s(&tmp.path().join("missing"))]);
    assert!(err.starts_with("error: kind=Io"), "{err}");
}

/// Two batch files in the public dataset's line format, written in reverse
/// batch order. Each gas class has its own response level and every unit a
/// small offset.
fn write_batches(dir: &Path, bad_line: bool) -> Vec<PathBuf> {
    let gases = [(4, 50.0), (2, 250.0), (6, 1.0), (1, 10.0)];
    let mut paths = Vec::new();
    for batch in [2usize, 1] {
        let mut text = String::new();
        for i in 0..80usize {
            let (gas, conc) = gases[i % gases.len()];
            let class = i % gases.len();
            text.push_str(&format!("{gas};{conc:.4}"));
            for f in 0..128usize {
                let unit = f / 8;
                let jitter = ((i * 31 + f * 17 + batch * 7) % 23) as f64 / 23.0;
                let v = 100.0 * (class + 1) as f64 * (1.0 + 0.05 * (f % 8) as f64) + unit as f64 + 5.0 * jitter;
                text.push_str(&format!(" {}:{v}", f + 1));
            }
            text.push('\n');
            if bad_line && i == 3 {
                text.push_str("4;50.0 1:1.0 129:2.0\n");
            }
        }
        let path = dir.join(format!("batch{batch}.dat"));
        fs::write(&path, text).unwrap();
        paths.push(path);
    }
    paths
}

#[test]
fn ingest_selects_subset_and_runs_with_unit_replacement() {
    let tmp = TempDir::new().unwrap();
    let files = write_batches(tmp.path(), false);
    let ds = tmp.path().join("ds");
    let mut args = vec!["ingest", "--out", s(&ds), "--set", "train=30", "--set", "test=60"];
    args.extend(files.iter().map(|p| s(p)));
    let stdout = ok(&args);
    assert!(stdout.starts_with("selected 90 of 160 records (0 skipped)"), "{stdout}");
    let meta = fs::read_to_string(ds.join("meta.toml")).unwrap();
    assert!(meta.contains("acetaldehyde") && meta.contains("toluene"), "{meta}");
    assert_eq!(manifest(&ds)["inputs"].as_array().unwrap().len(), 2);

    let out = tmp.path().join("run");
    let ds_path = format!("dataset.path={:?}", s(&ds));
    let stdout = ok(&[
        "run",
        "--out",
        s(&out),
        "--set",
        "dataset.source=dir",
        "--set",
        &ds_path,
        "--set",
        "mode=sr",
        "--set",
        "schedule=experimental-permanent",
        "--set",
        "runs.n=3",
    ]);
    assert!(stdout.contains("sr lda zero"), "{stdout}");
    let episodes = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_string_lossy().starts_with("episodes_"))
        .expect("an episode log");
    assert!(fs::read_to_string(episodes).unwrap().contains("unit "));
    ok(&["replay", s(&out), "--run", "1"]);
}

#[test]
fn ingest_strict_and_permissive() {
    let tmp = TempDir::new().unwrap();
    let files = write_batches(tmp.path(), true);
    let ds = tmp.path().join("ds");
    let mut args = vec!["ingest", "--out", s(&ds), "--set", "train=30", "--set", "test=60"];
    args.extend(files.iter().map(|p| s(p)));
    let err = fails(&args);
    assert!(err.starts_with("error: kind=MalformedLine"), "{err}");

    args.push("--permissive");
    let stdout = ok(&args);
    assert!(stdout.contains("(2 skipped)"), "{stdout}");
    let skipped = fs::read_to_string(ds.join("skipped.txt")).unwrap();
    assert_eq!(skipped.lines().count(), 2);

    let mut short = vec!["ingest", "--out", s(&ds), "--set", "train=300", "--set", "test=300"];
    short.extend(files.iter().map(|p| s(p)));
    short.push("--permissive");
    let err = fails(&short);
    assert!(err.starts_with("error: kind=InsufficientRecords"), "{err}");
}
