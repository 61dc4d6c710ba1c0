use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn diskprep(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diskprep"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = diskprep(args, cwd);
    assert!(
        out.status.success(),
        "diskprep {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn small_fleet(dir: &Path, seed: &str) {
    ok(
        &[
            "--seed",
            seed,
            "synth",
            "--out",
            "fleet",
            "--n-disks",
            "200",
            "--span-days",
            "360",
            "--afr",
            "0.1",
        ],
        dir,
    );
}

#[test]
fn ingest_merges_ticket_types() {
    let dir = tempfile::tempdir().unwrap();
    let header = "date,serial_number,model,capacity_bytes,failure,smart_5_raw,smart_187_raw\n";
    let mut csv = String::from(header);
    for d in 1..=5 {
        csv += &format!("2015-01-0{d},A,HGST X,1,0,{d},0\n");
        let fail = u8::from(d == 4);
        if d <= 4 {
            csv += &format!("2015-01-0{d},B,HGST X,1,{fail},0,{d}\n");
        }
    }
    fs::write(dir.path().join("smart.csv"), csv).unwrap();
    fs::write(
        dir.path().join("tickets.csv"),
        "serial,date,failure_type\nB,2015-01-04,data_corruption\n",
    )
    .unwrap();

    let stdout = ok(
        &[
            "ingest",
            "--input",
            "smart.csv",
            "--tickets",
            "tickets.csv",
            "--out",
            "ds",
        ],
        dir.path(),
    );
    assert!(stdout.contains("2 disks (1 failed)"), "{stdout}");
    let report = json(&dir.path().join("ds/ingest-report.json"));
    assert_eq!(report["rows"], 9);
    assert!(dir.path().join("ds/manifest.json").exists());

    let analysis = ok(&["analyze", "--data", "ds"], dir.path());
    let v: serde_json::Value = serde_json::from_str(&analysis).unwrap();
    assert_eq!(v["models"][0]["model"], "HGST X");
    assert!(v["models"][0]["afr"].as_f64().unwrap() > 0.0);
}

#[test]
fn staged_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_fleet(d, "3");
    assert!(d.join("fleet/ground-truth.json").exists());

    ok(&["filter-types", "--data", "fleet", "--out", "tf.json"], d);
    let tf = json(&d.join("tf.json"));
    assert_eq!(tf["ranking"].as_array().unwrap().len(), 4);

    ok(&["fill", "--data", "fleet", "--out", "filled"], d);
    assert!(d.join("filled/fill-report.json").exists());

    ok(
        &[
            "--n-days",
            "15",
            "backtrack",
            "--data",
            "filled",
            "--typefilter",
            "tf.json",
            "--out",
            "bt.json",
        ],
        d,
    );
    let bt = json(&d.join("bt.json"));
    assert_eq!(bt["n"], 15);
    assert!(bt["positive_samples"].as_u64().unwrap() > 0);

    let stdout = ok(
        &[
            "featurize",
            "--data",
            "filled",
            "--attributes",
            "smart_5_raw,smart_1_raw",
            "--format",
            "csv",
            "--out",
            "f.csv",
        ],
        d,
    );
    assert!(stdout.contains("x 52 columns"), "{stdout}");
    let text = fs::read_to_string(d.join("f.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# schema_hash="));
    assert!(lines.next().unwrap().starts_with("serial,day,smart_5_raw,"));
    assert!(d.join("f.csv.manifest.json").exists());
}

#[test]
fn train_then_evaluate_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_fleet(d, "5");
    let common = [
        "--seed",
        "5",
        "--n-trees",
        "15",
        "--train-months",
        "9",
        "--test-months",
        "3",
        "--fpr",
        "0.05",
    ];
    let with = |rest: &[&'static str]| common.iter().chain(rest).copied().collect::<Vec<_>>();

    ok(&with(&["train", "--data", "fleet", "--out", "model"]), d);
    ok(
        &with(&["evaluate", "--data", "fleet", "--model-dir", "model", "--out", "eval"]),
        d,
    );
    ok(&with(&["run", "--data", "fleet", "--out", "run"]), d);

    let split = json(&d.join("eval/report.json"));
    let full = json(&d.join("run/report.json"));
    for key in ["tpr", "fpr", "threshold", "failed_disks", "true_positives"] {
        assert_eq!(split[key], full[key], "{key}");
    }
    assert_eq!(
        fs::read(d.join("model/model.bin")).unwrap(),
        fs::read(d.join("run/model.bin")).unwrap()
    );
}

#[test]
fn seed_makes_runs_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_fleet(d, "9");
    let args = |out: &'static str| {
        [
            "--seed",
            "1",
            "--n-trees",
            "10",
            "--model-kind",
            "rf",
            "run",
            "--data",
            "fleet",
            "--out",
            out,
        ]
    };
    ok(&args("a"), d);
    ok(&args("b"), d);
    for f in ["model.bin", "report.json", "training.features"] {
        assert_eq!(
            fs::read(d.join("a").join(f)).unwrap(),
            fs::read(d.join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    let ma = json(&d.join("a/train.manifest.json"));
    let mb = json(&d.join("b/train.manifest.json"));
    assert_eq!(ma["outputs"], mb["outputs"]);

    let other = dir.path().join("other");
    fs::create_dir(&other).unwrap();
    ok(
        &[
            "--seed",
            "10",
            "synth",
            "--out",
            "fleet",
            "--n-disks",
            "200",
            "--span-days",
            "360",
            "--afr",
            "0.1",
        ],
        &other,
    );
    assert_ne!(
        fs::read(d.join("fleet/tickets.csv")).unwrap(),
        fs::read(other.join("fleet/tickets.csv")).unwrap()
    );
}

#[test]
fn config_file_and_set_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("c.toml"), "seed = 4\n[synth]\nn_disks = 50\nspan_days = 120\n").unwrap();
    let stdout = ok(
        &[
            "--config",
            "c.toml",
            "--set",
            "synth.n_disks=40",
            "synth",
            "--out",
            "fleet",
        ],
        d,
    );
    assert!(stdout.starts_with("generated 40 disks over 120 days"), "{stdout}");
    assert!(stdout.contains("seed 4"), "{stdout}");
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("c.toml"), "[pipeline]\nno_such_key = 1\n").unwrap();
    let out = diskprep(&["--config", "c.toml", "synth", "--out", "x"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));

    let out = diskprep(&["--n-days", "soon", "synth", "--out", "x"], d);
    assert!(!out.status.success());

    let out = diskprep(&["analyze", "--data", "missing-dir"], d);
    assert!(!out.status.success());
}

#[test]
fn example_config_parses() {
    let dir = tempfile::tempdir().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/example.toml");
    let stdout = ok(
        &[
            "--config",
            config.to_str().unwrap(),
            "synth",
            "--out",
            "fleet",
            "--n-disks",
            "20",
        ],
        dir.path(),
    );
    assert!(stdout.contains("seed 42"), "{stdout}");
}
