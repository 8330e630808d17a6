use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn crackcast(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crackcast"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("CRACKCAST_OUT")
        .output()
        .expect("spawn crackcast")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = crackcast(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn synth_and_prepare(dir: &Path, n: &str) {
    ok(dir, &["--seed", "3", "synth", "--n-defects", n]);
    ok(dir, &["--seed", "3", "prepare"]);
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["synth", "--n-defects", "100", "--seed", "7"]);
    ok(b.path(), &["synth", "--n-defects", "100", "--seed", "7"]);
    for f in ["records.ndjson", "ground_truth.ndjson", "synth_summary.json"] {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs");
    }
    let c = tempfile::tempdir().unwrap();
    ok(c.path(), &["synth", "--n-defects", "100", "--seed", "8"]);
    assert_ne!(
        fs::read(a.path().join("records.ndjson")).unwrap(),
        fs::read(c.path().join("records.ndjson")).unwrap()
    );
}

#[test]
fn default_synth_writes_dataset_and_ground_truth() {
    let d = tempfile::tempdir().unwrap();
    let stdout = ok(d.path(), &["synth"]);
    assert!(stdout.contains("defects: 500"), "{stdout}");
    assert_eq!(fs::read_to_string(d.path().join("records.ndjson")).unwrap().lines().count(), 500);
    assert_eq!(fs::read_to_string(d.path().join("ground_truth.ndjson")).unwrap().lines().count(), 500);
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&crackcast(d.path(), &["synth", "--n-defects", "0"])), 2);
    assert_eq!(code(&crackcast(d.path(), &["train", "--model", "transformer"])), 2);
    assert_eq!(code(&crackcast(d.path(), &["frobnicate"])), 2);

    let cfg = d.path().join("bad.toml");
    fs::write(&cfg, "[model]\nbogus = 1\n").unwrap();
    let o = crackcast(d.path(), &["--config", cfg.to_str().unwrap(), "synth"]);
    assert_eq!(code(&o), 2);

    // runtime failures
    let o = crackcast(d.path(), &["train", "--model", "mh"]);
    assert_eq!(code(&o), 1, "missing dataset");
    let empty = d.path().join("empty.ndjson");
    fs::write(&empty, "").unwrap();
    let o = crackcast(d.path(), &["prepare", "--data", empty.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no records"));
}

#[test]
fn prepare_writes_splits_and_scaler() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["synth", "--n-defects", "60"]);
    let stdout = ok(d.path(), &["prepare", "--past", "5", "--future", "4"]);
    assert!(stdout.contains("accepted defects:"));
    assert!(stdout.contains("rejected defects:"));
    for f in ["train.json", "validation.json", "test.json", "scaler.json", "dataset.json"] {
        assert!(d.path().join(f).exists(), "{f}");
    }
    let train: Vec<Value> = serde_json::from_str(&fs::read_to_string(d.path().join("train.json")).unwrap()).unwrap();
    assert!(!train.is_empty());
    for s in &train {
        assert_eq!(s["past_y"].as_array().unwrap().len(), 5);
        assert_eq!(s["future_y"].as_array().unwrap().len(), 4);
    }
}

#[test]
fn prepare_feature_only_windows_have_length_four() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["synth", "--n-defects", "60"]);
    ok(d.path(), &["prepare", "--past", "0", "--future", "4"]);
    let test: Vec<Value> = serde_json::from_str(&fs::read_to_string(d.path().join("test.json")).unwrap()).unwrap();
    assert!(!test.is_empty());
    for s in &test {
        assert!(s["past_y"].as_array().unwrap().is_empty());
        assert_eq!(s["future_y"].as_array().unwrap().len(), 4);
        assert_eq!(s["future_x"].as_array().unwrap().len(), 4);
    }
}

// --- independent fall count on the quarterly grid ---

fn parse_date(s: &str) -> (i64, u32, u32) {
    let mut it = s.split('-').map(|p| p.parse::<i64>().unwrap());
    (it.next().unwrap(), it.next().unwrap() as u32, it.next().unwrap() as u32)
}

fn days_in_month(y: i64, m: u32) -> u32 {
    match m {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        _ if (y % 4 == 0 && y % 100 != 0) || y % 400 == 0 => 29,
        _ => 28,
    }
}

/// Days since 1970-01-01 (proleptic Gregorian).
fn day_number(y: i64, m: u32, d: u32) -> i64 {
    let mut n = 0i64;
    for yy in 1970..y {
        n += if (yy % 4 == 0 && yy % 100 != 0) || yy % 400 == 0 { 366 } else { 365 };
    }
    for mm in 1..m {
        n += days_in_month(y, mm) as i64;
    }
    n + d as i64 - 1
}

fn add_months((y, m, d): (i64, u32, u32), months: u32) -> (i64, u32, u32) {
    let total = (m - 1 + months) as i64;
    let (ny, nm) = (y + total / 12, (total % 12) as u32 + 1);
    (ny, nm, d.min(days_in_month(ny, nm)))
}

fn has_large_fall(visits: &[(i64, f64)], anchor: (i64, u32, u32)) -> bool {
    let last = visits.last().unwrap().0;
    let mut prev: Option<f64> = None;
    for step in 0..59u32 {
        let (y, m, d) = add_months(anchor, 3 * step);
        let x = day_number(y, m, d);
        if x > last {
            break;
        }
        let i = visits.iter().rposition(|v| v.0 <= x).unwrap();
        let v = if visits[i].0 == x {
            visits[i].1
        } else {
            let (a, b) = (visits[i], visits[i + 1]);
            a.1 + (b.1 - a.1) * (x - a.0) as f64 / (b.0 - a.0) as f64
        };
        if prev.is_some_and(|p| p - v > 15.0) {
            return true;
        }
        prev = Some(v);
    }
    false
}

#[test]
fn rejected_count_matches_independent_fall_count() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["--seed", "11", "synth"]);
    ok(d.path(), &["--seed", "11", "prepare"]);

    let mut expected = BTreeSet::new();
    for line in fs::read_to_string(d.path().join("records.ndjson")).unwrap().lines() {
        let r: Value = serde_json::from_str(line).unwrap();
        let visits: Vec<(i64, f64)> = r["visits"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| {
                let (y, m, dd) = parse_date(v["date"].as_str().unwrap());
                (day_number(y, m, dd), v["length_mm"].as_f64().unwrap())
            })
            .collect();
        let anchor = parse_date(r["visits"][0]["date"].as_str().unwrap());
        if has_large_fall(&visits, anchor) {
            expected.insert(r["defect_id"].as_str().unwrap().to_string());
        }
    }

    let rejected: BTreeMap<String, String> = fs::read_to_string(d.path().join("rejected.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (id, reason) = l.split_once(',').unwrap();
            (id.to_string(), reason.to_string())
        })
        .collect();
    assert!(!expected.is_empty(), "generator produced no large falls");
    assert_eq!(rejected.keys().cloned().collect::<BTreeSet<_>>(), expected);
    assert!(rejected.values().all(|r| r == "large_fall"));

    // every rejection traces back to a logged length-reducing event
    let mut events: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for line in fs::read_to_string(d.path().join("ground_truth.ndjson")).unwrap().lines() {
        let t: Value = serde_json::from_str(line).unwrap();
        let kinds = t["events"]
            .as_array()
            .unwrap()
            .iter()
            .map(|e| e["kind"].as_str().unwrap().to_string())
            .collect();
        events.insert(t["defect_id"].as_str().unwrap().to_string(), kinds);
    }
    for id in rejected.keys() {
        let kinds = &events[id];
        assert!(
            kinds.iter().any(|k| k == "grinding" || k == "misread"),
            "{id} rejected without a grinding or misread event: {kinds:?}"
        );
    }
}

#[test]
fn train_eval_uq_round_trip() {
    let d = tempfile::tempdir().unwrap();
    synth_and_prepare(d.path(), "80");

    ok(d.path(), &["train", "--model", "mh", "--past", "5", "--future", "4", "--epochs", "2"]);
    assert!(d.path().join("mh.ckpt.json").exists());
    let hist = fs::read_to_string(d.path().join("mh_history.csv")).unwrap();
    assert!(hist.starts_with("epoch,train_masked_mse,val_masked_mse"));
    assert_eq!(hist.lines().count(), 3);

    let table = ok(d.path(), &["eval", "--model", "mh"]);
    assert!(table.contains("Mean MAE"));
    let metrics = fs::read_to_string(d.path().join("metrics.csv")).unwrap();
    let header: Vec<&str> = metrics.lines().next().unwrap().split(',').collect();
    let metric_cols = ["mae_1", "mean_mae", "rmse_1", "mean_rmse", "mlns", "msqns", "mstns"];
    for c in metric_cols {
        assert!(header.contains(&c), "{c} missing from {header:?}");
    }
    assert_eq!(metrics.lines().count(), 2);
    assert!(d.path().join("scatter_step1.csv").exists());

    ok(d.path(), &["train", "--model", "bmh", "--dropout", "0.1", "--epochs", "1"]);
    let hist = fs::read_to_string(d.path().join("bmh_history.csv")).unwrap();
    assert!(hist.starts_with("epoch,train_bmh_loss,val_bmh_loss"));

    let stdout = ok(d.path(), &["uq", "--samples", "5", "--dropout", "0.1", "--widen", "5"]);
    assert!(stdout.contains("raw coverage:"));
    assert!(stdout.contains("widened coverage:"));
    let uq = fs::read_to_string(d.path().join("uq.csv")).unwrap();
    assert!(uq.starts_with("defect_id,start,step,y_true,y_hat,epistemic,aleatoric,lower,upper,covered"));

    // uq refuses a point-forecast checkpoint
    let ck = d.path().join("mh.ckpt.json");
    let o = crackcast(d.path(), &["uq", "--checkpoint", ck.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn repeated_training_is_identical() {
    let d = tempfile::tempdir().unwrap();
    synth_and_prepare(d.path(), "60");
    let a = d.path().join("a.json");
    let b = d.path().join("b.json");
    for p in [&a, &b] {
        ok(d.path(), &["train", "--model", "gru-fc-lh", "--epochs", "1", "--checkpoint", p.to_str().unwrap()]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn flags_override_config_file() {
    let d = tempfile::tempdir().unwrap();
    synth_and_prepare(d.path(), "60");
    let cfg = d.path().join("run.toml");
    fs::write(&cfg, "[model]\nmodel = \"gru-fc-lh\"\npast = 3\nhidden = 8\n[train]\nepochs = 1\n").unwrap();
    let c = cfg.to_str().unwrap();
    let ck = d.path().join("c.json");
    ok(d.path(), &["--config", c, "train", "--past", "2", "--checkpoint", ck.to_str().unwrap()]);
    let v: Value = serde_json::from_str(&fs::read_to_string(&ck).unwrap()).unwrap();
    assert_eq!(v["spec"]["kind"], "gru-fc-lh");
    assert_eq!(v["spec"]["past"], 2);
    assert_eq!(v["spec"]["hidden"], 8);
    assert_eq!(fs::read_to_string(d.path().join("gru-fc-lh_history.csv")).unwrap().lines().count(), 2);
}

#[test]
fn out_dir_from_environment() {
    let d = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_crackcast"))
        .current_dir(d.path())
        .env("CRACKCAST_OUT", d.path().join("envout"))
        .args(["synth", "--n-defects", "5"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(d.path().join("envout/records.ndjson").exists());
}

#[test]
fn sweep_writes_ten_horizon_rows_and_dropout_rows() {
    let d = tempfile::tempdir().unwrap();
    synth_and_prepare(d.path(), "60");
    ok(
        d.path(),
        &[
            "sweep", "--model", "bmh", "--past-range", "1..10", "--epochs", "1", "--hidden", "8",
            "--dropout-rates", "0.1,0.3,0.5", "--samples", "5",
        ],
    );
    let h = fs::read_to_string(d.path().join("horizon_sweep.csv")).unwrap();
    assert_eq!(h.lines().count(), 11, "{h}");
    let pasts: Vec<usize> = h.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(pasts, (1..=10).collect::<Vec<_>>());
    let dsw = fs::read_to_string(d.path().join("dropout_sweep.csv")).unwrap();
    assert_eq!(dsw.lines().count(), 4);
}
