use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use delta_core::artifacts::{
    read_accuracy_matrix, read_confusion, read_confusion_normalized, read_loss_log,
};
use delta_core::stream::write_csv_dataset;
use delta_core::{LabeledVector, Network};

const TINY: &str = r#"
seeds = [0, 1]
test_per_class = 5

[dataset]
kind = "synthetic"
dim = 8
cluster_spread = 0.2

[stream]
rho = 0.1
num_classes = 4
max_per_class = 20
num_tasks = 2
classes_per_task = [2, 2]
batch_size = 8

[model]
hidden_dims = [16]
embed_dim = 8
proj_dim = 8

[train]
stage2_steps_per_batch = 2
"#;

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    (dir, cfg)
}

fn delta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delta"))
        .args(args)
        .env("DELTA_WORKERS", "2")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn validate_summary(path: &Path) -> Value {
    let schema: Value = serde_json::from_str(
        &fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/schema/summary.schema.json"
        ))
        .unwrap(),
    )
    .unwrap();
    let summary: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator
        .iter_errors(&summary)
        .map(|e| e.to_string())
        .collect();
    assert!(errors.is_empty(), "{}: {errors:?}", path.display());
    summary
}

fn read_csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn strip_wall_clock(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.remove("wall_clock_secs");
            m.values_mut().for_each(strip_wall_clock);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_wall_clock),
        _ => {}
    }
}

#[test]
fn run_writes_reparseable_artifacts() {
    let (dir, cfg) = setup();
    let out = dir.path().join("run");
    assert_ok(&delta(&["run", "--config", s(&cfg), "--out", s(&out)]));

    let summary = validate_summary(&out.join("summary.json"));
    assert_eq!(summary["command"], "run");
    assert_eq!(summary["points"][0]["average_accuracy"]["n"], 2);

    for seed in [0, 1] {
        let seed_dir = out.join(format!("seed_{seed}"));
        let run: Value =
            serde_json::from_str(&fs::read_to_string(seed_dir.join("run.json")).unwrap()).unwrap();
        assert_eq!(run["seed"], seed);
        assert_eq!(run["config"]["stream"]["num_classes"], 4);

        let mat = read_accuracy_matrix(seed_dir.join("accuracy_matrix.csv")).unwrap();
        assert_eq!(mat.num_tasks(), 2);
        let per_task = run["per_task_average_accuracy"].as_array().unwrap();
        let last_row = &mat.rows()[1];
        let a_t = last_row.iter().sum::<f64>() / last_row.len() as f64;
        assert!((per_task[1].as_f64().unwrap() - a_t).abs() < 1e-12);

        for t in 1..=2 {
            let conf = read_confusion(seed_dir.join(format!("confusion_{t}.csv"))).unwrap();
            assert_eq!(conf.classes().len(), 2 * t);
            let (classes, norm) =
                read_confusion_normalized(seed_dir.join(format!("confusion_{t}_normalized.csv")))
                    .unwrap();
            assert_eq!(classes, conf.classes());
            for row in norm {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        let log = read_loss_log(seed_dir.join("loss_log.csv")).unwrap();
        assert_eq!(log.len(), run["steps"].as_u64().unwrap() as usize);
        assert!(log.iter().all(|r| r.stage1_loss.is_some()));

        let net = Network::load_json(seed_dir.join("model.json")).unwrap();
        assert_eq!(net.config().num_classes_max, 4);
    }
}

#[test]
fn rerun_reproduces_summary() {
    let (dir, cfg) = setup();
    let mut summaries = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        assert_ok(&delta(&["run", "--config", s(&cfg), "--out", s(&out)]));
        let mut v: Value =
            serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        strip_wall_clock(&mut v);
        summaries.push(v);
    }
    assert_eq!(summaries[0], summaries[1]);
}

#[test]
fn single_seed_has_zero_std() {
    let (dir, cfg) = setup();
    let out = dir.path().join("one");
    assert_ok(&delta(&[
        "run",
        "--config",
        s(&cfg),
        "--seeds",
        "3",
        "--out",
        s(&out),
    ]));
    let summary = validate_summary(&out.join("summary.json"));
    assert_eq!(summary["points"][0]["average_accuracy"]["std"], 0.0);
    assert_eq!(summary["points"][0]["seeds"][0]["seed"], 3);
}

#[test]
fn sweep_imbalance_table() {
    let (dir, cfg) = setup();
    let out = dir.path().join("rho");
    assert_ok(&delta(&[
        "sweep-imbalance",
        "--config",
        s(&cfg),
        "--rhos",
        "0.1,1.0",
        "--out",
        s(&out),
    ]));
    let rows = read_csv_rows(&out.join("sweep_imbalance.csv"));
    assert_eq!(rows[0][0], "rho");
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1][0], "0.1");
    assert_eq!(rows[2][0], "1");
    let summary = validate_summary(&out.join("summary.json"));
    assert_eq!(summary["points"][1]["setting"]["value"], 1.0);
}

#[test]
fn singleton_imbalance_sweep_matches_plain_run() {
    let (dir, cfg) = setup();
    let sweep = dir.path().join("sweep");
    let plain = dir.path().join("plain");
    assert_ok(&delta(&[
        "sweep-imbalance",
        "--config",
        s(&cfg),
        "--rhos",
        "1.0",
        "--out",
        s(&sweep),
    ]));
    assert_ok(&delta(&[
        "run",
        "--config",
        s(&cfg),
        "--rho",
        "1.0",
        "--out",
        s(&plain),
    ]));
    let mut a: Value =
        serde_json::from_str(&fs::read_to_string(sweep.join("summary.json")).unwrap()).unwrap();
    let mut b: Value =
        serde_json::from_str(&fs::read_to_string(plain.join("summary.json")).unwrap()).unwrap();
    strip_wall_clock(&mut a);
    strip_wall_clock(&mut b);
    assert_eq!(a["points"][0]["seeds"], b["points"][0]["seeds"]);
}

#[test]
fn sweep_pairing_table() {
    let (dir, cfg) = setup();
    let out = dir.path().join("pairing");
    assert_ok(&delta(&[
        "sweep-pairing",
        "--config",
        s(&cfg),
        "--ms",
        "0,1,3",
        "--out",
        s(&out),
    ]));
    let rows = read_csv_rows(&out.join("sweep_pairing.csv"));
    assert_eq!(
        rows[0],
        [
            "m",
            "mean_accuracy",
            "std_accuracy",
            "mean_forgetting",
            "std_forgetting",
            "mean_wall_clock_secs",
            "std_wall_clock_secs"
        ]
    );
    let ms: Vec<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(ms, ["0", "1", "3"]);
    assert!(rows[1..].iter().all(|r| r.len() == 7 && !r[3].is_empty()));
    validate_summary(&out.join("summary.json"));
}

#[test]
fn compare_losses_rows() {
    let (dir, cfg) = setup();
    let out = dir.path().join("losses");
    assert_ok(&delta(&[
        "compare-losses",
        "--config",
        s(&cfg),
        "--method",
        "er-ce",
        "--out",
        s(&out),
    ]));
    let rows = read_csv_rows(&out.join("compare_losses.csv"));
    let labels: Vec<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(labels, ["contrastive+CE", "contrastive+EQ"]);
    let summary = validate_summary(&out.join("summary.json"));
    let seeds = |i: usize| -> Vec<Value> {
        summary["points"][i]["seeds"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| s["seed"].clone())
            .collect()
    };
    assert_eq!(seeds(0), seeds(1));
    // both arms are two-stage regardless of --method
    let run: Value =
        serde_json::from_str(&fs::read_to_string(out.join("ce/seed_0/run.json")).unwrap()).unwrap();
    assert_eq!(run["config"]["train"]["method"], "delta");
    assert_eq!(run["config"]["train"]["stage2_loss"], "cross-entropy");
}

#[test]
fn inspect_buffer_run_and_snapshot() {
    let (dir, cfg) = setup();
    let out = dir.path().join("buf");
    let live = delta(&[
        "inspect-buffer",
        "--config",
        s(&cfg),
        "--buffer-size",
        "30",
        "--out",
        s(&out),
    ]);
    assert_ok(&live);
    let text = String::from_utf8(live.stdout).unwrap();
    assert!(text.starts_with("class,count\n"));
    let total: usize = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 30);

    let snap = out.join("buffer.csv");
    let again = delta(&["inspect-buffer", "--snapshot", s(&snap)]);
    assert_ok(&again);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn csv_dataset_end_to_end() {
    let (dir, _) = setup();
    let data = dir.path().join("data.csv");
    let samples: Vec<LabeledVector> = (0..4)
        .flat_map(|c| {
            (0..30).map(move |i| {
                let mut f = vec![0.01 * i as f64; 4];
                f[c] += 1.0;
                LabeledVector::new(f, c)
            })
        })
        .collect();
    write_csv_dataset(&data, &samples).unwrap();
    let cfg = dir.path().join("csv.toml");
    let text = TINY.replace(
        "kind = \"synthetic\"\ndim = 8\ncluster_spread = 0.2",
        &format!("kind = \"csv\"\npath = {:?}", data.to_str().unwrap()),
    );
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("csv_run");
    assert_ok(&delta(&["run", "--config", s(&cfg), "--out", s(&out)]));
    validate_summary(&out.join("summary.json"));
}

fn idx_bytes(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut b = magic.to_be_bytes().to_vec();
    for d in dims {
        b.extend(d.to_be_bytes());
    }
    b.extend(payload);
    b
}

#[test]
fn idx_dataset_end_to_end() {
    let (dir, cfg) = setup();
    let (n, rows, cols) = (120u32, 2u32, 2u32);
    let labels: Vec<u8> = (0..n).map(|i| (i % 4) as u8).collect();
    let pixels: Vec<u8> = labels
        .iter()
        .enumerate()
        .flat_map(|(i, &l)| {
            let mut px = [(i % 7) as u8; 4];
            px[l as usize] = 255;
            px
        })
        .collect();
    let images = dir.path().join("images.idx");
    let label_file = dir.path().join("labels.idx");
    fs::write(&images, idx_bytes(0x803, &[n, rows, cols], &pixels)).unwrap();
    fs::write(&label_file, idx_bytes(0x801, &[n], &labels)).unwrap();
    let out = dir.path().join("idx_run");
    let dataset = format!("idx:{},{}", s(&images), s(&label_file));
    assert_ok(&delta(&[
        "run",
        "--config",
        s(&cfg),
        "--dataset",
        &dataset,
        "--out",
        s(&out),
    ]));
    let run: Value =
        serde_json::from_str(&fs::read_to_string(out.join("seed_0/run.json")).unwrap()).unwrap();
    assert_eq!(run["config"]["dataset"]["kind"], "idx");
}

#[test]
fn exit_codes() {
    let (dir, cfg) = setup();
    let out = dir.path().join("x");
    let code = |args: &[&str]| delta(args).status.code().unwrap();

    // configuration errors
    assert_eq!(
        code(&["run", "--config", s(&cfg), "--rho", "0", "--out", s(&out)]),
        2
    );
    assert_eq!(
        code(&["run", "--config", s(&cfg), "--tau", "-1", "--out", s(&out)]),
        2
    );
    assert_eq!(code(&["run", "--method", "sgd"]), 2);
    assert_eq!(
        code(&["run", "--dataset", "parquet:x", "--out", s(&out)]),
        2
    );
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[stream]\nrh0 = 0.1\n").unwrap();
    let res = delta(&["run", "--config", s(&bad), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("stream.rh0"));
    let workers = Command::new(env!("CARGO_BIN_EXE_delta"))
        .args(["run", "--config", s(&cfg), "--out", s(&out)])
        .env("DELTA_WORKERS", "0")
        .output()
        .unwrap();
    assert_eq!(workers.status.code(), Some(2));

    // runtime failures
    let missing = dir.path().join("nope.idx");
    let dataset = format!("idx:{},{}", s(&missing), s(&missing));
    assert_eq!(
        code(&[
            "run",
            "--config",
            s(&cfg),
            "--dataset",
            &dataset,
            "--out",
            s(&out)
        ]),
        1
    );
    let garbage = dir.path().join("garbage.csv");
    fs::write(&garbage, "0,1.0,2.0\n1,abc,3\n").unwrap();
    assert_eq!(code(&["inspect-buffer", "--snapshot", s(&garbage)]), 1);
}
