use std::process::Command;

use armour::cli::dispatch;
use armour::io::WeightContainer;
use armour::report::parse_jsonl;
use armour::train::TrainRecord;
use tempfile::tempdir;

fn run(args: &[&str]) -> i32 {
    dispatch(std::iter::once("armour").chain(args.iter().copied()))
}

fn path_arg(dir: &tempfile::TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&[]), 2);
    assert_eq!(run(&["frobnicate"]), 2);
    assert_eq!(run(&["gradcheck", "--bogus"]), 2);
    assert_eq!(run(&["gradcheck", "--dims", "4,8"]), 2);
    assert_eq!(run(&["gradcheck", "--variant", "nope"]), 2);
    assert_eq!(
        run(&["paramcount", "--arch", "deit-ti", "--arch-file", "x.json"]),
        2
    );
    assert_eq!(
        run(&["gradcheck", "--variant", "armour", "--levit", "2,2,2,2,2"]),
        2
    );
    assert_eq!(run(&["weights", "export", "--variant", "armour"]), 2);
    assert_eq!(run(&["--format", "xml", "paramcount"]), 2);
}

#[test]
fn help_exits_zero() {
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["paramcount", "--help"]), 0);
}

#[test]
fn domain_errors_exit_one() {
    let dir = tempdir().unwrap();
    assert_eq!(run(&["paramcount", "--arch", "deit-xl"]), 1);
    assert_eq!(run(&["gradcheck", "--dims", "4,9,2"]), 1);
    assert_eq!(
        run(&["analyze", "--weights", &path_arg(&dir, "missing.armw")]),
        1
    );
    assert_eq!(run(&["bench", "--iters", "3"]), 1);
    std::fs::write(dir.path().join("junk.armw"), b"not a container").unwrap();
    assert_eq!(
        run(&["analyze", "--weights", &path_arg(&dir, "junk.armw")]),
        1
    );
}

#[test]
fn paramcount_and_flops_succeed() {
    let dir = tempdir().unwrap();
    let out = path_arg(&dir, "params.jsonl");
    assert_eq!(
        run(&[
            "paramcount",
            "--arch",
            "deit-ti",
            "--variant",
            "armour",
            "--out",
            &out
        ]),
        0
    );
    let rows: Vec<serde_json::Value> =
        parse_jsonl(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(rows[0]["baseline_total"], 5_717_416);
    assert_eq!(rows[0]["total"], 5_272_744);
    let file = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/deit_ti.json");
    assert_eq!(run(&["paramcount", "--arch-file", file, "--out", &out]), 0);
    assert_eq!(
        run(&[
            "flops",
            "--arch",
            "deit-s",
            "--variant",
            "armour",
            "--seq-len",
            "197",
            "--out",
            &out
        ]),
        0
    );
}

#[test]
fn gradcheck_succeeds_for_every_block() {
    let dir = tempdir().unwrap();
    let out = path_arg(&dir, "grad.jsonl");
    assert_eq!(
        run(&[
            "gradcheck",
            "--variant",
            "armour",
            "--dims",
            "4,8,2",
            "--seed",
            "1",
            "--out",
            &out
        ]),
        0
    );
    assert_eq!(
        run(&[
            "gradcheck",
            "--variant",
            "all",
            "--levit",
            "2,2,2,1,3",
            "--out",
            &out
        ]),
        0
    );
    let rows: Vec<serde_json::Value> =
        parse_jsonl(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r["passed"] == true));
}

#[test]
fn weights_round_trip_and_analyze() {
    let dir = tempdir().unwrap();
    let first = path_arg(&dir, "a.armw");
    let second = path_arg(&dir, "b.armw");
    let export = [
        "weights",
        "export",
        "--variant",
        "regular",
        "--dims",
        "4,8,2",
        "--layers",
        "2",
    ];
    assert_eq!(
        run(&[&export[..], &["--dtype", "f32", "--out", &first]].concat()),
        0
    );
    let import = [
        "weights",
        "import",
        "--weights",
        &first,
        "--variant",
        "regular",
        "--dims",
        "4,8,2",
    ];
    assert_eq!(run(&[&import[..], &["--out", &second]].concat()), 0);
    assert_eq!(
        std::fs::read(&first).unwrap(),
        std::fs::read(&second).unwrap()
    );
    assert_eq!(WeightContainer::load(&first).unwrap().len(), 16);

    let wrong = [
        "weights",
        "import",
        "--weights",
        &first,
        "--variant",
        "armour",
        "--dims",
        "4,8,2",
    ];
    assert_eq!(run(&wrong), 1);

    let report = path_arg(&dir, "red.jsonl");
    let analyze = [
        "analyze",
        "--weights",
        &first,
        "--pairs",
        "wq:wk,wq:wv",
        "--epsilon",
        "1e-2",
    ];
    assert_eq!(
        run(&[&analyze[..], &["--per-head", "2", "--out", &report]].concat()),
        0
    );
    let rows: Vec<serde_json::Value> =
        parse_jsonl(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["pair"], "wq_wk");
    assert_eq!(rows[0]["layers"].as_array().unwrap().len(), 4);
}

#[test]
fn levit_weights_round_trip() {
    let dir = tempdir().unwrap();
    let first = path_arg(&dir, "a.armw");
    let second = path_arg(&dir, "b.armw");
    let block = ["--variant", "half_v_concat_q", "--levit", "2,4,2,2,8"];
    assert_eq!(
        run(&[&["weights", "export"][..], &block, &["--out", &first]].concat()),
        0
    );
    assert_eq!(
        run(&[
            &["weights", "import", "--weights", &first][..],
            &block,
            &["--out", &second]
        ]
        .concat()),
        0
    );
    assert_eq!(
        std::fs::read(&first).unwrap(),
        std::fs::read(&second).unwrap()
    );
}

#[test]
fn train_writes_record_and_weights() {
    let dir = tempdir().unwrap();
    let out = path_arg(&dir, "run.jsonl");
    assert_eq!(
        run(&[
            "train",
            "--variant",
            "armour",
            "--epochs",
            "1",
            "--lr",
            "0.1",
            "--seed",
            "2",
            "--out",
            &out
        ]),
        0
    );
    let recs: Vec<TrainRecord> = parse_jsonl(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(recs[0].epochs.len(), 1);
    let weights = WeightContainer::load(dir.path().join("run.armw")).unwrap();
    assert!(weights.get("layer0.w_q").is_some());
    assert!(weights.get("layer0.w_v").is_none());
    assert_eq!(
        run(&["train", "--lr=-1", "--epochs", "1", "--out", &out]),
        1
    );
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_armour");
    let ok = Command::new(bin)
        .args(["paramcount", "--arch", "deit-b"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let text = String::from_utf8(ok.stdout).unwrap();
    assert!(text.contains("86,567,656"));
    assert!(text.contains("79,480,552"));
    let bad = Command::new(bin)
        .args(["flops", "--seq-len"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8(bad.stderr)
        .unwrap()
        .contains("Usage: armour flops"));
}
