use std::process::Command;

use ecctlin::bench::parse_csv;
use ecctlin::cli::{cli_main, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};
use ecctlin::codes::load_alist;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ecctlin"))
}

#[test]
fn ber_flag_arithmetic_gives_seven_points() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let code = cli_main([
        "ecctlin",
        "ber",
        "--code",
        "regular",
        "--n",
        "26",
        "--v",
        "3",
        "--c",
        "6",
        "--decoder",
        "bp:1",
        "--ebno",
        "2:1:8",
        "--seed",
        "1",
        "--no-calibration",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let rows = parse_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(rows.len(), 7);
    assert_eq!(rows[0].ebno_db, 2.0);
    assert_eq!(rows[6].ebno_db, 8.0);
    assert!(rows.iter().all(|r| r.decoder == "bp:1"));
}

#[test]
fn csv_goes_to_stdout_without_out() {
    let out = bin()
        .args([
            "ber",
            "--decoder",
            "uncoded",
            "--ebno",
            "6",
            "--format",
            "csv",
            "--no-calibration",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(parse_csv(&text).unwrap().len(), 1);
}

#[test]
fn json_output_carries_calibration_metadata() {
    let out = bin()
        .args([
            "ber",
            "--decoder",
            "bp:1",
            "--ebno",
            "4",
            "--format",
            "json",
            "--seed",
            "3",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["metadata"]["calibration"]["valid"], serde_json::Value::Bool(true));
    assert_eq!(doc["metadata"]["comparisons_valid"], serde_json::Value::Bool(true));
    assert_eq!(doc["config"]["bp.variant"], "sum-product");
    assert!(doc["points"][0]["ber_std_error"].as_f64().unwrap() > 0.0);
    assert_eq!(doc["config_hash"].as_str().unwrap().len(), 16);
}

#[test]
fn usage_errors_exit_one() {
    let out = bin().args(["ber", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(!out.stderr.is_empty());
    assert!(out.stdout.is_empty());
    assert_eq!(cli_main(["ecctlin"]), EXIT_USAGE);
    assert_eq!(cli_main(["ecctlin", "frobnicate"]), EXIT_USAGE);
    assert_eq!(cli_main(["ecctlin", "--help"]), EXIT_OK);
}

#[test]
fn runtime_errors_exit_two() {
    assert_eq!(
        cli_main(["ecctlin", "ber", "--decoder", "/nonexistent.ckpt", "--ebno", "4"]),
        EXIT_RUNTIME
    );
    assert_eq!(
        cli_main([
            "ecctlin",
            "ber",
            "--decoder",
            "bp:1",
            "--ebno",
            "8:1:2",
            "--no-calibration"
        ]),
        EXIT_RUNTIME
    );
    assert_eq!(cli_main(["ecctlin", "makecode", "--code", "circulant"]), EXIT_RUNTIME);
}

#[test]
fn makecode_variants() {
    let dir = tempfile::tempdir().unwrap();
    let reg = dir.path().join("reg.alist");
    assert_eq!(
        cli_main([
            "ecctlin",
            "makecode",
            "--code",
            "regular",
            "--n",
            "24",
            "--out",
            reg.to_str().unwrap()
        ]),
        EXIT_OK
    );
    let h = load_alist(&std::fs::read_to_string(&reg).unwrap()).unwrap();
    assert_eq!((h.n(), h.m()), (24, 12));

    let copy = dir.path().join("copy.alist");
    assert_eq!(
        cli_main([
            "ecctlin",
            "makecode",
            "--alist",
            reg.to_str().unwrap(),
            "--out",
            copy.to_str().unwrap()
        ]),
        EXIT_OK
    );
    assert_eq!(
        std::fs::read_to_string(&copy).unwrap(),
        std::fs::read_to_string(&reg).unwrap()
    );

    let base = dir.path().join("base.txt");
    std::fs::write(&base, "2 4 4\n0 2 -1 1\n3 -1 0 0\n").unwrap();
    let lifted = dir.path().join("lifted.alist");
    assert_eq!(
        cli_main([
            "ecctlin",
            "makecode",
            "--code",
            "lifted",
            "--base",
            base.to_str().unwrap(),
            "--out",
            lifted.to_str().unwrap()
        ]),
        EXIT_OK
    );
    let h = load_alist(&std::fs::read_to_string(&lifted).unwrap()).unwrap();
    assert_eq!((h.n(), h.m()), (16, 8));
}

#[test]
fn gradcheck_exits_zero_and_prints_every_op() {
    let out = bin().arg("gradcheck").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 25);
    for line in text.lines() {
        assert!(line.ends_with(" ok"), "{line}");
        let err: f64 = line
            .split("max_rel_error")
            .nth(1)
            .unwrap()
            .split_whitespace()
            .next()
            .unwrap()
            .parse()
            .unwrap();
        assert!(err < 1e-4);
    }
}

#[test]
fn train_then_ber_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.ckpt");
    let log = dir.path().join("log.csv");
    let args = [
        "ecctlin",
        "train",
        "--code",
        "regular",
        "--n",
        "12",
        "--attn",
        "standard",
        "--d-model",
        "8",
        "--heads",
        "2",
        "--blocks",
        "1",
        "--iters",
        "6",
        "--batch",
        "8",
        "--seed",
        "4",
        "--out",
        ckpt.to_str().unwrap(),
        "--log",
        log.to_str().unwrap(),
    ];
    assert_eq!(cli_main(args), EXIT_OK);
    let log_text = std::fs::read_to_string(&log).unwrap();
    assert_eq!(log_text.lines().next().unwrap(), "step,lr,loss,train_ber");
    assert_eq!(log_text.lines().count(), 7);

    let csv = dir.path().join("r.csv");
    let code = cli_main([
        "ecctlin",
        "ber",
        "--decoder",
        ckpt.to_str().unwrap(),
        "--ebno",
        "3",
        "--max-bits",
        "2000",
        "--no-calibration",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let rows = parse_csv(&std::fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(rows[0].decoder, "transformer-standard");
    assert_eq!(rows[0].n, 12);

    // Same checkpoint with a mismatched code is a runtime error.
    let code = cli_main([
        "ecctlin",
        "ber",
        "--code",
        "regular",
        "--n",
        "24",
        "--decoder",
        ckpt.to_str().unwrap(),
        "--ebno",
        "3",
        "--no-calibration",
    ]);
    assert_eq!(code, EXIT_RUNTIME);
}

#[test]
fn timing_subcommand_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let code = cli_main([
        "ecctlin",
        "timing",
        "--decoders",
        "bp:1,linear",
        "--sizes",
        "24,48",
        "--batch",
        "2",
        "--d-model",
        "8",
        "--heads",
        "2",
        "--blocks",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "decoder,n,batch,repetitions,median,q1,q3");
    assert_eq!(text.lines().count(), 5);
    assert_eq!(
        cli_main(["ecctlin", "timing", "--reps", "3", "--sizes", "24"]),
        EXIT_RUNTIME
    );
}
