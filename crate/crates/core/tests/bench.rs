use ecctlin::bench::{
    calibrate, format_sig9, parse_csv, run_attention_timing, run_ber, run_timing, write_csv, BenchError, BerConfig,
    BerRow, Decoder, StopRule, TimingDecoder, CSV_HEADER,
};
use ecctlin::channel::q_function;
use ecctlin::codes::LinearCode;
use ecctlin::gradsuite;
use ecctlin::transformer::{attention_flops, linear_attention_flops, AttentionKind, Model, ModelConfig};

fn n26() -> LinearCode {
    LinearCode::regular(26, 3, 6, 0).unwrap()
}

#[test]
fn uncoded_ber_matches_gaussian_tail_at_9_6_db() {
    let probe = LinearCode::regular(1024, 3, 6, 0).unwrap();
    let mut cfg = BerConfig::new(vec![9.6], 17);
    cfg.batch = 64;
    cfg.stop = StopRule {
        target_errors: 4000,
        max_bits: u64::MAX,
        max_seconds: None,
    };
    let report = run_ber(&Decoder::Uncoded, &probe, &cfg).unwrap();
    let p = report.points[0];
    let theory = q_function((2.0 * 10f64.powf(0.96)).sqrt());
    assert!((theory - 1.0e-5).abs() < 0.1e-5);
    assert!(p.bits >= 10_000_000);
    let rel = (p.ber() - theory).abs() / theory;
    assert!(rel < 0.05, "BER {} vs {theory}: {rel}", p.ber());
}

#[test]
fn noiseless_limit_has_no_errors() {
    let code = n26();
    let mut cfg = BerConfig::new(vec![40.0], 3);
    cfg.stop = StopRule {
        target_errors: 1,
        max_bits: 100_000,
        max_seconds: None,
    };
    for spec in ["uncoded", "bp:1", "bp:20"] {
        let d = Decoder::from_spec(spec, &code).unwrap();
        let r = run_ber(&d, &code, &cfg).unwrap();
        assert_eq!(r.points[0].bit_errors, 0, "{spec}");
        assert!(r.points[0].bits >= 100_000);
    }
}

#[test]
fn reports_are_reproducible_and_hash_tracks_config() {
    let code = n26();
    let d = Decoder::from_spec("bp:1", &code).unwrap();
    let mut cfg = BerConfig::new(vec![2.0, 3.0, 4.0], 5);
    cfg.omit_timing = true;
    let a = run_ber(&d, &code, &cfg).unwrap();
    let b = run_ber(&d, &code, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.points.iter().all(|p| p.bit_errors >= 100));

    let mut other_seed = cfg.clone();
    other_seed.seed = 6;
    assert_ne!(run_ber(&d, &code, &other_seed).unwrap().config_hash, a.config_hash);
    let mut other_batch = cfg.clone();
    other_batch.batch = 128;
    assert_ne!(run_ber(&d, &code, &other_batch).unwrap().config_hash, a.config_hash);
    let d20 = Decoder::from_spec("bp:20", &code).unwrap();
    assert_ne!(run_ber(&d20, &code, &cfg).unwrap().config_hash, a.config_hash);

    let mut timed = cfg.clone();
    timed.omit_timing = false;
    let t = run_ber(&d, &code, &timed).unwrap();
    assert_eq!(t.config_hash, a.config_hash);
    assert!(t.points.iter().all(|p| p.seconds > 0.0));
}

#[test]
fn csv_rows_roundtrip_and_derived_fields_agree() {
    let code = n26();
    let d = Decoder::from_spec("bp:1", &code).unwrap();
    let report = run_ber(&d, &code, &BerConfig::new(vec![1.0, 2.0, 3.0], 9)).unwrap();
    let mut out = Vec::new();
    write_csv(&mut out, &BerRow::from_report(&report)).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], CSV_HEADER);

    let rows = parse_csv(&text).unwrap();
    for row in &rows {
        assert_eq!(
            format_sig9(row.ber),
            format_sig9(row.bit_errors as f64 / row.bits as f64)
        );
        assert_eq!(row.config_hash, report.config_hash);
        assert_eq!((row.n, row.k), (26, 13));
    }
    let mut again = Vec::new();
    write_csv(&mut again, &rows).unwrap();
    assert_eq!(String::from_utf8(again).unwrap(), text);
    assert!(parse_csv("a,b\n1,2\n").is_err());
}

#[test]
fn dimension_mismatch_and_empty_sweep() {
    let code = n26();
    let other = LinearCode::regular(24, 3, 6, 0).unwrap();
    let mut cfg = ModelConfig::new(24, 12, AttentionKind::Linear);
    cfg.d_model = 8;
    cfg.heads = 2;
    let model = Model::<f32>::new(cfg, other.pcm()).unwrap();
    let d = Decoder::Transformer(Box::new(model));
    assert!(matches!(
        run_ber(&d, &code, &BerConfig::new(vec![4.0], 0)),
        Err(BenchError::Dimension { decoder: 24, code: 26 })
    ));
    assert!(matches!(
        run_ber(&Decoder::Uncoded, &code, &BerConfig::new(vec![], 0)),
        Err(BenchError::EmptySweep)
    ));
}

#[test]
fn calibration_passes_and_can_fail() {
    let cal = calibrate(&[4.0, 6.0], 2000, 0.1, 1).unwrap();
    assert!(cal.valid, "{cal:?}");
    assert!(cal.points.iter().all(|p| p.bit_errors >= 2000));
    let strict = calibrate(&[4.0], 200, 1e-9, 1).unwrap();
    assert!(!strict.valid);
}

#[test]
fn timing_report_shape() {
    let model = ModelConfig {
        d_model: 8,
        heads: 2,
        blocks: 1,
        ..ModelConfig::new(1, 1, AttentionKind::Standard)
    };
    let decoders = [
        TimingDecoder::Bp(1),
        TimingDecoder::Transformer(AttentionKind::Standard),
        TimingDecoder::Transformer(AttentionKind::Linear),
    ];
    let r = run_timing(&decoders, &[24, 48], 2, 5, &model, 0).unwrap();
    assert_eq!(r.cells.len(), 6);
    for c in &r.cells {
        assert_eq!(c.repetitions, 5);
        assert!(c.q1 <= c.median && c.median <= c.q3 && c.median > 0.0);
    }
    assert_eq!(r.slopes.len(), 3);
    assert!(r.slope("bp:1").is_some());
}

#[test]
fn attention_layer_scaling_orders_like_flop_counts() {
    let sizes = [128, 256, 512];
    let r = run_attention_timing(&sizes, 64, 1, 2, 8, 5, 0).unwrap();
    let std_slope = r.slope("attention-standard").unwrap();
    let lin_slope = r.slope("attention-linear").unwrap();
    assert!(std_slope > lin_slope, "{std_slope} vs {lin_slope}");
    for &n in &sizes[1..] {
        assert!(attention_flops(1, 2, n, 8) > linear_attention_flops(1, 2, n, 64, 8));
    }
}

#[test]
fn gradient_suite_passes() {
    let results = gradsuite::run_suite(0).unwrap();
    assert!(results.len() >= 25);
    for r in &results {
        assert!(r.passes(), "{}: {:e}", r.name, r.result.max_rel_error);
    }
}
