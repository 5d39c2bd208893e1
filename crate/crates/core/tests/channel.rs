use ecctlin::channel::{
    apply_awgn, demap_llr, ebno_to_n0, map_bits, q_function, ChannelConfig, Modulated, Modulation, Symbols, LLR_CLIP,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SAMPLES: usize = 1_000_000;

fn noise_samples(seed: u64) -> Vec<f64> {
    let cfg = ChannelConfig::new(Modulation::Bpsk, 1.0).unwrap();
    let x = map_bits(&vec![0u8; SAMPLES], &cfg);
    let y = apply_awgn(&x, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let Symbols::Real(y) = y.symbols else {
        panic!("BPSK is real")
    };
    y.iter().map(|v| v - 1.0).collect()
}

#[test]
fn bpsk_noise_variance_is_half_n0() {
    let w = noise_samples(11);
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (w.len() - 1) as f64;
    assert!((var - 0.5).abs() < 0.005, "variance {var}");
    let se = (var / w.len() as f64).sqrt();
    assert!(mean.abs() < 4.0 * se, "mean {mean} vs se {se}");
}

#[test]
fn complex_noise_splits_evenly() {
    let cfg = ChannelConfig::new(Modulation::Qpsk, 1.0).unwrap();
    let x = map_bits(&vec![0u8; 400_000], &cfg);
    let y = apply_awgn(&x, 1.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let (Symbols::Complex(a), Symbols::Complex(b)) = (&x.symbols, &y.symbols) else {
        panic!()
    };
    let count = a.len() as f64;
    let var_re = a.iter().zip(b).map(|(p, q)| (q - p).re.powi(2)).sum::<f64>() / count;
    let var_im = a.iter().zip(b).map(|(p, q)| (q - p).im.powi(2)).sum::<f64>() / count;
    assert!(
        (var_re - 0.5).abs() < 0.01 && (var_im - 0.5).abs() < 0.01,
        "{var_re} {var_im}"
    );
}

#[test]
fn uncoded_bpsk_ber_matches_q_function() {
    let cfg = ChannelConfig::new(Modulation::Bpsk, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for ebno_db in [2.0, 4.0] {
        let n0 = cfg.n0(ebno_db).unwrap();
        let bits: Vec<u8> = (0..SAMPLES).map(|_| rng.random::<bool>() as u8).collect();
        let y = apply_awgn(&map_bits(&bits, &cfg), n0, &mut rng).unwrap();
        let hard = demap_llr(&y, n0, &cfg).unwrap().hard_decision();
        let errors = hard.iter().zip(&bits).filter(|(a, b)| a != b).count();
        let ber = errors as f64 / SAMPLES as f64;
        let expect = q_function((2.0 * 10f64.powf(ebno_db / 10.0)).sqrt());
        assert!(
            ((ber - expect) / expect).abs() < 0.05,
            "{ebno_db} dB: {ber} vs {expect}"
        );
    }
}

#[test]
fn sixteen_qam_hard_decisions_roundtrip_at_high_snr() {
    let cfg = ChannelConfig::new(Modulation::Qam16, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let bits: Vec<u8> = (0..4002).map(|_| rng.random::<bool>() as u8).collect();
    let n0 = cfg.n0(30.0).unwrap();
    let y = apply_awgn(&map_bits(&bits, &cfg), n0, &mut rng).unwrap();
    assert_eq!(y.pad, 2);
    let llr = demap_llr(&y, n0, &cfg).unwrap();
    assert_eq!(llr.hard_decision(), bits);
}

proptest! {
    #[test]
    fn n0_strictly_decreasing(a in -10.0f64..40.0, delta in 0.01f64..10.0, r in 0.05f64..1.0) {
        prop_assert!(ebno_to_n0(a + delta, r, 1.0, 1.0).unwrap() < ebno_to_n0(a, r, 1.0, 1.0).unwrap());
    }

    #[test]
    fn bpsk_llr_monotone_and_signed(y1 in -10.0f64..10.0, y2 in -10.0f64..10.0, n0 in 0.01f64..5.0) {
        let cfg = ChannelConfig::new(Modulation::Bpsk, 1.0).unwrap();
        let m = Modulated { symbols: Symbols::Real(vec![y1, y2]), pad: 0 };
        let l = demap_llr(&m, n0, &cfg).unwrap();
        let (l1, l2) = (l.as_slice()[0], l.as_slice()[1]);
        if y1 <= y2 { prop_assert!(l1 <= l2); } else { prop_assert!(l1 >= l2); }
        if y1 != 0.0 && l1 != 0.0 { prop_assert_eq!(l1.signum(), y1.signum()); }
    }

    #[test]
    fn llrs_never_exceed_clip(seed in any::<u64>(), n0 in 1e-4f64..4.0, modulation in prop_oneof![Just(Modulation::Bpsk), Just(Modulation::Qpsk), Just(Modulation::Qam16)]) {
        let cfg = ChannelConfig::new(modulation, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bits: Vec<u8> = (0..63).map(|_| rng.random::<bool>() as u8).collect();
        let y = apply_awgn(&map_bits(&bits, &cfg), n0, &mut rng).unwrap();
        let llr = demap_llr(&y, n0, &cfg).unwrap();
        prop_assert_eq!(llr.len(), 63);
        prop_assert!(llr.as_slice().iter().all(|l| l.abs() <= LLR_CLIP));
    }
}
