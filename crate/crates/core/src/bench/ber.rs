use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::channel::{q_function, transmit, ChannelConfig, Modulation};
use crate::codes::{save_alist, LinearCode};

use super::{config_hash, BenchError, Decoder};

/// Per-point stopping: whichever of the error target, bit budget or
/// wall-clock cap is reached first.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StopRule {
    pub target_errors: u64,
    pub max_bits: u64,
    /// Wall-clock cap per point. Makes results timing dependent.
    pub max_seconds: Option<f64>,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            target_errors: 100,
            max_bits: 10_000_000,
            max_seconds: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BerConfig {
    pub ebno_db: Vec<f64>,
    pub stop: StopRule,
    /// Words per Monte Carlo batch.
    pub batch: usize,
    pub seed: u64,
    pub modulation: Modulation,
    /// Report zero seconds so that output depends only on the configuration.
    pub omit_timing: bool,
}

impl BerConfig {
    pub fn new(ebno_db: Vec<f64>, seed: u64) -> Self {
        BerConfig {
            ebno_db,
            stop: StopRule::default(),
            batch: 256,
            seed,
            modulation: Modulation::Bpsk,
            omit_timing: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BerPoint {
    pub ebno_db: f64,
    pub bits: u64,
    pub bit_errors: u64,
    pub block_errors: u64,
    pub blocks: u64,
    pub seconds: f64,
}

impl BerPoint {
    pub fn ber(&self) -> f64 {
        self.bit_errors as f64 / self.bits as f64
    }

    pub fn bler(&self) -> f64 {
        self.block_errors as f64 / self.blocks as f64
    }

    /// Binomial standard error of the BER estimate.
    pub fn ber_std_error(&self) -> f64 {
        let p = self.ber();
        (p * (1.0 - p) / self.bits as f64).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CalibrationPoint {
    pub ebno_db: f64,
    pub ber: f64,
    pub theory: f64,
    pub bit_errors: u64,
    pub relative_error: f64,
}

/// Uncoded BPSK against `Q(sqrt(2 Eb/N0))`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Calibration {
    pub points: Vec<CalibrationPoint>,
    pub tolerance: f64,
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BerReport {
    pub decoder: String,
    pub n: usize,
    pub k: usize,
    pub config: Vec<(String, String)>,
    pub config_hash: String,
    pub points: Vec<BerPoint>,
    /// Eb/N0 values whose BER exceeds the previous point's by more than
    /// three combined standard errors.
    pub monotonicity_violations: Vec<f64>,
    pub calibration: Option<Calibration>,
}

impl BerReport {
    /// False when a failed channel calibration is attached.
    pub fn comparisons_valid(&self) -> bool {
        self.calibration.as_ref().is_none_or(|c| c.valid)
    }
}

fn monotonicity_violations(points: &[BerPoint]) -> Vec<f64> {
    let mut sorted: Vec<&BerPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.ebno_db.total_cmp(&b.ebno_db));
    sorted
        .windows(2)
        .filter(|w| {
            let se = (w[0].ber_std_error().powi(2) + w[1].ber_std_error().powi(2)).sqrt();
            w[1].ber() > w[0].ber() + 3.0 * se
        })
        .map(|w| w[1].ebno_db)
        .collect()
}

fn batch_rng(seed: u64, point: usize, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 40) | batch);
    rng
}

/// Streams batches through encode, channel, decoder and comparison for
/// every Eb/N0 point. Batch `b` of point `p` draws from its own ChaCha
/// stream, so reports depend only on the configuration.
pub fn run_ber(decoder: &Decoder, code: &LinearCode, cfg: &BerConfig) -> Result<BerReport, BenchError> {
    if cfg.ebno_db.is_empty() {
        return Err(BenchError::EmptySweep);
    }
    if cfg.batch == 0 || cfg.stop.max_bits == 0 {
        return Err(BenchError::Config("batch size and bit budget must be positive".into()));
    }
    decoder.check_code(code)?;
    let uncoded = matches!(decoder, Decoder::Uncoded);
    let (n, k) = if uncoded {
        (code.n(), code.n())
    } else {
        (code.n(), code.k())
    };
    let rate = k as f64 / n as f64;
    let channel = ChannelConfig::new(cfg.modulation, rate)?;

    let mut points = Vec::with_capacity(cfg.ebno_db.len());
    for (p, &ebno) in cfg.ebno_db.iter().enumerate() {
        let start = Instant::now();
        let mut pt = BerPoint {
            ebno_db: ebno,
            bits: 0,
            bit_errors: 0,
            block_errors: 0,
            blocks: 0,
            seconds: 0.0,
        };
        let mut b = 0u64;
        loop {
            let mut rng = batch_rng(cfg.seed, p, b);
            let mut words = Vec::with_capacity(cfg.batch);
            let mut llrs = Vec::with_capacity(cfg.batch);
            for _ in 0..cfg.batch {
                let word = if uncoded {
                    (0..n).map(|_| rng.random::<bool>() as u8).collect()
                } else {
                    let info: Vec<u8> = (0..k).map(|_| rng.random::<bool>() as u8).collect();
                    code.encode(&info)?
                };
                llrs.push(transmit(&word, &channel, ebno, &mut rng)?);
                words.push(word);
            }
            let decoded = decoder.decode_batch(&llrs, code)?;
            for (w, d) in words.iter().zip(&decoded) {
                let errs = w.iter().zip(d).filter(|(a, b)| a != b).count() as u64;
                pt.bit_errors += errs;
                pt.block_errors += (errs > 0) as u64;
            }
            pt.bits += (cfg.batch * n) as u64;
            pt.blocks += cfg.batch as u64;
            b += 1;
            let timed_out = cfg
                .stop
                .max_seconds
                .is_some_and(|cap| start.elapsed().as_secs_f64() >= cap);
            if pt.bit_errors >= cfg.stop.target_errors || pt.bits >= cfg.stop.max_bits || timed_out {
                break;
            }
        }
        pt.seconds = if cfg.omit_timing {
            0.0
        } else {
            start.elapsed().as_secs_f64()
        };
        points.push(pt);
    }

    let ebno_list: Vec<String> = cfg.ebno_db.iter().map(|e| e.to_string()).collect();
    let mut config = vec![
        ("decoder".to_string(), decoder.name()),
        ("code".to_string(), code.spec().describe()),
        ("code.alist_sha256".to_string(), {
            use sha2::{Digest, Sha256};
            hex::encode(Sha256::digest(save_alist(code.pcm()).as_bytes()))
        }),
        ("n".to_string(), n.to_string()),
        ("k".to_string(), k.to_string()),
        ("modulation".to_string(), cfg.modulation.name().to_string()),
        ("es".to_string(), channel.es.to_string()),
        ("llr_clip".to_string(), channel.llr_clip.to_string()),
        ("ebno_db".to_string(), ebno_list.join(",")),
        ("batch".to_string(), cfg.batch.to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
        ("stop.target_errors".to_string(), cfg.stop.target_errors.to_string()),
        ("stop.max_bits".to_string(), cfg.stop.max_bits.to_string()),
        (
            "stop.max_seconds".to_string(),
            cfg.stop.max_seconds.map_or("none".to_string(), |s| s.to_string()),
        ),
    ];
    config.extend(decoder.provenance());
    let config_hash = config_hash(&config);
    Ok(BerReport {
        decoder: decoder.name(),
        n,
        k,
        config,
        config_hash,
        monotonicity_violations: monotonicity_violations(&points),
        points,
        calibration: None,
    })
}

/// Uncoded BPSK at each Eb/N0 until `target_errors` bit errors, compared
/// with the closed-form error probability.
pub fn calibrate(ebno_db: &[f64], target_errors: u64, tolerance: f64, seed: u64) -> Result<Calibration, BenchError> {
    let cfg = BerConfig {
        stop: StopRule {
            target_errors,
            max_bits: u64::MAX,
            max_seconds: None,
        },
        batch: 64,
        omit_timing: true,
        ..BerConfig::new(ebno_db.to_vec(), seed)
    };
    let probe = LinearCode::regular(1024, 3, 6, 0)?;
    let report = run_ber(&Decoder::Uncoded, &probe, &cfg)?;
    let points: Vec<CalibrationPoint> = report
        .points
        .iter()
        .map(|p| {
            let theory = q_function((2.0 * 10f64.powf(p.ebno_db / 10.0)).sqrt());
            CalibrationPoint {
                ebno_db: p.ebno_db,
                ber: p.ber(),
                theory,
                bit_errors: p.bit_errors,
                relative_error: (p.ber() - theory).abs() / theory,
            }
        })
        .collect();
    let valid = points.iter().all(|p| p.relative_error <= tolerance);
    Ok(Calibration {
        points,
        tolerance,
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(ebno: f64, bits: u64, errors: u64) -> BerPoint {
        BerPoint {
            ebno_db: ebno,
            bits,
            bit_errors: errors,
            block_errors: errors,
            blocks: bits,
            seconds: 0.0,
        }
    }

    #[test]
    fn monotonicity_flags_only_significant_rises() {
        let pts = [
            point(1.0, 10_000, 100),
            point(2.0, 10_000, 110),
            point(3.0, 10_000, 300),
        ];
        assert_eq!(monotonicity_violations(&pts), vec![3.0]);
    }

    #[test]
    fn derived_rates() {
        let p = point(0.0, 1000, 10);
        assert_eq!(p.ber(), 0.01);
        assert!((p.ber_std_error() - (0.01f64 * 0.99 / 1000.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empty_sweep_rejected() {
        let code = LinearCode::hamming_7_4();
        let cfg = BerConfig::new(vec![], 0);
        assert!(matches!(
            run_ber(&Decoder::Uncoded, &code, &cfg),
            Err(BenchError::EmptySweep)
        ));
    }
}
