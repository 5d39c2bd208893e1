use std::str::FromStr;
use std::time::Instant;

use autodiff::{Graph, Mask, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bp::BpDecoder;
use crate::channel::{build_decoder_input, transmit, ChannelConfig, LlrVector, Modulation};
use crate::codes::LinearCode;
use crate::transformer::{attention, batch_tensor, linear_attention, AttentionKind, Model, ModelConfig};

use super::BenchError;

pub const MIN_REPETITIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimingDecoder {
    Bp(usize),
    Transformer(AttentionKind),
}

impl TimingDecoder {
    pub fn name(&self) -> String {
        match self {
            TimingDecoder::Bp(i) => format!("bp:{i}"),
            TimingDecoder::Transformer(kind) => format!("transformer-{}", kind.name()),
        }
    }
}

impl FromStr for TimingDecoder {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(iters) = s.strip_prefix("bp:") {
            return match iters.parse::<usize>() {
                Ok(i) if i > 0 => Ok(TimingDecoder::Bp(i)),
                _ => Err(BenchError::Config(format!("bad BP iteration count in `{s}`"))),
            };
        }
        s.parse::<AttentionKind>()
            .map(TimingDecoder::Transformer)
            .map_err(|_| BenchError::Config(format!("unknown timing decoder `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingCell {
    pub decoder: String,
    pub n: usize,
    pub batch: usize,
    pub repetitions: usize,
    /// Seconds per decoded batch over the warm runs.
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl TimingCell {
    fn from_samples(decoder: String, n: usize, batch: usize, samples: &mut [f64]) -> Self {
        samples.sort_by(f64::total_cmp);
        TimingCell {
            decoder,
            n,
            batch,
            repetitions: samples.len(),
            median: quantile(samples, 0.5),
            q1: quantile(samples, 0.25),
            q3: quantile(samples, 0.75),
        }
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TimingReport {
    pub cells: Vec<TimingCell>,
    /// Least-squares slope of `ln median` against `ln n`, per decoder.
    pub slopes: Vec<(String, f64)>,
}

impl TimingReport {
    pub fn slope(&self, decoder: &str) -> Option<f64> {
        self.slopes.iter().find(|(d, _)| d == decoder).map(|&(_, s)| s)
    }

    fn finish(cells: Vec<TimingCell>) -> Self {
        let mut names: Vec<String> = Vec::new();
        for c in &cells {
            if !names.contains(&c.decoder) {
                names.push(c.decoder.clone());
            }
        }
        let slopes = names
            .into_iter()
            .filter_map(|name| {
                let pts: Vec<(f64, f64)> = cells
                    .iter()
                    .filter(|c| c.decoder == name)
                    .map(|c| (c.n as f64, c.median))
                    .collect();
                fit_loglog_slope(&pts).map(|s| (name, s))
            })
            .collect();
        TimingReport { cells, slopes }
    }
}

/// Linear interpolation between order statistics of sorted `xs`.
fn quantile(xs: &[f64], q: f64) -> f64 {
    let pos = q * (xs.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    xs[lo] + (xs[hi] - xs[lo]) * (pos - lo as f64)
}

/// Least-squares slope of `ln y` on `ln x`; `None` with fewer than two
/// distinct sizes or non-positive values.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return None;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let len = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / len;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / len;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Runs `f` once to warm up, then `reps` timed times.
fn time_runs(reps: usize, mut f: impl FnMut() -> Result<(), BenchError>) -> Result<Vec<f64>, BenchError> {
    f()?;
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        f()?;
        samples.push(start.elapsed().as_secs_f64());
    }
    Ok(samples)
}

fn single_worker<R: Send>(f: impl FnOnce() -> R + Send) -> Result<R, BenchError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| BenchError::Config(e.to_string()))?;
    Ok(pool.install(f))
}

/// Times forward decoding of one fixed batch per decoder and code length.
/// Codes are (3, 6)-regular; model and code construction and one warm-up
/// batch are excluded. Transformers use untrained weights with `model`
/// overriding the default architecture sizes.
pub fn run_timing(
    decoders: &[TimingDecoder],
    sizes: &[usize],
    batch: usize,
    reps: usize,
    model: &ModelConfig,
    seed: u64,
) -> Result<TimingReport, BenchError> {
    if reps < MIN_REPETITIONS {
        return Err(BenchError::Config(format!(
            "at least {MIN_REPETITIONS} repetitions required"
        )));
    }
    if batch == 0 || sizes.is_empty() || decoders.is_empty() {
        return Err(BenchError::Config("empty timing grid".into()));
    }
    let mut cells = Vec::new();
    for &n in sizes {
        let code = LinearCode::regular(n, 3, 6, seed)?;
        let channel = ChannelConfig::new(Modulation::Bpsk, code.rate().value())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let llrs = (0..batch)
            .map(|_| {
                let info: Vec<u8> = (0..code.k()).map(|_| rng.random::<bool>() as u8).collect();
                Ok(transmit(&code.encode(&info)?, &channel, 2.0, &mut rng)?)
            })
            .collect::<Result<Vec<LlrVector>, BenchError>>()?;
        for &dec in decoders {
            let mut samples = match dec {
                TimingDecoder::Bp(iters) => {
                    let bp = BpDecoder::new(code.pcm(), iters).without_early_stop();
                    single_worker(|| {
                        time_runs(reps, || {
                            bp.decode_batch(&llrs)?;
                            Ok(())
                        })
                    })??
                }
                TimingDecoder::Transformer(kind) => {
                    let cfg = ModelConfig {
                        n: code.n(),
                        m: code.m(),
                        attention: kind,
                        ..model.clone()
                    };
                    let m = Model::<f32>::new(cfg, code.pcm())?;
                    let inputs = llrs
                        .iter()
                        .map(|l| build_decoder_input(l, code.pcm()))
                        .collect::<Result<Vec<_>, _>>()?;
                    let x = batch_tensor::<f32>(&inputs, m.config().seq_len())?;
                    single_worker(|| {
                        time_runs(reps, || {
                            m.logits(&x)?;
                            Ok(())
                        })
                    })??
                }
            };
            cells.push(TimingCell::from_samples(dec.name(), n, batch, &mut samples));
        }
    }
    Ok(TimingReport::finish(cells))
}

/// Times a single attention layer on random `(batch, heads, N, head_dim)`
/// inputs: standard attention with an `N x N` mask and linear attention
/// with sequence projections to `proj` and an `N x proj` mask.
pub fn run_attention_timing(
    sizes: &[usize],
    proj: usize,
    batch: usize,
    heads: usize,
    head_dim: usize,
    reps: usize,
    seed: u64,
) -> Result<TimingReport, BenchError> {
    if reps < MIN_REPETITIONS {
        return Err(BenchError::Config(format!(
            "at least {MIN_REPETITIONS} repetitions required"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random = |shape: &[usize]| {
        let len = shape.iter().product();
        Tensor::new(shape, (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect()).expect("shape")
    };
    let mut cells = Vec::new();
    for &n in sizes {
        let shape = [batch, heads, n, head_dim];
        let (q, k, v) = (random(&shape), random(&shape), random(&shape));
        let (pk, pv) = (random(&[n, proj]), random(&[n, proj]));
        let full = Mask::ones(&[n, n]);
        let low = Mask::ones(&[n, proj]);
        let mut standard = single_worker(|| {
            time_runs(reps, || {
                let mut g = Graph::<f32>::new();
                let (qi, ki, vi) = (g.constant(q.clone()), g.constant(k.clone()), g.constant(v.clone()));
                attention(&mut g, qi, ki, vi, &full)?;
                Ok(())
            })
        })??;
        let mut linear = single_worker(|| {
            time_runs(reps, || {
                let mut g = Graph::<f32>::new();
                let (qi, ki, vi) = (g.constant(q.clone()), g.constant(k.clone()), g.constant(v.clone()));
                let (pki, pvi) = (g.constant(pk.clone()), g.constant(pv.clone()));
                linear_attention(&mut g, qi, ki, vi, pki, pvi, &low)?;
                Ok(())
            })
        })??;
        cells.push(TimingCell::from_samples(
            "attention-standard".into(),
            n,
            batch,
            &mut standard,
        ));
        cells.push(TimingCell::from_samples(
            "attention-linear".into(),
            n,
            batch,
            &mut linear,
        ));
    }
    Ok(TimingReport::finish(cells))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_laws() {
        let pts: Vec<(f64, f64)> = [128.0, 256.0, 512.0].iter().map(|&n: &f64| (n, 3.0 * n * n)).collect();
        assert!((fit_loglog_slope(&pts).unwrap() - 2.0).abs() < 1e-12);
        assert!(fit_loglog_slope(&pts[..1]).is_none());
        assert!(fit_loglog_slope(&[(1.0, 0.0), (2.0, 1.0)]).is_none());
    }

    #[test]
    fn quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&xs, 0.5), 3.0);
        assert_eq!(quantile(&xs, 0.25), 2.0);
        assert_eq!(quantile(&[1.0, 2.0], 0.5), 1.5);
    }

    #[test]
    fn decoder_names_parse() {
        assert_eq!("bp:1".parse::<TimingDecoder>().unwrap(), TimingDecoder::Bp(1));
        assert_eq!(
            "linear".parse::<TimingDecoder>().unwrap(),
            TimingDecoder::Transformer(AttentionKind::Linear)
        );
        assert!("bp:x".parse::<TimingDecoder>().is_err());
        assert!("gru".parse::<TimingDecoder>().is_err());
    }

    #[test]
    fn too_few_repetitions_rejected() {
        let cfg = ModelConfig::new(12, 6, AttentionKind::Standard);
        assert!(run_timing(&[TimingDecoder::Bp(1)], &[12], 4, 4, &cfg, 0).is_err());
    }
}
