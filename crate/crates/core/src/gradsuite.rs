//! 64-bit central finite-difference checks over every autodiff op and the
//! full decoder.

use autodiff::gradcheck::{check, GradCheck, DEFAULT_EPS};
use autodiff::{AutodiffError, Graph, Mask, NodeId, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{build_decoder_input, LlrVector};
use crate::codes::ParityCheckMatrix;
use crate::transformer::{
    attention, batch_tensor, build_mask, embed, linear_attention, resize_mask, AttentionKind, Model, ModelConfig,
    TransformerError,
};

pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct OpCheck {
    pub name: String,
    pub result: GradCheck,
}

impl OpCheck {
    pub fn passes(&self) -> bool {
        self.result.passes(TOLERANCE)
    }
}

type Build = Box<dyn Fn(&mut Graph<f64>, &[NodeId]) -> autodiff::Result<NodeId>>;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.5..1.5))
}

/// Values bounded away from zero, for ops with a kink there.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let x: f64 = rng.random_range(0.1..1.5);
        if rng.random::<bool>() {
            x
        } else {
            -x
        }
    })
}

/// Weighted sum with fixed pseudo-random weights.
fn probe(g: &mut Graph<f64>, x: NodeId, seed: u64) -> autodiff::Result<NodeId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Tensor::from_fn(g.shape(x), |_| rng.random_range(-1.0..1.0));
    let w = g.constant(w);
    let p = g.mul(x, w)?;
    g.sum_all(p)
}

fn unwrap_model(e: TransformerError) -> AutodiffError {
    match e {
        TransformerError::Autodiff(a) => a,
        other => AutodiffError::InvalidArgument {
            op: "model",
            msg: other.to_string(),
        },
    }
}

fn unary(
    name: &str,
    input: Tensor<f64>,
    op: fn(&mut Graph<f64>, NodeId) -> autodiff::Result<NodeId>,
) -> (String, Vec<Tensor<f64>>, Build) {
    (
        name.to_string(),
        vec![input],
        Box::new(move |g, x| {
            let y = op(g, x[0])?;
            probe(g, y, 11)
        }),
    )
}

fn cases(rng: &mut ChaCha8Rng) -> Vec<(String, Vec<Tensor<f64>>, Build)> {
    let mut cases: Vec<(String, Vec<Tensor<f64>>, Build)> = vec![
        (
            "add (broadcast)".into(),
            vec![random(&[2, 3, 4], rng), random(&[4], rng)],
            Box::new(|g, x| {
                let y = g.add(x[0], x[1])?;
                probe(g, y, 1)
            }),
        ),
        (
            "sub".into(),
            vec![random(&[3, 4], rng), random(&[3, 4], rng)],
            Box::new(|g, x| {
                let y = g.sub(x[0], x[1])?;
                probe(g, y, 2)
            }),
        ),
        (
            "mul (broadcast)".into(),
            vec![random(&[2, 3, 4], rng), random(&[3, 4], rng)],
            Box::new(|g, x| {
                let y = g.mul(x[0], x[1])?;
                probe(g, y, 3)
            }),
        ),
        (
            "scale".into(),
            vec![random(&[5], rng)],
            Box::new(|g, x| {
                let y = g.scale(x[0], -0.7)?;
                probe(g, y, 4)
            }),
        ),
        (
            "matmul".into(),
            vec![random(&[3, 5], rng), random(&[5, 2], rng)],
            Box::new(|g, x| {
                let y = g.matmul(x[0], x[1])?;
                probe(g, y, 5)
            }),
        ),
        (
            "matmul (batched)".into(),
            vec![random(&[2, 3, 4, 5], rng), random(&[2, 3, 5, 2], rng)],
            Box::new(|g, x| {
                let y = g.matmul(x[0], x[1])?;
                probe(g, y, 6)
            }),
        ),
        (
            "matmul (shared operand)".into(),
            vec![random(&[4, 3], rng), random(&[2, 3, 5], rng)],
            Box::new(|g, x| {
                let y = g.matmul(x[0], x[1])?;
                probe(g, y, 7)
            }),
        ),
        (
            "permute".into(),
            vec![random(&[2, 3, 4], rng)],
            Box::new(|g, x| {
                let y = g.permute(x[0], &[2, 0, 1])?;
                probe(g, y, 8)
            }),
        ),
        unary("transpose", random(&[2, 3, 4], rng), |g, x| g.transpose(x)),
        unary("reshape", random(&[2, 6], rng), |g, x| g.reshape(x, &[3, 4])),
        (
            "concat".into(),
            vec![random(&[2, 3], rng), random(&[2, 2], rng)],
            Box::new(|g, x| {
                let y = g.concat(&[x[0], x[1]], 1)?;
                probe(g, y, 9)
            }),
        ),
        unary("slice", random(&[3, 5], rng), |g, x| g.slice(x, 1, 1, 3)),
        unary("sum_axis", random(&[3, 4], rng), |g, x| g.sum_axis(x, 0)),
        unary("mean_axis", random(&[3, 4], rng), |g, x| g.mean_axis(x, 1)),
        unary("sum_all", random(&[3, 4], rng), |g, x| g.sum_all(x)),
        unary("mean_all", random(&[3, 4], rng), |g, x| g.mean_all(x)),
        unary("softmax", random(&[3, 5], rng), |g, x| g.softmax(x, 1)),
        unary("gelu", random(&[20], rng), |g, x| g.gelu(x)),
        unary("relu", away_from_zero(&[20], rng), |g, x| g.relu(x)),
        unary("sigmoid", random(&[20], rng), |g, x| g.sigmoid(x)),
        (
            "layer_norm".into(),
            vec![random(&[3, 6], rng), random(&[6], rng), random(&[6], rng)],
            Box::new(|g, x| {
                let y = g.layer_norm(x[0], 1, x[1], x[2], 1e-5)?;
                probe(g, y, 10)
            }),
        ),
    ];

    let keep: Vec<bool> = (0..20).map(|i| i % 3 != 1).collect();
    let mask = Mask::new(&[4, 5], keep).expect("mask shape");
    cases.push((
        "masked_fill + softmax".into(),
        vec![random(&[2, 4, 5], rng)],
        Box::new(move |g, x| {
            let y = g.masked_fill(x[0], &mask, -1e9)?;
            let y = g.softmax(y, 2)?;
            probe(g, y, 12)
        }),
    ));
    let targets = Tensor::from_fn(&[4, 5], |i| (i % 2) as f64);
    cases.push((
        "bce_with_logits".into(),
        vec![random(&[4, 5], rng)],
        Box::new(move |g, x| g.bce_with_logits(x[0], &targets)),
    ));
    cases.push((
        "embedding".into(),
        vec![random(&[2, 5], rng), random(&[5, 4], rng)],
        Box::new(|g, x| {
            let y = embed(g, x[0], x[1]).map_err(unwrap_model)?;
            probe(g, y, 13)
        }),
    ));

    let h = ParityCheckMatrix::hamming_7_4();
    let full = build_mask(&h).to_mask();
    cases.push((
        "attention".into(),
        vec![
            random(&[1, 2, 10, 4], rng),
            random(&[1, 2, 10, 4], rng),
            random(&[1, 2, 10, 4], rng),
        ],
        Box::new(move |g, x| {
            let y = attention(g, x[0], x[1], x[2], &full).map_err(unwrap_model)?;
            probe(g, y, 14)
        }),
    ));
    let low = resize_mask(&build_mask(&h), 2).expect("division 2").to_mask();
    cases.push((
        "linear attention".into(),
        vec![
            random(&[1, 2, 10, 4], rng),
            random(&[1, 2, 10, 4], rng),
            random(&[1, 2, 10, 4], rng),
            random(&[10, 5], rng),
            random(&[10, 5], rng),
        ],
        Box::new(move |g, x| {
            let y = linear_attention(g, x[0], x[1], x[2], x[3], x[4], &low).map_err(unwrap_model)?;
            probe(g, y, 15)
        }),
    ));
    cases
}

fn model_case(kind: AttentionKind, rng: &mut ChaCha8Rng) -> (String, Vec<Tensor<f64>>, Build) {
    let h = ParityCheckMatrix::hamming_7_4();
    let mut cfg = ModelConfig::new(7, 3, kind);
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.blocks = 1;
    cfg.seed = 5;
    let model = Model::<f64>::new(cfg, &h).expect("valid configuration");
    let inputs: Vec<_> = (0..3)
        .map(|_| {
            let llr = LlrVector::new((0..7).map(|_| rng.random_range(-6.0..6.0)).collect());
            build_decoder_input(&llr, &h).expect("length 7")
        })
        .collect();
    let x = batch_tensor::<f64>(&inputs, 10).expect("rectangular batch");
    let targets = Tensor::from_fn(&[3, 7], |i| (i % 3 == 0) as u8 as f64);
    let params = model.params().tensors().to_vec();
    (
        format!("model (1 block, {})", kind.name()),
        params,
        Box::new(move |g, ids| {
            let xn = g.constant(x.clone());
            let logits = model.forward(g, ids, xn).map_err(unwrap_model)?;
            g.bce_with_logits(logits, &targets)
        }),
    )
}

/// Every op, then the one-block decoder with both attention kinds on the
/// (7,4) Hamming code, all coordinates.
pub fn run_suite(seed: u64) -> autodiff::Result<Vec<OpCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all = cases(&mut rng);
    all.push(model_case(AttentionKind::Standard, &mut rng));
    all.push(model_case(AttentionKind::Linear, &mut rng));
    all.into_iter()
        .map(|(name, inputs, build)| {
            Ok(OpCheck {
                name,
                result: check(&inputs, DEFAULT_EPS, |g, x| build(g, x))?,
            })
        })
        .collect()
}
