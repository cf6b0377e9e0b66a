//! Shared oracles for the integration suites.
#![allow(dead_code)]

use diffmotion::autodiff::{Tape, Var};
use diffmotion::generator::{GeneratorConfig, RefinementConfig, TransformerConfig};
use diffmotion::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Op = dyn for<'t> Fn(&'t Tape, &[Var<'t>]) -> diffmotion::Result<Var<'t>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::randn(shape, rng)
}

/// Values bounded away from zero, for division and `abs`.
pub fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.5..2.0);
            if rng.gen::<bool>() { m } else { -m }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

/// Scalar `sum(op(inputs) * probe)` on a fresh tape.
fn probed<'t>(tape: &'t Tape, op: &Op, inputs: &[Tensor], probe: &Tensor, grad: bool) -> (Var<'t>, Vec<Var<'t>>) {
    let vars: Vec<Var<'t>> = inputs.iter().map(|t| tape.leaf(t.clone(), grad)).collect();
    let out = op(tape, &vars).expect("op");
    let loss = out.mul(tape.constant(probe.clone())).unwrap().sum().unwrap();
    (loss, vars)
}

/// Relative error `||a - n|| / max(||a|| + ||n||, 1e-12)` between the
/// analytic gradient and central differences, over all inputs jointly.
pub fn fd_rel_err(op: &Op, inputs: &[Tensor], probe_seed: u64, h: f64) -> f64 {
    let probe_shape = {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        op(&tape, &vars).expect("op").shape()
    };
    let probe = randn(&probe_shape, &mut rng(probe_seed));
    let tape = Tape::new();
    let (loss, vars) = probed(&tape, op, inputs, &probe, true);
    let grads = tape.backward(loss).unwrap();
    let analytic: Vec<f64> = vars
        .iter()
        .zip(inputs)
        .flat_map(|(v, t)| grads.get_or_zeros(*v, t.shape()).data().to_vec())
        .collect();
    let eval = |ins: &[Tensor]| {
        let tape = Tape::new();
        probed(&tape, op, ins, &probe, false).0.value().item()
    };
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut work = inputs.to_vec();
    for i in 0..inputs.len() {
        for k in 0..inputs[i].numel() {
            let orig = work[i].data()[k];
            work[i].data_mut()[k] = orig + h;
            let up = eval(&work);
            work[i].data_mut()[k] = orig - h;
            let down = eval(&work);
            work[i].data_mut()[k] = orig;
            numeric.push((up - down) / (2.0 * h));
        }
    }
    rel(&analytic, &numeric)
}

pub fn rel(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / (norm(a) + norm(b)).max(1e-12)
}

/// Small generator: one encoder layer, two refinement stages.
pub fn tiny_generator_config(joints: usize, history: usize, future: usize) -> GeneratorConfig {
    GeneratorConfig {
        transformer: TransformerConfig {
            layers: 1,
            latent_dim: 8,
            heads: 2,
            ff_dim: 12,
            dropout: 0.1,
        },
        refinement: RefinementConfig {
            stages: 2,
            blocks_per_stage: 2,
            latent_dim: 6,
            dropout: 0.5,
            dct_keep: None,
        },
        history,
        future,
        joints,
    }
}

// ---- brute-force metric oracles over raw [frames][joints][3] arrays ----

pub type Seq = Vec<Vec<[f64; 3]>>;

pub fn to_seq(t: &Tensor) -> Seq {
    let (f, j) = (t.shape()[0], t.shape()[1]);
    (0..f)
        .map(|a| (0..j).map(|b| {
            let o = (a * j + b) * 3;
            [t.data()[o], t.data()[o + 1], t.data()[o + 2]]
        }).collect())
        .collect()
}

fn pose_dist(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let mut s = 0.0;
    for (p, q) in a.iter().zip(b) {
        for c in 0..3 {
            s += (p[c] - q[c]).powi(2);
        }
    }
    s.sqrt()
}

fn seq_dist(a: &Seq, b: &Seq) -> f64 {
    let mut s = 0.0;
    for (pa, pb) in a.iter().zip(b) {
        for (p, q) in pa.iter().zip(pb) {
            for c in 0..3 {
                s += (p[c] - q[c]).powi(2);
            }
        }
    }
    s.sqrt()
}

pub fn oracle_apd(samples: &[Seq]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut pairs = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                total += seq_dist(&samples[i], &samples[j]);
                pairs += 1.0;
            }
        }
    }
    total / pairs
}

pub fn oracle_ade(samples: &[Seq], gt: &Seq) -> f64 {
    let mut best = f64::MAX;
    for s in samples {
        let mut err = 0.0;
        for f in 0..gt.len() {
            err += pose_dist(&s[f], &gt[f]);
        }
        best = best.min(err / gt.len() as f64);
    }
    best
}

pub fn oracle_fde(samples: &[Seq], gt: &Seq) -> f64 {
    let last = gt.len() - 1;
    let mut best = f64::MAX;
    for s in samples {
        best = best.min(pose_dist(&s[last], &gt[last]));
    }
    best
}

pub fn oracle_groups(histories: &[Seq], delta: f64) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for a in 0..histories.len() {
        let mut g = Vec::new();
        for b in 0..histories.len() {
            let la = &histories[a][histories[a].len() - 1];
            let lb = &histories[b][histories[b].len() - 1];
            if a == b || pose_dist(la, lb) <= delta {
                g.push(b);
            }
        }
        out.push(g);
    }
    out
}

pub fn oracle_mm(samples: &[Seq], group: &[&Seq], metric: fn(&[Seq], &Seq) -> f64) -> f64 {
    let mut total = 0.0;
    for g in group {
        total += metric(samples, g);
    }
    total / group.len() as f64
}

pub fn oracle_apde(samples: &[Seq], group: &[&Seq]) -> f64 {
    let owned: Vec<Seq> = group.iter().map(|g| (*g).clone()).collect();
    (oracle_apd(&owned) - oracle_apd(samples)).abs()
}

fn mean_displacement(seqs: &[&Seq]) -> Vec<f64> {
    let frames = seqs[0].len();
    let mut d = vec![0.0; frames - 1];
    for s in seqs {
        for f in 0..frames - 1 {
            d[f] += pose_dist(&s[f + 1], &s[f]) / seqs.len() as f64;
        }
    }
    d
}

pub fn oracle_cmd(pred: &[&Seq], reference: &[&Seq]) -> f64 {
    let (p, r) = (mean_displacement(pred), mean_displacement(reference));
    let frames = p.len() + 1;
    let mut total = 0.0;
    for f in 1..frames {
        total += (frames - f) as f64 * (p[f - 1] - r[f - 1]).abs();
    }
    total
}

// ---- differentiable op catalogue for finite-difference checks ----

pub struct OpCase {
    pub name: &'static str,
    pub op: Box<Op>,
    pub inputs: fn(&mut ChaCha8Rng) -> Vec<Tensor>,
}

fn op<F>(f: F) -> Box<Op>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> diffmotion::Result<Var<'t>> + 'static,
{
    Box::new(f)
}

fn case(name: &'static str, op: Box<Op>, inputs: fn(&mut ChaCha8Rng) -> Vec<Tensor>) -> OpCase {
    OpCase { name, op, inputs }
}

pub fn op_catalogue() -> Vec<OpCase> {
    use diffmotion::dct::DctBasis;
    use diffmotion::generator::{gcn_block, Activation, GcnBlockSpec, GcnWeights, Mode};
    vec![
        case("add_broadcast", op(|_, v| v[0].add(v[1])), |r| vec![randn(&[2, 3, 4], r), randn(&[4], r)]),
        case("sub_broadcast", op(|_, v| v[0].sub(v[1])), |r| vec![randn(&[2, 3, 4], r), randn(&[3, 1], r)]),
        case("mul", op(|_, v| v[0].mul(v[1])), |r| vec![randn(&[3, 4], r), randn(&[3, 4], r)]),
        case("mul_broadcast_lhs", op(|_, v| v[0].mul(v[1])), |r| vec![randn(&[1, 4], r), randn(&[3, 4], r)]),
        case("div", op(|_, v| v[0].div(v[1])), |r| vec![randn(&[3, 4], r), away_from_zero(&[1, 4], r)]),
        case("scale", op(|_, v| v[0].scale(-1.7)), |r| vec![randn(&[5], r)]),
        case("add_scalar", op(|_, v| v[0].add_scalar(0.3)?.mul(v[0])), |r| vec![randn(&[5], r)]),
        case("matmul", op(|_, v| v[0].matmul(v[1])), |r| vec![randn(&[3, 4], r), randn(&[4, 5], r)]),
        case("matmul_batched", op(|_, v| v[0].matmul(v[1])), |r| vec![randn(&[2, 3, 4], r), randn(&[2, 4, 2], r)]),
        case("matmul_shared_rhs", op(|_, v| v[0].matmul(v[1])), |r| vec![randn(&[2, 3, 4], r), randn(&[4, 2], r)]),
        case("permute", op(|_, v| v[0].permute(&[2, 0, 1])?.mul(v[1])), |r| vec![randn(&[2, 3, 4], r), randn(&[4, 2, 3], r)]),
        case("transpose", op(|_, v| v[0].transpose()), |r| vec![randn(&[3, 5], r)]),
        case("reshape", op(|_, v| v[0].reshape(&[6, 2])?.matmul(v[1])), |r| vec![randn(&[3, 4], r), randn(&[2, 3], r)]),
        case("softmax_last", op(|_, v| v[0].softmax(1)), |r| vec![randn(&[3, 5], r)]),
        case("softmax_inner", op(|_, v| v[0].softmax(1)), |r| vec![randn(&[2, 4, 3], r)]),
        case("layer_norm", op(|_, v| v[0].layer_norm(v[1], v[2], 1e-5)), |r| {
            vec![randn(&[3, 6], r), randn(&[6], r), randn(&[6], r)]
        }),
        case("gelu", op(|_, v| v[0].gelu()), |r| vec![randn(&[4, 3], r)]),
        case("tanh", op(|_, v| v[0].tanh()), |r| vec![randn(&[4, 3], r)]),
        case("abs", op(|_, v| v[0].abs()), |r| vec![away_from_zero(&[4, 3], r)]),
        case("sum", op(|_, v| v[0].sum()?.mul(v[0].mean()?)), |r| vec![randn(&[3, 2], r)]),
        case("slice_rows", op(|_, v| v[0].slice_rows(1, 3)), |r| vec![randn(&[4, 2, 3], r)]),
        case("concat_rows", op(|t, v| t.concat_rows(&[v[1], v[0], v[1]])), |r| {
            vec![randn(&[2, 3], r), randn(&[1, 3], r)]
        }),
        case("dropout", op(|_, v| v[0].dropout(0.4, &mut rng(5))), |r| vec![randn(&[6, 4], r)]),
        case("dct_forward", op(|t, v| {
            let basis = t.constant(DctBasis::new(6)?.analysis().clone());
            DctBasis::forward_var(basis, v[0])
        }), |r| vec![randn(&[6, 4], r)]),
        case("dct_inverse", op(|t, v| {
            let basis = t.constant(DctBasis::new(6)?.analysis().transpose2());
            DctBasis::inverse_var(basis, v[0])
        }), |r| vec![randn(&[6, 4], r)]),
        case("gcn_block", op(|_, v| {
            let w = GcnWeights { adjacency: v[1], weight: v[2], bias: v[3], norm: Some((v[4], v[5])) };
            let spec = GcnBlockSpec { activation: Activation::Tanh, normalize: true, dropout: 0.0, residual: true };
            gcn_block(v[0], &w, spec, &mut Mode::Eval)
        }), |r| {
            vec![randn(&[6, 5], r), randn(&[6, 6], r), randn(&[5, 5], r), randn(&[5], r), randn(&[5], r), randn(&[5], r)]
        }),
    ]
}
