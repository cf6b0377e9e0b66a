//! Forward pass of the denoiser `G(y_t, x, t) = R(x, F(y_t, t))`.

use rand::RngCore;

use super::config::GeneratorConfig;
use super::params::{BoundParams, GeneratorParams};
use crate::autodiff::{Tape, Var};
use crate::dct::DctBasis;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const LN_EPS: f64 = 1e-5;

/// Dropout is active only in `Train`.
pub enum Mode<'r> {
    Eval,
    Train(&'r mut dyn RngCore),
}

impl Mode<'_> {
    fn dropout<'t>(&mut self, v: Var<'t>, p: f64) -> Result<Var<'t>> {
        match self {
            Mode::Eval => Ok(v),
            Mode::Train(rng) => v.dropout(p, &mut **rng),
        }
    }
}

/// Standard sinusoidal code of a scalar position: even channels
/// `sin(pos / 10000^(2i/d))`, odd channels `cos` of the same argument.
pub fn sinusoidal_embedding(pos: f64, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|c| {
            let i = (c / 2) as f64;
            let arg = pos / 10000f64.powf(2.0 * i / dim as f64);
            if c % 2 == 0 {
                arg.sin()
            } else {
                arg.cos()
            }
        })
        .collect()
}

fn linear<'t>(p: &BoundParams<'t>, prefix: &str, x: Var<'t>) -> Result<Var<'t>> {
    x.matmul(p.get(&format!("{prefix}.w"))?)?
        .add(p.get(&format!("{prefix}.b"))?)
}

fn layer_norm<'t>(p: &BoundParams<'t>, prefix: &str, x: Var<'t>) -> Result<Var<'t>> {
    x.layer_norm(
        p.get(&format!("{prefix}.g"))?,
        p.get(&format!("{prefix}.b"))?,
        LN_EPS,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
}

/// Options for a single graph-convolution block.
#[derive(Debug, Clone, Copy)]
pub struct GcnBlockSpec {
    pub activation: Activation,
    pub normalize: bool,
    pub dropout: f64,
    /// Adds the block input when the feature width is unchanged.
    pub residual: bool,
}

/// Learnable tensors of one graph-convolution block.
pub struct GcnWeights<'t> {
    pub adjacency: Var<'t>,
    pub weight: Var<'t>,
    pub bias: Var<'t>,
    pub norm: Option<(Var<'t>, Var<'t>)>,
}

/// `act(norm(A·H·W + b))`, then dropout, plus `H` when widths match and
/// `spec.residual` is set.
pub fn gcn_block<'t>(
    features: Var<'t>,
    w: &GcnWeights<'t>,
    spec: GcnBlockSpec,
    mode: &mut Mode<'_>,
) -> Result<Var<'t>> {
    let fs = features.shape();
    let adj = w.adjacency.shape();
    if fs.len() != 2 || adj != [fs[0], fs[0]] {
        return Err(Error::shape("gcn_block", &fs, &adj));
    }
    let mut h = w.adjacency.matmul(features)?.matmul(w.weight)?.add(w.bias)?;
    if spec.normalize {
        let (g, b) = w
            .norm
            .ok_or_else(|| Error::InvalidArgument("gcn_block normalization needs gain/bias".into()))?;
        h = h.layer_norm(g, b, LN_EPS)?;
    }
    if spec.activation == Activation::Tanh {
        h = h.tanh()?;
    }
    h = mode.dropout(h, spec.dropout)?;
    if spec.residual && h.shape() == fs {
        h = h.add(features)?;
    }
    Ok(h)
}

/// Denoising network with its fixed positional and DCT constants.
#[derive(Debug, Clone)]
pub struct Generator {
    config: GeneratorConfig,
    params: GeneratorParams,
    max_step: usize,
    positional: Tensor,
    dct: DctBasis,
    synthesis: Tensor,
}

impl Generator {
    /// `max_step` is the diffusion step count `T` the time token accepts.
    pub fn new(config: GeneratorConfig, params: GeneratorParams, max_step: usize) -> Result<Self> {
        config.validate()?;
        let expected = super::params::param_shapes(&config);
        for (name, shape) in &expected {
            match params.get(name) {
                Some(p) if p.shape() == shape.as_slice() => {}
                Some(p) => {
                    return Err(Error::Config(format!(
                        "parameter {name} has shape {:?}, config expects {shape:?}",
                        p.shape(),
                    )))
                }
                None => return Err(Error::Config(format!("missing parameter {name}"))),
            }
        }
        if params.len() != expected.len() {
            return Err(Error::Config("unexpected extra parameters".into()));
        }
        let d = config.transformer.latent_dim;
        let mut pe = Vec::with_capacity(config.future * d);
        for f in 0..config.future {
            pe.extend(sinusoidal_embedding(f as f64, d));
        }
        let positional = Tensor::new(&[config.future, d], pe)?;
        let dct = DctBasis::truncated(config.total_frames(), config.dct_keep())?;
        let synthesis = dct.analysis().transpose2();
        Ok(Generator {
            config,
            params,
            max_step,
            positional,
            dct,
            synthesis,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn params(&self) -> &GeneratorParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut GeneratorParams {
        &mut self.params
    }

    pub fn into_params(self) -> GeneratorParams {
        self.params
    }

    pub fn max_step(&self) -> usize {
        self.max_step
    }

    pub fn dct(&self) -> &DctBasis {
        &self.dct
    }

    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> BoundParams<'t> {
        self.params.bind(tape, trainable)
    }

    /// Time token `z_t`, shape `[1, latent_dim]`: the sinusoidal code of `t`
    /// through a two-layer GELU MLP.
    pub fn time_token<'t>(&self, p: &BoundParams<'t>, tape: &'t Tape, t: usize) -> Result<Var<'t>> {
        if t > self.max_step {
            return Err(Error::OutOfRange {
                what: "diffusion step",
                index: t,
                max: self.max_step,
            });
        }
        let d = self.config.transformer.latent_dim;
        let emb = tape.constant(Tensor::new(&[1, d], sinusoidal_embedding(t as f64, d))?);
        let h = linear(p, "time.mlp0", emb)?.gelu()?;
        linear(p, "time.mlp1", h)
    }

    fn check_motion(&self, v: Var<'_>, frames: usize, what: &'static str) -> Result<()> {
        let s = v.shape();
        if s != [frames, self.config.joints, 3] {
            return Err(Error::shape(what, &s, &[frames, self.config.joints, 3]));
        }
        Ok(())
    }

    fn encoder_layer<'t>(
        &self,
        p: &BoundParams<'t>,
        l: usize,
        x: Var<'t>,
        mode: &mut Mode<'_>,
    ) -> Result<Var<'t>> {
        let cfg = &self.config.transformer;
        let prefix = format!("recon.layer{l}");
        let (len, d, heads) = (x.shape()[0], cfg.latent_dim, cfg.heads);
        let dh = d / heads;
        let split = |v: Var<'t>, axes: &[usize]| v.reshape(&[len, heads, dh])?.permute(axes);
        let q = split(linear(p, &format!("{prefix}.attn.q"), x)?, &[1, 0, 2])?;
        let kt = split(linear(p, &format!("{prefix}.attn.k"), x)?, &[1, 2, 0])?;
        let v = split(linear(p, &format!("{prefix}.attn.v"), x)?, &[1, 0, 2])?;
        let weights = q.matmul(kt)?.scale(1.0 / (dh as f64).sqrt())?.softmax(2)?;
        let ctx = weights
            .matmul(v)?
            .permute(&[1, 0, 2])?
            .reshape(&[len, d])?;
        let attn = linear(p, &format!("{prefix}.attn.o"), ctx)?;
        let attn = mode.dropout(attn, cfg.dropout)?;
        let x = layer_norm(p, &format!("{prefix}.ln1"), x.add(attn)?)?;

        let h = linear(p, &format!("{prefix}.ff0"), x)?.gelu()?;
        let h = mode.dropout(h, cfg.dropout)?;
        let h = linear(p, &format!("{prefix}.ff1"), h)?;
        let h = mode.dropout(h, cfg.dropout)?;
        layer_norm(p, &format!("{prefix}.ln2"), x.add(h)?)
    }

    /// Initial reconstruction `F(y_t, t)`, same shape as `y_t`.
    pub fn reconstruct<'t>(
        &self,
        p: &BoundParams<'t>,
        y_t: Var<'t>,
        t: usize,
        mode: &mut Mode<'_>,
    ) -> Result<Var<'t>> {
        let cfg = &self.config;
        self.check_motion(y_t, cfg.future, "reconstruct")?;
        let tape = y_t.tape();
        let pose = cfg.nodes();
        let frames = y_t.reshape(&[cfg.future, pose])?;
        let frames = linear(p, "recon.in", frames)?.add(tape.constant(self.positional.clone()))?;
        let frames = mode.dropout(frames, cfg.transformer.dropout)?;
        let z_t = self.time_token(p, tape, t)?;
        let mut h = tape.concat_rows(&[z_t, frames])?;
        for l in 0..cfg.transformer.layers {
            h = self.encoder_layer(p, l, h, mode)?;
        }
        // Drop the time-token slot before projecting back to poses.
        let h = h.slice_rows(1, cfg.future + 1)?;
        linear(p, "recon.out", h)?.reshape(&[cfg.future, cfg.joints, 3])
    }

    fn stage<'t>(
        &self,
        p: &BoundParams<'t>,
        s: usize,
        traj: Var<'t>,
        analysis: Var<'t>,
        synthesis: Var<'t>,
        mode: &mut Mode<'_>,
    ) -> Result<Var<'t>> {
        let r = &self.config.refinement;
        // [K, 3J] coefficients, then nodes x frequencies.
        let coeffs = DctBasis::forward_var(analysis, traj)?;
        let mut h = coeffs.transpose()?;
        for b in 0..r.blocks_per_stage {
            let prefix = format!("refine.stage{s}.block{b}");
            let w = GcnWeights {
                adjacency: p.get(&format!("{prefix}.adj"))?,
                weight: p.get(&format!("{prefix}.w"))?,
                bias: p.get(&format!("{prefix}.b"))?,
                norm: Some((p.get(&format!("{prefix}.ln.g"))?, p.get(&format!("{prefix}.ln.b"))?)),
            };
            let spec = GcnBlockSpec {
                activation: Activation::Tanh,
                normalize: true,
                dropout: r.dropout,
                residual: true,
            };
            h = gcn_block(h, &w, spec, mode)?;
        }
        let prefix = format!("refine.stage{s}.out");
        let out = GcnWeights {
            adjacency: p.get(&format!("{prefix}.adj"))?,
            weight: p.get(&format!("{prefix}.w"))?,
            bias: p.get(&format!("{prefix}.b"))?,
            norm: None,
        };
        let spec = GcnBlockSpec {
            activation: Activation::Identity,
            normalize: false,
            dropout: 0.0,
            residual: false,
        };
        let h = gcn_block(h, &out, spec, mode)?;
        let delta = DctBasis::inverse_var(synthesis, h.transpose()?)?;
        delta.add(traj)
    }

    /// Refinement `R(x, y_tilde)`: returns the full `[H + F, J, 3]` trajectory.
    pub fn refine<'t>(
        &self,
        p: &BoundParams<'t>,
        x: Var<'t>,
        y_tilde: Var<'t>,
        mode: &mut Mode<'_>,
    ) -> Result<Var<'t>> {
        let cfg = &self.config;
        self.check_motion(x, cfg.history, "refine history")?;
        self.check_motion(y_tilde, cfg.future, "refine future")?;
        let tape = x.tape();
        let n = cfg.total_frames();
        let mut traj = tape
            .concat_rows(&[x, y_tilde])?
            .reshape(&[n, cfg.nodes()])?;
        let analysis = tape.constant(self.dct.analysis().clone());
        let synthesis = tape.constant(self.synthesis.clone());
        for s in 0..cfg.refinement.stages {
            traj = self.stage(p, s, traj, analysis, synthesis, mode)?;
        }
        traj.reshape(&[n, cfg.joints, 3])
    }

    /// Returns `(y_hat0, x_hat)`.
    pub fn generate<'t>(
        &self,
        p: &BoundParams<'t>,
        y_t: Var<'t>,
        x: Var<'t>,
        t: usize,
        mode: &mut Mode<'_>,
    ) -> Result<(Var<'t>, Var<'t>)> {
        let y_tilde = self.reconstruct(p, y_t, t, mode)?;
        let full = self.refine(p, x, y_tilde, mode)?;
        let h = self.config.history;
        let y_hat = full.slice_rows(h, h + self.config.future)?;
        let x_hat = full.slice_rows(0, h)?;
        Ok((y_hat, x_hat))
    }

    /// Eval-mode convenience wrapper around [`generate`](Self::generate).
    pub fn predict(&self, y_t: &Tensor, x: &Tensor, t: usize) -> Result<(Tensor, Tensor)> {
        let tape = Tape::new();
        let p = self.bind(&tape, false);
        let (y, xh) = self.generate(
            &p,
            tape.constant(y_t.clone()),
            tape.constant(x.clone()),
            t,
            &mut Mode::Eval,
        )?;
        Ok((y.value(), xh.value()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{init_params, RefinementConfig, TransformerConfig};
    use crate::testutil::{numeric_grads, rel_err};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn small_config(joints: usize, history: usize, future: usize) -> GeneratorConfig {
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

    fn small_generator(seed: u64) -> Generator {
        let c = small_config(2, 4, 4);
        let p = init_params(&c, seed).unwrap();
        Generator::new(c, p, 10).unwrap()
    }

    fn motion(frames: usize, joints: usize, seed: u64) -> Tensor {
        Tensor::randn(&[frames, joints, 3], &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn sinusoidal_closed_form() {
        let e = sinusoidal_embedding(3.0, 4);
        let expect = [3f64.sin(), 3f64.cos(), (0.03f64).sin(), (0.03f64).cos()];
        for (a, b) in e.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(sinusoidal_embedding(0.0, 6), vec![0., 1., 0., 1., 0., 1.]);
    }

    #[test]
    fn time_tokens_distinct_and_shaped() {
        let g = small_generator(0);
        let tape = Tape::new();
        let p = g.bind(&tape, false);
        let z0 = g.time_token(&p, &tape, 0).unwrap().value();
        let zt = g.time_token(&p, &tape, 10).unwrap().value();
        assert_eq!(z0.shape(), &[1, 8]);
        assert!(z0.max_abs_diff(&zt) > 0.0);
        assert!(g.time_token(&p, &tape, 11).is_err());
    }

    #[test]
    fn reconstruct_contract() {
        let g = small_generator(1);
        let y = motion(4, 2, 5);
        let run = |y: &Tensor, t| {
            let tape = Tape::new();
            let p = g.bind(&tape, false);
            g.reconstruct(&p, tape.constant(y.clone()), t, &mut Mode::Eval)
                .unwrap()
                .value()
        };
        let a = run(&y, 3);
        assert_eq!(a.shape(), &[4, 2, 3]);
        assert!(a.max_abs_diff(&run(&y, 7)) > 1e-9);

        // Reverse frame order: output must not simply reverse too.
        let rows: Vec<Tensor> = (0..4).rev().map(|f| y.slice_rows(f, f + 1).unwrap()).collect();
        let refs: Vec<&Tensor> = rows.iter().collect();
        let permuted = Tensor::concat_rows(&refs).unwrap();
        let out = run(&permuted, 3);
        let back: Vec<Tensor> = (0..4).rev().map(|f| out.slice_rows(f, f + 1).unwrap()).collect();
        let refs: Vec<&Tensor> = back.iter().collect();
        assert!(Tensor::concat_rows(&refs).unwrap().max_abs_diff(&a) > 1e-9);

        let tape = Tape::new();
        let p = g.bind(&tape, false);
        let bad = tape.constant(Tensor::zeros(&[5, 2, 3]));
        assert!(g.reconstruct(&p, bad, 1, &mut Mode::Eval).is_err());
    }

    #[test]
    fn zeroed_refinement_is_identity() {
        let mut g = small_generator(2);
        for (name, t) in g.params_mut().iter_mut() {
            if name.starts_with("refine.") {
                *t = Tensor::zeros(t.shape());
            }
        }
        let x = motion(4, 2, 1);
        let y = motion(4, 2, 2);
        let tape = Tape::new();
        let p = g.bind(&tape, false);
        let out = g
            .refine(&p, tape.constant(x.clone()), tape.constant(y.clone()), &mut Mode::Eval)
            .unwrap()
            .value();
        assert_eq!(out.shape(), &[8, 2, 3]);
        let expect = Tensor::concat_rows(&[&x, &y]).unwrap();
        assert!(out.max_abs_diff(&expect) < 1e-12);
    }

    fn plain_spec() -> GcnBlockSpec {
        GcnBlockSpec {
            activation: Activation::Identity,
            normalize: false,
            dropout: 0.0,
            residual: false,
        }
    }

    #[test]
    fn gcn_identity_and_bias() {
        let tape = Tape::new();
        let h = Tensor::randn(&[6, 4], &mut ChaCha8Rng::seed_from_u64(9));
        let w = GcnWeights {
            adjacency: tape.constant(Tensor::eye(6)),
            weight: tape.constant(Tensor::eye(4)),
            bias: tape.constant(Tensor::zeros(&[4])),
            norm: None,
        };
        let out = gcn_block(tape.constant(h.clone()), &w, plain_spec(), &mut Mode::Eval).unwrap();
        assert_eq!(out.value(), h);

        let bias = Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let w = GcnWeights {
            adjacency: tape.constant(Tensor::uniform(&[6, 6], 1.0, &mut ChaCha8Rng::seed_from_u64(1))),
            weight: tape.constant(Tensor::uniform(&[4, 3], 1.0, &mut ChaCha8Rng::seed_from_u64(2))),
            bias: tape.constant(bias.clone()),
            norm: None,
        };
        let out = gcn_block(tape.constant(Tensor::zeros(&[6, 4])), &w, plain_spec(), &mut Mode::Eval)
            .unwrap()
            .value();
        for row in out.data().chunks(3) {
            assert_eq!(row, bias.data());
        }
    }

    fn gcn_loss<'t>(
        tape: &'t Tape,
        v: &BTreeMap<String, Tensor>,
        grad: bool,
        spec: GcnBlockSpec,
        weights: &Tensor,
    ) -> (Var<'t>, Var<'t>, GcnWeights<'t>) {
        let leaf = |n: &str| tape.leaf(v[n].clone(), grad);
        let w = GcnWeights {
            adjacency: leaf("adj"),
            weight: leaf("w"),
            bias: leaf("b"),
            norm: Some((leaf("g"), leaf("beta"))),
        };
        let h = leaf("h");
        let out = gcn_block(h, &w, spec, &mut Mode::Eval).unwrap();
        let loss = out.mul(tape.constant(weights.clone())).unwrap().sum().unwrap();
        (loss, h, w)
    }

    #[test]
    fn gcn_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut vals = BTreeMap::new();
        vals.insert("h".to_string(), Tensor::randn(&[6, 5], &mut rng));
        vals.insert("adj".to_string(), Tensor::uniform(&[6, 6], 0.5, &mut rng));
        vals.insert("w".to_string(), Tensor::uniform(&[5, 5], 0.5, &mut rng));
        vals.insert("b".to_string(), Tensor::uniform(&[5], 0.5, &mut rng));
        vals.insert("g".to_string(), Tensor::uniform(&[5], 1.0, &mut rng).map(|v| v + 1.5));
        vals.insert("beta".to_string(), Tensor::uniform(&[5], 0.5, &mut rng));
        let weights = Tensor::randn(&[6, 5], &mut rng);
        let spec = GcnBlockSpec {
            activation: Activation::Tanh,
            normalize: true,
            dropout: 0.0,
            residual: true,
        };
        let tape = Tape::new();
        let (loss, h, w) = gcn_loss(&tape, &vals, true, spec, &weights);
        let grads = tape.backward(loss).unwrap();
        let analytic: BTreeMap<&str, Tensor> = [
            ("h", h),
            ("adj", w.adjacency),
            ("w", w.weight),
            ("b", w.bias),
            ("g", w.norm.unwrap().0),
            ("beta", w.norm.unwrap().1),
        ]
        .into_iter()
        .map(|(n, v)| (n, grads.get(v).unwrap().clone()))
        .collect();
        let numeric = numeric_grads(&vals, 1e-6, |v| {
            let tape = Tape::new();
            gcn_loss(&tape, v, false, spec, &weights).0.value().item()
        });
        for (name, num) in &numeric {
            let err = rel_err(&analytic[name.as_str()], num, 1e-12);
            assert!(err < 1e-5, "{name}: rel err {err}");
        }
    }

    #[test]
    fn generate_shapes_and_determinism() {
        let g = small_generator(3);
        let (x, y) = (motion(4, 2, 1), motion(4, 2, 2));
        let (a, xa) = g.predict(&y, &x, 5).unwrap();
        let (b, xb) = g.predict(&y, &x, 5).unwrap();
        assert_eq!(a.shape(), &[4, 2, 3]);
        assert_eq!(xa.shape(), &[4, 2, 3]);
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(bits(&xa), bits(&xb));
        let (c, _) = g.predict(&y, &x.map(|v| v + 0.1), 5).unwrap();
        assert!(c.max_abs_diff(&a) > 1e-9);
    }

    #[test]
    fn train_mode_dropout_changes_output() {
        let g = small_generator(3);
        let (x, y) = (motion(4, 2, 1), motion(4, 2, 2));
        let tape = Tape::new();
        let p = g.bind(&tape, false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (a, _) = g
            .generate(&p, tape.constant(y.clone()), tape.constant(x.clone()), 5, &mut Mode::Train(&mut rng))
            .unwrap();
        let (b, _) = g.predict(&y, &x, 5).unwrap();
        assert!(a.value().max_abs_diff(&b) > 1e-9);
    }

    fn gen_loss<'t>(
        g: &Generator,
        tape: &'t Tape,
        params: &GeneratorParams,
        trainable: bool,
        [x, y, target]: [&Tensor; 3],
    ) -> (Var<'t>, BoundParams<'t>) {
        let p = params.bind(tape, trainable);
        let (yh, xh) = g
            .generate(&p, tape.constant(y.clone()), tape.constant(x.clone()), 4, &mut Mode::Eval)
            .unwrap();
        let d = yh.sub(tape.constant(target.clone())).unwrap();
        let loss = d.mul(d).unwrap().sum().unwrap().add(xh.sum().unwrap()).unwrap();
        (loss, p)
    }

    #[test]
    fn full_generator_gradients_match_finite_differences() {
        let g = small_generator(7);
        let (x, y) = (motion(4, 2, 11), motion(4, 2, 12));
        let target = motion(4, 2, 13);
        let tape = Tape::new();
        let (loss, bound) = gen_loss(&g, &tape, g.params(), true, [&x, &y, &target]);
        let grads = tape.backward(loss).unwrap();
        let numeric = numeric_grads(g.params().as_map(), 1e-5, |m| {
            let tape = Tape::new();
            let params = GeneratorParams::from(m.clone());
            gen_loss(&g, &tape, &params, false, [&x, &y, &target]).0.value().item()
        });
        for (name, var) in bound.iter() {
            let (a, n) = (grads.get(*var).unwrap(), &numeric[name]);
            if a.norm() + n.norm() < 1e-6 {
                // Structurally zero (e.g. key biases under softmax): compare absolutely.
                assert!(a.max_abs_diff(n) < 1e-8, "{name}: abs err {}", a.max_abs_diff(n));
                continue;
            }
            let err = rel_err(a, n, 1e-12);
            assert!(err < 1e-4, "{name}: rel err {err}");
        }
    }

    #[test]
    fn rejects_mismatched_params() {
        let c = small_config(2, 4, 4);
        let mut p = init_params(&c, 0).unwrap();
        p.insert("recon.in.w", Tensor::zeros(&[3, 3]));
        assert!(Generator::new(c.clone(), p, 10).is_err());
        let other = init_params(&small_config(3, 4, 4), 0).unwrap();
        assert!(Generator::new(c, other, 10).is_err());
    }
}
