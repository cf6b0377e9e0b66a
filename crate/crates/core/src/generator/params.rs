use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::GeneratorConfig;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Learnable tensors keyed by stable dotted names.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GeneratorParams {
    tensors: BTreeMap<String, Tensor>,
}

impl GeneratorParams {
    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    pub fn as_map(&self) -> &BTreeMap<String, Tensor> {
        &self.tensors
    }

    pub fn into_map(self) -> BTreeMap<String, Tensor> {
        self.tensors
    }

    /// Records every tensor as a leaf on `tape`.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> BoundParams<'t> {
        BoundParams {
            vars: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), tape.leaf(v.clone(), trainable)))
                .collect(),
        }
    }
}

impl From<BTreeMap<String, Tensor>> for GeneratorParams {
    fn from(tensors: BTreeMap<String, Tensor>) -> Self {
        GeneratorParams { tensors }
    }
}

/// Parameters recorded on a tape.
pub struct BoundParams<'t> {
    vars: BTreeMap<String, Var<'t>>,
}

impl<'t> BoundParams<'t> {
    pub fn get(&self, name: &str) -> Result<Var<'t>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("missing parameter {name:?}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var<'t>)> {
        self.vars.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum InitKind {
    Uniform(f64),
    Ones,
    Zeros,
}

#[derive(Default)]
struct Layout {
    entries: Vec<(String, Vec<usize>, InitKind)>,
}

impl Layout {
    /// Weight `[fan_in, fan_out]` and bias `[fan_out]`, both uniform in
    /// `±1/sqrt(fan_in)`.
    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) {
        let bound = InitKind::Uniform(1.0 / (fan_in as f64).sqrt());
        self.entries.push((format!("{prefix}.w"), vec![fan_in, fan_out], bound));
        self.entries.push((format!("{prefix}.b"), vec![fan_out], bound));
    }

    fn norm(&mut self, prefix: &str, dim: usize) {
        self.entries.push((format!("{prefix}.g"), vec![dim], InitKind::Ones));
        self.entries.push((format!("{prefix}.b"), vec![dim], InitKind::Zeros));
    }

    fn adjacency(&mut self, name: &str, nodes: usize) {
        let bound = InitKind::Uniform(1.0 / (nodes as f64).sqrt());
        self.entries.push((name.to_string(), vec![nodes, nodes], bound));
    }
}

fn layout(config: &GeneratorConfig) -> Layout {
    let mut init = Layout::default();
    let t = &config.transformer;
    let d = t.latent_dim;
    let pose = config.nodes();

    init.linear("time.mlp0", d, d);
    init.linear("time.mlp1", d, d);
    init.linear("recon.in", pose, d);
    for l in 0..t.layers {
        let p = format!("recon.layer{l}");
        for proj in ["q", "k", "v", "o"] {
            init.linear(&format!("{p}.attn.{proj}"), d, d);
        }
        init.norm(&format!("{p}.ln1"), d);
        init.linear(&format!("{p}.ff0"), d, t.ff_dim);
        init.linear(&format!("{p}.ff1"), t.ff_dim, d);
        init.norm(&format!("{p}.ln2"), d);
    }
    init.linear("recon.out", d, pose);

    let r = &config.refinement;
    let k = config.dct_keep();
    for s in 0..r.stages {
        for b in 0..r.blocks_per_stage {
            let p = format!("refine.stage{s}.block{b}");
            let fan_in = if b == 0 { k } else { r.latent_dim };
            init.adjacency(&format!("{p}.adj"), pose);
            init.linear(&p, fan_in, r.latent_dim);
            init.norm(&format!("{p}.ln"), r.latent_dim);
        }
        let p = format!("refine.stage{s}.out");
        init.adjacency(&format!("{p}.adj"), pose);
        init.linear(&p, r.latent_dim, k);
    }
    init
}

/// Name and shape of every parameter implied by `config`.
pub fn param_shapes(config: &GeneratorConfig) -> BTreeMap<String, Vec<usize>> {
    layout(config)
        .entries
        .into_iter()
        .map(|(name, shape, _)| (name, shape))
        .collect()
}

/// Deterministic initialization from `seed`. Linear layers draw uniformly
/// in `±1/sqrt(fan_in)`; adjacencies in `±1/sqrt(3J)`.
pub fn init_params(config: &GeneratorConfig, seed: u64) -> Result<GeneratorParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = GeneratorParams::default();
    for (name, shape, kind) in layout(config).entries {
        let t = match kind {
            InitKind::Uniform(bound) => Tensor::uniform(&shape, bound, &mut rng),
            InitKind::Ones => Tensor::ones(&shape),
            InitKind::Zeros => Tensor::zeros(&shape),
        };
        params.insert(name, t);
    }
    Ok(params)
}
