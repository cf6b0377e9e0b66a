use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::loss::{recon_loss, LossWeights};
use crate::autodiff::{Tape, Var};
use crate::data::WindowPair;
use crate::error::{Error, Result};
use crate::generator::{init_params, BoundParams, Generator, GeneratorConfig, Mode};
use crate::schedule::{ScheduleKind, ScheduleTable};
use crate::tensor::Tensor;

/// Stream of the training RNG; parameter init uses the plain seed.
const TRAIN_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay_factor: f64,
    /// The rate decays once per epoch after this many epochs.
    pub lr_decay_start_epoch: usize,
    /// Replicas in the min-over-k loss.
    pub k: usize,
    pub diffusion_steps: usize,
    pub schedule: ScheduleKind,
    pub seed: u64,
    /// Save a checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl TrainConfig {
    pub fn toy() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 16,
            learning_rate: 1e-4,
            lr_decay_factor: 0.99,
            lr_decay_start_epoch: 80,
            k: 2,
            diffusion_steps: 10,
            schedule: ScheduleKind::CosineOffset1,
            seed: 0,
            checkpoint_every: 0,
        }
    }

    pub fn full() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 64,
            lr_decay_start_epoch: 200,
            ..Self::toy()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.k >= 1, "k must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.diffusion_steps >= 1, "diffusion_steps must be >= 1"),
            (
                self.learning_rate > 0.0 && self.learning_rate.is_finite(),
                "learning_rate must be positive",
            ),
            (
                self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0,
                "lr_decay_factor must lie in (0, 1]",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.into()));
            }
        }
        Ok(())
    }

    /// Rate in effect once `epochs_done` epochs have finished.
    pub fn lr_after_epoch(&self, epochs_done: usize) -> f64 {
        let decays = epochs_done.saturating_sub(self.lr_decay_start_epoch);
        self.learning_rate * self.lr_decay_factor.powi(decays as i32)
    }

    pub fn schedule_table(&self) -> Result<ScheduleTable> {
        ScheduleTable::build(self.schedule, self.diffusion_steps)
    }
}

/// One row of the loss trace; `lr` is the rate used during the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
}

pub fn loss_trace_csv(trace: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,mean_loss,lr\n");
    for r in trace {
        s.push_str(&format!("{},{:.17e},{:.17e}\n", r.epoch, r.mean_loss, r.lr));
    }
    s
}

/// Everything needed to continue a run bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub epoch: usize,
    pub adam: AdamState,
    pub rng: ChaCha8Rng,
    pub trace: Vec<EpochRecord>,
}

impl TrainState {
    pub fn fresh(generator: &Generator, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(TRAIN_STREAM);
        TrainState {
            epoch: 0,
            adam: AdamState::for_params(generator.params()),
            rng,
            trace: Vec::new(),
        }
    }
}

/// Result of one min-over-k training step on a single example.
pub struct StepOutcome<'t> {
    /// Loss of the best replica; gradients flow only through it.
    pub loss: Var<'t>,
    pub t: usize,
    pub chosen: usize,
    pub replica_losses: Vec<f64>,
}

/// Draws `t` once, then `k` independent noise replicas at that step; the
/// returned loss is the smallest replica loss. The draw order is `t`, then
/// per replica its noise followed by its dropout masks, so a run with
/// larger `k` shares its leading replicas with a smaller one.
#[allow(clippy::too_many_arguments)]
pub fn diffusion_training_step<'t, R: Rng>(
    generator: &Generator,
    params: &BoundParams<'t>,
    tape: &'t Tape,
    pair: (&Tensor, &Tensor),
    schedule: &ScheduleTable,
    k: usize,
    weights: &LossWeights,
    rng: &mut R,
    dropout: bool,
) -> Result<StepOutcome<'t>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let (x, y0) = pair;
    let t = rng.gen_range(1..=schedule.steps());
    let xv = tape.constant(x.clone());
    let yv = tape.constant(y0.clone());
    let mut best: Option<(f64, usize, Var<'t>)> = None;
    let mut replica_losses = Vec::with_capacity(k);
    for r in 0..k {
        let eps = Tensor::randn(y0.shape(), rng);
        let y_t = tape.constant(schedule.diffuse(y0, t, &eps)?);
        let mut mode = if dropout { Mode::Train(rng) } else { Mode::Eval };
        let (y_hat, x_hat) = generator.generate(params, y_t, xv, t, &mut mode)?;
        let loss = recon_loss(x_hat, y_hat, xv, yv, weights)?;
        let value = loss.value().item();
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("training loss at t = {t}")));
        }
        replica_losses.push(value);
        if best.as_ref().is_none_or(|(b, _, _)| value < *b) {
            best = Some((value, r, loss));
        }
    }
    let (_, chosen, loss) = best.expect("k >= 1");
    Ok(StepOutcome {
        loss,
        t,
        chosen,
        replica_losses,
    })
}

/// Owns the generator, optimizer state and RNG of a training run.
pub struct Trainer {
    generator: Generator,
    schedule: ScheduleTable,
    weights: LossWeights,
    config: TrainConfig,
    state: TrainState,
}

impl Trainer {
    pub fn new(generator: Generator, weights: LossWeights, config: TrainConfig) -> Result<Self> {
        let state = TrainState::fresh(&generator, config.seed);
        Self::resume(generator, weights, config, state)
    }

    pub fn resume(
        generator: Generator,
        weights: LossWeights,
        config: TrainConfig,
        state: TrainState,
    ) -> Result<Self> {
        config.validate()?;
        if generator.max_step() != config.diffusion_steps {
            return Err(Error::Config(format!(
                "generator accepts {} diffusion steps, training uses {}",
                generator.max_step(),
                config.diffusion_steps
            )));
        }
        if weights.joints() != generator.config().joints {
            return Err(Error::Config("loss weights do not match the joint count".into()));
        }
        let schedule = config.schedule_table()?;
        Ok(Trainer {
            generator,
            schedule,
            weights,
            config,
            state,
        })
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn into_parts(self) -> (Generator, TrainState) {
        (self.generator, self.state)
    }

    pub fn is_finished(&self) -> bool {
        self.state.epoch >= self.config.epochs
    }

    /// One pass over `data` in a freshly shuffled order.
    pub fn run_epoch(&mut self, data: &[WindowPair]) -> Result<EpochRecord> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("training set is empty".into()));
        }
        let lr = self.config.lr_after_epoch(self.state.epoch);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.state.rng);
        let mut total = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            let tape = Tape::new();
            let params = self.generator.bind(&tape, true);
            let mut sum: Option<Var> = None;
            for &i in batch {
                let step = diffusion_training_step(
                    &self.generator,
                    &params,
                    &tape,
                    (&data[i].x, &data[i].y0),
                    &self.schedule,
                    self.config.k,
                    &self.weights,
                    &mut self.state.rng,
                    true,
                )?;
                sum = Some(match sum {
                    None => step.loss,
                    Some(s) => s.add(step.loss)?,
                });
            }
            let loss = sum.expect("nonempty batch").scale(1.0 / batch.len() as f64)?;
            total += loss.value().item() * batch.len() as f64;
            let grads = tape.backward(loss)?;
            let grads: BTreeMap<String, Tensor> = params
                .iter()
                .filter_map(|(name, v)| grads.get(*v).map(|g| (name.clone(), g.clone())))
                .collect();
            if grads.values().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient in epoch {}",
                    self.state.epoch + 1
                )));
            }
            adam_step(self.generator.params_mut(), &grads, &mut self.state.adam, lr)?;
        }
        if !self.generator.params().is_finite() {
            return Err(Error::NonFinite("parameters after update".into()));
        }
        self.state.epoch += 1;
        let record = EpochRecord {
            epoch: self.state.epoch,
            mean_loss: total / data.len() as f64,
            lr,
        };
        self.state.trace.push(record);
        Ok(record)
    }

    /// Runs the remaining epochs, calling `on_epoch` after each.
    pub fn fit(
        &mut self,
        data: &[WindowPair],
        mut on_epoch: impl FnMut(&Trainer, &EpochRecord) -> Result<()>,
    ) -> Result<()> {
        while !self.is_finished() {
            let rec = self.run_epoch(data)?;
            log::info!("epoch {} loss {:.6} lr {:.3e}", rec.epoch, rec.mean_loss, rec.lr);
            on_epoch(self, &rec)?;
        }
        Ok(())
    }
}

/// Fresh run: initializes parameters from `train.seed` and trains to completion.
pub fn train(
    data: &[WindowPair],
    gen_config: &GeneratorConfig,
    train: &TrainConfig,
    weights: LossWeights,
) -> Result<(Generator, TrainState)> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    train.validate()?;
    let params = init_params(gen_config, train.seed)?;
    let generator = Generator::new(gen_config.clone(), params, train.diffusion_steps)?;
    let mut trainer = Trainer::new(generator, weights, train.clone())?;
    trainer.fit(data, |_, _| Ok(()))?;
    Ok(trainer.into_parts())
}
