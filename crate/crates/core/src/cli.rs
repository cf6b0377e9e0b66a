//! Command line front end. Every numeric path goes through the library.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use crate::checkpoint::Checkpoint;
use crate::config::{RunConfig, CONFIG_ENV};
use crate::data::{
    decode_motion_with, encode_motion_with, synth_generate, window, MotionSet, WindowPair,
};
use crate::error::{Error, Result};
use crate::generator::{init_params, Generator};
use crate::metrics::{
    build_multimodal_gt, evaluate, records_csv, records_jsonl, records_table, zero_velocity_baseline,
    EvalInputs, EvalRecord, MotionStats,
};
use crate::plot;
use crate::sampling::{sample_many_indexed, PredictionMeta, PredictionSet, WindowSource};
use crate::schedule::{ScheduleKind, ScheduleTable};
use crate::tensor::Tensor;
use crate::training::{loss_trace_csv, structure_weights, Trainer};

#[derive(Debug, Parser)]
#[command(name = "diffmotion", version, about = "Stochastic human motion prediction with diffusion")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,

    /// Override any config key, e.g. `--set train.k=1`. Values parse as
    /// JSON, falling back to a plain string.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multimodal motion dataset.
    Datagen(DatagenArgs),
    /// Train a generator on a motion file.
    Train(TrainArgs),
    /// Sample futures for every test history.
    Sample(SampleArgs),
    /// Score predictions against the data, with a zero-velocity baseline row.
    Eval(EvalArgs),
    /// Render SVG figures.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct DatagenArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub joints: Option<usize>,
    #[arg(long)]
    pub history: Option<usize>,
    #[arg(long)]
    pub future: Option<usize>,
    #[arg(long)]
    pub clips: Option<usize>,
    #[arg(long)]
    pub modes: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write a `clip,frame,joint,x,y,z` CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub diffusion_steps: Option<usize>,
    #[arg(long)]
    pub schedule: Option<ScheduleKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Continue the run stored in this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Metrics CSV; defaults to `<predictions>.metrics.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-history records plus the resolved config as JSON lines.
    #[arg(long)]
    pub jsonl: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Prediction file for the stick-figure strip.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Loss trace CSV written by `train`.
    #[arg(long)]
    pub loss: Option<PathBuf>,
    /// Which history of the prediction file to draw.
    #[arg(long, default_value_t = 0)]
    pub history: usize,
    /// Number of samples to draw.
    #[arg(long, default_value_t = 4)]
    pub max_samples: usize,
    /// Draw every n-th frame.
    #[arg(long, default_value_t = 4)]
    pub frame_stride: usize,
    #[arg(long)]
    pub diffusion_steps: Option<usize>,
}

fn set_if<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

/// Applies one `a.b.c=value` override to a JSON document.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not KEY=VALUE")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override key {key:?} does not name an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(Error::Config(format!("empty override key in {spec:?}")))
}

impl Cli {
    /// Config file (or defaults) with `--set` overrides applied.
    fn base_config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::resolve_source(self.config.as_deref())?;
        if !self.overrides.is_empty() {
            let mut doc = cfg.to_value()?;
            for o in &self.overrides {
                apply_override(&mut doc, o)?;
            }
            cfg = serde_json::from_value(doc).map_err(|e| Error::Config(format!("invalid override: {e}")))?;
        }
        Ok(cfg)
    }

    /// Final configuration after subcommand flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = self.base_config()?;
        match &self.command {
            Command::Datagen(a) => {
                let s = &mut cfg.synth;
                set_if(&mut s.joints, a.joints);
                set_if(&mut s.history, a.history);
                set_if(&mut s.future, a.future);
                set_if(&mut s.clips, a.clips);
                set_if(&mut s.modes, a.modes);
                set_if(&mut s.noise, a.noise);
                set_if(&mut s.seed, a.seed);
                set_opt(&mut cfg.paths.data, a.out.clone());
            }
            Command::Train(a) => {
                let t = &mut cfg.train;
                set_if(&mut t.epochs, a.epochs);
                set_if(&mut t.batch_size, a.batch_size);
                set_if(&mut t.learning_rate, a.learning_rate);
                set_if(&mut t.k, a.k);
                set_if(&mut t.diffusion_steps, a.diffusion_steps);
                set_if(&mut t.schedule, a.schedule);
                set_if(&mut t.seed, a.seed);
                set_if(&mut t.checkpoint_every, a.checkpoint_every);
                set_opt(&mut cfg.paths.data, a.data.clone());
                set_opt(&mut cfg.paths.out_dir, a.out_dir.clone());
            }
            Command::Sample(a) => {
                set_if(&mut cfg.eval.samples, a.samples);
                set_if(&mut cfg.eval.seed, a.seed);
                set_opt(&mut cfg.paths.checkpoint, a.checkpoint.clone());
                set_opt(&mut cfg.paths.data, a.data.clone());
                set_opt(&mut cfg.paths.predictions, a.out.clone());
            }
            Command::Eval(a) => {
                set_if(&mut cfg.eval.delta, a.delta);
                set_opt(&mut cfg.paths.predictions, a.predictions.clone());
                set_opt(&mut cfg.paths.data, a.data.clone());
            }
            Command::Plot(a) => {
                set_if(&mut cfg.train.diffusion_steps, a.diffusion_steps);
                set_opt(&mut cfg.paths.out_dir, a.out_dir.clone());
                set_opt(&mut cfg.paths.predictions, a.predictions.clone());
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("no {what} path given (flag or config paths section)")))
}

/// Config as embedded in artifacts: paths are dropped so that reruns into
/// different directories produce identical bytes.
pub fn provenance(cfg: &RunConfig) -> Result<Value> {
    let mut c = cfg.clone();
    c.paths = Default::default();
    c.to_value()
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Loads a motion file and applies the configured preprocessing.
pub fn load_dataset(cfg: &RunConfig, path: &Path) -> Result<MotionSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (set, _) = decode_motion_with(&bytes)?;
    Ok(if cfg.data.root_relative { set.root_relative() } else { set })
}

/// `(train, test)` window pairs; clip indices refer to the full set.
pub fn split_pairs(cfg: &RunConfig, set: &MotionSet) -> Result<(Vec<WindowPair>, Vec<WindowPair>)> {
    let g = &cfg.generator;
    if set.skeleton.joints() != g.joints {
        return Err(Error::Config(format!(
            "data has {} joints, generator expects {}",
            set.skeleton.joints(),
            g.joints
        )));
    }
    let (train_idx, test_idx) = set.split_indices(cfg.data.test_fraction);
    let cut = |idx: &[usize]| -> Result<Vec<WindowPair>> {
        let clips: Vec<_> = idx.iter().map(|&i| set.clips[i].clone()).collect();
        let w = window(&clips, g.history, g.future, cfg.stride())?;
        if w.skipped > 0 {
            log::warn!("skipped {} clips shorter than {} frames", w.skipped, g.total_frames());
        }
        Ok(w.pairs
            .into_iter()
            .map(|mut p| {
                p.clip = idx[p.clip];
                p
            })
            .collect())
    };
    Ok((cut(&train_idx)?, cut(&test_idx)?))
}

pub fn cmd_datagen(cfg: &RunConfig, csv: Option<&Path>) -> Result<PathBuf> {
    let out = required(&cfg.paths.data, "output")?.to_path_buf();
    let set = synth_generate(&cfg.synth)?;
    let bytes = encode_motion_with(&set, Some(provenance(cfg)?))?;
    write(&out, bytes)?;
    if let Some(csv) = csv {
        crate::data::write_csv(&set, csv)?;
    }
    println!("wrote {} clips to {}", set.clips.len(), out.display());
    Ok(out)
}

/// File names written by [`cmd_train`] inside the output directory.
pub const CHECKPOINT_FILE: &str = "checkpoint.dmckpt";
pub const LOSS_FILE: &str = "loss.csv";
pub const CONFIG_FILE: &str = "config.json";

fn save_training(trainer: &Trainer, cfg: &RunConfig, weights: &crate::training::LossWeights, path: &Path) -> Result<()> {
    let mut ck = Checkpoint::from_generator(trainer.generator(), trainer.config().clone(), weights.clone());
    ck.state = Some(trainer.state().clone());
    ck.run_config = Some(provenance(cfg)?);
    ck.save(path)
}

pub fn cmd_train(cfg: &RunConfig, resume: Option<&Path>) -> Result<PathBuf> {
    let data_path = required(&cfg.paths.data, "data")?;
    let out_dir = required(&cfg.paths.out_dir, "output directory")?.to_path_buf();
    let set = load_dataset(cfg, data_path)?;
    let (train_pairs, _) = split_pairs(cfg, &set)?;
    if train_pairs.is_empty() {
        return Err(Error::InvalidArgument("no training windows in the data".into()));
    }
    let weights = structure_weights(&set.skeleton);
    let mut trainer = match resume {
        None => {
            let params = init_params(&cfg.generator, cfg.train.seed)?;
            let generator = Generator::new(cfg.generator.clone(), params, cfg.train.diffusion_steps)?;
            Trainer::new(generator, weights.clone(), cfg.train.clone())?
        }
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.generator != cfg.generator {
                return Err(Error::Config("checkpoint generator config differs from the run config".into()));
            }
            let mut train = ck.train.clone();
            train.epochs = cfg.train.epochs;
            train.checkpoint_every = cfg.train.checkpoint_every;
            if train != cfg.train {
                return Err(Error::Config(
                    "only epochs and checkpoint_every may change when resuming".into(),
                ));
            }
            let state = ck
                .state
                .clone()
                .ok_or_else(|| Error::Config("checkpoint carries no training state".into()))?;
            Trainer::resume(ck.to_generator()?, ck.loss_weights.clone(), train, state)?
        }
    };
    create_dir(&out_dir)?;
    let embedded = serde_json::to_string_pretty(&provenance(cfg)?)? + "\n";
    write(&out_dir.join(CONFIG_FILE), embedded)?;
    let every = cfg.train.checkpoint_every;
    trainer.fit(&train_pairs, |t, rec| {
        write(&out_dir.join(LOSS_FILE), loss_trace_csv(&t.state().trace))?;
        if every > 0 && rec.epoch % every == 0 {
            save_training(t, cfg, &weights, &out_dir.join(format!("checkpoint_epoch{:04}.dmckpt", rec.epoch)))?;
        }
        Ok(())
    })?;
    write(&out_dir.join(LOSS_FILE), loss_trace_csv(&trainer.state().trace))?;
    let path = out_dir.join(CHECKPOINT_FILE);
    save_training(&trainer, cfg, &weights, &path)?;
    if let Some(last) = trainer.state().trace.last() {
        println!("epoch {} mean loss {:.6}", last.epoch, last.mean_loss);
    }
    println!("wrote {}", path.display());
    Ok(path)
}

/// Samples every test history of the configured split.
pub fn sample_predictions(cfg: &RunConfig, ck: &Checkpoint, set: &MotionSet) -> Result<PredictionSet> {
    if ck.generator != cfg.generator {
        return Err(Error::Config("checkpoint generator config differs from the run config".into()));
    }
    let generator = ck.to_generator()?;
    let (_, test) = split_pairs(cfg, set)?;
    if test.is_empty() {
        return Err(Error::InvalidArgument("no test windows in the data".into()));
    }
    let schedule = ck.train.schedule_table()?;
    let mut samples = Vec::with_capacity(test.len());
    for (h, pair) in test.iter().enumerate() {
        samples.push(sample_many_indexed(
            &generator,
            &pair.x,
            cfg.eval.samples,
            &schedule,
            cfg.eval.seed,
            h as u64,
        )?);
    }
    let g = &cfg.generator;
    let meta = PredictionMeta {
        seed: cfg.eval.seed,
        diffusion_steps: schedule.steps(),
        schedule: schedule.kind(),
        checkpoint_id: ck.id()?,
        samples_per_history: cfg.eval.samples,
        history: g.history,
        future: g.future,
        joints: g.joints,
        sources: test.iter().map(|p| WindowSource { clip: p.clip, start: p.start }).collect(),
        run_config: Some(provenance(cfg)?),
    };
    let out = PredictionSet {
        meta,
        skeleton: set.skeleton.clone(),
        frame_rate: set.frame_rate,
        histories: test.into_iter().map(|p| p.x).collect(),
        samples,
    };
    out.validate()?;
    Ok(out)
}

pub fn cmd_sample(cfg: &RunConfig) -> Result<PathBuf> {
    let ck = Checkpoint::load(required(&cfg.paths.checkpoint, "checkpoint")?)?;
    let set = load_dataset(cfg, required(&cfg.paths.data, "data")?)?;
    let out = required(&cfg.paths.predictions, "prediction output")?.to_path_buf();
    let preds = sample_predictions(cfg, &ck, &set)?;
    preds.save(&out)?;
    println!(
        "wrote {} histories x {} samples to {}",
        preds.histories.len(),
        preds.meta.samples_per_history,
        out.display()
    );
    Ok(out)
}

/// Model and zero-velocity records for `preds` scored against `set`.
pub fn evaluate_predictions(cfg: &RunConfig, preds: &PredictionSet, set: &MotionSet) -> Result<Vec<EvalRecord>> {
    preds.validate()?;
    if preds.skeleton != set.skeleton {
        return Err(Error::Config("prediction skeleton differs from the data skeleton".into()));
    }
    let m = &preds.meta;
    let mut futures = Vec::with_capacity(preds.histories.len());
    for (src, x) in m.sources.iter().zip(&preds.histories) {
        let clip = set
            .clips
            .get(src.clip)
            .ok_or_else(|| Error::Config(format!("prediction source clip {} not in data", src.clip)))?;
        let end = src.start + m.history + m.future;
        if end > clip.len() {
            return Err(Error::Config(format!("prediction source window ends past clip {}", src.clip)));
        }
        if &clip.frames.slice_rows(src.start, src.start + m.history)? != x {
            return Err(Error::Config(format!(
                "history from clip {} does not match the data (different preprocessing?)",
                src.clip
            )));
        }
        futures.push(clip.frames.slice_rows(src.start + m.history, end)?);
    }
    let mut train_cfg = cfg.clone();
    train_cfg.generator.history = m.history;
    train_cfg.generator.future = m.future;
    let (train_pairs, _) = split_pairs(&train_cfg, set)?;
    let reference = MotionStats::from_sequences(train_pairs.iter().map(|p| &p.y0))?;
    let mmgt = build_multimodal_gt(&preds.histories, cfg.eval.delta)?;
    let inputs = EvalInputs {
        futures: &futures,
        mmgt: &mmgt,
        reference: &reference,
    };
    let zero: Vec<Vec<Tensor>> = preds
        .histories
        .iter()
        .map(|x| Ok(vec![zero_velocity_baseline(x, m.future)?]))
        .collect::<Result<_>>()?;
    Ok(vec![
        evaluate("diffmotion", &preds.samples, &inputs)?,
        evaluate("zero_velocity", &zero, &inputs)?,
    ])
}

pub fn cmd_eval(cfg: &RunConfig, out: Option<&Path>, jsonl: Option<&Path>) -> Result<Vec<EvalRecord>> {
    let pred_path = required(&cfg.paths.predictions, "predictions")?;
    let preds = PredictionSet::load(pred_path)?;
    let set = load_dataset(cfg, required(&cfg.paths.data, "data")?)?;
    let records = evaluate_predictions(cfg, &preds, &set)?;
    let csv_path = match out {
        Some(p) => p.to_path_buf(),
        None => {
            let mut s = pred_path.as_os_str().to_owned();
            s.push(".metrics.csv");
            PathBuf::from(s)
        }
    };
    write(&csv_path, records_csv(&records))?;
    if let Some(path) = jsonl {
        let head = serde_json::json!({
            "run_config": provenance(cfg)?,
            "checkpoint_id": preds.meta.checkpoint_id,
        });
        write(path, format!("{head}\n{}", records_jsonl(&records)?))?;
    }
    print!("{}", records_table(&records));
    Ok(records)
}

pub fn cmd_plot(cfg: &RunConfig, args: &PlotArgs) -> Result<Vec<PathBuf>> {
    let out_dir = required(&cfg.paths.out_dir, "output directory")?.to_path_buf();
    // Render everything before touching the file system.
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    let tables = ScheduleKind::ALL
        .iter()
        .map(|&k| ScheduleTable::build(k, cfg.train.diffusion_steps))
        .collect::<Result<Vec<_>>>()?;
    files.push((out_dir.join("schedules.svg"), plot::schedule_plot(&tables)?));
    if let Some(path) = &cfg.paths.predictions {
        let preds = PredictionSet::load(path)?;
        let x = preds
            .histories
            .get(args.history)
            .ok_or_else(|| Error::InvalidArgument(format!("history {} not in prediction set", args.history)))?;
        let shown: Vec<Tensor> = preds.samples[args.history].iter().take(args.max_samples).cloned().collect();
        files.push((
            out_dir.join(format!("predictions_h{}.svg", args.history)),
            plot::stick_figure_strip(&preds.skeleton, x, None, &shown, args.frame_stride)?,
        ));
    }
    if let Some(path) = &args.loss {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        files.push((out_dir.join("loss.svg"), plot::loss_plot(&plot::parse_loss_csv(&text)?)?));
    }
    create_dir(&out_dir)?;
    for (path, svg) in &files {
        write(path, svg)?;
        println!("wrote {}", path.display());
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.resolve()?;
    match &cli.command {
        Command::Datagen(a) => cmd_datagen(&cfg, a.csv.as_deref()).map(drop),
        Command::Train(a) => cmd_train(&cfg, a.resume.as_deref()).map(drop),
        Command::Sample(_) => cmd_sample(&cfg).map(drop),
        Command::Eval(a) => cmd_eval(&cfg, a.out.as_deref(), a.jsonl.as_deref()).map(drop),
        Command::Plot(a) => cmd_plot(&cfg, a).map(drop),
    }
}

/// Parses `args` and runs them, returning the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
