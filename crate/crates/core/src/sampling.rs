//! Reverse chain: predict the clean future, re-diffuse it one step less,
//! repeat down to `t = 1`.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{load_motion, save_motion, ClipLabel, MotionClip, MotionSet, Skeleton};
use crate::error::{Error, FormatErrorCode, Result};
use crate::generator::Generator;
use crate::schedule::{ScheduleKind, ScheduleTable};
use crate::tensor::Tensor;

/// Anything that maps `(y_t, x, t)` to a clean-future estimate.
pub trait Denoiser {
    /// `[F, J, 3]` shape of the futures this denoiser produces.
    fn future_shape(&self) -> [usize; 3];

    fn denoise(&self, y_t: &Tensor, x: &Tensor, t: usize) -> Result<Tensor>;
}

impl Denoiser for Generator {
    fn future_shape(&self) -> [usize; 3] {
        [self.config().future, self.config().joints, 3]
    }

    fn denoise(&self, y_t: &Tensor, x: &Tensor, t: usize) -> Result<Tensor> {
        Ok(self.predict(y_t, x, t)?.0)
    }
}

/// One chain of exactly `T` denoiser calls starting from `y_T ~ N(0, I)`.
pub fn sample_one<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    denoiser: &D,
    x: &Tensor,
    schedule: &ScheduleTable,
    rng: &mut R,
) -> Result<Tensor> {
    let mut y_t = Tensor::randn(&denoiser.future_shape(), rng);
    let mut t = schedule.steps();
    loop {
        let y0 = denoiser.denoise(&y_t, x, t)?;
        if !y0.is_finite() {
            return Err(Error::NonFinite(format!("prediction at step {t}")));
        }
        if t == 1 {
            return Ok(y0);
        }
        let eps = Tensor::randn(y0.shape(), rng);
        y_t = schedule.diffuse(&y0, t - 1, &eps)?;
        t -= 1;
    }
}

/// RNG for sample `index` of history `history` under `seed`. Every pair
/// gets its own ChaCha stream, so results do not depend on call order.
pub fn sample_rng(seed: u64, history: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((history << 32) | (index & 0xffff_ffff));
    rng
}

/// `count` independent chains for history number `history`.
pub fn sample_many_indexed<D: Denoiser + ?Sized>(
    denoiser: &D,
    x: &Tensor,
    count: usize,
    schedule: &ScheduleTable,
    seed: u64,
    history: u64,
) -> Result<Vec<Tensor>> {
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    (0..count as u64)
        .map(|s| sample_one(denoiser, x, schedule, &mut sample_rng(seed, history, s)))
        .collect()
}

pub fn sample_many<D: Denoiser + ?Sized>(
    denoiser: &D,
    x: &Tensor,
    count: usize,
    schedule: &ScheduleTable,
    seed: u64,
) -> Result<Vec<Tensor>> {
    sample_many_indexed(denoiser, x, count, schedule, seed, 0)
}

/// Where a predicted history came from in the source dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSource {
    pub clip: usize,
    pub start: usize,
}

/// Provenance written next to a prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionMeta {
    pub seed: u64,
    pub diffusion_steps: usize,
    pub schedule: ScheduleKind,
    pub checkpoint_id: String,
    pub samples_per_history: usize,
    pub history: usize,
    pub future: usize,
    pub joints: usize,
    pub sources: Vec<WindowSource>,
    /// Resolved configuration of the producing run.
    #[serde(default)]
    pub run_config: Option<serde_json::Value>,
}

/// Sampled futures for a list of histories.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub meta: PredictionMeta,
    pub skeleton: Skeleton,
    pub frame_rate: f64,
    pub histories: Vec<Tensor>,
    /// `samples[h][s]` is sample `s` for history `h`.
    pub samples: Vec<Vec<Tensor>>,
}

impl PredictionSet {
    pub fn validate(&self) -> Result<()> {
        let m = &self.meta;
        let bad = |msg: String| Err(Error::format(FormatErrorCode::HeaderInvalid, msg));
        if self.histories.is_empty() {
            return bad("prediction set has no histories".into());
        }
        if self.histories.len() != self.samples.len() || m.sources.len() != self.histories.len() {
            return bad("history, sample and source counts disagree".into());
        }
        if m.samples_per_history == 0 {
            return bad("samples_per_history must be >= 1".into());
        }
        if self.skeleton.joints() != m.joints {
            return bad("skeleton joint count disagrees with meta".into());
        }
        for (x, ss) in self.histories.iter().zip(&self.samples) {
            if x.shape() != [m.history, m.joints, 3] {
                return bad(format!("history shape {:?}", x.shape()));
            }
            if ss.len() != m.samples_per_history {
                return bad(format!("expected {} samples, found {}", m.samples_per_history, ss.len()));
            }
            for s in ss {
                if s.shape() != [m.future, m.joints, 3] {
                    return bad(format!("sample shape {:?}", s.shape()));
                }
                if !s.is_finite() {
                    return Err(Error::NonFinite("prediction sample".into()));
                }
            }
        }
        Ok(())
    }

    /// One clip per `(history, sample)`, holding `[x; sample]`.
    pub fn to_motion_set(&self) -> Result<MotionSet> {
        self.validate()?;
        let mut clips = Vec::new();
        for (h, (x, ss)) in self.histories.iter().zip(&self.samples).enumerate() {
            for (s, y) in ss.iter().enumerate() {
                let label = ClipLabel {
                    mode: None,
                    history: Some(h),
                    sample: Some(s),
                };
                clips.push(MotionClip::new(Tensor::concat_rows(&[x, y])?, label)?);
            }
        }
        Ok(MotionSet {
            skeleton: self.skeleton.clone(),
            frame_rate: self.frame_rate,
            clips,
        })
    }

    pub fn from_motion_set(set: MotionSet, meta: PredictionMeta) -> Result<Self> {
        let per = meta.samples_per_history;
        let n_hist = meta.sources.len();
        if per == 0 || set.clips.len() != per * n_hist {
            return Err(Error::format(
                FormatErrorCode::LengthMismatch,
                format!(
                    "{} clips for {n_hist} histories x {per} samples",
                    set.clips.len()
                ),
            ));
        }
        let mut histories = Vec::with_capacity(n_hist);
        let mut samples = Vec::with_capacity(n_hist);
        for (i, clip) in set.clips.iter().enumerate() {
            let (h, s) = (i / per, i % per);
            if clip.label.history != Some(h) || clip.label.sample != Some(s) {
                return Err(Error::format(
                    FormatErrorCode::HeaderInvalid,
                    format!("clip {i} is not labelled as history {h}, sample {s}"),
                ));
            }
            if clip.len() != meta.history + meta.future {
                return Err(Error::format(
                    FormatErrorCode::LengthMismatch,
                    format!("clip {i} has {} frames", clip.len()),
                ));
            }
            if s == 0 {
                histories.push(clip.frames.slice_rows(0, meta.history)?);
                samples.push(Vec::with_capacity(per));
            }
            samples[h].push(clip.frames.slice_rows(meta.history, clip.len())?);
        }
        let out = PredictionSet {
            meta,
            skeleton: set.skeleton,
            frame_rate: set.frame_rate,
            histories,
            samples,
        };
        out.validate()?;
        Ok(out)
    }

    /// Sidecar path: `<path>.meta.json`.
    pub fn meta_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let set = self.to_motion_set()?;
        save_motion(&set, path)?;
        let meta_path = Self::meta_path(path);
        let json = serde_json::to_string_pretty(&self.meta)?;
        std::fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let set = load_motion(path)?;
        let meta_path = Self::meta_path(path);
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: PredictionMeta = serde_json::from_str(&text)?;
        Self::from_motion_set(set, meta)
    }
}
