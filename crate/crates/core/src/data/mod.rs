//! Skeletons, synthetic multimodal motion, windowing and motion file I/O.

mod io;
mod skeleton;
mod synth;
mod window;

pub use io::{
    decode_motion, decode_motion_with, encode_motion, encode_motion_with, load_motion, save_motion,
    write_csv, MotionFile, FORMAT_VERSION,
};
pub use skeleton::Skeleton;
pub use synth::{synth_generate, SynthConfig};
pub use window::{window, WindowPair, WindowSet};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Optional provenance attached to a clip.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ClipLabel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<usize>,
}

/// A pose sequence of shape `[frames, joints, 3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub frames: Tensor,
    pub label: ClipLabel,
}

impl MotionClip {
    pub fn new(frames: Tensor, label: ClipLabel) -> Result<Self> {
        let s = frames.shape();
        if s.len() != 3 || s[2] != 3 {
            return Err(Error::InvalidArgument(format!(
                "motion clip must be [frames, joints, 3], got {s:?}"
            )));
        }
        if !frames.is_finite() {
            return Err(Error::NonFinite("motion clip".into()));
        }
        Ok(MotionClip { frames, label })
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn joints(&self) -> usize {
        self.frames.shape()[1]
    }
}

/// A set of clips sharing one skeleton and frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSet {
    pub skeleton: Skeleton,
    pub frame_rate: f64,
    pub clips: Vec<MotionClip>,
}

impl MotionSet {
    /// Splits clip indices into `(train, test)`; the last
    /// `round(test_fraction * n)` clips (at least one) form the test split.
    pub fn split_indices(&self, test_fraction: f64) -> (Vec<usize>, Vec<usize>) {
        let n = self.clips.len();
        let test = ((n as f64 * test_fraction).round() as usize).clamp(1, n.max(1));
        let cut = n.saturating_sub(test);
        ((0..cut).collect(), (cut..n).collect())
    }

    /// Copy with the root joint's position subtracted from every joint.
    pub fn root_relative(&self) -> MotionSet {
        let root = self.skeleton.topological_order()[0];
        let mut out = self.clone();
        for clip in &mut out.clips {
            let j = clip.joints();
            for frame in clip.frames.data_mut().chunks_mut(3 * j) {
                let origin = [frame[3 * root], frame[3 * root + 1], frame[3 * root + 2]];
                for p in frame.chunks_mut(3) {
                    for c in 0..3 {
                        p[c] -= origin[c];
                    }
                }
            }
        }
        out
    }
}
