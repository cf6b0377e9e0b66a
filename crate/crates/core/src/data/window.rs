use super::MotionClip;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One `(history, future)` training or test pair.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub x: Tensor,
    pub y0: Tensor,
    pub clip: usize,
    pub start: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowSet {
    pub pairs: Vec<WindowPair>,
    /// Clips shorter than `history + future`.
    pub skipped: usize,
}

/// Slides a `history + future` window over every clip with the given stride.
pub fn window(clips: &[MotionClip], history: usize, future: usize, stride: usize) -> Result<WindowSet> {
    if history == 0 || future == 0 || stride == 0 {
        return Err(Error::InvalidArgument(
            "window history, future and stride must be positive".into(),
        ));
    }
    let span = history + future;
    let mut out = WindowSet::default();
    for (ci, clip) in clips.iter().enumerate() {
        if clip.len() < span {
            out.skipped += 1;
            continue;
        }
        let mut start = 0;
        while start + span <= clip.len() {
            out.pairs.push(WindowPair {
                x: clip.frames.slice_rows(start, start + history)?,
                y0: clip.frames.slice_rows(start + history, start + span)?,
                clip: ci,
                start,
            });
            start += stride;
        }
    }
    if out.skipped > 0 {
        log::warn!("window: skipped {} clip(s) shorter than {span} frames", out.skipped);
    }
    Ok(out)
}
