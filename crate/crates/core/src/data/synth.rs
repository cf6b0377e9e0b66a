//! Procedural multimodal motion.
//!
//! Every clip animates the same branched skeleton by forward kinematics.
//! The history follows one shared oscillation; from frame `H` on, each clip
//! blends into one of `M` continuation programs that offset the joint
//! angles in mode-specific directions. Bone lengths are constant, so poses
//! stay anatomically consistent.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ClipLabel, MotionClip, MotionSet, Skeleton};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SYNTH_FRAME_RATE: f64 = 25.0;

// Mode offsets in radians (azimuth) at full blend.
const MODE_AZIMUTH: f64 = 0.9;
const MODE_ELEVATION: f64 = 0.45;
const BASE_AMPLITUDE: f64 = 0.35;
const BASE_OMEGA: f64 = 2.0 * PI / 24.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub joints: usize,
    pub history: usize,
    pub future: usize,
    pub clips: usize,
    pub modes: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            joints: 6,
            history: 16,
            future: 32,
            clips: 600,
            modes: 3,
            noise: 0.01,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.joints == 0 {
            return Err(Error::Config("synth joints must be >= 1".into()));
        }
        if self.history < 2 || self.future < 2 {
            return Err(Error::Config("synth history and future must be >= 2".into()));
        }
        if self.modes == 0 {
            return Err(Error::Config("synth needs at least one mode".into()));
        }
        if self.clips < self.modes {
            return Err(Error::Config(format!(
                "clip count {} must be >= mode count {}",
                self.clips, self.modes
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("synth noise must be finite and >= 0".into()));
        }
        Ok(())
    }
}

struct Rig {
    skeleton: Skeleton,
    bone: Vec<f64>,
    rest_azimuth: Vec<f64>,
    phase: Vec<f64>,
}

impl Rig {
    fn new(joints: usize) -> Result<Self> {
        let skeleton = Skeleton::branched(joints)?;
        let mut bone = vec![0.0; joints];
        let mut rest_azimuth = vec![0.0; joints];
        let mut phase = vec![0.0; joints];
        for j in 1..joints {
            let depth = skeleton.depth(j) as f64;
            bone[j] = if j == 1 { 0.5 } else { 0.4 / depth.sqrt() };
            // Branches splay left/right of the spine.
            let side = if j == 1 {
                0.0
            } else if j % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            rest_azimuth[j] = if j == 1 { PI / 2.0 } else { side * 0.6 };
            phase[j] = 0.7 * j as f64;
        }
        Ok(Rig {
            skeleton,
            bone,
            rest_azimuth,
            phase,
        })
    }

    /// Joint positions for relative angles `(azimuth, elevation)` per joint.
    fn pose(&self, angles: &[(f64, f64)], out: &mut [f64]) {
        let joints = self.skeleton.joints();
        let mut heading = vec![(0.0, 0.0); joints];
        for j in self.skeleton.topological_order() {
            match self.skeleton.parent(j) {
                None => {
                    out[3 * j..3 * j + 3].copy_from_slice(&[0.0, 0.0, 0.0]);
                }
                Some(p) => {
                    let (pa, pe) = heading[p];
                    let az = pa + angles[j].0;
                    let el = pe + angles[j].1;
                    heading[j] = (az, el);
                    let l = self.bone[j];
                    for (c, d) in [az.cos() * el.cos(), az.sin() * el.cos(), el.sin()]
                        .into_iter()
                        .enumerate()
                    {
                        out[3 * j + c] = out[3 * p + c] + l * d;
                    }
                }
            }
        }
    }

    fn angles(&self, frame: usize, history: usize, future: usize, mode: usize, modes: usize) -> Vec<(f64, f64)> {
        let joints = self.skeleton.joints();
        let t = frame as f64;
        // Smoothstep blend from the first future frame over half the horizon.
        let blend = if frame < history {
            0.0
        } else {
            let u = ((frame - history + 1) as f64 / (future as f64 / 2.0)).min(1.0);
            u * u * (3.0 - 2.0 * u)
        };
        let theta = 2.0 * PI * mode as f64 / modes as f64;
        (0..joints)
            .map(|j| {
                if j == 0 {
                    return (0.0, 0.0);
                }
                let base = BASE_AMPLITUDE * (BASE_OMEGA * t + self.phase[j]).sin();
                let gamma = 0.9 * j as f64;
                let (da, de) = if modes > 1 {
                    (
                        MODE_AZIMUTH * (theta + gamma).cos(),
                        MODE_ELEVATION * (theta + gamma).sin(),
                    )
                } else {
                    (0.0, 0.0)
                };
                (self.rest_azimuth[j] + base + blend * da, blend * de)
            })
            .collect()
    }
}

/// Generates `config.clips` clips of `history + future` frames.
pub fn synth_generate(config: &SynthConfig) -> Result<MotionSet> {
    config.validate()?;
    let rig = Rig::new(config.joints)?;
    let joints = config.joints;
    let frames = config.history + config.future;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut modes: Vec<usize> = (0..config.clips).map(|i| i % config.modes).collect();
    modes.shuffle(&mut rng);

    let noise = if config.noise > 0.0 {
        Some(Normal::new(0.0, config.noise).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };

    let clean: Vec<Vec<f64>> = (0..config.modes)
        .map(|m| {
            let mut data = vec![0.0; frames * joints * 3];
            for f in 0..frames {
                let angles = rig.angles(f, config.history, config.future, m, config.modes);
                rig.pose(&angles, &mut data[f * joints * 3..(f + 1) * joints * 3]);
            }
            data
        })
        .collect();

    let clips = modes
        .into_iter()
        .map(|m| {
            let mut data = clean[m].clone();
            if let Some(n) = &noise {
                for v in &mut data {
                    *v += n.sample(&mut rng);
                }
            }
            MotionClip::new(
                Tensor::new(&[frames, joints, 3], data)?,
                ClipLabel {
                    mode: Some(m),
                    ..Default::default()
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(MotionSet {
        skeleton: rig.skeleton,
        frame_rate: SYNTH_FRAME_RATE,
        clips,
    })
}
