//! Variance schedules and closed-form forward diffusion.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Lower bound on every per-step retention factor.
pub const ALPHA_FLOOR: f64 = 1e-5;
/// Upper bound on the terminal signal weight.
pub const TERMINAL_ALPHA_BAR: f64 = 1e-5;
const COSINE_STANDARD_OFFSET: f64 = 0.008;
const LINEAR_BETA_START: f64 = 1e-4;
const LINEAR_BETA_END: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Linear,
    CosineStandard,
    CosineOffset1,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 3] = [
        ScheduleKind::Linear,
        ScheduleKind::CosineStandard,
        ScheduleKind::CosineOffset1,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScheduleKind::Linear => "linear",
            ScheduleKind::CosineStandard => "cosine_standard",
            ScheduleKind::CosineOffset1 => "cosine_offset1",
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScheduleKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown schedule kind {s:?}")))
    }
}

/// Tabulated `alpha_bar[0..=T]` and `alpha[1..=T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleTable {
    kind: ScheduleKind,
    steps: usize,
    alpha_bar: Vec<f64>,
    // alpha[t - 1] holds the factor for step t.
    alpha: Vec<f64>,
}

// cos(x)^2 written as (1 + cos 2x) / 2, which lands exactly on 0.5 at
// x = pi/4 and on 0 at x = pi/2.
fn cos_squared(x: f64) -> f64 {
    0.5 * (1.0 + (2.0 * x).cos())
}

/// Offset-1 cosine curve, unnormalized: `f(0) = 0.5`.
fn cosine_offset1(t: usize, steps: usize) -> f64 {
    let u = (t as f64 / steps as f64 + 1.0) / 2.0;
    cos_squared(u * FRAC_PI_2)
}

fn cosine_standard(t: usize, steps: usize) -> f64 {
    let s = COSINE_STANDARD_OFFSET;
    let u = (t as f64 / steps as f64 + s) / (1.0 + s);
    cos_squared(u * FRAC_PI_2)
}

impl ScheduleTable {
    pub fn build(kind: ScheduleKind, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument(
                "schedule needs at least one diffusion step".into(),
            ));
        }
        let (start, raw_alpha): (f64, Vec<f64>) = match kind {
            ScheduleKind::CosineOffset1 => {
                let f: Vec<f64> = (0..=steps).map(|t| cosine_offset1(t, steps)).collect();
                (f[0], (1..=steps).map(|t| f[t] / f[t - 1]).collect())
            }
            ScheduleKind::CosineStandard => {
                let f: Vec<f64> = (0..=steps).map(|t| cosine_standard(t, steps)).collect();
                (1.0, (1..=steps).map(|t| f[t] / f[t - 1]).collect())
            }
            ScheduleKind::Linear => {
                let scale = 1000.0 / steps as f64;
                let (b0, b1) = (LINEAR_BETA_START * scale, LINEAR_BETA_END * scale);
                let betas = (0..steps).map(|i| {
                    if steps == 1 {
                        b0
                    } else {
                        b0 + (b1 - b0) * i as f64 / (steps - 1) as f64
                    }
                });
                (1.0, betas.map(|b| 1.0 - b).collect())
            }
        };

        let mut alpha = Vec::with_capacity(steps);
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(start);
        for (i, &a) in raw_alpha.iter().enumerate() {
            let prev = alpha_bar[i];
            let mut a = a.clamp(ALPHA_FLOOR, 1.0 - 1e-12);
            if i + 1 == steps {
                // Terminal step must leave at most TERMINAL_ALPHA_BAR of signal.
                a = a.min(TERMINAL_ALPHA_BAR / prev).max(ALPHA_FLOOR);
            }
            alpha.push(a);
            let mut next = prev * a;
            if i + 1 == steps {
                // prev * (bound / prev) can round one ulp above the bound.
                next = next.min(TERMINAL_ALPHA_BAR);
            }
            alpha_bar.push(next);
        }
        Ok(ScheduleTable {
            kind,
            steps,
            alpha_bar,
            alpha,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bar.get(t).copied().ok_or(Error::OutOfRange {
            what: "diffusion step",
            index: t,
            max: self.steps,
        })
    }

    /// Per-step factor for `t` in `1..=T`.
    pub fn alpha(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.steps {
            return Err(Error::OutOfRange {
                what: "diffusion step (alpha is defined for t >= 1)",
                index: t,
                max: self.steps,
            });
        }
        Ok(self.alpha[t - 1])
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// `sqrt(alpha_bar[t]) * y0 + sqrt(1 - alpha_bar[t]) * eps`.
    pub fn diffuse(&self, y0: &Tensor, t: usize, eps: &Tensor) -> Result<Tensor> {
        let ab = self.alpha_bar(t)?;
        let (signal, noise) = (ab.sqrt(), (1.0 - ab).sqrt());
        y0.zip_map(eps, |y, e| signal * y + noise * e)
    }

    /// CSV with columns `t,alpha,alpha_bar`; `alpha` is empty at `t = 0`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,alpha,alpha_bar\n");
        for (t, ab) in self.alpha_bar.iter().enumerate() {
            if t == 0 {
                s.push_str(&format!("0,,{ab:.17e}\n"));
            } else {
                s.push_str(&format!("{t},{:.17e},{ab:.17e}\n", self.alpha[t - 1]));
            }
        }
        s
    }
}
