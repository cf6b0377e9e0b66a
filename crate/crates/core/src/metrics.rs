//! Diversity, accuracy and motion-statistics metrics for sampled futures.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn frame_len(t: &Tensor) -> usize {
    t.shape()[1..].iter().product()
}

fn check_same(samples: &[Tensor], gt: &Tensor) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    match samples.iter().find(|s| s.shape() != gt.shape()) {
        Some(s) => Err(Error::shape("metric", s.shape(), gt.shape())),
        None => Ok(()),
    }
}

/// Mean L2 distance over all sample pairs of flattened sequences; 0 for a
/// single sample.
pub fn apd(samples: &[Tensor]) -> f64 {
    let s = samples.len();
    if s < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..s {
        for j in i + 1..s {
            total += l2(samples[i].data(), samples[j].data());
        }
    }
    2.0 * total / (s * (s - 1)) as f64
}

/// Frame-averaged pose distance of the closest sample.
pub fn ade(samples: &[Tensor], gt: &Tensor) -> Result<f64> {
    check_same(samples, gt)?;
    let d = frame_len(gt);
    let frames = gt.shape()[0] as f64;
    Ok(samples
        .iter()
        .map(|s| {
            s.data()
                .chunks(d)
                .zip(gt.data().chunks(d))
                .map(|(a, b)| l2(a, b))
                .sum::<f64>()
                / frames
        })
        .fold(f64::INFINITY, f64::min))
}

/// Last-frame pose distance of the closest sample.
pub fn fde(samples: &[Tensor], gt: &Tensor) -> Result<f64> {
    check_same(samples, gt)?;
    let d = frame_len(gt);
    let last = gt.numel() - d;
    Ok(samples
        .iter()
        .map(|s| l2(&s.data()[last..], &gt.data()[last..]))
        .fold(f64::INFINITY, f64::min))
}

/// For each history, the indices of histories whose last observed pose lies
/// within `delta` of its own (always including itself).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodalGroundTruth {
    pub delta: f64,
    pub groups: Vec<Vec<usize>>,
}

impl MultimodalGroundTruth {
    /// Futures of group `h`.
    pub fn futures<'a>(&self, h: usize, futures: &'a [Tensor]) -> Vec<&'a Tensor> {
        self.groups[h].iter().map(|&i| &futures[i]).collect()
    }
}

/// Groups histories by the distance between their final frames.
pub fn build_multimodal_gt(histories: &[Tensor], delta: f64) -> Result<MultimodalGroundTruth> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let last: Vec<&[f64]> = histories
        .iter()
        .map(|x| {
            let d = frame_len(x);
            &x.data()[x.numel() - d..]
        })
        .collect();
    if let Some(bad) = last.iter().find(|l| l.len() != last[0].len()) {
        return Err(Error::shape("build_multimodal_gt", &[bad.len()], &[last[0].len()]));
    }
    let groups = (0..last.len())
        .map(|a| {
            (0..last.len())
                .filter(|&b| a == b || l2(last[a], last[b]) <= delta)
                .collect()
        })
        .collect();
    Ok(MultimodalGroundTruth { delta, groups })
}

fn group_mean(group: &[&Tensor], f: impl Fn(&Tensor) -> Result<f64>) -> Result<f64> {
    if group.is_empty() {
        return Err(Error::InvalidArgument("empty multimodal group".into()));
    }
    let mut total = 0.0;
    for g in group {
        total += f(g)?;
    }
    Ok(total / group.len() as f64)
}

pub fn mmade(samples: &[Tensor], group: &[&Tensor]) -> Result<f64> {
    group_mean(group, |g| ade(samples, g))
}

pub fn mmfde(samples: &[Tensor], group: &[&Tensor]) -> Result<f64> {
    group_mean(group, |g| fde(samples, g))
}

/// `|APD(group futures) - APD(samples)|`.
pub fn apde_one(samples: &[Tensor], group: &[&Tensor]) -> f64 {
    let owned: Vec<Tensor> = group.iter().map(|&t| t.clone()).collect();
    (apd(&owned) - apd(samples)).abs()
}

/// Mean of [`apde_one`] over histories.
pub fn apde(
    prediction_sets: &[Vec<Tensor>],
    mmgt: &MultimodalGroundTruth,
    futures: &[Tensor],
) -> Result<f64> {
    if prediction_sets.is_empty() || prediction_sets.len() != mmgt.groups.len() {
        return Err(Error::InvalidArgument(
            "prediction sets and multimodal groups must match and be nonempty".into(),
        ));
    }
    let total: f64 = prediction_sets
        .iter()
        .enumerate()
        .map(|(h, s)| apde_one(s, &mmgt.futures(h, futures)))
        .sum();
    Ok(total / prediction_sets.len() as f64)
}

/// Mean per-frame displacement `||pose[f+1] - pose[f]||` for `f` in
/// `0..F-1`, averaged over a collection of sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionStats {
    pub displacement: Vec<f64>,
}

impl MotionStats {
    pub fn from_sequences<'a>(seqs: impl IntoIterator<Item = &'a Tensor>) -> Result<Self> {
        let mut acc: Option<(Vec<f64>, Vec<usize>)> = None;
        let mut count = 0usize;
        for s in seqs {
            let frames = s.shape()[0];
            if frames < 2 {
                return Err(Error::InvalidArgument("sequences need at least two frames".into()));
            }
            let (sum, shape) = acc.get_or_insert_with(|| (vec![0.0; frames - 1], s.shape().to_vec()));
            if s.shape() != shape.as_slice() {
                return Err(Error::shape("motion stats", s.shape(), shape));
            }
            let d = frame_len(s);
            let data = s.data();
            for (f, slot) in sum.iter_mut().enumerate() {
                *slot += l2(&data[f * d..(f + 1) * d], &data[(f + 1) * d..(f + 2) * d]);
            }
            count += 1;
        }
        let (sum, _) = acc.ok_or_else(|| Error::InvalidArgument("no sequences".into()))?;
        Ok(MotionStats {
            displacement: sum.iter().map(|v| v / count as f64).collect(),
        })
    }
}

/// Weighted area between cumulative displacement curves:
/// `sum_{f=1}^{F-1} (F - f) |d_pred(f) - d_ref(f)|`.
pub fn cmd(prediction_sets: &[Vec<Tensor>], reference: &MotionStats) -> Result<f64> {
    let pred = MotionStats::from_sequences(prediction_sets.iter().flatten())?;
    cmd_from_stats(&pred, reference)
}

pub fn cmd_from_stats(pred: &MotionStats, reference: &MotionStats) -> Result<f64> {
    let n = reference.displacement.len();
    if pred.displacement.len() != n {
        return Err(Error::shape(
            "cmd",
            &[pred.displacement.len()],
            &[reference.displacement.len()],
        ));
    }
    let frames = n + 1;
    Ok(pred
        .displacement
        .iter()
        .zip(&reference.displacement)
        .enumerate()
        .map(|(i, (p, r))| (frames - (i + 1)) as f64 * (p - r).abs())
        .sum())
}

/// Repeats the last observed frame `future` times.
pub fn zero_velocity_baseline(x: &Tensor, future: usize) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 3 || s[0] == 0 || future == 0 {
        return Err(Error::InvalidArgument(format!(
            "zero-velocity baseline needs a [H, J, 3] history and F >= 1, got {s:?}"
        )));
    }
    let last = x.slice_rows(s[0] - 1, s[0])?;
    let rows: Vec<&Tensor> = std::iter::repeat_n(&last, future).collect();
    Tensor::concat_rows(&rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryMetrics {
    pub history: usize,
    pub apd: f64,
    pub apde: f64,
    pub ade: f64,
    pub fde: f64,
    pub mmade: f64,
    pub mmfde: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub apd: f64,
    pub apde: f64,
    pub ade: f64,
    pub fde: f64,
    pub mmade: f64,
    pub mmfde: f64,
    pub cmd: f64,
}

/// Metrics of one method over a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub method: String,
    pub per_history: Vec<HistoryMetrics>,
    pub aggregate: Aggregate,
}

/// Inputs shared by every evaluated method.
pub struct EvalInputs<'a> {
    pub futures: &'a [Tensor],
    pub mmgt: &'a MultimodalGroundTruth,
    pub reference: &'a MotionStats,
}

/// Per-history metrics and their unweighted means over histories.
pub fn evaluate(method: &str, prediction_sets: &[Vec<Tensor>], inputs: &EvalInputs<'_>) -> Result<EvalRecord> {
    let n = prediction_sets.len();
    if n == 0 || n != inputs.futures.len() || n != inputs.mmgt.groups.len() {
        return Err(Error::InvalidArgument(format!(
            "{n} prediction sets for {} futures and {} groups",
            inputs.futures.len(),
            inputs.mmgt.groups.len()
        )));
    }
    let mut per_history = Vec::with_capacity(n);
    for (h, samples) in prediction_sets.iter().enumerate() {
        let gt = &inputs.futures[h];
        let group = inputs.mmgt.futures(h, inputs.futures);
        per_history.push(HistoryMetrics {
            history: h,
            apd: apd(samples),
            apde: apde_one(samples, &group),
            ade: ade(samples, gt)?,
            fde: fde(samples, gt)?,
            mmade: mmade(samples, &group)?,
            mmfde: mmfde(samples, &group)?,
        });
    }
    let mean = |f: fn(&HistoryMetrics) -> f64| per_history.iter().map(f).sum::<f64>() / n as f64;
    let aggregate = Aggregate {
        apd: mean(|m| m.apd),
        apde: mean(|m| m.apde),
        ade: mean(|m| m.ade),
        fde: mean(|m| m.fde),
        mmade: mean(|m| m.mmade),
        mmfde: mean(|m| m.mmfde),
        cmd: cmd(prediction_sets, inputs.reference)?,
    };
    Ok(EvalRecord {
        method: method.to_string(),
        per_history,
        aggregate,
    })
}

const COLUMNS: [&str; 7] = ["APD", "APDE", "ADE", "FDE", "MMADE", "MMFDE", "CMD"];

impl Aggregate {
    fn values(&self) -> [f64; 7] {
        [self.apd, self.apde, self.ade, self.fde, self.mmade, self.mmfde, self.cmd]
    }
}

pub fn records_csv(records: &[EvalRecord]) -> String {
    let mut s = String::from("method,apd,apde,ade,fde,mmade,mmfde,cmd\n");
    for r in records {
        s.push_str(&r.method);
        for v in r.aggregate.values() {
            let _ = write!(s, ",{v:.17e}");
        }
        s.push('\n');
    }
    s
}

pub fn records_table(records: &[EvalRecord]) -> String {
    let width = records.iter().map(|r| r.method.len()).max().unwrap_or(0).max(6);
    let mut s = format!("{:<width$}", "method");
    for c in COLUMNS {
        let _ = write!(s, " {c:>9}");
    }
    s.push('\n');
    for r in records {
        let _ = write!(s, "{:<width$}", r.method);
        for v in r.aggregate.values() {
            let _ = write!(s, " {v:>9.3}");
        }
        s.push('\n');
    }
    s
}

/// One JSON object per history and method.
pub fn records_jsonl(records: &[EvalRecord]) -> Result<String> {
    let mut s = String::new();
    for r in records {
        for h in &r.per_history {
            let mut v = serde_json::to_value(h)?;
            v["method"] = serde_json::Value::String(r.method.clone());
            s.push_str(&serde_json::to_string(&v)?);
            s.push('\n');
        }
    }
    Ok(s)
}
