//! Deterministic standalone SVG figures.

use std::fmt::Write as _;

use crate::data::Skeleton;
use crate::error::{Error, Result};
use crate::schedule::ScheduleTable;
use crate::tensor::Tensor;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn header(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// A named polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Line chart with linear axes spanning the data (y always includes 0).
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String> {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if all.is_empty() {
        return Err(Error::InvalidArgument("line chart needs at least one point".into()));
    }
    if all.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::NonFinite("line chart data".into()));
    }
    let (mut x0, mut x1) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let (mut y0, mut y1) = all.iter().fold((0f64, 0f64), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 <= y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = header(WIDTH, HEIGHT);
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>",
        WIDTH / 2.0,
        escape(title)
    );
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        "<path d=\"M{left:.1} {top:.1} L{left:.1} {bottom:.1} L{right:.1} {bottom:.1}\" stroke=\"black\" fill=\"none\"/>"
    );
    for (v, anchor_x, anchor_y, along_x) in [(x0, px(x0), bottom + 16.0, true), (x1, px(x1), bottom + 16.0, true), (y0, left - 6.0, py(y0) + 4.0, false), (y1, left - 6.0, py(y1) + 4.0, false)] {
        let anchor = if along_x { "middle" } else { "end" };
        let _ = writeln!(
            s,
            "<text x=\"{anchor_x:.1}\" y=\"{anchor_y:.1}\" text-anchor=\"{anchor}\" font-family=\"sans-serif\" font-size=\"11\">{v:.4}</text>"
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 {:.1})\">{}</text>",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let values: Vec<String> = ser.points.iter().map(|&(_, y)| format!("{y:.6}")).collect();
        let _ = writeln!(
            s,
            "<polyline data-series=\"{}\" data-values=\"{}\" points=\"{}\" stroke=\"{color}\" stroke-width=\"2\" fill=\"none\"/>",
            escape(&ser.name),
            values.join(" "),
            pts.join(" ")
        );
        let ly = MARGIN + 14.0 * i as f64;
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{ly:.1}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{}</text>",
            right - 140.0,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Signal weight `alpha_bar[t]` against `t` for each table.
pub fn schedule_plot(tables: &[ScheduleTable]) -> Result<String> {
    let series: Vec<Series> = tables
        .iter()
        .map(|t| Series {
            name: t.kind().to_string(),
            points: t.alpha_bars().iter().enumerate().map(|(i, &a)| (i as f64, a)).collect(),
        })
        .collect();
    line_chart("Noise schedules", "diffusion step t", "alpha_bar", &series)
}

/// Per-epoch loss curve.
pub fn loss_plot(points: &[(f64, f64)]) -> Result<String> {
    line_chart(
        "Training loss",
        "epoch",
        "mean loss",
        &[Series {
            name: "loss".into(),
            points: points.to_vec(),
        }],
    )
}

/// Parses `epoch,mean_loss,...` CSV rows into points.
pub fn parse_loss_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines();
    let head = lines.next().unwrap_or_default();
    if !head.starts_with("epoch,mean_loss") {
        return Err(Error::InvalidArgument("loss CSV must start with epoch,mean_loss".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut it = l.split(',');
            let mut num = || -> Result<f64> {
                it.next()
                    .and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| Error::InvalidArgument(format!("malformed loss CSV row {l:?}")))
            };
            Ok((num()?, num()?))
        })
        .collect()
}

/// Stick figures projected on the x-y plane: the first row shows the
/// history followed by the reference future (if any), each further row the
/// history followed by one sample. Every `stride`-th frame is drawn.
pub fn stick_figure_strip(
    skeleton: &Skeleton,
    history: &Tensor,
    reference: Option<&Tensor>,
    samples: &[Tensor],
    stride: usize,
) -> Result<String> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("stick figure strip needs at least one sample".into()));
    }
    let j = skeleton.joints();
    let check = |t: &Tensor| -> Result<()> {
        let s = t.shape();
        if s.len() != 3 || s[1] != j || s[2] != 3 {
            return Err(Error::shape("stick_figure_strip", s, &[0, j, 3]));
        }
        if !t.is_finite() {
            return Err(Error::NonFinite("stick figure input".into()));
        }
        Ok(())
    };
    check(history)?;
    for t in reference.into_iter().chain(samples) {
        check(t)?;
    }
    let stride = stride.max(1);
    let mut rows: Vec<Vec<&Tensor>> = Vec::new();
    rows.push(std::iter::once(history).chain(reference).collect());
    for s in samples {
        rows.push(vec![history, s]);
    }

    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for t in rows.iter().flatten() {
        for p in t.data().chunks(3) {
            for c in 0..2 {
                lo[c] = lo[c].min(p[c]);
                hi[c] = hi[c].max(p[c]);
            }
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
    let cell = 60.0;
    let scale = (cell - 10.0) / span;
    let frames_total = history.shape()[0] + samples[0].shape()[0].max(reference.map_or(0, |r| r.shape()[0]));
    let cols = frames_total.div_ceil(stride);
    let (w, h) = (cols as f64 * cell + 20.0, rows.len() as f64 * cell + 20.0);
    let mut s = header(w, h);
    let hist_len = history.shape()[0];
    for (r, parts) in rows.iter().enumerate() {
        let mut frame_index = 0;
        for (pi, part) in parts.iter().enumerate() {
            let color = if pi == 0 { "#7f7f7f" } else { PALETTE[r % PALETTE.len()] };
            for f in 0..part.shape()[0] {
                let global = frame_index + f;
                if global % stride != 0 {
                    continue;
                }
                let ox = 10.0 + (global / stride) as f64 * cell + 5.0;
                let oy = 10.0 + r as f64 * cell + cell - 5.0;
                let pose = &part.data()[f * 3 * j..(f + 1) * 3 * j];
                let at = |q: usize| (ox + (pose[3 * q] - lo[0]) * scale, oy - (pose[3 * q + 1] - lo[1]) * scale);
                let mut d = String::new();
                for q in 0..j {
                    if let Some(p) = skeleton.parent(q) {
                        let (a, b) = (at(p), at(q));
                        let _ = write!(d, "M{:.2} {:.2} L{:.2} {:.2} ", a.0, a.1, b.0, b.1);
                    }
                }
                let _ = writeln!(
                    s,
                    "<path data-row=\"{r}\" data-frame=\"{global}\" d=\"{}\" stroke=\"{color}\" stroke-width=\"1.5\" fill=\"none\"/>",
                    d.trim_end()
                );
            }
            frame_index += part.shape()[0];
        }
    }
    let sep = 10.0 + (hist_len as f64 / stride as f64).ceil() * cell;
    let _ = writeln!(
        s,
        "<line x1=\"{sep:.1}\" y1=\"5\" x2=\"{sep:.1}\" y2=\"{:.1}\" stroke=\"#bbbbbb\" stroke-dasharray=\"4 3\"/>",
        h - 5.0
    );
    s.push_str("</svg>\n");
    Ok(s)
}
