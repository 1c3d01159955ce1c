//! Accuracy as a function of the rejection threshold.

use std::fmt::Write;

use super::{check_tau, top_class, ProbabilityMap, RejectRule};
use crate::dataset::ClassScheme;
use crate::error::{Error, Result};
use crate::labels::{LabelMap, IGNORE, UNKNOWN};
use crate::metrics::{mean_recall, normalized_accuracy, ConfusionMatrix};

pub const SWEEP_HEADER: &str = "tau,acc_all,acc_known,acc_unknown,acc_mean";

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub tau: f64,
    /// Normalized accuracy over every ground-truth row, UNKNOWN included.
    pub acc_all: Option<f64>,
    /// Normalized accuracy over the known-class rows.
    pub acc_known: Option<f64>,
    /// Fraction of held-out-class pixels rejected as UNKNOWN.
    pub acc_unknown: Option<f64>,
    /// Mean of the known and unknown accuracies.
    pub acc_mean: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
}

/// `0.00, 0.05, ..., 1.00`.
pub fn default_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// Evaluates every threshold of `grid` over a set of `(probabilities, ground
/// truth)` pairs. Ground truth is in dataset ids; IGNORE pixels are skipped.
pub fn sweep_thresholds(
    maps: &[(&ProbabilityMap, &LabelMap)],
    scheme: &ClassScheme,
    grid: &[f64],
    rule: RejectRule,
) -> Result<SweepCurve> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("threshold grid is empty".into()));
    }
    for &t in grid {
        check_tau(t)?;
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "threshold grid must be strictly increasing".into(),
        ));
    }
    let n = scheme.n_known();
    // (truth row, argmax, top probability) of every evaluated pixel
    let mut pixels: Vec<(usize, usize, f32)> = Vec::new();
    for (probs, truth) in maps {
        if (probs.height(), probs.width()) != truth.dims() {
            return Err(Error::Shape(format!(
                "probability map {}×{} vs ground truth {:?}",
                probs.height(),
                probs.width(),
                truth.dims()
            )));
        }
        if probs.classes() != n {
            return Err(Error::Shape(format!(
                "{} probabilities per pixel for {n} known classes",
                probs.classes()
            )));
        }
        for (p, &g) in probs.pixels().zip(truth.data()) {
            let row = match scheme.train_id(g) {
                IGNORE => continue,
                UNKNOWN => n,
                t => t as usize,
            };
            let (c, m) = top_class(p);
            pixels.push((row, c as usize, m));
        }
    }

    let mut points = Vec::with_capacity(grid.len());
    for &tau in grid {
        let mut cm = ConfusionMatrix::new(n);
        for &(row, c, m) in &pixels {
            cm.record(row, if rule.accepts(m, tau) { c } else { n });
        }
        let acc_known = mean_recall(&cm, 0..n);
        let acc_unknown = cm.recall(n);
        points.push(SweepPoint {
            tau,
            acc_all: normalized_accuracy(&cm).ok(),
            acc_known,
            acc_unknown,
            acc_mean: acc_known.zip(acc_unknown).map(|(k, u)| (k + u) / 2.0),
        });
    }
    Ok(SweepCurve { points })
}

/// Threshold with the highest mean accuracy; the smallest one on ties.
pub fn select_threshold(curve: &SweepCurve) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for p in &curve.points {
        if let Some(m) = p.acc_mean {
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((p.tau, m));
            }
        }
    }
    best.map(|(t, _)| t)
        .ok_or_else(|| Error::UndefinedMetric("no threshold has a defined mean accuracy".into()))
}

fn field(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

impl SweepCurve {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{SWEEP_HEADER}\n");
        for p in &self.points {
            writeln!(
                s,
                "{:.4},{},{},{},{}",
                p.tau,
                field(p.acc_all),
                field(p.acc_known),
                field(p.acc_unknown),
                field(p.acc_mean)
            )
            .expect("writing to a String");
        }
        s
    }

    /// Parses the layout written by [`Self::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let err = |line: usize, d: &str| Error::format("sweep curve", format!("line {line}: {d}"));
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == SWEEP_HEADER => {}
            _ => return Err(err(1, "missing header")),
        }
        let mut points = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(err(i + 1, "expected 5 fields"));
            }
            let num = |s: &str| -> Result<Option<f64>> {
                if s.trim().is_empty() {
                    return Ok(None);
                }
                match s.trim().parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(Some(v)),
                    _ => Err(err(i + 1, "bad number")),
                }
            };
            let tau = num(fields[0])?.ok_or_else(|| err(i + 1, "missing tau"))?;
            check_tau(tau).map_err(|e| err(i + 1, &e.to_string()))?;
            if points.last().is_some_and(|p: &SweepPoint| p.tau >= tau) {
                return Err(err(i + 1, "tau not increasing"));
            }
            points.push(SweepPoint {
                tau,
                acc_all: num(fields[1])?,
                acc_known: num(fields[2])?,
                acc_unknown: num(fields[3])?,
                acc_mean: num(fields[4])?,
            });
        }
        Ok(SweepCurve { points })
    }
}
