//! Confusion matrices and the scores derived from them.
//!
//! A matrix covers the known training ids `0..n_known` plus one trailing
//! UNKNOWN index. Rows are ground truth, columns are predictions.

mod report;

pub use report::{ErrorRateMatrix, MetricsRow, METRICS_HEADER};

use crate::dataset::ClassScheme;
use crate::error::{Error, Result};
use crate::labels::{LabelMap, PredictionMap, IGNORE, UNKNOWN};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    size: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    /// Empty matrix for `n_known` known classes plus UNKNOWN.
    pub fn new(n_known: usize) -> Self {
        let size = n_known + 1;
        ConfusionMatrix {
            size,
            counts: vec![0; size * size],
        }
    }

    /// Matrix from row-major counts; the last index plays the UNKNOWN role.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let size = rows.len();
        if size == 0 || rows.iter().any(|r| r.len() != size) {
            return Err(Error::Shape(
                "confusion matrix must be square and non-empty".into(),
            ));
        }
        Ok(ConfusionMatrix {
            size,
            counts: rows.concat(),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn n_known(&self) -> usize {
        self.size - 1
    }

    pub fn unknown_index(&self) -> usize {
        self.size - 1
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.size + pred]
    }

    pub fn record(&mut self, truth: usize, pred: usize) {
        self.counts[truth * self.size + pred] += 1;
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.counts.chunks_exact(self.size)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.size).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.counts[truth * self.size..][..self.size].iter().sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        (0..self.size).map(|t| self.get(t, pred)).sum()
    }

    /// Recall of one ground-truth row; `None` when the row is empty.
    pub fn recall(&self, truth: usize) -> Option<f64> {
        let n = self.row_sum(truth);
        (n > 0).then(|| self.get(truth, truth) as f64 / n as f64)
    }

    /// Adds another matrix of the same size.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.size != self.size {
            return Err(Error::Shape(format!(
                "cannot merge {0}×{0} confusion matrix into {1}×{1}",
                other.size, self.size
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// CSV with a header row of labels and one line per ground-truth label.
    pub fn to_csv(&self, labels: &[String]) -> Result<String> {
        if labels.len() != self.size {
            return Err(Error::Shape(format!(
                "{} labels for {} matrix rows",
                labels.len(),
                self.size
            )));
        }
        let mut s = String::from("truth\\pred");
        for l in labels {
            s.push(',');
            s.push_str(l);
        }
        s.push('\n');
        for (label, row) in labels.iter().zip(self.rows()) {
            s.push_str(label);
            for v in row {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        Ok(s)
    }
}

/// Row/column labels of a matrix built for `scheme`: known names, then `unknown`.
pub fn matrix_labels(scheme: &ClassScheme) -> Vec<String> {
    let mut labels: Vec<String> = scheme.known_names().into_iter().map(String::from).collect();
    labels.push("unknown".into());
    labels
}

/// Tallies one tile. `predictions` holds training ids or UNKNOWN; `truth` holds
/// dataset ids. IGNORE ground truth is skipped and held-out ground truth lands
/// in the UNKNOWN row.
pub fn accumulate(
    cm: &mut ConfusionMatrix,
    predictions: &PredictionMap,
    truth: &LabelMap,
    scheme: &ClassScheme,
) -> Result<()> {
    if predictions.dims() != truth.dims() {
        return Err(Error::Shape(format!(
            "prediction map {:?} vs ground truth {:?}",
            predictions.dims(),
            truth.dims()
        )));
    }
    if cm.n_known() != scheme.n_known() {
        return Err(Error::Shape(format!(
            "matrix has {} known classes, scheme has {}",
            cm.n_known(),
            scheme.n_known()
        )));
    }
    let n = scheme.n_known();
    let index = |v: u8| -> Option<usize> {
        if v == UNKNOWN {
            Some(n)
        } else if (v as usize) < n {
            Some(v as usize)
        } else {
            None
        }
    };
    for (&p, &g) in predictions.data().iter().zip(truth.data()) {
        let t = scheme.train_id(g);
        if t == IGNORE {
            continue;
        }
        let pi = index(p).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "prediction label {p} invalid for {n} known classes"
            ))
        })?;
        cm.record(index(t).expect("scheme yields known ids or UNKNOWN"), pi);
    }
    Ok(())
}

pub fn confusion_matrix(
    predictions: &PredictionMap,
    truth: &LabelMap,
    scheme: &ClassScheme,
) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(scheme.n_known());
    accumulate(&mut cm, predictions, truth, scheme)?;
    Ok(cm)
}

fn nonempty(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.total() {
        0 => Err(Error::UndefinedMetric("confusion matrix is empty".into())),
        n => Ok(n as f64),
    }
}

/// Trace over total.
pub fn overall_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    Ok(cm.trace() as f64 / nonempty(cm)?)
}

/// Mean per-class recall over rows with at least one ground-truth pixel.
pub fn normalized_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    nonempty(cm)?;
    mean_recall(cm, 0..cm.size()).ok_or_else(|| Error::UndefinedMetric("no non-empty rows".into()))
}

/// Mean recall over the given rows, skipping empty ones.
pub fn mean_recall(cm: &ConfusionMatrix, rows: impl IntoIterator<Item = usize>) -> Option<f64> {
    let recalls: Vec<f64> = rows.into_iter().filter_map(|r| cm.recall(r)).collect();
    (!recalls.is_empty()).then(|| recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// `(p_o - p_e) / (1 - p_e)` with chance agreement from the marginals.
pub fn cohen_kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let total = nonempty(cm)?;
    let p_o = cm.trace() as f64 / total;
    let p_e = (0..cm.size())
        .map(|i| cm.row_sum(i) as f64 * cm.col_sum(i) as f64)
        .sum::<f64>()
        / (total * total);
    if p_e >= 1.0 {
        return Err(Error::UndefinedMetric(
            "kappa undefined: chance agreement is 1".into(),
        ));
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Error rate `1 - recall` for every dataset class (in dataset order), using
/// the UNKNOWN row for the held-out class. `None` marks classes absent from
/// the ground truth.
pub fn class_error_rates(cm: &ConfusionMatrix, scheme: &ClassScheme) -> Result<Vec<Option<f64>>> {
    if cm.n_known() != scheme.n_known() {
        return Err(Error::Shape("matrix does not match scheme".into()));
    }
    Ok((0..scheme.classes().len())
        .map(|d| {
            let row = match scheme.train_id(d as u8) {
                UNKNOWN => cm.unknown_index(),
                t => t as usize,
            };
            cm.recall(row).map(|r| 1.0 - r)
        })
        .collect())
}

/// Error-rate matrix over leave-one-out runs: one row per held-out class in
/// dataset order, one column per dataset class. Each class must be held out
/// by exactly one run.
pub fn per_class_error_rates(runs: &[(&ClassScheme, &ConfusionMatrix)]) -> Result<ErrorRateMatrix> {
    let classes = match runs.first() {
        Some((s, _)) => s.classes().to_vec(),
        None => return Err(Error::InvalidArgument("no experiments given".into())),
    };
    let mut rows: Vec<Option<Vec<Option<f64>>>> = vec![None; classes.len()];
    for (scheme, cm) in runs {
        if scheme.classes() != classes.as_slice() {
            return Err(Error::InvalidArgument(
                "experiments use different class lists".into(),
            ));
        }
        let held = scheme
            .unknown_dataset_id()
            .ok_or_else(|| Error::InvalidArgument("closed-set run has no held-out class".into()))?;
        if rows[held].is_some() {
            return Err(Error::InvalidArgument(format!(
                "duplicate experiment for `{}`",
                classes[held]
            )));
        }
        rows[held] = Some(class_error_rates(cm, scheme)?);
    }
    let rows = rows
        .into_iter()
        .zip(&classes)
        .map(|(r, name)| {
            r.map(|r| (name.clone(), r)).ok_or_else(|| {
                Error::InvalidArgument(format!("missing experiment with `{name}` held out"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorRateMatrix {
        columns: classes,
        rows,
    })
}
