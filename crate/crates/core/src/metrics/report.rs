use std::fmt::Write;

use serde::{Deserialize, Serialize};

pub const METRICS_HEADER: &str = "experiment,unknown_class,context,tau,oa,na,kappa";

/// One line of the metrics report. Undefined scores are written as empty fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub experiment: String,
    /// Held-out class name, or `none` for closed-set models.
    pub unknown_class: String,
    pub context: String,
    pub tau: f64,
    pub oa: Option<f64>,
    pub na: Option<f64>,
    pub kappa: Option<f64>,
}

fn field(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{:.4},{},{},{}",
            self.experiment,
            self.unknown_class,
            self.context,
            self.tau,
            field(self.oa),
            field(self.na),
            field(self.kappa)
        )
    }

    pub fn to_csv(rows: &[MetricsRow]) -> String {
        let mut s = format!("{METRICS_HEADER}\n");
        for r in rows {
            s.push_str(&r.to_csv_line());
            s.push('\n');
        }
        s
    }
}

/// Rows are held-out classes, columns are ground-truth classes.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRateMatrix {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

impl ErrorRateMatrix {
    pub fn get(&self, held_out: &str, truth: &str) -> Option<f64> {
        let c = self.columns.iter().position(|n| n == truth)?;
        self.rows.iter().find(|(n, _)| n == held_out)?.1[c]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("unknown_class");
        for c in &self.columns {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (name, rates) in &self.rows {
            s.push_str(name);
            for r in rates {
                write!(s, ",{}", field(*r)).expect("writing to a String");
            }
            s.push('\n');
        }
        s
    }
}
