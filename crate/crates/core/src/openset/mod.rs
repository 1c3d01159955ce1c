//! Open-set decisions on top of per-pixel class distributions.

mod morph;
mod probmap;
mod sweep;

pub use morph::{morph_filter, morph_filter_ordered, ScanOrder};
pub use probmap::ProbabilityMap;
pub use sweep::{
    default_grid, select_threshold, sweep_thresholds, SweepCurve, SweepPoint, SWEEP_HEADER,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{PredictionMap, UNKNOWN};

/// When a pixel's top probability counts as confident enough.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectRule {
    /// Keep the prediction when `max ≥ τ`.
    #[default]
    AtLeast,
    /// Keep the prediction only when `max > τ`.
    Exceeds,
}

impl RejectRule {
    pub fn accepts(self, max_prob: f32, tau: f64) -> bool {
        match self {
            RejectRule::AtLeast => max_prob as f64 >= tau,
            RejectRule::Exceeds => max_prob as f64 > tau,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpenSetConfig {
    pub tau: f64,
    pub rule: RejectRule,
    /// Side of the square neighborhood used by [`morph_filter`].
    pub window: usize,
}

impl Default for OpenSetConfig {
    fn default() -> Self {
        OpenSetConfig {
            tau: 0.7,
            rule: RejectRule::AtLeast,
            window: 3,
        }
    }
}

impl OpenSetConfig {
    pub fn validate(&self) -> Result<()> {
        check_tau(self.tau)?;
        check_window(self.window)
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!(
            "threshold must lie in [0, 1], got {tau}"
        )));
    }
    Ok(())
}

pub(crate) fn check_window(side: usize) -> Result<()> {
    if side < 3 || side.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "window side must be odd and at least 3, got {side}"
        )));
    }
    Ok(())
}

/// Top class of a distribution (lowest id on ties) and its probability.
pub fn top_class(probs: &[f32]) -> (u8, f32) {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    (best as u8, probs[best])
}

/// Plain argmax decoding.
pub fn argmax_decode(probs: &ProbabilityMap) -> PredictionMap {
    let data = probs.pixels().map(|p| top_class(p).0).collect();
    PredictionMap::new(probs.height(), probs.width(), data)
        .expect("dimensions come from a valid map")
}

/// Argmax label where the top probability reaches `tau`, UNKNOWN elsewhere.
pub fn threshold_reject(probs: &ProbabilityMap, tau: f64) -> Result<PredictionMap> {
    threshold_reject_with(probs, tau, RejectRule::AtLeast)
}

pub fn threshold_reject_with(
    probs: &ProbabilityMap,
    tau: f64,
    rule: RejectRule,
) -> Result<PredictionMap> {
    check_tau(tau)?;
    let data = probs
        .pixels()
        .map(|p| {
            let (c, m) = top_class(p);
            if rule.accepts(m, tau) {
                c
            } else {
                UNKNOWN
            }
        })
        .collect();
    PredictionMap::new(probs.height(), probs.width(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_pixel(p: &[f32]) -> ProbabilityMap {
        ProbabilityMap::new(1, 1, p.len(), p.to_vec()).unwrap()
    }

    #[test]
    fn rejection_examples() {
        let confident = one_pixel(&[0.9, 0.05, 0.03, 0.02]);
        assert_eq!(threshold_reject(&confident, 0.7).unwrap().data(), &[0]);
        let unsure = one_pixel(&[0.4, 0.3, 0.2, 0.1]);
        assert_eq!(threshold_reject(&unsure, 0.7).unwrap().data(), &[UNKNOWN]);
        assert_eq!(
            threshold_reject(&unsure, 0.0).unwrap(),
            argmax_decode(&unsure)
        );
    }

    #[test]
    fn equality_follows_the_rule() {
        let m = one_pixel(&[0.5, 0.5]);
        assert_eq!(threshold_reject(&m, 0.5).unwrap().data(), &[0]);
        assert_eq!(
            threshold_reject_with(&m, 0.5, RejectRule::Exceeds)
                .unwrap()
                .data(),
            &[UNKNOWN]
        );
        let certain = one_pixel(&[0.0, 1.0]);
        assert_eq!(threshold_reject(&certain, 1.0).unwrap().data(), &[1]);
    }

    #[test]
    fn tau_outside_unit_interval() {
        let m = one_pixel(&[0.5, 0.5]);
        assert!(threshold_reject(&m, -0.1).is_err());
        assert!(threshold_reject(&m, 1.01).is_err());
        assert!(threshold_reject(&m, f64::NAN).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(OpenSetConfig::default().validate().is_ok());
        assert!(OpenSetConfig {
            window: 4,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(OpenSetConfig {
            window: 1,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(OpenSetConfig {
            tau: 2.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
