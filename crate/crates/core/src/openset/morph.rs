//! Erosion of the UNKNOWN region.
//!
//! An UNKNOWN pixel survives only if its whole neighborhood (clipped to the
//! map) is UNKNOWN. Otherwise it takes the most frequent known label among its
//! neighbors, lowest id first on ties. Known pixels are left alone, and all
//! decisions read the unmodified input.

use super::check_window;
use crate::error::Result;
use crate::labels::{PredictionMap, UNKNOWN};

/// Visiting order of the filter. Results do not depend on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanOrder {
    Forward,
    Reverse,
}

pub fn morph_filter(pred: &PredictionMap, side: usize) -> Result<PredictionMap> {
    morph_filter_ordered(pred, side, ScanOrder::Forward)
}

pub fn morph_filter_ordered(
    pred: &PredictionMap,
    side: usize,
    order: ScanOrder,
) -> Result<PredictionMap> {
    check_window(side)?;
    let (h, w) = pred.dims();
    let r = side / 2;
    let mut out = pred.clone();
    let mut visit = |i: usize| {
        let (y, x) = (i / w, i % w);
        if pred.get(y, x) != UNKNOWN {
            return;
        }
        let mut votes = [0u32; 256];
        for ny in y.saturating_sub(r)..=(y + r).min(h - 1) {
            for nx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                let v = pred.get(ny, nx);
                if v != UNKNOWN {
                    votes[v as usize] += 1;
                }
            }
        }
        let mut best = UNKNOWN;
        let mut best_count = 0;
        for (label, &n) in votes.iter().enumerate() {
            if n > best_count {
                best = label as u8;
                best_count = n;
            }
        }
        out.set(y, x, best);
    };
    match order {
        ScanOrder::Forward => (0..h * w).for_each(&mut visit),
        ScanOrder::Reverse => (0..h * w).rev().for_each(&mut visit),
    }
    Ok(out)
}
