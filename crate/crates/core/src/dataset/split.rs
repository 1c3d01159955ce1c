use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vaihingen patch numbers reserved for testing.
pub const VAIHINGEN_TEST_PATCHES: [u32; 5] = [11, 15, 28, 30, 34];

/// How tiles are divided into train and test sets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum SplitPolicy {
    /// Fixed Vaihingen test patches; ids must end in the patch number.
    Vaihingen,
    /// The last `ceil(n · test_fraction)` ids in sorted order are held out.
    Fraction { test_fraction: f64 },
}

/// Trailing decimal number of a tile id (`top_mosaic_09cm_area11` → 11).
pub fn patch_number(id: &str) -> Option<u32> {
    let digits = id.len() - id.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    if digits == 0 {
        return None;
    }
    id[id.len() - digits..].parse().ok()
}

/// Returns `(train, test)`, each in input order.
pub fn split_tiles(ids: &[String], policy: SplitPolicy) -> Result<(Vec<String>, Vec<String>)> {
    let (train, test): (Vec<String>, Vec<String>) = match policy {
        SplitPolicy::Vaihingen => {
            let mut flags = Vec::with_capacity(ids.len());
            for id in ids {
                let n = patch_number(id).ok_or_else(|| {
                    Error::InvalidArgument(format!("tile id `{id}` carries no patch number"))
                })?;
                flags.push(VAIHINGEN_TEST_PATCHES.contains(&n));
            }
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (id, is_test) in ids.iter().zip(flags) {
                if is_test { &mut test } else { &mut train }.push(id.clone());
            }
            (train, test)
        }
        SplitPolicy::Fraction { test_fraction } => {
            if !(test_fraction > 0.0 && test_fraction < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "test fraction must lie in (0, 1), got {test_fraction}"
                )));
            }
            let mut sorted = ids.to_vec();
            sorted.sort();
            let n_test = (ids.len() as f64 * test_fraction).ceil() as usize;
            let cut = sorted.len().saturating_sub(n_test);
            let test_set = &sorted[cut..];
            let (test, train) = ids.iter().cloned().partition(|id| test_set.contains(id));
            (train, test)
        }
    };
    if train.is_empty() {
        return Err(Error::InvalidArgument(
            "split leaves no training tiles".into(),
        ));
    }
    Ok((train, test))
}

/// Splits training tiles into `(train, validation)`; the validation side holds
/// `ceil(n · fraction)` tiles chosen by a seeded shuffle. Both sides keep input order.
pub fn hold_out_validation(
    ids: &[String],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "validation fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n_val = (ids.len() as f64 * fraction).ceil() as usize;
    if n_val == 0 || n_val >= ids.len() {
        return Err(Error::InvalidArgument(format!(
            "validation fraction {fraction} of {} tiles leaves one side empty",
            ids.len()
        )));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_val = vec![false; ids.len()];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (id, v) in ids.iter().zip(is_val) {
        if v { &mut val } else { &mut train }.push(id.clone());
    }
    Ok((train, val))
}
