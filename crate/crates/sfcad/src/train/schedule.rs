//! Batch scheduling across datasets whose chains differ in length.
//!
//! Every batch is drawn from exactly one dataset, so the windows inside a
//! batch share V; datasets appear in proportion to their window counts
//! because all their batches enter one deterministic shuffle.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};

use super::windows::WindowRef;

/// A V-homogeneous batch: windows from one dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub dataset: usize,
    pub windows: Vec<WindowRef>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// One epoch's batches: per dataset, shuffle its windows and chunk them into
/// batches (the trailing partial batch included); then shuffle the combined
/// batch list. Deterministic in `(seed, epoch)`; per-dataset shuffles are
/// keyed by the dataset name, so permuting the dataset list changes only the
/// interleaving order, never the batch multiset.
pub fn joint_schedule(
    datasets: &[&Dataset],
    window_sets: &[Vec<WindowRef>],
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Batch>> {
    if datasets.len() != window_sets.len() || datasets.is_empty() {
        return Err(Error::Contract(
            "schedule needs one window set per dataset".into(),
        ));
    }
    if batch_size == 0 {
        return Err(Error::Contract("batch_size must be >= 1".into()));
    }
    let d_input = datasets[0].d_input();
    if datasets.iter().any(|d| d.d_input() != d_input) {
        return Err(Error::Contract(
            "jointly trained datasets must share d_input".into(),
        ));
    }

    let epoch_mix = epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut batches = Vec::new();
    for (idx, (dataset, set)) in datasets.iter().zip(window_sets).enumerate() {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ epoch_mix ^ fnv1a(dataset.name.as_bytes()));
        let mut windows = set.clone();
        windows.shuffle(&mut rng);
        for chunk in windows.chunks(batch_size) {
            batches.push(Batch {
                dataset: idx,
                windows: chunk.to_vec(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ epoch_mix ^ 0x5bd1_e995);
    batches.shuffle(&mut rng);
    Ok(batches)
}
