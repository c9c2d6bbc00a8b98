//! Labeled SFC monitoring datasets: construction, chronological splits, and
//! z-score normalization from training statistics.

mod csv_io;
mod normalize;

pub use csv_io::{load_csv, manifest_path, save_csv, Manifest};
pub use normalize::NormStats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// The 23 monitored metrics, in column order. `time` and `instance` are row
/// keys, not features.
pub const METRIC_COLUMNS: [&str; 23] = [
    "cpu_idle",
    "cpu_interrupt",
    "cpu_nice",
    "cpu_softirq",
    "cpu_steal",
    "cpu_system",
    "cpu_user",
    "cpu_wait",
    "mem_free",
    "mem_buffered",
    "mem_cached",
    "mem_used",
    "disk_free",
    "reserved",
    "disk_used",
    "io_read",
    "io_write",
    "io_time",
    "network_rx_bytes",
    "network_tx_bytes",
    "network_rx_packets",
    "network_tx_packets",
    "network_latency",
];

pub const D_INPUT: usize = METRIC_COLUMNS.len();

/// SLA thresholds used for labeling; recorded in the dataset manifest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlaThresholds {
    /// Response-time limit in milliseconds.
    pub response_time_ms: f64,
    /// Availability floor as a success-rate fraction.
    pub availability_floor: f64,
}

impl SlaThresholds {
    /// The default labeling profile: 250 ms, 99.95% success rate.
    pub const DEFAULT: SlaThresholds = SlaThresholds {
        response_time_ms: 250.0,
        availability_floor: 0.9995,
    };

    /// The strict labeling profile: 200 ms, 99.99% success rate.
    pub const STRICT: SlaThresholds = SlaThresholds {
        response_time_ms: 200.0,
        availability_floor: 0.9999,
    };
}

/// One row of a monitoring CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub time: usize,
    pub vnf_index: usize,
    pub metrics: Vec<f64>,
    pub label: u8,
}

/// Which contiguous chronological slice of a dataset to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn label(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Frame indices: `[0, train_end)` train, `[train_end, val_end)` validation,
/// `[val_end, T)` test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBoundaries {
    pub train_end: usize,
    pub val_end: usize,
}

/// Chronological split fractions. Defaults follow a 65/10/25 partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.65,
            val: 0.10,
            test: 0.25,
        }
    }
}

/// A labeled time-series of `V x d_input` frames with split boundaries and
/// normalization statistics. Immutable once prepared; reads are thread-safe.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub chain: Vec<String>,
    pub sla: SlaThresholds,
    frames: Vec<Tensor>,
    labels: Vec<u8>,
    splits: Option<SplitBoundaries>,
    norm: Option<NormStats>,
}

impl Dataset {
    pub fn new(
        name: String,
        chain: Vec<String>,
        sla: SlaThresholds,
        frames: Vec<Tensor>,
        labels: Vec<u8>,
    ) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Contract("dataset without frames".into()));
        }
        if frames.len() != labels.len() {
            return Err(Error::Contract(format!(
                "{} frames but {} labels",
                frames.len(),
                labels.len()
            )));
        }
        let v = chain.len();
        if v == 0 {
            return Err(Error::Contract("empty VNF chain".into()));
        }
        let width = frames[0].cols();
        for (t, f) in frames.iter().enumerate() {
            if f.rows() != v || f.cols() != width {
                return Err(Error::Integrity(format!(
                    "frame at step {t} is {}x{}, expected {v}x{width}",
                    f.rows(),
                    f.cols()
                )));
            }
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Integrity("labels must be 0 or 1".into()));
        }
        Ok(Dataset {
            name,
            chain,
            sla,
            frames,
            labels,
            splits: None,
            norm: None,
        })
    }

    /// Number of time steps.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Chain length V.
    pub fn v(&self) -> usize {
        self.chain.len()
    }

    /// Features per VNF (23 for datasets loaded from the CSV schema).
    pub fn d_input(&self) -> usize {
        self.frames[0].cols()
    }

    pub fn frame(&self, t: usize) -> &Tensor {
        &self.frames[t]
    }

    pub fn frames(&self) -> &[Tensor] {
        &self.frames
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, t: usize) -> u8 {
        self.labels[t]
    }

    /// Label of step `t` where `t` may be -1 relative to the series start;
    /// the step before the first frame counts as normal.
    pub fn label_before(&self, t: usize) -> u8 {
        if t == 0 {
            0
        } else {
            self.labels[t - 1]
        }
    }

    pub fn boundaries(&self) -> Option<SplitBoundaries> {
        self.splits
    }

    pub fn norm_stats(&self) -> Option<&NormStats> {
        self.norm.as_ref()
    }

    /// Chronological contiguous split. Frame counts follow the floor rule:
    /// `train = floor(r_train*T)`, `val = floor(r_val*T)`, test the rest.
    /// Every split must hold at least `min_len` frames (the window length of
    /// the model that will consume it).
    pub fn split(&mut self, ratios: SplitRatios, min_len: usize) -> Result<()> {
        let sum = ratios.train + ratios.val + ratios.test;
        if ratios.train <= 0.0 || ratios.val <= 0.0 || ratios.test <= 0.0 {
            return Err(Error::Contract(format!(
                "split ratios must be positive, got {ratios:?}"
            )));
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!(
                "split ratios sum to {sum}, expected 1"
            )));
        }
        let t = self.len();
        let train = (ratios.train * t as f64).floor() as usize;
        let val = (ratios.val * t as f64).floor() as usize;
        let test = t - train - val;
        if train < min_len || val < min_len || test < min_len {
            return Err(Error::Contract(format!(
                "splits of {train}/{val}/{test} frames cannot all hold a window of {min_len}"
            )));
        }
        self.splits = Some(SplitBoundaries {
            train_end: train,
            val_end: train + val,
        });
        Ok(())
    }

    /// Frame index range of a split.
    pub fn split_range(&self, split: Split) -> Result<std::ops::Range<usize>> {
        let b = self
            .splits
            .ok_or_else(|| Error::Contract("dataset has not been split".into()))?;
        Ok(match split {
            Split::Train => 0..b.train_end,
            Split::Val => b.train_end..b.val_end,
            Split::Test => b.val_end..self.len(),
        })
    }

    /// Z-scores every feature using mean/std computed from the training
    /// split only; constant features map to zero. Requires `split` first.
    pub fn normalize(&mut self) -> Result<()> {
        let range = self.split_range(Split::Train)?;
        let stats = NormStats::from_frames(&self.frames[range])?;
        self.normalize_with(stats)
    }

    /// Applies externally supplied statistics (e.g. from a checkpoint).
    pub fn normalize_with(&mut self, stats: NormStats) -> Result<()> {
        if self.norm.is_some() {
            return Err(Error::Contract("dataset is already normalized".into()));
        }
        for frame in &mut self.frames {
            *frame = stats.apply(frame)?;
        }
        self.norm = Some(stats);
        Ok(())
    }
}
