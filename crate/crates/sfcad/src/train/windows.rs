//! Sliding-window construction over a labeled series.

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::model::MonitoringWindow;

/// One window of length `l` identified by its final frame index; the frames
/// span `[end+1-l, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct WindowRef {
    pub end: usize,
}

/// All `T - l + 1` overlapping windows of a series of length `T`.
pub fn make_windows(dataset: &Dataset, l: usize) -> Result<Vec<WindowRef>> {
    let t = dataset.len();
    if l == 0 {
        return Err(Error::Contract("window length must be >= 1".into()));
    }
    if t < l {
        return Err(Error::Contract(format!(
            "series of {t} frames is shorter than the window length {l}"
        )));
    }
    Ok((l - 1..t).map(|end| WindowRef { end }).collect())
}

/// Windows whose final frame lies in `split`. Windows may reach back into
/// the previous split for context frames; labels attach only to final
/// frames, so no label crosses a boundary.
pub fn windows_in_split(dataset: &Dataset, l: usize, split: Split) -> Result<Vec<WindowRef>> {
    let range = dataset.split_range(split)?;
    Ok(make_windows(dataset, l)?
        .into_iter()
        .filter(|w| range.contains(&w.end))
        .collect())
}

/// Copies a window's frames and labels out of the dataset. `prev_labels[i]`
/// is the ground-truth label of the step preceding frame `i` (0 before the
/// series start).
pub fn materialize(dataset: &Dataset, w: WindowRef, l: usize) -> MonitoringWindow {
    let start = w.end + 1 - l;
    MonitoringWindow {
        frames: (start..=w.end).map(|t| dataset.frame(t).clone()).collect(),
        label: dataset.label(w.end),
        prev_labels: (start..=w.end).map(|t| dataset.label_before(t)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SlaThresholds, SplitRatios};
    use crate::Tensor;

    fn series(t: usize) -> Dataset {
        let frames = (0..t)
            .map(|s| Tensor::new(vec![1, 2], vec![s as f64, 0.0]).unwrap())
            .collect();
        let labels = (0..t).map(|s| u8::from(s % 2 == 1)).collect();
        Dataset::new(
            "w".into(),
            vec!["fw".into()],
            SlaThresholds::DEFAULT,
            frames,
            labels,
        )
        .unwrap()
    }

    #[test]
    fn window_count_is_t_minus_l_plus_one() {
        let ds = series(5);
        let ws = make_windows(&ds, 3).unwrap();
        assert_eq!(ws.len(), 3);
        assert_eq!(ws.iter().map(|w| w.end).collect::<Vec<_>>(), vec![2, 3, 4]);

        // boundary: T == l gives exactly one window
        let one = make_windows(&series(3), 3).unwrap();
        assert_eq!(one.len(), 1);

        assert!(make_windows(&series(2), 3).is_err());
    }

    #[test]
    fn first_window_cold_start_label_is_zero() {
        let ds = series(5);
        let w = materialize(&ds, WindowRef { end: 2 }, 3);
        // frame 0's preceding label falls before the series: 0
        assert_eq!(w.prev_labels, vec![0, 0, 1]);
        assert_eq!(w.label, 0); // label of step 2
        assert_eq!(w.frames[0].values()[0], 0.0);
        assert_eq!(w.frames[2].values()[0], 2.0);
    }

    #[test]
    fn split_windows_may_reach_back_for_context() {
        let mut ds = series(1000);
        ds.split(SplitRatios::default(), 3).unwrap();
        let val = windows_in_split(&ds, 3, Split::Val).unwrap();
        // val frames are [650, 750); the first val window ends at 650 and
        // uses train frames 648-649 as context
        assert_eq!(val.first().unwrap().end, 650);
        assert_eq!(val.len(), 100);
        let w = materialize(&ds, val[0], 3);
        assert_eq!(w.frames[0].values()[0], 648.0);
    }
}
