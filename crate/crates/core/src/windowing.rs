//! Sliding-window samples and train/validation/test splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub const DEFAULT_WINDOW: usize = 10;
pub const DEFAULT_HORIZON: usize = 1;

/// One supervised example anchored at time `t_index`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedSample {
    pub t_index: usize,
    /// `[nodes, features, window]` values from times
    /// `t_index − window + 1 ..= t_index`.
    pub input: Tensor,
    /// Target series value at `t_index + horizon`.
    pub target: f64,
}

/// Number of samples `make_windows` produces, or `None` when the series is
/// too short.
pub fn window_count(timepoints: usize, window: usize, horizon: usize) -> Option<usize> {
    (timepoints >= window + horizon).then(|| timepoints - window - horizon + 1)
}

/// Cuts `features[nodes, feat, T]` into overlapping windows of length
/// `window`, each paired with `target_series[t + horizon]`.
pub fn make_windows(
    features: &Tensor,
    target_series: &[f64],
    window: usize,
    horizon: usize,
) -> Result<Vec<WindowedSample>> {
    let [nodes, feat, t] = features.shape()[..] else {
        return Err(Error::dim("make_windows", features.shape(), &[]));
    };
    if target_series.len() != t {
        return Err(Error::dim(
            "make_windows",
            features.shape(),
            &[target_series.len()],
        ));
    }
    if window == 0 || horizon == 0 {
        return Err(Error::Config("window and horizon must be positive".into()));
    }
    let count = window_count(t, window, horizon).ok_or(Error::InsufficientData {
        required: window + horizon,
        available: t,
    })?;
    let rows = nodes * feat;
    let data = features.data();
    let samples = (0..count)
        .map(|k| {
            let anchor = window - 1 + k;
            let start = anchor + 1 - window;
            let mut input = Vec::with_capacity(rows * window);
            for r in 0..rows {
                input.extend_from_slice(&data[r * t + start..r * t + anchor + 1]);
            }
            WindowedSample {
                t_index: anchor,
                input: Tensor::new(vec![nodes, feat, window], input).expect("window shape"),
                target: target_series[anchor + horizon],
            }
        })
        .collect();
    Ok(samples)
}

/// Train / validation / test partitions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<WindowedSample>,
    pub validation: Vec<WindowedSample>,
    pub test: Vec<WindowedSample>,
}

/// `(floor(0.7n), floor(0.2n), rest)`.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 7 / 10;
    let validation = n * 2 / 10;
    (train, validation, n - train - validation)
}

/// Contiguous 7:2:1 split of time-ordered samples.
pub fn chronological_split(samples: Vec<WindowedSample>) -> Result<SplitDataset> {
    if samples.windows(2).any(|w| w[0].t_index >= w[1].t_index) {
        return Err(Error::Contract("samples must be in time order".into()));
    }
    split_in_order(samples)
}

/// 7:2:1 split after a seeded shuffle. Each partition is re-sorted by time.
pub fn random_split(mut samples: Vec<WindowedSample>, seed: u64) -> Result<SplitDataset> {
    samples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut split = split_in_order(samples)?;
    for part in [&mut split.train, &mut split.validation, &mut split.test] {
        part.sort_by_key(|s| s.t_index);
    }
    Ok(split)
}

fn split_in_order(mut samples: Vec<WindowedSample>) -> Result<SplitDataset> {
    let n = samples.len();
    let (train, validation, test) = split_sizes(n);
    if train == 0 || validation == 0 || test == 0 {
        return Err(Error::Config(format!(
            "{n} samples give an empty split ({train}/{validation}/{test})"
        )));
    }
    let test_part = samples.split_off(train + validation);
    let validation_part = samples.split_off(train);
    Ok(SplitDataset {
        train: samples,
        validation: validation_part,
        test: test_part,
    })
}

/// Contiguous mini-batches; the last one may be short. Panics if
/// `batch_size` is zero.
pub fn batch<T>(samples: &[T], batch_size: usize) -> Vec<&[T]> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    samples.chunks(batch_size).collect()
}
