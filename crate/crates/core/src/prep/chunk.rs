use std::fmt;

use serde::{Deserialize, Serialize};

use super::{PrepConfig, PrepError};

/// Token-index interval `[start, end)` of one training/inference window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, token: usize) -> bool {
        self.start <= token && token < self.end
    }
}

impl From<[usize; 2]> for Window {
    fn from([start, end]: [usize; 2]) -> Self {
        Self { start, end }
    }
}

impl From<Window> for [usize; 2] {
    fn from(w: Window) -> Self {
        [w.start, w.end]
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Width, overlap and step derived from a config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowGeometry {
    pub width: usize,
    pub overlap: usize,
    pub step: usize,
}

impl WindowGeometry {
    pub fn from_config(cfg: &PrepConfig) -> Result<Self, PrepError> {
        cfg.validate()?;
        let width = cfg.max_seq_len;
        let overlap = (width as f64 * cfg.truncation_stride_ratio).round() as usize;
        let step = width.saturating_sub(overlap);
        if step == 0 {
            return Err(PrepError::InvalidConfig(format!(
                "window step is zero (width {width}, overlap {overlap})"
            )));
        }
        Ok(Self { width, overlap, step })
    }
}

/// Splits `n_tokens` into overlapping windows.
///
/// Windows start at `0, step, 2*step, ...` while they end before `n_tokens`;
/// the last window is right-aligned to `[n - width, n)`.
pub fn chunk_windows(n_tokens: usize, cfg: &PrepConfig) -> Result<Vec<Window>, PrepError> {
    let geo = WindowGeometry::from_config(cfg)?;
    Ok(chunk_with(n_tokens, geo))
}

pub fn chunk_with(n: usize, geo: WindowGeometry) -> Vec<Window> {
    if n == 0 {
        return Vec::new();
    }
    if n <= geo.width {
        return vec![Window { start: 0, end: n }];
    }
    let mut windows = Vec::with_capacity(n / geo.step + 1);
    let mut start = 0;
    while start + geo.width < n {
        windows.push(Window {
            start,
            end: start + geo.width,
        });
        start += geo.step;
    }
    windows.push(Window {
        start: n - geo.width,
        end: n,
    });
    windows
}

/// Index of the window whose center is nearest `token`; ties go to the earlier window.
pub fn winning_window(token: usize, windows: &[Window]) -> Option<usize> {
    windows
        .iter()
        .enumerate()
        .filter(|(_, w)| w.contains(token))
        .min_by_key(|(i, w)| ((2 * token + 1).abs_diff(w.start + w.end), *i))
        .map(|(i, _)| i)
}

/// Rebuilds one value per token from per-window outputs using the center-wins rule.
///
/// `per_window[k]` holds the values for `windows[k]`, one per token in that window.
pub fn reconstruct<T: Clone>(n_tokens: usize, windows: &[Window], per_window: &[Vec<T>]) -> Vec<T> {
    (0..n_tokens)
        .map(|t| {
            let k = winning_window(t, windows).expect("windows cover every token");
            per_window[k][t - windows[k].start].clone()
        })
        .collect()
}
