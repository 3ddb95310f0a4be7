//! Per-scanline features.
//!
//! For image row `y`: mean intensity, intensity standard deviation, mean
//! absolute difference to row `y - 1` (zero for the first row), and the share
//! of pixels darker than the page median.

use crate::dataset::PageImage;
use crate::BBox;

pub const FEATURES: usize = 4;

pub type FeatureRow = [f64; FEATURES];

/// Median intensity of the whole page (upper median for even counts).
pub fn page_median(page: &PageImage) -> f32 {
    let mut px = page.pixels.clone();
    let mid = px.len() / 2;
    let (_, m, _) = px.select_nth_unstable_by(mid, f32::total_cmp);
    *m
}

pub fn scanline_features(page: &PageImage) -> Vec<FeatureRow> {
    let median = page_median(page);
    let w = page.width as f64;
    (0..page.height)
        .map(|y| {
            let row = page.row(y);
            let mean = row.iter().map(|&v| f64::from(v)).sum::<f64>() / w;
            let var = row
                .iter()
                .map(|&v| (f64::from(v) - mean).powi(2))
                .sum::<f64>()
                / w;
            let grad = if y == 0 {
                0.0
            } else {
                row.iter()
                    .zip(page.row(y - 1))
                    .map(|(&a, &b)| f64::from((a - b).abs()))
                    .sum::<f64>()
                    / w
            };
            let dark = row.iter().filter(|&&v| v < median).count() as f64 / w;
            [mean, var.sqrt(), grad, dark]
        })
        .collect()
}

/// Scanline `y` is positive when its vertical center `y + 0.5` lies inside
/// some box.
pub fn scanline_labels(height: usize, boxes: &[BBox]) -> Vec<f64> {
    let mut labels = vec![0.0; height];
    for b in boxes {
        // first scanline with y + 0.5 >= b.y, first with y + 0.5 >= bottom
        let start = (b.y - 0.5).ceil().max(0.0) as usize;
        let end = ((b.bottom() - 0.5).ceil().max(0.0) as usize).min(height);
        for l in labels.iter_mut().take(end).skip(start) {
            *l = 1.0;
        }
    }
    labels
}

/// Per-feature z-scoring fitted on a training set.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardizer {
    pub mean: FeatureRow,
    pub std: FeatureRow,
}

impl Default for Standardizer {
    fn default() -> Self {
        Self {
            mean: [0.0; FEATURES],
            std: [1.0; FEATURES],
        }
    }
}

impl Standardizer {
    /// Constant features keep unit scale.
    pub fn fit(rows: &[FeatureRow]) -> Self {
        if rows.is_empty() {
            return Self::default();
        }
        let n = rows.len() as f64;
        let mut mean = [0.0; FEATURES];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = [0.0; FEATURES];
        for r in rows {
            for ((s, v), m) in std.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        for s in &mut std {
            *s = (*s / n).sqrt();
            if *s < 1e-12 {
                *s = 1.0;
            }
        }
        Self { mean, std }
    }

    #[inline]
    pub fn apply(&self, row: &FeatureRow) -> FeatureRow {
        let mut out = [0.0; FEATURES];
        for i in 0..FEATURES {
            out[i] = (row[i] - self.mean[i]) / self.std[i];
        }
        out
    }
}
