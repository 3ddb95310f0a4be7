//! Scanline logistic detector.
//!
//! Every image row is a sample; its label is one when the row's vertical
//! center falls inside an annotated box. The model is logistic regression on
//! z-scored [`features`](super::features), fitted with plain mini-batch SGD on
//! mean binary cross-entropy. Prediction thresholds the per-row probability,
//! groups consecutive positive rows into runs, and finds each run's
//! horizontal extent from column darkness.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{
    page_median, scanline_features, scanline_labels, FeatureRow, Standardizer, FEATURES,
};
use super::{check_prediction, sort_by_score, Detector, TrainConfig, MAX_PREDICTION_SCORE};
use crate::dataset::{AnnotatedPage, PageImage};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seeding;
use crate::BBox;

// ---------------------------------------------------------------------------
// Scalar-generic model math
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams<T> {
    pub weights: [T; FEATURES],
    pub bias: T,
}

impl<T: Scalar> LogisticParams<T> {
    pub fn zeros() -> Self {
        Self {
            weights: [T::zero(); FEATURES],
            bias: T::zero(),
        }
    }

    /// `weights` followed by `bias`.
    pub fn to_vec(&self) -> Vec<T> {
        self.weights.iter().copied().chain([self.bias]).collect()
    }

    pub fn from_slice(v: &[T]) -> Self {
        let mut weights = [T::zero(); FEATURES];
        weights.copy_from_slice(&v[..FEATURES]);
        Self {
            weights,
            bias: v[FEATURES],
        }
    }

    #[inline]
    pub fn logit(&self, x: &[T; FEATURES]) -> T {
        self.weights
            .iter()
            .zip(x)
            .fold(self.bias, |acc, (w, v)| acc + *w * *v)
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy over the samples.
pub fn bce_loss<T: Scalar>(p: &LogisticParams<T>, xs: &[[T; FEATURES]], ys: &[T]) -> T {
    let total: T = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let z = p.logit(x);
            softplus(z) - y * z
        })
        .sum();
    total / T::from_count(xs.len())
}

/// Analytic gradient of [`bce_loss`]: mean of `(σ(z) − y) · [x, 1]`.
pub fn bce_gradient<T: Scalar>(
    p: &LogisticParams<T>,
    xs: &[[T; FEATURES]],
    ys: &[T],
) -> LogisticParams<T> {
    let mut g = LogisticParams::zeros();
    for (x, &y) in xs.iter().zip(ys) {
        let r = sigmoid(p.logit(x)) - y;
        for (gw, v) in g.weights.iter_mut().zip(x) {
            *gw = *gw + r * *v;
        }
        g.bias = g.bias + r;
    }
    let n = T::from_count(xs.len());
    g.weights.iter_mut().for_each(|w| *w = *w / n);
    g.bias = g.bias / n;
    g
}

// ---------------------------------------------------------------------------
// Detector
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticSettings {
    /// Scanlines with probability strictly above this are positive.
    pub cutoff: f64,
    /// Shortest run of positive scanlines that becomes a box.
    pub min_run: usize,
    /// Horizontal margin excluded from the fallback extent.
    pub margin: usize,
    /// Minimum darkness contrast between a run and the page background before
    /// the horizontal extent is estimated from column profiles.
    pub min_contrast: f64,
    pub seed: u64,
}

impl Default for LogisticSettings {
    fn default() -> Self {
        Self {
            cutoff: 0.5,
            min_run: 4,
            margin: 12,
            min_contrast: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LogisticDetector {
    params: LogisticParams<f64>,
    standardizer: Standardizer,
    settings: LogisticSettings,
    rng: ChaCha8Rng,
    epochs_trained: usize,
}

#[derive(Serialize)]
struct Checkpoint<'a> {
    kind: &'static str,
    weights: [f64; FEATURES],
    bias: f64,
    feature_mean: FeatureRow,
    feature_std: FeatureRow,
    epochs_trained: usize,
    settings: &'a LogisticSettings,
}

impl LogisticDetector {
    /// Parameters drawn from `N(0, init_std)` using `settings.seed`.
    pub fn new(settings: LogisticSettings, init_std: f64) -> Result<Self> {
        let normal = Normal::new(0.0, init_std)
            .map_err(|e| Error::InvalidConfig(format!("init std {init_std}: {e}")))?;
        let mut init_rng = seeding::rng(settings.seed, 0);
        let values: Vec<f64> = (0..=FEATURES).map(|_| normal.sample(&mut init_rng)).collect();
        Ok(Self::with_params(settings, LogisticParams::from_slice(&values)))
    }

    /// All-zero parameters, so every scanline starts at probability 0.5.
    pub fn zeroed(settings: LogisticSettings) -> Self {
        Self::with_params(settings, LogisticParams::zeros())
    }

    pub fn with_params(settings: LogisticSettings, params: LogisticParams<f64>) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(seeding::derive_seed(settings.seed, 1));
        Self {
            params,
            standardizer: Standardizer::default(),
            settings,
            rng,
            epochs_trained: 0,
        }
    }

    pub fn params(&self) -> &LogisticParams<f64> {
        &self.params
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn epochs_trained(&self) -> usize {
        self.epochs_trained
    }

    /// Standardized features and labels for every scanline of `pages`.
    fn samples(&self, pages: &[AnnotatedPage]) -> (Vec<FeatureRow>, Vec<f64>) {
        let per_page: Vec<(Vec<FeatureRow>, Vec<f64>)> = pages
            .par_iter()
            .map(|p| {
                let feats = scanline_features(&p.page);
                let labels = scanline_labels(p.page.height, &p.bboxes());
                (feats, labels)
            })
            .collect();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (f, l) in per_page {
            xs.extend(f);
            ys.extend(l);
        }
        (xs, ys)
    }

    /// Probability of "text row" for every scanline of `page`.
    pub fn scanline_probabilities(&self, page: &PageImage) -> Vec<f64> {
        scanline_features(page)
            .iter()
            .map(|f| sigmoid(self.params.logit(&self.standardizer.apply(f))))
            .collect()
    }

    /// Horizontal extent `[left, right)` of the run covering rows `top..bottom`.
    fn horizontal_extent(&self, page: &PageImage, top: usize, bottom: usize, background: f64) -> (usize, usize) {
        let w = page.width;
        let margin = self.settings.margin.min((w - 1) / 2);
        let fallback = (margin, w - margin);
        let rows = (bottom - top) as f64;
        let darkness: Vec<f64> = (0..w)
            .map(|x| 1.0 - (top..bottom).map(|y| f64::from(page.at(x, y))).sum::<f64>() / rows)
            .collect();
        let mut sorted = darkness.clone();
        sorted.sort_by(f64::total_cmp);
        let peak = sorted[(sorted.len() * 9) / 10];
        if peak - background < self.settings.min_contrast {
            return fallback;
        }
        let threshold = 0.5 * (peak + background);
        let first = darkness.iter().position(|&d| d > threshold);
        let last = darkness.iter().rposition(|&d| d > threshold);
        match (first, last) {
            (Some(a), Some(b)) => (a, b + 1),
            _ => fallback,
        }
    }
}

impl Detector for LogisticDetector {
    fn name(&self) -> &'static str {
        "logistic"
    }

    fn train(&mut self, pages: &[AnnotatedPage], config: &TrainConfig) -> Result<Vec<f64>> {
        config.validate()?;
        if pages.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let (raw, ys) = self.samples(pages);
        if raw.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        self.standardizer = Standardizer::fit(&raw);
        let xs: Vec<FeatureRow> = raw.iter().map(|r| self.standardizer.apply(r)).collect();

        let budget = config
            .epochs_per_iteration
            .min(config.max_total_epochs.saturating_sub(self.epochs_trained));
        let lr = config.learning_rate;
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let mut batch_x = Vec::with_capacity(config.batch_size);
        let mut batch_y = Vec::with_capacity(config.batch_size);
        let mut trace = Vec::with_capacity(budget);
        let mut best = f64::INFINITY;
        let mut stale = 0;

        for epoch in 0..budget {
            let loss = bce_loss(&self.params, &xs, &ys);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            trace.push(loss);
            if loss < best {
                best = loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }

            // mini-batches drawn uniformly without replacement within the epoch
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(config.batch_size) {
                batch_x.clear();
                batch_y.clear();
                batch_x.extend(chunk.iter().map(|&i| xs[i]));
                batch_y.extend(chunk.iter().map(|&i| ys[i]));
                let g = bce_gradient(&self.params, &batch_x, &batch_y);
                for (w, gw) in self.params.weights.iter_mut().zip(g.weights) {
                    *w -= lr * gw;
                }
                self.params.bias -= lr * g.bias;
            }
            self.epochs_trained += 1;
        }
        Ok(trace)
    }

    fn predict(&self, page: &PageImage) -> Result<Vec<BBox>> {
        let probs = self.scanline_probabilities(page);
        let background = 1.0 - f64::from(page_median(page));
        let mut boxes = Vec::new();
        let mut y = 0;
        while y < probs.len() {
            if probs[y] <= self.settings.cutoff {
                y += 1;
                continue;
            }
            let start = y;
            while y < probs.len() && probs[y] > self.settings.cutoff {
                y += 1;
            }
            if y - start < self.settings.min_run.max(1) {
                continue;
            }
            let (left, right) = self.horizontal_extent(page, start, y, background);
            let score = (probs[start..y].iter().sum::<f64>() / (y - start) as f64)
                .min(MAX_PREDICTION_SCORE);
            let b = BBox::new(
                left as f64,
                start as f64,
                (right - left) as f64,
                (y - start) as f64,
                score,
            )?;
            check_prediction(page, &b)?;
            boxes.push(b);
        }
        sort_by_score(&mut boxes);
        Ok(boxes)
    }

    fn checkpoint(&self) -> serde_json::Value {
        serde_json::to_value(Checkpoint {
            kind: "logistic",
            weights: self.params.weights,
            bias: self.params.bias,
            feature_mean: self.standardizer.mean,
            feature_std: self.standardizer.std,
            epochs_trained: self.epochs_trained,
            settings: &self.settings,
        })
        .expect("checkpoint serializes")
    }

    fn parameters(&self) -> Vec<f64> {
        self.params.to_vec()
    }
}
