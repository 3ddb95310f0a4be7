//! The trainable row detector contract and its implementations.
//!
//! * [`LogisticDetector`]: per-scanline logistic regression trained with plain
//!   mini-batch SGD; positive scanline runs become row boxes.
//! * [`OracleDetector`]: returns perturbed copies of known boxes. Used to test
//!   the self-paced loop independently of detector quality.
//! * [`ExternalDetector`]: delegates to a subprocess speaking the
//!   manifest-in / predictions-out protocol.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedPage, PageImage};
use crate::error::{Error, Result};
use crate::BBox;

mod external;
pub mod features;
pub mod logistic;
mod oracle;

pub use external::{external_detect, ExternalDetector};
pub use logistic::{LogisticDetector, LogisticParams, LogisticSettings};
pub use oracle::{oracle_predict, OracleDetector, OracleSkill};

/// Largest score a predicted box may carry; 1 is reserved for ground truth.
pub const MAX_PREDICTION_SCORE: f64 = 1.0 - 1.0 / 1048576.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Epoch budget of one training call (one self-paced iteration).
    pub epochs_per_iteration: usize,
    /// Cap on epochs summed over every training call of a model.
    pub max_total_epochs: usize,
    /// Stop after this many epochs without a lower loss.
    pub patience: usize,
    pub batch_size: usize,
    /// Standard deviation of the normal parameter initialization.
    pub init_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs_per_iteration: 60,
            max_total_epochs: 2000,
            patience: 10,
            batch_size: 64,
            init_std: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.epochs_per_iteration > 0
            && self.max_total_epochs > 0
            && self.patience > 0
            && self.batch_size > 0
            && self.init_std > 0.0
            && self.init_std.is_finite();
        if !positive {
            return Err(Error::InvalidConfig(format!(
                "training hyperparameters must be positive: {self:?}"
            )));
        }
        if self.patience > self.epochs_per_iteration {
            return Err(Error::InvalidConfig(format!(
                "patience {} exceeds epochs per iteration {}",
                self.patience, self.epochs_per_iteration
            )));
        }
        Ok(())
    }
}

/// `f(θ, x)`: a detector that can be trained on annotated pages and asked for
/// boxes on unseen pages.
pub trait Detector: Send + Sync {
    fn name(&self) -> &'static str;

    /// Continues training from the current parameters; returns one loss value
    /// per epoch run (empty for detectors without an internal loss).
    fn train(&mut self, pages: &[AnnotatedPage], config: &TrainConfig) -> Result<Vec<f64>>;

    /// Boxes for one page, scores in `[0, 1)`, sorted by score descending.
    fn predict(&self, page: &PageImage) -> Result<Vec<BBox>>;

    fn predict_many(&self, pages: &[&PageImage]) -> Result<Vec<Vec<BBox>>> {
        pages.par_iter().map(|p| self.predict(p)).collect()
    }

    /// Serializable snapshot of the model parameters.
    fn checkpoint(&self) -> serde_json::Value;

    /// Flat parameter vector `θ` (empty when the detector has none).
    fn parameters(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Enforces the prediction contract at the boundary: inside the page, valid
/// geometry, score strictly below one.
pub(crate) fn check_prediction(page: &PageImage, b: &BBox) -> Result<()> {
    b.validate().map_err(|e| Error::page(&page.id, e.to_string()))?;
    if b.score >= 1.0 {
        return Err(Error::ReservedScore {
            page: page.id.clone(),
            score: b.score,
        });
    }
    if !b.within(page.width as f64, page.height as f64) {
        return Err(Error::page(&page.id, format!("predicted box {b:?} leaves the page")));
    }
    Ok(())
}

pub(crate) fn sort_by_score(boxes: &mut [BBox]) {
    boxes.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.y.partial_cmp(&b.y).unwrap_or(std::cmp::Ordering::Equal))
    });
}
