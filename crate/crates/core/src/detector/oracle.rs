use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sort_by_score, Detector, TrainConfig};
use crate::dataset::{AnnotatedPage, Corpus, PageImage};
use crate::error::{Error, Result};
use crate::seeding;
use crate::BBox;

/// How well the oracle reproduces the true boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSkill {
    /// Probability that each true box is returned.
    pub recall: f64,
    /// Each true box spawns a false positive with probability `1 - precision`.
    pub precision: f64,
    /// Uniform perturbation in pixels applied to every coordinate.
    pub jitter: f64,
}

impl OracleSkill {
    pub const PERFECT: Self = Self {
        recall: 1.0,
        precision: 1.0,
        jitter: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if unit(self.recall) && unit(self.precision) && self.jitter >= 0.0 && self.jitter.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid oracle skill {self:?}")))
        }
    }
}

fn clamp_into(x: f64, y: f64, w: f64, h: f64, pw: f64, ph: f64) -> (f64, f64, f64, f64) {
    let w = w.clamp(1.0, pw);
    let h = h.clamp(1.0, ph);
    (x.clamp(0.0, pw - w), y.clamp(0.0, ph - h), w, h)
}

/// Perturbed copies of `truth` on a `width` x `height` page. Scores are drawn
/// from `U[0.6, 0.95]`. Deterministic in `seed`.
pub fn oracle_predict(
    truth: &[BBox],
    width: usize,
    height: usize,
    skill: OracleSkill,
    seed: u64,
) -> Result<Vec<BBox>> {
    skill.validate()?;
    let mut rng = seeding::rng(seed, 0);
    let (pw, ph) = (width as f64, height as f64);
    let j = skill.jitter;
    let mut out = Vec::new();
    for t in truth {
        if rng.random_bool(skill.recall) {
            let mut d = || if j > 0.0 { rng.random_range(-j..=j) } else { 0.0 };
            let (x, y, w, h) = clamp_into(t.x + d(), t.y + d(), t.w + d(), t.h + d(), pw, ph);
            let score = rng.random_range(0.6..=0.95);
            out.push(BBox::new(x, y, w, h, score)?);
        }
        if rng.random_bool(1.0 - skill.precision) {
            let (x, y, w, h) = clamp_into(
                rng.random_range(0.0..pw),
                rng.random_range(0.0..ph),
                t.w,
                t.h,
                pw,
                ph,
            );
            let score = rng.random_range(0.6..=0.95);
            out.push(BBox::new(x, y, w, h, score)?);
        }
    }
    sort_by_score(&mut out);
    Ok(out)
}

/// Looks up each page's complete boxes and answers with [`oracle_predict`].
/// Training is a no-op.
#[derive(Debug, Clone)]
pub struct OracleDetector {
    truth: HashMap<String, Vec<BBox>>,
    skill: OracleSkill,
    seed: u64,
}

impl OracleDetector {
    /// `truth` should be the corpus before any labels were dropped.
    pub fn new(truth: &[&Corpus], skill: OracleSkill, seed: u64) -> Result<Self> {
        skill.validate()?;
        let truth = truth
            .iter()
            .flat_map(|c| c.pages.iter())
            .map(|p| (p.id().to_owned(), p.ground_truth().copied().collect()))
            .collect();
        Ok(Self { truth, skill, seed })
    }
}

impl Detector for OracleDetector {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn train(&mut self, pages: &[AnnotatedPage], _config: &TrainConfig) -> Result<Vec<f64>> {
        if pages.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        Ok(Vec::new())
    }

    fn predict(&self, page: &PageImage) -> Result<Vec<BBox>> {
        let truth = self.truth.get(&page.id).map(Vec::as_slice).unwrap_or(&[]);
        let seed = seeding::derive_seed(self.seed, seeding::hash_str(&page.id));
        oracle_predict(truth, page.width, page.height, self.skill, seed)
    }

    fn checkpoint(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "oracle", "skill": self.skill, "seed": self.seed })
    }
}
