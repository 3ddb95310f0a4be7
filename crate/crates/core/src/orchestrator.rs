//! The self-paced loop: grow the training pool batch by batch, train, label
//! the next batch with the model's own predictions, merge with NMS, and
//! evaluate every iteration on the test corpus.
//!
//! The training pool always lists pages in corpus order, so a one-batch
//! curriculum trains on exactly the data (and sample order) of the baseline.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curriculum::Curriculum;
use crate::dataset::{save_annotations, AnnotatedPage, Annotation, Corpus, PageImage, Provenance};
use crate::detector::{Detector, TrainConfig};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, write_report, EvalSummary, ReportRow};
use crate::geometry::{check_threshold, nms_indices};
use crate::BBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplConfig {
    /// NMS threshold `p` used when merging pseudo boxes.
    pub nms_iou: f64,
    /// Predictions scoring below this are not merged; `None` merges all.
    pub confidence_floor: Option<f64>,
    /// IoU threshold of the test-set evaluation.
    pub eval_iou: f64,
}

impl Default for SplConfig {
    fn default() -> Self {
        Self {
            nms_iou: 0.5,
            confidence_floor: Some(0.25),
            eval_iou: 0.5,
        }
    }
}

impl SplConfig {
    pub fn validate(&self) -> Result<()> {
        check_threshold(self.nms_iou)?;
        check_threshold(self.eval_iou)?;
        if let Some(f) = self.confidence_floor {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::InvalidConfig(format!("confidence floor {f} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

/// State after one self-paced iteration.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    /// Pages trained on in this iteration.
    pub pool_size: usize,
    pub loss_trace: Vec<f64>,
    pub checkpoint: serde_json::Value,
    pub parameters: Vec<f64>,
    /// Pseudo boxes that survived the merge into the next batch.
    pub pseudo_added: usize,
    /// Annotation state of every training page after this iteration.
    pub annotations: Corpus,
    pub test: EvalSummary,
}

#[derive(Debug, Clone)]
pub struct SplRun {
    pub curriculum: Curriculum,
    pub config: SplConfig,
    pub iterations: Vec<IterationRecord>,
    /// Final-model predictions on the test pages, in test-corpus order.
    pub test_predictions: Vec<Vec<BBox>>,
}

impl SplRun {
    pub fn final_iteration(&self) -> &IterationRecord {
        self.iterations.last().expect("a run has at least one iteration")
    }

    pub fn rows(&self, regime: &str) -> Vec<ReportRow> {
        self.iterations
            .iter()
            .map(|it| {
                ReportRow::new(
                    regime,
                    it.iteration.to_string(),
                    100.0 * it.test.ap,
                    100.0 * it.test.mean_iou,
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub loss_trace: Vec<f64>,
    pub checkpoint: serde_json::Value,
    pub parameters: Vec<f64>,
    pub test: EvalSummary,
    pub test_predictions: Vec<Vec<BBox>>,
}

impl BaselineRun {
    pub fn row(&self, regime: &str) -> ReportRow {
        ReportRow::new(regime, "-", 100.0 * self.test.ap, 100.0 * self.test.mean_iou)
    }
}

/// Predicts every test page from its image alone and scores the result
/// against the test annotations.
fn evaluate_on_test(detector: &dyn Detector, test: &Corpus, eval_iou: f64) -> Result<(EvalSummary, Vec<Vec<BBox>>)> {
    let images: Vec<&PageImage> = test.pages.iter().map(|p| p.page.as_ref()).collect();
    let preds = detector.predict_many(&images)?;
    let ids: Vec<String> = test.pages.iter().map(|p| p.id().to_owned()).collect();
    let truth: Vec<Vec<BBox>> = test.pages.iter().map(AnnotatedPage::bboxes).collect();
    let summary = evaluate(&ids, &preds, &truth, eval_iou)?;
    Ok((summary, preds))
}

/// Merges `predictions` into `page` as pseudo boxes and applies NMS at `p`.
/// Returns how many pseudo boxes survived.
pub fn merge_pseudo_labels(
    page: &mut AnnotatedPage,
    predictions: &[BBox],
    p: f64,
    confidence_floor: Option<f64>,
) -> Result<usize> {
    let mut merged = page.boxes.clone();
    for b in predictions {
        if b.score >= 1.0 {
            return Err(Error::ReservedScore {
                page: page.id().to_owned(),
                score: b.score,
            });
        }
        if confidence_floor.is_none_or(|f| b.score >= f) {
            merged.push(Annotation::pseudo(*b));
        }
    }
    let boxes: Vec<BBox> = merged.iter().map(|a| a.bbox).collect();
    let mut keep = nms_indices(&boxes, p)?;
    keep.sort_unstable();
    let pseudo = |boxes: &[Annotation]| boxes.iter().filter(|a| a.provenance == Provenance::Pseudo).count();
    let before = pseudo(&page.boxes);
    page.boxes = keep.into_iter().map(|i| merged[i]).collect();
    page.validate()?;
    Ok(pseudo(&page.boxes) - before)
}

/// Runs the self-paced regime. `detector` should be freshly initialized; its
/// parameters carry over from one iteration to the next.
pub fn run_spl(
    train: &Corpus,
    test: &Corpus,
    curriculum: &Curriculum,
    detector: &mut dyn Detector,
    train_config: &TrainConfig,
    config: &SplConfig,
) -> Result<SplRun> {
    config.validate()?;
    train_config.validate()?;
    curriculum.check_partition(train)?;
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let index = train.index();
    let mut state = train.clone();
    let mut in_pool: HashSet<&str> = HashSet::new();
    let mut iterations = Vec::with_capacity(curriculum.k);
    let mut test_predictions = Vec::new();

    for (i, batch) in curriculum.batches.iter().enumerate() {
        in_pool.extend(batch.iter().map(String::as_str));
        let pool: Vec<AnnotatedPage> = state
            .pages
            .iter()
            .filter(|p| in_pool.contains(p.id()))
            .cloned()
            .collect();
        let loss_trace = detector.train(&pool, train_config)?;

        let mut pseudo_added = 0;
        if let Some(next) = curriculum.batches.get(i + 1) {
            let targets: Vec<usize> = next.iter().map(|id| index[id.as_str()]).collect();
            let images: Vec<&PageImage> = targets.iter().map(|&t| train.pages[t].page.as_ref()).collect();
            let preds = detector.predict_many(&images)?;
            for (&t, p) in targets.iter().zip(&preds) {
                pseudo_added += merge_pseudo_labels(&mut state.pages[t], p, config.nms_iou, config.confidence_floor)?;
            }
        }

        let (summary, preds) = evaluate_on_test(&*detector, test, config.eval_iou)?;
        test_predictions = preds;
        iterations.push(IterationRecord {
            iteration: i + 1,
            pool_size: pool.len(),
            loss_trace,
            checkpoint: detector.checkpoint(),
            parameters: detector.parameters(),
            pseudo_added,
            annotations: state.clone(),
            test: summary,
        });
    }
    Ok(SplRun {
        curriculum: curriculum.clone(),
        config: config.clone(),
        iterations,
        test_predictions,
    })
}

/// Conventional training: one call on the whole training corpus as labeled.
pub fn run_baseline(
    train: &Corpus,
    test: &Corpus,
    detector: &mut dyn Detector,
    train_config: &TrainConfig,
    eval_iou: f64,
) -> Result<BaselineRun> {
    check_threshold(eval_iou)?;
    train_config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let loss_trace = detector.train(&train.pages, train_config)?;
    let (test_summary, test_predictions) = evaluate_on_test(&*detector, test, eval_iou)?;
    Ok(BaselineRun {
        loss_trace,
        checkpoint: detector.checkpoint(),
        parameters: detector.parameters(),
        test: test_summary,
        test_predictions,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, e.into()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Writes `curriculum.json`, `iteration-<i>/model.json`,
/// `iteration-<i>/annotations.jsonl` and the report files under `dir`.
pub fn write_spl_artifacts(dir: &Path, run: &SplRun, regime: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    run.curriculum.save(&dir.join("curriculum.json"))?;
    for it in &run.iterations {
        let sub = dir.join(format!("iteration-{}", it.iteration));
        write_json(&sub.join("model.json"), &it.checkpoint)?;
        save_annotations(&it.annotations, &sub.join("annotations.jsonl"))?;
    }
    write_report(dir, &run.rows(regime), "")?;
    Ok(())
}

/// Writes `model.json` and the report files under `dir`.
pub fn write_baseline_artifacts(dir: &Path, run: &BaselineRun, regime: &str) -> Result<()> {
    write_json(&dir.join("model.json"), &run.checkpoint)?;
    write_report(dir, &[run.row(regime)], "")?;
    Ok(())
}
