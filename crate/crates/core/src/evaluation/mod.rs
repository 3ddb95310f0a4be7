//! Detection metrics: greedy one-to-one matching, all-point interpolated
//! average precision, and mean IoU over ground-truth boxes.
//!
//! Mean IoU averages, over every ground-truth box, the IoU of the prediction
//! matched to it; unmatched ground truth counts as zero and unmatched
//! predictions do not enter the mean.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{check_threshold, iou, BBox};
use crate::scalar::Scalar;

mod report;

pub use report::{render_report, write_report, RenderedReport, ReportRow, CSV_HEADER, MEAN_IOU_NOTE};

/// Matching outcome for one page.
#[derive(Debug, Clone, PartialEq)]
pub struct PageMatch<T> {
    pub page_id: String,
    /// Score of each prediction, in input order.
    pub scores: Vec<T>,
    /// For each prediction: the ground-truth index and IoU it matched.
    pub matched: Vec<Option<(usize, T)>>,
    /// For each ground-truth box: the prediction index and IoU matched to it.
    pub gt_matched: Vec<Option<(usize, T)>>,
}

impl<T: Scalar> PageMatch<T> {
    pub fn true_positives(&self) -> Vec<usize> {
        (0..self.matched.len()).filter(|&i| self.matched[i].is_some()).collect()
    }

    pub fn false_positives(&self) -> Vec<usize> {
        (0..self.matched.len()).filter(|&i| self.matched[i].is_none()).collect()
    }

    pub fn false_negatives(&self) -> Vec<usize> {
        (0..self.gt_matched.len()).filter(|&i| self.gt_matched[i].is_none()).collect()
    }
}

fn by_score_desc<T: Scalar>(a: T, b: T) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

/// Predictions are visited by descending score (ties by index); each takes
/// the unmatched ground-truth box of highest IoU (ties by lower index) when
/// that IoU is at least `threshold`.
pub fn match_page<T: Scalar>(
    page_id: &str,
    predictions: &[BBox<T>],
    ground_truth: &[BBox<T>],
    threshold: T,
) -> Result<PageMatch<T>> {
    check_threshold(threshold)?;
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&i, &j| by_score_desc(predictions[i].score, predictions[j].score).then(i.cmp(&j)));

    let mut matched = vec![None; predictions.len()];
    let mut gt_matched: Vec<Option<(usize, T)>> = vec![None; ground_truth.len()];
    for i in order {
        let mut best: Option<(usize, T)> = None;
        for (g, gt) in ground_truth.iter().enumerate() {
            if gt_matched[g].is_some() {
                continue;
            }
            let v = iou(&predictions[i], gt);
            if v >= threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            matched[i] = Some((g, v));
            gt_matched[g] = Some((i, v));
        }
    }
    Ok(PageMatch {
        page_id: page_id.to_owned(),
        scores: predictions.iter().map(|b| b.score).collect(),
        matched,
        gt_matched,
    })
}

/// [`match_page`] over aligned per-page slices.
pub fn match_pages<T: Scalar>(
    page_ids: &[String],
    predictions: &[Vec<BBox<T>>],
    ground_truth: &[Vec<BBox<T>>],
    threshold: T,
) -> Result<Vec<PageMatch<T>>> {
    if page_ids.len() != predictions.len() || page_ids.len() != ground_truth.len() {
        return Err(Error::Evaluation(format!(
            "{} page ids, {} prediction sets, {} ground-truth sets",
            page_ids.len(),
            predictions.len(),
            ground_truth.len()
        )));
    }
    page_ids
        .par_iter()
        .zip(predictions)
        .zip(ground_truth)
        .map(|((id, p), g)| match_page(id, p, g, threshold))
        .collect()
}

fn total_gt<T: Scalar>(matches: &[PageMatch<T>]) -> Result<usize> {
    let n: usize = matches.iter().map(|m| m.gt_matched.len()).sum();
    if n == 0 {
        return Err(Error::Evaluation("no ground-truth boxes; metric undefined".into()));
    }
    Ok(n)
}

/// All-point interpolated AP. Predictions from every page are ranked by
/// descending score (ties by page id, then prediction index); each recall
/// step contributes the highest precision reached at that recall or beyond.
pub fn average_precision<T: Scalar>(matches: &[PageMatch<T>]) -> Result<T> {
    let n_gt = total_gt(matches)?;
    let mut ranked: Vec<(T, &str, usize, bool)> = matches
        .iter()
        .flat_map(|m| {
            m.scores
                .iter()
                .zip(&m.matched)
                .enumerate()
                .map(move |(i, (&s, hit))| (s, m.page_id.as_str(), i, hit.is_some()))
        })
        .collect();
    ranked.sort_by(|a, b| by_score_desc(a.0, b.0).then(a.1.cmp(b.1)).then(a.2.cmp(&b.2)));

    let mut tp = 0usize;
    let mut precision: Vec<T> = Vec::with_capacity(ranked.len());
    for (rank, r) in ranked.iter().enumerate() {
        tp += usize::from(r.3);
        precision.push(T::from_count(tp) / T::from_count(rank + 1));
    }
    // precision envelope, right to left
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    // summing before dividing keeps the result within [0, 1]
    let n = T::from_count(n_gt);
    Ok(ranked
        .iter()
        .zip(&precision)
        .filter(|(r, _)| r.3)
        .fold(T::zero(), |sum, (_, &p)| sum + p)
        / n)
}

/// Mean over ground-truth boxes of the matched IoU (zero when unmatched).
pub fn mean_iou<T: Scalar>(matches: &[PageMatch<T>]) -> Result<T> {
    let n = total_gt(matches)?;
    let sum = matches
        .iter()
        .flat_map(|m| m.gt_matched.iter())
        .fold(T::zero(), |acc, g| acc + g.map_or(T::zero(), |(_, v)| v));
    Ok(sum / T::from_count(n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    /// In `[0, 1]`.
    pub ap: f64,
    /// In `[0, 1]`.
    pub mean_iou: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Matches and scores a whole prediction set at IoU `threshold`.
pub fn evaluate(
    page_ids: &[String],
    predictions: &[Vec<BBox<f64>>],
    ground_truth: &[Vec<BBox<f64>>],
    threshold: f64,
) -> Result<EvalSummary> {
    let matches = match_pages(page_ids, predictions, ground_truth, threshold)?;
    Ok(EvalSummary {
        ap: average_precision(&matches)?,
        mean_iou: mean_iou(&matches)?,
        true_positives: matches.iter().map(|m| m.true_positives().len()).sum(),
        false_positives: matches.iter().map(|m| m.false_positives().len()).sum(),
        false_negatives: matches.iter().map(|m| m.false_negatives().len()).sum(),
    })
}
