//! Axis-aligned boxes, IoU and greedy non-maximum suppression.
//!
//! Coordinates follow raster conventions: `(x, y)` is the top-left corner,
//! `y` grows downward, and areas are continuous (`w * h`).
//!
//! A score of exactly one marks a ground-truth box. [`nms`] orders those
//! boxes ahead of every prediction and never lets one ground-truth box
//! suppress another unless the two share identical coordinates, so merging
//! predictions into an annotation set can only ever remove predictions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
    pub score: T,
}

impl<T: Scalar> BBox<T> {
    /// Builds a validated box: `w > 0`, `h > 0`, `score` in `[0, 1]`, all finite.
    pub fn new(x: T, y: T, w: T, h: T, score: T) -> Result<Self> {
        let b = Self { x, y, w, h, score };
        b.validate()?;
        Ok(b)
    }

    /// A ground-truth box (score exactly one).
    pub fn ground_truth(x: T, y: T, w: T, h: T) -> Result<Self> {
        Self::new(x, y, w, h, T::one())
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x, self.y, self.w, self.h, self.score]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidBox(format!("non-finite field in {self:?}")));
        }
        if self.w <= T::zero() || self.h <= T::zero() {
            return Err(Error::InvalidBox(format!(
                "width and height must be positive (w={}, h={})",
                self.w, self.h
            )));
        }
        if self.score < T::zero() || self.score > T::one() {
            return Err(Error::InvalidBox(format!(
                "score {} outside [0, 1]",
                self.score
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn right(&self) -> T {
        self.x + self.w
    }

    #[inline]
    pub fn bottom(&self) -> T {
        self.y + self.h
    }

    #[inline]
    pub fn area(&self) -> T {
        self.w * self.h
    }

    #[inline]
    pub fn is_ground_truth(&self) -> bool {
        self.score == T::one()
    }

    /// Same rectangle, scores ignored.
    #[inline]
    pub fn same_coords(&self, other: &Self) -> bool {
        self.x == other.x && self.y == other.y && self.w == other.w && self.h == other.h
    }

    pub fn with_score(mut self, score: T) -> Self {
        self.score = score;
        self
    }

    /// True when the box lies fully inside a `width` x `height` page.
    pub fn within(&self, width: T, height: T) -> bool {
        self.x >= T::zero() && self.y >= T::zero() && self.right() <= width && self.bottom() <= height
    }

    pub fn cast<U: Scalar>(&self) -> BBox<U> {
        let c = |v: T| U::from_f64(v.to_f64().unwrap_or(f64::NAN)).unwrap_or_else(U::nan);
        BBox {
            x: c(self.x),
            y: c(self.y),
            w: c(self.w),
            h: c(self.h),
            score: c(self.score),
        }
    }
}

/// Intersection over union of two valid boxes.
pub fn iou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    let iw = a.right().min(b.right()) - a.x.max(b.x);
    let ih = a.bottom().min(b.bottom()) - a.y.max(b.y);
    if iw <= T::zero() || ih <= T::zero() {
        return T::zero();
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).min(T::one())
}

pub(crate) fn check_threshold<T: Scalar>(p: T) -> Result<()> {
    if p > T::zero() && p < T::one() {
        Ok(())
    } else {
        Err(Error::InvalidThreshold(p.to_f64().unwrap_or(f64::NAN)))
    }
}

/// Processing order used by [`nms`]: score-one boxes first, then descending
/// score, ties by lower input index.
pub fn nms_order<T: Scalar>(boxes: &[BBox<T>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&boxes[i], &boxes[j]);
        b.is_ground_truth()
            .cmp(&a.is_ground_truth())
            .then_with(|| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal))
            .then_with(|| i.cmp(&j))
    });
    order
}

/// Whether kept box `kept` (earlier in [`nms_order`]) removes `candidate`.
#[inline]
pub(crate) fn suppresses<T: Scalar>(kept: &BBox<T>, candidate: &BBox<T>, p: T) -> bool {
    if kept.is_ground_truth() && candidate.is_ground_truth() {
        kept.same_coords(candidate)
    } else {
        iou(kept, candidate) >= p
    }
}

/// Indices (into `boxes`) of the survivors, in processing order.
pub fn nms_indices<T: Scalar>(boxes: &[BBox<T>], p: T) -> Result<Vec<usize>> {
    check_threshold(p)?;
    for b in boxes {
        b.validate()?;
    }
    let order = nms_order(boxes);
    let mut kept: Vec<usize> = Vec::with_capacity(boxes.len());
    for &i in &order {
        if kept.iter().all(|&k| !suppresses(&boxes[k], &boxes[i], p)) {
            kept.push(i);
        }
    }
    Ok(kept)
}

/// Greedy non-maximum suppression at IoU threshold `p` in `(0, 1)`.
///
/// Survivors are returned unchanged, in processing order.
pub fn nms<T: Scalar>(boxes: &[BBox<T>], p: T) -> Result<Vec<BBox<T>>> {
    Ok(nms_indices(boxes, p)?
        .into_iter()
        .map(|i| boxes[i])
        .collect())
}
