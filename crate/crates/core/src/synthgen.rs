//! Synthetic "historical page" generator with exact row ground truth.
//!
//! Rows are solid dark bands over a tinted background, degraded by elliptical
//! stains and additive Gaussian noise. Every band yields one ground-truth box
//! spanning its inked extent.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedPage, Annotation, Corpus, PageImage, Split};
use crate::error::{Error, Result};
use crate::seeding;
use crate::BBox;

/// Intensity that stains blend toward.
pub const STAIN_TONE: f32 = 0.2;

/// Inclusive ranges are written `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PageStyle {
    pub width: usize,
    pub height: usize,
    /// Rows per page, uniform over the integer range.
    pub rows: [usize; 2],
    pub row_height: [usize; 2],
    pub gap: [usize; 2],
    pub ink: [f32; 2],
    pub background: [f32; 2],
    /// Standard deviation of the additive pixel noise.
    pub noise: f32,
    pub stains: [usize; 2],
    pub stain_radius: [f32; 2],
    pub stain_opacity: [f32; 2],
    pub margin: usize,
    /// Inked fraction of the inner page width per row.
    pub extent: [f32; 2],
}

impl Default for PageStyle {
    fn default() -> Self {
        Self {
            width: 256,
            height: 384,
            rows: [8, 14],
            row_height: [12, 20],
            gap: [4, 10],
            ink: [0.1, 0.35],
            background: [0.75, 0.95],
            noise: 0.05,
            stains: [0, 3],
            stain_radius: [8.0, 24.0],
            stain_opacity: [0.1, 0.3],
            margin: 12,
            extent: [0.6, 0.95],
        }
    }
}

impl PageStyle {
    /// Default style with exactly `n` rows on every page.
    pub fn constant_rows(n: usize) -> Self {
        Self {
            rows: [n, n],
            ..Self::default()
        }
    }

    /// No noise, no stains, fixed background and ink.
    pub fn clean(background: f32, ink: f32) -> Self {
        Self {
            ink: [ink, ink],
            background: [background, background],
            noise: 0.0,
            stains: [0, 0],
            ..Self::default()
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let style: Self = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        style.validate()?;
        Ok(style)
    }

    pub fn inner_width(&self) -> usize {
        self.width.saturating_sub(2 * self.margin)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("page style: {m}")));
        if self.width == 0 || self.height == 0 {
            return bad("page size must be positive".into());
        }
        if self.inner_width() == 0 {
            return bad("margins leave no inner width".into());
        }
        for (name, [lo, hi]) in [
            ("rows", self.rows),
            ("row_height", self.row_height),
            ("gap", self.gap),
            ("stains", self.stains),
        ] {
            if lo > hi {
                return bad(format!("{name} range [{lo}, {hi}] is empty"));
            }
        }
        if self.row_height[0] == 0 {
            return bad("row height must be at least 1".into());
        }
        for (name, [lo, hi], min, max) in [
            ("ink", self.ink, 0.0, 1.0),
            ("background", self.background, 0.0, 1.0),
            ("stain_opacity", self.stain_opacity, 0.0, 1.0),
            ("extent", self.extent, f32::MIN_POSITIVE, 1.0),
            ("stain_radius", self.stain_radius, f32::MIN_POSITIVE, f32::MAX),
        ] {
            if !(lo <= hi && lo >= min && hi <= max) {
                return bad(format!("{name} range [{lo}, {hi}] invalid"));
            }
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise {} invalid", self.noise));
        }
        let need = self.rows[1] * (self.row_height[0] + self.gap[0]) + 2 * self.margin;
        if need > self.height {
            return bad(format!(
                "{} rows need {need} px but the page is {} px tall",
                self.rows[1], self.height
            ));
        }
        Ok(())
    }
}

fn uniform_usize(rng: &mut ChaCha8Rng, [lo, hi]: [usize; 2]) -> usize {
    rng.random_range(lo..=hi)
}

fn uniform_f32(rng: &mut ChaCha8Rng, [lo, hi]: [f32; 2]) -> f32 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Vertical layout: `(top, height)` per row, non-overlapping, inside margins.
fn layout_rows(style: &PageStyle, n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    if n == 0 {
        return Vec::new();
    }
    let avail = style.height - 2 * style.margin;
    let mut heights: Vec<usize> = (0..n).map(|_| uniform_usize(rng, style.row_height)).collect();
    let mut gaps: Vec<usize> = (0..n - 1).map(|_| uniform_usize(rng, style.gap)).collect();

    let (hmin, gmin) = (style.row_height[0], style.gap[0]);
    let min_total = n * hmin + (n - 1) * gmin;
    let total: usize = heights.iter().sum::<usize>() + gaps.iter().sum::<usize>();
    if total > avail {
        // shrink the jitter above the minimum until everything fits
        let keep = (avail - min_total) as f64 / (total - min_total) as f64;
        let shrink = |v: &mut usize, min: usize| *v = min + ((*v - min) as f64 * keep).floor() as usize;
        heights.iter_mut().for_each(|h| shrink(h, hmin));
        gaps.iter_mut().for_each(|g| shrink(g, gmin));
    }
    let total: usize = heights.iter().sum::<usize>() + gaps.iter().sum::<usize>();
    let mut y = style.margin + rng.random_range(0..=avail - total);
    let mut rows = Vec::with_capacity(n);
    for (i, &h) in heights.iter().enumerate() {
        rows.push((y, h));
        y += h + gaps.get(i).copied().unwrap_or(0);
    }
    rows
}

/// Renders one fully labeled page. Deterministic in `(style, seed, id)`.
pub fn generate_page(style: &PageStyle, seed: u64, id: &str) -> Result<AnnotatedPage> {
    style.validate()?;
    let mut rng = seeding::rng(seed, seeding::hash_str(id));
    let (w, h) = (style.width, style.height);

    let n = uniform_usize(&mut rng, style.rows);
    let bands = layout_rows(style, n, &mut rng);
    let background = uniform_f32(&mut rng, style.background);
    let mut pixels = vec![background; w * h];

    let inner = style.inner_width();
    let mut boxes = Vec::with_capacity(n);
    for &(top, height) in &bands {
        let frac = uniform_f32(&mut rng, style.extent);
        let extent = ((frac * inner as f32).round() as usize).clamp(1, inner);
        let left = style.margin + rng.random_range(0..=inner - extent);
        let ink = uniform_f32(&mut rng, style.ink);
        for y in top..top + height {
            pixels[y * w + left..y * w + left + extent].fill(ink);
        }
        let bbox = BBox::ground_truth(left as f64, top as f64, extent as f64, height as f64)?;
        boxes.push(Annotation::ground_truth(bbox));
    }

    for _ in 0..uniform_usize(&mut rng, style.stains) {
        let cx = rng.random_range(0.0..w as f32);
        let cy = rng.random_range(0.0..h as f32);
        let rx = uniform_f32(&mut rng, style.stain_radius);
        let ry = uniform_f32(&mut rng, style.stain_radius);
        let opacity = uniform_f32(&mut rng, style.stain_opacity);
        let y0 = (cy - ry).floor().max(0.0) as usize;
        let y1 = ((cy + ry).ceil() as usize).min(h - 1);
        let x0 = (cx - rx).floor().max(0.0) as usize;
        let x1 = ((cx + rx).ceil() as usize).min(w - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dx, dy) = ((x as f32 + 0.5 - cx) / rx, (y as f32 + 0.5 - cy) / ry);
                if dx * dx + dy * dy <= 1.0 {
                    let p = &mut pixels[y * w + x];
                    *p = *p * (1.0 - opacity) + STAIN_TONE * opacity;
                }
            }
        }
    }

    if style.noise > 0.0 {
        let normal = Normal::new(0.0f32, style.noise)
            .map_err(|e| Error::InvalidConfig(format!("noise: {e}")))?;
        for p in &mut pixels {
            *p += normal.sample(&mut rng);
        }
    }
    for p in &mut pixels {
        *p = p.clamp(0.0, 1.0);
    }

    AnnotatedPage::new(PageImage::new(id, w, h, pixels)?, boxes)
}

/// Page id for position `index`.
pub fn page_id(index: usize) -> String {
    format!("page-{index:05}")
}

/// `n_pages` pages with ids `page-00000...`; page `i` is seeded from
/// `(seed, i)`, so the result does not depend on generation order.
pub fn generate_corpus(style: &PageStyle, n_pages: usize, seed: u64, split: Split) -> Result<Corpus> {
    generate_corpus_prefixed(style, n_pages, seed, split, "page")
}

/// [`generate_corpus`] with ids `<prefix>-00000...`, so corpora generated for
/// different splits never share page ids.
pub fn generate_corpus_prefixed(
    style: &PageStyle,
    n_pages: usize,
    seed: u64,
    split: Split,
    prefix: &str,
) -> Result<Corpus> {
    style.validate()?;
    let pages = (0..n_pages)
        .into_par_iter()
        .map(|i| {
            let id = format!("{prefix}-{i:05}");
            generate_page(style, seeding::derive_seed(seed, i as u64), &id)
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(split, pages)
}
