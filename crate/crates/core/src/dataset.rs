//! Pages, annotations and corpora, plus their on-disk formats.
//!
//! A corpus is stored as a JSON Lines manifest: one header line
//! `{"format":"selfpace-rows","version":1,"split":...}` followed by one line
//! per page. Page images are 8-bit binary PGM files referenced by a path
//! relative to the manifest's directory.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pgm;
use crate::seeding;
use crate::BBox;

pub const MANIFEST_FORMAT: &str = "selfpace-rows";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "gt")]
    GroundTruth,
    #[serde(rename = "pseudo")]
    Pseudo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Grayscale page raster, row-major, intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PageImage {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

impl PageImage {
    pub fn new(id: impl Into<String>, width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        let id = id.into();
        if width == 0 || height == 0 {
            return Err(Error::page(id, "page dimensions must be at least 1x1"));
        }
        if pixels.len() != width * height {
            return Err(Error::page(
                id,
                format!("expected {} pixels, got {}", width * height, pixels.len()),
            ));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::page(id, format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self {
            id,
            width,
            height,
            pixels,
        })
    }

    /// Uniform page, used when only annotations are available.
    pub fn blank(id: impl Into<String>, width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(id, width, height, vec![value; width * height])
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[f32] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annotation {
    pub bbox: BBox,
    pub provenance: Provenance,
}

impl Annotation {
    pub fn ground_truth(bbox: BBox) -> Self {
        Self {
            bbox: bbox.with_score(1.0),
            provenance: Provenance::GroundTruth,
        }
    }

    pub fn pseudo(bbox: BBox) -> Self {
        Self {
            bbox,
            provenance: Provenance::Pseudo,
        }
    }
}

/// A page and its (possibly incomplete) annotation set.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedPage {
    pub page: Arc<PageImage>,
    /// Image path relative to the manifest directory.
    pub image: String,
    pub boxes: Vec<Annotation>,
}

impl AnnotatedPage {
    pub fn new(page: PageImage, boxes: Vec<Annotation>) -> Result<Self> {
        let image = format!("{}.pgm", page.id);
        let p = Self {
            page: Arc::new(page),
            image,
            boxes,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn id(&self) -> &str {
        &self.page.id
    }

    pub fn ground_truth(&self) -> impl Iterator<Item = &BBox> {
        self.boxes
            .iter()
            .filter(|a| a.provenance == Provenance::GroundTruth)
            .map(|a| &a.bbox)
    }

    pub fn ground_truth_count(&self) -> usize {
        self.ground_truth().count()
    }

    pub fn bboxes(&self) -> Vec<BBox> {
        self.boxes.iter().map(|a| a.bbox).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.page.width as f64, self.page.height as f64);
        for a in &self.boxes {
            a.bbox
                .validate()
                .map_err(|e| Error::page(self.id(), e.to_string()))?;
            if !a.bbox.within(w, h) {
                return Err(Error::page(
                    self.id(),
                    format!("box {:?} exceeds the {w}x{h} page", a.bbox),
                ));
            }
            match a.provenance {
                Provenance::GroundTruth if a.bbox.score != 1.0 => {
                    return Err(Error::page(
                        self.id(),
                        format!("ground-truth box has score {} (must be 1)", a.bbox.score),
                    ))
                }
                Provenance::Pseudo if a.bbox.score >= 1.0 => {
                    return Err(Error::page(self.id(), "pseudo box has reserved score 1"))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub split: Split,
    pub pages: Vec<AnnotatedPage>,
}

impl Corpus {
    pub fn new(split: Split, pages: Vec<AnnotatedPage>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &pages {
            if !seen.insert(p.id()) {
                return Err(Error::DuplicatePage(p.id().to_owned()));
            }
        }
        Ok(Self { split, pages })
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    pub fn box_count(&self) -> usize {
        self.pages.iter().map(|p| p.boxes.len()).sum()
    }

    /// Map from page id to position.
    pub fn index(&self) -> HashMap<&str, usize> {
        self.pages.iter().enumerate().map(|(i, p)| (p.id(), i)).collect()
    }

    pub fn get(&self, id: &str) -> Option<&AnnotatedPage> {
        self.pages.iter().find(|p| p.id() == id)
    }
}

// ---------------------------------------------------------------------------
// Manifest records
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    split: Split,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxRecord {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    #[serde(default)]
    pub score: Option<f64>,
    #[serde(default)]
    pub provenance: Option<Provenance>,
}

/// One manifest line, before images are resolved.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image: String,
    pub width: usize,
    pub height: usize,
    pub boxes: Vec<BoxRecord>,
}

impl ManifestEntry {
    fn from_page(p: &AnnotatedPage, image: String) -> Self {
        Self {
            id: p.id().to_owned(),
            image,
            width: p.page.width,
            height: p.page.height,
            boxes: p
                .boxes
                .iter()
                .map(|a| BoxRecord {
                    x: a.bbox.x,
                    y: a.bbox.y,
                    w: a.bbox.w,
                    h: a.bbox.h,
                    score: Some(a.bbox.score),
                    provenance: Some(a.provenance),
                })
                .collect(),
        }
    }

    /// Resolves score defaults and checks box invariants against the page size.
    pub fn annotations(&self) -> Result<Vec<Annotation>> {
        let mut out = Vec::with_capacity(self.boxes.len());
        for r in &self.boxes {
            let provenance = r.provenance.unwrap_or(Provenance::GroundTruth);
            let score = match (r.score, provenance) {
                (Some(s), _) => s,
                (None, Provenance::GroundTruth) => 1.0,
                (None, Provenance::Pseudo) => {
                    return Err(Error::page(&self.id, "pseudo box without a score"))
                }
            };
            let bbox = BBox::new(r.x, r.y, r.w, r.h, score)
                .map_err(|e| Error::page(&self.id, e.to_string()))?;
            out.push(Annotation { bbox, provenance });
        }
        let (w, h) = (self.width as f64, self.height as f64);
        for a in &out {
            if !a.bbox.within(w, h) {
                return Err(Error::page(
                    &self.id,
                    format!("box {:?} exceeds the {w}x{h} page", a.bbox),
                ));
            }
            if a.provenance == Provenance::GroundTruth && a.bbox.score != 1.0 {
                return Err(Error::page(&self.id, "ground-truth box must have score 1"));
            }
            if a.provenance == Provenance::Pseudo && a.bbox.score >= 1.0 {
                return Err(Error::page(&self.id, "pseudo box has reserved score 1"));
            }
        }
        Ok(out)
    }
}

/// Parses and validates a manifest without touching the image files.
pub fn read_manifest(path: &Path) -> Result<(Split, Vec<ManifestEntry>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let manifest_err = |line: usize, message: String| Error::Manifest {
        path: path.to_path_buf(),
        line,
        message,
    };

    let header: Header = match lines.next() {
        Some((_, line)) => {
            let line = line.map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&line).map_err(|e| manifest_err(1, format!("bad header: {e}")))?
        }
        None => return Err(manifest_err(1, "missing header line".into())),
    };
    if header.format != MANIFEST_FORMAT || header.version != MANIFEST_VERSION {
        return Err(manifest_err(
            1,
            format!(
                "unsupported manifest {} v{} (expected {MANIFEST_FORMAT} v{MANIFEST_VERSION})",
                header.format, header.version
            ),
        ));
    }

    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry =
            serde_json::from_str(&line).map_err(|e| manifest_err(i + 1, e.to_string()))?;
        if !seen.insert(entry.id.clone()) {
            return Err(Error::DuplicatePage(entry.id));
        }
        if entry.width == 0 || entry.height == 0 {
            return Err(Error::page(&entry.id, "page dimensions must be at least 1x1"));
        }
        entry.annotations()?;
        entries.push(entry);
    }
    Ok((header.split, entries))
}

/// Loads a manifest and every page image it references.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let (split, entries) = read_manifest(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut pages = Vec::with_capacity(entries.len());
    for entry in entries {
        let boxes = entry.annotations()?;
        let image_path = base.join(&entry.image);
        let (w, h, pixels) = pgm::read(&image_path)?;
        if (w, h) != (entry.width, entry.height) {
            return Err(Error::page(
                &entry.id,
                format!(
                    "manifest says {}x{} but {} is {w}x{h}",
                    entry.width,
                    entry.height,
                    image_path.display()
                ),
            ));
        }
        let page = PageImage::new(entry.id, w, h, pixels)?;
        pages.push(AnnotatedPage {
            page: Arc::new(page),
            image: entry.image,
            boxes,
        });
    }
    Corpus::new(split, pages)
}

/// Image directory used by [`save_corpus`]: the manifest's file stem.
fn image_dir_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "images".into())
}

/// Writes the manifest and one PGM per page under `<manifest stem>/`.
pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new("."));
    let dir = image_dir_name(path);
    let entries: Vec<ManifestEntry> = corpus
        .pages
        .iter()
        .map(|p| ManifestEntry::from_page(p, format!("{dir}/{}.pgm", p.id())))
        .collect();
    for (p, e) in corpus.pages.iter().zip(&entries) {
        pgm::write(&base.join(&e.image), p.page.width, p.page.height, &p.page.pixels)?;
    }
    write_entries(path, corpus.split, &entries)
}

/// Writes only the manifest, keeping each page's existing image reference.
pub fn save_annotations(corpus: &Corpus, path: &Path) -> Result<()> {
    let entries: Vec<ManifestEntry> = corpus
        .pages
        .iter()
        .map(|p| ManifestEntry::from_page(p, p.image.clone()))
        .collect();
    write_entries(path, corpus.split, &entries)
}

fn write_entries(path: &Path, split: Split, entries: &[ManifestEntry]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let header = Header {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        split,
    };
    let io = |e: std::io::Error| Error::io(path, e);
    let json = |e: serde_json::Error| Error::io(path, e.into());
    writeln!(out, "{}", serde_json::to_string(&header).map_err(json)?).map_err(io)?;
    for e in entries {
        writeln!(out, "{}", serde_json::to_string(e).map_err(json)?).map_err(io)?;
    }
    out.flush().map_err(io)
}

// ---------------------------------------------------------------------------
// Prediction files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScoredBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PredictionLine {
    id: String,
    boxes: Vec<ScoredBox>,
}

/// Per-page predictions keyed by page id, in file order.
pub type Predictions = Vec<(String, Vec<BBox>)>;

pub fn write_predictions(path: &Path, preds: &[(String, Vec<BBox>)]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e: std::io::Error| Error::io(path, e);
    for (id, boxes) in preds {
        let line = PredictionLine {
            id: id.clone(),
            boxes: boxes
                .iter()
                .map(|b| ScoredBox {
                    x: b.x,
                    y: b.y,
                    w: b.w,
                    h: b.h,
                    score: b.score,
                })
                .collect(),
        };
        let text = serde_json::to_string(&line).map_err(|e| Error::io(path, e.into()))?;
        writeln!(out, "{text}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads a predictions file. Boxes are checked for positive size and a score
/// in `[0, 1]`; reserved-score checks belong to the caller.
pub fn read_predictions(path: &Path) -> Result<Predictions> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionLine = serde_json::from_str(&line).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let boxes = rec
            .boxes
            .iter()
            .map(|b| BBox::new(b.x, b.y, b.w, b.h, b.score))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::page(&rec.id, e.to_string()))?;
        out.push((rec.id, boxes));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Missing-label simulation
// ---------------------------------------------------------------------------

/// Distribution of the per-page probability of dropping each box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DropPolicy {
    Constant { rate: f64 },
    Beta { alpha: f64, beta: f64 },
}

impl DropPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DropPolicy::Constant { rate } if (0.0..=1.0).contains(&rate) => Ok(()),
            DropPolicy::Beta { alpha, beta }
                if alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite() =>
            {
                Ok(())
            }
            _ => Err(Error::InvalidConfig(format!("invalid drop policy {self:?}"))),
        }
    }

    /// Expected fraction of boxes that survive.
    pub fn expected_retention(&self) -> f64 {
        match *self {
            DropPolicy::Constant { rate } => 1.0 - rate,
            DropPolicy::Beta { alpha, beta } => beta / (alpha + beta),
        }
    }
}

/// Removes each ground-truth box independently with a per-page rate drawn
/// from `policy`. Page `i` uses RNG stream `i` of `seed`. Pseudo boxes are
/// left alone.
pub fn drop_labels(corpus: &Corpus, policy: DropPolicy, seed: u64) -> Result<Corpus> {
    drop_labels_traced(corpus, policy, seed).map(|(c, _)| c)
}

/// [`drop_labels`], also returning the drop rate drawn for each page.
pub fn drop_labels_traced(
    corpus: &Corpus,
    policy: DropPolicy,
    seed: u64,
) -> Result<(Corpus, Vec<f64>)> {
    policy.validate()?;
    let beta = match policy {
        DropPolicy::Beta { alpha, beta } => {
            Some(Beta::new(alpha, beta).map_err(|e| Error::InvalidConfig(e.to_string()))?)
        }
        DropPolicy::Constant { .. } => None,
    };
    let mut rates = Vec::with_capacity(corpus.len());
    let pages = corpus
        .pages
        .iter()
        .enumerate()
        .map(|(i, page)| {
            let mut rng = seeding::rng(seed, i as u64);
            let rate = match (policy, &beta) {
                (DropPolicy::Constant { rate }, _) => rate,
                (_, Some(b)) => b.sample(&mut rng),
                _ => unreachable!(),
            };
            rates.push(rate);
            let boxes = page
                .boxes
                .iter()
                .filter(|a| a.provenance == Provenance::Pseudo || !rng.random_bool(rate))
                .copied()
                .collect();
            AnnotatedPage {
                page: Arc::clone(&page.page),
                image: page.image.clone(),
                boxes,
            }
        })
        .collect();
    let corpus = Corpus {
        split: corpus.split,
        pages,
    };
    Ok((corpus, rates))
}

// ---------------------------------------------------------------------------
// Normalized center-format import
// ---------------------------------------------------------------------------

/// Size lookup backed by the `<id>.pgm` headers in `dir`.
pub fn pgm_size_lookup(dir: &Path) -> impl Fn(&str) -> Option<(usize, usize)> + '_ {
    move |id| pgm::read_size(&dir.join(format!("{id}.pgm"))).ok()
}

/// Imports `<id>.txt` files with lines `class cx cy w h` (normalized to
/// `[0, 1]`). Pixels come from `<id>.pgm` when present, otherwise the page is
/// blank white. The class index is ignored.
pub fn import_normalized_annotations(
    dir: &Path,
    split: Split,
    sizes: impl Fn(&str) -> Option<(usize, usize)>,
) -> Result<Corpus> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();

    let mut pages = Vec::with_capacity(files.len());
    for file in files {
        let id = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let (width, height) =
            sizes(&id).ok_or_else(|| Error::page(&id, "missing image dimensions"))?;
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let mut boxes = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bbox = parse_normalized_line(line, width, height).map_err(|message| {
                Error::Manifest {
                    path: file.clone(),
                    line: i + 1,
                    message,
                }
            })?;
            boxes.push(Annotation::ground_truth(bbox));
        }
        let image_path = dir.join(format!("{id}.pgm"));
        let page = if image_path.exists() {
            let (w, h, pixels) = pgm::read(&image_path)?;
            if (w, h) != (width, height) {
                return Err(Error::page(&id, "image size disagrees with size lookup"));
            }
            PageImage::new(&id, w, h, pixels)?
        } else {
            PageImage::blank(&id, width, height, 1.0)?
        };
        pages.push(AnnotatedPage::new(page, boxes)?);
    }
    Corpus::new(split, pages)
}

fn parse_normalized_line(line: &str, width: usize, height: usize) -> Result<BBox, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(format!("expected 5 fields, found {}", fields.len()));
    }
    fields[0]
        .parse::<u32>()
        .map_err(|_| format!("bad class index {:?}", fields[0]))?;
    let mut v = [0.0f64; 4];
    for (slot, f) in v.iter_mut().zip(&fields[1..]) {
        *slot = f.parse().map_err(|_| format!("bad number {f:?}"))?;
        if !(0.0..=1.0).contains(slot) {
            return Err(format!("value {slot} outside [0, 1]"));
        }
    }
    let [cx, cy, nw, nh] = v;
    let (pw, ph) = (width as f64, height as f64);
    let x0 = ((cx - nw / 2.0) * pw).max(0.0);
    let y0 = ((cy - nh / 2.0) * ph).max(0.0);
    let x1 = ((cx + nw / 2.0) * pw).min(pw);
    let y1 = ((cy + nh / 2.0) * ph).min(ph);
    BBox::ground_truth(x0, y0, x1 - x0, y1 - y0).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn page_with(id: &str, boxes: &[(f64, f64, f64, f64)]) -> AnnotatedPage {
        let page = PageImage::blank(id, 200, 100, 0.8).unwrap();
        let anns = boxes
            .iter()
            .map(|&(x, y, w, h)| Annotation::ground_truth(BBox::ground_truth(x, y, w, h).unwrap()))
            .collect();
        AnnotatedPage::new(page, anns).unwrap()
    }

    fn sample_corpus() -> Corpus {
        Corpus::new(
            Split::Train,
            vec![
                page_with("a", &[(0.0, 0.0, 10.5, 3.25), (1.0 / 3.0, 7.1, 20.0, 9.0)]),
                page_with("b", &[]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn empty_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        save_corpus(&Corpus::new(Split::Test, vec![]).unwrap(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        let back = load_corpus(&path).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.split, Split::Test);
    }

    #[test]
    fn save_load_preserves_boxes_and_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.jsonl");
        let corpus = sample_corpus();
        save_corpus(&corpus, &path).unwrap();
        let first = fs::read(&path).unwrap();
        let back = load_corpus(&path).unwrap();
        for (a, b) in corpus.pages.iter().zip(&back.pages) {
            assert_eq!(a.boxes, b.boxes);
        }
        let path2 = dir.path().join("again").join("train.jsonl");
        save_corpus(&back, &path2).unwrap();
        assert_eq!(first, fs::read(&path2).unwrap());
        assert_eq!(
            fs::read(dir.path().join("train/a.pgm")).unwrap(),
            fs::read(dir.path().join("again/train/a.pgm")).unwrap()
        );
    }

    #[test]
    fn one_page_one_box_is_one_data_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.jsonl");
        let c = Corpus::new(Split::Train, vec![page_with("p", &[(1.0, 1.0, 5.0, 5.0)])]).unwrap();
        save_corpus(&c, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 2);
    }

    fn write_manifest(dir: &Path, lines: &[&str]) -> PathBuf {
        let path = dir.join("m.jsonl");
        pgm::write(&dir.join("p.pgm"), 200, 100, &vec![0.5; 200 * 100]).unwrap();
        let mut text = String::from(r#"{"format":"selfpace-rows","version":1,"split":"train"}"#);
        for l in lines {
            text.push('\n');
            text.push_str(l);
        }
        fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn zero_width_box_names_page() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(
            dir.path(),
            &[r#"{"id":"p-17","image":"p.pgm","width":200,"height":100,"boxes":[{"x":1,"y":1,"w":0,"h":4}]}"#],
        );
        let err = load_corpus(&path).unwrap_err();
        assert!(err.to_string().contains("p-17"), "{err}");
    }

    #[test]
    fn score_defaults_to_one_for_ground_truth() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(
            dir.path(),
            &[r#"{"id":"p","image":"p.pgm","width":200,"height":100,"boxes":[{"x":1,"y":1,"w":3,"h":4}]}"#],
        );
        let c = load_corpus(&path).unwrap();
        assert_eq!(c.pages[0].boxes[0].bbox.score, 1.0);
        assert_eq!(c.pages[0].boxes[0].provenance, Provenance::GroundTruth);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(
            dir.path(),
            &[
                r#"{"id":"p","image":"p.pgm","width":200,"height":100,"boxes":[]}"#,
                r#"{"id": oops"#,
            ],
        );
        match load_corpus(&path).unwrap_err() {
            Error::Manifest { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rejects_out_of_bounds_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(
            dir.path(),
            &[r#"{"id":"p","image":"p.pgm","width":200,"height":100,"boxes":[{"x":190,"y":1,"w":20,"h":4}]}"#],
        );
        assert!(matches!(load_corpus(&path), Err(Error::Page { .. })));

        let path = write_manifest(
            dir.path(),
            &[
                r#"{"id":"p","image":"p.pgm","width":200,"height":100,"boxes":[]}"#,
                r#"{"id":"p","image":"p.pgm","width":200,"height":100,"boxes":[]}"#,
            ],
        );
        assert!(matches!(load_corpus(&path), Err(Error::DuplicatePage(_))));
    }

    #[test]
    fn rejects_pseudo_box_with_reserved_score() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(
            dir.path(),
            &[r#"{"id":"p","image":"p.pgm","width":200,"height":100,"boxes":[{"x":1,"y":1,"w":3,"h":4,"score":1.0,"provenance":"pseudo"}]}"#],
        );
        assert!(load_corpus(&path).is_err());
    }

    fn dense_corpus(pages: usize, boxes_per_page: usize) -> Corpus {
        let pages = (0..pages)
            .map(|i| {
                let page = PageImage::blank(format!("p{i:04}"), 50, 2 * boxes_per_page, 0.9).unwrap();
                let anns = (0..boxes_per_page)
                    .map(|j| {
                        Annotation::ground_truth(
                            BBox::ground_truth(0.0, 2.0 * j as f64, 50.0, 1.0).unwrap(),
                        )
                    })
                    .collect();
                AnnotatedPage::new(page, anns).unwrap()
            })
            .collect();
        Corpus::new(Split::Train, pages).unwrap()
    }

    #[test]
    fn constant_rates_are_identity_or_wipe() {
        let c = dense_corpus(5, 10);
        let same = drop_labels(&c, DropPolicy::Constant { rate: 0.0 }, 3).unwrap();
        assert_eq!(same, c);
        let none = drop_labels(&c, DropPolicy::Constant { rate: 1.0 }, 3).unwrap();
        assert!(none.pages.iter().all(|p| p.boxes.is_empty()));
        assert_eq!(none.len(), 5);
    }

    #[test]
    fn beta_retention_matches_expectation() {
        // 1000 boxes; expected retention beta / (alpha + beta) = 5/7
        let c = dense_corpus(100, 10);
        let policy = DropPolicy::Beta { alpha: 2.0, beta: 5.0 };
        let kept = drop_labels(&c, policy, 11).unwrap().box_count() as f64 / 1000.0;
        assert!((policy.expected_retention() - 5.0 / 7.0).abs() < 1e-15);
        assert!((kept - 5.0 / 7.0).abs() <= 0.03, "retained {kept}");
    }

    #[test]
    fn drop_is_pure_subset() {
        let c = dense_corpus(20, 8);
        let policy = DropPolicy::Beta { alpha: 2.0, beta: 5.0 };
        let a = drop_labels(&c, policy, 5).unwrap();
        let b = drop_labels(&c, policy, 5).unwrap();
        assert_eq!(a, b);
        for (orig, dropped) in c.pages.iter().zip(&a.pages) {
            assert_eq!(orig.page, dropped.page);
            assert!(dropped.boxes.iter().all(|x| orig.boxes.contains(x)));
        }
    }

    #[test]
    fn invalid_policy_rejected() {
        let c = dense_corpus(1, 1);
        assert!(drop_labels(&c, DropPolicy::Beta { alpha: 0.0, beta: 1.0 }, 1).is_err());
        assert!(drop_labels(&c, DropPolicy::Constant { rate: 1.5 }, 1).is_err());
    }

    #[test]
    fn normalized_import_examples() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("full.txt"), "0 0.5 0.5 1.0 1.0\n").unwrap();
        fs::write(dir.path().join("part.txt"), "0 0.25 0.5 0.5 0.2\n").unwrap();
        fs::write(dir.path().join("none.txt"), "").unwrap();
        let c = import_normalized_annotations(dir.path(), Split::Train, |_| Some((200, 100))).unwrap();
        let ids: Vec<_> = c.pages.iter().map(|p| p.id().to_owned()).collect();
        assert_eq!(ids, ["full", "none", "part"]);

        let full = c.pages[0].boxes[0].bbox;
        assert_eq!((full.x, full.y, full.w, full.h, full.score), (0.0, 0.0, 200.0, 100.0, 1.0));
        assert!(c.pages[1].boxes.is_empty());
        let part = c.pages[2].boxes[0].bbox;
        for (got, want) in [(part.x, 0.0), (part.y, 40.0), (part.w, 100.0), (part.h, 20.0)] {
            assert!((got - want).abs() < 1e-9, "{part:?}");
        }
    }

    #[test]
    fn normalized_import_errors() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("bad.txt"), "0 0.5 1.5 0.1 0.1\n").unwrap();
        let err = import_normalized_annotations(dir.path(), Split::Train, |_| Some((10, 10)));
        assert!(matches!(err, Err(Error::Manifest { line: 1, .. })));

        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("lost.txt"), "0 0.5 0.5 0.1 0.1\n").unwrap();
        let err = import_normalized_annotations(dir.path(), Split::Train, |_| None).unwrap_err();
        assert!(err.to_string().contains("lost"));
    }

    #[test]
    fn import_reads_pixels_beside_annotations() {
        let dir = tempfile::tempdir().unwrap();
        pgm::write(&dir.path().join("pg.pgm"), 4, 2, &[0.0; 8]).unwrap();
        fs::write(dir.path().join("pg.txt"), "0 0.5 0.5 0.5 0.5\n").unwrap();
        let c = import_normalized_annotations(dir.path(), Split::Test, pgm_size_lookup(dir.path()))
            .unwrap();
        assert_eq!(c.pages[0].page.pixels, vec![0.0; 8]);
        assert_eq!(c.pages[0].boxes[0].bbox.w, 2.0);
    }

    #[test]
    fn predictions_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pred.jsonl");
        let preds = vec![
            ("a".to_string(), vec![BBox::new(1.5, 2.0, 3.0, 4.0, 0.9).unwrap()]),
            ("b".to_string(), vec![]),
        ];
        write_predictions(&path, &preds).unwrap();
        assert_eq!(read_predictions(&path).unwrap(), preds);
    }
}
