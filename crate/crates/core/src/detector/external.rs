//! Subprocess bridge. The command receives `--input <manifest> --output
//! <predictions>`; the manifest uses the corpus format and the predictions
//! file holds one `{"id": ..., "boxes": [{x, y, w, h, score}]}` line per page.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use super::{check_prediction, sort_by_score, Detector, TrainConfig};
use crate::dataset::{read_predictions, save_corpus, AnnotatedPage, Corpus, PageImage, Split};
use crate::error::{Error, Result};
use crate::BBox;

fn split_command(template: &str) -> Result<(String, Vec<String>)> {
    let mut parts = template.split_whitespace().map(str::to_owned);
    let program = parts
        .next()
        .ok_or_else(|| Error::InvalidConfig("empty external detector command".into()))?;
    Ok((program, parts.collect()))
}

fn run(template: &str, extra: &[(&str, &Path)]) -> Result<()> {
    let (program, args) = split_command(template)?;
    let mut cmd = Command::new(&program);
    cmd.args(&args);
    for (flag, path) in extra {
        cmd.arg(flag).arg(path);
    }
    let output = cmd
        .output()
        .map_err(|e| Error::External(format!("cannot run {program}: {e}")))?;
    if !output.status.success() {
        return Err(Error::External(format!(
            "{program} exited with {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    Ok(())
}

/// Runs `command` once over `pages` and returns predictions in page order.
/// Pages the command does not mention get no boxes.
pub fn external_detect(command: &str, pages: &[AnnotatedPage]) -> Result<Vec<Vec<BBox>>> {
    let dir = tempfile::tempdir().map_err(|e| Error::External(format!("temp dir: {e}")))?;
    let input = dir.path().join("input.jsonl");
    let output = dir.path().join("predictions.jsonl");
    let corpus = Corpus::new(Split::Test, pages.to_vec())?;
    save_corpus(&corpus, &input)?;
    run(command, &[("--input", &input), ("--output", &output)])?;

    let lines = read_predictions(&output).map_err(|e| Error::External(format!("unparseable output: {e}")))?;
    let index = corpus.index();
    let mut result = vec![Vec::new(); pages.len()];
    for (id, mut boxes) in lines {
        let &i = index
            .get(id.as_str())
            .ok_or_else(|| Error::External(format!("prediction for unknown page {id}")))?;
        for b in &boxes {
            check_prediction(&pages[i].page, b)?;
        }
        sort_by_score(&mut boxes);
        result[i] = boxes;
    }
    Ok(result)
}

/// Detector backed by external commands. The optional training command is
/// invoked as `<train> --input <manifest>` with the current annotations.
#[derive(Debug, Clone)]
pub struct ExternalDetector {
    pub predict_command: String,
    pub train_command: Option<String>,
}

impl ExternalDetector {
    pub fn new(predict_command: impl Into<String>, train_command: Option<String>) -> Result<Self> {
        let predict_command = predict_command.into();
        split_command(&predict_command)?;
        if let Some(t) = &train_command {
            split_command(t)?;
        }
        Ok(Self {
            predict_command,
            train_command,
        })
    }
}

impl Detector for ExternalDetector {
    fn name(&self) -> &'static str {
        "external"
    }

    fn train(&mut self, pages: &[AnnotatedPage], _config: &TrainConfig) -> Result<Vec<f64>> {
        if pages.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if let Some(cmd) = &self.train_command {
            let dir = tempfile::tempdir().map_err(|e| Error::External(format!("temp dir: {e}")))?;
            let input = dir.path().join("train.jsonl");
            save_corpus(&Corpus::new(Split::Train, pages.to_vec())?, &input)?;
            run(cmd, &[("--input", &input)])?;
        }
        Ok(Vec::new())
    }

    fn predict(&self, page: &PageImage) -> Result<Vec<BBox>> {
        Ok(self.predict_many(&[page])?.pop().unwrap_or_default())
    }

    /// One subprocess for the whole batch. Pages are sent without annotations.
    fn predict_many(&self, pages: &[&PageImage]) -> Result<Vec<Vec<BBox>>> {
        let bare: Vec<AnnotatedPage> = pages
            .iter()
            .map(|p| AnnotatedPage {
                page: Arc::new((*p).clone()),
                image: format!("{}.pgm", p.id),
                boxes: Vec::new(),
            })
            .collect();
        external_detect(&self.predict_command, &bare)
    }

    fn checkpoint(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "external",
            "predict_command": self.predict_command,
            "train_command": self.train_command,
        })
    }
}
