//! Multi-seed comparison of the baseline, random-order and sorted-order
//! self-paced regimes on one dropped-label training corpus per seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curriculum::{build_random_curriculum, build_sorted_curriculum};
use crate::dataset::{drop_labels, load_corpus, Corpus, DropPolicy, Split};
use crate::detector::{
    Detector, ExternalDetector, LogisticDetector, LogisticSettings, OracleDetector, OracleSkill, TrainConfig,
};
use crate::error::{Error, Result};
use crate::evaluation::{write_report, ReportRow};
use crate::orchestrator::{
    run_baseline, run_spl, write_baseline_artifacts, write_spl_artifacts, BaselineRun, SplConfig, SplRun,
};
use crate::seeding::derive_seed;
use crate::synthgen::{generate_corpus_prefixed, PageStyle};

pub const BASELINE: &str = "baseline";
pub const SPL_RANDOM: &str = "spl-random";
pub const SPL_SORTED: &str = "spl-sorted";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Logistic,
    Oracle,
    External,
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(Self::Logistic),
            "oracle" => Ok(Self::Oracle),
            "external" => Ok(Self::External),
            other => Err(Error::InvalidConfig(format!("unknown detector kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Page style JSON; the default style when absent.
    pub style: Option<PathBuf>,
    /// Training manifest; synthesized when absent.
    pub train_manifest: Option<PathBuf>,
    /// Test manifest with complete labels; synthesized when absent.
    pub test_manifest: Option<PathBuf>,
    pub train_pages: usize,
    pub test_pages: usize,
    /// Whether to drop training labels before the run.
    pub drop_labels: bool,
    pub drop_alpha: f64,
    pub drop_beta: f64,
    pub k: usize,
    pub nms_iou: f64,
    pub eval_iou: f64,
    pub confidence_floor: Option<f64>,
    pub lr: f64,
    pub epochs_per_iter: usize,
    pub max_total_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub init_std: f64,
    pub detector: DetectorKind,
    pub oracle: OracleSkill,
    pub external_command: Option<String>,
    pub external_train_command: Option<String>,
    pub seeds: Vec<u64>,
    pub parallel: bool,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            style: None,
            train_manifest: None,
            test_manifest: None,
            train_pages: 200,
            test_pages: 40,
            drop_labels: true,
            drop_alpha: 2.0,
            drop_beta: 5.0,
            k: 5,
            nms_iou: 0.5,
            eval_iou: 0.5,
            confidence_floor: Some(0.25),
            lr: train.learning_rate,
            epochs_per_iter: train.epochs_per_iteration,
            max_total_epochs: train.max_total_epochs,
            patience: train.patience,
            batch_size: train.batch_size,
            init_std: train.init_std,
            detector: DetectorKind::Logistic,
            oracle: OracleSkill {
                recall: 0.9,
                precision: 0.9,
                jitter: 1.0,
            },
            external_command: None,
            external_train_command: None,
            seeds: vec![42],
            parallel: false,
            out: PathBuf::from("runs/experiment"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            epochs_per_iteration: self.epochs_per_iter,
            max_total_epochs: self.max_total_epochs,
            patience: self.patience,
            batch_size: self.batch_size,
            init_std: self.init_std,
        }
    }

    pub fn spl_config(&self) -> SplConfig {
        SplConfig {
            nms_iou: self.nms_iou,
            confidence_floor: self.confidence_floor,
            eval_iou: self.eval_iou,
        }
    }

    pub fn drop_policy(&self) -> DropPolicy {
        DropPolicy::Beta {
            alpha: self.drop_alpha,
            beta: self.drop_beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        self.spl_config().validate()?;
        self.train_config().validate()?;
        self.oracle.validate()?;
        if self.drop_labels {
            self.drop_policy().validate()?;
        }
        if self.detector == DetectorKind::External && self.external_command.is_none() {
            return Err(Error::InvalidConfig("external detector needs external_command".into()));
        }
        if self.train_manifest.is_some() != self.test_manifest.is_some() {
            return Err(Error::InvalidConfig("train_manifest and test_manifest go together".into()));
        }
        Ok(())
    }
}

/// Results of the three regimes for one seed.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub baseline: BaselineRun,
    pub random: SplRun,
    pub sorted: SplRun,
}

impl SeedOutcome {
    pub fn rows(&self) -> Vec<ReportRow> {
        let mut rows = vec![self.baseline.row(&regime_label(BASELINE, self.seed))];
        rows.extend(self.random.rows(&regime_label(SPL_RANDOM, self.seed)));
        rows.extend(self.sorted.rows(&regime_label(SPL_SORTED, self.seed)));
        rows
    }
}

pub fn regime_label(regime: &str, seed: u64) -> String {
    format!("{regime}@{seed}")
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub seeds: Vec<SeedOutcome>,
    pub rows: Vec<ReportRow>,
    /// Mean and standard deviation of the final AP and mean IoU per regime.
    pub summary: String,
}

/// Training (labels dropped) and test (labels complete) corpora for `seed`.
pub fn prepare_corpora(config: &ExperimentConfig, seed: u64) -> Result<(Corpus, Corpus, Corpus)> {
    let (full_train, test) = match (&config.train_manifest, &config.test_manifest) {
        (Some(tr), Some(te)) => (load_corpus(tr)?, load_corpus(te)?),
        _ => {
            let style = match &config.style {
                Some(p) => PageStyle::from_json_file(p)?,
                None => PageStyle::default(),
            };
            (
                generate_corpus_prefixed(&style, config.train_pages, derive_seed(seed, 1), Split::Train, "train")?,
                generate_corpus_prefixed(&style, config.test_pages, derive_seed(seed, 2), Split::Test, "test")?,
            )
        }
    };
    let train = if config.drop_labels {
        drop_labels(&full_train, config.drop_policy(), derive_seed(seed, 3))?
    } else {
        full_train.clone()
    };
    Ok((full_train, train, test))
}

/// A freshly initialized detector; identical across regimes of one seed.
pub fn make_detector(
    config: &ExperimentConfig,
    seed: u64,
    full_train: &Corpus,
    test: &Corpus,
) -> Result<Box<dyn Detector>> {
    Ok(match config.detector {
        DetectorKind::Logistic => {
            let settings = LogisticSettings {
                seed: derive_seed(seed, 4),
                ..LogisticSettings::default()
            };
            Box::new(LogisticDetector::new(settings, config.init_std)?)
        }
        DetectorKind::Oracle => Box::new(OracleDetector::new(&[full_train, test], config.oracle, derive_seed(seed, 4))?),
        DetectorKind::External => {
            let cmd = config
                .external_command
                .clone()
                .ok_or_else(|| Error::InvalidConfig("external detector needs external_command".into()))?;
            Box::new(ExternalDetector::new(cmd, config.external_train_command.clone())?)
        }
    })
}

fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedOutcome> {
    let stage = |name: &str| format!("seed {seed}: {name}");
    let (full_train, train, test) = prepare_corpora(config, seed).map_err(|e| e.in_stage(stage("data")))?;
    let train_config = config.train_config();
    let spl_config = config.spl_config();
    let fresh = || make_detector(config, seed, &full_train, &test);

    let baseline = fresh()
        .and_then(|mut d| run_baseline(&train, &test, d.as_mut(), &train_config, config.eval_iou))
        .map_err(|e| e.in_stage(stage(BASELINE)))?;
    let random = build_random_curriculum(&train, config.k, derive_seed(seed, 5))
        .and_then(|c| run_spl(&train, &test, &c, fresh()?.as_mut(), &train_config, &spl_config))
        .map_err(|e| e.in_stage(stage(SPL_RANDOM)))?;
    let sorted = build_sorted_curriculum(&train, config.k)
        .and_then(|c| run_spl(&train, &test, &c, fresh()?.as_mut(), &train_config, &spl_config))
        .map_err(|e| e.in_stage(stage(SPL_SORTED)))?;
    Ok(SeedOutcome {
        seed,
        baseline,
        random,
        sorted,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Final-iteration (AP, mean IoU) in percent, per regime and seed.
fn finals(seeds: &[SeedOutcome]) -> [(&'static str, Vec<(f64, f64)>); 3] {
    let pct = |e: &crate::evaluation::EvalSummary| (100.0 * e.ap, 100.0 * e.mean_iou);
    [
        (BASELINE, seeds.iter().map(|s| pct(&s.baseline.test)).collect()),
        (SPL_RANDOM, seeds.iter().map(|s| pct(&s.random.final_iteration().test)).collect()),
        (SPL_SORTED, seeds.iter().map(|s| pct(&s.sorted.final_iteration().test)).collect()),
    ]
}

fn summary_stats(values: &[(f64, f64)]) -> [f64; 4] {
    let (ap, iou): (Vec<f64>, Vec<f64>) = values.iter().copied().unzip();
    let (am, asd) = mean_std(&ap);
    let (im, isd) = mean_std(&iou);
    [am, asd, im, isd]
}

fn summarize(seeds: &[SeedOutcome]) -> String {
    let mut out = format!("# final-iteration summary over {} seed(s), mean ± std, in %\n", seeds.len());
    for (regime, v) in &finals(seeds) {
        let [am, asd, im, isd] = summary_stats(v);
        let _ = writeln!(out, "{regime:<12} AP {am:6.2} ± {asd:5.2}   mean IoU {im:6.2} ± {isd:5.2}");
    }
    out
}

/// `summary.csv`: per-regime mean and standard deviation of the final rows.
fn summary_csv(seeds: &[SeedOutcome]) -> String {
    let mut out = String::from("regime,ap_mean,ap_std,mean_iou_mean,mean_iou_std\n");
    for (regime, v) in &finals(seeds) {
        let [am, asd, im, isd] = summary_stats(v);
        let _ = writeln!(out, "{regime},{am:.2},{asd:.2},{im:.2},{isd:.2}");
    }
    out
}

/// Runs every seed without touching the filesystem (beyond reading inputs).
pub fn run_experiment_in_memory(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let seeds: Vec<SeedOutcome> = if config.parallel {
        config.seeds.par_iter().map(|&s| run_seed(config, s)).collect::<Result<_>>()?
    } else {
        config.seeds.iter().map(|&s| run_seed(config, s)).collect::<Result<_>>()?
    };
    let rows = seeds.iter().flat_map(SeedOutcome::rows).collect();
    let summary = summarize(&seeds);
    Ok(ExperimentOutcome { seeds, rows, summary })
}

/// Runs the experiment and writes the merged report plus per-seed artifacts
/// under `config.out`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let outcome = run_experiment_in_memory(config)?;
    let out = &config.out;
    let write = || -> Result<()> {
        for s in &outcome.seeds {
            let dir = out.join(format!("seed-{}", s.seed));
            write_baseline_artifacts(&dir.join(BASELINE), &s.baseline, &regime_label(BASELINE, s.seed))?;
            write_spl_artifacts(&dir.join(SPL_RANDOM), &s.random, &regime_label(SPL_RANDOM, s.seed))?;
            write_spl_artifacts(&dir.join(SPL_SORTED), &s.sorted, &regime_label(SPL_SORTED, s.seed))?;
        }
        write_report(out, &outcome.rows, &outcome.summary)?;
        let path = out.join("summary.csv");
        fs::write(&path, summary_csv(&outcome.seeds)).map_err(|e| Error::io(&path, e))?;
        let path = out.join("config.json");
        let text = serde_json::to_string_pretty(config).map_err(|e| Error::io(&path, e.into()))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    };
    write().map_err(|e| e.in_stage("write report"))?;
    Ok(outcome)
}
