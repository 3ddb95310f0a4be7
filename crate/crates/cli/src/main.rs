//! `selfpace`: generate corpora, build curricula, run the three-regime
//! experiment and score prediction files.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 training failure.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use selfpace::curriculum::{build_random_curriculum, build_sorted_curriculum};
use selfpace::dataset::{
    import_normalized_annotations, load_corpus, pgm_size_lookup, read_manifest, read_predictions, save_corpus,
    Split,
};
use selfpace::evaluation::{evaluate, render_report, ReportRow};
use selfpace::experiment::{run_experiment, DetectorKind, ExperimentConfig};
use selfpace::synthgen::{generate_corpus, PageStyle};
use selfpace::{BBox, Error, ErrorClass, Result};

#[derive(Debug, Parser)]
#[command(name = "selfpace", version, about = "Self-paced text-row detection under missing labels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic corpus (manifest plus PGM images).
    Generate(GenerateArgs),
    /// Partition a corpus into k batches.
    Curriculum(CurriculumArgs),
    /// Run baseline, random-order and sorted-order regimes over one or more seeds.
    Experiment(Box<ExperimentArgs>),
    /// Score a predictions file against a ground-truth manifest.
    Evaluate(EvaluateArgs),
    /// Convert a directory of normalized center-format annotations to a manifest.
    Import(ImportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Page style JSON; the default style when omitted.
    #[arg(long)]
    style: Option<PathBuf>,
    #[arg(long)]
    pages: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "train")]
    split: SplitArg,
    /// Manifest path; images go to a sibling directory named after it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Order {
    Sorted,
    Random,
}

#[derive(Debug, Args)]
struct CurriculumArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, value_enum, default_value = "sorted")]
    order: Order,
    /// Shuffle seed for the random order.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// JSON config; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    style: Option<PathBuf>,
    #[arg(long)]
    train_manifest: Option<PathBuf>,
    #[arg(long)]
    test_manifest: Option<PathBuf>,
    #[arg(long)]
    train_pages: Option<usize>,
    #[arg(long)]
    test_pages: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    nms_iou: Option<f64>,
    #[arg(long)]
    eval_iou: Option<f64>,
    /// Pseudo-label confidence floor; negative disables it.
    #[arg(long, allow_negative_numbers = true)]
    confidence_floor: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs_per_iter: Option<usize>,
    #[arg(long)]
    max_total_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    init_std: Option<f64>,
    #[arg(long)]
    drop_alpha: Option<f64>,
    #[arg(long)]
    drop_beta: Option<f64>,
    /// Keep the training labels as loaded.
    #[arg(long)]
    no_drop: bool,
    #[arg(long, value_parser = parse_detector)]
    detector: Option<DetectorKind>,
    #[arg(long)]
    external_command: Option<String>,
    #[arg(long)]
    external_train_command: Option<String>,
    /// Single seed.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Run seeds concurrently.
    #[arg(long)]
    parallel: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_detector(s: &str) -> std::result::Result<DetectorKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Predictions JSONL, one `{"id", "boxes"}` line per page.
    #[arg(long)]
    predictions: PathBuf,
    /// Manifest holding the complete annotations.
    #[arg(long)]
    ground_truth: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    /// Also write the metrics as a one-row report CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ImportArgs {
    /// Directory of `<id>.txt` files beside `<id>.pgm` images.
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    split: SplitArg,
    #[arg(long)]
    out: PathBuf,
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let style = match &args.style {
        Some(p) => PageStyle::from_json_file(p)?,
        None => PageStyle::default(),
    };
    let corpus = generate_corpus(&style, args.pages, args.seed, args.split.into())?;
    save_corpus(&corpus, &args.out)?;
    println!("pages: {}, boxes: {}", corpus.len(), corpus.box_count());
    Ok(())
}

fn cmd_curriculum(args: &CurriculumArgs) -> Result<()> {
    let corpus = load_corpus(&args.manifest)?;
    let curriculum = match args.order {
        Order::Sorted => build_sorted_curriculum(&corpus, args.k)?,
        Order::Random => build_random_curriculum(&corpus, args.k, args.seed)?,
    };
    curriculum.save(&args.out)?;
    let sizes: Vec<String> = curriculum.sizes().iter().map(usize::to_string).collect();
    println!("batches: {}", sizes.join(" "));
    Ok(())
}

fn experiment_config(args: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut c = match &args.config {
        Some(p) => ExperimentConfig::from_json_file(p)?,
        None => ExperimentConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = &args.$field {
                c.$field = v.clone().into();
            }
        )*};
    }
    set!(style, train_manifest, test_manifest, external_command, external_train_command);
    set!(train_pages, test_pages, k, nms_iou, eval_iou, lr, epochs_per_iter, max_total_epochs);
    set!(patience, batch_size, init_std, drop_alpha, drop_beta, detector, out);
    if let Some(f) = args.confidence_floor {
        c.confidence_floor = (f >= 0.0).then_some(f);
    }
    if let Some(s) = args.seed {
        c.seeds = vec![s];
    }
    if let Some(s) = &args.seeds {
        c.seeds = s.clone();
    }
    c.drop_labels &= !args.no_drop;
    c.parallel |= args.parallel;
    c.validate()?;
    Ok(c)
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<()> {
    let config = experiment_config(args)?;
    let outcome = run_experiment(&config)?;
    print!("{}", render_report(&outcome.rows)?.text);
    print!("\n{}", outcome.summary);
    println!("report written to {}", config.out.join("report.csv").display());
    Ok(())
}

/// Page ids, predictions and ground truth, aligned by page.
type EvaluationInputs = (Vec<String>, Vec<Vec<BBox>>, Vec<Vec<BBox>>);

/// Ground truth from the manifest, with predictions aligned to its pages.
/// Pages absent from the predictions file have no predictions.
fn load_evaluation_inputs(args: &EvaluateArgs) -> Result<EvaluationInputs> {
    let (_, entries) = read_manifest(&args.ground_truth)?;
    let ids: Vec<String> = entries.iter().map(|e| e.id.clone()).collect();
    let truth = entries
        .iter()
        .map(|e| Ok(e.annotations()?.into_iter().map(|a| a.bbox).collect()))
        .collect::<Result<Vec<Vec<BBox>>>>()?;
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut preds = vec![Vec::new(); ids.len()];
    let mut seen = vec![false; ids.len()];
    for (id, boxes) in read_predictions(&args.predictions)? {
        let &i = index.get(id.as_str()).ok_or_else(|| {
            Error::Evaluation(format!("predictions mention page {id}, absent from the ground truth"))
        })?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::Evaluation(format!("page {id} appears twice in the predictions")));
        }
        preds[i] = boxes;
    }
    Ok((ids, preds, truth))
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let (ids, preds, truth) = load_evaluation_inputs(args)?;
    let summary = evaluate(&ids, &preds, &truth, args.iou)?;
    let row = ReportRow::new("evaluate", "-", 100.0 * summary.ap, 100.0 * summary.mean_iou);
    println!("AP {:.2}", row.ap_percent);
    println!("mean IoU {:.2}", row.mean_iou_percent);
    println!(
        "TP {} FP {} FN {}",
        summary.true_positives, summary.false_positives, summary.false_negatives
    );
    if let Some(path) = &args.csv {
        write_file(path, &render_report(&[row])?.csv)?;
    }
    Ok(())
}

fn cmd_import(args: &ImportArgs) -> Result<()> {
    let corpus = import_normalized_annotations(&args.dir, args.split.into(), pgm_size_lookup(&args.dir))?;
    save_corpus(&corpus, &args.out)?;
    println!("pages: {}, boxes: {}", corpus.len(), corpus.box_count());
    Ok(())
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_owned(),
            source: e,
        })?;
    }
    fs::write(path, body).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Training => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Curriculum(a) => cmd_curriculum(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Import(a) => cmd_import(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}
