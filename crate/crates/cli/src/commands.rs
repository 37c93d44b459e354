use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use curriculum_core::forge::{build_corpus, ImageRecord, MaskRecord, OrganMask, RecordPool, VqaCotRecord};
use curriculum_core::harness::{hard_pool_from, run_dynamics_sim, run_toy_training, DynamicsSpec};
use curriculum_core::jsonl::{read_jsonl, to_jsonl_string};
use curriculum_core::scheduler::{Decision, TrainingTrace};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::AppConfig;
use crate::remote::backend_registry;
use crate::{jsonl_error, write_atomic, CliError};

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, CliError> {
    read_jsonl(open(path)?).map_err(|e| jsonl_error(path, e))
}

fn at_line(path: &Path, line: usize, message: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: line {line}: {message}", path.display()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DecisionCounts {
    pub increase_hard: usize,
    pub reduce_hard: usize,
    pub hold: usize,
}

impl DecisionCounts {
    pub fn of(trace: &TrainingTrace) -> Self {
        let mut c = Self::default();
        for r in &trace.epochs {
            match r.decision {
                Decision::IncreaseHard => c.increase_hard += 1,
                Decision::ReduceHard => c.reduce_hard += 1,
                Decision::Hold => c.hold += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ForgeSummary {
    pub records: usize,
    pub skipped: usize,
    pub failed: usize,
    pub skipped_annotations: Vec<curriculum_core::forge::SkippedAnnotation>,
    pub failed_annotations: Vec<curriculum_core::forge::FailedAnnotation>,
}

/// Reads the dataset and mask sidecar, builds the corpus and writes it to
/// `out` in one atomic step.
pub fn cmd_forge(
    config: &AppConfig,
    dataset: &Path,
    masks: &Path,
    out: &Path,
    skip_failed: bool,
) -> Result<ForgeSummary, CliError> {
    let mut images: Vec<ImageRecord> = Vec::new();
    let mut lines: HashMap<String, usize> = HashMap::new();
    for (line, image) in load_jsonl::<ImageRecord>(dataset)? {
        image.validate().map_err(|e| at_line(dataset, line, e))?;
        if let Some(first) = lines.insert(image.image_id.clone(), line) {
            return Err(at_line(
                dataset,
                line,
                format!("image_id {} already used on line {first}", image.image_id),
            ));
        }
        images.push(image);
    }
    let mut by_image: HashMap<String, Vec<OrganMask>> = HashMap::new();
    for (line, record) in load_jsonl::<MaskRecord>(masks)? {
        let mask = record.decode().map_err(|e| at_line(masks, line, e))?;
        if !lines.contains_key(&record.image_id) {
            log::warn!(
                "{}: line {line}: mask for unknown image {}",
                masks.display(),
                record.image_id
            );
        }
        by_image.entry(record.image_id).or_default().push(mask);
    }

    let backend = backend_registry()
        .build(&config.forge.backend)
        .map_err(|e| CliError::Config(format!("forge.backend: {e}")))?;
    let output = build_corpus(&images, &by_image, backend.as_ref(), &config.forge.options(skip_failed))?;
    write_atomic(out, to_jsonl_string(&output.records).as_bytes())?;
    for f in &output.failed {
        log::warn!("{} annotation {} failed: {}", f.image_id, f.annotation_index, f.reason);
    }
    Ok(ForgeSummary {
        records: output.records.len(),
        skipped: output.skipped.len(),
        failed: output.failed.len(),
        skipped_annotations: output.skipped,
        failed_annotations: output.failed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub epochs: usize,
    pub final_lambda_h: Option<f64>,
    pub final_mean_loss: Option<f64>,
    pub decisions: DecisionCounts,
}

impl RunSummary {
    fn of(trace: &TrainingTrace) -> Self {
        let last = trace.epochs.last();
        Self {
            epochs: trace.epochs.len(),
            final_lambda_h: last.map(|r| r.lambda_h_next),
            final_mean_loss: last.and_then(|r| r.mean_total),
            decisions: DecisionCounts::of(trace),
        }
    }
}

fn write_trace(trace: &TrainingTrace, out: &Path, csv: Option<&Path>) -> Result<(), CliError> {
    let text = trace
        .to_jsonl_string()
        .map_err(|e| CliError::Data(format!("serializing trace: {e}")))?;
    write_atomic(out, text.as_bytes())?;
    if let Some(csv) = csv {
        export_csv(trace, csv)?;
    }
    Ok(())
}

/// Runs the scheduler against a scripted scenario. The scenario's own
/// epochs, batch size, seed and scheduler overrides take precedence over the
/// configuration.
pub fn cmd_simulate(
    config: &AppConfig,
    scenario: &Path,
    out: &Path,
    csv: Option<&Path>,
) -> Result<RunSummary, CliError> {
    let text = std::fs::read_to_string(scenario).map_err(|source| CliError::Io {
        path: scenario.to_path_buf(),
        source,
    })?;
    let spec: DynamicsSpec =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", scenario.display())))?;
    let hp = spec.hyperparams(&config.scheduler)?;
    let trace = run_dynamics_sim(
        &spec,
        hp,
        spec.epochs.unwrap_or(config.harness.epochs),
        spec.batch_size.unwrap_or(config.harness.batch_size),
        spec.seed.unwrap_or(config.harness.seed),
    )?;
    write_trace(&trace, out, csv)?;
    Ok(RunSummary::of(&trace))
}

fn load_corpus(path: &Path) -> Result<Vec<VqaCotRecord>, CliError> {
    let mut records = Vec::new();
    for (line, record) in load_jsonl::<VqaCotRecord>(path)? {
        let problems = record.violations(RecordPool::Main);
        if !problems.is_empty() {
            return Err(at_line(path, line, problems.join("; ")));
        }
        records.push(record);
    }
    Ok(records)
}

/// Trains the toy model on `corpus` under the configured scheduler.
pub fn cmd_train_toy(
    config: &AppConfig,
    corpus: &Path,
    out: &Path,
    csv: Option<&Path>,
) -> Result<RunSummary, CliError> {
    let records = load_corpus(corpus)?;
    let run = run_toy_training(&records, &hard_pool_from(&records), config.scheduler, &config.harness)?;
    write_trace(&run.trace, out, csv)?;
    Ok(RunSummary::of(&run.trace))
}

#[derive(Debug, Clone, Serialize)]
pub struct LineReport {
    pub line: usize,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub records: usize,
    pub valid: usize,
    pub invalid: Vec<LineReport>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.invalid.is_empty()
    }
}

/// Checks every line of a corpus file, reporting all failures rather than
/// stopping at the first.
pub fn cmd_validate(corpus: &Path, pool: RecordPool) -> Result<ValidationReport, CliError> {
    let reader = open(corpus)?;
    let mut report = ValidationReport {
        records: 0,
        valid: 0,
        invalid: Vec::new(),
    };
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line.map_err(|source| CliError::Io {
            path: corpus.to_path_buf(),
            source,
        })?;
        if text.trim().is_empty() {
            continue;
        }
        report.records += 1;
        let errors = match serde_json::from_str::<VqaCotRecord>(&text) {
            Ok(record) => record.violations(pool),
            Err(e) => vec![format!("parse error: {e}")],
        };
        if errors.is_empty() {
            report.valid += 1;
        } else {
            report.invalid.push(LineReport { line: line_no, errors });
        }
    }
    Ok(report)
}

#[derive(Serialize)]
struct CsvRow {
    epoch: u32,
    lambda_e: f64,
    lambda_m: f64,
    lambda_h: f64,
    global_ema: Option<f64>,
    gap_cot: Option<f64>,
}

/// One row per epoch: realized stage proportions, global loss EMA and the
/// rationale gap (empty when undefined).
pub fn export_csv(trace: &TrainingTrace, path: &Path) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for r in &trace.epochs {
        writer
            .serialize(CsvRow {
                epoch: r.epoch,
                lambda_e: r.realized.lambda_e,
                lambda_m: r.realized.lambda_m,
                lambda_h: r.realized.lambda_h,
                global_ema: r.global_ema,
                gap_cot: r.gap_cot,
            })
            .map_err(|e| CliError::Data(format!("csv: {e}")))?;
    }
    let bytes = writer.into_inner().map_err(|e| CliError::Data(format!("csv: {e}")))?;
    write_atomic(path, &bytes)
}
