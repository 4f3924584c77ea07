//! The stages behind the command line. Each stage reads its inputs from and
//! writes its artifacts to the configured output directory:
//!
//! ```text
//! prepared/{scaler.json, split_manifest.json, train.csv, val.csv, test.csv}
//! filter_report.json
//! screening_records.json, checkpoints/, curves/<id>.csv
//! final_report.json, final/, curves/<id>.full.csv
//! run.log
//! ```
//!
//! JSON artifacts carry the config fingerprint and seed and nothing that
//! varies between runs; wall-clock timings go to `run.log` only.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{derive_seed, ConfigError, RunConfig};
use crate::data::{self, CsvSchema, DataError, Dataset, ScalerParams, SplitIndices, SplitSet};
use crate::qasm::{self, CircuitIR};
use crate::screening::{
    self, read_json, write_json, CheckpointStore, FilterReport, FinalReport, GlobalBestEntry, RejectReason,
    RunStamp, ScreenError, ScreeningRecord,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Screen(#[from] ScreenError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    MissingInput(String),
}

impl PipelineError {
    /// 1 for configuration and data problems, 2 for internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Screen(ScreenError::Model(_) | ScreenError::Metrics(_) | ScreenError::CheckpointMismatch(_)) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub const PREPARED_DIR: &str = "prepared";
pub const FILTER_REPORT: &str = "filter_report.json";
pub const SCREENING_RECORDS: &str = "screening_records.json";
pub const FINAL_REPORT: &str = "final_report.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const CURVES_DIR: &str = "curves";
pub const FINAL_DIR: &str = "final";
pub const RUN_LOG: &str = "run.log";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerFile {
    pub config_fingerprint: String,
    pub seed: u64,
    /// `balanced` (the whole post-SMOTE set) or `train`.
    pub fitted_on: String,
    pub target_interval: [f64; 2],
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub config_fingerprint: String,
    pub seed: u64,
    pub split_first: bool,
    pub num_features: usize,
    pub samples_per_class: usize,
    pub input_rows: usize,
    pub synthetic_rows: usize,
    /// `[class 0, class 1]` row counts of each split.
    pub class_counts: BTreeMap<String, [usize; 2]>,
    /// Row indices of each split: into the balanced set by default, into the
    /// input CSV when splitting first.
    pub indices: SplitIndices,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReportFile {
    pub config_fingerprint: String,
    pub seed: u64,
    pub accepted: usize,
    pub rejected: BTreeMap<String, usize>,
    pub reports: Vec<FilterReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningFile {
    pub config_fingerprint: String,
    pub seed: u64,
    /// Best first.
    pub records: Vec<ScreeningRecord>,
    pub selected: Option<String>,
    pub global_best_chain: Vec<GlobalBestEntry>,
}

/// Paths and stamp shared by all stages of one configured run.
pub struct Pipeline {
    pub config: RunConfig,
    pub stamp: RunStamp,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let stamp = RunStamp {
            config_fingerprint: config.fingerprint(),
            seed: config.seed,
        };
        Ok(Pipeline { config, stamp })
    }

    pub fn out(&self) -> &Path {
        &self.config.paths.output_dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out().join(name)
    }

    fn log(&self, stage: &str, message: &str) {
        println!("[{stage}] {message}");
    }

    /// Appends a line to `run.log`; failures to log are not fatal.
    fn log_timing(&self, stage: &str, message: &str) {
        let path = self.path(RUN_LOG);
        if std::fs::create_dir_all(self.out()).is_err() {
            return;
        }
        if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(&path) {
            let _ = writeln!(f, "[{stage}] {message}");
        }
    }

    // -- preprocess ---------------------------------------------------------

    /// Load → SMOTE → scale → split (or split → SMOTE per part → scale on
    /// train) and write the prepared splits.
    pub fn preprocess(&self) -> Result<SplitSet, PipelineError> {
        let start = Instant::now();
        let cfg = &self.config.data;
        let raw = data::load_csv(&self.config.paths.data_csv, &cfg.schema())?;
        if raw.is_empty() {
            return Err(DataError::Empty.into());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.stamp.seed, "preprocess"));
        let spc = cfg.samples_per_class;
        let (split, indices, scaler, synthetic_rows, fitted_on) = if cfg.split_first {
            let (parts, indices) = data::stratified_split(&raw, cfg.split_ratios, &mut rng)?;
            let mut balanced = Vec::with_capacity(3);
            let mut synthetic = 0;
            for (part, ratio) in [parts.train, parts.val, parts.test].iter().zip(cfg.split_ratios) {
                let target = (ratio * spc as f64).round() as usize;
                let out = data::smote(part, cfg.smote_k, target, &mut rng)?;
                synthetic += out.synthetic.len();
                balanced.push(out.data);
            }
            let scaler = ScalerParams::fit(&balanced[0]);
            let split = SplitSet {
                train: scaler.transform(&balanced[0]),
                val: scaler.transform(&balanced[1]),
                test: scaler.transform(&balanced[2]),
            };
            (split, indices, scaler, synthetic, "train")
        } else {
            let out = data::smote(&raw, cfg.smote_k, spc, &mut rng)?;
            let (scaled, scaler) = data::minmax_scale(&out.data);
            let (split, indices) = data::stratified_split(&scaled, cfg.split_ratios, &mut rng)?;
            (split, indices, scaler, out.synthetic.len(), "balanced")
        };

        let dir = self.path(PREPARED_DIR);
        write_json(
            &dir.join("scaler.json"),
            &ScalerFile {
                config_fingerprint: self.stamp.config_fingerprint.clone(),
                seed: self.stamp.seed,
                fitted_on: fitted_on.to_string(),
                target_interval: [0.0, std::f64::consts::PI],
                mins: scaler.mins.clone(),
                maxs: scaler.maxs.clone(),
            },
        )?;
        let class_counts = [("train", &split.train), ("val", &split.val), ("test", &split.test)]
            .into_iter()
            .map(|(name, d)| (name.to_string(), d.class_counts()))
            .collect();
        write_json(
            &dir.join("split_manifest.json"),
            &SplitManifest {
                config_fingerprint: self.stamp.config_fingerprint.clone(),
                seed: self.stamp.seed,
                split_first: cfg.split_first,
                num_features: raw.num_features(),
                samples_per_class: spc,
                input_rows: raw.len(),
                synthetic_rows,
                class_counts,
                indices,
            },
        )?;
        for (name, d) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
            write_dataset(&dir.join(format!("{name}.csv")), d)?;
        }
        self.log(
            "preprocess",
            &format!(
                "{} input rows, {} synthetic; train/val/test = {}/{}/{}",
                raw.len(),
                synthetic_rows,
                split.train.len(),
                split.val.len(),
                split.test.len()
            ),
        );
        self.log_timing("preprocess", &format!("{:.3}s", start.elapsed().as_secs_f64()));
        Ok(split)
    }

    /// Reads the splits written by [`Pipeline::preprocess`].
    pub fn load_prepared(&self) -> Result<SplitSet, PipelineError> {
        let dir = self.path(PREPARED_DIR);
        let manifest_path = dir.join("split_manifest.json");
        if !manifest_path.exists() {
            return Err(PipelineError::MissingInput(format!(
                "{} not found; run `preprocess` first",
                manifest_path.display()
            )));
        }
        let manifest: SplitManifest = read_json(&manifest_path)?;
        self.check_stamp("prepared data", &manifest.config_fingerprint);
        let schema = prepared_schema(manifest.num_features);
        let load = |name: &str| data::load_csv(&dir.join(format!("{name}.csv")), &schema);
        Ok(SplitSet {
            train: load("train")?,
            val: load("val")?,
            test: load("test")?,
        })
    }

    fn check_stamp(&self, what: &str, fingerprint: &str) {
        if fingerprint != self.stamp.config_fingerprint {
            eprintln!(
                "warning: {what} was produced under config {fingerprint}, current config is {}",
                self.stamp.config_fingerprint
            );
        }
    }

    // -- filter -------------------------------------------------------------

    pub fn filter(&self) -> Result<FilterReportFile, PipelineError> {
        let start = Instant::now();
        let dir = &self.config.paths.corpus_dir;
        let outcome = screening::filter_circuits(dir, &self.config.filter, self.config.workers)?;
        let mut rejected: BTreeMap<String, usize> = BTreeMap::new();
        for r in &outcome.reports {
            if let Some(reason) = r.reject_reason {
                *rejected.entry(reason_name(reason)).or_default() += 1;
            }
        }
        let file = FilterReportFile {
            config_fingerprint: self.stamp.config_fingerprint.clone(),
            seed: self.stamp.seed,
            accepted: outcome.circuits().count(),
            rejected,
            reports: outcome.reports,
        };
        write_json(&self.path(FILTER_REPORT), &file)?;
        self.log(
            "filter",
            &format!("{} circuits, {} accepted", file.reports.len(), file.accepted),
        );
        for (reason, count) in &file.rejected {
            self.log("filter", &format!("rejected {reason}: {count}"));
        }
        for (n, group) in &outcome.accepted {
            self.log("filter", &format!("n={n}: {} accepted", group.len()));
        }
        self.log_timing("filter", &format!("{:.3}s", start.elapsed().as_secs_f64()));
        Ok(file)
    }

    /// Re-reads and re-checks the circuits the filter report accepted, ordered
    /// by qubit count then id.
    pub fn accepted_circuits(&self) -> Result<Vec<CircuitIR>, PipelineError> {
        let path = self.path(FILTER_REPORT);
        if !path.exists() {
            return Err(PipelineError::MissingInput(format!(
                "{} not found; run `filter` first",
                path.display()
            )));
        }
        let report: FilterReportFile = read_json(&path)?;
        let mut circuits = Vec::new();
        for r in report.reports.iter().filter(|r| r.accepted) {
            circuits.push(self.load_circuit(&r.source_id)?.ok_or_else(|| {
                PipelineError::MissingInput(format!(
                    "circuit `{}` no longer passes the filter; rerun `filter`",
                    r.source_id
                ))
            })?);
        }
        circuits.sort_by(|a, b| a.num_qubits.cmp(&b.num_qubits).then(a.source_id.cmp(&b.source_id)));
        Ok(circuits)
    }

    /// The filtered circuit `<corpus>/<id>.qasm`, or `None` when it is absent
    /// or rejected.
    fn load_circuit(&self, source_id: &str) -> Result<Option<CircuitIR>, PipelineError> {
        let entries = qasm::scan_corpus(&self.config.paths.corpus_dir).map_err(io_err(&self.config.paths.corpus_dir))?;
        let Some(entry) = entries.iter().find(|e| e.source_id == source_id) else {
            return Ok(None);
        };
        let text = std::fs::read_to_string(&entry.path).map_err(io_err(&entry.path))?;
        Ok(screening::filter_circuit(source_id, &text, &self.config.filter).1)
    }

    // -- screen -------------------------------------------------------------

    pub fn screen(&self) -> Result<ScreeningFile, PipelineError> {
        let start = Instant::now();
        let circuits = self.accepted_circuits()?;
        let split = self.load_prepared()?;
        let ckpt_dir = self.path(CHECKPOINT_DIR);
        // Checkpoints are recomputed from scratch; stale ones from another run
        // would otherwise survive next to the new ones.
        if ckpt_dir.exists() {
            std::fs::remove_dir_all(&ckpt_dir).map_err(io_err(&ckpt_dir))?;
        }
        std::fs::create_dir_all(&ckpt_dir).map_err(io_err(&ckpt_dir))?;
        let store = CheckpointStore::new(Some(ckpt_dir));
        self.log("screen", &format!("short-training {} circuits", circuits.len()));
        let outcome = screening::screen(
            &circuits,
            &split,
            &self.config.train,
            &self.config.model,
            &self.stamp,
            &store,
            self.config.workers,
        );
        for (id, history) in &outcome.histories {
            write_text(&self.path(CURVES_DIR).join(format!("{id}.csv")), &screening::curves_csv(history))?;
        }
        for r in &outcome.records {
            match &r.error {
                Some(e) => self.log("screen", &format!("{} failed: {e}", r.source_id)),
                None => self.log(
                    "screen",
                    &format!(
                        "{} n={} P={} best val macro-F1 {:.4} at epoch {}",
                        r.source_id, r.n, r.p, r.best_val_macro_f1, r.best_epoch
                    ),
                ),
            }
            self.log_timing("screen", &format!("{} {:.3}s", r.source_id, r.wall_time_secs));
        }
        let selected = screening::select_best(&outcome.records).ok().map(|r| r.source_id.clone());
        let file = ScreeningFile {
            config_fingerprint: self.stamp.config_fingerprint.clone(),
            seed: self.stamp.seed,
            records: outcome.records,
            selected,
            global_best_chain: outcome.global_chain,
        };
        write_json(&self.path(SCREENING_RECORDS), &file)?;
        if let Some(id) = &file.selected {
            self.log("screen", &format!("selected {id}"));
        }
        self.log_timing("screen", &format!("total {:.3}s", start.elapsed().as_secs_f64()));
        Ok(file)
    }

    // -- train --------------------------------------------------------------

    /// Fully trains `circuit`, or the screening winner when `None`, and tests it.
    pub fn train(&self, circuit: Option<&str>) -> Result<FinalReport, PipelineError> {
        let start = Instant::now();
        let source_id = match circuit {
            Some(id) => id.to_string(),
            None => {
                let path = self.path(SCREENING_RECORDS);
                if !path.exists() {
                    return Err(PipelineError::MissingInput(format!(
                        "{} not found; run `screen` first or pass --circuit",
                        path.display()
                    )));
                }
                let file: ScreeningFile = read_json(&path)?;
                self.check_stamp("screening records", &file.config_fingerprint);
                screening::select_best(&file.records)?.source_id.clone()
            }
        };
        let circuit = self
            .load_circuit(&source_id)?
            .ok_or_else(|| ScreenError::UnknownCircuitId(source_id.clone()))?;
        let split = self.load_prepared()?;
        self.log(
            "train",
            &format!("training {source_id} for {} epochs", self.config.train.t_full),
        );
        let out = screening::full_train_and_test(
            &circuit,
            &split,
            &self.config.train,
            &self.config.model,
            &self.stamp,
        )?;
        write_text(
            &self.path(CURVES_DIR).join(format!("{source_id}.full.csv")),
            &screening::curves_csv(&out.history),
        )?;
        let final_dir = self.path(FINAL_DIR);
        out.best_checkpoint.save(&final_dir, "best_validation")?;
        out.final_checkpoint.save(&final_dir, "final_epoch")?;
        write_json(&self.path(FINAL_REPORT), &out.report)?;
        let t = &out.report.test;
        self.log(
            "train",
            &format!(
                "test accuracy {:.4}, macro-F1 {:.4}, ROC-AUC {}",
                t.accuracy,
                t.macro_f1,
                t.roc_auc.map_or("n/a".to_string(), |v| format!("{v:.4}"))
            ),
        );
        self.log_timing("train", &format!("{source_id} {:.3}s", start.elapsed().as_secs_f64()));
        Ok(out.report)
    }

    pub fn run_all(&self) -> Result<FinalReport, PipelineError> {
        self.preprocess()?;
        self.filter()?;
        self.screen()?;
        self.train(None)
    }
}

pub fn reason_name(reason: RejectReason) -> String {
    format!("{reason:?}")
}

/// Column names of the prepared split files.
pub fn prepared_schema(num_features: usize) -> CsvSchema {
    CsvSchema {
        feature_columns: (0..num_features).map(|i| format!("f{i}")).collect(),
        label_column: "label".to_string(),
    }
}

/// Writes `d` with header `f0,…,label`. Values use the shortest representation
/// that parses back to the same `f64`.
pub fn write_dataset(path: &Path, d: &Dataset) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let schema = prepared_schema(d.num_features());
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = schema.feature_columns.clone();
    header.push(schema.label_column);
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    let mut record = Vec::with_capacity(d.num_features() + 1);
    for (row, label) in d.rows().zip(d.labels()) {
        record.clear();
        record.extend(row.iter().map(|v| v.to_string()));
        record.push(label.to_string());
        w.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

fn csv_err(path: &Path, e: csv::Error) -> PipelineError {
    PipelineError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, text).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_csv_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let d = Dataset::from_rows(
            vec![vec![0.1 + 0.2, std::f64::consts::PI], vec![-1e-300, 12345.678901234567]],
            vec![1, 0],
        );
        let path = dir.path().join("d.csv");
        write_dataset(&path, &d).unwrap();
        let back = data::load_csv(&path, &prepared_schema(2)).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn exit_codes() {
        let e = PipelineError::Screen(ScreenError::UnknownCircuitId("x".into()));
        assert_eq!(e.exit_code(), 1);
        let e = PipelineError::Screen(ScreenError::CheckpointMismatch("x".into()));
        assert_eq!(e.exit_code(), 2);
        assert_eq!(PipelineError::Data(DataError::Empty).exit_code(), 1);
    }
}
