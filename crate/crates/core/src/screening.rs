//! Corpus filtering, short-train screening, selection and the final full run.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::derive_seed;
use crate::data::{Dataset, SplitSet};
use crate::hybrid::{HybridConfig, HybridModel, HybridParams, ModelConfig, ModelError};
use crate::metrics::{self, EvalReport, MetricsError, DEFAULT_THRESHOLD};
use crate::neural::{self, AdamConfig, AdamState};
use crate::qasm::{self, default_trainable_set, CircuitIR, GateKind};
use crate::sim;

#[derive(Debug, Error)]
pub enum ScreenError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("no screened circuit has a usable score")]
    NoCandidates,
    #[error("unknown circuit id `{0}`")]
    UnknownCircuitId(String),
    #[error("checkpoint {0} does not match the circuit or configuration")]
    CheckpointMismatch(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScreenError + '_ {
    move |source| ScreenError::Io {
        path: path.to_path_buf(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Filtering

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub p_max: usize,
    pub trainable_set: BTreeSet<GateKind>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            n_min: 3,
            n_max: 10,
            p_max: 30,
            trainable_set: default_trainable_set(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RejectReason {
    ParseFailure,
    QubitBudget,
    NoTrainableGate,
    ParamBudget,
    ExecutionFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub source_id: String,
    pub accepted: bool,
    pub reject_reason: Option<RejectReason>,
    /// Qubit count, when the file parsed.
    pub n: Option<usize>,
    /// Trainable parameter count, when it was computed.
    #[serde(rename = "P")]
    pub p: Option<usize>,
    pub detail: Option<String>,
}

impl FilterReport {
    fn reject(source_id: &str, reason: RejectReason, n: Option<usize>, p: Option<usize>, detail: Option<String>) -> Self {
        FilterReport {
            source_id: source_id.to_string(),
            accepted: false,
            reject_reason: Some(reason),
            n,
            p,
            detail,
        }
    }
}

/// Expectation of Z on qubit 0 of the bare circuit at θ = 0. Fails when the
/// simulation errors or the value is non-finite or outside [−1, 1].
pub fn validate_execution(circuit: &CircuitIR) -> Result<f64, String> {
    let theta = vec![0.0; circuit.trainable_param_count];
    let state = sim::run(circuit, &theta).map_err(|e| e.to_string())?;
    let f = state.expect_z(0);
    if !f.is_finite() {
        return Err(format!("expectation is not finite ({f})"));
    }
    if f.abs() > 1.0 + 1e-9 {
        return Err(format!("expectation {f} outside [-1, 1]"));
    }
    Ok(f)
}

/// Applies parse → strip → qubit budget → mark trainable → P = 0 → P ≤ p_max →
/// execution, stopping at the first failure.
pub fn filter_circuit(source_id: &str, text: &str, cfg: &FilterConfig) -> (FilterReport, Option<CircuitIR>) {
    let parsed = match qasm::parse_qasm(source_id, text) {
        Ok(c) => c,
        Err(e) => {
            return (
                FilterReport::reject(source_id, RejectReason::ParseFailure, None, None, Some(e.to_string())),
                None,
            )
        }
    };
    let stripped = parsed.strip_nonunitary();
    let n = stripped.num_qubits;
    if n < cfg.n_min || n > cfg.n_max {
        return (
            FilterReport::reject(source_id, RejectReason::QubitBudget, Some(n), None, None),
            None,
        );
    }
    let marked = stripped.mark_trainable(&cfg.trainable_set);
    let p = marked.trainable_param_count;
    if p == 0 {
        return (
            FilterReport::reject(source_id, RejectReason::NoTrainableGate, Some(n), Some(p), None),
            None,
        );
    }
    if p > cfg.p_max {
        return (
            FilterReport::reject(source_id, RejectReason::ParamBudget, Some(n), Some(p), None),
            None,
        );
    }
    if let Err(e) = validate_execution(&marked) {
        return (
            FilterReport::reject(source_id, RejectReason::ExecutionFailure, Some(n), Some(p), Some(e)),
            None,
        );
    }
    let report = FilterReport {
        source_id: source_id.to_string(),
        accepted: true,
        reject_reason: None,
        n: Some(n),
        p: Some(p),
        detail: None,
    };
    (report, Some(marked))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    /// Accepted circuits keyed by qubit count, each group in source-id order.
    pub accepted: BTreeMap<usize, Vec<CircuitIR>>,
    /// One report per corpus file, in source-id order.
    pub reports: Vec<FilterReport>,
}

impl FilterOutcome {
    /// Accepted circuits, grouped by ascending qubit count.
    pub fn circuits(&self) -> impl Iterator<Item = &CircuitIR> {
        self.accepted.values().flatten()
    }
}

/// Filters in-memory sources `(source_id, text)`.
pub fn filter_sources(sources: &[(String, String)], cfg: &FilterConfig, workers: usize) -> FilterOutcome {
    let results: Vec<(FilterReport, Option<CircuitIR>)> = with_pool(workers, || {
        sources
            .par_iter()
            .map(|(id, text)| filter_circuit(id, text, cfg))
            .collect()
    });
    collect_filter(results)
}

fn collect_filter(mut results: Vec<(FilterReport, Option<CircuitIR>)>) -> FilterOutcome {
    results.sort_by(|a, b| a.0.source_id.cmp(&b.0.source_id));
    let mut accepted: BTreeMap<usize, Vec<CircuitIR>> = BTreeMap::new();
    let mut reports = Vec::with_capacity(results.len());
    for (report, circuit) in results {
        if let Some(c) = circuit {
            accepted.entry(c.num_qubits).or_default().push(c);
        }
        reports.push(report);
    }
    FilterOutcome { accepted, reports }
}

/// Filters every `.qasm` file under `dir`. Only an unreadable directory is an
/// error; unreadable or malformed files become `ParseFailure` reports.
pub fn filter_circuits(dir: &Path, cfg: &FilterConfig, workers: usize) -> Result<FilterOutcome, ScreenError> {
    let entries = qasm::scan_corpus(dir).map_err(io_err(dir))?;
    let results = with_pool(workers, || {
        entries
            .par_iter()
            .map(|e| match std::fs::read_to_string(&e.path) {
                Ok(text) => filter_circuit(&e.source_id, &text, cfg),
                Err(err) => (
                    FilterReport::reject(
                        &e.source_id,
                        RejectReason::ParseFailure,
                        None,
                        None,
                        Some(err.to_string()),
                    ),
                    None,
                ),
            })
            .collect()
    });
    Ok(collect_filter(results))
}

pub(crate) fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

// ---------------------------------------------------------------------------
// Training

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub t_short: usize,
    pub t_full: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Which weights the final test uses.
    pub test_model: TestedModel,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            t_short: 5,
            t_full: 20,
            batch_size: 32,
            lr: 0.01,
            test_model: TestedModel::BestValidation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestedModel {
    BestValidation,
    FinalEpoch,
}

/// Identifies the run that produced an artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStamp {
    pub config_fingerprint: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub loss: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Metrics after `epoch` passes over the training set (epoch 0 is the
/// untrained model).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train: SplitMetrics,
    pub val: SplitMetrics,
}

/// Probabilities and mean BCE loss over `data`.
pub fn predict(model: &HybridModel, params: &HybridParams, data: &Dataset) -> Result<(Vec<f64>, f64), ModelError> {
    let logits: Vec<f64> = (0..data.len())
        .into_par_iter()
        .map(|i| model.logit(params, data.row(i)))
        .collect::<Result<_, _>>()?;
    let loss = logits
        .iter()
        .zip(data.labels())
        .map(|(&z, &y)| neural::bce_with_logits(z, y).0)
        .sum::<f64>()
        / data.len().max(1) as f64;
    Ok((logits.into_iter().map(neural::sigmoid).collect(), loss))
}

pub fn evaluate_split(model: &HybridModel, params: &HybridParams, data: &Dataset) -> Result<SplitMetrics, ScreenError> {
    let (probs, loss) = predict(model, params, data)?;
    let counts = metrics::confusion(&probs, data.labels(), DEFAULT_THRESHOLD)?;
    Ok(SplitMetrics {
        loss,
        accuracy: counts.accuracy(),
        macro_f1: metrics::macro_f1(&counts)?,
    })
}

/// Validation macro-F1 at the default threshold.
pub fn validation_macro_f1(model: &HybridModel, params: &HybridParams, val: &Dataset) -> Result<f64, ScreenError> {
    Ok(evaluate_split(model, params, val)?.macro_f1)
}

/// Mean gradient of the BCE loss over `batch` rows, in the flat layout.
fn batch_gradient(
    model: &HybridModel,
    params: &HybridParams,
    data: &Dataset,
    batch: &[usize],
) -> Result<Vec<f64>, ModelError> {
    let per_sample: Vec<Vec<f64>> = batch
        .par_iter()
        .map(|&i| {
            let (_, cache) = model.forward(params, data.row(i))?;
            Ok(model.backward(params, &cache, data.labels()[i])?.to_flat())
        })
        .collect::<Result<_, ModelError>>()?;
    let mut sum = vec![0.0; model.num_flat_params()];
    for g in &per_sample {
        for (s, v) in sum.iter_mut().zip(g) {
            *s += v;
        }
    }
    let scale = 1.0 / batch.len() as f64;
    sum.iter_mut().for_each(|s| *s *= scale);
    Ok(sum)
}

pub struct TrainOutcome {
    pub history: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
    pub best_params: HybridParams,
    pub final_params: HybridParams,
}

/// Mini-batch Adam for `epochs` epochs. After every epoch (and once before
/// training) both splits are evaluated; `on_improve` fires whenever validation
/// macro-F1 beats the best seen so far, or equals it at a lower validation loss.
pub fn train_model(
    model: &HybridModel,
    mut params: HybridParams,
    split: &SplitSet,
    epochs: usize,
    train_cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    mut on_improve: impl FnMut(usize, f64, &HybridParams) -> Result<(), ScreenError>,
) -> Result<TrainOutcome, ScreenError> {
    let num_theta = model.num_theta();
    let mut flat = params.to_flat();
    let mut adam = AdamState::new(
        flat.len(),
        AdamConfig {
            lr: train_cfg.lr,
            ..AdamConfig::default()
        },
    );
    let mut history = Vec::with_capacity(epochs + 1);
    let mut best: Option<(usize, f64, f64, HybridParams)> = None;
    let mut order: Vec<usize> = (0..split.train.len()).collect();
    for epoch in 0..=epochs {
        if epoch > 0 {
            order.shuffle(rng);
            for batch in order.chunks(train_cfg.batch_size.max(1)) {
                let grad = batch_gradient(model, &params, &split.train, batch)?;
                neural::adam_step(&mut flat, &grad, &mut adam).map_err(ModelError::from)?;
                params = HybridParams::from_flat(model.config(), num_theta, &flat)?;
            }
        }
        let m = EpochMetrics {
            epoch,
            train: evaluate_split(model, &params, &split.train)?,
            val: evaluate_split(model, &params, &split.val)?,
        };
        history.push(m);
        // equal macro-F1 (common on small validation sets) is decided by loss
        let improved = best
            .as_ref()
            .is_none_or(|b| m.val.macro_f1 > b.1 || (m.val.macro_f1 == b.1 && m.val.loss < b.2));
        if improved {
            on_improve(epoch, m.val.macro_f1, &params)?;
            best = Some((epoch, m.val.macro_f1, m.val.loss, params.clone()));
        }
    }
    let (best_epoch, best_val_macro_f1, _, best_params) = best.expect("epoch 0 always evaluated");
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_val_macro_f1,
        best_params,
        final_params: params,
    })
}

// ---------------------------------------------------------------------------
// Checkpoints

pub const PARAM_LAYOUT: &str = "pre_nn[0].weights(row-major out x in), pre_nn[0].biases, pre_nn[1].weights, pre_nn[1].biases, theta, alpha, post_nn[0].weights, post_nn[0].biases, post_nn[1].weights, post_nn[1].biases";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub source_id: String,
    pub stamp: RunStamp,
    pub epoch: usize,
    pub val_macro_f1: f64,
    pub num_theta: usize,
    pub model: HybridConfig,
    pub params: HybridParams,
}

/// On-disk manifest; parameters live in the sidecar `params_file` as a flat JSON array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub source_id: String,
    pub config_fingerprint: String,
    pub seed: u64,
    pub epoch: usize,
    pub val_macro_f1: f64,
    pub num_qubits: usize,
    pub num_theta: usize,
    pub model: HybridConfig,
    pub num_params: usize,
    pub param_layout: String,
    pub params_file: String,
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ScreenError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|source| ScreenError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ScreenError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| ScreenError::Json {
        path: path.to_path_buf(),
        source,
    })
}

impl Checkpoint {
    /// Writes `<dir>/<name>.json` and `<dir>/<name>.params.json`.
    pub fn save(&self, dir: &Path, name: &str) -> Result<PathBuf, ScreenError> {
        let params_file = format!("{name}.params.json");
        let flat = self.params.to_flat();
        let manifest = CheckpointManifest {
            source_id: self.source_id.clone(),
            config_fingerprint: self.stamp.config_fingerprint.clone(),
            seed: self.stamp.seed,
            epoch: self.epoch,
            val_macro_f1: self.val_macro_f1,
            num_qubits: self.model.qubit_width,
            num_theta: self.num_theta,
            model: self.model.clone(),
            num_params: flat.len(),
            param_layout: PARAM_LAYOUT.to_string(),
            params_file: params_file.clone(),
        };
        write_json(&dir.join(&params_file), &flat)?;
        let path = dir.join(format!("{name}.json"));
        write_json(&path, &manifest)?;
        Ok(path)
    }

    pub fn load(manifest_path: &Path) -> Result<Self, ScreenError> {
        let manifest: CheckpointManifest = read_json(manifest_path)?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let flat: Vec<f64> = read_json(&dir.join(&manifest.params_file))?;
        let params = HybridParams::from_flat(&manifest.model, manifest.num_theta, &flat)?;
        Ok(Checkpoint {
            source_id: manifest.source_id,
            stamp: RunStamp {
                config_fingerprint: manifest.config_fingerprint,
                seed: manifest.seed,
            },
            epoch: manifest.epoch,
            val_macro_f1: manifest.val_macro_f1,
            num_theta: manifest.num_theta,
            model: manifest.model,
            params,
        })
    }

    /// Recomputes validation macro-F1 with the stored weights.
    pub fn evaluate(&self, circuit: &CircuitIR, val: &Dataset) -> Result<f64, ScreenError> {
        if circuit.source_id != self.source_id || circuit.trainable_param_count != self.num_theta {
            return Err(ScreenError::CheckpointMismatch(self.source_id.clone()));
        }
        let model = HybridModel::new(self.model.clone(), circuit)?;
        validation_macro_f1(&model, &self.params, val)
    }
}

/// Total order used for selection: higher score, then fewer parameters, then
/// the lexicographically smaller id. `Greater` means `a` ranks above `b`.
pub fn rank_cmp(a: (f64, usize, &str), b: (f64, usize, &str)) -> Ordering {
    a.0.total_cmp(&b.0)
        .then(b.1.cmp(&a.1))
        .then(b.2.cmp(a.2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalBestEntry {
    pub source_id: String,
    pub epoch: usize,
    pub val_macro_f1: f64,
}

#[derive(Default)]
struct StoreState {
    global: Option<(f64, usize, String)>,
    improvements: Vec<(GlobalBestEntry, usize)>,
}

/// Serialized checkpoint writer shared by screening workers. Keeps each
/// circuit's best checkpoint and the global best across circuits.
pub struct CheckpointStore {
    dir: Option<PathBuf>,
    state: Mutex<StoreState>,
}

pub const GLOBAL_BEST: &str = "global_best";

impl CheckpointStore {
    pub fn new(dir: Option<PathBuf>) -> Self {
        CheckpointStore {
            dir,
            state: Mutex::new(StoreState::default()),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Records an improvement of one circuit's own best; also replaces the
    /// global best when this checkpoint ranks above it.
    pub fn improved(&self, ckpt: &Checkpoint) -> Result<(), ScreenError> {
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(dir) = &self.dir {
            ckpt.save(dir, &ckpt.source_id)?;
        }
        let entry = GlobalBestEntry {
            source_id: ckpt.source_id.clone(),
            epoch: ckpt.epoch,
            val_macro_f1: ckpt.val_macro_f1,
        };
        state.improvements.push((entry, ckpt.num_theta));
        let candidate = (ckpt.val_macro_f1, ckpt.num_theta, ckpt.source_id.clone());
        let better = state.global.as_ref().is_none_or(|g| {
            rank_cmp(
                (candidate.0, candidate.1, &candidate.2),
                (g.0, g.1, &g.2),
            ) == Ordering::Greater
        });
        if better {
            if let Some(dir) = &self.dir {
                ckpt.save(dir, GLOBAL_BEST)?;
            }
            state.global = Some(candidate);
        }
        Ok(())
    }

    /// Successive global-best updates as a sequential run over `order` would
    /// have made them. Arrival order under parallel workers is not stable, so
    /// the chain is replayed from every recorded improvement instead.
    pub fn global_chain(&self, order: &[&str]) -> Vec<GlobalBestEntry> {
        let state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        let mut chain: Vec<GlobalBestEntry> = Vec::new();
        let mut holder: Option<(f64, usize, &str)> = None;
        for id in order {
            let mut events: Vec<&(GlobalBestEntry, usize)> =
                state.improvements.iter().filter(|(e, _)| e.source_id == *id).collect();
            events.sort_by_key(|(e, _)| e.epoch);
            for (e, p) in events {
                let cand = (e.val_macro_f1, *p, e.source_id.as_str());
                if holder.is_none_or(|h| rank_cmp(cand, h) == Ordering::Greater) {
                    chain.push(e.clone());
                    holder = Some(cand);
                }
            }
        }
        chain
    }
}

// ---------------------------------------------------------------------------
// Screening

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningRecord {
    pub source_id: String,
    pub n: usize,
    #[serde(rename = "P")]
    pub p: usize,
    pub best_val_macro_f1: f64,
    pub best_epoch: usize,
    pub seed: u64,
    /// Set when training failed; such records score 0 and are never selected.
    pub error: Option<String>,
    /// Kept out of serialized records so they stay reproducible.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

pub struct ShortTrainResult {
    pub record: ScreeningRecord,
    pub history: Vec<EpochMetrics>,
}

pub fn circuit_seed(global_seed: u64, source_id: &str) -> u64 {
    derive_seed(global_seed, &format!("screen/{source_id}"))
}

/// Trains a fresh model around `circuit` for `t_short` epochs.
pub fn short_train(
    circuit: &CircuitIR,
    split: &SplitSet,
    train_cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    stamp: &RunStamp,
    store: &CheckpointStore,
) -> ShortTrainResult {
    let start = Instant::now();
    let seed = circuit_seed(stamp.seed, &circuit.source_id);
    let mut record = ScreeningRecord {
        source_id: circuit.source_id.clone(),
        n: circuit.num_qubits,
        p: circuit.trainable_param_count,
        best_val_macro_f1: 0.0,
        best_epoch: 0,
        seed,
        error: None,
        wall_time_secs: 0.0,
    };
    let result = (|| -> Result<TrainOutcome, ScreenError> {
        let cfg = HybridConfig::new(model_cfg, split.train.num_features(), circuit.num_qubits);
        let model = HybridModel::new(cfg.clone(), circuit)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = HybridParams::init(&cfg, circuit, &mut rng);
        train_model(&model, params, split, train_cfg.t_short, train_cfg, &mut rng, |epoch, f1, p| {
            store.improved(&Checkpoint {
                source_id: circuit.source_id.clone(),
                stamp: stamp.clone(),
                epoch,
                val_macro_f1: f1,
                num_theta: circuit.trainable_param_count,
                model: cfg.clone(),
                params: p.clone(),
            })
        })
    })();
    let history = match result {
        Ok(out) => {
            record.best_val_macro_f1 = out.best_val_macro_f1;
            record.best_epoch = out.best_epoch;
            out.history
        }
        Err(e) => {
            record.error = Some(e.to_string());
            Vec::new()
        }
    };
    record.wall_time_secs = start.elapsed().as_secs_f64();
    ShortTrainResult { record, history }
}

fn record_rank(r: &ScreeningRecord) -> (f64, usize, &str) {
    (r.best_val_macro_f1, r.p, &r.source_id)
}

/// Sorts best-first by the selection order.
pub fn sort_records(records: &mut [ScreeningRecord]) {
    records.sort_by(|a, b| rank_cmp(record_rank(b), record_rank(a)));
}

/// Argmax of validation macro-F1, ties to fewer parameters then smaller id.
pub fn select_best(records: &[ScreeningRecord]) -> Result<&ScreeningRecord, ScreenError> {
    records
        .iter()
        .filter(|r| r.error.is_none() && r.best_val_macro_f1.is_finite())
        .max_by(|a, b| rank_cmp(record_rank(a), record_rank(b)))
        .ok_or(ScreenError::NoCandidates)
}

pub struct ScreeningOutcome {
    /// Sorted best-first.
    pub records: Vec<ScreeningRecord>,
    pub histories: BTreeMap<String, Vec<EpochMetrics>>,
    /// Global-best replacements in circuit order.
    pub global_chain: Vec<GlobalBestEntry>,
}

/// Short-trains every circuit on a pool of `workers` threads. Each circuit's
/// seed depends only on the global seed and its id, so results do not depend
/// on scheduling.
pub fn screen(
    circuits: &[CircuitIR],
    split: &SplitSet,
    train_cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    stamp: &RunStamp,
    store: &CheckpointStore,
    workers: usize,
) -> ScreeningOutcome {
    let results: Vec<ShortTrainResult> = with_pool(workers, || {
        circuits
            .par_iter()
            .map(|c| short_train(c, split, train_cfg, model_cfg, stamp, store))
            .collect()
    });
    let mut histories = BTreeMap::new();
    let mut records = Vec::with_capacity(results.len());
    for r in results {
        histories.insert(r.record.source_id.clone(), r.history);
        records.push(r.record);
    }
    sort_records(&mut records);
    let order: Vec<&str> = circuits.iter().map(|c| c.source_id.as_str()).collect();
    ScreeningOutcome {
        records,
        histories,
        global_chain: store.global_chain(&order),
    }
}

// ---------------------------------------------------------------------------
// Final run

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub config_fingerprint: String,
    pub seed: u64,
    pub source_id: String,
    pub num_qubits: usize,
    pub num_theta: usize,
    /// True when the residual skip connection was removed.
    pub ablated: bool,
    pub tested_model: TestedModel,
    pub tested_epoch: usize,
    pub best_val_epoch: usize,
    pub best_val_macro_f1: f64,
    pub epochs: usize,
    pub test: EvalReport,
}

pub struct FullTrainOutcome {
    pub report: FinalReport,
    pub history: Vec<EpochMetrics>,
    pub best_checkpoint: Checkpoint,
    pub final_checkpoint: Checkpoint,
}

pub fn full_seed(global_seed: u64, source_id: &str) -> u64 {
    derive_seed(global_seed, &format!("full/{source_id}"))
}

/// Re-trains `circuit` from a fresh initialization for `t_full` epochs and
/// evaluates on the test split.
pub fn full_train_and_test(
    circuit: &CircuitIR,
    split: &SplitSet,
    train_cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    stamp: &RunStamp,
) -> Result<FullTrainOutcome, ScreenError> {
    let cfg = HybridConfig::new(model_cfg, split.train.num_features(), circuit.num_qubits);
    let model = HybridModel::new(cfg.clone(), circuit)?;
    let mut rng = ChaCha8Rng::seed_from_u64(full_seed(stamp.seed, &circuit.source_id));
    let params = HybridParams::init(&cfg, circuit, &mut rng);
    let out = train_model(&model, params, split, train_cfg.t_full, train_cfg, &mut rng, |_, _, _| Ok(()))?;

    let checkpoint = |epoch: usize, f1: f64, params: &HybridParams| Checkpoint {
        source_id: circuit.source_id.clone(),
        stamp: stamp.clone(),
        epoch,
        val_macro_f1: f1,
        num_theta: circuit.trainable_param_count,
        model: cfg.clone(),
        params: params.clone(),
    };
    let last = out.history.last().expect("epoch 0 always evaluated");
    let best_checkpoint = checkpoint(out.best_epoch, out.best_val_macro_f1, &out.best_params);
    let final_checkpoint = checkpoint(last.epoch, last.val.macro_f1, &out.final_params);

    let (tested, tested_epoch) = match train_cfg.test_model {
        TestedModel::BestValidation => (&out.best_params, out.best_epoch),
        TestedModel::FinalEpoch => (&out.final_params, last.epoch),
    };
    let (probs, _) = predict(&model, tested, &split.test)?;
    let test = EvalReport::compute(&probs, split.test.labels(), DEFAULT_THRESHOLD)?;
    let report = FinalReport {
        config_fingerprint: stamp.config_fingerprint.clone(),
        seed: stamp.seed,
        source_id: circuit.source_id.clone(),
        num_qubits: circuit.num_qubits,
        num_theta: circuit.trainable_param_count,
        ablated: !model_cfg.skip_enabled,
        tested_model: train_cfg.test_model,
        tested_epoch,
        best_val_epoch: out.best_epoch,
        best_val_macro_f1: out.best_val_macro_f1,
        epochs: train_cfg.t_full,
        test,
    };
    Ok(FullTrainOutcome {
        report,
        history: out.history,
        best_checkpoint,
        final_checkpoint,
    })
}

/// Per-epoch curve rows: `epoch,split,loss,accuracy,macro_f1`.
pub fn curves_csv(history: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,split,loss,accuracy,macro_f1\n");
    for m in history {
        for (name, s) in [("train", &m.train), ("val", &m.val)] {
            out.push_str(&format!("{},{},{},{},{}\n", m.epoch, name, s.loss, s.accuracy, s.macro_f1));
        }
    }
    out
}
