//! One seeded run per mode, and the Monte Carlo driver around it.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, Mode, SourceKind};
use super::faults::{self, FaultAction, ResolvedFault};
use super::stats::{summarize, SummaryStats};
use crate::classifiers::{self, ClassifierKind};
use crate::dataset::{ClassId, Dataset, LabeledMatrix, Sample, SensorMap};
use crate::error::{Error, Result};
use crate::repair::{EpisodeEvent, EpisodeKind, RepairSession, SelfRepairingClassifier};
use crate::synth::{self, SynthConfig};
use crate::uos::{SelectionTimeline, TimelineRow, UosEngine};

/// Independent random streams of one run. Every mode and classifier sees
/// the same data, faults and replicas for a given run seed.
const FAULT_STREAM: u64 = 1;
const REPLICA_STREAM: u64 = 2;
const UNIT_STREAM: u64 = 3;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn run_seed(base: u64, run_index: usize) -> u64 {
    base ^ run_index as u64
}

/// Where run data comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// A new realization of this profile per run, seeded by the run seed.
    Synthetic(SynthConfig),
    /// One dataset shared by every run.
    Fixed(Arc<Dataset>),
}

impl DataSource {
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        match config.dataset.source {
            SourceKind::Synthetic => Ok(DataSource::Synthetic(config.effective_synth())),
            SourceKind::Dir => {
                let path = config
                    .dataset
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config("dataset.path is required".into()))?;
                Ok(DataSource::Fixed(Arc::new(Dataset::load(path)?)))
            }
        }
    }
}

/// Where replacement readings for a failed sensor slot come from.
#[derive(Debug, Clone)]
enum Replicas {
    Synthetic(SynthConfig),
    Units {
        full: Arc<Dataset>,
        models: Vec<String>,
        /// Units already installed in (or removed from) the array.
        used: Vec<bool>,
        /// `slot_model[slot]`
        slot_model: Vec<String>,
    },
    Unavailable,
}

impl Replicas {
    /// A replacement unit for `slot` and its readings for every test sample.
    fn install<R: Rng + ?Sized>(
        &mut self,
        slot: usize,
        test: &[Sample],
        rng: &mut R,
    ) -> Result<(String, Vec<Vec<f64>>)> {
        match self {
            Replicas::Synthetic(cfg) => {
                let replica = synth::make_replica(cfg, slot, rng)?;
                let values = test
                    .iter()
                    .map(|s| {
                        let class = s.truth.unwrap_or(ClassId(0));
                        vec![replica.respond(cfg, class, s.index, rng)]
                    })
                    .collect();
                let gains: Vec<String> = replica.gains.iter().map(|g| format!("{g:.4}")).collect();
                Ok((format!("replica gains [{}]", gains.join(" ")), values))
            }
            Replicas::Units {
                full,
                models,
                used,
                slot_model,
            } => {
                let model = &slot_model[slot];
                let spare: Vec<usize> = (0..models.len())
                    .filter(|&u| !used[u] && &models[u] == model)
                    .collect();
                let &unit = spare.choose(rng).ok_or_else(|| {
                    Error::InvalidInput(format!("no spare {model} unit left for sensor slot {slot}"))
                })?;
                used[unit] = true;
                let cols = full.sensor_map.features_of(unit)?.to_vec();
                let values = full
                    .test
                    .iter()
                    .map(|s| cols.iter().map(|&c| s.features[c]).collect())
                    .collect();
                Ok((format!("unit {unit} ({model})"), values))
            }
            Replicas::Unavailable => Err(Error::InvalidInput(
                "this dataset carries no replacement units".into(),
            )),
        }
    }
}

/// Training block, test stream and replacement source of one run.
#[derive(Debug, Clone)]
pub struct RunData {
    pub train: LabeledMatrix,
    pub test: Vec<Sample>,
    pub sensor_map: SensorMap,
    pub class_names: Vec<String>,
    /// Dataset unit behind each sensor slot (identity for synthetic data).
    pub slot_units: Vec<usize>,
    replicas: Replicas,
}

impl RunData {
    pub fn prepare(source: &DataSource, config: &ExperimentConfig, seed: u64) -> Result<Self> {
        match source {
            DataSource::Synthetic(profile) => {
                let cfg = SynthConfig {
                    seed,
                    ..profile.clone()
                };
                let d = synth::generate(&cfg)?;
                Ok(Self {
                    slot_units: (0..d.sensor_map.n_sensors()).collect(),
                    train: d.train,
                    test: d.test,
                    sensor_map: d.sensor_map,
                    class_names: d.meta.class_names,
                    replicas: Replicas::Synthetic(cfg),
                })
            }
            DataSource::Fixed(d) => {
                let models = config
                    .units
                    .models
                    .clone()
                    .unwrap_or_else(|| d.meta.unit_models.clone());
                if models.is_empty() {
                    let replicas = match &d.meta.synth {
                        Some(cfg) => Replicas::Synthetic(cfg.clone()),
                        None => Replicas::Unavailable,
                    };
                    return Ok(Self {
                        slot_units: (0..d.sensor_map.n_sensors()).collect(),
                        train: d.train.clone(),
                        test: d.test.clone(),
                        sensor_map: d.sensor_map.clone(),
                        class_names: d.meta.class_names.clone(),
                        replicas,
                    });
                }
                Self::active_array(d, models, config.units.randomize, seed)
            }
        }
    }

    /// One unit per sensor model forms the active array; the other units of
    /// each model are spares.
    fn active_array(d: &Arc<Dataset>, models: Vec<String>, randomize: bool, seed: u64) -> Result<Self> {
        if models.len() != d.sensor_map.n_sensors() {
            return Err(Error::Config(format!(
                "{} unit models given for {} units",
                models.len(),
                d.sensor_map.n_sensors()
            )));
        }
        let mut kinds: Vec<&String> = Vec::new();
        for m in &models {
            if !kinds.contains(&m) {
                kinds.push(m);
            }
        }
        let mut rng = stream_rng(seed, UNIT_STREAM);
        let slot_units: Vec<usize> = kinds
            .iter()
            .map(|k| {
                let units: Vec<usize> = (0..models.len()).filter(|&u| &models[u] == *k).collect();
                if randomize {
                    *units.choose(&mut rng).expect("model has a unit")
                } else {
                    units[0]
                }
            })
            .collect();
        let mut cols = Vec::new();
        let mut groups = Vec::new();
        for &u in &slot_units {
            let fs = d.sensor_map.features_of(u)?;
            groups.push((cols.len()..cols.len() + fs.len()).collect());
            cols.extend_from_slice(fs);
        }
        let train = d.train.select_columns(&cols)?;
        let test = d
            .test
            .iter()
            .map(|s| Sample {
                index: s.index,
                features: cols.iter().map(|&c| s.features[c]).collect(),
                truth: s.truth,
            })
            .collect();
        let mut used = vec![false; models.len()];
        for &u in &slot_units {
            used[u] = true;
        }
        let slot_model = slot_units.iter().map(|&u| models[u].clone()).collect();
        Ok(Self {
            train,
            test,
            sensor_map: SensorMap::from_groups(groups)?,
            class_names: d.meta.class_names.clone(),
            slot_units,
            replicas: Replicas::Units {
                full: Arc::clone(d),
                models,
                used,
                slot_model,
            },
        })
    }
}

/// A completed or pending sensor replacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replacement {
    pub slot: usize,
    pub unit: String,
    /// Sample index at which the repair began.
    pub begun_at: usize,
    /// Samples observed from the start of the repair until it was ready.
    pub ready_after: Option<usize>,
    pub merged_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub run_index: usize,
    pub seed: u64,
    pub mode: Mode,
    pub classifier: ClassifierKind,
    pub sample_indices: Vec<usize>,
    pub predictions: Vec<ClassId>,
    pub truths: Vec<Option<ClassId>>,
    /// Features used for each sample.
    pub selected: Vec<Vec<bool>>,
    pub rate: f64,
    pub sensor_map: SensorMap,
    pub faults: Vec<ResolvedFault>,
    pub replacements: Vec<Replacement>,
    pub episodes: Vec<EpisodeEvent>,
    /// Anomalies that did not stop the run.
    pub flags: Vec<String>,
    pub error: Option<String>,
}

impl RunResult {
    fn failed(run_index: usize, seed: u64, config: &ExperimentConfig, e: &Error) -> Self {
        Self {
            run_index,
            seed,
            mode: config.mode,
            classifier: config.classifier.kind,
            sample_indices: Vec::new(),
            predictions: Vec::new(),
            truths: Vec::new(),
            selected: Vec::new(),
            rate: f64::NAN,
            sensor_map: SensorMap::uniform(0, 1),
            faults: Vec::new(),
            replacements: Vec::new(),
            episodes: Vec::new(),
            flags: Vec::new(),
            error: Some(format!("kind={} message={e}", e.kind())),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.error.is_some()
    }

    pub fn is_flagged(&self) -> bool {
        !self.flags.is_empty()
    }

    pub fn timeline(&self, window: usize) -> SelectionTimeline {
        let rows = self
            .sample_indices
            .iter()
            .zip(&self.selected)
            .zip(&self.predictions)
            .map(|((&sample_index, used), &predicted)| TimelineRow {
                sample_index,
                used: used.clone(),
                predicted,
            })
            .collect();
        SelectionTimeline::new(rows, &self.sensor_map, window)
    }

    /// SHA-256 over everything the run produced.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{}|{}|{}|{}|", self.run_index, self.seed, self.mode, self.classifier));
        for ((i, p), used) in self.sample_indices.iter().zip(&self.predictions).zip(&self.selected) {
            h.update(format!("{i}:{p}:"));
            h.update(used.iter().map(|&u| if u { b'1' } else { b'0' }).collect::<Vec<u8>>());
            h.update(b";");
        }
        h.update(self.rate.to_bits().to_le_bytes());
        for e in &self.episodes {
            h.update(format!("{}|{}|{}|{};", e.kind, e.sample_index, e.sensor, e.detail));
        }
        for f in &self.flags {
            h.update(format!("flag:{f};"));
        }
        if let Some(e) = &self.error {
            h.update(format!("error:{e}"));
        }
        hex::encode(h.finalize())
    }
}

/// Execute one run; errors are recorded in the result, never propagated.
pub fn run_one(config: &ExperimentConfig, source: &DataSource, run_index: usize) -> RunResult {
    let seed = run_seed(config.runs.seed, run_index);
    match try_run(config, source, run_index, seed) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("run {run_index} (seed {seed}) failed: {e}");
            RunResult::failed(run_index, seed, config, &e)
        }
    }
}

fn try_run(config: &ExperimentConfig, source: &DataSource, run_index: usize, seed: u64) -> Result<RunResult> {
    let mut data = RunData::prepare(source, config, seed)?;
    let mut fault_rng = stream_rng(seed, FAULT_STREAM);
    let resolved = faults::resolve(&config.fault_events(), data.sensor_map.n_sensors(), &mut fault_rng)?;
    let ranges = data.train.column_ranges();
    let stream = faults::inject(&data.test, &resolved, &data.sensor_map, &ranges, &mut fault_rng)?;

    let mut result = RunResult {
        run_index,
        seed,
        mode: config.mode,
        classifier: config.classifier.kind,
        sample_indices: stream.iter().map(|s| s.index).collect(),
        predictions: Vec::with_capacity(stream.len()),
        truths: data.test.iter().map(|s| s.truth).collect(),
        selected: Vec::with_capacity(stream.len()),
        rate: 0.0,
        sensor_map: data.sensor_map.clone(),
        faults: resolved.clone(),
        replacements: Vec::new(),
        episodes: Vec::new(),
        flags: Vec::new(),
        error: None,
    };

    match config.mode {
        Mode::Standard => run_standard(config, &data, &stream, &mut result)?,
        Mode::Uos => {
            let mut engine = UosEngine::new(&data.train, config.classifier, config.thresholds, data.sensor_map.clone())?;
            for s in &stream {
                result.predictions.push(engine.classify_and_adapt(s)?);
            }
            result.selected = engine.log().iter().map(|r| r.used.clone()).collect();
        }
        Mode::Sr => run_sr(config, &mut data, &stream, &resolved, seed, &mut result)?,
    }

    let scored: Vec<bool> = result
        .predictions
        .iter()
        .zip(&result.truths)
        .filter_map(|(p, t)| t.map(|t| *p == t))
        .collect();
    result.rate = if scored.is_empty() {
        f64::NAN
    } else {
        scored.iter().filter(|&&c| c).count() as f64 / scored.len() as f64
    };
    Ok(result)
}

fn run_standard(config: &ExperimentConfig, data: &RunData, stream: &[Sample], result: &mut RunResult) -> Result<()> {
    let model = classifiers::fit(&config.classifier, &data.train)?;
    let fingerprint = format!("{model:?}");
    let all = vec![true; data.sensor_map.n_features()];
    for s in stream {
        result.predictions.push(model.predict(&s.features)?);
        result.selected.push(all.clone());
    }
    if format!("{model:?}") != fingerprint {
        result.flags.push("standard model changed during the run".into());
    }
    Ok(())
}

fn run_sr(
    config: &ExperimentConfig,
    data: &mut RunData,
    stream: &[Sample],
    resolved: &[ResolvedFault],
    seed: u64,
    result: &mut RunResult,
) -> Result<()> {
    let engine = UosEngine::new(&data.train, config.classifier, config.thresholds, data.sensor_map.clone())?;
    let mut sr = SelfRepairingClassifier::new(engine);
    let mut replica_rng = stream_rng(seed, REPLICA_STREAM);
    let mut queue: VecDeque<usize> = VecDeque::new();
    // slot → replacement readings, once installed
    let mut installed: Vec<Option<Vec<Vec<f64>>>> = vec![None; data.sensor_map.n_sensors()];

    for (pos, sample) in stream.iter().enumerate() {
        for f in resolved.iter().filter(|f| f.start == pos) {
            let detail = match f.end {
                Some(end) => format!("{} for {} samples", f.kind, end - f.start),
                None => format!("{} permanent", f.kind),
            };
            sr.record_fault(sample.index, f.sensor, detail);
        }
        for f in resolved.iter() {
            if f.is_permanent() && f.action == FaultAction::Replace && f.start + config.detection_latency == pos {
                queue.push_back(f.sensor);
                if sr.session().is_some() {
                    result
                        .flags
                        .push(format!("sensor {} failed during an active repair; replacement queued", f.sensor));
                }
            }
        }
        if sr.session().is_none() {
            if let Some(slot) = queue.pop_front() {
                sr.remove_sensor(slot, sample.index)?;
                let (unit, values) = data.replicas.install(slot, &data.test, &mut replica_rng)?;
                installed[slot] = Some(values);
                sr.begin_repair(RepairSession::new(slot, unit), sample.index)?;
            }
        }

        let mut current = sample.clone();
        for (slot, values) in installed.iter().enumerate() {
            if let Some(values) = values {
                let fs = data.sensor_map.features_of(slot)?;
                for (&f, &v) in fs.iter().zip(&values[pos]) {
                    current.features[f] = v;
                }
            }
        }
        result.predictions.push(sr.observe(&current)?);
        if sr.session().is_some_and(|s| s.ready_after().is_some()) {
            sr.merge(sample.index)?;
        }
    }
    if let Some(s) = sr.session() {
        result.flags.push(format!(
            "repair of sensor {} unfinished at end of stream ({} samples observed)",
            s.removed_sensor,
            s.observed()
        ));
    }
    if !queue.is_empty() {
        result.flags.push(format!("{} queued replacements never started", queue.len()));
    }

    let merged_at = |slot: usize, from: usize| {
        sr.episodes()
            .iter()
            .find(|e| e.kind == EpisodeKind::Merge && e.sensor == slot && e.sample_index >= from)
            .map(|e| e.sample_index)
    };
    for s in sr.history().iter().chain(sr.session()) {
        let begun_at = s.started_at().unwrap_or_default();
        result.replacements.push(Replacement {
            slot: s.removed_sensor,
            unit: s.replacement.clone(),
            begun_at,
            ready_after: s.ready_after(),
            merged_at: merged_at(s.removed_sensor, begun_at),
        });
    }
    result.episodes = sr.episodes().to_vec();
    result.selected = sr.engine().log().iter().map(|r| r.used.clone()).collect();
    Ok(())
}

/// Every run of an experiment with its summary.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub results: Vec<RunResult>,
    pub summary: SummaryStats,
}

/// Fewest successful runs accepted out of `n` (95 %).
pub fn required_successes(n: usize) -> usize {
    (n * 95).div_ceil(100)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let source = DataSource::from_config(config)?;
    run_experiment_with(config, &source)
}

/// As [`run_experiment`] with an already loaded data source.
pub fn run_experiment_with(config: &ExperimentConfig, source: &DataSource) -> Result<ExperimentOutcome> {
    let n = config.runs.n;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.runs.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let mut results: Vec<RunResult> =
        pool.install(|| (0..n).into_par_iter().map(|i| run_one(config, source, i)).collect());
    results.sort_by_key(|r| r.run_index);

    let succeeded = results.iter().filter(|r| !r.is_failed()).count();
    let required = required_successes(n);
    if succeeded < required {
        if let Some(first) = results.iter().find_map(|r| r.error.as_ref()) {
            log::error!("first failure: {first}");
        }
        return Err(Error::TooManyFailedRuns {
            succeeded,
            total: n,
            required,
        });
    }
    let summary = summarize(&results);
    Ok(ExperimentOutcome { results, summary })
}
