//! Self-repair of the online classifier after a sensor failure.
//!
//! The failed sensor is dropped and classification continues on the
//! residual array. Readings of the replacement sensor are quarantined and
//! collected together with the residual model's predictions. Once every
//! reservoir template has been renewed since the replacement (and every
//! class has gathered at least its reservoir capacity of pseudo-labelled
//! readings) the collected columns are merged into the reservoir and the
//! replacement joins the model.

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::dataset::{ClassId, Sample};
use crate::error::{Error, Result};
use crate::uos::{LabelSource, UosEngine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RepairStatus {
    Collecting,
    Ready,
    Merged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub sample_index: usize,
    /// Readings of the replacement sensor's features.
    pub values: Vec<f64>,
    pub label: ClassId,
    pub source: LabelSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairSession {
    pub removed_sensor: usize,
    pub replacement: String,
    pool: Vec<VecDeque<PoolEntry>>,
    /// Per class, reservoir templates inserted since the session began
    /// (saturating at capacity: FIFO order means that many slots are renewed).
    renewed: Vec<usize>,
    /// Pool size required per class before the session can become ready.
    pool_target: Vec<usize>,
    status: RepairStatus,
    observed: usize,
    started_at: Option<usize>,
    ready_after: Option<usize>,
}

impl RepairSession {
    pub fn new(removed_sensor: usize, replacement: impl Into<String>) -> Self {
        Self {
            removed_sensor,
            replacement: replacement.into(),
            pool: Vec::new(),
            renewed: Vec::new(),
            pool_target: Vec::new(),
            status: RepairStatus::Collecting,
            observed: 0,
            started_at: None,
            ready_after: None,
        }
    }

    pub fn status(&self) -> RepairStatus {
        self.status
    }

    pub fn pool(&self, class: ClassId) -> impl Iterator<Item = &PoolEntry> {
        self.pool.get(class.0).into_iter().flatten()
    }

    pub fn pool_sizes(&self) -> Vec<usize> {
        self.pool.iter().map(VecDeque::len).collect()
    }

    /// Samples observed since `begin_repair`.
    pub fn observed(&self) -> usize {
        self.observed
    }

    /// Number of observed samples at which the session became ready.
    pub fn ready_after(&self) -> Option<usize> {
        self.ready_after
    }

    pub fn started_at(&self) -> Option<usize> {
        self.started_at
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeKind {
    Fault,
    Remove,
    BeginRepair,
    Ready,
    Merge,
}

impl fmt::Display for EpisodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EpisodeKind::Fault => "fault",
            EpisodeKind::Remove => "remove",
            EpisodeKind::BeginRepair => "begin_repair",
            EpisodeKind::Ready => "ready",
            EpisodeKind::Merge => "merge",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeEvent {
    pub kind: EpisodeKind,
    pub sample_index: usize,
    pub sensor: usize,
    pub detail: String,
}

/// Writes `event,sample_index,sensor_id,detail`.
pub fn write_episode_csv<W: Write>(mut out: W, events: &[EpisodeEvent]) -> std::io::Result<()> {
    writeln!(out, "event,sample_index,sensor_id,detail")?;
    for e in events {
        let detail = if e.detail.contains([',', '"', '\n']) {
            format!("\"{}\"", e.detail.replace('"', "\"\""))
        } else {
            e.detail.clone()
        };
        writeln!(out, "{},{},{},{}", e.kind, e.sample_index, e.sensor, detail)?;
    }
    Ok(())
}

pub fn save_episode_csv(path: &Path, events: &[EpisodeEvent]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_episode_csv(std::io::BufWriter::new(file), events).map_err(|e| Error::io(path, e))
}

/// An online classifier that can swap failed sensors for replacements.
#[derive(Debug, Clone)]
pub struct SelfRepairingClassifier {
    engine: UosEngine,
    session: Option<RepairSession>,
    history: Vec<RepairSession>,
    episodes: Vec<EpisodeEvent>,
}

impl SelfRepairingClassifier {
    pub fn new(engine: UosEngine) -> Self {
        Self {
            engine,
            session: None,
            history: Vec::new(),
            episodes: Vec::new(),
        }
    }

    pub fn engine(&self) -> &UosEngine {
        &self.engine
    }

    pub fn into_engine(self) -> UosEngine {
        self.engine
    }

    pub fn session(&self) -> Option<&RepairSession> {
        self.session.as_ref()
    }

    /// Merged sessions, oldest first.
    pub fn history(&self) -> &[RepairSession] {
        &self.history
    }

    pub fn episodes(&self) -> &[EpisodeEvent] {
        &self.episodes
    }

    pub fn record_fault(&mut self, sample_index: usize, sensor: usize, detail: impl Into<String>) {
        self.push_event(EpisodeKind::Fault, sample_index, sensor, detail.into());
    }

    fn push_event(&mut self, kind: EpisodeKind, sample_index: usize, sensor: usize, detail: String) {
        self.episodes.push(EpisodeEvent {
            kind,
            sample_index,
            sensor,
            detail,
        });
    }

    pub fn remove_sensor(&mut self, sensor: usize, sample_index: usize) -> Result<()> {
        self.engine.remove_sensor(sensor)?;
        self.push_event(EpisodeKind::Remove, sample_index, sensor, String::new());
        Ok(())
    }

    /// Start collecting readings for the replacement of a removed sensor.
    /// The replacement occupies the removed sensor's feature columns.
    pub fn begin_repair(&mut self, mut session: RepairSession, sample_index: usize) -> Result<()> {
        if self.session.is_some() {
            return Err(Error::RepairInProgress);
        }
        if self.engine.is_sensor_active(session.removed_sensor)? {
            return Err(Error::InvalidInput(format!(
                "sensor {} must be removed before its replacement is calibrated",
                session.removed_sensor
            )));
        }
        let reservoir = self.engine.reservoir();
        let n_classes = reservoir.n_classes();
        session.pool = vec![VecDeque::new(); n_classes];
        session.renewed = vec![0; n_classes];
        session.pool_target = reservoir.capacities().to_vec();
        session.status = RepairStatus::Collecting;
        session.observed = 0;
        session.started_at = Some(sample_index);
        session.ready_after = None;
        let detail = session.replacement.clone();
        let sensor = session.removed_sensor;
        self.session = Some(session);
        self.push_event(EpisodeKind::BeginRepair, sample_index, sensor, detail);
        Ok(())
    }

    /// Classify a sample. While a repair is collecting (or ready but not yet
    /// merged) the replacement's readings are pooled under the prediction.
    pub fn observe(&mut self, sample: &Sample) -> Result<ClassId> {
        let predicted = self.engine.classify_and_adapt(sample)?;
        let Some(session) = self.session.as_mut() else {
            return Ok(predicted);
        };
        let features = self.engine.sensor_map().features_of(session.removed_sensor)?;
        let values: Vec<f64> = features.iter().map(|&f| sample.features[f]).collect();
        let capacity = self.engine.reservoir().capacity(predicted);
        let pool = &mut session.pool[predicted.0];
        pool.push_back(PoolEntry {
            sample_index: sample.index,
            values,
            label: predicted,
            source: LabelSource::Predicted,
        });
        while pool.len() > capacity {
            pool.pop_front();
        }
        session.renewed[predicted.0] = (session.renewed[predicted.0] + 1).min(capacity);
        session.observed += 1;

        if session.status == RepairStatus::Collecting {
            let reservoir = self.engine.reservoir();
            let renewed = (0..reservoir.n_classes())
                .all(|c| session.renewed[c] >= reservoir.capacity(ClassId(c)));
            let pooled = session
                .pool
                .iter()
                .zip(&session.pool_target)
                .all(|(p, &target)| p.len() >= target);
            if renewed && pooled {
                session.status = RepairStatus::Ready;
                session.ready_after = Some(session.observed);
                let sensor = session.removed_sensor;
                let detail = format!("after {} samples", session.observed);
                self.push_event(EpisodeKind::Ready, sample.index, sensor, detail);
            }
        }
        Ok(predicted)
    }

    /// Write the pooled replacement readings into the reservoir, expose the
    /// replacement to the classifier and refresh pre-selection.
    pub fn merge(&mut self, sample_index: usize) -> Result<()> {
        let session = self
            .session
            .as_ref()
            .ok_or(Error::RepairState { expected: "ready" })?;
        if session.status != RepairStatus::Ready {
            return Err(Error::RepairState { expected: "ready" });
        }
        let features = self
            .engine
            .sensor_map()
            .features_of(session.removed_sensor)?
            .to_vec();

        let mut updates = Vec::with_capacity(self.engine.reservoir().total_len());
        for t in self.engine.reservoir().templates() {
            let entry = session.pool[t.label.0]
                .iter()
                .find(|e| e.sample_index == t.sample_index)
                .ok_or(Error::AlignmentGap {
                    sample_index: t.sample_index,
                })?;
            updates.push(entry.values.clone());
        }
        let mut staged = self.engine.clone();
        for (t, values) in staged.reservoir_mut().templates_mut().zip(updates) {
            for (&f, v) in features.iter().zip(values) {
                t.values[f] = v;
            }
        }
        staged.reactivate_and_reselect(&features)?;
        self.engine = staged;

        let mut session = self.session.take().expect("checked above");
        session.status = RepairStatus::Merged;
        let sensor = session.removed_sensor;
        let detail = session.replacement.clone();
        self.history.push(session);
        self.push_event(EpisodeKind::Merge, sample_index, sensor, detail);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{ClassifierKind, ClassifierSpec};
    use crate::dataset::{LabeledMatrix, SensorMap};
    use crate::numerics::SelectionThresholds;

    const CENTERS: [[f64; 3]; 3] = [[10.0, 40.0, 20.0], [20.0, 30.0, 40.0], [30.0, 20.0, 60.0]];

    fn reading(class: usize, i: usize) -> Vec<f64> {
        let d = ((i * 7 + class * 3) % 11) as f64 / 11.0 - 0.5;
        CENTERS[class].iter().map(|c| c + d).collect()
    }

    fn classifier() -> SelfRepairingClassifier {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..4 {
            for c in 0..3 {
                rows.push(reading(c, i));
                labels.push(ClassId(c));
            }
        }
        let train = LabeledMatrix::from_rows(&rows, labels, 3).unwrap();
        let engine = UosEngine::new(
            &train,
            ClassifierSpec::new(ClassifierKind::Lda),
            SelectionThresholds::default(),
            SensorMap::uniform(3, 1),
        )
        .unwrap();
        SelfRepairingClassifier::new(engine)
    }

    fn sample(index: usize, class: usize) -> Sample {
        Sample {
            index,
            features: reading(class, index),
            truth: Some(ClassId(class)),
        }
    }

    #[test]
    fn alternating_stream_becomes_ready_after_one_renewal() {
        let mut sr = classifier();
        sr.remove_sensor(2, 0).unwrap();
        sr.begin_repair(RepairSession::new(2, "replica"), 0).unwrap();
        assert!(matches!(
            sr.begin_repair(RepairSession::new(2, "again"), 0),
            Err(Error::RepairInProgress)
        ));
        for i in 0..12 {
            let s = sample(i, i % 3);
            assert_eq!(sr.observe(&s).unwrap(), ClassId(i % 3));
            let status = sr.session().unwrap().status();
            if i < 11 {
                assert_eq!(status, RepairStatus::Collecting);
                assert!(matches!(sr.merge(i), Err(Error::RepairState { .. })));
            } else {
                assert_eq!(status, RepairStatus::Ready);
            }
        }
        assert_eq!(sr.session().unwrap().ready_after(), Some(12));
        sr.merge(12).unwrap();
        assert!(sr.session().is_none());
        assert_eq!(sr.engine().active(), &[true, true, true]);
        for t in sr.engine().reservoir().templates() {
            assert_eq!(t.values, reading(t.label.0, t.sample_index));
        }
        let kinds: Vec<EpisodeKind> = sr.episodes().iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            vec![EpisodeKind::Remove, EpisodeKind::BeginRepair, EpisodeKind::Ready, EpisodeKind::Merge]
        );
    }

    #[test]
    fn single_class_stream_never_becomes_ready() {
        let mut sr = classifier();
        sr.remove_sensor(0, 0).unwrap();
        sr.begin_repair(RepairSession::new(0, "replica"), 0).unwrap();
        for i in 0..200 {
            sr.observe(&sample(i, 1)).unwrap();
        }
        let s = sr.session().unwrap();
        assert_eq!(s.status(), RepairStatus::Collecting);
        assert_eq!(s.pool_sizes(), vec![0, 4, 0]);
    }

    #[test]
    fn pool_labels_are_predictions() {
        let mut sr = classifier();
        sr.remove_sensor(1, 0).unwrap();
        sr.begin_repair(RepairSession::new(1, "replica"), 0).unwrap();
        for i in 0..30 {
            // truth deliberately wrong: pooled labels must follow predictions
            let mut s = sample(i, i % 3);
            s.truth = Some(ClassId((i + 1) % 3));
            let p = sr.observe(&s).unwrap();
            let pooled = sr.session().unwrap().pool(p).last().unwrap().clone();
            assert_eq!(pooled.label, p);
            assert_eq!(pooled.source, LabelSource::Predicted);
            assert_eq!(pooled.sample_index, i);
        }
    }

    #[test]
    fn repair_requires_removed_sensor() {
        let mut sr = classifier();
        assert!(sr.begin_repair(RepairSession::new(1, "replica"), 0).is_err());
        assert!(matches!(sr.merge(0), Err(Error::RepairState { .. })));
    }

    #[test]
    fn episode_csv_format() {
        let mut buf = Vec::new();
        let events = vec![EpisodeEvent {
            kind: EpisodeKind::BeginRepair,
            sample_index: 200,
            sensor: 3,
            detail: "replica, unit 7".into(),
        }];
        write_episode_csv(&mut buf, &events).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "event,sample_index,sensor_id,detail\nbegin_repair,200,3,\"replica, unit 7\"\n"
        );
    }
}
