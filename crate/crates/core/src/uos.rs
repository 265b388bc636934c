//! Unsupervised online selection of features.
//!
//! For every incoming sample the engine evaluates each pre-selected feature
//! against the per-class statistics of the template reservoir, keeps the
//! features that assign the sample unambiguously to one class, rebuilds the
//! core classifier on the reservoir restricted to those features, predicts,
//! and finally swaps the sample (with its predicted label) for the oldest
//! template of the predicted class.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use crate::classifiers::{self, ClassifierKind, ClassifierSpec, TrainedModel};
use crate::dataset::{ClassId, LabeledMatrix, Sample, SensorMap};
use crate::error::{Error, Result};
use crate::numerics::{self, ClassStats, FeatureVerdict, SelectionThresholds};

pub const DEFAULT_RATE_WINDOW: usize = 30;

/// Where a template's label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    /// Ground truth from the training set.
    Training,
    /// The engine's own prediction during the test.
    Predicted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub sample_index: usize,
    /// Monotone insertion counter; smaller is older.
    pub order: u64,
    /// Full-width feature vector. Columns outside the active view hold NaN.
    pub values: Vec<f64>,
    pub label: ClassId,
    pub source: LabelSource,
}

/// Per-class FIFO template pools with capacities frozen at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Reservoir {
    pools: Vec<VecDeque<Template>>,
    capacity: Vec<usize>,
    width: usize,
    next_order: u64,
}

impl Reservoir {
    /// One pool per class holding every training row of that class, in
    /// dataset order.
    pub fn from_training(data: &LabeledMatrix) -> Self {
        let mut pools = vec![VecDeque::new(); data.n_classes()];
        for (i, (row, &label)) in data.rows().zip(data.labels()).enumerate() {
            pools[label.0].push_back(Template {
                sample_index: i,
                order: i as u64,
                values: row.to_vec(),
                label,
                source: LabelSource::Training,
            });
        }
        let capacity = pools.iter().map(VecDeque::len).collect();
        Self {
            pools,
            capacity,
            width: data.n_cols(),
            next_order: data.n_rows() as u64,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_classes(&self) -> usize {
        self.pools.len()
    }

    pub fn capacity(&self, class: ClassId) -> usize {
        self.capacity[class.0]
    }

    pub fn capacities(&self) -> &[usize] {
        &self.capacity
    }

    pub fn len(&self, class: ClassId) -> usize {
        self.pools[class.0].len()
    }

    pub fn total_len(&self) -> usize {
        self.pools.iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total_len() == 0
    }

    pub fn templates(&self) -> impl Iterator<Item = &Template> {
        self.pools.iter().flatten()
    }

    pub fn class_templates(&self, class: ClassId) -> impl Iterator<Item = &Template> {
        self.pools[class.0].iter()
    }

    pub(crate) fn templates_mut(&mut self) -> impl Iterator<Item = &mut Template> {
        self.pools.iter_mut().flatten()
    }

    /// Order value the next inserted template will receive.
    pub fn next_order(&self) -> u64 {
        self.next_order
    }

    /// Evict the oldest template of `label` and append `values` in its place.
    /// Returns the evicted template.
    pub fn replace_oldest(
        &mut self,
        label: ClassId,
        sample_index: usize,
        values: Vec<f64>,
        source: LabelSource,
    ) -> Result<Template> {
        if values.len() != self.width {
            return Err(Error::DimensionMismatch {
                expected: self.width,
                got: values.len(),
            });
        }
        let pool = self
            .pools
            .get_mut(label.0)
            .ok_or_else(|| Error::InvalidInput(format!("unknown class {label}")))?;
        let evicted = pool
            .pop_front()
            .ok_or_else(|| Error::InvalidInput(format!("class {label} has no templates")))?;
        pool.push_back(Template {
            sample_index,
            order: self.next_order,
            values,
            label,
            source,
        });
        self.next_order += 1;
        Ok(evicted)
    }

    pub fn class_stats(&self, class: ClassId, col: usize) -> Option<ClassStats> {
        let values: Vec<f64> = self.pools[class.0].iter().map(|t| t.values[col]).collect();
        ClassStats::from_values(class, &values)
    }

    /// Reservoir as a labelled matrix over `cols`.
    pub fn matrix(&self, cols: &[usize]) -> Result<LabeledMatrix> {
        let mut data = Vec::with_capacity(self.total_len() * cols.len());
        let mut labels = Vec::with_capacity(self.total_len());
        for t in self.templates() {
            data.extend(cols.iter().map(|&c| t.values[c]));
            labels.push(t.label);
        }
        LabeledMatrix::from_flat(data, cols.len(), labels, self.n_classes())
    }
}

/// What happened to one classified sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    pub sample_index: usize,
    /// Verdicts for the features that were evaluated (pre-selected and active).
    pub verdicts: Vec<FeatureVerdict>,
    /// Full-width mask of the features the classifier was built on.
    pub used: Vec<bool>,
    /// No feature passed selection; every candidate was used.
    pub fallback: bool,
    /// The configured classifier could not be fitted; k-NN was used.
    pub classifier_fallback: bool,
    pub predicted: ClassId,
}

#[derive(Debug, Clone)]
pub struct UosEngine {
    reservoir: Reservoir,
    preselected: Vec<bool>,
    active: Vec<bool>,
    spec: ClassifierSpec,
    thresholds: SelectionThresholds,
    sensor_map: SensorMap,
    log: Vec<SelectionRecord>,
}

impl UosEngine {
    pub fn new(
        training: &LabeledMatrix,
        spec: ClassifierSpec,
        thresholds: SelectionThresholds,
        sensor_map: SensorMap,
    ) -> Result<Self> {
        spec.validate()?;
        thresholds.validate()?;
        if sensor_map.n_features() != training.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: sensor_map.n_features(),
                got: training.n_cols(),
            });
        }
        let preselected = numerics::preselect_features(training)?;
        if !preselected.iter().any(|&p| p) {
            return Err(Error::EmptyPreselection);
        }
        Ok(Self {
            reservoir: Reservoir::from_training(training),
            preselected,
            active: vec![true; training.n_cols()],
            spec,
            thresholds,
            sensor_map,
            log: Vec::new(),
        })
    }

    pub fn reservoir(&self) -> &Reservoir {
        &self.reservoir
    }

    pub fn preselected(&self) -> &[bool] {
        &self.preselected
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn sensor_map(&self) -> &SensorMap {
        &self.sensor_map
    }

    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    pub fn log(&self) -> &[SelectionRecord] {
        &self.log
    }

    pub fn width(&self) -> usize {
        self.reservoir.width()
    }

    /// Pre-selected features that are currently visible to the classifier.
    pub fn candidates(&self) -> Vec<usize> {
        (0..self.width())
            .filter(|&f| self.preselected[f] && self.active[f])
            .collect()
    }

    /// Verdicts of every candidate feature for the given feature vector.
    pub fn verdicts(&self, features: &[f64]) -> Vec<FeatureVerdict> {
        let classes: Vec<ClassId> = (0..self.reservoir.n_classes())
            .map(ClassId)
            .filter(|&c| self.reservoir.len(c) > 0)
            .collect();
        self.candidates()
            .into_iter()
            .map(|f| {
                let stats: Vec<ClassStats> = classes
                    .iter()
                    .filter_map(|&c| self.reservoir.class_stats(c, f))
                    .collect();
                numerics::feature_verdict(f, features[f], &stats, &self.thresholds)
            })
            .collect()
    }

    /// Classify one sample and adapt the reservoir with the predicted label.
    pub fn classify_and_adapt(&mut self, sample: &Sample) -> Result<ClassId> {
        if sample.features.len() != self.width() {
            return Err(Error::DimensionMismatch {
                expected: self.width(),
                got: sample.features.len(),
            });
        }
        let candidates = self.candidates();
        if candidates.is_empty() {
            return Err(Error::EmptyPreselection);
        }
        let verdicts = self.verdicts(&sample.features);
        let mut selected: Vec<usize> = verdicts
            .iter()
            .filter(|v| v.selected)
            .map(|v| v.feature)
            .collect();
        let fallback = selected.is_empty();
        if fallback {
            selected = candidates;
        }

        let train = self.reservoir.matrix(&selected)?;
        let x: Vec<f64> = selected.iter().map(|&f| sample.features[f]).collect();
        let (model, classifier_fallback) = self.fit_with_retry(&train)?;
        let predicted = model.predict(&x)?;

        let values = sample
            .features
            .iter()
            .zip(&self.active)
            .map(|(&v, &a)| if a { v } else { f64::NAN })
            .collect();
        self.reservoir
            .replace_oldest(predicted, sample.index, values, LabelSource::Predicted)?;

        let mut used = vec![false; self.width()];
        for &f in &selected {
            used[f] = true;
        }
        self.log.push(SelectionRecord {
            sample_index: sample.index,
            verdicts,
            used,
            fallback,
            classifier_fallback,
            predicted,
        });
        Ok(predicted)
    }

    fn fit_with_retry(&self, train: &LabeledMatrix) -> Result<(TrainedModel, bool)> {
        match classifiers::fit(&self.spec, train) {
            Err(Error::SingularCovariance) => {
                let retry = ClassifierSpec {
                    ridge: self.spec.ridge * 10.0,
                    ..self.spec
                };
                match classifiers::fit(&retry, train) {
                    Err(Error::SingularCovariance) => {
                        log::debug!("singular covariance after retry; using k-NN for this sample");
                        let knn = ClassifierSpec {
                            kind: ClassifierKind::Knn,
                            ..self.spec
                        };
                        Ok((classifiers::fit(&knn, train)?, true))
                    }
                    other => other.map(|m| (m, false)),
                }
            }
            other => other.map(|m| (m, false)),
        }
    }

    /// Drop every feature of `sensor` from the model, the reservoir and the
    /// view of future samples.
    pub fn remove_sensor(&mut self, sensor: usize) -> Result<()> {
        let features = self.sensor_map.features_of(sensor)?.to_vec();
        let others_active = (0..self.sensor_map.n_sensors())
            .filter(|&s| s != sensor)
            .any(|s| {
                self.sensor_map
                    .features_of(s)
                    .map(|fs| fs.iter().any(|&f| self.active[f]))
                    .unwrap_or(false)
            });
        if !others_active {
            return Err(Error::LastSensor(sensor));
        }
        for &f in &features {
            self.active[f] = false;
            self.preselected[f] = false;
        }
        for t in self.reservoir.templates_mut() {
            for &f in &features {
                t.values[f] = f64::NAN;
            }
        }
        Ok(())
    }

    pub fn is_sensor_active(&self, sensor: usize) -> Result<bool> {
        Ok(self
            .sensor_map
            .features_of(sensor)?
            .iter()
            .any(|&f| self.active[f]))
    }

    pub(crate) fn reservoir_mut(&mut self) -> &mut Reservoir {
        &mut self.reservoir
    }

    /// Make `features` visible again and recompute pre-selection over every
    /// active feature from the current reservoir.
    pub(crate) fn reactivate_and_reselect(&mut self, features: &[usize]) -> Result<()> {
        let mut active = self.active.clone();
        for &f in features {
            active[f] = true;
        }
        let cols: Vec<usize> = (0..self.width()).filter(|&f| active[f]).collect();
        let reservoir = self.reservoir.matrix(&cols)?;
        let kept = numerics::preselect_columns(&reservoir, &cols)?;
        if kept.is_empty() {
            return Err(Error::EmptyPreselection);
        }
        self.active = active;
        self.preselected = vec![false; self.width()];
        for f in kept {
            self.preselected[f] = true;
        }
        Ok(())
    }

    pub fn selection_timeline(&self, window: usize) -> Result<SelectionTimeline> {
        if self.log.is_empty() {
            return Err(Error::InvalidInput("no sample has been classified yet".into()));
        }
        let records: Vec<TimelineRow> = self
            .log
            .iter()
            .map(|r| TimelineRow {
                sample_index: r.sample_index,
                used: r.used.clone(),
                predicted: r.predicted,
            })
            .collect();
        Ok(SelectionTimeline::new(records, &self.sensor_map, window))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimelineRow {
    pub sample_index: usize,
    pub used: Vec<bool>,
    pub predicted: ClassId,
}

/// Which features were used for every classified sample, with per-sensor
/// trailing-window selection rates.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTimeline {
    pub rows: Vec<TimelineRow>,
    /// `sensor_rates[sensor][t]`: mean selection over the sensor's features
    /// and the last `window` samples up to and including `t`.
    pub sensor_rates: Vec<Vec<f64>>,
    pub window: usize,
}

impl SelectionTimeline {
    pub fn new(rows: Vec<TimelineRow>, sensor_map: &SensorMap, window: usize) -> Self {
        let window = window.max(1);
        let per_sample: Vec<Vec<f64>> = (0..sensor_map.n_sensors())
            .map(|s| {
                let fs = sensor_map.features_of(s).unwrap_or(&[]);
                rows.iter()
                    .map(|r| {
                        fs.iter().filter(|&&f| r.used[f]).count() as f64 / fs.len().max(1) as f64
                    })
                    .collect()
            })
            .collect();
        let sensor_rates = per_sample
            .iter()
            .map(|series| {
                let mut out = Vec::with_capacity(series.len());
                let mut sum = 0.0;
                for (t, v) in series.iter().enumerate() {
                    sum += v;
                    if t >= window {
                        sum -= series[t - window];
                    }
                    out.push(sum / (t + 1).min(window) as f64);
                }
                out
            })
            .collect();
        Self {
            rows,
            sensor_rates,
            window,
        }
    }

    pub fn matrix(&self) -> Vec<Vec<bool>> {
        self.rows.iter().map(|r| r.used.clone()).collect()
    }

    /// Mean per-sample selection fraction of `sensor` over `range` of rows.
    pub fn mean_rate(&self, sensor_map: &SensorMap, sensor: usize, range: std::ops::Range<usize>) -> f64 {
        let fs = sensor_map.features_of(sensor).unwrap_or(&[]);
        let rows = &self.rows[range.start.min(self.rows.len())..range.end.min(self.rows.len())];
        if rows.is_empty() || fs.is_empty() {
            return 0.0;
        }
        let hits: usize = rows
            .iter()
            .map(|r| fs.iter().filter(|&&f| r.used[f]).count())
            .sum();
        hits as f64 / (rows.len() * fs.len()) as f64
    }

    /// `sample_index,feature_0,...,feature_{p-1},predicted,truth` with 0/1 booleans.
    pub fn write_csv<W: Write>(&self, mut out: W, truths: &[Option<ClassId>]) -> std::io::Result<()> {
        let width = self.rows.first().map(|r| r.used.len()).unwrap_or(0);
        let mut header = String::from("sample_index");
        for f in 0..width {
            header.push_str(&format!(",feature_{f}"));
        }
        header.push_str(",predicted,truth");
        writeln!(out, "{header}")?;
        for (i, r) in self.rows.iter().enumerate() {
            let mut line = r.sample_index.to_string();
            for &u in &r.used {
                line.push_str(if u { ",1" } else { ",0" });
            }
            let truth = truths
                .get(i)
                .copied()
                .flatten()
                .map(|c| c.to_string())
                .unwrap_or_default();
            line.push_str(&format!(",{},{}", r.predicted, truth));
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, truths: &[Option<ClassId>]) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file), truths)
            .map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn training() -> LabeledMatrix {
        // two sensors, three classes; feature 2 is a constant, useless column
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..6 {
            let d = (i as f64 - 2.5) * 0.4;
            for c in 0..3 {
                rows.push(vec![10.0 * (c + 1) as f64 + d, 40.0 - 10.0 * c as f64 - d, 7.0]);
                labels.push(ClassId(c));
            }
        }
        LabeledMatrix::from_rows(&rows, labels, 3).unwrap()
    }

    fn engine(kind: ClassifierKind) -> UosEngine {
        let map = SensorMap::from_groups(vec![vec![0], vec![1, 2]]).unwrap();
        UosEngine::new(&training(), ClassifierSpec::new(kind), SelectionThresholds::default(), map)
            .unwrap()
    }

    #[test]
    fn init_fills_reservoir_and_preselects() {
        let e = engine(ClassifierKind::Lda);
        assert_eq!(e.reservoir().capacities(), &[6, 6, 6]);
        assert_eq!(e.preselected(), &[true, true, false]);
        let first: Vec<usize> = e
            .reservoir()
            .class_templates(ClassId(1))
            .map(|t| t.sample_index)
            .collect();
        assert_eq!(first, vec![1, 4, 7, 10, 13, 16]);
    }

    #[test]
    fn empty_preselection_fails() {
        let rows = vec![vec![1.0], vec![1.1], vec![1.0], vec![1.1]];
        let labels = vec![ClassId(0), ClassId(0), ClassId(1), ClassId(1)];
        let data = LabeledMatrix::from_rows(&rows, labels, 2).unwrap();
        let r = UosEngine::new(
            &data,
            ClassifierSpec::new(ClassifierKind::Knn),
            SelectionThresholds::default(),
            SensorMap::uniform(1, 1),
        );
        assert!(matches!(r, Err(Error::EmptyPreselection)));
    }

    #[test]
    fn template_sample_replaces_oldest_of_its_class() {
        for kind in [ClassifierKind::Knn, ClassifierKind::Lda, ClassifierKind::Plsda] {
            let mut e = engine(kind);
            let tmpl = e.reservoir().class_templates(ClassId(0)).nth(3).unwrap().clone();
            let sample = Sample {
                index: 100,
                features: tmpl.values.clone(),
                truth: Some(ClassId(0)),
            };
            assert_eq!(e.classify_and_adapt(&sample).unwrap(), ClassId(0));
            let pool: Vec<usize> = e
                .reservoir()
                .class_templates(ClassId(0))
                .map(|t| t.sample_index)
                .collect();
            assert_eq!(pool, vec![3, 6, 9, 12, 15, 100]);
            assert_eq!(e.reservoir().total_len(), 18);
            assert_eq!(e.log().len(), 1);
        }
    }

    #[test]
    fn zero_response_feature_is_not_selected() {
        let mut e = engine(ClassifierKind::Lda);
        let sample = Sample {
            index: 0,
            features: vec![0.0, 30.0, 7.0],
            truth: None,
        };
        let verdicts = e.verdicts(&sample.features);
        assert!(!verdicts.iter().find(|v| v.feature == 0).unwrap().selected);
        assert_eq!(e.classify_and_adapt(&sample).unwrap(), ClassId(1));
        assert_eq!(e.log()[0].used, vec![false, true, false]);
    }

    #[test]
    fn fallback_uses_every_candidate() {
        let mut e = engine(ClassifierKind::Knn);
        // midway between classes on both sensors: no verdict passes
        let sample = Sample {
            index: 0,
            features: vec![15.0, 35.0, 7.0],
            truth: None,
        };
        e.classify_and_adapt(&sample).unwrap();
        let rec = &e.log()[0];
        assert!(rec.fallback);
        assert_eq!(rec.used, vec![true, true, false]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut e = engine(ClassifierKind::Knn);
        let s = Sample {
            index: 0,
            features: vec![1.0],
            truth: None,
        };
        assert!(matches!(e.classify_and_adapt(&s), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn removing_sensor_hides_features() {
        let mut e = engine(ClassifierKind::Lda);
        e.remove_sensor(1).unwrap();
        assert_eq!(e.candidates(), vec![0]);
        assert!(e.reservoir().templates().all(|t| t.values[1].is_nan() && t.values[2].is_nan()));
        assert!(matches!(e.remove_sensor(0), Err(Error::LastSensor(0))));
        let s = Sample {
            index: 0,
            features: vec![20.0, -1e6, 0.0],
            truth: None,
        };
        assert_eq!(e.classify_and_adapt(&s).unwrap(), ClassId(1));
    }

    #[test]
    fn window_rates() {
        let map = SensorMap::uniform(1, 2);
        let rows = (0..4)
            .map(|i| TimelineRow {
                sample_index: i,
                used: vec![i % 2 == 0, true],
                predicted: ClassId(0),
            })
            .collect();
        let tl = SelectionTimeline::new(rows, &map, 2);
        assert_eq!(tl.sensor_rates[0], vec![1.0, 0.75, 0.75, 0.75]);
        assert_eq!(tl.mean_rate(&map, 0, 0..4), 0.75);
        let mut buf = Vec::new();
        tl.write_csv(&mut buf, &[Some(ClassId(0)); 4]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("sample_index,feature_0,feature_1,predicted,truth\n0,1,1,0,0\n"));
    }
}
