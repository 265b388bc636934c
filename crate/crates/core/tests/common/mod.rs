//! Engine invariants shared by the property tests and the acceptance run.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sensorfix::classifiers::{ClassifierKind, ClassifierSpec};
use sensorfix::harness::faults::{inject, resolve};
use sensorfix::harness::{
    run_one, DataSource, ExperimentConfig, FaultAction, FaultDuration, FaultEvent, FaultType, Mode, SchedulePreset,
    SensorChoice,
};
use sensorfix::numerics::SelectionThresholds;
use sensorfix::repair::{EpisodeKind, RepairSession, SelfRepairingClassifier};
use sensorfix::synth::{generate, SynthConfig};
use sensorfix::uos::{LabelSource, UosEngine};
use sensorfix::{ClassId, Dataset, LabeledMatrix, Sample, SensorMap};

pub const KINDS: [ClassifierKind; 3] = [ClassifierKind::Knn, ClassifierKind::Lda, ClassifierKind::Plsda];

pub fn kind_strategy() -> impl Strategy<Value = ClassifierKind> {
    prop::sample::select(KINDS.to_vec())
}

/// The shipped profile with a different realization and drift.
pub fn synth(seed: u64, drift_rate: f64, n_test: usize) -> SynthConfig {
    SynthConfig {
        seed,
        drift_rate,
        n_test,
        ..SynthConfig::default()
    }
}

pub fn engine(data: &Dataset, kind: ClassifierKind) -> UosEngine {
    UosEngine::new(
        &data.train,
        ClassifierSpec::new(kind),
        SelectionThresholds::default(),
        data.sensor_map.clone(),
    )
    .expect("engine builds on the synthetic profile")
}

/// Every class pool keeps its training capacity after each adaptation step.
pub fn reservoir_size_constancy(seed: u64, kind: ClassifierKind, drift_rate: f64) -> Result<(), TestCaseError> {
    let data = generate(&synth(seed, drift_rate, 150)).unwrap();
    let mut e = engine(&data, kind);
    let caps: Vec<usize> = (0..3).map(|c| e.reservoir().capacity(ClassId(c))).collect();
    prop_assert_eq!(&caps, &data.train.class_counts());
    for s in &data.test {
        e.classify_and_adapt(s).unwrap();
        for (c, &cap) in caps.iter().enumerate() {
            prop_assert_eq!(e.reservoir().len(ClassId(c)), cap);
        }
        prop_assert_eq!(e.reservoir().total_len(), caps.iter().sum::<usize>());
    }
    Ok(())
}

/// Ground truth never influences adaptation: scrambled or missing truths
/// give the same predictions and reservoir, and every adapted template
/// carries the engine's own prediction.
pub fn pseudo_label_only(seed: u64, kind: ClassifierKind, scramble: u64) -> Result<(), TestCaseError> {
    let data = generate(&synth(seed, 0.06, 120)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(scramble);
    let scrambled: Vec<Sample> = data
        .test
        .iter()
        .map(|s| Sample {
            truth: if rng.random_bool(0.5) { None } else { Some(ClassId(rng.random_range(0..3))) },
            ..s.clone()
        })
        .collect();

    let mut a = engine(&data, kind);
    let mut b = engine(&data, kind);
    for (x, y) in data.test.iter().zip(&scrambled) {
        prop_assert_eq!(a.classify_and_adapt(x).unwrap(), b.classify_and_adapt(y).unwrap());
    }
    prop_assert_eq!(a.reservoir(), b.reservoir());

    let n_train = data.train.n_rows();
    for t in a.reservoir().templates() {
        match t.source {
            LabelSource::Training => prop_assert!(t.sample_index < n_train),
            LabelSource::Predicted => {
                let rec = a.log().iter().find(|r| r.sample_index == t.sample_index).unwrap();
                prop_assert_eq!(t.label, rec.predicted);
            }
        }
    }
    Ok(())
}

fn sr_config(seed: u64, kind: ClassifierKind, fault: FaultType) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.mode = Mode::Sr;
    c.classifier.kind = kind;
    c.schedule = SchedulePreset::SyntheticPermanent;
    c.fault_type = fault;
    c.runs.seed = seed;
    c.runs.workers = 1;
    c
}

/// The same run executed twice is bit-identical.
pub fn seed_determinism(seed: u64, kind: ClassifierKind, run_index: usize) -> Result<(), TestCaseError> {
    let mut c = sr_config(seed, kind, FaultType::Random);
    c.synth.n_test = 900;
    let source = DataSource::from_config(&c).unwrap();
    let a = run_one(&c, &source, run_index);
    let b = run_one(&c, &source, run_index);
    prop_assert!(a.error.is_none(), "{:?}", a.error);
    prop_assert_eq!(a.digest(), b.digest());
    prop_assert_eq!(&a.predictions, &b.predictions);
    prop_assert_eq!(a.rate.to_bits(), b.rate.to_bits());
    prop_assert_eq!(a, b);
    Ok(())
}

/// Faulted values are exactly zero or stay inside the training range, and
/// nothing outside the faulted sensor and interval changes.
pub fn fault_realism(
    seed: u64,
    n_sensors: usize,
    per_sensor: usize,
    events: Vec<(usize, Option<usize>, bool)>,
) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = n_sensors * per_sensor;
    let n_test = 120;
    let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..p).map(|_| rng.random_range(-5.0..50.0)).collect()).collect();
    let labels = (0..30).map(|i| ClassId(i % 3)).collect();
    let train = LabeledMatrix::from_rows(&rows, labels, 3).unwrap();
    let stream: Vec<Sample> = (0..n_test)
        .map(|t| Sample {
            index: t + 1,
            features: (0..p).map(|_| rng.random_range(-20.0..80.0)).collect(),
            truth: Some(ClassId(t % 3)),
        })
        .collect();
    let map = SensorMap::uniform(n_sensors, per_sensor);
    let events: Vec<FaultEvent> = events
        .into_iter()
        .take(n_sensors)
        .map(|(start, len, zero)| FaultEvent {
            start: start % n_test,
            duration: len.map_or(FaultDuration::Permanent, |l| FaultDuration::Samples(l + 1)),
            sensor: SensorChoice::Random,
            kind: if zero { FaultType::Zero } else { FaultType::Random },
            action: FaultAction::None,
        })
        .collect();
    let faults = resolve(&events, n_sensors, &mut rng).unwrap();
    let ranges = train.column_ranges();
    let out = inject(&stream, &faults, &map, &ranges, &mut rng).unwrap();

    prop_assert_eq!(out.len(), stream.len());
    for (pos, (o, s)) in out.iter().zip(&stream).enumerate() {
        prop_assert_eq!(o.index, s.index);
        prop_assert_eq!(o.truth, s.truth);
        for f in 0..p {
            let sensor = map.sensor_of(f).unwrap();
            match faults.iter().find(|r| r.sensor == sensor && r.active_at(pos)) {
                Some(r) if r.kind == FaultType::Zero => prop_assert_eq!(o.features[f], 0.0),
                Some(_) => {
                    let (lo, hi) = ranges[f];
                    prop_assert!(o.features[f] >= lo && o.features[f] <= hi);
                }
                None => prop_assert_eq!(o.features[f].to_bits(), s.features[f].to_bits()),
            }
        }
    }
    Ok(())
}

/// Under the four-failure schedule at most one sensor is absent at a time,
/// every failure is repaired, and a second concurrent repair is refused.
pub fn sequential_repair_safety(seed: u64, kind: ClassifierKind, zero: bool) -> Result<(), TestCaseError> {
    let fault = if zero { FaultType::Zero } else { FaultType::Random };
    let c = sr_config(seed, kind, fault);
    let source = DataSource::from_config(&c).unwrap();
    let r = run_one(&c, &source, 0);
    prop_assert!(r.error.is_none(), "{:?}", r.error);
    prop_assert!(r.flags.is_empty(), "{:?}", r.flags);

    let mut absent = 0i32;
    let mut removes = 0;
    let mut merges = 0;
    for e in &r.episodes {
        match e.kind {
            EpisodeKind::Remove => {
                absent += 1;
                removes += 1;
            }
            EpisodeKind::Merge => {
                absent -= 1;
                merges += 1;
            }
            _ => {}
        }
        prop_assert!((0..=1).contains(&absent), "{} sensors absent", absent);
    }
    prop_assert_eq!(removes, 4);
    prop_assert_eq!(merges, 4);
    prop_assert_eq!(r.replacements.len(), 4);
    prop_assert!(r.replacements.iter().all(|rep| rep.merged_at.is_some()));

    let data = generate(&synth(seed, 0.06, 10)).unwrap();
    let mut sr = SelfRepairingClassifier::new(engine(&data, kind));
    sr.remove_sensor(0, 1).unwrap();
    sr.remove_sensor(1, 1).unwrap();
    sr.begin_repair(RepairSession::new(0, "a"), 1).unwrap();
    let second = sr.begin_repair(RepairSession::new(1, "b"), 1);
    prop_assert!(matches!(second, Err(sensorfix::Error::RepairInProgress)));
    Ok(())
}
