//! Fault schedules and their injection into a test stream.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Sample, SensorMap};
use crate::error::{Error, Result};

/// Length of temporary faults in the preset schedules.
pub const TEMPORARY_FAULT_LEN: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultType {
    /// Every feature of the sensor reads exactly 0.
    #[default]
    Zero,
    /// Every feature is drawn uniformly from its training-set range.
    Random,
}

impl fmt::Display for FaultType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FaultType::Zero => "zero",
            FaultType::Random => "random",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "DurationRepr", into = "DurationRepr")]
pub enum FaultDuration {
    #[default]
    Permanent,
    Samples(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DurationRepr {
    Samples(u64),
    Text(String),
}

impl TryFrom<DurationRepr> for FaultDuration {
    type Error = String;

    fn try_from(r: DurationRepr) -> std::result::Result<Self, String> {
        match r {
            DurationRepr::Samples(0) => Err("fault duration must be positive".into()),
            DurationRepr::Samples(n) => Ok(FaultDuration::Samples(n as usize)),
            DurationRepr::Text(t) if t == "permanent" => Ok(FaultDuration::Permanent),
            DurationRepr::Text(t) => t
                .parse::<u64>()
                .map_err(|_| format!("expected \"permanent\" or a sample count, got {t:?}"))
                .and_then(|n| FaultDuration::try_from(DurationRepr::Samples(n))),
        }
    }
}

impl From<FaultDuration> for DurationRepr {
    fn from(d: FaultDuration) -> Self {
        match d {
            FaultDuration::Permanent => DurationRepr::Text("permanent".into()),
            FaultDuration::Samples(n) => DurationRepr::Samples(n as u64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "SensorRepr", into = "SensorRepr")]
pub enum SensorChoice {
    /// Resolved per run, distinct from every other sensor of the schedule.
    #[default]
    Random,
    Fixed(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SensorRepr {
    Id(u64),
    Text(String),
}

impl TryFrom<SensorRepr> for SensorChoice {
    type Error = String;

    fn try_from(r: SensorRepr) -> std::result::Result<Self, String> {
        match r {
            SensorRepr::Id(n) => Ok(SensorChoice::Fixed(n as usize)),
            SensorRepr::Text(t) if t == "random" => Ok(SensorChoice::Random),
            SensorRepr::Text(t) => t
                .parse()
                .map(SensorChoice::Fixed)
                .map_err(|_| format!("expected \"random\" or a sensor id, got {t:?}")),
        }
    }
}

impl From<SensorChoice> for SensorRepr {
    fn from(s: SensorChoice) -> Self {
        match s {
            SensorChoice::Random => SensorRepr::Text("random".into()),
            SensorChoice::Fixed(n) => SensorRepr::Id(n as u64),
        }
    }
}

/// What the harness does once a permanent fault is detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultAction {
    /// Leave the faulty sensor in place and rely on feature selection.
    None,
    /// Remove the sensor and calibrate a replacement (sr mode only).
    #[default]
    Replace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultEvent {
    /// Position in the test stream (0-based) of the first faulty sample.
    pub start: usize,
    #[serde(default)]
    pub duration: FaultDuration,
    #[serde(default)]
    pub sensor: SensorChoice,
    #[serde(rename = "type", default)]
    pub kind: FaultType,
    #[serde(default)]
    pub action: FaultAction,
}

/// Built-in schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulePreset {
    #[default]
    None,
    /// Four permanent faults on distinct sensors at 200, 400, 600 and 800.
    SyntheticPermanent,
    /// The same starts with 15-sample faults.
    SyntheticTemporary,
    /// One permanent fault after 10 samples.
    ExperimentalPermanent,
    ExperimentalTemporary,
}

impl SchedulePreset {
    pub fn events(self, kind: FaultType) -> Vec<FaultEvent> {
        let (starts, duration): (&[usize], _) = match self {
            SchedulePreset::None => return Vec::new(),
            SchedulePreset::SyntheticPermanent => (&[200, 400, 600, 800], FaultDuration::Permanent),
            SchedulePreset::SyntheticTemporary => (
                &[200, 400, 600, 800],
                FaultDuration::Samples(TEMPORARY_FAULT_LEN),
            ),
            SchedulePreset::ExperimentalPermanent => (&[10], FaultDuration::Permanent),
            SchedulePreset::ExperimentalTemporary => {
                (&[10], FaultDuration::Samples(TEMPORARY_FAULT_LEN))
            }
        };
        starts
            .iter()
            .map(|&start| FaultEvent {
                start,
                duration,
                sensor: SensorChoice::Random,
                kind,
                action: FaultAction::Replace,
            })
            .collect()
    }
}

/// A fault with its sensor fixed for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedFault {
    pub start: usize,
    /// First position after the fault; `None` for permanent faults.
    pub end: Option<usize>,
    pub sensor: usize,
    pub kind: FaultType,
    pub action: FaultAction,
}

impl ResolvedFault {
    pub fn is_permanent(&self) -> bool {
        self.end.is_none()
    }

    pub fn active_at(&self, position: usize) -> bool {
        position >= self.start && self.end.is_none_or(|e| position < e)
    }
}

/// Fix the sensor of every event. Random choices are drawn without
/// replacement from the sensors no other event names.
pub fn resolve<R: Rng + ?Sized>(
    events: &[FaultEvent],
    n_sensors: usize,
    rng: &mut R,
) -> Result<Vec<ResolvedFault>> {
    let mut free: Vec<usize> = (0..n_sensors)
        .filter(|s| !events.iter().any(|e| e.sensor == SensorChoice::Fixed(*s)))
        .collect();
    events
        .iter()
        .map(|e| {
            let sensor = match e.sensor {
                SensorChoice::Fixed(s) if s < n_sensors => s,
                SensorChoice::Fixed(s) => return Err(Error::UnknownSensor(s)),
                SensorChoice::Random => {
                    if free.is_empty() {
                        return Err(Error::Config(format!(
                            "schedule names more random sensors than the {n_sensors} available"
                        )));
                    }
                    free.swap_remove(rng.random_range(0..free.len()))
                }
            };
            let end = match e.duration {
                FaultDuration::Permanent => None,
                FaultDuration::Samples(n) => Some(e.start + n),
            };
            Ok(ResolvedFault {
                start: e.start,
                end,
                sensor,
                kind: e.kind,
                action: e.action,
            })
        })
        .collect()
}

/// Apply `faults` to a copy of `stream`. `ranges[f]` is the training
/// `(min, max)` of feature `f`, used by random-response faults.
pub fn inject<R: Rng + ?Sized>(
    stream: &[Sample],
    faults: &[ResolvedFault],
    sensor_map: &SensorMap,
    ranges: &[(f64, f64)],
    rng: &mut R,
) -> Result<Vec<Sample>> {
    for f in faults {
        if f.start >= stream.len() {
            return Err(Error::ScheduleOutOfRange {
                start: f.start,
                len: stream.len(),
            });
        }
        sensor_map.features_of(f.sensor)?;
    }
    if ranges.len() != sensor_map.n_features() {
        return Err(Error::DimensionMismatch {
            expected: sensor_map.n_features(),
            got: ranges.len(),
        });
    }
    let mut out = stream.to_vec();
    for (pos, sample) in out.iter_mut().enumerate() {
        for f in faults.iter().filter(|f| f.active_at(pos)) {
            for &feature in sensor_map.features_of(f.sensor)? {
                sample.features[feature] = match f.kind {
                    FaultType::Zero => 0.0,
                    FaultType::Random => {
                        let (lo, hi) = ranges[feature];
                        if hi > lo {
                            rng.random_range(lo..=hi)
                        } else {
                            lo
                        }
                    }
                };
            }
        }
    }
    Ok(out)
}
