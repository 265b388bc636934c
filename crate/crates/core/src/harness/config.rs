//! Experiment configuration: a TOML document plus `dotted.key=value`
//! overrides that take precedence over the file.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::faults::{FaultEvent, FaultType, SchedulePreset};
use crate::classifiers::ClassifierSpec;
use crate::error::{Error, Result};
use crate::numerics::SelectionThresholds;
use crate::synth::SynthConfig;
use crate::uos::DEFAULT_RATE_WINDOW;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Train once on every feature, never adapt.
    Standard,
    /// Online selection and self-adaptation, faulty sensors stay in place.
    #[default]
    Uos,
    /// As `Uos`, plus replacement of permanently failed sensors.
    Sr,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Standard => "standard",
            Mode::Uos => "uos",
            Mode::Sr => "sr",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    /// A fresh synthetic realization per run.
    #[default]
    Synthetic,
    /// A dataset directory written by `gen-synth` or `ingest`.
    Dir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// The calibrated drifting profile.
    #[default]
    Default,
    /// The same profile without drift.
    Stationary,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: SourceKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub profile: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunsConfig {
    pub n: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

impl Default for RunsConfig {
    fn default() -> Self {
        Self {
            n: 100,
            seed: 0,
            workers: 0,
        }
    }
}

/// How the active array is drawn from a dataset with several units per
/// sensor model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnitsConfig {
    /// Pick the active unit of each model at random per run (otherwise the
    /// first unit of each model).
    pub randomize: bool,
    /// Overrides the unit-to-model table stored with the dataset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<String>>,
}

impl Default for UnitsConfig {
    fn default() -> Self {
        Self {
            randomize: true,
            models: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Trailing window of the per-sensor selection rates.
    pub window: usize,
    /// Runs whose selection timeline is always exported (flagged runs are
    /// exported regardless).
    pub timeline_runs: Vec<usize>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_RATE_WINDOW,
            timeline_runs: vec![0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Preset schedule, used when `faults` is empty.
    pub schedule: SchedulePreset,
    /// Fault type of the preset schedule.
    pub fault_type: FaultType,
    /// Samples between a fault's start and its detection.
    pub detection_latency: usize,
    pub dataset: DatasetConfig,
    pub synth: SynthConfig,
    pub classifier: ClassifierSpec,
    pub thresholds: SelectionThresholds,
    pub runs: RunsConfig,
    pub units: UnitsConfig,
    pub report: ReportConfig,
    pub faults: Vec<FaultEvent>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        apply_overrides(&mut table, overrides)?;
        let config: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs.n == 0 {
            return Err(Error::Config("runs.n must be at least 1".into()));
        }
        if self.dataset.source == SourceKind::Dir && self.dataset.path.is_none() {
            return Err(Error::Config("dataset.path is required for source = \"dir\"".into()));
        }
        if self.report.window == 0 {
            return Err(Error::Config("report.window must be positive".into()));
        }
        self.classifier.validate()?;
        self.thresholds.validate()?;
        self.effective_synth().validate()
    }

    /// Synthetic profile after applying `dataset.profile`.
    pub fn effective_synth(&self) -> SynthConfig {
        let mut s = self.synth.clone();
        if self.dataset.profile == Profile::Stationary {
            s.drift_rate = 0.0;
        }
        s
    }

    /// Explicit fault list, or the preset schedule when none is given.
    pub fn fault_events(&self) -> Vec<FaultEvent> {
        if self.faults.is_empty() {
            self.schedule.events(self.fault_type)
        } else {
            self.faults.clone()
        }
    }

    /// `none`, the shared fault type of every event, or `mixed`.
    pub fn fault_label(&self) -> String {
        let events = self.fault_events();
        match events.first() {
            None => "none".into(),
            Some(first) if events.iter().all(|e| e.kind == first.kind) => first.kind.to_string(),
            Some(_) => "mixed".into(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config always serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// First 12 hex digits of [`hash`](Self::hash), used in file names.
    pub fn short_hash(&self) -> String {
        self.hash()[..12].to_string()
    }
}

/// Apply `key=value` assignments. Keys are dotted paths; numeric segments
/// index arrays (`faults.0.start=150`). Values are parsed as TOML and fall
/// back to a bare string.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
        let value = parse_value(raw.trim());
        let path: Vec<&str> = key.trim().split('.').collect();
        if path.iter().any(|s| s.is_empty()) {
            return Err(Error::Config(format!("bad override key {key:?}")));
        }
        set_path(table, &path, value).map_err(|e| Error::Config(format!("{key}: {e}")))?;
    }
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, path: &[&str], value: toml::Value) -> std::result::Result<(), String> {
    let (head, rest) = path.split_first().expect("non-empty path");
    if rest.is_empty() {
        table.insert(head.to_string(), value);
        return Ok(());
    }
    let entry = table
        .entry(head.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    set_in_value(entry, rest, value)
}

fn set_in_value(node: &mut toml::Value, path: &[&str], value: toml::Value) -> std::result::Result<(), String> {
    match node {
        toml::Value::Table(t) => set_path(t, path, value),
        toml::Value::Array(items) => {
            let (head, rest) = path.split_first().expect("non-empty path");
            let i: usize = head
                .parse()
                .map_err(|_| format!("{head:?} is not an array index"))?;
            if i > items.len() {
                return Err(format!("index {i} skips past the end of a {}-element array", items.len()));
            }
            if i == items.len() {
                items.push(if rest.is_empty() {
                    toml::Value::Boolean(false)
                } else {
                    toml::Value::Table(toml::Table::new())
                });
            }
            if rest.is_empty() {
                items[i] = value;
                Ok(())
            } else {
                set_in_value(&mut items[i], rest, value)
            }
        }
        _ => Err("cannot descend into a scalar".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::ClassifierKind;
    use crate::harness::faults::{FaultDuration, SensorChoice};

    #[test]
    fn defaults_and_partial_tables() {
        let c = ExperimentConfig::from_toml("", &[]).unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.runs.n, 100);
        let c = ExperimentConfig::from_toml(
            "mode = \"sr\"\n[classifier]\nkind = \"knn\"\n[thresholds]\nt1 = 0.01\n",
            &[],
        )
        .unwrap();
        assert_eq!(c.mode, Mode::Sr);
        assert_eq!(c.classifier.kind, ClassifierKind::Knn);
        assert_eq!(c.classifier.k, 3);
        assert_eq!(c.thresholds.min_probability, 0.01);
        assert_eq!(c.thresholds.max_distance_ratio, 0.1);
    }

    #[test]
    fn overrides_take_precedence() {
        let text = "mode = \"uos\"\n[runs]\nn = 5\n[[faults]]\nstart = 3\n";
        let c = ExperimentConfig::from_toml(
            text,
            &[
                "mode=sr".into(),
                "runs.n=7".into(),
                "synth.drift_rate=0".into(),
                "faults.0.duration=15".into(),
                "faults.1.start=9".into(),
                "faults.1.sensor=2".into(),
                "classifier.kind=plsda".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.mode, Mode::Sr);
        assert_eq!(c.runs.n, 7);
        assert_eq!(c.synth.drift_rate, 0.0);
        assert_eq!(c.faults[0].duration, FaultDuration::Samples(15));
        assert_eq!(c.faults[1].sensor, SensorChoice::Fixed(2));
        assert_eq!(c.classifier.kind, ClassifierKind::Plsda);
    }

    #[test]
    fn bad_configs_rejected() {
        assert!(ExperimentConfig::from_toml("bogus = 1", &[]).is_err());
        assert!(ExperimentConfig::from_toml("", &["runs.n=0".into()]).is_err());
        assert!(ExperimentConfig::from_toml("", &["runs".into()]).is_err());
        assert!(ExperimentConfig::from_toml("[dataset]\nsource = \"dir\"\n", &[]).is_err());
        assert!(ExperimentConfig::from_toml("", &["mode.x=1".into()]).is_err());
    }

    #[test]
    fn canonical_form_round_trips_and_hash_tracks_content() {
        let c = ExperimentConfig::from_toml(
            "schedule = \"synthetic-permanent\"\nfault_type = \"random\"",
            &[],
        )
        .unwrap();
        let back = ExperimentConfig::from_toml(&c.to_toml(), &[]).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        let other = ExperimentConfig::from_toml(&c.to_toml(), &["runs.seed=1".into()]).unwrap();
        assert_ne!(other.hash(), c.hash());
        assert_eq!(c.fault_label(), "random");
        assert_eq!(c.fault_events().len(), 4);
        assert_eq!(ExperimentConfig::default().fault_label(), "none");
    }
}
