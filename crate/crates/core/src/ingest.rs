//! Reader for the public MOx gas-sensor drift dataset.
//!
//! Each batch file holds one measurement per line in sparse
//! `attribute:value` form: `<gas>;<concentration> 1:<v1> 2:<v2> ... 128:<v128>`.
//! The 128 features are eight descriptors for each of sixteen sensors
//! (sensor `s` owns features `8s..8s+8`, zero-based). The sensors are four
//! units of each of four sensor models.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassId, Dataset, DatasetKind, DatasetMeta, LabeledMatrix, Sample, SensorMap};
use crate::error::{Error, Result};

pub const N_FEATURES: usize = 128;
pub const FEATURES_PER_SENSOR: usize = 8;
pub const N_UNITS: usize = N_FEATURES / FEATURES_PER_SENSOR;
const CONCENTRATION_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub gas: u32,
    pub concentration: f64,
    pub features: Vec<f64>,
    pub source: PathBuf,
    pub line: usize,
}

/// Lines that were skipped in permissive mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedLine {
    pub path: PathBuf,
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseOutcome {
    pub records: Vec<RawRecord>,
    pub skipped: Vec<SkippedLine>,
}

/// Batch number embedded in a file name (`batch7.dat` → 7).
fn batch_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .take_while(char::is_ascii_digit)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

/// Parse batch files in ascending batch order. Malformed lines are fatal
/// unless `permissive`, in which case they are reported and skipped.
pub fn parse_files(paths: &[PathBuf], permissive: bool) -> Result<ParseOutcome> {
    if paths.is_empty() {
        log::warn!("no dataset files given");
        return Ok(ParseOutcome::default());
    }
    let mut ordered: Vec<&PathBuf> = paths.iter().collect();
    ordered.sort_by_key(|p| (batch_number(p).unwrap_or(u64::MAX), (*p).clone()));

    let mut out = ParseOutcome::default();
    for path in ordered {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match parse_line(line, path, i + 1) {
                Ok(r) => out.records.push(r),
                Err(e) if permissive => {
                    log::warn!("skipping {e}");
                    out.skipped.push(SkippedLine {
                        path: path.clone(),
                        line: i + 1,
                        reason: e.to_string(),
                    });
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

pub fn parse_line(line: &str, path: &Path, line_no: usize) -> Result<RawRecord> {
    let malformed = |reason: String| Error::MalformedLine {
        path: path.to_path_buf(),
        line: line_no,
        reason,
    };
    let mut tokens = line.split_whitespace();
    let head = tokens.next().ok_or_else(|| malformed("empty line".into()))?;
    let (gas, conc) = head
        .split_once(';')
        .ok_or_else(|| malformed(format!("expected <gas>;<concentration>, got {head:?}")))?;
    let gas: u32 = gas
        .parse()
        .map_err(|_| malformed(format!("bad gas id {gas:?}")))?;
    let concentration: f64 = conc
        .parse()
        .map_err(|_| malformed(format!("bad concentration {conc:?}")))?;

    let mut features = vec![f64::NAN; N_FEATURES];
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| malformed(format!("expected idx:value, got {tok:?}")))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| malformed(format!("bad feature index {idx:?}")))?;
        if !(1..=N_FEATURES).contains(&idx) {
            return Err(malformed(format!("feature index {idx} outside 1..={N_FEATURES}")));
        }
        let val: f64 = val
            .parse()
            .map_err(|_| malformed(format!("bad value {val:?}")))?;
        if !val.is_finite() {
            return Err(malformed(format!("non-finite value at index {idx}")));
        }
        if !features[idx - 1].is_nan() {
            return Err(malformed(format!("duplicate feature index {idx}")));
        }
        features[idx - 1] = val;
    }
    if let Some(missing) = features.iter().position(|v| v.is_nan()) {
        return Err(Error::MissingFeatureIndex {
            path: path.to_path_buf(),
            line: line_no,
            index: missing + 1,
        });
    }
    Ok(RawRecord {
        gas,
        concentration,
        features,
        source: path.to_path_buf(),
        line: line_no,
    })
}

/// Inverse of [`parse_line`].
pub fn format_record(r: &RawRecord) -> String {
    let mut s = format!("{};{}", r.gas, r.concentration);
    for (i, v) in r.features.iter().enumerate() {
        s.push_str(&format!(" {}:{}", i + 1, v));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasTarget {
    pub gas: u32,
    pub concentration: f64,
    /// Optional cap on records of this gas; `None` takes every match.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubsetSpec {
    pub targets: Vec<GasTarget>,
    pub train: usize,
    pub test: usize,
    pub gas_names: BTreeMap<u32, String>,
    /// Sensor model of each of the 16 units.
    pub unit_models: Vec<String>,
}

impl Default for SubsetSpec {
    fn default() -> Self {
        let gas_names = [
            (1, "ethanol"),
            (2, "ethylene"),
            (3, "ammonia"),
            (4, "acetaldehyde"),
            (5, "acetone"),
            (6, "toluene"),
        ]
        .into_iter()
        .map(|(id, n)| (id, n.to_string()))
        .collect();
        let models = ["TGS2600", "TGS2602", "TGS2610", "TGS2620"];
        Self {
            targets: vec![
                GasTarget { gas: 4, concentration: 50.0, count: None },
                GasTarget { gas: 2, concentration: 250.0, count: None },
                GasTarget { gas: 6, concentration: 1.0, count: None },
            ],
            train: 60,
            test: 240,
            gas_names,
            unit_models: (0..N_UNITS).map(|u| models[u / 4].to_string()).collect(),
        }
    }
}

fn concentration_matches(value: f64, target: f64) -> bool {
    (value - target).abs() <= CONCENTRATION_RTOL * target.abs().max(f64::MIN_POSITIVE)
}

/// The first `train + test` matching records in chronological order, split
/// into a training block and a test stream. Labels follow the order of
/// `spec.targets`.
pub fn select_subset(records: &[RawRecord], spec: &SubsetSpec) -> Result<Dataset> {
    if spec.targets.is_empty() {
        return Err(Error::Config("subset needs at least one gas target".into()));
    }
    if spec.unit_models.len() != N_UNITS {
        return Err(Error::Config(format!(
            "unit_models must list {N_UNITS} sensor models"
        )));
    }
    let total = spec.train + spec.test;
    let mut taken = vec![0usize; spec.targets.len()];
    let mut chosen: Vec<(ClassId, &RawRecord)> = Vec::with_capacity(total);
    for r in records {
        if chosen.len() == total {
            break;
        }
        let hit = spec.targets.iter().position(|t| {
            t.gas == r.gas && concentration_matches(r.concentration, t.concentration)
        });
        if let Some(c) = hit {
            if spec.targets[c].count.is_some_and(|cap| taken[c] >= cap) {
                continue;
            }
            taken[c] += 1;
            chosen.push((ClassId(c), r));
        }
    }
    if chosen.len() < total {
        let report = spec
            .targets
            .iter()
            .zip(&taken)
            .map(|(t, &n)| match t.count {
                Some(cap) if n < cap => format!(
                    "gas {} @ {}: {} of {} (deficit {})",
                    t.gas, t.concentration, n, cap, cap - n
                ),
                _ => format!("gas {} @ {}: {}", t.gas, t.concentration, n),
            })
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::InsufficientRecords(format!(
            "{} of {} records matched ({report})",
            chosen.len(),
            total
        )));
    }

    let class_names: Vec<String> = spec
        .targets
        .iter()
        .map(|t| {
            spec.gas_names
                .get(&t.gas)
                .cloned()
                .unwrap_or_else(|| format!("gas{}", t.gas))
        })
        .collect();
    let n_classes = class_names.len();
    let (train_part, test_part) = chosen.split_at(spec.train);
    let rows: Vec<Vec<f64>> = train_part.iter().map(|(_, r)| r.features.clone()).collect();
    let labels = train_part.iter().map(|(c, _)| *c).collect();
    let train = LabeledMatrix::from_rows(&rows, labels, n_classes)?;
    let test = test_part
        .iter()
        .enumerate()
        .map(|(i, (c, r))| Sample {
            index: spec.train + i,
            features: r.features.clone(),
            truth: Some(*c),
        })
        .collect();
    let mut sources: Vec<String> = chosen
        .iter()
        .map(|(_, r)| r.source.display().to_string())
        .collect();
    sources.dedup();

    Ok(Dataset {
        train,
        test,
        sensor_map: SensorMap::uniform(N_UNITS, FEATURES_PER_SENSOR),
        meta: DatasetMeta {
            kind: DatasetKind::Ingested,
            class_names,
            features_per_sensor: FEATURES_PER_SENSOR,
            n_sensors: N_UNITS,
            seed: None,
            synth: None,
            unit_models: spec.unit_models.clone(),
            sources,
        },
    })
}
