//! Core data containers shared by every stage of the pipeline, plus the
//! on-disk CSV dataset format (`train.csv`, `test.csv`, `meta.toml`).

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::SynthConfig;

/// Index of a class within a problem (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassId(pub usize);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Dense row-major sample matrix with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    data: Vec<f64>,
    n_cols: usize,
    labels: Vec<ClassId>,
    n_classes: usize,
}

impl LabeledMatrix {
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<ClassId>, n_classes: usize) -> Result<Self> {
        let n_cols = rows.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    expected: n_cols,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(data, n_cols, labels, n_classes)
    }

    pub fn from_flat(
        data: Vec<f64>,
        n_cols: usize,
        labels: Vec<ClassId>,
        n_classes: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidInput("matrix has no rows".into()));
        }
        if n_cols == 0 {
            return Err(Error::InvalidInput("matrix has no columns".into()));
        }
        if data.len() != labels.len() * n_cols {
            return Err(Error::InvalidInput(format!(
                "{} values do not fill {} rows of {} columns",
                data.len(),
                labels.len(),
                n_cols
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix contains non-finite values".into()));
        }
        if let Some(bad) = labels.iter().find(|l| l.0 >= n_classes) {
            return Err(Error::InvalidInput(format!(
                "label {bad} outside 0..{n_classes}"
            )));
        }
        Ok(Self {
            data,
            n_cols,
            labels,
            n_classes,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols)
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    /// Values of column `col` for rows labelled `class`.
    pub fn class_column(&self, col: usize, class: ClassId) -> Vec<f64> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == class)
            .map(|(i, _)| self.value(i, col))
            .collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for l in &self.labels {
            counts[l.0] += 1;
        }
        counts
    }

    /// Classes with at least one row, in ascending order.
    pub fn present_classes(&self) -> Vec<ClassId> {
        self.class_counts()
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(|(i, _)| ClassId(i))
            .collect()
    }

    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.n_cols) {
            return Err(Error::InvalidInput(format!("column {bad} out of range")));
        }
        let mut data = Vec::with_capacity(self.n_rows() * cols.len());
        for row in self.rows() {
            data.extend(cols.iter().map(|&c| row[c]));
        }
        Self::from_flat(data, cols.len(), self.labels.clone(), self.n_classes)
    }

    /// Per-column (min, max) over all rows.
    pub fn column_ranges(&self) -> Vec<(f64, f64)> {
        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); self.n_cols];
        for row in self.rows() {
            for (r, &v) in ranges.iter_mut().zip(row) {
                r.0 = r.0.min(v);
                r.1 = r.1.max(v);
            }
        }
        ranges
    }
}

/// One measurement presented to the online classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Chronological index within the stream.
    pub index: usize,
    pub features: Vec<f64>,
    /// Ground truth, used only for scoring.
    pub truth: Option<ClassId>,
}

/// Partition of feature columns into physical sensor slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorMap {
    sensors: Vec<Vec<usize>>,
}

impl SensorMap {
    pub fn uniform(n_sensors: usize, features_per_sensor: usize) -> Self {
        let sensors = (0..n_sensors)
            .map(|s| (s * features_per_sensor..(s + 1) * features_per_sensor).collect())
            .collect();
        Self { sensors }
    }

    pub fn from_groups(sensors: Vec<Vec<usize>>) -> Result<Self> {
        let n: usize = sensors.iter().map(Vec::len).sum();
        let mut seen = vec![false; n];
        for &f in sensors.iter().flatten() {
            if f >= n || seen[f] {
                return Err(Error::InvalidInput(format!(
                    "feature {f} is not assigned to exactly one sensor"
                )));
            }
            seen[f] = true;
        }
        Ok(Self { sensors })
    }

    pub fn n_sensors(&self) -> usize {
        self.sensors.len()
    }

    pub fn n_features(&self) -> usize {
        self.sensors.iter().map(Vec::len).sum()
    }

    pub fn features_of(&self, sensor: usize) -> Result<&[usize]> {
        self.sensors
            .get(sensor)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownSensor(sensor))
    }

    pub fn sensor_of(&self, feature: usize) -> Option<usize> {
        self.sensors.iter().position(|fs| fs.contains(&feature))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Synthetic,
    Ingested,
}

/// Sidecar metadata stored next to the CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub kind: DatasetKind,
    pub class_names: Vec<String>,
    pub features_per_sensor: usize,
    pub n_sensors: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    /// Sensor model of every physical unit (ingested data only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unit_models: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<String>,
}

/// A train/test pair in a common format for synthetic and ingested data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: LabeledMatrix,
    pub test: Vec<Sample>,
    pub sensor_map: SensorMap,
    pub meta: DatasetMeta,
}

pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";
pub const META_FILE: &str = "meta.toml";

impl Dataset {
    pub fn class_names(&self) -> &[String] {
        &self.meta.class_names
    }

    pub fn test_matrix(&self) -> Result<LabeledMatrix> {
        let rows: Vec<Vec<f64>> = self.test.iter().map(|s| s.features.clone()).collect();
        let labels = self
            .test
            .iter()
            .map(|s| {
                s.truth
                    .ok_or_else(|| Error::InvalidInput(format!("sample {} has no label", s.index)))
            })
            .collect::<Result<Vec<_>>>()?;
        LabeledMatrix::from_rows(&rows, labels, self.train.n_classes())
    }

    /// Write `train.csv`, `test.csv` and `meta.toml` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let train_rows: Vec<(usize, ClassId, &[f64])> = (0..self.train.n_rows())
            .map(|i| (i, self.train.labels()[i], self.train.row(i)))
            .collect();
        write_rows(&dir.join(TRAIN_FILE), &self.meta.class_names, &train_rows)?;
        let test_rows = self
            .test
            .iter()
            .map(|s| {
                let truth = s.truth.ok_or_else(|| {
                    Error::InvalidInput(format!("sample {} has no label", s.index))
                })?;
                Ok((s.index, truth, s.features.as_slice()))
            })
            .collect::<Result<Vec<_>>>()?;
        write_rows(&dir.join(TEST_FILE), &self.meta.class_names, &test_rows)?;
        let meta = toml::to_string_pretty(&self.meta)
            .map_err(|e| Error::Config(format!("serializing metadata: {e}")))?;
        let path = dir.join(META_FILE);
        fs::write(&path, meta).map_err(|e| Error::io(path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: DatasetMeta = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", meta_path.display())))?;
        let n_classes = meta.class_names.len();
        let train = read_rows(&dir.join(TRAIN_FILE), &meta.class_names)?;
        let (rows, labels): (Vec<_>, Vec<_>) =
            train.into_iter().map(|(_, l, f)| (f, l)).unzip();
        let train = LabeledMatrix::from_rows(&rows, labels, n_classes)?;
        let test = read_rows(&dir.join(TEST_FILE), &meta.class_names)?
            .into_iter()
            .map(|(index, truth, features)| Sample {
                index,
                features,
                truth: Some(truth),
            })
            .collect();
        let sensor_map = SensorMap::uniform(meta.n_sensors, meta.features_per_sensor);
        if sensor_map.n_features() != train.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: sensor_map.n_features(),
                got: train.n_cols(),
            });
        }
        Ok(Self {
            train,
            test,
            sensor_map,
            meta,
        })
    }
}

fn write_rows(path: &Path, class_names: &[String], rows: &[(usize, ClassId, &[f64])]) -> Result<()> {
    let n_cols = rows.first().map(|r| r.2.len()).unwrap_or(0);
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["index".to_string(), "label".to_string()];
    header.extend((0..n_cols).map(|i| format!("f{i}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (index, label, values) in rows {
        let name = class_names
            .get(label.0)
            .ok_or_else(|| Error::InvalidInput(format!("no name for class {label}")))?;
        let mut rec = vec![index.to_string(), name.clone()];
        rec.extend(values.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows(path: &Path, class_names: &[String]) -> Result<Vec<(usize, ClassId, Vec<f64>)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let malformed = |reason: String| Error::MalformedLine {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let index = rec
            .get(0)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| malformed("bad index".into()))?;
        let name = rec.get(1).ok_or_else(|| malformed("missing label".into()))?;
        let label = class_names
            .iter()
            .position(|n| n == name)
            .map(ClassId)
            .ok_or_else(|| malformed(format!("unknown label {name:?}")))?;
        let features = rec
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>().map_err(|e| malformed(format!("{v:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        out.push((index, label, features));
    }
    Ok(out)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::MalformedLine {
        path: path.to_path_buf(),
        line: e.position().map(|p| p.line() as usize).unwrap_or(0),
        reason: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_columns_keeps_labels() {
        let m = LabeledMatrix::from_rows(
            &[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]],
            vec![ClassId(0), ClassId(1)],
            2,
        )
        .unwrap();
        let s = m.select_columns(&[2, 0]).unwrap();
        assert_eq!(s.row(1), &[6.0, 4.0]);
        assert_eq!(s.labels(), m.labels());
        assert!(m.select_columns(&[3]).is_err());
    }

    #[test]
    fn rejects_ragged_and_non_finite() {
        assert!(LabeledMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]], vec![ClassId(0); 2], 1).is_err());
        assert!(LabeledMatrix::from_rows(&[vec![f64::NAN]], vec![ClassId(0)], 1).is_err());
        assert!(LabeledMatrix::from_rows(&[vec![1.0]], vec![ClassId(3)], 2).is_err());
    }

    #[test]
    fn sensor_map_partition() {
        let map = SensorMap::uniform(16, 8);
        assert_eq!(map.n_features(), 128);
        for f in 0..128 {
            assert_eq!(map.sensor_of(f), Some(f / 8));
        }
        assert!(map.features_of(16).is_err());
        assert!(SensorMap::from_groups(vec![vec![0, 1], vec![1]]).is_err());
    }
}
