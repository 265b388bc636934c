//! Synthetic drifting sensor-array benchmark.
//!
//! Class clouds are Gaussian around fixed centres. Test samples drift along
//! a common direction at a constant rate, identically for every class, and
//! alternate strictly between the classes. Training samples are drawn before
//! any drift. Replacement sensors ("replicas") respond with a per-class gain
//! on the drift-free response that preserves the class ordering of the
//! sensor they replace.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassId, Dataset, DatasetKind, DatasetMeta, LabeledMatrix, Sample, SensorMap};
use crate::error::{Error, Result};

pub const MAX_REPLICA_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub n_sensors: usize,
    pub train_per_class: usize,
    pub n_test: usize,
    /// `class_centers[class][sensor]`
    pub class_centers: Vec<Vec<f64>>,
    /// Unit-norm drift direction, one component per sensor.
    pub drift_direction: Vec<f64>,
    /// Drift magnitude added per test sample.
    pub drift_rate: f64,
    pub noise_std: f64,
    /// Pair of classes placed closest together.
    pub overlap_pair: (usize, usize),
    pub replica_max_dev: f64,
    pub seed: u64,
}

fn unit(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / norm).collect()
}

impl Default for SynthConfig {
    /// The calibrated profile (see `examples/calibrate.rs`).
    fn default() -> Self {
        Self {
            n_classes: 3,
            n_sensors: 5,
            train_per_class: 20,
            n_test: 1200,
            // Every sensor separates one pair of classes by five noise units
            // at the low end of its range; the third class sits eight units
            // higher. Keeping the close pair low means a replica's gain
            // error can never merge it. Classes 0 and 1 are the closest
            // pair, and the drift carries class 2 towards class 1 and class
            // 1 towards class 0.
            class_centers: vec![
                vec![18.0, 18.0, 10.0, 5.0, 10.0],
                vec![10.0, 5.0, 5.0, 10.0, 18.0],
                vec![5.0, 10.0, 18.0, 18.0, 5.0],
            ],
            drift_direction: unit(&[10.0, 7.0, 2.0, 2.0, 6.0]),
            drift_rate: 0.06,
            noise_std: 1.0,
            overlap_pair: (0, 1),
            replica_max_dev: 0.2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Default profile without drift.
    pub fn stationary() -> Self {
        Self {
            drift_rate: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_classes < 2 || self.n_sensors < 1 {
            return bad("need at least two classes and one sensor".into());
        }
        if self.train_per_class < 2 || self.n_test == 0 {
            return bad("need two training samples per class and a nonempty test set".into());
        }
        if self.class_centers.len() != self.n_classes
            || self.class_centers.iter().any(|c| c.len() != self.n_sensors)
        {
            return bad(format!(
                "class_centers must be {}x{}",
                self.n_classes, self.n_sensors
            ));
        }
        if self.drift_direction.len() != self.n_sensors {
            return bad("drift_direction needs one component per sensor".into());
        }
        let norm = self.drift_direction.iter().map(|d| d * d).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return bad(format!("drift_direction must have unit norm (got {norm})"));
        }
        if !(self.noise_std >= 0.0) || !self.drift_rate.is_finite() {
            return bad("noise_std must be nonnegative and drift_rate finite".into());
        }
        if !(0.0..=0.5).contains(&self.replica_max_dev) {
            return bad("replica_max_dev must lie in [0, 0.5]".into());
        }
        let (a, b) = self.overlap_pair;
        if a >= self.n_classes || b >= self.n_classes || a == b {
            return bad("overlap_pair must name two distinct classes".into());
        }
        Ok(())
    }

    /// Class names "1", "2", ...
    pub fn class_names(&self) -> Vec<String> {
        (1..=self.n_classes).map(|c| c.to_string()).collect()
    }

    /// Label of test sample `t` (1-based): 1, 2, 3, 1, 2, 3, ...
    pub fn test_label(&self, t: usize) -> ClassId {
        ClassId((t - 1) % self.n_classes)
    }

    /// Drift offset of `sensor` at test time `t` (0 for training).
    pub fn drift(&self, sensor: usize, t: usize) -> f64 {
        self.drift_rate * t as f64 * self.drift_direction[sensor]
    }

    /// Noise-free response of `sensor` to `class` at time `t`.
    pub fn mean_response(&self, class: ClassId, sensor: usize, t: usize) -> f64 {
        self.class_centers[class.0][sensor] + self.drift(sensor, t)
    }
}

fn noise<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * std
}

/// Deterministic dataset for `config.seed`.
pub fn generate(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let p = config.n_sensors;

    let n_train = config.train_per_class * config.n_classes;
    let mut train = Vec::with_capacity(n_train * p);
    let mut labels = Vec::with_capacity(n_train);
    for i in 0..n_train {
        let class = ClassId(i % config.n_classes);
        for s in 0..p {
            train.push(config.mean_response(class, s, 0) + noise(&mut rng, config.noise_std));
        }
        labels.push(class);
    }
    let train = LabeledMatrix::from_flat(train, p, labels, config.n_classes)?;

    let test = (1..=config.n_test)
        .map(|t| {
            let class = config.test_label(t);
            let features = (0..p)
                .map(|s| config.mean_response(class, s, t) + noise(&mut rng, config.noise_std))
                .collect();
            Sample {
                index: t,
                features,
                truth: Some(class),
            }
        })
        .collect();

    Ok(Dataset {
        train,
        test,
        sensor_map: SensorMap::uniform(p, 1),
        meta: DatasetMeta {
            kind: DatasetKind::Synthetic,
            class_names: config.class_names(),
            features_per_sensor: 1,
            n_sensors: p,
            seed: Some(config.seed),
            synth: Some(config.clone()),
            unit_models: Vec::new(),
            sources: Vec::new(),
        },
    })
}

/// Per-class gains of one replacement unit for one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaTransform {
    pub sensor: usize,
    pub gains: Vec<f64>,
}

impl ReplicaTransform {
    /// Replica reading for `class` at test time `t`.
    pub fn respond<R: Rng + ?Sized>(
        &self,
        config: &SynthConfig,
        class: ClassId,
        t: usize,
        rng: &mut R,
    ) -> f64 {
        self.gains[class.0] * config.class_centers[class.0][self.sensor]
            + config.drift(self.sensor, t)
            + noise(rng, config.noise_std)
    }

    /// Drift-free replica centres, one per class.
    pub fn centers(&self, config: &SynthConfig) -> Vec<f64> {
        self.gains
            .iter()
            .enumerate()
            .map(|(c, g)| g * config.class_centers[c][self.sensor])
            .collect()
    }
}

/// Draw replica gains, resampling up to `MAX_REPLICA_ATTEMPTS` times until
/// the class ordering of the sensor is preserved.
pub fn make_replica<R: Rng + ?Sized>(
    config: &SynthConfig,
    sensor: usize,
    rng: &mut R,
) -> Result<ReplicaTransform> {
    make_replica_with_attempts(config, sensor, rng, MAX_REPLICA_ATTEMPTS)
}

pub fn make_replica_with_attempts<R: Rng + ?Sized>(
    config: &SynthConfig,
    sensor: usize,
    rng: &mut R,
    attempts: usize,
) -> Result<ReplicaTransform> {
    config.validate()?;
    if sensor >= config.n_sensors {
        return Err(Error::UnknownSensor(sensor));
    }
    let dev = config.replica_max_dev;
    let original: Vec<f64> = (0..config.n_classes)
        .map(|c| config.class_centers[c][sensor])
        .collect();
    for _ in 0..attempts {
        let gains: Vec<f64> = (0..config.n_classes)
            .map(|_| {
                if dev == 0.0 {
                    1.0
                } else {
                    rng.random_range(1.0 - dev..=1.0 + dev)
                }
            })
            .collect();
        let replica: Vec<f64> = original.iter().zip(&gains).map(|(c, g)| c * g).collect();
        if preserves_ordering(&original, &replica) {
            return Ok(ReplicaTransform { sensor, gains });
        }
    }
    Err(Error::OrderingViolation { sensor, attempts })
}

/// Every strictly ordered pair keeps its strict order.
pub fn preserves_ordering(original: &[f64], replica: &[f64]) -> bool {
    for i in 0..original.len() {
        for j in 0..original.len() {
            if original[i] < original[j] && replica[i] >= replica[j] {
                return false;
            }
        }
    }
    true
}
