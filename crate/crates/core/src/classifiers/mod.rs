//! Core classifiers rebuilt by the online engine on every sample.

mod knn;
mod lda;
mod plsda;

pub use knn::KnnModel;
pub use lda::LdaModel;
pub use plsda::PlsDaModel;

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassId, LabeledMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Knn,
    #[default]
    Lda,
    Plsda,
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClassifierKind::Knn => "knn",
            ClassifierKind::Lda => "lda",
            ClassifierKind::Plsda => "plsda",
        })
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "knn" | "k-nn" => Ok(ClassifierKind::Knn),
            "lda" => Ok(ClassifierKind::Lda),
            "plsda" | "pls-da" => Ok(ClassifierKind::Plsda),
            other => Err(Error::Config(format!("unknown classifier kind {other:?}"))),
        }
    }
}

pub const DEFAULT_K: usize = 3;
pub const DEFAULT_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSpec {
    #[serde(default)]
    pub kind: ClassifierKind,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Relative ridge added to the pooled LDA covariance.
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    /// PLS-DA latent variables; `None` means classes − 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_vars: Option<usize>,
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_ridge() -> f64 {
    DEFAULT_RIDGE
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        Self::new(ClassifierKind::default())
    }
}

impl ClassifierSpec {
    pub fn new(kind: ClassifierKind) -> Self {
        Self {
            kind,
            k: DEFAULT_K,
            ridge: DEFAULT_RIDGE,
            latent_vars: None,
        }
    }

    pub fn knn(k: usize) -> Self {
        Self {
            k,
            ..Self::new(ClassifierKind::Knn)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::Config("ridge must be a finite nonnegative number".into()));
        }
        if self.latent_vars == Some(0) {
            return Err(Error::Config("latent_vars must be positive".into()));
        }
        Ok(())
    }
}

/// An immutable fitted model.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Knn(KnnModel),
    Lda(LdaModel),
    Plsda(PlsDaModel),
}

pub fn fit(spec: &ClassifierSpec, data: &LabeledMatrix) -> Result<TrainedModel> {
    spec.validate()?;
    Ok(match spec.kind {
        ClassifierKind::Knn => TrainedModel::Knn(KnnModel::fit(data, spec.k)),
        ClassifierKind::Lda => TrainedModel::Lda(LdaModel::fit(data, spec.ridge)?),
        ClassifierKind::Plsda => {
            let requested = spec
                .latent_vars
                .unwrap_or_else(|| data.n_classes().saturating_sub(1).max(1));
            TrainedModel::Plsda(PlsDaModel::fit(data, requested)?)
        }
    })
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        match self {
            TrainedModel::Knn(m) => m.n_features(),
            TrainedModel::Lda(m) => m.n_features(),
            TrainedModel::Plsda(m) => m.n_features(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<ClassId> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        Ok(match self {
            TrainedModel::Knn(m) => m.predict(x),
            TrainedModel::Lda(m) => m.predict(x),
            TrainedModel::Plsda(m) => m.predict(x),
        })
    }
}

pub fn predict(model: &TrainedModel, x: &[f64]) -> Result<ClassId> {
    model.predict(x)
}

/// Index of the maximum score; ties go to the lower index.
pub(crate) fn argmax(scores: impl IntoIterator<Item = (ClassId, f64)>) -> ClassId {
    let mut best: Option<(ClassId, f64)> = None;
    for (c, s) in scores {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((c, s)),
        }
    }
    best.map(|(c, _)| c).unwrap_or(ClassId(0))
}
