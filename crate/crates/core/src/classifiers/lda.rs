use nalgebra::{DMatrix, DVector};

use crate::classifiers::argmax;
use crate::dataset::{ClassId, LabeledMatrix};
use crate::error::{Error, Result};

/// Linear discriminant analysis with equal priors and a ridge-regularized
/// pooled within-class covariance.
///
/// The ridge is `ridge · C_jj` on each diagonal entry, which keeps the model
/// equivariant under per-feature affine rescaling. Features with zero pooled
/// variance receive `ridge · trace(C)/p` instead.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    classes: Vec<ClassId>,
    /// Σ⁻¹ μ_c per class
    weights: Vec<DVector<f64>>,
    /// −½ μ_cᵀ Σ⁻¹ μ_c per class
    offsets: Vec<f64>,
    n_features: usize,
}

impl LdaModel {
    pub fn fit(data: &LabeledMatrix, ridge: f64) -> Result<Self> {
        let p = data.n_cols();
        let classes = data.present_classes();
        let counts = data.class_counts();
        let mut means = vec![DVector::<f64>::zeros(p); data.n_classes()];
        for (row, l) in data.rows().zip(data.labels()) {
            for (m, v) in means[l.0].iter_mut().zip(row) {
                *m += v;
            }
        }
        for c in &classes {
            means[c.0] /= counts[c.0] as f64;
        }
        if classes.len() == 1 {
            return Ok(Self {
                classes,
                weights: vec![DVector::zeros(p)],
                offsets: vec![0.0],
                n_features: p,
            });
        }

        let mut cov = DMatrix::<f64>::zeros(p, p);
        for (row, l) in data.rows().zip(data.labels()) {
            let d = DVector::from_iterator(p, row.iter().zip(means[l.0].iter()).map(|(x, m)| x - m));
            cov.syger(1.0, &d, &d, 1.0);
        }
        let n = data.n_rows();
        let dof = if n > classes.len() { n - classes.len() } else { n };
        cov /= dof as f64;
        cov.fill_lower_triangle_with_upper_triangle();

        let mean_diag = cov.trace() / p as f64;
        for j in 0..p {
            let d = cov[(j, j)];
            cov[(j, j)] += ridge * if d > 0.0 { d } else { mean_diag };
        }
        let chol = cov.cholesky().ok_or(Error::SingularCovariance)?;

        let mut weights = Vec::with_capacity(classes.len());
        let mut offsets = Vec::with_capacity(classes.len());
        for c in &classes {
            let w = chol.solve(&means[c.0]);
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::SingularCovariance);
            }
            offsets.push(-0.5 * means[c.0].dot(&w));
            weights.push(w);
        }
        Ok(Self {
            classes,
            weights,
            offsets,
            n_features: p,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Discriminant score of every class present at training time.
    pub fn scores(&self, x: &[f64]) -> Vec<(ClassId, f64)> {
        self.classes
            .iter()
            .zip(self.weights.iter().zip(&self.offsets))
            .map(|(&c, (w, b))| (c, w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b))
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> ClassId {
        argmax(self.scores(x))
    }
}
