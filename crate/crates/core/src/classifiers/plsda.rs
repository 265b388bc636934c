use nalgebra::{DMatrix, DVector, RowDVector};

use crate::classifiers::argmax;
use crate::dataset::{ClassId, LabeledMatrix};
use crate::error::Result;

const MAX_ITER: usize = 500;
const CONVERGENCE: f64 = 1e-12;
const RESIDUAL_EPS: f64 = 1e-12;

/// PLS discriminant analysis: PLS2 regression (NIPALS) of a one-hot class
/// matrix on mean-centred features, predicting the class with the largest
/// fitted response.
#[derive(Debug, Clone, PartialEq)]
pub struct PlsDaModel {
    classes: Vec<ClassId>,
    x_mean: RowDVector<f64>,
    y_mean: RowDVector<f64>,
    /// p × classes regression matrix
    coefficients: DMatrix<f64>,
    components: usize,
}

impl PlsDaModel {
    pub fn fit(data: &LabeledMatrix, latent_vars: usize) -> Result<Self> {
        let n = data.n_rows();
        let p = data.n_cols();
        let classes = data.present_classes();
        let k = classes.len();

        let mut x = DMatrix::from_row_iterator(n, p, data.rows().flatten().copied());
        let mut y = DMatrix::<f64>::zeros(n, k);
        for (i, l) in data.labels().iter().enumerate() {
            let col = classes.iter().position(|c| c == l).unwrap_or(0);
            y[(i, col)] = 1.0;
        }
        let x_mean = x.row_mean();
        let y_mean = y.row_mean();
        for mut row in x.row_iter_mut() {
            row -= &x_mean;
        }
        for mut row in y.row_iter_mut() {
            row -= &y_mean;
        }

        let max_rank = p.min(n.saturating_sub(1));
        let wanted = latent_vars.min(max_rank);
        if wanted < latent_vars {
            log::warn!("PLS-DA: clipping {latent_vars} latent variables to {wanted} (rank limit)");
        }

        let mut w_cols = Vec::with_capacity(wanted);
        let mut p_cols = Vec::with_capacity(wanted);
        let mut q_cols = Vec::with_capacity(wanted);
        for _ in 0..wanted {
            if x.norm() < RESIDUAL_EPS || y.norm() < RESIDUAL_EPS {
                log::debug!("PLS-DA: residuals exhausted after {} components", w_cols.len());
                break;
            }
            let Some((w, t, q)) = nipals_component(&x, &y) else {
                break;
            };
            let tt = t.dot(&t);
            let loading = x.tr_mul(&t) / tt;
            x -= &t * loading.transpose();
            y -= &t * q.transpose();
            w_cols.push(w);
            p_cols.push(loading);
            q_cols.push(q);
        }

        let components = w_cols.len();
        let coefficients = if components == 0 {
            DMatrix::zeros(p, k)
        } else {
            let w = DMatrix::from_columns(&w_cols);
            let pl = DMatrix::from_columns(&p_cols);
            let q = DMatrix::from_columns(&q_cols);
            // B = W (PᵀW)⁻¹ Qᵀ; PᵀW is upper triangular with unit diagonal
            let ptw = pl.tr_mul(&w);
            match ptw.try_inverse() {
                Some(inv) => w * inv * q.transpose(),
                None => DMatrix::zeros(p, k),
            }
        };
        Ok(Self {
            classes,
            x_mean,
            y_mean,
            coefficients,
            components,
        })
    }

    pub fn n_features(&self) -> usize {
        self.x_mean.len()
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn response(&self, x: &[f64]) -> Vec<(ClassId, f64)> {
        let centred = RowDVector::from_iterator(
            x.len(),
            x.iter().zip(self.x_mean.iter()).map(|(v, m)| v - m),
        );
        let yhat = centred * &self.coefficients + &self.y_mean;
        self.classes.iter().copied().zip(yhat.iter().copied()).collect()
    }

    pub fn predict(&self, x: &[f64]) -> ClassId {
        argmax(self.response(x))
    }
}

/// One NIPALS component: weight w, score t and Y-loading q.
fn nipals_component(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let start = (0..y.ncols()).max_by(|&a, &b| {
        y.column(a)
            .norm_squared()
            .total_cmp(&y.column(b).norm_squared())
            .then(b.cmp(&a))
    })?;
    let mut u: DVector<f64> = y.column(start).into_owned();
    let mut t_old: Option<DVector<f64>> = None;
    for _ in 0..MAX_ITER {
        let mut w = x.tr_mul(&u);
        let wn = w.norm();
        if wn < RESIDUAL_EPS {
            return None;
        }
        w /= wn;
        let t = x * &w;
        let tt = t.dot(&t);
        if tt < RESIDUAL_EPS {
            return None;
        }
        let q = y.tr_mul(&t) / tt;
        let qq = q.dot(&q);
        if qq < RESIDUAL_EPS {
            return None;
        }
        u = y * &q / qq;
        let converged = t_old
            .as_ref()
            .is_some_and(|old| (&t - old).norm() <= CONVERGENCE * t.norm());
        if converged || y.ncols() == 1 {
            return Some((w, t, q));
        }
        t_old = Some(t);
    }
    let mut w = x.tr_mul(&u);
    w /= w.norm();
    let t = x * &w;
    let q = y.tr_mul(&t) / t.dot(&t);
    Some((w, t, q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_means_reproduce_nearest_centroid_labels() {
        let means = [
            vec![1.0, 5.0, -2.0, 0.5, 3.0],
            vec![4.0, 2.0, 0.0, 1.5, -1.0],
            vec![-3.0, 0.0, 6.0, 2.0, 2.0],
        ];
        let rows: Vec<Vec<f64>> = means.iter().cloned().cycle().take(9).collect();
        let labels = (0..9).map(|i| ClassId(i % 3)).collect();
        let data = LabeledMatrix::from_rows(&rows, labels, 3).unwrap();
        let model = PlsDaModel::fit(&data, 2).unwrap();
        assert_eq!(model.components(), 2);
        for (c, m) in means.iter().enumerate() {
            assert_eq!(model.predict(m), ClassId(c));
        }
    }

    #[test]
    fn latent_vars_clipped_to_rank() {
        let data = LabeledMatrix::from_rows(
            &[vec![0.0], vec![0.2], vec![5.0], vec![5.3]],
            vec![ClassId(0), ClassId(0), ClassId(1), ClassId(1)],
            2,
        )
        .unwrap();
        let model = PlsDaModel::fit(&data, 4).unwrap();
        assert_eq!(model.components(), 1);
        assert_eq!(model.predict(&[4.0]), ClassId(1));
    }

    #[test]
    fn single_component_matches_closed_form() {
        // with one feature and two balanced classes the response is linear in x
        let data = LabeledMatrix::from_rows(
            &[vec![0.0], vec![2.0], vec![10.0], vec![12.0]],
            vec![ClassId(0), ClassId(0), ClassId(1), ClassId(1)],
            2,
        )
        .unwrap();
        let model = PlsDaModel::fit(&data, 1).unwrap();
        let r = model.response(&[6.0]);
        assert!((r[0].1 - 0.5).abs() < 1e-12 && (r[1].1 - 0.5).abs() < 1e-12);
        // centred x = [-6, -4, 4, 6], Σx² = 104, Σx·y = 10
        let r = model.response(&[11.0]);
        assert!((r[1].1 - (0.5 + 5.0 * 10.0 / 104.0)).abs() < 1e-12);
    }
}
