use std::cmp::Ordering;

use crate::dataset::{ClassId, LabeledMatrix};

/// k-nearest neighbours with Euclidean distance on raw features.
///
/// Neighbours are ranked by (distance, lexicographic feature vector, label),
/// which makes the ranking independent of training row order. A tied vote
/// goes to the tied class whose best neighbour ranks first.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    rows: Vec<Vec<f64>>,
    labels: Vec<ClassId>,
    k: usize,
    n_classes: usize,
}

impl KnnModel {
    pub fn fit(data: &LabeledMatrix, k: usize) -> Self {
        let k = k.min(data.n_rows()).max(1);
        Self {
            rows: data.rows().map(<[f64]>::to_vec).collect(),
            labels: data.labels().to_vec(),
            k,
            n_classes: data.n_classes(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.rows.first().map(Vec::len).unwrap_or(0)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn predict(&self, x: &[f64]) -> ClassId {
        let mut ranked: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let d2: f64 = r.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
            a.0.total_cmp(&b.0)
                .then_with(|| lexicographic(&self.rows[a.1], &self.rows[b.1]))
                .then_with(|| self.labels[a.1].cmp(&self.labels[b.1]))
        };
        if self.k < ranked.len() {
            ranked.select_nth_unstable_by(self.k - 1, cmp);
            ranked.truncate(self.k);
        }
        ranked.sort_by(cmp);

        let mut votes = vec![0usize; self.n_classes];
        for &(_, i) in &ranked {
            votes[self.labels[i].0] += 1;
        }
        let top = votes.iter().copied().max().unwrap_or(0);
        ranked
            .iter()
            .map(|&(_, i)| self.labels[i])
            .find(|c| votes[c.0] == top)
            .unwrap_or(ClassId(0))
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(rows: &[Vec<f64>], labels: &[usize], k: usize) -> KnnModel {
        let labels = labels.iter().map(|&l| ClassId(l)).collect();
        let n = 1 + rows.len();
        KnnModel::fit(&LabeledMatrix::from_rows(rows, labels, n).unwrap(), k)
    }

    #[test]
    fn majority_vote() {
        let m = model(
            &[vec![0.0], vec![0.2], vec![0.1], vec![5.0]],
            &[0, 0, 1, 1],
            3,
        );
        assert_eq!(m.predict(&[0.05]), ClassId(0));
    }

    #[test]
    fn three_way_tie_goes_to_nearest() {
        // neighbours at distances 1.0 (class 2), 2.0 (class 0), 2.0 (class 1)
        let m = model(
            &[vec![2.0, 0.0], vec![0.0, 2.0], vec![1.0, 0.0], vec![50.0, 50.0]],
            &[0, 1, 2, 0],
            3,
        );
        assert_eq!(m.predict(&[0.0, 0.0]), ClassId(2));
    }

    #[test]
    fn equidistant_neighbours_rank_lexicographically() {
        // both at distance 1; [-1] sorts before [1]
        let m = model(&[vec![1.0], vec![-1.0]], &[0, 1], 1);
        assert_eq!(m.predict(&[0.0]), ClassId(1));
        let m = model(&[vec![-1.0], vec![1.0]], &[1, 0], 1);
        assert_eq!(m.predict(&[0.0]), ClassId(1));
    }

    #[test]
    fn duplicated_class_rows_split_vote_deterministically() {
        // identical rows labelled 0 and 1: the label order breaks the tie
        let m = model(&[vec![1.0], vec![1.0], vec![9.0]], &[1, 0, 2], 2);
        assert_eq!(m.predict(&[1.0]), ClassId(0));
        let m = model(&[vec![1.0], vec![1.0], vec![9.0]], &[0, 1, 2], 2);
        assert_eq!(m.predict(&[1.0]), ClassId(0));
    }

    #[test]
    fn k_clipped_to_rows() {
        let m = model(&[vec![0.0], vec![1.0]], &[0, 1], 7);
        assert_eq!(m.k(), 2);
        assert_eq!(m.predict(&[0.9]), ClassId(1));
    }
}
