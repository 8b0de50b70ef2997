use ndarray::{Array2, ArrayView2};

use super::KnnWeights;

#[derive(Debug, Clone)]
pub struct KnnModel {
    x: Array2<f64>,
    y: Vec<u8>,
    k: usize,
    weights: KnnWeights,
}

impl KnnModel {
    pub fn fit(x: ArrayView2<f64>, y: &[u8], k: usize, weights: KnnWeights) -> Self {
        Self {
            x: x.to_owned(),
            y: y.to_vec(),
            k,
            weights,
        }
    }

    /// Positive fraction among the k nearest training rows (Euclidean),
    /// optionally weighted by inverse distance. Equal distances resolve to
    /// the lower training index.
    pub fn predict(&self, q: ArrayView2<f64>) -> Vec<f64> {
        let k = self.k.min(self.y.len());
        let mut dist: Vec<(f64, usize)> = Vec::with_capacity(self.y.len());
        q.rows()
            .into_iter()
            .map(|row| {
                dist.clear();
                dist.extend(self.x.rows().into_iter().enumerate().map(|(i, t)| {
                    let d2: f64 = t.iter().zip(row.iter()).map(|(a, b)| (a - b).powi(2)).sum();
                    (d2, i)
                }));
                let cmp =
                    |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                if k < dist.len() {
                    dist.select_nth_unstable_by(k - 1, cmp);
                }
                let nearest = &mut dist[..k];
                nearest.sort_by(cmp);
                match self.weights {
                    KnnWeights::Uniform => {
                        nearest.iter().filter(|(_, i)| self.y[*i] == 1).count() as f64 / k as f64
                    }
                    KnnWeights::Distance => {
                        if nearest[0].0 == 0.0 {
                            // exact matches take all the weight
                            let exact: Vec<_> = nearest.iter().filter(|(d, _)| *d == 0.0).collect();
                            exact.iter().filter(|(_, i)| self.y[*i] == 1).count() as f64
                                / exact.len() as f64
                        } else {
                            let (mut pos, mut total) = (0.0, 0.0);
                            for (d2, i) in nearest.iter() {
                                let w = 1.0 / d2.sqrt();
                                total += w;
                                if self.y[*i] == 1 {
                                    pos += w;
                                }
                            }
                            pos / total
                        }
                    }
                }
            })
            .collect()
    }
}
