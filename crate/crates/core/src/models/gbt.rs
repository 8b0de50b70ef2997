//! Histogram-based gradient boosting for binary classification.
//!
//! Features are discretized once on the training data into at most
//! `max_bins` equal-frequency bins; trees are grown depth-wise on per-bin
//! gradient/hessian sums of the logistic loss.

use ndarray::ArrayView2;

const MIN_SAMPLES_LEAF: usize = 5;
const MIN_HESSIAN_LEAF: f64 = 1e-3;
const L2_REGULARIZATION: f64 = 0.0;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Upper bin edges of one feature. A value `v` falls into the bin equal to the
/// number of edges strictly below `v`.
#[derive(Debug, Clone, PartialEq)]
struct BinEdges(Vec<f64>);

impl BinEdges {
    fn fit(col: impl Iterator<Item = f64>, max_bins: usize) -> Self {
        let mut sorted: Vec<f64> = col.collect();
        sorted.sort_by(f64::total_cmp);
        let mut distinct = sorted.clone();
        distinct.dedup();
        let edges = if distinct.len() <= max_bins {
            distinct
                .windows(2)
                .map(|w| w[0] + (w[1] - w[0]) / 2.0)
                .collect()
        } else {
            // equal-frequency cut points at midpoints between neighbouring order statistics
            let n = sorted.len();
            let mut e: Vec<f64> = (1..max_bins)
                .map(|j| {
                    let pos = j as f64 * (n - 1) as f64 / max_bins as f64;
                    let lo = pos.floor() as usize;
                    let hi = (lo + 1).min(n - 1);
                    sorted[lo] + (sorted[hi] - sorted[lo]) / 2.0
                })
                .collect();
            e.dedup();
            e
        };
        BinEdges(edges)
    }

    fn bin(&self, v: f64) -> u8 {
        self.0.partition_point(|&e| e < v) as u8
    }

    fn n_bins(&self) -> usize {
        self.0.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        /// Rows with bin <= this go left.
        bin: u8,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct BoostTree {
    nodes: Vec<Node>,
}

impl BoostTree {
    fn predict(&self, bins: &[u8]) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    bin,
                    left,
                    right,
                } => id = if bins[feature] <= bin { left } else { right },
            }
        }
    }
}

struct Grower<'a> {
    /// Row-major binned training matrix.
    bins: &'a [u8],
    n_features: usize,
    n_bins: &'a [usize],
    grad: &'a [f64],
    hess: &'a [f64],
    max_depth: usize,
    learning_rate: f64,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -self.learning_rate * g / (h + L2_REGULARIZATION)
    }

    fn score(g: f64, h: f64) -> f64 {
        g * g / (h + L2_REGULARIZATION)
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let (g, h) = idx.iter().fold((0.0, 0.0), |(g, h), &i| {
            (g + self.grad[i], h + self.hess[i])
        });
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(self.leaf_value(g, h)));
        if depth >= self.max_depth || idx.len() < 2 * MIN_SAMPLES_LEAF {
            return id;
        }

        let parent = Self::score(g, h);
        let mut best: Option<(f64, usize, u8)> = None;
        let mut hist: Vec<(f64, f64, usize)> = Vec::new();
        for f in 0..self.n_features {
            let nb = self.n_bins[f];
            if nb < 2 {
                continue;
            }
            hist.clear();
            hist.resize(nb, (0.0, 0.0, 0));
            for &i in idx.iter() {
                let b = self.bins[i * self.n_features + f] as usize;
                hist[b].0 += self.grad[i];
                hist[b].1 += self.hess[i];
                hist[b].2 += 1;
            }
            let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
            for (b, &(gb, hb, nb_count)) in hist.iter().enumerate().take(nb - 1) {
                gl += gb;
                hl += hb;
                nl += nb_count;
                let nr = idx.len() - nl;
                let hr = h - hl;
                if nb_count == 0
                    || nl < MIN_SAMPLES_LEAF
                    || nr < MIN_SAMPLES_LEAF
                    || hl < MIN_HESSIAN_LEAF
                    || hr < MIN_HESSIAN_LEAF
                {
                    continue;
                }
                let gain = Self::score(gl, hl) + Self::score(g - gl, hr) - parent;
                // strict improvement keeps the lowest feature, then lowest bin
                if gain > 1e-12 && best.map_or(true, |(bg, _, _)| gain > bg) {
                    best = Some((gain, f, b as u8));
                }
            }
        }
        let Some((_, feature, bin)) = best else {
            return id;
        };
        let mut split = 0;
        for i in 0..idx.len() {
            if self.bins[idx[i] * self.n_features + feature] <= bin {
                idx.swap(i, split);
                split += 1;
            }
        }
        let (l, r) = idx.split_at_mut(split);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            bin,
            left,
            right,
        };
        id
    }
}

#[derive(Debug, Clone)]
pub struct GradientBoostedTrees {
    edges: Vec<BinEdges>,
    baseline: f64,
    trees: Vec<BoostTree>,
}

impl GradientBoostedTrees {
    pub fn fit(
        x: ArrayView2<f64>,
        y: &[u8],
        n_rounds: usize,
        learning_rate: f64,
        max_bins: usize,
        max_depth: usize,
    ) -> Self {
        let (n, d) = x.dim();
        let edges: Vec<BinEdges> = x
            .columns()
            .into_iter()
            .map(|c| BinEdges::fit(c.iter().copied(), max_bins))
            .collect();
        let n_bins: Vec<usize> = edges.iter().map(BinEdges::n_bins).collect();
        let mut bins = vec![0u8; n * d];
        for (i, row) in x.rows().into_iter().enumerate() {
            for (f, v) in row.iter().enumerate() {
                bins[i * d + f] = edges[f].bin(*v);
            }
        }

        let p = y.iter().map(|&l| f64::from(l)).sum::<f64>() / n as f64;
        let baseline = (p / (1.0 - p)).ln();
        let mut raw = vec![baseline; n];
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        let mut trees = Vec::with_capacity(n_rounds);
        let mut idx: Vec<usize> = Vec::with_capacity(n);
        for _ in 0..n_rounds {
            for i in 0..n {
                let prob = sigmoid(raw[i]);
                grad[i] = prob - f64::from(y[i]);
                hess[i] = prob * (1.0 - prob);
            }
            idx.clear();
            idx.extend(0..n);
            let mut grower = Grower {
                bins: &bins,
                n_features: d,
                n_bins: &n_bins,
                grad: &grad,
                hess: &hess,
                max_depth,
                learning_rate,
                nodes: Vec::new(),
            };
            grower.grow(&mut idx, 0);
            let tree = BoostTree {
                nodes: grower.nodes,
            };
            for (i, r) in raw.iter_mut().enumerate() {
                *r += tree.predict(&bins[i * d..(i + 1) * d]);
            }
            trees.push(tree);
        }
        Self {
            edges,
            baseline,
            trees,
        }
    }

    pub fn raw_scores(&self, x: ArrayView2<f64>) -> Vec<f64> {
        let mut row_bins = vec![0u8; self.edges.len()];
        x.rows()
            .into_iter()
            .map(|row| {
                for (f, v) in row.iter().enumerate() {
                    row_bins[f] = self.edges[f].bin(*v);
                }
                self.baseline + self.trees.iter().map(|t| t.predict(&row_bins)).sum::<f64>()
            })
            .collect()
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<f64> {
        self.raw_scores(x).into_iter().map(sigmoid).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn bins_use_midpoints_of_distinct_values() {
        let e = BinEdges::fit([3.0, 1.0, 2.0, 2.0].into_iter(), 255);
        assert_eq!(e.0, vec![1.5, 2.5]);
        assert_eq!(
            (e.bin(1.0), e.bin(2.0), e.bin(3.0), e.bin(99.0)),
            (0, 1, 2, 2)
        );
        let many = BinEdges::fit((0..1000).map(f64::from), 16);
        assert_eq!(many.n_bins(), 16);
    }

    #[test]
    fn zero_rounds_predict_base_rate() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let m = GradientBoostedTrees::fit(x.view(), &[0, 1, 1, 1], 0, 0.1, 255, 3);
        for p in m.predict(x.view()) {
            assert!((p - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn boosting_separates_step_function() {
        let x = Array2::from_shape_fn((40, 2), |(i, j)| if j == 0 { i as f64 } else { 1.0 });
        let y: Vec<u8> = (0..40).map(|i| u8::from(i >= 20)).collect();
        let m = GradientBoostedTrees::fit(x.view(), &y, 50, 0.3, 255, 2);
        let p = m.predict(x.view());
        assert!(p[..20].iter().all(|&v| v < 0.2));
        assert!(p[20..].iter().all(|&v| v > 0.8));
    }
}
