use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::seed::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features examined per split; `None` examines all of them in index order.
    pub max_features: Option<usize>,
    /// Draw one uniform threshold per feature instead of scanning all cut points.
    pub random_thresholds: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Binary classification tree whose leaves hold the positive-class fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    impurity: f64,
    feature: usize,
    threshold: f64,
}

impl Candidate {
    /// Lower impurity first; ties go to the lower feature, then lower threshold.
    fn better_than(&self, other: &Option<Candidate>) -> bool {
        match other {
            None => true,
            Some(o) => {
                self.impurity < o.impurity
                    || (self.impurity == o.impurity
                        && (self.feature < o.feature
                            || (self.feature == o.feature && self.threshold < o.threshold)))
            }
        }
    }
}

/// n times the Gini impurity of a node holding `pos` positives out of `n`.
fn weighted_gini(n: usize, pos: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    2.0 * pos as f64 * (n - pos) as f64 / n as f64
}

struct Builder<'x, 'a> {
    x: ArrayView2<'x, f64>,
    y: &'a [u8],
    params: &'a TreeParams,
    rng: Rng,
    nodes: Vec<Node>,
    features: Vec<usize>,
    scratch: Vec<(f64, u8)>,
}

impl Builder<'_, '_> {
    fn build(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| self.y[i] == 1).count();
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(pos as f64 / n as f64));

        let depth_ok = self.params.max_depth.map_or(true, |m| depth < m);
        if pos == 0 || pos == n || n < 2 * self.params.min_leaf || !depth_ok {
            return id;
        }
        let Some(best) = self.find_split(idx) else {
            return id;
        };

        let mut split = 0;
        for i in 0..n {
            if self.x[[idx[i], best.feature]] <= best.threshold {
                idx.swap(i, split);
                split += 1;
            }
        }
        let (left_idx, right_idx) = idx.split_at_mut(split);
        let left = self.build(left_idx, depth + 1);
        let right = self.build(right_idx, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn find_split(&mut self, idx: &[usize]) -> Option<Candidate> {
        let d = self.x.ncols();
        let limit = match self.params.max_features {
            Some(m) => {
                self.features.shuffle(&mut self.rng);
                m
            }
            None => {
                self.features.sort_unstable();
                d
            }
        };
        let mut best: Option<Candidate> = None;
        let mut visited = 0;
        for fi in 0..d {
            if visited >= limit {
                break;
            }
            let f = self.features[fi];
            let found = if self.params.random_thresholds {
                self.random_split(idx, f)
            } else {
                self.exhaustive_split(idx, f)
            };
            // constant features do not count towards the budget
            if let Some(result) = found {
                visited += 1;
                if let Some(c) = result {
                    if c.better_than(&best) {
                        best = Some(c);
                    }
                }
            }
        }
        best
    }

    /// `None` if the feature is constant in this node, `Some(None)` if no
    /// cut point satisfies `min_leaf`.
    fn exhaustive_split(&mut self, idx: &[usize], f: usize) -> Option<Option<Candidate>> {
        self.scratch.clear();
        self.scratch
            .extend(idx.iter().map(|&i| (self.x[[i, f]], self.y[i])));
        self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
        let vals = &self.scratch;
        let n = vals.len();
        if vals[0].0 == vals[n - 1].0 {
            return None;
        }
        let total_pos = vals.iter().filter(|v| v.1 == 1).count();
        let min_leaf = self.params.min_leaf;
        let mut left_pos = 0;
        let mut best: Option<Candidate> = None;
        for i in 1..n {
            left_pos += usize::from(vals[i - 1].1);
            if i < min_leaf || n - i < min_leaf || vals[i - 1].0 == vals[i].0 {
                continue;
            }
            let impurity = weighted_gini(i, left_pos) + weighted_gini(n - i, total_pos - left_pos);
            let (a, b) = (vals[i - 1].0, vals[i].0);
            let mut threshold = a + (b - a) / 2.0;
            if threshold >= b {
                threshold = a;
            }
            let c = Candidate {
                impurity,
                feature: f,
                threshold,
            };
            if c.better_than(&best) {
                best = Some(c);
            }
        }
        Some(best)
    }

    fn random_split(&mut self, idx: &[usize], f: usize) -> Option<Option<Candidate>> {
        let (lo, hi) = idx
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = self.x[[i, f]];
                (lo.min(v), hi.max(v))
            });
        if lo == hi {
            return None;
        }
        let threshold = self.rng.gen_range(lo..hi);
        let (mut n_left, mut pos_left, mut pos) = (0, 0, 0);
        for &i in idx {
            let p = usize::from(self.y[i]);
            pos += p;
            if self.x[[i, f]] <= threshold {
                n_left += 1;
                pos_left += p;
            }
        }
        let n = idx.len();
        if n_left < self.params.min_leaf || n - n_left < self.params.min_leaf {
            return Some(None);
        }
        Some(Some(Candidate {
            impurity: weighted_gini(n_left, pos_left) + weighted_gini(n - n_left, pos - pos_left),
            feature: f,
            threshold,
        }))
    }
}

impl Tree {
    /// Grow a tree on the rows listed in `idx` (duplicates allowed, as in a
    /// bootstrap sample).
    pub fn fit(
        x: ArrayView2<f64>,
        y: &[u8],
        idx: &[usize],
        params: &TreeParams,
        seed_value: u64,
    ) -> Tree {
        let mut builder = Builder {
            x,
            y,
            params,
            rng: seed::rng(seed_value),
            nodes: Vec::new(),
            features: (0..x.ncols()).collect(),
            scratch: Vec::with_capacity(idx.len()),
        };
        let mut work = idx.to_vec();
        builder.build(&mut work, 0);
        Tree {
            nodes: builder.nodes,
        }
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if row[feature] <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf(_)))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}
