use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed;

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Node {
    feature: u32,
    threshold: f64,
    left: u32,
    right: u32,
    value: f64,
}

/// CART regression tree grown by variance reduction, without a depth cap.
#[derive(Debug, Clone)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

struct Grower<'a> {
    x: &'a [f64],
    y: &'a [f64],
    d: usize,
    min_leaf: usize,
    max_features: usize,
    /// Row indices sorted by each feature, shared by all trees.
    sorted: Vec<Vec<u32>>,
    /// `recip[k] = 1/k`.
    recip: Vec<f64>,
}

struct Split {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl<'a> Grower<'a> {
    fn new(x: &'a [f64], y: &'a [f64], d: usize, min_leaf: usize, max_features: usize) -> Self {
        let n = y.len();
        let sorted = (0..d)
            .map(|f| {
                let mut o: Vec<u32> = (0..n as u32).collect();
                o.sort_unstable_by(|&a, &b| x[a as usize * d + f].total_cmp(&x[b as usize * d + f]).then(a.cmp(&b)));
                o
            })
            .collect();
        let recip = (0..=n).map(|k| if k == 0 { 0.0 } else { 1.0 / k as f64 }).collect();
        Self { x, y, d, min_leaf, max_features, sorted, recip }
    }

    /// Grows one tree on a bootstrap sample given as per-row multiplicities.
    /// Duplicated rows are kept once with their count as weight; each
    /// feature's member list stays sorted through stable partitions.
    fn grow<R: Rng>(&self, counts: &[u32], rng: &mut R) -> RegressionTree {
        let d = self.d;
        let (x, y) = (self.x, self.y);
        let mut orders: Vec<Vec<u32>> =
            self.sorted.iter().map(|o| o.iter().copied().filter(|&r| counts[r as usize] > 0).collect()).collect();
        let unique = orders[0].len();
        let mut goes_left = vec![false; y.len()];
        let mut buffer: Vec<u32> = Vec::with_capacity(unique);

        let mut nodes: Vec<Node> = Vec::new();
        let mut features: Vec<usize> = (0..d).collect();
        let mut stack = vec![(0usize, 0usize, unique)];
        nodes.push(Node { feature: 0, threshold: 0.0, left: LEAF, right: LEAF, value: 0.0 });

        while let Some((id, start, end)) = stack.pop() {
            let members = &orders[0][start..end];
            let (mut weight, mut sum, mut sum_sq) = (0usize, 0.0, 0.0);
            for &r in members {
                let (c, v) = (counts[r as usize] as f64, y[r as usize]);
                weight += counts[r as usize] as usize;
                sum += c * v;
                sum_sq += c * v * v;
            }
            nodes[id].value = sum * self.recip[weight];
            if weight < 2 * self.min_leaf {
                continue;
            }
            let first = y[members[0] as usize];
            if members.iter().all(|&r| y[r as usize] == first) {
                continue;
            }

            // Partial Fisher-Yates draw of the candidate features.
            for k in 0..self.max_features {
                let j = rng.gen_range(k..d);
                features.swap(k, j);
            }
            let mut best: Option<Split> = None;
            let tolerance = 1e-14 * (sum_sq + 1.0);
            let base = sum * sum * self.recip[weight];
            for &f in &features[..self.max_features] {
                let order = &orders[f][start..end];
                let (mut left_w, mut left_sum) = (0usize, 0.0);
                for pos in 1..order.len() {
                    let prev = order[pos - 1] as usize;
                    let c = counts[prev];
                    left_w += c as usize;
                    left_sum += c as f64 * y[prev];
                    if left_w < self.min_leaf || weight - left_w < self.min_leaf {
                        continue;
                    }
                    let (lo, hi) = (x[prev * d + f], x[order[pos] as usize * d + f]);
                    if lo == hi {
                        continue;
                    }
                    let right_sum = sum - left_sum;
                    let gain = left_sum * left_sum * self.recip[left_w]
                        + right_sum * right_sum * self.recip[weight - left_w]
                        - base;
                    if gain > tolerance && best.as_ref().is_none_or(|b| gain > b.gain) {
                        let mid = 0.5 * (lo + hi);
                        let threshold = if mid < hi { mid } else { lo };
                        best = Some(Split { gain, feature: f, threshold });
                    }
                }
            }
            let Some(split) = best else { continue };

            let mut boundary = 0;
            for &r in &orders[0][start..end] {
                let left = x[r as usize * d + split.feature] <= split.threshold;
                goes_left[r as usize] = left;
                boundary += left as usize;
            }
            for order in orders.iter_mut() {
                let range = &mut order[start..end];
                buffer.resize(range.len(), 0);
                let (mut k, mut j) = (0, 0);
                for i in 0..range.len() {
                    let r = range[i];
                    let left = goes_left[r as usize] as usize;
                    range[k] = r;
                    buffer[j] = r;
                    k += left;
                    j += 1 - left;
                }
                range[k..].copy_from_slice(&buffer[..j]);
            }
            let left = nodes.len();
            nodes.push(Node { feature: 0, threshold: 0.0, left: LEAF, right: LEAF, value: 0.0 });
            nodes.push(Node { feature: 0, threshold: 0.0, left: LEAF, right: LEAF, value: 0.0 });
            nodes[id].feature = split.feature as u32;
            nodes[id].threshold = split.threshold;
            nodes[id].left = left as u32;
            nodes[id].right = left as u32 + 1;
            stack.push((left + 1, start + boundary, end));
            stack.push((left, start, start + boundary));
        }
        RegressionTree { nodes }
    }
}

impl RegressionTree {
    pub fn predict_slice(&self, x: &[f64]) -> f64 {
        let mut node = &self.nodes[0];
        while node.left != LEAF {
            node = if x[node.feature as usize] <= node.threshold {
                &self.nodes[node.left as usize]
            } else {
                &self.nodes[node.right as usize]
            };
        }
        node.value
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.left == LEAF).count()
    }
}

/// Bootstrap-aggregated regression trees. Tree `t` draws its randomness
/// from a seed derived from `(seed, t)`, so results do not depend on how
/// trees are scheduled across threads.
#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<RegressionTree>,
}

impl RandomForest {
    pub fn fit(
        x: ArrayView2<f64>,
        y: &[f64],
        n_trees: usize,
        min_leaf: usize,
        max_features: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        let (n, d) = x.dim();
        if n_trees == 0 || min_leaf == 0 {
            return Err(Error::InvalidLearner("forest needs n_trees >= 1 and min_leaf >= 1".into()));
        }
        let max_features = max_features.unwrap_or_else(|| (d as f64).sqrt().ceil() as usize).clamp(1, d);
        let flat: Vec<f64> = x.iter().copied().collect();
        let grower = Grower::new(&flat, y, d, min_leaf, max_features);
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::rng(seed::derive(seed, t as u64));
                let mut counts = vec![0u32; n];
                for _ in 0..n {
                    counts[rng.gen_range(0..n)] += 1;
                }
                grower.grow(&counts, &mut rng)
            })
            .collect();
        Ok(Self { trees })
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn predict_row(&self, x: ArrayView1<f64>) -> f64 {
        let owned;
        let row = match x.as_slice() {
            Some(s) => s,
            None => {
                owned = x.to_vec();
                &owned
            }
        };
        self.trees.iter().map(|t| t.predict_slice(row)).sum::<f64>() / self.trees.len() as f64
    }
}
