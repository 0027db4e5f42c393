//! A single axis-aligned Gini decision tree.

use super::N_CLASSES;
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    /// `x[dim] <= threshold` goes left.
    Split {
        dim: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    /// Class distribution of the training samples in the leaf.
    Leaf { probs: [f64; N_CLASSES] },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    pub(crate) nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf(&self, x: &[f64]) -> &[f64; N_CLASSES] {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { probs } => return probs,
                Node::Split {
                    dim,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*dim as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    /// Depth of the deepest leaf (root = 0).
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

pub(crate) struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub features_per_split: usize,
}

/// Training rows of one tree: the bootstrap multiset, as indices into `x`.
pub(crate) struct Grower<'a, R: Rng> {
    pub x: &'a [&'a [f64]],
    pub y: &'a [u8],
    /// Distinct values of every dimension over all training rows, sorted.
    pub columns: &'a [Vec<f64>],
    pub config: &'a TreeConfig,
    pub rng: &'a mut R,
    pub n_features: usize,
    /// Impurity decrease credited to each dimension, unnormalised.
    pub decrease: Vec<f64>,
    nodes: Vec<Node>,
}

fn gini(counts: &[f64; N_CLASSES], n: f64) -> f64 {
    1.0 - counts.iter().map(|c| (c / n) * (c / n)).sum::<f64>()
}


struct Candidate {
    dim: usize,
    threshold: f64,
    gain: f64,
}

impl<'a, R: Rng> Grower<'a, R> {
    pub fn new(
        x: &'a [&'a [f64]],
        y: &'a [u8],
        columns: &'a [Vec<f64>],
        config: &'a TreeConfig,
        rng: &'a mut R,
        n_features: usize,
    ) -> Self {
        Grower {
            x,
            y,
            columns,
            config,
            rng,
            n_features,
            decrease: vec![0.0; n_features],
            nodes: Vec::new(),
        }
    }

    pub fn grow(mut self, mut rows: Vec<usize>) -> (Tree, Vec<f64>) {
        self.nodes.push(Node::Leaf {
            probs: [0.0; N_CLASSES],
        });
        let mut stack = vec![(0usize, 0usize, rows.len())];
        let mut depth_of = vec![0usize];
        while let Some((node, lo, hi)) = stack.pop() {
            let depth = depth_of[node];
            let part = &mut rows[lo..hi];
            let mut counts = [0.0; N_CLASSES];
            for &r in part.iter() {
                counts[self.y[r] as usize] += 1.0;
            }
            let n = part.len() as f64;
            let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
            let split = if pure
                || depth >= self.config.max_depth
                || part.len() < 2 * self.config.min_samples_leaf
            {
                None
            } else {
                self.best_split(part, &counts)
            };
            let Some(c) = split else {
                self.nodes[node] = Node::Leaf {
                    probs: counts.map(|k| k / n),
                };
                continue;
            };
            self.decrease[c.dim] += c.gain;
            let x = self.x;
            // Stable partition keeps bootstrap order, so growth is deterministic.
            let (mut left, mut right): (Vec<usize>, Vec<usize>) =
                part.iter().partition(|&&r| x[r][c.dim] <= c.threshold);
            let mid = lo + left.len();
            left.append(&mut right);
            part.copy_from_slice(&left);
            let (l, r) = (self.nodes.len(), self.nodes.len() + 1);
            self.nodes.push(Node::Leaf {
                probs: [0.0; N_CLASSES],
            });
            self.nodes.push(Node::Leaf {
                probs: [0.0; N_CLASSES],
            });
            depth_of.extend([depth + 1, depth + 1]);
            self.nodes[node] = Node::Split {
                dim: c.dim as u32,
                threshold: c.threshold,
                left: l as u32,
                right: r as u32,
            };
            stack.push((r, mid, hi));
            stack.push((l, lo, mid));
        }
        (Tree { nodes: self.nodes }, self.decrease)
    }

    /// Best split over a random subset of `features_per_split` dimensions;
    /// if none of them separates the node, further dimensions are tried in
    /// the same random order until one does.
    fn best_split(&mut self, rows: &[usize], counts: &[f64; N_CLASSES]) -> Option<Candidate> {
        let d = self.n_features;
        let mut dims: Vec<usize> = (0..d).collect();
        for i in 0..d {
            let j = self.rng.random_range(i..d);
            dims.swap(i, j);
        }
        let k = self.config.features_per_split.min(d);
        let mut first: Vec<usize> = dims[..k].to_vec();
        first.sort_unstable();
        let mut best: Option<Candidate> = None;
        for &dim in &first {
            if let Some(c) = self.best_on_dim(rows, counts, dim) {
                let better = match &best {
                    None => true,
                    Some(b) => c.gain > b.gain,
                };
                if better {
                    best = Some(c);
                }
            }
        }
        if best.is_some() {
            return best;
        }
        dims[k..]
            .iter()
            .find_map(|&dim| self.best_on_dim(rows, counts, dim))
    }

    /// Highest-gain cut on one dimension (lowest cut on ties). Between the
    /// node values `a < b` either side of the cut, the threshold is the
    /// median of the training values in `[a, b)`. It is always a training
    /// value, so a strictly increasing rescaling of a dimension never
    /// changes which side any query lands on, and out-of-bag rows still get
    /// a margin on both sides.
    fn best_on_dim(
        &self,
        rows: &[usize],
        counts: &[f64; N_CLASSES],
        dim: usize,
    ) -> Option<Candidate> {
        let mut vals: Vec<(f64, u8)> = rows.iter().map(|&r| (self.x[r][dim], self.y[r])).collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = vals.len();
        let nf = n as f64;
        let parent = nf * gini(counts, nf);
        let min_leaf = self.config.min_samples_leaf.max(1);
        let mut left = [0.0; N_CLASSES];
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n - 1 {
            left[vals[i].1 as usize] += 1.0;
            if vals[i].0 == vals[i + 1].0 {
                continue;
            }
            let nl = i + 1;
            if nl < min_leaf || n - nl < min_leaf {
                continue;
            }
            let mut right = *counts;
            for (r, l) in right.iter_mut().zip(&left) {
                *r -= l;
            }
            let (nlf, nrf) = (nl as f64, (n - nl) as f64);
            let gain = parent - nlf * gini(&left, nlf) - nrf * gini(&right, nrf);
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((i, gain));
            }
        }
        let (i, gain) = best?;
        let col = &self.columns[dim];
        let lo = col.partition_point(|&v| v < vals[i].0);
        let hi = col.partition_point(|&v| v < vals[i + 1].0);
        Some(Candidate {
            dim,
            threshold: col[(lo + hi) / 2],
            gain,
        })
    }
}
