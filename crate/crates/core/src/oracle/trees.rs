//! Gradient-boosted regression trees on the logistic loss.
//!
//! Splits come from an exact greedy search over every unique feature value
//! present in the node, scored with second-order gain; leaves hold Newton
//! weights `-G / (H + lambda)`. Rows are kept sparse: a feature's zero entries
//! form one implicit group whose statistics are node totals minus the
//! non-zero sums.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{clamp_prob, logit, row_bce, sigmoid, Dataset, OracleError, OracleKind, TrainConfig};
use crate::features::{FeatureVector, Fingerprint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
        gain: f64,
    },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

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

    fn scale_leaves(&mut self, s: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { value } = n {
                *value *= s;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreesOracle {
    pub schema: Fingerprint,
    pub clamp: f64,
    /// Log-odds intercept.
    pub base_score: f64,
    pub shrinkage: f64,
    pub max_depth: usize,
    pub subsample: f64,
    pub trees: Vec<Tree>,
}

impl TreesOracle {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score + self.shrinkage * self.trees.iter().map(|t| t.eval(x)).sum::<f64>()
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<f64, OracleError> {
        if x.schema != self.schema {
            return Err(OracleError::SchemaMismatch {
                expected: self.schema,
                got: x.schema,
            });
        }
        Ok(clamp_prob(sigmoid(self.margin(&x.values)), self.clamp))
    }
}

/// Second-order split gain for children `(gl, hl)` and `(g - gl, h - hl)`.
pub fn split_gain(gl: f64, hl: f64, g: f64, h: f64, lambda: f64) -> f64 {
    let gr = g - gl;
    let hr = h - hl;
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda))
}

/// Sparse rows re-expressed as ranks into each feature's sorted unique values.
struct Binned {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    bins: Vec<u32>,
    values: Vec<Vec<f64>>,
    zero_bin: Vec<Option<u32>>,
}

impl Binned {
    fn new(data: &Dataset) -> Self {
        let nf = data.n_features();
        let n = data.len();
        let mut per_feature: Vec<Vec<f64>> = vec![Vec::new(); nf];
        for i in 0..n {
            let (cols, vals) = data.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                per_feature[c as usize].push(v);
            }
        }
        let mut values = Vec::with_capacity(nf);
        let mut zero_bin = Vec::with_capacity(nf);
        for mut vs in per_feature {
            let nonzero = vs.len();
            vs.sort_by(f64::total_cmp);
            vs.dedup();
            let zb = if nonzero < n {
                let pos = vs.partition_point(|&v| v < 0.0);
                vs.insert(pos, 0.0);
                Some(pos as u32)
            } else {
                None
            };
            values.push(vs);
            zero_bin.push(zb);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols_out = Vec::new();
        let mut bins = Vec::new();
        for i in 0..n {
            let (cols, vals) = data.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let uv = &values[c as usize];
                let b = uv.partition_point(|&u| u < v);
                cols_out.push(c);
                bins.push(b as u32);
            }
            row_ptr.push(cols_out.len());
        }
        Self {
            row_ptr,
            cols: cols_out,
            bins,
            values,
            zero_bin,
        }
    }

    fn bin_of(&self, row: usize, feature: u32) -> u32 {
        let (a, b) = (self.row_ptr[row], self.row_ptr[row + 1]);
        for k in a..b {
            if self.cols[k] == feature {
                return self.bins[k];
            }
        }
        self.zero_bin[feature as usize].expect("implicit zero implies a zero bin")
    }
}

#[derive(Clone, Copy)]
struct BestSplit {
    feature: u32,
    bin: u32,
    gain: f64,
}

struct Builder<'a> {
    binned: &'a Binned,
    grad: &'a [f64],
    hess: &'a [f64],
    max_depth: usize,
    lambda: f64,
    min_child_weight: f64,
    // scratch: per-feature (bin, g, h) entries of the current node
    buffers: Vec<Vec<(u32, f64, f64)>>,
    touched: Vec<u32>,
}

impl Builder<'_> {
    fn build(&mut self, rows: Vec<u32>) -> Tree {
        let mut nodes = Vec::new();
        self.grow(&mut nodes, rows, 0);
        Tree { nodes }
    }

    fn grow(&mut self, nodes: &mut Vec<Node>, rows: Vec<u32>, depth: usize) -> u32 {
        let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &r| {
            (g + self.grad[r as usize], h + self.hess[r as usize])
        });
        let idx = nodes.len() as u32;
        nodes.push(Node::Leaf {
            value: -g / (h + self.lambda),
        });
        if depth >= self.max_depth || rows.len() < 2 {
            return idx;
        }
        let Some(best) = self.find_split(&rows, g, h) else {
            return idx;
        };
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
            .iter()
            .partition(|&&r| self.binned.bin_of(r as usize, best.feature) <= best.bin);
        drop(rows);
        let left = self.grow(nodes, left_rows, depth + 1);
        let right = self.grow(nodes, right_rows, depth + 1);
        nodes[idx as usize] = Node::Split {
            feature: best.feature,
            threshold: self.binned.values[best.feature as usize][best.bin as usize],
            left,
            right,
            gain: best.gain,
        };
        idx
    }

    fn find_split(&mut self, rows: &[u32], g: f64, h: f64) -> Option<BestSplit> {
        let b = self.binned;
        for &r in rows {
            let r = r as usize;
            for k in b.row_ptr[r]..b.row_ptr[r + 1] {
                let c = b.cols[k];
                let buf = &mut self.buffers[c as usize];
                if buf.is_empty() {
                    self.touched.push(c);
                }
                buf.push((b.bins[k], self.grad[r], self.hess[r]));
            }
        }
        self.touched.sort_unstable();

        let mut best: Option<BestSplit> = None;
        let mut groups: Vec<(u32, f64, f64)> = Vec::new();
        for &feature in &self.touched {
            let buf = &mut self.buffers[feature as usize];
            buf.sort_by_key(|e| e.0);
            groups.clear();
            let (mut nz_g, mut nz_h) = (0.0, 0.0);
            let mut nz_count = 0usize;
            for &(bin, eg, eh) in buf.iter() {
                nz_g += eg;
                nz_h += eh;
                nz_count += 1;
                match groups.last_mut() {
                    Some(last) if last.0 == bin => {
                        last.1 += eg;
                        last.2 += eh;
                    }
                    _ => groups.push((bin, eg, eh)),
                }
            }
            if nz_count < rows.len() {
                let zb = b.zero_bin[feature as usize].expect("zero bin");
                let pos = groups.partition_point(|e| e.0 < zb);
                groups.insert(pos, (zb, g - nz_g, h - nz_h));
            }
            buf.clear();
            if groups.len() < 2 {
                continue;
            }
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 0..groups.len() - 1 {
                gl += groups[k].1;
                hl += groups[k].2;
                if hl < self.min_child_weight || h - hl < self.min_child_weight {
                    continue;
                }
                let gain = split_gain(gl, hl, g, h, self.lambda);
                if gain > 0.0 && best.is_none_or(|bs| gain > bs.gain) {
                    best = Some(BestSplit {
                        feature,
                        bin: groups[k].0,
                        gain,
                    });
                }
            }
        }
        self.touched.clear();
        best
    }
}

fn eval_binned(tree: &Tree, binned: &Binned, row: usize) -> f64 {
    let mut i = 0usize;
    loop {
        match &tree.nodes[i] {
            Node::Leaf { value } => return *value,
            Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                let bin = binned.bin_of(row, *feature);
                let v = binned.values[*feature as usize][bin as usize];
                i = if v <= *threshold {
                    *left as usize
                } else {
                    *right as usize
                };
            }
        }
    }
}

fn weighted_loss(data: &Dataset, margins: &[f64], clamp: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &m) in margins.iter().enumerate() {
        let w = data.weight(i);
        num += w * row_bce(clamp_prob(sigmoid(m), clamp), data.labels()[i]);
        den += w;
    }
    num / den.max(f64::MIN_POSITIVE)
}

pub fn train_trees(data: &Dataset, cfg: &TrainConfig) -> Result<TreesOracle, OracleError> {
    train_trees_traced(data, cfg).map(|(m, _)| m)
}

/// Train and return the full-data training loss before round 1 and after
/// every round. Each tree's leaves are halved until the loss does not
/// increase, so the trace is non-increasing.
pub fn train_trees_traced(
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(TreesOracle, Vec<f64>), OracleError> {
    cfg.validate()?;
    if cfg.kind != OracleKind::Trees {
        return Err(OracleError::Config("expected kind = trees".into()));
    }
    if data.is_empty() {
        return Err(OracleError::Empty);
    }
    let n = data.len();
    let clamp = cfg.probability_clamp;
    let base_score = logit(clamp_prob(data.positive_rate(), clamp));
    let mut oracle = TreesOracle {
        schema: data.schema(),
        clamp,
        base_score,
        shrinkage: cfg.step,
        max_depth: cfg.max_depth,
        subsample: cfg.subsample,
        trees: Vec::with_capacity(cfg.rounds),
    };
    let mut margins = vec![base_score; n];
    let mut loss = weighted_loss(data, &margins, clamp);
    let mut history = vec![loss];
    if cfg.rounds == 0 {
        return Ok((oracle, history));
    }

    let binned = Binned::new(data);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut buffers = vec![Vec::new(); data.n_features()];
    let sample_size = ((cfg.subsample * n as f64).floor() as usize).clamp(1, n);
    let mut pool: Vec<u32> = (0..n as u32).collect();
    let mut delta = vec![0.0; n];
    let mut trial = vec![0.0; n];

    for _ in 0..cfg.rounds {
        for i in 0..n {
            let w = data.weight(i);
            let p = sigmoid(margins[i]);
            grad[i] = w * (p - f64::from(data.labels()[i]));
            hess[i] = w * (p * (1.0 - p)).max(1e-16);
        }
        let rows: Vec<u32> = if sample_size < n {
            for k in 0..sample_size {
                let j = rng.random_range(k..n);
                pool.swap(k, j);
            }
            let mut s = pool[..sample_size].to_vec();
            s.sort_unstable();
            s
        } else {
            (0..n as u32).collect()
        };
        let mut builder = Builder {
            binned: &binned,
            grad: &grad,
            hess: &hess,
            max_depth: cfg.max_depth,
            lambda: cfg.lambda,
            min_child_weight: cfg.min_child_weight,
            buffers: std::mem::take(&mut buffers),
            touched: Vec::new(),
        };
        let mut tree = builder.build(rows);
        buffers = builder.buffers;

        for (i, d) in delta.iter_mut().enumerate() {
            *d = cfg.step * eval_binned(&tree, &binned, i);
        }
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..n {
                trial[i] = margins[i] + scale * delta[i];
            }
            let candidate = weighted_loss(data, &trial, clamp);
            if candidate <= loss {
                loss = candidate;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if accepted {
            std::mem::swap(&mut margins, &mut trial);
            if scale != 1.0 {
                tree.scale_leaves(scale);
            }
        } else {
            tree.scale_leaves(0.0);
        }
        history.push(loss);
        oracle.trees.push(tree);
    }
    Ok((oracle, history))
}
