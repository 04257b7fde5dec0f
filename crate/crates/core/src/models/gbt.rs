//! Histogram gradient-boosted regression trees with squared error.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::par::{self, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbtHyper {
    pub trees: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    /// L2 penalty on leaf values.
    pub l2: f64,
    /// Histogram bins per feature (at most 256).
    pub bins: usize,
}

impl Default for GbtHyper {
    fn default() -> Self {
        GbtHyper { trees: 300, depth: 10, learning_rate: 0.1, min_leaf: 5, l2: 1.0, bins: 256 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    Leaf(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, z: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    i = if z[feature as usize] <= threshold { left } else { right } as usize;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl GbtModel {
    pub fn predict(&self, z: &[f64]) -> f64 {
        let mut acc = self.base;
        for t in &self.trees {
            acc += self.learning_rate * t.predict(z);
        }
        acc
    }
}

/// Per-feature split thresholds; `x <= thresholds[b]` iff `bin(x) <= b`.
fn thresholds(column: &[f64], max_bins: usize) -> Vec<f64> {
    let mut v: Vec<f64> = column.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    if v.len() <= max_bins {
        v.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    } else {
        let mut t: Vec<f64> = (1..max_bins).map(|j| v[j * v.len() / max_bins - 1]).collect();
        t.dedup();
        t
    }
}

struct Binned {
    n: usize,
    /// Column-major bin codes.
    codes: Vec<Vec<u8>>,
    thresholds: Vec<Vec<f64>>,
}

impl Binned {
    fn new(x: ArrayView2<f64>, max_bins: usize) -> Self {
        let (n, d) = x.dim();
        let mut codes = Vec::with_capacity(d);
        let mut ths = Vec::with_capacity(d);
        for j in 0..d {
            let col: Vec<f64> = x.column(j).iter().copied().collect();
            let t = thresholds(&col, max_bins);
            codes.push(col.iter().map(|&v| t.partition_point(|&th| th < v) as u8).collect());
            ths.push(t);
        }
        Binned { n, codes, thresholds: ths }
    }

    fn n_bins(&self, f: usize) -> usize {
        self.thresholds[f].len() + 1
    }
}

/// Residual sums and counts per (feature, bin).
#[derive(Clone)]
struct Hist {
    sum: Vec<Vec<f64>>,
    count: Vec<Vec<u32>>,
}

impl Hist {
    fn build(b: &Binned, idx: &[u32], r: &[f64], strategy: Strategy) -> Self {
        let d = b.codes.len();
        let strategy = if idx.len() * d < 50_000 { Strategy::Sequential } else { strategy };
        let cols = par::map_range(strategy, d, |f| {
            let mut sum = vec![0.0; b.n_bins(f)];
            let mut count = vec![0u32; b.n_bins(f)];
            let codes = &b.codes[f];
            for &i in idx {
                let c = codes[i as usize] as usize;
                sum[c] += r[i as usize];
                count[c] += 1;
            }
            (sum, count)
        });
        let (sum, count) = cols.into_iter().unzip();
        Hist { sum, count }
    }

    fn minus(&self, other: &Hist) -> Hist {
        let sum = self
            .sum
            .iter()
            .zip(&other.sum)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        let count = self
            .count
            .iter()
            .zip(&other.count)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        Hist { sum, count }
    }
}

struct Builder<'a> {
    b: &'a Binned,
    r: &'a [f64],
    h: GbtHyper,
    strategy: Strategy,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf_value(&self, idx: &[u32]) -> f64 {
        let s: f64 = idx.iter().map(|&i| self.r[i as usize]).sum();
        s / (idx.len() as f64 + self.h.l2)
    }

    fn best_split(&self, hist: &Hist, n: usize) -> Option<(usize, usize)> {
        let lam = self.h.l2;
        let total: f64 = hist.sum[0].iter().sum();
        let parent = total * total / (n as f64 + lam);
        let mut best: Option<(f64, usize, usize)> = None;
        for f in 0..hist.sum.len() {
            let (mut sl, mut nl) = (0.0, 0usize);
            for bin in 0..hist.sum[f].len() - 1 {
                sl += hist.sum[f][bin];
                nl += hist.count[f][bin] as usize;
                let nr = n - nl;
                if nl < self.h.min_leaf {
                    continue;
                }
                if nr < self.h.min_leaf {
                    break;
                }
                let sr = total - sl;
                let gain = sl * sl / (nl as f64 + lam) + sr * sr / (nr as f64 + lam) - parent;
                if gain > 1e-12 * parent.abs().max(1e-300) && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, bin));
                }
            }
        }
        best.map(|(_, f, bin)| (f, bin))
    }

    fn grow(&mut self, idx: &mut [u32], hist: Hist, depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf(0.0));
        let split = if depth < self.h.depth && idx.len() >= 2 * self.h.min_leaf {
            self.best_split(&hist, idx.len())
        } else {
            None
        };
        let Some((f, bin)) = split else {
            self.nodes[id as usize] = Node::Leaf(self.leaf_value(idx));
            return id;
        };
        let codes = &self.b.codes[f];
        let mut mid = 0;
        for k in 0..idx.len() {
            if codes[idx[k] as usize] as usize <= bin {
                idx.swap(mid, k);
                mid += 1;
            }
        }
        let (li, ri) = idx.split_at_mut(mid);
        let (lh, rh) = if li.len() <= ri.len() {
            let l = Hist::build(self.b, li, self.r, self.strategy);
            let r = hist.minus(&l);
            (l, r)
        } else {
            let r = Hist::build(self.b, ri, self.r, self.strategy);
            let l = hist.minus(&r);
            (l, r)
        };
        drop(hist);
        let left = self.grow(li, lh, depth + 1);
        let right = self.grow(ri, rh, depth + 1);
        self.nodes[id as usize] = Node::Split { feature: f as u32, threshold: self.b.thresholds[f][bin], left, right };
        id
    }
}

/// Train; the second value is the training MSE after each round (index 0
/// is the constant base model).
pub fn fit_gbt(x: ArrayView2<f64>, y: &[f64], h: GbtHyper, strategy: Strategy) -> (GbtModel, Vec<f64>) {
    let binned = Binned::new(x, h.bins.clamp(2, 256));
    let n = binned.n;
    let base = y.iter().sum::<f64>() / n as f64;
    let mut f = vec![base; n];
    let loss = |f: &[f64]| f.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64;
    let mut history = vec![loss(&f)];
    let mut trees = Vec::with_capacity(h.trees);
    let mut r = vec![0.0; n];
    let mut idx: Vec<u32> = (0..n as u32).collect();
    for _ in 0..h.trees {
        for i in 0..n {
            r[i] = y[i] - f[i];
        }
        idx.sort_unstable();
        let root = Hist::build(&binned, &idx, &r, strategy);
        let mut bld = Builder { b: &binned, r: &r, h, strategy, nodes: Vec::new() };
        bld.grow(&mut idx, root, 0);
        let tree = Tree { nodes: bld.nodes };
        for i in 0..n {
            f[i] += h.learning_rate * tree.predict(x.row(i).as_slice().expect("row-major"));
        }
        history.push(loss(&f));
        trees.push(tree);
    }
    (GbtModel { base, learning_rate: h.learning_rate, trees }, history)
}
