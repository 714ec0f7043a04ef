use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use super::{Model, TrainingTask};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

/// Candidate split points per feature and each observation's bin.
///
/// Observation `i` falls in bin `b` of feature `f` when exactly `b` cut
/// points lie strictly below its value, so "bin ≤ b" is "x ≤ cuts[b]".
pub(crate) struct Binned {
    pub cuts: Vec<Vec<f64>>,
    pub codes: Vec<Vec<u32>>,
}

impl Binned {
    /// Cut points at midpoints between distinct values, thinned to at most
    /// `max_bins - 1` cuts at evenly spaced ranks when `max_bins` is set.
    pub fn new(x: &Matrix, max_bins: Option<usize>) -> Self {
        let mut cuts = Vec::with_capacity(x.ncols());
        let mut codes = Vec::with_capacity(x.ncols());
        for j in 0..x.ncols() {
            let col = x.column(j);
            let mut sorted = col.to_vec();
            sorted.sort_by(|a, b| a.total_cmp(b));
            let mut c: Vec<f64> = Vec::new();
            match max_bins {
                Some(b) if count_distinct(&sorted) > b => {
                    let n = sorted.len();
                    for k in 1..b {
                        let r = (k * n) / b;
                        if r == 0 || r >= n || sorted[r - 1] == sorted[r] {
                            // move to the next change of value at or after r
                            let mut s = r.max(1);
                            while s < n && sorted[s - 1] == sorted[s] {
                                s += 1;
                            }
                            if s >= n {
                                continue;
                            }
                            let cut = 0.5 * (sorted[s - 1] + sorted[s]);
                            if c.last().is_none_or(|&l| cut > l) {
                                c.push(cut);
                            }
                        } else {
                            let cut = 0.5 * (sorted[r - 1] + sorted[r]);
                            if c.last().is_none_or(|&l| cut > l) {
                                c.push(cut);
                            }
                        }
                    }
                }
                _ => {
                    for k in 1..sorted.len() {
                        if sorted[k] > sorted[k - 1] {
                            c.push(0.5 * (sorted[k - 1] + sorted[k]));
                        }
                    }
                }
            }
            codes.push(col.iter().map(|&v| c.partition_point(|&q| q < v) as u32).collect());
            cuts.push(c);
        }
        Binned { cuts, codes }
    }
}

fn count_distinct(sorted: &[f64]) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    1 + sorted.windows(2).filter(|w| w[1] > w[0]).count()
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        cut: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_row(&self, x: &Matrix, i: usize) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    cut,
                    left,
                    right,
                } => k = if x.get(i, feature) <= cut { left } else { right },
            }
        }
    }

    fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.nrows()).map(|i| self.predict_row(x, i)).collect()
    }
}

pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_leaf: f64,
    /// Minimum gain relative to the root sum of squares.
    pub cp: f64,
    /// Features tried per node; `None` tries all.
    pub mtry: Option<usize>,
}

struct Grower<'a> {
    bins: &'a Binned,
    y: &'a [f64],
    w: &'a [f64],
    params: &'a GrowParams,
    min_gain: f64,
    nodes: Vec<Node>,
    importance: Vec<f64>,
    hist_w: Vec<f64>,
    hist_s: Vec<f64>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    bin: u32,
}

impl Grower<'_> {
    fn grow(&mut self, idx: &mut [u32], depth: usize, rng: &mut impl Rng) -> usize {
        let (mut sw, mut s, mut ss) = (0.0, 0.0, 0.0);
        for &i in idx.iter() {
            let (wi, yi) = (self.w[i as usize], self.y[i as usize]);
            sw += wi;
            s += wi * yi;
            ss += wi * yi * yi;
        }
        let value = if sw > 0.0 { s / sw } else { 0.0 };
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf(value));
        let sse = ss - s * s / sw;
        if depth >= self.params.max_depth || sw < 2.0 * self.params.min_leaf || sse <= 1e-12 * ss.abs().max(1e-300) {
            return me;
        }
        let Some(best) = self.best_split(idx, sw, s, rng) else {
            return me;
        };
        if best.gain <= self.min_gain {
            return me;
        }
        let codes = &self.bins.codes[best.feature];
        let mut lo = 0;
        for k in 0..idx.len() {
            if codes[idx[k] as usize] <= best.bin {
                idx.swap(lo, k);
                lo += 1;
            }
        }
        self.importance[best.feature] += best.gain;
        let cut = self.bins.cuts[best.feature][best.bin as usize];
        let (l_idx, r_idx) = idx.split_at_mut(lo);
        let left = self.grow(l_idx, depth + 1, rng);
        let right = self.grow(r_idx, depth + 1, rng);
        self.nodes[me] = Node::Split {
            feature: best.feature,
            cut,
            left,
            right,
        };
        me
    }

    fn best_split(&mut self, idx: &[u32], sw: f64, s: f64, rng: &mut impl Rng) -> Option<BestSplit> {
        let p = self.bins.codes.len();
        let features: Vec<usize> = match self.params.mtry {
            Some(m) if m < p => {
                let mut f = sample(rng, p, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        };
        let base = s * s / sw;
        let min_leaf = self.params.min_leaf.max(f64::MIN_POSITIVE);
        let mut best: Option<BestSplit> = None;
        for f in features {
            let nb = self.bins.cuts[f].len() + 1;
            if nb < 2 {
                continue;
            }
            let codes = &self.bins.codes[f];
            self.hist_w[..nb].iter_mut().for_each(|v| *v = 0.0);
            self.hist_s[..nb].iter_mut().for_each(|v| *v = 0.0);
            for &i in idx {
                let c = codes[i as usize] as usize;
                let wi = self.w[i as usize];
                self.hist_w[c] += wi;
                self.hist_s[c] += wi * self.y[i as usize];
            }
            let (mut wl, mut sl) = (0.0, 0.0);
            for b in 0..nb - 1 {
                if self.hist_w[b] == 0.0 {
                    continue;
                }
                wl += self.hist_w[b];
                sl += self.hist_s[b];
                let wr = sw - wl;
                if wl < min_leaf || wr < min_leaf {
                    continue;
                }
                let sr = s - sl;
                let gain = sl * sl / wl + sr * sr / wr - base;
                if best.as_ref().is_none_or(|bs| gain > bs.gain) {
                    best = Some(BestSplit {
                        gain,
                        feature: f,
                        bin: b as u32,
                    });
                }
            }
        }
        best
    }
}

/// Grows one regression tree on the observations with positive weight.
pub(crate) fn grow_tree(
    bins: &Binned,
    y: &[f64],
    w: &[f64],
    params: &GrowParams,
    rng: &mut impl Rng,
) -> (Tree, Vec<f64>) {
    let mut idx: Vec<u32> = (0..y.len() as u32).filter(|&i| w[i as usize] > 0.0).collect();
    let (mut sw, mut s, mut ss) = (0.0, 0.0, 0.0);
    for &i in &idx {
        let (wi, yi) = (w[i as usize], y[i as usize]);
        sw += wi;
        s += wi * yi;
        ss += wi * yi * yi;
    }
    let root_sse = (ss - s * s / sw.max(f64::MIN_POSITIVE)).max(0.0);
    let max_bins = bins.cuts.iter().map(|c| c.len() + 1).max().unwrap_or(1);
    let mut g = Grower {
        bins,
        y,
        w,
        params,
        min_gain: (params.cp * root_sse).max(1e-12 * root_sse),
        nodes: Vec::new(),
        importance: vec![0.0; bins.codes.len()],
        hist_w: vec![0.0; max_bins],
        hist_s: vec![0.0; max_bins],
    };
    g.grow(&mut idx, 0, rng);
    (Tree { nodes: g.nodes }, g.importance)
}

#[derive(Debug)]
pub(crate) struct CartModel(Tree);

impl Model for CartModel {
    fn predict(&self, x: &Matrix) -> Vec<f64> {
        self.0.predict(x)
    }
}

pub(crate) fn fit_cart(task: &TrainingTask, max_depth: usize, min_leaf: f64, cp: f64) -> Result<CartModel> {
    let bins = Binned::new(&task.x, None);
    let params = GrowParams {
        max_depth,
        min_leaf,
        cp,
        mtry: None,
    };
    let mut rng = seed::rng(0, &[]);
    let (tree, _) = grow_tree(&bins, &task.y, &task.w, &params, &mut rng);
    Ok(CartModel(tree))
}

#[derive(Debug)]
pub(crate) struct ForestModel {
    trees: Vec<Tree>,
}

impl Model for ForestModel {
    fn predict(&self, x: &Matrix) -> Vec<f64> {
        let mut out = vec![0.0; x.nrows()];
        for t in &self.trees {
            for (o, v) in out.iter_mut().zip(t.predict(x)) {
                *o += v;
            }
        }
        let k = self.trees.len() as f64;
        out.iter_mut().for_each(|v| *v /= k);
        out
    }
}

/// Bootstrap forest; returns the model and per-feature impurity importance.
pub(crate) fn grow_forest(
    task: &TrainingTask,
    trees: usize,
    mtry: Option<usize>,
    min_leaf: f64,
    max_bins: usize,
    seed: u64,
) -> Result<(ForestModel, Vec<f64>)> {
    let p = task.p();
    let n = task.n();
    let bins = Binned::new(&task.x, Some(max_bins));
    let params = GrowParams {
        max_depth: usize::MAX,
        min_leaf,
        cp: 0.0,
        mtry: Some(mtry.unwrap_or_else(|| (p as f64).sqrt().ceil() as usize).clamp(1, p.max(1))),
    };
    let grown: Vec<(Tree, Vec<f64>)> = (0..trees)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed::rng(seed, &[b as u64]);
            let mut counts = vec![0u32; n];
            for _ in 0..n {
                counts[rng.random_range(0..n)] += 1;
            }
            let w: Vec<f64> = counts.iter().zip(&task.w).map(|(&c, &wi)| f64::from(c) * wi).collect();
            grow_tree(&bins, &task.y, &w, &params, &mut rng)
        })
        .collect();
    let mut importance = vec![0.0; p];
    let mut out = Vec::with_capacity(trees);
    for (t, imp) in grown {
        importance.iter_mut().zip(imp).for_each(|(a, b)| *a += b);
        out.push(t);
    }
    if out.is_empty() {
        return Err(Error::learner("random_forest", "no trees grown"));
    }
    Ok((ForestModel { trees: out }, importance))
}

pub(crate) fn fit_forest(
    task: &TrainingTask,
    trees: usize,
    mtry: Option<usize>,
    min_leaf: f64,
    max_bins: usize,
    seed: u64,
) -> Result<ForestModel> {
    grow_forest(task, trees, mtry, min_leaf, max_bins, seed).map(|(m, _)| m)
}

#[derive(Debug)]
pub(crate) struct BoostModel {
    init: f64,
    shrinkage: f64,
    trees: Vec<Tree>,
}

impl Model for BoostModel {
    fn predict(&self, x: &Matrix) -> Vec<f64> {
        let mut out = vec![self.init; x.nrows()];
        for t in &self.trees {
            for (o, v) in out.iter_mut().zip(t.predict(x)) {
                *o += self.shrinkage * v;
            }
        }
        out
    }
}

/// Squared-error gradient boosting with row subsampling.
pub(crate) fn fit_gbm(
    task: &TrainingTask,
    trees: usize,
    depth: usize,
    shrinkage: f64,
    subsample: f64,
    seed: u64,
) -> Result<BoostModel> {
    let n = task.n();
    let bins = Binned::new(&task.x, Some(64));
    let params = GrowParams {
        max_depth: depth,
        min_leaf: 10.0,
        cp: 0.0,
        mtry: None,
    };
    let init = crate::stats::weighted_mean(&task.y, &task.w);
    let mut f = vec![init; n];
    let mut out = Vec::with_capacity(trees);
    let m = ((subsample * n as f64).round() as usize).clamp(1, n);
    for b in 0..trees {
        let mut rng = seed::rng(seed, &[b as u64]);
        let r: Vec<f64> = task.y.iter().zip(&f).map(|(y, fi)| y - fi).collect();
        let mut w = vec![0.0; n];
        for i in sample(&mut rng, n, m) {
            w[i] = task.w[i];
        }
        let (t, _) = grow_tree(&bins, &r, &w, &params, &mut rng);
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += shrinkage * t.predict_row(&task.x, i);
        }
        out.push(t);
    }
    Ok(BoostModel {
        init,
        shrinkage,
        trees: out,
    })
}
