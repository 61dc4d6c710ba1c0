//! Exact greedy regression/classification trees over presorted columns.
//!
//! Each row carries two statistics `(a, b)`; a split criterion scores a
//! node from the sums of both. Gradient boosting uses `(gradient,
//! hessian)` with a Newton score, the random forest uses `(w·y, w)` with
//! weighted Gini impurity. Each feature keeps its own row order sorted by
//! value; a node owns the same index range in every order, and splitting
//! stably partitions that range so children stay sorted.

use rand::seq::index::sample;
use rand::Rng;

pub(crate) const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    /// Split feature, or `u32::MAX` for a leaf.
    pub feature: u32,
    /// Rows with `x <= threshold` go left.
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    pub value: f64,
}

impl Node {
    fn leaf(value: f64) -> Node {
        Node {
            feature: LEAF,
            threshold: 0.0,
            left: 0,
            right: 0,
            value,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let n = &self.nodes[i];
            if n.is_leaf() {
                return n.value;
            }
            i = if row[n.feature as usize] <= n.threshold {
                n.left as usize
            } else {
                n.right as usize
            };
        }
    }

    pub fn leaves_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.nodes.iter_mut().filter(|n| n.is_leaf()).map(|n| &mut n.value)
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + go(t, n.left as usize).max(go(t, n.right as usize))
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    /// `a = gradient`, `b = hessian`; score `a² / (b + λ)`, leaf `-a / (b + λ)`.
    Newton { lambda: f64 },
    /// `a = weighted positives`, `b = weight`; score is minus the weighted
    /// Gini impurity, leaf is the positive fraction.
    Gini,
}

impl Criterion {
    fn score(self, a: f64, b: f64) -> f64 {
        match self {
            Criterion::Newton { lambda } => a * a / (b + lambda),
            Criterion::Gini => {
                if b <= 0.0 {
                    0.0
                } else {
                    -2.0 * a * (b - a) / b
                }
            }
        }
    }

    fn leaf(self, a: f64, b: f64) -> f64 {
        match self {
            Criterion::Newton { lambda } => -a / (b + lambda),
            Criterion::Gini => {
                if b <= 0.0 {
                    0.0
                } else {
                    a / b
                }
            }
        }
    }
}

/// Per-feature row indices sorted by value (ties by row index).
pub fn presort(columns: &[Vec<f64>]) -> Vec<Vec<u32>> {
    crate::exec::map(columns, |col| {
        let mut idx: Vec<u32> = (0..col.len() as u32).collect();
        idx.sort_by(|&x, &y| col[x as usize].total_cmp(&col[y as usize]).then(x.cmp(&y)));
        idx
    })
}

pub struct TreeParams {
    pub criterion: Criterion,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Fraction of features examined at each split.
    pub feature_fraction: f64,
}

const MIN_GAIN: f64 = 1e-12;
/// Node sizes above which split search runs in parallel over features.
const PARALLEL_SPLIT_WORK: usize = 200_000;

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
    n_left: usize,
}

struct Builder<'a> {
    columns: &'a [Vec<f64>],
    a: &'a [f64],
    b: &'a [f64],
    params: &'a TreeParams,
    orders: Vec<Vec<u32>>,
    go_left: Vec<bool>,
    scratch: Vec<u32>,
    nodes: Vec<Node>,
}

/// Grows one tree. `sorted` holds, per feature, the rows taking part in
/// this tree in ascending value order.
pub fn grow<R: Rng>(
    columns: &[Vec<f64>],
    a: &[f64],
    b: &[f64],
    sorted: Vec<Vec<u32>>,
    params: &TreeParams,
    rng: &mut R,
) -> Tree {
    let n_rows = columns.first().map_or(0, Vec::len);
    let active = sorted.first().map_or(0, Vec::len);
    let mut builder = Builder {
        columns,
        a,
        b,
        params,
        orders: sorted,
        go_left: vec![false; n_rows],
        scratch: Vec::with_capacity(active),
        nodes: Vec::new(),
    };
    builder.node(0, active, 0, rng);
    Tree { nodes: builder.nodes }
}

impl Builder<'_> {
    fn sums(&self, lo: usize, hi: usize) -> (f64, f64) {
        self.orders[0][lo..hi].iter().fold((0.0, 0.0), |(sa, sb), &r| {
            (sa + self.a[r as usize], sb + self.b[r as usize])
        })
    }

    fn node<R: Rng>(&mut self, lo: usize, hi: usize, depth: usize, rng: &mut R) -> u32 {
        let id = self.nodes.len() as u32;
        let (sa, sb) = self.sums(lo, hi);
        let crit = self.params.criterion;
        self.nodes.push(Node::leaf(crit.leaf(sa, sb)));
        if depth >= self.params.max_depth || hi - lo < 2 * self.params.min_samples_leaf.max(1) {
            return id;
        }
        let Some(split) = self.best_split(lo, hi, sa, sb, rng) else {
            return id;
        };
        self.partition(lo, hi, &split);
        let mid = lo + split.n_left;
        let left = self.node(lo, mid, depth + 1, rng);
        let right = self.node(mid, hi, depth + 1, rng);
        self.nodes[id as usize] = Node {
            feature: split.feature as u32,
            threshold: split.threshold,
            left,
            right,
            value: self.nodes[id as usize].value,
        };
        id
    }

    fn candidate_features<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        let f = self.columns.len();
        let m = ((self.params.feature_fraction * f as f64).ceil() as usize).clamp(1, f);
        if m == f {
            return (0..f).collect();
        }
        let mut picked = sample(rng, f, m).into_vec();
        picked.sort_unstable();
        picked
    }

    fn best_split<R: Rng>(&self, lo: usize, hi: usize, sa: f64, sb: f64, rng: &mut R) -> Option<Split> {
        let features = self.candidate_features(rng);
        let parent = self.params.criterion.score(sa, sb);
        let scan = |f: usize| self.scan_feature(f, lo, hi, sa, sb, parent);
        let found: Vec<Option<Split>> = if (hi - lo) * features.len() >= PARALLEL_SPLIT_WORK {
            crate::exec::map(&features, |&f| scan(f))
        } else {
            features.iter().map(|&f| scan(f)).collect()
        };
        // features ascend, so strict comparison keeps the lowest index on ties
        found
            .into_iter()
            .flatten()
            .fold(None, |best: Option<Split>, s| match best {
                Some(b) if b.gain >= s.gain => Some(b),
                _ => Some(s),
            })
    }

    fn scan_feature(&self, f: usize, lo: usize, hi: usize, sa: f64, sb: f64, parent: f64) -> Option<Split> {
        let col = &self.columns[f];
        let order = &self.orders[f][lo..hi];
        let crit = self.params.criterion;
        let min_leaf = self.params.min_samples_leaf.max(1);
        let n = order.len();
        let (mut la, mut lb) = (0.0, 0.0);
        let mut best: Option<Split> = None;
        for i in 0..n - 1 {
            let r = order[i] as usize;
            la += self.a[r];
            lb += self.b[r];
            let (x, next) = (col[r], col[order[i + 1] as usize]);
            if x >= next || i + 1 < min_leaf || n - i - 1 < min_leaf {
                continue;
            }
            let gain = crit.score(la, lb) + crit.score(sa - la, sb - lb) - parent;
            if gain > MIN_GAIN && best.as_ref().is_none_or(|b| gain > b.gain) {
                let mid = 0.5 * (x + next);
                let threshold = if mid < next { mid } else { x };
                best = Some(Split {
                    feature: f,
                    threshold,
                    gain,
                    n_left: i + 1,
                });
            }
        }
        best
    }

    fn partition(&mut self, lo: usize, hi: usize, split: &Split) {
        let col = &self.columns[split.feature];
        for &r in &self.orders[split.feature][lo..hi] {
            self.go_left[r as usize] = col[r as usize] <= split.threshold;
        }
        for order in &mut self.orders {
            let seg = &mut order[lo..hi];
            self.scratch.clear();
            let mut w = 0;
            for i in 0..seg.len() {
                let r = seg[i];
                if self.go_left[r as usize] {
                    seg[w] = r;
                    w += 1;
                } else {
                    self.scratch.push(r);
                }
            }
            seg[w..].copy_from_slice(&self.scratch);
            debug_assert_eq!(w, split.n_left);
        }
    }
}
