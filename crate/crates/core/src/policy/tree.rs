//! Gradient-boosted regression trees (squared error, depth ≤ 2).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostedTreeParams {
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
}

fn default_depth() -> usize {
    2
}
fn default_rounds() -> usize {
    50
}
fn default_lr() -> f64 {
    0.1
}

impl Default for BoostedTreeParams {
    fn default() -> Self {
        Self {
            max_depth: default_depth(),
            rounds: default_rounds(),
            learning_rate: default_lr(),
        }
    }
}

impl BoostedTreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth > 2 {
            return Err(Error::Config(format!("tree depth {} exceeds 2", self.max_depth)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: Box<Node>, right: Box<Node> },
}

impl Node {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Node::Leaf { value } => *value,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] <= *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<Node>,
}

impl BoostedTrees {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn fit(xs: &[&[f64]], ys: &[f64], params: &BoostedTreeParams) -> Result<Self> {
        params.validate()?;
        let n = ys.len();
        let base = if n == 0 { 0.0 } else { ys.iter().sum::<f64>() / n as f64 };
        let d = xs.first().map_or(0, |x| x.len());
        // Per-feature row order, computed once; child nodes filter it.
        let sorted: Vec<Vec<usize>> = (0..d)
            .map(|f| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&i, &j| xs[i][f].total_cmp(&xs[j][f]).then(i.cmp(&j)));
                idx
            })
            .collect();
        let mut pred = vec![base; n];
        let mut trees = Vec::with_capacity(params.rounds);
        let mut member = vec![true; n];
        for _ in 0..params.rounds {
            let resid: Vec<f64> = ys.iter().zip(&pred).map(|(y, p)| y - p).collect();
            member.iter_mut().for_each(|m| *m = true);
            let tree = grow(xs, &resid, &sorted, &mut member, params.max_depth);
            for (i, x) in xs.iter().enumerate() {
                pred[i] += params.learning_rate * tree.predict(x);
            }
            trees.push(tree);
        }
        Ok(Self {
            base,
            learning_rate: params.learning_rate,
            trees,
        })
    }
}

/// Best split of the rows flagged in `member`: exact search over midpoints
/// of consecutive distinct values. Ties keep the first (feature, threshold).
fn best_split(xs: &[&[f64]], resid: &[f64], sorted: &[Vec<usize>], member: &[bool]) -> Option<(usize, f64, f64)> {
    let rows: Vec<usize> = sorted.first()?.iter().copied().filter(|&i| member[i]).collect();
    let n = rows.len();
    if n < 2 {
        return None;
    }
    let total: f64 = rows.iter().map(|&i| resid[i]).sum();
    let parent = total * total / n as f64;
    let mut best: Option<(usize, f64, f64)> = None;
    for (f, order) in sorted.iter().enumerate() {
        let mut left_sum = 0.0;
        let mut left_n = 0usize;
        let rows_f: Vec<usize> = order.iter().copied().filter(|&i| member[i]).collect();
        for w in rows_f.windows(2) {
            let (i, j) = (w[0], w[1]);
            left_sum += resid[i];
            left_n += 1;
            let (xi, xj) = (xs[i][f], xs[j][f]);
            if xi == xj {
                continue;
            }
            let right_sum = total - left_sum;
            let right_n = n - left_n;
            let gain = left_sum * left_sum / left_n as f64 + right_sum * right_sum / right_n as f64 - parent;
            if gain > 1e-12 && best.map_or(true, |(_, _, g)| gain > g) {
                best = Some((f, 0.5 * (xi + xj), gain));
            }
        }
    }
    best
}

fn leaf(resid: &[f64], member: &[bool]) -> Node {
    let (s, c) = resid
        .iter()
        .zip(member)
        .filter(|(_, m)| **m)
        .fold((0.0, 0usize), |(s, c), (r, _)| (s + r, c + 1));
    Node::Leaf {
        value: if c == 0 { 0.0 } else { s / c as f64 },
    }
}

fn grow(xs: &[&[f64]], resid: &[f64], sorted: &[Vec<usize>], member: &mut [bool], depth: usize) -> Node {
    if depth == 0 {
        return leaf(resid, member);
    }
    let Some((feature, threshold, _)) = best_split(xs, resid, sorted, member) else {
        return leaf(resid, member);
    };
    let saved = member.to_vec();
    for i in 0..member.len() {
        member[i] = saved[i] && xs[i][feature] <= threshold;
    }
    let left = grow(xs, resid, sorted, member, depth - 1);
    for i in 0..member.len() {
        member[i] = saved[i] && xs[i][feature] > threshold;
    }
    let right = grow(xs, resid, sorted, member, depth - 1);
    member.copy_from_slice(&saved);
    Node::Split {
        feature,
        threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}
