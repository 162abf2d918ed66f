//! Random survival forest: bootstrap survival trees split on the log-rank
//! statistic, with per-leaf survival curves averaged across trees.

use ndarray::ArrayView2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::km::{check_samples, km_fit};
use crate::domain::SurvivalCurve;
use crate::error::{Error, Result};

/// Per-leaf survival estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafEstimator {
    /// Product-limit curve of the leaf's samples.
    #[default]
    KaplanMeier,
    /// `exp(-H)` with `H` the Nelson-Aalen cumulative hazard.
    NelsonAalen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RsfHyperparams {
    pub n_trees: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Candidate features per split; `None` means `ceil(sqrt(p))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub leaf_estimator: LeafEstimator,
    pub seed: u64,
}

impl Default for RsfHyperparams {
    fn default() -> Self {
        RsfHyperparams {
            n_trees: 100,
            min_samples_split: 10,
            min_samples_leaf: 5,
            features_per_split: None,
            bootstrap: true,
            leaf_estimator: LeafEstimator::KaplanMeier,
            seed: 0,
        }
    }
}

impl RsfHyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_samples_split == 0 || self.min_samples_leaf == 0 {
            return Err(Error::Config(
                "forest hyperparameters must be positive".into(),
            ));
        }
        if self.features_per_split == Some(0) {
            return Err(Error::Config("features_per_split must be positive".into()));
        }
        if self.min_samples_leaf > self.min_samples_split {
            return Err(Error::Config(format!(
                "min_samples_leaf {} exceeds min_samples_split {}",
                self.min_samples_leaf, self.min_samples_split
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Survival at each point of the forest grid.
        values: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf_for(&self, z: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if z[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { values } => return values,
            }
        }
    }

    fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomSurvivalForest {
    /// 0 followed by the distinct training event times.
    grid: Vec<f64>,
    trees: Vec<Tree>,
    n_features: usize,
}

impl RandomSurvivalForest {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_leaves(&self) -> Vec<usize> {
        self.trees.iter().map(Tree::n_leaves).collect()
    }

    /// Mean of the per-tree leaf curves.
    pub fn predict(&self, z: &[f64]) -> SurvivalCurve {
        let mut acc = vec![0.0; self.grid.len()];
        for tree in &self.trees {
            for (a, v) in acc.iter_mut().zip(tree.leaf_for(z)) {
                *a += v;
            }
        }
        let b = self.trees.len() as f64;
        let mut values: Vec<f64> = acc.into_iter().map(|a| a / b).collect();
        values[0] = 1.0;
        SurvivalCurve::new(self.grid.clone(), values).expect("averaged curves are valid")
    }
}

/// Sample data shared by all trees.
struct Training<'a> {
    x: ArrayView2<'a, f64>,
    events: &'a [bool],
    times: &'a [f64],
    /// Number of forest grid event times `<= t_i` for each sample.
    rank: Vec<usize>,
    grid: Vec<f64>,
}

pub fn rsf_fit(
    x: ArrayView2<f64>,
    times: &[f64],
    events: &[bool],
    params: &RsfHyperparams,
) -> Result<RandomSurvivalForest> {
    check_samples(times, events)?;
    params.validate()?;
    if x.nrows() != times.len() {
        return Err(Error::InvalidInput(format!(
            "{} feature rows for {} samples",
            x.nrows(),
            times.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("features"));
    }
    if !events.iter().any(|&e| e) {
        return Err(Error::NoEvents);
    }
    if times.len() < params.min_samples_split {
        log::debug!(
            "{} samples below min_samples_split {}; trees are single leaves",
            times.len(),
            params.min_samples_split
        );
    }

    let mut event_times: Vec<f64> = times
        .iter()
        .zip(events)
        .filter(|(_, &e)| e)
        .map(|(&t, _)| t)
        .collect();
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();
    let rank = times
        .iter()
        .map(|&t| event_times.partition_point(|&e| e <= t))
        .collect();
    let mut grid = Vec::with_capacity(event_times.len() + 1);
    grid.push(0.0);
    grid.extend(event_times);

    let data = Training {
        x,
        events,
        times,
        rank,
        grid,
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(b as u64);
            grow_tree(&data, params, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RandomSurvivalForest {
        grid: data.grid,
        trees,
        n_features: x.ncols(),
    })
}

fn grow_tree(data: &Training, params: &RsfHyperparams, rng: &mut ChaCha8Rng) -> Result<Tree> {
    let n = data.times.len();
    let sample: Vec<usize> = if params.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let p = data.x.ncols();
    let mtry = params
        .features_per_split
        .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize)
        .clamp(1, p.max(1));

    let mut tree = Tree { nodes: Vec::new() };
    // (node slot, sample indices)
    let mut stack = vec![(0usize, sample)];
    tree.nodes.push(Node::Leaf { values: vec![] });
    while let Some((slot, idx)) = stack.pop() {
        let split = if idx.len() >= params.min_samples_split && p > 0 {
            best_split(data, &idx, params.min_samples_leaf, mtry, rng)
        } else {
            None
        };
        match split {
            Some((feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx
                    .iter()
                    .partition(|&&i| data.x[[i, feature]] <= threshold);
                let left = tree.nodes.len();
                tree.nodes.push(Node::Leaf { values: vec![] });
                let right = tree.nodes.len();
                tree.nodes.push(Node::Leaf { values: vec![] });
                tree.nodes[slot] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                stack.push((right, r));
                stack.push((left, l));
            }
            None => {
                tree.nodes[slot] = Node::Leaf {
                    values: leaf_curve(data, &idx, params.leaf_estimator)?,
                };
            }
        }
    }
    Ok(tree)
}

fn leaf_curve(data: &Training, idx: &[usize], estimator: LeafEstimator) -> Result<Vec<f64>> {
    let times: Vec<f64> = idx.iter().map(|&i| data.times[i]).collect();
    let events: Vec<bool> = idx.iter().map(|&i| data.events[i]).collect();
    let curve = match estimator {
        LeafEstimator::KaplanMeier => km_fit(&times, &events)?,
        LeafEstimator::NelsonAalen => nelson_aalen_survival(&times, &events)?,
    };
    Ok(data.grid.iter().map(|&u| curve.at(u)).collect())
}

/// `exp(-H(u))` with `H` the Nelson-Aalen cumulative hazard.
pub fn nelson_aalen_survival(times: &[f64], events: &[bool]) -> Result<SurvivalCurve> {
    check_samples(times, events)?;
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut grid = vec![0.0];
    let mut values = vec![1.0];
    let mut at_risk = times.len();
    let mut hazard = 0.0;
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let (mut d, mut leaving) = (0, 0);
        while i < order.len() && times[order[i]] == t {
            d += events[order[i]] as usize;
            leaving += 1;
            i += 1;
        }
        if d > 0 {
            hazard += d as f64 / at_risk as f64;
            grid.push(t);
            values.push((-hazard).exp());
        }
        at_risk -= leaving;
    }
    SurvivalCurve::new(grid, values)
}

/// Best `(feature, threshold)` by the standardized log-rank statistic, or
/// `None` when no admissible split separates the node.
fn best_split(
    data: &Training,
    idx: &[usize],
    min_leaf: usize,
    mtry: usize,
    rng: &mut ChaCha8Rng,
) -> Option<(usize, f64)> {
    let k = data.grid.len() - 1;
    // node totals per event-time index: at-risk and deaths
    let mut at_risk = vec![0.0; k + 1];
    let mut deaths = vec![0.0; k];
    let mut by_rank = vec![0.0; k + 1];
    for &i in idx {
        by_rank[data.rank[i]] += 1.0;
        if data.events[i] {
            deaths[data.rank[i] - 1] += 1.0;
        }
    }
    // at_risk[j] = #{rank > j}
    for j in (0..k).rev() {
        at_risk[j] = at_risk[j + 1] + by_rank[j + 1];
    }
    let active: Vec<usize> = (0..k)
        .filter(|&j| deaths[j] > 0.0 && at_risk[j] >= 2.0)
        .collect();
    if active.is_empty() {
        return None;
    }

    let p = data.x.ncols();
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order: Vec<usize> = idx.to_vec();
    let mut left_by_rank = vec![0.0; k + 1];
    let mut left_deaths = vec![0.0; k];
    for feature in sample(rng, p, mtry.min(p)).into_iter() {
        order.sort_by(|&a, &b| data.x[[a, feature]].total_cmp(&data.x[[b, feature]]));
        left_by_rank.iter_mut().for_each(|v| *v = 0.0);
        left_deaths.iter_mut().for_each(|v| *v = 0.0);
        for pos in 0..order.len() - 1 {
            let i = order[pos];
            left_by_rank[data.rank[i]] += 1.0;
            if data.events[i] {
                left_deaths[data.rank[i] - 1] += 1.0;
            }
            let here = data.x[[i, feature]];
            let next = data.x[[order[pos + 1], feature]];
            let n_left = pos + 1;
            if here == next || n_left < min_leaf || order.len() - n_left < min_leaf {
                continue;
            }
            let score = log_rank_score(&active, &at_risk, &deaths, &left_by_rank, &left_deaths);
            if let Some(score) = score {
                if best.map_or(true, |(s, _, _)| score > s) {
                    best = Some((score, feature, 0.5 * (here + next)));
                }
            }
        }
    }
    best.filter(|(s, _, _)| *s > 0.0).map(|(_, f, t)| (f, t))
}

fn log_rank_score(
    active: &[usize],
    at_risk: &[f64],
    deaths: &[f64],
    left_by_rank: &[f64],
    left_deaths: &[f64],
) -> Option<f64> {
    // left at-risk counts are suffix sums over ranks; walk the active
    // indices from the top down
    let mut numer = 0.0;
    let mut var = 0.0;
    let mut suffix = 0.0;
    let mut next_rank = left_by_rank.len() - 1;
    for &j in active.iter().rev() {
        while next_rank > j {
            suffix += left_by_rank[next_rank];
            next_rank -= 1;
        }
        let y = at_risk[j];
        let y_left = suffix;
        let d = deaths[j];
        numer += left_deaths[j] - d * y_left / y;
        var += y_left * (y - y_left) * d * (y - d) / (y * y * (y - 1.0));
    }
    (var > 0.0).then(|| numer.abs() / var.sqrt())
}
