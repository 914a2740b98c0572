//! Brute-force reference implementations and fixtures shared by integration tests.

#![allow(dead_code)]

use chrono::{DateTime, Utc};
use imbalance_qrf::features::FeatureConfig;
use imbalance_qrf::qrf::{derive_tree_seed, Dataset, Forest, HyperParams, Node, Tree};
use imbalance_qrf::synth::{generate, SynthConfig};
use imbalance_qrf::timeseries::{ImbalanceSeries, MarketArea, STEP_SECONDS};
use imbalance_qrf::YearMonth;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const OSLO: chrono_tz::Tz = chrono_tz::Europe::Oslo;

/// Bagged targets of the leaf reached by `x`, found by walking the node
/// table and counting leaves in node order.
pub fn leaf_targets(tree: &Tree<f64>, x: &[f64]) -> Vec<f64> {
    let nodes = tree.nodes();
    let mut i = 0usize;
    while let Node::Split {
        feature,
        threshold,
        left,
        right,
    } = &nodes[i]
    {
        i = if x[*feature as usize] <= *threshold { *left } else { *right } as usize;
    }
    let ordinal = nodes[..i].iter().filter(|n| matches!(n, Node::Leaf { .. })).count();
    tree.leaves().nth(ordinal).expect("leaf ordinal in range").to_vec()
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Pooled leaf distribution with exact rational weights `num[k] / den`.
pub struct ExactDistribution {
    pub values: Vec<f64>,
    pub num: Vec<u128>,
    pub den: u128,
    leaves: Vec<Vec<f64>>,
}

impl ExactDistribution {
    pub fn new(forest: &Forest<f64>, x: &[f64]) -> Self {
        let leaves: Vec<Vec<f64>> = forest.trees().iter().map(|t| leaf_targets(t, x)).collect();
        let lcm = leaves.iter().fold(1u128, |a, l| {
            let n = l.len() as u128;
            a / gcd(a, n) * n
        });
        let den = lcm * leaves.len() as u128;
        let mut values: Vec<f64> = leaves.iter().flatten().copied().collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let num = values
            .iter()
            .map(|&v| {
                leaves
                    .iter()
                    .map(|l| l.iter().filter(|&&y| y == v).count() as u128 * (lcm / l.len() as u128))
                    .sum()
            })
            .collect();
        Self {
            values,
            num,
            den,
            leaves,
        }
    }

    /// Smallest support value whose exact CDF reaches `q_num / q_den`.
    pub fn quantile(&self, q_num: u128, q_den: u128) -> f64 {
        if q_num == 0 {
            return self.values[0];
        }
        let mut cum = 0u128;
        for (v, n) in self.values.iter().zip(&self.num) {
            cum += n;
            if cum * q_den >= q_num * self.den {
                return *v;
            }
        }
        unreachable!("total weight is one")
    }

    /// Plain sum of `v / (n_trees * L)` over every pooled copy.
    pub fn mean(&self) -> f64 {
        let t = self.leaves.len() as f64;
        self.leaves
            .iter()
            .flat_map(|l| l.iter().map(move |&v| v / (t * l.len() as f64)))
            .sum()
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.num[k] as f64 / self.den as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

/// Mean of each tree's containing leaf, averaged over trees.
pub fn mean_of_tree_means(forest: &Forest<f64>, x: &[f64]) -> f64 {
    let means: Vec<f64> = forest
        .trees()
        .iter()
        .map(|t| {
            let l = leaf_targets(t, x);
            l.iter().sum::<f64>() / l.len() as f64
        })
        .collect();
    means.iter().sum::<f64>() / means.len() as f64
}

/// Row multiset of tree `index`: `n` uniform draws from the tree's ChaCha8
/// stream, or every row once without bootstrap.
pub fn bagged_rows(n: usize, params: &HyperParams, index: usize) -> Vec<usize> {
    if !params.bootstrap {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_tree_seed(params.seed, index));
    let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n as u64) as usize).collect();
    rows.sort_unstable();
    rows
}

fn sse(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    values.map(|v| (v - mean) * (v - mean)).sum()
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi || m < lo {
        lo
    } else {
        m
    }
}

fn distinct(rows: &[usize]) -> usize {
    rows.iter().collect::<std::collections::BTreeSet<_>>().len()
}

/// Every legal split of `rows`, scored by the children's summed squared error.
fn candidates(data: &Dataset<f64>, rows: &[usize], min_leaf: usize) -> Vec<Candidate> {
    let mut out = Vec::new();
    for f in 0..data.n_features() {
        let mut xs: Vec<f64> = rows.iter().map(|&r| data.value(r, f)).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        for w in xs.windows(2) {
            let thr = midpoint(w[0], w[1]);
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| data.value(r, f) <= thr);
            if distinct(&l) < min_leaf || distinct(&r) < min_leaf {
                continue;
            }
            let t = data.targets();
            out.push(Candidate {
                feature: f,
                threshold: thr,
                score: sse(l.iter().map(|&i| t[i])) + sse(r.iter().map(|&i| t[i])),
            });
        }
    }
    out
}

/// Checks the subtree at `node` against exhaustive CART over the bagged
/// `rows` (with repeats), scoring every feature; `min_leaf` bounds distinct
/// rows per child. Near-ties within rounding accept the fitted choice; a
/// duplicated column must resolve to its lower copy.
pub fn check_tree_against_cart(
    data: &Dataset<f64>,
    tree: &Tree<f64>,
    node: usize,
    rows: &[usize],
    min_leaf: usize,
    leaf_out: &mut Vec<Vec<f64>>,
) -> Result<(), String> {
    let t = data.targets();
    let parent = sse(rows.iter().map(|&i| t[i]));
    let constant = rows.iter().all(|&i| t[i] == t[rows[0]]);
    let cands = if constant || distinct(rows) < 2 * min_leaf {
        Vec::new()
    } else {
        candidates(data, rows, min_leaf)
    };
    let best = cands.iter().map(|c| c.score).fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * parent.max(1e-300);
    let worthwhile = parent - best > tol;
    match tree.nodes()[node] {
        Node::Leaf { .. } => {
            if worthwhile {
                return Err(format!("node {node}: leaf, but a split reduces SSE {parent} to {best}"));
            }
            let mut want: Vec<f64> = rows.iter().map(|&i| t[i]).collect();
            want.sort_by(f64::total_cmp);
            leaf_out.push(want);
            Ok(())
        }
        Node::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let f = feature as usize;
            let chosen = cands
                .iter()
                .find(|c| c.feature == f && c.threshold == threshold)
                .ok_or_else(|| format!("node {node}: split ({f}, {threshold}) is not a legal candidate"))?;
            if chosen.score > best + tol {
                return Err(format!("node {node}: split score {} but best is {best}", chosen.score));
            }
            if parent - chosen.score <= 0.0 {
                return Err(format!("node {node}: split does not reduce SSE"));
            }
            let col = |g: usize| -> Vec<f64> { (0..data.n_rows()).map(|r| data.value(r, g)).collect() };
            if (0..f).any(|g| col(g) == col(f)) {
                return Err(format!("node {node}: chose feature {f} over an identical lower column"));
            }
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| data.value(i, f) <= threshold);
            check_tree_against_cart(data, tree, left as usize, &l, min_leaf, leaf_out)?;
            check_tree_against_cart(data, tree, right as usize, &r, min_leaf, leaf_out)
        }
    }
}

pub fn feature_config(lags: usize, horizons: usize) -> FeatureConfig {
    FeatureConfig {
        lag_count: lags,
        horizons,
        ..default_feature_config()
    }
}

/// Full 24-lag, 24-horizon configuration for NO1 with the built-in calendar.
pub fn default_feature_config() -> FeatureConfig {
    FeatureConfig::for_area(&MarketArea::norwegian_defaults()[0], None).unwrap()
}

pub fn ym(year: i32, month: u32) -> YearMonth {
    YearMonth::new(year, month).unwrap()
}

/// Steps from local midnight on the first of `from` to that of `to`.
pub fn steps_between(from: YearMonth, to: YearMonth) -> usize {
    ((to.start_in(OSLO) - from.start_in(OSLO)).num_seconds() / STEP_SECONDS) as usize
}

/// Synthetic series covering whole local months starting January 2015.
pub fn synth_months(area: &str, months: u32, seed: u64) -> ImbalanceSeries {
    let first = ym(2015, 1);
    generate(&SynthConfig {
        area: area.into(),
        seed,
        n_steps: steps_between(first, first.add_months(months as i32)),
        start: first.start_in(OSLO),
        ..Default::default()
    })
    .unwrap()
}

pub fn synth_days(area: &str, days: usize, seed: u64) -> ImbalanceSeries {
    generate(&SynthConfig {
        area: area.into(),
        seed,
        n_steps: days * 288,
        ..Default::default()
    })
    .unwrap()
}

pub fn at(s: &ImbalanceSeries, i: usize) -> DateTime<Utc> {
    s.timestamp_at(i)
}
