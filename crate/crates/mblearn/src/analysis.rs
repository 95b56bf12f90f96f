//! Instance-space analyses: friendly-neighbor clusters, support-set
//! histograms, specificity-accuracy curves, and the side-by-side distance
//! table for the nearest-neighbor classifier and the tree.

use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

use crate::dataset::InstanceBase;
use crate::editing::ExceptionalityScores;
use crate::error::{Error, Result};
use crate::ib1::{evaluate_with_weights, ExperimentRecord, Weighting};
use crate::igtree::TreeDecision;
use crate::metrics::{weighted_distance_raw, WeightVector};

/// Cluster sizes are capped at this rank, mirroring a 50-deep neighbor list.
pub const CLUSTER_CAP: usize = 50;

/// Token counts of friendly-neighbor cluster sizes 0..=50.
#[derive(Debug, Clone, Serialize)]
pub struct ClusterHistogram {
    /// counts[s] = tokens whose cluster size is s.
    pub counts: Vec<u64>,
    pub total_tokens: u64,
}

impl ClusterHistogram {
    /// Cumulative percentage curve over sizes 0..=50; non-decreasing and
    /// ending at 100.
    pub fn cumulative_percent(&self) -> Vec<f64> {
        let mut acc = 0u64;
        self.counts
            .iter()
            .map(|&c| {
                acc += c;
                100.0 * acc as f64 / self.total_tokens as f64
            })
            .collect()
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "cluster_size,tokens,cumulative_percent")?;
        for (size, (&count, cum)) in self
            .counts
            .iter()
            .zip(self.cumulative_percent())
            .enumerate()
        {
            writeln!(out, "{size},{count},{cum}")?;
        }
        Ok(())
    }
}

/// Leave-one-out cluster sizes: for each held-out type, rank all other tokens
/// by distance with same-class tokens ahead of different-class tokens at equal
/// distance; the cluster size is the number of friendly tokens ranked before
/// the first enemy, capped at [`CLUSTER_CAP`].
pub fn friendly_neighbor_clusters(base: &InstanceBase, w: &WeightVector) -> Result<ClusterHistogram> {
    if base.n_types() < 2 {
        return Err(Error::invalid(
            "cluster analysis needs at least 2 types".to_string(),
        ));
    }
    if w.len() != base.n_features() {
        return Err(Error::ArityMismatch {
            expected: base.n_features(),
            actual: w.len(),
        });
    }
    let types = base.types();
    let sizes: Vec<(usize, u64)> = (0..types.len())
        .into_par_iter()
        .map(|x| {
            let subject = &types[x];
            let mut nearest_enemy = f64::INFINITY;
            for (y, other) in types.iter().enumerate() {
                if y == x || other.instance.label == subject.instance.label {
                    continue;
                }
                let d = weighted_distance_raw(
                    &subject.instance.values,
                    &other.instance.values,
                    w.as_slice(),
                );
                if d < nearest_enemy {
                    nearest_enemy = d;
                }
            }
            let mut friendly = 0u64;
            for (y, other) in types.iter().enumerate() {
                if y == x || other.instance.label != subject.instance.label {
                    continue;
                }
                let d = weighted_distance_raw(
                    &subject.instance.values,
                    &other.instance.values,
                    w.as_slice(),
                );
                // ties rank friends first, so distance equal to the nearest
                // enemy still counts
                if d <= nearest_enemy {
                    friendly += other.frequency;
                    if friendly >= CLUSTER_CAP as u64 {
                        break;
                    }
                }
            }
            let size = friendly.min(CLUSTER_CAP as u64) as usize;
            (size, subject.frequency)
        })
        .collect();
    let mut counts = vec![0u64; CLUSTER_CAP + 1];
    let mut total = 0u64;
    for (size, freq) in sizes {
        counts[size] += freq;
        total += freq;
    }
    Ok(ClusterHistogram {
        counts,
        total_tokens: total,
    })
}

/// Which exceptionality score a histogram bins on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Typicality,
    Cps,
}

/// Default typicality bin edges (the last bin is open-ended).
pub fn typicality_default_edges() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 5.0, f64::INFINITY]
}

/// Default class-prediction-strength bin edges: ten equal bins on [0, 1].
pub fn cps_default_edges() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// Right/Wrong histograms of the scores of supporting types.
#[derive(Debug, Clone, Serialize)]
pub struct SupportHistogram {
    pub measure: Measure,
    pub edges: Vec<f64>,
    pub right: Vec<u64>,
    pub wrong: Vec<u64>,
}

impl SupportHistogram {
    pub fn total_counts(&self) -> u64 {
        self.right.iter().sum::<u64>() + self.wrong.iter().sum::<u64>()
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "bin_low,bin_high,right,wrong")?;
        for b in 0..self.right.len() {
            writeln!(
                out,
                "{},{},{},{}",
                self.edges[b],
                self.edges[b + 1],
                self.right[b],
                self.wrong[b]
            )?;
        }
        Ok(())
    }
}

fn bin_of(edges: &[f64], value: f64) -> usize {
    let bins = edges.len() - 1;
    for b in 0..bins {
        if value < edges[b + 1] {
            return b;
        }
    }
    bins - 1
}

/// Every supporting type of every test decision contributes one count to the
/// bin of its score, under Right or Wrong according to the decision.
/// `scores` must come from the training base the records classified against.
pub fn support_set_histogram(
    records: &[ExperimentRecord],
    scores: &ExceptionalityScores,
    measure: Measure,
    edges: &[f64],
) -> Result<SupportHistogram> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(
            "bin edges must be strictly increasing".to_string(),
        ));
    }
    let values = match measure {
        Measure::Typicality => &scores.typicality,
        Measure::Cps => &scores.cps,
    };
    let bins = edges.len() - 1;
    let mut right = vec![0u64; bins];
    let mut wrong = vec![0u64; bins];
    for record in records {
        let target = if record.correct() {
            &mut right
        } else {
            &mut wrong
        };
        for &ty in &record.support {
            let score = *values
                .get(ty)
                .ok_or_else(|| Error::invalid(format!("unknown type id {ty} in support set")))?;
            target[bin_of(edges, score)] += 1;
        }
    }
    Ok(SupportHistogram {
        measure,
        edges: edges.to_vec(),
        right,
        wrong,
    })
}

/// Accuracy within one occupied distance bin.
#[derive(Debug, Clone, Serialize)]
pub struct SpecificityBin {
    pub bin: usize,
    pub low: f64,
    pub high: f64,
    pub tokens: u64,
    pub accuracy: f64,
}

/// Accuracy as a function of the nearest-neighbor distance, normalized by the
/// total feature weight and discretized into at most ten evenly spaced bins.
#[derive(Debug, Clone, Serialize)]
pub struct SpecificityCurve {
    pub weight_sum: f64,
    pub bins: Vec<SpecificityBin>,
}

impl SpecificityCurve {
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "bin,low,high,tokens,accuracy")?;
        for b in &self.bins {
            writeln!(out, "{},{},{},{},{}", b.bin, b.low, b.high, b.tokens, b.accuracy)?;
        }
        Ok(())
    }
}

/// Distance d maps to bin floor(10 d / sum(w)), with d = sum(w) mapping to
/// bin 9. Empty bins are omitted.
pub fn specificity_accuracy_curve(
    records: &[ExperimentRecord],
    weight_sum: f64,
) -> SpecificityCurve {
    let mut tokens = [0u64; 10];
    let mut correct = [0u64; 10];
    for r in records {
        let bin = if weight_sum > 0.0 {
            (((10.0 * r.distance / weight_sum).floor()) as usize).min(9)
        } else {
            0
        };
        tokens[bin] += 1;
        if r.correct() {
            correct[bin] += 1;
        }
    }
    let bins = (0..10)
        .filter(|&b| tokens[b] > 0)
        .map(|b| SpecificityBin {
            bin: b,
            low: weight_sum * b as f64 / 10.0,
            high: weight_sum * (b + 1) as f64 / 10.0,
            tokens: tokens[b],
            accuracy: correct[b] as f64 / tokens[b] as f64,
        })
        .collect();
    SpecificityCurve { weight_sum, bins }
}

/// One cell of the condition table.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ConditionCell {
    pub tokens: u64,
    pub avg_ib1_distance: f64,
    pub avg_tree_distance: f64,
}

/// Average classification distances split by which system answered correctly.
/// Cell order: the first letter is the nearest-neighbor classifier giving a
/// false or true answer, the second the tree.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionTable {
    pub ff: ConditionCell,
    pub ft: ConditionCell,
    pub tf: ConditionCell,
    pub tt: ConditionCell,
    /// Among TF tokens, the fraction where the tree classified at a strictly
    /// larger distance than the nearest neighbor; `None` when TF is empty.
    pub tf_tree_farther_fraction: Option<f64>,
}

impl ConditionTable {
    pub fn total_tokens(&self) -> u64 {
        self.ff.tokens + self.ft.tokens + self.tf.tokens + self.tt.tokens
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "condition,tokens,avg_ib1_distance,avg_tree_distance")?;
        for (name, cell) in [
            ("FF", &self.ff),
            ("FT", &self.ft),
            ("TF", &self.tf),
            ("TT", &self.tt),
        ] {
            writeln!(
                out,
                "{},{},{},{}",
                name, cell.tokens, cell.avg_ib1_distance, cell.avg_tree_distance
            )?;
        }
        Ok(())
    }
}

/// Cross the nearest-neighbor records with the tree decisions token by token.
/// Both runs must cover the same test tokens in the same order; the tree side
/// should come from an unpruned tree so its distances are not inflated by
/// missing arcs.
pub fn condition_table(
    ib1_records: &[ExperimentRecord],
    tree_decisions: &[TreeDecision],
) -> Result<ConditionTable> {
    if ib1_records.len() != tree_decisions.len() {
        return Err(Error::invalid(format!(
            "record streams differ in length: {} vs {}",
            ib1_records.len(),
            tree_decisions.len()
        )));
    }
    if ib1_records.is_empty() {
        return Err(Error::invalid("no records to tabulate".to_string()));
    }
    #[derive(Default)]
    struct Acc {
        tokens: u64,
        ib1: f64,
        tree: f64,
    }
    let mut cells = [Acc::default(), Acc::default(), Acc::default(), Acc::default()];
    let mut tf_farther = 0u64;
    for (r, d) in ib1_records.iter().zip(tree_decisions) {
        let idx = match (r.correct(), d.correct()) {
            (false, false) => 0,
            (false, true) => 1,
            (true, false) => 2,
            (true, true) => 3,
        };
        cells[idx].tokens += 1;
        cells[idx].ib1 += r.distance;
        cells[idx].tree += d.distance;
        if idx == 2 && d.distance > r.distance {
            tf_farther += 1;
        }
    }
    let cell = |a: &Acc| ConditionCell {
        tokens: a.tokens,
        avg_ib1_distance: if a.tokens > 0 { a.ib1 / a.tokens as f64 } else { 0.0 },
        avg_tree_distance: if a.tokens > 0 { a.tree / a.tokens as f64 } else { 0.0 },
    };
    Ok(ConditionTable {
        ff: cell(&cells[0]),
        ft: cell(&cells[1]),
        tf: cell(&cells[2]),
        tt: cell(&cells[3]),
        tf_tree_farther_fraction: if cells[2].tokens > 0 {
            Some(tf_farther as f64 / cells[2].tokens as f64)
        } else {
            None
        },
    })
}

/// Accuracy at one k.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KSweepPoint {
    pub k: usize,
    pub accuracy: f64,
}

/// One evaluation per k, sharing the weights computed once on the training
/// base.
pub fn k_sweep(
    train: &InstanceBase,
    test: &InstanceBase,
    ks: &[usize],
    weighting: Weighting,
) -> Result<Vec<KSweepPoint>> {
    if ks.is_empty() {
        return Err(Error::invalid("k sweep needs at least one k".to_string()));
    }
    let w = weighting.weights(train);
    ks.iter()
        .map(|&k| {
            evaluate_with_weights(train, test, k, &w).map(|out| KSweepPoint {
                k,
                accuracy: out.accuracy,
            })
        })
        .collect()
}
