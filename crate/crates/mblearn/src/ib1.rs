//! Nearest-neighbor classification over an instance base.
//!
//! The neighbor set is organized as buckets of equal distance, nearest first;
//! `k` counts distance ranks (buckets), never raw instances, so ties always
//! stay together. Class votes are weighted by token frequency. A vote tie is
//! broken by the global token frequency of the tied classes, then by interning
//! order. With uniform weights this is plain IB1; with gain-ratio weights it
//! is IB1-IG.

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{ClassId, Instance, InstanceBase, InstanceType};
use crate::error::{Error, Result};
use crate::metrics::{information_gain_weights, weighted_distance_raw, WeightVector};

/// Types at one distance from the query.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborBucket {
    pub distance: f64,
    /// Indices into the base's type list, ascending.
    pub members: Vec<usize>,
}

/// The k nearest distance ranks, nearest first. Distances strictly increase
/// across buckets.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub buckets: Vec<NeighborBucket>,
}

impl NeighborSet {
    pub fn nearest_distance(&self) -> f64 {
        self.buckets[0].distance
    }

    pub fn member_count(&self) -> usize {
        self.buckets.iter().map(|b| b.members.len()).sum()
    }
}

/// Feature weighting used by the evaluation drivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// All-ones weights: plain IB1.
    Uniform,
    /// Gain-ratio weights computed on the training base: IB1-IG.
    GainRatio,
}

impl Weighting {
    pub fn weights(self, train: &InstanceBase) -> WeightVector {
        match self {
            Weighting::Uniform => WeightVector::uniform(train.n_features()),
            Weighting::GainRatio => information_gain_weights(train),
        }
    }
}

/// Outcome of classifying one test instance: the gold and predicted classes,
/// the nearest-bucket distance, and the support set (the nearest-bucket types
/// that carried the winning class).
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRecord {
    pub gold: ClassId,
    pub predicted: ClassId,
    pub distance: f64,
    pub support: Vec<usize>,
}

impl ExperimentRecord {
    pub fn correct(&self) -> bool {
        self.gold == self.predicted
    }
}

/// Collect the k nearest distinct distance values in one linear scan, keeping
/// every type at those distances.
fn scan_buckets<'a>(
    candidates: impl Iterator<Item = (usize, &'a InstanceType)>,
    query: &Instance,
    k: usize,
    w: &WeightVector,
) -> Vec<NeighborBucket> {
    let ws = w.as_slice();
    let mut buckets: Vec<NeighborBucket> = Vec::with_capacity(k + 1);
    for (i, t) in candidates {
        let d = weighted_distance_raw(&query.values, &t.instance.values, ws);
        if buckets.len() == k {
            let worst = buckets[k - 1].distance;
            if d > worst {
                continue;
            }
        }
        let mut placed = false;
        for b in 0..buckets.len() {
            if d == buckets[b].distance {
                buckets[b].members.push(i);
                placed = true;
                break;
            }
            if d < buckets[b].distance {
                buckets.insert(
                    b,
                    NeighborBucket {
                        distance: d,
                        members: vec![i],
                    },
                );
                buckets.truncate(k);
                placed = true;
                break;
            }
        }
        if !placed && buckets.len() < k {
            buckets.push(NeighborBucket {
                distance: d,
                members: vec![i],
            });
        }
    }
    buckets
}

/// All types occupying the k nearest distinct distance values.
pub fn nearest_neighbors(
    base: &InstanceBase,
    query: &Instance,
    k: usize,
    w: &WeightVector,
) -> Result<NeighborSet> {
    if base.n_types() == 0 {
        return Err(Error::EmptyBase);
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if query.arity() != base.n_features() || w.len() != base.n_features() {
        return Err(Error::ArityMismatch {
            expected: base.n_features(),
            actual: query.arity(),
        });
    }
    let buckets = scan_buckets(
        base.types().iter().enumerate(),
        query,
        k,
        w,
    );
    Ok(NeighborSet { buckets })
}

/// Vote over the bucket set: token-frequency-weighted class counts, ties
/// broken by global class token frequency, then by interning order.
fn vote(
    base: &InstanceBase,
    buckets: &[NeighborBucket],
    global_counts: &[u64],
) -> (ClassId, Vec<usize>) {
    let n_classes = base.classes().len();
    let mut votes = vec![0u64; n_classes];
    for b in buckets {
        for &i in &b.members {
            let t = &base.types()[i];
            votes[t.instance.label.0 as usize] += t.frequency;
        }
    }
    let best_vote = *votes.iter().max().expect("non-empty class set");
    let tied: Vec<usize> = (0..n_classes).filter(|&c| votes[c] == best_vote).collect();
    let winner = if tied.len() == 1 {
        tied[0]
    } else {
        let best_global = tied.iter().map(|&c| global_counts[c]).max().unwrap();
        // final fallback: lowest class id = interning order
        *tied
            .iter()
            .find(|&&c| global_counts[c] == best_global)
            .unwrap()
    };
    let winner = ClassId(winner as u32);
    let mut support = Vec::new();
    for b in buckets {
        for &i in &b.members {
            if base.types()[i].instance.label == winner {
                support.push(i);
            }
        }
    }
    (winner, support)
}

fn classify_with_counts(
    base: &InstanceBase,
    query: &Instance,
    k: usize,
    w: &WeightVector,
    global_counts: &[u64],
) -> Result<(ClassId, ExperimentRecord)> {
    let neighbors = nearest_neighbors(base, query, k, w)?;
    let (winner, support) = vote(base, &neighbors.buckets, global_counts);
    let record = ExperimentRecord {
        gold: query.label,
        predicted: winner,
        distance: neighbors.nearest_distance(),
        support,
    };
    Ok((winner, record))
}

/// Classify a query against the base.
pub fn classify(
    base: &InstanceBase,
    query: &Instance,
    k: usize,
    w: &WeightVector,
) -> Result<(ClassId, ExperimentRecord)> {
    let counts = base.class_token_counts();
    classify_with_counts(base, query, k, w, &counts)
}

/// Accuracy plus the per-token records of one train/test run.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    /// Correctly classified test tokens over all test tokens.
    pub accuracy: f64,
    /// One record per test token, in test-base type order with each type
    /// expanded to its frequency.
    pub records: Vec<ExperimentRecord>,
    /// The weights the run classified with.
    pub weights: WeightVector,
}

impl EvalOutcome {
    pub fn gold(&self) -> Vec<ClassId> {
        self.records.iter().map(|r| r.gold).collect()
    }

    pub fn predictions(&self) -> Vec<ClassId> {
        self.records.iter().map(|r| r.predicted).collect()
    }
}

/// Classify every test token against the training base with precomputed
/// weights. Train and test must share their interning space (derive them
/// from one parent base via fold splitting).
pub fn evaluate_with_weights(
    train: &InstanceBase,
    test: &InstanceBase,
    k: usize,
    w: &WeightVector,
) -> Result<EvalOutcome> {
    if train.n_types() == 0 {
        return Err(Error::EmptyBase);
    }
    if test.token_count() == 0 {
        return Err(Error::invalid("empty test set"));
    }
    if train.n_features() != test.n_features() {
        return Err(Error::ArityMismatch {
            expected: train.n_features(),
            actual: test.n_features(),
        });
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let counts = train.class_token_counts();
    let per_type: Vec<ExperimentRecord> = test
        .types()
        .par_iter()
        .map(|t| {
            classify_with_counts(train, &t.instance, k, w, &counts)
                .map(|(_, record)| record)
                .expect("arity checked above")
        })
        .collect();
    let mut records = Vec::with_capacity(test.token_count() as usize);
    let mut correct = 0u64;
    for (t, record) in test.types().iter().zip(per_type) {
        if record.correct() {
            correct += t.frequency;
        }
        for _ in 0..t.frequency {
            records.push(record.clone());
        }
    }
    Ok(EvalOutcome {
        accuracy: correct as f64 / test.token_count() as f64,
        records,
        weights: w.clone(),
    })
}

/// Evaluate a test base against a training base, computing weights according
/// to the chosen scheme.
pub fn evaluate(
    train: &InstanceBase,
    test: &InstanceBase,
    k: usize,
    weighting: Weighting,
) -> Result<EvalOutcome> {
    if train.n_types() == 0 {
        return Err(Error::EmptyBase);
    }
    let w = weighting.weights(train);
    evaluate_with_weights(train, test, k, &w)
}

/// Classify every type against the base minus that type (all of its tokens
/// removed). Returns one record per type, in type order.
pub fn leave_one_out(
    base: &InstanceBase,
    k: usize,
    w: &WeightVector,
) -> Result<Vec<ExperimentRecord>> {
    if base.n_types() < 2 {
        return Err(Error::invalid("leave-one-out needs at least 2 types"));
    }
    let counts = base.class_token_counts();
    let records: Vec<ExperimentRecord> = (0..base.n_types())
        .into_par_iter()
        .map(|held_out| {
            let t = &base.types()[held_out];
            let mut counts = counts.clone();
            counts[t.instance.label.0 as usize] -= t.frequency;
            let buckets = scan_buckets(
                base.types()
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != held_out),
                &t.instance,
                k,
                w,
            );
            let (winner, support) = vote(base, &buckets, &counts);
            ExperimentRecord {
                gold: t.instance.label,
                predicted: winner,
                distance: buckets[0].distance,
                support,
            }
        })
        .collect();
    Ok(records)
}
