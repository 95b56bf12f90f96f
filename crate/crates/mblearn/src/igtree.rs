//! Oblivious decision-trie induction over a fixed feature order.
//!
//! The feature order is computed once for the whole training base (descending
//! gain-ratio weight, ties broken by lower feature index) and every level of
//! the tree tests the same feature. A path stops as soon as the covered
//! training tokens agree on one class; each node keeps the most frequent class
//! of its cover as the default answer for queries that fall off the tree.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{ClassId, Instance, InstanceBase, ValueId};
use crate::error::{Error, Result};
use crate::metrics::WeightVector;

#[derive(Debug, Clone)]
pub struct IGTreeNode {
    /// Most frequent class among the training tokens this node covers.
    pub default_class: ClassId,
    /// Features consumed on the path to this node.
    pub depth: usize,
    /// Arcs test the feature at rank `depth` of the global order.
    pub arcs: BTreeMap<ValueId, IGTreeNode>,
}

impl IGTreeNode {
    pub fn is_leaf(&self) -> bool {
        self.arcs.is_empty()
    }

    fn count(&self) -> (u64, u64) {
        let mut nodes = 1;
        let mut arcs = 0;
        for child in self.arcs.values() {
            arcs += 1;
            let (n, a) = child.count();
            nodes += n;
            arcs += a;
        }
        (nodes, arcs)
    }
}

/// An induced tree plus the feature order it tests.
#[derive(Debug, Clone)]
pub struct IGTree {
    pub root: IGTreeNode,
    /// Permutation of feature indices, most important first.
    pub feature_order: Vec<usize>,
    pub pruned: bool,
}

/// Node and arc totals of a tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TreeSize {
    pub nodes: u64,
    pub arcs: u64,
}

fn default_class(base: &InstanceBase, cover: &[usize]) -> ClassId {
    let mut counts = vec![0u64; base.classes().len()];
    for &i in cover {
        let t = &base.types()[i];
        counts[t.instance.label.0 as usize] += t.frequency;
    }
    let best = *counts.iter().max().expect("non-empty class alphabet");
    // ties resolved by interning order: lowest class id wins
    let c = counts.iter().position(|&x| x == best).unwrap();
    ClassId(c as u32)
}

fn unambiguous(base: &InstanceBase, cover: &[usize]) -> bool {
    let first = base.types()[cover[0]].instance.label;
    cover[1..]
        .iter()
        .all(|&i| base.types()[i].instance.label == first)
}

fn grow(base: &InstanceBase, order: &[usize], cover: Vec<usize>, depth: usize) -> IGTreeNode {
    let default = default_class(base, &cover);
    let mut node = IGTreeNode {
        default_class: default,
        depth,
        arcs: BTreeMap::new(),
    };
    if depth == order.len() || unambiguous(base, &cover) {
        return node;
    }
    let feature = order[depth];
    let mut partitions: BTreeMap<ValueId, Vec<usize>> = BTreeMap::new();
    for i in cover {
        let v = base.types()[i].instance.values[feature];
        partitions.entry(v).or_default().push(i);
    }
    for (v, sub) in partitions {
        node.arcs.insert(v, grow(base, order, sub, depth + 1));
    }
    node
}

fn prune_redundant_leaves(node: &mut IGTreeNode) {
    let parent_default = node.default_class;
    for child in node.arcs.values_mut() {
        prune_redundant_leaves(child);
    }
    node.arcs
        .retain(|_, child| !(child.is_leaf() && child.default_class == parent_default));
}

/// Build a tree from a training base with the given weights. When
/// `prune_redundant` is set, leaves answering the same class as their parent's
/// default are removed (recursively), which never changes any prediction.
pub fn build(base: &InstanceBase, w: &WeightVector, prune_redundant: bool) -> Result<IGTree> {
    if base.n_types() == 0 {
        return Err(Error::EmptyBase);
    }
    if w.len() != base.n_features() {
        return Err(Error::ArityMismatch {
            expected: base.n_features(),
            actual: w.len(),
        });
    }
    let mut order: Vec<usize> = (0..base.n_features()).collect();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    let cover: Vec<usize> = (0..base.n_types()).collect();
    let mut root = grow(base, &order, cover, 0);
    if prune_redundant {
        prune_redundant_leaves(&mut root);
    }
    Ok(IGTree {
        root,
        feature_order: order,
        pruned: prune_redundant,
    })
}

impl IGTree {
    /// Traverse arcs in feature order while values match; answer with the
    /// leaf class on a full match, otherwise with the default of the last
    /// matching node. Returns the class and the number of features consumed.
    pub fn classify(&self, query: &Instance) -> (ClassId, usize) {
        assert_eq!(
            query.arity(),
            self.feature_order.len(),
            "query arity does not match the tree"
        );
        let mut node = &self.root;
        let mut consumed = 0;
        while !node.is_leaf() {
            let feature = self.feature_order[consumed];
            match node.arcs.get(&query.values[feature]) {
                Some(child) => {
                    node = child;
                    consumed += 1;
                }
                None => break,
            }
        }
        (node.default_class, consumed)
    }

    /// The weighted distance between the query and the implicit schema that
    /// produced the answer: the sum of weights of all features not consumed
    /// before the answer was given.
    pub fn classification_distance(&self, query: &Instance, w: &WeightVector) -> f64 {
        assert_eq!(w.len(), self.feature_order.len(), "weight arity mismatch");
        let (_, consumed) = self.classify(query);
        self.feature_order[consumed..]
            .iter()
            .map(|&f| w[f])
            .sum()
    }

    pub fn node_count(&self) -> TreeSize {
        let (nodes, arcs) = self.root.count();
        TreeSize { nodes, arcs }
    }

    /// Readable JSON rendering (nested nodes with default classes and arcs)
    /// for inspection and size auditing.
    pub fn to_json(&self, base: &InstanceBase) -> serde_json::Value {
        fn node_json(node: &IGTreeNode, feature: Option<usize>, base: &InstanceBase, order: &[usize]) -> serde_json::Value {
            let mut arcs = serde_json::Map::new();
            if let Some(f) = feature {
                for (v, child) in &node.arcs {
                    let next = order.get(node.depth + 1).copied();
                    arcs.insert(
                        base.value_text(f, *v).to_owned(),
                        node_json(child, next, base, order),
                    );
                }
            }
            let mut obj = serde_json::Map::new();
            obj.insert(
                "default".into(),
                base.class_text(node.default_class).into(),
            );
            obj.insert("depth".into(), node.depth.into());
            if !arcs.is_empty() {
                obj.insert("arcs".into(), serde_json::Value::Object(arcs));
            }
            serde_json::Value::Object(obj)
        }
        let size = self.node_count();
        serde_json::json!({
            "feature_order": self.feature_order,
            "pruned": self.pruned,
            "nodes": size.nodes,
            "arcs": size.arcs,
            "root": node_json(&self.root, self.feature_order.first().copied(), base, &self.feature_order),
        })
    }
}

/// One test token's outcome under the tree.
#[derive(Debug, Clone, Serialize)]
pub struct TreeDecision {
    pub gold: ClassId,
    pub predicted: ClassId,
    pub match_depth: usize,
    /// Classification distance under the weights the tree was built with.
    pub distance: f64,
}

impl TreeDecision {
    pub fn correct(&self) -> bool {
        self.gold == self.predicted
    }
}

/// Accuracy and per-token decisions of a tree over a test base.
#[derive(Debug, Clone)]
pub struct TreeEvalOutcome {
    pub accuracy: f64,
    /// One decision per test token, aligned with the record order of the
    /// nearest-neighbor evaluation drivers.
    pub decisions: Vec<TreeDecision>,
}

/// Classify every test token, recording match depth and classification
/// distance. `w` must be the weights the tree was built with.
pub fn evaluate_tree(tree: &IGTree, test: &InstanceBase, w: &WeightVector) -> Result<TreeEvalOutcome> {
    if test.token_count() == 0 {
        return Err(Error::invalid("empty test set"));
    }
    if test.n_features() != tree.feature_order.len() {
        return Err(Error::ArityMismatch {
            expected: tree.feature_order.len(),
            actual: test.n_features(),
        });
    }
    let total_weight = w.sum();
    let prefix: Vec<f64> = {
        // prefix[d] = sum of weights of the first d features in tree order
        let mut acc = Vec::with_capacity(w.len() + 1);
        let mut s = 0.0;
        acc.push(0.0);
        for &f in &tree.feature_order {
            s += w[f];
            acc.push(s);
        }
        acc
    };
    let per_type: Vec<TreeDecision> = test
        .types()
        .par_iter()
        .map(|t| {
            let (predicted, match_depth) = tree.classify(&t.instance);
            TreeDecision {
                gold: t.instance.label,
                predicted,
                match_depth,
                distance: total_weight - prefix[match_depth],
            }
        })
        .collect();
    let mut decisions = Vec::with_capacity(test.token_count() as usize);
    let mut correct = 0u64;
    for (t, d) in test.types().iter().zip(per_type) {
        if d.correct() {
            correct += t.frequency;
        }
        for _ in 0..t.frequency {
            decisions.push(d.clone());
        }
    }
    Ok(TreeEvalOutcome {
        accuracy: correct as f64 / test.token_count() as f64,
        decisions,
    })
}
