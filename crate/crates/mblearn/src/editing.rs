//! Exceptionality scoring and training-set editing.
//!
//! Two per-type scores estimate how exceptional an instance type is:
//! typicality (intra-concept similarity over inter-concept similarity, from
//! the normalized unweighted distance) and class-prediction strength (how
//! often the type predicts the right class when it shows up as a nearest
//! neighbor in a leave-one-out pass). Editing removes whole types, lowest or
//! highest score first, until a token-level percentage target is reached.

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::InstanceBase;
use crate::error::{Error, Result};
use crate::ib1::{evaluate, EvalOutcome, Weighting};
use crate::metrics::{zhang_distance_raw, WeightVector};
use crate::stats::{mcnemar, McNemarTest};

/// Stand-in for an infinite typicality ratio (empty set of unrelated
/// instances), kept finite so score sorts stay total.
pub const TYPICALITY_CAP: f64 = 1e9;

/// Knobs for the typicality computation. The defaults follow the toolkit's
/// conventions: a type's family excludes the type itself, and averages weigh
/// each family or unrelated type by its token frequency.
#[derive(Debug, Clone, Copy)]
pub struct TypicalityOptions {
    pub include_self: bool,
    pub token_weighted: bool,
}

impl Default for TypicalityOptions {
    fn default() -> Self {
        TypicalityOptions {
            include_self: false,
            token_weighted: true,
        }
    }
}

/// Per-type typicality: mean same-class similarity divided by mean
/// other-class similarity, with similarity = 1 - normalized distance.
/// An empty family yields 0 (maximally atypical); an empty unrelated set
/// yields [`TYPICALITY_CAP`].
pub fn typicality_scores_with(base: &InstanceBase, opts: &TypicalityOptions) -> Vec<f64> {
    let types = base.types();
    (0..types.len())
        .into_par_iter()
        .map(|x| {
            let subject = &types[x];
            let mut intra_num = 0.0;
            let mut intra_den = 0.0;
            let mut inter_num = 0.0;
            let mut inter_den = 0.0;
            for (y, other) in types.iter().enumerate() {
                if y == x && !opts.include_self {
                    continue;
                }
                let weight = if opts.token_weighted {
                    other.frequency as f64
                } else {
                    1.0
                };
                let sim = 1.0
                    - zhang_distance_raw(&subject.instance.values, &other.instance.values);
                if other.instance.label == subject.instance.label {
                    intra_num += weight * sim;
                    intra_den += weight;
                } else {
                    inter_num += weight * sim;
                    inter_den += weight;
                }
            }
            let intra = if intra_den > 0.0 {
                intra_num / intra_den
            } else {
                0.0
            };
            if inter_den > 0.0 {
                let inter = inter_num / inter_den;
                if inter > 0.0 {
                    (intra / inter).min(TYPICALITY_CAP)
                } else {
                    TYPICALITY_CAP
                }
            } else {
                TYPICALITY_CAP
            }
        })
        .collect()
}

pub fn typicality_scores(base: &InstanceBase) -> Vec<f64> {
    typicality_scores_with(base, &TypicalityOptions::default())
}

/// Class-prediction strength per type plus the usage counts behind it.
#[derive(Debug, Clone)]
pub struct CpsScores {
    /// Fraction of nearest-neighbor appearances with a matching class;
    /// 1.0 by convention for types never used (usage 0).
    pub cps: Vec<f64>,
    /// Token-weighted number of times each type sat in a nearest bucket
    /// during the leave-one-out pass.
    pub usage: Vec<u64>,
}

/// Leave-one-out over types: each held-out type's nearest bucket (k=1, the
/// classifier's weighted metric) credits every member with the held-out
/// token frequency — toward the numerator too when the classes match.
pub fn cps_scores(base: &InstanceBase, w: &WeightVector) -> CpsScores {
    let types = base.types();
    let n = types.len();
    // map phase: nearest-bucket membership per held-out type
    let buckets: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|held_out| {
            let query = &types[held_out].instance;
            let mut best = f64::INFINITY;
            let mut members: Vec<usize> = Vec::new();
            for (i, t) in types.iter().enumerate() {
                if i == held_out {
                    continue;
                }
                let d = crate::metrics::weighted_distance_raw(
                    &query.values,
                    &t.instance.values,
                    w.as_slice(),
                );
                if d < best {
                    best = d;
                    members.clear();
                    members.push(i);
                } else if d == best {
                    members.push(i);
                }
            }
            members
        })
        .collect();
    let mut num = vec![0u64; n];
    let mut den = vec![0u64; n];
    for (held_out, members) in buckets.iter().enumerate() {
        let freq = types[held_out].frequency;
        let class = types[held_out].instance.label;
        for &m in members {
            den[m] += freq;
            if types[m].instance.label == class {
                num[m] += freq;
            }
        }
    }
    let cps = num
        .iter()
        .zip(&den)
        .map(|(&n, &d)| if d == 0 { 1.0 } else { n as f64 / d as f64 })
        .collect();
    CpsScores { cps, usage: den }
}

/// Both exceptionality measures over one base.
#[derive(Debug, Clone)]
pub struct ExceptionalityScores {
    pub typicality: Vec<f64>,
    pub cps: Vec<f64>,
    pub usage_count: Vec<u64>,
}

pub fn exceptionality_scores(base: &InstanceBase, w: &WeightVector) -> ExceptionalityScores {
    let typicality = typicality_scores(base);
    let CpsScores { cps, usage } = cps_scores(base, w);
    ExceptionalityScores {
        typicality,
        cps,
        usage_count: usage,
    }
}

impl ExceptionalityScores {
    /// CSV export: type id, frequency, typicality, cps, usage_count.
    pub fn write_csv(&self, base: &InstanceBase, mut out: impl Write) -> Result<()> {
        writeln!(out, "type,frequency,typicality,cps,usage_count")?;
        for (i, t) in base.types().iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{}",
                i, t.frequency, self.typicality[i], self.cps[i], self.usage_count[i]
            )?;
        }
        Ok(())
    }
}

/// Which score a plan sorts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Typicality,
    Cps,
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Criterion::Typicality => write!(f, "typicality"),
            Criterion::Cps => write!(f, "cps"),
        }
    }
}

/// Whether the lowest-scored or highest-scored types are removed first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Low,
    High,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Direction::Low => write!(f, "low"),
            Direction::High => write!(f, "high"),
        }
    }
}

/// A resolved removal plan: whole types, in removal order.
#[derive(Debug, Clone, Serialize)]
pub struct EditPlan {
    pub criterion: Criterion,
    pub direction: Direction,
    pub level_percent: f64,
    /// Type indices in the order the greedy walk removed them.
    pub removed: Vec<usize>,
    pub removed_tokens: u64,
    pub base_token_count: u64,
    pub base_type_count: usize,
}

impl EditPlan {
    /// Smallest token count that reaches the level: the exact percentage when
    /// it is integral, otherwise the next whole token.
    pub fn target_tokens(level_percent: f64, token_count: u64) -> u64 {
        let raw = level_percent * token_count as f64 / 100.0;
        let rounded = raw.round();
        if (raw - rounded).abs() < 1e-9 {
            rounded as u64
        } else {
            raw.ceil() as u64
        }
    }
}

/// Sort types by score (ascending for `Low`, descending for `High`; ties by
/// lower frequency, then interning order) and remove whole types until the
/// removed token count first reaches or exceeds `level_percent` of the base.
pub fn edit_plan(
    base: &InstanceBase,
    scores: &ExceptionalityScores,
    criterion: Criterion,
    direction: Direction,
    level_percent: f64,
) -> Result<EditPlan> {
    if !(level_percent > 0.0 && level_percent < 100.0) {
        return Err(Error::invalid(format!(
            "editing level must be strictly between 0 and 100 percent, got {level_percent}"
        )));
    }
    let score = match criterion {
        Criterion::Typicality => &scores.typicality,
        Criterion::Cps => &scores.cps,
    };
    if score.len() != base.n_types() {
        return Err(Error::invalid(
            "scores were not computed over this base".to_string(),
        ));
    }
    let mut order: Vec<usize> = (0..base.n_types()).collect();
    order.sort_by(|&a, &b| {
        let primary = match direction {
            Direction::Low => score[a].total_cmp(&score[b]),
            Direction::High => score[b].total_cmp(&score[a]),
        };
        primary
            .then_with(|| base.types()[a].frequency.cmp(&base.types()[b].frequency))
            .then(a.cmp(&b))
    });
    let target = EditPlan::target_tokens(level_percent, base.token_count());
    let mut removed = Vec::new();
    let mut removed_tokens = 0u64;
    for i in order {
        if removed_tokens >= target {
            break;
        }
        removed_tokens += base.types()[i].frequency;
        removed.push(i);
    }
    if removed_tokens >= base.token_count() {
        return Err(Error::invalid(format!(
            "editing {level_percent}% would remove every token"
        )));
    }
    Ok(EditPlan {
        criterion,
        direction,
        level_percent,
        removed,
        removed_tokens,
        base_token_count: base.token_count(),
        base_type_count: base.n_types(),
    })
}

/// The base with the plan's types removed.
pub fn apply_plan(base: &InstanceBase, plan: &EditPlan) -> InstanceBase {
    let removed: BTreeSet<usize> = plan.removed.iter().copied().collect();
    let counts: Vec<u64> = base
        .types()
        .iter()
        .enumerate()
        .map(|(i, t)| if removed.contains(&i) { 0 } else { t.frequency })
        .collect();
    base.subset(&counts)
}

/// Percentage overlap between two plans' removed type sets (Jaccard × 100).
/// Both plans must come from the same base at the same level.
pub fn edit_overlap(a: &EditPlan, b: &EditPlan) -> Result<f64> {
    if a.base_token_count != b.base_token_count || a.base_type_count != b.base_type_count {
        return Err(Error::invalid(
            "plans were computed over different bases".to_string(),
        ));
    }
    if a.level_percent != b.level_percent {
        return Err(Error::invalid(
            "plans were computed at different levels".to_string(),
        ));
    }
    let sa: BTreeSet<usize> = a.removed.iter().copied().collect();
    let sb: BTreeSet<usize> = b.removed.iter().copied().collect();
    let intersection = sa.intersection(&sb).count();
    let union = sa.union(&sb).count();
    if union == 0 {
        return Ok(100.0);
    }
    Ok(100.0 * intersection as f64 / union as f64)
}

/// One point of an editing curve.
#[derive(Debug, Clone, Serialize)]
pub struct EditingPoint {
    pub level_percent: f64,
    pub removed_tokens: u64,
    pub removed_types: usize,
    pub accuracy: f64,
    /// McNemar against the unedited baseline; absent for the baseline point.
    pub mcnemar: Option<McNemarTest>,
    pub significant: Option<bool>,
}

/// Accuracy curve for one criterion/direction pair.
#[derive(Debug, Clone, Serialize)]
pub struct EditingCurve {
    pub criterion: Criterion,
    pub direction: Direction,
    pub points: Vec<EditingPoint>,
}

/// Full editing experiment output.
#[derive(Debug, Clone)]
pub struct EditingReport {
    pub baseline: EvalOutcome,
    pub scores: ExceptionalityScores,
    pub curves: Vec<EditingCurve>,
    /// Plans per (criterion, direction) in curve order, per level, for
    /// overlap analyses. Level-0 slots carry no plan.
    pub plans: Vec<Vec<Option<EditPlan>>>,
}

/// For each criterion, direction and level: edit the training set, recompute
/// gain-ratio weights on the edited set, classify the untouched test set, and
/// test the outcome against the unedited baseline with McNemar. A level of 0
/// stands for the unedited baseline itself.
pub fn run_editing_experiment(
    train: &InstanceBase,
    test: &InstanceBase,
    criteria: &[Criterion],
    directions: &[Direction],
    levels: &[f64],
    k: usize,
    weighting: Weighting,
) -> Result<EditingReport> {
    let baseline = evaluate(train, test, k, weighting)?;
    let scores = exceptionality_scores(train, &baseline.weights);
    let gold = baseline.gold();
    let baseline_preds = baseline.predictions();

    let mut curves = Vec::new();
    let mut all_plans = Vec::new();
    for &criterion in criteria {
        for &direction in directions {
            let mut points = Vec::new();
            let mut plans = Vec::new();
            for &level in levels {
                if level == 0.0 {
                    points.push(EditingPoint {
                        level_percent: 0.0,
                        removed_tokens: 0,
                        removed_types: 0,
                        accuracy: baseline.accuracy,
                        mcnemar: None,
                        significant: None,
                    });
                    plans.push(None);
                    continue;
                }
                let plan = edit_plan(train, &scores, criterion, direction, level)?;
                let edited = apply_plan(train, &plan);
                let outcome = evaluate(&edited, test, k, weighting)?;
                let test_result = mcnemar(&gold, &baseline_preds, &outcome.predictions())?;
                points.push(EditingPoint {
                    level_percent: level,
                    removed_tokens: plan.removed_tokens,
                    removed_types: plan.removed.len(),
                    accuracy: outcome.accuracy,
                    significant: Some(test_result.p < 0.05),
                    mcnemar: Some(test_result),
                });
                plans.push(Some(plan));
            }
            curves.push(EditingCurve {
                criterion,
                direction,
                points,
            });
            all_plans.push(plans);
        }
    }
    Ok(EditingReport {
        baseline,
        scores,
        curves,
        plans: all_plans,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{InstanceBase, LoadOptions};
    use approx::assert_abs_diff_eq;
    use std::io::Cursor;

    fn load(csv: &str) -> InstanceBase {
        InstanceBase::load(Cursor::new(csv), &LoadOptions::default()).unwrap()
    }

    fn toy4() -> InstanceBase {
        load("a,a,a,X\na,a,b,X\nb,b,a,Y\nb,b,b,Y\n")
    }

    fn w110() -> WeightVector {
        WeightVector::new(vec![1.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn toy4_typicality_of_i1() {
        let typ = typicality_scores(&toy4());
        let intra = 1.0 - (1.0f64 / 3.0).sqrt();
        let inter = (1.0 - (2.0f64 / 3.0).sqrt()) / 2.0;
        assert_abs_diff_eq!(typ[0], intra / inter, epsilon = 1e-12);
        assert_abs_diff_eq!(typ[0], 4.606, epsilon = 1e-3);
        assert_abs_diff_eq!(intra, 0.42265, epsilon = 1e-5);
        assert_abs_diff_eq!(inter, 0.09175, epsilon = 1e-5);
    }

    #[test]
    fn identical_family_and_maximal_enemies_hit_the_cap() {
        // family identical to the subject, every enemy mismatches everywhere
        let base = load("a,a,X\na,a,X\nb,b,Y\n");
        let typ = typicality_scores(&base);
        // intra similarity 1, inter similarity 0
        assert_eq!(typ[0], TYPICALITY_CAP);
    }

    #[test]
    fn singleton_class_is_maximally_atypical() {
        let base = load("a,a,X\nb,b,Y\nb,a,Y\n");
        let typ = typicality_scores(&base);
        assert_eq!(typ[0], 0.0);
    }

    #[test]
    fn include_self_raises_intra() {
        let base = load("a,a,X\nb,b,X\nb,a,Y\n");
        let default = typicality_scores(&base);
        let with_self = typicality_scores_with(
            &base,
            &TypicalityOptions {
                include_self: true,
                token_weighted: true,
            },
        );
        assert!(with_self[0] > default[0]);
    }

    #[test]
    fn typicality_is_invariant_under_uniform_duplication() {
        let once = load("a,a,X\na,b,X\nb,b,Y\nb,a,Y\n");
        let csv_thrice: String = "a,a,X\na,b,X\nb,b,Y\nb,a,Y\n".repeat(3);
        let thrice = load(&csv_thrice);
        let t1 = typicality_scores(&once);
        let t3 = typicality_scores(&thrice);
        for (a, b) in t1.iter().zip(&t3) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn toy4_cps_is_all_ones() {
        let scores = cps_scores(&toy4(), &w110());
        assert_eq!(scores.cps, vec![1.0; 4]);
        assert_eq!(scores.usage, vec![1; 4]);
    }

    #[test]
    fn opposite_class_twin_gets_zero_credit() {
        let base = load("a,b,X\na,b,Y\nz,z,X\n");
        let scores = cps_scores(&base, &WeightVector::uniform(2));
        // each twin is the sole nearest neighbor of the other, class mismatch
        assert_eq!(scores.cps[0], 0.0);
        assert_eq!(scores.cps[1], 0.0);
    }

    #[test]
    fn unused_type_defaults_to_one_with_zero_usage() {
        // the far-away singleton is nobody's nearest neighbor
        let base = load("a,a,a,X\na,a,b,X\na,b,a,X\nz,z,z,Y\n");
        let scores = cps_scores(&base, &WeightVector::uniform(3));
        assert_eq!(scores.cps[3], 1.0);
        assert_eq!(scores.usage[3], 0);
        assert!(scores.usage[0] > 0);
    }

    #[test]
    fn cps_denominators_are_conserved() {
        let base = load("a,a,X\na,a,X\na,b,X\nb,b,Y\nb,a,Y\nb,b,X\n");
        let w = WeightVector::uniform(2);
        let scores = cps_scores(&base, &w);
        // independent recount: every held-out type contributes its frequency
        // once per bucket member
        let mut expected = 0u64;
        for (held_out, t) in base.types().iter().enumerate() {
            let mut best = f64::INFINITY;
            let mut size = 0u64;
            for (i, o) in base.types().iter().enumerate() {
                if i == held_out {
                    continue;
                }
                let d = crate::metrics::weighted_distance(&t.instance, &o.instance, &w).unwrap();
                if d < best {
                    best = d;
                    size = 1;
                } else if d == best {
                    size += 1;
                }
            }
            expected += t.frequency * size;
        }
        assert_eq!(scores.usage.iter().sum::<u64>(), expected);
    }

    fn fake_scores(values: &[f64]) -> ExceptionalityScores {
        ExceptionalityScores {
            typicality: values.to_vec(),
            cps: values.to_vec(),
            usage_count: vec![0; values.len()],
        }
    }

    #[test]
    fn single_type_target_removes_exactly_that_type() {
        let base = load("a,a,X\na,a,X\nb,b,Y\nc,c,Y\n");
        // scores: the frequency-2 type is the lowest
        let scores = fake_scores(&[0.1, 0.5, 0.9]);
        let plan = edit_plan(&base, &scores, Criterion::Typicality, Direction::Low, 50.0).unwrap();
        assert_eq!(plan.removed, vec![0]);
        assert_eq!(plan.removed_tokens, 2);
    }

    #[test]
    fn level_zero_and_hundred_are_rejected() {
        let base = toy4();
        let scores = fake_scores(&[0.1, 0.2, 0.3, 0.4]);
        assert!(edit_plan(&base, &scores, Criterion::Cps, Direction::Low, 0.0).is_err());
        assert!(edit_plan(&base, &scores, Criterion::Cps, Direction::Low, 100.0).is_err());
    }

    #[test]
    fn thirty_percent_of_ten_singletons_takes_three_types() {
        let csv: String = (0..10).map(|i| format!("v{i},w{i},C\n")).collect();
        let base = load(&csv);
        let scores = fake_scores(&[0.3, 0.1, 0.9, 0.2, 0.8, 0.7, 0.6, 0.5, 0.4, 0.95]);
        let plan = edit_plan(&base, &scores, Criterion::Typicality, Direction::Low, 30.0).unwrap();
        assert_eq!(plan.removed_tokens, 3);
        assert_eq!(plan.removed, vec![1, 3, 0]);
        let high = edit_plan(&base, &scores, Criterion::Typicality, Direction::High, 30.0).unwrap();
        assert_eq!(high.removed, vec![9, 2, 4]);
    }

    #[test]
    fn removing_everything_is_an_error() {
        let base = load("a,a,X\nb,b,Y\n");
        let scores = fake_scores(&[0.1, 0.2]);
        // 99% of 2 tokens targets 2 tokens = the whole base
        assert!(edit_plan(&base, &scores, Criterion::Cps, Direction::Low, 99.0).is_err());
    }

    #[test]
    fn score_ties_break_by_frequency_then_order() {
        let base = load("a,a,X\na,a,X\nb,b,Y\nc,c,X\n");
        let scores = fake_scores(&[0.5, 0.5, 0.5]);
        let plan = edit_plan(&base, &scores, Criterion::Cps, Direction::Low, 40.0).unwrap();
        // singletons first (indices 1 then 2), then the frequency-2 type
        assert_eq!(plan.removed, vec![1, 2]);
    }

    #[test]
    fn overlap_examples() {
        let base = toy4();
        let scores = fake_scores(&[0.1, 0.2, 0.3, 0.4]);
        let a = edit_plan(&base, &scores, Criterion::Typicality, Direction::Low, 25.0).unwrap();
        let b = edit_plan(&base, &scores, Criterion::Cps, Direction::Low, 25.0).unwrap();
        assert_eq!(edit_overlap(&a, &a).unwrap(), 100.0);
        assert_eq!(edit_overlap(&a, &b).unwrap(), 100.0);
        let c = edit_plan(&base, &scores, Criterion::Cps, Direction::High, 25.0).unwrap();
        assert_eq!(edit_overlap(&a, &c).unwrap(), 0.0);
    }

    #[test]
    fn overlap_jaccard_arithmetic() {
        let a = EditPlan {
            criterion: Criterion::Typicality,
            direction: Direction::Low,
            level_percent: 10.0,
            removed: (0..10).collect(),
            removed_tokens: 10,
            base_token_count: 100,
            base_type_count: 100,
        };
        let b = EditPlan {
            removed: (5..15).collect(),
            ..a.clone()
        };
        assert_abs_diff_eq!(edit_overlap(&a, &b).unwrap(), 100.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn overlap_rejects_mismatched_plans() {
        let a = EditPlan {
            criterion: Criterion::Typicality,
            direction: Direction::Low,
            level_percent: 10.0,
            removed: vec![0],
            removed_tokens: 1,
            base_token_count: 10,
            base_type_count: 10,
        };
        let different_base = EditPlan {
            base_token_count: 20,
            ..a.clone()
        };
        let different_level = EditPlan {
            level_percent: 20.0,
            ..a.clone()
        };
        assert!(edit_overlap(&a, &different_base).is_err());
        assert!(edit_overlap(&a, &different_level).is_err());
    }

    #[test]
    fn level_zero_point_is_the_baseline() {
        let train = load(
            "a,a,X\na,a,X\na,b,X\nb,b,Y\nb,b,Y\nb,a,Y\nc,c,X\nc,d,Y\n",
        );
        let test = load("a,a,X\nb,b,Y\n");
        let report = run_editing_experiment(
            &train,
            &test,
            &[Criterion::Typicality],
            &[Direction::Low],
            &[0.0, 25.0],
            1,
            Weighting::Uniform,
        )
        .unwrap();
        let points = &report.curves[0].points;
        assert_eq!(points[0].accuracy, report.baseline.accuracy);
        assert_eq!(points[0].removed_tokens, 0);
        assert!(points[1].removed_tokens >= 2);
        // removed token counts never decrease along the level grid
        assert!(points[1].removed_tokens >= points[0].removed_tokens);
    }
}
