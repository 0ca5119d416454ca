//! Scoring and refinement analyses: precision/recall/F1, exact match,
//! duplicate-argument counts, per-iteration transition matrices and
//! breakdowns by sentence length or argument count.
//!
//! An argument is a (token, role) pair with a non-none role; a prediction
//! is correct when both parts match. Exact match is counted over
//! propositions (instances), not sentences. F1 here scores roles only;
//! predicate senses are echoed through unscored.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::conll::NONE_ROLE_ID;

/// Marker recorded in every report: senses are not part of this score.
pub const METRIC_NAME: &str = "role-only-f1";

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("misaligned corpora: {0}")]
    Misaligned(String),
    #[error("trajectory needs at least two iterations, got {0}")]
    TrajectoryTooShort(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub metric: &'static str,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Fraction of propositions whose full role sequence matches gold.
    pub exact_match: f64,
    pub token_accuracy: f64,
    pub predicted_args: usize,
    pub gold_args: usize,
    pub correct_args: usize,
    pub propositions: usize,
    pub exact_matches: usize,
    pub tokens: usize,
    pub correct_tokens: usize,
}

impl EvalReport {
    fn from_counts(
        predicted_args: usize,
        gold_args: usize,
        correct_args: usize,
        propositions: usize,
        exact_matches: usize,
        tokens: usize,
        correct_tokens: usize,
    ) -> EvalReport {
        let precision = ratio(correct_args, predicted_args);
        let recall = ratio(correct_args, gold_args);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        EvalReport {
            metric: METRIC_NAME,
            precision,
            recall,
            f1,
            exact_match: ratio(exact_matches, propositions),
            token_accuracy: ratio(correct_tokens, tokens),
            predicted_args,
            gold_args,
            correct_args,
            propositions,
            exact_matches,
            tokens,
            correct_tokens,
        }
    }
}

fn ratio(num: usize, denom: usize) -> f64 {
    if denom == 0 {
        0.0
    } else {
        num as f64 / denom as f64
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "metric          {}", self.metric)?;
        writeln!(
            f,
            "precision       {:.4}  ({}/{})",
            self.precision, self.correct_args, self.predicted_args
        )?;
        writeln!(
            f,
            "recall          {:.4}  ({}/{})",
            self.recall, self.correct_args, self.gold_args
        )?;
        writeln!(f, "f1              {:.4}", self.f1)?;
        writeln!(
            f,
            "exact match     {:.4}  ({}/{})",
            self.exact_match, self.exact_matches, self.propositions
        )?;
        write!(
            f,
            "token accuracy  {:.4}  ({}/{})",
            self.token_accuracy, self.correct_tokens, self.tokens
        )
    }
}

/// Score predicted role sequences against gold, instance by instance.
pub fn score(gold: &[Vec<usize>], predicted: &[Vec<usize>]) -> Result<EvalReport, EvalError> {
    if gold.len() != predicted.len() {
        return Err(EvalError::Misaligned(format!(
            "{} gold instances vs {} predicted",
            gold.len(),
            predicted.len()
        )));
    }
    let mut counts = (0usize, 0usize, 0usize); // predicted, gold, correct
    let mut exact = 0usize;
    let mut tokens = 0usize;
    let mut correct_tokens = 0usize;
    for (q, (g, p)) in gold.iter().zip(predicted).enumerate() {
        if g.len() != p.len() {
            return Err(EvalError::Misaligned(format!(
                "instance {q}: {} gold tokens vs {} predicted",
                g.len(),
                p.len()
            )));
        }
        let mut all_match = true;
        for (&gr, &pr) in g.iter().zip(p) {
            tokens += 1;
            if gr == pr {
                correct_tokens += 1;
            } else {
                all_match = false;
            }
            if pr != NONE_ROLE_ID {
                counts.0 += 1;
            }
            if gr != NONE_ROLE_ID {
                counts.1 += 1;
            }
            if gr != NONE_ROLE_ID && gr == pr {
                counts.2 += 1;
            }
        }
        if all_match {
            exact += 1;
        }
    }
    Ok(EvalReport::from_counts(
        counts.0,
        counts.1,
        counts.2,
        gold.len(),
        exact,
        tokens,
        correct_tokens,
    ))
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct DuplicateReport {
    /// Propositions containing at least one role assigned to two or more
    /// tokens.
    pub violations: usize,
    pub propositions: usize,
    /// Per role id: number of propositions in which it is duplicated.
    pub per_role: BTreeMap<usize, usize>,
}

/// Count propositions violating the role-uniqueness expectation.
pub fn count_duplicate_violations(instances: &[Vec<usize>]) -> DuplicateReport {
    let mut report = DuplicateReport {
        propositions: instances.len(),
        ..DuplicateReport::default()
    };
    for roles in instances {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &r in roles {
            if r != NONE_ROLE_ID {
                *counts.entry(r).or_default() += 1;
            }
        }
        let mut violated = false;
        for (role, n) in counts {
            if n >= 2 {
                violated = true;
                *report.per_role.entry(role).or_default() += 1;
            }
        }
        if violated {
            report.violations += 1;
        }
    }
    report
}

/// Label changes between one consecutive pair of iterations.
///
/// `correct[from * labels + to]` counts tokens whose argmax moved from
/// `from` to `to` (`from != to`) and landed on the gold label; `wrong`
/// counts the rest. The diagonal is excluded: an unchanged label is not a
/// transition.
#[derive(Debug, Clone, Serialize)]
pub struct TransitionMatrix {
    pub iteration_pair: (usize, usize),
    pub labels: usize,
    pub correct: Vec<u64>,
    pub wrong: Vec<u64>,
}

impl TransitionMatrix {
    pub fn total_changes(&self) -> u64 {
        self.correct.iter().sum::<u64>() + self.wrong.iter().sum::<u64>()
    }

    pub fn correct_at(&self, from: usize, to: usize) -> u64 {
        self.correct[from * self.labels + to]
    }

    pub fn wrong_at(&self, from: usize, to: usize) -> u64 {
        self.wrong[from * self.labels + to]
    }
}

/// Compare argmax labelings of consecutive iterations against gold.
///
/// `iterations[t][instance][token]` holds the label assigned after
/// iteration `t`; at least two iterations are required.
pub fn transitions(
    iterations: &[Vec<Vec<usize>>],
    gold: &[Vec<usize>],
    n_labels: usize,
) -> Result<Vec<TransitionMatrix>, EvalError> {
    if iterations.len() < 2 {
        return Err(EvalError::TrajectoryTooShort(iterations.len()));
    }
    for (t, labeling) in iterations.iter().enumerate() {
        if labeling.len() != gold.len() {
            return Err(EvalError::Misaligned(format!(
                "iteration {t}: {} instances vs {} gold",
                labeling.len(),
                gold.len()
            )));
        }
    }
    let mut out = Vec::with_capacity(iterations.len() - 1);
    for t in 0..iterations.len() - 1 {
        let mut matrix = TransitionMatrix {
            iteration_pair: (t, t + 1),
            labels: n_labels,
            correct: vec![0; n_labels * n_labels],
            wrong: vec![0; n_labels * n_labels],
        };
        for (q, gold_roles) in gold.iter().enumerate() {
            let before = &iterations[t][q];
            let after = &iterations[t + 1][q];
            if before.len() != gold_roles.len() || after.len() != gold_roles.len() {
                return Err(EvalError::Misaligned(format!(
                    "instance {q}: labeling length mismatch"
                )));
            }
            for ((&b, &a), &g) in before.iter().zip(after).zip(gold_roles) {
                if b == a {
                    continue;
                }
                let cell = b * n_labels + a;
                if a == g {
                    matrix.correct[cell] += 1;
                } else {
                    matrix.wrong[cell] += 1;
                }
            }
        }
        out.push(matrix);
    }
    Ok(out)
}

/// Signed log transform for displaying large signed counts:
/// `sign(q) * ln(|q|)`, with 0 mapping to 0 (and so does |q| = 1).
pub fn signlog(q: f64) -> f64 {
    if q == 0.0 {
        0.0
    } else {
        q.signum() * q.abs().ln()
    }
}

/// Role ids whose gold occurrence count exceeds `threshold` (the none
/// role included), for filtering transition displays.
pub fn frequent_labels(gold: &[Vec<usize>], n_labels: usize, threshold: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n_labels];
    for roles in gold {
        for &r in roles {
            if r < n_labels {
                counts[r] += 1;
            }
        }
    }
    (0..n_labels).filter(|&r| counts[r] > threshold).collect()
}

/// Render one count matrix as CSV: rows = from-label, columns = to-label,
/// restricted to `keep` labels.
pub fn transition_csv(
    counts: &[u64],
    n_labels: usize,
    keep: &[usize],
    label_names: &[String],
) -> String {
    let mut out = String::from("from\\to");
    for &to in keep {
        out.push(',');
        out.push_str(&label_names[to]);
    }
    out.push('\n');
    for &from in keep {
        out.push_str(&label_names[from]);
        for &to in keep {
            out.push(',');
            out.push_str(&counts[from * n_labels + to].to_string());
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakdownKey {
    /// Bin by sentence length: 0-9, 10-19, ...
    SentenceLengthDecade,
    /// Bin by the number of gold arguments in the proposition.
    ArgumentCount,
}

/// Per-bin scores; empty bins are absent. Bin ids are the decade index
/// (length / 10) or the argument count.
pub fn breakdown(
    gold: &[Vec<usize>],
    predicted: &[Vec<usize>],
    key: BreakdownKey,
) -> Result<BTreeMap<usize, EvalReport>, EvalError> {
    if gold.len() != predicted.len() {
        return Err(EvalError::Misaligned(format!(
            "{} gold instances vs {} predicted",
            gold.len(),
            predicted.len()
        )));
    }
    let mut bins: BTreeMap<usize, (Vec<Vec<usize>>, Vec<Vec<usize>>)> = BTreeMap::new();
    for (g, p) in gold.iter().zip(predicted) {
        let bin = match key {
            BreakdownKey::SentenceLengthDecade => g.len() / 10,
            BreakdownKey::ArgumentCount => g.iter().filter(|&&r| r != NONE_ROLE_ID).count(),
        };
        let entry = bins.entry(bin).or_default();
        entry.0.push(g.clone());
        entry.1.push(p.clone());
    }
    bins.into_iter()
        .map(|(bin, (g, p))| Ok((bin, score(&g, &p)?)))
        .collect()
}

pub fn bin_label(key: BreakdownKey, bin: usize) -> String {
    match key {
        BreakdownKey::SentenceLengthDecade => format!("{}-{}", bin * 10, bin * 10 + 9),
        BreakdownKey::ArgumentCount => bin.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::collections::HashSet;

    #[test]
    fn perfect_prediction_scores_one() {
        let gold = vec![vec![0, 1, 2], vec![0, 0, 3]];
        let report = score(&gold, &gold).unwrap();
        assert_eq!(report.precision, 1.0);
        assert_eq!(report.recall, 1.0);
        assert_eq!(report.f1, 1.0);
        assert_eq!(report.exact_match, 1.0);
        assert_eq!(report.token_accuracy, 1.0);
    }

    #[test]
    fn half_right_is_half_precision_and_recall() {
        // gold has 2 args; prediction finds 1 of them plus 1 spurious
        let gold = vec![vec![1, 0, 2, 0]];
        let predicted = vec![vec![1, 0, 0, 3]];
        let report = score(&gold, &predicted).unwrap();
        assert_eq!(report.precision, 0.5);
        assert_eq!(report.recall, 0.5);
        assert_eq!(report.f1, 0.5);
        assert_eq!(report.exact_match, 0.0);
    }

    #[test]
    fn misaligned_corpora_error() {
        assert!(score(&[vec![0]], &[]).is_err());
        assert!(score(&[vec![0, 1]], &[vec![0]]).is_err());
    }

    #[test]
    fn score_matches_set_intersection_oracle() {
        // oracle: sets of (token, role) pairs, intersected
        let mut rng = StdRng::seed_from_u64(50);
        for _ in 0..50 {
            let n_inst = rng.random_range(1..6);
            let mut gold = Vec::new();
            let mut pred = Vec::new();
            for _ in 0..n_inst {
                let len = rng.random_range(1..8);
                gold.push((0..len).map(|_| rng.random_range(0..4)).collect::<Vec<_>>());
                pred.push((0..len).map(|_| rng.random_range(0..4)).collect::<Vec<_>>());
            }
            let report = score(&gold, &pred).unwrap();

            let mut g_set = HashSet::new();
            let mut p_set = HashSet::new();
            let mut em = 0usize;
            for (q, (g, p)) in gold.iter().zip(&pred).enumerate() {
                for (i, (&gr, &pr)) in g.iter().zip(p).enumerate() {
                    if gr != 0 {
                        g_set.insert((q, i, gr));
                    }
                    if pr != 0 {
                        p_set.insert((q, i, pr));
                    }
                }
                if g == p {
                    em += 1;
                }
            }
            let correct = g_set.intersection(&p_set).count();
            assert_eq!(report.predicted_args, p_set.len());
            assert_eq!(report.gold_args, g_set.len());
            assert_eq!(report.correct_args, correct);
            let p_oracle = if p_set.is_empty() {
                0.0
            } else {
                correct as f64 / p_set.len() as f64
            };
            let r_oracle = if g_set.is_empty() {
                0.0
            } else {
                correct as f64 / g_set.len() as f64
            };
            assert_eq!(report.precision, p_oracle);
            assert_eq!(report.recall, r_oracle);
            assert_eq!(report.exact_match, em as f64 / n_inst as f64);
        }
    }

    #[test]
    fn duplicate_violations_basic_cases() {
        // [Arg0, Arg0, none] -> one violating proposition
        let r = count_duplicate_violations(&[vec![1, 1, 0]]);
        assert_eq!(r.violations, 1);
        assert_eq!(r.per_role.get(&1), Some(&1));
        // [Arg0, Arg1] -> none
        let r = count_duplicate_violations(&[vec![1, 2]]);
        assert_eq!(r.violations, 0);
        assert!(r.per_role.is_empty());
    }

    #[test]
    fn duplicates_match_multiset_oracle() {
        // oracle: multiset counts per role, violation when any count >= 2
        let mut rng = StdRng::seed_from_u64(51);
        let instances: Vec<Vec<usize>> = (0..1000)
            .map(|_| {
                let len = rng.random_range(1..9);
                (0..len).map(|_| rng.random_range(0..5)).collect()
            })
            .collect();
        let report = count_duplicate_violations(&instances);
        let mut expect = 0;
        for roles in &instances {
            let mut counts = std::collections::HashMap::new();
            for &r in roles {
                if r != 0 {
                    *counts.entry(r).or_insert(0usize) += 1;
                }
            }
            if counts.values().any(|&c| c >= 2) {
                expect += 1;
            }
        }
        assert_eq!(report.violations, expect);
    }

    #[test]
    fn transitions_identical_iterations_are_all_zero() {
        let labeling = vec![vec![0, 1, 2]];
        let gold = vec![vec![0, 1, 2]];
        let ms = transitions(&[labeling.clone(), labeling], &gold, 3).unwrap();
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0].total_changes(), 0);
    }

    #[test]
    fn transition_to_gold_counts_as_correct() {
        // token gold Arg0(1); iteration 1 says none, iteration 2 says Arg0
        let gold = vec![vec![1]];
        let it1 = vec![vec![0]];
        let it2 = vec![vec![1]];
        let ms = transitions(&[it1, it2], &gold, 2).unwrap();
        assert_eq!(ms[0].correct_at(0, 1), 1);
        assert_eq!(ms[0].wrong_at(0, 1), 0);
        assert_eq!(ms[0].total_changes(), 1);
    }

    #[test]
    fn transitions_match_enumeration_oracle() {
        // hand-built: 3 tokens, 2 iterations
        let gold = vec![vec![1, 2, 0]];
        let it1 = vec![vec![1, 0, 2]];
        let it2 = vec![vec![2, 2, 0]];
        let ms = transitions(&[it1.clone(), it2.clone()], &gold, 3).unwrap();
        let m = &ms[0];
        // token 0: 1 -> 2, gold 1, wrong
        // token 1: 0 -> 2, gold 2, correct
        // token 2: 2 -> 0, gold 0, correct
        assert_eq!(m.wrong_at(1, 2), 1);
        assert_eq!(m.correct_at(0, 2), 1);
        assert_eq!(m.correct_at(2, 0), 1);
        assert_eq!(m.total_changes(), 3);
        // changed-token count equals total
        let changed = it1[0].iter().zip(&it2[0]).filter(|(a, b)| a != b).count() as u64;
        assert_eq!(m.total_changes(), changed);
        assert!(transitions(&[vec![vec![0]]], &gold, 3).is_err());
    }

    #[test]
    fn signlog_spot_values() {
        assert_eq!(signlog(0.0), 0.0);
        assert!((signlog(-10.0) + 10f64.ln()).abs() <= 1e-12);
        assert!((signlog(std::f64::consts::E * std::f64::consts::E) - 2.0).abs() <= 1e-12);
        assert_eq!(signlog(1.0), 0.0);
        assert_eq!(signlog(-1.0), 0.0);
    }

    #[test]
    fn breakdown_single_bin_holds_global_report() {
        let gold = vec![vec![1, 0, 2, 0, 0], vec![0, 1, 0, 0, 2]];
        let pred = vec![vec![1, 0, 0, 0, 0], vec![0, 1, 0, 0, 2]];
        let by_len = breakdown(&gold, &pred, BreakdownKey::SentenceLengthDecade).unwrap();
        assert_eq!(by_len.len(), 1);
        let global = score(&gold, &pred).unwrap();
        assert_eq!(by_len[&0], global);
        assert_eq!(bin_label(BreakdownKey::SentenceLengthDecade, 0), "0-9");
    }

    #[test]
    fn breakdown_counts_sum_to_global() {
        let mut rng = StdRng::seed_from_u64(52);
        let mut gold = Vec::new();
        let mut pred = Vec::new();
        for _ in 0..40 {
            let len = rng.random_range(1..25);
            gold.push((0..len).map(|_| rng.random_range(0..4)).collect::<Vec<usize>>());
            pred.push((0..len).map(|_| rng.random_range(0..4)).collect::<Vec<usize>>());
        }
        let global = score(&gold, &pred).unwrap();
        for key in [BreakdownKey::SentenceLengthDecade, BreakdownKey::ArgumentCount] {
            let bins = breakdown(&gold, &pred, key).unwrap();
            let sum = |f: fn(&EvalReport) -> usize| bins.values().map(f).sum::<usize>();
            assert_eq!(sum(|r| r.predicted_args), global.predicted_args);
            assert_eq!(sum(|r| r.gold_args), global.gold_args);
            assert_eq!(sum(|r| r.correct_args), global.correct_args);
            assert_eq!(sum(|r| r.propositions), global.propositions);
            assert_eq!(sum(|r| r.exact_matches), global.exact_matches);
        }
    }

    #[test]
    fn transition_csv_layout() {
        let m = TransitionMatrix {
            iteration_pair: (0, 1),
            labels: 3,
            correct: vec![0, 1, 2, 3, 0, 5, 6, 7, 0],
            wrong: vec![0; 9],
        };
        let names = vec!["None".to_string(), "A0".to_string(), "A1".to_string()];
        let csv = transition_csv(&m.correct, 3, &[0, 2], &names);
        assert_eq!(csv, "from\\to,None,A1\nNone,0,2\nA1,6,0\n");
    }

    #[test]
    fn frequent_label_filter() {
        let gold = vec![vec![0, 0, 1], vec![0, 1, 2]];
        assert_eq!(frequent_labels(&gold, 3, 1), vec![0, 1]);
        assert_eq!(frequent_labels(&gold, 3, 0), vec![0, 1, 2]);
    }
}
