//! Gradient-cosine membership inference against component gradient sums.

use serde::{Deserialize, Serialize};

use crate::adversary::HonestPartition;
use crate::attack::model::dot;
use crate::attack::training::GradientBundle;
use crate::attack::{AttackMetrics, AttackOutcome};
use crate::error::{invalid, Error, Result};

/// Cosine similarity between a candidate gradient and a component sum.
pub fn membership_score(candidate_grad: &[f64], component_sum: &[f64]) -> Result<f64> {
    if candidate_grad.len() != component_sum.len() {
        return invalid(format!(
            "gradient dimensions differ: {} vs {}",
            candidate_grad.len(),
            component_sum.len()
        ));
    }
    let na = dot(candidate_grad, candidate_grad).sqrt();
    let nb = dot(component_sum, component_sum).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedScore("zero-norm gradient".into()));
    }
    Ok((dot(candidate_grad, component_sum) / (na * nb)).clamp(-1.0, 1.0))
}

/// A sample the adversary tests against the component of `target_node`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipCandidate {
    pub target_node: usize,
    pub member: bool,
    /// Candidate gradient under each round's model, aligned with the bundles.
    pub gradients: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode", content = "round")]
pub enum RoundPolicy {
    /// Mean score over every observed round.
    #[default]
    Average,
    /// Score from one round only (index into the bundles).
    Single(usize),
}

/// Area under the ROC curve by the rank-sum statistic; ties count half.
pub fn roc_auc(member_scores: &[f64], nonmember_scores: &[f64]) -> Result<f64> {
    if member_scores.is_empty() || nonmember_scores.is_empty() {
        return invalid("AUC needs both members and non-members");
    }
    let mut wins = 0.0;
    for &m in member_scores {
        for &o in nonmember_scores {
            wins += if m > o {
                1.0
            } else if m == o {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(wins / (member_scores.len() * nonmember_scores.len()) as f64)
}

/// Best balanced accuracy over thresholds of the rule `score >= t`, with
/// the threshold achieving it.
pub fn best_balanced_accuracy(member_scores: &[f64], nonmember_scores: &[f64]) -> Result<(f64, f64)> {
    if member_scores.is_empty() || nonmember_scores.is_empty() {
        return invalid("balanced accuracy needs both members and non-members");
    }
    let mut thresholds: Vec<f64> = member_scores.iter().chain(nonmember_scores).copied().collect();
    thresholds.push(f64::INFINITY);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let (nm, no) = (member_scores.len() as f64, nonmember_scores.len() as f64);
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    for &t in &thresholds {
        let tpr = member_scores.iter().filter(|&&s| s >= t).count() as f64 / nm;
        let tnr = nonmember_scores.iter().filter(|&&s| s < t).count() as f64 / no;
        let acc = 0.5 * (tpr + tnr);
        if acc > best.0 {
            best = (acc, t);
        }
    }
    Ok(best)
}

/// Scores every candidate against the gradient sum of its target's
/// component and summarizes the separation of members from non-members.
pub fn membership_attack_eval(
    p: &HonestPartition,
    bundles: &[GradientBundle],
    candidates: &[MembershipCandidate],
    policy: RoundPolicy,
) -> Result<AttackOutcome> {
    if bundles.is_empty() {
        return invalid("no gradient rounds observed");
    }
    let rounds: Vec<usize> = match policy {
        RoundPolicy::Average => (0..bundles.len()).collect(),
        RoundPolicy::Single(r) if r < bundles.len() => vec![r],
        RoundPolicy::Single(r) => return invalid(format!("round {r} not among {} bundles", bundles.len())),
    };
    let comp_of = p.component_of();
    let mut sums: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; bundles.len()]; p.count()];
    let mut members = Vec::new();
    let mut nonmembers = Vec::new();
    for c in candidates {
        let k = comp_of
            .get(c.target_node)
            .copied()
            .flatten()
            .ok_or_else(|| Error::InvalidParameter(format!("target {} is not honest", c.target_node)))?;
        if c.gradients.len() != bundles.len() {
            return invalid("candidate gradients must align with the bundles");
        }
        let mut total = 0.0;
        for &r in &rounds {
            let sum = sums[k][r].get_or_insert_with(|| bundles[r].sum_over(&p.components[k]));
            total += membership_score(&c.gradients[r], sum)?;
        }
        let score = total / rounds.len() as f64;
        if c.member {
            members.push(score);
        } else {
            nonmembers.push(score);
        }
    }
    if members.is_empty() || nonmembers.is_empty() {
        return invalid("need at least one member and one non-member candidate");
    }
    let auc = roc_auc(&members, &nonmembers)?;
    let (success_rate, threshold) = best_balanced_accuracy(&members, &nonmembers)?;
    Ok(AttackOutcome {
        metrics: AttackMetrics::Membership {
            auc,
            success_rate,
            threshold,
        },
        component_sizes: p.sizes(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::honest_partition;
    use crate::graph::Graph;

    #[test]
    fn score_examples() {
        let g = [0.3, -1.2, 2.0];
        assert!((membership_score(&g, &g).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(membership_score(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        let scaled: Vec<f64> = g.iter().map(|v| v * 4.5).collect();
        let s = [1.0, 1.0, 1.0];
        assert!((membership_score(&scaled, &s).unwrap() - membership_score(&g, &s).unwrap()).abs() < 1e-15);
        assert!(matches!(
            membership_score(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::UndefinedScore(_))
        ));
        assert!(membership_score(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn auc_and_accuracy() {
        assert_eq!(roc_auc(&[0.9, 0.8], &[0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5], &[0.5]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.1], &[0.9]).unwrap(), 0.0);
        let (acc, t) = best_balanced_accuracy(&[0.9, 0.8], &[0.1, 0.85]).unwrap();
        assert_eq!(acc, 0.75);
        assert!(t == 0.9 || t == 0.8);
        assert!(roc_auc(&[], &[1.0]).is_err());
    }

    #[test]
    fn singleton_components_separate_perfectly() {
        let g = Graph::path(3);
        let p = honest_partition(&g, &[1]).unwrap();
        let bundle = GradientBundle::new(0, vec![vec![1.0, 0.0], vec![5.0, 5.0], vec![0.0, 1.0]]).unwrap();
        let cands = vec![
            MembershipCandidate {
                target_node: 0,
                member: true,
                gradients: vec![vec![1.0, 0.0]],
            },
            MembershipCandidate {
                target_node: 0,
                member: false,
                gradients: vec![vec![0.5, 0.5]],
            },
            MembershipCandidate {
                target_node: 2,
                member: true,
                gradients: vec![vec![0.0, 2.0]],
            },
            MembershipCandidate {
                target_node: 2,
                member: false,
                gradients: vec![vec![1.0, 0.2]],
            },
        ];
        let out = membership_attack_eval(&p, std::slice::from_ref(&bundle), &cands, RoundPolicy::Average).unwrap();
        match out.metrics {
            AttackMetrics::Membership { auc, success_rate, .. } => {
                assert_eq!(auc, 1.0);
                assert_eq!(success_rate, 1.0);
            }
            _ => panic!("wrong metrics"),
        }
        assert_eq!(out.component_sizes, vec![1, 1]);
        let corrupt_target = vec![MembershipCandidate {
            target_node: 1,
            member: true,
            gradients: vec![vec![1.0, 0.0]],
        }];
        assert!(
            membership_attack_eval(&p, std::slice::from_ref(&bundle), &corrupt_target, RoundPolicy::Average).is_err()
        );
        assert!(membership_attack_eval(&p, std::slice::from_ref(&bundle), &cands[..1], RoundPolicy::Average).is_err());
        assert!(membership_attack_eval(&p, &[bundle], &cands, RoundPolicy::Single(3)).is_err());
    }
}
