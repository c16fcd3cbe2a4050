use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::retrieval::GoldTarget;

/// Which gold items each ranked passage satisfies, best rank first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryJudgement {
    pub matches: Vec<Vec<usize>>,
    pub gold_items: usize,
}

impl QueryJudgement {
    pub fn from_ranking(ranking: &[u32], targets: &[GoldTarget]) -> Self {
        QueryJudgement {
            matches: ranking
                .iter()
                .map(|pid| {
                    targets
                        .iter()
                        .enumerate()
                        .filter(|(_, t)| t.passages.contains(pid))
                        .map(|(i, _)| i)
                        .collect()
                })
                .collect(),
            gold_items: targets.len(),
        }
    }

    fn covered(&self, k: usize) -> BTreeSet<usize> {
        self.matches.iter().take(k).flatten().copied().collect()
    }

    pub fn hits_at(&self, k: usize) -> usize {
        self.covered(k).len()
    }

    pub fn recall_at(&self, k: usize) -> f64 {
        if self.gold_items == 0 {
            0.0
        } else {
            self.hits_at(k) as f64 / self.gold_items as f64
        }
    }

    pub fn zero_hit_at(&self, k: usize) -> bool {
        self.hits_at(k) == 0
    }

    /// Binary-gain nDCG. A position is relevant when it satisfies a gold
    /// item not already credited at an earlier position.
    pub fn ndcg_at(&self, k: usize) -> f64 {
        let mut credited = BTreeSet::new();
        let mut dcg = 0.0;
        for (i, m) in self.matches.iter().take(k).enumerate() {
            if let Some(item) = m.iter().find(|x| !credited.contains(*x)) {
                credited.insert(*item);
                dcg += 1.0 / ((i + 2) as f64).log2();
            }
        }
        let idcg: f64 = (0..self.gold_items.min(k))
            .map(|i| 1.0 / ((i + 2) as f64).log2())
            .sum();
        if idcg == 0.0 {
            0.0
        } else {
            dcg / idcg
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrAtK {
    pub k: usize,
    pub macro_recall: f64,
    pub micro_recall: f64,
    pub ndcg: f64,
    pub zhr: f64,
}

/// Aggregate per-query judgements at each depth. Summation runs in slice
/// order so results do not depend on scheduling.
pub fn ir_metrics(queries: &[QueryJudgement], depths: &[usize]) -> Vec<IrAtK> {
    depths
        .iter()
        .map(|&k| {
            let n = queries.len();
            if n == 0 {
                return IrAtK {
                    k,
                    macro_recall: 0.0,
                    micro_recall: 0.0,
                    ndcg: 0.0,
                    zhr: 0.0,
                };
            }
            let mut recall_sum = 0.0;
            let mut ndcg_sum = 0.0;
            let mut hits = 0usize;
            let mut items = 0usize;
            let mut zero = 0usize;
            for q in queries {
                recall_sum += q.recall_at(k);
                ndcg_sum += q.ndcg_at(k);
                hits += q.hits_at(k);
                items += q.gold_items;
                zero += usize::from(q.zero_hit_at(k));
            }
            IrAtK {
                k,
                macro_recall: recall_sum / n as f64,
                micro_recall: if items == 0 {
                    0.0
                } else {
                    hits as f64 / items as f64
                },
                ndcg: ndcg_sum / n as f64,
                zhr: zero as f64 / n as f64,
            }
        })
        .collect()
}

/// Rows are gold labels, columns predictions, both in S, R, NEI order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion(pub [[u64; 3]; 3]);

impl Confusion {
    pub fn add(&mut self, gold: Label, predicted: Label) {
        self.0[gold.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..3).map(|i| self.0[i][i]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: Label,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FvMetrics {
    pub total: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub macro_recall: f64,
    pub classes: Vec<ClassMetrics>,
    pub confusion: Confusion,
    /// Set when the matrix is all zero and every metric is 0 by convention.
    pub empty: bool,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision, recall and F1 with `0/0 = 0`; macro scores are
/// unweighted means over the three classes.
pub fn classwise_f1(confusion: &Confusion) -> FvMetrics {
    let m = &confusion.0;
    let classes: Vec<ClassMetrics> = (0..3)
        .map(|c| {
            let tp = m[c][c];
            let predicted: u64 = (0..3).map(|r| m[r][c]).sum();
            let support: u64 = m[c].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                label: Label::from_index(c).expect("three classes"),
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let total = confusion.total();
    FvMetrics {
        total,
        accuracy: ratio(confusion.correct(), total),
        macro_f1: classes.iter().map(|c| c.f1).sum::<f64>() / 3.0,
        macro_recall: classes.iter().map(|c| c.recall).sum::<f64>() / 3.0,
        classes,
        confusion: *confusion,
        empty: total == 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_confusion() {
        let m = classwise_f1(&Confusion([[5, 0, 0], [0, 0, 5], [0, 0, 5]]));
        assert_eq!(m.classes[0].f1, 1.0);
        assert_eq!(m.classes[1].f1, 0.0);
        assert!((m.classes[2].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.macro_f1 - 0.5556).abs() < 1e-4);
        assert!((m.accuracy - 10.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn diagonal_and_empty() {
        let m = classwise_f1(&Confusion([[3, 0, 0], [0, 4, 0], [0, 0, 1]]));
        assert!(m.classes.iter().all(|c| c.f1 == 1.0));
        let z = classwise_f1(&Confusion::default());
        assert!(z.empty && z.macro_f1 == 0.0 && z.accuracy == 0.0);
    }

    #[test]
    fn ndcg_examples() {
        let q = QueryJudgement {
            matches: vec![vec![0]],
            gold_items: 1,
        };
        assert_eq!(q.ndcg_at(10), 1.0);
        assert_eq!(q.recall_at(10), 1.0);
        let q = QueryJudgement {
            matches: vec![vec![], vec![0]],
            gold_items: 1,
        };
        assert!((q.ndcg_at(10) - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert_eq!(q.ndcg_at(1), 0.0);
        let q = QueryJudgement {
            matches: vec![vec![0, 1], vec![]],
            gold_items: 2,
        };
        assert_eq!(q.recall_at(1), 1.0);
        assert!(q.ndcg_at(2) <= 1.0);
        let q = QueryJudgement {
            matches: vec![vec![1]],
            gold_items: 2,
        };
        assert_eq!(q.recall_at(5), 0.5);
    }
}
