use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bpe_text, validate_turns, DecompositionPlan, Origin, TurnSql};
use crate::sql::{
    extract_token_refs, map_tokens, substitute_turn, MaskConfig, MaskPolicy, Refinement,
    Statement, TokenRef,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    /// Pairs linked by a token across nesting levels.
    pub threshold_stage1: usize,
    /// Pairs split apart by clause decomposition.
    pub threshold_stage2: usize,
    pub sample_ratio: f64,
    pub seed: u64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig {
            threshold_stage1: 100,
            threshold_stage2: 150,
            sample_ratio: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Stage1,
    Stage2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeRound {
    pub first: String,
    pub second: String,
    pub kind: PairKind,
    pub frequency: usize,
    pub merged: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    pub rounds: Vec<MergeRound>,
}

/// How turn `i` (0-based) and its successor could be fused, if at all.
fn mergeable(turns: &[TurnSql], i: usize) -> Option<PairKind> {
    let a = turns.get(i)?;
    let b = turns.get(i + 1)?;
    let referenced_elsewhere = turns
        .iter()
        .filter(|t| t.index != b.index)
        .any(|t| extract_token_refs(&t.stmt).iter().any(|r| r.turn == a.index));
    if referenced_elsewhere {
        return None;
    }
    match &b.stmt {
        Statement::Refine(r) if r.base == a.index => Some(PairKind::Stage2),
        Statement::Refine(_) | Statement::Select(_) => {
            let refs = extract_token_refs(&b.stmt);
            let base_is_a = matches!(&b.stmt, Statement::Refine(r) if r.base == a.index);
            if base_is_a || !refs.iter().any(|r| r.turn == a.index) {
                return None;
            }
            a.stmt.as_select()?;
            if b.origin == Origin::Stage2 && b.stmt.as_select().is_some() {
                Some(PairKind::Stage2)
            } else {
                Some(PairKind::Stage1)
            }
        }
    }
}

/// Fuse turn `i` (0-based) with its successor and renumber later tokens.
fn merge_at(turns: &mut Vec<TurnSql>, i: usize) {
    let b = turns.remove(i + 1);
    let a = &turns[i];
    let merged = match b.stmt {
        Statement::Refine(r) if r.base == a.index => match &a.stmt {
            Statement::Select(s) => Statement::from((**s).clone().apply(&r.clauses)),
            Statement::Refine(ar) => {
                let mut clauses = ar.clauses.clone();
                clauses.extend(r.clauses);
                Statement::Refine(Refinement {
                    base: ar.base,
                    clauses,
                })
            }
        },
        mut other => {
            let query = a.stmt.as_select().expect("checked mergeable").clone();
            substitute_turn(&mut other, a.index, &query);
            other
        }
    };
    let a_index = a.index;
    let b_index = b.index;
    turns[i] = TurnSql::new(a_index, merged, Origin::Merged);
    for t in turns.iter_mut().skip(i + 1) {
        t.index -= 1;
        map_tokens(&mut t.stmt, &mut |r| TokenRef {
            kind: r.kind,
            turn: if r.turn == b_index {
                a_index
            } else if r.turn > b_index {
                r.turn - 1
            } else {
                r.turn
            },
        });
    }
}

type PairKey = (String, String, PairKind);

/// Corpus-level merging of frequent adjacent turn pairs. Each round picks
/// the most frequent mergeable template bigram above its threshold (ties
/// broken by the smaller concatenated text), merges a seeded random sample
/// of its non-overlapping occurrences, then recounts.
pub fn merge_frequent(
    corpus: &[DecompositionPlan],
    config: &MergeConfig,
    mask: &MaskConfig,
) -> (Vec<DecompositionPlan>, MergeReport) {
    let mask = MaskConfig {
        policy: MaskPolicy::Bpe,
        ..mask.clone()
    };
    let mut plans = corpus.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = MergeReport::default();
    loop {
        let mut occurrences: BTreeMap<PairKey, Vec<(usize, usize)>> = BTreeMap::new();
        for (p, plan) in plans.iter().enumerate() {
            let texts: Vec<String> = plan.turns.iter().map(|t| bpe_text(&t.stmt, &mask)).collect();
            for i in 0..plan.turns.len().saturating_sub(1) {
                if let Some(kind) = mergeable(&plan.turns, i) {
                    occurrences
                        .entry((texts[i].clone(), texts[i + 1].clone(), kind))
                        .or_default()
                        .push((p, i));
                }
            }
        }
        let threshold = |k: PairKind| match k {
            PairKind::Stage1 => config.threshold_stage1,
            PairKind::Stage2 => config.threshold_stage2,
        };
        let best = occurrences
            .iter()
            .filter(|(k, v)| v.len() > threshold(k.2))
            .max_by(|(ka, va), (kb, vb)| {
                va.len().cmp(&vb.len()).then_with(|| {
                    let ca = format!("{} {}", ka.0, ka.1);
                    let cb = format!("{} {}", kb.0, kb.1);
                    cb.cmp(&ca).then_with(|| kb.2.cmp(&ka.2))
                })
            });
        let Some((key, occ)) = best else {
            break;
        };
        let frequency = occ.len();
        let mut chosen: Vec<(usize, usize)> = Vec::new();
        for &(p, i) in occ {
            let overlaps = chosen.last().is_some_and(|&(lp, li)| lp == p && li + 1 >= i);
            if !overlaps {
                chosen.push((p, i));
            }
        }
        let n = chosen.len();
        let k = ((n as f64 * config.sample_ratio).round() as usize).clamp(1, n);
        let mut picked: Vec<(usize, usize)> = sample(&mut rng, n, k)
            .into_iter()
            .map(|j| chosen[j])
            .collect();
        picked.sort_unstable_by(|x, y| y.cmp(x));
        for (p, i) in picked {
            merge_at(&mut plans[p].turns, i);
        }
        report.rounds.push(MergeRound {
            first: key.0.clone(),
            second: key.1.clone(),
            kind: key.2,
            frequency,
            merged: k,
        });
    }
    for plan in &plans {
        validate_turns(&plan.turns).expect("merging preserves backward references");
    }
    (plans, report)
}
