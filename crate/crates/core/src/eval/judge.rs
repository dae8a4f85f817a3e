//! Deterministic rubric judge for anonymized A/B retrieval comparisons.
//!
//! The judge never sees system names — only two retrieved-text lists
//! labeled A and B — so relabeling the systems flips the verdict exactly.
//! Scoring is mechanical: a fact counts as covered when one retrieved
//! text's token set contains the fact's whole token set, accuracy and
//! contamination are coverage fractions over the expected and forbidden
//! fact lists, and queries with an ordering rubric earn a small bonus
//! when the covered facts surface in chain order.

use crate::embedding::tokenize;
use crate::eval::probes::ProbeQuery;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Scores below this on both sides mean neither system answered.
const BOTH_WRONG_FLOOR: f64 = 0.25;
/// Score gaps at or below this margin are ties.
const TIE_MARGIN: f64 = 0.1;
/// Bonus for presenting adjacent facts in chain order.
const ORDERING_BONUS: f64 = 0.1;

/// Outcome category of one judged query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    AWins,
    BWins,
    Tie,
    BothWrong,
}

/// Verdict plus both scores and a human-readable audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeOutcome {
    pub verdict: Verdict,
    pub score_a: f64,
    pub score_b: f64,
    pub accuracy_a: f64,
    pub accuracy_b: f64,
    pub contamination_a: f64,
    pub contamination_b: f64,
    pub rationale: String,
}

/// Per-side rubric tally.
struct SideScore {
    score: f64,
    accuracy: f64,
    contamination: f64,
    covered: Vec<usize>,
    contaminated: Vec<usize>,
    ordered_bonus: bool,
}

/// True when some single retrieved text's token set contains all of the
/// fact's tokens.
fn covered_by(fact_tokens: &BTreeSet<String>, retrieved_tokens: &[BTreeSet<String>]) -> Option<usize> {
    retrieved_tokens
        .iter()
        .position(|text| fact_tokens.is_subset(text))
}

fn score_side(query: &ProbeQuery, retrieved: &[String]) -> SideScore {
    let retrieved_tokens: Vec<BTreeSet<String>> = retrieved
        .iter()
        .map(|text| tokenize(text).into_iter().collect())
        .collect();

    let mut covered = Vec::new();
    let mut cover_positions = Vec::new();
    for (i, fact) in query.expected_facts.iter().enumerate() {
        let tokens: BTreeSet<String> = tokenize(fact).into_iter().collect();
        if let Some(position) = covered_by(&tokens, &retrieved_tokens) {
            covered.push(i);
            cover_positions.push(position);
        }
    }
    let mut contaminated = Vec::new();
    for (i, fact) in query.forbidden_facts.iter().enumerate() {
        let tokens: BTreeSet<String> = tokenize(fact).into_iter().collect();
        if covered_by(&tokens, &retrieved_tokens).is_some() {
            contaminated.push(i);
        }
    }

    let accuracy = covered.len() as f64 / query.expected_facts.len() as f64;
    let contamination = if query.forbidden_facts.is_empty() {
        0.0
    } else {
        contaminated.len() as f64 / query.forbidden_facts.len() as f64
    };
    let mut score = (accuracy - contamination).max(0.0);
    // Ordering rubric: at least two expected facts covered, and their
    // first-cover ranks never move backwards along the fact chain.
    let ordered_bonus = query.ordered
        && cover_positions.len() >= 2
        && cover_positions.windows(2).all(|w| w[0] <= w[1]);
    if ordered_bonus {
        score = (score + ORDERING_BONUS).min(1.0);
    }
    SideScore {
        score,
        accuracy,
        contamination,
        covered,
        contaminated,
        ordered_bonus,
    }
}

fn describe(side: &str, tally: &SideScore, query: &ProbeQuery) -> String {
    let name = |facts: &[String], indices: &[usize]| -> String {
        if indices.is_empty() {
            "none".to_string()
        } else {
            indices
                .iter()
                .map(|&i| format!("{:?}", facts[i]))
                .collect::<Vec<_>>()
                .join(", ")
        }
    };
    let mut text = format!(
        "{side} covered {}/{} expected ({}), {}/{} forbidden ({})",
        tally.covered.len(),
        query.expected_facts.len(),
        name(&query.expected_facts, &tally.covered),
        tally.contaminated.len(),
        query.forbidden_facts.len(),
        name(&query.forbidden_facts, &tally.contaminated),
    );
    if tally.ordered_bonus {
        text.push_str(", in chain order");
    }
    text
}

/// Score two anonymized retrieval lists against one query's rubric, using
/// the default verdict thresholds.
/// Empty retrieval lists are allowed and score zero.
pub fn judge(query: &ProbeQuery, retrieved_a: &[String], retrieved_b: &[String]) -> JudgeOutcome {
    judge_with(query, retrieved_a, retrieved_b, BOTH_WRONG_FLOOR, TIE_MARGIN)
}

/// [`judge`] with explicit verdict thresholds: both sides below
/// `both_wrong_floor` count as jointly wrong, and score gaps at or below
/// `tie_margin` are ties.
pub fn judge_with(
    query: &ProbeQuery,
    retrieved_a: &[String],
    retrieved_b: &[String],
    both_wrong_floor: f64,
    tie_margin: f64,
) -> JudgeOutcome {
    let a = score_side(query, retrieved_a);
    let b = score_side(query, retrieved_b);
    let verdict = if a.score < both_wrong_floor && b.score < both_wrong_floor {
        Verdict::BothWrong
    } else if (a.score - b.score).abs() <= tie_margin {
        Verdict::Tie
    } else if a.score > b.score {
        Verdict::AWins
    } else {
        Verdict::BWins
    };
    let rationale = format!(
        "{}; {}; scores {:.3} vs {:.3}",
        describe("A", &a, query),
        describe("B", &b, query),
        a.score,
        b.score,
    );
    JudgeOutcome {
        verdict,
        score_a: a.score,
        score_b: b.score,
        accuracy_a: a.accuracy,
        accuracy_b: b.accuracy,
        contamination_a: a.contamination,
        contamination_b: b.contamination,
        rationale,
    }
}
