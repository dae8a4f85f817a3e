//! Multi-factor retrieval and the mutations retrieval leaves behind.
//!
//! Ranking combines five bounded factors — query similarity, spreading
//! activation, recency of last access, accumulated reinforcement, and
//! contextual relevance — under normalized weights, so similarity is one
//! vote among many rather than the whole election.
//!
//! Retrieval itself is split in two: [`retrieve`] is strictly read-only
//! (it borrows the store immutably and leaves it byte-identical), while
//! [`apply_mutation`] commits the consequences of that act of recall:
//! returned fragments are reinforced and re-dated, strong-cue dormant
//! results wake, near misses are suppressed, and co-retrieved results grow
//! associative edges. Splitting the two lets callers run read-only lookups
//! and lets the mutation step detect staleness if the store moved on.

use crate::activation::{activate, ActivationField};
use crate::embedding::{centroid, cosine, EmbeddingProvider};
use crate::params::EngineParams;
use crate::substrate::{
    EdgeKind, FieldChange, FragmentId, FragmentState, MemoryFragment, MemoryStore, MutationCause,
};
use crate::{Error, Result};
use serde::Serialize;
use std::collections::BTreeSet;

/// Associative edges created by co-retrieval start here.
const ASSOC_INIT_WEIGHT: f64 = 0.3;
/// Existing associative edges strengthen by this much per co-retrieval.
const ASSOC_BUMP: f64 = 0.1;
/// Associative edge weight cap.
const ASSOC_CAP: f64 = 1.0;
/// Near misses trail the returned set by at most this many ranks.
const NEAR_MISS_WINDOW: usize = 3;
/// A near miss must score at least this fraction of the k-th result.
const NEAR_MISS_RATIO: f64 = 0.8;
/// Co-retrieval linking applies to the top this-many results.
const ASSOC_TOP: usize = 3;

/// Exponential recency decay `e^(-lambda * age)`. Errors on negative age.
pub fn recency_weight(age_seconds: f64, lambda: f64) -> Result<f64> {
    if age_seconds < 0.0 {
        return Err(Error::NegativeAge { age_seconds });
    }
    Ok((-lambda * age_seconds).exp())
}

/// The five bounded factors behind a score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FactorBreakdown {
    pub sim: f64,
    pub act: f64,
    pub rec: f64,
    pub reinf: f64,
    pub ctx: f64,
}

impl FactorBreakdown {
    /// Recombine under the given weights; this *is* the final score, so the
    /// breakdown always reproduces it exactly.
    pub fn combine(&self, params: &EngineParams) -> f64 {
        params.w_sim * self.sim
            + params.w_act * self.act
            + params.w_rec * self.rec
            + params.w_reinf * self.reinf
            + params.w_ctx * self.ctx
    }
}

/// One ranked retrieval hit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalResult {
    pub id: FragmentId,
    pub score: f64,
    pub factors: FactorBreakdown,
    /// 1-based rank in the full candidate ordering.
    pub rank: usize,
}

/// Everything a retrieval observed, kept so [`apply_mutation`] can act on
/// exactly what was seen (and refuse if the store has moved since).
#[derive(Debug, Clone)]
pub struct RetrievalSet {
    /// The top-k hits, rank order.
    pub results: Vec<RetrievalResult>,
    /// All scored candidates, rank order (`results` is its prefix).
    pub candidates: Vec<RetrievalResult>,
    /// Dormant fragments among `results` that a strong cue will wake.
    pub woken: Vec<FragmentId>,
    /// The activation field behind the `act` factors (for explain output).
    pub field: ActivationField,
    pub k: usize,
    store_seq: u64,
}

/// What [`apply_mutation`] did. Every entry is mirrored in the store's
/// mutation log; zero-effect changes (suppressing an already-floored
/// fragment, bumping a capped edge) appear in neither.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MutationReceipt {
    /// Returned fragments and their reinforcement gains.
    pub reinforced: Vec<(FragmentId, f64)>,
    /// Near misses and their (negative) reinforcement deltas.
    pub suppressed: Vec<(FragmentId, f64)>,
    /// Dormant results flipped back to active.
    pub woken: Vec<FragmentId>,
    /// Associative edges created or strengthened: canonical (low, high) pair
    /// plus realized weight delta.
    pub edges: Vec<((FragmentId, FragmentId), f64)>,
}

/// Score one fragment against a query. `context_centroid` of `None` means no
/// conversational context: the ctx factor is zero.
pub fn score_fragment(
    store: &MemoryStore,
    fragment: &MemoryFragment,
    query_vec: &[f64],
    field: &ActivationField,
    context_centroid: Option<&[f64]>,
    now: u64,
) -> Result<RetrievalResult> {
    let params = store.params();
    let age = now as f64 - fragment.last_accessed_at as f64;
    let factors = FactorBreakdown {
        sim: cosine(query_vec, &fragment.embedding).max(0.0),
        act: field.level(fragment.id),
        rec: recency_weight(age, params.lambda)?,
        reinf: fragment.reinforcement.min(5.0) / 5.0,
        ctx: context_centroid
            .map(|c| cosine(c, &fragment.embedding).max(0.0))
            .unwrap_or(0.0),
    };
    Ok(RetrievalResult {
        id: fragment.id,
        score: factors.combine(params),
        factors,
        rank: 0,
    })
}

/// Rank the store against a query. Candidates are the active fragments with
/// any query similarity or activation, plus dormant fragments whose direct
/// similarity clears the wake threshold (strong cues reach into dormancy).
/// Read-only: the store is untouched until [`apply_mutation`].
pub fn retrieve(
    store: &MemoryStore,
    embedder: &dyn EmbeddingProvider,
    query_text: &str,
    k: usize,
    context_texts: &[String],
    now: u64,
) -> Result<RetrievalSet> {
    if k == 0 {
        return Err(Error::Invariant("retrieve requires k >= 1".into()));
    }
    let field = activate(store, embedder, query_text, context_texts)?;
    let query_vec = embedder.embed(query_text)?;
    let context_vectors: Vec<Vec<f64>> = context_texts
        .iter()
        .filter_map(|t| embedder.embed(t).ok())
        .collect();
    let context_centroid = centroid(&context_vectors);
    let theta_wake = store.params().theta_wake;

    let mut candidates = Vec::new();
    let mut dormant_hits = BTreeSet::new();
    for fragment in store.fragments() {
        let scored = score_fragment(
            store,
            fragment,
            &query_vec,
            &field,
            context_centroid.as_deref(),
            now,
        )?;
        match fragment.state {
            FragmentState::Active => {
                if scored.factors.sim > 0.0 || scored.factors.act > 0.0 {
                    candidates.push(scored);
                }
            }
            FragmentState::Dormant => {
                if scored.factors.sim >= theta_wake {
                    dormant_hits.insert(fragment.id);
                    candidates.push(scored);
                }
            }
        }
    }
    candidates.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    for (i, c) in candidates.iter_mut().enumerate() {
        c.rank = i + 1;
    }
    let results: Vec<RetrievalResult> = candidates.iter().take(k).cloned().collect();
    // Only fragments actually returned get woken; scoring alone is not
    // retrieval.
    let woken: Vec<FragmentId> = results
        .iter()
        .filter(|r| dormant_hits.contains(&r.id))
        .map(|r| r.id)
        .collect();
    Ok(RetrievalSet {
        results,
        candidates,
        woken,
        field,
        k,
        store_seq: store.seq(),
    })
}

/// Commit the consequences of a retrieval: wake strong-cue dormant results,
/// reinforce and re-date everything returned, suppress near misses (ranks
/// k+1..k+3 scoring within 80% of the cutoff), and link the top results
/// pairwise with associative edges. Fails with `StaleResults` if the store
/// has mutated since the paired [`retrieve`].
pub fn apply_mutation(
    store: &mut MemoryStore,
    set: &RetrievalSet,
    now: u64,
) -> Result<MutationReceipt> {
    if store.seq() != set.store_seq {
        return Err(Error::StaleResults {
            expected: set.store_seq,
            actual: store.seq(),
        });
    }
    let params = store.params().clone();
    let mut receipt = MutationReceipt::default();

    for result in &set.results {
        if set.woken.contains(&result.id) {
            store.mutate(
                result.id,
                FieldChange::State {
                    state: FragmentState::Active,
                },
                now,
                MutationCause::RetrievalReinforce,
            )?;
            receipt.woken.push(result.id);
        }
        let delta = store.mutate(
            result.id,
            FieldChange::Reinforce {
                delta: params.delta_r,
            },
            now,
            MutationCause::RetrievalReinforce,
        )?;
        store.mutate(
            result.id,
            FieldChange::LastAccessed { at: now },
            now,
            MutationCause::RetrievalReinforce,
        )?;
        receipt.reinforced.push((result.id, delta));
    }

    // Near misses: close trailers get pushed down, sharpening the boundary
    // around what was recalled.
    if !set.results.is_empty() && set.results.len() == set.k {
        let cutoff = NEAR_MISS_RATIO * set.results[set.k - 1].score;
        let window_end = (set.k + NEAR_MISS_WINDOW).min(set.candidates.len());
        for candidate in &set.candidates[set.k..window_end] {
            if candidate.score < cutoff {
                continue;
            }
            let delta = store.mutate(
                candidate.id,
                FieldChange::Reinforce {
                    delta: -params.delta_s,
                },
                now,
                MutationCause::Suppression,
            )?;
            if delta != 0.0 {
                receipt.suppressed.push((candidate.id, delta));
            }
        }
    }

    // Co-retrieved results associate pairwise (top three at most).
    let top = &set.results[..set.results.len().min(ASSOC_TOP)];
    for i in 0..top.len() {
        for j in (i + 1)..top.len() {
            let (lo, hi) = if top[i].id < top[j].id {
                (top[i].id, top[j].id)
            } else {
                (top[j].id, top[i].id)
            };
            let delta = store.bump_edge(
                lo,
                hi,
                EdgeKind::Associative,
                ASSOC_BUMP,
                Some(ASSOC_INIT_WEIGHT),
                ASSOC_CAP,
                now,
                MutationCause::RetrievalReinforce,
            )?;
            if delta != 0.0 {
                receipt.edges.push(((lo, hi), delta));
            }
        }
    }
    Ok(receipt)
}
