//! Damped spreading activation over the memory graph.
//!
//! A query (plus optional session context) seeds activation on its best
//! semantic matches; the field then propagates along edges for a bounded
//! number of hops, attenuated by the damping factor and each edge's weight.
//! Propagation is bidirectional — an edge conducts both ways — and capped at
//! the strongest F edges per node per hop so cost stays near-linear.
//!
//! Determinism note: all contributions within a hop are folded in a canonical
//! key order `(to, from, kind, direction)` before clamping, so any faithful
//! re-implementation that sums in the same order reproduces the field
//! bit-for-bit.

use crate::embedding::{centroid, cosine, top_k, EmbeddingProvider};
use crate::substrate::{EdgeKind, FragmentId, FragmentState, MemoryStore};
use crate::Result;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

/// One traced propagation step. Seed injections carry `hop = 0` and no
/// source fragment or edge kind.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub hop: usize,
    pub from: Option<FragmentId>,
    pub to: FragmentId,
    pub kind: Option<EdgeKind>,
    pub contribution: f64,
}

/// Graded availability of fragments after seeding and spreading. Fragments
/// absent from `levels` have activation zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ActivationField {
    pub levels: BTreeMap<FragmentId, f64>,
    pub trace: Vec<TraceStep>,
    /// Dormant fragments that received activation (they conduct, flagged).
    pub dormant_touched: BTreeSet<FragmentId>,
}

impl ActivationField {
    pub fn level(&self, id: FragmentId) -> f64 {
        self.levels.get(&id).copied().unwrap_or(0.0)
    }

    /// Elementwise max of levels; traces concatenate, flags union.
    pub fn merge_max(mut self, other: ActivationField) -> ActivationField {
        for (id, level) in other.levels {
            let entry = self.levels.entry(id).or_insert(0.0);
            if level > *entry {
                *entry = level;
            }
        }
        self.trace.extend(other.trace);
        self.dormant_touched.extend(other.dormant_touched);
        self
    }
}

/// Seed activation on the top-`k` active fragments by cosine to the query
/// text. Each seed's level is its cosine clamped to [0, 1]; non-positive
/// matches are dropped (zero activation is the same as absence).
pub fn seed(
    store: &MemoryStore,
    embedder: &dyn EmbeddingProvider,
    query_text: &str,
    k: usize,
) -> Result<ActivationField> {
    let v = embedder.embed(query_text)?;
    Ok(seed_by_vector(store, &v, k))
}

/// [`seed`] for a precomputed query vector (used for context centroids).
pub fn seed_by_vector(store: &MemoryStore, v: &[f64], k: usize) -> ActivationField {
    let candidates = store
        .fragments()
        .filter(|f| f.state == FragmentState::Active)
        .map(|f| (f.id, f.embedding.as_slice()));
    let mut field = ActivationField::default();
    for (id, cos) in top_k(v, candidates, k) {
        let level = cos.clamp(0.0, 1.0);
        if level <= 0.0 {
            continue;
        }
        field.levels.insert(id, level);
        field.trace.push(TraceStep {
            hop: 0,
            from: None,
            to: id,
            kind: None,
            contribution: level,
        });
    }
    field
}

/// Propagate a seeded field along the graph for up to `max_hops` hops.
///
/// Each hop reads activations from a start-of-hop snapshot: every frontier
/// node (descending activation) conducts through its top-`fanout` incident
/// edges by weight, contributing `gamma * weight * a(node)` to the far end.
/// Contributions under `activation_floor` are dropped; the rest accumulate
/// additively and clamp at 1.0 when the hop settles. Only nodes whose level
/// actually rose join the next frontier, which guarantees termination.
pub fn spread(store: &MemoryStore, field: ActivationField) -> ActivationField {
    let params = store.params();
    let ActivationField {
        mut levels,
        mut trace,
        mut dormant_touched,
    } = field;
    let mut frontier: Vec<FragmentId> = levels.keys().copied().collect();
    for hop in 1..=params.max_hops as usize {
        if frontier.is_empty() {
            break;
        }
        let snapshot = levels.clone();
        frontier.sort_by(|a, b| {
            snapshot[b]
                .total_cmp(&snapshot[a])
                .then_with(|| a.cmp(b))
        });
        // (to, from, kind, edge runs forward from `from`) -> contribution.
        let mut contributions: BTreeMap<(FragmentId, FragmentId, EdgeKind, bool), f64> =
            BTreeMap::new();
        for &u in &frontier {
            let a_u = snapshot[&u];
            let mut incident: Vec<(f64, FragmentId, EdgeKind, bool)> = store
                .incident_edges(u)
                .map(|e| {
                    let (neighbor, forward) = if e.from == u {
                        (e.to, true)
                    } else {
                        (e.from, false)
                    };
                    (e.weight, neighbor, e.kind, forward)
                })
                .collect();
            incident.sort_by(|a, b| {
                b.0.total_cmp(&a.0)
                    .then_with(|| a.1.cmp(&b.1))
                    .then_with(|| a.2.cmp(&b.2))
                    .then_with(|| b.3.cmp(&a.3))
            });
            incident.truncate(params.fanout);
            for (weight, v, kind, forward) in incident {
                let contribution = params.gamma * weight * a_u;
                if contribution < params.activation_floor {
                    continue;
                }
                contributions.insert((v, u, kind, forward), contribution);
                trace.push(TraceStep {
                    hop,
                    from: Some(u),
                    to: v,
                    kind: Some(kind),
                    contribution,
                });
            }
        }
        // Fold in canonical order, then clamp per node as the hop settles.
        let mut sums: BTreeMap<FragmentId, f64> = BTreeMap::new();
        for ((v, _, _, _), contribution) in &contributions {
            *sums.entry(*v).or_insert(0.0) += *contribution;
        }
        let mut next_frontier = Vec::new();
        for (v, add) in sums {
            let old = levels.get(&v).copied().unwrap_or(0.0);
            let new = (old + add).min(1.0);
            if new > old {
                levels.insert(v, new);
                next_frontier.push(v);
                if let Ok(f) = store.fragment(v) {
                    if f.state == FragmentState::Dormant {
                        dormant_touched.insert(v);
                    }
                }
            }
        }
        frontier = next_frontier;
    }
    ActivationField {
        levels,
        trace,
        dormant_touched,
    }
}

/// Full activation pipeline: seed from the query, merge (elementwise max)
/// with seeds from the context centroid at half strength of count, spread.
pub fn activate(
    store: &MemoryStore,
    embedder: &dyn EmbeddingProvider,
    query_text: &str,
    context_texts: &[String],
) -> Result<ActivationField> {
    let params = store.params();
    let mut field = seed(store, embedder, query_text, params.seed_k)?;
    if !context_texts.is_empty() {
        let vectors: Vec<Vec<f64>> = context_texts
            .iter()
            .filter_map(|t| embedder.embed(t).ok())
            .collect();
        if let Some(center) = centroid(&vectors) {
            let context_field = seed_by_vector(store, &center, params.seed_k / 2);
            field = field.merge_max(context_field);
        }
    }
    Ok(spread(store, field))
}

/// Convenience for tests and scoring: cosine between a query vector and a
/// fragment's embedding.
pub fn query_similarity(store: &MemoryStore, id: FragmentId, v: &[f64]) -> f64 {
    store
        .fragment(id)
        .map(|f| cosine(v, &f.embedding))
        .unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashEmbedder;
    use crate::params::EngineParams;
    use crate::substrate::{
        FragmentDraft, FragmentKind, Provenance, TemporalClass,
    };

    fn store_with(params: EngineParams) -> MemoryStore {
        MemoryStore::new(params).unwrap()
    }

    fn add(store: &mut MemoryStore, text: &str, state: FragmentState) -> FragmentId {
        let embedder = HashEmbedder::default();
        store
            .add_fragment(FragmentDraft {
                content: text.to_string(),
                embedding: embedder.embed(text).unwrap(),
                created_at: 100,
                session: "s1".to_string(),
                episode: 1,
                salience: 0.5,
                reinforcement: 0.0,
                temporal_class: TemporalClass::Episodic,
                state,
                kind: FragmentKind::Raw,
                provenance: Provenance::source("test"),
            })
            .unwrap()
    }

    #[test]
    fn seed_on_empty_store_is_empty() {
        let store = store_with(EngineParams::default());
        let field = seed(&store, &HashEmbedder::default(), "anything at all", 8).unwrap();
        assert!(field.levels.is_empty());
        assert!(field.trace.is_empty());
    }

    #[test]
    fn seed_k1_picks_single_best_match_in_cosine_order() {
        let embedder = HashEmbedder::default();
        let mut store = store_with(EngineParams::default());
        let a = add(&mut store, "the lighthouse keeper trims the wick", FragmentState::Active);
        let b = add(&mut store, "quarterly budget variance report", FragmentState::Active);
        let field = seed(&store, &embedder, "lighthouse keeper wick", 1).unwrap();
        assert_eq!(field.levels.len(), 1);
        assert!(field.levels.contains_key(&a));
        // With k=2 both appear and the levels follow cosine order.
        let field2 = seed(&store, &embedder, "lighthouse keeper wick", 2).unwrap();
        let qa = query_similarity(&store, a, &embedder.embed("lighthouse keeper wick").unwrap());
        let qb = query_similarity(&store, b, &embedder.embed("lighthouse keeper wick").unwrap());
        if qb > 0.0 {
            assert!(field2.level(a) > field2.level(b));
            assert_eq!(field2.level(b), qb.clamp(0.0, 1.0));
        }
        assert_eq!(field2.level(a), qa);
        // Dormant fragments never seed.
        let c = add(&mut store, "lighthouse keeper wick duplicate", FragmentState::Dormant);
        let field3 = seed(&store, &embedder, "lighthouse keeper wick", 3).unwrap();
        assert_eq!(field3.level(c), 0.0);
    }

    #[test]
    fn chain_one_hop_halves_activation() {
        let mut params = EngineParams::default();
        params.max_hops = 1;
        params.seed_k = 1;
        let embedder = HashEmbedder::default();
        let mut store = store_with(params);
        let a = add(&mut store, "origin of the chain", FragmentState::Active);
        let b = add(&mut store, "completely different payload", FragmentState::Active);
        store.connect(a, b, EdgeKind::Semantic, 1.0, 100).unwrap();
        let field = activate(&store, &embedder, "origin of the chain", &[]).unwrap();
        assert_eq!(field.level(a), 1.0, "seed at cosine 1.0");
        assert_eq!(field.level(b), 0.5, "gamma * 1.0 * 1.0");
    }

    #[test]
    fn chain_two_hops_quarters_activation() {
        let mut params = EngineParams::default();
        params.max_hops = 2;
        params.seed_k = 1;
        let embedder = HashEmbedder::default();
        let mut store = store_with(params);
        let a = add(&mut store, "origin of the chain", FragmentState::Active);
        let b = add(&mut store, "completely different payload", FragmentState::Active);
        let c = add(&mut store, "yet another unrelated tail", FragmentState::Active);
        store.connect(a, b, EdgeKind::Semantic, 1.0, 100).unwrap();
        store.connect(b, c, EdgeKind::Semantic, 1.0, 100).unwrap();
        let field = activate(&store, &embedder, "origin of the chain", &[]).unwrap();
        assert_eq!(field.level(b), 0.5);
        assert_eq!(field.level(c), 0.25, "gamma^2 along the two-hop path");
        // The seed stays clamped at 1.0 despite the echo from b.
        assert_eq!(field.level(a), 1.0);
    }

    #[test]
    fn fanout_cap_takes_exactly_the_strongest_edges() {
        let mut params = EngineParams::default();
        params.max_hops = 1;
        params.seed_k = 1;
        let embedder = HashEmbedder::default();
        let mut store = store_with(params);
        let hub = add(&mut store, "central hub node", FragmentState::Active);
        let mut spokes = Vec::new();
        for i in 0..20u64 {
            let spoke = add(
                &mut store,
                &format!("spoke leaf number {i}"),
                FragmentState::Active,
            );
            let weight = 0.2 + 0.04 * i as f64; // distinct weights 0.2 .. 0.96
            store.connect(hub, spoke, EdgeKind::Semantic, weight, 100).unwrap();
            spokes.push((spoke, weight));
        }
        let field = activate(&store, &embedder, "central hub node", &[]).unwrap();
        // Exactly the 16 heaviest spokes receive activation.
        let activated: Vec<_> = spokes.iter().filter(|(s, _)| field.level(*s) > 0.0).collect();
        assert_eq!(activated.len(), 16);
        let min_activated_weight = activated.iter().map(|(_, w)| *w).fold(f64::MAX, f64::min);
        let max_skipped_weight = spokes
            .iter()
            .filter(|(s, _)| field.level(*s) == 0.0)
            .map(|(_, w)| *w)
            .fold(f64::MIN, f64::max);
        assert!(min_activated_weight > max_skipped_weight);
        for (spoke, weight) in &activated {
            let expected = 0.5 * weight * field.level(hub);
            assert_eq!(field.level(*spoke), expected);
        }
    }

    #[test]
    fn floor_drops_negligible_contributions() {
        let mut params = EngineParams::default();
        params.max_hops = 1;
        params.seed_k = 1;
        let embedder = HashEmbedder::default();
        let mut store = store_with(params);
        let a = add(&mut store, "origin of the chain", FragmentState::Active);
        let b = add(&mut store, "completely different payload", FragmentState::Active);
        // gamma * 0.019 * 1.0 = 0.0095 < 0.01 floor.
        store.connect(a, b, EdgeKind::Semantic, 0.019, 100).unwrap();
        let field = activate(&store, &embedder, "origin of the chain", &[]).unwrap();
        assert_eq!(field.level(b), 0.0);
        // Exactly at the floor it is kept: gamma * 0.02 * 1.0 = 0.01.
        store.connect(a, b, EdgeKind::Associative, 0.02, 101).unwrap();
        let field = activate(&store, &embedder, "origin of the chain", &[]).unwrap();
        assert_eq!(field.level(b), 0.01);
    }

    #[test]
    fn dormant_fragments_receive_propagate_and_get_flagged() {
        let mut params = EngineParams::default();
        // Two hops keep the numbers clean (no third-hop echo back into b).
        params.max_hops = 2;
        params.seed_k = 1;
        let embedder = HashEmbedder::default();
        let mut store = store_with(params);
        let a = add(&mut store, "origin of the chain", FragmentState::Active);
        let b = add(&mut store, "sleeping middle node", FragmentState::Dormant);
        let c = add(&mut store, "far endpoint target", FragmentState::Active);
        store.connect(a, b, EdgeKind::Semantic, 1.0, 100).unwrap();
        store.connect(b, c, EdgeKind::Semantic, 1.0, 100).unwrap();
        let field = activate(&store, &embedder, "origin of the chain", &[]).unwrap();
        assert_eq!(field.level(b), 0.5);
        assert_eq!(field.level(c), 0.25, "dormant nodes still conduct");
        assert!(field.dormant_touched.contains(&b));
        assert!(!field.dormant_touched.contains(&c));
    }

    #[test]
    fn additive_accumulation_clamps_at_one() {
        let mut params = EngineParams::default();
        params.max_hops = 1;
        params.seed_k = 4;
        let embedder = HashEmbedder::default();
        let mut store = store_with(params);
        // Three strong seeds all feeding one sink.
        let sink = add(&mut store, "the shared sink node", FragmentState::Active);
        for text in [
            "bright copper kettle",
            "warm woolen mitten",
            "crisp apple strudel",
        ] {
            let s = add(&mut store, text, FragmentState::Active);
            store.connect(s, sink, EdgeKind::Semantic, 1.0, 100).unwrap();
        }
        // Seed all three sources near 1.0 by querying their shared words...
        // instead, seed each exactly: query one text but k=4 picks others
        // weakly; simpler: connect a fourth strong source chain.
        let field = {
            let f1 = seed(&store, &embedder, "bright copper kettle", 1).unwrap();
            let f2 = seed(&store, &embedder, "warm woolen mitten", 1).unwrap();
            let f3 = seed(&store, &embedder, "crisp apple strudel", 1).unwrap();
            spread(&store, f1.merge_max(f2).merge_max(f3))
        };
        // 3 * (0.5 * 1.0 * 1.0) = 1.5 -> clamped.
        assert_eq!(field.level(sink), 1.0);
    }

    #[test]
    fn no_context_activation_equals_plain_seed_spread() {
        let embedder = HashEmbedder::default();
        let mut store = store_with(EngineParams::default());
        let a = add(&mut store, "harbor ferry schedule", FragmentState::Active);
        let b = add(&mut store, "coastal tide tables", FragmentState::Active);
        store.connect(a, b, EdgeKind::Semantic, 0.8, 100).unwrap();
        let via_activate = activate(&store, &embedder, "harbor ferry schedule", &[]).unwrap();
        let manual = spread(
            &store,
            seed(&store, &embedder, "harbor ferry schedule", 8).unwrap(),
        );
        assert_eq!(via_activate, manual);
    }

    #[test]
    fn context_shifts_activation_toward_context_cluster() {
        let embedder = HashEmbedder::default();
        let mut params = EngineParams::default();
        params.seed_k = 8;
        let mut store = store_with(params);
        // Two clusters that both weakly match the ambiguous query term.
        let bank_river = add(
            &mut store,
            "bank erosion along the river meadow willow",
            FragmentState::Active,
        );
        let bank_money = add(
            &mut store,
            "bank deposit interest savings account ledger",
            FragmentState::Active,
        );
        let ctx = vec![
            "willow shade by the river meadow".to_string(),
            "erosion of the meadow channel".to_string(),
        ];
        let with_ctx = activate(&store, &embedder, "bank", &ctx).unwrap();
        let without = activate(&store, &embedder, "bank", &[]).unwrap();
        assert!(
            with_ctx.level(bank_river) > without.level(bank_river),
            "context must boost the river-sense cluster"
        );
        assert!(with_ctx.level(bank_river) > with_ctx.level(bank_money));
    }

    #[test]
    fn identical_inputs_give_identical_fields() {
        let embedder = HashEmbedder::default();
        let mut store = store_with(EngineParams::default());
        let a = add(&mut store, "first of several notes", FragmentState::Active);
        let b = add(&mut store, "second of several notes", FragmentState::Active);
        let c = add(&mut store, "third of several notes", FragmentState::Active);
        store.connect(a, b, EdgeKind::Semantic, 0.7, 100).unwrap();
        store.connect(b, c, EdgeKind::Associative, 0.6, 100).unwrap();
        let ctx = vec!["several notes together".to_string()];
        let f1 = activate(&store, &embedder, "several notes", &ctx).unwrap();
        let f2 = activate(&store, &embedder, "several notes", &ctx).unwrap();
        assert_eq!(f1, f2);
    }

    #[test]
    fn all_levels_stay_within_unit_interval() {
        let embedder = HashEmbedder::default();
        let mut store = store_with(EngineParams::default());
        let mut prev = None;
        for i in 0..12u64 {
            let id = add(
                &mut store,
                &format!("note {i} in the dense mesh"),
                FragmentState::Active,
            );
            if let Some(p) = prev {
                store.connect(p, id, EdgeKind::Semantic, 1.0, 100).unwrap();
            }
            prev = Some(id);
        }
        let field = activate(&store, &embedder, "note dense mesh", &[]).unwrap();
        for (_, level) in &field.levels {
            assert!((0.0..=1.0).contains(level));
        }
        assert!(!field.levels.is_empty());
    }
}
