//! Offline consolidation: replay, abstraction, gist extraction, dormancy.
//!
//! Consolidation restructures the memory graph between interactions. An
//! explicit [`consolidate_tick`] runs four jobs in a fixed order: replay
//! strengthens recently-extended temporal chains, abstraction condenses
//! semantic clusters into insight fragments, gist extraction distills
//! repeated episodes into durable gists, and decay moves cold raw
//! fragments into dormancy. Replay runs first so fresh chains are
//! protected from same-tick dormancy; nothing here ever deletes.
//!
//! Every job is deterministic given the store state and the tick clock:
//! chains, clusters, and episode groups are discovered in ascending-id
//! order, and a chain is walked at most once per timestamp so that a
//! re-executed tick (crash recovery, duplicated scheduling) cannot
//! inflate reinforcement — ticking twice at the same clock leaves the
//! store byte-identical.

use crate::embedding::{centroid, cosine, tokenize, EmbeddingProvider};
use crate::substrate::{
    EdgeKind, FieldChange, FragmentDraft, FragmentId, FragmentKind, FragmentState, MemoryFragment,
    MemoryStore, MutationCause, Provenance, TemporalClass,
};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

/// Replay touches chains whose newest fragment is at most this old.
pub const REPLAY_WINDOW_SECONDS: u64 = 86_400;
/// Weight added to each traversed temporal edge during replay.
const REPLAY_EDGE_DELTA: f64 = 0.1;
/// Reinforcement added to each traversed fragment during replay.
const REPLAY_REINFORCE_DELTA: f64 = 0.1;
/// Temporal edge weights are capped here by replay.
const REPLAY_EDGE_CAP: f64 = 1.0;
/// Minimum cosine between a candidate and the running cluster centroid.
const CLUSTER_JOIN_COSINE: f64 = 0.6;
/// Default minimum cluster size that yields an insight.
pub const MIN_CLUSTER_SIZE: usize = 3;
/// Minimum pairwise cosine between episode centroids for gist grouping.
const GIST_GROUP_COSINE: f64 = 0.7;
/// Minimum number of near-duplicate episodes that yields a gist.
const GIST_MIN_EPISODES: usize = 3;
/// An existing derived fragment covering at least this share of a group
/// blocks creating another one for the same group.
const COVERAGE_BLOCK: f64 = 0.8;
/// Dormancy-threshold multiplier for members already folded into an
/// insight or gist: details fade sooner once a schema exists.
const ABSTRACTED_FADE_FACTOR: f64 = 1.5;
/// Accessibility weight on recency of last access.
const ACCESS_W_RECENCY: f64 = 0.4;
/// Accessibility weight on accumulated reinforcement.
const ACCESS_W_REINFORCE: f64 = 0.4;
/// Accessibility weight on salience.
const ACCESS_W_SALIENCE: f64 = 0.2;
/// Reinforcement saturates at this value inside the accessibility score.
const REINFORCE_SATURATION: f64 = 5.0;
/// Number of shared tokens quoted by the summarizer stub.
const SUMMARY_TOKENS: usize = 5;

/// Realized weight change applied to one edge during replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDelta {
    pub from: FragmentId,
    pub to: FragmentId,
    pub delta: f64,
}

/// Outcome of one consolidation tick.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsolidationReport {
    /// Temporal chains replay walked this tick.
    pub replayed_chains: usize,
    /// Realized edge-weight increments from replay (capped edges omitted).
    pub replay_edge_deltas: Vec<EdgeDelta>,
    pub insights_created: Vec<FragmentId>,
    pub gists_created: Vec<FragmentId>,
    pub made_dormant: Vec<FragmentId>,
    /// Wall-clock duration; informational, not part of deterministic state.
    pub duration_micros: u64,
}

/// A temporal chain scheduled for replay.
struct Chain {
    members: Vec<FragmentId>,
    edges: Vec<(FragmentId, FragmentId)>,
}

/// Strengthen every temporal chain whose newest fragment is younger than
/// `window_seconds`: each chain edge gains weight (capped) and each member
/// gains reinforcement. Returns the chain count and the realized edge
/// deltas. A chain already replayed at this exact `now` is skipped, which
/// makes re-running a tick at the same clock a no-op.
pub fn replay(
    store: &mut MemoryStore,
    window_seconds: u64,
    now: u64,
) -> Result<(usize, Vec<EdgeDelta>)> {
    // Fragments already reinforced by replay at this timestamp mark their
    // whole chain as done for this clock value.
    let already: BTreeSet<FragmentId> = store
        .mutation_log()
        .iter()
        .filter(|e| e.cause == MutationCause::Replay && e.ts == now)
        .map(|e| e.fragment)
        .collect();

    let temporal: Vec<(FragmentId, FragmentId)> = store
        .edges()
        .filter(|e| e.kind == EdgeKind::TemporalFollowedBy)
        .map(|e| (e.from, e.to))
        .collect();
    let mut adjacency: BTreeMap<FragmentId, Vec<FragmentId>> = BTreeMap::new();
    for &(a, b) in &temporal {
        adjacency.entry(a).or_default().push(b);
        adjacency.entry(b).or_default().push(a);
    }

    let cutoff = now.saturating_sub(window_seconds);
    let mut visited: BTreeSet<FragmentId> = BTreeSet::new();
    let mut chains: Vec<Chain> = Vec::new();
    // Ascending key order makes component discovery deterministic: each
    // chain is found from its smallest member.
    for &start in adjacency.keys() {
        if visited.contains(&start) {
            continue;
        }
        let mut stack = vec![start];
        let mut members: BTreeSet<FragmentId> = BTreeSet::new();
        while let Some(node) = stack.pop() {
            if !members.insert(node) {
                continue;
            }
            visited.insert(node);
            for &next in adjacency.get(&node).into_iter().flatten() {
                if !members.contains(&next) {
                    stack.push(next);
                }
            }
        }
        let mut newest = 0u64;
        for &member in &members {
            newest = newest.max(store.fragment(member)?.created_at);
        }
        if newest < cutoff || members.iter().any(|m| already.contains(m)) {
            continue;
        }
        let mut edges: Vec<(FragmentId, FragmentId)> = temporal
            .iter()
            .copied()
            .filter(|(from, _)| members.contains(from))
            .collect();
        edges.sort();
        chains.push(Chain {
            members: members.into_iter().collect(),
            edges,
        });
    }

    let mut deltas = Vec::new();
    for chain in &chains {
        for &(from, to) in &chain.edges {
            let delta = store.bump_edge(
                from,
                to,
                EdgeKind::TemporalFollowedBy,
                REPLAY_EDGE_DELTA,
                None,
                REPLAY_EDGE_CAP,
                now,
                MutationCause::Replay,
            )?;
            if delta > 0.0 {
                deltas.push(EdgeDelta { from, to, delta });
            }
        }
        for &member in &chain.members {
            store.mutate(
                member,
                FieldChange::Reinforce {
                    delta: REPLAY_REINFORCE_DELTA,
                },
                now,
                MutationCause::Replay,
            )?;
        }
    }
    Ok((chains.len(), deltas))
}

/// Greedily cluster active raw fragments by similarity and condense each
/// cluster of at least `min_size` members into one insight fragment,
/// unless an existing insight already covers most of the cluster. The
/// insight carries the cluster's shared vocabulary, inherits the maximum
/// member salience, and links to every member via derived_from edges.
pub fn abstract_clusters(
    store: &mut MemoryStore,
    embedder: &dyn EmbeddingProvider,
    min_size: usize,
    now: u64,
) -> Result<Vec<FragmentId>> {
    if min_size < 2 {
        return Err(Error::Invariant(format!(
            "cluster min_size must be at least 2, got {min_size}"
        )));
    }
    let mut unclustered: BTreeSet<FragmentId> = store
        .fragments()
        .filter(|f| f.state == FragmentState::Active && f.kind == FragmentKind::Raw)
        .map(|f| f.id)
        .collect();

    let mut clusters: Vec<Vec<FragmentId>> = Vec::new();
    while !unclustered.is_empty() {
        // Seed each round from the most semantically connected fragment
        // still in the pool; ties go to the smallest id.
        let mut ranked: Vec<(usize, FragmentId)> = unclustered
            .iter()
            .map(|&id| {
                let degree = store
                    .incident_edges(id)
                    .filter(|e| e.kind == EdgeKind::Semantic)
                    .count();
                (degree, id)
            })
            .collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        let seed = ranked[0].1;
        unclustered.remove(&seed);

        let mut members = vec![seed];
        let mut vectors = vec![store.fragment(seed)?.embedding.clone()];
        let mut center = vectors[0].clone();
        // One pass over the remaining pool in id order; the centroid moves
        // as members join, so admission order is part of the contract.
        for id in unclustered.clone() {
            let embedding = &store.fragment(id)?.embedding;
            if cosine(embedding, &center) >= CLUSTER_JOIN_COSINE {
                unclustered.remove(&id);
                members.push(id);
                vectors.push(embedding.clone());
                center = centroid(&vectors).expect("cluster is non-empty");
            }
        }
        clusters.push(members);
    }

    let mut created = Vec::new();
    for members in clusters.into_iter().filter(|c| c.len() >= min_size) {
        if covered_by_existing(store, FragmentKind::Insight, &members) {
            continue;
        }
        let mut texts = Vec::with_capacity(members.len());
        let mut salience = 0.0f64;
        for &id in &members {
            let fragment = store.fragment(id)?;
            texts.push(fragment.content.clone());
            salience = salience.max(fragment.salience);
        }
        let content = summarize_shared("insight", &texts, "fragments");
        let embedding = embedder.embed(&content)?;
        let insight = store.add_fragment(FragmentDraft {
            content,
            embedding,
            created_at: now,
            session: String::new(),
            episode: 0,
            salience,
            reinforcement: 0.0,
            temporal_class: TemporalClass::Timeless,
            state: FragmentState::Active,
            kind: FragmentKind::Insight,
            provenance: Provenance {
                source: "abstraction".to_string(),
                lineage: members.clone(),
                merged_texts: Vec::new(),
            },
        })?;
        for &member in &members {
            store.connect(insight, member, EdgeKind::DerivedFrom, 1.0, now)?;
        }
        created.push(insight);
    }
    Ok(created)
}

/// Group episodes whose fragment-sequence centroids are pairwise
/// near-duplicates and distill each group of at least three episodes into
/// one gist fragment. The gist's lineage holds one representative per
/// episode — the fragment closest to that episode's centroid — so the
/// pattern survives even after the raw details go dormant.
pub fn extract_gist(
    store: &mut MemoryStore,
    embedder: &dyn EmbeddingProvider,
    now: u64,
) -> Result<Vec<FragmentId>> {
    let mut episodes: BTreeMap<u64, Vec<FragmentId>> = BTreeMap::new();
    for fragment in store.fragments() {
        if fragment.episode > 0 {
            episodes.entry(fragment.episode).or_default().push(fragment.id);
        }
    }
    let mut centroids: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for (&episode, ids) in &episodes {
        let mut vectors = Vec::with_capacity(ids.len());
        for &id in ids {
            vectors.push(store.fragment(id)?.embedding.clone());
        }
        if let Some(center) = centroid(&vectors) {
            centroids.insert(episode, center);
        }
    }

    // Greedy grouping in episode order under a full pairwise requirement.
    let mut unused: BTreeSet<u64> = centroids.keys().copied().collect();
    let mut groups: Vec<Vec<u64>> = Vec::new();
    while let Some(&first) = unused.iter().next() {
        unused.remove(&first);
        let mut group = vec![first];
        for candidate in unused.clone() {
            let fits = group
                .iter()
                .all(|member| cosine(&centroids[&candidate], &centroids[member]) >= GIST_GROUP_COSINE);
            if fits {
                unused.remove(&candidate);
                group.push(candidate);
            }
        }
        groups.push(group);
    }

    let mut created = Vec::new();
    for group in groups.into_iter().filter(|g| g.len() >= GIST_MIN_EPISODES) {
        let mut representatives = Vec::with_capacity(group.len());
        for &episode in &group {
            let center = &centroids[&episode];
            let mut best: Option<(f64, FragmentId)> = None;
            for &id in &episodes[&episode] {
                let fit = cosine(&store.fragment(id)?.embedding, center);
                let better = match best {
                    None => true,
                    Some((best_fit, best_id)) => {
                        fit > best_fit || (fit == best_fit && id < best_id)
                    }
                };
                if better {
                    best = Some((fit, id));
                }
            }
            representatives.push(best.expect("episode is non-empty").1);
        }
        if covered_by_existing(store, FragmentKind::Gist, &representatives) {
            continue;
        }
        let mut texts = Vec::with_capacity(representatives.len());
        let mut salience = 0.0f64;
        for &id in &representatives {
            let fragment = store.fragment(id)?;
            texts.push(fragment.content.clone());
            salience = salience.max(fragment.salience);
        }
        let content = summarize_shared("gist", &texts, "episodes");
        let embedding = embedder.embed(&content)?;
        let gist = store.add_fragment(FragmentDraft {
            content,
            embedding,
            created_at: now,
            session: String::new(),
            episode: 0,
            salience,
            reinforcement: 0.0,
            temporal_class: TemporalClass::Timeless,
            state: FragmentState::Active,
            kind: FragmentKind::Gist,
            provenance: Provenance {
                source: "gist".to_string(),
                lineage: representatives.clone(),
                merged_texts: Vec::new(),
            },
        })?;
        for &representative in &representatives {
            store.connect(gist, representative, EdgeKind::DerivedFrom, 1.0, now)?;
        }
        created.push(gist);
    }
    Ok(created)
}

/// Combined accessibility of a fragment at `now`: recency of last access,
/// saturated reinforcement, and salience, each bounded, under fixed
/// weights.
pub fn accessibility(fragment: &MemoryFragment, lambda: f64, now: u64) -> f64 {
    let age = now.saturating_sub(fragment.last_accessed_at) as f64;
    ACCESS_W_RECENCY * (-lambda * age).exp()
        + ACCESS_W_REINFORCE * (fragment.reinforcement.min(REINFORCE_SATURATION) / REINFORCE_SATURATION)
        + ACCESS_W_SALIENCE * fragment.salience
}

/// Move cold active raw fragments into dormancy (never deletion): those
/// whose accessibility falls below the dormancy threshold, with a raised
/// threshold for fragments whose lineage already feeds an insight or gist.
pub fn decay_and_dormancy(store: &mut MemoryStore, now: u64) -> Result<Vec<FragmentId>> {
    let lambda = store.params().lambda;
    let theta = store.params().theta_dormant;
    let abstracted: BTreeSet<FragmentId> = store
        .fragments()
        .filter(|f| matches!(f.kind, FragmentKind::Insight | FragmentKind::Gist))
        .flat_map(|f| f.provenance.lineage.iter().copied())
        .collect();

    let mut fading = Vec::new();
    for fragment in store.fragments() {
        if fragment.state != FragmentState::Active || fragment.kind != FragmentKind::Raw {
            continue;
        }
        let threshold = if abstracted.contains(&fragment.id) {
            theta * ABSTRACTED_FADE_FACTOR
        } else {
            theta
        };
        if accessibility(fragment, lambda, now) < threshold {
            fading.push(fragment.id);
        }
    }
    for &id in &fading {
        store.mutate(
            id,
            FieldChange::State {
                state: FragmentState::Dormant,
            },
            now,
            MutationCause::Decay,
        )?;
    }
    Ok(fading)
}

/// Run the four consolidation jobs in their fixed order — replay, cluster
/// abstraction, gist extraction, decay — against an exclusively held
/// store.
pub fn consolidate_tick(
    store: &mut MemoryStore,
    embedder: &dyn EmbeddingProvider,
    now: u64,
) -> Result<ConsolidationReport> {
    let start = Instant::now();
    let (replayed_chains, replay_edge_deltas) = replay(store, REPLAY_WINDOW_SECONDS, now)?;
    let insights_created = abstract_clusters(store, embedder, MIN_CLUSTER_SIZE, now)?;
    let gists_created = extract_gist(store, embedder, now)?;
    let made_dormant = decay_and_dormancy(store, now)?;
    Ok(ConsolidationReport {
        replayed_chains,
        replay_edge_deltas,
        insights_created,
        gists_created,
        made_dormant,
        duration_micros: start.elapsed().as_micros() as u64,
    })
}

/// True when an existing derived fragment of `kind` already covers at
/// least [`COVERAGE_BLOCK`] of `members` through its lineage.
fn covered_by_existing(store: &MemoryStore, kind: FragmentKind, members: &[FragmentId]) -> bool {
    let member_set: BTreeSet<FragmentId> = members.iter().copied().collect();
    store.fragments().filter(|f| f.kind == kind).any(|f| {
        let covered = f
            .provenance
            .lineage
            .iter()
            .filter(|id| member_set.contains(id))
            .count();
        covered as f64 >= COVERAGE_BLOCK * members.len() as f64
    })
}

/// Deterministic summarizer stub: quotes the tokens shared by the most
/// member texts (document frequency descending, then alphabetical) plus
/// the member count.
fn summarize_shared(label: &str, texts: &[String], counted: &str) -> String {
    let mut document_frequency: BTreeMap<String, usize> = BTreeMap::new();
    for text in texts {
        for token in tokenize(text).into_iter().collect::<BTreeSet<_>>() {
            *document_frequency.entry(token).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(usize, String)> = document_frequency
        .into_iter()
        .map(|(token, count)| (count, token))
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    let shared: Vec<String> = ranked
        .into_iter()
        .take(SUMMARY_TOKENS)
        .map(|(_, token)| token)
        .collect();
    format!("{label} ({} {counted}): {}", texts.len(), shared.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashEmbedder;
    use crate::ingest::enforce_capacity;
    use crate::params::EngineParams;
    use crate::retrieval::retrieve;

    const WEEK: u64 = 604_800;

    fn store() -> MemoryStore {
        MemoryStore::new(EngineParams::default()).unwrap()
    }

    fn add_at(
        store: &mut MemoryStore,
        text: &str,
        episode: u64,
        created_at: u64,
        salience: f64,
    ) -> FragmentId {
        let embedder = HashEmbedder::default();
        store
            .add_fragment(FragmentDraft {
                content: text.to_string(),
                embedding: embedder.embed(text).unwrap(),
                created_at,
                session: "s1".to_string(),
                episode,
                salience,
                reinforcement: 0.0,
                temporal_class: TemporalClass::Episodic,
                state: FragmentState::Active,
                kind: FragmentKind::Raw,
                provenance: Provenance::source("test"),
            })
            .unwrap()
    }

    fn add(store: &mut MemoryStore, text: &str) -> FragmentId {
        add_at(store, text, 1, 1_000, 0.5)
    }

    #[test]
    fn empty_store_tick_reports_zero() {
        let mut s = store();
        let report = consolidate_tick(&mut s, &HashEmbedder::default(), 10_000).unwrap();
        assert_eq!(report.replayed_chains, 0);
        assert!(report.replay_edge_deltas.is_empty());
        assert!(report.insights_created.is_empty());
        assert!(report.gists_created.is_empty());
        assert!(report.made_dormant.is_empty());
    }

    #[test]
    fn replay_strengthens_chain_inside_window() {
        let mut s = store();
        let a = add(&mut s, "first stop on the walk");
        let b = add(&mut s, "second stop on the walk");
        let c = add(&mut s, "third stop on the walk");
        s.connect(a, b, EdgeKind::TemporalFollowedBy, 0.5, 1_000).unwrap();
        s.connect(b, c, EdgeKind::TemporalFollowedBy, 0.5, 1_000).unwrap();

        let now = 1_000 + REPLAY_WINDOW_SECONDS; // newest exactly at the window edge
        let (chains, deltas) = replay(&mut s, REPLAY_WINDOW_SECONDS, now).unwrap();
        assert_eq!(chains, 1);
        assert_eq!(deltas.len(), 2);
        assert_eq!((deltas[0].from, deltas[0].to), (a, b));
        assert_eq!((deltas[1].from, deltas[1].to), (b, c));
        for delta in &deltas {
            assert!((delta.delta - 0.1).abs() < 1e-12);
        }
        for (from, to) in [(a, b), (b, c)] {
            let weight = s.edge(from, to, EdgeKind::TemporalFollowedBy).unwrap().weight;
            assert!((weight - 0.6).abs() < 1e-12);
        }
        for id in [a, b, c] {
            assert_eq!(s.fragment(id).unwrap().reinforcement, 0.1);
        }
        let replay_entries = s
            .mutation_log()
            .iter()
            .filter(|e| e.cause == MutationCause::Replay)
            .count();
        assert_eq!(replay_entries, 5); // 2 edge bumps + 3 reinforcements
    }

    #[test]
    fn replay_skips_chains_older_than_window() {
        let mut s = store();
        let a = add(&mut s, "stale chain head");
        let b = add(&mut s, "stale chain tail");
        s.connect(a, b, EdgeKind::TemporalFollowedBy, 0.5, 1_000).unwrap();

        let now = 1_000 + REPLAY_WINDOW_SECONDS + 1;
        let (chains, deltas) = replay(&mut s, REPLAY_WINDOW_SECONDS, now).unwrap();
        assert_eq!(chains, 0);
        assert!(deltas.is_empty());
        assert_eq!(s.edge(a, b, EdgeKind::TemporalFollowedBy).unwrap().weight, 0.5);
    }

    #[test]
    fn replay_caps_edge_weight_at_one() {
        let mut s = store();
        let a = add(&mut s, "almost saturated link start");
        let b = add(&mut s, "almost saturated link end");
        let c = add(&mut s, "fully saturated link end");
        s.connect(a, b, EdgeKind::TemporalFollowedBy, 0.95, 1_000).unwrap();
        s.connect(b, c, EdgeKind::TemporalFollowedBy, 1.0, 1_000).unwrap();

        let (_, deltas) = replay(&mut s, REPLAY_WINDOW_SECONDS, 2_000).unwrap();
        assert_eq!(s.edge(a, b, EdgeKind::TemporalFollowedBy).unwrap().weight, 1.0);
        assert_eq!(s.edge(b, c, EdgeKind::TemporalFollowedBy).unwrap().weight, 1.0);
        // The capped bump reports its realized remainder; the saturated
        // edge contributes nothing.
        assert_eq!(deltas.len(), 1);
        assert_eq!(deltas[0].from, a);
        assert!((deltas[0].delta - 0.05).abs() < 1e-12);
    }

    #[test]
    fn replay_rerun_at_same_clock_is_a_noop() {
        let mut s = store();
        let a = add(&mut s, "repeated tick guard start");
        let b = add(&mut s, "repeated tick guard end");
        s.connect(a, b, EdgeKind::TemporalFollowedBy, 0.5, 1_000).unwrap();

        let (first_chains, _) = replay(&mut s, REPLAY_WINDOW_SECONDS, 2_000).unwrap();
        assert_eq!(first_chains, 1);
        let seq = s.seq();
        let (second_chains, second_deltas) = replay(&mut s, REPLAY_WINDOW_SECONDS, 2_000).unwrap();
        assert_eq!(second_chains, 0);
        assert!(second_deltas.is_empty());
        assert_eq!(s.seq(), seq);
        // A later clock replays again.
        let (third_chains, _) = replay(&mut s, REPLAY_WINDOW_SECONDS, 3_000).unwrap();
        assert_eq!(third_chains, 1);
        assert_eq!(s.fragment(a).unwrap().reinforcement, 0.2);
    }

    #[test]
    fn dissimilar_corpus_yields_no_insights() {
        let embedder = HashEmbedder::default();
        let mut s = store();
        add(&mut s, "volcanic basalt column formations");
        add(&mut s, "sourdough starter feeding schedule");
        add(&mut s, "municipal bond ladder maturity");
        add(&mut s, "hummingbird wing beat frequency");
        let created = abstract_clusters(&mut s, &embedder, MIN_CLUSTER_SIZE, 2_000).unwrap();
        assert!(created.is_empty());
    }

    #[test]
    fn topic_cluster_yields_one_insight_with_lineage_edges() {
        let embedder = HashEmbedder::default();
        let mut s = store();
        let texts = [
            "rooftop solar panel maintenance checklist",
            "rooftop solar panel maintenance reminder",
            "rooftop solar panel maintenance schedule",
            "rooftop solar panel maintenance notes",
        ];
        let members: Vec<FragmentId> = texts.iter().map(|t| add(&mut s, t)).collect();
        let outsider = add(&mut s, "marinara sauce simmering time");

        // Premise, checked independently of the implementation: walking the
        // pool in id order, every topic text joins the incrementally
        // updated centroid at >= 0.6 and the outsider never does.
        let mut vectors = vec![s.fragment(members[0]).unwrap().embedding.clone()];
        let mut center = vectors[0].clone();
        for &id in &members[1..] {
            let e = s.fragment(id).unwrap().embedding.clone();
            assert!(cosine(&e, &center) >= CLUSTER_JOIN_COSINE);
            vectors.push(e);
            center = centroid(&vectors).unwrap();
        }
        assert!(cosine(&s.fragment(outsider).unwrap().embedding, &center) < CLUSTER_JOIN_COSINE);

        let created = abstract_clusters(&mut s, &embedder, MIN_CLUSTER_SIZE, 2_000).unwrap();
        assert_eq!(created.len(), 1);
        let insight = s.fragment(created[0]).unwrap();
        assert_eq!(insight.kind, FragmentKind::Insight);
        assert_eq!(insight.temporal_class, TemporalClass::Timeless);
        assert_eq!(insight.salience, 0.5); // max member salience
        assert_eq!(insight.provenance.lineage, members);
        assert!(insight.content.contains("4 fragments"));
        for &member in &members {
            let edge = s.edge(created[0], member, EdgeKind::DerivedFrom).unwrap();
            assert_eq!(edge.weight, 1.0);
        }
        assert!(s.edge(created[0], outsider, EdgeKind::DerivedFrom).is_none());
    }

    #[test]
    fn rerunning_abstraction_creates_no_duplicate_insight() {
        let embedder = HashEmbedder::default();
        let mut s = store();
        for text in [
            "greenhouse tomato watering rotation",
            "watering the greenhouse tomato beds",
            "greenhouse tomato feed and watering notes",
        ] {
            add(&mut s, text);
        }
        let first = abstract_clusters(&mut s, &embedder, MIN_CLUSTER_SIZE, 2_000).unwrap();
        assert_eq!(first.len(), 1);
        let second = abstract_clusters(&mut s, &embedder, MIN_CLUSTER_SIZE, 3_000).unwrap();
        assert!(second.is_empty());
    }

    #[test]
    fn small_min_size_is_rejected() {
        let mut s = store();
        let err = abstract_clusters(&mut s, &HashEmbedder::default(), 1, 2_000).unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
    }

    /// Three near-duplicate episodes plus one unrelated one.
    fn seed_repeated_episodes(s: &mut MemoryStore) -> Vec<FragmentId> {
        let mut ids = Vec::new();
        let episodes = [
            ("morning run around the reservoir", "stretch and shower after the run"),
            ("morning run around the reservoir", "stretch and shower after the jog"),
            ("morning run around the reservoir again", "stretch and shower after the run"),
            ("quarterly tax filing paperwork deadline", "mail quarterly tax forms early"),
        ];
        for (i, (first, second)) in episodes.iter().enumerate() {
            let episode = (i + 1) as u64;
            let base = 1_000 + i as u64 * 10_000;
            ids.push(add_at(s, first, episode, base, 0.5));
            ids.push(add_at(s, second, episode, base + 60, 0.5));
        }
        ids
    }

    #[test]
    fn repeated_episodes_yield_one_gist_with_representatives() {
        let embedder = HashEmbedder::default();
        let mut s = store();
        seed_repeated_episodes(&mut s);

        // Premise: the three run episodes group pairwise at >= 0.7 and the
        // tax episode matches none of them.
        let mut centers: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for episode in 1..=4u64 {
            let vectors: Vec<Vec<f64>> = s
                .fragments()
                .filter(|f| f.episode == episode)
                .map(|f| f.embedding.clone())
                .collect();
            centers.insert(episode, centroid(&vectors).unwrap());
        }
        for a in 1..=3u64 {
            for b in (a + 1)..=3u64 {
                assert!(cosine(&centers[&a], &centers[&b]) >= GIST_GROUP_COSINE);
            }
            assert!(cosine(&centers[&a], &centers[&4]) < GIST_GROUP_COSINE);
        }

        let created = extract_gist(&mut s, &embedder, 50_000).unwrap();
        assert_eq!(created.len(), 1);
        let gist = s.fragment(created[0]).unwrap();
        assert_eq!(gist.kind, FragmentKind::Gist);
        assert_eq!(gist.temporal_class, TemporalClass::Timeless);
        assert!(gist.content.contains("3 episodes"));
        assert_eq!(gist.provenance.lineage.len(), 3);
        let mut episodes_covered: Vec<u64> = gist
            .provenance
            .lineage
            .iter()
            .map(|&id| s.fragment(id).unwrap().episode)
            .collect();
        episodes_covered.sort();
        assert_eq!(episodes_covered, vec![1, 2, 3]);
        for &rep in &gist.provenance.lineage {
            assert_eq!(s.edge(created[0], rep, EdgeKind::DerivedFrom).unwrap().weight, 1.0);
        }

        // Idempotence and the sub-threshold case.
        assert!(extract_gist(&mut s, &embedder, 60_000).unwrap().is_empty());
    }

    #[test]
    fn two_matching_episodes_yield_no_gist() {
        let embedder = HashEmbedder::default();
        let mut s = store();
        add_at(&mut s, "evening violin practice scales", 1, 1_000, 0.5);
        add_at(&mut s, "evening violin practice scales again", 2, 5_000, 0.5);
        assert!(extract_gist(&mut s, &embedder, 10_000).unwrap().is_empty());
    }

    #[test]
    fn gist_survives_capacity_pressure() {
        let embedder = HashEmbedder::default();
        let mut params = EngineParams::default();
        params.capacity = 8;
        let mut s = MemoryStore::new(params).unwrap();
        seed_repeated_episodes(&mut s);
        let created = extract_gist(&mut s, &embedder, 50_000).unwrap();
        assert_eq!(created.len(), 1);
        assert_eq!(s.live_count(), 9); // one over capacity

        let evicted = enforce_capacity(&mut s, 50_000).unwrap();
        assert_eq!(evicted.len(), 1);
        assert_eq!(s.live_count(), 8);
        assert!(s.fragment(created[0]).is_ok());
        let gist_lineage = s.fragment(created[0]).unwrap().provenance.lineage.clone();
        assert!(!gist_lineage.contains(&evicted[0]));
    }

    #[test]
    fn fresh_fragment_stays_active() {
        let mut s = store();
        let id = add_at(&mut s, "just touched this moment", 1, 1_000, 0.0);
        let fading = decay_and_dormancy(&mut s, 1_000).unwrap();
        assert!(fading.is_empty());
        assert_eq!(s.fragment(id).unwrap().state, FragmentState::Active);
    }

    #[test]
    fn ancient_unreinforced_fragment_goes_dormant() {
        let mut s = store();
        let id = add_at(&mut s, "long forgotten trivia", 1, 1_000, 0.0);
        let now = 1_000 + 100 * WEEK;
        let fading = decay_and_dormancy(&mut s, now).unwrap();
        assert_eq!(fading, vec![id]);
        let fragment = s.fragment(id).unwrap();
        assert_eq!(fragment.state, FragmentState::Dormant);
        let entry = s.mutation_log().last().unwrap();
        assert_eq!(entry.cause, MutationCause::Decay);
        // Dormancy, never deletion.
        assert_eq!(s.live_count(), 1);
        assert_eq!(s.tombstones().count(), 0);
    }

    #[test]
    fn abstracted_member_fades_strictly_earlier() {
        let embedder = HashEmbedder::default();
        let mut s = store();
        let text = "identical twin fragment for fade comparison";
        let member = add_at(&mut s, text, 1, 1_000, 0.3);
        let control = add_at(&mut s, text, 1, 1_000, 0.3);
        // Fold only `member` into an insight.
        let content = "insight (1 fragments): stub";
        s.add_fragment(FragmentDraft {
            content: content.to_string(),
            embedding: embedder.embed(content).unwrap(),
            created_at: 1_000,
            session: String::new(),
            episode: 0,
            salience: 0.3,
            reinforcement: 0.0,
            temporal_class: TemporalClass::Timeless,
            state: FragmentState::Active,
            kind: FragmentKind::Insight,
            provenance: Provenance {
                source: "abstraction".to_string(),
                lineage: vec![member],
                merged_texts: Vec::new(),
            },
        })
        .unwrap();

        let mut member_tick = None;
        let mut control_tick = None;
        for tick in 1..=10u64 {
            let now = 1_000 + tick * WEEK;
            let fading = decay_and_dormancy(&mut s, now).unwrap();
            if member_tick.is_none() && fading.contains(&member) {
                member_tick = Some(tick);
            }
            if control_tick.is_none() && fading.contains(&control) {
                control_tick = Some(tick);
            }
        }
        assert_eq!(member_tick, Some(2));
        assert_eq!(control_tick, Some(3));
        assert!(member_tick.unwrap() < control_tick.unwrap());
    }

    #[test]
    fn tick_composes_sub_job_outputs_and_is_idempotent() {
        let embedder = HashEmbedder::default();
        let mut s = store();
        // A chain that is also a topic cluster, plus repeated episodes.
        let ids = seed_repeated_episodes(&mut s);
        s.connect(ids[0], ids[1], EdgeKind::TemporalFollowedBy, 0.5, 1_100).unwrap();
        for window in ids.windows(2).skip(1) {
            if s.fragment(window[0]).unwrap().episode == s.fragment(window[1]).unwrap().episode {
                s.connect(window[0], window[1], EdgeKind::TemporalFollowedBy, 0.5, 31_100).unwrap();
            }
        }
        let now = 60_000;
        let report = consolidate_tick(&mut s, &embedder, now).unwrap();
        assert!(report.replayed_chains > 0);
        assert!(!report.insights_created.is_empty() || !report.gists_created.is_empty());
        for id in report.insights_created.iter().chain(&report.gists_created) {
            let fragment = s.fragment(*id).unwrap();
            assert!(matches!(fragment.kind, FragmentKind::Insight | FragmentKind::Gist));
            assert!(!fragment.provenance.lineage.is_empty());
            for &source in &fragment.provenance.lineage {
                assert!(s.edge(*id, source, EdgeKind::DerivedFrom).is_some());
            }
        }
        s.audit().unwrap();

        // Quiescent re-tick at the same clock changes nothing at all.
        let before = s.to_snapshot_doc().to_canonical_json();
        let second = consolidate_tick(&mut s, &embedder, now).unwrap();
        assert_eq!(second.replayed_chains, 0);
        assert!(second.insights_created.is_empty());
        assert!(second.gists_created.is_empty());
        assert!(second.made_dormant.is_empty());
        let after = s.to_snapshot_doc().to_canonical_json();
        assert_eq!(before, after);
        // No job deleted anything.
        assert_eq!(s.tombstones().count(), 0);
    }

    #[test]
    fn insight_is_retrievable_for_topic_queries() {
        let embedder = HashEmbedder::default();
        let mut s = store();
        for text in [
            "rooftop solar panel maintenance checklist",
            "rooftop solar panel maintenance reminder",
            "rooftop solar panel maintenance schedule",
            "rooftop solar panel maintenance notes",
        ] {
            add(&mut s, text);
        }
        let created = abstract_clusters(&mut s, &embedder, MIN_CLUSTER_SIZE, 2_000).unwrap();
        assert_eq!(created.len(), 1);
        let set = retrieve(&s, &embedder, "solar panel maintenance", 5, &[], 3_000).unwrap();
        assert!(set.results.iter().any(|r| r.id == created[0]));
    }
}
