//! Ingest pipeline: text in, graph growth out.
//!
//! Each observation is embedded, scored for salience, classified temporally,
//! and either merged into a near-duplicate fragment (reinforcing it) or
//! stored as a new fragment wired into the graph: a temporal edge extends the
//! current episode chain, semantic edges attach it to similar active
//! fragments, oversize texts are compressed to a summary with a dormant
//! archive companion, and a capacity sweep evicts the least-retained
//! fragments when the store is over budget.

use crate::embedding::{cosine, tokenize, EmbeddingProvider};
use crate::substrate::{
    EdgeKind, FragmentDraft, FragmentId, FragmentKind, FragmentState, MemoryStore, Provenance,
    TemporalClass,
};
use crate::{Error, Result};
use std::collections::BTreeSet;
use std::sync::OnceLock;

/// Texts longer than this many characters are summarized, with the full text
/// archived as a dormant companion fragment.
pub const OVERSIZE_CHARS: usize = 2000;

/// Base salience assigned to every text before heuristics add to it.
const SALIENCE_BASE: f64 = 0.3;
/// Per-hit affect bonus and its hit cap.
const AFFECT_BONUS: f64 = 0.1;
const AFFECT_HIT_CAP: usize = 4;
/// Bonus for exclamation marks or fully-capitalized words.
const EMPHASIS_BONUS: f64 = 0.1;
/// Bonus for commitment/correction markers.
const COMMITMENT_BONUS: f64 = 0.2;
/// Initial weight of the temporal edge extending an episode chain.
const TEMPORAL_EDGE_WEIGHT: f64 = 0.5;

const AFFECT_LEXICON_RAW: &str = include_str!("data/affect_lexicon.txt");
const COMMITMENT_MARKERS_RAW: &str = include_str!("data/commitment_markers.txt");

fn affect_lexicon() -> &'static BTreeSet<String> {
    static LEXICON: OnceLock<BTreeSet<String>> = OnceLock::new();
    LEXICON.get_or_init(|| {
        AFFECT_LEXICON_RAW
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect()
    })
}

fn commitment_markers() -> &'static Vec<String> {
    static MARKERS: OnceLock<Vec<String>> = OnceLock::new();
    MARKERS.get_or_init(|| {
        COMMITMENT_MARKERS_RAW
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| format!(" {l} "))
            .collect()
    })
}

/// Lowercase the text and flatten all punctuation to single spaces, padded,
/// so phrase markers match on word boundaries.
fn normalized_padded(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push(' ');
    let mut last_space = true;
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for low in ch.to_lowercase() {
                out.push(low);
            }
            last_space = false;
        } else if !last_space {
            out.push(' ');
            last_space = true;
        }
    }
    if !last_space {
        out.push(' ');
    }
    out
}

/// Deterministic salience heuristic: base 0.3, +0.1 per affect-lexicon hit
/// (capped at four), +0.1 for an exclamation mark or a fully-capitalized
/// word, +0.2 for a commitment/correction marker; clamped to [0, 1].
pub fn score_salience(text: &str) -> Result<f64> {
    if text.trim().is_empty() {
        return Err(Error::EmptyEmbedding(text.to_string()));
    }
    let tokens = tokenize(text);
    let lexicon = affect_lexicon();
    let affect_hits = tokens.iter().filter(|t| lexicon.contains(*t)).count();
    let mut score = SALIENCE_BASE + AFFECT_BONUS * affect_hits.min(AFFECT_HIT_CAP) as f64;
    if has_emphasis(text) {
        score += EMPHASIS_BONUS;
    }
    let padded = normalized_padded(text);
    if commitment_markers().iter().any(|m| padded.contains(m)) {
        score += COMMITMENT_BONUS;
    }
    Ok(score.clamp(0.0, 1.0))
}

/// `!` anywhere, or a run of two or more uppercase letters forming a whole
/// alphabetic word (single capitals like initials or "100C" do not count).
fn has_emphasis(text: &str) -> bool {
    if text.contains('!') {
        return true;
    }
    let mut run = 0usize;
    let mut all_upper = true;
    for ch in text.chars().chain(std::iter::once(' ')) {
        if ch.is_alphabetic() {
            run += 1;
            all_upper &= ch.is_uppercase();
        } else {
            if run >= 2 && all_upper {
                return true;
            }
            run = 0;
            all_upper = true;
        }
    }
    false
}

const HABITUAL_CUES: &[&str] = &[
    "always",
    "daily",
    "each",
    "every",
    "fridays",
    "mondays",
    "monthly",
    "regularly",
    "routinely",
    "saturdays",
    "sundays",
    "thursdays",
    "tuesdays",
    "typically",
    "usually",
    "wednesdays",
    "weekly",
];

const FIRST_PERSON: &[&str] = &["i", "me", "mine", "my", "our", "ours", "us", "we"];

const TIME_REFS: &[&str] = &[
    "afternoon",
    "ago",
    "april",
    "august",
    "currently",
    "december",
    "evening",
    "february",
    "friday",
    "january",
    "july",
    "june",
    "last",
    "later",
    "march",
    "monday",
    "month",
    "months",
    "morning",
    "next",
    "night",
    "november",
    "now",
    "october",
    "recently",
    "saturday",
    "september",
    "soon",
    "sunday",
    "thursday",
    "today",
    "tomorrow",
    "tonight",
    "tuesday",
    "wednesday",
    "week",
    "weeks",
    "year",
    "years",
    "yesterday",
];

const IRREGULAR_PAST: &[&str] = &[
    "ate", "became", "began", "bought", "broke", "brought", "built", "came", "caught", "chose",
    "did", "drank", "drove", "fell", "felt", "flew", "forgot", "found", "gave", "got", "grew",
    "had", "heard", "held", "kept", "knew", "left", "lost", "made", "meant", "met", "paid", "ran",
    "said", "sat", "saw", "sent", "slept", "sold", "spent", "spoke", "stood", "taught", "thought",
    "threw", "told", "took", "was", "went", "were", "woke", "wore", "wrote",
];

/// Words ending in "ed" that are not past-tense verbs.
const ED_ALLOWLIST: &[&str] = &[
    "bed", "breed", "deed", "embed", "feed", "greed", "hundred", "indeed", "naked", "need", "red",
    "sacred", "seed", "shed", "speed", "wicked",
];

/// Keyword heuristic for a fragment's relationship to time.
///
/// Habitual cues win outright. A text with no first-person pronoun and no
/// time reference is a standing fact (timeless) as long as it reads as
/// present tense — it has a copula or lacks past-tense cues. Everything else
/// is episodic when a session timestamp anchors it, timeless otherwise.
pub fn classify_temporal(text: &str, has_session_timestamp: bool) -> TemporalClass {
    let tokens = tokenize(text);
    let has = |set: &[&str]| tokens.iter().any(|t| set.contains(&t.as_str()));
    if has(HABITUAL_CUES) {
        return TemporalClass::Habitual;
    }
    let first_person = has(FIRST_PERSON);
    let time_ref = has(TIME_REFS);
    let copula = tokens.iter().any(|t| t == "is" || t == "are");
    let past_cue = tokens.iter().any(|t| {
        IRREGULAR_PAST.contains(&t.as_str())
            || (t.len() >= 3 && t.ends_with("ed") && !ED_ALLOWLIST.contains(&t.as_str()))
    });
    if !first_person && !time_ref && (copula || !past_cue) {
        return TemporalClass::Timeless;
    }
    if has_session_timestamp {
        TemporalClass::Episodic
    } else {
        TemporalClass::Timeless
    }
}

/// The active fragment most similar to `v`, if that similarity clears the
/// merge threshold. Dormant fragments never match.
pub fn detect_novelty(store: &MemoryStore, v: &[f64]) -> Option<FragmentId> {
    let theta = store.params().theta_merge;
    let mut best: Option<(f64, FragmentId)> = None;
    for fragment in store.fragments() {
        if fragment.state != FragmentState::Active {
            continue;
        }
        let cos = cosine(v, &fragment.embedding);
        if cos < theta {
            continue;
        }
        // Highest cosine wins; ties go to the older (smaller) id.
        let better = match best {
            None => true,
            Some((bc, bid)) => cos > bc || (cos == bc && fragment.id < bid),
        };
        if better {
            best = Some((cos, fragment.id));
        }
    }
    best.map(|(_, id)| id)
}

/// Does a new observation at `ts` open a new episode? True on a session
/// switch or when the silence since `prev_ts` strictly exceeds the gap.
pub fn segment_episode(
    prev_ts: u64,
    ts: u64,
    session_changed: bool,
    gap_episode: u64,
) -> Result<bool> {
    if ts < prev_ts {
        return Err(Error::ClockRegression { ts, last: prev_ts });
    }
    Ok(session_changed || ts - prev_ts > gap_episode)
}

/// Extractive stand-in for an abstractive summarizer: first sentence, last
/// sentence, and the five highest-frequency tokens, joined.
pub fn summarize_oversize(text: &str) -> String {
    let sentences = split_sentences(text);
    let first = sentences.first().map(String::as_str).unwrap_or("");
    let last = sentences.last().map(String::as_str).unwrap_or("");
    let mut counts: std::collections::BTreeMap<String, usize> = std::collections::BTreeMap::new();
    for token in tokenize(text) {
        *counts.entry(token).or_default() += 1;
    }
    let mut ranked: Vec<(&String, &usize)> = counts.iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let keywords: Vec<&str> = ranked.iter().take(5).map(|(t, _)| t.as_str()).collect();
    let mut out = String::new();
    out.push_str(first);
    if last != first {
        out.push(' ');
        out.push_str(last);
    }
    if !keywords.is_empty() {
        out.push(' ');
        out.push_str(&keywords.join(" "));
    }
    out
}

fn split_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        current.push(ch);
        if matches!(ch, '.' | '!' | '?') {
            let trimmed = current.trim();
            if !trimmed.is_empty() {
                sentences.push(trimmed.to_string());
            }
            current.clear();
        }
    }
    let trimmed = current.trim();
    if !trimmed.is_empty() {
        sentences.push(trimmed.to_string());
    }
    sentences
}

/// What an ingest call did to the store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestOutcome {
    pub result: IngestResult,
    /// Edges created by this call (temporal + semantic + lineage).
    pub edges_created: usize,
    /// Fragments evicted by the capacity sweep, oldest first.
    pub evicted: Vec<FragmentId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestResult {
    Created(FragmentId),
    /// The text was folded into an existing fragment.
    Merged(FragmentId),
}

impl IngestResult {
    pub fn id(&self) -> FragmentId {
        match self {
            Self::Created(id) | Self::Merged(id) => *id,
        }
    }
}

/// Ingest one observation. See the module docs for the pipeline; the clock
/// must not run backwards across calls.
pub fn ingest(
    store: &mut MemoryStore,
    embedder: &dyn EmbeddingProvider,
    text: &str,
    session: &str,
    ts: u64,
) -> Result<IngestOutcome> {
    if text.trim().is_empty() {
        return Err(Error::EmptyEmbedding(text.to_string()));
    }
    let last_ts = store.counters().last_ingest_ts;
    if ts < last_ts {
        return Err(Error::ClockRegression { ts, last: last_ts });
    }
    let embedding = embedder.embed(text)?;
    let salience = score_salience(text)?;

    if let Some(target) = detect_novelty(store, &embedding) {
        store.record_merge(target, text, session, ts, salience)?;
        return Ok(IngestOutcome {
            result: IngestResult::Merged(target),
            edges_created: 0,
            evicted: Vec::new(),
        });
    }

    let temporal_class = classify_temporal(text, true);
    let counters = store.counters();
    let session_changed = counters.last_session.as_deref() != Some(session);
    let new_episode = counters.current_episode == 0
        || segment_episode(
            counters.last_ingest_ts,
            ts,
            session_changed,
            store.params().gap_episode,
        )?;
    let episode = if new_episode {
        counters.episode_counter + 1
    } else {
        counters.current_episode
    };
    let chain_tail = if new_episode {
        None
    } else {
        counters.episode_tail
    };

    let mut edges_created = 0usize;
    let oversize = text.chars().count() > OVERSIZE_CHARS;
    let (id, search_embedding) = if oversize {
        // Archive the full text as a dormant companion, store the summary as
        // the live conversational fragment, and link them.
        let archive = store.add_fragment(FragmentDraft {
            content: text.to_string(),
            embedding: embedding.clone(),
            created_at: ts,
            session: session.to_string(),
            episode: 0,
            salience,
            reinforcement: 0.0,
            temporal_class,
            state: FragmentState::Dormant,
            kind: FragmentKind::Raw,
            provenance: Provenance::source("archive"),
        })?;
        let summary_text = summarize_oversize(text);
        let summary_embedding = embedder.embed(&summary_text)?;
        let id = store.add_conversational(FragmentDraft {
            content: summary_text,
            embedding: summary_embedding.clone(),
            created_at: ts,
            session: session.to_string(),
            episode,
            salience,
            reinforcement: 0.0,
            temporal_class,
            state: FragmentState::Active,
            kind: FragmentKind::Summary,
            provenance: Provenance {
                source: "conversation".to_string(),
                lineage: vec![archive],
                merged_texts: Vec::new(),
            },
        })?;
        store.connect(id, archive, EdgeKind::DerivedFrom, 1.0, ts)?;
        edges_created += 1;
        (id, summary_embedding)
    } else {
        let id = store.add_conversational(FragmentDraft {
            content: text.to_string(),
            embedding: embedding.clone(),
            created_at: ts,
            session: session.to_string(),
            episode,
            salience,
            reinforcement: 0.0,
            temporal_class,
            state: FragmentState::Active,
            kind: FragmentKind::Raw,
            provenance: Provenance::source("conversation"),
        })?;
        (id, embedding)
    };

    if let Some(tail) = chain_tail {
        store.connect(tail, id, EdgeKind::TemporalFollowedBy, TEMPORAL_EDGE_WEIGHT, ts)?;
        edges_created += 1;
    }

    // Semantic edges to the most similar active fragments.
    let theta_sem = store.params().theta_sem;
    let m_sem = store.params().m_sem;
    let mut candidates: Vec<(f64, FragmentId)> = store
        .fragments()
        .filter(|f| f.id != id && f.state == FragmentState::Active)
        .map(|f| (cosine(&search_embedding, &f.embedding), f.id))
        .filter(|(cos, _)| *cos >= theta_sem)
        .collect();
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    candidates.truncate(m_sem);
    for (cos, other) in candidates {
        store.connect(id, other, EdgeKind::Semantic, cos, ts)?;
        edges_created += 1;
    }

    let evicted = enforce_capacity(store, ts)?;
    Ok(IngestOutcome {
        result: IngestResult::Created(id),
        edges_created,
        evicted,
    })
}

/// Evict the least-retained fragments until the store fits its capacity.
/// Insights, gists, and anything referenced as lineage are exempt; ties are
/// broken toward the oldest id. Returns the evicted ids in eviction order.
pub fn enforce_capacity(store: &mut MemoryStore, now: u64) -> Result<Vec<FragmentId>> {
    let capacity = store.params().capacity;
    let lambda = store.params().lambda;
    let mut evicted = Vec::new();
    while store.live_count() > capacity {
        let exempt: BTreeSet<FragmentId> = store
            .fragments()
            .flat_map(|f| f.provenance.lineage.iter().copied())
            .chain(
                store
                    .fragments()
                    .filter(|f| matches!(f.kind, FragmentKind::Insight | FragmentKind::Gist))
                    .map(|f| f.id),
            )
            .collect();
        let victim = store
            .fragments()
            .filter(|f| !exempt.contains(&f.id))
            .map(|f| {
                let age = now.saturating_sub(f.created_at) as f64;
                let retention = 0.4 * f.salience
                    + 0.4 * f.reinforcement.min(5.0) / 5.0
                    + 0.2 * (-lambda * age).exp();
                (retention, f.id)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        match victim {
            Some((_, id)) => {
                store.evict(id, now)?;
                evicted.push(id);
            }
            None => break, // everything left is exempt
        }
    }
    Ok(evicted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashEmbedder;
    use crate::params::EngineParams;

    fn store() -> MemoryStore {
        MemoryStore::new(EngineParams::default()).unwrap()
    }

    fn store_with(params: EngineParams) -> MemoryStore {
        MemoryStore::new(params).unwrap()
    }

    #[test]
    fn salience_of_plain_statement_is_base() {
        assert_eq!(score_salience("The meeting is at 10.").unwrap(), 0.3);
    }

    #[test]
    fn salience_of_urgent_outage_reflects_affect_and_emphasis() {
        // Two affect hits ("urgent", "down") + exclamation/caps emphasis.
        let s = score_salience("URGENT!!! Production is down!").unwrap();
        assert!((s - 0.6).abs() < 1e-12, "got {s}");
        assert!(s >= 0.5);
    }

    #[test]
    fn salience_components_compose() {
        // Commitment marker only.
        let s = score_salience("Actually the meeting moved to room 4.").unwrap();
        assert!((s - 0.5).abs() < 1e-12, "got {s}");
        // Affect hits cap at four.
        let s = score_salience("fear anger panic dread grief despair terror").unwrap();
        assert!((s - 0.7).abs() < 1e-12, "got {s}");
        // Everything at once clamps at 1.0.
        let s =
            score_salience("URGENT! I will fix the awful terrible horrible dreadful crash!")
                .unwrap();
        assert_eq!(s, 1.0);
    }

    #[test]
    fn salience_is_deterministic_and_rejects_empty() {
        let a = score_salience("a quiet note").unwrap();
        let b = score_salience("a quiet note").unwrap();
        assert_eq!(a, b);
        assert!(score_salience("   ").is_err());
    }

    #[test]
    fn emphasis_requires_a_real_caps_word() {
        assert!(!has_emphasis("Water boils at 100C."));
        assert!(!has_emphasis("I met J. R. at noon."));
        assert!(has_emphasis("this is URGENT stuff"));
        assert!(has_emphasis("plain but loud!"));
    }

    #[test]
    fn temporal_classification_follows_rules() {
        assert_eq!(
            classify_temporal("I run every Tuesday.", true),
            TemporalClass::Habitual
        );
        assert_eq!(
            classify_temporal("Water boils at 100C.", false),
            TemporalClass::Timeless
        );
        assert_eq!(
            classify_temporal("Water boils at 100C.", true),
            TemporalClass::Timeless
        );
        assert_eq!(
            classify_temporal("Saw a deer on the trail this morning.", true),
            TemporalClass::Episodic
        );
        assert_eq!(
            classify_temporal("The capital of France is Paris.", true),
            TemporalClass::Timeless
        );
        assert_eq!(
            classify_temporal("I went to the dentist yesterday.", true),
            TemporalClass::Episodic
        );
        // Without a session anchor, episodic candidates fall back to timeless.
        assert_eq!(
            classify_temporal("Saw a deer on the trail this morning.", false),
            TemporalClass::Timeless
        );
    }

    #[test]
    fn novelty_finds_only_active_duplicates() {
        let embedder = HashEmbedder::default();
        let mut s = store();
        assert_eq!(detect_novelty(&s, &embedder.embed("anything").unwrap()), None);
        let out = ingest(&mut s, &embedder, "the reactor manual is on shelf four", "s1", 100)
            .unwrap();
        let id = out.result.id();
        // Exact duplicate matches (cosine 1.0).
        let v = embedder.embed("the reactor manual is on shelf four").unwrap();
        assert_eq!(detect_novelty(&s, &v), Some(id));
        // An unrelated text does not.
        let v2 = embedder.embed("lunch options near the park").unwrap();
        assert_eq!(detect_novelty(&s, &v2), None);
        // Dormant fragments never match.
        s.mutate(
            id,
            crate::substrate::FieldChange::State {
                state: FragmentState::Dormant,
            },
            200,
            crate::substrate::MutationCause::Decay,
        )
        .unwrap();
        assert_eq!(detect_novelty(&s, &v), None);
    }

    #[test]
    fn episode_segmentation_boundaries() {
        assert!(!segment_episode(1000, 1010, false, 1800).unwrap());
        assert!(segment_episode(1000, 8200, false, 1800).unwrap());
        // Exactly the gap is still the same episode (strict inequality).
        assert!(!segment_episode(1000, 2800, false, 1800).unwrap());
        assert!(segment_episode(1000, 1010, true, 1800).unwrap());
        assert!(matches!(
            segment_episode(1000, 999, false, 1800),
            Err(Error::ClockRegression { .. })
        ));
    }

    #[test]
    fn ingest_chains_an_episode_and_splits_on_gap_or_session() {
        let embedder = HashEmbedder::default();
        let mut s = store();
        let a = ingest(&mut s, &embedder, "checked the boiler pressure", "s1", 1000)
            .unwrap()
            .result
            .id();
        let b = ingest(&mut s, &embedder, "logged the valve readings", "s1", 1060)
            .unwrap()
            .result
            .id();
        let c = ingest(&mut s, &embedder, "filed the shift report", "s1", 1120)
            .unwrap()
            .result
            .id();
        // Three ingests in one episode -> exactly two temporal edges, a path.
        let temporal: Vec<_> = s
            .edges()
            .filter(|e| e.kind == EdgeKind::TemporalFollowedBy)
            .collect();
        assert_eq!(temporal.len(), 2);
        assert!(temporal.iter().any(|e| e.from == a && e.to == b));
        assert!(temporal.iter().any(|e| e.from == b && e.to == c));
        assert_eq!(s.fragment(a).unwrap().episode, 1);
        assert_eq!(s.fragment(c).unwrap().episode, 1);
        // A long silence opens a new episode with no back-link.
        let d = ingest(&mut s, &embedder, "reviewed the overnight alerts", "s1", 9000)
            .unwrap();
        assert_eq!(d.edges_created, 0);
        assert_eq!(s.fragment(d.result.id()).unwrap().episode, 2);
        // A session switch does too.
        let e = ingest(&mut s, &embedder, "drafted the maintenance plan", "s2", 9060)
            .unwrap();
        assert_eq!(s.fragment(e.result.id()).unwrap().episode, 3);
    }

    #[test]
    fn first_ingest_creates_no_edges() {
        let embedder = HashEmbedder::default();
        let mut s = store();
        let out = ingest(&mut s, &embedder, "hello weather station", "s1", 100).unwrap();
        assert!(matches!(out.result, IngestResult::Created(_)));
        assert_eq!(out.edges_created, 0);
        assert!(out.evicted.is_empty());
    }

    #[test]
    fn duplicate_text_merges_and_reinforces() {
        let embedder = HashEmbedder::default();
        let mut s = store();
        let text = "the backup job runs from the blue server";
        let first = ingest(&mut s, &embedder, text, "s1", 100).unwrap().result.id();
        let out = ingest(&mut s, &embedder, text, "s1", 160).unwrap();
        assert_eq!(out.result, IngestResult::Merged(first));
        assert_eq!(out.edges_created, 0);
        let f = s.fragment(first).unwrap();
        assert_eq!(f.reinforcement, 0.5);
        assert_eq!(f.last_accessed_at, 160);
        assert_eq!(s.live_count(), 1, "no duplicate fragment");
        // Merge never decreases salience.
        assert!(f.salience >= 0.3);
    }

    #[test]
    fn clock_regression_is_rejected() {
        let embedder = HashEmbedder::default();
        let mut s = store();
        ingest(&mut s, &embedder, "first entry", "s1", 1000).unwrap();
        assert!(matches!(
            ingest(&mut s, &embedder, "second entry", "s1", 999),
            Err(Error::ClockRegression { .. })
        ));
    }

    #[test]
    fn semantic_edges_attach_to_similar_actives() {
        let embedder = HashEmbedder::default();
        let mut s = store();
        let a = ingest(
            &mut s,
            &embedder,
            "the turbine coolant loop pressure gauge reading",
            "s1",
            100,
        )
        .unwrap()
        .result
        .id();
        // Heavily overlapping vocabulary, but shy of the merge threshold.
        let out = ingest(
            &mut s,
            &embedder,
            "turbine coolant loop pressure gauge calibration",
            "s1",
            160,
        )
        .unwrap();
        let b = out.result.id();
        assert!(matches!(out.result, IngestResult::Created(_)));
        let sem: Vec<_> = s.edges().filter(|e| e.kind == EdgeKind::Semantic).collect();
        assert_eq!(sem.len(), 1);
        assert_eq!((sem[0].from, sem[0].to), (b, a));
        let expected = cosine(
            &s.fragment(b).unwrap().embedding,
            &s.fragment(a).unwrap().embedding,
        );
        assert_eq!(sem[0].weight, expected);
        assert!(expected >= 0.55 && expected < 0.92, "cos = {expected}");
        // Temporal edge also created: 2 edges total.
        assert_eq!(out.edges_created, 2);
    }

    #[test]
    fn oversize_text_is_summarized_with_archived_original() {
        let embedder = HashEmbedder::default();
        let mut s = store();
        let body = "The annual facility audit covered every subsystem in detail. "
            .repeat(40);
        let text = format!("{body}Final verdict: the cooling towers need repairs.");
        assert!(text.chars().count() > OVERSIZE_CHARS);
        let out = ingest(&mut s, &embedder, &text, "s1", 100).unwrap();
        let id = out.result.id();
        let summary = s.fragment(id).unwrap();
        assert_eq!(summary.kind, FragmentKind::Summary);
        assert!(summary.content.contains("The annual facility audit"));
        assert!(summary.content.contains("cooling towers need repairs."));
        assert!(summary.content.chars().count() < text.chars().count());
        assert_eq!(summary.provenance.lineage.len(), 1);
        let archive_id = summary.provenance.lineage[0];
        let archive = s.fragment(archive_id).unwrap();
        assert_eq!(archive.state, FragmentState::Dormant);
        assert_eq!(archive.content, text);
        assert!(s.edge(id, archive_id, EdgeKind::DerivedFrom).is_some());
    }

    #[test]
    fn summarize_keeps_first_and_last_sentences() {
        let text = "Alpha starts the log. Middle content drones on. Omega closes the log.";
        let summary = summarize_oversize(text);
        assert!(summary.contains("Alpha starts the log."));
        assert!(summary.contains("Omega closes the log."));
        assert_eq!(summary, summarize_oversize(text));
    }

    #[test]
    fn capacity_evicts_lowest_retention_with_exemptions() {
        let mut params = EngineParams::default();
        params.capacity = 2;
        let embedder = HashEmbedder::default();
        let mut s = store_with(params);
        // Hand-built fragments with retention 0.9 / 0.5 / 0.3 at now = creation:
        // retention = 0.4*sal + 0.4*min(r,5)/5 + 0.2 (age 0).
        let mk = |text: &str, sal: f64, reinf: f64| FragmentDraft {
            content: text.to_string(),
            embedding: embedder.embed(text).unwrap(),
            created_at: 100,
            session: "s1".to_string(),
            episode: 1,
            salience: sal,
            reinforcement: reinf,
            temporal_class: TemporalClass::Episodic,
            state: FragmentState::Active,
            kind: FragmentKind::Raw,
            provenance: Provenance::source("test"),
        };
        let high = s.add_fragment(mk("high value entry", 1.0, 3.75)).unwrap(); // 0.4+0.3+0.2=0.9
        let mid = s.add_fragment(mk("middle value entry", 0.5, 1.25)).unwrap(); // 0.2+0.1+0.2=0.5
        let low = s.add_fragment(mk("low value entry", 0.25, 0.0)).unwrap(); // 0.1+0+0.2=0.3
        let evicted = enforce_capacity(&mut s, 100).unwrap();
        assert_eq!(evicted, vec![low]);
        assert!(s.fragment(high).is_ok() && s.fragment(mid).is_ok());
        // Under capacity now: sweep is a no-op.
        assert!(enforce_capacity(&mut s, 100).unwrap().is_empty());
    }

    #[test]
    fn gists_and_lineage_referenced_fragments_survive_capacity() {
        let mut params = EngineParams::default();
        params.capacity = 1;
        let embedder = HashEmbedder::default();
        let mut s = store_with(params);
        let raw = s
            .add_fragment(FragmentDraft {
                content: "source entry".to_string(),
                embedding: embedder.embed("source entry").unwrap(),
                created_at: 100,
                session: "s1".to_string(),
                episode: 1,
                salience: 0.0,
                reinforcement: 0.0,
                temporal_class: TemporalClass::Episodic,
                state: FragmentState::Active,
                kind: FragmentKind::Raw,
                provenance: Provenance::source("test"),
            })
            .unwrap();
        let gist = s
            .add_fragment(FragmentDraft {
                content: "gist of the week".to_string(),
                embedding: embedder.embed("gist of the week").unwrap(),
                created_at: 100,
                session: String::new(),
                episode: 0,
                salience: 0.0,
                reinforcement: 0.0,
                temporal_class: TemporalClass::Timeless,
                state: FragmentState::Active,
                kind: FragmentKind::Gist,
                provenance: Provenance {
                    source: "consolidation".to_string(),
                    lineage: vec![raw],
                    merged_texts: Vec::new(),
                },
            })
            .unwrap();
        // Both are exempt (gist kind; raw is lineage-referenced): nothing to
        // evict even though the store is over capacity.
        let evicted = enforce_capacity(&mut s, 100).unwrap();
        assert!(evicted.is_empty());
        assert_eq!(s.live_count(), 2);
        assert!(s.fragment(gist).is_ok());
    }

    #[test]
    fn double_ingest_of_corpus_produces_zero_duplicates() {
        let embedder = HashEmbedder::default();
        let mut s = store();
        let corpus = [
            "the garden hose is behind the shed",
            "tomorrow the electrician inspects the panel",
            "salsa class happens every Thursday",
            "the library card expires in march",
        ];
        let mut ts = 100;
        for text in corpus {
            let out = ingest(&mut s, &embedder, text, "s1", ts).unwrap();
            assert!(matches!(out.result, IngestResult::Created(_)));
            ts += 60;
        }
        let count_after_first = s.live_count();
        for text in corpus {
            let out = ingest(&mut s, &embedder, text, "s1", ts).unwrap();
            assert!(matches!(out.result, IngestResult::Merged(_)));
            ts += 60;
        }
        assert_eq!(s.live_count(), count_after_first);
        s.audit().unwrap();
    }
}
