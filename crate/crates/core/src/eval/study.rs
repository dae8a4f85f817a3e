//! Head-to-head study runner: one corpus, two systems, a blind judge.
//!
//! For every seed the runner builds a fresh memory engine and a fresh
//! baseline store, ingests the identical setup records into both (the engine
//! runs one consolidation pass afterwards, as it would between sessions),
//! then replays the study's queries in seed-shuffled order. Each query is
//! answered by both systems, anonymized as A/B with a per-seed coin flip,
//! and scored by the rubric judge. Counts are pooled across seeds; effect
//! sizes and significance come from the pooled per-query score differences.
//! Reports are byte-deterministic for a given seed list once latencies are
//! zeroed via [`EvalReport::canonical`] / [`StudyReport::canonical`].

use crate::consolidation::consolidate_tick;
use crate::embedding::HashEmbedder;
use crate::error::Result;
use crate::eval::judge::{judge_with, Verdict};
use crate::eval::probes::{ProbeQuery, SetupRecord, Study};
use crate::eval::stats::{cohens_d, cohens_h, mcnemar, permutation_test, DEFAULT_SHUFFLES};
use crate::ingest::ingest;
use crate::params::EngineParams;
use crate::rag::{rag_ingest, rag_retrieve, RagScoreMode, RagStore};
use crate::retrieval::{apply_mutation, retrieve};
use crate::substrate::MemoryStore;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Offset between the last setup record and the consolidation pass.
const TICK_DELAY: u64 = 60;
/// Offset between the consolidation pass and the first query.
const FIRST_QUERY_DELAY: u64 = 120;
/// Spacing between consecutive queries.
const QUERY_SPACING: u64 = 30;

/// A judged verdict with the anonymization unwound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemVerdict {
    CmaWins,
    RagWins,
    Tie,
    BothWrong,
}

impl SystemVerdict {
    pub fn label(self) -> &'static str {
        match self {
            SystemVerdict::CmaWins => "cma_wins",
            SystemVerdict::RagWins => "rag_wins",
            SystemVerdict::Tie => "tie",
            SystemVerdict::BothWrong => "both_wrong",
        }
    }
}

/// One judged query, de-anonymized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRow {
    pub seed: u64,
    /// Position in the seed's shuffled run order.
    pub run_order: usize,
    pub prompt: String,
    pub verdict: SystemVerdict,
    pub score_cma: f64,
    pub score_rag: f64,
    pub accuracy_cma: f64,
    pub accuracy_rag: f64,
    pub contamination_cma: f64,
    pub contamination_rag: f64,
    pub latency_us_cma: u64,
    pub latency_us_rag: u64,
    pub rationale: String,
}

/// Verdict tallies. Always satisfies
/// `wins_cma + wins_rag + ties + both_wrong == total`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub wins_cma: usize,
    pub wins_rag: usize,
    pub ties: usize,
    pub both_wrong: usize,
}

impl VerdictCounts {
    fn add(&mut self, verdict: SystemVerdict) {
        match verdict {
            SystemVerdict::CmaWins => self.wins_cma += 1,
            SystemVerdict::RagWins => self.wins_rag += 1,
            SystemVerdict::Tie => self.ties += 1,
            SystemVerdict::BothWrong => self.both_wrong += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.wins_cma + self.wins_rag + self.ties + self.both_wrong
    }

    /// Queries where exactly one system prevailed.
    pub fn decisive(&self) -> usize {
        self.wins_cma + self.wins_rag
    }
}

/// Per-seed verdict tallies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedCounts {
    pub seed: u64,
    #[serde(flatten)]
    pub counts: VerdictCounts,
}

/// Mean wall-clock per query, per system.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub cma_ms: f64,
    pub rag_ms: f64,
}

/// Everything one study produced across its seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub study: Study,
    pub seeds: Vec<u64>,
    pub queries_per_seed: usize,
    /// Pooled across seeds.
    pub counts: VerdictCounts,
    pub per_seed: Vec<SeedCounts>,
    pub mean_score_cma: f64,
    pub mean_score_rag: f64,
    pub mean_accuracy_cma: f64,
    pub mean_accuracy_rag: f64,
    pub mean_contamination_cma: f64,
    pub mean_contamination_rag: f64,
    /// Effect size over pooled per-query score differences (None when the
    /// differences have zero variance).
    pub cohens_d: Option<f64>,
    /// Effect size between the two systems' shares of decisive wins.
    pub cohens_h: Option<f64>,
    pub p_permutation: f64,
    pub p_mcnemar: Option<f64>,
    pub latency_ms: LatencySummary,
    pub per_query: Vec<QueryRow>,
}

impl StudyReport {
    /// Copy with latency fields zeroed: identical seeds must yield identical
    /// canonical bytes, and wall-clock is the one non-deterministic input.
    pub fn canonical(&self) -> StudyReport {
        let mut report = self.clone();
        report.latency_ms = LatencySummary::default();
        for row in &mut report.per_query {
            row.latency_us_cma = 0;
            row.latency_us_rag = 0;
        }
        report
    }

    pub fn to_canonical_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.canonical())
            .expect("study report serializes");
        text.push('\n');
        text
    }
}

/// All studies, one report each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seeds: Vec<u64>,
    pub studies: Vec<StudyReport>,
}

impl EvalReport {
    pub fn canonical(&self) -> EvalReport {
        EvalReport {
            seeds: self.seeds.clone(),
            studies: self.studies.iter().map(StudyReport::canonical).collect(),
        }
    }

    pub fn to_canonical_json(&self) -> String {
        let mut text =
            serde_json::to_string_pretty(&self.canonical()).expect("eval report serializes");
        text.push('\n');
        text
    }

    /// Flat per-query CSV across all studies.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "study,seed,run_order,verdict,score_cma,score_rag,accuracy_cma,accuracy_rag,\
             contamination_cma,contamination_rag,latency_us_cma,latency_us_rag,prompt\n",
        );
        for report in &self.studies {
            for row in &report.per_query {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    report.study.label(),
                    row.seed,
                    row.run_order,
                    row.verdict.label(),
                    row.score_cma,
                    row.score_rag,
                    row.accuracy_cma,
                    row.accuracy_rag,
                    row.contamination_cma,
                    row.contamination_rag,
                    row.latency_us_cma,
                    row.latency_us_rag,
                    csv_quote(&row.prompt),
                ));
            }
        }
        out
    }
}

fn csv_quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn de_anonymize(verdict: Verdict, cma_is_a: bool) -> SystemVerdict {
    match (verdict, cma_is_a) {
        (Verdict::AWins, true) | (Verdict::BWins, false) => SystemVerdict::CmaWins,
        (Verdict::AWins, false) | (Verdict::BWins, true) => SystemVerdict::RagWins,
        (Verdict::Tie, _) => SystemVerdict::Tie,
        (Verdict::BothWrong, _) => SystemVerdict::BothWrong,
    }
}

/// Run one study across `seeds` and pool the results.
pub fn run_study(study: Study, params: &EngineParams, seeds: &[u64]) -> Result<StudyReport> {
    let embedder = HashEmbedder::new(params.dim);
    let mut counts = VerdictCounts::default();
    let mut per_seed = Vec::new();
    let mut per_query = Vec::new();
    let mut diffs = Vec::new();
    let mut queries_per_seed = 0;
    let mut latency_cma_us: u64 = 0;
    let mut latency_rag_us: u64 = 0;

    for &seed in seeds {
        let scenarios = study.generate(seed);
        let mut cma = MemoryStore::new(params.clone())?;
        let mut rag = RagStore::new(params, RagScoreMode::default(), &embedder);

        let mut records: Vec<&SetupRecord> =
            scenarios.iter().flat_map(|s| s.setup.iter()).collect();
        records.sort_by_key(|r| r.ts);
        for record in &records {
            ingest(&mut cma, &embedder, &record.text, &record.session, record.ts)?;
            rag_ingest(&mut rag, &embedder, &record.text, record.ts)?;
        }
        let end = records.last().map(|r| r.ts).unwrap_or(0);
        consolidate_tick(&mut cma, &embedder, end + TICK_DELAY)?;

        let mut queries: Vec<&ProbeQuery> =
            scenarios.iter().flat_map(|s| s.queries.iter()).collect();
        queries_per_seed = queries.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cma_is_a = rng.gen_bool(0.5);
        queries.shuffle(&mut rng);

        let mut seed_counts = VerdictCounts::default();
        let k = study.k();
        for (run_order, query) in queries.iter().enumerate() {
            let now = end + TICK_DELAY + FIRST_QUERY_DELAY + run_order as u64 * QUERY_SPACING;

            let started = Instant::now();
            let set = retrieve(&cma, &embedder, &query.prompt, k, &query.context, now)?;
            let texts_cma: Vec<String> = set
                .results
                .iter()
                .map(|r| cma.fragment(r.id).map(|f| f.content.clone()))
                .collect::<Result<_>>()?;
            apply_mutation(&mut cma, &set, now)?;
            let lat_cma = started.elapsed().as_micros() as u64;

            let started = Instant::now();
            let hits = rag_retrieve(&rag, &embedder, &query.prompt, k, now)?;
            let lat_rag = started.elapsed().as_micros() as u64;
            let texts_rag: Vec<String> = hits.into_iter().map(|h| h.text).collect();

            let outcome = if cma_is_a {
                judge_with(
                    query,
                    &texts_cma,
                    &texts_rag,
                    params.judge_both_wrong_floor,
                    params.judge_tie_margin,
                )
            } else {
                judge_with(
                    query,
                    &texts_rag,
                    &texts_cma,
                    params.judge_both_wrong_floor,
                    params.judge_tie_margin,
                )
            };
            let verdict = de_anonymize(outcome.verdict, cma_is_a);
            let (score_cma, score_rag, accuracy_cma, accuracy_rag, cont_cma, cont_rag) =
                if cma_is_a {
                    (
                        outcome.score_a,
                        outcome.score_b,
                        outcome.accuracy_a,
                        outcome.accuracy_b,
                        outcome.contamination_a,
                        outcome.contamination_b,
                    )
                } else {
                    (
                        outcome.score_b,
                        outcome.score_a,
                        outcome.accuracy_b,
                        outcome.accuracy_a,
                        outcome.contamination_b,
                        outcome.contamination_a,
                    )
                };

            seed_counts.add(verdict);
            counts.add(verdict);
            diffs.push(score_cma - score_rag);
            latency_cma_us += lat_cma;
            latency_rag_us += lat_rag;
            per_query.push(QueryRow {
                seed,
                run_order,
                prompt: query.prompt.clone(),
                verdict,
                score_cma,
                score_rag,
                accuracy_cma,
                accuracy_rag,
                contamination_cma: cont_cma,
                contamination_rag: cont_rag,
                latency_us_cma: lat_cma,
                latency_us_rag: lat_rag,
                rationale: outcome.rationale,
            });
        }
        per_seed.push(SeedCounts {
            seed,
            counts: seed_counts,
        });
    }

    let n = per_query.len().max(1) as f64;
    let mean = |pick: fn(&QueryRow) -> f64| per_query.iter().map(pick).sum::<f64>() / n;
    let decisive = counts.decisive();
    let cohens_h = if decisive > 0 {
        cohens_h(
            counts.wins_cma as f64 / decisive as f64,
            counts.wins_rag as f64 / decisive as f64,
        )
        .ok()
    } else {
        None
    };
    let p_mcnemar = if decisive > 0 {
        Some(mcnemar(counts.wins_cma as u64, counts.wins_rag as u64)?)
    } else {
        None
    };

    Ok(StudyReport {
        study,
        seeds: seeds.to_vec(),
        queries_per_seed,
        counts,
        per_seed,
        mean_score_cma: mean(|r| r.score_cma),
        mean_score_rag: mean(|r| r.score_rag),
        mean_accuracy_cma: mean(|r| r.accuracy_cma),
        mean_accuracy_rag: mean(|r| r.accuracy_rag),
        mean_contamination_cma: mean(|r| r.contamination_cma),
        mean_contamination_rag: mean(|r| r.contamination_rag),
        cohens_d: cohens_d(&diffs)?,
        cohens_h,
        p_permutation: permutation_test(&diffs, DEFAULT_SHUFFLES, seeds.first().copied().unwrap_or(0))?,
        p_mcnemar,
        latency_ms: LatencySummary {
            cma_ms: latency_cma_us as f64 / 1_000.0 / n,
            rag_ms: latency_rag_us as f64 / 1_000.0 / n,
        },
        per_query,
    })
}

/// Run every study over the same seed list.
pub fn run_all_studies(params: &EngineParams, seeds: &[u64]) -> Result<EvalReport> {
    let studies = Study::ALL
        .iter()
        .map(|&study| run_study(study, params, seeds))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        seeds: seeds.to_vec(),
        studies,
    })
}
