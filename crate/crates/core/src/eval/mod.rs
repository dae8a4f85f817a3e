//! Evaluation harness: probe corpora, rubric judging, and statistics.
//!
//! The harness regenerates four behavioral probes at desk scale —
//! knowledge updates, temporal association, associative recall, and
//! disambiguation — runs the memory engine and the recency-weighted
//! baseline side by side on each, judges both anonymously with a
//! deterministic rubric oracle, and summarizes the outcome with effect
//! sizes and exact resampling statistics. Everything is seeded, so a
//! report is a pure function of (corpus seed set, engine config).

pub mod judge;
pub mod probes;
pub mod stats;
pub mod study;

pub use judge::{judge, judge_with, JudgeOutcome, Verdict};
pub use probes::{
    gen_associative, gen_disambiguation, gen_knowledge_updates, gen_temporal, ProbeQuery,
    ProbeScenario, SetupRecord, Study,
};
pub use stats::{cohens_d, cohens_h, mcnemar, permutation_test};
pub use study::{run_all_studies, run_study, EvalReport, LatencySummary, QueryRow, StudyReport};
