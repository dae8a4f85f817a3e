//! Seeded corpus generators for the four behavioral studies.
//!
//! Each generator builds self-contained scenarios: a list of setup records to
//! ingest (grouped by session, timestamps strictly increasing) plus the
//! queries that probe them. Corpora are pure functions of the seed — the same
//! seed yields byte-identical scenarios, different seeds vary the surface
//! vocabulary while preserving the structural contract each study depends on:
//!
//! * **Knowledge updates** — a fact is stated, then corrected two hours later
//!   in a different session whose small talk becomes the query context. The
//!   query is worded closer to the stale original than to the correction, so
//!   a similarity-times-recency ranker stays stale while context and
//!   association can rescue the correction.
//! * **Temporal** — episodes of events with mutually disjoint vocabulary;
//!   queries anchor one event and expect its neighbors, which share no tokens
//!   with the anchor and are therefore invisible to pure similarity.
//! * **Associative** — two-statement chains (`person → project`,
//!   `project → component`) whose middle entity never appears in the query,
//!   so the answer sits one graph hop beyond anything the prompt mentions.
//! * **Disambiguation** — one ambiguous term, two sense clusters with
//!   disjoint surroundings, queries that carry sense-consistent context while
//!   the prompt itself is equally similar to both senses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Anchor timestamp for generated corpora (arbitrary, but fixed so corpora
/// are stable across machines and runs).
pub const BASE_TS: u64 = 1_600_000_000;

/// The four behavioral studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    KnowledgeUpdate,
    Temporal,
    Associative,
    Disambiguation,
}

impl Study {
    pub const ALL: [Study; 4] = [
        Study::KnowledgeUpdate,
        Study::Temporal,
        Study::Associative,
        Study::Disambiguation,
    ];

    /// Stable identifier used in reports and CLI arguments.
    pub fn label(self) -> &'static str {
        match self {
            Study::KnowledgeUpdate => "knowledge_updates",
            Study::Temporal => "temporal",
            Study::Associative => "associative",
            Study::Disambiguation => "disambiguation",
        }
    }

    /// Retrieval depth used when running this study.
    pub fn k(self) -> usize {
        match self {
            Study::KnowledgeUpdate => 1,
            Study::Temporal => 3,
            Study::Associative => 4,
            Study::Disambiguation => 3,
        }
    }

    /// Build the study corpus for `seed`.
    pub fn generate(self, seed: u64) -> Vec<ProbeScenario> {
        match self {
            Study::KnowledgeUpdate => gen_knowledge_updates(seed),
            Study::Temporal => gen_temporal(seed),
            Study::Associative => gen_associative(seed),
            Study::Disambiguation => gen_disambiguation(seed),
        }
    }
}

/// One record to ingest during study setup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetupRecord {
    pub text: String,
    pub session: String,
    pub ts: u64,
}

/// One probe query plus the rubric the judge scores it against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeQuery {
    /// The prompt handed to both systems verbatim.
    pub prompt: String,
    /// Conversational context lines available to context-aware retrieval.
    pub context: Vec<String>,
    /// Facts a correct answer must cover, listed in chain order where the
    /// rubric is order-sensitive.
    pub expected_facts: Vec<String>,
    /// Facts that must stay out of the answer.
    pub forbidden_facts: Vec<String>,
    /// Whether the rubric rewards presenting expected facts in order.
    pub ordered: bool,
}

/// A self-contained setup-plus-queries unit of a study corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeScenario {
    pub study: Study,
    pub setup: Vec<SetupRecord>,
    pub queries: Vec<ProbeQuery>,
}

/// Mints globally unique word-like tokens: a flavour stem plus a counter that
/// never repeats within a corpus. The seed offsets the counter so different
/// seeds produce disjoint surface vocabulary.
struct Mint {
    counter: u64,
}

impl Mint {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        Mint {
            counter: rng.gen_range(100..900) * 100,
        }
    }

    fn word(&mut self, stem: &str) -> String {
        self.counter += 1;
        format!("{stem}{}", self.counter)
    }

    fn pick(&mut self, rng: &mut ChaCha8Rng, pool: &[&str]) -> String {
        let stem = pool[rng.gen_range(0..pool.len())];
        self.word(stem)
    }
}

const JUNK_STEMS: [&str; 10] = [
    "chatter", "aside", "tangent", "smalltalk", "digress", "banter", "filler", "noise", "riff",
    "murmur",
];

const VALUE_STEMS: [&str; 12] = [
    "amber", "cobalt", "teal", "crimson", "indigo", "sable", "ochre", "jade", "umber", "pearl",
    "slate", "coral",
];

const THEME_STEMS: [&str; 8] = [
    "retro", "standup", "sync", "huddle", "checkin", "recap", "debrief", "roundup",
];

/// Eight fact domains, each with three subject-noun stems.
const KU_DOMAINS: [[&str; 3]; 8] = [
    ["digest", "channel", "cadence"],     // preferences
    ["sensor", "payload", "budget"],      // technical specs
    ["tracer", "breakpoint", "dump"],     // debugging steps
    ["standup", "review", "handoff"],     // schedules
    ["lead", "oncall", "mentor"],         // people facts
    ["rollout", "signoff", "escalation"], // processes
    ["milestone", "burndown", "blocker"], // project status
    ["quota", "endpoint", "replica"],     // configuration
];

/// Knowledge-update corpus: 40 scenarios (8 domains x 5 variants), one query
/// each. The correction lands two hours after the original in its own
/// session, flanked by small talk that doubles as the query context.
pub fn gen_knowledge_updates(seed: u64) -> Vec<ProbeScenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6b75);
    let mut mint = Mint::new(&mut rng);
    let mut scenarios = Vec::with_capacity(40);
    for idx in 0..40usize {
        let stems = &KU_DOMAINS[idx % KU_DOMAINS.len()];
        let n1 = mint.word(stems[0]);
        let n2 = mint.word(stems[1]);
        let n3 = mint.word(stems[2]);
        let old = mint.pick(&mut rng, &VALUE_STEMS);
        let new = mint.pick(&mut rng, &VALUE_STEMS);
        let th1 = mint.pick(&mut rng, &THEME_STEMS);
        let th2 = mint.pick(&mut rng, &THEME_STEMS);
        let junk: Vec<String> = (0..8).map(|_| mint.pick(&mut rng, &JUNK_STEMS)).collect();
        let chat: Vec<String> = (0..4).map(|_| mint.pick(&mut rng, &JUNK_STEMS)).collect();

        let base = BASE_TS + idx as u64 * 7_800;
        let origin_session = format!("ku{idx:02}origin");
        let update_session = format!("ku{idx:02}update");
        let original = format!("{n1} {n2} {n3} remains {old}");
        let correction = format!("{n1} {n2} switched {new} {th1} {th2}");
        let chat_a = format!("{th1} {th2} {} {}", chat[0], chat[1]);
        let chat_b = format!("{th1} {th2} {} {}", chat[2], chat[3]);

        let setup = vec![
            SetupRecord {
                text: format!("{} {} {} {}", junk[0], junk[1], junk[2], junk[3]),
                session: origin_session.clone(),
                ts: base,
            },
            SetupRecord {
                text: original,
                session: origin_session.clone(),
                ts: base + 60,
            },
            SetupRecord {
                text: format!("{} {} {} {}", junk[4], junk[5], junk[6], junk[7]),
                session: origin_session,
                ts: base + 120,
            },
            SetupRecord {
                text: chat_a.clone(),
                session: update_session.clone(),
                ts: base + 7_200,
            },
            SetupRecord {
                text: correction,
                session: update_session.clone(),
                ts: base + 7_260,
            },
            SetupRecord {
                text: chat_b.clone(),
                session: update_session,
                ts: base + 7_320,
            },
        ];
        let queries = vec![ProbeQuery {
            prompt: format!("current {n1} {n2} {n3} status"),
            context: vec![chat_a, chat_b],
            expected_facts: vec![format!("{n1} {n2} {new}")],
            forbidden_facts: vec![format!("{n1} {n3} {old}")],
            ordered: false,
        }];
        scenarios.push(ProbeScenario {
            study: Study::KnowledgeUpdate,
            setup,
            queries,
        });
    }
    scenarios
}

const EVENT_STEMS: [&str; 14] = [
    "ticket", "merge", "outage", "retro", "demo", "audit", "invoice", "kickoff", "triage",
    "rehearsal", "briefing", "checkpoint", "drill", "walkthrough",
];

/// Temporal corpus: 10 single-session episodes of 4-6 events with pairwise
/// disjoint vocabulary, probed by 30 "what happened around X" queries whose
/// expected facts are the anchor's chain neighbors. Three warm-up distractor
/// records precede everything so zero-similarity ties fall on them.
pub fn gen_temporal(seed: u64) -> Vec<ProbeScenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7461);
    let mut mint = Mint::new(&mut rng);
    let mut scenarios = Vec::with_capacity(10);
    for ep in 0..10usize {
        let len = 4 + ep % 3;
        // Two theme tokens recur through the whole episode; three tokens are
        // unique per event. Similarity alone therefore points at the episode
        // but cannot tell neighbors from the rest of the chain.
        let theme: Vec<String> = (0..2).map(|_| mint.pick(&mut rng, &THEME_STEMS)).collect();
        let events: Vec<Vec<String>> = (0..len)
            .map(|_| {
                let mut toks = theme.clone();
                toks.extend((0..3).map(|_| mint.pick(&mut rng, &EVENT_STEMS)));
                toks
            })
            .collect();
        let base = BASE_TS + 3_600 + ep as u64 * 7_200;
        let session = format!("day{ep:02}");
        let mut setup: Vec<SetupRecord> = events
            .iter()
            .enumerate()
            .map(|(i, toks)| SetupRecord {
                text: toks.join(" "),
                session: session.clone(),
                ts: base + i as u64 * 90,
            })
            .collect();
        if ep == 0 {
            for (i, _) in (0..3).enumerate() {
                let junk: Vec<String> =
                    (0..4).map(|_| mint.pick(&mut rng, &JUNK_STEMS)).collect();
                setup.insert(
                    i,
                    SetupRecord {
                        text: junk.join(" "),
                        session: "warmup".into(),
                        ts: BASE_TS + i as u64 * 60,
                    },
                );
            }
        }

        let anchors = [1usize, 2, len - 1];
        let queries = anchors
            .iter()
            .map(|&pos| {
                let a = &events[pos];
                let mut expected = vec![events[pos - 1][..3].join(" ")];
                if pos + 1 < len {
                    expected.push(events[pos + 1][..3].join(" "));
                }
                ProbeQuery {
                    // One theme token plus the anchor's unique tokens: the
                    // whole episode is faintly similar, only the anchor is
                    // strongly similar, and neighbors win on activation.
                    prompt: format!("around {} {} {} {}", a[0], a[2], a[3], a[4]),
                    context: Vec::new(),
                    expected_facts: expected,
                    forbidden_facts: Vec::new(),
                    ordered: true,
                }
            })
            .collect();
        scenarios.push(ProbeScenario {
            study: Study::Temporal,
            setup,
            queries,
        });
    }
    scenarios
}

const PERSON_STEMS: [&str; 10] = [
    "morgan", "priya", "amara", "kofi", "lena", "tomas", "ingrid", "dario", "yuki", "silas",
];

const PROJECT_STEMS: [&str; 10] = [
    "quasar", "lattice", "harbor", "citadel", "meridian", "foxtrot", "bastion", "aurora",
    "pinnacle", "caldera",
];

const COMPONENT_STEMS: [&str; 10] = [
    "gridcache", "fluxstore", "relaybus", "logvault", "meshgate", "chronodb", "packetron",
    "shardkit", "vectorhub", "signalmux",
];

/// Associative corpus: 5 graphs x 3 chains. Each chain is two statements
/// sharing a four-token project name (similar enough to link), and each query
/// names only one endpoint while expecting the entity two hops away.
pub fn gen_associative(seed: u64) -> Vec<ProbeScenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6172);
    let mut mint = Mint::new(&mut rng);
    let mut scenarios = Vec::with_capacity(5);
    for g in 0..5usize {
        let base = BASE_TS + 2_000 + g as u64 * 3_600;
        let session = format!("web{g}");
        let mut setup = Vec::new();
        if g == 0 {
            for i in 0..3u64 {
                let junk: Vec<String> =
                    (0..4).map(|_| mint.pick(&mut rng, &JUNK_STEMS)).collect();
                setup.push(SetupRecord {
                    text: junk.join(" "),
                    session: "prelude".into(),
                    ts: BASE_TS + i * 60,
                });
            }
        }
        let mut queries = Vec::new();
        for c in 0..3usize {
            let person = format!(
                "{} {}",
                mint.pick(&mut rng, &PERSON_STEMS),
                mint.pick(&mut rng, &PERSON_STEMS)
            );
            let project: Vec<String> = (0..4)
                .map(|_| mint.pick(&mut rng, &PROJECT_STEMS))
                .collect();
            let component = format!(
                "{} {}",
                mint.pick(&mut rng, &COMPONENT_STEMS),
                mint.pick(&mut rng, &COMPONENT_STEMS)
            );
            let proj = project.join(" ");
            setup.push(SetupRecord {
                text: format!("{person} leads {proj}"),
                session: session.clone(),
                ts: base + (c as u64 * 2) * 60,
            });
            setup.push(SetupRecord {
                text: format!("{proj} ships {component}"),
                session: session.clone(),
                ts: base + (c as u64 * 2 + 1) * 60,
            });
            queries.push(ProbeQuery {
                prompt: format!("which delivery does {person} own"),
                context: Vec::new(),
                expected_facts: vec![component.clone()],
                forbidden_facts: Vec::new(),
                ordered: false,
            });
            queries.push(ProbeQuery {
                prompt: format!("who stands behind {component} here"),
                context: Vec::new(),
                expected_facts: vec![person],
                forbidden_facts: Vec::new(),
                ordered: false,
            });
        }
        scenarios.push(ProbeScenario {
            study: Study::Associative,
            setup,
            queries,
        });
    }
    scenarios
}

const AMBIGUOUS_TERMS: [&str; 8] = [
    "python", "apple", "java", "bug", "mercury", "jaguar", "shell", "trunk",
];

/// Paired sense-anchor stems for each ambiguous term (first sense, second
/// sense).
const SENSE_STEMS: [(&str, &str); 8] = [
    ("terrarium", "compiler"),
    ("orchard", "handset"),
    ("espresso", "bytecode"),
    ("beetle", "stacktrace"),
    ("thermometer", "orbiter"),
    ("savanna", "roadster"),
    ("seashore", "terminal"),
    ("elephant", "hatchback"),
];

/// Disambiguation corpus: 8 ambiguous terms, two 3-statement sense clusters
/// per term sharing only the term itself, and 6 queries per term (3 per
/// sense) whose context lines name the intended sense anchor.
pub fn gen_disambiguation(seed: u64) -> Vec<ProbeScenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6469);
    let mut mint = Mint::new(&mut rng);
    let mut scenarios = Vec::with_capacity(8);
    for (t, term) in AMBIGUOUS_TERMS.iter().enumerate() {
        let (stem_a, stem_b) = SENSE_STEMS[t];
        let anchor_a = format!("{} {}", mint.word(stem_a), mint.word(stem_a));
        let anchor_b = format!("{} {}", mint.word(stem_b), mint.word(stem_b));
        let base = BASE_TS + 200_000 + t as u64 * 7_200;

        let mut setup = Vec::new();
        let mut texts_a = Vec::new();
        let mut texts_b = Vec::new();
        for i in 0..3u64 {
            let u: Vec<String> = (0..3).map(|_| mint.pick(&mut rng, &EVENT_STEMS)).collect();
            let text = format!("{term} {anchor_a} {} {} {}", u[0], u[1], u[2]);
            texts_a.push(text.clone());
            setup.push(SetupRecord {
                text,
                session: format!("{term}a"),
                ts: base + i * 60,
            });
        }
        for i in 0..3u64 {
            let u: Vec<String> = (0..3).map(|_| mint.pick(&mut rng, &EVENT_STEMS)).collect();
            let text = format!("{term} {anchor_b} {} {} {}", u[0], u[1], u[2]);
            texts_b.push(text.clone());
            setup.push(SetupRecord {
                text,
                session: format!("{term}b"),
                ts: base + 600 + i * 60,
            });
        }

        let mut queries = Vec::new();
        for sense in 0..2usize {
            let (anchor, expected, forbidden) = if sense == 0 {
                (&anchor_a, &texts_a, &texts_b)
            } else {
                (&anchor_b, &texts_b, &texts_a)
            };
            for _ in 0..3 {
                let qtok = mint.pick(&mut rng, &JUNK_STEMS);
                let c: Vec<String> = (0..4).map(|_| mint.pick(&mut rng, &JUNK_STEMS)).collect();
                queries.push(ProbeQuery {
                    prompt: format!("latest on {term} {qtok}"),
                    context: vec![
                        format!("{anchor} {} {}", c[0], c[1]),
                        format!("{anchor} {} {}", c[2], c[3]),
                    ],
                    expected_facts: expected.clone(),
                    forbidden_facts: forbidden.clone(),
                    ordered: false,
                });
            }
        }
        scenarios.push(ProbeScenario {
            study: Study::Disambiguation,
            setup,
            queries,
        });
    }
    scenarios
}
