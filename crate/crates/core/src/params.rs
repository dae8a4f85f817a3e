//! Engine tuning parameters.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Every tunable constant in the engine, serialized with snapshots so a
/// restored store behaves identically to the one that wrote it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineParams {
    /// Embedding dimension.
    pub dim: usize,
    /// Recency decay rate (1/seconds). Default is a 7-day half-life.
    pub lambda: f64,
    /// Spreading-activation damping factor, in (0, 1).
    pub gamma: f64,
    /// Maximum propagation depth for spreading activation.
    pub max_hops: u32,
    /// Per-node fan-out cap: at most this many edges traversed per node per hop.
    pub fanout: usize,
    /// Contributions below this floor are dropped during spreading.
    pub activation_floor: f64,
    /// Number of seeds taken from the query (context contributes half as many).
    pub seed_k: usize,
    /// Cosine threshold at or above which an incoming text merges into an
    /// existing fragment instead of creating a new one.
    pub theta_merge: f64,
    /// Cosine threshold for creating semantic edges at ingest.
    pub theta_sem: f64,
    /// Maximum semantic edges created per ingested fragment.
    pub m_sem: usize,
    /// Reinforcement added to every returned fragment (and on merge).
    pub delta_r: f64,
    /// Reinforcement removed from suppressed near-miss fragments.
    pub delta_s: f64,
    /// Accessibility threshold below which active raw fragments go dormant.
    pub theta_dormant: f64,
    /// Similarity threshold at or above which a dormant fragment wakes.
    pub theta_wake: f64,
    /// Episode boundary: gap in seconds strictly greater than this splits episodes.
    pub gap_episode: u64,
    /// Maximum live (active + dormant) fragments before eviction kicks in.
    pub capacity: usize,
    /// Retrieval weight on query similarity.
    pub w_sim: f64,
    /// Retrieval weight on activation level.
    pub w_act: f64,
    /// Retrieval weight on recency.
    pub w_rec: f64,
    /// Retrieval weight on reinforcement.
    pub w_reinf: f64,
    /// Retrieval weight on context-centroid similarity.
    pub w_ctx: f64,
    /// Judge rubric: when both sides score below this floor, the query
    /// counts as jointly wrong rather than a win for either.
    pub judge_both_wrong_floor: f64,
    /// Judge rubric: score gaps at or below this margin are ties.
    pub judge_tie_margin: f64,
}

/// Seconds in seven days; the default recency half-life.
pub const WEEK_SECONDS: f64 = 604_800.0;

impl Default for EngineParams {
    fn default() -> Self {
        Self {
            dim: 256,
            lambda: std::f64::consts::LN_2 / WEEK_SECONDS,
            gamma: 0.5,
            max_hops: 3,
            fanout: 16,
            activation_floor: 0.01,
            seed_k: 8,
            theta_merge: 0.92,
            theta_sem: 0.55,
            m_sem: 4,
            delta_r: 0.5,
            delta_s: 0.25,
            theta_dormant: 0.15,
            theta_wake: 0.80,
            gap_episode: 1800,
            capacity: 10_000,
            w_sim: 0.35,
            w_act: 0.25,
            w_rec: 0.20,
            w_reinf: 0.10,
            w_ctx: 0.10,
            judge_both_wrong_floor: 0.25,
            judge_tie_margin: 0.1,
        }
    }
}

impl EngineParams {
    /// Validate structural constraints on the parameter set.
    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, msg: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Invariant(msg.to_string()))
            }
        }
        check(self.dim > 0, "dim must be positive")?;
        check(self.lambda >= 0.0, "lambda must be non-negative")?;
        check(
            self.gamma > 0.0 && self.gamma < 1.0,
            "gamma must lie in (0, 1)",
        )?;
        check(self.max_hops >= 1, "max_hops must be at least 1")?;
        check(self.fanout >= 1, "fanout must be at least 1")?;
        check(
            self.activation_floor >= 0.0,
            "activation_floor must be non-negative",
        )?;
        check(self.seed_k >= 1, "seed_k must be at least 1")?;
        for (name, v) in [
            ("theta_merge", self.theta_merge),
            ("theta_sem", self.theta_sem),
            ("theta_dormant", self.theta_dormant),
            ("theta_wake", self.theta_wake),
            ("judge_both_wrong_floor", self.judge_both_wrong_floor),
            ("judge_tie_margin", self.judge_tie_margin),
        ] {
            check(
                (0.0..=1.0).contains(&v),
                &format!("{name} must lie in [0, 1]"),
            )?;
        }
        check(self.delta_r >= 0.0, "delta_r must be non-negative")?;
        check(self.delta_s >= 0.0, "delta_s must be non-negative")?;
        check(self.capacity >= 1, "capacity must be at least 1")?;
        let weights = [self.w_sim, self.w_act, self.w_rec, self.w_reinf, self.w_ctx];
        check(
            weights.iter().all(|w| *w >= 0.0),
            "retrieval weights must be non-negative",
        )?;
        let sum: f64 = weights.iter().sum();
        check(
            (sum - 1.0).abs() <= 1e-9,
            &format!("retrieval weights must sum to 1 (got {sum})"),
        )?;
        Ok(())
    }
}
