//! Flat key=value configuration with environment overrides.
//!
//! Precedence: built-in defaults < config file < `CMA_*` environment
//! variables < command-line flags. `show()` renders the canonical form;
//! parsing that rendering reproduces the same configuration, so `config
//! show` output is itself a valid config file and a fixed point.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use continuum_core::EngineParams;

/// Everything the binary needs: engine parameters (including the judge
/// rubric thresholds), evaluation seeds, and store locations.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub params: EngineParams,
    pub store_dir: PathBuf,
    /// Explicit baseline-store path; defaults to `<store_dir>/rag.json`.
    rag_store: Option<PathBuf>,
    pub eval_seeds: Vec<u64>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            params: EngineParams::default(),
            store_dir: PathBuf::from("cma-store"),
            rag_store: None,
            eval_seeds: vec![42, 43, 44],
        }
    }
}

/// A configuration error always names the offending key.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(key: &str, detail: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("invalid value for `{key}`: {detail}"))
}

impl Config {
    /// The resolved baseline-store path.
    pub fn rag_store(&self) -> PathBuf {
        self.rag_store
            .clone()
            .unwrap_or_else(|| self.store_dir.join("rag.json"))
    }

    /// Parse a config file body (`key=value` lines, `#` comments) on top of
    /// the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError(format!(
                    "config line {}: expected key=value, got {line:?}",
                    lineno + 1
                )));
            };
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply `CMA_<KEY>` environment overrides; `lookup` abstracts
    /// `std::env::var` so overrides are testable.
    pub fn apply_env(
        &mut self,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<(), ConfigError> {
        for key in KEYS {
            let var = format!("CMA_{}", key.to_uppercase());
            if let Some(value) = lookup(&var) {
                self.set(key, value.trim())?;
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params
            .validate()
            .map_err(|e| ConfigError(e.to_string()))?;
        if self.eval_seeds.is_empty() {
            return Err(bad("eval_seeds", "at least one seed required"));
        }
        if self.store_dir.as_os_str().is_empty() {
            return Err(bad("store_dir", "path must be non-empty"));
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse::<T>().map_err(|e| bad(key, e))
        }
        let p = &mut self.params;
        match key {
            "store_dir" => {
                if value.is_empty() {
                    return Err(bad(key, "path must be non-empty"));
                }
                self.store_dir = PathBuf::from(value);
            }
            "rag_store" => {
                if value.is_empty() {
                    return Err(bad(key, "path must be non-empty"));
                }
                self.rag_store = Some(PathBuf::from(value));
            }
            "eval_seeds" => {
                let seeds = value
                    .split(',')
                    .map(|s| s.trim().parse::<u64>().map_err(|e| bad(key, e)))
                    .collect::<Result<Vec<u64>, ConfigError>>()?;
                if seeds.is_empty() {
                    return Err(bad(key, "at least one seed required"));
                }
                self.eval_seeds = seeds;
            }
            "dim" => p.dim = num(key, value)?,
            "lambda" => p.lambda = num(key, value)?,
            "gamma" => p.gamma = num(key, value)?,
            "max_hops" => p.max_hops = num(key, value)?,
            "fanout" => p.fanout = num(key, value)?,
            "activation_floor" => p.activation_floor = num(key, value)?,
            "seed_k" => p.seed_k = num(key, value)?,
            "theta_merge" => p.theta_merge = num(key, value)?,
            "theta_sem" => p.theta_sem = num(key, value)?,
            "m_sem" => p.m_sem = num(key, value)?,
            "delta_r" => p.delta_r = num(key, value)?,
            "delta_s" => p.delta_s = num(key, value)?,
            "theta_dormant" => p.theta_dormant = num(key, value)?,
            "theta_wake" => p.theta_wake = num(key, value)?,
            "gap_episode" => p.gap_episode = num(key, value)?,
            "capacity" => p.capacity = num(key, value)?,
            "w_sim" => p.w_sim = num(key, value)?,
            "w_act" => p.w_act = num(key, value)?,
            "w_rec" => p.w_rec = num(key, value)?,
            "w_reinf" => p.w_reinf = num(key, value)?,
            "w_ctx" => p.w_ctx = num(key, value)?,
            "judge_both_wrong_floor" => p.judge_both_wrong_floor = num(key, value)?,
            "judge_tie_margin" => p.judge_tie_margin = num(key, value)?,
            other => return Err(ConfigError(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Canonical rendering: every key, fixed order, `key=value` lines.
    pub fn show(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        let seeds = self
            .eval_seeds
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(out, "store_dir={}", self.store_dir.display());
        let _ = writeln!(out, "rag_store={}", self.rag_store().display());
        let _ = writeln!(out, "eval_seeds={seeds}");
        let _ = writeln!(out, "dim={}", p.dim);
        let _ = writeln!(out, "lambda={}", p.lambda);
        let _ = writeln!(out, "gamma={}", p.gamma);
        let _ = writeln!(out, "max_hops={}", p.max_hops);
        let _ = writeln!(out, "fanout={}", p.fanout);
        let _ = writeln!(out, "activation_floor={}", p.activation_floor);
        let _ = writeln!(out, "seed_k={}", p.seed_k);
        let _ = writeln!(out, "theta_merge={}", p.theta_merge);
        let _ = writeln!(out, "theta_sem={}", p.theta_sem);
        let _ = writeln!(out, "m_sem={}", p.m_sem);
        let _ = writeln!(out, "delta_r={}", p.delta_r);
        let _ = writeln!(out, "delta_s={}", p.delta_s);
        let _ = writeln!(out, "theta_dormant={}", p.theta_dormant);
        let _ = writeln!(out, "theta_wake={}", p.theta_wake);
        let _ = writeln!(out, "gap_episode={}", p.gap_episode);
        let _ = writeln!(out, "capacity={}", p.capacity);
        let _ = writeln!(out, "w_sim={}", p.w_sim);
        let _ = writeln!(out, "w_act={}", p.w_act);
        let _ = writeln!(out, "w_rec={}", p.w_rec);
        let _ = writeln!(out, "w_reinf={}", p.w_reinf);
        let _ = writeln!(out, "w_ctx={}", p.w_ctx);
        let _ = writeln!(out, "judge_both_wrong_floor={}", p.judge_both_wrong_floor);
        let _ = writeln!(out, "judge_tie_margin={}", p.judge_tie_margin);
        out
    }

    /// Load from an optional file path, then apply environment overrides.
    pub fn load(
        path: Option<&Path>,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    ConfigError(format!("cannot read config {}: {e}", p.display()))
                })?;
                Config::parse(&text)?
            }
            None => Config::default(),
        };
        cfg.apply_env(lookup)?;
        Ok(cfg)
    }
}

/// Every recognized config key, in canonical order.
const KEYS: &[&str] = &[
    "store_dir",
    "rag_store",
    "eval_seeds",
    "dim",
    "lambda",
    "gamma",
    "max_hops",
    "fanout",
    "activation_floor",
    "seed_k",
    "theta_merge",
    "theta_sem",
    "m_sem",
    "delta_r",
    "delta_s",
    "theta_dormant",
    "theta_wake",
    "gap_episode",
    "capacity",
    "w_sim",
    "w_act",
    "w_rec",
    "w_reinf",
    "w_ctx",
    "judge_both_wrong_floor",
    "judge_tie_margin",
];
