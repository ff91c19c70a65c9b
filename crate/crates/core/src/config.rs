//! Experiment configuration: a line-oriented `key = value` format with
//! mode-dependent defaults, strict unknown-key rejection, and a
//! `config.resolved` writer whose output replays to an identical config.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Training mode: learner family × batch scheduling strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    PqnFixed,
    PqnAbs,
    PqnGns,
    PpoFixed,
    PpoArs,
    DqnReplayFixed,
    DqnReplayAbs,
}

impl Mode {
    pub const ALL: [Mode; 7] = [
        Mode::PqnFixed,
        Mode::PqnAbs,
        Mode::PqnGns,
        Mode::PpoFixed,
        Mode::PpoArs,
        Mode::DqnReplayFixed,
        Mode::DqnReplayAbs,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::PqnFixed => "pqn-fixed",
            Mode::PqnAbs => "pqn-abs",
            Mode::PqnGns => "pqn-gns",
            Mode::PpoFixed => "ppo-fixed",
            Mode::PpoArs => "ppo-ars",
            Mode::DqnReplayFixed => "dqn-replay-fixed",
            Mode::DqnReplayAbs => "dqn-replay-abs",
        }
    }

    pub fn is_pqn(&self) -> bool {
        matches!(self, Mode::PqnFixed | Mode::PqnAbs | Mode::PqnGns)
    }

    pub fn is_ppo(&self) -> bool {
        matches!(self, Mode::PpoFixed | Mode::PpoArs)
    }

    pub fn is_replay(&self) -> bool {
        matches!(self, Mode::DqnReplayFixed | Mode::DqnReplayAbs)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Mode> {
        Mode::ALL
            .iter()
            .find(|m| m.as_str() == s)
            .copied()
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown mode '{s}' (expected one of: {})",
                    Mode::ALL
                        .iter()
                        .map(|m| m.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                ))
            })
    }
}

/// Fully resolved experiment configuration. Every field maps 1:1 to a
/// config-file key of the same (snake_case) name, except `mode`, `seed`
/// and `out_dir`, which the CLI may override.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub env: String,
    pub seed: u64,
    pub run_id: String,
    pub total_steps: u64,
    pub num_envs: usize,
    pub hidden_sizes: Vec<usize>,
    pub out_dir: PathBuf,
    /// When false (the default) the wall_ms column is left empty so that
    /// metrics.csv is byte-identical across reruns.
    pub record_wall_time: bool,

    // Rollout / batch scheduling.
    pub l_min: usize,
    pub l_max: usize,
    /// Baseline rollout length the epoch compensation divides by.
    pub l_base: usize,
    pub delta_min: f64,
    pub delta_max: f64,
    pub adapt_every: usize,
    pub window_size: usize,
    pub beta_ema: f64,
    pub ref_batch: usize,

    // Update loop.
    pub n_mb: usize,
    pub n_epochs_base: usize,
    pub gamma: f64,
    pub q_lambda: f64,
    pub gae_lambda: f64,
    pub lr: f64,
    pub max_grad_norm: f64,

    // Exploration (Q-learners).
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_fraction: f64,

    // PPO.
    pub clip: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,

    // Replay variant.
    pub replay_capacity: usize,
    pub replay_batch: usize,
    pub replay_batch_min: usize,
    pub replay_batch_max: usize,
    pub target_update: usize,
}

/// Command-line overrides applied before validation.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Mode-appropriate defaults, before any file keys are applied.
    pub fn defaults(mode: Mode) -> ExperimentConfig {
        let mut c = ExperimentConfig {
            mode,
            env: if mode.is_ppo() { "pointmass" } else { "chain" }.to_string(),
            seed: 0,
            run_id: String::new(),
            total_steps: 300_000,
            num_envs: 128,
            hidden_sizes: vec![128, 128],
            out_dir: PathBuf::new(),
            record_wall_time: false,
            l_min: 16,
            l_max: 64,
            l_base: 32,
            delta_min: 0.05,
            delta_max: 0.95,
            adapt_every: 50,
            window_size: 10,
            beta_ema: 0.5,
            ref_batch: 2048,
            n_mb: 4,
            n_epochs_base: 2,
            gamma: 0.99,
            q_lambda: 0.65,
            gae_lambda: 0.95,
            lr: 2.5e-4,
            max_grad_norm: 10.0,
            eps_start: 1.0,
            eps_end: 0.001,
            eps_fraction: 0.10,
            clip: 0.2,
            vf_coef: 0.5,
            ent_coef: 0.0,
            replay_capacity: 50_000,
            replay_batch: 256,
            replay_batch_min: 64,
            replay_batch_max: 1024,
            target_update: 500,
        };
        if mode.is_ppo() {
            c.num_envs = 8;
            c.l_min = 1024;
            c.l_max = 8192;
            c.l_base = 2048;
            c.delta_min = 0.01;
            c.delta_max = 0.1;
            c.adapt_every = 10;
            c.n_mb = 32;
            c.n_epochs_base = 10;
            c.lr = 3e-4;
            c.max_grad_norm = 0.5;
        }
        if mode.is_replay() {
            c.num_envs = 1;
            c.total_steps = 100_000;
        }
        c
    }

    /// Effective rollout length per environment: PPO bounds are totals
    /// over all environments, so they divide by E at consumption.
    pub fn per_env_len(&self, total_len: usize) -> usize {
        if self.mode.is_ppo() {
            (total_len / self.num_envs).max(1)
        } else {
            total_len
        }
    }

    fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Config(msg));
        if self.l_min < 1 || self.l_min > self.l_max {
            return err(format!(
                "unordered rollout bounds: l_min = {}, l_max = {} (need 1 <= l_min <= l_max)",
                self.l_min, self.l_max
            ));
        }
        if !(self.delta_min > 0.0 && self.delta_min < self.delta_max && self.delta_max < 1.0)
            && !(self.mode.is_ppo() && self.delta_min > 0.0 && self.delta_min < self.delta_max)
        {
            return err(format!(
                "divergence thresholds out of range: delta_min = {}, delta_max = {} \
                 (need 0 < delta_min < delta_max < 1)",
                self.delta_min, self.delta_max
            ));
        }
        if !(self.beta_ema > 0.0 && self.beta_ema <= 1.0) {
            return err(format!("beta_ema = {} outside (0, 1]", self.beta_ema));
        }
        if self.mode.is_pqn() && self.num_envs % self.n_mb != 0 {
            return err(format!(
                "num_envs = {} is not a multiple of n_mb = {}",
                self.num_envs, self.n_mb
            ));
        }
        if self.num_envs == 0 {
            return err("num_envs must be at least 1".into());
        }
        if self.n_mb == 0 || self.n_epochs_base == 0 {
            return err(format!(
                "n_mb = {} and n_epochs_base = {} must both be at least 1",
                self.n_mb, self.n_epochs_base
            ));
        }
        if self.total_steps == 0 {
            return err("total_steps must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return err(format!("gamma = {} outside [0, 1]", self.gamma));
        }
        for (k, v) in [("q_lambda", self.q_lambda), ("gae_lambda", self.gae_lambda)] {
            if !(0.0..=1.0).contains(&v) {
                return err(format!("{k} = {v} outside [0, 1]"));
            }
        }
        if !(self.eps_fraction > 0.0 && self.eps_fraction <= 1.0) {
            return err(format!("eps_fraction = {} outside (0, 1]", self.eps_fraction));
        }
        if self.lr <= 0.0 || self.max_grad_norm <= 0.0 {
            return err(format!(
                "lr = {} and max_grad_norm = {} must be positive",
                self.lr, self.max_grad_norm
            ));
        }
        if self.l_base == 0 || self.ref_batch == 0 || self.adapt_every == 0 || self.window_size == 0
        {
            return err(
                "l_base, ref_batch, adapt_every and window_size must all be at least 1".into(),
            );
        }
        if self.replay_batch_min < 1 || self.replay_batch_min > self.replay_batch_max {
            return err(format!(
                "unordered batch bounds: replay_batch_min = {}, replay_batch_max = {}",
                self.replay_batch_min, self.replay_batch_max
            ));
        }
        if self.replay_capacity < self.replay_batch_max {
            return err(format!(
                "replay_capacity = {} smaller than replay_batch_max = {}",
                self.replay_capacity, self.replay_batch_max
            ));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.iter().any(|&h| h == 0) {
            return err(format!("hidden_sizes = {:?} must be nonempty and positive", self.hidden_sizes));
        }
        let spec = crate::env::env_spec(&self.env)?;
        let discrete = matches!(spec.action_kind, crate::env::ActionKind::Discrete { .. });
        if self.mode.is_ppo() && discrete {
            return err(format!(
                "env = {} is discrete but mode {} needs a continuous action space",
                self.env, self.mode
            ));
        }
        if !self.mode.is_ppo() && !discrete {
            return err(format!(
                "env = {} is continuous but mode {} needs a discrete action space",
                self.env, self.mode
            ));
        }
        Ok(())
    }

    /// Serialize every effective key; parsing the output reproduces this
    /// config exactly.
    pub fn to_resolved_string(&self) -> String {
        let hidden = self
            .hidden_sizes
            .iter()
            .map(|h| h.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let pairs: Vec<(&str, String)> = vec![
            ("mode", self.mode.to_string()),
            ("env", self.env.clone()),
            ("seed", self.seed.to_string()),
            ("run_id", self.run_id.clone()),
            ("total_steps", self.total_steps.to_string()),
            ("num_envs", self.num_envs.to_string()),
            ("hidden_sizes", hidden),
            ("out_dir", self.out_dir.display().to_string()),
            ("record_wall_time", self.record_wall_time.to_string()),
            ("l_min", self.l_min.to_string()),
            ("l_max", self.l_max.to_string()),
            ("l_base", self.l_base.to_string()),
            ("delta_min", self.delta_min.to_string()),
            ("delta_max", self.delta_max.to_string()),
            ("adapt_every", self.adapt_every.to_string()),
            ("window_size", self.window_size.to_string()),
            ("beta_ema", self.beta_ema.to_string()),
            ("ref_batch", self.ref_batch.to_string()),
            ("n_mb", self.n_mb.to_string()),
            ("n_epochs_base", self.n_epochs_base.to_string()),
            ("gamma", self.gamma.to_string()),
            ("q_lambda", self.q_lambda.to_string()),
            ("gae_lambda", self.gae_lambda.to_string()),
            ("lr", self.lr.to_string()),
            ("max_grad_norm", self.max_grad_norm.to_string()),
            ("eps_start", self.eps_start.to_string()),
            ("eps_end", self.eps_end.to_string()),
            ("eps_fraction", self.eps_fraction.to_string()),
            ("clip", self.clip.to_string()),
            ("vf_coef", self.vf_coef.to_string()),
            ("ent_coef", self.ent_coef.to_string()),
            ("replay_capacity", self.replay_capacity.to_string()),
            ("replay_batch", self.replay_batch.to_string()),
            ("replay_batch_min", self.replay_batch_min.to_string()),
            ("replay_batch_max", self.replay_batch_max.to_string()),
            ("target_update", self.target_update.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }
}

/// Parse a config file with defaults for the given mode and no overrides.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config_with(path, &ConfigOverrides::default())
}

/// Parse a config file, apply CLI overrides, fill mode defaults for
/// omitted keys, and validate. `mode` must come from the file or the
/// override.
pub fn parse_config_with(path: &Path, ov: &ConfigOverrides) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, ov)
}

/// The parser proper, usable on in-memory text.
pub fn parse_config_str(text: &str, ov: &ConfigOverrides) -> Result<ExperimentConfig> {
    let mut pairs: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value', got '{raw}'", lineno + 1))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("line {}: unknown key '{key}'", lineno + 1)));
        }
        pairs.insert(key, value);
    }

    let mode = match (&ov.mode, pairs.get("mode")) {
        (Some(m), _) => *m,
        (None, Some(s)) => s.parse()?,
        (None, None) => {
            return Err(Error::Config(
                "no mode: set the 'mode' key or pass --mode".into(),
            ))
        }
    };
    let mut c = ExperimentConfig::defaults(mode);

    for (key, value) in &pairs {
        apply_key(&mut c, key, value)?;
    }
    if let Some(seed) = ov.seed {
        c.seed = seed;
    }
    if let Some(out) = &ov.out_dir {
        c.out_dir = out.clone();
    }
    if c.run_id.is_empty() {
        c.run_id = format!("{}-{}-s{}", c.mode, c.env, c.seed);
    }
    if c.out_dir.as_os_str().is_empty() {
        c.out_dir = PathBuf::from("runs").join(&c.run_id);
    }
    c.validate()?;
    Ok(c)
}

const KNOWN_KEYS: &[&str] = &[
    "mode",
    "env",
    "seed",
    "run_id",
    "total_steps",
    "num_envs",
    "hidden_sizes",
    "out_dir",
    "record_wall_time",
    "l_min",
    "l_max",
    "l_base",
    "delta_min",
    "delta_max",
    "adapt_every",
    "window_size",
    "beta_ema",
    "ref_batch",
    "n_mb",
    "n_epochs_base",
    "gamma",
    "q_lambda",
    "gae_lambda",
    "lr",
    "max_grad_norm",
    "eps_start",
    "eps_end",
    "eps_fraction",
    "clip",
    "vf_coef",
    "ent_coef",
    "replay_capacity",
    "replay_batch",
    "replay_batch_min",
    "replay_batch_max",
    "target_update",
];

fn apply_key(c: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
        value
            .parse()
            .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{value}'")))
    }
    match key {
        "mode" => {} // handled before defaults are chosen
        "env" => c.env = value.to_string(),
        "seed" => c.seed = num(key, value)?,
        "run_id" => c.run_id = value.to_string(),
        "total_steps" => c.total_steps = num(key, value)?,
        "num_envs" => c.num_envs = num(key, value)?,
        "hidden_sizes" => {
            c.hidden_sizes = value
                .split(',')
                .map(|p| num::<usize>(key, p.trim()))
                .collect::<Result<_>>()?;
        }
        "out_dir" => c.out_dir = PathBuf::from(value),
        "record_wall_time" => c.record_wall_time = num(key, value)?,
        "l_min" => c.l_min = num(key, value)?,
        "l_max" => c.l_max = num(key, value)?,
        "l_base" => c.l_base = num(key, value)?,
        "delta_min" => c.delta_min = num(key, value)?,
        "delta_max" => c.delta_max = num(key, value)?,
        "adapt_every" => c.adapt_every = num(key, value)?,
        "window_size" => c.window_size = num(key, value)?,
        "beta_ema" => c.beta_ema = num(key, value)?,
        "ref_batch" => c.ref_batch = num(key, value)?,
        "n_mb" => c.n_mb = num(key, value)?,
        "n_epochs_base" => c.n_epochs_base = num(key, value)?,
        "gamma" => c.gamma = num(key, value)?,
        "q_lambda" => c.q_lambda = num(key, value)?,
        "gae_lambda" => c.gae_lambda = num(key, value)?,
        "lr" => c.lr = num(key, value)?,
        "max_grad_norm" => c.max_grad_norm = num(key, value)?,
        "eps_start" => c.eps_start = num(key, value)?,
        "eps_end" => c.eps_end = num(key, value)?,
        "eps_fraction" => c.eps_fraction = num(key, value)?,
        "clip" => c.clip = num(key, value)?,
        "vf_coef" => c.vf_coef = num(key, value)?,
        "ent_coef" => c.ent_coef = num(key, value)?,
        "replay_capacity" => c.replay_capacity = num(key, value)?,
        "replay_batch" => c.replay_batch = num(key, value)?,
        "replay_batch_min" => c.replay_batch_min = num(key, value)?,
        "replay_batch_max" => c.replay_batch_max = num(key, value)?,
        "target_update" => c.target_update = num(key, value)?,
        _ => unreachable!("key '{key}' passed the known-key filter"),
    }
    Ok(())
}
