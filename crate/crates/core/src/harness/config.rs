use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::envs::TaskFamily;
use crate::pearl::{AgentConfig, DEFAULT_CAPACITY};
use crate::relabel::{Strategy, DEFAULT_EPSILON, DEFAULT_LOGZ_WINDOW, DEFAULT_NU};
use crate::{Error, Result};

/// Variable naming the default output root for `run`.
pub const OUTPUT_ROOT_VAR: &str = "HFR_OUTPUT_ROOT";
pub const DEFAULT_STEPS: usize = 60_000;
pub const DEFAULT_EVAL_INTERVAL: usize = 2_000;
/// Runner defaults unless overridden.
pub const DESK_HIDDEN: [usize; 2] = [64, 64];
pub const DESK_BATCH: usize = 128;
pub const DESK_UPDATES: usize = 20;
pub const DESK_ALPHA: f64 = 0.02;
pub const DESK_KL_WEIGHT: f64 = 0.001;

/// Agent hyperparameters as they appear in a parameter file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentOverrides {
    pub latent_dim: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub alpha: Option<f64>,
    pub target_coef: Option<f64>,
    pub kl_weight: Option<f64>,
    pub actor_lr: Option<f64>,
    pub critic_lr: Option<f64>,
    pub encoder_lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub meta_batch: Option<usize>,
    pub context_size: Option<usize>,
    pub updates_per_trajectory: Option<usize>,
}

/// Every settable field, all optional. Parsed from TOML (unknown keys are
/// rejected) and built from command-line flags; `merge` lets flags win.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub env: Option<String>,
    pub relabel: Option<String>,
    pub seed: Option<u64>,
    pub steps: Option<usize>,
    pub eval_interval: Option<usize>,
    pub nu: Option<usize>,
    pub epsilon: Option<f64>,
    pub logz_window: Option<usize>,
    pub learned_reward: Option<bool>,
    pub buffer_capacity: Option<usize>,
    pub reward_model_updates: Option<usize>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub agent: AgentOverrides,
}

macro_rules! take {
    ($dst:expr, $src:expr, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f; } )*
    };
}

impl ConfigFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            what: "parameter file",
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
            reason: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Fields set in `over` replace those in `self`.
    pub fn merge(mut self, over: ConfigFile) -> Self {
        take!(self, over, env, relabel, seed, steps, eval_interval, nu, epsilon, logz_window, learned_reward, buffer_capacity, reward_model_updates, out);
        let a = over.agent;
        take!(
            self.agent,
            a,
            latent_dim,
            hidden,
            alpha,
            target_coef,
            kl_weight,
            actor_lr,
            critic_lr,
            encoder_lr,
            batch_size,
            meta_batch,
            context_size,
            updates_per_trajectory
        );
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: String,
    pub strategy: Strategy,
    pub seed: u64,
    /// Environment steps collected before the run stops.
    pub total_steps: usize,
    pub eval_interval: usize,
    pub n_u: usize,
    pub epsilon: f64,
    /// Utilities kept per task for the log-partition estimate; 0 disables it.
    pub logz_window: usize,
    pub learned_reward: bool,
    pub buffer_capacity: usize,
    /// Reward-model updates per collected trajectory (learned reward only).
    pub reward_model_updates: usize,
    pub agent: AgentConfig,
}

impl ExperimentConfig {
    pub fn new(env: &str, strategy: Strategy, seed: u64) -> Result<Self> {
        let family = TaskFamily::from_name(env)?;
        let agent = AgentConfig {
            hidden: DESK_HIDDEN.to_vec(),
            batch_size: DESK_BATCH,
            updates_per_trajectory: DESK_UPDATES,
            alpha: DESK_ALPHA,
            kl_weight: DESK_KL_WEIGHT,
            ..AgentConfig::for_family(&family)
        };
        Ok(Self {
            env: env.to_string(),
            strategy,
            seed,
            total_steps: DEFAULT_STEPS,
            eval_interval: DEFAULT_EVAL_INTERVAL,
            n_u: DEFAULT_NU,
            epsilon: DEFAULT_EPSILON,
            logz_window: DEFAULT_LOGZ_WINDOW,
            learned_reward: false,
            buffer_capacity: DEFAULT_CAPACITY,
            reward_model_updates: 1,
            agent,
        })
    }

    /// Build from merged file and flag values; `env`, `relabel` and `seed`
    /// are required.
    pub fn from_file(file: ConfigFile) -> Result<Self> {
        let env = file.env.ok_or_else(|| Error::invalid("missing required `env`"))?;
        let strategy: Strategy = file.relabel.ok_or_else(|| Error::invalid("missing required `relabel`"))?.parse()?;
        let seed = file.seed.ok_or_else(|| Error::invalid("missing required `seed`"))?;
        let mut c = Self::new(&env, strategy, seed)?;
        let set = |dst: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut c.total_steps, file.steps);
        set(&mut c.eval_interval, file.eval_interval);
        set(&mut c.n_u, file.nu);
        set(&mut c.logz_window, file.logz_window);
        set(&mut c.buffer_capacity, file.buffer_capacity);
        set(&mut c.reward_model_updates, file.reward_model_updates);
        c.epsilon = file.epsilon.unwrap_or(c.epsilon);
        c.learned_reward = file.learned_reward.unwrap_or(c.learned_reward);

        let a = file.agent;
        let g = &mut c.agent;
        set(&mut g.latent_dim, a.latent_dim);
        set(&mut g.batch_size, a.batch_size);
        set(&mut g.meta_batch, a.meta_batch);
        set(&mut g.context_size, a.context_size);
        set(&mut g.updates_per_trajectory, a.updates_per_trajectory);
        if let Some(h) = a.hidden {
            g.hidden = h;
        }
        g.alpha = a.alpha.unwrap_or(g.alpha);
        g.target_coef = a.target_coef.unwrap_or(g.target_coef);
        g.kl_weight = a.kl_weight.unwrap_or(g.kl_weight);
        g.actor_lr = a.actor_lr.unwrap_or(g.actor_lr);
        g.critic_lr = a.critic_lr.unwrap_or(g.critic_lr);
        g.encoder_lr = a.encoder_lr.unwrap_or(g.encoder_lr);
        c.validate()?;
        Ok(c)
    }

    pub fn family(&self) -> Result<TaskFamily> {
        TaskFamily::from_name(&self.env)
    }

    pub fn validate(&self) -> Result<()> {
        self.family()?;
        if self.total_steps == 0 {
            return Err(Error::invalid("total env steps must be positive"));
        }
        if self.eval_interval == 0 {
            return Err(Error::invalid("eval interval must be positive"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid("epsilon must be positive and finite"));
        }
        if matches!(self.strategy, Strategy::Hfr | Strategy::HfrBellman) && self.n_u == 0 {
            return Err(Error::invalid("nu must be positive"));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::invalid("buffer capacity must be positive"));
        }
        let a = &self.agent;
        if a.batch_size == 0 || a.meta_batch == 0 || a.context_size == 0 || a.latent_dim == 0 {
            return Err(Error::invalid("batch, meta batch, context and latent sizes must be positive"));
        }
        if a.hidden.contains(&0) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        if !(a.alpha >= 0.0) || !(a.target_coef > 0.0 && a.target_coef <= 1.0) || !(a.kl_weight >= 0.0) {
            return Err(Error::invalid("alpha, kl weight must be >= 0 and target coefficient in (0, 1]"));
        }
        Ok(())
    }

    /// `metrics_<strategy>_seed<n>.csv`
    pub fn metrics_file_name(&self) -> String {
        format!("metrics_{}_seed{}.csv", self.strategy.key(), self.seed)
    }
}

/// `--out` if given, else `$HFR_OUTPUT_ROOT`, else `runs`.
pub fn resolve_output_dir(out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}
