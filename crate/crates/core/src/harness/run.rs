use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use crate::envs::{Split, TaskFamily, TaskSpec, Trajectory, Transition};
use crate::pearl::{Agent, TaskReplayBuffers};
use crate::relabel::{
    relabel_and_store, strategy_hfr, strategy_hfr_bellman, strategy_hipi, strategy_random, LogPartitionTracker, PearlValues,
    RelabelDistribution, RewardModel, RewardModelConfig, Strategy,
};
use crate::{Error, Result};

pub const METRICS_HEADER: &str = "seed,env_steps,mean_return,success_rate,relabel_entropy,relabel_counts";

/// Trajectories per collection cycle of a task: the first is rolled out with a
/// prior latent, each later one with the posterior of the earlier ones.
pub const COLLECT_CYCLE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub seed: u64,
    pub env_steps: usize,
    pub mean_return: f64,
    pub success_rate: f64,
    /// Mean entropy of the relabeling distribution since the previous row.
    pub relabel_entropy: f64,
    /// Cumulative `counts[origin][destination]`.
    pub relabel_counts: Vec<Vec<u64>>,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let counts: Vec<String> = self.relabel_counts.iter().flatten().map(u64::to_string).collect();
        format!(
            "{},{},{},{},{},{}",
            self.seed,
            self.env_steps,
            self.mean_return,
            self.success_rate,
            self.relabel_entropy,
            counts.join(";")
        )
    }

    pub fn from_csv(line: &str, line_no: usize) -> Result<Self> {
        let err = |reason: String| Error::Parse {
            what: "metrics row",
            line: line_no,
            reason,
        };
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() != 6 {
            return Err(err(format!("expected 6 columns, found {}", cols.len())));
        }
        let num = |i: usize| cols[i].parse::<f64>().map_err(|e| err(format!("column {}: {e}", i + 1)));
        let int = |i: usize| cols[i].parse::<u64>().map_err(|e| err(format!("column {}: {e}", i + 1)));
        let flat = cols[5].split(';').map(|c| c.parse::<u64>()).collect::<std::result::Result<Vec<_>, _>>().map_err(|e| err(format!("counts: {e}")))?;
        let n = (flat.len() as f64).sqrt().round() as usize;
        if n * n != flat.len() {
            return Err(err(format!("{} counts do not form a square matrix", flat.len())));
        }
        let row = Self {
            seed: int(0)?,
            env_steps: int(1)? as usize,
            mean_return: num(2)?,
            success_rate: num(3)?,
            relabel_entropy: num(4)?,
            relabel_counts: flat.chunks(n.max(1)).map(<[u64]>::to_vec).collect(),
        };
        if !(0.0..=1.0).contains(&row.success_rate) {
            return Err(err("success rate outside [0, 1]".into()));
        }
        Ok(row)
    }
}

pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.to_csv());
    }
    out
}

pub fn parse_metrics(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == METRICS_HEADER => {}
        _ => {
            return Err(Error::Parse {
                what: "metrics header",
                line: 1,
                reason: format!("expected `{METRICS_HEADER}`"),
            })
        }
    }
    let rows = lines.map(|(i, l)| MetricsRow::from_csv(l, i + 1)).collect::<Result<Vec<_>>>()?;
    if rows.windows(2).any(|w| w[1].env_steps <= w[0].env_steps) {
        return Err(Error::invalid("metrics rows must be strictly increasing in env_steps"));
    }
    Ok(rows)
}

/// Mean final-rollout return and success rate of `meta_test` over `tasks`,
/// with `k` exploration trajectories and deterministic actions.
pub fn evaluate<R: Rng + ?Sized>(agent: &Agent, family: &TaskFamily, tasks: &[TaskSpec], k: usize, rng: &mut R) -> Result<(f64, f64)> {
    if tasks.is_empty() {
        return Err(Error::Empty("evaluation tasks"));
    }
    let mut ret = 0.0;
    let mut successes = 0usize;
    for task in tasks {
        let out = agent.meta_test(family, task, k, true, rng)?;
        ret += out.final_return;
        successes += usize::from(out.success);
    }
    Ok((ret / tasks.len() as f64, successes as f64 / tasks.len() as f64))
}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub config: ExperimentConfig,
    pub family: TaskFamily,
    pub agent: Agent,
    pub buffers: TaskReplayBuffers,
    pub rows: Vec<MetricsRow>,
    /// Collected (origin-labeled) trajectories, in order.
    pub trajectories: Vec<Trajectory>,
    pub reward_model: Option<RewardModel>,
}

impl TrainedRun {
    pub fn final_row(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }
}

fn choose_destination<R: Rng + ?Sized>(
    config: &ExperimentConfig,
    agent: &Agent,
    family: &TaskFamily,
    traj: &Trajectory,
    tasks: &[TaskSpec],
    buffers: &TaskReplayBuffers,
    tracker: Option<&mut LogPartitionTracker>,
    rng: &mut R,
) -> Result<(usize, f64)> {
    let n = tasks.len();
    let values = PearlValues { agent, family };
    let (task, dist): (usize, RelabelDistribution) = match config.strategy {
        Strategy::None => (traj.origin_task, RelabelDistribution::one_hot(n, traj.origin_task)),
        Strategy::Random => (strategy_random(n, rng)?, RelabelDistribution::uniform(n)),
        Strategy::Hipi => strategy_hipi(family, traj, tasks, tracker, config.epsilon, rng)?,
        Strategy::Hfr => strategy_hfr(&values, traj, tasks, tracker, config.n_u, config.epsilon, rng)?,
        Strategy::HfrBellman => strategy_hfr_bellman(&values, traj, tasks, buffers, tracker, config.n_u, config.epsilon, rng)?,
    };
    Ok((task, dist.entropy()))
}

/// Seeded meta-training with relabeling; evaluates on the test split every
/// `eval_interval` env steps and once more at the end.
pub fn train(config: &ExperimentConfig) -> Result<TrainedRun> {
    train_on(config, config.family()?)
}

/// [`train`] on an explicit family instance (e.g. a non-default geometry)
/// in place of the one named by `config.env`.
pub fn train_on(config: &ExperimentConfig, family: TaskFamily) -> Result<TrainedRun> {
    config.validate()?;
    let tasks = family.tasks(Split::Train);
    let test_tasks = family.tasks(Split::Test);
    let n = tasks.len();
    let k = family.exploration_trajectories();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut agent = Agent::new(config.agent.clone(), &mut rng)?;
    let mut buffers = TaskReplayBuffers::new(n, config.buffer_capacity);
    let mut observed = TaskReplayBuffers::new(n, config.buffer_capacity);
    let mut reward_model = match config.learned_reward {
        true => Some(RewardModel::new(&family, RewardModelConfig::default(), &mut rng)?),
        false => None,
    };
    let mut tracker = (config.logz_window > 0).then(|| LogPartitionTracker::new(n, config.logz_window));

    let mut counts = vec![vec![0u64; n]; n];
    let mut cycles: Vec<Vec<Transition>> = vec![Vec::new(); n];
    let mut collected = vec![0usize; n];
    let mut rows = Vec::new();
    let mut trajectories = Vec::new();
    let (mut env_steps, mut next_eval) = (0usize, config.eval_interval);
    let (mut entropy_sum, mut entropy_n) = (0.0, 0usize);

    while env_steps < config.total_steps {
        let task = &tasks[rng.random_range(0..n)];
        if collected[task.id] % COLLECT_CYCLE == 0 {
            cycles[task.id].clear();
        }
        let traj = agent.collect_trajectory(&family, task, &cycles[task.id], false, &mut rng)?;
        collected[task.id] += 1;
        cycles[task.id].extend(traj.transitions.iter().cloned());
        env_steps += traj.len();

        let (dest, entropy) = choose_destination(config, &agent, &family, &traj, &tasks, &buffers, tracker.as_mut(), &mut rng)?;
        counts[traj.origin_task][dest] += 1;
        entropy_sum += entropy;
        entropy_n += 1;

        if let Some(model) = reward_model.as_mut() {
            observed.extend(traj.origin_task, traj.transitions.iter().cloned())?;
            for _ in 0..config.reward_model_updates {
                model.train_step(&family, &tasks, &observed, &mut rng)?;
            }
        }
        let model = reward_model.as_ref().filter(|_| dest != traj.origin_task);
        relabel_and_store(&mut buffers, &family, &traj, &tasks[dest], model)?;
        trajectories.push(traj);

        let filled: Vec<usize> = (0..n).filter(|&t| !buffers.is_empty(t)).collect();
        for _ in 0..config.agent.updates_per_trajectory {
            let batch: Vec<usize> = (0..config.agent.meta_batch).map(|_| filled[rng.random_range(0..filled.len())]).collect();
            agent.train_step(&buffers, &batch, &mut rng)?;
        }

        if env_steps >= next_eval || env_steps >= config.total_steps {
            while next_eval <= env_steps {
                next_eval += config.eval_interval;
            }
            let (mean_return, success_rate) = evaluate(&agent, &family, &test_tasks, k, &mut rng)?;
            rows.push(MetricsRow {
                seed: config.seed,
                env_steps,
                mean_return,
                success_rate,
                relabel_entropy: entropy_sum / entropy_n.max(1) as f64,
                relabel_counts: counts.clone(),
            });
            entropy_sum = 0.0;
            entropy_n = 0;
        }
    }
    Ok(TrainedRun {
        config: config.clone(),
        family,
        agent,
        buffers,
        rows,
        trajectories,
        reward_model,
    })
}

/// Train, then write the metrics file and a checkpoint of the final agent
/// (`checkpoint_<strategy>_seed<n>/`) under `out_dir`. Returns the metrics path.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf> {
    let run = train(config)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join(config.metrics_file_name());
    std::fs::write(&path, metrics_to_csv(&run.rows)).map_err(|e| Error::io(&path, e))?;
    let ckpt = out_dir.join(format!("checkpoint_{}_seed{}", config.strategy.key(), config.seed));
    run.agent.save_checkpoint(&ckpt)?;
    Ok(path)
}
