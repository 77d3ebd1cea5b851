//! Python bindings: task families, the agent, relabeling, experiments and the
//! tabular checks.

use std::path::PathBuf;

use hfr_core::envs::{Split, TaskFamily, Trajectory, Transition};
use hfr_core::harness::{self, ConfigFile, ExperimentConfig};
use hfr_core::oracle::TabularMdp;
use hfr_core::pearl::{Agent, AgentConfig};
use hfr_core::relabel;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type PyTransition = (Vec<f64>, Vec<f64>, f64, Vec<f64>, bool);

fn err(e: hfr_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn split(name: &str) -> PyResult<Split> {
    match name {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        other => Err(PyValueError::new_err(format!("unknown split `{other}`"))),
    }
}

fn to_transitions(ts: Vec<PyTransition>) -> Vec<Transition> {
    ts.into_iter()
        .map(|(state, action, reward, next_state, done)| Transition {
            state,
            action,
            reward,
            next_state,
            done,
        })
        .collect()
}

fn from_trajectory(t: &Trajectory) -> Vec<PyTransition> {
    t.transitions
        .iter()
        .map(|t| (t.state.clone(), t.action.clone(), t.reward, t.next_state.clone(), t.done))
        .collect()
}

#[pyclass(name = "TaskFamily", module = "hfr")]
struct PyTaskFamily {
    inner: TaskFamily,
}

#[pymethods]
impl PyTaskFamily {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: TaskFamily::from_name(name).map_err(err)?,
        })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    #[getter]
    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }

    #[getter]
    fn action_dim(&self) -> usize {
        self.inner.action_dim()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    #[pyo3(signature = (split_name = "train"))]
    fn num_tasks(&self, split_name: &str) -> PyResult<usize> {
        Ok(self.inner.tasks(split(split_name)?).len())
    }

    /// `(reward, done)` of a transition under task `task` of the train split.
    fn reward_and_done(&self, task: usize, state: Vec<f64>, action: Vec<f64>, next_state: Vec<f64>) -> PyResult<(f64, bool)> {
        let spec = self.inner.task(Split::Train, task).map_err(err)?;
        self.inner.reward_and_done(&spec, &state, &action, &next_state).map_err(err)
    }

    fn step(&self, state: Vec<f64>, action: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.transition(&state, &action).map_err(err)
    }

    /// Discounted return of `transitions` with rewards recomputed under `task`.
    fn discounted_return(&self, transitions: Vec<PyTransition>, task: usize) -> PyResult<f64> {
        let spec = self.inner.task(Split::Train, task).map_err(err)?;
        let traj = Trajectory {
            transitions: to_transitions(transitions),
            origin_task: task,
        };
        hfr_core::envs::discounted_return(&self.inner, &traj, &spec, self.inner.gamma()).map_err(err)
    }
}

#[pyclass(name = "Agent", module = "hfr")]
struct PyAgent {
    inner: Agent,
    family: TaskFamily,
    rng: ChaCha8Rng,
}

#[pymethods]
impl PyAgent {
    #[new]
    #[pyo3(signature = (env, seed = 0, hidden = None))]
    fn new(env: &str, seed: u64, hidden: Option<Vec<usize>>) -> PyResult<Self> {
        let family = TaskFamily::from_name(env).map_err(err)?;
        let mut config = AgentConfig::for_family(&family);
        if let Some(h) = hidden {
            config.hidden = h;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inner = Agent::new(config, &mut rng).map_err(err)?;
        Ok(Self { inner, family, rng })
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    /// Posterior `(mean, variance)` of a context of transition tuples.
    fn posterior(&self, context: Vec<PyTransition>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let p = self.inner.posterior(&to_transitions(context)).map_err(err)?;
        Ok((p.mean, p.var))
    }

    #[pyo3(signature = (state, z, deterministic = true))]
    fn act(&mut self, state: Vec<f64>, z: Vec<f64>, deterministic: bool) -> PyResult<Vec<f64>> {
        self.inner.act(&state, &z, deterministic, &mut self.rng).map_err(err)
    }

    /// One trajectory for train task `task` conditioned on `context`.
    #[pyo3(signature = (task, context = Vec::new(), deterministic = false))]
    fn collect(&mut self, task: usize, context: Vec<PyTransition>, deterministic: bool) -> PyResult<Vec<PyTransition>> {
        let spec = self.family.task(Split::Train, task).map_err(err)?;
        let traj = self
            .inner
            .collect_trajectory(&self.family, &spec, &to_transitions(context), deterministic, &mut self.rng)
            .map_err(err)?;
        Ok(from_trajectory(&traj))
    }

    /// `(final return, success)` after `k` exploration trajectories on a test task.
    #[pyo3(signature = (task, k = None))]
    fn meta_test(&mut self, task: usize, k: Option<usize>) -> PyResult<(f64, bool)> {
        let spec = self.family.task(Split::Test, task).map_err(err)?;
        let k = k.unwrap_or_else(|| self.family.exploration_trajectories());
        let out = self.inner.meta_test(&self.family, &spec, k, true, &mut self.rng).map_err(err)?;
        Ok((out.final_return, out.success))
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.save_checkpoint(&dir).map_err(err)
    }

    fn load(&mut self, dir: PathBuf) -> PyResult<()> {
        self.inner.load_checkpoint(&dir).map_err(err)
    }
}

/// Relabeling probabilities `prior * exp((value - log Z) / epsilon)`, normalized.
#[pyfunction]
#[pyo3(signature = (values, log_partitions, priors, epsilon = 1.0))]
fn relabel_distribution(values: Vec<f64>, log_partitions: Vec<f64>, priors: Vec<f64>, epsilon: f64) -> PyResult<Vec<f64>> {
    Ok(relabel::relabel_distribution(&values, &log_partitions, &priors, epsilon).map_err(err)?.probs)
}

#[pyfunction]
fn log_mean_exp(values: Vec<f64>) -> Option<f64> {
    relabel::log_mean_exp(&values)
}

fn experiment(env: &str, relabel: &str, seed: u64, steps: usize, eval_interval: usize, hidden: Option<Vec<usize>>) -> PyResult<ExperimentConfig> {
    let file = ConfigFile {
        env: Some(env.into()),
        relabel: Some(relabel.into()),
        seed: Some(seed),
        steps: Some(steps),
        eval_interval: Some(eval_interval),
        agent: harness::AgentOverrides {
            hidden,
            ..Default::default()
        },
        ..Default::default()
    };
    ExperimentConfig::from_file(file).map_err(err)
}

/// Train one seed; returns the metrics rows as dicts.
#[pyfunction]
#[pyo3(signature = (env, relabel, seed, steps = 60_000, eval_interval = 2_000, hidden = None))]
fn train<'py>(
    py: Python<'py>,
    env: &str,
    relabel: &str,
    seed: u64,
    steps: usize,
    eval_interval: usize,
    hidden: Option<Vec<usize>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let config = experiment(env, relabel, seed, steps, eval_interval, hidden)?;
    let run = harness::train(&config).map_err(err)?;
    run.rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("seed", r.seed)?;
            d.set_item("env_steps", r.env_steps)?;
            d.set_item("mean_return", r.mean_return)?;
            d.set_item("success_rate", r.success_rate)?;
            d.set_item("relabel_entropy", r.relabel_entropy)?;
            d.set_item("relabel_counts", r.relabel_counts.clone())?;
            Ok(d)
        })
        .collect()
}

/// Run from a TOML parameter file; returns the metrics file path.
#[pyfunction]
#[pyo3(signature = (config_toml, out))]
fn run_experiment(config_toml: &str, out: PathBuf) -> PyResult<PathBuf> {
    let config = ExperimentConfig::from_file(ConfigFile::from_toml(config_toml).map_err(err)?).map_err(err)?;
    harness::run_experiment(&config, &out).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (input, out, metric = "success"))]
fn plot(input: PathBuf, out: PathBuf, metric: &str) -> PyResult<()> {
    let files = harness::metrics_files(&input).map_err(err)?;
    harness::emit_plot(&files, metric.parse().map_err(err)?, &out).map_err(err)
}

/// The exact tabular check suite as `(name, passed, detail)` tuples.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn verify(seed: u64) -> PyResult<Vec<(String, bool, String)>> {
    Ok(harness::verify_suite(seed).map_err(err)?.into_iter().map(|c| (c.name, c.passed, c.detail)).collect())
}

/// Optimal initial-state value of `task` for a tabular instance in text form.
#[pyfunction]
fn tabular_optimal_value(text: &str, task: usize) -> PyResult<f64> {
    let mdp = TabularMdp::from_text(text).map_err(err)?;
    Ok(mdp.value_iteration(task).map_err(err)?.initial_value(&mdp))
}

#[pymodule]
fn hfr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTaskFamily>()?;
    m.add_class::<PyAgent>()?;
    m.add_function(wrap_pyfunction!(relabel_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(log_mean_exp, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(plot, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(tabular_optimal_value, m)?)?;
    Ok(())
}
