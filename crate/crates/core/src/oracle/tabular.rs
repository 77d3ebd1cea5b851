//! Small discrete MDPs with exact dynamic programming and brute-force
//! trajectory enumeration.

use std::fmt::Write as _;

use rand::Rng;

use crate::envs::{FamilyKind, TaskSpec, Trajectory, Transition};
use crate::relabel::AdaptedValues;
use crate::{Error, Result};

pub const ENUMERATION_LIMIT: u128 = 1_000_000;
const FIXED_POINT_TOL: f64 = 1e-14;
const FIXED_POINT_MAX_ITERS: usize = 1_000_000;

/// Shared dynamics, one reward table per task.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub states: usize,
    pub actions: usize,
    /// `p(s'|s,a)` at `(s * actions + a) * states + s'`.
    pub transitions: Vec<f64>,
    /// `r_task(s,a)` at `[task][s * actions + a]`.
    pub rewards: Vec<Vec<f64>>,
    pub gamma: f64,
    pub initial: Vec<f64>,
    /// `None` means infinite horizon (requires `gamma < 1`).
    pub horizon: Option<usize>,
    pub priors: Vec<f64>,
}

/// Time-indexed action probabilities at `[t][s * actions + a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    pub probs: Vec<Vec<f64>>,
}

/// `q[t][s * actions + a]`, `v[t][s]`; a single entry for infinite horizon,
/// otherwise `T` entries for `q` and `T + 1` for `v` (the last all zero).
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    pub q: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TabularTrajectory {
    /// `T + 1` visited states.
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        what: "tabular instance",
        line,
        reason: reason.into(),
    }
}

fn dirichlet_ones<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

impl TabularMdp {
    pub fn validate(&self) -> Result<()> {
        let (s, a) = (self.states, self.actions);
        if s == 0 || a == 0 {
            return Err(Error::invalid("tabular instance needs at least one state and one action"));
        }
        if self.transitions.len() != s * a * s {
            return Err(Error::DimensionMismatch {
                context: "transition tensor",
                expected: s * a * s,
                actual: self.transitions.len(),
            });
        }
        for (i, row) in self.transitions.chunks(s).enumerate() {
            if row.iter().any(|p| !(*p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("transition row (s={}, a={}) is not a distribution", i / a, i % a)));
            }
        }
        if self.rewards.is_empty() {
            return Err(Error::Empty("task reward tables"));
        }
        for (k, r) in self.rewards.iter().enumerate() {
            if r.len() != s * a || r.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("reward table of task {k} must hold {} finite values", s * a)));
            }
        }
        if self.initial.len() != s || self.initial.iter().any(|p| !(*p >= 0.0)) || (self.initial.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("initial distribution must be a distribution over states"));
        }
        if self.priors.len() != self.rewards.len() || (self.priors.iter().sum::<f64>() - 1.0).abs() > 1e-12 || self.priors.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::invalid("task priors must be a distribution over tasks"));
        }
        if !(0.0..=1.0).contains(&self.gamma) || (self.horizon.is_none() && self.gamma >= 1.0) {
            return Err(Error::invalid("discount must lie in [0, 1], and below 1 without a horizon"));
        }
        Ok(())
    }

    pub fn num_tasks(&self) -> usize {
        self.rewards.len()
    }

    pub fn tasks(&self) -> Vec<TaskSpec> {
        self.priors
            .iter()
            .enumerate()
            .map(|(id, &prior)| TaskSpec {
                id,
                family: FamilyKind::Tabular,
                params: Vec::new(),
                prior,
            })
            .collect()
    }

    pub fn p(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transitions[(s * self.actions + a) * self.states + next]
    }

    pub fn reward(&self, task: usize, s: usize, a: usize) -> f64 {
        self.rewards[task][s * self.actions + a]
    }

    /// Random instance: Dirichlet(1) transition rows and initial distribution,
    /// rewards uniform in `[-1, 1]`, uniform priors.
    pub fn random<R: Rng + ?Sized>(states: usize, actions: usize, tasks: usize, horizon: Option<usize>, gamma: f64, rng: &mut R) -> Self {
        let transitions = (0..states * actions).flat_map(|_| dirichlet_ones(states, rng)).collect();
        let rewards = (0..tasks)
            .map(|_| (0..states * actions).map(|_| rng.random_range(-1.0..=1.0)).collect())
            .collect();
        Self {
            states,
            actions,
            transitions,
            rewards,
            gamma,
            initial: dirichlet_ones(states, rng),
            horizon,
            priors: vec![1.0 / tasks as f64; tasks],
        }
    }

    fn backup(&self, task: usize, v_next: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.states * self.actions];
        for s in 0..self.states {
            for a in 0..self.actions {
                let ev: f64 = (0..self.states).map(|n| self.p(s, a, n) * v_next[n]).sum();
                q[s * self.actions + a] = self.reward(task, s, a) + self.gamma * ev;
            }
        }
        q
    }

    fn greedy_values(&self, q: &[f64]) -> Vec<f64> {
        q.chunks(self.actions).map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect()
    }

    /// Optimal values: backward induction over the horizon, or the
    /// discounted fixed point without one.
    pub fn value_iteration(&self, task: usize) -> Result<ValueTables> {
        if task >= self.num_tasks() {
            return Err(Error::UnknownTask(task));
        }
        match self.horizon {
            Some(t) => {
                let mut v = vec![vec![0.0; self.states]; t + 1];
                let mut q = vec![Vec::new(); t];
                for step in (0..t).rev() {
                    q[step] = self.backup(task, &v[step + 1]);
                    v[step] = self.greedy_values(&q[step]);
                }
                Ok(ValueTables { q, v })
            }
            None => {
                let mut v = vec![0.0; self.states];
                for _ in 0..FIXED_POINT_MAX_ITERS {
                    let q = self.backup(task, &v);
                    let next = self.greedy_values(&q);
                    let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    v = next;
                    if delta < FIXED_POINT_TOL {
                        break;
                    }
                }
                let q = self.backup(task, &v);
                Ok(ValueTables { q: vec![q], v: vec![v] })
            }
        }
    }

    /// Expected discounted return of `policy` from `p1`, by backward induction.
    pub fn policy_value(&self, task: usize, policy: &TabularPolicy) -> Result<f64> {
        let t = self.horizon.ok_or_else(|| Error::invalid("policy evaluation needs a finite horizon"))?;
        policy.validate(self)?;
        let mut v = vec![0.0; self.states];
        for step in (0..t).rev() {
            let q = self.backup(task, &v);
            v = (0..self.states)
                .map(|s| (0..self.actions).map(|a| policy.prob(self, step, s, a) * q[s * self.actions + a]).sum())
                .collect();
        }
        Ok(self.initial.iter().zip(&v).map(|(p, x)| p * x).sum())
    }

    pub fn discounted_return(&self, task: usize, traj: &TabularTrajectory) -> f64 {
        let mut g = 0.0;
        let mut discount = 1.0;
        for (t, a) in traj.actions.iter().enumerate() {
            g += discount * self.reward(task, traj.states[t], *a);
            discount *= self.gamma;
        }
        g
    }

    /// `log p1(s_1) + sum_t log p(s_{t+1} | s_t, a_t)`.
    pub fn log_dynamics(&self, traj: &TabularTrajectory) -> f64 {
        let mut lp = self.initial[traj.states[0]].ln();
        for (t, a) in traj.actions.iter().enumerate() {
            lp += self.p(traj.states[t], *a, traj.states[t + 1]).ln();
        }
        lp
    }

    /// Every trajectory with non-zero probability under `policy`, with its
    /// probability.
    pub fn enumerate_trajectories(&self, policy: &TabularPolicy) -> Result<Vec<(TabularTrajectory, f64)>> {
        let t = self.horizon.ok_or_else(|| Error::invalid("enumeration needs a finite horizon"))?;
        policy.validate(self)?;
        let mut out = Vec::new();
        let mut states = Vec::with_capacity(t + 1);
        let mut actions = Vec::with_capacity(t);
        for s0 in 0..self.states {
            if self.initial[s0] > 0.0 {
                states.push(s0);
                self.enumerate_from(policy, t, self.initial[s0], &mut states, &mut actions, &mut out)?;
                states.pop();
            }
        }
        Ok(out)
    }

    fn enumerate_from(
        &self,
        policy: &TabularPolicy,
        horizon: usize,
        prob: f64,
        states: &mut Vec<usize>,
        actions: &mut Vec<usize>,
        out: &mut Vec<(TabularTrajectory, f64)>,
    ) -> Result<()> {
        let step = actions.len();
        if step == horizon {
            if out.len() as u128 >= ENUMERATION_LIMIT {
                return Err(Error::EnumerationBound {
                    count: out.len() as u128 + 1,
                    limit: ENUMERATION_LIMIT,
                });
            }
            out.push((
                TabularTrajectory {
                    states: states.clone(),
                    actions: actions.clone(),
                },
                prob,
            ));
            return Ok(());
        }
        let s = states[step];
        for a in 0..self.actions {
            let pa = policy.prob(self, step, s, a);
            if pa == 0.0 {
                continue;
            }
            actions.push(a);
            for n in 0..self.states {
                let pn = self.p(s, a, n);
                if pn > 0.0 {
                    states.push(n);
                    self.enumerate_from(policy, horizon, prob * pa * pn, states, actions, out)?;
                    states.pop();
                }
            }
            actions.pop();
        }
        Ok(())
    }

    /// Environment-style trajectory with rewards under `task`.
    pub fn to_trajectory(&self, traj: &TabularTrajectory, task: usize, origin: usize) -> Trajectory {
        let mut out = Trajectory::new(origin);
        for (t, a) in traj.actions.iter().enumerate() {
            out.transitions.push(Transition {
                state: vec![traj.states[t] as f64],
                action: vec![*a as f64],
                reward: self.reward(task, traj.states[t], *a),
                next_state: vec![traj.states[t + 1] as f64],
                done: false,
            });
        }
        out
    }

    /// Parse the plain-text instance format (see [`TabularMdp::to_text`]).
    pub fn from_text(text: &str) -> Result<Self> {
        let mut states = None;
        let mut actions = None;
        let mut tasks = None;
        let mut gamma = None;
        let mut horizon = None;
        let mut initial = None;
        let mut priors = None;
        let mut rows: Vec<(usize, usize, usize, Vec<f64>)> = Vec::new();
        let mut rewards: Vec<(usize, usize, usize, usize, f64)> = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default();
            let rest: Vec<&str> = parts.collect();
            let reals = |xs: &[&str]| -> Result<Vec<f64>> {
                xs.iter()
                    .map(|x| x.parse::<f64>().map_err(|_| parse_err(line_no, format!("`{x}` is not a number"))))
                    .collect()
            };
            let index = |x: &str| -> Result<usize> { x.parse::<usize>().map_err(|_| parse_err(line_no, format!("`{x}` is not an index"))) };
            let single = |what: &str| -> Result<&str> {
                match rest[..] {
                    [v] => Ok(v),
                    _ => Err(parse_err(line_no, format!("`{what}` takes exactly one value"))),
                }
            };
            match key {
                "states" => states = Some(index(single(key)?)?),
                "actions" => actions = Some(index(single(key)?)?),
                "tasks" => tasks = Some(index(single(key)?)?),
                "gamma" => gamma = Some(reals(&[single(key)?])?[0]),
                "horizon" => {
                    let v = single(key)?;
                    horizon = Some(if v == "inf" { None } else { Some(index(v)?) });
                }
                "initial" => initial = Some(reals(&rest)?),
                "prior" => priors = Some(reals(&rest)?),
                "transition" => {
                    if rest.len() < 3 {
                        return Err(parse_err(line_no, "expected `transition <s> <a> <p(s'=0)> ...`"));
                    }
                    rows.push((line_no, index(rest[0])?, index(rest[1])?, reals(&rest[2..])?));
                }
                "reward" => {
                    let [k, s, a, r] = rest[..] else {
                        return Err(parse_err(line_no, "expected `reward <task> <s> <a> <value>`"));
                    };
                    rewards.push((line_no, index(k)?, index(s)?, index(a)?, reals(&[r])?[0]));
                }
                other => return Err(parse_err(line_no, format!("unknown key `{other}`"))),
            }
        }
        let missing = |what: &str| parse_err(0, format!("missing `{what}`"));
        let states = states.ok_or_else(|| missing("states"))?;
        let actions = actions.ok_or_else(|| missing("actions"))?;
        let tasks = tasks.ok_or_else(|| missing("tasks"))?;
        let gamma = gamma.ok_or_else(|| missing("gamma"))?;
        let horizon = horizon.ok_or_else(|| missing("horizon"))?;
        let initial = initial.ok_or_else(|| missing("initial"))?;

        let mut transitions = vec![f64::NAN; states * actions * states];
        for (line, s, a, probs) in rows {
            if s >= states || a >= actions || probs.len() != states {
                return Err(parse_err(line, "transition row out of range or of the wrong length"));
            }
            let base = (s * actions + a) * states;
            transitions[base..base + states].copy_from_slice(&probs);
        }
        if transitions.iter().any(|p| p.is_nan()) {
            return Err(parse_err(0, "every (state, action) pair needs a transition row"));
        }
        let mut table = vec![vec![0.0; states * actions]; tasks];
        for (line, k, s, a, r) in rewards {
            if k >= tasks || s >= states || a >= actions {
                return Err(parse_err(line, "reward index out of range"));
            }
            table[k][s * actions + a] = r;
        }
        let mdp = Self {
            states,
            actions,
            transitions,
            rewards: table,
            gamma,
            initial,
            horizon,
            priors: priors.unwrap_or_else(|| vec![1.0 / tasks as f64; tasks]),
        };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Plain-text form: one `key values...` line per field, one line per
    /// transition row and per non-zero reward; `#` starts a comment.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let join = |xs: &[f64]| xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "states {}", self.states);
        let _ = writeln!(out, "actions {}", self.actions);
        let _ = writeln!(out, "tasks {}", self.num_tasks());
        let _ = writeln!(out, "gamma {:?}", self.gamma);
        match self.horizon {
            Some(t) => writeln!(out, "horizon {t}"),
            None => writeln!(out, "horizon inf"),
        }
        .ok();
        let _ = writeln!(out, "initial {}", join(&self.initial));
        let _ = writeln!(out, "prior {}", join(&self.priors));
        for s in 0..self.states {
            for a in 0..self.actions {
                let base = (s * self.actions + a) * self.states;
                let _ = writeln!(out, "transition {s} {a} {}", join(&self.transitions[base..base + self.states]));
            }
        }
        for k in 0..self.num_tasks() {
            for s in 0..self.states {
                for a in 0..self.actions {
                    let r = self.reward(k, s, a);
                    if r != 0.0 {
                        let _ = writeln!(out, "reward {k} {s} {a} {r:?}");
                    }
                }
            }
        }
        out
    }
}

impl ValueTables {
    pub fn initial_value(&self, mdp: &TabularMdp) -> f64 {
        mdp.initial.iter().zip(&self.v[0]).map(|(p, v)| p * v).sum()
    }

    /// Deterministic policy taking the first maximizing action.
    pub fn greedy_policy(&self, mdp: &TabularMdp) -> TabularPolicy {
        let probs = self
            .q
            .iter()
            .map(|q| {
                let mut row = vec![0.0; q.len()];
                for (s, qs) in q.chunks(mdp.actions).enumerate() {
                    let best = (0..mdp.actions).fold(0, |b, a| if qs[a] > qs[b] { a } else { b });
                    row[s * mdp.actions + best] = 1.0;
                }
                row
            })
            .collect();
        TabularPolicy { probs }
    }

    fn step_index(&self, t: usize) -> usize {
        t.min(self.q.len() - 1)
    }

    pub fn q_at(&self, mdp: &TabularMdp, t: usize, s: usize, a: usize) -> f64 {
        self.q[self.step_index(t)][s * mdp.actions + a]
    }

    pub fn v_at(&self, t: usize, s: usize) -> f64 {
        self.v[t.min(self.v.len() - 1)][s]
    }
}

impl TabularPolicy {
    fn steps(mdp: &TabularMdp) -> usize {
        mdp.horizon.unwrap_or(1).max(1)
    }

    pub fn uniform(mdp: &TabularMdp) -> Self {
        let row = vec![1.0 / mdp.actions as f64; mdp.states * mdp.actions];
        Self {
            probs: vec![row; Self::steps(mdp)],
        }
    }

    /// Independent Dirichlet(1) action distribution per (t, s).
    pub fn random<R: Rng + ?Sized>(mdp: &TabularMdp, rng: &mut R) -> Self {
        let probs = (0..Self::steps(mdp))
            .map(|_| (0..mdp.states).flat_map(|_| dirichlet_ones(mdp.actions, rng)).collect())
            .collect();
        Self { probs }
    }

    /// A uniformly chosen action per (t, s), with probability one.
    pub fn random_deterministic<R: Rng + ?Sized>(mdp: &TabularMdp, rng: &mut R) -> Self {
        let probs = (0..Self::steps(mdp))
            .map(|_| {
                let mut row = vec![0.0; mdp.states * mdp.actions];
                for s in 0..mdp.states {
                    row[s * mdp.actions + rng.random_range(0..mdp.actions)] = 1.0;
                }
                row
            })
            .collect();
        Self { probs }
    }

    pub fn prob(&self, mdp: &TabularMdp, t: usize, s: usize, a: usize) -> f64 {
        self.probs[t.min(self.probs.len() - 1)][s * mdp.actions + a]
    }

    pub fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        if self.probs.is_empty() {
            return Err(Error::Empty("policy steps"));
        }
        for row in &self.probs {
            if row.len() != mdp.states * mdp.actions {
                return Err(Error::DimensionMismatch {
                    context: "policy row",
                    expected: mdp.states * mdp.actions,
                    actual: row.len(),
                });
            }
            for dist in row.chunks(mdp.actions) {
                if dist.iter().any(|p| !(*p >= 0.0)) || (dist.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid("policy rows must be distributions"));
                }
            }
        }
        Ok(())
    }

    /// `sum_t log pi(a_t | s_t, t)`.
    pub fn log_prob(&self, mdp: &TabularMdp, traj: &TabularTrajectory) -> f64 {
        traj.actions.iter().enumerate().map(|(t, a)| self.prob(mdp, t, traj.states[t], *a).ln()).sum()
    }
}

/// Exact tables standing in for an adapted agent: adapting on any trajectory
/// for `task` yields that task's optimal policy and values.
#[derive(Debug, Clone)]
pub struct TabularValues {
    pub mdp: TabularMdp,
    pub tables: Vec<ValueTables>,
}

impl TabularValues {
    pub fn new(mdp: TabularMdp) -> Result<Self> {
        mdp.validate()?;
        let tables = (0..mdp.num_tasks()).map(|k| mdp.value_iteration(k)).collect::<Result<_>>()?;
        Ok(Self { mdp, tables })
    }

    fn index(x: &[f64]) -> usize {
        x[0] as usize
    }
}

impl AdaptedValues for TabularValues {
    fn initial_q_values<R: Rng + ?Sized>(&self, _traj: &Trajectory, task: &TaskSpec, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        let tables = self.tables.get(task.id).ok_or(Error::UnknownTask(task.id))?;
        let mdp = &self.mdp;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rng.random();
            let mut cum = 0.0;
            let mut s = mdp.states - 1;
            for (i, p) in mdp.initial.iter().enumerate() {
                cum += p;
                if u < cum {
                    s = i;
                    break;
                }
            }
            let a = (0..mdp.actions).fold(0, |b, a| if tables.q_at(mdp, 0, s, a) > tables.q_at(mdp, 0, s, b) { a } else { b });
            out.push(tables.q_at(mdp, 0, s, a));
        }
        Ok(out)
    }

    fn bellman_residuals<R: Rng + ?Sized>(&self, _traj: &Trajectory, task: &TaskSpec, batch: &[Transition], _rng: &mut R) -> Result<Vec<f64>> {
        let tables = self.tables.get(task.id).ok_or(Error::UnknownTask(task.id))?;
        let mdp = &self.mdp;
        Ok(batch
            .iter()
            .map(|t| {
                let (s, a, n) = (Self::index(&t.state), Self::index(&t.action), Self::index(&t.next_state));
                let target = t.reward + if t.done { 0.0 } else { mdp.gamma * tables.v_at(0, n) };
                tables.q_at(mdp, 0, s, a) - target
            })
            .collect())
    }
}
