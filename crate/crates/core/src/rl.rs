//! A small deterministic gridworld, a DQN trained on the model module's
//! networks, the row-gradient kernel between state-action pairs, and the
//! similarity-seeking exploration policy built on it.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{forward, init_params, logit_row_gradient, NetworkSpec, ParamVector};
use crate::model::Activation;
use crate::numerics::{argmax_tiebreak, dot, mean, std_dev, Rng};

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;
pub const ACTIONS: usize = 4;

/// Greedy evaluation cadence inside `run_training`, in environment steps.
pub const EVAL_INTERVAL: usize = 500;

/// Hidden width of the Q-network.
pub const HIDDEN_WIDTH: usize = 32;

/// Deterministic rectangular gridworld. The agent starts top-left, the
/// goal sits bottom-right, moves into walls or borders keep the position,
/// and every step costs `step_reward`; entering the goal additionally
/// pays `goal_reward`, so an episode solved in `L` steps returns
/// `goal_reward + L * step_reward`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    width: usize,
    height: usize,
    start: (usize, usize),
    goal: (usize, usize),
    walls: Vec<(usize, usize)>,
    step_reward: f64,
    goal_reward: f64,
    max_steps: usize,
}

impl Default for GridWorld {
    fn default() -> GridWorld {
        GridWorld::new(5, 5, &[]).expect("default gridworld is valid")
    }
}

impl GridWorld {
    /// Grid with start `(0,0)`, goal `(width-1,height-1)`, step reward
    /// -0.01, goal reward +1.0 and a 100-step episode cap. The goal must
    /// stay reachable around the walls.
    pub fn new(width: usize, height: usize, walls: &[(usize, usize)]) -> Result<GridWorld> {
        if width < 2 || height < 2 {
            return Err(Error::invalid("gridworld needs at least 2x2 cells"));
        }
        let start = (0, 0);
        let goal = (width - 1, height - 1);
        let mut sorted_walls: Vec<(usize, usize)> = walls.to_vec();
        sorted_walls.sort_unstable();
        sorted_walls.dedup();
        for &(x, y) in &sorted_walls {
            if x >= width || y >= height {
                return Err(Error::invalid("wall outside the grid"));
            }
            if (x, y) == start || (x, y) == goal {
                return Err(Error::invalid("wall on start or goal"));
            }
        }
        let env = GridWorld {
            width,
            height,
            start,
            goal,
            walls: sorted_walls,
            step_reward: -0.01,
            goal_reward: 1.0,
            max_steps: 100,
        };
        if !env.goal_reachable() {
            return Err(Error::invalid("goal unreachable through the walls"));
        }
        Ok(env)
    }

    fn goal_reachable(&self) -> bool {
        let mut seen = vec![false; self.width * self.height];
        let mut queue = VecDeque::new();
        seen[self.cell_index(self.start)] = true;
        queue.push_back(self.start);
        while let Some(cell) = queue.pop_front() {
            if cell == self.goal {
                return true;
            }
            for a in 0..ACTIONS {
                let next = self.moved(cell, a);
                let idx = self.cell_index(next);
                if !seen[idx] {
                    seen[idx] = true;
                    queue.push_back(next);
                }
            }
        }
        false
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn goal(&self) -> (usize, usize) {
        self.goal
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    /// Dimension of the one-hot state encoding.
    pub fn state_dim(&self) -> usize {
        self.width * self.height
    }

    pub fn cell_index(&self, cell: (usize, usize)) -> usize {
        cell.1 * self.width + cell.0
    }

    /// One-hot feature vector of a cell.
    pub fn encode(&self, cell: (usize, usize)) -> Vec<f64> {
        let mut v = vec![0.0; self.state_dim()];
        v[self.cell_index(cell)] = 1.0;
        v
    }

    pub fn start_state(&self) -> EpisodeState {
        EpisodeState {
            cell: self.start,
            steps: 0,
        }
    }

    fn is_wall(&self, cell: (usize, usize)) -> bool {
        self.walls.binary_search(&cell).is_ok()
    }

    /// Target cell of an action, staying put at borders and walls.
    fn moved(&self, cell: (usize, usize), action: usize) -> (usize, usize) {
        assert!(action < ACTIONS, "invalid action {action}");
        let (x, y) = cell;
        let target = match action {
            UP if y > 0 => (x, y - 1),
            DOWN if y + 1 < self.height => (x, y + 1),
            LEFT if x > 0 => (x - 1, y),
            RIGHT if x + 1 < self.width => (x + 1, y),
            _ => (x, y),
        };
        if self.is_wall(target) {
            (x, y)
        } else {
            target
        }
    }
}

/// Position plus elapsed steps of the running episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeState {
    pub cell: (usize, usize),
    pub steps: usize,
}

/// One deterministic environment step. Entering the goal pays the goal
/// bonus on top of the step cost; the episode ends at the goal or when
/// the step cap is reached.
pub fn env_step(env: &GridWorld, state: EpisodeState, action: usize) -> (EpisodeState, f64, bool) {
    let cell = env.moved(state.cell, action);
    let steps = state.steps + 1;
    let at_goal = cell == env.goal;
    let reward = env.step_reward + if at_goal { env.goal_reward } else { 0.0 };
    let done = at_goal || steps >= env.max_steps;
    (EpisodeState { cell, steps }, reward, done)
}

/// One stored environment interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: usize,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring of transitions with uniform sampling. Eviction is
/// strictly first-in first-out.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
    rng: Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, rng: Rng) -> Result<ReplayBuffer> {
        if capacity == 0 {
            return Err(Error::invalid("replay buffer capacity must be positive"));
        }
        Ok(ReplayBuffer {
            capacity,
            items: Vec::new(),
            next: 0,
            rng,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Stored transitions from oldest to newest.
    pub fn ordered(&self) -> Vec<&Transition> {
        if self.items.len() < self.capacity {
            self.items.iter().collect()
        } else {
            let (tail, head) = self.items.split_at(self.next);
            head.iter().chain(tail.iter()).collect()
        }
    }

    /// Uniform sample of `n` transitions, drawn with replacement.
    pub fn sample(&mut self, n: usize) -> Result<Vec<Transition>> {
        if self.items.is_empty() {
            return Err(Error::EmptyInput("replay buffer"));
        }
        if n == 0 {
            return Err(Error::invalid("sample size must be positive"));
        }
        let len = self.items.len() as u64;
        Ok((0..n)
            .map(|_| self.items[self.rng.next_below(len) as usize].clone())
            .collect())
    }
}

/// Which branch the behaviour policy takes on an exploration draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    EpsGreedy,
    LpntkMax,
}

/// Training hyperparameters for the gridworld DQN.
#[derive(Debug, Clone, PartialEq)]
pub struct RlConfig {
    pub gamma: f64,
    pub epsilon: f64,
    pub lr: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub total_steps: usize,
    pub eval_episodes: usize,
    pub seed: u64,
    pub strategy: Strategy,
}

impl Default for RlConfig {
    fn default() -> RlConfig {
        RlConfig {
            gamma: 0.95,
            epsilon: 0.2,
            lr: 0.05,
            buffer_capacity: 2000,
            batch_size: 16,
            total_steps: 4000,
            eval_episodes: 3,
            seed: 0,
            strategy: Strategy::EpsGreedy,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid("gamma must lie in [0, 1)"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon <= 1.0) {
            return Err(Error::invalid("epsilon must lie in [0, 1]"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid("lr must be positive"));
        }
        if self.buffer_capacity == 0 || self.batch_size == 0 {
            return Err(Error::invalid("buffer capacity and batch size must be positive"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::invalid("eval episodes must be positive"));
        }
        Ok(())
    }
}

/// Q-network shape for an environment: one hidden relu layer over the
/// one-hot state, one output per action.
pub fn dqn_spec(env: &GridWorld) -> Result<NetworkSpec> {
    NetworkSpec::new(
        vec![env.state_dim(), HIDDEN_WIDTH, ACTIONS],
        Activation::Relu,
        true,
    )
}

/// TD residual `Q(s,a) - (r + gamma * max_a' Q(s',a'))` with a zero
/// bootstrap at terminals.
pub fn td_error(q_s: &[f64], a: usize, r: f64, q_next: &[f64], gamma: f64, done: bool) -> f64 {
    let bootstrap = if done {
        0.0
    } else {
        let max_next = q_next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        gamma * max_next
    };
    q_s[a] - (r + bootstrap)
}

/// One batch-mean SGD step on the squared TD error, with the bootstrap
/// target treated as a constant.
pub fn dqn_update(
    params: &ParamVector,
    spec: &NetworkSpec,
    batch: &[Transition],
    gamma: f64,
    lr: f64,
) -> Result<ParamVector> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("dqn_update batch"));
    }
    let mut grad = vec![0.0; params.len()];
    for (i, t) in batch.iter().enumerate() {
        if t.a >= spec.classes() {
            return Err(Error::LabelOutOfRange {
                index: i,
                label: t.a,
                classes: spec.classes(),
            });
        }
        let q_s = forward(params, spec, &t.s)?.logits;
        let q_next = forward(params, spec, &t.s_next)?.logits;
        let delta = td_error(&q_s, t.a, t.r, &q_next, gamma, t.done);
        if !delta.is_finite() {
            return Err(Error::NonFinite {
                context: "dqn_update td error",
                index: i,
            });
        }
        let g = logit_row_gradient(params, spec, &t.s, t.a)?;
        for (acc, gv) in grad.iter_mut().zip(g.iter()) {
            *acc += delta * gv;
        }
    }
    let scale = lr / batch.len() as f64;
    let values: Vec<f64> = params
        .as_slice()
        .iter()
        .zip(grad.iter())
        .map(|(p, g)| p - scale * g)
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "dqn_update parameters",
            index: i,
        });
    }
    ParamVector::from_vec(values)
}

/// Similarity of two state-action pairs: inner product of the selected
/// rows of the two Q-Jacobians.
pub fn q_lpntk(
    params: &ParamVector,
    spec: &NetworkSpec,
    s: &[f64],
    a: usize,
    s2: &[f64],
    a2: usize,
) -> Result<f64> {
    let g1 = logit_row_gradient(params, spec, s, a)?;
    let g2 = logit_row_gradient(params, spec, s2, a2)?;
    Ok(dot(&g1, &g2))
}

/// Exploration action: the one whose state-action pair is on average
/// most similar to the given batch. Ties resolve to the lowest action
/// index.
pub fn lpntk_max_action(
    params: &ParamVector,
    spec: &NetworkSpec,
    s: &[f64],
    batch: &[(Vec<f64>, usize)],
) -> Result<usize> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("lpntk_max_action batch"));
    }
    let mut batch_grads = Vec::with_capacity(batch.len());
    for (s_i, a_i) in batch {
        batch_grads.push(logit_row_gradient(params, spec, s_i, *a_i)?);
    }
    let n = batch.len() as f64;
    let mut means = Vec::with_capacity(spec.classes());
    for a in 0..spec.classes() {
        let g = logit_row_gradient(params, spec, s, a)?;
        let mut total = 0.0;
        for g_i in &batch_grads {
            total += dot(&g, g_i);
        }
        means.push(total / n);
    }
    argmax_tiebreak(&means)
}

/// Action with the highest Q-value, lowest index on ties.
pub fn greedy_action(params: &ParamVector, spec: &NetworkSpec, s: &[f64]) -> Result<usize> {
    let trace = forward(params, spec, s)?;
    argmax_tiebreak(&trace.logits)
}

/// Mixed behaviour policy: greedy with probability `1 - epsilon`,
/// otherwise the similarity-seeking action. An empty batch falls back to
/// a uniform random action.
pub fn behaviour_action(
    params: &ParamVector,
    spec: &NetworkSpec,
    s: &[f64],
    batch: &[(Vec<f64>, usize)],
    epsilon: f64,
    rng: &mut Rng,
) -> Result<usize> {
    let u = rng.next_f64();
    if u >= epsilon {
        greedy_action(params, spec, s)
    } else if batch.is_empty() {
        Ok(rng.next_below(spec.classes() as u64) as usize)
    } else {
        lpntk_max_action(params, spec, s, batch)
    }
}

/// One point of the evaluation curve.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub step: usize,
    pub mean: f64,
    pub std: f64,
}

/// Greedy-policy rollouts; returns mean and standard deviation of the
/// undiscounted episode returns. The generator is unused here because
/// both the environment and the greedy policy are deterministic, but the
/// signature leaves room for per-episode streams.
pub fn evaluate(
    params: &ParamVector,
    spec: &NetworkSpec,
    env: &GridWorld,
    episodes: usize,
    _rng: &mut Rng,
) -> Result<(f64, f64)> {
    if episodes == 0 {
        return Err(Error::invalid("evaluate needs at least one episode"));
    }
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut st = env.start_state();
        let mut total = 0.0;
        loop {
            let a = greedy_action(params, spec, &env.encode(st.cell))?;
            let (next, r, done) = env_step(env, st, a);
            total += r;
            st = next;
            if done {
                break;
            }
        }
        returns.push(total);
    }
    Ok((mean(&returns), std_dev(&returns)))
}

/// Mean and standard deviation of uniform-random-policy returns.
pub fn random_baseline(env: &GridWorld, episodes: usize, rng: &mut Rng) -> Result<(f64, f64)> {
    if episodes == 0 {
        return Err(Error::invalid("baseline needs at least one episode"));
    }
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut st = env.start_state();
        let mut total = 0.0;
        loop {
            let a = rng.next_below(ACTIONS as u64) as usize;
            let (next, r, done) = env_step(env, st, a);
            total += r;
            st = next;
            if done {
                break;
            }
        }
        returns.push(total);
    }
    Ok((mean(&returns), std_dev(&returns)))
}

/// Runs the DQN loop: act with the configured behaviour policy, store
/// the transition, update on a uniform replay batch, and evaluate the
/// greedy policy on a fixed cadence plus once at the end. The two
/// strategies differ only in the exploration branch, so runs with equal
/// seeds share identical streams until the first exploration draw.
pub fn run_training(env: &GridWorld, cfg: &RlConfig) -> Result<(ParamVector, Vec<EvalPoint>)> {
    cfg.validate()?;
    let spec = dqn_spec(env)?;
    let mut policy_rng = Rng::new(cfg.seed);
    let buffer_rng = policy_rng.fork();
    let mut eval_rng = policy_rng.fork();
    let mut init_rng = policy_rng.fork();
    let mut params = init_params(&spec, &mut init_rng);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, buffer_rng)?;
    let mut last_batch: Option<Vec<(Vec<f64>, usize)>> = None;
    let mut st = env.start_state();
    let mut curve = Vec::new();
    for step in 0..cfg.total_steps {
        let s_feat = env.encode(st.cell);
        let a = match cfg.strategy {
            Strategy::LpntkMax => behaviour_action(
                &params,
                &spec,
                &s_feat,
                last_batch.as_deref().unwrap_or(&[]),
                cfg.epsilon,
                &mut policy_rng,
            )?,
            Strategy::EpsGreedy => {
                let u = policy_rng.next_f64();
                if u >= cfg.epsilon {
                    greedy_action(&params, &spec, &s_feat)?
                } else {
                    policy_rng.next_below(ACTIONS as u64) as usize
                }
            }
        };
        let (next, r, done) = env_step(env, st, a);
        buffer.push(Transition {
            s: s_feat,
            a,
            r,
            s_next: env.encode(next.cell),
            done,
        });
        if buffer.len() >= cfg.batch_size {
            let batch = buffer.sample(cfg.batch_size)?;
            params = dqn_update(&params, &spec, &batch, cfg.gamma, cfg.lr)?;
            last_batch = Some(batch.into_iter().map(|t| (t.s, t.a)).collect());
        }
        st = if done { env.start_state() } else { next };
        if (step + 1) % EVAL_INTERVAL == 0 {
            let (m, sd) = evaluate(&params, &spec, env, cfg.eval_episodes, &mut eval_rng)?;
            curve.push(EvalPoint {
                step: step + 1,
                mean: m,
                std: sd,
            });
        }
    }
    if cfg.total_steps > 0 && cfg.total_steps % EVAL_INTERVAL != 0 {
        let (m, sd) = evaluate(&params, &spec, env, cfg.eval_episodes, &mut eval_rng)?;
        curve.push(EvalPoint {
            step: cfg.total_steps,
            mean: m,
            std: sd,
        });
    }
    Ok((params, curve))
}
