//! Tabular Q-learning bidders.
//!
//! Each agent keeps a Q-table over (state, action) pairs, where actions are
//! bid-grid indices and states either encode the previous winning bid (one
//! state per grid level) or collapse to a single state when feedback is off.
//! Exploration is either epsilon-greedy or Boltzmann, with one shared
//! multiplicatively decaying parameter that starts at 1 and floors at 0.01.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::auction::CounterfactualValue;
use crate::error::{Error, Result};

/// Exploration parameter floor shared by both exploration kinds.
pub const EXPLORATION_FLOOR: f64 = 0.01;

/// Exploration parameter starting value.
pub const EXPLORATION_INITIAL: f64 = 1.0;

/// Learning-rule parameters shared by every agent in a trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    /// Learning rate in (0, 1].
    pub alpha: f64,
    /// Discount factor in [0, 1).
    pub gamma: f64,
    /// Asynchronous updates touch only the played action; synchronous
    /// updates touch every action through counterfactual rewards.
    pub asynchronous: bool,
    /// Whether the previous winning bid is observed as the state.
    pub feedback: bool,
}

impl AgentParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!(
                "gamma must be in [0, 1), got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Upper bound every Q entry stays below given rewards in [0, 1]:
    /// `max(1, 1/(1-gamma))`.
    pub fn q_bound(&self) -> f64 {
        (1.0 / (1.0 - self.gamma)).max(1.0)
    }
}

/// Exploration rule kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExplorationKind {
    /// With probability epsilon pick uniformly among all actions, otherwise
    /// pick the greedy action.
    EpsilonGreedy,
    /// Sample from softmax(Q / beta).
    Boltzmann,
}

/// Decaying exploration schedule.
///
/// The parameter after `t` decay steps is exactly `max(0.01, decay^t)`; it is
/// recomputed from the step count rather than by cumulative multiplication so
/// replays match the closed form bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSchedule {
    kind: ExplorationKind,
    decay: f64,
    steps: u64,
    param: f64,
}

impl ExplorationSchedule {
    pub fn new(kind: ExplorationKind, decay: f64) -> Result<Self> {
        if !(decay > 0.0 && decay <= 1.0) {
            return Err(Error::Config(format!(
                "exploration decay must be in (0, 1], got {decay}"
            )));
        }
        Ok(Self {
            kind,
            decay,
            steps: 0,
            param: EXPLORATION_INITIAL,
        })
    }

    pub fn kind(&self) -> ExplorationKind {
        self.kind
    }

    /// Current epsilon or temperature.
    pub fn param(&self) -> f64 {
        self.param
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    /// Number of decay steps applied so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Whether the parameter has reached the floor (absorbing).
    pub fn at_floor(&self) -> bool {
        self.param <= EXPLORATION_FLOOR
    }

    /// Apply one multiplicative decay step, clamped at the floor.
    pub fn decay_step(&mut self) {
        self.steps += 1;
        self.param = self.decay.powf(self.steps as f64).max(EXPLORATION_FLOOR);
    }
}

/// Index of the largest entry, ties broken toward the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Softmax probabilities of one Q-row at temperature `beta`, computed with
/// max-subtraction so large ratios cannot overflow.
pub fn boltzmann_probabilities(row: &[f64], beta: f64) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = row.iter().map(|&q| ((q - max) / beta).exp()).collect();
    let z: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / z).collect()
}

/// Tabular action-value function, stored row-major by state.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: Vec<f64>,
    num_states: usize,
    num_actions: usize,
}

impl QTable {
    /// Fresh table with entries drawn i.i.d. uniform on [0, 1), filled in
    /// state-major order (all actions of state 0, then state 1, ...).
    pub fn new_uniform<R: Rng>(num_states: usize, num_actions: usize, rng: &mut R) -> Result<Self> {
        if num_states == 0 || num_actions < 2 {
            return Err(Error::Config(format!(
                "Q-table needs >= 1 state and >= 2 actions, got {num_states} x {num_actions}"
            )));
        }
        let values = (0..num_states * num_actions)
            .map(|_| rng.gen::<f64>())
            .collect();
        Ok(Self {
            values,
            num_states,
            num_actions,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, state: usize) -> &[f64] {
        let start = state * self.num_actions;
        &self.values[start..start + self.num_actions]
    }

    fn row_mut(&mut self, state: usize) -> &mut [f64] {
        let start = state * self.num_actions;
        &mut self.values[start..start + self.num_actions]
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.num_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.num_actions + action] = value;
    }

    /// Largest entry in a state's row.
    pub fn row_max(&self, state: usize) -> f64 {
        self.row(state)
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action at `state` (lowest index wins ties).
    pub fn greedy_action(&self, state: usize) -> usize {
        argmax(self.row(state))
    }

    /// Pick a bid index at `state` under the schedule's exploration rule.
    ///
    /// Epsilon-greedy consumes one uniform draw, plus a second when the
    /// explore branch is taken; Boltzmann consumes exactly one.
    pub fn select_bid<R: Rng>(
        &self,
        state: usize,
        schedule: &ExplorationSchedule,
        rng: &mut R,
    ) -> Result<usize> {
        let row = self.row(state);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!(
                "non-finite Q value in state {state}"
            )));
        }
        match schedule.kind() {
            ExplorationKind::EpsilonGreedy => {
                let u: f64 = rng.gen();
                if u < schedule.param() {
                    let v: f64 = rng.gen();
                    Ok(((v * row.len() as f64) as usize).min(row.len() - 1))
                } else {
                    Ok(argmax(row))
                }
            }
            ExplorationKind::Boltzmann => {
                let beta = schedule.param();
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = row.iter().map(|&q| ((q - max) / beta).exp()).sum();
                let target = rng.gen::<f64>() * z;
                let mut cum = 0.0;
                for (i, &q) in row.iter().enumerate() {
                    cum += ((q - max) / beta).exp();
                    if target < cum {
                        return Ok(i);
                    }
                }
                Ok(row.len() - 1)
            }
        }
    }

    /// Standard one-cell Q update:
    /// `Q(s,a) <- (1-alpha) Q(s,a) + alpha (r + gamma max_a' Q(s',a'))`.
    pub fn update_async(
        &mut self,
        state: usize,
        action: usize,
        reward: f64,
        next_state: usize,
        params: &AgentParams,
    ) -> Result<()> {
        if !(0.0..=1.0).contains(&reward) {
            return Err(Error::Domain(format!(
                "reward must be in [0, 1], got {reward}"
            )));
        }
        // Read before writing so the max always comes from the pre-update table.
        let max_next = self.row_max(next_state);
        let cell = &mut self.row_mut(state)[action];
        *cell = (1.0 - params.alpha) * *cell + params.alpha * (reward + params.gamma * max_next);
        Ok(())
    }

    /// Synchronous update: apply the async rule to every action of `state`,
    /// using each action's counterfactual expected reward and counterfactual
    /// next state. All targets are formed from the pre-update table, so each
    /// cell ends up exactly where a lone async update would have put it.
    pub fn update_sync(
        &mut self,
        state: usize,
        counterfactuals: &[CounterfactualValue],
        params: &AgentParams,
    ) -> Result<()> {
        if counterfactuals.len() != self.num_actions {
            return Err(Error::Domain(format!(
                "expected {} counterfactual entries, got {}",
                self.num_actions,
                counterfactuals.len()
            )));
        }
        // Only this state's row is written; snapshot its max so target
        // lookups that point back at it see pre-update values.
        let own_max = self.row_max(state);
        for (action, cf) in counterfactuals.iter().enumerate() {
            let reward = cf.expected_reward;
            if !(0.0..=1.0).contains(&reward) {
                return Err(Error::Domain(format!(
                    "counterfactual reward must be in [0, 1], got {reward}"
                )));
            }
            let next_state = if params.feedback {
                cf.winning_bid_index
            } else {
                0
            };
            let max_next = if next_state == state {
                own_max
            } else {
                self.row_max(next_state)
            };
            let cell = &mut self.row_mut(state)[action];
            *cell =
                (1.0 - params.alpha) * *cell + params.alpha * (reward + params.gamma * max_next);
        }
        Ok(())
    }

    /// Dump the table as CSV with columns `state,action,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("state,action,value\n");
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                out.push_str(&format!("{s},{a},{}\n", self.get(s, a)));
            }
        }
        out
    }
}

/// One bidder: a Q-table plus its exploration schedule.
#[derive(Debug, Clone)]
pub struct Agent {
    pub q: QTable,
    pub schedule: ExplorationSchedule,
}

impl Agent {
    /// Initialize a bidder for a grid of `num_actions` levels. The state
    /// space has one state per grid level when feedback is on and a single
    /// state otherwise. Q entries are drawn from `rng` in state-major order.
    pub fn init<R: Rng>(
        params: &AgentParams,
        kind: ExplorationKind,
        decay: f64,
        num_actions: usize,
        rng: &mut R,
    ) -> Result<Self> {
        params.validate()?;
        let num_states = if params.feedback { num_actions } else { 1 };
        Ok(Self {
            q: QTable::new_uniform(num_states, num_actions, rng)?,
            schedule: ExplorationSchedule::new(kind, decay)?,
        })
    }
}
