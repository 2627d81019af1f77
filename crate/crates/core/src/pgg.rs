//! Iterated public goods game between neuron-like agents.
//!
//! Each agent either composes (pays `c`, contributes to a shared benefit
//! `κ·k/N`) or takes a detour. Agents keep a value estimate per action,
//! choose by temperature softmax over those estimates, and learn from
//! payoffs with an exponential moving average. Two feedback interventions
//! mirror the regularizers: classical dropout forces agents to detour for a
//! round; gradient dropout suspends an agent's learning for a round.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{usage, Result};
use crate::plot::{self, Series};
use crate::stochastics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Compose,
    Detour,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GameMode {
    Baseline,
    /// Each round an agent stays active with probability `pd`.
    ClassicalDropout { pd: f64 },
    /// Each round an agent learns from its payoff with probability `p`.
    GradientDropout { p: f64 },
}

impl FromStr for GameMode {
    type Err = crate::Error;

    /// Mode name only; the probability is filled in as 1 and set separately.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(Self::Baseline),
            "classical-dropout" | "classical" => Ok(Self::ClassicalDropout { pd: 1.0 }),
            "gradient-dropout" | "gradient" => Ok(Self::GradientDropout { p: 1.0 }),
            other => Err(usage(format!(
                "unknown mode '{other}' (expected baseline, classical-dropout or gradient-dropout)"
            ))),
        }
    }
}

impl fmt::Display for GameMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GameMode::Baseline => f.write_str("baseline"),
            GameMode::ClassicalDropout { pd } => write!(f, "classical-dropout(pd={pd})"),
            GameMode::GradientDropout { p } => write!(f, "gradient-dropout(p={p})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenefitMode {
    /// Everyone receives `κ·k/N`; composers also pay `c`.
    Shared,
    /// Only composers receive `κ·k/N − c`; detours earn 0.
    Contingent,
}

impl FromStr for BenefitMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "shared" => Ok(Self::Shared),
            "contingent" => Ok(Self::Contingent),
            other => Err(usage(format!("unknown benefit mode '{other}' (expected shared or contingent)"))),
        }
    }
}

impl fmt::Display for BenefitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenefitMode::Shared => "shared",
            BenefitMode::Contingent => "contingent",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig {
    pub num_players: usize,
    pub benefit_factor: f64,
    pub compose_cost: f64,
    pub exploration_temp: f64,
    pub mode: GameMode,
    pub benefit_mode: BenefitMode,
    pub q_learning_rate: f64,
    pub rounds: usize,
    pub initial_compose_fraction: f64,
    pub seed: u64,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            num_players: 200,
            benefit_factor: 2.0,
            compose_cost: 0.5,
            exploration_temp: 0.1,
            mode: GameMode::Baseline,
            benefit_mode: BenefitMode::Shared,
            q_learning_rate: 0.1,
            rounds: 1000,
            initial_compose_fraction: 0.5,
            seed: 0,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_players < 2 {
            return Err(usage("the game needs at least two players"));
        }
        if !(self.benefit_factor > 0.0 && self.benefit_factor.is_finite()) {
            return Err(usage(format!("benefit factor {} must be positive", self.benefit_factor)));
        }
        if !(self.compose_cost >= 0.0 && self.compose_cost.is_finite()) {
            return Err(usage(format!("compose cost {} must be nonnegative", self.compose_cost)));
        }
        if !(self.exploration_temp >= 0.0) {
            return Err(usage(format!("temperature {} must be nonnegative", self.exploration_temp)));
        }
        if !(self.q_learning_rate > 0.0 && self.q_learning_rate <= 1.0) {
            return Err(usage(format!("learning rate {} must lie in (0, 1]", self.q_learning_rate)));
        }
        if !(0.0..=1.0).contains(&self.initial_compose_fraction) {
            return Err(usage("initial compose fraction must lie in [0, 1]"));
        }
        match self.mode {
            GameMode::ClassicalDropout { pd: q } | GameMode::GradientDropout { p: q } if !(0.0..=1.0).contains(&q) => {
                Err(usage(format!("mode probability {q} is outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub q_compose: f64,
    pub q_detour: f64,
    /// The action the agent plays next round.
    pub current_action: Action,
}

impl AgentState {
    fn q_mut(&mut self, a: Action) -> &mut f64 {
        match a {
            Action::Compose => &mut self.q_compose,
            Action::Detour => &mut self.q_detour,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub composition: Vec<f64>,
    pub mean_payoff: Vec<f64>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.composition.len()
    }

    pub fn is_empty(&self) -> bool {
        self.composition.is_empty()
    }

    /// Mean composition over the last `n` rounds.
    pub fn tail_mean(&self, n: usize) -> f64 {
        let tail = &self.composition[self.len().saturating_sub(n)..];
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,composition_level,mean_payoff\n");
        for (t, (c, u)) in self.composition.iter().zip(&self.mean_payoff).enumerate() {
            let _ = writeln!(out, "{},{c},{u}", t + 1);
        }
        out
    }
}

fn payoff_at(action: Action, composed_fraction: f64, cfg: &GameConfig) -> f64 {
    let benefit = cfg.benefit_factor * composed_fraction;
    match (cfg.benefit_mode, action) {
        (BenefitMode::Shared, Action::Compose) => benefit - cfg.compose_cost,
        (BenefitMode::Shared, Action::Detour) => benefit,
        (BenefitMode::Contingent, Action::Compose) => benefit - cfg.compose_cost,
        (BenefitMode::Contingent, Action::Detour) => 0.0,
    }
}

/// Payoff of `action` when `k` of the `N` players compose.
pub fn payoff(action: Action, k: usize, cfg: &GameConfig) -> f64 {
    payoff_at(action, k as f64 / cfg.num_players as f64, cfg)
}

/// Probability of choosing Compose. At `τ = 0` the choice is the argmax with
/// ties split evenly.
pub fn compose_probability(q_compose: f64, q_detour: f64, tau: f64) -> f64 {
    if tau == 0.0 {
        return match q_compose.partial_cmp(&q_detour) {
            Some(std::cmp::Ordering::Greater) => 1.0,
            Some(std::cmp::Ordering::Less) => 0.0,
            _ => 0.5,
        };
    }
    let max = q_compose.max(q_detour);
    let ec = ((q_compose - max) / tau).exp();
    let ed = ((q_detour - max) / tau).exp();
    ec / (ec + ed)
}

/// Draws an action from the softmax over the two values.
pub fn softmax_choice(q_compose: f64, q_detour: f64, tau: f64, rng: &mut Rng) -> Action {
    if rng.unit() < compose_probability(q_compose, q_detour, tau) {
        Action::Compose
    } else {
        Action::Detour
    }
}

/// `c/κ` clamped to `[0, 1]`: the composition level above which composing
/// beats detouring under contingent benefits.
pub fn tipping_point(cfg: &GameConfig) -> f64 {
    (cfg.compose_cost / cfg.benefit_factor).clamp(0.0, 1.0)
}

/// Independent streams for the three kinds of draws, so that a mode which
/// never triggers (e.g. gradient dropout at p = 1) leaves the others intact.
#[derive(Debug, Clone)]
pub struct GameRng {
    choice: Rng,
    feedback: Rng,
    deactivation: Rng,
}

impl GameRng {
    pub fn new(seed: u64) -> Self {
        let root = Rng::new(seed);
        Self {
            choice: root.substream("choice"),
            feedback: root.substream("feedback"),
            deactivation: root.substream("deactivation"),
        }
    }
}

pub fn initial_agents(cfg: &GameConfig) -> Vec<AgentState> {
    let composers = (cfg.initial_compose_fraction * cfg.num_players as f64).floor() as usize;
    (0..cfg.num_players)
        .map(|i| AgentState {
            q_compose: 0.0,
            q_detour: 0.0,
            current_action: if i < composers { Action::Compose } else { Action::Detour },
        })
        .collect()
}

/// One round: play the current actions (deactivated agents detour), pay
/// everyone, update value estimates, then pick next round's actions.
///
/// An updating agent moves the value of the action it played toward its
/// payoff and the value of the other action toward what that action would
/// have paid given everyone else's play. Returns `(C_t, mean payoff)`.
pub fn step(agents: &mut [AgentState], cfg: &GameConfig, rng: &mut GameRng) -> (f64, f64) {
    let n = agents.len();
    let active: Vec<bool> = agents
        .iter()
        .map(|_| match cfg.mode {
            GameMode::ClassicalDropout { pd } => rng.deactivation.bernoulli(pd),
            _ => true,
        })
        .collect();
    let played: Vec<Action> = agents
        .iter()
        .zip(&active)
        .map(|(a, &on)| if on { a.current_action } else { Action::Detour })
        .collect();
    let k = played.iter().filter(|&&a| a == Action::Compose).count();
    let payoffs: Vec<f64> = played.iter().map(|&a| payoff(a, k, cfg)).collect();
    let lambda = cfg.q_learning_rate;

    for (i, agent) in agents.iter_mut().enumerate() {
        let learns = match cfg.mode {
            GameMode::GradientDropout { p } => rng.feedback.bernoulli(p),
            _ => true,
        };
        if active[i] && learns {
            let (other, k_other) = match played[i] {
                Action::Compose => (Action::Detour, k - 1),
                Action::Detour => (Action::Compose, k + 1),
            };
            let q = agent.q_mut(played[i]);
            *q = (1.0 - lambda) * *q + lambda * payoffs[i];
            let counterfactual = payoff(other, k_other, cfg);
            let q = agent.q_mut(other);
            *q = (1.0 - lambda) * *q + lambda * counterfactual;
        }
        let choice = softmax_choice(agent.q_compose, agent.q_detour, cfg.exploration_temp, &mut rng.choice);
        // a suspended learner keeps its strategy
        if learns {
            agent.current_action = choice;
        }
    }
    let mean_payoff = payoffs.iter().sum::<f64>() / n as f64;
    (k as f64 / n as f64, mean_payoff)
}

pub fn run(cfg: &GameConfig) -> Result<Trace> {
    cfg.validate()?;
    let mut agents = initial_agents(cfg);
    let mut rng = GameRng::new(cfg.seed);
    let mut trace = Trace {
        composition: Vec::with_capacity(cfg.rounds),
        mean_payoff: Vec::with_capacity(cfg.rounds),
    };
    for _ in 0..cfg.rounds {
        let (c, u) = step(&mut agents, cfg, &mut rng);
        trace.composition.push(c);
        trace.mean_payoff.push(u);
    }
    Ok(trace)
}

/// Expected composition level under population-average dynamics: both action
/// values move toward their expected payoffs at the current composition
/// level (at rate `λ·p` under gradient dropout) and the next level is the
/// softmax probability of composing.
pub fn mean_field_oracle(cfg: &GameConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let rate = match cfg.mode {
        GameMode::Baseline => cfg.q_learning_rate,
        GameMode::GradientDropout { p } => cfg.q_learning_rate * p,
        GameMode::ClassicalDropout { .. } => {
            return Err(usage("the mean-field oracle covers baseline and gradient-dropout modes only"))
        }
    };
    let composers = (cfg.initial_compose_fraction * cfg.num_players as f64).floor();
    let mut level = composers / cfg.num_players as f64;
    let (mut q_c, mut q_d) = (0.0, 0.0);
    let mut out = Vec::with_capacity(cfg.rounds);
    for _ in 0..cfg.rounds {
        out.push(level);
        q_c = (1.0 - rate) * q_c + rate * payoff_at(Action::Compose, level, cfg);
        q_d = (1.0 - rate) * q_d + rate * payoff_at(Action::Detour, level, cfg);
        level = compose_probability(q_c, q_d, cfg.exploration_temp);
    }
    Ok(out)
}

/// Composition level over rounds, one series per labelled trace.
pub fn comparison_svg(traces: &[(String, Trace)]) -> String {
    let series: Vec<Series> = traces
        .iter()
        .map(|(label, t)| Series {
            label: label.clone(),
            points: t.composition.iter().enumerate().map(|(i, &c)| ((i + 1) as f64, c)).collect(),
        })
        .collect();
    plot::line_chart("Composition level", "round", "composition level", &series)
}
