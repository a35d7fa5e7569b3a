//! Truncated-rollout planner over the knowledge base's rules.
//!
//! Each offered action is scored by the mean of `n` rollouts: the action is
//! applied, then at most `k` further actions are simulated with the baseline
//! policy in every seat, and the tail is bootstrapped with [`evaluate`].
//! Rollouts run on the believed rules only, so a rule the knowledge base has
//! not learned never leaks into planning.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Action, PlayerId};
use crate::agents::{heuristic_choose, HeuristicPolicy};
use crate::board::{DeckKind, SquareKind, MAX_LEVEL};
use crate::engine::{self, is_terminal, Observation};
use crate::kb::KnowledgeBase;
use crate::rules::{self, RuleSet};
use crate::state::GameState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    /// Rollouts per candidate action.
    pub n: usize,
    /// Actions simulated after the candidate before bootstrapping.
    pub k: usize,
    /// Depth of the relaxed rollout inside the evaluation function.
    pub l: usize,
    pub gamma: f64,
    pub w_h: f64,
    pub w_a: f64,
    pub w_m: f64,
    pub seed: u64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig { n: 30, k: 4, l: 10, gamma: 1.0, w_h: 1.0, w_a: 0.001, w_m: 0.002, seed: 0 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error("no legal action at this decision point")]
    EmptyMenu,
    #[error("invalid planner config: {0}")]
    Config(String),
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let bad = |m: &str| Err(PlannerError::Config(m.into()));
        if self.n == 0 {
            return bad("n must be at least 1");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if [self.w_h, self.w_a, self.w_m].iter().any(|w| !(*w >= 0.0)) {
            return bad("weights must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalBreakdown {
    pub heuristic_return: f64,
    pub m_assets: f64,
    pub m_monopoly: f64,
    pub total: f64,
}

/// Cash plus property at price (half for mortgaged) plus buildings at cost,
/// net of loans.
pub fn m_assets(state: &GameState, p: PlayerId) -> i64 {
    let mut v = state.player(p).cash + state.loan_balance(p);
    for sq in state.owned_by(p) {
        let info = state.board.square(sq);
        let st = state.square(sq);
        v += if st.mortgaged { info.price() / 2 } else { info.price() };
        v += st.houses as i64 * info.house_cost();
    }
    v
}

/// Best full-development rent over colour groups, scaled by the fraction of
/// the group already owned.
pub fn m_monopoly(state: &GameState, p: PlayerId) -> f64 {
    let b = &state.board;
    b.groups
        .iter()
        .filter_map(|g| {
            let owned = g.squares.iter().filter(|&&s| state.owner(s) == Some(p)).count();
            if owned == 0 || g.squares.iter().any(|&s| b.square(s).kind != SquareKind::Property) {
                return None;
            }
            let max_rent = g.squares.iter().map(|&s| b.square(s).rents.get(MAX_LEVEL as usize).copied().unwrap_or(0)).max().unwrap_or(0);
            Some(max_rent as f64 * owned as f64 / g.squares.len() as f64)
        })
        .fold(0.0, f64::max)
}

fn is_relaxed_out(a: &Action, rules: &RuleSet) -> bool {
    matches!(&*a.name, "buy_property" | "bid" | "accept_trade")
        || rules.schema(&a.name).is_some_and(|s| s.has_tag("acquisition"))
}

/// Replaces the hidden parts of a public snapshot (card order, dice stream)
/// with a sample drawn from `rng`.
fn resample_hidden(state: &mut GameState, rng: &mut ChaCha8Rng) {
    state.rng = ChaCha8Rng::seed_from_u64(rng.gen());
    for kind in [DeckKind::Chance, DeckKind::CommunityChest] {
        let d = &mut state.decks[kind.index()];
        d.order.shuffle(rng);
        d.next = 0;
    }
}

fn policy_step(rules: &RuleSet, s: &mut GameState, policy: &HeuristicPolicy, relaxed: bool, trace: Option<&mut Vec<Action>>) -> bool {
    let Some(p) = s.solicited() else { return false };
    let mut menu = rules::legal_actions(rules, s, p);
    if relaxed {
        let kept: Vec<Action> = menu.iter().filter(|a| !is_relaxed_out(a, rules)).cloned().collect();
        if !kept.is_empty() {
            menu = kept;
        }
    }
    if menu.is_empty() {
        return false;
    }
    let a = &menu[heuristic_choose(policy, s, p, &menu)];
    if let Some(t) = trace {
        t.push(a.clone());
    }
    engine::step_unchecked(rules, s, a);
    true
}

/// One relaxed rollout of depth `l` in which nobody buys or trades; the
/// return is 1 for a win and 0 for a loss, and otherwise the player's share
/// of the solvent players' net worth, discounted by the steps taken.
pub fn relaxed_rollout(
    kb: &KnowledgeBase,
    state: &GameState,
    me: PlayerId,
    cfg: &RolloutConfig,
    trace: Option<&mut Vec<Action>>,
) -> f64 {
    let rules = kb.rules();
    let policy = HeuristicPolicy::default();
    let mut s = state.detached();
    let mut trace = trace;
    let mut depth = 0;
    while depth < cfg.l && is_terminal(&s).is_none() {
        if !policy_step(rules, &mut s, &policy, true, trace.as_deref_mut()) {
            break;
        }
        depth += 1;
    }
    let disc = cfg.gamma.powi(depth as i32);
    if let Some(v) = is_terminal(&s) {
        return disc * if v.winner == me && !s.player(me).bankrupt { 1.0 } else { 0.0 };
    }
    if s.player(me).bankrupt {
        return 0.0;
    }
    let total: i64 = s.solvent().map(|q| s.net_worth(q).max(0)).sum();
    if total <= 0 {
        return 0.0;
    }
    disc * s.net_worth(me).max(0) as f64 / total as f64
}

/// State value for `me`: zero when lost, otherwise the weighted sum of the
/// relaxed-rollout return and the two domain terms.
pub fn evaluate(kb: &KnowledgeBase, state: &GameState, me: PlayerId, cfg: &RolloutConfig) -> EvalBreakdown {
    if state.player(me).bankrupt || is_terminal(state).is_some_and(|v| v.winner != me) {
        return EvalBreakdown::default();
    }
    let heuristic_return = relaxed_rollout(kb, state, me, cfg, None);
    let m_assets = m_assets(state, me) as f64;
    let m_monopoly = m_monopoly(state, me);
    EvalBreakdown {
        heuristic_return,
        m_assets,
        m_monopoly,
        total: cfg.w_h * heuristic_return + cfg.w_a * m_assets + cfg.w_m * m_monopoly,
    }
}

/// Applies `first` and up to `k` policy actions under the believed rules,
/// then bootstraps: γ^j · evaluate(state_j), where j is the number of
/// actions after `first`. A terminal loss is worth 0.
pub fn rollout(
    kb: &KnowledgeBase,
    state: &GameState,
    first: &Action,
    me: PlayerId,
    cfg: &RolloutConfig,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let rules = kb.rules();
    let policy = HeuristicPolicy::default();
    let mut s = state.detached();
    resample_hidden(&mut s, rng);
    engine::step_unchecked(rules, &mut s, first);
    let mut j = 0;
    while j < cfg.k && is_terminal(&s).is_none() {
        if !policy_step(rules, &mut s, &policy, false, None) {
            break;
        }
        j += 1;
    }
    cfg.gamma.powi(j as i32) * evaluate(kb, &s, me, cfg).total
}

/// The splitmix64 finalizer, used to derive independent seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mean rollout value of every offered action the knowledge base knows.
/// Rollout `r` uses the same random stream for every candidate.
pub fn action_values(kb: &KnowledgeBase, obs: &Observation, cfg: &RolloutConfig) -> Vec<Option<f64>> {
    let me = obs.observer;
    let base = splitmix64(cfg.seed ^ splitmix64(obs.snapshot.time_step) ^ splitmix64(me as u64 + 1));
    obs.menu
        .iter()
        .map(|a| {
            if !kb.knows(&a.name) {
                return None;
            }
            let sum: f64 = (0..cfg.n)
                .map(|r| {
                    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(base ^ r as u64));
                    rollout(kb, &obs.snapshot, a, me, cfg, &mut rng)
                })
                .sum();
            Some(sum / cfg.n as f64)
        })
        .collect()
}

/// The offered action with the best mean rollout value; ties go to the
/// earlier action in menu order. Actions the knowledge base cannot simulate
/// are skipped unless nothing else is offered, in which case the first
/// offered action is taken.
pub fn choose_action(kb: &KnowledgeBase, obs: &Observation, cfg: &RolloutConfig) -> Result<Action, PlannerError> {
    match obs.menu.len() {
        0 => return Err(PlannerError::EmptyMenu),
        1 => return Ok(obs.menu[0].clone()),
        _ => {}
    }
    let values = action_values(kb, obs, cfg);
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    Ok(obs.menu[best.map(|(i, _)| i).unwrap_or(0)].clone())
}
