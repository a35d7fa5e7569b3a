//! Transition engine: game setup, chance resolution, event recording,
//! observations and terminal verdicts on top of the rule interpreter.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::action::{Action, PlayerId};
use crate::board::{DeckKind, BOARD_SIZE};
use crate::rules::{self, Chance, Outcome, RuleError, RuleSet};
use crate::state::{
    Actor, Bank, Deck, EventRecord, GameState, PlayerState, SquareState, Stage, BANK_HOTELS, BANK_HOUSES,
    MAX_PLAYERS,
};

pub const DEFAULT_TURN_CAP: u32 = 1000;
pub const DEFAULT_STARTING_CASH: i64 = 1500;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("player count {0} outside 2..=4")]
    PlayerCount(usize),
    #[error(transparent)]
    Rule(#[from] RuleError),
}

/// New game with the default turn cap.
pub fn new_game(seed: u64, rules: &RuleSet, n_players: usize) -> Result<GameState, EngineError> {
    new_game_capped(seed, rules, n_players, DEFAULT_TURN_CAP)
}

pub fn new_game_capped(seed: u64, rules: &RuleSet, n_players: usize, turn_cap: u32) -> Result<GameState, EngineError> {
    if !(2..=MAX_PLAYERS).contains(&n_players) {
        return Err(EngineError::PlayerCount(n_players));
    }
    let cash = rules.param_value("starting_cash").unwrap_or(DEFAULT_STARTING_CASH);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let board = rules.board.clone();
    let decks = [DeckKind::Chance, DeckKind::CommunityChest].map(|k| {
        let mut order: SmallVec<[u8; 16]> = board.deck(k).iter().copied().collect();
        order.shuffle(&mut rng);
        Deck { order, next: 0 }
    });
    let mut players: SmallVec<[PlayerState; MAX_PLAYERS]> =
        (0..n_players as PlayerId).map(|p| PlayerState::new(p, cash)).collect();
    players[0].turns_started = 1;
    let mut state = GameState {
        board,
        players,
        squares: [SquareState::default(); BOARD_SIZE],
        bank: Bank { houses: BANK_HOUSES, hotels: BANK_HOTELS },
        decks,
        turn: 0,
        stage: Stage::PreRoll,
        pending: SmallVec::new(),
        auction: None,
        offer: None,
        loans: SmallVec::new(),
        doubles: 0,
        last_roll: [0, 0],
        offers_made: 0,
        player_turns: 0,
        turn_cap,
        time_step: 0,
        rng,
        history: Vec::new(),
        recording: true,
    };
    let mut setup = EventRecord::from_transition(0, Actor::Bank, None, &state, &state);
    setup.note = Some("setup".into());
    state.history.push(setup);
    Ok(state)
}

/// Legal actions under `rules`; empty for a terminal state or an unsolicited player.
pub fn legal_actions(rules: &RuleSet, state: &GameState, player: PlayerId) -> Vec<Action> {
    rules::legal_actions(rules, state, player)
}

/// Draws the chance outcome an action needs: two dice from the state's
/// stream, or the top card of the named deck.
pub fn draw_outcome(rules: &RuleSet, state: &mut GameState, action: &Action) -> Outcome {
    match rules.schema(&action.name).and_then(|s| s.chance()) {
        None => Outcome::None,
        Some(Chance::Dice) => {
            let a = state.rng.gen_range(1..=6u8);
            let b = state.rng.gen_range(1..=6u8);
            Outcome::Dice(a, b)
        }
        Some(Chance::Card(d)) => Outcome::Card(state.decks[d.index()].top()),
    }
}

/// Applies the move-boundary relations after an action that ended a move.
/// Returns true when they changed the state.
pub fn end_of_move(rules: &RuleSet, state: &mut GameState, turns_before: u32, mover: PlayerId) -> bool {
    state.player_turns > turns_before && !state.is_over() && rules::enforce_relations(rules, state, mover)
}

/// Applies `action` in place. Returns the events it produced (one for the
/// action, plus one for end-of-move enforcement when that changed anything);
/// they are appended to the history when the state is recording.
pub fn step(rules: &RuleSet, state: &mut GameState, action: &Action) -> Result<Vec<EventRecord>, RuleError> {
    if state.phase() == crate::state::Phase::Terminal {
        return Err(RuleError::Terminal);
    }
    let before = if state.recording { Some(state.detached()) } else { None };
    // A rejected action must not consume dice.
    let rng_backup = matches!(rules.schema(&action.name).and_then(|s| s.chance()), Some(Chance::Dice))
        .then(|| state.rng.clone());
    let outcome = draw_outcome(rules, state, action);
    let mover = state.turn;
    let turns_before = state.player_turns;
    if let Err(e) = rules::apply(rules, state, action, outcome) {
        if let Some(r) = rng_backup {
            state.rng = r;
        }
        return Err(e);
    }
    let mid = if state.recording { Some(state.detached()) } else { None };
    let enforced = end_of_move(rules, state, turns_before, mover);
    let Some(before) = before else { return Ok(Vec::new()) };
    let mid = mid.expect("recording");
    let mut events = Vec::with_capacity(2);
    let ts = state.time_step + 1;
    events.push(EventRecord::from_transition(ts, Actor::Player(action.actor), Some(action.clone()), &before, &mid));
    if enforced {
        let mut e = EventRecord::from_transition(ts + 1, Actor::Bank, None, &mid, state);
        e.note = Some("end_of_move".into());
        events.push(e);
    }
    state.time_step = events.last().map(|e| e.time_step).unwrap_or(ts);
    state.history.extend(events.iter().cloned());
    Ok(events)
}

/// Value-style application: the successor state and the events explaining it.
pub fn apply_action(
    rules: &RuleSet,
    state: &GameState,
    action: &Action,
) -> Result<(GameState, Vec<EventRecord>), RuleError> {
    let mut next = state.clone();
    let events = step(rules, &mut next, action)?;
    Ok((next, events))
}

/// Fast in-place step for simulators: no events, no history.
pub fn step_quiet(rules: &RuleSet, state: &mut GameState, action: &Action) -> Result<(), RuleError> {
    let outcome = draw_outcome(rules, state, action);
    let mover = state.turn;
    let turns_before = state.player_turns;
    rules::apply(rules, state, action, outcome)?;
    end_of_move(rules, state, turns_before, mover);
    Ok(())
}

/// Unchecked variant of [`step_quiet`] for actions known to be legal.
pub fn step_unchecked(rules: &RuleSet, state: &mut GameState, action: &Action) {
    let outcome = draw_outcome(rules, state, action);
    let mover = state.turn;
    let turns_before = state.player_turns;
    rules::apply_unchecked(rules, state, action, outcome);
    end_of_move(rules, state, turns_before, mover);
}

/// Rolls for the turn holder: `roll_dice` outside jail, `roll_in_jail` inside.
pub fn roll_and_move(rules: &RuleSet, state: &GameState) -> Result<(GameState, Vec<EventRecord>), RuleError> {
    let p = state.turn;
    let name = if state.player(p).in_jail { "roll_in_jail" } else { "roll_dice" };
    apply_action(rules, state, &Action::new(name, p))
}

pub use crate::rules::compute_rent;

/// What a player sees at a decision point.
#[derive(Clone, Debug)]
pub struct Observation {
    pub observer: PlayerId,
    /// Public view of the current state.
    pub snapshot: GameState,
    /// Events since the observer's previous decision point.
    pub events: Vec<EventRecord>,
    /// Actions the engine offers the observer now.
    pub menu: Vec<Action>,
}

/// Builds the observation for `player`, advancing their history cursor.
pub fn observe(rules: &RuleSet, state: &GameState, player: PlayerId, cursor: &mut usize) -> Observation {
    let start = (*cursor).min(state.history.len());
    let events = state.history[start..].to_vec();
    *cursor = state.history.len();
    Observation {
        observer: player,
        snapshot: state.public_view(),
        events,
        menu: legal_actions(rules, state, player),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub winner: PlayerId,
    /// Decided by net worth at the turn cap rather than by elimination.
    pub by_cap: bool,
}

/// Winner of a finished game; `None` while the game is running.
pub fn is_terminal(state: &GameState) -> Option<Verdict> {
    if state.solvent_count() <= 1 {
        let winner = state.solvent().next().unwrap_or(0);
        return Some(Verdict { winner, by_cap: false });
    }
    if state.player_turns >= state.turn_cap {
        let winner = state
            .solvent()
            .max_by_key(|&p| (state.net_worth(p), std::cmp::Reverse(p)))
            .unwrap_or(0);
        return Some(Verdict { winner, by_cap: true });
    }
    None
}

/// Re-executes a recorded game from its seed. The result is bit-identical to
/// the original when the rules and actions match.
pub fn replay(
    seed: u64,
    rules: &RuleSet,
    n_players: usize,
    turn_cap: u32,
    actions: &[Action],
) -> Result<GameState, EngineError> {
    let mut s = new_game_capped(seed, rules, n_players, turn_cap)?;
    for a in actions {
        step(rules, &mut s, a)?;
    }
    Ok(s)
}

/// Folds the recorded deltas over `initial`, reconstructing every public fluent.
pub fn fold_history(initial: &GameState, history: &[EventRecord]) -> Result<GameState, crate::state::ApplyChangeError> {
    let mut s = initial.detached();
    for e in history {
        e.apply_to(&mut s)?;
    }
    Ok(s)
}

/// Shared handle type for the rule set a game runs under.
pub type Rules = Arc<RuleSet>;
