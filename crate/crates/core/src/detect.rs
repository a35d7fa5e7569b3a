//! Expectation/observation comparison at decision points.
//!
//! The interval between two decision points of one observer is reconstructed
//! event by event from the previous snapshot. Each step is checked against
//! the knowledge base in a fixed order:
//!
//! 1. a no-action event that the believed relations do not predict → relation
//! 2. an unknown action label → interaction when it touches two or more
//!    players, action otherwise
//! 3. a known action whose preconditions are false in the pre-state → action
//! 4. a known action whose observed successor is not admissible → interaction
//!    for a multi-player event of a schema in the interaction set, action otherwise
//! 5. an end-of-move enforcement the knowledge base expects but the engine
//!    did not perform, or a newly violated static relation → relation
//!
//! and finally the observer's menu: an unknown offered label (interaction when
//! it takes a player argument), a believed-legal action not offered, or an
//! offered known action believed illegal → action. The category of a result
//! is that of its first finding.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::action::{Action, Arg, PlayerId};
use crate::engine::Observation;
use crate::kb::{ExpectedState, KnowledgeBase};
use crate::rules::Outcome;
use crate::state::{diff, same_public, EventRecord, Fluent, GameState, Value};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Iota {
    #[default]
    None,
    Action,
    Interaction,
    Relation,
}

impl Iota {
    pub fn name(self) -> &'static str {
        match self {
            Iota::None => "none",
            Iota::Action => "action",
            Iota::Interaction => "interaction",
            Iota::Relation => "relation",
        }
    }
}

impl fmt::Display for Iota {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub fluent: Fluent,
    pub predicted: Value,
    pub observed: Value,
    pub time_step: u64,
}

impl fmt::Display for Discrepancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} -> {}", self.fluent, self.predicted, self.observed)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    UnexpectedEnforcement { time_step: u64, discrepancies: Vec<Discrepancy> },
    UnknownLabel { time_step: u64, action: Action, players: usize },
    PreconditionViolated { time_step: u64, action: Action, failed: Vec<String> },
    EffectMismatch { time_step: u64, action: Action, discrepancies: Vec<Discrepancy> },
    MissingEnforcement { time_step: u64, mover: PlayerId, discrepancies: Vec<Discrepancy> },
    RelationViolated { time_step: u64, relations: Vec<String> },
    SnapshotMismatch { discrepancies: Vec<Discrepancy> },
    MenuUnknown { action: Action },
    MenuMissing { action: Action },
    MenuUnexpected { action: Action },
}

impl Finding {
    pub fn iota(&self, kb: &KnowledgeBase) -> Iota {
        match self {
            Finding::UnexpectedEnforcement { .. }
            | Finding::MissingEnforcement { .. }
            | Finding::RelationViolated { .. }
            | Finding::SnapshotMismatch { .. } => Iota::Relation,
            Finding::UnknownLabel { players, .. } => {
                if *players >= 2 {
                    Iota::Interaction
                } else {
                    Iota::Action
                }
            }
            Finding::EffectMismatch { action, discrepancies, .. } => {
                let multi = involved(action, discrepancies) >= 2;
                if multi && kb.interaction_set().contains(&*action.name) {
                    Iota::Interaction
                } else {
                    Iota::Action
                }
            }
            Finding::MenuUnknown { action } => {
                if action.args.iter().any(|a| matches!(a, Arg::Player(_))) {
                    Iota::Interaction
                } else {
                    Iota::Action
                }
            }
            Finding::PreconditionViolated { .. } | Finding::MenuMissing { .. } | Finding::MenuUnexpected { .. } => {
                Iota::Action
            }
        }
    }

    /// The action label the finding is about, if any.
    pub fn label(&self) -> Option<&str> {
        match self {
            Finding::UnknownLabel { action, .. }
            | Finding::PreconditionViolated { action, .. }
            | Finding::EffectMismatch { action, .. }
            | Finding::MenuUnknown { action }
            | Finding::MenuMissing { action }
            | Finding::MenuUnexpected { action } => Some(&action.name),
            _ => None,
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |d: &[Discrepancy]| d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ");
        match self {
            Finding::UnexpectedEnforcement { discrepancies, .. } => {
                write!(f, "unexplained rule enforcement: {}", list(discrepancies))
            }
            Finding::UnknownLabel { action, .. } => write!(f, "unknown action {action}"),
            Finding::PreconditionViolated { action, failed, .. } => {
                write!(f, "{action} executed although {} failed", failed.join(", "))
            }
            Finding::EffectMismatch { action, discrepancies, .. } => {
                write!(f, "{action} effect mismatch: {}", list(discrepancies))
            }
            Finding::MissingEnforcement { mover, discrepancies, .. } => {
                write!(f, "expected enforcement after move of {} missing: {}", crate::action::player_name(*mover), list(discrepancies))
            }
            Finding::RelationViolated { relations, .. } => write!(f, "relations violated: {}", relations.join(", ")),
            Finding::SnapshotMismatch { discrepancies } => write!(f, "snapshot mismatch: {}", list(discrepancies)),
            Finding::MenuUnknown { action } => write!(f, "unknown action {action} offered"),
            Finding::MenuMissing { action } => write!(f, "{action} believed legal but not offered"),
            Finding::MenuUnexpected { action } => write!(f, "{action} offered but believed illegal"),
        }
    }
}

fn involved(action: &Action, d: &[Discrepancy]) -> usize {
    let mut v: Vec<PlayerId> = d.iter().filter(|x| !bookkeeping(x.fluent)).filter_map(|x| x.fluent.subject()).collect();
    v.push(action.actor);
    v.extend(action.args.iter().filter_map(|a| match a {
        Arg::Player(p) => Some(*p),
        _ => None,
    }));
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// Turn hand-over touches the next player's counters without involving them.
fn bookkeeping(f: Fluent) -> bool {
    matches!(f, Fluent::TurnsStarted(_))
}

fn touched_players(e: &EventRecord) -> usize {
    let mut v: Vec<PlayerId> = e.cash_deltas.iter().map(|(p, _)| *p).collect();
    v.extend(e.state_deltas.iter().filter(|c| !bookkeeping(c.fluent)).filter_map(|c| c.fluent.subject()));
    if let crate::state::Actor::Player(p) = e.actor {
        v.push(p);
    }
    if let Some(a) = &e.action {
        v.extend(a.args.iter().filter_map(|x| match x {
            Arg::Player(p) => Some(*p),
            _ => None,
        }));
    }
    v.sort_unstable();
    v.dedup();
    v.len()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub d: bool,
    pub iota: Iota,
    pub evidence: Vec<Finding>,
    pub time_step: u64,
}

/// One reconstructed action step: public pre-state, the event and the
/// observed successor before any end-of-move enforcement.
#[derive(Clone, Debug)]
pub struct ObservedStep {
    pub pre: GameState,
    pub event: EventRecord,
    pub post: GameState,
}

/// A move boundary: the state after the move-ending action, its mover and
/// the state after enforcement (equal to `state` when nothing happened).
#[derive(Clone, Debug)]
pub struct MoveBoundary {
    pub state: GameState,
    pub mover: PlayerId,
    pub after: GameState,
}

#[derive(Clone, Debug, Default)]
pub struct Detection {
    pub result: DetectionResult,
    pub steps: Vec<ObservedStep>,
    pub boundaries: Vec<MoveBoundary>,
    /// Reconstructed public state at the decision point.
    pub state: Option<GameState>,
}

fn discrepancies(changes: Vec<crate::state::FluentChange>, time_step: u64) -> Vec<Discrepancy> {
    changes
        .into_iter()
        .map(|c| Discrepancy { fluent: c.fluent, predicted: c.before, observed: c.after, time_step })
        .collect()
}

/// Fluent-by-fluent differences between an expectation and an observed
/// state; empty when some admissible outcome matches.
pub fn expected_vs_observed(expected: &ExpectedState, observed: &GameState) -> Vec<Discrepancy> {
    if expected.admits(observed) {
        return Vec::new();
    }
    match expected.closest(observed) {
        Some((_, d)) => discrepancies(d, observed.time_step),
        None => Vec::new(),
    }
}

/// Whether `mover` holds a monopolized group with uneven improvement.
pub fn has_uneven_monopoly(state: &GameState, mover: PlayerId) -> bool {
    state.monopolies(mover).any(|g| {
        let lo = state.group_levels(g).min().unwrap_or(0);
        let hi = state.group_levels(g).max().unwrap_or(0);
        lo != hi
    })
}

/// Admissible successors of an observed action, dice outcomes matching the
/// observed roll first.
fn successors(kb: &KnowledgeBase, pre: &GameState, action: &Action, post: &GameState) -> ExpectedState {
    let mut outcomes = crate::rules::outcomes(kb.rules(), pre, action);
    let [a, b] = post.last_roll;
    if let Some(i) = outcomes.iter().position(|o| *o == Outcome::Dice(a, b)) {
        let o = outcomes[i];
        let first = kb.transition(pre, action, o, false);
        if same_public(&first, post) {
            return ExpectedState { outcomes: vec![(o, first)] };
        }
        outcomes.remove(i);
        let mut all = vec![(o, first)];
        all.extend(outcomes.into_iter().map(|o| (o, kb.transition(pre, action, o, false))));
        return ExpectedState { outcomes: all };
    }
    let mut all = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let s = kb.transition(pre, action, o, false);
        let hit = same_public(&s, post);
        all.push((o, s));
        if hit {
            return ExpectedState { outcomes: vec![all.pop().expect("just pushed")] };
        }
    }
    ExpectedState { outcomes: all }
}

/// Compares the knowledge base's expectations with what happened between
/// the observer's previous decision point (`prev`) and `obs`.
pub fn detect(kb: &KnowledgeBase, prev: &GameState, obs: &Observation) -> Detection {
    let mut cur = prev.detached();
    let mut findings = Vec::new();
    let mut steps = Vec::new();
    let mut boundaries = Vec::new();
    // Believed enforcement still to be matched by a no-action event.
    let mut expected: Option<(PlayerId, GameState, GameState)> = None;
    let mut last_ts = prev.time_step;

    for e in &obs.events {
        if e.note.as_deref() == Some("setup") {
            continue;
        }
        let mut post = cur.clone();
        if e.apply_to(&mut post).is_err() {
            findings.push(Finding::SnapshotMismatch { discrepancies: Vec::new() });
            continue;
        }
        last_ts = e.time_step;
        match &e.action {
            None => {
                let (mover, before) = match expected.take() {
                    Some((m, b, exp)) => {
                        if !same_public(&exp, &post) {
                            findings.push(Finding::UnexpectedEnforcement {
                                time_step: e.time_step,
                                discrepancies: discrepancies(diff(&exp, &post), e.time_step),
                            });
                        }
                        (m, b)
                    }
                    None => {
                        findings.push(Finding::UnexpectedEnforcement {
                            time_step: e.time_step,
                            discrepancies: discrepancies(diff(&cur, &post), e.time_step),
                        });
                        (boundaries.last().map(|b: &MoveBoundary| b.mover).unwrap_or(cur.turn), cur.clone())
                    }
                };
                match boundaries.last_mut() {
                    Some(b) if same_public(&b.state, &before) => b.after = post.clone(),
                    _ => boundaries.push(MoveBoundary { state: before, mover, after: post.clone() }),
                }
            }
            Some(a) => {
                if let Some((m, b, exp)) = expected.take() {
                    findings.push(Finding::MissingEnforcement {
                        time_step: e.time_step,
                        mover: m,
                        discrepancies: discrepancies(diff(&exp, &b), e.time_step),
                    });
                }
                if !kb.knows(&a.name) {
                    findings.push(Finding::UnknownLabel {
                        time_step: e.time_step,
                        action: a.clone(),
                        players: touched_players(e),
                    });
                } else {
                    match kb.preconditions_satisfied(&cur, a) {
                        Ok(c) if !c.satisfied => findings.push(Finding::PreconditionViolated {
                            time_step: e.time_step,
                            action: a.clone(),
                            failed: c.failed,
                        }),
                        Err(err) => findings.push(Finding::PreconditionViolated {
                            time_step: e.time_step,
                            action: a.clone(),
                            failed: vec![err.to_string()],
                        }),
                        Ok(_) => {
                            let exp = successors(kb, &cur, a, &post);
                            let d = expected_vs_observed(&exp, &post);
                            if !d.is_empty() {
                                let d = d.into_iter().map(|mut x| {
                                    x.time_step = e.time_step;
                                    x
                                });
                                findings.push(Finding::EffectMismatch {
                                    time_step: e.time_step,
                                    action: a.clone(),
                                    discrepancies: d.collect(),
                                });
                            }
                        }
                    }
                }
                let before_violations = kb.check_relations(&cur, None);
                let now = kb.check_relations(&post, None);
                let fresh: Vec<String> = now.into_iter().filter(|v| !before_violations.contains(v)).collect();
                if !fresh.is_empty() {
                    findings.push(Finding::RelationViolated { time_step: e.time_step, relations: fresh });
                }
                if post.player_turns > cur.player_turns && !post.is_over() {
                    let mover = cur.turn;
                    if let Some(exp) = kb.expected_enforcement(&post, mover) {
                        expected = Some((mover, post.clone(), exp));
                    }
                    if has_uneven_monopoly(&post, mover) {
                        boundaries.push(MoveBoundary { state: post.clone(), mover, after: post.clone() });
                    }
                }
                steps.push(ObservedStep { pre: std::mem::replace(&mut cur, post.clone()), event: e.clone(), post });
                continue;
            }
        }
        cur = post;
    }
    if let Some((m, b, exp)) = expected.take() {
        findings.push(Finding::MissingEnforcement {
            time_step: last_ts,
            mover: m,
            discrepancies: discrepancies(diff(&exp, &b), last_ts),
        });
    }
    if !same_public(&cur, &obs.snapshot) {
        findings.push(Finding::SnapshotMismatch {
            discrepancies: discrepancies(diff(&cur, &obs.snapshot), obs.snapshot.time_step),
        });
    }
    if !obs.menu.is_empty() {
        let believed = kb.legal_actions(&obs.snapshot, obs.observer);
        for a in &obs.menu {
            if !kb.knows(&a.name) {
                findings.push(Finding::MenuUnknown { action: a.clone() });
            }
        }
        for a in &believed {
            if !obs.menu.contains(a) {
                findings.push(Finding::MenuMissing { action: a.clone() });
            }
        }
        for a in &obs.menu {
            if kb.knows(&a.name) && !believed.contains(a) {
                findings.push(Finding::MenuUnexpected { action: a.clone() });
            }
        }
    }
    let iota = findings.first().map(|f| f.iota(kb)).unwrap_or_default();
    Detection {
        result: DetectionResult { d: !findings.is_empty(), iota, evidence: findings, time_step: obs.snapshot.time_step },
        steps,
        boundaries,
        state: Some(cur),
    }
}

/// Tournament-level report of one detection.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    /// 1-based game index.
    pub game: u32,
    pub time_step: u64,
    pub iota: Iota,
    pub summary: String,
}

/// Detection flags persisted across the games of a tournament: the first
/// report of each game, and the first of the tournament.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoveltyFlags {
    pub reports: Vec<Report>,
}

impl NoveltyFlags {
    /// Records a detection; returns true when it is the first in its game.
    pub fn carry_forward(&mut self, game: u32, result: &DetectionResult) -> bool {
        if !result.d || self.reports.iter().any(|r| r.game == game) {
            return false;
        }
        let summary = result.evidence.first().map(|f| f.to_string()).unwrap_or_default();
        self.reports.push(Report { game, time_step: result.time_step, iota: result.iota, summary });
        true
    }

    pub fn first(&self) -> Option<&Report> {
        self.reports.first()
    }

    pub fn detected(&self) -> bool {
        !self.reports.is_empty()
    }

    /// Whether a novelty flag is present going into `game`.
    pub fn flagged_before(&self, game: u32) -> bool {
        self.reports.iter().any(|r| r.game < game)
    }
}
