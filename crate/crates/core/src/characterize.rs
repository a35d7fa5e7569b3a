//! Characterization: from a detected discrepancy to knowledge-base edits.
//!
//! Each focus (a schema's parameters, one extra effect slot, an unknown
//! schema, the move-boundary relation) defines a finite hypothesis space.
//! Hypotheses are replayed against a window of observed evidence and only a
//! unique survivor is published; several survivors leave the knowledge base
//! unchanged.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Action, Arg, ArgKind, PlayerId};
use crate::detect::{Detection, DetectionResult, Finding, MoveBoundary, ObservedStep};
use crate::engine::Observation;
use crate::kb::KnowledgeBase;
use crate::rules::{
    self, ActionSchema, Atom, Builtin, Cmp, Counter, Effect, Expr, Flag, GroupScope, Mutation, Op, Outcome,
    ParamDecl, ParamType, Pred, Relation, Role, RuleSet, Term, Var,
};
use crate::state::{diff, same_public, Fluent, GameState, Offer, Phase, Value};

/// Per-label cap on stored action steps.
pub const STEP_WINDOW: usize = 48;
/// Per-label cap on steps the knowledge base mispredicted. Kept apart so
/// that rare informative steps outlive routine ones.
pub const SURPRISE_WINDOW: usize = 16;
pub const BOUNDARY_WINDOW: usize = 64;
pub const MENU_WINDOW: usize = 128;
/// Largest percentage tried for proportional effect amounts.
pub const MAX_PCT: i64 = 500;
/// Largest effect subset tried when inducing a schema.
pub const MAX_EFFECTS: usize = 3;

#[derive(Clone, Debug)]
pub struct MenuObs {
    pub state: GameState,
    pub player: PlayerId,
    pub menu: Vec<Action>,
}

/// Sliding window of observations the characterizer replays hypotheses on.
/// Items carry the 1-based game they came from.
#[derive(Clone, Debug, Default)]
pub struct Evidence {
    steps: BTreeMap<String, VecDeque<(u32, ObservedStep)>>,
    surprises: BTreeMap<String, VecDeque<(u32, ObservedStep)>>,
    boundaries: VecDeque<(u32, MoveBoundary)>,
    menus: VecDeque<(u32, MenuObs)>,
    counts: BTreeMap<String, u64>,
    boundary_count: u64,
    menu_count: u64,
}

fn push_capped<T>(q: &mut VecDeque<T>, item: T, cap: usize) {
    if q.len() == cap {
        q.pop_front();
    }
    q.push_back(item);
}

impl Evidence {
    /// Stores what a detection pass reconstructed. Menus are kept when they
    /// offer labels outside `classic` or when the menu itself was flagged.
    pub fn record(&mut self, game: u32, det: &Detection, obs: &Observation, classic: &RuleSet) {
        let surprising: BTreeSet<u64> = det
            .result
            .evidence
            .iter()
            .filter_map(|f| match f {
                Finding::EffectMismatch { time_step, .. }
                | Finding::PreconditionViolated { time_step, .. }
                | Finding::UnknownLabel { time_step, .. } => Some(*time_step),
                _ => None,
            })
            .collect();
        for s in &det.steps {
            let Some(a) = &s.event.action else { continue };
            let (store, cap) = if surprising.contains(&s.event.time_step) {
                (&mut self.surprises, SURPRISE_WINDOW)
            } else {
                (&mut self.steps, STEP_WINDOW)
            };
            push_capped(store.entry(a.name.to_string()).or_default(), (game, s.clone()), cap);
            *self.counts.entry(a.name.to_string()).or_default() += 1;
        }
        for b in &det.boundaries {
            push_capped(&mut self.boundaries, (game, b.clone()), BOUNDARY_WINDOW);
            self.boundary_count += 1;
        }
        let flagged = det.result.evidence.iter().any(|f| {
            matches!(f, Finding::MenuUnknown { .. } | Finding::MenuMissing { .. } | Finding::MenuUnexpected { .. })
        });
        let novel = obs.menu.iter().any(|a| classic.schema(&a.name).is_none());
        if !obs.menu.is_empty() && (flagged || novel) {
            let m = MenuObs { state: obs.snapshot.clone(), player: obs.observer, menu: obs.menu.clone() };
            push_capped(&mut self.menus, (game, m), MENU_WINDOW);
            self.menu_count += 1;
        }
    }

    /// Drops evidence gathered before `game`, which may predate a rule change.
    pub fn forget_before(&mut self, game: u32) {
        for q in self.steps.values_mut().chain(self.surprises.values_mut()) {
            q.retain(|(g, _)| *g >= game);
        }
        self.boundaries.retain(|(g, _)| *g >= game);
        self.menus.retain(|(g, _)| *g >= game);
    }

    /// Stored steps of one label: mispredicted ones first, each newest first.
    pub fn steps_of<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a ObservedStep> + 'a {
        [&self.surprises, &self.steps]
            .into_iter()
            .filter_map(move |m| m.get(label))
            .flat_map(|q| q.iter().rev().map(|(_, s)| s))
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        let all: BTreeSet<&str> = self.steps.keys().chain(self.surprises.keys()).map(|k| k.as_str()).collect();
        all.into_iter()
    }

    pub fn boundaries(&self) -> impl Iterator<Item = &MoveBoundary> {
        self.boundaries.iter().rev().map(|(_, b)| b)
    }

    pub fn menus(&self) -> impl Iterator<Item = &MenuObs> {
        self.menus.iter().rev().map(|(_, m)| m)
    }

    /// Monotone counter of the evidence relevant to a focus; unchanged
    /// evidence makes re-characterization pointless.
    pub fn stamp(&self, focus: &Focus) -> u64 {
        match focus {
            Focus::Parameters(l) | Focus::Schema(l) => {
                self.counts.get(l).copied().unwrap_or(0) * 4096 + self.menu_count
            }
            Focus::Relation => self.boundary_count,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Focus {
    /// Rule constants of a known schema, then one extra guarded payment.
    Parameters(String),
    /// Structure of an unknown or previously induced schema.
    Schema(String),
    /// The move-boundary relation.
    Relation,
}

impl std::fmt::Display for Focus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Focus::Parameters(l) => write!(f, "parameters of {l}"),
            Focus::Schema(l) => write!(f, "schema {l}"),
            Focus::Relation => f.write_str("move-boundary relation"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Unique,
    Ambiguous,
    /// No hypothesis in the space explains the evidence.
    Inconsistent,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterizationResult {
    pub focus: Focus,
    pub status: Status,
    /// Rendered surviving hypotheses, at most 64.
    pub survivors: Vec<String>,
    pub n_survivors: usize,
    /// Edits to publish; empty unless the status is unique.
    pub updates: Vec<Mutation>,
}

impl CharacterizationResult {
    fn from_survivors(focus: Focus, mut survivors: Vec<(String, Vec<Mutation>)>) -> CharacterizationResult {
        let n = survivors.len();
        let status = match n {
            0 => Status::Inconsistent,
            1 => Status::Unique,
            _ => Status::Ambiguous,
        };
        let updates = if n == 1 { survivors[0].1.clone() } else { Vec::new() };
        survivors.truncate(64);
        CharacterizationResult {
            focus,
            status,
            survivors: survivors.into_iter().map(|(s, _)| s).collect(),
            n_survivors: n,
            updates,
        }
    }
}

/// Candidate edits in one focus.
#[derive(Clone, Debug)]
pub struct HypothesisSpace {
    pub focus: Focus,
    pub candidates: Vec<(String, Vec<Mutation>)>,
}

fn is_classic(label: &str) -> bool {
    RuleSet::classic().schema(label).is_some()
}

/// Foci implied by a detection, in finding order, without duplicates.
pub fn foci(result: &DetectionResult, menu: &[Action]) -> Vec<Focus> {
    let induced_in_menu = menu.iter().find(|a| !is_classic(&a.name)).map(|a| a.name.to_string());
    let mut out: Vec<Focus> = Vec::new();
    for f in &result.evidence {
        let focus = match f {
            Finding::UnknownLabel { action, .. } | Finding::MenuUnknown { action } => {
                Some(Focus::Schema(action.name.to_string()))
            }
            Finding::PreconditionViolated { action, .. } | Finding::EffectMismatch { action, .. } => {
                if is_classic(&action.name) {
                    Some(Focus::Parameters(action.name.to_string()))
                } else {
                    Some(Focus::Schema(action.name.to_string()))
                }
            }
            Finding::MenuMissing { action } | Finding::MenuUnexpected { action } => {
                if !is_classic(&action.name) {
                    Some(Focus::Schema(action.name.to_string()))
                } else if let Some(l) = &induced_in_menu {
                    Some(Focus::Schema(l.clone()))
                } else {
                    Some(Focus::Parameters(action.name.to_string()))
                }
            }
            Finding::UnexpectedEnforcement { .. }
            | Finding::MissingEnforcement { .. }
            | Finding::RelationViolated { .. } => Some(Focus::Relation),
            Finding::SnapshotMismatch { .. } => None,
        };
        if let Some(x) = focus {
            if !out.contains(&x) {
                out.push(x);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Replay

/// Whether `schema` (under `rules`) maps the step's pre-state to its
/// observed successor for some admissible outcome.
fn replays(rules: &RuleSet, schema: &ActionSchema, step: &ObservedStep) -> bool {
    let Some(a) = &step.event.action else { return false };
    let mut outs = match schema.chance() {
        None => vec![Outcome::None],
        Some(_) => rules::outcomes(rules, &step.pre, a),
    };
    let [x, y] = step.post.last_roll;
    if let Some(i) = outs.iter().position(|o| *o == Outcome::Dice(x, y)) {
        outs.swap(0, i);
    }
    outs.into_iter().any(|o| {
        let mut s = step.pre.detached();
        rules::apply_schema(rules, schema, &mut s, a, o);
        same_public(&s, &step.post)
    })
}

fn menus_agree(rules: &RuleSet, ev: &Evidence) -> bool {
    ev.menus()
        .filter(|m| m.menu.iter().all(|a| rules.schema(&a.name).is_some()))
        .all(|m| rules::legal_actions(rules, &m.state, m.player) == m.menu)
}

fn boundaries_agree(rules: &RuleSet, ev: &Evidence) -> bool {
    ev.boundaries().all(|b| {
        let mut s = b.state.detached();
        rules::enforce_relations(rules, &mut s, b.mover);
        same_public(&s, &b.after)
    })
}

/// Which stored evidence a focus is judged on.
struct Window {
    labels: Vec<String>,
    menus: bool,
    boundaries: bool,
}

fn consistent_rules(rules: &RuleSet, ev: &Evidence, w: &Window) -> bool {
    for l in &w.labels {
        let Some(s) = rules.schema(l) else { return false };
        if !ev.steps_of(l).all(|st| replays(rules, s, st)) {
            return false;
        }
    }
    (!w.boundaries || boundaries_agree(rules, ev)) && (!w.menus || menus_agree(rules, ev))
}

/// Indices of the candidates in `space` consistent with every observation
/// in the window of its focus.
pub fn enumerate_consistent(kb: &KnowledgeBase, space: &HypothesisSpace, ev: &Evidence) -> Vec<usize> {
    let w = window(kb, &space.focus, space.candidates.first().map(|c| c.1.as_slice()).unwrap_or(&[]), ev);
    space
        .candidates
        .iter()
        .enumerate()
        .filter(|(_, (_, ms))| {
            let mut r = (**kb.rules()).clone();
            ms.iter().all(|m| r.apply_mutation(m).is_ok()) && consistent_rules(&r, ev, &w)
        })
        .map(|(i, _)| i)
        .collect()
}

fn window(kb: &KnowledgeBase, focus: &Focus, sample: &[Mutation], ev: &Evidence) -> Window {
    match focus {
        Focus::Relation => Window { labels: Vec::new(), menus: false, boundaries: true },
        Focus::Schema(l) => Window { labels: vec![l.clone()], menus: true, boundaries: false },
        Focus::Parameters(l) => {
            let param = sample.iter().find_map(|m| match m {
                Mutation::SetParameter { name, .. } => Some(name.clone()),
                _ => None,
            });
            let labels = match param {
                Some(p) => ev
                    .labels()
                    .filter(|x| kb.schema(x).is_some_and(|s| s.referenced_params().contains(&p)))
                    .map(String::from)
                    .collect(),
                None => vec![l.clone()],
            };
            Window { labels, menus: true, boundaries: false }
        }
    }
}

// ---------------------------------------------------------------------------
// Entry points

/// Characterizes one focus against the evidence window.
pub fn characterize(kb: &KnowledgeBase, focus: &Focus, ev: &Evidence) -> CharacterizationResult {
    match focus {
        Focus::Parameters(l) => {
            let r = parameter_foci(kb, l, ev);
            if r.status == Status::Inconsistent {
                let slot = effect_slot(kb, l, ev);
                if slot.status != Status::Inconsistent {
                    return slot;
                }
            }
            r
        }
        Focus::Schema(l) => match induce_schema(kb, l, ev) {
            Some(s) => {
                let text = s.to_string();
                CharacterizationResult::from_survivors(focus.clone(), vec![(text, vec![Mutation::InsertSchema(s)])])
            }
            None => CharacterizationResult::from_survivors(focus.clone(), Vec::new()),
        },
        Focus::Relation => relation_template(kb, ev),
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PublishError {
    #[error("only unique characterizations can be published; {focus} is {status:?}")]
    NotUnique { focus: Focus, status: Status },
    #[error(transparent)]
    Rule(#[from] rules::RuleError),
}

/// Applies the edits of the given results as one new version. Every result
/// must be unique; republishing known edits only bumps the version.
pub fn publish(kb: &KnowledgeBase, results: &[CharacterizationResult]) -> Result<KnowledgeBase, PublishError> {
    if let Some(r) = results.iter().find(|r| r.status != Status::Unique) {
        return Err(PublishError::NotUnique { focus: r.focus.clone(), status: r.status });
    }
    let edits: Vec<Mutation> = results.iter().flat_map(|r| r.updates.iter().cloned()).collect();
    Ok(kb.apply_mutations(&edits)?)
}

// ---------------------------------------------------------------------------
// Parameters

/// Each referenced constant is enumerated over its domain. Exactly one
/// constant with exactly one surviving value is unique; survivors under
/// several constants are ambiguous.
fn parameter_foci(kb: &KnowledgeBase, label: &str, ev: &Evidence) -> CharacterizationResult {
    let focus = Focus::Parameters(label.to_string());
    let Some(schema) = kb.schema(label) else {
        return CharacterizationResult::from_survivors(focus, Vec::new());
    };
    let mut survivors = Vec::new();
    for name in schema.referenced_params() {
        let Some(p) = kb.rules().parameter(&name).cloned() else { continue };
        let candidates = (p.lo..=p.hi)
            .map(|v| (format!("${name} = {v}"), vec![Mutation::SetParameter { name: name.clone(), value: v }]))
            .collect::<Vec<_>>();
        let w = window(kb, &focus, &candidates.first().map(|c| c.1.clone()).unwrap_or_default(), ev);
        let mut r = (**kb.rules()).clone();
        for (text, ms) in candidates {
            let Mutation::SetParameter { value, .. } = ms[0] else { unreachable!() };
            if r.set_parameter(&name, value).is_ok() && consistent_rules(&r, ev, &w) {
                survivors.push((text, ms));
            }
        }
    }
    CharacterizationResult::from_survivors(focus, survivors)
}

// ---------------------------------------------------------------------------
// Effect slot

fn roles_of(s: &ActionSchema) -> Vec<Role> {
    let mut v = vec![Role::Actor];
    for (i, p) in s.params.iter().enumerate() {
        match p.ty {
            ParamType::Player => v.push(Role::Var(i as Var)),
            ParamType::Square => v.push(Role::Owner(i as Var)),
            ParamType::Int(_) => {}
        }
    }
    v
}

fn guard_vocabulary(roles: &[Role]) -> Vec<Atom> {
    let mut v = Vec::new();
    for r in roles {
        for p in [
            Pred::InJail(r.clone()),
            Pred::VoluntaryJail(r.clone()),
            Pred::HasMonopoly(r.clone()),
            Pred::HasLoan(r.clone()),
            Pred::HasJailCard(r.clone()),
        ] {
            v.push(Atom::pos(p.clone()));
            v.push(Atom::neg(p));
        }
    }
    v
}

fn role_player(step: &ObservedStep, r: &Role) -> Option<PlayerId> {
    let a = step.event.action.as_ref()?;
    match r {
        Role::Actor => Some(a.actor),
        Role::Var(v) => match a.args.get(*v as usize) {
            Some(Arg::Player(p)) => Some(*p),
            _ => None,
        },
        Role::Owner(v) => match a.args.get(*v as usize) {
            Some(Arg::Square(s)) => step.pre.owner(*s),
            _ => None,
        },
        Role::Bank => None,
    }
}

/// One extra `when guard: pay(...)` effect on a known schema. Amounts are
/// matched against the cash residual of the newest unexplained step, then
/// every candidate is replayed on all stored steps of the schema.
fn effect_slot(kb: &KnowledgeBase, label: &str, ev: &Evidence) -> CharacterizationResult {
    let focus = Focus::Parameters(label.to_string());
    let empty = || CharacterizationResult::from_survivors(focus.clone(), Vec::new());
    let Some(schema) = kb.schema(label) else { return empty() };
    let rules = kb.rules();
    let Some((step, residual)) = ev.steps_of(label).find_map(|st| {
        if replays(rules, schema, st) {
            return None;
        }
        let a = st.event.action.as_ref()?;
        let exp = kb.successors(&st.pre, a, false);
        let (_, d) = exp.closest(&st.post)?;
        Some((st, d))
    }) else {
        return empty();
    };
    let mut deltas: Vec<(PlayerId, i64)> = Vec::new();
    for c in &residual {
        match (c.fluent, &c.before, &c.after) {
            (Fluent::Cash(p), Value::Int(x), Value::Int(y)) => deltas.push((p, y - x)),
            _ => return empty(),
        }
    }
    let roles = roles_of(schema);
    // (from, to, amount) transfers that explain the residual.
    let mut transfers: Vec<(Role, Role, i64)> = Vec::new();
    match deltas.as_slice() {
        [(q, d)] => {
            for r in roles.iter().filter(|r| role_player(step, r) == Some(*q)) {
                if *d < 0 {
                    transfers.push((r.clone(), Role::Bank, -d));
                } else {
                    transfers.push((Role::Bank, r.clone(), *d));
                }
            }
        }
        [(q1, d1), (q2, d2)] if d1 + d2 == 0 => {
            let (payer, payee, amt) = if *d1 < 0 { (q1, q2, -d1) } else { (q2, q1, *d1) };
            for f in roles.iter().filter(|r| role_player(step, r) == Some(*payer)) {
                for t in roles.iter().filter(|r| role_player(step, r) == Some(*payee)) {
                    transfers.push((f.clone(), t.clone(), amt));
                }
            }
        }
        _ => return empty(),
    }
    let a = step.event.action.as_ref().expect("action step");
    let b = rules::Binding { actor: a.actor, args: &a.args };
    let mut bases: Vec<Term> = Vec::new();
    for (i, p) in schema.params.iter().enumerate() {
        if p.ty == ParamType::Square {
            let v = i as Var;
            bases.extend([Term::RentDue(v), Term::Price(v), Term::HouseCost(v), Term::MortgageValue(v), Term::TaxDue(v)]);
        }
    }
    let guards: Vec<Option<Atom>> = std::iter::once(None)
        .chain(guard_vocabulary(&roles).into_iter().filter(|g| rules::eval_atom(rules, &step.pre, &b, g)).map(Some))
        .collect();
    let mut candidates: Vec<Effect> = Vec::new();
    for (from, to, amt) in &transfers {
        let mut amounts = vec![Expr::constant(*amt)];
        for t in &bases {
            let base = rules::eval_expr(rules, &step.pre, &b, &Expr::term(t.clone()));
            for pct in 1..=MAX_PCT {
                if base * pct / 100 == *amt {
                    amounts.push(Expr::percent_of(Expr::term(t.clone()), Expr::constant(pct)));
                }
            }
        }
        for amount in amounts {
            for g in &guards {
                candidates.push(Effect {
                    guard: g.iter().cloned().collect(),
                    op: Op::Pay { from: from.clone(), to: to.clone(), amount: amount.clone() },
                });
            }
        }
    }
    let mut survivors = Vec::new();
    let mut cand = schema.clone();
    for e in candidates {
        cand.effects.push(e.clone());
        if ev.steps_of(label).all(|st| replays(rules, &cand, st)) {
            let text = format!("{label}: {}", rules::Named(&e, &cand.params));
            survivors.push((text, vec![Mutation::InsertEffect { schema: label.to_string(), effect: e }]));
        }
        cand.effects.pop();
    }
    CharacterizationResult::from_survivors(focus, survivors)
}

// ---------------------------------------------------------------------------
// Schema induction

/// A positive instance: an executed step or an offered menu entry.
struct Instance<'a> {
    state: &'a GameState,
    action: &'a Action,
}

fn precondition_vocabulary(params: &[ParamDecl], n_players: usize) -> Vec<Atom> {
    let mut roles = vec![Role::Actor];
    let mut squares = Vec::new();
    let mut ints = Vec::new();
    for (i, p) in params.iter().enumerate() {
        match p.ty {
            ParamType::Player => roles.push(Role::Var(i as Var)),
            ParamType::Square => squares.push(i as Var),
            ParamType::Int(_) => ints.push(i as Var),
        }
    }
    let mut v = Vec::new();
    let both = |v: &mut Vec<Atom>, p: Pred| {
        v.push(Atom::pos(p.clone()));
        v.push(Atom::neg(p));
    };
    for r in &roles {
        for p in [
            Pred::InJail(r.clone()),
            Pred::VoluntaryJail(r.clone()),
            Pred::Bankrupt(r.clone()),
            Pred::HasJailCard(r.clone()),
            Pred::HasLoan(r.clone()),
            Pred::LoanDue(r.clone()),
            Pred::HasMonopoly(r.clone()),
        ] {
            both(&mut v, p);
        }
        for &n in &ints {
            let cash = Expr::term(Term::Cash(r.clone()));
            v.push(Atom::pos(Pred::Compare(cash, Cmp::Ge, Expr::term(Term::Arg(n)))));
        }
    }
    for k in 0..n_players as PlayerId {
        v.push(Atom::neg(Pred::Seat(Role::Actor, k)));
    }
    for r in roles.iter().skip(1) {
        v.push(Atom::pos(Pred::Distinct(Role::Actor, r.clone())));
    }
    for &s in &squares {
        for p in [
            Pred::Owns(Role::Actor, s),
            Pred::Unowned(s),
            Pred::Mortgaged(s),
            Pred::IsProperty(s),
            Pred::Monopoly(Role::Actor, s),
            Pred::GroupImproved(s),
        ] {
            both(&mut v, p);
        }
    }
    for p in [Pred::OfferLoan, Pred::OfferTrade, Pred::AuctionOpen, Pred::PendingJail] {
        both(&mut v, p);
    }
    v.push(Atom::pos(Pred::Compare(Expr::term(Term::OffersMade), Cmp::Lt, Expr::constant(1))));
    v
}

/// Thresholds tried for `cash(?actor) < K`; the tightest one that holds for
/// every instance is kept.
const CASH_BOUNDS: [i64; 8] = [50, 100, 150, 200, 300, 500, 1000, 2000];

fn effect_pool(params: &[ParamDecl], steps: &[&ObservedStep]) -> Vec<Op> {
    let changed: Vec<std::mem::Discriminant<Fluent>> =
        steps.iter().flat_map(|st| diff(&st.pre, &st.post)).map(|c| std::mem::discriminant(&c.fluent)).collect();
    let has = |f: Fluent| changed.contains(&std::mem::discriminant(&f));
    let mut roles = vec![Role::Actor];
    let mut squares = Vec::new();
    let mut ints = Vec::new();
    for (i, p) in params.iter().enumerate() {
        match p.ty {
            ParamType::Player => roles.push(Role::Var(i as Var)),
            ParamType::Square => squares.push(i as Var),
            ParamType::Int(_) => ints.push(i as Var),
        }
    }
    let mut pool = Vec::new();
    for r in &roles {
        if has(Fluent::VoluntaryJail(0)) {
            for value in [true, false] {
                pool.push(Op::Set { flag: Flag::VoluntaryJail, role: r.clone(), value });
            }
        }
        if has(Fluent::InJail(0)) {
            pool.push(Op::LeaveJail(r.clone()));
            pool.push(Op::Set { flag: Flag::InJail, role: r.clone(), value: true });
        }
        if has(Fluent::JailCards(0)) {
            for delta in [1, -1] {
                pool.push(Op::Add { counter: Counter::JailCards, role: r.clone(), delta });
            }
        }
    }
    if has(Fluent::Offer) {
        for r in roles.iter().skip(1) {
            for &n in &ints {
                pool.push(Op::Builtin(Builtin::OpenLoan { lender: r.clone(), amount: Expr::term(Term::Arg(n)) }));
                for &s in &squares {
                    pool.push(Op::Builtin(Builtin::OpenTrade { to: r.clone(), square: s, cash: Expr::term(Term::Arg(n)) }));
                }
            }
        }
        let (i, n) = loan_terms(steps);
        for accept in [true, false] {
            pool.push(Op::Builtin(Builtin::ResolveLoan {
                accept,
                interest_pct: Expr::constant(i),
                installments: Expr::constant(n),
            }));
            pool.push(Op::Builtin(Builtin::ResolveTrade(accept)));
        }
    }
    if has(Fluent::Loans) {
        pool.push(Op::Builtin(Builtin::RepayLoan));
    }
    if has(Fluent::Cash(0)) {
        for &n in &ints {
            let amt = Expr::term(Term::Arg(n));
            pool.push(Op::Pay { from: Role::Actor, to: Role::Bank, amount: amt.clone() });
            pool.push(Op::Pay { from: Role::Bank, to: Role::Actor, amount: amt.clone() });
            for r in roles.iter().skip(1) {
                pool.push(Op::Pay { from: Role::Actor, to: r.clone(), amount: amt.clone() });
                pool.push(Op::Pay { from: r.clone(), to: Role::Actor, amount: amt.clone() });
            }
        }
        // A constant charge seen identically on every instance.
        let actor_deltas: BTreeSet<i64> = steps
            .iter()
            .map(|st| {
                let a = st.event.action.as_ref().map(|a| a.actor).unwrap_or(0);
                st.post.player(a).cash - st.pre.player(a).cash
            })
            .collect();
        if let [d] = actor_deltas.into_iter().collect::<Vec<_>>()[..] {
            if d < 0 {
                pool.push(Op::Pay { from: Role::Actor, to: Role::Bank, amount: Expr::constant(-d) });
            } else if d > 0 {
                pool.push(Op::Pay { from: Role::Bank, to: Role::Actor, amount: Expr::constant(d) });
            }
        }
    }
    for &s in &squares {
        if has(Fluent::Owner(0)) {
            pool.push(Op::SetOwner { square: s, owner: Some(Role::Actor) });
            pool.push(Op::SetOwner { square: s, owner: None });
        }
        if has(Fluent::Mortgaged(0)) {
            for value in [true, false] {
                pool.push(Op::SetMortgaged { square: s, value });
            }
        }
        if has(Fluent::Houses(0)) {
            for delta in [1, -1] {
                pool.push(Op::AddHouses { square: s, delta });
            }
        }
    }
    if has(Fluent::Pending) {
        pool.push(Op::PopPending);
    }
    if has(Fluent::PlayerTurns) {
        pool.push(Op::Builtin(Builtin::EndTurn));
    }
    pool
}

/// Interest and installment count read off an observed new loan record.
fn loan_terms(steps: &[&ObservedStep]) -> (i64, i64) {
    for st in steps {
        let Some(Offer::Loan { amount, borrower, .. }) = st.pre.offer else { continue };
        let Some(l) = st.post.loans.iter().find(|l| l.borrower == borrower) else { continue };
        if st.pre.loan_of(borrower).is_some() || amount <= 0 {
            continue;
        }
        if let Some(i) = (0..=100).find(|i| amount * (100 + i) / 100 == l.remaining) {
            return (i, l.installments_left as i64);
        }
    }
    (0, 1)
}

/// Induces a schema for `label` from its executions and menu offers:
/// parameter kinds from the arguments, phase from the pre-states,
/// preconditions as the vocabulary atoms true in every instance, effects as
/// the smallest ordered subset of the effect pool that replays every
/// execution, and priority when menus offer nothing else.
pub fn induce_schema(kb: &KnowledgeBase, label: &str, ev: &Evidence) -> Option<ActionSchema> {
    let steps: Vec<&ObservedStep> = ev.steps_of(label).collect();
    if steps.is_empty() {
        return None;
    }
    let mut inst: Vec<Instance> = steps
        .iter()
        .map(|s| Instance { state: &s.pre, action: s.event.action.as_ref().expect("action step") })
        .collect();
    let menus: Vec<&MenuObs> = ev.menus().filter(|m| m.menu.iter().any(|a| &*a.name == label)).collect();
    for m in &menus {
        inst.extend(m.menu.iter().filter(|a| &*a.name == label).map(|a| Instance { state: &m.state, action: a }));
    }
    let kinds: Vec<ArgKind> = inst[0].action.args.iter().map(|a| a.kind()).collect();
    if inst.iter().any(|i| i.action.args.iter().map(|a| a.kind()).ne(kinds.iter().copied())) {
        return None;
    }
    let phase = inst[0].state.phase();
    if inst.iter().any(|i| i.state.phase() != phase) || phase == Phase::Terminal {
        return None;
    }
    let mut params = Vec::new();
    for (i, k) in kinds.iter().enumerate() {
        let (prefix, ty) = match k {
            ArgKind::Player => ("p", ParamType::Player),
            ArgKind::Square => ("sq", ParamType::Square),
            ArgKind::Int => {
                let vals: BTreeSet<i64> = inst
                    .iter()
                    .filter_map(|x| match x.action.args[i] {
                        Arg::Int(v) => Some(v),
                        _ => None,
                    })
                    .collect();
                ("n", ParamType::Int(vals.into_iter().collect()))
            }
        };
        params.push(ParamDecl { name: format!("{prefix}{i}"), ty });
    }
    let rules = kb.rules();
    let holds_everywhere = |a: &Atom| {
        inst.iter().all(|x| {
            let b = rules::Binding { actor: x.action.actor, args: &x.action.args };
            rules::eval_atom(rules, x.state, &b, a)
        })
    };
    let mut pre: Vec<Atom> = precondition_vocabulary(&params, inst[0].state.n_players())
        .into_iter()
        .filter(|a| holds_everywhere(a))
        .collect();
    if let Some(k) = CASH_BOUNDS.iter().find(|&&k| {
        holds_everywhere(&Atom::pos(Pred::Compare(Expr::term(Term::Cash(Role::Actor)), Cmp::Lt, Expr::constant(k))))
    }) {
        pre.push(Atom::pos(Pred::Compare(Expr::term(Term::Cash(Role::Actor)), Cmp::Lt, Expr::constant(*k))));
    }
    let priority = !menus.is_empty() && menus.iter().all(|m| m.menu.iter().all(|a| &*a.name == label));

    let pool = effect_pool(&params, &steps);
    let mut schema = ActionSchema::new(label, phase);
    schema.params = params;
    schema.priority = priority;
    schema.pre = pre;
    for size in 0..=MAX_EFFECTS.min(pool.len()) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            schema.effects = idx.iter().map(|&i| Effect::plain(pool[i].clone())).collect();
            if rules.validate_schema(&schema).is_ok() && steps.iter().all(|st| replays(rules, &schema, st)) {
                return Some(schema);
            }
            if !next_combination(&mut idx, pool.len()) {
                break;
            }
        }
    }
    None
}

/// Advances `idx` to the next increasing index combination below `n`.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

// ---------------------------------------------------------------------------
// Relations

fn revoked_groups(b: &MoveBoundary) -> BTreeSet<u8> {
    (0..b.state.board.squares.len() as u8)
        .filter(|&s| b.after.square(s).houses < b.state.square(s).houses)
        .filter_map(|s| b.state.board.group_of(s))
        .collect()
}

/// Minimal homogeneity hypothesis: the groups seen cut back, with the
/// player exempt whose expected cut did not happen.
fn relation_template(kb: &KnowledgeBase, ev: &Evidence) -> CharacterizationResult {
    let focus = Focus::Relation;
    let (mut scope, mut exempt) = match kb.rules().homogeneity() {
        Some((s, e)) => (s.clone(), e),
        None => (GroupScope::Groups(BTreeSet::new()), None),
    };
    for b in ev.boundaries() {
        let g = revoked_groups(b);
        if let GroupScope::Groups(set) = &mut scope {
            set.extend(g.iter().copied());
        }
    }
    if matches!(&scope, GroupScope::Groups(s) if s.is_empty()) {
        return CharacterizationResult::from_survivors(focus, Vec::new());
    }
    let rel = |scope: &GroupScope, exempt| Relation::Homogeneous { scope: scope.clone(), exempt };
    let mut r = (**kb.rules()).clone();
    r.add_relation(rel(&scope, exempt));
    // An expected cut that did not happen names the exempt player.
    let missed = ev.boundaries().find(|b| {
        let mut s = b.state.detached();
        rules::enforce_relations(&r, &mut s, b.mover) && same_public(&b.state, &b.after)
    });
    if let Some(b) = missed {
        if exempt.is_none() {
            exempt = Some(b.mover);
            r.add_relation(rel(&scope, exempt));
        }
    }
    let hyp = rel(&scope, exempt);
    if !boundaries_agree(&r, ev) {
        return CharacterizationResult::from_survivors(focus, Vec::new());
    }
    CharacterizationResult::from_survivors(focus, vec![(hyp.to_string(), vec![Mutation::AddRelation(hyp)])])
}
