//! The agent's knowledge base: a versioned, copy-on-update view of the rules
//! it believes, with prediction and relation checks.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::action::{Action, PlayerId};
use crate::engine;
use crate::rules::{
    self, ActionSchema, Atom, Effect, Mutation, Outcome, Parameter, Relation, RuleError, RuleSet,
};
use crate::state::{diff, same_public, FluentChange, GameState};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreconditionCheck {
    pub satisfied: bool,
    pub failed: Vec<String>,
}

/// Admissible successor states of one action, one per chance outcome.
#[derive(Clone, Debug)]
pub struct ExpectedState {
    pub outcomes: Vec<(Outcome, GameState)>,
}

impl ExpectedState {
    pub fn admits(&self, observed: &GameState) -> bool {
        self.outcomes.iter().any(|(_, s)| same_public(s, observed))
    }

    /// The outcome whose prediction differs from `observed` in the fewest
    /// fluents, with those differences (expected before, observed after).
    pub fn closest(&self, observed: &GameState) -> Option<(Outcome, Vec<FluentChange>)> {
        self.outcomes
            .iter()
            .map(|(o, s)| (*o, diff(s, observed)))
            .min_by_key(|(_, d)| d.len())
    }
}

#[derive(Clone, Debug)]
pub struct KnowledgeBase {
    rules: Arc<RuleSet>,
    version: u64,
}

impl PartialEq for KnowledgeBase {
    fn eq(&self, other: &Self) -> bool {
        self.version == other.version && self.rules == other.rules
    }
}

impl KnowledgeBase {
    /// Initial belief: the classic rules.
    pub fn classic() -> KnowledgeBase {
        KnowledgeBase { rules: RuleSet::classic(), version: 0 }
    }

    pub fn from_rules(rules: Arc<RuleSet>) -> KnowledgeBase {
        KnowledgeBase { rules, version: 0 }
    }

    pub fn rules(&self) -> &Arc<RuleSet> {
        &self.rules
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn schema(&self, name: &str) -> Option<&ActionSchema> {
        self.rules.schema(name)
    }

    pub fn knows(&self, name: &str) -> bool {
        self.rules.schema(name).is_some()
    }

    pub fn interaction_set(&self) -> BTreeSet<String> {
        self.rules.interaction_set()
    }

    pub fn relations(&self) -> &[Relation] {
        &self.rules.relations
    }

    pub fn legal_actions(&self, state: &GameState, player: PlayerId) -> Vec<Action> {
        rules::legal_actions(&self.rules, state, player)
    }

    pub fn preconditions_satisfied(&self, state: &GameState, action: &Action) -> Result<PreconditionCheck, RuleError> {
        let failed = rules::check_preconditions(&self.rules, state, action)?;
        Ok(PreconditionCheck { satisfied: failed.is_empty(), failed })
    }

    /// Successor of `state` under the believed effects, without legality
    /// checks. With `enforce`, move-boundary relations run afterwards.
    pub fn transition(&self, state: &GameState, action: &Action, outcome: Outcome, enforce: bool) -> GameState {
        let mut s = state.detached();
        let mover = s.turn;
        let before = s.player_turns;
        rules::apply_unchecked(&self.rules, &mut s, action, outcome);
        if enforce {
            engine::end_of_move(&self.rules, &mut s, before, mover);
        }
        s
    }

    /// The believed move-boundary enforcement after `mover`'s move ended in
    /// `state`; `None` when nothing would change.
    pub fn expected_enforcement(&self, state: &GameState, mover: PlayerId) -> Option<GameState> {
        if state.is_over() {
            return None;
        }
        let mut s = state.detached();
        rules::enforce_relations(&self.rules, &mut s, mover).then_some(s)
    }

    /// Every admissible successor of a legal action, with enforcement.
    pub fn predict(&self, state: &GameState, action: &Action) -> Result<ExpectedState, RuleError> {
        let check = self.preconditions_satisfied(state, action)?;
        if !check.satisfied {
            return Err(RuleError::Precondition { schema: action.name.to_string(), failed: check.failed });
        }
        Ok(self.successors(state, action, true))
    }

    /// Successors over all admissible outcomes, without legality checks.
    pub fn successors(&self, state: &GameState, action: &Action, enforce: bool) -> ExpectedState {
        let outcomes = rules::outcomes(&self.rules, state, action)
            .into_iter()
            .map(|o| (o, self.transition(state, action, o, enforce)))
            .collect();
        ExpectedState { outcomes }
    }

    /// Violated relation constraints; with `mover`, move-boundary relations
    /// are checked as if that player's move had just ended.
    pub fn check_relations(&self, state: &GameState, mover: Option<PlayerId>) -> Vec<String> {
        rules::relation_violations(&self.rules, state, mover)
    }

    fn update(&self, f: impl FnOnce(&mut RuleSet) -> Result<(), RuleError>) -> Result<KnowledgeBase, RuleError> {
        let mut rules = (*self.rules).clone();
        f(&mut rules)?;
        Ok(KnowledgeBase { rules: Arc::new(rules), version: self.version + 1 })
    }

    pub fn insert_schema(&self, schema: ActionSchema) -> Result<KnowledgeBase, RuleError> {
        self.update(|r| r.insert_schema(schema))
    }

    pub fn insert_effect(&self, name: &str, effect: Effect) -> Result<KnowledgeBase, RuleError> {
        self.update(|r| r.insert_effect(name, effect))
    }

    pub fn insert_precondition(&self, name: &str, atom: Atom) -> Result<KnowledgeBase, RuleError> {
        self.update(|r| r.insert_precondition(name, atom))
    }

    pub fn set_parameter(&self, name: &str, value: i64) -> Result<KnowledgeBase, RuleError> {
        self.update(|r| r.set_parameter(name, value))
    }

    pub fn add_parameter(&self, p: Parameter) -> Result<KnowledgeBase, RuleError> {
        self.update(|r| r.add_parameter(p))
    }

    pub fn add_relation(&self, rel: Relation) -> Result<KnowledgeBase, RuleError> {
        self.update(|r| {
            r.add_relation(rel);
            Ok(())
        })
    }

    /// Applies several edits as one new version.
    pub fn apply_mutations(&self, ms: &[Mutation]) -> Result<KnowledgeBase, RuleError> {
        self.update(|r| ms.iter().try_for_each(|m| r.apply_mutation(m)))
    }
}
