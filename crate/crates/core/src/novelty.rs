//! Ground-truth novelties: the built-in catalog and rule-set mutation.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::action::PlayerId;
use crate::rules::{self, Mutation, Relation, RuleError, RuleSet};
use crate::state::GameState;

pub const CATALOG: &str = include_str!("../data/novelties.schema");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Action,
    Interaction,
    Relation,
    Parameter,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Action, Category::Interaction, Category::Relation, Category::Parameter];

    pub fn name(self) -> &'static str {
        match self {
            Category::Action => "action",
            Category::Interaction => "interaction",
            Category::Relation => "relation",
            Category::Parameter => "parameter",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| format!("unknown category `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Difficulty {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Difficulty::ALL.into_iter().find(|d| d.name() == s).ok_or_else(|| format!("unknown difficulty `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoveltySpec {
    pub id: String,
    pub category: Category,
    pub difficulty: Difficulty,
    /// 1-based game index at which the novelty switches on.
    pub activation_game: Option<u32>,
    pub description: String,
    pub payload: Vec<Mutation>,
}

impl NoveltySpec {
    pub fn with_activation(mut self, game: u32) -> NoveltySpec {
        self.activation_game = Some(game);
        self
    }

    /// Names of schemas the payload introduces.
    pub fn new_schemas(&self) -> impl Iterator<Item = &str> {
        self.payload.iter().filter_map(|m| match m {
            Mutation::InsertSchema(s) => Some(&*s.name),
            _ => None,
        })
    }
}

/// Parses novelty blocks in the schema grammar on top of `base`.
pub fn parse_specs(text: &str, base: &RuleSet) -> Result<Vec<NoveltySpec>, RuleError> {
    let parsed = rules::parse_onto(text, base.clone())?;
    parsed
        .novelties
        .into_iter()
        .map(|n| {
            let bad = |m: String| RuleError::Parse { line: 0, msg: format!("novelty {}: {m}", n.id) };
            Ok(NoveltySpec {
                category: n.category.parse().map_err(bad)?,
                difficulty: n.difficulty.parse().map_err(bad)?,
                id: n.id,
                activation_game: n.activation_game,
                description: n.description,
                payload: n.payload,
            })
        })
        .collect()
}

/// The built-in catalog: voluntary jail stays, loans, homogeneous improvement
/// and rule-constant changes, each at three difficulties.
pub fn builtin_catalog() -> Vec<NoveltySpec> {
    static CAT: OnceLock<Vec<NoveltySpec>> = OnceLock::new();
    CAT.get_or_init(|| parse_specs(CATALOG, &RuleSet::classic()).expect("embedded catalog is valid")).clone()
}

pub fn find(id: &str) -> Option<NoveltySpec> {
    builtin_catalog().into_iter().find(|n| n.id == id)
}

/// The mutated rule set. A payload touching a rule an earlier novelty
/// already mutated is rejected.
pub fn apply_novelty(rules: &RuleSet, spec: &NoveltySpec) -> Result<RuleSet, RuleError> {
    let mut out = rules.clone();
    for m in &spec.payload {
        let target = m.target();
        if rules.mutated.contains(&target) {
            return Err(RuleError::Conflict(target));
        }
        out.apply_mutation(m)?;
    }
    out.mutated.extend(spec.payload.iter().map(|m| m.target()));
    Ok(out)
}

/// Who can exercise a novelty.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Availability {
    /// Open to the agent under test without extra conditions.
    Unconditional,
    /// Exercised by opponents only; the agent learns it by observation.
    OpponentsOnly,
    /// Only under narrow state conditions.
    Conditional,
}

pub fn difficulty_gate(spec: &NoveltySpec) -> Availability {
    match spec.difficulty {
        Difficulty::Easy => Availability::Unconditional,
        Difficulty::Medium => Availability::OpponentsOnly,
        Difficulty::Hard => Availability::Conditional,
    }
}

/// Whether the novelty currently applies to `player` in `state` under the
/// mutated rules: some new schema has a satisfied instance, the relation
/// binds one of the player's monopolies, or (for constants) always.
pub fn gate_holds(rules: &RuleSet, spec: &NoveltySpec, state: &GameState, player: PlayerId) -> bool {
    let mut schemas = spec.new_schemas().peekable();
    if schemas.peek().is_some() {
        return schemas.filter_map(|n| rules.schema(n)).any(|s| {
            let mut out = Vec::new();
            rules::schema_legal_instances(rules, state, s, player, &mut out);
            !out.is_empty()
        });
    }
    for m in &spec.payload {
        if let Mutation::AddRelation(Relation::Homogeneous { scope, exempt }) = m {
            return *exempt != Some(player) && state.monopolies(player).any(|g| scope.contains(g));
        }
    }
    true
}
