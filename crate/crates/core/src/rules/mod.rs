//! Declarative rule language shared by the engine and the agent's knowledge base.
//!
//! A [`RuleSet`] is a list of action schemas (typed parameters, precondition
//! atoms, guarded effects), named integer parameters and relation constraints.
//! The engine executes the true rule set; a knowledge base executes its believed
//! copy through the same interpreter.

mod interp;
mod parse;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{player_name, PlayerId};
use crate::board::{Board, DeckKind};
use crate::state::Phase;

pub use interp::{
    apply, apply_schema, apply_unchecked, check_preconditions, compute_rent, enforce_relations, eval_atom, eval_expr,
    legal_actions, outcomes, relation_violations, schema_legal_instances, Binding, Outcome,
};
pub use parse::{
    parse_atom, parse_effect, parse_onto, parse_rules, parse_schema, ParsedFile, ParsedNovelty,
};

pub const CLASSIC_RULES: &str = include_str!("../../data/classic_rules.schema");

/// Index of a schema parameter; `?actor` is not a parameter.
pub type Var = u8;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Actor,
    Var(Var),
    Owner(Var),
    Bank,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    Player,
    Square,
    Int(Vec<i64>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamDecl {
    pub name: String,
    pub ty: ParamType,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Const(i64),
    Param(Arc<str>),
    Arg(Var),
    Price(Var),
    MortgageValue(Var),
    RedeemCost(Var),
    HouseCost(Var),
    HouseSale(Var),
    RentDue(Var),
    TaxDue(Var),
    Houses(Var),
    Cash(Role),
    JailTurns(Role),
    AuctionPrice,
    OffersMade,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Term(Term),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    /// Floor division; division by zero yields 0.
    Div(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn constant(v: i64) -> Expr {
        Expr::Term(Term::Const(v))
    }

    pub fn param(name: &str) -> Expr {
        Expr::Term(Term::Param(Arc::from(name)))
    }

    pub fn term(t: Term) -> Expr {
        Expr::Term(t)
    }

    /// `base * $pct / 100`
    pub fn percent_of(base: Expr, pct: Expr) -> Expr {
        Expr::Div(Box::new(Expr::Mul(Box::new(base), Box::new(pct))), Box::new(Expr::constant(100)))
    }

    pub fn visit_terms<'a>(&'a self, f: &mut impl FnMut(&'a Term)) {
        match self {
            Expr::Term(t) => f(t),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.visit_terms(f);
                b.visit_terms(f);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl Cmp {
    pub fn holds(self, a: i64, b: i64) -> bool {
        match self {
            Cmp::Lt => a < b,
            Cmp::Le => a <= b,
            Cmp::Gt => a > b,
            Cmp::Ge => a >= b,
            Cmp::Eq => a == b,
            Cmp::Ne => a != b,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Gt => ">",
            Cmp::Ge => ">=",
            Cmp::Eq => "==",
            Cmp::Ne => "!=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pred {
    InJail(Role),
    VoluntaryJail(Role),
    Bankrupt(Role),
    HasJailCard(Role),
    HasLoan(Role),
    LoanDue(Role),
    HasMonopoly(Role),
    Seat(Role, PlayerId),
    Distinct(Role, Role),
    Owns(Role, Var),
    Unowned(Var),
    Mortgaged(Var),
    Monopoly(Role, Var),
    CompletesGroup(Role, Var),
    GroupImproved(Var),
    GroupMortgaged(Var),
    EvenBuildOk(Var),
    EvenSellOk(Var),
    BankHasBuilding(Var),
    BankCanBreak(Var),
    IsProperty(Var),
    PendingPurchase(Var),
    PendingRent(Var),
    PendingTax(Var),
    PendingCard(DeckKind),
    PendingJail,
    AuctionOpen,
    AuctionComplete,
    OfferTrade,
    OfferLoan,
    Compare(Expr, Cmp, Expr),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub negated: bool,
    pub pred: Pred,
}

impl Atom {
    pub fn pos(pred: Pred) -> Atom {
        Atom { negated: false, pred }
    }

    pub fn neg(pred: Pred) -> Atom {
        Atom { negated: true, pred }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    InJail,
    VoluntaryJail,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Counter {
    JailTurns,
    JailCards,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    RollAndMove,
    JailRoll,
    DrawCard(DeckKind),
    GoToJail,
    EndTurn,
    StartAuction(Var),
    Bid(Expr),
    PassBid,
    CloseAuction,
    OpenTrade { to: Role, square: Var, cash: Expr },
    ResolveTrade(bool),
    OpenLoan { lender: Role, amount: Expr },
    ResolveLoan { accept: bool, interest_pct: Expr, installments: Expr },
    RepayLoan,
}

impl Builtin {
    /// Parameters read implicitly by the builtin (beyond those in its expressions).
    pub fn implicit_params(&self) -> &'static [&'static str] {
        match self {
            Builtin::RollAndMove => &["go_salary", "max_doubles"],
            Builtin::JailRoll => &["jail_fine", "go_salary", "max_jail_turns"],
            Builtin::DrawCard(_) => &["go_salary"],
            _ => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    /// Transfer with automatic liquidation; a payer who still cannot pay goes bankrupt
    /// to the payee.
    Pay { from: Role, to: Role, amount: Expr },
    Set { flag: Flag, role: Role, value: bool },
    LeaveJail(Role),
    Add { counter: Counter, role: Role, delta: i64 },
    SetOwner { square: Var, owner: Option<Role> },
    SetMortgaged { square: Var, value: bool },
    AddHouses { square: Var, delta: i64 },
    PopPending,
    Builtin(Builtin),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Effect {
    #[serde(default)]
    pub guard: Vec<Atom>,
    pub op: Op,
}

impl Effect {
    pub fn plain(op: Op) -> Effect {
        Effect { guard: Vec::new(), op }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chance {
    Dice,
    Card(DeckKind),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionSchema {
    pub name: Arc<str>,
    pub params: Vec<ParamDecl>,
    pub phase: Phase,
    pub priority: bool,
    pub tags: Vec<String>,
    pub pre: Vec<Atom>,
    pub effects: Vec<Effect>,
}

impl ActionSchema {
    pub fn new(name: &str, phase: Phase) -> ActionSchema {
        ActionSchema {
            name: Arc::from(name),
            params: Vec::new(),
            phase,
            priority: false,
            tags: Vec::new(),
            pre: Vec::new(),
            effects: Vec::new(),
        }
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }

    pub fn chance(&self) -> Option<Chance> {
        self.effects.iter().find_map(|e| match &e.op {
            Op::Builtin(Builtin::RollAndMove | Builtin::JailRoll) => Some(Chance::Dice),
            Op::Builtin(Builtin::DrawCard(d)) => Some(Chance::Card(*d)),
            _ => None,
        })
    }

    /// Every named parameter the schema's semantics depend on.
    pub fn referenced_params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let add_expr = |e: &Expr, out: &mut BTreeSet<String>| {
            e.visit_terms(&mut |t| {
                if let Term::Param(p) = t {
                    out.insert(p.to_string());
                }
                if let Term::TaxDue(_) = t {
                    out.insert("income_tax".into());
                    out.insert("luxury_tax".into());
                }
            })
        };
        let atoms = self.pre.iter().chain(self.effects.iter().flat_map(|e| e.guard.iter()));
        for a in atoms {
            if let Pred::Compare(x, _, y) = &a.pred {
                add_expr(x, &mut out);
                add_expr(y, &mut out);
            }
        }
        for e in &self.effects {
            match &e.op {
                Op::Pay { amount, .. } => add_expr(amount, &mut out),
                Op::Builtin(b) => {
                    out.extend(b.implicit_params().iter().map(|s| s.to_string()));
                    match b {
                        Builtin::Bid(x) | Builtin::OpenTrade { cash: x, .. } => add_expr(x, &mut out),
                        Builtin::OpenLoan { amount, .. } => add_expr(amount, &mut out),
                        Builtin::ResolveLoan { interest_pct, installments, .. } => {
                            add_expr(interest_pct, &mut out);
                            add_expr(installments, &mut out);
                        }
                        _ => {}
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// True when an effect can move cash or state of a player other than the actor.
    pub fn is_interaction(&self) -> bool {
        let other = |r: &Role| matches!(r, Role::Var(_) | Role::Owner(_));
        self.effects.iter().any(|e| match &e.op {
            Op::Pay { from, to, .. } => other(from) || other(to),
            Op::Set { role, .. } | Op::LeaveJail(role) | Op::Add { role, .. } => other(role),
            Op::SetOwner { owner: Some(r), .. } => other(r),
            Op::Builtin(b) => matches!(
                b,
                Builtin::OpenTrade { .. }
                    | Builtin::ResolveTrade(_)
                    | Builtin::OpenLoan { .. }
                    | Builtin::ResolveLoan { .. }
                    | Builtin::RepayLoan
                    | Builtin::Bid(_)
                    | Builtin::CloseAuction
            ),
            _ => false,
        })
    }

    pub fn var_index(&self, name: &str) -> Option<Var> {
        self.params.iter().position(|p| p.name == name).map(|i| i as Var)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Parameter {
    pub name: Arc<str>,
    pub value: i64,
    pub lo: i64,
    pub hi: i64,
}

impl Parameter {
    pub fn new(name: &str, value: i64) -> Parameter {
        Parameter { name: Arc::from(name), value, lo: 1, hi: 500 }
    }

    pub fn with_domain(name: &str, value: i64, lo: i64, hi: i64) -> Parameter {
        Parameter { name: Arc::from(name), value, lo, hi }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupScope {
    All,
    Groups(BTreeSet<u8>),
}

impl GroupScope {
    pub fn contains(&self, gid: u8) -> bool {
        match self {
            GroupScope::All => true,
            GroupScope::Groups(g) => g.contains(&gid),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// Static: improvement levels within a colour group differ by at most one.
    EvenBuilding,
    /// Move-boundary: when a move ends, every uneven monopolized group of the
    /// mover in scope is cut down to its lowest level without refund.
    Homogeneous { scope: GroupScope, exempt: Option<PlayerId> },
}

impl Relation {
    pub fn kind(&self) -> &'static str {
        match self {
            Relation::EvenBuilding => "even_building",
            Relation::Homogeneous { .. } => "homogeneous",
        }
    }
}

/// One rule-set edit; novelty payloads and knowledge-base updates are lists of these.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    InsertSchema(ActionSchema),
    InsertEffect { schema: String, effect: Effect },
    InsertPrecondition { schema: String, atom: Atom },
    SetParameter { name: String, value: i64 },
    AddParameter(Parameter),
    AddRelation(Relation),
}

impl Mutation {
    /// Name of the rule this mutation touches.
    pub fn target(&self) -> String {
        match self {
            Mutation::InsertSchema(s) => format!("schema:{}", s.name),
            Mutation::InsertEffect { schema, .. } | Mutation::InsertPrecondition { schema, .. } => {
                format!("schema:{schema}")
            }
            Mutation::SetParameter { name, .. } => format!("parameter:{name}"),
            Mutation::AddParameter(p) => format!("parameter:{}", p.name),
            Mutation::AddRelation(r) => format!("relation:{}", r.kind()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown action schema `{0}`")]
    UnknownSchema(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("parameter `{name}` value {value} outside {lo}..{hi}")]
    OutOfDomain { name: String, value: i64, lo: i64, hi: i64 },
    #[error("type error: {0}")]
    Type(String),
    #[error("conflicting mutation of `{0}`")]
    Conflict(String),
    #[error("game is over")]
    Terminal,
    #[error("{player} is not the solicited player")]
    NotSolicited { player: String },
    #[error("`{schema}` is not available in phase {phase}")]
    WrongPhase { schema: String, phase: String },
    #[error("bad arguments for `{schema}`: {msg}")]
    BadArgs { schema: String, msg: String },
    #[error("precondition of `{schema}` failed: {}", failed.join(", "))]
    Precondition { schema: String, failed: Vec<String> },
    #[error("`{schema}` is preempted by forced action `{by}`")]
    Preempted { schema: String, by: String },
    #[error("`{schema}` needs a chance outcome of kind {expected:?}")]
    Outcome { schema: String, expected: Option<Chance> },
}

/// Executable rule set: the true world model or an agent's belief of it.
#[derive(Clone, Debug)]
pub struct RuleSet {
    pub board: Arc<Board>,
    schemas: Vec<Arc<ActionSchema>>,
    index: HashMap<Arc<str>, usize>,
    by_phase: [Vec<usize>; 6],
    params: Vec<Parameter>,
    pub relations: Vec<Relation>,
    /// Rule names touched by novelty payloads; a second mutation of the same
    /// name is rejected.
    pub mutated: BTreeSet<String>,
}

impl PartialEq for RuleSet {
    fn eq(&self, other: &Self) -> bool {
        self.board == other.board
            && self.schemas == other.schemas
            && self.params == other.params
            && self.relations == other.relations
    }
}

fn phase_slot(p: Phase) -> usize {
    match p {
        Phase::PreRoll => 0,
        Phase::PostRoll => 1,
        Phase::Auction => 2,
        Phase::Trade => 3,
        Phase::Loan => 4,
        Phase::Terminal => 5,
    }
}

impl RuleSet {
    pub fn empty(board: Arc<Board>) -> RuleSet {
        RuleSet {
            board,
            schemas: Vec::new(),
            index: HashMap::new(),
            by_phase: Default::default(),
            params: Vec::new(),
            relations: Vec::new(),
            mutated: BTreeSet::new(),
        }
    }

    /// The classic rules parsed from the embedded schema file.
    pub fn classic() -> Arc<RuleSet> {
        static CLASSIC: OnceLock<Arc<RuleSet>> = OnceLock::new();
        CLASSIC
            .get_or_init(|| {
                let parsed = parse_rules(CLASSIC_RULES, Board::classic())
                    .expect("embedded classic rules are valid");
                Arc::new(parsed.rules)
            })
            .clone()
    }

    pub fn schemas(&self) -> impl Iterator<Item = &ActionSchema> {
        self.schemas.iter().map(|s| s.as_ref())
    }

    pub fn schema(&self, name: &str) -> Option<&ActionSchema> {
        self.index.get(name).map(|&i| self.schemas[i].as_ref())
    }

    pub fn schema_arc(&self, name: &str) -> Option<&Arc<ActionSchema>> {
        self.index.get(name).map(|&i| &self.schemas[i])
    }

    pub(crate) fn phase_schemas(&self, phase: Phase) -> impl Iterator<Item = &ActionSchema> {
        self.by_phase[phase_slot(phase)].iter().map(|&i| self.schemas[i].as_ref())
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn parameter(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| &*p.name == name)
    }

    pub fn param_value(&self, name: &str) -> Option<i64> {
        self.parameter(name).map(|p| p.value)
    }

    pub fn interaction_set(&self) -> BTreeSet<String> {
        self.schemas().filter(|s| s.is_interaction()).map(|s| s.name.to_string()).collect()
    }

    fn reindex(&mut self) {
        self.index = self.schemas.iter().enumerate().map(|(i, s)| (s.name.clone(), i)).collect();
        let mut by_phase: [Vec<usize>; 6] = Default::default();
        for (i, s) in self.schemas.iter().enumerate() {
            by_phase[phase_slot(s.phase)].push(i);
        }
        self.by_phase = by_phase;
    }

    /// Adds or replaces a schema after checking every symbol resolves.
    pub fn insert_schema(&mut self, schema: ActionSchema) -> Result<(), RuleError> {
        self.validate_schema(&schema)?;
        match self.index.get(&*schema.name) {
            Some(&i) => self.schemas[i] = Arc::new(schema),
            None => self.schemas.push(Arc::new(schema)),
        }
        self.reindex();
        Ok(())
    }

    pub fn remove_schema(&mut self, name: &str) -> Option<Arc<ActionSchema>> {
        let i = *self.index.get(name)?;
        let s = self.schemas.remove(i);
        self.reindex();
        Some(s)
    }

    pub fn insert_effect(&mut self, name: &str, effect: Effect) -> Result<(), RuleError> {
        let mut s = self.schema(name).ok_or_else(|| RuleError::UnknownSchema(name.into()))?.clone();
        s.effects.push(effect);
        self.insert_schema(s)
    }

    pub fn insert_precondition(&mut self, name: &str, atom: Atom) -> Result<(), RuleError> {
        let mut s = self.schema(name).ok_or_else(|| RuleError::UnknownSchema(name.into()))?.clone();
        s.pre.push(atom);
        self.insert_schema(s)
    }

    pub fn set_parameter(&mut self, name: &str, value: i64) -> Result<(), RuleError> {
        let p = self
            .params
            .iter_mut()
            .find(|p| &*p.name == name)
            .ok_or_else(|| RuleError::UnknownParameter(name.into()))?;
        if value < p.lo || value > p.hi {
            return Err(RuleError::OutOfDomain { name: name.into(), value, lo: p.lo, hi: p.hi });
        }
        p.value = value;
        Ok(())
    }

    /// Declares a parameter; redeclaring replaces value and domain.
    pub fn add_parameter(&mut self, param: Parameter) -> Result<(), RuleError> {
        if param.lo > param.hi || param.value < param.lo || param.value > param.hi {
            return Err(RuleError::OutOfDomain {
                name: param.name.to_string(),
                value: param.value,
                lo: param.lo,
                hi: param.hi,
            });
        }
        match self.params.iter_mut().find(|p| p.name == param.name) {
            Some(p) => *p = param,
            None => self.params.push(param),
        }
        Ok(())
    }

    /// Adds a relation; an existing relation of the same kind is replaced.
    pub fn add_relation(&mut self, relation: Relation) {
        match self.relations.iter_mut().find(|r| r.kind() == relation.kind()) {
            Some(r) => *r = relation,
            None => self.relations.push(relation),
        }
    }

    pub fn apply_mutation(&mut self, m: &Mutation) -> Result<(), RuleError> {
        match m {
            Mutation::InsertSchema(s) => self.insert_schema(s.clone()),
            Mutation::InsertEffect { schema, effect } => self.insert_effect(schema, effect.clone()),
            Mutation::InsertPrecondition { schema, atom } => self.insert_precondition(schema, atom.clone()),
            Mutation::SetParameter { name, value } => self.set_parameter(name, *value),
            Mutation::AddParameter(p) => self.add_parameter(p.clone()),
            Mutation::AddRelation(r) => {
                self.add_relation(r.clone());
                Ok(())
            }
        }
    }

    pub fn homogeneity(&self) -> Option<(&GroupScope, Option<PlayerId>)> {
        self.relations.iter().find_map(|r| match r {
            Relation::Homogeneous { scope, exempt } => Some((scope, *exempt)),
            _ => None,
        })
    }

    pub fn validate_schema(&self, s: &ActionSchema) -> Result<(), RuleError> {
        let err = |m: String| Err(RuleError::Type(format!("{}: {m}", s.name)));
        let ty = |v: Var| s.params.get(v as usize).map(|p| &p.ty);
        let check_var = |v: Var, want: &str| -> Result<(), RuleError> {
            let ok = matches!(
                (ty(v), want),
                (Some(ParamType::Player), "player") | (Some(ParamType::Square), "square") | (Some(ParamType::Int(_)), "int")
            );
            if ok {
                Ok(())
            } else {
                Err(RuleError::Type(format!("{}: variable #{v} is not a {want}", s.name)))
            }
        };
        let check_role = |r: &Role| match r {
            Role::Var(v) => check_var(*v, "player"),
            Role::Owner(v) => check_var(*v, "square"),
            _ => Ok(()),
        };
        let check_term = |t: &Term| -> Result<(), RuleError> {
            match t {
                Term::Param(p) if self.parameter(p).is_none() => {
                    Err(RuleError::UnknownParameter(p.to_string()))
                }
                Term::Arg(v) => check_var(*v, "int"),
                Term::Price(v)
                | Term::MortgageValue(v)
                | Term::RedeemCost(v)
                | Term::HouseCost(v)
                | Term::HouseSale(v)
                | Term::RentDue(v)
                | Term::TaxDue(v)
                | Term::Houses(v) => check_var(*v, "square"),
                Term::Cash(r) | Term::JailTurns(r) => check_role(r),
                _ => Ok(()),
            }
        };
        let check_expr = |e: &Expr| -> Result<(), RuleError> {
            let mut res = Ok(());
            e.visit_terms(&mut |t| {
                if res.is_ok() {
                    res = check_term(t);
                }
            });
            res
        };
        let check_atom = |a: &Atom| -> Result<(), RuleError> {
            match &a.pred {
                Pred::InJail(r)
                | Pred::VoluntaryJail(r)
                | Pred::Bankrupt(r)
                | Pred::HasJailCard(r)
                | Pred::HasLoan(r)
                | Pred::LoanDue(r)
                | Pred::HasMonopoly(r)
                | Pred::Seat(r, _) => check_role(r),
                Pred::Distinct(a, b) => check_role(a).and(check_role(b)),
                Pred::Owns(r, v) | Pred::Monopoly(r, v) | Pred::CompletesGroup(r, v) => {
                    check_role(r).and(check_var(*v, "square"))
                }
                Pred::Unowned(v)
                | Pred::Mortgaged(v)
                | Pred::GroupImproved(v)
                | Pred::GroupMortgaged(v)
                | Pred::EvenBuildOk(v)
                | Pred::EvenSellOk(v)
                | Pred::BankHasBuilding(v)
                | Pred::BankCanBreak(v)
                | Pred::IsProperty(v)
                | Pred::PendingPurchase(v)
                | Pred::PendingRent(v)
                | Pred::PendingTax(v) => check_var(*v, "square"),
                Pred::Compare(x, _, y) => check_expr(x).and(check_expr(y)),
                _ => Ok(()),
            }
        };
        for a in &s.pre {
            check_atom(a)?;
        }
        let mut chance = 0;
        for e in &s.effects {
            for a in &e.guard {
                check_atom(a)?;
            }
            match &e.op {
                Op::Pay { from, to, amount } => {
                    check_role(from)?;
                    check_role(to)?;
                    check_expr(amount)?;
                }
                Op::Set { role, .. } | Op::LeaveJail(role) | Op::Add { role, .. } => check_role(role)?,
                Op::SetOwner { square, owner } => {
                    check_var(*square, "square")?;
                    if let Some(r) = owner {
                        check_role(r)?;
                    }
                }
                Op::SetMortgaged { square, .. } | Op::AddHouses { square, .. } => {
                    check_var(*square, "square")?
                }
                Op::PopPending => {}
                Op::Builtin(b) => match b {
                    Builtin::RollAndMove | Builtin::JailRoll | Builtin::DrawCard(_) => chance += 1,
                    Builtin::StartAuction(v) => check_var(*v, "square")?,
                    Builtin::Bid(x) => check_expr(x)?,
                    Builtin::OpenTrade { to, square, cash } => {
                        check_role(to)?;
                        check_var(*square, "square")?;
                        check_expr(cash)?;
                    }
                    Builtin::OpenLoan { lender, amount } => {
                        check_role(lender)?;
                        check_expr(amount)?;
                    }
                    Builtin::ResolveLoan { interest_pct, installments, .. } => {
                        check_expr(interest_pct)?;
                        check_expr(installments)?;
                    }
                    _ => {}
                },
            }
        }
        if chance > 1 {
            return err("at most one chance effect per schema".into());
        }
        for p in b_implicit(s) {
            if self.parameter(p).is_none() {
                return Err(RuleError::UnknownParameter(p.to_string()));
            }
        }
        Ok(())
    }
}

fn b_implicit(s: &ActionSchema) -> impl Iterator<Item = &'static str> + '_ {
    s.effects.iter().flat_map(|e| match &e.op {
        Op::Builtin(b) => b.implicit_params().iter().copied(),
        _ => [].iter().copied(),
    })
}

// ---------------------------------------------------------------------------
// Rendering in the schema file grammar

pub struct Named<'a, T: ?Sized>(pub &'a T, pub &'a [ParamDecl]);

fn var_name(params: &[ParamDecl], v: Var) -> String {
    match params.get(v as usize) {
        Some(p) => format!("?{}", p.name),
        None => format!("?v{v}"),
    }
}

impl fmt::Display for Named<'_, Role> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Role::Actor => f.write_str("?actor"),
            Role::Var(v) => f.write_str(&var_name(self.1, *v)),
            Role::Owner(v) => write!(f, "owner({})", var_name(self.1, *v)),
            Role::Bank => f.write_str("bank"),
        }
    }
}

impl fmt::Display for Named<'_, Term> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.1;
        let sq = |name: &str, v: &Var| format!("{name}({})", var_name(p, *v));
        match self.0 {
            Term::Const(c) => write!(f, "{c}"),
            Term::Param(n) => write!(f, "${n}"),
            Term::Arg(v) => f.write_str(&var_name(p, *v)),
            Term::Price(v) => f.write_str(&sq("price", v)),
            Term::MortgageValue(v) => f.write_str(&sq("mortgage_value", v)),
            Term::RedeemCost(v) => f.write_str(&sq("redeem_cost", v)),
            Term::HouseCost(v) => f.write_str(&sq("house_cost", v)),
            Term::HouseSale(v) => f.write_str(&sq("house_sale", v)),
            Term::RentDue(v) => f.write_str(&sq("rent_due", v)),
            Term::TaxDue(v) => f.write_str(&sq("tax_due", v)),
            Term::Houses(v) => f.write_str(&sq("houses", v)),
            Term::Cash(r) => write!(f, "cash({})", Named(r, p)),
            Term::JailTurns(r) => write!(f, "jail_turns({})", Named(r, p)),
            Term::AuctionPrice => f.write_str("auction_price"),
            Term::OffersMade => f.write_str("offers_made"),
        }
    }
}

impl fmt::Display for Named<'_, Expr> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Fully parenthesized below the top level, so the output reparses exactly.
        fn go(e: &Expr, p: &[ParamDecl], top: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            let (a, b, op) = match e {
                Expr::Term(t) => return write!(f, "{}", Named(t, p)),
                Expr::Add(a, b) => (a, b, "+"),
                Expr::Sub(a, b) => (a, b, "-"),
                Expr::Mul(a, b) => (a, b, "*"),
                Expr::Div(a, b) => (a, b, "/"),
            };
            if !top {
                f.write_str("(")?;
            }
            go(a, p, false, f)?;
            write!(f, " {op} ")?;
            go(b, p, false, f)?;
            if !top {
                f.write_str(")")?;
            }
            Ok(())
        }
        go(self.0, self.1, true, f)
    }
}

impl fmt::Display for Named<'_, Atom> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.1;
        if self.0.negated {
            f.write_str("not ")?;
        }
        let r = |x: &Role| Named(x, p).to_string();
        let v = |x: &Var| var_name(p, *x);
        match &self.0.pred {
            Pred::InJail(x) => write!(f, "in_jail({})", r(x)),
            Pred::VoluntaryJail(x) => write!(f, "voluntary_jail({})", r(x)),
            Pred::Bankrupt(x) => write!(f, "bankrupt({})", r(x)),
            Pred::HasJailCard(x) => write!(f, "has_jail_card({})", r(x)),
            Pred::HasLoan(x) => write!(f, "has_loan({})", r(x)),
            Pred::LoanDue(x) => write!(f, "loan_due({})", r(x)),
            Pred::HasMonopoly(x) => write!(f, "has_monopoly({})", r(x)),
            Pred::Seat(x, k) => write!(f, "seat({}, {})", r(x), player_name(*k)),
            Pred::Distinct(a, b) => write!(f, "distinct({}, {})", r(a), r(b)),
            Pred::Owns(x, s) => write!(f, "owns({}, {})", r(x), v(s)),
            Pred::Unowned(s) => write!(f, "unowned({})", v(s)),
            Pred::Mortgaged(s) => write!(f, "mortgaged({})", v(s)),
            Pred::Monopoly(x, s) => write!(f, "monopoly({}, {})", r(x), v(s)),
            Pred::CompletesGroup(x, s) => write!(f, "completes_group({}, {})", r(x), v(s)),
            Pred::GroupImproved(s) => write!(f, "group_improved({})", v(s)),
            Pred::GroupMortgaged(s) => write!(f, "group_mortgaged({})", v(s)),
            Pred::EvenBuildOk(s) => write!(f, "even_build_ok({})", v(s)),
            Pred::EvenSellOk(s) => write!(f, "even_sell_ok({})", v(s)),
            Pred::BankHasBuilding(s) => write!(f, "bank_has_building({})", v(s)),
            Pred::BankCanBreak(s) => write!(f, "bank_can_break({})", v(s)),
            Pred::IsProperty(s) => write!(f, "is_property({})", v(s)),
            Pred::PendingPurchase(s) => write!(f, "pending_purchase({})", v(s)),
            Pred::PendingRent(s) => write!(f, "pending_rent({})", v(s)),
            Pred::PendingTax(s) => write!(f, "pending_tax({})", v(s)),
            Pred::PendingCard(d) => write!(f, "pending_card({d})"),
            Pred::PendingJail => f.write_str("pending_jail"),
            Pred::AuctionOpen => f.write_str("auction_open"),
            Pred::AuctionComplete => f.write_str("auction_complete"),
            Pred::OfferTrade => f.write_str("offer_trade"),
            Pred::OfferLoan => f.write_str("offer_loan"),
            Pred::Compare(a, c, b) => {
                write!(f, "{} {} {}", Named(a, p), c.symbol(), Named(b, p))
            }
        }
    }
}

impl fmt::Display for Named<'_, Op> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.1;
        let r = |x: &Role| Named(x, p).to_string();
        let e = |x: &Expr| Named(x, p).to_string();
        let v = |x: &Var| var_name(p, *x);
        match self.0 {
            Op::Pay { from, to, amount } => write!(f, "pay({}, {}, {})", r(from), r(to), e(amount)),
            Op::Set { flag, role, value } => {
                let name = match flag {
                    Flag::InJail => "in_jail",
                    Flag::VoluntaryJail => "voluntary_jail",
                };
                write!(f, "set {name}({}) {value}", r(role))
            }
            Op::LeaveJail(x) => write!(f, "leave_jail({})", r(x)),
            Op::Add { counter, role, delta } => {
                let name = match counter {
                    Counter::JailTurns => "jail_turns",
                    Counter::JailCards => "jail_cards",
                };
                write!(f, "add {name}({}) {delta}", r(role))
            }
            Op::SetOwner { square, owner } => match owner {
                Some(o) => write!(f, "set owner({}) {}", v(square), r(o)),
                None => write!(f, "set owner({}) none", v(square)),
            },
            Op::SetMortgaged { square, value } => write!(f, "set mortgaged({}) {value}", v(square)),
            Op::AddHouses { square, delta } => write!(f, "add houses({}) {delta}", v(square)),
            Op::PopPending => f.write_str("pop_pending"),
            Op::Builtin(b) => match b {
                Builtin::RollAndMove => f.write_str("roll_and_move"),
                Builtin::JailRoll => f.write_str("jail_roll"),
                Builtin::DrawCard(d) => write!(f, "draw_card({d})"),
                Builtin::GoToJail => f.write_str("go_to_jail"),
                Builtin::EndTurn => f.write_str("end_turn"),
                Builtin::StartAuction(s) => write!(f, "start_auction({})", v(s)),
                Builtin::Bid(x) => write!(f, "bid({})", e(x)),
                Builtin::PassBid => f.write_str("pass_bid"),
                Builtin::CloseAuction => f.write_str("close_auction"),
                Builtin::OpenTrade { to, square, cash } => {
                    write!(f, "open_trade({}, {}, {})", r(to), v(square), e(cash))
                }
                Builtin::ResolveTrade(a) => write!(f, "resolve_trade({a})"),
                Builtin::OpenLoan { lender, amount } => write!(f, "open_loan({}, {})", r(lender), e(amount)),
                Builtin::ResolveLoan { accept, interest_pct, installments } => {
                    write!(f, "resolve_loan({accept}, {}, {})", e(interest_pct), e(installments))
                }
                Builtin::RepayLoan => f.write_str("repay_loan"),
            },
        }
    }
}

impl fmt::Display for Named<'_, Effect> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.0.guard.is_empty() {
            f.write_str("when ")?;
            for (i, a) in self.0.guard.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{}", Named(a, self.1))?;
            }
            f.write_str(": ")?;
        }
        write!(f, "{}", Named(&self.0.op, self.1))
    }
}

impl fmt::Display for ActionSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.params[..];
        writeln!(f, "schema {}", self.name)?;
        writeln!(f, "  phase {}", self.phase.name())?;
        if self.priority {
            writeln!(f, "  priority")?;
        }
        if !self.tags.is_empty() {
            writeln!(f, "  tags {}", self.tags.join(", "))?;
        }
        if !self.params.is_empty() {
            let decls: Vec<String> = self
                .params
                .iter()
                .map(|d| match &d.ty {
                    ParamType::Player => format!("?{}: player", d.name),
                    ParamType::Square => format!("?{}: square", d.name),
                    ParamType::Int(c) => {
                        let c: Vec<String> = c.iter().map(|x| x.to_string()).collect();
                        format!("?{}: int{{{}}}", d.name, c.join(","))
                    }
                })
                .collect();
            writeln!(f, "  params {}", decls.join(", "))?;
        }
        for a in &self.pre {
            writeln!(f, "  pre {}", Named(a, p))?;
        }
        for e in &self.effects {
            writeln!(f, "  eff {}", Named(e, p))?;
        }
        writeln!(f, "end")
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relation::EvenBuilding => f.write_str("relation even_building"),
            Relation::Homogeneous { scope, exempt } => {
                f.write_str("relation homogeneous ")?;
                match scope {
                    GroupScope::All => f.write_str("all")?,
                    GroupScope::Groups(g) => {
                        let g: Vec<String> = g.iter().map(|x| x.to_string()).collect();
                        write!(f, "groups {}", g.join(","))?
                    }
                }
                if let Some(e) = exempt {
                    write!(f, " exempt {}", player_name(*e))?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.params {
            writeln!(f, "parameter {} {} {}..{}", p.name, p.value, p.lo, p.hi)?;
        }
        for r in &self.relations {
            writeln!(f, "{r}")?;
        }
        for s in &self.schemas {
            writeln!(f)?;
            write!(f, "{s}")?;
        }
        Ok(())
    }
}
