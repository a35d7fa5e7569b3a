//! Rule interpreter: atom evaluation, legal-action enumeration and effect execution.
//!
//! Guards and amounts are evaluated on the pre-state of an action; the resolved
//! operations then run in order on the live state.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::action::{Action, Arg, Args, PlayerId};
use crate::board::{CardEffect, DeckKind, NearestTarget, SquareKind, BOARD_SIZE, MAX_LEVEL};
use crate::state::{Auction, GameState, Loan, Offer, Pending, Phase, RentMode, Stage};

use super::{
    ActionSchema, Atom, Builtin, Chance, Counter, Expr, Flag, Named, Op, ParamType, Pred,
    Relation, Role, RuleError, RuleSet, Term, Var,
};

pub const JAIL_SQUARE: u8 = 10;

/// Resolution of the single chance effect of a schema.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    None,
    Dice(u8, u8),
    Card(u8),
}

#[derive(Clone, Copy, Debug)]
pub struct Binding<'a> {
    pub actor: PlayerId,
    pub args: &'a [Arg],
}

impl Binding<'_> {
    fn square(&self, v: Var) -> u8 {
        match self.args.get(v as usize) {
            Some(Arg::Square(s)) => *s,
            _ => 0,
        }
    }

    fn int(&self, v: Var) -> i64 {
        match self.args.get(v as usize) {
            Some(Arg::Int(i)) => *i,
            _ => 0,
        }
    }
}

fn role_player(state: &GameState, b: &Binding, r: &Role) -> Option<PlayerId> {
    match r {
        Role::Actor => Some(b.actor),
        Role::Var(v) => match b.args.get(*v as usize) {
            Some(Arg::Player(p)) if (*p as usize) < state.players.len() => Some(*p),
            _ => None,
        },
        Role::Owner(v) => state.owner(b.square(*v)),
        Role::Bank => None,
    }
}

fn front_rent_mode(state: &GameState, sq: u8) -> RentMode {
    match state.pending.first() {
        Some(Pending::Rent { square, mode }) if *square == sq => *mode,
        _ => RentMode::Normal,
    }
}

/// Rent owed by a lander on `sq` under `mode`; zero when unowned or mortgaged.
pub fn compute_rent(state: &GameState, sq: u8, mode: RentMode) -> i64 {
    let st = state.square(sq);
    let Some(owner) = st.owner else { return 0 };
    if st.mortgaged {
        return 0;
    }
    let info = state.board.square(sq);
    let dice = (state.last_roll[0] + state.last_roll[1]) as i64;
    match info.kind {
        SquareKind::Property => {
            if st.houses > 0 {
                info.rents[st.houses as usize]
            } else {
                let g = state.board.group_of(sq).expect("property has a group");
                let base = info.rents[0];
                if state.has_monopoly(owner, g) {
                    2 * base
                } else {
                    base
                }
            }
        }
        SquareKind::Railroad => {
            let n = state.railroads_owned(owner).clamp(1, info.rents.len());
            let r = info.rents[n - 1];
            if mode == RentMode::DoubleRailroad {
                2 * r
            } else {
                r
            }
        }
        SquareKind::Utility => {
            if mode == RentMode::TenTimesDice {
                10 * dice
            } else {
                let n = state.utilities_owned(owner).clamp(1, info.rents.len());
                info.rents[n - 1] * dice
            }
        }
        _ => 0,
    }
}

fn tax_due(rules: &RuleSet, state: &GameState, sq: u8) -> i64 {
    state
        .board
        .square(sq)
        .tax_param
        .as_deref()
        .and_then(|p| rules.param_value(p))
        .unwrap_or(0)
}

fn eval_term(rules: &RuleSet, state: &GameState, b: &Binding, t: &Term) -> i64 {
    let board = &state.board;
    match t {
        Term::Const(c) => *c,
        Term::Param(p) => rules.param_value(p).unwrap_or(0),
        Term::Arg(v) => b.int(*v),
        Term::Price(v) => board.square(b.square(*v)).price(),
        Term::MortgageValue(v) => board.square(b.square(*v)).mortgage_value(),
        Term::RedeemCost(v) => board.square(b.square(*v)).redeem_cost(),
        Term::HouseCost(v) => board.square(b.square(*v)).house_cost(),
        Term::HouseSale(v) => board.square(b.square(*v)).house_sale(),
        Term::RentDue(v) => {
            let sq = b.square(*v);
            compute_rent(state, sq, front_rent_mode(state, sq))
        }
        Term::TaxDue(v) => tax_due(rules, state, b.square(*v)),
        Term::Houses(v) => state.square(b.square(*v)).houses as i64,
        Term::Cash(r) => match role_player(state, b, r) {
            Some(p) => state.player(p).cash,
            None => 0,
        },
        Term::JailTurns(r) => match role_player(state, b, r) {
            Some(p) => state.player(p).jail_turns as i64,
            None => 0,
        },
        Term::AuctionPrice => state.auction.as_ref().map(|a| board.square(a.square).price()).unwrap_or(0),
        Term::OffersMade => state.offers_made as i64,
    }
}

pub fn eval_expr(rules: &RuleSet, state: &GameState, b: &Binding, e: &Expr) -> i64 {
    match e {
        Expr::Term(t) => eval_term(rules, state, b, t),
        Expr::Add(x, y) => eval_expr(rules, state, b, x).saturating_add(eval_expr(rules, state, b, y)),
        Expr::Sub(x, y) => eval_expr(rules, state, b, x).saturating_sub(eval_expr(rules, state, b, y)),
        Expr::Mul(x, y) => eval_expr(rules, state, b, x).saturating_mul(eval_expr(rules, state, b, y)),
        Expr::Div(x, y) => {
            let d = eval_expr(rules, state, b, y);
            if d == 0 {
                0
            } else {
                eval_expr(rules, state, b, x).div_euclid(d)
            }
        }
    }
}

fn group_levels(state: &GameState, sq: u8) -> Option<(u8, u8)> {
    let g = state.board.group_of(sq)?;
    let lo = state.group_levels(g).min().unwrap_or(0);
    let hi = state.group_levels(g).max().unwrap_or(0);
    Some((lo, hi))
}

fn eval_pred(rules: &RuleSet, state: &GameState, b: &Binding, p: &Pred) -> bool {
    let player = |r: &Role| role_player(state, b, r);
    let front = state.pending.first();
    match p {
        Pred::InJail(r) => player(r).is_some_and(|p| state.player(p).in_jail),
        Pred::VoluntaryJail(r) => player(r).is_some_and(|p| state.player(p).voluntary_jail),
        Pred::Bankrupt(r) => player(r).is_some_and(|p| state.player(p).bankrupt),
        Pred::HasJailCard(r) => player(r).is_some_and(|p| state.player(p).jail_cards > 0),
        Pred::HasLoan(r) => player(r).is_some_and(|p| state.loans.iter().any(|l| l.borrower == p)),
        Pred::LoanDue(r) => player(r).is_some_and(|p| {
            let t = state.player(p).turns_started;
            state.loans.iter().any(|l| l.borrower == p && l.next_due <= t)
        }),
        Pred::HasMonopoly(r) => player(r).is_some_and(|p| state.monopolies(p).next().is_some()),
        Pred::Seat(r, k) => player(r) == Some(*k),
        Pred::Distinct(x, y) => match (player(x), player(y)) {
            (Some(a), Some(c)) => a != c,
            _ => false,
        },
        Pred::Owns(r, v) => player(r).is_some_and(|p| state.owner(b.square(*v)) == Some(p)),
        Pred::Unowned(v) => {
            let sq = b.square(*v);
            state.board.square(sq).kind.is_purchasable() && state.owner(sq).is_none()
        }
        Pred::Mortgaged(v) => state.square(b.square(*v)).mortgaged,
        Pred::Monopoly(r, v) => match (player(r), state.board.group_of(b.square(*v))) {
            (Some(p), Some(g)) => state.has_monopoly(p, g),
            _ => false,
        },
        Pred::CompletesGroup(r, v) => {
            let sq = b.square(*v);
            match (player(r), state.board.group_of(sq)) {
                (Some(p), Some(g)) => {
                    state.owner(sq) != Some(p)
                        && state.board.group(g).squares.iter().all(|&s| s == sq || state.owner(s) == Some(p))
                }
                _ => false,
            }
        }
        Pred::GroupImproved(v) => group_levels(state, b.square(*v)).is_some_and(|(_, hi)| hi > 0),
        Pred::GroupMortgaged(v) => match state.board.group_of(b.square(*v)) {
            Some(g) => state.board.group(g).squares.iter().any(|&s| state.square(s).mortgaged),
            None => state.square(b.square(*v)).mortgaged,
        },
        Pred::EvenBuildOk(v) => {
            let sq = b.square(*v);
            group_levels(state, sq).is_some_and(|(lo, _)| state.square(sq).houses == lo)
        }
        Pred::EvenSellOk(v) => {
            let sq = b.square(*v);
            group_levels(state, sq).is_some_and(|(_, hi)| state.square(sq).houses == hi)
        }
        Pred::BankHasBuilding(v) => {
            if state.square(b.square(*v)).houses == MAX_LEVEL - 1 {
                state.bank.hotels > 0
            } else {
                state.bank.houses > 0
            }
        }
        Pred::BankCanBreak(v) => state.square(b.square(*v)).houses < MAX_LEVEL || state.bank.houses >= 4,
        Pred::IsProperty(v) => state.board.square(b.square(*v)).kind == SquareKind::Property,
        Pred::PendingPurchase(v) => front == Some(&Pending::Purchase(b.square(*v))),
        Pred::PendingRent(v) => matches!(front, Some(Pending::Rent { square, .. }) if *square == b.square(*v)),
        Pred::PendingTax(v) => front == Some(&Pending::Tax(b.square(*v))),
        Pred::PendingCard(d) => front == Some(&Pending::Card(*d)),
        Pred::PendingJail => front == Some(&Pending::GoToJail),
        Pred::AuctionOpen => state.auction.as_ref().is_some_and(|a| a.current_bidder().is_some()),
        Pred::AuctionComplete => state.auction.as_ref().is_some_and(|a| a.current_bidder().is_none()),
        Pred::OfferTrade => matches!(state.offer, Some(Offer::Trade { .. })),
        Pred::OfferLoan => matches!(state.offer, Some(Offer::Loan { .. })),
        Pred::Compare(x, c, y) => c.holds(eval_expr(rules, state, b, x), eval_expr(rules, state, b, y)),
    }
}

pub fn eval_atom(rules: &RuleSet, state: &GameState, b: &Binding, a: &Atom) -> bool {
    eval_pred(rules, state, b, &a.pred) != a.negated
}

fn role_var(r: &Role) -> Option<Var> {
    match r {
        Role::Var(v) | Role::Owner(v) => Some(*v),
        _ => None,
    }
}

fn expr_max_var(e: &Expr) -> Option<Var> {
    let mut m: Option<Var> = None;
    e.visit_terms(&mut |t| {
        let v = match t {
            Term::Arg(v)
            | Term::Price(v)
            | Term::MortgageValue(v)
            | Term::RedeemCost(v)
            | Term::HouseCost(v)
            | Term::HouseSale(v)
            | Term::RentDue(v)
            | Term::TaxDue(v)
            | Term::Houses(v) => Some(*v),
            Term::Cash(r) | Term::JailTurns(r) => role_var(r),
            _ => None,
        };
        m = m.max(v);
    });
    m
}

/// Highest parameter index the atom reads, or `None` for atoms over the actor only.
fn atom_max_var(a: &Atom) -> Option<Var> {
    match &a.pred {
        Pred::InJail(r)
        | Pred::VoluntaryJail(r)
        | Pred::Bankrupt(r)
        | Pred::HasJailCard(r)
        | Pred::HasLoan(r)
        | Pred::LoanDue(r)
        | Pred::HasMonopoly(r)
        | Pred::Seat(r, _) => role_var(r),
        Pred::Distinct(x, y) => role_var(x).max(role_var(y)),
        Pred::Owns(r, v) | Pred::Monopoly(r, v) | Pred::CompletesGroup(r, v) => role_var(r).max(Some(*v)),
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
        | Pred::PendingTax(v) => Some(*v),
        Pred::PendingCard(_)
        | Pred::PendingJail
        | Pred::AuctionOpen
        | Pred::AuctionComplete
        | Pred::OfferTrade
        | Pred::OfferLoan => None,
        Pred::Compare(x, _, y) => expr_max_var(x).max(expr_max_var(y)),
    }
}

fn enumerate(
    rules: &RuleSet,
    state: &GameState,
    s: &ActionSchema,
    actor: PlayerId,
    levels: &[SmallVec<[usize; 4]>],
    args: &mut Args,
    out: &mut Vec<Action>,
) {
    let depth = args.len();
    if depth == s.params.len() {
        out.push(Action { name: s.name.clone(), actor, args: args.clone() });
        return;
    }
    let try_arg = |a: Arg, args: &mut Args, out: &mut Vec<Action>| {
        args.push(a);
        let b = Binding { actor, args };
        if levels[depth + 1].iter().all(|&i| eval_atom(rules, state, &b, &s.pre[i])) {
            enumerate(rules, state, s, actor, levels, args, out);
        }
        args.pop();
    };
    match &s.params[depth].ty {
        ParamType::Player => {
            for p in 0..state.players.len() as PlayerId {
                try_arg(Arg::Player(p), args, out);
            }
        }
        ParamType::Square => {
            for sq in 0..BOARD_SIZE as u8 {
                try_arg(Arg::Square(sq), args, out);
            }
        }
        ParamType::Int(choices) => {
            for &c in choices {
                try_arg(Arg::Int(c), args, out);
            }
        }
    }
}

/// All ground instances of one schema whose preconditions hold for `actor`,
/// ignoring solicitation, phase and priority.
pub fn schema_legal_instances(
    rules: &RuleSet,
    state: &GameState,
    s: &ActionSchema,
    actor: PlayerId,
    out: &mut Vec<Action>,
) {
    let mut levels: SmallVec<[SmallVec<[usize; 4]>; 4]> = SmallVec::new();
    levels.resize(s.params.len() + 1, SmallVec::new());
    for (i, a) in s.pre.iter().enumerate() {
        let l = atom_max_var(a).map(|v| v as usize + 1).unwrap_or(0).min(s.params.len());
        levels[l].push(i);
    }
    let b = Binding { actor, args: &[] };
    if !levels[0].iter().all(|&i| eval_atom(rules, state, &b, &s.pre[i])) {
        return;
    }
    let mut args = Args::new();
    enumerate(rules, state, s, actor, &levels, &mut args, out);
}

/// Legal actions of `player` under `rules`: empty unless the state solicits
/// that player; forced (priority) actions preempt all others.
pub fn legal_actions(rules: &RuleSet, state: &GameState, player: PlayerId) -> Vec<Action> {
    let mut out = Vec::new();
    if state.solicited() != Some(player) || state.player(player).bankrupt {
        return out;
    }
    let phase = state.phase();
    for s in rules.phase_schemas(phase).filter(|s| s.priority) {
        schema_legal_instances(rules, state, s, player, &mut out);
    }
    if !out.is_empty() {
        return out;
    }
    for s in rules.phase_schemas(phase).filter(|s| !s.priority) {
        schema_legal_instances(rules, state, s, player, &mut out);
    }
    out
}

fn check_args(state: &GameState, s: &ActionSchema, a: &Action) -> Result<(), RuleError> {
    let bad = |msg: String| Err(RuleError::BadArgs { schema: s.name.to_string(), msg });
    if a.args.len() != s.params.len() {
        return bad(format!("expected {} arguments, got {}", s.params.len(), a.args.len()));
    }
    for (d, arg) in s.params.iter().zip(a.args.iter()) {
        let ok = match (&d.ty, arg) {
            (ParamType::Player, Arg::Player(p)) => (*p as usize) < state.players.len(),
            (ParamType::Square, Arg::Square(sq)) => (*sq as usize) < BOARD_SIZE,
            (ParamType::Int(c), Arg::Int(v)) => c.contains(v),
            _ => false,
        };
        if !ok {
            return bad(format!("?{} cannot be {arg}", d.name));
        }
    }
    Ok(())
}

/// Failed precondition atoms of `action`, rendered in the schema grammar;
/// empty when every atom holds.
pub fn check_preconditions(rules: &RuleSet, state: &GameState, action: &Action) -> Result<Vec<String>, RuleError> {
    let s = rules.schema(&action.name).ok_or_else(|| RuleError::UnknownSchema(action.name.to_string()))?;
    check_args(state, s, action)?;
    let b = Binding { actor: action.actor, args: &action.args };
    Ok(s
        .pre
        .iter()
        .filter(|a| !eval_atom(rules, state, &b, a))
        .map(|a| Named(a, &s.params).to_string())
        .collect())
}

/// Admissible chance outcomes of `action`.
pub fn outcomes(rules: &RuleSet, state: &GameState, action: &Action) -> Vec<Outcome> {
    match rules.schema(&action.name).and_then(|s| s.chance()) {
        None => vec![Outcome::None],
        Some(Chance::Dice) => (1..=6).flat_map(|a| (1..=6).map(move |b| Outcome::Dice(a, b))).collect(),
        Some(Chance::Card(d)) => state.board.deck(d).iter().map(|&c| Outcome::Card(c)).collect(),
    }
}

/// Checked application: solicitation, phase, argument types, priority
/// preemption, preconditions and outcome kind are verified first.
pub fn apply(rules: &RuleSet, state: &mut GameState, action: &Action, outcome: Outcome) -> Result<(), RuleError> {
    let phase = state.phase();
    if phase == Phase::Terminal {
        return Err(RuleError::Terminal);
    }
    if state.solicited() != Some(action.actor) {
        return Err(RuleError::NotSolicited { player: crate::action::player_name(action.actor) });
    }
    let s = rules.schema(&action.name).ok_or_else(|| RuleError::UnknownSchema(action.name.to_string()))?;
    if s.phase != phase {
        return Err(RuleError::WrongPhase { schema: s.name.to_string(), phase: phase.name().into() });
    }
    check_args(state, s, action)?;
    if !s.priority {
        let mut forced = Vec::new();
        for p in rules.phase_schemas(phase).filter(|p| p.priority) {
            schema_legal_instances(rules, state, p, action.actor, &mut forced);
            if let Some(f) = forced.first() {
                return Err(RuleError::Preempted { schema: s.name.to_string(), by: f.to_string() });
            }
        }
    }
    let failed = check_preconditions(rules, state, action)?;
    if !failed.is_empty() {
        return Err(RuleError::Precondition { schema: s.name.to_string(), failed });
    }
    let ok = matches!(
        (s.chance(), outcome),
        (None, Outcome::None) | (Some(Chance::Dice), Outcome::Dice(..)) | (Some(Chance::Card(_)), Outcome::Card(_))
    );
    if !ok {
        return Err(RuleError::Outcome { schema: s.name.to_string(), expected: s.chance() });
    }
    apply_unchecked(rules, state, action, outcome);
    Ok(())
}

enum ROp {
    Pay { from: Option<PlayerId>, to: Option<PlayerId>, amount: i64 },
    Set { flag: Flag, p: PlayerId, value: bool },
    LeaveJail(PlayerId),
    Add { counter: Counter, p: PlayerId, delta: i64 },
    SetOwner { sq: u8, owner: Option<PlayerId> },
    SetMortgaged { sq: u8, value: bool },
    AddHouses { sq: u8, delta: i64 },
    PopPending,
    RollAndMove,
    JailRoll,
    DrawCard(DeckKind),
    GoToJail,
    EndTurn,
    StartAuction(u8),
    Bid(i64),
    PassBid,
    CloseAuction,
    OpenTrade { to: PlayerId, sq: u8, cash: i64 },
    ResolveTrade(bool),
    OpenLoan { lender: PlayerId, amount: i64 },
    ResolveLoan { accept: bool, interest_pct: i64, installments: i64 },
    RepayLoan,
}

/// Executes the schema's effects without legality checks. Unknown schema
/// names are a no-op.
pub fn apply_unchecked(rules: &RuleSet, state: &mut GameState, action: &Action, outcome: Outcome) {
    if let Some(s) = rules.schema(&action.name) {
        apply_schema(rules, s, state, action, outcome);
    }
}

/// Executes the effects of `s` (which need not belong to `rules`) for `action`.
pub fn apply_schema(rules: &RuleSet, s: &ActionSchema, state: &mut GameState, action: &Action, outcome: Outcome) {
    let b = Binding { actor: action.actor, args: &action.args };
    let mut ops: SmallVec<[ROp; 6]> = SmallVec::new();
    {
        let st: &GameState = state;
        let pl = |r: &Role| role_player(st, &b, r);
        let ex = |e: &Expr| eval_expr(rules, st, &b, e);
        for e in &s.effects {
            if !e.guard.iter().all(|a| eval_atom(rules, st, &b, a)) {
                continue;
            }
            let op = match &e.op {
                Op::Pay { from, to, amount } => {
                    let (f, t) = (pl(from), pl(to));
                    // A player role that resolves to nobody (e.g. owner of an unowned square) is inert.
                    if (f.is_none() && *from != Role::Bank) || (t.is_none() && *to != Role::Bank) {
                        continue;
                    }
                    ROp::Pay { from: f, to: t, amount: ex(amount) }
                }
                Op::Set { flag, role, value } => match pl(role) {
                    Some(p) => ROp::Set { flag: *flag, p, value: *value },
                    None => continue,
                },
                Op::LeaveJail(r) => match pl(r) {
                    Some(p) => ROp::LeaveJail(p),
                    None => continue,
                },
                Op::Add { counter, role, delta } => match pl(role) {
                    Some(p) => ROp::Add { counter: *counter, p, delta: *delta },
                    None => continue,
                },
                Op::SetOwner { square, owner } => {
                    let o = match owner {
                        Some(r) => match pl(r) {
                            Some(p) => Some(p),
                            None => continue,
                        },
                        None => None,
                    };
                    ROp::SetOwner { sq: b.square(*square), owner: o }
                }
                Op::SetMortgaged { square, value } => ROp::SetMortgaged { sq: b.square(*square), value: *value },
                Op::AddHouses { square, delta } => ROp::AddHouses { sq: b.square(*square), delta: *delta },
                Op::PopPending => ROp::PopPending,
                Op::Builtin(bi) => match bi {
                    Builtin::RollAndMove => ROp::RollAndMove,
                    Builtin::JailRoll => ROp::JailRoll,
                    Builtin::DrawCard(d) => ROp::DrawCard(*d),
                    Builtin::GoToJail => ROp::GoToJail,
                    Builtin::EndTurn => ROp::EndTurn,
                    Builtin::StartAuction(v) => ROp::StartAuction(b.square(*v)),
                    Builtin::Bid(x) => ROp::Bid(ex(x)),
                    Builtin::PassBid => ROp::PassBid,
                    Builtin::CloseAuction => ROp::CloseAuction,
                    Builtin::OpenTrade { to, square, cash } => match pl(to) {
                        Some(t) => ROp::OpenTrade { to: t, sq: b.square(*square), cash: ex(cash) },
                        None => continue,
                    },
                    Builtin::ResolveTrade(a) => ROp::ResolveTrade(*a),
                    Builtin::OpenLoan { lender, amount } => match pl(lender) {
                        Some(l) => ROp::OpenLoan { lender: l, amount: ex(amount) },
                        None => continue,
                    },
                    Builtin::ResolveLoan { accept, interest_pct, installments } => ROp::ResolveLoan {
                        accept: *accept,
                        interest_pct: ex(interest_pct),
                        installments: ex(installments),
                    },
                    Builtin::RepayLoan => ROp::RepayLoan,
                },
            };
            ops.push(op);
        }
    }
    let actor = action.actor;
    let move_before = state.player_turns;
    for op in ops {
        if state.player(actor).bankrupt && !matches!(op, ROp::EndTurn) {
            break;
        }
        exec(rules, state, actor, op, outcome);
    }
    // A mover who went bankrupt mid-action forfeits the rest of the move.
    if state.player_turns == move_before && state.player(state.turn).bankrupt && state.solvent_count() > 0 {
        end_move(state);
    }
}

fn exec(rules: &RuleSet, state: &mut GameState, actor: PlayerId, op: ROp, outcome: Outcome) {
    let param = |n: &str| rules.param_value(n).unwrap_or(0);
    match op {
        ROp::Pay { from, to, amount } => pay(state, from, to, amount),
        ROp::Set { flag, p, value } => {
            let pl = state.player_mut(p);
            match flag {
                Flag::InJail => pl.in_jail = value,
                Flag::VoluntaryJail => pl.voluntary_jail = value,
            }
        }
        ROp::LeaveJail(p) => leave_jail(state, p),
        ROp::Add { counter, p, delta } => {
            let pl = state.player_mut(p);
            let c = match counter {
                Counter::JailTurns => &mut pl.jail_turns,
                Counter::JailCards => &mut pl.jail_cards,
            };
            *c = (*c as i64 + delta).clamp(0, u8::MAX as i64) as u8;
        }
        ROp::SetOwner { sq, owner } => {
            if state.board.square(sq).kind.is_purchasable() {
                let st = &mut state.squares[sq as usize];
                st.owner = owner;
                if owner.is_none() {
                    st.mortgaged = false;
                }
            }
        }
        ROp::SetMortgaged { sq, value } => {
            if state.squares[sq as usize].owner.is_some() {
                state.squares[sq as usize].mortgaged = value;
            }
        }
        ROp::AddHouses { sq, delta } => {
            for _ in 0..delta.unsigned_abs() {
                add_house(state, sq, delta > 0);
            }
        }
        ROp::PopPending => {
            if !state.pending.is_empty() {
                state.pending.remove(0);
            }
        }
        ROp::RollAndMove => {
            let (a, b) = dice(outcome);
            state.last_roll = [a, b];
            if a == b {
                state.doubles += 1;
                if state.doubles as i64 >= param("max_doubles") {
                    go_to_jail(state, actor);
                    return;
                }
            } else {
                state.doubles = 0;
            }
            state.stage = Stage::PostRoll;
            advance(rules, state, actor, a + b);
        }
        ROp::JailRoll => {
            let (a, b) = dice(outcome);
            state.last_roll = [a, b];
            state.doubles = 0;
            state.stage = Stage::PostRoll;
            let pl = state.player_mut(actor);
            pl.voluntary_jail = false;
            if a == b {
                leave_jail(state, actor);
                advance(rules, state, actor, a + b);
            } else {
                pl.jail_turns = pl.jail_turns.saturating_add(1);
                if pl.jail_turns as i64 >= param("max_jail_turns") {
                    pay(state, Some(actor), None, param("jail_fine"));
                    if !state.player(actor).bankrupt {
                        leave_jail(state, actor);
                        advance(rules, state, actor, a + b);
                    }
                }
            }
        }
        ROp::DrawCard(d) => {
            state.decks[d.index()].advance();
            if let Outcome::Card(id) = outcome {
                resolve_card(rules, state, actor, id);
            }
        }
        ROp::GoToJail => go_to_jail(state, actor),
        ROp::EndTurn => end_move(state),
        ROp::StartAuction(sq) => {
            let n = state.players.len();
            let bidders = (0..n)
                .map(|d| ((actor as usize + d) % n) as PlayerId)
                .filter(|&p| !state.player(p).bankrupt)
                .collect();
            state.auction = Some(Auction { square: sq, bidders, next: 0, bids: SmallVec::new() });
        }
        ROp::Bid(amount) => {
            if let Some(a) = state.auction.as_mut() {
                if let Some(p) = a.current_bidder() {
                    a.bids.push((p, amount));
                }
                a.next += 1;
            }
        }
        ROp::PassBid => {
            if let Some(a) = state.auction.as_mut() {
                a.next += 1;
            }
        }
        ROp::CloseAuction => {
            if let Some(a) = state.auction.take() {
                let mut best: Option<(PlayerId, i64)> = None;
                for &(p, amt) in &a.bids {
                    if best.is_none_or(|(_, b)| amt > b) {
                        best = Some((p, amt));
                    }
                }
                if let Some((p, amt)) = best {
                    pay(state, Some(p), None, amt);
                    if !state.player(p).bankrupt {
                        state.squares[a.square as usize].owner = Some(p);
                    }
                }
            }
        }
        ROp::OpenTrade { to, sq, cash } => {
            state.offer = Some(Offer::Trade { from: actor, to, square: sq, cash });
            state.offers_made = state.offers_made.saturating_add(1);
        }
        ROp::ResolveTrade(accept) => {
            if let Some(Offer::Trade { from, to, square, cash }) = state.offer {
                state.offer = None;
                if accept && state.owner(square) == Some(to) {
                    pay(state, Some(from), Some(to), cash);
                    if !state.player(from).bankrupt {
                        state.squares[square as usize].owner = Some(from);
                    }
                }
            }
        }
        ROp::OpenLoan { lender, amount } => {
            state.offer = Some(Offer::Loan { borrower: actor, lender, amount });
            state.offers_made = state.offers_made.saturating_add(1);
        }
        ROp::ResolveLoan { accept, interest_pct, installments } => {
            if let Some(Offer::Loan { borrower, lender, amount }) = state.offer {
                state.offer = None;
                if accept {
                    pay(state, Some(lender), Some(borrower), amount);
                    if !state.player(lender).bankrupt && !state.player(borrower).bankrupt {
                        let due = state.player(borrower).turns_started + 1;
                        state.loans.push(Loan {
                            lender,
                            borrower,
                            remaining: amount * (100 + interest_pct) / 100,
                            installments_left: installments.clamp(1, 255) as u8,
                            next_due: due,
                        });
                    }
                }
            }
        }
        ROp::RepayLoan => repay_loan(state, actor),
    }
}

fn dice(outcome: Outcome) -> (u8, u8) {
    match outcome {
        Outcome::Dice(a, b) => (a, b),
        _ => (1, 2),
    }
}

fn leave_jail(state: &mut GameState, p: PlayerId) {
    let pl = state.player_mut(p);
    pl.in_jail = false;
    pl.jail_turns = 0;
    pl.voluntary_jail = false;
}

fn go_to_jail(state: &mut GameState, p: PlayerId) {
    let pl = state.player_mut(p);
    pl.position = JAIL_SQUARE;
    pl.in_jail = true;
    pl.jail_turns = 0;
    pl.voluntary_jail = false;
    state.doubles = 0;
    end_move(state);
}

/// Ends the current move: the same player goes again after doubles,
/// otherwise the next solvent seat starts a turn.
pub(crate) fn end_move(state: &mut GameState) {
    let mover = state.turn;
    state.player_turns += 1;
    state.offers_made = 0;
    state.pending.clear();
    state.auction = None;
    state.offer = None;
    state.stage = Stage::PreRoll;
    let again = state.doubles > 0 && !state.player(mover).in_jail && !state.player(mover).bankrupt;
    if !again {
        state.doubles = 0;
        let next = state.next_solvent_after(mover);
        state.turn = next;
        state.player_mut(next).turns_started += 1;
    }
}

fn advance(rules: &RuleSet, state: &mut GameState, p: PlayerId, steps: u8) {
    let from = state.player(p).position;
    let to = ((from as usize + steps as usize) % BOARD_SIZE) as u8;
    if from as usize + steps as usize >= BOARD_SIZE {
        pay(state, None, Some(p), rules.param_value("go_salary").unwrap_or(0));
    }
    state.player_mut(p).position = to;
    land(state, p, RentMode::Normal);
}

fn move_to(rules: &RuleSet, state: &mut GameState, p: PlayerId, target: u8) {
    let from = state.player(p).position;
    if target <= from {
        pay(state, None, Some(p), rules.param_value("go_salary").unwrap_or(0));
    }
    state.player_mut(p).position = target;
}

fn land(state: &mut GameState, p: PlayerId, mode: RentMode) {
    let sq = state.player(p).position;
    let info = state.board.square(sq);
    let pending = match info.kind {
        SquareKind::Property | SquareKind::Railroad | SquareKind::Utility => {
            let st = state.square(sq);
            match st.owner {
                None => Some(Pending::Purchase(sq)),
                Some(o) if o != p && !st.mortgaged => Some(Pending::Rent { square: sq, mode }),
                _ => None,
            }
        }
        SquareKind::Tax => Some(Pending::Tax(sq)),
        SquareKind::Chance => Some(Pending::Card(DeckKind::Chance)),
        SquareKind::CommunityChest => Some(Pending::Card(DeckKind::CommunityChest)),
        SquareKind::GoToJail => Some(Pending::GoToJail),
        _ => None,
    };
    if let Some(x) = pending {
        state.pending.push(x);
    }
}

fn resolve_card(rules: &RuleSet, state: &mut GameState, p: PlayerId, id: u8) {
    let effect = state.board.card(id).effect.clone();
    match effect {
        CardEffect::AdvanceTo { square } => {
            move_to(rules, state, p, square);
            land(state, p, RentMode::Normal);
        }
        CardEffect::AdvanceToNearest { target } => {
            let sq = state.board.nearest(state.player(p).position, target);
            move_to(rules, state, p, sq);
            let mode = match target {
                NearestTarget::Railroad => RentMode::DoubleRailroad,
                NearestTarget::Utility => RentMode::TenTimesDice,
            };
            land(state, p, mode);
        }
        CardEffect::Back { spaces } => {
            let pos = state.player(p).position as usize;
            state.player_mut(p).position = ((pos + BOARD_SIZE - spaces as usize) % BOARD_SIZE) as u8;
            land(state, p, RentMode::Normal);
        }
        CardEffect::Collect { amount } => pay(state, None, Some(p), amount),
        CardEffect::Pay { amount } => pay(state, Some(p), None, amount),
        CardEffect::CollectEach { amount } => {
            for q in 0..state.players.len() as PlayerId {
                if q != p && !state.player(q).bankrupt {
                    pay(state, Some(q), Some(p), amount);
                }
            }
        }
        CardEffect::PayEach { amount } => {
            for q in 0..state.players.len() as PlayerId {
                if q != p && !state.player(q).bankrupt && !state.player(p).bankrupt {
                    pay(state, Some(p), Some(q), amount);
                }
            }
        }
        CardEffect::Repairs { house, hotel } => {
            let (mut h, mut t) = (0i64, 0i64);
            for sq in state.owned_by(p) {
                match state.square(sq).houses {
                    0 => {}
                    MAX_LEVEL => t += 1,
                    n => h += n as i64,
                }
            }
            pay(state, Some(p), None, h * house + t * hotel);
        }
        CardEffect::GoToJail => go_to_jail(state, p),
        CardEffect::JailFree => {
            let pl = state.player_mut(p);
            pl.jail_cards = pl.jail_cards.saturating_add(1);
        }
    }
}

fn add_house(state: &mut GameState, sq: u8, up: bool) {
    let h = state.squares[sq as usize].houses;
    if up {
        if h >= MAX_LEVEL {
            return;
        }
        if h == MAX_LEVEL - 1 {
            state.bank.hotels = state.bank.hotels.saturating_sub(1);
            state.bank.houses = state.bank.houses.saturating_add(MAX_LEVEL - 1);
        } else {
            state.bank.houses = state.bank.houses.saturating_sub(1);
        }
        state.squares[sq as usize].houses = h + 1;
    } else {
        if h == 0 {
            return;
        }
        if h == MAX_LEVEL {
            state.bank.hotels = state.bank.hotels.saturating_add(1);
            state.bank.houses = state.bank.houses.saturating_sub(MAX_LEVEL - 1);
        } else {
            state.bank.houses = state.bank.houses.saturating_add(1);
        }
        state.squares[sq as usize].houses = h - 1;
    }
}

/// Returns every building on `sq` to the bank.
fn strip_buildings(state: &mut GameState, sq: u8) {
    let h = state.squares[sq as usize].houses;
    if h == MAX_LEVEL {
        state.bank.hotels = state.bank.hotels.saturating_add(1);
    } else {
        state.bank.houses = state.bank.houses.saturating_add(h);
    }
    state.squares[sq as usize].houses = 0;
}

/// Sells buildings evenly, then mortgages in ascending price order, until `p`
/// holds `target` cash or nothing is left to liquidate.
fn raise_cash(state: &mut GameState, p: PlayerId, target: i64) {
    while state.player(p).cash < target {
        let sell = state
            .owned_by(p)
            .filter(|&sq| {
                let h = state.square(sq).houses;
                h > 0
                    && (h < MAX_LEVEL || state.bank.houses >= MAX_LEVEL - 1)
                    && group_levels(state, sq).is_some_and(|(_, hi)| hi == h)
            })
            .max_by_key(|&sq| (state.square(sq).houses, std::cmp::Reverse(sq)));
        if let Some(sq) = sell {
            let sale = state.board.square(sq).house_sale();
            add_house(state, sq, false);
            state.player_mut(p).cash += sale;
            continue;
        }
        let mortgage = state
            .owned_by(p)
            .filter(|&sq| {
                !state.square(sq).mortgaged && group_levels(state, sq).is_none_or(|(_, hi)| hi == 0)
            })
            .min_by_key(|&sq| (state.board.square(sq).price(), sq));
        match mortgage {
            Some(sq) => {
                state.squares[sq as usize].mortgaged = true;
                let mv = state.board.square(sq).mortgage_value();
                state.player_mut(p).cash += mv;
            }
            None => break,
        }
    }
}

/// Transfer `amount` from `from` to `to` (`None` is the bank).
pub(crate) fn pay(state: &mut GameState, from: Option<PlayerId>, to: Option<PlayerId>, amount: i64) {
    if amount <= 0 || from == to {
        return;
    }
    let Some(f) = from else {
        if let Some(t) = to {
            state.player_mut(t).cash += amount;
        }
        return;
    };
    if state.player(f).bankrupt {
        return;
    }
    if state.player(f).cash < amount {
        raise_cash(state, f, amount);
    }
    if state.player(f).cash >= amount {
        state.player_mut(f).cash -= amount;
        if let Some(t) = to {
            state.player_mut(t).cash += amount;
        }
    } else {
        bankrupt(state, f, to);
    }
}

fn bankrupt(state: &mut GameState, p: PlayerId, creditor: Option<PlayerId>) {
    let cash = std::mem::take(&mut state.player_mut(p).cash);
    if let Some(c) = creditor {
        state.player_mut(c).cash += cash;
    }
    let owned: SmallVec<[u8; 28]> = state.owned_by(p).collect();
    for sq in owned {
        strip_buildings(state, sq);
        let st = &mut state.squares[sq as usize];
        match creditor {
            Some(c) => st.owner = Some(c),
            None => {
                st.owner = None;
                st.mortgaged = false;
            }
        }
    }
    let pl = state.player_mut(p);
    pl.bankrupt = true;
    pl.in_jail = false;
    pl.voluntary_jail = false;
    pl.jail_turns = 0;
    pl.jail_cards = 0;
    state.loans.retain(|l| l.borrower != p && l.lender != p);
    if state.offer.is_some_and(|o| o.proposer() == p || o.responder() == p) {
        state.offer = None;
    }
    if let Some(a) = state.auction.as_mut() {
        if let Some(i) = a.bidders.iter().position(|&b| b == p) {
            a.bidders.remove(i);
            if (i as u8) < a.next {
                a.next -= 1;
            }
        }
        a.bids.retain(|(b, _)| *b != p);
    }
}

fn repay_loan(state: &mut GameState, p: PlayerId) {
    let t = state.player(p).turns_started;
    let Some(i) = state.loans.iter().position(|l| l.borrower == p && l.next_due <= t) else { return };
    let loan = state.loans[i];
    let inst = loan.installment();
    if state.player(p).cash >= inst {
        pay(state, Some(p), Some(loan.lender), inst);
        let l = &mut state.loans[i];
        l.remaining -= inst;
        l.installments_left = l.installments_left.saturating_sub(1);
        l.next_due = t + 1;
        if l.installments_left == 0 || l.remaining <= 0 {
            state.loans.remove(i);
        }
        return;
    }
    // Default: the lender takes a lien on the most valuable unimproved property.
    state.loans.remove(i);
    let lien = state
        .owned_by(p)
        .filter(|&sq| group_levels(state, sq).is_none_or(|(_, hi)| hi == 0))
        .max_by_key(|&sq| (state.board.square(sq).price(), std::cmp::Reverse(sq)));
    match lien {
        Some(sq) => state.squares[sq as usize].owner = Some(loan.lender),
        None => pay(state, Some(p), Some(loan.lender), loan.remaining),
    }
}

/// Applies move-boundary relations for `mover`; true when anything changed.
pub fn enforce_relations(rules: &RuleSet, state: &mut GameState, mover: PlayerId) -> bool {
    let Some((scope, exempt)) = rules.homogeneity() else { return false };
    if exempt == Some(mover) || state.player(mover).bankrupt {
        return false;
    }
    let scope = scope.clone();
    let mut changed = false;
    for g in 0..state.board.groups.len() as u8 {
        if !scope.contains(g) || !state.has_monopoly(mover, g) {
            continue;
        }
        let lo = state.group_levels(g).min().unwrap_or(0);
        let hi = state.group_levels(g).max().unwrap_or(0);
        if lo == hi {
            continue;
        }
        let squares = state.board.group(g).squares.clone();
        for sq in squares {
            while state.squares[sq as usize].houses > lo {
                add_house(state, sq, false);
            }
        }
        changed = true;
    }
    changed
}

/// Names of relation constraints violated by `state`. With `mover` set, the
/// move-boundary relations are checked as if that player's move just ended.
pub fn relation_violations(rules: &RuleSet, state: &GameState, mover: Option<PlayerId>) -> Vec<String> {
    let mut out = Vec::new();
    for r in &rules.relations {
        match r {
            Relation::EvenBuilding => {
                for (g, grp) in state.board.groups.iter().enumerate() {
                    let lo = state.group_levels(g as u8).min().unwrap_or(0);
                    let hi = state.group_levels(g as u8).max().unwrap_or(0);
                    if hi - lo > 1 {
                        out.push(format!("even_building({})", grp.name));
                    }
                }
            }
            Relation::Homogeneous { scope, exempt } => {
                let Some(m) = mover else { continue };
                if *exempt == Some(m) {
                    continue;
                }
                for (g, grp) in state.board.groups.iter().enumerate() {
                    let g = g as u8;
                    if !scope.contains(g) || !state.has_monopoly(m, g) {
                        continue;
                    }
                    let lo = state.group_levels(g).min().unwrap_or(0);
                    let hi = state.group_levels(g).max().unwrap_or(0);
                    if lo != hi {
                        out.push(format!("homogeneous({})", grp.name));
                    }
                }
            }
        }
    }
    out
}
