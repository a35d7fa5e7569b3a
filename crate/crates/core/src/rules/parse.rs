//! Line-oriented parser for schema files.
//!
//! ```text
//! parameter jail_fine 50 1..500
//! relation even_building
//! schema pay_jail_fine
//!   phase pre_roll
//!   pre in_jail(?actor)
//!   pre cash(?actor) >= $jail_fine
//!   eff pay(?actor, bank, $jail_fine)
//!   eff leave_jail(?actor)
//! end
//! novelty jail_fine_easy
//!   category parameter
//!   difficulty easy
//!   set_parameter jail_fine 23
//! end
//! ```

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::board::{Board, DeckKind};
use crate::state::Phase;

use super::{
    ActionSchema, Atom, Builtin, Cmp, Counter, Effect, Expr, Flag, GroupScope, Mutation, Op,
    ParamDecl, ParamType, Parameter, Pred, Relation, Role, RuleError, RuleSet, Term, Var,
};

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedNovelty {
    pub id: String,
    pub category: String,
    pub difficulty: String,
    pub activation_game: Option<u32>,
    pub description: String,
    pub payload: Vec<Mutation>,
}

#[derive(Clone, Debug)]
pub struct ParsedFile {
    pub rules: RuleSet,
    pub novelties: Vec<ParsedNovelty>,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Var(String),
    Param(String),
    Int(i64),
    Sym(&'static str),
}

fn perr(line: usize, msg: impl Into<String>) -> RuleError {
    RuleError::Parse { line, msg: msg.into() }
}

fn tokenize(text: &str, line: usize) -> Result<Vec<Tok>, RuleError> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let ident = |i: &mut usize| {
        let start = *i;
        while *i < b.len() && (b[*i].is_ascii_alphanumeric() || b[*i] == b'_') {
            *i += 1;
        }
        text[start..*i].to_string()
    };
    while i < b.len() {
        let c = b[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c == b'?' || c == b'$' {
            i += 1;
            let name = ident(&mut i);
            if name.is_empty() {
                return Err(perr(line, "empty variable name"));
            }
            out.push(if c == b'?' { Tok::Var(name) } else { Tok::Param(name) });
        } else if c.is_ascii_digit() {
            let start = i;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            let v = text[start..i].parse().map_err(|_| perr(line, "integer overflow"))?;
            out.push(Tok::Int(v));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            out.push(Tok::Ident(ident(&mut i)));
        } else {
            let two = if i + 1 < b.len() { &text[i..i + 2] } else { "" };
            let sym: &'static str = match two {
                "<=" => "<=",
                ">=" => ">=",
                "==" => "==",
                "!=" => "!=",
                ".." => "..",
                _ => match c {
                    b'(' => "(",
                    b')' => ")",
                    b',' => ",",
                    b':' => ":",
                    b'+' => "+",
                    b'-' => "-",
                    b'*' => "*",
                    b'/' => "/",
                    b'<' => "<",
                    b'>' => ">",
                    b'{' => "{",
                    b'}' => "}",
                    _ => return Err(perr(line, format!("unexpected character `{}`", c as char))),
                },
            };
            i += sym.len();
            out.push(Tok::Sym(sym));
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    toks: Vec<Tok>,
    pos: usize,
    line: usize,
    params: &'a [ParamDecl],
    rules: &'a RuleSet,
}

const PREDICATES: &[&str] = &[
    "in_jail",
    "voluntary_jail",
    "bankrupt",
    "has_jail_card",
    "has_loan",
    "loan_due",
    "has_monopoly",
    "seat",
    "distinct",
    "owns",
    "unowned",
    "mortgaged",
    "monopoly",
    "completes_group",
    "group_improved",
    "group_mortgaged",
    "even_build_ok",
    "even_sell_ok",
    "bank_has_building",
    "bank_can_break",
    "is_property",
    "pending_purchase",
    "pending_rent",
    "pending_tax",
    "pending_card",
    "pending_jail",
    "auction_open",
    "auction_complete",
    "offer_trade",
    "offer_loan",
];

impl<'a> Cursor<'a> {
    fn new(text: &str, line: usize, params: &'a [ParamDecl], rules: &'a RuleSet) -> Result<Self, RuleError> {
        Ok(Cursor { toks: tokenize(text, line)?, pos: 0, line, params, rules })
    }

    fn err(&self, msg: impl Into<String>) -> RuleError {
        perr(self.line, msg)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Result<Tok, RuleError> {
        let t = self.toks.get(self.pos).cloned().ok_or_else(|| self.err("unexpected end of line"))?;
        self.pos += 1;
        Ok(t)
    }

    fn eat(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, sym: &str) -> Result<(), RuleError> {
        if self.eat(sym) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{sym}`, found {:?}", self.peek())))
        }
    }

    fn done(&self) -> Result<(), RuleError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(self.err(format!("trailing input {t:?}"))),
        }
    }

    fn ident(&mut self) -> Result<String, RuleError> {
        match self.next()? {
            Tok::Ident(s) => Ok(s),
            t => Err(self.err(format!("expected identifier, found {t:?}"))),
        }
    }

    fn int(&mut self) -> Result<i64, RuleError> {
        let neg = self.eat("-");
        match self.next()? {
            Tok::Int(v) => Ok(if neg { -v } else { v }),
            t => Err(self.err(format!("expected integer, found {t:?}"))),
        }
    }

    fn boolean(&mut self) -> Result<bool, RuleError> {
        match self.ident()?.as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            s => Err(self.err(format!("expected true/false, found `{s}`"))),
        }
    }

    fn var(&mut self) -> Result<Var, RuleError> {
        match self.next()? {
            Tok::Var(name) => self
                .params
                .iter()
                .position(|p| p.name == name)
                .map(|i| i as Var)
                .ok_or_else(|| self.err(format!("undeclared variable ?{name}"))),
            t => Err(self.err(format!("expected variable, found {t:?}"))),
        }
    }

    fn role(&mut self) -> Result<Role, RuleError> {
        match self.peek().cloned() {
            Some(Tok::Var(name)) if name == "actor" => {
                self.pos += 1;
                Ok(Role::Actor)
            }
            Some(Tok::Var(_)) => Ok(Role::Var(self.var()?)),
            Some(Tok::Ident(s)) if s == "bank" => {
                self.pos += 1;
                Ok(Role::Bank)
            }
            Some(Tok::Ident(s)) if s == "owner" => {
                self.pos += 1;
                self.expect("(")?;
                let v = self.var()?;
                self.expect(")")?;
                Ok(Role::Owner(v))
            }
            t => Err(self.err(format!("expected role, found {t:?}"))),
        }
    }

    fn deck(&mut self) -> Result<DeckKind, RuleError> {
        match self.ident()?.as_str() {
            "chance" => Ok(DeckKind::Chance),
            "community_chest" => Ok(DeckKind::CommunityChest),
            s => Err(self.err(format!("unknown deck `{s}`"))),
        }
    }

    fn player(&mut self) -> Result<u8, RuleError> {
        let s = self.ident()?;
        s.strip_prefix("player")
            .and_then(|n| n.parse::<u8>().ok())
            .filter(|&n| (1..=4).contains(&n))
            .map(|n| n - 1)
            .ok_or_else(|| self.err(format!("expected player1..player4, found `{s}`")))
    }

    fn expr(&mut self) -> Result<Expr, RuleError> {
        let mut lhs = self.product()?;
        loop {
            if self.eat("+") {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.product()?));
            } else if self.eat("-") {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.product()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn product(&mut self) -> Result<Expr, RuleError> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat("*") {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
            } else if self.eat("/") {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, RuleError> {
        if self.eat("(") {
            let e = self.expr()?;
            self.expect(")")?;
            return Ok(e);
        }
        if self.eat("-") {
            return match self.next()? {
                Tok::Int(v) => Ok(Expr::constant(-v)),
                t => Err(self.err(format!("expected integer after `-`, found {t:?}"))),
            };
        }
        let t = match self.next()? {
            Tok::Int(v) => Term::Const(v),
            Tok::Param(p) => {
                if self.rules.parameter(&p).is_none() {
                    return Err(RuleError::UnknownParameter(p));
                }
                Term::Param(Arc::from(p.as_str()))
            }
            Tok::Var(_) => {
                self.pos -= 1;
                Term::Arg(self.var()?)
            }
            Tok::Ident(name) => match name.as_str() {
                "auction_price" => Term::AuctionPrice,
                "offers_made" => Term::OffersMade,
                "cash" | "jail_turns" => {
                    self.expect("(")?;
                    let r = self.role()?;
                    self.expect(")")?;
                    if name == "cash" {
                        Term::Cash(r)
                    } else {
                        Term::JailTurns(r)
                    }
                }
                _ => {
                    self.expect("(")?;
                    let v = self.var()?;
                    self.expect(")")?;
                    match name.as_str() {
                        "price" => Term::Price(v),
                        "mortgage_value" => Term::MortgageValue(v),
                        "redeem_cost" => Term::RedeemCost(v),
                        "house_cost" => Term::HouseCost(v),
                        "house_sale" => Term::HouseSale(v),
                        "rent_due" => Term::RentDue(v),
                        "tax_due" => Term::TaxDue(v),
                        "houses" => Term::Houses(v),
                        _ => return Err(self.err(format!("unknown term `{name}`"))),
                    }
                }
            },
            t => return Err(self.err(format!("unexpected {t:?} in expression"))),
        };
        Ok(Expr::Term(t))
    }

    fn atom(&mut self) -> Result<Atom, RuleError> {
        let negated = matches!(self.peek(), Some(Tok::Ident(s)) if s == "not");
        if negated {
            self.pos += 1;
        }
        let pred = match self.peek().cloned() {
            Some(Tok::Ident(name)) if PREDICATES.contains(&name.as_str()) => {
                self.pos += 1;
                self.predicate(&name)?
            }
            _ => {
                let a = self.expr()?;
                let cmp = match self.next()? {
                    Tok::Sym("<") => Cmp::Lt,
                    Tok::Sym("<=") => Cmp::Le,
                    Tok::Sym(">") => Cmp::Gt,
                    Tok::Sym(">=") => Cmp::Ge,
                    Tok::Sym("==") => Cmp::Eq,
                    Tok::Sym("!=") => Cmp::Ne,
                    t => return Err(self.err(format!("expected comparison, found {t:?}"))),
                };
                Pred::Compare(a, cmp, self.expr()?)
            }
        };
        Ok(Atom { negated, pred })
    }

    fn predicate(&mut self, name: &str) -> Result<Pred, RuleError> {
        let nullary = match name {
            "pending_jail" => Some(Pred::PendingJail),
            "auction_open" => Some(Pred::AuctionOpen),
            "auction_complete" => Some(Pred::AuctionComplete),
            "offer_trade" => Some(Pred::OfferTrade),
            "offer_loan" => Some(Pred::OfferLoan),
            _ => None,
        };
        if let Some(p) = nullary {
            return Ok(p);
        }
        self.expect("(")?;
        let p = match name {
            "in_jail" => Pred::InJail(self.role()?),
            "voluntary_jail" => Pred::VoluntaryJail(self.role()?),
            "bankrupt" => Pred::Bankrupt(self.role()?),
            "has_jail_card" => Pred::HasJailCard(self.role()?),
            "has_loan" => Pred::HasLoan(self.role()?),
            "loan_due" => Pred::LoanDue(self.role()?),
            "has_monopoly" => Pred::HasMonopoly(self.role()?),
            "seat" => {
                let r = self.role()?;
                self.expect(",")?;
                Pred::Seat(r, self.player()?)
            }
            "distinct" => {
                let a = self.role()?;
                self.expect(",")?;
                Pred::Distinct(a, self.role()?)
            }
            "owns" | "monopoly" | "completes_group" => {
                let r = self.role()?;
                self.expect(",")?;
                let v = self.var()?;
                match name {
                    "owns" => Pred::Owns(r, v),
                    "monopoly" => Pred::Monopoly(r, v),
                    _ => Pred::CompletesGroup(r, v),
                }
            }
            "pending_card" => Pred::PendingCard(self.deck()?),
            _ => {
                let v = self.var()?;
                match name {
                    "unowned" => Pred::Unowned(v),
                    "mortgaged" => Pred::Mortgaged(v),
                    "group_improved" => Pred::GroupImproved(v),
                    "group_mortgaged" => Pred::GroupMortgaged(v),
                    "even_build_ok" => Pred::EvenBuildOk(v),
                    "even_sell_ok" => Pred::EvenSellOk(v),
                    "bank_has_building" => Pred::BankHasBuilding(v),
                    "bank_can_break" => Pred::BankCanBreak(v),
                    "is_property" => Pred::IsProperty(v),
                    "pending_purchase" => Pred::PendingPurchase(v),
                    "pending_rent" => Pred::PendingRent(v),
                    "pending_tax" => Pred::PendingTax(v),
                    _ => return Err(self.err(format!("unknown predicate `{name}`"))),
                }
            }
        };
        self.expect(")")?;
        Ok(p)
    }

    fn effect(&mut self) -> Result<Effect, RuleError> {
        let mut guard = Vec::new();
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == "when") {
            self.pos += 1;
            loop {
                guard.push(self.atom()?);
                if self.eat(":") {
                    break;
                }
                self.expect(",")?;
            }
        }
        Ok(Effect { guard, op: self.op()? })
    }

    fn op(&mut self) -> Result<Op, RuleError> {
        let name = self.ident()?;
        let op = match name.as_str() {
            "pay" => {
                self.expect("(")?;
                let from = self.role()?;
                self.expect(",")?;
                let to = self.role()?;
                self.expect(",")?;
                let amount = self.expr()?;
                self.expect(")")?;
                Op::Pay { from, to, amount }
            }
            "set" => {
                let field = self.ident()?;
                self.expect("(")?;
                match field.as_str() {
                    "in_jail" | "voluntary_jail" => {
                        let role = self.role()?;
                        self.expect(")")?;
                        let flag = if field == "in_jail" { Flag::InJail } else { Flag::VoluntaryJail };
                        Op::Set { flag, role, value: self.boolean()? }
                    }
                    "owner" => {
                        let square = self.var()?;
                        self.expect(")")?;
                        let owner = if matches!(self.peek(), Some(Tok::Ident(s)) if s == "none") {
                            self.pos += 1;
                            None
                        } else {
                            Some(self.role()?)
                        };
                        Op::SetOwner { square, owner }
                    }
                    "mortgaged" => {
                        let square = self.var()?;
                        self.expect(")")?;
                        Op::SetMortgaged { square, value: self.boolean()? }
                    }
                    _ => return Err(self.err(format!("cannot set `{field}`"))),
                }
            }
            "add" => {
                let field = self.ident()?;
                self.expect("(")?;
                match field.as_str() {
                    "jail_turns" | "jail_cards" => {
                        let role = self.role()?;
                        self.expect(")")?;
                        let counter =
                            if field == "jail_turns" { Counter::JailTurns } else { Counter::JailCards };
                        Op::Add { counter, role, delta: self.int()? }
                    }
                    "houses" => {
                        let square = self.var()?;
                        self.expect(")")?;
                        Op::AddHouses { square, delta: self.int()? }
                    }
                    _ => return Err(self.err(format!("cannot add to `{field}`"))),
                }
            }
            "leave_jail" => {
                self.expect("(")?;
                let r = self.role()?;
                self.expect(")")?;
                Op::LeaveJail(r)
            }
            "pop_pending" => Op::PopPending,
            "roll_and_move" => Op::Builtin(Builtin::RollAndMove),
            "jail_roll" => Op::Builtin(Builtin::JailRoll),
            "go_to_jail" => Op::Builtin(Builtin::GoToJail),
            "end_turn" => Op::Builtin(Builtin::EndTurn),
            "pass_bid" => Op::Builtin(Builtin::PassBid),
            "close_auction" => Op::Builtin(Builtin::CloseAuction),
            "repay_loan" => Op::Builtin(Builtin::RepayLoan),
            "draw_card" => {
                self.expect("(")?;
                let d = self.deck()?;
                self.expect(")")?;
                Op::Builtin(Builtin::DrawCard(d))
            }
            "start_auction" => {
                self.expect("(")?;
                let v = self.var()?;
                self.expect(")")?;
                Op::Builtin(Builtin::StartAuction(v))
            }
            "bid" => {
                self.expect("(")?;
                let e = self.expr()?;
                self.expect(")")?;
                Op::Builtin(Builtin::Bid(e))
            }
            "open_trade" => {
                self.expect("(")?;
                let to = self.role()?;
                self.expect(",")?;
                let square = self.var()?;
                self.expect(",")?;
                let cash = self.expr()?;
                self.expect(")")?;
                Op::Builtin(Builtin::OpenTrade { to, square, cash })
            }
            "resolve_trade" => {
                self.expect("(")?;
                let a = self.boolean()?;
                self.expect(")")?;
                Op::Builtin(Builtin::ResolveTrade(a))
            }
            "open_loan" => {
                self.expect("(")?;
                let lender = self.role()?;
                self.expect(",")?;
                let amount = self.expr()?;
                self.expect(")")?;
                Op::Builtin(Builtin::OpenLoan { lender, amount })
            }
            "resolve_loan" => {
                self.expect("(")?;
                let accept = self.boolean()?;
                self.expect(",")?;
                let interest_pct = self.expr()?;
                self.expect(",")?;
                let installments = self.expr()?;
                self.expect(")")?;
                Op::Builtin(Builtin::ResolveLoan { accept, interest_pct, installments })
            }
            _ => return Err(self.err(format!("unknown effect `{name}`"))),
        };
        Ok(op)
    }

    fn param_decls(&mut self) -> Result<Vec<ParamDecl>, RuleError> {
        let mut out = Vec::new();
        loop {
            let name = match self.next()? {
                Tok::Var(n) if n != "actor" => n,
                t => return Err(self.err(format!("expected parameter variable, found {t:?}"))),
            };
            self.expect(":")?;
            let ty = match self.ident()?.as_str() {
                "player" => ParamType::Player,
                "square" => ParamType::Square,
                "int" => {
                    self.expect("{")?;
                    let mut c = vec![self.int()?];
                    while self.eat(",") {
                        c.push(self.int()?);
                    }
                    self.expect("}")?;
                    ParamType::Int(c)
                }
                s => return Err(self.err(format!("unknown parameter type `{s}`"))),
            };
            if out.iter().any(|d: &ParamDecl| d.name == name) {
                return Err(self.err(format!("duplicate parameter ?{name}")));
            }
            out.push(ParamDecl { name, ty });
            if !self.eat(",") {
                return Ok(out);
            }
        }
    }

    fn relation(&mut self, board: &Board) -> Result<Relation, RuleError> {
        let kind = self.ident()?;
        match kind.as_str() {
            "even_building" => Ok(Relation::EvenBuilding),
            "homogeneous" => {
                let scope = match self.ident()?.as_str() {
                    "all" => GroupScope::All,
                    "groups" => {
                        let mut set = BTreeSet::new();
                        loop {
                            let gid = match self.next()? {
                                Tok::Int(v) if (v as usize) < board.groups.len() => v as u8,
                                Tok::Ident(n) => board
                                    .group_by_name(&n)
                                    .ok_or_else(|| self.err(format!("unknown group `{n}`")))?,
                                t => return Err(self.err(format!("bad group {t:?}"))),
                            };
                            set.insert(gid);
                            if !self.eat(",") {
                                break;
                            }
                        }
                        GroupScope::Groups(set)
                    }
                    s => return Err(self.err(format!("unknown scope `{s}`"))),
                };
                let mut exempt = None;
                if matches!(self.peek(), Some(Tok::Ident(s)) if s == "exempt") {
                    self.pos += 1;
                    exempt = Some(self.player()?);
                }
                Ok(Relation::Homogeneous { scope, exempt })
            }
            _ => Err(self.err(format!("unknown relation `{kind}`"))),
        }
    }

    fn parameter(&mut self) -> Result<Parameter, RuleError> {
        let name = self.ident()?;
        let value = self.int()?;
        let (lo, hi) = if self.peek().is_some() {
            let lo = self.int()?;
            self.expect("..")?;
            (lo, self.int()?)
        } else {
            (1, 500)
        };
        Ok(Parameter::with_domain(&name, value, lo, hi))
    }
}

fn strip(line: &str) -> &str {
    match line.find('#') {
        Some(i) => line[..i].trim(),
        None => line.trim(),
    }
}

fn split_kw(line: &str) -> (&str, &str) {
    match line.find(char::is_whitespace) {
        Some(i) => (&line[..i], line[i..].trim()),
        None => (line, ""),
    }
}

type Lines<'t> = std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'t>>>;

/// Parses one `schema … end` block; `header` is the text after `schema`.
fn schema_block(header: &str, line_no: usize, lines: &mut Lines<'_>, rules: &RuleSet) -> Result<ActionSchema, RuleError> {
    let name = header.trim();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(perr(line_no, format!("bad schema name `{name}`")));
    }
    let mut phase = None;
    let mut schema = ActionSchema::new(name, Phase::PostRoll);
    let mut body = Vec::new();
    loop {
        let (i, raw) = lines.next().ok_or_else(|| perr(line_no, format!("schema {name} lacks `end`")))?;
        let l = strip(raw);
        if l.is_empty() {
            continue;
        }
        let (kw, rest) = split_kw(l);
        match kw {
            "end" => break,
            "phase" => {
                phase = Some(Phase::parse(rest).ok_or_else(|| perr(i + 1, format!("unknown phase `{rest}`")))?)
            }
            "priority" => schema.priority = true,
            "tags" => schema.tags = rest.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect(),
            "params" => {
                let mut c = Cursor::new(rest, i + 1, &[], rules)?;
                schema.params = c.param_decls()?;
                c.done()?;
            }
            "pre" | "eff" => body.push((i + 1, kw, rest.to_string())),
            _ => return Err(perr(i + 1, format!("unexpected `{kw}` in schema"))),
        }
    }
    schema.phase = phase.ok_or_else(|| perr(line_no, format!("schema {name} lacks a phase")))?;
    for (ln, kw, text) in body {
        let mut c = Cursor::new(&text, ln, &schema.params, rules)?;
        if kw == "pre" {
            schema.pre.push(c.atom()?);
        } else {
            schema.effects.push(c.effect()?);
        }
        c.done()?;
    }
    rules.validate_schema(&schema).map_err(|e| perr(line_no, e.to_string()))?;
    Ok(schema)
}

fn novelty_block(
    id: &str,
    line_no: usize,
    lines: &mut Lines<'_>,
    scratch: &mut RuleSet,
) -> Result<ParsedNovelty, RuleError> {
    let mut n = ParsedNovelty {
        id: id.trim().to_string(),
        category: String::new(),
        difficulty: String::new(),
        activation_game: None,
        description: String::new(),
        payload: Vec::new(),
    };
    loop {
        let (i, raw) = lines.next().ok_or_else(|| perr(line_no, format!("novelty {} lacks `end`", n.id)))?;
        let l = strip(raw);
        if l.is_empty() {
            continue;
        }
        let ln = i + 1;
        let (kw, rest) = split_kw(l);
        let m = match kw {
            "end" => break,
            "category" => {
                n.category = rest.to_string();
                continue;
            }
            "difficulty" => {
                n.difficulty = rest.to_string();
                continue;
            }
            "description" => {
                n.description = rest.trim_matches('"').to_string();
                continue;
            }
            "activation_game" => {
                n.activation_game = Some(rest.parse().map_err(|_| perr(ln, "bad activation_game"))?);
                continue;
            }
            "set_parameter" => {
                let mut c = Cursor::new(rest, ln, &[], scratch)?;
                let name = c.ident()?;
                let value = c.int()?;
                c.done()?;
                Mutation::SetParameter { name, value }
            }
            "add_parameter" => {
                let mut c = Cursor::new(rest, ln, &[], scratch)?;
                let p = c.parameter()?;
                c.done()?;
                Mutation::AddParameter(p)
            }
            "add_relation" => {
                let board = scratch.board.clone();
                let mut c = Cursor::new(rest, ln, &[], scratch)?;
                let r = c.relation(&board)?;
                c.done()?;
                Mutation::AddRelation(r)
            }
            "insert_effect" | "insert_precondition" => {
                let (target, body) = split_kw(rest);
                let schema =
                    scratch.schema(target).ok_or_else(|| perr(ln, format!("unknown schema `{target}`")))?;
                let params = schema.params.clone();
                let mut c = Cursor::new(body, ln, &params, scratch)?;
                let m = if kw == "insert_effect" {
                    Mutation::InsertEffect { schema: target.to_string(), effect: c.effect()? }
                } else {
                    Mutation::InsertPrecondition { schema: target.to_string(), atom: c.atom()? }
                };
                c.done()?;
                m
            }
            "schema" => Mutation::InsertSchema(schema_block(rest, ln, lines, scratch)?),
            _ => return Err(perr(ln, format!("unexpected `{kw}` in novelty"))),
        };
        scratch.apply_mutation(&m).map_err(|e| perr(ln, e.to_string()))?;
        n.payload.push(m);
    }
    if n.category.is_empty() || n.difficulty.is_empty() {
        return Err(perr(line_no, format!("novelty {} needs category and difficulty", n.id)));
    }
    Ok(n)
}

/// Parses a rules file. Novelty blocks are validated against the rules
/// declared before them.
pub fn parse_rules(text: &str, board: Arc<Board>) -> Result<ParsedFile, RuleError> {
    parse_onto(text, RuleSet::empty(board))
}

/// Parses `text` on top of an existing rule set (e.g. a novelty catalog over the classic rules).
pub fn parse_onto(text: &str, mut rules: RuleSet) -> Result<ParsedFile, RuleError> {
    let mut novelties = Vec::new();
    let mut lines = text.lines().enumerate().peekable();
    while let Some((i, raw)) = lines.next() {
        let l = strip(raw);
        if l.is_empty() {
            continue;
        }
        let ln = i + 1;
        let (kw, rest) = split_kw(l);
        match kw {
            "parameter" => {
                let mut c = Cursor::new(rest, ln, &[], &rules)?;
                let p = c.parameter()?;
                c.done()?;
                rules.add_parameter(p).map_err(|e| perr(ln, e.to_string()))?;
            }
            "relation" => {
                let board = rules.board.clone();
                let mut c = Cursor::new(rest, ln, &[], &rules)?;
                let r = c.relation(&board)?;
                c.done()?;
                rules.add_relation(r);
            }
            "schema" => {
                let s = schema_block(rest, ln, &mut lines, &rules)?;
                if rules.schema(&s.name).is_some() {
                    return Err(perr(ln, format!("duplicate schema `{}`", s.name)));
                }
                rules.insert_schema(s).map_err(|e| perr(ln, e.to_string()))?;
            }
            "novelty" => {
                let mut scratch = rules.clone();
                novelties.push(novelty_block(rest, ln, &mut lines, &mut scratch)?);
            }
            _ => return Err(perr(ln, format!("unexpected `{kw}`"))),
        }
    }
    Ok(ParsedFile { rules, novelties })
}

/// Parses a single `schema … end` block against `rules`.
pub fn parse_schema(text: &str, rules: &RuleSet) -> Result<ActionSchema, RuleError> {
    let mut lines = text.lines().enumerate().peekable();
    while let Some((i, raw)) = lines.next() {
        let l = strip(raw);
        if l.is_empty() {
            continue;
        }
        let (kw, rest) = split_kw(l);
        if kw != "schema" {
            return Err(perr(i + 1, "expected `schema`"));
        }
        return schema_block(rest, i + 1, &mut lines, rules);
    }
    Err(perr(0, "empty schema text"))
}

pub fn parse_atom(text: &str, params: &[ParamDecl], rules: &RuleSet) -> Result<Atom, RuleError> {
    let mut c = Cursor::new(text, 1, params, rules)?;
    let a = c.atom()?;
    c.done()?;
    Ok(a)
}

pub fn parse_effect(text: &str, params: &[ParamDecl], rules: &RuleSet) -> Result<Effect, RuleError> {
    let mut c = Cursor::new(text, 1, params, rules)?;
    let e = c.effect()?;
    c.done()?;
    Ok(e)
}
