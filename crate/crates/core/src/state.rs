//! Game state values, the public fluent view and event records.
//!
//! Board-level facts (owner, mortgage, improvement level) live on the squares so
//! ownership exclusivity holds by construction; the per-player views required
//! by callers are derived on demand.

use std::fmt;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::action::{Action, PlayerId};
use crate::board::{Board, DeckKind, SquareKind, BOARD_SIZE, MAX_LEVEL};

pub const MAX_PLAYERS: usize = 4;
pub const BANK_HOUSES: u8 = 32;
pub const BANK_HOTELS: u8 = 12;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerState {
    pub id: PlayerId,
    pub cash: i64,
    pub position: u8,
    pub in_jail: bool,
    pub jail_turns: u8,
    pub voluntary_jail: bool,
    pub jail_cards: u8,
    pub bankrupt: bool,
    pub turns_started: u32,
}

impl PlayerState {
    pub fn new(id: PlayerId, cash: i64) -> PlayerState {
        PlayerState {
            id,
            cash,
            position: 0,
            in_jail: false,
            jail_turns: 0,
            voluntary_jail: false,
            jail_cards: 0,
            bankrupt: false,
            turns_started: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SquareState {
    pub owner: Option<PlayerId>,
    pub mortgaged: bool,
    /// Improvement level 0..=5, 5 being a hotel.
    pub houses: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bank {
    pub houses: u8,
    pub hotels: u8,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Deck {
    pub order: SmallVec<[u8; 16]>,
    pub next: u8,
}

impl Deck {
    pub fn top(&self) -> u8 {
        self.order[self.next as usize]
    }

    pub fn advance(&mut self) {
        self.next = ((self.next as usize + 1) % self.order.len()) as u8;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    PreRoll,
    PostRoll,
}

/// Phase solicited by the state; derived, never stored.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PreRoll,
    PostRoll,
    Auction,
    Trade,
    Loan,
    Terminal,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::PreRoll => "pre_roll",
            Phase::PostRoll => "post_roll",
            Phase::Auction => "auction",
            Phase::Trade => "trade",
            Phase::Loan => "loan",
            Phase::Terminal => "terminal",
        }
    }

    pub fn parse(s: &str) -> Option<Phase> {
        Some(match s {
            "pre_roll" => Phase::PreRoll,
            "post_roll" => Phase::PostRoll,
            "auction" => Phase::Auction,
            "trade" => Phase::Trade,
            "loan" => Phase::Loan,
            "terminal" => Phase::Terminal,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RentMode {
    Normal,
    /// Railroad reached by card: twice the normal rent.
    DoubleRailroad,
    /// Utility reached by card: ten times the last dice total.
    TenTimesDice,
}

/// Landing consequence waiting to be resolved by the turn-holder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pending {
    Purchase(u8),
    Rent { square: u8, mode: RentMode },
    Tax(u8),
    Card(DeckKind),
    GoToJail,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Auction {
    pub square: u8,
    pub bidders: SmallVec<[PlayerId; 4]>,
    pub next: u8,
    pub bids: SmallVec<[(PlayerId, i64); 4]>,
}

impl Auction {
    pub fn current_bidder(&self) -> Option<PlayerId> {
        self.bidders.get(self.next as usize).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Offer {
    Trade { from: PlayerId, to: PlayerId, square: u8, cash: i64 },
    Loan { borrower: PlayerId, lender: PlayerId, amount: i64 },
}

impl Offer {
    pub fn responder(&self) -> PlayerId {
        match *self {
            Offer::Trade { to, .. } => to,
            Offer::Loan { lender, .. } => lender,
        }
    }

    pub fn proposer(&self) -> PlayerId {
        match *self {
            Offer::Trade { from, .. } => from,
            Offer::Loan { borrower, .. } => borrower,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Loan {
    pub lender: PlayerId,
    pub borrower: PlayerId,
    /// Amount still owed, interest included.
    pub remaining: i64,
    pub installments_left: u8,
    /// Borrower's `turns_started` value at which the next installment is due.
    pub next_due: u32,
}

impl Loan {
    pub fn installment(&self) -> i64 {
        if self.installments_left <= 1 {
            self.remaining
        } else {
            self.remaining / self.installments_left as i64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameState {
    pub board: Arc<Board>,
    pub players: SmallVec<[PlayerState; MAX_PLAYERS]>,
    pub squares: [SquareState; BOARD_SIZE],
    pub bank: Bank,
    pub decks: [Deck; 2],
    pub turn: PlayerId,
    pub stage: Stage,
    pub pending: SmallVec<[Pending; 4]>,
    pub auction: Option<Auction>,
    pub offer: Option<Offer>,
    pub loans: SmallVec<[Loan; 2]>,
    pub doubles: u8,
    pub last_roll: [u8; 2],
    pub offers_made: u8,
    pub player_turns: u32,
    pub turn_cap: u32,
    pub time_step: u64,
    pub rng: ChaCha8Rng,
    pub history: Vec<EventRecord>,
    pub recording: bool,
}

impl GameState {
    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    pub fn player(&self, p: PlayerId) -> &PlayerState {
        &self.players[p as usize]
    }

    pub fn player_mut(&mut self, p: PlayerId) -> &mut PlayerState {
        &mut self.players[p as usize]
    }

    pub fn square(&self, s: u8) -> &SquareState {
        &self.squares[s as usize]
    }

    pub fn owner(&self, s: u8) -> Option<PlayerId> {
        self.squares[s as usize].owner
    }

    pub fn owned_by(&self, p: PlayerId) -> impl Iterator<Item = u8> + '_ {
        (0..BOARD_SIZE as u8).filter(move |&s| self.squares[s as usize].owner == Some(p))
    }

    pub fn mortgaged_by(&self, p: PlayerId) -> impl Iterator<Item = u8> + '_ {
        self.owned_by(p).filter(move |&s| self.squares[s as usize].mortgaged)
    }

    pub fn solvent(&self) -> impl Iterator<Item = PlayerId> + '_ {
        self.players.iter().filter(|p| !p.bankrupt).map(|p| p.id)
    }

    pub fn solvent_count(&self) -> usize {
        self.players.iter().filter(|p| !p.bankrupt).count()
    }

    /// True when `p` owns every square of the colour group `gid`.
    pub fn has_monopoly(&self, p: PlayerId, gid: u8) -> bool {
        self.board.group(gid).squares.iter().all(|&s| self.owner(s) == Some(p))
    }

    pub fn monopolies(&self, p: PlayerId) -> impl Iterator<Item = u8> + '_ {
        (0..self.board.groups.len() as u8).filter(move |&g| self.has_monopoly(p, g))
    }

    pub fn group_levels(&self, gid: u8) -> impl Iterator<Item = u8> + '_ {
        self.board.group(gid).squares.iter().map(|&s| self.squares[s as usize].houses)
    }

    pub fn railroads_owned(&self, p: PlayerId) -> usize {
        self.board.railroads().iter().filter(|&&s| self.owner(s) == Some(p)).count()
    }

    pub fn utilities_owned(&self, p: PlayerId) -> usize {
        self.board.utilities().iter().filter(|&&s| self.owner(s) == Some(p)).count()
    }

    /// Cash plus unmortgaged prices plus improvement cost, with outstanding
    /// loans counted as an asset of the lender and a debt of the borrower;
    /// used for the turn-cap verdict.
    pub fn net_worth(&self, p: PlayerId) -> i64 {
        let pl = self.player(p);
        if pl.bankrupt {
            return 0;
        }
        let mut total = pl.cash;
        for s in self.owned_by(p) {
            let sq = self.board.square(s);
            let st = self.square(s);
            if !st.mortgaged {
                total += sq.price();
            }
            total += sq.house_cost() * st.houses as i64;
        }
        total + self.loan_balance(p)
    }

    /// Loans owed to `p` minus loans `p` owes.
    pub fn loan_balance(&self, p: PlayerId) -> i64 {
        self.loans
            .iter()
            .map(|l| {
                if l.lender == p {
                    l.remaining
                } else if l.borrower == p {
                    -l.remaining
                } else {
                    0
                }
            })
            .sum()
    }

    pub fn is_over(&self) -> bool {
        self.solvent_count() <= 1 || self.player_turns >= self.turn_cap
    }

    pub fn phase(&self) -> Phase {
        if self.is_over() {
            Phase::Terminal
        } else if self.offer.is_some() {
            match self.offer {
                Some(Offer::Trade { .. }) => Phase::Trade,
                _ => Phase::Loan,
            }
        } else if self.auction.is_some() {
            Phase::Auction
        } else {
            match self.stage {
                Stage::PreRoll => Phase::PreRoll,
                Stage::PostRoll => Phase::PostRoll,
            }
        }
    }

    /// The seat whose input the state is waiting for.
    pub fn solicited(&self) -> Option<PlayerId> {
        match self.phase() {
            Phase::Terminal => None,
            Phase::Trade | Phase::Loan => self.offer.map(|o| o.responder()),
            Phase::Auction => {
                let a = self.auction.as_ref().expect("auction phase");
                Some(a.current_bidder().unwrap_or(self.turn))
            }
            _ => Some(self.turn),
        }
    }

    pub fn next_solvent_after(&self, p: PlayerId) -> PlayerId {
        let n = self.players.len();
        (1..=n)
            .map(|d| ((p as usize + d) % n) as PlayerId)
            .find(|&q| !self.players[q as usize].bankrupt)
            .unwrap_or(p)
    }

    pub fn loan_of(&self, borrower: PlayerId) -> Option<&Loan> {
        self.loans.iter().find(|l| l.borrower == borrower)
    }

    /// Copy with history dropped and recording disabled; used by simulators.
    pub fn detached(&self) -> GameState {
        GameState {
            board: self.board.clone(),
            players: self.players.clone(),
            squares: self.squares,
            bank: self.bank,
            decks: self.decks.clone(),
            turn: self.turn,
            stage: self.stage,
            pending: self.pending.clone(),
            auction: self.auction.clone(),
            offer: self.offer,
            loans: self.loans.clone(),
            doubles: self.doubles,
            last_roll: self.last_roll,
            offers_made: self.offers_made,
            player_turns: self.player_turns,
            turn_cap: self.turn_cap,
            time_step: self.time_step,
            rng: self.rng.clone(),
            history: Vec::new(),
            recording: false,
        }
    }

    /// Public view: hidden card order and dice stream replaced by canonical values.
    pub fn public_view(&self) -> GameState {
        let mut v = self.detached();
        v.rng = ChaCha8Rng::seed_from_u64(0);
        for kind in [DeckKind::Chance, DeckKind::CommunityChest] {
            let d = &mut v.decks[kind.index()];
            d.order = self.board.deck(kind).iter().copied().collect();
            d.next = 0;
        }
        v
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        for p in &self.players {
            if p.cash < 0 {
                return Err(format!("{} has negative cash {}", p.id, p.cash));
            }
            if p.bankrupt && self.owned_by(p.id).next().is_some() {
                return Err(format!("bankrupt player {} owns squares", p.id));
            }
        }
        for (i, sq) in self.squares.iter().enumerate() {
            let info = &self.board.squares[i];
            if sq.owner.is_some() && !info.kind.is_purchasable() {
                return Err(format!("square {i} is not purchasable but owned"));
            }
            if sq.mortgaged && sq.owner.is_none() {
                return Err(format!("square {i} mortgaged without owner"));
            }
            if sq.houses > 0 {
                if info.kind != SquareKind::Property || sq.owner.is_none() || sq.mortgaged {
                    return Err(format!("square {i} improved illegally"));
                }
                if sq.houses > MAX_LEVEL {
                    return Err(format!("square {i} above hotel level"));
                }
            }
        }
        for g in 0..self.board.groups.len() as u8 {
            let lo = self.group_levels(g).min().unwrap_or(0);
            let hi = self.group_levels(g).max().unwrap_or(0);
            if hi - lo > 1 {
                return Err(format!("group {} built unevenly ({lo}..{hi})", self.board.group(g).name));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Fluents

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fluent {
    Cash(PlayerId),
    Position(PlayerId),
    InJail(PlayerId),
    JailTurns(PlayerId),
    VoluntaryJail(PlayerId),
    JailCards(PlayerId),
    Bankrupt(PlayerId),
    TurnsStarted(PlayerId),
    Owner(u8),
    Mortgaged(u8),
    Houses(u8),
    BankHouses,
    BankHotels,
    Turn,
    Stage,
    Doubles,
    LastRoll,
    OffersMade,
    PlayerTurns,
    Pending,
    Auction,
    Offer,
    Loans,
}

impl Fluent {
    pub fn subject(&self) -> Option<PlayerId> {
        match *self {
            Fluent::Cash(p)
            | Fluent::Position(p)
            | Fluent::InJail(p)
            | Fluent::JailTurns(p)
            | Fluent::VoluntaryJail(p)
            | Fluent::JailCards(p)
            | Fluent::Bankrupt(p)
            | Fluent::TurnsStarted(p) => Some(p),
            _ => None,
        }
    }
}

impl fmt::Display for Fluent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use crate::action::player_name as pn;
        match *self {
            Fluent::Cash(p) => write!(f, "current_cash({})", pn(p)),
            Fluent::Position(p) => write!(f, "position({})", pn(p)),
            Fluent::InJail(p) => write!(f, "in_jail({})", pn(p)),
            Fluent::JailTurns(p) => write!(f, "jail_turns({})", pn(p)),
            Fluent::VoluntaryJail(p) => write!(f, "voluntary_jail({})", pn(p)),
            Fluent::JailCards(p) => write!(f, "jail_cards({})", pn(p)),
            Fluent::Bankrupt(p) => write!(f, "bankrupt({})", pn(p)),
            Fluent::TurnsStarted(p) => write!(f, "turns_started({})", pn(p)),
            Fluent::Owner(s) => write!(f, "asset_owner(sq{s})"),
            Fluent::Mortgaged(s) => write!(f, "asset_mortgaged(sq{s})"),
            Fluent::Houses(s) => write!(f, "houses(sq{s})"),
            Fluent::BankHouses => f.write_str("bank_houses"),
            Fluent::BankHotels => f.write_str("bank_hotels"),
            Fluent::Turn => f.write_str("turn"),
            Fluent::Stage => f.write_str("stage"),
            Fluent::Doubles => f.write_str("doubles"),
            Fluent::LastRoll => f.write_str("last_roll"),
            Fluent::OffersMade => f.write_str("offers_made"),
            Fluent::PlayerTurns => f.write_str("player_turns"),
            Fluent::Pending => f.write_str("pending"),
            Fluent::Auction => f.write_str("auction"),
            Fluent::Offer => f.write_str("offer"),
            Fluent::Loans => f.write_str("loans"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Int(i64),
    Bool(bool),
    Player(Option<PlayerId>),
    Stage(Stage),
    Roll([u8; 2]),
    Pending(Vec<Pending>),
    Auction(Option<Auction>),
    Offer(Option<Offer>),
    Loans(Vec<Loan>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Player(p) => match p {
                Some(p) => f.write_str(&crate::action::player_name(*p)),
                None => f.write_str("none"),
            },
            other => write!(f, "{}", serde_json::to_string(other).unwrap_or_default()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FluentChange {
    pub fluent: Fluent,
    pub before: Value,
    pub after: Value,
}

/// Every public fluent that differs between `a` and `b`, in a fixed order.
/// Hidden components (card order, dice stream) are not fluents.
pub fn diff(a: &GameState, b: &GameState) -> Vec<FluentChange> {
    let mut out = Vec::new();
    let mut push = |fluent: Fluent, before: Value, after: Value| {
        out.push(FluentChange { fluent, before, after });
    };
    let n = a.players.len().max(b.players.len());
    for i in 0..n {
        let (pa, pb) = match (a.players.get(i), b.players.get(i)) {
            (Some(x), Some(y)) => (x, y),
            _ => continue,
        };
        let p = i as PlayerId;
        if pa == pb {
            continue;
        }
        if pa.cash != pb.cash {
            push(Fluent::Cash(p), Value::Int(pa.cash), Value::Int(pb.cash));
        }
        if pa.position != pb.position {
            push(Fluent::Position(p), Value::Int(pa.position as i64), Value::Int(pb.position as i64));
        }
        if pa.in_jail != pb.in_jail {
            push(Fluent::InJail(p), Value::Bool(pa.in_jail), Value::Bool(pb.in_jail));
        }
        if pa.jail_turns != pb.jail_turns {
            push(Fluent::JailTurns(p), Value::Int(pa.jail_turns as i64), Value::Int(pb.jail_turns as i64));
        }
        if pa.voluntary_jail != pb.voluntary_jail {
            push(Fluent::VoluntaryJail(p), Value::Bool(pa.voluntary_jail), Value::Bool(pb.voluntary_jail));
        }
        if pa.jail_cards != pb.jail_cards {
            push(Fluent::JailCards(p), Value::Int(pa.jail_cards as i64), Value::Int(pb.jail_cards as i64));
        }
        if pa.bankrupt != pb.bankrupt {
            push(Fluent::Bankrupt(p), Value::Bool(pa.bankrupt), Value::Bool(pb.bankrupt));
        }
        if pa.turns_started != pb.turns_started {
            push(
                Fluent::TurnsStarted(p),
                Value::Int(pa.turns_started as i64),
                Value::Int(pb.turns_started as i64),
            );
        }
    }
    for s in 0..BOARD_SIZE {
        let (x, y) = (&a.squares[s], &b.squares[s]);
        if x == y {
            continue;
        }
        let s = s as u8;
        if x.owner != y.owner {
            push(Fluent::Owner(s), Value::Player(x.owner), Value::Player(y.owner));
        }
        if x.mortgaged != y.mortgaged {
            push(Fluent::Mortgaged(s), Value::Bool(x.mortgaged), Value::Bool(y.mortgaged));
        }
        if x.houses != y.houses {
            push(Fluent::Houses(s), Value::Int(x.houses as i64), Value::Int(y.houses as i64));
        }
    }
    if a.bank.houses != b.bank.houses {
        push(Fluent::BankHouses, Value::Int(a.bank.houses as i64), Value::Int(b.bank.houses as i64));
    }
    if a.bank.hotels != b.bank.hotels {
        push(Fluent::BankHotels, Value::Int(a.bank.hotels as i64), Value::Int(b.bank.hotels as i64));
    }
    if a.turn != b.turn {
        push(Fluent::Turn, Value::Player(Some(a.turn)), Value::Player(Some(b.turn)));
    }
    if a.stage != b.stage {
        push(Fluent::Stage, Value::Stage(a.stage), Value::Stage(b.stage));
    }
    if a.doubles != b.doubles {
        push(Fluent::Doubles, Value::Int(a.doubles as i64), Value::Int(b.doubles as i64));
    }
    if a.last_roll != b.last_roll {
        push(Fluent::LastRoll, Value::Roll(a.last_roll), Value::Roll(b.last_roll));
    }
    if a.offers_made != b.offers_made {
        push(Fluent::OffersMade, Value::Int(a.offers_made as i64), Value::Int(b.offers_made as i64));
    }
    if a.player_turns != b.player_turns {
        push(Fluent::PlayerTurns, Value::Int(a.player_turns as i64), Value::Int(b.player_turns as i64));
    }
    if a.pending != b.pending {
        push(Fluent::Pending, Value::Pending(a.pending.to_vec()), Value::Pending(b.pending.to_vec()));
    }
    if a.auction != b.auction {
        push(Fluent::Auction, Value::Auction(a.auction.clone()), Value::Auction(b.auction.clone()));
    }
    if a.offer != b.offer {
        push(Fluent::Offer, Value::Offer(a.offer), Value::Offer(b.offer));
    }
    if a.loans != b.loans {
        push(Fluent::Loans, Value::Loans(a.loans.to_vec()), Value::Loans(b.loans.to_vec()));
    }
    out
}

/// True when the public fluents of both states agree.
pub fn same_public(a: &GameState, b: &GameState) -> bool {
    a.players == b.players
        && a.squares == b.squares
        && a.bank == b.bank
        && a.turn == b.turn
        && a.stage == b.stage
        && a.doubles == b.doubles
        && a.last_roll == b.last_roll
        && a.offers_made == b.offers_made
        && a.player_turns == b.player_turns
        && a.pending == b.pending
        && a.auction == b.auction
        && a.offer == b.offer
        && a.loans == b.loans
}

#[derive(Debug, thiserror::Error)]
#[error("fluent {fluent} cannot take value {value}")]
pub struct ApplyChangeError {
    pub fluent: Fluent,
    pub value: Value,
}

/// Write the `after` value of every change into `state`.
pub fn apply_changes(state: &mut GameState, changes: &[FluentChange]) -> Result<(), ApplyChangeError> {
    for c in changes {
        set_fluent(state, c.fluent, &c.after)?;
    }
    Ok(())
}

pub fn set_fluent(state: &mut GameState, fluent: Fluent, value: &Value) -> Result<(), ApplyChangeError> {
    let bad = || ApplyChangeError { fluent, value: value.clone() };
    let int = |v: &Value| match v {
        Value::Int(i) => Some(*i),
        _ => None,
    };
    let boolean = |v: &Value| match v {
        Value::Bool(b) => Some(*b),
        _ => None,
    };
    if let Some(p) = fluent.subject() {
        if p as usize >= state.players.len() {
            return Err(bad());
        }
    }
    match fluent {
        Fluent::Cash(p) => state.player_mut(p).cash = int(value).ok_or_else(bad)?,
        Fluent::Position(p) => state.player_mut(p).position = int(value).ok_or_else(bad)? as u8,
        Fluent::InJail(p) => state.player_mut(p).in_jail = boolean(value).ok_or_else(bad)?,
        Fluent::JailTurns(p) => state.player_mut(p).jail_turns = int(value).ok_or_else(bad)? as u8,
        Fluent::VoluntaryJail(p) => state.player_mut(p).voluntary_jail = boolean(value).ok_or_else(bad)?,
        Fluent::JailCards(p) => state.player_mut(p).jail_cards = int(value).ok_or_else(bad)? as u8,
        Fluent::Bankrupt(p) => state.player_mut(p).bankrupt = boolean(value).ok_or_else(bad)?,
        Fluent::TurnsStarted(p) => state.player_mut(p).turns_started = int(value).ok_or_else(bad)? as u32,
        Fluent::Owner(s) => match value {
            Value::Player(o) => state.squares[s as usize].owner = *o,
            _ => return Err(bad()),
        },
        Fluent::Mortgaged(s) => state.squares[s as usize].mortgaged = boolean(value).ok_or_else(bad)?,
        Fluent::Houses(s) => state.squares[s as usize].houses = int(value).ok_or_else(bad)? as u8,
        Fluent::BankHouses => state.bank.houses = int(value).ok_or_else(bad)? as u8,
        Fluent::BankHotels => state.bank.hotels = int(value).ok_or_else(bad)? as u8,
        Fluent::Turn => match value {
            Value::Player(Some(p)) => state.turn = *p,
            _ => return Err(bad()),
        },
        Fluent::Stage => match value {
            Value::Stage(s) => state.stage = *s,
            _ => return Err(bad()),
        },
        Fluent::Doubles => state.doubles = int(value).ok_or_else(bad)? as u8,
        Fluent::LastRoll => match value {
            Value::Roll(r) => state.last_roll = *r,
            _ => return Err(bad()),
        },
        Fluent::OffersMade => state.offers_made = int(value).ok_or_else(bad)? as u8,
        Fluent::PlayerTurns => state.player_turns = int(value).ok_or_else(bad)? as u32,
        Fluent::Pending => match value {
            Value::Pending(v) => state.pending = v.iter().copied().collect(),
            _ => return Err(bad()),
        },
        Fluent::Auction => match value {
            Value::Auction(a) => state.auction = a.clone(),
            _ => return Err(bad()),
        },
        Fluent::Offer => match value {
            Value::Offer(o) => state.offer = *o,
            _ => return Err(bad()),
        },
        Fluent::Loans => match value {
            Value::Loans(v) => state.loans = v.iter().copied().collect(),
            _ => return Err(bad()),
        },
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Events

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Player(PlayerId),
    Bank,
}

/// One accounted state change. `action` is `None` for rule enforcement that
/// no agent chose (setup, end-of-move relation checks).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time_step: u64,
    pub actor: Actor,
    pub action: Option<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub cash_deltas: Vec<(PlayerId, i64)>,
    pub state_deltas: Vec<FluentChange>,
}

impl EventRecord {
    pub fn from_transition(
        time_step: u64,
        actor: Actor,
        action: Option<Action>,
        before: &GameState,
        after: &GameState,
    ) -> EventRecord {
        let mut cash_deltas = Vec::new();
        let mut state_deltas = Vec::new();
        for c in diff(before, after) {
            match (c.fluent, &c.before, &c.after) {
                (Fluent::Cash(p), Value::Int(x), Value::Int(y)) => cash_deltas.push((p, y - x)),
                _ => state_deltas.push(c),
            }
        }
        EventRecord { time_step, actor, action, note: None, cash_deltas, state_deltas }
    }

    /// Players whose fluents or cash this event touched, plus the actor.
    pub fn involved_players(&self) -> Vec<PlayerId> {
        let mut v: Vec<PlayerId> = self.cash_deltas.iter().map(|(p, _)| *p).collect();
        v.extend(self.state_deltas.iter().filter_map(|c| c.fluent.subject()));
        if let Actor::Player(p) = self.actor {
            v.push(p);
        }
        if let Some(a) = &self.action {
            v.extend(a.args.iter().filter_map(|x| match x {
                crate::action::Arg::Player(p) => Some(*p),
                _ => None,
            }));
        }
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Reconstruct the post-event state from the pre-event state.
    pub fn apply_to(&self, state: &mut GameState) -> Result<(), ApplyChangeError> {
        for &(p, d) in &self.cash_deltas {
            if p as usize >= state.players.len() {
                return Err(ApplyChangeError { fluent: Fluent::Cash(p), value: Value::Int(d) });
            }
            state.player_mut(p).cash += d;
        }
        apply_changes(state, &self.state_deltas)?;
        state.time_step = self.time_step;
        Ok(())
    }
}
