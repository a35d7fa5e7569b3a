//! Baseline agents: a rule-of-thumb heuristic, a uniform random player and
//! the rollout planner wrapped around a novelty handler.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{Action, PlayerId};
use crate::board::SquareKind;
use crate::engine::Observation;
use crate::handler::NoveltyHandler;
use crate::kb::KnowledgeBase;
use crate::planner::{choose_action, RolloutConfig};
use crate::state::{GameState, Offer, Phase};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicPolicy {
    /// Colour groups bought even when cash runs close to the reserve.
    pub targets: Vec<String>,
    /// Cash the policy tries to keep in hand.
    pub reserve: i64,
    pub avoid_utilities: bool,
}

impl Default for HeuristicPolicy {
    fn default() -> Self {
        HeuristicPolicy {
            targets: ["orange", "red", "light_blue"].map(String::from).to_vec(),
            reserve: 200,
            avoid_utilities: true,
        }
    }
}

impl HeuristicPolicy {
    fn targeted(&self, state: &GameState, sq: u8) -> bool {
        state.board.square(sq).group.as_ref().is_some_and(|g| self.targets.contains(g))
    }

    fn avoided(&self, state: &GameState, sq: u8) -> bool {
        self.avoid_utilities && state.board.square(sq).kind == SquareKind::Utility
    }
}

/// Whether buying `sq` would give `p` the whole colour group.
pub fn completes_group(state: &GameState, p: PlayerId, sq: u8) -> bool {
    let Some(g) = state.board.group_of(sq) else { return false };
    state.board.group(g).squares.iter().all(|&s| s == sq || state.owner(s) == Some(p))
}

fn opponent_has_houses(state: &GameState, me: PlayerId) -> bool {
    (0..crate::board::BOARD_SIZE as u8).any(|s| {
        let st = state.square(s);
        st.houses > 0 && st.owner.is_some_and(|o| o != me)
    })
}

fn find(menu: &[Action], name: &str) -> Option<usize> {
    menu.iter().position(|a| a.is(name))
}

/// Index into `menu` of the action the heuristic takes; the first offered
/// action when no rule applies.
pub fn heuristic_choose(policy: &HeuristicPolicy, state: &GameState, me: PlayerId, menu: &[Action]) -> usize {
    debug_assert!(!menu.is_empty());
    let cash = state.player(me).cash;
    let reserve = policy.reserve;
    let pick = match state.phase() {
        Phase::Loan => match state.offer {
            Some(Offer::Loan { amount, .. }) if cash - amount >= reserve => find(menu, "accept_loan"),
            _ => find(menu, "decline_loan"),
        },
        Phase::Trade => match state.offer {
            Some(Offer::Trade { square, cash: paid, .. }) => {
                let keeps_group = state.board.group_of(square).is_some_and(|g| {
                    state.board.group(g).squares.iter().any(|&s| s != square && state.owner(s) == Some(me))
                });
                if 2 * paid >= 3 * state.board.square(square).price() && !keeps_group {
                    find(menu, "accept_trade")
                } else {
                    find(menu, "reject_trade")
                }
            }
            _ => find(menu, "reject_trade"),
        },
        Phase::Auction => {
            let wanted = state.auction.as_ref().is_some_and(|a| !policy.avoided(state, a.square));
            let bid = menu
                .iter()
                .enumerate()
                .filter(|(_, a)| a.is("bid") && a.int_arg().is_some_and(|p| p <= 100))
                .filter(|_| wanted)
                .filter(|(_, a)| {
                    let price = state.auction.as_ref().map_or(0, |x| state.board.square(x.square).price());
                    cash - price * a.int_arg().unwrap_or(0) / 100 >= reserve
                })
                .max_by_key(|(_, a)| a.int_arg())
                .map(|(i, _)| i);
            find(menu, "close_auction").or(bid).or_else(|| find(menu, "pass_bid"))
        }
        Phase::PreRoll => {
            let p = state.player(me);
            find(menu, "repay_loan").or_else(|| {
                if !p.in_jail {
                    return find(menu, "roll_dice");
                }
                let stay = if opponent_has_houses(state, me) { find(menu, "stay_in_jail") } else { None };
                let fine = if cash > reserve { find(menu, "pay_jail_fine") } else { None };
                stay.or_else(|| find(menu, "use_jail_card")).or(fine).or_else(|| find(menu, "roll_in_jail"))
            })
        }
        Phase::PostRoll => post_roll(policy, state, me, menu),
        Phase::Terminal => None,
    };
    pick.unwrap_or(0)
}

fn post_roll(policy: &HeuristicPolicy, state: &GameState, me: PlayerId, menu: &[Action]) -> Option<usize> {
    let cash = state.player(me).cash;
    let reserve = policy.reserve;
    let b = &state.board;
    for name in ["pay_rent", "pay_tax", "go_to_jail", "draw_chance", "draw_community_chest"] {
        if let Some(i) = find(menu, name) {
            return Some(i);
        }
    }
    if let Some(i) = find(menu, "buy_property") {
        let sq = menu[i].square_arg().unwrap_or(0);
        let left = cash - b.square(sq).price();
        let keen = policy.targeted(state, sq) || completes_group(state, me, sq);
        let buy = !policy.avoided(state, sq) && (left >= reserve || (keen && 2 * left >= reserve));
        return if buy { Some(i) } else { find(menu, "decline_purchase") };
    }
    if let Some(i) = find(menu, "decline_purchase") {
        return Some(i);
    }
    if cash < reserve {
        // Borrow as much as possible from the richest other player.
        let loan = menu
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is("request_loan"))
            .max_by_key(|(_, a)| (a.player_arg().map(|l| state.player(l).cash), a.int_arg()))
            .map(|(i, _)| i);
        if loan.is_some() {
            return loan;
        }
    }
    // Build on the least developed square first, keeping the group even.
    let build = menu
        .iter()
        .enumerate()
        .filter(|(_, a)| a.is("buy_house"))
        .filter_map(|(i, a)| a.square_arg().map(|s| (i, s)))
        .filter(|&(_, s)| cash - b.square(s).house_cost() >= reserve)
        .min_by_key(|&(_, s)| state.square(s).houses)
        .map(|(i, _)| i);
    if build.is_some() {
        return build;
    }
    let redeem = menu
        .iter()
        .position(|a| a.is("unmortgage") && a.square_arg().is_some_and(|s| cash - b.square(s).redeem_cost() >= 2 * reserve));
    if redeem.is_some() {
        return redeem;
    }
    let trade = menu.iter().position(|a| {
        a.is("offer_trade")
            && a.int_arg() == Some(150)
            && a.square_arg().is_some_and(|s| cash - b.square(s).price() * 3 / 2 >= reserve)
    });
    trade.or_else(|| find(menu, "end_turn"))
}

pub fn heuristic_act(policy: &HeuristicPolicy, obs: &Observation) -> Action {
    obs.menu[heuristic_choose(policy, &obs.snapshot, obs.observer, &obs.menu)].clone()
}

pub fn random_act(obs: &Observation, rng: &mut ChaCha8Rng) -> Action {
    obs.menu.choose(rng).expect("non-empty menu").clone()
}

/// A seat at the table. `act` is only called with a non-empty menu.
pub trait Agent {
    fn name(&self) -> &str;
    fn begin_game(&mut self, _game: u32, _initial: &GameState) {}
    fn act(&mut self, obs: &Observation) -> Action;
    /// The novelty handler, for agents that run one.
    fn handler(&mut self) -> Option<&mut NoveltyHandler> {
        None
    }
}

#[derive(Clone, Debug, Default)]
pub struct HeuristicAgent {
    pub policy: HeuristicPolicy,
}

impl Agent for HeuristicAgent {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn act(&mut self, obs: &Observation) -> Action {
        heuristic_act(&self.policy, obs)
    }
}

#[derive(Clone, Debug)]
pub struct RandomAgent {
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> RandomAgent {
        RandomAgent { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> &str {
        "random"
    }

    fn act(&mut self, obs: &Observation) -> Action {
        random_act(obs, &mut self.rng)
    }
}

/// The rollout planner planning over whatever its handler currently
/// believes. A non-adaptive handler keeps the classic rules forever.
#[derive(Clone, Debug)]
pub struct PlannerAgent {
    pub handler: NoveltyHandler,
    pub config: RolloutConfig,
}

impl PlannerAgent {
    pub fn new(adaptive: bool, config: RolloutConfig) -> PlannerAgent {
        PlannerAgent { handler: NoveltyHandler::new(KnowledgeBase::classic(), adaptive), config }
    }
}

impl Agent for PlannerAgent {
    fn name(&self) -> &str {
        if self.handler.adaptive {
            "planner_adaptive"
        } else {
            "planner"
        }
    }

    fn begin_game(&mut self, game: u32, initial: &GameState) {
        self.handler.begin_game(game, initial);
    }

    fn act(&mut self, obs: &Observation) -> Action {
        self.handler.observe(obs);
        choose_action(self.handler.kb(), obs, &self.config).unwrap_or_else(|_| obs.menu[0].clone())
    }

    fn handler(&mut self) -> Option<&mut NoveltyHandler> {
        Some(&mut self.handler)
    }
}
