use owm_core::action::Action;
use owm_core::engine::{self, Observation};
use owm_core::kb::KnowledgeBase;
use owm_core::novelty::{apply_novelty, find};
use owm_core::planner::{
    action_values, choose_action, evaluate, m_assets, m_monopoly, relaxed_rollout, rollout, PlannerError, RolloutConfig,
};
use owm_core::rules::RuleSet;
use owm_core::state::GameState;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cheap() -> RolloutConfig {
    RolloutConfig { n: 3, k: 2, l: 3, ..RolloutConfig::default() }
}

/// Scores the state right after the candidate by assets alone.
fn assets_only() -> RolloutConfig {
    RolloutConfig { n: 2, k: 0, l: 0, w_h: 0.0, w_a: 1.0, w_m: 0.0, ..RolloutConfig::default() }
}

fn jailed(rules: &RuleSet) -> GameState {
    let mut s = engine::new_game(1, rules, 4).unwrap();
    s.players[0].in_jail = true;
    s.players[0].position = 10;
    s
}

fn observation(rules: &RuleSet, s: &GameState) -> Observation {
    let mut cursor = s.history.len();
    engine::observe(rules, s, s.solicited().unwrap(), &mut cursor)
}

fn orange(s: &GameState) -> Vec<u8> {
    s.board.group(s.board.group_by_name("orange").unwrap()).squares.clone()
}

#[test]
fn a_single_offered_action_is_returned_as_is() {
    let rules = RuleSet::classic();
    let s = engine::new_game(1, &rules, 4).unwrap();
    let obs = observation(&rules, &s);
    assert_eq!(obs.menu, vec![Action::new("roll_dice", 0)]);
    assert_eq!(choose_action(&KnowledgeBase::classic(), &obs, &cheap()).unwrap(), obs.menu[0]);
    let empty = Observation { menu: Vec::new(), ..obs };
    assert_eq!(choose_action(&KnowledgeBase::classic(), &empty, &cheap()).unwrap_err(), PlannerError::EmptyMenu);
}

#[test]
fn configs_are_validated() {
    assert_eq!(RolloutConfig::default().validate(), Ok(()));
    for bad in [
        RolloutConfig { n: 0, ..RolloutConfig::default() },
        RolloutConfig { gamma: 0.0, ..RolloutConfig::default() },
        RolloutConfig { gamma: 1.5, ..RolloutConfig::default() },
        RolloutConfig { w_a: -0.1, ..RolloutConfig::default() },
        RolloutConfig { w_m: f64::NAN, ..RolloutConfig::default() },
    ] {
        assert!(matches!(bad.validate(), Err(PlannerError::Config(_))), "{bad:?}");
    }
    let parsed: RolloutConfig = toml::from_str("n = 8\nk = 0\n").unwrap();
    assert_eq!((parsed.n, parsed.k, parsed.l), (8, 0, RolloutConfig::default().l));
    assert!(toml::from_str::<RolloutConfig>("n = 8\ndepth = 3\n").is_err());
}

#[test]
fn assets_count_cash_property_and_buildings() {
    let rules = RuleSet::classic();
    let mut s = engine::new_game(1, &rules, 4).unwrap();
    assert_eq!(m_assets(&s, 0), 1500);
    s.players[0].cash = 100;
    s.squares[39].owner = Some(0);
    assert_eq!(m_assets(&s, 0), 500);
    // Mortgaging turns half the price into cash and leaves assets unchanged.
    s.squares[39].mortgaged = true;
    s.players[0].cash += 200;
    assert_eq!(m_assets(&s, 0), 500);
    s.squares[39].mortgaged = false;
    s.players[0].cash = 100;
    s.squares[37].owner = Some(0);
    s.squares[39].houses = 2;
    assert_eq!(m_assets(&s, 0), 100 + 350 + 400 + 2 * 200);
}

#[test]
fn monopoly_potential_scales_with_the_share_of_a_group() {
    let rules = RuleSet::classic();
    let mut s = engine::new_game(1, &rules, 4).unwrap();
    assert_eq!(m_monopoly(&s, 0), 0.0);
    // Orange hotels rent for 950, 950 and 1000.
    let sq = orange(&s);
    s.squares[sq[0] as usize].owner = Some(0);
    s.squares[sq[1] as usize].owner = Some(0);
    assert!((m_monopoly(&s, 0) - 1000.0 * 2.0 / 3.0).abs() < 1e-9);
    s.squares[sq[2] as usize].owner = Some(0);
    assert_eq!(m_monopoly(&s, 0), 1000.0);
    // Railroads are not a colour group.
    let mut r = engine::new_game(1, &rules, 4).unwrap();
    for q in [5, 15, 25, 35] {
        r.squares[q].owner = Some(0);
    }
    assert_eq!(m_monopoly(&r, 0), 0.0);
}

#[test]
fn a_lost_position_is_worth_nothing() {
    let rules = RuleSet::classic();
    let kb = KnowledgeBase::classic();
    let mut s = engine::new_game(1, &rules, 4).unwrap();
    let alive = evaluate(&kb, &s, 0, &cheap());
    assert!(alive.total > 0.0);
    let share = alive.heuristic_return;
    assert!(share > 0.0 && share <= 1.0, "{share}");
    let cfg = cheap();
    let expect = cfg.w_h * share + cfg.w_a * alive.m_assets + cfg.w_m * alive.m_monopoly;
    assert!((alive.total - expect).abs() < 1e-12);
    s.players[0].bankrupt = true;
    assert_eq!(evaluate(&kb, &s, 0, &cheap()).total, 0.0);
}

#[test]
fn relaxed_rollouts_never_acquire_property() {
    let rules = RuleSet::classic();
    let kb = KnowledgeBase::classic();
    for seed in 0..10 {
        let s = engine::new_game(seed, &rules, 4).unwrap();
        let cfg = RolloutConfig { l: 300, ..RolloutConfig::default() };
        let mut trace = Vec::new();
        let v = relaxed_rollout(&kb, &s, 0, &cfg, Some(&mut trace));
        assert!((0.0..=1.0).contains(&v));
        assert!(!trace.is_empty());
        assert!(trace.iter().all(|a| !a.is("buy_property") && !a.is("bid") && !a.is("accept_trade")), "seed {seed}");
    }
    // Zero depth: the current share of solvent net worth.
    let s = engine::new_game(1, &rules, 4).unwrap();
    let cfg = RolloutConfig { l: 0, ..RolloutConfig::default() };
    assert!((relaxed_rollout(&kb, &s, 0, &cfg, None) - 0.25).abs() < 1e-12);
}

#[test]
fn rollouts_simulate_the_believed_rules() {
    let truth = apply_novelty(&RuleSet::classic(), &find("jail_fine_easy").unwrap()).unwrap();
    let s = jailed(&truth);
    let fine = Action::new("pay_jail_fine", 0);
    let classic = KnowledgeBase::classic();
    let learned = classic.set_parameter("jail_fine", 23).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(rollout(&classic, &s, &fine, 0, &assets_only(), &mut rng), 1450.0);
    assert_eq!(rollout(&learned, &s, &fine, 0, &assets_only(), &mut rng), 1477.0);
}

#[test]
fn the_planner_avoids_paying_for_nothing() {
    let rules = RuleSet::classic();
    let s = jailed(&rules);
    let obs = observation(&rules, &s);
    assert!(obs.menu.iter().any(|a| a.is("pay_jail_fine")) && obs.menu.len() >= 2);
    let kb = KnowledgeBase::classic();
    let values = action_values(&kb, &obs, &assets_only());
    let fine = obs.menu.iter().position(|a| a.is("pay_jail_fine")).unwrap();
    assert_eq!(values[fine], Some(1450.0));
    let chosen = choose_action(&kb, &obs, &assets_only()).unwrap();
    assert!(!chosen.is("pay_jail_fine"), "{chosen}");
    // Same inputs, same choice.
    assert_eq!(action_values(&kb, &obs, &cheap()), action_values(&kb, &obs, &cheap()));
}

#[test]
fn unknown_labels_are_not_simulated() {
    let truth = apply_novelty(&RuleSet::classic(), &find("stay_in_jail_easy").unwrap()).unwrap();
    let s = jailed(&truth);
    let obs = observation(&truth, &s);
    let stay = obs.menu.iter().position(|a| a.is("stay_in_jail")).unwrap();
    let kb = KnowledgeBase::classic();
    let values = action_values(&kb, &obs, &cheap());
    assert_eq!(values[stay], None);
    assert!(values.iter().enumerate().all(|(i, v)| i == stay || v.is_some()));
    assert!(!choose_action(&kb, &obs, &cheap()).unwrap().is("stay_in_jail"));
    // With nothing simulable on offer the first entry is taken.
    let only_unknown = Observation { menu: vec![obs.menu[stay].clone(), Action::new("stay_in_jail", 0)], ..obs };
    assert_eq!(choose_action(&kb, &only_unknown, &cheap()).unwrap(), only_unknown.menu[0]);
}
