use owm_core::action::Action;
use owm_core::detect::{detect, expected_vs_observed, DetectionResult, Finding, Iota, NoveltyFlags};
use owm_core::engine::{self, is_terminal};
use owm_core::kb::KnowledgeBase;
use owm_core::novelty::{apply_novelty, builtin_catalog, find};
use owm_core::rules::RuleSet;
use owm_core::state::{Fluent, GameState, Stage, Value};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rules_for(id: &str) -> RuleSet {
    apply_novelty(&RuleSet::classic(), &find(id).unwrap()).unwrap()
}

fn jailed(rules: &RuleSet, cash: i64) -> GameState {
    let mut s = engine::new_game(1, rules, 4).unwrap();
    s.players[0].in_jail = true;
    s.players[0].position = 10;
    s.players[0].cash = cash;
    s
}

/// Steps `actions` under `rules` and runs player 0's detector over them.
fn detect_after(rules: &RuleSet, mut s: GameState, actions: &[Action]) -> DetectionResult {
    let prev = s.public_view();
    let mut cursor = s.history.len();
    for a in actions {
        engine::step(rules, &mut s, a).unwrap();
    }
    let obs = engine::observe(rules, &s, 0, &mut cursor);
    detect(&KnowledgeBase::classic(), &prev, &obs).result
}

/// Random play with every seat running a classic detector; the first
/// detection seen, if any.
fn first_detection(rules: &RuleSet, seed: u64, cap: u32) -> Option<DetectionResult> {
    let kb = KnowledgeBase::classic();
    let mut s = engine::new_game_capped(seed, rules, 4, cap).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cursors = [0usize; 4];
    let mut prev: Vec<GameState> = (0..4).map(|_| s.public_view()).collect();
    while is_terminal(&s).is_none() {
        let p = s.solicited().unwrap() as usize;
        let obs = engine::observe(rules, &s, p as u8, &mut cursors[p]);
        let d = detect(&kb, &prev[p], &obs);
        if d.result.d {
            return Some(d.result);
        }
        prev[p] = obs.snapshot.clone();
        let a = obs.menu.choose(&mut rng).unwrap().clone();
        engine::step(rules, &mut s, &a).unwrap();
    }
    None
}

#[test]
fn a_cheaper_jail_fine_is_an_action_novelty_on_cash() {
    let rules = rules_for("jail_fine_easy");
    let r = detect_after(&rules, jailed(&rules, 500), &[Action::new("pay_jail_fine", 0)]);
    assert!(r.d);
    assert_eq!(r.iota, Iota::Action);
    let Finding::EffectMismatch { action, discrepancies, .. } = &r.evidence[0] else { panic!("{:?}", r.evidence) };
    assert!(action.is("pay_jail_fine"));
    let cash = discrepancies.iter().find(|d| d.fluent == Fluent::Cash(0)).unwrap();
    assert_eq!((&cash.predicted, &cash.observed), (&Value::Int(450), &Value::Int(477)));
}

#[test]
fn an_action_executed_against_believed_preconditions_is_flagged() {
    // 30 in cash is below the believed fine of 50 but enough for 23.
    let rules = rules_for("jail_fine_easy");
    let r = detect_after(&rules, jailed(&rules, 30), &[Action::new("pay_jail_fine", 0)]);
    assert!(r.d);
    assert_eq!(r.iota, Iota::Action);
    assert!(r.evidence.iter().any(|f| matches!(f, Finding::PreconditionViolated { .. })), "{:?}", r.evidence);
}

#[test]
fn matching_observations_raise_nothing() {
    let rules = RuleSet::classic();
    let r = detect_after(&rules, jailed(&rules, 500), &[Action::new("pay_jail_fine", 0)]);
    assert_eq!((r.d, r.iota), (false, Iota::None));
    assert!(r.evidence.is_empty());
    for seed in 0..20 {
        assert_eq!(first_detection(&rules, seed, 300), None, "seed {seed}");
    }
}

#[test]
fn an_unknown_two_player_label_is_an_interaction() {
    let rules = rules_for("loan_request_easy");
    let mut s = engine::new_game(1, &rules, 4).unwrap();
    s.turn = 1;
    s.stage = Stage::PostRoll;
    let ask = engine::legal_actions(&rules, &s, 1).into_iter().find(|a| a.is("request_loan")).unwrap();
    let r = detect_after(&rules, s, &[ask]);
    assert!(r.d);
    assert_eq!(r.iota, Iota::Interaction);
    assert!(r.evidence.iter().any(|f| matches!(f, Finding::UnknownLabel { players: 2, .. })));
}

#[test]
fn an_unknown_solo_label_is_an_action() {
    let rules = rules_for("stay_in_jail_easy");
    let mut s = jailed(&rules, 500);
    s.turn = 1;
    s.players[1].in_jail = true;
    s.players[1].position = 10;
    s.players[0].in_jail = false;
    let r = detect_after(&rules, s, &[Action::new("stay_in_jail", 1)]);
    assert!(r.d);
    assert_eq!(r.iota, Iota::Action);
    assert!(r.evidence.iter().any(|f| matches!(f, Finding::UnknownLabel { players: 1, .. })));
}

#[test]
fn houses_revoked_without_an_action_are_a_relation() {
    let rules = rules_for("homogeneity_easy");
    let mut s = engine::new_game(1, &rules, 4).unwrap();
    let orange = rules.board.group(rules.board.group_by_name("orange").unwrap()).squares.clone();
    for &sq in &orange {
        s.squares[sq as usize].owner = Some(0);
    }
    s.stage = Stage::PostRoll;
    let build = engine::legal_actions(&rules, &s, 0).into_iter().find(|a| a.is("buy_house")).unwrap();
    let r = detect_after(&rules, s, &[build, Action::new("end_turn", 0)]);
    assert!(r.d);
    assert_eq!(r.iota, Iota::Relation);
    assert!(r.evidence.iter().any(|f| matches!(f, Finding::UnexpectedEnforcement { .. })));
}

#[test]
fn expected_and_observed_states_are_diffed_fluent_by_fluent() {
    let kb = KnowledgeBase::classic();
    let s = jailed(&RuleSet::classic(), 500);
    let fine = Action::new("pay_jail_fine", 0);
    let expected = kb.predict(&s, &fine).unwrap();
    assert!(expected_vs_observed(&expected, &expected.outcomes[0].1).is_empty());
    let mut observed = expected.outcomes[0].1.clone();
    observed.players[0].cash = 477;
    let d = expected_vs_observed(&expected, &observed);
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].to_string(), format!("{}: 450 -> 477", Fluent::Cash(0)));

    // Every dice outcome the engine can produce is admissible.
    let rules = RuleSet::classic();
    let roll = Action::new("roll_dice", 0);
    for seed in 0..50 {
        let s = engine::new_game(seed, &rules, 4).unwrap();
        let e = kb.predict(&s, &roll).unwrap();
        let (after, _) = engine::apply_action(&rules, &s, &roll).unwrap();
        assert!(expected_vs_observed(&e, &after.public_view()).is_empty());
    }
}

#[test]
fn flags_persist_and_report_once_per_game() {
    let rules = rules_for("jail_fine_easy");
    let r = detect_after(&rules, jailed(&rules, 500), &[Action::new("pay_jail_fine", 0)]);
    let mut flags = NoveltyFlags::default();
    assert!(!flags.detected());
    assert!(!flags.carry_forward(3, &DetectionResult::default()));
    assert!(!flags.detected());
    assert!(flags.carry_forward(7, &r));
    assert!(!flags.carry_forward(7, &r));
    assert_eq!(flags.reports.len(), 1);
    assert!(!flags.flagged_before(7));
    assert!((8..=100).all(|g| flags.flagged_before(g)));
    assert_eq!(flags.first().unwrap().game, 7);
}

#[test]
fn every_catalog_novelty_is_eventually_detected() {
    for spec in builtin_catalog() {
        let rules = apply_novelty(&RuleSet::classic(), &spec).unwrap();
        let hits: Vec<Iota> = (0..12).filter_map(|seed| first_detection(&rules, seed, 300)).map(|r| r.iota).collect();
        // Random play never monopolizes green, so hard homogeneity stays latent.
        if spec.id != "homogeneity_hard" {
            assert!(!hits.is_empty(), "{} never detected", spec.id);
        }
    }
}
