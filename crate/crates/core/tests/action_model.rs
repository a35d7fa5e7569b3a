use std::sync::Arc;

use owm_core::action::{Action, Arg};
use owm_core::engine::{self, is_terminal};
use owm_core::kb::KnowledgeBase;
use owm_core::rules::{parse_atom, parse_rules, parse_schema};
use owm_core::rules::{GroupScope, Outcome, Relation, RuleError, RuleSet};
use owm_core::state::{same_public, GameState, Stage};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STAY_IN_JAIL: &str = "schema stay_in_jail
  phase pre_roll
  pre in_jail(?actor)
  eff set voluntary_jail(?actor) true
  eff end_turn
end";

fn jailed(cash: i64) -> GameState {
    let mut s = engine::new_game(1, &RuleSet::classic(), 4).unwrap();
    s.players[0].in_jail = true;
    s.players[0].position = 10;
    s.players[0].cash = cash;
    s
}

fn post_roll() -> GameState {
    let mut s = engine::new_game(1, &RuleSet::classic(), 4).unwrap();
    s.stage = Stage::PostRoll;
    s
}

fn only(kb: &KnowledgeBase, s: &GameState, a: &Action) -> GameState {
    let e = kb.predict(s, a).unwrap();
    assert_eq!(e.outcomes.len(), 1);
    e.outcomes[0].1.clone()
}

#[test]
fn jail_fine_preconditions() {
    let kb = KnowledgeBase::classic();
    let fine = Action::new("pay_jail_fine", 0);
    let ok = kb.preconditions_satisfied(&jailed(500), &fine).unwrap();
    assert!(ok.satisfied && ok.failed.is_empty());
    let poor = kb.preconditions_satisfied(&jailed(49), &fine).unwrap();
    assert!(!poor.satisfied);
    assert_eq!(poor.failed, vec!["cash(?actor) >= $jail_fine".to_string()]);
}

#[test]
fn selling_an_unowned_asset_fails_on_ownership() {
    let kb = KnowledgeBase::classic();
    let sell = Action::with_args("sell_property", 0, &[Arg::Square(39)]);
    let c = kb.preconditions_satisfied(&post_roll(), &sell).unwrap();
    assert!(!c.satisfied);
    assert!(c.failed.iter().any(|f| f.starts_with("owns(")), "{:?}", c.failed);
}

#[test]
fn unknown_schemas_are_errors() {
    let kb = KnowledgeBase::classic();
    let a = Action::new("stay_in_jail", 0);
    assert_eq!(kb.preconditions_satisfied(&jailed(500), &a).unwrap_err(), RuleError::UnknownSchema("stay_in_jail".into()));
    assert!(matches!(kb.predict(&jailed(500), &a), Err(RuleError::UnknownSchema(_))));
}

#[test]
fn predicting_the_jail_fine() {
    let kb = KnowledgeBase::classic();
    let next = only(&kb, &jailed(500), &Action::new("pay_jail_fine", 0));
    assert_eq!(next.players[0].cash, 450);
    assert!(!next.players[0].in_jail);
    assert!(matches!(kb.predict(&jailed(49), &Action::new("pay_jail_fine", 0)), Err(RuleError::Precondition { .. })));
}

#[test]
fn selling_a_mortgaged_asset_returns_the_mortgage_value() {
    let kb = KnowledgeBase::classic();
    let mut s = post_roll();
    s.squares[39].owner = Some(0);
    s.squares[39].mortgaged = true;
    let sell = Action::with_args("sell_property", 0, &[Arg::Square(39)]);
    let next = only(&kb, &s, &sell);
    assert_eq!(next.players[0].cash, 1500 + s.board.square(39).price() / 2);
    assert_eq!(next.owner(39), None);
    s.squares[39].mortgaged = false;
    assert_eq!(only(&kb, &s, &sell).players[0].cash, 1500 + s.board.square(39).price());
}

#[test]
fn rolling_predicts_all_thirty_six_outcomes() {
    let kb = KnowledgeBase::classic();
    let rules = RuleSet::classic();
    let s = engine::new_game(5, &rules, 4).unwrap();
    let roll = Action::new("roll_dice", 0);
    let e = kb.predict(&s, &roll).unwrap();
    assert_eq!(e.outcomes.len(), 36);
    let mut dice: Vec<Outcome> = e.outcomes.iter().map(|(o, _)| *o).collect();
    dice.dedup();
    assert_eq!(dice.len(), 36);
    let (after, _) = engine::apply_action(&rules, &s, &roll).unwrap();
    assert!(e.admits(&after.public_view()));
}

#[test]
fn a_lower_jail_fine_changes_the_prediction() {
    let kb = KnowledgeBase::classic();
    let kb2 = kb.set_parameter("jail_fine", 23).unwrap();
    assert_eq!(kb2.version(), kb.version() + 1);
    assert_eq!(only(&kb2, &jailed(500), &Action::new("pay_jail_fine", 0)).players[0].cash, 477);
    // The old version is untouched.
    assert_eq!(only(&kb, &jailed(500), &Action::new("pay_jail_fine", 0)).players[0].cash, 450);
    assert!(matches!(kb.set_parameter("jail_fine", 501), Err(RuleError::OutOfDomain { .. })));
    assert_eq!(kb.set_parameter("no_such", 1).unwrap_err(), RuleError::UnknownParameter("no_such".into()));
}

#[test]
fn inserting_a_schema_makes_it_legal_where_its_preconditions_hold() {
    let kb = KnowledgeBase::classic();
    let schema = parse_schema(STAY_IN_JAIL, kb.rules()).unwrap();
    let kb2 = kb.insert_schema(schema.clone()).unwrap();
    assert!(kb2.legal_actions(&jailed(10), 0).iter().any(|a| a.is("stay_in_jail")));
    let free = engine::new_game(1, &RuleSet::classic(), 4).unwrap();
    assert!(!kb2.legal_actions(&free, 0).iter().any(|a| a.is("stay_in_jail")));
    let next = only(&kb2, &jailed(10), &Action::new("stay_in_jail", 0));
    assert!(next.players[0].in_jail && next.players[0].voluntary_jail);
    assert_eq!(next.turn, 1);
    // Re-inserting the same schema only bumps the version.
    let kb3 = kb2.insert_schema(schema).unwrap();
    assert_eq!(kb3.version(), kb2.version() + 1);
    assert_eq!(kb3.rules(), kb2.rules());
}

#[test]
fn ill_typed_edits_are_rejected() {
    let kb = KnowledgeBase::classic();
    let bad = parse_schema("schema x\n  phase post_roll\n  pre owns(?actor, ?sq)\nend", kb.rules());
    assert!(bad.is_err());
    let atom = parse_atom("in_jail(?actor)", &[], kb.rules()).unwrap();
    assert_eq!(kb.insert_precondition("nope", atom).unwrap_err(), RuleError::UnknownSchema("nope".into()));
}

#[test]
fn relations_are_checked_and_named() {
    let kb = KnowledgeBase::classic();
    let mut s = post_roll();
    let green = s.board.group_by_name("green").unwrap();
    for &sq in &s.board.group(green).squares.clone() {
        s.squares[sq as usize].owner = Some(0);
    }
    assert!(kb.check_relations(&s, Some(0)).is_empty());
    let squares = s.board.group(green).squares.clone();
    s.squares[squares[0] as usize].houses = 1;
    // One level of difference is even; homogeneity is not in the classic rules.
    assert!(kb.check_relations(&s, Some(0)).is_empty());
    s.squares[squares[0] as usize].houses = 2;
    assert_eq!(kb.check_relations(&s, Some(0)), vec!["even_building(green)".to_string()]);
    s.squares[squares[0] as usize].houses = 1;
    let homo = kb.add_relation(Relation::Homogeneous { scope: GroupScope::All, exempt: None }).unwrap();
    assert_eq!(homo.check_relations(&s, Some(0)), vec!["homogeneous(green)".to_string()]);
    assert!(homo.check_relations(&s, Some(1)).is_empty());
    // The enforcement cuts the group back to its lowest level.
    let cut = homo.expected_enforcement(&s, 0).unwrap();
    assert!(squares.iter().all(|&q| cut.square(q).houses == 0));
    let mut empty = (**kb.rules()).clone();
    empty.relations.clear();
    s.squares[squares[0] as usize].houses = 3;
    assert!(KnowledgeBase::from_rules(Arc::new(empty)).check_relations(&s, Some(0)).is_empty());
}

#[test]
fn rules_survive_a_print_and_parse_round_trip() {
    let classic = RuleSet::classic();
    let text = classic.to_string();
    let parsed = parse_rules(&text, classic.board.clone()).unwrap().rules;
    assert_eq!(parsed, *classic);
}

#[test]
fn classic_predictions_match_the_engine() {
    let rules = RuleSet::classic();
    let kb = KnowledgeBase::classic();
    let mut n = 0;
    for seed in 100..110 {
        let mut s = engine::new_game_capped(seed, &rules, 4, 80).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while is_terminal(&s).is_none() {
            let p = s.solicited().unwrap();
            let a = engine::legal_actions(&rules, &s, p).choose(&mut rng).unwrap().clone();
            let pre = s.public_view();
            let expected = kb.predict(&pre, &a).unwrap();
            engine::step(&rules, &mut s, &a).unwrap();
            assert!(expected.admits(&s.public_view()), "seed {seed}: {a}");
            n += 1;
        }
    }
    assert!(n > 1000);
    let s = engine::new_game(1, &rules, 4).unwrap();
    assert!(same_public(&s, &s.public_view()));
}
