use owm_core::detect::{Iota, Report};
use owm_core::harness::{
    compute_metrics, compute_nrp, game_seed, mean_sd, paired_t_test, report, run_tournament, score_detection, GameRecord,
    HarnessError, NoveltyInfo, RunConfig, SeatKind, TournamentConfig, REFERENCE_BASELINE,
};
use owm_core::novelty::find;
use owm_core::planner::RolloutConfig;

fn report_in(game: u32) -> Report {
    Report { game, time_step: 10 * game as u64, iota: Iota::Action, summary: String::new() }
}

fn record(game: u32, winner: u8) -> GameRecord {
    GameRecord { game, seed: game as u64, active: false, winner, by_cap: false, turns: 50, detections: vec![0; 4], report: None }
}

fn quick(dir: Option<&std::path::Path>) -> TournamentConfig {
    TournamentConfig {
        games: 4,
        seats: vec![SeatKind::Adaptive, SeatKind::Random, SeatKind::Heuristic, SeatKind::Random],
        novelty: Some("jail_fine_easy".into()),
        activation_game: 2,
        seed: 11,
        turn_cap: 120,
        out: dir.map(|d| d.to_path_buf()),
        planner: RolloutConfig { n: 1, k: 0, l: 0, ..RolloutConfig::default() },
        ..TournamentConfig::default()
    }
}

#[test]
fn reports_before_activation_are_false_positives() {
    assert_eq!(score_detection(Some(5), &[report_in(7)]), (1, 0));
    assert_eq!(score_detection(Some(5), &[report_in(3)]), (0, 1));
    assert_eq!(score_detection(Some(5), &[report_in(5), report_in(3), report_in(9)]), (2, 1));
    assert_eq!(score_detection(None, &[report_in(1)]), (0, 1));
    assert_eq!(score_detection(Some(1), &[]), (0, 0));
}

#[test]
fn reaction_performance_is_relative_to_the_baseline() {
    assert!((compute_nrp(0.65, REFERENCE_BASELINE).unwrap() - 100.0).abs() < 1e-9);
    assert_eq!(format!("{:.2}", compute_nrp(0.92, REFERENCE_BASELINE).unwrap()), "141.54");
    assert_eq!(compute_nrp(0.0, 0.5).unwrap(), 0.0);
    for bad in [0.0, -0.1, f64::NAN] {
        assert!(matches!(compute_nrp(0.5, bad), Err(HarnessError::Config(_))));
    }
}

#[test]
fn metrics_split_games_at_activation() {
    let info = NoveltyInfo::from(&find("jail_fine_easy").unwrap());
    let mut records: Vec<GameRecord> = (1..=100).map(|g| record(g, if g % 2 == 0 { 0 } else { 1 })).collect();
    records[6].report = Some(report_in(7));
    let m = compute_metrics(Some(&info), Some(5), REFERENCE_BASELINE, &records, None);
    assert_eq!((m.games_pre, m.games_post), (4, 96));
    assert_eq!((m.wins_pre, m.wins_post), (2, 48));
    assert_eq!((m.true_positives, m.false_positives), (1, 0));
    assert_eq!((m.m1, m.m2), (Some(1.0), 0.0));
    assert!((m.m3.unwrap() - 100.0 * 0.5 / 0.65).abs() < 1e-9);
    assert!((m.m4.unwrap() - 100.0 * 0.5 / 0.65).abs() < 1e-9);
    // A parameter novelty has no category, so only an uncategorised report is right.
    assert_eq!(m.category_correct, Some(false));

    records[2].report = Some(report_in(3));
    let m = compute_metrics(Some(&info), Some(5), REFERENCE_BASELINE, &records, None);
    assert_eq!((m.true_positives, m.false_positives), (1, 1));
    assert_eq!((m.m1, m.m2), (Some(0.0), 1.0));

    // Without a novelty every game counts as pre-activation and M1 is undefined.
    let m = compute_metrics(None, Some(5), REFERENCE_BASELINE, &records, None);
    assert_eq!((m.games_pre, m.games_post, m.m1, m.m4), (100, 0, None, None));

    // A live baseline rescales by its own win rate over the same split.
    let live: Vec<GameRecord> = (1..=100).map(|g| record(g, if g % 4 == 0 { 0 } else { 2 })).collect();
    let m = compute_metrics(Some(&info), Some(5), REFERENCE_BASELINE, &records, Some(&live));
    assert!((m.m3_live.unwrap() - 200.0).abs() < 1e-9);
    assert!((m.m4_live.unwrap() - 100.0 * 48.0 / 24.0).abs() < 1e-9);
}

#[test]
fn paired_test_matches_the_closed_form() {
    let (mean, sd) = mean_sd(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
    assert!((mean - 5.0).abs() < 1e-12 && (sd - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    let a = [1.0, 1.0, 0.0, 1.0, 1.0];
    let b = [0.0, 1.0, 0.0, 0.0, 1.0];
    let r = paired_t_test(&a, &b);
    let t = 0.4 / (0.3f64.sqrt() / 5f64.sqrt());
    // Student t with four degrees of freedom has an elementary CDF.
    let u = t * t / (4.0 + t * t);
    let cdf = 0.5 + 0.375 * (t / (1.0 + t * t / 4.0).sqrt()) * (1.0 - u / 3.0);
    assert_eq!(r.pairs, 5);
    assert!((r.mean_diff - 0.4).abs() < 1e-12);
    assert!((r.t - t).abs() < 1e-9);
    assert!((r.p - (1.0 - cdf)).abs() < 1e-9, "{} vs {}", r.p, 1.0 - cdf);
    assert_eq!(paired_t_test(&[1.0, 1.0], &[0.0, 0.0]).p, 0.0);
    assert_eq!(paired_t_test(&[1.0], &[0.0]).p, 1.0);
}

#[test]
fn configs_are_checked_before_any_game() {
    let bad = [
        TournamentConfig { games: 0, ..quick(None) },
        TournamentConfig { seats: vec![SeatKind::Adaptive], ..quick(None) },
        TournamentConfig { novelty: Some("no_such".into()), ..quick(None) },
        TournamentConfig { activation_game: 5, ..quick(None) },
        TournamentConfig { baseline_win_rate: 0.0, ..quick(None) },
        TournamentConfig { planner: RolloutConfig { n: 0, ..RolloutConfig::default() }, ..quick(None) },
    ];
    for cfg in bad {
        let err = run_tournament(&cfg).unwrap_err();
        assert!(matches!(err, HarnessError::Config(_)), "{err}");
        assert_eq!(err.exit_code(), 1);
    }
    assert!(RunConfig::from_toml("[tournament]\ngames = 3\nseed = 4\n").is_ok());
    assert!(matches!(RunConfig::from_toml("[tournament]\nrounds = 3\n"), Err(HarnessError::Config(_))));
}

#[test]
fn tournaments_are_reproducible_and_reportable() {
    let dir = tempfile::tempdir().unwrap();
    let first = run_tournament(&quick(Some(dir.path()))).unwrap();
    let again = run_tournament(&quick(None)).unwrap();
    assert_eq!(first.records, again.records);
    assert_eq!(first.metrics, again.metrics);

    let m = &first.metrics;
    assert_eq!((m.games, m.games_pre, m.games_post), (4, 1, 3));
    assert_eq!(m.true_positives + m.false_positives, m.timeline.len() as u32);
    for (i, r) in first.records.iter().enumerate() {
        assert_eq!(r.game, i as u32 + 1);
        assert_eq!(r.seed, game_seed(11, r.game));
        assert_eq!(r.active, r.game >= 2);
    }
    assert!(dir.path().join("metrics.json").is_file());

    let table = report(dir.path()).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.rows[0].novelty, "jail_fine_easy");
    assert_eq!(table.rows[0].trials, 1);
    assert_eq!(table.trials[0].games_post, 3);
    assert_eq!((table.rows[0].m1, table.rows[0].m2), (m.m1, m.m2));
    assert!(table.to_string().contains("jail_fine_easy"));
}

#[test]
fn reporting_needs_traces() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(report(dir.path()), Err(HarnessError::NoTraces(_))));
    assert!(matches!(report(&dir.path().join("missing")), Err(HarnessError::NoTraces(_))));
    std::fs::write(dir.path().join("broken.jsonl"), "{not json}\n").unwrap();
    let err = report(dir.path()).unwrap_err();
    assert!(matches!(err, HarnessError::Trace { line: 1, .. }), "{err}");
    assert_eq!(err.exit_code(), 2);
}
