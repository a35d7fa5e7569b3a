//! `owm`: play games, run tournaments and ablations, and fold traces into
//! reports.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use owm_core::action::player_name;
use owm_core::harness::{self, HarnessError, RunConfig, SeatKind};
use owm_core::novelty::{self, apply_novelty};
use owm_core::rules::RuleSet;
use owm_core::state::Actor;

#[derive(Parser)]
#[command(name = "owm", version, about = "Open-world Monopoly novelty laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play one game and print every event.
    Play {
        /// Run configuration file (TOML).
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Novelty in force from the first move.
        #[arg(long)]
        novelty: Option<String>,
        /// Comma-separated seat kinds: adaptive, frozen, heuristic, random.
        #[arg(long, value_delimiter = ',')]
        seats: Option<Vec<String>>,
    },
    /// Run a tournament and write traces plus metrics.
    Tournament {
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        novelty: Option<String>,
        #[arg(long)]
        activation: Option<u32>,
        #[arg(long)]
        games: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the adaptive agent with its frozen twin on paired seeds.
    Ablation {
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        tournaments: Option<u32>,
        #[arg(long)]
        games: Option<u32>,
        /// Write the report as JSON to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute metrics from trace files and print the summary table.
    Report {
        dir: PathBuf,
        /// Write the machine-readable table to this file.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// List the built-in novelty catalog.
    Novelties,
}

fn load(config: Option<&Path>) -> Result<RunConfig, HarnessError> {
    config.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn parse_seats(names: &[String]) -> Result<Vec<SeatKind>, HarnessError> {
    names
        .iter()
        .map(|n| serde_json::from_value(serde_json::Value::String(n.trim().to_string())).map_err(|_| HarnessError::Config(format!("unknown seat kind `{n}`"))))
        .collect()
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn play(config: Option<&Path>, seed: Option<u64>, novelty: Option<String>, seats: Option<Vec<String>>) -> anyhow::Result<()> {
    let mut cfg = load(config)?.tournament;
    if let Some(s) = seats {
        cfg.seats = parse_seats(&s)?;
    }
    cfg.novelty = novelty.or(cfg.novelty);
    cfg.activation_game = 1;
    cfg.games = 1;
    let spec = cfg.validate()?;
    let rules = match &spec {
        Some(s) => apply_novelty(&RuleSet::classic(), s).map_err(|e| HarnessError::Config(e.to_string()))?,
        None => (*RuleSet::classic()).clone(),
    };
    let seed = harness::game_seed(seed.unwrap_or(cfg.seed), 1);
    let mut agents: Vec<_> = cfg.seats.iter().enumerate().map(|(i, &k)| harness::make_agent(k, i, &cfg)).collect();
    let played = harness::play_game(&rules, &mut agents, 1, seed, cfg.turn_cap, spec.is_some())?;
    for e in &played.events {
        let who = match e.actor {
            Actor::Player(p) => player_name(p),
            Actor::Bank => "bank".into(),
        };
        let what = e.action.as_ref().map_or_else(|| e.note.clone().unwrap_or_default(), |a| a.to_string());
        let cash: Vec<String> = e.cash_deltas.iter().map(|(p, d)| format!("{}{:+}", player_name(*p), d)).collect();
        println!("{:>6} {:<8} {} {}", e.time_step, who, what, cash.join(" "));
    }
    if let Some(r) = &played.record.report {
        println!("novelty reported in game {} at step {} ({}): {}", r.game, r.time_step, r.iota, r.summary);
    }
    for c in &played.characterizations {
        println!("characterized {} -> {:?} {:?}", c.result.focus, c.result.status, c.result.survivors.first());
    }
    let r = &played.record;
    println!("winner {} after {} turns{}", player_name(r.winner), r.turns, if r.by_cap { " (turn cap)" } else { "" });
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Play { config, seed, novelty, seats } => play(config.as_deref(), seed, novelty, seats),
        Command::Tournament { config, seed, novelty, activation, games, out } => {
            let mut cfg = load(config.as_deref())?.tournament;
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.novelty = novelty.or(cfg.novelty);
            cfg.activation_game = activation.unwrap_or(cfg.activation_game);
            cfg.games = games.unwrap_or(cfg.games);
            cfg.out = out.or(cfg.out);
            let outcome = harness::run_tournament(&cfg)?;
            let m = &outcome.metrics;
            let pct = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.2}%"));
            println!(
                "games {} | M1 {} | M2 {:.0}% | M3 {} | M4 {} | wins pre {}/{} post {}/{}",
                m.games,
                m.m1.map_or("-".into(), |v| format!("{:.0}%", 100.0 * v)),
                100.0 * m.m2,
                pct(m.m3),
                pct(m.m4),
                m.wins_pre,
                m.games_pre,
                m.wins_post,
                m.games_post
            );
            if let Some(r) = m.timeline.first() {
                println!("first report: game {} step {} ({}) {}", r.game, r.time_step, r.iota, r.summary);
            }
            Ok(())
        }
        Command::Ablation { config, seed, tournaments, games, out } => {
            let run = load(config.as_deref())?;
            let mut base = run.tournament;
            let mut abl = run.ablation;
            base.seed = seed.unwrap_or(base.seed);
            abl.tournaments = tournaments.unwrap_or(abl.tournaments);
            abl.games = games.unwrap_or(abl.games);
            let report = harness::run_ablation(&base, &abl)?;
            print!("{report}");
            if let Some(path) = out {
                write_json(&path, &report)?;
            }
            Ok(())
        }
        Command::Report { dir, json } => {
            let table = harness::report(&dir)?;
            print!("{table}");
            if let Some(path) = json {
                write_json(&path, &table)?;
            }
            Ok(())
        }
        Command::Novelties => {
            for n in novelty::builtin_catalog() {
                println!("{:<22} {:<12} {:<7} {}", n.id, n.category, n.difficulty, n.description);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<HarnessError>().map_or(2, HarnessError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
