//! Tournaments, detection scoring, the novelty-reaction metrics, the
//! adaptive-versus-frozen ablation and the trace-folding report.
//!
//! Seat 0 is always the agent under test. A tournament plays `games` games
//! with one persistent set of agents; games before `activation_game` use the
//! classic rules and the rest use the novelty's mutated rules.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::action::PlayerId;
use crate::agents::{Agent, HeuristicAgent, HeuristicPolicy, PlannerAgent, RandomAgent};
use crate::detect::{Iota, Report};
use crate::engine::{self, is_terminal};
use crate::handler::CharacterizationLog;
use crate::novelty::{self, apply_novelty, Category, Difficulty, NoveltySpec};
use crate::planner::{splitmix64, RolloutConfig};
use crate::rules::RuleSet;
use crate::state::EventRecord;

/// Win rate of the reference agent the reaction metrics are scaled by.
pub const REFERENCE_BASELINE: f64 = 0.65;

/// Safety net against a game that never reaches a terminal state.
const MAX_STEPS_PER_TURN: u64 = 400;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {msg}")]
    Trace { path: PathBuf, line: usize, msg: String },
    #[error("no trace files under {0}")]
    NoTraces(PathBuf),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl HarnessError {
    /// Process exit code: 1 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeatKind {
    /// Rollout planner with the full novelty pipeline.
    Adaptive,
    /// Rollout planner whose knowledge base stays classic; it still detects.
    Frozen,
    Heuristic,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TournamentConfig {
    pub games: u32,
    pub seats: Vec<SeatKind>,
    /// Catalog id of the novelty to inject, if any.
    pub novelty: Option<String>,
    pub activation_game: u32,
    pub seed: u64,
    pub turn_cap: u32,
    pub baseline_win_rate: f64,
    /// Also replay the tournament with a heuristic agent in seat 0 and scale
    /// the reaction metrics by its measured win rate.
    pub live_baseline: bool,
    pub trace: bool,
    pub out: Option<PathBuf>,
    pub planner: RolloutConfig,
    pub heuristic: HeuristicPolicy,
}

impl Default for TournamentConfig {
    fn default() -> Self {
        TournamentConfig {
            games: 100,
            seats: vec![SeatKind::Adaptive, SeatKind::Heuristic, SeatKind::Heuristic, SeatKind::Heuristic],
            novelty: None,
            activation_game: 5,
            seed: 0,
            turn_cap: engine::DEFAULT_TURN_CAP,
            baseline_win_rate: REFERENCE_BASELINE,
            live_baseline: false,
            trace: true,
            out: None,
            planner: RolloutConfig::default(),
            heuristic: HeuristicPolicy::default(),
        }
    }
}

impl TournamentConfig {
    pub fn validate(&self) -> Result<Option<NoveltySpec>, HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.games == 0 {
            return bad("games must be at least 1".into());
        }
        if !(2..=crate::state::MAX_PLAYERS).contains(&self.seats.len()) {
            return bad(format!("{} seats; between 2 and {} are supported", self.seats.len(), crate::state::MAX_PLAYERS));
        }
        if self.turn_cap == 0 {
            return bad("turn_cap must be at least 1".into());
        }
        if !(self.baseline_win_rate > 0.0 && self.baseline_win_rate <= 1.0) {
            return bad("baseline_win_rate must lie in (0, 1]".into());
        }
        self.planner.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        let Some(id) = &self.novelty else { return Ok(None) };
        let spec = novelty::find(id).ok_or_else(|| HarnessError::Config(format!("unknown novelty `{id}`")))?;
        if !(1..=self.games).contains(&self.activation_game) {
            return bad(format!("activation_game {} is outside 1..={}", self.activation_game, self.games));
        }
        Ok(Some(spec.with_activation(self.activation_game)))
    }
}

/// Seed of game `game` (1-based) in a tournament with master seed `master`.
pub fn game_seed(master: u64, game: u32) -> u64 {
    splitmix64(master ^ splitmix64(game as u64))
}

/// A fresh agent for `seat`, configured from the tournament settings.
pub fn make_agent(kind: SeatKind, seat: usize, cfg: &TournamentConfig) -> Box<dyn Agent> {
    match kind {
        SeatKind::Adaptive => Box::new(PlannerAgent::new(true, cfg.planner.clone())),
        SeatKind::Frozen => Box::new(PlannerAgent::new(false, cfg.planner.clone())),
        SeatKind::Heuristic => Box::new(HeuristicAgent { policy: cfg.heuristic.clone() }),
        SeatKind::Random => Box::new(RandomAgent::new(splitmix64(cfg.seed ^ (seat as u64 + 1) << 32))),
    }
}

/// Outcome of one game, as scored.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameRecord {
    pub game: u32,
    pub seed: u64,
    /// The novelty's rules were in force.
    pub active: bool,
    pub winner: PlayerId,
    pub by_cap: bool,
    pub turns: u32,
    /// Decision points at which each seat's detector saw a discrepancy.
    pub detections: Vec<u64>,
    /// The agent's first report of this game, if any.
    pub report: Option<Report>,
}

impl GameRecord {
    pub fn agent_won(&self) -> bool {
        self.winner == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoveltyInfo {
    pub id: String,
    pub category: Category,
    pub difficulty: Difficulty,
}

impl From<&NoveltySpec> for NoveltyInfo {
    fn from(s: &NoveltySpec) -> Self {
        NoveltyInfo { id: s.id.clone(), category: s.category, difficulty: s.difficulty }
    }
}

/// One line of a game trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceLine {
    Header {
        game: u32,
        seed: u64,
        novelty: Option<NoveltyInfo>,
        activation_game: Option<u32>,
        active: bool,
        seats: Vec<SeatKind>,
        baseline_win_rate: f64,
        turn_cap: u32,
    },
    Event(EventRecord),
    Detection(Report),
    Characterization(CharacterizationLog),
    Result(GameRecord),
}

/// A played game with everything needed to trace it.
pub struct PlayedGame {
    pub record: GameRecord,
    pub events: Vec<EventRecord>,
    pub characterizations: Vec<CharacterizationLog>,
}

/// Plays one game with the given agents under `rules`.
pub fn play_game(
    rules: &RuleSet,
    agents: &mut [Box<dyn Agent>],
    game: u32,
    seed: u64,
    turn_cap: u32,
    active: bool,
) -> Result<PlayedGame, HarnessError> {
    let n = agents.len();
    let seen = |agents: &mut [Box<dyn Agent>]| -> Vec<u64> {
        agents.iter_mut().map(|a| a.handler().map_or(0, |h| h.detections())).collect()
    };
    let before = seen(agents);
    let mut s = engine::new_game_capped(seed, rules, n, turn_cap).map_err(|e| HarnessError::Config(e.to_string()))?;
    for a in agents.iter_mut() {
        a.begin_game(game, &s);
    }
    let mut cursors = vec![0usize; n];
    let mut report = None;
    let mut characterizations = Vec::new();
    let limit = MAX_STEPS_PER_TURN * (turn_cap as u64 + 1);
    let mut steps = 0u64;
    while is_terminal(&s).is_none() {
        let p = s.solicited().ok_or_else(|| HarnessError::Runtime(format!("game {game}: nobody to act")))?;
        let obs = engine::observe(rules, &s, p, &mut cursors[p as usize]);
        let agent = &mut agents[p as usize];
        let action = agent.act(&obs);
        if p == 0 {
            if let Some(h) = agent.handler() {
                characterizations.extend(h.take_log());
                if report.is_none() {
                    report = h.flags().reports.iter().find(|r| r.game == game).cloned();
                }
            }
        }
        if !obs.menu.contains(&action) {
            return Err(HarnessError::Runtime(format!("game {game}: {} chose illegal {action}", agent.name())));
        }
        engine::step(rules, &mut s, &action).map_err(|e| HarnessError::Runtime(format!("game {game}: {e}")))?;
        steps += 1;
        if steps > limit {
            return Err(HarnessError::Runtime(format!("game {game}: no terminal state after {steps} steps")));
        }
    }
    let verdict = is_terminal(&s).expect("terminal");
    let detections = seen(agents).iter().zip(&before).map(|(a, b)| a - b).collect();
    let record = GameRecord {
        game,
        seed,
        active,
        winner: verdict.winner,
        by_cap: verdict.by_cap,
        turns: s.player_turns,
        detections,
        report,
    };
    Ok(PlayedGame { record, events: std::mem::take(&mut s.history), characterizations })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub novelty: Option<NoveltyInfo>,
    pub activation_game: Option<u32>,
    pub games: u32,
    /// 1 when the trial has a true positive and no false positive, 0
    /// otherwise; undefined without a novelty.
    pub m1: Option<f64>,
    /// 1 when the trial has any false positive.
    pub m2: f64,
    /// Reaction performance before and after activation, in percent.
    pub m3: Option<f64>,
    pub m4: Option<f64>,
    pub baseline_win_rate: f64,
    pub m3_live: Option<f64>,
    pub m4_live: Option<f64>,
    pub wins_pre: u32,
    pub games_pre: u32,
    pub wins_post: u32,
    pub games_post: u32,
    pub cap_decided: u32,
    pub true_positives: u32,
    pub false_positives: u32,
    /// Whether the first true positive named the novelty's category.
    pub category_correct: Option<bool>,
    pub timeline: Vec<Report>,
}

/// Classifies each report: a report in or after the activation game is a
/// true positive, anything else a false positive.
pub fn score_detection(activation: Option<u32>, reports: &[Report]) -> (u32, u32) {
    let tp = reports.iter().filter(|r| activation.is_some_and(|a| r.game >= a)).count() as u32;
    (tp, reports.len() as u32 - tp)
}

/// Reaction performance in percent: the agent's win rate over the baseline's.
pub fn compute_nrp(win_rate: f64, baseline: f64) -> Result<f64, HarnessError> {
    if !(baseline > 0.0) || !baseline.is_finite() {
        return Err(HarnessError::Config(format!("baseline win rate {baseline} must be positive")));
    }
    Ok(100.0 * win_rate / baseline)
}

fn iota_of(c: Category) -> Option<Iota> {
    match c {
        Category::Action => Some(Iota::Action),
        Category::Interaction => Some(Iota::Interaction),
        Category::Relation => Some(Iota::Relation),
        Category::Parameter => None,
    }
}

fn rate(wins: u32, games: u32) -> Option<f64> {
    (games > 0).then(|| wins as f64 / games as f64)
}

/// Folds game records into the trial metrics. `live` holds the baseline
/// agent's records over the same seeds, when measured.
pub fn compute_metrics(
    novelty: Option<&NoveltyInfo>,
    activation: Option<u32>,
    baseline_win_rate: f64,
    records: &[GameRecord],
    live: Option<&[GameRecord]>,
) -> Metrics {
    let activation = novelty.and(activation);
    let timeline: Vec<Report> = records.iter().filter_map(|r| r.report.clone()).collect();
    let (tp, fp) = score_detection(activation, &timeline);
    let count = |rs: &[GameRecord], post: bool| -> (u32, u32) {
        let sel = rs.iter().filter(|r| activation.is_some_and(|a| r.game >= a) == post);
        sel.fold((0, 0), |(w, g), r| (w + r.agent_won() as u32, g + 1))
    };
    let (wins_pre, games_pre) = count(records, false);
    let (wins_post, games_post) = count(records, true);
    let nrp = |w, g, base: f64| rate(w, g).and_then(|x| compute_nrp(x, base).ok());
    let (m3_live, m4_live) = match live {
        Some(l) => {
            let (lw, lg) = count(l, false);
            let (pw, pg) = count(l, true);
            (
                rate(lw, lg).and_then(|b| nrp(wins_pre, games_pre, b)),
                rate(pw, pg).and_then(|b| nrp(wins_post, games_post, b)),
            )
        }
        None => (None, None),
    };
    let first_tp = timeline.iter().find(|r| activation.is_some_and(|a| r.game >= a));
    Metrics {
        novelty: novelty.cloned(),
        activation_game: activation,
        games: records.len() as u32,
        m1: novelty.map(|_| if tp > 0 && fp == 0 { 1.0 } else { 0.0 }),
        m2: if fp > 0 { 1.0 } else { 0.0 },
        m3: nrp(wins_pre, games_pre, baseline_win_rate),
        m4: nrp(wins_post, games_post, baseline_win_rate),
        baseline_win_rate,
        m3_live,
        m4_live,
        wins_pre,
        games_pre,
        wins_post,
        games_post,
        cap_decided: records.iter().filter(|r| r.by_cap).count() as u32,
        true_positives: tp,
        false_positives: fp,
        category_correct: novelty.and_then(|n| first_tp.map(|r| iota_of(n.category).map_or(r.iota == Iota::None, |i| i == r.iota))),
        timeline,
    }
}

#[derive(Clone, Debug)]
pub struct TournamentOutcome {
    pub metrics: Metrics,
    pub records: Vec<GameRecord>,
}

fn write_json_line<W: Write, T: Serialize>(w: &mut W, v: &T, path: &Path) -> Result<(), HarnessError> {
    serde_json::to_writer(&mut *w, v).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    w.write_all(b"\n").map_err(io_err(path))
}

fn play_tournament(
    cfg: &TournamentConfig,
    spec: Option<&NoveltySpec>,
    seats: &[SeatKind],
    trace_dir: Option<&Path>,
) -> Result<Vec<GameRecord>, HarnessError> {
    let classic = RuleSet::classic();
    let mutated = match spec {
        Some(s) => Some(apply_novelty(&classic, s).map_err(|e| HarnessError::Config(e.to_string()))?),
        None => None,
    };
    let mut agents: Vec<Box<dyn Agent>> = seats.iter().enumerate().map(|(i, &k)| make_agent(k, i, cfg)).collect();
    let mut records = Vec::with_capacity(cfg.games as usize);
    for game in 1..=cfg.games {
        let seed = game_seed(cfg.seed, game);
        let active = spec.is_some() && game >= cfg.activation_game;
        let rules = if active { mutated.as_ref().expect("novelty rules") } else { &classic };
        let played = play_game(rules, &mut agents, game, seed, cfg.turn_cap, active)?;
        if let Some(dir) = trace_dir {
            let path = dir.join(format!("game_{game:04}.jsonl"));
            let f = fs::File::create(&path).map_err(io_err(&path))?;
            let mut w = BufWriter::new(f);
            let header = TraceLine::Header {
                game,
                seed,
                novelty: spec.map(NoveltyInfo::from),
                activation_game: spec.map(|_| cfg.activation_game),
                active,
                seats: seats.to_vec(),
                baseline_win_rate: cfg.baseline_win_rate,
                turn_cap: cfg.turn_cap,
            };
            write_json_line(&mut w, &header, &path)?;
            for e in played.events {
                write_json_line(&mut w, &TraceLine::Event(e), &path)?;
            }
            if let Some(r) = &played.record.report {
                write_json_line(&mut w, &TraceLine::Detection(r.clone()), &path)?;
            }
            for c in played.characterizations {
                write_json_line(&mut w, &TraceLine::Characterization(c), &path)?;
            }
            write_json_line(&mut w, &TraceLine::Result(played.record.clone()), &path)?;
            w.flush().map_err(io_err(&path))?;
        }
        records.push(played.record);
    }
    Ok(records)
}

/// Runs a tournament, writing traces and `metrics.json` under `cfg.out`
/// when set.
pub fn run_tournament(cfg: &TournamentConfig) -> Result<TournamentOutcome, HarnessError> {
    let spec = cfg.validate()?;
    let trace_dir = match (&cfg.out, cfg.trace) {
        (Some(out), true) => {
            fs::create_dir_all(out).map_err(io_err(out))?;
            Some(out.as_path())
        }
        (Some(out), false) => {
            fs::create_dir_all(out).map_err(io_err(out))?;
            None
        }
        _ => None,
    };
    let records = play_tournament(cfg, spec.as_ref(), &cfg.seats, trace_dir)?;
    let live = if cfg.live_baseline {
        let mut seats = cfg.seats.clone();
        seats[0] = SeatKind::Heuristic;
        Some(play_tournament(cfg, spec.as_ref(), &seats, None)?)
    } else {
        None
    };
    let info = spec.as_ref().map(NoveltyInfo::from);
    let metrics =
        compute_metrics(info.as_ref(), spec.as_ref().map(|_| cfg.activation_game), cfg.baseline_win_rate, &records, live.as_deref());
    if let Some(out) = &cfg.out {
        let path = out.join("metrics.json");
        let text = serde_json::to_string_pretty(&metrics).map_err(|e| HarnessError::Runtime(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(io_err(&path))?;
    }
    Ok(TournamentOutcome { metrics, records })
}

// ---------------------------------------------------------------------------
// Ablation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    /// Paired tournaments per novelty.
    pub tournaments: u32,
    pub games: u32,
    pub activation_game: u32,
    /// One novelty per row; the defaults cover each novelty category.
    pub novelties: Vec<String>,
    /// Also compare the two arms with no novelty at all.
    pub control: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            tournaments: 10,
            games: 20,
            activation_game: 1,
            novelties: ["stay_in_jail_easy", "homogeneity_easy", "loan_request_easy"].map(String::from).to_vec(),
            control: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub wins: u32,
    pub games: u32,
    /// Mean and standard deviation of the per-tournament win rate.
    pub mean: f64,
    pub sd: f64,
}

impl ArmStats {
    fn from_tournaments(rs: &[Vec<bool>]) -> ArmStats {
        let rates: Vec<f64> = rs.iter().filter(|t| !t.is_empty()).map(|t| t.iter().filter(|&&w| w).count() as f64 / t.len() as f64).collect();
        let (mean, sd) = mean_sd(&rates);
        ArmStats {
            wins: rs.iter().flatten().filter(|&&w| w).count() as u32,
            games: rs.iter().map(|t| t.len() as u32).sum(),
            mean,
            sd,
        }
    }

    pub fn win_rate(&self) -> f64 {
        if self.games == 0 {
            0.0
        } else {
            self.wins as f64 / self.games as f64
        }
    }
}

/// Sample mean and standard deviation (n − 1 denominator).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub pairs: usize,
    pub mean_diff: f64,
    pub t: f64,
    /// One-sided p-value for a positive mean difference.
    pub p: f64,
}

/// One-sided paired t-test of `a > b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> PairedTest {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let (mean, sd) = mean_sd(&d);
    if n < 2 {
        return PairedTest { pairs: n, mean_diff: mean, t: f64::NAN, p: 1.0 };
    }
    if sd == 0.0 {
        let (t, p) = match mean.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => (f64::INFINITY, 0.0),
            Some(std::cmp::Ordering::Less) => (f64::NEG_INFINITY, 1.0),
            _ => (0.0, 0.5),
        };
        return PairedTest { pairs: n, mean_diff: mean, t, p };
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom");
    PairedTest { pairs: n, mean_diff: mean, t, p: dist.sf(t) }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// Novelty category, or "none" for the control.
    pub label: String,
    pub novelty: Option<String>,
    pub adaptive: ArmStats,
    pub frozen: ArmStats,
    /// Per-game win indicators, paired by seed.
    pub test: PairedTest,
}

impl AblationRow {
    pub fn diff_pp(&self) -> f64 {
        100.0 * (self.adaptive.win_rate() - self.frozen.win_rate())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl fmt::Display for AblationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:<20} {:>16} {:>16} {:>8} {:>7} {:>9}", "category", "novelty", "adaptive", "frozen", "diff", "pairs", "p")?;
        for r in &self.rows {
            let arm = |a: &ArmStats| format!("{:.1} ± {:.1}", 100.0 * a.mean, 100.0 * a.sd);
            writeln!(
                f,
                "{:<12} {:<20} {:>16} {:>16} {:>+7.1}pp {:>6} {:>9.4}",
                r.label,
                r.novelty.as_deref().unwrap_or("-"),
                arm(&r.adaptive),
                arm(&r.frozen),
                r.diff_pp(),
                r.test.pairs,
                r.test.p
            )?;
        }
        Ok(())
    }
}

/// Post-activation win indicators of seat 0, one vector per tournament.
fn arm_wins(base: &TournamentConfig, abl: &AblationConfig, novelty: Option<&str>, kind: SeatKind) -> Result<Vec<Vec<bool>>, HarnessError> {
    (0..abl.tournaments)
        .map(|t| {
            let mut cfg = base.clone();
            cfg.games = abl.games;
            cfg.activation_game = abl.activation_game;
            cfg.novelty = novelty.map(String::from);
            cfg.seed = splitmix64(base.seed ^ splitmix64(1 + t as u64));
            cfg.seats[0] = kind;
            cfg.out = None;
            cfg.live_baseline = false;
            let spec = cfg.validate()?;
            let records = play_tournament(&cfg, spec.as_ref(), &cfg.seats, None)?;
            Ok(records.iter().filter(|r| r.game >= abl.activation_game).map(|r| r.agent_won()).collect())
        })
        .collect()
}

/// Paired tournaments (identical seeds) for the adaptive agent and the same
/// planner with its knowledge base frozen at the classic rules.
pub fn run_ablation(base: &TournamentConfig, abl: &AblationConfig) -> Result<AblationReport, HarnessError> {
    if abl.tournaments == 0 || abl.games == 0 || !(1..=abl.games).contains(&abl.activation_game) {
        return Err(HarnessError::Config("ablation needs tournaments, games and an activation game within them".into()));
    }
    let mut targets: Vec<Option<String>> = Vec::new();
    if abl.control {
        targets.push(None);
    }
    targets.extend(abl.novelties.iter().cloned().map(Some));
    let mut rows = Vec::new();
    for novelty in targets {
        let label = match &novelty {
            Some(id) => novelty::find(id).ok_or_else(|| HarnessError::Config(format!("unknown novelty `{id}`")))?.category.to_string(),
            None => "none".to_string(),
        };
        let a = arm_wins(base, abl, novelty.as_deref(), SeatKind::Adaptive)?;
        let b = arm_wins(base, abl, novelty.as_deref(), SeatKind::Frozen)?;
        let flat = |x: &[Vec<bool>]| -> Vec<f64> { x.iter().flatten().map(|&w| w as u8 as f64).collect() };
        rows.push(AblationRow {
            label,
            novelty,
            adaptive: ArmStats::from_tournaments(&a),
            frozen: ArmStats::from_tournaments(&b),
            test: paired_t_test(&flat(&a), &flat(&b)),
        });
    }
    Ok(AblationReport { rows })
}

// ---------------------------------------------------------------------------
// Report

/// One game's trace, folded.
#[derive(Clone, Debug)]
struct TracedGame {
    novelty: Option<NoveltyInfo>,
    activation: Option<u32>,
    baseline: f64,
    record: GameRecord,
}

fn read_trace(path: &Path) -> Result<TracedGame, HarnessError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut header = None;
    let mut record = None;
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| HarnessError::Trace { path: path.to_path_buf(), line: i + 1, msg };
        match serde_json::from_str::<TraceLine>(&line).map_err(|e| bad(e.to_string()))? {
            TraceLine::Header { novelty, activation_game, baseline_win_rate, .. } => {
                header = Some((novelty, activation_game, baseline_win_rate))
            }
            TraceLine::Result(r) => record = Some(r),
            _ => {}
        }
    }
    let missing = |what: &str| HarnessError::Trace { path: path.to_path_buf(), line: 0, msg: format!("no {what} line") };
    let (novelty, activation, baseline) = header.ok_or_else(|| missing("header"))?;
    Ok(TracedGame { novelty, activation, baseline, record: record.ok_or_else(|| missing("result"))? })
}

fn trace_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_dir() {
            trace_files(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "jsonl") {
            out.push(path);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub novelty: String,
    pub category: Option<Category>,
    pub difficulty: Option<Difficulty>,
    pub trials: usize,
    /// Means over trials; reaction metrics in percent.
    pub m1: Option<f64>,
    pub m2: f64,
    pub m3: Option<f64>,
    pub m4: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
    pub trials: Vec<Metrics>,
}

impl fmt::Display for ReportTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.2}%"));
        writeln!(f, "{:<22} {:<12} {:<10} {:>6} {:>9} {:>9} {:>9} {:>9}", "novelty", "category", "difficulty", "trials", "M1", "M2", "M3", "M4")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<22} {:<12} {:<10} {:>6} {:>9} {:>9} {:>9} {:>9}",
                r.novelty,
                r.category.map_or("-".into(), |c| c.to_string()),
                r.difficulty.map_or("-".into(), |d| d.to_string()),
                r.trials,
                pct(r.m1.map(|x| 100.0 * x)),
                pct(Some(100.0 * r.m2)),
                pct(r.m3),
                pct(r.m4)
            )?;
        }
        Ok(())
    }
}

fn mean_of(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Recomputes every trial's metrics from its trace files and aggregates them
/// per novelty. Each directory holding traces is one trial.
pub fn report(dir: &Path) -> Result<ReportTable, HarnessError> {
    if !dir.is_dir() {
        return Err(HarnessError::NoTraces(dir.to_path_buf()));
    }
    let mut files = Vec::new();
    trace_files(dir, &mut files)?;
    if files.is_empty() {
        return Err(HarnessError::NoTraces(dir.to_path_buf()));
    }
    let mut trials: BTreeMap<PathBuf, Vec<TracedGame>> = BTreeMap::new();
    for path in files {
        let game = read_trace(&path)?;
        trials.entry(path.parent().map(Path::to_path_buf).unwrap_or_default()).or_default().push(game);
    }
    let mut metrics = Vec::new();
    for games in trials.values_mut() {
        games.sort_by_key(|g| g.record.game);
        let first = &games[0];
        let records: Vec<GameRecord> = games.iter().map(|g| g.record.clone()).collect();
        metrics.push(compute_metrics(first.novelty.as_ref(), first.activation, first.baseline, &records, None));
    }
    let mut groups: BTreeMap<String, Vec<&Metrics>> = BTreeMap::new();
    for m in &metrics {
        groups.entry(m.novelty.as_ref().map_or("none".into(), |n| n.id.clone())).or_default().push(m);
    }
    let rows = groups
        .into_iter()
        .map(|(novelty, ms)| ReportRow {
            novelty,
            category: ms[0].novelty.as_ref().map(|n| n.category),
            difficulty: ms[0].novelty.as_ref().map(|n| n.difficulty),
            trials: ms.len(),
            m1: mean_of(ms.iter().map(|m| m.m1)),
            m2: ms.iter().map(|m| m.m2).sum::<f64>() / ms.len() as f64,
            m3: mean_of(ms.iter().map(|m| m.m3)),
            m4: mean_of(ms.iter().map(|m| m.m4)),
        })
        .collect();
    Ok(ReportTable { rows, trials: metrics })
}

/// The full run configuration file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub tournament: TournamentConfig,
    pub ablation: AblationConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }
}
