use std::path::Path;
use std::process::{Command, Output};

fn owm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_owm")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const QUICK: &str = "[tournament]
games = 3
seats = [\"heuristic\", \"random\", \"random\", \"random\"]
novelty = \"go_salary_medium\"
activation_game = 2
seed = 5
turn_cap = 100
";

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn lists_the_catalog() {
    let o = owm(&["novelties"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 12);
    assert!(out.contains("jail_fine_easy"));
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&owm(&["--help"])), 0);
    assert_eq!(code(&owm(&["tournament", "--games", "many"])), 1);
    assert_eq!(code(&owm(&["frobnicate"])), 1);
}

#[test]
fn plays_a_single_game() {
    let o = owm(&["play", "--seed", "3", "--seats", "heuristic,random,random,random"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).lines().last().unwrap().starts_with("winner "));
    assert_eq!(code(&owm(&["play", "--seats", "heuristic,wizard"])), 1);
}

#[test]
fn tournament_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", QUICK);
    let out = dir.path().join("trial");
    let o = owm(&["tournament", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("games 3 |"));
    assert!(out.join("metrics.json").is_file());

    let json = dir.path().join("table.json");
    let o = owm(&["report", dir.path().to_str().unwrap(), "--json", json.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("go_salary_medium"));
    let table: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(table["rows"][0]["trials"], 1);
}

#[test]
fn configuration_problems_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let unknown_key = write(dir.path(), "a.toml", "[tournament]\nrounds = 2\n");
    assert_eq!(code(&owm(&["tournament", &unknown_key])), 1);
    let missing = dir.path().join("nope.toml");
    assert_eq!(code(&owm(&["tournament", missing.to_str().unwrap()])), 1);
    let cfg = write(dir.path(), "run.toml", QUICK);
    assert_eq!(code(&owm(&["tournament", &cfg, "--novelty", "no_such"])), 1);
    assert_eq!(code(&owm(&["tournament", &cfg, "--activation", "9"])), 1);
}

#[test]
fn runtime_problems_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = owm(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no trace files"));
}
