use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

/// Seat index, 0-based. Displayed 1-based (`player1` is seat 0).
pub type PlayerId = u8;

pub fn player_name(p: PlayerId) -> String {
    format!("player{}", p + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arg {
    Player(PlayerId),
    Square(u8),
    Int(i64),
}

impl Arg {
    pub fn kind(&self) -> ArgKind {
        match self {
            Arg::Player(_) => ArgKind::Player,
            Arg::Square(_) => ArgKind::Square,
            Arg::Int(_) => ArgKind::Int,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgKind {
    Player,
    Square,
    Int,
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Player(p) => write!(f, "{}", player_name(*p)),
            Arg::Square(s) => write!(f, "sq{s}"),
            Arg::Int(v) => write!(f, "{v}"),
        }
    }
}

pub type Args = SmallVec<[Arg; 3]>;

/// A ground action instance: schema name, acting seat and typed arguments.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Action {
    pub name: Arc<str>,
    pub actor: PlayerId,
    #[serde(default)]
    pub args: Args,
}

impl Action {
    pub fn new(name: &str, actor: PlayerId) -> Action {
        Action { name: Arc::from(name), actor, args: Args::new() }
    }

    pub fn with_args(name: &str, actor: PlayerId, args: &[Arg]) -> Action {
        Action { name: Arc::from(name), actor, args: args.iter().copied().collect() }
    }

    pub fn is(&self, name: &str) -> bool {
        &*self.name == name
    }

    pub fn square_arg(&self) -> Option<u8> {
        self.args.iter().find_map(|a| match a {
            Arg::Square(s) => Some(*s),
            _ => None,
        })
    }

    pub fn int_arg(&self) -> Option<i64> {
        self.args.iter().find_map(|a| match a {
            Arg::Int(v) => Some(*v),
            _ => None,
        })
    }

    pub fn player_arg(&self) -> Option<PlayerId> {
        self.args.iter().find_map(|a| match a {
            Arg::Player(p) => Some(*p),
            _ => None,
        })
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}", self.name, player_name(self.actor))?;
        for a in &self.args {
            write!(f, ", {a}")?;
        }
        f.write_str(")")
    }
}
