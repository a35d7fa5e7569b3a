//! Static board and card data.
//!
//! The classic board ships as an embedded TOML file whose SHA-256 is pinned
//! in [`CLASSIC_BOARD_SHA256`]. Custom boards can be loaded with
//! [`Board::from_toml_str`]; the same structural invariants are enforced.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const BOARD_SIZE: usize = 40;
pub const MAX_LEVEL: u8 = 5;

pub const CLASSIC_BOARD_TOML: &str = include_str!("../data/classic_board.toml");
pub const CLASSIC_BOARD_SHA256: &str =
    "029940a4c133650f8c8590d0f6ce9f259b9682e21904d55f271767f4c83a1377";

#[derive(Debug, Error)]
pub enum BoardError {
    #[error("board file is not valid TOML: {0}")]
    Syntax(String),
    #[error("board checksum mismatch: expected {expected}, found {found}")]
    Checksum { expected: String, found: String },
    #[error("board must have exactly {BOARD_SIZE} squares, found {0}")]
    SquareCount(usize),
    #[error("square {0} is out of order or duplicated")]
    Index(usize),
    #[error("square {index} ({name}): {reason}")]
    Square { index: usize, name: String, reason: String },
    #[error("card {name}: {reason}")]
    Card { name: String, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SquareKind {
    Property,
    Railroad,
    Utility,
    Tax,
    Chance,
    CommunityChest,
    Go,
    Jail,
    GoToJail,
    FreeParking,
}

impl SquareKind {
    pub fn is_purchasable(self) -> bool {
        matches!(self, SquareKind::Property | SquareKind::Railroad | SquareKind::Utility)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeckKind {
    Chance,
    CommunityChest,
}

impl DeckKind {
    pub fn name(self) -> &'static str {
        match self {
            DeckKind::Chance => "chance",
            DeckKind::CommunityChest => "community_chest",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for DeckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NearestTarget {
    Railroad,
    Utility,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CardEffect {
    AdvanceTo { square: u8 },
    AdvanceToNearest { target: NearestTarget },
    Back { spaces: u8 },
    Collect { amount: i64 },
    Pay { amount: i64 },
    CollectEach { amount: i64 },
    PayEach { amount: i64 },
    Repairs { house: i64, hotel: i64 },
    GoToJail,
    JailFree,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Card {
    pub deck: DeckKind,
    pub name: String,
    pub effect: CardEffect,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Square {
    pub index: u8,
    pub name: String,
    pub kind: SquareKind,
    #[serde(default)]
    pub group: Option<String>,
    #[serde(default)]
    pub price: Option<i64>,
    #[serde(default)]
    pub rents: Vec<i64>,
    #[serde(default)]
    pub house_cost: Option<i64>,
    #[serde(default)]
    pub tax_param: Option<String>,
}

impl Square {
    pub fn price(&self) -> i64 {
        self.price.unwrap_or(0)
    }

    pub fn mortgage_value(&self) -> i64 {
        self.price() / 2
    }

    /// Cost of lifting a mortgage: 110% of the mortgage value.
    pub fn redeem_cost(&self) -> i64 {
        self.mortgage_value() * 11 / 10
    }

    pub fn house_cost(&self) -> i64 {
        self.house_cost.unwrap_or(0)
    }

    pub fn house_sale(&self) -> i64 {
        self.house_cost() / 2
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColorGroup {
    pub name: String,
    pub squares: Vec<u8>,
}

#[derive(Deserialize)]
struct BoardFile {
    version: String,
    #[serde(rename = "square")]
    squares: Vec<Square>,
    #[serde(rename = "card", default)]
    cards: Vec<Card>,
}

/// Immutable board description shared by every game and rule set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Board {
    pub version: String,
    pub squares: Vec<Square>,
    pub cards: Vec<Card>,
    pub groups: Vec<ColorGroup>,
    group_of: [Option<u8>; BOARD_SIZE],
    railroads: Vec<u8>,
    utilities: Vec<u8>,
    decks: [Vec<u8>; 2],
}

pub fn sha256_hex(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl Board {
    /// The embedded classic board, verified against the pinned checksum.
    pub fn classic() -> Arc<Board> {
        static CLASSIC: OnceLock<Arc<Board>> = OnceLock::new();
        CLASSIC
            .get_or_init(|| {
                let board = Board::from_pinned_toml(CLASSIC_BOARD_TOML, CLASSIC_BOARD_SHA256)
                    .expect("embedded classic board is valid");
                Arc::new(board)
            })
            .clone()
    }

    pub fn from_pinned_toml(text: &str, sha256: &str) -> Result<Board, BoardError> {
        let found = sha256_hex(text);
        if found != sha256 {
            return Err(BoardError::Checksum { expected: sha256.to_string(), found });
        }
        Board::from_toml_str(text)
    }

    pub fn from_toml_str(text: &str) -> Result<Board, BoardError> {
        let file: BoardFile = toml::from_str(text).map_err(|e| BoardError::Syntax(e.to_string()))?;
        if file.squares.len() != BOARD_SIZE {
            return Err(BoardError::SquareCount(file.squares.len()));
        }
        let mut groups: BTreeMap<String, Vec<u8>> = BTreeMap::new();
        let mut railroads = Vec::new();
        let mut utilities = Vec::new();
        for (i, sq) in file.squares.iter().enumerate() {
            if sq.index as usize != i {
                return Err(BoardError::Index(i));
            }
            let bad = |reason: &str| BoardError::Square {
                index: i,
                name: sq.name.clone(),
                reason: reason.to_string(),
            };
            match sq.kind {
                SquareKind::Property => {
                    if sq.rents.len() != MAX_LEVEL as usize + 1 {
                        return Err(bad("property needs six rent levels"));
                    }
                    if sq.group.is_none() || sq.house_cost.is_none() {
                        return Err(bad("property needs a group and a house cost"));
                    }
                    groups.entry(sq.group.clone().unwrap()).or_default().push(sq.index);
                }
                SquareKind::Railroad => {
                    if sq.rents.len() != 4 {
                        return Err(bad("railroad needs four rent tiers"));
                    }
                    railroads.push(sq.index);
                }
                SquareKind::Utility => {
                    if sq.rents.len() != 2 {
                        return Err(bad("utility needs two multipliers"));
                    }
                    utilities.push(sq.index);
                }
                SquareKind::Tax if sq.tax_param.is_none() => return Err(bad("tax square needs tax_param")),
                _ => {}
            }
            if sq.kind.is_purchasable() {
                if sq.price.unwrap_or(0) <= 0 {
                    return Err(bad("purchasable square needs a positive price"));
                }
            } else if sq.price.is_some() {
                return Err(bad("non-purchasable square has a price"));
            }
        }
        // Groups are ordered by their first square so ids follow the board.
        let mut groups: Vec<ColorGroup> =
            groups.into_iter().map(|(name, squares)| ColorGroup { name, squares }).collect();
        groups.sort_by_key(|g| g.squares[0]);
        let mut group_of = [None; BOARD_SIZE];
        for (gid, g) in groups.iter().enumerate() {
            for &s in &g.squares {
                group_of[s as usize] = Some(gid as u8);
            }
        }
        let mut decks: [Vec<u8>; 2] = [Vec::new(), Vec::new()];
        for (i, card) in file.cards.iter().enumerate() {
            if let CardEffect::AdvanceTo { square } = card.effect {
                if square as usize >= BOARD_SIZE {
                    return Err(BoardError::Card {
                        name: card.name.clone(),
                        reason: "target square out of range".into(),
                    });
                }
            }
            decks[card.deck.index()].push(i as u8);
        }
        Ok(Board {
            version: file.version,
            squares: file.squares,
            cards: file.cards,
            groups,
            group_of,
            railroads,
            utilities,
            decks,
        })
    }

    pub fn square(&self, index: u8) -> &Square {
        &self.squares[index as usize]
    }

    pub fn group_of(&self, index: u8) -> Option<u8> {
        self.group_of[index as usize]
    }

    pub fn group(&self, gid: u8) -> &ColorGroup {
        &self.groups[gid as usize]
    }

    pub fn group_by_name(&self, name: &str) -> Option<u8> {
        self.groups.iter().position(|g| g.name == name).map(|i| i as u8)
    }

    pub fn railroads(&self) -> &[u8] {
        &self.railroads
    }

    pub fn utilities(&self) -> &[u8] {
        &self.utilities
    }

    /// Card ids (indices into `cards`) of one deck in printed order.
    pub fn deck(&self, deck: DeckKind) -> &[u8] {
        &self.decks[deck.index()]
    }

    pub fn card(&self, id: u8) -> &Card {
        &self.cards[id as usize]
    }

    pub fn purchasable(&self) -> impl Iterator<Item = &Square> {
        self.squares.iter().filter(|s| s.kind.is_purchasable())
    }

    pub fn find(&self, name: &str) -> Option<u8> {
        self.squares.iter().find(|s| s.name == name).map(|s| s.index)
    }

    /// First square of `kind` strictly ahead of `from`, wrapping around.
    pub fn nearest(&self, from: u8, target: NearestTarget) -> u8 {
        let set = match target {
            NearestTarget::Railroad => &self.railroads,
            NearestTarget::Utility => &self.utilities,
        };
        (1..=BOARD_SIZE as u8)
            .map(|d| (from + d) % BOARD_SIZE as u8)
            .find(|s| set.contains(s))
            .expect("board has at least one square of the target kind")
    }
}
