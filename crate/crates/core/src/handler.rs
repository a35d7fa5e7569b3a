//! The novelty handler: detection at every decision point, evidence
//! bookkeeping across the games of a tournament, and (when adaptive)
//! characterization and publication into the knowledge base.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::characterize::{characterize, foci, publish, CharacterizationResult, Evidence, Focus, Status};
use crate::detect::{detect, DetectionResult, NoveltyFlags};
use crate::engine::Observation;
use crate::kb::KnowledgeBase;
use crate::rules::RuleSet;
use crate::state::GameState;

/// One characterization attempt, as logged to traces.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterizationLog {
    pub game: u32,
    pub time_step: u64,
    pub result: CharacterizationResult,
    pub published: bool,
    pub kb_version: u64,
    pub micros: u64,
}

#[derive(Clone, Debug)]
pub struct NoveltyHandler {
    kb: KnowledgeBase,
    /// Characterize and publish; a non-adaptive handler only detects.
    pub adaptive: bool,
    evidence: Evidence,
    flags: NoveltyFlags,
    prev: Option<GameState>,
    game: u32,
    attempts: BTreeMap<Focus, u64>,
    log: Vec<CharacterizationLog>,
    detections: u64,
}

impl NoveltyHandler {
    pub fn new(kb: KnowledgeBase, adaptive: bool) -> NoveltyHandler {
        NoveltyHandler {
            kb,
            adaptive,
            evidence: Evidence::default(),
            flags: NoveltyFlags::default(),
            prev: None,
            game: 0,
            attempts: BTreeMap::new(),
            log: Vec::new(),
            detections: 0,
        }
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn flags(&self) -> &NoveltyFlags {
        &self.flags
    }

    pub fn evidence(&self) -> &Evidence {
        &self.evidence
    }

    /// Characterization attempts so far; drained by the caller when tracing.
    pub fn take_log(&mut self) -> Vec<CharacterizationLog> {
        std::mem::take(&mut self.log)
    }

    /// Decision points at which a discrepancy was seen.
    pub fn detections(&self) -> u64 {
        self.detections
    }

    /// Starts game `game` (1-based) from its initial public state.
    pub fn begin_game(&mut self, game: u32, initial: &GameState) {
        self.game = game;
        self.prev = Some(initial.public_view());
    }

    /// Processes one observation; returns the detection when something
    /// diverged from the knowledge base.
    pub fn observe(&mut self, obs: &Observation) -> Option<DetectionResult> {
        let prev = self.prev.take().unwrap_or_else(|| obs.snapshot.clone());
        let det = detect(&self.kb, &prev, obs);
        self.prev = Some(obs.snapshot.clone());
        if det.result.d {
            self.detections += 1;
            if !self.flags.detected() {
                // Evidence from earlier games may predate the change.
                self.evidence.forget_before(self.game);
            }
            self.flags.carry_forward(self.game, &det.result);
        }
        self.evidence.record(self.game, &det, obs, &RuleSet::classic());
        if !det.result.d {
            return None;
        }
        if self.adaptive {
            for focus in foci(&det.result, &obs.menu) {
                let stamp = self.evidence.stamp(&focus);
                if self.attempts.get(&focus) == Some(&stamp) {
                    continue;
                }
                self.attempts.insert(focus.clone(), stamp);
                let t0 = std::time::Instant::now();
                let result = characterize(&self.kb, &focus, &self.evidence);
                let mut published = false;
                if result.status == Status::Unique {
                    if let Ok(kb) = publish(&self.kb, std::slice::from_ref(&result)) {
                        self.kb = kb;
                        published = true;
                    }
                }
                self.log.push(CharacterizationLog {
                    game: self.game,
                    time_step: obs.snapshot.time_step,
                    result,
                    published,
                    kb_version: self.kb.version(),
                    micros: t0.elapsed().as_micros() as u64,
                });
            }
        }
        Some(det.result)
    }
}
