//! Bundled trajectory scripts used as the recognizer's reference corpus.
//!
//! File names carry the category as a prefix: `tap_`, `circle_`, `drag_`,
//! `jitter_` and `nearmiss_`.

use super::{SynthError, TrajectoryScript};

include!(concat!(env!("OUT_DIR"), "/corpus_entries.rs"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    Tap,
    Circle,
    Drag,
    Jitter,
    NearMiss,
}

#[derive(Debug, Clone, Copy)]
pub struct CorpusScript {
    pub name: &'static str,
    pub source: &'static str,
}

impl CorpusScript {
    pub fn category(&self) -> Option<Category> {
        let prefix = self.name.split('_').next()?;
        Some(match prefix {
            "tap" => Category::Tap,
            "circle" => Category::Circle,
            "drag" => Category::Drag,
            "jitter" => Category::Jitter,
            "nearmiss" => Category::NearMiss,
            _ => return None,
        })
    }

    pub fn script(&self) -> Result<TrajectoryScript, SynthError> {
        TrajectoryScript::from_json(self.source)
    }

    /// Seed used when generating this entry for the corpus checks.
    pub fn seed(&self) -> u64 {
        self.name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
    }
}

pub fn scripts() -> impl Iterator<Item = CorpusScript> {
    ENTRIES.iter().map(|&(name, source)| CorpusScript { name, source })
}

pub fn get(name: &str) -> Option<CorpusScript> {
    scripts().find(|s| s.name == name)
}
