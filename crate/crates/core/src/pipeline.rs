//! Frame-to-command processing: validate, recognize, stabilize, map.

use serde::{Deserialize, Serialize};

use crate::model::{validate_frame, FrameError, HandFrame, InteractionBox};
use crate::protocol::Command;
use crate::recognizer::{GestureEvent, GestureKind, Mode, Recognizer, RecognizerConfig};
use crate::stabilizer::{map_to_screen, FilterParams, ScreenGeometry, Stabilizer, StabilizerError};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub interaction_box: InteractionBox,
    pub recognizer: RecognizerConfig,
    pub filter: FilterParams,
    pub screen: ScreenGeometry,
}

/// What a freshly connected client needs to converge on the current state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SyncStatus {
    pub holding: bool,
    pub position: Option<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Processed {
    pub ts_us: u64,
    pub events: Vec<GestureEvent>,
    pub commands: Vec<Command>,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
    prev_ts: Option<u64>,
    recognizer: Recognizer,
    stabilizer: Stabilizer,
    status: SyncStatus,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self, StabilizerError> {
        Ok(Self {
            cfg,
            prev_ts: None,
            recognizer: Recognizer::new(cfg.recognizer, cfg.interaction_box),
            stabilizer: Stabilizer::new(cfg.filter)?,
            status: SyncStatus::default(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn status(&self) -> SyncStatus {
        self.status
    }

    pub fn mode(&self) -> Mode {
        self.recognizer.mode()
    }

    /// Runs one frame through the pipeline. Rejected frames leave every
    /// piece of state untouched.
    ///
    /// Cursor moves go through the stabilizer and are only emitted when the
    /// pixel position changes; every other event becomes exactly one command.
    pub fn process(&mut self, raw: HandFrame) -> Result<Processed, FrameError> {
        let frame = validate_frame(raw, self.prev_ts)?;
        self.prev_ts = Some(frame.ts_us);
        let ts_us = frame.ts_us;

        let events = self.recognizer.update(&frame);
        if self.recognizer.mode() == Mode::Idle {
            self.stabilizer.reset();
        }

        let screen = self.cfg.screen;
        let mut commands = Vec::with_capacity(events.len());
        for ev in &events {
            match ev.kind {
                GestureKind::CursorMove { pos } => {
                    let gated = self.stabilizer.update(pos, ts_us).unwrap_or(pos);
                    let (x, y) = map_to_screen(gated, screen);
                    if self.status.position != Some((x, y)) {
                        self.status.position = Some((x, y));
                        commands.push(Command::Move { x, y });
                    }
                }
                GestureKind::Click { pos } => {
                    let (x, y) = map_to_screen(pos, screen);
                    commands.push(Command::Click { x, y });
                }
                GestureKind::HoldStart => {
                    self.status.holding = true;
                    commands.push(Command::Hold);
                }
                GestureKind::HoldEnd => {
                    self.status.holding = false;
                    commands.push(Command::Release);
                }
                GestureKind::Scroll { direction, notches } => {
                    commands.push(Command::Scroll { dir: direction, n: notches });
                }
            }
        }
        Ok(Processed { ts_us, events, commands })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Vec3;

    const POINT: [bool; 5] = [false, true, false, false, false];

    #[test]
    fn stationary_hand_sends_a_single_move() {
        let mut p = Pipeline::new(PipelineConfig::default()).unwrap();
        let tip = Vec3::new(0.0, 404.8, 0.0);
        let mut moves = 0;
        for k in 0..120 {
            let out = p.process(HandFrame::from_tip(k * 8333, tip, POINT)).unwrap();
            moves += out.commands.iter().filter(|c| c.is_move()).count();
        }
        assert_eq!(moves, 1);
        assert_eq!(p.status().position, Some((960, 540)));
    }

    #[test]
    fn rejected_frame_does_not_advance_state() {
        let mut p = Pipeline::new(PipelineConfig::default()).unwrap();
        let tip = Vec3::new(0.0, 404.8, 0.0);
        p.process(HandFrame::from_tip(1000, tip, POINT)).unwrap();
        assert!(p.process(HandFrame::from_tip(1000, tip, POINT)).is_err());
        assert!(p.process(HandFrame::from_tip(1001, tip, POINT)).is_ok());
    }

    #[test]
    fn hold_status_tracks_commands() {
        let mut p = Pipeline::new(PipelineConfig::default()).unwrap();
        let tip = Vec3::new(0.0, 404.8, 0.0);
        let mut cmds = Vec::new();
        for k in 0..30 {
            cmds.extend(p.process(HandFrame::from_tip(k * 8333, tip, [true; 5])).unwrap().commands);
        }
        assert!(cmds.contains(&Command::Hold));
        assert!(p.status().holding);
    }
}
