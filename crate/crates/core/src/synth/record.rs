//! JSONL recording and replay of frame streams and labels.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use thiserror::Error;

use super::Label;
use crate::model::HandFrame;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn write_lines<T: serde::Serialize>(items: &[T], mut out: impl Write) -> Result<(), RecordError> {
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn read_lines<T: DeserializeOwned>(input: impl BufRead) -> Result<Vec<T>, RecordError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| RecordError::Parse { line: i + 1, message: e.to_string() })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_frames(frames: &[HandFrame], out: impl Write) -> Result<(), RecordError> {
    write_lines(frames, out)
}

/// Parses a frame stream. Blank lines are skipped; frames are not validated.
pub fn read_frames(input: impl BufRead) -> Result<Vec<HandFrame>, RecordError> {
    read_lines(input)
}

pub fn write_labels(labels: &[Label], out: impl Write) -> Result<(), RecordError> {
    write_lines(labels, out)
}

pub fn read_labels(input: impl BufRead) -> Result<Vec<Label>, RecordError> {
    read_lines(input)
}

pub fn record(frames: &[HandFrame], path: impl AsRef<Path>) -> Result<(), RecordError> {
    write_frames(frames, BufWriter::new(File::create(path)?))
}

pub fn replay(path: impl AsRef<Path>) -> Result<Vec<HandFrame>, RecordError> {
    read_frames(BufReader::new(File::open(path)?))
}
