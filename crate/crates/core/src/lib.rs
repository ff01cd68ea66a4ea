//! Core of a touchless cursor interface: hand-frame model, gesture
//! recognition, pointer stabilization, the command wire protocol, the
//! server-side processing pipeline, the client-side virtual cursor and a
//! synthetic hand-trajectory generator.

pub mod client;
pub mod fanout;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod protocol;
pub mod recognizer;
pub mod stabilizer;
pub mod synth;
