//! Real-time music tracking engine: aligns a live audio stream against a
//! rehearsed recording with online dynamic time warping, schedules a
//! counterpart MIDI track against the tracked position, broadcasts the
//! position over UDP at a fixed cadence, and evaluates tracking latency
//! offline.

pub mod audio;
pub mod dtw;
pub mod error;
pub mod features;
pub mod odtw;
pub mod timemap;

pub use error::{Error, Result};
