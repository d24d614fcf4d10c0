//! Data handling, training, evaluation and the language-model studies.

pub mod config;
pub mod eval;
pub mod manifest;
pub mod metrics;
pub mod studies;
pub mod synth;
pub mod train;
pub mod wav;

use crate::error::Result;
use crate::frontend::Waveform;
use manifest::Manifest;

/// An utterance held in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub text: String,
    pub wave: Waveform,
}

/// Reads every audio file a manifest lists.
pub fn load_utterances(manifest: &Manifest) -> Result<Vec<Utterance>> {
    manifest
        .entries
        .iter()
        .map(|e| {
            Ok(Utterance {
                id: e.id.clone(),
                text: e.text.clone(),
                wave: wav::read_wav(&e.audio)?,
            })
        })
        .collect()
}
