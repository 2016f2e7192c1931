use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::STACKED_DIM;
use crate::wordpiece::{EOS, SOS};

/// Network shape for the listener, attender and speller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub enc_layers: usize,
    /// Hidden units per direction.
    pub enc_units: usize,
    pub bidirectional: bool,
    pub dec_layers: usize,
    pub dec_units: usize,
    pub attention_heads: usize,
    /// Per-head projection size for the additive energy.
    pub attention_dim: usize,
    /// Size of the projected attention context fed to the decoder.
    pub context_dim: usize,
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub sos_id: usize,
    pub eos_id: usize,
    /// Half-width of the uniform weight initializer.
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Desk-scale default: 3×64 unidirectional encoder, 1×64 decoder, 2 heads.
    pub fn desk() -> Self {
        ModelConfig {
            input_dim: STACKED_DIM,
            enc_layers: 3,
            enc_units: 64,
            bidirectional: false,
            dec_layers: 1,
            dec_units: 64,
            attention_heads: 2,
            attention_dim: 32,
            context_dim: 64,
            vocab_size: 60,
            embedding_dim: 32,
            sos_id: SOS,
            eos_id: EOS,
            init_scale: 0.05,
        }
    }

    /// Tiny network for finite-difference checks: 2×8 encoder, 1×8 decoder, V = 6.
    pub fn micro() -> Self {
        ModelConfig {
            input_dim: 5,
            enc_layers: 2,
            enc_units: 8,
            bidirectional: false,
            dec_layers: 1,
            dec_units: 8,
            attention_heads: 2,
            attention_dim: 4,
            context_dim: 8,
            vocab_size: 6,
            embedding_dim: 4,
            sos_id: 0,
            eos_id: 1,
            init_scale: 0.5,
        }
    }

    /// Published unidirectional system: 5×1400 LSTM encoder, 4-head additive
    /// attention, 2×1024 LSTM decoder. Documentation preset; far too large to
    /// train here.
    pub fn paper_unidirectional(vocab_size: usize) -> Self {
        ModelConfig {
            input_dim: STACKED_DIM,
            enc_layers: 5,
            enc_units: 1400,
            bidirectional: false,
            dec_layers: 2,
            dec_units: 1024,
            attention_heads: 4,
            attention_dim: 512,
            context_dim: 1024,
            vocab_size,
            embedding_dim: 512,
            sos_id: SOS,
            eos_id: EOS,
            init_scale: 0.05,
        }
    }

    /// Published bidirectional variant: 1024 units per direction (2048 per layer).
    pub fn paper_bidirectional(vocab_size: usize) -> Self {
        ModelConfig { enc_units: 1024, bidirectional: true, ..Self::paper_unidirectional(vocab_size) }
    }

    /// Width of the encoder output (`2 × enc_units` when bidirectional).
    pub fn enc_output_dim(&self) -> usize {
        if self.bidirectional {
            2 * self.enc_units
        } else {
            self.enc_units
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_dim", self.input_dim),
            ("enc_layers", self.enc_layers),
            ("enc_units", self.enc_units),
            ("dec_layers", self.dec_layers),
            ("dec_units", self.dec_units),
            ("attention_heads", self.attention_heads),
            ("attention_dim", self.attention_dim),
            ("context_dim", self.context_dim),
            ("vocab_size", self.vocab_size),
            ("embedding_dim", self.embedding_dim),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.sos_id >= self.vocab_size || self.eos_id >= self.vocab_size {
            return Err(Error::Config("sos/eos ids must be inside the vocabulary".into()));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::Config("init_scale must be finite and non-negative".into()));
        }
        Ok(())
    }
}
