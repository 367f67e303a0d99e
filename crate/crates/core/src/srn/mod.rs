//! Signal refining network.
//!
//! For every symbol position the refiner sees the equalized despread symbol
//! and that symbol's `SF` residual-interference chips, projects them into a
//! `d_model`-wide embedding with a learned positional table, mixes positions
//! with one multi-head self-attention layer and one tanh feed-forward block
//! (both with residual connections), and reads out a complex estimate through
//! a linear head. Complex values are carried as separate real and imaginary
//! channels. Gradients are derived by hand and trained with Adam on the
//! symbol MSE.

mod adam;
mod checkpoint;
mod model;
mod params;
mod train;

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use model::{masked_mse_loss, mse_loss, ForwardCache, SrnModel};
pub use params::{Params, TENSOR_COUNT, TENSOR_NAMES};
pub use train::{moving_average_non_increasing, train, TrainReport, TrainSettings};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Shape hyper-parameters of the refiner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrnConfig {
    /// Spread factor; fixes the residual feature width.
    pub sf: usize,
    /// Symbols per frame; fixes the positional table.
    pub seq_len: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub ff_width: usize,
    pub seed: u64,
    /// Soft saturation `c·tanh(f/c)` applied to every input feature;
    /// `None` feeds raw features.
    pub input_clip: Option<f64>,
}

impl SrnConfig {
    pub fn new(sf: usize, seq_len: usize) -> Self {
        Self {
            sf,
            seq_len,
            ..Self::default()
        }
    }

    /// `2 + 2·SF` reals per position.
    pub fn feature_width(&self) -> usize {
        2 + 2 * self.sf
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.sf == 0
            || self.seq_len == 0
            || self.d_model == 0
            || self.n_heads == 0
            || self.ff_width == 0
        {
            return Err(Error::param("refiner dimensions must all be at least 1"));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::param(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.n_heads
            )));
        }
        if let Some(c) = self.input_clip {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::param(format!(
                    "input clip must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for SrnConfig {
    fn default() -> Self {
        Self {
            sf: 4,
            seq_len: crate::source::frame_length_for_sentence(),
            d_model: 256,
            n_heads: 4,
            ff_width: 256,
            seed: 0,
            input_clip: Some(DEFAULT_INPUT_CLIP),
        }
    }
}

/// Default feature saturation level.
pub const DEFAULT_INPUT_CLIP: f64 = 4.0;

/// One training or evaluation example per row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SrnBatch {
    /// `batch × K` equalized symbols.
    pub r_eq: Vec<Vec<Complex64>>,
    /// `batch × (K·SF)` residual chips.
    pub residual: Vec<Vec<Complex64>>,
    /// `batch × K` transmitted symbols.
    pub target: Vec<Vec<Complex64>>,
    /// `batch × K`; `true` marks pilot positions, excluded from the loss.
    pub pilot_mask: Vec<Vec<bool>>,
}

impl SrnBatch {
    pub fn len(&self) -> usize {
        self.r_eq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_eq.is_empty()
    }

    pub fn push(
        &mut self,
        r_eq: Vec<Complex64>,
        residual: Vec<Complex64>,
        target: Vec<Complex64>,
        pilot_mask: Vec<bool>,
    ) {
        self.r_eq.push(r_eq);
        self.residual.push(residual);
        self.target.push(target);
        self.pilot_mask.push(pilot_mask);
    }

    /// Concatenates two batches.
    pub fn extend(&mut self, other: SrnBatch) {
        self.r_eq.extend(other.r_eq);
        self.residual.extend(other.residual);
        self.target.extend(other.target);
        self.pilot_mask.extend(other.pilot_mask);
    }

    /// Checks dimensions against `cfg`.
    pub fn validate(&self, cfg: &SrnConfig) -> Result<()> {
        let b = self.r_eq.len();
        if self.residual.len() != b || self.target.len() != b || self.pilot_mask.len() != b {
            return Err(Error::shape("batch fields disagree on batch size"));
        }
        let k = cfg.seq_len;
        for i in 0..b {
            if self.r_eq[i].len() != k || self.target[i].len() != k || self.pilot_mask[i].len() != k
            {
                return Err(Error::shape(format!(
                    "example {i} has {} symbols, refiner expects {k}",
                    self.r_eq[i].len()
                )));
            }
            if self.residual[i].len() != k * cfg.sf {
                return Err(Error::shape(format!(
                    "example {i} has {} residual chips, expected {}",
                    self.residual[i].len(),
                    k * cfg.sf
                )));
            }
        }
        Ok(())
    }
}
