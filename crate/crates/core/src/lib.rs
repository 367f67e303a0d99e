//! Multi-user sequence-spread link simulation under Rayleigh block fading and
//! Gaussian-mixture interference, with an attention-based signal refining
//! network that reuses the residual interference left after despreading and
//! zero-forcing.
//!
//! The modules follow the signal path:
//!
//! - [`codes`]: ternary spreading codes, spreading and despreading
//! - [`source`]: transmitted symbol frames and pilots
//! - [`channel`]: block fading, mixture noise, multi-user superposition
//! - [`receiver`]: LS channel estimation, ZF equalization, residuals
//! - [`srn`]: the refining network, its gradients and training
//! - [`harness`]: scenarios, sweeps and CSV output

pub mod channel;
pub mod codes;
pub mod error;
pub mod harness;
pub mod link;
pub mod receiver;
pub mod rng;
pub mod source;
pub mod srn;

use std::ops::{Deref, DerefMut};

use num_complex::Complex64;

pub use channel::{ChannelRealization, GmNoiseModel, PowerTerm};
pub use codes::{CodeSet, SpreadingCode};
pub use error::{Error, Result};
pub use harness::{ResultRow, ScenarioConfig, SweepAxis};
pub use link::{FadingKind, Link, Observation, SymbolSource};
pub use receiver::EqualizedFrame;
pub use source::{PilotConfig, SymbolFrame};
pub use srn::{SrnBatch, SrnConfig, SrnModel, TrainSettings};

/// `K·SF` complex chip samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChipFrame(pub Vec<Complex64>);

impl Deref for ChipFrame {
    type Target = [Complex64];

    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

impl DerefMut for ChipFrame {
    fn deref_mut(&mut self) -> &mut [Complex64] {
        &mut self.0
    }
}

impl From<Vec<Complex64>> for ChipFrame {
    fn from(v: Vec<Complex64>) -> Self {
        ChipFrame(v)
    }
}
