//! End-to-end link: symbol source → spreading → channel → receiver, for all
//! users of one scenario. Produces the per-user observations the refiner is
//! trained and evaluated on.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{sample_fading, transmit, ChannelRealization, GmNoiseModel};
use crate::codes::CodeSet;
use crate::error::{Error, Result};
use crate::receiver::{equalize, residual_interference, EqualizedFrame};
use crate::source::{random_frame, PilotConfig, SymbolFrame};
use crate::srn::SrnBatch;
use crate::ChipFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FadingKind {
    /// Unit-power Rayleigh block fading.
    #[default]
    Rayleigh,
    /// `h ≡ 1`.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SymbolSource {
    Random,
    /// Pre-loaded frames, used cyclically.
    Frames(Arc<Vec<SymbolFrame>>),
}

/// What one receiver sees for one transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub user: usize,
    pub tx: SymbolFrame,
    pub channel: ChannelRealization,
    pub received: ChipFrame,
    pub eq: EqualizedFrame,
    pub residual: ChipFrame,
}

/// Fixed parameters of a multi-user link.
#[derive(Debug, Clone)]
pub struct Link {
    pub k: usize,
    pub codes: CodeSet,
    pub pilots: PilotConfig,
    pub noise: Option<GmNoiseModel>,
    pub fading: FadingKind,
    pub source: SymbolSource,
}

impl Link {
    pub fn users(&self) -> usize {
        self.codes.len()
    }

    pub fn sf(&self) -> usize {
        self.codes.sf()
    }

    pub fn validate(&self) -> Result<()> {
        if self.codes.is_empty() {
            return Err(Error::config("link needs at least one user"));
        }
        self.pilots.validate_for_estimation()?;
        if let Some(n) = &self.noise {
            n.validate()?;
        }
        if let SymbolSource::Frames(frames) = &self.source {
            if frames.is_empty() {
                return Err(Error::config("symbol file holds no frames"));
            }
            if let Some(f) = frames.iter().find(|f| f.len() != self.k) {
                return Err(Error::config(format!(
                    "symbol file frame has {} symbols, scenario expects {}",
                    f.len(),
                    self.k
                )));
            }
            for (i, f) in frames.iter().enumerate() {
                for (b, start) in (0..self.k)
                    .step_by(self.pilots.coherence_symbols)
                    .enumerate()
                {
                    let end = (start + self.pilots.coherence_symbols).min(self.k);
                    if !f.pilot_mask[start..end].iter().any(|&p| p) {
                        return Err(Error::config(format!(
                            "symbol file frame {i}: coherence block {b} has no pilot"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// The frames sent in transmission `index`.
    fn frames<R: Rng + ?Sized>(&self, index: u64, rng: &mut R) -> Result<Vec<SymbolFrame>> {
        let m = self.users();
        match &self.source {
            SymbolSource::Random => (0..m)
                .map(|_| random_frame(self.k, &self.pilots, rng))
                .collect(),
            SymbolSource::Frames(frames) => Ok((0..m)
                .map(|u| {
                    let i = (index as usize).wrapping_mul(m).wrapping_add(u) % frames.len();
                    frames[i].clone()
                })
                .collect()),
        }
    }

    /// Simulates one transmission and runs every user's receiver.
    ///
    /// Draw order from `rng`: payload symbols for each user, fading for each
    /// receiver, then chip noise receiver by receiver.
    pub fn simulate<R: Rng + ?Sized>(&self, index: u64, rng: &mut R) -> Result<Vec<Observation>> {
        let frames = self.frames(index, rng)?;
        let coherence = self.pilots.coherence_symbols;
        let channels = (0..self.users())
            .map(|_| match self.fading {
                FadingKind::Rayleigh => sample_fading(self.k, coherence, rng),
                FadingKind::Identity => Ok(ChannelRealization::identity(self.k, coherence)),
            })
            .collect::<Result<Vec<_>>>()?;
        let received = transmit(&frames, &self.codes, &channels, self.noise.as_ref(), rng)?;

        frames
            .into_iter()
            .zip(channels)
            .zip(received)
            .enumerate()
            .map(|(user, ((tx, channel), r))| {
                let code = &self.codes.codes[user];
                let eq = equalize(&r, code, &tx, coherence)?;
                let residual = residual_interference(&r, &eq.r_eq, code)?;
                Ok(Observation {
                    user,
                    tx,
                    channel,
                    received: r,
                    eq,
                    residual,
                })
            })
            .collect()
    }
}

impl Observation {
    /// Squared error of the zero-forcing output over payload positions.
    pub fn baseline_error(&self) -> (f64, f64, usize) {
        payload_error(&self.eq.r_eq, &self.tx)
    }
}

/// `(Σ|x̂ − x|², Σ|x|², count)` over the payload positions of `tx`.
pub fn payload_error(estimate: &[Complex64], tx: &SymbolFrame) -> (f64, f64, usize) {
    estimate
        .iter()
        .zip(&tx.symbols)
        .zip(&tx.pilot_mask)
        .filter(|(_, &p)| !p)
        .fold((0.0, 0.0, 0), |(e, s, n), ((a, b), _)| {
            (e + (a - b).norm_sqr(), s + b.norm_sqr(), n + 1)
        })
}

/// Packs observations into a refiner batch.
pub fn batch_from_observations<'a>(obs: impl IntoIterator<Item = &'a Observation>) -> SrnBatch {
    let mut batch = SrnBatch::default();
    for o in obs {
        batch.push(
            o.eq.r_eq.clone(),
            o.residual.0.clone(),
            o.tx.symbols.clone(),
            o.tx.pilot_mask.clone(),
        );
    }
    batch
}
