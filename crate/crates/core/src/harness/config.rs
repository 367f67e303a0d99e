use std::fmt::Write as _;
use std::path::PathBuf;

use crate::channel::{PowerTerm, DEFAULT_GM_POWERS, DEFAULT_GM_WEIGHTS};
use crate::error::{Error, Result};
use crate::link::FadingKind;
use crate::source::{frame_length_for_sentence, PilotConfig};
use crate::srn::{TrainSettings, DEFAULT_INPUT_CLIP};

#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    Random,
    File(PathBuf),
}

/// Refiner shape and training schedule for a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrnSettings {
    pub d_model: usize,
    pub n_heads: usize,
    pub ff_width: usize,
    pub input_clip: Option<f64>,
    pub train: TrainSettings,
    /// Examples per forward call during evaluation.
    pub eval_chunk: usize,
}

impl Default for SrnSettings {
    fn default() -> Self {
        Self {
            d_model: 256,
            n_heads: 4,
            ff_width: 256,
            input_clip: Some(DEFAULT_INPUT_CLIP),
            train: TrainSettings::default(),
            eval_chunk: 16,
        }
    }
}

/// Everything needed to run one simulation point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Number of users.
    pub m: usize,
    pub sf: usize,
    pub density: f64,
    pub es_n0_db: f64,
    /// Monte-Carlo evaluation transmissions.
    pub frames: usize,
    /// Symbols per frame.
    pub k: usize,
    pub coherence: usize,
    pub pilot_fraction: f64,
    pub gm_weights: Vec<f64>,
    pub gm_powers: Vec<PowerTerm>,
    /// Disables chip noise entirely.
    pub noiseless: bool,
    pub fading: FadingKind,
    /// Use the disjoint-support orthogonal construction when `m > 1`.
    pub orthogonal: bool,
    pub seed: u64,
    pub srn: Option<SrnSettings>,
    pub symbol_source: SourceSpec,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            m: 1,
            sf: 4,
            density: 1.0,
            es_n0_db: 15.0,
            frames: 2000,
            k: frame_length_for_sentence(),
            coherence: 16,
            pilot_fraction: 0.25,
            gm_weights: DEFAULT_GM_WEIGHTS.to_vec(),
            gm_powers: DEFAULT_GM_POWERS.to_vec(),
            noiseless: false,
            fading: FadingKind::Rayleigh,
            orthogonal: true,
            seed: 1,
            srn: Some(SrnSettings::default()),
            symbol_source: SourceSpec::Random,
        }
    }
}

impl ScenarioConfig {
    pub fn pilots(&self) -> PilotConfig {
        PilotConfig {
            pilot_fraction: self.pilot_fraction,
            coherence_symbols: self.coherence,
            ..PilotConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::config("need at least one user"));
        }
        if self.sf == 0 {
            return Err(Error::config("spread factor must be at least 1"));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::config(format!(
                "density must lie in (0, 1], got {}",
                self.density
            )));
        }
        if !self.es_n0_db.is_finite() {
            return Err(Error::config("Es/N0 must be finite"));
        }
        if self.frames == 0 || self.k == 0 || self.coherence == 0 {
            return Err(Error::config(
                "frames, symbols and coherence must be positive",
            ));
        }
        self.pilots().validate_for_estimation()?;
        if self.m > 1 && self.orthogonal && self.m > self.sf {
            return Err(Error::config(format!(
                "{} orthogonal users do not fit in spread factor {}",
                self.m, self.sf
            )));
        }
        if self.gm_weights.len() != self.gm_powers.len() || self.gm_weights.is_empty() {
            return Err(Error::config(
                "mixture weights and powers must be non-empty and equal in length",
            ));
        }
        if let Some(s) = &self.srn {
            s.train.validate()?;
            if s.d_model == 0
                || s.n_heads == 0
                || s.d_model % s.n_heads != 0
                || s.ff_width == 0
                || s.eval_chunk == 0
            {
                return Err(Error::config(
                    "refiner widths must be positive with d_model divisible by heads",
                ));
            }
        }
        Ok(())
    }

    /// Resolved configuration as `# key = value` lines.
    pub fn metadata(&self) -> String {
        let mut out = String::new();
        let list = |v: &[String]| format!("[{}]", v.join(", "));
        let _ = writeln!(out, "# users = {}", self.m);
        let _ = writeln!(out, "# sf = {}", self.sf);
        let _ = writeln!(out, "# density = {}", self.density);
        let _ = writeln!(out, "# es_n0_db = {}", self.es_n0_db);
        let _ = writeln!(out, "# frames = {}", self.frames);
        let _ = writeln!(out, "# symbols = {}", self.k);
        let _ = writeln!(out, "# coherence = {}", self.coherence);
        let _ = writeln!(out, "# pilot_fraction = {}", self.pilot_fraction);
        let _ = writeln!(
            out,
            "# gm_weights = {}",
            list(
                &self
                    .gm_weights
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
            )
        );
        let _ = writeln!(
            out,
            "# gm_powers = {}",
            list(
                &self
                    .gm_powers
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
            )
        );
        let _ = writeln!(out, "# gm_means = zero");
        let _ = writeln!(out, "# noiseless = {}", self.noiseless);
        let _ = writeln!(
            out,
            "# fading = {}",
            match self.fading {
                FadingKind::Rayleigh => "rayleigh",
                FadingKind::Identity => "identity",
            }
        );
        let _ = writeln!(out, "# orthogonal = {}", self.orthogonal);
        let _ = writeln!(out, "# seed = {}", self.seed);
        match &self.symbol_source {
            SourceSpec::Random => {
                let _ = writeln!(out, "# symbol_source = random");
            }
            SourceSpec::File(p) => {
                let _ = writeln!(out, "# symbol_source = {}", p.display());
            }
        }
        match &self.srn {
            None => {
                let _ = writeln!(out, "# srn = off");
            }
            Some(s) => {
                let _ = writeln!(out, "# srn = on");
                let _ = writeln!(out, "# srn.d_model = {}", s.d_model);
                let _ = writeln!(out, "# srn.heads = {}", s.n_heads);
                let _ = writeln!(out, "# srn.ff_width = {}", s.ff_width);
                let clip = s.input_clip.map_or("off".to_string(), |c| c.to_string());
                let _ = writeln!(out, "# srn.input_clip = {clip}");
                let _ = writeln!(out, "# srn.epochs = {}", s.train.epochs);
                let _ = writeln!(out, "# srn.lr = {}", s.train.lr);
                let _ = writeln!(out, "# srn.frames_per_epoch = {}", s.train.frames_per_epoch);
                let _ = writeln!(out, "# srn.batch_size = {}", s.train.batch_size);
                let _ = writeln!(out, "# srn.holdout_frames = {}", s.train.holdout_frames);
            }
        }
        out
    }
}
