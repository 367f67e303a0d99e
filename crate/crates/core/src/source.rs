//! Transmitted symbol frames: random Gaussian payload with block-leading
//! pilots, plus CSV import/export for externally produced frames.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};

/// Default sentence length in words.
pub const WORDS_PER_SENTENCE: usize = 30;
/// Default number of channel symbols per word.
pub const SYMBOLS_PER_WORD: usize = 8;

pub const FRAME_CSV_HEADER: &str = "frame,k,re,im,pilot";

/// Symbols for one user together with the pilot layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    pub symbols: Vec<Complex64>,
    pub pilot_mask: Vec<bool>,
    /// Average energy per payload symbol.
    pub es: f64,
}

impl SymbolFrame {
    /// Builds a frame, computing `es` from the payload positions (all
    /// positions when there is no payload).
    pub fn new(symbols: Vec<Complex64>, pilot_mask: Vec<bool>) -> Result<Self> {
        if symbols.len() != pilot_mask.len() {
            return Err(Error::shape(format!(
                "{} symbols but {} pilot flags",
                symbols.len(),
                pilot_mask.len()
            )));
        }
        let es = payload_energy(&symbols, &pilot_mask);
        Ok(Self {
            symbols,
            pilot_mask,
            es,
        })
    }

    /// Frame without pilots.
    pub fn from_symbols(symbols: Vec<Complex64>) -> Self {
        let mask = vec![false; symbols.len()];
        Self::new(symbols, mask).expect("lengths match")
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn payload_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.pilot_mask
            .iter()
            .enumerate()
            .filter(|(_, &p)| !p)
            .map(|(k, _)| k)
    }

    pub fn pilot_count(&self) -> usize {
        self.pilot_mask.iter().filter(|&&p| p).count()
    }

    /// Same layout with every symbol set to zero.
    pub fn zeroed(&self) -> Self {
        Self {
            symbols: vec![Complex64::default(); self.len()],
            pilot_mask: self.pilot_mask.clone(),
            es: 0.0,
        }
    }
}

fn payload_energy(symbols: &[Complex64], mask: &[bool]) -> f64 {
    let (sum, n) = symbols
        .iter()
        .zip(mask)
        .filter(|(_, &p)| !p)
        .fold((0.0, 0usize), |(s, n), (x, _)| (s + x.norm_sqr(), n + 1));
    if n > 0 {
        sum / n as f64
    } else if symbols.is_empty() {
        0.0
    } else {
        symbols.iter().map(|x| x.norm_sqr()).sum::<f64>() / symbols.len() as f64
    }
}

/// Pilot layout and values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotConfig {
    pub pilot_fraction: f64,
    /// Symbols per fading block.
    pub coherence_symbols: usize,
    /// Seed for the fixed pilot phases shared by transmitter and receiver.
    pub pilot_seed: u64,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self {
            pilot_fraction: 0.25,
            coherence_symbols: 16,
            pilot_seed: 0x5EED_0F91_1075,
        }
    }
}

impl PilotConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.pilot_fraction) {
            return Err(Error::param(format!(
                "pilot fraction must lie in [0, 1), got {}",
                self.pilot_fraction
            )));
        }
        if self.coherence_symbols == 0 {
            return Err(Error::param("coherence must be at least one symbol"));
        }
        Ok(())
    }

    /// Checks that every coherence block gets at least one pilot.
    pub fn validate_for_estimation(&self) -> Result<()> {
        self.validate()?;
        if self.pilots_per_block() == 0 {
            return Err(Error::config(format!(
                "pilot fraction {} leaves coherence blocks of {} symbols without a pilot",
                self.pilot_fraction, self.coherence_symbols
            )));
        }
        Ok(())
    }

    /// `ceil(pilot_fraction * coherence_symbols)`.
    pub fn pilots_per_block(&self) -> usize {
        // 0.25 * 16 must give exactly 4, not 5 after rounding noise.
        let raw = self.pilot_fraction * self.coherence_symbols as f64;
        ((raw - 1e-9).ceil().max(0.0) as usize).min(self.coherence_symbols)
    }

    /// The first `pilots_per_block` positions of each block are pilots.
    pub fn pilot_mask(&self, k: usize) -> Vec<bool> {
        let per_block = self.pilots_per_block();
        (0..k)
            .map(|i| i % self.coherence_symbols < per_block)
            .collect()
    }

    /// Known pilot value for position `k`: a unit-magnitude QPSK point whose
    /// quadrant depends only on `(pilot_seed, k)`.
    pub fn pilot_symbol(&self, k: usize) -> Complex64 {
        let q = derive_seed(self.pilot_seed, &[stream::PILOTS, k as u64]) & 3;
        let phase = std::f64::consts::FRAC_PI_4 + q as f64 * std::f64::consts::FRAC_PI_2;
        Complex64::from_polar(1.0, phase)
    }
}

/// Circular complex Gaussian sample with `E|z|^2 = var`.
pub(crate) fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Unit-power Gaussian payload with the configured pilots.
pub fn random_frame<R: Rng + ?Sized>(
    k: usize,
    pilots: &PilotConfig,
    rng: &mut R,
) -> Result<SymbolFrame> {
    if k == 0 {
        return Err(Error::param("frame must hold at least one symbol"));
    }
    pilots.validate()?;
    let mask = pilots.pilot_mask(k);
    let symbols = mask
        .iter()
        .enumerate()
        .map(|(i, &is_pilot)| {
            if is_pilot {
                pilots.pilot_symbol(i)
            } else {
                complex_gaussian(rng, 1.0)
            }
        })
        .collect();
    SymbolFrame::new(symbols, mask)
}

/// Default frame length: 30 words of 8 symbols.
pub fn frame_length_for_sentence() -> usize {
    frame_length(WORDS_PER_SENTENCE, SYMBOLS_PER_WORD)
}

pub fn frame_length(words: usize, symbols_per_word: usize) -> usize {
    words * symbols_per_word
}

/// Parses frames from the `frame,k,re,im,pilot` CSV layout. Lines starting
/// with `#` and blank lines are skipped.
pub fn parse_frames(text: &str) -> Result<Vec<SymbolFrame>> {
    let mut frames: Vec<(Vec<Complex64>, Vec<bool>)> = Vec::new();
    let mut saw_header = false;
    let mut width: Option<usize> = None;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fail = |msg: String| Error::Format { line: line_no, msg };
        if !saw_header && line.starts_with("frame") {
            if line != FRAME_CSV_HEADER {
                return Err(fail(format!("expected header `{FRAME_CSV_HEADER}`")));
            }
            saw_header = true;
            continue;
        }
        saw_header = true;

        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(fail(format!("expected 5 fields, found {}", fields.len())));
        }
        let frame: usize = fields[0]
            .parse()
            .map_err(|_| fail(format!("bad frame index `{}`", fields[0])))?;
        let k: usize = fields[1]
            .parse()
            .map_err(|_| fail(format!("bad symbol index `{}`", fields[1])))?;
        let re: f64 = fields[2]
            .parse()
            .map_err(|_| fail(format!("bad real part `{}`", fields[2])))?;
        let im: f64 = fields[3]
            .parse()
            .map_err(|_| fail(format!("bad imaginary part `{}`", fields[3])))?;
        if !re.is_finite() || !im.is_finite() {
            return Err(fail("non-finite symbol value".into()));
        }
        let pilot = match fields[4] {
            "0" => false,
            "1" => true,
            other => return Err(fail(format!("pilot flag must be 0 or 1, got `{other}`"))),
        };

        if frame == frames.len() {
            if let Some(prev) = frames.last() {
                check_width(&mut width, prev.0.len()).map_err(fail)?;
            }
            frames.push((Vec::new(), Vec::new()));
        } else if frame + 1 != frames.len() {
            return Err(fail(format!(
                "frame index {frame} out of sequence (expected {} or {})",
                frames.len().saturating_sub(1),
                frames.len()
            )));
        }
        let current = frames.last_mut().expect("pushed above");
        if k != current.0.len() {
            return Err(fail(format!(
                "symbol index {k} out of sequence (expected {})",
                current.0.len()
            )));
        }
        if pilot && ((re * re + im * im).sqrt() - 1.0).abs() > 1e-6 {
            return Err(fail("pilot symbols must have unit magnitude".into()));
        }
        current.0.push(Complex64::new(re, im));
        current.1.push(pilot);
    }
    if let Some(last) = frames.last() {
        check_width(&mut width, last.0.len()).map_err(|msg| Error::Format {
            line: text.lines().count(),
            msg,
        })?;
    }

    frames
        .into_iter()
        .map(|(s, m)| SymbolFrame::new(s, m))
        .collect()
}

fn check_width(width: &mut Option<usize>, len: usize) -> std::result::Result<(), String> {
    match *width {
        None => {
            *width = Some(len);
            Ok(())
        }
        Some(w) if w == len => Ok(()),
        Some(w) => Err(format!(
            "inconsistent frame length: {len} symbols, expected {w}"
        )),
    }
}

pub fn load_frames(path: &Path) -> Result<Vec<SymbolFrame>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_frames(&text)
}

/// Serializes frames; values use the shortest decimal form that parses back
/// to the identical `f64`.
pub fn format_frames(frames: &[SymbolFrame]) -> String {
    let mut out = String::from(FRAME_CSV_HEADER);
    out.push('\n');
    for (f, frame) in frames.iter().enumerate() {
        for (k, (x, &p)) in frame.symbols.iter().zip(&frame.pilot_mask).enumerate() {
            let _ = writeln!(out, "{f},{k},{},{},{}", x.re, x.im, u8::from(p));
        }
    }
    out
}

pub fn save_frames(path: &Path, frames: &[SymbolFrame]) -> Result<()> {
    std::fs::write(path, format_frames(frames)).map_err(|e| Error::io(path, e))
}
