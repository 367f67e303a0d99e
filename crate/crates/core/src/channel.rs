//! Downlink channel: Rayleigh block fading per receiving user, superposition
//! of every user's spread frame, and Gaussian-mixture noise plus RFI.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::codes::CodeSet;
use crate::error::{Error, Result};
use crate::source::{complex_gaussian, SymbolFrame};
use crate::ChipFrame;

/// One fading coefficient per symbol, constant over each coherence block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub coefficients: Vec<Complex64>,
    pub coherence_symbols: usize,
}

impl ChannelRealization {
    /// `h ≡ gain` for `k` symbols.
    pub fn constant(k: usize, gain: Complex64, coherence_symbols: usize) -> Self {
        Self {
            coefficients: vec![gain; k],
            coherence_symbols: coherence_symbols.max(1),
        }
    }

    pub fn identity(k: usize, coherence_symbols: usize) -> Self {
        Self::constant(k, Complex64::new(1.0, 0.0), coherence_symbols)
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

/// Draws a unit-power Rayleigh block-fading realization.
pub fn sample_fading<R: Rng + ?Sized>(
    k: usize,
    coherence: usize,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if k == 0 || coherence == 0 {
        return Err(Error::param("fading needs k >= 1 and coherence >= 1"));
    }
    let mut coefficients = Vec::with_capacity(k);
    while coefficients.len() < k {
        let h = complex_gaussian(rng, 1.0);
        let n = coherence.min(k - coefficients.len());
        coefficients.extend(std::iter::repeat_n(h, n));
    }
    Ok(ChannelRealization {
        coefficients,
        coherence_symbols: coherence,
    })
}

/// One term of a mixture power profile, in units of `N0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerTerm {
    /// `SF * N0`: thermal noise, growing with the spread bandwidth.
    SfTimesN0,
    /// `c * N0`, independent of the spread factor.
    TimesN0(f64),
}

impl PowerTerm {
    pub fn resolve(self, sf: usize, n0: f64) -> f64 {
        match self {
            PowerTerm::SfTimesN0 => sf as f64 * n0,
            PowerTerm::TimesN0(c) => c * n0,
        }
    }
}

impl std::fmt::Display for PowerTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PowerTerm::SfTimesN0 => write!(f, "SF*N0"),
            PowerTerm::TimesN0(c) => write!(f, "{c}*N0"),
        }
    }
}

impl std::str::FromStr for PowerTerm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let coeff = t.strip_suffix("*N0").unwrap_or(t).trim();
        if coeff.eq_ignore_ascii_case("SF") {
            return Ok(PowerTerm::SfTimesN0);
        }
        coeff
            .parse::<f64>()
            .ok()
            .filter(|c| c.is_finite() && *c > 0.0)
            .map(PowerTerm::TimesN0)
            .ok_or_else(|| Error::param(format!("bad mixture power term `{s}`")))
    }
}

/// Default mixture weights.
pub const DEFAULT_GM_WEIGHTS: [f64; 3] = [0.9, 0.05, 0.05];
/// Default mixture powers: thermal, moderate RFI, strong RFI.
pub const DEFAULT_GM_POWERS: [PowerTerm; 3] = [
    PowerTerm::SfTimesN0,
    PowerTerm::TimesN0(30.0),
    PowerTerm::TimesN0(50.0),
];

/// `N0` for unit symbol energy at the given `Es/N0` in dB.
pub fn n0_from_es_n0_db(es_n0_db: f64) -> f64 {
    10f64.powf(-es_n0_db / 10.0)
}

/// Gaussian-mixture chip noise. `variances` are total complex variances per
/// chip (split evenly over I and Q).
#[derive(Debug, Clone, PartialEq)]
pub struct GmNoiseModel {
    pub weights: Vec<f64>,
    pub variances: Vec<f64>,
    pub means: Vec<Complex64>,
    pub n0: f64,
}

impl GmNoiseModel {
    pub fn new(
        weights: Vec<f64>,
        variances: Vec<f64>,
        means: Vec<Complex64>,
        n0: f64,
    ) -> Result<Self> {
        let model = Self {
            weights,
            variances,
            means,
            n0,
        };
        model.validate()?;
        Ok(model)
    }

    /// Zero-mean mixture with powers resolved for `sf` and `N0`.
    pub fn from_profile(weights: &[f64], powers: &[PowerTerm], sf: usize, n0: f64) -> Result<Self> {
        if weights.len() != powers.len() {
            return Err(Error::param(format!(
                "{} mixture weights but {} power terms",
                weights.len(),
                powers.len()
            )));
        }
        let variances = powers.iter().map(|p| p.resolve(sf, n0)).collect();
        Self::new(
            weights.to_vec(),
            variances,
            vec![Complex64::default(); weights.len()],
            n0,
        )
    }

    /// The default three-state profile at `Es/N0` (dB) for spread factor `sf`.
    pub fn default_profile(sf: usize, es_n0_db: f64) -> Result<Self> {
        Self::from_profile(
            &DEFAULT_GM_WEIGHTS,
            &DEFAULT_GM_POWERS,
            sf,
            n0_from_es_n0_db(es_n0_db),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.weights.len();
        if s == 0 || self.variances.len() != s || self.means.len() != s {
            return Err(Error::param(
                "mixture needs matching, non-empty weight, variance and mean lists",
            ));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::param(
                "mixture weights must be finite and non-negative",
            ));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::param(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        if self.variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::param(
                "mixture variances must be finite and positive",
            ));
        }
        if self
            .means
            .iter()
            .any(|m| !(m.re.is_finite() && m.im.is_finite()))
        {
            return Err(Error::param("mixture means must be finite"));
        }
        Ok(())
    }

    /// `Σ π_s (σ_s² + |μ_s|²) − |Σ π_s μ_s|²`.
    pub fn total_variance(&self) -> f64 {
        let mean: Complex64 = self
            .weights
            .iter()
            .zip(&self.means)
            .map(|(w, m)| m * w)
            .sum();
        let second: f64 = self
            .weights
            .iter()
            .zip(self.variances.iter().zip(&self.means))
            .map(|(w, (v, m))| w * (v + m.norm_sqr()))
            .sum();
        second - mean.norm_sqr()
    }

    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (s, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return s;
            }
        }
        // u landed in the rounding gap above the cumulative sum
        self.weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }

    /// One sample together with the component it came from.
    pub fn sample_labeled<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, Complex64) {
        let s = self.pick(rng);
        let sd = (self.variances[s] / 2.0).sqrt();
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        (s, self.means[s] + Complex64::new(re * sd, im * sd))
    }
}

/// `n` independent mixture samples.
pub fn sample_gm_noise<R: Rng + ?Sized>(
    n: usize,
    model: &GmNoiseModel,
    rng: &mut R,
) -> Vec<Complex64> {
    (0..n).map(|_| model.sample_labeled(rng).1).collect()
}

/// Received chips at every user:
/// `r_j[k·SF + m] = h_j[k] · Σ_i x_i[k]·c_i[m] + n_j[k·SF + m]`.
///
/// `noise = None` gives a noiseless channel. Noise is drawn receiver by
/// receiver in index order from `rng`.
pub fn transmit<R: Rng + ?Sized>(
    frames: &[SymbolFrame],
    codes: &CodeSet,
    channels: &[ChannelRealization],
    noise: Option<&GmNoiseModel>,
    rng: &mut R,
) -> Result<Vec<ChipFrame>> {
    let m = frames.len();
    if m == 0 {
        return Err(Error::shape("no frames to transmit"));
    }
    if codes.len() != m || channels.len() != m {
        return Err(Error::shape(format!(
            "{m} frames, {} codes, {} channels",
            codes.len(),
            channels.len()
        )));
    }
    let k = frames[0].len();
    if let Some(f) = frames.iter().find(|f| f.len() != k) {
        return Err(Error::shape(format!(
            "frame lengths differ: {} vs {k}",
            f.len()
        )));
    }
    let sf = codes.sf();
    if codes.codes.iter().any(|c| c.sf() != sf) {
        return Err(Error::shape("codes in a set must share a spread factor"));
    }
    if let Some(ch) = channels.iter().find(|c| c.len() != k) {
        return Err(Error::shape(format!(
            "channel has {} coefficients for {k} symbols",
            ch.len()
        )));
    }

    // Superposed, un-faded chip stream shared by all receivers.
    let mut composite = vec![Complex64::default(); k * sf];
    for (frame, code) in frames.iter().zip(&codes.codes) {
        for (window, &x) in composite.chunks_exact_mut(sf).zip(&frame.symbols) {
            for (chip, &c) in window.iter_mut().zip(code.chips()) {
                *chip += x * c;
            }
        }
    }

    Ok(channels
        .iter()
        .map(|ch| {
            let mut r: Vec<Complex64> = composite
                .chunks_exact(sf)
                .zip(&ch.coefficients)
                .flat_map(|(window, &h)| window.iter().map(move |&s| h * s))
                .collect();
            if let Some(model) = noise {
                for chip in r.iter_mut() {
                    *chip += model.sample_labeled(rng).1;
                }
            }
            ChipFrame(r)
        })
        .collect())
}
