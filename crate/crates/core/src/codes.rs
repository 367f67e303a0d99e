//! Ternary pseudo-random spreading codes.
//!
//! Raw chips are drawn from `{-1, 0, +1}` with `P(+1) = P(-1) = D/2` and
//! `P(0) = 1 - D`, then scaled so the zero-lag autocorrelation is exactly one.
//! Spreading is the Kronecker product of a symbol frame with the code;
//! despreading is a strided correlation over non-overlapping windows of `SF`
//! chips, assuming perfect chip alignment.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::source::SymbolFrame;
use crate::ChipFrame;

/// A unit-energy ternary chip sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadingCode {
    chips: Vec<f64>,
    density: f64,
}

impl SpreadingCode {
    /// Normalizes a raw ternary sequence. Fails if any chip is outside
    /// `{-1, 0, 1}` or if every chip is zero.
    pub fn from_ternary(raw: &[i8], density: f64) -> Result<Self> {
        if raw.iter().any(|c| !matches!(c, -1..=1)) {
            return Err(Error::param("raw chips must be -1, 0 or +1"));
        }
        let weight = raw.iter().filter(|&&c| c != 0).count();
        if weight == 0 {
            return Err(Error::param(
                "spreading code needs at least one non-zero chip",
            ));
        }
        check_density(density)?;
        let scale = 1.0 / (weight as f64).sqrt();
        Ok(Self {
            chips: raw.iter().map(|&c| f64::from(c) * scale).collect(),
            density,
        })
    }

    /// Builds a code from arbitrary real chips, rescaled to unit energy.
    pub fn from_chips(chips: Vec<f64>) -> Result<Self> {
        let energy: f64 = chips.iter().map(|c| c * c).sum();
        if chips.is_empty() || !energy.is_finite() || energy == 0.0 {
            return Err(Error::param(
                "code chips must be finite with non-zero energy",
            ));
        }
        let nonzero = chips.iter().filter(|&&c| c != 0.0).count();
        let density = nonzero as f64 / chips.len() as f64;
        let scale = energy.sqrt().recip();
        Ok(Self {
            chips: chips.into_iter().map(|c| c * scale).collect(),
            density,
        })
    }

    pub fn chips(&self) -> &[f64] {
        &self.chips
    }

    /// Spread factor (code length).
    pub fn sf(&self) -> usize {
        self.chips.len()
    }

    /// Target density the code was generated with.
    pub fn density(&self) -> f64 {
        self.density
    }

    /// Fraction of non-zero chips actually present.
    pub fn weight_fraction(&self) -> f64 {
        self.chips.iter().filter(|&&c| c != 0.0).count() as f64 / self.chips.len() as f64
    }

    pub fn energy(&self) -> f64 {
        self.chips.iter().map(|c| c * c).sum()
    }
}

/// A set of codes with a common spread factor.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeSet {
    pub codes: Vec<SpreadingCode>,
    pub orthogonal: bool,
    /// Mean fraction of non-zero chips over the set.
    pub achieved_density: f64,
}

impl CodeSet {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn sf(&self) -> usize {
        self.codes.first().map_or(0, SpreadingCode::sf)
    }

    /// Independently drawn codes; no orthogonality guarantee.
    pub fn random<R: Rng + ?Sized>(m: usize, sf: usize, density: f64, rng: &mut R) -> Result<Self> {
        if m == 0 {
            return Err(Error::param("code set needs at least one user"));
        }
        let codes = (0..m)
            .map(|_| generate_code(sf, density, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::assemble(codes, false))
    }

    fn assemble(codes: Vec<SpreadingCode>, orthogonal: bool) -> Self {
        let achieved_density = codes
            .iter()
            .map(SpreadingCode::weight_fraction)
            .sum::<f64>()
            / codes.len() as f64;
        Self {
            codes,
            orthogonal,
            achieved_density,
        }
    }
}

fn check_density(density: f64) -> Result<()> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::param(format!(
            "density must lie in (0, 1], got {density}"
        )));
    }
    Ok(())
}

fn draw_ternary<R: Rng + ?Sized>(out: &mut [i8], density: f64, rng: &mut R) {
    for c in out.iter_mut() {
        let u: f64 = rng.random();
        *c = if u < density / 2.0 {
            1
        } else if u < density {
            -1
        } else {
            0
        };
    }
}

/// Draws raw ternary chips, resampling the whole sequence while it is all
/// zero.
pub fn generate_raw<R: Rng + ?Sized>(sf: usize, density: f64, rng: &mut R) -> Result<Vec<i8>> {
    generate_raw_counted(sf, density, rng).map(|(raw, _)| raw)
}

/// Like [`generate_raw`], also returning how many all-zero draws were
/// rejected before the accepted one.
pub fn generate_raw_counted<R: Rng + ?Sized>(
    sf: usize,
    density: f64,
    rng: &mut R,
) -> Result<(Vec<i8>, usize)> {
    if sf == 0 {
        return Err(Error::param("spread factor must be at least 1"));
    }
    check_density(density)?;
    let mut raw = vec![0i8; sf];
    let mut rejected = 0;
    loop {
        draw_ternary(&mut raw, density, rng);
        if raw.iter().any(|&c| c != 0) {
            return Ok((raw, rejected));
        }
        rejected += 1;
    }
}

pub fn generate_code<R: Rng + ?Sized>(
    sf: usize,
    density: f64,
    rng: &mut R,
) -> Result<SpreadingCode> {
    let raw = generate_raw(sf, density, rng)?;
    SpreadingCode::from_ternary(&raw, density)
}

/// Builds `m` mutually orthogonal codes by giving each user a disjoint,
/// contiguous block of `floor(sf / m)` chip positions.
///
/// Inside its block a user's chips are non-zero with probability
/// `min(1, density * sf / block)` so the overall weight tracks `density`
/// where the block size allows it; a block that comes out all zero is
/// redrawn. Chip positions past `m * block` stay unused.
pub fn generate_orthogonal_set<R: Rng + ?Sized>(
    m: usize,
    sf: usize,
    density: f64,
    rng: &mut R,
) -> Result<CodeSet> {
    if m == 0 || sf == 0 {
        return Err(Error::param(
            "user count and spread factor must be at least 1",
        ));
    }
    check_density(density)?;
    if m > sf {
        return Err(Error::config(format!(
            "cannot build {m} disjoint-support codes of length {sf}: need at least one chip per user"
        )));
    }
    let block = sf / m;
    let p = (density * sf as f64 / block as f64).min(1.0);
    let codes = (0..m)
        .map(|user| {
            let mut raw = vec![0i8; sf];
            let window = &mut raw[user * block..(user + 1) * block];
            loop {
                draw_ternary(window, p, rng);
                if window.iter().any(|&c| c != 0) {
                    break;
                }
            }
            SpreadingCode::from_ternary(&raw, density)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CodeSet::assemble(codes, true))
}

/// Kronecker product `symbols ⊗ code`.
pub fn spread(symbols: &SymbolFrame, code: &SpreadingCode) -> ChipFrame {
    spread_slice(&symbols.symbols, code)
}

pub fn spread_slice(symbols: &[Complex64], code: &SpreadingCode) -> ChipFrame {
    let chips = symbols
        .iter()
        .flat_map(|&x| code.chips.iter().map(move |&c| x * c))
        .collect();
    ChipFrame(chips)
}

/// Strided correlation of `chips` with `code`, one output per window of `SF`
/// chips.
pub fn despread(chips: &[Complex64], code: &SpreadingCode) -> Result<Vec<Complex64>> {
    let sf = code.sf();
    if !chips.len().is_multiple_of(sf) {
        return Err(Error::shape(format!(
            "{} chips is not a multiple of spread factor {sf}",
            chips.len()
        )));
    }
    Ok(chips
        .chunks_exact(sf)
        .map(|window| window.iter().zip(&code.chips).map(|(&r, &c)| r * c).sum())
        .collect())
}

/// Zero-lag cross-correlation `dot(a, b)`.
pub fn cross_correlation(a: &SpreadingCode, b: &SpreadingCode) -> Result<f64> {
    if a.sf() != b.sf() {
        return Err(Error::shape(format!(
            "spread factors differ: {} vs {}",
            a.sf(),
            b.sf()
        )));
    }
    Ok(a.chips.iter().zip(&b.chips).map(|(x, y)| x * y).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use num_complex::Complex64 as C;

    fn code(chips: &[f64]) -> SpreadingCode {
        SpreadingCode::from_chips(chips.to_vec()).unwrap()
    }

    #[test]
    fn full_density_chips_are_plus_minus_half() {
        let mut rng = rng_from_seed(1);
        for _ in 0..100 {
            let c = generate_code(4, 1.0, &mut rng).unwrap();
            assert!(c.chips().iter().all(|&x| (x.abs() - 0.5).abs() < 1e-15));
        }
    }

    #[test]
    fn single_chip_code_is_unit() {
        let mut rng = rng_from_seed(2);
        let c = generate_code(1, 1.0, &mut rng).unwrap();
        assert!(c.chips() == [1.0] || c.chips() == [-1.0]);
    }

    #[test]
    fn invalid_parameters_rejected() {
        let mut rng = rng_from_seed(3);
        assert!(matches!(
            generate_code(0, 0.5, &mut rng),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            generate_code(4, 0.0, &mut rng),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            generate_code(4, 1.5, &mut rng),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            generate_code(4, f64::NAN, &mut rng),
            Err(Error::Parameter(_))
        ));
        assert!(SpreadingCode::from_ternary(&[0, 0], 0.5).is_err());
        assert!(SpreadingCode::from_ternary(&[2, 0], 0.5).is_err());
    }

    #[test]
    fn sparse_codes_never_empty() {
        let mut rng = rng_from_seed(4);
        for _ in 0..2000 {
            let c = generate_code(2, 0.05, &mut rng).unwrap();
            assert!(c.chips().iter().any(|&x| x != 0.0));
            assert!((c.energy() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn orthogonal_set_six_users_sf10() {
        let mut rng = rng_from_seed(5);
        let set = generate_orthogonal_set(6, 10, 0.25, &mut rng).unwrap();
        assert_eq!(set.len(), 6);
        assert!(set.orthogonal);
        for (i, a) in set.codes.iter().enumerate() {
            assert!((a.energy() - 1.0).abs() <= 1e-12);
            for b in &set.codes[i + 1..] {
                assert!(cross_correlation(a, b).unwrap().abs() <= 1e-12);
            }
        }
        // one chip per user in a 1-chip block
        assert!((set.achieved_density - 0.1).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_set_small_cases() {
        let mut rng = rng_from_seed(6);
        let one = generate_orthogonal_set(1, 4, 1.0, &mut rng).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.codes[0].weight_fraction(), 1.0);

        let two = generate_orthogonal_set(2, 2, 1.0, &mut rng).unwrap();
        let dot = cross_correlation(&two.codes[0], &two.codes[1]).unwrap();
        assert_eq!(dot, 0.0);
    }

    #[test]
    fn infeasible_orthogonal_set() {
        let mut rng = rng_from_seed(7);
        let err = generate_orthogonal_set(5, 4, 0.5, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn spread_kronecker_expansion() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let c = code(&[s, -s]);
        let out = spread_slice(&[C::new(1.0, 0.0), C::new(-1.0, 0.0)], &c);
        let want = [s, -s, -s, s];
        assert_eq!(out.len(), 4);
        for (got, w) in out.iter().zip(want) {
            assert!((got - C::new(w, 0.0)).norm() < 1e-15);
        }
        let zero = spread_slice(&[C::default(); 2], &c);
        assert!(zero.iter().all(|z| *z == C::default()));
    }

    #[test]
    fn spread_preserves_energy() {
        let mut rng = rng_from_seed(8);
        let c = generate_code(7, 0.6, &mut rng).unwrap();
        // |2|^2 + |2i|^2 = 8
        let out = spread_slice(&[C::new(2.0, 0.0), C::new(0.0, 2.0)], &c);
        let e: f64 = out.iter().map(|z| z.norm_sqr()).sum();
        assert!((e - 8.0).abs() < 1e-12);
    }

    #[test]
    fn despread_hand_values() {
        let c = code(&[0.5, 0.5, 0.5, 0.5]);
        let out = despread(&[C::new(1.0, 0.0); 4], &c).unwrap();
        assert_eq!(out, vec![C::new(2.0, 0.0)]);
        assert!(matches!(
            despread(&[C::default(); 5], &c),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn despread_round_trip_and_rejection() {
        let a = code(&[1.0, 0.0, -1.0, 0.0]);
        let b = code(&[0.0, 1.0, 0.0, 1.0]);
        let x = [C::new(2.0, 1.0), C::new(-3.0, 0.0)];
        let back = despread(&spread_slice(&x, &a), &a).unwrap();
        for (g, w) in back.iter().zip(x) {
            assert!((g - w).norm() < 1e-12);
        }
        let leak = despread(&spread_slice(&x, &a), &b).unwrap();
        assert!(leak.iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn cross_correlation_cases() {
        let a = code(&[1.0, -1.0, 1.0]);
        assert!((cross_correlation(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let b = code(&[1.0, 0.0, 0.0]);
        let c = code(&[0.0, 1.0, 0.0]);
        assert_eq!(cross_correlation(&b, &c).unwrap(), 0.0);
        assert_eq!(
            cross_correlation(&a, &b).unwrap(),
            cross_correlation(&b, &a).unwrap()
        );
        let d = code(&[1.0, 1.0]);
        assert!(matches!(cross_correlation(&a, &d), Err(Error::Shape(_))));
    }

    #[test]
    fn raw_density_monte_carlo() {
        // sf=10, D=0.25 over 1e5 codes. Over every drawn chip (rejected
        // all-zero draws included) the non-zero fraction is D. Over accepted
        // codes only it is D / (1 - (1 - D)^sf) = 0.25 / (1 - 0.75^10).
        let mut rng = rng_from_seed(9);
        let n = 100_000;
        let mut nonzero = 0usize;
        let mut drawn = 0usize;
        for _ in 0..n {
            let (raw, rejected) = generate_raw_counted(10, 0.25, &mut rng).unwrap();
            nonzero += raw.iter().filter(|&&c| c != 0).count();
            drawn += 10 * (rejected + 1);
        }
        let law = nonzero as f64 / drawn as f64;
        assert!((law - 0.25).abs() < 0.01, "per-draw fraction {law}");
        let accepted = nonzero as f64 / (10 * n) as f64;
        let expect = 0.25 / (1.0 - 0.75f64.powi(10));
        assert!(
            (accepted - expect).abs() < 0.01,
            "accepted fraction {accepted} vs {expect}"
        );
    }

    #[test]
    fn random_cross_correlation_magnitude() {
        // Folded-normal mean of a sum of 64 iid ±1/64 terms: sqrt(2 / (pi * 64)).
        let mut rng = rng_from_seed(10);
        let pairs = 10_000;
        let mut total = 0.0;
        for _ in 0..pairs {
            let a = generate_code(64, 1.0, &mut rng).unwrap();
            let b = generate_code(64, 1.0, &mut rng).unwrap();
            let r = cross_correlation(&a, &b).unwrap().abs();
            assert!(r <= 1.0 + 1e-12);
            total += r;
        }
        let mean = total / pairs as f64;
        let expect = (2.0 / (std::f64::consts::PI * 64.0)).sqrt();
        assert!(
            (mean - expect).abs() < 0.05 * expect,
            "mean {mean} vs {expect}"
        );
    }

    proptest::proptest! {
        #[test]
        fn despread_inverts_spread(
            sf in 1usize..32,
            density in 0.01f64..1.0,
            symbols in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..30),
            seed in 0u64..10_000,
        ) {
            let code = generate_code(sf, density, &mut rng_from_seed(seed)).unwrap();
            proptest::prop_assert!((code.energy() - 1.0).abs() <= 1e-12);
            let x: Vec<C> = symbols.into_iter().map(|(a, b)| C::new(a, b)).collect();
            let back = despread(&spread_slice(&x, &code), &code).unwrap();
            for (a, b) in back.iter().zip(&x) {
                proptest::prop_assert!((a - b).norm() <= 1e-12 * b.norm().max(1.0));
            }
        }

        #[test]
        fn orthogonal_sets_have_zero_cross_correlation(
            sf in 1usize..24,
            users in 1usize..24,
            density in 0.01f64..1.0,
            seed in 0u64..10_000,
        ) {
            let m = users.min(sf);
            let set = generate_orthogonal_set(m, sf, density, &mut rng_from_seed(seed)).unwrap();
            for i in 0..m {
                for j in 0..i {
                    proptest::prop_assert!(cross_correlation(&set.codes[i], &set.codes[j]).unwrap().abs() <= 1e-12);
                }
            }
        }
    }
}
