//! Classical receiver: despread, per-block least-squares channel estimate
//! from pilots, zero-forcing equalization, and residual interference.

use num_complex::Complex64;

use crate::codes::{despread, SpreadingCode};
use crate::error::{Error, Result};
use crate::source::SymbolFrame;
use crate::ChipFrame;

/// Smallest divisor magnitude zero-forcing will use.
pub const ZF_CLAMP_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct EqualizedFrame {
    /// Equalized despread symbols.
    pub r_eq: Vec<Complex64>,
    /// Block-constant channel estimate.
    pub h_hat: Vec<Complex64>,
    /// Despread symbols before equalization.
    pub r_ds: Vec<Complex64>,
    /// Number of positions where the divisor was clamped.
    pub clamp_count: usize,
}

/// Least-squares estimate of a block-constant channel:
/// `ĥ_b = Σ r_ds[k]·conj(p[k]) / Σ |p[k]|²` over the pilots of block `b`.
pub fn ls_estimate(
    r_ds: &[Complex64],
    pilots: &SymbolFrame,
    coherence: usize,
) -> Result<Vec<Complex64>> {
    if coherence == 0 {
        return Err(Error::param("coherence must be at least one symbol"));
    }
    if r_ds.len() != pilots.len() {
        return Err(Error::shape(format!(
            "{} despread symbols but pilot frame of {}",
            r_ds.len(),
            pilots.len()
        )));
    }
    let mut h_hat = Vec::with_capacity(r_ds.len());
    for (b, start) in (0..r_ds.len()).step_by(coherence).enumerate() {
        let end = (start + coherence).min(r_ds.len());
        let (num, den) = (start..end).filter(|&k| pilots.pilot_mask[k]).fold(
            (Complex64::default(), 0.0),
            |(num, den), k| {
                let p = pilots.symbols[k];
                (num + r_ds[k] * p.conj(), den + p.norm_sqr())
            },
        );
        if den == 0.0 {
            return Err(Error::config(format!(
                "coherence block {b} (symbols {start}..{end}) has no pilot"
            )));
        }
        h_hat.extend(std::iter::repeat_n(num / den, end - start));
    }
    Ok(h_hat)
}

/// `r_ds[k] / ĥ[k]`, with `|ĥ[k]|` floored at [`ZF_CLAMP_FLOOR`] (phase kept).
/// Returns the equalized symbols and the number of clamped positions.
pub fn zf_equalize(r_ds: &[Complex64], h_hat: &[Complex64]) -> Result<(Vec<Complex64>, usize)> {
    if r_ds.len() != h_hat.len() {
        return Err(Error::shape(format!(
            "{} symbols but {} channel estimates",
            r_ds.len(),
            h_hat.len()
        )));
    }
    let mut clamps = 0;
    let out = r_ds
        .iter()
        .zip(h_hat)
        .map(|(&r, &h)| {
            let mag = h.norm();
            let divisor = if mag < ZF_CLAMP_FLOOR {
                clamps += 1;
                if mag > 0.0 {
                    h * (ZF_CLAMP_FLOOR / mag)
                } else {
                    Complex64::new(ZF_CLAMP_FLOOR, 0.0)
                }
            } else {
                h
            };
            r / divisor
        })
        .collect();
    Ok((out, clamps))
}

/// `I = r − (r_eq ⊗ c)`.
pub fn residual_interference(
    r: &[Complex64],
    r_eq: &[Complex64],
    code: &SpreadingCode,
) -> Result<ChipFrame> {
    let sf = code.sf();
    if r.len() != r_eq.len() * sf {
        return Err(Error::shape(format!(
            "{} chips but {} symbols at spread factor {sf}",
            r.len(),
            r_eq.len()
        )));
    }
    Ok(ChipFrame(
        r.chunks_exact(sf)
            .zip(r_eq)
            .flat_map(|(window, &x)| {
                window
                    .iter()
                    .zip(code.chips())
                    .map(move |(&chip, &c)| chip - x * c)
            })
            .collect(),
    ))
}

/// Despread → LS estimate → ZF for one user.
pub fn equalize(
    r: &[Complex64],
    code: &SpreadingCode,
    pilots: &SymbolFrame,
    coherence: usize,
) -> Result<EqualizedFrame> {
    let r_ds = despread(r, code)?;
    let h_hat = ls_estimate(&r_ds, pilots, coherence)?;
    let (r_eq, clamp_count) = zf_equalize(&r_ds, &h_hat)?;
    Ok(EqualizedFrame {
        r_eq,
        h_hat,
        r_ds,
        clamp_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_fading, transmit, ChannelRealization, GmNoiseModel};
    use crate::codes::{despread, generate_code, spread_slice};
    use crate::rng::rng_from_seed;
    use crate::source::{complex_gaussian, random_frame, PilotConfig};
    use crate::ChipFrame;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn noiseless_ls_is_exact() {
        let mut rng = rng_from_seed(1);
        let frame = random_frame(40, &PilotConfig::default(), &mut rng).unwrap();
        let h = c(1.0, 1.0);
        let r_ds: Vec<_> = frame.symbols.iter().map(|x| x * h).collect();
        let h_hat = ls_estimate(&r_ds, &frame, 16).unwrap();
        assert!(h_hat.iter().all(|e| (e - h).norm() < 1e-12));

        let tripled: Vec<_> = frame.symbols.iter().map(|x| x * 3.0).collect();
        let h_hat = ls_estimate(&tripled, &frame, 16).unwrap();
        assert!(h_hat.iter().all(|e| (e - c(3.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn ls_block_without_pilot_fails() {
        let frame = SymbolFrame::new(
            vec![c(1.0, 0.0); 8],
            vec![true, false, false, false, false, false, false, false],
        )
        .unwrap();
        let err = ls_estimate(&frame.symbols, &frame, 4).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn ls_variance_with_four_pilots() {
        // Var(ĥ) = v / Σ|p|^2 = v / 4 for four unit pilots.
        let mut rng = rng_from_seed(2);
        let pilots = PilotConfig::default();
        let frame = random_frame(16, &pilots, &mut rng).unwrap();
        let v = 0.3;
        let trials = 100_000;
        let mut acc = 0.0;
        let mut mean = Complex64::default();
        for _ in 0..trials {
            let r_ds: Vec<_> = frame
                .symbols
                .iter()
                .map(|x| x + complex_gaussian(&mut rng, v))
                .collect();
            let e = ls_estimate(&r_ds, &frame, 16).unwrap()[0] - 1.0;
            acc += e.norm_sqr();
            mean += e;
        }
        let var = acc / trials as f64 - (mean / trials as f64).norm_sqr();
        assert!((var - v / 4.0).abs() < 0.05 * v / 4.0, "var {var}");
    }

    #[test]
    fn zf_exact_and_clamped() {
        let x = [c(0.3, -0.2), c(-1.0, 0.5)];
        let r_ds: Vec<_> = x.iter().map(|v| v * 2.0).collect();
        let (eq, clamps) = zf_equalize(&r_ds, &[c(2.0, 0.0); 2]).unwrap();
        assert_eq!(clamps, 0);
        for (a, b) in eq.iter().zip(x) {
            assert!((a - b).norm() < 1e-15);
        }

        let tiny = Complex64::from_polar(1e-9, 0.7);
        let (eq, clamps) = zf_equalize(&[c(1.0, 0.0)], &[tiny]).unwrap();
        assert_eq!(clamps, 1);
        let want = c(1.0, 0.0) / Complex64::from_polar(1e-6, 0.7);
        assert!((eq[0] - want).norm() < 1e-6 * want.norm());

        let (eq, clamps) = zf_equalize(&[c(1.0, 0.0)], &[Complex64::default()]).unwrap();
        assert_eq!(clamps, 1);
        assert!(eq[0].re.is_finite());
        assert!(zf_equalize(&[c(1.0, 0.0)], &[]).is_err());
    }

    #[test]
    fn residual_cases() {
        let mut rng = rng_from_seed(3);
        let code = generate_code(4, 1.0, &mut rng).unwrap();
        let x: Vec<_> = (0..6).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let r = spread_slice(&x, &code);
        let i = residual_interference(&r, &x, &code).unwrap();
        assert!(i.iter().all(|z| z.norm() < 1e-12));

        let foreign = crate::codes::SpreadingCode::from_chips(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let mine = crate::codes::SpreadingCode::from_chips(vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let r = spread_slice(&x, &foreign);
        let i = residual_interference(&r, &[Complex64::default(); 6], &mine).unwrap();
        assert_eq!(i, r);

        assert!(matches!(
            residual_interference(&r, &x[..5], &mine),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn residual_energy_expansion() {
        // ‖I‖² = ‖r‖² − 2·Re⟨r, r_eq⊗c⟩ + ‖r_eq‖²
        let mut rng = rng_from_seed(4);
        let code = generate_code(5, 0.6, &mut rng).unwrap();
        let r: Vec<_> = (0..25).map(|_| complex_gaussian(&mut rng, 2.0)).collect();
        let r_eq: Vec<_> = (0..5).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let i = residual_interference(&r, &r_eq, &code).unwrap();
        let respread = spread_slice(&r_eq, &code);
        let lhs: f64 = i.iter().map(|z| z.norm_sqr()).sum();
        let inner: Complex64 = r
            .iter()
            .zip(respread.iter())
            .map(|(a, b)| a * b.conj())
            .sum();
        let rhs = r.iter().map(|z| z.norm_sqr()).sum::<f64>() - 2.0 * inner.re
            + r_eq.iter().map(|z| z.norm_sqr()).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.max(1.0));
    }

    fn equalize_all(
        received: &[ChipFrame],
        set: &crate::codes::CodeSet,
        frames: &[SymbolFrame],
    ) -> Vec<EqualizedFrame> {
        received
            .iter()
            .zip(&set.codes)
            .zip(frames)
            .map(|((r, code), f)| equalize(r, code, f, 16).unwrap())
            .collect()
    }

    #[test]
    fn unit_channel_never_clamps() {
        let mut rng = rng_from_seed(5);
        let pilots = PilotConfig::default();
        let set = crate::codes::generate_orthogonal_set(2, 4, 1.0, &mut rng).unwrap();
        let frames: Vec<_> = (0..2)
            .map(|_| random_frame(48, &pilots, &mut rng).unwrap())
            .collect();
        let chans = vec![ChannelRealization::identity(48, 16); 2];
        let r = transmit(&frames, &set, &chans, None, &mut rng).unwrap();
        for eq in equalize_all(&r, &set, &frames) {
            assert_eq!(eq.clamp_count, 0);
        }
    }

    #[test]
    fn chain_is_linear_in_its_three_terms() {
        // Desired signal, interferers and noise pushed through separately
        // (with the full-pipeline channel estimate held fixed) sum to the
        // full equalizer output.
        let mut rng = rng_from_seed(6);
        let pilots = PilotConfig::default();
        let set = crate::codes::CodeSet::random(3, 6, 0.5, &mut rng).unwrap();
        let frames: Vec<_> = (0..3)
            .map(|_| random_frame(32, &pilots, &mut rng).unwrap())
            .collect();
        let chans: Vec<_> = (0..3)
            .map(|_| sample_fading(32, 16, &mut rng).unwrap())
            .collect();
        let model = GmNoiseModel::default_profile(6, 5.0).unwrap();
        let full = transmit(&frames, &set, &chans, Some(&model), &mut rng_from_seed(7)).unwrap();
        let eq = equalize_all(&full, &set, &frames);

        let zeroed: Vec<_> = frames.iter().map(SymbolFrame::zeroed).collect();
        let noise_only =
            transmit(&zeroed, &set, &chans, Some(&model), &mut rng_from_seed(7)).unwrap();
        for j in 0..3 {
            let code = &set.codes[j];
            let mut desired = zeroed.clone();
            desired[j] = frames[j].clone();
            let mut others = frames.clone();
            others[j] = zeroed[j].clone();
            let d = transmit(&desired, &set, &chans, None, &mut rng).unwrap();
            let o = transmit(&others, &set, &chans, None, &mut rng).unwrap();
            let h = &eq[j].h_hat;
            let parts = [&d[j], &o[j], &noise_only[j]]
                .map(|r| zf_equalize(&despread(r, code).unwrap(), h).unwrap().0);
            for k in 0..32 {
                let sum = parts[0][k] + parts[1][k] + parts[2][k];
                assert!((sum - eq[j].r_eq[k]).norm() < 1e-10 * eq[j].r_eq[k].norm().max(1.0));
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn orthogonal_noiseless_users_recover_exactly(
            sf in 1usize..12,
            users in 1usize..12,
            density in 0.05f64..1.0,
            seed in 0u64..10_000,
        ) {
            let m = users.min(sf);
            let mut rng = rng_from_seed(seed);
            let pilots = PilotConfig::default();
            let set = crate::codes::generate_orthogonal_set(m, sf, density, &mut rng).unwrap();
            let frames: Vec<_> = (0..m).map(|_| random_frame(40, &pilots, &mut rng).unwrap()).collect();
            let chans: Vec<_> = (0..m).map(|_| sample_fading(40, 16, &mut rng).unwrap()).collect();
            let r = transmit(&frames, &set, &chans, None, &mut rng).unwrap();
            for (eq, f) in equalize_all(&r, &set, &frames).iter().zip(&frames) {
                for (a, b) in eq.r_eq.iter().zip(&f.symbols) {
                    proptest::prop_assert!((a - b).norm() <= 1e-9);
                }
            }
        }

        #[test]
        fn residual_completes_the_received_signal(sf in 1usize..9, seed in 0u64..10_000) {
            let mut rng = rng_from_seed(seed);
            let code = generate_code(sf, 0.5, &mut rng).unwrap();
            let r: Vec<_> = (0..10 * sf).map(|_| complex_gaussian(&mut rng, 3.0)).collect();
            let r_eq: Vec<_> = (0..10).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
            let i = residual_interference(&r, &r_eq, &code).unwrap();
            let s = spread_slice(&r_eq, &code);
            for ((a, b), c) in r.iter().zip(s.iter()).zip(i.iter()) {
                proptest::prop_assert!((a - (b + c)).norm() <= 1e-12);
            }
        }
    }
}
