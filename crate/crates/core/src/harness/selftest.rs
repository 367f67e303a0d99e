//! Fast invariant checks run by `ssrn selftest`.

use num_complex::Complex64;
use rand::Rng;

use super::config::{ScenarioConfig, SrnSettings};
use super::run::{build_link, run_point};
use crate::channel::{sample_gm_noise, GmNoiseModel};
use crate::codes::{
    cross_correlation, despread, generate_code, generate_orthogonal_set, spread_slice,
};
use crate::error::Result;
use crate::rng::rng_from_seed;
use crate::srn::{
    decode_checkpoint, encode_checkpoint, masked_mse_loss, SrnBatch, SrnConfig, SrnModel,
    TrainSettings, TENSOR_NAMES,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, outcome: Result<(bool, String)>) -> Check {
    match outcome {
        Ok((passed, detail)) => Check {
            name,
            passed,
            detail,
        },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Runs every check; none of them aborts the others.
pub fn run_selftest() -> Vec<Check> {
    vec![
        check("code energy and spread/despread identity", code_identity()),
        check("orthogonal code set", orthogonal_set()),
        check("mixture noise variance", gm_variance()),
        check("noiseless exact recovery", exact_recovery()),
        check("residual identity", residual_identity()),
        check("refiner gradient vs finite differences", gradient_check()),
        check("checkpoint round trip", checkpoint_round_trip()),
        check("run determinism", determinism()),
    ]
}

fn random_symbols<R: Rng>(n: usize, rng: &mut R) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect()
}

fn code_identity() -> Result<(bool, String)> {
    let mut rng = rng_from_seed(11);
    let mut worst_energy = 0.0f64;
    let mut worst_round = 0.0f64;
    for sf in [1, 2, 4, 8, 16] {
        for _ in 0..50 {
            let code = generate_code(sf, 0.5, &mut rng)?;
            worst_energy = worst_energy.max((code.energy() - 1.0).abs());
            let x = random_symbols(12, &mut rng);
            let back = despread(&spread_slice(&x, &code), &code)?;
            for (a, b) in back.iter().zip(&x) {
                worst_round = worst_round.max((a - b).norm());
            }
        }
    }
    Ok((
        worst_energy <= 1e-12 && worst_round <= 1e-12,
        format!("max energy deviation {worst_energy:.2e}, max round-trip error {worst_round:.2e}"),
    ))
}

fn orthogonal_set() -> Result<(bool, String)> {
    let mut rng = rng_from_seed(12);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let set = generate_orthogonal_set(6, 10, 0.25, &mut rng)?;
        for i in 0..set.len() {
            for j in 0..i {
                worst = worst.max(cross_correlation(&set.codes[i], &set.codes[j])?.abs());
            }
        }
    }
    Ok((
        worst <= 1e-12,
        format!("max |cross-correlation| {worst:.2e}"),
    ))
}

fn gm_variance() -> Result<(bool, String)> {
    let model = GmNoiseModel::default_profile(4, 0.0)?;
    let n = 1_000_000;
    let samples = sample_gm_noise(n, &model, &mut rng_from_seed(13));
    let var = samples.iter().map(Complex64::norm_sqr).sum::<f64>() / n as f64;
    let want = model.total_variance();
    let rel = (var - want).abs() / want;
    Ok((rel <= 0.02, format!("variance {var:.4} vs {want:.4}")))
}

fn exact_recovery() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for m in [1, 2, 6] {
        let config = ScenarioConfig {
            m,
            sf: 10,
            density: 0.25,
            noiseless: true,
            srn: None,
            seed: 14 + m as u64,
            ..ScenarioConfig::default()
        };
        let link = build_link(&config)?;
        let mut rng = rng_from_seed(config.seed);
        for f in 0..10 {
            for o in link.simulate(f, &mut rng)? {
                for (a, b) in o.eq.r_eq.iter().zip(&o.tx.symbols) {
                    worst = worst.max((a - b).norm());
                }
            }
        }
    }
    Ok((worst <= 1e-9, format!("max symbol error {worst:.2e}")))
}

fn residual_identity() -> Result<(bool, String)> {
    let config = ScenarioConfig {
        m: 3,
        sf: 8,
        density: 0.5,
        es_n0_db: 5.0,
        srn: None,
        seed: 15,
        ..ScenarioConfig::default()
    };
    let link = build_link(&config)?;
    let mut rng = rng_from_seed(config.seed);
    let mut worst = 0.0f64;
    for f in 0..10 {
        for o in link.simulate(f, &mut rng)? {
            let code = &link.codes.codes[o.user];
            let rebuilt = spread_slice(&o.eq.r_eq, code);
            for ((r, s), i) in o.received.iter().zip(rebuilt.iter()).zip(o.residual.iter()) {
                worst = worst.max((r - (s + i)).norm());
            }
        }
    }
    Ok((
        worst <= 1e-12,
        format!("max |r - (r_eq⊗c + I)| {worst:.2e}"),
    ))
}

fn small_instance(seed: u64) -> Result<(SrnModel, SrnBatch)> {
    let config = SrnConfig {
        sf: 2,
        seq_len: 4,
        d_model: 8,
        n_heads: 2,
        ff_width: 8,
        seed,
        input_clip: None,
    };
    let model = SrnModel::init(config)?;
    let mut rng = rng_from_seed(seed);
    let mut batch = SrnBatch::default();
    for _ in 0..2 {
        batch.push(
            random_symbols(4, &mut rng),
            random_symbols(8, &mut rng),
            random_symbols(4, &mut rng),
            vec![true, false, false, false],
        );
    }
    Ok((model, batch))
}

fn payload_loss(model: &SrnModel, batch: &SrnBatch) -> Result<f64> {
    masked_mse_loss(&model.forward(batch)?, &batch.target, &batch.pilot_mask)
}

fn gradient_check() -> Result<(bool, String)> {
    let (mut model, batch) = small_instance(16)?;
    let grads = model.backward(&batch)?;
    let step = 1e-5;
    let mut worst = (0.0f64, "");
    for (t, &name) in TENSOR_NAMES.iter().enumerate() {
        let analytic = grads.tensors()[t].clone();
        let mut diff = 0.0;
        let mut norm_a = 0.0;
        let mut norm_n = 0.0;
        for idx in 0..analytic.len() {
            let (r, c) = (idx / analytic.ncols(), idx % analytic.ncols());
            let orig = model.params.tensors()[t][[r, c]];
            model.params.tensors_mut()[t][[r, c]] = orig + step;
            let up = payload_loss(&model, &batch)?;
            model.params.tensors_mut()[t][[r, c]] = orig - step;
            let down = payload_loss(&model, &batch)?;
            model.params.tensors_mut()[t][[r, c]] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[[r, c]];
            diff += (a - numeric).powi(2);
            norm_a += a * a;
            norm_n += numeric * numeric;
        }
        let denom = norm_a.sqrt().max(norm_n.sqrt());
        let rel = if denom < 1e-10 {
            0.0
        } else {
            diff.sqrt() / denom
        };
        if rel >= worst.0 {
            worst = (rel, name);
        }
    }
    Ok((
        worst.0 < 1e-4,
        format!("worst relative error {:.2e} ({})", worst.0, worst.1),
    ))
}

fn checkpoint_round_trip() -> Result<(bool, String)> {
    let (mut model, batch) = small_instance(17)?;
    let grads = model.backward(&batch)?;
    model.adam_step(&grads, 1e-3)?;
    let bytes = encode_checkpoint(&model);
    let back = decode_checkpoint(&bytes)?;
    let same = encode_checkpoint(&back) == bytes && back == model;
    Ok((same, format!("{} bytes", bytes.len())))
}

fn determinism() -> Result<(bool, String)> {
    let config = ScenarioConfig {
        frames: 8,
        k: 32,
        seed: 18,
        srn: Some(SrnSettings {
            d_model: 8,
            n_heads: 2,
            ff_width: 8,
            train: TrainSettings {
                epochs: 1,
                frames_per_epoch: 4,
                batch_size: 2,
                holdout_frames: 2,
                ..TrainSettings::default()
            },
            ..SrnSettings::default()
        }),
        ..ScenarioConfig::default()
    };
    let strip = |mut rows: Vec<super::ResultRow>| {
        rows.iter_mut().for_each(|r| r.wall_time_s = 0.0);
        rows
    };
    let a = strip(run_point(&config)?);
    let b = strip(run_point(&config)?);
    Ok((a == b, format!("{} rows compared", a.len())))
}
