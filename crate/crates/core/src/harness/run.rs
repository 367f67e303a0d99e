use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use super::config::{ScenarioConfig, SourceSpec};
use crate::channel::{n0_from_es_n0_db, GmNoiseModel};
use crate::codes::{generate_orthogonal_set, CodeSet};
use crate::error::{Error, Result};
use crate::link::{batch_from_observations, payload_error, Link, Observation, SymbolSource};
use crate::rng::{derive_seed, stream, substream};
use crate::source::load_frames;
use crate::srn::{train, SrnConfig, SrnModel, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum System {
    Baseline,
    Srn,
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            System::Baseline => "baseline",
            System::Srn => "srn",
        })
    }
}

/// One user's metrics for one system at one scenario point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sf: usize,
    pub es_n0_db: f64,
    pub m: usize,
    pub user: usize,
    pub system: System,
    /// Mean `|x̂ − x|²` over payload symbols.
    pub symbol_mse: f64,
    /// `10·log10(Σ|x̂ − x|² / Σ|x|²)` over payload symbols.
    pub evm_db: f64,
    /// Zero-forcing divisions that hit the clamp floor.
    pub clamp_count: u64,
    pub frames: usize,
    pub wall_time_s: f64,
}

/// Link plus, when enabled, the trained refiner for a scenario.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub link: Link,
    pub model: Option<SrnModel>,
    pub report: Option<TrainReport>,
}

/// Codes for the scenario, drawn from the code sub-stream of `config.seed`.
pub fn build_codes(config: &ScenarioConfig) -> Result<CodeSet> {
    let mut rng = substream(config.seed, &[stream::CODES]);
    if config.orthogonal {
        generate_orthogonal_set(config.m, config.sf, config.density, &mut rng)
    } else {
        CodeSet::random(config.m, config.sf, config.density, &mut rng)
    }
}

pub fn build_link(config: &ScenarioConfig) -> Result<Link> {
    config.validate()?;
    let codes = build_codes(config)?;
    let noise = if config.noiseless {
        None
    } else {
        Some(GmNoiseModel::from_profile(
            &config.gm_weights,
            &config.gm_powers,
            config.sf,
            n0_from_es_n0_db(config.es_n0_db),
        )?)
    };
    let source = match &config.symbol_source {
        SourceSpec::Random => SymbolSource::Random,
        SourceSpec::File(path) => SymbolSource::Frames(Arc::new(load_frames(path)?)),
    };
    let link = Link {
        k: config.k,
        codes,
        pilots: config.pilots(),
        noise,
        fading: config.fading,
        source,
    };
    link.validate()?;
    Ok(link)
}

impl Prepared {
    /// Uses an existing refiner instead of training one.
    pub fn with_model(config: &ScenarioConfig, model: SrnModel) -> Result<Self> {
        let link = build_link(config)?;
        if model.config.sf != config.sf || model.config.seq_len != config.k {
            return Err(Error::config(format!(
                "refiner was built for SF={} K={}, scenario has SF={} K={}",
                model.config.sf, model.config.seq_len, config.sf, config.k
            )));
        }
        Ok(Self {
            link,
            model: Some(model),
            report: None,
        })
    }
}

/// Builds the link and trains the refiner if the scenario enables it.
pub fn prepare(config: &ScenarioConfig) -> Result<Prepared> {
    let link = build_link(config)?;
    let Some(s) = &config.srn else {
        return Ok(Prepared {
            link,
            model: None,
            report: None,
        });
    };
    let srn_config = SrnConfig {
        sf: config.sf,
        seq_len: config.k,
        d_model: s.d_model,
        n_heads: s.n_heads,
        ff_width: s.ff_width,
        seed: config.seed,
        input_clip: s.input_clip,
    };
    let mut model = SrnModel::init(srn_config)?;
    let mut rng = substream(config.seed, &[stream::TRAIN]);
    let report = train(&mut model, &link, &s.train, &mut rng)?;
    Ok(Prepared {
        link,
        model: Some(model),
        report: Some(report),
    })
}

/// The evaluation transmission `index`. Evaluation frames use their own
/// sub-stream, disjoint from the training and held-out streams.
pub fn eval_observations(link: &Link, seed: u64, index: u64) -> Result<Vec<Observation>> {
    let mut rng = substream(seed, &[stream::EVAL, index]);
    link.simulate(index, &mut rng)
}

#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    base_err: f64,
    srn_err: f64,
    signal: f64,
    count: usize,
    clamps: u64,
}

fn evaluate_chunk(prepared: &Prepared, seed: u64, first: u64, n: usize) -> Result<Vec<Acc>> {
    let m = prepared.link.users();
    let mut acc = vec![Acc::default(); m];
    let mut obs = Vec::with_capacity(n * m);
    for i in 0..n as u64 {
        obs.extend(eval_observations(&prepared.link, seed, first + i)?);
    }
    for o in &obs {
        let (e, s, c) = o.baseline_error();
        let a = &mut acc[o.user];
        a.base_err += e;
        a.signal += s;
        a.count += c;
        a.clamps += o.eq.clamp_count as u64;
    }
    if let Some(model) = &prepared.model {
        let refined = model.forward(&batch_from_observations(&obs))?;
        for (o, x_hat) in obs.iter().zip(&refined) {
            acc[o.user].srn_err += payload_error(x_hat, &o.tx).0;
        }
    }
    Ok(acc)
}

fn metrics(err: f64, signal: f64, count: usize) -> (f64, f64) {
    let mse = if count == 0 { 0.0 } else { err / count as f64 };
    (mse, 10.0 * (err / signal).log10())
}

/// Runs one scenario: optional online training, then `frames` evaluation
/// transmissions. Returns a baseline row per user, followed by a refiner row
/// per user when the refiner is enabled.
pub fn run_point(config: &ScenarioConfig) -> Result<Vec<ResultRow>> {
    let start = Instant::now();
    let prepared = prepare(config)?;
    evaluate_prepared(config, &prepared, start)
}

/// Evaluation half of [`run_point`] for an already prepared scenario;
/// `start` marks the beginning of the wall-time measurement.
pub fn evaluate_prepared(
    config: &ScenarioConfig,
    prepared: &Prepared,
    start: Instant,
) -> Result<Vec<ResultRow>> {
    let chunk = config.srn.as_ref().map_or(16, |s| s.eval_chunk);
    let chunks = config.frames.div_ceil(chunk);
    let parts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let first = c * chunk;
            let n = chunk.min(config.frames - first);
            evaluate_chunk(prepared, config.seed, first as u64, n)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut total = vec![Acc::default(); config.m];
    for part in parts {
        for (t, p) in total.iter_mut().zip(part) {
            t.base_err += p.base_err;
            t.srn_err += p.srn_err;
            t.signal += p.signal;
            t.count += p.count;
            t.clamps += p.clamps;
        }
    }
    let wall = start.elapsed().as_secs_f64();

    let row = |user: usize, system: System, err: f64, a: &Acc| {
        let (symbol_mse, evm_db) = metrics(err, a.signal, a.count);
        ResultRow {
            sf: config.sf,
            es_n0_db: config.es_n0_db,
            m: config.m,
            user,
            system,
            symbol_mse,
            evm_db,
            clamp_count: a.clamps,
            frames: config.frames,
            wall_time_s: wall,
        }
    };
    let mut rows: Vec<ResultRow> = total
        .iter()
        .enumerate()
        .map(|(u, a)| row(u, System::Baseline, a.base_err, a))
        .collect();
    if prepared.model.is_some() {
        rows.extend(
            total
                .iter()
                .enumerate()
                .map(|(u, a)| row(u, System::Srn, a.srn_err, a)),
        );
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Sf,
    EsN0Db,
    M,
}

impl SweepAxis {
    fn tag(self) -> u64 {
        match self {
            SweepAxis::Sf => 1,
            SweepAxis::EsN0Db => 2,
            SweepAxis::M => 3,
        }
    }

    /// `config` with this axis set to `value`.
    pub fn apply(self, config: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut c = config.clone();
        let count = |v: f64| {
            if v.fract() == 0.0 && v >= 1.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::config(format!(
                    "{self} must be a positive integer, got {v}"
                )))
            }
        };
        match self {
            SweepAxis::Sf => c.sf = count(value)?,
            SweepAxis::M => c.m = count(value)?,
            SweepAxis::EsN0Db => c.es_n0_db = value,
        }
        Ok(c)
    }

    /// Seed of the point at `value`; depends only on the base seed, the axis
    /// and the value, so sweeps are order-independent.
    pub fn point_seed(self, base_seed: u64, value: f64) -> u64 {
        derive_seed(base_seed, &[stream::SWEEP, self.tag(), value.to_bits()])
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Sf => "sf",
            SweepAxis::EsN0Db => "es_n0_db",
            SweepAxis::M => "m",
        })
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sf" => Ok(SweepAxis::Sf),
            "es_n0_db" | "snr" | "snr_db" => Ok(SweepAxis::EsN0Db),
            "m" | "users" => Ok(SweepAxis::M),
            _ => Err(Error::config(format!("unknown sweep axis `{s}`"))),
        }
    }
}

/// The per-point configurations of a sweep, with derived seeds.
pub fn sweep_points(
    base: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
) -> Result<Vec<ScenarioConfig>> {
    if values.is_empty() {
        return Err(Error::config("sweep needs at least one value"));
    }
    values
        .iter()
        .map(|&v| {
            let mut c = axis.apply(base, v).map_err(|e| named(axis, v, e))?;
            c.seed = axis.point_seed(base.seed, v);
            c.validate().map_err(|e| named(axis, v, e))?;
            Ok(c)
        })
        .collect()
}

fn named(axis: SweepAxis, value: f64, e: Error) -> Error {
    Error::Sweep {
        axis: axis.to_string(),
        value: value.to_string(),
        source: Box::new(e),
    }
}

/// Runs one point per value. Every point is validated before any of them
/// starts; points run concurrently and rows come back in `values` order.
pub fn run_sweep(base: &ScenarioConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<ResultRow>> {
    let points = sweep_points(base, axis, values)?;
    let results = points
        .par_iter()
        .zip(values.par_iter())
        .map(|(c, &v)| run_point(c).map_err(|e| named(axis, v, e)))
        .collect::<Result<Vec<_>>>()?;
    Ok(results.into_iter().flatten().collect())
}

/// One user's view of an evaluation transmission: sent symbols, ZF output
/// and (if the refiner is on) the refined estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrace {
    pub x: Vec<Complex64>,
    pub r_eq: Vec<Complex64>,
    pub x_hat: Option<Vec<Complex64>>,
}

/// Trace of evaluation transmission `frame_index` exactly as `run_point`
/// would see it.
pub fn trace_signals(
    config: &ScenarioConfig,
    frame_index: u64,
    user: usize,
) -> Result<SignalTrace> {
    check_trace_request(config, frame_index, user)?;
    trace_prepared(config, &prepare(config)?, frame_index, user)
}

fn check_trace_request(config: &ScenarioConfig, frame_index: u64, user: usize) -> Result<()> {
    if user >= config.m {
        return Err(Error::config(format!(
            "user {user} out of range for {} users",
            config.m
        )));
    }
    if frame_index >= config.frames as u64 {
        return Err(Error::config(format!(
            "frame {frame_index} out of range for {} frames",
            config.frames
        )));
    }
    Ok(())
}

/// Like [`trace_signals`] for an already prepared scenario.
pub fn trace_prepared(
    config: &ScenarioConfig,
    prepared: &Prepared,
    frame_index: u64,
    user: usize,
) -> Result<SignalTrace> {
    check_trace_request(config, frame_index, user)?;
    let mut obs = eval_observations(&prepared.link, config.seed, frame_index)?;
    let o = obs.swap_remove(user);
    let x_hat = match &prepared.model {
        Some(model) => Some(
            model
                .forward(&batch_from_observations([&o]))?
                .swap_remove(0),
        ),
        None => None,
    };
    Ok(SignalTrace {
        x: o.tx.symbols,
        r_eq: o.eq.r_eq,
        x_hat,
    })
}
