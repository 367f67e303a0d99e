use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ssrn_core::harness::{
    evaluate_prepared, format_results, prepare, run_sweep, selftest, sweep_metadata,
    trace_prepared, write_signals, write_text, Prepared, ScenarioConfig, SourceSpec, SrnSettings,
    SweepAxis,
};
use ssrn_core::link::FadingKind;
use ssrn_core::srn::{load_checkpoint, save_checkpoint};
use ssrn_core::{Error, PowerTerm, Result};

#[derive(Parser)]
#[command(
    name = "ssrn",
    version,
    about = "Sequence-spread link simulator with a signal refining network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario or a sweep along one axis and write the results CSV.
    Simulate(SimulateArgs),
    /// Write the symbol-level trace of one evaluation frame.
    DumpSignals(DumpArgs),
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fading {
    Rayleigh,
    Identity,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Spread factor(s); several values sweep SF.
    #[arg(long, value_delimiter = ',', default_value = "4")]
    sf: Vec<usize>,
    /// Es/N0 in dB; repeat or comma-separate to sweep.
    #[arg(
        long = "snr-db",
        value_delimiter = ',',
        allow_hyphen_values = true,
        default_value = "15"
    )]
    snr_db: Vec<f64>,
    /// Number of users; several values sweep M.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    users: Vec<usize>,
    /// Probability that a raw code chip is non-zero.
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    /// Evaluation transmissions per point.
    #[arg(long, default_value_t = 2000)]
    frames: usize,
    /// Symbols per frame.
    #[arg(long, default_value_t = 240)]
    symbols: usize,
    /// Fading coherence in symbols.
    #[arg(long, default_value_t = 16)]
    coherence: usize,
    #[arg(long = "pilot-fraction", default_value_t = 0.25)]
    pilot_fraction: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Train and evaluate the refiner (default).
    #[arg(long, overrides_with = "no_srn")]
    srn: bool,
    /// Baseline only.
    #[arg(long = "no-srn", overrides_with = "srn")]
    no_srn: bool,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Fresh training transmissions per epoch.
    #[arg(long = "frames-per-epoch", default_value_t = 128)]
    frames_per_epoch: usize,
    /// Transmissions per optimizer step.
    #[arg(long = "batch-size", default_value_t = 8)]
    batch_size: usize,
    #[arg(long = "d-model", default_value_t = 256)]
    d_model: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long = "ff-width", default_value_t = 256)]
    ff_width: usize,
    /// Feature saturation level, or `off`.
    #[arg(long = "input-clip", default_value = "4")]
    input_clip: String,
    /// Symbol frames CSV to transmit instead of random symbols.
    #[arg(long = "symbols-file")]
    symbols_file: Option<PathBuf>,
    /// Mixture weights.
    #[arg(
        long = "gm-weights",
        value_delimiter = ',',
        default_value = "0.9,0.05,0.05"
    )]
    gm_weights: Vec<f64>,
    /// Mixture powers (`SF*N0` or multiples of N0).
    #[arg(
        long = "gm-powers",
        value_delimiter = ',',
        default_value = "SF*N0,30*N0,50*N0"
    )]
    gm_powers: Vec<String>,
    /// Disable chip noise.
    #[arg(long)]
    noiseless: bool,
    #[arg(long, value_enum, default_value = "rayleigh")]
    fading: Fading,
    /// Independently drawn codes instead of the orthogonal construction.
    #[arg(long = "random-codes")]
    random_codes: bool,
    /// Use this refiner checkpoint instead of training.
    #[arg(long = "load-model")]
    load_model: Option<PathBuf>,
    /// Save the trained refiner (single-point runs only).
    #[arg(long = "save-model")]
    save_model: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Results CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Evaluation frame index.
    #[arg(long, default_value_t = 0)]
    frame: u64,
    #[arg(long, default_value_t = 0)]
    user: usize,
    #[arg(long)]
    out: PathBuf,
}

type Sweep = (SweepAxis, Vec<f64>);

impl ScenarioArgs {
    /// Base configuration plus the sweep, if any axis has several values.
    fn resolve(&self) -> Result<(ScenarioConfig, Option<Sweep>)> {
        let input_clip = match self.input_clip.as_str() {
            "off" | "none" => None,
            v => Some(
                v.parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad --input-clip `{v}`")))?,
            ),
        };
        let gm_powers = self
            .gm_powers
            .iter()
            .map(|p| p.parse::<PowerTerm>())
            .collect::<Result<Vec<_>>>()?;
        let srn = (!self.no_srn).then(|| {
            let mut s = SrnSettings {
                d_model: self.d_model,
                n_heads: self.heads,
                ff_width: self.ff_width,
                input_clip,
                ..SrnSettings::default()
            };
            s.train.epochs = self.epochs;
            s.train.lr = self.lr;
            s.train.frames_per_epoch = self.frames_per_epoch;
            s.train.batch_size = self.batch_size;
            s
        });
        let base = ScenarioConfig {
            m: self.users[0],
            sf: self.sf[0],
            density: self.density,
            es_n0_db: self.snr_db[0],
            frames: self.frames,
            k: self.symbols,
            coherence: self.coherence,
            pilot_fraction: self.pilot_fraction,
            gm_weights: self.gm_weights.clone(),
            gm_powers,
            noiseless: self.noiseless,
            fading: match self.fading {
                Fading::Rayleigh => FadingKind::Rayleigh,
                Fading::Identity => FadingKind::Identity,
            },
            orthogonal: !self.random_codes,
            seed: self.seed,
            srn,
            symbol_source: self
                .symbols_file
                .clone()
                .map_or(SourceSpec::Random, SourceSpec::File),
        };

        let axes = [
            (
                SweepAxis::Sf,
                self.sf.iter().map(|&v| v as f64).collect::<Vec<_>>(),
            ),
            (SweepAxis::EsN0Db, self.snr_db.clone()),
            (SweepAxis::M, self.users.iter().map(|&v| v as f64).collect()),
        ];
        let mut swept = axes.into_iter().filter(|(_, v)| v.len() > 1);
        let sweep = swept.next();
        if swept.next().is_some() {
            return Err(Error::Config(
                "only one of --sf, --snr-db, --users may list several values".into(),
            ));
        }
        if sweep.is_some() && (self.save_model.is_some() || self.load_model.is_some()) {
            return Err(Error::Config(
                "--save-model and --load-model need a single scenario point".into(),
            ));
        }
        if self.load_model.is_some() && base.srn.is_none() {
            return Err(Error::Config("--load-model conflicts with --no-srn".into()));
        }
        Ok((base, sweep))
    }

    fn prepare(&self, config: &ScenarioConfig) -> Result<Prepared> {
        let prepared = match &self.load_model {
            Some(path) => Prepared::with_model(config, load_checkpoint(path)?)?,
            None => prepare(config)?,
        };
        if let Some(report) = &prepared.report {
            eprintln!(
                "refiner trained: held-out MSE {:.4} -> {:.4} (zero-forcing {:.4})",
                report.initial_holdout_mse, report.final_holdout_mse, report.baseline_holdout_mse
            );
            if !report.beats_baseline() {
                eprintln!("warning: refiner did not beat zero-forcing on held-out data");
            }
        }
        if let (Some(path), Some(model)) = (&self.save_model, &prepared.model) {
            save_checkpoint(path, model)?;
        }
        Ok(prepared)
    }
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let (base, sweep) = args.scenario.resolve()?;
    let text = match &sweep {
        Some((axis, values)) => {
            let start = Instant::now();
            let rows = run_sweep(&base, *axis, values)?;
            eprintln!(
                "{} points done in {:.1}s",
                values.len(),
                start.elapsed().as_secs_f64()
            );
            format_results(&sweep_metadata(&base, *axis, values), &rows)
        }
        None => {
            base.validate()?;
            let start = Instant::now();
            let prepared = args.scenario.prepare(&base)?;
            let rows = evaluate_prepared(&base, &prepared, start)?;
            eprintln!("done in {:.1}s", start.elapsed().as_secs_f64());
            format_results(&base.metadata(), &rows)
        }
    };
    match &args.out {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dump(args: &DumpArgs) -> Result<()> {
    let (config, sweep) = args.scenario.resolve()?;
    if sweep.is_some() {
        return Err(Error::Config(
            "dump-signals takes a single scenario point".into(),
        ));
    }
    config.validate()?;
    if args.frame >= config.frames as u64 {
        return Err(Error::Config(format!(
            "frame {} out of range for {} frames",
            args.frame, config.frames
        )));
    }
    let prepared = args.scenario.prepare(&config)?;
    let trace = trace_prepared(&config, &prepared, args.frame, args.user)?;
    write_signals(&config, args.frame, args.user, &trace, &args.out)
}

fn run_selftest() -> ExitCode {
    let checks = selftest::run_selftest();
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!(
        "{} of {} checks passed",
        checks.len() - failed,
        checks.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_numeric() {
        ExitCode::from(3)
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::DumpSignals(args) => dump(args),
        Command::Selftest => return run_selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
