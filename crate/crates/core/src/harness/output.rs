use std::fmt::Write as _;
use std::path::Path;

use super::config::ScenarioConfig;
use super::run::{trace_signals, ResultRow, SignalTrace, SweepAxis};
use crate::error::{Error, Result};

pub const RESULTS_CSV_HEADER: &str =
    "sf,es_n0_db,m,user,system,symbol_mse,evm_db,clamp_count,frames,wall_time_s";
pub const SIGNALS_CSV_HEADER: &str = "k,x_re,x_im,r_eq_re,r_eq_im,xhat_re,xhat_im";

/// Measured reals carry 13 significant digits.
pub fn real(v: f64) -> String {
    format!("{v:.12e}")
}

pub fn format_results(metadata: &str, rows: &[ResultRow]) -> String {
    let mut out = String::from(metadata);
    out.push_str(RESULTS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.sf,
            r.es_n0_db,
            r.m,
            r.user,
            r.system,
            real(r.symbol_mse),
            real(r.evm_db),
            r.clamp_count,
            r.frames,
            real(r.wall_time_s)
        );
    }
    out
}

/// Metadata block for a sweep: the base configuration, then the axis, its
/// values and each point's derived seed.
pub fn sweep_metadata(base: &ScenarioConfig, axis: SweepAxis, values: &[f64]) -> String {
    let mut out = base.metadata();
    let vals: Vec<String> = values.iter().map(ToString::to_string).collect();
    let _ = writeln!(out, "# sweep.axis = {axis}");
    let _ = writeln!(out, "# sweep.values = [{}]", vals.join(", "));
    for v in values {
        let _ = writeln!(
            out,
            "# sweep.seed[{v}] = {}",
            axis.point_seed(base.seed, *v)
        );
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn format_signals(metadata: &str, trace: &SignalTrace) -> String {
    let mut out = String::from(metadata);
    out.push_str(SIGNALS_CSV_HEADER);
    out.push('\n');
    for (k, (x, r)) in trace.x.iter().zip(&trace.r_eq).enumerate() {
        let (hr, hi) = match &trace.x_hat {
            Some(h) => (real(h[k].re), real(h[k].im)),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            "{k},{},{},{},{},{hr},{hi}",
            real(x.re),
            real(x.im),
            real(r.re),
            real(r.im)
        );
    }
    out
}

/// Writes the symbol-level trace of one evaluation frame. Refined columns are
/// empty when the refiner is disabled.
pub fn dump_signals(
    config: &ScenarioConfig,
    frame_index: u64,
    user: usize,
    path: &Path,
) -> Result<()> {
    let trace = trace_signals(config, frame_index, user)?;
    write_signals(config, frame_index, user, &trace, path)
}

pub fn write_signals(
    config: &ScenarioConfig,
    frame_index: u64,
    user: usize,
    trace: &SignalTrace,
    path: &Path,
) -> Result<()> {
    let mut meta = config.metadata();
    let _ = writeln!(meta, "# frame = {frame_index}");
    let _ = writeln!(meta, "# user = {user}");
    write_text(path, &format_signals(&meta, trace))
}
