//! The `smlm` command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error
//! (unreadable or malformed input, failed checks), 3 infeasible matching.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::Serialize;

use crate::datasets::{
    locs_to_predictions, locs_to_records, mock_predict, predictions_to_locs, records_to_locs,
    simulate_sequence, temporal_bin, FrameRecord, MockParams, SimulationParams,
};
use crate::error::{Error, Result};
use crate::exec::{with_threads, Exec};
use crate::metrics::{
    aggregate, aggregate_efficiency, evaluate, frc, parse_grid, threshold_sweep, Aggregate,
    Efficiency, FrcSplit, RmseMode, SweepPoint,
};
use crate::otloss::{check_gradients, random_instance, GradCheckReport, LossMode};
use crate::rng::{stream, Domain};
use crate::storage::{
    load_config, read_locs, read_stack, write_locs, write_stack, Config, LocTable,
};
use crate::transport::{hungarian, sinkhorn_log, CostMatrix, SinkhornConfig};

#[derive(Debug, Parser)]
#[command(
    name = "smlm",
    version,
    about = "SMLM simulation, matching loss and evaluation"
)]
pub struct Cli {
    /// Worker threads for data-parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Suppress informational messages on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// JSON configuration file; omitted sections take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a frame stack and its ground truth.
    Simulate(SimulateArgs),
    /// Temporally bin a stack, re-drawing camera noise on each group.
    Bin(BinArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Sweep the detection-score threshold and pick the best by 3-D efficiency.
    Sweep(SweepArgs),
    /// Fourier ring correlation of a localization table.
    Frc(FrcArgs),
    /// Finite-difference check of the loss gradients on random instances.
    Losscheck(LosscheckArgs),
    /// Perturb ground truth into predictions with known error rates.
    Mock(MockArgs),
    /// Time the assignment solvers on random costs (timings go to stderr).
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub frames: usize,
    #[arg(long)]
    pub seed: u64,
    /// Raw stack path; the header goes to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
}

#[derive(Debug, Args)]
pub struct BinArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub factor: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub out_gt: PathBuf,
}

#[derive(Debug, Args)]
pub struct GateArgs {
    /// Lateral gate per axis (nm); default from the configuration (250).
    #[arg(long)]
    pub tol_lat: Option<f64>,
    /// Axial gate (nm); default from the configuration (500).
    #[arg(long)]
    pub tol_ax: Option<f64>,
    #[arg(long, value_enum)]
    pub rmse: Option<RmseArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RmseArg {
    PerFrame,
    Pooled,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[command(flatten)]
    pub gates: GateArgs,
    /// Report path; stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// `lo:hi:step`
    #[arg(long, default_value = "0:1:0.01")]
    pub grid: String,
    #[command(flatten)]
    pub gates: GateArgs,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also write the curve as CSV.
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    RandomHalf,
    EvenOddFrame,
}

#[derive(Debug, Args)]
pub struct FrcArgs {
    #[arg(long)]
    pub pred: PathBuf,
    /// Histogram pixel (nm); default from the configuration (10).
    #[arg(long)]
    pub pixel: Option<f64>,
    #[arg(long, value_enum, default_value = "random-half")]
    pub split: SplitArg,
    #[arg(long)]
    pub seed: u64,
    /// Curve as CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Unrolled,
    Envelope,
}

#[derive(Debug, Args)]
pub struct LosscheckArgs {
    #[arg(long)]
    pub seed: u64,
    /// `d,N`: candidates and targets per instance.
    #[arg(long, default_value = "16,5")]
    pub sizes: String,
    #[arg(long, value_enum, default_value = "unrolled")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 10)]
    pub instances: usize,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct MockArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub p_miss: f64,
    #[arg(long, default_value_t = 0.0)]
    pub fp_rate: f64,
    /// `sx,sy,sz` in nm.
    #[arg(long, default_value = "0,0,0")]
    pub sigma_xyz: String,
    #[arg(long, default_value_t = 0.0)]
    pub sigma_photons: f64,
    /// Cover frames `0..frames` even where the ground truth is empty.
    #[arg(long)]
    pub frames: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub seed: u64,
    /// Comma-separated matrix sides.
    #[arg(long, default_value = "16,32,64")]
    pub sizes: String,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    run(cli)
}

pub fn run(cli: Cli) -> i32 {
    let threads = cli.threads;
    match with_threads(threads, || dispatch(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        Error::Infeasible(_) | Error::Capacity(..) => 3,
        Error::OutOfRange { .. }
        | Error::Parse { .. }
        | Error::PayloadSize { .. }
        | Error::Schema { .. }
        | Error::Io { .. } => 2,
    }
}

struct Ctx {
    config: Config,
    quiet: bool,
}

impl Ctx {
    fn info(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => load_config(p)?,
        None => Config::default(),
    };
    let ctx = Ctx {
        config,
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Bin(a) => cmd_bin(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
        Command::Sweep(a) => cmd_sweep(&ctx, a),
        Command::Frc(a) => cmd_frc(&ctx, a),
        Command::Losscheck(a) => cmd_losscheck(&ctx, a),
        Command::Mock(a) => cmd_mock(&ctx, a),
        Command::Bench(a) => cmd_bench(&ctx, a),
    }
}

fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serialises");
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn read_table(path: &Path, ctx: &Ctx) -> Result<LocTable> {
    let t = read_locs(path)?;
    if !t.unknown_columns.is_empty() {
        ctx.info(format!(
            "warning: {}: ignored {} unknown column(s): {}",
            path.display(),
            t.unknown_columns.len(),
            t.unknown_columns.join(", ")
        ));
    }
    Ok(t)
}

/// Records for frames `0..n`, empty where the table has no rows.
fn dense_records(table: &LocTable, n: u64) -> Vec<FrameRecord> {
    let mut out: Vec<FrameRecord> = (0..n)
        .map(|frame_index| FrameRecord {
            frame_index,
            activations: Vec::new(),
        })
        .collect();
    for r in locs_to_records(&table.rows) {
        if let Some(slot) = out.get_mut(r.frame_index as usize) {
            *slot = r;
        }
    }
    out
}

fn cmd_simulate(ctx: &Ctx, a: &SimulateArgs) -> Result<()> {
    let cfg = &ctx.config;
    let psf = cfg.psf_model()?;
    let camera = cfg.camera()?;
    let params = SimulationParams {
        spec: &cfg.sampling,
        psf: &psf,
        camera: &camera,
        geometry: cfg.geometry()?,
        jitter_sigma: cfg.jitter_sigma,
    };
    let sim = simulate_sequence(a.frames, &params, a.seed)?;
    write_stack(&a.out, cfg.camera.clone(), &sim.frames)?;
    write_locs(&a.gt, &records_to_locs(&sim.records))?;
    let n: usize = sim.records.iter().map(|r| r.activations.len()).sum();
    ctx.info(format!("simulated {} frames, {n} activations", a.frames));
    Ok(())
}

#[derive(Serialize)]
struct BinReport {
    input_frames: usize,
    factor: usize,
    output_frames: usize,
    dropped_frames: usize,
    clamp_bias_photons: f64,
}

fn cmd_bin(ctx: &Ctx, a: &BinArgs) -> Result<()> {
    let (header, frames) = read_stack(&a.input)?;
    if a.factor == 0 || a.factor > frames.len() {
        return Err(Error::Config(format!(
            "binning factor {} must be between 1 and the frame count {}",
            a.factor,
            frames.len()
        )));
    }
    let cam = header.camera.resolve()?;
    let gt = dense_records(&read_table(&a.gt, ctx)?, frames.len() as u64);
    let binned = temporal_bin(&frames, &gt, a.factor, &cam, a.seed)?;
    write_stack(&a.out, header.camera.clone(), &binned.frames)?;
    write_locs(&a.out_gt, &records_to_locs(&binned.records))?;
    if binned.dropped_frames > 0 {
        ctx.info(format!(
            "warning: dropped {} trailing frame(s)",
            binned.dropped_frames
        ));
    }
    emit_json(
        &BinReport {
            input_frames: frames.len(),
            factor: a.factor,
            output_frames: binned.frames.len(),
            dropped_frames: binned.dropped_frames,
            clamp_bias_photons: binned.clamp_bias_photons,
        },
        None,
    )
}

fn gates(ctx: &Ctx, g: &GateArgs) -> Result<(crate::metrics::MatchSpec, RmseMode)> {
    let mut spec = ctx.config.match_spec();
    if let Some(t) = g.tol_lat {
        spec.tol_lat = t;
    }
    if let Some(t) = g.tol_ax {
        spec.tol_ax = t;
    }
    spec.validate()?;
    let mode = match g.rmse {
        Some(RmseArg::PerFrame) => RmseMode::PerFrame,
        Some(RmseArg::Pooled) => RmseMode::Pooled,
        None => ctx.config.metrics.rmse_mode,
    };
    Ok((spec, mode))
}

#[derive(Serialize)]
struct EvaluateReport {
    tol_lat_nm: f64,
    tol_ax_nm: f64,
    rmse_mode: RmseMode,
    #[serde(flatten)]
    aggregate: Aggregate,
    efficiency: Option<Efficiency>,
}

fn cmd_evaluate(ctx: &Ctx, a: &EvaluateArgs) -> Result<()> {
    let (spec, mode) = gates(ctx, &a.gates)?;
    let preds = locs_to_predictions(&read_table(&a.pred, ctx)?.rows);
    let gt = locs_to_records(&read_table(&a.gt, ctx)?.rows);
    let scores = evaluate(&preds, &gt, &spec, Exec::default());
    let agg = aggregate(&scores, mode);
    let report = EvaluateReport {
        tol_lat_nm: spec.tol_lat,
        tol_ax_nm: spec.tol_ax,
        rmse_mode: mode,
        aggregate: agg,
        efficiency: aggregate_efficiency(&agg, &ctx.config.weights()),
    };
    emit_json(&report, a.report.as_deref())
}

#[derive(Serialize)]
struct SweepReport {
    best_tau: f64,
    best: SweepPoint,
    curve: Vec<SweepPoint>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn cmd_sweep(ctx: &Ctx, a: &SweepArgs) -> Result<()> {
    let (spec, mode) = gates(ctx, &a.gates)?;
    let table = read_table(&a.pred, ctx)?;
    if !table.has_score && !table.rows.is_empty() {
        return Err(Error::Schema {
            path: a.pred.clone(),
            message: "predictions need a `score` column for a threshold sweep".into(),
        });
    }
    let preds = locs_to_predictions(&table.rows);
    let gt = locs_to_records(&read_table(&a.gt, ctx)?.rows);
    let taus = parse_grid(&a.grid)?;
    let sweep = threshold_sweep(
        &preds,
        &gt,
        &spec,
        &ctx.config.weights(),
        mode,
        &taus,
        Exec::default(),
    )?;
    if let Some(p) = &a.curve {
        let mut text = String::from("tau,precision,recall,jaccard,e_3d\n");
        for q in &sweep.curve {
            text += &format!(
                "{},{},{},{},{}\n",
                q.tau,
                opt(q.precision),
                opt(q.recall),
                opt(q.jaccard),
                opt(q.e_3d)
            );
        }
        std::fs::write(p, text).map_err(|e| Error::io(p, e))?;
    }
    let best = *sweep
        .curve
        .iter()
        .find(|q| q.tau == sweep.best_tau)
        .expect("best τ is on the curve");
    emit_json(
        &SweepReport {
            best_tau: sweep.best_tau,
            best,
            curve: sweep.curve,
        },
        a.report.as_deref(),
    )
}

#[derive(Serialize)]
struct FrcReport {
    localizations: usize,
    split: FrcSplit,
    pixel_nm: f64,
    threshold: f64,
    resolution_nm: f64,
    nyquist_limited: bool,
}

fn cmd_frc(ctx: &Ctx, a: &FrcArgs) -> Result<()> {
    let table = read_table(&a.pred, ctx)?;
    let pixel = a.pixel.unwrap_or(ctx.config.metrics.frc_pixel_nm);
    let split = match a.split {
        SplitArg::RandomHalf => FrcSplit::RandomHalf,
        SplitArg::EvenOddFrame => FrcSplit::EvenOddFrame,
    };
    let extent = ctx.config.geometry()?.extent();
    let r = frc(&table.rows, split, extent, pixel, a.seed)?;
    let mut text = String::from("frequency_per_nm,correlation\n");
    for (f, c) in &r.curve {
        text += &format!("{f},{c}\n");
    }
    std::fs::write(&a.out, text).map_err(|e| Error::io(&a.out, e))?;
    emit_json(
        &FrcReport {
            localizations: table.rows.len(),
            split,
            pixel_nm: pixel,
            threshold: crate::metrics::FRC_THRESHOLD,
            resolution_nm: r.resolution_nm,
            nyquist_limited: r.nyquist_limited,
        },
        a.report.as_deref(),
    )
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad {what} `{s}`")))
        })
        .collect()
}

fn cmd_losscheck(ctx: &Ctx, a: &LosscheckArgs) -> Result<()> {
    let sizes: Vec<usize> = parse_list(&a.sizes, "sizes")?;
    let [d, n] = sizes[..] else {
        return Err(Error::Config("--sizes takes `d,N`".into()));
    };
    if n > d || d == 0 {
        return Err(Error::Capacity(n, d));
    }
    let mut cfg = ctx.config.loss_config();
    cfg.mode = match a.mode {
        ModeArg::Unrolled => LossMode::Unrolled,
        ModeArg::Envelope => LossMode::Envelope,
    };
    if cfg.mode == LossMode::Envelope {
        // the envelope gradient is exact only for a converged plan
        cfg.sinkhorn = SinkhornConfig {
            epsilon: cfg.sinkhorn.epsilon.max(1.0),
            iters: cfg.sinkhorn.iters.max(20_000),
            tol: Some(1e-13),
            ..cfg.sinkhorn
        };
    }
    let results: Vec<Result<GradCheckReport>> = Exec::default().map_indexed(a.instances, |k| {
        let mut rng = stream(a.seed, Domain::LossCheck, k as u64);
        check_gradients(&random_instance(d, n, &mut rng), &cfg)
    });
    let mut out = String::new();
    out += &format!(
        "{:>8} {:>4} {:>4} {:>14} {:>10} {:>10} {:>10}  result\n",
        "instance", "d", "N", "value", "positions", "scores", "sigma"
    );
    let mut failures = 0;
    for (k, r) in results.into_iter().enumerate() {
        let r = r?;
        let pass = r.max() < a.tol;
        failures += usize::from(!pass);
        out += &format!(
            "{k:>8} {d:>4} {n:>4} {:>14.6e} {:>10.2e} {:>10.2e} {:>10.2e}  {}\n",
            r.value,
            r.positions,
            r.scores,
            r.sigma,
            if pass { "PASS" } else { "FAIL" }
        );
    }
    out += &format!(
        "{} of {} instances within {:e} ({:?} mode, ε = {:e}, {} iterations)\n",
        a.instances - failures,
        a.instances,
        a.tol,
        cfg.mode,
        cfg.sinkhorn.epsilon,
        cfg.sinkhorn.iters
    );
    print!("{out}");
    if failures > 0 {
        return Err(Error::Schema {
            path: "<losscheck>".into(),
            message: format!("{failures} gradient check(s) failed"),
        });
    }
    Ok(())
}

fn cmd_mock(ctx: &Ctx, a: &MockArgs) -> Result<()> {
    let sigma: Vec<f64> = parse_list(&a.sigma_xyz, "sigma-xyz")?;
    let [sx, sy, sz] = sigma[..] else {
        return Err(Error::Config("--sigma-xyz takes three values".into()));
    };
    let table = read_table(&a.gt, ctx)?;
    let gt = match a.frames {
        Some(n) => dense_records(&table, n),
        None => locs_to_records(&table.rows),
    };
    let params = MockParams {
        p_miss: a.p_miss,
        fp_rate: a.fp_rate,
        sigma_xyz: [sx, sy, sz],
        sigma_photons: a.sigma_photons,
        ..MockParams::default()
    };
    let preds = mock_predict(&gt, &params, &ctx.config.sampling, a.seed)?;
    write_locs(&a.out, &predictions_to_locs(&preds))
}

#[derive(Serialize)]
struct BenchRow {
    d: usize,
    reps: usize,
    mean_hungarian_cost: f64,
    mean_sinkhorn_value: f64,
}

fn cmd_bench(ctx: &Ctx, a: &BenchArgs) -> Result<()> {
    let sizes: Vec<usize> = parse_list(&a.sizes, "sizes")?;
    if a.reps == 0 || sizes.contains(&0) {
        return Err(Error::Config("sizes and reps must be positive".into()));
    }
    let mut rows = Vec::new();
    for &d in &sizes {
        let mut rng = stream(a.seed, Domain::Bench, d as u64);
        let costs: Vec<CostMatrix> = (0..a.reps)
            .map(|_| CostMatrix::from_fn(d, |_, _| rng.random::<f64>()))
            .collect::<Result<_>>()?;
        let t0 = Instant::now();
        let h: Vec<f64> = costs
            .iter()
            .map(|c| hungarian(c).map(|r| r.cost))
            .collect::<Result<_>>()?;
        let t_h = t0.elapsed();
        let cfg = ctx.config.loss_config().sinkhorn;
        let t1 = Instant::now();
        let s: Vec<f64> = costs
            .iter()
            .map(|c| sinkhorn_log(c, &cfg).map(|r| r.plan.dot(c)))
            .collect::<Result<_>>()?;
        let t_s = t1.elapsed();
        eprintln!(
            "d = {d:>4}: hungarian {:>10.1} µs/solve, sinkhorn ({} iterations) {:>10.1} µs/solve",
            t_h.as_secs_f64() * 1e6 / a.reps as f64,
            cfg.iters,
            t_s.as_secs_f64() * 1e6 / a.reps as f64
        );
        rows.push(BenchRow {
            d,
            reps: a.reps,
            mean_hungarian_cost: h.iter().sum::<f64>() / a.reps as f64,
            mean_sinkhorn_value: s.iter().sum::<f64>() / a.reps as f64,
        });
    }
    emit_json(&rows, None)
}
