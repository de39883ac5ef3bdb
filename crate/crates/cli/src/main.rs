#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
mod grids;
mod manifest;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use hdkde::config::{from_json, DensityConfig, SweepConfig};
use hdkde::density::{make_bump, validate, PerturbedDensity, TrueDensity, ValidationGrid};
use hdkde::estimator::{fit, BandwidthPolicy};
use hdkde::kernel::{verify_order, Kernel1D, ProductKernel, DEFAULT_MOMENT_TOL};
use hdkde::lower_bound::{build_certificate, CertificateInputs, DEFAULT_ALPHA, DEFAULT_MAX_WORDS};
use hdkde::rates::{log_minimax_rate, threshold_from_log, DimSchedule};
use hdkde::risk::{fit_slope, plot_rows, rate_sweep, read_rows};
use hdkde::sample::Sample;

use error::{CliError, CliResult};
use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "hdkde", version, about = "Kernel density estimation experiments in growing dimension")]
struct Cli {
    /// Worker threads for parallel sections; results do not depend on it.
    #[arg(long, global = true, env = "HDKDE_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the moment conditions of a kernel.
    VerifyKernel(VerifyKernelArgs),
    /// Validate a density config and optionally draw a sample from it.
    DensityCheck(DensityCheckArgs),
    /// Evaluate a kernel density estimate on a grid of points.
    Estimate(EstimateArgs),
    /// Monte Carlo risk over an (n, d) grid.
    Sweep(SweepArgs),
    /// Fit the log-log slope of a sweep table.
    Slope(SlopeArgs),
    /// Emit (log n, log error, theory) rows for plotting.
    Plotdata(PlotdataArgs),
    /// Build a minimax lower-bound certificate.
    LowerBound(LowerBoundArgs),
    /// Tabulate the rate along several dimension schedules.
    ConsistencyTable(ConsistencyArgs),
}

#[derive(Args, Serialize)]
struct VerifyKernelArgs {
    #[arg(long)]
    kernel: String,
    #[arg(long)]
    order: usize,
    #[arg(long, default_value_t = DEFAULT_MOMENT_TOL)]
    tol: f64,
    /// Also write the report here (with a manifest).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct DensityCheckArgs {
    #[arg(long)]
    config: PathBuf,
    /// Draw this many observations.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination for the sample.
    #[arg(long, requires = "sample")]
    sample_out: Option<PathBuf>,
    /// JSON destination for the report; stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct EstimateArgs {
    /// CSV sample, one row per observation.
    #[arg(long)]
    sample: PathBuf,
    #[arg(long, default_value = "epanechnikov")]
    kernel: String,
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    /// Oracle constant: h = A (d^2 n)^(-1/(2 beta + d)).
    #[arg(long = "A", default_value_t = 1.0)]
    a: f64,
    /// Fixed bandwidth, overriding the oracle rule.
    #[arg(long)]
    h: Option<f64>,
    /// `lo:hi:count` for every axis, or one such spec per axis separated by commas.
    #[arg(long, allow_hyphen_values = true)]
    grid: String,
    #[arg(long)]
    positive_part: Option<bool>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct SlopeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct PlotdataArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct LowerBoundArgs {
    #[arg(long)]
    n: f64,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_WORDS)]
    max_words: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ConsistencyArgs {
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    /// `b^a..b^c[:step]` or a comma list such as `1e3,1e6,2^40`.
    #[arg(long)]
    n_grid: String,
    /// c in the sub-threshold schedule floor(c * threshold).
    #[arg(long, default_value_t = 0.5)]
    fraction: f64,
    #[arg(long, default_value_t = 1)]
    fixed_d: usize,
    #[arg(long)]
    out: PathBuf,
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Input { path: path.into(), source })
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Output { path: path.into(), source })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|source| CliError::Output { path: path.into(), source })
}

fn flush(mut w: BufWriter<File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|source| CliError::Output { path: path.into(), source })
}

fn to_value<T: Serialize>(v: &T) -> CliResult<Value> {
    Ok(serde_json::to_value(v)?)
}

fn manifest(command: &str, config: Value, seed: u64, artifacts: &[&Path]) -> CliResult<()> {
    let m = RunManifest::new(command, config, seed, artifacts.iter().map(|p| p.to_path_buf()).collect());
    m.write_beside(artifacts[0])?;
    Ok(())
}

fn verify_kernel(args: &VerifyKernelArgs) -> CliResult<()> {
    let kernel = Kernel1D::from_name(&args.kernel)?;
    let report = verify_order(&kernel, args.order, args.tol)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(out) = &args.out {
        write_json(out, &report)?;
        manifest("verify-kernel", to_value(args)?, 0, &[out])?;
    }
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{} does not have order {}", args.kernel, args.order)))
    }
}

fn density_check(args: &DensityCheckArgs) -> CliResult<()> {
    let cfg: DensityConfig = from_json(&read_text(&args.config)?)?;
    let density = cfg.build()?;
    let perturbed = match &density {
        TrueDensity::Perturbed(f) => f.clone(),
        // f_0 is the member with no active cell
        TrueDensity::Base(b) => PerturbedDensity::new(*b, cfg.params()?, 1, vec![false; 1], make_bump(cfg.beta)?)?,
    };
    let validity = validate(&perturbed, &ValidationGrid::default())?;
    let mut report = json!({
        "density": cfg,
        "warning": perturbed.warning(),
        "envelope": perturbed.envelope(),
        "validity": validity,
    });
    if let Some(n) = args.sample {
        let sample = density.sample(n, args.seed)?;
        report["sample_size"] = json!(n);
        report["sample_seed"] = json!(args.seed);
        if let Some(path) = &args.sample_out {
            let mut w = create(path)?;
            sample
                .write_csv(&mut w)
                .map_err(|source| CliError::Output { path: path.clone(), source })?;
            flush(w, path)?;
        }
    }
    match &args.out {
        Some(out) => {
            write_json(out, &report)?;
            let mut artifacts: Vec<&Path> = vec![out];
            if let Some(s) = &args.sample_out {
                artifacts.push(s);
            }
            let config = json!({"density": cfg, "sample": args.sample, "seed": args.seed});
            manifest("density-check", config, args.seed, &artifacts)?;
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    if validity.passed {
        Ok(())
    } else {
        Err(CliError::Failed("density failed validation".into()))
    }
}

fn estimate(args: &EstimateArgs) -> CliResult<()> {
    let file = File::open(&args.sample).map_err(|source| CliError::Input { path: args.sample.clone(), source })?;
    let sample = Sample::read_csv(BufReader::new(file))?;
    let d = sample.dim();
    let kernel = ProductKernel::new(Kernel1D::from_name(&args.kernel)?, d)?;
    let policy = match args.h {
        Some(h_fixed) => BandwidthPolicy::Fixed { h_fixed },
        None => BandwidthPolicy::Oracle { a: args.a },
    };
    let mut model = fit(&sample, kernel, &policy, args.beta)?;
    if let Some(on) = args.positive_part {
        model = model.with_positive_part(on);
    }
    let points = grids::product(&grids::parse_point_grid(&args.grid, d)?);
    let flat: Vec<f64> = points.iter().flatten().copied().collect();
    let values = model.evaluate_batch(&Sample::new(d, flat)?)?;
    let mut w = csv::Writer::from_writer(create(&args.out)?);
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.push("value".into());
    w.write_record(&header)?;
    for (p, v) in points.iter().zip(&values) {
        let mut record: Vec<String> = p.iter().map(f64::to_string).collect();
        record.push(v.to_string());
        w.write_record(&record)?;
    }
    w.flush().map_err(|source| CliError::Output { path: args.out.clone(), source })?;
    let mut config = to_value(args)?;
    config["h_resolved"] = json!(model.bandwidth());
    config["sample_digest"] = json!(manifest::digest(&json!(sample.as_slice())));
    manifest("estimate", config, 0, &[&args.out])
}

fn sweep(args: &SweepArgs) -> CliResult<()> {
    let cfg: SweepConfig = from_json(&read_text(&args.config)?)?;
    cfg.validate()?;
    let table = rate_sweep(&cfg)?;
    let w = create(&args.out)?;
    table.write_csv(w)?;
    manifest("sweep", to_value(&cfg)?, cfg.seed, &[&args.out])?;
    if table.failures.is_empty() {
        Ok(())
    } else {
        let msgs: Vec<String> = table.failures.iter().map(|f| format!("{f:?}")).collect();
        Err(CliError::Failed(format!("{} cells failed: {}", msgs.len(), msgs.join("; "))))
    }
}

fn read_table(path: &Path) -> CliResult<Vec<hdkde::risk::SweepRow>> {
    let file = File::open(path).map_err(|source| CliError::Input { path: path.into(), source })?;
    Ok(read_rows(BufReader::new(file))?)
}

fn slope(args: &SlopeArgs) -> CliResult<()> {
    let fit = fit_slope(&read_table(&args.input)?, args.d)?;
    println!("{}", serde_json::to_string_pretty(&fit)?);
    if let Some(out) = &args.out {
        write_json(out, &fit)?;
        manifest("slope", to_value(args)?, 0, &[out])?;
    }
    Ok(())
}

fn plotdata(args: &PlotdataArgs) -> CliResult<()> {
    let rows = plot_rows(&read_table(&args.input)?, args.d)?;
    let mut w = csv::Writer::from_writer(create(&args.out)?);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| CliError::Output { path: args.out.clone(), source })?;
    manifest("plotdata", to_value(args)?, 0, &[&args.out])
}

fn lower_bound(args: &LowerBoundArgs) -> CliResult<()> {
    let inputs = CertificateInputs {
        n: args.n,
        d: args.d,
        beta: args.beta,
        c: args.c,
        sigma: args.sigma,
        p: args.p,
        max_words: args.max_words,
        seed: args.seed,
        alpha: args.alpha,
    };
    let cert = build_certificate(&inputs)?;
    write_json(&args.out, &cert)?;
    manifest("lower-bound", to_value(&inputs)?, args.seed, &[&args.out])?;
    println!(
        "validity {} separation {} kl {} (m = {}, {} words)",
        cert.conditions.validity, cert.conditions.separation, cert.conditions.kl, cert.m_chosen, cert.codebook_size
    );
    if cert.passed {
        Ok(())
    } else {
        Err(CliError::Failed(format!("certificate failed: {}", cert.failures.join("; "))))
    }
}

#[derive(Serialize)]
struct ConsistencyRow {
    ln_n: f64,
    n: f64,
    threshold: f64,
    d_fixed: usize,
    psi_fixed: f64,
    d_sub: usize,
    psi_sub: f64,
    d_log: usize,
    psi_log: f64,
}

fn consistency_table(args: &ConsistencyArgs) -> CliResult<()> {
    if !(args.beta > 0.0) || !(args.fraction > 0.0) || args.fixed_d == 0 {
        return Err(CliError::Usage("beta and fraction must be positive, fixed-d at least 1".into()));
    }
    let grid = grids::parse_n_grid(&args.n_grid)?;
    let schedules = [
        DimSchedule::Constant { d: args.fixed_d },
        DimSchedule::ThresholdFraction { c: args.fraction },
        DimSchedule::LogN,
    ];
    let mut w = csv::Writer::from_writer(create(&args.out)?);
    for &ln_n in &grid {
        let [(d_fixed, psi_fixed), (d_sub, psi_sub), (d_log, psi_log)] = schedules.map(|s| {
            let d = s.dim(ln_n, args.beta);
            (d, log_minimax_rate(ln_n, d, args.beta).exp())
        });
        w.serialize(ConsistencyRow {
            ln_n,
            n: ln_n.exp(),
            threshold: threshold_from_log(ln_n, args.beta),
            d_fixed,
            psi_fixed,
            d_sub,
            psi_sub,
            d_log,
            psi_log,
        })?;
    }
    w.flush().map_err(|source| CliError::Output { path: args.out.clone(), source })?;
    manifest("consistency-table", to_value(args)?, 0, &[&args.out])
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match &cli.command {
        Command::VerifyKernel(a) => verify_kernel(a),
        Command::DensityCheck(a) => density_check(a),
        Command::Estimate(a) => estimate(a),
        Command::Sweep(a) => sweep(a),
        Command::Slope(a) => slope(a),
        Command::Plotdata(a) => plotdata(a),
        Command::LowerBound(a) => lower_bound(a),
        Command::ConsistencyTable(a) => consistency_table(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hdkde: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
