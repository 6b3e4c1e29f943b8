//! Command-line front end for offline builds, sample solves, and the
//! Monte-Carlo / indicator / timing campaigns.
//!
//! Every campaign subcommand reads a TOML config, writes its tables as
//! CSV into the output directory, and drops a JSON run manifest (config
//! digest, package version, wall time) next to them.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use lodrp::coefficient::{derive_seed, realize, sample_defects};
use lodrp::experiments::{
    error_csv_rows, indicator_csv_rows, machine_context, manifest_for, oned_csv_rows,
    run_deterministic_baseline, run_indicator_study, run_mc, run_timing, write_csv,
    write_manifest, CampaignConfig, MachineContext, TimingReport,
};
use lodrp::offline::{build_offline, default_forcing, load_database, save_database};
use lodrp::oned::{deviation_study, StudyConfig};
use lodrp::online::{assemble_global, solve_coarse, upscale};
use lodrp::reference::{pglod_solve, relative_errors};
use lodrp::{Error, Result};

#[derive(Parser)]
#[command(
    name = "lodrp",
    version,
    about = "Offline-online multiscale solver for periodic coefficients with random defects"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Campaign config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the campaign seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for tables, databases, and manifests.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads.  Accepted for interface stability; execution is
    /// sequential, and results are bitwise identical for any value.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Build the offline database for a campaign and save it to disk.
    Offline(CommonArgs),
    /// Solve one sample end to end and report its errors against a
    /// fresh reference solve.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// Probability-grid index selecting the sampling probability.
        #[arg(long, default_value_t = 0)]
        p_index: usize,
        /// Sample index within the probability-grid entry.
        #[arg(long, default_value_t = 0)]
        sample: u64,
        /// Reuse a saved offline database instead of rebuilding it.
        #[arg(long)]
        db: Option<PathBuf>,
    },
    /// Monte-Carlo error campaign of the offline-online combination.
    Mc(CommonArgs),
    /// Error campaign of the frozen defect-free solution.
    Baseline(CommonArgs),
    /// Per-element error-indicator study.
    Indicator(CommonArgs),
    /// One-dimensional harmonic-mean deviation study.
    Oned(CommonArgs),
    /// Offline/online timing split with machine context.
    Timing(CommonArgs),
}

/// Everything the timing subcommand persists: the measurements plus the
/// machine they were taken on.
#[derive(serde::Serialize)]
struct TimingDocument {
    machine: MachineContext,
    config_sha256: String,
    report: TimingReport,
}

fn check_threads(threads: usize) -> Result<()> {
    if threads == 0 {
        return Err(Error::config("thread count must be at least 1".to_string()));
    }
    Ok(())
}

fn load_campaign(common: &CommonArgs) -> Result<CampaignConfig> {
    check_threads(common.threads)?;
    let mut cfg = CampaignConfig::from_file(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    fs::create_dir_all(&common.out)?;
    Ok(cfg)
}

fn finish(
    command: &str,
    common: &CommonArgs,
    config: &impl serde::Serialize,
    seed: u64,
    started: Instant,
    outputs: Vec<String>,
) -> Result<()> {
    let manifest = manifest_for(
        command,
        config,
        seed,
        started.elapsed().as_secs_f64(),
        outputs.clone(),
    )?;
    write_manifest(&common.out.join(format!("{command}.manifest.json")), &manifest)?;
    for name in &outputs {
        println!("wrote {}", common.out.join(name).display());
    }
    println!(
        "wrote {}  ({:.1} s)",
        common.out.join(format!("{command}.manifest.json")).display(),
        manifest.wall_seconds
    );
    Ok(())
}

fn cmd_offline(common: &CommonArgs) -> Result<()> {
    let cfg = load_campaign(common)?;
    let started = Instant::now();
    let mesh = cfg.mesh()?;
    let db = build_offline(&cfg.model(0.0)?, &mesh, cfg.m, cfg.kind(), default_forcing(cfg.d))?;
    let path = common.out.join("offline.lodb");
    save_database(&db, &path)?;
    println!(
        "offline database: {} coefficients, patch width {}, {} fine nodes per patch",
        db.coefficients.len(),
        db.m,
        db.correctors.first().map_or(0, |c| c.values.first().map_or(0, Vec::len)),
    );
    finish("offline", common, &cfg, cfg.seed, started, vec!["offline.lodb".to_string()])
}

fn cmd_solve(
    common: &CommonArgs,
    p_index: usize,
    sample_index: u64,
    db_path: Option<&Path>,
) -> Result<()> {
    let cfg = load_campaign(common)?;
    let started = Instant::now();
    if p_index >= cfg.p_grid.len() {
        return Err(Error::config(format!(
            "p-index {p_index} outside the probability grid of length {}",
            cfg.p_grid.len()
        )));
    }
    let p = cfg.p_grid[p_index];
    let mesh = cfg.mesh()?;
    let db = match db_path {
        Some(path) => load_database(path)?,
        None => build_offline(&cfg.model(0.0)?, &mesh, cfg.m, cfg.kind(), default_forcing(cfg.d))?,
    };
    let model = cfg.model(p)?;
    let seed = derive_seed(cfg.seed, p_index as u64, sample_index);
    let sample = sample_defects(&model, &mesh, seed);
    let mut system = assemble_global(&db, &sample, &mesh)?;
    let coarse = solve_coarse(&mut system)?;
    let up = upscale(&db, &sample, &coarse)?;
    let field = realize(&model, &sample, &mesh)?;
    let reference = pglod_solve(&field, &mesh, cfg.m, cfg.kind(), default_forcing(cfg.d))?;
    let (rel_l2, rel_h1) = relative_errors(&mesh, &reference, &coarse, &up.fine_values)?;
    println!(
        "sample {sample_index} at p = {p} (seed {seed:#018x}): {} defects",
        sample.defect_count()
    );
    println!("relative L2 error (coarse):        {rel_l2:.6e}");
    println!("relative H1 error (upscaled):      {rel_h1:.6e}");
    let coarse_rows: Vec<Vec<String>> = coarse
        .iter()
        .enumerate()
        .map(|(i, v)| vec![i.to_string(), v.to_string()])
        .collect();
    write_csv(&common.out.join("solution_coarse.csv"), "node,value", &coarse_rows)?;
    let fine_rows: Vec<Vec<String>> = up
        .fine_values
        .iter()
        .enumerate()
        .map(|(i, v)| vec![i.to_string(), v.to_string()])
        .collect();
    write_csv(&common.out.join("solution_upscaled.csv"), "node,value", &fine_rows)?;
    finish(
        "solve",
        common,
        &cfg,
        cfg.seed,
        started,
        vec!["solution_coarse.csv".to_string(), "solution_upscaled.csv".to_string()],
    )
}

fn cmd_mc(common: &CommonArgs) -> Result<()> {
    let cfg = load_campaign(common)?;
    let started = Instant::now();
    let rows = run_mc(&cfg)?;
    for r in &rows {
        println!(
            "p = {:<6} rms relative L2 = {:.4e}  rms relative H1 = {:.4e}",
            r.p, r.rms_rel_l2, r.rms_rel_h1
        );
    }
    let (header, body) = error_csv_rows(&rows);
    write_csv(&common.out.join("errors.csv"), header, &body)?;
    finish("mc", common, &cfg, cfg.seed, started, vec!["errors.csv".to_string()])
}

fn cmd_baseline(common: &CommonArgs) -> Result<()> {
    let cfg = load_campaign(common)?;
    let started = Instant::now();
    let rows = run_deterministic_baseline(&cfg)?;
    for r in &rows {
        println!(
            "p = {:<6} rms relative L2 = {:.4e}  rms relative H1 = {:.4e}",
            r.p, r.rms_rel_l2, r.rms_rel_h1
        );
    }
    let (header, body) = error_csv_rows(&rows);
    write_csv(&common.out.join("baseline.csv"), header, &body)?;
    finish("baseline", common, &cfg, cfg.seed, started, vec!["baseline.csv".to_string()])
}

fn cmd_indicator(common: &CommonArgs) -> Result<()> {
    let cfg = load_campaign(common)?;
    let started = Instant::now();
    let rows = run_indicator_study(&cfg)?;
    for r in &rows {
        println!(
            "p = {:<6} rms indicator = {:.4e}  rms absolute L2 = {:.4e}",
            r.p, r.rms_et, r.rms_abs_l2
        );
    }
    let (header, body) = indicator_csv_rows(&rows);
    write_csv(&common.out.join("indicator.csv"), header, &body)?;
    finish("indicator", common, &cfg, cfg.seed, started, vec!["indicator.csv".to_string()])
}

fn cmd_oned(common: &CommonArgs) -> Result<()> {
    check_threads(common.threads)?;
    let text = fs::read_to_string(&common.config)?;
    let mut cfg: StudyConfig = toml::from_str(&text)
        .map_err(|e| Error::config(format!("{}: {e}", common.config.display())))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    fs::create_dir_all(&common.out)?;
    let started = Instant::now();
    let rows = deviation_study(&cfg)?;
    let mut violations = 0usize;
    for r in &rows {
        violations += r.violations.len();
        println!(
            "H = 1/{:<3} p = {:<6} rms deviation = {:.4e}  rms relative L2 = {:.4e}",
            r.n_coarse, r.p, r.rms_deviation, r.rms_rel_l2
        );
    }
    println!("per-element bound violations: {violations}");
    let (header, body) = oned_csv_rows(&rows, cfg.samples, cfg.seed);
    write_csv(&common.out.join("oned.csv"), header, &body)?;
    finish("oned", common, &cfg, cfg.seed, started, vec!["oned.csv".to_string()])
}

fn cmd_timing(common: &CommonArgs) -> Result<()> {
    let cfg = load_campaign(common)?;
    let started = Instant::now();
    let report = run_timing(&cfg)?;
    let machine = machine_context();
    println!("machine: {} ({} / {}, {} cores)", machine.cpu, machine.os, machine.arch, machine.logical_cores);
    println!("offline total:            {:>12.3} s", report.t_offline_total);
    println!("local stiffness (median): {:>12.6} s", report.t_stiff);
    println!("combination (median):     {:>12.6} s", report.t_comb);
    println!("stiffness / combination:  {:>12.1}", report.t_stiff / report.t_comb);
    println!("online per sample:        {:>12.3} s", report.t_online_per_sample);
    println!("reference per sample:     {:>12.3} s", report.t_naive_per_sample);
    println!("reference / online:       {:>12.1}", report.t_naive_per_sample / report.t_online_per_sample);
    println!("break-even samples:       {:>12.2}", report.break_even_samples);
    let canonical = toml::to_string(&cfg)
        .map_err(|e| Error::data(format!("config serialization failed: {e}")))?;
    let document = TimingDocument {
        machine,
        config_sha256: lodrp::experiments::sha256_hex(canonical.as_bytes()),
        report,
    };
    let json = serde_json::to_string_pretty(&document)
        .map_err(|e| Error::data(format!("timing serialization failed: {e}")))?;
    fs::write(common.out.join("timing.json"), json + "\n")?;
    finish("timing", common, &cfg, cfg.seed, started, vec!["timing.json".to_string()])
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Offline(common) => cmd_offline(common),
        Command::Solve { common, p_index, sample, db } => {
            cmd_solve(common, *p_index, *sample, db.as_deref())
        }
        Command::Mc(common) => cmd_mc(common),
        Command::Baseline(common) => cmd_baseline(common),
        Command::Indicator(common) => cmd_indicator(common),
        Command::Oned(common) => cmd_oned(common),
        Command::Timing(common) => cmd_timing(common),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
