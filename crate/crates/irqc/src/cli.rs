//! Command implementations behind the `irqc` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use irqc_core::dtt::{
    build_artifacts, compute_effects, generate_masking_map, validate_artifacts, validate_masking_map,
    Artifacts, Overrides,
};
use irqc_core::sim::{calibrate_alpha, run, Scenario, SimOptions};
use irqc_core::{fixtures, SystemConfig};

use crate::artifact::{format_artifacts, parse_artifacts, parse_overrides};
use crate::bench::{overhead_csv, overhead_curve, points_csv, run_bench, StdClock, MIN_ITERATIONS};
use crate::config::parse_config;
use crate::output::write_run;
use crate::scenario::parse_scenario;
use crate::text::on_off;

#[derive(Debug, Parser)]
#[command(name = "irqc", version, about = "Interrupt coloring: design-time tool, simulator and RTM bench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate, validate and export artifacts.
    Dtt(DttArgs),
    /// Run a scenario and write CSV reports.
    Sim(SimArgs),
    /// Time the RTM handler and print the overhead curve.
    Bench(BenchArgs),
    /// Summarize the CSVs of a `sim` output directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct DttArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Masking map and control table entries replacing the defaults.
    #[arg(long)]
    pub overrides: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_switch(raw: &str) -> Result<bool, String> {
    on_off(0, raw).map_err(|e| e.message)
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Defaults to the artifacts generated from the config.
    #[arg(long)]
    pub artifact: Option<PathBuf>,
    /// Defaults to every IRQ firing with its profile period.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long = "duration-us")]
    pub duration_us: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_switch)]
    pub stepwise: Option<bool>,
    #[arg(long, value_parser = parse_switch, default_value = "on")]
    pub rtm: bool,
    #[arg(long, conflicts_with = "calibrate")]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Set alpha so the ASIL-D VM's slowdown under full interference equals
    /// this value.
    #[arg(long)]
    pub calibrate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Defaults to the built-in four-VM setup.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub overrides: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub iterations: u64,
    #[arg(long, value_delimiter = ',', default_values_t = vec![10.0, 100.0, 1000.0])]
    pub periods: Vec<f64>,
    /// Worst-case handler cost in microseconds for the model column.
    #[arg(long = "worst-case-us")]
    pub worst_case_us: Option<f64>,
    /// Also write bench.csv and overhead.csv here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directory of a `sim` run.
    #[arg(long = "in")]
    pub input: PathBuf,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn load_config(path: &Path) -> Result<SystemConfig> {
    parse_config(&read(path)?).with_context(|| format!("in {}", path.display()))
}

pub fn load_overrides(path: Option<&Path>) -> Result<Overrides> {
    match path {
        Some(p) => parse_overrides(&read(p)?).with_context(|| format!("in {}", p.display())),
        None => Ok(Overrides::default()),
    }
}

pub fn load_artifacts(path: &Path) -> Result<Artifacts> {
    parse_artifacts(&read(path)?).with_context(|| format!("in {}", path.display()))
}

pub fn load_scenario(path: Option<&Path>) -> Result<Scenario> {
    match path {
        Some(p) => parse_scenario(&read(p)?).with_context(|| format!("in {}", p.display())),
        None => Ok(Scenario::default()),
    }
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Dtt(a) => cmd_dtt(&a.config, a.overrides.as_deref(), &a.out, out),
        Command::Sim(a) => cmd_sim(&a, out),
        Command::Bench(a) => cmd_bench(&a, out),
        Command::Report(a) => cmd_report(&a.input, out),
    }
}

pub fn cmd_dtt(config_path: &Path, overrides_path: Option<&Path>, out_path: &Path, out: &mut dyn Write) -> Result<()> {
    let config = load_config(config_path)?;
    let overrides = load_overrides(overrides_path)?;
    let map = match &overrides.masking_map {
        Some(m) => m.clone(),
        None => generate_masking_map(&config, &compute_effects(&config)),
    };
    let report = validate_masking_map(&map, &config);
    writeln!(out, "{report}")?;
    if !report.is_ok() {
        bail!("masking map failed validation");
    }
    let artifacts = build_artifacts(&config, &overrides)?;
    for (i, set) in artifacts.masking_map.modes().iter().enumerate() {
        writeln!(out, "mode {i}: {} masked", set.len())?;
    }
    fs::write(out_path, format_artifacts(&artifacts))
        .with_context(|| format!("writing {}", out_path.display()))?;
    writeln!(out, "wrote {}", out_path.display())?;
    Ok(())
}

/// Config with the command-line model overrides applied.
pub fn effective_config(mut config: SystemConfig, args: &SimArgs) -> Result<SystemConfig> {
    if let Some(s) = args.stepwise {
        config.stepwise_transitions = s;
    }
    if let Some(b) = args.beta {
        config.interference.beta = b;
    }
    if let Some(a) = args.alpha {
        config.interference.alpha = a;
    }
    if let Some(target) = args.calibrate {
        ensure!(target >= 1.0, "calibration target must be at least 1");
        let victim = config.asil_d();
        config.interference.alpha = calibrate_alpha(&config, victim, target);
    }
    ensure!(
        config.interference.alpha.is_finite() && config.interference.alpha >= 0.0,
        "alpha must be finite and non-negative"
    );
    ensure!(
        config.interference.beta.is_finite() && config.interference.beta >= 0.0,
        "beta must be finite and non-negative"
    );
    Ok(config)
}

pub fn cmd_sim(args: &SimArgs, out: &mut dyn Write) -> Result<()> {
    let config = effective_config(load_config(&args.config)?, args)?;
    let artifacts = match &args.artifact {
        Some(p) => {
            let a = load_artifacts(p)?;
            let report = validate_artifacts(&a, &config);
            if !report.is_ok() {
                bail!("artifact {} does not match the config:\n{report}", p.display());
            }
            a
        }
        None => build_artifacts(&config, &Overrides::default())?,
    };
    let scenario = load_scenario(args.scenario.as_deref())?;
    let options = SimOptions {
        rtm_enabled: args.rtm,
        seed: args.seed,
        ..SimOptions::default()
    };
    let report = run(&config, Some(&artifacts), &scenario, args.duration_us, options)?;
    write_run(&args.out, &report)?;
    writeln!(out, "alpha {} beta {}", config.interference.alpha, config.interference.beta)?;
    for vm in &report.vms {
        writeln!(
            out,
            "vm {} {}: relative throughput {:.4}",
            vm.vm, vm.criticality, vm.relative_throughput
        )?;
    }
    writeln!(out, "wrote {}", args.out.display())?;
    Ok(())
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    ensure!(
        args.iterations >= MIN_ITERATIONS,
        "--iterations must be at least {MIN_ITERATIONS}"
    );
    ensure!(
        args.periods.iter().all(|p| p.is_finite() && *p > 0.0),
        "periods must be positive"
    );
    let config = match &args.config {
        Some(p) => load_config(p)?,
        None => fixtures::quad_vm_setup2(),
    };
    let artifacts = build_artifacts(&config, &load_overrides(args.overrides.as_deref())?)?;
    let result = run_bench(&config, &artifacts, args.iterations, &mut StdClock::new())?;
    let rows = overhead_curve(result.worst_case_us(), args.worst_case_us, &args.periods)?;
    let points = points_csv(&result)?;
    let curve = overhead_csv(&rows)?;
    out.write_all(&points)?;
    writeln!(out)?;
    out.write_all(&curve)?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("bench.csv"), &points)?;
        fs::write(dir.join("overhead.csv"), &curve)?;
    }
    Ok(())
}

#[derive(Debug, Default, Clone)]
struct VmSummary {
    criticality: String,
    relative_throughput: String,
    window_slowdown: String,
    windows: u64,
    qos_sum: f64,
    qos_min: Option<f64>,
    flags: [u64; 4],
}

pub const SUMMARY_HEADER: [&str; 10] = [
    "vm",
    "criticality",
    "relative_throughput",
    "window_slowdown",
    "mean_qos",
    "min_qos",
    "t0",
    "t1",
    "t2",
    "t3",
];
pub const OCCUPANCY_HEADER: [&str; 3] = ["mode", "windows", "fraction"];

pub fn cmd_report(dir: &Path, out: &mut dyn Write) -> Result<()> {
    let mut vms: std::collections::BTreeMap<u16, VmSummary> = Default::default();
    let mut rdr = csv::Reader::from_path(dir.join("report.csv")).context("reading report.csv")?;
    for row in rdr.records() {
        let row = row?;
        if &row[0] != "vm" {
            continue;
        }
        let id: u16 = row[1].parse().context("report.csv: bad vm id")?;
        let s = vms.entry(id).or_default();
        s.criticality = row[2].to_string();
        s.relative_throughput = row[5].to_string();
        s.window_slowdown = row[6].to_string();
    }
    let mut rdr = csv::Reader::from_path(dir.join("qos.csv")).context("reading qos.csv")?;
    for row in rdr.records() {
        let row = row?;
        let id: u16 = row[1].parse().context("qos.csv: bad vm id")?;
        let s = vms.entry(id).or_default();
        if row[6].is_empty() {
            continue;
        }
        let q: f64 = row[6].parse().context("qos.csv: bad qos")?;
        s.windows += 1;
        s.qos_sum += q;
        s.qos_min = Some(s.qos_min.map_or(q, |m| m.min(q)));
        if let Some(k) = row[7].strip_prefix('T').and_then(|k| k.parse::<usize>().ok()) {
            if k < 4 {
                s.flags[k] += 1;
            }
        }
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER)?;
    for (id, s) in &vms {
        let mean = (s.windows > 0).then(|| format!("{:.3}", s.qos_sum / s.windows as f64));
        w.write_record([
            id.to_string(),
            s.criticality.clone(),
            s.relative_throughput.clone(),
            s.window_slowdown.clone(),
            mean.unwrap_or_default(),
            s.qos_min.map(|m| format!("{m:.3}")).unwrap_or_default(),
            s.flags[0].to_string(),
            s.flags[1].to_string(),
            s.flags[2].to_string(),
            s.flags[3].to_string(),
        ])?;
    }
    out.write_all(&w.into_inner().map_err(|e| anyhow::anyhow!("{}", e.error()))?)?;

    let mut counts: Vec<u64> = Vec::new();
    let mut rdr = csv::Reader::from_path(dir.join("modes.csv")).context("reading modes.csv")?;
    for row in rdr.records() {
        let row = row?;
        let m: usize = row[1].parse().context("modes.csv: bad mode")?;
        if counts.len() <= m {
            counts.resize(m + 1, 0);
        }
        counts[m] += 1;
    }
    let total: u64 = counts.iter().sum();
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(OCCUPANCY_HEADER)?;
    for (m, c) in counts.iter().enumerate() {
        w.write_record([m.to_string(), c.to_string(), format!("{:.4}", *c as f64 / total as f64)])?;
    }
    writeln!(out)?;
    out.write_all(&w.into_inner().map_err(|e| anyhow::anyhow!("{}", e.error()))?)?;
    Ok(())
}
