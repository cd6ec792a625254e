//! RTM microbenchmark over synthetic tick inputs.

use std::time::Instant;

use anyhow::{ensure, Result};
use irqc_core::dtt::Artifacts;
use irqc_core::gic::DistributorState;
use irqc_core::rtm::{overhead_model, Clock, Instrumentation, RtmState};
use irqc_core::{CriticalityLevel, EventVector, SystemConfig};

/// Wall-clock nanoseconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct StdClock {
    origin: Instant,
}

impl StdClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for StdClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for StdClock {
    fn now_ns(&mut self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }
}

pub const MIN_ITERATIONS: u64 = 1000;

/// Fractions of the reference fed to the non-QM VMs. The cycle walks the
/// critical VM through every band and back so masking and unmasking both
/// get exercised.
const SWEEP: [f64; 8] = [1.0, 0.6, 0.4, 0.1, 0.1, 0.4, 0.6, 1.0];

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub iterations: u64,
    pub instrumentation: Instrumentation,
}

impl BenchResult {
    pub fn worst_case_us(&self) -> f64 {
        self.instrumentation.handler.max_ns as f64 / 1000.0
    }

    pub fn mean_us(&self) -> f64 {
        self.instrumentation.handler.mean_ns() / 1000.0
    }
}

pub fn run_bench<C: Clock>(
    config: &SystemConfig,
    artifacts: &Artifacts,
    iterations: u64,
    clock: &mut C,
) -> Result<BenchResult> {
    ensure!(
        iterations >= MIN_ITERATIONS,
        "need at least {MIN_ITERATIONS} iterations, got {iterations}"
    );
    let mut rtm = RtmState::new(config, artifacts.clone())?;
    let mut dist = DistributorState::from_config(config);
    rtm.apply_initial_mode(&mut dist)?;
    let references: Vec<EventVector> = config
        .vms
        .iter()
        .map(|vm| artifacts.reference(vm.id).unwrap_or_default())
        .collect();
    let mut samples = vec![EventVector::ZERO; config.vms.len()];
    for i in 0..iterations {
        let f = SWEEP[(i % SWEEP.len() as u64) as usize];
        for (j, vm) in config.vms.iter().enumerate() {
            let r = references[j];
            samples[j] = match vm.criticality {
                CriticalityLevel::Qm => EventVector::ZERO,
                _ => r.scaled(f, f),
            };
        }
        rtm.tick(&mut samples, &mut dist, clock)?;
    }
    Ok(BenchResult {
        iterations,
        instrumentation: rtm.instrumentation().clone(),
    })
}

/// One row of the overhead curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadRow {
    pub period_us: f64,
    pub measured_pct: f64,
    pub model_pct: Option<f64>,
}

pub fn overhead_curve(measured_worst_us: f64, model_worst_us: Option<f64>, periods: &[f64]) -> Result<Vec<OverheadRow>> {
    periods
        .iter()
        .map(|p| {
            Ok(OverheadRow {
                period_us: *p,
                measured_pct: overhead_model(measured_worst_us, *p)?,
                model_pct: model_worst_us.map(|w| overhead_model(w, *p)).transpose()?,
            })
        })
        .collect()
}

pub fn points_csv(result: &BenchResult) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(crate::output::INSTRUMENTATION_HEADER)?;
    let rows = result
        .instrumentation
        .rows()
        .map(|(mp, s)| (format!("MP{}", mp.number()), mp.name(), s))
        .chain(std::iter::once(("handler".to_string(), "total", &result.instrumentation.handler)));
    for (point, name, s) in rows {
        w.write_record([
            point,
            name.to_string(),
            s.count.to_string(),
            format!("{:.1}", s.mean_ns()),
            s.max_ns.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {}", e.error()))
}

pub const OVERHEAD_HEADER: [&str; 3] = ["period_us", "measured_overhead_pct", "model_overhead_pct"];

pub fn overhead_csv(rows: &[OverheadRow]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(OVERHEAD_HEADER)?;
    for r in rows {
        w.write_record([
            r.period_us.to_string(),
            format!("{:.4}", r.measured_pct),
            r.model_pct.map(|m| format!("{m:.4}")).unwrap_or_default(),
        ])?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {}", e.error()))
}
