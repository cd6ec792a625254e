//! CSV writers for simulation reports.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use irqc_core::sim::{Action, RunReport, TraceKind};
use irqc_core::CriticalityLevel;

pub const REPORT_HEADER: [&str; 7] = [
    "kind",
    "id",
    "criticality",
    "completions",
    "baseline_completions",
    "relative_throughput",
    "window_slowdown",
];
pub const QOS_HEADER: [&str; 8] = [
    "time_us",
    "vm",
    "l2_actual",
    "bus_actual",
    "l2_expected",
    "bus_expected",
    "qos",
    "flag",
];
pub const MODES_HEADER: [&str; 2] = ["time_us", "mode"];
pub const TRACE_HEADER: [&str; 7] = ["time_us", "event", "vm", "irq", "pin", "word", "value"];
pub const INSTRUMENTATION_HEADER: [&str; 5] = ["point", "name", "count", "mean_ns", "max_ns"];

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {}", e.error()))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn report_csv(report: &RunReport) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record(REPORT_HEADER)?;
    for vm in &report.vms {
        let slowdown = (vm.criticality != CriticalityLevel::Qm)
            .then(|| report.window_slowdown(vm.vm, 0))
            .flatten();
        w.write_record([
            "vm".to_string(),
            vm.vm.to_string(),
            vm.criticality.to_string(),
            vm.completions.to_string(),
            vm.baseline_completions.to_string(),
            vm.relative_throughput.to_string(),
            opt(slowdown),
        ])?;
    }
    for t in &report.tasks {
        let criticality = report.vm(t.irq.vm).map(|v| v.criticality.to_string());
        w.write_record([
            "task".to_string(),
            t.irq.to_string(),
            opt(criticality),
            t.completions.to_string(),
            t.baseline_completions.to_string(),
            t.relative_throughput.to_string(),
            String::new(),
        ])?;
    }
    finish(w)
}

pub fn qos_csv(report: &RunReport) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record(QOS_HEADER)?;
    for r in &report.windows {
        w.write_record([
            r.time_us.to_string(),
            r.vm.to_string(),
            r.actual.l2_accesses.to_string(),
            r.actual.bus_accesses.to_string(),
            r.expected.l2_accesses.to_string(),
            r.expected.bus_accesses.to_string(),
            opt(r.qos),
            opt(r.flag),
        ])?;
    }
    finish(w)
}

pub fn modes_csv(report: &RunReport) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record(MODES_HEADER)?;
    for (t, m) in &report.modes {
        w.write_record([t.to_string(), m.0.to_string()])?;
    }
    finish(w)
}

pub fn trace_csv(report: &RunReport) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record(TRACE_HEADER)?;
    for e in &report.trace {
        let time = e.time_us.to_string();
        let row: [String; 6] = match &e.kind {
            TraceKind::Scenario(Action::SetInterference { vm, scale }) => [
                "set-interference".into(),
                vm.to_string(),
                String::new(),
                String::new(),
                String::new(),
                scale.to_string(),
            ],
            TraceKind::Scenario(Action::Trigger(irq)) => [
                "trigger".into(),
                irq.vm.to_string(),
                irq.to_string(),
                String::new(),
                String::new(),
                String::new(),
            ],
            TraceKind::Mode { to, .. } => [
                "mode".into(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                to.0.to_string(),
            ],
            TraceKind::Write(p) => [
                p.op.to_string(),
                p.irq.vm.to_string(),
                p.irq.to_string(),
                p.pin.to_string(),
                p.word.to_string(),
                format!("{:#010x}", p.value),
            ],
        };
        w.write_record(std::iter::once(time).chain(row))?;
    }
    finish(w)
}

pub fn instrumentation_csv(report: &RunReport) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record(INSTRUMENTATION_HEADER)?;
    for (mp, s) in report.instrumentation.rows() {
        w.write_record([
            format!("MP{}", mp.number()),
            mp.name().to_string(),
            s.count.to_string(),
            s.mean_ns().to_string(),
            s.max_ns.to_string(),
        ])?;
    }
    finish(w)
}

/// Writes every report CSV into `dir`, creating it if needed.
pub fn write_run(dir: &Path, report: &RunReport) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let files: [(&str, Vec<u8>); 5] = [
        ("report.csv", report_csv(report)?),
        ("qos.csv", qos_csv(report)?),
        ("modes.csv", modes_csv(report)?),
        ("trace.csv", trace_csv(report)?),
        ("instrumentation.csv", instrumentation_csv(report)?),
    ];
    for (name, bytes) in files {
        let path = dir.join(name);
        let mut f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        f.write_all(&bytes)?;
    }
    Ok(())
}
