//! System configuration file.
//!
//! ```text
//! version 1
//! period 153
//! weights 0.5 0.5
//! modes 4
//! alpha 0.565
//! beta 0.5
//! llc 1048576
//! stepwise on
//! vm 0 asil-d
//! irq 0:0 pin 32 footprint 0.25 l2 2 bus 0.5 period 1530 wcet 1530
//! vm 1 qm
//! irq 1:0 pin 40 footprint 0.125 l2 0.5 bus 0.25 period 100 wcet 100
//! ref 0 306 76.5
//! ```
//!
//! `period` is required; the other scalars default to 50/50 weights, four
//! modes, `alpha 1`, `beta 0`, a 1 MiB LLC and stepwise transitions. `irq`
//! lines must follow their `vm` line. `ref` overrides the reference
//! computed from the profiles.

use std::fmt::Write as _;

use irqc_core::{
    CriticalityLevel, EventVector, InterferenceParams, IrqId, IrqLine, SystemConfig, TaskProfile,
    VmConfig, VmId, Weights,
};

use crate::text::{expect_len, field, lines, on_off, ParseError};

pub fn parse_config(input: &str) -> Result<SystemConfig, ParseError> {
    let mut period = None;
    let mut weights = Weights::EQUAL;
    let mut mode_count = 4;
    let mut interference = InterferenceParams { alpha: 1.0, beta: 0.0 };
    let mut llc_size = 1 << 20;
    let mut stepwise = true;
    let mut vms: Vec<VmConfig> = Vec::new();
    let mut last_line = 0;

    for (n, w) in lines(input) {
        last_line = n;
        match w[0] {
            "version" => {
                expect_len(n, &w, 2)?;
                if field::<u32>(n, &w, 1, "version")? != 1 {
                    return Err(ParseError::new(n, "unsupported version"));
                }
            }
            "period" => {
                expect_len(n, &w, 2)?;
                period = Some(field(n, &w, 1, "actuation period")?);
            }
            "weights" => {
                expect_len(n, &w, 3)?;
                weights = Weights::new(field(n, &w, 1, "l2 weight")?, field(n, &w, 2, "bus weight")?)
                    .map_err(|e| ParseError::new(n, e.to_string()))?;
            }
            "modes" => {
                expect_len(n, &w, 2)?;
                mode_count = field(n, &w, 1, "mode count")?;
            }
            "alpha" => {
                expect_len(n, &w, 2)?;
                interference.alpha = field(n, &w, 1, "alpha")?;
            }
            "beta" => {
                expect_len(n, &w, 2)?;
                interference.beta = field(n, &w, 1, "beta")?;
            }
            "llc" => {
                expect_len(n, &w, 2)?;
                llc_size = field(n, &w, 1, "LLC size")?;
            }
            "stepwise" => {
                expect_len(n, &w, 2)?;
                stepwise = on_off(n, w[1])?;
            }
            "vm" => {
                expect_len(n, &w, 3)?;
                let id: u16 = field(n, &w, 1, "VM id")?;
                let criticality: CriticalityLevel = field(n, &w, 2, "criticality")?;
                vms.push(VmConfig {
                    id: VmId(id),
                    criticality,
                    irqs: Vec::new(),
                    reference: None,
                });
            }
            "irq" => {
                let id: IrqId = field(n, &w, 1, "IRQ (vm:k)")?;
                let vm = vms
                    .iter_mut()
                    .find(|v| v.id == id.vm)
                    .ok_or_else(|| ParseError::new(n, format!("IRQ {id} before its vm line")))?;
                vm.irqs.push(parse_irq(n, &w, id)?);
            }
            "ref" => {
                expect_len(n, &w, 4)?;
                let id = VmId(field(n, &w, 1, "VM id")?);
                let r = EventVector::new(field(n, &w, 2, "l2 reference")?, field(n, &w, 3, "bus reference")?);
                let vm = vms
                    .iter_mut()
                    .find(|v| v.id == id)
                    .ok_or_else(|| ParseError::new(n, format!("ref for unknown VM {id}")))?;
                vm.reference = Some(r);
            }
            other => return Err(ParseError::new(n, format!("unknown key `{other}`"))),
        }
    }

    let config = SystemConfig {
        vms,
        weights,
        actuation_period_us: period.ok_or_else(|| ParseError::new(last_line, "missing `period`"))?,
        mode_count,
        interference,
        llc_size,
        stepwise_transitions: stepwise,
    };
    config
        .validate()
        .map_err(|e| ParseError::new(last_line, e.to_string()))?;
    Ok(config)
}

fn parse_irq(n: usize, w: &[&str], id: IrqId) -> Result<IrqLine, ParseError> {
    if !w.len().is_multiple_of(2) {
        return Err(ParseError::new(n, "irq attributes come in key/value pairs"));
    }
    let (mut pin, mut footprint, mut l2, mut bus, mut period, mut wcet) = (None, None, None, None, None, None);
    for i in (2..w.len()).step_by(2) {
        match w[i] {
            "pin" => pin = Some(field(n, w, i + 1, "pin")?),
            "footprint" => footprint = Some(field(n, w, i + 1, "footprint")?),
            "l2" => l2 = Some(field(n, w, i + 1, "l2 rate")?),
            "bus" => bus = Some(field(n, w, i + 1, "bus rate")?),
            "period" => period = Some(field(n, w, i + 1, "period")?),
            "wcet" => wcet = Some(field(n, w, i + 1, "wcet")?),
            other => return Err(ParseError::new(n, format!("unknown irq attribute `{other}`"))),
        }
    }
    fn need<T>(v: Option<T>, n: usize, id: IrqId, what: &str) -> Result<T, ParseError> {
        v.ok_or_else(|| ParseError::new(n, format!("irq {id} lacks `{what}`")))
    }
    Ok(IrqLine {
        id,
        pin: need(pin, n, id, "pin")?,
        profile: TaskProfile {
            footprint_fraction: need(footprint, n, id, "footprint")?,
            l2_rate: need(l2, n, id, "l2")?,
            bus_rate: need(bus, n, id, "bus")?,
            period_us: need(period, n, id, "period")?,
            wcet_solo_us: need(wcet, n, id, "wcet")?,
        },
    })
}

pub fn format_config(config: &SystemConfig) -> String {
    let mut out = String::new();
    let on = |b: bool| if b { "on" } else { "off" };
    let _ = writeln!(out, "version 1");
    let _ = writeln!(out, "period {}", config.actuation_period_us);
    let _ = writeln!(out, "weights {} {}", config.weights.l2(), config.weights.bus());
    let _ = writeln!(out, "modes {}", config.mode_count);
    let _ = writeln!(out, "alpha {}", config.interference.alpha);
    let _ = writeln!(out, "beta {}", config.interference.beta);
    let _ = writeln!(out, "llc {}", config.llc_size);
    let _ = writeln!(out, "stepwise {}", on(config.stepwise_transitions));
    for vm in &config.vms {
        let _ = writeln!(out, "vm {} {}", vm.id, vm.criticality);
        for l in &vm.irqs {
            let p = l.profile;
            let _ = writeln!(
                out,
                "irq {} pin {} footprint {} l2 {} bus {} period {} wcet {}",
                l.id, l.pin, p.footprint_fraction, p.l2_rate, p.bus_rate, p.period_us, p.wcet_solo_us
            );
        }
        if let Some(r) = vm.reference {
            let _ = writeln!(out, "ref {} {} {}", vm.id, r.l2_accesses, r.bus_accesses);
        }
    }
    out
}
