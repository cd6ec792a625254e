//! Scenario file.
//!
//! ```text
//! at 1000000 set-interference 1 1.0
//! at 500 trigger 1:2
//! periodic 1:0 100
//! periodic 1:1 100 phase 40
//! periodic 1:2 100 random
//! ```
//!
//! IRQs no line mentions fire with their profile period from time 0.

use std::fmt::Write as _;

use irqc_core::sim::{Action, Phase, PeriodicSource, Scenario, TimedAction};
use irqc_core::{IrqId, VmId};

use crate::text::{expect_len, field, lines, ParseError};

pub fn parse_scenario(input: &str) -> Result<Scenario, ParseError> {
    let mut scenario = Scenario::default();
    for (n, w) in lines(input) {
        match w[0] {
            "at" => {
                let at_us: u64 = field(n, &w, 1, "time")?;
                let action = match w.get(2).copied() {
                    Some("set-interference") => {
                        expect_len(n, &w, 5)?;
                        let scale: f64 = field(n, &w, 4, "scale")?;
                        if !(scale.is_finite() && scale >= 0.0) {
                            return Err(ParseError::new(n, "scale must be finite and non-negative"));
                        }
                        Action::SetInterference {
                            vm: VmId(field(n, &w, 3, "VM id")?),
                            scale,
                        }
                    }
                    Some("trigger") => {
                        expect_len(n, &w, 4)?;
                        Action::Trigger(field::<IrqId>(n, &w, 3, "IRQ (vm:k)")?)
                    }
                    Some(other) => return Err(ParseError::new(n, format!("unknown action `{other}`"))),
                    None => return Err(ParseError::new(n, "missing action")),
                };
                scenario.actions.push(TimedAction { at_us, action });
            }
            "periodic" => {
                let irq: IrqId = field(n, &w, 1, "IRQ (vm:k)")?;
                let period_us: u64 = field(n, &w, 2, "period")?;
                if period_us == 0 {
                    return Err(ParseError::new(n, "period must be positive"));
                }
                let phase = match &w[3..] {
                    [] => Phase::Fixed(0),
                    ["random"] => Phase::Random,
                    ["phase", _] => Phase::Fixed(field(n, &w, 4, "phase")?),
                    _ => return Err(ParseError::new(n, "expected `phase <us>` or `random`")),
                };
                if scenario.periodic.iter().any(|p| p.irq == irq) {
                    return Err(ParseError::new(n, format!("duplicate periodic source for {irq}")));
                }
                scenario.periodic.push(PeriodicSource { irq, period_us, phase });
            }
            other => return Err(ParseError::new(n, format!("unknown directive `{other}`"))),
        }
    }
    Ok(scenario)
}

pub fn format_scenario(scenario: &Scenario) -> String {
    let mut out = String::new();
    for a in &scenario.actions {
        let _ = writeln!(out, "at {} {}", a.at_us, a.action);
    }
    for p in &scenario.periodic {
        let _ = match p.phase {
            Phase::Fixed(0) => writeln!(out, "periodic {} {}", p.irq, p.period_us),
            Phase::Fixed(t) => writeln!(out, "periodic {} {} phase {t}", p.irq, p.period_us),
            Phase::Random => writeln!(out, "periodic {} {} random", p.irq, p.period_us),
        };
    }
    out
}
