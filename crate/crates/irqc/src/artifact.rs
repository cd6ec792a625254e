//! Artifact file and override map.
//!
//! ```text
//! version 1
//! period 153
//! weights 0.5 0.5
//! ref 0 306 76.5
//! mode 0 mask none
//! mode 1 mask 1:3
//! mode 2 mask 1:2 1:3
//! mode 3 mask 1:0 1:1 1:2 1:3
//! ctl default-d
//! ctl 7 2
//! ```
//!
//! Registers are lowercase hex without a prefix (`0x` is accepted on
//! input). The table width is the number of `ref` lines and the mode count
//! the number of `mode` lines.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt::Write as _;

use irqc_core::dtt::{Artifacts, ControlTable, Overrides};
use irqc_core::{DegradationMode, EventVector, IrqId, MaskingMap, VmId, Weights};

use crate::text::{expect_len, field, join, lines, ParseError};

pub fn format_artifacts(a: &Artifacts) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "version 1");
    let _ = writeln!(out, "period {}", a.actuation_period_us);
    let _ = writeln!(out, "weights {} {}", a.weights.l2(), a.weights.bus());
    for (vm, r) in &a.references {
        let _ = writeln!(out, "ref {} {} {}", vm, r.l2_accesses, r.bus_accesses);
    }
    format_modes(&mut out, &a.masking_map);
    if a.control_table.uses_default_d() {
        let _ = writeln!(out, "ctl default-d");
    }
    format_entries(&mut out, a.control_table.entries());
    out
}

fn format_modes(out: &mut String, map: &MaskingMap) {
    for (i, set) in map.modes().iter().enumerate() {
        let masked = if set.is_empty() {
            "none".to_string()
        } else {
            join(set)
        };
        let _ = writeln!(out, "mode {i} mask {masked}");
    }
}

fn format_entries(out: &mut String, entries: &BTreeMap<u32, DegradationMode>) {
    for (register, mode) in entries {
        let _ = writeln!(out, "ctl {register:x} {}", mode.0);
    }
}

fn parse_register(n: usize, raw: &str) -> Result<u32, ParseError> {
    let digits = raw.strip_prefix("0x").unwrap_or(raw);
    u32::from_str_radix(digits, 16).map_err(|_| ParseError::new(n, format!("invalid register `{raw}`")))
}

fn parse_mode_line(n: usize, w: &[&str], expected_index: usize) -> Result<BTreeSet<IrqId>, ParseError> {
    let index: usize = field(n, w, 1, "mode index")?;
    if index != expected_index {
        return Err(ParseError::new(n, format!("expected mode {expected_index}, got {index}")));
    }
    if w.get(2) != Some(&"mask") {
        return Err(ParseError::new(n, "expected `mode <i> mask ...`"));
    }
    match &w[3..] {
        [] => Err(ParseError::new(n, "empty mask list; write `none`")),
        ["none"] => Ok(BTreeSet::new()),
        ids => {
            let mut set = BTreeSet::new();
            for (i, _) in ids.iter().enumerate() {
                let id: IrqId = field(n, w, 3 + i, "IRQ (vm:k)")?;
                if !set.insert(id) {
                    return Err(ParseError::new(n, format!("IRQ {id} listed twice")));
                }
            }
            Ok(set)
        }
    }
}

/// Shared `mode` / `ctl` handling for artifacts and overrides.
#[derive(Default)]
struct TableLines {
    modes: Vec<BTreeSet<IrqId>>,
    default_d: bool,
    entries: BTreeMap<u32, DegradationMode>,
    seen_ctl: bool,
}

impl TableLines {
    fn accept(&mut self, n: usize, w: &[&str]) -> Result<bool, ParseError> {
        match w[0] {
            "mode" => {
                if self.seen_ctl {
                    return Err(ParseError::new(n, "`mode` lines must precede `ctl` lines"));
                }
                let set = parse_mode_line(n, w, self.modes.len())?;
                self.modes.push(set);
            }
            "ctl" if w.len() == 2 && w[1] == "default-d" => {
                if self.seen_ctl {
                    return Err(ParseError::new(n, "`ctl default-d` must come first"));
                }
                self.default_d = true;
                self.seen_ctl = true;
            }
            "ctl" => {
                expect_len(n, w, 3)?;
                let register = parse_register(n, w[1])?;
                let mode = DegradationMode(field(n, w, 2, "mode index")?);
                if self.entries.insert(register, mode).is_some() {
                    return Err(ParseError::new(n, format!("duplicate entry for register {register:x}")));
                }
                self.seen_ctl = true;
            }
            _ => return Ok(false),
        }
        Ok(true)
    }
}

pub fn parse_artifacts(input: &str) -> Result<Artifacts, ParseError> {
    let mut period = None;
    let mut weights = None;
    let mut references: Vec<(VmId, EventVector)> = Vec::new();
    let mut table = TableLines::default();
    let mut last_line = 0;
    let mut seen_version = false;

    for (n, w) in lines(input) {
        last_line = n;
        if !seen_version {
            if w[0] != "version" {
                return Err(ParseError::new(n, "artifact must start with `version 1`"));
            }
            expect_len(n, &w, 2)?;
            if field::<u32>(n, &w, 1, "version")? != 1 {
                return Err(ParseError::new(n, "unsupported version"));
            }
            seen_version = true;
            continue;
        }
        if table.accept(n, &w)? {
            continue;
        }
        match w[0] {
            "period" => {
                expect_len(n, &w, 2)?;
                period = Some(field(n, &w, 1, "actuation period")?);
            }
            "weights" => {
                expect_len(n, &w, 3)?;
                let parsed = Weights::new(field(n, &w, 1, "l2 weight")?, field(n, &w, 2, "bus weight")?)
                    .map_err(|e| ParseError::new(n, e.to_string()))?;
                weights = Some(parsed);
            }
            "ref" => {
                expect_len(n, &w, 4)?;
                let vm = VmId(field(n, &w, 1, "VM id")?);
                if references.last().is_some_and(|(prev, _)| *prev >= vm) {
                    return Err(ParseError::new(n, "ref lines must be in ascending VM order"));
                }
                let r = EventVector::new(field(n, &w, 2, "l2 reference")?, field(n, &w, 3, "bus reference")?);
                references.push((vm, r));
            }
            other => return Err(ParseError::new(n, format!("unknown key `{other}`"))),
        }
    }

    let missing = |what: &str| ParseError::new(last_line, format!("missing `{what}`"));
    if table.modes.is_empty() {
        return Err(missing("mode"));
    }
    let control_table = ControlTable::new(references.len(), table.modes.len(), table.default_d, table.entries)
        .map_err(|e| ParseError::new(last_line, e.to_string()))?;
    Ok(Artifacts {
        masking_map: MaskingMap::new(table.modes),
        control_table,
        references,
        weights: weights.ok_or_else(|| missing("weights"))?,
        actuation_period_us: period.ok_or_else(|| missing("period"))?,
    })
}

/// Override file: optional `mode` lines (all modes, ascending) replacing
/// the generated masking map, and `ctl <hex> <mode>` entries layered on the
/// default table.
pub fn parse_overrides(input: &str) -> Result<Overrides, ParseError> {
    let mut table = TableLines::default();
    for (n, w) in lines(input) {
        if !table.accept(n, &w)? {
            return Err(ParseError::new(n, format!("unknown key `{}` in overrides", w[0])));
        }
    }
    Ok(Overrides {
        masking_map: (!table.modes.is_empty()).then(|| MaskingMap::new(table.modes)),
        control_entries: table.entries,
    })
}

pub fn format_overrides(o: &Overrides) -> String {
    let mut out = String::new();
    if let Some(map) = &o.masking_map {
        format_modes(&mut out, map);
    }
    format_entries(&mut out, &o.control_entries);
    out
}
