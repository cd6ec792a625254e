//! Design-time tool: degradation effects, masking maps, the control table
//! and the artifact bundle consumed by the run-time mechanism.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use thiserror::Error;

use crate::types::{
    ControlFlag, ControlRegister, CriticalityLevel, DegradationMode, EventVector, IrqId,
    MaskingMap, SystemConfig, VmId, Weights,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DttError {
    #[error("masking map failed validation:\n{0}")]
    InvalidMap(ValidationReport),
    #[error("artifacts failed validation:\n{0}")]
    InvalidArtifacts(ValidationReport),
    #[error("control table is not monotone in the ASIL-D flag: register {lower:#x} -> mode {lower_mode}, register {higher:#x} -> mode {higher_mode}")]
    NotMonotone {
        lower: u32,
        lower_mode: DegradationMode,
        higher: u32,
        higher_mode: DegradationMode,
    },
    #[error("control table entry {register:#x} -> mode {mode} is out of range")]
    EntryOutOfRange { register: u32, mode: DegradationMode },
    #[error("control table entry {0:#x} does not fit the register width")]
    EntryWidth(u32),
    #[error("control table has no entry for register {0:#x}")]
    NotTotal(u32),
}

/// Relative contribution of one interrupt-driven task to shared-resource
/// contention. Higher effects are masked first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationEffect {
    pub irq: IrqId,
    pub effect: f64,
}

/// Effect of every non-ASIL-D IRQ: `footprint + beta * bus_rate / max_bus_rate`,
/// sorted by descending effect. Ties go to the lower-criticality VM first,
/// then lower VM id, then lower `k`.
pub fn compute_effects(config: &SystemConfig) -> Vec<DegradationEffect> {
    let max_bus = config.max_bus_rate();
    let beta = config.interference.beta;
    let mut effects: Vec<(CriticalityLevel, DegradationEffect)> = config
        .vms
        .iter()
        .filter(|vm| vm.criticality != CriticalityLevel::AsilD)
        .flat_map(|vm| {
            vm.irqs.iter().map(move |line| {
                let bus = if max_bus > 0.0 {
                    line.profile.bus_rate / max_bus
                } else {
                    0.0
                };
                let effect = line.profile.footprint_fraction + beta * bus;
                (vm.criticality, DegradationEffect { irq: line.id, effect })
            })
        })
        .collect();
    effects.sort_by(|(ca, a), (cb, b)| {
        b.effect
            .partial_cmp(&a.effect)
            .unwrap_or(Ordering::Equal)
            .then(ca.cmp(cb))
            .then(a.irq.cmp(&b.irq))
    });
    effects.into_iter().map(|(_, e)| e).collect()
}

/// Default masking map: mode 0 masks nothing, the fail-safe mode masks every
/// non-ASIL-D IRQ, and each intermediate mode `m` masks the first
/// `m * ceil(n / (modes - 2))` entries of the effect ranking.
pub fn generate_masking_map(config: &SystemConfig, effects: &[DegradationEffect]) -> MaskingMap {
    let modes = config.mode_count.max(2);
    let intermediate = modes - 2;
    let all: BTreeSet<IrqId> = config.maskable_irqs().map(|l| l.id).collect();
    let mut out = Vec::with_capacity(modes);
    out.push(BTreeSet::new());
    if intermediate > 0 {
        let chunk = effects.len().div_ceil(intermediate);
        for m in 1..=intermediate {
            let upto = (m * chunk).min(effects.len());
            out.push(effects[..upto].iter().map(|e| e.irq).collect());
        }
    }
    out.push(all);
    MaskingMap::new(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ModeCount { expected: usize, found: usize },
    UnknownIrq { mode: usize, irq: IrqId },
    NotNested { mode: usize, irq: IrqId },
    AsilDMasked { mode: usize, irq: IrqId },
    FailSafeIncomplete { mode: usize, irq: IrqId },
    MissingReference(VmId),
    UnexpectedReference(VmId),
    InvalidReference(VmId),
    RegisterWidth { expected: usize, found: usize },
    Table(DttError),
    Period { config: u64, artifacts: u64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ModeCount { expected, found } => {
                write!(f, "mode count: expected {expected}, found {found}")
            }
            Self::UnknownIrq { mode, irq } => write!(f, "mode {mode}: unknown IRQ {irq}"),
            Self::NotNested { mode, irq } => write!(
                f,
                "mode {mode}: IRQ {irq} is masked but not masked in mode {}",
                mode + 1
            ),
            Self::AsilDMasked { mode, irq } => {
                write!(f, "mode {mode}: IRQ {irq} belongs to the ASIL-D VM")
            }
            Self::FailSafeIncomplete { mode, irq } => {
                write!(f, "mode {mode}: fail-safe leaves IRQ {irq} enabled")
            }
            Self::MissingReference(vm) => write!(f, "no reference for VM {vm}"),
            Self::UnexpectedReference(vm) => write!(f, "reference for QM or unknown VM {vm}"),
            Self::InvalidReference(vm) => write!(f, "reference for VM {vm} is negative or NaN"),
            Self::RegisterWidth { expected, found } => {
                write!(f, "control table width: expected {expected} flags, found {found}")
            }
            Self::Table(e) => write!(f, "{e}"),
            Self::Period { config, artifacts } => write!(
                f,
                "actuation period mismatch: config {config} us, artifacts {artifacts} us"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return writeln!(f, "ok");
        }
        for v in &self.violations {
            writeln!(f, "violation: {v}")?;
        }
        Ok(())
    }
}

/// Checks nesting, ASIL-D exclusion and fail-safe totality.
pub fn validate_masking_map(map: &MaskingMap, config: &SystemConfig) -> ValidationReport {
    let mut violations = Vec::new();
    if map.mode_count() != config.mode_count {
        violations.push(Violation::ModeCount {
            expected: config.mode_count,
            found: map.mode_count(),
        });
    }
    let asil_d = config.asil_d();
    for (mode, set) in map.modes().iter().enumerate() {
        for irq in set {
            if config.irq(*irq).is_none() {
                violations.push(Violation::UnknownIrq { mode, irq: *irq });
            } else if irq.vm == asil_d {
                violations.push(Violation::AsilDMasked { mode, irq: *irq });
            }
        }
        if let Some(next) = map.modes().get(mode + 1) {
            for irq in set.difference(next) {
                violations.push(Violation::NotNested { mode, irq: *irq });
            }
        }
    }
    if let Some(last) = map.modes().last() {
        let mode = map.mode_count() - 1;
        for line in config.maskable_irqs() {
            if !last.contains(&line.id) {
                violations.push(Violation::FailSafeIncomplete { mode, irq: line.id });
            }
        }
    }
    ValidationReport { violations }
}

/// Lookup from packed control register to degradation mode.
///
/// With the default rule enabled, the ASIL-D flag `Tk` (bits 0-1) selects
/// `min(k, mode_count - 1)` and every other flag is a don't-care. Explicit
/// entries take precedence over the default rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlTable {
    width: usize,
    mode_count: usize,
    default_d: bool,
    entries: BTreeMap<u32, DegradationMode>,
}

impl ControlTable {
    pub fn default_d(width: usize, mode_count: usize) -> Self {
        Self {
            width,
            mode_count,
            default_d: true,
            entries: BTreeMap::new(),
        }
    }

    /// Builds a table and checks that it is total and monotone.
    pub fn new(
        width: usize,
        mode_count: usize,
        default_d: bool,
        entries: BTreeMap<u32, DegradationMode>,
    ) -> Result<Self, DttError> {
        let table = Self {
            width,
            mode_count,
            default_d,
            entries,
        };
        table.check()?;
        Ok(table)
    }

    /// Adds explicit entries on top of this table.
    pub fn with_overrides(
        mut self,
        overrides: impl IntoIterator<Item = (u32, DegradationMode)>,
    ) -> Result<Self, DttError> {
        self.entries.extend(overrides);
        self.check()?;
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn uses_default_d(&self) -> bool {
        self.default_d
    }

    pub fn entries(&self) -> &BTreeMap<u32, DegradationMode> {
        &self.entries
    }

    /// Number of distinct register values: `4^width`.
    pub fn register_space(&self) -> u64 {
        1u64 << (2 * self.width)
    }

    pub fn lookup(&self, register: u32) -> Option<DegradationMode> {
        if let Some(mode) = self.entries.get(&register) {
            return Some(*mode);
        }
        if self.default_d {
            let k = (register & 0b11) as usize;
            return Some(DegradationMode(k.min(self.mode_count - 1)));
        }
        None
    }

    fn check(&self) -> Result<(), DttError> {
        let space = self.register_space();
        for (register, mode) in &self.entries {
            if u64::from(*register) >= space {
                return Err(DttError::EntryWidth(*register));
            }
            if mode.0 >= self.mode_count {
                return Err(DttError::EntryOutOfRange {
                    register: *register,
                    mode: *mode,
                });
            }
        }
        if self.width == 0 {
            return self.lookup(0).map(|_| ()).ok_or(DttError::NotTotal(0));
        }
        for register in 0..space as u32 {
            let mode = self.lookup(register).ok_or(DttError::NotTotal(register))?;
            if register & 0b11 < 0b11 {
                let higher = register + 1;
                let higher_mode = self.lookup(higher).ok_or(DttError::NotTotal(higher))?;
                if higher_mode < mode {
                    return Err(DttError::NotMonotone {
                        lower: register,
                        lower_mode: mode,
                        higher,
                        higher_mode,
                    });
                }
            }
        }
        Ok(())
    }
}

/// The default ASIL-D-flag table for `config`.
pub fn generate_control_table(config: &SystemConfig) -> ControlTable {
    ControlTable::default_d(config.register_layout().len(), config.mode_count)
}

/// Interference-free events per actuation window for every non-QM VM, in
/// VM id order. Explicit config references win over the profile sum
/// `rate * period * duty`.
pub fn compute_references(config: &SystemConfig) -> Vec<(VmId, EventVector)> {
    let window = config.actuation_period_us as f64;
    config
        .vms
        .iter()
        .filter(|vm| vm.criticality != CriticalityLevel::Qm)
        .map(|vm| {
            let reference = vm.reference.unwrap_or_else(|| {
                vm.irqs.iter().fold(EventVector::ZERO, |acc, l| {
                    let busy = window * l.profile.duty();
                    EventVector::new(
                        acc.l2_accesses + l.profile.l2_rate * busy,
                        acc.bus_accesses + l.profile.bus_rate * busy,
                    )
                })
            });
            (vm.id, reference)
        })
        .collect()
}

/// Everything the run-time mechanism needs from design time.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub masking_map: MaskingMap,
    pub control_table: ControlTable,
    pub references: Vec<(VmId, EventVector)>,
    pub weights: Weights,
    pub actuation_period_us: u64,
}

impl Artifacts {
    pub fn reference(&self, vm: VmId) -> Option<EventVector> {
        self.references
            .iter()
            .find(|(v, _)| *v == vm)
            .map(|(_, r)| *r)
    }
}

/// Checks the artifacts against the config they will run with.
pub fn validate_artifacts(artifacts: &Artifacts, config: &SystemConfig) -> ValidationReport {
    let mut report = validate_masking_map(&artifacts.masking_map, config);
    let v = &mut report.violations;
    let table = &artifacts.control_table;
    let layout = config.register_layout();
    if table.width() != layout.len() {
        v.push(Violation::RegisterWidth {
            expected: layout.len(),
            found: table.width(),
        });
    }
    if table.mode_count() != artifacts.masking_map.mode_count() {
        v.push(Violation::ModeCount {
            expected: artifacts.masking_map.mode_count(),
            found: table.mode_count(),
        });
    }
    if let Err(e) = table.check() {
        v.push(Violation::Table(e));
    }
    for vm in &layout {
        if artifacts.reference(*vm).is_none() {
            v.push(Violation::MissingReference(*vm));
        }
    }
    for (vm, r) in &artifacts.references {
        if !layout.contains(vm) {
            v.push(Violation::UnexpectedReference(*vm));
        }
        if !r.is_valid() {
            v.push(Violation::InvalidReference(*vm));
        }
    }
    if artifacts.actuation_period_us != config.actuation_period_us {
        v.push(Violation::Period {
            config: config.actuation_period_us,
            artifacts: artifacts.actuation_period_us,
        });
    }
    report
}

/// User-supplied replacements for the generated defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub masking_map: Option<MaskingMap>,
    pub control_entries: BTreeMap<u32, DegradationMode>,
}

/// Runs the whole design-time pipeline: effects, masking map (generated or
/// user-supplied), validation, control table and references.
pub fn build_artifacts(config: &SystemConfig, overrides: &Overrides) -> Result<Artifacts, DttError> {
    let masking_map = match &overrides.masking_map {
        Some(map) => map.clone(),
        None => generate_masking_map(config, &compute_effects(config)),
    };
    let report = validate_masking_map(&masking_map, config);
    if !report.is_ok() {
        return Err(DttError::InvalidMap(report));
    }
    let control_table =
        generate_control_table(config).with_overrides(overrides.control_entries.clone())?;
    let artifacts = Artifacts {
        masking_map,
        control_table,
        references: compute_references(config),
        weights: config.weights,
        actuation_period_us: config.actuation_period_us,
    };
    let report = validate_artifacts(&artifacts, config);
    if !report.is_ok() {
        return Err(DttError::InvalidArtifacts(report));
    }
    Ok(artifacts)
}

/// Packs flags given as (VM, flag) in layout order. Test and tooling helper.
pub fn register_value(layout: &[VmId], flags: &[ControlFlag]) -> u32 {
    let reg = ControlRegister::from_ordered(layout.iter().copied().zip(flags.iter().copied()).collect());
    reg.pack()
}
