//! Domain types shared by the design-time tool, the run-time mechanism and
//! the simulator.
//!
//! VM and IRQ indices are zero-based and half-open: a system with `M` VMs
//! uses ids `0..M`, and a VM with `N` interrupts uses `k` in `0..N`.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::ConfigError;

/// Safety integrity level of a VM. Ordered so that `AsilD` is the maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CriticalityLevel {
    Qm,
    AsilB,
    AsilC,
    AsilD,
}

impl CriticalityLevel {
    pub const fn as_str(self) -> &'static str {
        match self {
            Self::Qm => "qm",
            Self::AsilB => "asil-b",
            Self::AsilC => "asil-c",
            Self::AsilD => "asil-d",
        }
    }
}

impl fmt::Display for CriticalityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CriticalityLevel {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "qm" => Ok(Self::Qm),
            "asil-b" | "asil_b" | "b" => Ok(Self::AsilB),
            "asil-c" | "asil_c" | "c" => Ok(Self::AsilC),
            "asil-d" | "asil_d" | "d" => Ok(Self::AsilD),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VmId(pub u16);

impl VmId {
    pub const fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Logical interrupt identity: the owning VM and the interrupt's index
/// within that VM. The physical pin lives in [`IrqLine`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IrqId {
    pub vm: VmId,
    pub k: u16,
}

impl IrqId {
    pub const fn new(vm: u16, k: u16) -> Self {
        Self { vm: VmId(vm), k }
    }
}

impl fmt::Display for IrqId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.vm, self.k)
    }
}

impl FromStr for IrqId {
    type Err = ();

    /// Parses the `<vm>:<k>` form used by every text format.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (vm, k) = s.split_once(':').ok_or(())?;
        Ok(Self::new(vm.parse().map_err(|_| ())?, k.parse().map_err(|_| ())?))
    }
}

/// Per-window PMU deltas (or the expected values for a window).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EventVector {
    pub l2_accesses: f64,
    pub bus_accesses: f64,
}

impl EventVector {
    pub const ZERO: Self = Self::new(0.0, 0.0);

    pub const fn new(l2_accesses: f64, bus_accesses: f64) -> Self {
        Self {
            l2_accesses,
            bus_accesses,
        }
    }

    pub fn is_valid(&self) -> bool {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        ok(self.l2_accesses) && ok(self.bus_accesses)
    }

    pub fn scaled(self, l2: f64, bus: f64) -> Self {
        Self::new(self.l2_accesses * l2, self.bus_accesses * bus)
    }
}

/// Event weights for the QoS weighted average; they sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    l2: f64,
    bus: f64,
}

impl Weights {
    pub const EQUAL: Self = Self { l2: 0.5, bus: 0.5 };

    pub fn new(l2: f64, bus: f64) -> Result<Self, ConfigError> {
        let ok = l2.is_finite() && bus.is_finite() && l2 >= 0.0 && bus >= 0.0;
        if !ok || (l2 + bus - 1.0).abs() > 1e-9 {
            return Err(ConfigError::Weights { l2, bus });
        }
        Ok(Self { l2, bus })
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn bus(&self) -> f64 {
        self.bus
    }
}

impl Default for Weights {
    fn default() -> Self {
        Self::EQUAL
    }
}

/// A QoS score in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct QosValue(f64);

impl QosValue {
    pub fn new(qos: f64) -> Result<Self, ConfigError> {
        if (0.0..=100.0).contains(&qos) {
            Ok(Self(qos))
        } else {
            Err(ConfigError::QosRange(qos))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Two-bit QoS band. `T0` is the best band, `T3` the worst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum ControlFlag {
    T0 = 0b00,
    T1 = 0b01,
    T2 = 0b10,
    T3 = 0b11,
}

impl ControlFlag {
    pub const ALL: [Self; 4] = [Self::T0, Self::T1, Self::T2, Self::T3];

    pub const fn bits(self) -> u8 {
        self as u8
    }

    pub const fn from_bits(bits: u8) -> Self {
        match bits & 0b11 {
            0b00 => Self::T0,
            0b01 => Self::T1,
            0b10 => Self::T2,
            _ => Self::T3,
        }
    }

    pub const fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ControlFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.index())
    }
}

/// Aggregated control flags of every non-QM VM.
///
/// Entry `j` occupies bits `[2j, 2j+1]` of the packed value. Entries are
/// ordered by descending criticality, then ascending VM id, so the ASIL-D
/// flag is always in bits 0-1.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ControlRegister {
    flags: Vec<(VmId, ControlFlag)>,
}

impl ControlRegister {
    /// Widest register that packs into a `u32`.
    pub const MAX_ENTRIES: usize = 16;

    /// Builds a register from flags already in layout order.
    pub fn from_ordered(flags: Vec<(VmId, ControlFlag)>) -> Self {
        debug_assert!(flags.len() <= Self::MAX_ENTRIES);
        Self { flags }
    }

    pub fn flags(&self) -> &[(VmId, ControlFlag)] {
        &self.flags
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn flag_of(&self, vm: VmId) -> Option<ControlFlag> {
        self.flags.iter().find(|(v, _)| *v == vm).map(|(_, f)| *f)
    }

    pub fn pack(&self) -> u32 {
        self.flags
            .iter()
            .enumerate()
            .fold(0, |acc, (j, (_, f))| acc | (u32::from(f.bits()) << (2 * j)))
    }

    pub fn unpack(layout: &[VmId], value: u32) -> Self {
        let flags = layout
            .iter()
            .enumerate()
            .map(|(j, vm)| (*vm, ControlFlag::from_bits((value >> (2 * j)) as u8)))
            .collect();
        Self { flags }
    }
}

/// Index into the masking map. The last mode is the fail-safe mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct DegradationMode(pub usize);

impl fmt::Display for DegradationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Masked interrupts for each degradation mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskingMap {
    modes: Vec<BTreeSet<IrqId>>,
}

impl MaskingMap {
    pub fn new(modes: Vec<BTreeSet<IrqId>>) -> Self {
        Self { modes }
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn masked(&self, mode: DegradationMode) -> Option<&BTreeSet<IrqId>> {
        self.modes.get(mode.0)
    }

    pub fn modes(&self) -> &[BTreeSet<IrqId>] {
        &self.modes
    }

    pub fn fail_safe(&self) -> DegradationMode {
        DegradationMode(self.modes.len().saturating_sub(1))
    }
}

/// Solo profile of the task activated by one interrupt. Rates are events
/// per microsecond of solo execution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskProfile {
    pub footprint_fraction: f64,
    pub l2_rate: f64,
    pub bus_rate: f64,
    pub period_us: u64,
    pub wcet_solo_us: u64,
}

impl TaskProfile {
    /// Fraction of time the task is busy when running alone.
    pub fn duty(&self) -> f64 {
        (self.wcet_solo_us as f64 / self.period_us as f64).min(1.0)
    }

    fn check(&self) -> Result<(), &'static str> {
        let f = self.footprint_fraction;
        if !(0.0..=1.0).contains(&f) {
            return Err("footprint fraction outside [0, 1]");
        }
        for r in [self.l2_rate, self.bus_rate] {
            if !r.is_finite() || r < 0.0 {
                return Err("event rates must be finite and non-negative");
            }
        }
        if self.period_us == 0 {
            return Err("period must be positive");
        }
        if self.wcet_solo_us == 0 {
            return Err("solo WCET must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrqLine {
    pub id: IrqId,
    pub pin: u32,
    pub profile: TaskProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VmConfig {
    pub id: VmId,
    pub criticality: CriticalityLevel,
    pub irqs: Vec<IrqLine>,
    /// Explicit per-window reference; computed from the task profiles when
    /// absent.
    pub reference: Option<EventVector>,
}

/// Parameters of the linear contention model.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InterferenceParams {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub vms: Vec<VmConfig>,
    pub weights: Weights,
    pub actuation_period_us: u64,
    pub mode_count: usize,
    pub interference: InterferenceParams,
    pub llc_size: u64,
    pub stepwise_transitions: bool,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.vms.is_empty() {
            return Err(ConfigError::NoVms);
        }
        for (position, vm) in self.vms.iter().enumerate() {
            if vm.id.index() != position {
                return Err(ConfigError::VmOrder {
                    position,
                    found: vm.id,
                });
            }
            for (k, irq) in vm.irqs.iter().enumerate() {
                if irq.id.vm != vm.id || usize::from(irq.id.k) != k {
                    return Err(ConfigError::IrqOrder {
                        vm: vm.id,
                        found: irq.id,
                    });
                }
                irq.profile.check().map_err(|reason| ConfigError::Profile {
                    irq: irq.id,
                    reason,
                })?;
            }
            if let Some(r) = vm.reference {
                if !r.is_valid() {
                    return Err(ConfigError::Reference(vm.id));
                }
            }
        }
        let d = self
            .vms
            .iter()
            .filter(|v| v.criticality == CriticalityLevel::AsilD)
            .count();
        if d != 1 {
            return Err(ConfigError::AsilDCount(d));
        }
        let mut irqs: Vec<&IrqLine> = self.irqs().collect();
        irqs.sort_by_key(|l| l.pin);
        for pair in irqs.windows(2) {
            if pair[0].pin == pair[1].pin {
                return Err(ConfigError::DuplicatePin {
                    pin: pair[0].pin,
                    first: pair[0].id,
                    second: pair[1].id,
                });
            }
        }
        if self.actuation_period_us == 0 {
            return Err(ConfigError::ActuationPeriod);
        }
        if self.mode_count < 2 {
            return Err(ConfigError::ModeCount(self.mode_count));
        }
        let InterferenceParams { alpha, beta } = self.interference;
        if !(alpha.is_finite() && beta.is_finite() && alpha >= 0.0 && beta >= 0.0) {
            return Err(ConfigError::Interference);
        }
        let width = self.register_layout().len();
        if width > ControlRegister::MAX_ENTRIES {
            return Err(ConfigError::RegisterWidth {
                max: ControlRegister::MAX_ENTRIES,
                found: width,
            });
        }
        Ok(())
    }

    pub fn vm(&self, id: VmId) -> Option<&VmConfig> {
        self.vms.get(id.index())
    }

    pub fn irq(&self, id: IrqId) -> Option<&IrqLine> {
        self.vm(id.vm)?.irqs.get(usize::from(id.k))
    }

    pub fn irqs(&self) -> impl Iterator<Item = &IrqLine> {
        self.vms.iter().flat_map(|v| v.irqs.iter())
    }

    pub fn criticality(&self, vm: VmId) -> Option<CriticalityLevel> {
        self.vm(vm).map(|v| v.criticality)
    }

    /// The mode-computing VM. Panics on a config that failed validation.
    pub fn asil_d(&self) -> VmId {
        self.vms
            .iter()
            .find(|v| v.criticality == CriticalityLevel::AsilD)
            .map(|v| v.id)
            .expect("validated config has an ASIL-D VM")
    }

    /// Every IRQ that may ever be masked: all IRQs outside the ASIL-D VM.
    pub fn maskable_irqs(&self) -> impl Iterator<Item = &IrqLine> {
        self.vms
            .iter()
            .filter(|v| v.criticality != CriticalityLevel::AsilD)
            .flat_map(|v| v.irqs.iter())
    }

    /// Non-QM VMs in control-register order.
    pub fn register_layout(&self) -> Vec<VmId> {
        let mut vms: Vec<&VmConfig> = self
            .vms
            .iter()
            .filter(|v| v.criticality != CriticalityLevel::Qm)
            .collect();
        vms.sort_by(|a, b| b.criticality.cmp(&a.criticality).then(a.id.cmp(&b.id)));
        vms.into_iter().map(|v| v.id).collect()
    }

    pub fn max_bus_rate(&self) -> f64 {
        self.irqs().map(|l| l.profile.bus_rate).fold(0.0, f64::max)
    }
}
