//! Run-time mechanism: the periodic QoS feedback loop that masks colored
//! interrupts.
//!
//! Each tick runs three stages. Stage 0 turns a VM's PMU window into a QoS
//! score, Stage 1 bands it into a two-bit control flag, and Stage 2 (run
//! once, on behalf of the ASIL-D VM) packs the flags into the control
//! register, looks up the next degradation mode and rewrites the
//! distributor enable bits. QM VMs are skipped by the criticality guard.
//!
//! Seven measuring points are timed on every tick through a [`Clock`]:
//!
//! | # | point |
//! |---|-------|
//! | 1 | PMU sampling |
//! | 2 | QoS computation (per VM) |
//! | 3 | QoS decoding (per VM) |
//! | 4 | VM synchronization barrier |
//! | 5 | control logic |
//! | 6 | reference update |
//! | 7 | interrupt masking |

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::dtt::{compute_effects, validate_artifacts, Artifacts, ValidationReport};
use crate::gic::{pin_location, DistributorState, EnableOp, GicError};
use crate::types::{
    ControlFlag, ControlRegister, CriticalityLevel, DegradationMode, EventVector, IrqId,
    QosValue, SystemConfig, VmId, Weights,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RtmError {
    #[error("event counts must be finite and non-negative")]
    NegativeCount,
    #[error("QoS value {0} outside [0, 100]")]
    QosRange(f64),
    #[error("VM {0} appears twice in the control flags")]
    DuplicateVm(VmId),
    #[error("VM {0} is not part of the control register layout")]
    UnknownVm(VmId),
    #[error("no control flag for VM {0} at the synchronization barrier")]
    MissingFlag(VmId),
    #[error("no PMU sample for VM {0}")]
    MissingSample(VmId),
    #[error("control table has no entry for register {0:#x}")]
    UncoveredRegister(u32),
    #[error("degradation mode {0} is not in the masking map")]
    InvalidMode(DegradationMode),
    #[error("actuation period must be positive")]
    Period,
    #[error("artifacts do not match the configuration:\n{0}")]
    Artifacts(ValidationReport),
    #[error("IRQ {0} has no pin")]
    Unrouted(IrqId),
    #[error(transparent)]
    Gic(#[from] GicError),
}

/// Stage 0: weighted average of per-event progress ratios, scaled to
/// `[0, 100]`. Each ratio is `actual / expected` clamped to `[0, 1]`; an
/// event with zero expected count contributes a full ratio.
pub fn compute_qos(
    actual: EventVector,
    expected: EventVector,
    weights: Weights,
) -> Result<QosValue, RtmError> {
    if !actual.is_valid() || !expected.is_valid() {
        return Err(RtmError::NegativeCount);
    }
    let ratio = |a: f64, e: f64| if e == 0.0 { 1.0 } else { (a / e).clamp(0.0, 1.0) };
    let qos = 100.0
        * (weights.l2() * ratio(actual.l2_accesses, expected.l2_accesses)
            + weights.bus() * ratio(actual.bus_accesses, expected.bus_accesses));
    // Weights sum to one only within 1e-9.
    QosValue::new(qos.clamp(0.0, 100.0)).map_err(|_| RtmError::QosRange(qos))
}

/// Stage 1: bands `[75, 100]`, `[50, 75)`, `[25, 50)` and `[0, 25)` map to
/// `T0`..`T3`. Each band is closed at its lower edge.
pub fn decode_qos(qos: QosValue) -> ControlFlag {
    let q = qos.get();
    if q >= 75.0 {
        ControlFlag::T0
    } else if q >= 50.0 {
        ControlFlag::T1
    } else if q >= 25.0 {
        ControlFlag::T2
    } else {
        ControlFlag::T3
    }
}

/// [`decode_qos`] for an unchecked score.
pub fn decode_raw(qos: f64) -> Result<ControlFlag, RtmError> {
    QosValue::new(qos)
        .map(decode_qos)
        .map_err(|_| RtmError::QosRange(qos))
}

/// Packs flags into layout order. Every flag must name a distinct VM of
/// `layout`; VMs of `layout` without a flag are an error.
pub fn aggregate_register(
    flags: &[(VmId, ControlFlag)],
    layout: &[VmId],
) -> Result<ControlRegister, RtmError> {
    let mut seen = BTreeMap::new();
    for (vm, flag) in flags {
        if !layout.contains(vm) {
            return Err(RtmError::UnknownVm(*vm));
        }
        if seen.insert(*vm, *flag).is_some() {
            return Err(RtmError::DuplicateVm(*vm));
        }
    }
    let ordered = layout
        .iter()
        .map(|vm| seen.get(vm).map(|f| (*vm, *f)).ok_or(RtmError::MissingFlag(*vm)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ControlRegister::from_ordered(ordered))
}

/// Share of an actuation period spent in the handler, in percent.
pub fn overhead_model(worst_case_cost_us: f64, period_us: f64) -> Result<f64, RtmError> {
    if period_us.is_nan() || period_us <= 0.0 {
        return Err(RtmError::Period);
    }
    Ok(100.0 * worst_case_cost_us / period_us)
}

/// Monotonic nanosecond time source for the measuring points.
pub trait Clock {
    fn now_ns(&mut self) -> u64;
}

/// Clock that never advances. Keeps simulation output deterministic.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now_ns(&mut self) -> u64 {
        0
    }
}

impl<C: Clock + ?Sized> Clock for &mut C {
    fn now_ns(&mut self) -> u64 {
        (**self).now_ns()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MeasuringPoint {
    PmuSampling,
    QosComputation,
    QosDecoding,
    VmSync,
    ControlLogic,
    ReferenceUpdate,
    InterruptMasking,
}

impl MeasuringPoint {
    pub const ALL: [Self; 7] = [
        Self::PmuSampling,
        Self::QosComputation,
        Self::QosDecoding,
        Self::VmSync,
        Self::ControlLogic,
        Self::ReferenceUpdate,
        Self::InterruptMasking,
    ];

    /// One-based number of the point.
    pub const fn number(self) -> usize {
        self as usize + 1
    }

    pub const fn name(self) -> &'static str {
        match self {
            Self::PmuSampling => "pmu_sampling",
            Self::QosComputation => "qos_computation",
            Self::QosDecoding => "qos_decoding",
            Self::VmSync => "vm_sync",
            Self::ControlLogic => "control_logic",
            Self::ReferenceUpdate => "reference_update",
            Self::InterruptMasking => "interrupt_masking",
        }
    }
}

impl fmt::Display for MeasuringPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MP{} {}", self.number(), self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PointStats {
    pub count: u64,
    pub total_ns: u64,
    pub max_ns: u64,
}

impl PointStats {
    pub fn record(&mut self, ns: u64) {
        self.count += 1;
        self.total_ns = self.total_ns.saturating_add(ns);
        self.max_ns = self.max_ns.max(ns);
    }

    pub fn mean_ns(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.total_ns as f64 / self.count as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Instrumentation {
    points: [PointStats; 7],
    /// Whole handler, first sample to last write.
    pub handler: PointStats,
}

impl Instrumentation {
    pub fn point(&self, mp: MeasuringPoint) -> &PointStats {
        &self.points[mp as usize]
    }

    pub fn rows(&self) -> impl Iterator<Item = (MeasuringPoint, &PointStats)> {
        MeasuringPoint::ALL.iter().map(move |mp| (*mp, &self.points[*mp as usize]))
    }

    fn record(&mut self, mp: MeasuringPoint, ns: u64) {
        self.points[mp as usize].record(ns);
    }
}

/// Source of per-window PMU deltas, one per VM.
pub trait PmuSource {
    fn sample(&mut self, vm: VmId) -> Option<EventVector>;
}

impl PmuSource for [EventVector] {
    fn sample(&mut self, vm: VmId) -> Option<EventVector> {
        self.get(vm.index()).copied()
    }
}

impl PmuSource for Vec<EventVector> {
    fn sample(&mut self, vm: VmId) -> Option<EventVector> {
        self.get(vm.index()).copied()
    }
}

/// One enable-register write issued by [`RtmState::mask_irqs`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PinWrite {
    pub op: EnableOp,
    pub irq: IrqId,
    pub pin: u32,
    pub word: usize,
    pub value: u32,
}

impl fmt::Display for PinWrite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}[{}]={:#010x} irq {} pin {}",
            self.op, self.word, self.value, self.irq, self.pin
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutcome {
    /// QoS per VM in id order; `None` for QM VMs.
    pub qos: Vec<Option<QosValue>>,
    pub register: ControlRegister,
    pub previous_mode: DegradationMode,
    pub mode: DegradationMode,
    pub writes: Vec<PinWrite>,
}

#[derive(Debug, Clone, PartialEq)]
struct VmRuntime {
    id: VmId,
    criticality: CriticalityLevel,
    /// (irq, l2 events, bus events) per window when unmasked.
    tasks: Vec<(IrqId, f64, f64)>,
    base_reference: EventVector,
    reference: EventVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RtmState {
    current_mode: DegradationMode,
    last_register: ControlRegister,
    artifacts: Artifacts,
    instrumentation: Instrumentation,
    vms: Vec<VmRuntime>,
    layout: Vec<VmId>,
    pins: BTreeMap<IrqId, u32>,
    /// Position in the effect ranking; 0 is the highest effect.
    effect_rank: BTreeMap<IrqId, usize>,
    stepwise: bool,
}

impl RtmState {
    /// Binds artifacts to the configuration they were generated for. The RTM
    /// starts in mode 0; call [`RtmState::apply_initial_mode`] to program the
    /// distributor accordingly.
    pub fn new(config: &SystemConfig, artifacts: Artifacts) -> Result<Self, RtmError> {
        let report = validate_artifacts(&artifacts, config);
        if !report.is_ok() {
            return Err(RtmError::Artifacts(report));
        }
        let window = config.actuation_period_us as f64;
        let vms = config
            .vms
            .iter()
            .map(|vm| {
                let base = artifacts.reference(vm.id).unwrap_or(EventVector::ZERO);
                VmRuntime {
                    id: vm.id,
                    criticality: vm.criticality,
                    tasks: vm
                        .irqs
                        .iter()
                        .map(|l| {
                            let busy = window * l.profile.duty();
                            (l.id, l.profile.l2_rate * busy, l.profile.bus_rate * busy)
                        })
                        .collect(),
                    base_reference: base,
                    reference: base,
                }
            })
            .collect();
        let effect_rank = compute_effects(config)
            .iter()
            .enumerate()
            .map(|(rank, e)| (e.irq, rank))
            .collect();
        let mut state = Self {
            current_mode: DegradationMode(0),
            last_register: ControlRegister::default(),
            artifacts,
            instrumentation: Instrumentation::default(),
            vms,
            layout: config.register_layout(),
            pins: config.irqs().map(|l| (l.id, l.pin)).collect(),
            effect_rank,
            stepwise: config.stepwise_transitions,
        };
        state.update_references(DegradationMode(0))?;
        Ok(state)
    }

    pub fn current_mode(&self) -> DegradationMode {
        self.current_mode
    }

    pub fn last_register(&self) -> &ControlRegister {
        &self.last_register
    }

    pub fn artifacts(&self) -> &Artifacts {
        &self.artifacts
    }

    pub fn instrumentation(&self) -> &Instrumentation {
        &self.instrumentation
    }

    pub fn layout(&self) -> &[VmId] {
        &self.layout
    }

    pub fn stepwise(&self) -> bool {
        self.stepwise
    }

    pub fn set_stepwise(&mut self, stepwise: bool) {
        self.stepwise = stepwise;
    }

    /// Current per-window reference of `vm`.
    pub fn reference(&self, vm: VmId) -> Option<EventVector> {
        self.vms.get(vm.index()).map(|v| v.reference)
    }

    fn masked(&self, mode: DegradationMode) -> Result<&BTreeSet<IrqId>, RtmError> {
        self.artifacts
            .masking_map
            .masked(mode)
            .ok_or(RtmError::InvalidMode(mode))
    }

    /// Stage 2 control logic. With stepwise transitions the result moves at
    /// most one mode toward the table's target.
    pub fn compute_dm(&self, register: &ControlRegister) -> Result<DegradationMode, RtmError> {
        let packed = register.pack();
        let target = self
            .artifacts
            .control_table
            .lookup(packed)
            .ok_or(RtmError::UncoveredRegister(packed))?;
        if !self.stepwise {
            return Ok(target);
        }
        let current = self.current_mode.0;
        Ok(DegradationMode(match target.0.cmp(&current) {
            core::cmp::Ordering::Greater => current + 1,
            core::cmp::Ordering::Less => current - 1,
            core::cmp::Ordering::Equal => current,
        }))
    }

    /// Rescales intermediate-criticality references to the throughput still
    /// achievable in `mode`: masked tasks contribute nothing. The ASIL-D
    /// reference never changes.
    pub fn update_references(&mut self, mode: DegradationMode) -> Result<(), RtmError> {
        let masked = self
            .artifacts
            .masking_map
            .masked(mode)
            .ok_or(RtmError::InvalidMode(mode))?;
        for vm in &mut self.vms {
            if matches!(vm.criticality, CriticalityLevel::AsilD | CriticalityLevel::Qm) {
                continue;
            }
            let (mut l2_all, mut bus_all, mut l2_live, mut bus_live) = (0.0, 0.0, 0.0, 0.0);
            for (irq, l2, bus) in &vm.tasks {
                l2_all += l2;
                bus_all += bus;
                if !masked.contains(irq) {
                    l2_live += l2;
                    bus_live += bus;
                }
            }
            let frac = |live: f64, all: f64| if all > 0.0 { live / all } else { 1.0 };
            vm.reference = vm
                .base_reference
                .scaled(frac(l2_live, l2_all), frac(bus_live, bus_all));
        }
        Ok(())
    }

    /// Moves the distributor from the current mode's masked set to `mode`'s.
    /// Newly masked pins are cleared highest effect first; released pins are
    /// re-enabled lowest effect first.
    pub fn mask_irqs(
        &mut self,
        mode: DegradationMode,
        distributor: &mut DistributorState,
    ) -> Result<Vec<PinWrite>, RtmError> {
        let new = self.masked(mode)?;
        let old = self.masked(self.current_mode)?;
        let mut to_mask: Vec<IrqId> = new.difference(old).copied().collect();
        let mut to_unmask: Vec<IrqId> = old.difference(new).copied().collect();
        to_mask.sort_by_key(|irq| self.rank(*irq));
        to_unmask.sort_by_key(|irq| core::cmp::Reverse(self.rank(*irq)));

        let mut writes = Vec::with_capacity(to_mask.len() + to_unmask.len());
        let ops = to_mask
            .into_iter()
            .map(|i| (EnableOp::Clear, i))
            .chain(to_unmask.into_iter().map(|i| (EnableOp::Set, i)));
        for (op, irq) in ops {
            let pin = *self.pins.get(&irq).ok_or(RtmError::Unrouted(irq))?;
            distributor.route(pin)?;
            let (word, value) = pin_location(pin);
            distributor.write(op, word, value)?;
            writes.push(PinWrite {
                op,
                irq,
                pin,
                word,
                value,
            });
        }
        self.current_mode = mode;
        Ok(writes)
    }

    /// Programs mode 0's masked set into a fully enabled distributor.
    pub fn apply_initial_mode(
        &mut self,
        distributor: &mut DistributorState,
    ) -> Result<Vec<PinWrite>, RtmError> {
        let mode0 = DegradationMode(0);
        let mut masked: Vec<IrqId> = self.masked(mode0)?.iter().copied().collect();
        masked.sort_by_key(|irq| self.rank(*irq));
        let mut writes = Vec::new();
        for irq in masked {
            let pin = *self.pins.get(&irq).ok_or(RtmError::Unrouted(irq))?;
            let (word, value) = pin_location(pin);
            distributor.write_icenabler(word, value)?;
            writes.push(PinWrite {
                op: EnableOp::Clear,
                irq,
                pin,
                word,
                value,
            });
        }
        self.current_mode = mode0;
        self.update_references(mode0)?;
        Ok(writes)
    }

    fn rank(&self, irq: IrqId) -> usize {
        self.effect_rank.get(&irq).copied().unwrap_or(usize::MAX)
    }

    /// The timer handler. Stages 0 and 1 run for every non-QM VM; Stage 2
    /// runs once all flags are in.
    pub fn tick<P, C>(
        &mut self,
        pmu: &mut P,
        distributor: &mut DistributorState,
        clock: &mut C,
    ) -> Result<TickOutcome, RtmError>
    where
        P: PmuSource + ?Sized,
        C: Clock + ?Sized,
    {
        let start = clock.now_ns();

        let mut samples = Vec::with_capacity(self.vms.len());
        for vm in &self.vms {
            samples.push(pmu.sample(vm.id).ok_or(RtmError::MissingSample(vm.id))?);
        }
        let mut t = clock.now_ns();
        self.instrumentation
            .record(MeasuringPoint::PmuSampling, t.saturating_sub(start));

        let weights = self.artifacts.weights;
        let mut qos = Vec::with_capacity(self.vms.len());
        let mut flags = Vec::with_capacity(self.layout.len());
        for (vm, sample) in self.vms.iter().zip(&samples) {
            if vm.criticality == CriticalityLevel::Qm {
                qos.push(None);
                continue;
            }
            let q = compute_qos(*sample, vm.reference, weights)?;
            let t2 = clock.now_ns();
            self.instrumentation
                .record(MeasuringPoint::QosComputation, t2.saturating_sub(t));
            let flag = decode_qos(q);
            t = clock.now_ns();
            self.instrumentation
                .record(MeasuringPoint::QosDecoding, t.saturating_sub(t2));
            qos.push(Some(q));
            flags.push((vm.id, flag));
        }

        let register = aggregate_register(&flags, &self.layout)?;
        let t4 = clock.now_ns();
        self.instrumentation
            .record(MeasuringPoint::VmSync, t4.saturating_sub(t));

        let previous_mode = self.current_mode;
        let mode = self.compute_dm(&register)?;
        let t5 = clock.now_ns();
        self.instrumentation
            .record(MeasuringPoint::ControlLogic, t5.saturating_sub(t4));

        self.update_references(mode)?;
        let t6 = clock.now_ns();
        self.instrumentation
            .record(MeasuringPoint::ReferenceUpdate, t6.saturating_sub(t5));

        let writes = self.mask_irqs(mode, distributor)?;
        let end = clock.now_ns();
        self.instrumentation
            .record(MeasuringPoint::InterruptMasking, end.saturating_sub(t6));
        self.instrumentation.handler.record(end.saturating_sub(start));

        self.last_register = register.clone();
        Ok(TickOutcome {
            qos,
            register,
            previous_mode,
            mode,
            writes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtt::{build_artifacts, Overrides};
    use crate::fixtures;
    use alloc::vec;
    use proptest::prelude::*;

    fn qos(actual: (f64, f64), expected: (f64, f64), w: (f64, f64)) -> f64 {
        compute_qos(
            EventVector::new(actual.0, actual.1),
            EventVector::new(expected.0, expected.1),
            Weights::new(w.0, w.1).unwrap(),
        )
        .unwrap()
        .get()
    }

    #[test]
    fn qos_examples() {
        assert_eq!(qos((10.0, 20.0), (10.0, 20.0), (0.3, 0.7)), 100.0);
        assert_eq!(qos((0.0, 0.0), (5.0, 9.0), (0.5, 0.5)), 0.0);
        // 100 * (0.5 * 0.8 + 0.5 * 0.6)
        let oracle = 100.0 * (0.5 * (80.0 / 100.0) + 0.5 * (60.0 / 100.0));
        let got = qos((80.0, 60.0), (100.0, 100.0), (0.5, 0.5));
        assert!((got - oracle).abs() < 1e-9);
        assert!((got - 70.0).abs() < 1e-9);
    }

    #[test]
    fn qos_clamps_and_handles_zero_expected() {
        assert_eq!(qos((500.0, 500.0), (100.0, 100.0), (0.5, 0.5)), 100.0);
        assert_eq!(qos((0.0, 0.0), (0.0, 0.0), (0.5, 0.5)), 100.0);
        assert_eq!(qos((0.0, 7.0), (0.0, 14.0), (0.5, 0.5)), 75.0);
    }

    #[test]
    fn negative_counts_are_rejected() {
        let w = Weights::EQUAL;
        assert_eq!(
            compute_qos(EventVector::new(-1.0, 0.0), EventVector::new(1.0, 1.0), w),
            Err(RtmError::NegativeCount)
        );
        assert_eq!(
            compute_qos(EventVector::new(1.0, 0.0), EventVector::new(1.0, f64::NAN), w),
            Err(RtmError::NegativeCount)
        );
    }

    #[test]
    fn decode_examples() {
        use ControlFlag::*;
        for (q, f) in [(80.0, T0), (75.0, T0), (50.0, T1), (10.0, T3), (0.0, T3), (100.0, T0)] {
            assert_eq!(decode_raw(q).unwrap(), f, "qos {q}");
        }
        assert!(decode_raw(100.5).is_err());
        assert!(decode_raw(-0.1).is_err());
    }

    #[test]
    fn band_edges() {
        use ControlFlag::*;
        for eps in [1e-9, 1e-6, 0.5] {
            assert_eq!(decode_raw(75.0 - eps).unwrap(), T1);
            assert_eq!(decode_raw(50.0 - eps).unwrap(), T2);
            assert_eq!(decode_raw(25.0 - eps).unwrap(), T3);
            assert_eq!(decode_raw(75.0 + eps).unwrap(), T0);
            assert_eq!(decode_raw(50.0 + eps).unwrap(), T1);
            assert_eq!(decode_raw(25.0 + eps).unwrap(), T2);
        }
        assert_eq!(decode_raw(25.0).unwrap(), T2);
        assert_eq!(decode_raw(50.0).unwrap(), T1);
        assert_eq!(decode_raw(75.0).unwrap(), T0);
    }

    #[test]
    fn register_packing() {
        let layout = [VmId(0), VmId(1), VmId(2)];
        let r = aggregate_register(&[(VmId(0), ControlFlag::T0)], &[VmId(0)]).unwrap();
        assert_eq!(r.pack(), 0);
        // Given out of order on purpose.
        let flags = [
            (VmId(2), ControlFlag::T0),
            (VmId(0), ControlFlag::T3),
            (VmId(1), ControlFlag::T1),
        ];
        let r = aggregate_register(&flags, &layout).unwrap();
        // D=11 in bits 0-1, C=01 in bits 2-3, B=00 in bits 4-5.
        let oracle = 0b11 | (0b01 << 2);
        assert_eq!(r.pack(), oracle);
        assert_eq!(r.pack(), 0x07);
        let empty = aggregate_register(&[], &[]).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.pack(), 0);
    }

    #[test]
    fn register_errors() {
        let layout = [VmId(0), VmId(1)];
        assert_eq!(
            aggregate_register(&[(VmId(0), ControlFlag::T0), (VmId(0), ControlFlag::T1)], &layout),
            Err(RtmError::DuplicateVm(VmId(0)))
        );
        assert_eq!(
            aggregate_register(&[(VmId(0), ControlFlag::T0)], &layout),
            Err(RtmError::MissingFlag(VmId(1)))
        );
        assert_eq!(
            aggregate_register(&[(VmId(5), ControlFlag::T0)], &layout),
            Err(RtmError::UnknownVm(VmId(5)))
        );
    }

    #[test]
    fn overhead_examples() {
        let at10 = overhead_model(0.782, 10.0).unwrap();
        assert!((at10 - 7.82).abs() < 1e-9);
        assert!((at10 - 7.81).abs() <= 0.05);
        assert!(overhead_model(0.782, 100.0).unwrap() < 0.8);
        assert_eq!(overhead_model(0.0, 37.0).unwrap(), 0.0);
        assert_eq!(overhead_model(1.0, 0.0), Err(RtmError::Period));
        assert_eq!(overhead_model(1.0, -3.0), Err(RtmError::Period));
    }

    fn rtm_for(config: &SystemConfig, map: Option<crate::types::MaskingMap>) -> (RtmState, DistributorState) {
        let artifacts = build_artifacts(
            config,
            &Overrides {
                masking_map: map,
                ..Overrides::default()
            },
        )
        .unwrap();
        let mut rtm = RtmState::new(config, artifacts).unwrap();
        let mut dist = DistributorState::from_config(config);
        rtm.apply_initial_mode(&mut dist).unwrap();
        (rtm, dist)
    }

    fn flags_d(cf: ControlFlag, width: usize) -> ControlRegister {
        let layout: Vec<VmId> = (0..width as u16).map(VmId).collect();
        let mut f = vec![ControlFlag::T0; width];
        f[0] = cf;
        ControlRegister::from_ordered(layout.into_iter().zip(f).collect())
    }

    #[test]
    fn compute_dm_stepwise_and_direct() {
        let mut config = fixtures::dual_vm_setup();
        let (mut rtm, _) = rtm_for(&config, None);
        assert_eq!(rtm.compute_dm(&flags_d(ControlFlag::T0, 1)).unwrap(), DegradationMode(0));
        assert_eq!(rtm.compute_dm(&flags_d(ControlFlag::T3, 1)).unwrap(), DegradationMode(1));
        rtm.current_mode = DegradationMode(1);
        assert_eq!(rtm.compute_dm(&flags_d(ControlFlag::T3, 1)).unwrap(), DegradationMode(2));
        rtm.current_mode = DegradationMode(2);
        assert_eq!(rtm.compute_dm(&flags_d(ControlFlag::T3, 1)).unwrap(), DegradationMode(3));

        config.stepwise_transitions = false;
        let (rtm, _) = rtm_for(&config, None);
        assert_eq!(rtm.compute_dm(&flags_d(ControlFlag::T3, 1)).unwrap(), DegradationMode(3));
    }

    #[test]
    fn masking_dual_vm_mode_one_disables_irq2_and_irq3() {
        let config = fixtures::dual_vm_setup();
        let (mut rtm, mut dist) = rtm_for(&config, Some(fixtures::dual_vm_table_map()));
        let pin = |k: u16| config.irq(IrqId::new(1, k)).unwrap().pin;
        assert!(!dist.is_delivery_enabled(pin(3)).unwrap());
        assert!(dist.is_delivery_enabled(pin(2)).unwrap());
        let writes = rtm.mask_irqs(DegradationMode(1), &mut dist).unwrap();
        assert_eq!(writes.len(), 1);
        assert!(!dist.is_delivery_enabled(pin(2)).unwrap());
        assert!(!dist.is_delivery_enabled(pin(3)).unwrap());
        assert!(dist.is_delivery_enabled(pin(1)).unwrap());

        let before = dist.clone();
        assert!(rtm.mask_irqs(DegradationMode(1), &mut dist).unwrap().is_empty());
        assert_eq!(before, dist);
    }

    #[test]
    fn fail_safe_release_is_lowest_effect_first() {
        let config = fixtures::quad_vm_setup2();
        let (mut rtm, mut dist) = rtm_for(&config, Some(fixtures::setup2_table_map()));
        rtm.mask_irqs(DegradationMode(3), &mut dist).unwrap();
        let writes = rtm.mask_irqs(DegradationMode(0), &mut dist).unwrap();
        assert!(writes.iter().all(|w| w.op == EnableOp::Set));
        for line in config.maskable_irqs() {
            assert!(dist.is_delivery_enabled(line.pin).unwrap());
        }
        // Replay against the effect ranking, reversed.
        let mut oracle: Vec<IrqId> = compute_effects(&config).iter().map(|e| e.irq).collect();
        oracle.reverse();
        let got: Vec<IrqId> = writes.iter().map(|w| w.irq).collect();
        assert_eq!(got, oracle);
    }

    #[test]
    fn references_follow_mode() {
        let config = fixtures::quad_vm_setup2();
        let (mut rtm, _) = rtm_for(&config, Some(fixtures::setup2_table_map()));
        let base = |vm| rtm.artifacts().reference(VmId(vm)).unwrap();
        let (c0, b0, d0) = (base(1), base(2), base(0));
        assert_eq!(rtm.reference(VmId(1)).unwrap(), c0);
        rtm.update_references(DegradationMode(3)).unwrap();
        assert_eq!(rtm.reference(VmId(1)).unwrap(), EventVector::ZERO);
        assert_eq!(rtm.reference(VmId(2)).unwrap(), EventVector::ZERO);
        assert_eq!(rtm.reference(VmId(0)).unwrap(), d0);
        let q = compute_qos(EventVector::ZERO, EventVector::ZERO, Weights::EQUAL).unwrap();
        assert_eq!(q.get(), 100.0);
        rtm.update_references(DegradationMode(0)).unwrap();
        assert_eq!(rtm.reference(VmId(2)).unwrap(), b0);
    }

    #[test]
    fn masking_one_of_two_equal_tasks_halves_reference() {
        let mut config = fixtures::quad_vm(&[[0.25; 4]; 3], 0.0);
        for vm in &mut config.vms[1..] {
            vm.irqs.truncate(2);
        }
        let all: BTreeSet<IrqId> = config.maskable_irqs().map(|l| l.id).collect();
        let one: BTreeSet<IrqId> = [IrqId::new(1, 0)].into_iter().collect();
        let map = crate::types::MaskingMap::new(vec![BTreeSet::new(), one.clone(), one, all]);
        let (mut rtm, _) = rtm_for(&config, Some(map));
        let full = rtm.reference(VmId(1)).unwrap();
        rtm.update_references(DegradationMode(1)).unwrap();
        let half = rtm.reference(VmId(1)).unwrap();
        assert!((half.l2_accesses - full.l2_accesses / 2.0).abs() < 1e-9);
        assert!((half.bus_accesses - full.bus_accesses / 2.0).abs() < 1e-9);
    }

    fn samples_at(rtm: &RtmState, fractions: &[f64]) -> Vec<EventVector> {
        fractions
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let r = rtm.reference(VmId(i as u16)).unwrap_or(EventVector::new(100.0, 100.0));
                r.scaled(*f, *f)
            })
            .collect()
    }

    #[test]
    fn steady_state_tick_writes_nothing() {
        let config = fixtures::quad_vm_setup2();
        let (mut rtm, mut dist) = rtm_for(&config, Some(fixtures::setup2_table_map()));
        let before = dist.clone();
        let mut s = samples_at(&rtm, &[1.0; 4]);
        let out = rtm.tick(&mut s, &mut dist, &mut NullClock).unwrap();
        assert_eq!(out.mode, DegradationMode(0));
        assert!(out.writes.is_empty());
        assert_eq!(dist, before);
        assert_eq!(out.register.pack(), 0);
        assert!(out.qos[3].is_none(), "QM VM is skipped by the guard");
        assert!(out.qos[..3].iter().all(|q| q.unwrap().get() == 100.0));
    }

    #[test]
    fn degraded_critical_vm_moves_toward_mode_two() {
        let mut config = fixtures::quad_vm_setup2();
        config.stepwise_transitions = false;
        let (mut rtm, mut dist) = rtm_for(&config, Some(fixtures::setup2_table_map()));
        let mut s = samples_at(&rtm, &[0.4, 1.0, 1.0, 1.0]);
        let out = rtm.tick(&mut s, &mut dist, &mut NullClock).unwrap();
        assert!((out.qos[0].unwrap().get() - 40.0).abs() < 1e-9);
        assert_eq!(out.register.flag_of(VmId(0)), Some(ControlFlag::T2));
        assert_eq!(out.mode, DegradationMode(2));
    }

    #[test]
    fn missing_sample_is_an_error() {
        let config = fixtures::dual_vm_setup();
        let (mut rtm, mut dist) = rtm_for(&config, None);
        let mut s = vec![EventVector::ZERO];
        assert_eq!(
            rtm.tick(&mut s, &mut dist, &mut NullClock),
            Err(RtmError::MissingSample(VmId(1)))
        );
    }

    struct StepClock(u64);
    impl Clock for StepClock {
        fn now_ns(&mut self) -> u64 {
            self.0 += 7;
            self.0
        }
    }

    #[test]
    fn instrumentation_counts_every_point() {
        let config = fixtures::quad_vm_setup2();
        let (mut rtm, mut dist) = rtm_for(&config, Some(fixtures::setup2_table_map()));
        let mut clock = StepClock(0);
        for f in [1.0, 0.6, 0.3, 0.1, 1.0] {
            let mut s = samples_at(&rtm, &[f, 1.0, 1.0, 1.0]);
            rtm.tick(&mut s, &mut dist, &mut clock).unwrap();
        }
        let inst = rtm.instrumentation();
        assert_eq!(inst.rows().count(), 7);
        for (mp, stats) in inst.rows() {
            let per_tick = if matches!(mp, MeasuringPoint::QosComputation | MeasuringPoint::QosDecoding) { 3 } else { 1 };
            assert_eq!(stats.count, 5 * per_tick, "{mp}");
            assert!(stats.max_ns as f64 >= stats.mean_ns());
        }
        assert_eq!(inst.handler.count, 5);
    }

    proptest! {
        #[test]
        fn qos_is_pure_and_monotone(
            a in (0.0..1e6f64, 0.0..1e6f64),
            e in (0.0..1e6f64, 0.0..1e6f64),
            bump in 0.0..1e5f64,
            wl2 in 0.0..=1.0f64,
        ) {
            let w = Weights::new(wl2, 1.0 - wl2).unwrap();
            let actual = EventVector::new(a.0, a.1);
            let expected = EventVector::new(e.0, e.1);
            let q = compute_qos(actual, expected, w).unwrap();
            prop_assert_eq!(q, compute_qos(actual, expected, w).unwrap());
            prop_assert_eq!(decode_qos(q), decode_qos(q));
            let more = compute_qos(EventVector::new(a.0 + bump, a.1 + bump), expected, w).unwrap();
            prop_assert!(more.get() >= q.get() - 1e-9);
            let harder = compute_qos(actual, EventVector::new(e.0 + bump, e.1 + bump), w).unwrap();
            prop_assert!(harder.get() <= q.get() + 1e-9);
        }

        #[test]
        fn aggregate_is_deterministic(bits in proptest::collection::vec(0u8..4, 0..8)) {
            let layout: Vec<VmId> = (0..bits.len() as u16).map(VmId).collect();
            let flags: Vec<(VmId, ControlFlag)> =
                layout.iter().zip(&bits).map(|(v, b)| (*v, ControlFlag::from_bits(*b))).collect();
            let mut rev = flags.clone();
            rev.reverse();
            let a = aggregate_register(&flags, &layout).unwrap();
            let b = aggregate_register(&rev, &layout).unwrap();
            prop_assert_eq!(a.pack(), b.pack());
            prop_assert_eq!(ControlRegister::unpack(&layout, a.pack()), a);
        }
    }
}
