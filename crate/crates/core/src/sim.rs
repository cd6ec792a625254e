//! Deterministic discrete-time simulator of a multicore mixed-criticality
//! system.
//!
//! Every interrupt activates one task. Tasks of different VMs contend for
//! the shared LLC and bus through a linear model: a VM's slowdown is
//! `1 + alpha * sum(footprint + beta * bus_rate / max_bus_rate)` over the
//! running, delivery-enabled tasks of every other VM. A running task whose
//! pin is disabled is suspended: it neither progresses nor interferes.
//! Triggers that arrive while a pin is disabled (or while the task is still
//! busy) latch a single pending activation, like a GIC pending bit.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dtt::{compute_references, Artifacts};
use crate::gic::{DistributorState, GicError};
use crate::rtm::{compute_qos, decode_qos, Clock, Instrumentation, NullClock, PinWrite, PmuSource, RtmError, RtmState};
use crate::types::{
    ControlFlag, CriticalityLevel, DegradationMode, EventVector, IrqId, SystemConfig, VmId,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("scenario references unknown VM {0}")]
    UnknownVm(VmId),
    #[error("scenario references unknown IRQ {0}")]
    UnknownIrq(IrqId),
    #[error("periodic source {0} has a zero period")]
    ZeroPeriod(IrqId),
    #[error("interference scale for VM {0} must be finite and non-negative")]
    Scale(VmId),
    #[error("duration {duration} us is not a multiple of the {tick} us tick")]
    Duration { duration: u64, tick: u64 },
    #[error("actuation period {period} us is not a multiple of the {tick} us tick")]
    Period { period: u64, tick: u64 },
    #[error("tick quantum must be positive")]
    Tick,
    #[error("PMU window read at {clock} us, off the actuation boundary")]
    OffBoundary { clock: u64 },
    #[error(transparent)]
    Config(#[from] crate::error::ConfigError),
    #[error(transparent)]
    Rtm(#[from] RtmError),
    #[error(transparent)]
    Gic(#[from] GicError),
}

/// Initial phase of a periodic trigger source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Fixed(u64),
    /// Drawn uniformly from `[0, period)` with the run seed.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    /// Multiplies the VM's contribution to everyone else's slowdown.
    SetInterference { vm: VmId, scale: f64 },
    Trigger(IrqId),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SetInterference { vm, scale } => write!(f, "set-interference {vm} {scale}"),
            Self::Trigger(irq) => write!(f, "trigger {irq}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedAction {
    pub at_us: u64,
    pub action: Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodicSource {
    pub irq: IrqId,
    pub period_us: u64,
    pub phase: Phase,
}

/// External stimuli. An IRQ that no directive mentions fires periodically
/// with its profile period, phase 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub actions: Vec<TimedAction>,
    pub periodic: Vec<PeriodicSource>,
}

impl Scenario {
    pub fn validate(&self, config: &SystemConfig) -> Result<(), SimError> {
        for a in &self.actions {
            match a.action {
                Action::SetInterference { vm, scale } => {
                    config.vm(vm).ok_or(SimError::UnknownVm(vm))?;
                    if !(scale.is_finite() && scale >= 0.0) {
                        return Err(SimError::Scale(vm));
                    }
                }
                Action::Trigger(irq) => {
                    config.irq(irq).ok_or(SimError::UnknownIrq(irq))?;
                }
            }
        }
        for p in &self.periodic {
            config.irq(p.irq).ok_or(SimError::UnknownIrq(p.irq))?;
            if p.period_us == 0 {
                return Err(SimError::ZeroPeriod(p.irq));
            }
        }
        Ok(())
    }

    fn mentions(&self, irq: IrqId) -> bool {
        self.periodic.iter().any(|p| p.irq == irq)
            || self
                .actions
                .iter()
                .any(|a| matches!(a.action, Action::Trigger(i) if i == irq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    pub rtm_enabled: bool,
    pub tick_us: u64,
    pub seed: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            rtm_enabled: true,
            tick_us: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskPhase {
    Idle,
    Running,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskState {
    pub irq: IrqId,
    pub pin: u32,
    pub phase: TaskPhase,
    /// Remaining solo-equivalent work of the current job, in microseconds.
    pub remaining_work: f64,
    pub completions: u64,
    pub pending: bool,
    pub next_trigger: Option<u64>,
    trigger_period: u64,
    word: usize,
    bit: u32,
    wcet: f64,
    l2_rate: f64,
    bus_rate: f64,
    /// `footprint + beta * bus_rate / max_bus_rate`.
    pressure: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceKind {
    Scenario(Action),
    Mode { from: DegradationMode, to: DegradationMode },
    Write(PinWrite),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub time_us: u64,
    pub kind: TraceKind,
}

/// One VM's numbers for one actuation window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowRecord {
    pub time_us: u64,
    pub vm: VmId,
    pub actual: EventVector,
    pub expected: EventVector,
    pub qos: Option<f64>,
    pub flag: Option<ControlFlag>,
}

pub struct SimState {
    pub clock: u64,
    pub tasks: Vec<TaskState>,
    pub distributor: DistributorState,
    pub rtm: Option<RtmState>,
    /// Cumulative per-VM events (fractional).
    pub pmu: Vec<EventVector>,
    pub trace: Vec<TraceEvent>,
    pub rng_seed: u64,
    pub windows: Vec<WindowRecord>,
    pub modes: Vec<(u64, DegradationMode)>,
    snapshot: Vec<EventVector>,
    scale: Vec<f64>,
    actions: Vec<TimedAction>,
    next_action: usize,
    tick_us: u64,
    alpha: f64,
    vm_of_task: Vec<usize>,
    references: Vec<Option<EventVector>>,
    weights: crate::types::Weights,
    criticality: Vec<CriticalityLevel>,
    contribution: Vec<f64>,
}

impl fmt::Debug for SimState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimState")
            .field("clock", &self.clock)
            .field("tasks", &self.tasks)
            .field("mode", &self.rtm.as_ref().map(|r| r.current_mode()))
            .finish_non_exhaustive()
    }
}

impl SimState {
    pub fn new(
        config: &SystemConfig,
        artifacts: Option<&Artifacts>,
        scenario: &Scenario,
        options: SimOptions,
    ) -> Result<Self, SimError> {
        config.validate()?;
        scenario.validate(config)?;
        if options.tick_us == 0 {
            return Err(SimError::Tick);
        }
        if !config.actuation_period_us.is_multiple_of(options.tick_us) {
            return Err(SimError::Period {
                period: config.actuation_period_us,
                tick: options.tick_us,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let max_bus = config.max_bus_rate();
        let beta = config.interference.beta;
        let mut tasks = Vec::new();
        let mut vm_of_task = Vec::new();
        for line in config.irqs() {
            let p = line.profile;
            let source = scenario.periodic.iter().find(|s| s.irq == line.id);
            let (next_trigger, trigger_period) = match source {
                Some(s) => {
                    let phase = match s.phase {
                        Phase::Fixed(t) => t,
                        Phase::Random => rng.random_range(0..s.period_us),
                    };
                    (Some(phase), s.period_us)
                }
                None if !scenario.mentions(line.id) => (Some(0), p.period_us),
                None => (None, 0),
            };
            let bus_norm = if max_bus > 0.0 { p.bus_rate / max_bus } else { 0.0 };
            tasks.push(TaskState {
                irq: line.id,
                pin: line.pin,
                phase: TaskPhase::Idle,
                remaining_work: 0.0,
                completions: 0,
                pending: false,
                next_trigger,
                trigger_period,
                word: crate::gic::pin_location(line.pin).0,
                bit: crate::gic::pin_location(line.pin).1,
                wcet: p.wcet_solo_us as f64,
                l2_rate: p.l2_rate,
                bus_rate: p.bus_rate,
                pressure: p.footprint_fraction + beta * bus_norm,
            });
            vm_of_task.push(line.id.vm.index());
        }

        let mut distributor = DistributorState::from_config(config);
        let mut trace = Vec::new();
        let rtm = match (options.rtm_enabled, artifacts) {
            (true, Some(a)) => {
                let mut rtm = RtmState::new(config, a.clone())?;
                for w in rtm.apply_initial_mode(&mut distributor)? {
                    trace.push(TraceEvent {
                        time_us: 0,
                        kind: TraceKind::Write(w),
                    });
                }
                Some(rtm)
            }
            _ => None,
        };
        let mut references = vec![None; config.vms.len()];
        let refs = match artifacts {
            Some(a) => a.references.clone(),
            None => compute_references(config),
        };
        for (vm, r) in refs {
            references[vm.index()] = Some(r);
        }
        let mut actions = scenario.actions.clone();
        actions.sort_by_key(|a| a.at_us);
        let vms = config.vms.len();
        Ok(Self {
            clock: 0,
            tasks,
            distributor,
            rtm,
            pmu: vec![EventVector::ZERO; vms],
            trace,
            rng_seed: options.seed,
            windows: Vec::new(),
            modes: Vec::new(),
            snapshot: vec![EventVector::ZERO; vms],
            scale: vec![1.0; vms],
            actions,
            next_action: 0,
            tick_us: options.tick_us,
            alpha: config.interference.alpha,
            vm_of_task,
            references,
            weights: config.weights,
            criticality: config.vms.iter().map(|v| v.criticality).collect(),
            contribution: vec![0.0; vms],
        })
    }

    fn enabled(&self, task: &TaskState) -> bool {
        self.distributor.words()[task.word] & task.bit != 0
    }

    fn refresh_contributions(&mut self) {
        self.contribution.iter_mut().for_each(|c| *c = 0.0);
        for (i, t) in self.tasks.iter().enumerate() {
            if t.phase == TaskPhase::Running && self.enabled(t) {
                self.contribution[self.vm_of_task[i]] += t.pressure;
            }
        }
        for (c, s) in self.contribution.iter_mut().zip(&self.scale) {
            *c *= s;
        }
    }

    /// Current slowdown of `vm` (1 means solo speed).
    pub fn slowdown(&mut self, vm: VmId) -> f64 {
        self.refresh_contributions();
        self.slowdown_cached(vm.index())
    }

    fn slowdown_cached(&self, vm: usize) -> f64 {
        let total: f64 = self.contribution.iter().sum();
        1.0 + self.alpha * (total - self.contribution[vm]).max(0.0)
    }

    fn apply_due_actions(&mut self) {
        while let Some(a) = self.actions.get(self.next_action).copied() {
            if a.at_us > self.clock {
                break;
            }
            self.next_action += 1;
            match a.action {
                Action::SetInterference { vm, scale } => self.scale[vm.index()] = scale,
                Action::Trigger(irq) => {
                    if let Some(t) = self.tasks.iter_mut().find(|t| t.irq == irq) {
                        t.pending = true;
                    }
                }
            }
            self.trace.push(TraceEvent {
                time_us: self.clock,
                kind: TraceKind::Scenario(a.action),
            });
        }
    }

    /// Advances the clock by one tick quantum, invoking the RTM at actuation
    /// boundaries.
    pub fn step<C: Clock + ?Sized>(
        &mut self,
        actuation_period_us: u64,
        clock: &mut C,
    ) -> Result<(), SimError> {
        self.apply_due_actions();
        let now = self.clock;
        for i in 0..self.tasks.len() {
            let enabled = self.enabled(&self.tasks[i]);
            let t = &mut self.tasks[i];
            while let Some(due) = t.next_trigger {
                if due > now {
                    break;
                }
                t.pending = true;
                t.next_trigger = (t.trigger_period > 0).then(|| due + t.trigger_period);
            }
            if t.phase == TaskPhase::Idle && t.pending && enabled {
                t.pending = false;
                t.phase = TaskPhase::Running;
                t.remaining_work = t.wcet;
            }
        }

        self.refresh_contributions();
        let tick = self.tick_us as f64;
        for i in 0..self.tasks.len() {
            if self.tasks[i].phase != TaskPhase::Running || !self.enabled(&self.tasks[i]) {
                continue;
            }
            let vm = self.vm_of_task[i];
            let s = self.slowdown_cached(vm);
            let t = &mut self.tasks[i];
            let done = (tick / s).min(t.remaining_work);
            t.remaining_work -= done;
            let pmu = &mut self.pmu[vm];
            pmu.l2_accesses += t.l2_rate * done;
            pmu.bus_accesses += t.bus_rate * done;
            if t.remaining_work <= 1e-9 {
                t.remaining_work = 0.0;
                t.completions += 1;
                t.phase = TaskPhase::Idle;
            }
        }

        self.clock += self.tick_us;
        if self.clock.is_multiple_of(actuation_period_us) {
            self.actuate(actuation_period_us, clock)?;
        }
        Ok(())
    }

    /// Event deltas since the previous actuation boundary. Counts are whole
    /// events: the cumulative counters are floored before differencing.
    pub fn pmu_window_delta(
        &mut self,
        vm: VmId,
        actuation_period_us: u64,
    ) -> Result<EventVector, SimError> {
        if !self.clock.is_multiple_of(actuation_period_us) {
            return Err(SimError::OffBoundary { clock: self.clock });
        }
        let i = vm.index();
        let now = self.pmu[i];
        let floor = |x: f64| x as u64 as f64;
        let prev = self.snapshot[i];
        let delta = EventVector::new(
            floor(now.l2_accesses) - floor(prev.l2_accesses),
            floor(now.bus_accesses) - floor(prev.bus_accesses),
        );
        self.snapshot[i] = now;
        Ok(delta)
    }

    fn actuate<C: Clock + ?Sized>(
        &mut self,
        actuation_period_us: u64,
        clock: &mut C,
    ) -> Result<(), SimError> {
        let mut samples = Vec::with_capacity(self.pmu.len());
        for vm in 0..self.pmu.len() {
            samples.push(self.pmu_window_delta(VmId(vm as u16), actuation_period_us)?);
        }
        let time = self.clock;
        match &mut self.rtm {
            Some(rtm) => {
                let expected: Vec<Option<EventVector>> = (0..samples.len())
                    .map(|vm| {
                        (self.criticality[vm] != CriticalityLevel::Qm)
                            .then(|| rtm.reference(VmId(vm as u16)).unwrap_or_default())
                    })
                    .collect();
                let mut source = Sampled(&samples);
                let out = rtm.tick(&mut source, &mut self.distributor, clock)?;
                for (vm, (sample, q)) in samples.iter().zip(&out.qos).enumerate() {
                    let vm_id = VmId(vm as u16);
                    self.windows.push(WindowRecord {
                        time_us: time,
                        vm: vm_id,
                        actual: *sample,
                        expected: expected[vm].unwrap_or_default(),
                        qos: q.map(|q| q.get()),
                        flag: out.register.flag_of(vm_id),
                    });
                }
                if out.mode != out.previous_mode {
                    self.trace.push(TraceEvent {
                        time_us: time,
                        kind: TraceKind::Mode {
                            from: out.previous_mode,
                            to: out.mode,
                        },
                    });
                }
                for w in out.writes {
                    self.trace.push(TraceEvent {
                        time_us: time,
                        kind: TraceKind::Write(w),
                    });
                }
                self.modes.push((time, out.mode));
            }
            None => {
                for (vm, sample) in samples.iter().enumerate() {
                    let expected = self.references[vm];
                    let qos = match expected {
                        Some(e) if self.criticality[vm] != CriticalityLevel::Qm => {
                            Some(compute_qos(*sample, e, self.weights)?)
                        }
                        _ => None,
                    };
                    self.windows.push(WindowRecord {
                        time_us: time,
                        vm: VmId(vm as u16),
                        actual: *sample,
                        expected: expected.unwrap_or_default(),
                        qos: qos.map(|q| q.get()),
                        flag: qos.map(decode_qos),
                    });
                }
            }
        }
        Ok(())
    }
}

struct Sampled<'a>(&'a [EventVector]);

impl PmuSource for Sampled<'_> {
    fn sample(&mut self, vm: VmId) -> Option<EventVector> {
        self.0.get(vm.index()).copied()
    }
}

/// Slowdown of `vm` from the running, delivery-enabled tasks of every
/// other VM, straight from the model definition.
pub fn slowdown(vm: VmId, state: &SimState, config: &SystemConfig) -> f64 {
    let max_bus = config.max_bus_rate();
    let beta = config.interference.beta;
    let mut sum = 0.0;
    for (line, task) in config.irqs().zip(&state.tasks) {
        if line.id.vm == vm || task.phase != TaskPhase::Running {
            continue;
        }
        if !state.distributor.is_delivery_enabled(line.pin).unwrap_or(false) {
            continue;
        }
        let bus = if max_bus > 0.0 {
            line.profile.bus_rate / max_bus
        } else {
            0.0
        };
        sum += state.scale[line.id.vm.index()] * (line.profile.footprint_fraction + beta * bus);
    }
    1.0 + config.interference.alpha * sum
}

/// `alpha` that makes `victim`'s slowdown equal `target` when every task of
/// every other VM runs unmasked at full interference scale.
pub fn calibrate_alpha(config: &SystemConfig, victim: VmId, target: f64) -> f64 {
    let max_bus = config.max_bus_rate();
    let beta = config.interference.beta;
    let sum: f64 = config
        .irqs()
        .filter(|l| l.id.vm != victim)
        .map(|l| {
            let bus = if max_bus > 0.0 {
                l.profile.bus_rate / max_bus
            } else {
                0.0
            };
            l.profile.footprint_fraction + beta * bus
        })
        .sum();
    if sum > 0.0 {
        (target - 1.0) / sum
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskReport {
    pub irq: IrqId,
    pub completions: u64,
    pub baseline_completions: u64,
    pub relative_throughput: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VmReport {
    pub vm: VmId,
    pub criticality: CriticalityLevel,
    pub completions: u64,
    pub baseline_completions: u64,
    pub relative_throughput: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub duration_us: u64,
    pub seed: u64,
    pub tasks: Vec<TaskReport>,
    pub vms: Vec<VmReport>,
    pub windows: Vec<WindowRecord>,
    pub modes: Vec<(u64, DegradationMode)>,
    pub trace: Vec<TraceEvent>,
    pub instrumentation: Instrumentation,
}

impl RunReport {
    pub fn vm(&self, vm: VmId) -> Option<&VmReport> {
        self.vms.get(vm.index())
    }

    /// Solo-referenced slowdown of `vm` over windows ending after `from_us`:
    /// expected events divided by observed events, both summed.
    pub fn window_slowdown(&self, vm: VmId, from_us: u64) -> Option<f64> {
        let (mut actual, mut expected) = (0.0, 0.0);
        for w in self.windows.iter().filter(|w| w.vm == vm && w.time_us > from_us) {
            actual += w.actual.l2_accesses + w.actual.bus_accesses;
            expected += w.expected.l2_accesses + w.expected.bus_accesses;
        }
        (actual > 0.0).then(|| expected / actual)
    }
}

fn ratio(n: u64, d: u64) -> f64 {
    if d == 0 {
        1.0
    } else {
        n as f64 / d as f64
    }
}

/// Runs `duration_us` of simulated time and a solo baseline (no
/// interference, no RTM) of the same scenario.
pub fn run(
    config: &SystemConfig,
    artifacts: Option<&Artifacts>,
    scenario: &Scenario,
    duration_us: u64,
    options: SimOptions,
) -> Result<RunReport, SimError> {
    run_with_clock(config, artifacts, scenario, duration_us, options, &mut NullClock)
}

pub fn run_with_clock<C: Clock + ?Sized>(
    config: &SystemConfig,
    artifacts: Option<&Artifacts>,
    scenario: &Scenario,
    duration_us: u64,
    options: SimOptions,
    clock: &mut C,
) -> Result<RunReport, SimError> {
    if options.tick_us == 0 {
        return Err(SimError::Tick);
    }
    if !duration_us.is_multiple_of(options.tick_us) {
        return Err(SimError::Duration {
            duration: duration_us,
            tick: options.tick_us,
        });
    }
    let main = simulate(config, artifacts, scenario, duration_us, options, clock)?;

    let mut solo = config.clone();
    solo.interference.alpha = 0.0;
    let baseline = simulate(
        &solo,
        None,
        scenario,
        duration_us,
        SimOptions {
            rtm_enabled: false,
            ..options
        },
        &mut NullClock,
    )?;

    let tasks: Vec<TaskReport> = main
        .tasks
        .iter()
        .zip(&baseline.tasks)
        .map(|(t, b)| TaskReport {
            irq: t.irq,
            completions: t.completions,
            baseline_completions: b.completions,
            relative_throughput: ratio(t.completions, b.completions),
        })
        .collect();
    let vms = config
        .vms
        .iter()
        .map(|vm| {
            let (c, b) = tasks
                .iter()
                .filter(|t| t.irq.vm == vm.id)
                .fold((0, 0), |(c, b), t| (c + t.completions, b + t.baseline_completions));
            VmReport {
                vm: vm.id,
                criticality: vm.criticality,
                completions: c,
                baseline_completions: b,
                relative_throughput: ratio(c, b),
            }
        })
        .collect();
    let instrumentation = main
        .rtm
        .as_ref()
        .map(|r| r.instrumentation().clone())
        .unwrap_or_default();
    Ok(RunReport {
        duration_us,
        seed: options.seed,
        tasks,
        vms,
        windows: main.windows,
        modes: main.modes,
        trace: main.trace,
        instrumentation,
    })
}

fn simulate<C: Clock + ?Sized>(
    config: &SystemConfig,
    artifacts: Option<&Artifacts>,
    scenario: &Scenario,
    duration_us: u64,
    options: SimOptions,
    clock: &mut C,
) -> Result<SimState, SimError> {
    let mut state = SimState::new(config, artifacts, scenario, options)?;
    while state.clock < duration_us {
        state.step(config.actuation_period_us, clock)?;
    }
    Ok(state)
}
