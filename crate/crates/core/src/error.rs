use thiserror::Error;

use crate::types::{IrqId, VmId};

/// Structural problems in a [`SystemConfig`](crate::types::SystemConfig).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("configuration has no VMs")]
    NoVms,
    #[error("VM ids must be 0..M in order; found {found} at position {position}")]
    VmOrder { position: usize, found: VmId },
    #[error("expected exactly one ASIL-D VM, found {0}")]
    AsilDCount(usize),
    #[error("IRQ indices of VM {vm} must be 0..N in order; found {found}")]
    IrqOrder { vm: VmId, found: IrqId },
    #[error("pin {pin} is assigned to both {first} and {second}")]
    DuplicatePin { pin: u32, first: IrqId, second: IrqId },
    #[error("invalid task profile for {irq}: {reason}")]
    Profile { irq: IrqId, reason: &'static str },
    #[error("weights must be non-negative and sum to 1 (got {l2} + {bus})")]
    Weights { l2: f64, bus: f64 },
    #[error("actuation period must be positive")]
    ActuationPeriod,
    #[error("mode count must be at least 2 (got {0})")]
    ModeCount(usize),
    #[error("interference parameters must be finite and non-negative")]
    Interference,
    #[error("at most {max} non-QM VMs fit in the control register (got {found})")]
    RegisterWidth { max: usize, found: usize },
    #[error("reference for VM {0} must be finite and non-negative")]
    Reference(VmId),
    #[error("unknown VM {0}")]
    UnknownVm(VmId),
    #[error("unknown IRQ {0}")]
    UnknownIrq(IrqId),
    #[error("QoS value {0} outside [0, 100]")]
    QosRange(f64),
}
