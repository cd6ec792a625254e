//! Synthetic system configurations modelled on the evaluation setups: a
//! memory-intensive critical task in the ASIL-D VM and interrupt-driven
//! buffer writers (50/25/12.5/12.5 % of a 1 MiB LLC) in the other VMs.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::types::{
    CriticalityLevel, InterferenceParams, IrqId, IrqLine, MaskingMap, SystemConfig, TaskProfile,
    VmConfig, VmId, Weights,
};

pub const LLC_SIZE: u64 = 1 << 20;

/// Solo execution time of the critical job (susan corners, small input).
pub const CRITICAL_WCET_US: u64 = 1530;

/// Ten samples per critical job.
pub const ACTUATION_PERIOD_US: u64 = CRITICAL_WCET_US / 10;

/// Footprints of IRQ 0..3 in every interfering VM. IRQ 3 writes the 512 KiB
/// partition, so it has the highest effect and is masked first.
pub const WRITER_FOOTPRINTS: [f64; 4] = [0.125, 0.125, 0.25, 0.5];
pub const WRITER_BUS_RATES: [f64; 4] = [0.25, 0.25, 0.5, 1.0];

/// Back-to-back critical job: period equals the solo WCET.
pub fn critical_profile() -> TaskProfile {
    TaskProfile {
        footprint_fraction: 0.25,
        l2_rate: 2.0,
        bus_rate: 0.5,
        period_us: CRITICAL_WCET_US,
        wcet_solo_us: CRITICAL_WCET_US,
    }
}

/// Continuous buffer writer covering `footprint` of the LLC.
pub fn writer_profile(footprint: f64, bus_rate: f64) -> TaskProfile {
    TaskProfile {
        footprint_fraction: footprint,
        l2_rate: 4.0 * footprint,
        bus_rate,
        period_us: 100,
        wcet_solo_us: 100,
    }
}

fn vm(id: u16, criticality: CriticalityLevel, profiles: &[TaskProfile], first_pin: u32) -> VmConfig {
    VmConfig {
        id: VmId(id),
        criticality,
        irqs: profiles
            .iter()
            .enumerate()
            .map(|(k, p)| IrqLine {
                id: IrqId::new(id, k as u16),
                pin: first_pin + k as u32,
                profile: *p,
            })
            .collect(),
        reference: None,
    }
}

fn writers(footprints: &[f64], bus_rates: &[f64]) -> Vec<TaskProfile> {
    footprints
        .iter()
        .zip(bus_rates)
        .map(|(f, b)| writer_profile(*f, *b))
        .collect()
}

fn system(vms: Vec<VmConfig>, beta: f64) -> SystemConfig {
    SystemConfig {
        vms,
        weights: Weights::EQUAL,
        actuation_period_us: ACTUATION_PERIOD_US,
        mode_count: 4,
        interference: InterferenceParams { alpha: 1.0, beta },
        llc_size: LLC_SIZE,
        stepwise_transitions: true,
    }
}

/// ASIL-D critical VM plus one QM VM with the given writers.
pub fn two_vm(footprints: &[f64], bus_rates: &[f64], beta: f64) -> SystemConfig {
    system(
        vec![
            vm(0, CriticalityLevel::AsilD, &[critical_profile()], 32),
            vm(1, CriticalityLevel::Qm, &writers(footprints, bus_rates), 40),
        ],
        beta,
    )
}

/// ASIL-D, ASIL-C, ASIL-B and QM VMs (ids 0..3); each non-critical VM gets
/// four writers with the given footprints and the standard bus rates.
pub fn quad_vm(footprints: &[[f64; 4]; 3], beta: f64) -> SystemConfig {
    let levels = [CriticalityLevel::AsilC, CriticalityLevel::AsilB, CriticalityLevel::Qm];
    let mut vms = vec![vm(0, CriticalityLevel::AsilD, &[critical_profile()], 32)];
    for (i, (level, fp)) in levels.iter().zip(footprints).enumerate() {
        let id = i as u16 + 1;
        vms.push(vm(id, *level, &writers(fp, &WRITER_BUS_RATES), 32 + 8 * u32::from(id)));
    }
    system(vms, beta)
}

pub fn dual_vm_setup() -> SystemConfig {
    two_vm(&WRITER_FOOTPRINTS, &WRITER_BUS_RATES, 0.5)
}

/// Quad-VM setup 1: the ASIL-C VM only has two interrupts.
pub fn quad_vm_setup1() -> SystemConfig {
    let mut c = quad_vm(&[WRITER_FOOTPRINTS; 3], 0.5);
    let c_vm = &mut c.vms[1];
    c_vm.irqs.truncate(2);
    c_vm.irqs[0].profile = writer_profile(0.25, 0.5);
    c_vm.irqs[1].profile = writer_profile(0.5, 1.0);
    c
}

pub fn quad_vm_setup2() -> SystemConfig {
    quad_vm(&[WRITER_FOOTPRINTS; 3], 0.5)
}

fn set(irqs: &[(u16, u16)]) -> BTreeSet<IrqId> {
    irqs.iter().map(|(vm, k)| IrqId::new(*vm, *k)).collect()
}

/// Masked sets of the dual-VM evaluation setup (QM is VM 1).
pub fn dual_vm_table_map() -> MaskingMap {
    MaskingMap::new(vec![
        set(&[(1, 3)]),
        set(&[(1, 2), (1, 3)]),
        set(&[(1, 1), (1, 2), (1, 3)]),
        set(&[(1, 0), (1, 1), (1, 2), (1, 3)]),
    ])
}

/// Masked sets of quad-VM setup 1 (C = VM 1, B = VM 2, QM = VM 3).
pub fn setup1_table_map() -> MaskingMap {
    MaskingMap::new(vec![
        set(&[]),
        set(&[(2, 2), (2, 3), (3, 2), (3, 3)]),
        set(&[(1, 1), (2, 1), (2, 2), (2, 3), (3, 0), (3, 1), (3, 2), (3, 3)]),
        set(&[
            (1, 0),
            (1, 1),
            (2, 0),
            (2, 1),
            (2, 2),
            (2, 3),
            (3, 0),
            (3, 1),
            (3, 2),
            (3, 3),
        ]),
    ])
}

/// Masked sets of quad-VM setup 2.
pub fn setup2_table_map() -> MaskingMap {
    let all: Vec<(u16, u16)> = (1..4).flat_map(|vm| (0..4).map(move |k| (vm, k))).collect();
    MaskingMap::new(vec![
        set(&[]),
        set(&[(1, 3), (2, 3), (3, 2), (3, 3)]),
        set(&[(1, 2), (1, 3), (2, 1), (2, 2), (2, 3), (3, 0), (3, 1), (3, 2), (3, 3)]),
        set(&all),
    ])
}
