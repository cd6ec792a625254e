#![allow(dead_code)]

use irqc_core::{
    CriticalityLevel, InterferenceParams, IrqId, IrqLine, SystemConfig, TaskProfile, VmConfig, VmId,
    Weights,
};
use proptest::prelude::*;

pub fn arb_profile() -> impl Strategy<Value = TaskProfile> {
    (0.0..=1.0f64, 0.0..8.0f64, 0.0..4.0f64, 1u64..2000, 1u64..2000).prop_map(
        |(footprint_fraction, l2_rate, bus_rate, period_us, wcet)| TaskProfile {
            footprint_fraction,
            l2_rate,
            bus_rate,
            period_us,
            wcet_solo_us: wcet.min(period_us),
        },
    )
}

fn arb_level() -> impl Strategy<Value = CriticalityLevel> {
    prop_oneof![
        Just(CriticalityLevel::AsilC),
        Just(CriticalityLevel::AsilB),
        Just(CriticalityLevel::Qm),
    ]
}

/// Valid configs with one ASIL-D VM at a random position.
pub fn arb_config(max_vms: usize, max_irqs: usize) -> impl Strategy<Value = SystemConfig> {
    (1..=max_vms)
        .prop_flat_map(move |n| {
            (
                Just(n),
                0..n,
                prop::collection::vec(arb_level(), n),
                prop::collection::vec(prop::collection::vec(arb_profile(), 0..=max_irqs), n),
                2usize..=6,
                0.0..2.0f64,
                0.0..=1.0f64,
                1u64..500,
            )
        })
        .prop_map(|(n, d, levels, profiles, mode_count, beta, w_l2, period)| {
            let mut pin = 32;
            let vms = (0..n)
                .map(|i| {
                    let irqs = profiles[i]
                        .iter()
                        .enumerate()
                        .map(|(k, p)| {
                            pin += 1;
                            IrqLine {
                                id: IrqId::new(i as u16, k as u16),
                                pin,
                                profile: *p,
                            }
                        })
                        .collect();
                    VmConfig {
                        id: VmId(i as u16),
                        criticality: if i == d { CriticalityLevel::AsilD } else { levels[i] },
                        irqs,
                        reference: None,
                    }
                })
                .collect();
            SystemConfig {
                vms,
                weights: Weights::new(w_l2, 1.0 - w_l2).unwrap(),
                actuation_period_us: period,
                mode_count,
                interference: InterferenceParams { alpha: 1.0, beta },
                llc_size: 1 << 20,
                stepwise_transitions: false,
            }
        })
}
