//! Interrupt coloring for mixed-criticality systems.
//!
//! Low-criticality VMs generate shared-cache and bus interference through
//! interrupt-driven tasks. This crate tracks the QoS of the critical VMs from
//! PMU event counts and progressively masks ("colors") the interrupts of
//! less critical VMs when that QoS degrades, unmasking them in reverse order
//! once it recovers.
//!
//! - [`types`]: shared domain types.
//! - [`gic`]: GICv2 distributor enable registers.
//! - [`dtt`]: design-time tool producing masking maps and the control table.
//! - [`rtm`]: the run-time QoS feedback loop.
//! - [`sim`]: a deterministic contention simulator driving the RTM.
//!
//! The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod dtt;
pub mod error;
pub mod fixtures;
pub mod gic;
pub mod rtm;
pub mod sim;
pub mod types;

pub use error::ConfigError;
pub use types::*;
