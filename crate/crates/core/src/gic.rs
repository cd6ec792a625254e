//! GICv2 distributor enable path.
//!
//! Only the `GICD_ISENABLERn` / `GICD_ICENABLERn` registers are modelled:
//! one bit per physical pin, 32 pins per word, pin `p` at word `p / 32`,
//! bit `p % 32`. Priorities, targets and the active/pending state machine
//! are out of scope.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::types::{SystemConfig, VmId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GicError {
    #[error("enable register word {index} out of range (distributor has {words} words)")]
    WordOutOfRange { index: usize, words: usize },
    #[error("pin {0} is not routed")]
    UnknownPin(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnableOp {
    /// Write-one-to-set (`ISENABLER`).
    Set,
    /// Write-one-to-clear (`ICENABLER`).
    Clear,
}

impl fmt::Display for EnableOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Set => "isenabler",
            Self::Clear => "icenabler",
        })
    }
}

/// Word index and bit mask addressing `pin` in the enable registers.
pub const fn pin_location(pin: u32) -> (usize, u32) {
    ((pin / 32) as usize, 1 << (pin % 32))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistributorState {
    enable_bits: Vec<u32>,
    routing: BTreeMap<u32, VmId>,
}

impl DistributorState {
    /// A distributor covering every routed pin, with all enable bits clear.
    pub fn new(routing: BTreeMap<u32, VmId>) -> Self {
        let words = routing
            .keys()
            .next_back()
            .map_or(1, |max| pin_location(*max).0 + 1);
        Self {
            enable_bits: vec![0; words],
            routing,
        }
    }

    /// Starts from explicit enable words. The word count is the larger of
    /// `words.len()` and what routing requires.
    pub fn with_words(words: &[u32], routing: BTreeMap<u32, VmId>) -> Self {
        let mut state = Self::new(routing);
        if state.enable_bits.len() < words.len() {
            state.enable_bits.resize(words.len(), 0);
        }
        state.enable_bits[..words.len()].copy_from_slice(words);
        state
    }

    /// Routes every configured interrupt to its VM and enables all of them.
    pub fn from_config(config: &SystemConfig) -> Self {
        let routing = config.irqs().map(|l| (l.pin, l.id.vm)).collect();
        let mut state = Self::new(routing);
        let pins: Vec<u32> = state.routing.keys().copied().collect();
        for pin in pins {
            let (word, bit) = pin_location(pin);
            state.enable_bits[word] |= bit;
        }
        state
    }

    pub fn word_count(&self) -> usize {
        self.enable_bits.len()
    }

    pub fn words(&self) -> &[u32] {
        &self.enable_bits
    }

    pub fn word(&self, index: usize) -> Result<u32, GicError> {
        self.enable_bits
            .get(index)
            .copied()
            .ok_or(GicError::WordOutOfRange {
                index,
                words: self.enable_bits.len(),
            })
    }

    fn word_mut(&mut self, index: usize) -> Result<&mut u32, GicError> {
        let words = self.enable_bits.len();
        self.enable_bits
            .get_mut(index)
            .ok_or(GicError::WordOutOfRange { index, words })
    }

    pub fn write_isenabler(&mut self, word_index: usize, value: u32) -> Result<(), GicError> {
        *self.word_mut(word_index)? |= value;
        Ok(())
    }

    pub fn write_icenabler(&mut self, word_index: usize, value: u32) -> Result<(), GicError> {
        *self.word_mut(word_index)? &= !value;
        Ok(())
    }

    pub fn write(&mut self, op: EnableOp, word_index: usize, value: u32) -> Result<(), GicError> {
        match op {
            EnableOp::Set => self.write_isenabler(word_index, value),
            EnableOp::Clear => self.write_icenabler(word_index, value),
        }
    }

    pub fn is_delivery_enabled(&self, pin: u32) -> Result<bool, GicError> {
        if !self.routing.contains_key(&pin) {
            return Err(GicError::UnknownPin(pin));
        }
        let (word, bit) = pin_location(pin);
        Ok(self.enable_bits[word] & bit != 0)
    }

    pub fn route(&self, pin: u32) -> Result<VmId, GicError> {
        self.routing.get(&pin).copied().ok_or(GicError::UnknownPin(pin))
    }

    pub fn routing(&self) -> &BTreeMap<u32, VmId> {
        &self.routing
    }
}
