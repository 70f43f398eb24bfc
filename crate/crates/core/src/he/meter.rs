use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

/// Counts homomorphic operations performed through a key handle.
///
/// A meter is attached to every [`PublicKey`](super::PublicKey); cloning the key
/// shares the meter, while [`PublicKey::with_meter`](super::PublicKey::with_meter)
/// rebinds a copy to a different one so each actor can be traced separately.
#[derive(Debug, Default)]
pub struct OpMeter {
    encryptions: AtomicU64,
    rerandomizations: AtomicU64,
    decryptions: AtomicU64,
    multiplications: AtomicU64,
    exponentiations: AtomicU64,
}

impl OpMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn encryption(&self) {
        self.encryptions.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn rerandomization(&self) {
        self.rerandomizations.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn decryption(&self) {
        self.decryptions.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn multiplication(&self) {
        self.multiplications.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn exponentiation(&self) {
        self.exponentiations.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> OpCounts {
        OpCounts {
            encryptions: self.encryptions.load(Ordering::Relaxed),
            rerandomizations: self.rerandomizations.load(Ordering::Relaxed),
            decryptions: self.decryptions.load(Ordering::Relaxed),
            multiplications: self.multiplications.load(Ordering::Relaxed),
            exponentiations: self.exponentiations.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.encryptions.store(0, Ordering::Relaxed);
        self.rerandomizations.store(0, Ordering::Relaxed);
        self.decryptions.store(0, Ordering::Relaxed);
        self.multiplications.store(0, Ordering::Relaxed);
        self.exponentiations.store(0, Ordering::Relaxed);
    }
}

/// A point-in-time copy of an [`OpMeter`].
///
/// `encryptions` counts every fresh encryption, including the encryption of
/// zero performed inside a re-randomization; `rerandomizations` tracks the
/// latter separately.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub encryptions: u64,
    pub rerandomizations: u64,
    pub decryptions: u64,
    pub multiplications: u64,
    pub exponentiations: u64,
}

impl OpCounts {
    /// Ciphertext-level work: encryptions plus multiplications and exponentiations.
    pub fn ciphertext_ops(&self) -> u64 {
        self.encryptions + self.multiplications + self.exponentiations
    }
}

impl std::ops::Add for OpCounts {
    type Output = OpCounts;

    fn add(self, rhs: OpCounts) -> OpCounts {
        OpCounts {
            encryptions: self.encryptions + rhs.encryptions,
            rerandomizations: self.rerandomizations + rhs.rerandomizations,
            decryptions: self.decryptions + rhs.decryptions,
            multiplications: self.multiplications + rhs.multiplications,
            exponentiations: self.exponentiations + rhs.exponentiations,
        }
    }
}

impl std::iter::Sum for OpCounts {
    fn sum<I: Iterator<Item = OpCounts>>(iter: I) -> OpCounts {
        iter.fold(OpCounts::default(), |acc, c| acc + c)
    }
}
