//! Shift-invariant dictionary learning for 1-D sampled signals.
//!
//! A signal is modelled as a sparse superposition of short unit-norm atoms
//! placed at arbitrary offsets plus a residual. The crate provides:
//!
//! * [`pursuit`]: one greedy engine covering matching pursuit (MP), local
//!   orthogonal matching pursuit (OMP) and their equiprobable variants
//!   (E-MP, E-OMP) in which every atom is selected exactly the same number
//!   of times per window.
//! * [`learner`]: block-wise gradient ascent on the atoms from the final
//!   residual of each pursuit.
//! * [`dictionary`], [`signal_io`]: atoms, tail growth, WAV and synthetic
//!   signal sources.
//! * [`metrics`]: index and coefficient entropies, event rates, SNR sweeps
//!   and per-sample timing.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dictionary;
pub mod error;
pub mod learner;
pub mod metrics;
pub mod pursuit;
pub mod report;
pub mod signal_io;

#[cfg(feature = "cli")]
pub mod cli;

pub use dictionary::{Atom, Dictionary};
pub use error::{Error, ErrorKind, Result};
pub use learner::{dlearn, Budget, LearnConfig, LearnTrace, Learner};
pub use pursuit::{pursue, reconstruct, PursuitConfig, SparseCode, SparseEvent, Variant};
pub use signal_io::{BlockSource, Signal};

pub(crate) fn digest_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let hash = Sha256::digest(bytes);
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
