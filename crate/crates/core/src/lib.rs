//! Verifiable local differential privacy.
//!
//! A client proves, in zero knowledge, that its randomized report was drawn
//! from the agreed kRR, OUE or OLH distribution: it commits to a vector of
//! candidate outputs whose composition matches the distribution, and the
//! server picks one slot by oblivious transfer. Output-manipulation attacks
//! are caught by the proofs; what remains is input manipulation.

pub mod adversary;
pub mod codec;
pub mod experiments;
pub mod group;
pub mod ldp;
pub mod ot;
pub mod params;
pub mod proofs;
pub mod protocol;
pub mod transport;

pub use adversary::{AttackKind, AttackSpec, GainReport};
pub use group::{GroupElement, GroupParams, Scalar};
pub use ldp::{Mechanism, MechanismKind, Report};
pub use params::{KrrSharedParams, OueSharedParams};
pub use protocol::{Behavior, Phase, SessionConfig, SessionPlan, Verdict};
pub use transport::{Frame, SessionMetrics, Tag};
