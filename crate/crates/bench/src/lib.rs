//! Fixtures shared by the micro-benchmarks.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use vldp_core::experiments::group_for_bits;
use vldp_core::group::GroupParams;
use vldp_core::ldp::MechanismKind;
use vldp_core::protocol::{SessionConfig, SessionPlan};

pub fn group(p_bits: u64) -> Arc<GroupParams> {
    group_for_bits(p_bits, 0).expect("group generation")
}

pub fn plan(kind: MechanismKind, width: u64, group: &Arc<GroupParams>) -> Arc<SessionPlan> {
    SessionPlan::new(SessionConfig::new(kind, width), group.clone()).expect("valid plan")
}

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
