//! Deterministic discrete-event simulation of vehicles, road-side units and
//! the cloud exchanging protocol frames over modeled links, with a scripted
//! byte-level adversary.
//!
//! Events run in `(time, insertion sequence)` order. All randomness comes
//! from one ChaCha20 stream seeded by the run seed, drawn in a fixed order:
//! cellular link latencies, workload start offsets, then event handling.

mod adversary;
mod config;
mod link;
mod trace;
mod world;

pub use adversary::{captured_cert, flip_bits, forge_request, substitute_nonce, NONCE_RANGE};
pub use config::{
    load_config, AdversaryConfig, AttackConfig, AttackKind, ConfigError, GroupChoice, InterceptMatch, LinkConfig,
    NodeConfig, Role, ScenarioConfig, Trigger, VerifierChoice, WorkloadConfig, WorkloadKind,
};
pub use link::{distance, LinkError, LinkKind, LinkModel};
pub use link::{
    CELLULAR_LATENCY_RANGE_S, CELLULAR_RATE_BPS, DSRC_DEFAULT_RANGE_M, DSRC_LATENCY_S, DSRC_RATE_BPS, WIFI_RANGE_M,
    WIFI_RATE_BPS, WIRED_LATENCY_S, WIRED_RATE_BPS,
};
pub use trace::{Origin, Outcome, TraceLog, TraceRecord};
pub use world::{run_scenario, scenario_ra_seed, EventTag, OwnerKeys, SessionRecord, SimError, SimOutput, UploadRecord};
