//! Authenticated messaging for a vehicular cloud: vehicles (OBUs), road-side
//! units and a cloud store exchange MACed or Schnorr-signed frames under
//! keys issued by a registration authority. The crate bundles the
//! primitives, the protocol, an encrypted searchable record store, a
//! deterministic network simulator and operation-count metrics.

pub mod crypto;
pub mod metrics;
pub mod netsim;
pub mod protocol;
pub mod store;

pub use crypto::{Digest, GroupElement, GroupKind, GroupParams, GroupScalar, Signature};
pub use metrics::{CostModel, MetricsReport, OpCounters, OpCounts, OpKind};
pub use netsim::{load_config, run_scenario, ScenarioConfig, SimError, SimOutput, TraceLog};
pub use protocol::{Channel, Endpoint, MessageFrame, MsgType, RejectReason, VerifiedMessage};
pub use store::{StoreError, StoreState};
