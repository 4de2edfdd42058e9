//! Scenario files: strict JSON, unknown keys rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::link::{LinkKind, LinkModel, CELLULAR_LATENCY_RANGE_S};
use crate::crypto::{Digest, GroupParams};
use crate::metrics::{CostModel, CostModelSpec};
use crate::protocol::{Channel, DEFAULT_FRESHNESS_MS};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupChoice {
    Toy,
    #[default]
    P256,
}

impl GroupChoice {
    pub fn params(self) -> GroupParams {
        match self {
            GroupChoice::Toy => GroupParams::toy(),
            GroupChoice::P256 => GroupParams::p256(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Obu,
    Rsu,
    Vc,
    Ra,
    Adversary,
    BaseStation,
    /// Reads from the cloud out of band; takes no part in message flows.
    Government,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifierChoice {
    #[default]
    Exact,
    Fuzzy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: String,
    pub role: Role,
    #[serde(default)]
    pub position: [f64; 2],
    /// `[t_s, x, y]` points after t = 0; the node starts at `position`.
    #[serde(default)]
    pub waypoints: Vec<[f64; 3]>,
    /// OBU login identity; defaults to the node id.
    #[serde(default)]
    pub identity: Option<String>,
    /// OBU password; defaults to `"pw-" + id`.
    #[serde(default)]
    pub password: Option<String>,
    /// Certificate expiry; defaults to one hour past the scenario end.
    #[serde(default)]
    pub cert_expiry_ms: Option<u64>,
}

impl NodeConfig {
    pub fn identity(&self) -> String {
        self.identity.clone().unwrap_or_else(|| self.id.clone())
    }

    pub fn password(&self) -> String {
        self.password.clone().unwrap_or_else(|| format!("pw-{}", self.id))
    }

    /// Position at `t` by linear interpolation along the waypoints, holding
    /// the last point afterwards.
    pub fn position_at(&self, t: f64) -> (f64, f64) {
        let mut prev = (0.0, self.position[0], self.position[1]);
        for &[wt, x, y] in &self.waypoints {
            if t < wt {
                let f = (t - prev.0) / (wt - prev.0);
                return (prev.1 + f * (x - prev.1), prev.2 + f * (y - prev.2));
            }
            prev = (wt, x, y);
        }
        (prev.1, prev.2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub a: String,
    pub b: String,
    pub kind: LinkKind,
    #[serde(default)]
    pub range_m: Option<f64>,
    #[serde(default)]
    pub latency_s: Option<f64>,
    #[serde(default)]
    pub data_rate_bps: Option<f64>,
}

impl LinkConfig {
    /// The link model with overrides applied. `cellular_draw` is the seeded
    /// per-link latency used when a cellular link sets none.
    pub fn model(&self, cellular_draw: f64) -> LinkModel {
        let mut m = match self.kind {
            LinkKind::Dsrc => LinkModel::dsrc(),
            LinkKind::Wifi => LinkModel::wifi(),
            LinkKind::Cellular => LinkModel::cellular(cellular_draw),
            LinkKind::Wired => LinkModel::wired(),
        };
        if let Some(r) = self.range_m {
            m.range_m = Some(r);
        }
        if let Some(l) = self.latency_s {
            m.latency_s = l;
        }
        if let Some(d) = self.data_rate_bps {
            m.data_rate_bps = d;
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkloadKind {
    /// Request / response (/ key confirm) exchange.
    #[default]
    Request,
    /// Encrypted record upload to the cloud.
    Upload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    pub from: String,
    pub to: String,
    #[serde(with = "channel_name")]
    pub channel: Channel,
    #[serde(default)]
    pub kind: WorkloadKind,
    #[serde(default = "default_payload_bytes")]
    pub payload_bytes: usize,
    pub period_s: f64,
    pub count: u32,
    /// First send time; drawn from `[0, period_s)` when absent.
    #[serde(default)]
    pub start_s: Option<f64>,
    /// Upload keyword vocabulary.
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default = "default_keywords_per_upload")]
    pub keywords_per_upload: usize,
}

fn default_payload_bytes() -> usize {
    64
}

fn default_keywords_per_upload() -> usize {
    2
}

mod channel_name {
    use super::Channel;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(c: &Channel, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(c.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Channel, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Replay,
    Tamper,
    Impersonate,
    MitmSubstitute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterceptMatch {
    pub src: String,
    pub dst: String,
    /// 1-based index among frames sent from `src` to `dst`.
    #[serde(default = "one")]
    pub nth: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum Trigger {
    AtS(f64),
    Intercept(InterceptMatch),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub trigger: Trigger,
    pub action: AttackKind,
    /// Replay: delay after the original's arrival.
    #[serde(default)]
    pub delay_s: f64,
    /// Tamper: bit positions to flip (bit 0 is the MSB of byte 0); one random
    /// bit when empty.
    #[serde(default)]
    pub bits: Vec<usize>,
    /// Impersonate on a time trigger: target node and channel.
    #[serde(default)]
    pub dst: Option<String>,
    #[serde(default, with = "opt_channel_name")]
    pub channel: Option<Channel>,
    /// Impersonate: claimed sender pid as hex; random when absent.
    #[serde(default)]
    pub pid: Option<String>,
}

mod opt_channel_name {
    use super::Channel;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(c: &Option<Channel>, s: S) -> Result<S::Ok, S::Error> {
        match c {
            Some(c) => s.serialize_str(c.name()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Channel>, D::Error> {
        let s = Option::<String>::deserialize(d)?;
        s.map(|s| s.parse().map_err(serde::de::Error::custom)).transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryConfig {
    pub node: String,
    pub actions: Vec<AttackConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub group: GroupChoice,
    #[serde(default = "default_delta")]
    pub delta_ms: u64,
    pub duration_s: f64,
    #[serde(default)]
    pub verifier: VerifierChoice,
    /// Send a key-confirmation frame after each accepted response.
    #[serde(default)]
    pub key_confirm: bool,
    pub nodes: Vec<NodeConfig>,
    #[serde(default)]
    pub links: Vec<LinkConfig>,
    #[serde(default)]
    pub workload: Vec<WorkloadConfig>,
    #[serde(default)]
    pub adversary: Option<AdversaryConfig>,
    /// Identities of revoked OBUs.
    #[serde(default)]
    pub revoked: Vec<String>,
    #[serde(default)]
    pub cost_model: CostModelSpec,
}

fn default_delta() -> u64 {
    DEFAULT_FRESHNESS_MS
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn node(&self, id: &str) -> Option<&NodeConfig> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn link_between(&self, a: &str, b: &str) -> Option<(usize, &LinkConfig)> {
        self.links
            .iter()
            .enumerate()
            .find(|(_, l)| (l.a == a && l.b == b) || (l.a == b && l.b == a))
    }

    pub fn cost_model(&self) -> CostModel {
        CostModel::from_spec(&self.cost_model).expect("validated")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError::Validation(m));
        if self.delta_ms == 0 {
            return fail("delta_ms must be positive".into());
        }
        if !(self.duration_s.is_finite() && self.duration_s >= 0.0) {
            return fail("duration_s must be a non-negative number".into());
        }
        let mut ids = BTreeSet::new();
        let mut identities = BTreeMap::new();
        for n in &self.nodes {
            if n.id.is_empty() {
                return fail("node id must be non-empty".into());
            }
            if !ids.insert(n.id.as_str()) {
                return fail(format!("duplicate node id {:?}", n.id));
            }
            if n.role == Role::Obu {
                if let Some(prev) = identities.insert(n.identity(), n.id.clone()) {
                    return fail(format!("nodes {prev:?} and {:?} share an identity", n.id));
                }
                if n.password().is_empty() || n.identity().is_empty() {
                    return fail(format!("node {:?}: identity and password must be non-empty", n.id));
                }
                if n.cert_expiry_ms == Some(0) {
                    return fail(format!("node {:?}: cert_expiry_ms must be positive", n.id));
                }
            }
            if !n.position.iter().all(|v| v.is_finite()) {
                return fail(format!("node {:?}: position must be finite", n.id));
            }
            let mut t_prev = 0.0;
            for w in &n.waypoints {
                if !w.iter().all(|v| v.is_finite()) || w[0] <= t_prev {
                    return fail(format!("node {:?}: waypoint times must increase from 0", n.id));
                }
                t_prev = w[0];
            }
            if !n.waypoints.is_empty() && n.role != Role::Obu {
                return fail(format!("node {:?}: only OBUs move", n.id));
            }
        }
        if self.nodes.iter().filter(|n| n.role == Role::Ra).count() > 1 {
            return fail("at most one RA node".into());
        }

        for (i, l) in self.links.iter().enumerate() {
            for end in [&l.a, &l.b] {
                if !ids.contains(end.as_str()) {
                    return fail(format!("link {i}: unknown node {end:?}"));
                }
            }
            if l.a == l.b {
                return fail(format!("link {i}: endpoints must differ"));
            }
            if self.links[..i]
                .iter()
                .any(|o| (o.a == l.a && o.b == l.b) || (o.a == l.b && o.b == l.a))
            {
                return fail(format!("link {i}: duplicate link {:?}-{:?}", l.a, l.b));
            }
            if l.data_rate_bps.is_some_and(|r| !(r.is_finite() && r > 0.0)) {
                return fail(format!("link {i}: data_rate_bps must be positive"));
            }
            if l.latency_s.is_some_and(|r| !(r.is_finite() && r >= 0.0)) {
                return fail(format!("link {i}: latency_s must be non-negative"));
            }
            if l.range_m.is_some_and(|r| !(r.is_finite() && r >= 0.0)) {
                return fail(format!("link {i}: range_m must be non-negative"));
            }
        }

        for (i, w) in self.workload.iter().enumerate() {
            let (Some(from), Some(to)) = (self.node(&w.from), self.node(&w.to)) else {
                return fail(format!("workload {i}: unknown node {:?} or {:?}", w.from, w.to));
            };
            let roles_ok = matches!(
                (w.channel, from.role, to.role),
                (Channel::V2V, Role::Obu, Role::Obu)
                    | (Channel::V2R, Role::Obu, Role::Rsu)
                    | (Channel::R2VC, Role::Rsu, Role::Vc)
                    | (Channel::V2VC, Role::Obu, Role::Vc)
            );
            if !roles_ok || w.from == w.to {
                return fail(format!(
                    "workload {i}: channel {} does not run from {:?} to {:?}",
                    w.channel, from.role, to.role
                ));
            }
            if self.link_between(&w.from, &w.to).is_none() {
                return fail(format!("workload {i}: no link between {:?} and {:?}", w.from, w.to));
            }
            if w.kind == WorkloadKind::Upload {
                if to.role != Role::Vc {
                    return fail(format!("workload {i}: uploads go to a VC node"));
                }
                if w.keywords.is_empty() || w.keywords.iter().any(String::is_empty) {
                    return fail(format!("workload {i}: uploads need non-empty keywords"));
                }
                if w.keywords_per_upload == 0 {
                    return fail(format!("workload {i}: keywords_per_upload must be positive"));
                }
            }
            if !(w.period_s.is_finite() && w.period_s > 0.0) {
                return fail(format!("workload {i}: period_s must be positive"));
            }
            if w.start_s.is_some_and(|s| !(s.is_finite() && s >= 0.0)) {
                return fail(format!("workload {i}: start_s must be non-negative"));
            }
            if w.payload_bytes > 60_000 {
                return fail(format!("workload {i}: payload_bytes must be at most 60000"));
            }
        }

        if let Some(adv) = &self.adversary {
            match self.node(&adv.node) {
                Some(n) if n.role == Role::Adversary => {}
                _ => return fail(format!("adversary node {:?} is not an adversary", adv.node)),
            }
            for (i, a) in adv.actions.iter().enumerate() {
                match &a.trigger {
                    Trigger::AtS(t) => {
                        if !(t.is_finite() && *t >= 0.0) {
                            return fail(format!("adversary action {i}: at_s must be non-negative"));
                        }
                        if a.action != AttackKind::Impersonate {
                            return fail(format!("adversary action {i}: only impersonate runs on a timer"));
                        }
                        let (Some(dst), Some(_)) = (&a.dst, a.channel) else {
                            return fail(format!("adversary action {i}: impersonate needs dst and channel"));
                        };
                        if self.node(dst).is_none() || self.link_between(&adv.node, dst).is_none() {
                            return fail(format!("adversary action {i}: no link from adversary to {dst:?}"));
                        }
                    }
                    Trigger::Intercept(m) => {
                        if m.nth == 0 || self.node(&m.src).is_none() || self.node(&m.dst).is_none() {
                            return fail(format!("adversary action {i}: bad intercept match"));
                        }
                    }
                }
                if !(a.delay_s.is_finite() && a.delay_s >= 0.0) {
                    return fail(format!("adversary action {i}: delay_s must be non-negative"));
                }
                if let Some(pid) = &a.pid {
                    if Digest::from_hex(pid).is_none() {
                        return fail(format!("adversary action {i}: pid must be 64 hex digits"));
                    }
                }
            }
        } else if self.nodes.iter().any(|n| n.role == Role::Adversary) {
            return fail("adversary node without an adversary script".into());
        }

        for r in &self.revoked {
            if !self.nodes.iter().any(|n| n.role == Role::Obu && &n.identity() == r) {
                return fail(format!("revoked identity {r:?} is not an OBU"));
            }
        }
        CostModel::from_spec(&self.cost_model).map_err(|e| ConfigError::Validation(e.to_string()))?;
        Ok(())
    }
}

/// Reads and validates a scenario file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ScenarioConfig::from_json(&text)
}

/// Per-hop latency for a cellular link, uniform over the published range.
pub(crate) fn draw_cellular_latency(rng: &mut impl rand::Rng) -> f64 {
    rng.gen_range(CELLULAR_LATENCY_RANGE_S.0..=CELLULAR_LATENCY_RANGE_S.1)
}
