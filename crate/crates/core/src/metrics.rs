//! Operation counting and the abstract cost model.
//!
//! Primitives in [`crate::crypto`] announce each operation through
//! [`record`]. Counting is opt-in: nothing is recorded unless the current
//! thread is inside a [`measure`] scope, and scopes nest (inner counts are
//! folded into the enclosing scope when the inner one ends).

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netsim::{Outcome, Origin, TraceLog};
use crate::protocol::{Channel, MsgType, RejectReason};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("unknown operation kind {0:?}")]
    UnknownOpKind(String),
    #[error("cost for {0} must be a finite non-negative number")]
    NegativeCost(OpKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpKind {
    Hash,
    Xor,
    ScalarMul,
    Sign,
    Verify,
    BatchVerify,
}

impl OpKind {
    pub const ALL: [OpKind; 6] = [
        OpKind::Hash,
        OpKind::Xor,
        OpKind::ScalarMul,
        OpKind::Sign,
        OpKind::Verify,
        OpKind::BatchVerify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Hash => "hash",
            OpKind::Xor => "xor",
            OpKind::ScalarMul => "scalar_mul",
            OpKind::Sign => "sign",
            OpKind::Verify => "verify",
            OpKind::BatchVerify => "batch_verify",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OpKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| MetricsError::UnknownOpKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub hash_count: u64,
    pub xor_count: u64,
    pub scalar_mul_count: u64,
    pub sign_count: u64,
    pub verify_count: u64,
    pub batch_verify_count: u64,
}

impl OpCounts {
    pub fn get(&self, kind: OpKind) -> u64 {
        match kind {
            OpKind::Hash => self.hash_count,
            OpKind::Xor => self.xor_count,
            OpKind::ScalarMul => self.scalar_mul_count,
            OpKind::Sign => self.sign_count,
            OpKind::Verify => self.verify_count,
            OpKind::BatchVerify => self.batch_verify_count,
        }
    }

    fn slot(&mut self, kind: OpKind) -> &mut u64 {
        match kind {
            OpKind::Hash => &mut self.hash_count,
            OpKind::Xor => &mut self.xor_count,
            OpKind::ScalarMul => &mut self.scalar_mul_count,
            OpKind::Sign => &mut self.sign_count,
            OpKind::Verify => &mut self.verify_count,
            OpKind::BatchVerify => &mut self.batch_verify_count,
        }
    }

    pub fn bump(&mut self, kind: OpKind) {
        *self.slot(kind) += 1;
    }

    pub fn add(&mut self, other: &OpCounts) {
        for kind in OpKind::ALL {
            *self.slot(kind) += other.get(kind);
        }
    }

    pub fn is_zero(&self) -> bool {
        OpKind::ALL.iter().all(|k| self.get(*k) == 0)
    }
}

thread_local! {
    static SCOPES: RefCell<Vec<OpCounts>> = const { RefCell::new(Vec::new()) };
}

/// Notes one operation in the innermost active [`measure`] scope, if any.
pub fn record(kind: OpKind) {
    SCOPES.with(|s| {
        if let Some(top) = s.borrow_mut().last_mut() {
            top.bump(kind);
        }
    });
}

/// Runs `f` and returns the operations it performed on this thread.
pub fn measure<R>(f: impl FnOnce() -> R) -> (R, OpCounts) {
    struct Guard;
    impl Drop for Guard {
        fn drop(&mut self) {
            SCOPES.with(|s| {
                let mut s = s.borrow_mut();
                if let Some(inner) = s.pop() {
                    if let Some(outer) = s.last_mut() {
                        outer.add(&inner);
                    }
                }
            });
        }
    }
    SCOPES.with(|s| s.borrow_mut().push(OpCounts::default()));
    let guard = Guard;
    let out = f();
    let counts = SCOPES.with(|s| *s.borrow().last().expect("scope pushed above"));
    drop(guard);
    (out, counts)
}

/// Per-node operation counters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OpCounters {
    per_node: BTreeMap<String, OpCounts>,
}

impl OpCounters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_op(&mut self, node: &str, kind: OpKind) {
        self.per_node.entry(node.to_string()).or_default().bump(kind);
    }

    /// Like [`record_op`](Self::record_op) but with the kind given by name.
    pub fn record_op_named(&mut self, node: &str, kind: &str) -> Result<(), MetricsError> {
        self.record_op(node, kind.parse()?);
        Ok(())
    }

    pub fn add(&mut self, node: &str, counts: &OpCounts) {
        self.per_node.entry(node.to_string()).or_default().add(counts);
    }

    pub fn node(&self, node: &str) -> OpCounts {
        self.per_node.get(node).copied().unwrap_or_default()
    }

    pub fn per_node(&self) -> &BTreeMap<String, OpCounts> {
        &self.per_node
    }

    pub fn global(&self) -> OpCounts {
        let mut total = OpCounts::default();
        for c in self.per_node.values() {
            total.add(c);
        }
        total
    }
}

/// Unit costs per operation kind.
///
/// The defaults are ARBITRARY placeholders chosen only to rank operations
/// (a scalar multiplication is far dearer than a hash); they are not
/// measurements of any device.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    energy_j: BTreeMap<OpKind, f64>,
    time_s: BTreeMap<OpKind, f64>,
}

impl Default for CostModel {
    fn default() -> Self {
        let time = [
            (OpKind::Hash, 1.0e-6),
            (OpKind::Xor, 1.0e-8),
            (OpKind::ScalarMul, 1.0e-4),
            (OpKind::Sign, 0.0),
            (OpKind::Verify, 0.0),
            (OpKind::BatchVerify, 0.0),
        ];
        // Sign/verify are priced through the scalar_mul and hash operations
        // they are made of.
        let energy = time.map(|(k, t)| (k, t * 2.0));
        CostModel {
            energy_j: energy.into_iter().collect(),
            time_s: time.into_iter().collect(),
        }
    }
}

/// JSON form of a cost model: op-kind name → unit cost.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModelSpec {
    #[serde(default)]
    pub energy_j: BTreeMap<String, f64>,
    #[serde(default)]
    pub time_s: BTreeMap<String, f64>,
}

impl CostModel {
    /// Zero cost for every kind.
    pub fn zero() -> Self {
        CostModel {
            energy_j: OpKind::ALL.iter().map(|k| (*k, 0.0)).collect(),
            time_s: OpKind::ALL.iter().map(|k| (*k, 0.0)).collect(),
        }
    }

    pub fn set(&mut self, kind: OpKind, energy_j: f64, time_s: f64) -> Result<(), MetricsError> {
        if !(energy_j.is_finite() && energy_j >= 0.0 && time_s.is_finite() && time_s >= 0.0) {
            return Err(MetricsError::NegativeCost(kind));
        }
        self.energy_j.insert(kind, energy_j);
        self.time_s.insert(kind, time_s);
        Ok(())
    }

    /// Overrides defaults with the entries of `spec`.
    pub fn from_spec(spec: &CostModelSpec) -> Result<Self, MetricsError> {
        let mut model = CostModel::default();
        for (name, v) in &spec.energy_j {
            let kind: OpKind = name.parse()?;
            let t = model.time(kind);
            model.set(kind, *v, t)?;
        }
        for (name, v) in &spec.time_s {
            let kind: OpKind = name.parse()?;
            let e = model.energy(kind);
            model.set(kind, e, *v)?;
        }
        Ok(model)
    }

    pub fn to_spec(&self) -> CostModelSpec {
        CostModelSpec {
            energy_j: self.energy_j.iter().map(|(k, v)| (k.name().to_string(), *v)).collect(),
            time_s: self.time_s.iter().map(|(k, v)| (k.name().to_string(), *v)).collect(),
        }
    }

    pub fn energy(&self, kind: OpKind) -> f64 {
        self.energy_j.get(&kind).copied().unwrap_or(0.0)
    }

    pub fn time(&self, kind: OpKind) -> f64 {
        self.time_s.get(&kind).copied().unwrap_or(0.0)
    }

    pub fn modeled_time(&self, counts: &OpCounts) -> f64 {
        OpKind::ALL.iter().map(|k| counts.get(*k) as f64 * self.time(*k)).sum()
    }

    pub fn modeled_energy(&self, counts: &OpCounts) -> f64 {
        OpKind::ALL.iter().map(|k| counts.get(*k) as f64 * self.energy(*k)).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub generated: u64,
    pub accepted: u64,
    pub dropped_out_of_range: u64,
    pub adversary_dropped: u64,
    pub rejected: BTreeMap<String, u64>,
}

impl FrameStats {
    fn new() -> Self {
        FrameStats {
            rejected: RejectReason::ALL.iter().map(|r| (r.name().to_string(), 0)).collect(),
            ..Default::default()
        }
    }

    pub fn rejected_total(&self) -> u64 {
        self.rejected.values().sum()
    }

    pub fn rejected_for(&self, reason: RejectReason) -> u64 {
        self.rejected.get(reason.name()).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdversaryStats {
    pub injected: u64,
    pub accepted: u64,
    pub rejected: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    /// Responses accepted by initiators, i.e. keys agreed on both ends.
    pub keys_agreed: u64,
    /// Key-confirmation frames accepted by responders.
    pub keys_confirmed: u64,
}

/// Everything a run measured. Field order is the JSON key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ops: OpCounts,
    pub ops_per_node: BTreeMap<String, OpCounts>,
    pub bytes_sent: BTreeMap<String, u64>,
    pub storage_bytes: u64,
    pub modeled_time_s: f64,
    pub modeled_energy_j: f64,
    pub frames: FrameStats,
    pub adversary: AdversaryStats,
    pub sessions: SessionStats,
    pub cost_model: CostModelSpec,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Folds counters, trace and store size into a report.
pub fn report(counters: &OpCounters, cost: &CostModel, trace: &TraceLog, storage_bytes: u64) -> MetricsReport {
    let ops = counters.global();
    let mut frames = FrameStats::new();
    let mut adversary = AdversaryStats {
        rejected: frames.rejected.clone(),
        ..Default::default()
    };
    let mut bytes_sent: BTreeMap<String, u64> =
        Channel::ALL.iter().map(|c| (c.name().to_string(), 0)).collect();
    let mut sessions = SessionStats::default();

    for rec in trace.records() {
        match rec.origin {
            Origin::Honest => {
                frames.generated += 1;
                if let Some(ch) = rec.channel {
                    *bytes_sent.entry(ch.name().to_string()).or_default() += rec.size as u64;
                }
                match &rec.outcome {
                    Outcome::Accepted => {
                        frames.accepted += 1;
                        match rec.msg_type {
                            Some(MsgType::Response) => sessions.keys_agreed += 1,
                            Some(MsgType::KeyConfirm) => sessions.keys_confirmed += 1,
                            _ => {}
                        }
                    }
                    Outcome::Rejected(r) => *frames.rejected.entry(r.name().to_string()).or_default() += 1,
                    Outcome::DroppedOutOfRange => frames.dropped_out_of_range += 1,
                    Outcome::AdversaryDropped => frames.adversary_dropped += 1,
                }
            }
            Origin::Adversary => {
                adversary.injected += 1;
                match &rec.outcome {
                    Outcome::Accepted => adversary.accepted += 1,
                    Outcome::Rejected(r) => *adversary.rejected.entry(r.name().to_string()).or_default() += 1,
                    Outcome::DroppedOutOfRange | Outcome::AdversaryDropped => {}
                }
            }
        }
    }

    MetricsReport {
        ops,
        ops_per_node: counters.per_node().clone(),
        bytes_sent,
        storage_bytes,
        modeled_time_s: cost.modeled_time(&ops),
        modeled_energy_j: cost.modeled_energy(&ops),
        frames,
        adversary,
        sessions,
        cost_model: cost.to_spec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{batch_verify, hash, schnorr_sign, schnorr_verify, BatchItem, GroupParams};

    #[test]
    fn nothing_recorded_outside_scope() {
        hash(b"x");
        let ((), c) = measure(|| {});
        assert!(c.is_zero());
    }

    #[test]
    fn nested_scopes_fold_into_outer() {
        let ((inner, _), outer) = measure(|| {
            hash(b"a");
            measure(|| {
                hash(b"b");
                hash(b"c");
            })
        });
        assert_eq!(inner, ());
        assert_eq!(outer.hash_count, 3);
    }

    #[test]
    fn single_verify_costs_two_scalar_muls() {
        let g = GroupParams::toy();
        let x = g.scalar(3u32);
        let public = g.scalar_mul(&g.generator(), &x).unwrap();
        let sig = schnorr_sign(&g, &x, b"m", &g.scalar(5u32)).unwrap();
        let (ok, c) = measure(|| schnorr_verify(&g, &public, b"m", &sig).unwrap());
        assert!(ok);
        assert_eq!(c.verify_count, 1);
        assert_eq!(c.scalar_mul_count, 2);
    }

    #[test]
    fn batch_costs_n_plus_two() {
        let g = GroupParams::toy();
        for n in 1..=12u32 {
            let keys: Vec<_> = (0..n).map(|i| g.scalar(i % 10 + 1)).collect();
            let pubs: Vec<_> = keys.iter().map(|x| g.scalar_mul(&g.generator(), x).unwrap()).collect();
            let msgs: Vec<Vec<u8>> = (0..n).map(|i| vec![i as u8; 3]).collect();
            let sigs: Vec<_> = keys
                .iter()
                .zip(&msgs)
                .map(|(x, m)| schnorr_sign(&g, x, m, &g.scalar(7u32)).unwrap())
                .collect();
            let items: Vec<_> = (0..n as usize)
                .map(|i| BatchItem { public: &pubs[i], msg: &msgs[i], sig: &sigs[i] })
                .collect();
            let (ok, c) = measure(|| batch_verify(&g, &items).unwrap());
            assert!(ok);
            assert_eq!(c.scalar_mul_count, n as u64 + 2);
            assert_eq!(c.batch_verify_count, 1);
        }
    }

    #[test]
    fn op_kind_names_round_trip() {
        for k in OpKind::ALL {
            assert_eq!(k.name().parse::<OpKind>().unwrap(), k);
        }
        assert_eq!(
            "pairing".parse::<OpKind>(),
            Err(MetricsError::UnknownOpKind("pairing".into()))
        );
    }

    #[test]
    fn counters_sum_per_node() {
        let mut c = OpCounters::new();
        assert!(c.global().is_zero());
        c.record_op("a", OpKind::Hash);
        c.record_op("b", OpKind::Hash);
        c.record_op_named("b", "scalar_mul").unwrap();
        assert!(c.record_op_named("b", "fft").is_err());
        let g = c.global();
        assert_eq!(g.hash_count, 2);
        assert_eq!(g.scalar_mul_count, 1);
        assert_eq!(c.node("b").hash_count, 1);
    }

    #[test]
    fn modeled_cost_is_linear() {
        let model = CostModel::default();
        let mut c = OpCounts::default();
        assert_eq!(model.modeled_energy(&c), 0.0);
        assert_eq!(model.modeled_time(&c), 0.0);
        for (i, k) in OpKind::ALL.iter().enumerate() {
            for _ in 0..(i * 37 + 5) {
                c.bump(*k);
            }
        }
        let mut doubled = c;
        doubled.add(&c);
        assert_eq!(model.modeled_energy(&doubled), 2.0 * model.modeled_energy(&c));
        assert_eq!(model.modeled_time(&doubled), 2.0 * model.modeled_time(&c));
    }

    #[test]
    fn cost_spec_validation() {
        let mut spec = CostModelSpec::default();
        spec.energy_j.insert("hash".into(), 3.0);
        let m = CostModel::from_spec(&spec).unwrap();
        assert_eq!(m.energy(OpKind::Hash), 3.0);
        spec.time_s.insert("pairing".into(), 1.0);
        assert!(CostModel::from_spec(&spec).is_err());
        let mut spec = CostModelSpec::default();
        spec.time_s.insert("xor".into(), -1.0);
        assert_eq!(CostModel::from_spec(&spec), Err(MetricsError::NegativeCost(OpKind::Xor)));
    }
}
