use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use super::adversary;
use super::config::{
    draw_cellular_latency, AttackKind, ConfigError, Role, ScenarioConfig, Trigger, VerifierChoice, WorkloadKind,
};
use super::link::{LinkError, LinkModel};
use super::trace::{Origin, Outcome, TraceLog, TraceRecord};
use crate::crypto::{be64, hash_short, Digest, Signature};
use crate::metrics::{self, MetricsReport, OpCounters};
use crate::protocol::{
    check_confirm, confirm_payload, derive_session_key, ra_init, Certificate, Channel, Endpoint, EndpointKind,
    MsgType, Obu, ProtocolError, Registrar, RejectReason, ReplayCache, SessionKey, VerifiedMessage,
    VerifierMode,
};
use crate::store::{self, StoreError, StoreState};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("setup failed: {0}")]
    Setup(#[from] ProtocolError),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// Event kinds, as recorded in [`SimOutput::events`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventTag {
    Generate,
    Deliver,
    AdversaryAct,
}

/// One request/response exchange as seen from both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    pub initiator: String,
    pub responder: String,
    pub channel: Channel,
    pub initiator_key: Option<Digest>,
    pub responder_key: Option<Digest>,
    pub confirmed: bool,
}

/// Plaintext view of an upload, kept for checking search results.
#[derive(Debug, Clone, PartialEq)]
pub struct UploadRecord {
    pub record_id: Digest,
    pub owner: String,
    pub keywords: Vec<String>,
}

/// Data and search keys of a node that uploaded records.
#[derive(Debug, Clone, PartialEq)]
pub struct OwnerKeys {
    pub pid: Digest,
    pub data_key: Digest,
    pub search_key: Digest,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trace: TraceLog,
    pub report: MetricsReport,
    pub store: StoreState,
    pub sessions: Vec<SessionRecord>,
    pub uploads: Vec<UploadRecord>,
    pub owners: BTreeMap<String, OwnerKeys>,
    /// Execution time and kind of every event, in execution order.
    pub events: Vec<(f64, EventTag)>,
    /// Delivery durations as `(size, link, duration)`, for link checks.
    pub deliveries: Vec<(usize, LinkModel, f64)>,
}

enum EventKind {
    Generate { workload: usize, index: u32 },
    Deliver { src: usize, dst: usize, bytes: Vec<u8>, origin: Origin },
    AdversaryAct { action: usize },
}

struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest (time, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

struct SimNode {
    id: String,
    endpoint: Option<Endpoint>,
    cache: ReplayCache,
    last_ts_ms: Option<u64>,
    /// Secret the node's data and search keys derive from.
    owner_secret: Option<Digest>,
}

struct Pending {
    session: usize,
    peer_pid: Digest,
    answered: bool,
}

struct World<'a> {
    cfg: &'a ScenarioConfig,
    rng: ChaCha20Rng,
    queue: BinaryHeap<Event>,
    seq: u64,
    nodes: Vec<SimNode>,
    index: BTreeMap<String, usize>,
    links: Vec<LinkModel>,
    trace: TraceLog,
    counters: OpCounters,
    store: StoreState,
    sessions: Vec<SessionRecord>,
    session_keys: Vec<(Option<SessionKey>, Option<SessionKey>)>,
    /// (initiator, nonce_s) → exchange awaiting a response.
    pending: BTreeMap<(usize, [u8; 32]), Pending>,
    /// (responder, nonce_r) → exchange awaiting a key confirmation.
    awaiting_confirm: BTreeMap<(usize, [u8; 32]), usize>,
    uploads: Vec<UploadRecord>,
    owners: BTreeMap<String, OwnerKeys>,
    /// Honest frames sent per (src, dst), for intercept matching.
    sent_counts: BTreeMap<(usize, usize), u32>,
    /// Most recent honest frame per channel, as observed by the adversary.
    observed: BTreeMap<Channel, Vec<u8>>,
    honest_sent: u64,
    events: Vec<(f64, EventTag)>,
    deliveries: Vec<(usize, LinkModel, f64)>,
}

fn to_ms(t: f64) -> u64 {
    (t * 1000.0).floor() as u64
}

/// Runs `cfg` to completion. Identical `(cfg, seed)` give identical output.
/// Seed of the RA keys in a run with simulation seed `seed`.
pub fn scenario_ra_seed(seed: u64) -> [u8; 32] {
    hash_short(&[b"scenario-ra".as_slice(), &be64(seed)]).0
}

pub fn run_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    let mut world = World::build(cfg, seed)?;
    world.run()?;
    world.finish()
}

impl<'a> World<'a> {
    fn build(cfg: &'a ScenarioConfig, seed: u64) -> Result<Self, SimError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let group = cfg.group.params();
        let ra_seed = scenario_ra_seed(seed);
        let mode = match cfg.verifier {
            VerifierChoice::Exact => VerifierMode::Exact,
            VerifierChoice::Fuzzy => VerifierMode::Fuzzy,
        };
        let mut counters = OpCounters::new();
        let (nodes, owners) = {
            let (built, setup_ops) = metrics::measure(|| -> Result<_, SimError> {
                let params = ra_init(&ra_seed, group, cfg.delta_ms)?.with_verifier_mode(mode);
                let mut registrar = Registrar::new(params.clone());
                let default_expiry = to_ms(cfg.duration_s) + 3_600_000;
                let mut nodes = Vec::new();
                let mut owners = BTreeMap::new();
                let mut vehicles = Vec::new();
                for n in &cfg.nodes {
                    let (endpoint, owner_secret) = match n.role {
                        Role::Obu => {
                            let expiry = n.cert_expiry_ms.unwrap_or(default_expiry);
                            let (id, pw) = (n.identity(), n.password());
                            let tpd = registrar.register_vehicle(id.as_bytes(), pw.as_bytes(), expiry, 0)?;
                            vehicles.push((nodes.len(), tpd, id, pw));
                            (None, None)
                        }
                        Role::Rsu => {
                            let secret = registrar.register_rsu(n.id.as_bytes())?;
                            let k = secret.k_infra;
                            (Some(Endpoint::rsu(params.clone(), secret)), Some(k))
                        }
                        Role::Vc => {
                            let id = registrar.register_cloud(n.id.as_bytes())?;
                            (Some(Endpoint::cloud(params.clone(), id)), None)
                        }
                        _ => (None, None),
                    };
                    nodes.push(SimNode {
                        id: n.id.clone(),
                        endpoint,
                        cache: ReplayCache::new(cfg.delta_ms),
                        last_ts_ms: None,
                        owner_secret,
                    });
                }
                for (i, tpd, id, pw) in vehicles {
                    let mut obu = Obu::new(params.public().clone(), tpd);
                    let state = obu.login(id.as_bytes(), pw.as_bytes())?.clone();
                    nodes[i].owner_secret = Some(state.vehicle_secret);
                    nodes[i].endpoint = Some(Endpoint::vehicle(params.public().clone(), state));
                }
                for r in &cfg.revoked {
                    registrar.revoke(r.as_bytes());
                }
                for node in &mut nodes {
                    if let Some(ep) = node.endpoint.take() {
                        node.endpoint = Some(ep.with_revoked(registrar.revoked().clone()));
                    }
                    if let (Some(secret), Some(ep)) = (node.owner_secret, &node.endpoint) {
                        owners.insert(
                            node.id.clone(),
                            OwnerKeys {
                                pid: ep.pid(),
                                data_key: store::data_key(&secret),
                                search_key: store::search_key(&secret),
                            },
                        );
                    }
                }
                Ok((nodes, owners))
            });
            counters.add("ra", &setup_ops);
            built?
        };

        let links = cfg
            .links
            .iter()
            .map(|l| {
                let draw = if l.kind == super::link::LinkKind::Cellular && l.latency_s.is_none() {
                    draw_cellular_latency(&mut rng)
                } else {
                    0.0
                };
                l.model(draw)
            })
            .collect();

        let index = nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
        let mut world = World {
            cfg,
            rng,
            queue: BinaryHeap::new(),
            seq: 0,
            nodes,
            index,
            links,
            trace: TraceLog::new(),
            counters,
            store: StoreState::new(),
            sessions: Vec::new(),
            session_keys: Vec::new(),
            pending: BTreeMap::new(),
            awaiting_confirm: BTreeMap::new(),
            uploads: Vec::new(),
            owners,
            sent_counts: BTreeMap::new(),
            observed: BTreeMap::new(),
            honest_sent: 0,
            events: Vec::new(),
            deliveries: Vec::new(),
        };

        for (w, wl) in cfg.workload.iter().enumerate() {
            let start = match wl.start_s {
                Some(s) => s,
                None => world.rng.gen_range(0.0..wl.period_s),
            };
            if wl.count > 0 && start <= cfg.duration_s {
                world.schedule(start, EventKind::Generate { workload: w, index: 0 });
            }
        }
        if let Some(adv) = &cfg.adversary {
            for (i, a) in adv.actions.iter().enumerate() {
                if let Trigger::AtS(t) = a.trigger {
                    world.schedule(t, EventKind::AdversaryAct { action: i });
                }
            }
        }
        Ok(world)
    }

    fn schedule(&mut self, time: f64, kind: EventKind) {
        self.queue.push(Event {
            time,
            seq: self.seq,
            kind,
        });
        self.seq += 1;
    }

    fn run(&mut self) -> Result<(), SimError> {
        while let Some(ev) = self.queue.pop() {
            let (tag, node) = match &ev.kind {
                EventKind::Generate { workload, .. } => (EventTag::Generate, self.index[&self.cfg.workload[*workload].from]),
                EventKind::Deliver { dst, .. } => (EventTag::Deliver, *dst),
                EventKind::AdversaryAct { .. } => {
                    let adv = &self.cfg.adversary.as_ref().expect("validated").node;
                    (EventTag::AdversaryAct, self.index[adv])
                }
            };
            self.events.push((ev.time, tag));
            let (res, ops) = metrics::measure(|| self.handle(ev.time, ev.kind));
            let id = self.nodes[node].id.clone();
            self.counters.add(&id, &ops);
            res?;
        }
        Ok(())
    }

    fn handle(&mut self, now: f64, kind: EventKind) -> Result<(), SimError> {
        match kind {
            EventKind::Generate { workload, index } => self.generate(now, workload, index),
            EventKind::Deliver { src, dst, bytes, origin } => self.deliver(now, src, dst, bytes, origin),
            EventKind::AdversaryAct { action } => {
                self.adversary_act(now, action);
                Ok(())
            }
        }
    }

    /// A fresh timestamp for `node`: the current millisecond, bumped so a
    /// node never reuses one.
    fn timestamp(&mut self, node: usize, now: f64) -> u64 {
        let t = to_ms(now).max(self.nodes[node].last_ts_ms.map_or(0, |l| l + 1));
        self.nodes[node].last_ts_ms = Some(t);
        t
    }

    fn random_nonce(&mut self) -> [u8; 32] {
        let mut n = [0u8; 32];
        self.rng.fill(&mut n);
        n
    }

    fn endpoint(&self, node: usize) -> &Endpoint {
        self.nodes[node].endpoint.as_ref().expect("workload nodes have endpoints")
    }

    fn generate(&mut self, now: f64, w: usize, index: u32) -> Result<(), SimError> {
        let wl = &self.cfg.workload[w];
        let (from, to) = (self.index[&wl.from], self.index[&wl.to]);
        let channel = wl.channel;
        let ts = self.timestamp(from, now);
        let nonce = self.random_nonce();
        let peer = self.endpoint(to).pid();
        let frame = match wl.kind {
            WorkloadKind::Request => {
                let mut payload = vec![0u8; wl.payload_bytes];
                self.rng.fill(&mut payload[..]);
                let frame = self.endpoint(from).make_request(channel, &payload, ts, nonce, &peer)?;
                let session = self.sessions.len();
                self.sessions.push(SessionRecord {
                    initiator: wl.from.clone(),
                    responder: wl.to.clone(),
                    channel,
                    initiator_key: None,
                    responder_key: None,
                    confirmed: false,
                });
                self.session_keys.push((None, None));
                self.pending.insert(
                    (from, nonce),
                    Pending {
                        session,
                        peer_pid: peer,
                        answered: false,
                    },
                );
                frame
            }
            WorkloadKind::Upload => {
                let k = wl.keywords_per_upload.min(wl.keywords.len());
                let picks = rand::seq::index::sample(&mut self.rng, wl.keywords.len(), k).into_vec();
                let mut keywords: Vec<String> = picks.into_iter().map(|i| wl.keywords[i].clone()).collect();
                keywords.sort();
                let mut payload = vec![0u8; wl.payload_bytes];
                self.rng.fill(&mut payload[..]);
                let record_nonce = self.random_nonce();
                let owner = &self.owners[&wl.from];
                let kw_refs: Vec<&[u8]> = keywords.iter().map(|k| k.as_bytes()).collect();
                let record = store::make_record(
                    owner.pid,
                    &payload,
                    &kw_refs,
                    &owner.data_key,
                    &owner.search_key,
                    ts,
                    record_nonce,
                )
                .map_err(|e| SimError::Invariant(format!("upload record: {e}")))?;
                let body = record
                    .upload_body()
                    .map_err(|e| SimError::Invariant(format!("upload body: {e}")))?;
                self.uploads.push(UploadRecord {
                    record_id: record.record_id,
                    owner: wl.from.clone(),
                    keywords,
                });
                self.endpoint(from)
                    .make_frame(channel, MsgType::Data, &body, ts, nonce, &peer)?
            }
        };

        let wl = &self.cfg.workload[w];
        let next = now + wl.period_s;
        if index + 1 < wl.count && next <= self.cfg.duration_s {
            self.schedule(next, EventKind::Generate { workload: w, index: index + 1 });
        }
        self.send(now, from, to, frame.encode());
        Ok(())
    }

    fn link_index(&self, a: usize, b: usize) -> Option<usize> {
        self.cfg
            .link_between(&self.nodes[a].id, &self.nodes[b].id)
            .map(|(i, _)| i)
    }

    fn position(&self, node: usize, t: f64) -> (f64, f64) {
        self.cfg.node(&self.nodes[node].id).expect("known node").position_at(t)
    }

    fn record(&mut self, time: f64, src: usize, dst: usize, bytes: &[u8], outcome: Outcome, origin: Origin) {
        let (channel, msg_type) = if bytes.len() >= 3 {
            (Channel::from_byte(bytes[2]), MsgType::from_byte(bytes[1]))
        } else {
            (None, None)
        };
        self.trace.push(TraceRecord {
            time_s: time,
            src: self.nodes[src].id.clone(),
            dst: self.nodes[dst].id.clone(),
            frame_hash: sha(bytes),
            outcome,
            size: bytes.len(),
            channel,
            msg_type,
            origin,
        });
    }

    /// Puts an honest frame on the link, letting any matching intercept
    /// rule act on it.
    fn send(&mut self, now: f64, src: usize, dst: usize, bytes: Vec<u8>) {
        self.honest_sent += 1;
        let Some(link_idx) = self.link_index(src, dst) else {
            self.record(now, src, dst, &bytes, Outcome::DroppedOutOfRange, Origin::Honest);
            return;
        };
        let link = self.links[link_idx];
        let arrival = match link.transmit_between(self.position(src, now), self.position(dst, now), bytes.len()) {
            Ok(d) => {
                self.deliveries.push((bytes.len(), link, d));
                now + d
            }
            Err(LinkError::OutOfRange | LinkError::EmptyFrame) => {
                self.record(now, src, dst, &bytes, Outcome::DroppedOutOfRange, Origin::Honest);
                return;
            }
        };
        if let Some(ch) = Channel::from_byte(bytes[2]) {
            self.observed.insert(ch, bytes.clone());
        }
        let count = self.sent_counts.entry((src, dst)).or_insert(0);
        *count += 1;
        let count = *count;

        let rule = self.cfg.adversary.as_ref().and_then(|adv| {
            adv.actions.iter().find(|a| match &a.trigger {
                Trigger::Intercept(m) => m.src == self.nodes[src].id && m.dst == self.nodes[dst].id && m.nth == count,
                Trigger::AtS(_) => false,
            })
        });
        let Some(rule) = rule else {
            self.schedule(arrival, EventKind::Deliver { src, dst, bytes, origin: Origin::Honest });
            return;
        };
        match rule.action {
            AttackKind::Replay => {
                let copy = bytes.clone();
                self.schedule(arrival, EventKind::Deliver { src, dst, bytes, origin: Origin::Honest });
                self.schedule(
                    arrival + rule.delay_s,
                    EventKind::Deliver { src, dst, bytes: copy, origin: Origin::Adversary },
                );
            }
            AttackKind::Tamper => {
                let bits = if rule.bits.is_empty() {
                    vec![self.rng.gen_range(0..bytes.len() * 8)]
                } else {
                    rule.bits.clone()
                };
                let altered = adversary::flip_bits(&bytes, &bits);
                self.record(now, src, dst, &bytes, Outcome::AdversaryDropped, Origin::Honest);
                self.schedule(arrival, EventKind::Deliver { src, dst, bytes: altered, origin: Origin::Adversary });
            }
            AttackKind::MitmSubstitute => {
                let nonce = self.random_nonce();
                let altered = adversary::substitute_nonce(&bytes, &nonce);
                self.record(now, src, dst, &bytes, Outcome::AdversaryDropped, Origin::Honest);
                self.schedule(arrival, EventKind::Deliver { src, dst, bytes: altered, origin: Origin::Adversary });
            }
            AttackKind::Impersonate => {
                let pid = rule.pid.as_deref().and_then(Digest::from_hex);
                let delay = rule.delay_s;
                let forged = self.forge(arrival + delay, &bytes, pid);
                self.schedule(arrival, EventKind::Deliver { src, dst, bytes, origin: Origin::Honest });
                self.schedule(
                    arrival + delay,
                    EventKind::Deliver { src, dst, bytes: forged, origin: Origin::Adversary },
                );
            }
        }
    }

    /// A request on the template's channel claiming the template's sender
    /// (or `pid`), carrying the template's certificate if it has one and
    /// stamped with the time it will arrive.
    fn forge(&mut self, arrival: f64, template: &[u8], pid: Option<Digest>) -> Vec<u8> {
        let group = self.cfg.group.params();
        let channel = Channel::from_byte(template[2]).unwrap_or(Channel::V2R);
        let claimed = pid.unwrap_or_else(|| Digest::from_slice(&template[3..35]).unwrap_or_default());
        let sig_len = Signature::encoded_len(&group);
        let auth_len = if channel.is_signed() { sig_len } else { Digest::LEN };
        let cert = adversary::captured_cert(template, sig_len).map(<[u8]>::to_vec);
        let payload_len = self.cfg.workload.first().map_or(16, |w| w.payload_bytes);
        adversary::forge_request(
            &mut self.rng,
            channel,
            &claimed.0,
            to_ms(arrival),
            payload_len,
            auth_len,
            cert.as_deref(),
            Certificate::encoded_len(&group),
        )
    }

    fn adversary_act(&mut self, now: f64, action: usize) {
        let adv = self.cfg.adversary.as_ref().expect("validated");
        let rule = &adv.actions[action];
        let src = self.index[&adv.node];
        let dst = self.index[rule.dst.as_ref().expect("validated")];
        let channel = rule.channel.expect("validated");
        let pid = rule.pid.as_deref().and_then(Digest::from_hex);
        let template = match self.observed.get(&channel) {
            Some(t) => t.clone(),
            None => {
                let mut t = vec![0u8; 77];
                t[2] = channel as u8;
                self.rng.fill(&mut t[3..35]);
                t
            }
        };
        let mut forged = self.forge(now, &template, pid);
        let link = self.links[self.link_index(src, dst).expect("validated")];
        match link.transmit_between(self.position(src, now), self.position(dst, now), forged.len()) {
            Ok(d) => {
                forged[35..43].copy_from_slice(&to_ms(now + d).to_be_bytes());
                self.schedule(now + d, EventKind::Deliver { src, dst, bytes: forged, origin: Origin::Adversary })
            }
            Err(_) => self.record(now, src, dst, &forged, Outcome::DroppedOutOfRange, Origin::Adversary),
        }
    }

    fn deliver(&mut self, now: f64, src: usize, dst: usize, bytes: Vec<u8>, origin: Origin) -> Result<(), SimError> {
        let now_ms = to_ms(now);
        let node = &mut self.nodes[dst];
        let verified = match &node.endpoint {
            Some(ep) => ep.verify_bytes(&bytes, now_ms, &mut node.cache),
            None => Err(RejectReason::ChannelMismatch),
        };
        let outcome = match verified {
            Err(r) => Outcome::Rejected(r),
            Ok(v) => match self.process(now, dst, src, &v) {
                Ok(()) => Outcome::Accepted,
                Err(r) => Outcome::Rejected(r),
            },
        };
        self.record(now, src, dst, &bytes, outcome, origin);
        Ok(())
    }

    /// Application handling of an authenticated frame.
    fn process(&mut self, now: f64, me: usize, from: usize, v: &VerifiedMessage) -> Result<(), RejectReason> {
        match v.msg_type {
            MsgType::Request => {
                let ep = self.endpoint(me);
                let shared = ep.shared_secret(&v.material).map_err(|_| RejectReason::Unprocessable)?;
                let ts = self.timestamp(me, now);
                let nonce_r = self.random_nonce();
                let ep = self.endpoint(me);
                let response = ep
                    .make_frame(v.channel, MsgType::Response, &v.nonce, ts, nonce_r, &v.sender_pid)
                    .map_err(|_| RejectReason::Unprocessable)?;
                let sk = derive_session_key(&shared, &v.nonce, &nonce_r, ts, v.sender_pid);
                if let Some(p) = self.pending.get(&(from, v.nonce)) {
                    self.sessions[p.session].responder_key = Some(sk.key);
                    self.session_keys[p.session].1 = Some(sk);
                    self.awaiting_confirm.insert((me, nonce_r), p.session);
                }
                self.send(now, me, from, response.encode());
                Ok(())
            }
            MsgType::Response => {
                let nonce_s: [u8; 32] = v.payload[..].try_into().map_err(|_| RejectReason::Unprocessable)?;
                let p = self.pending.get_mut(&(me, nonce_s)).ok_or(RejectReason::Unprocessable)?;
                if p.answered || p.peer_pid != v.sender_pid {
                    return Err(RejectReason::Unprocessable);
                }
                p.answered = true;
                let session = p.session;
                let ep = self.endpoint(me);
                let shared = ep.shared_secret(&v.material).map_err(|_| RejectReason::Unprocessable)?;
                let sk = derive_session_key(&shared, &nonce_s, &v.nonce, v.timestamp_ms, v.sender_pid);
                self.sessions[session].initiator_key = Some(sk.key);
                if self.cfg.key_confirm {
                    let ts = self.timestamp(me, now);
                    let payload = confirm_payload(&sk, ts);
                    let frame = self
                        .endpoint(me)
                        .make_frame(v.channel, MsgType::KeyConfirm, &payload.0, ts, v.nonce, &v.sender_pid)
                        .map_err(|_| RejectReason::Unprocessable)?;
                    self.send(now, me, from, frame.encode());
                }
                self.session_keys[session].0 = Some(sk);
                Ok(())
            }
            MsgType::KeyConfirm => {
                let session = *self
                    .awaiting_confirm
                    .get(&(me, v.nonce))
                    .ok_or(RejectReason::ConfirmMismatch)?;
                let sk = self.session_keys[session].1.as_ref().ok_or(RejectReason::ConfirmMismatch)?;
                check_confirm(sk, v)?;
                self.awaiting_confirm.remove(&(me, v.nonce));
                self.sessions[session].confirmed = true;
                Ok(())
            }
            MsgType::Data => {
                if !matches!(self.endpoint(me).kind(), EndpointKind::Cloud { .. }) {
                    return Err(RejectReason::Unprocessable);
                }
                match self.store.ingest(v) {
                    Ok(_) => Ok(()),
                    Err(StoreError::DuplicateRecordId(_) | StoreError::MalformedUpload) => Err(RejectReason::Unprocessable),
                    Err(_) => Err(RejectReason::Unprocessable),
                }
            }
        }
    }

    fn finish(self) -> Result<SimOutput, SimError> {
        let honest_records = self.trace.records().iter().filter(|r| r.origin == Origin::Honest).count() as u64;
        if honest_records != self.honest_sent {
            return Err(SimError::Invariant(format!(
                "{} honest frames sent but {honest_records} outcomes recorded",
                self.honest_sent
            )));
        }
        if self.events.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(SimError::Invariant("clock went backwards".into()));
        }
        for (i, s) in self.sessions.iter().enumerate() {
            if let (Some(a), Some(b)) = (s.initiator_key, s.responder_key) {
                if a != b {
                    return Err(SimError::Invariant(format!("session {i}: keys differ")));
                }
            }
        }
        if !self.store.index_is_consistent() {
            return Err(SimError::Invariant("store index out of sync".into()));
        }
        let report = metrics::report(
            &self.counters,
            &self.cfg.cost_model(),
            &self.trace,
            self.store.storage_bytes() as u64,
        );
        Ok(SimOutput {
            trace: self.trace,
            report,
            store: self.store,
            sessions: self.sessions,
            uploads: self.uploads,
            owners: self.owners,
            events: self.events,
            deliveries: self.deliveries,
        })
    }
}

/// Frame fingerprint for the trace. Computed outside the instrumented
/// primitives so bookkeeping never shows up in operation counts.
fn sha(bytes: &[u8]) -> Digest {
    use sha2::Digest as _;
    Digest(sha2::Sha256::digest(bytes).into())
}
