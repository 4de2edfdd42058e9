use std::path::PathBuf;

use vcloud_core::netsim::{
    load_config, run_scenario, EventTag, Origin, Outcome, ScenarioConfig, SimOutput,
};
use vcloud_core::protocol::RejectReason;
use vcloud_core::store::trapdoor;

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.json"))
}

fn scenario(name: &str) -> ScenarioConfig {
    load_config(&scenario_path(name)).unwrap()
}

const ATTACKS: [&str; 4] = ["replay-attack", "tamper-attack", "impersonation-attack", "mitm-attack"];
const HONEST: [&str; 2] = ["honest-v2r", "honest-all-channels"];

fn assert_conservation(out: &SimOutput) {
    let f = &out.report.frames;
    assert_eq!(
        f.generated,
        f.accepted + f.rejected_total() + f.dropped_out_of_range + f.adversary_dropped
    );
    assert!(out.events.windows(2).all(|w| w[0].0 <= w[1].0));
    let honest = out.trace.records().iter().filter(|r| r.origin == Origin::Honest).count() as u64;
    assert_eq!(honest, f.generated);
    assert_eq!(
        out.report.bytes_sent.values().sum::<u64>(),
        out.trace
            .records()
            .iter()
            .filter(|r| r.origin == Origin::Honest)
            .map(|r| r.size as u64)
            .sum::<u64>()
    );
}

#[test]
fn bundled_scenarios_load() {
    for name in HONEST.iter().chain(ATTACKS.iter()) {
        let cfg = scenario(name);
        assert_eq!(&cfg.name, name);
    }
}

#[test]
fn honest_scenarios_accept_everything() {
    for name in HONEST {
        let cfg = scenario(name);
        for seed in 0..20 {
            let out = run_scenario(&cfg, seed).unwrap();
            assert_conservation(&out);
            let f = &out.report.frames;
            assert!(f.generated > 0);
            assert_eq!(f.accepted, f.generated, "{name} seed {seed}: {:?}", f);
            assert_eq!(out.report.adversary.injected, 0);
            for s in &out.sessions {
                assert_eq!(s.initiator_key, s.responder_key);
                assert!(s.initiator_key.is_some());
                assert_eq!(s.confirmed, cfg.key_confirm);
            }
        }
    }
}

#[test]
fn honest_v2r_matches_golden_trace() {
    let out = run_scenario(&scenario("honest-v2r"), 1).unwrap();
    let golden = include_str!("golden/honest-v2r.seed1.trace");
    assert_eq!(out.trace.to_text(), golden);
}

#[test]
fn honest_v2r_bytes_sent_from_golden_trace() {
    // Frame sizes: header 77, MAC 32. car-1 requests carry 64 payload bytes,
    // car-2 requests 200, responses echo a 32-byte nonce.
    let golden = include_str!("golden/honest-v2r.seed1.trace");
    let mut expected = 0u64;
    for line in golden.lines() {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols[4], "Accepted");
        expected += match cols[1] {
            "car-1" => 77 + 64 + 32,
            "car-2" => 77 + 200 + 32,
            "rsu-1" => 77 + 32 + 32,
            other => panic!("unexpected sender {other}"),
        };
    }
    let out = run_scenario(&scenario("honest-v2r"), 1).unwrap();
    assert_eq!(out.report.bytes_sent["V2R"], expected);
    assert_eq!(out.report.bytes_sent["V2V"], 0);
}

#[test]
fn same_seed_same_output() {
    for name in HONEST.iter().chain(ATTACKS.iter()) {
        let cfg = scenario(name);
        let a = run_scenario(&cfg, 42).unwrap();
        let b = run_scenario(&cfg, 42).unwrap();
        assert_eq!(a.trace.to_text(), b.trace.to_text());
        assert_eq!(a.report.to_json(), b.report.to_json());
        assert_eq!(a.store.to_bytes().unwrap(), b.store.to_bytes().unwrap());
    }
}

#[test]
fn seed_changes_timing_not_acceptance() {
    let cfg = scenario("honest-v2r");
    let a = run_scenario(&cfg, 1).unwrap();
    let b = run_scenario(&cfg, 2).unwrap();
    assert_ne!(a.trace.to_text(), b.trace.to_text());
    assert_eq!(a.report.frames, b.report.frames);
}

#[test]
fn attacks_never_succeed() {
    for name in ATTACKS {
        let cfg = scenario(name);
        for seed in 0..100 {
            let out = run_scenario(&cfg, seed).unwrap();
            assert_conservation(&out);
            let adv = &out.report.adversary;
            assert!(adv.injected > 0, "{name}");
            assert_eq!(adv.accepted, 0, "{name} seed {seed}");
            for r in out.trace.records() {
                match r.origin {
                    Origin::Honest => assert!(
                        matches!(r.outcome, Outcome::Accepted | Outcome::AdversaryDropped),
                        "{name} seed {seed}: {}",
                        r.to_line()
                    ),
                    Origin::Adversary => assert!(matches!(r.outcome, Outcome::Rejected(_))),
                }
            }
            for s in &out.sessions {
                if let (Some(a), Some(b)) = (s.initiator_key, s.responder_key) {
                    assert_eq!(a, b);
                }
            }
        }
    }
}

#[test]
fn attack_rejection_classes() {
    let rejected = |name: &str, reason: RejectReason| {
        let out = run_scenario(&scenario(name), 3).unwrap();
        out.report.adversary.rejected[reason.name()]
    };
    assert!(rejected("replay-attack", RejectReason::ReplayDetected) >= 4);
    assert!(rejected("replay-attack", RejectReason::StaleTimestamp) >= 1);
    assert!(rejected("tamper-attack", RejectReason::BadAuthenticator) >= 1);
    assert!(rejected("tamper-attack", RejectReason::StaleTimestamp) >= 1);
    assert!(rejected("tamper-attack", RejectReason::BadCertificate) >= 1);
    assert!(rejected("mitm-attack", RejectReason::BadAuthenticator) >= 5);

    let out = run_scenario(&scenario("impersonation-attack"), 3).unwrap();
    let adv = &out.report.adversary;
    let forged = adv.rejected["BadAuthenticator"] + adv.rejected["BadCertificate"];
    assert_eq!(forged, adv.injected);
}

#[test]
fn one_request_is_three_events() {
    let mut cfg = scenario("honest-v2r");
    cfg.workload.truncate(1);
    cfg.workload[0].count = 1;
    let out = run_scenario(&cfg, 0).unwrap();
    let tags: Vec<EventTag> = out.events.iter().map(|e| e.1).collect();
    assert_eq!(tags, [EventTag::Generate, EventTag::Deliver, EventTag::Deliver]);
    assert_eq!(out.trace.len(), 2);
}

#[test]
fn empty_workload_is_quiet() {
    let mut cfg = scenario("honest-v2r");
    cfg.workload.clear();
    let out = run_scenario(&cfg, 0).unwrap();
    assert!(out.events.is_empty());
    assert!(out.trace.is_empty());
    assert_eq!(out.report.frames.generated, 0);
}

#[test]
fn out_of_range_frames_are_dropped() {
    let mut cfg = scenario("honest-v2r");
    cfg.links[0].range_m = Some(60.0);
    let out = run_scenario(&cfg, 0).unwrap();
    assert_conservation(&out);
    assert!(out.report.frames.dropped_out_of_range > 0);
    assert!(out.report.frames.accepted > 0);
}

#[test]
fn delivery_durations_follow_link_formula() {
    for name in HONEST {
        let out = run_scenario(&scenario(name), 9).unwrap();
        assert!(!out.deliveries.is_empty());
        for (size, link, d) in &out.deliveries {
            let want = link.hops() as f64 * (link.latency_s + (8 * size) as f64 / link.data_rate_bps);
            assert!(((d - want) / want).abs() < 1e-12);
        }
    }
}

#[test]
fn cellular_latency_drawn_in_range_and_fixed_per_link() {
    let out = run_scenario(&scenario("honest-all-channels"), 5).unwrap();
    let latencies: std::collections::BTreeSet<u64> = out
        .deliveries
        .iter()
        .filter(|(_, l, _)| l.kind == vcloud_core::netsim::LinkKind::Cellular)
        .map(|(_, l, _)| l.latency_s.to_bits())
        .collect();
    assert_eq!(latencies.len(), 1);
    let l = f64::from_bits(*latencies.iter().next().unwrap());
    assert!((1.5..=3.5).contains(&l));
}

#[test]
fn uploads_are_searchable_by_owner() {
    let out = run_scenario(&scenario("honest-all-channels"), 4).unwrap();
    assert!(!out.uploads.is_empty());
    assert_eq!(out.store.len(), out.uploads.len());
    for (owner, keys) in &out.owners {
        let vocab: std::collections::BTreeSet<&String> = out
            .uploads
            .iter()
            .filter(|u| &u.owner == owner)
            .flat_map(|u| u.keywords.iter())
            .collect();
        for kw in vocab {
            let mut want: Vec<_> = out
                .uploads
                .iter()
                .filter(|u| &u.owner == owner && u.keywords.contains(kw))
                .map(|u| u.record_id)
                .collect();
            want.sort();
            let got = out.store.search(&trapdoor(&keys.search_key, kw.as_bytes()).unwrap());
            assert_eq!(got, want, "{owner} {kw}");
            for id in &got {
                assert!(out.store.retrieve(id, &keys.data_key).is_ok());
            }
        }
    }
    assert_eq!(out.report.storage_bytes, out.store.to_bytes().unwrap().len() as u64);
}

#[test]
fn report_json_has_every_reject_reason() {
    let out = run_scenario(&scenario("honest-v2r"), 0).unwrap();
    let json: serde_json::Value = serde_json::from_str(&out.report.to_json()).unwrap();
    let rejected = json["frames"]["rejected"].as_object().unwrap();
    let names: Vec<&str> = RejectReason::ALL.iter().map(|r| r.name()).collect();
    let mut keys: Vec<&str> = rejected.keys().map(String::as_str).collect();
    keys.sort();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}
