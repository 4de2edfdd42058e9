use std::collections::BTreeMap;
use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use vcloud_core::crypto::{canon, hash, schnorr_sign, stream_encrypt, Digest, GroupParams};
use vcloud_core::netsim::{load_config, run_scenario, scenario_ra_seed, SimError};
use vcloud_core::protocol::{ra_init, Channel, LoginVerifier, Registrar, VerifierMode, DEFAULT_FRESHNESS_MS};
use vcloud_core::store::{record_id, trapdoor, StoreState};

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(name = "vcloud", version, about = "Vehicular cloud protocol simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trace.txt, report.json, store.bin and owners.json.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search a store file with an owner's search key; prints matching record ids.
    Search {
        #[arg(long)]
        store: PathBuf,
        /// Search key, 64 hex digits.
        #[arg(long)]
        key: String,
        #[arg(long)]
        keyword: String,
    },
    /// Register one vehicle and print its TPD record and certificate as JSON.
    Register {
        #[arg(long)]
        identity: String,
        #[arg(long)]
        password: String,
        #[arg(long, value_enum, default_value_t = GroupArg::P256)]
        group: GroupArg,
        /// RA seed, derived the same way as in `run`.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3_600_000)]
        expiry_ms: u64,
        #[arg(long)]
        fuzzy: bool,
    },
    /// Print deterministic test vectors for the primitives as JSON.
    Vectors,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupArg {
    Toy,
    P256,
}

impl GroupArg {
    fn params(self) -> GroupParams {
        match self {
            GroupArg::Toy => GroupParams::toy(),
            GroupArg::P256 => GroupParams::p256(),
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, seed, out } => cmd_run(&scenario, seed, &out),
        Command::Search { store, key, keyword } => cmd_search(&store, &key, &keyword),
        Command::Register {
            identity,
            password,
            group,
            seed,
            expiry_ms,
            fuzzy,
        } => cmd_register(&identity, &password, group, seed, expiry_ms, fuzzy),
        Command::Vectors => cmd_vectors(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| fail(EXIT_IO, format!("{}: {e}", path.display())))
}

fn cmd_run(scenario: &Path, seed: u64, out: &Path) -> Result<(), Failure> {
    let cfg = load_config(scenario).map_err(|e| fail(EXIT_CONFIG, e.to_string()))?;
    let output = run_scenario(&cfg, seed).map_err(|e| match e {
        SimError::Invariant(_) => fail(EXIT_INVARIANT, e.to_string()),
        _ => fail(EXIT_CONFIG, e.to_string()),
    })?;
    fs::create_dir_all(out).map_err(|e| fail(EXIT_IO, format!("{}: {e}", out.display())))?;

    write(&out.join("trace.txt"), output.trace.to_text())?;
    write(&out.join("report.json"), output.report.to_json() + "\n")?;
    let store = output.store.to_bytes().map_err(|e| fail(EXIT_IO, e.to_string()))?;
    write(&out.join("store.bin"), store)?;

    let owners: BTreeMap<&str, Value> = output
        .owners
        .iter()
        .map(|(name, k)| {
            let v = json!({
                "pid": k.pid.to_hex(),
                "data_key": k.data_key.to_hex(),
                "search_key": k.search_key.to_hex(),
            });
            (name.as_str(), v)
        })
        .collect();
    write(&out.join("owners.json"), pretty(&json!(owners)))?;

    let f = &output.report.frames;
    emit(&format!(
        "{}: {} frames, {} accepted, {} rejected, {} out of range, {} records stored\n",
        cfg.name,
        f.generated,
        f.accepted,
        f.rejected_total(),
        f.dropped_out_of_range,
        output.store.len()
    ))
}

fn cmd_search(store: &Path, key: &str, keyword: &str) -> Result<(), Failure> {
    let key = Digest::from_hex(key).ok_or_else(|| fail(EXIT_CONFIG, "--key must be 64 hex digits"))?;
    let token = trapdoor(&key, keyword.as_bytes()).map_err(|e| fail(EXIT_CONFIG, e.to_string()))?;
    let state = StoreState::load(store).map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", store.display())))?;
    let ids: String = state.search(&token).iter().map(|id| format!("{id}\n")).collect();
    emit(&ids)
}

fn cmd_register(
    identity: &str,
    password: &str,
    group: GroupArg,
    seed: u64,
    expiry_ms: u64,
    fuzzy: bool,
) -> Result<(), Failure> {
    let group = group.params();
    let mode = if fuzzy { VerifierMode::Fuzzy } else { VerifierMode::Exact };
    let params = ra_init(&scenario_ra_seed(seed), group.clone(), DEFAULT_FRESHNESS_MS)
        .map_err(|e| fail(EXIT_CONFIG, e.to_string()))?
        .with_verifier_mode(mode);
    let ra_public = group.encode(&params.public().ra_public);
    let mut registrar = Registrar::new(params);
    let tpd = registrar
        .register_vehicle(identity.as_bytes(), password.as_bytes(), expiry_ms, 0)
        .map_err(|e| fail(EXIT_CONFIG, e.to_string()))?;
    let verifier = match &tpd.verifier {
        LoginVerifier::Exact(d) => json!({ "exact": d.to_hex() }),
        LoginVerifier::Fuzzy(b) => json!({ "fuzzy": b }),
    };
    let cert = &tpd.cert;
    let doc = json!({
        "ra_public": hex::encode(ra_public),
        "tpd": {
            "pid": tpd.pid.to_hex(),
            "masked_secret": hex::encode(tpd.masked_secret),
            "verifier": verifier,
            "masked_signing_key": hex::encode(tpd.masked_signing_key),
        },
        "certificate": {
            "pid": cert.pid.to_hex(),
            "public": hex::encode(group.encode(&cert.public)),
            "expiry_ms": cert.expiry_ms,
            "ra_signature": hex::encode(cert.ra_sig.encode(&group)),
            "encoded": hex::encode(cert.encode(&group)),
        },
    });
    emit(&pretty(&doc))
}

fn cmd_vectors() -> Result<(), Failure> {
    let internal = |e: &dyn std::fmt::Display| fail(EXIT_IO, e.to_string());

    let sha = ["", "abc"]
        .iter()
        .map(|s| json!({ "input": s, "digest": hash(s.as_bytes()).to_hex() }))
        .collect::<Vec<_>>();

    let fields: [&[u8]; 3] = [b"a", b"", b"xyz"];
    let encoded = canon(&fields).map_err(|e| internal(&e))?;

    let toy = GroupParams::toy();
    let g = toy.generator();
    let mut powers = Vec::new();
    for k in 0u32..11 {
        let e = toy.scalar_mul(&g, &toy.scalar(k)).map_err(|e| internal(&e))?;
        powers.push(hex::encode(toy.encode(&e)));
    }

    let p256 = GroupParams::p256();
    let x = p256.scalar_from_digest(&hash(b"vector secret"));
    let k = p256.scalar_from_digest(&hash(b"vector nonce"));
    let public = p256.scalar_mul(&p256.generator(), &x).map_err(|e| internal(&e))?;
    let sig = schnorr_sign(&p256, &x, b"vector message", &k).map_err(|e| internal(&e))?;

    let key = hash(b"vector key");
    let ct = stream_encrypt(&key, &[7; 32], b"vehicular cloud").map_err(|e| internal(&e))?;

    let params = ra_init(&[0; 32], GroupParams::toy(), DEFAULT_FRESHNESS_MS).map_err(|e| internal(&e))?;
    let mut registrar = Registrar::new(params.clone());
    let tpd = registrar
        .register_vehicle(b"alice", b"pw-alice", 1_000_000, 0)
        .map_err(|e| internal(&e))?;
    let login = vcloud_core::protocol::login(&tpd, params.group(), b"alice", b"pw-alice").map_err(|e| internal(&e))?;
    let rsu_id = registrar.register_rsu(b"rsu-1").map_err(|e| internal(&e))?.rsu_id;
    let alice = vcloud_core::protocol::Endpoint::vehicle(params.public().clone(), login);
    let frame = alice
        .make_request(Channel::V2R, b"road ok", 1000, [0xab; 32], &rsu_id)
        .map_err(|e| internal(&e))?;

    let doc = json!({
        "sha256": sha,
        "canon": {
            "fields": fields.iter().map(hex::encode).collect::<Vec<_>>(),
            "encoded": hex::encode(encoded),
        },
        "toy_group": { "p": 23, "q": 11, "g": 2, "powers_of_g": powers },
        "schnorr_p256": {
            "secret": hex::encode(x.to_bytes()),
            "public": hex::encode(p256.encode(&public)),
            "nonce": hex::encode(k.to_bytes()),
            "message": hex::encode(b"vector message"),
            "signature": hex::encode(sig.encode(&p256)),
        },
        "stream": {
            "key": key.to_hex(),
            "nonce": hex::encode([7u8; 32]),
            "plaintext": hex::encode(b"vehicular cloud"),
            "body": hex::encode(&ct.body),
            "tag": ct.tag.to_hex(),
        },
        "record_id": {
            "owner_pid": hash(b"owner").to_hex(),
            "timestamp_ms": 1_700_000_000_000u64,
            "nonce": hex::encode((0u8..32).collect::<Vec<_>>()),
            "id": record_id(&hash(b"owner"), 1_700_000_000_000, &std::array::from_fn(|i| i as u8)).to_hex(),
        },
        "v2r_frame": {
            "ra_seed": hex::encode([0u8; 32]),
            "group": "toy",
            "identity": "alice",
            "rsu": "rsu-1",
            "timestamp_ms": 1000,
            "frame": hex::encode(frame.encode()),
        },
    });
    emit(&pretty(&doc))
}

/// Writes to stdout; a closed pipe (`vcloud search ... | head`) is not an error.
fn emit(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(fail(EXIT_IO, e.to_string())),
        _ => Ok(()),
    }
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json values always serialize") + "\n"
}
