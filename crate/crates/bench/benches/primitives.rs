use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vcloud_core::crypto::{batch_verify, hash, schnorr_sign, schnorr_verify, stream_encrypt, BatchItem, GroupParams};
use vcloud_core::store::{make_record, search_key, trapdoor, StoreState};

fn signatures(c: &mut Criterion) {
    let group = GroupParams::p256();
    let x = group.scalar_from_digest(&hash(b"bench secret"));
    let k = group.scalar_from_digest(&hash(b"bench nonce"));
    let public = group.scalar_mul(&group.generator(), &x).unwrap();
    let msg = hash(b"bench message");
    let sig = schnorr_sign(&group, &x, msg.as_bytes(), &k).unwrap();

    c.bench_function("p256/sign", |b| b.iter(|| schnorr_sign(&group, &x, black_box(msg.as_bytes()), &k)));
    c.bench_function("p256/verify", |b| {
        b.iter(|| schnorr_verify(&group, &public, black_box(msg.as_bytes()), &sig))
    });

    let mut g = c.benchmark_group("p256/verify-n");
    for n in [10usize, 50, 100] {
        let sigs: Vec<_> = (0..n)
            .map(|i| {
                let k = group.scalar_from_digest(&hash(&i.to_be_bytes()));
                schnorr_sign(&group, &x, msg.as_bytes(), &k).unwrap()
            })
            .collect();
        let items: Vec<BatchItem<'_>> = sigs
            .iter()
            .map(|sig| BatchItem {
                public: &public,
                msg: msg.as_bytes(),
                sig,
            })
            .collect();
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::new("batch", n), &items, |b, items| {
            b.iter(|| batch_verify(&group, items))
        });
        g.bench_with_input(BenchmarkId::new("individual", n), &items, |b, items| {
            b.iter(|| items.iter().all(|i| schnorr_verify(&group, i.public, i.msg, i.sig).unwrap()))
        });
    }
    g.finish();
}

fn stream(c: &mut Criterion) {
    let key = hash(b"bench key");
    let mut g = c.benchmark_group("stream_encrypt");
    for size in [64usize, 1024, 16 * 1024] {
        let pt = vec![0x5a; size];
        g.throughput(Throughput::Bytes(size as u64));
        g.bench_with_input(BenchmarkId::from_parameter(size), &pt, |b, pt| {
            b.iter(|| stream_encrypt(&key, &[1; 32], pt))
        });
    }
    g.finish();
}

fn search(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let secret = hash(b"bench owner");
    let (dk, sk) = (hash(b"bench data key"), search_key(&secret));
    let vocab: Vec<String> = (0..100).map(|i| format!("kw{i}")).collect();
    let mut store = StoreState::new();
    for i in 0..10_000u64 {
        let kws: Vec<&[u8]> = (0..3).map(|_| vocab[rng.gen_range(0..100)].as_bytes()).collect();
        store
            .insert(make_record(hash(b"owner"), b"reading", &kws, &dk, &sk, i, rng.gen()).unwrap())
            .unwrap();
    }
    let token = trapdoor(&sk, b"kw7").unwrap();
    c.bench_function("store/search-10k", |b| b.iter(|| store.search(black_box(&token))));
    c.bench_function("store/trapdoor", |b| b.iter(|| trapdoor(&sk, black_box(b"kw7"))));
}

criterion_group!(benches, signatures, stream, search);
criterion_main!(benches);
