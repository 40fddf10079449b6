use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use suc_core::analysis::{berlekamp_massey, build_parity_cascade};
use suc_core::boolean::{algebraic_immunity, combiner_f16, walsh_transform, TruthTable};
use suc_core::protocol::{CipherE, ERef};
use suc_core::{BitSeq, FeedbackSpec, Ksg, KsgConfig, Nlfsr};

fn random_bits(n: usize, seed: u64) -> BitSeq {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BitSeq::from_bools((0..n).map(|_| rng.random::<bool>()))
}

fn nlfsr_step(c: &mut Criterion) {
    let spec: FeedbackSpec = "16:basic:1,(1,2),2".parse().unwrap();
    let mut r = Nlfsr::new(spec, 1).unwrap();
    let mut g = c.benchmark_group("nlfsr");
    g.throughput(Throughput::Elements(1024));
    g.bench_function("step_1024", |b| {
        b.iter(|| {
            let mut acc = false;
            for _ in 0..1024 {
                acc ^= r.step();
            }
            black_box(acc)
        })
    });
    g.finish();
}

fn keystream(c: &mut Criterion) {
    // Sixteen stand-in registers of the design lengths feeding the real combiner.
    let lengths = [6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 19, 21, 22, 23];
    let specs = lengths
        .iter()
        .map(|n| format!("{n}:basic:1,(1,2)").parse().unwrap())
        .collect();
    let cfg = KsgConfig::new(specs, combiner_f16()).unwrap();
    let mut g = Ksg::new(cfg, &[1; 16]).unwrap();
    let mut group = c.benchmark_group("ksg");
    group.throughput(Throughput::Elements(4096));
    group.bench_function("bits_4096", |b| b.iter(|| black_box(g.next_bits(4096))));
    group.finish();
}

fn bm(c: &mut Criterion) {
    let mut g = c.benchmark_group("berlekamp_massey");
    for n in [1024usize, 8192] {
        let s = random_bits(n, n as u64);
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::from_parameter(n), &s, |b, s| {
            b.iter(|| black_box(berlekamp_massey(s)))
        });
    }
    g.finish();
}

fn boolean(c: &mut Criterion) {
    let f16 = suc_core::boolean::anf_to_tt(&combiner_f16()).unwrap();
    c.bench_function("walsh_16_vars", |b| {
        b.iter(|| black_box(walsh_transform(&f16)))
    });
    let tt10 =
        TruthTable::from_fn(10, |x| x.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 63 == 1).unwrap();
    c.bench_function("algebraic_immunity_10_vars", |b| {
        b.iter(|| black_box(algebraic_immunity(&tt10).unwrap()))
    });
}

fn parity(c: &mut Criterion) {
    let periods: Vec<usize> = (6..14).map(|n| (1usize << n) - 1).collect();
    let cascade = build_parity_cascade(&periods);
    let s = random_bits(cascade.span() + 4096, 2);
    c.bench_function("parity_cascade_256_taps", |b| {
        b.iter(|| black_box(cascade.apply(&s).unwrap()))
    });
}

fn cipher(c: &mut Criterion) {
    let key = [0x5Au8; 16];
    c.bench_function("eref_encrypt", |b| {
        b.iter(|| black_box(ERef.encrypt(&key, black_box(0x0123_4567_89AB_CDEF))))
    });
}

criterion_group!(benches, nlfsr_step, keystream, bm, boolean, parity, cipher);
criterion_main!(benches);
