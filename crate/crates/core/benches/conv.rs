//! Thread-pool and packed-vs-full comparisons. Build with
//! `--no-default-features` to time the sequential fallback.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use scnn::conv::conv2d_backward;
use scnn::harness::config::parse_layers;
use scnn::harness::data::{gen_synthetic_pairing, PairingRule};
use scnn::harness::{Network, NetworkConfig};
use scnn::packed::{pack, packed_sym_conv, packed_sym_gen_conv};
use scnn::par::{map_range, Pool};
use scnn::{conv2d_forward, self_cartesian, DenseTensor, PairTensor, Rng, SequenceFeatures, SymGenKernel, SymPresKernel};

fn symmetric_input(l: usize, c: usize, rng: &mut Rng) -> PairTensor {
    let raw = DenseTensor::uniform(&[l, l, c], 1.0, rng).unwrap();
    PairTensor::symmetric(raw.zip_map(&raw.transpose_spatial().unwrap(), |a, b| a + b).unwrap(), 0.0).unwrap()
}

fn threads(c: &mut Criterion) {
    let mut rng = Rng::new(1);
    let z = symmetric_input(64, 8, &mut rng);
    let k = SymPresKernel::random(3, 8, 8, 0.5, &mut rng).unwrap().expand();
    let up = DenseTensor::uniform(&[64, 64, 8], 1.0, &mut rng).unwrap();
    // `None` runs on the global pool (all cores)
    let pools = [("1-thread", Some(Pool::new(1))), ("default-pool", None)];
    fn on<T: Send>(pool: &Option<Pool>, f: impl FnOnce() -> T + Send) -> T {
        match pool {
            Some(p) => p.install(f),
            None => f(),
        }
    }

    let mut g = c.benchmark_group("conv_threads");
    for (name, pool) in &pools {
        g.bench_function(BenchmarkId::new("forward_L64", name), |b| {
            b.iter(|| black_box(on(pool, || conv2d_forward(z.tensor(), &k).unwrap())))
        });
        g.bench_function(BenchmarkId::new("backward_L64", name), |b| {
            b.iter(|| black_box(on(pool, || conv2d_backward(z.tensor(), &k, &up).unwrap())))
        });
    }
    g.finish();

    let cfg = NetworkConfig {
        layers: parse_layers("gen:3:8:relu,pres:3:8:relu,pres:3:1:sigmoid").unwrap(),
        ..NetworkConfig::default()
    };
    let net = Network::init(&cfg, &mut rng).unwrap();
    let batch: Vec<_> = (0..10)
        .map(|_| gen_synthetic_pairing(&mut rng, 30, 4, &PairingRule::Complementary, 3).unwrap())
        .collect();
    let mut g = c.benchmark_group("batch_grads");
    for (name, pool) in &pools {
        let step = || {
            map_range(batch.len(), |i| {
                let s = &batch[i];
                net.loss_and_grads(&s.features, &s.label, s.len(), 5.0, 3).unwrap().loss
            })
        };
        g.bench_function(BenchmarkId::new("L30x10", name), |b| {
            b.iter(|| black_box(on(pool, step)))
        });
    }
    g.finish();
}

fn packed_vs_full(c: &mut Criterion) {
    let mut rng = Rng::new(2);
    let mut g = c.benchmark_group("packed_vs_full");
    for l in [32, 64] {
        let z = symmetric_input(l, 4, &mut rng);
        let k = SymPresKernel::random(3, 4, 4, 0.5, &mut rng).unwrap();
        let full_k = k.expand();
        let p = pack(&z).unwrap();
        g.bench_with_input(BenchmarkId::new("pres_full", l), &l, |b, _| {
            b.iter(|| black_box(conv2d_forward(z.tensor(), &full_k).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("pres_packed", l), &l, |b, _| {
            b.iter(|| black_box(packed_sym_conv(&p, &k).unwrap()))
        });

        let x = SequenceFeatures::new(DenseTensor::uniform(&[l, 4], 1.0, &mut rng).unwrap()).unwrap();
        let gk = SymGenKernel::random(3, 4, 4, 0.5, &mut rng).unwrap();
        let gfull = gk.expand();
        g.bench_with_input(BenchmarkId::new("gen_full", l), &l, |b, _| {
            b.iter(|| black_box(conv2d_forward(&self_cartesian(&x), &gfull).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("gen_packed", l), &l, |b, _| {
            b.iter(|| black_box(packed_sym_gen_conv(&x, &gk).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, threads, packed_vs_full);
criterion_main!(benches);
