use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use structgen_core::encoding::FrameSequence;
use structgen_core::lstm::{LstmModel, LstmModelConfig};
use structgen_core::numerics::ParamStore;
use structgen_core::tcn::{TcnConfig, TcnModel};
use structgen_core::WaveNetFrames;

fn frames(t: usize) -> FrameSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let melody = (0..t).map(|_| rng.random_range(48..84)).collect();
    let chords = (0..t).map(|_| rng.random_range(0..25)).collect();
    FrameSequence::new(melody, chords).unwrap()
}

fn lstm(c: &mut Criterion) {
    let mut group = c.benchmark_group("lstm");
    group.sample_size(10);
    let f = frames(256);
    for bi in [false, true] {
        let cfg = LstmModelConfig { bidirectional_context: bi, ..LstmModelConfig::default() };
        let mut store = ParamStore::new();
        let model = LstmModel::new(cfg, &mut store, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let tag = if bi { "bi" } else { "uni" };
        group.bench_function(BenchmarkId::new("forward", tag), |b| b.iter(|| model.forward(&store, &f).unwrap()));
        group.bench_function(BenchmarkId::new("loss_and_grad", tag), |b| {
            b.iter(|| model.loss_and_grad(&mut store, &f).unwrap())
        });
    }
    group.finish();
}

fn tcn(c: &mut Criterion) {
    let mut group = c.benchmark_group("tcn");
    group.sample_size(10);
    let f = frames(1024);
    let melody: Vec<u8> = f.melody().iter().map(|&m| m.min(127)).collect();
    let wn = WaveNetFrames::new(melody.clone(), f.chords().to_vec()).unwrap();
    let mut store = ParamStore::new();
    let model = TcnModel::new(TcnConfig::default(), &mut store, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    group.bench_function("forward", |b| b.iter(|| model.forward_labels(&store, &melody, f.chords()).unwrap()));
    group.bench_function("loss_and_grad", |b| b.iter(|| model.loss_and_grad(&mut store, &wn).unwrap()));
    group.finish();
}

criterion_group!(benches, lstm, tcn);
criterion_main!(benches);
