//! Throughput of the data-parallel kernels.
//!
//! In the default build every workload runs on a one-thread rayon pool and,
//! on multi-core machines, on the global pool. Built with `--no-default-features` the same
//! workloads run through the sequential fallback under the id `sequential`,
//! so the three variants can be compared in one criterion report:
//!
//! ```text
//! cargo bench -p tfa-core --no-default-features
//! cargo bench -p tfa-core
//! ```

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use tfa_core::datagen::{gen_dictionary_process, gen_event_sequences, Schedule};
use tfa_core::linalg::Mat;
use tfa_core::metrics::{autocorr_map, ustat_curve};
use tfa_core::temporal::{NovelKind, TemporalModel, TemporalShape};

/// Runs `f` under every execution mode available in this build.
fn for_each_mode(mut f: impl FnMut(&str, &dyn Fn(&mut (dyn FnMut() + Send)))) {
    #[cfg(feature = "parallel")]
    {
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        f("rayon-1", &|body: &mut (dyn FnMut() + Send)| single.install(&mut *body));
        let threads = rayon::current_num_threads();
        if threads > 1 {
            f(&format!("rayon-{threads}"), &|body: &mut (dyn FnMut() + Send)| body());
        }
    }
    #[cfg(not(feature = "parallel"))]
    f("sequential", &|body: &mut (dyn FnMut() + Send)| body());
}

fn temporal(c: &mut Criterion) {
    let data = gen_event_sequences(64, 128, 16, 4, 8, 4, 0.05, 1).unwrap();
    let seqs: Vec<Mat> = data.set.sequences().to_vec();
    let mut shape = TemporalShape::new(64, 256);
    shape.d_attn = 32;
    shape.novel_kind = NovelKind::BatchTopK;
    let model = TemporalModel::init(&shape, None, 1).unwrap();

    let mut group = c.benchmark_group("temporal");
    group.sample_size(10);
    group.throughput(Throughput::Elements(data.set.total_tokens() as u64));
    for_each_mode(|mode, run| {
        group.bench_function(BenchmarkId::new("backward", mode), |b| {
            b.iter(|| run(&mut || drop(black_box(model.backward_batch(&seqs).unwrap()))))
        });
        group.bench_function(BenchmarkId::new("encode_set", mode), |b| {
            b.iter(|| run(&mut || drop(black_box(model.encode_set(&data.set).unwrap()))))
        });
    });
    group.finish();
}

fn profile(c: &mut Criterion) {
    let planted = gen_dictionary_process(64, 128, 128, 256, Schedule::Staircase { base: 1, every: 8, cap: None }, 1).unwrap();
    let positions: Vec<usize> = (0..128).collect();
    let lags: Vec<usize> = (1..=16).collect();

    let mut group = c.benchmark_group("profile");
    group.sample_size(10);
    for_each_mode(|mode, run| {
        group.bench_function(BenchmarkId::new("ustat_curve", mode), |b| {
            b.iter(|| run(&mut || drop(black_box(ustat_curve(&planted.set, &positions).unwrap()))))
        });
        group.bench_function(BenchmarkId::new("autocorr_map", mode), |b| {
            b.iter(|| run(&mut || drop(black_box(autocorr_map(&planted.set, &lags).unwrap()))))
        });
    });
    group.finish();
}

fn synthesis(c: &mut Criterion) {
    let mut group = c.benchmark_group("datagen");
    group.sample_size(10);
    for_each_mode(|mode, run| {
        group.bench_function(BenchmarkId::new("event_sequences", mode), |b| {
            b.iter(|| run(&mut || drop(black_box(gen_event_sequences(64, 256, 64, 6, 8, 4, 0.05, 2).unwrap()))))
        });
    });
    group.finish();
}

criterion_group!(benches, temporal, profile, synthesis);
criterion_main!(benches);
