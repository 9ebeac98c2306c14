//! Data-parallel core against its single-threaded execution.
//!
//! With the `parallel` feature each workload runs once inside a one-thread
//! rayon pool and once on the default pool. Built with
//! `--no-default-features`, only the sequential fallback is measured.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hairseg::data::{synth_samples, Batch, NormalizationSpec, SynthOptions};
use hairseg::metrics::{evaluate_pair, MaskPair, SsimParams};
use hairseg::model::{ModelConfig, ModelParams, SegFormer};
use hairseg::par;
use hairseg::rng::Rng;
use hairseg::train::batch_gradients;

struct Fixture {
    model: SegFormer,
    params: ModelParams<f32>,
    batch: Batch,
}

fn fixture() -> Fixture {
    let samples = synth_samples(8, 64, 1, &SynthOptions::default()).unwrap();
    let idx: Vec<usize> = (0..samples.len()).collect();
    let model = SegFormer::new(ModelConfig::tiny()).unwrap();
    let params = model.init_params(&mut Rng::new(2));
    let batch = Batch::assemble(&samples, &idx, &NormalizationSpec::default()).unwrap();
    Fixture { model, params, batch }
}

/// Run `f` under each execution mode available in this build.
fn modes(c: &mut Criterion, group: &str, f: impl Fn() + Sync) {
    let mut g = c.benchmark_group(group);
    g.sample_size(10);
    #[cfg(feature = "parallel")]
    {
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        g.bench_function(BenchmarkId::new("single_thread", 1), |b| b.iter(|| single.install(&f)));
        g.bench_function(BenchmarkId::new("default_pool", par::threads()), |b| b.iter(&f));
    }
    #[cfg(not(feature = "parallel"))]
    g.bench_function(BenchmarkId::new("sequential", par::threads()), |b| b.iter(&f));
    g.finish();
}

fn benches(c: &mut Criterion) {
    let fx = fixture();
    modes(c, "predict_batch", || {
        black_box(fx.model.predict_batch(&fx.params, &fx.batch.images).unwrap());
    });
    modes(c, "batch_gradients", || {
        black_box(batch_gradients(&fx.model, &fx.params, &fx.batch, 7).unwrap());
    });

    let mut rng = Rng::new(3);
    let pairs: Vec<MaskPair> = (0..32)
        .map(|_| {
            let mut m = || (0..64 * 64).map(|_| u8::from(rng.uniform() < 0.2)).collect::<Vec<_>>();
            MaskPair::new(64, 64, m(), m()).unwrap()
        })
        .collect();
    let ssim = SsimParams::default();
    modes(c, "metrics", || {
        black_box(par::map_range(pairs.len(), |i| evaluate_pair(&pairs[i], &ssim, None).unwrap()));
    });
}

criterion_group!(parallel, benches);
criterion_main!(parallel);
