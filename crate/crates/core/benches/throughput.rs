//! Parallel vs sequential throughput for the batch stages of the pipeline.
//!
//! The library's batch entry points run on rayon when the `parallel`
//! feature (default) is enabled; every stage also has a sequential path
//! with byte-identical output. These benchmarks compare the two on
//! realistic workloads:
//!
//! ```text
//! cargo bench -p figrec-core
//! cargo bench -p figrec-core --no-default-features   # sequential library build
//! ```

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use figrec_core::correction::{correct_batch, correct_sequence};
use figrec_core::ingest::{self, RawWindow, SegmentationSpec};
use figrec_core::mlp::{self, MlpSpec, TrainConfig};
use figrec_core::par;
use figrec_core::prob::ProbVector;
use figrec_core::synth::{gen_corpus, gen_dance, SynthConfig};
use figrec_core::transitions::TransitionMatrix;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bench_config(n_dances: usize) -> SynthConfig {
    let mut c = SynthConfig::default_fixture();
    c.n_dances = n_dances;
    c.seed = 7;
    c.length_range = (40, 50);
    c
}

fn corpus_generation(c: &mut Criterion) {
    let config = bench_config(8);
    let mut group = c.benchmark_group("corpus_generation");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(gen_corpus(black_box(&config)).unwrap()))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            black_box(par::map_indices_seq(config.n_dances, |i| {
                gen_dance(black_box(&config), i)
            }))
        })
    });
    group.finish();
}

fn downsampling(c: &mut Criterion) {
    let config = bench_config(2);
    let corpus = gen_corpus(&config).unwrap();
    let mut windows: Vec<RawWindow> = Vec::new();
    for g in &corpus {
        let spec =
            SegmentationSpec::new(config.tempo_bpm, config.intro_s, g.labels.len(), 0.35).unwrap();
        windows.extend(ingest::segment(&g.log, &spec).unwrap());
    }
    let mut group = c.benchmark_group("downsample_windows");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(ingest::downsample_windows(black_box(&windows)).unwrap()))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            let out: Result<Vec<_>, _> = par::map_indices_seq(windows.len(), |k| {
                ingest::downsample(black_box(&windows[k]), k)
            })
            .into_iter()
            .collect();
            black_box(out.unwrap())
        })
    });
    group.finish();
}

fn batch_correction(c: &mut Criterion) {
    let matrix = TransitionMatrix::unbiased();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sequences: Vec<Vec<ProbVector>> = (0..64)
        .map(|_| {
            (0..50)
                .map(|_| {
                    let mut raw = [0.0f64; 16];
                    for v in &mut raw {
                        *v = rng.random::<f64>();
                    }
                    ProbVector::normalized(raw).unwrap()
                })
                .collect()
        })
        .collect();
    let mut group = c.benchmark_group("markov_correction");
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(correct_batch(black_box(&sequences), &matrix)))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            black_box(par::map_batch_seq(black_box(&sequences), |s| {
                correct_sequence(s, &matrix)
            }))
        })
    });
    group.finish();
}

fn batch_inference(c: &mut Criterion) {
    let config = bench_config(4);
    let corpus = gen_corpus(&config).unwrap();
    let samples: Vec<figrec_core::data::FigureSample> = corpus
        .iter()
        .flat_map(|g| g.dance.figures.iter().cloned())
        .collect();
    let labeled: Vec<figrec_core::data::FigureSample> = samples.clone();
    let spec = MlpSpec::for_figures(2, 64, 1);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 32,
        learning_rate: 1e-3,
    };
    let (model, _) = mlp::train_on_samples(&spec, &labeled, &cfg).unwrap();
    let mut group = c.benchmark_group("classifier_inference");
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(model.predict_proba_samples(black_box(&samples)).unwrap()))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            let out: Result<Vec<_>, _> =
                par::map_batch_seq(black_box(&samples), |s| model.forward_sample(s))
                    .into_iter()
                    .collect();
            black_box(out.unwrap())
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    corpus_generation,
    downsampling,
    batch_correction,
    batch_inference
);
criterion_main!(benches);
