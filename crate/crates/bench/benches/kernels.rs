use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dscope_core::ann::{AnnForest, AnnParams};
use dscope_core::metrics::{kde2d, scott_bandwidth};
use dscope_core::nn::cross_entropy_batch;
use dscope_core::synth::{gen_cluster_dataset, gen_noise_dataset};
use dscope_core::tsne::{joint_probabilities, kl_and_gradient};
use dscope_core::{Matrix, MlpModel};

fn gemm(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul_nt");
    for n in [64usize, 256] {
        let a = Matrix::from_vec(n, n, (0..n * n).map(|i| (i % 7) as f64 * 0.1).collect()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &a, |b, a| {
            b.iter(|| a.matmul_nt(black_box(a)).unwrap())
        });
    }
    group.finish();
}

fn classifier_step(c: &mut Criterion) {
    let data = gen_cluster_dataset(10, 64, 32, 0.75, 1).unwrap();
    let batch = data.features.select_rows(&(0..64).collect::<Vec<_>>());
    let labels = &data.labels[..64];
    for (name, width) in [("student_32", 32usize), ("teacher_256", 256)] {
        let model = MlpModel::classifier(32, &[width; 4], 10, 0);
        c.bench_function(&format!("forward_backward/{name}"), |b| {
            b.iter(|| {
                let pass = model.forward(&batch).unwrap();
                let (_, grad) = cross_entropy_batch(pass.logits(), labels).unwrap();
                model.backward(&batch, &pass, &grad).unwrap()
            })
        });
    }
}

fn ann(c: &mut Criterion) {
    let data = gen_noise_dataset(2000, 3).unwrap();
    let params = AnnParams::default();
    c.bench_function("ann/build_2000x15", |b| {
        b.iter(|| AnnForest::build(&data.lifted, params.clone()).unwrap())
    });
    let forest = AnnForest::build(&data.lifted, params).unwrap();
    c.bench_function("ann/knn10", |b| b.iter(|| forest.knn(black_box(17), 10).unwrap()));
}

fn kde(c: &mut Criterion) {
    let data = gen_noise_dataset(1000, 5).unwrap();
    let h = scott_bandwidth(&data.base);
    c.bench_function("kde2d/1000_g128", |b| b.iter(|| kde2d(&data.base, h, 128).unwrap()));
}

fn tsne(c: &mut Criterion) {
    let data = gen_noise_dataset(300, 7).unwrap();
    let p = joint_probabilities(&data.lifted, 30.0).unwrap();
    let y = data.base.clone();
    c.bench_function("tsne/kl_gradient_300", |b| b.iter(|| kl_and_gradient(&p, black_box(&y)).unwrap()));
}

criterion_group!(benches, gemm, classifier_step, ann, kde, tsne);
criterion_main!(benches);
