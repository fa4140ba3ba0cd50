//! Benchmarks for the hot numeric kernels: batched convolution, the lattice
//! Cholesky factor, IRLS fitting, and one MC feature pass.

use bayescglm_core::glm::{irls_fit, GlmDataset, GlmFamily};
use bayescglm_core::linalg::cholesky;
use bayescglm_core::nn::{train, Activation, AdamHyper, LayerSpec, LossKind, NetworkConfig};
use bayescglm_core::rng::{draw_normal, SeededRng};
use bayescglm_core::simulate::{lattice_covariance, MaternParams};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn lattice_config() -> NetworkConfig {
    NetworkConfig {
        layers: vec![
            LayerSpec::Conv2D { channels: 6, kernel: (5, 5), stride: (2, 2), activation: Activation::TanH },
            LayerSpec::Dropout { rate: 0.2 },
            LayerSpec::MaxPool { window: (2, 2) },
            LayerSpec::Flatten,
            LayerSpec::Dense { width: 8, activation: Activation::TanH },
            LayerSpec::Dropout { rate: 0.2 },
            LayerSpec::Concatenate,
            LayerSpec::Dense { width: 1, activation: Activation::Linear },
        ],
        loss: LossKind::Mse,
        optimizer: AdamHyper::default(),
        batch_size: 32,
        epochs: 1,
        patience: 1,
        validation_fraction: 0.0,
    }
}

fn bench_conv_epoch(c: &mut Criterion) {
    let rng = SeededRng::new(1);
    let n = 128;
    let x = draw_normal(&mut rng.stream("x", 0), &[n, 30, 30]);
    let z = draw_normal(&mut rng.stream("z", 0), &[n, 2]);
    let y = draw_normal(&mut rng.stream("y", 0), &[n]);
    c.bench_function("train_one_epoch_conv_128x30x30", |b| {
        b.iter(|| {
            let trained = train(lattice_config(), &x, Some(&z), &y, &rng).unwrap();
            black_box(trained.log.epochs.len())
        })
    });
}

fn bench_forward_pass(c: &mut Criterion) {
    let rng = SeededRng::new(2);
    let n = 700;
    let x = draw_normal(&mut rng.stream("x", 0), &[n, 30, 30]);
    let z = draw_normal(&mut rng.stream("z", 0), &[n, 2]);
    let y = draw_normal(&mut rng.stream("y", 0), &[n]);
    let trained = train(lattice_config(), &x, Some(&z), &y, &rng).unwrap();
    let masks = trained.network.draw_masks(&mut rng.stream("m", 0));
    c.bench_function("masked_forward_700_rows", |b| {
        b.iter(|| {
            let fwd = trained
                .network
                .forward(x.data(), n, Some(z.data()), Some(&masks), false)
                .unwrap();
            black_box(fwd.features.len())
        })
    });
}

fn bench_lattice_cholesky(c: &mut Criterion) {
    let params = MaternParams { variance: 1.0, smoothness: 0.5, range: 15.0 };
    let cov = lattice_covariance(30, 30, &params).unwrap();
    let mut group = c.benchmark_group("linalg");
    group.sample_size(10);
    group.bench_function("cholesky_900x900", |b| {
        b.iter(|| black_box(cholesky(&cov, 900).unwrap().jitter))
    });
    group.finish();
}

fn bench_irls(c: &mut Criterion) {
    let rng = SeededRng::new(3);
    let n = 700;
    let q = 10;
    let design = draw_normal(&mut rng.stream("a", 0), &[n, q]);
    let mut noise = rng.stream("y", 0);
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let eta: f64 = design.slice(i).iter().take(3).sum::<f64>() * 0.3;
            noise.poisson(eta.exp().min(50.0))
        })
        .collect();
    let data = GlmDataset::new(design.data().to_vec(), n, q, y, GlmFamily::Poisson).unwrap();
    c.bench_function("irls_poisson_700x10", |b| {
        b.iter(|| black_box(irls_fit(&data).unwrap().iterations))
    });
}

criterion_group!(benches, bench_conv_epoch, bench_forward_pass, bench_lattice_cholesky, bench_irls);
criterion_main!(benches);
