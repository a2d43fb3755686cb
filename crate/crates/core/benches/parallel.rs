//! Throughput of the data-parallel hot paths.
//!
//! Run once with the default features and once with
//! `--no-default-features` to compare the rayon and sequential builds; the
//! benchmark ids carry the build flavour so criterion keeps both baselines.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use bgmatte_core::model::{Generator, InputBatch, MattingInput, NetConfig};
use bgmatte_core::nn::ops::{conv2d, ConvGeom};
use bgmatte_core::nn::Tensor;
use bgmatte_core::par;
use bgmatte_core::preprocess::{gaussian_blur, refine_segmentation, warp_image, Homography};
use bgmatte_core::toy::{textured_background, toy_scene};

fn flavour() -> &'static str {
    if par::is_parallel() {
        "rayon"
    } else {
        "sequential"
    }
}

fn preprocessing(c: &mut Criterion) {
    let img = textured_background(512, 512, 1);
    let prob = gaussian_blur(&img.channel(0), 2.0).unwrap();
    let h = Homography::rigid(1.0, 256.0, 256.0, 5.0, -3.0);
    let mut g = c.benchmark_group("preprocess");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("gaussian_blur_512", flavour()), |b| {
        b.iter(|| gaussian_blur(black_box(&prob), 5.0).unwrap())
    });
    g.bench_function(BenchmarkId::new("refine_segmentation_512", flavour()), |b| {
        b.iter(|| refine_segmentation(black_box(&prob)))
    });
    g.bench_function(BenchmarkId::new("warp_image_512", flavour()), |b| {
        b.iter(|| warp_image(black_box(&img), &h, (512, 512)).unwrap())
    });
    g.finish();
}

fn network(c: &mut Criterion) {
    let x = Tensor::<f32>::from_vec(&[4, 16, 64, 64], (0..4 * 16 * 64 * 64).map(|i| (i % 13) as f32 / 13.0).collect())
        .unwrap();
    let w = Tensor::<f32>::from_vec(&[32, 16, 3, 3], (0..32 * 16 * 9).map(|i| (i % 7) as f32 / 7.0 - 0.5).collect())
        .unwrap();
    let gen = Generator::<f32>::init(&NetConfig::toy(), 0).unwrap();
    let inputs: Vec<MattingInput> = (0..4)
        .map(|s| {
            let sc = toy_scene(128, s);
            MattingInput::still(sc.image, sc.background, refine_segmentation(&sc.prob)).unwrap()
        })
        .collect();
    let refs: Vec<&MattingInput> = inputs.iter().collect();
    let batch = InputBatch::<f32>::from_inputs(&refs).unwrap();

    let mut g = c.benchmark_group("network");
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("conv3x3_16to32_64px_batch4", flavour()), |b| {
        b.iter(|| conv2d(black_box(&x), &w, None, ConvGeom::new(1, 1)))
    });
    g.bench_function(BenchmarkId::new("toy_generator_forward_batch4", flavour()), |b| {
        b.iter(|| gen.forward(black_box(&batch)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, preprocessing, network);
criterion_main!(benches);
