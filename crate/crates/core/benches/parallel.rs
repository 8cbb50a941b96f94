//! Sequential against rayon execution for the batch paths: simulating
//! frames, sampling camera noise over a large image and scoring frames.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use smlm_core::datasets::{mock_predict, simulate_sequence_with, MockParams, SimulationParams};
use smlm_core::metrics::evaluate;
use smlm_core::physics::{sample_camera_with, FrameGeometry, PhotonImage};
use smlm_core::storage::Config;
use smlm_core::Exec;

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn simulate(c: &mut Criterion) {
    let cfg = Config::default();
    let psf = cfg.psf_model().unwrap();
    let camera = cfg.camera().unwrap();
    let params = SimulationParams {
        spec: &cfg.sampling,
        psf: &psf,
        camera: &camera,
        geometry: cfg.geometry().unwrap(),
        jitter_sigma: cfg.jitter_sigma,
    };
    let mut g = c.benchmark_group("simulate_64_frames");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| simulate_sequence_with(exec, 64, black_box(&params), 1).unwrap())
        });
    }
    g.finish();
}

fn camera(c: &mut Criterion) {
    let cfg = Config::default();
    let cam = cfg.camera().unwrap();
    let g = FrameGeometry::new(512, 512, 100.0).unwrap();
    let img =
        PhotonImage::from_values(g, (0..512 * 512).map(|i| (i % 97) as f64).collect()).unwrap();
    let mut group = c.benchmark_group("sample_camera_512x512");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sample_camera_with(exec, black_box(&img), &cam, 7).unwrap())
        });
    }
    group.finish();
}

fn scoring(c: &mut Criterion) {
    let cfg = Config::default();
    let psf = cfg.psf_model().unwrap();
    let camera = cfg.camera().unwrap();
    let params = SimulationParams {
        spec: &cfg.sampling,
        psf: &psf,
        camera: &camera,
        geometry: cfg.geometry().unwrap(),
        jitter_sigma: 0.0,
    };
    let sim = simulate_sequence_with(Exec::default(), 256, &params, 3).unwrap();
    let mock = MockParams {
        p_miss: 0.2,
        fp_rate: 3.0,
        sigma_xyz: [20.0, 20.0, 40.0],
        ..MockParams::default()
    };
    let preds = mock_predict(&sim.records, &mock, &cfg.sampling, 5).unwrap();
    let spec = cfg.match_spec();
    let mut g = c.benchmark_group("evaluate_256_frames");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evaluate(black_box(&preds), &sim.records, &spec, exec))
        });
    }
    g.finish();
}

criterion_group!(benches, simulate, camera, scoring);
criterion_main!(benches);
