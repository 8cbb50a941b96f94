use proptest::collection::vec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use smlm_core::datasets::{
    jitter_camera, mock_predict, FrameRecord, Localization, MockParams, SamplingSpec,
};
use smlm_core::metrics::{
    aggregate, efficiency, evaluate, match_frame, threshold_sweep, EfficiencyWeights, MatchSpec,
    RmseMode,
};
use smlm_core::otloss::{ot_loss, random_instance, LossConfig};
use smlm_core::physics::{
    psf_patch, render_frame, sample_camera, Activation, AduFrame, AstigmaticGaussian, CameraParams,
    FrameGeometry, PhotonImage, PsfModel,
};
use smlm_core::storage::{read_locs, read_stack, write_locs, write_stack, CameraSpec};
use smlm_core::transport::{hungarian, sinkhorn_log, CostMatrix, EpsilonScale, SinkhornConfig};
use smlm_core::Exec;

fn activation() -> impl Strategy<Value = Activation> {
    (
        -200.0..3400.0f64,
        -200.0..3400.0f64,
        -700.0..700.0f64,
        0.0..20000.0f64,
    )
        .prop_map(|(x, y, z, n)| Activation::new(x, y, z, n))
}

fn model() -> PsfModel {
    PsfModel::astigmatic(AstigmaticGaussian::default(), 100.0, 750.0).unwrap()
}

fn geometry() -> FrameGeometry {
    FrameGeometry::new(32, 32, 100.0).unwrap()
}

fn cost_matrix(max_d: usize) -> impl Strategy<Value = (usize, Vec<f64>)> {
    (1..=max_d).prop_flat_map(|d| (Just(d), vec(0.0..10.0f64, d * d)))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn focal_patch_has_unit_mass(
        s0x in 80.0..250.0f64,
        s0y in 80.0..250.0f64,
        depth in 0.0..600.0f64,
        shift in 200.0..800.0f64,
        px in 60.0..160.0f64,
    ) {
        let params = AstigmaticGaussian { sigma0_x: s0x, sigma0_y: s0y, astig_depth: depth, focal_shift: shift };
        let m = PsfModel::astigmatic(params, px, 750.0).unwrap();
        prop_assert!(m.support_radius_px() >= 1);
        let mass = psf_patch(&m, 0.0, 0.0, 0.0).unwrap().sum();
        prop_assert!((mass - 1.0).abs() < 1e-6, "mass {}", mass);
    }

    #[test]
    fn rendering_is_additive(a in vec(activation(), 0..6), b in vec(activation(), 0..6)) {
        let m = model();
        let both: Vec<_> = a.iter().chain(&b).copied().collect();
        let ia = render_frame(&a, &m, geometry()).unwrap();
        let ib = render_frame(&b, &m, geometry()).unwrap();
        let iab = render_frame(&both, &m, geometry()).unwrap();
        for k in 0..iab.values.len() {
            prop_assert!(close(iab.values[k], ia.values[k] + ib.values[k], 1e-12));
        }
    }

    #[test]
    fn rendering_scales_with_photons(a in vec(activation(), 1..6), p in -4i32..4) {
        // powers of two keep the scaling exact in floating point
        let k = 2f64.powi(p);
        let m = model();
        let scaled: Vec<_> = a.iter().map(|v| Activation { photons: v.photons * k, ..*v }).collect();
        let i1 = render_frame(&a, &m, geometry()).unwrap();
        let ik = render_frame(&scaled, &m, geometry()).unwrap();
        for (x, y) in i1.values.iter().zip(&ik.values) {
            prop_assert_eq!(x * k, *y);
        }
    }

    #[test]
    fn camera_is_deterministic_and_clamped(level in 0.0..1e9f64, seed in any::<u64>(), scmos in any::<bool>()) {
        let cam = if scmos { CameraParams::DHYANA_400BSI_V3 } else { CameraParams::EVOLVE_DELTA_512 };
        let g = FrameGeometry::new(8, 8, 100.0).unwrap();
        let values: Vec<f64> = (0..64).map(|i| level * (i as f64 / 63.0)).collect();
        let img = PhotonImage::from_values(g, values).unwrap();
        let a = sample_camera(&img, &cam, seed).unwrap();
        let b = sample_camera(&img, &cam, seed).unwrap();
        prop_assert_eq!(&a.values, &b.values);
        // u16 cannot exceed 65535; a saturated input must sit exactly at the rail
        if level > 1e8 {
            prop_assert_eq!(a.values[63], u16::MAX);
        }
    }

    #[test]
    fn zero_jitter_is_identity(seed in any::<u64>(), scmos in any::<bool>()) {
        let cam = if scmos { CameraParams::DHYANA_400BSI_V3 } else { CameraParams::EVOLVE_DELTA_512 };
        prop_assert_eq!(jitter_camera(&cam, 0.0, &mut ChaCha8Rng::seed_from_u64(seed)), cam);
    }

    #[test]
    fn error_free_mock_returns_ground_truth(frames in vec(vec(activation(), 0..5), 1..5), seed in any::<u64>()) {
        let gt: Vec<FrameRecord> = frames
            .into_iter()
            .enumerate()
            .map(|(i, activations)| FrameRecord { frame_index: i as u64, activations })
            .collect();
        let preds = mock_predict(&gt, &MockParams::default(), &SamplingSpec::default(), seed).unwrap();
        prop_assert_eq!(preds.len(), gt.len());
        for (p, g) in preds.iter().zip(&gt) {
            prop_assert_eq!(p.frame_index, g.frame_index);
            let acts: Vec<_> = p.detections.iter().map(|d| d.activation).collect();
            prop_assert_eq!(&acts, &g.activations);
            prop_assert!(p.detections.iter().all(|d| (0.8..1.0).contains(&d.score)));
        }
    }

    #[test]
    fn sinkhorn_rows_and_mask((d, values) in cost_matrix(12), mask_bits in vec(any::<bool>(), 144), eps in 1e-4..1.0f64) {
        // keep the diagonal so no row or column is starved
        let mask: Vec<bool> = (0..d * d).map(|k| k % (d + 1) != 0 && mask_bits[k % 144]).collect();
        let c = CostMatrix::new(d, values).unwrap().with_mask(mask.clone()).unwrap();
        let sol = sinkhorn_log(&c, &SinkhornConfig::new(eps, 20)).unwrap();
        for s in sol.plan.row_sums() {
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
        for (k, m) in mask.iter().enumerate() {
            if *m {
                prop_assert_eq!(sol.plan.values[k], 0.0);
            }
        }
        prop_assert!(sol.violations.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-15));
    }

    #[test]
    fn shifting_costs(( d, values) in cost_matrix(8), shift in -50.0..50.0f64, eps in 1e-3..1.0f64) {
        let c = CostMatrix::new(d, values.clone()).unwrap();
        let s = CostMatrix::new(d, values.iter().map(|v| v + shift).collect()).unwrap();
        let cfg = SinkhornConfig { scale: EpsilonScale::Absolute, ..SinkhornConfig::new(eps, 20) };
        let p1 = sinkhorn_log(&c, &cfg).unwrap().plan;
        let p2 = sinkhorn_log(&s, &cfg).unwrap().plan;
        for (a, b) in p1.values.iter().zip(&p2.values) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        let h1 = hungarian(&c).unwrap();
        let h2 = hungarian(&s).unwrap();
        prop_assert!(close(h2.cost, h1.cost + d as f64 * shift, 1e-9));
    }

    #[test]
    fn loss_ignores_target_order(seed in any::<u64>(), d in 4usize..16, rot in 0usize..16) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = d / 2;
        let inst = random_instance(d, n, &mut r);
        let cfg = LossConfig::default();
        let a = ot_loss(&inst.preds, &inst.scores, &inst.targets, &inst.sigma, &cfg).unwrap();
        let mut t = inst.targets.clone();
        t.rotate_left(rot % n);
        t.reverse();
        let b = ot_loss(&inst.preds, &inst.scores, &t, &inst.sigma, &cfg).unwrap();
        prop_assert!(close(a.value, b.value, 1e-9), "{} vs {}", a.value, b.value);
    }

    #[test]
    fn moving_onto_target_does_not_raise_loss(seed in any::<u64>(), d in 4usize..16) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(d, d / 2, &mut r);
        let cfg = LossConfig::default();
        let before = ot_loss(&inst.preds, &inst.scores, &inst.targets, &inst.sigma, &cfg).unwrap();
        // the prediction carrying most mass to a real target, moved onto it
        let (i, j) = (0..d)
            .flat_map(|i| (0..inst.targets.len()).map(move |j| (i, j)))
            .max_by(|a, b| before.plan.get(a.0, a.1).total_cmp(&before.plan.get(b.0, b.1)))
            .unwrap();
        let mut moved = inst.preds.clone();
        moved[i] = inst.targets[j];
        let after = ot_loss(&moved, &inst.scores, &inst.targets, &inst.sigma, &cfg).unwrap();
        prop_assert!(after.value <= before.value + 1e-9 * before.value.abs(), "{} -> {}", before.value, after.value);
    }
}

fn scatter(n: usize) -> impl Strategy<Value = Vec<Activation>> {
    vec(
        (0.0..1200.0f64, 0.0..1200.0f64, -600.0..600.0f64)
            .prop_map(|(x, y, z)| Activation::new(x, y, z, 1000.0)),
        0..n,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn matching_counts_gates_and_symmetry(p in scatter(9), g in scatter(9)) {
        let spec = MatchSpec::default();
        let s = match_frame(&p, &g, &spec);
        prop_assert_eq!(s.tp + s.fn_, g.len());
        prop_assert_eq!(s.tp + s.fp, p.len());
        for pair in &s.pairs {
            prop_assert!(spec.admits(&p[pair.pred], &g[pair.gt]));
        }
        prop_assert_eq!(match_frame(&g, &p, &spec).tp, s.tp);
    }

    #[test]
    fn efficiency_is_one_only_at_perfection(j in 0.0..=1.0f64, lat in 0.0..100.0f64, ax in 0.0..100.0f64) {
        let e = efficiency(j, lat, ax, &EfficiencyWeights::default()).e_3d;
        prop_assert_eq!(e == 1.0, j == 1.0 && lat == 0.0 && ax == 0.0);
        prop_assert_eq!(efficiency(1.0, 0.0, 0.0, &EfficiencyWeights::default()).e_3d, 1.0);
    }

    #[test]
    fn sweep_endpoints(frames in vec((scatter(6), scatter(6)), 1..4), seed in any::<u64>()) {
        let gt: Vec<FrameRecord> = frames
            .iter()
            .enumerate()
            .map(|(i, (_, g))| FrameRecord { frame_index: i as u64, activations: g.clone() })
            .collect();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let preds: Vec<_> = frames
            .iter()
            .enumerate()
            .map(|(i, (p, _))| smlm_core::datasets::PredictionRecord {
                frame_index: i as u64,
                detections: p
                    .iter()
                    .map(|a| smlm_core::datasets::Detection {
                        activation: *a,
                        score: rand::Rng::random_range(&mut r, 0.01..0.99),
                    })
                    .collect(),
            })
            .collect();
        let spec = MatchSpec::default();
        let sweep = threshold_sweep(&preds, &gt, &spec, &EfficiencyWeights::default(), RmseMode::PerFrame, &[0.0, 1.0], Exec::Sequential).unwrap();
        let unfiltered = aggregate(&evaluate(&preds, &gt, &spec, Exec::Sequential), RmseMode::PerFrame);
        prop_assert_eq!(sweep.curve[0].recall, unfiltered.recall);
        prop_assert_eq!(sweep.curve[0].jaccard, unfiltered.jaccard);
        prop_assert!(sweep.curve[1].recall.is_none_or(|r| r == 0.0));
    }

    #[test]
    fn csv_round_trip(rows in vec((0u64..1000, activation(), 0.0..=1.0f64), 0..20), scored in any::<bool>()) {
        let locs: Vec<Localization> = rows
            .into_iter()
            .map(|(frame, activation, s)| Localization { frame, activation, score: scored.then_some(s) })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("locs.csv");
        write_locs(&path, &locs).unwrap();
        let back = read_locs(&path).unwrap();
        prop_assert_eq!(back.rows, locs);
    }

    #[test]
    fn stack_round_trip(w in 1usize..9, h in 1usize..9, n in 1usize..4, seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let g = FrameGeometry::new(w, h, 100.0).unwrap();
        let frames: Vec<AduFrame> = (0..n)
            .map(|_| AduFrame::new(g, (0..w * h).map(|_| rand::Rng::random::<u16>(&mut r)).collect()).unwrap())
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.raw");
        write_stack(&path, CameraSpec::default(), &frames).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let (_, back) = read_stack(&path).unwrap();
        prop_assert_eq!(&back, &frames);
        let again = dir.path().join("t.raw");
        write_stack(&again, CameraSpec::default(), &back).unwrap();
        prop_assert_eq!(std::fs::read(&again).unwrap(), bytes);
    }
}
