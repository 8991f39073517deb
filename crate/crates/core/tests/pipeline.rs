//! End-to-end behaviour on a tiny synthetic capture.

use dynsync::eval::{evaluate, spatiotemporal_image, EvalConfig};
use dynsync::field::{checkpoint, FieldModel, FieldRepr, ModelConfig, ModelKind};
use dynsync::geom::Vec3;
use dynsync::optim::{
    optimize_test_offset, rgb_loss, temporal_variance_weights, train, CalibrationConfig, LossSettings, RayRecord,
    TrainConfig,
};
use dynsync::params::Grads;
use dynsync::render::RenderSettings;
use dynsync::scene::{dataset, synthesize, RigSpec, SceneSpec, SynthConfig, VideoSet};
use dynsync::tape::Tape;
use dynsync::{Error, Exec};
use image::RgbImage;
use std::sync::OnceLock;

fn tiny_video() -> &'static VideoSet {
    static V: OnceLock<VideoSet> = OnceLock::new();
    V.get_or_init(|| {
        let rig = RigSpec {
            n_cameras: 5,
            width: 16,
            height: 16,
            ..Default::default()
        };
        let data = SynthConfig {
            n_frames: 12,
            margin_frames: 6,
            sigma_frames: 1.0,
            ..Default::default()
        };
        synthesize(&SceneSpec::default(), &rig, &data, &Exec::sequential()).unwrap()
    })
}

fn tiny_config(kind: ModelKind) -> TrainConfig {
    TrainConfig {
        model: ModelConfig {
            kind,
            spatial_res: 6,
            time_res: 6,
            feature_dim: 4,
            decoder_hidden: 8,
            latent_res: 6,
            latent_dim: 4,
            time_hidden: 8,
            n_freqs: 4,
            ..Default::default()
        },
        iterations: 12,
        batch_rays: 96,
        chunk_rays: 32,
        n_samples: 8,
        offset_warmup_iters: 5,
        eval_every: 4,
        ..Default::default()
    }
}

#[test]
fn dataset_round_trips_through_disk() {
    let v = tiny_video();
    let dir = tempfile::tempdir().unwrap();
    dataset::write_dataset(v, dir.path()).unwrap();
    let back = dataset::read_dataset(dir.path()).unwrap();
    assert_eq!(back.frames, v.frames);
    assert_eq!(back.offsets_gt, v.offsets_gt);
    for (a, b) in back.cameras.iter().zip(&v.cameras) {
        assert_eq!(a.id, b.id);
        assert!((a.rotation - b.rotation).abs().max() < 1e-12);
        assert!((a.translation - b.translation).norm() < 1e-12);
    }
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(dataset::read_dataset(dir.path()), Err(Error::Dataset { .. })));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    for kind in ModelKind::ALL {
        let out = train(tiny_video(), &tiny_config(kind), &Exec::sequential(), |_| {}).unwrap();
        let bytes = checkpoint::encode(&out.model);
        let back = checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, out.model);
        assert_eq!(checkpoint::encode(&back), bytes);
        assert!(checkpoint::decode(&bytes[..bytes.len() - 1]).is_err());
    }
}

#[test]
fn training_is_independent_of_worker_count() {
    for kind in ModelKind::ALL {
        let cfg = tiny_config(kind);
        let a = train(tiny_video(), &cfg, &Exec::with_threads(1), |_| {}).unwrap();
        let b = train(tiny_video(), &cfg, &Exec::with_threads(4), |_| {}).unwrap();
        assert_eq!(checkpoint::encode(&a.model), checkpoint::encode(&b.model), "{kind}");
        assert_eq!(a.metrics, b.metrics);
    }
}

#[test]
fn offsets_stay_zero_through_warm_up() {
    let cfg = tiny_config(ModelKind::PlaneHybrid);
    let out = train(tiny_video(), &cfg, &Exec::sequential(), |_| {}).unwrap();
    assert_eq!(out.history.len(), cfg.iterations);
    for (it, d) in out.history.iterations.iter().zip(&out.history.deltas) {
        if *it < cfg.offset_warmup_iters {
            assert!(d.iter().all(|v| *v == 0.0), "iteration {it}: {d:?}");
        }
    }
    assert!(out.model.offsets.deltas.iter().any(|v| *v != 0.0));
    assert!(out.history.iterations.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(out.metrics.len(), 3);
}

#[test]
fn disabled_offsets_never_move() {
    let cfg = TrainConfig {
        learn_offsets: false,
        ..tiny_config(ModelKind::Latent)
    };
    let out = train(tiny_video(), &cfg, &Exec::sequential(), |_| {}).unwrap();
    assert!(out.model.offsets.frozen);
    assert!(out.history.deltas.iter().flatten().all(|v| *v == 0.0));
}

#[test]
fn divergence_aborts_with_a_numerical_error() {
    let cfg = TrainConfig {
        lr_field: Some(1e300),
        ..tiny_config(ModelKind::PlaneExplicit)
    };
    let err = train(tiny_video(), &cfg, &Exec::sequential(), |_| {}).err().unwrap();
    assert!(err.is_numerical(), "{err}");
}

#[test]
fn every_reachable_tensor_gets_a_gradient() {
    for kind in ModelKind::ALL {
        let cfg = tiny_config(kind);
        let v = tiny_video();
        let model = FieldModel::new(cfg.model.clone(), v.bounds, v.time_map(), v.train_indices().len()).unwrap();
        let cam = &v.cameras[0];
        let batch: Vec<RayRecord> = (0..64)
            .map(|i| {
                let px = [(i % 8) as f64 * 2.0 + 0.5, (i / 8) as f64 * 2.0 + 0.5];
                RayRecord {
                    slot: Some(i % 4),
                    ray: dynsync::render::generate_ray(cam, px, &model.bounds),
                    t: 0.1 * (i % 5) as f64 - 0.2,
                    target: [0.2, 0.4, 0.6],
                    stream: i as u64,
                }
            })
            .collect();
        let mut grads = Grads::zeros_like(&model.params, 4);
        let settings = LossSettings {
            n_samples: 8,
            jitter: false,
            background: [1.0; 3],
            seed: 0,
            iter: 0,
        };
        dynsync::optim::rgb_loss_sum(&model, &[0.0; 4], &batch, &settings, 1.0, &mut Tape::new(), Some(&mut grads))
            .unwrap();
        for (id, t) in model.params.iter() {
            assert!(grads.tensors[id.0].iter().any(|g| *g != 0.0), "{kind}: no gradient for {}", t.name);
        }
        assert!(grads.offsets.iter().all(|g| *g != 0.0), "{kind}: {:?}", grads.offsets);
    }
}

#[test]
fn loss_of_constant_gray_prediction() {
    let v = tiny_video();
    let model = FieldModel::new(ModelConfig::default(), v.bounds, v.time_map(), 1).unwrap();
    let batch = vec![
        RayRecord {
            slot: None,
            ray: None,
            t: 0.0,
            target: [0.6; 3],
            stream: 0,
        };
        5
    ];
    let settings = LossSettings {
        n_samples: 4,
        jitter: false,
        background: [0.5; 3],
        seed: 0,
        iter: 0,
    };
    assert!((rgb_loss(&model, &batch, &settings).unwrap() - 0.03).abs() < 1e-12);
    assert!(rgb_loss(&model, &[], &settings).is_err());
}

#[test]
fn variance_weights_follow_motion() {
    let mut v = tiny_video().clone();
    // Camera 0: static except one flashing pixel.
    for (f, img) in v.frames[0].iter_mut().enumerate() {
        *img = RgbImage::from_pixel(16, 16, image::Rgb([90, 90, 90]));
        let c = if f % 2 == 0 { 255 } else { 0 };
        img.put_pixel(3, 7, image::Rgb([c, c, c]));
    }
    let w = temporal_variance_weights(&v, 0, 0.02).unwrap();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    let flash = 7 * 16 + 3;
    assert!(w.iter().enumerate().all(|(i, x)| i == flash || *x < w[flash]));
    let others: Vec<f64> = w.iter().enumerate().filter(|(i, _)| *i != flash).map(|(_, x)| *x).collect();
    assert!(others.iter().all(|x| (x - others[0]).abs() < 1e-15));
    for c in 1..v.cameras.len() {
        let w = temporal_variance_weights(&v, c, 0.02).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn test_offset_calibration_leaves_model_untouched() {
    let v = tiny_video();
    let out = train(v, &tiny_config(ModelKind::PlaneHybrid), &Exec::sequential(), |_| {}).unwrap();
    let before = out.model.params.checksum();
    let eval = EvalConfig {
        frame_stride: 3,
        n_samples: 8,
        ..Default::default()
    };
    let test = v.test_indices()[0];
    let none = CalibrationConfig {
        iterations: 0,
        ..Default::default()
    };
    let cal = optimize_test_offset(&out.model, v, test, &none, &eval, &Exec::sequential()).unwrap();
    assert_eq!(cal.delta, 0.0);
    let cfg = CalibrationConfig {
        iterations: 20,
        batch_rays: 64,
        n_samples: 8,
        ..Default::default()
    };
    let cal = optimize_test_offset(&out.model, v, test, &cfg, &eval, &Exec::sequential()).unwrap();
    assert_eq!(out.model.params.checksum(), before);
    assert!(cal.mse_optimized.min(cal.mse_zero) <= cal.mse_zero);
    let with = evaluate(&out.model, v, &[cal.delta], &eval, "x", &Exec::sequential()).unwrap();
    let without = evaluate(&out.model, v, &[], &eval, "x", &Exec::sequential()).unwrap();
    assert!(with.mean_psnr.get() >= without.mean_psnr.get());
}

#[test]
fn spatiotemporal_image_of_static_field_has_equal_columns() {
    let v = tiny_video();
    let cfg = tiny_config(ModelKind::PlaneHybrid);
    let mut model = FieldModel::new(cfg.model, v.bounds, v.time_map(), 4).unwrap();
    let FieldRepr::Planes(p) = model.repr.clone() else { unreachable!() };
    for id in &p.planes[3..] {
        model.params.data_mut(*id).fill(1.0);
    }
    let img = spatiotemporal_image(&model, &v.cameras[0], 8, 0.0, &RenderSettings::new(8, [1.0; 3]), &Exec::sequential())
        .unwrap();
    assert_eq!(img.width, v.n_frames);
    assert_eq!(img.height, 16);
    for x in 1..img.width {
        for y in 0..img.height {
            assert_eq!(img.pixel(x, y), img.pixel(0, y));
        }
    }
    assert!(spatiotemporal_image(&model, &v.cameras[0], 16, 0.0, &RenderSettings::new(8, [1.0; 3]), &Exec::sequential()).is_err());
}

#[test]
fn direction_is_ignored_by_default_and_zero_offsets_match_baseline() {
    let v = tiny_video();
    let model = FieldModel::new(tiny_config(ModelKind::PlaneHybrid).model, v.bounds, v.time_map(), 2).unwrap();
    let x = Vec3::new(0.1, -0.2, 0.3);
    let a = model.eval_field(&x, &Vec3::new(0.0, 0.0, 1.0), 0.25).unwrap();
    let b = model.eval_field(&x, &Vec3::new(1.0, 0.0, 0.0), 0.25).unwrap();
    assert_eq!(a, b);
    let shifted = model.offsets.shift_time(0.25, 1).unwrap();
    assert_eq!(model.eval_field(&x, &Vec3::z(), shifted).unwrap(), a);
}
