//! Reverse-mode gradients of the full render loss against central differences.

use dynsync::field::{FieldModel, ModelConfig, ModelKind, TimeMap};
use dynsync::geom::{Aabb, Vec3};
use dynsync::optim::{rgb_loss_sum, LossSettings, RayRecord};
use dynsync::params::{Grads, TensorId};
use dynsync::render::Ray;
use dynsync::tape::Tape;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;
const TOL: f64 = 1e-4;

struct Case {
    model: FieldModel,
    batch: Vec<RayRecord>,
    settings: LossSettings,
}

fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = ModelKind::ALL[seed as usize % 3];
    let cfg = ModelConfig {
        kind,
        spatial_res: 4,
        time_res: rng.random_range(3..6),
        feature_dim: 4,
        decoder_hidden: 6,
        latent_res: 4,
        latent_dim: 4,
        time_hidden: 5,
        n_freqs: rng.random_range(1..4),
        direction: rng.random_bool(0.5),
        init_seed: seed,
    };
    let bounds = Aabb::cube(1.0);
    let n_cams = 3;
    let mut model = FieldModel::new(cfg, bounds, TimeMap::new(20, 30.0), n_cams).unwrap();
    for d in &mut model.offsets.deltas {
        *d = rng.random_range(-0.2..0.2);
    }
    // Perturb every parameter so no gradient is structurally tiny.
    let ids: Vec<TensorId> = model.params.ids().collect();
    for id in ids {
        for v in model.params.data_mut(id) {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let batch = (0..3)
        .map(|i| {
            let origin = Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), -3.0);
            let dir = Vec3::new(rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15), 1.0).normalize();
            let (near, far) = bounds.intersect(&origin, &dir).unwrap();
            RayRecord {
                slot: Some(rng.random_range(0..n_cams)),
                ray: Some(Ray { origin, dir, near, far }),
                t: rng.random_range(-0.7..0.7),
                target: [rng.random(), rng.random(), rng.random()],
                stream: i,
            }
        })
        .collect();
    Case {
        model,
        batch,
        settings: LossSettings {
            n_samples: 6,
            jitter: true,
            background: [1.0, 1.0, 1.0],
            seed,
            iter: 0,
        },
    }
}

fn loss(c: &Case, m: &FieldModel) -> f64 {
    let mut tape = Tape::inference();
    rgb_loss_sum(m, &m.offsets.deltas, &c.batch, &c.settings, 0.0, &mut tape, None).unwrap()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for seed in 0..24u64 {
        let c = random_case(seed);
        let mut grads = Grads::zeros_like(&c.model.params, c.model.offsets.len());
        let mut tape = Tape::new();
        rgb_loss_sum(&c.model, &c.model.offsets.deltas, &c.batch, &c.settings, 1.0, &mut tape, Some(&mut grads)).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        for (id, t) in c.model.params.iter() {
            // The largest entries plus a few random ones.
            let g = &grads.tensors[id.0];
            let mut idx: Vec<usize> = (0..g.len()).collect();
            idx.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()));
            idx.truncate(4);
            for _ in 0..3 {
                idx.push(rng.random_range(0..g.len()));
            }
            for i in idx {
                let mut plus = c.model.clone();
                plus.params.data_mut(id)[i] += H;
                let mut minus = c.model.clone();
                minus.params.data_mut(id)[i] -= H;
                let fd = (loss(&c, &plus) - loss(&c, &minus)) / (2.0 * H);
                let e = rel_err(g[i], fd);
                assert!(e < TOL, "seed {seed} {}[{i}]: analytic {} fd {fd}", t.name, g[i]);
                worst = worst.max(e);
                checked += 1;
            }
        }
        for k in 0..c.model.offsets.len() {
            let mut plus = c.model.clone();
            plus.offsets.deltas[k] += H;
            let mut minus = c.model.clone();
            minus.offsets.deltas[k] -= H;
            let fd = (loss(&c, &plus) - loss(&c, &minus)) / (2.0 * H);
            let e = rel_err(grads.offsets[k], fd);
            assert!(e < TOL, "seed {seed} offset {k}: analytic {} fd {fd}", grads.offsets[k]);
            checked += 1;
        }
    }
    eprintln!("checked {checked} entries, worst relative error {worst:.2e}");
}

#[test]
fn offset_gradient_vanishes_for_unused_camera() {
    let mut c = random_case(3);
    for r in &mut c.batch {
        r.slot = Some(0);
    }
    let mut grads = Grads::zeros_like(&c.model.params, c.model.offsets.len());
    let mut tape = Tape::new();
    rgb_loss_sum(&c.model, &c.model.offsets.deltas, &c.batch, &c.settings, 1.0, &mut tape, Some(&mut grads)).unwrap();
    assert_eq!(grads.offsets[1], 0.0);
    assert_eq!(grads.offsets[2], 0.0);
}
