use std::time::Instant;

use npc_core::descriptor::{DescriptorGrid, DescriptorRef};
use npc_core::mlp::{init_params, Architecture, Gradients, MlpParams};
use npc_core::train::{batch_gradient, l1_loss, pixel_gradient, BatchItem, SerialExecutor, TrainingView};
use npc_core::{AblationFlags, Camera, CompositionConfig, Image, MlpModel, PixelCoord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

struct Desc {
    colors: Vec<f64>,
    depths: Vec<f64>,
    unc: Vec<f64>,
    valid: usize,
}

impl Desc {
    fn random(rng: &mut ChaCha8Rng, n: usize) -> Self {
        let valid = rng.gen_range(1..=n);
        let mut colors = vec![0.0; 3 * n];
        let mut depths = vec![0.0; n];
        let mut unc = vec![1.0; n];
        let mut z = rng.gen_range(0.2..0.5);
        for i in 0..valid {
            z += rng.gen_range(0.0..0.1);
            depths[i] = z;
            unc[i] = if i == 0 { 0.0 } else { rng.gen_range(0.0..1.0) };
            for c in 0..3 {
                colors[3 * i + c] = rng.gen();
            }
        }
        Self { colors, depths, unc, valid }
    }

    fn arrays(&self) -> DescriptorRef<'_> {
        DescriptorRef {
            colors: &self.colors,
            depths: &self.depths,
            uncertainties: &self.unc,
            valid_count: self.valid,
        }
    }
}

fn camera() -> Camera {
    Camera::new(16, 16, 14.0, 14.0, 7.5, 7.5, [0.1, -0.2, 0.05], [0.3, -0.1, 0.4]).unwrap()
}

fn small_config(flags: AblationFlags) -> CompositionConfig {
    CompositionConfig {
        n: 8,
        k: 4,
        freq_l: 2,
        hidden: 32,
        layers: 3,
        d_scale: 4.0,
        trans_norm: 1.5,
        flags,
        ..CompositionConfig::default()
    }
}

/// Replaces the near-zero output layer so every path carries signal.
fn randomize(params: &mut MlpParams, rng: &mut ChaCha8Rng) {
    for v in &mut params.data {
        *v = rng.gen_range(-0.4..0.4);
    }
}

fn loss_at(model: &MlpModel, desc: DescriptorRef<'_>, px: PixelCoord, cam: &Camera, gt: [f64; 3]) -> f64 {
    let out = model.predict(desc, px, cam, None).unwrap();
    l1_loss(out.color, gt).0
}

/// Full chain gradient against central differences over every parameter.
fn check_chain(flags: AblationFlags, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cam = camera();
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let mut model = MlpModel::new(small_config(flags), rng.gen()).unwrap();
        randomize(&mut model.params, &mut rng);
        let desc = Desc::random(&mut rng, 8);
        let px = PixelCoord::new(rng.gen_range(0.0..15.0), rng.gen_range(0.0..15.0));
        // keep the target well away from the L1 kink
        let pred = model.predict(desc.arrays(), px, &cam, None).unwrap().color;
        let gt = pred.map(|p| if p > 0.5 { p - 0.3 } else { p + 0.3 });
        let (_, grads) = pixel_gradient(&model, desc.arrays(), px, &cam, None, gt).unwrap();
        for j in 0..model.params.data.len() {
            let orig = model.params.data[j];
            model.params.data[j] = orig + STEP;
            let lp = loss_at(&model, desc.arrays(), px, &cam, gt);
            model.params.data[j] = orig - STEP;
            let lm = loss_at(&model, desc.arrays(), px, &cam, gt);
            model.params.data[j] = orig;
            let fd = (lp - lm) / (2.0 * STEP);
            worst = worst.max(rel_err(grads.data[j], fd));
        }
    }
    worst
}

#[test]
fn full_chain_matches_finite_differences() {
    let start = Instant::now();
    let worst = check_chain(AblationFlags::default(), 10);
    assert!(worst <= 1e-4, "max relative error {worst}");
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn ablation_chains_match_finite_differences() {
    for (i, flags) in [
        AblationFlags { direct_mlp: true, ..Default::default() },
        AblationFlags { no_gamma: true, ..Default::default() },
        AblationFlags { no_entropy: true, no_spatial: true, ..Default::default() },
    ]
    .into_iter()
    .enumerate()
    {
        let worst = check_chain(flags, 20 + i as u64);
        assert!(worst <= 1e-4, "{flags:?}: max relative error {worst}");
    }
}

#[test]
fn mlp_backward_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for _ in 0..10 {
        let arch = Architecture {
            input_dim: rng.gen_range(1..8),
            hidden: rng.gen_range(1..10),
            layers: rng.gen_range(1..5),
            n_samples: rng.gen_range(1..5),
        };
        let mut p = init_params(arch, rng.gen()).unwrap();
        randomize(&mut p, &mut rng);
        let x: Vec<f64> = (0..arch.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gw: Vec<f64> = (0..arch.n_samples).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gg = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let objective = |p: &MlpParams| {
            let o = p.forward(&x).unwrap();
            o.w.iter().zip(&gw).map(|(a, b)| a * b).sum::<f64>() + (0..3).map(|c| o.gamma[c] * gg[c]).sum::<f64>()
        };
        let out = p.forward(&x).unwrap();
        let grads = p.backward(&out.cache, &gw, gg).unwrap();
        for j in 0..p.data.len() {
            let orig = p.data[j];
            p.data[j] = orig + STEP;
            let fp = objective(&p);
            p.data[j] = orig - STEP;
            let fm = objective(&p);
            p.data[j] = orig;
            let fd = (fp - fm) / (2.0 * STEP);
            assert!(rel_err(grads.data[j], fd) <= 1e-4, "{arch:?} param {j}: {} vs {fd}", grads.data[j]);
        }
        let doubled = p.backward(&out.cache, &gw.iter().map(|v| 2.0 * v).collect::<Vec<_>>(), gg.map(|v| 2.0 * v)).unwrap();
        for (a, b) in grads.data.iter().zip(&doubled.data) {
            assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let zero = p.backward(&out.cache, &vec![0.0; arch.n_samples], [0.0; 3]).unwrap();
        assert_eq!(zero, Gradients::zeros_like(&p));
    }
}

/// A grid whose every pixel holds a random descriptor.
fn random_grid(rng: &mut ChaCha8Rng, cam: &Camera, n: usize) -> DescriptorGrid {
    let mut g = DescriptorGrid::new(cam.width, cam.height, n);
    for p in 0..g.pixel_count() {
        let d = Desc::random(rng, n);
        g.colors[3 * n * p..3 * n * (p + 1)].copy_from_slice(&d.colors);
        g.depths[n * p..n * (p + 1)].copy_from_slice(&d.depths);
        g.uncertainties[n * p..n * (p + 1)].copy_from_slice(&d.unc);
        g.valid[p] = d.valid as u32;
    }
    g
}

#[test]
fn batched_gradient_equals_mean_of_per_pixel_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let cam = camera();
    let mut model = MlpModel::new(small_config(AblationFlags::default()), 5).unwrap();
    randomize(&mut model.params, &mut rng);
    let mut image = Image::new(cam.width, cam.height);
    for px in &mut image.data {
        *px = [rng.gen(), rng.gen(), rng.gen()];
    }
    let grid = random_grid(&mut rng, &cam, 8);
    let views = vec![TrainingView { id: 0, camera: cam.clone(), image, time: 0, grid: Some(grid) }];
    // more than one chunk, last one partial
    let items: Vec<BatchItem> = (0..600).map(|_| BatchItem { view: 0, pixel: rng.gen_range(0..256) }).collect();
    let (loss, grads) = batch_gradient(&model, &views, &items, &SerialExecutor).unwrap();

    let mut ref_loss = 0.0;
    let mut ref_grads = Gradients::zeros_like(&model.params);
    let v = &views[0];
    for it in &items {
        let g = v.grid.as_ref().unwrap();
        let px = PixelCoord::new((it.pixel % 16) as f64, (it.pixel / 16) as f64);
        let c = v.image.data[it.pixel];
        let gt = [c[0] as f64, c[1] as f64, c[2] as f64];
        let (l, gr) = pixel_gradient(&model, g.get(it.pixel), px, &v.camera, None, gt).unwrap();
        ref_loss += l;
        ref_grads.add_assign(&gr);
    }
    ref_loss /= items.len() as f64;
    ref_grads.scale(1.0 / items.len() as f64);
    assert!((loss - ref_loss).abs() <= 1e-10);
    for (a, b) in grads.data.iter().zip(&ref_grads.data) {
        assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
    }
}
