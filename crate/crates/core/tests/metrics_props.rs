use npc_core::metrics::{mse, psnr, ssim};
use npc_core::Image;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Window-by-window SSIM with a full 2D Gaussian and centered moments.
fn ssim_reference(a: &Image, b: &Image) -> f64 {
    let (w, h) = (a.width as usize, a.height as usize);
    let mut g = [[0.0f64; 11]; 11];
    let mut total_w = 0.0;
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            total_w += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut acc = 0.0;
    for ch in 0..3 {
        let mut sum = 0.0;
        let mut count = 0;
        for y0 in 0..=h - 11 {
            for x0 in 0..=w - 11 {
                let px = |img: &Image, i: usize, j: usize| img.data[(y0 + i) * w + x0 + j][ch] as f64;
                let (mut mx, mut my) = (0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let k = g[i][j] / total_w;
                        mx += k * px(a, i, j);
                        my += k * px(b, i, j);
                    }
                }
                let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let k = g[i][j] / total_w;
                        let (dx, dy) = (px(a, i, j) - mx, px(b, i, j) - my);
                        vx += k * dx * dx;
                        vy += k * dy * dy;
                        cov += k * dx * dy;
                    }
                }
                sum += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        acc += sum / count as f64;
    }
    acc / 3.0
}

fn random_image(rng: &mut ChaCha8Rng, w: u32, h: u32) -> Image {
    let mut img = Image::new(w, h);
    for p in &mut img.data {
        *p = [rng.gen(), rng.gen(), rng.gen()];
    }
    img
}

/// Smooth image plus noise, so SSIM lands away from zero.
fn perturbed(rng: &mut ChaCha8Rng, base: &Image, amount: f32) -> Image {
    let mut img = base.clone();
    for p in &mut img.data {
        for c in p.iter_mut() {
            *c = (*c + amount * rng.gen_range(-1.0f32..1.0)).clamp(0.0, 1.0);
        }
    }
    img
}

#[test]
fn ssim_matches_windowed_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    for amount in [0.0, 0.05, 0.3, 1.0] {
        let a = random_image(&mut rng, 32, 32);
        let b = perturbed(&mut rng, &a, amount);
        let got = ssim(&a, &b).unwrap();
        let want = ssim_reference(&a, &b);
        assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
    }
    let a = random_image(&mut rng, 13, 27);
    let b = random_image(&mut rng, 13, 27);
    assert!((ssim(&a, &b).unwrap() - ssim_reference(&a, &b)).abs() <= 1e-9);
}

#[test]
fn psnr_matches_scalar_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let a = random_image(&mut rng, 32, 32);
    let b = perturbed(&mut rng, &a, 0.2);
    let mut s = 0.0;
    for (p, q) in a.data.iter().zip(&b.data) {
        for c in 0..3 {
            s += (p[c] as f64 - q[c] as f64).powi(2);
        }
    }
    let m = s / (32.0 * 32.0 * 3.0);
    assert!((mse(&a, &b).unwrap() - m).abs() <= 1e-15);
    assert!((psnr(&a, &b).unwrap() + 10.0 * m.log10()).abs() <= 1e-9);
}

#[test]
fn closed_forms() {
    let zero = Image::filled(16, 16, [0.0; 3]);
    let half = Image::filled(16, 16, [0.5; 3]);
    let one = Image::filled(16, 16, [1.0; 3]);
    assert!((psnr(&zero, &half).unwrap() - 6.020_599_913_279_624).abs() < 1e-6);
    assert_eq!(psnr(&half, &half).unwrap(), f64::INFINITY);
    let c1 = 1e-4;
    assert!((ssim(&zero, &one).unwrap() - c1 / (1.0 + c1)).abs() < 1e-6);
    assert_eq!(ssim(&half, &half).unwrap(), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_are_symmetric(seed in any::<u64>(), w in 11u32..24, h in 11u32..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_image(&mut rng, w, h);
        let b = random_image(&mut rng, w, h);
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        let (s1, s2) = (ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        prop_assert!((s1 - s2).abs() < 1e-12);
        prop_assert!(s1 <= 1.0 + 1e-12);
    }
}
