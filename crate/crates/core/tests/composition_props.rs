use std::time::Instant;

use npc_core::composition::{
    alpha_direct, alpha_weights, compose, composition_backward, naive_avg3, naive_closest,
};
use npc_core::descriptor::{finalize_descriptor, Sample, SampleBucket, SampleOrigin};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straight transcription of the weight formula, no shifting.
fn oracle_alpha(w: &[f64], d: &[f64], h: &[f64]) -> Vec<f64> {
    let n = w.len() as f64;
    let mu: f64 = w.iter().zip(d).map(|(a, b)| a * b).sum::<f64>() / n;
    let raw: Vec<f64> = (0..w.len())
        .map(|i| (1.0 - h[i]) * (-(w[i] * d[i] - mu).powi(2)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|r| r / s).collect()
}

fn oracle_color(alpha: &[f64], colors: &[[f64; 3]], gamma: [f64; 3]) -> [f64; 3] {
    let mut out = gamma;
    for (a, c) in alpha.iter().zip(colors) {
        for ch in 0..3 {
            out[ch] += a * c[ch];
        }
    }
    out
}

struct Instance {
    w: Vec<f64>,
    d: Vec<f64>,
    h: Vec<f64>,
    colors: Vec<[f64; 3]>,
    gamma: [f64; 3],
}

/// Random instance with at least one fully certain entry. `wmax` bounds the
/// raw weights, which bounds the exponents.
fn instance(rng: &mut ChaCha8Rng, n: usize, wmax: f64) -> Instance {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-wmax..wmax)).collect();
    let d: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.5)).collect();
    let mut h: Vec<f64> = (0..n)
        .map(|_| match rng.gen_range(0..4) {
            0 => 1.0,
            1 => 0.0,
            _ => rng.gen_range(0.0..1.0),
        })
        .collect();
    let certain = rng.gen_range(0..n);
    h[certain] = 0.0;
    let colors = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    let gamma = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
    Instance { w, d, h, colors, gamma }
}

#[test]
fn simplex_on_ten_thousand_fuzzed_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=64);
        let inst = instance(&mut rng, n, 50.0);
        let (alpha, _) = alpha_weights(&inst.w, &inst.d, &inst.h).unwrap();
        let sum: f64 = alpha.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-9, "sum {sum}");
        assert!(alpha.iter().all(|&a| a >= 0.0));
        for (a, h) in alpha.iter().zip(&inst.h) {
            if *h >= 1.0 {
                assert_eq!(*a, 0.0);
            }
        }
    }
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn matches_independent_transcription() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=32);
        // |w d − μ| stays below ~6, so no term underflows
        let inst = instance(&mut rng, n, 2.0);
        let (alpha, mu) = alpha_weights(&inst.w, &inst.d, &inst.h).unwrap();
        let expected = oracle_alpha(&inst.w, &inst.d, &inst.h);
        let mu_ref = inst.w.iter().zip(&inst.d).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        assert!((mu - mu_ref).abs() <= 1e-12);
        for (a, e) in alpha.iter().zip(&expected) {
            assert!((a - e).abs() <= 1e-10, "{a} vs {e}");
        }
        let flat: Vec<f64> = inst.colors.concat();
        let c = compose(&alpha, &flat, inst.gamma);
        let c_ref = oracle_color(&expected, &inst.colors, inst.gamma);
        for ch in 0..3 {
            assert!((c[ch] - c_ref[ch]).abs() <= 1e-10);
        }
    }
}

#[test]
fn backward_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // fourth-order stencil: truncation and rounding both stay near 1e-12
    let step = 1e-3;
    for _ in 0..100 {
        let inst = instance(&mut rng, 8, 2.0);
        let flat: Vec<f64> = inst.colors.concat();
        let g: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let objective = |w: &[f64]| {
            let (a, _) = alpha_weights(w, &inst.d, &inst.h).unwrap();
            let c = compose(&a, &flat, inst.gamma);
            g[0] * c[0] + g[1] * c[1] + g[2] * c[2]
        };
        let (grad_w, grad_gamma) = composition_backward(&inst.w, &inst.d, &inst.h, &flat, g).unwrap();
        assert_eq!(grad_gamma, g);
        for i in 0..8 {
            let at = |k: f64| {
                let mut w = inst.w.clone();
                w[i] += k * step;
                objective(&w)
            };
            let fd = (at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * step);
            let rel = (fd - grad_w[i]).abs() / fd.abs().max(grad_w[i].abs()).max(1e-6);
            assert!(rel <= 1e-6, "entry {i}: analytic {} fd {fd}", grad_w[i]);
        }
    }
}

#[test]
fn backward_is_linear_in_the_cotangent() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let inst = instance(&mut rng, 12, 3.0);
        let flat: Vec<f64> = inst.colors.concat();
        let g = [0.3, -0.7, 0.2];
        let lambda = rng.gen_range(-4.0..4.0);
        let (a, _) = composition_backward(&inst.w, &inst.d, &inst.h, &flat, g).unwrap();
        let (b, _) = composition_backward(&inst.w, &inst.d, &inst.h, &flat, g.map(|v| v * lambda)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x * lambda - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}

proptest! {
    #[test]
    fn identical_colors_give_zero_weight_gradient(
        w in prop::collection::vec(-5.0f64..5.0, 1..20),
        k in prop::array::uniform3(0.0f64..1.0),
        g in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let n = w.len();
        let d: Vec<f64> = (0..n).map(|i| 0.1 + 0.05 * i as f64).collect();
        let h = vec![0.0; n];
        let colors: Vec<f64> = (0..n).flat_map(|_| k).collect();
        let (grad_w, _) = composition_backward(&w, &d, &h, &colors, g).unwrap();
        prop_assert!(grad_w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_colors_shift_by_gamma(
        w in prop::collection::vec(-5.0f64..5.0, 1..20),
        k in prop::array::uniform3(0.0f64..1.0),
        gamma in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let n = w.len();
        let d = vec![0.5; n];
        let h = vec![0.0; n];
        let (alpha, _) = alpha_weights(&w, &d, &h).unwrap();
        let colors: Vec<f64> = (0..n).flat_map(|_| k).collect();
        let c = compose(&alpha, &colors, gamma);
        for ch in 0..3 {
            prop_assert!((c[ch] - gamma[ch] - k[ch]).abs() < 1e-12);
        }
    }

    #[test]
    fn direct_softmax_respects_mask(
        w in prop::collection::vec(-30.0f64..30.0, 2..20),
        masked in prop::collection::vec(any::<bool>(), 20),
    ) {
        let n = w.len();
        let mut h: Vec<f64> = (0..n).map(|i| if masked[i] { 1.0 } else { 0.3 }).collect();
        h[0] = 0.0;
        let alpha = alpha_direct(&w, &h).unwrap();
        prop_assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..n {
            if h[i] >= 1.0 {
                prop_assert_eq!(alpha[i], 0.0);
            }
        }
    }

    #[test]
    fn scaling_confidences_uniformly_keeps_weights(
        w in prop::collection::vec(-2.0f64..2.0, 2..16),
        s in 0.05f64..1.0,
    ) {
        let n = w.len();
        let d: Vec<f64> = (0..n).map(|i| 0.2 + 0.1 * i as f64).collect();
        let h0 = vec![0.0; n];
        let h1 = vec![1.0 - s; n];
        let (a0, _) = alpha_weights(&w, &d, &h0).unwrap();
        let (a1, _) = alpha_weights(&w, &d, &h1).unwrap();
        for (x, y) in a0.iter().zip(&a1) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}

fn bucket(zs: &[f64]) -> SampleBucket {
    let mut b = SampleBucket::default();
    for (i, &z) in zs.iter().enumerate() {
        b.push(Sample {
            z,
            color: [i as f64 / 10.0, 0.0, 1.0],
            uncertainty: 0.25,
            origin: SampleOrigin { view: i as u32, x: 0, y: 0 },
        });
    }
    b
}

#[test]
fn naive_modes_read_the_closest_samples() {
    let d = finalize_descriptor(&bucket(&[3.0, 1.0, 2.0, 4.0]), 4, 1.0).unwrap();
    assert_eq!(naive_closest(d.arrays(), [9.0; 3]), [0.1, 0.0, 1.0]);
    let avg = naive_avg3(d.arrays(), [9.0; 3]);
    assert!((avg[0] - 0.1).abs() < 1e-15);
    let empty = finalize_descriptor(&SampleBucket::default(), 4, 1.0).unwrap();
    assert_eq!(naive_closest(empty.arrays(), [0.2, 0.3, 0.4]), [0.2, 0.3, 0.4]);
    assert_eq!(naive_avg3(empty.arrays(), [0.2, 0.3, 0.4]), [0.2, 0.3, 0.4]);
}
