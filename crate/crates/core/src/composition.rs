//! Color composition from a pixel's sample arrays.
//!
//! The network emits one raw value `w_i` per sample plus a color correction
//! `γ`. Blending weights are
//!
//! ```text
//! α_i = (1 − H_i)·exp(−(w_i·d_i − μ)²) / Σ_j (1 − H_j)·exp(−(w_j·d_j − μ)²),
//! μ   = (1/N)·Σ_j w_j·d_j
//! ```
//!
//! and the output color is `γ + Σ_i α_i·c_i`. When no entry carries any
//! confidence the weights collapse to zero and the color is `γ` alone.

use alloc::vec;
use alloc::vec::Vec;

use crate::descriptor::DescriptorRef;
use crate::error::{Error, Result};
use crate::math;

/// Denominator floor below which all weights are set to zero.
pub const EPS_DEN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionOutput {
    pub w: Vec<f64>,
    pub alpha: Vec<f64>,
    pub gamma: [f64; 3],
    pub color: [f64; 3],
    pub mu: f64,
}

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

/// Blending weights and the mean product `μ`. Writes `α` into `alpha` and
/// returns `μ`. The exponentials are shifted by their maximum over the
/// entries with nonzero confidence before evaluation.
pub fn alpha_weights_into(w: &[f64], d: &[f64], h: &[f64], alpha: &mut [f64]) -> f64 {
    let n = w.len();
    let mu = w.iter().zip(d).map(|(wi, di)| wi * di).sum::<f64>() / n as f64;
    let mut shift = f64::NEG_INFINITY;
    for i in 0..n {
        if 1.0 - h[i] > 0.0 {
            let r = w[i] * d[i] - mu;
            shift = shift.max(-r * r);
        }
    }
    if shift == f64::NEG_INFINITY {
        alpha.fill(0.0);
        return mu;
    }
    let mut den = 0.0;
    for i in 0..n {
        let conf = 1.0 - h[i];
        alpha[i] = if conf > 0.0 {
            let r = w[i] * d[i] - mu;
            conf * math::exp(-r * r - shift)
        } else {
            0.0
        };
        den += alpha[i];
    }
    if den < EPS_DEN {
        alpha.fill(0.0);
    } else {
        for a in alpha.iter_mut() {
            *a /= den;
        }
    }
    mu
}

/// Blending weights for raw outputs `w`, normalized depths `d` and
/// uncertainties `h`.
pub fn alpha_weights(w: &[f64], d: &[f64], h: &[f64]) -> Result<(Vec<f64>, f64)> {
    check_len("alpha_weights depths", w.len(), d.len())?;
    check_len("alpha_weights uncertainties", w.len(), h.len())?;
    if w.is_empty() {
        return Err(Error::InvalidArgument("empty sample array"));
    }
    if w.iter().chain(d).chain(h).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("alpha_weights inputs"));
    }
    let mut alpha = vec![0.0; w.len()];
    let mu = alpha_weights_into(w, d, h, &mut alpha);
    Ok((alpha, mu))
}

/// `γ + Σ α_i c_i`; `colors` is `N×3` row-major.
pub fn compose(alpha: &[f64], colors: &[f64], gamma: [f64; 3]) -> [f64; 3] {
    let mut out = gamma;
    for (i, a) in alpha.iter().enumerate() {
        for ch in 0..3 {
            out[ch] += a * colors[3 * i + ch];
        }
    }
    out
}

/// Reverse mode through [`alpha_weights`] and [`compose`].
///
/// Given `∂L/∂c̄`, writes `∂L/∂w` into `grad_w` and returns `∂L/∂γ`. The
/// coupling through `μ` and through the shared denominator are included.
pub fn composition_backward_into(
    w: &[f64],
    d: &[f64],
    h: &[f64],
    colors: &[f64],
    grad_color: [f64; 3],
    alpha: &mut [f64],
    grad_w: &mut [f64],
) -> [f64; 3] {
    let n = w.len();
    let mu = alpha_weights_into(w, d, h, alpha);
    if alpha.iter().all(|&a| a == 0.0) {
        grad_w.fill(0.0);
        return grad_color;
    }
    // g_i = ∂L/∂α_i, then ∂L/∂e_i = α_i Σ_j α_j (g_i − g_j) for e_i the exponent.
    // The pairwise form is exactly zero when all g_i agree.
    for i in 0..n {
        grad_w[i] = grad_color[0] * colors[3 * i] + grad_color[1] * colors[3 * i + 1] + grad_color[2] * colors[3 * i + 2];
    }
    let mut big_g = [0.0; crate::MAX_STACK_N];
    let mut heap;
    let big_g: &mut [f64] = if n <= crate::MAX_STACK_N {
        &mut big_g[..n]
    } else {
        heap = vec![0.0; n];
        &mut heap
    };
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        let gi = grad_w[i];
        let spread: f64 = alpha.iter().zip(grad_w.iter()).map(|(aj, gj)| aj * (gi - gj)).sum();
        big_g[i] = alpha[i] * spread;
    }
    // e_i = −(p_i − μ)²: ∂L/∂p_k = −2(p_k − μ)·G_k + (2/N)·Σ_i G_i (p_i − μ)
    let mut coupled = 0.0;
    for i in 0..n {
        let r = w[i] * d[i] - mu;
        coupled += big_g[i] * r;
        grad_w[i] = big_g[i];
    }
    let coupled = 2.0 * coupled / n as f64;
    for i in 0..n {
        let r = w[i] * d[i] - mu;
        let gp = -2.0 * r * grad_w[i] + coupled;
        grad_w[i] = gp * d[i];
    }
    grad_color
}

pub fn composition_backward(
    w: &[f64],
    d: &[f64],
    h: &[f64],
    colors: &[f64],
    grad_color: [f64; 3],
) -> Result<(Vec<f64>, [f64; 3])> {
    check_len("composition_backward depths", w.len(), d.len())?;
    check_len("composition_backward uncertainties", w.len(), h.len())?;
    check_len("composition_backward colors", 3 * w.len(), colors.len())?;
    let mut alpha = vec![0.0; w.len()];
    let mut grad_w = vec![0.0; w.len()];
    let g = composition_backward_into(w, d, h, colors, grad_color, &mut alpha, &mut grad_w);
    Ok((grad_w, g))
}

/// Softmax of `w` over the entries with `H < 1`; masked entries get zero.
pub fn alpha_direct_into(w: &[f64], h: &[f64], alpha: &mut [f64]) {
    let mut hi = f64::NEG_INFINITY;
    for (wi, hi_) in w.iter().zip(h) {
        if *hi_ < 1.0 {
            hi = hi.max(*wi);
        }
    }
    if hi == f64::NEG_INFINITY {
        alpha.fill(0.0);
        return;
    }
    let mut den = 0.0;
    for i in 0..w.len() {
        alpha[i] = if h[i] < 1.0 { math::exp(w[i] - hi) } else { 0.0 };
        den += alpha[i];
    }
    for a in alpha.iter_mut() {
        *a /= den;
    }
}

pub fn alpha_direct(w: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    check_len("alpha_direct uncertainties", w.len(), h.len())?;
    let mut alpha = vec![0.0; w.len()];
    alpha_direct_into(w, h, &mut alpha);
    Ok(alpha)
}

/// Reverse mode through the masked softmax and [`compose`].
pub fn direct_backward_into(
    w: &[f64],
    h: &[f64],
    colors: &[f64],
    grad_color: [f64; 3],
    alpha: &mut [f64],
    grad_w: &mut [f64],
) -> [f64; 3] {
    alpha_direct_into(w, h, alpha);
    let mut mean_g = 0.0;
    for i in 0..w.len() {
        let gi = grad_color[0] * colors[3 * i] + grad_color[1] * colors[3 * i + 1] + grad_color[2] * colors[3 * i + 2];
        grad_w[i] = gi;
        mean_g += alpha[i] * gi;
    }
    for i in 0..w.len() {
        grad_w[i] = alpha[i] * (grad_w[i] - mean_g);
    }
    grad_color
}

/// Color of the closest sample, or `background` for an empty pixel.
pub fn naive_closest(desc: DescriptorRef<'_>, background: [f64; 3]) -> [f64; 3] {
    if desc.valid_count == 0 {
        background
    } else {
        desc.color(0)
    }
}

/// Mean color of the (up to) three closest samples, or `background`.
pub fn naive_avg3(desc: DescriptorRef<'_>, background: [f64; 3]) -> [f64; 3] {
    let k = desc.valid_count.min(3);
    if k == 0 {
        return background;
    }
    let mut out = [0.0; 3];
    for i in 0..k {
        let c = desc.color(i);
        for ch in 0..3 {
            out[ch] += c[ch];
        }
    }
    out.map(|v| v / k as f64)
}
