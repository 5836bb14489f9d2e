//! Input-gradient (vector-Jacobian) entry points for the trainable blocks.
//!
//! Forward inference never calls these; they exist so the blocks can be
//! checked against finite differences.

#![allow(clippy::needless_range_loop)]

use super::conv::valid_range;
use super::{conv2d, scse_gates, Combine, ConvParams, FeatureMap, IdentityBlockParams, ScseParams};
use crate::error::FeatError;

/// `d(sum(grad_out * conv2d(x))) / dx` for an input of shape `input.shape()`.
pub fn conv2d_input_grad(
    input: &FeatureMap,
    p: &ConvParams,
    grad_out: &FeatureMap,
) -> Result<FeatureMap, FeatError> {
    p.check_input(input.shape(), "conv2d_input_grad")?;
    let out_shape = p.output_shape(input.shape());
    if grad_out.shape() != out_shape {
        return Err(FeatError::ShapeMismatch {
            op: "conv2d_input_grad",
            left: grad_out.shape(),
            right: out_shape,
        });
    }
    let (h, w) = (input.height(), input.width());
    let (oh, ow) = (out_shape.height, out_shape.width);
    let (pad_y, pad_x, s) = (p.pad_y(), p.pad_x(), p.stride);
    let mut grad = FeatureMap::zeros(input.shape());
    let plane = h * w;
    for (i, dst) in grad.as_mut_slice().chunks_mut(plane).enumerate() {
        for o in 0..p.out_ch {
            let g = grad_out.channel(o);
            for ky in 0..p.kh {
                let (oy0, oy1) = valid_range(oh, h, s, ky, pad_y);
                for kx in 0..p.kw {
                    let wv = p.w(o, i, ky, kx);
                    let (ox0, ox1) = valid_range(ow, w, s, kx, pad_x);
                    for oy in oy0..oy1 {
                        let iy = oy * s + ky - pad_y;
                        for ox in ox0..ox1 {
                            dst[iy * w + ox * s + kx - pad_x] += wv * g[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    Ok(grad)
}

fn mask_by_positive(grad: &mut FeatureMap, pre: &FeatureMap) {
    for (g, a) in grad.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}

pub fn identity_block_input_grad(
    input: &FeatureMap,
    p: &IdentityBlockParams,
    grad_out: &FeatureMap,
) -> Result<FeatureMap, FeatError> {
    if grad_out.shape() != input.shape() {
        return Err(FeatError::ShapeMismatch {
            op: "identity_block_input_grad",
            left: grad_out.shape(),
            right: input.shape(),
        });
    }
    let a1 = conv2d(input, &p.conv1)?;
    let h = a1.relu();
    let a2 = conv2d(&h, &p.conv2)?;
    let mut pre_out = a2;
    for (s, x) in pre_out.as_mut_slice().iter_mut().zip(input.as_slice()) {
        *s += *x;
    }

    let mut g_sum = grad_out.clone();
    mask_by_positive(&mut g_sum, &pre_out);
    let mut g_a1 = conv2d_input_grad(&h, &p.conv2, &g_sum)?;
    mask_by_positive(&mut g_a1, &a1);
    let g_branch = conv2d_input_grad(input, &p.conv1, &g_a1)?;
    let mut grad = g_sum;
    for (g, b) in grad.as_mut_slice().iter_mut().zip(g_branch.as_slice()) {
        *g += *b;
    }
    Ok(grad)
}

pub fn scse_input_grad(
    input: &FeatureMap,
    p: &ScseParams,
    grad_out: &FeatureMap,
) -> Result<FeatureMap, FeatError> {
    if grad_out.shape() != input.shape() {
        return Err(FeatError::ShapeMismatch {
            op: "scse_input_grad",
            left: grad_out.shape(),
            right: input.shape(),
        });
    }
    let gates = scse_gates(input, p)?;
    let c = p.channels;
    let hidden = p.hidden();
    let plane = input.shape().plane();

    // split upstream gradient between the channel-gated and spatially-gated maps
    let mut g_u = vec![0.0; c * plane];
    let mut g_v = vec![0.0; c * plane];
    for ch in 0..c {
        let gc = gates.channel[ch];
        for px in 0..plane {
            let i = ch * plane + px;
            let x = input.as_slice()[i];
            let g = grad_out.as_slice()[i];
            match p.combine {
                Combine::Max => {
                    if x * gc >= x * gates.spatial[px] {
                        g_u[i] = g;
                    } else {
                        g_v[i] = g;
                    }
                }
                Combine::Add => {
                    g_u[i] = g;
                    g_v[i] = g;
                }
            }
        }
    }

    let mut grad = FeatureMap::zeros(input.shape());
    let dx = grad.as_mut_slice();

    // channel path
    let mut d_q = vec![0.0; c];
    for ch in 0..c {
        let gc = gates.channel[ch];
        let mut acc = 0.0;
        for px in 0..plane {
            let i = ch * plane + px;
            dx[i] += g_u[i] * gc;
            acc += g_u[i] * input.as_slice()[i];
        }
        d_q[ch] = acc * gc * (1.0 - gc);
    }
    let mut d_a = vec![0.0; hidden];
    for (j, da) in d_a.iter_mut().enumerate() {
        if gates.hidden_pre[j] > 0.0 {
            *da = (0..c).map(|k| p.fc2_weight[k * hidden + j] * d_q[k]).sum();
        }
    }
    for ch in 0..c {
        let d_z: f64 = (0..hidden).map(|j| p.fc1_weight[j * c + ch] * d_a[j]).sum();
        let share = d_z / plane as f64;
        for v in &mut dx[ch * plane..(ch + 1) * plane] {
            *v += share;
        }
    }

    // spatial path
    let mut d_t = vec![0.0; plane];
    for (px, dt) in d_t.iter_mut().enumerate() {
        let gs = gates.spatial[px];
        let acc: f64 = (0..c)
            .map(|ch| g_v[ch * plane + px] * input.as_slice()[ch * plane + px])
            .sum();
        *dt = acc * gs * (1.0 - gs);
    }
    for ch in 0..c {
        let w = p.sse_weight[ch];
        for px in 0..plane {
            let i = ch * plane + px;
            dx[i] += g_v[i] * gates.spatial[px] + w * d_t[px];
        }
    }
    Ok(grad)
}
