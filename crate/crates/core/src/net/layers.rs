//! Forward and backward kernels for the detector. All functions operate on
//! single-image tensors (`batch == 1`).

use super::Tensor;
use crate::{Error, Result};

/// Convolution with odd square kernel, stride 1 and same padding.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `[out][in][ky][kx]`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            weight: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    #[inline]
    fn w_index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + i) * self.kernel + ky) * self.kernel + kx
    }
}

/// Valid output range `[lo, hi)` along one axis for kernel tap `k` with
/// padding `pad`, so that `out + k - pad` lies inside `[0, n)`.
#[inline]
fn tap_range(k: usize, pad: usize, n: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(k);
    let hi = (n + pad).saturating_sub(k).min(n);
    (lo, hi.max(lo))
}

pub fn conv2d(input: &Tensor, layer: &ConvLayer) -> Result<Tensor> {
    if input.channels() != layer.in_channels {
        return Err(Error::ChannelMismatch {
            expected: layer.in_channels,
            found: input.channels(),
        });
    }
    let (h, w) = (input.height(), input.width());
    let pad = layer.kernel / 2;
    let mut out = Tensor::image(layer.out_channels, h, w);
    for o in 0..layer.out_channels {
        let plane = out.plane_mut(o);
        plane.fill(layer.bias[o]);
        for i in 0..layer.in_channels {
            let src = input.plane(i);
            for ky in 0..layer.kernel {
                let (y0, y1) = tap_range(ky, pad, h);
                for kx in 0..layer.kernel {
                    let (x0, x1) = tap_range(kx, pad, w);
                    let wv = layer.weight[layer.w_index(o, i, ky, kx)];
                    if wv == 0.0 {
                        continue;
                    }
                    for y in y0..y1 {
                        let sy = y + ky - pad;
                        let dst = &mut plane[y * w + x0..y * w + x1];
                        let s = &src[sy * w + x0 + kx - pad..sy * w + x1 + kx - pad];
                        for (d, v) in dst.iter_mut().zip(s) {
                            *d += wv * v;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Accumulates weight and bias gradients into `d_layer` and returns the
/// input gradient when `want_input` is set.
pub fn conv2d_backward(
    input: &Tensor,
    layer: &ConvLayer,
    d_out: &Tensor,
    d_layer: &mut ConvLayer,
    want_input: bool,
) -> Option<Tensor> {
    let (h, w) = (input.height(), input.width());
    let pad = layer.kernel / 2;
    let mut d_in = want_input.then(|| Tensor::image(layer.in_channels, h, w));
    for o in 0..layer.out_channels {
        let g = d_out.plane(o);
        d_layer.bias[o] += g.iter().sum::<f64>();
        for i in 0..layer.in_channels {
            let src = input.plane(i);
            for ky in 0..layer.kernel {
                let (y0, y1) = tap_range(ky, pad, h);
                for kx in 0..layer.kernel {
                    let (x0, x1) = tap_range(kx, pad, w);
                    let idx = layer.w_index(o, i, ky, kx);
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = y + ky - pad;
                        let gs = &g[y * w + x0..y * w + x1];
                        let s = &src[sy * w + x0 + kx - pad..sy * w + x1 + kx - pad];
                        acc += gs.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                    }
                    d_layer.weight[idx] += acc;
                    if let Some(d_in) = d_in.as_mut() {
                        let wv = layer.weight[idx];
                        let dst = d_in.plane_mut(i);
                        for y in y0..y1 {
                            let sy = y + ky - pad;
                            let gs = &g[y * w + x0..y * w + x1];
                            let d = &mut dst[sy * w + x0 + kx - pad..sy * w + x1 + kx - pad];
                            for (dv, gv) in d.iter_mut().zip(gs) {
                                *dv += wv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    d_in
}

pub fn relu_inplace(t: &mut Tensor) {
    for v in t.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes gradient entries where the ReLU output was not positive.
pub fn relu_backward_inplace(output: &Tensor, grad: &mut Tensor) {
    for (g, &o) in grad.data_mut().iter_mut().zip(output.data()) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

/// 2×2 max pooling, stride 2, ceil mode: a trailing odd row or column forms
/// a partial window. Returns the pooled map and, per output cell, the flat
/// in-plane index of the selected input (first maximum in raster order).
pub fn max_pool2(input: &Tensor) -> (Tensor, Vec<u32>) {
    let (c, h, w) = (input.channels(), input.height(), input.width());
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Tensor::image(c, oh, ow);
    let mut arg = vec![0u32; c * oh * ow];
    for ch in 0..c {
        let src = input.plane(ch);
        let dst = out.plane_mut(ch);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0;
                for y in 2 * oy..(2 * oy + 2).min(h) {
                    for x in 2 * ox..(2 * ox + 2).min(w) {
                        let v = src[y * w + x];
                        if v > best {
                            best = v;
                            best_i = y * w + x;
                        }
                    }
                }
                dst[oy * ow + ox] = best;
                arg[ch * oh * ow + oy * ow + ox] = best_i as u32;
            }
        }
    }
    (out, arg)
}

pub fn max_pool2_backward(d_out: &Tensor, arg: &[u32], in_h: usize, in_w: usize) -> Tensor {
    let c = d_out.channels();
    let n = d_out.plane_len();
    let mut d_in = Tensor::image(c, in_h, in_w);
    for ch in 0..c {
        let g = d_out.plane(ch);
        let dst = d_in.plane_mut(ch);
        for (k, &gv) in g.iter().enumerate() {
            dst[arg[ch * n + k] as usize] += gv;
        }
    }
    d_in
}

/// 1×1 projection of all channels to one: `out(i) = Σ_c w[c] · f_c(i)`.
pub fn side_feature(features: &Tensor, w_feat: &[f64]) -> Result<Tensor> {
    if features.channels() != w_feat.len() {
        return Err(Error::ChannelMismatch {
            expected: w_feat.len(),
            found: features.channels(),
        });
    }
    let mut out = Tensor::image(1, features.height(), features.width());
    for (c, &wc) in w_feat.iter().enumerate() {
        for (o, v) in out.data_mut().iter_mut().zip(features.plane(c)) {
            *o += wc * v;
        }
    }
    Ok(out)
}

/// Returns `d_features`; accumulates into `d_w`.
pub fn side_feature_backward(features: &Tensor, w_feat: &[f64], d_out: &Tensor, d_w: &mut [f64]) -> Tensor {
    let g = d_out.plane(0);
    let mut d_f = Tensor::image(features.channels(), features.height(), features.width());
    for (c, &wc) in w_feat.iter().enumerate() {
        d_w[c] += g.iter().zip(features.plane(c)).map(|(a, b)| a * b).sum::<f64>();
        for (d, gv) in d_f.plane_mut(c).iter_mut().zip(g) {
            *d = wc * gv;
        }
    }
    d_f
}

/// Transposed-convolution kernel side for an upsampling factor.
pub fn upsample_kernel_size(factor: usize) -> usize {
    if factor == 1 {
        1
    } else {
        2 * factor
    }
}

fn check_factor(factor: usize) -> Result<()> {
    if factor == 0 || !factor.is_power_of_two() {
        return Err(Error::NonPowerOfTwo(factor));
    }
    Ok(())
}

/// Separable bilinear interpolation kernel for a transposed convolution with
/// stride `factor`, row-major `size × size`.
pub fn bilinear_kernel(factor: usize) -> Result<Vec<f64>> {
    check_factor(factor)?;
    let size = upsample_kernel_size(factor);
    let f = factor as f64;
    let center = if size % 2 == 1 { f - 1.0 } else { f - 0.5 };
    let taps: Vec<f64> = (0..size).map(|i| 1.0 - (i as f64 - center).abs() / f).collect();
    Ok(taps.iter().flat_map(|a| taps.iter().map(move |b| a * b)).collect())
}

/// Transposed convolution with stride `factor`, padding `factor / 2` and a
/// `2·factor` kernel (1×1 for factor 1), cropped to `out_h × out_w`.
pub fn upsample(map: &Tensor, factor: usize, kernel: &[f64], out_h: usize, out_w: usize) -> Result<Tensor> {
    check_factor(factor)?;
    let ks = upsample_kernel_size(factor);
    if kernel.len() != ks * ks {
        return Err(Error::InvalidValue(format!(
            "upsampling kernel has {} taps, expected {}",
            kernel.len(),
            ks * ks
        )));
    }
    let (h, w) = (map.height(), map.width());
    if h * factor < out_h || w * factor < out_w {
        return Err(Error::DimensionMismatch {
            expected: (out_w, out_h),
            found: (w * factor, h * factor),
        });
    }
    let pad = factor / 2;
    let src = map.plane(0);
    let mut out = Tensor::image(1, out_h, out_w);
    let dst = out.data_mut();
    for iy in 0..h {
        for ix in 0..w {
            let v = src[iy * w + ix];
            if v == 0.0 {
                continue;
            }
            for a in 0..ks {
                let Some(oy) = (iy * factor + a).checked_sub(pad).filter(|&oy| oy < out_h) else {
                    continue;
                };
                for b in 0..ks {
                    let Some(ox) = (ix * factor + b).checked_sub(pad).filter(|&ox| ox < out_w) else {
                        continue;
                    };
                    dst[oy * out_w + ox] += v * kernel[a * ks + b];
                }
            }
        }
    }
    Ok(out)
}

/// Returns the gradient with respect to the low-resolution map and, when
/// `d_kernel` is given, accumulates the kernel gradient.
pub fn upsample_backward(
    map: &Tensor,
    factor: usize,
    kernel: &[f64],
    d_out: &Tensor,
    mut d_kernel: Option<&mut [f64]>,
) -> Tensor {
    let ks = upsample_kernel_size(factor);
    let (h, w) = (map.height(), map.width());
    let (out_h, out_w) = (d_out.height(), d_out.width());
    let pad = factor / 2;
    let src = map.plane(0);
    let g = d_out.plane(0);
    let mut d_map = Tensor::image(1, h, w);
    let dm = d_map.data_mut();
    for iy in 0..h {
        for ix in 0..w {
            let v = src[iy * w + ix];
            let mut acc = 0.0;
            for a in 0..ks {
                let Some(oy) = (iy * factor + a).checked_sub(pad).filter(|&oy| oy < out_h) else {
                    continue;
                };
                for b in 0..ks {
                    let Some(ox) = (ix * factor + b).checked_sub(pad).filter(|&ox| ox < out_w) else {
                        continue;
                    };
                    let gv = g[oy * out_w + ox];
                    acc += gv * kernel[a * ks + b];
                    if let Some(dk) = d_kernel.as_deref_mut() {
                        dk[a * ks + b] += gv * v;
                    }
                }
            }
            dm[iy * w + ix] = acc;
        }
    }
    d_map
}

/// Output size of an arbitrary-factor resize: `round(factor · n)`, at
/// least 1.
pub fn scaled_len(n: usize, factor: f64) -> usize {
    ((n as f64 * factor).round() as usize).max(1)
}

/// Interpolation taps `(i0, i1, t)` for each output index of a 1-D resize
/// with half-pixel-centre alignment and edge clamping.
fn resize_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let ratio = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let s = ((o as f64 + 0.5) * ratio - 0.5).clamp(0.0, (n_in - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Bilinear resize of every channel to `out_h × out_w`. Equal sizes return a
/// copy; constant maps stay exactly constant.
pub fn resize_bilinear(input: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let (c, h, w) = (input.channels(), input.height(), input.width());
    if h == out_h && w == out_w {
        return input.clone();
    }
    let ty = resize_taps(h, out_h);
    let tx = resize_taps(w, out_w);
    let mut out = Tensor::image(c, out_h, out_w);
    for ch in 0..c {
        let src = input.plane(ch);
        let dst = out.plane_mut(ch);
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
                let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
                dst[oy * out_w + ox] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    out
}

/// Adjoint of [`resize_bilinear`]: maps an output-space gradient back to
/// the `in_h × in_w` input grid.
pub fn resize_bilinear_backward(d_out: &Tensor, in_h: usize, in_w: usize) -> Tensor {
    let (c, out_h, out_w) = (d_out.channels(), d_out.height(), d_out.width());
    if in_h == out_h && in_w == out_w {
        return d_out.clone();
    }
    let ty = resize_taps(in_h, out_h);
    let tx = resize_taps(in_w, out_w);
    let mut d_in = Tensor::image(c, in_h, in_w);
    for ch in 0..c {
        let g = d_out.plane(ch);
        let dst = d_in.plane_mut(ch);
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let gv = g[oy * out_w + ox];
                dst[y0 * in_w + x0] += gv * (1.0 - fy) * (1.0 - fx);
                dst[y0 * in_w + x1] += gv * (1.0 - fy) * fx;
                dst[y1 * in_w + x0] += gv * fy * (1.0 - fx);
                dst[y1 * in_w + x1] += gv * fy * fx;
            }
        }
    }
    d_in
}
