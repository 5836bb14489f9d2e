use rand::Rng;
use rayon::prelude::*;

use super::{FeatureMap, Shape};
use crate::error::FeatError;

/// Convolution weights `(out_ch, in_ch, kh, kw)` plus bias, odd kernel,
/// zero "same" padding of `(k - 1) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub out_ch: usize,
    pub in_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvParams {
    pub fn new(
        out_ch: usize,
        in_ch: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self, FeatError> {
        if kh.is_multiple_of(2) || kw.is_multiple_of(2) {
            return Err(FeatError::InvalidParams(format!(
                "kernel must be odd, got {kh}x{kw}"
            )));
        }
        if stride == 0 || out_ch == 0 || in_ch == 0 {
            return Err(FeatError::InvalidParams(
                "stride and channel counts must be >= 1".into(),
            ));
        }
        if weight.len() != out_ch * in_ch * kh * kw || bias.len() != out_ch {
            return Err(FeatError::InvalidParams(format!(
                "conv {out_ch}x{in_ch}x{kh}x{kw} got {} weights and {} biases",
                weight.len(),
                bias.len()
            )));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(FeatError::InvalidParams("non-finite conv parameter".into()));
        }
        Ok(Self {
            out_ch,
            in_ch,
            kh,
            kw,
            stride,
            weight,
            bias,
        })
    }

    pub fn zeros(out_ch: usize, in_ch: usize, k: usize, stride: usize) -> Result<Self, FeatError> {
        Self::new(
            out_ch,
            in_ch,
            k,
            k,
            stride,
            vec![0.0; out_ch * in_ch * k * k],
            vec![0.0; out_ch],
        )
    }

    /// Uniform init in `±1/sqrt(fan_in)`, biases in `±0.1`.
    pub fn random<R: Rng + ?Sized>(
        out_ch: usize,
        in_ch: usize,
        k: usize,
        stride: usize,
        rng: &mut R,
    ) -> Result<Self, FeatError> {
        let bound = 1.0 / ((in_ch * k * k) as f64).sqrt();
        let weight = (0..out_ch * in_ch * k * k)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let bias = (0..out_ch).map(|_| rng.random_range(-0.1..0.1)).collect();
        Self::new(out_ch, in_ch, k, k, stride, weight, bias)
    }

    #[inline]
    pub fn w(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weight[((o * self.in_ch + i) * self.kh + ky) * self.kw + kx]
    }

    pub fn pad_y(&self) -> usize {
        (self.kh - 1) / 2
    }

    pub fn pad_x(&self) -> usize {
        (self.kw - 1) / 2
    }

    pub fn output_shape(&self, input: Shape) -> Shape {
        Shape::new(
            self.out_ch,
            input.height.div_ceil(self.stride),
            input.width.div_ceil(self.stride),
        )
    }

    pub(crate) fn check_input(&self, input: Shape, op: &'static str) -> Result<(), FeatError> {
        if input.channels != self.in_ch {
            return Err(FeatError::ShapeMismatch {
                op,
                left: input,
                right: Shape::new(self.in_ch, input.height, input.width),
            });
        }
        Ok(())
    }
}

/// Output index range `[lo, hi)` along one axis for which input coordinate
/// `o * stride + k - pad` is inside `[0, len)`.
#[inline]
pub(crate) fn valid_range(out_len: usize, len: usize, stride: usize, k: usize, pad: usize) -> (usize, usize) {
    // o*stride + k >= pad
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    // o*stride + k - pad <= len - 1
    let hi = if len + pad < k + 1 {
        0
    } else {
        ((len + pad - k - 1) / stride + 1).min(out_len)
    };
    (lo, hi.max(lo))
}

/// Cross-correlation with zero "same" padding; output dims `ceil(in / stride)`.
pub fn conv2d(input: &FeatureMap, p: &ConvParams) -> Result<FeatureMap, FeatError> {
    p.check_input(input.shape(), "conv2d")?;
    let in_shape = input.shape();
    let out_shape = p.output_shape(in_shape);
    let (oh, ow) = (out_shape.height, out_shape.width);
    let (h, w) = (in_shape.height, in_shape.width);
    let (pad_y, pad_x, s) = (p.pad_y(), p.pad_x(), p.stride);
    let plane = oh * ow;

    let mut out = FeatureMap::zeros(out_shape);
    let compute = |(o, dst): (usize, &mut [f64])| {
        dst.fill(p.bias[o]);
        for i in 0..p.in_ch {
            let src = input.channel(i);
            for ky in 0..p.kh {
                let (oy0, oy1) = valid_range(oh, h, s, ky, pad_y);
                for kx in 0..p.kw {
                    let wv = p.w(o, i, ky, kx);
                    if wv == 0.0 {
                        continue;
                    }
                    let (ox0, ox1) = valid_range(ow, w, s, kx, pad_x);
                    for oy in oy0..oy1 {
                        let iy = oy * s + ky - pad_y;
                        let row = &src[iy * w..(iy + 1) * w];
                        let drow = &mut dst[oy * ow..(oy + 1) * ow];
                        for ox in ox0..ox1 {
                            drow[ox] += wv * row[ox * s + kx - pad_x];
                        }
                    }
                }
            }
        }
    };
    let work = plane * p.in_ch * p.kh * p.kw;
    if work * p.out_ch > 1 << 18 {
        out.as_mut_slice()
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(compute);
    } else {
        out.as_mut_slice()
            .chunks_mut(plane)
            .enumerate()
            .for_each(compute);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_1x1_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = FeatureMap::random(Shape::new(1, 5, 7), &mut rng);
        let p = ConvParams::new(1, 1, 1, 1, 1, vec![1.0], vec![0.0]).unwrap();
        assert_eq!(conv2d(&x, &p).unwrap(), x);
    }

    #[test]
    fn ones_kernel_on_constant() {
        let c = 1.5;
        let x = FeatureMap::filled(Shape::new(1, 6, 6), c);
        let p = ConvParams::new(1, 1, 3, 3, 1, vec![1.0; 9], vec![0.0]).unwrap();
        let y = conv2d(&x, &p).unwrap();
        for yy in 1..5 {
            for xx in 1..5 {
                assert_eq!(y.get(0, yy, xx), 9.0 * c);
            }
        }
        // corners see 4 of 9 taps under zero padding
        assert_eq!(y.get(0, 0, 0), 4.0 * c);
        assert_eq!(y.get(0, 0, 3), 6.0 * c);
    }

    #[test]
    fn strided_output_dims_are_ceil() {
        let p = ConvParams::zeros(2, 1, 7, 4).unwrap();
        assert_eq!(p.output_shape(Shape::new(1, 512, 512)), Shape::new(2, 128, 128));
        assert_eq!(p.output_shape(Shape::new(1, 13, 10)), Shape::new(2, 4, 3));
        let y = conv2d(&FeatureMap::zeros(Shape::new(1, 13, 10)), &p).unwrap();
        assert_eq!(y.shape(), Shape::new(2, 4, 3));
    }

    #[test]
    fn channel_mismatch_rejected() {
        let p = ConvParams::zeros(2, 3, 3, 1).unwrap();
        let err = conv2d(&FeatureMap::zeros(Shape::new(2, 4, 4)), &p).unwrap_err();
        assert!(matches!(err, FeatError::ShapeMismatch { .. }));
    }

    #[test]
    fn even_kernel_and_zero_stride_rejected() {
        assert!(ConvParams::zeros(1, 1, 2, 1).is_err());
        assert!(ConvParams::zeros(1, 1, 3, 0).is_err());
        assert!(ConvParams::new(1, 1, 3, 3, 1, vec![0.0; 8], vec![0.0]).is_err());
    }

    #[test]
    fn valid_range_matches_bruteforce() {
        for len in 1usize..12 {
            for stride in 1..5 {
                for k in [1usize, 3, 5, 7] {
                    let pad = (k - 1) / 2;
                    let out_len = len.div_ceil(stride);
                    for kk in 0..k {
                        let expect: Vec<usize> = (0..out_len)
                            .filter(|&o| {
                                let c = (o * stride + kk) as isize - pad as isize;
                                c >= 0 && (c as usize) < len
                            })
                            .collect();
                        let (lo, hi) = valid_range(out_len, len, stride, kk, pad);
                        assert_eq!((lo..hi).collect::<Vec<_>>(), expect);
                    }
                }
            }
        }
    }
}
