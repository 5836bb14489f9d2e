//! Quantization-free region feature extraction by bilinear sampling.
//!
//! Cell `(i, j)` of a feature map holds the value at continuous coordinate
//! `(i, j)`. An image-space coordinate `u` maps to `u * spatial_scale - 0.5`
//! on the feature grid, so pixel centres line up with cell centres.

use serde::{Deserialize, Serialize};

use crate::featblocks::{FeatureMap, Shape};
use crate::geometry::Box2D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoiSpec {
    pub pooled_h: usize,
    pub pooled_w: usize,
    /// Sample points per bin along each axis.
    pub sampling: usize,
    /// Feature cells per image pixel, e.g. 0.25 for a stride-4 map.
    pub spatial_scale: f64,
}

impl Default for RoiSpec {
    fn default() -> Self {
        Self {
            pooled_h: 7,
            pooled_w: 7,
            sampling: 2,
            spatial_scale: 0.25,
        }
    }
}

impl RoiSpec {
    pub fn is_valid(&self) -> bool {
        self.pooled_h >= 1
            && self.pooled_w >= 1
            && self.sampling >= 1
            && self.spatial_scale.is_finite()
            && self.spatial_scale > 0.0
    }
}

/// Bilinear read of channel `c` at `(y, x)`.
///
/// Zero outside `[-1, dim]`; inside that band coordinates are clamped onto
/// the grid before interpolating.
pub fn bilinear_sample(fm: &FeatureMap, c: usize, y: f64, x: f64) -> f64 {
    let (h, w) = (fm.height(), fm.width());
    if y < -1.0 || y > h as f64 || x < -1.0 || x > w as f64 {
        return 0.0;
    }
    let y = y.max(0.0);
    let x = x.max(0.0);
    let (mut y0, mut x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1);
    let (mut ly, mut lx) = (y - y0 as f64, x - x0 as f64);
    if y0 >= h - 1 {
        y0 = h - 1;
        y1 = h - 1;
        ly = 0.0;
    } else {
        y1 = y0 + 1;
    }
    if x0 >= w - 1 {
        x0 = w - 1;
        x1 = w - 1;
        lx = 0.0;
    } else {
        x1 = x0 + 1;
    }
    let (hy, hx) = (1.0 - ly, 1.0 - lx);
    let plane = fm.channel(c);
    hy * hx * plane[y0 * w + x0]
        + hy * lx * plane[y0 * w + x1]
        + ly * hx * plane[y1 * w + x0]
        + ly * lx * plane[y1 * w + x1]
}

/// Feature-grid sample positions for one roi, bin-major:
/// `(bin_y * pooled_w + bin_x) * sampling^2 + iy * sampling + ix`.
pub fn sample_positions(roi: &Box2D, spec: &RoiSpec) -> Vec<(f64, f64)> {
    let s = spec.spatial_scale;
    let (x0, y0) = (roi.x1 * s - 0.5, roi.y1 * s - 0.5);
    let bin_w = roi.width() * s / spec.pooled_w as f64;
    let bin_h = roi.height() * s / spec.pooled_h as f64;
    let n = spec.sampling as f64;
    let mut out = Vec::with_capacity(spec.pooled_h * spec.pooled_w * spec.sampling * spec.sampling);
    for by in 0..spec.pooled_h {
        for bx in 0..spec.pooled_w {
            for iy in 0..spec.sampling {
                let y = y0 + by as f64 * bin_h + (iy as f64 + 0.5) * bin_h / n;
                for ix in 0..spec.sampling {
                    let x = x0 + bx as f64 * bin_w + (ix as f64 + 0.5) * bin_w / n;
                    out.push((y, x));
                }
            }
        }
    }
    out
}

/// `(C, pooled_h, pooled_w)` features for `roi` (image coordinates). Each bin
/// is the mean of `sampling^2` bilinear samples at evenly spaced interior
/// points; zero-area rois repeat a single point sample.
///
/// Panics if `spec` is invalid.
pub fn roi_align(fm: &FeatureMap, roi: &Box2D, spec: &RoiSpec) -> FeatureMap {
    assert!(spec.is_valid(), "invalid RoiSpec {spec:?}");
    let positions = sample_positions(roi, spec);
    let per_bin = spec.sampling * spec.sampling;
    let count = per_bin as f64;
    let mut out = FeatureMap::zeros(Shape::new(fm.channels(), spec.pooled_h, spec.pooled_w));
    let bins = spec.pooled_h * spec.pooled_w;
    for c in 0..fm.channels() {
        for bin in 0..bins {
            let acc: f64 = positions[bin * per_bin..(bin + 1) * per_bin]
                .iter()
                .map(|&(y, x)| bilinear_sample(fm, c, y, x))
                .sum();
            out.set(c, bin / spec.pooled_w, bin % spec.pooled_w, acc / count);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_by_two() -> FeatureMap {
        FeatureMap::from_vec(Shape::new(1, 2, 2), vec![0.0, 1.0, 2.0, 3.0]).unwrap()
    }

    #[test]
    fn bilinear_examples() {
        let fm = two_by_two();
        assert_eq!(bilinear_sample(&fm, 0, 0.0, 1.0), 1.0);
        assert_eq!(bilinear_sample(&fm, 0, 1.0, 0.0), 2.0);
        assert_eq!(bilinear_sample(&fm, 0, 0.5, 0.5), 1.5);
        let c = FeatureMap::filled(Shape::new(1, 5, 5), 2.5);
        for (y, x) in [(0.3, 4.0), (2.2, 0.7), (-0.5, 4.9), (3.999, 2.0)] {
            assert!((bilinear_sample(&c, 0, y, x) - 2.5).abs() < 1e-15);
        }
    }

    #[test]
    fn bilinear_border_band() {
        let fm = two_by_two();
        assert_eq!(bilinear_sample(&fm, 0, -1.01, 0.0), 0.0);
        assert_eq!(bilinear_sample(&fm, 0, 0.0, 2.01), 0.0);
        // inside the band the coordinate clamps onto the edge
        assert_eq!(bilinear_sample(&fm, 0, -0.6, 0.0), 0.0);
        assert_eq!(bilinear_sample(&fm, 0, -0.6, 1.0), 1.0);
        assert_eq!(bilinear_sample(&fm, 0, 1.7, 1.7), 3.0);
    }

    #[test]
    fn constant_map_constant_output() {
        let fm = FeatureMap::filled(Shape::new(2, 12, 12), -0.75);
        let spec = RoiSpec {
            spatial_scale: 1.0,
            ..RoiSpec::default()
        };
        let out = roi_align(&fm, &Box2D::new(1.3, 2.2, 9.9, 7.1), &spec);
        assert_eq!(out.shape(), Shape::new(2, 7, 7));
        assert!(out.as_slice().iter().all(|v| (*v + 0.75).abs() < 1e-12));
    }

    #[test]
    fn whole_map_roi_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let fm = FeatureMap::random(Shape::new(2, 6, 9), &mut rng);
        let spec = RoiSpec {
            pooled_h: 6,
            pooled_w: 9,
            sampling: 1,
            spatial_scale: 1.0,
        };
        let out = roi_align(&fm, &Box2D::new(0.0, 0.0, 9.0, 6.0), &spec);
        for (a, b) in out.as_slice().iter().zip(fm.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_roi_repeats_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let fm = FeatureMap::random(Shape::new(1, 8, 8), &mut rng);
        let spec = RoiSpec {
            spatial_scale: 1.0,
            ..RoiSpec::default()
        };
        let out = roi_align(&fm, &Box2D::new(3.7, 2.1, 3.7, 2.1), &spec);
        let v = bilinear_sample(&fm, 0, 1.6, 3.2);
        assert!(out.as_slice().iter().all(|o| (o - v).abs() < 1e-12));
    }

    #[test]
    fn positions_are_affine_in_roi() {
        let spec = RoiSpec::default();
        let a = Box2D::new(10.0, 20.0, 50.0, 44.0);
        let b = Box2D::new(30.0, 12.0, 94.0, 60.0);
        let mix = |t: f64| {
            Box2D::new(
                a.x1 + t * (b.x1 - a.x1),
                a.y1 + t * (b.y1 - a.y1),
                a.x2 + t * (b.x2 - a.x2),
                a.y2 + t * (b.y2 - a.y2),
            )
        };
        let pa = sample_positions(&a, &spec);
        let pb = sample_positions(&b, &spec);
        let pm = sample_positions(&mix(0.3), &spec);
        for ((u, v), m) in pa.iter().zip(&pb).zip(&pm) {
            assert!((m.0 - (u.0 + 0.3 * (v.0 - u.0))).abs() < 1e-12);
            assert!((m.1 - (u.1 + 0.3 * (v.1 - u.1))).abs() < 1e-12);
        }
        // no snapping: a sub-pixel shift moves every sample
        let shifted = sample_positions(&a.translate(0.1, 0.0), &spec);
        for (p, q) in pa.iter().zip(&shifted) {
            assert!((q.1 - p.1 - 0.1 * spec.spatial_scale).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn linear_in_feature_map(seed in 0u64..500, alpha in -2.0..2.0f64, beta in -2.0..2.0f64,
                                 x in 0.0..30.0f64, y in 0.0..30.0f64, w in 0.0..20.0f64, h in 0.0..20.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = Shape::new(2, 10, 10);
            let a = FeatureMap::random(s, &mut rng);
            let b = FeatureMap::random(s, &mut rng);
            let mixed = FeatureMap::from_vec(s, a.as_slice().iter().zip(b.as_slice())
                .map(|(p, q)| alpha * p + beta * q).collect()).unwrap();
            let spec = RoiSpec { spatial_scale: 0.25, ..RoiSpec::default() };
            let roi = Box2D::new(x, y, x + w, y + h);
            let ra = roi_align(&a, &roi, &spec);
            let rb = roi_align(&b, &roi, &spec);
            let rm = roi_align(&mixed, &roi, &spec);
            for i in 0..rm.as_slice().len() {
                let expect = alpha * ra.as_slice()[i] + beta * rb.as_slice()[i];
                prop_assert!((rm.as_slice()[i] - expect).abs() < 1e-9);
            }
        }

        #[test]
        fn integer_shift_consistency(seed in 0u64..500, dx in 1usize..4, dy in 1usize..4,
                                     x in 3.0..8.0f64, y in 3.0..8.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = FeatureMap::random(Shape::new(1, 16, 16), &mut rng);
            let mut shifted = FeatureMap::zeros(Shape::new(1, 16, 16));
            for yy in 0..16 - dy {
                for xx in 0..16 - dx {
                    shifted.set(0, yy + dy, xx + dx, base.get(0, yy, xx));
                }
            }
            let spec = RoiSpec { spatial_scale: 1.0, ..RoiSpec::default() };
            let roi = Box2D::new(x, y, x + 4.0, y + 3.0);
            let a = roi_align(&base, &roi, &spec);
            let b = roi_align(&shifted, &roi.translate(dx as f64, dy as f64), &spec);
            for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }
    }
}
