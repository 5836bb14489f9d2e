//! Dense channel-major feature maps and the small set of blocks the radar
//! path needs: convolution, identity blocks, the radar feature extractor,
//! scSE gating, element-wise fusion and the evaluation-time noise operators.

mod blocks;
mod conv;
pub mod grad;
mod noise;
mod provider;
mod scse;
mod weights;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::FeatError;

pub use blocks::{identity_block, radar_branch, IdentityBlockParams, RadarBranchParams};
pub use conv::{conv2d, ConvParams};
pub use noise::{add_gaussian, blur3, NoiseConfig};
pub use provider::{FeatureProvider, TinyConvStack};
pub use scse::{scse, scse_gates, Combine, ScseGates, ScseParams};
pub use weights::{Tensor, WeightFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.channels, self.height, self.width)
    }
}

/// `channels x height x width` array stored channel-major, row-major within a plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    shape: Shape,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(shape: Shape) -> Self {
        assert!(
            shape.channels > 0 && shape.height > 0 && shape.width > 0,
            "feature map dims must be >= 1, got {shape}"
        );
        Self {
            data: vec![0.0; shape.len()],
            shape,
        }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        let mut fm = Self::zeros(shape);
        fm.data.fill(value);
        fm
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self, FeatError> {
        if shape.channels == 0 || shape.height == 0 || shape.width == 0 {
            return Err(FeatError::InvalidParams(format!(
                "feature map dims must be >= 1, got {shape}"
            )));
        }
        if data.len() != shape.len() {
            return Err(FeatError::InvalidParams(format!(
                "shape {shape} needs {} values, got {}",
                shape.len(),
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FeatError::InvalidParams("non-finite feature value".into()));
        }
        Ok(Self { shape, data })
    }

    /// Uniform values in `[-1, 1)`.
    pub fn random<R: Rng + ?Sized>(shape: Shape, rng: &mut R) -> Self {
        let mut fm = Self::zeros(shape);
        for v in &mut fm.data {
            *v = rng.random_range(-1.0..1.0);
        }
        fm
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.shape.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.shape.width
    }

    #[inline]
    fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.shape.height + y) * self.shape.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let p = self.shape.plane();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn relu(&self) -> Self {
        self.map(|v| v.max(0.0))
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Element-wise sum of the radar and RGB maps.
pub fn fuse_add(radar: &FeatureMap, rgb: &FeatureMap) -> Result<FeatureMap, FeatError> {
    if radar.shape() != rgb.shape() {
        return Err(FeatError::ShapeMismatch {
            op: "fuse_add",
            left: radar.shape(),
            right: rgb.shape(),
        });
    }
    Ok(FeatureMap {
        shape: rgb.shape,
        data: radar
            .data
            .iter()
            .zip(&rgb.data)
            .map(|(a, b)| a + b)
            .collect(),
    })
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fuse_add_identity_and_commutes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = Shape::new(3, 4, 5);
        let a = FeatureMap::random(s, &mut rng);
        let b = FeatureMap::random(s, &mut rng);
        assert_eq!(fuse_add(&FeatureMap::zeros(s), &b).unwrap(), b);
        assert_eq!(fuse_add(&a, &b).unwrap(), fuse_add(&b, &a).unwrap());
        let sum = fuse_add(&a, &b).unwrap();
        for i in 0..s.len() {
            assert_eq!(sum.as_slice()[i], a.as_slice()[i] + b.as_slice()[i]);
        }
    }

    #[test]
    fn fuse_add_associative_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = Shape::new(2, 6, 6);
        let a = FeatureMap::random(s, &mut rng);
        let b = FeatureMap::random(s, &mut rng);
        let c = FeatureMap::random(s, &mut rng);
        let l = fuse_add(&fuse_add(&a, &b).unwrap(), &c).unwrap();
        let r = fuse_add(&a, &fuse_add(&b, &c).unwrap()).unwrap();
        for (x, y) in l.as_slice().iter().zip(r.as_slice()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn fuse_add_reports_both_shapes() {
        let a = FeatureMap::zeros(Shape::new(1, 2, 2));
        let b = FeatureMap::zeros(Shape::new(1, 2, 3));
        let msg = fuse_add(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("(1, 2, 2)") && msg.contains("(1, 2, 3)"), "{msg}");
    }

    #[test]
    fn from_vec_checks_len_and_finiteness() {
        let s = Shape::new(1, 2, 2);
        assert!(FeatureMap::from_vec(s, vec![0.0; 3]).is_err());
        assert!(FeatureMap::from_vec(s, vec![0.0, 1.0, f64::NAN, 2.0]).is_err());
        assert!(FeatureMap::from_vec(Shape::new(0, 2, 2), vec![]).is_err());
        assert!(FeatureMap::from_vec(s, vec![0.0; 4]).is_ok());
    }

    #[test]
    fn sigmoid_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
    }
}
