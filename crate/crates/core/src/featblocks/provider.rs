use rand::Rng;

use super::{conv2d, ConvParams, FeatureMap};
use crate::error::FeatError;

/// Source of the RGB stage-two feature map: `(C, ceil(H/4), ceil(W/4))` for a
/// `(3, H, W)` image.
pub trait FeatureProvider: Send + Sync {
    fn channels(&self) -> usize;
    fn extract(&self, image: &FeatureMap) -> Result<FeatureMap, FeatError>;
}

/// Two stride-2 3x3 convolutions with ReLU, standing in for a pretrained
/// backbone stage.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyConvStack {
    pub conv1: ConvParams,
    pub conv2: ConvParams,
}

impl TinyConvStack {
    pub fn new(conv1: ConvParams, conv2: ConvParams) -> Result<Self, FeatError> {
        if conv1.in_ch != 3 || conv1.stride != 2 || conv2.stride != 2 || conv2.in_ch != conv1.out_ch {
            return Err(FeatError::InvalidParams(
                "tiny stack expects 3 -> C -> C convs with stride 2".into(),
            ));
        }
        Ok(Self { conv1, conv2 })
    }

    pub fn random<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Self {
        Self {
            conv1: ConvParams::random(channels, 3, 3, 2, rng).unwrap(),
            conv2: ConvParams::random(channels, channels, 3, 2, rng).unwrap(),
        }
    }
}

impl FeatureProvider for TinyConvStack {
    fn channels(&self) -> usize {
        self.conv2.out_ch
    }

    fn extract(&self, image: &FeatureMap) -> Result<FeatureMap, FeatError> {
        let x = conv2d(image, &self.conv1)?.relu();
        Ok(conv2d(&x, &self.conv2)?.relu())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featblocks::Shape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quarter_resolution_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let stack = TinyConvStack::random(6, &mut rng);
        let img = FeatureMap::filled(Shape::new(3, 64, 40), 0.5);
        let out = stack.extract(&img).unwrap();
        assert_eq!(out.shape(), Shape::new(6, 16, 10));
        assert_eq!(stack.channels(), 6);
    }
}
