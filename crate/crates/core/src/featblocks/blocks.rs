use rand::Rng;

use super::{conv2d, ConvParams, FeatureMap};
use crate::error::FeatError;

/// Two stride-1 convolutions on a residual path: `relu(x + conv2(relu(conv1(x))))`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityBlockParams {
    pub conv1: ConvParams,
    pub conv2: ConvParams,
}

impl IdentityBlockParams {
    pub fn new(conv1: ConvParams, conv2: ConvParams) -> Result<Self, FeatError> {
        let ok = conv1.stride == 1
            && conv2.stride == 1
            && conv1.in_ch == conv1.out_ch
            && conv2.in_ch == conv1.out_ch
            && conv2.out_ch == conv1.in_ch;
        if !ok {
            return Err(FeatError::InvalidParams(
                "identity block convs must be stride 1 and preserve channels".into(),
            ));
        }
        Ok(Self { conv1, conv2 })
    }

    pub fn zeros(channels: usize) -> Self {
        Self {
            conv1: ConvParams::zeros(channels, channels, 3, 1).unwrap(),
            conv2: ConvParams::zeros(channels, channels, 3, 1).unwrap(),
        }
    }

    pub fn random<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Self {
        Self {
            conv1: ConvParams::random(channels, channels, 3, 1, rng).unwrap(),
            conv2: ConvParams::random(channels, channels, 3, 1, rng).unwrap(),
        }
    }

    pub fn channels(&self) -> usize {
        self.conv1.in_ch
    }
}

pub fn identity_block(input: &FeatureMap, p: &IdentityBlockParams) -> Result<FeatureMap, FeatError> {
    p.conv1.check_input(input.shape(), "identity_block")?;
    let residual = conv2d(&conv2d(input, &p.conv1)?.relu(), &p.conv2)?;
    let mut out = residual;
    for (o, x) in out.as_mut_slice().iter_mut().zip(input.as_slice()) {
        *o = (*x + *o).max(0.0);
    }
    Ok(out)
}

/// Radar feature extractor: a 7x7 stride-4 entry convolution from the single
/// radar channel to `C` channels, ReLU, then two identity blocks. The output
/// sits at 1/4 input resolution, the same grid as the RGB stage-two map.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarBranchParams {
    pub entry: ConvParams,
    pub blocks: [IdentityBlockParams; 2],
}

pub const RADAR_ENTRY_KERNEL: usize = 7;
pub const RADAR_STRIDE: usize = 4;

impl RadarBranchParams {
    pub fn new(entry: ConvParams, blocks: [IdentityBlockParams; 2]) -> Result<Self, FeatError> {
        if entry.in_ch != 1 || entry.stride != RADAR_STRIDE {
            return Err(FeatError::InvalidParams(format!(
                "radar entry conv must be 1 -> C with stride {RADAR_STRIDE}"
            )));
        }
        if blocks.iter().any(|b| b.channels() != entry.out_ch) {
            return Err(FeatError::InvalidParams(
                "identity blocks must match the entry conv width".into(),
            ));
        }
        Ok(Self { entry, blocks })
    }

    pub fn zeros(channels: usize) -> Self {
        Self {
            entry: ConvParams::zeros(channels, 1, RADAR_ENTRY_KERNEL, RADAR_STRIDE).unwrap(),
            blocks: [
                IdentityBlockParams::zeros(channels),
                IdentityBlockParams::zeros(channels),
            ],
        }
    }

    pub fn random<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Self {
        Self {
            entry: ConvParams::random(channels, 1, RADAR_ENTRY_KERNEL, RADAR_STRIDE, rng).unwrap(),
            blocks: [
                IdentityBlockParams::random(channels, rng),
                IdentityBlockParams::random(channels, rng),
            ],
        }
    }

    pub fn channels(&self) -> usize {
        self.entry.out_ch
    }
}

pub fn radar_branch(radar_map: &FeatureMap, p: &RadarBranchParams) -> Result<FeatureMap, FeatError> {
    p.entry.check_input(radar_map.shape(), "radar_branch")?;
    let mut x = conv2d(radar_map, &p.entry)?.relu();
    for block in &p.blocks {
        x = identity_block(&x, block)?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featblocks::Shape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_reduce_to_relu() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = FeatureMap::random(Shape::new(3, 5, 5), &mut rng);
        let y = identity_block(&x, &IdentityBlockParams::zeros(3)).unwrap();
        assert_eq!(y, x.relu());
    }

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut p = IdentityBlockParams::random(2, &mut rng);
        p.conv1.bias.fill(0.0);
        p.conv2.bias.fill(0.0);
        let y = identity_block(&FeatureMap::zeros(Shape::new(2, 4, 4)), &p).unwrap();
        assert_eq!(y.count_nonzero(), 0);
    }

    #[test]
    fn block_rejects_channel_change() {
        let c1 = ConvParams::zeros(4, 2, 3, 1).unwrap();
        let c2 = ConvParams::zeros(2, 4, 3, 1).unwrap();
        assert!(IdentityBlockParams::new(c1, c2).is_err());
    }

    #[test]
    fn radar_branch_shape() {
        let p = RadarBranchParams::zeros(8);
        let y = radar_branch(&FeatureMap::zeros(Shape::new(1, 512, 512)), &p).unwrap();
        assert_eq!(y.shape(), Shape::new(8, 128, 128));
        assert_eq!(y.count_nonzero(), 0);
    }

    #[test]
    fn radar_branch_rejects_multichannel_input() {
        let p = RadarBranchParams::zeros(4);
        assert!(radar_branch(&FeatureMap::zeros(Shape::new(2, 16, 16)), &p).is_err());
    }

    #[test]
    fn single_point_activation_stays_local() {
        // positive weights, zero bias: only cells whose receptive field
        // reaches the point can light up
        let c = 2;
        let mut p = RadarBranchParams::zeros(c);
        p.entry.weight.fill(0.01);
        for b in &mut p.blocks {
            b.conv1.weight.fill(0.01);
            b.conv2.weight.fill(0.01);
        }
        let mut map = FeatureMap::zeros(Shape::new(1, 64, 64));
        let (py, px) = (30usize, 41usize);
        map.set(0, py, px, 20.0);
        let y = radar_branch(&map, &p).unwrap();
        assert!(y.count_nonzero() > 0);
        // entry conv: out cell o covers inputs [4o-3, 4o+3]; each 3x3 conv
        // widens by one cell, four of them after the entry conv
        let reach = |o: usize, pt: usize| {
            let lo = (4 * o) as isize - 3 - 4 * 4;
            let hi = (4 * o) as isize + 3 + 4 * 4;
            (lo..=hi).contains(&(pt as isize))
        };
        for ch in 0..c {
            for oy in 0..16 {
                for ox in 0..16 {
                    if y.get(ch, oy, ox) != 0.0 {
                        assert!(reach(oy, py) && reach(ox, px), "leak at {oy},{ox}");
                    }
                }
            }
        }
    }
}
