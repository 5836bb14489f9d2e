use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, FeatureMap};
use crate::error::FeatError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    /// Element-wise max of the two gated maps.
    #[default]
    Max,
    Add,
}

/// Concurrent spatial and channel squeeze-and-excitation.
///
/// The channel gate is `sigmoid(W2 relu(W1 avgpool(x) + b1) + b2)` with a
/// `C -> C/r -> C` bottleneck; the spatial gate is `sigmoid(w . x[:, p] + b)`
/// per pixel (a 1x1 conv down to one channel).
#[derive(Debug, Clone, PartialEq)]
pub struct ScseParams {
    pub channels: usize,
    pub reduction: usize,
    /// `(C/r) x C`, row-major.
    pub fc1_weight: Vec<f64>,
    pub fc1_bias: Vec<f64>,
    /// `C x (C/r)`, row-major.
    pub fc2_weight: Vec<f64>,
    pub fc2_bias: Vec<f64>,
    pub sse_weight: Vec<f64>,
    pub sse_bias: f64,
    pub combine: Combine,
}

impl ScseParams {
    pub fn hidden(&self) -> usize {
        self.channels / self.reduction
    }

    pub fn zeros(channels: usize, reduction: usize, combine: Combine) -> Result<Self, FeatError> {
        check_reduction(channels, reduction)?;
        let hidden = channels / reduction;
        Ok(Self {
            channels,
            reduction,
            fc1_weight: vec![0.0; hidden * channels],
            fc1_bias: vec![0.0; hidden],
            fc2_weight: vec![0.0; channels * hidden],
            fc2_bias: vec![0.0; channels],
            sse_weight: vec![0.0; channels],
            sse_bias: 0.0,
            combine,
        })
    }

    pub fn random<R: Rng + ?Sized>(
        channels: usize,
        reduction: usize,
        combine: Combine,
        rng: &mut R,
    ) -> Result<Self, FeatError> {
        let mut p = Self::zeros(channels, reduction, combine)?;
        let b1 = 1.0 / (channels as f64).sqrt();
        let b2 = 1.0 / (p.hidden() as f64).sqrt();
        p.fc1_weight.iter_mut().for_each(|v| *v = rng.random_range(-b1..b1));
        p.fc1_bias.iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        p.fc2_weight.iter_mut().for_each(|v| *v = rng.random_range(-b2..b2));
        p.fc2_bias.iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        p.sse_weight.iter_mut().for_each(|v| *v = rng.random_range(-b1..b1));
        p.sse_bias = rng.random_range(-0.1..0.1);
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), FeatError> {
        check_reduction(self.channels, self.reduction)?;
        let h = self.hidden();
        let c = self.channels;
        let ok = self.fc1_weight.len() == h * c
            && self.fc1_bias.len() == h
            && self.fc2_weight.len() == c * h
            && self.fc2_bias.len() == c
            && self.sse_weight.len() == c;
        if !ok {
            return Err(FeatError::InvalidParams(format!(
                "scSE parameter sizes inconsistent with C={c}, r={}",
                self.reduction
            )));
        }
        Ok(())
    }
}

fn check_reduction(channels: usize, reduction: usize) -> Result<(), FeatError> {
    if channels == 0 || reduction == 0 || !channels.is_multiple_of(reduction) {
        return Err(FeatError::InvalidParams(format!(
            "reduction {reduction} must divide channel count {channels}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScseGates {
    /// One gate per channel.
    pub channel: Vec<f64>,
    /// One gate per pixel, row-major.
    pub spatial: Vec<f64>,
    /// Pre-activation of the bottleneck layer, kept for the backward pass.
    pub(crate) hidden_pre: Vec<f64>,
}

pub fn scse_gates(input: &FeatureMap, p: &ScseParams) -> Result<ScseGates, FeatError> {
    p.validate()?;
    if input.channels() != p.channels {
        return Err(FeatError::ShapeMismatch {
            op: "scse",
            left: input.shape(),
            right: super::Shape::new(p.channels, input.height(), input.width()),
        });
    }
    let c = p.channels;
    let hidden = p.hidden();
    let plane = input.shape().plane();

    let pooled: Vec<f64> = (0..c)
        .map(|ch| input.channel(ch).iter().sum::<f64>() / plane as f64)
        .collect();
    let hidden_pre: Vec<f64> = (0..hidden)
        .map(|j| {
            let row = &p.fc1_weight[j * c..(j + 1) * c];
            p.fc1_bias[j] + row.iter().zip(&pooled).map(|(w, z)| w * z).sum::<f64>()
        })
        .collect();
    let channel = (0..c)
        .map(|k| {
            let row = &p.fc2_weight[k * hidden..(k + 1) * hidden];
            let q = p.fc2_bias[k]
                + row
                    .iter()
                    .zip(&hidden_pre)
                    .map(|(w, a)| w * a.max(0.0))
                    .sum::<f64>();
            sigmoid(q)
        })
        .collect();

    let mut logits = vec![p.sse_bias; plane];
    for ch in 0..c {
        let w = p.sse_weight[ch];
        for (t, x) in logits.iter_mut().zip(input.channel(ch)) {
            *t += w * x;
        }
    }
    let spatial = logits.into_iter().map(sigmoid).collect();
    Ok(ScseGates {
        channel,
        spatial,
        hidden_pre,
    })
}

pub fn scse(input: &FeatureMap, p: &ScseParams) -> Result<FeatureMap, FeatError> {
    let gates = scse_gates(input, p)?;
    let plane = input.shape().plane();
    let mut out = input.clone();
    for (ch, dst) in out.as_mut_slice().chunks_mut(plane).enumerate() {
        let gc = gates.channel[ch];
        for (v, gs) in dst.iter_mut().zip(&gates.spatial) {
            let x = *v;
            *v = match p.combine {
                Combine::Max => (x * gc).max(x * gs),
                Combine::Add => x * gc + x * gs,
            };
        }
    }
    Ok(out)
}
