use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Combine, ConvParams, IdentityBlockParams, RadarBranchParams, ScseParams, TinyConvStack,
};
use crate::error::FeatError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Self {
        Self { shape, values }
    }
}

/// Flat weight file: parameter name to shape and row-major values.
///
/// ```json
/// { "radar.entry.weight": { "shape": [8, 1, 7, 7], "values": [ ... ] }, ... }
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightFile {
    pub tensors: BTreeMap<String, Tensor>,
}

impl WeightFile {
    pub fn load(path: &Path) -> Result<Self, FeatError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FeatError::Weights(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, FeatError> {
        let wf: WeightFile =
            serde_json::from_str(text).map_err(|e| FeatError::Weights(e.to_string()))?;
        for (name, t) in &wf.tensors {
            if t.shape.iter().product::<usize>() != t.values.len() {
                return Err(FeatError::Weights(format!(
                    "`{name}`: shape {:?} does not match {} values",
                    t.shape,
                    t.values.len()
                )));
            }
        }
        Ok(wf)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("weights serialize")
    }

    pub fn save(&self, path: &Path) -> Result<(), FeatError> {
        std::fs::write(path, self.to_json())
            .map_err(|e| FeatError::Weights(format!("{}: {e}", path.display())))
    }

    pub fn contains_prefix(&self, prefix: &str) -> bool {
        self.tensors.keys().any(|k| k.starts_with(prefix))
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) {
        self.tensors.insert(name.into(), Tensor::new(shape, values));
    }

    fn take(&self, name: &str, shape: &[usize]) -> Result<Vec<f64>, FeatError> {
        let t = self
            .tensors
            .get(name)
            .ok_or_else(|| FeatError::Weights(format!("missing tensor `{name}`")))?;
        if t.shape != shape {
            return Err(FeatError::Weights(format!(
                "`{name}`: expected shape {shape:?}, found {:?}",
                t.shape
            )));
        }
        Ok(t.values.clone())
    }

    pub fn put_conv(&mut self, prefix: &str, p: &ConvParams) {
        self.insert(
            format!("{prefix}.weight"),
            vec![p.out_ch, p.in_ch, p.kh, p.kw],
            p.weight.clone(),
        );
        self.insert(format!("{prefix}.bias"), vec![p.out_ch], p.bias.clone());
    }

    /// Reads a conv; kernel geometry comes from the stored shape, the stride
    /// from the caller.
    pub fn get_conv(&self, prefix: &str, stride: usize) -> Result<ConvParams, FeatError> {
        let name = format!("{prefix}.weight");
        let shape = self
            .tensors
            .get(&name)
            .map(|t| t.shape.clone())
            .ok_or_else(|| FeatError::Weights(format!("missing tensor `{name}`")))?;
        let [o, i, kh, kw] = shape[..] else {
            return Err(FeatError::Weights(format!("`{name}` must be 4-D")));
        };
        let weight = self.take(&name, &shape)?;
        let bias = self.take(&format!("{prefix}.bias"), &[o])?;
        ConvParams::new(o, i, kh, kw, stride, weight, bias)
    }

    pub fn put_radar_branch(&mut self, prefix: &str, p: &RadarBranchParams) {
        self.put_conv(&format!("{prefix}.entry"), &p.entry);
        for (b, block) in p.blocks.iter().enumerate() {
            self.put_conv(&format!("{prefix}.block{}.conv1", b + 1), &block.conv1);
            self.put_conv(&format!("{prefix}.block{}.conv2", b + 1), &block.conv2);
        }
    }

    pub fn get_radar_branch(&self, prefix: &str) -> Result<RadarBranchParams, FeatError> {
        let entry = self.get_conv(&format!("{prefix}.entry"), super::blocks::RADAR_STRIDE)?;
        let block = |b: usize| -> Result<IdentityBlockParams, FeatError> {
            IdentityBlockParams::new(
                self.get_conv(&format!("{prefix}.block{b}.conv1"), 1)?,
                self.get_conv(&format!("{prefix}.block{b}.conv2"), 1)?,
            )
        };
        RadarBranchParams::new(entry, [block(1)?, block(2)?])
    }

    pub fn put_scse(&mut self, prefix: &str, p: &ScseParams) {
        let (c, h) = (p.channels, p.hidden());
        self.insert(format!("{prefix}.fc1.weight"), vec![h, c], p.fc1_weight.clone());
        self.insert(format!("{prefix}.fc1.bias"), vec![h], p.fc1_bias.clone());
        self.insert(format!("{prefix}.fc2.weight"), vec![c, h], p.fc2_weight.clone());
        self.insert(format!("{prefix}.fc2.bias"), vec![c], p.fc2_bias.clone());
        self.insert(format!("{prefix}.sse.weight"), vec![1, c, 1, 1], p.sse_weight.clone());
        self.insert(format!("{prefix}.sse.bias"), vec![1], vec![p.sse_bias]);
    }

    pub fn get_scse(&self, prefix: &str, combine: Combine) -> Result<ScseParams, FeatError> {
        let name = format!("{prefix}.fc1.weight");
        let shape = self
            .tensors
            .get(&name)
            .map(|t| t.shape.clone())
            .ok_or_else(|| FeatError::Weights(format!("missing tensor `{name}`")))?;
        let [h, c] = shape[..] else {
            return Err(FeatError::Weights(format!("`{name}` must be 2-D")));
        };
        if h == 0 || c % h != 0 {
            return Err(FeatError::Weights(format!(
                "`{name}`: hidden width {h} must divide {c}"
            )));
        }
        let p = ScseParams {
            channels: c,
            reduction: c / h,
            fc1_weight: self.take(&name, &[h, c])?,
            fc1_bias: self.take(&format!("{prefix}.fc1.bias"), &[h])?,
            fc2_weight: self.take(&format!("{prefix}.fc2.weight"), &[c, h])?,
            fc2_bias: self.take(&format!("{prefix}.fc2.bias"), &[c])?,
            sse_weight: self.take(&format!("{prefix}.sse.weight"), &[1, c, 1, 1])?,
            sse_bias: self.take(&format!("{prefix}.sse.bias"), &[1])?[0],
            combine,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn put_tiny_stack(&mut self, prefix: &str, p: &TinyConvStack) {
        self.put_conv(&format!("{prefix}.conv1"), &p.conv1);
        self.put_conv(&format!("{prefix}.conv2"), &p.conv2);
    }

    pub fn get_tiny_stack(&self, prefix: &str) -> Result<TinyConvStack, FeatError> {
        TinyConvStack::new(
            self.get_conv(&format!("{prefix}.conv1"), 2)?,
            self.get_conv(&format!("{prefix}.conv2"), 2)?,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn radar_and_scse_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let radar = RadarBranchParams::random(4, &mut rng);
        let scse = ScseParams::random(4, 2, Combine::Max, &mut rng).unwrap();
        let mut wf = WeightFile::default();
        wf.put_radar_branch("radar", &radar);
        wf.put_scse("scse", &scse);
        let back = WeightFile::from_json(&wf.to_json()).unwrap();
        assert_eq!(back.get_radar_branch("radar").unwrap(), radar);
        assert_eq!(back.get_scse("scse", Combine::Max).unwrap(), scse);
    }

    #[test]
    fn shape_value_mismatch_rejected() {
        let text = r#"{"a.weight": {"shape": [2, 2], "values": [1.0, 2.0, 3.0]}}"#;
        assert!(WeightFile::from_json(text).is_err());
    }

    #[test]
    fn missing_tensor_named() {
        let wf = WeightFile::default();
        let err = wf.get_radar_branch("radar").unwrap_err().to_string();
        assert!(err.contains("radar.entry.weight"), "{err}");
    }
}
