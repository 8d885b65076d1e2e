use super::{ModelConfig, ModelState};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

const FORMAT: &str = "giks-model-v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockRecord {
    name: String,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

/// Serialized model: config, basis spec, output transform, and flat
/// parameter arrays per block. JSON round-trips f64 values bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    format: String,
    config: ModelConfig,
    rng_seed: u64,
    y_mean: f64,
    y_std: f64,
    blocks: Vec<BlockRecord>,
}

impl Checkpoint {
    pub fn from_model(model: &ModelState) -> Self {
        Checkpoint {
            format: FORMAT.to_string(),
            config: model.config.clone(),
            rng_seed: model.rng_seed,
            y_mean: model.y_mean,
            y_std: model.y_std,
            blocks: model
                .params
                .blocks()
                .iter()
                .map(|b| BlockRecord {
                    name: b.name.clone(),
                    rows: b.value.rows(),
                    cols: b.value.cols(),
                    values: b.value.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parse and validate a checkpoint document. Never panics on malformed
    /// input; all failure modes are integrity errors.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)
            .map_err(|e| Error::Integrity(format!("checkpoint parse: {e}")))?;
        ck.validate()?;
        Ok(ck)
    }

    fn validate(&self) -> Result<()> {
        if self.format != FORMAT {
            return Err(Error::Integrity(format!("unknown checkpoint format `{}`", self.format)));
        }
        self.config
            .validate()
            .map_err(|e| Error::Integrity(format!("checkpoint config: {e}")))?;
        if !(self.y_std.is_finite() && self.y_std > 0.0 && self.y_mean.is_finite()) {
            return Err(Error::Integrity("invalid output transform".into()));
        }
        // compare shapes against the config before any model allocation
        let expected = self
            .config
            .block_shapes()
            .map_err(|e| Error::Integrity(format!("checkpoint config: {e}")))?;
        if expected.len() != self.blocks.len() {
            return Err(Error::Integrity(format!(
                "checkpoint has {} blocks, config implies {}",
                self.blocks.len(),
                expected.len()
            )));
        }
        for (rec, (name, rows, cols)) in self.blocks.iter().zip(&expected) {
            if &rec.name != name || rec.rows != *rows || rec.cols != *cols {
                return Err(Error::Integrity(format!(
                    "block `{}` {}x{} does not match config-derived `{name}` {rows}x{cols}",
                    rec.name, rec.rows, rec.cols
                )));
            }
            if rows.checked_mul(*cols).map(|n| n != rec.values.len()).unwrap_or(true) {
                return Err(Error::Integrity(format!("block `{}` length mismatch", rec.name)));
            }
            if rec.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Integrity(format!(
                    "block `{}` has non-finite values",
                    rec.name
                )));
            }
        }
        Ok(())
    }

    pub fn into_model(self) -> Result<ModelState> {
        self.validate()?;
        let mut model = ModelState::init(self.config.clone(), self.rng_seed)?;
        model.set_output_transform(self.y_mean, self.y_std);
        for (i, rec) in self.blocks.into_iter().enumerate() {
            let block = &mut model.params.blocks_mut()[i];
            block.value.data_mut().copy_from_slice(&rec.values);
        }
        Ok(model)
    }
}

impl ModelState {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, Checkpoint::from_model(self).to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ModelState> {
        let text = std::fs::read_to_string(path)?;
        Checkpoint::from_json_str(&text)?.into_model()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EncoderConfig, SplineBasis};

    fn small_model() -> ModelState {
        let cfg = ModelConfig {
            encoder: EncoderConfig { input_dim: 4, hidden_dims: vec![6], embed_dim: 5 },
            head_hidden: vec![4],
            basis: SplineBasis::default(),
        };
        let mut m = ModelState::init(cfg, 123).unwrap();
        m.set_output_transform(1.25, 2.5);
        m
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let m = small_model();
        let json = Checkpoint::from_model(&m).to_json().unwrap();
        let back = Checkpoint::from_json_str(&json).unwrap().into_model().unwrap();
        assert_eq!(back.y_mean, m.y_mean);
        assert_eq!(back.y_std, m.y_std);
        for (a, b) in m.params.blocks().iter().zip(back.params.blocks()) {
            assert_eq!(a.value.data(), b.value.data(), "block {}", a.name);
        }
    }

    #[test]
    fn corrupt_documents_are_integrity_errors() {
        assert!(matches!(Checkpoint::from_json_str("{"), Err(Error::Integrity(_))));
        assert!(matches!(Checkpoint::from_json_str("{}"), Err(Error::Integrity(_))));
        let m = small_model();
        let json = Checkpoint::from_model(&m).to_json().unwrap();
        let tampered = json.replace("\"rows\": 4", "\"rows\": 7");
        assert!(Checkpoint::from_json_str(&tampered).is_err());
    }
}
