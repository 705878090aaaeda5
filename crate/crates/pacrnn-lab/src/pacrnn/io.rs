use std::path::Path;

use super::config::PacRnnConfig;
use super::model::{build_model, Encoder, Model};
use crate::error::{Error, Result};
use crate::layers::Parameterized;
use crate::serialize::{self, layer, Manifest};
use crate::tensor::Rng;

pub const MODEL_KIND: &str = "pacrnn-model";

impl Model {
    pub fn manifest(&self) -> Manifest {
        let mut layers = Vec::new();
        match &self.encoder {
            Encoder::Dnn(ls) => {
                for (i, l) in ls.iter().enumerate() {
                    layers.push(layer(
                        format!("encoder.{}", i),
                        &format!("affine-{}", l.activation.name()),
                        &[("weights", &l.weights), ("bias", &l.bias)],
                    ));
                }
            }
            Encoder::Lstm(cs) => {
                for (i, c) in cs.iter().enumerate() {
                    layers.push(layer(
                        format!("encoder.{}", i),
                        "lstm",
                        &[("input_weights", &c.input_weights), ("recurrent_weights", &c.recurrent_weights), ("bias", &c.bias)],
                    ));
                }
            }
        }
        layers.push(layer("state_head", "softmax", &[("weights", &self.state_head.weights), ("bias", &self.state_head.bias)]));
        if let Some(p) = &self.prediction {
            for (name, l) in [("projection", &p.projection), ("prediction.hidden", &p.hidden), ("prediction.bottleneck", &p.bottleneck)] {
                layers.push(layer(name, &format!("affine-{}", l.activation.name()), &[("weights", &l.weights), ("bias", &l.bias)]));
            }
            layers.push(layer("phoneme_head", "softmax", &[("weights", &p.head.weights), ("bias", &p.head.bias)]));
        }
        Manifest {
            kind: MODEL_KIND.into(),
            config: serde_json::to_value(&self.config).expect("config serialises"),
            layers,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        serialize::encode(&self.manifest(), &self.parameters())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
        let (manifest, tensors) = serialize::decode(bytes)?;
        if manifest.kind != MODEL_KIND {
            return Err(Error::format(20, format!("file holds a {:?}, not a {}", manifest.kind, MODEL_KIND)));
        }
        let config: PacRnnConfig = serde_json::from_value(manifest.config.clone())
            .map_err(|e| Error::format(20, format!("embedded config: {}", e)))?;
        let mut model = build_model(&config, &mut Rng::new(0))?;
        serialize::load_into(model.parameters_mut(), tensors)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model> {
        Model::from_bytes(&std::fs::read(path)?)
    }
}
