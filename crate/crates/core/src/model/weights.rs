use std::path::Path;

use super::params::{Layout, ModelParams};
use super::ModelConfig;
use crate::error::Result;
use crate::io::container::{self, NamedTensor};

pub(crate) fn to_named(params: &ModelParams<f32>) -> Vec<NamedTensor> {
    params
        .names()
        .iter()
        .zip(params.tensors())
        .map(|(name, tensor)| NamedTensor {
            name: name.clone(),
            tensor: tensor.clone(),
        })
        .collect()
}

/// Write parameters tagged with the config's structural hash.
pub fn save_weights(path: &Path, config: &ModelConfig, params: &ModelParams<f32>) -> Result<()> {
    container::write(path, config.structural_hash(), &to_named(params))
}

/// Read parameters written for an architecturally identical config.
pub fn load_weights(path: &Path, config: &ModelConfig) -> Result<ModelParams<f32>> {
    let (_, named) = container::read(path, Some(config.structural_hash()))?;
    let layout = Layout::new(config);
    ModelParams::from_named(&layout, named.into_iter().map(|t| (t.name, t.tensor)).collect())
        .map_err(|e| crate::Error::corrupt(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::Error;

    #[test]
    fn round_trip_and_failure_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let cfg = ModelConfig::tiny();
        let params = ModelParams::<f32>::init(&Layout::new(&cfg), &mut Rng::new(1));
        save_weights(&path, &cfg, &params).unwrap();
        assert_eq!(load_weights(&path, &cfg).unwrap(), params);
        assert_eq!(load_weights(&path, &cfg.clone().with_dropout(0.0)).unwrap(), params);

        assert!(matches!(
            load_weights(&dir.path().join("nope.bin"), &cfg),
            Err(Error::MissingFile(_))
        ));
        let mut other = cfg.clone();
        other.decoder_dim = 32;
        assert!(matches!(load_weights(&path, &other), Err(Error::ConfigMismatch { .. })));

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_weights(&path, &cfg), Err(Error::Corrupt { .. })));
    }
}
