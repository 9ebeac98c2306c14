//! Resumable per-fold training state.
//!
//! Layout (little-endian), followed by a SHA-256 of all preceding bytes:
//!
//! ```text
//! magic "HSEGCKPT" | version u32 | config hash u64 | fold u32 | epoch u32
//! completed u8 | elapsed seconds f64
//! rng: seed u64, stream u64, word counter u128
//! early stop: patience u32, best loss f64, best epoch u32, since u32, seen u32, stopped u8
//! optimizer step u64
//! history: count u32, then per record fold u32, epoch u32, 6 × f64, lpips flag u8 + f64
//! tensors: byte length u64, then a tensor container holding
//!          param/*, m/*, v/* and best/* in layout order
//! ```

use std::path::Path;

use super::config::TrainConfig;
use super::early_stop::EarlyStopState;
use crate::error::{Error, Result};
use crate::io::bytes::{read_file, sha256, write_atomic, ByteReader, ByteWriter};
use crate::io::container::{self, NamedTensor};
use crate::metrics::MetricRecord;
use crate::model::{Layout, ModelParams};
use crate::optim::AdamW;
use crate::rng::RngState;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"HSEGCKPT";
pub const VERSION: u32 = 1;
const DIGEST: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_hash: u64,
    pub fold: usize,
    /// Epochs completed so far.
    pub epoch: usize,
    /// No further epochs will run for this fold.
    pub completed: bool,
    pub elapsed_secs: f64,
    pub rng: RngState,
    pub early_stop: EarlyStopState,
    pub params: ModelParams<f32>,
    pub optimizer: AdamW<f32>,
    /// Parameters at the lowest validation loss so far.
    pub best_params: ModelParams<f32>,
    pub history: Vec<MetricRecord>,
}

fn named(prefix: &str, names: &[String], tensors: &[Tensor<f32>]) -> Vec<NamedTensor> {
    names
        .iter()
        .zip(tensors)
        .map(|(n, t)| NamedTensor {
            name: format!("{prefix}/{n}"),
            tensor: t.clone(),
        })
        .collect()
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.u64(self.config_hash);
        w.u32(self.fold as u32);
        w.u32(self.epoch as u32);
        w.u8(u8::from(self.completed));
        w.f64(self.elapsed_secs);
        w.u64(self.rng.seed);
        w.u64(self.rng.stream);
        w.u128(self.rng.counter);
        let e = &self.early_stop;
        w.u32(e.patience as u32);
        w.f64(e.best_val_loss);
        w.u32(e.best_epoch as u32);
        w.u32(e.epochs_since_improvement as u32);
        w.u32(e.epochs_seen as u32);
        w.u8(u8::from(e.stopped));
        w.u64(self.optimizer.step_count());
        w.u32(self.history.len() as u32);
        for r in &self.history {
            w.u32(r.fold as u32);
            w.u32(r.epoch as u32);
            for v in [r.train_loss, r.val_loss, r.iou, r.dice, r.psnr_db, r.ssim] {
                w.f64(v);
            }
            w.u8(u8::from(r.lpips.is_some()));
            w.f64(r.lpips.unwrap_or(0.0));
        }
        let names = self.params.names();
        let mut tensors = named("param", names, self.params.tensors());
        tensors.extend(named("m", names, self.optimizer.first_moments()));
        tensors.extend(named("v", names, self.optimizer.second_moments()));
        tensors.extend(named("best", names, self.best_params.tensors()));
        let blob = container::encode(self.config_hash, &tensors);
        w.u64(blob.len() as u64);
        w.bytes(&blob);
        let digest = sha256(w.as_slice());
        w.bytes(&digest);
        w.into_inner()
    }

    /// Parse and validate against `config`. Checks run in order: magic,
    /// checksum, version, config hash.
    pub fn decode(bytes: &[u8], path: &Path, config: &TrainConfig) -> Result<Self> {
        if bytes.len() < MAGIC.len() + DIGEST || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::corrupt(path, "not a checkpoint file"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST);
        if sha256(body) != digest {
            return Err(Error::corrupt(path, "checksum mismatch"));
        }
        let mut r = ByteReader::new(body, path);
        r.take(MAGIC.len())?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::VersionMismatch {
                path: path.to_path_buf(),
                found: version,
                supported: VERSION,
            });
        }
        let config_hash = r.u64()?;
        if config_hash != config.hash() {
            return Err(Error::ConfigMismatch {
                path: path.to_path_buf(),
                expected: config.hash(),
                found: config_hash,
            });
        }
        let fold = r.u32()? as usize;
        let epoch = r.u32()? as usize;
        let completed = r.u8()? != 0;
        let elapsed_secs = r.f64()?;
        let rng = RngState {
            seed: r.u64()?,
            stream: r.u64()?,
            counter: r.u128()?,
        };
        let early_stop = EarlyStopState {
            patience: r.u32()? as usize,
            best_val_loss: r.f64()?,
            best_epoch: r.u32()? as usize,
            epochs_since_improvement: r.u32()? as usize,
            epochs_seen: r.u32()? as usize,
            stopped: r.u8()? != 0,
        };
        let step = r.u64()?;
        let n = r.u32()? as usize;
        let mut history = Vec::with_capacity(n.min(1 << 12));
        for _ in 0..n {
            let fold = r.u32()? as usize;
            let epoch = r.u32()? as usize;
            let mut v = [0.0; 6];
            for x in &mut v {
                *x = r.f64()?;
            }
            let has_lpips = r.u8()? != 0;
            let lpips = r.f64()?;
            history.push(MetricRecord {
                fold,
                epoch,
                train_loss: v[0],
                val_loss: v[1],
                iou: v[2],
                dice: v[3],
                psnr_db: v[4],
                ssim: v[5],
                lpips: has_lpips.then_some(lpips),
            });
        }
        let blob_len = r.u64()? as usize;
        let blob = r.take(blob_len)?;
        if r.remaining() != 0 {
            return Err(r.corrupt("trailing bytes before checksum"));
        }
        let (_, tensors) = container::decode(blob, path, Some(config_hash))?;
        let layout = Layout::new(&config.model_config()?);
        let count = layout.specs.len();
        if tensors.len() != 4 * count {
            return Err(Error::corrupt(path, format!("{} tensors, expected {}", tensors.len(), 4 * count)));
        }
        let mut groups = tensors.chunks(count).zip(["param", "m", "v", "best"]).map(|(chunk, prefix)| {
            chunk
                .iter()
                .map(|t| {
                    let name = t
                        .name
                        .strip_prefix(prefix)
                        .and_then(|s| s.strip_prefix('/'))
                        .ok_or_else(|| Error::corrupt(path, format!("unexpected tensor {}", t.name)))?;
                    Ok((name.to_string(), t.tensor.clone()))
                })
                .collect::<Result<Vec<_>>>()
        });
        let mut next = || groups.next().expect("four groups");
        let as_params = |g: Vec<(String, Tensor<f32>)>| {
            ModelParams::from_named(&layout, g).map_err(|e| Error::corrupt(path, e.to_string()))
        };
        let params = as_params(next()?)?;
        let m: Vec<Tensor<f32>> = next()?.into_iter().map(|(_, t)| t).collect();
        let v: Vec<Tensor<f32>> = next()?.into_iter().map(|(_, t)| t).collect();
        let best_params = as_params(next()?)?;
        let optimizer = AdamW::from_parts(config.optimizer(), step, params.names(), m, v)
            .map_err(|e| Error::corrupt(path, e.to_string()))?;
        Ok(Self {
            config_hash,
            fold,
            epoch,
            completed,
            elapsed_secs,
            rng,
            early_stop,
            params,
            optimizer,
            best_params,
            history,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path, config: &TrainConfig) -> Result<Self> {
        Self::decode(&read_file(path)?, path, config)
    }
}
