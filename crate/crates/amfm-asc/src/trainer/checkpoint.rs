//! Self-describing binary checkpoint container.
//!
//! Layout: magic `AMFM`, format version (u32 LE), the canonical config text
//! (u64 length + UTF-8), epoch (u64), RNG state (u64), then the sorted tensor
//! table: count (u64), and per tensor the name (u64 length + UTF-8), rank
//! (u32), extents (u64 each), raw little-endian f64 values. Writes go through
//! a temp file and an atomic rename. `save -> load -> save` is byte-identical.

use super::TrainConfig;
use crate::error::{CheckpointError, Error, Result};
use crate::model::{ModelGraph, RestoreReport};
use crate::rng::SeededRng;
use crate::tensor::Tensor;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AMFM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub epoch: u64,
    pub rng_state: u64,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn from_model(
        model: &ModelGraph,
        config: &TrainConfig,
        epoch: u64,
        rng_state: u64,
    ) -> Self {
        Checkpoint {
            config: config.clone(),
            epoch,
            rng_state,
            tensors: model.collect_tensors(),
        }
    }

    /// Materialize the model this checkpoint describes and restore its
    /// tensors. The report lists slot mismatches (non-empty only when the
    /// tensor table came from a different head configuration).
    pub fn build_model(&self) -> Result<(ModelGraph, RestoreReport)> {
        let mut rng = SeededRng::new(self.config.seed);
        let mut model = ModelGraph::new(self.config.strategy, &self.config.arch, 1, &mut rng)?;
        let report = model.restore_tensors(&self.tensors)?;
        Ok((model, report))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let cfg = self.config.to_text();
        out.extend_from_slice(&(cfg.len() as u64).to_le_bytes());
        out.extend_from_slice(cfg.as_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.rng_state.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for (name, tensor) in &self.tensors {
            out.extend_from_slice(&(name.len() as u64).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
            for &e in tensor.shape() {
                out.extend_from_slice(&(e as u64).to_le_bytes());
            }
            for &v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic.into());
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version).into());
        }
        let cfg_len = r.u64("config length")? as usize;
        let cfg_bytes = r.take(cfg_len, "config text")?;
        let cfg_text = std::str::from_utf8(cfg_bytes)
            .map_err(|e| Error::parse(format!("checkpoint config not UTF-8: {e}")))?;
        let config = TrainConfig::from_text(cfg_text)?;
        let epoch = r.u64("epoch")?;
        let rng_state = r.u64("rng state")?;
        let count = r.u64("tensor count")? as usize;
        let mut tensors = BTreeMap::new();
        for i in 0..count {
            let name_len = r.u64("tensor name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|e| Error::parse(format!("tensor {i} name not UTF-8: {e}")))?
                .to_string();
            let rank = r.u32("tensor rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64("tensor extent")? as usize);
            }
            let numel: usize = shape.iter().product();
            let raw = r.take(numel * 8, "tensor data")?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let tensor = Tensor::from_vec(shape.clone(), data).map_err(|_| {
                Error::from(CheckpointError::ShapeTable(format!(
                    "tensor {name}: inconsistent shape {shape:?}"
                )))
            })?;
            tensors.insert(name, tensor);
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Truncated(format!(
                "{} trailing bytes after tensor table",
                bytes.len() - r.pos
            ))
            .into());
        }
        Ok(Checkpoint {
            config,
            epoch,
            rng_state,
            tensors,
        })
    }

    /// Atomic write: temp file in the target directory, then rename.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        std::fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(
            ".{}.tmp{}",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("ckpt"),
            std::process::id()
        ));
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let bytes = std::fs::read(path.as_ref())?;
        Checkpoint::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated(format!(
                "needed {n} bytes for {what} at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))
            .into());
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;
    use crate::multitask::Strategy;

    fn small_checkpoint() -> Checkpoint {
        let mut cfg = TrainConfig::default();
        cfg.arch = Architecture {
            widths: vec![4],
            pool: (2, 2),
            cbam_reduction: 8,
            spatial_kernel: 3,
        };
        cfg.strategy = Strategy::ConventionalMtl;
        let mut rng = SeededRng::new(81);
        let model = ModelGraph::new(cfg.strategy, &cfg.arch, 1, &mut rng).unwrap();
        Checkpoint::from_model(&model, &cfg, 12, rng.state())
    }

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("amfm_ckpt_test_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let ckpt = small_checkpoint();
        let p1 = tmp("a.ckpt");
        let p2 = tmp("b.ckpt");
        ckpt.save(&p1).unwrap();
        let loaded = Checkpoint::load(&p1).unwrap();
        loaded.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(loaded, ckpt);
    }

    #[test]
    fn truncation_fails_loudly_everywhere() {
        let bytes = small_checkpoint().to_bytes();
        // Chop at a sample of offsets across every section of the layout.
        for cut in [0, 2, 4, 6, 11, 40, bytes.len() / 2, bytes.len() - 1] {
            match Checkpoint::from_bytes(&bytes[..cut]) {
                Err(Error::Checkpoint(CheckpointError::Truncated(_)))
                | Err(Error::Checkpoint(CheckpointError::BadMagic)) => {}
                other => panic!("cut at {cut}: expected truncation, got {other:?}"),
            }
        }
    }

    #[test]
    fn bad_magic_and_version_are_distinct_errors() {
        let mut bytes = small_checkpoint().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Checkpoint(CheckpointError::BadMagic))
        ));
        let mut bytes = small_checkpoint().to_bytes();
        bytes[4] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Checkpoint(CheckpointError::Version(9)))
        ));
    }

    #[test]
    fn build_model_round_trips_tensors() {
        let ckpt = small_checkpoint();
        let (model, report) = ckpt.build_model().unwrap();
        assert!(report.clean(), "{report:?}");
        assert_eq!(model.collect_tensors(), ckpt.tensors);
    }

    #[test]
    fn cross_strategy_load_succeeds_with_mismatch_report() {
        // Loading itself never inspects the head; restoring into a different
        // strategy surfaces the slot differences.
        let ckpt = small_checkpoint();
        let mut other_cfg = ckpt.config.clone();
        other_cfg.strategy = Strategy::ExtendedMtl;
        let mut rng = SeededRng::new(82);
        let mut model = ModelGraph::new(other_cfg.strategy, &other_cfg.arch, 1, &mut rng).unwrap();
        let report = model.restore_tensors(&ckpt.tensors).unwrap();
        assert!(!report.missing.is_empty());
    }
}
