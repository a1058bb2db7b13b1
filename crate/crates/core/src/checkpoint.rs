//! Trained model bundle and its binary checkpoint format.
//!
//! All integers are little-endian `u64`, all reals little-endian IEEE-754
//! `f64`, so a save/load round trip is bit-exact. Layout, in order:
//!
//! ```text
//! magic            8 bytes  "DDOMCKPT"
//! version          u32      1
//! dim              u64
//! hidden_width     u64
//! hidden_layers    u64
//! fourier_features u64
//! max_frequency    f64
//! beta_min         f64
//! beta_max         f64
//! x_mean           dim × f64
//! x_std            dim × f64
//! y_mean           f64
//! y_std            f64
//! best_value       f64      normalized dataset maximum
//! conditional      u8
//! reweighted       u8
//! seed             u64
//! layer_count      u64
//! per layer:
//!   rows, cols     u64, u64
//!   weights        rows × cols × f64, row-major
//!   bias           cols × f64
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::score_net::{Dense, NetConfig, ScoreNetwork};
use crate::sde::NoiseSchedule;
use crate::training::Normalizer;

pub const MAGIC: &[u8; 8] = b"DDOMCKPT";
pub const VERSION: u32 = 1;

/// How the model was trained; carried along for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelInfo {
    pub conditional: bool,
    pub reweighted: bool,
    pub seed: u64,
}

/// Everything needed to sample candidates after training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub net: ScoreNetwork,
    pub schedule: NoiseSchedule,
    pub normalizer: Normalizer,
    /// Largest normalized value in the training data.
    pub best_value: f64,
    pub info: ModelInfo,
}

impl TrainedModel {
    pub fn dim(&self) -> usize {
        self.net.dim()
    }

    /// The dataset maximum on the original objective scale.
    pub fn best_raw_value(&self) -> f64 {
        self.normalizer.denormalize_value(self.best_value)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.buf.extend_from_slice(MAGIC);
        w.buf.extend_from_slice(&VERSION.to_le_bytes());
        let cfg = self.net.config();
        w.u64(cfg.dim as u64);
        w.u64(cfg.hidden_width as u64);
        w.u64(cfg.hidden_layers as u64);
        w.u64(cfg.fourier_features as u64);
        w.f64(cfg.max_frequency);
        w.f64(self.schedule.beta_min());
        w.f64(self.schedule.beta_max());
        w.f64s(&self.normalizer.x_mean);
        w.f64s(&self.normalizer.x_std);
        w.f64(self.normalizer.y_mean);
        w.f64(self.normalizer.y_std);
        w.f64(self.best_value);
        w.buf.push(self.info.conditional as u8);
        w.buf.push(self.info.reweighted as u8);
        w.u64(self.info.seed);
        w.u64(self.net.layers().len() as u64);
        for layer in self.net.layers() {
            w.u64(layer.weights.rows() as u64);
            w.u64(layer.weights.cols() as u64);
            w.f64s(layer.weights.as_slice());
            w.f64s(&layer.bias);
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {VERSION})"
            )));
        }
        let dim = r.usize()?;
        let config = NetConfig {
            dim,
            hidden_width: r.usize()?,
            hidden_layers: r.usize()?,
            fourier_features: r.usize()?,
            max_frequency: r.f64()?,
        };
        let schedule = NoiseSchedule::new(r.f64()?, r.f64()?)?;
        let normalizer = Normalizer {
            x_mean: r.f64s(dim)?,
            x_std: r.f64s(dim)?,
            y_mean: r.f64()?,
            y_std: r.f64()?,
        };
        let best_value = r.f64()?;
        let info = ModelInfo {
            conditional: r.flag()?,
            reweighted: r.flag()?,
            seed: r.u64()?,
        };
        let n_layers = r.usize()?;
        if n_layers != config.hidden_layers + 1 {
            return Err(Error::Checkpoint(format!(
                "{n_layers} layers stored for {} hidden layers",
                config.hidden_layers
            )));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let rows = r.usize()?;
            let cols = r.usize()?;
            let weights = Matrix::new(rows, cols, r.f64s(rows.saturating_mul(cols))?)?;
            let bias = r.f64s(cols)?;
            layers.push(Dense { weights, bias });
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after the last layer",
                bytes.len() - r.pos
            )));
        }
        let net = ScoreNetwork::from_layers(config, layers)
            .map_err(|e| Error::Checkpoint(format!("inconsistent layers: {e}")))?;
        Ok(TrainedModel {
            net,
            schedule,
            normalizer,
            best_value,
            info,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("size does not fit in usize".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn flag(&mut self) -> Result<bool> {
        match self.take(1)?[0] {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Checkpoint(format!("invalid flag byte {b}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use crate::score_net::Conditioning;

    fn model(seed: u64) -> TrainedModel {
        let mut rng = Rng::new(seed);
        let mut net = ScoreNetwork::new(NetConfig::new(2).with_hidden(6, 2).with_fourier_features(4), &mut rng).unwrap();
        for l in net.layers_mut() {
            for v in l.weights.as_mut_slice() {
                *v = rng.normal();
            }
            for b in &mut l.bias {
                *b = rng.normal();
            }
        }
        TrainedModel {
            net,
            schedule: NoiseSchedule::default(),
            normalizer: Normalizer {
                x_mean: vec![0.5, -1.0 / 3.0],
                x_std: vec![2.0, 0.1],
                y_mean: -54.1,
                y_std: 51.7,
            },
            best_value: 1.04,
            info: ModelInfo {
                conditional: true,
                reweighted: false,
                seed,
            },
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model(1);
        let back = TrainedModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        let cond = Conditioning::conditional(0.37, 0.9);
        let a = m.net.forward(&[0.1, 0.2], &cond).unwrap();
        let b = back.net.forward(&[0.1, 0.2], &cond).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(back.to_bytes(), m.to_bytes());
    }

    #[test]
    fn rejects_corrupt_input() {
        let bytes = model(2).to_bytes();
        assert!(TrainedModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(TrainedModel::from_bytes(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(TrainedModel::from_bytes(&bad).is_err());
        let mut future = bytes;
        future[8] = 9;
        assert!(TrainedModel::from_bytes(&future).is_err());
    }
}
