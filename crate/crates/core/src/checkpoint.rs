//! Trained parameters and the `HODP` checkpoint format.
//!
//! Layout, all little-endian: magic `HODP`, version `u32`, feature dimension
//! `e`, embedding dimension `n` and layer count as `u32`, then every layer's
//! weight (row-major) and bias as `f64`s, then `curvature_param`. Hidden
//! layers are `2n` wide. The binary hyperplane (`a`, then `o`) follows, then
//! the class count `u32` and each class hyperplane the same way.

use std::fs;
use std::path::Path;

use crate::binio::{to_u32, Reader, Writer};
use crate::classifier::{ClassifierParams, Hyperplane};
use crate::error::{Error, Result};
use crate::head::{Dense, HeadParams};

const MAGIC: &str = "HODP";
const VERSION: u32 = 1;

/// Everything a trained model needs for scoring.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub head: HeadParams<f64>,
    /// Binary ID/outlier hyperplane of the uncertainty loss.
    pub hyperplane: Hyperplane<f64>,
    /// Per-class hyperplanes used by the logit-based scores.
    pub classifier: ClassifierParams<f64>,
}

impl Checkpoint {
    pub fn feature_dim(&self) -> usize {
        self.head.feature_dim()
    }

    pub fn embedding_dim(&self) -> usize {
        self.head.embedding_dim()
    }

    pub fn is_finite(&self) -> bool {
        let plane_ok = |h: &Hyperplane<f64>| {
            h.offset.is_finite() && h.orientation.iter().all(|x| x.is_finite())
        };
        self.head.is_finite()
            && plane_ok(&self.hyperplane)
            && self.classifier.hyperplanes.iter().all(plane_ok)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let n = self.embedding_dim();
        let mut w = Writer::default();
        w.bytes(MAGIC.as_bytes());
        w.u32(VERSION);
        w.u32(to_u32("feature dimension", self.feature_dim())?);
        w.u32(to_u32("embedding dimension", n)?);
        w.u32(to_u32("layer count", self.head.layers.len())?);
        for layer in &self.head.layers {
            w.f64s(&layer.weight);
            w.f64s(&layer.bias);
        }
        w.f64s(&[self.head.curvature_param]);
        let plane = |w: &mut Writer, h: &Hyperplane<f64>| {
            w.f64s(&[h.offset]);
            w.f64s(&h.orientation);
        };
        plane(&mut w, &self.hyperplane);
        w.u32(to_u32("class count", self.classifier.num_classes())?);
        for h in &self.classifier.hyperplanes {
            plane(&mut w, h);
        }
        Ok(w.buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let dims_offset = r.offset();
        let e = r.u32()? as usize;
        let n = r.u32()? as usize;
        let count = r.u32()? as usize;
        if e == 0 || n == 0 || count == 0 {
            return Err(Error::InvalidData {
                offset: dims_offset,
                message: format!("invalid shape e={e} n={n} layers={count}"),
            });
        }
        let shape = |i: usize| {
            let inputs = if i == 0 { e } else { 2 * n };
            let outputs = if i + 1 == count { n } else { 2 * n };
            (inputs, outputs)
        };
        // reject absurd headers before allocating
        let head_values = (0..count)
            .map(|i| {
                let (a, b) = shape(i);
                a.saturating_mul(b).saturating_add(b)
            })
            .fold(0usize, usize::saturating_add);
        if head_values.saturating_add(n + 2).saturating_mul(8) > r.remaining() {
            return Err(Error::Truncated {
                offset: bytes.len() as u64,
            });
        }
        let mut layers = Vec::with_capacity(count);
        for i in 0..count {
            let (inputs, outputs) = shape(i);
            let weight = r.f64s(inputs * outputs)?;
            let bias = r.f64s(outputs)?;
            layers.push(Dense {
                inputs,
                outputs,
                weight,
                bias,
            });
        }
        let curvature_param = r.f64()?;
        let plane = |r: &mut Reader| -> Result<Hyperplane<f64>> {
            let offset = r.f64()?;
            Ok(Hyperplane::new(offset, r.f64s(n)?))
        };
        let hyperplane = plane(&mut r)?;
        let classes = r.u32()? as usize;
        if classes.saturating_mul(8 * (n + 1)) > r.remaining() {
            return Err(Error::Truncated {
                offset: bytes.len() as u64,
            });
        }
        let hyperplanes = (0..classes)
            .map(|_| plane(&mut r))
            .collect::<Result<Vec<_>>>()?;
        if r.remaining() != 0 {
            return Err(Error::InvalidData {
                offset: r.offset(),
                message: format!("{} trailing bytes", r.remaining()),
            });
        }
        let ckpt = Self {
            head: HeadParams::from_layers(layers, curvature_param)?,
            hyperplane,
            classifier: ClassifierParams::new(hyperplanes)?,
        };
        if !ckpt.is_finite() {
            return Err(Error::NonFinite("checkpoint parameters".into()));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
