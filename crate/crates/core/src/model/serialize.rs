//! Binary model files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "INTC"  u32 version  u32 layer_count
//! per layer: u8 tag, u8 ndims, ndims × u32 dims, then f32 values
//! ```
//!
//! | tag | layer                       | dims               | values                    |
//! |-----|-----------------------------|--------------------|---------------------------|
//! | 0   | input                       | channels, frames   | none                      |
//! | 1   | conv                        | out, in, width     | weights, bias             |
//! | 2   | max pool                    | pool, stride       | none                      |
//! | 3   | batchnorm after conv stack  | features           | gamma, beta, mean, var    |
//! | 4   | batchnorm before dense      | features           | gamma, beta, mean, var    |
//! | 5   | dense                       | out, in            | weights, bias             |

use std::path::Path;

use super::config::BatchNormPosition;
use super::network::{Layer, NetworkParams};
use crate::numerics::{BatchNormParams, DenseLayer, KernelBank, Real};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"INTC";
pub const FORMAT_VERSION: u32 = 1;

const TAG_INPUT: u8 = 0;
const TAG_CONV: u8 = 1;
const TAG_POOL: u8 = 2;
const TAG_BN_CHANNEL: u8 = 3;
const TAG_BN_FEATURE: u8 = 4;
const TAG_DENSE: u8 = 5;

/// Encodes parameters as `f32` in the model file layout.
pub fn params_to_bytes<T: Real>(params: &NetworkParams<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.layers().len() as u32 + 1).to_le_bytes());
    let header = |out: &mut Vec<u8>, tag: u8, dims: &[usize]| {
        out.push(tag);
        out.push(dims.len() as u8);
        for &d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    };
    let values = |out: &mut Vec<u8>, vs: &[T]| {
        for v in vs {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    };
    header(&mut out, TAG_INPUT, &[params.input_channels(), params.input_frames()]);
    for layer in params.layers() {
        match layer {
            Layer::Conv(k) => {
                header(&mut out, TAG_CONV, &[k.out_channels(), k.in_channels(), k.width()]);
                values(&mut out, k.weights());
                values(&mut out, k.bias());
            }
            Layer::MaxPool { pool, stride } => header(&mut out, TAG_POOL, &[*pool, *stride]),
            Layer::BatchNorm { params, position } => {
                let tag = match position {
                    BatchNormPosition::AfterLastConv => TAG_BN_CHANNEL,
                    BatchNormPosition::BeforeFirstFc => TAG_BN_FEATURE,
                };
                header(&mut out, tag, &[params.features()]);
                for v in [&params.gamma, &params.beta, &params.running_mean, &params.running_var] {
                    values(&mut out, v);
                }
            }
            Layer::Dense(d) => {
                header(&mut out, TAG_DENSE, &[d.outputs(), d.inputs()]);
                values(&mut out, d.weights());
                values(&mut out, d.bias());
            }
        }
    }
    out
}

pub fn serialize_params<T: Real>(params: &NetworkParams<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, params_to_bytes(params))?;
    Ok(())
}

pub fn deserialize_params(path: impl AsRef<Path>) -> Result<NetworkParams<f32>> {
    params_from_bytes(&std::fs::read(path)?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    layer: Option<usize>,
}

impl Reader<'_> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::ModelFormat {
            offset: self.pos as u64,
            layer: self.layer,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.error(format!(
                "truncated {what}: need {n} bytes, {} remain",
                self.bytes.len() - self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn floats(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| self.error(format!("{what} is too large")))?;
        let start = self.pos;
        let values: Vec<f32> = self
            .take(len, what)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            self.pos = start;
            return Err(self.error(format!("{what} contains a non-finite value")));
        }
        Ok(values)
    }
}

pub fn params_from_bytes(bytes: &[u8]) -> Result<NetworkParams<f32>> {
    let mut r = Reader { bytes, pos: 0, layer: None };
    if r.take(4, "magic")? != MAGIC {
        r.pos = 0;
        return Err(r.error("bad magic bytes, expected \"INTC\""));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        r.pos -= 4;
        return Err(r.error(format!("unsupported format version {version}, expected {FORMAT_VERSION}")));
    }
    let count = r.u32("layer count")? as usize;
    if count < 2 {
        return Err(r.error(format!("layer count {count} is too small")));
    }
    let mut input = None;
    let mut layers = Vec::with_capacity(count - 1);
    for i in 0..count {
        r.layer = Some(i);
        let tag = r.u8("layer tag")?;
        let ndims = r.u8("dimension count")? as usize;
        let want = match tag {
            TAG_INPUT | TAG_POOL | TAG_DENSE => 2,
            TAG_CONV => 3,
            TAG_BN_CHANNEL | TAG_BN_FEATURE => 1,
            other => return Err(r.error(format!("unknown layer tag {other}"))),
        };
        if ndims != want {
            return Err(r.error(format!("layer tag {tag} needs {want} dimensions, got {ndims}")));
        }
        let mut dims = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            dims.push(r.u32("dimension")? as usize);
        }
        if dims.contains(&0) {
            return Err(r.error("zero-sized dimension"));
        }
        if (i == 0) != (tag == TAG_INPUT) {
            return Err(r.error("the input layer must come first and only once"));
        }
        let wrap = |r: &Reader, e: Error| r.error(e.to_string());
        match tag {
            TAG_INPUT => input = Some((dims[0], dims[1])),
            TAG_CONV => {
                let (o, c, w) = (dims[0], dims[1], dims[2]);
                let weights = r.floats(o * c * w, "conv weights")?;
                let bias = r.floats(o, "conv bias")?;
                layers.push(Layer::Conv(KernelBank::new(o, c, w, weights, bias).map_err(|e| wrap(&r, e))?));
            }
            TAG_POOL => layers.push(Layer::MaxPool {
                pool: dims[0],
                stride: dims[1],
            }),
            TAG_BN_CHANNEL | TAG_BN_FEATURE => {
                let n = dims[0];
                let params = BatchNormParams {
                    gamma: r.floats(n, "batchnorm scale")?,
                    beta: r.floats(n, "batchnorm shift")?,
                    running_mean: r.floats(n, "batchnorm running mean")?,
                    running_var: r.floats(n, "batchnorm running variance")?,
                };
                let position = if tag == TAG_BN_CHANNEL {
                    BatchNormPosition::AfterLastConv
                } else {
                    BatchNormPosition::BeforeFirstFc
                };
                layers.push(Layer::BatchNorm { params, position });
            }
            _ => {
                let (o, n) = (dims[0], dims[1]);
                let weights = r.floats(o * n, "dense weights")?;
                let bias = r.floats(o, "dense bias")?;
                layers.push(Layer::Dense(DenseLayer::new(n, o, weights, bias).map_err(|e| wrap(&r, e))?));
            }
        }
    }
    r.layer = None;
    if r.pos != bytes.len() {
        return Err(r.error(format!("{} unexpected trailing bytes", bytes.len() - r.pos)));
    }
    let (channels, frames) = input.expect("layer 0 is the input layer");
    NetworkParams::from_layers(channels, frames, layers).map_err(|e| r.error(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_network, NetworkConfig};

    fn small() -> NetworkParams<f32> {
        let cfg = NetworkConfig {
            conv_filters: vec![2, 2, 2, 2],
            kernel_width: 3,
            fc_sizes: vec![5, 4],
            input_channels: 3,
            input_frames: 64,
            num_classes: 3,
            ..NetworkConfig::default()
        };
        build_network(&cfg, 1).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = small();
        let bytes = params_to_bytes(&p);
        let back = params_from_bytes(&bytes).unwrap();
        assert_eq!(back, p);
        assert_eq!(params_to_bytes(&back), bytes);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = params_to_bytes(&small());
        bytes[..4].copy_from_slice(b"XXXX");
        let err = params_from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, Error::ModelFormat { offset: 0, layer: None, .. }), "{err}");
    }

    #[test]
    fn bad_version() {
        let mut bytes = params_to_bytes(&small());
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        let err = params_from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, Error::ModelFormat { offset: 4, .. }), "{err}");
    }

    #[test]
    fn truncation_names_the_layer() {
        let bytes = params_to_bytes(&small());
        let err = params_from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        match err {
            Error::ModelFormat { layer, message, .. } => {
                assert_eq!(layer, Some(small().layers().len()));
                assert!(message.contains("truncated dense bias"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
        // cut inside the first conv layer's weights
        let err = params_from_bytes(&bytes[..40]).unwrap_err();
        assert!(matches!(err, Error::ModelFormat { layer: Some(1), .. }), "{err}");
    }

    #[test]
    fn trailing_bytes_and_unknown_tags() {
        let mut bytes = params_to_bytes(&small());
        bytes.push(0);
        assert!(params_from_bytes(&bytes).is_err());
        let mut bytes = params_to_bytes(&small());
        bytes[12] = 9;
        assert!(matches!(params_from_bytes(&bytes), Err(Error::ModelFormat { layer: Some(0), .. })));
    }
}
