//! Model files.
//!
//! Layout (all multi-byte scalars little-endian):
//!
//! ```text
//! "BS4N"            4 bytes magic
//! version           u8, currently 1
//! flags             u8, bit 0 set when real-valued weights follow the layers
//! layer_count       u16
//! per layer:
//!   in_dim, out_dim u32, u32
//!   alpha, theta    f32, f32
//!   signs           ceil(in_dim * out_dim / 8) bytes, row-major
//!                   (postsynaptic-major), LSB first, 1 = +1, 0 = -1
//! if flags bit 0:
//!   weights         f32 per synapse, layer by layer, row-major
//! ```
//!
//! The simulation window `t_max` is not part of the file and is supplied when
//! loading.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{Layer, Network};

pub const MAGIC: &[u8; 4] = b"BS4N";
pub const VERSION: u8 = 1;
pub const FLAG_REAL_WEIGHTS: u8 = 0b0000_0001;

const FILE_HEADER_BYTES: usize = 8;
/// in_dim, out_dim, alpha and theta.
pub const LAYER_HEADER_BYTES: usize = 16;

/// Bytes needed to pack `synapses` sign bits.
pub fn packed_len(synapses: usize) -> usize {
    synapses.div_ceil(8)
}

fn pack_signs(signs: &[i8]) -> Vec<u8> {
    let mut out = vec![0u8; packed_len(signs.len())];
    for (k, &s) in signs.iter().enumerate() {
        if s > 0 {
            out[k / 8] |= 1 << (k % 8);
        }
    }
    out
}

fn unpack_signs(bytes: &[u8], n: usize) -> Vec<f32> {
    (0..n).map(|k| if bytes[k / 8] >> (k % 8) & 1 == 1 { 1.0 } else { -1.0 }).collect()
}

/// Serializes a network. Without `include_real` only signs and per-layer
/// scalars are written.
pub fn encode_model(net: &Network, include_real: bool) -> Result<Vec<u8>> {
    if include_real && !net.has_proxy_weights() {
        return Err(Error::Unsupported("network has no real-valued weights to store".into()));
    }
    let count = u16::try_from(net.layers().len())
        .map_err(|_| Error::Structure("too many layers for the model format".into()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(if include_real { FLAG_REAL_WEIGHTS } else { 0 });
    out.extend_from_slice(&count.to_le_bytes());
    for layer in net.layers() {
        let dim = |d: usize| {
            u32::try_from(d).map_err(|_| Error::Structure(format!("dimension {d} does not fit in 32 bits")))
        };
        out.extend_from_slice(&dim(layer.inputs())?.to_le_bytes());
        out.extend_from_slice(&dim(layer.outputs())?.to_le_bytes());
        out.extend_from_slice(&layer.alpha().to_le_bytes());
        out.extend_from_slice(&layer.theta().to_le_bytes());
        out.extend_from_slice(&pack_signs(layer.signs()));
    }
    if include_real {
        for layer in net.layers() {
            for &w in layer.weights() {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn save_model(net: &Network, path: impl AsRef<Path>, include_real: bool) -> Result<usize> {
    let bytes = encode_model(net, include_real)?;
    fs::write(path, &bytes)?;
    Ok(bytes.len())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Length(format!("model file truncated while reading {what} at byte {}", self.pos))
        })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Parses a model. Deployment files give a network whose proxies are the
/// signs themselves (`+1.0` / `-1.0`) and which reports no proxy weights.
pub fn decode_model(bytes: &[u8], t_max: u32) -> Result<Network> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad model magic {magic:02x?}, expected \"BS4N\"")));
    }
    let version = r.take(1, "version")?[0];
    if version != VERSION {
        return Err(Error::Format(format!("unsupported model version {version}, expected {VERSION}")));
    }
    let flags = r.take(1, "flags")?[0];
    if flags & !FLAG_REAL_WEIGHTS != 0 {
        return Err(Error::Format(format!("unknown flag bits 0x{flags:02x}")));
    }
    let count = u16::from_le_bytes(r.take(2, "layer count")?.try_into().unwrap()) as usize;
    let mut specs = Vec::with_capacity(count);
    for l in 0..count {
        let inputs = r.u32("layer dimensions")? as usize;
        let outputs = r.u32("layer dimensions")? as usize;
        let alpha = r.f32("alpha")?;
        let theta = r.f32("theta")?;
        let synapses = inputs
            .checked_mul(outputs)
            .ok_or_else(|| Error::Format(format!("layer {l}: dimensions overflow")))?;
        let signs = unpack_signs(r.take(packed_len(synapses), "sign payload")?, synapses);
        specs.push((inputs, outputs, alpha, theta, signs));
    }
    let has_real = flags & FLAG_REAL_WEIGHTS != 0;
    let mut layers = Vec::with_capacity(count);
    for (inputs, outputs, alpha, theta, signs) in specs {
        let weights = if has_real {
            let raw = r.take(4 * inputs * outputs, "real weights")?;
            raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()
        } else {
            signs
        };
        layers.push(Layer::new(inputs, outputs, weights, alpha, theta)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Length(format!(
            "{} trailing bytes after model payload",
            bytes.len() - r.pos
        )));
    }
    let mut net = Network::new(layers, t_max)?;
    net.set_proxy_weights(has_real);
    Ok(net)
}

pub fn load_model(path: impl AsRef<Path>, t_max: u32) -> Result<Network> {
    decode_model(&fs::read(path)?, t_max)
}

/// Storage needed by one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSize {
    pub inputs: usize,
    pub outputs: usize,
    /// 32-bit float per synapse.
    pub dense_bytes: usize,
    /// One bit per synapse.
    pub packed_bytes: usize,
    /// `in_dim`, `out_dim`, `alpha`, `theta` in the deployment file.
    pub header_bytes: usize,
}

impl LayerSize {
    pub fn payload_ratio(&self) -> f64 {
        self.dense_bytes as f64 / self.packed_bytes as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeReport {
    pub layers: Vec<LayerSize>,
}

impl SizeReport {
    pub fn dense_bytes(&self) -> usize {
        self.layers.iter().map(|l| l.dense_bytes).sum()
    }

    pub fn packed_bytes(&self) -> usize {
        self.layers.iter().map(|l| l.packed_bytes).sum()
    }

    /// Packed payload plus per-layer headers.
    pub fn deployment_bytes(&self) -> usize {
        self.layers.iter().map(|l| l.packed_bytes + l.header_bytes).sum()
    }

    /// Size of the whole deployment file including the file header.
    pub fn deployment_file_bytes(&self) -> usize {
        FILE_HEADER_BYTES + self.deployment_bytes()
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("layer  inputs  outputs  dense_bytes  packed_bytes  header_bytes  ratio\n");
        for (l, s) in self.layers.iter().enumerate() {
            out.push_str(&format!(
                "{l:>5}  {:>6}  {:>7}  {:>11}  {:>12}  {:>12}  {:>5.2}\n",
                s.inputs,
                s.outputs,
                s.dense_bytes,
                s.packed_bytes,
                s.header_bytes,
                s.payload_ratio()
            ));
        }
        if !self.layers.is_empty() {
            out.push_str(&format!(
                "total  dense {} bytes, deployment {} bytes ({} payload + headers), ratio {:.2}\n",
                self.dense_bytes(),
                self.deployment_file_bytes(),
                self.packed_bytes(),
                self.dense_bytes() as f64 / self.deployment_file_bytes() as f64
            ));
        }
        out
    }
}

pub fn size_report_for(dims: &[(usize, usize)]) -> SizeReport {
    let layers = dims
        .iter()
        .map(|&(inputs, outputs)| LayerSize {
            inputs,
            outputs,
            dense_bytes: 4 * inputs * outputs,
            packed_bytes: packed_len(inputs * outputs),
            header_bytes: LAYER_HEADER_BYTES,
        })
        .collect();
    SizeReport { layers }
}

pub fn model_size_report(net: &Network) -> SizeReport {
    let dims: Vec<_> = net.layers().iter().map(|l| (l.inputs(), l.outputs())).collect();
    size_report_for(&dims)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net_2x2() -> Network {
        let l = Layer::new(2, 2, vec![1.0, -1.0, -1.0, 1.0], 1.5, 3.0).unwrap();
        Network::new(vec![l], 16).unwrap()
    }

    #[test]
    fn sign_byte_is_row_major_lsb_first() {
        let bytes = encode_model(&net_2x2(), false).unwrap();
        assert_eq!(&bytes[..4], b"BS4N");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 0);
        assert_eq!(&bytes[6..8], &[1, 0]);
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &1.5f32.to_le_bytes());
        assert_eq!(&bytes[20..24], &3.0f32.to_le_bytes());
        assert_eq!(bytes[24], 0b0000_1001);
        assert_eq!(bytes.len(), 25);
    }

    #[test]
    fn checkpoint_round_trip() {
        let l = Layer::new(3, 2, vec![0.25, -7.5, 0.0, 1e-3, -0.0, 42.0], 0.37, 11.0).unwrap();
        let net = Network::new(vec![l], 32).unwrap();
        let back = decode_model(&encode_model(&net, true).unwrap(), 32).unwrap();
        assert_eq!(back, net);
        assert!(back.has_proxy_weights());
    }

    #[test]
    fn deployment_load_uses_signs_as_weights() {
        let l = Layer::new(3, 1, vec![0.25, -7.5, 0.0], 2.0, 1.0).unwrap();
        let net = Network::new(vec![l], 8).unwrap();
        let back = decode_model(&encode_model(&net, false).unwrap(), 8).unwrap();
        assert_eq!(back.layers()[0].weights(), &[1.0, -1.0, 1.0]);
        assert_eq!(back.layers()[0].signs(), net.layers()[0].signs());
        assert!(!back.has_proxy_weights());
        assert!(matches!(encode_model(&back, true), Err(Error::Unsupported(_))));
    }

    #[test]
    fn rejects_bad_version_and_magic() {
        let mut bytes = encode_model(&net_2x2(), false).unwrap();
        bytes[4] = 2;
        assert!(matches!(decode_model(&bytes, 16), Err(Error::Format(_))));
        bytes[4] = 1;
        bytes[0] = b'X';
        assert!(matches!(decode_model(&bytes, 16), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_length_mismatch() {
        let mut bytes = encode_model(&net_2x2(), true).unwrap();
        bytes.pop();
        assert!(matches!(decode_model(&bytes, 16), Err(Error::Length(_))));
        let mut bytes = encode_model(&net_2x2(), false).unwrap();
        bytes.push(0);
        assert!(matches!(decode_model(&bytes, 16), Err(Error::Length(_))));
    }

    #[test]
    fn size_report_arithmetic() {
        let r = size_report_for(&[(784, 600), (600, 10)]);
        assert_eq!(r.dense_bytes(), 1_905_600);
        assert_eq!(r.packed_bytes(), 58_800 + 750);
        assert_eq!(r.deployment_bytes(), 59_550 + 32);
        let one = size_report_for(&[(1, 8)]);
        assert_eq!((one.layers[0].packed_bytes, one.layers[0].dense_bytes), (1, 32));
        assert_eq!(one.layers[0].payload_ratio(), 32.0);
        assert!(size_report_for(&[]).layers.is_empty());
    }

    #[test]
    fn file_sizes_match_layout() {
        let l1 = Layer::new(784, 600, vec![0.5; 784 * 600], 5.0, 100.0).unwrap();
        let l2 = Layer::new(600, 10, vec![0.5; 6000], 5.0, 100.0).unwrap();
        let net = Network::new(vec![l1, l2], 256).unwrap();
        let deploy = encode_model(&net, false).unwrap();
        assert_eq!(deploy.len(), 8 + 2 * 16 + 58_800 + 750);
        assert_eq!(deploy.len(), model_size_report(&net).deployment_file_bytes());
        let ckpt = encode_model(&net, true).unwrap();
        assert_eq!(ckpt.len() - deploy.len(), (784 * 600 + 600 * 10) * 4);
    }
}
