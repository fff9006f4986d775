//! Model weights file: magic `SYNW`, version u32, then per-layer f32 arrays
//! in network order (conv: weights then bias; fully-connected: weights then
//! bias), all little-endian. The byte length must match the network's
//! parameter count exactly.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::tensor::Matrix as GenericMatrix;

type Matrix = GenericMatrix<f32>;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"SYNW";
pub const WEIGHTS_VERSION: u32 = 1;
const HEADER_LEN: usize = 8;

/// Parameters of one layer. Layers without parameters get `None` in
/// [`NetParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Matrix,
    pub bias: Vec<f32>,
}

/// Per-layer parameters aligned with `NetworkConfig::layers`.
pub type NetParams = Vec<Option<LayerParams>>;

/// Deterministic random initialization: weights and biases are uniform in
/// `[-s, s]` with `s = 1/sqrt(fan_in)`, drawn from ChaCha8 seeded by `seed`
/// with the layer index as stream, so each layer is reproducible on its own.
pub fn generate_params(net: &NetworkConfig, seed: u64) -> NetParams {
    (0..net.layer_count())
        .map(|idx| {
            net.param_dims(idx).map(|(rows, cols)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(idx as u64);
                let scale = 1.0 / (cols as f32).sqrt();
                let weights = Matrix::from_vec(
                    rows,
                    cols,
                    (0..rows * cols).map(|_| rng.gen_range(-scale..=scale)).collect(),
                )
                .expect("generated weight buffer matches its dimensions");
                let bias = (0..rows).map(|_| rng.gen_range(-scale..=scale)).collect();
                LayerParams { weights, bias }
            })
        })
        .collect()
}

/// Serializes parameters to the weights-file byte format.
pub fn encode_params(net: &NetworkConfig, params: &NetParams) -> Result<Vec<u8>> {
    if params.len() != net.layer_count() {
        return Err(Error::shape(format!(
            "parameter set has {} entries for a {}-layer network",
            params.len(),
            net.layer_count()
        )));
    }
    let mut bytes = Vec::with_capacity(HEADER_LEN + net.parameter_count() * 4);
    bytes.extend_from_slice(&WEIGHTS_MAGIC);
    bytes.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    for idx in 0..net.layer_count() {
        let Some((rows, cols)) = net.param_dims(idx) else {
            continue;
        };
        let layer = params[idx].as_ref().ok_or_else(|| {
            Error::shape(format!(
                "layer {idx} ([{}]) has no parameters bound",
                net.layers[idx].kind_name()
            ))
        })?;
        if layer.weights.rows() != rows || layer.weights.cols() != cols {
            return Err(Error::shape(format!(
                "layer {idx} ([{}]) weights are {}x{}, expected {rows}x{cols}",
                net.layers[idx].kind_name(),
                layer.weights.rows(),
                layer.weights.cols()
            )));
        }
        if layer.bias.len() != rows {
            return Err(Error::shape(format!(
                "layer {idx} ([{}]) bias length {} does not match {rows} outputs",
                net.layers[idx].kind_name(),
                layer.bias.len()
            )));
        }
        for v in layer.weights.as_slice() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for v in &layer.bias {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(bytes)
}

/// Parses a weights byte buffer against the network it must match. `label`
/// names the source in errors (usually the file path).
pub fn decode_params(label: &str, bytes: &[u8], net: &NetworkConfig) -> Result<NetParams> {
    let werr = |msg: String| Error::Weights {
        path: label.to_string(),
        msg,
    };
    if bytes.len() < HEADER_LEN {
        return Err(werr(format!(
            "file is {} bytes, smaller than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if bytes[..4] != WEIGHTS_MAGIC {
        return Err(werr(format!(
            "bad magic {:02x?}, expected {:02x?} ('SYNW')",
            &bytes[..4],
            WEIGHTS_MAGIC
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != WEIGHTS_VERSION {
        return Err(werr(format!(
            "unsupported version {version}, expected {WEIGHTS_VERSION}"
        )));
    }
    let payload = &bytes[HEADER_LEN..];
    if !payload.len().is_multiple_of(4) {
        return Err(werr(format!(
            "payload length {} is not a multiple of 4",
            payload.len()
        )));
    }

    let mut offset = 0usize; // in f32 elements
    let total = payload.len() / 4;
    let read_f32 = |i: usize| {
        f32::from_le_bytes(payload[i * 4..i * 4 + 4].try_into().expect("4 bytes"))
    };
    let mut params = Vec::with_capacity(net.layer_count());
    for idx in 0..net.layer_count() {
        let Some((rows, cols)) = net.param_dims(idx) else {
            params.push(None);
            continue;
        };
        let need = rows * cols + rows;
        if offset + need > total {
            return Err(werr(format!(
                "layer {idx} ([{}]) needs {need} values at offset {offset}, file has {total}",
                net.layers[idx].kind_name()
            )));
        }
        let weights = Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|i| read_f32(offset + i)).collect(),
        )
        .expect("weight buffer matches its dimensions");
        offset += rows * cols;
        let bias = (0..rows).map(|i| read_f32(offset + i)).collect();
        offset += rows;
        params.push(Some(LayerParams { weights, bias }));
    }
    if offset != total {
        return Err(werr(format!(
            "{} trailing values after the last layer",
            total - offset
        )));
    }
    Ok(params)
}

/// Writes a weights file.
pub fn save_weights(path: impl AsRef<Path>, net: &NetworkConfig, params: &NetParams) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_params(net, params)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads and validates a weights file against the network.
pub fn load_weights(path: impl AsRef<Path>, net: &NetworkConfig) -> Result<NetParams> {
    let path = path.as_ref();
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode_params(&path.display().to_string(), &bytes, net)
}
