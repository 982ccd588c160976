//! Versioned binary checkpoints with exact round-trip guarantees.
//!
//! Layout of the `CNNF` version-1 stream (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "CNNF"
//! version u32      1
//! arch    u32 length prefix + that many bytes of architecture text
//! params  8 bytes per parameter, f64, in canonical layer order:
//!         conv kernels nested (kernel, y, x, depth) then biases,
//!         fc weights row-major then biases
//! ```
//!
//! Parameters are stored at full 64-bit width so a reloaded network feeds
//! the gradient checker bit-exactly. Note the IDX reader is big-endian
//! because that format demands it; checkpoints are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::archfile;
use crate::error::{Error, Result};
use crate::layers::{ConvParams, FcParams};
use crate::planner::{plan, LayerSpec};
use crate::trainer::{LayerParams, Network};
use crate::volume::Volume;

pub const MAGIC: &[u8; 4] = b"CNNF";
pub const VERSION: u32 = 1;

/// Conventional file extension for checkpoints.
pub const EXTENSION: &str = "cnnf";

/// Serializes `(arch, parameters)` to `sink` and returns the byte count:
/// `8 + (4 + arch text) + 8 * param_count`.
pub fn save<W: Write>(net: &Network, sink: &mut W) -> Result<u64> {
    let text = archfile::format(net.arch());
    let text_bytes = text.as_bytes();

    sink.write_all(MAGIC)?;
    sink.write_all(&VERSION.to_le_bytes())?;
    sink.write_all(&(text_bytes.len() as u32).to_le_bytes())?;
    sink.write_all(text_bytes)?;
    let mut written = 4 + 4 + 4 + text_bytes.len() as u64;

    for layer in net.params() {
        for slot in 0..layer.param_count() {
            sink.write_all(&layer.get_slot(slot).to_le_bytes())?;
            written += 8;
        }
    }
    Ok(written)
}

fn read_exact_or(source: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    source.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format(format!("checkpoint truncated while reading {what}"))
        } else {
            Error::Io(e)
        }
    })
}

/// Reconstructs a network from a `CNNF` stream, validating the magic,
/// version, architecture text, and payload length.
pub fn load<R: Read>(source: &mut R) -> Result<Network> {
    let mut magic = [0u8; 4];
    read_exact_or(source, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:02x?}, expected \"CNNF\"",
            magic
        )));
    }

    let mut word = [0u8; 4];
    read_exact_or(source, &mut word, "version")?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::UnknownVersion(version));
    }

    read_exact_or(source, &mut word, "architecture length")?;
    let text_len = u32::from_le_bytes(word) as usize;
    let mut text_bytes = vec![0u8; text_len];
    read_exact_or(source, &mut text_bytes, "architecture text")?;
    let text = String::from_utf8(text_bytes)
        .map_err(|_| Error::Format("architecture text is not UTF-8".to_string()))?;
    let arch = archfile::parse(&text, "checkpoint")?;

    let report = plan(&arch, 8)?;
    let expected_bytes = report.total_params * 8;
    let mut payload = Vec::new();
    source.read_to_end(&mut payload)?;
    if payload.len() != expected_bytes {
        return Err(Error::Length { expected: expected_bytes, actual: payload.len() });
    }

    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };

    let mut params = Vec::with_capacity(arch.layers.len());
    for (i, spec) in arch.layers.iter().enumerate() {
        let input_shape = if i == 0 { arch.input_shape() } else { report.layers[i - 1].output };
        let layer = match *spec {
            LayerSpec::Input { .. } | LayerSpec::Relu | LayerSpec::Pool { .. } => LayerParams::None,
            LayerSpec::Conv { field, kernels, stride, pad } => {
                let d_in = input_shape.2;
                let kernel_volumes = (0..kernels)
                    .map(|_| Volume::from_vec(field, field, d_in, take(field * field * d_in)))
                    .collect::<Result<Vec<_>>>()?;
                LayerParams::Conv(ConvParams::new(kernel_volumes, take(kernels), stride, pad)?)
            }
            LayerSpec::Fc { outputs } => {
                let n_in = input_shape.0 * input_shape.1 * input_shape.2;
                LayerParams::Fc(FcParams::new(n_in, outputs, take(n_in * outputs), take(outputs))?)
            }
        };
        params.push(layer);
    }
    Network::from_parts(arch, params)
}

pub fn save_to_path(net: &Network, path: &Path) -> Result<u64> {
    let mut writer = BufWriter::new(File::create(path)?);
    let count = save(net, &mut writer)?;
    writer.flush()?;
    Ok(count)
}

pub fn load_from_path(path: &Path) -> Result<Network> {
    load(&mut BufReader::new(File::open(path)?))
}
