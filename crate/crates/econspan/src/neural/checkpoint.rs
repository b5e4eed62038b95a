//! Binary checkpoint format.
//!
//! Layout: magic `BSQN`, u16 version, u16 layer count, then one 9-byte
//! descriptor per layer (u8 kind + four u16 shape fields), then the full
//! parameter vector as little-endian f32 in canonical order. Multi-byte
//! integers are little-endian. Round trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{NetworkSpec, NeuralError, ParameterSet};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"BSQN";
const VERSION: u16 = 1;

const KIND_CONV: u8 = 1;
const KIND_FLATTEN: u8 = 2;
const KIND_DENSE: u8 = 3;

struct LayerDesc {
    kind: u8,
    shape: [u16; 4],
}

fn layer_table(spec: &NetworkSpec) -> Result<Vec<LayerDesc>, NeuralError> {
    let dim = |v: usize| -> Result<u16, NeuralError> {
        u16::try_from(v)
            .map_err(|_| NeuralError::Format(format!("dimension {v} does not fit in u16")))
    };
    Ok(vec![
        LayerDesc {
            kind: KIND_CONV,
            shape: [
                dim(spec.conv1.filters)?,
                dim(spec.input_c)?,
                dim(spec.conv1.kernel_h)?,
                dim(spec.conv1.kernel_w)?,
            ],
        },
        LayerDesc {
            kind: KIND_CONV,
            shape: [
                dim(spec.conv2.filters)?,
                dim(spec.conv1.filters)?,
                dim(spec.conv2.kernel_h)?,
                dim(spec.conv2.kernel_w)?,
            ],
        },
        LayerDesc {
            kind: KIND_FLATTEN,
            shape: [0, 0, 0, 0],
        },
        LayerDesc {
            kind: KIND_DENSE,
            shape: [dim(spec.hidden)?, dim(spec.flatten_len())?, 0, 0],
        },
        LayerDesc {
            kind: KIND_DENSE,
            shape: [dim(spec.outputs)?, dim(spec.hidden)?, 0, 0],
        },
    ])
}

/// Serializes the parameter set to `path`.
pub fn save_checkpoint(params: &ParameterSet, path: impl AsRef<Path>) -> Result<(), NeuralError> {
    let table = layer_table(params.spec())?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(table.len() as u16).to_le_bytes())?;
    for layer in &table {
        w.write_all(&[layer.kind])?;
        for s in layer.shape {
            w.write_all(&s.to_le_bytes())?;
        }
    }
    for v in params.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u16(r: &mut impl Read) -> Result<u16, NeuralError> {
    let mut buf = [0u8; 2];
    r.read_exact(&mut buf)
        .map_err(|_| NeuralError::Format("unexpected end of file".into()))?;
    Ok(u16::from_le_bytes(buf))
}

/// Loads a checkpoint and validates it against `spec`; any mismatch of
/// magic, version, layer table or payload length is a format error and
/// produces no partial state.
pub fn load_checkpoint(
    path: impl AsRef<Path>,
    spec: &NetworkSpec,
) -> Result<ParameterSet, NeuralError> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| NeuralError::Format("unexpected end of file".into()))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(NeuralError::Format(format!("bad magic bytes {magic:?}")));
    }
    let version = read_u16(&mut r)?;
    if version != VERSION {
        return Err(NeuralError::Format(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let expected_table = layer_table(spec)?;
    let layer_count = read_u16(&mut r)? as usize;
    if layer_count != expected_table.len() {
        return Err(NeuralError::Format(format!(
            "layer count {layer_count} does not match spec ({})",
            expected_table.len()
        )));
    }
    for (i, expected) in expected_table.iter().enumerate() {
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)
            .map_err(|_| NeuralError::Format("unexpected end of file".into()))?;
        let mut shape = [0u16; 4];
        for s in &mut shape {
            *s = read_u16(&mut r)?;
        }
        if kind[0] != expected.kind || shape != expected.shape {
            return Err(NeuralError::Format(format!(
                "layer {i} mismatch: kind {} shape {:?}, expected kind {} shape {:?}",
                kind[0], shape, expected.kind, expected.shape
            )));
        }
    }

    let total = spec.layout().total;
    let mut payload = vec![0u8; total * 4];
    r.read_exact(&mut payload)
        .map_err(|_| NeuralError::Format("truncated parameter payload".into()))?;
    let mut trailing = [0u8; 1];
    match r.read(&mut trailing) {
        Ok(0) => {}
        Ok(_) => return Err(NeuralError::Format("trailing bytes after payload".into())),
        Err(e) => return Err(NeuralError::Io(e)),
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(NeuralError::Format(format!(
            "non-finite parameter at index {i}"
        )));
    }
    ParameterSet::from_values(*spec, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::init_network;

    fn small_spec() -> NetworkSpec {
        NetworkSpec::new(8, 16, [4, 6], 8, 5).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise_lossless() {
        let spec = small_spec();
        let params = init_network(spec, 77);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bsqn");
        save_checkpoint(&params, &path).unwrap();
        let loaded = load_checkpoint(&path, &spec).unwrap();
        let same = params
            .values()
            .iter()
            .zip(loaded.values())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same);
    }

    #[test]
    fn payload_is_four_bytes_per_parameter() {
        let spec = small_spec();
        let params = init_network(spec, 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bsqn");
        save_checkpoint(&params, &path).unwrap();
        let header = 4 + 2 + 2 + 5 * 9;
        let size = std::fs::metadata(&path).unwrap().len() as usize;
        assert_eq!(size, header + params.len() * 4);
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let spec = small_spec();
        let params = init_network(spec, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bsqn");
        save_checkpoint(&params, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(
            load_checkpoint(&path, &spec),
            Err(NeuralError::Format(_))
        ));
    }

    #[test]
    fn bad_magic_version_and_shape_are_rejected() {
        let spec = small_spec();
        let params = init_network(spec, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bsqn");
        save_checkpoint(&params, &path).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(
            load_checkpoint(&path, &spec),
            Err(NeuralError::Format(_))
        ));

        let mut bad = good.clone();
        bad[4] = 9;
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(
            load_checkpoint(&path, &spec),
            Err(NeuralError::Format(_))
        ));

        std::fs::write(&path, &good).unwrap();
        let other = NetworkSpec::new(8, 16, [4, 8], 8, 5).unwrap();
        assert!(matches!(
            load_checkpoint(&path, &other),
            Err(NeuralError::Format(_))
        ));
    }

    #[test]
    fn non_finite_payload_is_rejected() {
        let spec = small_spec();
        let params = init_network(spec, 6);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bsqn");
        save_checkpoint(&params, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path, &spec),
            Err(NeuralError::Format(_))
        ));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let spec = small_spec();
        let params = init_network(spec, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bsqn");
        save_checkpoint(&params, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path, &spec),
            Err(NeuralError::Format(_))
        ));
    }
}
