//! `DSCM` model files: magic, format version, layer count, then per layer
//! `out, in` (u32 each), activation tag (u8), row-major f32 weights and f32 bias,
//! all little-endian. Values are stored in single precision.

use std::io::{Read, Write};
use std::path::Path;

use super::layer::{Activation, DenseLayer};
use super::model::MlpModel;
use crate::binio::{expect_magic, read_f32s, read_u32, read_u8, write_atomic, write_f32s, write_u32};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MODEL_MAGIC: &[u8; 4] = b"DSCM";
pub const MODEL_VERSION: u32 = 1;

pub fn write_model(w: &mut impl Write, model: &MlpModel) -> Result<()> {
    w.write_all(MODEL_MAGIC)?;
    write_u32(w, MODEL_VERSION)?;
    write_u32(w, model.layers().len() as u32)?;
    for layer in model.layers() {
        write_u32(w, layer.output_dim() as u32)?;
        write_u32(w, layer.input_dim() as u32)?;
        w.write_all(&[layer.activation.tag()])?;
        write_f32s(w, layer.weights.data())?;
        write_f32s(w, &layer.bias)?;
    }
    Ok(())
}

/// Reads a model. Tap points are not stored; they are reassigned to the last
/// `min(5, layers)` layers.
pub fn read_model(r: &mut impl Read) -> Result<MlpModel> {
    expect_magic(r, MODEL_MAGIC)?;
    let version = read_u32(r)?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let count = read_u32(r)? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let out = read_u32(r)? as usize;
        let inp = read_u32(r)? as usize;
        let activation = Activation::from_tag(read_u8(r)?)?;
        let weights = Matrix::from_vec(out, inp, read_f32s(r, out * inp)?)?;
        let bias = read_f32s(r, out)?;
        layers.push(DenseLayer::new(weights, bias, activation)?);
    }
    MlpModel::from_layers(layers)
}

pub fn model_to_bytes(model: &MlpModel) -> Vec<u8> {
    let mut buf = Vec::new();
    write_model(&mut buf, model).expect("writing to a Vec cannot fail");
    buf
}

pub fn save_model(path: &Path, model: &MlpModel) -> Result<()> {
    write_atomic(path, &model_to_bytes(model))
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    let bytes = std::fs::read(path)?;
    read_model(&mut bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let model = MlpModel::classifier(3, &[2], 4, 0);
        let bytes = model_to_bytes(&model);
        assert_eq!(&bytes[..4], b"DSCM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        // first layer: out=2, in=3, relu
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 3);
        assert_eq!(bytes[20], 1);
        let expected_len = 12 + (9 + 4 * (6 + 2)) + (9 + 4 * (8 + 4));
        assert_eq!(bytes.len(), expected_len);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(read_model(&mut &b"XXXX"[..]), Err(Error::Format(_))));
        let bytes = model_to_bytes(&MlpModel::classifier(3, &[2], 4, 0));
        assert!(matches!(read_model(&mut &bytes[..bytes.len() - 1]), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn reencoding_is_stable(seed in 0u64..1000, width in 1usize..6, depth in 0usize..4) {
            let hidden = vec![width; depth];
            let model = MlpModel::classifier(3, &hidden, 2, seed);
            let bytes = model_to_bytes(&model);
            let loaded = read_model(&mut bytes.as_slice()).unwrap();
            prop_assert_eq!(model_to_bytes(&loaded), bytes);
            prop_assert_eq!(loaded.taps(), model.taps());
            for (a, b) in loaded.layers().iter().zip(model.layers()) {
                for (x, y) in a.weights.data().iter().zip(b.weights.data()) {
                    prop_assert!((x - y).abs() <= 1e-7 * y.abs().max(1.0));
                }
            }
        }
    }
}
