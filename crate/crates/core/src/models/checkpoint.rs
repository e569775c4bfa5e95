//! Model checkpoint container.
//!
//! Layout: 8-byte magic `SSEMCKPT`, a u32 little-endian byte length followed
//! by a UTF-8 header (architecture fingerprint and layer listing in
//! canonical textual form plus the parameter listing), then every parameter
//! tensor as little-endian 64-bit floats in declaration order. Identical
//! coefficients serialize to byte-identical files.

use crate::error::{CoreError, Result};
use crate::models::cnn::{network_canonical_text, NetworkClassifier};
use crate::models::gmm::{gmm_canonical_text, GmmClassifier, GmmParams};
use crate::models::Classifier;
use crate::tensor::{fingerprint_text, LayerSpec, ModelParams, Padding, Tensor};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SSEMCKPT";

fn header_text(classifier: &Classifier) -> String {
    let params = classifier.params();
    let mut lines = vec![format!("fingerprint={:016x}", params.fingerprint())];
    match classifier {
        Classifier::Network(net) => {
            lines.push("kind=network".into());
            for line in net.canonical_text().lines() {
                if let Some(rest) = line.strip_prefix("input=") {
                    lines.push(format!("input={rest}"));
                } else {
                    lines.push(format!("layer {line}"));
                }
            }
        }
        Classifier::Gmm(g) => {
            lines.push("kind=gmm".into());
            lines.push(format!("dim={}", g.dim()));
        }
    }
    for (name, tensor) in params.entries() {
        let dims: Vec<String> = tensor.shape().iter().map(|d| d.to_string()).collect();
        lines.push(format!("param {name} shape={}", dims.join("x")));
    }
    lines.join("\n")
}

/// Writes `classifier` to `path` in the checkpoint container format.
pub fn save_checkpoint(classifier: &Classifier, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(CHECKPOINT_MAGIC)?;
    let header = header_text(classifier);
    let bytes = header.as_bytes();
    out.write_all(&(bytes.len() as u32).to_le_bytes())?;
    out.write_all(bytes)?;
    for (_, tensor) in classifier.params().entries() {
        for v in tensor.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn parse_extents(text: &str) -> Result<Vec<usize>> {
    text.split('x')
        .map(|p| {
            p.parse::<usize>()
                .map_err(|_| CoreError::Format(format!("bad extent list '{text}'")))
        })
        .collect()
}

fn parse_triple(text: &str) -> Result<(usize, usize, usize)> {
    let v = parse_extents(text)?;
    if v.len() != 3 {
        return Err(CoreError::Format(format!("expected 3 extents in '{text}'")));
    }
    Ok((v[0], v[1], v[2]))
}

fn parse_kv<'a>(parts: &'a [&'a str], key: &str) -> Result<&'a str> {
    parts
        .iter()
        .find_map(|p| p.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| CoreError::Format(format!("missing '{key}=' field")))
}

/// Parses one canonical layer line back into a [`LayerSpec`].
fn parse_layer_line(line: &str) -> Result<LayerSpec> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    match parts.first().copied() {
        Some("conv3d") => {
            let filters = parse_kv(&parts, "filters")?
                .parse()
                .map_err(|_| CoreError::Format("bad filter count".into()))?;
            let kernel = parse_triple(parse_kv(&parts, "kernel")?)?;
            let stride = parse_triple(parse_kv(&parts, "stride")?)?;
            let padding = match parse_kv(&parts, "padding")? {
                "same" => Padding::Same,
                "valid" => Padding::Valid,
                other => return Err(CoreError::Format(format!("unknown padding '{other}'"))),
            };
            LayerSpec::conv3d(filters, kernel, stride, padding)
        }
        Some("maxpool3d") => {
            let window = parse_triple(parse_kv(&parts, "window")?)?;
            let stride = parse_triple(parse_kv(&parts, "stride")?)?;
            LayerSpec::maxpool3d(window, stride)
        }
        Some("dense") => {
            let width = parse_kv(&parts, "width")?
                .parse()
                .map_err(|_| CoreError::Format("bad dense width".into()))?;
            LayerSpec::dense(width)
        }
        Some("relu") => Ok(LayerSpec::relu()),
        Some("softmax") => Ok(LayerSpec::softmax()),
        other => Err(CoreError::Format(format!("unknown layer line {other:?}"))),
    }
}

/// Reads a checkpoint back into a classifier, verifying magic, fingerprint,
/// declared shapes, and payload length.
pub fn load_checkpoint(path: &Path) -> Result<Classifier> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    input
        .read_exact(&mut magic)
        .map_err(|_| CoreError::Truncated("checkpoint magic".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CoreError::BadMagic {
            expected: String::from_utf8_lossy(CHECKPOINT_MAGIC).into_owned(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let mut len_bytes = [0u8; 4];
    input
        .read_exact(&mut len_bytes)
        .map_err(|_| CoreError::Truncated("checkpoint header length".into()))?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    input
        .read_exact(&mut header_bytes)
        .map_err(|_| CoreError::Truncated("checkpoint header".into()))?;
    let header = String::from_utf8(header_bytes)
        .map_err(|_| CoreError::Format("checkpoint header is not UTF-8".into()))?;

    let mut fingerprint: Option<u64> = None;
    let mut kind: Option<String> = None;
    let mut input_shape: Option<Vec<usize>> = None;
    let mut dim: Option<usize> = None;
    let mut layers = Vec::new();
    let mut param_specs: Vec<(String, Vec<usize>)> = Vec::new();
    for line in header.lines() {
        if let Some(rest) = line.strip_prefix("fingerprint=") {
            fingerprint = Some(
                u64::from_str_radix(rest, 16)
                    .map_err(|_| CoreError::Format("bad fingerprint".into()))?,
            );
        } else if let Some(rest) = line.strip_prefix("kind=") {
            kind = Some(rest.to_string());
        } else if let Some(rest) = line.strip_prefix("input=") {
            input_shape = Some(parse_extents(rest)?);
        } else if let Some(rest) = line.strip_prefix("dim=") {
            dim = Some(
                rest.parse()
                    .map_err(|_| CoreError::Format("bad mixture dimension".into()))?,
            );
        } else if let Some(rest) = line.strip_prefix("layer ") {
            layers.push(parse_layer_line(rest)?);
        } else if let Some(rest) = line.strip_prefix("param ") {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(CoreError::Format(format!("bad param line '{rest}'")));
            }
            let shape = parse_extents(parse_kv(&parts, "shape")?)?;
            param_specs.push((parts[0].to_string(), shape));
        } else {
            return Err(CoreError::Format(format!(
                "unknown checkpoint header line '{line}'"
            )));
        }
    }
    let fingerprint =
        fingerprint.ok_or_else(|| CoreError::Format("checkpoint header lacks fingerprint".into()))?;

    let mut entries = Vec::with_capacity(param_specs.len());
    for (name, shape) in param_specs {
        let count: usize = shape.iter().product();
        let mut buf = vec![0u8; count * 8];
        input
            .read_exact(&mut buf)
            .map_err(|_| CoreError::Truncated(format!("payload of parameter {name}")))?;
        let data: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push((name, Tensor::new(shape, data)?));
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(CoreError::Format(
            "checkpoint has trailing bytes after declared parameters".into(),
        ));
    }

    match kind.as_deref() {
        Some("network") => {
            let input_shape = input_shape
                .ok_or_else(|| CoreError::Format("network checkpoint lacks input shape".into()))?;
            let expected = fingerprint_text(&network_canonical_text(&layers, &input_shape));
            if expected != fingerprint {
                return Err(CoreError::InvalidArgument(format!(
                    "checkpoint fingerprint {fingerprint:016x} does not match architecture {expected:016x}"
                )));
            }
            let params = ModelParams::new(entries, fingerprint);
            Ok(Classifier::Network(NetworkClassifier::from_parts(
                layers,
                input_shape,
                params,
            )?))
        }
        Some("gmm") => {
            let dim = dim.ok_or_else(|| CoreError::Format("mixture checkpoint lacks dim".into()))?;
            let expected = fingerprint_text(&gmm_canonical_text(dim));
            if expected != fingerprint {
                return Err(CoreError::InvalidArgument(format!(
                    "checkpoint fingerprint {fingerprint:016x} does not match mixture {expected:016x}"
                )));
            }
            let params = ModelParams::new(entries, fingerprint);
            let placeholder = GmmClassifier::new(GmmParams::symmetric_1d(1.0));
            if dim == 1 {
                placeholder.with_params_tensors(&params).map(Classifier::Gmm)
            } else {
                // build a placeholder of the right dimension first
                let zeros = vec![0.0; dim];
                let ones = vec![1.0; dim];
                let base = GmmClassifier::new(GmmParams::new(
                    [0.5, 0.5],
                    [zeros.clone(), zeros],
                    [ones.clone(), ones],
                )?);
                base.with_params_tensors(&params).map(Classifier::Gmm)
            }
        }
        other => Err(CoreError::Format(format!(
            "unknown checkpoint kind {other:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_cnn2_scaled, Classifier};

    #[test]
    fn checkpoint_round_trip_is_exact_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let net = build_cnn2_scaled([8, 8, 8, 1], 0.25, 77).unwrap();
        let c = Classifier::Network(net);
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        save_checkpoint(&c, &p1).unwrap();
        save_checkpoint(&c, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

        let loaded = load_checkpoint(&p1).unwrap();
        assert_eq!(loaded.params(), c.params());
        match (&loaded, &c) {
            (Classifier::Network(a), Classifier::Network(b)) => {
                assert_eq!(a.layers(), b.layers());
                assert_eq!(a.input_shape(), b.input_shape());
            }
            _ => panic!("kind changed through checkpoint"),
        }
    }

    #[test]
    fn gmm_checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = GmmClassifier::new(
            GmmParams::new([0.4, 0.6], [vec![-2.0], vec![3.0]], [vec![0.5], vec![1.25]]).unwrap(),
        );
        let c = Classifier::Gmm(g);
        let p = dir.path().join("g.ckpt");
        save_checkpoint(&c, &p).unwrap();
        let loaded = load_checkpoint(&p).unwrap();
        assert_eq!(loaded.params(), c.params());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.ckpt");
        std::fs::write(&p, b"NOTMAGIC________").unwrap();
        assert!(matches!(
            load_checkpoint(&p),
            Err(CoreError::BadMagic { .. })
        ));

        let net = build_cnn2_scaled([8, 8, 8, 1], 0.25, 1).unwrap();
        let c = Classifier::Network(net);
        let full = dir.path().join("full.ckpt");
        save_checkpoint(&c, &full).unwrap();
        let bytes = std::fs::read(&full).unwrap();
        let cut = dir.path().join("cut.ckpt");
        std::fs::write(&cut, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(
            load_checkpoint(&cut),
            Err(CoreError::Truncated(_))
        ));
    }
}
