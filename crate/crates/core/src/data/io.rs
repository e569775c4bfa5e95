//! Bit-exact volume container format and the dataset manifest.
//!
//! Container layout, all integers little-endian: magic `SSEMVOL1` (8 bytes),
//! format version u16, unit flag u8 (0 = hounsfield, 1 = normalized), slice
//! thickness f64, patient id u16 length + UTF-8 bytes, depth/height/width
//! u32, then the voxel payload as f64 row-major with depth outermost.
//!
//! Manifest: plain-text lines `patient_id,relative_path,label` with label
//! `0`, `1`, or `?` for unlabeled pool members.

use crate::data::{IntensityUnit, Volume};
use crate::error::{CoreError, Result};
use crate::tensor::Tensor;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const VOLUME_MAGIC: &[u8; 8] = b"SSEMVOL1";
const VOLUME_FORMAT_VERSION: u16 = 1;

/// Writes a volume in the container format. Identical volumes produce
/// byte-identical files.
pub fn write_volume(volume: &Volume, path: &Path) -> Result<()> {
    let id_bytes = volume.patient_id().as_bytes();
    if id_bytes.len() > u16::MAX as usize {
        return Err(CoreError::InvalidArgument("patient id too long".into()));
    }
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(VOLUME_MAGIC)?;
    out.write_all(&VOLUME_FORMAT_VERSION.to_le_bytes())?;
    let flag: u8 = match volume.unit() {
        IntensityUnit::Hounsfield => 0,
        IntensityUnit::Normalized => 1,
    };
    out.write_all(&[flag])?;
    out.write_all(&volume.slice_thickness_mm().to_le_bytes())?;
    out.write_all(&(id_bytes.len() as u16).to_le_bytes())?;
    out.write_all(id_bytes)?;
    for extent in [volume.depth(), volume.height(), volume.width()] {
        let extent = u32::try_from(extent)
            .map_err(|_| CoreError::ShapeOverflow(format!("extent {extent} exceeds u32")))?;
        out.write_all(&extent.to_le_bytes())?;
    }
    for v in volume.voxels().data() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_exact_or(reader: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    reader
        .read_exact(buf)
        .map_err(|_| CoreError::Truncated(what.to_string()))
}

/// Reads a volume back, verifying magic, version, declared extents, and
/// payload length, and re-validating the volume invariants.
pub fn read_volume(path: &Path) -> Result<Volume> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    read_exact_or(&mut input, &mut magic, "volume magic")?;
    if &magic != VOLUME_MAGIC {
        return Err(CoreError::BadMagic {
            expected: String::from_utf8_lossy(VOLUME_MAGIC).into_owned(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let mut u16buf = [0u8; 2];
    read_exact_or(&mut input, &mut u16buf, "format version")?;
    let version = u16::from_le_bytes(u16buf);
    if version != VOLUME_FORMAT_VERSION {
        return Err(CoreError::Format(format!(
            "unsupported volume format version {version}"
        )));
    }
    let mut flag = [0u8; 1];
    read_exact_or(&mut input, &mut flag, "unit flag")?;
    let unit = match flag[0] {
        0 => IntensityUnit::Hounsfield,
        1 => IntensityUnit::Normalized,
        other => return Err(CoreError::Format(format!("unknown unit flag {other}"))),
    };
    let mut f64buf = [0u8; 8];
    read_exact_or(&mut input, &mut f64buf, "slice thickness")?;
    let thickness = f64::from_le_bytes(f64buf);
    read_exact_or(&mut input, &mut u16buf, "patient id length")?;
    let id_len = u16::from_le_bytes(u16buf) as usize;
    let mut id_bytes = vec![0u8; id_len];
    read_exact_or(&mut input, &mut id_bytes, "patient id")?;
    let patient_id = String::from_utf8(id_bytes)
        .map_err(|_| CoreError::Format("patient id is not UTF-8".into()))?;

    let mut u32buf = [0u8; 4];
    let mut extents = [0usize; 3];
    for (extent, what) in extents.iter_mut().zip(["depth", "height", "width"]) {
        read_exact_or(&mut input, &mut u32buf, what)?;
        *extent = u32::from_le_bytes(u32buf) as usize;
    }
    let [d, h, w] = extents;
    let voxel_count = d
        .checked_mul(h)
        .and_then(|p| p.checked_mul(w))
        .ok_or_else(|| CoreError::ShapeOverflow(format!("{d}x{h}x{w} overflows")))?;
    let byte_count = voxel_count
        .checked_mul(8)
        .ok_or_else(|| CoreError::ShapeOverflow(format!("{voxel_count} voxels overflow in bytes")))?;

    let mut payload = vec![0u8; byte_count];
    input.read_exact(&mut payload).map_err(|_| {
        CoreError::Truncated(format!(
            "payload shorter than declared {d}x{h}x{w} voxel grid"
        ))
    })?;
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(CoreError::Format(
            "volume file has trailing bytes after the declared payload".into(),
        ));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Volume::new(Tensor::new(vec![d, h, w], data)?, thickness, unit, patient_id)
}

/// One manifest row; `label` is `None` for unlabeled pool members.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub patient_id: String,
    pub relative_path: String,
    pub label: Option<bool>,
}

pub fn write_manifest(entries: &[ManifestEntry], path: &Path) -> Result<()> {
    let mut out = String::new();
    for e in entries {
        if e.patient_id.contains(',') || e.relative_path.contains(',') {
            return Err(CoreError::InvalidArgument(format!(
                "manifest fields must not contain commas: {} / {}",
                e.patient_id, e.relative_path
            )));
        }
        let label = match e.label {
            Some(false) => "0",
            Some(true) => "1",
            None => "?",
        };
        out.push_str(&format!("{},{},{}\n", e.patient_id, e.relative_path, label));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path)?;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(CoreError::Format(format!(
                "manifest line {}: expected 3 comma-separated fields, got {}",
                lineno + 1,
                parts.len()
            )));
        }
        let label = match parts[2].trim() {
            "0" => Some(false),
            "1" => Some(true),
            "?" => None,
            other => {
                return Err(CoreError::Format(format!(
                    "manifest line {}: label must be 0, 1 or ?, got '{other}'",
                    lineno + 1
                )))
            }
        };
        entries.push(ManifestEntry {
            patient_id: parts[0].to_string(),
            relative_path: parts[1].to_string(),
            label,
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_volume(rng: &mut ChaCha8Rng, id: &str) -> Volume {
        use rand::Rng;
        let d = rng.random_range(1..6);
        let h = rng.random_range(2..7);
        let w = rng.random_range(2..7);
        let data: Vec<f64> = (0..d * h * w).map(|_| rng.random_range(-1000.0..400.0)).collect();
        Volume::new(
            Tensor::new(vec![d, h, w], data).unwrap(),
            rng.random_range(0.5..2.9),
            IntensityUnit::Hounsfield,
            id.to_string(),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_field_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for i in 0..20 {
            let v = random_volume(&mut rng, &format!("pat{i:03}"));
            let path = dir.path().join(format!("v{i}.svol"));
            write_volume(&v, &path).unwrap();
            let back = read_volume(&path).unwrap();
            assert_eq!(back, v);
        }
    }

    #[test]
    fn corrupted_magic_is_a_magic_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_volume(&mut rng, "p");
        let path = dir.path().join("v.svol");
        write_volume(&v, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_volume(&path), Err(CoreError::BadMagic { .. })));
    }

    #[test]
    fn short_payload_is_a_truncation_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = random_volume(&mut rng, "p");
        let path = dir.path().join("v.svol");
        write_volume(&v, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(read_volume(&path), Err(CoreError::Truncated(_))));
    }

    #[test]
    fn oversized_declared_shape_is_a_shape_overflow() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_volume(&mut rng, "p");
        let path = dir.path().join("v.svol");
        write_volume(&v, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // extents sit right after magic(8) + version(2) + flag(1) + f64(8) + idlen(2) + id
        let offset = 8 + 2 + 1 + 8 + 2 + v.patient_id().len();
        for b in &mut bytes[offset..offset + 12] {
            *b = 0xff;
        }
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_volume(&path),
            Err(CoreError::ShapeOverflow(_))
        ));
    }

    #[test]
    fn manifest_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let entries = vec![
            ManifestEntry {
                patient_id: "a0".into(),
                relative_path: "vols/a0.svol".into(),
                label: Some(true),
            },
            ManifestEntry {
                patient_id: "a1".into(),
                relative_path: "vols/a1.svol".into(),
                label: None,
            },
        ];
        let path = dir.path().join("manifest.txt");
        write_manifest(&entries, &path).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), entries);

        std::fs::write(&path, "a,b\n").unwrap();
        assert!(read_manifest(&path).is_err());
        std::fs::write(&path, "a,b,2\n").unwrap();
        assert!(read_manifest(&path).is_err());
    }
}
