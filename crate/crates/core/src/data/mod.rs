//! Volumetric data handling: intensity normalization, slice resizing,
//! fixed-depth chunking, a bit-exact volume container format, patient-level
//! dataset splits, and a seeded synthetic two-domain generator.

mod io;
mod split;
mod synth;

pub use io::{
    read_manifest, read_volume, write_manifest, write_volume, ManifestEntry, VOLUME_MAGIC,
};
pub use split::{split_dataset, DatasetSplit, PatientData, SPLIT_80_10_10};
pub use synth::{generate_synthetic_domain, DomainSpec};

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

/// Standard lung intensity window: air at the low end, solid bone threshold
/// at the high end.
pub const DEFAULT_HU_WINDOW: (f64, f64) = (-1000.0, 400.0);

/// Scans thicker than this are excluded at construction time.
pub const MAX_SLICE_THICKNESS_MM: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntensityUnit {
    /// Raw CT intensities on the Hounsfield scale.
    Hounsfield,
    /// Window-normalized intensities in `[0, 1]`.
    Normalized,
}

/// A 3-D scalar field of voxel intensities with physical metadata.
/// Voxels are `(depth, height, width)`, depth outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    voxels: Tensor,
    slice_thickness_mm: f64,
    unit: IntensityUnit,
    patient_id: String,
}

impl Volume {
    pub fn new(
        voxels: Tensor,
        slice_thickness_mm: f64,
        unit: IntensityUnit,
        patient_id: String,
    ) -> Result<Self> {
        if voxels.rank() != 3 {
            return Err(CoreError::Dimension(format!(
                "volume voxels must have rank 3, got {}",
                voxels.rank()
            )));
        }
        if !voxels.all_finite() {
            return Err(CoreError::NonFinite(format!("volume {patient_id}")));
        }
        if !(slice_thickness_mm > 0.0) {
            return Err(CoreError::InvalidArgument(
                "slice thickness must be positive".into(),
            ));
        }
        match unit {
            IntensityUnit::Hounsfield => {
                if slice_thickness_mm >= MAX_SLICE_THICKNESS_MM {
                    return Err(CoreError::InvalidArgument(format!(
                        "slice thickness {slice_thickness_mm} mm exceeds the {MAX_SLICE_THICKNESS_MM} mm inclusion bound"
                    )));
                }
            }
            IntensityUnit::Normalized => {
                if voxels.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                    return Err(CoreError::InvalidArgument(
                        "normalized volume has voxels outside [0, 1]".into(),
                    ));
                }
            }
        }
        Ok(Self {
            voxels,
            slice_thickness_mm,
            unit,
            patient_id,
        })
    }

    pub fn voxels(&self) -> &Tensor {
        &self.voxels
    }

    pub fn slice_thickness_mm(&self) -> f64 {
        self.slice_thickness_mm
    }

    pub fn unit(&self) -> IntensityUnit {
        self.unit
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn depth(&self) -> usize {
        self.voxels.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.voxels.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.voxels.shape()[2]
    }

    /// Copies out axial slice `index` as an `(h, w)` tensor.
    pub fn slice(&self, index: usize) -> Result<Tensor> {
        self.voxels.row(index)
    }
}

/// The fixed shape every classifier input chunk must have.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkSignature {
    pub depth: usize,
    pub height: usize,
    pub width: usize,
}

impl ChunkSignature {
    pub const fn new(depth: usize, height: usize, width: usize) -> Self {
        Self {
            depth,
            height,
            width,
        }
    }

    /// Sample shape seen by a classifier: `(depth, height, width, 1)`.
    pub fn input_shape(&self) -> [usize; 4] {
        [self.depth, self.height, self.width, 1]
    }
}

/// A fixed-depth slab of consecutive axial slices, resized in-plane, serving
/// as one classifier input.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    /// Shape `(depth, height, width, 1)`.
    pub voxels: Tensor,
    pub patient_id: String,
    pub index: usize,
}

/// One normalization + chunking recipe applied to every volume of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessProfile {
    pub window_low: f64,
    pub window_high: f64,
    pub signature: ChunkSignature,
    /// Fill for the final partial slab; 0.0 is air after window mapping.
    pub pad_value: f64,
}

impl PreprocessProfile {
    /// The window defaults to the standard lung window and padding to air.
    pub fn with_signature(signature: ChunkSignature) -> Self {
        Self {
            window_low: DEFAULT_HU_WINDOW.0,
            window_high: DEFAULT_HU_WINDOW.1,
            signature,
            pad_value: 0.0,
        }
    }
}

/// Normalizes and chunks one patient's volume. Every chunk inherits the
/// patient label.
pub fn preprocess_patient(
    volume: &Volume,
    label: Option<bool>,
    profile: &PreprocessProfile,
) -> Result<PatientData> {
    let normalized = normalize_hounsfield(volume, profile.window_low, profile.window_high)?;
    let chunks = chunk_volume(&normalized, &profile.signature, profile.pad_value)?;
    Ok(PatientData {
        patient_id: volume.patient_id().to_string(),
        label,
        chunks,
    })
}

/// Clips intensities to `[window_low, window_high]` and maps them affinely
/// onto `[0, 1]`. The volume must still be on the Hounsfield scale.
pub fn normalize_hounsfield(volume: &Volume, window_low: f64, window_high: f64) -> Result<Volume> {
    if volume.unit() == IntensityUnit::Normalized {
        return Err(CoreError::InvalidArgument(format!(
            "volume {} is already normalized",
            volume.patient_id()
        )));
    }
    if !(window_low < window_high) {
        return Err(CoreError::InvalidArgument(format!(
            "window low {window_low} must be below window high {window_high}"
        )));
    }
    let span = window_high - window_low;
    let data: Vec<f64> = volume
        .voxels()
        .data()
        .iter()
        .map(|&v| (v.clamp(window_low, window_high) - window_low) / span)
        .collect();
    Volume::new(
        Tensor::new(volume.voxels().shape().to_vec(), data)?,
        volume.slice_thickness_mm(),
        IntensityUnit::Normalized,
        volume.patient_id().to_string(),
    )
}

/// Corner-aligned bilinear resize of a 2-D slice to exactly `(h, w)`.
///
/// Output grid corners sample the input corners; interior samples use the
/// lerp form `v0 + f·(v1 - v0)`, so constant slices stay exactly constant
/// and an identity resize is bit-identical.
pub fn resize_slice(slice: &Tensor, target: (usize, usize)) -> Result<Tensor> {
    if slice.rank() != 2 {
        return Err(CoreError::Dimension(format!(
            "resize expects a rank-2 slice, got rank {}",
            slice.rank()
        )));
    }
    let (sh, sw) = (slice.shape()[0], slice.shape()[1]);
    if sh < 2 || sw < 2 {
        return Err(CoreError::InvalidArgument(format!(
            "resize source extents must be >= 2, got {sh}x{sw}"
        )));
    }
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return Err(CoreError::InvalidArgument(
            "resize target extents must be positive".into(),
        ));
    }
    let src = slice.data();
    let mut out = vec![0.0; th * tw];
    // lands exactly on a grid point (fraction 0) wherever possible, so grid
    // hits copy the source value instead of interpolating around it
    let pos = |j: usize, t_len: usize, s_len: usize| -> (usize, f64) {
        if t_len == 1 {
            return (0, 0.0);
        }
        let x = j as f64 * (s_len - 1) as f64 / (t_len - 1) as f64;
        let i0 = x.floor() as usize;
        if i0 >= s_len - 1 {
            (s_len - 1, 0.0)
        } else {
            (i0, x - i0 as f64)
        }
    };
    for oy in 0..th {
        let (y0, fy) = pos(oy, th, sh);
        let y1 = (y0 + 1).min(sh - 1);
        for ox in 0..tw {
            let (x0, fx) = pos(ox, tw, sw);
            let x1 = (x0 + 1).min(sw - 1);
            let v00 = src[y0 * sw + x0];
            let v01 = src[y0 * sw + x1];
            let v10 = src[y1 * sw + x0];
            let v11 = src[y1 * sw + x1];
            let top = v00 + fx * (v01 - v00);
            let bottom = v10 + fx * (v11 - v10);
            out[oy * tw + ox] = top + fy * (bottom - top);
        }
    }
    Tensor::new(vec![th, tw], out)
}

/// Splits a normalized volume into non-overlapping slabs of
/// `signature.depth` slices, resizing each slice to the signature's
/// in-plane extents first. The final partial slab is padded to full depth
/// with `pad_value` slices.
pub fn chunk_volume(
    volume: &Volume,
    signature: &ChunkSignature,
    pad_value: f64,
) -> Result<Vec<Chunk>> {
    if volume.unit() != IntensityUnit::Normalized {
        return Err(CoreError::InvalidArgument(format!(
            "chunking requires a normalized volume, got {}",
            volume.patient_id()
        )));
    }
    if volume.depth() == 0 {
        return Err(CoreError::InvalidArgument(format!(
            "volume {} has no slices",
            volume.patient_id()
        )));
    }
    if signature.depth == 0 || signature.height == 0 || signature.width == 0 {
        return Err(CoreError::InvalidArgument(
            "chunk signature extents must be positive".into(),
        ));
    }

    let resized: Vec<Tensor> = (0..volume.depth())
        .map(|z| resize_slice(&volume.slice(z)?, (signature.height, signature.width)))
        .collect::<Result<_>>()?;
    let slice_len = signature.height * signature.width;
    let chunk_count = volume.depth().div_ceil(signature.depth);
    let mut chunks = Vec::with_capacity(chunk_count);
    for c in 0..chunk_count {
        let mut data = Vec::with_capacity(signature.depth * slice_len);
        for z in 0..signature.depth {
            let global = c * signature.depth + z;
            if global < resized.len() {
                data.extend_from_slice(resized[global].data());
            } else {
                data.extend(std::iter::repeat_n(pad_value, slice_len));
            }
        }
        chunks.push(Chunk {
            voxels: Tensor::new(
                vec![signature.depth, signature.height, signature.width, 1],
                data,
            )?,
            patient_id: volume.patient_id().to_string(),
            index: c,
        });
    }
    Ok(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hu_volume(depth: usize, h: usize, w: usize, fill: f64) -> Volume {
        Volume::new(
            Tensor::filled(vec![depth, h, w], fill),
            2.5,
            IntensityUnit::Hounsfield,
            "p0".into(),
        )
        .unwrap()
    }

    #[test]
    fn volume_rejects_thick_slices_and_out_of_range_normals() {
        let v = Tensor::zeros(vec![2, 4, 4]);
        assert!(Volume::new(v.clone(), 3.5, IntensityUnit::Hounsfield, "x".into()).is_err());
        let bad = Tensor::filled(vec![2, 4, 4], 1.5);
        assert!(Volume::new(bad, 2.0, IntensityUnit::Normalized, "x".into()).is_err());
    }

    #[test]
    fn hounsfield_window_endpoints_and_midpoint() {
        let (low, high) = DEFAULT_HU_WINDOW;
        for (hu, expected) in [(-1000.0, 0.0), (400.0, 1.0), (-300.0, 0.5)] {
            let v = hu_volume(1, 2, 2, hu);
            let n = normalize_hounsfield(&v, low, high).unwrap();
            assert_eq!(n.voxels().data()[0], expected, "HU {hu}");
            assert_eq!(n.unit(), IntensityUnit::Normalized);
        }
    }

    #[test]
    fn normalize_rejects_normalized_input_and_bad_window() {
        let v = hu_volume(1, 2, 2, 0.0);
        let n = normalize_hounsfield(&v, -1000.0, 400.0).unwrap();
        assert!(normalize_hounsfield(&n, -1000.0, 400.0).is_err());
        assert!(normalize_hounsfield(&v, 400.0, -1000.0).is_err());
    }

    #[test]
    fn normalize_is_monotone() {
        let values = [-1200.0, -1000.0, -500.0, -10.0, 0.0, 250.0, 400.0, 900.0];
        let v = Volume::new(
            Tensor::new(vec![1, 2, 4], values.to_vec()).unwrap(),
            2.5,
            IntensityUnit::Hounsfield,
            "m".into(),
        )
        .unwrap();
        let n = normalize_hounsfield(&v, -1000.0, 400.0).unwrap();
        for pair in n.voxels().data().windows(2) {
            assert!(pair[0] <= pair[1]);
        }
    }

    #[test]
    fn resize_constant_and_identity() {
        let constant = Tensor::filled(vec![5, 7], 0.3125);
        let out = resize_slice(&constant, (3, 4)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.3125));

        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(2);
        let arbitrary = Tensor::normal(vec![6, 5], 1.0, &mut rng);
        let same = resize_slice(&arbitrary, (6, 5)).unwrap();
        assert_eq!(same, arbitrary);
    }

    #[test]
    fn resize_matches_hand_computed_bilinear_samples() {
        // 4x4 ramp over [0, 1]: value at (r, c) = (r*4 + c) / 15
        let ramp: Vec<f64> = (0..16).map(|i| i as f64 / 15.0).collect();
        let slice = Tensor::new(vec![4, 4], ramp.clone()).unwrap();
        let out = resize_slice(&slice, (2, 2)).unwrap();
        // corner-aligned 2x2 sampling hits the four corners exactly
        assert_eq!(
            out.data(),
            &[ramp[0], ramp[3], ramp[12], ramp[15]],
            "corner-aligned sampling"
        );

        // interior sample: 3x3 target puts the center at source (1.5, 1.5)
        let out = resize_slice(&slice, (3, 3)).unwrap();
        let expected_center = {
            let (v00, v01, v10, v11) = (ramp[5], ramp[6], ramp[9], ramp[10]);
            let top = v00 + 0.5 * (v01 - v00);
            let bottom = v10 + 0.5 * (v11 - v10);
            top + 0.5 * (bottom - top)
        };
        assert_eq!(out.data()[4], expected_center);
    }

    #[test]
    fn resize_rejects_degenerate_extents() {
        let tiny = Tensor::zeros(vec![1, 4]);
        assert!(resize_slice(&tiny, (2, 2)).is_err());
        let ok = Tensor::zeros(vec![4, 4]);
        assert!(resize_slice(&ok, (0, 2)).is_err());
    }

    fn normalized_volume(depth: usize) -> Volume {
        let data: Vec<f64> = (0..depth * 16)
            .map(|i| (i % 97) as f64 / 96.0)
            .collect();
        Volume::new(
            Tensor::new(vec![depth, 4, 4], data).unwrap(),
            2.5,
            IntensityUnit::Normalized,
            "c1".into(),
        )
        .unwrap()
    }

    #[test]
    fn chunk_counts_follow_depth_arithmetic() {
        let sig = ChunkSignature::new(20, 4, 4);
        assert_eq!(chunk_volume(&normalized_volume(160), &sig, 0.0).unwrap().len(), 8);
        let chunks = chunk_volume(&normalized_volume(45), &sig, 0.0).unwrap();
        assert_eq!(chunks.len(), 3);
        // last chunk carries 15 pad slices
        let last = &chunks[2];
        let pad_start = 5 * 16;
        assert!(last.voxels.data()[pad_start..].iter().all(|&v| v == 0.0));
        assert_eq!(chunk_volume(&normalized_volume(20), &sig, 0.0).unwrap().len(), 1);
    }

    #[test]
    fn chunks_reconstruct_the_resized_volume_bit_exactly() {
        let volume = normalized_volume(45);
        let sig = ChunkSignature::new(20, 3, 5);
        let chunks = chunk_volume(&volume, &sig, 0.25).unwrap();
        let mut rebuilt: Vec<f64> = Vec::new();
        for c in &chunks {
            assert_eq!(c.voxels.shape(), &[20, 3, 5, 1]);
            rebuilt.extend_from_slice(c.voxels.data());
        }
        rebuilt.truncate(45 * 15);
        let mut expected: Vec<f64> = Vec::new();
        for z in 0..45 {
            expected.extend_from_slice(resize_slice(&volume.slice(z).unwrap(), (3, 5)).unwrap().data());
        }
        assert_eq!(rebuilt, expected);
    }

    #[test]
    fn chunking_requires_normalized_nonempty_volume() {
        let hu = hu_volume(4, 4, 4, -500.0);
        let sig = ChunkSignature::new(2, 4, 4);
        assert!(chunk_volume(&hu, &sig, 0.0).is_err());
    }
}
