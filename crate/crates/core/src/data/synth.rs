use crate::data::{IntensityUnit, Volume};
use crate::error::{CoreError, Result};
use crate::seed::mix_seed;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Typical lung parenchyma intensity the synthetic background fluctuates
/// around, before any domain bias.
const LUNG_BACKGROUND_HU: f64 = -750.0;

/// Base amplitude of the background texture before smoothing.
const NOISE_AMPLITUDE_HU: f64 = 150.0;

const SYNTH_SLICE_THICKNESS_MM: f64 = 2.5;

/// Recipe for one synthetic scan domain. Two specs with different bias and
/// noise parameters stand in for two related acquisition cohorts.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub seed: u64,
    pub patient_count: usize,
    /// Fraction of patients that receive lesions; the positive count is the
    /// nearest integer (half rounds up).
    pub cancer_prevalence: f64,
    /// Inclusive range of axial slice counts per patient.
    pub slice_count_range: (usize, usize),
    /// Native in-plane extents before pipeline resizing.
    pub slice_height: usize,
    pub slice_width: usize,
    /// Peak intensity a lesion adds above the local background.
    pub lesion_intensity_offset: f64,
    /// Mean lesion radius in voxels; 0 disables lesions entirely.
    pub lesion_radius: f64,
    /// Domain shift: constant intensity added to every voxel.
    pub intensity_bias: f64,
    /// Domain shift: multiplier on the background texture amplitude.
    pub noise_scale: f64,
    /// Prefix of generated patient identifiers.
    pub id_prefix: String,
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.patient_count == 0 {
            return Err(CoreError::InvalidArgument("patient count must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.cancer_prevalence) {
            return Err(CoreError::InvalidArgument(format!(
                "prevalence must be in [0, 1], got {}",
                self.cancer_prevalence
            )));
        }
        let (low, high) = self.slice_count_range;
        if low < 1 || low > high {
            return Err(CoreError::InvalidArgument(format!(
                "slice count range must satisfy 1 <= low <= high, got ({low}, {high})"
            )));
        }
        if self.slice_height < 2 || self.slice_width < 2 {
            return Err(CoreError::InvalidArgument(
                "native slice extents must be >= 2".into(),
            ));
        }
        if self.lesion_radius < 0.0 || self.noise_scale < 0.0 {
            return Err(CoreError::InvalidArgument(
                "lesion radius and noise scale must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Number of positive patients: nearest integer to `prevalence · count`.
    pub fn positive_count(&self) -> usize {
        ((self.cancer_prevalence * self.patient_count as f64).round() as usize)
            .min(self.patient_count)
    }
}

/// In-place separable box blur of width 3 along each axis of a
/// `(d, h, w)` grid.
fn smooth_3d(data: &mut [f64], d: usize, h: usize, w: usize) {
    let idx = |z: usize, y: usize, x: usize| (z * h + y) * w + x;
    let mut scratch = data.to_vec();
    // depth axis
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let lo = z.saturating_sub(1);
                let hi = (z + 1).min(d - 1);
                let mut acc = 0.0;
                for zz in lo..=hi {
                    acc += data[idx(zz, y, x)];
                }
                scratch[idx(z, y, x)] = acc / (hi - lo + 1) as f64;
            }
        }
    }
    data.copy_from_slice(&scratch);
    // height axis
    for z in 0..d {
        for y in 0..h {
            let lo = y.saturating_sub(1);
            let hi = (y + 1).min(h - 1);
            for x in 0..w {
                let mut acc = 0.0;
                for yy in lo..=hi {
                    acc += data[idx(z, yy, x)];
                }
                scratch[idx(z, y, x)] = acc / (hi - lo + 1) as f64;
            }
        }
    }
    data.copy_from_slice(&scratch);
    // width axis
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let lo = x.saturating_sub(1);
                let hi = (x + 1).min(w - 1);
                let mut acc = 0.0;
                for xx in lo..=hi {
                    acc += data[idx(z, y, xx)];
                }
                scratch[idx(z, y, x)] = acc / (hi - lo + 1) as f64;
            }
        }
    }
    data.copy_from_slice(&scratch);
}

/// Adds one smooth ellipsoidal intensity bump centered at `center` with
/// per-axis radii `radii`; the bump peaks at `offset` and falls off
/// quadratically to zero at the ellipsoid surface.
fn insert_lesion(
    data: &mut [f64],
    dims: (usize, usize, usize),
    center: (f64, f64, f64),
    radii: (f64, f64, f64),
    offset: f64,
) {
    let (d, h, w) = dims;
    if radii.0 <= 0.0 || radii.1 <= 0.0 || radii.2 <= 0.0 {
        return;
    }
    let z_lo = ((center.0 - radii.0).floor().max(0.0)) as usize;
    let z_hi = ((center.0 + radii.0).ceil() as usize).min(d.saturating_sub(1));
    let y_lo = ((center.1 - radii.1).floor().max(0.0)) as usize;
    let y_hi = ((center.1 + radii.1).ceil() as usize).min(h.saturating_sub(1));
    let x_lo = ((center.2 - radii.2).floor().max(0.0)) as usize;
    let x_hi = ((center.2 + radii.2).ceil() as usize).min(w.saturating_sub(1));
    for z in z_lo..=z_hi {
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                let dz = (z as f64 - center.0) / radii.0;
                let dy = (y as f64 - center.1) / radii.1;
                let dx = (x as f64 - center.2) / radii.2;
                let r2 = dz * dz + dy * dy + dx * dx;
                if r2 < 1.0 {
                    data[(z * h + y) * w + x] += offset * (1.0 - r2);
                }
            }
        }
    }
}

fn generate_patient(spec: &DomainSpec, index: usize, positive: bool) -> Result<Volume> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 0x9e00_0000 + index as u64));
    let (low, high) = spec.slice_count_range;
    let depth = rng.random_range(low..=high);
    let (h, w) = (spec.slice_height, spec.slice_width);

    // background: biased lung field plus smoothed texture
    let amplitude = NOISE_AMPLITUDE_HU * spec.noise_scale;
    let mut data: Vec<f64> = (0..depth * h * w)
        .map(|_| LUNG_BACKGROUND_HU + spec.intensity_bias + rng.random_range(-amplitude..=amplitude))
        .collect();
    smooth_3d(&mut data, depth, h, w);

    if positive && spec.lesion_radius > 0.0 {
        let count = rng.random_range(1..=3);
        for _ in 0..count {
            let center = (
                rng.random_range(0.0..depth as f64),
                rng.random_range(0.0..h as f64),
                rng.random_range(0.0..w as f64),
            );
            let base = spec.lesion_radius * rng.random_range(0.7..=1.3);
            let radii = (
                base * rng.random_range(0.8..=1.2),
                base * rng.random_range(0.8..=1.2),
                base * rng.random_range(0.8..=1.2),
            );
            insert_lesion(
                &mut data,
                (depth, h, w),
                center,
                radii,
                spec.lesion_intensity_offset,
            );
        }
    }

    Volume::new(
        Tensor::new(vec![depth, h, w], data)?,
        SYNTH_SLICE_THICKNESS_MM,
        IntensityUnit::Hounsfield,
        format!("{}{index:04}", spec.id_prefix),
    )
}

/// Generates one synthetic domain: per patient a lung-like background field
/// (smoothed seeded noise plus the domain intensity bias) with 1–3 bright
/// ellipsoidal lesions inserted for positive patients. Fully deterministic
/// per seed; the positive count follows the prevalence exactly.
pub fn generate_synthetic_domain(spec: &DomainSpec) -> Result<Vec<(Volume, bool)>> {
    spec.validate()?;
    let n = spec.patient_count;
    let positives = spec.positive_count();
    let mut order: Vec<usize> = (0..n).collect();
    let mut label_rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 0x1abe_15));
    order.shuffle(&mut label_rng);
    let mut is_positive = vec![false; n];
    for &i in order.iter().take(positives) {
        is_positive[i] = true;
    }
    (0..n)
        .map(|i| generate_patient(spec, i, is_positive[i]).map(|v| (v, is_positive[i])))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_spec() -> DomainSpec {
        DomainSpec {
            seed: 1234,
            patient_count: 20,
            cancer_prevalence: 0.265,
            slice_count_range: (8, 12),
            slice_height: 16,
            slice_width: 16,
            lesion_intensity_offset: 450.0,
            lesion_radius: 2.5,
            intensity_bias: 0.0,
            noise_scale: 1.0,
            id_prefix: "s".into(),
        }
    }

    #[test]
    fn positive_count_follows_prevalence_exactly() {
        let spec = DomainSpec {
            patient_count: 200,
            ..base_spec()
        };
        assert_eq!(spec.positive_count(), 53);
        let data = generate_synthetic_domain(&spec).unwrap();
        assert_eq!(data.iter().filter(|(_, l)| *l).count(), 53);
    }

    #[test]
    fn same_spec_is_bit_identical() {
        let spec = base_spec();
        let a = generate_synthetic_domain(&spec).unwrap();
        let b = generate_synthetic_domain(&spec).unwrap();
        assert_eq!(a.len(), b.len());
        for ((va, la), (vb, lb)) in a.iter().zip(b.iter()) {
            assert_eq!(la, lb);
            assert_eq!(va, vb);
        }
    }

    #[test]
    fn zero_radius_removes_any_label_signal() {
        let spec = DomainSpec {
            lesion_radius: 0.0,
            ..base_spec()
        };
        let data = generate_synthetic_domain(&spec).unwrap();
        // with lesions disabled, positives must be plain background fields:
        // every voxel stays below the background ceiling
        let ceiling = LUNG_BACKGROUND_HU + NOISE_AMPLITUDE_HU + 1.0;
        for (v, _) in &data {
            assert!(v.voxels().data().iter().all(|&x| x < ceiling));
        }
    }

    #[test]
    fn positive_patients_show_bright_voxels() {
        let data = generate_synthetic_domain(&base_spec()).unwrap();
        let threshold = LUNG_BACKGROUND_HU + NOISE_AMPLITUDE_HU + 100.0;
        let mut bright_positives = 0;
        let mut total_positives = 0;
        for (v, label) in &data {
            if *label {
                total_positives += 1;
                if v.voxels().data().iter().any(|&x| x > threshold) {
                    bright_positives += 1;
                }
            } else {
                assert!(
                    v.voxels().data().iter().all(|&x| x <= threshold),
                    "negative patient {} has lesion-bright voxels",
                    v.patient_id()
                );
            }
        }
        assert!(total_positives > 0);
        assert_eq!(bright_positives, total_positives);
    }

    #[test]
    fn slice_counts_respect_the_range() {
        let data = generate_synthetic_domain(&base_spec()).unwrap();
        for (v, _) in &data {
            assert!((8..=12).contains(&v.depth()));
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        let mut spec = base_spec();
        spec.cancer_prevalence = 1.5;
        assert!(generate_synthetic_domain(&spec).is_err());
        let mut spec = base_spec();
        spec.slice_count_range = (0, 4);
        assert!(generate_synthetic_domain(&spec).is_err());
    }
}
