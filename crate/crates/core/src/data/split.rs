use crate::data::Chunk;
use crate::error::{CoreError, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The standard train/validation/test proportions.
pub const SPLIT_80_10_10: (f64, f64, f64) = (0.8, 0.1, 0.1);

/// Everything the pipeline knows about one patient: identity, an optional
/// binary label, and the preprocessed chunks. Every chunk of a positive
/// patient inherits the positive label.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientData {
    pub patient_id: String,
    pub label: Option<bool>,
    pub chunks: Vec<Chunk>,
}

/// Patient-disjoint train/validation/test partition.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<PatientData>,
    pub validation: Vec<PatientData>,
    pub test: Vec<PatientData>,
}

impl DatasetSplit {
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }
}

/// Largest-remainder apportionment of `n` into three quotas.
fn apportion(n: usize, ratios: (f64, f64, f64)) -> [usize; 3] {
    let quotas = [ratios.0 * n as f64, ratios.1 * n as f64, ratios.2 * n as f64];
    let mut counts = [0usize; 3];
    let mut remainders = [0f64; 3];
    let mut assigned = 0;
    for i in 0..3 {
        counts[i] = quotas[i].floor() as usize;
        remainders[i] = quotas[i] - counts[i] as f64;
        assigned += counts[i];
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| remainders[b].partial_cmp(&remainders[a]).unwrap().then(a.cmp(&b)));
    for &i in order.iter().take(n - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Splits patients into train/validation/test at patient granularity: a
/// seeded shuffle of the patient list followed by contiguous cuts at the
/// ratio boundaries (largest-remainder rounding, ties toward the earlier
/// split).
pub fn split_dataset(
    patients: Vec<PatientData>,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit> {
    if patients.len() < 10 {
        return Err(CoreError::InvalidArgument(format!(
            "split requires at least 10 patients, got {}",
            patients.len()
        )));
    }
    if (ratios.0 + ratios.1 + ratios.2 - 1.0).abs() > 1e-9 {
        return Err(CoreError::InvalidArgument(format!(
            "split ratios must sum to 1 within 1e-9, got {ratios:?}"
        )));
    }
    if ratios.0 < 0.0 || ratios.1 < 0.0 || ratios.2 < 0.0 {
        return Err(CoreError::InvalidArgument("split ratios must be nonnegative".into()));
    }
    let mut shuffled = patients;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let counts = apportion(shuffled.len(), ratios);
    let mut iter = shuffled.into_iter();
    let train: Vec<PatientData> = iter.by_ref().take(counts[0]).collect();
    let validation: Vec<PatientData> = iter.by_ref().take(counts[1]).collect();
    let test: Vec<PatientData> = iter.collect();
    Ok(DatasetSplit {
        train,
        validation,
        test,
    })
}
