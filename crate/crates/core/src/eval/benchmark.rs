//! The default cross-domain benchmark.
//!
//! Two synthetic lung-screening domains that differ in a global intensity
//! bias and texture amplitude, with domain B four times the size of domain
//! A. Both transfer directions run all three conditions with a reduced-width
//! two-block CNN on 10×16×16 chunks, sized so the full 5-seed matrix
//! finishes on a single desktop core in well under ten minutes.

use crate::data::{ChunkSignature, DomainSpec, PreprocessProfile};
use crate::em::{EMConfig, LabelMode, MStepMode};
use crate::eval::{AggregationRule, ArchitectureChoice, ConditionKind, ExperimentCondition};
use crate::models::TrainingConfig;

/// Chunk signature of the benchmark: 10 slices at 16×16.
pub const BENCHMARK_SIGNATURE: ChunkSignature = ChunkSignature::new(10, 16, 16);

/// Seeds the acceptance runs use.
pub fn benchmark_seeds() -> Vec<u64> {
    vec![101, 202, 303, 404, 505]
}

/// Smaller domain, mirroring the cohort with higher prevalence.
pub fn benchmark_domain_a() -> DomainSpec {
    DomainSpec {
        seed: 0xa11ce,
        patient_count: 160,
        cancer_prevalence: 0.265,
        slice_count_range: (10, 14),
        slice_height: 20,
        slice_width: 20,
        lesion_intensity_offset: 420.0,
        lesion_radius: 2.6,
        intensity_bias: 0.0,
        noise_scale: 1.0,
        id_prefix: "a".into(),
    }
}

/// Larger domain (4× the patients), shifted brighter and noisier, with the
/// lower prevalence.
pub fn benchmark_domain_b() -> DomainSpec {
    DomainSpec {
        seed: 0xb0b,
        patient_count: 640,
        cancer_prevalence: 0.157,
        slice_count_range: (10, 14),
        slice_height: 20,
        slice_width: 20,
        lesion_intensity_offset: 420.0,
        lesion_radius: 2.6,
        intensity_bias: 120.0,
        noise_scale: 1.4,
        id_prefix: "b".into(),
    }
}

/// Supervised settings of the benchmark.
pub fn benchmark_training() -> TrainingConfig {
    TrainingConfig {
        epochs: 10,
        batch_size: 16,
        learning_rate: 0.05,
        seed: 0,
    }
}

/// EM settings of the benchmark: five pool increments, soft labels, two
/// warm-start epochs per maximization step.
pub fn benchmark_em(pool_hint: usize) -> EMConfig {
    EMConfig {
        batch_increment: pool_hint.div_ceil(5).max(1),
        label_mode: LabelMode::Soft,
        m_step_epochs: 2,
        m_step_mode: MStepMode::WarmStart,
        convergence_tolerance: 1e-4,
        max_outer_iterations: 7,
        batch_size: 16,
        learning_rate: 0.05,
        seed: 0,
    }
}

fn direction(
    source: DomainSpec,
    target: DomainSpec,
    name: &str,
    kind: ConditionKind,
) -> ExperimentCondition {
    // pool hint: target training split is 80% of its patients, at roughly
    // one chunk per patient at these slice counts
    let pool_hint = target.patient_count * 4 / 5;
    ExperimentCondition {
        kind,
        source,
        target,
        direction: name.into(),
        architecture: ArchitectureChoice::Cnn2 { scale: 0.125 },
        preprocess: PreprocessProfile::with_signature(BENCHMARK_SIGNATURE),
        train: benchmark_training(),
        em: Some(benchmark_em(pool_hint)),
        aggregation: AggregationRule::Mean,
    }
}

/// All six benchmark conditions: both transfer directions times the three
/// training regimes.
pub fn benchmark_conditions() -> Vec<ExperimentCondition> {
    let (a, b) = (benchmark_domain_a(), benchmark_domain_b());
    let mut conditions = Vec::new();
    for kind in [
        ConditionKind::SupervisedSourceOnly,
        ConditionKind::SupervisedSourcePlusTarget,
        ConditionKind::SemiSupervisedEm,
    ] {
        conditions.push(direction(a.clone(), b.clone(), "a_to_b", kind));
    }
    for kind in [
        ConditionKind::SupervisedSourceOnly,
        ConditionKind::SupervisedSourcePlusTarget,
        ConditionKind::SemiSupervisedEm,
    ] {
        conditions.push(direction(b.clone(), a.clone(), "b_to_a", kind));
    }
    conditions
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_conditions_validate() {
        let conditions = benchmark_conditions();
        assert_eq!(conditions.len(), 6);
        for c in &conditions {
            c.validate().unwrap();
        }
    }

    #[test]
    fn domain_b_is_four_times_domain_a() {
        assert_eq!(
            benchmark_domain_b().patient_count,
            4 * benchmark_domain_a().patient_count
        );
    }
}
