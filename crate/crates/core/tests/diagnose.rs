//! Scratch diagnostics for benchmark tuning, ignored by default.

use ssem_core::data::{split_dataset, DomainSpec, PreprocessProfile, SPLIT_80_10_10};
use ssem_core::em::{EMConfig, LabelMode, MStepMode};
use ssem_core::eval::benchmark::BENCHMARK_SIGNATURE;
use ssem_core::eval::{
    run_cell_on_splits, AggregationRule, ArchitectureChoice, ConditionKind, ExperimentCondition,
};
use ssem_core::models::TrainingConfig;
use std::time::Instant;

#[derive(Clone, Debug)]
struct Trial {
    offset_a: f64,
    offset_b: f64,
    radius_a: f64,
    radius_b: f64,
    bias_b: f64,
    noise_a: f64,
    noise_b: f64,
    lr: f64,
    epochs: usize,
    batch: usize,
    em_epochs: usize,
    em_outer: usize,
    em_lr: f64,
    inc_div: usize,
    hard: bool,
    n_a: usize,
    n_b: usize,
}

fn domain(trial: &Trial, which: char) -> DomainSpec {
    let (seed, prefix, n, prevalence, bias, noise, offset, radius) = match which {
        'a' => (0xa11ce, "a", trial.n_a, 0.265, 0.0, trial.noise_a, trial.offset_a, trial.radius_a),
        _ => (0xb0b, "b", trial.n_b, 0.157, trial.bias_b, trial.noise_b, trial.offset_b, trial.radius_b),
    };
    DomainSpec {
        seed,
        patient_count: n,
        cancer_prevalence: prevalence,
        slice_count_range: (10, 10),
        slice_height: 20,
        slice_width: 20,
        lesion_intensity_offset: offset,
        lesion_radius: radius,
        intensity_bias: bias,
        noise_scale: noise,
        id_prefix: prefix.into(),
    }
}

fn run_trial(trial: &Trial, seeds: &[u64]) {
    let pre = PreprocessProfile::with_signature(BENCHMARK_SIGNATURE);
    let train = TrainingConfig {
        epochs: trial.epochs,
        batch_size: trial.batch,
        learning_rate: trial.lr,
        seed: 0,
    };
    let start = Instant::now();
    for (src, tgt, dir) in [('a', 'b', "a_to_b"), ('b', 'a', "b_to_a")] {
        let mut means = Vec::new();
        for kind in [
            ConditionKind::SupervisedSourceOnly,
            ConditionKind::SemiSupervisedEm,
            ConditionKind::SupervisedSourcePlusTarget,
        ] {
            let source = domain(trial, src);
            let target = domain(trial, tgt);
            let pool_hint = target.patient_count * 4 / 5;
            let condition = ExperimentCondition {
                kind,
                source,
                target,
                direction: dir.into(),
                architecture: ArchitectureChoice::Cnn2 { scale: 0.125 },
                preprocess: pre.clone(),
                train: train.clone(),
                em: Some(EMConfig {
                    batch_increment: pool_hint.div_ceil(trial.inc_div).max(1),
                    label_mode: if trial.hard { LabelMode::Hard } else { LabelMode::Soft },
                    m_step_epochs: trial.em_epochs,
                    m_step_mode: MStepMode::WarmStart,
                    convergence_tolerance: 1e-4,
                    max_outer_iterations: trial.em_outer,
                    batch_size: trial.batch,
                    learning_rate: trial.em_lr,
                    seed: 0,
                }),
                aggregation: AggregationRule::Mean,
            };
            let mut total = 0.0;
            for &seed in seeds {
                let sp = ssem_core::eval::domain_patients(&condition.source, seed, &pre).unwrap();
                let tp = ssem_core::eval::domain_patients(&condition.target, seed, &pre).unwrap();
                let ss = split_dataset(sp, SPLIT_80_10_10, ssem_core::seed::mix_seed(seed, 0x50)).unwrap();
                let ts = split_dataset(tp, SPLIT_80_10_10, ssem_core::seed::mix_seed(seed, 0x51)).unwrap();
                let cell = run_cell_on_splits(&condition, seed, &ss, &ts, None).unwrap();
                total += cell.accuracy;
            }
            means.push(total / seeds.len() as f64);
        }
        println!(
            "  {dir}: source_only {:.4}  em {:.4}  plus_target {:.4}   (em-src {:+.4})",
            means[0], means[1], means[2], means[1] - means[0]
        );
    }
    println!("  trial took {:.1?}", start.elapsed());
}

#[test]
#[ignore]
fn sweep() {
    let base = Trial {
        offset_a: 600.0,
        offset_b: 600.0,
        radius_a: 3.2,
        radius_b: 3.2,
        bias_b: 120.0,
        noise_a: 1.0,
        noise_b: 1.4,
        lr: 0.1,
        epochs: 12,
        batch: 8,
        em_epochs: 2,
        em_outer: 7,
        em_lr: 0.1,
        inc_div: 5,
        hard: false,
        n_a: 80,
        n_b: 320,
    };
    let trials = vec![
        Trial { hard: true, em_epochs: 1, em_lr: 0.05, ..base.clone() },
        Trial { hard: true, em_epochs: 1, em_lr: 0.1, em_outer: 9, inc_div: 7, ..base.clone() },
        Trial { hard: true, em_epochs: 2, em_lr: 0.05, ..base.clone() },
        Trial { em_epochs: 4, em_lr: 0.2, em_outer: 9, ..base.clone() },
    ];
    for (i, t) in trials.iter().enumerate() {
        println!("trial {i}: {t:?}");
        run_trial(t, &[31, 47]);
    }
}
