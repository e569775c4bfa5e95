//! Cross-domain experiment harness.
//!
//! Runs a matrix of training conditions over two synthetic scan domains:
//! a supervised baseline trained on the source domain only, a supervised
//! upper bound trained on source plus target labels, and the semi-supervised
//! EM condition that sees the target training patients as an unlabeled pool.
//! Every condition is evaluated on the target domain's held-out test split,
//! with chunk probabilities aggregated to one decision per patient.

pub mod benchmark;

use crate::data::{
    generate_synthetic_domain, preprocess_patient, split_dataset, DatasetSplit, DomainSpec,
    PatientData, PreprocessProfile, SPLIT_80_10_10,
};
use crate::em::{run_em, write_em_trace, EMConfig, UnlabeledSet};
use crate::error::{CoreError, Result};
use crate::label::SoftLabel;
use crate::models::{
    build_alexnet3d, build_cnn2_scaled, predict_proba, train_supervised, Classifier, LabeledSet,
    TrainingConfig,
};
use crate::seed::mix_seed;
use crate::tensor::Tensor;
use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

/// The three columns of the comparison matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionKind {
    SupervisedSourceOnly,
    SupervisedSourcePlusTarget,
    SemiSupervisedEm,
}

impl ConditionKind {
    pub fn name(&self) -> &'static str {
        match self {
            ConditionKind::SupervisedSourceOnly => "supervised_source_only",
            ConditionKind::SupervisedSourcePlusTarget => "supervised_source_plus_target",
            ConditionKind::SemiSupervisedEm => "semi_supervised_em",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArchitectureChoice {
    Cnn2 { scale: f64 },
    AlexNet3d { scale: f64 },
}

impl ArchitectureChoice {
    pub fn name(&self) -> String {
        match self {
            ArchitectureChoice::Cnn2 { scale } => format!("cnn2-{scale}"),
            ArchitectureChoice::AlexNet3d { scale } => format!("alexnet3d-{scale}"),
        }
    }

    fn build(&self, input_shape: [usize; 4], seed: u64) -> Result<Classifier> {
        match self {
            ArchitectureChoice::Cnn2 { scale } => {
                build_cnn2_scaled(input_shape, *scale, seed).map(Classifier::Network)
            }
            ArchitectureChoice::AlexNet3d { scale } => {
                build_alexnet3d(input_shape, *scale, seed).map(Classifier::Network)
            }
        }
    }
}

/// Patient-level decision rule over chunk probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationRule {
    /// Average the positive-class probabilities.
    Mean,
    /// Take the most suspicious chunk.
    Max,
}

/// One cell recipe of the experiment matrix.
#[derive(Debug, Clone)]
pub struct ExperimentCondition {
    pub kind: ConditionKind,
    pub source: DomainSpec,
    pub target: DomainSpec,
    /// Row label for reports, e.g. `a_to_b`.
    pub direction: String,
    pub architecture: ArchitectureChoice,
    pub preprocess: PreprocessProfile,
    pub train: TrainingConfig,
    /// Required for the EM condition, ignored otherwise.
    pub em: Option<EMConfig>,
    pub aggregation: AggregationRule,
}

impl ExperimentCondition {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.source.validate()?;
        self.target.validate()?;
        match (self.kind, &self.em) {
            (ConditionKind::SemiSupervisedEm, None) => Err(CoreError::InvalidArgument(format!(
                "condition {}/{} needs EM settings",
                self.direction,
                self.kind.name()
            ))),
            (ConditionKind::SemiSupervisedEm, Some(em)) => em.validate(),
            _ => Ok(()),
        }
    }
}

/// Fraction of exact matches between two label sequences.
pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(CoreError::InvalidArgument(
            "accuracy of an empty prediction set".into(),
        ));
    }
    if predictions.len() != truth.len() {
        return Err(CoreError::Dimension(format!(
            "{} predictions vs {} truth labels",
            predictions.len(),
            truth.len()
        )));
    }
    let hits = predictions
        .iter()
        .zip(truth.iter())
        .filter(|(p, t)| p == t)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Combines one patient's chunk probabilities into a patient probability and
/// a thresholded label (threshold 0.5; an exact tie resolves to class 0).
pub fn aggregate_patient(
    chunk_probs: &[SoftLabel],
    rule: AggregationRule,
) -> Result<(SoftLabel, usize)> {
    if chunk_probs.is_empty() {
        return Err(CoreError::InvalidArgument(
            "patient has no chunk predictions".into(),
        ));
    }
    let p1 = match rule {
        AggregationRule::Mean => {
            chunk_probs.iter().map(|p| p.p1()).sum::<f64>() / chunk_probs.len() as f64
        }
        AggregationRule::Max => chunk_probs
            .iter()
            .map(|p| p.p1())
            .fold(f64::NEG_INFINITY, f64::max),
    };
    let label = SoftLabel::new(1.0 - p1, p1)?;
    let class = usize::from(label.p1() > 0.5);
    Ok((label, class))
}

/// One accuracy measurement of the matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub architecture: String,
    pub direction: String,
    pub condition: String,
    pub seed: u64,
    /// Rounded to 4 decimal places, the report precision.
    pub accuracy: f64,
    pub trace_ref: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CellFailure {
    pub architecture: String,
    pub direction: String,
    pub condition: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub architecture: String,
    pub direction: String,
    pub condition: String,
    pub mean: f64,
    pub std_dev: f64,
}

/// Accuracy matrix over conditions and seeds, plus per-group statistics.
#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub seeds: Vec<u64>,
    pub cells: Vec<CellResult>,
    pub failures: Vec<CellFailure>,
    pub summaries: Vec<SummaryRow>,
}

impl ExperimentReport {
    /// Mean accuracy of one (architecture, direction, condition) group.
    pub fn mean_accuracy(
        &self,
        architecture: &str,
        direction: &str,
        condition: &str,
    ) -> Option<f64> {
        self.summaries
            .iter()
            .find(|s| {
                s.architecture == architecture
                    && s.direction == direction
                    && s.condition == condition
            })
            .map(|s| s.mean)
    }
}

/// Generates one domain under a run seed and preprocesses every patient.
pub fn domain_patients(
    spec: &DomainSpec,
    run_seed: u64,
    preprocess: &PreprocessProfile,
) -> Result<Vec<PatientData>> {
    let effective = DomainSpec {
        seed: mix_seed(spec.seed, run_seed),
        ..spec.clone()
    };
    generate_synthetic_domain(&effective)?
        .iter()
        .map(|(volume, label)| preprocess_patient(volume, Some(*label), preprocess))
        .collect()
}

/// Flattens patients into a labeled chunk set; every patient must be labeled.
pub fn chunks_to_labeled_set(patients: &[PatientData]) -> Result<LabeledSet> {
    let mut set = LabeledSet::empty();
    for p in patients {
        let label = p.label.ok_or_else(|| {
            CoreError::InvalidArgument(format!("patient {} lacks a label", p.patient_id))
        })?;
        for c in &p.chunks {
            set.push(c.voxels.clone(), SoftLabel::from_class(usize::from(label)));
        }
    }
    Ok(set)
}

/// Flattens patients into an unlabeled pool, dropping any label the caller
/// may still hold. The pool type carries inputs only.
pub fn chunks_to_unlabeled_pool(patients: &[PatientData]) -> Result<UnlabeledSet> {
    let inputs: Vec<Tensor> = patients
        .iter()
        .flat_map(|p| p.chunks.iter().map(|c| c.voxels.clone()))
        .collect();
    UnlabeledSet::new(inputs)
}

fn assert_patient_isolation(train: &[PatientData], eval_split: &[PatientData]) -> Result<()> {
    let train_ids: HashSet<&str> = train.iter().map(|p| p.patient_id.as_str()).collect();
    for p in eval_split {
        if train_ids.contains(p.patient_id.as_str()) {
            return Err(CoreError::InvalidArgument(format!(
                "patient {} appears in both a training set and an evaluation split",
                p.patient_id
            )));
        }
    }
    Ok(())
}

/// Patient-level accuracy of `classifier` over a split.
fn evaluate_patients(
    classifier: &Classifier,
    patients: &[PatientData],
    rule: AggregationRule,
) -> Result<f64> {
    let mut predictions = Vec::with_capacity(patients.len());
    let mut truth = Vec::with_capacity(patients.len());
    for p in patients {
        let label = p.label.ok_or_else(|| {
            CoreError::InvalidArgument(format!("test patient {} lacks a label", p.patient_id))
        })?;
        let chunk_inputs: Vec<Tensor> = p.chunks.iter().map(|c| c.voxels.clone()).collect();
        let probs = predict_proba(classifier, &Tensor::stack(&chunk_inputs)?)?;
        let (_, class) = aggregate_patient(&probs, rule)?;
        predictions.push(class);
        truth.push(usize::from(label));
    }
    accuracy(&predictions, &truth)
}

fn run_cell(
    condition: &ExperimentCondition,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<CellResult> {
    let source = domain_patients(&condition.source, seed, &condition.preprocess)?;
    let target = domain_patients(&condition.target, seed, &condition.preprocess)?;
    let source_split = split_dataset(source, SPLIT_80_10_10, mix_seed(seed, 0x50_u64))?;
    let target_split = split_dataset(target, SPLIT_80_10_10, mix_seed(seed, 0x51_u64))?;
    run_cell_on_splits(condition, seed, &source_split, &target_split, out_dir)
}

/// Runs one cell against already-prepared splits. Exposed for tests that
/// need to tamper with the splits (label hygiene, isolation).
pub fn run_cell_on_splits(
    condition: &ExperimentCondition,
    seed: u64,
    source_split: &DatasetSplit,
    target_split: &DatasetSplit,
    out_dir: Option<&Path>,
) -> Result<CellResult> {
    assert_patient_isolation(&target_split.train, &target_split.test)?;
    assert_patient_isolation(&target_split.validation, &target_split.test)?;

    let input_shape = condition.preprocess.signature.input_shape();
    let classifier = condition
        .architecture
        .build(input_shape, mix_seed(seed, 0xa2c4))?;
    let train_cfg = TrainingConfig {
        seed: mix_seed(seed, 0x7247),
        ..condition.train.clone()
    };
    let source_train = chunks_to_labeled_set(&source_split.train)?;
    let validation = chunks_to_labeled_set(&source_split.validation)?;

    let mut trace_ref = None;
    let trained = match condition.kind {
        ConditionKind::SupervisedSourceOnly => {
            train_supervised(&classifier, &source_train, &train_cfg)?.0
        }
        ConditionKind::SupervisedSourcePlusTarget => {
            let union = source_train.concat(&chunks_to_labeled_set(&target_split.train)?)?;
            train_supervised(&classifier, &union, &train_cfg)?.0
        }
        ConditionKind::SemiSupervisedEm => {
            let em_cfg = EMConfig {
                seed: mix_seed(seed, 0xe111),
                ..condition.em.clone().ok_or_else(|| {
                    CoreError::InvalidArgument("EM condition lacks settings".into())
                })?
            };
            let pool = chunks_to_unlabeled_pool(&target_split.train)?;
            if pool.is_empty() {
                return Err(CoreError::InvalidArgument(
                    "EM condition requires a nonempty target pool".into(),
                ));
            }
            // the labeled data first yields an initial classifier (same fit
            // as the source-only condition); EM then refines it with the pool
            let (initial, _) = train_supervised(&classifier, &source_train, &train_cfg)?;
            let outcome = run_em(&initial, &source_train, &pool, Some(&validation), &em_cfg)
                .map_err(|f| f.error)?;
            if let Some(dir) = out_dir {
                let name = format!(
                    "em_trace_{}_{}_seed{}.csv",
                    condition.architecture.name(),
                    condition.direction,
                    seed
                );
                write_em_trace(&outcome.state, &dir.join(&name))?;
                trace_ref = Some(name);
            }
            outcome.classifier
        }
    };

    let acc = evaluate_patients(&trained, &target_split.test, condition.aggregation)?;
    Ok(CellResult {
        architecture: condition.architecture.name(),
        direction: condition.direction.clone(),
        condition: condition.kind.name().to_string(),
        seed,
        accuracy: (acc * 10_000.0).round() / 10_000.0,
        trace_ref,
    })
}

fn summarize(cells: &[CellResult]) -> Vec<SummaryRow> {
    let mut groups: Vec<(String, String, String, Vec<f64>)> = Vec::new();
    for c in cells {
        match groups
            .iter_mut()
            .find(|(a, d, k, _)| *a == c.architecture && *d == c.direction && *k == c.condition)
        {
            Some((_, _, _, values)) => values.push(c.accuracy),
            None => groups.push((
                c.architecture.clone(),
                c.direction.clone(),
                c.condition.clone(),
                vec![c.accuracy],
            )),
        }
    }
    groups
        .into_iter()
        .map(|(architecture, direction, condition, values)| {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let std_dev = if values.len() < 2 {
                0.0
            } else {
                (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            };
            SummaryRow {
                architecture,
                direction,
                condition,
                mean,
                std_dev,
            }
        })
        .collect()
}

/// Runs every `(condition, seed)` cell: generate both domains, split
/// 80/10/10 at patient level, train per condition, and score the
/// target-domain test split. Cell failures are recorded and the remaining
/// cells still run. When `out_dir` is given, EM traces are persisted there.
pub fn run_experiment_matrix(
    conditions: &[ExperimentCondition],
    seeds: &[u64],
    out_dir: Option<&Path>,
) -> Result<ExperimentReport> {
    if conditions.is_empty() || seeds.is_empty() {
        return Err(CoreError::InvalidArgument(
            "experiment matrix needs at least one condition and one seed".into(),
        ));
    }
    for c in conditions {
        c.validate()?;
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut report = ExperimentReport {
        seeds: seeds.to_vec(),
        ..Default::default()
    };
    for condition in conditions {
        for &seed in seeds {
            match run_cell(condition, seed, out_dir) {
                Ok(cell) => report.cells.push(cell),
                Err(e) => {
                    log::warn!(
                        "cell {}/{}/{}/seed {seed} failed: {e}",
                        condition.architecture.name(),
                        condition.direction,
                        condition.kind.name()
                    );
                    report.failures.push(CellFailure {
                        architecture: condition.architecture.name(),
                        direction: condition.direction.clone(),
                        condition: condition.kind.name().to_string(),
                        seed,
                        error: e.to_string(),
                    });
                }
            }
        }
    }
    report.summaries = summarize(&report.cells);
    Ok(report)
}

/// Renders the human-readable comparison table: one row per
/// (architecture, direction), one column of mean accuracy per condition.
pub fn emit_table(report: &ExperimentReport) -> String {
    let mut row_keys: Vec<(String, String)> = Vec::new();
    let mut col_keys: Vec<String> = Vec::new();
    for s in &report.summaries {
        let row = (s.architecture.clone(), s.direction.clone());
        if !row_keys.contains(&row) {
            row_keys.push(row);
        }
        if !col_keys.contains(&s.condition) {
            col_keys.push(s.condition.clone());
        }
    }

    let mut header: Vec<String> = vec!["architecture".into(), "direction".into()];
    header.extend(col_keys.iter().cloned());
    let mut rows: Vec<Vec<String>> = vec![header];
    for (arch, direction) in &row_keys {
        let mut row = vec![arch.clone(), direction.clone()];
        for col in &col_keys {
            let cell = report
                .mean_accuracy(arch, direction, col)
                .map(|m| format!("{m:.4}"))
                .unwrap_or_else(|| "-".into());
            row.push(cell);
        }
        rows.push(row);
    }

    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

/// Header of the machine-readable cell file.
pub const REPORT_CSV_HEADER: &str = "architecture,direction,condition,seed,accuracy";

/// Renders every cell as comma-separated values under [`REPORT_CSV_HEADER`].
pub fn render_report_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for c in &report.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.4}",
            c.architecture, c.direction, c.condition, c.seed, c.accuracy
        );
    }
    out
}

/// Parses a machine-readable cell file back into cell results.
pub fn parse_report_csv(text: &str) -> Result<Vec<CellResult>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == REPORT_CSV_HEADER => {}
        other => {
            return Err(CoreError::Format(format!(
                "report file must start with '{REPORT_CSV_HEADER}', got {other:?}"
            )))
        }
    }
    let mut cells = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(CoreError::Format(format!(
                "report line {}: expected 5 fields",
                lineno + 2
            )));
        }
        cells.push(CellResult {
            architecture: parts[0].to_string(),
            direction: parts[1].to_string(),
            condition: parts[2].to_string(),
            seed: parts[3]
                .parse()
                .map_err(|_| CoreError::Format(format!("report line {}: bad seed", lineno + 2)))?,
            accuracy: parts[4].parse().map_err(|_| {
                CoreError::Format(format!("report line {}: bad accuracy", lineno + 2))
            })?,
            trace_ref: None,
        });
    }
    Ok(cells)
}

/// Writes `table.txt` and `cells.csv` under `dir`.
pub fn write_report_files(report: &ExperimentReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("table.txt"), emit_table(report))?;
    std::fs::write(dir.join("cells.csv"), render_report_csv(report))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ChunkSignature;
    use crate::em::{LabelMode, MStepMode};

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 0, 1, 1], &[1, 1, 1, 0]).unwrap(), 0.5);
        assert_eq!(accuracy(&[0, 1, 0], &[0, 1, 0]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0], &[0, 1]).unwrap(), 0.0);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn aggregation_examples() {
        let probs = [
            SoftLabel::new(0.8, 0.2).unwrap(),
            SoftLabel::new(0.2, 0.8).unwrap(),
        ];
        let (soft, class) = aggregate_patient(&probs, AggregationRule::Mean).unwrap();
        assert_eq!(soft.p1(), 0.5);
        assert_eq!(class, 0, "exact tie resolves to class 0");

        let (soft, class) = aggregate_patient(&probs, AggregationRule::Max).unwrap();
        assert_eq!(soft.p1(), 0.8);
        assert_eq!(class, 1);

        let single = [SoftLabel::new(0.3, 0.7).unwrap()];
        for rule in [AggregationRule::Mean, AggregationRule::Max] {
            let (soft, class) = aggregate_patient(&single, rule).unwrap();
            assert_eq!(soft.p1(), 0.7);
            assert_eq!(class, 1);
        }
        assert!(aggregate_patient(&[], AggregationRule::Mean).is_err());
    }

    fn tiny_domain(seed: u64, prefix: &str, bias: f64) -> DomainSpec {
        DomainSpec {
            seed,
            patient_count: 24,
            cancer_prevalence: 0.25,
            slice_count_range: (6, 8),
            slice_height: 10,
            slice_width: 10,
            lesion_intensity_offset: 500.0,
            lesion_radius: 2.2,
            intensity_bias: bias,
            noise_scale: 1.0,
            id_prefix: prefix.into(),
        }
    }

    fn tiny_condition(kind: ConditionKind) -> ExperimentCondition {
        ExperimentCondition {
            kind,
            source: tiny_domain(1, "s", 0.0),
            target: tiny_domain(2, "t", 60.0),
            direction: "s_to_t".into(),
            architecture: ArchitectureChoice::Cnn2 { scale: 0.0625 },
            preprocess: PreprocessProfile::with_signature(ChunkSignature::new(6, 8, 8)),
            train: TrainingConfig {
                epochs: 2,
                batch_size: 16,
                learning_rate: 0.05,
                seed: 0,
            },
            em: Some(EMConfig {
                batch_increment: 64,
                label_mode: LabelMode::Soft,
                m_step_epochs: 1,
                m_step_mode: MStepMode::WarmStart,
                convergence_tolerance: 1e-3,
                max_outer_iterations: 2,
                batch_size: 16,
                learning_rate: 0.05,
                seed: 0,
            }),
            aggregation: AggregationRule::Mean,
        }
    }

    #[test]
    fn matrix_produces_expected_cell_count_and_is_deterministic() {
        let conditions = vec![
            tiny_condition(ConditionKind::SupervisedSourceOnly),
            tiny_condition(ConditionKind::SemiSupervisedEm),
        ];
        let seeds = [7, 8];
        let a = run_experiment_matrix(&conditions, &seeds, None).unwrap();
        assert_eq!(a.cells.len(), 4);
        assert!(a.failures.is_empty());
        let b = run_experiment_matrix(&conditions, &seeds, None).unwrap();
        assert_eq!(a.cells, b.cells);
        for c in &a.cells {
            assert!((0.0..=1.0).contains(&c.accuracy));
        }
    }

    #[test]
    fn em_condition_without_settings_is_rejected() {
        let mut c = tiny_condition(ConditionKind::SemiSupervisedEm);
        c.em = None;
        assert!(c.validate().is_err());
        assert!(run_experiment_matrix(&[c], &[1], None).is_err());
    }

    #[test]
    fn em_path_ignores_target_labels_entirely() {
        // flipping every target label must not change what the EM condition
        // trains: the pool type carries no labels
        let condition = tiny_condition(ConditionKind::SemiSupervisedEm);
        let seed = 5;
        let source = domain_patients(&condition.source, seed, &condition.preprocess).unwrap();
        let target = domain_patients(&condition.target, seed, &condition.preprocess).unwrap();
        let source_split = split_dataset(source, SPLIT_80_10_10, 11).unwrap();
        let target_split = split_dataset(target, SPLIT_80_10_10, 12).unwrap();

        let mut flipped = target_split.clone();
        for p in flipped.train.iter_mut().chain(flipped.validation.iter_mut()) {
            p.label = p.label.map(|l| !l);
        }

        let pool_a = chunks_to_unlabeled_pool(&target_split.train).unwrap();
        let pool_b = chunks_to_unlabeled_pool(&flipped.train).unwrap();
        assert_eq!(pool_a.inputs(), pool_b.inputs());

        let a = run_cell_on_splits(&condition, seed, &source_split, &target_split, None).unwrap();
        let b = run_cell_on_splits(&condition, seed, &source_split, &flipped, None).unwrap();
        assert_eq!(a.accuracy, b.accuracy);
    }

    #[test]
    fn test_split_isolation_is_enforced() {
        let condition = tiny_condition(ConditionKind::SupervisedSourceOnly);
        let seed = 5;
        let source = domain_patients(&condition.source, seed, &condition.preprocess).unwrap();
        let target = domain_patients(&condition.target, seed, &condition.preprocess).unwrap();
        let source_split = split_dataset(source, SPLIT_80_10_10, 11).unwrap();
        let mut target_split = split_dataset(target, SPLIT_80_10_10, 12).unwrap();
        // smuggle a test patient into the pool
        target_split.train.push(target_split.test[0].clone());
        let err = run_cell_on_splits(&condition, seed, &source_split, &target_split, None);
        assert!(err.is_err());
    }

    #[test]
    fn table_and_csv_round_trip() {
        let cells = vec![
            CellResult {
                architecture: "cnn2-0.125".into(),
                direction: "a_to_b".into(),
                condition: "supervised_source_only".into(),
                seed: 1,
                accuracy: 0.75,
                trace_ref: None,
            },
            CellResult {
                architecture: "cnn2-0.125".into(),
                direction: "a_to_b".into(),
                condition: "semi_supervised_em".into(),
                seed: 1,
                accuracy: 0.8125,
                trace_ref: None,
            },
        ];
        let report = ExperimentReport {
            seeds: vec![1],
            summaries: summarize(&cells),
            cells,
            failures: vec![],
        };

        let table = emit_table(&report);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 2, "header plus one data row");
        assert!(lines[0].contains("supervised_source_only"));
        assert!(lines[1].contains("0.7500"));

        let csv = render_report_csv(&report);
        let parsed = parse_report_csv(&csv).unwrap();
        assert_eq!(parsed.len(), report.cells.len());
        for (p, c) in parsed.iter().zip(&report.cells) {
            assert_eq!(p.architecture, c.architecture);
            assert_eq!(p.direction, c.direction);
            assert_eq!(p.condition, c.condition);
            assert_eq!(p.seed, c.seed);
            assert_eq!(p.accuracy, c.accuracy);
        }
    }

    #[test]
    fn identical_accuracies_render_without_failing() {
        let cells: Vec<CellResult> = ["supervised_source_only", "semi_supervised_em"]
            .iter()
            .map(|k| CellResult {
                architecture: "cnn2-1".into(),
                direction: "a_to_b".into(),
                condition: k.to_string(),
                seed: 0,
                accuracy: 0.5,
                trace_ref: None,
            })
            .collect();
        let report = ExperimentReport {
            seeds: vec![0],
            summaries: summarize(&cells),
            cells,
            failures: vec![],
        };
        let table = emit_table(&report);
        assert_eq!(table.matches("0.5000").count(), 2);
    }
}
