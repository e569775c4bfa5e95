//! Expectation-maximization over probabilistic classifiers.
//!
//! The outer loop alternates an expectation step — predicting a label
//! distribution for every unlabeled sample incorporated so far — with a
//! maximization step that retrains the classifier on the labeled set plus
//! those pseudo-labeled samples. Unlabeled data enters gradually: each
//! iteration advances a cursor through the pool by a configured increment,
//! and every previously incorporated sample is re-labeled under the current
//! model before retraining.

use crate::error::{CoreError, Result};
use crate::label::SoftLabel;
use crate::models::{
    labeled_log_likelihood, predict_proba, train_supervised, unlabeled_log_likelihood, Classifier,
    LabeledSet, TrainingConfig,
};
use crate::seed::mix_seed;
use crate::tensor::Tensor;
use std::fmt::Write as _;
use std::path::Path;

/// How expectation-step outputs become training targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMode {
    /// Use the predicted distribution as-is.
    Soft,
    /// One-hot of the argmax; exact ties resolve to class 0 and are logged.
    Hard,
}

/// Parameter treatment at each maximization step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MStepMode {
    /// Continue training from the previous iteration's coefficients.
    WarmStart,
    /// Reinitialize from `seed ^ iteration` before training.
    FromScratch,
}

/// Settings for the EM outer loop.
#[derive(Debug, Clone, PartialEq)]
pub struct EMConfig {
    /// Unlabeled samples incorporated per outer iteration.
    pub batch_increment: usize,
    pub label_mode: LabelMode,
    pub m_step_epochs: usize,
    pub m_step_mode: MStepMode,
    /// Once the cursor covers the pool, the loop stops when the objective
    /// moves less than this between consecutive iterations.
    pub convergence_tolerance: f64,
    pub max_outer_iterations: usize,
    /// Mini-batch size of the maximization step.
    pub batch_size: usize,
    /// Learning rate of the maximization step.
    pub learning_rate: f64,
    pub seed: u64,
}

impl EMConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_increment == 0 {
            return Err(CoreError::InvalidArgument(
                "batch_increment must be >= 1".into(),
            ));
        }
        if !(self.convergence_tolerance > 0.0) {
            return Err(CoreError::InvalidArgument(
                "convergence_tolerance must be > 0".into(),
            ));
        }
        if self.max_outer_iterations == 0 {
            return Err(CoreError::InvalidArgument(
                "max_outer_iterations must be >= 1".into(),
            ));
        }
        self.m_step_training_config(1).validate()
    }

    /// The supervised-training settings the maximization step of outer
    /// iteration `t` runs with. Exposed so that reduction identities
    /// (empty-pool EM versus plain supervised training, one-shot hard EM
    /// versus pseudo-label self-training) can be stated exactly.
    pub fn m_step_training_config(&self, iteration: usize) -> TrainingConfig {
        TrainingConfig {
            epochs: self.m_step_epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: mix_seed(self.seed, iteration as u64),
        }
    }
}

/// An ordered pool of unlabeled samples. Carries inputs only — there is no
/// label field to leak, which keeps cross-domain hygiene a construction-time
/// property rather than a runtime promise.
#[derive(Debug, Clone, Default)]
pub struct UnlabeledSet {
    inputs: Vec<Tensor>,
}

impl UnlabeledSet {
    pub fn new(inputs: Vec<Tensor>) -> Result<Self> {
        if let Some(first) = inputs.first() {
            for (i, t) in inputs.iter().enumerate() {
                if t.shape() != first.shape() {
                    return Err(CoreError::Dimension(format!(
                        "pool sample {i} has shape {:?}, expected {:?}",
                        t.shape(),
                        first.shape()
                    )));
                }
            }
        }
        Ok(Self { inputs })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Tensor] {
        &self.inputs
    }
}

/// One row of the EM trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EmIteration {
    pub iteration: usize,
    pub cursor: usize,
    pub q: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
}

/// Progress of an EM run: iteration counter, pool cursor, objective
/// history, and the current labels of every incorporated pool sample.
#[derive(Debug, Clone, Default)]
pub struct EMState {
    pub iteration: usize,
    pub cursor: usize,
    pub q_history: Vec<f64>,
    /// Labels of `pool[..cursor]` under the current classifier.
    pub pool_labels: Vec<SoftLabel>,
    pub records: Vec<EmIteration>,
}

impl EMState {
    /// Latest objective value, if any iteration completed.
    pub fn q(&self) -> Option<f64> {
        self.q_history.last().copied()
    }
}

/// A completed EM run.
#[derive(Debug, Clone)]
pub struct EmOutcome {
    pub classifier: Classifier,
    pub state: EMState,
    /// Final label for every pool sample in pool order; samples the cursor
    /// never reached are labeled by the final classifier.
    pub pool_labels: Vec<SoftLabel>,
}

/// A failed EM run, carrying the state reached so far for post-mortem.
#[derive(Debug)]
pub struct EmFailure {
    pub error: CoreError,
    pub partial: EMState,
}

impl std::fmt::Display for EmFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "EM failed at iteration {} (cursor {}): {}",
            self.partial.iteration, self.partial.cursor, self.error
        )
    }
}

impl std::error::Error for EmFailure {}

/// Expectation step: a label distribution per sample of `batch` under the
/// current classifier. Soft mode returns predictions verbatim; hard mode
/// returns one-hot argmax labels, logging exact ties (resolved to class 0).
pub fn e_step(classifier: &Classifier, batch: &Tensor, mode: LabelMode) -> Result<Vec<SoftLabel>> {
    let predicted = predict_proba(classifier, batch)?;
    match mode {
        LabelMode::Soft => Ok(predicted),
        LabelMode::Hard => Ok(predicted
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if p.is_tie() {
                    log::debug!("expectation step: tie at sample {i} resolved to class 0");
                }
                p.hardened()
            })
            .collect()),
    }
}

/// Expected log-likelihood of the labels under the classifier's predictive
/// distribution: the sum over labeled samples of `ln p(y | x, θ)` plus the
/// sum over pseudo-labeled samples of `Σ_z q(z) · ln p(z | x, θ)`, with
/// probabilities clamped at 1e-12. Equals the negative total cross-entropy.
pub fn expected_log_likelihood(
    classifier: &Classifier,
    labeled: &LabeledSet,
    pseudo_inputs: &[Tensor],
    pseudo_labels: &[SoftLabel],
) -> Result<f64> {
    if pseudo_inputs.len() != pseudo_labels.len() {
        return Err(CoreError::Dimension(format!(
            "{} pseudo-labeled inputs but {} labels",
            pseudo_inputs.len(),
            pseudo_labels.len()
        )));
    }
    if labeled.is_empty() && pseudo_inputs.is_empty() {
        return Err(CoreError::InvalidArgument(
            "expected log-likelihood of an empty sample set".into(),
        ));
    }
    let eps = crate::tensor::CROSS_ENTROPY_EPSILON;
    let mut total = 0.0;
    if !labeled.is_empty() {
        let batch = Tensor::stack(labeled.inputs())?;
        for (p, t) in predict_proba(classifier, &batch)?
            .iter()
            .zip(labeled.targets())
        {
            for z in 0..2 {
                if t.prob(z) > 0.0 {
                    total += t.prob(z) * p.prob(z).max(eps).ln();
                }
            }
        }
    }
    if !pseudo_inputs.is_empty() {
        let batch = Tensor::stack(pseudo_inputs)?;
        for (p, q) in predict_proba(classifier, &batch)?.iter().zip(pseudo_labels) {
            for z in 0..2 {
                if q.prob(z) > 0.0 {
                    total += q.prob(z) * p.prob(z).max(eps).ln();
                }
            }
        }
    }
    Ok(total)
}

/// The per-iteration objective the loop records: each classifier's own data
/// log-likelihood over the labeled set and the incorporated pool. For
/// discriminative networks this coincides with [`expected_log_likelihood`];
/// the generative mixture contributes its complete-data and marginal terms,
/// so with a mixture classifier the recorded trace is the textbook mixture
/// log-likelihood.
pub fn em_objective(
    classifier: &Classifier,
    labeled: &LabeledSet,
    pool_inputs: &[Tensor],
    pool_labels: &[SoftLabel],
) -> Result<f64> {
    let mut total = 0.0;
    for (x, t) in labeled.inputs().iter().zip(labeled.targets()) {
        total += labeled_log_likelihood(classifier, x, t)?;
    }
    for (x, q) in pool_inputs.iter().zip(pool_labels) {
        total += unlabeled_log_likelihood(classifier, x, q)?;
    }
    Ok(total)
}

/// Maximization step: retrains the classifier on the labeled set united
/// with the pseudo-labeled samples, which contribute cross-entropy against
/// their label distributions. Labeled and pseudo-labeled samples weigh
/// equally; sample order is labeled set first, then pool order.
pub fn m_step(
    classifier: &Classifier,
    labeled: &LabeledSet,
    pseudo_inputs: &[Tensor],
    pseudo_labels: &[SoftLabel],
    config: &EMConfig,
    iteration: usize,
) -> Result<Classifier> {
    if labeled.is_empty() && pseudo_inputs.is_empty() {
        return Err(CoreError::InvalidArgument(
            "maximization step over an empty combined set".into(),
        ));
    }
    let pseudo = LabeledSet::new(pseudo_inputs.to_vec(), pseudo_labels.to_vec())?;
    let union = labeled.concat(&pseudo)?;
    let base = match config.m_step_mode {
        MStepMode::WarmStart => classifier.clone(),
        MStepMode::FromScratch => classifier.reinitialized(config.seed ^ iteration as u64),
    };
    let (trained, _) = train_supervised(&base, &union, &config.m_step_training_config(iteration))?;
    Ok(trained)
}

fn label_accuracy(classifier: &Classifier, set: &LabeledSet) -> Result<f64> {
    if set.is_empty() {
        return Ok(f64::NAN);
    }
    let batch = Tensor::stack(set.inputs())?;
    let predictions = predict_proba(classifier, &batch)?;
    let hits = predictions
        .iter()
        .zip(set.targets())
        .filter(|(p, t)| p.argmax() == t.argmax())
        .count();
    Ok(hits as f64 / set.len() as f64)
}

/// Runs the EM outer loop.
///
/// Per iteration: advance the cursor by `batch_increment`, predict labels
/// for every incorporated pool sample, retrain on labeled ∪ incorporated,
/// re-label the incorporated samples under the new classifier, and record
/// the objective. The loop stops once the cursor covers the pool and the
/// objective moved less than the tolerance (or at `max_outer_iterations`).
/// With an empty pool it performs exactly one maximization step, which
/// makes it equivalent to plain supervised training.
///
/// The labeled set may be empty when the pool is not: the incoming
/// classifier's coefficients then seed the first expectation step, which is
/// the fully unsupervised special case.
///
/// `validation` only feeds the per-iteration accuracy column of the trace.
pub fn run_em(
    classifier: &Classifier,
    labeled: &LabeledSet,
    pool: &UnlabeledSet,
    validation: Option<&LabeledSet>,
    config: &EMConfig,
) -> std::result::Result<EmOutcome, Box<EmFailure>> {
    let mut state = EMState::default();
    match run_em_inner(classifier, labeled, pool, validation, config, &mut state) {
        Ok((classifier, pool_labels)) => Ok(EmOutcome {
            classifier,
            state,
            pool_labels,
        }),
        Err(error) => Err(Box::new(EmFailure {
            error,
            partial: state,
        })),
    }
}

fn run_em_inner(
    classifier: &Classifier,
    labeled: &LabeledSet,
    pool: &UnlabeledSet,
    validation: Option<&LabeledSet>,
    config: &EMConfig,
    state: &mut EMState,
) -> Result<(Classifier, Vec<SoftLabel>)> {
    config.validate()?;
    if labeled.is_empty() && pool.is_empty() {
        return Err(CoreError::InvalidArgument(
            "EM requires a labeled set or a nonempty pool".into(),
        ));
    }

    let mut current = classifier.clone();
    loop {
        let iteration = state.iteration + 1;
        let cursor = (state.cursor + config.batch_increment).min(pool.len());
        let incorporated = &pool.inputs()[..cursor];

        // expectation under the pre-update classifier
        let q = if cursor > 0 {
            e_step(&current, &Tensor::stack(incorporated)?, config.label_mode)?
        } else {
            Vec::new()
        };

        current = m_step(&current, labeled, incorporated, &q, config, iteration)?;

        // re-estimate incorporated labels under the updated classifier
        let labels = if cursor > 0 {
            e_step(&current, &Tensor::stack(incorporated)?, config.label_mode)?
        } else {
            Vec::new()
        };
        let q_value = em_objective(&current, labeled, incorporated, &labels)?;
        if !q_value.is_finite() {
            return Err(CoreError::NonFinite("EM objective".into()));
        }

        let train_accuracy = label_accuracy(&current, labeled)?;
        let validation_accuracy = match validation {
            Some(v) => label_accuracy(&current, v)?,
            None => f64::NAN,
        };

        state.iteration = iteration;
        state.cursor = cursor;
        state.q_history.push(q_value);
        state.pool_labels = labels;
        state.records.push(EmIteration {
            iteration,
            cursor,
            q: q_value,
            train_accuracy,
            validation_accuracy,
        });

        if pool.is_empty() {
            break;
        }
        if cursor == pool.len() && state.q_history.len() >= 2 {
            let n = state.q_history.len();
            if (state.q_history[n - 1] - state.q_history[n - 2]).abs()
                < config.convergence_tolerance
            {
                break;
            }
        }
        if iteration >= config.max_outer_iterations {
            break;
        }
    }

    // labels for the whole pool: stored ones for the incorporated prefix,
    // fresh predictions for anything the cursor never reached
    let mut pool_labels = state.pool_labels.clone();
    if state.cursor < pool.len() {
        let rest = &pool.inputs()[state.cursor..];
        pool_labels.extend(e_step(&current, &Tensor::stack(rest)?, config.label_mode)?);
    }
    Ok((current, pool_labels))
}

/// Writes the per-iteration trace: one comma-separated line per outer
/// iteration with fields `iteration,cursor,q,train_accuracy,validation_accuracy`.
pub fn write_em_trace(state: &EMState, path: &Path) -> Result<()> {
    std::fs::write(path, render_em_trace(state))?;
    Ok(())
}

/// Renders the trace in its file format.
pub fn render_em_trace(state: &EMState) -> String {
    let mut out = String::new();
    for r in &state.records {
        let _ = writeln!(
            out,
            "{},{},{:.9},{:.4},{:.4}",
            r.iteration, r.cursor, r.q, r.train_accuracy, r.validation_accuracy
        );
    }
    out
}
