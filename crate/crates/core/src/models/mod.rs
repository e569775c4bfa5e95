//! Probabilistic classifiers: two 3-D CNN architectures built on the tensor
//! kernel and a two-component Gaussian mixture with closed-form updates.
//!
//! All three share the [`Classifier`] front: probability prediction,
//! supervised training on (possibly soft) labels, and a per-sample data
//! log-likelihood used as the objective the EM outer loop tracks.

mod checkpoint;
mod cnn;
mod gmm;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use cnn::{
    build_alexnet3d, build_cnn2, build_cnn2_scaled, init_network_params, NetworkClassifier,
    ALEXNET_MIN_EXTENT,
};
pub use gmm::{gmm_fit_closed_form, two_cluster_1d, GmmClassifier, GmmParams, VARIANCE_FLOOR};

use crate::error::{CoreError, Result};
use crate::label::SoftLabel;
use crate::seed::mix_seed;
use crate::tensor::{backward_pass, sgd_step, ModelParams, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A labeled sample set: per-sample input tensors of one common shape and a
/// (possibly soft) target distribution per sample.
#[derive(Debug, Clone, Default)]
pub struct LabeledSet {
    inputs: Vec<Tensor>,
    targets: Vec<SoftLabel>,
}

impl LabeledSet {
    pub fn new(inputs: Vec<Tensor>, targets: Vec<SoftLabel>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(CoreError::Dimension(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if let Some(first) = inputs.first() {
            for (i, t) in inputs.iter().enumerate() {
                if t.shape() != first.shape() {
                    return Err(CoreError::Dimension(format!(
                        "sample {i} has shape {:?}, expected {:?}",
                        t.shape(),
                        first.shape()
                    )));
                }
            }
        }
        Ok(Self { inputs, targets })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn push(&mut self, input: Tensor, target: SoftLabel) {
        self.inputs.push(input);
        self.targets.push(target);
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

    pub fn targets(&self) -> &[SoftLabel] {
        &self.targets
    }

    /// Concatenation; sample order is `self` then `other`.
    pub fn concat(&self, other: &LabeledSet) -> Result<LabeledSet> {
        let mut inputs = self.inputs.clone();
        inputs.extend(other.inputs.iter().cloned());
        let mut targets = self.targets.clone();
        targets.extend(other.targets.iter().cloned());
        LabeledSet::new(inputs, targets)
    }

    fn gather(&self, indices: &[usize]) -> Result<(Tensor, Vec<SoftLabel>)> {
        let samples: Vec<Tensor> = indices.iter().map(|&i| self.inputs[i].clone()).collect();
        let targets: Vec<SoftLabel> = indices.iter().map(|&i| self.targets[i]).collect();
        Ok((Tensor::stack(&samples)?, targets))
    }
}

/// Mini-batch stochastic gradient descent settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(CoreError::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(CoreError::InvalidArgument("batch size must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(CoreError::InvalidArgument(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// A probabilistic binary classifier. Immutable once built; training
/// produces a new instance.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Network(NetworkClassifier),
    Gmm(GmmClassifier),
}

impl Classifier {
    /// Expected shape of a single input sample.
    pub fn input_signature(&self) -> Vec<usize> {
        match self {
            Classifier::Network(n) => n.input_shape().to_vec(),
            Classifier::Gmm(g) => vec![g.dim()],
        }
    }

    pub fn params(&self) -> &ModelParams {
        match self {
            Classifier::Network(n) => n.params(),
            Classifier::Gmm(g) => g.params_tensors(),
        }
    }

    /// Replaces the coefficient set; the fingerprint must match.
    pub fn with_params(&self, params: ModelParams) -> Result<Classifier> {
        match self {
            Classifier::Network(n) => Ok(Classifier::Network(n.with_params(params)?)),
            Classifier::Gmm(g) => Ok(Classifier::Gmm(g.with_params_tensors(&params)?)),
        }
    }

    /// Fresh coefficients drawn from `seed`, same architecture. For the
    /// Gaussian mixture this is the identity: its fit is closed-form, so
    /// reinitialization has nothing to erase.
    pub fn reinitialized(&self, seed: u64) -> Classifier {
        match self {
            Classifier::Network(n) => Classifier::Network(n.reinitialized(seed)),
            Classifier::Gmm(g) => Classifier::Gmm(g.clone()),
        }
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        let sig = self.input_signature();
        if batch.rank() != sig.len() + 1 || batch.shape()[1..] != sig[..] {
            return Err(CoreError::Dimension(format!(
                "batch shape {:?} does not match input signature {:?} plus a sample axis",
                batch.shape(),
                sig
            )));
        }
        Ok(())
    }
}

/// One valid probability pair per sample of `batch`; deterministic.
pub fn predict_proba(classifier: &Classifier, batch: &Tensor) -> Result<Vec<SoftLabel>> {
    classifier.check_batch(batch)?;
    let n = batch.leading();
    let mut out = Vec::with_capacity(n);
    match classifier {
        Classifier::Network(net) => {
            for i in 0..n {
                out.push(net.forward(&batch.row(i)?)?);
            }
        }
        Classifier::Gmm(g) => {
            for i in 0..n {
                out.push(g.posterior(batch.row(i)?.data())?);
            }
        }
    }
    Ok(out)
}

/// Log-likelihood contribution of one labeled sample under the classifier.
///
/// Discriminative networks return the conditional label log-probability
/// `ln p(y | x, θ)`; the generative mixture returns the complete-data term
/// `ln(π_y · N(x; μ_y, σ_y))`.
pub fn labeled_log_likelihood(classifier: &Classifier, input: &Tensor, target: &SoftLabel) -> Result<f64> {
    match classifier {
        Classifier::Network(net) => {
            let p = net.forward(input)?;
            let mut ll = 0.0;
            for z in 0..2 {
                let t = target.prob(z);
                if t == 0.0 {
                    continue;
                }
                ll += t * p.prob(z).max(crate::tensor::CROSS_ENTROPY_EPSILON).ln();
            }
            Ok(ll)
        }
        Classifier::Gmm(g) => g.expected_complete_data_log_lik(input.data(), target),
    }
}

/// Data log-likelihood of an unlabeled sample under the classifier, used by
/// the EM loop as its per-sample objective term. Networks model no input
/// density, so their term is the expected conditional label log-likelihood
/// under `q`; the mixture reports the marginal `ln p(x | θ)`.
pub fn unlabeled_log_likelihood(classifier: &Classifier, input: &Tensor, q: &SoftLabel) -> Result<f64> {
    match classifier {
        Classifier::Network(net) => {
            let p = net.forward(input)?;
            let mut ll = 0.0;
            for z in 0..2 {
                let w = q.prob(z);
                if w == 0.0 {
                    continue;
                }
                ll += w * p.prob(z).max(crate::tensor::CROSS_ENTROPY_EPSILON).ln();
            }
            Ok(ll)
        }
        Classifier::Gmm(g) => g.marginal_log_lik(input.data()),
    }
}

/// Trains the classifier on a labeled set and returns the new classifier
/// plus the per-epoch mean loss history.
///
/// Networks run seeded mini-batch SGD; the Gaussian mixture performs its
/// single closed-form weighted maximum-likelihood update (epochs beyond the
/// first change nothing, so its history has one entry).
pub fn train_supervised(
    classifier: &Classifier,
    data: &LabeledSet,
    config: &TrainingConfig,
) -> Result<(Classifier, Vec<f64>)> {
    config.validate()?;
    if data.is_empty() {
        return Err(CoreError::InvalidArgument(
            "training requires a nonempty labeled set".into(),
        ));
    }
    match classifier {
        Classifier::Network(net) => {
            let (net, history) = train_network(net, data, config)?;
            Ok((Classifier::Network(net), history))
        }
        Classifier::Gmm(g) => {
            let fitted = g.weighted_mle(data.inputs(), data.targets())?;
            let mut mean_nll = 0.0;
            for (x, t) in data.inputs().iter().zip(data.targets()) {
                mean_nll -= fitted.expected_complete_data_log_lik(x.data(), t)?;
            }
            mean_nll /= data.len() as f64;
            Ok((Classifier::Gmm(fitted), vec![mean_nll]))
        }
    }
}

fn train_network(
    net: &NetworkClassifier,
    data: &LabeledSet,
    config: &TrainingConfig,
) -> Result<(NetworkClassifier, Vec<f64>)> {
    let n = data.len();
    let mut params = net.params().clone();
    let mut history = Vec::with_capacity(config.epochs);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 0x7261_696e));
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let (batch, targets) = data.gather(chunk)?;
            let (loss, grads) = backward_pass(net.layers(), &params, &batch, &targets)?;
            if !loss.is_finite() {
                return Err(CoreError::Diverged(format!(
                    "epoch {epoch}: non-finite loss"
                )));
            }
            params = sgd_step(&params, &grads, config.learning_rate)?;
            epoch_loss += loss * chunk.len() as f64;
        }
        history.push(epoch_loss / n as f64);
    }
    Ok((net.with_params(params)?, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labeled_set_rejects_ragged_shapes() {
        let a = Tensor::zeros(vec![2]);
        let b = Tensor::zeros(vec![3]);
        assert!(LabeledSet::new(vec![a, b], vec![SoftLabel::from_class(0); 2]).is_err());
    }

    #[test]
    fn training_config_rejects_zero_epochs() {
        let cfg = TrainingConfig {
            epochs: 0,
            batch_size: 4,
            learning_rate: 0.1,
            seed: 1,
        };
        assert!(cfg.validate().is_err());
    }
}
