use crate::error::{CoreError, Result};
use crate::label::SoftLabel;
use crate::tensor::{fingerprint_text, ModelParams, Tensor};

/// Lower bound applied to every component variance. Fits clamp to this
/// floor instead of letting a component collapse.
pub const VARIANCE_FLOOR: f64 = 1e-6;

const LN_2PI: f64 = 1.8378770664093453;

/// Two-component diagonal Gaussian mixture coefficients. Component `k`
/// doubles as class `k` when the mixture acts as a classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    weights: [f64; 2],
    means: [Vec<f64>; 2],
    variances: [Vec<f64>; 2],
}

impl GmmParams {
    pub fn new(weights: [f64; 2], means: [Vec<f64>; 2], variances: [Vec<f64>; 2]) -> Result<Self> {
        if weights[0] <= 0.0 || weights[1] <= 0.0 {
            return Err(CoreError::InvalidArgument(format!(
                "mixing weights must be positive, got {weights:?}"
            )));
        }
        if (weights[0] + weights[1] - 1.0).abs() > 1e-12 {
            return Err(CoreError::InvalidArgument(format!(
                "mixing weights must sum to 1 within 1e-12, got {weights:?}"
            )));
        }
        let dim = means[0].len();
        if means[1].len() != dim || variances[0].len() != dim || variances[1].len() != dim {
            return Err(CoreError::Dimension(
                "mean and variance vectors must share one dimension".into(),
            ));
        }
        if dim == 0 {
            return Err(CoreError::InvalidArgument("zero-dimensional mixture".into()));
        }
        for vs in &variances {
            if vs.iter().any(|&v| !(v >= VARIANCE_FLOOR)) {
                return Err(CoreError::InvalidArgument(format!(
                    "variances must be >= {VARIANCE_FLOOR:e}"
                )));
            }
        }
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    /// Symmetric starting point for 1-D data: means at `±spread`, unit
    /// variance, even mixing.
    pub fn symmetric_1d(spread: f64) -> Self {
        Self {
            weights: [0.5, 0.5],
            means: [vec![-spread], vec![spread]],
            variances: [vec![1.0], vec![1.0]],
        }
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64; 2] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>; 2] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>; 2] {
        &self.variances
    }

    /// Largest absolute coefficient difference against `other`.
    pub fn max_abs_difference(&self, other: &GmmParams) -> f64 {
        let mut worst: f64 = (self.weights[0] - other.weights[0]).abs();
        worst = worst.max((self.weights[1] - other.weights[1]).abs());
        for k in 0..2 {
            for (a, b) in self.means[k].iter().zip(other.means[k].iter()) {
                worst = worst.max((a - b).abs());
            }
            for (a, b) in self.variances[k].iter().zip(other.variances[k].iter()) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }
}

/// Diagonal-covariance Gaussian log-density.
fn log_gaussian(x: &[f64], mean: &[f64], variance: &[f64]) -> f64 {
    let mut ll = 0.0;
    for ((xv, m), v) in x.iter().zip(mean.iter()).zip(variance.iter()) {
        let d = xv - m;
        ll += -0.5 * (LN_2PI + v.ln()) - d * d / (2.0 * v);
    }
    ll
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// The Gaussian mixture acting as a generative binary classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmClassifier {
    params: GmmParams,
    tensors: ModelParams,
}

impl GmmClassifier {
    pub fn new(params: GmmParams) -> Self {
        let tensors = tensors_from_params(&params);
        Self { params, tensors }
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    pub fn gmm_params(&self) -> &GmmParams {
        &self.params
    }

    pub fn params_tensors(&self) -> &ModelParams {
        &self.tensors
    }

    pub fn canonical_text(&self) -> String {
        gmm_canonical_text(self.dim())
    }

    pub fn with_params_tensors(&self, tensors: &ModelParams) -> Result<Self> {
        if tensors.fingerprint() != self.tensors.fingerprint() {
            return Err(CoreError::InvalidArgument(
                "mixture fingerprint mismatch".into(),
            ));
        }
        let params = params_from_tensors(tensors, self.dim())?;
        Ok(Self::new(params))
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(CoreError::Dimension(format!(
                "sample of dimension {} fed to a {}-dimensional mixture",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Posterior class probabilities `p(z | x, θ)`.
    ///
    /// Uses the pairwise logistic form `1 / (1 + exp(Δ))`, which is exact
    /// for symmetric evidence and saturates cleanly instead of overflowing.
    pub fn posterior(&self, x: &[f64]) -> Result<SoftLabel> {
        self.check_dim(x)?;
        let l0 = self.params.weights[0].ln()
            + log_gaussian(x, &self.params.means[0], &self.params.variances[0]);
        let l1 = self.params.weights[1].ln()
            + log_gaussian(x, &self.params.means[1], &self.params.variances[1]);
        let p0 = 1.0 / (1.0 + (l1 - l0).exp());
        let p1 = 1.0 / (1.0 + (l0 - l1).exp());
        SoftLabel::new(p0, p1)
    }

    /// Marginal data log-likelihood `ln p(x | θ) = ln Σ_z π_z N(x; θ_z)`.
    pub fn marginal_log_lik(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let l0 = self.params.weights[0].ln()
            + log_gaussian(x, &self.params.means[0], &self.params.variances[0]);
        let l1 = self.params.weights[1].ln()
            + log_gaussian(x, &self.params.means[1], &self.params.variances[1]);
        Ok(log_sum_exp(l0, l1))
    }

    /// Expected complete-data log-likelihood of one sample under label
    /// distribution `q`: `Σ_z q(z) · ln(π_z N(x; θ_z))`.
    pub fn expected_complete_data_log_lik(&self, x: &[f64], q: &SoftLabel) -> Result<f64> {
        self.check_dim(x)?;
        let mut ll = 0.0;
        for k in 0..2 {
            let w = q.prob(k);
            if w == 0.0 {
                continue;
            }
            ll += w
                * (self.params.weights[k].ln()
                    + log_gaussian(x, &self.params.means[k], &self.params.variances[k]));
        }
        Ok(ll)
    }

    /// Closed-form weighted maximum-likelihood update: given per-sample
    /// label distributions, recompute mixing weights, means, and diagonal
    /// variances. Variances are clamped at [`VARIANCE_FLOOR`] (logged), and
    /// a component receiving no mass keeps its previous coefficients.
    pub fn weighted_mle(&self, inputs: &[Tensor], q: &[SoftLabel]) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != q.len() {
            return Err(CoreError::InvalidArgument(
                "weighted fit requires matching nonempty inputs and labels".into(),
            ));
        }
        let dim = self.dim();
        let n = inputs.len() as f64;
        let mut mass = [0.0f64; 2];
        let mut mean_acc = [vec![0.0; dim], vec![0.0; dim]];
        for (x, label) in inputs.iter().zip(q.iter()) {
            self.check_dim(x.data())?;
            for k in 0..2 {
                let w = label.prob(k);
                mass[k] += w;
                for (acc, xv) in mean_acc[k].iter_mut().zip(x.data()) {
                    *acc += w * xv;
                }
            }
        }

        let mut weights = self.params.weights;
        let mut means = self.params.means.clone();
        let mut variances = self.params.variances.clone();
        for k in 0..2 {
            if mass[k] <= f64::EPSILON {
                log::warn!("mixture component {k} received no responsibility mass; keeping previous coefficients");
                continue;
            }
            for (m, acc) in means[k].iter_mut().zip(mean_acc[k].iter()) {
                *m = acc / mass[k];
            }
        }
        let mut var_acc = [vec![0.0; dim], vec![0.0; dim]];
        for (x, label) in inputs.iter().zip(q.iter()) {
            for k in 0..2 {
                let w = label.prob(k);
                if w == 0.0 {
                    continue;
                }
                for ((acc, xv), m) in var_acc[k].iter_mut().zip(x.data()).zip(means[k].iter()) {
                    let d = xv - m;
                    *acc += w * d * d;
                }
            }
        }
        for k in 0..2 {
            if mass[k] <= f64::EPSILON {
                continue;
            }
            weights[k] = mass[k] / n;
            for (v, acc) in variances[k].iter_mut().zip(var_acc[k].iter()) {
                let candidate = acc / mass[k];
                if candidate < VARIANCE_FLOOR {
                    log::warn!(
                        "mixture component {k} variance {candidate:e} clamped to floor {VARIANCE_FLOOR:e}"
                    );
                    *v = VARIANCE_FLOOR;
                } else {
                    *v = candidate;
                }
            }
        }
        // renormalize in case one component kept stale mixing weight
        let total = weights[0] + weights[1];
        weights[0] /= total;
        weights[1] /= total;
        GmmParams::new(weights, means, variances).map(Self::new)
    }
}

pub(crate) fn gmm_canonical_text(dim: usize) -> String {
    format!("gmm components=2 dim={dim}")
}

fn tensors_from_params(params: &GmmParams) -> ModelParams {
    let dim = params.dim();
    let fingerprint = fingerprint_text(&gmm_canonical_text(dim));
    let mut means = Vec::with_capacity(2 * dim);
    means.extend_from_slice(&params.means[0]);
    means.extend_from_slice(&params.means[1]);
    let mut vars = Vec::with_capacity(2 * dim);
    vars.extend_from_slice(&params.variances[0]);
    vars.extend_from_slice(&params.variances[1]);
    ModelParams::new(
        vec![
            (
                "mixing".into(),
                Tensor::new(vec![2], params.weights.to_vec()).expect("static shape"),
            ),
            (
                "means".into(),
                Tensor::new(vec![2, dim], means).expect("static shape"),
            ),
            (
                "variances".into(),
                Tensor::new(vec![2, dim], vars).expect("static shape"),
            ),
        ],
        fingerprint,
    )
}

fn params_from_tensors(tensors: &ModelParams, dim: usize) -> Result<GmmParams> {
    let mixing = tensors
        .tensor("mixing")
        .ok_or_else(|| CoreError::Format("mixture params missing 'mixing'".into()))?;
    let means = tensors
        .tensor("means")
        .ok_or_else(|| CoreError::Format("mixture params missing 'means'".into()))?;
    let vars = tensors
        .tensor("variances")
        .ok_or_else(|| CoreError::Format("mixture params missing 'variances'".into()))?;
    if mixing.len() != 2 || means.shape() != [2, dim] || vars.shape() != [2, dim] {
        return Err(CoreError::Dimension("mixture tensor shapes invalid".into()));
    }
    GmmParams::new(
        [mixing.data()[0], mixing.data()[1]],
        [
            means.data()[..dim].to_vec(),
            means.data()[dim..].to_vec(),
        ],
        [vars.data()[..dim].to_vec(), vars.data()[dim..].to_vec()],
    )
}

/// Textbook unsupervised EM fit of a two-component diagonal mixture.
///
/// Runs exactly `iterations` rounds of responsibilities followed by the
/// weighted coefficient update, recording the total marginal log-likelihood
/// after every round. Kept deliberately self-contained — it is the oracle
/// the generic EM loop is checked against, so it does not share update code
/// with [`GmmClassifier`].
pub fn gmm_fit_closed_form(
    data: &[Vec<f64>],
    init: &GmmParams,
    iterations: usize,
) -> Result<(GmmParams, Vec<f64>)> {
    let dim = init.dim();
    if data.len() < 2 {
        return Err(CoreError::InvalidArgument(
            "mixture fit requires at least 2 points".into(),
        ));
    }
    if !data.iter().any(|x| x != &data[0]) {
        return Err(CoreError::InvalidArgument(
            "mixture fit requires at least 2 distinct points".into(),
        ));
    }
    for x in data {
        if x.len() != dim {
            return Err(CoreError::Dimension(
                "data dimension does not match init".into(),
            ));
        }
    }

    let n = data.len() as f64;
    let mut weights = *init.weights();
    let mut means = init.means().clone();
    let mut variances = init.variances().clone();
    let mut trace = Vec::with_capacity(iterations);

    let log_density = |x: &[f64], mean: &[f64], var: &[f64]| -> f64 {
        let mut ll = 0.0;
        for ((xv, m), v) in x.iter().zip(mean).zip(var) {
            let d = xv - m;
            ll += -0.5 * (LN_2PI + v.ln()) - d * d / (2.0 * v);
        }
        ll
    };

    for _ in 0..iterations {
        // expectation: responsibilities under the current coefficients
        let mut resp = vec![[0.0f64; 2]; data.len()];
        for (r, x) in resp.iter_mut().zip(data.iter()) {
            let l0 = weights[0].ln() + log_density(x, &means[0], &variances[0]);
            let l1 = weights[1].ln() + log_density(x, &means[1], &variances[1]);
            let m = l0.max(l1);
            let e0 = (l0 - m).exp();
            let e1 = (l1 - m).exp();
            let total = e0 + e1;
            r[0] = e0 / total;
            r[1] = e1 / total;
        }

        // maximization: weighted mixing, means, then variances
        for k in 0..2 {
            let mass: f64 = resp.iter().map(|r| r[k]).sum();
            if mass <= f64::EPSILON {
                log::warn!("closed-form fit: component {k} received no mass");
                continue;
            }
            weights[k] = mass / n;
            for d in 0..dim {
                means[k][d] = resp
                    .iter()
                    .zip(data.iter())
                    .map(|(r, x)| r[k] * x[d])
                    .sum::<f64>()
                    / mass;
            }
            for d in 0..dim {
                let acc: f64 = resp
                    .iter()
                    .zip(data.iter())
                    .map(|(r, x)| {
                        let diff = x[d] - means[k][d];
                        r[k] * diff * diff
                    })
                    .sum();
                let candidate = acc / mass;
                variances[k][d] = if candidate < VARIANCE_FLOOR {
                    log::warn!("closed-form fit: variance clamped to floor for component {k}");
                    VARIANCE_FLOOR
                } else {
                    candidate
                };
            }
        }
        let total = weights[0] + weights[1];
        weights[0] /= total;
        weights[1] /= total;

        let ll: f64 = data
            .iter()
            .map(|x| {
                let l0 = weights[0].ln() + log_density(x, &means[0], &variances[0]);
                let l1 = weights[1].ln() + log_density(x, &means[1], &variances[1]);
                let m = l0.max(l1);
                m + ((l0 - m).exp() + (l1 - m).exp()).ln()
            })
            .sum();
        trace.push(ll);
    }

    Ok((GmmParams::new(weights, means, variances)?, trace))
}

/// Seeded 1-D sample of two Gaussian clusters; returns points and true
/// component indices. Shared by tests and the command-line examples.
pub fn two_cluster_1d(
    n: usize,
    centers: (f64, f64),
    std_dev: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    use rand::Rng;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, std_dev).expect("positive std");
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let k = usize::from(rng.random::<bool>());
        let center = if k == 0 { centers.0 } else { centers.1 };
        points.push(vec![center + noise.sample(&mut rng)]);
        labels.push(k);
    }
    (points, labels)
}
