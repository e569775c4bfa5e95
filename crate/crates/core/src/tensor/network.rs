use crate::error::{CoreError, Result};
use crate::label::SoftLabel;
use crate::tensor::layers::{
    conv3d_backward, conv3d_forward, cross_entropy_loss, dense_backward, dense_forward,
    maxpool3d_backward, maxpool3d_with_argmax, relu, relu_backward, softmax, LayerKind, LayerSpec,
};
use crate::tensor::Tensor;

/// Probe count per parameter tensor used by [`finite_difference_check`].
const FD_PROBES_PER_TENSOR: usize = 6;

/// FNV-1a hash of a canonical architecture description.
pub fn fingerprint_text(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in text.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// The full trainable coefficient set of a classifier: named parameter
/// tensors in a fixed order plus a fingerprint of the architecture they
/// belong to. Loading params under a different fingerprint is rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    entries: Vec<(String, Tensor)>,
    fingerprint: u64,
}

impl ModelParams {
    pub fn new(entries: Vec<(String, Tensor)>, fingerprint: u64) -> Self {
        Self {
            entries,
            fingerprint,
        }
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    /// Total scalar parameter count.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }
}

/// One gradient tensor per trainable parameter tensor, shape-matched and in
/// the same order as the owning [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    entries: Vec<(String, Tensor)>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        let entries = params
            .entries()
            .iter()
            .map(|(name, t)| (name.clone(), Tensor::zeros(t.shape().to_vec())))
            .collect();
        Self { entries }
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    fn scale(&mut self, factor: f64) {
        for (_, t) in &mut self.entries {
            for v in t.data_mut() {
                *v *= factor;
            }
        }
    }
}

/// Parameter names for the layer at stack position `index`.
pub fn layer_param_names(layer: &LayerSpec, index: usize) -> Option<(String, String)> {
    match layer.kind {
        LayerKind::Conv3d | LayerKind::Dense => Some((
            format!("layer{index:02}.weights"),
            format!("layer{index:02}.bias"),
        )),
        _ => None,
    }
}

/// Activation shape after each layer, starting from a rank-4 sample shape.
///
/// Fails with the offending layer index when an extent collapses to zero,
/// a pooling window does not fit, or a dense/softmax layer is misplaced.
pub fn network_output_shapes(layers: &[LayerSpec], input_shape: &[usize]) -> Result<Vec<Vec<usize>>> {
    if input_shape.iter().any(|&e| e == 0) {
        return Err(CoreError::Dimension(format!(
            "network input shape {input_shape:?} has a zero extent"
        )));
    }
    let mut shapes = Vec::with_capacity(layers.len());
    let mut current: Vec<usize> = input_shape.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        let next = match layer.kind {
            LayerKind::Conv3d => {
                if current.len() != 4 {
                    return Err(CoreError::Dimension(format!(
                        "layer {i} (conv3d): expected rank-4 activation, got {current:?}"
                    )));
                }
                let mut out = Vec::with_capacity(4);
                let kernel = [layer.kernel.0, layer.kernel.1, layer.kernel.2];
                let stride = [layer.stride.0, layer.stride.1, layer.stride.2];
                for axis in 0..3 {
                    let extent = match layer.padding {
                        super::Padding::Same => current[axis].div_ceil(stride[axis]),
                        super::Padding::Valid => {
                            if current[axis] < kernel[axis] {
                                return Err(CoreError::Dimension(format!(
                                    "layer {i} (conv3d): input extent {} smaller than kernel {} on axis {axis}",
                                    current[axis], kernel[axis]
                                )));
                            }
                            (current[axis] - kernel[axis]) / stride[axis] + 1
                        }
                    };
                    if extent == 0 {
                        return Err(CoreError::Dimension(format!(
                            "layer {i} (conv3d): output extent reached zero on axis {axis}"
                        )));
                    }
                    out.push(extent);
                }
                out.push(layer.filters);
                out
            }
            LayerKind::MaxPool3d => {
                if current.len() != 4 {
                    return Err(CoreError::Dimension(format!(
                        "layer {i} (maxpool3d): expected rank-4 activation, got {current:?}"
                    )));
                }
                let kernel = [layer.kernel.0, layer.kernel.1, layer.kernel.2];
                let stride = [layer.stride.0, layer.stride.1, layer.stride.2];
                let mut out = Vec::with_capacity(4);
                for axis in 0..3 {
                    if current[axis] < kernel[axis] {
                        return Err(CoreError::Dimension(format!(
                            "layer {i} (maxpool3d): window {} larger than extent {} on axis {axis}",
                            kernel[axis], current[axis]
                        )));
                    }
                    out.push((current[axis] - kernel[axis]) / stride[axis] + 1);
                }
                out.push(current[3]);
                out
            }
            LayerKind::Dense => vec![layer.filters],
            LayerKind::Relu => current.clone(),
            LayerKind::Softmax => {
                if i != layers.len() - 1 {
                    return Err(CoreError::InvalidArgument(format!(
                        "layer {i} (softmax): only supported as the final layer"
                    )));
                }
                let len: usize = current.iter().product();
                if len != 2 {
                    return Err(CoreError::Dimension(format!(
                        "layer {i} (softmax): expects 2 logits, got {len}"
                    )));
                }
                vec![2]
            }
        };
        shapes.push(next.clone());
        current = next;
    }
    Ok(shapes)
}

/// Expected `(name, shape)` pairs for every trainable tensor of the stack.
pub fn expected_param_shapes(
    layers: &[LayerSpec],
    input_shape: &[usize],
) -> Result<Vec<(String, Vec<usize>)>> {
    let shapes = network_output_shapes(layers, input_shape)?;
    let mut expected = Vec::new();
    let mut current: Vec<usize> = input_shape.to_vec();
    for (i, layer) in layers.iter().enumerate() {
        if let Some((w_name, b_name)) = layer_param_names(layer, i) {
            match layer.kind {
                LayerKind::Conv3d => {
                    let (kd, kh, kw) = layer.kernel;
                    expected.push((w_name, vec![kd, kh, kw, current[3], layer.filters]));
                    expected.push((b_name, vec![layer.filters]));
                }
                LayerKind::Dense => {
                    let in_len: usize = current.iter().product();
                    expected.push((w_name, vec![in_len, layer.filters]));
                    expected.push((b_name, vec![layer.filters]));
                }
                _ => unreachable!(),
            }
        }
        current = shapes[i].clone();
    }
    Ok(expected)
}

enum LayerCache {
    Conv { input: Tensor },
    Pool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Dense { input: Tensor },
    Relu { input: Tensor },
    Softmax,
}

fn forward_sample(
    layers: &[LayerSpec],
    params: &ModelParams,
    sample: &Tensor,
    caches: Option<&mut Vec<LayerCache>>,
) -> Result<Tensor> {
    let mut caches = caches;
    let mut act = sample.clone();
    for (i, layer) in layers.iter().enumerate() {
        let names = layer_param_names(layer, i);
        act = match layer.kind {
            LayerKind::Conv3d => {
                let (w_name, b_name) = names.unwrap();
                let w = params
                    .tensor(&w_name)
                    .ok_or_else(|| CoreError::InvalidArgument(format!("missing {w_name}")))?;
                let b = params
                    .tensor(&b_name)
                    .ok_or_else(|| CoreError::InvalidArgument(format!("missing {b_name}")))?;
                if let Some(c) = caches.as_deref_mut() {
                    c.push(LayerCache::Conv { input: act.clone() });
                }
                conv3d_forward(&act, w, b, layer.stride, layer.padding)?
            }
            LayerKind::MaxPool3d => {
                let (out, argmax) = maxpool3d_with_argmax(&act, layer.kernel, layer.stride)?;
                if let Some(c) = caches.as_deref_mut() {
                    c.push(LayerCache::Pool {
                        input_shape: act.shape().to_vec(),
                        argmax,
                    });
                }
                out
            }
            LayerKind::Dense => {
                let (w_name, b_name) = names.unwrap();
                let w = params
                    .tensor(&w_name)
                    .ok_or_else(|| CoreError::InvalidArgument(format!("missing {w_name}")))?;
                let b = params
                    .tensor(&b_name)
                    .ok_or_else(|| CoreError::InvalidArgument(format!("missing {b_name}")))?;
                if let Some(c) = caches.as_deref_mut() {
                    c.push(LayerCache::Dense { input: act.clone() });
                }
                dense_forward(&act, w, b)?
            }
            LayerKind::Relu => {
                if let Some(c) = caches.as_deref_mut() {
                    c.push(LayerCache::Relu { input: act.clone() });
                }
                relu(&act)
            }
            LayerKind::Softmax => {
                if i != layers.len() - 1 {
                    return Err(CoreError::InvalidArgument(
                        "softmax is only supported as the final layer".into(),
                    ));
                }
                if let Some(c) = caches.as_deref_mut() {
                    c.push(LayerCache::Softmax);
                }
                act
            }
        };
    }
    Ok(act)
}

/// Runs a single sample through the stack and returns class probabilities.
/// The final layer must be softmax.
pub fn forward_network(layers: &[LayerSpec], params: &ModelParams, sample: &Tensor) -> Result<SoftLabel> {
    if !matches!(layers.last().map(|l| l.kind), Some(LayerKind::Softmax)) {
        return Err(CoreError::InvalidArgument(
            "network must end in a softmax layer".into(),
        ));
    }
    let logits = forward_sample(layers, params, sample, None)?;
    softmax(&logits)
}

/// Mean cross-entropy of a batch under the current parameters, forward only.
///
/// This is the objective [`finite_difference_check`] differentiates
/// numerically; it shares no code with the analytic backward pass.
pub fn forward_loss(
    layers: &[LayerSpec],
    params: &ModelParams,
    batch: &Tensor,
    targets: &[SoftLabel],
) -> Result<f64> {
    let n = batch.leading();
    if n != targets.len() || n == 0 {
        return Err(CoreError::Dimension(format!(
            "batch of {n} samples does not match {} targets",
            targets.len()
        )));
    }
    let mut total = 0.0;
    for (i, target) in targets.iter().enumerate() {
        let predicted = forward_network(layers, params, &batch.row(i)?)?;
        total += cross_entropy_loss(&predicted, target);
    }
    Ok(total / n as f64)
}

/// Mean loss over the batch and exact analytic gradients of that mean loss
/// with respect to every parameter tensor.
///
/// The batch axis is reduced sample by sample in index order, so gradient
/// accumulation is deterministic. The final softmax layer is differentiated
/// jointly with the cross-entropy loss.
pub fn backward_pass(
    layers: &[LayerSpec],
    params: &ModelParams,
    batch: &Tensor,
    targets: &[SoftLabel],
) -> Result<(f64, Gradients)> {
    if !matches!(layers.last().map(|l| l.kind), Some(LayerKind::Softmax)) {
        return Err(CoreError::InvalidArgument(
            "backward pass requires a final softmax layer".into(),
        ));
    }
    let n = batch.leading();
    if n == 0 {
        return Err(CoreError::InvalidArgument("empty batch".into()));
    }
    if n != targets.len() {
        return Err(CoreError::Dimension(format!(
            "batch of {n} samples does not match {} targets",
            targets.len()
        )));
    }

    let mut grads = Gradients::zeros_like(params);
    let mut total_loss = 0.0;
    for (s, target) in targets.iter().enumerate() {
        let sample = batch.row(s)?;
        let mut caches = Vec::with_capacity(layers.len());
        let logits = forward_sample(layers, params, &sample, Some(&mut caches))?;
        let predicted = softmax(&logits)?;
        total_loss += cross_entropy_loss(&predicted, target);

        // Softmax + cross-entropy differentiate jointly to (p - t).
        let mut delta = Tensor::new(
            vec![2],
            vec![
                predicted.p0() - target.p0(),
                predicted.p1() - target.p1(),
            ],
        )?;

        for (i, layer) in layers.iter().enumerate().rev() {
            let cache = &caches[i];
            delta = match (layer.kind, cache) {
                (LayerKind::Softmax, LayerCache::Softmax) => delta,
                (LayerKind::Relu, LayerCache::Relu { input }) => relu_backward(input, &delta),
                (LayerKind::MaxPool3d, LayerCache::Pool { input_shape, argmax }) => {
                    maxpool3d_backward(input_shape, argmax, &delta)?
                }
                (LayerKind::Dense, LayerCache::Dense { input }) => {
                    let (w_name, b_name) = layer_param_names(layer, i).unwrap();
                    let w = params.tensor(&w_name).unwrap().clone();
                    let mut pair = take_pair(&mut grads, &w_name, &b_name);
                    let dx = dense_backward(input, &w, &delta, &mut pair.0, &mut pair.1)?;
                    put_pair(&mut grads, &w_name, &b_name, pair);
                    dx
                }
                (LayerKind::Conv3d, LayerCache::Conv { input }) => {
                    let (w_name, b_name) = layer_param_names(layer, i).unwrap();
                    let w = params.tensor(&w_name).unwrap().clone();
                    let mut pair = take_pair(&mut grads, &w_name, &b_name);
                    let dx = conv3d_backward(
                        input,
                        &w,
                        &delta,
                        layer.stride,
                        layer.padding,
                        &mut pair.0,
                        &mut pair.1,
                    )?;
                    put_pair(&mut grads, &w_name, &b_name, pair);
                    dx
                }
                _ => unreachable!("cache kind matches layer kind"),
            };
        }
    }

    let inv_n = 1.0 / n as f64;
    grads.scale(inv_n);
    total_loss *= inv_n;

    if !total_loss.is_finite() {
        return Err(CoreError::Diverged("batch loss is non-finite".into()));
    }
    for (i, layer) in layers.iter().enumerate() {
        if let Some((w_name, b_name)) = layer_param_names(layer, i) {
            for name in [&w_name, &b_name] {
                if !grads.tensor(name).unwrap().all_finite() {
                    return Err(CoreError::NonFinite(format!(
                        "gradient of {name} (layer {i}, {})",
                        layer.kind.as_str()
                    )));
                }
            }
        }
    }
    Ok((total_loss, grads))
}

fn take_pair(grads: &mut Gradients, w_name: &str, b_name: &str) -> (Tensor, Tensor) {
    let w = std::mem::replace(
        grads
            .entries
            .iter_mut()
            .find(|(n, _)| n == w_name)
            .map(|(_, t)| t)
            .unwrap(),
        Tensor::zeros(vec![0]),
    );
    let b = std::mem::replace(
        grads
            .entries
            .iter_mut()
            .find(|(n, _)| n == b_name)
            .map(|(_, t)| t)
            .unwrap(),
        Tensor::zeros(vec![0]),
    );
    (w, b)
}

fn put_pair(grads: &mut Gradients, w_name: &str, b_name: &str, pair: (Tensor, Tensor)) {
    *grads
        .entries
        .iter_mut()
        .find(|(n, _)| n == w_name)
        .map(|(_, t)| t)
        .unwrap() = pair.0;
    *grads
        .entries
        .iter_mut()
        .find(|(n, _)| n == b_name)
        .map(|(_, t)| t)
        .unwrap() = pair.1;
}

/// Compares analytic gradients against central finite differences and
/// returns the worst relative error over a deterministic parameter sample.
///
/// For each parameter tensor up to [`FD_PROBES_PER_TENSOR`] evenly spaced
/// coefficients are perturbed by `±step`; the relative error uses
/// `max(|analytic|, |numeric|, 1e-5)` as denominator so that near-zero
/// gradients do not inflate rounding noise.
pub fn finite_difference_check(
    layers: &[LayerSpec],
    params: &ModelParams,
    batch: &Tensor,
    targets: &[SoftLabel],
    step: f64,
) -> Result<f64> {
    if step <= 0.0 {
        return Err(CoreError::InvalidArgument(format!(
            "finite difference step must be > 0, got {step}"
        )));
    }
    let (_, grads) = backward_pass(layers, params, batch, targets)?;
    let mut worst: f64 = 0.0;
    for (t_idx, (name, tensor)) in params.entries().iter().enumerate() {
        let len = tensor.len();
        if len == 0 {
            continue;
        }
        let probes = FD_PROBES_PER_TENSOR.min(len);
        for p in 0..probes {
            let idx = p * len / probes;
            let mut plus = params.clone();
            plus.entries[t_idx].1.data_mut()[idx] += step;
            let loss_plus = forward_loss(layers, &plus, batch, targets)?;
            let mut minus = params.clone();
            minus.entries[t_idx].1.data_mut()[idx] -= step;
            let loss_minus = forward_loss(layers, &minus, batch, targets)?;
            let numeric = (loss_plus - loss_minus) / (2.0 * step);
            let analytic = grads.tensor(name).unwrap().data()[idx];
            let denom = analytic.abs().max(numeric.abs()).max(1e-5);
            worst = worst.max((numeric - analytic).abs() / denom);
        }
    }
    Ok(worst)
}

/// One plain stochastic-gradient-descent update:
/// every parameter decremented by `learning_rate × gradient`.
pub fn sgd_step(params: &ModelParams, grads: &Gradients, learning_rate: f64) -> Result<ModelParams> {
    if learning_rate <= 0.0 {
        return Err(CoreError::InvalidArgument(format!(
            "learning rate must be > 0, got {learning_rate}"
        )));
    }
    if params.len() != grads.entries.len() {
        return Err(CoreError::Dimension(
            "gradient entry count does not match parameters".into(),
        ));
    }
    let mut entries = Vec::with_capacity(params.len());
    for ((p_name, p), (g_name, g)) in params.entries().iter().zip(grads.entries.iter()) {
        if p_name != g_name || p.shape() != g.shape() {
            return Err(CoreError::Dimension(format!(
                "gradient {g_name} {:?} does not match parameter {p_name} {:?}",
                g.shape(),
                p.shape()
            )));
        }
        let data = p
            .data()
            .iter()
            .zip(g.data().iter())
            .map(|(pv, gv)| pv - learning_rate * gv)
            .collect();
        entries.push((p_name.clone(), Tensor::new(p.shape().to_vec(), data)?));
    }
    Ok(ModelParams::new(entries, params.fingerprint()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Padding;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense_softmax_net() -> Vec<LayerSpec> {
        vec![LayerSpec::dense(2).unwrap(), LayerSpec::softmax()]
    }

    fn params_for(layers: &[LayerSpec], input_shape: &[usize], seed: u64) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let expected = expected_param_shapes(layers, input_shape).unwrap();
        let text: String = layers
            .iter()
            .map(|l| l.canonical())
            .collect::<Vec<_>>()
            .join("\n");
        let fp = fingerprint_text(&text);
        let entries = expected
            .into_iter()
            .map(|(name, shape)| {
                if name.ends_with(".bias") {
                    (name, Tensor::zeros(shape))
                } else {
                    let fan_in: usize = shape[..shape.len() - 1].iter().product();
                    let std = (2.0 / fan_in as f64).sqrt();
                    (name, Tensor::normal(shape, std, &mut rng))
                }
            })
            .collect();
        ModelParams::new(entries, fp)
    }

    #[test]
    fn zero_param_dense_bias_gradient_is_mean_softmax_minus_target() {
        let layers = dense_softmax_net();
        let input_shape = [3usize];
        let expected = expected_param_shapes(&layers, &input_shape).unwrap();
        let entries = expected
            .into_iter()
            .map(|(name, shape)| (name, Tensor::zeros(shape)))
            .collect();
        let params = ModelParams::new(entries, 0);
        let batch = Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.0, 0.0, 1.0, -2.0]).unwrap();
        let targets = vec![SoftLabel::from_class(0), SoftLabel::from_class(1)];
        let (_, grads) = backward_pass(&layers, &params, &batch, &targets).unwrap();
        // zero weights give zero logits, so every prediction is [0.5, 0.5]
        let bias_grad = grads.tensor("layer00.bias").unwrap();
        assert_relative_eq!(bias_grad.data()[0], 0.5 * ((0.5 - 1.0) + (0.5 - 0.0)), max_relative = 1e-12);
        assert_relative_eq!(bias_grad.data()[1], 0.5 * ((0.5 - 0.0) + (0.5 - 1.0)), max_relative = 1e-12);
    }

    #[test]
    fn duplicated_sample_preserves_mean_gradients() {
        let layers = dense_softmax_net();
        let params = params_for(&layers, &[4], 9);
        let sample = vec![0.3, -0.7, 1.1, 0.2];
        let single = Tensor::new(vec![1, 4], sample.clone()).unwrap();
        let mut doubled_data = sample.clone();
        doubled_data.extend_from_slice(&sample);
        let doubled = Tensor::new(vec![2, 4], doubled_data).unwrap();
        let t = vec![SoftLabel::from_class(1)];
        let tt = vec![SoftLabel::from_class(1), SoftLabel::from_class(1)];
        let (l1, g1) = backward_pass(&layers, &params, &single, &t).unwrap();
        let (l2, g2) = backward_pass(&layers, &params, &doubled, &tt).unwrap();
        assert_relative_eq!(l1, l2, max_relative = 1e-12);
        for ((_, a), (_, b)) in g1.entries().iter().zip(g2.entries().iter()) {
            for (x, y) in a.data().iter().zip(b.data().iter()) {
                assert_relative_eq!(x, y, max_relative = 1e-12, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn random_three_layer_net_matches_finite_differences() {
        let layers = vec![
            LayerSpec::conv3d(2, (2, 2, 2), (1, 1, 1), Padding::Same).unwrap(),
            LayerSpec::relu(),
            LayerSpec::dense(2).unwrap(),
            LayerSpec::softmax(),
        ];
        let input_shape = [3usize, 4, 4, 1];
        let params = params_for(&layers, &input_shape, 33);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let batch = Tensor::normal(vec![2, 3, 4, 4, 1], 1.0, &mut rng);
        let targets = vec![SoftLabel::from_class(0), SoftLabel::from_class(1)];
        let err = finite_difference_check(&layers, &params, &batch, &targets, 1e-5).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn affine_model_gradient_matches_closed_form_and_tight_fd() {
        // Single dense layer into softmax: the exact gradient of the mean
        // cross-entropy with respect to W is xᵀ(p - t)/n, computed here
        // independently of the backward pass.
        let layers = dense_softmax_net();
        let params = params_for(&layers, &[3], 4);
        let batch = Tensor::new(vec![2, 3], vec![0.2, -0.4, 0.9, -1.2, 0.5, 0.1]).unwrap();
        let targets = vec![SoftLabel::from_class(1), SoftLabel::from_class(0)];
        let (_, grads) = backward_pass(&layers, &params, &batch, &targets).unwrap();

        let w = params.tensor("layer00.weights").unwrap();
        let b = params.tensor("layer00.bias").unwrap();
        let mut closed = vec![0.0; 6];
        let mut closed_b = vec![0.0; 2];
        for s in 0..2 {
            let x = batch.row(s).unwrap();
            let logits = dense_forward(&x, w, b).unwrap();
            let p = softmax(&logits).unwrap();
            let d = [p.p0() - targets[s].p0(), p.p1() - targets[s].p1()];
            for i in 0..3 {
                for o in 0..2 {
                    closed[i * 2 + o] += x.data()[i] * d[o] / 2.0;
                }
            }
            for o in 0..2 {
                closed_b[o] += d[o] / 2.0;
            }
        }
        let gw = grads.tensor("layer00.weights").unwrap();
        for (a, c) in gw.data().iter().zip(closed.iter()) {
            assert_relative_eq!(a, c, max_relative = 1e-12, epsilon = 1e-15);
        }
        let gb = grads.tensor("layer00.bias").unwrap();
        for (a, c) in gb.data().iter().zip(closed_b.iter()) {
            assert_relative_eq!(a, c, max_relative = 1e-12, epsilon = 1e-15);
        }

        let err = finite_difference_check(&layers, &params, &batch, &targets, 1e-5).unwrap();
        assert!(err < 1e-8, "affine model should check to near machine precision, got {err}");
    }

    #[test]
    fn finite_difference_rejects_zero_step() {
        let layers = dense_softmax_net();
        let params = params_for(&layers, &[2], 0);
        let batch = Tensor::new(vec![1, 2], vec![1.0, -1.0]).unwrap();
        let targets = vec![SoftLabel::from_class(0)];
        assert!(finite_difference_check(&layers, &params, &batch, &targets, 0.0).is_err());
    }

    #[test]
    fn sgd_examples() {
        let params = ModelParams::new(
            vec![("w".into(), Tensor::new(vec![1], vec![1.0]).unwrap())],
            7,
        );
        let zero = Gradients {
            entries: vec![("w".into(), Tensor::zeros(vec![1]))],
        };
        let same = sgd_step(&params, &zero, 0.1).unwrap();
        assert_eq!(same, params);

        let grad = Gradients {
            entries: vec![("w".into(), Tensor::new(vec![1], vec![0.5]).unwrap())],
        };
        let once = sgd_step(&params, &grad, 0.1).unwrap();
        assert_relative_eq!(once.tensor("w").unwrap().data()[0], 0.95, max_relative = 1e-15);
        let twice = sgd_step(&once, &grad, 0.1).unwrap();
        assert_relative_eq!(twice.tensor("w").unwrap().data()[0], 1.0 - 2.0 * 0.1 * 0.5, max_relative = 1e-15);
    }

    #[test]
    fn sgd_rejects_shape_mismatch() {
        let params = ModelParams::new(
            vec![("w".into(), Tensor::zeros(vec![2]))],
            7,
        );
        let grad = Gradients {
            entries: vec![("w".into(), Tensor::zeros(vec![3]))],
        };
        assert!(sgd_step(&params, &grad, 0.1).is_err());
    }
}
