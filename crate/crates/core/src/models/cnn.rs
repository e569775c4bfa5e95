use crate::error::{CoreError, Result};
use crate::label::SoftLabel;
use crate::tensor::{
    expected_param_shapes, fingerprint_text, forward_network, network_output_shapes, LayerSpec,
    ModelParams, Padding, Tensor,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A feed-forward 3-D network: an architecture, its coefficients, and the
/// sample shape it accepts.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkClassifier {
    layers: Vec<LayerSpec>,
    params: ModelParams,
    input_shape: Vec<usize>,
}

/// Canonical multi-line description of a network architecture. The
/// fingerprint stored in [`ModelParams`] and checkpoints hashes this text.
pub fn network_canonical_text(layers: &[LayerSpec], input_shape: &[usize]) -> String {
    let dims: Vec<String> = input_shape.iter().map(|d| d.to_string()).collect();
    let mut lines = vec![format!("input={}", dims.join("x"))];
    lines.extend(layers.iter().map(|l| l.canonical()));
    lines.join("\n")
}

/// He-scaled seeded normal initialization for every weight tensor of the
/// stack; biases start at zero. Identical seeds give bit-identical params.
pub fn init_network_params(layers: &[LayerSpec], input_shape: &[usize], seed: u64) -> Result<ModelParams> {
    let expected = expected_param_shapes(layers, input_shape)?;
    let fingerprint = fingerprint_text(&network_canonical_text(layers, input_shape));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = expected
        .into_iter()
        .map(|(name, shape)| {
            if name.ends_with(".bias") {
                (name, Tensor::zeros(shape))
            } else {
                // fan-in is everything but the output-channel axis
                let fan_in: usize = shape[..shape.len() - 1].iter().product();
                let std = (2.0 / fan_in as f64).sqrt();
                (name, Tensor::normal(shape, std, &mut rng))
            }
        })
        .collect();
    Ok(ModelParams::new(entries, fingerprint))
}

impl NetworkClassifier {
    pub fn build(layers: Vec<LayerSpec>, input_shape: Vec<usize>, seed: u64) -> Result<Self> {
        network_output_shapes(&layers, &input_shape)?;
        let params = init_network_params(&layers, &input_shape, seed)?;
        Ok(Self {
            layers,
            params,
            input_shape,
        })
    }

    /// Assembles a classifier from an already-validated coefficient set,
    /// e.g. one loaded from a checkpoint. Shapes and fingerprint must match
    /// the architecture.
    pub fn from_parts(
        layers: Vec<LayerSpec>,
        input_shape: Vec<usize>,
        params: ModelParams,
    ) -> Result<Self> {
        let expected = expected_param_shapes(&layers, &input_shape)?;
        let fingerprint = fingerprint_text(&network_canonical_text(&layers, &input_shape));
        if params.fingerprint() != fingerprint {
            return Err(CoreError::InvalidArgument(format!(
                "architecture fingerprint mismatch: {:016x} vs {:016x}",
                params.fingerprint(),
                fingerprint
            )));
        }
        if params.len() != expected.len() {
            return Err(CoreError::Dimension(format!(
                "expected {} parameter tensors, got {}",
                expected.len(),
                params.len()
            )));
        }
        for ((name, shape), (got_name, got)) in expected.iter().zip(params.entries()) {
            if name != got_name || got.shape() != &shape[..] {
                return Err(CoreError::Dimension(format!(
                    "parameter {got_name} {:?} does not match expected {name} {shape:?}",
                    got.shape()
                )));
            }
        }
        Ok(Self {
            layers,
            params,
            input_shape,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn canonical_text(&self) -> String {
        network_canonical_text(&self.layers, &self.input_shape)
    }

    pub fn with_params(&self, params: ModelParams) -> Result<Self> {
        if params.fingerprint() != self.params.fingerprint() {
            return Err(CoreError::InvalidArgument(format!(
                "architecture fingerprint mismatch: {:016x} vs {:016x}",
                params.fingerprint(),
                self.params.fingerprint()
            )));
        }
        Ok(Self {
            layers: self.layers.clone(),
            params,
            input_shape: self.input_shape.clone(),
        })
    }

    pub fn reinitialized(&self, seed: u64) -> Self {
        let params = init_network_params(&self.layers, &self.input_shape, seed)
            .expect("architecture already validated");
        Self {
            layers: self.layers.clone(),
            params,
            input_shape: self.input_shape.clone(),
        }
    }

    pub fn forward(&self, sample: &Tensor) -> Result<SoftLabel> {
        if sample.shape() != self.input_shape {
            return Err(CoreError::Dimension(format!(
                "sample shape {:?} does not match input signature {:?}",
                sample.shape(),
                self.input_shape
            )));
        }
        forward_network(&self.layers, &self.params, sample)
    }

    /// Output channel counts of the convolution layers, in depth order.
    pub fn conv_filter_counts(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter(|l| l.kind == crate::tensor::LayerKind::Conv3d)
            .map(|l| l.filters)
            .collect()
    }

    /// Widths of the dense layers, in depth order.
    pub fn dense_widths(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter(|l| l.kind == crate::tensor::LayerKind::Dense)
            .map(|l| l.filters)
            .collect()
    }
}

fn scaled(base: usize, scale: f64) -> usize {
    ((base as f64) * scale).ceil() as usize
}

/// Two-block 3-D CNN with a width multiplier. At `scale = 1` the channel
/// plan is 32 → 64 with a 1024-wide hidden dense layer; smaller scales
/// shrink every width (ceiling-rounded) except the final 2-class layer.
pub fn build_cnn2_scaled(input_shape: [usize; 4], scale: f64, seed: u64) -> Result<NetworkClassifier> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(CoreError::InvalidArgument(format!(
            "width multiplier must be in (0, 1], got {scale}"
        )));
    }
    let layers = vec![
        LayerSpec::conv3d(scaled(32, scale), (3, 3, 3), (1, 1, 1), Padding::Same)?,
        LayerSpec::relu(),
        LayerSpec::maxpool3d((2, 2, 2), (2, 2, 2))?,
        LayerSpec::conv3d(scaled(64, scale), (3, 3, 3), (1, 1, 1), Padding::Same)?,
        LayerSpec::relu(),
        LayerSpec::maxpool3d((2, 2, 2), (2, 2, 2))?,
        LayerSpec::dense(scaled(1024, scale))?,
        LayerSpec::relu(),
        LayerSpec::dense(2)?,
        LayerSpec::softmax(),
    ];
    network_output_shapes(&layers, &input_shape).map_err(|e| {
        CoreError::Dimension(format!(
            "input {input_shape:?} too small for two pooling stages: {e}"
        ))
    })?;
    NetworkClassifier::build(layers, input_shape.to_vec(), seed)
}

/// The 2-layer 3-D CNN: conv(32, 3×3×3) → pool → conv(64, 3×3×3) → pool →
/// dense(1024) → dense(2) → softmax, ReLU after every conv and hidden dense
/// layer.
pub fn build_cnn2(input_shape: [usize; 4], seed: u64) -> Result<NetworkClassifier> {
    build_cnn2_scaled(input_shape, 1.0, seed)
}

/// Deep 11-layer 3-D network in the AlexNet mold.
///
/// Full-scale plan: conv(96, 3×5×5, stride 2, zero-padded) → pool(3³,
/// stride 2) → conv(128, 3×5×5) → pool → conv(256, 3³, unpadded) →
/// conv(384, 3³, zero-padded) → conv(256, 3³, stride 2) → flatten →
/// dense(4096) → dense(1024) → dense(2). `scale` multiplies every filter
/// count and dense width (ceiling-rounded) except the 2-class output.
pub fn build_alexnet3d(input_shape: [usize; 4], scale: f64, seed: u64) -> Result<NetworkClassifier> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(CoreError::InvalidArgument(format!(
            "width multiplier must be in (0, 1], got {scale}"
        )));
    }
    let layers = vec![
        LayerSpec::conv3d(scaled(96, scale), (3, 5, 5), (2, 2, 2), Padding::Same)?,
        LayerSpec::relu(),
        LayerSpec::maxpool3d((3, 3, 3), (2, 2, 2))?,
        LayerSpec::conv3d(scaled(128, scale), (3, 5, 5), (1, 1, 1), Padding::Same)?,
        LayerSpec::relu(),
        LayerSpec::maxpool3d((3, 3, 3), (2, 2, 2))?,
        LayerSpec::conv3d(scaled(256, scale), (3, 3, 3), (1, 1, 1), Padding::Valid)?,
        LayerSpec::relu(),
        LayerSpec::conv3d(scaled(384, scale), (3, 3, 3), (1, 1, 1), Padding::Same)?,
        LayerSpec::relu(),
        LayerSpec::conv3d(scaled(256, scale), (3, 3, 3), (2, 2, 2), Padding::Same)?,
        LayerSpec::relu(),
        LayerSpec::dense(scaled(4096, scale))?,
        LayerSpec::relu(),
        LayerSpec::dense(scaled(1024, scale))?,
        LayerSpec::relu(),
        LayerSpec::dense(2)?,
        LayerSpec::softmax(),
    ];
    network_output_shapes(&layers, &input_shape)?;
    NetworkClassifier::build(layers, input_shape.to_vec(), seed)
}

/// Smallest cubic input extent that survives the AlexNet stride plan.
pub const ALEXNET_MIN_EXTENT: usize = 29;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{predict_proba, Classifier};

    #[test]
    fn cnn2_reproduces_full_scale_widths() {
        let net = build_cnn2([20, 50, 50, 1], 7).unwrap();
        assert_eq!(net.conv_filter_counts(), vec![32, 64]);
        assert_eq!(net.dense_widths(), vec![1024, 2]);
    }

    #[test]
    fn cnn2_same_seed_is_bit_identical() {
        let a = build_cnn2_scaled([8, 8, 8, 1], 0.25, 42).unwrap();
        let b = build_cnn2_scaled([8, 8, 8, 1], 0.25, 42).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn cnn2_desk_scale_forward_yields_valid_label() {
        let net = build_cnn2_scaled([8, 8, 8, 1], 0.125, 3).unwrap();
        let sample = Tensor::filled(vec![8, 8, 8, 1], 0.3);
        let label = net.forward(&sample).unwrap();
        assert!((label.p0() + label.p1() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn cnn2_rejects_input_too_small_for_two_pools() {
        assert!(build_cnn2([1, 2, 2, 1], 0).is_err());
    }

    #[test]
    fn alexnet_full_scale_widths() {
        let d = ALEXNET_MIN_EXTENT;
        let net = build_alexnet3d([d, 50, 50, 1], 1.0, 5).unwrap();
        assert_eq!(net.conv_filter_counts(), vec![96, 128, 256, 384, 256]);
        assert_eq!(net.dense_widths(), vec![4096, 1024, 2]);
    }

    #[test]
    fn alexnet_eighth_scale_widths() {
        let d = ALEXNET_MIN_EXTENT;
        let net = build_alexnet3d([d, d, d, 1], 0.125, 5).unwrap();
        assert_eq!(net.conv_filter_counts(), vec![12, 16, 32, 48, 32]);
        assert_eq!(net.dense_widths(), vec![512, 128, 2]);
    }

    #[test]
    fn alexnet_rejects_tiny_input_with_error_not_panic() {
        let err = build_alexnet3d([8, 8, 8, 1], 1.0, 5);
        assert!(err.is_err());
        let msg = format!("{}", err.unwrap_err());
        assert!(msg.contains("layer"), "error should name the layer: {msg}");
    }

    #[test]
    fn zeroed_final_layer_predicts_even_probabilities() {
        let net = build_cnn2_scaled([8, 8, 8, 1], 0.25, 11).unwrap();
        let mut params = net.params().clone();
        // final dense pair is the last weights/bias entry pair
        let names: Vec<String> = params
            .entries()
            .iter()
            .map(|(n, _)| n.clone())
            .collect();
        let w_name = names[names.len() - 2].clone();
        let b_name = names[names.len() - 1].clone();
        for v in params.tensor_mut(&w_name).unwrap().data_mut() {
            *v = 0.0;
        }
        for v in params.tensor_mut(&b_name).unwrap().data_mut() {
            *v = 0.0;
        }
        let net = net.with_params(params).unwrap();
        let c = Classifier::Network(net);
        let batch = Tensor::stack(&[
            Tensor::filled(vec![8, 8, 8, 1], 0.9),
            Tensor::filled(vec![8, 8, 8, 1], -0.4),
        ])
        .unwrap();
        for label in predict_proba(&c, &batch).unwrap() {
            assert_eq!(label.p0(), 0.5);
            assert_eq!(label.p1(), 0.5);
        }
    }

    #[test]
    fn repeated_sample_predicts_identically() {
        let net = build_cnn2_scaled([8, 8, 8, 1], 0.25, 13).unwrap();
        let c = Classifier::Network(net);
        let s = Tensor::filled(vec![8, 8, 8, 1], 0.7);
        let batch = Tensor::stack(&[s.clone(), s]).unwrap();
        let out = predict_proba(&c, &batch).unwrap();
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn with_params_rejects_fingerprint_mismatch() {
        let a = build_cnn2_scaled([8, 8, 8, 1], 0.25, 1).unwrap();
        let b = build_cnn2_scaled([8, 8, 8, 1], 0.5, 1).unwrap();
        assert!(a.with_params(b.params().clone()).is_err());
    }
}
