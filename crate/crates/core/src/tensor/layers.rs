use crate::error::{CoreError, Result};
use crate::label::SoftLabel;
use crate::tensor::Tensor;

/// Epsilon clamp inside the logarithm of the cross-entropy loss. Keeps
/// hard-label training finite when a classifier saturates.
pub const CROSS_ENTROPY_EPSILON: f64 = 1e-12;

/// Spatial padding mode for convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Padding {
    /// Zero padding so that each output extent is `ceil(input / stride)`.
    /// Pads symmetrically with the extra voxel at the high index on odd
    /// remainders.
    Same,
    /// No padding; each output extent is `floor((input - kernel) / stride) + 1`.
    Valid,
}

impl Padding {
    pub fn as_str(&self) -> &'static str {
        match self {
            Padding::Same => "same",
            Padding::Valid => "valid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv3d,
    MaxPool3d,
    Dense,
    Relu,
    Softmax,
}

impl LayerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LayerKind::Conv3d => "conv3d",
            LayerKind::MaxPool3d => "maxpool3d",
            LayerKind::Dense => "dense",
            LayerKind::Relu => "relu",
            LayerKind::Softmax => "softmax",
        }
    }
}

/// One layer of a fixed-vocabulary feed-forward network.
///
/// `filters` is the output channel count for `Conv3d` and the output width
/// for `Dense`; it is ignored by the other kinds. `kernel` doubles as the
/// pooling window for `MaxPool3d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub filters: usize,
    pub kernel: (usize, usize, usize),
    pub stride: (usize, usize, usize),
    pub padding: Padding,
}

impl LayerSpec {
    pub fn conv3d(
        filters: usize,
        kernel: (usize, usize, usize),
        stride: (usize, usize, usize),
        padding: Padding,
    ) -> Result<Self> {
        let spec = Self {
            kind: LayerKind::Conv3d,
            filters,
            kernel,
            stride,
            padding,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn maxpool3d(window: (usize, usize, usize), stride: (usize, usize, usize)) -> Result<Self> {
        let spec = Self {
            kind: LayerKind::MaxPool3d,
            filters: 0,
            kernel: window,
            stride,
            padding: Padding::Valid,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dense(width: usize) -> Result<Self> {
        let spec = Self {
            kind: LayerKind::Dense,
            filters: width,
            kernel: (1, 1, 1),
            stride: (1, 1, 1),
            padding: Padding::Valid,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn relu() -> Self {
        Self {
            kind: LayerKind::Relu,
            filters: 0,
            kernel: (1, 1, 1),
            stride: (1, 1, 1),
            padding: Padding::Valid,
        }
    }

    pub fn softmax() -> Self {
        Self {
            kind: LayerKind::Softmax,
            filters: 0,
            kernel: (1, 1, 1),
            stride: (1, 1, 1),
            padding: Padding::Valid,
        }
    }

    fn validate(&self) -> Result<()> {
        let (kd, kh, kw) = self.kernel;
        let (sd, sh, sw) = self.stride;
        if kd == 0 || kh == 0 || kw == 0 {
            return Err(CoreError::InvalidArgument(format!(
                "{} kernel extents must be strictly positive, got {:?}",
                self.kind.as_str(),
                self.kernel
            )));
        }
        if sd == 0 || sh == 0 || sw == 0 {
            return Err(CoreError::InvalidArgument(format!(
                "{} stride steps must be strictly positive, got {:?}",
                self.kind.as_str(),
                self.stride
            )));
        }
        if matches!(self.kind, LayerKind::Conv3d | LayerKind::Dense) && self.filters == 0 {
            return Err(CoreError::InvalidArgument(format!(
                "{} requires a positive filter count",
                self.kind.as_str()
            )));
        }
        Ok(())
    }

    /// Canonical one-line description; checkpoint headers and architecture
    /// fingerprints are built from these.
    pub fn canonical(&self) -> String {
        match self.kind {
            LayerKind::Conv3d => format!(
                "conv3d filters={} kernel={}x{}x{} stride={}x{}x{} padding={}",
                self.filters,
                self.kernel.0,
                self.kernel.1,
                self.kernel.2,
                self.stride.0,
                self.stride.1,
                self.stride.2,
                self.padding.as_str()
            ),
            LayerKind::MaxPool3d => format!(
                "maxpool3d window={}x{}x{} stride={}x{}x{}",
                self.kernel.0,
                self.kernel.1,
                self.kernel.2,
                self.stride.0,
                self.stride.1,
                self.stride.2
            ),
            LayerKind::Dense => format!("dense width={}", self.filters),
            LayerKind::Relu => "relu".into(),
            LayerKind::Softmax => "softmax".into(),
        }
    }
}

/// Output extent and low-side padding for one spatial axis.
fn axis_geometry(input: usize, kernel: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    match padding {
        Padding::Same => {
            let out = input.div_ceil(stride);
            let needed = (out - 1) * stride + kernel;
            let total = needed.saturating_sub(input);
            Ok((out, total / 2))
        }
        Padding::Valid => {
            if input < kernel {
                return Err(CoreError::Dimension(format!(
                    "valid padding requires input extent {input} >= kernel extent {kernel}"
                )));
            }
            Ok(((input - kernel) / stride + 1, 0))
        }
    }
}

fn expect_rank4(t: &Tensor, what: &str) -> Result<[usize; 4]> {
    if t.rank() != 4 {
        return Err(CoreError::Dimension(format!(
            "{what} must have rank 4 (depth, height, width, channels), got rank {}",
            t.rank()
        )));
    }
    let s = t.shape();
    Ok([s[0], s[1], s[2], s[3]])
}

/// Direct 3-D convolution of a single rank-4 sample.
///
/// `input` is `(d, h, w, in_channels)`, `weights` is
/// `(kd, kh, kw, in_channels, out_channels)`, `bias` is `(out_channels)`.
pub fn conv3d_forward(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    stride: (usize, usize, usize),
    padding: Padding,
) -> Result<Tensor> {
    let [d, h, w, ci] = expect_rank4(input, "conv3d input")?;
    if d == 0 || h == 0 || w == 0 || ci == 0 {
        return Err(CoreError::Dimension(
            "conv3d input has a zero extent".into(),
        ));
    }
    if weights.rank() != 5 {
        return Err(CoreError::Dimension(format!(
            "conv3d weights must have rank 5, got rank {}",
            weights.rank()
        )));
    }
    let ws = weights.shape();
    let (kd, kh, kw, wci, co) = (ws[0], ws[1], ws[2], ws[3], ws[4]);
    if wci != ci {
        return Err(CoreError::Dimension(format!(
            "conv3d input channels {ci} do not match weight channels {wci}"
        )));
    }
    if bias.shape() != [co] {
        return Err(CoreError::Dimension(format!(
            "conv3d bias shape {:?} does not match {co} output channels",
            bias.shape()
        )));
    }
    let (sd, sh, sw) = stride;
    if sd == 0 || sh == 0 || sw == 0 {
        return Err(CoreError::InvalidArgument("conv3d stride must be positive".into()));
    }
    let (od, pd) = axis_geometry(d, kd, sd, padding)?;
    let (oh, ph) = axis_geometry(h, kh, sh, padding)?;
    let (ow, pw) = axis_geometry(w, kw, sw, padding)?;

    let x = input.data();
    let wt = weights.data();
    let b = bias.data();
    let mut out = vec![0.0; od * oh * ow * co];
    let mut acc = vec![0.0; co];
    for zo in 0..od {
        for yo in 0..oh {
            for xo in 0..ow {
                acc.copy_from_slice(b);
                for kz in 0..kd {
                    let zi = (zo * sd + kz) as isize - pd as isize;
                    if zi < 0 || zi >= d as isize {
                        continue;
                    }
                    for ky in 0..kh {
                        let yi = (yo * sh + ky) as isize - ph as isize;
                        if yi < 0 || yi >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let xi = (xo * sw + kx) as isize - pw as isize;
                            if xi < 0 || xi >= w as isize {
                                continue;
                            }
                            let in_base =
                                ((zi as usize * h + yi as usize) * w + xi as usize) * ci;
                            let w_base = ((kz * kh + ky) * kw + kx) * ci * co;
                            for c_in in 0..ci {
                                let v = x[in_base + c_in];
                                let w_row = w_base + c_in * co;
                                for (c_out, a) in acc.iter_mut().enumerate() {
                                    *a += v * wt[w_row + c_out];
                                }
                            }
                        }
                    }
                }
                let out_base = ((zo * oh + yo) * ow + xo) * co;
                out[out_base..out_base + co].copy_from_slice(&acc);
            }
        }
    }
    Tensor::new(vec![od, oh, ow, co], out)
}

/// Gradients of a conv3d layer for one sample: `(d_input, d_weights, d_bias)`.
///
/// `d_out` holds the loss gradient at the layer output; the weight and bias
/// gradients are accumulated into the provided buffers so a batch can be
/// reduced in a fixed order.
pub fn conv3d_backward(
    input: &Tensor,
    weights: &Tensor,
    d_out: &Tensor,
    stride: (usize, usize, usize),
    padding: Padding,
    d_weights: &mut Tensor,
    d_bias: &mut Tensor,
) -> Result<Tensor> {
    let [d, h, w, ci] = expect_rank4(input, "conv3d input")?;
    let ws = weights.shape().to_vec();
    let (kd, kh, kw, co) = (ws[0], ws[1], ws[2], ws[4]);
    let (sd, sh, sw) = stride;
    let (od, pd) = axis_geometry(d, kd, sd, padding)?;
    let (oh, ph) = axis_geometry(h, kh, sh, padding)?;
    let (ow, pw) = axis_geometry(w, kw, sw, padding)?;
    if d_out.shape() != [od, oh, ow, co] {
        return Err(CoreError::Dimension(format!(
            "conv3d backward: output gradient shape {:?} does not match {:?}",
            d_out.shape(),
            [od, oh, ow, co]
        )));
    }

    let x = input.data();
    let wt = weights.data();
    let g = d_out.data();
    let dw = d_weights.data_mut();
    let db = d_bias.data_mut();
    let mut dx = vec![0.0; x.len()];
    for zo in 0..od {
        for yo in 0..oh {
            for xo in 0..ow {
                let out_base = ((zo * oh + yo) * ow + xo) * co;
                let g_slice = &g[out_base..out_base + co];
                for (c_out, gv) in g_slice.iter().enumerate() {
                    db[c_out] += gv;
                }
                for kz in 0..kd {
                    let zi = (zo * sd + kz) as isize - pd as isize;
                    if zi < 0 || zi >= d as isize {
                        continue;
                    }
                    for ky in 0..kh {
                        let yi = (yo * sh + ky) as isize - ph as isize;
                        if yi < 0 || yi >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let xi = (xo * sw + kx) as isize - pw as isize;
                            if xi < 0 || xi >= w as isize {
                                continue;
                            }
                            let in_base =
                                ((zi as usize * h + yi as usize) * w + xi as usize) * ci;
                            let w_base = ((kz * kh + ky) * kw + kx) * ci * co;
                            for c_in in 0..ci {
                                let xv = x[in_base + c_in];
                                let w_row = w_base + c_in * co;
                                let mut acc = 0.0;
                                for (c_out, gv) in g_slice.iter().enumerate() {
                                    dw[w_row + c_out] += xv * gv;
                                    acc += wt[w_row + c_out] * gv;
                                }
                                dx[in_base + c_in] += acc;
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![d, h, w, ci], dx)
}

/// Max pooling over non-overlapping-or-strided windows, valid semantics.
///
/// Returns the pooled tensor and the flat input index of each selected
/// maximum (ties go to the lowest flat index, which fixes backward routing).
pub fn maxpool3d_with_argmax(
    input: &Tensor,
    window: (usize, usize, usize),
    stride: (usize, usize, usize),
) -> Result<(Tensor, Vec<usize>)> {
    let [d, h, w, c] = expect_rank4(input, "maxpool3d input")?;
    let (kd, kh, kw) = window;
    let (sd, sh, sw) = stride;
    if kd == 0 || kh == 0 || kw == 0 || sd == 0 || sh == 0 || sw == 0 {
        return Err(CoreError::InvalidArgument(
            "maxpool3d window and stride must be positive".into(),
        ));
    }
    if kd > d || kh > h || kw > w {
        return Err(CoreError::Dimension(format!(
            "maxpool3d window {:?} larger than input extents {:?}",
            window,
            [d, h, w]
        )));
    }
    let od = (d - kd) / sd + 1;
    let oh = (h - kh) / sh + 1;
    let ow = (w - kw) / sw + 1;

    let x = input.data();
    let mut out = vec![0.0; od * oh * ow * c];
    let mut arg = vec![0usize; out.len()];
    for zo in 0..od {
        for yo in 0..oh {
            for xo in 0..ow {
                for ch in 0..c {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for kz in 0..kd {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let idx = (((zo * sd + kz) * h + (yo * sh + ky)) * w
                                    + (xo * sw + kx))
                                    * c
                                    + ch;
                                if x[idx] > best {
                                    best = x[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                    }
                    let o = ((zo * oh + yo) * ow + xo) * c + ch;
                    out[o] = best;
                    arg[o] = best_idx;
                }
            }
        }
    }
    Ok((Tensor::new(vec![od, oh, ow, c], out)?, arg))
}

pub fn maxpool3d_forward(
    input: &Tensor,
    window: (usize, usize, usize),
    stride: (usize, usize, usize),
) -> Result<Tensor> {
    maxpool3d_with_argmax(input, window, stride).map(|(t, _)| t)
}

/// Routes output gradients back to the selected maxima.
pub fn maxpool3d_backward(input_shape: &[usize], argmax: &[usize], d_out: &Tensor) -> Result<Tensor> {
    let mut dx = Tensor::zeros(input_shape.to_vec());
    if argmax.len() != d_out.len() {
        return Err(CoreError::Dimension(
            "maxpool3d backward: argmax length does not match gradient".into(),
        ));
    }
    let data = dx.data_mut();
    for (g, &src) in d_out.data().iter().zip(argmax.iter()) {
        data[src] += g;
    }
    Ok(dx)
}

/// Affine map of a flattened input: `out = input · weights + bias`.
///
/// `weights` is `(input_len, output_len)`; inputs of any rank are flattened.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if weights.rank() != 2 {
        return Err(CoreError::Dimension(format!(
            "dense weights must have rank 2, got {}",
            weights.rank()
        )));
    }
    let (n_in, n_out) = (weights.shape()[0], weights.shape()[1]);
    if input.len() != n_in {
        return Err(CoreError::Dimension(format!(
            "dense input length {} does not match weight input extent {}",
            input.len(),
            n_in
        )));
    }
    if bias.shape() != [n_out] {
        return Err(CoreError::Dimension(format!(
            "dense bias shape {:?} does not match output extent {}",
            bias.shape(),
            n_out
        )));
    }
    let x = input.data();
    let w = weights.data();
    let mut out = bias.data().to_vec();
    for (i, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        let row = &w[i * n_out..(i + 1) * n_out];
        for (o, wv) in out.iter_mut().zip(row.iter()) {
            *o += xv * wv;
        }
    }
    Tensor::new(vec![n_out], out)
}

/// Gradients of a dense layer for one sample: returns `d_input` (in the
/// original input shape) and accumulates `d_weights` / `d_bias`.
pub fn dense_backward(
    input: &Tensor,
    weights: &Tensor,
    d_out: &Tensor,
    d_weights: &mut Tensor,
    d_bias: &mut Tensor,
) -> Result<Tensor> {
    let (n_in, n_out) = (weights.shape()[0], weights.shape()[1]);
    if d_out.len() != n_out {
        return Err(CoreError::Dimension(
            "dense backward: gradient length mismatch".into(),
        ));
    }
    let x = input.data();
    let w = weights.data();
    let g = d_out.data();
    let dw = d_weights.data_mut();
    let db = d_bias.data_mut();
    for (o, gv) in g.iter().enumerate() {
        db[o] += gv;
    }
    let mut dx = vec![0.0; n_in];
    for i in 0..n_in {
        let row = i * n_out;
        let xv = x[i];
        let mut acc = 0.0;
        for (o, gv) in g.iter().enumerate() {
            dw[row + o] += xv * gv;
            acc += w[row + o] * gv;
        }
        dx[i] = acc;
    }
    Tensor::new(input.shape().to_vec(), dx)
}

/// Elementwise rectifier.
pub fn relu(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor {
        shape: input.shape().to_vec(),
        data,
    }
}

/// Gradient mask of the rectifier: passes where the forward input was > 0.
pub fn relu_backward(input: &Tensor, d_out: &Tensor) -> Tensor {
    let data = input
        .data()
        .iter()
        .zip(d_out.data().iter())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor {
        shape: input.shape().to_vec(),
        data,
    }
}

/// Numerically stable two-class softmax (max subtraction).
pub fn softmax(logits: &Tensor) -> Result<SoftLabel> {
    if logits.len() != 2 {
        return Err(CoreError::Dimension(format!(
            "softmax expects 2 logits, got {}",
            logits.len()
        )));
    }
    let z = logits.data();
    if !logits.all_finite() {
        return Err(CoreError::NonFinite("softmax logits".into()));
    }
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    let sum = e0 + e1;
    SoftLabel::new(e0 / sum, e1 / sum)
}

/// Cross-entropy of a predicted distribution against a (possibly soft)
/// target: `-Σ_z target(z) · ln(max(predicted(z), ε))`.
///
/// Zero-probability target classes contribute nothing, so a perfect hard
/// prediction scores exactly 0. Predicted probabilities are clamped at
/// [`CROSS_ENTROPY_EPSILON`] so the loss is never infinite.
pub fn cross_entropy_loss(predicted: &SoftLabel, target: &SoftLabel) -> f64 {
    let mut loss = 0.0;
    for z in 0..2 {
        let t = target.prob(z);
        if t == 0.0 {
            continue;
        }
        loss -= t * predicted.prob(z).max(CROSS_ENTROPY_EPSILON).ln();
    }
    loss
}
