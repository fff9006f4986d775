//! Host-side layer kernels: pooling, activation, fully-connected,
//! input normalization and softmax.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Matrix, Tensor3};

/// Slope applied to negative inputs by the leaky activation.
pub const LEAKY_SLOPE: f64 = 0.1;

/// Supported activation functions. Applied element-wise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Leaky,
    Logistic,
}

impl Activation {
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Linear => x,
            Activation::Relu => {
                if x < S::zero() {
                    S::zero()
                } else {
                    x
                }
            }
            Activation::Leaky => {
                if x < S::zero() {
                    S::from_f64_lossy(LEAKY_SLOPE) * x
                } else {
                    x
                }
            }
            Activation::Logistic => S::one() / (S::one() + (-x).exp()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Leaky => "leaky",
            Activation::Logistic => "logistic",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "linear" => Some(Activation::Linear),
            "relu" => Some(Activation::Relu),
            "leaky" => Some(Activation::Leaky),
            "logistic" => Some(Activation::Logistic),
            _ => None,
        }
    }
}

/// Element-wise activation over a feature map.
pub fn activate<S: Scalar>(mut input: Tensor3<S>, kind: Activation) -> Tensor3<S> {
    input.map_inplace(|v| kind.apply(v));
    input
}

/// Element-wise activation over a flat vector (post-FC).
pub fn activate_flat<S: Scalar>(input: &mut [S], kind: Activation) {
    for v in input {
        *v = kind.apply(*v);
    }
}

/// Per-channel max pooling. Output dims are `floor((dim - size)/stride) + 1`;
/// windows never read outside the input.
pub fn maxpool<S: Scalar>(input: &Tensor3<S>, size: usize, stride: usize) -> Result<Tensor3<S>> {
    if size < 1 || stride < 1 {
        return Err(Error::shape("maxpool size and stride must be >= 1".to_string()));
    }
    if size > input.height() || size > input.width() {
        return Err(Error::shape(format!(
            "maxpool window {size} exceeds input {}x{}",
            input.height(),
            input.width()
        )));
    }
    let out_h = (input.height() - size) / stride + 1;
    let out_w = (input.width() - size) / stride + 1;
    let mut out = Tensor3::zeros(input.channels(), out_h, out_w);
    for c in 0..input.channels() {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut best = input.get(c, oy * stride, ox * stride);
                for ky in 0..size {
                    for kx in 0..size {
                        let v = input.get(c, oy * stride + ky, ox * stride + kx);
                        if v > best {
                            best = v;
                        }
                    }
                }
                out.set(c, oy, ox, best);
            }
        }
    }
    Ok(out)
}

/// Fully-connected layer: `y = W*x + b`.
pub fn fully_connected<S: Scalar>(input: &[S], weights: &Matrix<S>, bias: &[S]) -> Result<Vec<S>> {
    if weights.cols() != input.len() {
        return Err(Error::shape(format!(
            "fc weights expect input length {}, got {}",
            weights.cols(),
            input.len()
        )));
    }
    if bias.len() != weights.rows() {
        return Err(Error::shape(format!(
            "fc bias length {} does not match {} outputs",
            bias.len(),
            weights.rows()
        )));
    }
    let mut out = Vec::with_capacity(weights.rows());
    for r in 0..weights.rows() {
        let mut acc = bias[r];
        for (w, x) in weights.row(r).iter().zip(input) {
            acc += *w * *x;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Scales raw byte input into `[0, 1]` by dividing by 255.
pub fn normalize<S: Scalar>(
    channels: usize,
    height: usize,
    width: usize,
    raw: &[u8],
) -> Result<Tensor3<S>> {
    if raw.len() != channels * height * width {
        return Err(Error::shape(format!(
            "raw frame length {} does not match {channels}x{height}x{width}",
            raw.len()
        )));
    }
    let scale = S::from_f64_lossy(255.0);
    let data = raw.iter().map(|&b| S::from_f64_lossy(b as f64) / scale).collect();
    Tensor3::from_vec(channels, height, width, data)
}

/// Numerically stable softmax: subtracts the max before exponentiating.
pub fn softmax<S: Scalar>(scores: &[S]) -> Vec<S> {
    assert!(!scores.is_empty(), "softmax input must be non-empty");
    let max = scores.iter().cloned().fold(scores[0], S::max);
    let exps: Vec<S> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum = exps.iter().fold(S::zero(), |a, &b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}
