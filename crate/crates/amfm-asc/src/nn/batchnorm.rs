//! Per-channel batch normalization over the `B x T x F` axes.

use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, Tensor};

/// Exponential-moving-average factor for running statistics:
/// `running = (1 - m) * running + m * batch`.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Infer,
}

/// Running statistics, biased variance. Not trainable; checkpointed alongside
/// the parameters.
#[derive(Debug, Clone)]
pub struct BatchNormState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub initialized: bool,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            initialized: false,
        }
    }
}

/// Forward cache for the train-mode backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    dims: (usize, usize, usize, usize),
}

/// Normalize per channel. Train mode uses batch statistics (and updates the
/// running EMA); infer mode uses the stored running statistics and requires
/// them to be populated.
pub fn batchnorm2d(
    input: &FeatureMap,
    gamma: &Tensor,
    beta: &Tensor,
    state: &mut BatchNormState,
    mode: BnMode,
    eps: f64,
) -> Result<(FeatureMap, Option<BnCache>)> {
    let (b, c, t, f) = input.dims();
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::shape(format!(
            "batchnorm gamma/beta must have length {c}, got {:?}/{:?}",
            gamma.shape(),
            beta.shape()
        )));
    }
    if state.running_mean.len() != c {
        return Err(Error::shape(format!(
            "batchnorm state has {} channels, input has {c}",
            state.running_mean.len()
        )));
    }
    let n = (b * t * f) as f64;
    let plane = t * f;
    let mut out = FeatureMap::zeros(b, c, t, f);
    match mode {
        BnMode::Train => {
            let mut xhat = vec![0.0; input.numel()];
            let mut inv_std = vec![0.0; c];
            for ch in 0..c {
                let mut sum = 0.0;
                let mut sq = 0.0;
                for bi in 0..b {
                    let base = (bi * c + ch) * plane;
                    for &v in &input.data()[base..base + plane] {
                        sum += v;
                        sq += v * v;
                    }
                }
                let mean = sum / n;
                let var = (sq / n - mean * mean).max(0.0);
                let istd = 1.0 / (var + eps).sqrt();
                inv_std[ch] = istd;
                let g = gamma.data()[ch];
                let be = beta.data()[ch];
                for bi in 0..b {
                    let base = (bi * c + ch) * plane;
                    for i in base..base + plane {
                        let xh = (input.data()[i] - mean) * istd;
                        xhat[i] = xh;
                        out.data_mut()[i] = g * xh + be;
                    }
                }
                if state.initialized {
                    state.running_mean[ch] =
                        (1.0 - BN_MOMENTUM) * state.running_mean[ch] + BN_MOMENTUM * mean;
                    state.running_var[ch] =
                        (1.0 - BN_MOMENTUM) * state.running_var[ch] + BN_MOMENTUM * var;
                } else {
                    state.running_mean[ch] = mean;
                    state.running_var[ch] = var;
                }
            }
            state.initialized = true;
            Ok((
                out,
                Some(BnCache {
                    xhat,
                    inv_std,
                    dims: (b, c, t, f),
                }),
            ))
        }
        BnMode::Infer => {
            if !state.initialized {
                return Err(Error::state(
                    "batchnorm inference requested before any training step populated running stats",
                ));
            }
            for ch in 0..c {
                let mean = state.running_mean[ch];
                let istd = 1.0 / (state.running_var[ch] + eps).sqrt();
                let g = gamma.data()[ch];
                let be = beta.data()[ch];
                for bi in 0..b {
                    let base = (bi * c + ch) * plane;
                    for i in base..base + plane {
                        out.data_mut()[i] = (input.data()[i] - mean) * istd * g + be;
                    }
                }
            }
            Ok((out, None))
        }
    }
}

/// Train-mode backward with the full batch-statistics gradient:
///
/// `dx = gamma * inv_std * (dy - mean(dy) - xhat * mean(dy * xhat))`
///
/// where the means run over the `B x T x F` positions of each channel.
pub fn batchnorm2d_backward(
    gamma: &Tensor,
    cache: &BnCache,
    grad_out: &FeatureMap,
) -> Result<(FeatureMap, Tensor, Tensor)> {
    let (b, c, t, f) = cache.dims;
    if grad_out.dims() != (b, c, t, f) {
        return Err(Error::shape(format!(
            "grad_out shape {:?} does not match batchnorm cache {:?}",
            grad_out.dims(),
            cache.dims
        )));
    }
    let n = (b * t * f) as f64;
    let plane = t * f;
    let mut dx = FeatureMap::zeros(b, c, t, f);
    let mut dgamma = Tensor::zeros(&[c]);
    let mut dbeta = Tensor::zeros(&[c]);
    for ch in 0..c {
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for bi in 0..b {
            let base = (bi * c + ch) * plane;
            for i in base..base + plane {
                let dy = grad_out.data()[i];
                sum_dy += dy;
                sum_dy_xhat += dy * cache.xhat[i];
            }
        }
        dgamma.data_mut()[ch] = sum_dy_xhat;
        dbeta.data_mut()[ch] = sum_dy;
        let g = gamma.data()[ch];
        let istd = cache.inv_std[ch];
        let mean_dy = sum_dy / n;
        let mean_dy_xhat = sum_dy_xhat / n;
        for bi in 0..b {
            let base = (bi * c + ch) * plane;
            for i in base..base + plane {
                let dy = grad_out.data()[i];
                dx.data_mut()[i] = g * istd * (dy - mean_dy - cache.xhat[i] * mean_dy_xhat);
            }
        }
    }
    Ok((dx, dgamma, dbeta))
}
