//! Max feature map, attentive max feature map, and the composite block.
//!
//! MFM halves a `2K`-channel map by taking the elementwise max of its two
//! channel halves: a competitive alternative to a thresholding activation.
//! AMFM extends the same competition to attention: the attended map competes
//! with its own input, `max(x, cbam(x))`, so attention can emphasize but never
//! erase. Because both CBAM gates lie in (0, 1), the attended branch can only
//! win where the input is negative; wherever the input is non-negative the
//! output equals the input exactly.
//!
//! The block wires conv -> MFM -> batchnorm -> AMFM -> max-pool and exposes
//! three inspection taps: (a) the pre-attention map, (b) the attended map,
//! and (c) the AMFM output, with `c = max(a, b)` holding exactly.

use crate::attention::{
    accumulate_cbam_grads, cbam_backward, cbam_forward, CbamCache, CbamGrads, CbamParams,
};
use crate::error::{Error, Result};
use crate::nn::{
    batchnorm2d, batchnorm2d_backward, conv2d, conv2d_backward, pool2d_backward, pool2d_forward,
    BatchNormState, BnCache, BnMode, Param, PoolCache, PoolKind,
};
use crate::rng::SeededRng;
use crate::tensor::{FeatureMap, Tensor};

/// Batchnorm variance epsilon used throughout the trunk.
pub const BN_EPS: f64 = 1e-5;

/// Channel-halving max: `out[k] = max(x[k], x[K+k])` for `k < K = C/2`.
pub fn mfm(x: &FeatureMap) -> Result<FeatureMap> {
    let (b, c, t, f) = x.dims();
    if c % 2 != 0 {
        return Err(Error::shape(format!(
            "mfm needs an even channel count, got {c}"
        )));
    }
    let half = c / 2;
    let plane = t * f;
    let mut out = FeatureMap::zeros(b, half, t, f);
    for bi in 0..b {
        for ch in 0..half {
            let a1 = (bi * c + ch) * plane;
            let a2 = (bi * c + half + ch) * plane;
            let o = (bi * half + ch) * plane;
            for i in 0..plane {
                out.data_mut()[o + i] = x.data()[a1 + i].max(x.data()[a2 + i]);
            }
        }
    }
    Ok(out)
}

/// Route gradient to the winning half; ties go to the first half.
pub fn mfm_backward(x: &FeatureMap, grad_out: &FeatureMap) -> Result<FeatureMap> {
    let (b, c, t, f) = x.dims();
    let half = c / 2;
    if grad_out.dims() != (b, half, t, f) {
        return Err(Error::shape("mfm grad_out shape mismatch"));
    }
    let plane = t * f;
    let mut dx = FeatureMap::zeros(b, c, t, f);
    for bi in 0..b {
        for ch in 0..half {
            let a1 = (bi * c + ch) * plane;
            let a2 = (bi * c + half + ch) * plane;
            let o = (bi * half + ch) * plane;
            for i in 0..plane {
                let g = grad_out.data()[o + i];
                if x.data()[a2 + i] > x.data()[a1 + i] {
                    dx.data_mut()[a2 + i] = g;
                } else {
                    dx.data_mut()[a1 + i] = g;
                }
            }
        }
    }
    Ok(dx)
}

pub struct AmfmCache {
    cbam_out: FeatureMap,
    cbam_cache: CbamCache,
}

/// `max(x, cbam(x))` elementwise, with the cache needed for backward.
pub fn amfm_forward(x: &FeatureMap, p: &CbamParams) -> Result<(FeatureMap, AmfmCache)> {
    let (attended, cbam_cache) = cbam_forward(x, p)?;
    let mut out = x.clone();
    for (o, &a) in out.data_mut().iter_mut().zip(attended.data()) {
        if a > *o {
            *o = a;
        }
    }
    Ok((
        out,
        AmfmCache {
            cbam_out: attended,
            cbam_cache,
        },
    ))
}

/// Forward only.
pub fn amfm(x: &FeatureMap, p: &CbamParams) -> Result<FeatureMap> {
    amfm_forward(x, p).map(|(y, _)| y)
}

/// Gradient of `max(x, cbam(x))`. Positions won by the identity branch pass
/// the gradient straight to `x`; positions won by the attended branch flow
/// through the full CBAM backward (the gate computation's dependence on `x`
/// included). Ties go to the identity branch.
pub fn amfm_backward_cached(
    x: &FeatureMap,
    p: &CbamParams,
    cache: &AmfmCache,
    grad_out: &FeatureMap,
) -> Result<(FeatureMap, CbamGrads)> {
    if grad_out.dims() != x.dims() {
        return Err(Error::shape("amfm grad_out shape mismatch"));
    }
    let mut d_identity = FeatureMap::zeros(x.batch(), x.channels(), x.frames(), x.bins());
    let mut d_attended = d_identity.clone();
    for i in 0..x.numel() {
        let g = grad_out.data()[i];
        if cache.cbam_out.data()[i] > x.data()[i] {
            d_attended.data_mut()[i] = g;
        } else {
            d_identity.data_mut()[i] = g;
        }
    }
    let (d_x_attn, grads) = cbam_backward(x, p, &cache.cbam_cache, &d_attended)?;
    let mut dx = d_identity;
    for (d, s) in dx.data_mut().iter_mut().zip(d_x_attn.data()) {
        *d += s;
    }
    Ok((dx, grads))
}

/// Backward that recomputes the forward internally.
pub fn amfm_backward(
    x: &FeatureMap,
    p: &CbamParams,
    grad_out: &FeatureMap,
) -> Result<(FeatureMap, CbamGrads)> {
    let (_, cache) = amfm_forward(x, p)?;
    amfm_backward_cached(x, p, &cache, grad_out)
}

/// The three inspection maps of one block: (a) pre-attention (post-batchnorm
/// MFM output), (b) its CBAM-attended version, (c) the AMFM output. All three
/// share the shape `[B, K, T, F]` and `c = max(a, b)` exactly.
#[derive(Debug, Clone)]
pub struct BlockTaps {
    pub a: FeatureMap,
    pub b: FeatureMap,
    pub c: FeatureMap,
}

/// One trunk block: 3x3 conv to `2K` channels (padding 1) -> MFM -> batchnorm
/// -> AMFM -> max-pool.
#[derive(Debug, Clone)]
pub struct AmfmBlock {
    pub conv_kernel: Param,
    pub conv_bias: Param,
    pub bn_gamma: Param,
    pub bn_beta: Param,
    pub cbam: CbamParams,
}

/// Gradients for every parameter of an [`AmfmBlock`].
pub struct BlockGrads {
    pub conv_kernel: Tensor,
    pub conv_bias: Tensor,
    pub bn_gamma: Tensor,
    pub bn_beta: Tensor,
    pub cbam: CbamGrads,
}

impl BlockGrads {
    pub fn into_tensors(self) -> Vec<Tensor> {
        let mut v = vec![
            self.conv_kernel,
            self.conv_bias,
            self.bn_gamma,
            self.bn_beta,
        ];
        v.extend(self.cbam.into_tensors());
        v
    }
}

/// Per-call cache for the block backward.
pub struct BlockCache {
    input: FeatureMap,
    conv_out: FeatureMap,
    bn_cache: BnCache,
    a: FeatureMap,
    amfm_cache: AmfmCache,
    pool_cache: PoolCache,
}

impl AmfmBlock {
    /// Fresh block with `in_channels` inputs and `half_channels` (K) outputs:
    /// the conv produces `2K` channels for MFM to halve.
    pub fn init(
        name: &str,
        in_channels: usize,
        half_channels: usize,
        cbam_reduction: usize,
        spatial_kernel: usize,
        rng: &mut SeededRng,
    ) -> Self {
        let cout = 2 * half_channels;
        let fan_in = (in_channels * 9) as f64;
        AmfmBlock {
            conv_kernel: Param::new(
                format!("{name}.conv.kernel"),
                Tensor::randn(&[cout, in_channels, 3, 3], (2.0 / fan_in).sqrt(), rng),
            ),
            conv_bias: Param::new(format!("{name}.conv.bias"), Tensor::zeros(&[cout])),
            bn_gamma: Param::new(
                format!("{name}.bn.gamma"),
                Tensor::full(&[half_channels], 1.0),
            ),
            bn_beta: Param::new(format!("{name}.bn.beta"), Tensor::zeros(&[half_channels])),
            cbam: CbamParams::init_named(
                &format!("{name}.cbam"),
                half_channels,
                cbam_reduction,
                spatial_kernel,
                rng,
            ),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.conv_kernel.value.shape()[1]
    }

    pub fn half_channels(&self) -> usize {
        self.conv_kernel.value.shape()[0] / 2
    }

    /// Parameter value tensors in canonical order (conv kernel, conv bias,
    /// gamma, beta, then the CBAM six).
    pub fn param_values(&self) -> Vec<&Tensor> {
        let mut v = vec![
            &self.conv_kernel.value,
            &self.conv_bias.value,
            &self.bn_gamma.value,
            &self.bn_beta.value,
        ];
        v.extend(self.cbam.tensors());
        v
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = vec![
            &self.conv_kernel,
            &self.conv_bias,
            &self.bn_gamma,
            &self.bn_beta,
        ];
        v.extend(self.cbam.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = vec![
            &mut self.conv_kernel,
            &mut self.conv_bias,
            &mut self.bn_gamma,
            &mut self.bn_beta,
        ];
        v.extend(self.cbam.params_mut());
        v
    }

    /// Train-mode pass. Updates `state`'s running statistics, returns the
    /// pooled output, the inspection taps, and the backward cache.
    pub fn forward_train(
        &self,
        x: &FeatureMap,
        pool: (usize, usize),
        state: &mut BatchNormState,
    ) -> Result<(FeatureMap, BlockTaps, BlockCache)> {
        let conv_out = conv2d(
            x,
            &self.conv_kernel.value,
            &self.conv_bias.value,
            (1, 1),
            (1, 1),
        )?;
        let pre = mfm(&conv_out)?;
        let (a, bn_cache) = batchnorm2d(
            &pre,
            &self.bn_gamma.value,
            &self.bn_beta.value,
            state,
            BnMode::Train,
            BN_EPS,
        )?;
        let (c_map, amfm_cache) = amfm_forward(&a, &self.cbam)?;
        let (out, pool_cache) = pool2d_forward(&c_map, PoolKind::Max, pool, pool)?;
        let taps = BlockTaps {
            a: a.clone(),
            b: amfm_cache.cbam_out.clone(),
            c: c_map,
        };
        let cache = BlockCache {
            input: x.clone(),
            conv_out,
            bn_cache: bn_cache.expect("train mode always yields a cache"),
            a,
            amfm_cache,
            pool_cache,
        };
        Ok((out, taps, cache))
    }

    /// Inference pass using the stored running statistics.
    pub fn forward_infer(
        &self,
        x: &FeatureMap,
        pool: (usize, usize),
        state: &BatchNormState,
    ) -> Result<(FeatureMap, BlockTaps)> {
        let conv_out = conv2d(
            x,
            &self.conv_kernel.value,
            &self.conv_bias.value,
            (1, 1),
            (1, 1),
        )?;
        let pre = mfm(&conv_out)?;
        let mut state = state.clone();
        let (a, _) = batchnorm2d(
            &pre,
            &self.bn_gamma.value,
            &self.bn_beta.value,
            &mut state,
            BnMode::Infer,
            BN_EPS,
        )?;
        let (b_map, _) = cbam_forward(&a, &self.cbam)?;
        let mut c_map = a.clone();
        for (o, &bv) in c_map.data_mut().iter_mut().zip(b_map.data()) {
            if bv > *o {
                *o = bv;
            }
        }
        let (out, _) = pool2d_forward(&c_map, PoolKind::Max, pool, pool)?;
        Ok((
            out,
            BlockTaps {
                a,
                b: b_map,
                c: c_map,
            },
        ))
    }

    /// Gradient wrt the block input and every parameter.
    pub fn backward(
        &self,
        cache: &BlockCache,
        grad_out: &FeatureMap,
    ) -> Result<(FeatureMap, BlockGrads)> {
        let d_c = pool2d_backward(&cache.pool_cache, grad_out)?;
        let (d_a, cbam_grads) =
            amfm_backward_cached(&cache.a, &self.cbam, &cache.amfm_cache, &d_c)?;
        let (d_pre, d_gamma, d_beta) =
            batchnorm2d_backward(&self.bn_gamma.value, &cache.bn_cache, &d_a)?;
        let d_conv_out = mfm_backward(&cache.conv_out, &d_pre)?;
        let (d_x, d_kernel, d_bias) = conv2d_backward(
            &cache.input,
            &self.conv_kernel.value,
            (1, 1),
            (1, 1),
            &d_conv_out,
        )?;
        Ok((
            d_x,
            BlockGrads {
                conv_kernel: d_kernel,
                conv_bias: d_bias,
                bn_gamma: d_gamma,
                bn_beta: d_beta,
                cbam: cbam_grads,
            },
        ))
    }

    /// Accumulate a [`BlockGrads`] into the block's parameter grad buffers.
    pub fn accumulate(&mut self, grads: &BlockGrads) -> Result<()> {
        self.conv_kernel.accumulate_grad(&grads.conv_kernel)?;
        self.conv_bias.accumulate_grad(&grads.conv_bias)?;
        self.bn_gamma.accumulate_grad(&grads.bn_gamma)?;
        self.bn_beta.accumulate_grad(&grads.bn_beta)?;
        let mut merged = CbamGrads::zeros_like(&self.cbam);
        accumulate_cbam_grads(&mut merged, &grads.cbam);
        self.cbam.mlp_w1.accumulate_grad(&merged.mlp_w1)?;
        self.cbam.mlp_b1.accumulate_grad(&merged.mlp_b1)?;
        self.cbam.mlp_w2.accumulate_grad(&merged.mlp_w2)?;
        self.cbam.mlp_b2.accumulate_grad(&merged.mlp_b2)?;
        self.cbam
            .spatial_kernel
            .accumulate_grad(&merged.spatial_kernel)?;
        self.cbam
            .spatial_bias
            .accumulate_grad(&merged.spatial_bias)?;
        Ok(())
    }
}

/// Build a block from raw value tensors in [`AmfmBlock::param_values`] order.
/// Used by the gradient checker to re-materialize a block from a flat probe
/// vector.
pub fn amfm_block_params_init(
    in_channels: usize,
    half_channels: usize,
    cbam_reduction: usize,
    spatial_kernel: usize,
    mut parts: Vec<Tensor>,
) -> Result<AmfmBlock> {
    if parts.len() != 10 {
        return Err(Error::shape(format!(
            "expected 10 block tensors, got {}",
            parts.len()
        )));
    }
    let cbam_parts = parts.split_off(4);
    let cbam = CbamParams::from_tensors(cbam_parts)?;
    let bn_beta = parts.pop().unwrap();
    let bn_gamma = parts.pop().unwrap();
    let conv_bias = parts.pop().unwrap();
    let conv_kernel = parts.pop().unwrap();
    if conv_kernel.shape() != [2 * half_channels, in_channels, 3, 3] {
        return Err(Error::shape("conv kernel shape mismatch in block rebuild"));
    }
    let _ = (cbam_reduction, spatial_kernel);
    Ok(AmfmBlock {
        conv_kernel: Param::new("block.conv.kernel", conv_kernel),
        conv_bias: Param::new("block.conv.bias", conv_bias),
        bn_gamma: Param::new("block.bn.gamma", bn_gamma),
        bn_beta: Param::new("block.bn.beta", bn_beta),
        cbam,
    })
}
