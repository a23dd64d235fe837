//! Convolutional block attention: a channel gate followed by a spatial gate.
//!
//! Channel attention squeezes the map with global average and global max
//! pooling, pushes both through a shared two-layer excitation MLP and gates
//! with `sigmoid(mlp(avg) + mlp(max))`. Spatial attention convolves the
//! channelwise mean and max of the (already channel-gated) map with a single
//! odd-sized kernel and gates with the sigmoid of the result. Both gates lie
//! strictly inside (0, 1), so the attended map never grows in magnitude.

use crate::error::{Error, Result};
use crate::nn::{conv2d, conv2d_backward, linear, linear_backward, Param};
use crate::rng::SeededRng;
use crate::tensor::{FeatureMap, Tensor};

/// Numerically stable logistic function.
#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Parameter bundle for one CBAM instance: the shared excitation MLP
/// (`[C/r, C]` then `[C, C/r]`, biases included) and the spatial convolution
/// kernel `[1, 2, k, k]` with its scalar bias.
#[derive(Debug, Clone)]
pub struct CbamParams {
    pub mlp_w1: Param,
    pub mlp_b1: Param,
    pub mlp_w2: Param,
    pub mlp_b2: Param,
    pub spatial_kernel: Param,
    pub spatial_bias: Param,
}

/// Gradients for every tensor in [`CbamParams`], same field order.
#[derive(Debug, Clone)]
pub struct CbamGrads {
    pub mlp_w1: Tensor,
    pub mlp_b1: Tensor,
    pub mlp_w2: Tensor,
    pub mlp_b2: Tensor,
    pub spatial_kernel: Tensor,
    pub spatial_bias: Tensor,
}

impl CbamGrads {
    pub fn zeros_like(p: &CbamParams) -> Self {
        CbamGrads {
            mlp_w1: Tensor::zeros(p.mlp_w1.value.shape()),
            mlp_b1: Tensor::zeros(p.mlp_b1.value.shape()),
            mlp_w2: Tensor::zeros(p.mlp_w2.value.shape()),
            mlp_b2: Tensor::zeros(p.mlp_b2.value.shape()),
            spatial_kernel: Tensor::zeros(p.spatial_kernel.value.shape()),
            spatial_bias: Tensor::zeros(p.spatial_bias.value.shape()),
        }
    }

    pub fn into_tensors(self) -> Vec<Tensor> {
        vec![
            self.mlp_w1,
            self.mlp_b1,
            self.mlp_w2,
            self.mlp_b2,
            self.spatial_kernel,
            self.spatial_bias,
        ]
    }

    fn add(&mut self, other: &CbamGrads) {
        for (dst, src) in [
            (&mut self.mlp_w1, &other.mlp_w1),
            (&mut self.mlp_b1, &other.mlp_b1),
            (&mut self.mlp_w2, &other.mlp_w2),
            (&mut self.mlp_b2, &other.mlp_b2),
            (&mut self.spatial_kernel, &other.spatial_kernel),
            (&mut self.spatial_bias, &other.spatial_bias),
        ] {
            for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
                *d += s;
            }
        }
    }
}

impl CbamParams {
    /// Random init for `channels` channels with reduction ratio `reduction`
    /// (clamped so the hidden width stays >= 1) and an odd `spatial_kernel`
    /// extent.
    pub fn init(
        channels: usize,
        reduction: usize,
        spatial_kernel: usize,
        rng: &mut SeededRng,
    ) -> Self {
        Self::init_named("cbam", channels, reduction, spatial_kernel, rng)
    }

    pub fn init_named(
        prefix: &str,
        channels: usize,
        reduction: usize,
        spatial_kernel: usize,
        rng: &mut SeededRng,
    ) -> Self {
        assert!(
            spatial_kernel % 2 == 1,
            "spatial attention kernel must be odd"
        );
        assert!(channels >= 1 && reduction >= 1);
        let hidden = (channels / reduction.min(channels)).max(1);
        let k = spatial_kernel;
        CbamParams {
            mlp_w1: Param::new(
                format!("{prefix}.mlp_w1"),
                Tensor::randn(&[hidden, channels], (2.0 / channels as f64).sqrt(), rng),
            ),
            mlp_b1: Param::new(format!("{prefix}.mlp_b1"), Tensor::zeros(&[hidden])),
            mlp_w2: Param::new(
                format!("{prefix}.mlp_w2"),
                Tensor::randn(&[channels, hidden], (2.0 / hidden as f64).sqrt(), rng),
            ),
            mlp_b2: Param::new(format!("{prefix}.mlp_b2"), Tensor::zeros(&[channels])),
            spatial_kernel: Param::new(
                format!("{prefix}.spatial_kernel"),
                Tensor::randn(&[1, 2, k, k], (2.0 / (2 * k * k) as f64).sqrt(), rng),
            ),
            spatial_bias: Param::new(format!("{prefix}.spatial_bias"), Tensor::zeros(&[1])),
        }
    }

    /// All-zero parameters; both gates then sit at exactly 0.5.
    pub fn zeros(channels: usize, reduction: usize, spatial_kernel: usize) -> Self {
        let mut rng = SeededRng::new(0);
        let mut p = Self::init_named("cbam", channels, reduction, spatial_kernel, &mut rng);
        for param in p.params_mut() {
            param.value.fill(0.0);
        }
        p
    }

    pub fn channels(&self) -> usize {
        self.mlp_w1.value.shape()[1]
    }

    pub fn kernel_extent(&self) -> usize {
        self.spatial_kernel.value.shape()[2]
    }

    /// Parameter tensors in canonical order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![
            &self.mlp_w1.value,
            &self.mlp_b1.value,
            &self.mlp_w2.value,
            &self.mlp_b2.value,
            &self.spatial_kernel.value,
            &self.spatial_bias.value,
        ]
    }

    /// Rebuild from tensors in the order produced by [`CbamParams::tensors`].
    pub fn from_tensors(mut parts: Vec<Tensor>) -> Result<Self> {
        if parts.len() != 6 {
            return Err(Error::shape(format!(
                "expected 6 CBAM tensors, got {}",
                parts.len()
            )));
        }
        let spatial_bias = parts.pop().unwrap();
        let spatial_kernel = parts.pop().unwrap();
        let mlp_b2 = parts.pop().unwrap();
        let mlp_w2 = parts.pop().unwrap();
        let mlp_b1 = parts.pop().unwrap();
        let mlp_w1 = parts.pop().unwrap();
        if spatial_kernel.rank() != 4 || spatial_kernel.shape()[2] % 2 == 0 {
            return Err(Error::shape("spatial kernel must be [1,2,k,k] with odd k"));
        }
        Ok(CbamParams {
            mlp_w1: Param::new("cbam.mlp_w1", mlp_w1),
            mlp_b1: Param::new("cbam.mlp_b1", mlp_b1),
            mlp_w2: Param::new("cbam.mlp_w2", mlp_w2),
            mlp_b2: Param::new("cbam.mlp_b2", mlp_b2),
            spatial_kernel: Param::new("cbam.spatial_kernel", spatial_kernel),
            spatial_bias: Param::new("cbam.spatial_bias", spatial_bias),
        })
    }

    pub fn params(&self) -> [&Param; 6] {
        [
            &self.mlp_w1,
            &self.mlp_b1,
            &self.mlp_w2,
            &self.mlp_b2,
            &self.spatial_kernel,
            &self.spatial_bias,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 6] {
        [
            &mut self.mlp_w1,
            &mut self.mlp_b1,
            &mut self.mlp_w2,
            &mut self.mlp_b2,
            &mut self.spatial_kernel,
            &mut self.spatial_bias,
        ]
    }
}

fn check_channels(x: &FeatureMap, p: &CbamParams) -> Result<()> {
    if x.channels() != p.channels() {
        return Err(Error::shape(format!(
            "feature map has {} channels, CBAM parameters expect {}",
            x.channels(),
            p.channels()
        )));
    }
    Ok(())
}

/// Global average pool to `[B, C]` plus the same for global max with the
/// winning flat offsets recorded.
fn squeeze(x: &FeatureMap) -> (Tensor, Tensor, Vec<usize>) {
    let (b, c, t, f) = x.dims();
    let plane = t * f;
    let mut avg = Tensor::zeros(&[b, c]);
    let mut mx = Tensor::zeros(&[b, c]);
    let mut arg = vec![0usize; b * c];
    for bi in 0..b {
        for ch in 0..c {
            let base = (bi * c + ch) * plane;
            let mut s = 0.0;
            let mut best = f64::NEG_INFINITY;
            let mut best_i = base;
            for i in base..base + plane {
                let v = x.data()[i];
                s += v;
                if v > best {
                    best = v;
                    best_i = i;
                }
            }
            avg.set2(bi, ch, s / plane as f64);
            mx.set2(bi, ch, best);
            arg[bi * c + ch] = best_i;
        }
    }
    (avg, mx, arg)
}

struct MlpCache {
    pre: Tensor,    // [B, H] preactivation
    hidden: Tensor, // [B, H] post-relu
}

fn mlp_forward(s: &Tensor, p: &CbamParams) -> Result<(Tensor, MlpCache)> {
    let pre = linear(s, &p.mlp_w1.value, &p.mlp_b1.value)?;
    let hidden = pre.map(|v| if v > 0.0 { v } else { 0.0 });
    let out = linear(&hidden, &p.mlp_w2.value, &p.mlp_b2.value)?;
    Ok((out, MlpCache { pre, hidden }))
}

fn mlp_backward(
    s: &Tensor,
    p: &CbamParams,
    cache: &MlpCache,
    grad_out: &Tensor,
    grads: &mut CbamGrads,
) -> Result<Tensor> {
    let (dh, dw2, db2) = linear_backward(&cache.hidden, &p.mlp_w2.value, grad_out)?;
    for (d, s_) in grads.mlp_w2.data_mut().iter_mut().zip(dw2.data()) {
        *d += s_;
    }
    for (d, s_) in grads.mlp_b2.data_mut().iter_mut().zip(db2.data()) {
        *d += s_;
    }
    let mut dpre = dh;
    for (g, &z) in dpre.data_mut().iter_mut().zip(cache.pre.data()) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
    let (ds, dw1, db1) = linear_backward(s, &p.mlp_w1.value, &dpre)?;
    for (d, s_) in grads.mlp_w1.data_mut().iter_mut().zip(dw1.data()) {
        *d += s_;
    }
    for (d, s_) in grads.mlp_b1.data_mut().iter_mut().zip(db1.data()) {
        *d += s_;
    }
    Ok(ds)
}

/// Channel gate `sigmoid(MLP(global_avg(x)) + MLP(global_max(x)))` as a
/// `[B, C, 1, 1]` map.
pub fn channel_attention(x: &FeatureMap, p: &CbamParams) -> Result<FeatureMap> {
    check_channels(x, p)?;
    let (avg, mx, _) = squeeze(x);
    let (za, _) = mlp_forward(&avg, p)?;
    let (zm, _) = mlp_forward(&mx, p)?;
    let (b, c) = (x.batch(), x.channels());
    let mut gate = FeatureMap::zeros(b, c, 1, 1);
    for i in 0..b * c {
        gate.data_mut()[i] = sigmoid(za.data()[i] + zm.data()[i]);
    }
    Ok(gate)
}

/// Channelwise mean and max stacked into a `[B, 2, T, F]` descriptor, with
/// max-winner channels recorded.
fn spatial_descriptor(x: &FeatureMap) -> (FeatureMap, Vec<usize>) {
    let (b, c, t, f) = x.dims();
    let mut cat = FeatureMap::zeros(b, 2, t, f);
    let mut argc = vec![0usize; b * t * f];
    for bi in 0..b {
        for ti in 0..t {
            for fi in 0..f {
                let mut s = 0.0;
                let mut best = f64::NEG_INFINITY;
                let mut best_c = 0;
                for ch in 0..c {
                    let v = x.at(bi, ch, ti, fi);
                    s += v;
                    if v > best {
                        best = v;
                        best_c = ch;
                    }
                }
                cat.set(bi, 0, ti, fi, s / c as f64);
                cat.set(bi, 1, ti, fi, best);
                argc[(bi * t + ti) * f + fi] = best_c;
            }
        }
    }
    (cat, argc)
}

/// Spatial gate `sigmoid(conv_k([mean_c(x); max_c(x)]))` as `[B, 1, T, F]`.
pub fn spatial_attention(x: &FeatureMap, p: &CbamParams) -> Result<FeatureMap> {
    let (cat, _) = spatial_descriptor(x);
    let k = p.kernel_extent();
    let pad = (k - 1) / 2;
    let z = conv2d(
        &cat,
        &p.spatial_kernel.value,
        &p.spatial_bias.value,
        (1, 1),
        (pad, pad),
    )?;
    Ok(FeatureMap::new(z.into_tensor().map(sigmoid))?)
}

/// Everything the backward pass needs from a CBAM forward.
pub struct CbamCache {
    avg: Tensor,
    mx: Tensor,
    arg_spatial: Vec<usize>,
    mlp_avg: MlpCache,
    mlp_max: MlpCache,
    gate_c: Tensor, // [B, C]
    x1: FeatureMap,
    cat: FeatureMap,
    argc: Vec<usize>,
    gate_s: FeatureMap, // [B, 1, T, F]
}

/// Apply channel then spatial attention: `x'' = gs(x') (*) x'` where
/// `x' = gc(x) (*) x`. Returns the attended map and the backward cache.
pub fn cbam_forward(x: &FeatureMap, p: &CbamParams) -> Result<(FeatureMap, CbamCache)> {
    check_channels(x, p)?;
    let (b, c, t, f) = x.dims();
    let (avg, mx, arg_spatial) = squeeze(x);
    let (za, mlp_avg) = mlp_forward(&avg, p)?;
    let (zm, mlp_max) = mlp_forward(&mx, p)?;
    let mut gate_c = Tensor::zeros(&[b, c]);
    for i in 0..b * c {
        gate_c.data_mut()[i] = sigmoid(za.data()[i] + zm.data()[i]);
    }
    let plane = t * f;
    let mut x1 = FeatureMap::zeros(b, c, t, f);
    for bi in 0..b {
        for ch in 0..c {
            let g = gate_c.at2(bi, ch);
            let base = (bi * c + ch) * plane;
            for i in base..base + plane {
                x1.data_mut()[i] = g * x.data()[i];
            }
        }
    }
    let (cat, argc) = spatial_descriptor(&x1);
    let k = p.kernel_extent();
    let pad = (k - 1) / 2;
    let zs = conv2d(
        &cat,
        &p.spatial_kernel.value,
        &p.spatial_bias.value,
        (1, 1),
        (pad, pad),
    )?;
    let gate_s = FeatureMap::new(zs.into_tensor().map(sigmoid))?;
    let mut out = FeatureMap::zeros(b, c, t, f);
    for bi in 0..b {
        for ch in 0..c {
            let base = (bi * c + ch) * plane;
            let gbase = bi * plane;
            for i in 0..plane {
                out.data_mut()[base + i] = gate_s.data()[gbase + i] * x1.data()[base + i];
            }
        }
    }
    let cache = CbamCache {
        avg,
        mx,
        arg_spatial,
        mlp_avg,
        mlp_max,
        gate_c,
        x1,
        cat,
        argc,
        gate_s,
    };
    Ok((out, cache))
}

/// Forward without the cache.
pub fn cbam(x: &FeatureMap, p: &CbamParams) -> Result<FeatureMap> {
    cbam_forward(x, p).map(|(y, _)| y)
}

/// Full gradient of the CBAM map, flowing through both gates and their
/// pooling/MLP/convolution internals.
pub fn cbam_backward(
    x: &FeatureMap,
    p: &CbamParams,
    cache: &CbamCache,
    grad_out: &FeatureMap,
) -> Result<(FeatureMap, CbamGrads)> {
    let (b, c, t, f) = x.dims();
    if grad_out.dims() != (b, c, t, f) {
        return Err(Error::shape("cbam grad_out shape mismatch"));
    }
    let plane = t * f;
    let mut grads = CbamGrads::zeros_like(p);

    // out = gate_s (*) x1  (gate broadcast over channels)
    let mut d_gs = FeatureMap::zeros(b, 1, t, f);
    let mut d_x1 = FeatureMap::zeros(b, c, t, f);
    for bi in 0..b {
        for ch in 0..c {
            let base = (bi * c + ch) * plane;
            let gbase = bi * plane;
            for i in 0..plane {
                let g = grad_out.data()[base + i];
                d_gs.data_mut()[gbase + i] += g * cache.x1.data()[base + i];
                d_x1.data_mut()[base + i] = g * cache.gate_s.data()[gbase + i];
            }
        }
    }

    // gate_s = sigmoid(zs)
    let mut d_zs = d_gs;
    for (g, &s) in d_zs.data_mut().iter_mut().zip(cache.gate_s.data()) {
        *g *= s * (1.0 - s);
    }

    // zs = conv(cat)
    let k = p.kernel_extent();
    let pad = (k - 1) / 2;
    let (d_cat, d_sk, d_sb) = conv2d_backward(
        &cache.cat,
        &p.spatial_kernel.value,
        (1, 1),
        (pad, pad),
        &d_zs,
    )?;
    grads.spatial_kernel = d_sk;
    grads.spatial_bias = d_sb;

    // cat = [mean_c(x1); max_c(x1)]
    for bi in 0..b {
        for ti in 0..t {
            for fi in 0..f {
                let dm = d_cat.at(bi, 0, ti, fi) / c as f64;
                for ch in 0..c {
                    let idx = d_x1.offset(bi, ch, ti, fi);
                    d_x1.data_mut()[idx] += dm;
                }
                let dmx = d_cat.at(bi, 1, ti, fi);
                let wc = cache.argc[(bi * t + ti) * f + fi];
                let idx = d_x1.offset(bi, wc, ti, fi);
                d_x1.data_mut()[idx] += dmx;
            }
        }
    }

    // x1 = gate_c (*) x  (gate broadcast over T, F)
    let mut d_gc = Tensor::zeros(&[b, c]);
    let mut d_x = FeatureMap::zeros(b, c, t, f);
    for bi in 0..b {
        for ch in 0..c {
            let base = (bi * c + ch) * plane;
            let g = cache.gate_c.at2(bi, ch);
            let mut acc = 0.0;
            for i in base..base + plane {
                acc += d_x1.data()[i] * x.data()[i];
                d_x.data_mut()[i] = d_x1.data()[i] * g;
            }
            d_gc.set2(bi, ch, acc);
        }
    }

    // gate_c = sigmoid(z), z = mlp(avg) + mlp(max)
    let mut d_z = d_gc;
    for (g, &s) in d_z.data_mut().iter_mut().zip(cache.gate_c.data()) {
        *g *= s * (1.0 - s);
    }
    let d_avg = mlp_backward(&cache.avg, p, &cache.mlp_avg, &d_z, &mut grads)?;
    let d_mx = mlp_backward(&cache.mx, p, &cache.mlp_max, &d_z, &mut grads)?;

    // Squeeze backward: avg spreads uniformly, max routes to the winner.
    for bi in 0..b {
        for ch in 0..c {
            let base = (bi * c + ch) * plane;
            let da = d_avg.at2(bi, ch) / plane as f64;
            for i in base..base + plane {
                d_x.data_mut()[i] += da;
            }
            d_x.data_mut()[cache.arg_spatial[bi * c + ch]] += d_mx.at2(bi, ch);
        }
    }
    Ok((d_x, grads))
}

/// Merge helper used by the AMFM backward, which calls into CBAM with a
/// masked upstream gradient.
pub(crate) fn accumulate_cbam_grads(dst: &mut CbamGrads, src: &CbamGrads) {
    dst.add(src);
}
