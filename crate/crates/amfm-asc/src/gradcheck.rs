//! Finite-difference gradient verification.
//!
//! Each layer's analytic backward is checked against central differences of a
//! scalarized forward: the layer output is contracted with a fixed random
//! projection vector, giving a scalar function of the flattened inputs and
//! parameters. Max-operator kinks (MFM, AMFM, max pooling, ReLU) make the
//! numeric derivative meaningless near ties, so every suite that contains one
//! resamples its random point until all competitions are decided by a safe
//! margin. Coordinates whose true derivative is tiny-but-nonzero are likewise
//! below the finite-difference noise floor and force a resample.

use crate::amfm::{amfm_backward, amfm_block_params_init, mfm, mfm_backward, AmfmBlock};
use crate::attention::{cbam_backward, cbam_forward, channel_attention, CbamParams};
use crate::error::{Error, Result};
use crate::nn::{
    activation, activation_backward, batchnorm2d, batchnorm2d_backward, conv2d, conv2d_backward,
    linear, linear_backward, pool2d_backward, pool2d_forward, softmax_cross_entropy, Activation,
    BatchNormState, BnMode, PoolKind,
};
use crate::rng::SeededRng;
use crate::tensor::{FeatureMap, Tensor};

/// Finite-difference step. Near-optimal for central differences in f64 on
/// unit-scale values.
pub const FD_EPS: f64 = 1e-5;

/// Minimum winner-runner-up gap tolerated near any max/relu kink.
const TIE_MARGIN: f64 = 1e-3;

/// Central differences on an O(1) scalar carry an absolute noise floor around
/// 1e-10, so a coordinate whose true derivative is tiny-but-nonzero cannot be
/// certified to a relative tolerance. Exactly-zero entries are fine: the two
/// probes then agree bitwise and the numeric difference cancels.
fn well_conditioned(analytic: &[f64], floor: f64) -> bool {
    analytic.iter().all(|&a| a == 0.0 || a.abs() >= floor)
}

/// Central-difference check of `analytic` against the scalar function `f` at
/// `point`. Returns the max over coordinates of
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn gradcheck(
    mut f: impl FnMut(&[f64]) -> Result<f64>,
    point: &[f64],
    analytic: &[f64],
    eps: f64,
) -> Result<f64> {
    assert_eq!(point.len(), analytic.len());
    let mut buf = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..point.len() {
        buf[i] = point[i] + eps;
        let fp = f(&buf)?;
        buf[i] = point[i] - eps;
        let fm = f(&buf)?;
        buf[i] = point[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite value while probing coordinate {i}: f+={fp}, f-={fm}"
            )));
        }
        let numeric = (fp - fm) / (2.0 * eps);
        let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-8);
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}

/// One named entry of the verification suite.
pub struct SuiteResult {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

/// Run the full per-layer verification suite. `tolerance_override` replaces
/// every per-suite tolerance when given.
pub fn run_suite(seed: u64, tolerance_override: Option<f64>) -> Result<Vec<SuiteResult>> {
    let mut rng = SeededRng::new(seed);
    let tol = |default: f64| tolerance_override.unwrap_or(default);
    Ok(vec![
        SuiteResult {
            name: "linear",
            max_rel_err: check_linear(&mut rng)?,
            tolerance: tol(1e-6),
        },
        SuiteResult {
            name: "activation_sigmoid",
            max_rel_err: check_activation(Activation::Sigmoid, &mut rng)?,
            tolerance: tol(1e-6),
        },
        SuiteResult {
            name: "activation_relu",
            max_rel_err: check_activation(Activation::Relu, &mut rng)?,
            tolerance: tol(1e-6),
        },
        SuiteResult {
            name: "activation_leaky_relu",
            max_rel_err: check_activation(Activation::LeakyRelu(0.01), &mut rng)?,
            tolerance: tol(1e-6),
        },
        SuiteResult {
            name: "softmax_cross_entropy",
            max_rel_err: check_softmax_ce(&mut rng)?,
            tolerance: tol(1e-6),
        },
        SuiteResult {
            name: "conv2d",
            max_rel_err: check_conv2d(&mut rng)?,
            tolerance: tol(1e-5),
        },
        SuiteResult {
            name: "batchnorm2d",
            max_rel_err: check_batchnorm(&mut rng)?,
            tolerance: tol(1e-5),
        },
        SuiteResult {
            name: "pool_max",
            max_rel_err: check_pool(PoolKind::Max, &mut rng)?,
            tolerance: tol(1e-5),
        },
        SuiteResult {
            name: "pool_avg",
            max_rel_err: check_pool(PoolKind::Avg, &mut rng)?,
            tolerance: tol(1e-5),
        },
        SuiteResult {
            name: "mfm",
            max_rel_err: check_mfm(&mut rng)?,
            tolerance: tol(1e-5),
        },
        SuiteResult {
            name: "cbam",
            max_rel_err: check_cbam(&mut rng)?,
            tolerance: tol(1e-4),
        },
        SuiteResult {
            name: "amfm",
            max_rel_err: check_amfm(&mut rng)?,
            tolerance: tol(1e-4),
        },
        SuiteResult {
            name: "amfm_block",
            max_rel_err: check_amfm_block(&mut rng)?,
            tolerance: tol(1e-4),
        },
    ])
}

/// Random projection with entries scaled so the contracted scalar stays O(1).
fn projection(n: usize, rng: &mut SeededRng) -> Vec<f64> {
    let s = 1.0 / (n as f64).sqrt();
    (0..n).map(|_| s * rng.normal()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn check_linear(rng: &mut SeededRng) -> Result<f64> {
    let (b, d, dout) = (3, 5, 4);
    loop {
        let input = Tensor::randn(&[b, d], 1.0, rng);
        let weight = Tensor::randn(&[dout, d], 1.0, rng);
        let bias = Tensor::randn(&[dout], 1.0, rng);
        let proj = projection(b * dout, rng);

        let gout = Tensor::from_vec(vec![b, dout], proj.clone())?;
        let (dx, dw, db) = linear_backward(&input, &weight, &gout)?;
        let mut analytic = dx.into_data();
        analytic.extend(dw.into_data());
        analytic.extend(db.into_data());
        if !well_conditioned(&analytic, 1e-4) {
            continue;
        }

        // Flat layout: input | weight | bias.
        let mut point = input.data().to_vec();
        point.extend_from_slice(weight.data());
        point.extend_from_slice(bias.data());

        let f = |p: &[f64]| -> Result<f64> {
            let x = Tensor::from_vec(vec![b, d], p[..b * d].to_vec())?;
            let w = Tensor::from_vec(vec![dout, d], p[b * d..b * d + dout * d].to_vec())?;
            let bv = Tensor::from_vec(vec![dout], p[b * d + dout * d..].to_vec())?;
            Ok(dot(linear(&x, &w, &bv)?.data(), &proj))
        };
        return gradcheck(f, &point, &analytic, FD_EPS);
    }
}

pub fn check_activation(kind: Activation, rng: &mut SeededRng) -> Result<f64> {
    loop {
        let input = Tensor::randn(&[24], 1.0, rng);
        // No coordinate may sit near the rectifier kink at 0.
        if !matches!(kind, Activation::Sigmoid)
            && input.data().iter().any(|&x| x.abs() <= TIE_MARGIN)
        {
            continue;
        }
        let proj = projection(input.numel(), rng);
        let out = activation(&input, kind);
        let gout = Tensor::from_vec(vec![input.numel()], proj.clone())?;
        let analytic = activation_backward(kind, &input, &out, &gout);
        if !well_conditioned(analytic.data(), 1e-4) {
            continue;
        }
        let f = |p: &[f64]| -> Result<f64> {
            let x = Tensor::from_vec(vec![p.len()], p.to_vec())?;
            Ok(dot(activation(&x, kind).data(), &proj))
        };
        return gradcheck(f, input.data(), analytic.data(), FD_EPS);
    }
}

pub fn check_softmax_ce(rng: &mut SeededRng) -> Result<f64> {
    let (b, c) = (3, 7);
    loop {
        let logits = Tensor::randn(&[b, c], 1.5, rng);
        let mut target = Tensor::zeros(&[b, c]);
        for i in 0..b {
            let mut row: Vec<f64> = (0..c).map(|_| rng.uniform() + 0.05).collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            target.data_mut()[i * c..(i + 1) * c].copy_from_slice(&row);
        }
        let (_, grad) = softmax_cross_entropy(&logits, &target)?;
        if !well_conditioned(grad.data(), 1e-4) {
            continue;
        }
        let f = |p: &[f64]| -> Result<f64> {
            let l = Tensor::from_vec(vec![b, c], p.to_vec())?;
            Ok(softmax_cross_entropy(&l, &target)?.0)
        };
        return gradcheck(f, logits.data(), grad.data(), FD_EPS);
    }
}

pub fn check_conv2d(rng: &mut SeededRng) -> Result<f64> {
    let (b, cin, cout, t, fr) = (2, 2, 3, 5, 6);
    let stride = (1, 1);
    let padding = (1, 1);
    loop {
        let input = FeatureMap::randn(b, cin, t, fr, 1.0, rng);
        let kernel = Tensor::randn(&[cout, cin, 3, 3], 0.5, rng);
        let bias = Tensor::randn(&[cout], 0.5, rng);
        let out = conv2d(&input, &kernel, &bias, stride, padding)?;
        let proj = projection(out.numel(), rng);
        let (nin, nk) = (input.numel(), kernel.numel());
        let odims = out.dims();

        let gout = FeatureMap::new(Tensor::from_vec(
            vec![odims.0, odims.1, odims.2, odims.3],
            proj.clone(),
        )?)?;
        let (dx, dk, db) = conv2d_backward(&input, &kernel, stride, padding, &gout)?;
        let mut analytic = dx.into_tensor().into_data();
        analytic.extend(dk.into_data());
        analytic.extend(db.into_data());
        if !well_conditioned(&analytic, 3e-5) {
            continue;
        }

        let mut point = input.data().to_vec();
        point.extend_from_slice(kernel.data());
        point.extend_from_slice(bias.data());

        let f = |p: &[f64]| -> Result<f64> {
            let x = FeatureMap::new(Tensor::from_vec(vec![b, cin, t, fr], p[..nin].to_vec())?)?;
            let k = Tensor::from_vec(vec![cout, cin, 3, 3], p[nin..nin + nk].to_vec())?;
            let bv = Tensor::from_vec(vec![cout], p[nin + nk..].to_vec())?;
            Ok(dot(conv2d(&x, &k, &bv, stride, padding)?.data(), &proj))
        };
        return gradcheck(f, &point, &analytic, FD_EPS);
    }
}

pub fn check_batchnorm(rng: &mut SeededRng) -> Result<f64> {
    let (b, c, t, fr) = (3, 2, 4, 4);
    let eps = 1e-5;
    loop {
        let input = FeatureMap::randn(b, c, t, fr, 1.0, rng);
        let gamma = Tensor::randn(&[c], 0.5, rng).map(|g| g + 1.0);
        let beta = Tensor::randn(&[c], 0.5, rng);
        let (out, cache) = {
            let mut state = BatchNormState::new(c);
            batchnorm2d(&input, &gamma, &beta, &mut state, BnMode::Train, eps)?
        };
        let proj = projection(out.numel(), rng);
        let nin = input.numel();

        let gout = FeatureMap::new(Tensor::from_vec(vec![b, c, t, fr], proj.clone())?)?;
        let (dx, dgamma, dbeta) = batchnorm2d_backward(&gamma, cache.as_ref().unwrap(), &gout)?;
        let mut analytic = dx.into_tensor().into_data();
        analytic.extend(dgamma.into_data());
        analytic.extend(dbeta.into_data());
        if !well_conditioned(&analytic, 3e-5) {
            continue;
        }

        let mut point = input.data().to_vec();
        point.extend_from_slice(gamma.data());
        point.extend_from_slice(beta.data());

        let f = |p: &[f64]| -> Result<f64> {
            let x = FeatureMap::new(Tensor::from_vec(vec![b, c, t, fr], p[..nin].to_vec())?)?;
            let g = Tensor::from_vec(vec![c], p[nin..nin + c].to_vec())?;
            let be = Tensor::from_vec(vec![c], p[nin + c..].to_vec())?;
            let mut state = BatchNormState::new(c);
            let (y, _) = batchnorm2d(&x, &g, &be, &mut state, BnMode::Train, eps)?;
            Ok(dot(y.data(), &proj))
        };
        return gradcheck(f, &point, &analytic, FD_EPS);
    }
}

/// Minimum winner-runner-up gap over all pooling windows.
fn pool_margin(input: &FeatureMap, window: (usize, usize), stride: (usize, usize)) -> f64 {
    let (b, c, t, fr) = input.dims();
    let mut margin = f64::INFINITY;
    for bi in 0..b {
        for ch in 0..c {
            let mut o_t = 0;
            while o_t * stride.0 + window.0 <= t {
                let mut o_f = 0;
                while o_f * stride.1 + window.1 <= fr {
                    let mut best = f64::NEG_INFINITY;
                    let mut second = f64::NEG_INFINITY;
                    for dt in 0..window.0 {
                        for df in 0..window.1 {
                            let v = input.at(bi, ch, o_t * stride.0 + dt, o_f * stride.1 + df);
                            if v > best {
                                second = best;
                                best = v;
                            } else if v > second {
                                second = v;
                            }
                        }
                    }
                    margin = margin.min(best - second);
                    o_f += 1;
                }
                o_t += 1;
            }
        }
    }
    margin
}

pub fn check_pool(kind: PoolKind, rng: &mut SeededRng) -> Result<f64> {
    let (b, c, t, fr) = (2, 2, 4, 6);
    let window = (2, 2);
    let stride = (2, 2);
    loop {
        let input = FeatureMap::randn(b, c, t, fr, 1.0, rng);
        if kind == PoolKind::Max && pool_margin(&input, window, stride) <= TIE_MARGIN {
            continue;
        }
        let (out, cache) = pool2d_forward(&input, kind, window, stride)?;
        let proj = projection(out.numel(), rng);
        let odims = out.dims();
        let gout = FeatureMap::new(Tensor::from_vec(
            vec![odims.0, odims.1, odims.2, odims.3],
            proj.clone(),
        )?)?;
        let dx = pool2d_backward(&cache, &gout)?;
        if !well_conditioned(dx.data(), 3e-5) {
            continue;
        }
        let f = |p: &[f64]| -> Result<f64> {
            let x = FeatureMap::new(Tensor::from_vec(vec![b, c, t, fr], p.to_vec())?)?;
            let (y, _) = pool2d_forward(&x, kind, window, stride)?;
            Ok(dot(y.data(), &proj))
        };
        return gradcheck(f, input.data(), dx.data(), FD_EPS);
    }
}

/// Minimum |a1 - a2| gap of an MFM input.
fn mfm_margin(x: &FeatureMap) -> f64 {
    let (b, c, t, fr) = x.dims();
    let half = c / 2;
    let mut m = f64::INFINITY;
    for bi in 0..b {
        for ch in 0..half {
            for ti in 0..t {
                for fi in 0..fr {
                    m = m.min((x.at(bi, ch, ti, fi) - x.at(bi, half + ch, ti, fi)).abs());
                }
            }
        }
    }
    m
}

pub fn check_mfm(rng: &mut SeededRng) -> Result<f64> {
    let (b, c, t, fr) = (2, 6, 3, 4);
    loop {
        let input = FeatureMap::randn(b, c, t, fr, 1.0, rng);
        if mfm_margin(&input) <= TIE_MARGIN {
            continue;
        }
        let out = mfm(&input)?;
        let proj = projection(out.numel(), rng);
        let odims = out.dims();
        let gout = FeatureMap::new(Tensor::from_vec(
            vec![odims.0, odims.1, odims.2, odims.3],
            proj.clone(),
        )?)?;
        let dx = mfm_backward(&input, &gout)?;
        if !well_conditioned(dx.data(), 3e-5) {
            continue;
        }
        let f = |p: &[f64]| -> Result<f64> {
            let x = FeatureMap::new(Tensor::from_vec(vec![b, c, t, fr], p.to_vec())?)?;
            Ok(dot(mfm(&x)?.data(), &proj))
        };
        return gradcheck(f, input.data(), dx.data(), FD_EPS);
    }
}

/// Tie margins inside a CBAM application at `x`: global-max pooling gaps, the
/// channel-max gaps of the spatial branch, the excitation-MLP ReLU preacts,
/// and (for AMFM) the |x - cbam(x)| competition gap.
fn cbam_margin(x: &FeatureMap, p: &CbamParams, include_amfm_gap: bool) -> f64 {
    let (b, c, t, fr) = x.dims();
    let mut margin = f64::INFINITY;
    // Global max pooling over T x F per (b, c): winner vs runner-up.
    for bi in 0..b {
        for ch in 0..c {
            let mut best = f64::NEG_INFINITY;
            let mut second = f64::NEG_INFINITY;
            for ti in 0..t {
                for fi in 0..fr {
                    let v = x.at(bi, ch, ti, fi);
                    if v > best {
                        second = best;
                        best = v;
                    } else if v > second {
                        second = v;
                    }
                }
            }
            if t * fr > 1 {
                margin = margin.min(best - second);
            }
        }
    }
    // Excitation MLP ReLU preactivations for both pooled vectors.
    let hidden = p.mlp_w1.value.shape()[0];
    for bi in 0..b {
        for pooled in [pooled_avg(x, bi), pooled_max(x, bi)] {
            for h in 0..hidden {
                let mut z = p.mlp_b1.value.data()[h];
                for ch in 0..c {
                    z += p.mlp_w1.value.at2(h, ch) * pooled[ch];
                }
                margin = margin.min(z.abs());
            }
        }
    }
    // Channel-max gaps on the channel-gated map (input to the spatial branch).
    let gate = channel_attention(x, p).expect("channel_attention in margin probe");
    for bi in 0..b {
        for ti in 0..t {
            for fi in 0..fr {
                let mut best = f64::NEG_INFINITY;
                let mut second = f64::NEG_INFINITY;
                for ch in 0..c {
                    let v = x.at(bi, ch, ti, fi) * gate.at(bi, ch, 0, 0);
                    if v > best {
                        second = best;
                        best = v;
                    } else if v > second {
                        second = v;
                    }
                }
                if c > 1 {
                    margin = margin.min(best - second);
                }
            }
        }
    }
    if include_amfm_gap {
        let (y, _) = cbam_forward(x, p).expect("cbam in margin probe");
        for (a, b) in x.data().iter().zip(y.data()) {
            margin = margin.min((a - b).abs());
        }
    }
    margin
}

fn pooled_avg(x: &FeatureMap, bi: usize) -> Vec<f64> {
    let (_, c, t, fr) = x.dims();
    (0..c)
        .map(|ch| {
            let mut s = 0.0;
            for ti in 0..t {
                for fi in 0..fr {
                    s += x.at(bi, ch, ti, fi);
                }
            }
            s / (t * fr) as f64
        })
        .collect()
}

fn pooled_max(x: &FeatureMap, bi: usize) -> Vec<f64> {
    let (_, c, t, fr) = x.dims();
    (0..c)
        .map(|ch| {
            let mut m = f64::NEG_INFINITY;
            for ti in 0..t {
                for fi in 0..fr {
                    m = m.max(x.at(bi, ch, ti, fi));
                }
            }
            m
        })
        .collect()
}

fn cbam_like_check(rng: &mut SeededRng, amfm_variant: bool) -> Result<f64> {
    let (b, c, t, fr) = (1, 4, 4, 5);
    loop {
        let input = FeatureMap::randn(b, c, t, fr, 1.0, rng);
        let params = CbamParams::init(c, 8, 3, rng);
        if cbam_margin(&input, &params, amfm_variant) <= TIE_MARGIN {
            continue;
        }
        let nin = input.numel();
        let pshape: Vec<(Vec<usize>, usize)> = params
            .tensors()
            .iter()
            .map(|t| (t.shape().to_vec(), t.numel()))
            .collect();
        let proj = projection(nin, rng);

        let gout = FeatureMap::new(Tensor::from_vec(vec![b, c, t, fr], proj.clone())?)?;
        let (dx, dp) = if amfm_variant {
            amfm_backward(&input, &params, &gout)?
        } else {
            let (_, cache) = cbam_forward(&input, &params)?;
            cbam_backward(&input, &params, &cache, &gout)?
        };
        let mut analytic = dx.into_tensor().into_data();
        for g in dp.into_tensors() {
            analytic.extend(g.into_data());
        }
        if !well_conditioned(&analytic, 1e-5) {
            continue;
        }

        let mut point = input.data().to_vec();
        for tns in params.tensors() {
            point.extend_from_slice(tns.data());
        }

        let run = |p: &[f64]| -> Result<f64> {
            let x = FeatureMap::new(Tensor::from_vec(vec![b, c, t, fr], p[..nin].to_vec())?)?;
            let mut off = nin;
            let mut parts = Vec::new();
            for (shape, len) in &pshape {
                parts.push(Tensor::from_vec(shape.clone(), p[off..off + len].to_vec())?);
                off += len;
            }
            let cp = CbamParams::from_tensors(parts)?;
            let y = if amfm_variant {
                crate::amfm::amfm(&x, &cp)?
            } else {
                cbam_forward(&x, &cp)?.0
            };
            Ok(dot(y.data(), &proj))
        };
        return gradcheck(run, &point, &analytic, FD_EPS);
    }
}

pub fn check_cbam(rng: &mut SeededRng) -> Result<f64> {
    cbam_like_check(rng, false)
}

pub fn check_amfm(rng: &mut SeededRng) -> Result<f64> {
    cbam_like_check(rng, true)
}

pub fn check_amfm_block(rng: &mut SeededRng) -> Result<f64> {
    let (b, cin, t, fr) = (1, 2, 6, 6);
    let half = 4; // post-MFM channels
    let pool = (2, 2);
    // Resample until every max competition inside the block is clean: MFM
    // halves after conv, CBAM internals on the normalized map, the AMFM gap,
    // and final pooling windows.
    loop {
        let input = FeatureMap::randn(b, cin, t, fr, 1.0, rng);
        let mut block = AmfmBlock::init("probe", cin, half, 8, 3, rng);
        // Batchnorm zero-centers each channel, so with beta = 0 the avg-pooled
        // vector feeding the excitation MLP sits exactly on the ReLU kink.
        // Randomize the biases to probe at a generic point.
        block.bn_beta.value = Tensor::randn(&[half], 0.5, rng);
        block.cbam.mlp_b1.value = Tensor::randn(block.cbam.mlp_b1.value.shape(), 0.3, rng);
        let block = block;
        let conv_out = conv2d(
            &input,
            &block.conv_kernel.value,
            &block.conv_bias.value,
            (1, 1),
            (1, 1),
        )?;
        if mfm_margin(&conv_out) <= TIE_MARGIN {
            continue;
        }
        let pre = mfm(&conv_out)?;
        let mut probe_state = BatchNormState::new(half);
        let (normed, _) = batchnorm2d(
            &pre,
            &block.bn_gamma.value,
            &block.bn_beta.value,
            &mut probe_state,
            BnMode::Train,
            crate::amfm::BN_EPS,
        )?;
        if cbam_margin(&normed, &block.cbam, true) <= TIE_MARGIN {
            continue;
        }
        let amfm_out = crate::amfm::amfm(&normed, &block.cbam)?;
        if pool_margin(&amfm_out, pool, pool) <= TIE_MARGIN {
            continue;
        }

        let shapes: Vec<(Vec<usize>, usize)> = block
            .param_values()
            .iter()
            .map(|t| (t.shape().to_vec(), t.numel()))
            .collect();
        let nin = input.numel();
        let out_t = t / pool.0;
        let out_f = fr / pool.1;
        let proj = projection(b * half * out_t * out_f, rng);

        let mut state = BatchNormState::new(half);
        let (out, _taps, cache) = block.forward_train(&input, pool, &mut state)?;
        let gout = FeatureMap::new(Tensor::from_vec(
            vec![out.batch(), out.channels(), out.frames(), out.bins()],
            proj.clone(),
        )?)?;
        let (dx, grads) = block.backward(&cache, &gout)?;
        let mut analytic = dx.into_tensor().into_data();
        for g in grads.into_tensors() {
            analytic.extend(g.into_data());
        }
        if !well_conditioned(&analytic, 1e-5) {
            continue;
        }

        let mut point = input.data().to_vec();
        for v in block.param_values() {
            point.extend_from_slice(v.data());
        }

        let run = |p: &[f64]| -> Result<f64> {
            let x = FeatureMap::new(Tensor::from_vec(vec![b, cin, t, fr], p[..nin].to_vec())?)?;
            let mut off = nin;
            let mut parts = Vec::new();
            for (shape, len) in &shapes {
                parts.push(Tensor::from_vec(shape.clone(), p[off..off + len].to_vec())?);
                off += len;
            }
            let probe = amfm_block_params_init(cin, half, 8, 3, parts)?;
            let mut state = BatchNormState::new(half);
            let (y, _, _) = probe.forward_train(&x, pool, &mut state)?;
            Ok(dot(y.data(), &proj))
        };
        return gradcheck(run, &point, &analytic, FD_EPS);
    }
}
