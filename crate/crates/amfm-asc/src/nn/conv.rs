//! 2-D convolution (cross-correlation, no kernel flip) with zero padding.

use crate::error::{Error, Result};
use crate::nn::threads;
use crate::tensor::{FeatureMap, Tensor};

/// Output extent along one axis: `(n + 2*pad - k) / stride + 1`, floor division.
pub fn conv_output_extent(n: usize, k: usize, pad: usize, stride: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::validation("conv stride must be >= 1"));
    }
    let eff = n + 2 * pad;
    if eff < k {
        return Err(Error::shape(format!(
            "kernel extent {k} larger than padded input extent {eff}"
        )));
    }
    Ok((eff - k) / stride + 1)
}

/// Half-open output-coordinate range for which `o*stride + k_off - pad` lands
/// inside `[0, in_extent)`.
#[inline]
fn out_range(
    k_off: usize,
    pad: usize,
    stride: usize,
    in_extent: usize,
    out_extent: usize,
) -> (usize, usize) {
    let lo = if pad > k_off {
        (pad - k_off + stride - 1) / stride
    } else {
        0
    };
    if in_extent + pad <= k_off {
        return (0, 0);
    }
    let hi = ((in_extent - 1 + pad - k_off) / stride + 1).min(out_extent);
    (lo.min(hi), hi)
}

struct ConvDims {
    batch: usize,
    cin: usize,
    t: usize,
    f: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    ot: usize,
    of: usize,
    stride: (usize, usize),
    padding: (usize, usize),
}

fn check_dims(
    input: &FeatureMap,
    kernel: &Tensor,
    bias: Option<&Tensor>,
    stride: (usize, usize),
    padding: (usize, usize),
) -> Result<ConvDims> {
    if kernel.rank() != 4 {
        return Err(Error::shape(format!(
            "conv kernel must be [Cout, Cin, kh, kw], got {:?}",
            kernel.shape()
        )));
    }
    let (batch, cin, t, f) = input.dims();
    let ks = kernel.shape();
    let (cout, kcin, kh, kw) = (ks[0], ks[1], ks[2], ks[3]);
    if kcin != cin {
        return Err(Error::shape(format!(
            "channel mismatch: input has {cin} channels, kernel expects {kcin}"
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::shape(format!(
                "bias shape {:?} does not match {cout} output channels",
                b.shape()
            )));
        }
    }
    let ot = conv_output_extent(t, kh, padding.0, stride.0)?;
    let of = conv_output_extent(f, kw, padding.1, stride.1)?;
    Ok(ConvDims {
        batch,
        cin,
        t,
        f,
        cout,
        kh,
        kw,
        ot,
        of,
        stride,
        padding,
    })
}

fn forward_sample(d: &ConvDims, x: &[f64], kernel: &[f64], bias: &[f64], out: &mut [f64]) {
    let (st, sf) = d.stride;
    let (pt, pf) = d.padding;
    for oc in 0..d.cout {
        let plane = &mut out[oc * d.ot * d.of..(oc + 1) * d.ot * d.of];
        plane.iter_mut().for_each(|v| *v = bias[oc]);
        for ic in 0..d.cin {
            let xin = &x[ic * d.t * d.f..(ic + 1) * d.t * d.f];
            for ki in 0..d.kh {
                let (t_lo, t_hi) = out_range(ki, pt, st, d.t, d.ot);
                for kj in 0..d.kw {
                    let w = kernel[((oc * d.cin + ic) * d.kh + ki) * d.kw + kj];
                    let (f_lo, f_hi) = out_range(kj, pf, sf, d.f, d.of);
                    for o_t in t_lo..t_hi {
                        let it = o_t * st + ki - pt;
                        let xrow = &xin[it * d.f..(it + 1) * d.f];
                        let orow = &mut plane[o_t * d.of..(o_t + 1) * d.of];
                        for o_f in f_lo..f_hi {
                            orow[o_f] += w * xrow[o_f * sf + kj - pf];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlate `input` with `kernel`, add `bias` per output channel.
///
/// Output shape is `[B, Cout, (T + 2p_t - kh)/s_t + 1, (F + 2p_f - kw)/s_f + 1]`.
pub fn conv2d(
    input: &FeatureMap,
    kernel: &Tensor,
    bias: &Tensor,
    stride: (usize, usize),
    padding: (usize, usize),
) -> Result<FeatureMap> {
    let d = check_dims(input, kernel, Some(bias), stride, padding)?;
    let mut out = FeatureMap::zeros(d.batch, d.cout, d.ot, d.of);
    let in_stride = d.cin * d.t * d.f;
    let out_stride = d.cout * d.ot * d.of;
    let workers = threads::num_threads().min(d.batch);
    if workers <= 1 {
        for b in 0..d.batch {
            forward_sample(
                &d,
                &input.data()[b * in_stride..(b + 1) * in_stride],
                kernel.data(),
                bias.data(),
                &mut out.data_mut()[b * out_stride..(b + 1) * out_stride],
            );
        }
    } else {
        let per = d.batch.div_ceil(workers);
        let out_data = out.data_mut();
        std::thread::scope(|s| {
            for (wi, block) in out_data.chunks_mut(per * out_stride).enumerate() {
                let d = &d;
                let input = &input;
                let kernel = kernel.data();
                let bias = bias.data();
                s.spawn(move || {
                    for (i, sample_out) in block.chunks_mut(out_stride).enumerate() {
                        let b = wi * per + i;
                        forward_sample(
                            d,
                            &input.data()[b * in_stride..(b + 1) * in_stride],
                            kernel,
                            bias,
                            sample_out,
                        );
                    }
                });
            }
        });
    }
    Ok(out)
}

fn backward_sample(
    d: &ConvDims,
    x: &[f64],
    kernel: &[f64],
    gout: &[f64],
    dx: &mut [f64],
    dk: &mut [f64],
    db: &mut [f64],
) {
    let (st, sf) = d.stride;
    let (pt, pf) = d.padding;
    for oc in 0..d.cout {
        let gplane = &gout[oc * d.ot * d.of..(oc + 1) * d.ot * d.of];
        db[oc] += gplane.iter().sum::<f64>();
        for ic in 0..d.cin {
            let xin = &x[ic * d.t * d.f..(ic + 1) * d.t * d.f];
            let dxin = ic * d.t * d.f;
            for ki in 0..d.kh {
                let (t_lo, t_hi) = out_range(ki, pt, st, d.t, d.ot);
                for kj in 0..d.kw {
                    let kidx = ((oc * d.cin + ic) * d.kh + ki) * d.kw + kj;
                    let w = kernel[kidx];
                    let (f_lo, f_hi) = out_range(kj, pf, sf, d.f, d.of);
                    let mut dk_acc = 0.0;
                    for o_t in t_lo..t_hi {
                        let it = o_t * st + ki - pt;
                        let grow = &gplane[o_t * d.of..(o_t + 1) * d.of];
                        for o_f in f_lo..f_hi {
                            let iff = o_f * sf + kj - pf;
                            let g = grow[o_f];
                            dx[dxin + it * d.f + iff] += g * w;
                            dk_acc += g * xin[it * d.f + iff];
                        }
                    }
                    dk[kidx] += dk_acc;
                }
            }
        }
    }
}

/// Gradients of a conv2d forward pass: `(grad_input, grad_kernel, grad_bias)`.
///
/// Weight gradients are accumulated into one buffer per sample and reduced in
/// sample order, so the result is bit-identical for every worker count.
pub fn conv2d_backward(
    input: &FeatureMap,
    kernel: &Tensor,
    stride: (usize, usize),
    padding: (usize, usize),
    grad_out: &FeatureMap,
) -> Result<(FeatureMap, Tensor, Tensor)> {
    let d = check_dims(input, kernel, None, stride, padding)?;
    if grad_out.dims() != (d.batch, d.cout, d.ot, d.of) {
        return Err(Error::shape(format!(
            "grad_out shape {:?} does not match conv output {:?}",
            grad_out.dims(),
            (d.batch, d.cout, d.ot, d.of)
        )));
    }
    let mut dx = FeatureMap::zeros(d.batch, d.cin, d.t, d.f);
    let mut dk = Tensor::zeros(kernel.shape());
    let mut db = Tensor::zeros(&[d.cout]);
    let in_stride = d.cin * d.t * d.f;
    let out_stride = d.cout * d.ot * d.of;
    let kn = kernel.numel();
    let mut dk_samples = vec![0.0; d.batch * kn];
    let mut db_samples = vec![0.0; d.batch * d.cout];
    let workers = threads::num_threads().min(d.batch);
    if workers <= 1 {
        for b in 0..d.batch {
            backward_sample(
                &d,
                &input.data()[b * in_stride..(b + 1) * in_stride],
                kernel.data(),
                &grad_out.data()[b * out_stride..(b + 1) * out_stride],
                &mut dx.data_mut()[b * in_stride..(b + 1) * in_stride],
                &mut dk_samples[b * kn..(b + 1) * kn],
                &mut db_samples[b * d.cout..(b + 1) * d.cout],
            );
        }
    } else {
        let per = d.batch.div_ceil(workers);
        let dx_data = dx.data_mut();
        std::thread::scope(|s| {
            for ((wi, block), (dk_block, db_block)) in
                dx_data.chunks_mut(per * in_stride).enumerate().zip(
                    dk_samples
                        .chunks_mut(per * kn)
                        .zip(db_samples.chunks_mut(per * d.cout)),
                )
            {
                let d = &d;
                let input = &input;
                let grad_out = &grad_out;
                let kernel = kernel.data();
                s.spawn(move || {
                    for (i, sample_dx) in block.chunks_mut(in_stride).enumerate() {
                        let b = wi * per + i;
                        backward_sample(
                            d,
                            &input.data()[b * in_stride..(b + 1) * in_stride],
                            kernel,
                            &grad_out.data()[b * out_stride..(b + 1) * out_stride],
                            sample_dx,
                            &mut dk_block[i * kn..(i + 1) * kn],
                            &mut db_block[i * d.cout..(i + 1) * d.cout],
                        );
                    }
                });
            }
        });
    }
    for b in 0..d.batch {
        for (dst, src) in dk
            .data_mut()
            .iter_mut()
            .zip(&dk_samples[b * kn..(b + 1) * kn])
        {
            *dst += src;
        }
        for (dst, src) in db
            .data_mut()
            .iter_mut()
            .zip(&db_samples[b * d.cout..(b + 1) * d.cout])
        {
            *dst += src;
        }
    }
    Ok((dx, dk, db))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    /// Six-nested-loop direct convolution, the independent oracle.
    fn conv_oracle(
        input: &FeatureMap,
        kernel: &Tensor,
        bias: &Tensor,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> FeatureMap {
        let (bn, cin, t, f) = input.dims();
        let ks = kernel.shape();
        let (cout, kh, kw) = (ks[0], ks[2], ks[3]);
        let ot = (t + 2 * padding.0 - kh) / stride.0 + 1;
        let of = (f + 2 * padding.1 - kw) / stride.1 + 1;
        let mut out = FeatureMap::zeros(bn, cout, ot, of);
        for b in 0..bn {
            for oc in 0..cout {
                for o_t in 0..ot {
                    for o_f in 0..of {
                        let mut acc = bias.data()[oc];
                        for ic in 0..cin {
                            for ki in 0..kh {
                                for kj in 0..kw {
                                    let it = (o_t * stride.0 + ki) as isize - padding.0 as isize;
                                    let iff = (o_f * stride.1 + kj) as isize - padding.1 as isize;
                                    if it >= 0
                                        && (it as usize) < t
                                        && iff >= 0
                                        && (iff as usize) < f
                                    {
                                        let kv =
                                            kernel.data()[((oc * cin + ic) * kh + ki) * kw + kj];
                                        acc += kv * input.at(b, ic, it as usize, iff as usize);
                                    }
                                }
                            }
                        }
                        out.set(b, oc, o_t, o_f, acc);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn scalar_scaling_kernel() {
        let input = FeatureMap::new(Tensor::full(&[1, 1, 2, 2], 1.0)).unwrap();
        let kernel = Tensor::from_vec(vec![1, 1, 1, 1], vec![2.0]).unwrap();
        let bias = Tensor::zeros(&[1]);
        let out = conv2d(&input, &kernel, &bias, (1, 1), (0, 0)).unwrap();
        assert_eq!(out.dims(), (1, 1, 2, 2));
        assert!(out.data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn identity_kernel_with_padding() {
        let mut rng = SeededRng::new(5);
        let input = FeatureMap::randn(1, 1, 4, 5, 1.0, &mut rng);
        let mut kdata = vec![0.0; 9];
        kdata[4] = 1.0; // center of 3x3
        let kernel = Tensor::from_vec(vec![1, 1, 3, 3], kdata).unwrap();
        let bias = Tensor::zeros(&[1]);
        let out = conv2d(&input, &kernel, &bias, (1, 1), (1, 1)).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut rng = SeededRng::new(7);
        let input = FeatureMap::randn(2, 3, 8, 8, 1.0, &mut rng);
        let kernel = Tensor::randn(&[4, 3, 3, 3], 1.0, &mut rng);
        let bias = Tensor::randn(&[4], 1.0, &mut rng);
        let got = conv2d(&input, &kernel, &bias, (1, 1), (1, 1)).unwrap();
        let want = conv_oracle(&input, &kernel, &bias, (1, 1), (1, 1));
        assert_eq!(got.dims(), want.dims());
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn random_shapes_match_oracle() {
        let mut rng = SeededRng::new(11);
        for _ in 0..1000 {
            let b = 1 + rng.below(2);
            let cin = 1 + rng.below(3);
            let cout = 1 + rng.below(3);
            let kh = 1 + rng.below(3);
            let kw = 1 + rng.below(3);
            let t = kh + rng.below(4);
            let f = kw + rng.below(4);
            let stride = (1 + rng.below(2), 1 + rng.below(2));
            let padding = (rng.below(2), rng.below(2));
            let input = FeatureMap::randn(b, cin, t, f, 1.0, &mut rng);
            let kernel = Tensor::randn(&[cout, cin, kh, kw], 1.0, &mut rng);
            let bias = Tensor::randn(&[cout], 1.0, &mut rng);
            let got = conv2d(&input, &kernel, &bias, stride, padding).unwrap();
            let want = conv_oracle(&input, &kernel, &bias, stride, padding);
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn rejects_channel_mismatch_and_empty_output() {
        let input = FeatureMap::zeros(1, 2, 4, 4);
        let kernel = Tensor::zeros(&[1, 3, 3, 3]);
        let bias = Tensor::zeros(&[1]);
        assert!(matches!(
            conv2d(&input, &kernel, &bias, (1, 1), (0, 0)),
            Err(Error::Shape(_))
        ));
        let kernel = Tensor::zeros(&[1, 2, 5, 5]);
        assert!(matches!(
            conv2d(&input, &kernel, &bias, (1, 1), (0, 0)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn parallel_matches_serial_bitwise() {
        let mut rng = SeededRng::new(23);
        let input = FeatureMap::randn(5, 3, 6, 7, 1.0, &mut rng);
        let kernel = Tensor::randn(&[4, 3, 3, 3], 1.0, &mut rng);
        let bias = Tensor::randn(&[4], 1.0, &mut rng);
        let gout = FeatureMap::randn(5, 4, 6, 7, 1.0, &mut rng);

        let serial = conv2d(&input, &kernel, &bias, (1, 1), (1, 1)).unwrap();
        let (sdx, sdk, sdb) = conv2d_backward(&input, &kernel, (1, 1), (1, 1), &gout).unwrap();
        threads::set_num_threads(3);
        let par = conv2d(&input, &kernel, &bias, (1, 1), (1, 1)).unwrap();
        let (pdx, pdk, pdb) = conv2d_backward(&input, &kernel, (1, 1), (1, 1), &gout).unwrap();
        threads::set_num_threads(1);

        assert_eq!(serial.data(), par.data());
        assert_eq!(sdx.data(), pdx.data());
        assert_eq!(sdk.data(), pdk.data());
        assert_eq!(sdb.data(), pdb.data());
    }

    #[test]
    fn backward_grads_match_oracle_sums() {
        // d_bias[oc] must equal the plain sum of grad_out over that channel.
        let mut rng = SeededRng::new(31);
        let input = FeatureMap::randn(2, 2, 5, 5, 1.0, &mut rng);
        let kernel = Tensor::randn(&[3, 2, 3, 3], 1.0, &mut rng);
        let gout = FeatureMap::randn(2, 3, 5, 5, 1.0, &mut rng);
        let (_, _, db) = conv2d_backward(&input, &kernel, (1, 1), (1, 1), &gout).unwrap();
        for oc in 0..3 {
            let mut want = 0.0;
            for b in 0..2 {
                for t in 0..5 {
                    for f in 0..5 {
                        want += gout.at(b, oc, t, f);
                    }
                }
            }
            assert!((db.data()[oc] - want).abs() < 1e-12);
        }
    }
}
