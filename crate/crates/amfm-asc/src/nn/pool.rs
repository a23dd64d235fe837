//! Spatial pooling: windowed max/avg and global max/avg.

use crate::error::{Error, Result};
use crate::tensor::FeatureMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Avg,
    GlobalMax,
    GlobalAvg,
}

/// Backward bookkeeping. Max kinds remember the winning input offset per
/// output element (first occurrence in row-major scan on ties); avg kinds only
/// need the divisor.
#[derive(Debug, Clone)]
pub struct PoolCache {
    kind: PoolKind,
    in_dims: (usize, usize, usize, usize),
    out_dims: (usize, usize, usize, usize),
    argmax: Vec<usize>,
    divisor: f64,
    window: (usize, usize),
    stride: (usize, usize),
}

fn out_extent(n: usize, w: usize, s: usize) -> usize {
    (n - w) / s + 1
}

/// Pool and return the backward cache. `window`/`stride` are ignored by the
/// global kinds.
pub fn pool2d_forward(
    input: &FeatureMap,
    kind: PoolKind,
    window: (usize, usize),
    stride: (usize, usize),
) -> Result<(FeatureMap, PoolCache)> {
    let (b, c, t, f) = input.dims();
    let (window, stride) = match kind {
        PoolKind::GlobalMax | PoolKind::GlobalAvg => ((t, f), (1, 1)),
        _ => {
            if window.0 == 0 || window.1 == 0 || stride.0 == 0 || stride.1 == 0 {
                return Err(Error::validation("pool window and stride must be >= 1"));
            }
            if window.0 > t || window.1 > f {
                return Err(Error::shape(format!(
                    "pool window {window:?} larger than input extents ({t}, {f})"
                )));
            }
            (window, stride)
        }
    };
    let (ot, of) = (
        out_extent(t, window.0, stride.0),
        out_extent(f, window.1, stride.1),
    );
    let mut out = FeatureMap::zeros(b, c, ot, of);
    let is_max = matches!(kind, PoolKind::Max | PoolKind::GlobalMax);
    let mut argmax = if is_max {
        vec![0usize; b * c * ot * of]
    } else {
        Vec::new()
    };
    let divisor = (window.0 * window.1) as f64;
    for bi in 0..b {
        for ch in 0..c {
            for o_t in 0..ot {
                for o_f in 0..of {
                    let t0 = o_t * stride.0;
                    let f0 = o_f * stride.1;
                    if is_max {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0usize;
                        for dt in 0..window.0 {
                            for df in 0..window.1 {
                                let idx = input.offset(bi, ch, t0 + dt, f0 + df);
                                let v = input.data()[idx];
                                if v > best {
                                    best = v;
                                    best_idx = idx;
                                }
                            }
                        }
                        let oidx = out.offset(bi, ch, o_t, o_f);
                        out.data_mut()[oidx] = best;
                        argmax[oidx] = best_idx;
                    } else {
                        let mut acc = 0.0;
                        for dt in 0..window.0 {
                            for df in 0..window.1 {
                                acc += input.at(bi, ch, t0 + dt, f0 + df);
                            }
                        }
                        out.set(bi, ch, o_t, o_f, acc / divisor);
                    }
                }
            }
        }
    }
    let cache = PoolCache {
        kind,
        in_dims: (b, c, t, f),
        out_dims: (b, c, ot, of),
        argmax,
        divisor,
        window,
        stride,
    };
    Ok((out, cache))
}

/// Forward only.
pub fn pool2d(
    input: &FeatureMap,
    kind: PoolKind,
    window: (usize, usize),
    stride: (usize, usize),
) -> Result<FeatureMap> {
    pool2d_forward(input, kind, window, stride).map(|(out, _)| out)
}

/// Max routes each output gradient to its argmax position; avg spreads it
/// uniformly over the window.
pub fn pool2d_backward(cache: &PoolCache, grad_out: &FeatureMap) -> Result<FeatureMap> {
    if grad_out.dims() != cache.out_dims {
        return Err(Error::shape(format!(
            "grad_out shape {:?} does not match pool output {:?}",
            grad_out.dims(),
            cache.out_dims
        )));
    }
    let (b, c, _, _) = cache.in_dims;
    let (_, _, ot, of) = cache.out_dims;
    let mut dx = FeatureMap::zeros(
        cache.in_dims.0,
        cache.in_dims.1,
        cache.in_dims.2,
        cache.in_dims.3,
    );
    match cache.kind {
        PoolKind::Max | PoolKind::GlobalMax => {
            for (oidx, &iidx) in cache.argmax.iter().enumerate() {
                dx.data_mut()[iidx] += grad_out.data()[oidx];
            }
        }
        PoolKind::Avg | PoolKind::GlobalAvg => {
            let share = 1.0 / cache.divisor;
            for bi in 0..b {
                for ch in 0..c {
                    for o_t in 0..ot {
                        for o_f in 0..of {
                            let g = grad_out.at(bi, ch, o_t, o_f) * share;
                            let t0 = o_t * cache.stride.0;
                            let f0 = o_f * cache.stride.1;
                            for dt in 0..cache.window.0 {
                                for df in 0..cache.window.1 {
                                    let idx = dx.offset(bi, ch, t0 + dt, f0 + df);
                                    dx.data_mut()[idx] += g;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(dx)
}
