//! Affine map `y = x W^T + b` with weight layout `[Dout, D]`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn linear(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if input.rank() != 2 || weight.rank() != 2 || bias.rank() != 1 {
        return Err(Error::shape(format!(
            "linear expects input [B,D], weight [Dout,D], bias [Dout]; got {:?} {:?} {:?}",
            input.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    let (b, d) = (input.shape()[0], input.shape()[1]);
    let (dout, dw) = (weight.shape()[0], weight.shape()[1]);
    if d != dw || bias.shape()[0] != dout {
        return Err(Error::shape(format!(
            "linear dimension mismatch: input D={d}, weight [{dout},{dw}], bias {:?}",
            bias.shape()
        )));
    }
    let mut out = Tensor::zeros(&[b, dout]);
    let x = input.data();
    let w = weight.data();
    let bv = bias.data();
    let y = out.data_mut();
    for i in 0..b {
        let xrow = &x[i * d..(i + 1) * d];
        let yrow = &mut y[i * dout..(i + 1) * dout];
        for o in 0..dout {
            let wrow = &w[o * d..(o + 1) * d];
            let mut acc = bv[o];
            for k in 0..d {
                acc += xrow[k] * wrow[k];
            }
            yrow[o] = acc;
        }
    }
    Ok(out)
}

/// Gradients `(grad_input, grad_weight, grad_bias)` for a linear forward.
pub fn linear_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (b, d) = (input.shape()[0], input.shape()[1]);
    let dout = weight.shape()[0];
    if grad_out.shape() != [b, dout] {
        return Err(Error::shape(format!(
            "grad_out shape {:?} does not match [{b},{dout}]",
            grad_out.shape()
        )));
    }
    let mut dx = Tensor::zeros(&[b, d]);
    let mut dw = Tensor::zeros(weight.shape());
    let mut db = Tensor::zeros(&[dout]);
    let x = input.data();
    let w = weight.data();
    let g = grad_out.data();
    {
        let dxd = dx.data_mut();
        for i in 0..b {
            let grow = &g[i * dout..(i + 1) * dout];
            let dxrow = &mut dxd[i * d..(i + 1) * d];
            for o in 0..dout {
                let go = grow[o];
                let wrow = &w[o * d..(o + 1) * d];
                for k in 0..d {
                    dxrow[k] += go * wrow[k];
                }
            }
        }
    }
    {
        let dwd = dw.data_mut();
        let dbd = db.data_mut();
        for i in 0..b {
            let xrow = &x[i * d..(i + 1) * d];
            let grow = &g[i * dout..(i + 1) * dout];
            for o in 0..dout {
                let go = grow[o];
                dbd[o] += go;
                let dwrow = &mut dwd[o * d..(o + 1) * d];
                for k in 0..d {
                    dwrow[k] += go * xrow[k];
                }
            }
        }
    }
    Ok((dx, dw, db))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn matmul_oracle(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Tensor {
        let (b, d) = (input.shape()[0], input.shape()[1]);
        let dout = weight.shape()[0];
        let mut out = Tensor::zeros(&[b, dout]);
        for i in 0..b {
            for o in 0..dout {
                let mut acc = bias.data()[o];
                for k in 0..d {
                    acc += input.at2(i, k) * weight.at2(o, k);
                }
                out.set2(i, o, acc);
            }
        }
        out
    }

    #[test]
    fn identity_weight_is_identity_map() {
        let input = Tensor::from_vec(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            w.set2(i, i, 1.0);
        }
        let out = linear(&input, &w, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn hand_matrix_example() {
        // [1,2] * [[1,1],[1,-1]]^rows + [0,1] = [3, 0]
        let input = Tensor::from_vec(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let weight = Tensor::from_vec(vec![2, 2], vec![1.0, 1.0, 1.0, -1.0]).unwrap();
        let bias = Tensor::from_vec(vec![2], vec![0.0, 1.0]).unwrap();
        let out = linear(&input, &weight, &bias).unwrap();
        assert_eq!(out.data(), &[3.0, 0.0]);
    }

    #[test]
    fn matches_triple_loop_oracle() {
        let mut rng = SeededRng::new(2);
        let input = Tensor::randn(&[5, 7], 1.0, &mut rng);
        let weight = Tensor::randn(&[4, 7], 1.0, &mut rng);
        let bias = Tensor::randn(&[4], 1.0, &mut rng);
        let got = linear(&input, &weight, &bias).unwrap();
        let want = matmul_oracle(&input, &weight, &bias);
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn random_shapes_match_oracle() {
        let mut rng = SeededRng::new(13);
        for _ in 0..1000 {
            let b = 1 + rng.below(4);
            let d = 1 + rng.below(6);
            let dout = 1 + rng.below(6);
            let input = Tensor::randn(&[b, d], 1.0, &mut rng);
            let weight = Tensor::randn(&[dout, d], 1.0, &mut rng);
            let bias = Tensor::randn(&[dout], 1.0, &mut rng);
            let got = linear(&input, &weight, &bias).unwrap();
            let want = matmul_oracle(&input, &weight, &bias);
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let input = Tensor::zeros(&[2, 3]);
        let weight = Tensor::zeros(&[4, 5]);
        let bias = Tensor::zeros(&[4]);
        assert!(matches!(
            linear(&input, &weight, &bias),
            Err(Error::Shape(_))
        ));
    }
}
