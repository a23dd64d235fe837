//! Elementwise activations.

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Sigmoid,
    Relu,
    /// Negative-side slope. The derivative at exactly 0 is defined as the slope.
    LeakyRelu(f64),
}

pub fn activation(input: &Tensor, kind: Activation) -> Tensor {
    match kind {
        Activation::Sigmoid => input.map(sigmoid),
        Activation::Relu => input.map(|x| if x > 0.0 { x } else { 0.0 }),
        Activation::LeakyRelu(slope) => input.map(|x| if x > 0.0 { x } else { slope * x }),
    }
}

/// Elementwise derivative chained with `grad_out`. Sigmoid differentiates via
/// its own output `y(1-y)`; the rectifiers via the input sign.
pub fn activation_backward(
    kind: Activation,
    input: &Tensor,
    output: &Tensor,
    grad_out: &Tensor,
) -> Tensor {
    let mut dx = Tensor::zeros(input.shape());
    let d = dx.data_mut();
    match kind {
        Activation::Sigmoid => {
            for i in 0..d.len() {
                let y = output.data()[i];
                d[i] = grad_out.data()[i] * y * (1.0 - y);
            }
        }
        Activation::Relu => {
            for i in 0..d.len() {
                d[i] = if input.data()[i] > 0.0 {
                    grad_out.data()[i]
                } else {
                    0.0
                };
            }
        }
        Activation::LeakyRelu(slope) => {
            for i in 0..d.len() {
                d[i] = grad_out.data()[i] * if input.data()[i] > 0.0 { 1.0 } else { slope };
            }
        }
    }
    dx
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
