//! Named trainable parameter with its gradient and momentum buffers.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A trainable tensor. `value`, `grad` and `velocity` always share one shape;
/// `name` is unique within a model graph and doubles as the checkpoint key.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub velocity: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        let velocity = Tensor::zeros(value.shape());
        Param {
            name: name.into(),
            value,
            grad,
            velocity,
        }
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Add `g` into the gradient buffer.
    pub fn accumulate_grad(&mut self, g: &Tensor) -> Result<()> {
        if g.shape() != self.grad.shape() {
            return Err(Error::shape(format!(
                "gradient shape {:?} does not match parameter {} shape {:?}",
                g.shape(),
                self.name,
                self.grad.shape()
            )));
        }
        for (dst, src) in self.grad.data_mut().iter_mut().zip(g.data()) {
            *dst += src;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buffers_share_shape() {
        let p = Param::new("w", Tensor::zeros(&[3, 4]));
        assert_eq!(p.value.shape(), p.grad.shape());
        assert_eq!(p.value.shape(), p.velocity.shape());
        assert_eq!(p.numel(), 12);
    }

    #[test]
    fn accumulate_checks_shape() {
        let mut p = Param::new("w", Tensor::zeros(&[2, 2]));
        assert!(p.accumulate_grad(&Tensor::full(&[2, 2], 1.0)).is_ok());
        assert!(p.accumulate_grad(&Tensor::full(&[2, 2], 0.5)).is_ok());
        assert_eq!(p.grad.data(), &[1.5; 4]);
        assert!(p.accumulate_grad(&Tensor::zeros(&[4])).is_err());
        p.zero_grad();
        assert_eq!(p.grad.data(), &[0.0; 4]);
    }
}
