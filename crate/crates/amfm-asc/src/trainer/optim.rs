//! SGD with classical momentum.

use crate::error::{Error, Result};
use crate::model::ModelGraph;

/// One update over every parameter: `v <- momentum*v + grad`,
/// `value <- value - lr*v`, grads zeroed afterwards. A non-finite gradient
/// aborts with the offending parameter's name before any value moves.
pub fn sgd_step(model: &mut ModelGraph, lr: f64, momentum: f64) -> Result<()> {
    let mut bad: Option<String> = None;
    model.for_each_param(|p| {
        if bad.is_none() && !p.grad.is_finite() {
            bad = Some(p.name.clone());
        }
    });
    if let Some(name) = bad {
        return Err(Error::numeric(format!(
            "non-finite gradient in parameter {name}"
        )));
    }
    model.for_each_param(|p| {
        for i in 0..p.value.numel() {
            let v = momentum * p.velocity.data()[i] + p.grad.data()[i];
            p.velocity.data_mut()[i] = v;
            p.value.data_mut()[i] -= lr * v;
        }
        p.zero_grad();
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;
    use crate::multitask::Strategy;
    use crate::rng::SeededRng;

    fn tiny_model() -> ModelGraph {
        let mut rng = SeededRng::new(80);
        let arch = Architecture {
            widths: vec![4],
            pool: (2, 2),
            cbam_reduction: 8,
            spatial_kernel: 3,
        };
        ModelGraph::new(Strategy::SingleTask, &arch, 1, &mut rng).unwrap()
    }

    #[test]
    fn zero_momentum_is_a_plain_step() {
        let mut model = tiny_model();
        model.for_each_param(|p| {
            p.value.fill(1.0);
            p.grad.fill(0.5);
        });
        sgd_step(&mut model, 0.1, 0.0).unwrap();
        model.for_each_param(|p| {
            for &v in p.value.data() {
                assert!((v - 0.95).abs() < 1e-15);
            }
            assert!(p.grad.data().iter().all(|&g| g == 0.0));
        });
    }

    #[test]
    fn velocity_decays_without_gradient() {
        let mut model = tiny_model();
        model.for_each_param(|p| {
            p.value.fill(0.0);
            p.velocity.fill(1.0);
            p.grad.fill(0.0);
        });
        sgd_step(&mut model, 0.1, 0.9).unwrap();
        model.for_each_param(|p| {
            for &v in p.value.data() {
                assert!((v + 0.09).abs() < 1e-15, "{v}");
            }
            for &v in p.velocity.data() {
                assert!((v - 0.9).abs() < 1e-15);
            }
        });
    }

    #[test]
    fn two_steps_with_constant_gradient() {
        // v1 = g, step1 = lr*g; v2 = (1+m)g, step2 = lr*(1+m)g;
        // total displacement = lr*g*(2+m). Hand-checked for m = 0.9.
        let mut model = tiny_model();
        let (lr, m, g) = (0.1, 0.9, 0.5);
        model.for_each_param(|p| p.value.fill(0.0));
        for _ in 0..2 {
            model.for_each_param(|p| p.grad.fill(g));
            sgd_step(&mut model, lr, m).unwrap();
        }
        let want = -lr * g * (2.0 + m);
        model.for_each_param(|p| {
            for &v in p.value.data() {
                assert!((v - want).abs() < 1e-12, "{v} vs {want}");
            }
        });
    }

    #[test]
    fn lr_zero_changes_no_value() {
        // With fresh (zero) velocities, a zero learning rate must leave every
        // parameter value bitwise untouched no matter the gradients.
        let mut model = tiny_model();
        let mut rng = SeededRng::new(81);
        model.for_each_param(|p| {
            let g = crate::tensor::Tensor::randn(p.grad.shape(), 1.0, &mut rng);
            p.grad = g;
        });
        let before: Vec<Vec<f64>> = {
            let mut v = Vec::new();
            model.for_each_param(|p| v.push(p.value.data().to_vec()));
            v
        };
        sgd_step(&mut model, 0.0, 0.9).unwrap();
        let mut i = 0;
        model.for_each_param(|p| {
            assert_eq!(p.value.data(), before[i].as_slice(), "{} moved", p.name);
            i += 1;
        });
    }

    #[test]
    fn non_finite_gradient_aborts_with_name() {
        let mut model = tiny_model();
        let mut first = true;
        model.for_each_param(|p| {
            if first {
                p.grad.data_mut()[0] = f64::NAN;
                first = false;
            }
        });
        match sgd_step(&mut model, 0.1, 0.9) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("block0.conv.kernel"), "{msg}"),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }
}
