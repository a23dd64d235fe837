//! Mixup and SpecAugment.

use crate::error::{Error, Result};
use crate::multitask::SoftLabelPair;
use crate::rng::SeededRng;
use crate::tensor::FeatureMap;

/// Augmentation switches and strengths. Mask widths are maxima; actual widths
/// are drawn uniformly from `0..=max` per mask.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPolicy {
    pub mixup: bool,
    pub mixup_alpha: f64,
    pub specaugment: bool,
    pub n_freq_masks: usize,
    pub freq_mask_max: usize,
    pub n_time_masks: usize,
    pub time_mask_max: usize,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            mixup: true,
            mixup_alpha: 1.0,
            specaugment: true,
            n_freq_masks: 2,
            freq_mask_max: 24,
            n_time_masks: 2,
            time_mask_max: 48,
        }
    }
}

impl AugmentPolicy {
    /// Everything off; the identity pipeline.
    pub fn disabled() -> Self {
        AugmentPolicy {
            mixup: false,
            specaugment: false,
            ..AugmentPolicy::default()
        }
    }

    pub fn validate(&self, frames: usize, bins: usize) -> Result<()> {
        if self.specaugment && (self.freq_mask_max > bins || self.time_mask_max > frames) {
            return Err(Error::validation(format!(
                "mask maxima ({}, {}) exceed spectrogram extents ({frames}, {bins})",
                self.time_mask_max, self.freq_mask_max
            )));
        }
        if self.mixup && self.mixup_alpha <= 0.0 {
            return Err(Error::validation("mixup alpha must be positive"));
        }
        Ok(())
    }
}

/// Convex combination of two examples and both their targets with one lambda:
/// `x = l*x_i + (1-l)*x_j`, same for the 10-class and 3-class targets.
pub fn mixup(
    x_i: &FeatureMap,
    x_j: &FeatureMap,
    y_i: &SoftLabelPair,
    y_j: &SoftLabelPair,
    lambda: f64,
) -> Result<(FeatureMap, SoftLabelPair)> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::validation(format!(
            "mixup lambda {lambda} outside [0,1]"
        )));
    }
    if x_i.dims() != x_j.dims() {
        return Err(Error::shape(format!(
            "mixup shape mismatch: {:?} vs {:?}",
            x_i.dims(),
            x_j.dims()
        )));
    }
    let mut x = x_i.clone();
    for (o, &b) in x.data_mut().iter_mut().zip(x_j.data()) {
        *o = lambda * *o + (1.0 - lambda) * b;
    }
    let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter()
            .zip(b)
            .map(|(p, q)| lambda * p + (1.0 - lambda) * q)
            .collect()
    };
    let y = SoftLabelPair {
        scene: mix(&y_i.scene, &y_j.scene),
        parent: mix(&y_i.parent, &y_j.parent),
    };
    Ok((x, y))
}

/// Zero the mel band `[start, start + width)` across all frames.
pub fn apply_freq_mask(x: &mut FeatureMap, start: usize, width: usize) {
    let (b, c, t, f) = x.dims();
    let end = (start + width).min(f);
    for bi in 0..b {
        for ch in 0..c {
            for ti in 0..t {
                for fi in start..end {
                    x.set(bi, ch, ti, fi, 0.0);
                }
            }
        }
    }
}

/// Zero the frame band `[start, start + width)` across all mel bins.
pub fn apply_time_mask(x: &mut FeatureMap, start: usize, width: usize) {
    let (b, c, t, f) = x.dims();
    let end = (start + width).min(t);
    for bi in 0..b {
        for ch in 0..c {
            for ti in start..end {
                for fi in 0..f {
                    x.set(bi, ch, ti, fi, 0.0);
                }
            }
        }
    }
}

/// SpecAugment without time warping: `n_freq_masks` contiguous mel bands and
/// `n_time_masks` frame bands, each of width uniform in `0..=max`, zeroed.
/// Cells outside the masks are untouched.
pub fn spec_augment(x: &FeatureMap, policy: &AugmentPolicy, rng: &mut SeededRng) -> FeatureMap {
    let mut out = x.clone();
    if !policy.specaugment {
        return out;
    }
    let (_, _, t, f) = x.dims();
    for _ in 0..policy.n_freq_masks {
        let width = rng.below(policy.freq_mask_max.min(f) + 1);
        let start = rng.below(f - width + 1);
        apply_freq_mask(&mut out, start, width);
    }
    for _ in 0..policy.n_time_masks {
        let width = rng.below(policy.time_mask_max.min(t) + 1);
        let start = rng.below(t - width + 1);
        apply_time_mask(&mut out, start, width);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multitask::{parent_of, LabelPair, SceneLabel};

    #[test]
    fn lambda_one_returns_first_exactly() {
        let mut rng = SeededRng::new(63);
        let a = FeatureMap::randn(1, 1, 4, 4, 1.0, &mut rng);
        let b = FeatureMap::randn(1, 1, 4, 4, 1.0, &mut rng);
        let ya = SoftLabelPair::one_hot(LabelPair::new(SceneLabel::Park));
        let yb = SoftLabelPair::one_hot(LabelPair::new(SceneLabel::Bus));
        let (x, y) = mixup(&a, &b, &ya, &yb, 1.0).unwrap();
        assert_eq!(x.data(), a.data());
        assert_eq!(y, ya);
    }

    #[test]
    fn midpoint_mixes_features_and_targets() {
        let mut rng = SeededRng::new(64);
        let a = FeatureMap::randn(1, 1, 3, 3, 1.0, &mut rng);
        let b = FeatureMap::randn(1, 1, 3, 3, 1.0, &mut rng);
        let ya = SoftLabelPair::one_hot(LabelPair::new(SceneLabel::Airport));
        let yb = SoftLabelPair::one_hot(LabelPair::new(SceneLabel::Tram));
        let (x, y) = mixup(&a, &b, &ya, &yb, 0.5).unwrap();
        for ((m, &p), &q) in x.data().iter().zip(a.data()).zip(b.data()) {
            assert!((m - 0.5 * (p + q)).abs() <= 1e-15);
        }
        assert_eq!(y.scene[SceneLabel::Airport.index()], 0.5);
        assert_eq!(y.scene[SceneLabel::Tram.index()], 0.5);
        assert_eq!(y.parent[parent_of(SceneLabel::Airport).index()], 0.5);
        assert_eq!(y.parent[parent_of(SceneLabel::Tram).index()], 0.5);
    }

    #[test]
    fn mixed_parent_equals_marginalized_scene_target() {
        let mut rng = SeededRng::new(65);
        for _ in 0..100 {
            let a = FeatureMap::zeros(1, 1, 2, 2);
            let b = FeatureMap::zeros(1, 1, 2, 2);
            let sa = SceneLabel::from_index(rng.below(10)).unwrap();
            let sb = SceneLabel::from_index(rng.below(10)).unwrap();
            let ya = SoftLabelPair::one_hot(LabelPair::new(sa));
            let yb = SoftLabelPair::one_hot(LabelPair::new(sb));
            let lambda = rng.uniform();
            let (_, y) = mixup(&a, &b, &ya, &yb, lambda).unwrap();
            // Marginalize the mixed 10-class target through the taxonomy.
            let mut marginal = [0.0; 3];
            for (ci, scene) in SceneLabel::ALL.iter().enumerate() {
                marginal[parent_of(*scene).index()] += y.scene[ci];
            }
            for (m, p) in marginal.iter().zip(&y.parent) {
                assert!((m - p).abs() <= 1e-12);
            }
            let s: f64 = y.scene.iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn lambda_out_of_range_rejected() {
        let a = FeatureMap::zeros(1, 1, 2, 2);
        let y = SoftLabelPair::one_hot(LabelPair::new(SceneLabel::Park));
        assert!(mixup(&a, &a, &y, &y, 1.5).is_err());
        assert!(mixup(&a, &a, &y, &y, -0.1).is_err());
    }

    #[test]
    fn disabled_policy_is_identity() {
        let mut rng = SeededRng::new(66);
        let x = FeatureMap::randn(1, 1, 8, 8, 1.0, &mut rng);
        let out = spec_augment(&x, &AugmentPolicy::disabled(), &mut rng);
        assert_eq!(out.data(), x.data());
        // Zero mask counts with specaugment nominally on: also identity.
        let policy = AugmentPolicy {
            n_freq_masks: 0,
            n_time_masks: 0,
            ..AugmentPolicy::default()
        };
        let out = spec_augment(&x, &policy, &mut rng);
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn forced_freq_mask_zeroes_exactly_those_rows() {
        let mut x = FeatureMap::new(crate::tensor::Tensor::full(&[1, 1, 8, 32], 1.0)).unwrap();
        apply_freq_mask(&mut x, 10, 10);
        for t in 0..8 {
            for f in 0..32 {
                let want = if (10..20).contains(&f) { 0.0 } else { 1.0 };
                assert_eq!(x.at(0, 0, t, f), want, "t {t} f {f}");
            }
        }
    }

    #[test]
    fn mask_budget_bounds_the_zeroed_fraction() {
        let mut rng = SeededRng::new(67);
        let policy = AugmentPolicy {
            mixup: false,
            n_freq_masks: 2,
            freq_mask_max: 6,
            n_time_masks: 2,
            time_mask_max: 4,
            ..AugmentPolicy::default()
        };
        let (t, f) = (16usize, 20usize);
        let ones = FeatureMap::new(crate::tensor::Tensor::full(&[1, 1, t, f], 1.0)).unwrap();
        let budget = (policy.n_freq_masks * policy.freq_mask_max * t
            + policy.n_time_masks * policy.time_mask_max * f) as f64
            / (t * f) as f64;
        for _ in 0..1000 {
            let out = spec_augment(&ones, &policy, &mut rng);
            let zeroed = out.data().iter().filter(|&&v| v == 0.0).count() as f64 / (t * f) as f64;
            assert!(
                zeroed <= budget + 1e-12,
                "zeroed {zeroed} over budget {budget}"
            );
        }
    }

    #[test]
    fn unmasked_cells_are_untouched() {
        let mut rng = SeededRng::new(68);
        let x = FeatureMap::randn(1, 1, 12, 12, 1.0, &mut rng);
        for _ in 0..50 {
            let policy = AugmentPolicy {
                mixup: false,
                ..AugmentPolicy::default()
            };
            let out = spec_augment(&x, &policy, &mut rng);
            for (a, b) in x.data().iter().zip(out.data()) {
                assert!(*b == *a || *b == 0.0);
            }
        }
    }

    #[test]
    fn reproducible_from_seed() {
        let x = FeatureMap::new(crate::tensor::Tensor::full(&[1, 1, 10, 10], 1.0)).unwrap();
        let policy = AugmentPolicy::default();
        let a = spec_augment(&x, &policy, &mut SeededRng::new(99));
        let b = spec_augment(&x, &policy, &mut SeededRng::new(99));
        assert_eq!(a.data(), b.data());
    }
}
