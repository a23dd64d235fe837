//! The 10-class/3-class label taxonomy and the joint-training machinery:
//! head topologies for each strategy, weighted two-task loss, GradNorm weight
//! adaptation, taxonomy-aware score fusion, and the two-phase pretraining
//! schedule.

use crate::error::{Error, Result};
use crate::nn::softmax_cross_entropy;
use crate::tensor::Tensor;

/// The ten acoustic scenes, in their stable encoding order 0-9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SceneLabel {
    Airport,
    ShoppingMall,
    MetroStation,
    StreetPedestrian,
    PublicSquare,
    StreetTraffic,
    Tram,
    Bus,
    Metro,
    Park,
}

pub const SCENE_COUNT: usize = 10;
pub const ABSTRACT_COUNT: usize = 3;

impl SceneLabel {
    pub const ALL: [SceneLabel; SCENE_COUNT] = [
        SceneLabel::Airport,
        SceneLabel::ShoppingMall,
        SceneLabel::MetroStation,
        SceneLabel::StreetPedestrian,
        SceneLabel::PublicSquare,
        SceneLabel::StreetTraffic,
        SceneLabel::Tram,
        SceneLabel::Bus,
        SceneLabel::Metro,
        SceneLabel::Park,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&s| s == self).unwrap()
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::validation(format!("scene index {i} out of range 0..10")))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SceneLabel::Airport => "airport",
            SceneLabel::ShoppingMall => "shopping_mall",
            SceneLabel::MetroStation => "metro_station",
            SceneLabel::StreetPedestrian => "street_pedestrian",
            SceneLabel::PublicSquare => "public_square",
            SceneLabel::StreetTraffic => "street_traffic",
            SceneLabel::Tram => "tram",
            SceneLabel::Bus => "bus",
            SceneLabel::Metro => "metro",
            SceneLabel::Park => "park",
        }
    }
}

impl std::str::FromStr for SceneLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SceneLabel::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::validation(format!("unknown scene label `{s}`")))
    }
}

impl std::fmt::Display for SceneLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The three higher-level classes, encoding 0-2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AbstractLabel {
    Indoor,
    Outdoor,
    Transportation,
}

impl AbstractLabel {
    pub const ALL: [AbstractLabel; ABSTRACT_COUNT] = [
        AbstractLabel::Indoor,
        AbstractLabel::Outdoor,
        AbstractLabel::Transportation,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AbstractLabel::Indoor => "indoor",
            AbstractLabel::Outdoor => "outdoor",
            AbstractLabel::Transportation => "transportation",
        }
    }
}

impl std::fmt::Display for AbstractLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Total taxonomy map from scene to its abstract parent.
pub fn parent_of(scene: SceneLabel) -> AbstractLabel {
    match scene {
        SceneLabel::Airport | SceneLabel::ShoppingMall | SceneLabel::MetroStation => {
            AbstractLabel::Indoor
        }
        SceneLabel::StreetPedestrian
        | SceneLabel::PublicSquare
        | SceneLabel::StreetTraffic
        | SceneLabel::Park => AbstractLabel::Outdoor,
        SceneLabel::Tram | SceneLabel::Bus | SceneLabel::Metro => AbstractLabel::Transportation,
    }
}

/// A scene label paired with its derived abstract parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelPair {
    pub scene: SceneLabel,
    pub parent: AbstractLabel,
}

impl LabelPair {
    pub fn new(scene: SceneLabel) -> Self {
        LabelPair {
            scene,
            parent: parent_of(scene),
        }
    }
}

/// Soft (row-stochastic) targets for both tasks, as produced by mixup.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelPair {
    pub scene: Vec<f64>,
    pub parent: Vec<f64>,
}

impl SoftLabelPair {
    pub fn one_hot(label: LabelPair) -> Self {
        let mut scene = vec![0.0; SCENE_COUNT];
        scene[label.scene.index()] = 1.0;
        let mut parent = vec![0.0; ABSTRACT_COUNT];
        parent[label.parent.index()] = 1.0;
        SoftLabelPair { scene, parent }
    }
}

/// The five training strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    SingleTask,
    Pretrain,
    ConventionalMtl,
    ExtendedMtl,
    SequentialMtl,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::SingleTask,
        Strategy::Pretrain,
        Strategy::ConventionalMtl,
        Strategy::ExtendedMtl,
        Strategy::SequentialMtl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::SingleTask => "single_task",
            Strategy::Pretrain => "pretrain",
            Strategy::ConventionalMtl => "conventional_mtl",
            Strategy::ExtendedMtl => "extended_mtl",
            Strategy::SequentialMtl => "sequential_mtl",
        }
    }

    /// Whether the head emits a 3-way logit vector in addition to the 10-way.
    pub fn emits_abstract(self) -> bool {
        !matches!(self, Strategy::SingleTask)
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .iter()
            .copied()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::validation(format!("unknown strategy `{s}`")))
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Non-negative per-task loss weights, `loss = w3 * CE3 + w10 * CE10`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w3: f64,
    pub w10: f64,
}

impl LossWeights {
    pub fn new(w3: f64, w10: f64) -> Result<Self> {
        if w3 < 0.0 || w10 < 0.0 || (w3 == 0.0 && w10 == 0.0) {
            return Err(Error::validation(format!(
                "loss weights must be non-negative and not both zero, got ({w3}, {w10})"
            )));
        }
        Ok(LossWeights { w3, w10 })
    }

    /// The grid-search presets 1:1 through 1:5; 1:5 is the configured default.
    pub fn ratio_preset(r: usize) -> Result<Self> {
        if !(1..=5).contains(&r) {
            return Err(Error::validation(format!(
                "ratio preset 1:{r} outside 1..=5"
            )));
        }
        LossWeights::new(1.0, r as f64)
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { w3: 1.0, w10: 5.0 }
    }
}

/// Score-fusion settings: `fused(c) ~ p10(c) * p3(parent(c))^beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub enabled: bool,
    pub beta: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            enabled: false,
            beta: 1.0,
        }
    }
}

/// One named linear slot of a head graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotSpec {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl SlotSpec {
    fn new(name: &str, in_dim: usize, out_dim: usize) -> Self {
        SlotSpec {
            name: name.to_string(),
            in_dim,
            out_dim,
        }
    }

    /// Weight plus bias element count.
    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }
}

/// Head graph description for one strategy: an ordered list of linear slots.
/// The wiring between them is fixed by the strategy and realized in
/// [`crate::model`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeadSpec {
    pub strategy: Strategy,
    pub slots: Vec<SlotSpec>,
}

impl HeadSpec {
    pub fn param_count(&self) -> usize {
        self.slots.iter().map(|s| s.param_count()).sum()
    }
}

/// Width of every task-side hidden layer.
pub const HEAD_HIDDEN: usize = 100;

/// Describe the head graph for `strategy` on a trunk of width `trunk_dim`.
///
/// - single task: hidden layer then the 10-way output;
/// - conventional MTL: one shared hidden layer, two output layers;
/// - extended MTL: conventional plus one extra hidden layer per task;
/// - sequential MTL: the 3-way branch runs first and its logits are
///   concatenated with the shared hidden vector to feed the 10-way branch;
/// - pretrain: same graph as extended MTL (the two-phase schedule lives in
///   [`pretrain_schedule`]).
pub fn build_head(strategy: Strategy, trunk_dim: usize) -> Result<HeadSpec> {
    if trunk_dim == 0 {
        return Err(Error::validation("trunk_dim must be positive"));
    }
    let h = HEAD_HIDDEN;
    let slots = match strategy {
        Strategy::SingleTask => vec![
            SlotSpec::new("head.shared", trunk_dim, h),
            SlotSpec::new("head.out10", h, SCENE_COUNT),
        ],
        Strategy::ConventionalMtl => vec![
            SlotSpec::new("head.shared", trunk_dim, h),
            SlotSpec::new("head.out10", h, SCENE_COUNT),
            SlotSpec::new("head.out3", h, ABSTRACT_COUNT),
        ],
        Strategy::ExtendedMtl | Strategy::Pretrain => vec![
            SlotSpec::new("head.shared", trunk_dim, h),
            SlotSpec::new("head.task10", h, h),
            SlotSpec::new("head.task3", h, h),
            SlotSpec::new("head.out10", h, SCENE_COUNT),
            SlotSpec::new("head.out3", h, ABSTRACT_COUNT),
        ],
        Strategy::SequentialMtl => vec![
            SlotSpec::new("head.shared", trunk_dim, h),
            SlotSpec::new("head.task3", h, h),
            SlotSpec::new("head.out3", h, ABSTRACT_COUNT),
            SlotSpec::new("head.task10", h + ABSTRACT_COUNT, h),
            SlotSpec::new("head.out10", h, SCENE_COUNT),
        ],
    };
    Ok(HeadSpec { strategy, slots })
}

/// Weighted two-task loss: `w3 * CE3 + w10 * CE10`. Returns the scalar and
/// the two logit gradients, each already scaled by its weight.
pub fn mtl_loss(
    logits10: &Tensor,
    logits3: &Tensor,
    target10: &Tensor,
    target3: &Tensor,
    w: LossWeights,
) -> Result<(f64, Tensor, Tensor)> {
    if w.w3 == 0.0 && w.w10 == 0.0 {
        return Err(Error::validation("both loss weights are zero"));
    }
    let (ce10, mut g10) = softmax_cross_entropy(logits10, target10)?;
    let (ce3, mut g3) = softmax_cross_entropy(logits3, target3)?;
    for g in g10.data_mut() {
        *g *= w.w10;
    }
    for g in g3.data_mut() {
        *g *= w.w3;
    }
    Ok((w.w3 * ce3 + w.w10 * ce10, g10, g3))
}

/// One GradNorm step on the two task weights.
///
/// Loss ratios are `L_i / L_i(0)`; relative inverse training rates are the
/// ratios normalized by their mean; target gradient norms are
/// `mean(G) * r_i^alpha` with `G_i = w_i * grad_norm_i`. The weights step down
/// the (sub)gradient of `sum |G_i - target_i|`, are clipped to >= 1e-4, and
/// renormalized so `w3 + w10 = 2`.
pub fn gradnorm_update(
    w: LossWeights,
    losses_now: (f64, f64),
    losses_initial: (f64, f64),
    grad_norms: (f64, f64),
    alpha: f64,
    lr_w: f64,
) -> Result<LossWeights> {
    for (name, v) in [
        ("losses_now.0", losses_now.0),
        ("losses_now.1", losses_now.1),
        ("losses_initial.0", losses_initial.0),
        ("losses_initial.1", losses_initial.1),
        ("grad_norms.0", grad_norms.0),
        ("grad_norms.1", grad_norms.1),
    ] {
        if !(v > 0.0) {
            return Err(Error::validation(format!(
                "gradnorm input {name} must be positive, got {v}"
            )));
        }
    }
    let ratio3 = losses_now.0 / losses_initial.0;
    let ratio10 = losses_now.1 / losses_initial.1;
    let mean_ratio = 0.5 * (ratio3 + ratio10);
    let r3 = ratio3 / mean_ratio;
    let r10 = ratio10 / mean_ratio;
    let g3 = w.w3 * grad_norms.0;
    let g10 = w.w10 * grad_norms.1;
    let mean_g = 0.5 * (g3 + g10);
    let target3 = mean_g * r3.powf(alpha);
    let target10 = mean_g * r10.powf(alpha);
    // d|G_i - target_i| / dw_i with the targets treated as constants; the
    // subgradient at an exact hit is zero.
    let step3 = if g3 == target3 {
        0.0
    } else {
        (g3 - target3).signum() * grad_norms.0
    };
    let step10 = if g10 == target10 {
        0.0
    } else {
        (g10 - target10).signum() * grad_norms.1
    };
    let new3 = (w.w3 - lr_w * step3).max(1e-4);
    let new10 = (w.w10 - lr_w * step10).max(1e-4);
    // Renormalize so the sum is exactly 2: one weight is the rounded ratio,
    // the other its complement (adding two separately rounded products can
    // miss 2 by an ulp). The floor is re-imposed on whichever side dips; the
    // complement of `2.0 - 1e-4` itself sits an ulp under the floor, so each
    // side gets clamped first and its partner recomputed.
    let mut w3 = (2.0 * new3 / (new3 + new10)).clamp(0.0, 2.0);
    let mut w10 = 2.0 - w3;
    if w3 < 1e-4 {
        w3 = 1e-4;
        w10 = 2.0 - w3;
    } else if w10 < 1e-4 {
        w10 = 1e-4;
        w3 = 2.0 - w10;
    }
    LossWeights::new(w3, w10)
}

/// Outcome of a fusion call: the fused posterior plus any rows that fell back
/// to the raw 10-class posterior because every fused mass was exactly zero.
#[derive(Debug, Clone)]
pub struct FusionOutcome {
    pub probs: Tensor,
    pub fallback_rows: Vec<usize>,
}

/// Taxonomy-aware score fusion: `fused(c) ~ p10(c) * p3(parent(c))^beta`,
/// renormalized per row. With `beta = 0` this is the identity on `p10`.
pub fn joint_prediction(p10: &Tensor, p3: &Tensor, cfg: &FusionConfig) -> Result<FusionOutcome> {
    if p10.rank() != 2 || p10.shape()[1] != SCENE_COUNT {
        return Err(Error::shape(format!(
            "p10 must be [B,10], got {:?}",
            p10.shape()
        )));
    }
    if p3.rank() != 2 || p3.shape()[1] != ABSTRACT_COUNT || p3.shape()[0] != p10.shape()[0] {
        return Err(Error::shape(format!(
            "p3 must be [B,3] matching p10, got {:?}",
            p3.shape()
        )));
    }
    let b = p10.shape()[0];
    for (name, t, c) in [("p10", p10, SCENE_COUNT), ("p3", p3, ABSTRACT_COUNT)] {
        for i in 0..b {
            let row = &t.data()[i * c..(i + 1) * c];
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 || row.iter().any(|&v| v < 0.0) {
                return Err(Error::validation(format!(
                    "{name} row {i} is not a distribution (sum {sum})"
                )));
            }
        }
    }
    // beta = 0 is algebraically the identity on p10; take it exactly.
    if cfg.beta == 0.0 {
        return Ok(FusionOutcome {
            probs: p10.clone(),
            fallback_rows: Vec::new(),
        });
    }
    let mut out = Tensor::zeros(&[b, SCENE_COUNT]);
    let mut fallback_rows = Vec::new();
    for i in 0..b {
        let mut row = [0.0; SCENE_COUNT];
        let mut total = 0.0;
        for (ci, scene) in SceneLabel::ALL.iter().enumerate() {
            let parent = parent_of(*scene).index();
            let v = p10.at2(i, ci) * p3.at2(i, parent).powf(cfg.beta);
            row[ci] = v;
            total += v;
        }
        let orow = &mut out.data_mut()[i * SCENE_COUNT..(i + 1) * SCENE_COUNT];
        if total == 0.0 {
            fallback_rows.push(i);
            orow.copy_from_slice(&p10.data()[i * SCENE_COUNT..(i + 1) * SCENE_COUNT]);
        } else {
            for (o, v) in orow.iter_mut().zip(row) {
                *o = v / total;
            }
        }
    }
    Ok(FusionOutcome {
        probs: out,
        fallback_rows,
    })
}

/// The two-phase pretraining plan: phase 1 trains the 3-class task alone with
/// weights (1, 0); phase 2 reinitializes the 10-class head, restarts the
/// learning-rate schedule and trains with (0, 1). Trunk parameters carry over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PretrainPlan {
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
}

pub fn pretrain_schedule(total_epochs: usize, split: f64) -> Result<PretrainPlan> {
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::validation(format!(
            "pretrain split must lie in (0,1), got {split}"
        )));
    }
    let phase1 = (split * total_epochs as f64).round() as usize;
    if phase1 == 0 || phase1 >= total_epochs {
        return Err(Error::validation(format!(
            "degenerate pretrain split: {phase1} of {total_epochs} epochs in phase 1"
        )));
    }
    Ok(PretrainPlan {
        phase1_epochs: phase1,
        phase2_epochs: total_epochs - phase1,
    })
}
