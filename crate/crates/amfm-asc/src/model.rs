//! Trunk-plus-head model assembly.
//!
//! A [`ModelGraph`] is a stack of AMFM blocks ending in a global average pool,
//! followed by one of the five strategy heads. Forward and backward passes are
//! wired explicitly; every trainable tensor is a named [`Param`] and running
//! batchnorm statistics live beside the blocks so evaluation can run on a
//! shared reference.

use crate::amfm::{AmfmBlock, BlockCache, BlockTaps};
use crate::error::{Error, Result};
use crate::multitask::{build_head, HeadSpec, Strategy, ABSTRACT_COUNT};
use crate::nn::{
    activation, activation_backward, linear, linear_backward, pool2d_backward, pool2d_forward,
    Activation, BatchNormState, Param, PoolCache, PoolKind,
};
use crate::rng::SeededRng;
use crate::tensor::{FeatureMap, Tensor};
use std::collections::BTreeMap;

/// Trunk/head hyperparameters. `widths` are the post-MFM channel counts per
/// block; each block convolves to twice that and pools by `pool` afterwards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub widths: Vec<usize>,
    pub pool: (usize, usize),
    pub cbam_reduction: usize,
    pub spatial_kernel: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            widths: vec![32, 64, 96, 128],
            pool: (2, 2),
            cbam_reduction: 8,
            spatial_kernel: 7,
        }
    }
}

/// A named linear layer (weight `[out, in]` + bias).
#[derive(Debug, Clone)]
pub struct LinearSlot {
    pub weight: Param,
    pub bias: Param,
}

impl LinearSlot {
    fn init(name: &str, in_dim: usize, out_dim: usize, rng: &mut SeededRng) -> Self {
        LinearSlot {
            weight: Param::new(
                format!("{name}.weight"),
                Tensor::randn(&[out_dim, in_dim], (2.0 / in_dim as f64).sqrt(), rng),
            ),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[out_dim])),
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        linear(x, &self.weight.value, &self.bias.value)
    }

    /// Backward, accumulating weight/bias grads in place.
    fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        let (dx, dw, db) = linear_backward(x, &self.weight.value, grad_out)?;
        self.weight.accumulate_grad(&dw)?;
        self.bias.accumulate_grad(&db)?;
        Ok(dx)
    }
}

/// Strategy-specific head wiring.
#[derive(Debug, Clone)]
pub enum Head {
    SingleTask {
        shared: LinearSlot,
        out10: LinearSlot,
    },
    Conventional {
        shared: LinearSlot,
        out10: LinearSlot,
        out3: LinearSlot,
    },
    Extended {
        shared: LinearSlot,
        task10: LinearSlot,
        task3: LinearSlot,
        out10: LinearSlot,
        out3: LinearSlot,
    },
    Sequential {
        shared: LinearSlot,
        task3: LinearSlot,
        out3: LinearSlot,
        task10: LinearSlot,
        out10: LinearSlot,
    },
}

/// Forward intermediates needed by the head backward.
pub struct HeadCache {
    trunk: Tensor,
    shared_pre: Tensor,
    shared_act: Tensor,
    task10_in: Option<Tensor>,
    task10_pre: Option<Tensor>,
    task10_act: Option<Tensor>,
    task3_pre: Option<Tensor>,
    task3_act: Option<Tensor>,
}

impl Head {
    fn from_spec(spec: &HeadSpec, rng: &mut SeededRng) -> Self {
        let slot = |name: &str, rng: &mut SeededRng| {
            let s = spec
                .slots
                .iter()
                .find(|s| s.name == name)
                .expect("slot in spec");
            LinearSlot::init(&s.name, s.in_dim, s.out_dim, rng)
        };
        match spec.strategy {
            Strategy::SingleTask => Head::SingleTask {
                shared: slot("head.shared", rng),
                out10: slot("head.out10", rng),
            },
            Strategy::ConventionalMtl => Head::Conventional {
                shared: slot("head.shared", rng),
                out10: slot("head.out10", rng),
                out3: slot("head.out3", rng),
            },
            Strategy::ExtendedMtl | Strategy::Pretrain => Head::Extended {
                shared: slot("head.shared", rng),
                task10: slot("head.task10", rng),
                task3: slot("head.task3", rng),
                out10: slot("head.out10", rng),
                out3: slot("head.out3", rng),
            },
            Strategy::SequentialMtl => Head::Sequential {
                shared: slot("head.shared", rng),
                task3: slot("head.task3", rng),
                out3: slot("head.out3", rng),
                task10: slot("head.task10", rng),
                out10: slot("head.out10", rng),
            },
        }
    }

    fn forward(&self, trunk: &Tensor) -> Result<(Tensor, Option<Tensor>, HeadCache)> {
        let relu = Activation::Relu;
        match self {
            Head::SingleTask { shared, out10 } => {
                let pre = shared.forward(trunk)?;
                let act = activation(&pre, relu);
                let logits10 = out10.forward(&act)?;
                Ok((
                    logits10,
                    None,
                    HeadCache {
                        trunk: trunk.clone(),
                        shared_pre: pre,
                        shared_act: act,
                        task10_in: None,
                        task10_pre: None,
                        task10_act: None,
                        task3_pre: None,
                        task3_act: None,
                    },
                ))
            }
            Head::Conventional {
                shared,
                out10,
                out3,
            } => {
                let pre = shared.forward(trunk)?;
                let act = activation(&pre, relu);
                let logits10 = out10.forward(&act)?;
                let logits3 = out3.forward(&act)?;
                Ok((
                    logits10,
                    Some(logits3),
                    HeadCache {
                        trunk: trunk.clone(),
                        shared_pre: pre,
                        shared_act: act,
                        task10_in: None,
                        task10_pre: None,
                        task10_act: None,
                        task3_pre: None,
                        task3_act: None,
                    },
                ))
            }
            Head::Extended {
                shared,
                task10,
                task3,
                out10,
                out3,
            } => {
                let pre = shared.forward(trunk)?;
                let act = activation(&pre, relu);
                let t10_pre = task10.forward(&act)?;
                let t10_act = activation(&t10_pre, relu);
                let logits10 = out10.forward(&t10_act)?;
                let t3_pre = task3.forward(&act)?;
                let t3_act = activation(&t3_pre, relu);
                let logits3 = out3.forward(&t3_act)?;
                Ok((
                    logits10,
                    Some(logits3),
                    HeadCache {
                        trunk: trunk.clone(),
                        shared_pre: pre,
                        shared_act: act.clone(),
                        task10_in: Some(act),
                        task10_pre: Some(t10_pre),
                        task10_act: Some(t10_act),
                        task3_pre: Some(t3_pre),
                        task3_act: Some(t3_act),
                    },
                ))
            }
            Head::Sequential {
                shared,
                task3,
                out3,
                task10,
                out10,
            } => {
                let pre = shared.forward(trunk)?;
                let act = activation(&pre, relu);
                let t3_pre = task3.forward(&act)?;
                let t3_act = activation(&t3_pre, relu);
                let logits3 = out3.forward(&t3_act)?;
                // The 3-class logits join the shared representation as input
                // to the 10-way branch; gradient is not detached.
                let cat = concat_cols(&act, &logits3)?;
                let t10_pre = task10.forward(&cat)?;
                let t10_act = activation(&t10_pre, relu);
                let logits10 = out10.forward(&t10_act)?;
                Ok((
                    logits10,
                    Some(logits3),
                    HeadCache {
                        trunk: trunk.clone(),
                        shared_pre: pre,
                        shared_act: act,
                        task10_in: Some(cat),
                        task10_pre: Some(t10_pre),
                        task10_act: Some(t10_act),
                        task3_pre: Some(t3_pre),
                        task3_act: Some(t3_act),
                    },
                ))
            }
        }
    }

    /// Backward through the head. `g3` must be given exactly when the head
    /// emits a 3-way output. Returns the gradient wrt the trunk vector.
    fn backward(&mut self, cache: &HeadCache, g10: &Tensor, g3: Option<&Tensor>) -> Result<Tensor> {
        let relu = Activation::Relu;
        match self {
            Head::SingleTask { shared, out10 } => {
                let d_act = out10.backward(&cache.shared_act, g10)?;
                let d_pre = activation_backward(relu, &cache.shared_pre, &cache.shared_act, &d_act);
                shared.backward(&cache.trunk, &d_pre)
            }
            Head::Conventional {
                shared,
                out10,
                out3,
            } => {
                let g3 = g3.ok_or_else(|| Error::validation("conventional head needs g3"))?;
                let mut d_act = out10.backward(&cache.shared_act, g10)?;
                let d_act3 = out3.backward(&cache.shared_act, g3)?;
                add_into(&mut d_act, &d_act3);
                let d_pre = activation_backward(relu, &cache.shared_pre, &cache.shared_act, &d_act);
                shared.backward(&cache.trunk, &d_pre)
            }
            Head::Extended {
                shared,
                task10,
                task3,
                out10,
                out3,
            } => {
                let g3 = g3.ok_or_else(|| Error::validation("extended head needs g3"))?;
                let t10_act = cache.task10_act.as_ref().unwrap();
                let t10_pre = cache.task10_pre.as_ref().unwrap();
                let t3_act = cache.task3_act.as_ref().unwrap();
                let t3_pre = cache.task3_pre.as_ref().unwrap();
                let d_t10_act = out10.backward(t10_act, g10)?;
                let d_t10_pre = activation_backward(relu, t10_pre, t10_act, &d_t10_act);
                let mut d_act = task10.backward(cache.task10_in.as_ref().unwrap(), &d_t10_pre)?;
                let d_t3_act = out3.backward(t3_act, g3)?;
                let d_t3_pre = activation_backward(relu, t3_pre, t3_act, &d_t3_act);
                let d_act3 = task3.backward(&cache.shared_act, &d_t3_pre)?;
                add_into(&mut d_act, &d_act3);
                let d_pre = activation_backward(relu, &cache.shared_pre, &cache.shared_act, &d_act);
                shared.backward(&cache.trunk, &d_pre)
            }
            Head::Sequential {
                shared,
                task3,
                out3,
                task10,
                out10,
            } => {
                let g3 = g3.ok_or_else(|| Error::validation("sequential head needs g3"))?;
                let t10_act = cache.task10_act.as_ref().unwrap();
                let t10_pre = cache.task10_pre.as_ref().unwrap();
                let t3_act = cache.task3_act.as_ref().unwrap();
                let t3_pre = cache.task3_pre.as_ref().unwrap();
                let cat = cache.task10_in.as_ref().unwrap();

                let d_t10_act = out10.backward(t10_act, g10)?;
                let d_t10_pre = activation_backward(relu, t10_pre, t10_act, &d_t10_act);
                let d_cat = task10.backward(cat, &d_t10_pre)?;
                let (mut d_act, d_logits3_cat) =
                    split_cols(&d_cat, cache.shared_act.shape()[1], ABSTRACT_COUNT)?;
                // Total 3-logit gradient: loss term plus the concat path.
                let mut d_logits3 = g3.clone();
                add_into(&mut d_logits3, &d_logits3_cat);
                let d_t3_act = out3.backward(t3_act, &d_logits3)?;
                let d_t3_pre = activation_backward(relu, t3_pre, t3_act, &d_t3_act);
                let d_act3 = task3.backward(&cache.shared_act, &d_t3_pre)?;
                add_into(&mut d_act, &d_act3);
                let d_pre = activation_backward(relu, &cache.shared_pre, &cache.shared_act, &d_act);
                shared.backward(&cache.trunk, &d_pre)
            }
        }
    }

    fn slots(&self) -> Vec<&LinearSlot> {
        match self {
            Head::SingleTask { shared, out10 } => vec![shared, out10],
            Head::Conventional {
                shared,
                out10,
                out3,
            } => vec![shared, out10, out3],
            Head::Extended {
                shared,
                task10,
                task3,
                out10,
                out3,
            } => {
                vec![shared, task10, task3, out10, out3]
            }
            Head::Sequential {
                shared,
                task3,
                out3,
                task10,
                out10,
            } => {
                vec![shared, task3, out3, task10, out10]
            }
        }
    }

    fn slots_mut(&mut self) -> Vec<&mut LinearSlot> {
        match self {
            Head::SingleTask { shared, out10 } => vec![shared, out10],
            Head::Conventional {
                shared,
                out10,
                out3,
            } => vec![shared, out10, out3],
            Head::Extended {
                shared,
                task10,
                task3,
                out10,
                out3,
            } => {
                vec![shared, task10, task3, out10, out3]
            }
            Head::Sequential {
                shared,
                task3,
                out3,
                task10,
                out10,
            } => {
                vec![shared, task3, out3, task10, out10]
            }
        }
    }
}

fn add_into(dst: &mut Tensor, src: &Tensor) {
    for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += s;
    }
}

fn concat_cols(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (rows, ca) = (a.shape()[0], a.shape()[1]);
    let cb = b.shape()[1];
    if b.shape()[0] != rows {
        return Err(Error::shape("concat row mismatch"));
    }
    let mut out = Tensor::zeros(&[rows, ca + cb]);
    for i in 0..rows {
        out.data_mut()[i * (ca + cb)..i * (ca + cb) + ca]
            .copy_from_slice(&a.data()[i * ca..(i + 1) * ca]);
        out.data_mut()[i * (ca + cb) + ca..(i + 1) * (ca + cb)]
            .copy_from_slice(&b.data()[i * cb..(i + 1) * cb]);
    }
    Ok(out)
}

fn split_cols(x: &Tensor, ca: usize, cb: usize) -> Result<(Tensor, Tensor)> {
    let rows = x.shape()[0];
    if x.shape()[1] != ca + cb {
        return Err(Error::shape("split width mismatch"));
    }
    let mut a = Tensor::zeros(&[rows, ca]);
    let mut b = Tensor::zeros(&[rows, cb]);
    for i in 0..rows {
        a.data_mut()[i * ca..(i + 1) * ca]
            .copy_from_slice(&x.data()[i * (ca + cb)..i * (ca + cb) + ca]);
        b.data_mut()[i * cb..(i + 1) * cb]
            .copy_from_slice(&x.data()[i * (ca + cb) + ca..(i + 1) * (ca + cb)]);
    }
    Ok((a, b))
}

/// Caches for one full forward pass.
pub struct ForwardCache {
    block_caches: Vec<BlockCache>,
    gap_cache: PoolCache,
    gap_dims: (usize, usize),
    head_cache: HeadCache,
}

/// The complete network: AMFM trunk, global average pool, strategy head.
pub struct ModelGraph {
    pub strategy: Strategy,
    pub arch: Architecture,
    pub in_channels: usize,
    pub blocks: Vec<AmfmBlock>,
    pub bn_states: Vec<BatchNormState>,
    pub head: Head,
}

impl ModelGraph {
    pub fn new(
        strategy: Strategy,
        arch: &Architecture,
        in_channels: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if arch.widths.is_empty() {
            return Err(Error::validation("architecture needs at least one block"));
        }
        let mut blocks = Vec::new();
        let mut bn_states = Vec::new();
        let mut cin = in_channels;
        for (i, &w) in arch.widths.iter().enumerate() {
            blocks.push(AmfmBlock::init(
                &format!("block{i}"),
                cin,
                w,
                arch.cbam_reduction,
                arch.spatial_kernel,
                rng,
            ));
            bn_states.push(BatchNormState::new(w));
            cin = w;
        }
        let spec = build_head(strategy, cin)?;
        let head = Head::from_spec(&spec, rng);
        Ok(ModelGraph {
            strategy,
            arch: arch.clone(),
            in_channels,
            blocks,
            bn_states,
            head,
        })
    }

    pub fn trunk_dim(&self) -> usize {
        *self.arch.widths.last().unwrap()
    }

    pub fn head_spec(&self) -> HeadSpec {
        build_head(self.strategy, self.trunk_dim()).expect("valid by construction")
    }

    /// Train-mode forward: updates batchnorm running stats, returns both logit
    /// sets (3-way absent for single-task) and the backward cache.
    pub fn forward_train(
        &mut self,
        x: &FeatureMap,
    ) -> Result<(Tensor, Option<Tensor>, ForwardCache)> {
        let mut cur = x.clone();
        let mut block_caches = Vec::with_capacity(self.blocks.len());
        for (block, state) in self.blocks.iter().zip(self.bn_states.iter_mut()) {
            let (out, _taps, cache) = block.forward_train(&cur, self.arch.pool, state)?;
            block_caches.push(cache);
            cur = out;
        }
        let (gap, gap_cache) = pool2d_forward(&cur, PoolKind::GlobalAvg, (0, 0), (0, 0))?;
        let (b, c, _, _) = gap.dims();
        let trunk = gap.into_tensor().reshape(vec![b, c])?;
        let (logits10, logits3, head_cache) = self.head.forward(&trunk)?;
        Ok((
            logits10,
            logits3,
            ForwardCache {
                block_caches,
                gap_cache,
                gap_dims: (b, c),
                head_cache,
            },
        ))
    }

    /// Inference forward using stored batchnorm statistics.
    pub fn forward_infer(&self, x: &FeatureMap) -> Result<(Tensor, Option<Tensor>)> {
        let (l10, l3, _) = self.forward_infer_with_taps(x)?;
        Ok((l10, l3))
    }

    /// Inference forward that also returns each block's inspection taps.
    pub fn forward_infer_with_taps(
        &self,
        x: &FeatureMap,
    ) -> Result<(Tensor, Option<Tensor>, Vec<BlockTaps>)> {
        let mut cur = x.clone();
        let mut taps = Vec::with_capacity(self.blocks.len());
        for (block, state) in self.blocks.iter().zip(self.bn_states.iter()) {
            let (out, t) = block.forward_infer(&cur, self.arch.pool, state)?;
            taps.push(t);
            cur = out;
        }
        let gap = crate::nn::pool2d(&cur, PoolKind::GlobalAvg, (0, 0), (0, 0))?;
        let (b, c, _, _) = gap.dims();
        let trunk = gap.into_tensor().reshape(vec![b, c])?;
        let (logits10, logits3, _) = self.head.forward(&trunk)?;
        Ok((logits10, logits3, taps))
    }

    /// Backward from the (already weighted) logit gradients; accumulates into
    /// every parameter's grad buffer.
    pub fn backward(
        &mut self,
        cache: &ForwardCache,
        g10: &Tensor,
        g3: Option<&Tensor>,
    ) -> Result<()> {
        let d_trunk = self.head.backward(&cache.head_cache, g10, g3)?;
        let (b, c) = cache.gap_dims;
        let d_gap = FeatureMap::new(d_trunk.reshape(vec![b, c, 1, 1])?)?;
        let mut d_cur = pool2d_backward(&cache.gap_cache, &d_gap)?;
        for (block, bcache) in self.blocks.iter_mut().zip(cache.block_caches.iter()).rev() {
            let (d_in, grads) = block.backward(bcache, &d_cur)?;
            block.accumulate(&grads)?;
            d_cur = d_in;
        }
        Ok(())
    }

    pub fn for_each_param(&mut self, mut f: impl FnMut(&mut Param)) {
        for block in &mut self.blocks {
            for p in block.params_mut() {
                f(p);
            }
        }
        for slot in self.head.slots_mut() {
            f(&mut slot.weight);
            f(&mut slot.bias);
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        for block in &self.blocks {
            v.extend(block.params());
        }
        for slot in self.head.slots() {
            v.push(&slot.weight);
            v.push(&slot.bias);
        }
        v
    }

    pub fn zero_grads(&mut self) {
        self.for_each_param(|p| p.zero_grad());
    }

    /// Trainable parameter count (running statistics excluded).
    pub fn count_params(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    /// Per-slot `(name, count)` breakdown in declaration order.
    pub fn param_breakdown(&self) -> Vec<(String, usize)> {
        self.params()
            .iter()
            .map(|p| (p.name.clone(), p.numel()))
            .collect()
    }

    /// The shared hidden layer's weight: the reference point for GradNorm's
    /// gradient norms.
    pub fn shared_layer(&self) -> &Param {
        match &self.head {
            Head::SingleTask { shared, .. }
            | Head::Conventional { shared, .. }
            | Head::Extended { shared, .. }
            | Head::Sequential { shared, .. } => &shared.weight,
        }
    }

    /// Reinitialize the 10-class branch (pretrain phase 2).
    pub fn reinit_task10(&mut self, rng: &mut SeededRng) {
        let reinit = |slot: &mut LinearSlot, rng: &mut SeededRng| {
            let shape = slot.weight.value.shape().to_vec();
            let fan_in = shape[1] as f64;
            slot.weight.value = Tensor::randn(&shape, (2.0 / fan_in).sqrt(), rng);
            slot.weight.velocity.fill(0.0);
            slot.bias.value.fill(0.0);
            slot.bias.velocity.fill(0.0);
        };
        match &mut self.head {
            Head::SingleTask { out10, .. } | Head::Conventional { out10, .. } => {
                reinit(out10, rng);
            }
            Head::Extended { task10, out10, .. } | Head::Sequential { task10, out10, .. } => {
                reinit(task10, rng);
                reinit(out10, rng);
            }
        }
    }

    /// All persistent tensors: parameter values, velocities (`<name>.v`), and
    /// batchnorm running statistics. Sorted by name via the map.
    pub fn collect_tensors(&self) -> BTreeMap<String, Tensor> {
        let mut map = BTreeMap::new();
        for p in self.params() {
            map.insert(p.name.clone(), p.value.clone());
            map.insert(format!("{}.v", p.name), p.velocity.clone());
        }
        for (i, state) in self.bn_states.iter().enumerate() {
            map.insert(
                format!("block{i}.bn.running_mean"),
                Tensor::from_vec(vec![state.running_mean.len()], state.running_mean.clone())
                    .expect("state tensor"),
            );
            map.insert(
                format!("block{i}.bn.running_var"),
                Tensor::from_vec(vec![state.running_var.len()], state.running_var.clone())
                    .expect("state tensor"),
            );
            map.insert(
                format!("block{i}.bn.initialized"),
                Tensor::scalar(if state.initialized { 1.0 } else { 0.0 }),
            );
        }
        map
    }

    /// Restore tensors by name. Returns the names present in the model but
    /// missing from the map, and the names in the map that matched nothing —
    /// both non-empty only when restoring across strategies.
    pub fn restore_tensors(&mut self, map: &BTreeMap<String, Tensor>) -> Result<RestoreReport> {
        let mut missing = Vec::new();
        let mut used = std::collections::BTreeSet::new();
        let mut shape_err: Option<String> = None;
        self.for_each_param(|p| {
            for (key, dst) in [
                (p.name.clone(), &mut p.value),
                (format!("{}.v", p.name), &mut p.velocity),
            ] {
                match map.get(&key) {
                    Some(src) if src.shape() == dst.shape() => {
                        *dst = src.clone();
                        used.insert(key);
                    }
                    Some(src) => {
                        shape_err.get_or_insert(format!(
                            "tensor {key}: checkpoint shape {:?}, model shape {:?}",
                            src.shape(),
                            dst.shape()
                        ));
                    }
                    None => missing.push(key),
                }
            }
        });
        if let Some(msg) = shape_err {
            return Err(crate::error::CheckpointError::ShapeTable(msg).into());
        }
        for (i, state) in self.bn_states.iter_mut().enumerate() {
            for (key, dst) in [
                (format!("block{i}.bn.running_mean"), &mut state.running_mean),
                (format!("block{i}.bn.running_var"), &mut state.running_var),
            ] {
                match map.get(&key) {
                    Some(src) if src.numel() == dst.len() => {
                        dst.copy_from_slice(src.data());
                        used.insert(key);
                    }
                    Some(src) => {
                        return Err(crate::error::CheckpointError::ShapeTable(format!(
                            "tensor {key}: checkpoint has {} values, model needs {}",
                            src.numel(),
                            dst.len()
                        ))
                        .into());
                    }
                    None => missing.push(key),
                }
            }
            let key = format!("block{i}.bn.initialized");
            if let Some(src) = map.get(&key) {
                state.initialized = src.data()[0] != 0.0;
                used.insert(key);
            } else {
                missing.push(key);
            }
        }
        let unexpected = map
            .keys()
            .filter(|k| !used.contains(*k))
            .cloned()
            .collect::<Vec<_>>();
        Ok(RestoreReport {
            missing,
            unexpected,
        })
    }
}

/// Slot mismatches from a cross-config restore.
#[derive(Debug, Clone, Default)]
pub struct RestoreReport {
    pub missing: Vec<String>,
    pub unexpected: Vec<String>,
}

impl RestoreReport {
    pub fn clean(&self) -> bool {
        self.missing.is_empty() && self.unexpected.is_empty()
    }
}
