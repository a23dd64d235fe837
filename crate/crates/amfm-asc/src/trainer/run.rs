//! The epoch loop for every strategy, and checkpoint-based evaluation.

use super::{sgd_step, warm_restart_lr, Checkpoint, EpochRecord, MetricsLog, TrainConfig};
use crate::error::{Error, Result};
use crate::frontend::{mixup, spec_augment, Dataset};
use crate::model::ModelGraph;
use crate::multitask::{
    gradnorm_update, joint_prediction, pretrain_schedule, FusionConfig, LossWeights, SoftLabelPair,
    Strategy, ABSTRACT_COUNT, SCENE_COUNT,
};
use crate::nn::{softmax_cross_entropy, softmax_rows};
use crate::rng::SeededRng;
use crate::tensor::{FeatureMap, Tensor};

/// Everything a finished run produces. `best_checkpoint` is the epoch with the
/// highest 10-class validation accuracy (earliest on ties); without a
/// validation set it equals the final checkpoint.
pub struct TrainOutcome {
    pub final_checkpoint: Checkpoint,
    pub best_checkpoint: Checkpoint,
    pub best_epoch: Option<usize>,
    pub metrics: MetricsLog,
    pub stopped_early_at: Option<usize>,
    /// Pretrain runs only: the state at the end of phase 1, taken before the
    /// 10-class branch is reinitialized.
    pub phase_boundary_checkpoint: Option<Checkpoint>,
}

/// Why a run did not complete. Divergence retains the last checkpoint taken
/// before the non-finite value appeared.
#[derive(Debug)]
pub enum TrainFailure {
    Diverged {
        epoch: usize,
        detail: String,
        last_good: Box<Checkpoint>,
    },
    Error(Error),
}

impl std::fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrainFailure::Diverged { epoch, detail, .. } => {
                write!(f, "training diverged at epoch {epoch}: {detail}")
            }
            TrainFailure::Error(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for TrainFailure {}

impl From<Error> for TrainFailure {
    fn from(e: Error) -> Self {
        TrainFailure::Error(e)
    }
}

struct EpochStats {
    loss10_sum: f64,
    loss3_sum: f64,
    samples: usize,
    correct10: usize,
    correct3: usize,
}

fn argmax_row(t: &Tensor, row: usize) -> usize {
    let c = t.shape()[1];
    let slice = &t.data()[row * c..(row + 1) * c];
    let mut best = 0;
    for (i, &v) in slice.iter().enumerate() {
        if v > slice[best] {
            best = i;
        }
    }
    best
}

fn targets_tensor(targets: &[SoftLabelPair]) -> (Tensor, Tensor) {
    let b = targets.len();
    let mut t10 = Tensor::zeros(&[b, SCENE_COUNT]);
    let mut t3 = Tensor::zeros(&[b, ABSTRACT_COUNT]);
    for (i, y) in targets.iter().enumerate() {
        t10.data_mut()[i * SCENE_COUNT..(i + 1) * SCENE_COUNT].copy_from_slice(&y.scene);
        t3.data_mut()[i * ABSTRACT_COUNT..(i + 1) * ABSTRACT_COUNT].copy_from_slice(&y.parent);
    }
    (t10, t3)
}

/// Run the full training loop. Deterministic for a fixed config and dataset in
/// single-threaded mode: all randomness flows from `config.seed`.
pub fn train(
    config: &TrainConfig,
    dataset: &Dataset,
    valset: Option<&Dataset>,
) -> std::result::Result<TrainOutcome, TrainFailure> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::validation("training dataset is empty").into());
    }
    let dims = dataset[0].0.dims();
    for (fm, _) in dataset {
        if fm.dims() != dims {
            return Err(Error::shape(format!(
                "inconsistent feature shapes in dataset: {:?} vs {:?}",
                fm.dims(),
                dims
            ))
            .into());
        }
    }
    config.augment.validate(dims.2, dims.3)?;

    let mut rng = SeededRng::new(config.seed);
    let mut model = ModelGraph::new(config.strategy, &config.arch, dims.1, &mut rng)?;
    let pretrain_plan = if config.strategy == Strategy::Pretrain {
        Some(pretrain_schedule(config.epochs, config.pretrain_split)?)
    } else {
        None
    };

    let one_hots: Vec<SoftLabelPair> = dataset
        .iter()
        .map(|(_, l)| SoftLabelPair::one_hot(*l))
        .collect();

    let mut weights = config.loss_weights;
    let mut gradnorm_initial: Option<(f64, f64)> = None;
    let mut metrics = MetricsLog::new();
    let mut last_good = Checkpoint::from_model(&model, config, 0, rng.state());
    let mut best: Option<(f64, usize, Checkpoint)> = None;
    let mut stopped_early_at = None;
    let mut phase_boundary_checkpoint = None;
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for epoch in 0..config.epochs {
        // Pretrain phase handling: fixed weights per phase, schedule restart
        // and a fresh 10-class branch at the phase boundary.
        let mut schedule_epoch = epoch;
        if let Some(plan) = &pretrain_plan {
            if epoch < plan.phase1_epochs {
                weights = LossWeights { w3: 1.0, w10: 0.0 };
            } else {
                if epoch == plan.phase1_epochs {
                    phase_boundary_checkpoint = Some(last_good.clone());
                    model.reinit_task10(&mut rng);
                }
                weights = LossWeights { w3: 0.0, w10: 1.0 };
                schedule_epoch = epoch - plan.phase1_epochs;
            }
        }
        let lr = warm_restart_lr(schedule_epoch, config);

        order.sort_unstable();
        rng.shuffle(&mut order);

        let mut stats = EpochStats {
            loss10_sum: 0.0,
            loss3_sum: 0.0,
            samples: 0,
            correct10: 0,
            correct3: 0,
        };
        for chunk in order.chunks(config.batch_size) {
            let (batch, t10, t3) = assemble_batch(config, dataset, &one_hots, chunk, &mut rng)?;
            let (l10, l3, cache) = model.forward_train(&batch)?;
            let (ce10, mut g10) = softmax_cross_entropy(&l10, &t10)?;
            let (loss, ce3, g3) = match config.strategy {
                Strategy::SingleTask => (ce10, None, None),
                _ => {
                    let l3 = l3.as_ref().expect("MTL strategies emit 3-way logits");
                    let (ce3, mut g3) = softmax_cross_entropy(l3, &t3)?;
                    for g in g10.data_mut() {
                        *g *= weights.w10;
                    }
                    for g in g3.data_mut() {
                        *g *= weights.w3;
                    }
                    (weights.w3 * ce3 + weights.w10 * ce10, Some(ce3), Some(g3))
                }
            };
            if !loss.is_finite() {
                return Err(TrainFailure::Diverged {
                    epoch,
                    detail: format!("non-finite loss {loss}"),
                    last_good: Box::new(last_good),
                });
            }
            model.zero_grads();
            model.backward(&cache, &g10, g3.as_ref())?;
            if let Err(e) = sgd_step(&mut model, lr, config.momentum) {
                return Err(TrainFailure::Diverged {
                    epoch,
                    detail: e.to_string(),
                    last_good: Box::new(last_good),
                });
            }
            stats.samples += chunk.len();
            stats.loss10_sum += ce10 * chunk.len() as f64;
            if let Some(ce3) = ce3 {
                stats.loss3_sum += ce3 * chunk.len() as f64;
            }
            for i in 0..chunk.len() {
                if argmax_row(&l10, i) == argmax_row(&t10, i) {
                    stats.correct10 += 1;
                }
                if let Some(l3) = &l3 {
                    if argmax_row(l3, i) == argmax_row(&t3, i) {
                        stats.correct3 += 1;
                    }
                }
            }
        }

        // Config validation guarantees gradnorm implies a dual-task,
        // non-pretrain strategy.
        if config.gradnorm {
            weights = gradnorm_epoch_update(
                config,
                dataset,
                &one_hots,
                &mut model,
                weights,
                &mut gradnorm_initial,
            )?;
        }

        let n = stats.samples as f64;
        let train_acc10 = stats.correct10 as f64 / n;
        let train_acc3 = config
            .strategy
            .emits_abstract()
            .then_some(stats.correct3 as f64 / n);
        let (val_acc10, val_acc3) = match valset {
            Some(vs) => {
                let report = evaluate_model(&model, vs, &config.fusion)?;
                (Some(report.acc10), report.acc3)
            }
            None => (None, None),
        };

        metrics.push(EpochRecord {
            epoch,
            lr,
            loss3: config
                .strategy
                .emits_abstract()
                .then_some(stats.loss3_sum / n),
            loss10: stats.loss10_sum / n,
            train_acc10,
            train_acc3,
            val_acc10,
            val_acc3,
            w3: weights.w3,
            w10: weights.w10,
        });

        last_good = Checkpoint::from_model(&model, config, (epoch + 1) as u64, rng.state());
        if let Some(acc) = val_acc10 {
            let better = best.as_ref().map(|(b, _, _)| acc > *b).unwrap_or(true);
            if better {
                best = Some((acc, epoch, last_good.clone()));
            }
        }

        if let Some(threshold) = config.stop_at_train_acc {
            let reached3 = train_acc3.map(|a| a >= threshold).unwrap_or(true);
            if train_acc10 >= threshold && reached3 {
                stopped_early_at = Some(epoch);
                break;
            }
        }
    }

    let final_checkpoint = last_good;
    let (best_epoch, best_checkpoint) = match best {
        Some((_, e, ckpt)) => (Some(e), ckpt),
        None => (None, final_checkpoint.clone()),
    };
    Ok(TrainOutcome {
        final_checkpoint,
        best_checkpoint,
        best_epoch,
        metrics,
        stopped_early_at,
        phase_boundary_checkpoint,
    })
}

fn assemble_batch(
    config: &TrainConfig,
    dataset: &Dataset,
    one_hots: &[SoftLabelPair],
    chunk: &[usize],
    rng: &mut SeededRng,
) -> Result<(FeatureMap, Tensor, Tensor)> {
    let mut features: Vec<FeatureMap> = Vec::with_capacity(chunk.len());
    let mut targets: Vec<SoftLabelPair> = Vec::with_capacity(chunk.len());
    if config.augment.mixup {
        // One lambda per batch; partner is the reversed batch order.
        let lambda = rng.beta_symmetric(config.augment.mixup_alpha);
        for (pos, &idx) in chunk.iter().enumerate() {
            let jdx = chunk[chunk.len() - 1 - pos];
            let (x, y) = mixup(
                &dataset[idx].0,
                &dataset[jdx].0,
                &one_hots[idx],
                &one_hots[jdx],
                lambda,
            )?;
            features.push(x);
            targets.push(y);
        }
    } else {
        for &idx in chunk {
            features.push(dataset[idx].0.clone());
            targets.push(one_hots[idx].clone());
        }
    }
    if config.augment.specaugment {
        for x in &mut features {
            *x = spec_augment(x, &config.augment, rng);
        }
    }
    let refs: Vec<&FeatureMap> = features.iter().collect();
    let batch = FeatureMap::stack(&refs)?;
    let (t10, t3) = targets_tensor(&targets);
    Ok((batch, t10, t3))
}

/// Measure per-task losses and shared-layer gradient norms on the dataset's
/// first batch (clean, deterministic) and take one GradNorm step. Batchnorm
/// running stats are restored afterwards so the measurement leaves no trace.
fn gradnorm_epoch_update(
    config: &TrainConfig,
    dataset: &Dataset,
    one_hots: &[SoftLabelPair],
    model: &mut ModelGraph,
    weights: LossWeights,
    initial: &mut Option<(f64, f64)>,
) -> Result<LossWeights> {
    let probe: Vec<usize> = (0..dataset.len().min(config.batch_size)).collect();
    let refs: Vec<&FeatureMap> = probe.iter().map(|&i| &dataset[i].0).collect();
    let batch = FeatureMap::stack(&refs)?;
    let targets: Vec<SoftLabelPair> = probe.iter().map(|&i| one_hots[i].clone()).collect();
    let (t10, t3) = targets_tensor(&targets);

    let saved_states = model.bn_states.clone();
    let (l10, l3, cache) = model.forward_train(&batch)?;
    let l3 = l3.expect("gradnorm requires a 3-way head");
    let (ce10, g10) = softmax_cross_entropy(&l10, &t10)?;
    let (ce3, g3) = softmax_cross_entropy(&l3, &t3)?;

    let shared_norm = |model: &ModelGraph| -> f64 {
        let g = &model.shared_layer().grad;
        g.data().iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    let zeros10 = Tensor::zeros(l10.shape());
    let zeros3 = Tensor::zeros(l3.shape());
    model.zero_grads();
    model.backward(&cache, &g10, Some(&zeros3))?;
    let n10 = shared_norm(model);
    model.zero_grads();
    model.backward(&cache, &zeros10, Some(&g3))?;
    let n3 = shared_norm(model);
    model.zero_grads();
    model.bn_states = saved_states;

    if initial.is_none() {
        *initial = Some((ce3, ce10));
    }
    let init = initial.unwrap();
    // A perfectly fit task (zero loss or zero gradient) leaves nothing for
    // GradNorm to balance; keep the weights.
    if ce3 <= 0.0 || ce10 <= 0.0 || n3 <= 0.0 || n10 <= 0.0 || init.0 <= 0.0 || init.1 <= 0.0 {
        return Ok(weights);
    }
    gradnorm_update(
        weights,
        (ce3, ce10),
        init,
        (n3, n10),
        config.gradnorm_alpha,
        config.gradnorm_lr,
    )
}

/// Accuracy and confusion matrices of a checkpoint on a dataset.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub acc10: f64,
    pub acc3: Option<f64>,
    pub confusion10: Vec<Vec<usize>>,
    pub confusion3: Vec<Vec<usize>>,
    pub fused: bool,
}

/// Evaluate with inference-mode batchnorm; 10-class predictions go through
/// taxonomy fusion when `fusion.enabled`.
pub fn evaluate(ckpt: &Checkpoint, dataset: &Dataset, fusion: &FusionConfig) -> Result<EvalReport> {
    let (model, _) = ckpt.build_model()?;
    evaluate_model(&model, dataset, fusion)
}

pub(crate) fn evaluate_model(
    model: &ModelGraph,
    dataset: &Dataset,
    fusion: &FusionConfig,
) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::validation("evaluation dataset is empty"));
    }
    if fusion.enabled && !model.strategy.emits_abstract() {
        return Err(Error::validation(
            "fusion requires a model with a 3-way head",
        ));
    }
    let mut confusion10 = vec![vec![0usize; SCENE_COUNT]; SCENE_COUNT];
    let mut confusion3 = vec![vec![0usize; ABSTRACT_COUNT]; ABSTRACT_COUNT];
    let mut correct10 = 0usize;
    let mut correct3 = 0usize;
    let has3 = model.strategy.emits_abstract();
    for chunk in dataset.chunks(32) {
        let refs: Vec<&FeatureMap> = chunk.iter().map(|(fm, _)| fm).collect();
        let batch = FeatureMap::stack(&refs)?;
        let (l10, l3) = model.forward_infer(&batch)?;
        let p10 = softmax_rows(&l10);
        let p3 = l3.as_ref().map(softmax_rows);
        let fused = match (&p3, fusion.enabled) {
            (Some(p3), true) => Some(joint_prediction(&p10, p3, fusion)?.probs),
            _ => None,
        };
        let decision10 = fused.as_ref().unwrap_or(&p10);
        for (i, (_, label)) in chunk.iter().enumerate() {
            let pred10 = argmax_row(decision10, i);
            confusion10[label.scene.index()][pred10] += 1;
            if pred10 == label.scene.index() {
                correct10 += 1;
            }
            if let Some(p3) = &p3 {
                let pred3 = argmax_row(p3, i);
                confusion3[label.parent.index()][pred3] += 1;
                if pred3 == label.parent.index() {
                    correct3 += 1;
                }
            }
        }
    }
    let total = dataset.len() as f64;
    Ok(EvalReport {
        acc10: correct10 as f64 / total,
        acc3: has3.then_some(correct3 as f64 / total),
        confusion10,
        confusion3,
        fused: fusion.enabled,
    })
}
