use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dataset, RunConfig};
use crate::error::Result;
use crate::loss::{total_loss, wce_backward, wce_forward};
use crate::model::{init, AdamConfig, AdamState, Checkpoint, Network, Parameters};
use crate::rng::{derive_seed, item_rng, Stream};
use crate::supervision::{build_input, example_supervision, BranchSupervision};
use crate::synth::{arrange_annotations, balanced_indices, stub_detect, ActorExample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub examples: usize,
    /// Mean of `lambda_a * L_a + lambda_o * L_o` over the epoch's examples,
    /// each measured before its own update.
    pub mean_loss: f64,
    pub mean_actor_loss: f64,
    pub mean_object_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub epochs: Vec<EpochStats>,
}

/// Actor examples of every training scene, tagged with the scene's position
/// in `dataset.scenes`. Detections come from the stub detector.
pub fn arranged_examples(cfg: &RunConfig, dataset: &Dataset) -> Vec<(usize, ActorExample)> {
    dataset
        .scenes
        .iter()
        .enumerate()
        .flat_map(|(pos, scene)| {
            let dets = stub_detect(&scene.annotation, &cfg.synth, scene.index);
            arrange_annotations(&dets, &scene.annotation)
                .into_iter()
                .map(move |e| (pos, e))
        })
        .collect()
}

/// The balanced, shuffled example order of one (0-based) epoch.
pub fn epoch_examples(
    arranged: &[(usize, ActorExample)],
    cfg: &RunConfig,
    epoch: usize,
) -> Vec<(usize, ActorExample)> {
    let positive: Vec<bool> = arranged.iter().map(|(_, e)| e.positive).collect();
    let seed = derive_seed(cfg.train.seed, epoch as u64, Stream::Balance);
    let mut order = balanced_indices(&positive, cfg.train.balance_ratio, seed);
    order.shuffle(&mut item_rng(cfg.train.seed, epoch as u64, Stream::Shuffle));
    order.into_iter().map(|i| arranged[i].clone()).collect()
}

fn branch_loss(pred: &crate::grid::ChannelGrid, sup: &BranchSupervision, eps: f64) -> Result<f64> {
    wce_forward(pred, &sup.target, &sup.hanning, &sup.scale, eps)
}

/// Trains from scratch, one actor example per Adam step. `cfg` must be
/// resolved. `on_epoch` sees each epoch's statistics as soon as it ends.
pub fn train(cfg: &RunConfig, dataset: &Dataset, mut on_epoch: impl FnMut(&EpochStats)) -> Result<TrainOutcome> {
    dataset.ensure_matches(&cfg.synth)?;
    let network = Network::new(cfg.model.clone())?;
    let shape = network.grid_shape();
    let sup_cfg = cfg.supervision();
    let mut params: Parameters = init(&cfg.model)?;
    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.train.lr,
            ..AdamConfig::default()
        },
        &params,
    );
    adam.config.validate()?;
    let arranged = arranged_examples(cfg, dataset);
    let eps = cfg.loss.eps;
    let mut epochs = Vec::with_capacity(cfg.train.epochs);
    for epoch in 0..cfg.train.epochs {
        let examples = epoch_examples(&arranged, cfg, epoch);
        let (mut sum, mut sum_a, mut sum_o) = (0.0, 0.0, 0.0);
        for (pos, example) in &examples {
            let scene = &dataset.scenes[*pos];
            let input = build_input(&scene.image, &example.actor_box, cfg.ablation.mask_mode);
            let (actor_sup, object_sup) = example_supervision(example, &scene.annotation, &shape, &sup_cfg)?;
            let (actor, object, cache) = network.forward(&params, &input)?;
            let la = branch_loss(&actor, &actor_sup, eps)?;
            let lo = branch_loss(&object, &object_sup, eps)?;
            sum += total_loss(la, lo, &cfg.loss);
            sum_a += la;
            sum_o += lo;
            let ga = wce_backward(&actor, &actor_sup.target, &actor_sup.hanning, &actor_sup.scale, eps)?
                .scale(cfg.loss.lambda_actor);
            let go = wce_backward(&object, &object_sup.target, &object_sup.hanning, &object_sup.scale, eps)?
                .scale(cfg.loss.lambda_object);
            let grads = network.backward(&params, &cache, &ga, &go)?;
            adam.step(&mut params, &grads)?;
        }
        let n = examples.len().max(1) as f64;
        let stats = EpochStats {
            epoch: epoch + 1,
            examples: examples.len(),
            mean_loss: sum / n,
            mean_actor_loss: sum_a / n,
            mean_object_loss: sum_o / n,
        };
        on_epoch(&stats);
        epochs.push(stats);
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            config: cfg.model.clone(),
            params,
            adam: Some(adam),
        },
        epochs,
    })
}
