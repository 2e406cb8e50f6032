use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ensure_dir, Dataset, DatasetScene, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalConfig, EvalImage, EvalReport};
use crate::inference::{infer_image, ImagePredictions};
use crate::model::Model;
use crate::supervision::{build_input, make_rgbm};
use crate::synth::stub_detect;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePredictions {
    pub index: u64,
    #[serde(flatten)]
    pub predictions: ImagePredictions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub predictions: Vec<ScenePredictions>,
}

/// Runs the stub detector and the actor switch over every scene.
pub fn predict_dataset(cfg: &RunConfig, model: &Model, dataset: &Dataset) -> Result<Vec<ScenePredictions>> {
    let detector = cfg.eval_detector();
    let inference = cfg.inference();
    dataset
        .scenes
        .iter()
        .map(|scene| {
            let dets = stub_detect(&scene.annotation, &detector, scene.index);
            Ok(ScenePredictions {
                index: scene.index,
                predictions: infer_image(model, &scene.image, &dets, &inference)?,
            })
        })
        .collect()
}

/// Predicts on `test` and scores the result. `train_counts` (per class id)
/// enables the rare / non-rare split.
pub fn evaluate_model(cfg: &RunConfig, model: &Model, test: &Dataset, train_counts: Vec<usize>) -> Result<EvalOutcome> {
    test.ensure_matches(&cfg.synth)?;
    if model.config() != &cfg.model {
        return Err(Error::ConfigMismatch);
    }
    let predictions = predict_dataset(cfg, model, test)?;
    let images: Vec<EvalImage> = test
        .scenes
        .iter()
        .zip(&predictions)
        .map(|(s, p)| EvalImage {
            annotation: &s.annotation,
            predictions: &p.predictions,
        })
        .collect();
    let eval_cfg = EvalConfig {
        iou_threshold: cfg.eval.iou_threshold,
        known_object: cfg.eval.known_object,
        rare_threshold: cfg.eval.rare_threshold,
        num_verbs: cfg.synth.num_verbs,
        num_categories: cfg.synth.num_categories,
        train_counts,
    };
    let report = evaluate(&images, &eval_cfg)?;
    Ok(EvalOutcome { report, predictions })
}

/// One exported grayscale map.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Both branch outputs for the `actor`-th annotated human, one map per
/// channel, plus the actor mask: `2 * (K + 1) + 1` images.
pub fn run_heatmaps(cfg: &RunConfig, model: &Model, scene: &DatasetScene, actor: usize) -> Result<Vec<Heatmap>> {
    let humans = &scene.annotation.humans;
    let actor_box = humans.get(actor).ok_or_else(|| {
        Error::OutOfRange(format!("actor {actor} but scene {} has {} humans", scene.index, humans.len()))
    })?;
    let input = build_input(&scene.image, actor_box, cfg.ablation.mask_mode);
    let (actor_map, object_map) = model.predict(&input)?;
    let k = cfg.synth.num_verbs;
    let channel_name = |c: usize| if c == k { "wo".to_string() } else { format!("v{c}") };
    let mut out = Vec::with_capacity(2 * (k + 1) + 1);
    for (branch, map) in [("actor", &actor_map), ("object", &object_map)] {
        for c in 0..map.channels() {
            out.push(Heatmap {
                name: format!("{branch}_{}", channel_name(c)),
                width: map.width(),
                height: map.height(),
                pixels: map.channel_to_gray8(c),
            });
        }
    }
    let rgbm = make_rgbm(&scene.image, actor_box);
    out.push(Heatmap {
        name: "mask".into(),
        width: rgbm.width,
        height: rgbm.height,
        pixels: rgbm.mask().expect("rgbm input has a mask").iter().map(|&m| (m * 255.0) as u8).collect(),
    });
    Ok(out)
}

/// Writes `<name>.png` for every map.
pub fn export_heatmaps(dir: &Path, maps: &[Heatmap]) -> Result<Vec<std::path::PathBuf>> {
    ensure_dir(dir)?;
    maps.iter()
        .map(|m| {
            let path = dir.join(format!("{}.png", m.name));
            image::save_buffer(&path, &m.pixels, m.width as u32, m.height as u32, image::ColorType::L8)?;
            Ok(path)
        })
        .collect()
}
