//! Shared helpers for the integration tests: an exhaustive mAP oracle,
//! random evaluation instances and full pipeline runs.
#![allow(dead_code)]

use hoi_core::eval::EvalReport;
use hoi_core::inference::{AgentPrediction, HoiPrediction, ImagePredictions};
use hoi_core::model::{encode_checkpoint, Model};
use hoi_core::pipeline::{
    evaluate_model, generate_split, read_dataset, train, write_dataset, Dataset, EvalOutcome, RunConfig, Split,
    TrainOutcome,
};
use hoi_core::synth::{AnnotatedObject, Triplet};
use hoi_core::{BBox, SceneAnnotation};
use rand::Rng;

/// A random evaluation problem over `num_verbs x num_categories` classes.
#[derive(Debug, Clone)]
pub struct Instance {
    pub annotations: Vec<SceneAnnotation>,
    pub predictions: Vec<ImagePredictions>,
    pub num_verbs: usize,
    pub num_categories: usize,
}

impl Instance {
    pub fn images(&self) -> Vec<hoi_core::eval::EvalImage<'_>> {
        self.annotations
            .iter()
            .zip(&self.predictions)
            .map(|(annotation, predictions)| hoi_core::eval::EvalImage { annotation, predictions })
            .collect()
    }
}

/// Boxes come from a few anchors plus small offsets so that overlaps near
/// the IoU threshold, duplicates and misses are all common.
fn random_box(rng: &mut impl Rng) -> BBox {
    const ANCHORS: [(f64, f64, f64, f64); 4] =
        [(4.0, 4.0, 14.0, 14.0), (9.0, 4.0, 19.0, 14.0), (22.0, 20.0, 32.0, 34.0), (6.0, 6.0, 16.0, 16.0)];
    let (x1, y1, x2, y2) = ANCHORS[rng.random_range(0..ANCHORS.len())];
    let mut d = || if rng.random_bool(0.5) { 0.0 } else { rng.random_range(-3.0..3.0) };
    BBox::new(x1 + d(), y1 + d(), x2 + d(), y2 + d())
}

/// Scores from a small set so that ties are frequent.
fn random_score(rng: &mut impl Rng) -> f64 {
    [0.2, 0.5, 0.5, 0.9, 0.35][rng.random_range(0..5)]
}

/// At most `max_gt` ground-truth pairs and `max_pred` predictions per class
/// and image.
pub fn random_instance(rng: &mut impl Rng, max_gt: usize, max_pred: usize) -> Instance {
    let (num_verbs, num_categories) = (2, 2);
    let n_images = rng.random_range(1..=3);
    let mut annotations = Vec::new();
    let mut predictions = Vec::new();
    for _ in 0..n_images {
        let mut ann = SceneAnnotation {
            width: 40,
            height: 40,
            humans: (0..rng.random_range(1..=3)).map(|_| random_box(rng)).collect(),
            objects: (0..rng.random_range(1..=3))
                .map(|_| AnnotatedObject {
                    bbox: random_box(rng),
                    category: rng.random_range(0..num_categories),
                })
                .collect(),
            triplets: Vec::new(),
        };
        let mut per_class = vec![0usize; num_verbs * num_categories];
        for _ in 0..rng.random_range(0..=6) {
            let (human, object, verb) = (
                rng.random_range(0..ann.humans.len()),
                rng.random_range(0..ann.objects.len()),
                rng.random_range(0..num_verbs),
            );
            let id = verb * num_categories + ann.objects[object].category;
            if per_class[id] < max_gt {
                per_class[id] += 1;
                ann.triplets.push(Triplet { human, verb, object });
            }
        }
        let mut hoi = Vec::new();
        let mut per_class = vec![0usize; num_verbs * num_categories];
        for _ in 0..rng.random_range(0..=8) {
            let (verb, category) = (rng.random_range(0..num_verbs), rng.random_range(0..num_categories));
            let id = verb * num_categories + category;
            if per_class[id] >= max_pred {
                continue;
            }
            per_class[id] += 1;
            // Half of the predictions copy a ground-truth pair of any class.
            let (human_box, object_box) = match ann.triplets.get(rng.random_range(0..=ann.triplets.len() * 2)) {
                Some(t) => (ann.humans[t.human], ann.objects[t.object].bbox),
                None => (random_box(rng), random_box(rng)),
            };
            hoi.push(HoiPrediction {
                human_index: 0,
                human_box,
                human_score: 1.0,
                object_index: 0,
                object_box,
                object_category: category,
                object_score: 1.0,
                verb,
                score: random_score(rng),
            });
        }
        let agents = ann
            .humans
            .iter()
            .enumerate()
            .map(|(i, &human_box)| AgentPrediction {
                human_index: i,
                human_box,
                human_score: 1.0,
                scores: (0..num_verbs).map(|_| random_score(rng)).collect(),
            })
            .collect();
        annotations.push(ann);
        predictions.push(ImagePredictions { hoi, agents });
    }
    Instance {
        annotations,
        predictions,
        num_verbs,
        num_categories,
    }
}

fn overlap(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = w * h;
    let union = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    if union <= 0.0 { 0.0 } else { inter / union }
}

/// Per-class AP (`None` without ground truth) and mAP, computed directly
/// from the definitions: one global ranking by (score desc, image, position
/// in the image's list), greedy matching against untaken ground truth with
/// both IoUs at or above `thr`, and precision maximised over every later
/// rank.
pub fn oracle(inst: &Instance, thr: f64, known_object: bool) -> (Vec<Option<f64>>, f64) {
    let mut aps = Vec::new();
    for verb in 0..inst.num_verbs {
        for category in 0..inst.num_categories {
            let mut gts: Vec<(usize, BBox, BBox, bool)> = Vec::new();
            let mut ranked: Vec<(f64, usize, usize, BBox, BBox)> = Vec::new();
            for (img, (ann, preds)) in inst.annotations.iter().zip(&inst.predictions).enumerate() {
                if known_object && !ann.objects.iter().any(|o| o.category == category) {
                    continue;
                }
                for t in &ann.triplets {
                    let o = ann.objects[t.object];
                    if t.verb == verb && o.category == category {
                        gts.push((img, ann.humans[t.human], o.bbox, false));
                    }
                }
                for (pos, p) in preds.hoi.iter().enumerate() {
                    if p.verb == verb && p.object_category == category {
                        ranked.push((p.score, img, pos, p.human_box, p.object_box));
                    }
                }
            }
            let n_gt = gts.len();
            if n_gt == 0 {
                aps.push(None);
                continue;
            }
            // Selection sort keeps the ranking rule explicit.
            let mut order: Vec<usize> = Vec::new();
            let mut used = vec![false; ranked.len()];
            for _ in 0..ranked.len() {
                let mut best: Option<usize> = None;
                for i in 0..ranked.len() {
                    if used[i] {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some(b) => {
                            let (x, y) = (&ranked[i], &ranked[b]);
                            x.0 > y.0 || (x.0 == y.0 && (x.1 < y.1 || (x.1 == y.1 && x.2 < y.2)))
                        }
                    };
                    if better {
                        best = Some(i);
                    }
                }
                used[best.unwrap()] = true;
                order.push(best.unwrap());
            }
            let mut tp = Vec::new();
            for &i in &order {
                let (_, img, _, h, o) = ranked[i];
                let mut pick: Option<(usize, f64)> = None;
                for (g, gt) in gts.iter().enumerate() {
                    if gt.0 != img || gt.3 {
                        continue;
                    }
                    let (ih, io) = (overlap(&h, &gt.1), overlap(&o, &gt.2));
                    if ih < thr || io < thr {
                        continue;
                    }
                    let q = ih.min(io);
                    if pick.is_none() || q > pick.unwrap().1 {
                        pick = Some((g, q));
                    }
                }
                if let Some((g, _)) = pick {
                    gts[g].3 = true;
                }
                tp.push(pick.is_some());
            }
            let precision = |k: usize| tp[..=k].iter().filter(|&&f| f).count() as f64 / (k + 1) as f64;
            let mut sum = 0.0;
            for k in 0..tp.len() {
                if tp[k] {
                    sum += (k..tp.len()).map(precision).fold(f64::NEG_INFINITY, f64::max);
                }
            }
            aps.push(Some(sum / n_gt as f64));
        }
    }
    let present: Vec<f64> = aps.iter().flatten().copied().collect();
    let map = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    (aps, map)
}

/// The default benchmark with the given seed, resolved.
pub fn benchmark(seed: u64) -> RunConfig {
    RunConfig::default().with_seed(seed).resolved().unwrap()
}

/// Everything a synth -> train -> eval run produces.
pub struct FullRun {
    pub train: Dataset,
    pub test: Dataset,
    pub outcome: TrainOutcome,
    pub model: Model,
    pub eval: EvalOutcome,
    pub checkpoint_bytes: Vec<u8>,
}

impl FullRun {
    pub fn report(&self) -> &EvalReport {
        &self.eval.report
    }
}

/// Generates both splits, round-trips them through dataset files in `dir`,
/// trains and evaluates.
pub fn full_run(cfg: &RunConfig, dir: &std::path::Path) -> FullRun {
    for split in [Split::Train, Split::Test] {
        write_dataset(dir, &generate_split(&cfg.synth, &cfg.data, split).unwrap()).unwrap();
    }
    let train_ds = read_dataset(dir, Split::Train).unwrap();
    let test = read_dataset(dir, Split::Test).unwrap();
    let outcome = train(cfg, &train_ds, |_| {}).unwrap();
    let checkpoint_bytes = encode_checkpoint(&outcome.checkpoint);
    let model = Model::from_checkpoint(outcome.checkpoint.clone()).unwrap();
    let counts = hoi_core::eval::class_counts(
        train_ds.scenes.iter().map(|s| &s.annotation),
        cfg.synth.num_verbs,
        cfg.synth.num_categories,
    );
    let eval = evaluate_model(cfg, &model, &test, counts).unwrap();
    FullRun {
        train: train_ds,
        test,
        outcome,
        model,
        eval,
        checkpoint_bytes,
    }
}
