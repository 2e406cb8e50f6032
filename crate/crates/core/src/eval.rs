//! Per-class average precision for HOI triplets.
//!
//! An HOI class is a (verb, object category) pair. A prediction is a true
//! positive when an unmatched ground-truth pair of its class overlaps it with
//! IoU >= threshold on both the human and the object box. Predictions are
//! matched greedily in score order; each one takes the eligible ground truth
//! with the largest `min(human IoU, object IoU)`, ties to the lowest index.
//! AP is all-point interpolated.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::inference::ImagePredictions;
use crate::synth::{SceneAnnotation, Subset};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
/// Classes with fewer training instances than this are rare.
pub const DEFAULT_RARE_THRESHOLD: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HoiClass {
    pub verb: usize,
    pub category: usize,
}

impl HoiClass {
    pub fn id(&self, num_categories: usize) -> usize {
        self.verb * num_categories + self.category
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtPair {
    pub human: BBox,
    pub object: BBox,
    pub category: usize,
    pub verb: usize,
    pub matched: bool,
}

impl GtPair {
    pub fn class(&self) -> HoiClass {
        HoiClass {
            verb: self.verb,
            category: self.category,
        }
    }
}

/// Ground-truth pairs of one image, in triplet order.
pub fn gt_pairs(ann: &SceneAnnotation) -> Vec<GtPair> {
    ann.triplets
        .iter()
        .map(|t| GtPair {
            human: ann.humans[t.human],
            object: ann.objects[t.object].bbox,
            category: ann.objects[t.object].category,
            verb: t.verb,
            matched: false,
        })
        .collect()
}

/// Greedy one-to-one matching; returns the ground truth each prediction
/// takes. `quality(p, g)` is `None` when `g` is not eligible for `p`.
fn greedy_match(n_pred: usize, n_gt: usize, quality: impl Fn(usize, usize) -> Option<f64>) -> Vec<Option<usize>> {
    let mut taken = vec![false; n_gt];
    (0..n_pred)
        .map(|p| {
            let mut best: Option<(usize, f64)> = None;
            for g in (0..n_gt).filter(|&g| !taken[g]) {
                if let Some(q) = quality(p, g) {
                    if best.is_none_or(|(_, bq)| q > bq) {
                        best = Some((g, q));
                    }
                }
            }
            best.map(|(g, _)| {
                taken[g] = true;
                g
            })
        })
        .collect()
}

/// TP flags for `preds` (human box, object box) in the given order against
/// ground truth of one class in one image. Resets every `matched` flag first.
pub fn match_predictions(preds: &[(BBox, BBox)], gts: &mut [GtPair], iou_thr: f64) -> Vec<bool> {
    gts.iter_mut().for_each(|g| g.matched = false);
    let assigned = greedy_match(preds.len(), gts.len(), |p, g| {
        let (h, o) = (iou(&preds[p].0, &gts[g].human), iou(&preds[p].1, &gts[g].object));
        (h >= iou_thr && o >= iou_thr).then_some(h.min(o))
    });
    assigned
        .into_iter()
        .map(|g| {
            if let Some(g) = g {
                gts[g].matched = true;
            }
            g.is_some()
        })
        .collect()
}

/// All-point interpolated AP: the mean over ground-truth instances of the
/// precision envelope at the rank where each is recalled; 0 when `n_gt` is 0.
pub fn average_precision(flags: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let precision: Vec<f64> = flags
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            tp += f as usize;
            tp as f64 / (i + 1) as f64
        })
        .collect();
    let mut envelope = precision;
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let sum: f64 = flags.iter().zip(&envelope).filter(|(f, _)| **f).map(|(_, p)| *p).sum();
    sum / n_gt as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    /// Evaluate each class only on images that contain its object category.
    pub known_object: bool,
    pub rare_threshold: usize,
    pub num_verbs: usize,
    pub num_categories: usize,
    /// Training instances per class id (`verb * num_categories + category`);
    /// empty disables the rare split.
    pub train_counts: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            known_object: false,
            rare_threshold: DEFAULT_RARE_THRESHOLD,
            num_verbs: 3,
            num_categories: 2,
            train_counts: Vec::new(),
        }
    }
}

/// Triplet counts per class id over a set of annotations.
pub fn class_counts<'a>(
    annotations: impl IntoIterator<Item = &'a SceneAnnotation>,
    num_verbs: usize,
    num_categories: usize,
) -> Vec<usize> {
    let mut counts = vec![0; num_verbs * num_categories];
    for ann in annotations {
        for g in gt_pairs(ann) {
            if g.verb < num_verbs && g.category < num_categories {
                counts[g.class().id(num_categories)] += 1;
            }
        }
    }
    counts
}

#[derive(Debug, Clone, Copy)]
pub struct EvalImage<'a> {
    pub annotation: &'a SceneAnnotation,
    pub predictions: &'a ImagePredictions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub verb: usize,
    pub category: usize,
    pub num_gt: usize,
    pub num_predictions: usize,
    /// `None` when the class has no ground truth.
    pub ap: Option<f64>,
    pub rare: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentReport {
    pub verb: usize,
    pub num_gt: usize,
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub subset: Subset,
    pub num_images: usize,
    pub map: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub known_object: bool,
    pub num_images: usize,
    /// Mean AP over classes with ground truth; 0 when there are none.
    pub map: f64,
    pub map_rare: Option<f64>,
    pub map_non_rare: Option<f64>,
    pub classes: Vec<ClassReport>,
    pub agent: Vec<AgentReport>,
    /// Mean agent AP over verbs with ground truth; 0 when there are none.
    pub agent_map: f64,
    pub subsets: Vec<SubsetReport>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Score descending, then image index, then rank within the image.
fn merge_order(a: &(f64, usize, usize), b: &(f64, usize, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

/// AP of one class over the images in `subset`. Returns `(ap, n_gt, n_pred)`.
fn class_ap(images: &[EvalImage], subset: &[usize], class: HoiClass, cfg: &EvalConfig) -> (Option<f64>, usize, usize) {
    let mut ranked: Vec<(f64, usize, usize, bool)> = Vec::new();
    let mut n_gt = 0;
    for &i in subset {
        let img = images[i];
        if cfg.known_object && !img.annotation.objects.iter().any(|o| o.category == class.category) {
            continue;
        }
        let mut gts: Vec<GtPair> = gt_pairs(img.annotation).into_iter().filter(|g| g.class() == class).collect();
        n_gt += gts.len();
        let mut preds: Vec<(f64, usize, (BBox, BBox))> = img
            .predictions
            .hoi
            .iter()
            .enumerate()
            .filter(|(_, p)| p.verb == class.verb && p.object_category == class.category)
            .map(|(rank, p)| (p.score, rank, (p.human_box, p.object_box)))
            .collect();
        preds.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let boxes: Vec<(BBox, BBox)> = preds.iter().map(|p| p.2).collect();
        let flags = match_predictions(&boxes, &mut gts, cfg.iou_threshold);
        ranked.extend(preds.iter().zip(flags).map(|(p, f)| (p.0, i, p.1, f)));
    }
    ranked.sort_by(|a, b| merge_order(&(a.0, a.1, a.2), &(b.0, b.1, b.2)));
    let flags: Vec<bool> = ranked.iter().map(|r| r.3).collect();
    let ap = (n_gt > 0).then(|| average_precision(&flags, n_gt));
    (ap, n_gt, ranked.len())
}

fn agent_ap(images: &[EvalImage], verb: usize, thr: f64) -> (Option<f64>, usize) {
    let mut ranked: Vec<(f64, usize, usize, bool)> = Vec::new();
    let mut n_gt = 0;
    for (i, img) in images.iter().enumerate() {
        let mut humans: Vec<usize> = img.annotation.triplets.iter().filter(|t| t.verb == verb).map(|t| t.human).collect();
        humans.sort_unstable();
        humans.dedup();
        n_gt += humans.len();
        let gt_boxes: Vec<BBox> = humans.iter().map(|&h| img.annotation.humans[h]).collect();
        let mut preds: Vec<(f64, usize, BBox)> = img
            .predictions
            .agents
            .iter()
            .enumerate()
            .map(|(rank, a)| (a.scores[verb], rank, a.human_box))
            .collect();
        preds.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let assigned = greedy_match(preds.len(), gt_boxes.len(), |p, g| {
            let v = iou(&preds[p].2, &gt_boxes[g]);
            (v >= thr).then_some(v)
        });
        ranked.extend(preds.iter().zip(assigned).map(|(p, g)| (p.0, i, p.1, g.is_some())));
    }
    ranked.sort_by(|a, b| merge_order(&(a.0, a.1, a.2), &(b.0, b.1, b.2)));
    let flags: Vec<bool> = ranked.iter().map(|r| r.3).collect();
    ((n_gt > 0).then(|| average_precision(&flags, n_gt)), n_gt)
}

fn check_vocabulary(images: &[EvalImage], cfg: &EvalConfig) -> Result<()> {
    let (k, c) = (cfg.num_verbs, cfg.num_categories);
    if !cfg.train_counts.is_empty() && cfg.train_counts.len() != k * c {
        return Err(Error::VocabularyMismatch(format!(
            "{} training counts for {} classes",
            cfg.train_counts.len(),
            k * c
        )));
    }
    for (i, img) in images.iter().enumerate() {
        img.annotation
            .validate(k, c)
            .map_err(|e| Error::VocabularyMismatch(format!("image {i}: {e}")))?;
        if let Some(p) = img.predictions.hoi.iter().find(|p| p.verb >= k || p.object_category >= c) {
            return Err(Error::VocabularyMismatch(format!(
                "image {i}: prediction (verb {}, category {}) outside {k} verbs x {c} categories",
                p.verb, p.object_category
            )));
        }
        if img.predictions.agents.iter().any(|a| a.scores.len() != k) {
            return Err(Error::VocabularyMismatch(format!("image {i}: agent scores need {k} entries")));
        }
    }
    Ok(())
}

fn all_classes(cfg: &EvalConfig) -> impl Iterator<Item = HoiClass> + '_ {
    (0..cfg.num_verbs).flat_map(move |verb| (0..cfg.num_categories).map(move |category| HoiClass { verb, category }))
}

pub fn evaluate(images: &[EvalImage], cfg: &EvalConfig) -> Result<EvalReport> {
    check_vocabulary(images, cfg)?;
    let everything: Vec<usize> = (0..images.len()).collect();
    let classes: Vec<ClassReport> = all_classes(cfg)
        .map(|class| {
            let (ap, num_gt, num_predictions) = class_ap(images, &everything, class, cfg);
            let rare = (!cfg.train_counts.is_empty())
                .then(|| cfg.train_counts[class.id(cfg.num_categories)] < cfg.rare_threshold);
            ClassReport {
                verb: class.verb,
                category: class.category,
                num_gt,
                num_predictions,
                ap,
                rare,
            }
        })
        .collect();
    let map = mean(classes.iter().filter_map(|c| c.ap)).unwrap_or(0.0);
    let group = |rare: bool| {
        mean(
            classes
                .iter()
                .filter(|c| c.rare == Some(rare))
                .filter_map(|c| c.ap),
        )
    };
    let agent: Vec<AgentReport> = (0..cfg.num_verbs)
        .map(|verb| {
            let (ap, num_gt) = agent_ap(images, verb, cfg.iou_threshold);
            AgentReport { verb, num_gt, ap }
        })
        .collect();
    let agent_map = mean(agent.iter().filter_map(|a| a.ap)).unwrap_or(0.0);
    let subsets = Subset::ALL
        .iter()
        .map(|&subset| {
            let members: Vec<usize> = everything
                .iter()
                .copied()
                .filter(|&i| Subset::of(images[i].annotation) == subset)
                .collect();
            let map = mean(all_classes(cfg).filter_map(|class| class_ap(images, &members, class, cfg).0));
            SubsetReport {
                subset,
                num_images: members.len(),
                map,
            }
        })
        .collect();
    Ok(EvalReport {
        iou_threshold: cfg.iou_threshold,
        known_object: cfg.known_object,
        num_images: images.len(),
        map,
        map_rare: group(true),
        map_non_rare: group(false),
        classes,
        agent,
        agent_map,
        subsets,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.4}", v))
}

impl EvalReport {
    /// Aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "images          {}", self.num_images);
        let _ = writeln!(s, "iou threshold   {}", self.iou_threshold);
        let _ = writeln!(s, "known object    {}", self.known_object);
        let _ = writeln!(s, "mAP             {:.4}", self.map);
        let _ = writeln!(s, "mAP rare        {}", fmt_opt(self.map_rare));
        let _ = writeln!(s, "mAP non-rare    {}", fmt_opt(self.map_non_rare));
        let _ = writeln!(s, "agent mAP       {:.4}", self.agent_map);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:>4}  {:>8}  {:>6}  {:>6}  {:>8}  {:>5}", "verb", "category", "gt", "preds", "AP", "rare");
        for c in &self.classes {
            let rare = c.rare.map_or("-", |r| if r { "yes" } else { "no" });
            let _ = writeln!(
                s,
                "{:>4}  {:>8}  {:>6}  {:>6}  {:>8}  {:>5}",
                c.verb,
                c.category,
                c.num_gt,
                c.num_predictions,
                fmt_opt(c.ap),
                rare
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:>4}  {:>6}  {:>8}", "verb", "gt", "agent AP");
        for a in &self.agent {
            let _ = writeln!(s, "{:>4}  {:>6}  {:>8}", a.verb, a.num_gt, fmt_opt(a.ap));
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:>6}  {:>6}  {:>8}", "subset", "images", "mAP");
        for sub in &self.subsets {
            let _ = writeln!(s, "{:>6}  {:>6}  {:>8}", sub.subset.name(), sub.num_images, fmt_opt(sub.map));
        }
        s
    }
}
