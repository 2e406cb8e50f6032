use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Detection, SceneAnnotation};
use crate::geometry::{iou, BBox};

/// IoU a detected person must exceed to inherit an annotated person's labels.
pub const ASSIGN_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractingObject {
    /// Index into the scene's annotated objects.
    pub object: usize,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub category: usize,
    pub verbs: Vec<usize>,
}

/// One detected person prepared for training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorExample {
    pub actor_box: BBox,
    pub actor_score: f64,
    /// Annotated person the detection was matched to, if any.
    pub matched_human: Option<usize>,
    pub objects: Vec<InteractingObject>,
    pub positive: bool,
}

impl ActorExample {
    /// Union of the actor's verbs, sorted.
    pub fn actor_verbs(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.objects.iter().flat_map(|o| o.verbs.iter().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Turns detected persons into training examples.
///
/// A detection inherits the objects and verbs of the annotated person it
/// overlaps with IoU strictly above 0.5; among several, the highest IoU wins,
/// then the lowest annotation index. Unmatched detections are negatives.
pub fn arrange_annotations(detections: &[Detection], gt: &SceneAnnotation) -> Vec<ActorExample> {
    detections
        .iter()
        .filter(|d| d.is_human())
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for (i, hb) in gt.humans.iter().enumerate() {
                let v = iou(&d.bbox, hb);
                if v > ASSIGN_IOU && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((i, v));
                }
            }
            match best {
                Some((h, _)) => {
                    let objects = gt
                        .objects
                        .iter()
                        .enumerate()
                        .filter_map(|(oi, o)| {
                            let verbs = gt.verbs_between(h, oi);
                            (!verbs.is_empty()).then_some(InteractingObject {
                                object: oi,
                                bbox: o.bbox,
                                category: o.category,
                                verbs,
                            })
                        })
                        .collect();
                    ActorExample {
                        actor_box: d.bbox,
                        actor_score: d.score,
                        matched_human: Some(h),
                        objects,
                        positive: true,
                    }
                }
                None => ActorExample {
                    actor_box: d.bbox,
                    actor_score: d.score,
                    matched_human: None,
                    objects: Vec::new(),
                    positive: false,
                },
            }
        })
        .collect()
}

/// Keeps every positive and at most `ceil(positives * ratio)` negatives,
/// sampled without replacement. Survivors keep their input order.
pub fn balance_examples(examples: Vec<ActorExample>, ratio: f64, seed: u64) -> Vec<ActorExample> {
    let positive: Vec<bool> = examples.iter().map(|e| e.positive).collect();
    let keep = balanced_indices(&positive, ratio, seed);
    let mut keep = keep.into_iter().peekable();
    examples
        .into_iter()
        .enumerate()
        .filter(|(i, _)| keep.next_if_eq(i).is_some())
        .map(|(_, e)| e)
        .collect()
}

/// Indices kept by [`balance_examples`], ascending.
pub fn balanced_indices(positive: &[bool], ratio: f64, seed: u64) -> Vec<usize> {
    let n_pos = positive.iter().filter(|p| **p).count();
    let neg_idx: Vec<usize> = (0..positive.len()).filter(|&i| !positive[i]).collect();
    let keep = ((n_pos as f64 * ratio).ceil() as usize).min(neg_idx.len());
    let mut kept = positive.to_vec();
    if keep == neg_idx.len() {
        kept.fill(true);
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for j in sample(&mut rng, neg_idx.len(), keep) {
            kept[neg_idx[j]] = true;
        }
    }
    (0..kept.len()).filter(|&i| kept[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{AnnotatedObject, Category, Triplet};

    fn scene() -> SceneAnnotation {
        SceneAnnotation {
            width: 100,
            height: 100,
            humans: vec![BBox::new(0., 0., 10., 10.), BBox::new(2., 0., 12., 10.)],
            objects: vec![
                AnnotatedObject {
                    bbox: BBox::new(50., 50., 60., 60.),
                    category: 0,
                },
                AnnotatedObject {
                    bbox: BBox::new(70., 70., 80., 80.),
                    category: 1,
                },
            ],
            triplets: vec![
                Triplet { human: 0, verb: 1, object: 0 },
                Triplet { human: 1, verb: 2, object: 1 },
            ],
        }
    }

    fn human(b: BBox) -> Detection {
        Detection {
            bbox: b,
            category: Category::Human,
            score: 0.9,
        }
    }

    #[test]
    fn exact_match_is_positive() {
        let ex = arrange_annotations(&[human(BBox::new(0., 0., 10., 10.))], &scene());
        assert_eq!(ex.len(), 1);
        assert!(ex[0].positive);
        assert_eq!(ex[0].matched_human, Some(0));
        assert_eq!(ex[0].objects.len(), 1);
        assert_eq!(ex[0].objects[0].verbs, vec![1]);
        assert_eq!(ex[0].actor_score, 0.9);
    }

    #[test]
    fn low_iou_is_negative() {
        let mut gt = scene();
        gt.humans.truncate(1);
        // iou with (0,0,10,10): inter 40, union 160 -> 0.25
        let ex = arrange_annotations(&[human(BBox::new(6., 0., 16., 10.))], &gt);
        assert!(!ex[0].positive);
        assert!(ex[0].objects.is_empty());
    }

    #[test]
    fn iou_exactly_half_is_negative() {
        let mut gt = scene();
        gt.humans.truncate(1);
        // inter 50 / union 100
        let det = human(BBox::new(0., 0., 5., 10.));
        assert_eq!(iou(&det.bbox, &gt.humans[0]), 0.5);
        assert!(!arrange_annotations(&[det], &gt)[0].positive);
    }

    #[test]
    fn highest_iou_wins() {
        // Build two persons with iou 0.6 and 0.8 against the detection.
        let det = BBox::new(0., 0., 10., 10.);
        // width w starting at 0: iou = w/10 for w<=10 -> 6 gives 0.6, 8 gives 0.8
        let mut gt = scene();
        gt.humans = vec![BBox::new(0., 0., 6., 10.), BBox::new(0., 0., 8., 10.)];
        assert!((iou(&det, &gt.humans[0]) - 0.6).abs() < 1e-12);
        assert!((iou(&det, &gt.humans[1]) - 0.8).abs() < 1e-12);
        let ex = arrange_annotations(&[human(det)], &gt);
        assert_eq!(ex[0].matched_human, Some(1));
        assert_eq!(ex[0].objects[0].object, 1);
        assert_eq!(ex[0].actor_verbs(), vec![2]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let mut gt = scene();
        gt.humans = vec![BBox::new(0., 0., 10., 10.), BBox::new(0., 0., 10., 10.)];
        let ex = arrange_annotations(&[human(BBox::new(0., 0., 10., 10.))], &gt);
        assert_eq!(ex[0].matched_human, Some(0));
    }

    #[test]
    fn objects_are_skipped() {
        let det = Detection {
            bbox: BBox::new(0., 0., 10., 10.),
            category: Category::Object(0),
            score: 0.9,
        };
        assert!(arrange_annotations(&[det], &scene()).is_empty());
        assert!(arrange_annotations(&[], &scene()).is_empty());
    }

    /// `pos` positives followed by `neg` negatives, then reversed so order
    /// preservation is observable through descending `x1`.
    fn mixed(pos: usize, neg: usize) -> Vec<ActorExample> {
        let mut v: Vec<ActorExample> = (0..pos + neg)
            .map(|i| ActorExample {
                actor_box: BBox::new(i as f64, 0., i as f64 + 1., 1.),
                actor_score: 1.0,
                matched_human: None,
                objects: vec![],
                positive: i < pos,
            })
            .collect();
        v.reverse();
        v
    }

    #[test]
    fn balance_examples_counts() {
        let out = balance_examples(mixed(4, 12), 1.0, 3);
        assert_eq!(out.iter().filter(|e| e.positive).count(), 4);
        assert_eq!(out.iter().filter(|e| !e.positive).count(), 4);
        // order preserved
        let xs: Vec<f64> = out.iter().map(|e| e.actor_box.x1).collect();
        assert!(xs.windows(2).all(|w| w[0] > w[1]));

        assert_eq!(balance_examples(mixed(4, 2), 1.0, 3).len(), 6);
        assert!(balance_examples(mixed(0, 5), 1.0, 3).is_empty());
    }

    #[test]
    fn balance_is_seeded() {
        let a = balance_examples(mixed(3, 20), 1.0, 11);
        let b = balance_examples(mixed(3, 20), 1.0, 11);
        assert_eq!(a, b);
        let c = balance_examples(mixed(3, 20), 2.0, 11);
        assert_eq!(c.len(), 3 + 6);
    }
}
