use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{uniform, Category, SceneAnnotation, SynthConfig};
use crate::geometry::BBox;
use crate::rng::{item_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub category: Category,
    pub score: f64,
}

impl Detection {
    pub fn is_human(&self) -> bool {
        self.category == Category::Human
    }
}

fn jittered(b: &BBox, jitter: f64, u: [f64; 4], w: f64, h: f64) -> BBox {
    let (bw, bh) = (b.width(), b.height());
    BBox::new(
        b.x1 + u[0] * jitter * bw,
        b.y1 + u[1] * jitter * bh,
        b.x2 + u[2] * jitter * bw,
        b.y2 + u[3] * jitter * bh,
    )
    .clamp_to(w, h)
}

/// Stand-in object detector: jittered ground truth plus optional false positives.
///
/// True boxes score in `[0.5, 1]`, false positives in `(0, 0.5)`. Output is
/// filtered by `score_threshold`, sorted by score and capped at
/// `max_detections`. Random draws do not depend on `jitter`, so two configs
/// differing only in jitter see the same scores.
pub fn stub_detect(annotation: &SceneAnnotation, config: &SynthConfig, index: u64) -> Vec<Detection> {
    let mut rng = item_rng(config.seed, index, Stream::Detector);
    let (w, h) = (annotation.width as f64, annotation.height as f64);
    let sources = annotation
        .humans
        .iter()
        .map(|b| (*b, Category::Human))
        .chain(
            annotation
                .objects
                .iter()
                .map(|o| (o.bbox, Category::Object(o.category))),
        );

    let mut dets = Vec::new();
    let mut n_fp = 0usize;
    for (gt, category) in sources {
        let u: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
        let score = rng.random_range(0.5..=1.0);
        dets.push(Detection {
            bbox: jittered(&gt, config.jitter, u, w, h),
            category,
            score,
        });
        if rng.random_bool(config.false_positive_rate) {
            n_fp += 1;
        }
    }
    for _ in 0..n_fp {
        let category = if rng.random_bool(0.5) {
            Category::Human
        } else {
            Category::Object(rng.random_range(0..config.num_categories))
        };
        let (bw, bh) = match category {
            Category::Human => (uniform(&mut rng, config.human_width), uniform(&mut rng, config.human_height)),
            Category::Object(_) => {
                let s = uniform(&mut rng, config.object_size);
                (s, s)
            }
        };
        let x = rng.random_range(0.0..=(w - bw).max(0.0));
        let y = rng.random_range(0.0..=(h - bh).max(0.0));
        let score = rng.random_range(1e-6..0.5);
        dets.push(Detection {
            bbox: BBox::new(x, y, x + bw, y + bh),
            category,
            score,
        });
    }

    dets.retain(|d| d.score >= config.score_threshold);
    // Stable: equal scores keep generation order.
    dets.sort_by(|a, b| b.score.total_cmp(&a.score));
    dets.truncate(config.max_detections);
    dets
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, Range};

    #[test]
    fn zero_jitter_returns_ground_truth() {
        let cfg = SynthConfig::default();
        for i in 0..10 {
            let (_, ann) = generate_scene(&cfg, i).unwrap();
            let dets = stub_detect(&ann, &cfg, i);
            assert_eq!(dets.len(), ann.humans.len() + ann.objects.len());
            for hb in &ann.humans {
                assert!(dets.iter().any(|d| d.is_human() && d.bbox == *hb));
            }
            for o in &ann.objects {
                assert!(dets
                    .iter()
                    .any(|d| d.category == Category::Object(o.category) && d.bbox == o.bbox));
            }
            assert!(dets.windows(2).all(|w| w[0].score >= w[1].score));
            assert!(dets.iter().all(|d| (0.5..=1.0).contains(&d.score)));
        }
    }

    #[test]
    fn small_jitter_keeps_iou_above_half() {
        let cfg = SynthConfig {
            jitter: 0.05,
            ..SynthConfig::default()
        };
        for i in 0..100 {
            let (_, ann) = generate_scene(&cfg, i).unwrap();
            let dets = stub_detect(&ann, &cfg, i);
            let humans: Vec<_> = dets.iter().filter(|d| d.is_human()).collect();
            for hb in &ann.humans {
                let best = humans.iter().map(|d| d.bbox.iou(hb)).fold(0.0, f64::max);
                assert!(best > 0.5, "scene {i}: best iou {best}");
            }
        }
    }

    #[test]
    fn max_detections_keeps_top_scores() {
        let cfg = SynthConfig {
            humans_per_image: Range::new(1, 1),
            objects_per_image: Range::new(4, 4),
            ..SynthConfig::default()
        };
        let (_, ann) = generate_scene(&cfg, 0).unwrap();
        let all = stub_detect(&ann, &cfg, 0);
        assert_eq!(all.len(), 5);
        let capped = stub_detect(&ann, &SynthConfig { max_detections: 3, ..cfg }, 0);
        assert_eq!(capped.len(), 3);
        assert_eq!(capped[..], all[..3]);
    }

    #[test]
    fn false_positives_score_below_half_and_respect_threshold() {
        let cfg = SynthConfig {
            false_positive_rate: 1.0,
            score_threshold: 0.2,
            ..SynthConfig::default()
        };
        let (_, ann) = generate_scene(&cfg, 5).unwrap();
        let dets = stub_detect(&ann, &cfg, 5);
        assert!(dets.iter().all(|d| d.score >= 0.2));
        let unthresholded = stub_detect(&ann, &SynthConfig { score_threshold: 0.0, ..cfg.clone() }, 5);
        let n_gt = ann.humans.len() + ann.objects.len();
        assert_eq!(unthresholded.len(), 2 * n_gt);
        assert_eq!(unthresholded.iter().filter(|d| d.score < 0.5).count(), n_gt);
        // determinism
        assert_eq!(dets, stub_detect(&ann, &cfg, 5));
    }
}
