use hoi_core::geometry::GridShape;
use hoi_core::grid::ChannelGrid;
use hoi_core::inference::{infer_image, ranking_order, BranchPredictor, InferenceConfig};
use hoi_core::supervision::ModelInput;
use hoi_core::synth::{Category, Detection, RasterImage};
use hoi_core::{BBox, Result};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Maps derived from the mask position, so different actors see different
/// object-branch outputs without a trained network.
struct MaskDependent {
    shape: GridShape,
    channels: usize,
    seed: u64,
}

impl BranchPredictor for MaskDependent {
    fn grid_shape(&self) -> GridShape {
        self.shape
    }

    fn predict(&self, input: &ModelInput) -> Result<(ChannelGrid, ChannelGrid)> {
        let mask = input.mask().unwrap();
        let anchor = mask.iter().position(|&m| m > 0.0).unwrap_or(0) as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ anchor.wrapping_mul(0x9e37_79b9));
        let (w, h, c) = (self.shape.width, self.shape.height, self.channels);
        let mut grid = || ChannelGrid::from_vec(w, h, c, (0..w * h * c).map(|_| rng.random_range(0.0..1.0)).collect());
        Ok((grid()?, grid()?))
    }
}

fn scene(seed: u64, n_humans: usize, n_objects: usize) -> (RasterImage, Vec<Detection>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dets = Vec::new();
    for i in 0..n_humans + n_objects {
        let (x, y) = (rng.random_range(0.0..50.0), rng.random_range(0.0..50.0));
        dets.push(Detection {
            bbox: BBox::new(x, y, x + rng.random_range(4.0..14.0), y + rng.random_range(4.0..14.0)),
            category: if i < n_humans { Category::Human } else { Category::Object(rng.random_range(0..2)) },
            score: rng.random_range(0.05..1.0),
        });
    }
    (RasterImage::new(64, 64), dets)
}

fn predictor(seed: u64) -> MaskDependent {
    MaskDependent {
        shape: GridShape::for_input(64, 64, 4),
        channels: 4,
        seed,
    }
}

proptest! {
    #[test]
    fn output_is_ranked_and_complete(seed in any::<u64>(), nh in 0usize..4, no in 0usize..4) {
        let (image, dets) = scene(seed, nh, no);
        let cfg = InferenceConfig { top_k: None, ..InferenceConfig::default() };
        let out = infer_image(&predictor(seed), &image, &dets, &cfg).unwrap();
        prop_assert_eq!(out.hoi.len(), nh * no * 3);
        prop_assert_eq!(out.agents.len(), nh);
        for pair in out.hoi.windows(2) {
            prop_assert!(ranking_order(&pair[0], &pair[1]).is_le());
        }
        for p in &out.hoi {
            prop_assert!(p.score >= 0.0 && p.score <= p.human_score * p.object_score);
        }
    }

    #[test]
    fn scaling_detection_scores_keeps_the_order(seed in any::<u64>(), k in 0.1..10.0f64) {
        let (image, dets) = scene(seed, 3, 3);
        let scaled: Vec<Detection> = dets.iter().map(|d| Detection { score: d.score * k, ..*d }).collect();
        let cfg = InferenceConfig { top_k: None, ..InferenceConfig::default() };
        let p = predictor(seed);
        let key = |d: &[Detection]| -> Vec<(usize, usize, usize)> {
            infer_image(&p, &image, d, &cfg).unwrap().hoi.iter().map(|h| (h.human_index, h.object_index, h.verb)).collect()
        };
        prop_assert_eq!(key(&dets), key(&scaled));
    }

    #[test]
    fn top_k_is_a_prefix(seed in any::<u64>(), k in 1usize..40) {
        let (image, dets) = scene(seed, 3, 3);
        let p = predictor(seed);
        let all = infer_image(&p, &image, &dets, &InferenceConfig { top_k: None, ..InferenceConfig::default() }).unwrap();
        let top = infer_image(&p, &image, &dets, &InferenceConfig { top_k: Some(k), ..InferenceConfig::default() }).unwrap();
        prop_assert_eq!(&all.hoi[..k.min(all.hoi.len())], &top.hoi[..]);
    }
}
