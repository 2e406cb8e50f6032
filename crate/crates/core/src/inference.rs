//! Actor switch inference.
//!
//! Every detected human becomes the actor once. For each actor the network
//! sees the image with that actor's mask, the actor map is read at the actor's
//! center cell and the object map at every object's center cell, and the
//! per-verb triplet score is
//!
//! ```text
//! S[v] = S_actor[v] * S_object[v] * s_actor * s_object     for v < K
//! ```
//!
//! The no-interaction channel never enters the score.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{center_point, to_grid, BBox, GridShape};
use crate::grid::ChannelGrid;
use crate::model::Model;
use crate::supervision::{build_input, MaskMode, ModelInput};
use crate::synth::{Detection, RasterImage};

pub const DEFAULT_TOP_K: usize = 100;

/// Anything that maps an actor-conditioned input to (actor map, object map).
pub trait BranchPredictor {
    fn grid_shape(&self) -> GridShape;
    fn predict(&self, input: &ModelInput) -> Result<(ChannelGrid, ChannelGrid)>;
}

impl BranchPredictor for Model {
    fn grid_shape(&self) -> GridShape {
        self.network.grid_shape()
    }

    fn predict(&self, input: &ModelInput) -> Result<(ChannelGrid, ChannelGrid)> {
        Model::predict(self, input)
    }
}

/// The `K + 1` channel values of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VerbVector(pub Vec<f64>);

impl VerbVector {
    /// The `K` verb entries, without the no-interaction channel.
    pub fn verbs(&self) -> &[f64] {
        &self.0[..self.0.len().saturating_sub(1)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoiPrediction {
    /// Index of the human among the image's human detections.
    pub human_index: usize,
    pub human_box: BBox,
    pub human_score: f64,
    /// Index of the object among the image's object detections.
    pub object_index: usize,
    pub object_box: BBox,
    pub object_category: usize,
    pub object_score: f64,
    pub verb: usize,
    pub score: f64,
}

/// Per-verb actor scores of one detected human.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPrediction {
    pub human_index: usize,
    pub human_box: BBox,
    pub human_score: f64,
    /// `S_actor[v] * s_actor` for `v < K`.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    /// `None` keeps every triplet.
    pub top_k: Option<usize>,
    pub mask_mode: MaskMode,
    /// When false the actor factor is fixed to 1.
    pub use_actor_branch: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            top_k: Some(DEFAULT_TOP_K),
            mask_mode: MaskMode::Rgbm,
            use_actor_branch: true,
        }
    }
}

/// Everything inference produces for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePredictions {
    pub hoi: Vec<HoiPrediction>,
    pub agents: Vec<AgentPrediction>,
}

pub fn index_scores(map: &ChannelGrid, cell: (usize, usize)) -> Result<VerbVector> {
    let (x, y) = cell;
    if x >= map.width() || y >= map.height() {
        return Err(Error::OutOfRange(format!(
            "cell ({x}, {y}) outside {}x{} grid",
            map.width(),
            map.height()
        )));
    }
    Ok(VerbVector(map.cell(x, y)))
}

/// Per-verb triplet scores; the no-interaction entry is dropped.
pub fn compose_pair(actor: &VerbVector, object: &VerbVector, actor_score: f64, object_score: f64) -> Vec<f64> {
    let det = actor_score * object_score;
    actor
        .verbs()
        .iter()
        .zip(object.verbs())
        .map(|(a, o)| a * o * det)
        .collect()
}

/// Score descending, then human, object and verb ascending.
pub fn ranking_order(a: &HoiPrediction, b: &HoiPrediction) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.human_index.cmp(&b.human_index))
        .then(a.object_index.cmp(&b.object_index))
        .then(a.verb.cmp(&b.verb))
}

/// Runs one forward pass per detected human and returns ranked triplets and
/// agent scores.
pub fn infer_image<P: BranchPredictor + ?Sized>(
    predictor: &P,
    image: &RasterImage,
    detections: &[Detection],
    config: &InferenceConfig,
) -> Result<ImagePredictions> {
    let shape = predictor.grid_shape();
    let humans: Vec<&Detection> = detections.iter().filter(|d| d.is_human()).collect();
    let objects: Vec<(&Detection, usize)> = detections
        .iter()
        .filter_map(|d| match d.category {
            crate::synth::Category::Object(c) => Some((d, c)),
            crate::synth::Category::Human => None,
        })
        .collect();
    let object_cells: Vec<(usize, usize)> = objects
        .iter()
        .map(|(d, _)| to_grid(center_point(&d.bbox), &shape))
        .collect();

    let mut hoi = Vec::new();
    let mut agents = Vec::with_capacity(humans.len());
    for (hi, human) in humans.iter().enumerate() {
        let input = build_input(image, &human.bbox, config.mask_mode);
        let (actor_map, object_map) = predictor.predict(&input)?;
        let sa = index_scores(&actor_map, to_grid(center_point(&human.bbox), &shape))?;
        agents.push(AgentPrediction {
            human_index: hi,
            human_box: human.bbox,
            human_score: human.score,
            scores: sa.verbs().iter().map(|v| v * human.score).collect(),
        });
        let sa = if config.use_actor_branch {
            sa
        } else {
            VerbVector(vec![1.0; sa.0.len()])
        };
        for (oi, ((object, category), cell)) in objects.iter().zip(&object_cells).enumerate() {
            let so = index_scores(&object_map, *cell)?;
            for (verb, score) in compose_pair(&sa, &so, human.score, object.score).into_iter().enumerate() {
                hoi.push(HoiPrediction {
                    human_index: hi,
                    human_box: human.bbox,
                    human_score: human.score,
                    object_index: oi,
                    object_box: object.bbox,
                    object_category: *category,
                    object_score: object.score,
                    verb,
                    score,
                });
            }
        }
    }
    hoi.sort_by(ranking_order);
    if let Some(k) = config.top_k {
        hoi.truncate(k);
    }
    Ok(ImagePredictions { hoi, agents })
}

pub fn detect_hoi<P: BranchPredictor + ?Sized>(
    predictor: &P,
    image: &RasterImage,
    detections: &[Detection],
    config: &InferenceConfig,
) -> Result<Vec<HoiPrediction>> {
    Ok(infer_image(predictor, image, detections, config)?.hoi)
}

pub fn agent_scores<P: BranchPredictor + ?Sized>(
    predictor: &P,
    image: &RasterImage,
    detections: &[Detection],
    config: &InferenceConfig,
) -> Result<Vec<AgentPrediction>> {
    Ok(infer_image(predictor, image, detections, config)?.agents)
}
