//! Network inputs and pixel-wise supervision on the output grid.
//!
//! Targets are binary indicators over the rasterized central area `Z` of each
//! box, merged across boxes by elementwise maximum. Weights come in two
//! flavours, both equal to 1 outside every box `B`:
//!
//! - Hanning weight: a raised-cosine window over `B`, applied as `H` on
//!   positive cells and `1 - H` on negative ones;
//! - scale weight: `min(10, lambda_s * max(W', H') / max(w, h))`.
//!
//! Hanning windows are sampled at cell centers, with offsets and window size
//! measured in input pixels.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{box_to_grid, center_area, center_point, BBox, GridShape};
use crate::grid::ChannelGrid;
use crate::synth::{ActorExample, RasterImage, SceneAnnotation};

/// Upper bound of the scale weight.
pub const SCALE_WEIGHT_CAP: f64 = 10.0;
pub const DEFAULT_LAMBDA_S: f64 = 0.5;
pub const DEFAULT_CENTER_RATIO: f64 = 0.3;

/// Image tensor fed to the network, channel-major at input resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl ModelInput {
    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// The mask plane of an RGBM input.
    pub fn mask(&self) -> Option<&[f64]> {
        let n = self.width * self.height;
        (self.channels == 4).then(|| &self.data[3 * n..4 * n])
    }
}

/// How the actor position is shown to the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// RGB plus a binary actor mask channel.
    #[default]
    Rgbm,
    /// Plain RGB; the actor is not indicated at all.
    Rgb,
    /// RGB with 255 (1.0 in unit intensity) added inside the actor box.
    #[serde(rename = "rgb+255")]
    Rgb255,
}

impl MaskMode {
    pub fn channels(&self) -> usize {
        match self {
            MaskMode::Rgbm => 4,
            MaskMode::Rgb | MaskMode::Rgb255 => 3,
        }
    }
}

fn pixel_in_box(b: &BBox, x: usize, y: usize) -> bool {
    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
    px >= b.x1 && px < b.x2 && py >= b.y1 && py < b.y2
}

/// RGB image plus a mask that is 1 where the pixel center lies in `actor`.
pub fn make_rgbm(image: &RasterImage, actor: &BBox) -> ModelInput {
    build_input(image, actor, MaskMode::Rgbm)
}

pub fn build_input(image: &RasterImage, actor: &BBox, mode: MaskMode) -> ModelInput {
    let (w, h) = (image.width, image.height);
    let n = w * h;
    let mut data = Vec::with_capacity(mode.channels() * n);
    data.extend_from_slice(&image.data);
    match mode {
        MaskMode::Rgbm => {
            for y in 0..h {
                for x in 0..w {
                    data.push(if pixel_in_box(actor, x, y) { 1.0 } else { 0.0 });
                }
            }
        }
        MaskMode::Rgb => {}
        MaskMode::Rgb255 => {
            for c in 0..3 {
                for y in 0..h {
                    for x in 0..w {
                        if pixel_in_box(actor, x, y) {
                            data[c * n + y * w + x] += 1.0;
                        }
                    }
                }
            }
        }
    }
    ModelInput {
        width: w,
        height: h,
        channels: mode.channels(),
        data,
    }
}

/// Verbs a box takes part in, or the no-interaction marker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerbSet {
    Verbs(BTreeSet<usize>),
    WithoutInteraction,
}

impl VerbSet {
    /// Empty verb lists map to the no-interaction marker.
    pub fn from_verbs(verbs: impl IntoIterator<Item = usize>) -> Self {
        let set: BTreeSet<usize> = verbs.into_iter().collect();
        if set.is_empty() {
            VerbSet::WithoutInteraction
        } else {
            VerbSet::Verbs(set)
        }
    }

    /// Whether channel `c` (of `num_verbs + 1`) is switched on by this set.
    pub fn activates(&self, c: usize, num_verbs: usize, include_wo: bool) -> bool {
        match self {
            VerbSet::Verbs(s) => c < num_verbs && s.contains(&c),
            VerbSet::WithoutInteraction => include_wo && c == num_verbs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedBox {
    pub bbox: BBox,
    pub verbs: VerbSet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetParams {
    pub num_verbs: usize,
    /// Central-area ratio.
    pub ratio: f64,
    /// Supervise the no-interaction channel.
    pub include_wo: bool,
}

/// Binary targets over `num_verbs + 1` channels, merged by elementwise max.
pub fn branch_target(boxes: &[SupervisedBox], shape: &GridShape, params: &TargetParams) -> ChannelGrid {
    let channels = params.num_verbs + 1;
    let mut out = ChannelGrid::zeros(shape.width, shape.height, channels);
    for sb in boxes {
        let z = box_to_grid(&center_area(&sb.bbox, params.ratio), shape);
        for c in (0..channels).filter(|&c| sb.verbs.activates(c, params.num_verbs, params.include_wo)) {
            for (x, y) in z.cells() {
                out.set(x, y, c, 1.0);
            }
        }
    }
    out
}

/// 2-D Hanning window. Axes with size `<= 1` contribute a factor of 1.
pub fn hanning(x: f64, y: f64, w: f64, h: f64) -> f64 {
    let factor = |v: f64, size: f64| {
        if size <= 1.0 {
            1.0
        } else {
            0.5 * (1.0 + (2.0 * PI * v / (size - 1.0)).cos())
        }
    };
    factor(x, w) * factor(y, h)
}

/// Window value of box `b` at the center of cell `(cx, cy)`; offsets are
/// clamped to the window half-extent.
fn window_at(b: &BBox, cx: usize, cy: usize, shape: &GridShape) -> f64 {
    let (px, py) = shape.cell_center(cx, cy);
    let (x0, y0) = center_point(b);
    let (w, h) = (b.width(), b.height());
    let clampv = |v: f64, size: f64| {
        let half = ((size - 1.0) / 2.0).max(0.0);
        v.clamp(-half, half)
    };
    hanning(clampv(px - x0, w), clampv(py - y0, h), w, h)
}

/// Hanning weights for targets built by [`branch_target`] from the same boxes.
pub fn hanning_weight_map(
    boxes: &[SupervisedBox],
    targets: &ChannelGrid,
    shape: &GridShape,
    params: &TargetParams,
) -> ChannelGrid {
    let channels = targets.channels();
    // Per channel: best positive window and lowest negative complement.
    let mut pos = ChannelGrid::filled(shape.width, shape.height, channels, f64::NEG_INFINITY);
    let mut neg = ChannelGrid::filled(shape.width, shape.height, channels, f64::INFINITY);
    for sb in boxes {
        let full = box_to_grid(&sb.bbox, shape);
        let z = box_to_grid(&center_area(&sb.bbox, params.ratio), shape);
        for (x, y) in full.cells() {
            let hv = window_at(&sb.bbox, x, y, shape);
            for c in 0..channels {
                let n = neg.get(x, y, c).min(1.0 - hv);
                neg.set(x, y, c, n);
                if z.contains(x, y) && sb.verbs.activates(c, params.num_verbs, params.include_wo) {
                    let p = pos.get(x, y, c).max(hv);
                    pos.set(x, y, c, p);
                }
            }
        }
    }
    let mut out = ChannelGrid::filled(shape.width, shape.height, channels, 1.0);
    for c in 0..channels {
        for y in 0..shape.height {
            for x in 0..shape.width {
                let n = neg.get(x, y, c);
                if n.is_infinite() {
                    continue;
                }
                let v = if targets.get(x, y, c) >= 0.5 {
                    let p = pos.get(x, y, c);
                    if p.is_finite() { p } else { 1.0 - n }
                } else {
                    n
                };
                out.set(x, y, c, v);
            }
        }
    }
    out
}

/// Scale weight for a box spanning `box_w x box_h` cells on a `grid_w x grid_h` grid.
pub fn scale_weight(grid_w: usize, grid_h: usize, box_w: usize, box_h: usize, lambda_s: f64) -> f64 {
    let denom = box_w.max(box_h).max(1) as f64;
    (lambda_s * grid_w.max(grid_h) as f64 / denom).min(SCALE_WEIGHT_CAP)
}

/// Scale weights, broadcast over `channels`; overlapping boxes take the max.
pub fn scale_weight_map(boxes: &[BBox], shape: &GridShape, channels: usize, lambda_s: f64) -> ChannelGrid {
    let mut plane = vec![f64::NEG_INFINITY; shape.cells()];
    for b in boxes {
        let gb = box_to_grid(b, shape);
        let v = scale_weight(shape.width, shape.height, gb.width(), gb.height(), lambda_s);
        for (x, y) in gb.cells() {
            let cell = &mut plane[y * shape.width + x];
            *cell = cell.max(v);
        }
    }
    let mut out = ChannelGrid::zeros(shape.width, shape.height, channels);
    for c in 0..channels {
        for y in 0..shape.height {
            for x in 0..shape.width {
                let v = plane[y * shape.width + x];
                out.set(x, y, c, if v.is_finite() { v } else { 1.0 });
            }
        }
    }
    out
}

/// Which branches supervise the no-interaction channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WoPlacement {
    None,
    Actor,
    #[default]
    Object,
    Both,
}

impl WoPlacement {
    pub fn actor(&self) -> bool {
        matches!(self, WoPlacement::Actor | WoPlacement::Both)
    }

    pub fn object(&self) -> bool {
        matches!(self, WoPlacement::Object | WoPlacement::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupervisionConfig {
    pub num_verbs: usize,
    pub center_ratio: f64,
    pub lambda_s: f64,
    pub hanning: bool,
    pub scale_weight: bool,
    pub wo_channel: WoPlacement,
}

impl Default for SupervisionConfig {
    fn default() -> Self {
        Self {
            num_verbs: 3,
            center_ratio: DEFAULT_CENTER_RATIO,
            lambda_s: DEFAULT_LAMBDA_S,
            hanning: true,
            scale_weight: true,
            wo_channel: WoPlacement::Object,
        }
    }
}

/// Targets and weights of one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchSupervision {
    pub target: ChannelGrid,
    pub hanning: ChannelGrid,
    pub scale: ChannelGrid,
}

fn branch(boxes: &[SupervisedBox], shape: &GridShape, cfg: &SupervisionConfig, include_wo: bool) -> BranchSupervision {
    let params = TargetParams {
        num_verbs: cfg.num_verbs,
        ratio: cfg.center_ratio,
        include_wo,
    };
    let channels = cfg.num_verbs + 1;
    let target = branch_target(boxes, shape, &params);
    let hanning = if cfg.hanning {
        hanning_weight_map(boxes, &target, shape, &params)
    } else {
        ChannelGrid::filled(shape.width, shape.height, channels, 1.0)
    };
    let scale = if cfg.scale_weight {
        let bbs: Vec<BBox> = boxes.iter().map(|b| b.bbox).collect();
        scale_weight_map(&bbs, shape, channels, cfg.lambda_s)
    } else {
        ChannelGrid::filled(shape.width, shape.height, channels, 1.0)
    };
    BranchSupervision { target, hanning, scale }
}

/// Supervision for both branches of one training example.
///
/// Every annotated object enters the object branch; objects the actor does not
/// interact with carry the no-interaction marker.
pub fn example_supervision(
    example: &ActorExample,
    scene: &SceneAnnotation,
    shape: &GridShape,
    cfg: &SupervisionConfig,
) -> Result<(BranchSupervision, BranchSupervision)> {
    if let Some(v) = example
        .objects
        .iter()
        .flat_map(|o| o.verbs.iter())
        .find(|&&v| v >= cfg.num_verbs)
    {
        return Err(Error::VocabularyMismatch(format!("verb {v} >= {}", cfg.num_verbs)));
    }
    let actor = [SupervisedBox {
        bbox: example.actor_box,
        verbs: VerbSet::from_verbs(example.actor_verbs()),
    }];
    let objects: Vec<SupervisedBox> = scene
        .objects
        .iter()
        .enumerate()
        .map(|(oi, o)| {
            let verbs = example
                .objects
                .iter()
                .find(|io| io.object == oi)
                .map(|io| io.verbs.clone())
                .unwrap_or_default();
            SupervisedBox {
                bbox: o.bbox,
                verbs: VerbSet::from_verbs(verbs),
            }
        })
        .collect();
    Ok((
        branch(&actor, shape, cfg, cfg.wo_channel.actor()),
        branch(&objects, shape, cfg, cfg.wo_channel.object()),
    ))
}
