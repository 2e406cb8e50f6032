//! Procedural scenes with humans, objects and geometrically-defined verbs.
//!
//! Each verb is a spatial predicate between a human box and an object box, so
//! every recorded triplet can be read off the picture. Placement rejects
//! layouts where a non-interacting pair sits closer than
//! [`SynthConfig::clearance`], which keeps positives and negatives visually
//! separable.

mod arrange;
mod detector;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::rng::{item_rng, Stream};

pub use arrange::{arrange_annotations, balance_examples, balanced_indices, ActorExample, InteractingObject};
pub use detector::{stub_detect, Detection};

/// Detection / annotation category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Human,
    Object(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedObject {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub category: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub human: usize,
    pub verb: usize,
    pub object: usize,
}

/// Ground truth for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneAnnotation {
    pub width: usize,
    pub height: usize,
    pub humans: Vec<BBox>,
    pub objects: Vec<AnnotatedObject>,
    pub triplets: Vec<Triplet>,
}

impl SceneAnnotation {
    pub fn validate(&self, num_verbs: usize, num_categories: usize) -> Result<()> {
        let (w, h) = (self.width as f64, self.height as f64);
        for b in self
            .humans
            .iter()
            .chain(self.objects.iter().map(|o| &o.bbox))
        {
            if !b.is_within(w, h) || b.x1 > b.x2 || b.y1 > b.y2 {
                return Err(Error::InvalidConfig(format!("box {b:?} outside {w}x{h}")));
            }
        }
        if let Some(o) = self.objects.iter().find(|o| o.category >= num_categories) {
            return Err(Error::VocabularyMismatch(format!(
                "object category {} >= {num_categories}",
                o.category
            )));
        }
        for t in &self.triplets {
            if t.human >= self.humans.len() || t.object >= self.objects.len() {
                return Err(Error::OutOfRange(format!("triplet {t:?}")));
            }
            if t.verb >= num_verbs {
                return Err(Error::VocabularyMismatch(format!("verb {} >= {num_verbs}", t.verb)));
            }
        }
        Ok(())
    }

    /// Sorted, de-duplicated verbs between one human and one object.
    pub fn verbs_between(&self, human: usize, object: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .triplets
            .iter()
            .filter(|t| t.human == human && t.object == object)
            .map(|t| t.verb)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Three-channel image with intensities in `[0, 1]`, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    /// `3 * height * width` values.
    pub data: Vec<f64>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; 3 * width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Interleaved 8-bit RGB bytes.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(3 * self.width * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..3 {
                    out.push((self.get(x, y, c) * 255.0).round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        out
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != 3 * width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} bytes for a {width}x{height} RGB image",
                bytes.len()
            )));
        }
        let mut img = RasterImage::new(width, height);
        for y in 0..height {
            for x in 0..width {
                for c in 0..3 {
                    img.set(x, y, c, bytes[(y * width + x) * 3 + c] as f64 / 255.0);
                }
            }
        }
        Ok(img)
    }
}

/// Spatial predicate that defines a verb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerbRule {
    /// Object box overlaps the human box.
    Hold,
    /// Object beside the human: shared vertical span, small horizontal gap.
    NextTo,
    /// Object just above the human, inside a 45 degree cone from the top center.
    Look,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range<T> {
    pub min: T,
    pub max: T,
}

impl<T: PartialOrd + Copy> Range<T> {
    pub fn new(min: T, max: T) -> Self {
        Self { min, max }
    }

    pub fn is_valid(&self) -> bool {
        self.min <= self.max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub image_width: usize,
    pub image_height: usize,
    pub num_verbs: usize,
    pub num_categories: usize,
    pub humans_per_image: Range<usize>,
    pub objects_per_image: Range<usize>,
    pub human_width: Range<f64>,
    pub human_height: Range<f64>,
    pub object_size: Range<f64>,
    /// Verb id to spatial predicate; length must equal `num_verbs`.
    pub verb_rules: Vec<VerbRule>,
    /// Largest horizontal gap (px) that still counts as next-to.
    pub next_to_gap: f64,
    /// Largest vertical gap (px) that still counts as look.
    pub look_gap: f64,
    /// Minimum gap (px) between a human and any object it does not interact with.
    pub clearance: f64,
    /// Detector stub: per-coordinate shift as a fraction of box side.
    pub jitter: f64,
    /// Detector stub: chance per ground-truth box of adding a false positive.
    pub false_positive_rate: f64,
    pub max_detections: usize,
    pub score_threshold: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            image_width: 64,
            image_height: 64,
            num_verbs: 3,
            num_categories: 2,
            humans_per_image: Range::new(1, 3),
            objects_per_image: Range::new(1, 3),
            human_width: Range::new(10.0, 13.0),
            human_height: Range::new(17.0, 22.0),
            object_size: Range::new(6.0, 9.0),
            verb_rules: vec![VerbRule::Hold, VerbRule::NextTo, VerbRule::Look],
            next_to_gap: 5.0,
            look_gap: 5.0,
            clearance: 9.0,
            jitter: 0.0,
            false_positive_rate: 0.0,
            max_detections: 100,
            score_threshold: 0.05,
            seed: 0,
        }
    }
}

const MAX_SCENE_ATTEMPTS: usize = 200;
const MAX_PLACEMENT_ATTEMPTS: usize = 100;
const HUMAN_SPACING: f64 = 3.0;
const OBJECT_SPACING: f64 = 2.0;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_verbs == 0 {
            return bad("num_verbs must be >= 1".into());
        }
        if self.num_categories == 0 {
            return bad("num_categories must be >= 1".into());
        }
        if self.verb_rules.len() != self.num_verbs {
            return bad(format!(
                "{} verb rules for {} verbs",
                self.verb_rules.len(),
                self.num_verbs
            ));
        }
        if !self.humans_per_image.is_valid()
            || !self.objects_per_image.is_valid()
            || !self.human_width.is_valid()
            || !self.human_height.is_valid()
            || !self.object_size.is_valid()
        {
            return bad("empty range".into());
        }
        if self.human_width.min <= 0.0 || self.human_height.min <= 0.0 || self.object_size.min <= 0.0 {
            return bad("box sizes must be positive".into());
        }
        let (w, h) = (self.image_width as f64, self.image_height as f64);
        if self.human_width.max > w
            || self.human_height.max > h
            || self.object_size.max > w.min(h)
        {
            return bad(format!("box ranges do not fit a {w}x{h} image"));
        }
        if !(0.0..=1.0).contains(&self.false_positive_rate) || self.jitter < 0.0 {
            return bad("jitter must be >= 0 and false_positive_rate in [0,1]".into());
        }
        if !(0.0..1.0).contains(&self.score_threshold) {
            return bad("score_threshold must be in [0,1)".into());
        }
        Ok(())
    }

    fn rule_holds(&self, rule: VerbRule, human: &BBox, object: &BBox) -> bool {
        match rule {
            VerbRule::Hold => human.intersection_area(object) > 0.0,
            VerbRule::NextTo => {
                let overlap_y = human.y2.min(object.y2) - human.y1.max(object.y1);
                let gap_x = (object.x1 - human.x2).max(human.x1 - object.x2);
                human.intersection_area(object) == 0.0
                    && overlap_y >= 2.0
                    && gap_x >= 0.0
                    && gap_x <= self.next_to_gap
            }
            VerbRule::Look => {
                let (hx, _) = human.center();
                let (ox, oy) = object.center();
                let gap = human.y1 - object.y2;
                gap >= 0.0 && gap <= self.look_gap && (ox - hx).abs() <= human.y1 - oy
            }
        }
    }

    /// Verbs (ids) whose predicate holds for a human/object pair.
    pub fn verbs_for(&self, human: &BBox, object: &BBox) -> Vec<usize> {
        self.verb_rules
            .iter()
            .enumerate()
            .filter(|(_, r)| self.rule_holds(**r, human, object))
            .map(|(v, _)| v)
            .collect()
    }
}

/// Placement intent for one object.
#[derive(Debug, Clone, Copy)]
enum Intent {
    Rule(VerbRule),
    Free,
}

/// Renders scene `index` of the dataset described by `config`.
///
/// Pure in `(config, index)`.
pub fn generate_scene(config: &SynthConfig, index: u64) -> Result<(RasterImage, SceneAnnotation)> {
    config.validate()?;
    let mut rng = item_rng(config.seed, index, Stream::Scene);
    for _ in 0..MAX_SCENE_ATTEMPTS {
        if let Some(ann) = try_layout(config, &mut rng) {
            let image = render(config, &ann, &mut rng);
            return Ok((image, ann));
        }
    }
    Err(Error::Generation(format!(
        "could not place boxes for scene {index} after {MAX_SCENE_ATTEMPTS} attempts"
    )))
}

fn uniform(rng: &mut ChaCha8Rng, r: Range<f64>) -> f64 {
    if r.max > r.min {
        rng.random_range(r.min..=r.max)
    } else {
        r.min
    }
}

fn try_layout(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Option<SceneAnnotation> {
    let (w, h) = (config.image_width as f64, config.image_height as f64);
    let n_humans = rng.random_range(config.humans_per_image.min..=config.humans_per_image.max);
    let n_objects = rng.random_range(config.objects_per_image.min..=config.objects_per_image.max);

    let mut humans: Vec<BBox> = Vec::with_capacity(n_humans);
    for _ in 0..n_humans {
        let placed = (0..MAX_PLACEMENT_ATTEMPTS).find_map(|_| {
            let bw = uniform(rng, config.human_width);
            let bh = uniform(rng, config.human_height);
            let x = rng.random_range(0.0..=(w - bw));
            let y = rng.random_range(0.0..=(h - bh));
            let b = BBox::new(x, y, x + bw, y + bh);
            humans
                .iter()
                .all(|o| o.gap(&b) >= HUMAN_SPACING && o.intersection_area(&b) == 0.0)
                .then_some(b)
        });
        humans.push(placed?);
    }

    let mut objects: Vec<AnnotatedObject> = Vec::with_capacity(n_objects);
    for _ in 0..n_objects {
        let placed = (0..MAX_PLACEMENT_ATTEMPTS).find_map(|_| {
            let anchor = humans[rng.random_range(0..humans.len())];
            let intent = match rng.random_range(0..=config.verb_rules.len()) {
                i if i < config.verb_rules.len() => Intent::Rule(config.verb_rules[i]),
                _ => Intent::Free,
            };
            let side = uniform(rng, config.object_size);
            let aspect: f64 = rng.random_range(0.8..=1.25);
            let (ow, oh) = (side * aspect.sqrt(), side / aspect.sqrt());
            let b = propose_object(config, rng, intent, &anchor, ow, oh);
            let category = rng.random_range(0..config.num_categories);
            (b.is_within(w, h) && object_fits(config, &humans, &objects, &b))
                .then_some(AnnotatedObject { bbox: b, category })
        });
        objects.push(placed?);
    }

    let mut triplets = Vec::new();
    for (hi, hb) in humans.iter().enumerate() {
        for (oi, ob) in objects.iter().enumerate() {
            for verb in config.verbs_for(hb, &ob.bbox) {
                triplets.push(Triplet {
                    human: hi,
                    verb,
                    object: oi,
                });
            }
        }
    }
    triplets.sort();

    Some(SceneAnnotation {
        width: config.image_width,
        height: config.image_height,
        humans,
        objects,
        triplets,
    })
}

fn propose_object(
    config: &SynthConfig,
    rng: &mut ChaCha8Rng,
    intent: Intent,
    anchor: &BBox,
    ow: f64,
    oh: f64,
) -> BBox {
    let (w, h) = (config.image_width as f64, config.image_height as f64);
    let (cx, cy) = match intent {
        Intent::Rule(VerbRule::Hold) => (
            rng.random_range(anchor.x1 + 1.0..=anchor.x2 - 1.0),
            rng.random_range(anchor.y1 + anchor.height() * 0.3..=anchor.y2 - 1.0),
        ),
        Intent::Rule(VerbRule::NextTo) => {
            let gap = rng.random_range(0.5..=config.next_to_gap.max(0.5));
            let cx = if rng.random_bool(0.5) {
                anchor.x2 + gap + ow / 2.0
            } else {
                anchor.x1 - gap - ow / 2.0
            };
            let lo = anchor.y1 - oh / 2.0 + 3.0;
            let hi = (anchor.y2 + oh / 2.0 - 3.0).max(lo);
            (cx, rng.random_range(lo..=hi))
        }
        Intent::Rule(VerbRule::Look) => {
            let gap = rng.random_range(0.5..=config.look_gap.max(0.5));
            let cy = anchor.y1 - gap - oh / 2.0;
            let reach = (anchor.y1 - cy) * 0.8;
            (anchor.center().0 + rng.random_range(-reach..=reach), cy)
        }
        Intent::Free => (
            rng.random_range(ow / 2.0..=w - ow / 2.0),
            rng.random_range(oh / 2.0..=h - oh / 2.0),
        ),
    };
    BBox::new(cx - ow / 2.0, cy - oh / 2.0, cx + ow / 2.0, cy + oh / 2.0)
}

fn object_fits(config: &SynthConfig, humans: &[BBox], objects: &[AnnotatedObject], b: &BBox) -> bool {
    if objects
        .iter()
        .any(|o| o.bbox.intersection_area(b) > 0.0 || o.bbox.gap(b) < OBJECT_SPACING)
    {
        return false;
    }
    humans.iter().all(|hb| {
        let verbs = config.verbs_for(hb, b);
        if verbs.is_empty() {
            return hb.gap(b) >= config.clearance;
        }
        // Overlaps must be clear enough to see.
        let inter = hb.intersection_area(b);
        inter == 0.0 || inter >= 0.25 * b.area()
    })
}

const HUMAN_COLOR: [f64; 3] = [0.86, 0.58, 0.46];
const HUMAN_STRIPE: [f64; 3] = [0.62, 0.36, 0.30];
const HEAD_COLOR: [f64; 3] = [0.95, 0.80, 0.62];

fn object_palette(category: usize) -> ([f64; 3], [f64; 3]) {
    const BASE: [[f64; 3]; 6] = [
        [0.18, 0.32, 0.92],
        [0.20, 0.80, 0.28],
        [0.92, 0.86, 0.15],
        [0.70, 0.20, 0.80],
        [0.10, 0.80, 0.85],
        [0.95, 0.45, 0.10],
    ];
    let base = BASE[category % BASE.len()];
    let alt = base.map(|v| v * 0.45);
    (base, alt)
}

fn pixel_inside(b: &BBox, x: usize, y: usize) -> bool {
    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
    px >= b.x1 && px < b.x2 && py >= b.y1 && py < b.y2
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

fn render(config: &SynthConfig, ann: &SceneAnnotation, rng: &mut ChaCha8Rng) -> RasterImage {
    let (w, h) = (config.image_width, config.image_height);
    let mut img = RasterImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let base = 0.42 + rng.random_range(-0.06..=0.06);
            for c in 0..3 {
                img.set(x, y, c, base + 0.02 * c as f64);
            }
        }
    }
    for hb in &ann.humans {
        let head_line = hb.y1 + hb.height() * 0.25;
        for y in 0..h {
            for x in 0..w {
                if !pixel_inside(hb, x, y) {
                    continue;
                }
                let color = if (y as f64 + 0.5) < head_line {
                    HEAD_COLOR
                } else if y % 3 == 0 {
                    HUMAN_STRIPE
                } else {
                    HUMAN_COLOR
                };
                for (c, v) in color.iter().enumerate() {
                    img.set(x, y, c, *v);
                }
            }
        }
    }
    for ob in &ann.objects {
        let (base, alt) = object_palette(ob.category);
        for y in 0..h {
            for x in 0..w {
                if !pixel_inside(&ob.bbox, x, y) {
                    continue;
                }
                // Odd categories are checkered, even ones solid.
                let checker = ob.category % 2 == 1 && (x / 2 + y / 2) % 2 == 0;
                let color = if checker { alt } else { base };
                for (c, v) in color.iter().enumerate() {
                    img.set(x, y, c, *v);
                }
            }
        }
    }
    for v in img.data.iter_mut() {
        *v = quantize(*v);
    }
    img
}

/// Complexity subset by number of annotated humans and objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subset {
    #[serde(rename = "SH-SO")]
    ShSo,
    #[serde(rename = "MH-SO")]
    MhSo,
    #[serde(rename = "SH-MO")]
    ShMo,
    #[serde(rename = "MH-MO")]
    MhMo,
}

impl Subset {
    pub const ALL: [Subset; 4] = [Subset::ShSo, Subset::MhSo, Subset::ShMo, Subset::MhMo];

    pub fn classify(n_humans: usize, n_objects: usize) -> Subset {
        match (n_humans > 1, n_objects > 1) {
            (false, false) => Subset::ShSo,
            (true, false) => Subset::MhSo,
            (false, true) => Subset::ShMo,
            (true, true) => Subset::MhMo,
        }
    }

    pub fn of(ann: &SceneAnnotation) -> Subset {
        Self::classify(ann.humans.len(), ann.objects.len())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Subset::ShSo => "SH-SO",
            Subset::MhSo => "MH-SO",
            Subset::ShMo => "SH-MO",
            Subset::MhMo => "MH-MO",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_deterministic() {
        let cfg = SynthConfig {
            seed: 7,
            ..SynthConfig::default()
        };
        let (i1, a1) = generate_scene(&cfg, 0).unwrap();
        let (i2, a2) = generate_scene(&cfg, 0).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(i1, i2);
        let (_, a3) = generate_scene(&cfg, 1).unwrap();
        assert_ne!(a1, a3);
    }

    #[test]
    fn forced_counts() {
        let cfg = SynthConfig {
            humans_per_image: Range::new(1, 1),
            objects_per_image: Range::new(1, 1),
            ..SynthConfig::default()
        };
        for i in 0..20 {
            let (_, ann) = generate_scene(&cfg, i).unwrap();
            assert_eq!((ann.humans.len(), ann.objects.len()), (1, 1));
        }
    }

    #[test]
    fn annotations_are_valid_and_predicates_hold() {
        let cfg = SynthConfig::default();
        let mut counts = [0usize; 3];
        for i in 0..200 {
            let (img, ann) = generate_scene(&cfg, i).unwrap();
            assert_eq!(img.data.len(), 3 * 64 * 64);
            ann.validate(cfg.num_verbs, cfg.num_categories).unwrap();
            for t in &ann.triplets {
                counts[t.verb] += 1;
                let (hb, ob) = (&ann.humans[t.human], &ann.objects[t.object].bbox);
                if t.verb == 0 {
                    assert!(hb.intersection_area(ob) > 0.0);
                }
            }
            // Every non-interacting pair is well separated.
            for (hi, hb) in ann.humans.iter().enumerate() {
                for (oi, ob) in ann.objects.iter().enumerate() {
                    if ann.verbs_between(hi, oi).is_empty() {
                        assert!(hb.gap(&ob.bbox) >= cfg.clearance);
                    }
                }
            }
        }
        assert!(counts.iter().all(|&c| c > 20), "verb counts {counts:?}");
    }

    #[test]
    fn rejects_oversized_boxes() {
        let cfg = SynthConfig {
            human_height: Range::new(10.0, 80.0),
            ..SynthConfig::default()
        };
        assert!(matches!(generate_scene(&cfg, 0), Err(Error::InvalidConfig(_))));
        let cfg = SynthConfig {
            verb_rules: vec![VerbRule::Hold],
            ..SynthConfig::default()
        };
        assert!(generate_scene(&cfg, 0).is_err());
    }

    #[test]
    fn rgb8_round_trip() {
        let (img, _) = generate_scene(&SynthConfig::default(), 3).unwrap();
        let back = RasterImage::from_rgb8(img.width, img.height, &img.to_rgb8()).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn subset_classifier() {
        assert_eq!(Subset::classify(1, 1), Subset::ShSo);
        assert_eq!(Subset::classify(2, 1), Subset::MhSo);
        assert_eq!(Subset::classify(1, 3), Subset::ShMo);
        assert_eq!(Subset::classify(3, 2), Subset::MhMo);
    }
}
