//! Actor-conditioned human-object interaction (HOI) detection.
//!
//! The pipeline selects each detected human in turn as the *actor*, feeds the
//! image plus a binary actor mask (RGBM) through a small convolutional network
//! with two sigmoid heads, and reads per-verb scores at box center points:
//!
//! - the **actor branch** scores the verbs the actor is performing,
//! - the **object branch** scores, for every object, the verbs it takes part in
//!   *with the actor*.
//!
//! Training uses pixel-wise targets on central box areas and a weighted cross
//! entropy whose weights come from a 2-D Hanning window and an inverse box-size
//! term. Evaluation is per-HOI-class average precision.
//!
//! Module map:
//!
//! | module | contents |
//! |---|---|
//! | [`geometry`] | boxes, IoU, central areas, pixel to grid mapping |
//! | [`grid`] | [`ChannelGrid`], the `C x H' x W'` value grid |
//! | [`synth`] | synthetic scenes, detector stub, annotation arrangement |
//! | [`supervision`] | RGBM input, branch targets, Hanning and scale weights |
//! | [`loss`] | weighted cross entropy forward/backward, branch combination |
//! | [`model`] | conv trunk + two heads, backprop, Adam, checkpoints |
//! | [`inference`] | actor switch loop and score composition |
//! | [`eval`] | AP / mAP, agent AP, complexity subsets |
//! | [`pipeline`] | dataset files, training loop, evaluation runs, heatmaps |

pub mod error;
pub mod eval;
pub mod geometry;
pub mod grid;
pub mod inference;
pub mod loss;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod supervision;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{BBox, GridBox, GridShape};
pub use grid::ChannelGrid;
pub use inference::{HoiPrediction, VerbVector};
pub use synth::{Category, Detection, SceneAnnotation};
