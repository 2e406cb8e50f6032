use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ensure_dir, write_json, DataConfig};
use crate::error::{Error, Result};
use crate::synth::{generate_scene, RasterImage, SceneAnnotation, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    /// Scene indices of the split; train and test never overlap.
    pub fn indices(&self, data: &DataConfig) -> std::ops::Range<u64> {
        let n_train = data.train_scenes as u64;
        match self {
            Split::Train => 0..n_train,
            Split::Test => n_train..n_train + data.test_scenes as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetScene {
    pub index: u64,
    pub image: RasterImage,
    pub annotation: SceneAnnotation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub config: SynthConfig,
    pub scenes: Vec<DatasetScene>,
}

#[derive(Serialize, Deserialize)]
struct SceneRecord {
    index: u64,
    image: String,
    annotation: SceneAnnotation,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    split: Split,
    config: SynthConfig,
    scenes: Vec<SceneRecord>,
}

pub fn generate_split(synth: &SynthConfig, data: &DataConfig, split: Split) -> Result<Dataset> {
    let scenes = split
        .indices(data)
        .map(|index| {
            let (image, annotation) = generate_scene(synth, index)?;
            Ok(DatasetScene { index, image, annotation })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        split,
        config: synth.clone(),
        scenes,
    })
}

fn image_name(split: Split, index: u64) -> String {
    format!("images/{}_{index:05}.png", split.name())
}

fn manifest_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}.json", split.name()))
}

/// Writes `dir/<split>.json` and one PNG per scene under `dir/images/`.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    ensure_dir(&dir.join("images"))?;
    let mut records = Vec::with_capacity(dataset.scenes.len());
    for scene in &dataset.scenes {
        let name = image_name(dataset.split, scene.index);
        let path = dir.join(&name);
        image::save_buffer(
            &path,
            &scene.image.to_rgb8(),
            scene.image.width as u32,
            scene.image.height as u32,
            image::ColorType::Rgb8,
        )?;
        records.push(SceneRecord {
            index: scene.index,
            image: name,
            annotation: scene.annotation.clone(),
        });
    }
    write_json(
        &manifest_path(dir, dataset.split),
        &DatasetFile {
            split: dataset.split,
            config: dataset.config.clone(),
            scenes: records,
        },
    )
}

pub fn read_dataset(dir: &Path, split: Split) -> Result<Dataset> {
    let manifest = manifest_path(dir, split);
    if !manifest.exists() {
        return Err(Error::MissingArtifact(manifest));
    }
    let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let file: DatasetFile = serde_json::from_str(&text)?;
    if file.split != split {
        return Err(Error::DatasetMismatch(format!(
            "{} holds the {} split",
            manifest.display(),
            file.split.name()
        )));
    }
    let scenes = file
        .scenes
        .into_iter()
        .map(|r| {
            let path = dir.join(&r.image);
            if !path.exists() {
                return Err(Error::MissingArtifact(path));
            }
            let img = image::open(&path)?.to_rgb8();
            let (w, h) = (img.width() as usize, img.height() as usize);
            if (w, h) != (r.annotation.width, r.annotation.height) {
                return Err(Error::DatasetMismatch(format!(
                    "{} is {w}x{h}, annotation says {}x{}",
                    path.display(),
                    r.annotation.width,
                    r.annotation.height
                )));
            }
            Ok(DatasetScene {
                index: r.index,
                image: RasterImage::from_rgb8(w, h, img.as_raw())?,
                annotation: r.annotation,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        split,
        config: file.config,
        scenes,
    })
}

impl Dataset {
    /// Checks that the dataset was generated with `synth`, ignoring the
    /// detector-stub fields that do not affect scene content.
    pub fn ensure_matches(&self, synth: &SynthConfig) -> Result<()> {
        let strip = |s: &SynthConfig| SynthConfig {
            jitter: 0.0,
            false_positive_rate: 0.0,
            max_detections: 0,
            score_threshold: 0.0,
            ..s.clone()
        };
        if strip(&self.config) != strip(synth) {
            return Err(Error::DatasetMismatch(format!(
                "{} split was generated with a different synth config",
                self.split.name()
            )));
        }
        Ok(())
    }
}
