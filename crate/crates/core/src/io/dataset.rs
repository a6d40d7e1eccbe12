use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::View;
use crate::geometry::{load_cameras, GuideMesh};
use crate::image::Image;

use super::binary::read_file;
use super::png::load_image;
use super::scene::parse_versioned;

pub const DATASET_VERSION: u32 = 1;

/// JSON manifest of a multi-view capture. Cameras missing from a frame's
/// image list are holes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub version: u32,
    pub cameras: String,
    /// One background image per camera.
    pub backgrounds: Vec<String>,
    pub frames: Vec<DatasetFrame>,
    /// Cameras reserved for evaluation.
    #[serde(default)]
    pub heldout: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetFrame {
    /// Tracked guide mesh of this frame.
    pub mesh: String,
    pub images: Vec<DatasetImage>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetImage {
    pub camera: u32,
    pub target: String,
}

/// One frame of a dataset, loaded.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub views: Vec<View>,
    pub mesh: GuideMesh<f32>,
    /// Indices into `views`.
    pub train: Vec<usize>,
    pub heldout: Vec<usize>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        for v in &self.views {
            v.validate()?;
        }
        if self.train.is_empty() {
            return Err(Error::Empty("training views"));
        }
        if self.train.iter().chain(&self.heldout).any(|&i| i >= self.views.len()) {
            return Err(Error::InvalidInput("view index out of range".into()));
        }
        Ok(())
    }

    pub fn heldout_views(&self) -> impl Iterator<Item = &View> {
        self.heldout.iter().map(|&i| &self.views[i])
    }
}

pub fn load_dataset(path: &Path, frame: usize) -> Result<Dataset> {
    let file: DatasetFile = parse_versioned(&read_file(path)?, DATASET_VERSION)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let cameras = load_cameras::<f32>(&dir.join(&file.cameras))?;
    if file.backgrounds.len() != cameras.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} backgrounds for {} cameras",
            file.backgrounds.len(),
            cameras.len()
        )));
    }
    let fr = file
        .frames
        .get(frame)
        .ok_or_else(|| Error::InvalidInput(format!("frame {frame} requested, dataset has {}", file.frames.len())))?;
    let mesh = GuideMesh::load_obj(&dir.join(&fr.mesh))?;
    let heldout: BTreeSet<u32> = file.heldout.iter().copied().collect();
    let mut seen = BTreeSet::new();
    let mut ds = Dataset {
        views: Vec::with_capacity(fr.images.len()),
        mesh,
        train: Vec::new(),
        heldout: Vec::new(),
    };
    for img in &fr.images {
        let cam = cameras
            .get(img.camera as usize)
            .ok_or_else(|| Error::InvalidInput(format!("camera {} out of range", img.camera)))?;
        if !seen.insert(img.camera) {
            return Err(Error::InvalidInput(format!("camera {} listed twice", img.camera)));
        }
        let idx = ds.views.len();
        if heldout.contains(&img.camera) {
            ds.heldout.push(idx);
        } else {
            ds.train.push(idx);
        }
        ds.views.push(View {
            id: img.camera,
            camera: cam.clone(),
            target: load_rgb(&dir.join(&img.target))?,
            background: load_rgb(&dir.join(&file.backgrounds[img.camera as usize]))?,
        });
    }
    ds.validate()?;
    Ok(ds)
}

fn load_rgb(path: &Path) -> Result<Image> {
    let img = load_image(path)?;
    if img.channels() != 3 {
        return Err(Error::ShapeMismatch(format!("{} has {} channels, expected 3", path.display(), img.channels())));
    }
    Ok(img)
}

pub fn save_dataset_manifest(path: &Path, file: &DatasetFile) -> Result<()> {
    Ok(fs::write(path, serde_json::to_string_pretty(file)?)?)
}
