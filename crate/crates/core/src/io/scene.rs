use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diff::{Attachment, Scene, SceneParams};
use crate::error::{Error, Result};
use crate::geometry::{load_cameras, save_cameras, Camera, GuideMesh, SurfaceAnchor, Vec3};
use crate::primitive::{BaseTransform, TransformDelta, WindowParams};
use crate::renderer::MarchConfig;

use super::binary::{load_slab, read_file, save_slab};

pub const SCENE_VERSION: u32 = 1;

/// JSON scene description. Paths are relative to the file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cameras: Option<String>,
    pub window: WindowParams,
    pub march: MarchConfig,
    pub frames: Vec<FrameRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub slab: String,
    pub deltas: Vec<TransformDelta<f32>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vertex_offsets: Vec<Vec3<f32>>,
    pub placement: Placement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Placement {
    Fixed { bases: Vec<BaseTransform<f32>> },
    Mesh { anchors: Vec<SurfaceAnchor<f32>>, spacing: f32 },
}

/// A loaded scene with the render settings and cameras stored beside it.
#[derive(Clone, Debug)]
pub struct SceneBundle {
    pub scene: Scene<f32>,
    pub march: MarchConfig,
    pub cameras: Vec<Camera<f32>>,
}

fn sibling(path: &Path, suffix: &str) -> (PathBuf, String) {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scene");
    let name = format!("{stem}.{suffix}");
    (path.with_file_name(&name), name)
}

fn resolve(path: &Path, rel: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(rel)
}

/// Writes `path` plus `<stem>.frame0.mvps`, and when present
/// `<stem>.mesh.obj` and `<stem>.cameras.json`.
pub fn save_scene(path: &Path, scene: &Scene<f32>, march: &MarchConfig, cameras: &[Camera<f32>]) -> Result<()> {
    let (slab_path, slab_name) = sibling(path, "frame0.mvps");
    save_slab(&scene.params.payload, &slab_path)?;
    let (placement, mesh) = match &scene.attachment {
        Attachment::Fixed(bases) => (Placement::Fixed { bases: bases.clone() }, None),
        Attachment::Mesh { mesh, anchors, spacing } => {
            let (mesh_path, mesh_name) = sibling(path, "mesh.obj");
            fs::write(mesh_path, mesh.to_obj())?;
            (
                Placement::Mesh {
                    anchors: anchors.clone(),
                    spacing: *spacing,
                },
                Some(mesh_name),
            )
        }
    };
    let cameras = if cameras.is_empty() {
        None
    } else {
        let (cam_path, cam_name) = sibling(path, "cameras.json");
        save_cameras(cameras, &cam_path)?;
        Some(cam_name)
    };
    let file = SceneFile {
        version: SCENE_VERSION,
        mesh,
        cameras,
        window: scene.window,
        march: *march,
        frames: vec![FrameRecord {
            slab: slab_name,
            deltas: scene.params.deltas.clone(),
            vertex_offsets: scene.params.vertex_offsets.clone(),
            placement,
        }],
    };
    fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// Checks the version field before anything else is interpreted.
pub(crate) fn parse_versioned<F: for<'de> Deserialize<'de>>(bytes: &[u8], expected: u32) -> Result<F> {
    let value: serde_json::Value = serde_json::from_slice(bytes)?;
    let found = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Parse("missing version field".into()))?;
    if found != expected as u64 {
        return Err(Error::VersionMismatch {
            expected,
            found: found.min(u32::MAX as u64) as u32,
        });
    }
    Ok(serde_json::from_value(value)?)
}

pub fn load_scene(path: &Path, frame: usize) -> Result<SceneBundle> {
    let file: SceneFile = parse_versioned(&read_file(path)?, SCENE_VERSION)?;
    let rec = file.frames.get(frame).ok_or_else(|| {
        Error::InvalidInput(format!("frame {frame} requested, scene has {}", file.frames.len()))
    })?;
    let payload = load_slab(&resolve(path, &rec.slab))?;
    let attachment = match &rec.placement {
        Placement::Fixed { bases } => Attachment::Fixed(bases.clone()),
        Placement::Mesh { anchors, spacing } => {
            let rel = file
                .mesh
                .as_ref()
                .ok_or_else(|| Error::Parse("mesh placement without a mesh path".into()))?;
            let mesh_path = resolve(path, rel);
            if !mesh_path.exists() {
                return Err(Error::MissingFile(mesh_path));
            }
            Attachment::Mesh {
                mesh: GuideMesh::load_obj(&mesh_path)?,
                anchors: anchors.clone(),
                spacing: *spacing,
            }
        }
    };
    let params = SceneParams {
        payload,
        deltas: rec.deltas.clone(),
        vertex_offsets: rec.vertex_offsets.clone(),
    };
    let cameras = match &file.cameras {
        Some(rel) => load_cameras(&resolve(path, rel))?,
        None => Vec::new(),
    };
    Ok(SceneBundle {
        scene: Scene::new(attachment, params, file.window)?,
        march: file.march,
        cameras,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::domed_patch;

    fn mesh_scene() -> Scene<f32> {
        let mut s = Scene::from_mesh(domed_patch(1.0, 0.1, 3).unwrap(), 4, 3, Vec3::splat(0.25), 2.0, WindowParams::default(), true).unwrap();
        for (i, x) in s.params.payload.data_mut().iter_mut().enumerate() {
            *x = (i as f32 * 0.731).sin().abs() / 3.0;
        }
        s.params.deltas[1].rotation = Vec3::new(0.1, -0.2, 0.3);
        s.params.vertex_offsets[2] = Vec3::new(1e-3, 0.0, -2e-3);
        s
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let scene = mesh_scene();
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, -2.0), Vec3::zero(), Vec3::new(0.0, -1.0, 0.0), 50.0, 16, 16).unwrap();
        save_scene(&path, &scene, &MarchConfig::default(), std::slice::from_ref(&cam)).unwrap();
        let back = load_scene(&path, 0).unwrap();
        assert_eq!(back.scene.params, scene.params);
        assert_eq!(back.cameras.len(), 1);
        let a = scene.transforms().unwrap();
        let b = back.scene.transforms().unwrap();
        assert_eq!(a, b);
        assert_eq!(back.scene.window, scene.window);
    }

    #[test]
    fn fixed_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.json");
        let params = SceneParams {
            payload: crate::primitive::PrimitiveSlab::constant(1, 2, Vec3::splat(0.1), 0.7),
            deltas: vec![TransformDelta::default()],
            vertex_offsets: Vec::new(),
        };
        let base = BaseTransform {
            translation: Vec3::new(0.1, 0.2, 0.3),
            rotation: crate::geometry::Rotation::from_axis_angle(Vec3::new(0.3, 0.1, -0.7)),
            scale: Vec3::new(0.3, 0.2, 0.1),
        };
        let scene = Scene::new(Attachment::Fixed(vec![base]), params, WindowParams::disabled()).unwrap();
        save_scene(&path, &scene, &MarchConfig::default(), &[]).unwrap();
        let back = load_scene(&path, 0).unwrap();
        assert_eq!(back.scene.transforms().unwrap(), scene.transforms().unwrap());
        assert!(load_scene(&path, 1).is_err());
    }

    #[test]
    fn version_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        save_scene(&path, &mesh_scene(), &MarchConfig::default(), &[]).unwrap();
        let text = fs::read_to_string(&path).unwrap().replacen("\"version\": 1", "\"version\": 2", 1);
        let newer = dir.path().join("newer.json");
        fs::write(&newer, &text).unwrap();
        assert!(matches!(load_scene(&newer, 0), Err(Error::VersionMismatch { expected: 1, found: 2 })));

        fs::remove_file(dir.path().join("s.mesh.obj")).unwrap();
        assert!(matches!(load_scene(&path, 0), Err(Error::MissingFile(_))));

        let slab = dir.path().join("s.frame0.mvps");
        let bytes = fs::read(&slab).unwrap();
        fs::write(&slab, &bytes[..bytes.len() / 2]).unwrap();
        save_scene(&path, &mesh_scene(), &MarchConfig::default(), &[]).unwrap();
        fs::write(&slab, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_scene(&path, 0), Err(Error::Truncated(_))));
        assert!(matches!(load_scene(&dir.path().join("none.json"), 0), Err(Error::MissingFile(_))));
    }
}
