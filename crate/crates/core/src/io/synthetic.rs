use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{domed_patch, Scene};
use crate::error::Result;
use crate::fit::View;
use crate::geometry::{save_cameras, Camera, Vec3};
use crate::image::Image;
use crate::primitive::{PrimitiveSlab, WindowParams, WorldTransform, CHANNELS};
use crate::real::Real;
use crate::renderer::{composite, render, MarchConfig};

use super::binary::save_float_image;
use super::dataset::{save_dataset_manifest, Dataset, DatasetFile, DatasetFrame, DatasetImage, DATASET_VERSION};
use super::png::save_png;
use super::scene::save_scene;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_prim: usize,
    pub m: usize,
    pub n_train: usize,
    pub n_heldout: usize,
    pub width: u32,
    pub height: u32,
    /// Camera distance from the origin, meters.
    pub distance: f64,
    pub focal: f64,
    pub step: f64,
    /// Magnitude of the random ground-truth transform deltas.
    pub delta_scale: f64,
    /// Constant payload of the initial scene handed to the fitter.
    pub init_rgb: f64,
    pub init_sigma: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_prim: 16,
            m: 8,
            n_train: 8,
            n_heldout: 1,
            width: 128,
            height: 128,
            distance: 2.5,
            focal: 180.0,
            step: 0.01,
            delta_scale: 1.0,
            init_rgb: 0.5,
            init_sigma: 1.0,
        }
    }
}

/// Ground truth, a fitter starting point, and the images rendered from it.
#[derive(Clone, Debug)]
pub struct Synthetic {
    pub config: SyntheticConfig,
    pub truth: Scene<f32>,
    pub init: Scene<f32>,
    pub march: MarchConfig,
    pub dataset: Dataset,
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Density and color of the reference object: a textured ball resting in
/// front of a striped sheet that follows the guide patch.
pub fn reference_field(p: Vec3<f64>) -> (Vec3<f64>, f64) {
    let c = Vec3::new(0.0, 0.0, -0.22);
    let r = (p - c).norm();
    let ball = smoothstep(0.33, 0.27, r);
    let sheet_z = -0.15 * (1.0 - 2.0 * (p.x * p.x + p.y * p.y));
    let sheet = smoothstep(0.05, 0.02, (p.z - sheet_z).abs()) * smoothstep(0.5, 0.45, p.x.abs().max(p.y.abs()));
    let sigma_ball = 40.0 * ball;
    let sigma_sheet = 12.0 * sheet;
    let sigma = sigma_ball + sigma_sheet;
    if sigma == 0.0 {
        return (Vec3::zero(), 0.0);
    }
    let ball_rgb = Vec3::new(
        0.55 + 0.35 * (9.0 * p.x + 1.0).sin() * (7.0 * p.y).cos(),
        0.45 + 0.3 * (8.0 * p.y - 0.5).sin(),
        0.35 + 0.25 * (10.0 * p.z).cos(),
    );
    let stripe = 0.5 + 0.5 * (12.0 * (p.x + 0.5 * p.y)).sin();
    let sheet_rgb = Vec3::new(0.15 + 0.6 * stripe, 0.6 - 0.3 * stripe, 0.25 + 0.2 * stripe);
    ((ball_rgb * sigma_ball + sheet_rgb * sigma_sheet) * (1.0 / sigma), sigma)
}

/// Camera ring looking at the origin from the −z side. Training cameras sit
/// on a 30° cone, held-out cameras on a 20° cone halfway between them.
pub fn camera_ring(cfg: &SyntheticConfig) -> Result<(Vec<Camera<f32>>, Vec<Camera<f32>>)> {
    let up = Vec3::new(0.0, -1.0, 0.0);
    let make = |azimuth: f64, tilt: f64| {
        let eye = Vec3::new(
            tilt.sin() * azimuth.cos(),
            tilt.sin() * azimuth.sin(),
            -tilt.cos(),
        ) * cfg.distance;
        // stored form, so a reloaded camera reproduces the targets bit for bit
        let cam = Camera::look_at(eye.cast(), Vec3::zero(), up, cfg.focal as f32, cfg.width, cfg.height)?;
        Camera::from_json(&cam.to_json())
    };
    let n = cfg.n_train.max(1) as f64;
    let train = (0..cfg.n_train)
        .map(|i| make(2.0 * PI * i as f64 / n, 30f64.to_radians()))
        .collect::<Result<Vec<_>>>()?;
    let heldout = (0..cfg.n_heldout)
        .map(|i| make(2.0 * PI * (i as f64 + 0.5) / n, 20f64.to_radians()))
        .collect::<Result<Vec<_>>>()?;
    Ok((train, heldout))
}

pub fn background(width: u32, height: u32, camera: u32) -> Image {
    let mut img = Image::new(width, height, 3);
    for y in 0..height {
        for x in 0..width {
            let p = img.pixel_mut((y * width + x) as usize);
            let (u, v) = (x as f32 / width as f32, y as f32 / height as f32);
            p[0] = 0.1 + 0.3 * u;
            p[1] = 0.15 + 0.2 * v;
            p[2] = 0.3 + 0.05 * (camera % 8) as f32;
        }
    }
    img
}

pub fn make_synthetic(cfg: &SyntheticConfig, seed: u64) -> Result<Synthetic> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = domed_patch::<f32>(1.0, 0.15, 4)?;
    let init = Scene::from_mesh(
        mesh,
        cfg.n_prim,
        cfg.m,
        Vec3::splat(cfg.init_rgb as f32),
        cfg.init_sigma as f32,
        WindowParams::default(),
        false,
    )?;

    let mut truth = init.clone();
    let ds = cfg.delta_scale;
    for d in &mut truth.params.deltas {
        for a in 0..3 {
            d.translation[a] = (rng.random_range(-0.02..0.02) * ds) as f32;
            d.rotation[a] = (rng.random_range(-0.05..0.05) * ds) as f32;
            d.scale[a] = (rng.random_range(-0.02..0.02) * ds) as f32;
        }
    }
    let geometry = truth.geometry()?;
    let m = cfg.m;
    let mut payload = PrimitiveSlab::<f32>::constant(truth.n_prim(), m, Vec3::zero(), 0.0);
    for (k, xf) in geometry.transforms.iter().enumerate() {
        let xf = WorldTransform::new(xf.translation.cast::<f64>(), xf.rotation.cast(), xf.scale.cast());
        for z in 0..m {
            for y in 0..m {
                for x in 0..m {
                    let q = Vec3::new(
                        payload.voxel_center(x).as_f64(),
                        payload.voxel_center(y).as_f64(),
                        payload.voxel_center(z).as_f64(),
                    );
                    let (rgb, sigma) = reference_field(xf.to_world(q));
                    let i = payload.voxel_index(x, y, z);
                    for (c, v) in [rgb.x, rgb.y, rgb.z, sigma].into_iter().enumerate() {
                        payload.channel_mut(k, c)[i] = v as f32;
                    }
                }
            }
        }
    }
    debug_assert_eq!(payload.data().len(), truth.n_prim() * CHANNELS * m * m * m);
    truth.params.payload = payload;

    let march = MarchConfig {
        step: cfg.step,
        seed,
        ..Default::default()
    };
    let (train_cams, heldout_cams) = camera_ring(cfg)?;
    let geometry = truth.geometry()?;
    let view = truth.view(&geometry)?;
    let mut views = Vec::new();
    for (id, cam) in train_cams.into_iter().chain(heldout_cams).enumerate() {
        let id = id as u32;
        let bg = background(cfg.width, cfg.height, id);
        let out = render(&view, &cam, &march, id)?;
        views.push(View {
            id,
            camera: cam,
            target: composite(&out, &bg)?,
            background: bg,
        });
    }
    let dataset = Dataset {
        train: (0..cfg.n_train).collect(),
        heldout: (cfg.n_train..cfg.n_train + cfg.n_heldout).collect(),
        mesh: truth.attachment.mesh().expect("mesh attachment").clone(),
        views,
    };
    Ok(Synthetic {
        config: cfg.clone(),
        truth,
        init,
        march,
        dataset,
    })
}

/// Writes `dataset.json` with float-dump targets and backgrounds (plus PNG
/// previews), `truth.json` and `init.json`.
pub fn write_synthetic(syn: &Synthetic, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let ds = &syn.dataset;
    let cameras: Vec<Camera<f32>> = ds.views.iter().map(|v| v.camera.clone()).collect();
    save_cameras(&cameras, &dir.join("cameras.json"))?;
    fs::write(dir.join("mesh.obj"), ds.mesh.to_obj())?;
    let mut backgrounds = Vec::new();
    let mut images = Vec::new();
    for v in &ds.views {
        let bg = format!("background_{:02}.mvpf", v.id);
        save_float_image(&v.background, &dir.join(&bg))?;
        save_png(&v.background, &dir.join(format!("background_{:02}.png", v.id)))?;
        backgrounds.push(bg);
        let target = format!("target_{:02}.mvpf", v.id);
        save_float_image(&v.target, &dir.join(&target))?;
        save_png(&v.target, &dir.join(format!("target_{:02}.png", v.id)))?;
        images.push(DatasetImage { camera: v.id, target });
    }
    let manifest = DatasetFile {
        version: DATASET_VERSION,
        cameras: "cameras.json".into(),
        backgrounds,
        frames: vec![DatasetFrame {
            mesh: "mesh.obj".into(),
            images,
        }],
        heldout: ds.heldout.iter().map(|&i| ds.views[i].id).collect(),
    };
    save_dataset_manifest(&dir.join("dataset.json"), &manifest)?;
    save_scene(&dir.join("truth.json"), &syn.truth, &syn.march, &cameras)?;
    save_scene(&dir.join("init.json"), &syn.init, &syn.march, &cameras)?;
    fs::write(dir.join("synthetic.json"), serde_json::to_string_pretty(&syn.config)?)?;
    Ok(())
}
