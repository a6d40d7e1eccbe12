#![allow(dead_code)]

use volprim::diff::{Attachment, Scene, SceneParams};
use volprim::fit::RayBatch;
use volprim::geometry::{Mat3, Ray, Rotation, Vec3};
use volprim::primitive::{BaseTransform, PrimitiveSlab, TransformDelta, WindowParams, WorldTransform};
use volprim::renderer::{FrameGeometry, MarchConfig, MarchResult, MarchScratch, SceneView};
use volprim::Real;

pub fn base<T: Real>(center: [f64; 3], half: [f64; 3]) -> BaseTransform<T> {
    BaseTransform {
        translation: Vec3::new(T::lit(center[0]), T::lit(center[1]), T::lit(center[2])),
        rotation: Rotation::identity(),
        scale: Vec3::new(T::lit(half[0]), T::lit(half[1]), T::lit(half[2])),
    }
}

pub fn world<T: Real>(center: [f64; 3], half: [f64; 3]) -> WorldTransform<T> {
    let b = base::<T>(center, half);
    WorldTransform::new(b.translation, Mat3::identity(), b.scale)
}

/// Axis-aligned boxes with a constant payload.
pub fn fixed_scene<T: Real>(boxes: &[([f64; 3], [f64; 3])], m: usize, rgb: [f64; 3], sigma: f64, window: WindowParams) -> Scene<T> {
    let n = boxes.len();
    let params = SceneParams {
        payload: PrimitiveSlab::constant(n, m, Vec3::new(T::lit(rgb[0]), T::lit(rgb[1]), T::lit(rgb[2])), T::lit(sigma)),
        deltas: vec![TransformDelta::default(); n],
        vertex_offsets: Vec::new(),
    };
    let bases = boxes.iter().map(|(c, h)| base(*c, *h)).collect();
    Scene::new(Attachment::Fixed(bases), params, window).unwrap()
}

/// Ray along +z starting at `z = -5`.
pub fn z_ray<T: Real>(x: f64, y: f64) -> Ray<T> {
    Ray {
        origin: Vec3::new(T::lit(x), T::lit(y), T::lit(-5.0)),
        dir: Vec3::new(T::zero(), T::zero(), T::one()),
        pixel: 0,
    }
}

pub fn march_one<T: Real>(view: &SceneView<'_, T>, ray: &Ray<T>, cfg: &MarchConfig, key: u64) -> MarchResult<T> {
    let mut scratch = MarchScratch::default();
    let mut segs = Vec::new();
    view.geometry.intersect(ray, &mut segs);
    volprim::renderer::march(ray, &segs, view, cfg, cfg.offset(key), &mut scratch)
}

pub fn march_scene<T: Real>(scene: &Scene<T>, ray: &Ray<T>, cfg: &MarchConfig) -> MarchResult<T> {
    let geo = scene.geometry().unwrap();
    let view = scene.view(&geo).unwrap();
    march_one(&view, ray, cfg, 0)
}

pub fn geometry<T: Real>(boxes: &[([f64; 3], [f64; 3])]) -> FrameGeometry<T> {
    FrameGeometry::from_world(boxes.iter().map(|(c, h)| world(*c, *h)).collect()).unwrap()
}

pub fn batch<T: Real>(rays: Vec<Ray<T>>, target: [f64; 3], background: [f64; 3]) -> RayBatch<T> {
    let n = rays.len();
    let v = |a: [f64; 3]| Vec3::new(T::lit(a[0]), T::lit(a[1]), T::lit(a[2]));
    RayBatch {
        keys: (0..n as u64).collect(),
        rays,
        targets: vec![v(target); n],
        backgrounds: vec![v(background); n],
        pixel_weights: None,
    }
}

pub fn exact_march() -> MarchConfig {
    MarchConfig {
        step: 0.01,
        early_eps: 0.0,
        jitter: false,
        ..Default::default()
    }
}
