//! Vectors, rotations, pinhole cameras, rays and UV-mapped guide meshes.

mod camera;
mod linalg;
mod mesh;
mod rotation;

pub use camera::{load_cameras, save_cameras, Camera, CameraJson, Ray};
pub use linalg::{Mat3, Vec2, Vec3};
pub use mesh::{GuideMesh, SurfaceAnchor};
pub(crate) use mesh::TriangleFrame;
#[cfg(test)]
pub(crate) use mesh::fixtures;
pub use rotation::{axis_angle_backward, axis_angle_jacobian, rotation_from_axis_angle, Rotation};
