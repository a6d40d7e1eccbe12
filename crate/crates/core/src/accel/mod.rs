mod aabb;
mod lbvh;

pub use aabb::{morton_code, primitive_aabb, Aabb};
pub use lbvh::{intersect_brute_force, ray_box_model, Lbvh, Segment, MAX_DEPTH};
