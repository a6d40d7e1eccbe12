mod init;
mod slab;
mod transform;

pub use init::{base_from_anchor, base_from_anchor_backward, init_from_mesh, MeshInit};
pub use slab::{sample, window, PrimitiveSlab, Stencil, WindowParams, CHANNELS, SIGMA};
pub use transform::{
    compose, BaseTransform, PrimitiveTransform, TransformDelta, WorldTransform, MIN_SCALE,
};
