mod march;
mod render;

pub(crate) use march::{eval_prim, march_observed, walk, PrimEval};
pub use march::{
    march, FrameGeometry, MarchConfig, MarchResult, MarchScratch, SampleOrder, Saturation, SceneView,
};
pub use render::{composite, composite_value, ray_key, render, render_rays, RenderOutput};
