mod backward;
mod gradcheck;
mod params;
mod scene;

pub use backward::{backward_ray, backward_rays, chain, RayAdjoint, RayGrads, WorldGrad, CHUNK};
pub use gradcheck::{
    decision_signature, domed_patch, gradcheck, small_scene, CheckedParam, GradcheckConfig,
    GradcheckReport, GroupReport,
};
pub use params::{GradBuffer, ParamGroup, SceneParams};
pub use scene::{Attachment, Scene};
