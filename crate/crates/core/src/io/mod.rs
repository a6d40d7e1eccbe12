mod binary;
mod dataset;
mod png;
mod scene;
mod synthetic;

pub use binary::{
    decode_image, decode_slab, encode_image, encode_slab, load_float_image, load_slab, save_float_image, save_slab,
    BINARY_VERSION, IMAGE_MAGIC, SLAB_MAGIC,
};
pub use dataset::{load_dataset, save_dataset_manifest, Dataset, DatasetFile, DatasetFrame, DatasetImage, DATASET_VERSION};
pub use png::{decode_png, decode_u8, encode_png, encode_u8, load_image, load_png, save_png, GAMMA};
pub use scene::{load_scene, save_scene, FrameRecord, Placement, SceneBundle, SceneFile, SCENE_VERSION};
pub use synthetic::{background, camera_ring, make_synthetic, reference_field, write_synthetic, Synthetic, SyntheticConfig};
