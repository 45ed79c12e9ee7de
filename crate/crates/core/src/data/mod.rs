pub mod io;
pub mod phantom;
pub mod preprocess;
pub mod volume;

pub use io::{read_volume, write_atomic, write_volume, Sidecar};
pub use phantom::{generate_phantom, PhantomGroundTruth, PhantomConfig, Side};
pub use preprocess::{extract_slab, preprocess, HU_WINDOW};
pub use volume::{CtVolume, Mask};
