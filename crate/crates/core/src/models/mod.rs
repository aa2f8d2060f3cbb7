//! Network specifications, the registry of published architectures, network construction
//! and the binary model file.

mod network;
mod persist;
mod spec;

use thiserror::Error;

pub use network::{build, Batch, DropoutCtx, ForwardCache, Network, OUTPUT_INIT_SCALE};
pub use persist::{load_model, model_from_bytes, model_to_bytes, save_model, FORMAT_VERSION, MAGIC};
pub use spec::{
    join_sizes, parse_sizes, registry, registry_lookup, registry_names, render_registry,
    NetworkSpec, RegistryGroup,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("UnknownModelName: {0:?} is not in the registry")]
    UnknownModelName(String),
    #[error("InvalidSpec: {0}")]
    InvalidSpec(String),
    #[error("CorruptModelFile: {0}")]
    CorruptModelFile(String),
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
}
