//! Per-dataset autoencoders, class centroids and the expert registry.

mod autoencoder;
mod centroids;
mod format;
mod registry;

pub use autoencoder::{train_autoencoder, train_on_matrix, AutoencoderModel, TrainedAutoencoder, BOTTLENECK_DIM};
pub use centroids::{compute_centroids, ClassCentroids};
pub use format::{load_registry, registry_from_bytes, registry_to_bytes, save_registry, MAGIC};
pub use registry::{ExpertEntry, InputKind, Preprocessing, Registry, TrainFingerprint, FORMAT_VERSION};

pub use autoencoder::samples_to_matrix;
