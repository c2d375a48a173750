//! Spectral decomposition of images on top of self-supervised features.
//!
//! A semantic affinity (clipped Gram matrix of patch features) is fused with
//! a sparse KNN color affinity, the normalized graph Laplacian of the result
//! is eigendecomposed, and the eigenvectors drive four tasks:
//!
//! * [`localize`]: single-object bounding boxes from the Fiedler vector;
//! * [`segment`]: single-object masks refined by a mean-field dense CRF;
//! * [`semseg`]: per-image eigenvector clustering followed by dataset-wide
//!   clustering of segment descriptors;
//! * [`matting`]: soft mattes from full-resolution eigenvectors.
//!
//! [`pipeline`] wires these together for one image or a dataset.

pub mod affinity;
pub mod error;
pub mod localize;
pub mod matting;
pub mod pipeline;
pub mod segment;
pub mod semseg;
pub mod sparse;
pub mod spectral;
pub mod synthetic;
pub mod tensor_io;

pub use error::{Error, Result};
