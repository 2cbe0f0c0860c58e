//! Synthesis of multi-view patch descriptors from a single image, using a
//! collection of aligned multi-view shape renders, and the view-agnostic
//! distance between such descriptors.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the default single-precision storage.

pub mod error;
pub mod experiment;
pub mod features;
pub mod io;
pub mod model;
pub mod pose;
pub mod retrieval;
pub mod scalar;
pub mod simplex;
pub mod surrogate;
pub mod synthesis;
pub mod synthgen;
pub mod vocabulary;

pub use error::{Error, Result};
pub use features::{GrayImage, HogConfig};
pub use model::{
    FeatureBlock, MultiViewDescriptor, PatchAddress, PatchGridConfig, ShapeCollection, ViewSet,
};
pub use pose::{estimate_pose, PoseEstimate, PoseMode};
pub use retrieval::{vad, PRCurve};
pub use scalar::Scalar;
pub use simplex::{SimplexWeights, SolverOptions};
pub use surrogate::{RegionSelection, SuitabilityTable};
pub use synthesis::{SynthesisOptions, SynthesizedDescriptor, Synthesizer};
pub use vocabulary::{Codebook, QuantizedCollection};

pub type Collection = ShapeCollection<f32>;
pub type Collection64 = ShapeCollection<f64>;
pub type Descriptor = MultiViewDescriptor<f32>;
pub type Descriptor64 = MultiViewDescriptor<f64>;
pub type Features = FeatureBlock<f32>;
pub type Features64 = FeatureBlock<f64>;
