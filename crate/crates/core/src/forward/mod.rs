//! The parallel-imaging forward model `A = S F C`, its adjoint, the SENSE-type
//! regularized inverse, and synthetic dataset generation.

mod coils;
mod dataset;
mod mask;
mod operator;

pub use coils::make_coil_maps;
pub use dataset::{gen_phantoms, make_phantom, sample_paths, Dataset, DatasetSpec, Sample, Split, MANIFEST};
pub use mask::{center_band, make_vardens_mask, SamplingMask, CENTER_FRACTION};
pub use operator::{ForwardOperator, Measurements};
