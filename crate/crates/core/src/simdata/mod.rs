//! Synthetic phantoms, forward operators and measurements.

mod dataset;
mod operator;
mod phantom;

pub use dataset::{
    background_pattern, load_dataset, random_volume, save_dataset, sigma_for_snr_db, synth_measurement,
    MeasurementParams, RawDataset, BACKGROUND_ORDER, DATASET_KIND,
};
pub use operator::{matrix_with_spectrum, synth_operator, OperatorModel, Part, RowLabel, SystemOperator};
pub use phantom::{
    rasterize_phantom, Axis, Cuboid, GridSpec, PhantomGeometry, PhantomSpec, Rasterized, DEFAULT_SUPERSAMPLE,
};
