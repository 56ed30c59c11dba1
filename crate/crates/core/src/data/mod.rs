//! Datasets, binning, histograms, seeded simulation and the CSV formats
//! shared by the command-line tool.

mod binning;
mod histogram;
pub mod io;
mod sample;
mod simulate;

pub use binning::{
    bin_index, fit_bins, midpoint_quantile, BinStrategy, BinningSpec, ColumnBinning,
    DEFAULT_QUANTILE_BINS, LABEL_KEY,
};
pub use histogram::{histogram, infer_space, natural_cmp, observed_cells, Histogram};
pub use sample::{ColumnType, SampleRow, SampleSet, Schema, Value};
pub use simulate::{
    random_joint, sample_cells, simulate, write_simulation, ShiftSpec, Simulation,
    SimulationConfig, SourceSpec,
};
