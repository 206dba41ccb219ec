//! Communication graphs and mixing matrices.

mod graph;
mod mixing;

pub use graph::{generate_random_connected_graph, target_edge_count, Graph};
pub use mixing::{
    matrix_to_csv, metropolis_hastings_weights, spectral_quantities, validate_mixing, Check,
    MixingInvalid, MixingMatrix, Spectral, ValidationReport, MIXING_TOL, NONZERO_SINGULAR,
};
