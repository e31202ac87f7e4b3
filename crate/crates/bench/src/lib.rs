//! Shared fixtures for the benchmarks in `benches/`.

use evitlab_core::taskgen::{bundles_from_population, StructureBundle};
use evitlab_core::{build_transfer_dataset, generate_population, PopulationConfig, TransferDataset};

pub fn bundles(n_structures: usize) -> Vec<StructureBundle> {
    let config = PopulationConfig { n_structures, ..Default::default() };
    bundles_from_population(&generate_population(&config, 0).expect("population")).expect("bundles")
}

pub fn transfer_dataset(n_structures: usize) -> TransferDataset {
    build_transfer_dataset(&bundles(n_structures), 10, 0).expect("tasks")
}
