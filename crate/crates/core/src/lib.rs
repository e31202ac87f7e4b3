//! Expected value of information transfer for populations of lumped-mass
//! structures.
//!
//! The pipeline runs in five stages, one module each:
//!
//! 1. [`population`] samples weakly heterogeneous 10-DoF chains and their
//!    labelled natural-frequency datasets.
//! 2. [`similarity`] scores structure pairs by the optimally permuted MAC trace.
//! 3. [`transfer`] + [`taskgen`] run normal-condition alignment with a 1-NN
//!    classifier on every ordered pair and record `(similarity, quality)`.
//! 4. [`regressor`] fits a softplus MLP mapping similarity to Dirichlet
//!    concentrations over `(TR, FPR, FNR)`.
//! 5. [`decision`] turns forecasts into expected utilities, EVIT curves,
//!    positive-transfer thresholds and source recommendations.

pub mod assignment;
pub mod decision;
pub mod error;
pub mod population;
pub mod regressor;
pub mod similarity;
pub mod stats;
pub mod taskgen;
pub mod transfer;

pub use decision::{
    evit, evit_curve, expected_utility, null_expected_utility, optimize_strategy, positive_transfer_threshold,
    Candidate, EvitResult, TransferStrategy, UtilityTable,
};
pub use error::{Error, Result};
pub use population::{
    apply_damage, generate_dataset, generate_population, modal_analysis, sample_system, stiffness_matrix,
    LabelledDataset, ModalModel, Population, PopulationConfig, SystemRealisation,
};
pub use regressor::{train, MlpParams, QualityForecast, TrainConfig, TrainedModel};
pub use similarity::{mac, mac_matrix, optimal_permutation, similarity_score, MacMatrix, SimilarityScore};
pub use taskgen::{
    build_transfer_dataset, enumerate_tasks, run_task, StructureBundle, TransferDataset, TransferRecord,
};
pub use transfer::{knn_predict, nca_align, normal_stats, prediction_quality, NormalStats, QualityVector};

/// Runs `f` on a rayon pool with `threads` workers (0 = rayon default).
pub(crate) fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
