use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use evitlab_core::{PopulationConfig, TrainConfig, UtilityTable};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSettings {
    /// Leading modes compared when scoring similarity.
    pub n_modes: usize,
}

impl Default for TaskSettings {
    fn default() -> Self {
        Self { n_modes: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecisionSettings {
    /// Number of target predictions the utilities are counted over.
    pub m_points: usize,
    /// Points of the evenly spaced similarity grid used for curves.
    pub grid_points: usize,
    pub threshold_tol: f64,
    pub utilities: UtilityTable,
    /// Dirichlet draws behind every credible band.
    pub forecast_samples: usize,
    pub simplex_resolution: usize,
    /// Similarity at which the pipeline draws its illustrative forecast.
    pub illustration_varsigma: f64,
    /// `U(T)` applied to every candidate source.
    pub transfer_cost: f64,
}

impl Default for DecisionSettings {
    fn default() -> Self {
        Self {
            m_points: 200,
            grid_points: 100,
            threshold_tol: 1e-6,
            utilities: UtilityTable::default(),
            forecast_samples: 4000,
            simplex_resolution: 40,
            illustration_varsigma: 0.85,
            transfer_cost: 0.0,
        }
    }
}

/// Everything a run needs. The master `seed` drives every stage: the
/// population uses it directly and training uses `seed + 1`, overriding any
/// seed given inside those sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub population: PopulationConfig,
    pub tasks: TaskSettings,
    pub training: TrainConfig,
    pub decision: DecisionSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("evitlab-out"),
            population: PopulationConfig::default(),
            tasks: TaskSettings::default(),
            training: TrainConfig::default(),
            decision: DecisionSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Applies the master seed to every seeded section.
    pub fn derive_seeds(&mut self) {
        self.population.seed = self.seed;
        self.training.seed = self.seed.wrapping_add(1);
    }

    pub fn forecast_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.population.validate()?;
        self.training.validate()?;
        if self.tasks.n_modes == 0 || self.tasks.n_modes > self.population.n_dof {
            bail!("tasks.n_modes must lie in 1..={}, got {}", self.population.n_dof, self.tasks.n_modes);
        }
        let d = &self.decision;
        if d.m_points == 0 {
            bail!("decision.m_points must be >= 1");
        }
        if d.grid_points < 2 {
            bail!("decision.grid_points must be >= 2");
        }
        if !(d.threshold_tol > 0.0 && d.threshold_tol < 0.5) {
            bail!("decision.threshold_tol must lie in (0, 0.5)");
        }
        if d.forecast_samples < 2 || d.simplex_resolution == 0 {
            bail!("decision.forecast_samples must be >= 2 and simplex_resolution >= 1");
        }
        if !(0.0..=1.0).contains(&d.illustration_varsigma) {
            bail!("decision.illustration_varsigma must lie in [0, 1]");
        }
        let u = d.utilities.as_array();
        if !d.transfer_cost.is_finite() || u.iter().any(|v| !v.is_finite()) {
            bail!("utilities and transfer_cost must be finite");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_toml_keeps_defaults() {
        let cfg: RunConfig =
            toml::from_str("seed = 4\n[population]\nn_structures = 3\n[decision.utilities]\nu_fn = -60.0\n").unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.population.n_structures, 3);
        assert_eq!(cfg.population.n_dof, 10);
        assert_eq!(cfg.decision.utilities.u_fn, -60.0);
        assert_eq!(cfg.decision.utilities.u_true, 5.0);
        assert_eq!(cfg.training.epochs, 1000);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[population]\nn_structure = 3\n").is_err());
    }

    #[test]
    fn seeds_follow_the_master_seed() {
        let mut cfg = RunConfig { seed: 9, ..Default::default() };
        cfg.population.seed = 123;
        cfg.derive_seeds();
        assert_eq!(cfg.population.seed, 9);
        assert_eq!(cfg.training.seed, 10);
    }

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        let bad = RunConfig { tasks: TaskSettings { n_modes: 11 }, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
