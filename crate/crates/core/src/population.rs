//! Populations of lumped-mass chains: sampling, damage, modal analysis and
//! labelled natural-frequency datasets.
//!
//! Each structure is a chain of `n_dof` masses. Spring `i` (1-based) joins
//! mass `i` to mass `i - 1`, with spring 1 tied to ground and the far end
//! free unless [`PopulationConfig::ground_both_ends`] is set. Extra ground
//! springs sit on the central masses and are never damaged.
//!
//! All randomness flows from `(seed, structure_id)` through an independent
//! ChaCha stream, so structures can be generated in any order or in
//! parallel and still come out bit-identical.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const POPULATION_SCHEMA: &str = "evitlab-pop-v1";

/// Health-state label: 0 is undamaged, `h > 0` means spring `h` is at half stiffness.
pub type Label = usize;

pub const UNDAMAGED: Label = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    pub n_structures: usize,
    pub n_dof: usize,
    pub mass: f64,
    pub stiffness_mean: f64,
    pub stiffness_std: f64,
    pub damping_shape: f64,
    pub damping_scale: f64,
    pub ground_stiffness_mean: f64,
    pub ground_stiffness_std: f64,
    pub n_undamaged_samples: usize,
    pub n_samples_per_damage: usize,
    /// Relative standard deviation of the multiplicative noise on each frequency.
    pub feature_noise_std: f64,
    /// Relative standard deviation of per-observation stiffness variation.
    /// Each data point re-draws every spring around the structure's nominal
    /// value before damage is applied; 0 disables it.
    pub observation_stiffness_cv: f64,
    /// Relative standard deviation of per-observation variation of the
    /// extra ground springs only (boundary-condition variability).
    pub observation_ground_cv: f64,
    /// Adds a spring from the last mass to ground (not part of the damage set).
    pub ground_both_ends: bool,
    pub seed: u64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            n_structures: 20,
            n_dof: 10,
            mass: 1.0,
            stiffness_mean: 1000.0,
            stiffness_std: 50.0,
            damping_shape: 2.0,
            damping_scale: 0.05,
            ground_stiffness_mean: 500.0,
            ground_stiffness_std: 50.0,
            n_undamaged_samples: 250,
            n_samples_per_damage: 25,
            feature_noise_std: 0.005,
            observation_stiffness_cv: 0.0,
            observation_ground_cv: 0.0,
            ground_both_ends: false,
            seed: 0,
        }
    }
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_structures == 0 || self.n_undamaged_samples == 0 || self.n_samples_per_damage == 0 {
            return fail("population counts must be strictly positive".into());
        }
        if self.n_dof < 5 {
            return fail(format!("n_dof must be at least 5 to have central masses, got {}", self.n_dof));
        }
        for (name, v) in [
            ("mass", self.mass),
            ("stiffness_mean", self.stiffness_mean),
            ("damping_shape", self.damping_shape),
            ("damping_scale", self.damping_scale),
            ("ground_stiffness_mean", self.ground_stiffness_mean),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        for (name, v) in [
            ("stiffness_std", self.stiffness_std),
            ("ground_stiffness_std", self.ground_stiffness_std),
            ("feature_noise_std", self.feature_noise_std),
            ("observation_stiffness_cv", self.observation_stiffness_cv),
            ("observation_ground_cv", self.observation_ground_cv),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return fail(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if self.n_undamaged_samples != self.n_samples_per_damage * self.n_dof {
            return fail(format!(
                "n_undamaged_samples ({}) must equal n_samples_per_damage x n_dof ({})",
                self.n_undamaged_samples,
                self.n_samples_per_damage * self.n_dof
            ));
        }
        Ok(())
    }

    /// 1-based indices of masses eligible for extra ground springs: all but
    /// the two masses at each end of the chain.
    pub fn central_masses(&self) -> std::ops::RangeInclusive<usize> {
        3..=self.n_dof - 2
    }

    pub fn dataset_len(&self) -> usize {
        self.n_undamaged_samples + self.n_dof * self.n_samples_per_damage
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundConnection {
    /// 1-based mass index.
    pub mass_index: usize,
    pub stiffness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemRealisation {
    pub id: usize,
    pub masses: Vec<f64>,
    /// `spring_stiffnesses[i - 1]` is spring `i`.
    pub spring_stiffnesses: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_spring: Option<f64>,
    pub damping_coeffs: Vec<f64>,
    pub ground_connections: Vec<GroundConnection>,
    pub health_state: Label,
}

impl SystemRealisation {
    pub fn n_dof(&self) -> usize {
        self.masses.len()
    }

    /// Chain with unit masses, the given springs and no extra grounds.
    pub fn chain(masses: Vec<f64>, spring_stiffnesses: Vec<f64>) -> Self {
        let n = masses.len();
        Self {
            id: 0,
            masses,
            spring_stiffnesses,
            end_spring: None,
            damping_coeffs: vec![0.0; n],
            ground_connections: Vec::new(),
            health_state: UNDAMAGED,
        }
    }
}

/// Independent random stream for one structure.
pub fn structure_rng(seed: u64, structure_id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(structure_id as u64);
    rng
}

fn positive_normal<R: Rng + ?Sized>(dist: &Normal<f64>, rng: &mut R) -> f64 {
    loop {
        let v = dist.sample(rng);
        if v > 0.0 {
            return v;
        }
    }
}

pub fn sample_system<R: Rng + ?Sized>(
    config: &PopulationConfig,
    structure_id: usize,
    rng: &mut R,
) -> Result<SystemRealisation> {
    config.validate()?;
    let n = config.n_dof;
    let stiffness =
        Normal::new(config.stiffness_mean, config.stiffness_std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let ground = Normal::new(config.ground_stiffness_mean, config.ground_stiffness_std)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let damping =
        Gamma::new(config.damping_shape, config.damping_scale).map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let spring_stiffnesses: Vec<f64> = (0..n).map(|_| positive_normal(&stiffness, rng)).collect();
    let end_spring = config.ground_both_ends.then(|| positive_normal(&stiffness, rng));
    let damping_coeffs: Vec<f64> = (0..n).map(|_| damping.sample(rng)).collect();

    let central: Vec<usize> = config.central_masses().collect();
    let max_connections = central.len().min(3);
    let count = rng.random_range(1..=max_connections);
    let mut chosen: Vec<usize> = index::sample(rng, central.len(), count).into_iter().map(|i| central[i]).collect();
    chosen.sort_unstable();
    let ground_connections = chosen
        .into_iter()
        .map(|mass_index| GroundConnection { mass_index, stiffness: positive_normal(&ground, rng) })
        .collect();

    Ok(SystemRealisation {
        id: structure_id,
        masses: vec![config.mass; n],
        spring_stiffnesses,
        end_spring,
        damping_coeffs,
        ground_connections,
        health_state: UNDAMAGED,
    })
}

/// Halves spring `spring_index` (1-based). Ground connections are untouched.
pub fn apply_damage(system: &SystemRealisation, spring_index: usize) -> Result<SystemRealisation> {
    let n = system.spring_stiffnesses.len();
    if spring_index == 0 || spring_index > n {
        return Err(Error::SpringIndexOutOfRange { index: spring_index, n_dof: n });
    }
    if system.health_state != UNDAMAGED {
        return Err(Error::AlreadyDamaged(system.health_state));
    }
    let mut damaged = system.clone();
    damaged.spring_stiffnesses[spring_index - 1] *= 0.5;
    damaged.health_state = spring_index;
    Ok(damaged)
}

pub fn stiffness_matrix(system: &SystemRealisation) -> DMatrix<f64> {
    let n = system.n_dof();
    let mut k = DMatrix::zeros(n, n);
    for (i, &ks) in system.spring_stiffnesses.iter().enumerate() {
        k[(i, i)] += ks;
        if i > 0 {
            k[(i - 1, i - 1)] += ks;
            k[(i - 1, i)] -= ks;
            k[(i, i - 1)] -= ks;
        }
    }
    if let Some(ke) = system.end_spring {
        k[(n - 1, n - 1)] += ke;
    }
    for g in &system.ground_connections {
        k[(g.mass_index - 1, g.mass_index - 1)] += g.stiffness;
    }
    k
}

/// Undamped modal model: ascending natural frequencies (rad/s) and unit-length
/// mode shapes stored column-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModalModelRepr", try_from = "ModalModelRepr")]
pub struct ModalModel {
    pub natural_frequencies: Vec<f64>,
    pub mode_shapes: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModalModelRepr {
    natural_frequencies: Vec<f64>,
    /// One inner array per mode.
    mode_shapes: Vec<Vec<f64>>,
}

impl From<ModalModel> for ModalModelRepr {
    fn from(m: ModalModel) -> Self {
        let mode_shapes = m.mode_shapes.column_iter().map(|c| c.iter().copied().collect()).collect();
        Self { natural_frequencies: m.natural_frequencies, mode_shapes }
    }
}

impl TryFrom<ModalModelRepr> for ModalModel {
    type Error = Error;

    fn try_from(r: ModalModelRepr) -> Result<Self> {
        let n_modes = r.mode_shapes.len();
        if n_modes == 0 {
            return Err(Error::Malformed("modal model has no mode shapes".into()));
        }
        let n_dof = r.mode_shapes[0].len();
        if r.mode_shapes.iter().any(|c| c.len() != n_dof) {
            return Err(Error::Malformed("mode shapes have unequal lengths".into()));
        }
        if r.natural_frequencies.len() != n_modes {
            return Err(Error::DimensionMismatch { expected: n_modes, actual: r.natural_frequencies.len() });
        }
        let mode_shapes = DMatrix::from_fn(n_dof, n_modes, |i, j| r.mode_shapes[j][i]);
        Ok(Self { natural_frequencies: r.natural_frequencies, mode_shapes })
    }
}

impl ModalModel {
    pub fn n_modes(&self) -> usize {
        self.mode_shapes.ncols()
    }
}

/// Flips `v` so that its largest-magnitude entry (first on ties) is positive.
fn fix_sign(v: &mut DVector<f64>) {
    let mut pivot = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[pivot].abs() {
            pivot = i;
        }
    }
    if v[pivot] < 0.0 {
        v.neg_mut();
    }
}

/// Solves `K φ = λ M φ` through the symmetric form `M^-1/2 K M^-1/2`.
/// Damping is ignored.
pub fn modal_analysis(system: &SystemRealisation) -> Result<ModalModel> {
    let n = system.n_dof();
    let k = stiffness_matrix(system);
    let inv_sqrt_m: Vec<f64> = system.masses.iter().map(|m| 1.0 / m.sqrt()).collect();
    let a = DMatrix::from_fn(n, n, |i, j| inv_sqrt_m[i] * k[(i, j)] * inv_sqrt_m[j]);
    let a = (&a + a.transpose()) * 0.5;

    let eig =
        a.try_symmetric_eigen(f64::EPSILON, 10_000).ok_or(Error::EigenNonConvergence { structure_id: system.id })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let mut natural_frequencies = Vec::with_capacity(n);
    let mut mode_shapes = DMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[src];
        if !(lambda > 0.0) {
            return Err(Error::EigenNonConvergence { structure_id: system.id });
        }
        natural_frequencies.push(lambda.sqrt());
        let mut phi = DVector::from_fn(n, |i, _| inv_sqrt_m[i] * eig.eigenvectors[(i, src)]);
        phi /= phi.norm();
        fix_sign(&mut phi);
        mode_shapes.set_column(col, &phi);
    }
    Ok(ModalModel { natural_frequencies, mode_shapes })
}

/// Natural-frequency observations with health-state labels. Rows are
/// ordered undamaged first, then damage states 1..n_dof.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
}

impl LabelledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Count per label, indexed by label.
    pub fn class_counts(&self) -> Vec<usize> {
        let n_classes = self.labels.iter().max().map_or(0, |&m| m + 1);
        let mut counts = vec![0; n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn rows_with_label(&self, label: Label) -> impl Iterator<Item = &[f64]> {
        self.features.iter().zip(&self.labels).filter(move |(_, &l)| l == label).map(|(row, _)| row.as_slice())
    }
}

pub fn generate_dataset<R: Rng + ?Sized>(
    system: &SystemRealisation,
    config: &PopulationConfig,
    rng: &mut R,
) -> Result<LabelledDataset> {
    if system.health_state != UNDAMAGED {
        return Err(Error::NotUndamaged);
    }
    let n_states = system.spring_stiffnesses.len();
    let mut features = Vec::with_capacity(config.dataset_len());
    let mut labels = Vec::with_capacity(config.dataset_len());

    let nominal = std::iter::once(Ok(system.clone()))
        .chain((1..=n_states).map(|h| apply_damage(system, h)))
        .map(|s| s.and_then(|s| modal_analysis(&s)).map(|m| m.natural_frequencies))
        .collect::<Result<Vec<_>>>()?;

    for label in 0..=n_states {
        let count = if label == UNDAMAGED { config.n_undamaged_samples } else { config.n_samples_per_damage };
        for _ in 0..count {
            let freqs = if config.observation_stiffness_cv > 0.0 || config.observation_ground_cv > 0.0 {
                let mut observed =
                    perturb_stiffness(system, config.observation_stiffness_cv, config.observation_ground_cv, rng);
                if label != UNDAMAGED {
                    observed = apply_damage(&observed, label)?;
                }
                modal_analysis(&observed)?.natural_frequencies
            } else {
                nominal[label].clone()
            };
            let row = freqs
                .iter()
                .map(|&f| {
                    let z: f64 = StandardNormal.sample(rng);
                    (f + f * config.feature_noise_std * z).max(f64::MIN_POSITIVE)
                })
                .collect();
            features.push(row);
            labels.push(label);
        }
    }
    Ok(LabelledDataset { features, labels })
}

/// Copy of `system` with each chain spring scaled by an independent positive
/// factor `1 + spring_cv * z` and each extra ground spring by `1 + ground_cv * z`.
fn perturb_stiffness<R: Rng + ?Sized>(
    system: &SystemRealisation,
    spring_cv: f64,
    ground_cv: f64,
    rng: &mut R,
) -> SystemRealisation {
    let mut s = system.clone();
    if spring_cv > 0.0 {
        let factor = Normal::new(1.0, spring_cv).expect("validated cv");
        for k in s.spring_stiffnesses.iter_mut().chain(s.end_spring.iter_mut()) {
            *k *= positive_normal(&factor, rng);
        }
    }
    if ground_cv > 0.0 {
        let factor = Normal::new(1.0, ground_cv).expect("validated cv");
        for g in &mut s.ground_connections {
            g.stiffness *= positive_normal(&factor, rng);
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Structure {
    pub system: SystemRealisation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<LabelledDataset>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub schema: String,
    pub config: PopulationConfig,
    pub structures: Vec<Structure>,
}

/// Samples structures `1..=n_structures` and their datasets. Output does not
/// depend on `parallelism`.
pub fn generate_population(config: &PopulationConfig, parallelism: usize) -> Result<Population> {
    config.validate()?;
    let build = |id: usize| -> Result<Structure> {
        let mut rng = structure_rng(config.seed, id);
        let system = sample_system(config, id, &mut rng)?;
        let dataset = generate_dataset(&system, config, &mut rng)?;
        Ok(Structure { system, dataset: Some(dataset) })
    };
    let ids: Vec<usize> = (1..=config.n_structures).collect();
    let structures = crate::with_pool(parallelism, || ids.par_iter().map(|&id| build(id)).collect::<Result<Vec<_>>>())?;
    Ok(Population { schema: POPULATION_SCHEMA.to_string(), config: config.clone(), structures })
}

impl Population {
    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_reader(reader)?;
        let found = value.get("schema").and_then(|s| s.as_str()).unwrap_or("").to_string();
        if found != POPULATION_SCHEMA {
            return Err(Error::Schema { expected: POPULATION_SCHEMA.into(), found });
        }
        let pop: Population = serde_json::from_value(value)?;
        pop.config.validate()?;
        for s in &pop.structures {
            if s.system.masses.len() != pop.config.n_dof || s.system.spring_stiffnesses.len() != pop.config.n_dof {
                return Err(Error::Malformed(format!("structure {} has wrong dimension", s.system.id)));
            }
        }
        Ok(pop)
    }

    pub fn structure(&self, id: usize) -> Option<&Structure> {
        self.structures.iter().find(|s| s.system.id == id)
    }
}
